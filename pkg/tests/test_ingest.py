from datetime import datetime, time, timedelta

import numpy as np
import pytest
from hypothesis import given, strategies as st

from linkcorr.ingest import (PeriodSpec, Reject, StopEvent, StopGeometry, events_to_observations,
                             parse_events, parse_timestamp, write_events)
from linkcorr.observation import AlignmentError, alignment_rows, validate

HEADER = "ID,OBUID,TRIP_ID,ROUTE_ID,ROUTE_NAME,ROUTESUB_ID,ROUTE_STA_ID,STOP_NAME,AD_FLAG,AD_TIME\n"


def test_example_row_with_comma_timestamp(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text(HEADER + '1612020547101390,911721,1612012250030880,201,No. 24,502669,84279,'
                             'Dunhe Stop,1,"20161202, 05:47:08"\n')
    events = parse_events(path)
    assert len(events) == 1
    e = events[0]
    assert (e.bus_id, e.route_id, e.direction_id, e.stop_id) == ("911721", "201", "502669", "84279")
    assert e.is_arrival
    assert e.ad_time == datetime(2016, 12, 2, 5, 47, 8)


@pytest.mark.parametrize("text", ["20161202, 05:47:08", "20161202 05:47:08",
                                  "2016-12-02 05:47:08", "2016-12-02T05:47:08"])
def test_timestamp_formats(text):
    assert parse_timestamp(text) == datetime(2016, 12, 2, 5, 47, 8)


def test_empty_file_with_header(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text(HEADER)
    assert parse_events(path) == []


def test_header_is_case_insensitive(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text(HEADER.lower() + '1,2,3,4,,5,6,,0,2016-12-02 05:47:08\n')
    assert len(parse_events(path)) == 1


def test_bad_rows_are_rejected_not_fatal(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text(HEADER
                    + '1,2,3,4,,5,6,,2,2016-12-02 05:47:08\n'
                    + '1,2,3,4,,5,6,,1,yesterday\n'
                    + ',2,3,4,,5,6,,1,2016-12-02 05:47:08\n'
                    + '1,2,3,4,,5,6,,1,2016-12-02 05:47:08\n')
    rejects: list[Reject] = []
    events = parse_events(path, rejects)
    assert len(events) == 1
    assert [r.reason for r in rejects] == ["invalid ad_flag", "invalid ad_time", "empty identifier ID"]
    assert [r.line for r in rejects] == [2, 3, 4]


def test_missing_columns(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("ID,OBUID\n1,2\n")
    with pytest.raises(ValueError, match="missing required columns"):
        parse_events(path)


# -- events to observations --------------------------------------------------

GEOMETRY = {
    "n_links": 4,
    "routes": {
        "60": {"stops": ["A", "B", "C", "D", "E"], "links": [0, 1, 2, 3]},
        "24": {"stops": ["X", "A", "B", "D"], "links": [None, 0, [1, 2]]},
    },
}


def _trip(trip_id, route, stops, start, gaps, bus="b1", direction="d"):
    t, out = start, []
    for k, stop in enumerate(stops):
        out.append(StopEvent(f"{trip_id}-{k}a", bus, trip_id, route, direction, stop, 1, t))
        out.append(StopEvent(f"{trip_id}-{k}d", bus, trip_id, route, direction, stop, 0, t + timedelta(seconds=20)))
        if k < len(gaps):
            t = t + timedelta(seconds=gaps[k])
    return out


@pytest.fixture
def geometry():
    return StopGeometry.from_dict(GEOMETRY)


def test_complete_trip_gives_identity(geometry):
    ev = _trip("t1", "60", "ABCDE", datetime(2016, 12, 2, 8, 0), [60, 70, 80, 90])
    by_period, report = events_to_observations(ev, geometry)
    (obs,) = by_period["morning"]
    assert obs.is_complete
    assert np.array_equal(obs.recording, [60, 70, 80, 90])
    assert report.kept == 1


def test_missing_interior_stop_gives_ragged_row(geometry):
    ev = _trip("t1", "60", "ABDE", datetime(2016, 12, 2, 8, 0), [60, 210, 60])
    (obs,) = events_to_observations(ev, geometry)[0]["morning"]
    assert obs.rows == ((0,), (1, 2), (3,))
    assert np.array_equal(obs.recording, [60, 210, 60])
    assert validate(obs) == []


def test_partial_route_and_structural_skip(geometry):
    ev = _trip("t2", "24", "XABD", datetime(2016, 12, 2, 12, 0), [300, 50, 120])
    (obs,) = events_to_observations(ev, geometry)[0]["normal"]
    assert obs.rows == ((0,), (1, 2))
    assert np.array_equal(obs.recording, [50, 120])
    # the time it enters the first target link keys the period
    assert obs.start_time == datetime(2016, 12, 2, 12, 5)
    rg = geometry.to_route_geometry()
    assert alignment_rows(rg, "24") == obs.rows


def test_non_monotone_trip_dropped(geometry):
    ev = _trip("t3", "60", "ABCDE", datetime(2016, 12, 2, 8, 0), [60, -10, 80, 90])
    by_period, report = events_to_observations(ev, geometry)
    assert sum(len(v) for v in by_period.values()) == 0
    assert report.dropped["non-monotone"] == 1


def test_long_ragged_span_dropped(geometry):
    ev = _trip("t4", "60", "AE", datetime(2016, 12, 2, 8, 0), [300])
    _, report = events_to_observations(ev, geometry, max_ragged_span=3)
    assert report.dropped["ragged_span"] == 1
    by_period, report = events_to_observations(ev, geometry, max_ragged_span=4)
    assert by_period["morning"][0].rows == ((0, 1, 2, 3),)


def test_unknown_stop_is_an_error(geometry):
    ev = _trip("t5", "60", "ABZ", datetime(2016, 12, 2, 8, 0), [60, 60])
    with pytest.raises(AlignmentError, match="stop 'Z'"):
        events_to_observations(ev, geometry)


def test_unknown_route_is_counted(geometry):
    ev = _trip("t6", "999", "AB", datetime(2016, 12, 2, 8, 0), [60])
    _, report = events_to_observations(ev, geometry)
    assert report.dropped["unknown_route"] == 1


def test_period_key_trip_start(geometry):
    ev = _trip("t7", "24", "XAB", datetime(2016, 12, 2, 9, 58), [300, 50])
    assert len(events_to_observations(ev, geometry)[0]["normal"]) == 1
    assert len(events_to_observations(ev, geometry, period_key="trip_start")[0]["morning"]) == 1


def test_night_wraps_midnight(geometry):
    late = _trip("a", "60", "ABCDE", datetime(2016, 12, 2, 23, 58), [60, 60, 60, 60])
    early = _trip("b", "60", "ABCDE", datetime(2016, 12, 3, 2, 0), [60, 60, 60, 60])
    by_period, _ = events_to_observations(late + early, geometry)
    assert len(by_period["night"]) == 2


def test_output_is_sorted_by_trip(geometry):
    ev = (_trip("z", "60", "ABCDE", datetime(2016, 12, 2, 8, 0), [1, 2, 3, 4], bus="bz")
          + _trip("a", "60", "ABCDE", datetime(2016, 12, 2, 9, 0), [1, 2, 3, 4], bus="ba"))
    obs = events_to_observations(ev, geometry)[0]["morning"]
    assert [o.bus_id for o in obs] == ["ba", "bz"]


def test_csv_round_trip_feeds_pipeline(tmp_path, geometry):
    ev = _trip("t1", "60", "ABCDE", datetime(2016, 12, 2, 17, 30), [60, 70, 80, 90])
    write_events(ev, tmp_path / "e.csv")
    back = parse_events(tmp_path / "e.csv")
    assert len(back) == len(ev)
    assert len(events_to_observations(back, geometry)[0]["afternoon"]) == 1


def test_geometry_validation():
    with pytest.raises(AlignmentError):
        StopGeometry.from_dict({"n_links": 2, "routes": {"r": {"stops": ["a", "b"], "links": []}}})
    with pytest.raises(AlignmentError):
        StopGeometry.from_dict({"n_links": 2, "routes": {"r": {"stops": ["a", "b", "c"], "links": [1, 0]}}})


# -- periods ------------------------------------------------------------------

@given(st.times())
def test_every_time_has_exactly_one_period(t):
    spec = PeriodSpec()
    name = spec.period_of(t)
    assert name in spec.names


def test_default_period_boundaries():
    spec = PeriodSpec()
    assert spec.period_of(time(7, 0)) == "morning"
    assert spec.period_of(time(6, 59, 59)) == "night"
    assert spec.period_of(time(10, 0)) == "normal"
    assert spec.period_of(time(17, 0)) == "afternoon"
    assert spec.period_of(time(20, 0)) == "night"
    assert spec.period_of(time(0, 0)) == "night"


def test_periods_must_partition_the_day():
    with pytest.raises(ValueError):
        PeriodSpec((("a", time(0), time(12)),))
    with pytest.raises(ValueError):
        PeriodSpec((("a", time(0), time(13)), ("b", time(12), time(0))))
    spec = PeriodSpec.from_dict({"day": ["06:00", "18:00"], "dark": ["18:00", "06:00"]})
    assert spec.period_of(time(3)) == "dark"
    assert PeriodSpec.from_dict(spec.to_dict()) == spec
