"""In-out-stop event records to per-period link travel-time observations.

Link times are arrival-to-arrival differences, so each one includes the
dwell at its upstream stop. Departure events are parsed but not used.
"""

from __future__ import annotations

import csv
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime, time
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .observation import AlignmentError, Observation, RouteGeometry, RoutePattern, validate

REQUIRED_COLUMNS = ("ID", "OBUID", "TRIP_ID", "ROUTE_ID", "ROUTESUB_ID", "ROUTE_STA_ID",
                    "AD_FLAG", "AD_TIME")
OPTIONAL_COLUMNS = ("ROUTE_NAME", "STOP_NAME")

_TIME_FORMATS = ("%Y%m%d, %H:%M:%S", "%Y%m%d %H:%M:%S", "%Y%m%d,%H:%M:%S",
                 "%Y-%m-%d %H:%M:%S", "%Y/%m/%d %H:%M:%S")


@dataclass(frozen=True)
class StopEvent:
    record_id: str
    bus_id: str
    trip_id: str
    route_id: str
    direction_id: str
    stop_id: str
    ad_flag: int        # 1 arrival, 0 departure
    ad_time: datetime
    route_name: str = ""
    stop_name: str = ""

    @property
    def is_arrival(self) -> bool:
        return self.ad_flag == 1


@dataclass(frozen=True)
class Reject:
    line: int
    reason: str


def parse_timestamp(text: str) -> datetime:
    text = text.strip()
    for fmt in _TIME_FORMATS:
        try:
            return datetime.strptime(text, fmt)
        except ValueError:
            pass
    return datetime.fromisoformat(text)


def parse_events(path: str | Path, rejects: list[Reject] | None = None) -> list[StopEvent]:
    """Read an event CSV; malformed rows go to ``rejects`` instead of raising.

    Column names are matched case-insensitively. Events come back sorted by
    ``(trip_id, ad_time)``.
    """
    rejects = rejects if rejects is not None else []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: file is empty (no header)")
        cols = {name.strip().upper(): k for k, name in enumerate(header)}
        missing = [c for c in REQUIRED_COLUMNS if c not in cols]
        if missing:
            raise ValueError(f"{path}: missing required columns {missing}")
        events = []
        for lineno, row in enumerate(reader, start=2):
            if not any(cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                rejects.append(Reject(lineno, "too few fields"))
                continue
            get = lambda c: row[cols[c]].strip() if c in cols else ""
            ids = {c: get(c) for c in ("ID", "OBUID", "TRIP_ID", "ROUTE_ID", "ROUTESUB_ID", "ROUTE_STA_ID")}
            empty = [c for c, v in ids.items() if not v]
            if empty:
                rejects.append(Reject(lineno, f"empty identifier {empty[0]}"))
                continue
            flag = get("AD_FLAG")
            if flag not in ("0", "1"):
                rejects.append(Reject(lineno, "invalid ad_flag"))
                continue
            try:
                ts = parse_timestamp(get("AD_TIME"))
            except ValueError:
                rejects.append(Reject(lineno, "invalid ad_time"))
                continue
            events.append(StopEvent(ids["ID"], ids["OBUID"], ids["TRIP_ID"], ids["ROUTE_ID"],
                                    ids["ROUTESUB_ID"], ids["ROUTE_STA_ID"], int(flag), ts,
                                    get("ROUTE_NAME"), get("STOP_NAME")))
    events.sort(key=lambda e: (e.trip_id, e.ad_time, e.record_id))
    return events


# -- periods ---------------------------------------------------------------

def _parse_clock(text: str) -> time:
    return time.fromisoformat(text)


@dataclass(frozen=True)
class PeriodSpec:
    """Named time-of-day intervals ``[start, end)``; ``end <= start`` wraps past midnight."""

    intervals: tuple[tuple[str, time, time], ...] = (
        ("morning", time(7), time(10)),
        ("normal", time(10), time(17)),
        ("afternoon", time(17), time(20)),
        ("night", time(20), time(7)),
    )

    def __post_init__(self):
        names = [name for name, _, _ in self.intervals]
        if len(set(names)) != len(names):
            raise ValueError("period names must be unique")
        # a partition of the day means every second is claimed exactly once;
        # checking the interval endpoints and midpoints between them is enough
        cuts = sorted({_secs(t) for _, a, b in self.intervals for t in (a, b)})
        probes = [(a + b) / 2 for a, b in zip(cuts, cuts[1:] + [cuts[0] + 86400])]
        for p in probes:
            owners = [name for name, a, b in self.intervals if _inside(p % 86400, _secs(a), _secs(b))]
            if len(owners) != 1:
                raise ValueError(f"periods do not partition the day near {p % 86400:.0f}s: {owners}")

    @property
    def names(self) -> list[str]:
        return [name for name, _, _ in self.intervals]

    def period_of(self, when: datetime | time) -> str:
        t = when.time() if isinstance(when, datetime) else when
        s = _secs(t) + t.microsecond / 1e6
        for name, a, b in self.intervals:
            if _inside(s, _secs(a), _secs(b)):
                return name
        raise AssertionError("unreachable: periods partition the day")

    def to_dict(self) -> dict:
        return {name: [a.isoformat("minutes"), b.isoformat("minutes")] for name, a, b in self.intervals}

    @classmethod
    def from_dict(cls, d: dict) -> "PeriodSpec":
        return cls(tuple((str(k), _parse_clock(v[0]), _parse_clock(v[1])) for k, v in d.items()))


def _secs(t: time) -> int:
    return t.hour * 3600 + t.minute * 60 + t.second


def _inside(s: float, a: int, b: int) -> bool:
    if a < b:
        return a <= s < b
    return s >= a or s < b


# -- geometry --------------------------------------------------------------

@dataclass
class StopGeometry:
    """Per route, the ordered stops and the target links each stop pair spans.

    ``segments[k]`` is ``None`` when the pair ``(stops[k], stops[k + 1])``
    runs off the target route, else an inclusive ``(lo, hi)`` range of
    0-based target links (``lo < hi`` when the route passes target stops
    without serving them).
    """

    n_links: int
    stops: dict[str, list[str]]
    segments: dict[str, list[tuple[int, int] | None]]

    def __post_init__(self):
        for route, stops in self.stops.items():
            segs = self.segments.get(route)
            if segs is None or len(segs) != len(stops) - 1:
                raise AlignmentError(f"route {route!r}: need one link entry per consecutive stop pair")
            if len(set(stops)) != len(stops):
                raise AlignmentError(f"route {route!r}: repeated stop ids")
            prev = -1
            for seg in segs:
                if seg is None:
                    continue
                lo, hi = seg
                if not (0 <= lo <= hi < self.n_links):
                    raise AlignmentError(f"route {route!r}: link range {seg} outside 0..{self.n_links - 1}")
                if lo <= prev:
                    raise AlignmentError(f"route {route!r}: link ranges must increase along the route")
                prev = hi

    def route_key(self, event: StopEvent) -> str | None:
        for key in (f"{event.route_id}:{event.direction_id}", event.route_id):
            if key in self.stops:
                return key
        return None

    def to_route_geometry(self) -> RouteGeometry:
        patterns = {}
        for route, segs in self.segments.items():
            covered, skips = [], set()
            for seg in segs:
                if seg is None:
                    continue
                lo, hi = seg
                skips.update(range(lo + 1, hi + 1))
                if covered and covered[-1][1] == lo - 1:
                    covered[-1] = (covered[-1][0], hi)
                else:
                    covered.append((lo, hi))
            patterns[route] = RoutePattern(tuple(covered), frozenset(skips))
        return RouteGeometry([str(j) for j in range(self.n_links)], patterns)

    @classmethod
    def from_dict(cls, d: dict) -> "StopGeometry":
        n = int(d["n_links"])
        stops, segments = {}, {}
        for route, spec in d["routes"].items():
            stops[str(route)] = [str(s) for s in spec["stops"]]
            segs = []
            for entry in spec["links"]:
                if entry is None:
                    segs.append(None)
                elif isinstance(entry, (list, tuple)):
                    segs.append((int(entry[0]), int(entry[1])))
                else:
                    segs.append((int(entry), int(entry)))
            segments[str(route)] = segs
        return cls(n, stops, segments)


def load_geometry(path: str | Path) -> StopGeometry:
    return StopGeometry.from_dict(json.loads(Path(path).read_text()))


# -- events to observations ------------------------------------------------

@dataclass
class IngestReport:
    trips: int = 0
    kept: int = 0
    dropped: Counter = field(default_factory=Counter)
    per_period: Counter = field(default_factory=Counter)

    def to_dict(self) -> dict:
        return {"trips": self.trips, "kept": self.kept, "dropped": dict(self.dropped),
                "per_period": dict(self.per_period)}


class _Drop(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def _trip_observation(trip: list[StopEvent], geometry: StopGeometry, route: str,
                      max_ragged_span: int, period_key: str) -> tuple[Observation, datetime]:
    stops = geometry.stops[route]
    segs = geometry.segments[route]
    position = {s: k for k, s in enumerate(stops)}
    arrivals: dict[int, datetime] = {}
    for e in trip:
        if not e.is_arrival:
            continue
        if e.stop_id not in position:
            raise AlignmentError(f"trip {e.trip_id}: stop {e.stop_id!r} is not on route {route!r}")
        arrivals.setdefault(position[e.stop_id], e.ad_time)
    if len(arrivals) < 2:
        raise _Drop("too_few_arrivals")
    order = sorted(arrivals)
    times = [arrivals[p] for p in order]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise _Drop("non-monotone")

    values, rows, entry = [], [], None
    for (pa, ta), (pb, tb) in zip(zip(order, times), zip(order[1:], times[1:])):
        span = segs[pa:pb]
        if any(s is None for s in span):
            continue   # part of the way is off the target route
        links = list(range(span[0][0], span[-1][1] + 1))
        if sum(hi - lo + 1 for lo, hi in span) != len(links):
            continue   # the stop pairs skip target links in between
        if len(links) > max_ragged_span:
            raise _Drop("ragged_span")
        values.append((tb - ta).total_seconds())
        rows.append(tuple(links))
        entry = entry or ta
    if not rows:
        raise _Drop("no_coverage")
    obs = Observation(np.array(values), tuple(rows), geometry.n_links, route_id=route,
                      bus_id=trip[0].bus_id, start_time=entry if period_key == "first_link" else times[0])
    problems = validate(obs)
    if problems:
        raise AlignmentError(f"trip {trip[0].trip_id}: {problems[0]}")
    return obs, obs.start_time


def events_to_observations(events: Iterable[StopEvent], geometry: StopGeometry,
                           periods: PeriodSpec | None = None, max_ragged_span: int = 3,
                           period_key: str = "first_link") -> tuple[dict[str, list[Observation]], IngestReport]:
    """Build one observation per trip and bin the trips by period.

    ``period_key`` is ``"first_link"`` (time the trip enters its first
    recorded target link) or ``"trip_start"`` (first arrival of the trip).
    Trips are dropped, and counted in the report, when timestamps are not
    increasing along the route, when a ragged row spans more than
    ``max_ragged_span`` links, or when nothing on the target route is
    recorded. Stops missing from a route's stop list raise.
    """
    if period_key not in ("first_link", "trip_start"):
        raise ValueError(f"unknown period_key {period_key!r}")
    if max_ragged_span < 1:
        raise ValueError("max_ragged_span must be at least 1")
    periods = periods or PeriodSpec()
    trips: dict[str, list[StopEvent]] = defaultdict(list)
    for e in events:
        trips[e.trip_id].append(e)
    report = IngestReport(trips=len(trips))
    binned: dict[str, list[tuple[str, Observation]]] = {name: [] for name in periods.names}
    for trip_id in sorted(trips):
        trip = sorted(trips[trip_id], key=lambda e: (e.ad_time, e.record_id))
        route = geometry.route_key(trip[0])
        if route is None:
            report.dropped["unknown_route"] += 1
            continue
        try:
            obs, when = _trip_observation(trip, geometry, route, max_ragged_span, period_key)
        except _Drop as d:
            report.dropped[d.reason] += 1
            continue
        name = periods.period_of(when)
        binned[name].append((trip_id, obs))
        report.kept += 1
        report.per_period[name] += 1
    return {name: [o for _, o in items] for name, items in binned.items()}, report


def write_events(events: Sequence[StopEvent], path: str | Path) -> None:
    """Inverse of :func:`parse_events` (handy for fixtures and round trips)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ID", "OBUID", "TRIP_ID", "ROUTE_ID", "ROUTE_NAME", "ROUTESUB_ID",
                    "ROUTE_STA_ID", "STOP_NAME", "AD_FLAG", "AD_TIME"])
        for e in events:
            w.writerow([e.record_id, e.bus_id, e.trip_id, e.route_id, e.route_name, e.direction_id,
                        e.stop_id, e.stop_name, e.ad_flag, e.ad_time.strftime("%Y%m%d, %H:%M:%S")])
