"""Forecast links 12-18 from links 1-11 on held-out synthetic runs and compare
with the historical-average baseline.

    python3 scripts/forecast_experiment.py --seeds 0 1 2 3 4 --test 200
"""

import argparse

import numpy as np

from linkcorr.forecast import forecast_trip, historical_average, predictive_mean_operator, score
from linkcorr.gaussian import sample_gaussian
from linkcorr.gibbs import GibbsConfig, run_gibbs
from linkcorr.synthetic import benchmark_dataset

OBSERVED = list(range(11))
TARGET = list(range(11, 18))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--k1", type=int, default=10000)
    p.add_argument("--k2", type=int, default=5000)
    p.add_argument("--test", type=int, default=200)
    p.add_argument("--mode", choices=("mix", "plugin"), default="mix")
    args = p.parse_args()

    wins = 0
    for seed in args.seeds:
        ds = benchmark_dataset(seed)
        chain = run_gibbs(ds.observations, config=GibbsConfig(k1=args.k1, k2=args.k2, seed=seed))
        test = sample_gaussian(ds.truth, np.random.default_rng(10_000 + seed), size=args.test)
        a, B = predictive_mean_operator(chain, OBSERVED, TARGET, mode=args.mode)
        pred = a + test[:, OBSERVED] @ B.T
        ha = np.tile(historical_average(ds.complete, TARGET), (len(test), 1))
        bayes, base = score(test[:, TARGET], pred), score(test[:, TARGET], ha)
        wins += bayes.rmse < base.rmse
        # trip-level coverage of the 95% interval for the full 12-18 remainder
        trip = [forecast_trip(chain, OBSERVED, row[OBSERVED], TARGET, mode=args.mode) for row in test[:20]]
        covered = np.mean([t.quantile(0.025) <= row[TARGET].sum() <= t.quantile(0.975)
                           for t, row in zip(trip, test[:20])])
        print(f"seed {seed}: RMSE {bayes.rmse:.3f} vs HA {base.rmse:.3f}, "
              f"MAPE {bayes.mape:.4f} vs {base.mape:.4f}, trip 95% coverage (20 runs) {covered:.2f}",
              flush=True)
    print(f"Bayesian forecast beats HA on {wins}/{len(args.seeds)} seeds")


if __name__ == "__main__":
    main()
