"""Branching-ratio estimation on Hawkes data with a power-law kernel, fitted with both kernel families.

    python scripts/hawkes_misspecification.py --t-max 20000
"""

import argparse

from critlab.rng import RngStream
from critlab.volfeedback import FeedbackKernel, estimate_branching_ratio, simulate_hawkes


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--g", type=float, default=0.9)
    ap.add_argument("--theta", type=float, default=0.5)
    ap.add_argument("--tau-max", type=float, default=100.0)
    ap.add_argument("--lambda0", type=float, default=0.2)
    ap.add_argument("--t-max", type=float, default=20_000.0)
    ap.add_argument("--seed", type=int, default=12)
    a = ap.parse_args()

    true = FeedbackKernel("power-law", a.g, theta=a.theta, tau_max=a.tau_max)
    ev = simulate_hawkes(a.lambda0, true, a.t_max, RngStream(a.seed))
    rate, se = ev.rate()
    print(f"{len(ev)} events, rate {rate:.3f} +- {se:.3f} (theory {a.lambda0 / (1 - a.g):.3f})")
    for family in ("exponential", "power-law"):
        fit = estimate_branching_ratio(ev, family, tau_max=a.tau_max if family == "power-law" else None)
        print(f"{family:>12}: g_hat {fit.g:.3f}  lambda0 {fit.lambda0:.3f}  params {fit.params}  "
              f"loglik {fit.loglik:.1f}  AIC {fit.aic:.1f}")


if __name__ == "__main__":
    main()
