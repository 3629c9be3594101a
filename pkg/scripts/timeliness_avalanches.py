"""Delay propagation on task networks: critical buffer and delay episodes around it.

    python scripts/timeliness_avalanches.py --n 500
"""

import argparse

import numpy as np

from critlab.analysis import fit_power_law
from critlab.rng import RngStream
from critlab.timeliness import (DelayNoise, delay_avalanches, find_critical_buffer, max_plus_growth_rate,
                                random_regular)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--steps", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=3)
    a = ap.parse_args()

    noise = DelayNoise()
    for k in (1, 2, 3, 4):
        net = random_regular(a.n, k, RngStream(a.seed, k))
        lam = max_plus_growth_rate(net, noise, a.steps, RngStream(a.seed + 1))
        bc = find_critical_buffer(net, noise, (0.5, 6.0), RngStream(a.seed + 1), n_steps=a.steps)
        print(f"k={k}: B_c {bc:.3f}  (zero-buffer growth rate {lam:.3f})")

    net = random_regular(a.n, 3, RngStream(a.seed, 3))
    print(f"\n{'B':>5} {'episodes':>9} {'max size':>10} {'exponent':>9} {'verdict':>12}")
    for B in (2.8, 3.0, 3.2, 4.0, 6.0, 10.0):
        es = delay_avalanches(net, B, noise, a.steps, RngStream(a.seed + 2))
        s = es.sizes
        fit = fit_power_law(s)
        print(f"{B:5.1f} {len(s):9d} {s.max() if len(s) else 0:10.1f} {fit.exponent:9.3f} {fit.verdict:>12}")


if __name__ == "__main__":
    main()
