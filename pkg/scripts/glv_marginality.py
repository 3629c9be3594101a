"""Random Lotka-Volterra communities: the slowest mode kappa* softens as diversity grows.

    python scripts/glv_marginality.py --seeds 20
"""

import argparse

import numpy as np

from critlab.glv import integrate_glv, perturb_fitness, random_ecology, stability_report
from critlab.rng import RngStream


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="25,50,100,200")
    ap.add_argument("--sigma-a", type=float, default=0.5)
    ap.add_argument("--seeds", type=int, default=20)
    a = ap.parse_args()

    print(f"{'n':>5} {'survivors':>10} {'kappa*':>10} {'lambda*':>10} {'|response|':>11}")
    for n in map(int, a.sizes.split(",")):
        kap, lam, surv, resp = [], [], [], []
        for s in range(a.seeds):
            eco = random_ecology(n, a.sigma_a, RngStream(n, s))
            st = integrate_glv(eco, np.ones(n), 0.01, 2000.0)
            rep = stability_report(eco, st)
            kap.append(rep.kappa_star)
            lam.append(rep.lambda_star)
            surv.append(len(st.survivors))
            r = perturb_fitness(eco, st, int(st.survivors[0]), 1e-4)
            resp.append(np.linalg.norm(r.response))
        print(f"{n:5d} {np.median(surv):10.1f} {np.median(kap):10.4f} {np.median(lam):10.2f} {np.median(resp):11.2f}")


if __name__ == "__main__":
    main()
