"""Asymptotic variance estimates and the tail-scaling table for OU with g = tanh; writes CSV."""
import argparse
import csv
import sys

import numpy as np

from subgeo.estimators import mdp_tail_scaling, mdp_variance
from subgeo.models import builtin_model
from subgeo.rates import linear_phi
from subgeo.simulate import SimConfig


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--replicas", type=int, default=32)
    ap.add_argument("--horizon", type=float, default=2020.0)
    ap.add_argument("--a", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=3)
    a = ap.parse_args(argv)
    ou = builtin_model("ou_geometric")
    v = mdp_variance(ou, np.tanh, SimConfig(dt=0.01, horizon=a.horizon, n_paths=a.replicas, seed=a.seed,
                                            chunk_size=a.replicas))
    s2 = 0.5 * (v.batch_means + v.autocov)
    print(f"# batch means {v.batch_means:.5f} (SE {v.batch_means_se:.5f}), "
          f"autocov {v.autocov:.5f} (SE {v.autocov_se:.5f}), target column {-a.a ** 2 / (2 * s2):.5f}")
    rows = mdp_tail_scaling(ou, np.tanh, [1e-2, 1e-3, 1e-4], lambda e: e ** -0.25, a.a,
                            SimConfig(dt=0.01, horizon=1.0, n_paths=512, seed=a.seed + 1), sigma2=s2,
                            phi=linear_phi(), simulate_process=False)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["eps", "h", "gaussian_column", "gaussian_exact", "speed_column"])
    for r in rows:
        w.writerow([repr(r.eps), repr(r.h), repr(r.gaussian_column), repr(r.gaussian_exact), repr(r.speed_column)])


if __name__ == "__main__":
    main()
