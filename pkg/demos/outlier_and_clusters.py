"""How the robust models react to an outlying study.

A homogeneous set of 12 studies gets one study with a log odds ratio of 3.
The common-mean mixture flags it, the normal-t model thickens its tails,
and the DP model gives it a cluster of its own.

    python3 demos/outlier_and_clusters.py
"""

import math

import numpy as np

from metaflex import ArmData, MetaDataset, fit_model
from metaflex.core import compute_effects


def build():
    rng = np.random.default_rng(3)
    studies = []
    for i in range(12):
        theta = 3.0 if i == 5 else rng.normal(0.3, 0.15)
        m = int(rng.integers(300, 600))
        rho = 0.3
        p_t = 1 / (1 + math.exp(-(math.log(rho / (1 - rho)) + theta)))
        studies.append(ArmData(f"study-{i + 1:02d}", int(rng.binomial(m, p_t)), m,
                               int(rng.binomial(m, rho)), m))
    return MetaDataset(tuple(studies))


def main():
    d = build()
    for r in compute_effects(d):
        print(f"{r.study_id}  log OR {r.y:+.2f}  (var {r.v:.3f})")
    print()
    for mid in ("normal-normal(REML)", "normal-common-mean-mixture", "normal-t",
                "binomial-DP-26(HN/Unif)"):
        f = fit_model(mid, d, rng=1)
        print(f"{mid:28s} mu {f.mu:+.3f}  tau2 {f.tau2:.3f}")
        if "outlier_prob" in f.extras:
            p = np.asarray(f.extras["outlier_prob"])
            print(f"{'':28s} outlier probability of study-06: {p[5]:.3f} (others <= {np.delete(p, 5).max():.3f})")
        if "nu" in f.extras:
            print(f"{'':28s} degrees of freedom {f.extras['nu']:.2f}")
        if "clusters" in f.extras:
            c = f.extras["clusters"]
            print(f"{'':28s} clusters {c['modal_cluster']}")
            print(f"{'':28s} cluster of study-06 held with probability {c['assignment_prob'][5]:.2f}")


if __name__ == "__main__":
    main()
