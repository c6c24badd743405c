#!/usr/bin/env python3
"""The two scales of a teacher-forcing curriculum.

Training scale: how the TF ratio eps moves across epochs under the
different transition functions. Iteration scale: how a given eps turns
into per-step TF decisions (probabilistic vs deterministic vs sparse),
and what that implies for the gaps between teacher-forced steps.
"""
import os

import numpy as np

from chaoscast import curriculum as cur

OUT = os.path.join(os.path.dirname(__file__), "out")


def main():
    print("=== training scale: eps over epochs (length 1000) ===")
    configs = {
        "linear up": cur.CurriculumConfig("CL_ITF_P", "linear", 0.0, 1.0, 1000),
        "inv-sigmoid up": cur.CurriculumConfig("CL_ITF_P", "inverse_sigmoid",
                                               0.0, 1.0, 1000),
        "exponential up": cur.CurriculumConfig("CL_ITF_P", "exponential",
                                               0.0, 1.0, 1000),
        "linear down": cur.CurriculumConfig("CL_DTF_P", "linear", 1.0, 0.0, 1000),
    }
    epochs = [0, 100, 250, 500, 750, 1000, 1500]
    print("epoch:      " + "".join(f"{e:>8d}" for e in epochs))
    curves = {}
    for label, cfg in configs.items():
        eps = [cur.eval_epsilon(cfg, e) for e in epochs]
        curves[label] = cfg
        print(f"{label:12s}" + "".join(f"{v:8.3f}" for v in eps))

    print("\n=== iteration scale: decisions for eps=0.3, m=20 ===")
    rng = np.random.default_rng(0)
    prob = cur.build_mask(cur.CurriculumConfig("CL_ITF_P", "linear", 0, 1),
                          0.3, 20, rng)
    det = cur.build_mask(cur.CurriculumConfig("CL_ITF_D", "linear", 0, 1),
                         0.3, 20)
    stf = cur.build_mask(cur.CurriculumConfig("STF", stf_tau=4), 0.3, 20)
    fmt = lambda m: "".join("T" if d else "." for d in m.decisions)
    print(f"probabilistic  {fmt(prob)}   (fresh draw every sequence)")
    print(f"deterministic  {fmt(det)}   (TF while eps >= j/m)")
    print(f"sparse tau=4   {fmt(stf)}   (period from ln2/(LLE*dt))")

    print("\n=== gap between TF steps under the probabilistic rule ===")
    for eps in (0.2, 0.5):
        draws = np.random.default_rng(1).random(10 ** 6) < eps
        gaps = np.diff(np.nonzero(draws)[0])
        print(f"eps={eps}: mean gap {gaps.mean():.2f} (theory {1 / eps:.2f}), "
              f"variance {gaps.var():.2f} "
              f"(geometric law gives {(1 - eps) / eps ** 2:.2f})")

    print("\n=== chance of a sequence containing any TF step ===")
    for eps in (0.001, 0.01, 0.1):
        p = cur.prob_at_least_one_tf(eps, 200)
        print(f"eps={eps:<6} m=200 -> p = {p:.5f}")

    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("\nmatplotlib not installed; skipping curve plot")
        return
    os.makedirs(OUT, exist_ok=True)
    xs = np.arange(0, 1600)
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, cfg in curves.items():
        ax.plot(xs, [cur.eval_epsilon(cfg, int(i)) for i in xs], label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("TF ratio eps")
    ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(OUT, "curricula.png"), dpi=120)
    print(f"\ncurve plot written to {OUT}/curricula.png")


if __name__ == "__main__":
    main()
