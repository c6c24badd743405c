"""Acceptance gate: every release criterion with its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS/FAIL
line per criterion. The desk-scale training criteria (6 and 7) share one
set of nine runs and dominate the runtime (tens of minutes on one CPU
core); everything else finishes in about two minutes.
"""
import math
import sys
import time

import numpy as np
import pytest

from chaoscast import curriculum as cur
from chaoscast import dataio, dynsys, metrics, nn, trainer

from conftest import finite_difference_grad, max_rel_error, make_wave_dataset


def report(criterion: str, ok: bool, detail: str = ""):
    status = "PASS" if ok else "FAIL"
    print(f"[ACCEPTANCE] {criterion}: {status}  {detail}", file=sys.stderr,
          flush=True)
    assert ok, f"{criterion} failed: {detail}"


# ---------------------------------------------------------------------------
# 1. gradient-check suite

def test_criterion_1_gradient_suite():
    t0 = time.time()
    d, hidden, n, m, batch = 3, 8, 5, 4, 2
    rng = np.random.default_rng(2024)
    js = np.arange(2, m + 1)
    patterns = {
        "all-TF": np.ones((batch, m - 1), dtype=bool),
        "all-FR": np.zeros((batch, m - 1), dtype=bool),
        "alternating": np.tile(np.arange(m - 1) % 2 == 0, (batch, 1)),
        "STF tau=2": np.tile(js % 2 == 0, (batch, 1)),
    }
    worst = 0.0
    for kind in ("gru", "rnn", "lstm"):
        params = nn.init_params(kind, d, hidden, seed=7)
        inputs = rng.standard_normal((batch, n, d))
        targets = rng.standard_normal((batch, m, d))
        for name, masks in patterns.items():
            grads, _, _ = nn.backward(params, inputs, targets, masks)
            numeric = finite_difference_grad(params, inputs, targets, masks)
            err = max_rel_error(grads.to_vector(), numeric)
            worst = max(worst, err)
    elapsed = time.time() - t0
    report("criterion 1 (gradient check, all cells x masks)",
           worst < 1e-4 and elapsed < 60,
           f"max rel err {worst:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. integrator order

def test_criterion_2_integrator_order():
    spec = dynsys.get_system("lorenz")
    rng = np.random.default_rng(11)
    ratios = []
    for _ in range(10):
        x0 = rng.uniform([-15, -20, 5], [15, 20, 40])
        sol = {s: dynsys.integrate_ode(spec, x0, 1, substeps=s).values[0]
               for s in (2, 4, 8)}
        ratios.append(np.linalg.norm(sol[2] - sol[4])
                      / np.linalg.norm(sol[4] - sol[8]))
    ok = all(8 <= r <= 32 for r in ratios)
    report("criterion 2 (RK4 Richardson ratio on 10 random states)", ok,
           f"ratios in [{min(ratios):.1f}, {max(ratios):.1f}]")


# ---------------------------------------------------------------------------
# 3. LLE validation

def test_criterion_3_lle_validation():
    t0 = time.time()
    lorenz = dynsys.estimate_lle(dynsys.get_system("lorenz"),
                                 renorm_interval=10, total_steps=30000,
                                 substeps=5, transient_steps=1000)
    roessler = dynsys.estimate_lle(dynsys.get_system("roessler"),
                                   renorm_interval=10, total_steps=30000,
                                   substeps=5, transient_steps=1000)
    decay = dynsys.SystemSpec("linear-decay", 1, {"rate": 1.0}, dt=0.1,
                              lle=-1.0, default_x0=(1.0,))
    contraction = dynsys.estimate_lle(decay, renorm_interval=10,
                                      total_steps=2000, substeps=4,
                                      transient_steps=50)
    elapsed = time.time() - t0
    ok = (abs(lorenz - 0.905) / 0.905 <= 0.20
          and abs(roessler - 0.069) / 0.069 <= 0.25
          and contraction < 0
          and elapsed < 120)
    report("criterion 3 (Benettin LLE vs published values)", ok,
           f"lorenz {lorenz:.3f} (target 0.905 +-20%), "
           f"roessler {roessler:.4f} (target 0.069 +-25%), "
           f"contraction {contraction:.3f} < 0, {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 4. curriculum suite

def test_criterion_4_curriculum_suite():
    t0 = time.time()
    failures = []

    # endpoint / monotonicity / clamp over the published grids
    grids = [("CL_DTF_P", s, 0.0) for s in (0.25, 0.5, 0.75, 1.0)] + \
            [("CL_ITF_P", s, 1.0) for s in (0.0, 0.25, 0.5, 0.75)]
    for transition in cur.TRANSITIONS:
        for strategy, eps_start, eps_end in grids:
            cfg = cur.CurriculumConfig(strategy, transition, eps_start,
                                       eps_end, length=1000)
            values = np.array([cur.eval_epsilon(cfg, i)
                               for i in range(0, 5001, 5)])
            start_tol = 0.02 if transition == "inverse_sigmoid" else 0.0
            if abs(values[0] - eps_start) > start_tol:
                failures.append(f"{transition} start {values[0]}!={eps_start}")
            if abs(values[-1] - eps_end) > 0.01:
                failures.append(f"{transition} end {values[-1]}!={eps_end}")
            diffs = np.diff(values)
            mono = np.all(diffs >= -1e-12) if eps_start < eps_end \
                else np.all(diffs <= 1e-12)
            if not mono:
                failures.append(f"{transition} not monotone")
            lo, hi = min(eps_start, eps_end), max(eps_start, eps_end)
            if values.min() < lo - 1e-12 or values.max() > hi + 1e-12:
                failures.append(f"{transition} leaves [{lo}, {hi}]")

    # deterministic TF-count exactness
    det = cur.CurriculumConfig("CL_ITF_D", "linear", 0.0, 1.0)
    for m in (5, 20, 182):
        for eps in np.linspace(0, 1, 21):
            got = int(cur.build_mask(det, eps, m).decisions.sum())
            want = sum(1 for j in range(2, m + 1) if eps >= j / m)
            if got != want:
                failures.append(f"det count {got}!={want} at eps={eps}, m={m}")

    # Bernoulli concentration at 1e5 draws (+-4 sigma)
    rng = np.random.default_rng(99)
    n_draws = 10 ** 5
    mean = np.mean(rng.random(n_draws) < 0.5)
    bound = 4 * math.sqrt(0.25 / n_draws)
    if abs(mean - 0.5) > bound:
        failures.append(f"bernoulli mean {mean} outside +-{bound}")

    # FR-gap variance vs geometric law at 1e6 draws
    for eps in (0.2, 0.5):
        draws = np.random.default_rng(7).random(10 ** 6) < eps
        gaps = np.diff(np.nonzero(draws)[0])
        expected = (1 - eps) / eps ** 2
        if abs(gaps.var() - expected) / expected > 0.05:
            failures.append(f"gap variance off at eps={eps}")

    # closed form vs the published finite sum
    for eps in (0.001, 0.01, 0.1, 0.5):
        for m in (20, 200):
            total = sum(eps * (1 - eps) ** (i - 1) for i in range(1, m + 1))
            if abs(cur.prob_at_least_one_tf(eps, m) - total) > 1e-12:
                failures.append(f"p<=m mismatch at eps={eps}, m={m}")
    if abs(cur.prob_at_least_one_tf(0.01, 200) - 0.86602) > 1e-5:
        failures.append("published p<=200 value missed")

    elapsed = time.time() - t0
    report("criterion 4 (curriculum properties)",
           not failures and elapsed < 60,
           f"{len(failures)} failures {failures[:3]}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 5. metric unit suite

def test_criterion_5_metric_suite():
    failures = []

    def check(label, cond):
        if not cond:
            failures.append(label)

    y = np.array([1.0, 0.0])
    check("nrmse zero", metrics.nrmse_step(y, y, 1.0) == 0.0)
    check("nrmse unit", metrics.nrmse_step([1, 0], [0, 1], 1.0) == 1.0)
    check("nrmse sigma", metrics.nrmse_step(y, [0, 1], 2.0)
          == metrics.nrmse_step(y, [0, 1], 1.0) / 2)

    truth = np.zeros((111, 1))
    pred = np.arange(111, dtype=float)[:, None]
    _, last10 = metrics.nrmse_horizon(truth, pred, 1.0)
    check("last10 over 12 steps", last10 == pytest.approx(np.mean(np.arange(99, 111))))
    truth10 = np.zeros((10, 1))
    pred10 = np.arange(1.0, 11.0)[:, None]
    mean10, last10_10 = metrics.nrmse_horizon(truth10, pred10, 1.0)
    check("mean 5.5 / last10 10", mean10 == pytest.approx(5.5)
          and last10_10 == pytest.approx(10.0))

    rng = np.random.default_rng(0)
    truths = rng.standard_normal((6, 8, 3))
    check("r2 perfect", np.allclose(metrics.r2_per_step(truths, truths), 1.0))
    pooled = np.broadcast_to(truths.mean(axis=(0, 2), keepdims=True),
                             truths.shape)
    check("r2 mean-predictor zero",
          np.allclose(metrics.r2_per_step(truths, pooled), 0.0))
    c = 0.4
    r2_off = metrics.r2_per_step(truths, truths + c)
    for t in range(8):
        pool = truths[:, t, :]
        sst = np.sum((pool - pool.mean()) ** 2)
        check("r2 offset closed form",
              r2_off[t] == pytest.approx(1 - c * c * pool.size / sst))

    check("lt full", metrics.lt_horizon(np.full(111, 0.95), 0.9, 0.01, 0.905)
          == pytest.approx(1.00455))
    check("lt zero", metrics.lt_horizon([0.1, 0.95], 0.9, 0.1, 1.0) == 0.0)
    curve = np.full(111, 0.95)
    curve[55:] = 0.0
    check("lt first crossing",
          metrics.lt_horizon(curve, 0.9, 0.01, 0.905)
          == pytest.approx(55 * 0.01 * 0.905))

    check("rel impr roessler 80.61",
          metrics.rel_improvement(0.00098, 0.00019) == pytest.approx(80.61, abs=0.01))
    check("rel impr thomas 72.78",
          metrics.rel_improvement(0.03416, 0.00930) == pytest.approx(72.78, abs=0.01))
    check("rel impr zero", metrics.rel_improvement(0.5, 0.5) == 0.0)

    report("criterion 5 (metric unit suite incl. published rel. impr.)",
           not failures, f"{len(failures)} failures {failures[:3]}")


# ---------------------------------------------------------------------------
# 6 + 7. desk-scale qualitative reproduction (shared runs)

# Shared desk-scale protocol. The criterion pins the dataset (chaotic
# Thomas, 2000 samples, fixed seed), hidden=64, n=50, m from the
# Lyapunov-time rule, the 300-epoch cap, and the strategy set; the
# remaining knobs are fixed here for every strategy alike. The scheduler
# stays off (reduce-on-plateau collapses the learning rate during the
# probabilistic ramp), the budget is 150 epochs at ~57 updates/epoch,
# and validation/evaluation average several overlapping rollout windows
# because the 200-step desk splits hold only one disjoint window each.
DESK = {
    "dataset_seed": 7,
    "samples": 2000,
    "hidden": 64,
    "n": 50,
    "max_epochs": 150,
    "batch_size": 8,
    "train_stride": 3,
    "lr0": 3e-4,
    "val_stride": 3,
    "eval_stride": 2,
    "length": 100,
    "seeds": (1, 2, 3),
}


@pytest.fixture(scope="module")
def desk_runs():
    spec = dynsys.get_system("thomas")
    ds = dataio.generate_dataset(spec, n_samples=DESK["samples"],
                                 seed=DESK["dataset_seed"])
    results = {}
    for seed in DESK["seeds"]:
        for strategy in ("FR", "TF", "CL_ITF_P"):
            mc = trainer.ModelConfig("gru", hidden=DESK["hidden"])
            tc = trainer.TrainerConfig(
                batch_size=DESK["batch_size"], max_epochs=DESK["max_epochs"],
                seed=seed, n=DESK["n"], train_stride=DESK["train_stride"],
                lr0=DESK["lr0"], val_stride=DESK["val_stride"],
                es_patience=DESK["max_epochs"], scheduler_enabled=False)
            if strategy == "CL_ITF_P":
                cc = cur.CurriculumConfig("CL_ITF_P", "linear", 0.0, 1.0,
                                          length=DESK["length"])
            else:
                cc = cur.CurriculumConfig(strategy)
            params, log = trainer.train(mc, tc, cc, ds)
            rep = metrics.evaluate(params, ds, warmup=DESK["n"],
                                   stride=DESK["eval_stride"])
            results[(strategy, seed)] = rep
    return results


def test_criterion_6_curriculum_beats_baselines(desk_runs):
    wins = 0
    details = []
    for seed in DESK["seeds"]:
        cl = desk_runs[("CL_ITF_P", seed)].nrmse_mean_1lt
        fr = desk_runs[("FR", seed)].nrmse_mean_1lt
        tf = desk_runs[("TF", seed)].nrmse_mean_1lt
        won = cl < fr and cl < tf
        wins += won
        details.append(f"seed {seed}: CL {cl:.4f} vs FR {fr:.4f} / TF {tf:.4f}"
                       f" {'WIN' if won else 'loss'}")
    report("criterion 6 (CL-ITF-P beats both baselines on >=2/3 seeds)",
           wins >= 2, "; ".join(details))


def test_criterion_7_tf_fr_contrast(desk_runs):
    wins = 0
    details = []
    for seed in DESK["seeds"]:
        tf = desk_runs[("TF", seed)]
        fr = desk_runs[("FR", seed)]
        tf_first5 = float(tf.nrmse_curve[:5].mean())
        fr_first5 = float(fr.nrmse_curve[:5].mean())
        won = tf_first5 < fr_first5 and fr.nrmse_last10 < tf.nrmse_last10
        wins += won
        details.append(
            f"seed {seed}: first5 TF {tf_first5:.4f} vs FR {fr_first5:.4f}, "
            f"last10 FR {fr.nrmse_last10:.4f} vs TF {tf.nrmse_last10:.4f}"
            f" {'WIN' if won else 'loss'}")
    report("criterion 7 (TF better early, FR better late, >=2/3 seeds)",
           wins >= 2, "; ".join(details))


# ---------------------------------------------------------------------------
# 8. determinism

def test_criterion_8_determinism(tmp_path):
    ds = make_wave_dataset(steps=600, d=2, dt=0.1, lle=1.0)
    mc = trainer.ModelConfig("gru", hidden=8)
    tc = trainer.TrainerConfig(batch_size=16, max_epochs=8, seed=3, n=12, m=6,
                               train_stride=7, es_patience=1000)
    cc = cur.CurriculumConfig("CL_ITF_P", "linear", 0.0, 1.0, length=4)

    c1, c2 = tmp_path / "r1.ckpt", tmp_path / "r2.ckpt"
    p1, log1 = trainer.train(mc, tc, cc, ds, checkpoint_path=c1)
    p2, log2 = trainer.train(mc, tc, cc, ds, checkpoint_path=c2)
    identical = (np.array_equal(p1.to_vector(), p2.to_vector())
                 and log1.equivalent(log2)
                 and c1.read_bytes() == c2.read_bytes())

    # interrupt at epoch 4, resume, compare to the straight run
    short = trainer.TrainerConfig(**{**tc.__dict__, "max_epochs": 4})
    mid = tmp_path / "mid.ckpt"
    trainer.train(mc, short, cc, ds, checkpoint_path=mid)
    p3, log3 = trainer.train(mc, tc, cc, ds, resume_from=mid,
                             checkpoint_path=tmp_path / "r3.ckpt")
    resumed = (np.array_equal(p3.to_vector(), p1.to_vector())
               and log3.equivalent(log1, from_epoch=4)
               and (tmp_path / "r3.ckpt").read_bytes() == c1.read_bytes())
    report("criterion 8 (bit-identical reruns; exact interrupt/resume)",
           identical and resumed,
           f"reruns identical: {identical}, resume exact: {resumed} "
           "(wall-clock seconds excluded from log comparison)")


# ---------------------------------------------------------------------------
# 9. scheduler ablation

def test_criterion_9_scheduler_ablation():
    ds = make_wave_dataset(steps=600, d=2, dt=0.1, lle=1.0)
    mc = trainer.ModelConfig("gru", hidden=8)
    tc = trainer.TrainerConfig(batch_size=16, max_epochs=6, seed=1, n=12, m=6,
                               train_stride=7, es_patience=1000,
                               scheduler_enabled=False)
    _, log = trainer.train(mc, tc, cur.CurriculumConfig("TF"), ds)
    constant_lr = {r.lr for r in log.records} == {tc.lr0}

    # synthetic val-loss injection: a permanent plateau must walk the rate
    # down 1e-3 -> 6e-4 -> ... and clamp at 3e-6
    sched = trainer.PlateauScheduler(1e-3, 0.6, 10, 3e-6, enabled=True)
    seen = []
    for _ in range(400):
        seen.append(sched.step(1.0))
    distinct = sorted(set(seen), reverse=True)
    expected = [1e-3]
    while expected[-1] > 3e-6:
        expected.append(max(expected[-1] * 0.6, 3e-6))
    ladder_ok = (len(distinct) == len(expected)
                 and all(a == pytest.approx(b)
                         for a, b in zip(distinct, expected))
                 and distinct[-1] == 3e-6)
    report("criterion 9 (scheduler ablation and plateau ladder)",
           constant_lr and ladder_ok,
           f"constant lr: {constant_lr}, ladder 1e-3 -> 3e-6: {ladder_ok}")
