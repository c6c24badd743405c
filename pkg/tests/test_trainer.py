import math

import numpy as np
import pytest

from chaoscast import curriculum as cur
from chaoscast import dataio, nn, trainer
from chaoscast.errors import DivergenceError, InvalidInputError, VersionError

from conftest import make_wave_dataset


def small_setup(max_epochs=6, strategy="TF", seed=1, **trainer_kwargs):
    ds = make_wave_dataset(steps=600, d=2, dt=0.1, lle=1.0)
    mc = trainer.ModelConfig("gru", hidden=8)
    defaults = dict(batch_size=16, max_epochs=max_epochs, seed=seed, n=12,
                    m=6, train_stride=11, es_patience=1000,
                    scheduler_enabled=False)
    defaults.update(trainer_kwargs)
    tc = trainer.TrainerConfig(**defaults)
    if strategy in ("FR", "TF"):
        cc = cur.CurriculumConfig(strategy)
    else:
        cc = cur.CurriculumConfig(strategy, "linear", 0.0, 1.0,
                                  length=max(max_epochs // 2, 1))
    return ds, mc, tc, cc


class TestScheduler:
    def test_ten_plateau_epochs_reduce(self):
        sched = trainer.PlateauScheduler(1e-3, 0.6, 10, 3e-6)
        sched.step(1.0)
        for _ in range(9):
            assert sched.step(1.0) == 1e-3
        assert sched.step(1.0) == pytest.approx(6e-4)

    def test_improvement_resets_counter(self):
        sched = trainer.PlateauScheduler(1e-3, 0.6, 10, 3e-6)
        sched.step(1.0)
        for _ in range(5):
            sched.step(1.0)
        sched.step(0.5)  # improvement mid-plateau
        for _ in range(9):
            assert sched.step(0.5) == 1e-3
        assert sched.step(0.5) == pytest.approx(6e-4)

    def test_min_lr_clamp(self):
        sched = trainer.PlateauScheduler(1e-3, 0.6, 1, 3e-6)
        sched.step(1.0)
        for _ in range(40):
            lr = sched.step(1.0)
        assert lr == 3e-6

    def test_disabled_scheduler_keeps_lr(self):
        sched = trainer.PlateauScheduler(1e-3, 0.6, 1, 3e-6, enabled=False)
        for _ in range(20):
            assert sched.step(1.0) == 1e-3

    def test_forced_plateau_sequence(self):
        # synthetic constant validation loss: 1e-3 -> 6e-4 -> ... -> 3e-6
        sched = trainer.PlateauScheduler(1e-3, 0.6, 10, 3e-6)
        seen = []
        for _ in range(200):
            seen.append(sched.step(1.0))
        distinct = sorted(set(seen), reverse=True)
        expected = [1e-3]
        while expected[-1] > 3e-6:
            expected.append(max(expected[-1] * 0.6, 3e-6))
        assert distinct == pytest.approx(expected)


class TestEarlyStopper:
    def test_steady_halving_never_stops(self):
        stopper = trainer.EarlyStopper(100, 0.01)
        loss = 1.0
        for _ in range(500):
            assert not stopper.step(loss)
            loss /= 2

    def test_constant_loss_stops_at_patience(self):
        stopper = trainer.EarlyStopper(100, 0.01)
        stops = [stopper.step(1.0) for _ in range(101)]
        assert not any(stops[:100])
        assert stops[100]

    def test_subthreshold_improvement_still_stops(self):
        stopper = trainer.EarlyStopper(100, 0.01)
        loss = 1.0
        stopped_at = None
        for i in range(1, 200):
            loss *= 0.995  # 0.5% per epoch, below the 1% threshold
            if stopper.step(loss):
                stopped_at = i
                break
        assert stopped_at == 101

    def test_history_helper(self):
        assert trainer.early_stop_check([1.0] * 101)
        assert not trainer.early_stop_check([2.0 ** -i for i in range(200)])


class TestTrain:
    def test_toy_memorization(self):
        # single training window; pure TF must drive training MSE very low
        t = np.arange(60) * 0.2
        raw = np.stack([np.sin(t), np.cos(1.3 * t)], axis=1)
        ds = dataio.dataset_from_array(raw, dt=0.2, lle=1.0)
        mc = trainer.ModelConfig("gru", hidden=16)
        tc = trainer.TrainerConfig(batch_size=8, max_epochs=200, seed=1, n=42,
                                   m=6, es_patience=1000,
                                   scheduler_enabled=False)
        params, log = trainer.train(mc, tc, cur.CurriculumConfig("TF"), ds)
        assert log.records[-1].train_loss < 1e-3

    def test_same_seed_bit_identical(self):
        ds, mc, tc, cc = small_setup(strategy="CL_ITF_P")
        p1, log1 = trainer.train(mc, tc, cc, ds)
        p2, log2 = trainer.train(mc, tc, cc, ds)
        assert np.array_equal(p1.to_vector(), p2.to_vector())
        assert log1.equivalent(log2)
        for a, b in zip(log1.records, log2.records):
            assert a.train_loss == b.train_loss
            assert a.val_loss == b.val_loss

    def test_curriculum_endpoints_logged(self):
        ds, mc, tc, cc = small_setup(max_epochs=8, strategy="CL_ITF_P")
        _, log = trainer.train(mc, tc, cc, ds)
        eps = [r.epsilon for r in log.records]
        assert eps[0] == 0.0
        assert eps[-1] == 1.0

    def test_validation_is_free_running(self):
        ds, mc, tc, cc = small_setup(max_epochs=1, strategy="TF")
        params, log = trainer.train(mc, tc, cc, ds)
        segs = dataio.forecast_segments(ds, "val", tc.n, tc.m)
        ctx = np.stack([s.input for s in segs])
        tgt = np.stack([s.target for s in segs])
        fr_masks = np.zeros((ctx.shape[0], tc.m - 1), dtype=bool)
        expected = nn.forward_loss(params, ctx, tgt, fr_masks)
        assert log.records[-1].val_loss == expected

    def test_best_epoch_params_returned(self):
        ds, mc, tc, cc = small_setup(max_epochs=6)
        params, log = trainer.train(mc, tc, cc, ds)
        best = min(log.records, key=lambda r: r.val_loss)
        assert log.best_epoch == best.epoch
        assert log.best_val_loss == best.val_loss
        segs = dataio.forecast_segments(ds, "val", tc.n, tc.m)
        ctx = np.stack([s.input for s in segs])
        tgt = np.stack([s.target for s in segs])
        masks = np.zeros((ctx.shape[0], tc.m - 1), dtype=bool)
        assert nn.forward_loss(params, ctx, tgt, masks) == log.best_val_loss

    def test_constant_lr_without_scheduler(self):
        ds, mc, tc, cc = small_setup(max_epochs=5, scheduler_enabled=False)
        _, log = trainer.train(mc, tc, cc, ds)
        assert {r.lr for r in log.records} == {tc.lr0}

    def test_lr_non_increasing_with_scheduler(self):
        ds, mc, tc, cc = small_setup(max_epochs=12, scheduler_enabled=True,
                                     plateau_patience=2)
        _, log = trainer.train(mc, tc, cc, ds)
        lrs = [r.lr for r in log.records]
        assert all(b <= a for a, b in zip(lrs, lrs[1:]))
        assert all(r.lr >= tc.min_lr for r in log.records)

    def test_gradient_norms_finite_under_tf(self):
        ds, mc, tc, cc = small_setup(max_epochs=4, strategy="TF")
        _, log = trainer.train(mc, tc, cc, ds)
        assert all(math.isfinite(r.decoder_grad_norm_mean) for r in log.records)

    def test_stf_period_derived_from_dataset(self):
        ds, mc, tc, _ = small_setup(max_epochs=2)
        cc = cur.CurriculumConfig("STF", stf_tau=None)
        _, log = trainer.train(mc, tc, cc, ds)
        # dataset dt=0.1, lle=1.0 -> tau = round(ln2 / 0.1) = 7
        assert log.records[0].epsilon == pytest.approx(1 / 7)

    def test_divergence_aborts_with_log(self, tmp_path):
        ds, mc, tc, cc = small_setup(max_epochs=50, lr0=1e200)
        log_path = tmp_path / "div.log.jsonl"
        with pytest.raises(DivergenceError):
            trainer.train(mc, tc, cc, ds, log_path=log_path)
        log = trainer.TrainLog.from_jsonl(log_path)
        assert log.stop_reason == "divergence"

    def test_early_stop_reason(self):
        ds, mc, tc, cc = small_setup(max_epochs=400, es_patience=3,
                                     es_min_improvement=0.5)
        _, log = trainer.train(mc, tc, cc, ds)
        assert log.stop_reason == "early_stop"
        assert len(log.records) < 400


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        ds, mc, tc, cc = small_setup(max_epochs=3)
        path = tmp_path / "a.ckpt"
        params, log = trainer.train(mc, tc, cc, ds, checkpoint_path=path)
        state = trainer.checkpoint_resume(path)
        assert np.array_equal(state["best_params"],
                              params.to_vector())
        assert state["epoch_next"] == 3

    def test_resume_matches_straight_run(self, tmp_path):
        ds, mc, tc, cc = small_setup(max_epochs=8, strategy="CL_ITF_P")
        straight_params, straight_log = trainer.train(mc, tc, cc, ds)

        short = trainer.TrainerConfig(**{**tc.__dict__, "max_epochs": 4})
        ck = tmp_path / "mid.ckpt"
        trainer.train(mc, short, cc, ds, checkpoint_path=ck)
        resumed_params, resumed_log = trainer.train(mc, tc, cc, ds,
                                                    resume_from=ck)
        assert np.array_equal(resumed_params.to_vector(),
                              straight_params.to_vector())
        assert resumed_log.equivalent(straight_log, from_epoch=4)
        for a, b in zip(straight_log.records[4:], resumed_log.records[4:]):
            assert a.train_loss == b.train_loss
            assert a.val_loss == b.val_loss

    def test_checkpoint_bytes_deterministic(self, tmp_path):
        ds, mc, tc, cc = small_setup(max_epochs=3)
        p1 = tmp_path / "r1.ckpt"
        p2 = tmp_path / "r2.ckpt"
        trainer.train(mc, tc, cc, ds, checkpoint_path=p1)
        trainer.train(mc, tc, cc, ds, checkpoint_path=p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_shape_mismatch_rejected(self, tmp_path):
        ds, mc, tc, cc = small_setup(max_epochs=2)
        path = tmp_path / "c.ckpt"
        trainer.train(mc, tc, cc, ds, checkpoint_path=path)
        wrong = trainer.ModelConfig("gru", hidden=12)
        with pytest.raises(VersionError):
            trainer.train(wrong, tc, cc, ds, resume_from=path)

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"garbage")
        with pytest.raises(VersionError):
            trainer.checkpoint_resume(path)


class TestLogSerialization:
    def test_jsonl_roundtrip(self, tmp_path):
        ds, mc, tc, cc = small_setup(max_epochs=3)
        path = tmp_path / "run.log.jsonl"
        _, log = trainer.train(mc, tc, cc, ds, log_path=path,
                               meta={"config_hash": "abc123"})
        back = trainer.TrainLog.from_jsonl(path)
        assert back.equivalent(log)
        assert back.meta["config_hash"] == "abc123"
        assert [r.epoch for r in back.records] == [0, 1, 2]

    def test_config_validation(self):
        with pytest.raises(InvalidInputError):
            trainer.TrainerConfig(lr_factor=1.5)
        with pytest.raises(InvalidInputError):
            trainer.TrainerConfig(es_min_improvement=0.0)
        with pytest.raises(InvalidInputError):
            trainer.ModelConfig("gru", hidden=8, layers=2)
