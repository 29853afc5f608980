import numpy as np
import pytest

from densekit import schedule as S
from densekit.ops import ParamTensor
from densekit.optim import AdamState, adam_step, effective_gradients


PHASE1 = S.REPLAY_PHASES[0]  # base 1e-4, max 6e-4, step 6, epochs 0-24


class TestClr:
    def test_phase_start_is_base(self):
        assert S.clr_lr(0.0, PHASE1) == pytest.approx(1e-4, rel=1e-12)

    def test_first_peak_is_max(self):
        assert S.clr_lr(6.0, PHASE1) == pytest.approx(6e-4, rel=1e-12)

    def test_cycle2_peak_halved(self):
        assert S.clr_lr(18.0, PHASE1) == pytest.approx(3.5e-4, rel=1e-12)

    def test_cycle_boundaries_return_to_base(self):
        for t in (0, 12):
            assert S.clr_lr(float(t), PHASE1) == pytest.approx(1e-4, rel=1e-12)

    def test_peaks_halve_exactly(self):
        phase = S.CLRPhase(1e-4, 6e-4, 2, 0, 16)
        for i in range(1, 5):
            peak = S.clr_lr((2 * i - 1) * 2.0, phase)
            assert peak - phase.base_lr == pytest.approx(
                (phase.max_lr - phase.base_lr) / 2 ** (i - 1), rel=1e-12)

    def test_continuity_within_phase(self):
        ts = np.arange(0, 24, 0.01)
        lrs = np.array([S.clr_lr(t, PHASE1) for t in ts])
        assert np.max(np.abs(np.diff(lrs))) < (6e-4 - 1e-4) / 6 * 0.011

    def test_outside_span_rejected(self):
        with pytest.raises(ValueError):
            S.clr_lr(25.0, PHASE1)

    def test_invalid_phase_rejected(self):
        with pytest.raises(ValueError):
            S.CLRPhase(1e-4, 1e-5, 2, 0, 8)


class TestReplay:
    def test_spot_values(self):
        assert S.replay_schedule(0.0) == pytest.approx(1e-4, rel=1e-12)
        assert S.replay_schedule(24.0) == pytest.approx(1e-5, rel=1e-12)

    def test_epoch_90_matches_phase5_formula(self):
        phase5 = S.REPLAY_PHASES[4]
        assert S.replay_schedule(90.0) == S.clr_lr(90.0, phase5)
        # phase-local epoch 6, step 2: cycle-2 peak
        assert S.replay_schedule(90.0) == pytest.approx(
            1e-5 + (6e-5 - 1e-5) / 2, rel=1e-12)

    def test_total_span(self):
        assert S.REPLAY_PHASES[-1].end_epoch == 108

    def test_every_epoch_maps_to_one_phase(self):
        for t in np.arange(0, 108, 0.5):
            covering = [p for p in S.REPLAY_PHASES
                        if p.start_epoch <= t < p.end_epoch]
            assert len(covering) == 1

    def test_beyond_span_rejected(self):
        with pytest.raises(ValueError):
            S.replay_schedule(109.0)

    def test_trace_rows(self):
        rows = S.schedule_trace(step=1.0)
        assert len(rows) == 108
        assert rows[0] == (0.0, pytest.approx(1e-4, rel=1e-12))


class TestEscalation:
    def test_stagnation_escalates_then_lowers(self):
        current = S.REPLAY_PHASES[3]  # 1e-6..6e-6, step 2, epochs 72-84
        out = S.adaptive_escalation([.6086, .6174, .6243, .6243], current,
                                    escalation_cycles=3)
        assert len(out) == 2
        esc, low = out
        assert esc.base_lr == pytest.approx(1e-5, rel=1e-12)
        assert esc.max_lr == pytest.approx(6e-5, rel=1e-12)
        assert (esc.start_epoch, esc.end_epoch) == (84, 96)
        assert low.base_lr == pytest.approx(1e-7, rel=1e-12)
        assert low.max_lr == pytest.approx(6e-7, rel=1e-12)
        assert (low.start_epoch, low.end_epoch) == (96, 108)

    def test_improvement_means_no_escalation(self):
        current = S.REPLAY_PHASES[1]
        assert S.adaptive_escalation([.50, .55], current) == []

    def test_double_stagnation(self):
        phase = S.CLRPhase(1e-6, 6e-6, 2, 0, 8)
        first = S.adaptive_escalation([.5, .5], phase)
        esc1, low1 = first
        second = S.adaptive_escalation([.5, .5, .5, .5], low1)
        esc2, low2 = second
        assert esc2.base_lr == pytest.approx(low1.base_lr * 10, rel=1e-12)
        assert low2.base_lr == pytest.approx(esc2.base_lr / 100, rel=1e-12)

    def test_requires_history(self):
        with pytest.raises(ValueError):
            S.adaptive_escalation([], S.REPLAY_PHASES[0])


class TestPlateau:
    def test_improving_never_reduces(self):
        state = S.PlateauState()
        lr = 1e-3
        for loss in np.linspace(1.0, 0.1, 20):
            lr = state.step(loss, lr)
        assert lr == 1e-3

    def test_constant_loss_reduces_after_patience(self):
        state = S.PlateauState(patience=5, factor=0.1)
        lr = 1e-3
        lrs = []
        for _ in range(5):
            lr = state.step(1.0, lr)
            lrs.append(lr)
        assert lrs[:4] == [1e-3] * 4
        assert lrs[4] == pytest.approx(1e-4, rel=1e-12)

    def test_two_reductions_in_ten_epochs(self):
        state = S.PlateauState(patience=5, factor=0.1)
        lr = 1e-3
        for _ in range(10):
            lr = state.step(1.0, lr)
        assert lr == pytest.approx(1e-5, rel=1e-12)

    def test_min_lr_floor(self):
        state = S.PlateauState(patience=1, factor=0.1, min_lr=1e-6)
        lr = 1e-5
        for _ in range(5):
            lr = state.step(1.0, lr)
        assert lr == 1e-6

    def test_never_raises_lr(self):
        state = S.PlateauState()
        rng = np.random.default_rng(0)
        lr = 1e-3
        for _ in range(50):
            new = state.step(float(rng.uniform(0.5, 1.5)), lr)
            assert new <= lr
            lr = new


class TestAdam:
    def test_first_step_delta(self):
        p = ParamTensor(np.zeros((1, 1, 1, 1)), "conv_weight")
        p.grad[:] = 1.0
        state = AdamState([p], lr=1e-3)
        adam_step(state, [p])
        assert p.value.ravel()[0] == pytest.approx(-1e-3, rel=1e-4)

    def test_zero_grad_noop_but_t_increments(self):
        p = ParamTensor(np.full((2, 2, 1, 1), 0.5), "conv_weight")
        state = AdamState([p], lr=1e-3)
        adam_step(state, [p])
        assert state.t == 1
        np.testing.assert_array_equal(p.value, np.full((2, 2, 1, 1), 0.5, dtype=np.float32))

    def test_quadratic_convergence(self):
        p = ParamTensor(np.zeros((1, 1, 1, 1)), "conv_weight")
        state = AdamState([p], lr=0.1)
        for _ in range(100):
            p.zero_grad()
            p.grad[:] = 2 * (p.value - 3.0)
            adam_step(state, [p])
        assert abs(p.value.ravel()[0] - 3.0) < 0.1

    def test_decay_shrinks_weights_without_gradient(self):
        p = ParamTensor(np.full((1, 1, 1, 1), 2.0), "conv_weight")
        state = AdamState([p], lr=1e-3)
        adam_step(state, [p], weight_decay_lambda=2e-4)
        assert 0 < p.value.ravel()[0] < 2.0

    def test_decay_excludes_non_conv_weights(self):
        params = [ParamTensor(np.ones(3), role)
                  for role in ("conv_weight", "conv_bias", "bn_gamma", "bn_beta")]
        effs = effective_gradients(params, 2e-4)
        assert np.all(effs[0] == 2 * 2e-4)
        for g in effs[1:]:
            assert np.all(g == 0)

    def test_nan_grad_aborts(self):
        p = ParamTensor(np.zeros(2), "conv_weight")
        p.grad[:] = np.nan
        state = AdamState([p])
        with pytest.raises(FloatingPointError):
            adam_step(state, [p])
