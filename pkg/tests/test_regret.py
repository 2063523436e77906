import math

import numpy as np
import pytest

from xnas import pea_core as pc
from xnas.regret import (
    UndefinedLearningRateError,
    bound_report,
    new_ledger,
    optimal_eta,
    record_step,
    regret_bound,
)


def _hand_run():
    """N=2, eta=0.5, L=1, T=3; expert 1 always earns +1, expert 2 always -1."""
    s = pc.init_forecaster(2, 0.5, 1.0, 3)
    f = np.eye(2)
    r = np.array([1.0, -1.0])
    led = new_ledger(2)
    for _ in range(3):
        p, s, ev = pc.xnas_round(s, -r, f[s.active_indices])
        led = record_step(led, -float(r @ p), -r, log_gamma_step=ev.log_gamma_step)
    return led


def test_zero_losses_give_zero_regret():
    led = new_ledger(3)
    for _ in range(5):
        led = record_step(led, 0.0, np.zeros(3))
    assert led.regret == 0.0


def test_hand_run_regret_and_bound():
    led = _hand_run()
    # forecaster losses 0, -(e-1)/(e+1), -1 against expert-1 losses -1,-1,-1
    expected = 3 - (math.e - 1) / (math.e + 1) - 1
    assert led.regret == pytest.approx(expected, abs=1e-12)
    assert led.regret == pytest.approx(1.53788, abs=1e-5)
    assert led.gamma_T == pytest.approx(1 + math.exp(-2), rel=1e-12)
    rep = bound_report(led, 0.5, 3, 1.0)
    assert rep.bound == pytest.approx(0.75 + 2 * math.log(2) - 2 * math.log(1 + math.exp(-2)), abs=1e-12)
    assert rep.bound == pytest.approx(1.882438, abs=1e-6)
    assert rep.slack > 0


def test_single_expert_regret_is_zero():
    led = new_ledger(1)
    for loss in (0.3, -1.2, 4.0):
        led = record_step(led, loss, [loss])
        assert led.regret == 0.0
    assert regret_bound(0.2, 3, 1.0, 1) == pytest.approx(0.2 * 3 / 2)


def test_bound_without_wipeout_factor():
    assert regret_bound(0.1, 10, 2.0, 4) == pytest.approx(0.1 * 10 * 4 / 2 + math.log(4) / 0.1)


def test_bound_rejects_out_of_range_gamma():
    with pytest.raises(ValueError):
        regret_bound(0.1, 10, 1.0, 4, gamma_T=0.5)
    with pytest.raises(ValueError):
        regret_bound(0.1, 10, 1.0, 4, gamma_T=4.0)


def test_regret_minimum_covers_wiped_experts():
    led = new_ledger(2)
    led = record_step(led, 0.0, [1.0, -2.0])
    assert led.regret == pytest.approx(2.0)


def test_regret_is_permutation_invariant():
    rng = np.random.default_rng(0)
    losses = rng.normal(size=(20, 5))
    fl = rng.normal(size=20)
    perm = rng.permutation(5)
    a, b = new_ledger(5), new_ledger(5)
    for t in range(20):
        a = record_step(a, fl[t], losses[t])
        b = record_step(b, fl[t], losses[t][perm])
    assert a.regret == pytest.approx(b.regret, abs=1e-12)


def test_aux_regret_equals_regret_for_linear_losses():
    led = _hand_run()
    assert led.aux_regret == led.regret


def test_record_step_validation():
    with pytest.raises(ValueError):
        record_step(new_ledger(2), 0.0, [1.0])
    with pytest.raises(ValueError):
        record_step(new_ledger(2), math.inf, [1.0, 1.0])
    with pytest.raises(ValueError):
        record_step(new_ledger(2), 0.0, [1.0, 1.0], gamma_step=0.9)


def test_optimal_eta_values():
    eta, cap = optimal_eta(7_500_000, 1.0, 8)
    assert eta == pytest.approx(math.sqrt(2 * math.log(8) / 7.5e6), rel=1e-12)
    assert eta == pytest.approx(7.45e-4, abs=5e-7)
    assert cap == pytest.approx(math.sqrt(2 * 7.5e6 * math.log(8)), rel=1e-12)
    assert optimal_eta(2_500_000, 1.0, 8)[0] == pytest.approx(1.29e-3, abs=5e-6)


def test_optimal_eta_undefined_for_single_expert():
    with pytest.raises(UndefinedLearningRateError):
        optimal_eta(10, 1.0, 1)


def test_optimal_eta_minimises_gamma_free_bound():
    eta, cap = optimal_eta(50, 1.5, 6)
    assert regret_bound(eta, 50, 1.5, 6) == pytest.approx(cap, rel=1e-12)
    for k in (0.5, 0.9, 1.1, 2.0):
        assert regret_bound(k * eta, 50, 1.5, 6) > cap
