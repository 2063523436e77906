"""Randomized checks of the wipeout safety, wipeout-factor and regret-bound guarantees.

Each trial draws N in [2, 16], T in [1, 64], a reward bound L in [0.5, 2] and
a T x N table of rewards uniform in [-L, L]; the loss of a round is linear,
``l_t(p) = -r_t . p``. Even trials use the regret-optimal rate, odd trials a
log-uniform rate in [0.01, 3].
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import pea_core
from .regret import bound_report, new_ledger, optimal_eta, record_step

BOUND_TOL = 1e-9


@dataclass
class TrialRecord:
    trial: int
    n_experts: int
    horizon: int
    eta: float
    grad_bound: float
    eta_is_optimal: bool
    best_always_active: bool
    gamma_T: float
    regret: float
    bound: float
    cap: float

    @property
    def gamma_ok(self) -> bool:
        return 1.0 <= self.gamma_T < self.n_experts

    @property
    def bound_ok(self) -> bool:
        return self.regret <= self.bound + BOUND_TOL

    @property
    def cap_ok(self) -> bool:
        return (not self.eta_is_optimal) or self.regret <= self.cap + BOUND_TOL


@dataclass
class VerifyReport:
    trials: list[TrialRecord] = field(default_factory=list)

    def counts(self) -> dict[str, tuple[int, int]]:
        opt = [t for t in self.trials if t.eta_is_optimal]
        return {
            "safe_wipeout": (sum(t.best_always_active for t in self.trials), len(self.trials)),
            "gamma_range": (sum(t.gamma_ok for t in self.trials), len(self.trials)),
            "regret_bound": (sum(t.bound_ok for t in self.trials), len(self.trials)),
            "optimal_eta_regret_cap": (sum(t.cap_ok for t in opt), len(opt)),
        }

    @property
    def passed(self) -> bool:
        return all(ok == n for ok, n in self.counts().values())

    def lines(self) -> list[str]:
        out = []
        for name, (ok, n) in self.counts().items():
            out.append(f"{'PASS' if ok == n else 'FAIL'} {name}: {ok}/{n}")
        return out


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(trial),))))


def run_verify_trial(seed: int, trial: int, zeta: float = 1.0) -> TrialRecord:
    rng = trial_rng(seed, trial)
    n = int(rng.integers(2, 17))
    horizon = int(rng.integers(1, 65))
    bound = float(rng.uniform(0.5, 2.0))
    rewards = rng.uniform(-bound, bound, size=(horizon, n))
    eta_star, cap = optimal_eta(horizon, bound, n)
    use_opt = trial % 2 == 0
    eta = eta_star if use_opt else float(math.exp(rng.uniform(math.log(0.01), math.log(3.0))))

    best = np.flatnonzero(rewards.sum(axis=0) == rewards.sum(axis=0).max())
    experts = np.eye(n)
    state = pea_core.init_forecaster(n, eta, bound, horizon, zeta=zeta, wipeout_enabled=True)
    ledger = new_ledger(n)
    safe = True
    for t in range(horizon):
        r = rewards[t]
        p, state, event = pea_core.xnas_round(state, -r, experts[state.active_indices])
        ledger = record_step(ledger, -float(r @ p), -r, log_gamma_step=event.log_gamma_step)
        if event.wiped:
            safe = safe and bool(state.active[best].all())
    try:
        b = bound_report(ledger, eta, horizon, bound).bound
    except ValueError:
        b = math.nan  # gamma_T out of range; reported as a bound failure
    return TrialRecord(trial, n, horizon, eta, bound, use_opt, safe, ledger.gamma_T, ledger.regret, b, cap)


def _verify_chunk(args) -> list[TrialRecord]:
    seed, lo, hi = args
    return [run_verify_trial(seed, k) for k in range(lo, hi)]


def run_verify(trials: int = 10_000, seed: int = 7, workers: int = 1) -> VerifyReport:
    """Trials are seeded individually, so the report does not depend on ``workers``."""
    if workers <= 1:
        return VerifyReport(_verify_chunk((seed, 0, trials)))
    size = max(1, -(-trials // (4 * workers)))
    chunks = [(seed, lo, min(lo + size, trials)) for lo in range(0, trials, size)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return VerifyReport([t for part in pool.map(_verify_chunk, chunks) for t in part])
