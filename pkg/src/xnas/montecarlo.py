"""Stochastic expert selection: Gaussian reward streams, XNAS vs GD-with-softmax.

Every expert has a bias ``b_i ~ N(0, 1)`` and rewards ``R_ti ~ N(b_i, sigma^2)``.
The loss of round t is linear, ``l_t(p) = -R_t . p``, with one-hot axis experts,
and rewards are clipped to ``[-L, L]`` before anything sees them. A trial is
correct when the heaviest final weight sits on the expert with the largest bias.

``run_trial`` drives the scalar state machine in ``pea_core``; ``run_sweep``
uses a batched numpy engine over all trials of a point, which the test-suite
checks against ``run_trial``.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import pea_core
from .regret import new_ledger, optimal_eta, record_step, regret_bound

OPTIMIZERS = ("xnas", "gd_softmax")
AXES = ("N", "sigma")


@dataclass(frozen=True)
class StochasticConfig:
    n_experts: int = 8
    steps: int = 1000
    runs: int = 1000
    sigma_r: float = 1.0
    grad_bound: float = 5.0
    eta: float | str = "auto"
    seed: int = 0
    wipeout: bool = True

    def __post_init__(self):
        if self.n_experts < 1 or self.steps < 1 or self.runs < 1:
            raise ValueError("n_experts, steps and runs must be >= 1")
        if not self.sigma_r > 0:
            raise ValueError("sigma_r must be positive")
        if not self.grad_bound > 0:
            raise ValueError("grad_bound must be positive")
        if self.eta != "auto" and not float(self.eta) > 0:
            raise ValueError("eta must be positive or 'auto'")

    def resolved_eta(self) -> float:
        if self.eta != "auto":
            return float(self.eta)
        if self.n_experts == 1:
            # any rate works for a lone expert; ln 1 = 0 makes the optimum undefined
            return 1.0
        return optimal_eta(self.steps, self.grad_bound, self.n_experts)[0]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TrialOutcome:
    correct: bool
    regret: float
    gamma_T: float
    survivors: int
    n_clipped: int = 0
    bound: float = math.nan

    @property
    def slack(self) -> float:
        return self.bound - self.regret


@dataclass(frozen=True)
class SweepPoint:
    axis: str
    value: float
    optimizer: str
    correct_fraction: float
    mean_regret: float
    std_err: float
    mean_gamma: float
    clip_rate: float
    min_slack: float = math.nan
    runs: int = 0

    def csv_row(self) -> list:
        return [self.axis, self.value, self.optimizer, self.correct_fraction, self.mean_regret,
                self.std_err, self.mean_gamma, self.clip_rate]


SWEEP_CSV_HEADER = ["axis", "value", "optimizer", "correct_fraction", "mean_regret", "std_err",
                    "mean_gamma", "clip_rate"]


@dataclass
class SweepSummary:
    axis: str
    points: list[SweepPoint] = field(default_factory=list)

    def series(self, optimizer: str, attr: str) -> tuple[np.ndarray, np.ndarray]:
        pts = sorted((p for p in self.points if p.optimizer == optimizer), key=lambda p: p.value)
        return np.array([p.value for p in pts]), np.array([getattr(p, attr) for p in pts])


def _value_key(value) -> int:
    if isinstance(value, (int, np.integer)):
        return int(value)
    return struct.unpack("<Q", struct.pack("<d", float(value)))[0]


def substream(seed: int, axis: str, value, trial: int) -> np.random.Generator:
    """Independent generator for one trial of one sweep point.

    The optimizer is deliberately not part of the key: both optimizers are fed
    the same reward instance.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(AXES.index(axis), _value_key(value), int(trial)))
    return np.random.Generator(np.random.PCG64(ss))


def sample_instance(rng: np.random.Generator, n_experts: int, sigma_r: float, steps: int):
    """Biases ``b ~ N(0,1)`` then a ``steps x n_experts`` reward table."""
    biases = rng.standard_normal(n_experts)
    noise = rng.standard_normal((steps, n_experts))
    return biases, biases + sigma_r * noise


def run_trial(config: StochasticConfig, optimizer: str, instance) -> TrialOutcome:
    biases, rewards = instance
    n, steps, bound = config.n_experts, config.steps, config.grad_bound
    rewards = np.asarray(rewards, dtype=float)
    if biases.shape != (n,) or rewards.shape != (steps, n):
        raise ValueError(f"instance shape {rewards.shape} does not match config ({steps}, {n})")
    clipped = np.clip(rewards, -bound, bound)
    n_clipped = int(np.count_nonzero(np.abs(rewards) > bound))
    eta = config.resolved_eta()
    experts = np.eye(n)
    ledger = new_ledger(n)

    if optimizer == "xnas":
        state = pea_core.init_forecaster(n, eta, bound, steps, wipeout_enabled=config.wipeout)
        for t in range(steps):
            r = clipped[t]
            mw = pea_core.mixture_weights(state)
            p, state, event = pea_core.xnas_round(state, -r, experts[mw.indices])
            ledger = record_step(ledger, -float(r @ p), -r, log_gamma_step=event.log_gamma_step)
        final_u = pea_core.mixture_weights(state).full(n)
        survivors = int(state.active.sum())
        b = regret_bound(eta, steps, bound, n, log_gamma_T=ledger.gamma_log)
    elif optimizer == "gd_softmax":
        state = pea_core.init_gd_softmax(n, eta)
        for t in range(steps):
            r = clipped[t]
            p, state = pea_core.gd_softmax_round(state, -r, experts)
            ledger = record_step(ledger, -float(r @ p), -r)
        final_u = state.u
        survivors = n
        b = math.nan
    else:
        raise ValueError(f"unknown optimizer {optimizer!r}")

    correct = int(np.argmax(final_u)) == int(np.argmax(biases))
    return TrialOutcome(correct, ledger.regret, ledger.gamma_T, survivors, n_clipped, b)


def _batch_instances(config: StochasticConfig, axis: str, value):
    biases = np.empty((config.runs, config.n_experts))
    rewards = np.empty((config.steps, config.runs, config.n_experts))
    for k in range(config.runs):
        b, r = sample_instance(substream(config.seed, axis, value, k), config.n_experts, config.sigma_r, config.steps)
        biases[k] = b
        rewards[:, k, :] = r
    return biases, rewards


def run_batch(config: StochasticConfig, optimizer: str, biases: np.ndarray, rewards: np.ndarray) -> dict:
    """All trials of one point at once; arrays are (runs, N) and (steps, runs, N).

    Mirrors ``run_trial`` operation for operation.
    """
    steps, runs, n = rewards.shape
    bound = config.grad_bound
    eta = config.resolved_eta()
    clip_count = np.count_nonzero(np.abs(rewards) > bound, axis=(0, 2))
    log_v = np.zeros((runs, n))
    active = np.ones((runs, n), dtype=bool)
    cum_f = np.zeros(runs)
    cum_r = np.zeros((runs, n))
    gamma_log = np.zeros(runs)
    for t in range(1, steps + 1):
        r = np.clip(rewards[t - 1], -bound, bound)
        masked = np.where(active, log_v, -np.inf)
        m = masked.max(axis=1, keepdims=True)
        u = np.exp(masked - m)
        u /= u.sum(axis=1, keepdims=True)
        p_dot_r = np.einsum("ij,ij->i", u, r)
        cum_f -= p_dot_r
        cum_r += r
        if optimizer == "xnas":
            log_v = np.where(active, log_v + eta * r, log_v)
            if config.wipeout:
                lead = np.where(active, log_v, -np.inf).max(axis=1, keepdims=True)
                log_theta = lead - 2.0 * eta * bound * (steps - t)
                wiped = active & (log_v < log_theta)
                rows = np.flatnonzero(wiped.any(axis=1))
                if rows.size:
                    survivors = active[rows] & ~wiped[rows]
                    lw = _masked_lse(log_v[rows], wiped[rows])
                    ls = _masked_lse(log_v[rows], survivors)
                    gamma_log[rows] += np.log1p(np.exp(lw - ls))
                    active[rows] = survivors
        elif optimizer == "gd_softmax":
            log_v = log_v + eta * u * (r - p_dot_r[:, None])
        else:
            raise ValueError(f"unknown optimizer {optimizer!r}")
    final = np.where(active, log_v, -np.inf)
    correct = final.argmax(axis=1) == biases.argmax(axis=1)
    regret = cum_f + cum_r.max(axis=1)
    out = {
        "correct": correct,
        "regret": regret,
        "gamma_T": np.exp(gamma_log),
        "survivors": active.sum(axis=1),
        "n_clipped": clip_count,
    }
    if optimizer == "xnas":
        out["bound"] = eta * steps * bound**2 / 2 + (math.log(n) - gamma_log) / eta
    return out


def _masked_lse(a: np.ndarray, mask: np.ndarray) -> np.ndarray:
    x = np.where(mask, a, -np.inf)
    m = x.max(axis=1)
    return m + np.log(np.exp(x - m[:, None]).sum(axis=1))


def _point_task(args) -> SweepPoint:
    config, axis, value, optimizer = args
    biases, rewards = _batch_instances(config, axis, value)
    res = run_batch(config, optimizer, biases, rewards)
    regret = res["regret"]
    std_err = float(np.std(regret, ddof=1) / math.sqrt(config.runs)) if config.runs > 1 else 0.0
    slack = res["bound"] - regret if "bound" in res else np.array([math.nan])
    return SweepPoint(
        axis=axis,
        value=value,
        optimizer=optimizer,
        correct_fraction=float(np.mean(res["correct"])),
        mean_regret=float(np.mean(regret)),
        std_err=std_err,
        mean_gamma=float(np.mean(res["gamma_T"])),
        clip_rate=float(np.sum(res["n_clipped"]) / (config.runs * config.steps * config.n_experts)),
        min_slack=float(np.min(slack)),
        runs=config.runs,
    )


def point_config(config: StochasticConfig, axis: str, value) -> StochasticConfig:
    if axis == "N":
        return replace(config, n_experts=int(value))
    if axis == "sigma":
        return replace(config, sigma_r=float(value))
    raise ValueError(f"unknown sweep axis {axis!r}")


def run_sweep(config: StochasticConfig, axis: str, values, optimizers=OPTIMIZERS, workers: int = 1) -> SweepSummary:
    """Aggregate ``config.runs`` trials per (axis value, optimizer).

    Results do not depend on ``workers``: each point derives its own
    substreams and the summary is assembled in a fixed order.
    """
    values = list(values)
    if len(values) < 2:
        raise ValueError("a sweep needs at least two axis points")
    for opt in optimizers:
        if opt not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {opt!r}")
    tasks = [(point_config(config, axis, v), axis, v, opt) for v in values for opt in optimizers]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_point_task, tasks))
    else:
        points = [_point_task(t) for t in tasks]
    return SweepSummary(axis, points)


def fit_residual(x: np.ndarray, y: np.ndarray, basis) -> float:
    """Sum of squared residuals of the one-parameter fit ``y ~ c * basis(x)``."""
    f = basis(np.asarray(x, dtype=float))
    c = float(f @ y) / float(f @ f)
    return float(np.sum((y - c * f) ** 2))
