"""Single-forecaster state machine for prediction with expert advice.

Two update rules live here:

* the exponentiated-gradient round with wipeout (``xnas_round``), and
* gradient descent on softmax log-weights (``gd_softmax_round``), the
  baseline used by DARTS-style searches.

Weights are held in the log domain. ``ForecasterState.log_v[i]`` is
``ln v_i`` for every original expert; entries of wiped experts are frozen at
the value they had when they were removed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence, Union

import numpy as np

GradientLike = Union[np.ndarray, Sequence[float], float, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class ForecasterState:
    log_v: np.ndarray
    active: np.ndarray
    step: int
    horizon: int
    eta: float
    grad_bound: float
    zeta: float = 1.0
    wipeout_enabled: bool = True
    n_clipped: int = 0

    @property
    def n_experts(self) -> int:
        return self.log_v.shape[0]

    @property
    def active_indices(self) -> np.ndarray:
        return self.active.nonzero()[0]

    @property
    def weights_v(self) -> np.ndarray:
        """Unnormalized weights of all original experts (may under/overflow)."""
        return np.exp(self.log_v)

    def check(self) -> None:
        if not self.active.any():
            raise AssertionError("active set is empty")
        if not np.all(np.isfinite(self.log_v[self.active])):
            raise AssertionError("non-finite weight on an active expert")
        if self.step > self.horizon:
            raise AssertionError("step exceeds horizon")


@dataclass(frozen=True)
class RewardVector:
    """Rewards for one round, aligned with ``indices`` (expert ids)."""

    indices: np.ndarray
    values: np.ndarray
    n_clipped: int = 0


@dataclass(frozen=True)
class MixtureWeights:
    indices: np.ndarray
    u: np.ndarray

    def full(self, n_experts: int) -> np.ndarray:
        out = np.zeros(n_experts)
        out[self.indices] = self.u
        return out


@dataclass(frozen=True)
class WipeoutEvent:
    step: int
    wiped: frozenset
    log_threshold: float
    log_gamma_step: float = 0.0

    @property
    def threshold(self) -> float:
        return float(np.exp(self.log_threshold))

    @property
    def gamma_step(self) -> float:
        return float(np.exp(self.log_gamma_step))


@dataclass(frozen=True)
class GdSoftmaxState:
    alpha: np.ndarray
    eta: float
    weight_decay: float = 0.0
    step: int = 0
    n_clipped: int = 0

    @property
    def u(self) -> np.ndarray:
        return softmax(self.alpha)


def logsumexp(a: np.ndarray) -> float:
    m = a.max()
    return float(m + np.log(np.exp(a - m).sum()))


def softmax(a: np.ndarray) -> np.ndarray:
    z = np.exp(a - a.max())
    return z / z.sum()


def init_forecaster(
    n_experts: int,
    eta: float,
    grad_bound: float,
    horizon: int,
    zeta: float = 1.0,
    wipeout_enabled: bool = True,
) -> ForecasterState:
    if int(n_experts) < 1:
        raise ValueError(f"n_experts must be >= 1, got {n_experts}")
    if not eta > 0 or not np.isfinite(eta):
        raise ValueError(f"eta must be positive, got {eta}")
    if not grad_bound > 0 or not np.isfinite(grad_bound):
        raise ValueError(f"grad_bound must be positive, got {grad_bound}")
    if int(horizon) < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if not 0 < zeta <= 1:
        raise ValueError(f"zeta must lie in (0, 1], got {zeta}")
    n = int(n_experts)
    return ForecasterState(
        log_v=np.zeros(n),
        active=np.ones(n, dtype=bool),
        step=0,
        horizon=int(horizon),
        eta=float(eta),
        grad_bound=float(grad_bound),
        zeta=float(zeta),
        wipeout_enabled=bool(wipeout_enabled),
    )


def mixture_weights(state: ForecasterState) -> MixtureWeights:
    idx = state.active_indices
    a = state.log_v[idx]
    return MixtureWeights(indices=idx, u=np.exp(a - logsumexp(a)))


def _stack_predictions(expert_predictions, n: int) -> np.ndarray:
    f = np.asarray(expert_predictions, dtype=float)
    if f.ndim == 2 and f.shape[0] == n:
        return f
    if f.ndim == 1:
        f = f[:, None]
    if f.shape[0] != n:
        raise ValueError(f"expected {n} expert predictions, got {f.shape[0]}")
    return f.reshape(n, -1)


def _mix(u: np.ndarray, expert_predictions) -> np.ndarray:
    if isinstance(expert_predictions, np.ndarray) and expert_predictions.ndim <= 2:
        if expert_predictions.shape[0] != len(u):
            raise ValueError(f"expected {len(u)} expert predictions, got {expert_predictions.shape[0]}")
        return u @ expert_predictions
    preds = [np.asarray(p, dtype=float) for p in expert_predictions]
    if len(preds) != len(u):
        raise ValueError(f"expected {len(u)} expert predictions, got {len(preds)}")
    shape = preds[0].shape
    if any(p.shape != shape for p in preds):
        raise ValueError("expert predictions differ in dimension")
    f = np.stack(preds).reshape(len(u), -1)
    return (u @ f).reshape(shape)


def predict(state: ForecasterState, expert_predictions) -> np.ndarray:
    """Convex mixture of the active experts' predictions (one per active expert)."""
    return _mix(mixture_weights(state).u, expert_predictions)


def rewards_from_gradient(
    loss_gradient,
    expert_predictions,
    grad_bound: float,
    indices: Sequence[int] | None = None,
) -> RewardVector:
    """``R_i = -grad . f_i`` clipped to ``[-grad_bound, grad_bound]``."""
    g = np.asarray(loss_gradient, dtype=float).ravel()
    if not np.isfinite(g).all():
        raise ValueError("loss gradient has non-finite entries")
    f = _stack_predictions(expert_predictions, len(expert_predictions))
    if f.shape[1] != g.shape[0]:
        raise ValueError(f"gradient dimension {g.shape[0]} != prediction dimension {f.shape[1]}")
    raw = -(f @ g)
    values = np.minimum(np.maximum(raw, -grad_bound), grad_bound)
    n_clipped = int(np.count_nonzero(values != raw))
    if indices is None:
        indices = np.arange(len(values))
    return RewardVector(np.asarray(indices, dtype=int), values, n_clipped)


def eg_step(state: ForecasterState, rewards: RewardVector) -> ForecasterState:
    if state.step >= state.horizon:
        raise ValueError(f"horizon {state.horizon} already reached")
    idx = np.asarray(rewards.indices, dtype=int)
    on_active = state.active[idx]
    if not on_active.all():
        bad = sorted(int(i) for i in idx[~on_active])
        raise ValueError(f"reward supplied for wiped expert(s) {bad}")
    # every index is active, so distinct indices numbering |active| cover it exactly
    covered = np.zeros(state.active.shape, dtype=bool)
    covered[idx] = True
    if len(idx) != state.active.sum() or covered.sum() != len(idx):
        raise ValueError("rewards must cover exactly the active set")
    log_v = state.log_v.copy()
    log_v[idx] += state.eta * np.asarray(rewards.values, dtype=float)
    return ForecasterState(log_v, state.active, state.step + 1, state.horizon, state.eta, state.grad_bound,
                           state.zeta, state.wipeout_enabled, state.n_clipped + rewards.n_clipped)


def log_wipeout_threshold(state: ForecasterState) -> float:
    lead = state.log_v[state.active].max()
    return float(lead - 2.0 * state.eta * state.grad_bound * (state.horizon - state.step) * state.zeta)


def wipeout(state: ForecasterState) -> tuple[ForecasterState, WipeoutEvent]:
    log_theta = log_wipeout_threshold(state)
    if not state.wipeout_enabled:
        return state, WipeoutEvent(state.step, frozenset(), log_theta, 0.0)
    # strict inequality: an expert sitting exactly on the threshold survives
    wiped_mask = state.active & (state.log_v < log_theta)
    if not wiped_mask.any():
        return state, WipeoutEvent(state.step, frozenset(), log_theta, 0.0)
    survivors = state.active & ~wiped_mask
    log_gamma = float(np.log1p(np.exp(logsumexp(state.log_v[wiped_mask]) - logsumexp(state.log_v[survivors]))))
    event = WipeoutEvent(
        step=state.step,
        wiped=frozenset(int(i) for i in np.flatnonzero(wiped_mask)),
        log_threshold=log_theta,
        log_gamma_step=log_gamma,
    )
    return replace(state, active=survivors), event


def resolve_gradient(loss_gradient: GradientLike, p: np.ndarray) -> np.ndarray:
    if callable(loss_gradient):
        return np.asarray(loss_gradient(p), dtype=float)
    return np.asarray(loss_gradient, dtype=float)


def xnas_round(
    state: ForecasterState,
    loss_gradient: GradientLike,
    expert_predictions,
) -> tuple[np.ndarray, ForecasterState, WipeoutEvent]:
    """Predict, collect rewards, take the EG step, then wipe out.

    ``loss_gradient`` is either the gradient at the prediction or a callable
    mapping the prediction to it. The returned prediction is the one made with
    the pre-update weights.
    """
    mw = mixture_weights(state)
    p = _mix(mw.u, expert_predictions)
    g = resolve_gradient(loss_gradient, p)
    rewards = rewards_from_gradient(g, expert_predictions, state.grad_bound, indices=mw.indices)
    state = eg_step(state, rewards)
    state, event = wipeout(state)
    return p, state, event


def init_gd_softmax(n_experts: int, eta: float, weight_decay: float = 0.0, alpha=None) -> GdSoftmaxState:
    if int(n_experts) < 1:
        raise ValueError(f"n_experts must be >= 1, got {n_experts}")
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    if weight_decay < 0:
        raise ValueError(f"weight_decay must be nonnegative, got {weight_decay}")
    a = np.zeros(int(n_experts)) if alpha is None else np.array(alpha, dtype=float)
    if a.shape != (int(n_experts),):
        raise ValueError("alpha has the wrong shape")
    return GdSoftmaxState(alpha=a, eta=float(eta), weight_decay=float(weight_decay))


def gd_softmax_effective_rewards(rewards, u) -> np.ndarray:
    """Rewards as seen through the softmax: ``u_i * (R_i - sum_j u_j R_j)``.

    Equals ``-d loss / d alpha_i`` when ``R_i = -grad . f_i``.
    """
    r = np.asarray(getattr(rewards, "values", rewards), dtype=float)
    u = np.asarray(getattr(u, "u", u), dtype=float)
    if r.shape != u.shape:
        raise ValueError("rewards and mixture weights differ in length")
    return u * (r - u @ r)


def gd_softmax_round(
    state: GdSoftmaxState,
    loss_gradient: GradientLike,
    expert_predictions,
    grad_bound: float | None = None,
) -> tuple[np.ndarray, GdSoftmaxState]:
    """One descent step on the log-weights. No wipeout.

    With ``grad_bound`` set, raw rewards are clipped as in the XNAS round.
    """
    u = softmax(state.alpha)
    p = _mix(u, expert_predictions)
    g = resolve_gradient(loss_gradient, p)
    bound = np.inf if grad_bound is None else grad_bound
    rewards = rewards_from_gradient(g, expert_predictions, bound)
    eff = gd_softmax_effective_rewards(rewards.values, u)
    alpha = state.alpha + state.eta * eff - state.eta * state.weight_decay * state.alpha
    return p, replace(state, alpha=alpha, step=state.step + 1, n_clipped=state.n_clipped + rewards.n_clipped)
