"""Regret accounting, wipeout-factor aggregation and the XNAS regret bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class UndefinedLearningRateError(ValueError):
    """Raised when the optimal rate is undefined (a single expert)."""


@dataclass(frozen=True)
class RegretLedger:
    n_experts: int
    forecaster_cumloss: float = 0.0
    expert_cumloss: np.ndarray = field(default=None)
    aux_forecaster: float = 0.0
    aux_expert: np.ndarray = field(default=None)
    gamma_log: float = 0.0
    steps: int = 0

    def __post_init__(self):
        if self.expert_cumloss is None:
            object.__setattr__(self, "expert_cumloss", np.zeros(self.n_experts))
        if self.aux_expert is None:
            object.__setattr__(self, "aux_expert", np.zeros(self.n_experts))

    @property
    def regret(self) -> float:
        # minimum over every original expert, wiped or not
        return float(self.forecaster_cumloss - np.min(self.expert_cumloss))

    @property
    def aux_regret(self) -> float:
        return float(self.aux_forecaster - np.min(self.aux_expert))

    @property
    def gamma_T(self) -> float:
        return math.exp(self.gamma_log)


@dataclass(frozen=True)
class BoundReport:
    regret: float
    bound: float
    eta_used: float
    gamma_T: float

    @property
    def slack(self) -> float:
        return self.bound - self.regret

    def csv_row(self, trial_id, n_experts: int, horizon: int) -> list:
        return [trial_id, n_experts, horizon, self.eta_used, self.gamma_T, self.regret, self.bound, self.slack]


BOUND_CSV_HEADER = ["trial_id", "N", "T", "eta", "gamma_T", "regret", "bound", "slack"]


def new_ledger(n_experts: int) -> RegretLedger:
    return RegretLedger(n_experts=int(n_experts))


def record_step(
    ledger: RegretLedger,
    forecaster_loss: float,
    expert_losses,
    gamma_step: float = 1.0,
    *,
    aux_forecaster_loss: float | None = None,
    aux_expert_losses=None,
    log_gamma_step: float | None = None,
) -> RegretLedger:
    """Advance the ledger by one round.

    ``expert_losses`` holds one loss per original expert; wiped experts keep
    accruing the loss they would have incurred. The auxiliary (linearised)
    losses default to the true losses, which is exact for linear losses.
    ``log_gamma_step`` may be given instead of ``gamma_step`` for precision.
    """
    losses = np.asarray(expert_losses, dtype=float)
    if losses.shape != (ledger.n_experts,):
        raise ValueError(f"expected {ledger.n_experts} expert losses, got shape {losses.shape}")
    if not (math.isfinite(forecaster_loss) and np.isfinite(losses).all()):
        raise ValueError("non-finite loss")
    if log_gamma_step is None:
        if not gamma_step >= 1.0:
            raise ValueError(f"gamma_step must be >= 1, got {gamma_step}")
        log_gamma_step = math.log(gamma_step)
    elif log_gamma_step < 0:
        raise ValueError(f"log_gamma_step must be >= 0, got {log_gamma_step}")
    aux_f = forecaster_loss if aux_forecaster_loss is None else aux_forecaster_loss
    aux_e = losses if aux_expert_losses is None else np.asarray(aux_expert_losses, dtype=float)
    return RegretLedger(
        n_experts=ledger.n_experts,
        forecaster_cumloss=ledger.forecaster_cumloss + float(forecaster_loss),
        expert_cumloss=ledger.expert_cumloss + losses,
        aux_forecaster=ledger.aux_forecaster + float(aux_f),
        aux_expert=ledger.aux_expert + aux_e,
        gamma_log=ledger.gamma_log + float(log_gamma_step),
        steps=ledger.steps + 1,
    )


def regret_bound(eta: float, horizon: int, grad_bound: float, n_experts: int, gamma_T: float = 1.0,
                 *, log_gamma_T: float | None = None) -> float:
    """``eta*T*L^2/2 + ln(N)/eta - ln(gamma_T)/eta``."""
    if not (eta > 0 and horizon > 0 and grad_bound > 0 and n_experts >= 1):
        raise ValueError("eta, horizon, grad_bound and n_experts must be positive")
    if log_gamma_T is None:
        if not gamma_T >= 1.0:
            raise ValueError(f"gamma_T must be >= 1, got {gamma_T}")
        log_gamma_T = math.log(gamma_T)
    if log_gamma_T < 0:
        raise ValueError("gamma_T must be >= 1")
    if log_gamma_T > 0 and log_gamma_T >= math.log(n_experts):
        raise ValueError(f"gamma_T must be < N = {n_experts}")
    return eta * horizon * grad_bound**2 / 2 + (math.log(n_experts) - log_gamma_T) / eta


def optimal_eta(horizon: int, grad_bound: float, n_experts: int) -> tuple[float, float]:
    """Rate minimising the gamma-free part of the bound, and the resulting regret cap."""
    if not (horizon > 0 and grad_bound > 0):
        raise ValueError("horizon and grad_bound must be positive")
    if n_experts < 2:
        raise UndefinedLearningRateError("optimal learning rate is undefined for a single expert (ln 1 = 0)")
    log_n = math.log(n_experts)
    eta = math.sqrt(2 * log_n / (horizon * grad_bound**2))
    cap = grad_bound * math.sqrt(2 * horizon * log_n)
    return eta, cap


def bound_report(ledger: RegretLedger, eta: float, horizon: int, grad_bound: float) -> BoundReport:
    bound = regret_bound(eta, horizon, grad_bound, ledger.n_experts, log_gamma_T=ledger.gamma_log)
    return BoundReport(regret=ledger.regret, bound=bound, eta_used=eta, gamma_T=ledger.gamma_T)
