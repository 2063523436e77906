"""Per-cell-type learning rates from the search schedule.

Each cell type sees ``d * epochs * replications`` reward feedbacks, and its
rate is the regret-optimal one for that horizon.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .regret import optimal_eta


@dataclass(frozen=True)
class SearchSchedule:
    validation_size: int
    epochs: int
    replications: dict = field(default_factory=dict)
    grad_bound: float = 1.0
    experts_per_forecaster: int = 8

    def __post_init__(self):
        counts = [self.validation_size, self.epochs, self.experts_per_forecaster, *self.replications.values()]
        if any(int(c) < 1 for c in counts):
            raise ValueError("all counts in a search schedule must be >= 1")
        if not self.replications:
            raise ValueError("at least one cell type is required")
        if not self.grad_bound > 0:
            raise ValueError("grad_bound must be positive")

    @classmethod
    def from_dict(cls, cfg: dict) -> "SearchSchedule":
        known = {"validation_size", "epochs", "replications", "grad_bound", "experts_per_forecaster"}
        unknown = set(cfg) - known
        if unknown:
            raise ValueError(f"unknown schedule keys: {sorted(unknown)}")
        missing = {"validation_size", "epochs", "replications"} - set(cfg)
        if missing:
            raise ValueError(f"missing schedule keys: {sorted(missing)}")
        return cls(
            validation_size=int(cfg["validation_size"]),
            epochs=int(cfg["epochs"]),
            replications={str(k): int(v) for k, v in cfg["replications"].items()},
            grad_bound=float(cfg.get("grad_bound", 1.0)),
            experts_per_forecaster=int(cfg.get("experts_per_forecaster", 8)),
        )

    def to_dict(self) -> dict:
        return {
            "validation_size": self.validation_size,
            "epochs": self.epochs,
            "replications": dict(self.replications),
            "grad_bound": self.grad_bound,
            "experts_per_forecaster": self.experts_per_forecaster,
        }


# 50:50 split of the 50k CIFAR-10 training images, 50 epochs, 6 normal / 2 reduction cells
CIFAR10_SCHEDULE = SearchSchedule(
    validation_size=25000,
    epochs=50,
    replications={"normal": 6, "reduction": 2},
    grad_bound=1.0,
    experts_per_forecaster=8,
)


def effective_horizon(schedule: SearchSchedule, cell_type: str) -> int:
    try:
        r = schedule.replications[cell_type]
    except KeyError:
        raise KeyError(f"unknown cell type {cell_type!r}") from None
    return schedule.validation_size * schedule.epochs * r


def plan(schedule: SearchSchedule) -> dict[str, float]:
    return {
        c: optimal_eta(effective_horizon(schedule, c), schedule.grad_bound, schedule.experts_per_forecaster)[0]
        for c in schedule.replications
    }


def plan_rows(schedule: SearchSchedule) -> list[tuple[str, int, float]]:
    rates = plan(schedule)
    return [(c, effective_horizon(schedule, c), rates[c]) for c in schedule.replications]
