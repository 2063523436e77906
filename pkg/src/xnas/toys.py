"""Deterministic simplex toys: axis experts under linear and quadratic losses.

Each axis is an expert with a constant one-hot prediction, so the mixture is
the point ``(x, y[, z])`` on the simplex itself. XNAS and GD-with-softmax are
run side by side from the same initial log-weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import pea_core


@dataclass(frozen=True)
class LossPhase:
    name: str
    loss: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    steps: int


def linear_loss(coefficients) -> tuple[Callable, Callable]:
    c = np.asarray(coefficients, dtype=float)
    return (lambda p: float(c @ p)), (lambda p: c.copy())


def quadratic2_loss(center=(1.0, 0.0), weights=(0.5, 0.5)) -> tuple[Callable, Callable]:
    c = np.asarray(center, dtype=float)
    w = np.asarray(weights, dtype=float)
    return (lambda p: float(w @ (p - c) ** 2)), (lambda p: 2 * w * (p - c))


def phase(name: str, loss_and_grad, steps: int) -> LossPhase:
    if steps < 1:
        raise ValueError("phase step counts must be >= 1")
    return LossPhase(name, loss_and_grad[0], loss_and_grad[1], int(steps))


def default_toy3d_schedule() -> list[LossPhase]:
    # l1 = 2z for 30 steps, then l2 = -y - 2z for 90 steps
    return [
        phase("l1", linear_loss([0.0, 0.0, 2.0]), 30),
        phase("l2", linear_loss([0.0, -1.0, -2.0]), 90),
    ]


@dataclass
class Trajectory:
    optimizer: str
    axes: tuple[str, ...]
    steps: list[int] = field(default_factory=list)
    points: list[np.ndarray] = field(default_factory=list)
    updates: list[np.ndarray] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    dist_opt: list[float] = field(default_factory=list)
    wipeouts: list = field(default_factory=list)

    def append(self, step, point, update, loss, dist):
        self.steps.append(step)
        self.points.append(np.asarray(point, dtype=float))
        self.updates.append(np.asarray(update, dtype=float))
        self.losses.append(float(loss))
        self.dist_opt.append(float(dist))

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def final_point(self) -> np.ndarray:
        return self.points[-1]

    def csv_header(self) -> list[str]:
        return (["step", "optimizer"] + [f"u_{a}" for a in self.axes]
                + [f"update_{a}" for a in self.axes] + ["loss", "dist_opt"])

    def csv_rows(self) -> list[list]:
        return [
            [s, self.optimizer, *map(float, pt), *map(float, up), ls, d]
            for s, pt, up, ls, d in zip(self.steps, self.points, self.updates, self.losses, self.dist_opt)
        ]


def grad_alpha_3d(point, loss_gradient) -> np.ndarray:
    """Closed-form d loss / d alpha on the 3-axis simplex.

    ``d_alpha_z = z*((x+y)*dz - x*dx - y*dy)`` and its two symmetric twins.
    """
    x, y, z = map(float, point)
    dx, dy, dz = map(float, loss_gradient)
    return np.array([
        x * ((y + z) * dx - y * dy - z * dz),
        y * ((x + z) * dy - x * dx - z * dz),
        z * ((x + y) * dz - x * dx - y * dy),
    ])


def grad_alpha_2d(x: float, loss_gradient) -> np.ndarray:
    y = 1.0 - x
    dx, dy = map(float, loss_gradient)
    ga = x * y * (dx - dy)
    return np.array([ga, -ga])


def _run_pair(phases, init_alpha, eta, wipeout, grad_bound, optimum, axes):
    n = len(init_alpha)
    experts = np.eye(n)
    horizon = sum(ph.steps for ph in phases)
    optimum = np.asarray(optimum, dtype=float)

    fs = pea_core.init_forecaster(n, eta, grad_bound, horizon, wipeout_enabled=wipeout)
    fs = replace(fs, log_v=np.array(init_alpha, dtype=float))
    gs = pea_core.init_gd_softmax(n, eta, alpha=init_alpha)

    xnas = Trajectory("xnas", axes)
    gd = Trajectory("gd_softmax", axes)
    t = 0
    for ph in phases:
        for _ in range(ph.steps):
            t += 1
            # XNAS: predict -> reward -> EG step -> log -> wipeout
            mw = pea_core.mixture_weights(fs)
            p = mw.full(n)
            rewards = pea_core.rewards_from_gradient(ph.grad(p), experts[mw.indices], grad_bound, indices=mw.indices)
            fs = pea_core.eg_step(fs, rewards)
            u = pea_core.mixture_weights(fs).full(n)
            xnas.append(t, u, _scatter(rewards, n), ph.loss(u), np.linalg.norm(u - optimum))
            fs, ev = pea_core.wipeout(fs)
            if ev.wiped:
                xnas.wipeouts.append(ev)

            # GD with softmax: the update term is the effective reward
            u_prev = gs.u
            g = ph.grad(u_prev)
            eff = pea_core.gd_softmax_effective_rewards(-(experts @ g), u_prev)
            _, gs = pea_core.gd_softmax_round(gs, g, experts)
            u = gs.u
            gd.append(t, u, eff, ph.loss(u), np.linalg.norm(u - optimum))
    return xnas, gd


def _scatter(rewards, n):
    out = np.zeros(n)
    out[rewards.indices] = rewards.values
    return out


def run_toy3d(eta: float = 0.1, wipeout: bool = False, schedule: list[LossPhase] | None = None,
              grad_bound: float = 2.0) -> tuple[Trajectory, Trajectory]:
    """Late-bloomer toy: z is penalised first, then becomes the best axis.

    Distance to optimum is measured to the z vertex, the minimiser of the
    final phase.
    """
    phases = default_toy3d_schedule() if schedule is None else schedule
    return _run_pair(phases, np.zeros(3), eta, wipeout, grad_bound, (0.0, 0.0, 1.0), ("x", "y", "z"))


TOY2D_VARIANTS = ("linear_balanced", "linear_imbalanced", "quadratic")


def run_toy2d(variant: str = "linear_balanced", eta: float = 0.1, steps: int = 50,
              wipeout: bool = False, grad_bound: float = 1.0) -> tuple[Trajectory, Trajectory]:
    if variant == "linear_balanced":
        init, lg = (0.0, 0.0), linear_loss([-1.0, 0.0])
    elif variant == "linear_imbalanced":
        init, lg = (0.0, 5.0), linear_loss([-1.0, 0.0])
    elif variant == "quadratic":
        init, lg = (0.0, 0.0), quadratic2_loss()
    else:
        raise ValueError(f"unknown toy2d variant {variant!r}; expected one of {TOY2D_VARIANTS}")
    phases = [phase(variant, lg, steps)]
    return _run_pair(phases, np.array(init), eta, wipeout, grad_bound, (1.0, 0.0), ("x", "y"))
