"""Toy differentiable cell search over linear experts.

A cell has ``n_inputs`` input nodes followed by ``n_nodes`` intermediate nodes.
Every pair ``(j, k)`` with ``j < k`` and ``k`` intermediate is an edge holding a
forecaster over the expert menu::

    identity | scale (0.1 * x) | orth_a | orth_b | linear (trainable)

``orth_a``/``orth_b`` are fixed random orthogonal maps drawn per edge.
Intermediate nodes sum their incoming forecaster predictions, and the cell
output is a fixed orthogonal readout of the sum of the intermediate nodes.

Targets come from a planted discrete cell built on the same fixed maps, plus
Gaussian noise. A search alternates a descent step on the trainable maps
(train batch) with one architecture round per forecaster (validation batch).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import pea_core
from .regret import optimal_eta

EXPERT_KINDS = ("identity", "scale", "orth_a", "orth_b", "linear")
SCALE = 0.1
# kinds a planted cell may use; the zeroish scale and the free linear map have no fixed target
PLANTED_KINDS = ("identity", "orth_a", "orth_b")
# the zeroish expert stands for "no connection" when ranking edges
DEFAULT_IGNORE = ("scale",)


def _orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


@dataclass
class CellSpace:
    """Fixed (non-trainable) parts of the search space."""

    n_nodes: int
    feature_dim: int
    n_inputs: int
    fixed: dict
    readout: np.ndarray

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(j, k) for k in self.intermediate for j in range(k)]

    @property
    def intermediate(self) -> range:
        return range(self.n_inputs, self.n_inputs + self.n_nodes)

    def incoming(self, k: int) -> list[tuple[int, int]]:
        return [(j, k) for j in range(k)]


def make_space(n_nodes: int = 2, feature_dim: int = 8, n_inputs: int = 2, seed: int = 0) -> CellSpace:
    if n_nodes < 1 or feature_dim < 1 or n_inputs not in (1, 2):
        raise ValueError("need n_nodes >= 1, feature_dim >= 1 and 1 or 2 inputs")
    rng = np.random.default_rng(seed)
    d = feature_dim
    space = CellSpace(n_nodes, d, n_inputs, {}, _orthogonal(rng, d))
    for e in space.edges:
        space.fixed[e] = {
            "identity": np.eye(d),
            "scale": SCALE * np.eye(d),
            "orth_a": _orthogonal(rng, d),
            "orth_b": _orthogonal(rng, d),
        }
    return space


@dataclass(frozen=True)
class DiscreteCell:
    """Two retained incoming edges per intermediate node, one expert each."""

    nodes: dict  # node -> tuple of (source, expert kind), sorted by source

    def __post_init__(self):
        for k, edges in self.nodes.items():
            if len(edges) != 2:
                raise ValueError(f"node {k} must keep exactly 2 edges, has {len(edges)}")
            if len({s for s, _ in edges}) != 2:
                raise ValueError(f"node {k} keeps the same source twice")

    @property
    def connections(self) -> list[tuple[int, int, str]]:
        return [(s, k, kind) for k in sorted(self.nodes) for s, kind in self.nodes[k]]

    def to_json(self) -> dict:
        return {
            "nodes": [
                {"node": k, "edges": [{"source": s, "expert": kind} for s, kind in self.nodes[k]]}
                for k in sorted(self.nodes)
            ]
        }

    @classmethod
    def from_json(cls, data: dict) -> "DiscreteCell":
        return cls({int(n["node"]): tuple((int(e["source"]), str(e["expert"])) for e in n["edges"])
                    for n in data["nodes"]})


def cell_depth(cell: DiscreteCell) -> float:
    """Mean source index over the retained connections (inputs 0, 1; nodes 2, ...)."""
    sources = [s for s, _, _ in cell.connections]
    return float(np.mean(sources))


@dataclass
class CellGraph:
    space: CellSpace
    optimizer: str
    arch: dict  # edge -> ForecasterState | GdSoftmaxState
    linear: dict  # edge -> trainable D x D map
    wipe_log: list = field(default_factory=list)

    @property
    def n_experts(self) -> int:
        return len(EXPERT_KINDS)

    def mixture(self, edge) -> np.ndarray:
        st = self.arch[edge]
        if isinstance(st, pea_core.ForecasterState):
            return pea_core.mixture_weights(st).full(st.n_experts)
        return st.u

    def expert_maps(self, edge) -> list[np.ndarray]:
        fx = self.space.fixed[edge]
        return [fx["identity"], fx["scale"], fx["orth_a"], fx["orth_b"], self.linear[edge]]

    def survivors_total(self) -> int:
        return int(sum(
            st.active.sum() if isinstance(st, pea_core.ForecasterState) else len(st.alpha)
            for st in self.arch.values()
        ))


def init_cell(space: CellSpace, optimizer: str = "xnas", *, horizon: int = 1, eta: float = 0.1,
              grad_bound: float = 1.0, weight_decay: float = 0.0, wipeout: bool = True,
              zeta: float = 1.0, rng: np.random.Generator | None = None) -> CellGraph:
    rng = np.random.default_rng(0) if rng is None else rng
    n = len(EXPERT_KINDS)
    arch = {}
    for e in space.edges:
        if optimizer == "xnas":
            arch[e] = pea_core.init_forecaster(n, eta, grad_bound, horizon, zeta=zeta, wipeout_enabled=wipeout)
        elif optimizer == "gd_softmax":
            arch[e] = pea_core.init_gd_softmax(n, eta, weight_decay)
        else:
            raise ValueError(f"unknown architecture optimizer {optimizer!r}")
    # trainable maps start as random rotations: as poor as any fixed map until trained
    linear = {e: _orthogonal(rng, space.feature_dim) for e in space.edges}
    return CellGraph(space, optimizer, arch, linear)


def _inputs(space: CellSpace, inputs) -> list[np.ndarray]:
    xs = [np.atleast_2d(np.asarray(x, dtype=float)) for x in inputs]
    if len(xs) != space.n_inputs:
        raise ValueError(f"expected {space.n_inputs} inputs, got {len(xs)}")
    for x in xs:
        if x.shape[-1] != space.feature_dim:
            raise ValueError(f"input dimension {x.shape[-1]} != feature_dim {space.feature_dim}")
    return xs


def forward(cell: CellGraph, inputs, mixtures: dict | None = None):
    """Cell output for a batch; ``mixtures`` overrides per-edge weights u.

    Returns ``(output, cache)``; the cache feeds ``backward``.
    """
    space = cell.space
    nodes = _inputs(space, inputs)
    mats = {}
    for k in space.intermediate:
        acc = np.zeros_like(nodes[0])
        for e in space.incoming(k):
            u = cell.mixture(e) if mixtures is None or e not in mixtures else np.asarray(mixtures[e], float)
            m = sum((ui * a for ui, a in zip(u, cell.expert_maps(e)) if ui != 0.0), np.zeros((space.feature_dim,) * 2))
            mats[e] = (u, m)
            acc = acc + nodes[e[0]] @ np.asarray(m).T
        nodes.append(acc)
    total = sum(nodes[k] for k in space.intermediate)
    out = total @ space.readout.T
    return out, {"nodes": nodes, "mats": mats}


def loss_value(out: np.ndarray, target: np.ndarray) -> float:
    return 0.5 * float(np.sum((out - target) ** 2)) / out.shape[0]


def backward(cell: CellGraph, cache: dict, out: np.ndarray, target: np.ndarray):
    """Gradients of the batch loss w.r.t. each edge's prediction and trainable map."""
    space = cell.space
    nodes, mats = cache["nodes"], cache["mats"]
    d_out = (out - target) / out.shape[0]
    d_total = d_out @ space.readout
    d_node = {k: d_total.copy() for k in space.intermediate}
    d_pred, d_lin = {}, {}
    for k in reversed(space.intermediate):
        for e in space.incoming(k):
            d_pred[e] = d_node[k]
            j = e[0]
            u, m = mats[e]
            d_lin[e] = u[-1] * d_pred[e].T @ nodes[j]
            if j in d_node:
                d_node[j] = d_node[j] + d_pred[e] @ np.asarray(m)
    return d_pred, d_lin


def expert_predictions(cell: CellGraph, edge, x: np.ndarray) -> list[np.ndarray]:
    return [x @ a.T for a in cell.expert_maps(edge)]


def arch_round(cell: CellGraph, inputs, target) -> float:
    """One architecture round per forecaster on a validation batch; returns the loss."""
    out, cache = forward(cell, inputs)
    val = loss_value(out, target)
    if not math.isfinite(val):
        raise FloatingPointError("non-finite validation loss")
    d_pred, _ = backward(cell, cache, out, target)
    nodes = cache["nodes"]
    for e in cell.space.edges:
        st = cell.arch[e]
        preds = expert_predictions(cell, e, nodes[e[0]])
        g = d_pred[e].ravel()
        if isinstance(st, pea_core.ForecasterState):
            active = [preds[i].ravel() for i in st.active_indices]
            _, st, event = pea_core.xnas_round(st, g, active)
            if event.wiped:
                cell.wipe_log.append((e, event))
        else:
            _, st = pea_core.gd_softmax_round(st, g, [p.ravel() for p in preds], grad_bound=None)
        cell.arch[e] = st
    return val


def weight_step(cell: CellGraph, inputs, target, lr: float) -> float:
    out, cache = forward(cell, inputs)
    val = loss_value(out, target)
    _, d_lin = backward(cell, cache, out, target)
    for e, g in d_lin.items():
        cell.linear[e] = cell.linear[e] - lr * g
    return val


def discretize(cell: CellGraph, ignore_kinds=DEFAULT_IGNORE) -> DiscreteCell:
    """Keep the two strongest incoming edges per node and each edge's strongest expert.

    Edge strength is the largest mixture weight among experts whose kind is
    not in ``ignore_kinds``. Ties go to the lower source index, then the lower
    expert index.
    """
    keep = [i for i, kind in enumerate(EXPERT_KINDS) if kind not in ignore_kinds]
    nodes = {}
    for k in cell.space.intermediate:
        incoming = cell.space.incoming(k)
        if len(incoming) < 2:
            raise ValueError(f"node {k} has fewer than 2 incoming edges")
        scored = []
        for e in incoming:
            u = cell.mixture(e)[keep]
            best = int(np.argmax(u))
            scored.append((-float(u[best]), e[0], EXPERT_KINDS[keep[best]]))
        scored.sort(key=lambda s: (s[0], s[1]))
        nodes[k] = tuple(sorted((src, kind) for _, src, kind in scored[:2]))
    return DiscreteCell(nodes)


def mean_normalized_entropy(cell: CellGraph) -> float:
    n = cell.n_experts
    if n < 2:
        raise ValueError("normalized entropy needs at least 2 experts")
    return float(np.mean([normalized_entropy(cell.mixture(e)) for e in cell.space.edges]))


def normalized_entropy(u) -> float:
    u = np.asarray(u, dtype=float)
    if len(u) < 2:
        raise ValueError("normalized entropy needs at least 2 experts")
    nz = u[u > 0]
    return float(-np.sum(nz * np.log(nz)) / math.log(len(u)))


def random_planted_cell(space: CellSpace, rng: np.random.Generator) -> DiscreteCell:
    nodes = {}
    for k in space.intermediate:
        srcs = sorted(rng.choice(k, size=2, replace=False).tolist())
        nodes[k] = tuple((int(s), str(PLANTED_KINDS[rng.integers(len(PLANTED_KINDS))])) for s in srcs)
    return DiscreteCell(nodes)


def discrete_forward(space: CellSpace, cell: DiscreteCell, inputs) -> np.ndarray:
    nodes = _inputs(space, inputs)
    for k in space.intermediate:
        acc = np.zeros_like(nodes[0])
        for s, kind in cell.nodes[k]:
            acc = acc + nodes[s] @ space.fixed[(s, k)][kind].T
        nodes.append(acc)
    return sum(nodes[k] for k in space.intermediate) @ space.readout.T


@dataclass(frozen=True)
class SearchConfig:
    n_nodes: int = 2
    feature_dim: int = 8
    n_samples: int = 512
    batch_size: int = 32
    epochs: int = 60
    noise: float = 0.05
    optimizer: str = "xnas"
    eta_arch: float | str = "auto"
    eta_w: float = 0.05
    weight_decay: float = 0.0
    grad_bound: float = 1.0
    wipeout: bool = True
    zeta: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 2 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("n_samples, batch_size and epochs must be positive")
        if self.optimizer not in ("xnas", "gd_softmax"):
            raise ValueError(f"unknown architecture optimizer {self.optimizer!r}")
        if self.weight_decay < 0 or self.noise < 0:
            raise ValueError("weight_decay and noise must be nonnegative")

    @property
    def n_val(self) -> int:
        return self.n_samples // 2

    @property
    def batches_per_epoch(self) -> int:
        return max(1, self.n_val // self.batch_size)

    @property
    def horizon(self) -> int:
        return self.epochs * self.batches_per_epoch

    def resolved_eta(self) -> float:
        if self.eta_arch == "auto":
            return optimal_eta(self.horizon, self.grad_bound, len(EXPERT_KINDS))[0]
        return float(self.eta_arch)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, cfg: dict) -> "SearchConfig":
        unknown = set(cfg) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown cell-search keys: {sorted(unknown)}")
        return cls(**cfg)


@dataclass
class SearchResult:
    config: SearchConfig
    planted: DiscreteCell
    found: DiscreteCell
    cell: CellGraph
    epochs: list = field(default_factory=list)  # (epoch, val_loss, mean_entropy, survivors_total)

    @property
    def recovered(self) -> bool:
        return self.found == self.planted

    @property
    def depth(self) -> float:
        return cell_depth(self.found)

    def summary_json(self) -> dict:
        return {
            "planted": self.planted.to_json(),
            "found": self.found.to_json(),
            "recovered": self.recovered,
            "depth": self.depth,
            "planted_depth": cell_depth(self.planted),
            "final_mean_entropy": self.epochs[-1][2] if self.epochs else None,
        }


def make_problem(config: SearchConfig):
    """Space, planted cell and the train/validation split for a seed."""
    ss = np.random.SeedSequence(config.seed)
    s_space, s_plant, s_data, s_init, s_order = ss.spawn(5)
    space = make_space(config.n_nodes, config.feature_dim, 2, seed=np.random.default_rng(s_space).integers(2**63))
    planted = random_planted_cell(space, np.random.default_rng(s_plant))
    drng = np.random.default_rng(s_data)
    xs = [drng.standard_normal((config.n_samples, config.feature_dim)) for _ in range(space.n_inputs)]
    y = discrete_forward(space, planted, xs) + config.noise * drng.standard_normal((config.n_samples, config.feature_dim))
    half = config.n_samples // 2
    train = ([x[:half] for x in xs], y[:half])
    val = ([x[half:] for x in xs], y[half:])
    return space, planted, train, val, np.random.default_rng(s_init), np.random.default_rng(s_order)


def run_search(config: SearchConfig) -> SearchResult:
    space, planted, train, val, init_rng, order_rng = make_problem(config)
    cell = init_cell(space, config.optimizer, horizon=config.horizon, eta=config.resolved_eta(),
                     grad_bound=config.grad_bound, weight_decay=config.weight_decay,
                     wipeout=config.wipeout, zeta=config.zeta, rng=init_rng)
    result = SearchResult(config, planted, planted, cell)
    bs = config.batch_size
    n_train = len(train[1])
    for epoch in range(1, config.epochs + 1):
        t_perm = order_rng.permutation(n_train)
        v_perm = order_rng.permutation(config.n_val)
        for b in range(config.batches_per_epoch):
            ti = t_perm[(b * bs) % n_train:][:bs]
            vi = v_perm[b * bs:(b + 1) * bs]
            weight_step(cell, [x[ti] for x in train[0]], train[1][ti], config.eta_w)
            arch_round(cell, [x[vi] for x in val[0]], val[1][vi])
        out, _ = forward(cell, val[0])
        result.epochs.append((epoch, loss_value(out, val[1]), mean_normalized_entropy(cell), cell.survivors_total()))
    result.found = discretize(cell)
    return result


def entropy_vs_weight_decay(template: SearchConfig, lambdas) -> list[tuple[float, float]]:
    """Final mean normalized entropy of a GD-with-softmax search per weight decay."""
    rows = []
    for lam in lambdas:
        res = run_search(replace(template, optimizer="gd_softmax", weight_decay=float(lam)))
        rows.append((float(lam), res.epochs[-1][2]))
    return rows
