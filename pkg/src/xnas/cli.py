"""Command-line entry point.

Every subcommand resolves its full configuration (defaults < ``--config``
file < explicit flags), writes it into ``manifest.json`` in the output
directory and stamps each CSV with the manifest hash. A manifest file may be
passed back through ``--config`` to reproduce a run.

Exit codes: 0 success, 1 usage/config error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import cell_space, lr_plan, montecarlo, toys
from .io import ConfigError, Manifest, OutputDir, load_json_config
from .verify import run_verify
from .regret import BOUND_CSV_HEADER

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2

DEFAULTS = {
    "toy3d": {"eta": 0.1, "wipeout": False, "grad_bound": 2.0},
    "toy2d": {"variant": "linear_balanced", "eta": 0.1, "steps": 50, "wipeout": False, "grad_bound": 1.0},
    "stochastic": {
        "n_list": [2, 4, 8, 16, 32], "sigma_list": [], "runs": 1000, "steps": 1000, "seed": 0,
        "optimizers": list(montecarlo.OPTIMIZERS), "grad_bound": 5.0, "eta": "auto", "wipeout": True,
        "sigma_r": 1.0, "n_experts": 8, "workers": 1,
    },
    "lr-plan": {},
    "cell-search": {**cell_space.SearchConfig().to_dict(), "weight_decay_sweep": []},
    "verify": {"trials": 10_000, "seed": 7, "workers": 1},
}


def _csv_list(kind):
    def parse(text):
        try:
            return [kind(v) for v in text.split(",") if v.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return parse


def _flag(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="xnas", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="JSON config or a previous manifest.json")
        p.add_argument("--out", default=None, help="output directory (default: results/<subcommand>)")
        return p

    p = common(sub.add_parser("toy3d", help="3D late-bloomer toy, XNAS vs GD-softmax"))
    p.add_argument("--eta", type=float)
    p.add_argument("--wipeout", type=_flag)
    p.add_argument("--grad-bound", type=float)

    p = common(sub.add_parser("toy2d", help="2D toys: balanced, imbalanced, quadratic"))
    p.add_argument("--variant", choices=toys.TOY2D_VARIANTS)
    p.add_argument("--eta", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--wipeout", type=_flag)
    p.add_argument("--grad-bound", type=float)

    p = common(sub.add_parser("stochastic", help="Monte-Carlo expert selection sweeps"))
    p.add_argument("--n-list", type=_csv_list(int))
    p.add_argument("--sigma-list", type=_csv_list(float))
    p.add_argument("--runs", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--optimizers", type=_csv_list(str))
    p.add_argument("--grad-bound", type=float)
    p.add_argument("--eta", help="positive float or 'auto'")
    p.add_argument("--wipeout", type=_flag)
    p.add_argument("--sigma-r", type=float, help="reward noise for the N sweep")
    p.add_argument("--n-experts", type=int, help="expert count for the sigma sweep")
    p.add_argument("--workers", type=int)

    common(sub.add_parser("lr-plan", help="per-cell-type learning rates"), config_required=True)

    p = common(sub.add_parser("cell-search", help="toy cell search with discretization"))
    for name, default in cell_space.SearchConfig().to_dict().items():
        flag = "--" + name.replace("_", "-")
        if isinstance(default, bool):
            p.add_argument(flag, type=_flag, dest=name)
        elif isinstance(default, int):
            p.add_argument(flag, type=int, dest=name)
        elif isinstance(default, float):
            p.add_argument(flag, type=float, dest=name)
        else:
            p.add_argument(flag, dest=name)
    p.add_argument("--weight-decay-sweep", type=_csv_list(float),
                   help="also run GD-softmax searches over these weight decays")

    p = common(sub.add_parser("verify", help="randomized wipeout / regret-bound property suite"))
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    return ap


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[command])
    if args.config:
        data = load_json_config(args.config)
        if "config" in data and "subcommand" in data:
            if data["subcommand"] != command:
                raise ConfigError(f"manifest is for {data['subcommand']!r}, not {command!r}")
            data = data["config"]
        if command != "lr-plan":
            unknown = set(data) - set(cfg)
            if unknown:
                raise ConfigError(f"unknown {command} config keys: {sorted(unknown)}")
        cfg.update(data)
    skip = {"command", "config", "out"}
    for key, value in vars(args).items():
        if key not in skip and value is not None:
            cfg[key] = value
    return cfg


def _cmd_toy3d(cfg, out: OutputDir):
    xs, gd = toys.run_toy3d(eta=float(cfg["eta"]), wipeout=bool(cfg["wipeout"]), grad_bound=float(cfg["grad_bound"]))
    out.csv("toy3d.csv", xs.csv_header(), xs.csv_rows() + gd.csv_rows())
    print(f"toy3d final u_z: xnas={float(xs.final_point[2])!r} gd_softmax={float(gd.final_point[2])!r}")


def _cmd_toy2d(cfg, out: OutputDir):
    xs, gd = toys.run_toy2d(cfg["variant"], eta=float(cfg["eta"]), steps=int(cfg["steps"]),
                            wipeout=bool(cfg["wipeout"]), grad_bound=float(cfg["grad_bound"]))
    out.csv(f"toy2d_{cfg['variant']}.csv", xs.csv_header(), xs.csv_rows() + gd.csv_rows())
    print(f"toy2d {cfg['variant']} final u_x: xnas={float(xs.final_point[0])!r} gd_softmax={float(gd.final_point[0])!r}")


def _cmd_stochastic(cfg, out: OutputDir):
    eta = cfg["eta"] if cfg["eta"] == "auto" else float(cfg["eta"])
    base = montecarlo.StochasticConfig(
        n_experts=int(cfg["n_experts"]), steps=int(cfg["steps"]), runs=int(cfg["runs"]),
        sigma_r=float(cfg["sigma_r"]), grad_bound=float(cfg["grad_bound"]), eta=eta,
        seed=int(cfg["seed"]), wipeout=bool(cfg["wipeout"]),
    )
    points = []
    for axis, values in (("N", cfg["n_list"]), ("sigma", cfg["sigma_list"])):
        if values:
            points += montecarlo.run_sweep(base, axis, values, cfg["optimizers"], workers=int(cfg["workers"])).points
    if not points:
        raise ConfigError("stochastic needs --n-list and/or --sigma-list")
    comments = [f"grad_bound={base.grad_bound!r} eta={cfg['eta']} wipeout={base.wipeout} "
                f"clipping=[-grad_bound,grad_bound] sigma_r(N sweep)={base.sigma_r!r} "
                f"n_experts(sigma sweep)={base.n_experts}"]
    out.csv("stochastic.csv", montecarlo.SWEEP_CSV_HEADER, [p.csv_row() for p in points], comments)
    for p in points:
        print(f"{p.axis}={p.value} {p.optimizer}: correct={p.correct_fraction!r} regret={p.mean_regret!r}")


def _cmd_lr_plan(cfg, out: OutputDir):
    try:
        schedule = lr_plan.SearchSchedule.from_dict(cfg)
    except (ValueError, TypeError, AttributeError) as exc:
        raise ConfigError(f"bad schedule: {exc}") from None
    rows = lr_plan.plan_rows(schedule)
    out.csv("lr_plan.csv", ["cell_type", "T_c", "eta_star"], rows)
    for c, t, eta in rows:
        print(f"{c},{t},{eta!r}")


def _cmd_cell_search(cfg, out: OutputDir):
    sweep = list(cfg.get("weight_decay_sweep") or [])
    fields = {k: v for k, v in cfg.items() if k != "weight_decay_sweep"}
    try:
        sc = cell_space.SearchConfig.from_dict(fields)
        if sc.eta_arch != "auto":
            sc = replace(sc, eta_arch=float(sc.eta_arch))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad cell-search config: {exc}") from None
    res = cell_space.run_search(sc)
    out.csv("cell_search_epochs.csv", ["epoch", "val_loss", "mean_entropy", "survivors_total"], res.epochs)
    out.json("cell.json", res.summary_json())
    print(f"depth={res.depth!r} recovered={res.recovered}")
    if sweep:
        rows = cell_space.entropy_vs_weight_decay(sc, sweep)
        out.csv("entropy_vs_weight_decay.csv", ["weight_decay", "mean_normalized_entropy"], rows)
        for lam, h in rows:
            print(f"weight_decay={lam!r} entropy={h!r}")


def _cmd_verify(cfg, out: OutputDir) -> int:
    report = run_verify(int(cfg["trials"]), int(cfg["seed"]), workers=int(cfg["workers"]))
    rows = [[t.trial, t.n_experts, t.horizon, t.eta, t.gamma_T, t.regret, t.bound, t.bound - t.regret]
            for t in report.trials]
    out.csv("verify_bounds.csv", BOUND_CSV_HEADER, rows)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.passed else EXIT_VERIFY


COMMANDS = {
    "toy3d": _cmd_toy3d,
    "toy2d": _cmd_toy2d,
    "stochastic": _cmd_stochastic,
    "lr-plan": _cmd_lr_plan,
    "cell-search": _cmd_cell_search,
    "verify": _cmd_verify,
}


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = resolve_config(args.command, args)
        seed = cfg.get("seed")
        manifest = Manifest(args.command, cfg, seed)
        with OutputDir(args.out or f"results/{args.command}", manifest) as out:
            code = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return code or EXIT_OK


def main(argv=None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv)
