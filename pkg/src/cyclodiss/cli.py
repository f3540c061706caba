"""Command-line front end: ``cyclodiss analyze|verify|simulate``.

Exit codes: 0 success, 1 error, 3 analysis succeeded but the system is not
cyclo-dissipative (a certificate is written).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import capmic
from .abstraction import Grid, build_graph, controllable_set, reachable_set
from .expr import Expression, compile_vector
from .model import CandidateStorage, ModelError, load_model
from .registry import KEYS, registry
from .simulate import simulate
from .storage import verdict
from . import verify as vf

EXIT_OK, EXIT_ERROR, EXIT_FALSIFIED = 0, 1, 3
SCENARIOS = ("capmic-two-port", "capmic-mech-port")
DEFAULT_CONFIG_GRID = 21


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclasses.dataclass
class AnalysisConfig:
    model: object
    supply: object
    storage: CandidateStorage | None
    grid: Grid
    step: float | None
    substeps: int
    ground: int
    ground2: int | None
    out: Path
    seed: int
    threads: int


def _floats(text, what):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _parse_inputs(text, m):
    if ";" in text or m > 1:
        rows = [_floats(r, "--inputs") for r in text.split(";") if r.strip()]
    else:
        rows = [[v] for v in _floats(text, "--inputs")]
    if not rows or any(len(r) != m for r in rows):
        raise UsageError(f"--inputs: every input vector needs {m} components")
    return np.array(rows)


def _common(p):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--model", choices=KEYS, help="built-in model key")
    src.add_argument("--config", help="JSON model config path")
    p.add_argument("--grid", help="nodes per dimension, e.g. 161 or 9,9,9")
    p.add_argument("--inputs", help="input samples: '-1,0,1' (scalar) or '0,1;1,0' (vectors)")
    p.add_argument("--step", type=float, help="abstraction step h (default: CFL-like)")
    p.add_argument("--substeps", type=int, default=1)
    p.add_argument("--ground", help="ground state coordinates, comma-separated")
    p.add_argument("--ground2", help="second ground state for the cross-ground check")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--threads", type=int, default=1)


def build_parser():
    parser = _Parser(prog="cyclodiss", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    a = sub.add_parser("analyze", help="compute storage functions and the verdict")
    _common(a)
    v = sub.add_parser("verify", help="check a candidate storage function")
    _common(v)
    v.add_argument("--storage-expr", help="candidate storage expression over x1..xn")
    v.add_argument("--storage-grad", help="comma-separated gradient expressions")
    s = sub.add_parser("simulate", help="capacitor-microphone scenarios")
    s.add_argument("--scenario", required=True, choices=SCENARIOS)
    s.add_argument("--c1", type=float, default=None)
    s.add_argument("--T", type=float, default=10.0)
    s.add_argument("--h-sim", type=float, default=1e-3)
    s.add_argument("--out", default="out")
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--threads", type=int, default=1)
    return parser


def _resolve(args, need_ground=True):
    if args.model is None and args.config is None:
        raise UsageError("one of --model or --config is required")
    if args.model is not None:
        entry = registry(args.model)
        model, supply, storage = entry.model, entry.supply, entry.known_storage
        counts = entry.default_grid
    else:
        model, supply, storage = load_model(Path(args.config).read_text())
        counts = (DEFAULT_CONFIG_GRID,) * model.state_dim
    if args.inputs:
        model = dataclasses.replace(model, inputs=_parse_inputs(args.inputs, model.input_dim))
    if args.grid:
        counts = tuple(int(c) for c in args.grid.split(","))
        if len(counts) == 1:
            counts = counts * model.state_dim
        if len(counts) != model.state_dim or min(counts) < 2:
            raise UsageError("--grid needs one count >= 2 per state dimension")
    if args.substeps < 1:
        raise UsageError("--substeps must be >= 1")
    if args.step is not None and not args.step > 0:
        raise UsageError("--step must be positive")
    if need_ground and args.ground is None:
        raise UsageError("--ground is required")
    grid = Grid.for_model(model, counts)
    try:
        ground = grid.node(_floats(args.ground, "--ground"))
        ground2 = None if args.ground2 is None else grid.node(_floats(args.ground2, "--ground2"))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return AnalysisConfig(model, supply, storage, grid, args.step, args.substeps, ground, ground2,
                          Path(args.out), args.seed, max(1, args.threads))


def write_outputs(out_dir, files):
    """Write all files or none: each goes to a temp file first, then is renamed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{name}.")
            staged.append((tmp, out_dir / name))
            with os.fdopen(fd, "w", newline="\n") as fh:
                fh.write(text)
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, dest in staged:
        os.replace(tmp, dest)


def _graph(cfg):
    return build_graph(cfg.model, cfg.supply, cfg.grid, cfg.step, cfg.substeps, cfg.threads)


def cmd_analyze(cfg):
    graph = _graph(cfg)
    v = verdict(graph, cfg.ground)
    summary = v.to_text() + (
        f"nodes={graph.n_nodes}\nedges={graph.n_edges}\nout_of_box_count={graph.out_of_box_count}\n"
        f"step={graph.h!r}\nsubsteps={graph.substeps}\ngraph_fingerprint={graph.fingerprint()}\n")
    files = {"verdict.txt": summary, "graph.csv": graph.to_csv(),
             "reachable.csv": reachable_set(graph, cfg.ground).to_csv(),
             "controllable.csv": controllable_set(graph, cfg.ground).to_csv()}
    for f in v.fields.values():
        files[f"{f.name}.csv"] = f.to_csv()
    if v.certificate is not None:
        files["certificate.csv"] = v.certificate.to_csv()
    write_outputs(cfg.out, files)
    sys.stdout.write(v.to_text())
    return EXIT_OK if v.cyclo_dissipative else EXIT_FALSIFIED


def _candidate(args, cfg):
    if args.storage_expr:
        dims = {"x": cfg.model.state_dim}
        ev = Expression(args.storage_expr, "x", dims)
        grad = None
        if args.storage_grad:
            parts = [g for g in args.storage_grad.split(",")]
            if len(parts) != cfg.model.state_dim:
                raise UsageError(f"--storage-grad needs {cfg.model.state_dim} expressions")
            gfn = compile_vector(parts, "x", dims)
            grad = lambda x: gfn(x=x)  # noqa: E731
        return CandidateStorage(lambda x: ev(x=x), grad, args.storage_expr)
    if cfg.storage is None:
        raise UsageError("no candidate storage: pass --storage-expr or use a model that has one")
    return cfg.storage


def _finite(field):
    return bool(np.all(np.isfinite(field.values)))


def cmd_verify(cfg, candidate):
    graph = _graph(cfg)
    v = verdict(graph, cfg.ground)
    g = cfg.ground
    reports = [vf.check_die_edges(candidate, graph)]
    if candidate.gradient is not None:
        reports.append(vf.check_gradient(candidate, cfg.model, seed=cfg.seed))
        reports.append(vf.check_die_differential(cfg.model, cfg.supply, candidate, seed=cfg.seed))
    reports.append(vf.check_sandwich(v.S_ac, v.S_rc, candidate, g, graph))
    reports.append(vf.check_extremality(v.S_a, v.S_r, v.S_ac, v.S_rc, candidate, g, graph))
    for first, second in ((candidate, v.S_ac), (candidate, v.S_rc), (v.S_ac, v.S_rc)):
        if all(_finite(c) for c in (first, second) if not isinstance(c, CandidateStorage)):
            reports.append(vf.check_convexity(first, second, 0.5, graph))
    if cfg.ground2 is not None:
        reports.append(vf.check_cross_ground(graph, g, cfg.ground2))
    reports.append(vf.check_external(graph, g))
    text = "".join(r.to_line() + "\n" for r in reports)
    write_outputs(cfg.out, {"reports.txt": text})
    sys.stdout.write(text)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_ERROR


def cmd_simulate(args):
    if not args.h_sim > 0 or not args.T > 0:
        raise UsageError("--T and --h-sim must be positive")
    files = {}
    if args.scenario == "capmic-two-port":
        params = capmic.CapMicParams(c1=1.0 if args.c1 is None else args.c1)
        model = capmic.capmic_model(params)
        traj = simulate(model, np.zeros(3), capmic.random_smooth_inputs(args.seed), args.T,
                        args.h_sim, capmic.capmic_supply(), capmic.capmic_port_supplies())
        reports = [capmic.capmic_energy_balance(traj, params, capmic.Port.TWO_PORT)]
    else:
        params = capmic.CapMicParams(c1=0.0 if args.c1 is None else args.c1)
        model = capmic.capmic_mech_model(params)
        force, x0 = capmic.capmic_mech_force(params, period=args.T)
        traj = simulate(model, x0, force, args.T, args.h_sim, capmic.capmic_mech_supply())
        balance = capmic.capmic_energy_balance(traj, params, capmic.Port.MECH_PORT)
        hs = capmic.capmic_legendre(params, traj.x[:, 0], traj.x[:, 1])
        closure = abs(float(hs[-1] - hs[0]))
        cyc = float(traj.supply_int[-1])
        margin = -cyc - closure
        reports = [balance, vf.CheckReport(
            "capmic_mech_cycle", margin <= balance.tol, margin,
            f"gap:{np.linalg.norm(traj.x[-1] - traj.x[0]):.3g}", balance.tol,
            note=f"cyclic_Fv={cyc:.6g} closure={closure:.3g}")]
        q, hstar = capmic.tabulate_legendre(params)
        files["legendre_table.csv"] = "q,H_star\n" + "".join(
            f"{a!r},{b!r}\n" for a, b in zip(q.tolist(), hstar.tolist()))
    files["trajectory.csv"] = traj.to_csv()
    text = "".join(r.to_line() + "\n" for r in reports)
    files["balance.txt"] = text
    write_outputs(args.out, files)
    sys.stdout.write(text)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_ERROR


_VALUE_FLAGS = ("--inputs", "--ground", "--ground2", "--storage-expr", "--storage-grad")


def _join_dash_values(argv):
    # let "--storage-expr -exp(x1)" through as "--storage-expr=-exp(x1)"
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if a in _VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-") \
                and not argv[i + 1].startswith("--"):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(_join_dash_values(argv))
        if args.command is None:
            raise UsageError("a command is required: analyze, verify or simulate")
        if args.command == "simulate":
            return cmd_simulate(args)
        cfg = _resolve(args)
        if args.command == "analyze":
            return cmd_analyze(cfg)
        return cmd_verify(cfg, _candidate(args, cfg))
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"cyclodiss: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ModelError, ValueError, RuntimeError, OSError) as exc:
        print(f"cyclodiss: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
