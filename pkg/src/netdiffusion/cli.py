"""Command-line front end: ``netdiffusion <command> ...``.

Every command that writes files also writes a JSON run manifest holding
the resolved configuration, seeds and SHA-256 digests of inputs and
outputs.  Node and mode indices are 1-based on the command line and in
files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import re
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .design import RespectrumPlan, edge_changes, expand_cluster_edits, respectrum
from .dynamics import Trajectory, consensus_value, expected_trajectory, stationary_value_conservative
from .errors import DiffusionError
from .exogenous import (Constant, Impulse, LearningGains, Piecewise, bibo_stability, constant_input_divergence,
                        dynamic_learning_trajectory, inhomogeneous_trajectory, learning_matrix,
                        pid_characteristic_roots, pid_expanded_response, pid_system_matrix, reduce_stubborn,
                        stubborn_steady_state)
from .graph import P1, P2, Protocol, WeightedDigraph, load_graph, transition_rate_matrix
from .mdp import MdpConfig, converged, random_actions, run_trials, state_rewards
from .modal import ControllerSpec, controlled_response, to_quasi
from .montecarlo import parse_scheme, sample_paths
from .networks import asymmetric_cycle, path_graph, star_graph
from .spectral import eigendecompose, is_ctmc_generator, steady_state_vectors

EXIT_MODULE_ERROR = 1
EXIT_BAD_CONFIG = 2
EXIT_IO_FAILURE = 3


class CliError(Exception):
    exit_code = EXIT_BAD_CONFIG
    kind = "CliError"

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class BadConfig(CliError):
    kind = "BadConfig"


class UnknownCommand(CliError):
    kind = "UnknownCommand"


class IoFailure(CliError):
    exit_code = EXIT_IO_FAILURE
    kind = "IoFailure"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        if "invalid choice" in message:
            raise UnknownCommand(message, "command")
        raise BadConfig(message)


# --- value parsing -------------------------------------------------------------------


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc.strerror}", str(path)) from None


def parse_vector(text: str, field: str, n: int | None = None) -> np.ndarray:
    """Comma list, JSON list or path to a one-row CSV file."""
    text = str(text).strip()
    try:
        if Path(text).is_file():
            values = np.loadtxt(text, delimiter=",", ndmin=1).ravel()
        else:
            values = np.array([float(x) for x in text.strip("[]").split(",") if x.strip()])
    except ValueError:
        raise BadConfig(f"{field}: cannot parse {text!r} as a vector of numbers", field) from None
    if n is not None and values.size != n:
        raise BadConfig(f"{field}: expected {n} values, got {values.size}", field)
    return values


def parse_times(horizon: float, step: float) -> np.ndarray:
    if not horizon > 0:
        raise BadConfig("horizon must be positive", "horizon")
    if not step > 0:
        raise BadConfig("step must be positive", "step")
    k = int(round(horizon / step))
    if not np.isclose(k * step, horizon, rtol=1e-9):
        raise BadConfig("horizon must be a whole number of steps", "step")
    return np.linspace(0.0, horizon, k + 1)


def parse_input(spec: str, n: int):
    """``const:[...]``, ``impulse:[...]`` or ``pw:FILE.csv`` (rows ``t,u1,...,un``)."""
    kind, _, rest = spec.partition(":")
    if kind == "const":
        return Constant(parse_vector(rest, "input", n))
    if kind == "impulse":
        return Impulse(parse_vector(rest, "input", n))
    if kind == "pw":
        _read_text(rest)
        try:
            data = np.loadtxt(rest, delimiter=",", ndmin=2, comments="#")
        except ValueError:
            data = np.loadtxt(rest, delimiter=",", ndmin=2, skiprows=1)
        if data.shape[1] != n + 1:
            raise BadConfig(f"input: piecewise file needs {n + 1} columns, got {data.shape[1]}", "input")
        try:
            return Piecewise(data[:, 0], data[:, 1:])
        except ValueError as exc:
            raise BadConfig(f"input: {exc}", "input") from None
    raise BadConfig(f"input: unknown kind {kind!r}; use const:, impulse: or pw:", "input")


def parse_assignments(text: str, field: str) -> dict[str, float]:
    out = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        key, sep, value = item.partition("=")
        try:
            if not sep:
                raise ValueError
            out[key.strip()] = float(value)
        except ValueError:
            raise BadConfig(f"{field}: expected key=value pairs, got {item!r}", field) from None
    return out


def parse_stubborn(text: str, n: int) -> tuple[list[int], list[float]]:
    pairs = parse_assignments(text, "stubborn")
    nodes, values = [], []
    for key, value in pairs.items():
        if not key.isdigit() or not 1 <= int(key) <= n:
            raise BadConfig(f"stubborn: node {key!r} is not in 1..{n}", "stubborn")
        nodes.append(int(key) - 1)
        values.append(value)
    return nodes, values


def parse_gains(text: str) -> LearningGains:
    g = parse_assignments(text, "gains")
    unknown = set(g) - {"p", "d", "i", "rho"}
    if unknown:
        raise BadConfig(f"gains: unknown keys {sorted(unknown)}; use p, d, i, rho", "gains")
    try:
        return LearningGains(g.get("p", 0.0), g.get("d", 0.0), g.get("i", 0.0), g.get("rho", 1.0))
    except ValueError as exc:
        raise BadConfig(f"gains: {exc}", "gains") from None


_EDIT = re.compile(r"^\s*mode\s*=\s*(\d+)\s*:\s*(\S+)\s*$")


def parse_edit(text: str) -> tuple[int, complex]:
    m = _EDIT.match(text)
    if not m:
        raise BadConfig(f"edit: expected 'mode=K:VALUE', got {text!r}", "edit")
    try:
        value = complex(m.group(2).replace("i", "j"))
    except ValueError:
        raise BadConfig(f"edit: bad eigenvalue {m.group(2)!r}", "edit") from None
    return int(m.group(1)), value


# --- output helpers --------------------------------------------------------------------


def _jsonable(x):
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return {"re": x.real.tolist(), "im": x.imag.tolist()}
    return x.tolist()


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Run:
    """Collects inputs and outputs of one invocation and writes its manifest."""

    def __init__(self, args: argparse.Namespace, argv: list[str]):
        self.args = args
        self.argv = argv
        self.inputs: list[Path] = []
        self.outputs: list[Path] = []
        self.seeds: dict = {}

    def input(self, path) -> Path:
        path = Path(path)
        if not path.is_file():
            raise IoFailure(f"input file {path} does not exist", str(path))
        self.inputs.append(path)
        return path

    def _prepare(self, path) -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise IoFailure(f"cannot create {path.parent}: {exc.strerror}", str(path)) from None
        self.outputs.append(path)
        return path

    def write_json(self, path, obj) -> Path:
        path = self._prepare(path)
        try:
            path.write_text(json.dumps(obj, indent=2) + "\n")
        except OSError as exc:
            raise IoFailure(f"cannot write {path}: {exc.strerror}", str(path)) from None
        return path

    def write_csv(self, path, header: list[str], rows) -> Path:
        path = self._prepare(path)
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        try:
            with open(path, "w") as fh:
                fh.write(",".join(header) + "\n")
                for row in rows:
                    fh.write(",".join(repr(float(v)) for v in row) + "\n")
        except OSError as exc:
            raise IoFailure(f"cannot write {path}: {exc.strerror}", str(path)) from None
        return path

    def write_trajectory(self, path, traj: Trajectory) -> Path:
        return self.write_csv(path, ["t"] + [f"node{k + 1}" for k in range(traj.n)],
                              np.column_stack([traj.times, traj.values]))

    def manifest(self, path) -> Path:
        config = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(self.args).items() if k != "func"}
        data = {
            "command": self.args.command,
            "argv": self.argv,
            "config": config,
            "seeds": self.seeds,
            "inputs": {str(p): _digest(p) for p in self.inputs},
            "outputs": {str(p): _digest(p) for p in self.outputs},
            "version": __version__,
        }
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data, indent=2) + "\n")
        return path


def _manifest_for(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _sibling(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


def _graph(run: Run, args) -> tuple[WeightedDigraph, Protocol]:
    path = run.input(args.graph)
    try:
        g, file_protocol = load_graph(path)
    except json.JSONDecodeError as exc:
        raise BadConfig(f"graph: {path} is not valid JSON ({exc.msg})", "graph") from None
    except (DiffusionError, ValueError) as exc:
        raise BadConfig(f"graph: {exc}", "graph") from None
    protocol = args.protocol or file_protocol
    if protocol is None:
        raise BadConfig("protocol: not given on the command line or in the graph file", "protocol")
    try:
        return g, Protocol.parse(protocol)
    except ValueError:
        raise BadConfig(f"protocol: expected P1 or P2, got {protocol!r}", "protocol") from None


# --- commands ------------------------------------------------------------------------


def cmd_spectrum(args, run: Run) -> int:
    g, protocol = _graph(run, args)
    Q = transition_rate_matrix(g, protocol)
    d = eigendecompose(Q)
    out = {
        "protocol": protocol.value,
        "n": g.n,
        "eigenvalues": _jsonable(d.eigenvalues),
        "right_eigenvectors": _jsonable(d.right.T),
        "left_rows": _jsonable(d.left),
        "condition": d.condition,
        "generator_valid": bool(is_ctmc_generator(Q)),
    }
    try:
        pair = steady_state_vectors(Q)
        out["steady"] = {"right": pair.right.tolist(), "left": pair.left.tolist(),
                         "psi": pair.psi, "omega": pair.omega}
    except DiffusionError as exc:
        out["steady"] = {"error": type(exc).__name__, "message": str(exc)}
    if args.out:
        run.write_json(args.out, out)
        run.manifest(_manifest_for(Path(args.out)))
    else:
        print(json.dumps(out, indent=2))
    return 0


def cmd_simulate(args, run: Run) -> int:
    g, protocol = _graph(run, args)
    S0 = parse_vector(args.s0, "s0", g.n)
    times = parse_times(args.horizon, args.step)
    traj = expected_trajectory(transition_rate_matrix(g, protocol), S0, times, method=args.method)
    out = Path(args.out)
    run.write_trajectory(out, traj)
    run.manifest(_manifest_for(out))
    return 0


def cmd_mc(args, run: Run) -> int:
    g, protocol = _graph(run, args)
    S0 = parse_vector(args.s0, "s0", g.n)
    grid = parse_times(args.horizon, args.step)
    try:
        scheme = parse_scheme(args.scheme)
    except (DiffusionError, ValueError) as exc:
        raise BadConfig(f"scheme: {exc}", "scheme") from None
    if args.trials < 1:
        raise BadConfig("trials must be at least 1", "trials")
    run.seeds = {"seed": args.seed}
    ens = sample_paths(g, protocol, S0, args.horizon, grid, args.trials, args.seed, scheme)
    out = Path(args.out)
    run.write_trajectory(out, ens.mean)
    run.write_trajectory(_sibling(out, ".stderr.csv"), Trajectory(grid, ens.stderr))
    if args.trials_out:
        for k in range(ens.n_trials):
            run.write_trajectory(Path(args.trials_out) / f"trial_{k + 1:05d}.csv", ens.trajectory(k))
    run.manifest(_manifest_for(out))
    return 0


def cmd_drive(args, run: Run) -> int:
    g, protocol = _graph(run, args)
    Q = transition_rate_matrix(g, protocol)
    times = parse_times(args.horizon, args.step)
    S0 = parse_vector(args.s0, "s0", g.n) if args.s0 else np.zeros(g.n)
    if args.input and args.input.startswith("pw:"):
        run.input(args.input[3:])
    summary: dict = {"protocol": protocol.value}
    out = Path(args.out)
    if args.stubborn:
        nodes, values = parse_stubborn(args.stubborn, g.n)
        try:
            rs = reduce_stubborn(Q, nodes, values)
        except DiffusionError as exc:
            raise BadConfig(f"stubborn: {exc}", "stubborn") from None
        reduced = inhomogeneous_trajectory(rs.Qr, rs.restrict(S0), Constant(rs.b), times)
        traj = Trajectory(times, rs.expand(reduced.values), protocol, "stubborn")
        summary["stability"] = bibo_stability(rs.Qr, args.tol).value
        summary["steady_state"] = rs.expand(stubborn_steady_state(rs)).tolist()
    elif args.gains:
        if not args.input:
            raise BadConfig("input: a reference signal is required with --gains", "input")
        gains = parse_gains(args.gains)
        X = parse_input(args.input, g.n)
        if gains.d == 0 and gains.i == 0:
            if not gains.p > 0:
                raise BadConfig("gains: p * rho must be positive", "gains")
            traj = dynamic_learning_trajectory(Q, gains, X, S0, times)
            summary["stability"] = bibo_stability(learning_matrix(Q, gains.p), args.tol).value
        else:
            traj = pid_expanded_response(Q, gains, X, S0, None, times)
            roots = pid_characteristic_roots(Q, gains)
            summary["characteristic_roots"] = _jsonable(roots)
            summary["stability"] = bibo_stability(pid_system_matrix(Q, gains), args.tol).value
    else:
        if not args.input:
            raise BadConfig("input: one of --input, --stubborn or --gains is required", "input")
        u = parse_input(args.input, g.n)
        traj = inhomogeneous_trajectory(Q, S0, u, times)
        summary["stability"] = bibo_stability(np.asarray(Q), args.tol).value
        if isinstance(u, Constant):
            try:
                div = constant_input_divergence(Q, u.value)
                summary["diverges"] = div.diverges
                summary["linear_growth"] = div.growth.tolist()
            except DiffusionError:
                pass
    run.write_trajectory(out, traj)
    run.write_json(_sibling(out, ".summary.json"), summary)
    run.manifest(_manifest_for(out))
    return 0


def cmd_control(args, run: Run) -> int:
    g, protocol = _graph(run, args)
    Q = transition_rate_matrix(g, protocol)
    impulse = parse_vector(args.impulse, "impulse", g.n)
    if not 1 <= args.mode <= g.n:
        raise BadConfig(f"mode: must lie in 1..{g.n}", "mode")
    try:
        ctrl = ControllerSpec.parse(args.ctrl, args.mode - 1)
    except ValueError as exc:
        raise BadConfig(f"ctrl: {exc}", "ctrl") from None
    times = parse_times(args.horizon, args.step)
    res = controlled_response(Q, impulse, ctrl, times)
    out = Path(args.out)
    run.write_trajectory(out, res.trajectory)
    quasi = res.quasi
    header = ["t"] + [f"mode{k + 1}" for k in range(g.n)]
    if np.iscomplexobj(quasi):
        header = ["t"] + [f"mode{k + 1}_{part}" for k in range(g.n) for part in ("re", "im")]
        quasi = np.stack([quasi.real, quasi.imag], axis=-1).reshape(len(times), -1)
    run.write_csv(_sibling(out, ".quasi.csv"), header, np.column_stack([times, quasi]))
    run.write_json(_sibling(out, ".summary.json"), {
        "eigenvalues": _jsonable(res.decomposition.eigenvalues),
        "quasi_inputs": _jsonable(to_quasi(res.decomposition, impulse)),
        "marginal_modes": [k + 1 for k in res.marginal],
    })
    run.manifest(_manifest_for(out))
    return 0


def cmd_respectrum(args, run: Run) -> int:
    g, protocol = _graph(run, args)
    Q = transition_rate_matrix(g, protocol)
    d = eigendecompose(Q)
    edits = {}
    for text in args.edit:
        mode, value = parse_edit(text)
        if not 1 <= mode <= g.n:
            raise BadConfig(f"edit: mode {mode} not in 1..{g.n}", "edit")
        edits[mode - 1] = value
    try:
        plan = RespectrumPlan(d, expand_cluster_edits(d, edits), protocol)
    except DiffusionError as exc:
        raise BadConfig(f"edit: {exc}", "edit") from None
    res = respectrum(plan)
    out = Path(args.out)
    run.write_json(out, {
        "protocol": protocol.value,
        "Q": res.Q.tolist(),
        "eigenvalues": _jsonable(res.eigenvalues),
        "generator_valid": bool(res.report),
        "violations": list(res.report.violations),
        "edge_changes": [{"from": c.i + 1, "to": c.j + 1, "old": c.old, "new": c.new, "delta": c.delta}
                         for c in edge_changes(Q, res.Q)],
    })
    run.manifest(_manifest_for(out))
    return 0


def load_mdp_config(path, run: Run | None = None) -> tuple[MdpConfig, int, dict]:
    """Read a learning configuration (1-based states) into an :class:`MdpConfig`."""
    try:
        raw = json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise BadConfig(f"config: invalid JSON ({exc.msg})", "config") from None
    base = Path(path).parent
    protocol = Protocol.parse(raw.get("protocol", "P1"))
    spec = raw.get("actions")
    if isinstance(spec, dict) and "random_complete" in spec:
        rc = spec["random_complete"]
        try:
            actions = random_actions(int(raw["n"]), int(rc["count"]), int(rc.get("seed", 0)), protocol)
        except KeyError as exc:
            raise BadConfig(f"config: missing field {exc.args[0]!r}", exc.args[0]) from None
    elif isinstance(spec, dict) and "files" in spec:
        actions = []
        for name in spec["files"]:
            p = base / name
            if run is not None:
                run.input(p)
            data = json.loads(_read_text(p))
            if "Q" in data:
                actions.append(np.array(data["Q"], dtype=float))
            else:
                g, _ = load_graph(p)
                actions.append(np.asarray(transition_rate_matrix(g, protocol)))
    else:
        raise BadConfig("actions: expected {'random_complete': {...}} or {'files': [...]}", "actions")
    n, w = actions[0].shape[0], len(actions)
    rw = raw.get("rewards", {})
    if "table" in rw:
        rewards = np.array(rw["table"], dtype=float)
    elif "targets" in rw:
        rewards = state_rewards(n, w, [int(t) - 1 for t in rw["targets"]], float(rw.get("value", 5.0)))
    else:
        raise BadConfig("rewards: expected 'table' or 'targets'", "rewards")
    kwargs = {k: raw[k] for k in ("mu", "gamma", "epsilon", "n_steps", "seed", "reward_mode", "record_every")
              if k in raw}
    if "initial_state" in raw:
        kwargs["initial_state"] = int(raw["initial_state"]) - 1
    if "tracked" in raw:
        kwargs["tracked"] = tuple((int(x) - 1, int(a) - 1) for x, a in raw["tracked"])
    try:
        cfg = MdpConfig(tuple(actions), rewards, protocol=protocol, **kwargs)
    except (DiffusionError, ValueError) as exc:
        raise BadConfig(f"config: {exc}", "config") from None
    return cfg, int(raw.get("trials", 1)), raw


def _write_learning(run: Run, out: Path, cfg: MdpConfig, results) -> dict:
    seeds = [r.seed for r in results]
    run.seeds = {"seed": cfg.seed, "trial_seeds": seeds}
    run.write_json(out / "seeds.json", {"seed": cfg.seed, "trial_seeds": seeds})
    for k, r in enumerate(results):
        run.write_csv(out / f"quality_trial{k + 1}.csv", [f"action{a + 1}" for a in range(cfg.n_actions)], r.quality)
        if cfg.tracked:
            run.write_csv(out / f"quality_history_trial{k + 1}.csv",
                          ["step"] + [f"V_{x + 1}_{a + 1}" for x, a in cfg.tracked],
                          np.column_stack([r.history_steps] + [r.history[p] for p in cfg.tracked]))
    window = cfg.record_every
    n_win = cfg.n_steps // window
    trace = np.array([r.reward_trace[:n_win * window].reshape(n_win, window).mean(axis=1) for r in results])
    run.write_csv(out / "reward_trace.csv", ["step"] + [f"trial{k + 1}" for k in range(len(results))],
                  np.column_stack([(np.arange(n_win) + 1) * window, trace.T]))
    v0 = np.array([r.stationary if r.stationary is not None else np.full(cfg.n, np.nan) for r in results])
    run.write_csv(out / "v0.csv", [f"state{x + 1}" for x in range(cfg.n)], np.vstack([v0, np.nanmean(v0, axis=0)]))
    summary = {"mean_v0": np.nanmean(v0, axis=0).tolist(), "trials": len(results),
               "elapsed_seconds": [r.elapsed for r in results]}
    if cfg.tracked:
        mean_hist = {p: np.mean([r.history[p] for r in results], axis=0) for p in cfg.tracked}
        summary["converged"] = {f"{x + 1},{a + 1}": converged(h) for (x, a), h in mean_hist.items()}
    return summary


def cmd_learn(args, run: Run) -> int:
    cfg_path = run.input(args.config)
    cfg, trials, _ = load_mdp_config(cfg_path, run)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.trials is not None:
        trials = args.trials
    out = Path(args.out)
    results = run_trials(cfg, trials, args.workers)
    summary = _write_learning(run, out, cfg, results)
    summary.pop("elapsed_seconds")
    run.write_json(out / "summary.json", summary)
    run.manifest(out / "manifest.json")
    return 0


# --- repro --------------------------------------------------------------------------------


def _repro_mc(run: Run, out: Path, g, protocol, S0, args, horizon=15.0):
    Q = transition_rate_matrix(g, protocol)
    grid = parse_times(horizon, args.step)
    analytic = expected_trajectory(Q, S0, grid)
    ens = sample_paths(g, protocol, S0, horizon, grid, args.trials, args.seed, parse_scheme(args.scheme))
    tag = protocol.value.lower()
    run.write_trajectory(out / f"analytic_{tag}.csv", analytic)
    run.write_trajectory(out / f"mc_mean_{tag}.csv", ens.mean)
    run.write_trajectory(out / f"mc_stderr_{tag}.csv", Trajectory(grid, ens.stderr))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.abs(ens.mean.values - analytic.values) / ens.stderr
    z = np.where(ens.stderr > 0, z, 0.0)
    return Q, {"max_abs_z": float(np.max(z)), "trials": args.trials, "scheme": args.scheme}


def repro_fig2(args, run, out):
    S0 = np.eye(5)[4]
    g = path_graph(5, 0.2)
    Q, summary = _repro_mc(run, out, g, P1, S0, args)
    summary["stationary"] = stationary_value_conservative(Q, S0).tolist()
    return summary


def repro_fig4(args, run, out):
    S0 = np.eye(5)[4]
    g = path_graph(5, 0.2)
    Q, summary = _repro_mc(run, out, g, P2, S0, args)
    pair = steady_state_vectors(Q)
    summary.update(consensus=consensus_value(Q, S0), left_unit=pair.left.tolist(), omega=pair.omega)
    return summary


def repro_fig5(args, run, out):
    S0 = np.eye(5)[4]
    g = path_graph(5, 1.0)
    summary = {}
    for protocol in (P1, P2):
        _, s = _repro_mc(run, out, g, protocol, S0, args)
        summary[protocol.value] = s
    return summary


def repro_sec5b(args, run, out):
    times = parse_times(3.0, min(args.step, 0.01))
    impulse = np.array([1.0, 0, 1.0, 0])
    summary = {}
    controllers = [ControllerSpec(0)] + [ControllerSpec(0, "proportional", K) for K in (-1.0, 1.0, 3.0)] \
        + [ControllerSpec(0, "integral", K) for K in (1.0, 4.0)]
    for protocol in (P1, P2):
        Q = transition_rate_matrix(asymmetric_cycle(protocol), protocol)
        d = eigendecompose(Q)
        entry = {"eigenvalues": _jsonable(d.eigenvalues), "quasi_inputs": _jsonable(to_quasi(d, impulse))}
        for c in controllers:
            res = controlled_response(d, impulse, c, times)
            name = c.kind if c.kind == "none" else f"{c.kind}_{c.gain:g}"
            run.write_trajectory(out / f"{protocol.value.lower()}_{name}.csv", res.trajectory)
            entry[name] = {"final": res.trajectory.final.tolist()}
        summary[protocol.value] = entry
    return summary


def repro_sec6a(args, run, out):
    Q = transition_rate_matrix(star_graph(5), P1)
    d = eigendecompose(Q)
    res = respectrum(RespectrumPlan(d, {int(np.argmin(d.eigenvalues.real)): -4.5}, P1))
    run.write_json(out / "respectrum.json", {
        "Q_old": np.asarray(Q).tolist(), "Q_new": res.Q.tolist(), "eigenvalues": _jsonable(res.eigenvalues),
        "generator_valid": bool(res.report),
        "edge_changes": [{"from": c.i + 1, "to": c.j + 1, "old": c.old, "new": c.new, "delta": c.delta}
                         for c in edge_changes(Q, res.Q)],
    })
    return {"generator_valid": bool(res.report)}


def repro_fig13(args, run, out):
    n, w = 10, 50
    steps = args.steps or 200_000
    cfg = MdpConfig(random_actions(n, w, args.seed), state_rewards(n, w, [3, 7]), mu=0.2, gamma=0.995,
                    epsilon=0.4, n_steps=steps, seed=args.seed, tracked=tuple((0, a) for a in range(5)),
                    record_every=max(1, steps // 1000))
    trials = args.trials if args.trials_given else 20
    results = run_trials(cfg, trials, args.workers)
    summary = _write_learning(run, out, cfg, results)
    summary.pop("elapsed_seconds")
    summary["rewarded_states"] = [4, 8]
    summary["rewarded_mass"] = float(np.nanmean([r.stationary[[3, 7]].sum() for r in results
                                                 if r.stationary is not None]))
    return summary


REPRO = {"fig2": repro_fig2, "fig3": repro_fig4, "fig4": repro_fig4, "fig5": repro_fig5, "sec5b": repro_sec5b,
         "sec6a": repro_sec6a, "fig13": repro_fig13, "fig14": repro_fig13}


def cmd_repro(args, run: Run) -> int:
    out = Path(args.out) / args.name
    args.trials_given = args.trials is not None
    if args.trials is None:
        args.trials = 5000
    run.seeds = {"seed": args.seed}
    summary = REPRO[args.name](args, run, out)
    run.write_json(out / "summary.json", summary)
    run.manifest(out / "manifest.json")
    return 0


# --- parser ---------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="netdiffusion", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def graph_args(sp):
        sp.add_argument("--graph", required=True, help="graph JSON file")
        sp.add_argument("--protocol", choices=["P1", "P2"], help="overrides the protocol in the graph file")

    def time_args(sp, horizon=10.0, step=0.1):
        sp.add_argument("--horizon", type=float, default=horizon)
        sp.add_argument("--step", type=float, default=step, help="sample spacing")

    sp = sub.add_parser("spectrum", help="eigenvalues and steady vectors as JSON")
    graph_args(sp)
    sp.add_argument("--out", help="JSON file (stdout when omitted)")
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("simulate", help="expected trajectory exp(Qt) S0 to CSV")
    graph_args(sp)
    sp.add_argument("--s0", required=True, help="initial state: comma list or CSV file")
    time_args(sp)
    sp.add_argument("--method", choices=["auto", "spectral", "expm"], default="auto")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("mc", help="Monte Carlo ensemble of sample paths")
    graph_args(sp)
    sp.add_argument("--s0", required=True)
    time_args(sp, 15.0, 0.5)
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--scheme", default="exact", help="exact or disc:K")
    sp.add_argument("--trials-out", help="directory for per-trial CSVs")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_mc)

    sp = sub.add_parser("drive", help="inputs, stubborn agents, dynamic learning or PID tracking")
    graph_args(sp)
    sp.add_argument("--s0", help="initial state (zeros when omitted)")
    sp.add_argument("--input", help="const:[...], impulse:[...] or pw:FILE.csv")
    sp.add_argument("--stubborn", help='fixed agents, e.g. "3=1.0,5=0.2"')
    sp.add_argument("--gains", help='e.g. "p=0.5" or "p=1,d=0.2,i=0.5,rho=1"')
    sp.add_argument("--tol", type=float, default=None, help="stability tolerance")
    time_args(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_drive)

    sp = sub.add_parser("control", help="impulse response with feedback on one quasi-mode")
    graph_args(sp)
    sp.add_argument("--impulse", required=True)
    sp.add_argument("--mode", type=int, default=1, help="1-based mode, ascending eigenvalue order")
    sp.add_argument("--ctrl", default="none", help="none, p:K or i:K")
    time_args(sp, 3.0, 0.01)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_control)

    sp = sub.add_parser("respectrum", help="edit eigenvalues, keep eigenvectors")
    graph_args(sp)
    sp.add_argument("--edit", action="append", default=[], help='"mode=K:VALUE", repeatable')
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_respectrum)

    sp = sub.add_parser("learn", help="Q-learning over candidate rate matrices")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_learn)

    sp = sub.add_parser("repro", help="regenerate a reference experiment")
    sp.add_argument("name", choices=sorted(REPRO))
    sp.add_argument("--out", default="repro", help="output directory")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--steps", type=int, help="learning steps (fig13/fig14)")
    sp.add_argument("--step", type=float, default=0.5, help="sample spacing")
    sp.add_argument("--scheme", default="exact")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_repro)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        return args.func(args, Run(args, argv))
    except CliError as exc:
        _report(exc.kind, str(exc), exc.field)
        return exc.exit_code
    except DiffusionError as exc:
        _report(type(exc).__name__, str(exc))
        return EXIT_MODULE_ERROR


def _report(kind: str, message: str, field: str | None = None) -> None:
    err = {"error": kind, "message": message}
    if field is not None:
        err["field"] = field
    print(json.dumps(err), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
