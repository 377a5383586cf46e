"""Batch command-line surface.

Every command writes its artifacts plus a manifest into the output
directory.  Data files are byte-stable for identical inputs: anything
timing-derived (wall times, runtime extrapolations) lives in the manifest
or a timing sidecar, never inside the deterministic artifacts.

Relative output paths resolve under $PAULIPROP_DATA_DIR when it is set.
``--config FILE`` supplies defaults from a JSON object keyed by option
name (underscores); explicit flags win over the config file, which wins
over built-in defaults, and the manifest records the resolved values.

Exit codes: 0 success, 2 usage, 3 resource-cap abort, 4 budget abort,
5 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    MFitResult,
    PowerLawModel,
    QuadratureError,
    SingularityError,
    detect_eta_spikes,
    fit_m_mle,
    fit_m_regression,
    histogram,
    s_theta_sweep,
)
from .circuits import (
    Circuit,
    CircuitError,
    FixedAngle,
    UniformRandomAngle,
    builtin_topology,
    kicked_ising,
    load_topology,
    tfim_trotter_grid,
)
from .convergence import ConvergenceConfig, classify, run_protocol
from .engine import BudgetExceeded, RowCapExceeded, TraceLog, evolve, expectation
from .estimator import (
    DEFAULT_DELTA_0,
    DEFAULT_RATIO,
    EstimationImpossible,
    predict_resources,
    run_probes,
)
from .pauli import InvariantViolation, PauliError
from .sums import PauliSum

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RESOURCE = 3
EXIT_BUDGET = 4
EXIT_NUMERICAL = 5


class UsageError(ValueError):
    pass


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _set_workers(requested: int | None) -> int:
    """Cap numba threading; the engine result is worker-independent."""
    import warnings

    try:
        import numba

        available = numba.config.NUMBA_NUM_THREADS
        if requested is None:
            return available
        effective = max(1, min(requested, available))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            numba.set_num_threads(effective)
        return effective
    except Exception:
        return 1


class _Manifest:
    """Run provenance: resolved config, artifacts, wall time, versions."""

    def __init__(self, command: str, args: argparse.Namespace, workers: int | None = None):
        self.payload = {
            "command": command,
            "argv": sys.argv[1:],
            "config": {k: v for k, v in vars(args).items() if k != "func"},
            "engine_version": __version__,
            "workers": workers,
            "started_at_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "artifacts": [],
            "timings": {},
        }
        self._t0 = time.monotonic()

    def add(self, path) -> Path:
        self.payload["artifacts"].append(str(path))
        return Path(path)

    def timing(self, key: str, value) -> None:
        self.payload["timings"][key] = value

    def write(self, out_dir: Path, name: str = "manifest.json") -> None:
        self.payload["wall_time_s"] = time.monotonic() - self._t0
        path = out_dir / name
        self.payload["artifacts"].append(str(path))
        _write_json(path, self.payload)


def _resolve_path(path) -> Path:
    """Relative paths land under $PAULIPROP_DATA_DIR when set."""
    out = Path(path)
    base = os.environ.get("PAULIPROP_DATA_DIR")
    if base and not out.is_absolute():
        out = Path(base) / out
    return out


def _out_dir(args) -> Path:
    out = _resolve_path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_observable(spec: str, n: int) -> PauliSum:
    """A sparse/dense Pauli label, or a JSON file of (label, coeff) terms."""
    path = Path(spec)
    if path.suffix == ".json" and path.exists():
        with open(path) as fh:
            payload = json.load(fh)
        terms = payload["terms"] if isinstance(payload, dict) else payload
        return PauliSum.from_terms(n, [(str(lbl), float(c)) for lbl, c in terms])
    return PauliSum.from_terms(n, [(spec, 1.0)])


def _resolve_topology(name_or_path: str):
    if os.path.exists(name_or_path):
        return load_topology(name_or_path)
    return builtin_topology(name_or_path)


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated float list, got {text!r}") from None


# ---------------------------------------------------------------------------
# gen-circuit
# ---------------------------------------------------------------------------


def cmd_gen_circuit(args) -> int:
    args.out = str(_resolve_path(args.out))
    if args.family == "kicked-ising":
        topo = _resolve_topology(args.topology)
        if args.theta_x == "random":
            if args.seed is None:
                raise UsageError("--theta-x random requires --seed")
            spec = UniformRandomAngle(low=args.theta_x_low, high=args.theta_x_high, seed=args.seed)
        else:
            try:
                spec = FixedAngle(float(args.theta_x))
            except ValueError:
                raise UsageError(f"--theta-x must be a float or 'random', got {args.theta_x!r}") from None
        circuit = kicked_ising(topo, T=args.T, theta_zz=args.theta_zz, theta_x_spec=spec)
    else:
        circuit = tfim_trotter_grid(
            rows=args.rows, cols=args.cols, h=args.h, t_total=args.t, dt=args.dt,
            j_coupling=args.j_coupling,
        )
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    manifest = _Manifest(f"gen-circuit {args.family}", args)
    circuit.save(manifest.add(out))
    print(f"wrote {out}: n={circuit.n}, gates={len(circuit)}")
    manifest.write(out.parent if str(out.parent) else Path("."), name=out.stem + ".manifest.json")
    return EXIT_OK


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _write_snapshots(trace: TraceLog, out: Path, manifest: _Manifest, delta: float) -> None:
    for k, snap in sorted(trace.snapshots.items()):
        path = manifest.add(out / f"snapshot_k{k:06d}.npz")
        snap.to_npz(path, gate_index=k, delta=delta)
    if trace.peak_snapshot is not None:
        k, snap = trace.peak_snapshot
        path = manifest.add(out / f"snapshot_peak_k{k:06d}.npz")
        snap.to_npz(path, gate_index=k, delta=delta)


def cmd_run(args) -> int:
    circuit = Circuit.load(args.circuit)
    observable = _load_observable(args.observable, circuit.n)
    workers = _set_workers(args.workers)
    out = _out_dir(args)
    manifest = _Manifest("run", args, workers=workers)

    snapshot_gates: tuple[int, ...] = ()
    snapshot_steps = False
    track_peak = False
    if args.snapshots:
        if args.snapshots == "steps":
            snapshot_steps = True
            track_peak = True
        else:
            snapshot_gates = tuple(int(tok) for tok in args.snapshots.split(","))

    partial_code = None
    t0 = time.monotonic()
    try:
        final, trace = evolve(
            circuit, observable, args.delta,
            snapshot_gates=snapshot_gates, snapshot_steps=snapshot_steps,
            track_peak_snapshot=track_peak, budget_s=args.budget,
            row_cap=args.max_rows,
        )
    except BudgetExceeded as exc:
        trace, final, partial_code = exc.trace, exc.partial, EXIT_BUDGET
    except RowCapExceeded as exc:
        trace, final, partial_code = exc.trace, exc.partial, EXIT_RESOURCE
    wall = time.monotonic() - t0

    value = expectation(final) if final is not None else None
    trace.to_csv(manifest.add(out / "trace.csv"))
    summary = trace.summary(expectation=value)
    _write_json(manifest.add(out / "summary.json"), summary)
    manifest.timing("evolve_s", wall)
    _write_snapshots(trace, out, manifest, args.delta)
    manifest.write(out)
    if partial_code is not None:
        print(f"aborted ({trace.aborted}) after {len(trace.gates)} gates", file=sys.stderr)
        return partial_code
    print(f"expectation = {value!r}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------


def cmd_estimate(args) -> int:
    circuit = Circuit.load(args.circuit)
    observable = _load_observable(args.observable, circuit.n)
    workers = _set_workers(args.workers)
    out = _out_dir(args)
    manifest = _Manifest("estimate", args, workers=workers)

    targets = _parse_float_list(args.targets)
    if not targets:
        raise UsageError("--targets must list at least one delta")
    finest_probe = args.delta0 * args.ratio ** (args.count - 1)
    for t in targets:
        if t >= finest_probe:
            raise UsageError(
                f"target delta {t} must be below the finest probe delta {finest_probe:g}"
            )

    series = run_probes(
        circuit, observable, delta_0=args.delta0, ratio=args.ratio,
        count=args.count, budget_s=args.budget,
    )
    prediction = predict_resources(series, targets, tail_points=args.tail_points)

    report = {
        "series": series.to_json_dict(),
        "prediction": prediction.to_json_dict(),
    }
    _write_json(manifest.add(out / "prediction.json"), report)
    with open(manifest.add(out / "probes.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["delta", "n_max", "runtime_s"])
        for p in series.probes:
            writer.writerow([repr(p.delta), p.n_max, repr(p.runtime_s)])
    manifest.write(out)
    for t, nm, rt in zip(targets, prediction.n_max, prediction.runtime_s):
        print(f"delta={t:g}: predicted N_max ~ {nm:.4g}, runtime ~ {rt:.4g}s")
    if prediction.low_confidence:
        print("warning: low-confidence prediction (peak near end of circuit)", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# converge
# ---------------------------------------------------------------------------


def cmd_converge(args) -> int:
    circuit = Circuit.load(args.circuit)
    observable = _load_observable(args.observable, circuit.n)
    workers = _set_workers(args.workers)
    out = _out_dir(args)
    manifest = _Manifest("converge", args, workers=workers)

    config = ConvergenceConfig(
        delta_0=args.delta0, ratio=args.ratio, eps_tol=args.eps_tol, ell=args.ell,
        t_cpu_s=args.t_cpu, max_steps=args.max_steps,
        cumulative_budget_s=args.cumulative_budget,
    )
    try:
        report = run_protocol(circuit, observable, config)
    except RowCapExceeded as exc:
        partial = getattr(exc, "report", None)
        if partial is not None:
            _write_json(manifest.add(out / "report.json"), partial.to_json_dict(include_timings=False))
        manifest.write(out)
        print(f"resource cap exceeded: {exc}", file=sys.stderr)
        return EXIT_RESOURCE

    _write_json(manifest.add(out / "report.json"), report.to_json_dict(include_timings=False))
    _write_json(manifest.add(out / "timing.json"), report.timing_json_dict())
    with open(manifest.add(out / "convergence.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["log10_inv_delta", "estimate", "runtime_s"])
        for s in report.steps:
            writer.writerow([repr(math.log10(1.0 / s.delta)), repr(s.estimate), repr(s.runtime_s)])
    manifest.write(out)

    verdict = classify(report)
    if verdict.kind == "converged":
        print(f"status = {report.status}; estimate = {verdict.value!r} (window {verdict.window})")
    else:
        print(f"status = {report.status}; estimate range = {verdict.estimate_range}")
        if verdict.extrapolated_costs:
            print(f"next-step runtime extrapolation: {verdict.extrapolated_costs}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def _load_snapshot_coeffs(path: Path, n_hint: int | None):
    if path.suffix == ".npz":
        snap = PauliSum.from_npz(path)
        return np.abs(snap.coeffs), snap
    if n_hint is None:
        raise UsageError("--n is required to load a CSV snapshot")
    snap = PauliSum.from_csv(path, n_hint)
    return np.abs(snap.coeffs), snap


def cmd_analyze(args) -> int:
    out = _out_dir(args)
    manifest = _Manifest("analyze", args)
    did_anything = False

    if args.snapshot:
        abs_coeffs, snap = _load_snapshot_coeffs(Path(args.snapshot), args.n)
        if args.histogram:
            hist = histogram(
                snap.coeffs, bins=args.bins, absolute=args.absolute,
                delta_floor=args.delta if args.absolute else None, delta=args.delta,
            )
            hist.to_csv(manifest.add(out / "histogram.csv"))
            did_anything = True
        fits: list[MFitResult] = []
        if args.mle:
            if args.delta is None:
                raise UsageError("--mle requires --delta")
            for mult in _parse_float_list(args.xmin_mult):
                x_min = mult * args.delta
                m_hat = fit_m_mle(abs_coeffs, x_min)
                fits.append(
                    MFitResult(
                        method="mle", m=m_hat, x_min=x_min,
                        n_samples=int(np.count_nonzero(abs_coeffs >= x_min)),
                    )
                )
            did_anything = True
        if args.regression:
            if args.delta is None:
                raise UsageError("--regression requires --delta")
            fits.append(fit_m_regression(abs_coeffs, args.delta, l=args.l))
            did_anything = True
        if fits:
            _write_json(manifest.add(out / "fits.json"), [f.to_json_dict() for f in fits])
            for f in fits:
                print(f"{f.method} (x_min={f.x_min:g}): m = {f.m:.6f}")

    if args.trace:
        if not args.spikes:
            raise UsageError("--trace input supports --spikes analysis")
        trace = TraceLog.from_csv(args.trace)
        spikes = detect_eta_spikes(trace, threshold=args.threshold)
        _write_json(
            manifest.add(out / "spikes.json"),
            [{"k": k, "eta": eta, "theta": theta} for k, eta, theta in spikes],
        )
        print(f"{len(spikes)} eta spike(s) at threshold {args.threshold}")
        did_anything = True

    if args.s_theta:
        if args.m is None or args.delta is None:
            raise UsageError("--s-theta requires --m and --delta")
        model = PowerLawModel(m=args.m, delta=args.delta)
        thetas = np.linspace(args.theta_min, args.theta_max, args.theta_count)
        rows = s_theta_sweep(model, thetas)
        with open(manifest.add(out / "s_theta.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["theta", "s", "r"])
            for row in rows:
                writer.writerow([repr(row["theta"]), repr(row["s"]), repr(row["r"])])
        did_anything = True

    if not did_anything:
        raise UsageError("nothing to analyze: pass --histogram/--mle/--regression/--spikes/--s-theta")
    manifest.write(out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pauliprop",
        description="Sparse Pauli-path propagation, resource estimation, and convergence diagnostics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-circuit", help="generate a model-family circuit file")
    gen_sub = gen.add_subparsers(dest="family", required=True)

    ki = gen_sub.add_parser("kicked-ising", help="kicked transverse-field Ising")
    ki.add_argument("--topology", default="ibm_heavy_hex_127",
                    help="builtin name or edge-list file (default: ibm_heavy_hex_127)")
    ki.add_argument("--T", type=int, required=True, help="Trotter steps")
    ki.add_argument("--theta-zz", type=float, default=-math.pi / 2)
    ki.add_argument("--theta-x", default="0.3", help="angle in radians, or 'random'")
    ki.add_argument("--theta-x-low", type=float, default=-math.pi / 4)
    ki.add_argument("--theta-x-high", type=float, default=math.pi / 4)
    ki.add_argument("--seed", type=int, default=None)
    ki.add_argument("--out", required=True)
    ki.set_defaults(func=cmd_gen_circuit)

    gi = gen_sub.add_parser("grid-ising", help="2D Ising first-order Trotterization")
    gi.add_argument("--rows", type=int, required=True)
    gi.add_argument("--cols", type=int, required=True)
    gi.add_argument("--h", type=float, required=True)
    gi.add_argument("--t", type=float, required=True, help="total evolution time")
    gi.add_argument("--dt", type=float, required=True)
    gi.add_argument("--j-coupling", type=float, default=-1.0)
    gi.add_argument("--out", required=True)
    gi.set_defaults(func=cmd_gen_circuit)

    run_p = sub.add_parser("run", help="propagate an observable at one threshold")
    run_p.add_argument("--circuit", required=True)
    run_p.add_argument("--observable", required=True, help="Pauli label or observable JSON file")
    run_p.add_argument("--delta", type=float, required=True)
    run_p.add_argument("--out-dir", required=True)
    run_p.add_argument("--snapshots", default=None, help="'steps' or comma-separated gate indices")
    run_p.add_argument("--budget", type=float, default=None, help="wall-clock budget (s)")
    run_p.add_argument("--workers", type=int, default=None)
    run_p.add_argument("--max-rows", type=int, default=None)
    run_p.set_defaults(func=cmd_run)

    est = sub.add_parser("estimate", help="probe runs + N_max/runtime extrapolation")
    est.add_argument("--circuit", required=True)
    est.add_argument("--observable", required=True)
    est.add_argument("--delta0", type=float, default=DEFAULT_DELTA_0)
    est.add_argument("--ratio", type=float, default=DEFAULT_RATIO)
    est.add_argument("--count", type=int, default=3)
    est.add_argument("--targets", required=True, help="comma-separated target deltas")
    est.add_argument("--tail-points", type=int, default=4)
    est.add_argument("--budget", type=float, default=None)
    est.add_argument("--workers", type=int, default=None)
    est.add_argument("--out-dir", required=True)
    est.set_defaults(func=cmd_estimate)

    conv = sub.add_parser("converge", help="apparent-convergence protocol")
    conv.add_argument("--circuit", required=True)
    conv.add_argument("--observable", required=True)
    conv.add_argument("--delta0", type=float, default=0.125)
    conv.add_argument("--ratio", type=float, default=0.5)
    conv.add_argument("--eps-tol", type=float, default=1e-2)
    conv.add_argument("--ell", type=int, default=3)
    conv.add_argument("--t-cpu", type=float, default=600.0, help="per-step budget (s)")
    conv.add_argument("--max-steps", type=int, default=40)
    conv.add_argument("--cumulative-budget", type=float, default=None)
    conv.add_argument("--workers", type=int, default=None)
    conv.add_argument("--out-dir", required=True)
    conv.set_defaults(func=cmd_converge)

    ana = sub.add_parser("analyze", help="histograms, exponent fits, spikes, s(theta) sweeps")
    ana.add_argument("--snapshot", default=None, help="snapshot .npz or .csv")
    ana.add_argument("--trace", default=None, help="trace CSV (for --spikes)")
    ana.add_argument("--n", type=int, default=None, help="qubit count for CSV snapshots")
    ana.add_argument("--histogram", action="store_true")
    ana.add_argument("--bins", type=int, default=2048)
    ana.add_argument("--absolute", action="store_true")
    ana.add_argument("--mle", action="store_true")
    ana.add_argument("--xmin-mult", default="1", help="comma-separated multiples of delta")
    ana.add_argument("--regression", action="store_true")
    ana.add_argument("--l", type=float, default=1.0)
    ana.add_argument("--delta", type=float, default=None)
    ana.add_argument("--spikes", action="store_true")
    ana.add_argument("--threshold", type=float, default=0.2)
    ana.add_argument("--s-theta", action="store_true")
    ana.add_argument("--m", type=float, default=None)
    ana.add_argument("--theta-min", type=float, default=0.05)
    ana.add_argument("--theta-max", type=float, default=math.pi / 2 - 0.05)
    ana.add_argument("--theta-count", type=int, default=63)
    ana.add_argument("--out-dir", required=True)
    ana.set_defaults(func=cmd_analyze)

    return parser


def _iter_subparsers(parser):
    for action in parser._subparsers._group_actions if parser._subparsers else []:
        for sub in action.choices.values():
            yield sub
            if sub._subparsers:
                yield from _iter_subparsers(sub)


def _extract_config(argv):
    """Pull --config PATH out of argv; returns (argv, config dict or None)."""
    argv = list(argv)
    for i, tok in enumerate(argv):
        if tok == "--config":
            if i + 1 >= len(argv):
                raise UsageError("--config requires a file path")
            path = argv[i + 1]
            del argv[i : i + 2]
            break
        if tok.startswith("--config="):
            path = tok.split("=", 1)[1]
            del argv[i]
            break
    else:
        return argv, None
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    return argv, cfg


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        argv, config = _extract_config(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError) as exc:
        print(f"usage error: cannot read config file: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if config:
        # config fills defaults; explicit flags still win
        for sub in _iter_subparsers(parser):
            known = {a.dest: a for a in sub._actions}
            overrides = {k: v for k, v in config.items() if k in known}
            if overrides:
                sub.set_defaults(**overrides)
                for dest in overrides:
                    known[dest].required = False
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvariantViolation, QuadratureError, SingularityError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except BudgetExceeded as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except RowCapExceeded as exc:
        print(f"resource cap exceeded: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (PauliError, CircuitError, EstimationImpossible, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
