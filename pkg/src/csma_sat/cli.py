"""Command-line interface: solve, optimize, dcf, simulate and sweep.

Every command prints one record (or one table for ``sweep``) as JSON or CSV.
Exit codes: 0 success, 2 invalid input, 3 numerical failure; errors are
written to stderr as a JSON object.
"""

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import analysis, dcf, numerics, optimizer, simulator
from .model import (
    BackoffSchedule,
    Branch,
    NetworkParams,
    Receiver,
    ScheduleKind,
    ValidationError,
    db_to_linear,
    rate_to_threshold,
    validate,
)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3

SWEEP_VARIABLES = ("mu", "W", "q0", "n", "a", "x", "rho_db")
SWEEP_OUTPUTS = ("p", "alpha", "lambda_analytic", "lambda_max", "lambda_sim", "W_opt", "q0_opt", "mu0")
PRESETS = ("fig4", "fig5a", "fig5b", "fig5c")


class NumericalFailure(RuntimeError):
    pass


# -- input assembly ----------------------------------------------------------


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ValidationError([f"cannot read config {path!r}: {exc.strerror}"]) from exc
    except json.JSONDecodeError as exc:
        raise ValidationError([f"config {path!r} is not valid JSON: {exc}"]) from exc


def load_preset(name):
    if name not in PRESETS:
        raise ValidationError([f"unknown preset {name!r}; choose from {', '.join(PRESETS)}"])
    text = resources.files("csma_sat").joinpath("presets", f"{name}.json").read_text()
    return json.loads(text)


def _normalise_rho(d):
    """Fold an optional ``rho_db`` entry into linear ``rho``."""
    d = dict(d)
    if "rho_db" in d:
        if "rho" in d:
            raise ValidationError(["give either rho (linear) or rho_db, not both"])
        d["rho"] = db_to_linear(float(d.pop("rho_db")))
    return d


def _flag_overrides(args):
    """Network fields set on the command line."""
    out = {}
    problems = []
    for name in ("n", "a", "x", "mu"):
        v = getattr(args, name, None)
        if v is not None:
            out[name] = v
    rate = getattr(args, "rate_bps_hz", None)
    if rate is not None:
        if "mu" in out:
            problems.append("give either --mu or --rate-bps-hz, not both")
        else:
            try:
                out["mu"] = rate_to_threshold(rate)
            except ValueError as exc:
                problems.append(str(exc))
    snr_db, snr_lin = getattr(args, "snr_db", None), getattr(args, "snr_linear", None)
    if snr_db is not None and snr_lin is not None:
        problems.append("give either --snr-db or --snr-linear, not both")
    elif snr_db is not None:
        out["rho"] = db_to_linear(snr_db)
    elif snr_lin is not None:
        out["rho"] = snr_lin
    if getattr(args, "model", None) is not None:
        out["receiver"] = args.model
    if problems:
        raise ValidationError(problems)
    return out


def _schedule_from_flags(args, base):
    """Schedule dict from --window/--q0/--K/--schedule layered over ``base``."""
    window = getattr(args, "window", None)
    K = getattr(args, "K", None)
    q0 = getattr(args, "q0", None)
    kind = getattr(args, "schedule", None)
    if window is not None and (q0 is not None or kind is not None):
        raise ValidationError(["--window fixes the whole schedule; drop --q0/--schedule"])
    if window is not None:
        if window < 1:
            raise ValidationError([f"--window must be >= 1, got {window}"])
        K = base.get("cutoff_K", 0) if K is None else K
        if K < 0:
            raise ValidationError([f"--K must be >= 0, got {K}"])
        return dcf.window_schedule(window, K).to_dict()
    if base is None and q0 is None and K is None and kind is None:
        return None
    sched = dict(base or {})
    if q0 is not None:
        sched["q0"] = q0
    if K is not None:
        sched["cutoff_K"] = K
    if kind is not None:
        sched["kind"] = kind
    return sched


def network_dict(args, need_schedule=True):
    """Merge config file and flags into a NetworkParams dict."""
    d = {}
    if getattr(args, "config", None):
        d = load_json(args.config)
        if not isinstance(d, dict):
            raise ValidationError(["config must be a JSON object"])
        d = dict(d.get("params", d))
    d = _normalise_rho(d)
    d.update(_flag_overrides(args))
    sched = _schedule_from_flags(args, d.get("schedule"))
    if sched is None and not need_schedule:
        sched = BackoffSchedule.binary_exponential(1.0, 0).to_dict()
    if sched is not None:
        sched.setdefault("q0", 1.0)
        d["schedule"] = sched
    return d


def build_params(d) -> NetworkParams:
    try:
        params = NetworkParams.from_dict(d)
    except ValidationError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError([f"malformed parameters: {exc}"]) from exc
    return validate(params)


# -- commands ----------------------------------------------------------------


def _solve_record(params, large_K=False):
    rep = analysis.large_K_solve_p(params) if large_K else analysis.solve_p(params)
    ss = analysis.throughput(rep.p_A, params)
    return {
        "model": params.receiver.value,
        "fixed_point": "large_K" if large_K else "exact",
        "p_A": rep.p_A,
        "alpha": ss.alpha,
        "lambda_out": ss.lambda_out,
        "residual": rep.residual,
    }


def cmd_solve(args):
    params = build_params(network_dict(args))
    return _solve_record(params, large_K=args.large_k)


def _optimize_record(params):
    design = optimizer.max_throughput(params)
    rec = {"model": params.receiver.value}
    rec.update(design.to_dict())
    win = dcf.optimal_window(params.n, params.K, params.mu, params.rho, params.a, params.x, params.receiver)
    rec["W_opt"] = win.W_opt
    rec["W_real"] = win.W_real
    if params.receiver is Receiver.CAPTURE:
        rec["mu0"] = win.mu0
    if design.diagnostics:
        rec["diagnostics"] = list(design.diagnostics)
    return rec


def cmd_optimize(args):
    params = build_params(network_dict(args, need_schedule=False))
    return _optimize_record(params)


_DCF_FLAGS = (
    ("payload_bytes", int),
    ("mac_header_bytes", int),
    ("phy_header_us", float),
    ("ack_bytes", int),
    ("slot_time_us", float),
    ("sifs_us", float),
    ("difs_us", float),
)


def cmd_dcf(args):
    d = {}
    if args.config:
        d = load_json(args.config)
        if not isinstance(d, dict):
            raise ValidationError(["config must be a JSON object"])
    d = _normalise_rho(d)
    net = {k: d.pop(k) for k in ("n", "mu", "rho", "receiver") if k in d}
    for name, _ in _DCF_FLAGS:
        v = getattr(args, name)
        if v is not None:
            d[name] = v
    if args.basic_rate_mbps is not None:
        d["basic_rate_bps"] = args.basic_rate_mbps * 1e6
    if args.data_rate_mbps is not None:
        d["data_rate_bps"] = args.data_rate_mbps * 1e6
    if args.window is not None:
        d["initial_window_W"] = args.window
    if args.K is not None:
        d["cutoff_K"] = args.K
    params = dcf.DcfParams.from_dict(d).validate()
    mapping = dcf.compute_tau(params)
    rec = mapping.to_dict()

    net.update(_flag_overrides(args))
    missing = [k for k in ("n", "mu", "rho") if k not in net]
    if len(missing) < 3:
        if missing:
            raise ValidationError([f"missing field {k!r}" for k in missing])
        n, mu, rho = int(net["n"]), float(net["mu"]), float(net["rho"])
        K = params.cutoff_K
        base = NetworkParams(n, mapping.a, mapping.x, mu, rho, dcf.window_schedule(params.initial_window_W, K))
        validate(base)
        col = dcf.optimal_window_collision(n, K, mu, rho, mapping.a, mapping.x)
        cap = dcf.optimal_window_capture(n, K, mu, rho, mapping.a, mapping.x)
        rec.update(
            {
                "W_opt_collision": col.W_opt,
                "W_real_collision": col.W_real,
                "lambda_max_collision": col.lambda_max,
                "W_opt_capture": cap.W_opt,
                "W_real_capture": cap.W_real,
                "lambda_max_capture": cap.lambda_max,
                "branch_capture": cap.branch.value,
                "mu0": cap.mu0,
            }
        )
        for rc in (Receiver.COLLISION, Receiver.CAPTURE):
            lam = dcf.window_throughput(n, params.initial_window_W, K, mu, rho, mapping.a, mapping.x, rc)
            rec[f"lambda_at_W_{rc.value}"] = lam
    return rec


def _sim_config(args):
    d = {}
    if args.config:
        d = load_json(args.config)
        if not isinstance(d, dict):
            raise ValidationError(["config must be a JSON object"])
    net = dict(d.get("params", {})) if "params" in d else {k: v for k, v in d.items() if k not in _SIM_KEYS}
    net = _normalise_rho(net)
    net.update(_flag_overrides(args))
    window = args.window if args.window is not None else d.get("window")
    K = args.K if args.K is not None else d.get("window_K")
    mode = args.backoff_mode or d.get("backoff_mode") or ("window" if window is not None else "persistent")
    if mode == "window":
        if window is None:
            raise ValidationError(["window mode needs --window"])
        K = 0 if K is None else K
        net["schedule"] = dcf.window_schedule(window, K).to_dict()
    else:
        sched = _schedule_from_flags(argparse.Namespace(window=None, K=args.K, q0=args.q0, schedule=args.schedule), net.get("schedule"))
        if sched is not None:
            sched.setdefault("q0", 1.0)
            net["schedule"] = sched
    params = build_params(net)
    cfg = simulator.SimConfig(
        params=params,
        backoff_mode=mode,
        window=window,
        window_K=K if mode == "window" else None,
        total_mini_slots=int(args.slots if args.slots is not None else d.get("total_mini_slots", 1_000_000)),
        warmup_mini_slots=int(args.warmup if args.warmup is not None else d.get("warmup_mini_slots", 10_000)),
        seed=int(args.seed if args.seed is not None else d.get("seed", 0)),
        replications=int(args.replications if args.replications is not None else d.get("replications", 1)),
    )
    return cfg.validate()


_SIM_KEYS = ("backoff_mode", "window", "window_K", "total_mini_slots", "warmup_mini_slots", "seed", "replications")


def _z(sim, ref):
    if sim.stderr is None or not math.isfinite(sim.stderr) or sim.stderr == 0:
        return None
    return (sim.mean - ref) / sim.stderr


def cmd_simulate(args):
    cfg = _sim_config(args)
    report = simulator.run(cfg, workers=args.workers)
    rec = {"config": cfg.to_dict()}
    rec.update(report.to_dict())
    eff = cfg.effective_params()
    preds = {}
    for label, large_K in (("exact", False), ("large_K", True)):
        try:
            s = _solve_record(eff, large_K=large_K)
        except (analysis.SolverError, analysis.InfeasibleError, numerics.IterationLimitError) as exc:
            preds[label] = {"error": str(exc)}
            continue
        preds[label] = {
            "p_A": s["p_A"],
            "alpha": s["alpha"],
            "lambda_out": s["lambda_out"],
            "z_lambda": _z(report.lambda_hat, s["lambda_out"]),
            "z_p": _z(report.p_hat, s["p_A"]),
            "z_alpha": _z(report.alpha_hat, s["alpha"]),
        }
    rec["analytic"] = preds
    if args.trace:
        simulator.write_trace(cfg, args.trace)
    return rec


# -- sweeps ------------------------------------------------------------------


@dataclass
class SweepSpec:
    variable: str
    values: list
    fixed: dict = field(default_factory=dict)
    outputs: list = field(default_factory=lambda: ["lambda_analytic"])
    series: list = field(default_factory=list)
    fixed_point: str = "exact"
    simulation: dict = field(default_factory=dict)

    @staticmethod
    def expand_values(v):
        """Explicit list, or ``{start, stop, count, spacing}``."""
        if isinstance(v, dict):
            try:
                start, stop, count = float(v["start"]), float(v["stop"]), int(v["count"])
            except KeyError as exc:
                raise ValidationError([f"range values need start, stop and count (missing {exc})"]) from exc
            if count < 2:
                raise ValidationError([f"count must be >= 2, got {count}"])
            spacing = v.get("spacing", "linear")
            if spacing == "log":
                if start <= 0 or stop <= 0:
                    raise ValidationError(["log spacing needs positive start and stop"])
                return np.geomspace(start, stop, count).tolist()
            if spacing != "linear":
                raise ValidationError([f"spacing must be linear or log, got {spacing!r}"])
            return np.linspace(start, stop, count).tolist()
        return list(v)

    @classmethod
    def from_dict(cls, d):
        known = {"variable", "values", "fixed", "outputs", "series", "fixed_point", "simulation", "description"}
        problems = [f"unknown field {k!r}" for k in sorted(set(d) - known)]
        for k in ("variable", "values"):
            if k not in d:
                problems.append(f"missing field {k!r}")
        if problems:
            raise ValidationError(problems)
        spec = cls(
            variable=d["variable"],
            values=cls.expand_values(d["values"]),
            fixed=dict(d.get("fixed", {})),
            outputs=list(d.get("outputs", ["lambda_analytic"])),
            series=list(d.get("series", [])),
            fixed_point=d.get("fixed_point", "exact"),
            simulation=dict(d.get("simulation", {})),
        )
        return spec.validate()

    def problems(self):
        out = []
        if self.variable not in SWEEP_VARIABLES:
            out.append(f"variable must be one of {', '.join(SWEEP_VARIABLES)}, got {self.variable!r}")
        if len(self.values) < 2:
            out.append(f"a sweep needs at least 2 values, got {len(self.values)}")
        else:
            try:
                diffs = np.diff(np.asarray(self.values, dtype=float))
            except (TypeError, ValueError):
                diffs = None
                out.append("sweep values must be numbers")
            if diffs is not None and not (np.all(diffs > 0) or np.all(diffs < 0)):
                out.append("sweep values must be strictly monotone")
        bad = [o for o in self.outputs if o not in SWEEP_OUTPUTS]
        if bad:
            out.append(f"unknown outputs {bad}; choose from {', '.join(SWEEP_OUTPUTS)}")
        if self.fixed_point not in ("exact", "large_K"):
            out.append(f"fixed_point must be exact or large_K, got {self.fixed_point!r}")
        for i, s in enumerate(self.series):
            if not isinstance(s, dict):
                out.append(f"series[{i}] must be an object")
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise ValidationError(problems)
        return self


def _row_params(spec: SweepSpec, series, value):
    d = dict(spec.fixed)
    d.update({k: v for k, v in series.items() if k != "name"})
    d[spec.variable] = value
    d = _normalise_rho(d)
    K = int(d.pop("K", d.pop("cutoff_K", 0)))
    W = d.pop("W", None)
    q0 = d.pop("q0", 1.0)
    kind = d.pop("schedule_kind", "binary_exponential")
    if W is not None:
        d["schedule"] = dcf.window_schedule(W, K).to_dict()
    else:
        d["schedule"] = {"q0": q0, "cutoff_K": K, "kind": kind}
    if "n" in d:
        n = d["n"]
        if float(n) != int(n):
            raise ValidationError([f"n must be an integer, got {n}"])
        d["n"] = int(n)
    return build_params(d), W, K


_ROW_ERRORS = (analysis.InfeasibleError, optimizer.BranchError, numerics.NoSignChangeError)


def _sweep_row(job):
    spec, series, value, sim = job
    params, W, K = _row_params(spec, series, value)
    row = {}
    if spec.series:
        row["series"] = series.get("name", json.dumps(series, sort_keys=True))
    row[spec.variable] = value
    out = set(spec.outputs)
    if out & {"p", "alpha", "lambda_analytic"}:
        large_K = spec.fixed_point == "large_K"
        if W is not None and large_K:
            rep = dcf.dcf_fixed_point(params.n, W, K, params.mu, params.rho, params.receiver)
        else:
            rep = analysis.large_K_solve_p(params) if large_K else analysis.solve_p(params)
        ss = analysis.throughput(rep.p_A, params)
        vals = {"p": rep.p_A, "alpha": ss.alpha, "lambda_analytic": ss.lambda_out}
    else:
        vals = {}
    errors = []
    if out & {"lambda_max", "q0_opt", "W_opt", "mu0"}:
        # one undefined point (e.g. a capture pole) leaves blank cells instead of aborting the sweep
        try:
            design = optimizer.max_throughput(params)
            vals["lambda_max"] = design.lambda_max
            vals["q0_opt"] = design.q0_opt
        except _ROW_ERRORS as exc:
            errors.append(str(exc))
            vals["lambda_max"] = vals["q0_opt"] = None
        if "W_opt" in out:
            try:
                vals["W_opt"] = dcf.optimal_window(params.n, K, params.mu, params.rho, params.a, params.x, params.receiver).W_opt
            except _ROW_ERRORS as exc:
                errors.append(str(exc))
                vals["W_opt"] = None
        if "mu0" in out:
            vals["mu0"] = optimizer.mu0_capture(params) if params.receiver is Receiver.CAPTURE else None
    if "lambda_sim" in out and sim is not None:
        mode = "window" if W is not None else "persistent"
        cfg = simulator.SimConfig(
            params=params,
            backoff_mode=mode,
            window=W,
            window_K=K if W is not None else None,
            total_mini_slots=int(sim.get("total_mini_slots", 1_000_000)),
            warmup_mini_slots=int(sim.get("warmup_mini_slots", 10_000)),
            seed=int(sim.get("seed", 0)),
            replications=int(sim.get("replications", 10)),
        ).validate()
        rep_sim = simulator.run(cfg)
        vals["lambda_sim"] = rep_sim.lambda_hat.mean
        vals["lambda_sim_stderr"] = rep_sim.lambda_hat.to_dict()["stderr"]
    for o in spec.outputs:
        if o in vals:
            row[o] = vals[o]
            if o == "lambda_sim":
                row["lambda_sim_stderr"] = vals["lambda_sim_stderr"]
    if errors:
        row["error"] = "; ".join(dict.fromkeys(errors))
    return row


def run_sweep(spec: SweepSpec, simulate=False, sim_overrides=None, workers=1):
    """Rows in sweep order (series-major); analytic columns are deterministic."""
    sim = None
    if simulate:
        sim = dict(spec.simulation)
        sim.update({k: v for k, v in (sim_overrides or {}).items() if v is not None})
    series = spec.series or [{}]
    jobs = [(spec, s, v, sim) for s in series for v in spec.values]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_row, jobs))
    return [_sweep_row(j) for j in jobs]


def _parse_values(text):
    if text is None:
        return None
    parts = [p for p in text.replace(" ", "").split(",") if p]
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ValidationError([f"--values must be comma-separated numbers: {exc}"]) from exc


def cmd_sweep(args):
    if args.preset and args.config:
        raise ValidationError(["give either --preset or --config, not both"])
    d = load_preset(args.preset) if args.preset else (load_json(args.config) if args.config else {})
    if not isinstance(d, dict):
        raise ValidationError(["sweep config must be a JSON object"])
    d = dict(d)
    if args.variable is not None:
        d["variable"] = args.variable
    values = _parse_values(args.values)
    if values is not None:
        d["values"] = values
    elif args.start is not None or args.stop is not None or args.count is not None:
        d["values"] = {"start": args.start, "stop": args.stop, "count": args.count, "spacing": args.spacing}
        missing = [k for k in ("start", "stop", "count") if d["values"][k] is None]
        if missing:
            raise ValidationError([f"missing --{k}" for k in missing])
    if args.outputs is not None:
        d["outputs"] = [o for o in args.outputs.split(",") if o]
    fixed = dict(d.get("fixed", {}))
    fixed.update(_flag_overrides(args))
    for name in ("K", "q0", "window"):
        v = getattr(args, name, None)
        if v is not None:
            fixed["W" if name == "window" else name] = v
    d["fixed"] = fixed
    if args.large_k:
        d["fixed_point"] = "large_K"
    spec = SweepSpec.from_dict(d)
    if args.simulate and "lambda_sim" not in spec.outputs:
        spec.outputs.append("lambda_sim")
    rows = run_sweep(
        spec,
        simulate=args.simulate,
        sim_overrides={"replications": args.replications, "total_mini_slots": args.slots, "seed": args.seed},
        workers=args.workers,
    )
    return {"variable": spec.variable, "fixed_point": spec.fixed_point, "rows": rows}


# -- output ------------------------------------------------------------------


def _clean(v):
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (Branch, Receiver, ScheduleKind)):
        return v.value
    return v


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, list):
            out[key] = json.dumps(v)
        else:
            out[key] = v
    return out


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def render(record, fmt):
    record = _clean(record)
    if fmt == "json":
        return json.dumps(record, indent=2, allow_nan=False) + "\n"
    rows = record["rows"] if "rows" in record and isinstance(record["rows"], list) else [record]
    flat = [_flatten(r) for r in rows]
    header = []
    for r in flat:
        header.extend(k for k in r if k not in header)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in flat:
        w.writerow([_csv_cell(r.get(k)) for k in header])
    return buf.getvalue()


# -- parser ------------------------------------------------------------------


def _common(defaults=True):
    # subcommands repeat the global flags; SUPPRESS keeps them from resetting values given earlier
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=d(None), help="JSON config file")
    p.add_argument("--format", choices=("json", "csv"), default=d("json"))
    p.add_argument("--output", default=d(None), help="write the result here instead of stdout")
    return p


def _network_flags(p, schedule=True):
    p.add_argument("--model", choices=[r.value for r in Receiver], help="receiver model")
    p.add_argument("--n", type=int, help="number of nodes")
    p.add_argument("--a", type=float, help="mini-slot length over packet length")
    p.add_argument("--x", type=float, help="failure detection time in mini-slots")
    p.add_argument("--mu", type=float, help="decoding threshold (linear)")
    p.add_argument("--rate-bps-hz", type=float, help="encoding rate R; sets mu = 2^R - 1")
    p.add_argument("--snr-db", type=float, help="mean received SNR in dB")
    p.add_argument("--snr-linear", type=float, help="mean received SNR (linear)")
    if schedule:
        p.add_argument("--q0", type=float, help="initial transmission probability")
        p.add_argument("--K", type=int, help="cutoff backoff stage")
        p.add_argument("--schedule", choices=("binary_exponential", "constant"))
        p.add_argument("--window", type=int, help="DCF initial window W (q_i = 2/(1 + W 2^i))")


def build_parser():
    common = _common(defaults=False)
    parser = argparse.ArgumentParser(prog="csma-sat", description=__doc__.splitlines()[0], parents=[_common()])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="steady state and throughput")
    _network_flags(p)
    p.add_argument("--large-k", action="store_true", help="drop the idle term (large cutoff form)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("optimize", parents=[common], help="maximum throughput and optimal q0 / W")
    _network_flags(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("dcf", parents=[common], help="802.11 DCF timing and optimal windows")
    _network_flags(p, schedule=False)
    for name, typ in _DCF_FLAGS:
        p.add_argument("--" + name.replace("_", "-"), type=typ)
    p.add_argument("--basic-rate-mbps", type=float)
    p.add_argument("--data-rate-mbps", type=float)
    p.add_argument("--window", type=int, help="initial window W")
    p.add_argument("--K", type=int, help="cutoff stage")
    p.set_defaults(func=cmd_dcf)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo simulation with analytic comparison")
    _network_flags(p)
    p.add_argument("--backoff-mode", choices=[m.value for m in simulator.BackoffMode])
    p.add_argument("--slots", type=int, help="total mini-slots per replication")
    p.add_argument("--warmup", type=int, help="warm-up mini-slots discarded")
    p.add_argument("--replications", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--trace", help="write replication 0 as a CSV event trace")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="tables over one parameter")
    _network_flags(p)
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--variable", choices=SWEEP_VARIABLES)
    p.add_argument("--values", help="comma-separated values")
    p.add_argument("--start", type=float)
    p.add_argument("--stop", type=float)
    p.add_argument("--count", type=int)
    p.add_argument("--spacing", choices=("linear", "log"), default="linear")
    p.add_argument("--outputs", help=f"comma-separated subset of {','.join(SWEEP_OUTPUTS)}")
    p.add_argument("--large-k", action="store_true")
    p.add_argument("--simulate", action="store_true", help="add simulated throughput columns")
    p.add_argument("--replications", type=int)
    p.add_argument("--slots", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def _fail(code, kind, message, problems=None):
    err = {"error": kind, "message": message}
    if problems:
        err["problems"] = problems
    sys.stderr.write(json.dumps(err) + "\n")
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        record = args.func(args)
        text = render(record, args.format)
    except ValidationError as exc:
        return _fail(EXIT_VALIDATION, "validation", str(exc), exc.problems)
    except numerics.DomainError as exc:
        return _fail(EXIT_VALIDATION, "validation", str(exc))
    except (
        analysis.SolverError,
        analysis.InfeasibleError,
        optimizer.BranchError,
        numerics.IterationLimitError,
        numerics.NoSignChangeError,
        NumericalFailure,
        ZeroDivisionError,
        OverflowError,
    ) as exc:
        return _fail(EXIT_NUMERICAL, "numerical", str(exc))
    if args.output:
        with open(args.output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
