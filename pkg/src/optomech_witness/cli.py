"""Command-line front end.

Usage::

    optomech-witness {verify,sweep,optimize,feasibility,simulate} [--config PATH]
        [--out PATH] [--format {csv,json}] [--seed N] [--threads N] [--cutoff N]

A JSON configuration file supplies everything; flags override it. Outputs
carry no timestamps, so identical inputs give byte-identical files. JSON
reports have the shape ``{"command": ..., "config": ..., "result": ...}``,
and ``config`` re-parses with :meth:`RunConfig.from_dict`.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 witness not violated.
"""

import argparse
import copy
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import analytic, fock
from .exceptions import ConfigError, NoViolationError, NumericalError, UnderTruncationError
from .optimize import SWEEP_COLUMNS, optimize_p, optimize_setting, sweep_n0, sweep_T
from .params import HardwareParams, SystemParams
from .statistics import DEFAULT_N_CAL, plan_runs, probability_vector, required_runs, simulate_experiment
from .witness import evaluate

COMMANDS = ("verify", "sweep", "optimize", "feasibility", "simulate")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_NO_VIOLATION = 0, 2, 3, 4
SIG_DIGITS = 12
VERIFY_TOL = 1e-8
MAX_SEED = 2**64 - 1

HARDWARE_KEYS = ("g0_hz", "kappa_hz", "omega_m_hz", "n_plus", "n_minus", "t1", "t2", "n0", "eta")
SYSTEM_KEYS = ("p", "T", "eta", "n0")

# sampling box of the default verification run
VERIFY_BOX = {"p": (0.0, 0.5), "T": (0.0, 1.0), "eta": (0.05, 1.0), "n0": (0.0, 1.0), "alpha": (-3.0, 3.0), "beta": (-3.0, 3.0)}


def _default_optimizer():
    return {"alpha_max": 6.0, "beta_max": 6.0, "p_max": 0.5, "p_min": 1e-6, "grid": [21, 21, 11]}


def _default_statistics():
    return {"significance": 3.0, "n_cal": DEFAULT_N_CAL, "seed": 0, "reps": 1000, "n_total": None}


def _default_verify():
    return {"points": 20, "grid": None}


@dataclass
class RunConfig:
    """Everything one CLI invocation needs.

    ``system`` holds ``p, T, eta, n0``; ``hardware`` holds the device rates
    given as frequency/2pi in Hz (``g0_hz``, ``kappa_hz``, ``omega_m_hz``)
    plus ``n_plus, n_minus, t1, t2, n0`` and the detection efficiency
    ``eta``. At most one of them may be set. ``setting`` optionally fixes
    the displacements ``alpha``/``beta`` (then only p is optimised, unless
    ``optimize_p`` is false).
    """

    command: str = "optimize"
    system: dict = None
    hardware: dict = None
    grids: dict = field(default_factory=dict)
    setting: dict = None
    optimizer: dict = field(default_factory=_default_optimizer)
    statistics: dict = field(default_factory=_default_statistics)
    verify: dict = field(default_factory=_default_verify)
    threads: int = 1
    cutoff: int = None
    format: str = "json"
    out: str = None

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        cfg = cls()
        for key in ("optimizer", "statistics", "verify"):
            if key in data and data[key] is not None:
                if not isinstance(data[key], dict):
                    raise ConfigError(f"'{key}' must be an object")
                merged = getattr(cfg, key)
                bad = set(data[key]) - set(merged)
                if bad:
                    raise ConfigError(f"unknown keys in '{key}': {sorted(bad)}")
                merged.update(copy.deepcopy(data[key]))
        for key in ("command", "system", "hardware", "grids", "setting", "threads", "cutoff", "format", "out"):
            if key in data:
                setattr(cfg, key, copy.deepcopy(data[key]))
        if cfg.grids is None:
            cfg.grids = {}
        return cfg.validate()

    def to_dict(self):
        return copy.deepcopy(asdict(self))

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {COMMANDS}")
        if self.system is not None and self.hardware is not None:
            raise ConfigError("supply either 'system' or 'hardware' parameters, not both")
        for name, block, keys in (("system", self.system, SYSTEM_KEYS), ("hardware", self.hardware, HARDWARE_KEYS)):
            if block is not None:
                if not isinstance(block, dict):
                    raise ConfigError(f"'{name}' must be an object")
                bad = set(block) - set(keys)
                if bad:
                    raise ConfigError(f"unknown keys in '{name}': {sorted(bad)}")
        if not isinstance(self.grids, dict):
            raise ConfigError("'grids' must be an object")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be 'csv' or 'json', got {self.format!r}")
        if isinstance(self.threads, bool) or not isinstance(self.threads, int) or self.threads < 1:
            raise ConfigError(f"threads must be a positive integer, got {self.threads!r}")
        if self.cutoff is not None and (isinstance(self.cutoff, bool) or not isinstance(self.cutoff, int) or self.cutoff < 3):
            raise ConfigError(f"cutoff must be an integer >= 3, got {self.cutoff!r}")
        seed = self.statistics.get("seed")
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= MAX_SEED:
            raise ConfigError(f"seed must be an integer in [0, 2**64), got {seed!r}")
        return self

    # -- derived objects ---------------------------------------------------

    def hardware_params(self):
        hw = dict(self.hardware)
        try:
            eta = hw.pop("eta")
            return HardwareParams.from_frequencies(**hw), eta
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"incomplete hardware block: {exc}") from exc

    def system_params(self, require_p=True):
        """SystemParams from whichever block is present."""
        if self.hardware is not None:
            hw, eta = self.hardware_params()
            return analytic.hardware_to_params(hw, eta)
        if self.system is None:
            raise ConfigError(f"command '{self.command}' needs a 'system' or 'hardware' block")
        values = dict(self.system)
        if not require_p:
            values.setdefault("p", 0.0)
        try:
            return SystemParams(**values)
        except TypeError as exc:
            raise ConfigError(f"incomplete system block: {exc}") from exc

    def optimizer_options(self):
        opts = dict(self.optimizer)
        opts["grid"] = tuple(opts["grid"])
        return opts


# -- output -----------------------------------------------------------------


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), f".{SIG_DIGITS}g")


def rows_to_csv(columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def report_json(cfg, result):
    doc = {"command": cfg.command, "config": cfg.to_dict(), "result": result}
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def _emit(cfg, text, stdout):
    if cfg.out is None:
        stdout.write(text)
        return
    try:
        with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write output to {cfg.out!r}: {exc}") from exc


# -- commands ---------------------------------------------------------------


def _grid(cfg, name, default=None):
    values = cfg.grids.get(name, default)
    if values is None:
        raise ConfigError(f"grid '{name}' is required for '{cfg.command}'")
    values = list(np.atleast_1d(values))
    if not values:
        raise ConfigError(f"grid '{name}' is empty")
    return [float(v) for v in values]


def _verify_points(cfg):
    spec = cfg.verify.get("grid")
    if spec is not None:
        if not isinstance(spec, dict):
            raise ConfigError("verify.grid must be an object of lists")
        axes = []
        for name in ("p", "T", "eta", "n0", "alpha", "beta"):
            values = list(np.atleast_1d(spec.get(name, [0.0] if name in ("n0", "alpha", "beta") else [])))
            if not values:
                raise ConfigError(f"verify grid '{name}' is empty")
            axes.append([float(v) for v in values])
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    n = cfg.verify.get("points")
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ConfigError(f"verify.points must be a positive integer, got {n!r}")
    rng = np.random.Generator(np.random.Philox(cfg.statistics["seed"]))
    lo = np.array([b[0] for b in VERIFY_BOX.values()])
    hi = np.array([b[1] for b in VERIFY_BOX.values()])
    return lo + (hi - lo) * rng.random((n, lo.size))


def _verify_one(point, cutoff):
    p, T, eta, n0, alpha, beta = (float(v) for v in point)
    params = SystemParams(p=p, T=T, eta=eta, n0=n0)
    try:
        oracle, used = fock.oracle_probability_set(params, alpha, beta, cutoff=cutoff)
    except UnderTruncationError as exc:
        raise UnderTruncationError(
            f"{exc} at point p={p:.6g}, T={T:.6g}, eta={eta:.6g}, n0={n0:.6g}, alpha={alpha:.6g}, beta={beta:.6g}",
            cutoff=exc.cutoff,
            point=dict(p=p, T=T, eta=eta, n0=n0, alpha=alpha, beta=beta),
        ) from exc
    model = analytic.probability_set(params, alpha, beta)
    a, b = oracle.to_dict(), model.to_dict()
    err = max(abs(a[k] - b[k]) for k in a)
    return {"p": p, "T": T, "eta": eta, "n0": n0, "alpha": alpha, "beta": beta, "cutoff": used, "max_abs_diff": err}


def _map(cfg, fn, items):
    if cfg.threads == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(fn, items))


def cmd_verify(cfg):
    points = _verify_points(cfg)
    rows = _map(cfg, lambda pt: _verify_one(pt, cfg.cutoff), points)
    worst = max(r["max_abs_diff"] for r in rows)
    passed = worst < VERIFY_TOL
    result = {"tolerance": VERIFY_TOL, "max_abs_diff": worst, "passed": passed, "points": rows}
    columns = ("p", "T", "eta", "n0", "alpha", "beta", "cutoff", "max_abs_diff")
    table = [[r[c] for c in columns] for r in rows]
    return result, columns, table, (EXIT_OK if passed else EXIT_NUMERICAL)


def cmd_sweep(cfg):
    Ts = _grid(cfg, "T")
    etas = _grid(cfg, "eta", [1.0])
    n0s = _grid(cfg, "n0", [0.0])
    opts = cfg.optimizer_options()
    if len(etas) == 1 and len(n0s) > 1:
        rows = sweep_n0(etas[0], n0s, Ts, threads=cfg.threads, **opts)
    else:
        rows = [r for n0 in n0s for r in sweep_T(etas, n0, Ts, threads=cfg.threads, **opts)]
    table = [r.as_tuple() for r in rows]
    return {"rows": [r.to_dict() for r in rows]}, SWEEP_COLUMNS, table, EXIT_OK


def cmd_optimize(cfg):
    params = cfg.system_params(require_p=False)
    res = optimize_setting(params.T, params.eta, params.n0, **cfg.optimizer_options())
    row = (params.T, params.eta, params.n0, res.alpha, res.beta, res.p, res.q, res.s_star, res.diff)
    return {"optimization": res.to_dict()}, SWEEP_COLUMNS, [row], EXIT_OK


def _resolve_setting(cfg):
    """(params, alpha, beta) for feasibility/simulate: fixed or optimised displacements."""
    params = cfg.system_params(require_p=False)
    setting = cfg.setting or {}
    opts = cfg.optimizer_options()
    if "alpha" in setting or "beta" in setting:
        try:
            alpha, beta = float(setting["alpha"]), float(setting["beta"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("setting needs numeric 'alpha' and 'beta'") from exc
        if setting.get("optimize_p", True):
            p, _ = optimize_p(params.T, params.eta, params.n0, alpha, beta, p_max=opts["p_max"], p_min=opts["p_min"])
            params = params.replace(p=p)
        return params, alpha, beta, False
    res = optimize_setting(params.T, params.eta, params.n0, **opts)
    return params.replace(p=res.p), res.alpha, res.beta, True


def _plan(cfg, params, alpha, beta):
    stats = cfg.statistics
    n_total = stats.get("n_total")
    n_req, plan = required_runs(
        params, alpha, beta, significance=stats["significance"], n_cal=stats["n_cal"], return_plan=True
    )
    if n_total is not None:
        plan = plan_runs(plan.functional, probability_vector(analytic.probability_set(params, alpha, beta)), int(n_total))
    return n_req, plan


def cmd_feasibility(cfg):
    params, alpha, beta, optimized = _resolve_setting(cfg)
    ev = evaluate(params, alpha, beta)
    if not ev.diff > 0:
        raise NoViolationError(f"Q - S* = {ev.diff:.6g} at T={params.T}, eta={params.eta}, n0={params.n0}: no violation")
    n_req, plan = _plan(cfg, params, alpha, beta)
    result = {
        "params": params.to_dict(),
        "setting": {"alpha": alpha, "beta": beta, "optimized_displacements": optimized},
        "Q": ev.q,
        "S_star": ev.s_star,
        "diff": ev.diff,
        "significance": cfg.statistics["significance"],
        "n_total": n_req,
        "plan": plan.to_dict(),
    }
    columns = ("T", "eta", "n0", "alpha", "beta", "p", "Q", "S_star", "diff", "n_total")
    row = (params.T, params.eta, params.n0, alpha, beta, params.p, ev.q, ev.s_star, ev.diff, n_req)
    return result, columns, [row], EXIT_OK


def cmd_simulate(cfg):
    reps = cfg.statistics.get("reps")
    if isinstance(reps, bool) or not isinstance(reps, int) or reps < 1:
        raise ConfigError(f"statistics.reps must be a positive integer, got {reps!r}")
    params, alpha, beta, _ = _resolve_setting(cfg)
    ev = evaluate(params, alpha, beta)
    if not ev.diff > 0:
        raise NoViolationError(f"Q - S* = {ev.diff:.6g}: no violation to simulate")
    _, plan = _plan(cfg, params, alpha, beta)
    seed = cfg.statistics["seed"]
    probs = analytic.probability_set(params, alpha, beta)
    chunks = np.array_split(np.arange(reps), cfg.threads)

    def run_chunk(idx):
        return [simulate_experiment(params, alpha, beta, plan, seed, probs, int(i)) for i in idx]

    values = np.array([v for chunk in _map(cfg, run_chunk, chunks) for v in chunk])
    result = {
        "seed": seed,
        "reps": reps,
        "params": params.to_dict(),
        "setting": {"alpha": alpha, "beta": beta},
        "plan": plan.to_dict(),
        "asymptotic_diff": ev.diff,
        "predicted_std": math.sqrt(plan.variance),
        "mean": float(values.mean()),
        "std": float(values.std(ddof=1)) if reps > 1 else 0.0,
        "fraction_positive": float(np.mean(values > 0)),
        "values": values.tolist(),
    }
    table = [(i, v) for i, v in enumerate(values)]
    return result, ("rep", "estimate"), table, EXIT_OK


HANDLERS = {
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "optimize": cmd_optimize,
    "feasibility": cmd_feasibility,
    "simulate": cmd_simulate,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="optomech-witness", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", metavar="PATH", help="JSON configuration file")
    parser.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
    parser.add_argument("--format", choices=("csv", "json"), help="output format")
    parser.add_argument("--seed", type=int, help="RNG seed (unsigned 64-bit)")
    parser.add_argument("--threads", type=int, help="worker threads")
    parser.add_argument("--cutoff", type=int, help="fixed Fock cutoff for the oracle (disables adaptation)")
    return parser


def load_config(args):
    data = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config!r}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config!r} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
    data = dict(data)
    data["command"] = args.command
    for key in ("out", "format", "threads", "cutoff"):
        value = getattr(args, key)
        if value is not None:
            data[key] = value
    if args.seed is not None:
        data["statistics"] = dict(data.get("statistics") or {}, seed=args.seed)
    return RunConfig.from_dict(data)


def run(cfg, stdout=None):
    """Execute a validated configuration; returns the exit code."""
    stdout = stdout or sys.stdout
    result, columns, table, code = HANDLERS[cfg.command](cfg)
    text = rows_to_csv(columns, table) if cfg.format == "csv" else report_json(cfg, result)
    _emit(cfg, text, stdout)
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(load_config(args))
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoViolationError as exc:
        print(f"no violation: {exc}", file=sys.stderr)
        return EXIT_NO_VIOLATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
