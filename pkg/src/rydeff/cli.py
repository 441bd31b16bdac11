"""Command-line experiment runner.

``rydeff run <config.json>`` executes one experiment description,
``rydeff compare a.csv b.csv`` reports deviations between two result files
and ``rydeff presets list`` shows the bundled figure configurations.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import os
import platform
import sys
import time
from importlib import metadata, resources
from pathlib import Path

import numpy as np

from . import eit, evolution, kmc, qjmc, rates
from .errors import InvalidSpecError, RydeffError
from .model import DephasingParams, EitParams, LatticeSpec, build_chain_interactions
from .operators import build_three_level_liouvillian, build_two_level_liouvillian

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

METHODS = ("full-integrate", "qjmc", "rate2", "rate4", "kmc", "eit-full", "eit-reduced",
           "eit-exclusion", "eit-nonpert", "steady-state", "positivity-scan", "compare")
DEPHASING_METHODS = {"full-integrate", "qjmc", "rate2", "rate4", "kmc", "positivity-scan"}
EIT_METHODS = {"eit-full", "eit-reduced", "eit-exclusion", "eit-nonpert"}
EIT_VARIANT = {"eit-reduced": "second_order", "eit-exclusion": "nn_exclusion",
               "eit-nonpert": "nonperturbative"}

# allowed keys per config section
_TOP = {"name", "description", "method", "methods", "lattice", "dephasing", "eit", "time", "initial",
        "observables", "seed", "n_traj", "n_runs", "kmc_cutoff", "qjmc_step", "tolerances",
        "output", "sweep", "scan", "steady", "fig5"}
_LATTICE = {"n_sites", "exponent_p", "nn_strength_V", "boundary", "range_cutoff"}
_DEPHASING = {"rabi_omega", "detuning", "dephasing_gamma", "decay_gamma_ryd"}
_EIT = {"omega_p", "omega_c", "detuning", "decay_Gamma"}
_TIME = {"t_end", "n_samples", "sample_times"}
_TOL = {"rel_tol", "abs_tol"}
_SCAN = {"V_range", "delta_range", "resolution"}
_STEADY = {"model"}
_FIG5 = {"n_sites", "V_values", "Gamma_values", "omega_p", "omega_c", "boundary", "range_cutoff"}
_SWEEP = {"parameter", "values"}


class ConfigError(InvalidSpecError):
    """Configuration problem, reported with the offending field path."""


def _check_keys(section: dict, allowed: set, path: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{path}: expected an object")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown key")


def _num(section, key, path, default=None, positive=False, nonneg=False):
    if key not in section:
        if default is None:
            raise ConfigError(f"{path}.{key}: required")
        return default
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number")
    if positive and v <= 0:
        raise ConfigError(f"{path}.{key}: must be positive")
    if nonneg and v < 0:
        raise ConfigError(f"{path}.{key}: must be non-negative")
    return v


def _int(section, key, path, default=None, minimum=None):
    v = _num(section, key, path, default)
    if v is not None and int(v) != v:
        raise ConfigError(f"{path}.{key}: expected an integer")
    if v is not None and minimum is not None and v < minimum:
        raise ConfigError(f"{path}.{key}: must be >= {minimum}")
    return None if v is None else int(v)


def _lattice(cfg) -> LatticeSpec:
    sec = cfg.get("lattice")
    if sec is None:
        raise ConfigError("lattice: required")
    _check_keys(sec, _LATTICE, "lattice")
    cutoff = sec.get("range_cutoff")
    if cutoff is not None:
        cutoff = _int(sec, "range_cutoff", "lattice", minimum=1)
    boundary = sec.get("boundary", "periodic")
    if boundary not in ("periodic", "open"):
        raise ConfigError("lattice.boundary: must be 'periodic' or 'open'")
    return LatticeSpec(n_sites=_int(sec, "n_sites", "lattice", minimum=1),
                       exponent_p=_int(sec, "exponent_p", "lattice", default=6, minimum=1),
                       nn_strength_V=float(_num(sec, "nn_strength_V", "lattice", default=0.0)),
                       boundary=boundary, range_cutoff=cutoff)


def _dephasing(cfg) -> DephasingParams:
    sec = cfg.get("dephasing")
    if sec is None:
        raise ConfigError("dephasing: required for this method")
    _check_keys(sec, _DEPHASING, "dephasing")
    return DephasingParams(
        rabi_omega=float(_num(sec, "rabi_omega", "dephasing", 1.0, positive=True)),
        detuning=float(_num(sec, "detuning", "dephasing", 0.0)),
        dephasing_gamma=float(_num(sec, "dephasing_gamma", "dephasing", nonneg=True)),
        decay_gamma_ryd=float(_num(sec, "decay_gamma_ryd", "dephasing", 0.0, nonneg=True)))


def _eit(cfg) -> EitParams:
    sec = cfg.get("eit")
    if sec is None:
        raise ConfigError("eit: required for this method")
    _check_keys(sec, _EIT, "eit")
    return EitParams(omega_p=float(_num(sec, "omega_p", "eit", nonneg=True)),
                     omega_c=float(_num(sec, "omega_c", "eit", 1.0, nonneg=True)),
                     detuning=float(_num(sec, "detuning", "eit", 0.0)),
                     decay_Gamma=float(_num(sec, "decay_Gamma", "eit", positive=True)))


def _grid(cfg) -> evolution.TimeGrid:
    sec = cfg.get("time")
    if sec is None:
        raise ConfigError("time: required for this method")
    _check_keys(sec, _TIME, "time")
    if "sample_times" in sec:
        st = sec["sample_times"]
        if not isinstance(st, list) or not st:
            raise ConfigError("time.sample_times: expected a non-empty list")
        return evolution.TimeGrid(np.asarray(st, dtype=float))
    return evolution.TimeGrid.uniform(float(_num(sec, "t_end", "time", positive=True)),
                                      _int(sec, "n_samples", "time", 101, minimum=2))


def _methods(cfg) -> list[str]:
    if "method" in cfg and "methods" in cfg:
        raise ConfigError("methods: give either 'method' or 'methods'")
    raw = cfg.get("methods", cfg.get("method"))
    if raw is None:
        raise ConfigError("method: required")
    items = [raw] if isinstance(raw, str) else raw
    if not isinstance(items, list) or not items:
        raise ConfigError("methods: expected a method name or a list of names")
    for i, m in enumerate(items):
        if m not in METHODS:
            raise ConfigError(f"methods[{i}]: unknown method {m!r}; expected one of {METHODS}")
    return items


def validate(cfg: dict) -> dict:
    """Check every field needed by the requested methods before any computation."""
    _check_keys(cfg, _TOP, "config")
    methods = _methods(cfg)
    for key, allowed in (("tolerances", _TOL), ("scan", _SCAN), ("steady", _STEADY),
                         ("fig5", _FIG5), ("sweep", _SWEEP)):
        if key in cfg:
            _check_keys(cfg[key], allowed, key)
    if "observables" in cfg:
        from .observables import ObservableSpec
        if not isinstance(cfg["observables"], list):
            raise ConfigError("observables: expected a list of names")
        for i, name in enumerate(cfg["observables"]):
            try:
                ObservableSpec.parse(name)
            except InvalidSpecError as exc:
                raise ConfigError(f"observables[{i}]: {exc}") from None
    if "sweep" in cfg:
        sw = cfg["sweep"]
        par = sw.get("parameter", "")
        section, _, field = par.partition(".")
        allowed = {"dephasing": _DEPHASING, "eit": _EIT, "lattice": _LATTICE}.get(section)
        if allowed is None or field not in allowed:
            raise ConfigError(f"sweep.parameter: cannot sweep {par!r}")
        if not isinstance(sw.get("values"), list) or not sw["values"]:
            raise ConfigError("sweep.values: expected a non-empty list")
    for m in methods:
        if m == "compare":
            _fig5(cfg)
            continue
        _lattice(cfg)
        if m in DEPHASING_METHODS:
            _dephasing(cfg)
        if m in EIT_METHODS:
            _eit(cfg)
        if m not in ("steady-state", "positivity-scan"):
            _grid(cfg)
        if m == "positivity-scan":
            _scan(cfg)
        if m == "steady-state":
            _steady_model(cfg)
    for key in ("n_traj", "n_runs"):
        if key in cfg:
            _int(cfg, key, "config", minimum=2)
    if "seed" in cfg:
        _int(cfg, "seed", "config", minimum=0)
    return cfg


def _scan(cfg):
    sec = cfg.get("scan")
    if sec is None:
        raise ConfigError("scan: required for positivity-scan")
    for key in ("V_range", "delta_range", "resolution"):
        v = sec.get(key)
        if not (isinstance(v, list) and len(v) == 2):
            raise ConfigError(f"scan.{key}: expected a pair")
    return sec


def _steady_model(cfg):
    model = cfg.get("steady", {}).get("model", "two-level")
    if model not in ("two-level", "eit-full", "eit-reduced", "eit-exclusion", "eit-nonpert"):
        raise ConfigError(f"steady.model: unknown model {model!r}")
    if model == "two-level":
        _dephasing(cfg)
    else:
        _eit(cfg)
    return model


def _fig5(cfg):
    sec = cfg.get("fig5")
    if sec is None:
        raise ConfigError("fig5: required for compare")
    for key in ("n_sites", "V_values", "Gamma_values"):
        if not isinstance(sec.get(key), list) or not sec[key]:
            raise ConfigError(f"fig5.{key}: expected a non-empty list")
    return sec


# execution -------------------------------------------------------------------

def _workers() -> int:
    env = os.environ.get("RYDEFF_THREADS")
    if env is None:
        return 1
    try:
        return max(1, int(env))
    except ValueError:
        raise ConfigError("RYDEFF_THREADS: expected an integer") from None


def _initial(cfg, n, levels=2):
    init = cfg.get("initial", "all_down")
    if init == "all_down":
        config = [0] * n
    elif isinstance(init, list) and len(init) == n and all(x in (0, 1) for x in init):
        config = init
    else:
        raise ConfigError("initial: expected 'all_down' or a list of N binary digits")
    if levels == 2:
        psi = qjmc.product_state(config)
        return config, psi, np.outer(psi, psi.conj())
    if any(config):
        raise ConfigError("initial: three-level runs start from the ground state")
    return config, None, eit.ground_state(n, 3)


def _observables(cfg, default):
    return list(cfg.get("observables", default))


def _tol(cfg):
    sec = cfg.get("tolerances", {})
    return (float(_num(sec, "rel_tol", "tolerances", 1e-8, positive=True)),
            float(_num(sec, "abs_tol", "tolerances", 1e-10, positive=True)))


def _run_method(method, cfg, outdir: Path, stem: str) -> list[str]:
    """Run one method; returns the written file names."""
    if method == "compare":
        return [_run_fig5(cfg, outdir, stem)]
    lattice = _lattice(cfg)
    if method == "positivity-scan":
        sec = _scan(cfg)
        res = tuple(int(x) for x in sec["resolution"])
        pmap = rates.scan_positivity(_dephasing(cfg), lattice, tuple(sec["V_range"]),
                                     tuple(sec["delta_range"]), res)
        path = outdir / f"{stem}.csv"
        pmap.to_csv(path)
        return [path.name]
    inter = build_chain_interactions(lattice)
    if method == "steady-state":
        return [_run_steady(cfg, inter, outdir, stem)]
    grid = _grid(cfg)
    rel, abs_ = _tol(cfg)
    n = lattice.n_sites
    if method in EIT_METHODS:
        obs = _observables(cfg, ["mean_density", "fluctuations", "sigma_x"])
        p = _eit(cfg)
        if method == "eit-full":
            _, _, rho0 = _initial(cfg, n, 3)
            rec = evolution.integrate(build_three_level_liouvillian(p, inter), rho0, grid,
                                      rel, abs_, observables=obs,
                                      transform=eit.project_and_reduce)
        else:
            _, _, rho0 = _initial(cfg, n)
            L = eit.build_reduced_liouvillian(p, inter, EIT_VARIANT[method])
            rec = evolution.integrate(L, rho0, grid, rel, abs_, observables=obs)
    else:
        p = _dephasing(cfg)
        obs = _observables(cfg, list(qjmc.DEFAULT_OBSERVABLES))
        config, psi, rho0 = _initial(cfg, n)
        seed = int(cfg.get("seed", 0))
        if method == "full-integrate":
            rec = evolution.integrate(build_two_level_liouvillian(p, inter), rho0, grid, rel,
                                      abs_, observables=obs)
        elif method == "qjmc":
            u = qjmc.JumpUnravelling(p, inter)
            rec = qjmc.average_trajectories(u, psi, grid, int(cfg.get("n_traj", 2000)), seed,
                                            observables=obs, step=cfg.get("qjmc_step"),
                                            workers=_workers())
        elif method in ("rate2", "rate4"):
            gen = rates.build_generator(p, inter, order=2 if method == "rate2" else 4,
                                        with_decay=p.decay_gamma_ryd > 0)
            v0 = np.zeros(2 ** n)
            v0[int("".join(map(str, config)), 2)] = 1.0
            rec = rates.integrate_rate_equation(gen, v0, grid, observables=obs)
        elif method == "kmc":
            rec = kmc.kmc_ensemble(p, lattice, config, grid, int(cfg.get("n_runs", 10000)), seed,
                                   cutoff=cfg.get("kmc_cutoff"), observables=obs)
        else:  # pragma: no cover - guarded by validate()
            raise ConfigError(f"method: {method!r} not runnable")
    path = outdir / f"{stem}.csv"
    rec.to_csv(path)
    return [path.name]


def _run_steady(cfg, inter, outdir, stem) -> str:
    model = _steady_model(cfg)
    obs = _observables(cfg, ["mean_density", "fluctuations", "g2_1"])
    if model == "two-level":
        L = build_two_level_liouvillian(_dephasing(cfg), inter)
        rho = evolution.steady_state(L)
    elif model == "eit-full":
        rho = eit.project_and_reduce(evolution.steady_state(
            build_three_level_liouvillian(_eit(cfg), inter)))
    else:
        rho = evolution.steady_state(eit.build_reduced_liouvillian(_eit(cfg), inter,
                                                                   EIT_VARIANT[model]))
    from .observables import evaluate
    rec = evolution.TrajectoryRecord(np.array([np.inf]),
                                     {o: np.array([evaluate(o, rho)]) for o in obs})
    path = outdir / f"{stem}.csv"
    rec.to_csv(path)
    np.save(outdir / f"{stem}_state.npy", rho)
    return path.name


def fig5_table(n_values, V_values, Gamma_values, omega_p=10.0, omega_c=1.0,
               boundary="periodic", range_cutoff=1):
    """Trace distance between projected full and nn-exclusion stationary states.

    Returns rows ``(Gamma, N, V, T)``.
    """
    rows = []
    for G in Gamma_values:
        p = EitParams(omega_p=omega_p, omega_c=omega_c, detuning=0.0, decay_Gamma=G)
        for n in n_values:
            base = LatticeSpec(n, nn_strength_V=1.0, boundary=boundary, range_cutoff=range_cutoff)
            excl = evolution.steady_state(eit.build_reduced_liouvillian(
                p, build_chain_interactions(base), "nn_exclusion"))
            for V in V_values:
                spec = LatticeSpec(n, nn_strength_V=V, boundary=boundary, range_cutoff=range_cutoff)
                full = evolution.steady_state(build_three_level_liouvillian(
                    p, build_chain_interactions(spec)))
                rows.append((G, n, V, evolution.trace_distance(eit.project_and_reduce(full), excl)))
    return rows


def _run_fig5(cfg, outdir, stem) -> str:
    sec = _fig5(cfg)
    rows = fig5_table(sec["n_sites"], sec["V_values"], sec["Gamma_values"],
                      float(sec.get("omega_p", 10.0)), float(sec.get("omega_c", 1.0)),
                      sec.get("boundary", "periodic"), sec.get("range_cutoff", 1))
    path = outdir / f"{stem}.csv"
    with open(path, "w") as fh:
        fh.write("Gamma,N,V,trace_distance\n")
        for G, n, V, T in rows:
            fh.write(f"{evolution.CSV_FORMAT % G},{n},{evolution.CSV_FORMAT % V},"
                     f"{evolution.CSV_FORMAT % T}\n")
    return path.name


def _expand_sweep(cfg):
    if "sweep" not in cfg:
        return [("", cfg)]
    section, _, field = cfg["sweep"]["parameter"].partition(".")
    out = []
    for v in cfg["sweep"]["values"]:
        sub = copy.deepcopy(cfg)
        del sub["sweep"]
        sub.setdefault(section, {})[field] = v
        out.append((f"_{field}={v:g}", sub))
    return out


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def run(config_path, output_override=None) -> int:
    """Execute a configuration file; returns the process exit code."""
    try:
        cfg = load_config(config_path)
        validate(cfg)
        variants = _expand_sweep(cfg)
        for _, sub in variants:
            validate(sub)
    except (ConfigError, InvalidSpecError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    name = cfg.get("name", Path(str(config_path)).stem)
    outdir = Path(output_override or cfg.get("output", "rydeff_out"))
    outdir.mkdir(parents=True, exist_ok=True)
    start = time.time()
    written = []
    try:
        for suffix, sub in variants:
            for method in _methods(sub):
                written += _run_method(method, sub, outdir, f"{name}_{method}{suffix}")
    except (ConfigError, InvalidSpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RydeffError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure in {name}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    manifest = {"config": cfg, "version": _version(), "python": platform.python_version(),
                "numpy": np.__version__, "wall_time_s": time.time() - start,
                "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "outputs": written}
    with open(outdir / f"{name}_manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, default=_json_default)
    for w in written:
        print(outdir / w)
    return EXIT_OK


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)


def load_config(path) -> dict:
    """Read a config file, or a bundled preset given by name."""
    p = Path(str(path))
    if not p.exists():
        stem = p.name if p.suffix == ".json" else p.name + ".json"
        bundled = resources.files("rydeff") / "presets" / stem
        if bundled.is_file():
            cfg = json.loads(bundled.read_text())
        else:
            raise ConfigError(f"{path}: no such file or preset")
    else:
        cfg = json.loads(p.read_text())
    if not isinstance(cfg, dict):
        raise ConfigError("config: expected a JSON object")
    if "config" in cfg and "outputs" in cfg:   # re-ingest a run manifest
        cfg = cfg["config"]
    return cfg


# compare ---------------------------------------------------------------------

def compare_records(a: evolution.TrajectoryRecord, b: evolution.TrajectoryRecord,
                    interpolate: bool = False) -> dict:
    """Per-observable max and mean absolute deviation over the shared columns."""
    cols = [c for c in a.values if c in b.values]
    if not cols:
        raise ConfigError("the two files share no observable columns")
    if a.sample_times.shape == b.sample_times.shape and np.allclose(a.sample_times, b.sample_times,
                                                                      rtol=1e-12, atol=1e-12):
        get_b = {c: b[c] for c in cols}
    elif interpolate:
        get_b = {c: np.interp(a.sample_times, b.sample_times, b[c]) for c in cols}
    else:
        raise ConfigError("sample times differ (use --interpolate)")
    report = {}
    for c in cols:
        d = np.abs(np.asarray(a[c], dtype=float) - np.asarray(get_b[c], dtype=float))
        report[c] = {"max_abs": float(d.max()), "mean_abs": float(d.mean())}
    return report


def compare(path_a, path_b, interpolate=False) -> dict:
    """Compare two CSV series, or two ``.npy`` density matrices (trace distance)."""
    if str(path_a).endswith(".npy") and str(path_b).endswith(".npy"):
        ra, rb = np.load(path_a), np.load(path_b)
        if ra.shape != rb.shape:
            raise ConfigError("density matrices have different shapes")
        return {"trace_distance": evolution.trace_distance(ra, rb)}
    return compare_records(evolution.TrajectoryRecord.from_csv(path_a),
                           evolution.TrajectoryRecord.from_csv(path_b), interpolate)


# presets ---------------------------------------------------------------------

def list_presets() -> list[tuple[str, str]]:
    out = []
    for f in sorted(resources.files("rydeff").joinpath("presets").iterdir(), key=lambda x: x.name):
        if f.name.endswith(".json"):
            cfg = json.loads(f.read_text())
            out.append((f.name, cfg.get("description", "")))
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="rydeff", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config (file path or preset name)")
    p_run.add_argument("config")
    p_run.add_argument("-o", "--output", help="output directory (overrides the config)")
    p_cmp = sub.add_parser("compare", help="deviation report between two result files")
    p_cmp.add_argument("a")
    p_cmp.add_argument("b")
    p_cmp.add_argument("--interpolate", action="store_true")
    p_cmp.add_argument("--json", action="store_true", help="machine-readable output")
    p_pre = sub.add_parser("presets", help="bundled configurations")
    pre_sub = p_pre.add_subparsers(dest="action", required=True)
    pre_sub.add_parser("list")
    p_show = pre_sub.add_parser("show")
    p_show.add_argument("name")
    args = parser.parse_args(argv)

    if args.command == "run":
        return run(args.config, args.output)
    if args.command == "compare":
        try:
            report = compare(args.a, args.b, args.interpolate)
        except (ConfigError, OSError, ValueError) as exc:
            print(f"compare error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if args.json:
            print(json.dumps(report, indent=2))
        elif "trace_distance" in report:
            print(f"trace_distance {report['trace_distance']:.6e}")
        else:
            print(f"{'observable':<20} {'max_abs':>14} {'mean_abs':>14}")
            for c, r in report.items():
                print(f"{c:<20} {r['max_abs']:>14.6e} {r['mean_abs']:>14.6e}")
        return EXIT_OK
    if args.action == "list":
        for name, desc in list_presets():
            print(f"{name:<24} {desc}")
        return EXIT_OK
    try:
        cfg = load_config(args.name)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(cfg, indent=2))
    return EXIT_OK


if __name__ == "__main__":   # pragma: no cover
    sys.exit(main())
