"""Command-line front end.

Every run writes into a fresh directory under ``--out`` together with a
``manifest.json`` holding the full configuration, package versions, wall
time and the list of files written.  Feeding that manifest back through
``--config`` repeats the run.

Exit codes: 0 success, 2 invalid configuration, 3 engine error,
4 undecided or inconclusive result.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from fractions import Fraction
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

EXIT_OK, EXIT_VALIDATION, EXIT_ENGINE, EXIT_UNDECIDED = 0, 2, 3, 4

COMMANDS = ("spectrum-shoot", "spectrum-cf", "evolve-ss", "evolve-phys", "bisect", "fit", "export")
VIEWS = ("P0-vs-s", "psi-vs-tau", "profile-vs-rho", "decay-loglog")

# flag name -> (config key, type, help)
FLAGS = {
    "--d": ("d", str, "dimension (integer >= 5; 'inf' for spectrum-cf)"),
    "--window": ("window", str, "eigenvalue search window LO HI"),
    "--digits": ("digits", int, "working precision in decimal digits"),
    "--nterms": ("nterms", int, "series truncation N"),
    "--depth": ("depth", int, "continued-fraction depth"),
    "--grid-step": ("grid_step", str, "eigenvalue scan step"),
    "--grid-n": ("grid_n", int, "number of radial cells"),
    "--dy": ("dy", str, "radial cell size"),
    "--ds": ("ds", str, "fixed time step (default: stability bound)"),
    "--ymax": ("ymax", str, "outer radius"),
    "--eps-diss": ("eps_diss", str, "dissipation coefficient"),
    "--amp": ("amp", str, "initial amplitude a"),
    "--lo": ("lo", str, "subcritical amplitude"),
    "--hi": ("hi", str, "supercritical amplitude"),
    "--eps": ("eps", str, "target bracket width"),
    "--smax": ("smax", str, "final slow time"),
    "--tend": ("tend", str, "final physical time"),
    "--max-parallel": ("max_parallel", int, "concurrent probes per bisection round"),
    "--snapshots": ("snapshots", str, "snapshot times"),
    "--blowup-time": ("blowup_time", str, "blowup time T (fit, export)"),
    "--view": ("view", str, "export view"),
    "--inputs": ("inputs", str, "artifact directories for export"),
    "--out": ("out", str, "parent directory for run directories"),
}
MULTI = {"window": 2, "snapshots": "*", "inputs": "+"}


def _schema(name):
    return json.loads(resources.files("cubic_blowup").joinpath("schemas", name).read_text())


def config_schema():
    return _schema("run_config.schema.json")


def validate_json(doc, schema_name):
    """Validate ``doc`` against a shipped schema (``$ref`` to sibling files resolved)."""
    from referencing import Registry, Resource

    names = ["run_config.schema.json", "eigenvalue_report.schema.json", "threshold_record.schema.json",
             "mode_fit.schema.json", "manifest.schema.json"]
    reg = Registry().with_resources([(n, Resource.from_contents(_schema(n))) for n in names])
    jsonschema.Draft202012Validator(_schema(schema_name), registry=reg).validate(doc)


class ConfigError(ValueError):
    pass


def build_parser():
    p = argparse.ArgumentParser(prog="cubic-blowup", description=__doc__.split("\n")[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run configuration; flags override its values")
    for flag, (key, typ, hlp) in FLAGS.items():
        nargs = MULTI.get(key)
        p.add_argument(flag, dest=key, type=typ, nargs=nargs, default=None, help=hlp)
    return p


def _num(x):
    return x if isinstance(x, (int, float)) else str(x)


def resolve_config(argv):
    """Merge ``--config`` and flags into a validated config dict."""
    args = build_parser().parse_args(argv)
    cfg = {}
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        cfg = dict(doc["config"]) if "config" in doc and "versions" in doc else dict(doc)
    for key in [v[0] for v in FLAGS.values()]:
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    cfg["command"] = args.command
    cfg.setdefault("out", "runs")
    try:
        validate_json(cfg, "run_config.schema.json")
    except jsonschema.ValidationError as exc:
        path = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {exc.message}") from None
    return cfg


def _new_run_dir(parent: Path, command: str) -> Path:
    parent.mkdir(parents=True, exist_ok=True)
    k = 1
    while True:
        d = parent / f"{command}-{k:04d}"
        try:
            d.mkdir()
            return d
        except FileExistsError:
            k += 1


def _dim(cfg, allow_inf=False):
    d = cfg.get("d")
    if d is None:
        raise ConfigError("d: required")
    if str(d) == "inf":
        if not allow_inf:
            raise ConfigError("d: 'inf' is only valid for spectrum-cf")
        return "inf"
    try:
        d = int(str(d))
    except ValueError:
        raise ConfigError(f"d: not an integer: {d!r}") from None
    if d < 5:
        raise ConfigError(f"d: must be >= 5, got {d}")
    return d


def _evolution_params(cfg, **extra):
    from .evolution_ss import EvolutionParams, Grid

    dy = Fraction(str(cfg.get("dy", "1/32")))
    if "grid_n" in cfg:
        n = int(cfg["grid_n"])
    else:
        n = int(Fraction(str(cfg.get("ymax", 20))) / dy)
    kw = dict(grid=Grid(n, dy), digits=int(cfg.get("digits", 15)),
              eps_dissipation=Fraction(str(cfg.get("eps_diss", "1/100"))),
              s_max=float(cfg.get("smax", 40)))
    if "ds" in cfg:
        kw["ds"] = Fraction(str(cfg["ds"]))
    if "snapshots" in cfg:
        kw["snapshot_times"] = tuple(float(x) for x in cfg["snapshots"])
    kw.update(extra)
    return EvolutionParams(**kw)


def _write_json(run_dir, name, doc, schema=None, files=None):
    if schema:
        validate_json(doc, schema)
    (run_dir / name).write_text(json.dumps(doc, indent=2) + "\n")
    files.append(name)


def cmd_spectrum_shoot(cfg, run_dir, files):
    from .spectrum_shoot import find_eigenvalues
    d = _dim(cfg)
    window = cfg.get("window", ["-4", "5"])
    rep = find_eigenvalues(d, window=tuple(window), N=int(cfg.get("nterms", 200)),
                           digits=int(cfg.get("digits", 50)), grid_step=str(cfg.get("grid_step", "0.01")))
    _write_json(run_dir, "eigenvalues.json", rep.to_json(), "eigenvalue_report.schema.json", files)
    return EXIT_OK


def cmd_spectrum_cf(cfg, run_dir, files):
    from .spectrum_cf import find_cf_eigenvalues, heun_cf_eigenvalues
    d = _dim(cfg, allow_inf=True)
    digits = int(cfg.get("digits", 50))
    depth = int(cfg.get("depth", 512))
    step = str(cfg.get("grid_step", "0.01"))
    if d == "inf":
        window = cfg.get("window", ["-4.5", "3"])
        rep = find_cf_eigenvalues(tuple(window), depth=depth, digits=digits, grid_step=step)
    else:
        window = cfg.get("window", ["-4", "5"])
        rep = heun_cf_eigenvalues(d, tuple(window), depth=depth, digits=digits, grid_step=step)
    _write_json(run_dir, "eigenvalues.json", rep.to_json(), "eigenvalue_report.schema.json", files)
    return EXIT_OK


def cmd_evolve_ss(cfg, run_dir, files):
    from .evolution_ss import UNDECIDED, evolve
    d = _dim(cfg)
    params = _evolution_params(cfg)
    a = str(cfg.get("amp", "1"))
    out = evolve(d, a, params)
    out.write_trajectory(run_dir / "trajectory.csv")
    files.append("trajectory.csv")
    for k in range(len(out.snapshots)):
        name = f"snapshot_{k:03d}.csv"
        out.write_snapshot(run_dir / name, k, params.grid)
        files.append(name)
    summary = {"d": d, "amp": a, "classification": out.classification, "s_end": repr(out.s_end),
               "diagnostics": {k: (v if isinstance(v, (str, bool, int)) else repr(v))
                               for k, v in out.diagnostics.items()}}
    _write_json(run_dir, "outcome.json", summary, None, files)
    return EXIT_UNDECIDED if out.classification == UNDECIDED else EXIT_OK


def cmd_evolve_phys(cfg, run_dir, files):
    from .evolution_phys import PhysParams, decay_exponent, domain_for, evolve_phys, from_computational
    d = _dim(cfg)
    a = str(cfg.get("amp", "2.3"))
    t_end = float(cfg.get("tend", 40))
    dr = Fraction(str(cfg.get("dy", "1/32")))
    if "grid_n" in cfg:
        from .evolution_ss import Grid
        grid = Grid(int(cfg["grid_n"]), dr)
    elif "ymax" in cfg:
        from .evolution_ss import Grid
        grid = Grid(int(math.ceil(Fraction(str(cfg["ymax"])) / dr)), dr)
    else:
        grid = domain_for(t_end, a, dr)
    params = PhysParams(digits=int(cfg.get("digits", 15)),
                        eps_dissipation=Fraction(str(cfg.get("eps_diss", "1/100"))),
                        snapshot_times=tuple(float(x) for x in cfg.get("snapshots", [])))
    run = evolve_phys(d, from_computational(a, grid, params.digits), t_end, params)
    run.write_trajectory(run_dir / "trajectory.csv")
    files.append("trajectory.csv")
    for k in range(len(run.snapshots)):
        name = f"snapshot_{k:03d}.csv"
        run.write_snapshot(run_dir / name, k)
        files.append(name)
    summary = {"d": d, "amp": a, "t_end": repr(float(run.t[-1])), "blowup": run.blowup,
               "r_max": repr(float(grid.y_max))}
    if not run.blowup and t_end >= 10:
        summary["decay_exponent"] = repr(decay_exponent(run)[0])
    _write_json(run_dir, "summary.json", summary, None, files)
    return EXIT_UNDECIDED if run.blowup else EXIT_OK


def cmd_bisect(cfg, run_dir, files):
    from .threshold import bisect, default_parallel, estimate_blowup_time
    d = _dim(cfg)
    params = _evolution_params(cfg)
    rec = bisect(d, cfg.get("lo", "1"), cfg.get("hi", "3"), cfg.get("eps", "1e-8"), params,
                 int(cfg.get("max_parallel", default_parallel())), keep_outcomes=False)
    doc = rec.to_json()
    if "blowup_time" in cfg:
        doc["blowup_time"] = repr(float(estimate_blowup_time(rec, "super")))
    _write_json(run_dir, "threshold.json", doc, "threshold_record.schema.json", files)
    return EXIT_OK


def cmd_fit(cfg, run_dir, files):
    from .threshold import analyze_endpoints
    d = _dim(cfg)
    params = _evolution_params(cfg)
    if "lo" not in cfg or "hi" not in cfg:
        raise ConfigError("lo/hi: both bracket amplitudes are required")
    T = float(cfg["blowup_time"]) if "blowup_time" in cfg else None
    res = analyze_endpoints(d, cfg["lo"], cfg["hi"], params, T=T)
    for side, out in res.outcomes.items():
        out.write_trajectory(run_dir / f"trajectory_{side}.csv")
        files.append(f"trajectory_{side}.csv")
    for side, fit in res.fits.items():
        doc = fit.to_json()
        doc.update(side=side, blowup_time=repr(res.T), amplitude=str(cfg["lo" if side == "sub" else "hi"]))
        _write_json(run_dir, f"fit_{side}.json", doc, "mode_fit.schema.json", files)
    _write_json(run_dir, "sign_check.json",
                {k: (v if isinstance(v, (bool, str)) else repr(float(v))) for k, v in res.signs.items()},
                None, files)
    return EXIT_OK if res.signs.get("opposite") else EXIT_UNDECIDED


def _read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    head = rows[0]
    cols = {h: np.array([float(r[i]) for r in rows[1:]]) for i, h in enumerate(head)}
    return cols


def export_plot_data(inputs, view, out_path, d=None, T=None, max_rows=2000):
    """Joined, downsampled CSV for one of the plotting views.

    The first line is a ``#`` comment naming the columns.
    """
    from .profiles import u_star
    if view not in VIEWS:
        raise ConfigError(f"view: must be one of {VIEWS}")
    dirs = [Path(p) for p in inputs]
    for p in dirs:
        if not (p / "trajectory.csv").exists() and not list(p.glob("trajectory_*.csv")) \
                and not list(p.glob("snapshot_*.csv")):
            raise FileNotFoundError(f"no artifacts in {p}")
    lines = []
    if view == "P0-vs-s":
        lines.append("# run,s,P0 : P(s,0) against slow time for each computational run")
        for p in dirs:
            for f in sorted(p.glob("trajectory*.csv")):
                c = _read_csv(f)
                if "P0" not in c:
                    raise ConfigError(f"{f} is not a computational-coordinate trajectory")
                idx = _down(len(c["s"]), max_rows)
                lines += [f"{p.name}/{f.stem},{c['s'][i]!r},{c['P0'][i]!r}" for i in idx]
    elif view == "decay-loglog":
        lines.append("# run,log_t,log_abs_u0 : natural logs of t and |u(t,0)|")
        for p in dirs:
            c = _read_csv(p / "trajectory.csv")
            idx = [i for i in _down(len(c["t"]), max_rows) if c["t"][i] > 0 and c["u0"][i] != 0]
            lines += [f"{p.name},{math.log(c['t'][i])!r},{math.log(abs(c['u0'][i]))!r}" for i in idx]
    elif view == "psi-vs-tau":
        if T is None or d is None:
            raise ConfigError("blowup_time and d: required for psi-vs-tau")
        ref = float(u_star(d, 0))
        lines.append(f"# run,tau,psi0,Ustar0 : psi(tau,0) = (T-t) e^s V(s,0) with T={T!r}; reference U*(0)")
        for p in dirs:
            for f in sorted(p.glob("trajectory*.csv")):
                c = _read_csv(f)
                m = c["t"] < T
                tau = -np.log(T - c["t"][m])
                psi = (T - c["t"][m]) * np.exp(c["s"][m]) * c["V0"][m]
                lines += [f"{p.name}/{f.stem},{tau[i]!r},{psi[i]!r},{ref!r}" for i in _down(len(tau), max_rows)]
    else:
        if d is None:
            raise ConfigError("d: required for profile-vs-rho")
        lines.append("# run,snapshot,x,value,Ustar : snapshot fields against the grid coordinate with U* reference")
        for p in dirs:
            for f in sorted(p.glob("snapshot_*.csv")):
                c = _read_csv(f)
                xkey = "y" if "y" in c else "r"
                vkey = "V" if "V" in c else "u"
                for i in _down(len(c[xkey]), max_rows):
                    x = c[xkey][i]
                    lines.append(f"{p.name},{f.stem},{x!r},{c[vkey][i]!r},{float(u_star(d, x))!r}")
    Path(out_path).write_text("\n".join(lines) + "\n")


def _down(n, max_rows):
    step = max(1, math.ceil(n / max_rows))
    return list(range(0, n, step))


def cmd_export(cfg, run_dir, files):
    if "view" not in cfg or "inputs" not in cfg:
        raise ConfigError("view/inputs: required for export")
    d = _dim(cfg) if "d" in cfg else None
    T = float(cfg["blowup_time"]) if "blowup_time" in cfg else None
    name = f"{cfg['view']}.csv"
    export_plot_data(cfg["inputs"], cfg["view"], run_dir / name, d, T)
    files.append(name)
    return EXIT_OK


HANDLERS = {
    "spectrum-shoot": cmd_spectrum_shoot, "spectrum-cf": cmd_spectrum_cf, "evolve-ss": cmd_evolve_ss,
    "evolve-phys": cmd_evolve_phys, "bisect": cmd_bisect, "fit": cmd_fit, "export": cmd_export,
}


def _versions():
    import importlib.metadata as md
    import platform
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "mpmath", "jsonschema"):
        try:
            out[pkg] = md.version(pkg)
        except md.PackageNotFoundError:
            pass
    from . import __version__
    out["cubic_blowup"] = __version__
    return out


def run(argv=None) -> int:
    try:
        cfg = resolve_config(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    run_dir = _new_run_dir(Path(cfg["out"]), cfg["command"])
    files = []
    t0 = time.perf_counter()
    try:
        status = HANDLERS[cfg["command"]](cfg, run_dir, files)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        status = EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        status = EXIT_ENGINE
        (run_dir / "error.json").write_text(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
        files.append("error.json")
    except Exception as exc:  # engine failure: serialize the payload
        payload = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("probes", "depth", "s", "node", "cond"):
            if hasattr(exc, attr):
                val = getattr(exc, attr)
                payload[attr] = [[str(x) for x in p] for p in val] if attr == "probes" else repr(val)
        (run_dir / "error.json").write_text(json.dumps(payload, indent=2))
        files.append("error.json")
        print(f"engine error: {payload['error']}: {payload['message']}", file=sys.stderr)
        status = EXIT_ENGINE
    manifest = {"config": cfg, "versions": _versions(), "wall_time": time.perf_counter() - t0,
                "files": files, "status": status}
    validate_json(manifest, "manifest.schema.json")
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(run_dir)
    return status


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
