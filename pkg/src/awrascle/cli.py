"""Command line: ``awrascle {decompose,build,verify,energy,check-1d,export-csv}``.

Exit codes: 0 all verdicts pass, 1 a verification verdict failed,
2 configuration or data error. Every failure line names the violated
condition.
"""
from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

import numpy as np

from . import bundle as bio
from .config import RunConfig, load_config, parse_config
from .drift import DataPair
from .errors import AwRascleError, ConfigError
from .fieldio import read_field, write_field
from .models import (check_1d_equivalence, check_viscous_form_identity, manufactured_1d,
                     manufactured_viscous, model_from_config)
from .profile import TimeGrid
from .scenarios import DEFAULT_MODELS, make_scenario
from .subsolution import assemble_subsolution
from .torus import Grid
from .verify import bundle_conserved, bundle_energy, energy_monitor, verify_bundle

EXIT_PASS, EXIT_FAIL, EXIT_DATA = 0, 1, 2


def _say(msg: str) -> None:
    print(msg, flush=True)


def _fail(exc: AwRascleError) -> int:
    where = getattr(exc, "stage", None)
    prefix = "error [%s]" % where if where else "error"
    print("%s (%s): %s" % (prefix, exc.condition, exc), file=sys.stderr)
    return EXIT_DATA


# --------------------------------------------------------------------------- #
# run setup
# --------------------------------------------------------------------------- #


def effective_model(cfg: RunConfig) -> dict:
    """Model section actually used: a scenario's default unless the config sets one."""
    if cfg.data.scenario is not None and "model" not in cfg.model_fields_set:
        doc = copy.deepcopy(DEFAULT_MODELS[cfg.data.scenario])
    else:
        doc = cfg.model.as_model_dict()
    h = doc.get("h")
    d = cfg.grid.d
    if isinstance(h, dict) and len(h["direction"]) < d and cfg.data.scenario is not None:
        h["direction"] = list(h["direction"]) + [0.0] * (d - len(h["direction"]))
    return doc


def _model(doc: dict, d: int):
    try:
        return model_from_config(doc, d)
    except (ValueError, KeyError) as exc:
        raise ConfigError("model section: %s" % exc) from None


def _read(path, kind: str, grid: Grid):
    head, data = read_field(path)
    if head["kind"] != kind or head["d"] != grid.d or head["n"] != grid.n:
        raise ConfigError("%s holds a %s field on d=%d, n=%d; the config asks for %s on d=%d, n=%d"
                          % (path, head["kind"], head["d"], head["n"], kind, grid.d, grid.n))
    return data


def setup(cfg: RunConfig):
    grid = Grid(cfg.grid.d, cfg.grid.n)
    mdoc = effective_model(cfg)
    model = _model(mdoc, grid.d)
    if cfg.data.scenario is not None:
        rho0, u0, rhoT, uT = make_scenario(cfg.data.scenario, grid, model)
    else:
        rho0 = _read(cfg.data.rho0, "scalar", grid)
        u0 = _read(cfg.data.u0, "vector", grid)
        rhoT = _read(cfg.data.rhoT, "scalar", grid)
        uT = _read(cfg.data.uT, "vector", grid)
    return grid, model, mdoc, DataPair(grid, rho0, u0, rhoT, uT)


def _config_doc(cfg: RunConfig) -> dict:
    doc = cfg.model_dump(mode="json")
    doc["output"] = None
    return doc


# --------------------------------------------------------------------------- #
# subcommands
# --------------------------------------------------------------------------- #


def cmd_decompose(args) -> int:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    if args.inputs:
        for p in args.inputs:
            head, m = read_field(p)
            if head["kind"] != "vector":
                raise ConfigError("%s is a %s field; decompose needs a momentum (vector) field"
                                  % (p, head["kind"]))
            jobs.append((Path(p).stem, Grid(head["d"], head["n"]), m))
    else:
        if args.config is None:
            raise ConfigError("decompose needs momentum field files or --config")
        cfg = load_config(args.config)
        grid, _, _, data = setup(cfg)
        jobs = [("start", grid, data.rho0 * data.u0), ("end", grid, data.rhoT * data.uT)]
    for stem, grid, m in jobs:
        v, V, phi = grid.helmholtz(m)
        write_field(out / (stem + "_v.fld"), v, "vector", grid.d, grid.n)
        write_field(out / (stem + "_phi.fld"), phi, "scalar", grid.d, grid.n)
        (out / (stem + "_V.json")).write_text(bio.dumps({"V": V}))
        back = v + V.reshape((grid.d,) + (1,) * grid.d) + grid.grad(phi)
        err = float(np.max(np.abs(back - m))) / max(float(np.max(np.abs(m))), 1e-300)
        _say("%s: V = %s, recomposition error %.3e" % (stem, np.array2string(V, precision=6), err))
    return EXIT_PASS


def _write_reports(path: Path, loaded, model, tolerances) -> None:
    series, applies, _ = bundle_energy(loaded, model)
    head = "energy_envelope" if applies else "energy_mean_fields"
    bio.write_csv(path / "energy.csv", ["t", head], zip(loaded.times, series))
    cons = bundle_conserved(loaded, model)
    d = loaded.grid.d
    bio.write_csv(path / "conserved.csv", ["t", "mass"] + ["momentum%d" % (i + 1) for i in range(d)],
                  [[t, m, *p] for t, m, p in zip(loaded.times, cons.mass, cons.momentum)])


def cmd_build(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    out = Path(args.out or cfg.output or "bundle")
    grid, model, mdoc, data = setup(cfg)
    sc, sh = cfg.schedule, cfg.shapes
    with bio.bundle_lock(out):
        b = assemble_subsolution(
            data, model, TimeGrid(cfg.time.T, cfg.time.n_t), eta=sc.eta, mode=sc.mode,
            lambda0=sc.lambda0, delta0=sh.delta0, s0=sh.s0, sT=sh.sT, theta=sh.theta,
            tau=sc.tau, tol=cfg.tolerances.model_dump(), substeps=sc.substeps, lag=sc.lag,
            force=args.force, threads=args.threads)
        bio.save_bundle(b, out, _config_doc(cfg), {"model": mdoc})
        loaded = bio.load_bundle(out)
        _write_reports(out, loaded, model, cfg.tolerances)
    m = b.membership
    verdict = "PASS" if m.passed else "FAIL"
    _say("build %s: mode=%s margin=%.6g Lambda in [%.6g, %.6g] -> %s"
         % (out, b.mode, m.margin, float(np.min(b.Lambda)), float(np.max(b.Lambda)), verdict))
    if not m.passed:
        print("verification failure (cc25 subsolution membership): margin %.6g <= 0" % m.margin,
              file=sys.stderr)
        return EXIT_FAIL
    return EXIT_PASS


def _bundle_dir(args) -> Path:
    p = args.bundle or args.out
    if p is None:
        raise ConfigError("name the bundle directory (positional argument or --out)")
    return Path(p)


def _load(args):
    path = _bundle_dir(args)
    loaded = bio.load_bundle(path)
    cfg = parse_config(loaded.meta["config"])
    model = _model(loaded.meta["model"], loaded.grid.d)
    return path, loaded, cfg, model


def cmd_verify(args) -> int:
    path, loaded, cfg, model = _load(args)
    rep = verify_bundle(loaded, model, cfg.tolerances, cfg.shapes.model_dump())
    out = Path(args.out) if args.out and args.bundle else path
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(rep.to_json() + "\n")
    for name, c in rep.checks.items():
        _say("%-22s %-5s %.3e (tol %.1e)  %s" % (name, "PASS" if c["pass"] else "FAIL",
                                                 c["value"], c["tol"], c["condition"]))
    if not rep.passed:
        for f in rep.failures():
            print("verification failure: %s" % f, file=sys.stderr)
        return EXIT_FAIL
    return EXIT_PASS


def cmd_energy(args) -> int:
    path, loaded, cfg, model = _load(args)
    series, applies, _ = bundle_energy(loaded, model)
    ev = energy_monitor(loaded.times, series, cfg.tolerances.energy_mono)
    out = Path(args.out) if args.out and args.bundle else path
    out.mkdir(parents=True, exist_ok=True)
    head = "energy_envelope" if applies else "energy_mean_fields"
    bio.write_csv(out / "energy.csv", ["t", head], zip(loaded.times, series))
    if not applies:
        _say("energy: theorem1-mode bundle, no energy inequality claimed; series written "
             "(max uptick %.3e at t = %s)" % (ev.max_uptick, ev.worst_time))
        return EXIT_PASS
    _say("energy: %s, max uptick %.3e at t = %s" % ("PASS" if ev.passed else "FAIL",
                                                    ev.max_uptick, ev.worst_time))
    if not ev.passed:
        print("verification failure (cc31 energy inequality): uptick %.3e at t = %s"
              % (ev.max_uptick, ev.worst_time), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_PASS


def cmd_export_csv(args) -> int:
    path, loaded, cfg, model = _load(args)
    out = Path(args.out) if args.out and args.bundle else path
    out.mkdir(parents=True, exist_ok=True)
    _write_reports(out, loaded, model, cfg.tolerances)
    memb = json.loads((path / "membership.json").read_text())
    rows = []
    for k, t in enumerate(loaded.times):
        rho = loaded.nodes["rho"][k]
        v = loaded.nodes["v"][k]
        rows.append([t, loaded.Lambda[k], memb["node_minima"][k], float(np.min(rho)),
                     float(np.max(rho)), float(np.max(np.sqrt(np.sum(v * v, axis=0)))),
                     loaded.nodes["M"][k].sup_norm(), loaded.nodes["N"][k].sup_norm()])
    bio.write_csv(out / "summary.csv", ["t", "Lambda", "node_margin", "rho_min", "rho_max",
                                        "v_sup", "M_sup", "N_sup"], rows)
    _say("wrote energy.csv, conserved.csv, summary.csv to %s" % out)
    return EXIT_PASS


def cmd_check1d(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    c, tol = cfg.check1d, cfg.tolerances
    hfree = dict(cfg.model.as_model_dict(), h="zero")
    vmodel = _model(hfree, 2)
    mu, dmu = vmodel.viscosity()
    base = check_1d_equivalence(*manufactured_1d(c.n, c.amplitude), mu, dmu, tol=tol.identity)
    probes = [check_1d_equivalence(*manufactured_1d(c.n, c.amplitude, defect=e), mu, dmu,
                                   tol=tol.identity, strict=False).discrepancy for e in c.defects]
    slopes = [p / e for p, e in zip(probes, c.defects)]
    spread = max(abs(s / slopes[0] - 1.0) for s in slopes)
    grid = Grid(2, c.viscous_n)
    visc = check_viscous_form_identity(grid, *manufactured_viscous(grid), vmodel, tol=tol.identity)
    result = {"equivalence_1d": base.as_dict(),
              "defect_probe": {"defects": c.defects, "discrepancies": probes,
                               "linearity_spread": spread, "pass": spread <= 0.05},
              "viscous_form": visc.as_dict()}
    ok = base.passed and spread <= 0.05 and visc.passed
    result["pass"] = ok
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "check1d.json").write_text(bio.dumps(result))
    _say("1D equivalence discrepancy %.3e, defect linearity spread %.3e, viscous-form "
         "discrepancy %.3e -> %s" % (base.discrepancy, spread, visc.discrepancy,
                                     "PASS" if ok else "FAIL"))
    if not ok:
        print("verification failure (1D equivalence / viscous-form identity)", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_PASS


COMMANDS = {"decompose": cmd_decompose, "build": cmd_build, "verify": cmd_verify,
            "energy": cmd_energy, "check-1d": cmd_check1d, "export-csv": cmd_export_csv}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--out", metavar="DIR", help="output (or bundle) directory")
    common.add_argument("--threads", type=int, default=1, metavar="N",
                        help="worker threads; results do not depend on N")
    common.add_argument("--force", action="store_true",
                        help="continue past failed compatibility checks")
    ap = argparse.ArgumentParser(prog="awrascle", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("decompose", parents=[common], help="Helmholtz parts of momentum fields")
    p.add_argument("inputs", nargs="*", help="vector field files (momentum)")
    sub.add_parser("build", parents=[common], help="construct a subsolution bundle")
    for name, text in (("verify", "re-verify a bundle and write report.json"),
                       ("energy", "energy series and monotonicity verdict"),
                       ("export-csv", "plot-ready CSV series")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("bundle", nargs="?", help="bundle directory")
    sub.add_parser("check-1d", parents=[common], help="1D equivalence and viscous-form identity")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error (run configuration): --threads must be >= 1", file=sys.stderr)
        return EXIT_DATA
    try:
        return COMMANDS[args.command](args)
    except AwRascleError as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
