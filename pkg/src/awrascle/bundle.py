"""Bundle directory persistence.

Layout::

    meta.json            config, grid/time data, profile shape parameters, checks
    fields/*.fld         endpoint ingredients (rho0, rhoT, phi0, phiT, v0, vT, F)
    nodes/kNNN_*.fld     per-node rho, drho, phi, dphi, v, M, N
    lambda.csv           t, Lambda, dLambda
    drift.csv            t, V_1..V_d, dV_1..dV_d
    membership.json      per-node minima and the global margin
    energy.csv           t, energy
    conserved.csv        t, mass, momentum_1..momentum_d

Everything is written without timestamps and with fixed float formatting, so
equal inputs give byte-identical directories.
"""
from __future__ import annotations

import csv
import io
import json
import os
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AwRascleError, FieldFormatError
from .fieldio import read_field, write_field
from .torus import Grid

NODE_FIELDS = {"rho": "scalar", "drho": "scalar", "phi": "scalar", "dphi": "scalar",
               "v": "vector", "M": "tensor0", "N": "tensor0"}
END_FIELDS = {"rho0": "scalar", "rhoT": "scalar", "phi0": "scalar", "phiT": "scalar",
              "v0": "vector", "vT": "vector", "F": "tensor0"}
LOCK = ".lock"


def fmt(x) -> str:
    return repr(float(x))


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError("not JSON serialisable: %r" % type(o))


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    Path(path).write_text(buf.getvalue())


def read_csv(path):
    """Header and float rows; malformed numbers raise FieldFormatError naming the line."""
    path = Path(path)
    try:
        lines = list(csv.reader(path.read_text().splitlines()))
    except OSError as exc:
        raise FieldFormatError("cannot read %s: %s" % (path, exc)) from None
    if not lines:
        raise FieldFormatError("%s is empty" % path)
    head, rows = lines[0], []
    for i, r in enumerate(lines[1:], start=2):
        if len(r) != len(head):
            raise FieldFormatError("%s line %d: expected %d columns, found %d"
                                   % (path, i, len(head), len(r)))
        try:
            rows.append([float(v) for v in r])
        except ValueError:
            raise FieldFormatError("%s line %d: non-numeric entry %r" % (path, i, r)) from None
    arr = np.array(rows, dtype=float)
    if arr.size and not np.all(np.isfinite(arr)):
        raise FieldFormatError("%s holds non-finite values" % path)
    return head, arr


@contextmanager
def bundle_lock(outdir):
    """Exclusive writer lock on a bundle directory (fails if already held)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    lock = outdir / LOCK
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise AwRascleError("bundle directory %s is locked by another writer (remove %s if stale)"
                            % (outdir, lock), condition="exclusive bundle writer") from None
    os.close(fd)
    try:
        yield outdir
    finally:
        lock.unlink(missing_ok=True)


def _node_name(k: int, name: str) -> str:
    return "k%03d_%s.fld" % (k, name)


def save_bundle(bundle, outdir, config: dict, extra_meta: dict = None) -> None:
    """Write a :class:`SubsolutionBundle` (without report files) to ``outdir``."""
    outdir = Path(outdir)
    g = bundle.grid
    d, n = g.d, g.n
    p = bundle.profile
    (outdir / "fields").mkdir(parents=True, exist_ok=True)
    (outdir / "nodes").mkdir(parents=True, exist_ok=True)
    ends = {"rho0": p.rho0, "rhoT": p.rhoT, "phi0": p.phi0, "phiT": p.phiT,
            "v0": bundle.v0, "vT": bundle.vT, "F": bundle.F}
    for name, kind in END_FIELDS.items():
        write_field(outdir / "fields" / (name + ".fld"), ends[name], kind, d, n)
    for k in range(len(p.times)):
        vals = {"rho": p.rho[k], "drho": p.drho[k], "phi": p.phi[k], "dphi": p.dphi[k],
                "v": bundle.v[k], "M": bundle.M[k], "N": bundle.N[k]}
        for name, kind in NODE_FIELDS.items():
            write_field(outdir / "nodes" / _node_name(k, name), vals[name], kind, d, n)

    times = p.times
    write_csv(outdir / "lambda.csv", ["t", "Lambda", "dLambda"],
              zip(times, bundle.Lambda, bundle.dLambda))
    write_csv(outdir / "drift.csv", ["t"] + ["V%d" % (i + 1) for i in range(d)]
              + ["dV%d" % (i + 1) for i in range(d)],
              [[t, *V, *dV] for t, V, dV in zip(times, bundle.drift.V, bundle.drift.dV)])
    (outdir / "membership.json").write_text(dumps(bundle.membership.as_dict()))

    meta = {
        "config": config,
        "d": d, "n": n, "T": float(bundle.profile.timegrid.T), "n_t": int(len(times)),
        "delta": p.delta, "theta": p.theta, "rho_min": p.rho_min,
        "supports": [list(p.shapes.Z0.support), list(p.shapes.ZT.support)],
        "mode": bundle.mode, "eta": bundle.eta, "tau": bundle.membership.tau,
        "V0": bundle.drift.V[0], "VT": bundle.data.end[1],
        "cc5_defect": bundle.drift.cc5_defect,
        "profile_checks": p.checks,
        "compatibility": bundle.compatibility,
    }
    if bundle.admissible is not None:
        a = bundle.admissible
        meta["admissible"] = {"lag": a.lag, "substeps": a.substeps,
                              "bound": {"volume": a.bound.volume, "rho_min": a.bound.rho_min,
                                        "rho_max": a.bound.rho_max, "grad_h": a.bound.grad_h,
                                        "offset": a.bound.offset}}
    meta.update(extra_meta or {})
    (outdir / "meta.json").write_text(dumps(meta))


@dataclass
class LoadedBundle:
    path: Path
    meta: dict
    grid: Grid
    times: np.ndarray
    ends: dict
    nodes: dict           # name -> list per node
    Lambda: np.ndarray
    dLambda: np.ndarray
    V: np.ndarray
    dV: np.ndarray

    @property
    def T(self) -> float:
        return float(self.meta["T"])


def load_meta(path) -> dict:
    path = Path(path)
    f = path / "meta.json"
    if not f.exists():
        raise FieldFormatError("%s is not a bundle directory (meta.json missing)" % path)
    try:
        return json.loads(f.read_text())
    except json.JSONDecodeError as exc:
        raise FieldFormatError("meta.json invalid at byte %d: %s" % (exc.pos, exc.msg)) from None


def load_bundle(path) -> LoadedBundle:
    path = Path(path)
    meta = load_meta(path)
    grid = Grid(int(meta["d"]), int(meta["n"]))
    n_t = int(meta["n_t"])

    def data(file, kind):
        head, val = read_field(file)
        if head["kind"] != kind or head["d"] != grid.d or head["n"] != grid.n:
            raise FieldFormatError("%s holds a %s field (d=%s, n=%s); expected %s (d=%d, n=%d)"
                                   % (file, head["kind"], head["d"], head["n"], kind, grid.d, grid.n))
        return val

    ends = {name: data(path / "fields" / (name + ".fld"), kind) for name, kind in END_FIELDS.items()}
    nodes = {name: [data(path / "nodes" / _node_name(k, name), kind) for k in range(n_t)]
             for name, kind in NODE_FIELDS.items()}
    _, lam = read_csv(path / "lambda.csv")
    _, dr = read_csv(path / "drift.csv")
    if lam.shape != (n_t, 3) or dr.shape != (n_t, 1 + 2 * grid.d):
        raise FieldFormatError("lambda.csv/drift.csv do not hold %d node rows" % n_t)
    times = lam[:, 0]
    return LoadedBundle(path, meta, grid, times, ends, nodes, lam[:, 1], lam[:, 2],
                        dr[:, 1:1 + grid.d], dr[:, 1 + grid.d:])
