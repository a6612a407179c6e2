"""Command-line front end and output serialization.

    rkgfem run <config-file | experiment-name> [key=value ...]
    rkgfem list-experiments
    rkgfem cutoff-table [--K0 K] [--samples N] [--xmax X]

Each case of a run (one epsilon, one winding number, ...) writes into its own
subdirectory of ``output``: diagnostics.csv, errors.csv, gflm.csv and
snapshots/. A top-level summary.txt collects drift maxima, fitted rates and
vortex counts. All numbers are written with 17 significant digits so that
reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import re
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from .diagnostics import DiagnosticsRecord, ErrorReport
from .experiments import EXPERIMENTS, Sink, make_config, parse_key_values, run_experiment
from .mesh import Domain, build_uniform_mesh
from .rkg import cutoff_chi, cutoff_mu
from .spaces import DofMap, SpaceKind, build_dof_map, evaluate, vertex_values

log = logging.getLogger("rkgfem")

GFLM_COLUMNS = ["iteration", "E", "u_plus", "u_minus", "dE"]
SNAPSHOT_COLUMNS = ["x", "y", "re", "im", "abs", "arg"]


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------

def snapshot_points(dofs: DofMap):
    """Vertices (conforming) or element centers (nonconforming), in mesh order."""
    mesh = dofs.mesh
    if dofs.kind is SpaceKind.CONFORMING_Q11:
        return mesh.vertices[:, 0], mesh.vertices[:, 1]
    c = mesh.centroids
    return c[:, 0], c[:, 1]


def write_snapshot(psi_h, dofs: DofMap, path, t: Optional[float] = None, label: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mesh, d = dofs.mesh, dofs.mesh.domain
    x, y = snapshot_points(dofs)
    if dofs.kind is SpaceKind.CONFORMING_Q11:
        vals = vertex_values(psi_h, dofs).ravel()
    else:
        vals = evaluate(psi_h, dofs, x, y)
    meta = {"space": dofs.kind.value, "nx": mesh.nx, "ny": mesh.ny,
            "domain": ",".join(fmt(v) for v in (d.x_min, d.x_max, d.y_min, d.y_max)),
            "t": fmt(float("nan") if t is None else t), "label": label or "-"}
    with open(path, "w", newline="") as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        fh.write(" ".join(SNAPSHOT_COLUMNS) + "\n")
        for xi, yi, v in zip(x, y, vals):
            fh.write(" ".join(fmt(float(q)) for q in (xi, yi, v.real, v.imag, abs(v), np.angle(v))) + "\n")
    return path


def read_snapshot(path):
    """Return (metadata dict, (rows, 6) array) of a snapshot table."""
    with open(path) as fh:
        head = fh.readline()
        if not head.startswith("#"):
            raise ValueError(f"{path}: missing metadata line")
        meta = dict(tok.split("=", 1) for tok in head[1:].split())
        cols = fh.readline().split()
        if cols != SNAPSHOT_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {cols}")
        data = np.loadtxt(fh, ndmin=2)
    for k in ("nx", "ny"):
        meta[k] = int(meta[k])
    meta["t"] = float(meta["t"])
    meta["domain"] = tuple(float(v) for v in meta["domain"].split(","))
    return meta, data


def snapshot_coefficients(meta: dict, data: np.ndarray):
    """Rebuild the DofMap and conforming coefficients from a snapshot."""
    if meta["space"] != SpaceKind.CONFORMING_Q11.value:
        raise ValueError("coefficients can be recovered from conforming (vertex) snapshots only")
    mesh = build_uniform_mesh(Domain(*meta["domain"]), meta["nx"], meta["ny"])
    dofs = build_dof_map(mesh, SpaceKind.CONFORMING_Q11)
    vals = data[:, 2] + 1j * data[:, 3]
    keep = dofs.entity_dof >= 0
    coeffs = np.zeros(dofs.n_dofs, dtype=np.complex128)
    coeffs[dofs.entity_dof[keep]] = vals[keep]
    return dofs, coeffs


# ---------------------------------------------------------------------------
# file sink
# ---------------------------------------------------------------------------

def _slug(s: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.=+-]+", "_", s)


class FileSink(Sink):
    """Streams every result to disk as it arrives (rows are flushed immediately)."""

    def __init__(self, out_dir):
        super().__init__()
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self._files = {}

    def _writer(self, case: str, name: str, columns):
        key = (case, name)
        if key not in self._files:
            d = self.out / _slug(case)
            d.mkdir(parents=True, exist_ok=True)
            fh = open(d / name, "w", newline="")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            self._files[key] = (fh, w)
        return self._files[key]

    def _row(self, case, name, columns, row):
        fh, w = self._writer(case, name, columns)
        w.writerow([fmt(v) for v in row])
        fh.flush()

    def record(self, case, rec: DiagnosticsRecord):
        super().record(case, rec)
        self._row(case, "diagnostics.csv", DiagnosticsRecord.columns(), rec.row())

    def error_row(self, case, rep: ErrorReport):
        super().error_row(case, rep)
        self._row(case, "errors.csv", ErrorReport.columns(), rep.row())

    def gflm_row(self, case, row):
        super().gflm_row(case, row)
        self._row(case, "gflm.csv", GFLM_COLUMNS, row)

    def snapshot(self, case, label, psi, dofs, t):
        write_snapshot(psi, dofs, self.out / _slug(case) / "snapshots" / f"{_slug(label)}.txt",
                       t=None if math.isnan(t) else t, label=label)

    def summarize(self, case, key, value):
        super().summarize(case, key, value)
        self.write_summary()

    def write_summary(self):
        lines = []
        for case in sorted(self.summary):
            for key in sorted(self.summary[case]):
                lines.append(f"{case} {key} = {fmt(self.summary[case][key])}")
        (self.out / "summary.txt").write_text("\n".join(lines) + ("\n" if lines else ""))

    def close(self):
        for fh, _ in self._files.values():
            fh.close()
        self._files.clear()
        self.write_summary()


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _split_overrides(items):
    out = {}
    for it in items:
        if "=" not in it:
            raise ValueError(f"override must be key=value, got {it!r}")
        k, v = it.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def cmd_run(args) -> int:
    src = Path(args.config)
    if src.is_file():
        values = parse_key_values(src.read_text())
    elif args.config in EXPERIMENTS:
        values = {"experiment": args.config}
    else:
        print(f"error: {args.config!r} is neither a config file nor an experiment name", file=sys.stderr)
        return 2
    try:
        values.update(_split_overrides(args.overrides))
        if "experiment" not in values:
            raise ValueError("configuration lacks an 'experiment' key")
        cfg = make_config(values["experiment"], values)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sink = FileSink(cfg.output_dir)
    t0 = time.perf_counter()
    try:
        run_experiment(cfg, sink)
    except Exception as exc:  # report and keep partial output
        log.debug("run failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc} (partial output in {cfg.output_dir})", file=sys.stderr)
        return 1
    log.info("finished %s in %.1f s", cfg.experiment, time.perf_counter() - t0)
    print((cfg.output_dir / "summary.txt").read_text(), end="")
    return 0


def cmd_list(args) -> int:
    for name, spec in EXPERIMENTS.items():
        print(f"{name}: {spec['description']}")
        for k, v in spec.items():
            if k != "description":
                print(f"    {k} = {v}")
    return 0


def cmd_cutoff(args) -> int:
    if not args.K0 > 0:
        print("error: K0 must be positive", file=sys.stderr)
        return 2
    x = np.linspace(-args.xmax, args.xmax, args.samples)
    s = np.linspace(0.0, args.xmax * args.K0 ** 2, args.samples)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["x", "chi", "s", "mu"])
    for xi, ci, si, mi in zip(x, cutoff_chi(x), s, cutoff_mu(s, args.K0)):
        w.writerow([fmt(float(v)) for v in (xi, ci, si, mi)])
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rkgfem", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment")
    r.add_argument("config", help="key=value config file, or an experiment name")
    r.add_argument("overrides", nargs="*", help="key=value overrides")
    r.set_defaults(func=cmd_run)
    sub.add_parser("list-experiments", help="list experiments and their defaults").set_defaults(func=cmd_list)
    c = sub.add_parser("cutoff-table", help="tabulate the cutoff chi and mu")
    c.add_argument("--K0", type=float, default=1.0)
    c.add_argument("--samples", type=int, default=601)
    c.add_argument("--xmax", type=float, default=3.0)
    c.set_defaults(func=cmd_cutoff)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
