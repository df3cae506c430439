"""Command-line front end.

    rabiknots spectrum --lambda 0.5 --g 1 --g-unit gs
    rabiknots spectrum --lambda 0.5 --sweep g=0:4:400 --g-unit gs
    rabiknots state --lambda 0.2 --g 4.4 --g-unit gs --j-e 1 --format json
    rabiknots scan --sweep g=0:6:60 --sweep lambda=0:2:40 --g-unit gs --j-e 1 --out gs.csv
    rabiknots code --lambda 0.2 --g 1.5 --g-unit gs --j-e 5

Exit status: 0 success, 2 invalid input, 3 numerical failure (including any
failed cell of a scan).
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .errors import RabiKnotsError, ValidationError
from .model import ModelParams, solve_spectrum
from .output import SCHEMA, atomic_write, read_csv, read_json, write_csv, write_json
from .realspace import DEFAULT_POINTS
from .scan import (
    GAP_ZERO_TOL,
    RELIABILITY_FLAGS,
    ScanRecord,
    SweepSpec,
    classify_gap_events,
    extract_boundaries,
    params_at,
    scan_points,
)
from .topology import Tolerances, TopoSummary, analyze_state

log = logging.getLogger("rabiknots")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

SCAN_COLUMNS = [
    "i_g", "i_lam", "g", "g_over_gs", "lambda", "j_e", "energy", "parity",
    "delta_plus", "delta_minus", "n_Z", "n_zx", "n_w", "n_w_alg", "n_aw",
    "n_ex", "n_dk", "code", "degenerate", "flags", "near_boundary", "error",
]
BOUNDARY_COLUMNS = ["i_g_a", "i_lam_a", "i_g_b", "i_lam_b", "jumps", "min_gap", "gap_closing"]
EVENT_COLUMNS = ["location", "kind", "gap", "gap_at_min", "parity_flip", "node_jump", "partial"]


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _sweep(text: str):
    try:
        axis, _, rng = text.partition("=")
        lo, hi, n = rng.split(":")
        axis = {"lam": "lambda", "l": "lambda"}.get(axis.strip(), axis.strip())
        return axis, float(lo), float(hi), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected AXIS=lo:hi:n, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    m = common.add_argument_group("model")
    m.add_argument("--omega", type=float, default=0.5, help="oscillator frequency (units of Omega)")
    m.add_argument("--g", type=float, default=0.0, help="coupling strength")
    m.add_argument("--g-unit", choices=("omega", "gs"), default="omega",
                   help="'omega': g in units of Omega; 'gs': units of g_s = sqrt(omega Omega)/2")
    m.add_argument("--lambda", dest="lam", type=float, default=0.0, help="anisotropy ratio")
    m.add_argument("--n-cut", type=int, default=120, help="Fock truncation per parity block")
    m.add_argument("--n-levels", type=int, default=16, help="levels resolved per block")
    m.add_argument("--grid-points", type=int, default=DEFAULT_POINTS, help="odd number of x grid points")
    t = common.add_argument_group("tolerances")
    t.add_argument("--eps-tail", type=float, default=Tolerances.eps_tail)
    t.add_argument("--tol-axis", type=float, default=Tolerances.tol_axis)
    t.add_argument("--angle-tol", type=float, default=Tolerances.angle_tol_deg, help="degrees")
    t.add_argument("--gap-zero-tol", type=float, default=GAP_ZERO_TOL, help="units of Omega")
    o = common.add_argument_group("output")
    o.add_argument("--format", choices=("csv", "json"), default="csv")
    o.add_argument("--out", help="output path (default: stdout)")
    o.add_argument("-v", "--verbose", action="store_true")

    p = _ArgumentParser(prog="rabiknots", description="Anisotropic Rabi model: spectra, nodes and spin knots.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    sp = sub.add_parser("spectrum", parents=[common], help="energies, parities and gaps")
    sp.add_argument("--sweep", type=_sweep, help="AXIS=lo:hi:n, one row per point")
    sp.add_argument("--j-e", type=int, default=1, help="tracked level for sweep rows")

    st = sub.add_parser("state", parents=[common], help="wavefunction, spin texture and counters of one level")
    st.add_argument("--j-e", type=int, default=1)
    st.add_argument("--amplify", type=float, help="also emit sign(v)|v|^P trajectory columns")

    sc = sub.add_parser("scan", parents=[common], help="line sweep or g-lambda phase diagram")
    sc.add_argument("--sweep", type=_sweep, action="append", required=True,
                    help="AXIS=lo:hi:n; give once for a line, twice (g and lambda) for a grid")
    sc.add_argument("--j-e", type=int, default=1)
    sc.add_argument("--workers", type=int, default=1)
    sc.add_argument("--resume", action="store_true", help="keep finished cells found in --out")
    sc.add_argument("--no-refine", action="store_true", help="skip the near-boundary refinement pass")

    cd = sub.add_parser("code", parents=[common], help="topological code string of one level")
    cd.add_argument("--j-e", type=int, default=1)
    return p


# ---------------------------------------------------------------------------


def _params(args) -> ModelParams:
    base = ModelParams(omega=args.omega, n_cut=args.n_cut, n_levels=args.n_levels)
    return params_at(base, args.g, args.lam, args.g_unit)


def _tol(args) -> Tolerances:
    return Tolerances(eps_tail=args.eps_tail, tol_axis=args.tol_axis, angle_tol_deg=args.angle_tol)


def _check(args):
    if args.grid_points < 3 or args.grid_points % 2 == 0:
        raise ValidationError(f"--grid-points must be odd and >= 3, got {args.grid_points}")
    if not args.gap_zero_tol > 0:
        raise ValidationError("--gap-zero-tol must be positive")
    _tol(args)  # every tolerance must be positive
    if getattr(args, "workers", 1) < 1:
        raise ValidationError("--workers must be >= 1")
    if getattr(args, "j_e", 1) < 1:
        raise ValidationError("--j-e must be >= 1")


def _meta(args, params: ModelParams) -> dict:
    return {
        "omega": params.omega,
        "Omega": params.Omega,
        "g": params.g,
        "g_over_gs": params.g_over_gs,
        "lambda": params.lam,
        "n_cut": params.n_cut,
        "n_levels": params.n_levels,
        "grid_points": args.grid_points,
        "eps_tail": args.eps_tail,
        "tol_axis": args.tol_axis,
        "angle_tol": args.angle_tol,
        "gap_zero_tol": args.gap_zero_tol,
    }


def _emit(args, text: str, path=None):
    path = path or args.out
    if path:
        atomic_write(path, text)
    else:
        sys.stdout.write(text)


def _sibling(path: str, tag: str) -> str:
    root, ext = os.path.splitext(path)
    return f"{root}.{tag}{ext or '.csv'}"


def _topo_row(t: TopoSummary) -> dict:
    if t is None:
        return {}
    d = t.as_dict()
    d.pop("parity")
    return d


def record_row(rec: ScanRecord, i_g=None, i_lam=None, near=None) -> dict:
    row = {
        "i_g": i_g, "i_lam": i_lam, "g": rec.g, "g_over_gs": rec.g_over_gs, "lambda": rec.lam,
        "j_e": rec.j_e, "energy": rec.energy, "parity": rec.parity,
        "delta_plus": rec.delta_plus, "delta_minus": rec.delta_minus,
        "near_boundary": near, "error": rec.error,
    }
    row.update(_topo_row(rec.topo))
    return row


def _num(v, kind=float):
    if v is None:
        return None
    return kind(v)


def row_record(row: dict) -> ScanRecord:
    """Inverse of :func:`record_row` for CSV (string) or JSON (typed) rows."""
    topo = None
    if row.get("n_Z") is not None and row.get("error") is None:
        flags = row.get("flags") or ()
        if isinstance(flags, str):
            flags = tuple(f for f in flags.split(";") if f)
        degenerate = row.get("degenerate")
        topo = TopoSummary(
            parity=int(row["parity"]), n_Z=int(row["n_Z"]), n_zx=float(row["n_zx"]),
            n_w=int(row["n_w"]), n_w_alg=int(row["n_w_alg"]), n_aw=int(row["n_aw"]),
            n_ex=int(row["n_ex"]), n_dk=int(row["n_dk"]), code=row.get("code") or "",
            degenerate=degenerate in (True, "1", 1), flags=tuple(flags),
        )
    g = float(row["g"])
    g_over = _num(row.get("g_over_gs"))
    return ScanRecord(
        g=g, lam=float(row["lambda"]), j_e=int(row["j_e"]),
        energy=_num(row.get("energy")) if row.get("energy") is not None else math.nan,
        parity=int(row.get("parity") or 0),
        delta_plus=_num(row.get("delta_plus")), delta_minus=_num(row.get("delta_minus")),
        topo=topo, error=row.get("error"),
        g_s=g / g_over if g_over else 0.5,
    )


# ---------------------------------------------------------------------------
# commands


def cmd_spectrum(args) -> int:
    base = _params(args)
    n = args.n_levels
    if args.sweep is None:
        sp = solve_spectrum(base)
        rows = [
            {"j_e": lv.j_e, "energy": lv.energy, "parity": lv.parity,
             "delta_plus": sp.delta_plus(lv.j_e), "delta_minus": sp.delta_minus(lv.j_e)}
            for lv in sp.levels[:n]
        ]
        cols = ["j_e", "energy", "parity", "delta_plus", "delta_minus"]
    else:
        axis, lo, hi, npts = args.sweep
        spec = SweepSpec(axis, lo, hi, npts,
                         fixed=args.g if axis == "lambda" else args.lam,
                         level=args.j_e, base=base, g_unit=args.g_unit)
        if args.j_e > n:
            raise ValidationError(f"--j-e {args.j_e} exceeds --n-levels {n}")
        rows = []
        for v in spec.values:
            p = spec.params(v)
            sp = solve_spectrum(p)
            lv = sp[args.j_e]
            row = {"g": p.g, "g_over_gs": p.g_over_gs, "lambda": p.lam, "j_e": args.j_e,
                   "energy": lv.energy, "parity": lv.parity,
                   "delta_plus": sp.delta_plus(args.j_e), "delta_minus": sp.delta_minus(args.j_e)}
            for k in range(1, n + 1):
                row[f"E{k}"] = sp[k].energy
                row[f"P{k}"] = sp[k].parity
            rows.append(row)
        cols = ["g", "g_over_gs", "lambda", "j_e", "energy", "parity", "delta_plus", "delta_minus"]
        cols += [f"E{k}" for k in range(1, n + 1)] + [f"P{k}" for k in range(1, n + 1)]
    meta = _meta(args, base)
    if args.sweep is not None:
        meta["sweep"] = list(args.sweep)
    if args.format == "json":
        _emit(args, write_json(meta, rows))
    else:
        _emit(args, write_csv(cols, rows, meta))
    return EXIT_OK


def _zero_dict(z):
    return {"x": z.x if math.isfinite(z.x) else None, "axis": z.axis, "companion_sign": z.companion_sign,
            "source": z.source, "digit": z.digit, "boundary": z.boundary}


def _amplify(v, p):
    return np.sign(v) * np.abs(v) ** p


def cmd_state(args) -> int:
    params = _params(args)
    sp = solve_spectrum(params)
    if args.j_e > len(sp):
        raise ValidationError(f"--j-e {args.j_e} exceeds the {len(sp)} resolved levels (raise --n-levels)")
    res = analyze_state(params, args.j_e, args.grid_points, _tol(args), spectrum=sp)
    st, tx, s = res.state, res.texture, res.summary
    arrays = {
        "x": st.x, "psi_plus": st.psi_plus, "psi_minus": st.psi_minus,
        "psi_up_tilde": st.psi_up_tilde, "psi_down_tilde": st.psi_down_tilde,
        "s_z": tx.s_z, "s_x": tx.s_x, "s_y": tx.s_y,
    }
    if args.amplify is not None:
        if not args.amplify > 0:
            raise ValidationError("--amplify must be positive")
        arrays["s_z_amp"] = _amplify(tx.s_z, args.amplify)
        arrays["s_x_amp"] = _amplify(tx.s_x, args.amplify)
    meta = _meta(args, params)
    meta.update(j_e=args.j_e, energy=res.level.energy, parity=res.level.parity)
    info = {
        "summary": s.as_dict(),
        "x_zeros": [_zero_dict(z) for z in res.x_zeros],
        "z_zeros": [_zero_dict(z) for z in res.z_zeros],
        "boundary_sign": res.support.boundary_sign,
        "support_x": res.support.x_b,
        "diagonal_knots": [
            {"x1": c.x1, "x2": c.x2, "s_z": c.s_z, "s_x": c.s_x, "angle_deg": c.angle_deg}
            for c in res.knots.crossings
        ],
    }
    if args.format == "json":
        data = dict(info)
        data["arrays"] = arrays
        data["trajectory"] = {"s_z": tx.s_z, "s_x": tx.s_x}
        _emit(args, write_json(meta, data))
    else:
        meta.update(info)
        cols = list(arrays)
        rows = [dict(zip(cols, vals)) for vals in zip(*arrays.values())]
        _emit(args, write_csv(cols, rows, meta))
    return EXIT_OK


def cmd_code(args) -> int:
    params = _params(args)
    res = analyze_state(params, args.j_e, args.grid_points, _tol(args))
    s = res.summary
    row = {"g": params.g, "g_over_gs": params.g_over_gs, "lambda": params.lam, "j_e": args.j_e,
           "code": s.code, "n_Z": s.n_Z, "n_w": s.n_w, "n_ex": s.n_ex, "n_dk": s.n_dk,
           "flags": list(s.flags)}
    if args.format == "json":
        _emit(args, write_json(_meta(args, params), row))
    else:
        _emit(args, write_csv(list(row), [row], _meta(args, params)))
    return EXIT_OK


def _load_done(path: str, fmt: str):
    """Finished (i_g, i_lam) -> row from a previous scan output."""
    if not path or not os.path.exists(path):
        return {}
    if fmt == "json":
        rows = read_json(path).get("data", [])
    else:
        _, rows = read_csv(path)
    done = {}
    for r in rows:
        if r.get("error") is None and r.get("i_g") is not None:
            done[(int(r["i_g"]), int(r["i_lam"]))] = r
    return done


def cmd_scan(args) -> int:
    base = ModelParams(omega=args.omega, n_cut=args.n_cut, n_levels=args.n_levels)
    sweeps = {axis: (lo, hi, n) for axis, lo, hi, n in args.sweep}
    if len(sweeps) != len(args.sweep):
        raise ValidationError("each sweep axis may be given only once")
    for axis, (lo, hi, n) in sweeps.items():
        SweepSpec(axis, lo, hi, n, fixed=0.0)  # validates axis name and range
    tol = _tol(args)
    gap_tol = args.gap_zero_tol * base.Omega
    if len(sweeps) == 1:
        g_vals = np.array([args.g]) if "g" not in sweeps else np.linspace(*sweeps["g"])
        l_vals = np.array([args.lam]) if "lambda" not in sweeps else np.linspace(*sweeps["lambda"])
    else:
        g_vals = np.linspace(*sweeps["g"])
        l_vals = np.linspace(*sweeps["lambda"])
    cells = [(i, k) for i in range(len(g_vals)) for k in range(len(l_vals))]
    done = _load_done(args.out, args.format) if args.resume else {}
    todo = [c for c in cells if c not in done]
    log.info("scan: %d cells, %d already done", len(cells), len(cells) - len(todo))
    fresh = scan_points(
        [params_at(base, g_vals[i], l_vals[k], args.g_unit) for i, k in todo],
        (args.j_e,), args.grid_points, tol, args.workers,
    )
    recs = {c: r[0] for c, r in zip(todo, fresh)}
    for c, row in done.items():
        recs[c] = row_record(row)
    grid = [[recs[(i, k)] for k in range(len(l_vals))] for i in range(len(g_vals))]
    near = np.array(
        [[not r.ok or any(f in RELIABILITY_FLAGS for f in r.topo.flags) for r in row] for row in grid],
        dtype=bool,
    )
    boundaries, events = [], []
    if len(sweeps) == 2:
        boundaries = extract_boundaries(grid, args.j_e, base, gap_tol)
        touched = sorted({c for e in boundaries for c in (e.a, e.b)})
        if touched and not args.no_refine:
            fine_base = base.with_(n_cut=base.n_cut + 40)
            fine = scan_points(
                [params_at(fine_base, g_vals[i], l_vals[k], args.g_unit) for i, k in touched],
                (args.j_e,), 2 * args.grid_points - 1, tol, args.workers,
            )
            for (i, k), (fr,) in zip(touched, fine):
                cr = grid[i][k]
                if not (cr.ok and fr.ok) or (cr.parity, cr.topo.tuple4) != (fr.parity, fr.topo.tuple4):
                    near[i, k] = True
    else:
        axis = next(iter(sweeps))
        line = [grid[i][k] for i, k in cells]
        if len(line) >= 3:
            spec = SweepSpec(axis, *sweeps[axis], fixed=args.lam if axis == "g" else args.g,
                             level=args.j_e, base=base, g_unit=args.g_unit)
            events = classify_gap_events(line, spec, gap_tol)
    rows = [record_row(grid[i][k], i, k, bool(near[i, k])) for i, k in cells]
    b_rows = [
        {"i_g_a": e.a[0], "i_lam_a": e.a[1], "i_g_b": e.b[0], "i_lam_b": e.b[1],
         "jumps": list(e.jumps), "min_gap": e.min_gap, "gap_closing": e.gap_closing}
        for e in boundaries
    ]
    e_rows = [
        {"location": e.location, "kind": e.kind, "gap": e.gap, "gap_at_min": e.gap_at_min,
         "parity_flip": e.parity_flip, "node_jump": e.node_jump, "partial": e.partial}
        for e in events
    ]
    meta = _meta(args, params_at(base, args.g, args.lam, args.g_unit))
    meta.update(j_e=args.j_e, g_unit=args.g_unit, sweeps={a: list(v) for a, v in sweeps.items()})
    if args.format == "json":
        _emit(args, write_json(meta, rows, boundaries=b_rows, events=e_rows))
    else:
        _emit(args, write_csv(SCAN_COLUMNS, rows, meta))
        extra = [("boundaries", BOUNDARY_COLUMNS, b_rows)] if len(sweeps) == 2 else [("events", EVENT_COLUMNS, e_rows)]
        for tag, cols, data in extra:
            if args.out:
                atomic_write(_sibling(args.out, tag), write_csv(cols, data, {"table": tag}))
            elif data:
                log.warning("%d %s not written: CSV to stdout carries the cell table only (use --out)", len(data), tag)
    failed = sum(not grid[i][k].ok for i, k in cells)
    if failed:
        log.error("%d of %d cells failed", failed, len(cells))
        return EXIT_NUMERICAL
    return EXIT_OK


COMMANDS = {"spectrum": cmd_spectrum, "state": cmd_state, "scan": cmd_scan, "code": cmd_code}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(levelname)s: %(message)s")
    try:
        _check(args)
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"rabiknots: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except RabiKnotsError as exc:
        print(f"rabiknots: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
