"""Command-line entry point: ``sbpsub run | check-sbp | gen-interp | s11 | preset``."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

WORKERS_ENV = "SBPSUB_WORKERS"
# thread pools read these at import time, so they are set before numpy loads
if os.environ.get(WORKERS_ENV):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ[WORKERS_ENV])

import numpy as np
import yaml

from . import __version__
from .analysis import port_power, s11, stability_diagnostics
from .interpolation import InterpolationError, build_interface_pair
from .operators import build_reference_ops_1d, verify_sbp_identity
from .presets import PRESETS, get_preset
from .records import (META_TXT, PROBES_CSV, OutputExistsError, read_csv, read_meta, write_csv,
                      write_records, write_triplets)
from .scenario import ScenarioError, build_system, parse_scenario
from .solver import InstabilityError, TimeConfig, cfl_time_step, run

SKEW_TOL = 1e-10
EIG_TOL = 1e-10
COMPAT_TOL = 1e-12
SBP_TOL = 1e-13
LOW_CONFIDENCE_FRACTION = 0.9


def _ratio(text: str) -> tuple:
    p, q = text.split(":")
    return int(p), int(q)


def cmd_run(args) -> int:
    sc = parse_scenario(args.scenario)
    full = build_system(sc)
    dt = cfl_time_step(full, sc.time.cfl_factor)
    system = build_system(sc, with_regions=False) if args.reference else full
    tc = sc.time
    if args.steps is not None:
        tc = TimeConfig(tc.cfl_factor, args.steps, tc.record_stride)
    probes = sc.probes if not args.no_probes else ()
    rec = run(system, sc.sources, probes, tc, dt=dt)
    out = Path(args.out or sc.output.directory)
    meta = {"scenario": sc.name, "version": __version__, "reference": args.reference,
            "dx": sc.grid.dx, "dy": sc.grid.dy,
            "n_regions": 0 if args.reference else len(sc.regions)}
    for s in sc.sources:
        if s.f_cut is not None:
            meta[f"f_cut_{s.name}"] = s.f_cut
    for k, d in enumerate(sc.defaults_applied):
        meta[f"default_{k}"] = d
    files = write_records(rec, out, force=args.force, extra_meta=meta)
    print(f"dt_s={rec.meta['dt_s']:.17g}")
    print(f"steps={rec.meta['n_steps']}")
    print(f"wall_time_s={rec.meta['wall_time_s']:.3f}")
    print(f"masked_dof_max_abs={rec.meta['masked_dof_max_abs']:.17g}")
    for f in files:
        print(f"wrote {f}")
    return 0


def cmd_check_sbp(args) -> int:
    sc = parse_scenario(args.scenario)
    system = build_system(sc)
    ok = True
    lines = []
    sbp = 0.0
    for lay in system.layouts:
        for n, h in ((lay.nx, lay.dx), (lay.ny, lay.dy)):
            sbp = max(sbp, verify_sbp_identity(build_reference_ops_1d(n, h))["interior_residual"])
    lines.append(f"sbp_interior_residual={sbp:.3e}")
    ok &= sbp <= SBP_TOL
    compat = 0.0
    for b in system.blocks:
        for s, pair in b.pairs.items():
            compat = max(compat, pair.compatibility_residual())
    lines.append(f"norm_compatibility_residual={compat:.3e}")
    ok &= compat <= COMPAT_TOL
    rep = stability_diagnostics(system, dense_limit=args.dense_limit)
    lines.append(f"skew_residual_rel={rep['skew_rel']:.3e}")
    ok &= rep["skew_rel"] <= SKEW_TOL
    key = "max_real" if "max_real" in rep else "max_real_bound"
    rho = rep["spectral_radius"]
    passed = rep[key] <= EIG_TOL * rho
    ok &= passed
    lines.append(f"{key}={rep[key]:.3e} spectral_radius={rho:.6e} ratio={rep['max_real_rel']:.3e}")
    lines.append(f"max Re(lambda) <= 1e-10*rho: {'yes' if passed else 'NO'}")
    lines.append(f"energy_rate_max={rep['energy_rate_max']:.3e}")
    lines.append(f"dt_cfl_s={cfl_time_step(system, 1.0):.6e}")
    lines.append(f"n_active={rep['n_active']}")
    print("\n".join(lines))
    print("status=" + ("ok" if ok else "FAIL"))
    return 0 if ok else 2


def cmd_gen_interp(args) -> int:
    ratio = _ratio(args.ratio)
    try:
        pair = build_interface_pair(args.nodes, ratio, args.h)
    except InterpolationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    res16 = pair.compatibility_residual()
    res21 = pair.base.aligned_residual()
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        names = ["T_c2f.txt", "T_f2c.txt", "T_W.txt", "T_hat_W.txt"]
        if not args.force and any((d / n).exists() for n in names):
            print(f"error: output files exist in {d}; pass --force", file=sys.stderr)
            return 1
        for n, M in zip(names, (pair.base.T_c2f, pair.base.T_f2c, pair.T_W, pair.T_hat_W)):
            write_triplets(d / n, M)
            print(f"wrote {d / n}")
    print(f"n_coarse={pair.base.n_coarse}")
    print(f"n_fine={pair.base.n_fine}")
    print(f"aligned_residual={res21:.3e}")
    print(f"compatibility_residual={res16:.3e}")
    ok = res16 <= COMPAT_TOL and res21 <= COMPAT_TOL
    print("status=" + ("ok" if ok else "FAIL"))
    return 0 if ok else 2


def _run_meta(path: Path) -> dict:
    d = path if path.is_dir() else path.parent
    return read_meta(d / META_TXT) if (d / META_TXT).exists() else {}


def _load_port(path: Path, name: str):
    csv_path = path / PROBES_CSV if path.is_dir() else path
    cols = read_csv(csv_path)
    meta = _run_meta(path)
    ez = sorted((k for k in cols if k.startswith(f"{name}_Ez_")), key=lambda k: int(k.rsplit("_", 1)[1]))
    hy = sorted((k for k in cols if k.startswith(f"{name}_Hy_")), key=lambda k: int(k.rsplit("_", 1)[1]))
    if not ez or len(ez) != len(hy):
        raise ValueError(f"{csv_path}: need matching {name}_Ez_k and {name}_Hy_k columns")
    E = np.column_stack([cols[k] for k in ez])
    H = np.column_stack([cols[k] for k in hy])
    return cols["time_s"], E, H, meta


def _source_cutoff(meta: dict) -> float | None:
    fc = [float(v) for k, v in meta.items() if k.startswith("f_cut_")]
    return max(fc) if fc else None


def reflection_from_runs(total_dir, reference_dir, probe="obs", f_max=None, n_freq=400, dy=None):
    t, Et, Ht, meta = _load_port(Path(total_dir), probe)
    t_r, Er, Hr, _ = _load_port(Path(reference_dir), probe)
    if t.shape != t_r.shape or np.any(t != t_r):
        raise ValueError("total and reference runs must share the same time samples")
    dt = float(t[1] - t[0])
    dy = float(dy if dy is not None else meta.get("dy", 1.0))
    if f_max is None:
        fc = _source_cutoff(meta)
        f_max = 0.8 * fc if fc else 0.25 / dt
    freqs = np.linspace(f_max / n_freq, f_max, n_freq)
    p_i = port_power(Er, Hr, dy, dt, freqs)
    p_r = port_power(Et - Er, Ht - Hr, dy, dt, freqs)
    return s11(p_r, p_i, freqs)


def cmd_s11(args) -> int:
    res = reflection_from_runs(args.total, args.reference, args.probe, args.fmax, args.nf, args.dy)
    if args.out:
        out = Path(args.out)
        if out.exists() and not args.force:
            print(f"error: {out} exists; pass --force", file=sys.stderr)
            return 1
        # frequencies above 0.9 x the source cutoff carry little incident power
        fc = _source_cutoff(_run_meta(Path(args.total)))
        low = res.freqs > LOW_CONFIDENCE_FRACTION * fc if fc else np.zeros(res.freqs.size, dtype=bool)
        write_csv(out, ["freq_hz", "s11_db", "low_confidence"], [res.freqs, res.s11_db, low.astype(int)])
        print(f"wrote {out}")
    valid = res.s11_db[res.valid]
    print(f"max_s11_db={np.max(valid):.3f}")
    print(f"n_valid={int(res.valid.sum())} n_freq={res.freqs.size}")
    return 0


def cmd_preset(args) -> int:
    data = get_preset(args.name, ratio=args.ratio, full_scale=args.full_scale)
    text = yaml.safe_dump(data, sort_keys=False)
    if args.out:
        out = Path(args.out)
        if out.exists() and not args.force:
            print(f"error: {out} exists; pass --force", file=sys.stderr)
            return 1
        out.write_text(text)
        print(f"wrote {out}")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sbpsub", description="SBP-SAT subgridding 2-D TM FDTD")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario and write CSV records")
    p.add_argument("scenario")
    p.add_argument("--out", help="output directory (default: scenario output.dir)")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.add_argument("--reference", action="store_true",
                   help="drop the embedded regions but keep the fine-mesh time step")
    p.add_argument("--steps", type=int, help="override time.n_steps")
    p.add_argument("--no-probes", action="store_true", help="write the energy series only")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check-sbp", help="operator, compatibility and stability diagnostics")
    p.add_argument("scenario")
    p.add_argument("--dense-limit", type=int, default=3000, help="largest DOF count for dense eigenvalues")
    p.set_defaults(func=cmd_check_sbp)

    p = sub.add_parser("gen-interp", help="generate interface transfer matrices")
    p.add_argument("--ratio", required=True, help="coarse:fine ratio, e.g. 2:3")
    p.add_argument("--nodes", type=int, required=True, help="coarse interface node count")
    p.add_argument("--h", type=float, default=1.0, help="coarse spacing (default 1)")
    p.add_argument("--out", help="directory for triplet files")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_gen_interp)

    p = sub.add_parser("s11", help="reflection coefficient from a total and a reference run")
    p.add_argument("--total", required=True, help="run directory (or probes.csv) with the embedded block")
    p.add_argument("--reference", required=True, help="run directory (or probes.csv) of the uniform mesh")
    p.add_argument("--probe", default="obs", help="observation line probe name")
    p.add_argument("--fmax", type=float, help="upper frequency (default 0.8 x source cutoff)")
    p.add_argument("--nf", type=int, default=400, help="number of frequencies")
    p.add_argument("--dy", type=float, help="line spacing (default from run metadata)")
    p.add_argument("--out", help="CSV file for freq_hz,s11_db")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_s11)

    p = sub.add_parser("preset", help="emit a built-in scenario file")
    p.add_argument("name", choices=PRESETS)
    p.add_argument("--ratio", help="override the grid ratio, e.g. 2:3")
    p.add_argument("--full-scale", action="store_true", help="original (non desk-scale) dimensions")
    p.add_argument("--out", help="write to this file instead of stdout")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_preset)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, OutputExistsError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InstabilityError as exc:
        print(f"instability: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
