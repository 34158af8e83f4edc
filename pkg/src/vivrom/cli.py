"""Command-line pipeline: ``vivrom {mesh,run-fom,run-pod,run-rom,report}``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, caseio, pod, postproc, rom
from .config import CaseConfig, ConfigError, load_config
from .linsolve import SolverError, symmetric_eig
from .mesh import MeshError, compute_geometry, non_orthogonality, ogrid_mesh, read_mesh, write_mesh
from .pimple import DivergenceError, run

log = logging.getLogger("vivrom")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class InputError(Exception):
    pass


def _case_config(args) -> CaseConfig:
    case = Path(args.case)
    if not case.is_dir():
        raise InputError(f"case directory {case} does not exist")
    cfg = load_config(case / "case.cfg")
    c = cfg.controls
    if getattr(args, "dt", None) is not None:
        c.dt = args.dt
    if getattr(args, "end_time", None) is not None:
        c.end_time = args.end_time
    if getattr(args, "fixed_cylinder", False):
        cfg.structure.fixed = True
    for k in ("modes_u", "modes_p", "modes_d"):
        v = getattr(args, k, None)
        if v is not None:
            setattr(cfg.pod, k, v)
    cfg.validate()
    return cfg


def _load_mesh(case: Path, cfg: CaseConfig):
    f = case / "mesh.txt"
    if f.is_file():
        return read_mesh(f)
    mesh = ogrid_mesh(cfg.geometry.spec())
    write_mesh(mesh, f)
    return mesh


# --------------------------------------------------------------------------
# stages


def cmd_mesh(args) -> int:
    cfg = _case_config(args)
    if args.refinement is not None:
        cfg.geometry.refinement = args.refinement
    spec = cfg.geometry.spec()
    try:
        spec.check()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    mesh = ogrid_mesh(spec)
    geom = compute_geometry(mesh)
    write_mesh(mesh, Path(args.case) / "mesh.txt")
    print(f"cells {mesh.n_cells} points {mesh.n_points} faces {mesh.n_faces}")
    print(f"min volume {geom.V.min():.4e} max non-orthogonality "
          f"{non_orthogonality(geom).max():.2f} deg")
    return EXIT_OK


def _write_histories(case: Path, hist, prefix: str = "") -> None:
    h = hist.arrays()
    caseio.write_csv(case / f"{prefix}forces.csv", ["t", "CL", "CD", "Fy"],
                     zip(h["t"], h["CL"], h["CD"], h["Fy"]))
    caseio.write_csv(case / f"{prefix}motion.csv", ["t", "y", "yDot"],
                     zip(h["t"], h["y"], h["ydot"]))


def cmd_run_fom(args) -> int:
    case = Path(args.case)
    cfg = _case_config(args)
    mesh = _load_mesh(case, cfg)
    fc = cfg.flow_case(mesh)
    ctl = cfg.pimple_controls()
    t0 = time.time()
    res = run(fc, ctl, dump_path=case / "divergence_dump.npz")
    _write_histories(case, res.history)
    caseio.write_snapshots(case / "snapshots", res.snapshots)
    caseio.write_json(case / "run_manifest.json",
                      {"version": __version__, "stage": "run-fom", "config": cfg.to_dict(),
                       "n_cells": mesh.n_cells, "steps": res.state.step})
    print(f"run-fom: {res.state.step} steps to t={res.state.t:.4g} "
          f"({len(res.snapshots)} snapshots, {time.time() - t0:.1f} s)")
    return EXIT_OK


def _pod_window(snaps, start_time: float):
    keep = snaps["time"] >= start_time - 1e-9
    if keep.sum() < 2:
        raise InputError(f"fewer than 2 snapshots after t={start_time}")
    return keep


def _choose_modes(requested: int, eig, energy: float) -> int:
    """Requested count, or the energy criterion when the request is 0."""
    if requested > 0:
        return requested
    return min(pod.modes_for_energy(eig, energy), pod.numerical_rank(eig))


def cmd_run_pod(args) -> int:
    case = Path(args.case)
    cfg = _case_config(args)
    mesh = _load_mesh(case, cfg)
    snaps = caseio.read_snapshots(case / "snapshots")
    keep = _pod_window(snaps, cfg.pod.start_time)
    V = compute_geometry(mesh).V
    nc = mesh.n_cells
    lifting = pod.uniform_lifting(nc, cfg.physics.U_in)
    U = np.column_stack([pod.stack_vector(u) for u in snaps["u"][keep]])
    Pm = snaps["p"][keep].T
    data = {
        "u": (pod.apply_lifting(U, lifting), np.tile(V, 2), cfg.pod.modes_u, lifting, U),
        "p": (Pm, V, cfg.pod.modes_p, None, Pm),
    }
    if not cfg.structure.fixed:
        Dm = np.column_stack([pod.stack_vector(d) for d in snaps["displacement"][keep]])
        data["d"] = (Dm, None, cfg.pod.modes_d, None, Dm)
    bases, coeffs, info = {}, {}, {}
    for name, (S, w, req, lift, raw) in data.items():
        C = pod.build_correlation(S, w)
        lam, _ = symmetric_eig(C)
        n = _choose_modes(req, np.maximum(lam, 0), cfg.pod.energy)
        b = pod.compute_modes(S, n, w, C=C)
        b.lifting = lift
        bases[name] = b
        coeffs[name] = pod.project(raw, b)
        r = pod.ric(b.eigenvalues, n)
        info[name] = {"ric": r, "weights": "unit" if w is None else "volume"}
        print(f"{name}: {n} modes, RIC({n}) = {r:.6f}")
    caseio.write_pod(case / "pod", bases, coeffs, info)
    return EXIT_OK


def _surrogate(cfg, snaps, keep, bases):
    if cfg.structure.fixed:
        return None
    disp = list(snaps["displacement"][keep])
    n_d = bases["d"].n_modes if "d" in bases else cfg.pod.modes_d
    return rom.train_displacement_surrogate(disp, snaps["y"][keep], max(n_d, 1),
                                            cfg.rom.surrogate_basis)


def _truncate(b, n):
    return b if n is None or n >= b.n_modes else b.truncate(n)


def cmd_run_rom(args) -> int:
    case = Path(args.case)
    cfg = _case_config(args)
    mesh = _load_mesh(case, cfg)
    snaps = caseio.read_snapshots(case / "snapshots")
    keep = _pod_window(snaps, cfg.pod.start_time)
    bases = caseio.read_pod(case / "pod")
    bu = _truncate(bases["u"], args.modes_u)
    bp = _truncate(bases["p"], args.modes_p)
    if "d" in bases:
        bases["d"] = _truncate(bases["d"], args.modes_d)
    rb = rom.RomBases(bu, bp, _surrogate(cfg, snaps, keep, bases))
    fc = cfg.flow_case(mesh)
    end = cfg.rom.end_time or cfg.controls.end_time
    ctl = cfg.pimple_controls(end)
    i0 = int(np.argmax(keep))
    if "phi" not in snaps:
        raise InputError("snapshots lack face fluxes; rerun run-fom")
    state, solvers = rom.reduced_initial_state(
        fc, ctl, rb, snaps["u"][i0], snaps["p"][i0], snaps["phi"][i0],
        float(snaps["time"][i0]), float(snaps["y"][i0]), float(snaps["ydot"][i0]),
        float(snaps["accel"][i0]))
    t0 = time.time()
    res = rom.run_rom(fc, ctl, rb, state, solvers)
    _write_histories(case, res.run.history, "rom_")
    na, nb = bu.n_modes, bp.n_modes
    nd = len(res.coeffs[0]) - na - nb
    header = (["t"] + [f"a{i}" for i in range(na)] + [f"b{i}" for i in range(nb)]
              + [f"c{i}" for i in range(nd)])
    caseio.write_csv(case / "rom_coeffs.csv", header,
                     [[t] + list(c) for t, c in zip(res.times, res.coeffs)])
    caseio.write_snapshots(case / "rom_snapshots", res.run.snapshots)
    print(f"run-rom: {res.run.state.step} steps with {na} u / {nb} p modes "
          f"({time.time() - t0:.1f} s)")
    return EXIT_OK


def cmd_report(args) -> int:
    case = Path(args.case)
    cfg = _case_config(args)
    mesh = _load_mesh(case, cfg)
    V = compute_geometry(mesh).V
    fom = caseio.read_snapshots(case / "snapshots")
    romd = caseio.read_snapshots(case / "rom_snapshots")
    out = case / "report"
    out.mkdir(exist_ok=True)
    rows = []
    for j, t in enumerate(romd["time"]):
        i = np.flatnonzero(np.abs(fom["time"] - t) <= 1e-9 * max(1.0, abs(t)))
        if not len(i):
            continue
        i = int(i[0])
        eu = postproc.relative_l2_error(fom["u"][i], romd["u"][j], V)
        ep = (postproc.relative_l2_error(fom["p"][i], romd["p"][j], V)
              if np.any(fom["p"][i]) else 0.0 if not np.any(romd["p"][j]) else float("inf"))
        fd = fom["displacement"][i]
        ed = postproc.frobenius_error(fd, romd["displacement"][j]) if np.any(fd) else 0.0
        rows.append((t, eu, ep, ed))
    caseio.write_csv(out / "errors.csv", ["t", "eps_u", "eps_p", "eps_d"], rows)
    ff, rf = caseio.read_csv(case / "forces.csv"), caseio.read_csv(case / "rom_forces.csv")
    fm, rm = caseio.read_csv(case / "motion.csv"), caseio.read_csv(case / "rom_motion.csv")
    summary = {"n_compared": len(rows)}
    if rows:
        e = np.array(rows)
        summary.update({"mean_eps_u": float(e[:, 1].mean()), "mean_eps_p": float(e[:, 2].mean()),
                        "max_eps_d": float(e[:, 3].max())})
    dt = float(np.median(np.diff(ff["t"]))) if len(ff["t"]) > 1 else cfg.controls.dt
    for key, name in (("CL", "cl"), ("CD", "cd")):
        if min(len(ff[key]), len(rf[key])) >= postproc.MIN_PSD_SAMPLES:
            f1, p1 = postproc.psd(ff[key], dt)
            f2, p2 = postproc.psd(rf[key], dt)
            n = min(len(f1), len(f2))
            caseio.write_csv(out / f"psd_{name}.csv", ["f", "P_fom", "P_rom"],
                             zip(f1[:n], p1[:n], p2[:n]))
    lock = {}
    for tag, F, M in (("fom", ff, fm), ("rom", rf, rm)):
        if len(F["CL"]) >= 2 * postproc.MIN_PSD_SAMPLES:
            lock[tag] = postproc.lock_in_report(F["CL"], F["CD"], M["y"], dt)
    lock["summary"] = summary
    caseio.write_json(out / "lockin.json", lock)
    n = min(len(ff["CL"]), len(rf["CL"]))
    pf = postproc.phase_portrait(ff["CL"][:n], fm["y"][:n], cfg.geometry.diameter)
    pr = postproc.phase_portrait(rf["CL"][:n], rm["y"][:n], cfg.geometry.diameter)
    caseio.write_csv(out / "phase_portrait.csv", ["CL_fom", "yD_fom", "CL_rom", "yD_rom"],
                     np.hstack([pf, pr]))
    coef_file = case / "rom_coeffs.csv"
    if coef_file.is_file():
        c = caseio.read_csv(coef_file)
        a = np.column_stack([c[k] for k in c if k.startswith("a")])
        cyc = postproc.coefficient_cycles(a)
        caseio.write_csv(out / "coeff_cycles.csv", [f"col{i}" for i in range(cyc.shape[1])], cyc)
    for k, v in summary.items():
        print(f"{k}: {v}")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vivrom", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--case", required=True, help="case directory holding case.cfg")
        return sp

    s = common(sub.add_parser("mesh", help="generate the O-grid mesh"))
    s.add_argument("--refinement", type=int, help="integer refinement factor per direction")
    s.set_defaults(func=cmd_mesh)
    stages = (("run-fom", cmd_run_fom, "run the full-order solver and write snapshots"),
              ("run-pod", cmd_run_pod, "compute POD bases from the snapshots"),
              ("run-rom", cmd_run_rom, "run the reduced solver"),
              ("report", cmd_report, "compare full and reduced runs"))
    for name, func, text in stages:
        s = common(sub.add_parser(name, help=text))
        s.add_argument("--dt", type=float, help="time step override (s)")
        s.add_argument("--end-time", type=float, help="end time override (s)")
        s.add_argument("--fixed-cylinder", action="store_true", help="disable body motion")
        s.add_argument("--modes-u", type=int, help="velocity modes")
        s.add_argument("--modes-p", type=int, help="pressure modes")
        s.add_argument("--modes-d", type=int, help="displacement modes")
        s.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DivergenceError, SolverError, MeshError, FloatingPointError) as exc:
        if args.command == "mesh" and isinstance(exc, MeshError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, InputError, FileNotFoundError, caseio.ManifestError,
            pod.PodRankError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
