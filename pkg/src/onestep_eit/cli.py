"""
Command-line front end: ``eit mesh|forward|reconstruct|sweep|compare|diagnose``.

Every command reads an optional JSON config (``--config``) whose keys match
:class:`ExperimentConfig`; command-line flags override file values.  All
outputs go to ``--out``.  Exit codes: 0 success, 1 usage or configuration
error, 2 numerical failure, 3 self-test failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .analysis import (ErrorReport, error_report, spectrum_check, support_metrics,
                       write_reports_csv)
from .assemble import area_matrix, cached_sensitivity
from .basis import EXACT_MAX_M, CurrentBasis, assemble_spectral, gram_eigenvalues, ntd_identity
from .errors import NumericalError, ParameterError
from .forward import Phantom, add_noise, forward_mesh_for, load_phantom, measure_F, synthesize_V
from .measurement import write_measurement_csv
from .mesh import build_disk_mesh, write_mesh_csv
from .reconstruct import (RegConfig, ReconField, iterative_baseline, reconstruct, write_pgm,
                          write_recon_csv)

log = logging.getLogger("onestep_eit")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_SELFTEST = 0, 1, 2, 3


@dataclass
class ExperimentConfig:
    m: int = 32
    h_recon: float = 0.02
    h_forward: float | None = None
    phantom: str | None = None
    delta: float = 0.01
    alpha: float | None = None
    seed: int = 0
    out: str = "eit_out"
    alphas: list = field(default_factory=list)
    cg_tol: float = 1e-10
    cg_max_iters: int | None = None
    raster_size: int = 512
    cache_dir: str | None = None

    def validate(self, need_phantom: bool = True) -> None:
        if not isinstance(self.m, int) or self.m < 4 or self.m % 2:
            raise ParameterError(f"m must be an even integer >= 4, got {self.m!r}")
        for name in ("h_recon", "h_forward"):
            v = getattr(self, name)
            if v is not None and not 0.0 < v < 1.0:
                raise ParameterError(f"{name} must lie in (0, 1), got {v}")
        if not 0.0 <= self.delta < 1.0:
            raise ParameterError(f"delta must lie in [0, 1), got {self.delta}")
        if self.alpha is not None and not self.alpha > 0:
            raise ParameterError(f"alpha must be positive, got {self.alpha}")
        if self.alpha is None and self.delta == 0.0:
            raise ParameterError("delta = 0 gives alpha = 0 from the rule; pass --alpha")
        if need_phantom:
            if self.phantom is None:
                raise ParameterError("a phantom file is required (--phantom)")
            if not Path(self.phantom).is_file():
                raise ParameterError(f"phantom file not found: {self.phantom}")
        if self.cg_tol <= 0:
            raise ParameterError("cg_tol must be positive")

    def reg(self) -> RegConfig:
        if self.alpha is None:
            return RegConfig.from_rule(self.m, self.delta)
        return RegConfig(self.alpha, self.delta, "explicit", self.m)


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment file")
    common.add_argument("--m", type=int, help="number of boundary currents (even)")
    common.add_argument("--h", dest="h_recon", type=float, help="reconstruction mesh size")
    common.add_argument("--h-forward", dest="h_forward", type=float,
                        help="forward mesh size (default: reconstruction mesh refined twice)")
    common.add_argument("--phantom", help="phantom JSON file")
    common.add_argument("--delta", type=float, help="relative noise level")
    common.add_argument("--alpha", type=float, help="regularization parameter (default: rule)")
    common.add_argument("--seed", type=int, help="noise seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="eit", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("mesh", parents=[common], help="write the reconstruction mesh")
    sub.add_parser("forward", parents=[common], help="synthesize V and noisy V")
    sub.add_parser("reconstruct", parents=[common], help="one-shot reconstruction")
    sw = sub.add_parser("sweep", parents=[common], help="reconstruct over several alphas")
    sw.add_argument("--alphas", help="comma-separated values; 'rule' selects the alpha rule")
    cp = sub.add_parser("compare", parents=[common], help="direct vs conjugate-gradient solve")
    cp.add_argument("--cg-tol", dest="cg_tol", type=float)
    cp.add_argument("--cg-max-iters", dest="cg_max_iters", type=int)
    dg = sub.add_parser("diagnose", parents=[common], help="spectrum and forward-solver self-test")
    dg.add_argument("--reference", choices=["pattern", "exact"], default="pattern",
                    help="spectrum the Gram eigenvalues are checked against")
    return p


def _parse_alphas(text) -> list:
    if text is None:
        return []
    if isinstance(text, list):
        return text
    items = [t.strip() for t in str(text).split(",") if t.strip()]
    return [t if t == "rule" else float(t) for t in items]


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    values = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ParameterError(f"config file not found: {path}")
        try:
            values = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ParameterError(f"config file is not valid JSON: {exc}") from None
        known = {f.name for f in fields(ExperimentConfig)}
        unknown = set(values) - known
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
    for f in fields(ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    if "alphas" in values:
        values["alphas"] = _parse_alphas(values["alphas"])
    return ExperimentConfig(**values)


# -- pipeline -----------------------------------------------------------------


class _Pipeline:
    def __init__(self, cfg: ExperimentConfig, phantom: Phantom):
        self.cfg = cfg
        self.basis = CurrentBasis(cfg.m)
        self.phantom = phantom
        self.mesh = build_disk_mesh(cfg.h_recon)
        self.fwd_mesh = (build_disk_mesh(cfg.h_forward) if cfg.h_forward is not None
                         else forward_mesh_for(self.mesh))
        self.V = synthesize_V(phantom, self.basis, mesh=self.fwd_mesh)
        self.V_delta = add_noise(self.V, cfg.delta, cfg.seed)
        cache = None
        if cfg.cache_dir is not None:
            cache = Path(cfg.out) / cfg.cache_dir
        self.A = cached_sensitivity(self.mesh, self.basis, cache)
        self.P = area_matrix(self.mesh)
        self.spec = assemble_spectral(cfg.m)

    def solve(self, reg: RegConfig) -> ReconField:
        return reconstruct(self.mesh, self.A, self.P, self.V_delta, reg)

    def report(self, fld: ReconField, reg: RegConfig) -> ErrorReport:
        rep = error_report(fld, self.phantom, self.spec, self.V, self.V_delta, reg, self.cfg.h_recon)
        rep.extra.update(alpha_source=reg.alpha_source, **support_metrics(fld))
        return rep


EXTRA_FIELDS = ["alpha_source", "support_threshold", "support_centroid_x",
                "support_centroid_y", "support_components"]


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_mesh(cfg: ExperimentConfig) -> int:
    cfg.validate(need_phantom=False)
    mesh = build_disk_mesh(cfg.h_recon)
    path = write_mesh_csv(mesh, _outdir(cfg) / "mesh.csv")
    log.info("wrote %s (%d cells)", path, mesh.n_cells)
    return EXIT_OK


def cmd_forward(cfg: ExperimentConfig) -> int:
    cfg.validate()
    phantom = load_phantom(cfg.phantom)
    basis = CurrentBasis(cfg.m)
    mesh = build_disk_mesh(cfg.h_recon)
    fwd = build_disk_mesh(cfg.h_forward) if cfg.h_forward is not None else forward_mesh_for(mesh)
    V = synthesize_V(phantom, basis, mesh=fwd)
    Vd = add_noise(V, cfg.delta, cfg.seed)
    out = _outdir(cfg)
    write_measurement_csv(V, out / "V.csv")
    write_measurement_csv(Vd, out / "V_delta.csv")
    log.info("wrote V and V_delta (m=%d, delta=%g, seed=%d)", cfg.m, cfg.delta, cfg.seed)
    return EXIT_OK


def _write_single(pipe: _Pipeline, reg: RegConfig, out: Path) -> ErrorReport:
    fld = pipe.solve(reg)
    rep = pipe.report(fld, reg)
    write_recon_csv(fld, out / "recon.csv")
    write_pgm(fld, out / "recon.pgm", pipe.cfg.raster_size)
    write_reports_csv([rep], out / "report.csv", EXTRA_FIELDS)
    return rep


def cmd_reconstruct(cfg: ExperimentConfig) -> int:
    cfg.validate()
    phantom = load_phantom(cfg.phantom)
    reg = cfg.reg()
    log.info("alpha = %.6g (source: %s)", reg.alpha, reg.alpha_source)
    pipe = _Pipeline(cfg, phantom)
    _write_single(pipe, reg, _outdir(cfg))
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig) -> int:
    if not cfg.alphas:
        raise ParameterError("sweep needs a non-empty alpha list (--alphas)")
    cfg.validate()
    regs = []
    for a in cfg.alphas:
        if a == "rule":
            regs.append(RegConfig.from_rule(cfg.m, cfg.delta))
        else:
            if not float(a) > 0:
                raise ParameterError(f"alpha values must be positive, got {a}")
            regs.append(RegConfig(float(a), cfg.delta, "explicit", cfg.m))
    phantom = load_phantom(cfg.phantom)
    pipe = _Pipeline(cfg, phantom)
    out = _outdir(cfg)
    if len(regs) == 1:
        log.info("alpha = %.6g (source: %s)", regs[0].alpha, regs[0].alpha_source)
        _write_single(pipe, regs[0], out)
        return EXIT_OK
    rule_alpha = RegConfig.from_rule(cfg.m, cfg.delta).alpha if cfg.delta > 0 else None

    def run(reg):
        fld = pipe.solve(reg)
        return fld, pipe.report(fld, reg)

    with ThreadPoolExecutor(max_workers=min(len(regs), os.cpu_count() or 1)) as pool:
        results = list(pool.map(run, regs))
    rows = []
    for k, (reg, (fld, rep)) in enumerate(zip(regs, results)):
        log.info("sweep %d: alpha = %.6g (source: %s)", k, reg.alpha, reg.alpha_source)
        write_pgm(fld, out / f"recon_{k:02d}.pgm", cfg.raster_size)
        row = rep.row()
        row.update(label=f"alpha_{k:02d}", raster=f"recon_{k:02d}.pgm",
                   rule_selected=int(reg.alpha_source == "rule"))
        rows.append(row)
    best = min(rows, key=lambda r: r["l2_error"])
    ruled = [r for r in rows if r["rule_selected"]]
    summary = dict(ruled[0] if ruled else {"alpha": rule_alpha})
    summary.update(label="summary", rule_selected=1, best_alpha=best["alpha"],
                   best_l2_error=best["l2_error"], raster=summary.get("raster", ""))
    rows.append(summary)
    write_reports_csv(rows, out / "sweep.csv",
                      ["label", "rule_selected", "raster", "best_alpha", "best_l2_error"] + EXTRA_FIELDS)
    return EXIT_OK


def cmd_compare(cfg: ExperimentConfig) -> int:
    cfg.validate()
    phantom = load_phantom(cfg.phantom)
    reg = cfg.reg()
    pipe = _Pipeline(cfg, phantom)
    out = _outdir(cfg)
    t0 = time.perf_counter()
    direct = pipe.solve(reg)
    t_direct = time.perf_counter() - t0
    t0 = time.perf_counter()
    it = iterative_baseline(pipe.A, pipe.P, pipe.V_delta, reg, max_iters=cfg.cg_max_iters,
                            tol=cfg.cg_tol, mesh=pipe.mesh)
    t_iter = time.perf_counter() - t0
    diff = float(np.linalg.norm(it.mu - direct.mu) / max(np.linalg.norm(direct.mu), 1e-300))
    write_pgm(direct, out / "recon_direct.pgm", cfg.raster_size)
    write_pgm(it.field, out / "recon_iterative.pgm", cfg.raster_size)
    with (out / "compare.csv").open("w", newline="") as fh:
        fh.write("# schema=compare/v1\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["solver", "method", "iterations", "converged", "relative_difference",
                    "alpha", "alpha_source"])
        w.writerow(["direct", direct.info["method"], 0, 1, repr(0.0), repr(reg.alpha),
                    reg.alpha_source])
        w.writerow(["iterative", "cg", it.iterations, int(it.converged), repr(diff),
                    repr(reg.alpha), reg.alpha_source])
    # wall-clock times vary between runs, so they stay out of the CSV
    (out / "timings.json").write_text(
        json.dumps({"direct_seconds": t_direct, "iterative_seconds": t_iter}, indent=2) + "\n")
    log.info("direct %.3fs, cg %.3fs (%d iterations), relative difference %.3e",
             t_direct, t_iter, it.iterations, diff)
    if not it.converged:
        return EXIT_NUMERIC
    return EXIT_OK


SPECTRUM_TOL = 1e-6
NTD_TOL = 0.02


def cmd_diagnose(cfg: ExperimentConfig, reference: str = "pattern") -> int:
    cfg.validate(need_phantom=False)
    m = cfg.m
    if m > EXACT_MAX_M:
        raise ParameterError(f"diagnose supports m <= {EXACT_MAX_M}")
    spec = assemble_spectral(m)
    ev = gram_eigenvalues(m)[: spec.m_prime]
    dev_pattern = spectrum_check(spec)
    dev_exact = float(np.max(np.abs(ev - spec.lam) / spec.lam))
    print(f"m = {m}, m' = {spec.m_prime}")
    print(f"block-pattern T^T T off-diagonal max: "
          f"{np.abs(spec.T.T @ spec.T - np.diag(spec.tt_diag)).max():.3e}")
    print(f"Gram eigenvalues vs 4/((2k-1)pi) pattern: max rel. deviation {dev_pattern:.3e}")
    print(f"Gram eigenvalues vs exact T^T T:          max rel. deviation {dev_exact:.3e}")
    print(f"{'k':>3} {'gram*pi':>12} {'pattern*pi':>12} {'exact*pi':>12}")
    for k in range(spec.m_prime):
        print(f"{k + 1:>3} {ev[k] * np.pi:12.6f} {spec.tt_diag[k] * np.pi:12.6f} "
              f"{spec.lam[k] * np.pi:12.6f}")
    # FEM error on current j grows like (n_j h)^2, so the default mesh shrinks with m
    h = cfg.h_forward if cfg.h_forward is not None else min(0.05, 0.4 / m)
    F = measure_F(build_disk_mesh(h), Phantom(), CurrentBasis(m)).entries
    F0 = ntd_identity(m).entries
    rel = np.abs(np.diag(F) - np.diag(F0)) / np.diag(F0)
    off = np.abs(F - np.diag(np.diag(F))).max()
    print(f"\nNtD matrix for sigma = 1 at h = {h}: analytic vs FEM")
    print(f"{'j':>3} {'analytic':>10} {'fem':>12} {'rel.err':>10}")
    for j in range(m):
        print(f"{j + 1:>3} {F0[j, j]:10.6f} {F[j, j]:12.8f} {rel[j]:10.2e}")
    print(f"max off-diagonal |F_ij| = {off:.2e}")
    dev = dev_pattern if reference == "pattern" else dev_exact
    ok = dev <= SPECTRUM_TOL and rel.max() <= NTD_TOL
    print("self-test:", "PASS" if ok else "FAIL", f"(spectrum reference: {reference})")
    return EXIT_OK if ok else EXIT_SELFTEST


COMMANDS = {"mesh": cmd_mesh, "forward": cmd_forward, "reconstruct": cmd_reconstruct,
            "sweep": cmd_sweep, "compare": cmd_compare, "diagnose": cmd_diagnose}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        if args.command == "diagnose":
            return cmd_diagnose(cfg, args.reference)
        return COMMANDS[args.command](cfg)
    except ParameterError as exc:
        print(f"eit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"eit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
