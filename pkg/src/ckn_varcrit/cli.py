"""Command line entry point: ``ckn-varcrit <command> --config FILE [--set k=v]...``.

Every command writes ``report.json`` (sorted keys, full resolved config
embedded) plus its field/mesh files into the output directory. Exit codes:
0 success, 1 usage error, 2 geometry or admissibility failure, 3
non-convergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Callable

from threadpoolctl import threadpool_limits

from . import __version__
from .assembly import read_field, space_for, write_field
from .critical import (build_linking_frame, check_linking_geometry, check_mp_geometry, find_u1, linking_solve,
                       mountain_pass)
from .eigen import solve_lambda1, solve_mu2
from .errors import (AdmissibilityError, ConvergenceError, DegenerateInputError, DomainError, GeometryError,
                     IntegrabilityError)
from .mesh import disk_mesh_level, mesh_statistics, write_mesh
from .params import RunConfig, check_f_conditions, load_config, parse_config_text, validate_params
from .verify import estimate_ckn_constant, smooth_samples, solution_report, tail_exponent_check, write_tail_csv

log = logging.getLogger("ckn_varcrit")

COMMANDS = ("mesh", "eigen", "mp", "link", "ckn", "tail", "checkf", "report")

EXIT_OK, EXIT_USAGE, EXIT_GEOMETRY, EXIT_CONVERGENCE = 0, 1, 2, 3

#: initial linking frame radii; r is doubled and rho halved as needed
LINK_R0, LINK_RHO0 = 1.0, 0.5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class Run:
    """One command execution: config, output directory and the report being built."""

    def __init__(self, command: str, cfg: RunConfig, out_dir: Path):
        self.command = command
        self.cfg = cfg
        self.out = out_dir
        self.result: dict = {}
        self.files: dict[str, str] = {}
        self._mesh = None

    @property
    def params(self):
        return self.cfg.params

    def mesh(self):
        if self._mesh is None:
            c = self.cfg
            self._mesh = disk_mesh_level(self.params.radius, c.mesh_levels, c.grading, c.mesh_base_rings)
        return self._mesh

    def write(self, key: str, name: str, writer: Callable[[Path], None]) -> None:
        """Write through a temporary file so an existing file is only ever replaced whole."""
        self.out.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.out, prefix=f".{name}.")
        os.close(fd)
        try:
            writer(Path(tmp))
            os.replace(tmp, self.out / name)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
        self.files[key] = name

    def report(self, status: str, error: str | None = None) -> dict:
        doc = {
            "command": self.command,
            "config": self.cfg.to_dict(),
            "files": self.files,
            "mode": self.params.mode,
            "result": self.result,
            "status": status,
            "version": __version__,
        }
        if error is not None:
            doc["error"] = error
        text = json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n"
        self.write("report", "report.json", lambda p: p.write_text(text, encoding="utf-8"))
        return doc


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, tuples become lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        return _clean(obj.item())
    return obj


# ----------------------------------------------------------------------------
# pipeline pieces


def _p_star(params) -> float:
    try:
        return params.p_star if params.mode == "paper" else math.inf
    except DomainError:
        return math.inf


def _admissible(run: Run) -> None:
    rep = validate_params(run.params)
    run.result["admissibility"] = rep.to_dict()
    if not rep.ok:
        names = ", ".join(f.name for f in rep.failures)
        raise AdmissibilityError(f"parameters fail hard constraints: {names}")


def _check_f(run: Run, raise_on_fail: bool = True) -> None:
    P = run.params
    rep = check_f_conditions(P.nonlinearity(), P.p, _p_star(P), seed=run.cfg.seed)
    run.result["f_conditions"] = rep.to_dict()
    if raise_on_fail:
        rep.raise_for_failure()


def _resolve_lambda(run: Run, lam1: float, mu2: float | None = None) -> float:
    P, scale = run.params, run.cfg.lambda_scale
    if scale == "absolute":
        lam = P.lam
    elif scale == "lambda1":
        lam = P.lam * lam1
    else:
        if mu2 is None:
            raise AdmissibilityError("lambda.scale = gap needs mu2 and is only meaningful for link")
        lam = lam1 + P.lam * (mu2 - lam1)
    run.result["lambda"] = lam
    return lam


def _eigen(run: Run, need_mu2: bool):
    c = run.cfg
    base = run.params.replace(lam=0.0)
    e1 = solve_lambda1(base, run.mesh(), tol=c.tol, max_iter=c.max_iter, seed=c.seed)
    run.result.update(lambda1=e1.value, iters1=e1.iterations, residual1=e1.residual_norm)
    if not need_mu2:
        return e1, None
    e2, _ = solve_mu2(base, run.mesh(), e1, m_beads=max(c.loop_beads // 2, 2), tol=c.tol, max_iter=c.max_iter,
                      seed=c.seed)
    run.result.update(mu2=e2.value, iters2=e2.iterations, residual2=e2.residual_norm,
                      gap=e2.value - e1.value, lambda2_source="lambda2 = mu2 (odd-loop)")
    return e1, e2


def _mesh_info(run: Run) -> None:
    m = run.mesh()
    run.result["mesh_level"] = run.cfg.mesh_levels
    run.result["mesh"] = mesh_statistics(m).to_dict()
    run.write("mesh", "mesh.txt", lambda p: write_mesh(m, p))


# ----------------------------------------------------------------------------
# commands


def cmd_mesh(run: Run) -> None:
    _mesh_info(run)


def cmd_eigen(run: Run) -> None:
    _admissible(run)
    _mesh_info(run)
    e1, e2 = _eigen(run, need_mu2=True)
    run.write("e1", "e1.csv", lambda p: write_field(e1.func, p))
    run.write("e2", "e2.csv", lambda p: write_field(e2.func, p))


def _solution(run: Run, rep, lam: float) -> None:
    params = run.params.replace(lam=lam)
    run.result.update(rep.summary())
    run.result["solution"] = solution_report(rep.u, params).to_dict()
    run.write("solution", "solution.csv", lambda p: write_field(rep.u, p))
    if not rep.converged:
        raise ConvergenceError(f"{rep.regime} stopped at residual {rep.residual_dual:.3e} (tol {run.cfg.tol:g})")


def cmd_mp(run: Run) -> None:
    _admissible(run)
    _check_f(run)
    _mesh_info(run)
    c = run.cfg
    e1, _ = _eigen(run, need_mu2=False)
    lam = _resolve_lambda(run, e1.value)
    if not lam < e1.value:
        raise AdmissibilityError(f"mountain pass needs lambda < lambda1: lambda = {lam:.6g} >= lambda1 = {e1.value:.6g}")
    params = run.params.replace(lam=lam)
    nl = params.nonlinearity()
    geo = check_mp_geometry(params, nl, e1, seed=c.seed)
    run.result["geometry"] = {"alpha": geo.alpha, "rho": geo.rho, "bound_ok": geo.bound_ok, "sweep": geo.sweep}
    u1 = find_u1(e1, params, nl)
    rep = mountain_pass(params, nl, u1, n_path=c.path_beads, tol=c.tol, max_iter=c.max_iter, alpha=geo.alpha)
    _solution(run, rep, lam)


def cmd_link(run: Run) -> None:
    _admissible(run)
    _check_f(run)
    _mesh_info(run)
    c = run.cfg
    e1, e2 = _eigen(run, need_mu2=True)
    lam = _resolve_lambda(run, e1.value, e2.value)
    if not e1.value <= lam < e2.value:
        raise AdmissibilityError(
            f"linking needs lambda1 <= lambda < mu2: lambda = {lam:.6g}, "
            f"lambda1 = {e1.value:.6g}, mu2 = {e2.value:.6g}"
        )
    params = run.params.replace(lam=lam)
    nl = params.nonlinearity()
    frame = build_linking_frame(e1, e2, params, r=LINK_R0, rho=LINK_RHO0, seed=c.seed)
    geo = check_linking_geometry(frame, params, nl)
    run.result["geometry"] = {
        "alpha": geo.alpha,
        "sup_boundary": geo.sup_boundary,
        "r": geo.frame.r,
        "rho": geo.frame.rho,
        "r_doublings": geo.r_doublings,
        "rho_halvings": geo.rho_halvings,
    }
    rep = linking_solve(geo.frame, params, nl, tol=c.tol, max_iter=c.max_iter, alpha=geo.alpha)
    _solution(run, rep, lam)


def cmd_ckn(run: Run) -> None:
    _mesh_info(run)
    c = run.cfg
    est = estimate_ckn_constant(run.params, run.mesh(), r_exp=c.ckn_r, alpha_exp=c.ckn_alpha, tol=c.tol,
                                seed=c.seed, max_iter=c.max_iter)
    run.result.update(r=est.r_exp, alpha=est.alpha_exp, C_est=est.C_est, label=est.label,
                      iterations=est.iterations, converged=est.converged)
    run.write("maximizer", "maximizer.csv", lambda p: write_field(est.maximizer, p))


def cmd_tail(run: Run) -> None:
    _mesh_info(run)
    c = run.cfg
    samples = smooth_samples(space_for(run.mesh()), c.tail_samples, c.seed)
    chk = tail_exponent_check(run.params, run.mesh(), samples, r_exp=c.tail_r, alpha_exp=c.tail_alpha)
    run.result.update(chk.to_dict())
    run.result.update(r=c.tail_r, alpha=c.tail_alpha)
    run.write("tail", "tail.csv", lambda p: write_tail_csv(chk, p))


def cmd_checkf(run: Run) -> None:
    _check_f(run)


def cmd_report(run: Run, field: str | None = None) -> None:
    rep = validate_params(run.params)
    run.result["admissibility"] = rep.to_dict()
    _check_f(run, raise_on_fail=False)
    if field is not None:
        _mesh_info(run)
        u = read_field(space_for(run.mesh()), field)
        run.result["solution"] = solution_report(u, run.params).to_dict()
    if not rep.ok:
        raise AdmissibilityError("parameters fail hard constraints: " + ", ".join(f.name for f in rep.failures))


# ----------------------------------------------------------------------------
# entry points


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ckn-varcrit", description="Weighted p-Laplacian eigenvalues and critical points.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="key = value config file (defaults apply when omitted)")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config key; repeatable, last one wins")
    ap.add_argument("--out", help="output directory (overrides out_dir)")
    ap.add_argument("--threads", type=int, default=None, help="cap on BLAS/OpenMP threads")
    ap.add_argument("--field", help="field CSV to evaluate (report command)")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def run(command: str, config_path: str | None = None, overrides=(), out: str | None = None,
        threads: int | None = None, field: str | None = None) -> int:
    """Execute one command; returns the process exit code."""
    try:
        cfg = load_config(config_path, overrides) if config_path else parse_config_text("", overrides)
    except (OSError, ValueError) as exc:
        print(f"ckn-varcrit: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if command not in COMMANDS:
        print(f"ckn-varcrit: unknown command {command!r}", file=sys.stderr)
        return EXIT_USAGE
    r = Run(command, cfg, Path(out if out is not None else cfg.out_dir))
    handler = globals()[f"cmd_{command}"]
    kwargs = {"field": field} if command == "report" else {}
    limits = threadpool_limits(limits=threads) if threads else None
    try:
        handler(r, **kwargs)
    except (AdmissibilityError, GeometryError, DomainError, IntegrabilityError, DegenerateInputError) as exc:
        print(f"ckn-varcrit {command}: {exc}", file=sys.stderr)
        r.report("geometry_or_admissibility_failure", str(exc))
        return EXIT_GEOMETRY
    except ConvergenceError as exc:
        print(f"ckn-varcrit {command}: {exc}", file=sys.stderr)
        r.report("not_converged", str(exc))
        return EXIT_CONVERGENCE
    finally:
        if limits is not None:
            limits.unregister()
    r.report("ok")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ckn-varcrit: {exc}", file=sys.stderr)
        return EXIT_USAGE
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.field is not None and args.command != "report":
        print("ckn-varcrit: --field only applies to the report command", file=sys.stderr)
        return EXIT_USAGE
    return run(args.command, args.config, args.set, args.out, args.threads, args.field)


if __name__ == "__main__":
    sys.exit(main())
