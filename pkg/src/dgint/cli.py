"""Command-line driver: ``dgint <command> [chart] [options]``.

Reports are ``key = value`` lines with optional CSV blocks.  Any library
error ends the run with an ``[error]`` block and exit status 2.
"""

from __future__ import annotations

import argparse
import io
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import charts
from .graded import ChartError, check_q2, format_polynomial
from .groupoid import (
    ConvergenceError,
    GroupoidElement,
    RetractionError,
    SingularJacobianError,
    bch_product,
    edge_vector,
    element_from_vector,
    gauge_flow_retract,
    horn_fill_ks,
    multiply,
    vertex_values,
)
from .mc import ExitError, RangeError, kuranishi, kuranishi_inverse
from .polyform import from_table, to_table
from .sampling import random_closed_form
from .simplicial import HornData, HornError, horn_fill_big, whitney_project

LIBRARY_ERRORS = (ChartError, ConvergenceError, ExitError, RangeError, HornError, RetractionError,
                  SingularJacobianError, ValueError, FileNotFoundError, KeyError)


@dataclass(frozen=True)
class RunConfig:
    command: str
    chart: str | None = None
    picard_tol: float = 1e-10
    newton_tol: float = 1e-12
    mc_tol: float = 1e-10
    D: int = 8
    steps: int = 64
    output: str | None = None
    seed: int = 0

    def __post_init__(self):
        for name in ("picard_tol", "newton_tol", "mc_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.D < 2:
            raise ValueError("degree cap D must be at least 2")
        if self.steps < 1:
            raise ValueError("steps must be positive")


class Report:
    def __init__(self):
        self.buf = io.StringIO()

    def kv(self, key: str, value) -> None:
        self.buf.write(f"{key} = {_fmt(value)}\n")

    def line(self, text: str) -> None:
        self.buf.write(text + "\n")

    def csv(self, name: str, header: list[str], rows) -> None:
        self.buf.write(f"[csv {name}]\n")
        self.buf.write(",".join(header) + "\n")
        for r in rows:
            self.buf.write(",".join(_fmt(v) for v in r) + "\n")
        self.buf.write("[/csv]\n")

    def text(self) -> str:
        return self.buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v) + 0.0:.6e}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return ";".join(_fmt(x) for x in v)
    return str(v)


def _vec(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


# ------------------------------------------------------------ commands


def cmd_check_q2(cfg: RunConfig, args, rep: Report) -> int:
    dg = charts.load(cfg.chart, allow_unchecked=True)
    res = check_q2(dg)
    ok = all(r.is_zero() for r in res)
    rep.kv("chart", dg.label)
    for name, r in zip(dg.coords.names, res):
        rep.kv(f"residual.{name}", "0" if r.is_zero() else format_polynomial(r))
    rep.line(f"Q^2 = 0: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def _load_form(path: str, dg, D: int):
    return from_table(Path(path).read_text(), dg.coords, D)


def cmd_mc_solve(cfg: RunConfig, args, rep: Report) -> int:
    dg = charts.load(cfg.chart)
    if args.closed:
        B = _load_form(args.closed, dg, cfg.D)
    else:
        rng = np.random.default_rng(cfg.seed)
        B = random_closed_form(dg, args.n, cfg.D, rng, args.scale)
    sol = kuranishi_inverse(dg, B, tol=cfg.picard_tol, vertex=args.vertex, mc_tol=cfg.mc_tol)
    rep.kv("chart", dg.label)
    rep.kv("n", B.frame.n)
    rep.kv("D", B.frame.D)
    rep.kv("seed", cfg.seed)
    rep.kv("iterations", sol.iterations)
    rep.kv("mc_residual", sol.residual_norm)
    rep.kv("kuranishi_roundtrip", (kuranishi(dg, sol.form, args.vertex) - B).max_coef())
    rep.kv("converged", sol.converged)
    rep.kv("truncated", sol.truncated)
    _write_output(cfg, to_table(sol.form), rep)
    return 0 if sol.converged else 1


def cmd_horn_fill(cfg: RunConfig, args, rep: Report) -> int:
    dg = charts.load(cfg.chart)
    paths = args.faces.split(",")
    faces = [None if p.strip() in ("-", "") else _load_form(p.strip(), dg, cfg.D) for p in paths]
    n = len(faces) - 1
    k = args.k
    rep.kv("chart", dg.label)
    rep.kv("n", n)
    rep.kv("k", k)
    rep.kv("mode", args.mode)
    if args.mode == "big":
        fill = horn_fill_big(dg, HornData(n, k, faces), tol=cfg.picard_tol)
        rep.kv("iterations", fill.solution.iterations)
        rep.kv("mc_residual", fill.solution.residual_norm)
        rep.kv("restriction_error", fill.restriction_error)
        rep.kv("truncated", fill.solution.truncated)
        form = fill.solution.form
    else:
        cochains = [None if f is None else whitney_project(f, 0) for f in faces]
        fill = horn_fill_ks(dg, cochains, k, tol=cfg.newton_tol, D=cfg.D)
        g = fill.element
        rep.kv("newton_iterations", fill.iterations)
        rep.kv("unknowns", fill.unknowns)
        rep.kv("equations", fill.equations)
        rep.kv("mc_residual", g.mc_residual_norm)
        rep.kv("gauge_defect", g.gauge_defect_norm)
        form = g.form
    _write_output(cfg, to_table(form), rep)
    return 0


def _product_row(dg, a, b, cfg: RunConfig):
    ga = element_from_vector(dg, a, D=cfg.D)
    gb = element_from_vector(dg, b, x=vertex_values(ga, 1), D=cfg.D)
    p = multiply(dg, ga, gb, tol=cfg.newton_tol)
    oracle = bch_product(dg.bracket_constants(), a, b) if dg.is_lie_algebra() else None
    return p, oracle


def cmd_multiply(cfg: RunConfig, args, rep: Report) -> int:
    dg = charts.load(cfg.chart)
    a, b = _vec(args.a), _vec(args.b)
    p, oracle = _product_row(dg, a, b, cfg)
    rep.kv("chart", dg.label)
    rep.kv("a", a)
    rep.kv("b", b)
    rep.kv("product", edge_vector(p))
    rep.kv("mc_residual", p.mc_residual_norm)
    rep.kv("gauge_defect", p.gauge_defect_norm)
    if oracle is not None:
        rep.kv("bch_oracle", oracle)
        rep.kv("deviation", float(np.max(np.abs(edge_vector(p) - oracle))))
    return 0


def cmd_groupoid_table(cfg: RunConfig, args, rep: Report) -> int:
    dg = charts.load(cfg.chart)
    rng = np.random.default_rng(cfg.seed)
    m = sum(1 for di in dg.coords.degrees if di == 1)
    ua = rng.normal(size=m)
    ub = rng.normal(size=m)
    ua /= np.linalg.norm(ua)
    ub /= np.linalg.norm(ub)
    grid = np.linspace(-args.radius, args.radius, args.grid)
    rows = []
    worst = 0.0
    for sa in grid:
        for sb in grid:
            a, b = sa * ua, sb * ub
            p, oracle = _product_row(dg, a, b, cfg)
            prod = edge_vector(p)
            dev = float(np.max(np.abs(prod - oracle))) if oracle is not None else float("nan")
            if oracle is not None:
                worst = max(worst, dev)
            rows.append([a, b, prod, p.mc_residual_norm, oracle if oracle is not None else "", dev])
    rep.kv("chart", dg.label)
    rep.kv("seed", cfg.seed)
    rep.kv("grid", args.grid)
    rep.kv("radius", args.radius)
    rep.kv("max_deviation", worst)
    rep.csv("products", ["a", "b", "product", "residual", "oracle_product", "deviation"], rows)
    return 0


def cmd_retract(cfg: RunConfig, args, rep: Report) -> int:
    dg = charts.load(cfg.chart)
    rng = np.random.default_rng(cfg.seed)
    B = random_closed_form(dg, args.n, cfg.D, rng, args.scale)
    sol = kuranishi_inverse(dg, B, tol=cfg.picard_tol)
    r = gauge_flow_retract(dg, sol.form, tau_max=args.tau, step=args.tau / cfg.steps, tol=1e-8)
    g: GroupoidElement = r.element
    rep.kv("chart", dg.label)
    rep.kv("n", args.n)
    rep.kv("seed", cfg.seed)
    rep.kv("initial_gauge_defect", r.defects[0])
    rep.kv("final_gauge_defect", r.defects[-1])
    rep.kv("flow_time", r.times[-1])
    rep.kv("monotone", bool(np.all(np.diff(r.defects) <= 0)))
    rep.kv("mc_residual", g.mc_residual_norm)
    rows = [[t, v] for t, v in zip(r.times[:: max(1, len(r.times) // 20)], r.defects[:: max(1, len(r.times) // 20)])]
    rep.csv("gauge_defect", ["tau", "defect"], rows)
    _write_output(cfg, to_table(g.form), rep)
    return 0


def cmd_symplectic_report(cfg: RunConfig, args, rep: Report) -> int:
    from .groupoid import constant_element, solve_element
    from .sampling import random_point
    from .simplicial import WhitneyCochain, cochain_slots
    from .symplectic import delta_omega_s, grassmann_pairings, ks_tangent, nondegeneracy_check, omega_s_matrix

    dg = charts.load(cfg.chart)
    if dg.omega is None:
        raise ChartError(f"chart {dg.label} has no [omega] section")
    k = dg.omega.k
    rng = np.random.default_rng(cfg.seed)
    rep.kv("chart", dg.label)
    rep.kv("k", k)
    nd = nondegeneracy_check(dg)
    rep.kv("grassmann.closed_dim", nd.closed_dim)
    rep.kv("grassmann.rank", nd.rank)
    rep.kv("grassmann.kernel_law", nd.kernel_law)
    g = constant_element(dg, k, D=cfg.D)
    t = ks_tangent(dg, g)
    Om = omega_s_matrix(dg, g, t)
    sv = np.linalg.svd(Om, compute_uv=False) if Om.size else np.zeros(0)
    rank = int(np.sum(sv > 1e-8 * max(1.0, sv.max(initial=0.0))))
    rep.kv("omega_s.tangent_dim", t.cochains.shape[1])
    rep.kv("omega_s.rank", rank)
    rep.kv("omega_s.antisymmetry", float(np.max(np.abs(Om + Om.T), initial=0.0)))
    rep.kv("omega_s.nondegenerate", rank == t.cochains.shape[1])
    samples = []
    for _ in range(args.samples):
        x = random_point(dg, rng)
        samples.append(nondegeneracy_check(dg, x).nondegenerate)
    rep.kv("nondegenerate_samples", f"{sum(samples)}/{len(samples)}")
    base = constant_element(dg, k + 1, D=cfg.D).cochain
    c = WhitneyCochain(k + 1, dg.coords, base.values + rng.uniform(-0.05, 0.05, len(cochain_slots(k + 1, dg.coords))))
    big = solve_element(dg, c, D=cfg.D)
    rep.kv("delta_omega_s", float(np.max(np.abs(delta_omega_s(dg, big)), initial=0.0)))
    tables = grassmann_pairings(k)
    rep.kv("pairing_formula_disagreement", tables.max_disagreement())
    rep.csv("omega_s", [f"t{j}" for j in range(Om.shape[1])], Om.tolist())
    return 0


def cmd_selftest(cfg: RunConfig, args, rep: Report) -> int:
    from .selftest import run_selftest

    ok = run_selftest(cfg.seed, rep)
    return 0 if ok else 1


def _write_output(cfg: RunConfig, text: str, rep: Report) -> None:
    if cfg.output:
        Path(cfg.output).write_text(text)
        rep.kv("output", cfg.output)


COMMANDS = {
    "check-q2": cmd_check_q2,
    "mc-solve": cmd_mc_solve,
    "horn-fill": cmd_horn_fill,
    "multiply": cmd_multiply,
    "groupoid-table": cmd_groupoid_table,
    "retract": cmd_retract,
    "symplectic-report": cmd_symplectic_report,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--picard-tol", type=float, default=1e-10)
    common.add_argument("--newton-tol", type=float, default=1e-12)
    common.add_argument("--mc-tol", type=float, default=1e-10)
    common.add_argument("--D", type=int, default=8, help="polynomial degree cap")
    common.add_argument("--steps", type=int, default=64, help="RK4 steps")
    common.add_argument("--output", "-o", help="write the resulting form table here")
    common.add_argument("--seed", type=int, default=0)

    p = argparse.ArgumentParser(prog="dgint", description="Integrate dg manifold charts to local groupoids.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("check-q2", parents=[common], help="verify Q^2 = 0 symbolically")
    s.add_argument("chart")

    s = sub.add_parser("mc-solve", parents=[common], help="invert the Kuranishi map on a closed form")
    s.add_argument("chart")
    s.add_argument("--closed", help="closed form table; random if omitted")
    s.add_argument("--n", type=int, default=2)
    s.add_argument("--scale", type=float, default=0.03)
    s.add_argument("--vertex", type=int, default=0)

    s = sub.add_parser("horn-fill", parents=[common], help="fill a horn of Maurer-Cartan forms")
    s.add_argument("chart")
    s.add_argument("--faces", required=True, help="comma-separated face tables, '-' for the missing face")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--mode", choices=("big", "ks"), default="big")

    s = sub.add_parser("multiply", parents=[common], help="compose two 1-simplices")
    s.add_argument("chart")
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)

    s = sub.add_parser("groupoid-table", parents=[common], help="products on a grid of pairs")
    s.add_argument("chart")
    s.add_argument("--grid", type=int, default=5)
    s.add_argument("--radius", type=float, default=0.1)

    s = sub.add_parser("retract", parents=[common], help="gauge-flow retraction of a random MC form")
    s.add_argument("chart")
    s.add_argument("--n", type=int, default=2)
    s.add_argument("--scale", type=float, default=0.03)
    s.add_argument("--tau", type=float, default=20.0)
    s.set_defaults(steps=200)

    s = sub.add_parser("symplectic-report", parents=[common], help="ranks and defects of the integrated 2-form")
    s.add_argument("chart")
    s.add_argument("--samples", type=int, default=10)

    sub.add_parser("selftest", parents=[common], help="run the invariant suite")
    return p


def run(argv: list[str] | None = None, out=None) -> int:
    out = out if out is not None else sys.stdout
    args = build_parser().parse_args(argv)
    rep = Report()
    try:
        cfg = RunConfig(args.command, getattr(args, "chart", None), args.picard_tol, args.newton_tol, args.mc_tol,
                        args.D, args.steps, args.output, args.seed)
        status = COMMANDS[args.command](cfg, args, rep)
    except LIBRARY_ERRORS as e:
        out.write(rep.text())
        out.write("[error]\n")
        out.write(f"command = {args.command}\n")
        out.write(f"type = {type(e).__name__}\n")
        out.write(f"message = {str(e).splitlines()[0] if str(e) else ''}\n")
        for attr in ("line", "col", "time"):
            if getattr(e, attr, None) is not None:
                out.write(f"{attr} = {getattr(e, attr)}\n")
        out.write("[/error]\n")
        return 2
    out.write(rep.text())
    return status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
