"""Scenario runner: ``fracsub run --config FILE --out DIR`` and ``fracsub emit``.

A scenario is a ``key = value`` file holding the :class:`ProblemSpec`
fields plus ``checks`` (comma separated) and optionally ``name``.

Exit codes: 0 all checks pass, 1 configuration error, 2 violated
assumption, 3 non-convergence, 4 failed check.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .core import (
    AssumptionError,
    ConfigError,
    FracSubError,
    Grid,
    ProblemSpec,
    field_from_function,
    make_coefficient,
    parse_config,
    spec_from_mapping,
)

CHECKS = (
    "operator_xval",
    "inversion",
    "structural",
    "exhaustion",
    "energy_identity",
    "decay",
    "extension_trace",
    "perturbation",
    "pme_uniqueness",
)
PLOT_CHECKS = ("exhaustion", "decay", "pme_uniqueness")
EXTRA_KEYS = ("checks", "name")


@dataclass
class Scenario:
    name: str
    spec: ProblemSpec
    checks: tuple
    out: Path


@dataclass
class Line:
    check: str
    label: str
    measured: float
    threshold: float
    passed: bool
    relation: str = "<="
    info: bool = False

    def format(self) -> str:
        token = "INFO" if self.info else ("PASS" if self.passed else "FAIL")
        return (f"{self.check:<16} {self.label:<44} measured={self.measured:.6g} "
                f"threshold{self.relation}{self.threshold:.6g} {token}")


@dataclass
class Outcome:
    lines: list = field(default_factory=list)
    files: list = field(default_factory=list)
    error: FracSubError | None = None


def load_scenario(path: str | Path, out: str | Path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    values = parse_config(text)
    known = set(ProblemSpec.__dataclass_fields__) | set(EXTRA_KEYS)
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    checks = tuple(c.strip() for c in values.get("checks", "").split(",") if c.strip())
    if not checks:
        raise ConfigError("no checks enabled")
    bad = [c for c in checks if c not in CHECKS]
    if bad:
        raise ConfigError(f"unknown checks: {', '.join(bad)}")
    spec = spec_from_mapping(values)
    return Scenario(values.get("name", Path(path).stem), spec, checks, Path(out))


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


class Runner:
    """Executes checks in dependency order and caches shared pipeline results."""

    def __init__(self, scenario: Scenario, emit_only: bool = False):
        self.sc = scenario
        self.spec = scenario.spec
        self.out = scenario.out
        self.emit_only = emit_only
        self._global = None
        self._rho = None

    # shared pieces ---------------------------------------------------------

    @property
    def rho(self):
        if self._rho is None:
            self._rho = make_coefficient(self.spec)
        return self._rho

    def global_solution(self):
        if self._global is None:
            from .sublinear import solve_global

            self._global = solve_global(self.spec, self.rho, check=False)
        return self._global

    # checks ----------------------------------------------------------------

    def check_operator_xval(self, o: Outcome) -> None:
        from .fraclap import apply_singular, apply_spectral

        spec = self.spec
        grid = spec.grid
        f = field_from_function(lambda *x: np.exp(-0.5 * sum(c * c for c in x)), grid)
        a = apply_spectral(f, spec.sigma).values
        b = apply_singular(f, spec.sigma).values
        mask = grid.radius <= grid.L / 2
        err = float(np.max(np.abs(a - b)[mask]) / np.max(np.abs(a[mask])))
        thr = 1e-3 if spec.N == 1 else 5e-3
        o.lines.append(Line("operator_xval", "spectral vs singular, |x|<=L/2", err, thr, err <= thr))

    def check_inversion(self, o: Outcome) -> None:
        from .fraclap import apply_spectral
        from .riesz import riesz_convolve

        spec = self.spec
        U = riesz_convolve(self.rho, spec.sigma)
        A = apply_spectral(U, spec.sigma).values
        mask = spec.grid.radius <= spec.L / 2
        err = float(np.max(np.abs(A - self.rho.values)[mask]) / self.rho.sup)
        o.lines.append(Line("inversion", "(-Lap)^(s/2)(K*rho) vs rho, |x|<=L/2", err, 2e-2, err <= 2e-2))

    def check_structural(self, o: Outcome) -> None:
        from .dirichlet import dirichlet_operator
        from .fraclap import apply_spectral

        spec = self.spec
        grid = spec.grid
        rng = np.random.default_rng(12345)
        f = field_from_function(lambda *x: np.exp(-0.5 * sum(c * c for c in x)), grid)
        g = field_from_function(lambda *x: np.exp(-0.25 * sum((c - 1.0) ** 2 for c in x)), grid)
        s = spec.sigma
        lhs = np.vdot(apply_spectral(f, s).values, g.values)
        rhs = np.vdot(f.values, apply_spectral(g, s).values)
        sa = abs(lhs - rhs) / (np.linalg.norm(f.values) * np.linalg.norm(g.values))
        s1, s2 = s / 2, min(s / 2, 1.9 - s / 2)
        comp = apply_spectral(apply_spectral(f, s1), s2).values
        direct = apply_spectral(f, s1 + s2).values
        sg = float(np.max(np.abs(comp - direct)) / np.max(np.abs(direct)))
        op = dirichlet_operator(grid, spec.L / 4, s)
        x = rng.standard_normal(op.interior_shape)
        rt = float(np.max(np.abs(op.apply_interior(op.solve_interior(x)) - x)) / np.max(np.abs(x)))
        worst = max(sa, sg, rt)
        o.lines.append(Line("structural", "self-adjoint/semigroup/round-trip", worst, 1e-12, worst <= 1e-12))

    def check_exhaustion(self, o: Outcome) -> None:
        spec = self.spec
        u, ladder = self.global_solution()
        rows = []
        # intermediate rows carry the sup update of the iterate; the last row
        # of each R carries the true residual, energy gap and sup of u_R
        for R, rep, sol in zip(ladder.radii, ladder.reports, ladder.solutions):
            for k, gap in enumerate(rep.gaps[:-1], 1):
                rows.append((R, k, gap, math.nan, math.nan))
            rows.append((R, rep.iterations, rep.residual, rep.energy_gap, sol.sup))
        if not self.emit_only:
            path = self.out / "convergence.csv"
            _write_csv(path, ["R", "iter", "residual", "energy_gap", "sup_u"], rows)
            o.files.append(path)
        lrows = [(R, g) for R, g in zip(ladder.radii[1:], ladder.gaps)]
        path = self.out / "ladder.csv"
        _write_csv(path, ["R", "inner_gap"], lrows)
        o.files.append(path)
        if self.emit_only:
            return
        ratio = min(ladder.gap_ratios) if ladder.gap_ratios else math.inf
        o.lines.append(Line("exhaustion", "u_R <= u_R' + 1e-8 (max violation)",
                            max(0.0, max(float(np.max(a.values - b.values)) for a, b in
                                         zip(ladder.solutions[:-1], ladder.solutions[1:]))),
                            1e-8, ladder.monotone))
        o.lines.append(Line("exhaustion", "inner gap shrink factor per step", ratio, 2.0,
                            ratio >= 2.0, ">="))
        o.lines.append(Line("exhaustion", "||u - K*(rho u^a)||/||u||, |x|<=L/4",
                            ladder.identity_residual, 2e-2, ladder.identity_residual <= 2e-2))

    def check_energy_identity(self, o: Outcome) -> None:
        _, ladder = self.global_solution()
        worst = max(r.relative_energy_gap for r in ladder.reports)
        o.lines.append(Line("energy_identity", "max_R relative energy gap", worst, 1e-4, worst <= 1e-4))

    def check_decay(self, o: Outcome) -> None:
        from .riesz import write_decay_report, write_shells

        _, ladder = self.global_solution()
        fit = ladder.decay
        path = self.out / "decay.csv"
        write_shells(fit, path)
        o.files.append(path)
        if self.emit_only:
            return
        path = self.out / "decay_report.csv"
        write_decay_report([fit], path)
        o.files.append(path)
        thr = fit.exponent + fit.slack
        o.lines.append(Line("decay", "tail slope on [L/4, L/2]", fit.slope, thr, bool(fit.passed)))

    def check_extension_trace(self, o: Outcome) -> None:
        from .extension import conormal_trace, extend, extension_energy
        from .fraclap import apply_spectral
        from .riesz import riesz_convolve

        spec = self.spec
        U = riesz_convolve(self.rho, spec.sigma)
        W = extend(U, spec.sigma)
        tr = conormal_trace(W).values
        mask = spec.grid.radius <= spec.L / 2
        err = float(np.max(np.abs(tr - self.rho.values)[mask]) / self.rho.sup)
        o.lines.append(Line("extension_trace", "conormal trace vs rho, |x|<=L/2", err, 5e-2, err <= 5e-2))
        g1 = Grid(1, 16.0, 2048)
        f = field_from_function(lambda x: np.exp(-0.5 * x * x), g1)
        W1 = extend(f, 1.0)
        a = apply_spectral(f, 1.0).values
        err1 = float(np.max(np.abs(conormal_trace(W1).values - a)) / np.max(np.abs(a)))
        o.lines.append(Line("extension_trace", "sigma=1 trace vs half-Laplacian", err1, 1e-2, err1 <= 1e-2))
        E = extension_energy(W)
        src = float(np.sum(self.rho.values * U.values) * spec.grid.cell_volume)
        gap = abs(E - src) / src
        # report only: at desk-scale L the truncation of the potential dominates
        o.lines.append(Line("extension_trace", "energy vs int rho W(.,0)", gap, 1e-3, True, info=True))

    def check_perturbation(self, o: Outcome) -> None:
        from .sublinear import perturbation_experiment

        u, _ = self.global_solution()
        rep = perturbation_experiment(self.spec, rho=self.rho, base=u)
        path = self.out / "perturbation.csv"
        _write_csv(path, ["eps", "G", "G_over_eps", "sup_diff", "majorant"],
                   zip(rep.eps, rep.G, rep.ratios, rep.sup_diffs, rep.majorants))
        o.files.append(path)
        o.lines.append(Line("perturbation", "max/min G(eps)/eps", rep.spread, 2.0, rep.bounded))
        d = dict(zip(rep.eps, rep.sup_diffs))
        if 1e-3 in d and 1e-2 in d:
            q = d[1e-3] / d[1e-2] if d[1e-2] > 0 else 0.0
            o.lines.append(Line("perturbation", "||u_1e-3 - u||/||u_1e-2 - u||", q, 10.0, q <= 10.0))

    def check_pme_uniqueness(self, o: Outcome) -> None:
        from .pme import decay_time_integral_check, separable_residual, uniqueness_experiment
        from .sublinear import solve_ball

        spec = self.spec
        spec.require_subcritical("pme_uniqueness")
        u, _ = self.global_solution()
        rep = uniqueness_experiment(spec, self.rho, u=u, u_min=u)
        path = self.out / "trajectory.csv"
        _write_csv(path, ["t", "mass", "sup_v", "ratio_bound", "ratio_measured"], rep.rows)
        o.files.append(path)
        if self.emit_only:
            return
        o.lines.append(Line("pme_uniqueness", "v_R - u~ (max excess)", max(rep.max_excess, 0.0),
                            1e-8, rep.comparison_ok))
        excess = max(r[4] - r[3] for r in rep.rows)
        o.lines.append(Line("pme_uniqueness", "max_t ratio_measured - ratio_bound", excess, 1e-6,
                            rep.ratio_ok))
        o.lines.append(Line("pme_uniqueness", "v_R nondecreasing in R", 0.0 if rep.order_in_R_ok else 1.0,
                            0.0, rep.order_in_R_ok))
        # separable residual under (h, dt) -> (h/2, dt/4)
        R = spec.L / 4
        res = []
        for M, dt in ((spec.M // 2, 0.04), (spec.M, 0.01)):
            s2 = spec.replace(M=M)
            rho2 = make_coefficient(s2)
            u2, _ = solve_ball(rho2, R, s2)
            res.append(separable_residual(u2, rho2, R, spec.m, spec.sigma, dt))
        q = res[0] / res[1] if res[1] > 0 else math.inf
        o.lines.append(Line("pme_uniqueness", "separable residual decrease factor", q, 3.0, q >= 3.0, ">="))
        fit = decay_time_integral_check(rep.trajectories[-1], spec)
        o.lines.append(Line("pme_uniqueness", "int v^m dt slope on [R/4, R/2]", fit.slope,
                            fit.exponent + fit.slack, True, info=True))

    # driver ----------------------------------------------------------------

    def execute(self) -> Outcome:
        o = Outcome()
        wanted = [c for c in CHECKS if c in self.sc.checks]
        if self.emit_only:
            wanted = [c for c in wanted if c in PLOT_CHECKS]
        for name in wanted:
            try:
                getattr(self, f"check_{name}")(o)
            except FracSubError as exc:
                o.error = exc
                o.lines.append(Line(name, f"aborted: {type(exc).__name__}: {exc}", math.nan,
                                    math.nan, False))
                break
        return o


def write_report(sc: Scenario, o: Outcome) -> Path:
    path = sc.out / "report.txt"
    with open(path, "w") as fh:
        fh.write(f"scenario {sc.name}\n")
        s = sc.spec
        fh.write(f"N={s.N} sigma={s.sigma} alpha={s.alpha} beta={s.beta} rho={s.rho_family} "
                 f"L={s.L} M={s.M}\n")
        for line in o.lines:
            fh.write(line.format() + "\n")
        graded = [line for line in o.lines if not line.info]
        fails = sum(not line.passed for line in graded)
        fh.write(f"summary {'PASS' if not fails and o.error is None else 'FAIL'} "
                 f"({len(graded) - fails}/{len(graded)} graded lines pass)\n")
    return path


def exit_code(o: Outcome) -> int:
    if o.error is not None:
        return o.error.exit_code
    return 0 if all(line.passed for line in o.lines) else 4


def run(config_path, out=".", threads: int | None = None, emit_only: bool = False) -> int:
    try:
        sc = load_scenario(config_path, out)
    except FracSubError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    sc.out.mkdir(parents=True, exist_ok=True)
    workers = sfft.set_workers(threads) if threads else contextlib.nullcontext()
    with workers:
        o = Runner(sc, emit_only).execute()
    if emit_only:
        if o.error is not None:
            print(f"error: {o.error}", file=sys.stderr)
        return o.error.exit_code if o.error is not None else 0
    write_report(sc, o)
    if o.error is not None:
        print(f"error: {o.error}", file=sys.stderr)
    return exit_code(o)


def emit_plotdata(config_path, out=".", threads: int | None = None) -> int:
    return run(config_path, out, threads, emit_only=True)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fracsub", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run the enabled checks and write report.txt"),
                        ("emit", "write plot data (decay, ladder, trajectory) only")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="scenario file (key = value)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=None, help="FFT worker threads")
    args = parser.parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return 1
    if args.command == "run":
        return run(args.config, args.out, args.threads)
    return emit_plotdata(args.config, args.out, args.threads)


if __name__ == "__main__":
    sys.exit(main())
