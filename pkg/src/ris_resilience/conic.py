"""Solver-agnostic convex program container and solve contract.

A `ConicProgram` holds named real/complex vector variable blocks, a linear
objective, and constraints drawn from a small vocabulary (linear equality /
inequality, sum-of-squares quadratic, logarithmic rate epigraph, norm ball).
`solve` currently delegates to cvxpy; nothing outside this module depends on
that choice, and `check_feasibility` verifies reported optima with plain
numpy, independently of the backend.

Real-part convention: wherever a constraint or the objective needs a real
scalar, the real part of the evaluated affine expression is taken. For real
variables with real coefficients this is exact; for complex blocks it
expresses terms like Re{c^H x}. Complex blocks expand to interleaved re/im
pairs when flattened (see `format_program`).
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

__all__ = [
    "VarBlock",
    "AffineExpr",
    "LinearEq",
    "LinearIneq",
    "QuadIneq",
    "LogEpigraph",
    "NormBall",
    "ConicProgram",
    "SolveReport",
    "FeasibilityReport",
    "solve",
    "check_feasibility",
    "constraint_violation",
    "format_program",
]

DEFAULT_FEAS_TOL = 1e-7
DEFAULT_OBJ_TOL = 1e-7

_LN2 = float(np.log(2.0))


@dataclass(frozen=True)
class VarBlock:
    name: str
    dim: int
    complex: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("variable blocks must have dim >= 1")


class AffineExpr:
    """Affine map over named variable blocks: sum_b coeffs[b] @ x_b + const.

    Coefficient matrices have shape (m, dim_b) and the constant shape (m,);
    everything is stored as complex128.
    """

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs: dict[str, np.ndarray] | None = None, const=0.0, dim: int | None = None):
        coeffs = coeffs or {}
        const_arr = np.atleast_1d(np.asarray(const, dtype=complex))
        if dim is not None and const_arr.shape == (1,) and dim != 1:
            const_arr = np.full(dim, const_arr[0], dtype=complex)
        self.const = const_arr
        self.coeffs = {}
        for name, mat in coeffs.items():
            mat = np.atleast_2d(np.asarray(mat, dtype=complex))
            if mat.shape[0] != self.const.shape[0]:
                raise ValueError(
                    f"coefficient block '{name}' has {mat.shape[0]} rows, expected {self.const.shape[0]}"
                )
            self.coeffs[name] = mat

    @property
    def dim(self) -> int:
        return self.const.shape[0]

    def evaluate(self, values: dict[str, np.ndarray]) -> np.ndarray:
        out = self.const.astype(complex).copy()
        for name, mat in self.coeffs.items():
            out = out + mat @ np.asarray(values[name])
        return out

    def __repr__(self):
        blocks = ", ".join(f"{n}:{m.shape}" for n, m in self.coeffs.items())
        return f"AffineExpr(dim={self.dim}, blocks=[{blocks}])"


@dataclass(frozen=True)
class LinearEq:
    """expr == 0 (real and imaginary parts both zero)."""

    expr: AffineExpr
    name: str = ""


@dataclass(frozen=True)
class LinearIneq:
    """Re(expr) <= 0 elementwise."""

    expr: AffineExpr
    name: str = ""


@dataclass(frozen=True)
class QuadIneq:
    """sum_j |squares_j(x)|^2 + Re(linear(x)) <= 0.

    The quadratic part is a sum of squared affine forms, hence positive
    semidefinite by construction. `squares` may be None for a purely linear
    constraint expressed in this slot.
    """

    squares: AffineExpr | None
    linear: AffineExpr
    name: str = ""

    def __post_init__(self):
        if self.linear.dim != 1:
            raise ValueError("QuadIneq linear part must be scalar")


@dataclass(frozen=True)
class LogEpigraph:
    """Re(rate) <= scale * log2(1 + Re(snr))."""

    rate: AffineExpr
    snr: AffineExpr
    scale: float = 1.0
    name: str = ""

    def __post_init__(self):
        if self.rate.dim != 1 or self.snr.dim != 1:
            raise ValueError("LogEpigraph operands must be scalar")
        if self.scale <= 0:
            raise ValueError("LogEpigraph scale must be positive")


@dataclass(frozen=True)
class NormBall:
    """||expr(x)||_2 <= bound."""

    expr: AffineExpr
    bound: float
    name: str = ""

    def __post_init__(self):
        if self.bound < 0:
            raise ValueError("NormBall bound must be nonnegative")


Constraint = LinearEq | LinearIneq | QuadIneq | LogEpigraph | NormBall


@dataclass(frozen=True)
class ConicProgram:
    """Immutable convex program over named variable blocks (minimization)."""

    variables: tuple[VarBlock, ...]
    objective: AffineExpr
    constraints: tuple[Constraint, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError("duplicate variable block names")
        if self.objective.dim != 1:
            raise ValueError("objective must be scalar")
        dims = {v.name: v.dim for v in self.variables}
        for expr in self._all_exprs():
            for block, mat in expr.coeffs.items():
                if block not in dims:
                    raise ValueError(f"constraint references undeclared block '{block}'")
                if mat.shape[1] != dims[block]:
                    raise ValueError(
                        f"coefficient for block '{block}' has width {mat.shape[1]}, expected {dims[block]}"
                    )

    def _all_exprs(self):
        yield self.objective
        for con in self.constraints:
            if isinstance(con, (LinearEq, LinearIneq, NormBall)):
                yield con.expr
            elif isinstance(con, QuadIneq):
                if con.squares is not None:
                    yield con.squares
                yield con.linear
            elif isinstance(con, LogEpigraph):
                yield con.rate
                yield con.snr

    def constraint(self, name: str) -> Constraint:
        for con in self.constraints:
            if con.name == name:
                return con
        raise KeyError(name)


@dataclass(frozen=True)
class SolveReport:
    """Outcome of one solver invocation."""

    status: str  # optimal | infeasible | iteration-limit | numerical-failure
    primal: dict[str, np.ndarray] | None
    objective: float | None
    solve_time_s: float
    iterations: int
    solver_name: str = ""
    message: str = ""


@dataclass(frozen=True)
class FeasibilityReport:
    ok: bool
    worst_violation: float
    violations: tuple = field(default_factory=tuple)  # (name, violation) pairs


def constraint_violation(con: Constraint, values: dict[str, np.ndarray]) -> float:
    """Nonnegative violation of one constraint at the given point."""
    if isinstance(con, LinearEq):
        return float(np.max(np.abs(con.expr.evaluate(values))))
    if isinstance(con, LinearIneq):
        return float(max(0.0, np.max(con.expr.evaluate(values).real)))
    if isinstance(con, QuadIneq):
        total = con.linear.evaluate(values).real[0]
        if con.squares is not None and con.squares.dim > 0:
            total += float(np.sum(np.abs(con.squares.evaluate(values)) ** 2))
        return float(max(0.0, total))
    if isinstance(con, LogEpigraph):
        rate = con.rate.evaluate(values).real[0]
        snr = con.snr.evaluate(values).real[0]
        if snr <= -1.0:
            return float("inf")
        return float(max(0.0, rate - con.scale * np.log1p(snr) / _LN2))
    if isinstance(con, NormBall):
        return float(max(0.0, np.linalg.norm(con.expr.evaluate(values)) - con.bound))
    raise TypeError(f"unknown constraint type {type(con)!r}")


def _constraint_scale(con: Constraint, values: dict[str, np.ndarray]) -> float:
    """Magnitude of the constraint's terms at the point, used to make the
    feasibility tolerance scale-aware (violation <= tol * max(1, scale))."""
    if isinstance(con, (LinearEq, LinearIneq)):
        parts = [np.abs(con.expr.const)]
        for name, mat in con.expr.coeffs.items():
            parts.append(np.abs(mat @ np.asarray(values[name])))
        return float(np.max(np.sum(parts, axis=0)))
    if isinstance(con, QuadIneq):
        scale = abs(con.linear.evaluate(values).real[0])
        if con.squares is not None and con.squares.dim > 0:
            scale += float(np.sum(np.abs(con.squares.evaluate(values)) ** 2))
        return scale
    if isinstance(con, LogEpigraph):
        rate = abs(con.rate.evaluate(values).real[0])
        snr = max(con.snr.evaluate(values).real[0], 0.0)
        return rate + con.scale * float(np.log1p(snr) / _LN2)
    if isinstance(con, NormBall):
        return con.bound
    raise TypeError(f"unknown constraint type {type(con)!r}")


def check_feasibility(
    program: ConicProgram, values: dict[str, np.ndarray], tol: float = DEFAULT_FEAS_TOL
) -> FeasibilityReport:
    """Evaluate every constraint with numpy, independently of any solver.

    A constraint passes when its violation is at most tol * max(1, scale),
    where scale is the magnitude of its terms at the point.
    """
    violations = []
    ok = True
    worst = 0.0
    for i, con in enumerate(program.constraints):
        v = constraint_violation(con, values)
        worst = max(worst, v)
        if v > tol * max(1.0, _constraint_scale(con, values)):
            ok = False
            violations.append((con.name or f"constraint[{i}]", v))
    return FeasibilityReport(ok=ok, worst_violation=worst, violations=tuple(violations))


def objective_value(program: ConicProgram, values: dict[str, np.ndarray]) -> float:
    return float(program.objective.evaluate(values).real[0])


def _to_cvxpy(expr: AffineExpr, cvars: dict[str, cp.Variable]):
    out = cp.Constant(expr.const)
    for name, mat in expr.coeffs.items():
        if np.all(mat.imag == 0):
            mat = mat.real
        out = out + cp.Constant(mat) @ cvars[name]
    return out


def _real(e):
    return cp.real(e) if e.is_complex() else e


def solve(
    program: ConicProgram,
    feas_tol: float = DEFAULT_FEAS_TOL,
    max_iters: int | None = None,
    solver: str | None = None,
) -> SolveReport:
    """Solve the program; never raises for solver-side trouble.

    An `optimal` status is only reported after the independent feasibility
    checker confirms the primal point within `feas_tol`.
    """
    cvars = {v.name: cp.Variable(v.dim, name=v.name, complex=v.complex) for v in program.variables}
    constraints = []
    for con in program.constraints:
        if isinstance(con, LinearEq):
            constraints.append(_to_cvxpy(con.expr, cvars) == 0)
        elif isinstance(con, LinearIneq):
            constraints.append(_real(_to_cvxpy(con.expr, cvars)) <= 0)
        elif isinstance(con, QuadIneq):
            total = _real(_to_cvxpy(con.linear, cvars))
            if con.squares is not None and con.squares.dim > 0:
                total = total + cp.sum_squares(_to_cvxpy(con.squares, cvars))
            constraints.append(total <= 0)
        elif isinstance(con, LogEpigraph):
            rate = _real(_to_cvxpy(con.rate, cvars))
            snr = _real(_to_cvxpy(con.snr, cvars))
            constraints.append(rate <= con.scale * cp.log1p(snr) / _LN2)
        elif isinstance(con, NormBall):
            constraints.append(cp.norm(_to_cvxpy(con.expr, cvars), 2) <= con.bound)
        else:
            raise TypeError(f"unknown constraint type {type(con)!r}")

    problem = cp.Problem(cp.Minimize(_real(_to_cvxpy(program.objective, cvars))), constraints)
    chosen = solver or ("CLARABEL" if "CLARABEL" in cp.installed_solvers() else "SCS")

    # Accuracy ladder: tight tolerances first, solver defaults as fallback
    # for the occasional instance where the tight run stalls. The
    # independent feasibility check below is the acceptance authority.
    if chosen == "CLARABEL":
        attempts = [{"tol_feas": 1e-9, "tol_gap_abs": 1e-9, "tol_gap_rel": 1e-9}, {}]
    else:
        attempts = [{}]

    last: SolveReport | None = None
    total_time = 0.0
    for kwargs in attempts:
        if max_iters is not None:
            kwargs = {**kwargs, "max_iter" if chosen == "CLARABEL" else "max_iters": max_iters}
        start = time.perf_counter()
        try:
            with warnings.catch_warnings():
                # Accuracy warnings are superseded by the feasibility check.
                warnings.simplefilter("ignore", UserWarning)
                problem.solve(solver=chosen, **kwargs)
        except (cp.SolverError, ValueError, ArithmeticError) as exc:
            total_time += time.perf_counter() - start
            last = SolveReport("numerical-failure", None, None, total_time, 0, chosen, str(exc))
            continue
        total_time += time.perf_counter() - start

        stats = problem.solver_stats
        iterations = int(stats.num_iters) if stats is not None and stats.num_iters is not None else 0

        status = problem.status
        if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return SolveReport("infeasible", None, None, total_time, iterations, chosen, status)
        if status == "user_limit":
            last = SolveReport("iteration-limit", None, None, total_time, iterations, chosen, status)
            continue
        if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            last = SolveReport("numerical-failure", None, None, total_time, iterations, chosen, status)
            continue

        primal = {}
        for v in program.variables:
            val = cvars[v.name].value
            if val is None:
                primal = None
                break
            arr = np.atleast_1d(np.asarray(val))
            primal[v.name] = arr.astype(complex) if v.complex else arr.astype(float)
        if primal is None:
            last = SolveReport("numerical-failure", None, None, total_time, iterations, chosen, "no primal")
            continue

        feas = check_feasibility(program, primal, tol=feas_tol)
        if not feas.ok:
            last = SolveReport(
                "numerical-failure",
                primal,
                objective_value(program, primal),
                total_time,
                iterations,
                chosen,
                f"feasibility check failed ({feas.worst_violation:.3g} > {feas_tol:g})",
            )
            continue
        return SolveReport(
            "optimal", primal, objective_value(program, primal), total_time, iterations, chosen, status
        )
    return last


def format_program(program: ConicProgram) -> str:
    """Human-readable dump for debugging; not a stability-guaranteed format.

    Complex blocks are listed with their interleaved re/im expansion width.
    """
    lines = [f"program {program.name or '<unnamed>'}"]
    lines.append("variables:")
    for v in program.variables:
        width = 2 * v.dim if v.complex else v.dim
        kind = "complex" if v.complex else "real"
        lines.append(f"  {v.name}: {kind}[{v.dim}] (real width {width})")
    lines.append(f"objective: minimize Re {program.objective!r}")
    lines.append(f"constraints ({len(program.constraints)}):")
    for i, con in enumerate(program.constraints):
        label = con.name or f"constraint[{i}]"
        if isinstance(con, LinearEq):
            lines.append(f"  {label}: {con.expr!r} == 0")
        elif isinstance(con, LinearIneq):
            lines.append(f"  {label}: Re {con.expr!r} <= 0")
        elif isinstance(con, QuadIneq):
            sq = con.squares.dim if con.squares is not None else 0
            lines.append(f"  {label}: sum|sq[{sq}]|^2 + Re {con.linear!r} <= 0")
        elif isinstance(con, LogEpigraph):
            lines.append(f"  {label}: Re {con.rate!r} <= {con.scale:g} * log2(1 + Re {con.snr!r})")
        elif isinstance(con, NormBall):
            lines.append(f"  {label}: ||{con.expr!r}|| <= {con.bound:g}")
    return "\n".join(lines)
