"""Standard-form semidefinite programming layer.

An :class:`SdpProblem` is the classic conic standard form

    minimize    c'y
    subject to  A y = b
                sum_i y_i F_i >= F_0       (one or more LMI blocks)
                lower <= y <= upper        (optional per-variable bounds)

``solve_sdp`` hands the problem to cvxopt's interior-point conic solver
and then re-verifies whatever comes back by direct arithmetic — feasible
points via :func:`lmi_residual` / :func:`equality_residual`, infeasibility
claims via their dual improving ray — before a status is reported.  No
downstream stability claim rests on solver state alone.  Ambiguous solver
outcomes map to ``numerical_failure``, never to a verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import cvxopt
import cvxopt.solvers
import numpy as np
import scipy.linalg

from .errors import DimensionError, MalformedProblemError
from .numerics import min_eig_symmetric

OPTIMAL = "optimal"
FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical_failure"

#: symmetry tolerance on problem data
DATA_SYM_TOL = 1e-9

_SOLVER_DEFAULTS = {"show_progress": False, "maxiters": 200}


def _frozen(value) -> np.ndarray:
    arr = np.array(value, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LmiBlock:
    """One constraint ``sum_i y_i coeffs[i] >= base``.

    ``coeffs`` has shape (num_vars, p, p); slice ``i`` is the symmetric
    coefficient matrix of variable ``i``.
    """

    base: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "base", _frozen(self.base))
        object.__setattr__(self, "coeffs", _frozen(self.coeffs))

    @property
    def size(self) -> int:
        return self.base.shape[0]

    def residual(self, y: np.ndarray) -> np.ndarray:
        """``sum_i y_i coeffs[i] - base`` at the point ``y``."""
        return np.tensordot(y, self.coeffs, axes=1) - self.base


@dataclass(frozen=True)
class SdpProblem:
    num_vars: int
    objective: np.ndarray
    eq_a: np.ndarray
    eq_b: np.ndarray
    lmis: tuple[LmiBlock, ...]
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        for name in ("objective", "eq_a", "eq_b", "lower", "upper"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "lmis", tuple(self.lmis))

    @classmethod
    def build(
        cls,
        num_vars: int,
        objective=None,
        eq_a=None,
        eq_b=None,
        lmis=(),
        lower=None,
        upper=None,
    ) -> "SdpProblem":
        """Assemble a problem, filling in empty equalities and free bounds."""
        objective = np.zeros(num_vars) if objective is None else np.asarray(objective, float)
        eq_a = np.zeros((0, num_vars)) if eq_a is None else np.atleast_2d(np.asarray(eq_a, float))
        eq_b = np.zeros(eq_a.shape[0]) if eq_b is None else np.atleast_1d(np.asarray(eq_b, float))
        lower = np.full(num_vars, -np.inf) if lower is None else np.asarray(lower, float)
        upper = np.full(num_vars, np.inf) if upper is None else np.asarray(upper, float)
        return cls(num_vars, objective, eq_a, eq_b, tuple(lmis), lower, upper)

    def validate(self) -> list[str]:
        """Standard-form invariant violations (empty = well formed)."""
        out: list[str] = []
        n = self.num_vars
        if n < 1:
            out.append("num_vars must be positive")
        if self.objective.shape != (n,):
            out.append(f"objective shape {self.objective.shape} != ({n},)")
        if self.eq_a.ndim != 2 or self.eq_a.shape[1] != n:
            out.append(f"equality matrix shape {self.eq_a.shape} incompatible")
        elif self.eq_b.shape != (self.eq_a.shape[0],):
            out.append("equality rhs length mismatch")
        for name in ("lower", "upper"):
            if getattr(self, name).shape != (n,):
                out.append(f"{name} bound length mismatch")
        for k, blk in enumerate(self.lmis):
            p = blk.base.shape[0]
            if blk.base.shape != (p, p):
                out.append(f"LMI {k}: base not square")
                continue
            if blk.coeffs.shape != (n, p, p):
                out.append(f"LMI {k}: coeffs shape {blk.coeffs.shape} != ({n}, {p}, {p})")
                continue
            if np.max(np.abs(blk.base - blk.base.T), initial=0.0) > DATA_SYM_TOL:
                out.append(f"LMI {k}: base not symmetric")
            skew = np.max(np.abs(blk.coeffs - np.transpose(blk.coeffs, (0, 2, 1))), initial=0.0)
            if skew > DATA_SYM_TOL:
                out.append(f"LMI {k}: coefficient matrices not symmetric")
        return out


@dataclass(frozen=True)
class SdpSolution:
    status: str
    y: np.ndarray | None = None
    objective_value: float | None = None
    margin: float | None = None

    @property
    def ok(self) -> bool:
        return self.status in (OPTIMAL, FEASIBLE)


def lmi_residual(problem: SdpProblem, y) -> float:
    """Smallest LMI margin at ``y``: min over blocks of the residual's
    least eigenvalue.  Positive means strictly inside every cone."""
    y = np.asarray(y, dtype=float).ravel()
    if y.shape != (problem.num_vars,):
        raise DimensionError(f"point length {y.size} != {problem.num_vars} variables")
    worst = math.inf
    for blk in problem.lmis:
        worst = min(worst, min_eig_symmetric(blk.residual(y), tol=np.inf))
    return worst


def equality_residual(problem: SdpProblem, y) -> float:
    """``max |A y - b|`` at the point ``y`` (0 when there are no equalities)."""
    y = np.asarray(y, dtype=float).ravel()
    if y.shape != (problem.num_vars,):
        raise DimensionError(f"point length {y.size} != {problem.num_vars} variables")
    if problem.eq_a.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(problem.eq_a @ y - problem.eq_b)))


def _bound_violation(problem: SdpProblem, y: np.ndarray) -> float:
    lo = np.where(np.isfinite(problem.lower), problem.lower - y, -np.inf)
    hi = np.where(np.isfinite(problem.upper), y - problem.upper, -np.inf)
    return float(max(np.max(lo, initial=0.0), np.max(hi, initial=0.0), 0.0))


def _independent_equalities(eq_a, eq_b):
    """Drop redundant equality rows; detect inconsistent systems.

    Returns (A, b, inconsistent).  cvxopt requires full-row-rank A, and
    problem builders routinely emit dependent rows.
    """
    if eq_a.shape[0] == 0:
        return eq_a, eq_b, False
    x_ls, *_ = np.linalg.lstsq(eq_a, eq_b, rcond=None)
    gap = np.max(np.abs(eq_a @ x_ls - eq_b))
    if gap > 1e-8 * max(1.0, np.max(np.abs(eq_b), initial=0.0)):
        return eq_a, eq_b, True
    _, r, piv = scipy.linalg.qr(eq_a.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        rank = 0
    else:
        rank = int(np.count_nonzero(diag > diag[0] * max(eq_a.shape) * 1e-14))
    keep = np.sort(piv[:rank])
    return eq_a[keep], eq_b[keep], False


def _cvxopt_parts(problem: SdpProblem, eq_a, eq_b):
    """Split the problem into cvxopt's (c, Gl, hl, Gs, hs, A, b) data.

    1x1 LMI blocks and finite bounds are routed into the componentwise
    cone; larger blocks become semidefinite cones.
    """
    n = problem.num_vars
    gl_rows: list[np.ndarray] = []
    hl: list[float] = []
    for i in np.flatnonzero(np.isfinite(problem.lower)):
        row = np.zeros(n)
        row[i] = -1.0
        gl_rows.append(row)
        hl.append(-problem.lower[i])
    for i in np.flatnonzero(np.isfinite(problem.upper)):
        row = np.zeros(n)
        row[i] = 1.0
        gl_rows.append(row)
        hl.append(problem.upper[i])
    gs: list[np.ndarray] = []
    hs: list[np.ndarray] = []
    for blk in problem.lmis:
        if blk.size == 1:
            gl_rows.append(-blk.coeffs[:, 0, 0])
            hl.append(-blk.base[0, 0])
        else:
            gs.append(-blk.coeffs.reshape(n, blk.size * blk.size).T)
            hs.append(-blk.base)
    gl = np.array(gl_rows) if gl_rows else np.zeros((0, n))
    return gl, np.array(hl), gs, hs, eq_a, eq_b


def _certified_infeasible(parts, sol, scale_tol: float) -> bool:
    """Verify cvxopt's primal-infeasibility ray by direct arithmetic."""
    gl, hl, gs, hs, eq_a, eq_b = parts
    try:
        zl = np.array(sol["zl"], dtype=float).ravel() if gl.shape[0] else np.zeros(0)
        zs = [np.array(z, dtype=float) for z in sol["zs"]]
        ydual = np.array(sol["y"], dtype=float).ravel() if eq_a.shape[0] else np.zeros(0)
    except (TypeError, ValueError):
        return False
    mags = [1.0, np.max(np.abs(zl), initial=0.0), np.max(np.abs(ydual), initial=0.0)]
    mags += [np.max(np.abs(z), initial=0.0) for z in zs]
    denom = max(mags)
    if zl.size and zl.min() < -scale_tol * denom:
        return False
    for z in zs:
        if min_eig_symmetric((z + z.T) / 2.0, tol=np.inf) < -scale_tol * denom:
            return False
    combo = np.zeros(gl.shape[1])
    if gl.shape[0]:
        combo += gl.T @ zl
    for g, z in zip(gs, zs):
        combo += g.T @ z.reshape(-1)
    if eq_a.shape[0]:
        combo += eq_a.T @ ydual
    value = float(hl @ zl) if hl.size else 0.0
    value += sum(float(np.sum(h * z)) for h, z in zip(hs, zs))
    if eq_b.size:
        value += float(eq_b @ ydual)
    return np.max(np.abs(combo), initial=0.0) <= scale_tol * denom and value < -1e-8 * denom


def solve_sdp(problem: SdpProblem, tol: float = 1e-7) -> SdpSolution:
    """Solve the conic program, re-verifying the outcome independently.

    Status semantics: ``optimal`` carries KKT-converged points of problems
    with a nonzero objective, ``feasible`` covers feasibility problems and
    points that verify despite an unconverged solver, ``infeasible`` is
    backed by a checked dual ray, and anything ambiguous is
    ``numerical_failure`` (never an exception).
    """
    issues = problem.validate()
    if issues:
        raise MalformedProblemError("; ".join(issues))
    if tol <= 0:
        raise MalformedProblemError("tol must be positive")

    eq_a, eq_b, inconsistent = _independent_equalities(problem.eq_a, problem.eq_b)
    if inconsistent:
        return SdpSolution(status=INFEASIBLE)

    parts = _cvxopt_parts(problem, eq_a, eq_b)
    gl, hl, gs, hs, _, _ = parts
    options = dict(_SOLVER_DEFAULTS, abstol=tol, reltol=tol, feastol=tol)
    try:
        sol = cvxopt.solvers.sdp(
            cvxopt.matrix(problem.objective),
            Gl=cvxopt.matrix(gl) if gl.shape[0] else None,
            hl=cvxopt.matrix(hl) if hl.size else None,
            Gs=[cvxopt.matrix(g) for g in gs] or None,
            hs=[cvxopt.matrix(h) for h in hs] or None,
            A=cvxopt.matrix(eq_a) if eq_a.shape[0] else None,
            b=cvxopt.matrix(eq_b) if eq_b.size else None,
            options=options,
        )
    except (ValueError, ZeroDivisionError, ArithmeticError):
        return SdpSolution(status=NUMERICAL_FAILURE)

    status = sol["status"]
    if status in ("optimal", "unknown"):
        if sol["x"] is None:
            return SdpSolution(status=NUMERICAL_FAILURE)
        y = np.array(sol["x"], dtype=float).ravel()
        margin = lmi_residual(problem, y)
        value = float(problem.objective @ y)
        verified = (
            margin >= -tol
            and equality_residual(problem, y) <= 10.0 * tol
            and _bound_violation(problem, y) <= 10.0 * tol
        )
        if not verified:
            return SdpSolution(NUMERICAL_FAILURE, y=y, objective_value=value, margin=margin)
        pure_feasibility = not np.any(problem.objective)
        if status == "optimal" and not pure_feasibility:
            return SdpSolution(OPTIMAL, y=y, objective_value=value, margin=margin)
        return SdpSolution(FEASIBLE, y=y, objective_value=value, margin=margin)
    if status == "primal infeasible":
        if _certified_infeasible(parts, sol, scale_tol=1e-6):
            return SdpSolution(status=INFEASIBLE)
        return SdpSolution(status=NUMERICAL_FAILURE)
    if status == "dual infeasible":
        return SdpSolution(status=UNBOUNDED)
    return SdpSolution(status=NUMERICAL_FAILURE)


def dump_problem(problem: SdpProblem, stream) -> None:
    """Write a sparse text dump for debugging.

    One line per nonzero.  Formats:
      ``var N`` / ``obj i v`` / ``eq r i v`` / ``eqrhs r v`` /
      ``bound i lo hi`` / ``lmi k m r c v`` where ``m`` = 0 is the base
      matrix and ``m`` = i+1 the coefficient of variable i.
    """
    stream.write(f"var {problem.num_vars}\n")
    for i in np.flatnonzero(problem.objective):
        stream.write(f"obj {i} {problem.objective[i]!r}\n")
    rows, cols = np.nonzero(problem.eq_a)
    for r, i in zip(rows, cols):
        stream.write(f"eq {r} {i} {problem.eq_a[r, i]!r}\n")
    for r in np.flatnonzero(problem.eq_b):
        stream.write(f"eqrhs {r} {problem.eq_b[r]!r}\n")
    for i in range(problem.num_vars):
        lo, hi = problem.lower[i], problem.upper[i]
        if np.isfinite(lo) or np.isfinite(hi):
            stream.write(f"bound {i} {lo!r} {hi!r}\n")
    for k, blk in enumerate(problem.lmis):
        for r, c in zip(*np.nonzero(blk.base)):
            stream.write(f"lmi {k} 0 {r} {c} {blk.base[r, c]!r}\n")
        idx, rows, cols = np.nonzero(blk.coeffs)
        for i, r, c in zip(idx, rows, cols):
            stream.write(f"lmi {k} {i + 1} {r} {c} {blk.coeffs[i, r, c]!r}\n")


def sym_basis_pairs(n: int) -> list[tuple[int, int]]:
    """Upper-triangle coordinates backing the symmetric-matrix variables."""
    return [(r, c) for r in range(n) for c in range(r, n)]


def sym_basis(n: int) -> np.ndarray:
    """Unit symmetric basis matrices, shape (n(n+1)/2, n, n).

    Entry order matches :func:`sym_basis_pairs`; off-diagonal members
    carry a one at both mirrored positions.
    """
    pairs = sym_basis_pairs(n)
    basis = np.zeros((len(pairs), n, n))
    for k, (r, c) in enumerate(pairs):
        basis[k, r, c] = 1.0
        basis[k, c, r] = 1.0
    return basis


def mat_from_sym_coords(values, n: int) -> np.ndarray:
    """Inverse of the upper-triangle parameterization."""
    values = np.asarray(values, dtype=float)
    out = np.zeros((n, n))
    for v, (r, c) in zip(values, sym_basis_pairs(n)):
        out[r, c] = v
        out[c, r] = v
    return out
