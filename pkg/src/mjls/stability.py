"""Mean-square stability tests for a fixed mode chain, plus direct
verification of policy certificates.

The exact criterion is spectral: the jump-linear system is mean-square
stable iff the lifted second-moment operator

    (P' (x) I) . blockdiag(A_i (x) A_i)

has spectral radius below one.  The equivalent Lyapunov route instead
solves a feasibility SDP for blockwise matrices ``V_i > 0`` satisfying
``V_j - sum_i P[i,j] A_i V_i A_i' > 0``.  A cheaper scalar-weight variant
(``V_i = a_i I``) is sufficient only.  Strict inequalities are encoded as
``>= eps I`` and the scale-invariant Lyapunov cone is capped by
``V_i <= tau I`` to keep the solver's iterates bounded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import conic
from .conic import LmiBlock, SdpProblem, mat_from_sym_coords, solve_sdp, sym_basis
from .errors import DimensionError
from .model import Dtmc, Mdp, Policy, SwitchedLinearSystem, policy_violations
from .numerics import kron, min_eig_symmetric, spectral_radius, symmetrize

#: strictness below which a spectral radius counts as stable
SPECTRAL_MARGIN = 1e-9
#: margin required by the solver-free certificate check
CERT_MARGIN = 1e-8
#: default encoding of strict inequalities
DEFAULT_EPS = 1e-6
#: default cap V_i <= tau I normalizing the Lyapunov cone
DEFAULT_TAU = 1e3


@dataclass(frozen=True)
class LyapunovCertificate:
    """Blockwise quadratic certificate ``V = (V_1, ..., V_N)``."""

    V: tuple[np.ndarray, ...]
    epsilon: float

    def __post_init__(self):
        frozen = []
        for v in self.V:
            arr = np.array(v, dtype=float)
            arr.setflags(write=False)
            frozen.append(arr)
        object.__setattr__(self, "V", tuple(frozen))


@dataclass(frozen=True)
class StabilityReport:
    """Outcome of one stability test.

    ``stable`` is None when the underlying solver failed and the test is
    inconclusive; ``rho`` always carries the lifted spectral radius for
    reference.
    """

    rho: float
    stable: bool | None
    method: str
    certificate: LyapunovCertificate | None = None


def _chain_pair(dtmc: Dtmc, sys: SwitchedLinearSystem):
    if dtmc.N != sys.N:
        raise DimensionError(f"chain has {dtmc.N} modes, system has {sys.N}")
    return np.asarray(dtmc.P, dtype=float), [np.asarray(a, dtype=float) for a in sys.A]


def assemble_lift(P: np.ndarray, kron_blocks) -> np.ndarray:
    """Block assembly of ``(P' (x) I) . blockdiag(K_i)``: block (j, i) is
    ``P[i, j] * K_i``."""
    N = P.shape[0]
    q = kron_blocks[0].shape[0] if N else 0
    out = np.zeros((N * q, N * q))
    for j in range(N):
        for i in range(N):
            if P[i, j] != 0.0:
                out[j * q:(j + 1) * q, i * q:(i + 1) * q] = P[i, j] * kron_blocks[i]
    return out


def mss_lift(dtmc: Dtmc, sys: SwitchedLinearSystem) -> np.ndarray:
    """The (N n^2) x (N n^2) second-moment transition matrix of the chain."""
    P, As = _chain_pair(dtmc, sys)
    return assemble_lift(P, [kron(a, a) for a in As])


def check_mss_spectral(dtmc: Dtmc, sys: SwitchedLinearSystem) -> StabilityReport:
    """Exact test: stable iff the lifted spectral radius is below one."""
    rho = spectral_radius(mss_lift(dtmc, sys))
    return StabilityReport(rho=rho, stable=bool(rho < 1.0 - SPECTRAL_MARGIN), method="spectral")


@dataclass(frozen=True)
class LyapunovSdpLayout:
    """A Lyapunov-margin SDP plus the location of its variables.

    Variable order: upper triangles of V_1..V_N, then per-mode prox
    epigraph scalars (when prox targets are given), then the margin gamma
    (when ``slack``).
    """

    problem: SdpProblem
    n: int
    N: int
    v_slices: tuple[slice, ...]
    gamma_index: int | None

    def extract_v(self, y: np.ndarray) -> list[np.ndarray]:
        return [mat_from_sym_coords(y[sl], self.n) for sl in self.v_slices]


def build_lyapunov_sdp(
    P: np.ndarray,
    As,
    eps: float = DEFAULT_EPS,
    tau: float = DEFAULT_TAU,
    slack: bool = False,
    prox_targets=None,
    prox_weight: float = 0.0,
) -> LyapunovSdpLayout:
    """Assemble the blockwise Lyapunov SDP for a fixed chain ``P``.

    Constraints: ``V_i >= eps I``, ``V_i <= tau I`` and, per target mode
    ``j``, ``V_j - sum_i P[i,j] A_i V_i A_i' >= (gamma if slack else eps) I``.
    With prox targets, spectral-norm epigraphs
    ``-t_i I <= V_i - target_i <= t_i I`` are added and the objective
    becomes ``-gamma + prox_weight * sum_i t_i``; otherwise the problem is
    pure feasibility (or margin maximization when ``slack``).
    """
    As = [np.asarray(a, dtype=float) for a in As]
    N = len(As)
    n = As[0].shape[0]
    basis = sym_basis(n)
    nv = basis.shape[0]
    num_vars = N * nv + (N if prox_targets is not None else 0) + (1 if slack else 0)
    v_slices = tuple(slice(i * nv, (i + 1) * nv) for i in range(N))
    t_index = [N * nv + i for i in range(N)] if prox_targets is not None else None
    gamma_index = num_vars - 1 if slack else None

    eye = np.eye(n)
    # A_i E A_i' for every basis matrix E, per mode
    pushed = [np.einsum("ab,kbc,dc->kad", a, basis, a) for a in As]

    lmis: list[LmiBlock] = []
    for i in range(N):
        coeffs = np.zeros((num_vars, n, n))
        coeffs[v_slices[i]] = basis
        lmis.append(LmiBlock(base=eps * eye, coeffs=coeffs))
        coeffs = np.zeros((num_vars, n, n))
        coeffs[v_slices[i]] = -basis
        lmis.append(LmiBlock(base=-tau * eye, coeffs=coeffs))
    for j in range(N):
        coeffs = np.zeros((num_vars, n, n))
        coeffs[v_slices[j]] += basis
        for i in range(N):
            if P[i, j] != 0.0:
                coeffs[v_slices[i]] -= P[i, j] * pushed[i]
        if slack:
            coeffs[gamma_index] = -eye
            base = np.zeros((n, n))
        else:
            base = eps * eye
        lmis.append(LmiBlock(base=base, coeffs=coeffs))
    if prox_targets is not None:
        for i in range(N):
            target = symmetrize(np.asarray(prox_targets[i], dtype=float))
            coeffs = np.zeros((num_vars, n, n))
            coeffs[v_slices[i]] = basis
            coeffs[t_index[i]] = eye
            lmis.append(LmiBlock(base=target, coeffs=coeffs))
            coeffs = np.zeros((num_vars, n, n))
            coeffs[v_slices[i]] = -basis
            coeffs[t_index[i]] = eye
            lmis.append(LmiBlock(base=-target, coeffs=coeffs))

    objective = np.zeros(num_vars)
    lower = np.full(num_vars, -np.inf)
    upper = np.full(num_vars, np.inf)
    if prox_targets is not None:
        for idx in t_index:
            objective[idx] = prox_weight
            lower[idx] = 0.0
    if slack:
        objective[gamma_index] = -1.0
        upper[gamma_index] = tau
    problem = SdpProblem.build(
        num_vars, objective=objective, lmis=lmis, lower=lower, upper=upper
    )
    return LyapunovSdpLayout(problem, n, N, v_slices, gamma_index)


def check_mss_lyapunov(
    dtmc: Dtmc,
    sys: SwitchedLinearSystem,
    eps: float = DEFAULT_EPS,
    tau: float = DEFAULT_TAU,
    tol: float = 1e-7,
) -> StabilityReport:
    """Necessary-and-sufficient Lyapunov test via an SDP feasibility solve.

    Feasible returns a certificate; infeasible means unstable; a solver
    failure yields ``stable=None`` (inconclusive, never a verdict).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    P, As = _chain_pair(dtmc, sys)
    rho = spectral_radius(mss_lift(dtmc, sys))
    layout = build_lyapunov_sdp(P, As, eps=eps, tau=tau)
    sol = solve_sdp(layout.problem, tol)
    if sol.ok:
        V = tuple(symmetrize(v) for v in layout.extract_v(sol.y))
        cert = LyapunovCertificate(V=V, epsilon=eps)
        return StabilityReport(rho=rho, stable=True, method="lyapunov", certificate=cert)
    if sol.status == conic.INFEASIBLE:
        return StabilityReport(rho=rho, stable=False, method="lyapunov")
    return StabilityReport(rho=rho, stable=None, method="lyapunov")


def check_mss_diagonal(
    dtmc: Dtmc,
    sys: SwitchedLinearSystem,
    eps: float = DEFAULT_EPS,
    tol: float = 1e-7,
) -> np.ndarray | None:
    """Sufficient scalar-weight test.

    Searches weights ``a_i >= 1`` with
    ``a_i I - (sum_j P[i,j] a_j) A_i A_i' >= eps I`` for every mode ``i``
    (the index placement follows the source formulation verbatim).
    Returns the weight vector when feasible; None means no certificate
    (infeasible or solver failure) and implies nothing about stability.
    """
    P, As = _chain_pair(dtmc, sys)
    N = len(As)
    eye = np.eye(sys.n)
    grams = [a @ a.T for a in As]
    lmis = []
    for i in range(N):
        coeffs = np.zeros((N, sys.n, sys.n))
        coeffs[i] += eye
        for j in range(N):
            coeffs[j] -= P[i, j] * grams[i]
        lmis.append(LmiBlock(base=eps * eye, coeffs=coeffs))
    problem = SdpProblem.build(N, lmis=lmis, lower=np.ones(N))
    sol = solve_sdp(problem, tol)
    if sol.ok:
        return np.array(sol.y)
    return None


def verify_policy_certificate(
    mdp: Mdp,
    sys: SwitchedLinearSystem,
    policy: Policy,
    cert: LyapunovCertificate,
    margin: float = CERT_MARGIN,
) -> bool:
    """Solver-free arithmetic check of a (policy, certificate) pair.

    Requires the policy to be a valid distribution over defined actions,
    forms the induced chain directly, and demands ``V_i`` and every
    Lyapunov residual ``V_j - sum_i p_ij A_i V_i A_i'`` be positive
    definite with at least ``margin``.  The margin is fixed here so
    verification does not inherit any solver tolerance.
    """
    if mdp.N != sys.N:
        raise DimensionError(f"MDP has {mdp.N} modes, system has {sys.N}")
    n, N = sys.n, sys.N
    if len(cert.V) != N:
        raise DimensionError(f"certificate has {len(cert.V)} blocks, system has {N} modes")
    if policy_violations(mdp, policy, tol=margin):
        return False
    V = []
    for v in cert.V:
        v = np.asarray(v, dtype=float)
        if v.shape != (n, n):
            raise DimensionError(f"certificate block shape {v.shape} != ({n}, {n})")
        if np.max(np.abs(v - v.T), initial=0.0) > 1e-8:
            return False
        V.append(symmetrize(v))
    if any(min_eig_symmetric(v) < margin for v in V):
        return False
    P = np.einsum("ik,kij->ij", policy.pi, mdp.transition_stack())
    As = [np.asarray(a, dtype=float) for a in sys.A]
    for j in range(N):
        residual = V[j].copy()
        for i in range(N):
            if P[i, j] != 0.0:
                residual -= P[i, j] * (As[i] @ V[i] @ As[i].T)
        if min_eig_symmetric(symmetrize(residual)) < margin:
            return False
    return True
