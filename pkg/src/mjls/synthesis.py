"""Policy synthesis for mean-square stabilization.

Three routes:

* :func:`synth_sdp_relaxation` — a single convex feasibility problem in
  scalar mode weights ``a_i`` and products ``K[i, act] = pi[i, act] * a_i``
  (sufficient only; often infeasible even when a stabilizing policy
  exists).
* :func:`synth_coordinate_descent` — alternate two SDPs, maximizing a
  shared positive-definiteness slack gamma: fix the policy and solve for
  the Lyapunov blocks, then fix the blocks and solve for the policy, each
  with a small proximal penalty on the step.  gamma > 0 certifies
  stability.
* :func:`brute_force_policy_search` — exhaustive simplex-grid scan for
  small instances; serves as an independent oracle.

Every result claiming ``stabilized`` is re-verified before being
returned: the stored certificate must pass the solver-free arithmetic
check and the induced chain's lifted spectral radius must be below one.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, replace

import numpy as np

from . import conic
from .conic import LmiBlock, SdpProblem, solve_sdp
from .errors import CardinalityError, SolverFailureError
from .model import (
    Mdp,
    Policy,
    SwitchedLinearSystem,
    enumerate_deterministic_policies,
    induce_dtmc,
)
from .stability import (
    DEFAULT_EPS,
    DEFAULT_TAU,
    LyapunovCertificate,
    assemble_lift,
    build_lyapunov_sdp,
    check_mss_spectral,
    verify_policy_certificate,
)
from .numerics import kron, spectral_radius, symmetrize

STABILIZED = "stabilized"
CONVERGED_INFEASIBLE = "converged_infeasible"
ITERATION_LIMIT = "iteration_limit"
SOLVER_FAILURE = "solver_failure"

INIT_UNIFORM = "uniform"
INIT_DETERMINISTIC = "deterministic"


@dataclass(frozen=True)
class CdParams:
    """Knobs of the coordinate-descent loop.

    ``prox_weight`` scales the per-step movement penalty, ``gamma_tol``
    is the slack level accepted as success, and a run is declared stuck
    when gamma moves less than ``stall_tol`` for ``stall_window``
    consecutive iterations while still nonpositive.

    The Lyapunov cone is scale invariant, so the blocks are normalized to
    ``eps I <= V_i <= v_cap I``.  Both bounds are pure normalizations;
    ``eps`` defaults to one (not to a tiny margin) because the slack
    scales with V, and a tiny lower bound would let the subproblems
    collapse V — and with it every infeasibility signal — to the floor.
    """

    prox_weight: float = 1e-3
    max_iters: int = 50
    gamma_tol: float = 1e-7
    stall_tol: float = 1e-6
    stall_window: int = 3
    v_cap: float = DEFAULT_TAU
    eps: float = 1.0
    init: str = INIT_UNIFORM
    seed: int | None = None
    solver_tol: float = 1e-7
    restarts: int = 8

    def __post_init__(self):
        positives = {
            "prox_weight": self.prox_weight,
            "gamma_tol": self.gamma_tol,
            "stall_tol": self.stall_tol,
            "v_cap": self.v_cap,
            "eps": self.eps,
            "solver_tol": self.solver_tol,
        }
        for name, value in positives.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.stall_window < 1:
            raise ValueError("stall_window must be at least 1")
        if self.restarts < 0:
            raise ValueError("restarts must be nonnegative")
        if self.init not in (INIT_UNIFORM, INIT_DETERMINISTIC):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass(frozen=True)
class SynthesisResult:
    status: str
    policy: Policy | None = None
    certificate: LyapunovCertificate | None = None
    gamma_trace: tuple[float, ...] = ()
    iterations: int = 0
    wall_time: float = 0.0

    @property
    def stabilized(self) -> bool:
        return self.status == STABILIZED


def _defined_pairs(mdp: Mdp) -> list[tuple[int, int]]:
    mask = mdp.defined_mask()
    return [(i, k) for i in range(mdp.N) for k in range(mdp.num_actions) if mask[i, k]]


def cd_step_V(
    mdp: Mdp,
    sys: SwitchedLinearSystem,
    policy: Policy,
    v_prev,
    params: CdParams,
) -> tuple[list[np.ndarray], float]:
    """Fix the policy, solve for Lyapunov blocks and the slack gamma.

    Minimizes ``-gamma + prox_weight * sum_i ||V_i - v_prev_i||`` (spectral
    norm via LMI epigraphs) subject to ``eps I <= V_i <= v_cap I`` and
    ``V_j - sum_i p_ij A_i V_i A_i' >= gamma I``.
    """
    P = induce_dtmc(mdp, policy).P
    layout = build_lyapunov_sdp(
        P,
        sys.A,
        eps=params.eps,
        tau=params.v_cap,
        slack=True,
        prox_targets=v_prev,
        prox_weight=params.prox_weight,
    )
    sol = solve_sdp(layout.problem, params.solver_tol)
    if not sol.ok:
        raise SolverFailureError(f"Lyapunov step ended with status {sol.status}")
    V = [symmetrize(v) for v in layout.extract_v(sol.y)]
    return V, float(sol.y[layout.gamma_index])


def cd_step_policy(
    mdp: Mdp,
    sys: SwitchedLinearSystem,
    V,
    policy_prev: Policy,
    params: CdParams,
) -> tuple[Policy, float]:
    """Fix the Lyapunov blocks, solve for the policy and the slack gamma.

    Minimizes ``-gamma + prox_weight * sum |pi - pi_prev|`` over the
    per-mode action simplices (only defined actions carry variables),
    subject to ``V_j - sum_i p_ij(pi) A_i V_i A_i' >= gamma I``.
    """
    pairs = _defined_pairs(mdp)
    npairs = len(pairs)
    num_vars = 2 * npairs + 1
    gamma_index = num_vars - 1
    n, N = sys.n, sys.N
    V = [symmetrize(np.asarray(v, dtype=float)) for v in V]
    pushed = [symmetrize(a @ v @ a.T) for a, v in zip(sys.A, V)]
    stack = mdp.transition_stack()
    eye = np.eye(n)

    lmis: list[LmiBlock] = []
    for j in range(N):
        coeffs = np.zeros((num_vars, n, n))
        for idx, (i, k) in enumerate(pairs):
            if stack[k, i, j] != 0.0:
                coeffs[idx] = -stack[k, i, j] * pushed[i]
        coeffs[gamma_index] = -eye
        lmis.append(LmiBlock(base=-V[j], coeffs=coeffs))
    # epigraphs u >= |pi - pi_prev| as componentwise 1x1 blocks
    prev = policy_prev.pi
    for idx, (i, k) in enumerate(pairs):
        coeffs = np.zeros((num_vars, 1, 1))
        coeffs[idx, 0, 0] = -1.0
        coeffs[npairs + idx, 0, 0] = 1.0
        lmis.append(LmiBlock(base=np.array([[-prev[i, k]]]), coeffs=coeffs))
        coeffs = np.zeros((num_vars, 1, 1))
        coeffs[idx, 0, 0] = 1.0
        coeffs[npairs + idx, 0, 0] = 1.0
        lmis.append(LmiBlock(base=np.array([[prev[i, k]]]), coeffs=coeffs))

    eq_a = np.zeros((mdp.N, num_vars))
    for idx, (i, _) in enumerate(pairs):
        eq_a[i, idx] = 1.0
    eq_b = np.ones(mdp.N)

    objective = np.zeros(num_vars)
    objective[npairs:2 * npairs] = params.prox_weight
    objective[gamma_index] = -1.0
    lower = np.concatenate([np.zeros(2 * npairs), [-np.inf]])
    upper = np.concatenate([np.ones(npairs), np.full(npairs + 1, np.inf)])
    problem = SdpProblem.build(
        num_vars, objective=objective, eq_a=eq_a, eq_b=eq_b, lmis=lmis,
        lower=lower, upper=upper,
    )
    sol = solve_sdp(problem, params.solver_tol)
    if not sol.ok:
        raise SolverFailureError(f"policy step ended with status {sol.status}")
    pi = np.zeros((mdp.N, mdp.num_actions))
    for idx, (i, k) in enumerate(pairs):
        pi[i, k] = max(float(sol.y[idx]), 0.0)
    pi /= pi.sum(axis=1, keepdims=True)
    return Policy(pi), float(sol.y[gamma_index])


def _max_margin_certificate(
    mdp: Mdp,
    sys: SwitchedLinearSystem,
    policy: Policy,
    params: CdParams,
) -> tuple[list[np.ndarray], float]:
    """Maximize the slack at a fixed policy (no prox term); used both to
    certify an already-stable start and to extract the final certificate."""
    P = induce_dtmc(mdp, policy).P
    layout = build_lyapunov_sdp(P, sys.A, eps=params.eps, tau=params.v_cap, slack=True)
    sol = solve_sdp(layout.problem, params.solver_tol)
    if not sol.ok:
        raise SolverFailureError(f"certificate extraction ended with status {sol.status}")
    V = [symmetrize(v) for v in layout.extract_v(sol.y)]
    return V, float(sol.y[layout.gamma_index])


def _start_policies(mdp: Mdp, sys: SwitchedLinearSystem, params: CdParams) -> list[Policy]:
    """Initial policies in the order they will be tried.

    The configured start comes first (uniform over defined actions, or
    the deterministic policy of smallest lifted radius).  The alternating
    scheme only reaches a stationary point of its slack surrogate, and
    which basin a start sits in is not predictable from its radius, so
    the remaining deterministic policies (by ascending radius) and a few
    seeded random draws serve as fallback starts.  Duplicates are
    dropped.
    """
    ranked: list[tuple[float, Policy]] = []
    try:
        for cand in enumerate_deterministic_policies(mdp, cap=64):
            rho = check_mss_spectral(induce_dtmc(mdp, cand), sys).rho
            ranked.append((rho, cand))
        ranked.sort(key=lambda item: item[0])
    except CardinalityError:
        ranked = []
    starts: list[Policy] = []
    if params.init == INIT_DETERMINISTIC and ranked:
        starts.append(ranked[0][1])
        starts.append(Policy.uniform(mdp))
    else:
        starts.append(Policy.uniform(mdp))
    starts.extend(cand for _, cand in ranked)
    rng = np.random.default_rng(0 if params.seed is None else params.seed)
    mask = mdp.defined_mask()
    for _ in range(params.restarts):
        pi = np.zeros(mask.shape)
        for i in range(mask.shape[0]):
            idx = np.flatnonzero(mask[i])
            draws = rng.exponential(1.0, size=idx.size)
            pi[i, idx] = draws / draws.sum()
        starts.append(Policy(pi))
    unique: list[Policy] = []
    for cand in starts:
        if not any(np.allclose(cand.pi, seen.pi, atol=1e-12) for seen in unique):
            unique.append(cand)
    return unique


def synth_coordinate_descent(
    mdp: Mdp,
    sys: SwitchedLinearSystem,
    params: CdParams | None = None,
) -> SynthesisResult:
    """Alternating-SDP synthesis with proximal updates and restarts.

    Each attempt starts from identity Lyapunov blocks and one of the
    initial policies (uniform or best-deterministic first, fallbacks
    after).  A start whose chain is already stable short-circuits to
    certificate extraction; otherwise the two SDP steps alternate until
    the slack turns positive, stalls while nonpositive, or the shared
    iteration budget runs out.  Success requires gamma above
    ``gamma_tol`` *and* independent verification of the extracted
    certificate plus the spectral test; a claimed success is never
    returned unverified.

    ``converged_infeasible`` means every attempted start stalled with
    nonpositive slack; ``iteration_limit`` means the budget ended first.
    """
    params = params or CdParams()
    start_time = time.perf_counter()
    trace: list[float] = []
    iterations_used = 0

    def finish(status, policy=None, cert=None):
        return SynthesisResult(
            status=status,
            policy=policy,
            certificate=cert,
            gamma_trace=tuple(trace),
            iterations=iterations_used,
            wall_time=time.perf_counter() - start_time,
        )

    def certify(policy: Policy) -> SynthesisResult | None:
        V, gamma = _max_margin_certificate(mdp, sys, policy, params)
        trace.append(gamma)
        if gamma <= params.gamma_tol:
            return None
        cert = LyapunovCertificate(V=tuple(V), epsilon=params.eps)
        if not verify_policy_certificate(mdp, sys, policy, cert):
            return None
        if not check_mss_spectral(induce_dtmc(mdp, policy), sys).stable:
            return None
        return finish(STABILIZED, policy, cert)

    def attempt(policy: Policy) -> SynthesisResult | str:
        """One alternating run; returns a result, 'stalled', or 'budget'."""
        nonlocal iterations_used
        if check_mss_spectral(induce_dtmc(mdp, policy), sys).stable:
            result = certify(policy)
            if result is not None:
                return result
        v_prev = [np.eye(sys.n) for _ in range(sys.N)]
        prev_gamma = None
        stall = 0
        while iterations_used < params.max_iters:
            iterations_used += 1
            V, gamma_v = cd_step_V(mdp, sys, policy, v_prev, params)
            trace.append(gamma_v)
            if gamma_v > params.gamma_tol:
                result = certify(policy)
                if result is not None:
                    return result
            new_policy, gamma_p = cd_step_policy(mdp, sys, V, policy, params)
            trace.append(gamma_p)
            if gamma_p > params.gamma_tol:
                result = certify(new_policy)
                if result is not None:
                    return result
            if prev_gamma is not None and abs(gamma_p - prev_gamma) < params.stall_tol \
                    and gamma_p <= 0.0:
                stall += 1
                if stall >= params.stall_window:
                    return "stalled"
            else:
                stall = 0
            prev_gamma = gamma_p
            v_prev, policy = V, new_policy
        return "budget"

    try:
        for start in _start_policies(mdp, sys, params):
            if iterations_used >= params.max_iters:
                return finish(ITERATION_LIMIT)
            outcome = attempt(start)
            if isinstance(outcome, SynthesisResult):
                return outcome
            if outcome == "budget":
                return finish(ITERATION_LIMIT)
    except SolverFailureError:
        return finish(SOLVER_FAILURE)
    return finish(CONVERGED_INFEASIBLE)


def synth_sdp_relaxation(
    mdp: Mdp,
    sys: SwitchedLinearSystem,
    eps: float = DEFAULT_EPS,
    tol: float = 1e-7,
) -> SynthesisResult:
    """One-shot convex relaxation with scalar Lyapunov weights.

    Variables are mode weights ``a_i >= 1`` and nonnegative products
    ``K[i, act]`` with ``sum_act K[i, act] = a_i``; feasibility of

        a_j I - sum_i sum_act T[act][i, j] K[i, act] A_i A_i' >= eps I

    recovers the policy ``pi[i, act] = K[i, act] / a_i``.  Sufficient
    only: infeasibility of the relaxation proves nothing.
    """
    start = time.perf_counter()
    pairs = _defined_pairs(mdp)
    npairs = len(pairs)
    N, n = mdp.N, sys.n
    num_vars = N + npairs
    stack = mdp.transition_stack()
    grams = [a @ a.T for a in sys.A]
    eye = np.eye(n)

    lmis = []
    for j in range(N):
        coeffs = np.zeros((num_vars, n, n))
        coeffs[j] = eye
        for idx, (i, k) in enumerate(pairs):
            if stack[k, i, j] != 0.0:
                coeffs[N + idx] = -stack[k, i, j] * grams[i]
        lmis.append(LmiBlock(base=eps * eye, coeffs=coeffs))
    eq_a = np.zeros((N, num_vars))
    for i in range(N):
        eq_a[i, i] = -1.0
    for idx, (i, _) in enumerate(pairs):
        eq_a[i, N + idx] = 1.0
    eq_b = np.zeros(N)
    lower = np.concatenate([np.ones(N), np.zeros(npairs)])
    problem = SdpProblem.build(num_vars, eq_a=eq_a, eq_b=eq_b, lmis=lmis, lower=lower)

    sol = solve_sdp(problem, tol)
    elapsed = time.perf_counter() - start
    if sol.status == conic.INFEASIBLE:
        return SynthesisResult(CONVERGED_INFEASIBLE, iterations=1, wall_time=elapsed)
    if not sol.ok:
        return SynthesisResult(SOLVER_FAILURE, iterations=1, wall_time=elapsed)
    alpha = np.array(sol.y[:N])
    pi = np.zeros((N, mdp.num_actions))
    for idx, (i, k) in enumerate(pairs):
        pi[i, k] = max(float(sol.y[N + idx]), 0.0) / alpha[i]
    pi /= pi.sum(axis=1, keepdims=True)
    policy = Policy(pi)
    cert = LyapunovCertificate(V=tuple(a * np.eye(n) for a in alpha), epsilon=eps)
    ok = verify_policy_certificate(mdp, sys, policy, cert) and \
        check_mss_spectral(induce_dtmc(mdp, policy), sys).stable
    elapsed = time.perf_counter() - start
    if not ok:
        return SynthesisResult(SOLVER_FAILURE, iterations=1, wall_time=elapsed)
    return SynthesisResult(
        STABILIZED,
        policy=policy,
        certificate=cert,
        iterations=1,
        wall_time=elapsed,
    )


def _simplex_grid(dims: int, steps: int):
    """Lattice points with coordinates k/steps summing to one."""
    if dims == 1:
        yield (steps,)
        return
    for first in range(steps + 1):
        for rest in _simplex_grid(dims - 1, steps - first):
            yield (first, *rest)


def brute_force_policy_search(
    mdp: Mdp,
    sys: SwitchedLinearSystem,
    grid_step: float,
    cap: int = 10**7,
) -> tuple[Policy, float]:
    """Exhaustive scan of per-mode action simplices on a uniform grid.

    ``grid_step`` is rounded to the nearest 1/steps; ``grid_step=1``
    scans exactly the deterministic corners.  Returns the policy with the
    smallest lifted spectral radius and that radius.  Guarded by ``cap``
    on the total number of grid points.
    """
    if not 0.0 < grid_step <= 1.0:
        raise ValueError("grid_step must be in (0, 1]")
    steps = max(1, round(1.0 / grid_step))
    per_mode: list[list[np.ndarray]] = []
    total = 1
    for i in range(mdp.N):
        defined = mdp.defined_actions(i)
        points = [np.array(c, dtype=float) / steps for c in _simplex_grid(len(defined), steps)]
        per_mode.append(points)
        total *= len(points)
        if total > cap:
            raise CardinalityError(f"simplex grid exceeds cap {cap}")
    defined_idx = [mdp.defined_actions(i) for i in range(mdp.N)]
    stack = mdp.transition_stack()
    kron_blocks = [kron(a, a) for a in sys.A]
    best_pi, best_rho = None, math.inf
    for combo in itertools.product(*per_mode):
        pi = np.zeros((mdp.N, mdp.num_actions))
        P = np.zeros((mdp.N, mdp.N))
        for i, weights in enumerate(combo):
            pi[i, list(defined_idx[i])] = weights
            P[i] = np.einsum("k,kj->j", weights, stack[list(defined_idx[i]), i, :])
        rho = spectral_radius(assemble_lift(P, kron_blocks))
        if rho < best_rho:
            best_pi, best_rho = pi, rho
    return Policy(best_pi), float(best_rho)
