"""Core model types: switched linear systems, MDPs, policies, and the
policy-to-chain reduction.

A :class:`SwitchedLinearSystem` holds the per-mode dynamics, an
:class:`Mdp` the probabilistic switching logic, and a :class:`Policy`
resolves the MDP's action choices.  Applying a policy averages the
per-action transition matrices into the single mode chain
(:class:`Dtmc`) that drives the jump-linear dynamics.

All types freeze their arrays on construction and the operations here are
pure functions, so values can be shared across concurrent tasks.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import CardinalityError, InvalidPolicyError

#: absolute tolerance on probability row sums
ROW_SUM_TOL = 1e-9


def _frozen_array(value) -> np.ndarray:
    arr = np.array(value, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SwitchedLinearSystem:
    """Per-mode dynamics ``x(k+1) = A[s] x(k) + B[s] w(k)``.

    ``A`` is one square matrix per mode; ``B`` (optional) maps the noise
    input and must share one shape across modes.
    """

    A: tuple[np.ndarray, ...]
    B: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "A", tuple(_frozen_array(a) for a in self.A))
        if self.B is not None:
            object.__setattr__(self, "B", tuple(_frozen_array(b) for b in self.B))

    @property
    def N(self) -> int:
        """Number of modes."""
        return len(self.A)

    @property
    def n(self) -> int:
        """State dimension."""
        return self.A[0].shape[0] if self.A else 0

    @property
    def m(self) -> int | None:
        """Noise dimension, or None for autonomous systems."""
        if not self.B:
            return None
        return self.B[0].shape[1]


@dataclass(frozen=True)
class Mdp:
    """Mode-switching logic: one transition matrix per action.

    ``T[a][i, j]`` is the probability of jumping from mode ``i`` to mode
    ``j`` under action ``a``.  An all-zero row marks the action as
    undefined in that mode; defined rows are stochastic.
    """

    actions: tuple[str, ...]
    T: dict[str, np.ndarray]
    initial_mode: int = 0

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "T", {a: _frozen_array(m) for a, m in self.T.items()})

    @property
    def N(self) -> int:
        """Number of modes."""
        for a in self.actions:
            if a in self.T:
                return self.T[a].shape[0]
        return 0

    @property
    def num_actions(self) -> int:
        return len(self.actions)

    def transition_stack(self) -> np.ndarray:
        """All transition matrices as one (num_actions, N, N) array."""
        return np.stack([self.T[a] for a in self.actions])

    def defined_mask(self) -> np.ndarray:
        """(N, num_actions) boolean: action has a non-zero row at the mode."""
        stack = self.transition_stack()
        return np.any(stack != 0.0, axis=2).T

    def defined_actions(self, mode: int) -> tuple[int, ...]:
        """Indices of actions available in ``mode``, in action order."""
        mask = self.defined_mask()
        return tuple(int(k) for k in np.flatnonzero(mask[mode]))


@dataclass(frozen=True)
class Policy:
    """Row-stochastic map from modes to action probabilities.

    ``pi[i, k]`` is the probability of taking action ``k`` in mode ``i``.
    """

    pi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pi", _frozen_array(self.pi))

    @classmethod
    def deterministic(cls, num_actions: int, choices) -> "Policy":
        """One unit row per mode, selecting ``choices[i]`` in mode ``i``."""
        pi = np.zeros((len(choices), num_actions))
        for i, k in enumerate(choices):
            pi[i, k] = 1.0
        return cls(pi)

    @classmethod
    def uniform(cls, mdp: Mdp) -> "Policy":
        """Uniform distribution over the defined actions of each mode."""
        mask = mdp.defined_mask()
        pi = np.zeros(mask.shape)
        for i in range(mask.shape[0]):
            idx = np.flatnonzero(mask[i])
            if idx.size:
                pi[i, idx] = 1.0 / idx.size
        return cls(pi)


@dataclass(frozen=True)
class Dtmc:
    """A mode chain: row-stochastic transition matrix plus start mode."""

    P: np.ndarray
    initial_mode: int = 0

    def __post_init__(self):
        object.__setattr__(self, "P", _frozen_array(self.P))

    @property
    def N(self) -> int:
        return self.P.shape[0]


@dataclass(frozen=True)
class NoiseSpec:
    """First and second moments of the i.i.d. noise process."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen_array(self.mean))
        object.__setattr__(self, "covariance", _frozen_array(self.covariance))

    @property
    def m(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def _check_row(row: np.ndarray, tol: float) -> str | None:
    """Classify a transition row: None if stochastic or all-zero."""
    if np.all(row == 0.0):
        return None
    if row.min() < -tol or row.max() > 1.0 + tol:
        return "entries outside [0, 1]"
    if abs(row.sum() - 1.0) > tol:
        return f"row not stochastic (sum {row.sum():.12g})"
    return None


def validate_system(sys: SwitchedLinearSystem, mdp: Mdp) -> ValidationReport:
    """Collect every invariant violation of the pair; empty report = valid.

    Diagnostics are returned, never raised, so callers can report all
    problems of a loaded model at once.
    """
    out: list[str] = []
    if not sys.A:
        out.append("system has no modes")
    n = sys.n
    for i, a in enumerate(sys.A):
        if a.ndim != 2 or a.shape != (n, n):
            out.append(f"A[{i}] shape {a.shape} != ({n}, {n})")
        elif not np.all(np.isfinite(a)):
            out.append(f"A[{i}] has non-finite entries")
    if sys.B is not None:
        if len(sys.B) != sys.N:
            out.append(f"B count {len(sys.B)} != mode count {sys.N}")
        m = sys.m
        for i, b in enumerate(sys.B):
            if b.ndim != 2 or b.shape != (n, m):
                out.append(f"B[{i}] shape {b.shape} != ({n}, {m})")
            elif not np.all(np.isfinite(b)):
                out.append(f"B[{i}] has non-finite entries")

    if not mdp.actions:
        out.append("MDP has no actions")
    missing = [a for a in mdp.actions if a not in mdp.T]
    if missing:
        out.append(f"missing transition matrices for actions {missing}")
        return ValidationReport(tuple(out))
    N = mdp.N
    for a in mdp.actions:
        t = mdp.T[a]
        if t.shape != (N, N):
            out.append(f"T[{a}] shape {t.shape} != ({N}, {N})")
            continue
        if not np.all(np.isfinite(t)):
            out.append(f"T[{a}] has non-finite entries")
            continue
        for i in range(N):
            problem = _check_row(t[i], ROW_SUM_TOL)
            if problem:
                out.append(f"T[{a}] row {i}: {problem}")
    if all(mdp.T[a].shape == (N, N) for a in mdp.actions):
        mask = mdp.defined_mask()
        for i in range(N):
            if not mask[i].any():
                out.append(f"mode {i} has no defined action")
    if sys.N and N and sys.N != N:
        out.append(f"mode count mismatch: system has {sys.N}, MDP has {N}")
    if not (0 <= mdp.initial_mode < max(N, 1)):
        out.append(f"initial mode {mdp.initial_mode} out of range")
    return ValidationReport(tuple(out))


def policy_violations(mdp: Mdp, policy: Policy, tol: float = ROW_SUM_TOL) -> list[str]:
    """Invariant violations of ``policy`` against ``mdp`` (empty = valid)."""
    out: list[str] = []
    pi = policy.pi
    if pi.shape != (mdp.N, mdp.num_actions):
        return [f"policy shape {pi.shape} != ({mdp.N}, {mdp.num_actions})"]
    if pi.min(initial=0.0) < -tol:
        out.append(f"negative action probability ({pi.min():.3g})")
    sums = pi.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    for i in bad:
        out.append(f"policy row {i} sums to {sums[i]:.12g}")
    mask = mdp.defined_mask()
    leaked = np.abs(pi)[~mask]
    if leaked.size and leaked.max() > tol:
        out.append("probability mass on undefined actions")
    return out


def induce_dtmc(mdp: Mdp, policy: Policy) -> Dtmc:
    """Average the per-action transitions under ``policy``.

    ``P[i, j] = sum_k T_k[i, j] * pi[i, k]``; rows of the result are
    renormalized (their sums deviate from one only by accumulated
    roundoff once the policy is valid).
    """
    problems = policy_violations(mdp, policy)
    if problems:
        raise InvalidPolicyError("; ".join(problems))
    stack = mdp.transition_stack()
    P = np.einsum("ik,kij->ij", policy.pi, stack)
    sums = P.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise InvalidPolicyError("induced chain rows are not stochastic")
    return Dtmc(P / sums[:, None], mdp.initial_mode)


def enumerate_deterministic_policies(mdp: Mdp, cap: int = 10**6) -> list[Policy]:
    """All policies putting probability one on a defined action per mode.

    Returned in lexicographic action order; raises
    :class:`CardinalityError` when the count would exceed ``cap``.
    """
    choices = [mdp.defined_actions(i) for i in range(mdp.N)]
    count = math.prod(len(c) for c in choices)
    if count > cap:
        raise CardinalityError(f"{count} deterministic policies exceed cap {cap}")
    return [
        Policy.deterministic(mdp.num_actions, combo)
        for combo in itertools.product(*choices)
    ]
