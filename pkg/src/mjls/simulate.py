"""Monte-Carlo simulation of a jump-linear chain and empirical
mean-square convergence diagnostics.

Simulation verdicts are advisory: finite sampling can suggest but never
certify the limit behaviour, so nothing here overrides the analytic
tests.  Each trial's randomness is an independent stream keyed by
``(seed, trial)``, drawn up front (mode uniforms first, then noise), so
any execution order reproduces identical traces bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, SimulationDivergedError
from .model import Dtmc, NoiseSpec, SwitchedLinearSystem

#: state sup-norm beyond which a run aborts rather than overflow
DIVERGENCE_GUARD = 1e12

CONVERGING = "converging"
DIVERGING = "diverging"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class MomentTrace:
    """Per-step moment estimates of a batch of simulated trajectories.

    ``mean_trace[k]`` estimates E[x(k)] and ``second_moment_trace[k]``
    estimates E[x(k) x'(k)]; the ``limit_*`` fields average the last
    ``window`` steps as a crude estimate of the limits.
    """

    horizon: int
    trials: int
    mean_trace: np.ndarray
    second_moment_trace: np.ndarray
    limit_mean: np.ndarray
    limit_second_moment: np.ndarray
    window: int


@dataclass(frozen=True)
class DiagnosticReport:
    verdict: str
    rel_change: float
    growth: float


def simulate_trajectories(
    sys: SwitchedLinearSystem,
    dtmc: Dtmc,
    noise: NoiseSpec | None,
    x0,
    horizon: int,
    trials: int,
    seed: int,
    window: int = 25,
) -> MomentTrace:
    """Sample ``trials`` mode paths and state trajectories of length
    ``horizon`` and aggregate their first and second moments.

    Modes follow ``dtmc`` from its initial mode; states follow
    ``x(k+1) = A[s_k] x(k) + B[s_k] w(k)`` with Gaussian ``w`` of the
    given moments (pass ``noise=None`` for the autonomous system).
    Aborts with :class:`SimulationDivergedError` when any state leaves
    the finite-arithmetic guard region.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if dtmc.N != sys.N:
        raise DimensionError(f"chain has {dtmc.N} modes, system has {sys.N}")
    n = sys.n
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.shape != (n,):
        raise DimensionError(f"x0 length {x0.size} != state dimension {n}")
    if noise is not None:
        if sys.B is None:
            raise DimensionError("system has no noise input map for the given noise")
        m = sys.m
        if noise.mean.shape != (m,) or noise.covariance.shape != (m, m):
            raise DimensionError("noise moments do not match the noise dimension")
        cov = noise.covariance
        if np.max(np.abs(cov - cov.T)) > 1e-9:
            raise ValueError("noise covariance must be symmetric")
        if np.linalg.eigvalsh((cov + cov.T) / 2.0)[0] < -1e-9:
            raise ValueError("noise covariance must be positive semidefinite")

    mode_u = np.empty((trials, horizon))
    w = np.empty((trials, horizon, sys.m)) if noise is not None else None
    for t in range(trials):
        rng = np.random.default_rng((seed, t))
        mode_u[t] = rng.random(horizon)
        if noise is not None:
            w[t] = rng.multivariate_normal(
                noise.mean, noise.covariance, size=horizon, check_valid="ignore"
            )

    P = np.asarray(dtmc.P, dtype=float)
    cum = np.cumsum(P, axis=1)
    cum[:, -1] = 1.0
    A = [np.asarray(a, dtype=float) for a in sys.A]
    B = [np.asarray(b, dtype=float) for b in sys.B] if noise is not None else None

    x = np.tile(x0, (trials, 1))
    s = np.full(trials, dtmc.initial_mode, dtype=int)
    mean_trace = np.empty((horizon + 1, n))
    m2_trace = np.empty((horizon + 1, n, n))
    mean_trace[0] = x.mean(axis=0)
    m2_trace[0] = x.T @ x / trials
    for k in range(horizon):
        nxt = np.empty_like(x)
        for i in range(sys.N):
            mask = s == i
            if not mask.any():
                continue
            nxt[mask] = x[mask] @ A[i].T
            if noise is not None:
                nxt[mask] += w[mask, k] @ B[i].T
        x = nxt
        worst = float(np.max(np.abs(x), initial=0.0))
        if worst > DIVERGENCE_GUARD:
            raise SimulationDivergedError(step=k + 1, norm=worst)
        mean_trace[k + 1] = x.mean(axis=0)
        m2_trace[k + 1] = x.T @ x / trials
        s = np.sum(cum[s] < mode_u[:, k, None], axis=1)

    w_eff = min(window, horizon + 1)
    return MomentTrace(
        horizon=horizon,
        trials=trials,
        mean_trace=mean_trace,
        second_moment_trace=m2_trace,
        limit_mean=mean_trace[-w_eff:].mean(axis=0),
        limit_second_moment=m2_trace[-w_eff:].mean(axis=0),
        window=window,
    )


def _series_verdict(series: np.ndarray, window: int, rel_tol: float) -> tuple[str, float, float]:
    flat = series.reshape(series.shape[0], -1)
    a1 = flat[-2 * window:-window].mean(axis=0)
    a2 = flat[-window:].mean(axis=0)
    n1 = float(np.max(np.abs(a1), initial=0.0))
    n2 = float(np.max(np.abs(a2), initial=0.0))
    overall = float(np.max(np.abs(flat), initial=0.0))
    floor = 1e-9 * max(overall, 1.0)
    if n2 <= floor:
        return CONVERGING, 0.0, 0.0
    growth = n2 / max(n1, floor)
    rel_change = float(np.max(np.abs(a2 - a1)) / max(n1, n2, floor))
    if growth > 1.0 + rel_tol:
        return DIVERGING, rel_change, growth
    if growth < 1.0 - rel_tol or rel_change <= rel_tol:
        return CONVERGING, rel_change, growth
    return INCONCLUSIVE, rel_change, growth


def mss_empirical_diagnostic(trace: MomentTrace, rel_tol: float = 0.1) -> DiagnosticReport:
    """Window-to-window comparison of the moment estimates.

    Averages the last two length-``window`` segments of the mean and
    second-moment traces: tail growth beyond ``rel_tol`` reads as
    ``diverging``; clear decay or a settled estimate reads as
    ``converging``; anything else is ``inconclusive``.  Both moments
    must converge for the combined verdict to.
    """
    window = trace.window
    if trace.horizon < 2 * window:
        raise ValueError(f"horizon {trace.horizon} too short for two windows of {window}")
    verdicts = []
    rel = 0.0
    growth = 0.0
    for series in (trace.mean_trace, trace.second_moment_trace):
        v, r, g = _series_verdict(series, window, rel_tol)
        verdicts.append(v)
        rel = max(rel, r)
        growth = max(growth, g)
    if DIVERGING in verdicts:
        verdict = DIVERGING
    elif INCONCLUSIVE in verdicts:
        verdict = INCONCLUSIVE
    else:
        verdict = CONVERGING
    return DiagnosticReport(verdict=verdict, rel_change=rel, growth=growth)


def trace_to_csv(trace: MomentTrace, stream) -> None:
    """Write one row per step: mean components then the flattened
    second-moment matrix."""
    n = trace.mean_trace.shape[1]
    writer = csv.writer(stream)
    header = ["step"] + [f"mean_{i}" for i in range(n)]
    header += [f"m2_{r}_{c}" for r in range(n) for c in range(n)]
    writer.writerow(header)
    for k in range(trace.horizon + 1):
        row = [k, *trace.mean_trace[k], *trace.second_moment_trace[k].ravel()]
        writer.writerow(row)
