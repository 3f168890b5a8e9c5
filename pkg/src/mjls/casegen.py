"""Constructors for the benchmark model families.

Three parameterized families (random dense instances, wireless power
control under switching path gains, and a four-buffer transportation
network) plus one fixed two-mode instance on which no deterministic
switching policy is mean-square stabilizing but a randomized one is.

Where the literature leaves constants unspecified (wireless gain draws,
transportation link rates), the defaults here are repository choices made
so the examples run out of the box; they are not measured or published
values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .model import Mdp, SwitchedLinearSystem
from .numerics import expm


def gen_random_instance(
    n: int,
    N: int,
    num_actions: int,
    entry_range: tuple[float, float] = (-0.5, 0.5),
    seed: int = 0,
) -> tuple[SwitchedLinearSystem, Mdp]:
    """Dense random instance: i.i.d. uniform dynamics entries, identity
    noise maps, and transition rows drawn uniformly from the simplex
    (normalized exponentials).  Deterministic in ``seed``."""
    if n < 1 or N < 1 or num_actions < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    lo, hi = entry_range
    A = [rng.uniform(lo, hi, size=(n, n)) for _ in range(N)]
    B = [np.eye(n) for _ in range(N)]
    actions = tuple(f"sigma{k + 1}" for k in range(num_actions))
    T = {}
    for a in actions:
        rows = rng.exponential(1.0, size=(N, N))
        T[a] = rows / rows.sum(axis=1, keepdims=True)
    return SwitchedLinearSystem(A=tuple(A), B=tuple(B)), Mdp(actions=actions, T=T)


def deterministic_gap_instance() -> tuple[SwitchedLinearSystem, Mdp]:
    """Fixed 2-state, 2-mode, 2-action benchmark.

    Every deterministic policy induces a lifted spectral radius of at
    least one (the best, always taking the first action, lands near
    1.04), while first action in mode 1 plus a 0.27/0.73 mix in mode 2
    brings the radius down to about 0.90.  Useful as a regression anchor
    and as the canonical witness that randomization is necessary.
    """
    A1 = [[0.99, -0.56], [-0.19, 0.73]]
    A2 = [[0.38, -0.98], [-0.66, -0.66]]
    T1 = [[0.21, 0.79], [0.90, 0.10]]
    T2 = [[0.71, 0.29], [0.13, 0.87]]
    sys = SwitchedLinearSystem(A=(np.array(A1), np.array(A2)),
                               B=(np.eye(2), np.eye(2)))
    mdp = Mdp(actions=("sigma1", "sigma2"),
              T={"sigma1": np.array(T1), "sigma2": np.array(T2)})
    return sys, mdp


# -- wireless power control ------------------------------------------------

WIRELESS_DEFAULT_TRANSITIONS = {
    "sigma1": ((0.9, 0.1), (0.1, 0.9)),
    "sigma2": ((0.3, 0.7), (0.6, 0.4)),
}


@dataclass(frozen=True)
class WirelessSpec:
    """Power-control model data: one path-gain matrix per antenna mode.

    ``gains[mode][i, j]`` is the loss from transmitter i to receiver j,
    in (0, 1]; ``sinr_targets`` are the per-link quality thresholds,
    ``step_sizes`` the per-node update gains in (0, 1], and
    ``noise_levels`` the receiver thermal noise.
    """

    gains: tuple[np.ndarray, ...]
    sinr_targets: np.ndarray
    step_sizes: np.ndarray
    noise_levels: np.ndarray
    transitions: dict[str, np.ndarray] = field(
        default_factory=lambda: {a: np.array(t) for a, t in WIRELESS_DEFAULT_TRANSITIONS.items()}
    )
    initial_mode: int = 0

    def __post_init__(self):
        object.__setattr__(self, "gains", tuple(np.array(g, dtype=float) for g in self.gains))
        for name in ("sinr_targets", "step_sizes", "noise_levels"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    @property
    def nodes(self) -> int:
        return self.gains[0].shape[0]


def build_wireless_model(spec: WirelessSpec) -> tuple[SwitchedLinearSystem, Mdp]:
    """Per-mode closed-loop update of the distributed power-control law.

    With step sizes Lambda = diag(lam_i) and normalized interference
    H[i, i] = 1, H[i, j] = -target_i * g[j, i] / g[i, i], each mode gets
    A = I - Lambda H and noise map B = Lambda diag(target_i / g[i, i]).
    """
    n = spec.nodes
    for name in ("sinr_targets", "step_sizes", "noise_levels"):
        if getattr(spec, name).shape != (n,):
            raise DimensionError(f"{name} must have one entry per node")
    if np.any(spec.step_sizes <= 0.0) or np.any(spec.step_sizes > 1.0):
        raise ValueError("step sizes must lie in (0, 1]")
    A, B = [], []
    for g in spec.gains:
        if g.shape != (n, n):
            raise DimensionError("every gain matrix must be nodes x nodes")
        diag = np.diag(g)
        if np.any(diag <= 0.0):
            raise ValueError("zero diagonal gain")
        H = np.eye(n)
        for i in range(n):
            for j in range(n):
                if i != j:
                    H[i, j] = -spec.sinr_targets[i] * g[j, i] / g[i, i]
        lam = np.diag(spec.step_sizes)
        A.append(np.eye(n) - lam @ H)
        B.append(lam @ np.diag(spec.sinr_targets / diag))
    actions = tuple(sorted(spec.transitions))
    mdp = Mdp(actions=actions,
              T={a: np.array(spec.transitions[a], dtype=float) for a in actions},
              initial_mode=spec.initial_mode)
    return SwitchedLinearSystem(A=tuple(A), B=tuple(B)), mdp


def random_wireless_spec(nodes: int = 4, modes: int = 2, seed: int = 0) -> WirelessSpec:
    """Random-gain wireless instance (repository default parameter ranges).

    Direct gains are strong, cross gains weak, and the per-mode draws are
    independent, so antenna modes genuinely differ.
    """
    rng = np.random.default_rng(seed)
    gains = []
    for _ in range(modes):
        g = rng.uniform(0.01, 0.2, size=(nodes, nodes))
        g[np.diag_indices(nodes)] = rng.uniform(0.5, 1.0, size=nodes)
        gains.append(g)
    return WirelessSpec(
        gains=tuple(gains),
        sinr_targets=rng.uniform(0.5, 1.0, size=nodes),
        step_sizes=rng.uniform(0.3, 1.0, size=nodes),
        noise_levels=rng.uniform(0.01, 0.1, size=nodes),
    )


# -- transportation network -------------------------------------------------

TRANSPORT_LINKS = ("l12", "l23", "l31", "l32", "l34", "l43")
TRANSPORT_MODE1_ZEROED = ("l12", "l23", "l31")
TRANSPORT_MODE2_ZEROED = ("l32", "l34", "l43")
TRANSPORT_DEFAULT_TRANSITIONS = {
    "sigma1": ((0.5, 0.5), (0.6, 0.4)),
    "sigma2": ((0.8, 0.2), (0.2, 0.8)),
}


@dataclass(frozen=True)
class TransportSpec:
    """Four-buffer network data: per-mode transfer rates on six links.

    ``rates[mode]`` maps each link name in :data:`TRANSPORT_LINKS` to a
    nonnegative transfer rate; ``sampling_time`` is the discretization
    step.
    """

    rates: tuple[dict[str, float], ...]
    sampling_time: float = 0.1
    transitions: dict[str, np.ndarray] = field(
        default_factory=lambda: {a: np.array(t) for a, t in TRANSPORT_DEFAULT_TRANSITIONS.items()}
    )
    initial_mode: int = 0


def transport_continuous_matrix(rates) -> np.ndarray:
    """Continuous-time buffer dynamics for one rate assignment."""
    missing = [k for k in TRANSPORT_LINKS if k not in rates]
    if missing:
        raise ValueError(f"missing link rates {missing}")
    r = {k: float(rates[k]) for k in TRANSPORT_LINKS}
    if any(v < 0.0 for v in r.values()):
        raise ValueError("negative link rate")
    return np.array([
        [-1.0 - r["l31"], r["l12"], 0.0, 0.0],
        [0.0, 2.0 - r["l12"] - r["l32"], r["l23"], 0.0],
        [r["l31"], r["l32"], 3.0 - r["l23"] - r["l43"], r["l34"]],
        [0.0, 0.0, r["l43"], -4.0 - r["l34"]],
    ])


def build_transportation_model(
    spec: TransportSpec, euler: bool = False
) -> tuple[SwitchedLinearSystem, Mdp]:
    """Discretize the per-mode buffer dynamics.

    Zero-order hold by default (``A_d = expm(Ts A)``); ``euler`` selects
    the first-order approximation ``I + Ts A`` for comparison.  Noise
    maps are identity.
    """
    if spec.sampling_time <= 0.0:
        raise ValueError("sampling time must be positive")
    A = []
    for rates in spec.rates:
        cont = transport_continuous_matrix(rates)
        if euler:
            A.append(np.eye(4) + spec.sampling_time * cont)
        else:
            A.append(expm(spec.sampling_time * cont))
    B = [np.eye(4) for _ in spec.rates]
    actions = tuple(sorted(spec.transitions))
    mdp = Mdp(actions=actions,
              T={a: np.array(spec.transitions[a], dtype=float) for a in actions},
              initial_mode=spec.initial_mode)
    return SwitchedLinearSystem(A=tuple(A), B=tuple(B)), mdp


def default_transport_spec(active_rate: float = 1.0, sampling_time: float = 0.1) -> TransportSpec:
    """Two-mode network with the standard link masks.

    Mode 1 zeroes ``l12, l23, l31``; mode 2 zeroes ``l32, l34, l43``.
    Active links all carry ``active_rate`` (repository default)."""
    mode1 = {k: (0.0 if k in TRANSPORT_MODE1_ZEROED else active_rate) for k in TRANSPORT_LINKS}
    mode2 = {k: (0.0 if k in TRANSPORT_MODE2_ZEROED else active_rate) for k in TRANSPORT_LINKS}
    return TransportSpec(rates=(mode1, mode2), sampling_time=sampling_time)


def random_transport_spec(
    seed: int = 0,
    rate_range: tuple[float, float] = (0.5, 4.0),
    sampling_time: float = 0.1,
) -> TransportSpec:
    """Random active-link rates under the standard masks (for benchmarks)."""
    rng = np.random.default_rng(seed)
    lo, hi = rate_range
    mode1 = {k: (0.0 if k in TRANSPORT_MODE1_ZEROED else float(rng.uniform(lo, hi)))
             for k in TRANSPORT_LINKS}
    mode2 = {k: (0.0 if k in TRANSPORT_MODE2_ZEROED else float(rng.uniform(lo, hi)))
             for k in TRANSPORT_LINKS}
    return TransportSpec(rates=(mode1, mode2), sampling_time=sampling_time)
