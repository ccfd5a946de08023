"""Randomized trials that check simulated output errors against the certified bounds.

A trial draws a concrete system that exactly embeds a random abstract system,
synthesizes a certificate, and simulates the interfaced loop under a random
admissible input and disturbance. Every recorded output error is compared with
:func:`~hiersim.synthesis.error_bound`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import matkit
from .simcore import DisturbanceRealization, PiecewiseConstantSignal, check_bound, simulate
from .synthesis import (
    DisturbanceSpec,
    LinearSystem,
    RobustCertificate,
    error_bound,
    gamma_coefficients,
    simulation_value,
    synthesize,
)

@dataclass(frozen=True)
class RandomPair:
    sys1: LinearSystem
    sys2: LinearSystem
    P: np.ndarray
    Q: np.ndarray
    K: np.ndarray
    decay: float


def _skew(rng: np.random.Generator, n: int, scale: float) -> np.ndarray:
    g = rng.normal(scale=scale, size=(n, n))
    return 0.5 * (g - g.T)


def random_embeddable_pair(rng: np.random.Generator, n1: int, n2: int, p1: int, p2: int, m: int) -> RandomPair:
    """Random ``(sys1, sys2)`` with an exact embedding and a known stabilizing gain.

    In the orthonormal basis ``[P, P_perp]`` the closed loop ``A1 + B1 K`` is
    block upper-triangular with diagonal blocks ``A2`` and ``S``, both damped
    skew-symmetric, so its decay rate is the smaller damping. ``K`` is random,
    ``Q = K P`` and ``A1 = A_cl - B1 K``; then ``P A2 = A1 P + B1 Q`` and
    ``C1 P = C2`` hold exactly.
    """
    if not (1 <= n2 <= n1 and 1 <= m <= n1):
        raise ValueError("need 1 <= n2 <= n1 and 1 <= m <= n1")
    basis, _ = np.linalg.qr(rng.normal(size=(n1, n1)))
    P = basis[:, :n2]
    d2 = rng.uniform(0.2, 0.8)
    ds = rng.uniform(0.3, 1.5)
    A2 = _skew(rng, n2, 1.0) - d2 * np.eye(n2)
    block = np.zeros((n1, n1))
    block[:n2, :n2] = A2
    block[:n2, n2:] = rng.normal(scale=0.5, size=(n2, n1 - n2))
    block[n2:, n2:] = _skew(rng, n1 - n2, 1.5) - ds * np.eye(n1 - n2)
    A_cl = basis @ block @ basis.T

    B1 = rng.normal(size=(n1, p1))
    K = rng.normal(scale=0.5, size=(p1, n1))
    Q = K @ P
    A1 = A_cl - B1 @ K
    B2 = rng.normal(size=(n2, p2))
    C1 = rng.normal(size=(m, n1))
    C2 = C1 @ P
    return RandomPair(
        LinearSystem(A1, B1, C1, "concrete"), LinearSystem(A2, B2, C2, "abstract"),
        P, Q, K, min(d2, ds) if n1 > n2 else d2,
    )


def smooth_input(rng: np.random.Generator, p: int, u_max: float, n_modes: int = 3):
    """Random sum of sinusoids with ``||u(t)|| <= u_max`` for all ``t``."""
    amp = rng.uniform(0.2, 1.0, size=(p, n_modes))
    freq = rng.uniform(0.1, 2.0, size=(p, n_modes))
    phase = rng.uniform(0.0, 2 * math.pi, size=(p, n_modes))
    scale = u_max * rng.uniform(0.5, 1.0) / (amp.sum(axis=1, keepdims=True) * math.sqrt(p))
    amp = amp * scale

    def u(t: float) -> np.ndarray:
        return np.sum(amp * np.sin(freq * t + phase), axis=1)

    return u


def _ball(rng: np.random.Generator, dim: int, radius: float) -> np.ndarray:
    v = rng.normal(size=dim)
    v /= np.linalg.norm(v)
    return v * radius * rng.uniform() ** (1.0 / dim)


@dataclass
class TrialResult:
    seed: int
    kind: str
    eps: float
    max_error: float
    tol_num: float
    violations: int
    n1: int
    n2: int
    lam: float
    dt: float
    t_dwell: float = math.nan
    eps_tight: float = math.nan
    violations_tight: int = 0
    jump_excess: float = -math.inf
    events: int = 0
    max_V_ratio: float = 0.0

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.violations_tight == 0 and self.jump_excess <= 1e-9


@dataclass
class Setup:
    pair: RandomPair
    cert: RobustCertificate
    u2: object
    u2_max: float
    x1_0: np.ndarray
    x2_0: np.ndarray
    V0: float
    dt: float
    rng: np.random.Generator = field(repr=False)


def _setup(seed: int, max_n1: int = 6, max_n2: int = 3) -> Setup:
    rng = np.random.default_rng(seed)
    n1 = int(rng.integers(2, max_n1 + 1))
    n2 = int(rng.integers(1, min(max_n2, n1) + 1))
    m = int(rng.integers(1, n2 + 1))
    p1 = int(rng.integers(1, n1 + 1))
    p2 = int(rng.integers(1, 3))
    pair = random_embeddable_pair(rng, n1, n2, p1, p2, m)
    cert = synthesize(pair.sys1, pair.sys2, K=pair.K, P=pair.P, Q=pair.Q)

    u2_max = float(rng.uniform(0.1, 1.0))
    x2_0 = rng.normal(size=n2)
    x1_0 = pair.P @ x2_0 + rng.normal(scale=rng.uniform(0.0, 0.3), size=n1)
    A_cl = pair.sys1.A + pair.sys1.B @ cert.K
    dt = min(0.2 / cert.lam, 1.0 / max(matkit.spectral_norm(A_cl), 1e-12), 0.05)
    return Setup(pair, cert, smooth_input(rng, p2, u2_max), u2_max, x1_0, x2_0,
                 simulation_value(cert, x1_0, x2_0), dt, rng)


def _horizon(cert: RobustCertificate, dt: float, extra: float = 0.0) -> float:
    # At least 100 steps and several decay time constants.
    return max(100 * dt, 6.0 / cert.lam + extra)


def _snap_dt(dt: float, T: float) -> float:
    return T / math.ceil(T / dt)


def bounded_trial(seed: int) -> TrialResult:
    """One run under a random piecewise-constant disturbance inside the ``d_max`` ball."""
    s = _setup(seed)
    rng = s.rng
    B_d = rng.normal(scale=0.5, size=(s.pair.sys1.n, int(rng.integers(1, 3))))
    c_dist, _ = gamma_coefficients(s.cert.sqrtM, s.cert.lam, s.pair.sys1.B, s.cert.P, s.pair.sys2.B, s.cert.R, B_d)
    cert = replace(s.cert, c_dist=c_dist)
    d_max = float(rng.uniform(0.2, 2.0))
    T = _horizon(cert, s.dt)
    dt = _snap_dt(s.dt, T)
    hold = dt * int(rng.integers(1, 20))
    signal = PiecewiseConstantSignal.random(rng, B_d.shape[1], d_max, hold, T)
    real = DisturbanceRealization.bounded(B_d, signal)
    eps = error_bound(cert, s.V0, s.u2_max, DisturbanceSpec.bounded(d_max))
    trace = simulate(s.pair.sys1, s.pair.sys2, cert, s.u2, s.x1_0, s.x2_0, real, dt, T, eps)
    rep = check_bound(trace, eps)
    return TrialResult(seed, "bounded", eps, rep.max_error, rep.tol_num, len(rep.violations),
                       s.pair.sys1.n, s.pair.sys2.n, cert.lam, dt,
                       max_V_ratio=float(trace.V.max() / eps) if eps > 0 else 0.0)


def impulse_trial(seed: int, dwell_factor: float) -> TrialResult:
    """One run under an impulse train with gaps of at least ``dwell_factor / lam``."""
    s = _setup(seed)
    rng, cert = s.rng, s.cert
    n1 = s.pair.sys1.n
    t_dwell = dwell_factor / cert.lam
    T = _horizon(cert, s.dt, extra=6 * t_dwell)
    dt = _snap_dt(min(s.dt, t_dwell / 4), T)
    gap_steps = math.ceil(t_dwell / dt - 1e-9)
    b_max = float(rng.uniform(0.1, 1.0))

    times, vecs = [], []
    k = int(rng.integers(1, gap_steps + 1))
    while k * dt <= T:
        times.append(k * dt)
        vecs.append(_ball(rng, n1, b_max))
        k += gap_steps + int(rng.integers(0, max(1, gap_steps // 2) + 1))
    real = DisturbanceRealization(kind="impulse", B_d=np.zeros((n1, 1)), signal=None,
                                  impulse_times=tuple(times), impulse_vectors=tuple(vecs))

    spec = DisturbanceSpec.impulse(b_max, t_dwell)
    eps = error_bound(cert, s.V0, s.u2_max, spec)
    trace = simulate(s.pair.sys1, s.pair.sys2, cert, s.u2, s.x1_0, s.x2_0, real, dt, T, eps)
    rep = check_bound(trace, eps)
    jump = b_max * math.sqrt(cert.lambda_max_M)
    excess = max((e.V_plus - e.V_minus - jump for e in trace.impulse_events), default=-math.inf)

    eps_tight, v_tight = math.nan, 0
    if dwell_factor >= 1.0:
        # Dwell of at least 1/lam: the single-impulse increment with unit factor.
        eps_tight = max(s.V0, cert.c_input * s.u2_max) + jump
        v_tight = len(check_bound(trace, eps_tight).violations)

    return TrialResult(seed, "impulse", eps, rep.max_error, rep.tol_num, len(rep.violations),
                       n1, s.pair.sys2.n, cert.lam, dt, t_dwell=t_dwell,
                       eps_tight=eps_tight, violations_tight=v_tight, jump_excess=excess,
                       events=len(trace.impulse_events),
                       max_V_ratio=float(trace.V.max() / eps) if eps > 0 else 0.0)
