"""Fixed-step simulation of the interfaced two-level closed loop.

The concrete and abstract systems are integrated together with classical RK4.
The interface is re-evaluated at every RK4 stage, bounded disturbances are held
constant over each step, and impulses are applied as state jumps on grid
points.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import matkit
from .errors import GridTooCoarse, InvalidSpec, NonFinite
from .synthesis import DisturbanceSpec, LinearSystem, RobustCertificate, interface_control, simulation_value

SignalFn = Callable[[float], np.ndarray]


# ---------------------------------------------------------------- disturbances

class PiecewiseConstantSignal:
    """``d(t) = values[k]`` for ``t`` in ``[k * hold, (k + 1) * hold)``; the last value persists."""

    def __init__(self, values, hold: float):
        values = np.array(values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(1, -1)
        if values.ndim != 2 or values.shape[0] == 0:
            raise ValueError("values must be a non-empty (k, q) array")
        if not hold > 0:
            raise ValueError("hold must be positive")
        if not np.all(np.isfinite(values)):
            raise NonFinite("disturbance signal contains NaN or Inf")
        self.values = values
        self.hold = float(hold)

    def __call__(self, t: float) -> np.ndarray:
        k = int(math.floor(t / self.hold + 1e-9))
        return self.values[min(max(k, 0), len(self.values) - 1)]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def max_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    @classmethod
    def constant(cls, value) -> "PiecewiseConstantSignal":
        return cls(np.atleast_1d(np.asarray(value, dtype=float)), hold=1.0)

    @classmethod
    def random(cls, rng: np.random.Generator, q: int, d_max: float, hold: float, T: float) -> "PiecewiseConstantSignal":
        """Uniform samples from the ball ``||d|| <= d_max``, one per hold interval."""
        k = int(math.ceil(T / hold)) + 1
        direction = rng.normal(size=(k, q))
        direction /= np.maximum(np.linalg.norm(direction, axis=1, keepdims=True), 1e-300)
        radius = d_max * rng.uniform(size=(k, 1)) ** (1.0 / q)
        return cls(direction * radius, hold)

    @classmethod
    def worst_case(cls, cert: RobustCertificate, B_d, d_max: float) -> "PiecewiseConstantSignal":
        """Constant ``d_max`` along the top right-singular direction of ``sqrt(M) Bd``."""
        G = cert.sqrtM @ matkit.as_matrix(B_d, "B_d")
        _, v = matkit.sym_eig(matkit.symmetrize(G.T @ G))
        return cls.constant(d_max * v[:, -1])


@dataclass
class DisturbanceRealization:
    """A concrete disturbance signal acting on ``x1`` through ``B_d``.

    For impulses, ``impulse_vectors`` (one row per impulse) overrides the
    default jump, which is the first column of ``B_d``.
    """

    kind: str = "none"
    B_d: np.ndarray | None = None
    signal: PiecewiseConstantSignal | None = None
    impulse_times: Sequence[float] = ()
    impulse_vectors: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("none", "bounded", "impulse"):
            raise InvalidSpec(f"unknown disturbance kind {self.kind!r}")
        if self.B_d is not None:
            self.B_d = matkit.as_matrix(self.B_d, "B_d")
        if self.kind == "bounded" and (self.B_d is None or self.signal is None):
            raise InvalidSpec("bounded disturbances need B_d and a signal")
        if self.kind == "bounded" and self.signal.dim != self.B_d.shape[1]:
            raise InvalidSpec("signal dimension does not match the columns of B_d")
        times = [float(t) for t in self.impulse_times]
        if any(b < a for a, b in zip(times, times[1:])):
            raise InvalidSpec("impulse times must be ascending")
        self.impulse_times = times
        if self.kind == "impulse":
            if self.impulse_vectors is None:
                if self.B_d is None:
                    raise InvalidSpec("impulse disturbances need B_d or explicit impulse vectors")
                self.impulse_vectors = np.tile(self.B_d[:, 0], (len(times), 1))
            self.impulse_vectors = np.atleast_2d(np.asarray(self.impulse_vectors, dtype=float))
            if len(self.impulse_vectors) != len(times):
                raise InvalidSpec("one impulse vector is needed per impulse time")

    @classmethod
    def none(cls) -> "DisturbanceRealization":
        return cls("none")

    @classmethod
    def bounded(cls, B_d, signal: PiecewiseConstantSignal) -> "DisturbanceRealization":
        return cls("bounded", B_d=B_d, signal=signal)

    @classmethod
    def impulse_train(cls, B_d, period: float, T: float, first: float | None = None) -> "DisturbanceRealization":
        first = period if first is None else first
        n = int(math.floor((T - first) / period + 1e-9)) + 1 if T >= first else 0
        return cls("impulse", B_d=B_d, impulse_times=[first + i * period for i in range(n)])

    def conforms_to(self, spec: DisturbanceSpec) -> None:
        """Raise InvalidSpec if this realization breaks the assumptions of ``spec``."""
        spec.validate()
        if self.kind == "none":
            return
        if self.kind == "bounded":
            if spec.kind == "bounded" and self.signal.max_norm() > spec.d_max * (1 + 1e-12):
                raise InvalidSpec(f"signal magnitude {self.signal.max_norm():g} exceeds d_max={spec.d_max:g}")
            return
        if spec.kind == "impulse":
            norms = np.linalg.norm(self.impulse_vectors, axis=1) if len(self.impulse_times) else np.zeros(0)
            if norms.size and norms.max() > spec.b_max * (1 + 1e-12):
                raise InvalidSpec(f"impulse magnitude {norms.max():g} exceeds b_max={spec.b_max:g}")
            gaps = np.diff(self.impulse_times)
            if gaps.size and gaps.min() < spec.t_dwell - 1e-12:
                raise InvalidSpec(f"impulse gap {gaps.min():g} is below t_dwell={spec.t_dwell:g}")


# ---------------------------------------------------------------- integration

def step_rk4(f: Callable[[float, np.ndarray], np.ndarray], x, t: float, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step of ``x' = f(t, x)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    k1 = f(t, x)
    k2 = f(t + 0.5 * dt, x + (0.5 * dt) * k1)
    k3 = f(t + 0.5 * dt, x + (0.5 * dt) * k2)
    k4 = f(t + dt, x + dt * k3)
    out = x + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    if not np.all(np.isfinite(out)):
        raise NonFinite(f"state left the finite range at t={t + dt:g}")
    return out


def apply_impulse(x1, B_d) -> np.ndarray:
    x1 = np.asarray(x1, dtype=float)
    jump = np.asarray(B_d, dtype=float).reshape(-1)
    if jump.shape != x1.shape:
        raise ValueError(f"impulse of size {jump.size} does not match state of size {x1.size}")
    return x1 + jump


@dataclass
class ImpulseEvent:
    t_requested: float
    t_grid: float
    index: int
    V_minus: float
    V_plus: float

    @property
    def snap_error(self) -> float:
        return abs(self.t_grid - self.t_requested)


@dataclass
class Trace:
    t: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    V: np.ndarray
    eps: float
    impulse: np.ndarray
    impulse_events: list[ImpulseEvent] = field(default_factory=list)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    def error_norm(self) -> np.ndarray:
        return np.linalg.norm(self.y1 - self.y2, axis=1)

    def header(self) -> list[str]:
        cols = ["t"]
        for name in ("x1", "x2", "u1", "u2", "y1", "y2"):
            cols += [f"{name}_{i}" for i in range(getattr(self, name).shape[1])]
        return cols + ["V", "eps", "impulse"]

    def to_csv(self, path) -> None:
        fmt = "{:.17g}".format
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header())
            block = np.hstack([self.t[:, None], self.x1, self.x2, self.u1, self.u2, self.y1, self.y2, self.V[:, None]])
            eps = fmt(self.eps)
            for row, imp in zip(block, self.impulse):
                writer.writerow([fmt(v) for v in row] + [eps, "1" if imp else "0"])


def simulate(
    sys1: LinearSystem,
    sys2: LinearSystem,
    cert: RobustCertificate,
    u2_signal: SignalFn,
    x1_0,
    x2_0,
    realization: DisturbanceRealization | None,
    dt: float,
    T: float,
    eps: float = math.nan,
) -> Trace:
    """Integrate the interfaced loop on the grid ``t_k = k dt``, ``k = 0..round(T/dt)``.

    Impulse times are snapped to the nearest grid point; the recorded state at
    that point is the post-jump state and the pre-jump value of ``V`` is kept
    in ``Trace.impulse_events``.
    """
    realization = realization or DisturbanceRealization.none()
    limit = min(0.2 / cert.lam, 1e-2 * T)
    if not (dt > 0 and dt <= limit * (1 + 1e-12)):
        raise GridTooCoarse(f"dt={dt:g} must be positive and at most min(0.2/lambda, T/100) = {limit:g}")
    n_steps = int(round(T / dt))

    A1, B1, C1 = sys1.A, sys1.B, sys1.C
    A2, B2, C2 = sys2.A, sys2.B, sys2.C
    n1 = sys1.n
    Bd = realization.B_d

    x1 = matkit.as_matrix(x1_0, "x1_0")[:, 0]
    x2 = matkit.as_matrix(x2_0, "x2_0")[:, 0]
    if x1.size != n1 or x2.size != sys2.n:
        raise ValueError("initial states do not match the system dimensions")

    jumps: dict[int, list[tuple[float, np.ndarray]]] = {}
    if realization.kind == "impulse":
        for t_imp, vec in zip(realization.impulse_times, realization.impulse_vectors):
            k = int(round(t_imp / dt))
            if 0 <= k <= n_steps:
                jumps.setdefault(k, []).append((t_imp, vec))

    def field_(t, z, d_force):
        a, b = z[:n1], z[n1:]
        u2 = u2_signal(t)
        u1 = interface_control(cert, u2, a, b)
        da = A1 @ a + B1 @ u1
        if d_force is not None:
            da = da + d_force
        return np.concatenate([da, A2 @ b + B2 @ u2])

    N = n_steps + 1
    t_grid = np.arange(N) * dt
    X1 = np.empty((N, n1))
    X2 = np.empty((N, sys2.n))
    U1 = np.empty((N, sys1.p))
    U2 = np.empty((N, sys2.p))
    Vs = np.empty(N)
    impulse_flags = np.zeros(N, dtype=bool)
    events: list[ImpulseEvent] = []

    z = np.concatenate([x1, x2])
    for k in range(N):
        t = float(t_grid[k])
        if k in jumps:
            for t_req, vec in jumps[k]:
                v_minus = simulation_value(cert, z[:n1], z[n1:])
                z[:n1] = apply_impulse(z[:n1], vec)
                events.append(ImpulseEvent(t_req, t, k, v_minus, simulation_value(cert, z[:n1], z[n1:])))
            impulse_flags[k] = True
        a, b = z[:n1], z[n1:]
        u2 = np.asarray(u2_signal(t), dtype=float)
        X1[k], X2[k], U2[k] = a, b, u2
        U1[k] = interface_control(cert, u2, a, b)
        Vs[k] = simulation_value(cert, a, b)
        if k == n_steps:
            break
        d_force = Bd @ realization.signal(t) if realization.kind == "bounded" else None
        z = step_rk4(lambda tt, zz: field_(tt, zz, d_force), z, t, dt)

    return Trace(
        t=t_grid, x1=X1, x2=X2, u1=U1, u2=U2, y1=X1 @ C1.T, y2=X2 @ C2.T, V=Vs,
        eps=float(eps), impulse=impulse_flags, impulse_events=events,
    )


@dataclass
class BoundReport:
    eps: float
    tol_num: float
    max_error: float
    violations: list[tuple[float, float]]

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def margin(self) -> float:
        return self.eps - self.max_error


def check_bound(trace: Trace, eps: float) -> BoundReport:
    """Grid times where ``||y1 - y2|| > eps + 1e-6 + 10 dt^2``."""
    err = trace.error_norm()
    tol = 1e-6 + 10.0 * trace.dt ** 2
    bad = np.flatnonzero(err > eps + tol)
    return BoundReport(
        eps=float(eps),
        tol_num=tol,
        max_error=float(err.max()) if err.size else 0.0,
        violations=[(float(trace.t[i]), float(err[i])) for i in bad],
    )
