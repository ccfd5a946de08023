"""Robust simulation certificates between a concrete and an abstract linear system.

The concrete system ``x1' = A1 x1 + B1 u1 + Bd d`` is driven through the
interface ``u1 = R u2 + Q x2 + K (x1 - P x2)`` so that its output tracks the
abstract system ``x2' = A2 x2 + B2 u2``. The certificate packages the Lyapunov
data ``(M, lambda)`` and the embedding ``(P, Q, R)`` that make

    V(x1, x2) = sqrt((x1 - P x2)^T M (x1 - P x2))

an upper bound on ``||y1 - y2||`` that decays whenever the abstract input and
the disturbance are small relative to ``V``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import matkit
from .errors import (
    DecayTooLarge,
    InvalidSpec,
    NoExactEmbedding,
    NotHurwitz,
    NotStabilizable,
    ScenarioError,
)

CERT_SCHEMA = "hiersim-cert-1"

RICCATI_STEP = 1e-3
RICCATI_TOL = 1e-10
RICCATI_MAX_TRACE = 1e8
RICCATI_MAX_STEPS = 2_000_000
M_REGULARIZER = 1e-6
LAMBDA_SAFETY = 0.9
INVARIANT_TOL = 1e-8


def _frozen(a) -> np.ndarray:
    arr = matkit.as_matrix(a).copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LinearSystem:
    """``x' = A x + B u``, ``y = C x``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    role: str = "concrete"

    def __post_init__(self):
        A, B, C = (_frozen(getattr(self, k)) for k in "ABC")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise ValueError(f"B must have {n} rows, got {B.shape}")
        if C.shape[1] != n:
            raise ValueError(f"C must have {n} columns, got {C.shape}")
        if self.role not in ("concrete", "abstract"):
            raise ValueError(f"role must be 'concrete' or 'abstract', not {self.role!r}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def m(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class RobustCertificate:
    """Everything needed to evaluate ``V``, the interface, and the error bounds.

    ``c_dist`` and ``c_input`` are the slopes of the linear class-K gains for
    the disturbance and the abstract input: ``||sqrt(M) Bd|| / lambda`` and
    ``||sqrt(M) (B1 R - P B2)|| / lambda``.
    """

    K: np.ndarray
    lam: float
    M: np.ndarray
    sqrtM: np.ndarray
    lambda_max_M: float
    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    c_dist: float = 0.0
    c_input: float = 0.0

    def __post_init__(self):
        for name in ("K", "M", "sqrtM", "P", "Q", "R"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        for name in ("lam", "lambda_max_M", "c_dist", "c_input"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.lam > 0:
            raise ValueError("lambda must be positive")

    def to_dict(self) -> dict:
        return {
            "schema": CERT_SCHEMA,
            "K": self.K.tolist(),
            "lambda": self.lam,
            "M": self.M.tolist(),
            "sqrtM": self.sqrtM.tolist(),
            "lambda_max_M": self.lambda_max_M,
            "P": self.P.tolist(),
            "Q": self.Q.tolist(),
            "R": self.R.tolist(),
            "c_dist": self.c_dist,
            "c_input": self.c_input,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RobustCertificate":
        if doc.get("schema") != CERT_SCHEMA:
            raise ScenarioError(f"certificate schema must be {CERT_SCHEMA!r}, got {doc.get('schema')!r}")
        try:
            return cls(
                K=doc["K"], lam=doc["lambda"], M=doc["M"], sqrtM=doc["sqrtM"],
                lambda_max_M=doc["lambda_max_M"], P=doc["P"], Q=doc["Q"], R=doc["R"],
                c_dist=doc["c_dist"], c_input=doc["c_input"],
            )
        except KeyError as exc:
            raise ScenarioError(f"certificate is missing field {exc}") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RobustCertificate":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class DisturbanceSpec:
    """What the bound is allowed to assume about the disturbance."""

    kind: str = "none"
    d_max: float = 0.0
    b_max: float = 0.0
    t_dwell: float | None = None

    @classmethod
    def none(cls) -> "DisturbanceSpec":
        return cls("none")

    @classmethod
    def bounded(cls, d_max: float) -> "DisturbanceSpec":
        return cls("bounded", d_max=d_max)

    @classmethod
    def impulse(cls, b_max: float, t_dwell: float) -> "DisturbanceSpec":
        return cls("impulse", b_max=b_max, t_dwell=t_dwell)

    def validate(self) -> None:
        if self.kind not in ("none", "bounded", "impulse"):
            raise InvalidSpec(f"unknown disturbance kind {self.kind!r}")
        if not (self.d_max >= 0 and self.b_max >= 0):
            raise InvalidSpec("d_max and b_max must be non-negative")
        if self.kind == "impulse" and not (self.t_dwell is not None and self.t_dwell > 0):
            raise InvalidSpec("impulse disturbances need a positive dwell time")


# ---------------------------------------------------------------- synthesis steps

def closed_loop(sys1: LinearSystem, K) -> np.ndarray:
    return sys1.A + sys1.B @ matkit.as_matrix(K, "K")


def compute_gain(sys1: LinearSystem, state_weight, input_weight) -> np.ndarray:
    """LQR gain from the steady state of the Riccati differential equation.

    The equation ``dX/dtau = A^T X + X A - X B Rw^-1 B^T X + Qw`` is integrated
    from ``X = 0`` with RK4 steps of ``1e-3`` until successive iterates differ
    by less than ``1e-10`` (max-abs), and ``K = -Rw^-1 B^T X``.

    Raises
    ------
    NotStabilizable
        If the trace of ``X`` exceeds ``1e8``, the iteration does not settle,
        or ``A + B K`` fails the Hurwitz test.
    """
    A, B = sys1.A, sys1.B
    qw = matkit.as_matrix(state_weight, "state_weight")
    rw = matkit.as_matrix(input_weight, "input_weight")
    matkit.check_symmetric(qw, "state_weight")
    matkit.check_symmetric(rw, "input_weight")
    if qw.shape != A.shape or rw.shape != (B.shape[1], B.shape[1]):
        raise ValueError("weight dimensions do not match the system")
    rinv_bt = matkit.gauss_solve(rw, B.T)
    S = B @ rinv_bt
    h = RICCATI_STEP

    def rhs(x):
        xa = x @ A
        return xa.T + xa - x @ S @ x + qw

    x = np.zeros_like(A)
    for step in range(RICCATI_MAX_STEPS):
        k1 = rhs(x)
        k2 = rhs(x + (0.5 * h) * k1)
        k3 = rhs(x + (0.5 * h) * k2)
        k4 = rhs(x + h * k3)
        x_next = x + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        if step % 64 == 0:
            x_next = 0.5 * (x_next + x_next.T)
            if not np.all(np.isfinite(x_next)) or np.trace(x_next) > RICCATI_MAX_TRACE:
                raise NotStabilizable("Riccati iterate diverged; (A1, B1) is likely not stabilizable")
        if np.abs(x_next - x).max() < RICCATI_TOL:
            x = x_next
            break
        x = x_next
    else:
        raise NotStabilizable(f"Riccati iteration did not settle within {RICCATI_MAX_STEPS} steps")

    x = 0.5 * (x + x.T)
    K = -rinv_bt @ x
    if not matkit.is_hurwitz(A + B @ K):
        raise NotStabilizable("LQR closed loop A1 + B1 K is not Hurwitz")
    return K


def max_decay_rate(A_cl, upper: float = 1e3, width: float = 1e-6) -> float:
    """Largest ``lam`` with ``A_cl + lam I`` Hurwitz, by bisection on ``[0, upper]``.

    The returned value is the lower end of the final bracket, so it is itself a
    verified Hurwitz shift.
    """
    A_cl = matkit.as_matrix(A_cl, "A_cl")
    if not matkit.is_hurwitz(A_cl):
        raise NotHurwitz("closed-loop matrix is not Hurwitz")
    eye = np.eye(A_cl.shape[0])
    lo, hi = 0.0, float(upper)
    if matkit.is_hurwitz(A_cl + hi * eye):
        return hi
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if matkit.is_hurwitz(A_cl + mid * eye):
            lo = mid
        else:
            hi = mid
    return lo


def compute_M(sys1: LinearSystem, K, lam: float) -> tuple[np.ndarray, float]:
    """Lyapunov matrix satisfying ``M >= C1^T C1`` and the ``2 lam`` decay LMI.

    ``M0`` solves ``(A_cl + lam I)^T M0 + M0 (A_cl + lam I) = -(C1^T C1 + 1e-6 I)``
    and is scaled by ``max(1, lambda_max(M0^-1/2 C1^T C1 M0^-1/2))``.
    """
    A_cl = closed_loop(sys1, K)
    n = sys1.n
    eye = np.eye(n)
    if not lam > 0 or not matkit.is_hurwitz(A_cl + (lam / 0.99) * eye):
        raise DecayTooLarge(
            f"lambda={lam:g} is not below 99% of the closed-loop decay rate; "
            "reduce lambda or choose a faster gain K"
        )
    ctc = sys1.C.T @ sys1.C
    M0 = matkit.solve_lyapunov(A_cl + lam * eye, matkit.symmetrize(ctc) + M_REGULARIZER * eye)
    r = matkit.inv_sqrtm_spd(M0)
    alpha = max(1.0, matkit.max_eig(matkit.symmetrize(r @ ctc @ r)))
    M = alpha * M0
    return M, matkit.max_eig(M)


def solve_PQ(sys1: LinearSystem, sys2: LinearSystem) -> tuple[np.ndarray, np.ndarray]:
    """Minimum-norm ``(P, Q)`` with ``P A2 = A1 P + B1 Q`` and ``C1 P = C2``.

    Both equations are stacked as one linear system in ``vec(P), vec(Q)``
    (row-major) and solved by least squares.

    Raises
    ------
    NoExactEmbedding
        If the combined residual exceeds ``1e-8 (1 + ||A2|| + ||C2||)``.
    """
    if sys1.m != sys2.m:
        raise ValueError(f"output dimensions differ: {sys1.m} vs {sys2.m}")
    A1, B1, C1 = sys1.A, sys1.B, sys1.C
    A2, C2 = sys2.A, sys2.C
    n1, p1, n2, m = sys1.n, sys1.p, sys2.n, sys1.m
    # vec_r(X Y Z) = (X kron Z^T) vec_r(Y)
    eye1, eye2 = np.eye(n1), np.eye(n2)
    dyn_P = np.kron(eye1, A2.T) - np.kron(A1, eye2)
    dyn_Q = -np.kron(B1, eye2)
    out_P = np.kron(C1, eye2)
    out_Q = np.zeros((m * n2, p1 * n2))
    lhs = np.block([[dyn_P, dyn_Q], [out_P, out_Q]])
    rhs = np.concatenate([np.zeros(n1 * n2), C2.reshape(-1)])
    sol = matkit.least_squares(lhs, rhs)
    P = sol[: n1 * n2].reshape(n1, n2)
    Q = sol[n1 * n2:].reshape(p1, n2)
    residual = math.hypot(
        float(np.linalg.norm(P @ A2 - A1 @ P - B1 @ Q)),
        float(np.linalg.norm(C1 @ P - C2)),
    )
    tol = INVARIANT_TOL * (1 + matkit.spectral_norm(A2) + matkit.spectral_norm(C2))
    if residual > tol:
        raise NoExactEmbedding(
            f"no P, Q satisfy P A2 = A1 P + B1 Q and C1 P = C2 (residual {residual:.3e}); "
            "the abstract output is not reachable through the concrete system"
        )
    return P, Q


def compute_R(sqrtM, B1, P, B2) -> np.ndarray:
    """Feedforward ``R`` minimizing ``||sqrt(M) (B1 R - P B2)||_F``."""
    sqrtM = matkit.as_matrix(sqrtM, "sqrtM")
    return matkit.least_squares(sqrtM @ matkit.as_matrix(B1), sqrtM @ matkit.as_matrix(P) @ matkit.as_matrix(B2))


def gamma_coefficients(sqrtM, lam: float, B1, P, B2, R, disturbance=None) -> tuple[float, float]:
    """Slopes ``(c_dist, c_input)`` of the linear class-K gains.

    ``disturbance`` is either the disturbance map ``Bd`` (a matrix), a scalar
    bound ``b_max`` on ``||Bd||`` (giving the upper bound
    ``b_max ||sqrt(M)|| / lam``), or None for no disturbance channel.
    Impulse bounds do not use ``c_dist``.
    """
    sqrtM = matkit.as_matrix(sqrtM, "sqrtM")
    mismatch = matkit.as_matrix(B1) @ matkit.as_matrix(R) - matkit.as_matrix(P) @ matkit.as_matrix(B2)
    c_input = matkit.spectral_norm(sqrtM @ mismatch) / lam
    if disturbance is None:
        c_dist = 0.0
    elif np.ndim(disturbance) == 0:
        c_dist = float(disturbance) * matkit.spectral_norm(sqrtM) / lam
    else:
        c_dist = matkit.spectral_norm(sqrtM @ matkit.as_matrix(disturbance, "B_d")) / lam
    return c_dist, c_input


def synthesize(
    sys1: LinearSystem,
    sys2: LinearSystem,
    *,
    K=None,
    lam: float | None = None,
    state_weight=None,
    input_weight=None,
    B_d=None,
    P=None,
    Q=None,
    R=None,
) -> RobustCertificate:
    """Run the whole construction and return a certificate.

    ``K`` defaults to the LQR gain for the given weights (identity weights if
    none are given). ``lam`` is capped at ``0.9`` times the closed-loop decay
    rate. ``P``, ``Q`` and ``R`` overrides are taken as given; check the result
    with :func:`verify_certificate` before trusting it.
    """
    if K is None:
        sw = np.eye(sys1.n) if state_weight is None else state_weight
        iw = np.eye(sys1.p) if input_weight is None else input_weight
        K = compute_gain(sys1, sw, iw)
    K = matkit.as_matrix(K, "K")
    if K.shape != (sys1.p, sys1.n):
        raise ValueError(f"K must have shape {(sys1.p, sys1.n)}, got {K.shape}")
    A_cl = closed_loop(sys1, K)
    if not matkit.is_hurwitz(A_cl):
        raise NotStabilizable("A1 + B1 K is not Hurwitz for the supplied K")
    cap = LAMBDA_SAFETY * max_decay_rate(A_cl)
    lam = cap if lam is None else min(float(lam), cap)

    M, lambda_max_M = compute_M(sys1, K, lam)
    sqrtM = matkit.sqrtm_spd(M)
    if P is None or Q is None:
        P_ls, Q_ls = solve_PQ(sys1, sys2)
        P = P_ls if P is None else P
        Q = Q_ls if Q is None else Q
    if R is None:
        R = compute_R(sqrtM, sys1.B, P, sys2.B)
    c_dist, c_input = gamma_coefficients(sqrtM, lam, sys1.B, P, sys2.B, R, B_d)
    return RobustCertificate(
        K=K, lam=lam, M=M, sqrtM=sqrtM, lambda_max_M=lambda_max_M,
        P=P, Q=Q, R=R, c_dist=c_dist, c_input=c_input,
    )


# ---------------------------------------------------------------- evaluation

def simulation_value(cert: RobustCertificate, x1, x2) -> float:
    e = np.asarray(x1, dtype=float) - cert.P @ np.asarray(x2, dtype=float)
    return math.sqrt(max(0.0, float(e @ cert.M @ e)))


def interface_control(cert: RobustCertificate, u2, x1, x2) -> np.ndarray:
    x2 = np.asarray(x2, dtype=float)
    return cert.R @ np.asarray(u2, dtype=float) + cert.Q @ x2 + cert.K @ (np.asarray(x1, dtype=float) - cert.P @ x2)


def impulse_factor(t_dwell: float, lam: float) -> float:
    return max(1.0, 1.0 / (t_dwell * lam))


def error_bound(cert: RobustCertificate, V0: float, u2_max: float, spec: DisturbanceSpec) -> float:
    """Certified bound on ``sup_t ||y1(t) - y2(t)||``.

    - none:     ``max(V0, c_input u2_max)``
    - bounded:  ``max(V0, c_dist d_max + c_input u2_max)``
    - impulse:  ``max(V0, c_input u2_max) + max(1, 1/(t_dwell lam)) b_max sqrt(lambda_max_M)``
    """
    spec.validate()
    if not (V0 >= 0 and u2_max >= 0):
        raise InvalidSpec("V0 and u2_max must be non-negative and finite")
    if not (math.isfinite(V0) and math.isfinite(u2_max)):
        raise InvalidSpec("V0 and u2_max must be finite")
    input_term = cert.c_input * u2_max
    if spec.kind == "none":
        return max(V0, input_term)
    if spec.kind == "bounded":
        return max(V0, cert.c_dist * spec.d_max + input_term)
    jump = spec.b_max * math.sqrt(cert.lambda_max_M)
    return max(V0, input_term) + impulse_factor(spec.t_dwell, cert.lam) * jump


def impulse_series_limit(t_dwell_lambda: float, tol: float = 1e-12, max_iter: int = 10_000_000) -> float:
    """Limit of ``X_1 = 1, X_{i+1} = (1 - x) X_i + 1`` for ``x = t_dwell * lam`` in (0, 1]."""
    x = float(t_dwell_lambda)
    if not 0.0 < x <= 1.0:
        raise ValueError("t_dwell * lambda must lie in (0, 1]")
    X = 1.0
    for _ in range(max_iter):
        X_next = X + 1.0 - x * X
        if abs(X_next - X) < tol:
            return X_next
        X = X_next
    return X


# ---------------------------------------------------------------- verification

@dataclass
class CheckResult:
    passed: bool
    margin: float
    detail: str = ""


@dataclass
class VerificationReport:
    checks: dict[str, CheckResult] = field(default_factory=dict)
    n_samples: int = 0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failures(self) -> list[str]:
        return [name for name, c in self.checks.items() if not c.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "n_samples": self.n_samples,
            "checks": {
                k: {"passed": c.passed, "margin": c.margin, "detail": c.detail} for k, c in self.checks.items()
            },
        }

    def summary(self) -> str:
        lines = []
        for name, c in self.checks.items():
            lines.append(f"  {'ok  ' if c.passed else 'FAIL'} {name:<20} margin={c.margin:+.3e} {c.detail}")
        return "\n".join(lines)


def verify_certificate(
    cert: RobustCertificate,
    sys1: LinearSystem,
    sys2: LinearSystem,
    n_samples: int = 1000,
    rng_seed: int = 0,
    B_d=None,
) -> VerificationReport:
    """Check the matrix conditions and sample the decrease condition.

    Margins are signed so that a non-negative margin always means the check
    passed with that much room.
    """
    report = VerificationReport(n_samples=n_samples)
    checks = report.checks
    M, K, P, Q, R = cert.M, cert.K, cert.P, cert.Q, cert.R
    A1, B1, C1 = sys1.A, sys1.B, sys1.C
    A2, B2, C2 = sys2.A, sys2.B, sys2.C
    try:
        A_cl = A1 + B1 @ K
        shapes_ok = M.shape == (sys1.n, sys1.n) and P.shape == (sys1.n, sys2.n) and Q.shape == (sys1.p, sys2.n)
        shapes_ok = shapes_ok and R.shape == (sys1.p, sys2.p)
    except ValueError:
        shapes_ok = False
    if not shapes_ok:
        checks["dimensions"] = CheckResult(False, -math.inf, "certificate does not match the systems")
        return report

    eig_out = matkit.min_eig(matkit.symmetrize(M - C1.T @ C1))
    checks["output_bound"] = CheckResult(eig_out >= -INVARIANT_TOL, eig_out + INVARIANT_TOL,
                                         f"lambda_min(M - C1^T C1) = {eig_out:.3e}")
    lmi = A_cl.T @ M + M @ A_cl + 2.0 * cert.lam * M
    eig_dec = matkit.max_eig(matkit.symmetrize(lmi))
    checks["decay"] = CheckResult(eig_dec <= INVARIANT_TOL, INVARIANT_TOL - eig_dec,
                                  f"lambda_max(A_cl^T M + M A_cl + 2 lam M) = {eig_dec:.3e}")
    res_dyn = float(np.linalg.norm(P @ A2 - A1 @ P - B1 @ Q))
    checks["embedding_dynamics"] = CheckResult(res_dyn <= INVARIANT_TOL, INVARIANT_TOL - res_dyn,
                                               f"||P A2 - A1 P - B1 Q||_F = {res_dyn:.3e}")
    res_out = float(np.linalg.norm(C1 @ P - C2))
    checks["embedding_output"] = CheckResult(res_out <= INVARIANT_TOL, INVARIANT_TOL - res_out,
                                             f"||C1 P - C2||_F = {res_out:.3e}")
    lmax = matkit.max_eig(matkit.symmetrize(M))
    tol_l = 1e-9 * (1 + abs(lmax))
    checks["lambda_max_M"] = CheckResult(abs(lmax - cert.lambda_max_M) <= tol_l,
                                         tol_l - abs(lmax - cert.lambda_max_M))
    sq_res = float(np.linalg.norm(cert.sqrtM @ cert.sqrtM - M))
    tol_s = 1e-9 * (1 + matkit.spectral_norm(M))
    checks["sqrtM"] = CheckResult(sq_res <= tol_s, tol_s - sq_res)

    c_dist_ref, c_input_ref = gamma_coefficients(cert.sqrtM, cert.lam, B1, P, B2, R, B_d)
    gap = cert.c_input - c_input_ref
    checks["gamma_input"] = CheckResult(gap >= -1e-9 * (1 + c_input_ref), gap,
                                        "c_input must not undercut ||sqrt(M)(B1 R - P B2)|| / lam")
    if B_d is not None:
        gap = cert.c_dist - c_dist_ref
        checks["gamma_dist"] = CheckResult(gap >= -1e-9 * (1 + c_dist_ref), gap,
                                           "c_dist must not undercut ||sqrt(M) Bd|| / lam")

    checks["decrease"] = _sample_decrease(cert, sys1, sys2, n_samples, rng_seed, B_d, c_dist_ref, c_input_ref)
    return report


def _sample_decrease(cert, sys1, sys2, n_samples, rng_seed, B_d, c_dist, c_input) -> CheckResult:
    if n_samples <= 0:
        return CheckResult(True, 0.0, "no samples requested")
    rng = np.random.default_rng(rng_seed)
    Bd = None if B_d is None else matkit.as_matrix(B_d, "B_d")
    M, P = cert.M, cert.P
    worst = -math.inf
    violations = 0
    for _ in range(n_samples):
        x2 = rng.normal(size=sys2.n) * 10.0 ** rng.uniform(-1, 1)
        u2 = rng.normal(size=sys2.p) * 10.0 ** rng.uniform(-2, 1)
        g = c_input * float(np.linalg.norm(u2))
        d = None
        if Bd is not None:
            d = rng.normal(size=Bd.shape[1]) * 10.0 ** rng.uniform(-2, 1)
            g += c_dist * float(np.linalg.norm(d))
        e = rng.normal(size=sys1.n)
        e_norm = math.sqrt(float(e @ M @ e))
        if e_norm == 0.0:
            continue
        target = (g / (1.0 - 1e-3)) * (1.0 + rng.exponential(1.0)) if g > 0 else 10.0 ** rng.uniform(-2, 1)
        x1 = P @ x2 + e * (target / e_norm)
        u1 = interface_control(cert, u2, x1, x2)
        x1_dot = sys1.A @ x1 + sys1.B @ u1
        if d is not None:
            x1_dot = x1_dot + Bd @ d
        x2_dot = sys2.A @ x2 + sys2.B @ u2
        err = x1 - P @ x2
        V = math.sqrt(float(err @ M @ err))
        dV = float(err @ M @ (x1_dot - P @ x2_dot)) / V
        rel = dV / V
        worst = max(worst, rel)
        if not dV < 0:
            violations += 1
    return CheckResult(violations == 0, -worst, f"{violations} of {n_samples} samples failed dV/dt < 0 "
                                                f"(worst dV/V = {worst:.3e})")
