"""Closed-form machinery for linear systems.

Regulator Sylvester solve, PBH tests, Rosenbrock nonresonance ranks,
augmented-pair detectability, a discrete Riccati solver, the suboptimality
constants (epsilon_o, c_o) and the horizon bounds built from them.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .augmentation import augment_linear, cyclic_matrices
from .errors import (DegenerateSystemError, DetectabilityError, DomainError,
                     NumericalError, ObservabilityError, ResonanceError,
                     ShapeError, StabilityError)
from .models import LinearSystem

Array = np.ndarray


def rank_tolerance(svals, dim):
    """Singular-value threshold: max-dim * eps * largest-sv * 1e3."""
    smax = float(svals[0]) if len(svals) else 0.0
    return dim * np.finfo(float).eps * max(smax, 1.0) * 1e3


def _min_singular_value(M):
    svals = np.linalg.svd(M, compute_uv=False)
    return float(svals[-1]), rank_tolerance(svals, max(M.shape))


# ---------------------------------------------------------------------------
# regulator equations

@dataclass(frozen=True)
class RegulatorSolution:
    """Pi, Gamma with Pi S = A Pi + B Gamma + P_x and C Pi + D Gamma = P_y."""

    Pi: Array
    Gamma: Array

    def __post_init__(self):
        object.__setattr__(self, "Pi", np.atleast_2d(np.asarray(self.Pi, dtype=float)))
        object.__setattr__(self, "Gamma", np.atleast_2d(np.asarray(self.Gamma, dtype=float)))

    def pi_x(self, w):
        return self.Pi @ np.asarray(w, dtype=float)

    def pi_u(self, w):
        return self.Gamma @ np.asarray(w, dtype=float)


def regulator_residuals(sys: LinearSystem, reg: RegulatorSolution):
    r_dyn = reg.Pi @ sys.S - (sys.A @ reg.Pi + sys.B @ reg.Gamma + sys.P_x)
    r_out = sys.C @ reg.Pi + sys.D @ reg.Gamma - sys.P_y
    return float(np.linalg.norm(r_dyn)), float(np.linalg.norm(r_out))


def solve_regulator(sys: LinearSystem) -> RegulatorSolution:
    """Solve the linear regulator equations by Kronecker lifting."""
    n, m, p, q = sys.n_p, sys.m, sys.p, sys.q
    if q == 0:
        return RegulatorSolution(Pi=np.zeros((n, 0)), Gamma=np.zeros((m, 0)))
    Iq = np.eye(q)
    # unknowns z = [vec(Pi); vec(Gamma)], column-major vec
    top = np.hstack([np.kron(sys.S.T, np.eye(n)) - np.kron(Iq, sys.A), -np.kron(Iq, sys.B)])
    bot = np.hstack([np.kron(Iq, sys.C), np.kron(Iq, sys.D)])
    M = np.vstack([top, bot])
    rhs = np.concatenate([sys.P_x.flatten(order="F"), sys.P_y.flatten(order="F")])
    z, _, rank, svals = np.linalg.lstsq(M, rhs, rcond=None)
    if rank < n * q + m * q or np.linalg.norm(M @ z - rhs) > 1e-8 * max(1.0, np.linalg.norm(rhs)):
        lam = _closest_resonant_eigenvalue(sys)
        raise ResonanceError(
            f"regulator equations are rank deficient; eigenvalue {lam} of S "
            f"is (near) a transmission zero")
    Pi = z[:n * q].reshape((n, q), order="F")
    Gamma = z[n * q:].reshape((m, q), order="F")
    return RegulatorSolution(Pi=Pi, Gamma=Gamma)


def _closest_resonant_eigenvalue(sys):
    lams = np.linalg.eigvals(sys.S)
    worst, smin_worst = None, np.inf
    for lam in lams:
        smin, _ = _min_singular_value(rosenbrock(sys, lam))
        if smin < smin_worst:
            worst, smin_worst = lam, smin
    return worst


# ---------------------------------------------------------------------------
# Rosenbrock matrix, nonresonance, PBH

def rosenbrock(sys: LinearSystem, lam):
    """G(lambda) = [[A - lambda I, B], [C, D]]."""
    n = sys.n_p
    top = np.hstack([sys.A.astype(complex) - lam * np.eye(n), sys.B.astype(complex)])
    bot = np.hstack([sys.C.astype(complex), sys.D.astype(complex)])
    return np.vstack([top, bot])


@dataclass(frozen=True)
class NonresonanceEntry:
    k: int
    lam: complex
    smin: float
    passed: bool


@dataclass(frozen=True)
class NonresonanceReport:
    T: int
    entries: tuple
    passed: bool


def nonresonance(sys: LinearSystem, T: int) -> NonresonanceReport:
    """Rank of G at every T-th root of unity; full rank at all of them passes."""
    if sys.m != sys.p:
        raise ShapeError(f"nonresonance test needs a square system, got m={sys.m}, p={sys.p}")
    if T < 1:
        raise DomainError("period T must be >= 1")
    entries = []
    for k in range(T):
        lam = complex(np.exp(2j * np.pi * k / T))
        smin, tol = _min_singular_value(rosenbrock(sys, lam))
        entries.append(NonresonanceEntry(k=k, lam=lam, smin=smin, passed=smin > tol))
    return NonresonanceReport(T=T, entries=tuple(entries), passed=all(e.passed for e in entries))


def _pbh(A, M, stack_rows):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) < 1.0 - 1e-9:
            continue
        shifted = A - lam * np.eye(n)
        block = np.vstack([shifted, M.astype(complex)]) if stack_rows else np.hstack([shifted, M.astype(complex)])
        smin, tol = _min_singular_value(block)
        if smin <= tol:
            return False
    return True


def pbh_detectable(A, C) -> bool:
    """rank [A - lam I; C] = n at every eigenvalue with |lam| >= 1."""
    return _pbh(A, C, stack_rows=True)


def pbh_stabilizable(A, B) -> bool:
    """rank [A - lam I, B] = n at every eigenvalue with |lam| >= 1."""
    return _pbh(A, B, stack_rows=False)


def augmented_pair(sys: LinearSystem, T: int):
    """(A_a, C_a), PBH verdict, and the nonresonance-based prediction."""
    if sys.m != sys.p:
        raise ShapeError("augmented-pair test needs a square system")
    m = sys.m
    E0, _, E2 = cyclic_matrices(m, T)
    n, mT = sys.n_p, m * T
    A_a = np.block([[sys.A, sys.B @ E2.T], [np.zeros((mT, n)), E0]])
    C_a = np.block([[sys.C, sys.D @ E2.T], [np.zeros((sys.p, n)), np.zeros((sys.p, mT))]])
    verdict = pbh_detectable(A_a, C_a)
    predicted = pbh_detectable(sys.A, sys.C) and nonresonance(sys, T).passed
    return A_a, C_a, verdict, predicted


# ---------------------------------------------------------------------------
# Riccati machinery

@dataclass(frozen=True)
class QuadraticCertificate:
    P: Array
    role: str   # detectability_W | stabilizability_metric | ioss

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        P = 0.5 * (P + P.T)
        object.__setattr__(self, "P", P)
        lam_min = float(np.linalg.eigvalsh(P)[0]) if P.size else 0.0
        if lam_min < -1e-9 * max(1.0, float(np.linalg.norm(P))):
            raise DomainError(f"certificate matrix is not PSD (lambda_min = {lam_min})")


def dare(A, B, Q, R, S=None, tol=1e-12, max_iter=100_000):
    """Stabilizing DARE solution by fixed-point iteration of the recursion.

    With the cross term S: P = Q + A'PA - (A'PB + S)(R + B'PB)^-1 (B'PA + S').
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n, m = B.shape
    S = np.zeros((n, m)) if S is None else np.atleast_2d(np.asarray(S, dtype=float))
    P = Q.copy()
    for _ in range(max_iter):
        G = R + B.T @ P @ B
        try:
            K = -np.linalg.solve(G, B.T @ P @ A + S.T)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("singular input-curvature block in Riccati recursion") from exc
        P_next = Q + A.T @ P @ A + (A.T @ P @ B + S) @ K
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)):
            raise NumericalError("Riccati recursion diverged")
        if np.max(np.abs(P_next - P)) <= tol * max(1.0, float(np.max(np.abs(P_next)))):
            return QuadraticCertificate(P=P_next, role="stabilizability_metric")
        P = P_next
    raise NumericalError(f"Riccati recursion did not converge in {max_iter} iterations")


def lqr_gain(A, B, Q, R, S=None, **kw):
    """(K, P) with u = Kx minimizing the (cross-term) quadratic cost."""
    cert = dare(A, B, Q, R, S=S, **kw)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n, m = B.shape
    S = np.zeros((n, m)) if S is None else np.atleast_2d(np.asarray(S, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P = cert.P
    K = -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A + S.T)
    return K, cert


def stage_cost_forms(sys: LinearSystem, Q, R):
    """Quadratic forms (Mxx, Mxu, Muu) of ||Cx + Du||_Q^2 + ||u||_R^2."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    Mxx = sys.C.T @ Q @ sys.C
    Mxu = sys.C.T @ Q @ sys.D
    Muu = sys.D.T @ Q @ sys.D + R
    return Mxx, Mxu, Muu


def sigma_metric_dare(sys: LinearSystem, Q, R) -> QuadraticCertificate:
    """LQR Riccati metric with the feedthrough folded into the input weight.

    Output weight C'QC, input weight R + D'QD, no cross coupling.  This is
    the metric against which the reported suboptimality constants are
    normalized.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    return dare(sys.A, sys.B, sys.C.T @ Q @ sys.C, R + sys.D.T @ Q @ sys.D)


def gen_eig_range(M, P):
    """(min, max) generalized eigenvalues of (M, P) with P > 0, via whitening."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("metric is not positive definite") from exc
    Li = np.linalg.inv(L)
    vals = np.linalg.eigvalsh(Li @ M @ Li.T)
    return float(vals[0]), float(vals[-1])


def epsilon_o_generalized_eig(sys: LinearSystem, Q, R,
                              sigma_metric: QuadraticCertificate) -> float:
    """Stage-cost margin over the sigma metric along the optimal feedback.

    epsilon_o = min_x l(x, Kx) / ||x||_P^2 with K the LQR gain of the stage
    cost (cross terms included) and P the supplied metric; this is the
    smallest generalized eigenvalue of the closed-loop cost form against P.
    """
    Mxx, Mxu, Muu = stage_cost_forms(sys, Q, R)
    n, m = sys.n_p, sys.m
    if m == 0:
        closed = Mxx
    else:
        lam = np.linalg.eigvalsh(Muu)
        if lam[0] <= 0.0:
            raise NumericalError("input block of the stage cost is singular")
        K, _ = lqr_gain(sys.A, sys.B, Mxx, Muu, S=Mxu)
        F = np.vstack([np.eye(n), K])
        M = np.block([[Mxx, Mxu], [Mxu.T, Muu]])
        closed = F.T @ M @ F
    lo, _ = gen_eig_range(closed, sigma_metric.P)
    return lo


def observability_constant(sys: LinearSystem, Q, R,
                           sigma_metric: QuadraticCertificate, nu: int) -> float:
    """Worst-case c_o with sigma(x_nu) <= c_o * sum of nu stage costs.

    Largest generalized eigenvalue of the lifted quadratic forms in
    (x_0, u_0..u_{nu-1}).  A stage-cost null direction that still moves
    sigma(x_nu) means no finite constant exists for this window.
    """
    if nu < 1:
        raise DomainError("nu must be >= 1")
    Mxx, Mxu, Muu = stage_cost_forms(sys, Q, R)
    n, m = sys.n_p, sys.m
    nz = n + nu * m
    Phi = np.zeros((n, nz))
    Phi[:, :n] = np.eye(n)
    Den = np.zeros((nz, nz))
    for k in range(nu):
        U = np.zeros((m, nz))
        U[:, n + k * m:n + (k + 1) * m] = np.eye(m)
        Den += Phi.T @ Mxx @ Phi + Phi.T @ Mxu @ U + U.T @ Mxu.T @ Phi + U.T @ Muu @ U
        Phi = sys.A @ Phi + sys.B @ U
    Num = Phi.T @ sigma_metric.P @ Phi
    w, V = np.linalg.eigh(0.5 * (Den + Den.T))
    cut = 1e-10 * max(1.0, float(w[-1]))
    null = V[:, w <= cut]
    if null.shape[1]:
        leak = float(np.linalg.norm(null.T @ Num @ null))
        if leak > 1e-9 * max(1.0, float(np.linalg.norm(Num))):
            raise ObservabilityError(
                f"nu = {nu} is insufficient: zero-cost directions still move sigma")
    keep = V[:, w > cut]
    if keep.shape[1] == 0:
        raise ObservabilityError("stage-cost form is identically zero")
    _, hi = gen_eig_range(keep.T @ Num @ keep, keep.T @ Den @ keep)
    return hi


def smallest_observability_window(sys: LinearSystem, Q, R,
                                  sigma_metric: QuadraticCertificate,
                                  nu_max: int = 12):
    """Smallest nu with a finite c_o, and that c_o."""
    for nu in range(1, nu_max + 1):
        try:
            return nu, observability_constant(sys, Q, R, sigma_metric, nu)
        except ObservabilityError:
            continue
    raise ObservabilityError(f"no finite observability constant up to nu = {nu_max}")


# ---------------------------------------------------------------------------
# horizon bounds

@dataclass(frozen=True)
class BoundsReport:
    gamma_s: float
    gamma_o: float
    epsilon_o: float
    gamma_Ybar: float
    Ybar: float
    alpha_N: float
    N_1: float
    nu: Optional[int] = None
    c_o: Optional[float] = None
    alpha_Ns: Optional[float] = None
    N_Ybar_s: Optional[float] = None


def alpha_of_horizon(gamma_s, gamma_Ybar, epsilon_o, N):
    return 1.0 - gamma_s * gamma_Ybar / (epsilon_o ** 2 * (N - 1))


def alpha_s_of_horizon(gamma_s, gamma_Ybar_s, epsilon_o, c_o, nu, N):
    N_nu = (N - nu) // nu
    g = gamma_Ybar_s * c_o
    return 1.0 - (gamma_Ybar_s * gamma_s * c_o / epsilon_o) * (g / (g + 1.0)) ** N_nu


def horizon_bounds(gamma_s, gamma_Ybar, epsilon_o, N, nu=None, c_o=None,
                   gamma_o=0.0, Ybar=math.inf, delta_s=math.inf) -> BoundsReport:
    """Suboptimality index and stabilizing-horizon thresholds.

    alpha_N = 1 - gamma_s gamma_Ybar / (eps_o^2 (N-1)) and
    N_1 = 1 + gamma_s gamma_Ybar / eps_o^2.  With an observability window
    (nu, c_o) the exponential variant alpha_{N,s} and its threshold
    N_{Ybar,s} are added; the threshold is rounded outward so that every
    integer N above it has alpha_{N,s} > 0 despite the floor in N_nu.
    """
    if N <= 1:
        raise DomainError("horizon N must be >= 2")
    for name, v in (("gamma_s", gamma_s), ("gamma_Ybar", gamma_Ybar), ("epsilon_o", epsilon_o)):
        if v <= 0.0:
            raise DomainError(f"{name} must be positive")
    alpha_N = alpha_of_horizon(gamma_s, gamma_Ybar, epsilon_o, N)
    N_1 = 1.0 + gamma_s * gamma_Ybar / epsilon_o ** 2
    alpha_Ns = N_Ybar_s = None
    if nu is not None and c_o is not None:
        if nu < 1 or c_o <= 0.0:
            raise DomainError("nu must be >= 1 and c_o positive")
        ratio = Ybar / delta_s if math.isfinite(Ybar) and math.isfinite(delta_s) else 0.0
        gamma_Ybar_s = max(gamma_s, ratio)
        alpha_Ns = alpha_s_of_horizon(gamma_s, gamma_Ybar_s, epsilon_o, c_o, nu, N)
        g = gamma_Ybar_s * c_o
        terms = [math.log(gamma_Ybar_s * gamma_s * c_o / epsilon_o)]
        if math.isfinite(Ybar) and math.isfinite(delta_s):
            terms.append(math.log(c_o * Ybar / delta_s))
        theta = max(terms) / (math.log(g + 1.0) - math.log(g))
        # floored N_nu needs N_nu >= floor(theta)+1, i.e. N >= nu*(floor(theta)+2)
        N_Ybar_s = nu * (math.floor(theta) + 1) + nu - 1 if theta >= 0.0 else 2 * nu - 1
    return BoundsReport(gamma_s=gamma_s, gamma_o=gamma_o, epsilon_o=epsilon_o,
                        gamma_Ybar=gamma_Ybar, Ybar=Ybar, alpha_N=alpha_N, N_1=N_1,
                        nu=nu, c_o=c_o, alpha_Ns=alpha_Ns, N_Ybar_s=N_Ybar_s)


# ---------------------------------------------------------------------------
# relative degree, transmission zeros

def relative_degree_and_zeros(sys: LinearSystem):
    """(d, zeros, minimum_phase) for a SISO system.

    d is the index of the first nonzero Markov parameter C A^d B (the input
    reaches the output d+1 steps later); d = -1 flags direct feedthrough.
    Zeros are the finite rank drops of the Rosenbrock pencil.
    """
    if sys.m != 1 or sys.p != 1:
        raise ShapeError("relative degree is defined here for SISO systems only")
    scale = max(1.0, float(np.linalg.norm(sys.A)), float(np.linalg.norm(sys.B)),
                float(np.linalg.norm(sys.C)))
    tol = 1e4 * np.finfo(float).eps * scale
    if abs(sys.D[0, 0].item()) > tol:
        d = -1
    else:
        d = None
        Ak = np.eye(sys.n_p)
        for k in range(sys.n_p + 1):
            if abs((sys.C @ Ak @ sys.B).item()) > tol:
                d = k
                break
            Ak = sys.A @ Ak
        if d is None:
            raise DegenerateSystemError("identically zero input-output map")
    from scipy import linalg as sla
    n = sys.n_p
    M0 = np.block([[sys.A, sys.B], [sys.C, sys.D]])
    M1 = np.zeros_like(M0)
    M1[:n, :n] = np.eye(n)
    alphas, betas = sla.eigvals(M0, M1, homogeneous_eigvals=True)
    zeros = []
    for a, b in zip(alphas, betas):
        if abs(b) > 1e-9 * max(1.0, abs(a)):
            zeros.append(complex(a / b))
    zeros.sort(key=lambda z: (z.real, z.imag))
    minimum_phase = all(abs(z) < 1.0 for z in zeros)
    return d, zeros, minimum_phase


# ---------------------------------------------------------------------------
# i-IOSS certificate and the classical feedback baseline

def linear_ioss_certificate(A, C, B=None, D=None):
    """Quadratic i-IOSS certificate for a detectable pair.

    Output injection L from the dual (filter) Riccati equation; P solves a
    scaled Lyapunov equation so that (A-LC)' P (A-LC) <= rho_tilde P, and the
    constants make V(e) = ||e||_P^2 satisfy the incremental dissipation
    inequality with inputs ||u-v||^2 and ||dy||^2.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = A.shape[0]
    p = C.shape[0]
    B = np.zeros((n, 1)) if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    D = np.zeros((p, B.shape[1])) if D is None else np.atleast_2d(np.asarray(D, dtype=float))
    if not pbh_detectable(A, C):
        raise DetectabilityError("(A, C) is not detectable")
    # dual Riccati: error covariance with unit noise weights
    Sigma = dare(A.T, C.T, np.eye(n), np.eye(p)).P
    L = A @ Sigma @ C.T @ np.linalg.inv(C @ Sigma @ C.T + np.eye(p))
    A_L = A - L @ C
    rho = float(max(abs(np.linalg.eigvals(A_L)))) ** 2 if n else 0.0
    rho_t = rho + 0.05 * (1.0 - rho)
    from scipy import linalg as sla
    P = sla.solve_discrete_lyapunov((A_L / np.sqrt(rho_t)).T, np.eye(n))
    P = 0.5 * (P + P.T)
    eps = min(1.0, (1.0 - rho_t) / (2.0 * rho_t))
    rho_o = (1.0 + eps) * rho_t
    boost = 2.0 * (1.0 + 1.0 / eps)
    c_o2 = boost * float(np.linalg.eigvalsh(L.T @ P @ L)[-1])
    BLD = B - L @ D
    c_o1 = boost * float(np.linalg.eigvalsh(BLD.T @ P @ BLD)[-1])
    return QuadraticCertificate(P=P, role="ioss"), rho_o, c_o1, c_o2


class RegulatorFeedback:
    """u = pi_u(w) + K (x - pi_x(w)): the classical trajectory-stabilizing baseline."""

    def __init__(self, pi_x, pi_u, K):
        self.pi_x = pi_x
        self.pi_u = pi_u
        self.K = np.atleast_2d(np.asarray(K, dtype=float))

    def __call__(self, x_p, w):
        x_p = np.asarray(x_p, dtype=float)
        return np.atleast_1d(self.pi_u(w)) + self.K @ (x_p - np.atleast_1d(self.pi_x(w)))


def classical_regulator_feedback(sys: LinearSystem, reg: RegulatorSolution, K):
    """Linear instantiation u = Gamma w + K (x - Pi w); K must make A + BK Schur."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    rho = float(max(abs(np.linalg.eigvals(sys.A + sys.B @ K))))
    if rho >= 1.0:
        raise StabilityError(f"A + BK has spectral radius {rho:.6f} >= 1")
    return RegulatorFeedback(reg.pi_x, reg.pi_u, K)


# ---------------------------------------------------------------------------
# one-call analysis used by the CLI

@dataclass(frozen=True)
class AnalysisReport:
    sys: LinearSystem
    T: int
    N: int
    regulator: RegulatorSolution
    residual_dynamics: float
    residual_output: float
    detectable: bool
    stabilizable: bool
    nonres: NonresonanceReport
    augmented_detectable: bool
    augmented_predicted: bool
    sigma_metric: QuadraticCertificate
    lqr_metric: QuadraticCertificate
    bounds: BoundsReport
    relative_degree: Optional[int] = None
    zeros: Optional[tuple] = None
    minimum_phase: Optional[bool] = None


def analyze_linear(sys: LinearSystem, T: int, N: int, Q, R,
                   gamma_s: float = 1.0) -> AnalysisReport:
    """Certificates and horizon bounds for the T-augmented incremental design."""
    reg = solve_regulator(sys)
    r_dyn, r_out = regulator_residuals(sys, reg)
    det = pbh_detectable(sys.A, sys.C)
    stab = pbh_stabilizable(sys.A, sys.B)
    nonres = nonresonance(sys, T)
    _, _, verdict, predicted = augmented_pair(sys, T)
    aug = augment_linear(sys, T)
    sigma_metric = sigma_metric_dare(aug, Q, R)
    Mxx, Mxu, Muu = stage_cost_forms(aug, Q, R)
    _, lqr_metric = lqr_gain(aug.A, aug.B, Mxx, Muu, S=Mxu)
    eps_o = epsilon_o_generalized_eig(aug, Q, R, sigma_metric)
    nu, c_o = smallest_observability_window(aug, Q, R, sigma_metric)
    bounds = horizon_bounds(gamma_s=gamma_s, gamma_Ybar=gamma_s, epsilon_o=eps_o,
                            N=N, nu=nu, c_o=c_o)
    rd = zeros = minphase = None
    if sys.m == 1 and sys.p == 1:
        try:
            rd, zeros_list, minphase = relative_degree_and_zeros(sys)
            zeros = tuple(zeros_list)
        except DegenerateSystemError:
            pass
    return AnalysisReport(sys=sys, T=T, N=N, regulator=reg,
                          residual_dynamics=r_dyn, residual_output=r_out,
                          detectable=det, stabilizable=stab, nonres=nonres,
                          augmented_detectable=verdict, augmented_predicted=predicted,
                          sigma_metric=sigma_metric, lqr_metric=lqr_metric,
                          bounds=bounds, relative_degree=rd, zeros=zeros,
                          minimum_phase=minphase)
