"""Finite-horizon OCP assembly and the receding-horizon control law.

All four stage-cost variants share a single-shooting parameterization in the
physical input sequence.  Exact-linear models solve through a stacked dense
least-squares path; everything else runs a Gauss-Newton projected-descent
solver (two-metric projection with Armijo backtracking) that reports the
projected-gradient stationarity residual.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DomainError, NumericalError
from .models import SystemModel

VARIANTS = ("input_regularized", "output_only", "look_ahead", "incremental_input")


@dataclass(frozen=True)
class SolverSettings:
    max_iterations: int = 200
    gradient_tolerance: float = 1e-8
    armijo_initial_step: float = 1.0
    armijo_shrink: float = 0.5
    armijo_slope: float = 1e-4
    warm_start: bool = True
    dense_bypass: bool = True    # closed-form solve for unconstrained linear OCPs

    def __post_init__(self):
        if self.gradient_tolerance <= 0 or not (0 < self.armijo_shrink < 1):
            raise DomainError("solver tolerances must be positive, shrink in (0,1)")


@dataclass(frozen=True)
class MpcConfig:
    variant: str
    N: int
    Q: np.ndarray
    R: np.ndarray
    d: Optional[int] = None       # look_ahead
    T: Optional[int] = None       # incremental_input
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.N < 1:
            raise ConfigError("horizon N must be >= 1")
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        for name, M in (("Q", Q), ("R", R)):
            if not np.allclose(M, M.T):
                raise ConfigError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(M)[0] < -1e-12 * max(1.0, np.linalg.norm(M)):
                raise ConfigError(f"{name} must be positive semidefinite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        if self.variant == "look_ahead" and (self.d is None or self.d < 0):
            raise ConfigError("look_ahead needs d >= 0")
        if self.variant == "incremental_input" and (self.T is None or self.T < 1):
            raise ConfigError("incremental_input needs T >= 1")


@dataclass(frozen=True)
class OcpSolution:
    u_opt: np.ndarray          # N x m
    x_pred: np.ndarray         # (N+1) x n
    value: float
    iterations: int
    converged: bool
    kkt_residual: float


class Ocp:
    """One horizon instance: frozen initial state, precomputed w trajectory."""

    def __init__(self, model: SystemModel, config: MpcConfig, x0, w0,
                 history=None, u_ref_traj=None):
        self.model = model
        self.config = config
        self.x0 = np.asarray(x0, dtype=float).reshape(model.n_p)
        self.N = config.N
        self.m = model.m
        # rollout horizon: look_ahead needs d+1 extra predicted outputs
        self.extra = (config.d + 1) if config.variant == "look_ahead" else 0
        self.H = self.N + self.extra
        w = np.asarray(w0, dtype=float).reshape(model.q)
        ws = [w]
        for _ in range(self.H):
            ws.append(np.asarray(model.s(ws[-1]), dtype=float))
        self.w_traj = ws
        if config.variant == "incremental_input":
            T = config.T
            if history is None:
                raise ConfigError("incremental_input needs the applied-input history")
            hist = [np.asarray(h, dtype=float).reshape(model.m) for h in history]
            if len(hist) != T:
                raise ConfigError(f"history must hold exactly T = {T} inputs")
            self.history = hist            # oldest first: u_{t-T}, ..., u_{t-1}
        else:
            self.history = None
        if config.variant == "input_regularized":
            if u_ref_traj is None:
                raise ConfigError("input_regularized needs the feedforward pi_u(w) along the horizon")
            self.u_ref = [np.asarray(v, dtype=float).reshape(model.m) for v in u_ref_traj]
            if len(self.u_ref) < self.N:
                raise ConfigError("feedforward trajectory shorter than the horizon")
        else:
            self.u_ref = None
        self.lo = model.input_lo
        self.hi = model.input_hi

    # -- helpers -----------------------------------------------------------

    def _ref_increment(self, useq, k):
        """u_{k-T} for the incremental penalty: decision or history."""
        T = self.config.T
        return useq[k - T] if k - T >= 0 else self.history[k]

    def _extended_input(self, useq, j):
        return useq[j] if j < self.N else useq[self.N - 1]

    def rollout(self, useq):
        xs = [self.x0]
        for j in range(self.H):
            xs.append(self.model.step(xs[-1], self._extended_input(useq, j), self.w_traj[j]))
        return xs

    def outputs(self, useq, xs):
        return [np.atleast_1d(self.model.h(xs[j], self._extended_input(useq, j), self.w_traj[j]))
                for j in range(self.H)]

    def cost(self, useq, xs=None):
        useq = np.asarray(useq, dtype=float).reshape(self.N, self.m)
        if xs is None:
            xs = self.rollout(useq)
        ys = self.outputs(useq, xs)
        Q, R = self.config.Q, self.config.R
        J = 0.0
        v = self.config.variant
        for k in range(self.N):
            y = ys[k]
            J += float(y @ Q @ y)
            if v == "input_regularized":
                du = useq[k] - self.u_ref[k]
                J += float(du @ R @ du)
            elif v == "incremental_input":
                du = useq[k] - self._ref_increment(useq, k)
                J += float(du @ R @ du)
            elif v == "look_ahead":
                ylook = ys[k + self.config.d + 1]
                J += float(ylook @ Q @ ylook)
        if not np.isfinite(J):
            raise NumericalError("non-finite OCP cost")
        return J, xs

    # -- derivatives -------------------------------------------------------

    def _output_weights(self):
        """Per-rollout-step output weight: look_ahead counts tail outputs twice."""
        wts = np.zeros(self.H)
        wts[:self.N] += 1.0
        if self.config.variant == "look_ahead":
            d = self.config.d
            for k in range(self.N):
                wts[k + d + 1] += 1.0
        return wts

    def gradient(self, useq, xs=None):
        """Exact cost gradient via one adjoint sweep over the rollout."""
        useq = np.asarray(useq, dtype=float).reshape(self.N, self.m)
        if xs is None:
            xs = self.rollout(useq)
        Q, R = self.config.Q, self.config.R
        wts = self._output_weights()
        g = np.zeros((self.N, self.m))
        lam = np.zeros(self.model.n_p)
        for j in range(self.H - 1, -1, -1):
            u_j = self._extended_input(useq, j)
            w_j = self.w_traj[j]
            Fx, Fu, _ = self.model.jacobians_f(xs[j], u_j, w_j)
            Hx, Hu, _ = self.model.jacobians_h(xs[j], u_j, w_j)
            y = np.atleast_1d(self.model.h(xs[j], u_j, w_j))
            cy = 2.0 * wts[j] * (Q @ y)
            gu = Fu.T @ lam + Hu.T @ cy
            g[min(j, self.N - 1)] += gu
            lam = Fx.T @ lam + Hx.T @ cy
        v = self.config.variant
        if v == "input_regularized":
            for k in range(self.N):
                g[k] += 2.0 * R @ (useq[k] - self.u_ref[k])
        elif v == "incremental_input":
            T = self.config.T
            for k in range(self.N):
                du = useq[k] - self._ref_increment(useq, k)
                g[k] += 2.0 * R @ du
                if k + T < self.N:
                    g[k] -= 2.0 * R @ (useq[k + T] - useq[k])
        return g

    def cost_gradient_hessian(self, useq):
        """Gauss-Newton triple (J, g, H) from stacked output sensitivities."""
        useq = np.asarray(useq, dtype=float).reshape(self.N, self.m)
        xs = self.rollout(useq)
        Q, R = self.config.Q, self.config.R
        N, m, H = self.N, self.m, self.H
        nv = N * m
        wts = self._output_weights()
        J = self.cost(useq, xs)[0]
        g = np.zeros(nv)
        Hm = np.zeros((nv, nv))
        # forward sensitivities S[j] = dx_k/d(decision u_j) while scanning k
        S = [None] * N
        for k in range(H):
            u_k = self._extended_input(useq, k)
            w_k = self.w_traj[k]
            Fx, Fu, _ = self.model.jacobians_f(xs[k], u_k, w_k)
            Hx, Hu, _ = self.model.jacobians_h(xs[k], u_k, w_k)
            y = np.atleast_1d(self.model.h(xs[k], u_k, w_k))
            if wts[k] > 0.0:
                rows = []
                for j in range(N):
                    Yu = Hx @ S[j] if S[j] is not None else np.zeros((self.model.p, m))
                    if j == min(k, N - 1):
                        Yu = Yu + Hu
                    rows.append(Yu)
                Yfull = np.hstack(rows)
                Qy = 2.0 * wts[k] * (Q @ y)
                g += Yfull.T @ Qy
                Hm += 2.0 * wts[k] * (Yfull.T @ Q @ Yfull)
            # advance sensitivities
            jdec = min(k, N - 1)
            for j in range(N):
                if S[j] is not None:
                    S[j] = Fx @ S[j]
            S[jdec] = Fu.copy() if S[jdec] is None else S[jdec] + Fu
        v = self.config.variant
        if v == "input_regularized":
            for k in range(N):
                du = useq[k] - self.u_ref[k]
                g[k * m:(k + 1) * m] += 2.0 * R @ du
                Hm[k * m:(k + 1) * m, k * m:(k + 1) * m] += 2.0 * R
        elif v == "incremental_input":
            T = self.config.T
            for k in range(N):
                du = useq[k] - self._ref_increment(useq, k)
                sk = slice(k * m, (k + 1) * m)
                g[sk] += 2.0 * R @ du
                Hm[sk, sk] += 2.0 * R
                if k - T >= 0:
                    sj = slice((k - T) * m, (k - T + 1) * m)
                    g[sj] -= 2.0 * R @ du
                    Hm[sj, sj] += 2.0 * R
                    Hm[sk, sj] -= 2.0 * R
                    Hm[sj, sk] -= 2.0 * R
        return J, g, Hm.reshape(nv, nv)

    # -- dense linear path ---------------------------------------------------

    def dense_matrices(self):
        """Stacked residual system: r(u) = Aml @ vec(u) - bml with J = ||r||^2."""
        lin = self.model.linear
        if lin is None:
            raise NumericalError("dense path requires an exactly linear model")
        N, m, H = self.N, self.m, self.H
        n = self.model.n_p
        Q, R = self.config.Q, self.config.R
        Qh = _psd_sqrt(Q)
        Rh = _psd_sqrt(R)
        wts = self._output_weights()
        rows, rhs = [], []
        # x_k = A^k x0 + sum_j A^{k-1-j} (B u_j + P_x w_j)
        const = self.x0.copy()
        Sx = [np.zeros((n, N * m))]
        consts = [const]
        for k in range(H):
            Sk = lin.A @ Sx[-1]
            jdec = min(k, N - 1)
            Sk[:, jdec * m:(jdec + 1) * m] += lin.B
            consts.append(lin.A @ consts[-1] + lin.P_x @ self.w_traj[k])
            Sx.append(Sk)
        for k in range(H):
            if wts[k] == 0.0:
                continue
            jdec = min(k, N - 1)
            row = lin.C @ Sx[k]
            row[:, jdec * m:(jdec + 1) * m] += lin.D
            cst = lin.C @ consts[k] - lin.P_y @ self.w_traj[k]
            rows.append(np.sqrt(wts[k]) * (Qh @ row))
            rhs.append(-np.sqrt(wts[k]) * (Qh @ cst))
        v = self.config.variant
        if v == "input_regularized":
            for k in range(N):
                row = np.zeros((m, N * m))
                row[:, k * m:(k + 1) * m] = np.eye(m)
                rows.append(Rh @ row)
                rhs.append(Rh @ self.u_ref[k])
        elif v == "incremental_input":
            T = self.config.T
            for k in range(N):
                row = np.zeros((m, N * m))
                row[:, k * m:(k + 1) * m] = np.eye(m)
                cst = np.zeros(m)
                if k - T >= 0:
                    row[:, (k - T) * m:(k - T + 1) * m] -= np.eye(m)
                else:
                    cst = self.history[k]
                rows.append(Rh @ row)
                rhs.append(Rh @ cst)
        return np.vstack(rows), np.concatenate(rhs)

    def solve_dense(self):
        Aml, bml = self.dense_matrices()
        u, *_ = np.linalg.lstsq(Aml, bml, rcond=None)
        return u.reshape(self.N, self.m)


def _psd_sqrt(M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    w, V = np.linalg.eigh(M)
    return V @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ V.T


def assemble(model, config, current_state, current_w, memory=None, regulator=None) -> Ocp:
    """Build one OCP instance; the w trajectory is predicted up front."""
    history = None
    if config.variant == "incremental_input":
        if memory is None:
            raise ConfigError("incremental_input needs the memory of applied inputs")
        xi = np.asarray(memory, dtype=float)
        T, m = config.T, model.m
        # memory is newest-first; the OCP wants history oldest-first
        history = [xi[(T - 1 - j) * m:(T - j) * m] for j in range(T)]
    u_ref_traj = None
    if config.variant == "input_regularized":
        if regulator is None:
            raise ConfigError("input_regularized needs a regulator solution for pi_u")
        w = np.asarray(current_w, dtype=float)
        u_ref_traj = []
        for _ in range(config.N):
            u_ref_traj.append(np.atleast_1d(regulator.pi_u(w)))
            w = np.asarray(model.s(w), dtype=float)
    return Ocp(model, config, current_state, current_w, history=history, u_ref_traj=u_ref_traj)


# ---------------------------------------------------------------------------
# solver

def _stationarity(u, g, lo, hi):
    return float(np.max(np.abs(u - np.clip(u - g, lo, hi)))) if u.size else 0.0


def solve(ocp: Ocp, warm_start=None) -> OcpSolution:
    """Minimize the OCP over the input box.

    Unconstrained exactly-linear instances go through the stacked
    least-squares path; otherwise Gauss-Newton projected descent runs from
    the (box-projected) warm start, seeded by the dense solution when the
    model is linear.
    """
    settings = ocp.config.solver
    N, m = ocp.N, ocp.m
    lo = np.tile(ocp.lo, N)
    hi = np.tile(ocp.hi, N)
    linear = ocp.model.linear is not None
    box_active = ocp.model.constrained

    if warm_start is None:
        if box_active:
            mid = np.where(np.isfinite(ocp.lo) & np.isfinite(ocp.hi),
                           0.5 * (ocp.lo + ocp.hi), 0.0)
            u0 = np.tile(mid, (N, 1))
        else:
            u0 = np.zeros((N, m))
    else:
        u0 = np.asarray(warm_start, dtype=float).reshape(N, m)

    if linear and settings.dense_bypass:
        u_dense = ocp.solve_dense()
        if not box_active:
            g = ocp.gradient(u_dense)
            return _finish(ocp, u_dense, 0, True,
                           _stationarity(u_dense.ravel(), g.ravel(), lo, hi))
        u0 = np.clip(u_dense, ocp.lo, ocp.hi)

    u = np.clip(u0.ravel(), lo, hi)
    J, xs = ocp.cost(u.reshape(N, m))
    if not np.isfinite(J):
        raise NumericalError("OCP cost not finite at the initial iterate")
    it = 0
    converged = False
    for it in range(settings.max_iterations):
        Jc, g, H = ocp.cost_gradient_hessian(u.reshape(N, m))
        J = Jc
        stat = _stationarity(u, g, lo, hi)
        if stat <= settings.gradient_tolerance:
            converged = True
            break
        d = _projected_newton_direction(u, g, H, lo, hi)
        t = settings.armijo_initial_step
        accepted = False
        for _ in range(60):
            un = np.clip(u + t * d, lo, hi)
            Jn, xsn = ocp.cost(un.reshape(N, m))
            dec = float(g @ (u - un))
            if Jn <= J - settings.armijo_slope * dec and Jn <= J + 1e-14 * max(1.0, abs(J)):
                accepted = True
                break
            t *= settings.armijo_shrink
        if not accepted or np.max(np.abs(un - u)) < 1e-16 * max(1.0, np.max(np.abs(u))):
            break
        u, J, xs = un, Jn, xsn
    g = ocp.gradient(u.reshape(N, m))
    stat = _stationarity(u, g.ravel(), lo, hi)
    converged = converged or stat <= settings.gradient_tolerance
    return _finish(ocp, u.reshape(N, m), it, converged, stat)


def _projected_newton_direction(u, g, H, lo, hi):
    """Two-metric projection: Newton on the free set, gradient on the active set."""
    eps_a = min(1e-6, max(1e-12, _stationarity(u, g, lo, hi)))
    at_lo = (u - lo <= eps_a) & (g > 0)
    at_hi = (hi - u <= eps_a) & (g < 0)
    act = at_lo | at_hi
    free = ~act
    d = np.zeros_like(u)
    if free.any():
        Hff = H[np.ix_(free, free)]
        gf = g[free]
        lam = 0.0
        trace = max(1.0, float(np.trace(Hff)) / Hff.shape[0])
        for _ in range(12):
            try:
                L = np.linalg.cholesky(Hff + lam * np.eye(Hff.shape[0]))
                df = -np.linalg.solve(Hff + lam * np.eye(Hff.shape[0]), gf)
                if df @ gf < 0.0:
                    d[free] = df
                    break
                lam = max(10.0 * lam, 1e-10 * trace)
            except np.linalg.LinAlgError:
                lam = max(10.0 * lam, 1e-10 * trace)
        else:
            d[free] = -gf
    d[act] = -g[act]
    return d


def _finish(ocp, u, iterations, converged, kkt):
    u = np.clip(u, ocp.lo, ocp.hi)
    J, xs = ocp.cost(u)           # value re-evaluated on the returned input
    x_pred = np.array(xs[:ocp.N + 1])
    return OcpSolution(u_opt=u.copy(), x_pred=x_pred, value=float(J),
                       iterations=int(iterations), converged=bool(converged),
                       kkt_residual=float(kkt))


# ---------------------------------------------------------------------------
# receding-horizon controller

@dataclass
class StepDiagnostics:
    value: float
    iterations: int
    converged: bool
    kkt_residual: float
    failed: bool = False


class MpcController:
    """Receding-horizon loop state: warm start and, if incremental, the memory."""

    def __init__(self, model, config, regulator=None, initial_memory=None,
                 initial_input=None):
        self.model = model
        self.config = config
        self.regulator = regulator
        self._warm = None
        self._last_u = None
        if initial_input is not None:
            self._last_u = model.clip_input(np.asarray(initial_input, dtype=float))
        if config.variant == "incremental_input":
            if initial_memory is not None:
                self.memory = np.asarray(initial_memory, dtype=float).copy()
            else:
                seed = self._cold_input()
                self.memory = np.tile(seed, config.T)
        else:
            self.memory = None

    def _cold_input(self):
        if self._last_u is not None:
            return self._last_u
        if self.model.constrained:
            return np.where(np.isfinite(self.model.input_lo) & np.isfinite(self.model.input_hi),
                            0.5 * (self.model.input_lo + self.model.input_hi), 0.0)
        return np.zeros(self.model.m)

    def step(self, x_p, w):
        """Solve from the measured or estimated state and apply the first input."""
        ocp = assemble(self.model, self.config, x_p, w,
                       memory=self.memory, regulator=self.regulator)
        warm = self._warm if self.config.solver.warm_start else None
        if warm is None:
            warm = np.tile(self._cold_input(), (self.config.N, 1))
        try:
            sol = solve(ocp, warm_start=warm)
            u = sol.u_opt[0].copy()
            diag = StepDiagnostics(value=sol.value, iterations=sol.iterations,
                                   converged=sol.converged, kkt_residual=sol.kkt_residual)
            self._warm = np.vstack([sol.u_opt[1:], sol.u_opt[-1:]])
        except NumericalError:
            # fail-operational: repeat the last feasible input
            u = self._cold_input()
            diag = StepDiagnostics(value=float("nan"), iterations=0, converged=False,
                                   kkt_residual=float("nan"), failed=True)
        self._last_u = u
        if self.memory is not None:
            from .augmentation import step_memory
            self.memory = step_memory(self.memory, u, self.model.m)
        return u, diag
