"""Fixed-antenna benchmark: power-only optimization by successive convex
approximation, each convex subproblem solved with a dense log-barrier
interior-point Newton method, plus an exhaustive grid oracle for validation.

The decision vector stacks the sqrt-power variables with the auxiliary
rate/objective variables: v = [p (N), alpha (M), beta, a, b]. All constraint
functions below are concave, so -log barriers give a convex subproblem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .system import (
    AntennaPlacement,
    PowerAllocation,
    Solution,
    SystemConfig,
    UserLayout,
    antenna_positions,
    channel_coefficient,
    energy_efficiency,
    in_waveguide_phase,
)

LN2 = math.log(2.0)


class SubproblemError(RuntimeError):
    """The interior-point solver failed to reach the required residuals."""


@dataclass
class SCAState:
    """Anchor point of the current convex approximation."""

    sqrt_powers: np.ndarray   # feasible sqrt-power anchor, ||.||^2 <= P_max
    log_objective: float      # ln of the anchor objective value beta
    log_power: float          # ln of the anchor consumed power
    iteration: int = 0
    history: list[float] = field(default_factory=list)


@dataclass
class SubproblemResult:
    sqrt_powers: np.ndarray
    alpha: np.ndarray
    beta: float
    a: float
    b: float
    newton_iterations: int
    stationarity_residual: float
    complementarity_residual: float
    barrier_gap: float


@dataclass
class SCAResult:
    power: PowerAllocation
    placement: AntennaPlacement
    ee: float
    history: list[float]
    iterations: int
    trace: list[dict]


def fixed_placement(cfg: SystemConfig) -> AntennaPlacement:
    """Array centered on the waveguide with guard-distance spacing."""
    n = cfg.n_antennas
    idx = np.arange(1, n + 1)
    return AntennaPlacement((idx - (n + 1) / 2.0) * cfg.guard_distance)


def channel_matrix(cfg: SystemConfig, layout: UserLayout,
                   placement: AntennaPlacement) -> np.ndarray:
    """Effective complex channel including the in-waveguide phase, (M, N)."""
    psi = antenna_positions(cfg, placement)
    dist = np.linalg.norm(layout.positions[:, None, :] - psi[None, :, :], axis=2)
    theta = in_waveguide_phase(cfg, placement.x_coords)
    phase = 2.0 * math.pi * dist / cfg.wavelength + theta[None, :]
    return math.sqrt(cfg.path_gain) * np.exp(-1j * phase) / dist


def fixed_channel(cfg: SystemConfig, layout: UserLayout) -> np.ndarray:
    """Channel matrix at the fixed (centered) placement."""
    return channel_matrix(cfg, layout, fixed_placement(cfg))


def _rate_terms(h: np.ndarray):
    """Per-user quadratic forms G_m with |h_m^H p|^2 = p^T G_m p."""
    return np.real(np.conj(h)[:, :, None] * h[:, None, :])  # (M, N, N)


def _rates(g: np.ndarray, p: np.ndarray, sigma2: float) -> np.ndarray:
    quad = np.einsum("i,mij,j->m", p, g, p)
    return np.log2(1.0 + quad / sigma2)


def _beta_value(cfg: SystemConfig, g: np.ndarray, p: np.ndarray) -> float:
    rates = _rates(g, p, cfg.noise_power)
    return float(np.sum(rates) / (float(p @ p) + cfg.static_power))


class _Subproblem:
    """Constraint oracle for one linearized subproblem."""

    def __init__(self, g: np.ndarray, cfg: SystemConfig, state: SCAState):
        self.g = g
        self.cfg = cfg
        self.m_users, self.n_ant = g.shape[0], g.shape[1]
        self.dim = self.n_ant + self.m_users + 3
        self.ib = self.n_ant + self.m_users         # beta index
        self.ia = self.ib + 1                        # a index
        self.ibb = self.ib + 2                       # b index
        p_anchor = state.sqrt_powers
        self.q = np.einsum("mij,j->mi", g, p_anchor)          # (M, N)
        self.r = self.q @ p_anchor                            # (M,)
        self.exp_a = math.exp(state.log_objective)
        self.exp_b = math.exp(state.log_power)
        self.a_anchor = state.log_objective
        self.b_anchor = state.log_power
        self.n_constraints = self.m_users + 4 + self.n_ant

    def split(self, v: np.ndarray):
        n, m = self.n_ant, self.m_users
        return v[:n], v[n:n + m], v[self.ib], v[self.ia], v[self.ibb]

    def constraints(self, v: np.ndarray) -> np.ndarray:
        # the rate constraints are stated in noise-power units: dividing
        # both sides by sigma^2 changes nothing mathematically but keeps
        # their slacks on the same O(1) scale as the other constraints
        p, alpha, beta, a, b = self.split(v)
        s2 = self.cfg.noise_power
        vals = np.empty(self.n_constraints)
        with np.errstate(over="ignore"):
            vals[:self.m_users] = ((2.0 * self.q @ p - self.r) / s2
                                   - (np.exp2(alpha) - 1.0))
            vals[self.m_users] = np.sum(alpha) - np.exp(
                min(a + b, 700.0))
        k = self.m_users
        vals[k + 1] = self.exp_a * (1.0 + a - self.a_anchor) - beta
        vals[k + 2] = (self.exp_b * (1.0 + b - self.b_anchor)
                       - float(p @ p) - self.cfg.static_power)
        vals[k + 3] = self.cfg.power_budget - float(p @ p)
        vals[k + 4:] = p
        return vals

    def barrier(self, v: np.ndarray, t: float) -> float:
        """Centering objective -tau*beta - (1/t) sum log c.

        The 1/t scaling keeps values in problem units at every stage, so
        line-search comparisons stay above floating-point resolution even
        for very large t.
        """
        c = self.constraints(v)
        if np.any(c <= 0.0):
            return math.inf
        tau = self.cfg.slot_length
        return -tau * v[self.ib] - float(np.sum(np.log(c))) / t

    def constraint_jacobian(self, v: np.ndarray) -> np.ndarray:
        """Gradients of every constraint, one column each: (dim, n_c)."""
        p, alpha, beta, a, b = self.split(v)
        n, m = self.n_ant, self.m_users
        s2 = self.cfg.noise_power
        jac = np.zeros((self.dim, self.n_constraints))
        exp2a = np.exp2(alpha)
        eab = math.exp(a + b)
        for mm in range(m):
            jac[:n, mm] = 2.0 * self.q[mm] / s2
            jac[n + mm, mm] = -LN2 * exp2a[mm]
        jac[n:n + m, m] = 1.0
        jac[self.ia, m] = -eab
        jac[self.ibb, m] = -eab
        jac[self.ia, m + 1] = self.exp_a
        jac[self.ib, m + 1] = -1.0
        jac[:n, m + 2] = -2.0 * p
        jac[self.ibb, m + 2] = self.exp_b
        jac[:n, m + 3] = -2.0 * p
        jac[:n, m + 4:] = np.eye(n)
        return jac

    def objective_grad(self) -> np.ndarray:
        """Gradient of the minimized objective -tau*beta."""
        grad = np.zeros(self.dim)
        grad[self.ib] = -self.cfg.slot_length
        return grad

    def barrier_grad_hess(self, v: np.ndarray, t: float):
        p, alpha, beta, a, b = self.split(v)
        n, m = self.n_ant, self.m_users
        c = self.constraints(v)
        jac = self.constraint_jacobian(v)

        bgrad = -jac @ (1.0 / c)
        bhess = (jac / (c * c)) @ jac.T

        # curvature of the nonlinear constraints: -hess(c_i) / c_i
        exp2a = np.exp2(alpha)
        eab = math.exp(a + b)
        idx = np.arange(n, n + m)
        bhess[idx, idx] += (LN2 * LN2 * exp2a) / c[:m]
        for i in (self.ia, self.ibb):
            for j in (self.ia, self.ibb):
                bhess[i, j] += eab / c[m]
        diag = np.arange(n)
        bhess[diag, diag] += 2.0 / c[m + 2] + 2.0 / c[m + 3]

        grad = self.objective_grad() + bgrad / t
        return grad, bhess / t

    def kkt_certificate(self, v: np.ndarray, t: float):
        """Stationarity and complementarity residuals in problem units.

        Starts from the barrier duals 1/(t * slack) and refits the active
        multipliers by least squares (standard dual recovery); the refit
        only sharpens the certificate, feasibility and nonnegativity of the
        duals are kept.
        """
        c = self.constraints(v)
        jac = self.constraint_jacobian(v)
        lam = 1.0 / (t * c)
        target = self.objective_grad()    # stationarity: jac @ lam == grad f0
        active = lam >= 1e-8 * float(np.max(lam))
        rhs = target - jac[:, ~active] @ lam[~active]
        sol, *_ = np.linalg.lstsq(jac[:, active], rhs, rcond=None)
        refit = lam.copy()
        refit[active] = np.maximum(sol, 0.0)
        stationarity = float(np.max(np.abs(jac @ refit - target)))
        complementarity = float(np.max(refit * c))
        return stationarity, complementarity, refit


def _strictly_feasible_start(prob: _Subproblem, state: SCAState) -> np.ndarray:
    """Build an interior point near the anchor; anchors sit on the boundary
    of several constraints, so every coordinate backs off by a small margin.
    """
    cfg = prob.cfg
    eps_p, eps_alpha, eps_a, eps_b = 1e-3, 1e-2, 1e-2, 1e-4
    worst = None
    for _ in range(8):
        p0 = state.sqrt_powers * (1.0 - eps_p)
        lin = 2.0 * prob.q @ p0 - prob.r
        if np.any(lin <= 0.0):
            eps_p *= 0.5
            continue
        alpha0 = np.log2(1.0 + lin / cfg.noise_power) - eps_alpha
        a0 = state.log_objective - eps_a
        ratio = (float(p0 @ p0) + cfg.static_power) / prob.exp_b
        b0 = state.log_power + max(0.0, ratio - 1.0) + eps_b
        beta0 = prob.exp_a * (1.0 - eps_a) * (1.0 - 1e-3)
        v0 = np.concatenate([p0, alpha0, [beta0, a0, b0]])
        slacks = prob.constraints(v0)
        if np.all(slacks > 0.0):
            return v0
        worst = float(np.min(slacks))
        eps_a *= 4.0
        eps_alpha *= 2.0
    raise SubproblemError(
        f"could not build a strictly feasible start (worst slack: {worst})")


def _newton_center(prob: _Subproblem, v: np.ndarray, t: float,
                   tol_dec2: float = 1e-20,
                   max_inner: int = 60) -> tuple[np.ndarray, int]:
    """Damped Newton toward the analytic center of the stage-t barrier.

    Path stages only need loose centering (tol_dec2 around 1e-10); the
    final stage is polished tightly before the KKT certificate is read off.
    """
    for it in range(max_inner):
        grad, hess = prob.barrier_grad_hess(v, t)
        ridge = 0.0
        while True:
            try:
                step = np.linalg.solve(hess + ridge * np.eye(prob.dim), -grad)
                break
            except np.linalg.LinAlgError:
                ridge = max(ridge * 10.0, 1e-12 * np.trace(hess) / prob.dim)
        decrement2 = float(-grad @ step)
        if decrement2 <= tol_dec2:
            return v, it + 1
        base = prob.barrier(v, t)
        slope = float(grad @ step)
        s = 1.0
        while (prob.barrier(v + s * step, t) > base + 0.25 * s * slope
               and s > 1e-16):
            s *= 0.5
        if s <= 1e-16:
            return v, it + 1
        v = v + s * step
    return v, max_inner


def solve_subproblem(h: np.ndarray, cfg: SystemConfig, state: SCAState,
                     gap_tol: float = 5e-11, stat_tol: float = 1e-8,
                     max_newton: int = 1500) -> SubproblemResult:
    """Maximize tau*beta over the linearized convex set around the anchor.

    Follows the central path until the barrier gap (constraint count / t)
    falls below gap_tol, then polishes until the KKT stationarity residual
    falls below stat_tol. The gap bounds how far the returned objective can
    sit below the subproblem optimum, so it also bounds any dip below the
    (feasible) anchor objective.
    """
    g = _rate_terms(h)
    prob = _Subproblem(g, cfg, state)
    v = _strictly_feasible_start(prob, state)

    t = 1.0
    mu = 20.0
    total_newton = 0
    while prob.n_constraints / t > gap_tol:
        v, used = _newton_center(prob, v, t, tol_dec2=1e-10)
        total_newton += used
        if total_newton > max_newton:
            raise SubproblemError(
                f"Newton cap reached on the path at t={t:.3e}")
        t *= mu

    stationarity = complementarity = math.inf
    for _ in range(6):
        v, used = _newton_center(prob, v, t)
        total_newton += used
        stationarity, complementarity, _ = prob.kkt_certificate(v, t)
        if stationarity <= stat_tol:
            break
        if total_newton > max_newton:
            break
    if stationarity > stat_tol:
        raise SubproblemError(
            f"stationarity residual {stationarity:.3e} above {stat_tol:.1e} "
            f"after {total_newton} Newton steps (gap {prob.n_constraints / t:.1e})")

    p, alpha, beta, a, b = prob.split(v)
    return SubproblemResult(
        sqrt_powers=p.copy(), alpha=alpha.copy(), beta=float(beta),
        a=float(a), b=float(b), newton_iterations=total_newton,
        stationarity_residual=stationarity,
        complementarity_residual=complementarity,
        barrier_gap=prob.n_constraints / t)


def sca_solve(cfg: SystemConfig, layout: UserLayout, tol: float = 1e-6,
              max_iter: int = 100) -> SCAResult:
    """Iterate linearized subproblems from the uniform-power start.

    Anchors are refreshed at every accepted iterate; the objective history
    is non-decreasing (within solver tolerance) because the previous anchor
    stays feasible for the next subproblem.
    """
    placement = fixed_placement(cfg)
    h = channel_matrix(cfg, layout, placement)
    g = _rate_terms(h)

    sqrt_p = np.full(cfg.n_antennas,
                     math.sqrt(cfg.power_budget / cfg.n_antennas))
    beta = _beta_value(cfg, g, sqrt_p)
    state = SCAState(
        sqrt_powers=sqrt_p,
        log_objective=math.log(beta),
        log_power=math.log(float(sqrt_p @ sqrt_p) + cfg.static_power),
    )
    trace: list[dict] = []
    prev_beta = beta
    for it in range(1, max_iter + 1):
        res = solve_subproblem(h, cfg, state)
        state.iteration = it
        state.sqrt_powers = res.sqrt_powers
        exact_beta = _beta_value(cfg, g, res.sqrt_powers)
        state.log_objective = math.log(exact_beta)
        state.log_power = math.log(
            float(res.sqrt_powers @ res.sqrt_powers) + cfg.static_power)
        state.history.append(res.beta)
        trace.append({
            "iteration": it,
            "beta": res.beta,
            "exact_beta": exact_beta,
            "stationarity_residual": res.stationarity_residual,
            "complementarity_residual": res.complementarity_residual,
            "barrier_gap": res.barrier_gap,
            "newton_iterations": res.newton_iterations,
        })
        if abs(res.beta - prev_beta) <= tol * max(1.0, abs(prev_beta)):
            break
        prev_beta = res.beta

    powers = PowerAllocation(state.sqrt_powers ** 2)
    sol = Solution(placement, powers)
    ee = energy_efficiency(cfg, layout, sol)
    return SCAResult(power=powers, placement=placement, ee=ee,
                     history=list(state.history), iterations=state.iteration,
                     trace=trace)


def grid_oracle(cfg: SystemConfig, layout: UserLayout,
                placement: AntennaPlacement, resolution: int = 200) -> float:
    """Best exact EE over a uniform power grid on the budget simplex.

    Guarded to N <= 3 antennas; the scan cost grows as resolution**N.
    """
    n = placement.n_antennas
    if n > 3:
        raise ValueError("grid oracle is limited to 3 antennas")
    h = channel_matrix(cfg, layout, placement)
    axis = np.linspace(0.0, cfg.power_budget, resolution)
    tau, pc, s2 = cfg.slot_length, cfg.static_power, cfg.noise_power

    def best_over(p_grid: np.ndarray) -> float:
        mask = p_grid.sum(axis=1) <= cfg.power_budget * (1 + 1e-12)
        p_grid = p_grid[mask]
        if p_grid.size == 0:
            return -math.inf
        signal = np.sqrt(p_grid) @ h.T
        rates = np.log2(1.0 + np.abs(signal) ** 2 / s2)
        ee = tau * rates.sum(axis=1) / (p_grid.sum(axis=1) + pc)
        return float(np.max(ee))

    if n == 1:
        return best_over(axis[:, None])
    if n == 2:
        p1, p2 = np.meshgrid(axis, axis, indexing="ij")
        return best_over(np.column_stack([p1.ravel(), p2.ravel()]))
    best = -math.inf
    for p1 in axis:
        p2, p3 = np.meshgrid(axis, axis, indexing="ij")
        grid = np.column_stack([np.full(p2.size, p1), p2.ravel(), p3.ravel()])
        best = max(best, best_over(grid))
    return best
