"""
Independent numerical solvers for the optimisation problems behind the rate
function. They are slow by construction and only serve to certify the closed
forms in src.grf.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import linalg, optimize

from .constants import (
    CONTRACTION_MARGIN,
    FEASIBILITY_TOL,
    HESSIAN_STEP,
    PROBLEM1_AUGMENTED_ROUNDS,
    PROBLEM1_BUDGET,
    PROBLEM1_ESCAPE_CURVATURE,
    PROBLEM1_ESCAPE_STEP,
    PROBLEM1_ESCAPES,
    PROBLEM1_INITIAL_WEIGHT,
    PROBLEM1_POLISH_STEPS,
    PROBLEM1_RESTARTS,
    PROBLEM1_START_NORMS,
    PROBLEM1_WEIGHT_DOUBLINGS,
    PROBLEM3_GRID_STEPS,
    PROBLEM3_REFINEMENTS,
    PROBLEM4_BUDGET,
    PROBLEM4_PUSH,
)
from .grf import waterfill_gains
from .sampling import RngStream, log_det_defect, overlap
from .spectra import DomainError, Spectrum, eta_max


MAX_ORACLE_RANK = 3
LOG_FLOOR = 1e-6


class ConditioningError(ValueError):
    """Raised when I - psi psi* is numerically singular."""


@dataclass(frozen=True)
class OracleResult:
    value: float
    argument: Any
    iterations: int
    converged: bool


def _check_domain(s: Spectrum, x: float, closed: bool = True) -> float:
    if s.r > MAX_ORACLE_RANK:
        raise DomainError(f"r <= {MAX_ORACLE_RANK} violated: r = {s.r}")
    emax = eta_max(s)
    inside = 0 < x <= emax if closed else 0 < x < emax
    if not inside:
        raise DomainError(f"x outside the oracle domain (0, {emax!r}]: {x!r}")
    return emax


# Problem 1: max sum_i log det(I - psi_i* psi_i) s.t. Re Tr(L psi_1 L psi_2) = x


def _unpack(theta: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    m = r * r
    psi1 = (theta[:m] + 1j * theta[m : 2 * m]).reshape(r, r)
    psi2 = (theta[2 * m : 3 * m] + 1j * theta[3 * m :]).reshape(r, r)
    return psi1, psi2


def _pack(psi1: np.ndarray, psi2: np.ndarray) -> np.ndarray:
    return np.concatenate(
        [psi1.real.ravel(), psi1.imag.ravel(), psi2.real.ravel(), psi2.imag.ravel()]
    )


def _soft_log_det(psi: np.ndarray) -> tuple[float, np.ndarray]:
    """
    log det(I - psi* psi) and its gradient -2 psi (I - psi* psi)^{-1}. Below
    LOG_FLOOR each eigenvalue's log is continued by its second-order Taylor
    polynomial so that the search never meets an undefined value.
    """
    e, w = np.linalg.eigh(np.eye(psi.shape[1]) - psi.conj().T @ psi)
    value = 0.0
    slope = np.empty_like(e)
    for j, ej in enumerate(e):
        if ej >= LOG_FLOOR:
            value += math.log(ej)
            slope[j] = 1.0 / ej
        else:
            d = ej - LOG_FLOOR
            value += math.log(LOG_FLOOR) + d / LOG_FLOOR - d * d / (2 * LOG_FLOOR**2)
            slope[j] = 1.0 / LOG_FLOOR - d / LOG_FLOOR**2
    phi = (w * slope) @ w.conj().T
    return value, -2.0 * psi @ phi


def _constraint_gradient(lam: np.ndarray, psi1: np.ndarray, psi2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of Re Tr(L psi_1 L psi_2) w.r.t. (psi_1, psi_2)."""
    g1 = lam[:, None] * psi2.conj().T * lam[None, :]
    g2 = lam[:, None] * psi1.conj().T * lam[None, :]
    return g1, g2


def _penalised(theta: np.ndarray, s: Spectrum, lam: np.ndarray, x: float, weight: float) -> tuple[float, np.ndarray]:
    psi1, psi2 = _unpack(theta, s.r)
    v1, d1 = _soft_log_det(psi1)
    v2, d2 = _soft_log_det(psi2)
    residual = overlap(s, psi1, psi2) - x
    g1, g2 = _constraint_gradient(lam, psi1, psi2)
    value = -(v1 + v2) + weight * residual * residual
    grad1 = -d1 + 2.0 * weight * residual * g1
    grad2 = -d2 + 2.0 * weight * residual * g2
    return value, _pack(grad1, grad2)


def _newton_correct(s: Spectrum, lam: np.ndarray, psi1: np.ndarray, psi2: np.ndarray, x: float) -> tuple[np.ndarray, np.ndarray]:
    """Move along the constraint gradient until Re Tr(L psi_1 L psi_2) = x."""
    for _ in range(50):
        residual = overlap(s, psi1, psi2) - x
        if abs(residual) < 1e-14:
            break
        g1, g2 = _constraint_gradient(lam, psi1, psi2)
        norm2 = float(np.sum(np.abs(g1) ** 2) + np.sum(np.abs(g2) ** 2))
        if norm2 == 0:
            break
        psi1 = psi1 - residual / norm2 * g1
        psi2 = psi2 - residual / norm2 * g2
    return psi1, psi2


def _clip(psi: np.ndarray) -> np.ndarray:
    u, sv, vh = np.linalg.svd(psi)
    limit = 1.0 - CONTRACTION_MARGIN
    if sv[0] <= limit:
        return psi
    return (u * np.minimum(sv, limit)) @ vh


def _random_contraction(gen: np.random.Generator, r: int, norm: float) -> np.ndarray:
    z = gen.standard_normal((r, r)) + 1j * gen.standard_normal((r, r))
    return norm * z / np.linalg.norm(z, 2)


def _start_norm(restart: int, restarts: int) -> float:
    low, high = PROBLEM1_START_NORMS
    return low + (high - low) * (restart + 0.5) / restarts


def _objective_parts(theta: np.ndarray, s: Spectrum, lam: np.ndarray) -> tuple[float, np.ndarray, float, np.ndarray]:
    """Objective, its gradient, the constraint value and its gradient, all over packed reals."""
    psi1, psi2 = _unpack(theta, s.r)
    v1, d1 = _soft_log_det(psi1)
    v2, d2 = _soft_log_det(psi2)
    g1, g2 = _constraint_gradient(lam, psi1, psi2)
    return v1 + v2, _pack(d1, d2), overlap(s, psi1, psi2), _pack(g1, g2)


def _multiplier(grad_f: np.ndarray, grad_c: np.ndarray) -> float:
    """nu with grad_f + nu grad_c closest to zero."""
    denom = float(grad_c @ grad_c)
    return 0.0 if denom == 0 else -float(grad_f @ grad_c) / denom


def _kkt_vector(theta: np.ndarray, s: Spectrum, lam: np.ndarray, x: float, nu: float) -> np.ndarray:
    _, grad_f, c, grad_c = _objective_parts(theta, s, lam)
    return np.append(grad_f + nu * grad_c, c - x)


def _lagrangian_hessian(theta: np.ndarray, s: Spectrum, lam: np.ndarray, nu: float) -> np.ndarray:
    """Central differences of the analytic gradient of f + nu c."""

    def gradient(t: np.ndarray) -> np.ndarray:
        _, grad_f, _, grad_c = _objective_parts(t, s, lam)
        return grad_f + nu * grad_c

    columns = []
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = HESSIAN_STEP
        columns.append((gradient(theta + e) - gradient(theta - e)) / (2 * HESSIAN_STEP))
    hess = np.column_stack(columns)
    return 0.5 * (hess + hess.T)


def _augmented(theta: np.ndarray, s: Spectrum, lam: np.ndarray, x: float, nu: float, rho: float) -> tuple[float, np.ndarray]:
    f, grad_f, c, grad_c = _objective_parts(theta, s, lam)
    residual = c - x
    value = -f - nu * residual + 0.5 * rho * residual * residual
    return value, -grad_f + (rho * residual - nu) * grad_c


def _augmented_ascent(
    s: Spectrum, lam: np.ndarray, theta: np.ndarray, x: float, nu: float, maxiter: int
) -> tuple[np.ndarray, int]:
    """Method of multipliers at a fixed moderate weight, each round run to its tolerance."""
    rho = PROBLEM1_INITIAL_WEIGHT
    iterations = 0
    for _ in range(PROBLEM1_AUGMENTED_ROUNDS):
        result = optimize.minimize(
            _augmented,
            theta,
            args=(s, lam, x, nu, rho),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": maxiter, "ftol": 1e-15, "gtol": 1e-10},
        )
        theta = result.x
        iterations += int(result.nit)
        residual = _objective_parts(theta, s, lam)[2] - x
        nu -= rho * residual
        if abs(residual) < 1e-13:
            break
    return theta, iterations


def _kkt_polish(s: Spectrum, lam: np.ndarray, theta: np.ndarray, x: float) -> tuple[np.ndarray, float, int]:
    """
    Damped Newton on the first-order conditions in (theta, nu). The phase
    symmetries make the system singular, so steps are least-squares.
    """
    _, grad_f, _, grad_c = _objective_parts(theta, s, lam)
    nu = _multiplier(grad_f, grad_c)
    residual = _kkt_vector(theta, s, lam, x, nu)
    steps = 0
    for steps in range(1, PROBLEM1_POLISH_STEPS + 1):
        norm = float(np.linalg.norm(residual))
        if norm < 1e-12:
            break
        grad_c = _objective_parts(theta, s, lam)[3]
        jac = np.block(
            [
                [_lagrangian_hessian(theta, s, lam, nu), grad_c[:, None]],
                [grad_c[None, :], np.zeros((1, 1))],
            ]
        )
        delta = np.linalg.lstsq(jac, -residual, rcond=1e-10)[0]
        t = 1.0
        while t > 1e-4:
            candidate_theta = theta + t * delta[:-1]
            candidate_nu = nu + t * delta[-1]
            candidate = _kkt_vector(candidate_theta, s, lam, x, candidate_nu)
            if np.linalg.norm(candidate) < norm:
                break
            t *= 0.5
        else:
            break
        theta, nu, residual = candidate_theta, candidate_nu, candidate
    return theta, nu, steps


def _ascent_direction(s: Spectrum, lam: np.ndarray, theta: np.ndarray, nu: float) -> np.ndarray | None:
    """Unit tangent direction of positive curvature of f + nu c, if any."""
    grad_c = _objective_parts(theta, s, lam)[3]
    basis = linalg.null_space(grad_c[None, :])
    curvature = basis.T @ _lagrangian_hessian(theta, s, lam, nu) @ basis
    values, vectors = np.linalg.eigh(0.5 * (curvature + curvature.T))
    if values[-1] <= PROBLEM1_ESCAPE_CURVATURE:
        return None
    return basis @ vectors[:, -1]


def _feasible_value(s: Spectrum, lam: np.ndarray, theta: np.ndarray, x: float) -> tuple[float, np.ndarray]:
    """Correct onto the constraint, clip, and score; -inf when still infeasible."""
    psi1, psi2 = _unpack(theta, s.r)
    psi1, psi2 = _newton_correct(s, lam, psi1, psi2, x)
    psi1, psi2 = _clip(psi1), _clip(psi2)
    theta = _pack(psi1, psi2)
    if abs(overlap(s, psi1, psi2) - x) > FEASIBILITY_TOL:
        return -math.inf, theta
    return log_det_defect(psi1) + log_det_defect(psi2), theta


def _refine(s: Spectrum, lam: np.ndarray, theta: np.ndarray, x: float, maxiter: int) -> tuple[float, np.ndarray, int]:
    """
    Polish a feasible point to a KKT point, then leave saddles: while the
    Lagrangian curves upward along the constraint surface, step that way,
    re-ascend and polish again. Modes that collapsed to zero in the early
    low-weight rounds are switched back on this way.
    """
    value, theta = _feasible_value(s, lam, theta, x)
    polished, nu, iterations = _kkt_polish(s, lam, theta, x)
    polished_value, polished = _feasible_value(s, lam, polished, x)
    if polished_value >= value - 1e-9:
        value, theta = polished_value, polished
    else:
        _, grad_f, _, grad_c = _objective_parts(theta, s, lam)
        nu = _multiplier(grad_f, grad_c)
    for _ in range(PROBLEM1_ESCAPES):
        direction = _ascent_direction(s, lam, theta, nu)
        if direction is None:
            break
        improved = False
        for sign in (1.0, -1.0):
            trial = theta + sign * PROBLEM1_ESCAPE_STEP * direction
            trial, nit = _augmented_ascent(s, lam, trial, x, nu, maxiter)
            trial, trial_nu, steps = _kkt_polish(s, lam, trial, x)
            iterations += nit + steps
            trial_value, trial = _feasible_value(s, lam, trial, x)
            if trial_value > value + 1e-12:
                logging.debug(f"Saddle escape at x={x!r}: {value:.12g} -> {trial_value:.12g}")
                value, theta, nu = trial_value, trial, trial_nu
                improved = True
                break
        if not improved:
            break
    return value, theta, iterations


def solve_problem1(
    s: Spectrum,
    x: float,
    budget: int = PROBLEM1_BUDGET,
    rng: RngStream | None = None,
    restarts: int = PROBLEM1_RESTARTS,
) -> OracleResult:
    """
    Maximise log det(I - psi_1* psi_1) + log det(I - psi_2* psi_2) over r x r
    contractions with Re Tr(L psi_1 L psi_2) = x.

    Multi-start: each restart ascends the penalised objective with a penalty
    weight doubling between rounds, then corrects onto the constraint and
    clips the spectral norm. The best restart is polished by Newton on the
    first-order conditions and pushed off any saddle it stopped at. budget
    bounds the quasi-Newton iterations of each restart to budget // restarts.
    The witness holds psi_1, psi_2 and the least-squares multiplier mu.
    """
    _check_domain(s, x, closed=False)
    rng = rng or RngStream(0)
    lam = np.asarray(s.values, dtype=np.float64)
    share = max(1, budget // restarts)
    best: tuple[float, np.ndarray] | None = None
    iterations = 0
    for restart in range(restarts):
        gen = rng.child(restart).generator()
        norm = _start_norm(restart, restarts)
        theta = _pack(_random_contraction(gen, s.r, norm), _random_contraction(gen, s.r, norm))
        weight = PROBLEM1_INITIAL_WEIGHT
        used = 0
        for _ in range(PROBLEM1_WEIGHT_DOUBLINGS + 1):
            if used >= share:
                break
            result = optimize.minimize(
                _penalised,
                theta,
                args=(s, lam, x, weight),
                jac=True,
                method="L-BFGS-B",
                options={"maxiter": share - used, "ftol": 1e-15, "gtol": 1e-10},
            )
            theta = result.x
            used += int(result.nit)
            weight *= 2.0
        iterations += used
        value, theta = _feasible_value(s, lam, theta, x)
        if value == -math.inf:
            logging.debug(f"Restart {restart} ended infeasible")
            continue
        logging.debug(f"Restart {restart} reached {value:.12g}")
        if best is None or value > best[0]:
            best = (value, theta)
    if best is None:
        logging.warning(f"Problem 1 oracle found no feasible point at x={x!r}")
        return OracleResult(value=-math.inf, argument=None, iterations=iterations, converged=False)
    value, theta, refined = _refine(s, lam, best[1], x, share)
    iterations += refined
    psi1, psi2 = _unpack(theta, s.r)
    try:
        mu = estimate_multiplier(s, psi1, psi2)
    except ConditioningError:
        mu = math.nan
    return OracleResult(
        value=value,
        argument={"psi1": psi1, "psi2": psi2, "mu": mu},
        iterations=iterations,
        converged=True,
    )


def _stationarity_terms(s: Spectrum, psi1: np.ndarray, psi2: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    lam = np.asarray(s.values, dtype=np.float64)
    eye = np.eye(s.r)
    rhs = []
    for psi in (psi1, psi2):
        m = eye - psi @ psi.conj().T
        cond = np.linalg.cond(m) if np.all(np.isfinite(m)) else np.inf
        if not np.isfinite(cond) or cond > 1e12:
            raise ConditioningError("I - psi psi* is numerically singular")
        # psi* (I - psi psi*)^{-1} = ((I - psi psi*)^{-1} psi)*, the matrix being Hermitian
        rhs.append(np.linalg.solve(m, psi).conj().T)
    lhs1 = lam[:, None] * psi2 * lam[None, :]
    lhs2 = lam[:, None] * psi1 * lam[None, :]
    return lhs1, rhs[0], lhs2, rhs[1]


def kkt_check_problem1(s: Spectrum, psi1: np.ndarray, psi2: np.ndarray, mu: float) -> float:
    """
    Max-entry residual of the stationarity equations
    mu L psi_2 L = psi_1* (I - psi_1 psi_1*)^{-1} and
    mu L psi_1 L = psi_2* (I - psi_2 psi_2*)^{-1}.
    """
    lhs1, rhs1, lhs2, rhs2 = _stationarity_terms(s, psi1, psi2)
    return float(max(np.max(np.abs(mu * lhs1 - rhs1)), np.max(np.abs(mu * lhs2 - rhs2))))


def estimate_multiplier(s: Spectrum, psi1: np.ndarray, psi2: np.ndarray) -> float:
    """Least-squares multiplier mu of the stationarity equations."""
    lhs1, rhs1, lhs2, rhs2 = _stationarity_terms(s, psi1, psi2)
    a = np.concatenate([lhs1.ravel(), lhs2.ravel()])
    b = np.concatenate([rhs1.ravel(), rhs2.ravel()])
    denom = float(np.real(np.vdot(a, a)))
    if denom == 0:
        return 0.0
    return float(np.real(np.vdot(a, b)) / denom)


def offdiagonal_mass(psi: np.ndarray) -> float:
    """
    Relative Frobenius mass of |psi| off the diagonal once its columns are
    permuted to put the largest possible mass on the diagonal.
    """
    mags = np.abs(psi)
    total = float(np.sum(mags**2))
    if total == 0:
        return 0.0
    rows, cols = optimize.linear_sum_assignment(-(mags**2))
    mask = np.ones(mags.shape, dtype=bool)
    mask[rows, cols] = False
    return math.sqrt(float(np.sum(mags[mask] ** 2)) / total)


# Problem 3: water-filling max sum log(1 - p_i) s.t. sum lambda_i^2 p_i = x


def solve_problem3_grid(
    s: Spectrum,
    x: float,
    grid_steps: int = PROBLEM3_GRID_STEPS,
    refinements: int = PROBLEM3_REFINEMENTS,
) -> OracleResult:
    """
    Brute-force water-filling: dense grid over (p_2, ..., p_r) with p_1
    eliminated through the constraint, infeasible points filtered out, then
    `refinements` zoomed grids around the incumbent.
    """
    emax = _check_domain(s, x)
    g = s.squared
    r = s.r
    if x == emax:
        return OracleResult(-math.inf, np.ones(r), 0, True)
    if r == 1:
        p1 = x / g[0]
        return OracleResult(math.log1p(-p1), np.array([p1]), 1, True)
    lo = np.zeros(r - 1)
    hi = np.ones(r - 1)
    best_value, best_point = -math.inf, None
    evaluated = 0
    for _ in range(refinements + 1):
        axes = [np.linspace(lo[j], hi[j], grid_steps + 1) for j in range(r - 1)]
        tail = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, r - 1)
        head = (x - tail @ g[1:]) / g[0]
        feasible = (head > -1e-15) & (head < 1) & np.all(tail < 1, axis=1)
        evaluated += tail.shape[0]
        if not np.any(feasible):
            break
        head = np.maximum(head[feasible], 0.0)
        tail = tail[feasible]
        values = np.log1p(-head) + np.sum(np.log1p(-tail), axis=1)
        idx = int(np.argmax(values))
        if values[idx] > best_value:
            best_value = float(values[idx])
            best_point = np.concatenate([[head[idx]], tail[idx]])
        cell = (hi - lo) / grid_steps
        centre = best_point[1:]
        lo = np.maximum(centre - 2 * cell, 0.0)
        hi = np.minimum(centre + 2 * cell, 1.0)
    if best_point is None:
        raise DomainError(f"No feasible allocation for x = {x!r}")
    return OracleResult(best_value, best_point, evaluated, True)


# Problem 4: relaxation over gains beta majorised by alpha = (lambda_i^2)


def project_majorization(beta: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """
    Map beta into {beta_1 >= ... >= beta_r >= 0, partial sums <= those of alpha}
    by sorting and clipping the cumulative sums.
    """
    bound = np.cumsum(alpha)
    b = np.sort(np.maximum(np.asarray(beta, dtype=np.float64), 0.0))[::-1]
    sums = np.minimum(np.cumsum(b), bound)
    b = np.sort(np.maximum(np.diff(sums, prepend=0.0), 0.0))[::-1]
    sums = np.cumsum(b)
    positive = sums > 0
    if np.any(positive):
        b = b * min(1.0, float(np.min(bound[positive] / sums[positive])))
    return b


def is_majorized(beta: np.ndarray, alpha: np.ndarray, tol: float = 1e-12) -> bool:
    beta = np.asarray(beta, dtype=np.float64)
    return bool(
        np.all(beta >= -tol)
        and np.all(np.diff(beta) <= tol)
        and np.all(np.cumsum(beta) <= np.cumsum(alpha) + tol)
    )


def solve_problem4_search(
    s: Spectrum,
    x: float,
    budget: int = PROBLEM4_BUDGET,
    rng: RngStream | None = None,
) -> OracleResult:
    """
    Maximise log det(I - P) jointly over ordered gains beta majorised by
    alpha = (lambda_1^2, ..., lambda_r^2) and allocations p with
    sum beta_i p_i = x.

    Alternating search: the p-step is water-filling for the current beta; the
    beta-step ascends along mu* p, the sensitivity of the water-filling value
    to each gain, plus a small uniform push toward larger gains, and is
    projected back onto the majorisation set. Witness: beta and p.
    """
    emax = _check_domain(s, x)
    alpha = s.squared
    if x == emax:
        return OracleResult(-math.inf, {"beta": alpha.copy(), "p": np.ones(s.r)}, 0, True)
    gen = (rng or RngStream(0)).generator()
    beta = project_majorization(alpha * gen.uniform(0.2, 1.0, s.r), alpha)
    while np.sum(beta) <= x:
        beta = 0.5 * (beta + alpha)
    solution = waterfill_gains(beta, x)
    step = 0.1
    converged = False
    iterations = 0
    for iterations in range(1, budget + 1):
        sensitivity = np.asarray(solution.p) / solution.mu_inv
        direction = sensitivity + PROBLEM4_PUSH * max(1.0, float(np.max(sensitivity)))
        candidate = project_majorization(beta + step * direction, alpha)
        if np.max(np.abs(candidate - beta)) < 1e-13:
            converged = True
            break
        if np.sum(candidate) > x:
            trial = waterfill_gains(candidate, x)
            if trial.j_value >= solution.j_value - 1e-15:
                beta, solution = candidate, trial
                step = min(2.0 * step, 1.0)
                continue
        step *= 0.5
        if step < 1e-14:
            converged = True
            break
    if not converged:
        logging.warning(f"Problem 4 search exhausted its budget at x={x!r}")
    return OracleResult(
        value=solution.j_value,
        argument={"beta": beta, "p": np.asarray(solution.p)},
        iterations=iterations,
        converged=converged,
    )


def solve_problem2_permutations(s: Spectrum, x: float) -> OracleResult:
    """
    Water-filling over the gains diag(L P* L P) for every permutation P;
    the witness is the best permutation.
    """
    _check_domain(s, x)
    lam = np.asarray(s.values, dtype=np.float64)
    best_value, best_perm = -math.inf, None
    count = 0
    for perm in itertools.permutations(range(s.r)):
        count += 1
        gains = np.sort(lam * lam[list(perm)])[::-1]
        if x > np.sum(gains):
            continue
        value = waterfill_gains(gains, x).j_value
        if best_perm is None or value > best_value:
            best_value, best_perm = value, perm
    return OracleResult(best_value, best_perm, count, best_perm is not None)
