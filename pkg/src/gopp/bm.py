"""Low-rank factorized ascent on the block Stiefel manifold St(d,p)^n.

Maximizes <C, S S^T> by Riemannian gradient ascent with polar retraction.
At p = d this is the original orthogonal-block problem; at p = nd it attains
the convex relaxation's value.  Includes sampled second-order criticality
residuals and the deterministic landscape bounds for synthetic instances.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .certificate import build_lambda
from .gpm import NumericalError, SolveReport, objective, random_init
from .linops import RankDeficiencyWarning, StiefelStack, partial_trace, polar_blockwise
from .model import GramMatrix, SyntheticInstance


@dataclass(frozen=True)
class BmConfig:
    p: int  # columns per block, >= d (the benign-landscape regime is p >= 2d+1)
    step: str = "backtracking"  # or "fixed"
    eta: float | None = None  # initial (or fixed) step; default 1/||C||
    beta: float = 0.5  # backtracking shrink factor
    c_armijo: float = 1e-4  # sufficient-increase constant
    grad_tol: float = 1e-8  # stop when ||grad|| <= grad_tol * ||C||_F
    max_iter: int = 5000
    seed: int = 0
    time_limit_s: float | None = None

    def __post_init__(self):
        if self.step not in ("backtracking", "fixed"):
            raise ValueError(f"unknown step rule {self.step!r}")
        if self.eta is not None and self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


def euclidean_gradient(c: GramMatrix, s: StiefelStack) -> np.ndarray:
    """Gradient of <C, S S^T> in the ambient space: block i is 2 sum_j C_ij S_j."""
    return 2.0 * (c.data @ s.stacked).reshape(s.n, s.d, s.p)


def tangent_project(s_i: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Project g onto the tangent space at a Stiefel block: g - sym(g s^T) s."""
    sym = 0.5 * (g @ s_i.T + s_i @ g.T)
    return g - sym @ s_i


def tangent_project_stack(s: StiefelStack, g: np.ndarray) -> np.ndarray:
    sym = 0.5 * (g @ s.blocks.transpose(0, 2, 1) + s.blocks @ g.transpose(0, 2, 1))
    return g - sym @ s.blocks


def riemannian_gradient(c: GramMatrix, s: StiefelStack) -> np.ndarray:
    """Tangent projection of sum_j C_ij S_j (half the ambient gradient).

    Vanishes exactly at first-order critical points; kept at this
    normalization so its norm is directly comparable with the stationarity
    residual of the dual certificate.
    """
    g = (c.data @ s.stacked).reshape(s.n, s.d, s.p)
    return tangent_project_stack(s, g)


def retract(s: StiefelStack, t: np.ndarray, step: float) -> StiefelStack:
    """Polar retraction of S + step * T back onto the manifold.

    A rank-deficient block (possible for a wild step) is handled by halving
    the step until the polar factor is unique again.
    """
    if step < 0:
        raise ValueError("step must be nonnegative")
    if step == 0.0:
        return s
    for _ in range(60):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RankDeficiencyWarning)
            out = polar_blockwise(s.blocks + step * t)
        if not any(issubclass(w.category, RankDeficiencyWarning) for w in caught):
            return out
        step *= 0.5
    raise NumericalError("retraction failed: persistent rank deficiency")


def solve_bm(
    c: GramMatrix,
    config: BmConfig,
    init: StiefelStack | None = None,
) -> SolveReport:
    """Gradient ascent on St(d,p)^n; stops at small Riemannian gradient.

    Backtracking keeps the objective monotone; a non-finite objective raises
    :class:`NumericalError`.
    """
    n, d, p = c.n, c.d, config.p
    if p < d:
        raise ValueError(f"p={p} must be at least d={d}")
    if init is not None:
        if (init.n, init.d, init.p) != (n, d, p):
            raise ValueError("init stack does not match (n, d, p)")
        s = init
    else:
        s = random_init(n, d, np.random.default_rng(config.seed), p=p)
    c_fro = float(np.linalg.norm(c.data))
    eta = config.eta if config.eta is not None else 1.0 / max(np.linalg.norm(c.data, 2), 1e-300)
    start = time.monotonic()
    f = objective(c, s)
    objective_history = [f]
    grad_norm_history: list[float] = []
    residual_history: list[float] = []
    converged = False
    timed_out = False
    iterations = 0
    for _ in range(config.max_iter):
        grad = riemannian_gradient(c, s)
        gnorm = float(np.linalg.norm(grad))
        grad_norm_history.append(gnorm)
        if gnorm <= config.grad_tol * c_fro:
            converged = True
            break
        # Directional derivative along grad is 2 ||grad||^2 (ambient factor).
        slope = 2.0 * gnorm * gnorm
        if config.step == "fixed":
            s_new = retract(s, grad, eta)
            f_new = objective(c, s_new)
        else:
            step = eta
            while True:
                s_new = retract(s, grad, step)
                f_new = objective(c, s_new)
                if f_new >= f + config.c_armijo * step * slope:
                    break
                step *= config.beta
                if step < 1e-20:
                    s_new, f_new = s, f
                    break
            eta = min(step / config.beta, 1e6 * eta)  # try growing next time
        if not math.isfinite(f_new):
            raise NumericalError("objective became non-finite during ascent")
        gram_res = float(
            np.linalg.norm(s_new.stacked @ s_new.stacked.T - s.stacked @ s.stacked.T)
        )
        residual_history.append(gram_res)
        s, f = s_new, f_new
        objective_history.append(f)
        iterations += 1
        if config.time_limit_s is not None and time.monotonic() - start > config.time_limit_s:
            timed_out = True
            break
    svals = np.linalg.svd(s.stacked, compute_uv=False)
    return SolveReport(
        solution=s,
        iterations=iterations,
        residual_history=residual_history,
        objective_history=objective_history,
        converged=converged,
        timed_out=timed_out,
        p=p,
        grad_norm_history=grad_norm_history,
        singular_values_of_s=[float(v) for v in svals],
    )


@dataclass
class SecondOrderResult:
    """Sampled second-order criticality residual at a first-order critical point.

    residual is the minimum of the sampled curvature form
    sum_i <Lambda_ii, T_i T_i^T> - sum_ij <C_ij, T_i T_j^T> over unit tangent
    stacks T, combined with min_i lambda_min(Lambda_ii) (the multiplier PSD
    part of the second-order condition; it is the only nontrivial part when
    the tangent space is zero-dimensional, e.g. d = p = 1).  A markedly
    negative residual witnesses an escape direction.
    """

    residual: float
    sampled_min: float
    min_block_eig: float
    escape_tangent: np.ndarray | None  # (n, d, p) tangent stack, if sampled min won
    escape_block: int | None  # block whose Lambda_ii eigenvalue won otherwise
    escape_vector: np.ndarray | None


def second_order_residual(
    c: GramMatrix,
    s: StiefelStack,
    trials: int = 100,
    seed: int = 0,
    weight: np.ndarray | None = None,
) -> SecondOrderResult:
    """Monte Carlo probe of the second-order condition at S.

    Tangent stacks are tangent-projected i.i.d. normal blocks, optionally
    left-multiplied by a d x d weight (the synthetic-mode Pi^{-1/2}
    construction).  S must be first-order critical.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    grad = riemannian_gradient(c, s)
    c_fro = float(np.linalg.norm(c.data))
    if np.linalg.norm(grad) > 1e-6 * c_fro:
        raise ValueError("S is not first-order critical; second-order probe undefined")
    raw = build_lambda(c, s)
    lam = 0.5 * (raw + raw.transpose(0, 2, 1))
    rng = np.random.default_rng(seed)
    sampled_min = math.inf
    best_tangent = None
    for _ in range(trials):
        t = rng.standard_normal((s.n, s.d, s.p))
        if weight is not None:
            t = weight @ t
        t = tangent_project_stack(s, t)
        nrm = np.linalg.norm(t)
        if nrm == 0.0:
            val = 0.0
        else:
            t = t / nrm
            ts = t.reshape(s.n * s.d, s.p)
            lam_term = float(np.einsum("iab,iac,ibc->", lam, t, t))
            c_term = float(np.sum((c.data @ ts) * ts))
            val = lam_term - c_term
        if val < sampled_min:
            sampled_min = val
            best_tangent = t
    block_eigs = [np.linalg.eigh(b) for b in lam]
    min_idx = int(np.argmin([e[0][0] for e in block_eigs]))
    min_block_eig = float(block_eigs[min_idx][0][0])
    if sampled_min <= min_block_eig:
        return SecondOrderResult(
            residual=sampled_min,
            sampled_min=sampled_min,
            min_block_eig=min_block_eig,
            escape_tangent=best_tangent,
            escape_block=None,
            escape_vector=None,
        )
    return SecondOrderResult(
        residual=min_block_eig,
        sampled_min=sampled_min,
        min_block_eig=min_block_eig,
        escape_tangent=None,
        escape_block=min_idx,
        escape_vector=block_eigs[min_idx][1][:, 0],
    )


@dataclass
class LandscapeReport:
    """Deterministic benign-landscape bounds evaluated on a synthetic instance."""

    delta_pi_norm: float  # ||Delta_tilde^Pi||
    partial_trace_norm: float  # ||Tr_d(Delta_tilde^Pi)||
    bound_rhs: float  # n(p - 2d) / (8 kappa (p + d) sqrt(d))
    block_noise_bound: float  # sigma_min(A) / (12 kappa)
    max_block_noise: float
    satisfied: bool
    gamma: float
    delta: float


def landscape_bounds(instance: SyntheticInstance, p: int) -> LandscapeReport:
    """Evaluate the no-spurious-local-maxima conditions for a given p.

    Works in the identity-gauge frame: observations are de-rotated by the
    ground-truth blocks first, which leaves every norm involved unchanged.
    """
    a = instance.truth.points
    n, d = instance.n, instance.d
    if p < d:
        raise ValueError(f"p={p} must be at least d={d}")
    pi = a @ a.T
    svals = np.linalg.svd(a, compute_uv=False)
    if svals[-1] <= 0.0 or not np.isfinite(svals[-1]):
        raise ValueError("A A^T is singular; rescaled noise undefined")
    kappa = float(svals[0] / svals[-1])
    derotated = np.stack(
        [
            instance.rotations.blocks[i].T @ instance.observed.clouds[i].points
            for i in range(n)
        ]
    )
    delta_blocks = derotated - a  # includes shift terms if the instance has any
    delta = delta_blocks.reshape(n * d, instance.m)
    z = np.tile(np.eye(d), (n, 1))
    za = z @ a
    delta_tilde = delta @ a.T @ z.T + za @ delta.T + delta @ delta.T
    pi_inv = np.linalg.inv(pi)
    delta_tilde_pi = np.kron(np.eye(n), pi_inv) @ delta_tilde
    delta_pi_norm = float(np.linalg.norm(delta_tilde_pi, 2))
    ptr = partial_trace(delta_tilde, pi_inv)
    partial_trace_norm = float(np.linalg.norm(ptr, 2))
    bound_rhs = n * (p - 2 * d) / (8.0 * kappa * (p + d) * math.sqrt(d))
    block_noise_bound = float(svals[-1]) / (12.0 * kappa)
    max_block_noise = float(max(np.linalg.norm(delta_blocks[i], 2) for i in range(n)))
    gamma = max(partial_trace_norm / delta_pi_norm, 1.0) if delta_pi_norm > 0 else 1.0
    delta_const = (
        (2.0 + math.sqrt(5.0)) * (p + d) * gamma / (p - 2 * d)
        if p > 2 * d
        else math.inf
    )
    satisfied = (
        max(delta_pi_norm, partial_trace_norm) <= bound_rhs
        and max_block_noise <= block_noise_bound
    )
    return LandscapeReport(
        delta_pi_norm=delta_pi_norm,
        partial_trace_norm=partial_trace_norm,
        bound_rhs=bound_rhs,
        block_noise_bound=block_noise_bound,
        max_block_noise=max_block_noise,
        satisfied=satisfied,
        gamma=gamma,
        delta=delta_const,
    )
