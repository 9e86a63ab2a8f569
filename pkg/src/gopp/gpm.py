"""Generalized power method: spectral start, fixed-point iteration, rate fit.

The iteration is S <- blockwise-polar(C S).  Stopping uses the Gram-image
residual ||S_next S_next^T - S S^T||_F <= tol; the reported solution is
gauge-fixed so its first block is the identity.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .linops import (
    RankDeficiencyWarning,
    RotationStack,
    StiefelStack,
    df,
    polar,
    polar_blockwise,
    top_d_left_singular,
)
from .model import GramMatrix

INIT_MODES = ("spectral", "ground_truth", "provided", "random")


class NumericalError(RuntimeError):
    """The solver produced non-finite values and aborted."""


@dataclass(frozen=True)
class GpmConfig:
    tol: float = 1e-6
    max_iter: int = 1000
    init: str = "spectral"
    seed: int = 0
    keep_iterates: bool = False
    diagnostics: bool = False
    time_limit_s: float | None = None

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}, got {self.init!r}")


@dataclass
class SolveReport:
    """Iteration trace and candidate solution (shared by the Stiefel solver)."""

    solution: StiefelStack
    iterations: int
    residual_history: list[float]
    objective_history: list[float]
    converged: bool
    rate_estimate: float | None = None
    iterates: list[StiefelStack] | None = None
    certificate: object = None
    timed_out: bool = False
    # Stiefel-solver extras
    p: int | None = None
    grad_norm_history: list[float] | None = None
    singular_values_of_s: list[float] | None = None

    def to_json_dict(self) -> dict:
        doc = {
            "version": 1,
            "converged": self.converged,
            "timed_out": self.timed_out,
            "iterations": self.iterations,
            "residual_history": [float(r) for r in self.residual_history],
            "objective_history": [float(o) for o in self.objective_history],
            "rate_estimate": self.rate_estimate,
            "solution": {
                "n": self.solution.n,
                "d": self.solution.d,
                "p": self.solution.p,
                "blocks_row_major": [b.flatten().tolist() for b in self.solution.blocks],
            },
        }
        if self.p is not None:
            doc["p"] = self.p
        if self.grad_norm_history is not None:
            doc["grad_norm_history"] = [float(g) for g in self.grad_norm_history]
        if self.singular_values_of_s is not None:
            doc["singular_values_of_S"] = [float(s) for s in self.singular_values_of_s]
        if self.certificate is not None:
            doc["certificate"] = self.certificate.to_json_dict()
        return doc


@dataclass(frozen=True)
class EpsilonDiagnostic:
    """Normalized distance to a known ground truth: d_F(S, Z) / sqrt(nd)."""

    epsilon_hat: float


def epsilon_hat(s: StiefelStack, z: StiefelStack) -> EpsilonDiagnostic:
    return EpsilonDiagnostic(epsilon_hat=df(s, z) / math.sqrt(s.n * s.d))


def objective(c: GramMatrix, s: StiefelStack) -> float:
    """<C, S S^T> = Tr(S^T C S)."""
    ss = s.stacked
    return float(np.sum((c.data @ ss) * ss))


def spectral_init(d_mat: np.ndarray, n: int) -> RotationStack:
    """Blockwise polar rounding of the top-d left singular basis of D (nd x m)."""
    d_mat = np.asarray(d_mat, dtype=float)
    if d_mat.shape[0] % n != 0:
        raise ValueError(f"{d_mat.shape[0]} rows do not split into {n} blocks")
    d = d_mat.shape[0] // n
    u = top_d_left_singular(d_mat, d)
    return polar_blockwise(u.reshape(n, d, d))


def random_init(n: int, d: int, rng: np.random.Generator, p: int | None = None) -> StiefelStack:
    """Blockwise polar of i.i.d. standard normal blocks."""
    p = d if p is None else p
    return polar_blockwise(rng.standard_normal((n, d, p)))


def gpm_step(c: GramMatrix, s: StiefelStack) -> StiefelStack:
    """One power step: blockwise polar of the block product C S."""
    cs = c.data @ s.stacked
    if not np.all(np.isfinite(cs)):
        raise NumericalError("non-finite block product C S")
    return polar_blockwise(cs.reshape(s.n, s.d, s.p))


def gauge_fix(s: StiefelStack) -> StiefelStack:
    """Right-multiply so block 1 becomes the identity (removes the global gauge)."""
    q = polar(s.blocks[0]).T
    return StiefelStack(s.blocks @ q)


def solve(
    c: GramMatrix,
    config: GpmConfig = GpmConfig(),
    d_for_init: np.ndarray | None = None,
    s_init: StiefelStack | None = None,
) -> SolveReport:
    """Run the power method to a fixed point of S = polar_blockwise(C S).

    Reaching max_iter is not an exception: the report comes back with
    converged=False and the partial history.
    """
    n, d = c.n, c.d
    if config.init == "spectral":
        if d_for_init is None:
            raise ValueError("spectral init needs the stacked data matrix D")
        s = spectral_init(d_for_init, n)
    elif config.init == "random":
        s = random_init(n, d, np.random.default_rng(config.seed))
    elif config.init in ("ground_truth", "provided"):
        if s_init is None:
            raise ValueError(f"init={config.init!r} needs an explicit starting stack")
        s = s_init
    start = time.monotonic()
    residual_history: list[float] = []
    objective_history = [objective(c, s)]
    iterates = [s] if config.keep_iterates else None
    gram_prev = s.stacked @ s.stacked.T
    converged = False
    timed_out = False
    iterations = 0
    for _ in range(config.max_iter):
        with warnings.catch_warnings():
            if not config.diagnostics:
                warnings.simplefilter("ignore", RankDeficiencyWarning)
            s = gpm_step(c, s)
        iterations += 1
        gram = s.stacked @ s.stacked.T
        residual = float(np.linalg.norm(gram - gram_prev))
        residual_history.append(residual)
        objective_history.append(objective(c, s))
        if iterates is not None:
            iterates.append(s)
        gram_prev = gram
        if residual <= config.tol:
            converged = True
            break
        if config.time_limit_s is not None and time.monotonic() - start > config.time_limit_s:
            timed_out = True
            break
    return SolveReport(
        solution=gauge_fix(s),
        iterations=iterations,
        residual_history=residual_history,
        objective_history=objective_history,
        converged=converged,
        iterates=iterates,
        timed_out=timed_out,
    )


# d_F values below this floor are treated as numerical zero in the rate fit.
RATE_FLOOR = 1e-12


def estimate_rate(report: SolveReport, reference: StiefelStack, window: int = 10) -> float:
    """Empirical linear rate: LS slope of log d_F(S^t, reference) (final window).

    Returns 0 by convention when the trajectory sits at the numerical floor
    from the start (exact fixed point).
    """
    if report.iterates is None:
        raise ValueError("rate estimation needs keep_iterates=True in the config")
    scale = math.sqrt(reference.n * reference.d)
    dists = np.array([df(s, reference) for s in report.iterates])
    above = np.flatnonzero(dists > RATE_FLOOR * scale)
    if len(above) < 3:
        # Floored (almost) immediately: exact fixed point, rate 0 by convention.
        return 0.0
    idx = above[-min(window, len(above)) :]
    slope = np.polyfit(idx.astype(float), np.log(dists[idx]), 1)[0]
    return float(np.exp(slope))
