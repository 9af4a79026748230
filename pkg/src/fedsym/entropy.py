"""Entropy balance, the truncated discrete Gaussian, and the sigma solver.

A class-count vector is a 1-D sequence of non-negative integers, one entry per
class. Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleTarget, InvalidDistribution, NoConvergence

SIGMA_MIN = 1e-4
SIGMA_MAX = 1e6
NEWTON_STEPS = 20
TWO_PI_E = 2.0 * math.pi * math.e


def _as_counts(counts) -> np.ndarray:
    arr = np.asarray(counts)
    if arr.ndim != 1:
        raise InvalidDistribution(f"counts must be 1-D, got shape {arr.shape}")
    if arr.size and (arr < 0).any():
        raise InvalidDistribution("counts must be non-negative")
    return arr


def shannon_entropy(counts) -> float:
    """Shannon entropy of the class proportions, in bits.

    Zero entries contribute nothing. Proportions are summed in sorted order so
    the result does not depend on the order of ``counts``.
    """
    arr = _as_counts(counts)
    total = arr.sum()
    if total <= 0:
        raise InvalidDistribution("entropy is undefined for all-zero counts")
    nz = arr[arr > 0]
    if nz.size == 1:
        return 0.0
    if (nz == nz[0]).all():
        return math.log2(nz.size)
    p = np.sort(nz.astype(np.float64) / float(total))
    h_nats = -float(np.sum(p * np.log(p)))
    return h_nats / math.log(2.0)


def entropy_balance(counts) -> float:
    """Shannon evenness: entropy divided by ``log2(len(counts))``, in [0, 1]."""
    arr = _as_counts(counts)
    if arr.size < 2:
        raise InvalidDistribution("entropy balance needs at least 2 classes")
    h = shannon_entropy(arr)
    return min(1.0, max(0.0, h / math.log2(arr.size)))


@dataclass(frozen=True)
class GaussianSpec:
    mu: float
    sigma: float
    l: int

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.l < 2:
            raise ValueError(f"support size must be >= 2, got {self.l}")


def discrete_gaussian_pmf(spec: GaussianSpec) -> np.ndarray:
    """PMF of the discrete Gaussian truncated to the class indices 0..l-1."""
    i = np.arange(spec.l, dtype=np.float64)
    z = (i - spec.mu) / spec.sigma
    # shift by the max exponent so tiny sigma does not underflow everything
    logw = -0.5 * z * z
    w = np.exp(logw - logw.max())
    return w / w.sum()


def sigma_lower_bound(beta: float, l: int) -> float:
    """Smallest sigma compatible with entropy balance ``beta`` over ``l`` classes."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    if l < 2:
        raise ValueError(f"l must be >= 2, got {l}")
    return math.sqrt(l ** (2.0 * beta) / TWO_PI_E)


def largest_remainder(weights, total: int) -> np.ndarray:
    """Integer apportionment of ``total`` proportional to ``weights``.

    Floors first, then hands the leftover units to the largest fractional
    parts; ties go to the lowest index.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty 1-D vector")
    if (w < 0).any() or not np.isfinite(w).all():
        raise ValueError("weights must be finite and non-negative")
    s = w.sum()
    if s <= 0:
        raise ValueError("weights must have a positive sum")
    quota = w / s * total
    base = np.floor(quota).astype(np.int64)
    left = int(total - base.sum())
    if left < 0 or left > w.size:
        raise ValueError("weights do not apportion cleanly")
    if left:
        frac = np.round(quota - base, 12)
        order = np.argsort(-frac, kind="stable")
        base[order[:left]] += 1
    return base


def counts_from_pmf(pmf, S: int) -> np.ndarray:
    """Integer class counts summing exactly to ``S``."""
    if S <= 0:
        raise ValueError(f"S must be positive, got {S}")
    p = np.asarray(pmf, dtype=np.float64)
    if abs(p.sum() - 1.0) > 1e-9:
        raise InvalidDistribution(f"pmf sums to {p.sum()!r}, expected 1")
    return largest_remainder(p, S)


def solver_mean(l: int) -> int:
    """Class index the solver centres its Gaussian on.

    An integer mean lets sigma -> 0 collapse onto a single class, so every
    beta in [0, 1] is reachable; a half-integer mean bottoms out at log_l(2).
    """
    return l // 2


def gaussian_counts(sigma: float, l: int, S: int) -> np.ndarray:
    return counts_from_pmf(discrete_gaussian_pmf(GaussianSpec(solver_mean(l), sigma, l)), S)


@dataclass(frozen=True)
class SolverResult:
    sigma: float
    counts: np.ndarray
    achieved_beta: float
    iterations: int

    @property
    def S(self) -> int:
        return int(self.counts.sum())


def max_balance(l: int, S: int) -> float:
    return entropy_balance(largest_remainder(np.ones(l), S))


def _xlogx(n: np.ndarray) -> np.ndarray:
    n = n.astype(np.float64)
    out = np.zeros_like(n)
    pos = n > 0
    out[pos] = n[pos] * np.log(n[pos])
    return out


def refine_counts(counts, beta: float, eps: float, max_moves: int | None = None) -> np.ndarray:
    """Nudge integer counts toward entropy balance ``beta`` one sample at a time.

    Each step applies the single-unit transfer between two classes that lands
    closest to ``beta`` (lowest (src, dst) pair on ties) and stops once within
    ``eps`` or when no transfer improves the error. The total is preserved.
    """
    c = np.array(counts, dtype=np.int64)
    l = c.size
    total = int(c.sum())
    ln_l = math.log(l)
    if max_moves is None:
        max_moves = 4 * l
    err = abs(entropy_balance(c) - beta)
    for _ in range(max_moves):
        if err < eps:
            break
        f = _xlogx(c)
        down = _xlogx(c - 1) - f  # change in sum(n ln n) when a class loses one
        up = _xlogx(c + 1) - f
        base = float(f.sum())
        delta = down[:, None] + up[None, :]
        cand = (math.log(total) - (base + delta) / total) / ln_l
        cand_err = np.abs(cand - beta)
        np.fill_diagonal(cand_err, np.inf)
        cand_err[c == 0, :] = np.inf
        src, dst = np.unravel_index(np.argmin(cand_err), cand_err.shape)
        trial = c.copy()
        trial[src] -= 1
        trial[dst] += 1
        trial_err = abs(entropy_balance(trial) - beta)
        if trial_err >= err:
            break
        c, err = trial, trial_err
    return c


def solve_sigma(beta: float, l: int, S: int, eps: float = 1e-3, max_iter: int = 100) -> SolverResult:
    """Find sigma whose rounded discrete-Gaussian counts hit entropy balance ``beta``.

    Newton steps along the tangent of the continuous approximation, then
    bisection on a bracket once NEWTON_STEPS have passed without success.
    When the rounding grid jumps over the tolerance window, the closest
    counts are refined by single-sample transfers (``refine_counts``).
    Raises NoConvergence, carrying the closest result, if that fails too.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    if l < 2:
        raise ValueError(f"l must be >= 2, got {l}")
    if S <= 0:
        raise ValueError(f"S must be positive, got {S}")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")

    if beta == 0.0:
        counts = np.zeros(l, dtype=np.int64)
        counts[solver_mean(l)] = S
        return SolverResult(SIGMA_MIN, counts, 0.0, 0)

    top = max_balance(l, S)
    if beta > top and beta - top >= eps:
        raise InfeasibleTarget(
            f"beta={beta} is out of reach with S={S} samples over {l} classes (max {top:.6f})"
        )
    if beta == 1.0:
        counts = largest_remainder(np.ones(l), S)
        return SolverResult(SIGMA_MAX, counts, top, 0)

    sigma = min(max(sigma_lower_bound(beta, l), SIGMA_MIN), SIGMA_MAX)
    lo = hi = None  # sigmas known to land below / above the target
    best = None
    ln_l = math.log(l)
    for it in range(1, max_iter + 1):
        counts = gaussian_counts(sigma, l, S)
        bhat = entropy_balance(counts)
        err = beta - bhat
        if best is None or abs(err) < abs(beta - best.achieved_beta):
            best = SolverResult(sigma, counts, bhat, it)
        if abs(err) < eps:
            return SolverResult(sigma, counts, bhat, it)
        if err > 0:
            lo = sigma if lo is None else max(lo, sigma)
        else:
            hi = sigma if hi is None else min(hi, sigma)
        if lo is not None and hi is not None and hi - lo <= 1e-12 * hi:
            break

        if it < NEWTON_STEPS:
            # tangent of the continuous balance curve: d beta / d sigma = 1 / (ln l * sigma)
            nxt = sigma + err * ln_l * sigma
            if lo is not None and hi is not None and not lo < nxt < hi:
                nxt = 0.5 * (lo + hi)
        elif lo is not None and hi is not None:
            nxt = 0.5 * (lo + hi)
        elif hi is None:
            nxt = 2.0 * sigma
        else:
            nxt = 0.5 * sigma
        sigma = min(max(nxt, SIGMA_MIN), SIGMA_MAX)

    refined = refine_counts(best.counts, beta, eps)
    rbeta = entropy_balance(refined)
    if abs(beta - rbeta) < eps:
        return SolverResult(best.sigma, refined, rbeta, best.iterations)
    raise NoConvergence(
        f"no sigma within eps={eps} of beta={beta} (l={l}, S={S}); best {best.achieved_beta:.6f}",
        best,
    )
