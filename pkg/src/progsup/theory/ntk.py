"""Infinite-width Gram matrix, RKHS norms and sample-complexity bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .functions import MultiModeFunction, eval_function

UNIT_TOL = 1e-8
COND_LIMIT = 1e12
RIDGE = 1e-10


def _check_unit_rows(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-d dataset, got shape {X.shape}")
    norms = np.linalg.norm(X, axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        raise ValueError(f"rows must have unit norm (worst deviation {np.max(np.abs(norms - 1.0)):.2e})")
    return X


def gram_infty(X: np.ndarray) -> np.ndarray:
    """``H_ij = k (pi - arccos k) / (2 pi)`` with ``k = x_i . x_j``."""
    X = _check_unit_rows(X)
    K = np.clip(X @ X.T, -1.0, 1.0)
    H = K * (np.pi - np.arccos(K)) / (2.0 * np.pi)
    return (H + H.T) / 2.0


def mc_gram_infty(X: np.ndarray, n_samples: int = 1_000_000, seed: int = 0,
                  chunk: int = 100_000) -> tuple[np.ndarray, np.ndarray]:
    """Monte-Carlo estimate of ``E_w[x_i.x_j 1{w.x_i >= 0, w.x_j >= 0}]``.

    Returns the mean and its standard error, both ``[n, n]``.
    """
    X = _check_unit_rows(X)
    rng = np.random.default_rng(seed)
    n, d = X.shape
    hits = np.zeros((n, n))
    done = 0
    while done < n_samples:
        k = min(chunk, n_samples - done)
        act = (rng.standard_normal((k, d)) @ X.T >= 0.0).astype(np.float64)
        hits += act.T @ act
        done += k
    prob = hits / n_samples
    K = X @ X.T
    se = np.abs(K) * np.sqrt(prob * (1.0 - prob) / n_samples)
    return K * prob, se


@dataclass
class RkhsNorm:
    value: float
    regularized: bool
    condition: float


def rkhs_norm_info(X: np.ndarray, y: np.ndarray) -> RkhsNorm:
    """``sqrt(y^T H^-1 y)`` with a tiny ridge when H is badly conditioned."""
    H = gram_infty(X)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != H.shape[0]:
        raise ValueError(f"{y.shape[0]} targets for {H.shape[0]} inputs")
    eig = np.linalg.eigvalsh(H)
    cond = float(eig[-1] / eig[0]) if eig[0] > 0 else math.inf
    regularized = cond > COND_LIMIT
    if regularized:
        H = H + RIDGE * np.eye(H.shape[0])
    try:
        fac = cho_factor(H, lower=True)
    except LinAlgError as exc:
        raise LinAlgError("Gram matrix is singular even after regularization") from exc
    q = float(y @ cho_solve(fac, y))
    return RkhsNorm(math.sqrt(max(q, 0.0)), regularized, cond)


def empirical_rkhs_norm(X: np.ndarray, y: np.ndarray) -> float:
    return rkhs_norm_info(X, y).value


# ---------------------------------------------------------------- bounds


@dataclass(frozen=True)
class BoundValue:
    numerator: float
    value: float


def _complexity(term_sums: Iterable[float], m: int, eps: float, delta: float) -> BoundValue:
    if eps <= 0 or delta <= 0 or m < 1:
        raise ValueError("need eps > 0, delta > 0 and m >= 1")
    numerator = max(term_sums) + math.log(m / delta)
    return BoundValue(numerator, numerator / (eps / m) ** 2)


def term_complexity(alpha: float, beta_norm: float, p: int, gamma_norm: float = 1.0,
                    pi_factor: bool = False) -> float:
    """One summand of the bound numerator: ``[pi] p |alpha| |gamma| |beta|^p``."""
    c = p * abs(alpha) * gamma_norm * beta_norm ** p
    return math.pi * c if pi_factor else c


def bound_thm41(terms: Sequence[Sequence[tuple]], m: int, eps: float, delta: float) -> BoundValue:
    """Sample complexity of a single-mode polynomial.

    ``terms[i]`` lists ``(alpha, beta_norm, p)`` for output ``i``.
    """
    sums = [sum(term_complexity(a, b, p) for a, b, p in comp) for comp in terms]
    return _complexity(sums, m, eps, delta)


def function_complexity(f: MultiModeFunction, i: int, pi_factor: bool = True) -> float:
    """Sum over modes and terms of ``pi p |alpha| |gamma_r| |beta|^p`` for output ``i``.

    This bounds the RKHS norm of output ``i`` on any unit-norm dataset.
    """
    return sum(term_complexity(t.alpha, float(np.linalg.norm(t.beta)), t.p,
                               float(np.linalg.norm(g)), pi_factor)
               for _, g, t in f.terms(i))


def bound_thm42(f: MultiModeFunction, eps: float, delta: float, pi_factor: bool = True) -> BoundValue:
    """Sample complexity of a multi-mode function."""
    return _complexity([function_complexity(f, i, pi_factor) for i in range(f.m)], f.m, eps, delta)


@dataclass
class BoundReport:
    empirical_norm: float
    analytic_bound: float
    margin: float
    regularized: bool = False

    @property
    def holds(self) -> bool:
        return self.empirical_norm <= self.analytic_bound


def check_bound(f: MultiModeFunction, X: np.ndarray, i: int = 0) -> BoundReport:
    """Compare the empirical RKHS norm of output ``i`` on ``X`` with its analytic bound."""
    y = eval_function(f, X)[:, i]
    info = rkhs_norm_info(X, y)
    bound = function_complexity(f, i)
    return BoundReport(info.value, bound, bound - info.value, info.regularized)


def bound_sweep(n_instances: int = 100, seed: int = 0, d_range: tuple[int, int] = (4, 16),
                n_range: tuple[int, int] = (8, 64), p_set: Sequence[int] = (1, 2),
                max_modes: int = 3, max_terms: int = 3) -> list[BoundReport]:
    """Bound checks on random functions and random unit-norm datasets.

    Dimension 4 is the default floor: a degree-two term gated by ``gamma``
    is an odd cubic, which the ReLU kernel cannot represent, and in two or
    three dimensions 64 points are already enough to expose that.
    """
    from .functions import gen_multimode, unit_rows
    out = []
    for k in range(n_instances):
        rng = np.random.default_rng([seed, k])
        d = int(rng.integers(d_range[0], d_range[1] + 1))
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        R = int(rng.integers(1, max_modes + 1))
        J = int(rng.integers(1, max_terms + 1))
        m = int(rng.integers(1, 4))
        f = gen_multimode(int(rng.integers(2 ** 31)), d, m, R, J, p_set)
        X = unit_rows(rng.standard_normal((n, d)))
        out.append(check_bound(f, X, int(rng.integers(m))))
    return out
