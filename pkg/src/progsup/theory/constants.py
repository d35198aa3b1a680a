"""Gaussian-norm constants, chi-square moments and Khatri-Rao algebra."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln, poch


def gamma_constant(m: int) -> float:
    """Expected norm of a standard Gaussian vector in ``m`` dimensions,
    ``sqrt(2) Gamma(m/2 + 1/2) / Gamma(m/2)``."""
    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    return math.sqrt(2.0) * math.exp(math.lgamma(m / 2.0 + 0.5) - math.lgamma(m / 2.0))


def mc_gamma_constant(m: int, n: int = 100_000, seed: int = 0, chunk: int = 20_000) -> tuple[float, float]:
    """Sample mean of ``|g|`` over ``n`` draws ``g ~ N(0, I_m)``, with its standard error."""
    if m < 1 or n < 2:
        raise ValueError("need m >= 1 and n >= 2")
    rng = np.random.default_rng(seed)
    norms = np.concatenate([np.linalg.norm(rng.standard_normal((min(chunk, n - s), m)), axis=1)
                            for s in range(0, n, chunk)])
    return float(norms.mean()), float(norms.std(ddof=1) / math.sqrt(n))


def chi2_moment(m: int, k: float) -> float:
    """``E[Z^k]`` for ``Z ~ chi^2_m``, i.e. ``2^k Gamma(m/2 + k) / Gamma(m/2)``."""
    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    if k <= -m / 2.0:
        raise ValueError(f"moment of order {k} does not exist for {m} degrees of freedom")
    if float(k).is_integer() and k >= 0:
        # rising factorial; exact for integer orders
        return float(2.0 ** k * poch(m / 2.0, k))
    return float(2.0 ** k * np.exp(gammaln(m / 2.0 + k) - gammaln(m / 2.0)))


def khatri_rao(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Columnwise Kronecker product: column ``c`` is ``kron(A[:, c], B[:, c])``."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise ValueError(f"need two matrices with equal column counts, got {A.shape} and {B.shape}")
    return np.einsum("ic,jc->ijc", A, B).reshape(A.shape[0] * B.shape[0], A.shape[1])


def khatri_rao_power(X: np.ndarray, k: int) -> np.ndarray:
    if k < 1:
        raise ValueError("power must be at least 1")
    out = X
    for _ in range(k - 1):
        out = khatri_rao(out, X)
    return out


def kron_power(v: np.ndarray, k: int) -> np.ndarray:
    out = np.asarray(v)
    for _ in range(k - 1):
        out = np.kron(out, v)
    return out


def _rel(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def verify_identity_chain(seed: int, d: int = 4, n: int = 6, l: int = 1) -> dict[str, float]:
    """Relative errors of the linear-algebra identities behind the RKHS bound.

    Columns of ``X`` are data points.  Checked on one random draw:

    * ``khatri_rao``: ``(X kr X)^T (gamma kron beta) = (X^T gamma) * (X^T beta)``
    * ``kron_norm``: ``|a kron b|^2 = |a|^2 |b|^2``
    * ``odd_power``: with ``q = 2l + 1``,
      ``(X^{kr (q+1)})^T (gamma kron beta^{kron q}) = (X^T gamma) * (X^T beta)^q``
    * ``kron_power_norm``: ``|beta^{kron q}| = |beta|^q``
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((d, n))
    X /= np.linalg.norm(X, axis=0)
    gamma, beta = rng.standard_normal(d), rng.standard_normal(d)
    a, b = rng.standard_normal(d), rng.standard_normal(d + 1)
    q = 2 * l + 1
    lhs_odd = khatri_rao_power(X, q + 1).T @ np.kron(gamma, kron_power(beta, q))
    return {
        "khatri_rao": _rel(khatri_rao(X, X).T @ np.kron(gamma, beta), (X.T @ gamma) * (X.T @ beta)),
        "kron_norm": _rel(np.linalg.norm(np.kron(a, b)) ** 2, np.linalg.norm(a) ** 2 * np.linalg.norm(b) ** 2),
        "odd_power": _rel(lhs_odd, (X.T @ gamma) * (X.T @ beta) ** q),
        "kron_power_norm": _rel(np.linalg.norm(kron_power(beta, q)), np.linalg.norm(beta) ** q),
    }
