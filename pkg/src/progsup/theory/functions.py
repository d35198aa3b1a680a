"""Multi-mode polynomial reasoning functions.

Component ``i`` of a function is

    g_i(x) = sum_r (gamma_r . x) * h_ri(x),    h_ri(x) = sum_j alpha_rij (beta_rij . x) ** p_rij

so each mode ``r`` has a cluster direction ``gamma_r`` (shared by all
outputs) and its own low-degree polynomial per output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

ALLOWED_POWERS = (1, 2)
MIN_ANGLE_DEG = 60.0


@dataclass(frozen=True)
class PolyTerm:
    alpha: float
    beta: np.ndarray
    p: int

    def __post_init__(self):
        if self.p not in ALLOWED_POWERS:
            raise ValueError(f"exponent must be one of {ALLOWED_POWERS}, got {self.p}")
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.ndim != 1 or not np.all(np.isfinite(beta)):
            raise ValueError("beta must be a finite vector")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha", float(self.alpha))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.alpha * (np.asarray(x) @ self.beta) ** self.p


@dataclass(frozen=True)
class ReasoningMode:
    gamma: np.ndarray
    terms: tuple

    def __post_init__(self):
        if not self.terms:
            raise ValueError("a reasoning mode needs at least one term")
        gamma = np.asarray(self.gamma, dtype=np.float64)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "terms", tuple(self.terms))
        for t in self.terms:
            if t.beta.shape != gamma.shape:
                raise ValueError(f"beta of shape {t.beta.shape} does not match gamma {gamma.shape}")

    def module(self, x: np.ndarray) -> np.ndarray:
        """The mode's polynomial h(x), without the gamma gate."""
        return sum(t(x) for t in self.terms)


class MultiModeFunction:
    """``components[i][r]`` is the reasoning mode ``r`` of output ``i``."""

    def __init__(self, components: Sequence[Sequence[ReasoningMode]]):
        if not components or not components[0]:
            raise ValueError("need at least one output and one mode")
        self.components = tuple(tuple(c) for c in components)
        self.m = len(self.components)
        self.R = len(self.components[0])
        self.d = int(self.components[0][0].gamma.shape[0])
        for comp in self.components:
            if len(comp) != self.R:
                raise ValueError("every output needs the same number of modes")
            for mode in comp:
                if mode.gamma.shape != (self.d,):
                    raise ValueError(f"gamma of shape {mode.gamma.shape}, expected ({self.d},)")

    @property
    def gammas(self) -> np.ndarray:
        """[R, d] cluster directions, taken from the first output."""
        return np.stack([mode.gamma for mode in self.components[0]])

    def modes(self, i: int) -> tuple:
        return self.components[i]

    def terms(self, i: int):
        """Yields ``(r, gamma_r, term)`` for every term of output ``i``."""
        for r, mode in enumerate(self.components[i]):
            for t in mode.terms:
                yield r, mode.gamma, t


def _check_input(f: MultiModeFunction, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != f.d:
        raise ValueError(f"input of shape {x.shape} does not match dimension {f.d}")
    return X, single


def mode_logits(f: MultiModeFunction, x) -> np.ndarray:
    X, single = _check_input(f, x)
    out = X @ f.gammas.T
    return out[0] if single else out


def mode_posteriors(f: MultiModeFunction, x, temperature: float = 1.0) -> np.ndarray:
    """Softmax over the mode logits, scaled by ``temperature``."""
    z = mode_logits(f, x) * temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def mode_modules(f: MultiModeFunction, x) -> np.ndarray:
    """Per-mode polynomials, shape ``[n, R, m]`` (``[R, m]`` for one point)."""
    X, single = _check_input(f, x)
    out = np.stack([np.stack([f.components[i][r].module(X) for i in range(f.m)], axis=-1)
                    for r in range(f.R)], axis=1)
    return out[0] if single else out


def eval_mixture(f: MultiModeFunction, x, weights: str = "logits", temperature: float = 1.0) -> np.ndarray:
    """Mixture evaluation ``sum_r w_r(x) h_r(x)``.

    ``weights="logits"`` gates with the raw ``gamma_r . x`` and equals
    :func:`eval_function`; ``"softmax"`` uses the mode posteriors instead.
    """
    if weights == "logits":
        w = mode_logits(f, x)
    elif weights == "softmax":
        w = mode_posteriors(f, x, temperature)
    else:
        raise ValueError(f"unknown weighting {weights!r}")
    h = mode_modules(f, x)
    return np.einsum("...r,...rm->...m", w, h)


def eval_function(f: MultiModeFunction, x, return_aux: bool = False, temperature: float = 1.0):
    """Term-by-term evaluation of every output.

    With ``return_aux`` also returns the mode logits and softmax posteriors.
    """
    X, single = _check_input(f, x)
    y = np.zeros((X.shape[0], f.m))
    for i in range(f.m):
        for _, gamma, t in f.terms(i):
            y[:, i] += (X @ gamma) * t.alpha * (X @ t.beta) ** t.p
    y = y[0] if single else y
    if not return_aux:
        return y
    return y, mode_logits(f, x), mode_posteriors(f, x, temperature)


def separated_directions(rng: np.random.Generator, R: int, dim: int,
                         min_angle_deg: float = MIN_ANGLE_DEG, max_tries: int = 10000) -> np.ndarray:
    """``R`` random unit vectors whose pairwise angles are all at least ``min_angle_deg``."""
    max_cos = math.cos(math.radians(min_angle_deg)) + 1e-12
    out: list[np.ndarray] = []
    tries = 0
    while len(out) < R:
        if tries >= max_tries:
            raise ValueError(f"cannot place {R} directions {min_angle_deg} degrees apart in dimension {dim}")
        tries += 1
        v = rng.standard_normal(dim)
        v /= np.linalg.norm(v)
        if all(float(v @ u) <= max_cos for u in out):
            out.append(v)
    return np.stack(out)


def gen_multimode(seed: int, d: int, m: int, R: int, J: int, p_set: Sequence[int] = ALLOWED_POWERS,
                  split: Optional[int] = None, beta_scale: tuple[float, float] = (0.5, 1.5)) -> MultiModeFunction:
    """Random multi-mode function.

    With ``split`` the gammas live on coordinates ``[:split]`` and the betas on
    ``[split:]``, i.e. the mode is read off the question block and the
    modules act on the visual block.
    """
    for name, v in (("d", d), ("m", m), ("R", R), ("J", J)):
        if v < 1:
            raise ValueError(f"{name} must be at least 1, got {v}")
    p_set = tuple(p_set)
    if not p_set or any(p not in ALLOWED_POWERS for p in p_set):
        raise ValueError(f"p_set must be a nonempty subset of {ALLOWED_POWERS}")
    if split is not None and not 0 < split < d:
        raise ValueError(f"split must lie strictly between 0 and {d}")
    rng = np.random.default_rng(seed)
    g_lo, g_hi = (0, split) if split is not None else (0, d)
    b_lo, b_hi = (split, d) if split is not None else (0, d)

    gammas = np.zeros((R, d))
    gammas[:, g_lo:g_hi] = separated_directions(rng, R, g_hi - g_lo)
    components = []
    for _ in range(m):
        modes = []
        for r in range(R):
            terms = []
            for _ in range(J):
                beta = np.zeros(d)
                u = rng.standard_normal(b_hi - b_lo)
                beta[b_lo:b_hi] = u / np.linalg.norm(u) * rng.uniform(*beta_scale)
                terms.append(PolyTerm(rng.uniform(-1.0, 1.0), beta, int(rng.choice(p_set))))
            modes.append(ReasoningMode(gammas[r].copy(), tuple(terms)))
        components.append(modes)
    return MultiModeFunction(components)


def unit_rows(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return X / np.linalg.norm(X, axis=-1, keepdims=True)
