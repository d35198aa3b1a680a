"""Wide two-layer ReLU networks and joint vs decomposed learning curves."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .functions import MultiModeFunction, eval_mixture, gen_multimode


@dataclass
class RegressionData:
    X_train: np.ndarray
    Y_train: np.ndarray
    X_test: np.ndarray
    Y_test: np.ndarray

    def __post_init__(self):
        for name in ("Y_train", "Y_test"):
            y = np.asarray(getattr(self, name), dtype=np.float64)
            setattr(self, name, y[:, None] if y.ndim == 1 else y)
        self.X_train = np.asarray(self.X_train, dtype=np.float64)
        self.X_test = np.asarray(self.X_test, dtype=np.float64)


@dataclass
class TwoLayerNet:
    W: np.ndarray       # [d, width], trained
    A: np.ndarray       # [width, m], fixed +-1/sqrt(width)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return np.maximum(X @ self.W, 0.0) @ self.A


@dataclass
class MLPResult:
    net: TwoLayerNet
    train_error: float
    test_error: float
    diverged: bool
    losses: list = field(default_factory=list)


def mean_squared_error(pred: np.ndarray, target: np.ndarray) -> float:
    return float(np.mean((pred - target) ** 2))


def init_two_layer(d: int, m: int, width: int, seed: int, symmetric: bool = True) -> TwoLayerNet:
    """Gaussian first layer and random sign output layer.

    ``symmetric`` duplicates every hidden unit with the opposite output sign so
    the network starts at exactly zero.
    """
    rng = np.random.default_rng(seed)
    if symmetric:
        if width % 2:
            raise ValueError("symmetric initialisation needs an even width")
        half = rng.standard_normal((d, width // 2))
        signs = rng.choice([-1.0, 1.0], size=(width // 2, m))
        W = np.concatenate([half, half], axis=1)
        A = np.concatenate([signs, -signs], axis=0)
    else:
        W = rng.standard_normal((d, width))
        A = rng.choice([-1.0, 1.0], size=(width, m))
    return TwoLayerNet(W, A / math.sqrt(width))


def train_overparam_mlp(data: RegressionData, width: int = 4096, lr: float = 1.0, iters: int = 1000,
                        seed: int = 0, symmetric: bool = True) -> MLPResult:
    """Full-batch gradient descent on the first layer, loss ``mean |f(x) - y|^2 / 2``.

    A loss ten times above its initial value stops training and is reported
    through ``diverged``.
    """
    X, Y = data.X_train, data.Y_train
    n, d = X.shape
    net = init_two_layer(d, Y.shape[1], width, seed, symmetric)
    losses = []
    diverged = False
    first = None
    for _ in range(iters):
        pre = X @ net.W
        act = pre > 0.0
        resid = np.maximum(pre, 0.0) @ net.A - Y
        loss = 0.5 * float(np.mean(np.sum(resid ** 2, axis=1)))
        losses.append(loss)
        first = loss if first is None else first
        if not math.isfinite(loss) or (first > 0 and loss > 10.0 * first):
            diverged = True
            break
        net.W -= lr * (X.T @ ((resid @ net.A.T) * act)) / n
    test = mean_squared_error(net(data.X_test), data.Y_test) if not diverged else math.inf
    train = mean_squared_error(net(X), Y) if not diverged else math.inf
    return MLPResult(net, train, test, diverged, losses)


# ---------------------------------------------------------------- mode classifier


@dataclass
class ModeClassifier:
    """Linear logits on the question block followed by a softmax."""

    weights: np.ndarray    # [d_q, R]

    def logits(self, Q: np.ndarray) -> np.ndarray:
        return Q @ self.weights

    def posteriors(self, Q: np.ndarray) -> np.ndarray:
        z = self.logits(Q)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, Q: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(Q), axis=1)


def fit_mode_classifier(Q: np.ndarray, labels: np.ndarray, R: int, l2: float = 1e-3) -> ModeClassifier:
    """Multinomial logistic regression by L-BFGS with a small weight penalty."""
    n, dq = Q.shape
    onehot = np.eye(R)[labels]

    def objective(w):
        W = w.reshape(dq, R)
        z = Q @ W
        z = z - z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        p = np.exp(logp)
        loss = -np.sum(onehot * logp) / n + 0.5 * l2 * np.sum(W ** 2)
        grad = Q.T @ (p - onehot) / n + l2 * W
        return loss, grad.reshape(-1)

    res = minimize(objective, np.zeros(dq * R), jac=True, method="L-BFGS-B")
    return ModeClassifier(res.x.reshape(dq, R))


# ---------------------------------------------------------------- curves


@dataclass(frozen=True)
class CurveConfig:
    R: int = 4
    d: int = 16
    m: int = 4
    J: int = 2
    p_set: tuple = (1, 2)
    d_q: int = 8
    temperature: float = 20.0
    cluster_noise: float = 0.5
    n_test: int = 2000
    width: int = 1024
    lr: float = 2.0
    iters: int = 600

    def to_dict(self) -> dict:
        return asdict(self)


def sample_task(f: MultiModeFunction, n: int, rng: np.random.Generator, d_q: int,
                cluster_noise: float, temperature: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inputs ``x = (q, v) / sqrt(2)`` with ``q`` near one mode direction.

    Returns unit-norm inputs, softmax-mixture targets and the mode labels.
    """
    gam = f.gammas[:, :d_q]
    labels = rng.integers(0, f.R, size=n)
    q = gam[labels] + cluster_noise * rng.standard_normal((n, d_q)) / math.sqrt(d_q)
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    v = rng.standard_normal((n, f.d - d_q))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    X = np.concatenate([q, v], axis=1) / math.sqrt(2.0)
    Y = eval_mixture(f, X, weights="softmax", temperature=temperature)
    return X, Y, labels


@dataclass
class CurvePoint:
    mode: str
    n: int
    seed: int
    test_error: float
    mode_accuracy: Optional[float] = None
    diverged: bool = False


def _fit_cell(f: MultiModeFunction, cfg: CurveConfig, mode: str, n: int, seed: int) -> list[CurvePoint]:
    rng = np.random.default_rng([seed, n, 7])
    X, Y, labels = sample_task(f, n, rng, cfg.d_q, cfg.cluster_noise, cfg.temperature)
    Xt, Yt, lt = sample_task(f, cfg.n_test, np.random.default_rng([seed, 99991]), cfg.d_q,
                             cfg.cluster_noise, cfg.temperature)
    net_seed = int(np.random.default_rng([seed, n, 11]).integers(2 ** 31))
    if mode == "joint":
        res = train_overparam_mlp(RegressionData(X, Y, Xt, Yt), cfg.width, cfg.lr, cfg.iters, net_seed)
        return [CurvePoint("joint", n, seed, res.test_error, None, res.diverged)]
    if mode != "decomposed":
        raise ValueError(f"unknown learner {mode!r}")

    clf = fit_mode_classifier(X[:, :cfg.d_q], labels, f.R)
    post = clf.posteriors(Xt[:, :cfg.d_q])
    route = np.argmax(post, axis=1)
    preds = np.zeros((f.R,) + Yt.shape)
    diverged = False
    for r in range(f.R):
        sel = labels == r
        if not sel.any():
            continue     # an empty mode predicts zero
        res = train_overparam_mlp(RegressionData(X[sel], Y[sel], Xt, Yt), cfg.width, cfg.lr,
                                  cfg.iters, net_seed)
        diverged |= res.diverged
        preds[r] = res.net(Xt)
    hard = preds[route, np.arange(len(Xt))]
    soft = np.einsum("nr,rnm->nm", post, preds)
    acc = float(np.mean(route == lt))
    return [CurvePoint("decomposed", n, seed, mean_squared_error(hard, Yt), acc, diverged),
            CurvePoint("decomposed_soft", n, seed, mean_squared_error(soft, Yt), acc, diverged)]


def sample_complexity_curve(cfg: CurveConfig, mode: str, n_grid: Sequence[int],
                            seeds: Sequence[int]) -> list[CurvePoint]:
    """Test error against training-set size for one learner.

    ``joint`` fits a single wide network to ``x -> y``.  ``decomposed`` fits a
    softmax mode classifier on the question block plus one network per mode on
    the samples carrying that mode label, and routes test points to the
    argmax mode (``decomposed_soft`` rows mix the networks by the posteriors).
    The function family for seed ``s`` is identical across learners.
    """
    out: list[CurvePoint] = []
    for seed in seeds:
        f = gen_multimode(seed, cfg.d, cfg.m, cfg.R, cfg.J, cfg.p_set, split=cfg.d_q)
        for n in n_grid:
            out.extend(_fit_cell(f, cfg, mode, n, seed))
    return out


def curve_csv(points: Sequence[CurvePoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mode", "n", "seed", "test_error"])
    for p in points:
        w.writerow([p.mode, p.n, p.seed, repr(p.test_error)])
    return buf.getvalue()
