"""Gaussian process regression with an anisotropic squared-exponential
kernel, a linear mean function and marginal-likelihood hyperparameter fits.

Inputs are normalized to the unit cube through a ParameterBox; the mean is
fitted first by ordinary least squares on [1, x] and the GP models the
residuals.  The posterior mean at a new point is

    mu(x) + sum_i k(x, x_i) a_i,      a = (K + sigma_n^2 I)^{-1} (y - mu(X)),

with k the squared-exponential kernel with one length scale per input
dimension.  Hyperparameters (signal deviation, length scales, noise
deviation) maximize the log marginal likelihood over their logs, with
analytic gradients and multi-start local optimization.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize
from scipy.linalg import cho_solve, cholesky

from .model import ParameterBox

__all__ = [
    "TrainingSet",
    "GprModel",
    "SingularGram",
    "DegenerateData",
    "ZeroTruth",
    "ExtrapolationWarning",
    "kernel",
    "train",
    "predict",
    "evaluate",
    "log_marginal_likelihood",
    "save_model",
    "load_model",
]


class SingularGram(RuntimeError):
    pass


class DegenerateData(RuntimeError):
    pass


class ZeroTruth(ValueError):
    pass


class ExtrapolationWarning(UserWarning):
    """Prediction point outside the training box (non-fatal)."""


@dataclass(frozen=True)
class TrainingSet:
    """Predictor matrix (n, D) and outputs (n,); rows must lie in the box."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise ValueError("need x of shape (n, D) and y of shape (n,)")
        if x.shape[0] < x.shape[1] + 2:
            raise ValueError(
                f"need at least D + 2 = {x.shape[1] + 2} rows to fit the "
                f"linear mean, got {x.shape[0]}"
            )
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)


def kernel(xa, xb, sigma_f: float, scales) -> np.ndarray:
    """Squared-exponential covariance matrix between normalized point sets."""
    xa = np.atleast_2d(np.asarray(xa, dtype=float))
    xb = np.atleast_2d(np.asarray(xb, dtype=float))
    scales = np.asarray(scales, dtype=float)
    d = (xa[:, None, :] - xb[None, :, :]) / scales
    return sigma_f ** 2 * np.exp(-0.5 * np.einsum("ijk,ijk->ij", d, d))


def _design(xn: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((xn.shape[0], 1)), xn])


def _chol_with_jitter(gram: np.ndarray, jitter_allowed: bool):
    """Lower Cholesky factor of gram, escalating diagonal jitter on failure."""
    scale = float(np.mean(np.diag(gram)))
    try:
        return cholesky(gram, lower=True), 0.0
    except np.linalg.LinAlgError:
        if not jitter_allowed:
            raise SingularGram("Gram matrix not positive definite with jitter disabled")
    jit = 1e-10 * scale
    while jit <= 1e-4 * scale:
        try:
            return cholesky(gram + jit * np.eye(gram.shape[0]), lower=True), jit
        except np.linalg.LinAlgError:
            jit *= 2.0
    raise SingularGram(
        f"Gram matrix not positive definite even with jitter 1e-4 * {scale:.3e}"
    )


def log_marginal_likelihood(theta: np.ndarray, xn: np.ndarray, resid: np.ndarray,
                            with_gradient: bool = True):
    """Gaussian log evidence of the residuals for log-hyperparameters theta.

    theta = [log sigma_f, log l_1 .. log l_D, log sigma_n].  Returns
    (value, gradient) with the gradient taken with respect to theta; the
    gradient uses d/dtheta_j = 0.5 tr((a a^T - K^{-1}) dK/dtheta_j).
    Non-positive-definite proposals return -inf (rejecting the step).
    """
    n, dim = xn.shape
    sigma_f = math.exp(theta[0])
    scales = np.exp(theta[1:1 + dim])
    sigma_n = math.exp(theta[-1])
    gram = kernel(xn, xn, sigma_f, scales)
    gram_n = gram + sigma_n ** 2 * np.eye(n)
    try:
        low = cholesky(gram_n, lower=True)
    except np.linalg.LinAlgError:
        if with_gradient:
            return -np.inf, np.zeros_like(theta)
        return -np.inf
    alpha = cho_solve((low, True), resid)
    value = (-0.5 * float(resid @ alpha)
             - float(np.sum(np.log(np.diag(low))))
             - 0.5 * n * math.log(2.0 * math.pi))
    if not with_gradient:
        return value
    inv = cho_solve((low, True), np.eye(n))
    outer = np.outer(alpha, alpha) - inv
    grad = np.empty_like(theta)
    # d gram / d log sigma_f = 2 gram
    grad[0] = float(np.sum(outer * gram))
    diff = xn[:, None, :] - xn[None, :, :]
    for k in range(dim):
        dk = gram * (diff[:, :, k] ** 2 / scales[k] ** 2)
        grad[1 + k] = 0.5 * float(np.sum(outer * dk))
    grad[-1] = float(np.trace(outer)) * sigma_n ** 2
    return value, grad


@dataclass
class GprModel:
    """Trained surrogate: fixed box, mean coefficients, kernel, dual weights."""

    box: ParameterBox
    beta: np.ndarray
    sigma_f: float
    scales: np.ndarray
    sigma_n: float
    x_norm: np.ndarray
    dual: np.ndarray
    log_likelihood: float
    jitter: float

    @property
    def n_train(self) -> int:
        return self.x_norm.shape[0]


def _fit_hyperparameters(xn, resid, restarts, seed, fixed_noise):
    dim = xn.shape[1]
    std = float(np.std(resid))
    theta0 = np.concatenate([
        [math.log(std)], np.zeros(dim),
        [math.log(fixed_noise) if fixed_noise else math.log(0.01 * std)],
    ])
    rng = np.random.default_rng(seed)
    starts = [theta0]
    for _ in range(restarts):
        # log-uniform perturbations within a factor of 10 either way
        starts.append(theta0 + rng.uniform(-math.log(10.0), math.log(10.0),
                                           size=theta0.size))

    fix_mask = np.zeros(theta0.size, dtype=bool)
    if fixed_noise is not None:
        fix_mask[-1] = True
        log_fixed = math.log(fixed_noise) if fixed_noise > 0.0 else -np.inf

    def pack(th_free, base):
        th = base.copy()
        th[~fix_mask] = th_free
        return th

    def objective(th_free, base):
        th = pack(th_free, base)
        if fixed_noise == 0.0:
            th[-1] = -200.0  # effectively zero noise
        val, grad = log_marginal_likelihood(th, xn, resid)
        if not np.isfinite(val):
            return 1e12, np.zeros(th_free.size)
        return -val, -grad[~fix_mask]

    # validate the analytic gradient once; fall back to a simplex search if
    # it disagrees with central differences
    th_chk = starts[0].copy()
    if fixed_noise == 0.0:
        th_chk[-1] = -200.0
    val0, grad0 = log_marginal_likelihood(th_chk, xn, resid)
    use_gradients = np.isfinite(val0)
    if use_gradients:
        eps = 1e-5
        for k in range(th_chk.size):
            if fix_mask[k]:
                continue
            tp = th_chk.copy()
            tp[k] += eps
            tm = th_chk.copy()
            tm[k] -= eps
            fd = (log_marginal_likelihood(tp, xn, resid, with_gradient=False)
                  - log_marginal_likelihood(tm, xn, resid, with_gradient=False)) / (2 * eps)
            if not np.isfinite(fd):
                continue
            if abs(fd - grad0[k]) > 1e-3 * max(1.0, abs(fd), abs(grad0[k])):
                use_gradients = False
                break

    best_theta, best_val = None, -np.inf
    bounds = [(-23.0, 23.0)] * int(np.count_nonzero(~fix_mask))
    for start in starts:
        base = start.copy()
        if fixed_noise is not None and fixed_noise > 0.0:
            base[-1] = log_fixed
        free0 = np.clip(base[~fix_mask], -23.0, 23.0)
        if use_gradients:
            res = optimize.minimize(
                objective, free0, args=(base,), jac=True, method="L-BFGS-B",
                bounds=bounds, options={"maxiter": 200},
            )
        else:
            res = optimize.minimize(
                lambda tf, bs: objective(tf, bs)[0], free0, args=(base,),
                method="Nelder-Mead", options={"maxiter": 2000, "xatol": 1e-6,
                                               "fatol": 1e-9},
            )
        th = pack(np.asarray(res.x, dtype=float), base)
        if fixed_noise == 0.0:
            th[-1] = -200.0
        val = log_marginal_likelihood(th, xn, resid, with_gradient=False)
        if val > best_val:
            best_val, best_theta = val, th
    # the optimum must not fall below any tried start
    for start in starts:
        th = start.copy()
        if fixed_noise is not None and fixed_noise > 0.0:
            th[-1] = log_fixed
        if fixed_noise == 0.0:
            th[-1] = -200.0
        val = log_marginal_likelihood(th, xn, resid, with_gradient=False)
        if val > best_val:
            best_val, best_theta = val, th
    return best_theta, best_val


def train(data: TrainingSet, box: ParameterBox, restarts: int = 5,
          seed: int = 0, fixed_noise: float | None = None,
          jitter: bool = True) -> GprModel:
    """Fit the mean, the hyperparameters and the dual weights.

    ``fixed_noise`` pins sigma_n instead of estimating it (0.0 gives exact
    interpolation of the training data); ``jitter=False`` disables the
    Cholesky diagonal escalation.  Constant outputs produce a degenerate
    constant model (zero dual weights) rather than failing.
    """
    inside = box.contains(data.x)
    if not np.all(inside):
        bad = int(np.count_nonzero(~inside))
        raise ValueError(f"{bad} training rows fall outside the parameter box")
    xn = box.normalize(data.x)
    n, dim = xn.shape

    if float(np.ptp(data.y)) == 0.0:
        beta = np.zeros(dim + 1)
        beta[0] = float(data.y[0])
        return GprModel(
            box=box, beta=beta, sigma_f=1.0, scales=np.ones(dim),
            sigma_n=0.0, x_norm=xn, dual=np.zeros(n),
            log_likelihood=np.nan, jitter=0.0,
        )

    design = _design(xn)
    beta, *_ = np.linalg.lstsq(design, data.y, rcond=None)
    resid = data.y - design @ beta

    theta, best_val = _fit_hyperparameters(xn, resid, restarts, seed, fixed_noise)
    sigma_f = math.exp(theta[0])
    scales = np.exp(theta[1:1 + dim])
    sigma_n = 0.0 if fixed_noise == 0.0 else math.exp(theta[-1])

    gram = kernel(xn, xn, sigma_f, scales) + sigma_n ** 2 * np.eye(n)
    low, jit = _chol_with_jitter(gram, jitter_allowed=jitter)
    dual = cho_solve((low, True), resid)
    return GprModel(
        box=box, beta=beta, sigma_f=sigma_f, scales=scales, sigma_n=sigma_n,
        x_norm=xn, dual=dual, log_likelihood=best_val, jitter=jit,
    )


def predict(model: GprModel, points) -> np.ndarray:
    """Posterior mean at raw (unnormalized) points, cost O(n) per point.

    Points outside the training box are allowed but raise an
    ExtrapolationWarning.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if not np.all(model.box.contains(points)):
        warnings.warn(
            "prediction points outside the training box; extrapolating",
            ExtrapolationWarning,
            stacklevel=2,
        )
    xn = model.box.normalize(points)
    mean = _design(xn) @ model.beta
    if model.dual.size and np.any(model.dual):
        mean = mean + kernel(xn, model.x_norm, model.sigma_f, model.scales) @ model.dual
    return mean


def evaluate(predictions, truths) -> dict:
    """RMSE, RMSRE, MaxAE, MaxRE between predictions and ground truths."""
    yh = np.asarray(predictions, dtype=float)
    y = np.asarray(truths, dtype=float)
    if yh.shape != y.shape or y.ndim != 1 or y.size < 1:
        raise ValueError("predictions and truths must be equal-length vectors")
    err = yh - y
    out = {
        "rmse": float(np.sqrt(np.mean(err ** 2))),
        "maxae": float(np.max(np.abs(err))),
    }
    if np.any(y == 0.0):
        raise ZeroTruth("relative metrics undefined: some truths are zero")
    rel = err / y
    out["rmsre"] = float(np.sqrt(np.mean(rel ** 2)))
    out["maxre"] = float(np.max(np.abs(rel)))
    return out


def save_model(model: GprModel, path) -> None:
    """Serialize to JSON with full float precision (round-trip identical)."""
    doc = {
        "box": model.box.to_dict(),
        "beta": model.beta.tolist(),
        "sigma_f": model.sigma_f,
        "scales": model.scales.tolist(),
        "sigma_n": model.sigma_n,
        "x_norm": model.x_norm.tolist(),
        "dual": model.dual.tolist(),
        "log_likelihood": None if not np.isfinite(model.log_likelihood)
                          else model.log_likelihood,
        "jitter": model.jitter,
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_model(path) -> GprModel:
    doc = json.loads(Path(path).read_text())
    ll = doc.get("log_likelihood")
    return GprModel(
        box=ParameterBox.from_dict(doc["box"]),
        beta=np.asarray(doc["beta"], dtype=float),
        sigma_f=float(doc["sigma_f"]),
        scales=np.asarray(doc["scales"], dtype=float),
        sigma_n=float(doc["sigma_n"]),
        x_norm=np.asarray(doc["x_norm"], dtype=float),
        dual=np.asarray(doc["dual"], dtype=float),
        log_likelihood=np.nan if ll is None else float(ll),
        jitter=float(doc.get("jitter", 0.0)),
    )
