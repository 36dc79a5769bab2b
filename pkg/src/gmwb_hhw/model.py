"""Heston Hull-White market model: parameters, rate decomposition, flat curve.

The model couples a CIR variance process v and a Gaussian mean-reverting
short rate r with a lognormal fund S:

    dS = r S dt + sqrt(v) S dZ
    dv = kv (thetav - v) dt + omegav sqrt(v) dW_v
    dr = kr (theta_r(t) - r) dt + omegar dW_r

with correlations d<Z, W_v> = rhov dt, d<Z, W_r> = rhor dt and W_v, W_r
independent.  The short rate is handled through the decomposition
r_t = omegar * x_t + phi(t) where x is a unit-volatility OU factor started
at 0, and phi is the deterministic shift that reprices the initial
zero-coupon curve.  Only the flat curve P(0, t) = exp(-r0 t) is supported.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

__all__ = [
    "HhwParams",
    "ParameterBox",
    "PREDICTOR_NAMES",
    "DEFAULT_BOX",
    "phi",
    "short_rate",
    "residual_correlation",
    "load_model_document",
    "save_model_document",
]

# Predictor ordering used everywhere: parameter files, sampled design
# matrices, CSV columns and trained surrogates.
PREDICTOR_NAMES = (
    "v0", "kv", "thetav", "omegav", "rhov",
    "r0", "kr", "omegar", "rhor", "alpha", "kappa",
)


@dataclass(frozen=True)
class HhwParams:
    """The nine stochastic-model parameters.

    v0, kv, thetav, omegav, rhov drive the variance (CIR) leg; r0, kr,
    omegar, rhor drive the rate (Hull-White) leg.  Units: speeds and rates
    are per year, correlations dimensionless.
    """

    v0: float
    kv: float
    thetav: float
    omegav: float
    rhov: float
    r0: float
    kr: float
    omegar: float
    rhor: float

    def __post_init__(self):
        for name in ("v0", "kv", "thetav", "omegav", "kr", "omegar"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.rhov ** 2 + self.rhor ** 2 >= 1.0:
            raise ValueError(
                "rhov^2 + rhor^2 must be < 1 so the residual fund "
                f"volatility is real (got {self.rhov}, {self.rhor})"
            )

    @property
    def rho3(self) -> float:
        """Loading of the fund noise on the Brownian motion orthogonal to W_v, W_r."""
        return residual_correlation(self)


def residual_correlation(p: HhwParams) -> float:
    # Z = rhov W_v + rhor W_r + rho3 W_3 with W_3 independent of the others;
    # consistency with the stated covariances forces rho3 in (0, 1].
    return math.sqrt(1.0 - p.rhov ** 2 - p.rhor ** 2)


def phi(t, p: HhwParams):
    """Deterministic rate shift for the flat initial curve.

    phi(t) = r0 + omegar^2 / (2 kr^2) * (1 - exp(-kr t))^2, the unique
    shift for which E[exp(-int_0^t r ds)] = exp(-r0 t) at inception.
    Accepts scalars or arrays, t >= 0.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("t must be non-negative")
    out = p.r0 + (p.omegar ** 2 / (2.0 * p.kr ** 2)) * (1.0 - np.exp(-p.kr * t)) ** 2
    return float(out) if out.ndim == 0 else out


def short_rate(x, t, p: HhwParams):
    """Short rate omegar * x + phi(t) for an OU factor value x.  May be negative."""
    return p.omegar * np.asarray(x, dtype=float) + phi(t, p)


class ParameterBox:
    """Axis-aligned box of admissible predictor values.

    Holds a closed interval [lo, hi] per predictor (the nine model
    parameters plus the fee rate alpha and the penalty kappa) in the order
    of ``PREDICTOR_NAMES``.  Every point of the box must be a valid model
    parameterization.
    """

    def __init__(self, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != (len(PREDICTOR_NAMES),) or hi.shape != (len(PREDICTOR_NAMES),):
            raise ValueError(f"lo/hi must have {len(PREDICTOR_NAMES)} entries")
        if np.any(lo > hi):
            raise ValueError("lo must be <= hi component-wise")
        self.lo = lo
        self.hi = hi
        # Corner check is sufficient for the invariants used here: positivity
        # constraints bind at lo, the correlation-norm constraint at |rho| hi.
        hhw_lo = {n: lo[i] for i, n in enumerate(PREDICTOR_NAMES[:9])}
        for name in ("v0", "kv", "thetav", "omegav", "kr", "omegar"):
            if hhw_lo[name] <= 0.0:
                raise ValueError(f"box lower bound for {name} must be positive")
        rv = max(abs(lo[4]), abs(hi[4]))
        rr = max(abs(lo[8]), abs(hi[8]))
        if rv ** 2 + rr ** 2 >= 1.0:
            raise ValueError("box admits rhov^2 + rhor^2 >= 1")

    @property
    def dim(self) -> int:
        return len(PREDICTOR_NAMES)

    def contains(self, x) -> np.ndarray:
        """Row-wise membership test for an (n, 11) array of predictor rows."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.all((x >= self.lo - 1e-12) & (x <= self.hi + 1e-12), axis=1)

    def normalize(self, x) -> np.ndarray:
        """Map raw predictor rows into the unit cube (degenerate edges map to 0)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        span = self.hi - self.lo
        safe = np.where(span > 0.0, span, 1.0)
        return (x - self.lo) / safe

    def to_dict(self) -> dict:
        return {
            name: {"lo": float(self.lo[i]), "hi": float(self.hi[i])}
            for i, name in enumerate(PREDICTOR_NAMES)
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterBox":
        try:
            lo = [d[name]["lo"] for name in PREDICTOR_NAMES]
            hi = [d[name]["hi"] for name in PREDICTOR_NAMES]
        except KeyError as exc:
            raise ValueError(f"box document missing field {exc}") from exc
        return cls(lo, hi)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "ParameterBox":
        return cls.from_dict(json.loads(Path(path).read_text()))


# Calibration ranges used throughout for sampling parameter combinations.
DEFAULT_BOX = ParameterBox(
    lo=[0.01, 1.40, 0.01, 0.45, -0.70, 0.01, 0.05, 0.005, 0.05, 0.00, 0.00],
    hi=[0.10, 2.60, 0.10, 0.75, -0.40, 0.03, 0.25, 0.025, 0.35, 0.10, 0.20],
)


def params_from_vector(x) -> tuple[HhwParams, float, float]:
    """Split an 11-vector in predictor order into (HhwParams, alpha, kappa)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (len(PREDICTOR_NAMES),):
        raise ValueError(f"expected a vector of {len(PREDICTOR_NAMES)} predictors")
    return HhwParams(*[float(v) for v in x[:9]]), float(x[9]), float(x[10])


def params_to_vector(p: HhwParams, alpha: float, kappa: float) -> np.ndarray:
    return np.array(
        [p.v0, p.kv, p.thetav, p.omegav, p.rhov, p.r0, p.kr, p.omegar, p.rhor,
         alpha, kappa],
        dtype=float,
    )


def load_model_document(path) -> tuple[HhwParams, float, float]:
    """Read a parameter document: JSON object with the 11 predictor fields."""
    d = json.loads(Path(path).read_text())
    missing = [n for n in PREDICTOR_NAMES if n not in d]
    if missing:
        raise ValueError(f"model document {path} missing fields {missing}")
    return params_from_vector([d[n] for n in PREDICTOR_NAMES])


def save_model_document(path, p: HhwParams, alpha: float, kappa: float) -> None:
    d = dict(asdict(p))
    d["alpha"] = float(alpha)
    d["kappa"] = float(kappa)
    Path(path).write_text(json.dumps(d, indent=2) + "\n")
