"""Moment-matched recombining trinomial trees for the OU and CIR factors.

A tree with N steps has 2n + 1 nodes at level n.  For a Gaussian process
whose one-step conditional variance sigma2(dt) does not depend on the
state, node values are

    G[n, j] = G0 + 1.5 * (j - n) * sqrt(sigma2(dt)),   j = 0..2n,

and each node branches to three consecutive nodes of the next level chosen
around the conditional mean, with probabilities that match the conditional
mean and variance exactly.  The variance process is not Gaussian, so its
lattice is built on the unit-diffusion coordinate y = 2 sqrt(v) / omegav
(constant spacing), node values are mapped back through v = (omegav y / 2)^2
with y <= 0 clamped to v = 0, and the branch probabilities at each node are
solved to match the exact CIR conditional moments at that node's v value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MomentSpec",
    "TrinomialTree",
    "MeanOutOfRange",
    "ou_moments",
    "cir_moments",
    "branch",
    "build_ou_tree",
    "build_cir_tree",
    "build_tree",
]


class MeanOutOfRange(RuntimeError):
    """Conditional mean falls outside the next level's node span.

    Signals that the time step is too large for the given mean-reversion
    speed; refine the time grid.
    """


@dataclass(frozen=True)
class MomentSpec:
    """Conditional mean and variance of a factor one time step ahead."""

    mu: float
    sigma2: float

    def __post_init__(self):
        if self.sigma2 <= 0.0:
            raise ValueError("sigma2 must be positive")


def ou_moments(x: float, dt: float, kr: float) -> MomentSpec:
    """Exact one-step moments of dx = -kr x dt + dW."""
    if dt <= 0.0 or kr <= 0.0:
        raise ValueError("dt and kr must be positive")
    e = math.exp(-kr * dt)
    return MomentSpec(mu=x * e, sigma2=-math.expm1(-2.0 * kr * dt) / (2.0 * kr))


def cir_moments(v: float, dt: float, kv: float, thetav: float, omegav: float) -> MomentSpec:
    """Exact one-step moments of dv = kv (thetav - v) dt + omegav sqrt(v) dW."""
    if v < 0.0:
        raise ValueError("v must be non-negative")
    if dt <= 0.0 or kv <= 0.0 or thetav <= 0.0 or omegav <= 0.0:
        raise ValueError("dt, kv, thetav, omegav must be positive")
    e = math.exp(-kv * dt)
    mu = thetav + (v - thetav) * e
    sigma2 = (
        v * (omegav ** 2 / kv) * (e - e * e)
        + thetav * (omegav ** 2 / (2.0 * kv)) * (1.0 - e) ** 2
    )
    return MomentSpec(mu=mu, sigma2=sigma2)


def branch(n: int, j: int, spec: MomentSpec, g0: float, sigma: float):
    """Branch targets and probabilities for an equally spaced Gaussian lattice.

    Returns ``(lo, (p_lo, p_mid, p_hi))`` where ``lo`` is the smallest of the
    three consecutive level-(n+1) target indices.  The middle candidate index
    j_A (first node value >= the conditional mean mu) is seeded with
    ``n + ceil(2 (mu - G0) / (3 sigma))`` and corrected so that the bracketing
    G[j_A - 1] < mu <= G[j_A] holds exactly.  With d = G[j_A] - mu:

        if 0 <= d <= 0.75 sigma, targets are (j_A - 1, j_A, j_A + 1) and

            p_A = (5 s^2 - 4 d^2) / (9 s^2)
            p_B = (2 d^2 + 3 s d + 2 s^2) / (9 s^2)
            p_C = (2 d^2 - 3 s d + 2 s^2) / (9 s^2)

        otherwise targets are (j_A - 2, j_A - 1, j_A) and the mirrored
        formulas apply with e = mu - G[j_A - 1].

    The returned distribution matches ``spec.mu`` and ``spec.mu**2 +
    spec.sigma2`` to machine precision.
    """
    mu = spec.mu
    span = 2 * (n + 1) + 1  # node count at level n + 1

    def value(idx):
        return g0 + 1.5 * (idx - (n + 1)) * sigma

    ja = n + math.ceil(2.0 * (mu - g0) / (3.0 * sigma))
    # the index formula and the node-value formula disagree by one unit;
    # the bracketing property is normative, so correct until it holds
    guard = 0
    while ja < span and value(ja) < mu:
        ja += 1
        guard += 1
        if guard > 4:
            break
    while ja >= 1 and value(ja - 1) >= mu:
        ja -= 1
        guard += 1
        if guard > 8:
            break
    if not (1 <= ja < span) or not (value(ja - 1) < mu <= value(ja)):
        raise MeanOutOfRange(
            f"conditional mean {mu} cannot be bracketed at level {n + 1}"
        )
    d = value(ja) - mu
    s = sigma
    if d <= 0.75 * s:
        pa = (5.0 * s * s - 4.0 * d * d) / (9.0 * s * s)
        pb = (2.0 * d * d + 3.0 * s * d + 2.0 * s * s) / (9.0 * s * s)
        pc = (2.0 * d * d - 3.0 * s * d + 2.0 * s * s) / (9.0 * s * s)
        lo, probs = ja - 1, (pb, pa, pc)
        if ja + 1 >= span:
            raise MeanOutOfRange(f"upper branch target exceeds level {n + 1}")
    else:
        e = mu - value(ja - 1)  # = 1.5 s - d, in (0, 0.75 s)
        pa = (2.0 * e * e + 3.0 * s * e + 2.0 * s * s) / (9.0 * s * s)
        pb = (5.0 * s * s - 4.0 * e * e) / (9.0 * s * s)
        pd = (2.0 * e * e - 3.0 * s * e + 2.0 * s * s) / (9.0 * s * s)
        lo, probs = ja - 2, (pd, pb, pa)
        if lo < 0:
            raise MeanOutOfRange(f"lower branch target below level {n + 1}")
    return lo, probs


def _solve_three_point(values, m1: float, var: float):
    """Probabilities on three distinct values matching mean m1 and variance var."""
    g0, g1, g2 = values
    p0 = (var + (m1 - g1) * (m1 - g2)) / ((g0 - g1) * (g0 - g2))
    p1 = (var + (m1 - g0) * (m1 - g2)) / ((g1 - g0) * (g1 - g2))
    p2 = (var + (m1 - g0) * (m1 - g1)) / ((g2 - g0) * (g2 - g1))
    return p0, p1, p2


def _branch_general(values_next: np.ndarray, spec: MomentSpec):
    """Branch selection on a sorted, possibly unevenly spaced value axis.

    Chooses three consecutive nodes around the conditional mean (centered on
    the nearest node, falling back to the other centering when that yields a
    negative probability) and solves the 3x3 moment system exactly.
    """
    mu, var = spec.mu, spec.sigma2
    span = values_next.size
    ja = int(np.searchsorted(values_next, mu, side="left"))
    if ja <= 0 or ja >= span:
        raise MeanOutOfRange(f"conditional mean {mu} outside node span")
    d_up = values_next[ja] - mu
    d_dn = mu - values_next[ja - 1]

    def config(lo):
        if lo < 0 or lo + 2 >= span:
            return None
        vals = values_next[lo:lo + 3]
        if vals[0] >= vals[1] or vals[1] >= vals[2]:
            return None  # clamped duplicates make the system singular
        p = _solve_three_point(vals, mu, var)
        if min(p) < -1e-12:
            return None
        return lo, p

    prefer_c = d_up <= d_dn  # center the triple on the nearest node
    order = (ja - 1, ja - 2) if prefer_c else (ja - 2, ja - 1)
    for lo in order:
        got = config(lo)
        if got is not None:
            return got
    raise MeanOutOfRange(
        f"no valid three-point branch around mean {mu} (var {var})"
    )


@dataclass
class TrinomialTree:
    """Recombining trinomial lattice with per-node branch data.

    values[n][j] is the factor value of node (n, j), j = 0..2n.  From node
    (n, j) the process moves to level-(n+1) indices lo, lo+1, lo+2 where
    lo = branch_lo[n][j], with probabilities probs[n][j, :].  For the rate
    factor, innovations[n][j, l] holds the centered jump
    value_{n+1}[lo + l] - E[x_{n+1} | x_n] used by the hybrid coupling.
    """

    n_steps: int
    dt: float
    values: list[np.ndarray]
    branch_lo: list[np.ndarray]
    probs: list[np.ndarray]
    innovations: list[np.ndarray]
    means: list[np.ndarray]
    variances: list[np.ndarray]

    def node_count(self, n: int) -> int:
        return 2 * n + 1


def _assemble(n_steps, dt, values, moment_fn, brancher):
    branch_lo, probs, innovations, means, variances = [], [], [], [], []
    for n in range(n_steps):
        width = 2 * n + 1
        lo_arr = np.empty(width, dtype=np.int64)
        p_arr = np.empty((width, 3))
        in_arr = np.empty((width, 3))
        mu_arr = np.empty(width)
        var_arr = np.empty(width)
        vnext = values[n + 1]
        for j in range(width):
            spec = moment_fn(values[n][j])
            lo, p = brancher(n, j, spec, vnext)
            lo_arr[j] = lo
            p_arr[j] = p
            in_arr[j] = vnext[lo:lo + 3] - spec.mu
            mu_arr[j] = spec.mu
            var_arr[j] = spec.sigma2
        branch_lo.append(lo_arr)
        probs.append(p_arr)
        innovations.append(in_arr)
        means.append(mu_arr)
        variances.append(var_arr)
    return TrinomialTree(
        n_steps=n_steps, dt=dt, values=values, branch_lo=branch_lo,
        probs=probs, innovations=innovations, means=means, variances=variances,
    )


def build_ou_tree(kr: float, n_steps: int, horizon: float, x0: float = 0.0) -> TrinomialTree:
    """Lattice for the unit-volatility OU factor dx = -kr x dt + dW."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    dt = horizon / n_steps
    sigma = math.sqrt(ou_moments(0.0, dt, kr).sigma2)
    values = [
        x0 + 1.5 * (np.arange(2 * n + 1) - n) * sigma for n in range(n_steps + 1)
    ]

    def moment_fn(x):
        return ou_moments(x, dt, kr)

    def brancher(n, j, spec, vnext):
        return branch(n, j, spec, x0, sigma)

    return _assemble(n_steps, dt, values, moment_fn, brancher)


def _cir_spacing_factor(kv: float, dt: float) -> float:
    """Feasibility shrink for the variance lattice spacing.

    Matching a node's exact conditional variance on three consecutive
    lattice values bracketing the mean requires var >= (a - mu)(mu - b),
    and mean reversion shrinks the one-step variance below the raw
    unit-diffusion scale dt.  The binding ratio over the node range is
    var / (omegav^2 mu dt) >= (1 - exp(-kv dt)) / (2 kv dt), attained as
    v -> 0, so the y-spacing 1.5 c sqrt(dt) must satisfy
    (0.75 c)^2 <= that ratio.  A 0.9 margin absorbs the curvature of the
    square-root coordinate map.
    """
    q = kv * dt
    f_min = -math.expm1(-q) / (2.0 * q)
    return min(1.0, 0.9 * math.sqrt(f_min) / 0.75)


def build_cir_tree(kv: float, thetav: float, omegav: float, n_steps: int,
                   horizon: float, v0: float) -> TrinomialTree:
    """Lattice for the CIR variance, built on y = 2 sqrt(v) / omegav.

    The y-spacing is 1.5 * c * sqrt(dt) with the feasibility factor c of
    ``_cir_spacing_factor`` (c = 1 recovers the raw unit-diffusion scale);
    if a node still cannot bracket its conditional moments the spacing is
    shrunk again, deterministically, before giving up.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if v0 <= 0.0:
        raise ValueError("v0 must be positive")
    dt = horizon / n_steps
    y0 = 2.0 * math.sqrt(v0) / omegav

    def moment_fn(v):
        return cir_moments(v, dt, kv, thetav, omegav)

    def brancher(n, j, spec, vnext):
        return _branch_general(vnext, spec)

    factor = _cir_spacing_factor(kv, dt)
    last_err: MeanOutOfRange | None = None
    for _ in range(8):
        sp = 1.5 * factor * math.sqrt(dt)
        values = []
        for n in range(n_steps + 1):
            y = y0 + (np.arange(2 * n + 1) - n) * sp
            values.append(
                np.where(y > 0.0, (omegav * np.maximum(y, 0.0) / 2.0) ** 2, 0.0)
            )
        try:
            return _assemble(n_steps, dt, values, moment_fn, brancher)
        except MeanOutOfRange as err:
            last_err = err
            factor *= 0.9
    raise last_err


def build_tree(process: str, params: dict, n_steps: int, horizon: float) -> TrinomialTree:
    """Dispatch on process kind: 'ou' (needs kr, optional x0) or 'cir'
    (needs kv, thetav, omegav, v0)."""
    if process == "ou":
        return build_ou_tree(params["kr"], n_steps, horizon, params.get("x0", 0.0))
    if process == "cir":
        return build_cir_tree(
            params["kv"], params["thetav"], params["omegav"],
            n_steps, horizon, params["v0"],
        )
    raise ValueError(f"unknown process kind {process!r}")
