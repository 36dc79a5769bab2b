"""Monte Carlo oracle: simulates the joint model and prices fixed-strategy
contracts with mortality weighting.

This module never optimizes withdrawals; it exists to bound and validate
the lattice/finite-difference pricer.  The scheme is log-Euler for the
account (fee drag included), full-truncation Euler for the variance and
the exact transition for the OU rate factor, with the integrated short
rate accumulated by the trapezoidal rule for pathwise discounting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .contract import ContractParams
from .model import HhwParams, phi

__all__ = ["McConfig", "McEstimate", "simulate_paths", "static_gmwb_price", "bond_price"]


@dataclass(frozen=True)
class McConfig:
    """paths, steps per year and the base seed of the block substreams."""

    paths: int = 100_000
    steps_per_year: int = 100
    seed: int = 0
    block_size: int = 25_000

    def __post_init__(self):
        if self.paths < 2:
            raise ValueError("need at least 2 paths to estimate a standard error")
        if self.steps_per_year < 1:
            raise ValueError("steps_per_year must be >= 1")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    paths: int


def _block_sizes(total: int, block: int) -> list[int]:
    sizes = [block] * (total // block)
    if total % block:
        sizes.append(total % block)
    return sizes


def simulate_paths(model: HhwParams, config: McConfig, horizon: float,
                   alpha: float = 0.0, obs_times: np.ndarray | None = None,
                   rng: np.random.Generator | None = None,
                   n_paths: int | None = None):
    """Simulate one block of joint paths of (A, v, x, integrated rate).

    Returns arrays of shape (n_obs, n_paths) for the account value A (fee
    drag ``alpha`` applied), the variance v, the OU factor x and the
    integrated short rate, sampled at ``obs_times`` (default: just the
    horizon).  The fund noise is assembled from the variance and rate
    shocks plus an independent residual so that all stated covariances
    hold.  Pass an explicit ``rng`` to control the substream.
    """
    if obs_times is None:
        obs_times = np.array([horizon])
    obs_times = np.asarray(obs_times, dtype=float)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n = config.paths if n_paths is None else n_paths
    n_steps = max(int(round(horizon * config.steps_per_year)), 1)
    dt = horizon / n_steps
    sq_dt = math.sqrt(dt)
    rho3 = model.rho3
    e = math.exp(-model.kr * dt)
    ou_sd = math.sqrt((1.0 - e * e) / (2.0 * model.kr))

    log_a = np.zeros(n)
    v = np.full(n, model.v0)
    x = np.zeros(n)
    integ = np.zeros(n)

    # map observation times to step indices (must be on the step grid)
    obs_idx = np.rint(obs_times / dt).astype(int)
    if np.any(np.abs(obs_idx * dt - obs_times) > 1e-9):
        raise ValueError("obs_times must be multiples of the simulation step")
    out_a = np.empty((obs_times.size, n))
    out_v = np.empty_like(out_a)
    out_x = np.empty_like(out_a)
    out_i = np.empty_like(out_a)

    def record(k):
        hits = np.nonzero(obs_idx == k)[0]
        for h in hits:
            out_a[h] = np.exp(log_a)
            out_v[h] = v
            out_x[h] = x
            out_i[h] = integ

    record(0)
    r_prev = phi(0.0, model) + model.omegar * x  # x = 0, rate = r0
    for k in range(1, n_steps + 1):
        z = rng.standard_normal((3, n))
        xi_v, xi_r, xi_3 = z[0], z[1], z[2]
        xi_z = model.rhov * xi_v + model.rhor * xi_r + rho3 * xi_3
        vp = np.maximum(v, 0.0)
        sq_v = np.sqrt(vp)
        log_a += (r_prev - alpha - 0.5 * vp) * dt + sq_v * sq_dt * xi_z
        v = v + model.kv * (model.thetav - vp) * dt + model.omegav * sq_v * sq_dt * xi_v
        x = x * e + ou_sd * xi_r
        r_new = model.omegar * x + phi(k * dt, model)
        integ += 0.5 * (r_prev + r_new) * dt
        r_prev = r_new
        record(k)
    return out_a, out_v, out_x, out_i


def bond_price(model: HhwParams, horizon: float, config: McConfig) -> McEstimate:
    """MC estimate of E[exp(-int_0^t r ds)] with its standard error."""
    total = 0.0
    total_sq = 0.0
    count = 0
    seeds = np.random.SeedSequence(config.seed).spawn(
        len(_block_sizes(config.paths, config.block_size))
    )
    for ss, size in zip(seeds, _block_sizes(config.paths, config.block_size)):
        rng = np.random.default_rng(ss)
        _, _, _, integ = simulate_paths(
            model, config, horizon, rng=rng, n_paths=size
        )
        disc = np.exp(-integ[-1])
        total += disc.sum()
        total_sq += (disc ** 2).sum()
        count += size
    mean = float(total / count)
    var = max(float(total_sq / count) - mean ** 2, 0.0)
    return McEstimate(value=mean, std_error=math.sqrt(var / count), paths=count)


def static_gmwb_price(model: HhwParams, contract: ContractParams,
                      config: McConfig,
                      withdrawals: np.ndarray | None = None) -> McEstimate:
    """Price the contract under a fixed withdrawal schedule.

    By default the static strategy w_i = min(G, B_i) is applied at every
    anniversary; a caller-provided schedule (length T) overrides it.  Cash
    flows are weighted by the survivor fraction, death benefits by the
    within-year death probability, and everything is discounted pathwise.
    """
    T = int(contract.T)
    mort = contract.mortality
    r_anniv = mort.r_anniv
    obs = np.arange(0, T + 1, dtype=float)

    total = 0.0
    total_sq = 0.0
    count = 0
    sizes = _block_sizes(config.paths, config.block_size)
    seeds = np.random.SeedSequence(config.seed).spawn(len(sizes))
    for ss, size in zip(seeds, sizes):
        rng = np.random.default_rng(ss)
        fund, _, _, integ = simulate_paths(
            model, config, float(T), alpha=contract.alpha,
            obs_times=obs, rng=rng, n_paths=size,
        )
        # the account follows the fee-dragged fund between anniversaries and
        # drops by the withdrawal at each one: A_pre(i) = A_post(i-1) * F_i/F_{i-1}
        payoff = np.zeros(size)
        b = np.full(size, contract.P)
        a_post = np.full(size, contract.P)
        for i in range(1, T + 1):
            a_pre = a_post * (fund[i] / fund[i - 1])
            disc = np.exp(-integ[i])
            db = np.maximum(a_pre, (1.0 - contract.kappa) * b)
            payoff += (r_anniv[i - 1] - r_anniv[i]) * disc * db
            if withdrawals is None:
                w = np.minimum(contract.G, b)
            else:
                w = np.minimum(float(withdrawals[i - 1]), b)
            cash = np.where(
                w <= contract.G, w, w - contract.kappa * (w - contract.G)
            )
            payoff += r_anniv[i] * disc * cash
            a_post = np.maximum(a_pre - w, 0.0)
            b = b - w
        fp = np.maximum(a_post, (1.0 - contract.kappa) * b)
        payoff += r_anniv[T] * np.exp(-integ[T]) * fp
        total += payoff.sum()
        total_sq += (payoff ** 2).sum()
        count += size
    mean = float(total / count)
    var = max(float(total_sq / count) - mean ** 2, 0.0)
    return McEstimate(value=mean, std_error=math.sqrt(var / count), paths=count)
