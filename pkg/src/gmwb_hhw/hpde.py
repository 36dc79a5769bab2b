"""Hybrid lattice/finite-difference backward-induction pricer.

Between anniversaries the contract value is propagated on a fixed z-grid
attached to every (variance, rate-factor) node pair: the next level's
values are mixed over the product of the two lattices' transitions (with
the rate innovation shifting the z-argument), then a theta-scheme step of
the one-dimensional convection-diffusion-reaction equation is applied with
coefficients frozen at the pair.  At anniversaries a discrete optimal (or
static) withdrawal operator updates the (A, B) state.

The transformed coordinate is z = log(A / P) - (rhov / omegav) v, which
removes the variance noise from the account dynamics; the residual
diffusion is rho3^2 v / 2 and the drift is

    mu(v, x, t) = r(x, t) - alpha - v / 2 - (rhov / omegav) kv (thetav - v).

Discounting enters as a -r u reaction term at the node's rate.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .contract import ContractParams, net_cash_flow
from .lattice import TrinomialTree, build_cir_tree, build_ou_tree
from .model import HhwParams, phi

__all__ = [
    "GridConfig",
    "ZGrid",
    "PriceResult",
    "GridTooCoarse",
    "NonFiniteValue",
    "NoRoot",
    "MaxIterations",
    "price_gmwb",
    "pde_step",
    "anniversary_operator",
    "no_arbitrage_fee",
    "bisection_fee",
]


class GridTooCoarse(ValueError):
    pass


class NonFiniteValue(RuntimeError):
    pass


class NoRoot(RuntimeError):
    pass


class MaxIterations(RuntimeError):
    pass


@dataclass(frozen=True)
class GridConfig:
    """Discretization sizes: time steps (divisible by T), z points, B steps."""

    n_time: int = 250
    n_space: int = 250
    n_b: int = 100
    l_mult: float = 6.0
    theta: float = 0.5

    def __post_init__(self):
        if self.n_time < 1 or self.n_space < 3 or self.n_b < 1:
            raise GridTooCoarse("need n_time >= 1, n_space >= 3, n_b >= 1")
        if self.l_mult <= 0.0:
            raise GridTooCoarse("l_mult must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise GridTooCoarse("theta must lie in [0, 1]")


@dataclass(frozen=True)
class ZGrid:
    """Uniform grid in the transformed account coordinate."""

    z: np.ndarray
    h: float
    center: int
    coef: float  # rhov / omegav, the v-loading of the transform

    @property
    def mp(self) -> int:
        return self.z.size


def make_zgrid(model: HhwParams, grid: GridConfig, horizon: float) -> ZGrid:
    coef = model.rhov / model.omegav
    half = grid.l_mult * math.sqrt(max(model.v0, model.thetav) * horizon)
    h = 2.0 * half / grid.n_space
    center = grid.n_space // 2
    z_center = -coef * model.v0
    z = z_center + (np.arange(grid.n_space + 1) - center) * h
    return ZGrid(z=z, h=h, center=center, coef=coef)


def _a_values(zg: ZGrid, v_nodes: np.ndarray, premium: float) -> np.ndarray:
    """Account value at every (v-node, z-point); exponent clamped for safety."""
    expo = np.log(premium) + zg.z[None, :] + zg.coef * v_nodes[:, None]
    return np.exp(np.minimum(expo, 700.0))


def _a_floor(zg: ZGrid, v_nodes: np.ndarray, premium: float) -> np.ndarray:
    """Per-v-node helpers for the kernel's account-to-z map.

    Column 0: account value at the bottom z point (blend threshold);
    column 1: the constant C_i with z-index = (log A - C_i) / h;
    column 2: 1 / h.
    """
    out = np.empty((v_nodes.size, 3))
    out[:, 0] = np.exp(np.minimum(math.log(premium) + zg.z[0] + zg.coef * v_nodes, 700.0))
    out[:, 1] = math.log(premium) + zg.coef * v_nodes + zg.z[0]
    out[:, 2] = 1.0 / zg.h
    return out


@dataclass
class _Candidates:
    """Flattened per-B-slice candidate withdrawals for the kernel."""

    w: np.ndarray
    cash_unit: np.ndarray  # net cash flow f(w), before survivor weighting
    b1: np.ndarray
    b2: np.ndarray
    bw: np.ndarray
    start: np.ndarray


def _build_candidates(b_grid: np.ndarray, contract: ContractParams) -> _Candidates:
    """Withdrawals {B - B_k : B_k <= B} plus the guarantee min(G, B), sorted
    ascending per slice; post-withdrawal B is located on the grid by linear
    interpolation (exact for the grid-difference candidates)."""
    nbp = b_grid.size
    db = b_grid[1] - b_grid[0] if nbp > 1 else 1.0
    w_all, f_all, b1_all, b2_all, bw_all = [], [], [], [], []
    start = np.zeros(nbp + 1, dtype=np.int64)
    for b in range(nbp):
        bb = b_grid[b]
        ws = np.unique(np.concatenate([bb - b_grid[b::-1], [min(contract.G, bb)]]))
        ws = ws[(ws >= 0.0) & (ws <= bb + 1e-12)]
        bq = (bb - ws) / db
        bi = np.clip(np.floor(bq + 1e-12).astype(np.int64), 0, nbp - 1)
        frac = np.clip(bq - bi, 0.0, 1.0)
        bi2 = np.minimum(bi + 1, nbp - 1)
        frac = np.where(bi2 == bi, 0.0, frac)
        w_all.append(ws)
        f_all.append(np.array([net_cash_flow(float(w), contract) for w in ws]))
        b1_all.append(bi)
        b2_all.append(bi2)
        bw_all.append(frac)
        start[b + 1] = start[b] + ws.size
    return _Candidates(
        w=np.concatenate(w_all), cash_unit=np.concatenate(f_all),
        b1=np.concatenate(b1_all), b2=np.concatenate(b2_all),
        bw=np.concatenate(bw_all), start=start,
    )


@dataclass
class Slab:
    """Contract values on one time level: u over (v, x, B, z) and the A = 0 slice."""

    u: np.ndarray
    u0: np.ndarray


def pde_step(slab_next: Slab, v_tree: TrinomialTree, x_tree: TrinomialTree,
             level: int, model: HhwParams, alpha: float, zg: ZGrid,
             t_target: float, theta: float = 0.5, pe_limit: float = 2.0) -> Slab:
    """One backward step from level + 1 to ``level`` (time ``t_target``)."""
    nv = v_tree.node_count(level)
    nx = x_tree.node_count(level)
    nb, mp = slab_next.u.shape[2], slab_next.u.shape[3]
    v = v_tree.values[level]
    x = x_tree.values[level]
    rho3 = model.rho3
    out_u = np.empty((nv, nx, nb, mp))
    out_u0 = np.empty((nv, nx, nb))
    _kernels.step_level(
        slab_next.u, slab_next.u0,
        v_tree.branch_lo[level], v_tree.probs[level],
        x_tree.branch_lo[level], x_tree.probs[level],
        model.rhor * x_tree.innovations[level],
        np.sqrt(v),
        -alpha - 0.5 * v - zg.coef * model.kv * (model.thetav - v),
        model.omegar * x + phi(t_target, model),
        0.5 * rho3 * rho3 * v,
        zg.h, v_tree.dt, theta, pe_limit,
        out_u, out_u0,
    )
    return Slab(u=out_u, u0=out_u0)


def anniversary_operator(slab_plus: Slab, v_nodes: np.ndarray, zg: ZGrid,
                         contract: ContractParams, year: int,
                         b_grid: np.ndarray,
                         cand: _Candidates | None = None) -> Slab:
    """Optimal-withdrawal update at anniversary ``year`` (1-based)."""
    mort = contract.mortality
    if cand is None:
        cand = _build_candidates(b_grid, contract)
    surv = mort.r_anniv[year]
    death_w = mort.r_anniv[year - 1] - mort.r_anniv[year]
    out_u = np.empty_like(slab_plus.u)
    out_u0 = np.empty_like(slab_plus.u0)
    _kernels.anniversary_apply(
        slab_plus.u, slab_plus.u0,
        _a_values(zg, v_nodes, contract.P),
        _a_floor(zg, v_nodes, contract.P),
        cand.w, surv * cand.cash_unit, cand.b1, cand.b2, cand.bw, cand.start,
        b_grid, death_w, 1.0 - contract.kappa,
        out_u, out_u0,
    )
    return Slab(u=out_u, u0=out_u0)


@dataclass
class PriceResult:
    """Root-level output of the pricer.

    ``root_slice`` holds the time-0 value over the z-grid at the inception
    base benefit, so nearby initial accounts can be re-read without another
    backward pass (the surface does not depend on the initial account).
    """

    price: float
    delta: float
    premium: float
    z: np.ndarray
    root_slice: np.ndarray
    center: int
    h: float
    mode: str
    grid: GridConfig
    runtime: float
    zero_account_value: float = 0.0  # time-0 value of the A = 0, B = P state

    def price_at(self, a0: float) -> float:
        """Time-0 value for initial account a0 (B fixed at the premium),
        by local quadratic interpolation on the root z-slice."""
        if a0 <= 0.0:
            raise ValueError("initial account must be positive")
        zq = self.center + math.log(a0 / self.premium) / self.h
        t = int(np.clip(round(zq), 1, self.z.size - 2))
        d = zq - t
        um, uc, up = self.root_slice[t - 1], self.root_slice[t], self.root_slice[t + 1]
        return float(uc + 0.5 * d * (up - um) + 0.5 * d * d * (up - 2.0 * uc + um))

    def bump_delta(self, rel_bump: float = 0.01) -> float:
        """Central-difference delta from re-read prices at A0 (1 +/- bump)."""
        up = self.price_at(self.premium * (1.0 + rel_bump))
        dn = self.price_at(self.premium * (1.0 - rel_bump))
        return (up - dn) / (2.0 * self.premium * rel_bump)


def _check_finite(arr: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"non-finite values produced {where}")


def price_gmwb(model: HhwParams, contract: ContractParams, grid: GridConfig,
               mode: str = "optimal") -> PriceResult:
    """Price the contract and read delta from the root z-grid.

    ``mode`` is "optimal" (worst-case withdrawal for the insurer, maximized
    over the discrete candidate set at every anniversary) or "static"
    (withdraw min(G, B) at every anniversary).  Deterministic for fixed
    inputs.  Raises GridTooCoarse when the time grid cannot seat all T
    anniversaries and NonFiniteValue if the scheme degenerates.
    """
    if mode not in ("optimal", "static"):
        raise ValueError(f"unknown mode {mode!r}")
    t_start = time.perf_counter()
    T = int(contract.T)
    if grid.n_time < T:
        raise GridTooCoarse(
            f"n_time = {grid.n_time} cannot place {T} distinct anniversaries"
        )
    # anniversary i sits on the nearest time level (exact when T | n_time)
    anniv_level = {int(round(i * grid.n_time / T)): i for i in range(1, T + 1)}
    if len(anniv_level) != T:
        raise GridTooCoarse(
            f"n_time = {grid.n_time} cannot place {T} distinct anniversaries"
        )
    v_tree = build_cir_tree(model.kv, model.thetav, model.omegav,
                            grid.n_time, float(T), model.v0)
    x_tree = build_ou_tree(model.kr, grid.n_time, float(T))
    zg = make_zgrid(model, grid, float(T))
    mort = contract.mortality

    if mode == "optimal":
        b_grid = np.linspace(0.0, contract.P, grid.n_b + 1)
        cand = _build_candidates(b_grid, contract)
        b_index_p = grid.n_b  # inception slice B = P
        # static-sequence bookkeeping unused in this mode
        seg_b = None
    else:
        # base benefit is deterministic: B after i withdrawals
        seq = [contract.P]
        for _ in range(T):
            seq.append(seq[-1] - min(contract.G, seq[-1]))
        seg_b = seq
        b_index_p = 0

    # terminal slab, then the maturity withdrawal
    nv = v_tree.node_count(grid.n_time)
    nx = x_tree.node_count(grid.n_time)
    if mode == "optimal":
        term_b = b_grid
    else:
        term_b = np.array([seg_b[T]])
    nbp = term_b.size
    u = np.empty((nv, nx, nbp, grid.n_space + 1))
    u0 = np.empty((nv, nx, nbp))
    _kernels.terminal_surface(
        _a_values(zg, v_tree.values[grid.n_time], contract.P), term_b,
        mort.r_anniv[T], 1.0 - contract.kappa, u, u0,
    )
    slab = Slab(u=u, u0=u0)

    def apply_year(slab_plus: Slab, year: int, level: int) -> Slab:
        v_nodes = v_tree.values[level]
        if mode == "optimal":
            return anniversary_operator(slab_plus, v_nodes, zg, contract,
                                        year, b_grid, cand)
        b_pre = seg_b[year - 1]
        w = min(contract.G, b_pre)
        single = _Candidates(
            w=np.array([w]),
            cash_unit=np.array([net_cash_flow(w, contract)]),
            b1=np.array([0], dtype=np.int64), b2=np.array([0], dtype=np.int64),
            bw=np.array([0.0]), start=np.array([0, 1], dtype=np.int64),
        )
        return anniversary_operator(slab_plus, v_nodes, zg, contract, year,
                                    np.array([b_pre]), single)

    slab = apply_year(slab, T, grid.n_time)
    _check_finite(slab.u, f"at the year-{T} anniversary")

    for n in range(grid.n_time - 1, -1, -1):
        t_n = n * v_tree.dt
        slab = pde_step(slab, v_tree, x_tree, n, model, contract.alpha, zg,
                        t_n, theta=grid.theta)
        year = anniv_level.get(n)
        if year is not None:
            slab = apply_year(slab, year, n)
            _check_finite(slab.u, f"at the year-{year} anniversary")

    root = slab.u[0, 0, b_index_p]
    _check_finite(root, "at the valuation root")
    mc = zg.center
    price = float(root[mc])
    delta = float((root[mc + 1] - root[mc - 1]) / (2.0 * zg.h * contract.P))
    return PriceResult(
        price=price, delta=delta, premium=contract.P, z=zg.z.copy(),
        root_slice=root.copy(), center=mc, h=zg.h, mode=mode, grid=grid,
        runtime=time.perf_counter() - t_start,
        zero_account_value=float(slab.u0[0, 0, b_index_p]),
    )


def no_arbitrage_fee(value_fn, premium: float, tol: float | None = None,
                     alpha_max: float = 0.10, x0: float = 0.02,
                     x1: float = 0.06, max_iter: int = 100):
    """Fee rate at which the contract value equals the premium, by secant.

    ``value_fn`` maps a fee rate to a contract value (direct pricing or a
    surrogate prediction); it must be continuous and decreasing in the fee
    over [0, alpha_max].  Returns (alpha, evaluations).  Raises NoRoot when
    the guarantee is worthless even for a free contract (V(0) < premium) or
    no sign change exists on the bracket, and MaxIterations otherwise.
    """
    if tol is None:
        tol = 1e-3 * premium
    evals = 0
    cache: dict[float, float] = {}

    def g(a: float) -> float:
        nonlocal evals
        if a not in cache:
            cache[a] = value_fn(a) - premium
            evals += 1
        return cache[a]

    lo_a, hi_a = 0.0, alpha_max
    pos_a = neg_a = None  # g > 0 side (low fee) / g < 0 side (high fee)

    def note(a: float, f: float):
        nonlocal pos_a, neg_a
        if f > 0.0 and (pos_a is None or a > pos_a):
            pos_a = a
        if f < 0.0 and (neg_a is None or a < neg_a):
            neg_a = a

    f0 = g(x0)
    if abs(f0) <= tol:
        return x0, evals
    note(x0, f0)
    f1 = g(x1)
    if abs(f1) <= tol:
        return x1, evals
    note(x1, f1)

    a0, a1 = x0, x1
    for _ in range(max_iter):
        if f1 == f0:
            if pos_a is not None and neg_a is not None:
                a2 = 0.5 * (pos_a + neg_a)
            else:
                raise NoRoot("flat value function and no bracketing sign change")
        else:
            a2 = a1 - f1 * (a1 - a0) / (f1 - f0)
        if pos_a is not None and neg_a is not None and not (
            min(pos_a, neg_a) <= a2 <= max(pos_a, neg_a)
        ):
            a2 = 0.5 * (pos_a + neg_a)  # secant left the bracket: bisect
        if a2 < lo_a or a2 > hi_a:
            a2 = min(max(a2, lo_a), hi_a)
            f2 = g(a2)
            if abs(f2) <= tol:
                return a2, evals
            if a2 == lo_a and f2 < 0.0:
                raise NoRoot("contract value below premium even at zero fee")
            if a2 == hi_a and f2 > 0.0:
                raise NoRoot(f"no sign change on [0, {alpha_max}]")
        else:
            f2 = g(a2)
            if abs(f2) <= tol:
                return a2, evals
        note(a2, f2)
        a0, f0 = a1, f1
        a1, f1 = a2, f2
    raise MaxIterations(f"secant did not converge in {max_iter} iterations")


def bisection_fee(value_fn, premium: float, tol: float | None = None,
                  alpha_max: float = 0.10, max_iter: int = 200):
    """Bisection reference for the fee: same contract as no_arbitrage_fee."""
    if tol is None:
        tol = 1e-3 * premium
    lo, hi = 0.0, alpha_max
    f_lo = value_fn(lo) - premium
    if abs(f_lo) <= tol:
        return lo
    f_hi = value_fn(hi) - premium
    if abs(f_hi) <= tol:
        return hi
    if f_lo < 0.0:
        raise NoRoot("contract value below premium even at zero fee")
    if f_hi > 0.0:
        raise NoRoot(f"no sign change on [0, {alpha_max}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = value_fn(mid) - premium
        if abs(f_mid) <= tol:
            return mid
        if f_mid > 0.0:
            lo = mid
        else:
            hi = mid
    raise MaxIterations(f"bisection did not converge in {max_iter} iterations")


def fee_value_fn(model: HhwParams, contract: ContractParams, grid: GridConfig,
                 mode: str = "optimal"):
    """Direct-pricing value function alpha -> V(P, P, v0, r0, 0)."""

    def value(alpha: float) -> float:
        return price_gmwb(model, replace(contract, alpha=float(alpha)),
                          grid, mode=mode).price

    return value
