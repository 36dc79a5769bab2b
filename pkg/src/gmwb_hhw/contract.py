"""GMWB contract mechanics: state, cash flows, payoffs, mortality weighting.

The policyholder pays a premium P, may withdraw at integer anniversaries
t = 1..T, and is guaranteed an annual amount G (default P/T) free of
penalty; withdrawing w > G costs kappa * (w - G).  The account value A and
the base benefit B start at P; a withdrawal w reduces A to max(A - w, 0)
and B to B - w.  Death during a contract year pays max(A, (1-kappa) B) on
the pre-withdrawal state at that year's end; survivors receive the final
payoff max(A, (1-kappa) B) on the post-withdrawal state at maturity.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "ContractParams",
    "GmwbState",
    "MortalityTable",
    "NegativeWithdrawal",
    "WithdrawalExceedsBenefit",
    "TimeOutOfRange",
    "net_cash_flow",
    "apply_withdrawal",
    "death_benefit",
    "final_payoff",
]


class NegativeWithdrawal(ValueError):
    pass


class WithdrawalExceedsBenefit(ValueError):
    pass


class TimeOutOfRange(ValueError):
    pass


class MortalityTable:
    """Unconditional annual death probabilities for contract years 1..T.

    ``q[i-1]`` is the fraction of the original cohort dying in year i, so
    the survivor fraction at anniversary i is R(i) = 1 - sum(q[:i]).  R is
    piecewise linear between anniversaries (the death-time density is
    constant within each year) with R(0) = 1.
    """

    def __init__(self, q):
        q = np.asarray(q, dtype=float)
        if q.ndim != 1 or q.size < 1:
            raise ValueError("need at least one annual death probability")
        if np.any(q < 0.0) or np.any(q > 1.0):
            raise ValueError("death probabilities must lie in [0, 1]")
        if q.sum() > 1.0 + 1e-12:
            raise ValueError("cohort death probabilities sum to more than 1")
        self.q = q
        self.years = q.size
        # R at integer anniversaries 0..T
        self.r_anniv = np.concatenate([[1.0], 1.0 - np.cumsum(q)])
        self.r_anniv = np.clip(self.r_anniv, 0.0, 1.0)

    @classmethod
    def zero(cls, years: int) -> "MortalityTable":
        """No mortality: R identically 1."""
        return cls(np.zeros(years))

    @classmethod
    def from_csv(cls, path) -> "MortalityTable":
        """Two-column CSV ``year,death_probability`` with years 1..T."""
        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if [c.strip().lower() for c in header] != ["year", "death_probability"]:
                raise ValueError(
                    f"{path}: expected header 'year,death_probability', got {header}"
                )
            for rec in reader:
                if not rec or not rec[0].strip():
                    continue
                rows.append((int(rec[0]), float(rec[1])))
        rows.sort()
        if [y for y, _ in rows] != list(range(1, len(rows) + 1)):
            raise ValueError(f"{path}: years must be exactly 1..T with no gaps")
        return cls([p for _, p in rows])

    def survivor_fraction(self, t):
        """R(t): fraction of the original cohort alive at time t in [0, T]."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0) or np.any(t > self.years + 1e-12):
            raise TimeOutOfRange(f"t must lie in [0, {self.years}]")
        i = np.minimum(np.floor(t).astype(int), self.years - 1)
        frac = t - i
        out = self.r_anniv[i] - frac * self.q[i]
        return float(out) if out.ndim == 0 else out

    def death_weight(self, i: int) -> float:
        """Unconditional probability of death in contract year i (1-based)."""
        if not 1 <= i <= self.years:
            raise TimeOutOfRange(f"year {i} outside 1..{self.years}")
        return float(self.q[i - 1])


@dataclass(frozen=True)
class ContractParams:
    """Premium, maturity, fee and penalty rates, guarantee, mortality."""

    P: float
    T: int
    alpha: float
    kappa: float
    G: float | None = None
    mortality: MortalityTable | None = None

    def __post_init__(self):
        if self.P <= 0.0:
            raise ValueError("premium must be positive")
        if int(self.T) != self.T or self.T < 1:
            raise ValueError("maturity must be a positive integer number of years")
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError("kappa must lie in [0, 1]")
        if self.G is None:
            object.__setattr__(self, "G", self.P / self.T)
        if not 0.0 <= self.G <= self.P:
            raise ValueError("guaranteed withdrawal must lie in [0, P]")
        if self.mortality is None:
            object.__setattr__(self, "mortality", MortalityTable.zero(int(self.T)))
        if self.mortality.years < self.T:
            raise ValueError(
                f"mortality table covers {self.mortality.years} years, need {self.T}"
            )


@dataclass(frozen=True)
class GmwbState:
    """Account value A and base benefit B; at inception A = B = P."""

    A: float
    B: float

    def __post_init__(self):
        if self.A < 0.0 or self.B < 0.0:
            raise ValueError("account value and base benefit must be non-negative")


def net_cash_flow(w: float, contract: ContractParams) -> float:
    """Amount actually received for a withdrawal w: w minus the penalty
    kappa * (w - G) on the excess over the guarantee."""
    if w < 0.0:
        raise NegativeWithdrawal(f"withdrawal must be non-negative, got {w}")
    if w <= contract.G:
        return w
    return w - contract.kappa * (w - contract.G)


def apply_withdrawal(state: GmwbState, w: float) -> GmwbState:
    """Post-withdrawal state: A -> max(A - w, 0), B -> B - w."""
    if w < 0.0:
        raise NegativeWithdrawal(f"withdrawal must be non-negative, got {w}")
    if w > state.B + 1e-12 * max(1.0, state.B):
        raise WithdrawalExceedsBenefit(f"w = {w} exceeds base benefit {state.B}")
    return GmwbState(A=max(state.A - w, 0.0), B=max(state.B - w, 0.0))


def death_benefit(state: GmwbState, kappa: float) -> float:
    """Benefit to heirs, on the pre-withdrawal state: max(A, (1-kappa) B)."""
    return max(state.A, (1.0 - kappa) * state.B)


def final_payoff(state: GmwbState, kappa: float) -> float:
    """Survivor payoff at maturity, on the post-withdrawal state."""
    return max(state.A, (1.0 - kappa) * state.B)
