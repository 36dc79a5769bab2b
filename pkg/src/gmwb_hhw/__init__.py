"""GMWB variable-annuity pricing under a stochastic-volatility,
stochastic-rate market model, with a Gaussian-process surrogate layer."""

from .contract import ContractParams, GmwbState, MortalityTable
from .hpde import GridConfig, PriceResult, no_arbitrage_fee, price_gmwb
from .model import DEFAULT_BOX, HhwParams, ParameterBox

__all__ = [
    "ContractParams",
    "GmwbState",
    "MortalityTable",
    "GridConfig",
    "PriceResult",
    "no_arbitrage_fee",
    "price_gmwb",
    "HhwParams",
    "ParameterBox",
    "DEFAULT_BOX",
]

__version__ = "0.1.0"
