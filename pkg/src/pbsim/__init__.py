"""Deterministic PBS block-auction simulator and measurement toolkit."""

from .model import (BidTransaction, BlockSubmission, Channel, ChannelKind, Dataset, Direction,
                    MempoolEvent, PoolState, SlotTrace, SwapSpec, TokenPair, Transaction, TxKind,
                    validate_dataset)
from .amm import SwapStatus, execute_swap, quote_marginal_price, replay_block
from .market import PriceTrace, generate_gbm_trace, optimal_arb, price_at
from .config import ScenarioConfig, load_scenario, parse_scenario
from .auction import proposer_select, relay_admit, run_scenario, run_slot

__version__ = "0.1.0"
