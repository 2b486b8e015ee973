"""Measurement methodology over a :class:`~pbsim.model.Dataset`."""

from .channels import ChannelLabel, RevenueSplit, classify_channels, revenue_attribution, revenue_by_cycle
from .delays import DelayRecord, DelaySummary, delayed_transactions
from .execution import PanelRow, execution_panel, panel_regression
from .prices import (BotTrade, ImprovementRow, SecondRow, aggregate_per_second, benchmark_lag_regression,
                     bot_trades, implied_cex_price, improvement_regression, improvement_rows,
                     per_second_bot_series, price_improvement)
from .regression import RankDeficiencyError, RegressionResult, ols
from .similarity import SharingEvent, SimilarityMatrix, sharing_events, similarity_matrix
