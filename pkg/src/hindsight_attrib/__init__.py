"""Feature-weight explanations for portfolio strategies.

The package trains toy-scale portfolio agents (actor-critic DRL plus four
classical regressors), derives per-slot feature weights for each of them
(integrated gradients for the agents, contribution regressions for the
rest), and scores those weights against a linear model fitted in hindsight
over one-slot and multi-slot horizons.
"""
from importlib import metadata

try:
    __version__ = metadata.version("hindsight-attrib")
except metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

from .agents import (
    AgentBundle,
    Hyperparams,
    PortfolioEnv,
    a2c_update,
    advantage,
    env_step,
    ppo_update,
    sample_action,
    train,
)
from .attribution import (
    PredictionPower,
    correlate,
    drl_feature_weights,
    feature_attribution,
    ig_along_path,
    prediction_power,
    upper_tail_z,
    z_from_stats,
)
from .backtest import (
    BacktestResult,
    StrategyHandle,
    drl_strategy,
    equal_weight_strategy,
    hindsight_strategy,
    max_drawdown,
    metrics,
    ml_strategy,
    run,
)
from .baselines import (
    DecisionTree,
    LinearRegression,
    LinearSVR,
    RandomForest,
    fit,
    ml_feature_weights,
    ml_strategy_weights,
    ml_weight_series,
    predict_returns,
)
from .config import RunConfig, config_from_dict, load_config
from .errors import HindsightAttribError
from .features import (
    FeatureScaler,
    FeatureTensor,
    IndicatorParams,
    adx,
    build_state,
    cci,
    compute_features,
    macd,
    rsi,
)
from .hindsight import (
    FeatureWeightSeries,
    cross_sectional_ols,
    reference_pipeline,
    reference_weights_at,
    smooth_reference,
)
from .market_data import (
    PricePanel,
    load_panel,
    price_relatives,
    sample_covariance,
    save_panel,
)
from .mean_variance import (
    MVProblem,
    PortfolioWeights,
    equal_weights,
    hindsight_weights,
    project_simplex,
    solve,
)
from .neural import AdamState, DenseNet, adam_step, load_checkpoint, save_checkpoint, sgd_step
from .synthetic import ohlcv_panel, persistent_alpha_market, planted_linear_market
