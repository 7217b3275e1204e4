from .config import LOG_COLUMNS, TrainConfig, TrainLog, TrainRecord
from .exp_utility import check_exp_utility_approx, exp_utility_transform, reward_cumulants
from .mean_variance import mean_variance_gradient, mean_variance_pg
from .safe import SafeConfig, SafeMetaParams, c_bound, exact_meta_params, l_bound, safe_meta_params, safe_vola_pg
from .trpo_exp import trpo_exp
from .trvo import conjugate_gradient, trvo
from .vola_pg import vola_pg

__all__ = [
    "LOG_COLUMNS",
    "TrainConfig",
    "TrainLog",
    "TrainRecord",
    "check_exp_utility_approx",
    "exp_utility_transform",
    "reward_cumulants",
    "mean_variance_gradient",
    "mean_variance_pg",
    "SafeConfig",
    "SafeMetaParams",
    "c_bound",
    "exact_meta_params",
    "l_bound",
    "safe_meta_params",
    "safe_vola_pg",
    "trpo_exp",
    "conjugate_gradient",
    "trvo",
    "vola_pg",
]
