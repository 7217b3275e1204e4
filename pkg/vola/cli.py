"""
Command dispatch for run.py: train, sweep, verify and gen-data.

The composed Hydra config is validated into a RunSpec; `run` executes it,
writes CSV artifacts through an ArtifactWriter and maps errors to exit codes
(0 success, 1 validation, 2 numerical failure, 3 theorem violation).
"""

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from omegaconf import DictConfig, OmegaConf

from . import verify as verify_suites
from .artifacts import ArtifactWriter, config_hash
from .envs.base import Environment
from .envs.portfolio import PortfolioConfig, portfolio_env
from .envs.prices import PriceSeries, gen_gbm_prices, load_prices_csv
from .envs.tabular import TabularEnv, build_random_tabular, two_cycle_mdp
from .envs.trading import TradingConfig, trading_env
from .errors import TheoremViolation, ValidationError, VolaError
from .optimizers.common import batch_stats, exact_stats
from .optimizers.config import TrainConfig, TrainLog
from .optimizers.mean_variance import mean_variance_pg
from .optimizers.safe import SafeConfig, safe_vola_pg
from .optimizers.trpo_exp import trpo_exp
from .optimizers.trvo import trvo
from .optimizers.vola_pg import vola_pg
from .policy import PolicyParams, gaussian_policy, load_checkpoint, save_checkpoint, softmax_policy
from .sampling import Batch, collect

logger = logging.getLogger(__name__)

COMMANDS = ("train", "sweep", "verify", "gen-data")
ALGORITHMS = ("vola-pg", "trvo", "trpo-exp", "mean-variance", "safe-vola-pg")
ENVIRONMENTS = ("two-cycle", "portfolio", "trading", "random-tabular")
TABULAR_ENVIRONMENTS = ("two-cycle", "random-tabular")
POLICY_KINDS = ("softmax", "gaussian")
FEATURE_MAPS = ("identity", "bias")

FRONTIER_COLUMNS = ("lambda_or_c", "j_hat", "nu2_hat", "sigma2_hat", "eta_hat", "iterations", "seed")
TRAIN_LOG_FILE = "train_log.csv"
CHECKPOINT_FILE = "policy.ckpt"
FRONTIER_FILE = "frontier.csv"
VERIFY_FILE = "verify_report.csv"

# keys that do not change any artifact body
UNHASHED_KEYS = ("out_dir", "jobs")


@dataclass(frozen=True)
class RunSpec:
    command: str
    algorithm: str
    environment: str
    out_dir: Path
    seed: int
    jobs: int = 1
    config_path: Optional[str] = None
    timing: bool = False
    config: Dict[str, Any] = field(default_factory=dict, compare=False, repr=False)

    def section(self, name: str) -> Dict[str, Any]:
        return dict(self.config.get(name) or {})

    def hashed_config(self) -> Dict[str, Any]:
        return {k: v for k, v in self.config.items() if k not in UNHASHED_KEYS}

    @property
    def metadata(self) -> Dict[str, Any]:
        return {"seed": self.seed, "config_hash": config_hash(self.hashed_config())}

    @classmethod
    def from_config(cls, cfg, config_path: Optional[str] = None) -> "RunSpec":
        """Validate the composed config: enums, referenced files, writable output and method combinations"""
        data = OmegaConf.to_container(cfg, resolve=True) if isinstance(cfg, DictConfig) else dict(cfg)
        data.pop("hydra", None)
        command = _choice(data, "command", COMMANDS)
        algorithm = _choice(data, "algo", ALGORITHMS)
        environment = _choice(data, "env_name", ENVIRONMENTS)
        seed = data.get("seed", 0)
        jobs = data.get("jobs", 1)
        if not isinstance(seed, int) or seed < 0:
            raise ValidationError(f"seed must be a non-negative integer, got {seed!r}")
        if not isinstance(jobs, int) or jobs < 1:
            raise ValidationError(f"jobs must be a positive integer, got {jobs!r}")
        out_dir = Path(data.get("out_dir") or "outputs")
        _check_writable(out_dir)

        spec = cls(command, algorithm, environment, out_dir, seed, jobs, config_path,
                   bool(data.get("timing", False)), data)
        if command in ("train", "sweep"):
            spec._check_training()
        return spec

    def _check_training(self) -> None:
        policy = self.section("policy")
        kind = policy.get("kind", "softmax")
        if kind not in POLICY_KINDS:
            raise ValidationError(f"policy.kind must be one of {POLICY_KINDS}, got {kind!r}")
        if policy.get("feature_map", "identity") not in FEATURE_MAPS:
            raise ValidationError(f"policy.feature_map must be one of {FEATURE_MAPS}, got {policy.get('feature_map')!r}")
        if kind == "gaussian" and not (policy.get("sigma") or 0) > 0:
            raise ValidationError("a gaussian policy needs policy.sigma > 0")
        checkpoint = policy.get("checkpoint")
        if checkpoint and not Path(checkpoint).is_file():
            raise ValidationError(f"policy.checkpoint not found: {checkpoint}")
        prices = self.section("env").get("trading", {}).get("prices_csv")
        if self.environment == "trading" and prices and not Path(prices).is_file():
            raise ValidationError(f"env.trading.prices_csv not found: {prices}")

        config = self.train_config()
        tabular = self.environment in TABULAR_ENVIRONMENTS
        needs_exact = config.gradient == "exact" or (
            self.algorithm in ("trvo", "trpo-exp") and config.trust_region == "penalty")
        if needs_exact and not tabular:
            raise ValidationError(f"{self.algorithm} in exact mode needs a tabular environment, got {self.environment}")
        if needs_exact and kind != "softmax":
            raise ValidationError("exact mode needs a softmax policy")
        if self.algorithm == "trpo-exp" and config.trust_region != "practical":
            raise ValidationError("trpo-exp runs the practical trust-region update only")
        if self.algorithm == "safe-vola-pg":
            self.safe_config()
        if self.command == "sweep":
            grid = self.grid()
            if not grid:
                raise ValidationError("the sweep grid is empty")
            if any(not math.isfinite(v) or v < 0 for v in grid):
                raise ValidationError(f"sweep grid values must be finite and >= 0, got {grid}")
            if self.algorithm == "trpo-exp" and any(v == 0 for v in grid):
                raise ValidationError("sweep.c_grid values must be > 0")

    def train_config(self, **overrides) -> TrainConfig:
        merged = {"seed": self.seed, **overrides}
        return TrainConfig.from_cfg(self.config, **merged)

    def safe_config(self) -> SafeConfig:
        try:
            return SafeConfig(**self.section("safe"))
        except TypeError as e:
            raise ValidationError(f"bad safe configuration: {e}") from None

    def grid(self) -> List[float]:
        sweep = self.section("sweep")
        key = "c_grid" if self.algorithm == "trpo-exp" else "lambda_grid"
        return [float(v) for v in sweep.get(key) or []]


def _choice(data: Dict[str, Any], key: str, allowed: Sequence[str]) -> str:
    value = data.get(key)
    if value not in allowed:
        raise ValidationError(f"{key} must be one of {tuple(allowed)}, got {value!r}")
    return value


def _check_writable(out_dir: Path) -> None:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ValidationError(f"cannot create output directory {out_dir}: {e}") from None
    if not os.access(out_dir, os.W_OK):
        raise ValidationError(f"output directory {out_dir} is not writable")


def load_prices(spec: RunSpec) -> PriceSeries:
    trading = spec.section("env").get("trading", {})
    if trading.get("prices_csv"):
        return load_prices_csv(trading["prices_csv"])
    gbm = trading.get("gbm", {})
    return gen_gbm_prices(spec.seed, gbm.get("n", 2000), gbm.get("drift", 0.0), gbm.get("vol", 0.01),
                          gbm.get("p0", 100.0))


def _dataclass_kwargs(section: Dict[str, Any], exclude: Sequence[str] = ()) -> Dict[str, Any]:
    return {k: v for k, v in section.items() if k not in exclude}


def build_env(spec: RunSpec) -> Environment:
    env_cfg = spec.section("env")
    horizon = env_cfg.get("horizon", 50)
    try:
        if spec.environment == "two-cycle":
            c = env_cfg.get("two_cycle", {})
            return TabularEnv(two_cycle_mdp(c.get("epsilon", 0.2), c.get("gamma", 0.9)), horizon, seed=spec.seed)
        if spec.environment == "random-tabular":
            c = env_cfg.get("random_tabular", {})
            mdp = build_random_tabular(spec.seed, c.get("n_states", 10), c.get("n_actions", 3), c.get("gamma", 0.9),
                                       c.get("r_max", 1.0))
            return TabularEnv(mdp, horizon, seed=spec.seed)
        if spec.environment == "portfolio":
            return portfolio_env(PortfolioConfig(**env_cfg.get("portfolio", {})), spec.seed)
        trading = _dataclass_kwargs(env_cfg.get("trading", {}), exclude=("prices_csv", "gbm"))
        return trading_env(load_prices(spec), TradingConfig(**trading), spec.seed)
    except TypeError as e:
        raise ValidationError(f"bad env.{spec.environment.replace('-', '_')} configuration: {e}") from None


def build_policy(spec: RunSpec, env: Environment) -> PolicyParams:
    cfg = spec.section("policy")
    if cfg.get("checkpoint"):
        policy = load_checkpoint(cfg["checkpoint"])
        if policy.state_dim != env.feature_dim or policy.n_actions != env.action_count:
            raise ValidationError(
                f"checkpoint shape (state_dim={policy.state_dim}, actions={policy.n_actions}) does not match "
                f"{spec.environment} (state_dim={env.feature_dim}, actions={env.action_count})")
        return policy
    feature_map = cfg.get("feature_map", "identity")
    if cfg.get("kind", "softmax") == "gaussian":
        policy = gaussian_policy(env.action_count, env.feature_dim, cfg["sigma"], feature_map=feature_map)
    else:
        policy = softmax_policy(env.action_count, env.feature_dim, feature_map=feature_map)
    scale = cfg.get("init_scale", 0.0)
    if scale:
        rng = np.random.default_rng((spec.seed, 17))
        policy = policy.with_theta(scale * rng.standard_normal(policy.m))
    return policy


def train_once(spec: RunSpec, env: Environment, policy: PolicyParams, config: TrainConfig) -> Tuple[PolicyParams, TrainLog]:
    logger.info("training %s on %s: lambda=%g, %d iterations", spec.algorithm, spec.environment, config.lam,
                config.iterations)
    if spec.algorithm == "vola-pg":
        return vola_pg(env, policy, config)
    if spec.algorithm == "trvo":
        return trvo(env, policy, config)
    if spec.algorithm == "trpo-exp":
        return trpo_exp(env, policy, config)
    if spec.algorithm == "mean-variance":
        return mean_variance_pg(env, policy, config)
    return safe_vola_pg(env, policy, config, spec.safe_config())


def _log_frame(spec: RunSpec, log: TrainLog) -> pd.DataFrame:
    frame = log.to_frame()
    if not spec.timing:
        frame["wall_time"] = 0.0
    return frame


def _run_train(spec: RunSpec, writer: ArtifactWriter) -> None:
    env = build_env(spec)
    policy, log = train_once(spec, env, build_policy(spec, env), spec.train_config(jobs=spec.jobs))
    writer.write_frame(TRAIN_LOG_FILE, _log_frame(spec, log))
    save_checkpoint(policy, writer.track(writer.path(CHECKPOINT_FILE)))
    for message in log.flags:
        logger.warning("flagged: %s", message)


def _volatility_se(batch: Batch, j: float) -> float:
    per_traj = batch.normalizer * np.sum(np.where(batch.mask, (batch.rewards - j) ** 2, 0.0) * batch.discounts, axis=1)
    return float(np.std(per_traj, ddof=1) / math.sqrt(batch.n)) if batch.n > 1 else float("nan")


def evaluate(spec: RunSpec, env: Environment, policy: PolicyParams, config: TrainConfig,
             index: int) -> Dict[str, float]:
    """Final-policy statistics: exact on tabular environments, a fresh evaluation batch otherwise"""
    if isinstance(env, TabularEnv) and policy.is_softmax:
        stats = exact_stats(env, policy, config.lam)
        return {"j_hat": stats.j, "nu2_hat": stats.nu2, "sigma2_hat": stats.sigma2, "eta_hat": stats.eta,
                "nu2_se": 0.0}
    episodes = spec.section("sweep").get("eval_episodes", 500)
    batch = collect(env, policy, episodes, config.horizon, np.random.SeedSequence((spec.seed, 7919, index)),
                    config.gamma)
    stats = batch_stats(batch, config.lam)
    return {"j_hat": stats.j, "nu2_hat": stats.nu2, "sigma2_hat": stats.sigma2, "eta_hat": stats.eta,
            "nu2_se": _volatility_se(batch, stats.j)}


def sweep_point(spec: RunSpec, index: int, value: float) -> Dict[str, float]:
    """Train one grid point from scratch and evaluate the final policy"""
    key = "c" if spec.algorithm == "trpo-exp" else "lam"
    config = spec.train_config(**{key: value})
    env = build_env(spec)
    policy, log = train_once(spec, env, build_policy(spec, env), config)
    row = {"lambda_or_c": value, **evaluate(spec, env, policy, config, index), "iterations": len(log),
           "seed": spec.seed}
    logger.info("grid point %s=%g: J=%.6g nu2=%.6g", key, value, row["j_hat"], row["nu2_hat"])
    return row


@dataclass
class FrontierReport:
    inversions: List[Tuple[float, float]] = field(default_factory=list)
    dominated: List[float] = field(default_factory=list)
    monotone: bool = True

    @property
    def ok(self) -> bool:
        return self.monotone and not self.dominated


def frontier_checks(frame: pd.DataFrame, nu2_se: Optional[Sequence[float]] = None) -> FrontierReport:
    """
    nu2_hat must not increase along the grid, except for one adjacent inversion
    within two standard errors; no point may have both a strictly higher J and a
    strictly lower nu2 than another.
    """
    ordered = frame.assign(_se=0.0 if nu2_se is None else np.asarray(nu2_se, dtype=float))
    ordered = ordered.sort_values("lambda_or_c", kind="stable").reset_index(drop=True)
    se = ordered["_se"].to_numpy()
    report = FrontierReport()
    nu2, j, grid = ordered["nu2_hat"].to_numpy(), ordered["j_hat"].to_numpy(), ordered["lambda_or_c"].to_numpy()
    for i in range(len(ordered) - 1):
        rise = nu2[i + 1] - nu2[i]
        if rise > 0:
            report.inversions.append((float(grid[i]), float(grid[i + 1])))
            allowed = 2.0 * math.sqrt(np.nan_to_num(se[i]) ** 2 + np.nan_to_num(se[i + 1]) ** 2) + 1e-12
            if rise > allowed:
                report.monotone = False
    if len(report.inversions) > 1:
        report.monotone = False
    for i in range(len(ordered)):
        if np.any((j > j[i]) & (nu2 < nu2[i])):
            report.dominated.append(float(grid[i]))
    return report


def _run_sweep(spec: RunSpec, writer: ArtifactWriter) -> None:
    grid = spec.grid()
    if spec.jobs > 1 and len(grid) > 1:
        with ProcessPoolExecutor(max_workers=min(spec.jobs, len(grid))) as pool:
            rows = list(pool.map(sweep_point, [spec] * len(grid), range(len(grid)), grid))
    else:
        rows = [sweep_point(spec, i, value) for i, value in enumerate(grid)]
    frame = pd.DataFrame(rows)
    report = frontier_checks(frame, frame["nu2_se"].to_numpy())
    if not report.monotone:
        logger.warning("nu2_hat is not monotone along the grid (inversions between %s)", report.inversions)
    if report.dominated:
        logger.warning("strictly dominated grid points: %s", report.dominated)
    writer.write_frame(FRONTIER_FILE, frame[list(FRONTIER_COLUMNS)])


def _run_verify(spec: RunSpec, writer: ArtifactWriter) -> List[verify_suites.SuiteResult]:
    cfg = verify_suites.VerifyConfig.from_cfg(spec.section("verify"), seed=spec.seed)
    results = verify_suites.run_suites(cfg)
    writer.write_frame(VERIFY_FILE, verify_suites.report_frame(results))
    return results


def _run_gen_data(spec: RunSpec, writer: ArtifactWriter) -> None:
    data = spec.section("data")
    series = gen_gbm_prices(spec.seed, data.get("n", 2000), data.get("drift", 0.0), data.get("vol", 0.01),
                            data.get("p0", 100.0))
    writer.write_frame(data.get("file", "prices.csv"), series.to_frame())


HANDLERS: Dict[str, Callable[[RunSpec, ArtifactWriter], Any]] = {
    "train": _run_train,
    "sweep": _run_sweep,
    "verify": _run_verify,
    "gen-data": _run_gen_data,
}


def run(spec: RunSpec) -> int:
    """Execute a validated spec; returns the process exit status"""
    logger.info("%s: algo=%s env=%s seed=%d out=%s", spec.command, spec.algorithm, spec.environment, spec.seed,
                spec.out_dir)
    try:
        with ArtifactWriter(spec.out_dir, spec.metadata) as writer:
            outcome = HANDLERS[spec.command](spec, writer)
        if spec.command == "verify":
            failed = verify_suites.failed_gating(outcome)
            if failed:
                raise TheoremViolation(f"{len(failed)} gating suite(s) failed: {', '.join(failed)}", failed)
    except VolaError as e:
        logger.error("%s failed (%s): %s", spec.command, type(e).__name__, e)
        return e.exit_code
    logger.info("%s finished; artifacts in %s", spec.command, spec.out_dir)
    return 0


def run_config(cfg, config_path: Optional[str] = None) -> int:
    """Validate and run a composed config; validation errors map to exit status 1"""
    try:
        spec = RunSpec.from_config(cfg, config_path)
    except VolaError as e:
        logger.error("invalid configuration: %s", e)
        return e.exit_code
    return run(spec)
