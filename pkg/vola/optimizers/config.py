"""Training configuration and the per-iteration training log."""

import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd
from omegaconf import DictConfig, OmegaConf

from ..artifacts import write_csv
from ..errors import ValidationError

logger = logging.getLogger(__name__)

TRUST_REGION_MODES = ("practical", "penalty")
GRADIENT_MODES = ("sampled", "exact")
ESTIMATORS = ("pgt", "gpomdp")

LOG_COLUMNS = ("iter", "j_hat", "nu2_hat", "sigma2_hat", "eta_hat", "grad_norm", "kl_step",
               "accepted_step_size", "wall_time")


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 0.0
    gamma: float = 0.99
    horizon: int = 50
    batch_size: int = 100
    iterations: int = 100
    alpha: float = 0.01
    trust_region: str = "practical"
    kl_radius: float = 0.01
    cg_iters: int = 10
    cg_damping: float = 1e-3
    cg_tol: float = 1e-10
    backtrack_coef: float = 0.8
    backtrack_steps: int = 10
    penalty_inner_steps: int = 50
    penalty_step: float = 1.0
    c: float = 0.1
    seed: int = 0
    gradient: str = "sampled"
    estimator: str = "pgt"
    baseline: bool = True
    clip_norm: Optional[float] = None
    jobs: int = 1

    def __post_init__(self):
        if self.lam < 0:
            raise ValidationError(f"lambda must be >= 0, got {self.lam}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValidationError(f"gamma must lie in [0, 1), got {self.gamma}")
        for name in ("horizon", "batch_size", "cg_iters", "backtrack_steps", "penalty_inner_steps", "jobs"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.iterations < 0:
            raise ValidationError(f"iterations must be >= 0, got {self.iterations}")
        for name in ("alpha", "kl_radius", "cg_damping", "penalty_step"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not self.c > 0:
            raise ValidationError(f"exponential-utility coefficient c must be > 0, got {self.c}")
        if not 0.0 < self.backtrack_coef < 1.0:
            raise ValidationError(f"backtrack_coef must lie in (0, 1), got {self.backtrack_coef}")
        if self.trust_region not in TRUST_REGION_MODES:
            raise ValidationError(f"trust_region must be one of {TRUST_REGION_MODES}, got {self.trust_region!r}")
        if self.gradient not in GRADIENT_MODES:
            raise ValidationError(f"gradient must be one of {GRADIENT_MODES}, got {self.gradient!r}")
        if self.estimator not in ESTIMATORS:
            raise ValidationError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValidationError(f"clip_norm must be positive or null, got {self.clip_norm}")

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    @classmethod
    def from_cfg(cls, cfg: Union[DictConfig, Dict[str, Any]], **overrides) -> "TrainConfig":
        """Build from the `train` and `trvo` sections of the composed config"""
        data = OmegaConf.to_container(cfg, resolve=True) if isinstance(cfg, DictConfig) else dict(cfg)
        merged: Dict[str, Any] = {}
        merged.update(data.get("train", {}) or {})
        merged.update(data.get("trvo", {}) or {})
        if "lambda" in merged:
            merged["lam"] = merged.pop("lambda")
        merged.update(overrides)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(merged) - known)
        if unknown:
            raise ValidationError(f"unknown training keys: {unknown}")
        return cls(**merged)


@dataclass
class TrainRecord:
    iter: int
    j_hat: float
    nu2_hat: float
    sigma2_hat: float
    eta_hat: float
    grad_norm: float
    kl_step: float
    accepted_step_size: float
    wall_time: float
    extras: Dict[str, float] = field(default_factory=dict)


@dataclass
class TrainLog:
    """One record per iteration plus flagged events (fallbacks, caps)"""
    algorithm: str
    records: List[TrainRecord] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)

    def append(self, record: TrainRecord) -> None:
        if self.records and record.iter <= self.records[-1].iter:
            raise ValidationError("train log iterations must increase")
        self.records.append(record)
        logger.info("%s iter %d: J=%.6g nu2=%.6g eta=%.6g |g|=%.3g step=%.3g",
                    self.algorithm, record.iter, record.j_hat, record.nu2_hat, record.eta_hat,
                    record.grad_norm, record.accepted_step_size)

    def flag(self, iteration: int, message: str) -> None:
        self.flags.append(f"iter {iteration}: {message}")
        logger.warning("%s iter %d: %s", self.algorithm, iteration, message)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> List[float]:
        if name in LOG_COLUMNS:
            return [getattr(r, name) for r in self.records]
        return [r.extras.get(name, float("nan")) for r in self.records]

    def to_frame(self) -> pd.DataFrame:
        extra_names: List[str] = []
        for record in self.records:
            extra_names.extend(k for k in record.extras if k not in extra_names)
        rows = [{**{c: getattr(r, c) for c in LOG_COLUMNS}, **{k: r.extras.get(k, float("nan")) for k in extra_names}}
                for r in self.records]
        return pd.DataFrame(rows, columns=list(LOG_COLUMNS) + extra_names)

    def to_csv(self, path: Union[str, Path], metadata: Dict) -> Path:
        return write_csv(self.to_frame(), path, metadata)
