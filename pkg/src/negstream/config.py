"""Experiment configuration files (JSON) with a strict schema.

Unknown keys anywhere in the document are rejected. Every section is
optional and falls back to the defaults below. Angles are in radians.

Top-level keys:

``seed``
    Master seed; overrides ``world.seed`` and the engine seed.
``world`` / ``world_dir``
    Either WorldSpec fields for a freshly generated world, or a directory
    written by ``gen-world`` (replayed without regeneration). Not both.
``engine``
    beta, L, M, rho, batch_size, use_buffer, dynamic, repermute, plus the
    ``score`` (tau, G, C_scale) and ``inversion`` (lam, learning_rate,
    weight_decay, iterations, init, sigma, beta1, beta2, epsilon) blocks.
``plan``
    ordering, id_ood_ratio, phases.
``sweep_ratios``
    Optional list of ``[n_id, n_ood]`` pairs; run-stream then reports one
    metric block per ratio.
``grad_check``
    points, h, lam.
``theorem``
    trials, G (list), transfers_per_trial, grid.
``output``
    Default output directory (``--output`` wins).
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from .core import NegStreamError
from .engine import EngineConfig
from .inversion import InversionConfig, RandomInit, VocabularyPriorInit
from .scoring import ScoreConfig
from .synthworld import StreamPlan, WorldSpec


class ConfigError(NegStreamError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class WorldSection(_Strict):
    d: int = 64
    k: int = 64
    C: int = 10
    n_ood_clusters: int = 4
    angular_margin: float = math.radians(50)
    noise_kappa: float = 0.6
    ood_noise_kappa: Optional[float] = None
    hard_id_fraction: float = 0.1
    vocab_size: int = 500
    seed: int = 0
    n_shots: int = 16
    n_id: int = 200
    n_ood_per_cluster: int = 200
    text_alignment: float = 0.7
    hard_id_mix: float = 0.4
    mean_separation: float = math.radians(60)
    vocab_id_fraction: float = 0.2
    vocab_ood_fraction: float = 0.0
    vocab_ood_alignment: float = 0.5
    prefix_scale: float = 0.5
    image_gap: float = 1.0
    text_gap: float = 1.0

    def to_spec(self, seed: int) -> WorldSpec:
        return WorldSpec(**{**self.model_dump(), "seed": seed})


class ScoreSection(_Strict):
    tau: float = 0.01
    G: int = 5
    C_scale: Optional[float] = None


class InversionSection(_Strict):
    lam: float = 0.3
    learning_rate: float = 2e-2
    weight_decay: float = 1e-2
    iterations: int = 30
    init: Literal["vocabulary_prior", "random"] = "vocabulary_prior"
    sigma: float = 0.02
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


class EngineSection(_Strict):
    beta: float = 0.3
    L: int = 50
    M: int = 50
    rho: float = 0.5
    batch_size: int = 256
    use_buffer: bool = True
    dynamic: bool = True
    repermute: Literal["on_change", "per_batch"] = "on_change"
    score: ScoreSection = ScoreSection()
    inversion: InversionSection = InversionSection()

    def to_config(self, seed: int, dynamic: bool | None = None) -> EngineConfig:
        inv = self.inversion
        init = RandomInit(inv.sigma) if inv.init == "random" else VocabularyPriorInit()
        return EngineConfig(
            beta=self.beta, L=self.L, M=self.M, rho=self.rho, batch_size=self.batch_size,
            use_buffer=self.use_buffer, dynamic=self.dynamic if dynamic is None else dynamic,
            repermute=self.repermute, seed=seed,
            score=ScoreConfig(**self.score.model_dump()),
            inversion=InversionConfig(inv.lam, inv.learning_rate, inv.weight_decay, inv.iterations, init,
                                      inv.beta1, inv.beta2, inv.epsilon),
        )


class PlanSection(_Strict):
    ordering: Literal["random", "forward", "reverse", "temporal_shift"] = "random"
    id_ood_ratio: tuple[int, int] = (200, 200)
    phases: Optional[list[list[int]]] = None

    def to_plan(self, ratio: tuple[int, int] | None = None) -> StreamPlan:
        return StreamPlan(self.ordering, tuple(ratio or self.id_ood_ratio),
                          None if self.phases is None else [list(p) for p in self.phases])


class GradCheckSection(_Strict):
    points: int = 100
    h: float = 1e-5
    lam: float = 0.3


class TheoremSection(_Strict):
    trials: int = 20000
    G: list[int] = [2, 3, 5, 8, 10]
    transfers_per_trial: int = 5
    grid: int = 100


class ExperimentConfig(_Strict):
    seed: int = 0
    world: Optional[WorldSection] = None
    world_dir: Optional[str] = None
    engine: EngineSection = EngineSection()
    plan: PlanSection = PlanSection()
    sweep_ratios: Optional[list[tuple[int, int]]] = None
    grad_check: GradCheckSection = GradCheckSection()
    theorem: TheoremSection = TheoremSection()
    output: Optional[str] = None

    @model_validator(mode="after")
    def _one_world(self):
        if self.world is not None and self.world_dir is not None:
            raise ValueError("give either 'world' or 'world_dir', not both")
        return self

    def world_section(self) -> WorldSection:
        return self.world if self.world is not None else WorldSection()

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return self.model_copy(update={"seed": seed})


def parse_config(text: str, base_dir: str | Path | None = None) -> ExperimentConfig:
    """Parse and validate JSON text. Relative ``world_dir`` resolves against ``base_dir``."""
    try:
        cfg = ExperimentConfig.model_validate_json(text)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.world_dir is not None:
        p = Path(cfg.world_dir)
        if base_dir is not None and not p.is_absolute():
            p = Path(base_dir) / p
        if not (p / "world.json").exists():
            raise FileNotFoundError(f"world directory {p} has no world.json")
        cfg = cfg.model_copy(update={"world_dir": str(p)})
    return cfg


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    return parse_config(path.read_text(), path.parent)


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"
