"""Request and response bodies for the HTTP surface.

Every long-form configuration (flow, grid, training) round-trips through
these models, so a serialized request doubles as a run manifest: replaying
the same JSON reproduces the same artifacts byte for byte.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

from ..forward import TimeGrid
from ..scorenet import TrainConfig
from ..strain import FlowKind, StrainConfig


class FlowSpec(BaseModel):
    kind: Literal["axisymmetric3d", "planar2d"] = "axisymmetric3d"
    a: float = Field(default=1.0, gt=0)
    nu: float = Field(default=1.0, ge=0)

    def to_config(self) -> StrainConfig:
        return StrainConfig(kind=FlowKind(self.kind), a=self.a, nu=self.nu)


class GridSpec(BaseModel):
    t_final: float = Field(default=2.0, gt=0)
    n_points: int = Field(default=200, ge=2)

    def to_grid(self) -> TimeGrid:
        return TimeGrid(t_final=self.t_final, n_points=self.n_points)


class TrainSpec(BaseModel):
    learning_rate: float = Field(default=1e-3, gt=0)
    beta1: float = Field(default=0.9, gt=0, lt=1)
    beta2: float = Field(default=0.999, gt=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    batch_size: int = Field(default=1024, ge=1)
    max_epochs: int = Field(default=200, ge=0)
    patience: int = Field(default=20, ge=1)

    def to_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            seed=seed,
        )


class GenerateRequest(BaseModel):
    flow: FlowSpec = FlowSpec()
    grid: GridSpec = GridSpec()
    scale: float = Field(default=1.0, gt=0)
    n_samples: int = Field(default=10000, ge=1)
    seed: int = 0
    out_path: str


class GenerateResponse(BaseModel):
    path: str
    sidecar_path: str
    n_samples: int
    attempts: int
    content_hash: str


class TrainRequest(BaseModel):
    dataset_path: str
    checkpoint_path: str
    train_fraction: float = Field(default=0.8, gt=0, lt=1)
    train: TrainSpec = TrainSpec()
    seed: int = 0


class TrainResponse(BaseModel):
    checkpoint_path: str
    epochs_run: int
    best_epoch: int
    best_val_loss: Optional[float]
    stopped_early: bool
    dataset_hash: str


SplitName = Literal["validation", "train", "all"]


class ReconstructRequest(BaseModel):
    checkpoint_path: str
    dataset_path: str
    predictions_path: str
    split: SplitName = "validation"
    train_fraction: float = Field(default=0.8, gt=0, lt=1)


class ReconstructResponse(BaseModel):
    predictions_path: str
    n_states: int


class EvaluateRequest(BaseModel):
    predictions_path: str
    dataset_path: str
    split: SplitName = "validation"
    train_fraction: float = Field(default=0.8, gt=0, lt=1)


class ComponentMetric(BaseModel):
    component: Literal["R", "Z"]
    rel_mae: float


class EvaluateResponse(BaseModel):
    metrics: list[ComponentMetric]
    n_states: int


class TrialRequest(BaseModel):
    flow: FlowSpec = FlowSpec()
    grid: GridSpec = GridSpec()
    scale: float = Field(default=1.0, gt=0)
    n_samples: int = Field(default=10000, ge=2)
    train_fraction: float = Field(default=0.8, gt=0, lt=1)
    train: TrainSpec = TrainSpec()
    seed: int = 0
    trials_csv_path: Optional[str] = None


class TrialResponse(BaseModel):
    metrics: list[ComponentMetric]
    seed: int
    runtime_seconds: float
    trials_csv_path: Optional[str]


class SweepRequest(BaseModel):
    flow: FlowSpec = FlowSpec()
    grid: GridSpec = GridSpec()
    s_values: list[float] = Field(default_factory=lambda: [float(s) for s in range(1, 13)])
    n_samples: int = Field(default=10000, ge=2)
    train_fraction: float = Field(default=0.8, gt=0, lt=1)
    train: TrainSpec = TrainSpec()
    base_seed: int = 0
    target_rel_se: float = Field(default=0.06, gt=0)
    max_trials: int = Field(default=80, ge=2)
    require_both: bool = True
    results_csv_path: Optional[str] = None


class SweepRow(BaseModel):
    s: float
    component: Literal["R", "Z"]
    n_trials: int
    mean_rel_mae: float
    std: float
    se: float
    rel_se: float
    converged: bool


class SweepResponse(BaseModel):
    flow_kind: str
    nu: float
    rows: list[SweepRow]
    failures: list[tuple[float, str]]
    results_csv_path: Optional[str]


class OracleCheckRequest(BaseModel):
    names: Optional[list[str]] = None


class OracleCheckResult(BaseModel):
    name: str
    passed: bool
    measures: dict
    detail: str


class OracleCheckResponse(BaseModel):
    checks: list[OracleCheckResult]
    all_passed: bool


class MetricsPlotRequest(BaseModel):
    results_csv_path: str
    out_path: str


class TrajectoryPlotRequest(BaseModel):
    dataset_path: str
    out_path: str
    count: int = Field(default=8, ge=1)
    checkpoint_path: Optional[str] = None  # overlay reconstructed paths


class PlotResponse(BaseModel):
    out_path: str


class HealthResponse(BaseModel):
    status: str
    version: str


class ErrorBody(BaseModel):
    error: str
    detail: str
