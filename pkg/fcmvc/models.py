from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SampleId = Union[int, str]

CHECKPOINT_FORMAT_VERSION = 1


class SolverConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(1e-6, gt=0, description="Relative objective tolerance")
    max_iters: int = Field(100, ge=1, description="Cap on inner iterations per view")
    seed: int = Field(0, ge=0, description="Seed for the randomized Z1 initialization")
    init: Literal["svd", "random"] = "svd"
    scaling: Literal["sample", "none"] = Field(
        "sample", description="Rescale each view to the column scale of a row-orthonormal Z"
    )


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    k: int = Field(..., ge=1, description="Number of clusters")
    epsilon: float = Field(1e-6, gt=0)
    max_iters: int = Field(100, ge=1)
    kmeans_restarts: int = Field(50, ge=1)
    seed: int = Field(0, ge=0)
    fill: Literal["none", "zero", "average"] = "none"
    init: Literal["svd", "random"] = "svd"
    scaling: Literal["sample", "none"] = "sample"

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            epsilon=self.epsilon,
            max_iters=self.max_iters,
            seed=self.seed,
            init=self.init,
            scaling=self.scaling,
        )


class SyntheticSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int = Field(..., ge=1, description="Number of samples")
    k: int = Field(..., ge=1, description="Number of planted clusters")
    views: int = Field(..., ge=1)
    dims: List[int] = Field(..., description="Feature count per view")
    separation: float = Field(10.0, gt=0, description="Min center distance in units of sigma")
    sigma: float = Field(1.0, gt=0, description="Within-cluster standard deviation")
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_shape(self):
        if self.n < 2 * self.k:
            raise ValueError(f"n must be at least 2k (n={self.n}, k={self.k})")
        if len(self.dims) != self.views:
            raise ValueError(f"expected {self.views} dims, got {len(self.dims)}")
        if any(d < self.k for d in self.dims):
            raise ValueError(f"every view needs at least k={self.k} features, got {self.dims}")
        return self


class MetricReport(BaseModel):
    acc: float = Field(..., ge=0.0, le=1.0)
    nmi: float = Field(..., ge=0.0, le=1.0)
    purity: float = Field(..., ge=0.0, le=1.0)
    fscore: float = Field(..., ge=0.0, le=1.0)


class SolveDiagnostics(BaseModel):
    view_index: int
    objective_trace: List[float] = Field(default_factory=list)
    iters: int = 0
    converged: bool = False
    lower_bound: float = 0.0
    n_union: int = 0
    elapsed_seconds: float = 0.0


class RunDiagnostics(BaseModel):
    k: int
    method: str = "fcmvc-iv"
    views: List[SolveDiagnostics] = Field(default_factory=list)
    error: Optional[str] = None


class ExperimentRow(BaseModel):
    method: str
    ratio: float
    rep: int
    order: Optional[str] = None
    acc: float
    nmi: float
    purity: float
    fscore: float
    best_acc: Optional[float] = None
    seconds: Optional[float] = None


class MetricSummary(BaseModel):
    method: str
    ratio: float
    runs: int
    mean: MetricReport
    std: MetricReport


class ExperimentResult(BaseModel):
    rows: List[ExperimentRow]
    summary: List[MetricSummary]
    # per method: mean and std over ratios of the per-ratio means
    aggregate: dict[str, dict[str, MetricReport]] = Field(default_factory=dict)


class CheckpointDocument(BaseModel):
    format_version: int
    k: int = Field(..., ge=1)
    ids: List[SampleId]
    z_shape: List[int]
    z_b64: str = Field(..., description="Little-endian float64 bytes, row-major")
    z_sha256: str
    views_seen: int = Field(..., ge=1)
    objective_trace: List[float] = Field(default_factory=list)
    last_diag: Optional[SolveDiagnostics] = None

    @field_validator("format_version")
    @classmethod
    def _supported(cls, v):
        if v != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format_version {v}")
        return v


class MissingPattern(BaseModel):
    ratio: float = Field(..., ge=0.0, le=0.5)
    seed: int = Field(..., ge=0)
    retained: List[List[SampleId]] = Field(..., description="Kept ids per view, in view order")
    dropped: List[List[SampleId]] = Field(..., description="Removed ids per view, in view order")


class ScalePoint(BaseModel):
    n: int
    seconds_per_iter: float
    iters: int


class ScaleResult(BaseModel):
    k: int
    d: int
    points: List[ScalePoint]
    ratios: List[float] = Field(default_factory=list, description="runtime(n_i+1) / runtime(n_i)")
    slope: float = Field(..., description="Least-squares slope of log runtime against log n")
