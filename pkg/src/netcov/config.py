"""Run configuration shared by the CLI and the programmatic runner."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .mcdc import VARIANTS
from .model import GRANULARITIES

CRITERIA_MODES = ("all", "no-mcdc", "mcdc")

DEFAULT_NC_THRESHOLDS = (0.0, 0.2, 0.5, 0.75)
DEFAULT_KMNC_K = (10, 1000)
DEFAULT_TKNC_K = (10, 1000)


@dataclass
class RunConfig:
    model: Path
    outputs: Path
    criteria: str = "all"
    granularity: str = "neuron"

    # test inputs: exactly one source
    test_raw: Path | None = None
    idx_images: Path | None = None
    idx_labels: Path | None = None
    # training inputs: at most one source
    train_raw: Path | None = None
    train_idx_images: Path | None = None
    train_idx_labels: Path | None = None
    train_limit: int | None = None
    test_limit: int | None = None

    nc_thresholds: tuple[float, ...] = DEFAULT_NC_THRESHOLDS
    kmnc_k: tuple[int, ...] = DEFAULT_KMNC_K
    tknc_k: tuple[int, ...] = DEFAULT_TKNC_K
    mcdc_variants: tuple[str, ...] = VARIANTS
    vc_ratio: float = 0.1
    pair_budget: int | None = None

    seed: int = 0
    stride: int | None = None  # None picks about 50 checkpoints
    jobs: int = 1
    sequential: bool = False
    allow_missing_profile: bool = False

    save_profile: Path | None = None
    load_profile: Path | None = None

    compare_baseline: Path | None = None
    compare_datasets: tuple[Path, ...] = ()

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None and f.type.startswith("Path"):
                setattr(self, f.name, Path(value))
        self.nc_thresholds = tuple(float(t) for t in self.nc_thresholds)
        self.kmnc_k = tuple(int(k) for k in self.kmnc_k)
        self.tknc_k = tuple(int(k) for k in self.tknc_k)
        self.mcdc_variants = tuple(str(v).lower() for v in self.mcdc_variants)
        self.compare_datasets = tuple(Path(p) for p in self.compare_datasets)

    def validate(self) -> None:
        if self.criteria not in CRITERIA_MODES:
            raise ConfigError(f"--criteria must be one of {CRITERIA_MODES}, got {self.criteria!r}")
        if self.granularity not in GRANULARITIES:
            raise ConfigError(
                f"--granularity must be one of {GRANULARITIES}, got {self.granularity!r}"
            )
        test_sources = [s for s in (self.test_raw, self.idx_images) if s is not None]
        if len(test_sources) != 1:
            raise ConfigError(
                "exactly one test input source is required: --input-tests or --idx-images"
            )
        if self.idx_labels is not None and self.idx_images is None:
            raise ConfigError("--idx-labels needs --idx-images")
        train_sources = [s for s in (self.train_raw, self.train_idx_images) if s is not None]
        if len(train_sources) > 1:
            raise ConfigError("pick one training source: --input-train or --train-idx-images")
        if self.train_idx_labels is not None and self.train_idx_images is None:
            raise ConfigError("--train-idx-labels needs --train-idx-images")
        for name, limit in (("--train", self.train_limit), ("--test", self.test_limit)):
            if limit is not None and limit < 1:
                raise ConfigError(f"{name} limit must be >= 1, got {limit}")
        for t in self.nc_thresholds:
            if not 0.0 <= t < 1.0:
                raise ConfigError(f"NC thresholds must lie in [0, 1), got {t}")
        for name, ks in (("--kmnc-k", self.kmnc_k), ("--tknc-k", self.tknc_k)):
            if any(k < 1 for k in ks):
                raise ConfigError(f"{name} values must be >= 1, got {list(ks)}")
        if len(set(self.nc_thresholds)) != len(self.nc_thresholds) \
                or len(set(self.kmnc_k)) != len(self.kmnc_k) \
                or len(set(self.tknc_k)) != len(self.tknc_k):
            raise ConfigError("criterion parameter lists must not repeat values")
        for v in self.mcdc_variants:
            if v not in VARIANTS:
                raise ConfigError(f"unknown MC/DC variant {v!r}; pick from {VARIANTS}")
        if not self.mcdc_variants and self.criteria in ("all", "mcdc"):
            raise ConfigError("MC/DC requested but no variants configured")
        if self.vc_ratio <= 0:
            raise ConfigError(f"--vc-ratio must be > 0, got {self.vc_ratio}")
        if self.pair_budget is not None and self.pair_budget < 1:
            raise ConfigError(f"--pair-budget must be >= 1, got {self.pair_budget}")
        if self.stride is not None and self.stride < 1:
            raise ConfigError(f"--stride must be >= 1, got {self.stride}")
        if self.jobs < 1:
            raise ConfigError(f"--jobs must be >= 1, got {self.jobs}")
        if self.compare_datasets and self.compare_baseline is None:
            raise ConfigError("--compare needs --compare-baseline")
        if self.compare_baseline is not None and not self.compare_datasets:
            raise ConfigError("--compare-baseline needs at least one --compare dataset")

    @property
    def wants_neuron_criteria(self) -> bool:
        return self.criteria in ("all", "no-mcdc")

    @property
    def wants_mcdc(self) -> bool:
        return self.criteria in ("all", "mcdc")

    def echo(self) -> dict:
        """Configuration as written into report.json."""
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Path):
                value = str(value)
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out
