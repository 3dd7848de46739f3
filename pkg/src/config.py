"""Experiment configuration loaded from versioned JSON files."""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

from src.augment.synthesis import AugmentSpec, Split
from src.colorcast.metrics import RmseNormalization
from src.errors import ConfigError
from src.evaluation.benchmark import BenchmarkSpec
from src.imaging.volume import NormalizationMode
from src.models import NetworkSpec, SpecPair
from src.training.trainer import TrainConfig

logger = logging.getLogger(__name__)

CONFIG_VERSION = "1.0"
DEFAULT_OUTPUT_DIR = "output"

# Above these values a run is allowed but logged as unusual
MAX_RECOMMENDED_EPOCHS = 1000
MAX_RECOMMENDED_SAMPLES_PER_IMAGE = 1000


@dataclass
class DatasetConfig:
    """Where source images come from.

    Exactly one of ``sources_dir`` and ``benchmark`` is set.

    Attributes:
        sources_dir: Directory of ``<id>.png`` / ``<id>_mask.png`` pairs.
        class_count: Class count K of the masks in sources_dir.
        benchmark: Generator settings for the synthetic benchmark.
    """

    sources_dir: Path | None = None
    class_count: int | None = None
    benchmark: BenchmarkSpec | None = None


@dataclass
class EvaluationConfig:
    """Evaluation settings.

    Attributes:
        split: Split that is scored.
        max_workers: Threads used for per-sample scoring.
        rmse_per: RMSE normalization convention.
        batch_size: Network prediction batch size.
    """

    split: Split = Split.TEST
    max_workers: int = 1
    rmse_per: RmseNormalization = RmseNormalization.VALUE
    batch_size: int = 64


@dataclass
class ExperimentConfig:
    """Everything an ablation run needs.

    Attributes:
        version: Schema version.
        description: Free text.
        seed: Global seed.
        dataset: Source images.
        augment: Augmentation spec.
        network: Base architecture; the RGB and semantic arms derive from it.
        train: Training hyperparameters (its seed is replaced per paired run).
        seeds: Paired training seeds of the ablation.
        evaluation: Evaluation settings.
        output_dir: Directory for checkpoints and reports.
        source_file: File the config was loaded from.
    """

    version: str = CONFIG_VERSION
    description: str = ""
    seed: int = 0
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    augment: AugmentSpec = field(default_factory=AugmentSpec)
    network: NetworkSpec = field(default_factory=NetworkSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: list[int] = field(default_factory=lambda: [0])
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    output_dir: Path = Path(DEFAULT_OUTPUT_DIR)
    source_file: Path | None = None

    @property
    def specs(self) -> SpecPair:
        """The two ablation arms, identical except for input_channels."""
        return SpecPair(self.network)

    def train_config(self, seed: int) -> TrainConfig:
        return replace(self.train, seed=seed)

    def with_overrides(
        self,
        seed: int | None = None,
        epochs: int | None = None,
        output_dir: Path | str | None = None,
    ) -> "ExperimentConfig":
        """Apply command-line overrides.

        A new global seed reseeds synthesis, the benchmark and the paired
        training seeds (seed, seed + 1, ...).
        """
        config = self
        if seed is not None:
            dataset = config.dataset
            if dataset.benchmark is not None:
                benchmark = replace(dataset.benchmark, seed=seed)
                dataset = replace(dataset, benchmark=benchmark)
            config = replace(
                config,
                seed=seed,
                dataset=dataset,
                augment=replace(config.augment, seed=seed),
                seeds=[seed + i for i in range(len(config.seeds))],
                train=replace(config.train, seed=seed),
            )
        if epochs is not None:
            config = replace(config, train=replace(config.train, epochs=epochs))
        if output_dir is not None:
            config = replace(config, output_dir=Path(output_dir))
        return config


def _section(data: dict, name: str) -> dict:
    value = data.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"'{name}' must be an object")
    return value


def _parse_dataset(data: dict, seed: int, base_dir: Path) -> DatasetConfig:
    if "dataset" not in data:
        raise ConfigError("JSON must contain 'dataset' object")
    section = _section(data, "dataset")
    has_dir = "sources_dir" in section
    has_benchmark = "benchmark" in section
    if has_dir == has_benchmark:
        raise ConfigError(
            "dataset must set exactly one of 'sources_dir' or 'benchmark'"
        )

    if has_dir:
        class_count = section.get("class_count")
        if not isinstance(class_count, int) or class_count < 1:
            raise ConfigError(
                f"dataset.class_count must be a positive integer, got {class_count}"
            )
        sources_dir = Path(section["sources_dir"])
        if not sources_dir.is_absolute():
            sources_dir = base_dir / sources_dir
        return DatasetConfig(sources_dir=sources_dir, class_count=class_count)

    benchmark = dict(section["benchmark"])
    benchmark.setdefault("seed", seed)
    return DatasetConfig(benchmark=BenchmarkSpec.from_dict(benchmark))


def _parse_augment(data: dict, seed: int, network: NetworkSpec) -> AugmentSpec:
    section = dict(_section(data, "augment"))
    section.setdefault("seed", seed)
    if section.get("normalization_mode") == NormalizationMode.PIXEL.value:
        section.setdefault("normalization_size", network.input_size)
    spec = AugmentSpec.from_dict(section)
    if spec.samples_per_image > MAX_RECOMMENDED_SAMPLES_PER_IMAGE:
        logger.warning(
            f"samples_per_image={spec.samples_per_image} is unusually high "
            f"(max recommended: {MAX_RECOMMENDED_SAMPLES_PER_IMAGE})"
        )
    return spec


def _parse_seeds(section: dict, seed: int) -> list[int]:
    seeds = section.get("seeds", [seed])
    if (
        not isinstance(seeds, list)
        or not seeds
        or not all(isinstance(s, int) for s in seeds)
    ):
        raise ConfigError(
            f"train.seeds must be a non-empty list of integers, got {seeds}"
        )
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"train.seeds must not repeat, got {seeds}")
    return seeds


def _parse_evaluation(data: dict) -> EvaluationConfig:
    section = _section(data, "evaluation")
    max_workers = section.get("max_workers", 1)
    if not isinstance(max_workers, int) or max_workers < 1:
        raise ConfigError(
            f"evaluation.max_workers must be a positive integer, got {max_workers}"
        )
    try:
        return EvaluationConfig(
            split=Split(section.get("split", Split.TEST.value)),
            max_workers=max_workers,
            rmse_per=RmseNormalization(section.get("rmse_per", "value")),
            batch_size=int(section.get("batch_size", 64)),
        )
    except ValueError as e:
        raise ConfigError(f"invalid evaluation section: {e}") from e


def parse_experiment_config(
    data: dict, base_dir: Path | None = None
) -> ExperimentConfig:
    """Build an ExperimentConfig from parsed JSON.

    Args:
        data: Parsed JSON object.
        base_dir: Directory that relative paths are resolved against.

    Raises:
        ConfigError: If the structure or a value is invalid.
    """
    base_dir = base_dir or Path.cwd()
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if "version" not in data:
        raise ConfigError("JSON must contain 'version' field")
    if data["version"] != CONFIG_VERSION:
        raise ConfigError(
            f"unsupported config version {data['version']!r} "
            f"(expected {CONFIG_VERSION})"
        )
    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError(f"seed must be an integer, got {seed!r}")

    try:
        network = NetworkSpec.from_dict(_section(data, "network"))
        train_section = dict(_section(data, "train"))
        seeds = _parse_seeds(train_section, seed)
        train_section.pop("seeds", None)
        train_section.setdefault("seed", seeds[0])
        train = TrainConfig.from_dict(train_section)
        augment = _parse_augment(data, seed, network)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"invalid config value: {e}") from e

    if train.epochs > MAX_RECOMMENDED_EPOCHS:
        logger.warning(
            f"epochs={train.epochs} is unusually high "
            f"(max recommended: {MAX_RECOMMENDED_EPOCHS})"
        )

    output_dir = Path(data.get("output_dir", DEFAULT_OUTPUT_DIR))
    return ExperimentConfig(
        version=data["version"],
        description=data.get("description", ""),
        seed=seed,
        dataset=_parse_dataset(data, seed, base_dir),
        augment=augment,
        network=network,
        train=train,
        seeds=seeds,
        evaluation=_parse_evaluation(data),
        output_dir=output_dir,
    )


def load_experiment_config(json_path: Path | str) -> ExperimentConfig:
    """Load an experiment configuration from a JSON file.

    Relative ``dataset.sources_dir`` paths are resolved against the file's
    directory; ``output_dir`` stays relative to the working directory.

    Raises:
        ConfigError: If the file cannot be read or is invalid.
    """
    json_path = Path(json_path)
    try:
        with open(json_path, encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {json_path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {json_path} is not valid JSON: {e}") from e

    config = parse_experiment_config(data, json_path.parent)
    config.source_file = json_path
    logger.info(f"Loaded experiment config from {json_path}")
    return config


def get_default_config_path() -> Path:
    """Path of configs/default_experiment.json in the project root."""
    project_root = Path(__file__).parent.parent
    return project_root / "configs" / "default_experiment.json"
