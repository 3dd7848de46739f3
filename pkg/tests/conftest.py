"""Shared fixtures: tiny images, a tiny benchmark dataset and a tiny network."""

from pathlib import Path

import numpy as np
import pytest

from src.augment.synthesis import AugmentSpec, SynthesisResult, synthesize
from src.evaluation.benchmark import (
    Benchmark,
    BenchmarkSpec,
    benchmark_augment_spec,
    generate_benchmark,
)
from src.imaging.image import LinearImage, SemanticMask
from src.models import ConvBlock, InitScheme, NetworkSpec, init_weights
from src.nn.network import Network

PROJECT_ROOT = Path(__file__).parent.parent
SMOKE_CONFIG = PROJECT_ROOT / "configs" / "smoke_experiment.json"

TINY_BENCHMARK = BenchmarkSpec(
    train_images=4, test_images=2, size=8, class_count=3, seed=5
)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_image(rng: np.random.Generator) -> LinearImage:
    return LinearImage(rng.uniform(0.05, 0.95, size=(6, 5, 3)))


@pytest.fixture
def tiny_mask() -> SemanticMask:
    labels = np.zeros((6, 5), dtype=np.int64)
    labels[:2, :] = 1
    labels[4:, 3:] = 2
    return SemanticMask(labels, 3)


@pytest.fixture
def tiny_benchmark_spec() -> BenchmarkSpec:
    return TINY_BENCHMARK


@pytest.fixture
def tiny_benchmark(tiny_benchmark_spec: BenchmarkSpec) -> Benchmark:
    return generate_benchmark(tiny_benchmark_spec)


@pytest.fixture
def tiny_augment(tiny_benchmark_spec: BenchmarkSpec) -> AugmentSpec:
    return benchmark_augment_spec(
        tiny_benchmark_spec,
        AugmentSpec(samples_per_image=2, seed=3, gamma_one_fraction=0.5),
    )


@pytest.fixture
def tiny_result(
    tiny_benchmark: Benchmark, tiny_augment: AugmentSpec
) -> SynthesisResult:
    return synthesize(tiny_benchmark.sources, tiny_augment, split=tiny_benchmark.split)


@pytest.fixture
def tiny_spec() -> NetworkSpec:
    return NetworkSpec(
        input_size=8,
        input_channels=4,
        conv_stack=(ConvBlock(4, kernel=3, pad=1),),
        head=(8, 8, 8),
        init_scheme=InitScheme.HE,
    )


@pytest.fixture
def tiny_network(tiny_spec: NetworkSpec) -> Network:
    return init_weights(tiny_spec, np.random.default_rng(0))
