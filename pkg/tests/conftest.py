"""Shared fixtures: the default benchmark is built once per session."""

import pytest

from coclick.pipeline import benchmark_config, run_pipeline
from coclick.synth import generate_corpus


@pytest.fixture(scope="session")
def benchmark_result(tmp_path_factory):
    """Full pipeline run on the default benchmark (seed 42)."""
    workdir = tmp_path_factory.mktemp("benchmark")
    return run_pipeline(workdir, benchmark_config(42))


@pytest.fixture(scope="session")
def benchmark_corpus():
    """The benchmark's generated corpus (deterministic, regenerated cheaply)."""
    return generate_corpus(benchmark_config(42).synth)
