import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from attrsearch import (
    AttributeSchema,
    EmbeddingConfig,
    EmbeddingModel,
    SearchIndex,
    generate_synthetic,
)

settings.register_profile(
    "suite",
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


TINY_SCHEMA = AttributeSchema((
    ("color", ("red", "green", "blue")),
    ("size", ("small", "large")),
))


@pytest.fixture(scope="session")
def tiny_schema():
    return TINY_SCHEMA


@pytest.fixture(scope="session")
def tiny_dataset():
    return generate_synthetic(TINY_SCHEMA, n_items=80, dim=8, noise_sigma=0.1, seed=3)


def make_model(schema, dim, config=None, seed=0):
    config = config or EmbeddingConfig(e_dim=6, seed=seed)
    return EmbeddingModel.init(schema, dim, config, np.random.default_rng(seed))


@pytest.fixture(scope="session")
def tiny_model(tiny_dataset):
    return make_model(tiny_dataset.schema, tiny_dataset.dim, seed=1)


@pytest.fixture(scope="session")
def tiny_index(tiny_model, tiny_dataset):
    return SearchIndex(tiny_model, tiny_dataset)
