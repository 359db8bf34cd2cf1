import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from negstream.core import normalize_rows
from negstream.negatives import IdModel

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def unit_rows(gen: np.random.Generator, n: int, d: int) -> np.ndarray:
    return normalize_rows(gen.normal(size=(n, d)))


def random_model(gen: np.random.Generator, C: int, d: int) -> IdModel:
    protos = unit_rows(gen, C, d)
    # text features tilted toward their prototypes, as in aligned vision-language spaces
    text = normalize_rows(protos + 0.5 * gen.normal(size=(C, d)) / np.sqrt(d))
    return IdModel(text, protos)


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_world():
    from negstream.synthworld import WorldSpec, generate_world

    return generate_world(WorldSpec(d=16, k=16, C=3, n_ood_clusters=2, vocab_size=100, n_id=40,
                                    n_ood_per_cluster=40, n_shots=4, seed=7))
