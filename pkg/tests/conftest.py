import numpy as np
import pytest

from cald import (
    DatasetManifest,
    SelectionConfig,
    SimDetectorModel,
    generate_world,
    parse_predictions,
)
from cald.simulator import predictions_lines


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def small_world():
    """A compact world shared by pipeline-level tests."""
    return generate_world(num_images=80, num_classes=6, imbalance_exponent=1.0, seed=11)


@pytest.fixture(scope="session")
def small_setup(small_world):
    """(world, manifest, config, parsed predictions) at mixed skill levels."""
    config = SelectionConfig(budget_per_cycle=10, cycles=1)
    manifest = small_world.manifest(config.augmentations)
    model = SimDetectorModel.from_label_counts(
        np.array([60, 30, 18, 10, 6, 3]), kappa=20.0
    )
    lines = predictions_lines(small_world, model, config.augmentations, seed=5)
    predictions = parse_predictions(lines, manifest)
    return small_world, manifest, config, predictions
