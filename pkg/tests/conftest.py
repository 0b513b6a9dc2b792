"""
Test configuration and pytest setup for coopfusion.

Provides deterministic random generators, detection factories and
temporary directories shared by the test modules.
"""

import logging
import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from coopfusion.core.model import BBox3D, Category, Detection, DiagCovariance7

# Configure logging for tests
logging.basicConfig(
    level=logging.WARNING,  # Reduce noise during testing
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logging.getLogger('coopfusion').setLevel(logging.WARNING)


def make_detection(
    x=0.0, y=0.0, z=0.0, l=4.5, w=1.9, h=1.7, theta=0.0,
    var_pos=0.25, var_size=0.01, var_yaw=math.radians(5.0) ** 2,
    category=Category.CAR, agent_id=1, timestamp=0.0, confidence=0.9, gt_id=None,
):
    """Detection with per-group variances."""
    return Detection(
        box=BBox3D(x, y, z, l, w, h, theta),
        cov=DiagCovariance7(var_pos, var_pos, var_pos, var_size, var_size, var_size, var_yaw),
        category=category,
        agent_id=agent_id,
        timestamp=timestamp,
        confidence=confidence,
        gt_id=gt_id,
    )


@pytest.fixture
def rng():
    """Deterministic random generator."""
    return np.random.default_rng(12345)


@pytest.fixture
def detection_factory():
    """Factory for detections with keyword overrides."""
    return make_detection


@pytest.fixture
def unit_box():
    """Unit cube at the origin."""
    return BBox3D(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0)


@pytest.fixture
def temp_out_dir(tmp_path):
    """Temporary directory for result files during testing."""
    out_dir = tmp_path / "results"
    out_dir.mkdir()
    return out_dir


@pytest.fixture
def temp_log_dir(tmp_path):
    """Temporary directory for log files during testing."""
    log_dir = tmp_path / "logs"
    log_dir.mkdir()
    return log_dir


def random_box(rng, spread=5.0):
    """Random yaw-only box with sizes in [0.5, 5]."""
    return BBox3D(
        rng.uniform(-spread, spread), rng.uniform(-spread, spread), rng.uniform(-1.0, 1.0),
        rng.uniform(0.5, 5.0), rng.uniform(0.5, 5.0), rng.uniform(0.5, 3.0),
        rng.uniform(-math.pi, math.pi),
    )


def pytest_configure(config):
    """Configure pytest with custom markers."""
    config.addinivalue_line(
        "markers", "unit: mark test as a unit test"
    )
    config.addinivalue_line(
        "markers", "integration: mark test as an integration test"
    )
    config.addinivalue_line(
        "markers", "slow: mark test as slow running"
    )


def pytest_collection_modifyitems(config, items):
    """Modify test collection to add markers based on test names."""
    for item in items:
        # Add markers based on test file names
        if "test_integration" in item.fspath.basename:
            item.add_marker(pytest.mark.integration)
        else:
            item.add_marker(pytest.mark.unit)

        # Add markers based on test names
        if "slow" in item.name.lower():
            item.add_marker(pytest.mark.slow)
