import importlib

import numpy as np
import pytest

from sensor_triage import _fallback

acquire = importlib.import_module("sensor_triage.acquire")

try:
    from sensor_triage import _kernels
except ImportError:
    _kernels = None

BACKENDS = ["python"] + (["compiled"] if _kernels is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run the test once per available kernel backend."""
    mod = _fallback if request.param == "python" else _kernels
    monkeypatch.setattr(acquire, "kernels", mod)
    return mod


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
