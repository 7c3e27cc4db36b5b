import numpy as np
import pytest

from nsp.domain import Domain, GammaWeightPrior
from nsp.models import (
    BackgroundModel,
    DocumentModel,
    DocumentModelConfig,
    GaussianModel,
    GaussianModelConfig,
    SequenceModel,
    SequenceModelConfig,
)


@pytest.fixture
def square():
    return Domain.unit_cube(2)


@pytest.fixture
def prior():
    return GammaWeightPrior(2.0, 1.0, 3.0)


@pytest.fixture
def gaussian(square):
    return GaussianModel(GaussianModelConfig(6.0, np.eye(2) * 0.01), square)


@pytest.fixture
def sequence_model():
    dom = Domain.interval(10.0)
    cfg = SequenceModelConfig.random(4, 2, np.random.default_rng(1), warp_values=[0.8, 1.0, 1.25])
    return SequenceModel(cfg, dom)


@pytest.fixture
def document_model():
    dom = Domain.interval(20.0)
    return DocumentModel(DocumentModelConfig(3, 6, 0.5, word_shape=0.5, word_rate=0.3), dom)


@pytest.fixture
def no_background():
    return BackgroundModel(0.0, fixed_rate=True)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(results, key=lambda c: int(c[1:])):
        terminalreporter.write_line(results[cid][1])
