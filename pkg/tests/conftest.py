import numpy as np
import pytest
import torch

from adsnet.config import RunConfig
from adsnet.encoder import EncoderProfile, build_encoder
from adsnet.model import build_model

_ACCEPTANCE: dict[int, tuple[str, bool]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    marker = report.user_properties and dict(report.user_properties).get("acceptance")
    if marker:
        number, title = marker
        ok = _ACCEPTANCE.get(number, (title, True))[1] and report.passed
        _ACCEPTANCE[number] = (title, ok)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}")


@pytest.fixture(autouse=True)
def _record_acceptance(request):
    marker = request.node.get_closest_marker("acceptance")
    if marker:
        request.node.user_properties.append(("acceptance", tuple(marker.args)))
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_encoder():
    return build_encoder(EncoderProfile("toy", parameter_init_seed=0))


@pytest.fixture(scope="session")
def toy_model():
    return build_model(RunConfig(encoder_profile="toy", image_size=64)).eval()


@pytest.fixture
def toy_pyramid(toy_encoder):
    torch.manual_seed(0)
    with torch.no_grad():
        return toy_encoder(torch.rand(2, 3, 64, 64))
