import numpy as np
import pytest

from saddlemap import gallery


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def butterfly_spec():
    return gallery.butterfly().build()


@pytest.fixture(scope="session")
def mb_spec():
    return gallery.mueller_brown().build()


def landscape_from_config(raw, seed=None):
    from saddlemap.config import validate_config
    from saddlemap.landscape import Landscape

    resolved = validate_config(raw)
    spec = resolved.build_system()
    return Landscape(spec, resolved.search_config(), resolved.landscape_config(seed), resolved.values["initial_point"])


@pytest.fixture(scope="session")
def cubic_landscape():
    land = landscape_from_config(gallery.cubic(3).config)
    land.run()
    return land


_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1].split("[")[0]
    if "test_acceptance.py" not in report.nodeid or not name.startswith("test_c"):
        return
    if report.when == "call" or report.outcome != "passed":
        _ACCEPTANCE[name] = _ACCEPTANCE.get(name, True) and report.outcome == "passed"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        num, _, title = name[len("test_c"):].partition("_")
        status = "PASS" if _ACCEPTANCE[name] else "FAIL"
        terminalreporter.write_line(f"criterion {int(num):2d} {status}  {title.replace('_', ' ')}")
