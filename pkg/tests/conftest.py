import sys
import warnings
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from surfweave.config import PipelineConfig  # noqa: E402
from surfweave.mesh import validate_patch  # noqa: E402
from surfweave.shapes import hemisphere, hemisphere_midline  # noqa: E402

HEMI_R = 25.0


@pytest.fixture(scope="session")
def hemi():
    return validate_patch(hemisphere(HEMI_R, 40))


@pytest.fixture(scope="session")
def hemi_config(hemi):
    src = {"kind": "curve", "vertices": hemisphere_midline(hemi, HEMI_R)}
    return PipelineConfig(s_h=2.0, s_w=2.0, source=src)


@pytest.fixture(scope="session")
def hemi_compiled(hemi, hemi_config):
    from surfweave.pipeline import compile_patch
    return compile_patch(hemi, hemi_config)


@pytest.fixture(scope="session")
def hemi_verified(hemi, hemi_config, hemi_compiled):
    """Full pipeline on the hemisphere, timed (relaxation dominates)."""
    import time

    from surfweave.pipeline import simulate, verify
    t0 = time.perf_counter()
    graph = simulate(hemi_compiled.program, hemi_config)
    with warnings.catch_warnings():
        warnings.simplefilter("error", RuntimeWarning)
        res = verify(graph, hemi, hemi_config, stats=hemi_compiled.stats)
    return graph, res, time.perf_counter() - t0


# --- acceptance report: one PASS/FAIL line per criterion ---------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and not rep.failed and not rep.skipped):
        return
    n, title = mark.args
    ok = rep.when == "call" and rep.passed and not hasattr(rep, "wasxfail")
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    note = " (expected failure, known limitation)" if hasattr(rep, "wasxfail") else ""
    if n not in _CRITERIA or not ok:
        _CRITERIA[n] = (ok, title, detail, note)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, title, detail, note = _CRITERIA[n]
        line = f"{'PASS' if ok else 'FAIL'} criterion {n:2d}: {title}"
        if detail:
            line += f" [{detail}]"
        terminalreporter.write_line(line + note)
