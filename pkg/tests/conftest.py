import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mobiscope.config import PipelineConfig  # noqa: E402
from mobiscope.geo import subzones_from_geojson  # noqa: E402
from mobiscope.pipeline import run_pipeline  # noqa: E402
from mobiscope.synth import SynthSpec, generate  # noqa: E402


@pytest.fixture(scope="session")
def synth7():
    return generate(SynthSpec(seed=7))


@pytest.fixture(scope="session")
def pipeline7(synth7):
    sz = subzones_from_geojson(synth7.subzones_geojson)
    return run_pipeline(synth7.datasets, synth7.catalog, sz, PipelineConfig())


# --------------------------------------------------------------------------
# acceptance reporting
# --------------------------------------------------------------------------

_ACCEPTANCE: list[tuple[int, str, bool, float, float, str]] = []


class _Criterion:
    def __init__(self, number: int, title: str, limit_s: float):
        self.number = number
        self.title = title
        self.limit_s = limit_s
        self.detail = ""

    def __enter__(self):
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self._t0
        ok = exc_type is None and elapsed < self.limit_s
        if exc_type is None and not ok:
            self.detail = (self.detail + "; " if self.detail else "") + "over time limit"
        elif exc_type is not None and not self.detail:
            self.detail = f"{exc_type.__name__}: {exc}".splitlines()[0][:160]
        _ACCEPTANCE.append((self.number, self.title, ok, elapsed, self.limit_s, self.detail))
        print(_line(_ACCEPTANCE[-1]))
        if exc_type is None and not ok:
            raise AssertionError(f"criterion {self.number} took {elapsed:.2f} s, limit {self.limit_s} s")
        return False


def _line(rec) -> str:
    n, title, ok, elapsed, limit, detail = rec
    status = "PASS" if ok else "FAIL"
    return f"[{status}] criterion {n:>2}: {title} ({elapsed:.2f} s / {limit:g} s) {detail}".rstrip()


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for rec in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_line(rec))
