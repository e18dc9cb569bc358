import json
import sys
from pathlib import Path

import pytest

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE))


@pytest.fixture(scope="session")
def frozen():
    return json.loads((HERE / "data" / "frozen.json").read_text())


@pytest.fixture(scope="session")
def gd():
    from spincavity.presets import gd_cawo4

    return gd_cawo4()


@pytest.fixture
def report(capsys):
    """Print one pass/fail line past pytest's capture, then return the flag."""

    def _report(tag: str, ok: bool, detail: str) -> bool:
        with capsys.disabled():
            print(f"\n[{tag}] {'PASS' if ok else 'FAIL'}: {detail}")
        return ok

    return _report


REFERENCE_BACKGROUND = dict(f0=18520.0, kappa0=5.84, m_f=0.01)


@pytest.fixture(scope="session")
def background():
    from spincavity.cavity import CavityBackground

    return CavityBackground(**REFERENCE_BACKGROUND)


def _bracket(label):
    return (30.0, 400.0) if label.endswith("-") else (-400.0, -30.0)


@pytest.fixture(scope="session")
def reference_locations(gd, background):
    """Label -> ResonanceLocation for the six tabulated resonances on the reference background."""
    from spincavity.cavity import locate_on_background
    from spincavity.presets import PERPENDICULAR, WIDTH_FIT

    out = {}
    for label, levels, *_ in WIDTH_FIT:
        pair = (levels[0] - 1, levels[1] - 1)
        out[label] = locate_on_background(gd, PERPENDICULAR, pair, background, _bracket(label))
    return out
