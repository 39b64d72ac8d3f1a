from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest
import torch
from PIL import Image

sys.path.insert(0, str(Path(__file__).parent))

torch.set_num_threads(1)


@pytest.fixture
def image_dir(tmp_path):
    """Factory writing uint8 arrays as PNG files under ``tmp_path/<name>``."""

    def make(images, name="train", prefix="img"):
        d = tmp_path / name
        d.mkdir(parents=True, exist_ok=True)
        for i, img in enumerate(images):
            Image.fromarray(np.asarray(img, dtype=np.uint8)).save(d / f"{prefix}_{i:03d}.png")
        return d

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_images(rng, n, size, channels=3):
    return [rng.integers(0, 256, size=(size, size, channels), dtype=np.uint8) for _ in range(n)]


# --------------------------------------------------------------------------
# one PASS/FAIL line per acceptance criterion

_CRITERIA: dict[int, dict] = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    num, name = marker
    entry = _CRITERIA.setdefault(num, {"name": name, "outcomes": []})
    if report.when == "call" or report.outcome != "passed":
        entry["outcomes"].append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        rep.criterion = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        entry = _CRITERIA[num]
        outcomes = entry["outcomes"]
        if outcomes and all(o == "passed" for o in outcomes):
            status = "PASS"
        elif any(o == "failed" for o in outcomes):
            status = "FAIL"
        else:
            status = "SKIP"
        terminalreporter.write_line(f"criterion {num:>2} {status}  {entry['name']}")
