import os

import numpy as np
import pytest

from bnpforecast.data_pipeline import load_panel
from bnpforecast.synthetic import synthetic_panel, write_panel_csv

ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS,
                           key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def panel_files(tmp_path_factory):
    """Synthetic quarterly panel written to disk once per session."""
    d = tmp_path_factory.mktemp("panel")
    panel_csv = os.path.join(d, "panel.csv")
    sidecar_csv = os.path.join(d, "sidecar.csv")
    write_panel_csv(synthetic_panel(), panel_csv, sidecar_csv)
    return panel_csv, sidecar_csv


@pytest.fixture(scope="session")
def panel(panel_files):
    return load_panel(*panel_files)


@pytest.fixture
def rng():
    return np.random.default_rng(20240814)
