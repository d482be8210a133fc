import os
from pathlib import Path

import numpy as np
import pytest

from spikeae.data import DATA_DIR_ENV

DEFAULT_DATA = Path("/root/data/mnist")


def data_dir():
    env = os.environ.get(DATA_DIR_ENV)
    return Path(env) if env else DEFAULT_DATA


def have_mnist():
    root = data_dir()
    return all((root / n).exists() or (root / (n + ".gz")).exists()
               for n in ("train-images-idx3-ubyte", "t10k-images-idx3-ubyte"))


@pytest.fixture
def mnist_dir(monkeypatch):
    if not have_mnist():
        pytest.skip(f"MNIST IDX files not found under {data_dir()}")
    monkeypatch.setenv(DATA_DIR_ENV, str(data_dir()))
    return data_dir()


def pytest_collection_modifyitems(config, items):
    if os.environ.get("SPIKEAE_EXTENDED") == "1":
        return
    skip = pytest.mark.skip(reason="extended run; set SPIKEAE_EXTENDED=1")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def fake_mnist(tmp_path, monkeypatch):
    from helpers import write_fake_mnist

    root = write_fake_mnist(tmp_path / "mnist")
    monkeypatch.setenv(DATA_DIR_ENV, str(root))
    return root


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        for line in ACCEPTANCE_LINES[number]:
            terminalreporter.write_line(line)
