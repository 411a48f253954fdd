import os
import pathlib

import pytest


@pytest.fixture(scope="session")
def source_dir():
    return pathlib.Path(os.environ.get("BAN_SOURCE_DIR", pathlib.Path(__file__).resolve().parents[2]))
