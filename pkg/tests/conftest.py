import pytest


@pytest.fixture
def out_dir(tmp_path):
    return str(tmp_path / 'out')
