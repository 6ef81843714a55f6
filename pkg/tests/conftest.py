import sys
from pathlib import Path

import pytest

# Project root on the path so `app` and `main` import without installation
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))


@pytest.fixture
def experiment(tmp_path):
    """Write an experiment config into tmp_path and return its path"""
    import json

    def write(document, name='experiment.json'):
        path = tmp_path / name
        path.write_text(json.dumps(document, indent=2))
        return str(path)
    return write


@pytest.fixture
def gue_section():
    return {'lattice': {'num_sites': 1}, 'orbitals': 1, 'covariance': {'profile': 'gue', 'scale': 1}}
