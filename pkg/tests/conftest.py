import numpy as np
import pytest

from shadowlab.anosov import ToralAutomorphism, toral_system, torus_identity_system
from shadowlab.constructions import build_universal_stage, make_identity_system, make_n_star, make_square_map
from shadowlab.dendrite import complex_of


@pytest.fixture
def rng():
    """Provides a seeded numpy generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def square_system():
    """Provides h(x) = x² on [0, 1]."""
    return make_square_map()


@pytest.fixture
def identity_system():
    """Provides the identity on [0, 1], the non-shadowing control."""
    return make_identity_system()


@pytest.fixture
def three_star():
    """Provides the 3-star with x² on every unit arm."""
    return make_n_star(3)


@pytest.fixture
def three_star_complex(three_star):
    """Provides the complex of the 3-star."""
    return complex_of(three_star.space)


@pytest.fixture
def cat_map():
    """Provides the cat map [[2, 1], [1, 1]]."""
    return ToralAutomorphism()


@pytest.fixture
def cat_system():
    """Provides the cat map as a dynamical system on the torus."""
    return toral_system()


@pytest.fixture
def torus_identity():
    """Provides the identity on the torus."""
    return torus_identity_system()


@pytest.fixture
def output_dir(tmp_path, monkeypatch):
    """Points the artifact directory and run ledger at a temporary path."""
    monkeypatch.setenv("SHADOWLAB_OUTPUT_DIR", str(tmp_path / "out"))
    monkeypatch.setenv("SHADOWLAB_DATABASE_URL", f"sqlite:///{tmp_path / 'runs.db'}")
    monkeypatch.chdir(tmp_path)
    return tmp_path / "out"


@pytest.fixture
def stage_comb():
    """Provides stage X₁ of the order-3 universal dendrite with eight teeth."""
    return build_universal_stage(3, 1, 8, seed=0)[1]
