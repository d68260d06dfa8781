"""
Shared fixtures: templates, covers, a Gaussian model and simulated fields.
"""
import pytest

from conclique_gof.conclique import build_cover
from conclique_gof.lattice import SamplingWindow, named_template
from conclique_gof.models import GaussianMrfSpec, gibbs_simulate
from conclique_gof.rng import make_rng


@pytest.fixture
def four_nearest():
    return named_template("four_nearest")


@pytest.fixture
def cover4(four_nearest):
    return build_cover(four_nearest)


@pytest.fixture
def gaussian_model(four_nearest):
    return GaussianMrfSpec(alpha=0.0, eta=0.2, tau2=1.0, template=four_nearest)


@pytest.fixture
def gaussian_field(gaussian_model, cover4):
    """One 11x17 field under eta = 0.2."""
    window = SamplingWindow.full((11, 17))
    return gibbs_simulate(gaussian_model, window, cover4, make_rng(7), burn_in=100)[0]


@pytest.fixture
def grid_csv(tmp_path, gaussian_field):
    from conclique_gof.io import write_grid_csv

    path = tmp_path / "field.csv"
    write_grid_csv(path, gaussian_field)
    return path
