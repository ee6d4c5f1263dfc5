"""Tests for the digital mapping and the mapped lattice."""

import numpy as np
import pytest
from scipy.stats import norm

from mf.analytic import UVDDParams, uvdd_terminal_cdf
from mf.errors import MarketDataError
from mf.mapping import MappingModel, MfLattice, invert_black, invert_uvdd
from mf.pricing import european_value


def test_invert_black():
    """Test that the Black inversion is the lognormal quantile."""
    z = np.array([-2.0, 0.0, 1.5])
    rates = invert_black(0.05, 0.2, 4.0, norm.cdf(z), norm.sf(z))
    assert rates == pytest.approx(0.05 * np.exp(-0.5 * 0.04 * 4.0 + 0.4 * z), rel=1e-12)


def test_invert_uvdd_undoes_distribution():
    """Test that mixture inversion recovers the levels behind mixture probabilities."""
    params = UVDDParams.from_omega(0.1, 3.0, 0.025, 0.75)
    levels = np.array([0.005, 0.03, 0.05, 0.08, 0.2])
    lower = uvdd_terminal_cdf(params, 0.05, 5.0, levels)
    upper = 1.0 - lower
    assert invert_uvdd(params, 0.05, 5.0, lower, upper) == pytest.approx(levels, rel=1e-8)


def test_model_bump_keeps_smile_shape():
    """Test that bumping σ¹ keeps ω, m and the weights."""
    model = MappingModel.uvdd([UVDDParams.from_omega(0.1, 3.0, 0.025, 0.75)] * 2)
    bumped = model.bumped(2, 0.01)
    assert bumped.params[1].sigma1 == pytest.approx(0.11)
    assert bumped.params[1].omega == pytest.approx(3.0)
    assert bumped.params[1].m == 0.025
    assert bumped.params[0] == model.params[0]
    assert MappingModel.black([0.2, 0.3]).bumped(1, 0.01).vols == pytest.approx([0.21, 0.3])
    assert MappingModel.from_description(model.describe()).params == model.params


LOG_LINEAR_R2 = {1: 0.999, 5: 0.999}


@pytest.mark.parametrize("case", range(1, 9))
def test_mapping_validity(case, lattices):
    """Test monotone swap rates, terminal bonds, bond reconstruction and log-linearity."""
    report = lattices[case].validity_report()
    assert report["clamp_count"] == 0
    for row in report["dates"]:
        assert row["swap_rate_increasing"], row
        assert row["numeraire_in_unit_interval"], row
        assert row["numeraire_decreasing"], row
        assert row["annuity_error"] < 1e-6, row
        assert row["bond_error"] < 1e-6, row
        assert row["log_linearity_r2"] > LOG_LINEAR_R2.get(case, 0.985), row


def test_bond_reconstruction_today(lattices, strip):
    """Test that every discount factor of the strip is reproduced from the lattice."""
    lattice = lattices[8]
    for k in range(1, 12):
        assert lattice.reconstruct_bond(k, 0) == pytest.approx(
            strip.discount_factors[k - 1], rel=1e-6)
    bonds = lattice.reconstruct_bond(9, 5)
    assert bonds.shape == (lattice.grid.size,)
    assert np.all(np.diff(bonds) < 0)
    with pytest.raises(ValueError):
        lattice.reconstruct_bond(3, 5)


def test_literal_probability_floor_clamps(strip, case_models):
    """Test that a 1e-16 floor clamps far-tail nodes and counts them."""
    lattice = MfLattice(strip, case_models[1], prob_floor=1e-16)
    assert lattice.clamp_count > 0


def test_model_length_must_match(strip):
    """Test that the mapping model needs one entry per expiry."""
    with pytest.raises(MarketDataError):
        MfLattice(strip, MappingModel.black([0.2] * 3))


def test_dump_round_trip(lattices, tmp_path):
    """Test that a saved lattice prices like the original."""
    lattice = lattices[7]
    path = tmp_path / "lattice.json"
    lattice.save(path)
    loaded = MfLattice.load(path)
    assert european_value(loaded, 6, 0.05) == pytest.approx(european_value(lattice, 6, 0.05),
                                                            rel=1e-12)
    data = lattice.to_dict()
    data["version"] = 99
    with pytest.raises(MarketDataError):
        MfLattice.from_dict(data)
