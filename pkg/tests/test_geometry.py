import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from giantsim import geometry as geo
from giantsim.errors import ConfigError
from giantsim.units import GAMMA_DEFAULT

TWO_ATOM = geo.preset_two_atom()
CHAIN = geo.preset_chain(4)
GRID = geo.preset_grid(3, 3)

# Chain zeros of Gamma_ind in [w0, 2 w0), from a 2e5-point scan of
# |sum sqrt(s) exp(2 pi i x w/w0)|^2 refined by bounded scalar minimisation
# (independent of the bracketing code under test).
CHAIN_DF_OVER_W0 = (1.087688332, 1.162311668, 1.25, 1.337688332, 1.412311668, 1.587688332, 1.662311668, 1.75,
                    1.837688332, 1.912311668)

frequencies = st.floats(min_value=0.0, max_value=3.0, allow_nan=False)


def test_phase_law():
    assert geo.accumulated_phase(0.25, 2.0, 1.0) == pytest.approx(math.pi)


def test_single_point_atom_rates_are_flat():
    atom = geo.AtomGeometry(1, {0: (geo.CouplingPoint(0.0, GAMMA_DEFAULT),)})
    lay = geo.CouplingLayout((atom,), (0,), 100.0)
    w = np.linspace(0, 300, 17)
    assert np.allclose(geo.individual_decay(lay, 1, w), GAMMA_DEFAULT)


def test_two_atom_df_frequencies_are_eighths():
    roots = geo.find_df_frequencies(TWO_ATOM, 1, (TWO_ATOM.omega0, 2 * TWO_ATOM.omega0))
    expect = [(1 + m / 8) * TWO_ATOM.omega0 for m in (1, 2, 3, 5, 6, 7)]
    assert len(roots) == 6
    assert np.max(np.abs(np.array(roots) - expect)) < 1e-9 * TWO_ATOM.omega0


def test_two_atom_exchange_at_three_eighths():
    g = geo.exchange_coupling(TWO_ATOM, 1, 2, geo.df_frequency(TWO_ATOM, 3))
    assert abs(g) / GAMMA_DEFAULT == pytest.approx(1.5 * math.sqrt(2), abs=1e-9)


def test_two_atom_no_zero_off_df():
    assert geo.find_df_frequencies(TWO_ATOM, 1, (1.06 * TWO_ATOM.omega0, 1.11 * TWO_ATOM.omega0)) == []


def test_chain_df_matches_independent_scan():
    roots = geo.find_df_frequencies(CHAIN, 1, (CHAIN.omega0, 2 * CHAIN.omega0))
    assert np.allclose(np.array(roots) / CHAIN.omega0, CHAIN_DF_OVER_W0, atol=1e-8)


def test_grid_df_frequencies():
    w0 = GRID.omega0
    roots = geo.find_df_frequencies(GRID, 5, (w0, 1.5 * w0))
    expect = [(1 + m / 20) * w0 for m in range(1, 10)]
    assert np.max(np.abs(np.array(roots) - expect)) < 1e-9 * w0


def test_chain_couplings_at_labelled_df():
    g = {m: abs(geo.exchange_coupling(CHAIN, 1, 2, geo.df_frequency(CHAIN, m))) / GAMMA_DEFAULT for m in range(1, 6)}
    assert g[2] == pytest.approx(1.786, abs=2e-3)
    assert g[5] == pytest.approx(2.044, abs=2e-3)


def test_chain_next_nearest_neighbors_decoupled():
    for m in range(1, 6):
        w = geo.df_frequency(CHAIN, m)
        for j, k in ((1, 3), (2, 4), (1, 4)):
            assert abs(geo.exchange_coupling(CHAIN, j, k, w)) < 1e-9 * GAMMA_DEFAULT


def test_grid_neighbors_of_center():
    assert geo.grid_neighbors(GRID, 5) == [2, 3, 7, 8]


def test_collective_decay_rejects_same_atom():
    with pytest.raises(ConfigError):
        geo.collective_decay(TWO_ATOM, 1, 1, 1.0)


def test_two_frequency_rate_reduces_on_resonance():
    w = 1.3 * TWO_ATOM.omega0
    assert geo.two_frequency_rate(TWO_ATOM, 1, 2, w, w, "g") == pytest.approx(float(geo.exchange_coupling(TWO_ATOM, 1, 2, w)))
    assert geo.two_frequency_rate(TWO_ATOM, 1, 2, w, w, "gamma_coll") == pytest.approx(
        float(geo.collective_decay(TWO_ATOM, 1, 2, w)))


def test_decay_point_hits_target_in_band():
    lo, hi = geo.df_frequency(CHAIN, 2), geo.df_frequency(CHAIN, 3)
    w, rate = geo.decay_point(CHAIN, 4, (lo, hi), 1.0 * GAMMA_DEFAULT)
    assert lo <= w <= hi
    assert rate == pytest.approx(GAMMA_DEFAULT, rel=1e-3)


@settings(max_examples=60, deadline=None)
@given(frequencies)
def test_individual_decay_nonnegative_and_periodic(x):
    w0 = TWO_ATOM.omega0
    a = float(geo.individual_decay(TWO_ATOM, 1, x * w0))
    b = float(geo.individual_decay(TWO_ATOM, 1, (x + 1) * w0))
    assert a >= 0
    assert a == pytest.approx(b, abs=1e-9 * GAMMA_DEFAULT)


@settings(max_examples=60, deadline=None)
@given(frequencies)
def test_collective_decay_bounded_by_individual(x):
    w = x * CHAIN.omega0
    for j, k in ((1, 2), (2, 3), (1, 3)):
        c = float(geo.collective_decay(CHAIN, j, k, w))
        bound = math.sqrt(float(geo.individual_decay(CHAIN, j, w)) * float(geo.individual_decay(CHAIN, k, w)))
        assert abs(c) <= bound + 1e-9 * GAMMA_DEFAULT
        assert c == pytest.approx(float(geo.collective_decay(CHAIN, k, j, w)), abs=1e-12 * GAMMA_DEFAULT)


@settings(max_examples=40, deadline=None)
@given(frequencies, frequencies)
def test_two_frequency_rates_symmetric(x, y):
    w0 = TWO_ATOM.omega0
    for kind in ("g", "gamma_coll"):
        a = geo.two_frequency_rate(TWO_ATOM, 1, 2, x * w0, y * w0, kind)
        b = geo.two_frequency_rate(TWO_ATOM, 2, 1, y * w0, x * w0, kind)
        assert a == pytest.approx(b, abs=1e-12 * GAMMA_DEFAULT)


def test_rate_table_shapes():
    tab = geo.rate_table(CHAIN, [geo.df_frequency(CHAIN, 2)] * 4)
    assert tab.g.shape == (4, 4)
    assert np.allclose(tab.g, tab.g.T)
    assert np.all(np.abs(tab.gamma_ind) < 1e-9 * GAMMA_DEFAULT)


def test_layout_roundtrip_and_hash(tmp_path):
    path = tmp_path / "chain.json"
    geo.save_layout(CHAIN, path)
    back = geo.load_layout(path)
    assert geo.layout_hash(back) == geo.layout_hash(CHAIN)
    w = np.linspace(0, 2 * CHAIN.omega0, 50)
    assert np.allclose(geo.exchange_coupling(back, 1, 2, w), geo.exchange_coupling(CHAIN, 1, 2, w))


def test_malformed_layout_rejected():
    with pytest.raises(ConfigError):
        geo.layout_from_dict({"omega0_GHz": 1.0, "waveguides": [0], "atoms": [{"id": 1}]})


def test_markovianity_ratio_conventions():
    assert geo.markovianity_ratio(2 * math.pi * 2e6, 130.0, 1.3e8) == pytest.approx(4 * math.pi)
    assert geo.markovianity_ratio(2e6, 130.0, 1.3e8) == pytest.approx(2.0)
    assert geo.markovianity_ratio(2e6, 0.0, 1.3e8) == 0.0
    with pytest.raises(ConfigError):
        geo.markovianity_ratio(-1.0, 1.0, 1.0)


def test_bounded_variant_search_reports_closest():
    variants = geo.search_chain_variants()
    assert variants
    best = min(variants, key=lambda v: max(v.misses()))
    assert all(math.isfinite(m) for m in best.misses())
    assert best.g_next_nearest < 1e-9
