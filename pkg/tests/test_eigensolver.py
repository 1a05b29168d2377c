"""Pseudospectral grids, the filtered eigensolver, and the state cache."""

import numpy as np
import pytest

from semichord import (
    GridSpec,
    box_billiard,
    discretize,
    energy_for_index,
    load_eigenpair,
    moments,
    solve,
    solve_window,
    store_eigenpair,
    suggest_domain,
)
from semichord.eigensolver import (
    CacheError,
    CacheMetadataError,
    GridTooSmallError,
)

HBAR = 1.0


def test_grid_spec_arithmetic():
    g = GridSpec((-8.0, -8.0), (8.0, 8.0), (64, 64))
    assert g.dim == 2
    assert g.step == (0.25, 0.25)
    assert g.cell_volume == pytest.approx(0.0625, abs=1e-15)
    ax = g.axis(0)
    # periodic convention: lower included, upper excluded
    assert ax[0] == -8.0 and ax[-1] == pytest.approx(7.75)
    assert len(ax) == 64
    k = g.wavenumbers()[0]
    assert k[0] == 0.0
    assert k[1] == pytest.approx(2.0 * np.pi / 16.0, abs=1e-12)
    h = g.coarsened()
    assert h.n == (32, 32) and h.step == (0.5, 0.5)
    assert np.allclose(h.axis(0), g.axis(0)[::2])


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        GridSpec((0.0, 0.0), (1.0, -1.0), (16, 16))
    with pytest.raises(ValueError):
        GridSpec((0.0, 0.0), (1.0, 1.0), (16, 2))
    with pytest.raises(ValueError):
        GridSpec((0.0,), (1.0, 1.0), (16, 16))
    with pytest.raises(ValueError):
        GridSpec((0.0, 0.0), (1.0, 1.0), (15, 16)).coarsened()


@pytest.fixture(scope="module")
def harmonic_solution(harmonic_spec, small_grid):
    op = discretize(harmonic_spec, small_grid, HBAR, target_energy=4.0)
    return solve(op, 6, seed=0)


def test_harmonic_spectrum(harmonic_solution):
    energies = [p.energy for p in harmonic_solution]
    assert np.allclose(energies, [1.0, 2.0, 2.0, 3.0, 3.0, 3.0], atol=1e-8)
    for i, pair in enumerate(harmonic_solution):
        assert pair.residual < 1e-8
        assert pair.index == i
        assert pair.state.norm() == pytest.approx(1.0, abs=1e-12)
        assert pair.label == "harmonic"


def test_degenerate_pair_ordering(harmonic_solution):
    # exactly degenerate levels come back as some orthogonal mixture of
    # the textbook states, deterministically ordered by <q1^2>; the
    # subspace trace of q1^2 (0.5 + 1.5) is basis independent
    lo = moments(harmonic_solution[1].state, (2, 0), (0, 0))
    hi = moments(harmonic_solution[2].state, (2, 0), (0, 0))
    assert lo <= hi
    assert lo + hi == pytest.approx(2.0, abs=1e-6)


def test_solve_is_deterministic(harmonic_spec, small_grid, harmonic_solution):
    op = discretize(harmonic_spec, small_grid, HBAR, target_energy=4.0)
    again = solve(op, 6, seed=0)
    for a, b in zip(harmonic_solution, again):
        assert a.energy == b.energy
        assert np.array_equal(a.state.values, b.state.values)


def test_solve_window(harmonic_spec, small_grid):
    op = discretize(harmonic_spec, small_grid, HBAR, target_energy=4.0)
    pairs = solve_window(op, (1.5, 3.5), seed=0)
    assert [p.index for p in pairs] == [1, 2, 3, 4, 5]
    assert np.allclose([p.energy for p in pairs], [2.0, 2.0, 3.0, 3.0, 3.0], atol=1e-8)


def test_cache_roundtrip(tmp_path, harmonic_solution):
    pair = harmonic_solution[3]
    path = tmp_path / "pair.state"
    store_eigenpair(path, pair)
    back = load_eigenpair(path, expect_hbar=HBAR, expect_label="harmonic")
    assert back.energy == pair.energy
    assert back.residual == pair.residual
    assert back.index == pair.index
    assert back.label == pair.label
    assert np.array_equal(back.state.values, pair.state.values)
    assert back.state.grid == pair.state.grid


def test_cache_rejects_corruption(tmp_path, harmonic_solution):
    path = tmp_path / "pair.state"
    store_eigenpair(path, harmonic_solution[0])
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(CacheError):
        load_eigenpair(path)


def test_cache_rejects_metadata_mismatch(tmp_path, harmonic_solution):
    path = tmp_path / "pair.state"
    store_eigenpair(path, harmonic_solution[0])
    with pytest.raises(CacheMetadataError):
        load_eigenpair(path, expect_hbar=0.5)
    with pytest.raises(CacheMetadataError):
        load_eigenpair(path, expect_label="somethingelse")
    junk = tmp_path / "not_a_cache.state"
    junk.write_bytes(b"plainly not the binary state format")
    with pytest.raises(CacheError):
        load_eigenpair(junk)


def test_suggest_domain_contains_turning_region(harmonic_spec):
    bounds = suggest_domain(harmonic_spec, e_target=3.0, factor=2.0)
    turn = np.sqrt(2.0 * 3.0)
    for lo, hi in bounds:
        assert lo < -turn and hi > turn


def test_energy_for_index_tracks_phase_space_volume(harmonic_spec):
    # isotropic harmonic level counting: N(E) = E^2 / 2 at hbar = 1,
    # so index k sits near sqrt(2 k)
    est = [energy_for_index(harmonic_spec, k, HBAR) for k in (10, 40, 111)]
    assert est[0] < est[1] < est[2]
    for k, e in zip((10, 40, 111), est):
        assert e == pytest.approx(np.sqrt(2.0 * k), rel=0.25)


def test_discretize_rejects_unresolved_momentum(harmonic_spec):
    tiny = GridSpec((-8.0, -8.0), (8.0, 8.0), (8, 8))
    with pytest.raises(GridTooSmallError):
        discretize(harmonic_spec, tiny, HBAR, target_energy=40.0)


def test_discretize_rejects_infinite_potential():
    grid = GridSpec((-1.0, -1.0), (2.0, 2.0), (32, 32))
    with pytest.raises(ValueError):
        discretize(box_billiard(), grid, HBAR)


def test_solve_warns_on_leaky_domain(harmonic_spec):
    cramped = GridSpec((-3.5, -3.5), (3.5, 3.5), (32, 32))
    op = discretize(harmonic_spec, cramped, HBAR, target_energy=4.0)
    with pytest.warns(RuntimeWarning):
        pairs = solve(op, 6, seed=0)
    assert pairs[0].energy == pytest.approx(1.0, abs=1e-3)
    # and the check can be disabled
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("error")
        solve(op, 6, seed=0, check_confinement=False)


def test_solve_validates_k(harmonic_spec, small_grid):
    op = discretize(harmonic_spec, small_grid, HBAR)
    with pytest.raises(ValueError):
        solve(op, 0)
