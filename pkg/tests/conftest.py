"""Shared fixtures.

The anharmonic-well eigensolves used by the heavier tests take minutes,
so they are solved once and cached on disk in the package's own state
format under .cache/semichord-tests (override with SEMICHORD_TEST_CACHE).
Deleting the cache directory forces a fresh solve; everything downstream
is derived from the cached states, so results are unchanged.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
import pytest

from semichord import (
    Eigenpair,
    GridSpec,
    discretize,
    load_eigenpair,
    nelson,
    polynomial_spec,
    solve,
    store_eigenpair,
)

HBAR = 1.0

# production well setup: domain from the confinement heuristic at twice the
# target energy (the valley exits smaller boxes through the top corners),
# resolution chosen so that grid doubling moves no eigenvalue by more than
# one part in 1e4 (checked by the acceptance suite)
WELL_LOWER = (-9.5, -7.0)
WELL_UPPER = (9.5, 45.0)
WELL_N = (144, 288)
WELL_N_DOUBLED = (288, 576)
WELL_K = 111
WELL_SEED = 0
WELL_HINT = 18.5
WELL_INDICES = (0, 39, 109, 110)


def cache_root() -> Path:
    env = os.environ.get("SEMICHORD_TEST_CACHE")
    if env:
        base = Path(env)
    else:
        base = Path(__file__).resolve().parent.parent / ".cache" / "semichord-tests"
    base.mkdir(parents=True, exist_ok=True)
    return base


def _well_grid(n: Tuple[int, int]) -> GridSpec:
    return GridSpec(WELL_LOWER, WELL_UPPER, n)


def _solve_well(n: Tuple[int, int], keep: Tuple[int, ...]) -> Dict[int, Eigenpair]:
    spec = nelson(hbar=HBAR)
    op = discretize(spec, _well_grid(n), HBAR, target_energy=WELL_HINT)
    pairs = solve(op, WELL_K, seed=WELL_SEED, energy_hint=WELL_HINT)
    tag = f"nelson_{n[0]}x{n[1]}"
    spectrum = {
        "energies": [p.energy for p in pairs],
        "residuals": [p.residual for p in pairs],
    }
    root = cache_root()
    with open(root / f"{tag}_spectrum.json", "w") as fh:
        json.dump(spectrum, fh)
    for idx in keep:
        store_eigenpair(root / f"{tag}_i{idx:04d}.state", pairs[idx])
    return {idx: pairs[idx] for idx in keep}


def _load_well(n: Tuple[int, int], keep: Tuple[int, ...]) -> Dict[int, Eigenpair]:
    root = cache_root()
    tag = f"nelson_{n[0]}x{n[1]}"
    paths = [root / f"{tag}_i{idx:04d}.state" for idx in keep]
    if all(p.exists() for p in paths) and (root / f"{tag}_spectrum.json").exists():
        return {
            idx: load_eigenpair(p, expect_hbar=HBAR, expect_label="nelson")
            for idx, p in zip(keep, paths)
        }
    return _solve_well(n, keep)


def _load_spectrum(n: Tuple[int, int]) -> Dict[str, List[float]]:
    root = cache_root()
    path = root / f"nelson_{n[0]}x{n[1]}_spectrum.json"
    if not path.exists():
        _solve_well(n, ())
    with open(path) as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def well_spec():
    return nelson(hbar=HBAR)


@pytest.fixture(scope="session")
def well_grid():
    return _well_grid(WELL_N)


@pytest.fixture(scope="session")
def well_states() -> Dict[int, Eigenpair]:
    """Selected eigenstates of the anharmonic well at the production grid."""
    return _load_well(WELL_N, WELL_INDICES)


@pytest.fixture(scope="session")
def well_spectrum() -> Dict[str, List[float]]:
    return _load_spectrum(WELL_N)


@pytest.fixture(scope="session")
def well_spectrum_doubled() -> Dict[str, List[float]]:
    """Same solve on the doubled grid; only the spectrum is kept."""
    return _load_spectrum(WELL_N_DOUBLED)


# small closed-form systems, cheap enough to build per session


@pytest.fixture(scope="session")
def harmonic_spec():
    # H = (p1^2 + p2^2)/2 + (q1^2 + q2^2)/2, unit frequency
    return polynomial_spec(
        [(0.5, (2, 0)), (0.5, (0, 2))], masses=(1.0, 1.0), label="harmonic"
    )


@pytest.fixture(scope="session")
def round_shell_spec():
    # H = p1^2 + p2^2 + q1^2 + q2^2: the energy shell is the radius-sqrt(E)
    # sphere in 4D phase space, giving closed-form shell averages
    return polynomial_spec(
        [(1.0, (2, 0)), (1.0, (0, 2))], masses=(0.5, 0.5), label="round_shell"
    )


@pytest.fixture(scope="session")
def small_grid():
    return GridSpec((-8.0, -8.0), (8.0, 8.0), (64, 64))


@pytest.fixture(scope="session")
def round_shell_sample(round_shell_spec):
    """One reusable mixed chain on the 4-sphere shell at E = 4."""
    from semichord import sample_shell

    return sample_shell(
        round_shell_spec, energy=4.0, sigma=0.2, n=8000, seed=7, thin=2000
    )
