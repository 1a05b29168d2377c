"""Closed-form reference states sampled onto grids.

These provide exactly solvable inputs: harmonic eigenstates, minimum
uncertainty Gaussian packets, and hard-wall rectangle eigenstates. All
are returned as WavefunctionGrid / Eigenpair objects so the rest of the
toolkit treats them uniformly with numerically solved states.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .eigensolver import Eigenpair, GridSpec, WavefunctionGrid

__all__ = [
    "harmonic_eigenstate",
    "gaussian_packet",
    "box_eigenstate",
]


def _hermite_phys(n: int, x: np.ndarray) -> np.ndarray:
    """Physicists' Hermite polynomial by the three-term recurrence."""
    h_prev = np.ones_like(x)
    if n == 0:
        return h_prev
    h = 2.0 * x
    for m in range(1, n):
        h, h_prev = 2.0 * x * h - 2.0 * m * h_prev, h
    return h


def harmonic_eigenstate(
    grid: GridSpec,
    quanta: Sequence[int],
    hbar: float,
    masses: Sequence[float] = (1.0, 1.0),
    omegas: Sequence[float] = (1.0, 1.0),
) -> Eigenpair:
    """Product eigenstate of sum_j p_j^2/2m_j + m_j w_j^2 q_j^2 / 2.

    Energy is sum_j hbar w_j (n_j + 1/2); the state is real and exact up
    to grid sampling.
    """
    if len(quanta) != grid.dim:
        raise ValueError("one quantum number per axis required")
    values = np.ones(grid.n)
    energy = 0.0
    for j, (nq, m, w) in enumerate(zip(quanta, masses, omegas)):
        if nq < 0:
            raise ValueError("quanta must be non-negative")
        alpha = m * w / hbar
        x = grid.axis(j)
        u = np.sqrt(alpha) * x
        norm = (alpha / np.pi) ** 0.25 / np.sqrt(2.0**nq * float(math.factorial(nq)))
        line = norm * _hermite_phys(nq, u) * np.exp(-0.5 * u**2)
        shape = [1] * grid.dim
        shape[j] = -1
        values = values * line.reshape(shape)
        energy += hbar * w * (nq + 0.5)
    state = WavefunctionGrid(grid, values.astype(complex), hbar).normalized()
    return Eigenpair(state=state, energy=energy, index=-1, residual=0.0,
                     label="harmonic")


def gaussian_packet(
    grid: GridSpec,
    center_q: Sequence[float],
    center_p: Sequence[float],
    hbar: float,
    widths: Sequence[float] | None = None,
) -> WavefunctionGrid:
    """Minimum-uncertainty packet centered at (center_p, center_q).

    psi(q) ~ exp(-(q-Q)^2/(4 s^2) + i P.(q - Q/2)/hbar) with
    s^2 = hbar/2 per axis by default (unit-frequency ground-state width).
    The momentum phase uses q - Q/2 so translating the origin packet by
    the phase-space shift (P, Q) with the symmetric translation operator
    reproduces it exactly.
    """
    if widths is None:
        widths = [np.sqrt(hbar / 2.0)] * grid.dim
    mesh = grid.meshgrid()
    log_amp = np.zeros(grid.n)
    phase = np.zeros(grid.n)
    for j in range(grid.dim):
        dq = mesh[j] - center_q[j]
        log_amp -= dq**2 / (4.0 * widths[j] ** 2)
        phase += center_p[j] * (mesh[j] - 0.5 * center_q[j]) / hbar
    values = np.exp(log_amp + 1j * phase)
    return WavefunctionGrid(grid, values, hbar).normalized()


def box_eigenstate(
    grid: GridSpec,
    quanta: Sequence[int],
    hbar: float,
    lower: Sequence[float] = (0.0, 0.0),
    upper: Sequence[float] = (1.0, 1.0),
    masses: Sequence[float] = (0.5, 0.5),
) -> Eigenpair:
    """Hard-wall rectangle eigenstate, zero outside the box.

    psi = prod_j sqrt(2/L_j) sin(n_j pi (q_j - lo_j)/L_j) inside,
    E = sum_j (hbar pi n_j / L_j)^2 / (2 m_j). Quanta count from 1.
    """
    if any(nq < 1 for nq in quanta):
        raise ValueError("box quanta count from 1")
    mesh = grid.meshgrid()
    values = np.ones(grid.n)
    inside = np.ones(grid.n, dtype=bool)
    energy = 0.0
    for j, nq in enumerate(quanta):
        length = upper[j] - lower[j]
        u = (mesh[j] - lower[j]) / length
        inside &= (u >= 0.0) & (u <= 1.0)
        values = values * np.sqrt(2.0 / length) * np.sin(nq * np.pi * u)
        energy += (hbar * np.pi * nq / length) ** 2 / (2.0 * masses[j])
    values = np.where(inside, values, 0.0)
    state = WavefunctionGrid(grid, values.astype(complex), hbar).normalized()
    return Eigenpair(state=state, energy=energy, index=-1, residual=0.0,
                     label="box_billiard")
