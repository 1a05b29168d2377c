"""Exact phase-space transforms of grid wavefunctions.

Chord-function convention used everywhere in this package:

    chi(xi) = <psi| T_{-xi} |psi>,   chi(0) = 1,

computed as the integral over position of
exp(-i xi_p . q / hbar) psi(q + xi_q/2) psi*(q - xi_q/2). The Wigner
function is its symplectic Fourier transform normalized so the
phase-space integral of W is 1. Position displacements are handled by
trigonometric (Fourier) interpolation, which is exact for the
band-limited grid representation, so chords need not be commensurate
with the grid.

Section evaluation never materializes 4D objects: every supported
section plane factorizes into Fourier shifts plus small dense
Fourier-summation matrices applied as matrix products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import scipy.fft as sfft

from .eigensolver import GridSpec, WavefunctionGrid
from .hamiltonian import Chord, PhasePoint, symplectic_matrix

__all__ = [
    "AXIS_NAMES",
    "SectionPlane",
    "ChordSection",
    "CovarianceMatrix",
    "WignerGrid",
    "ChordReachError",
    "translate",
    "inner_product",
    "chord_exact",
    "chord_section",
    "section_evaluator",
    "wigner",
    "husimi",
    "moments",
    "covariance",
    "uncertainty_eigenvalues",
    "cos_sin_expectations",
    "resample",
]

AXIS_NAMES = ("xi_p1", "xi_p2", "xi_q1", "xi_q2")


class ChordReachError(ValueError):
    """Requested position displacement exceeds half the domain length."""


def _axis_info(name: str) -> Tuple[str, int]:
    if name not in AXIS_NAMES:
        raise ValueError(f"unknown section axis {name!r}, expected one of {AXIS_NAMES}")
    return name[3], int(name[4:]) - 1


@dataclass(frozen=True)
class SectionPlane:
    """Axis-aligned 2D plane in chord space, optionally offset from 0."""

    axes: Tuple[str, str]
    offset: Optional[Chord] = None

    def __post_init__(self):
        a, b = self.axes
        _axis_info(a)
        _axis_info(b)
        if a == b:
            raise ValueError("section axes must be distinct")

    def base(self, dim: int = 2) -> Chord:
        if self.offset is not None:
            return self.offset
        z = np.zeros(dim)
        return Chord(xi_p=z, xi_q=z)

    def chord_at(self, u: float, v: float) -> Chord:
        base = self.base()
        xi_p = base.xi_p.copy()
        xi_q = base.xi_q.copy()
        for name, t in zip(self.axes, (u, v)):
            kind, j = _axis_info(name)
            if kind == "p":
                xi_p[j] += t
            else:
                xi_q[j] += t
        return Chord(xi_p=xi_p, xi_q=xi_q)

    def contains_origin(self, tol: float = 0.0) -> bool:
        base = self.base()
        free = {self.axes[0], self.axes[1]}
        for name in AXIS_NAMES:
            kind, j = _axis_info(name)
            val = base.xi_p[j] if kind == "p" else base.xi_q[j]
            if name not in free and abs(val) > tol:
                return False
        return True


@dataclass
class ChordSection:
    """Chord-function values over a SectionPlane.

    values[a, b] = chi(plane.chord_at(u[a], v[b])).
    """

    plane: SectionPlane
    u: np.ndarray
    v: np.ndarray
    values: np.ndarray
    hbar: float
    source: str = ""

    def origin_index(self) -> Tuple[int, int]:
        return int(np.argmin(np.abs(self.u))), int(np.argmin(np.abs(self.v)))

    def value_at_origin(self) -> complex:
        ia, ib = self.origin_index()
        return complex(self.values[ia, ib])

    def max_modulus(self) -> float:
        return float(np.abs(self.values).max())

    def interp(self, uq: float, vq: float) -> complex:
        """Bilinear interpolation; used for refinement seeds, not contracts."""
        ia = np.clip(np.searchsorted(self.u, uq) - 1, 0, len(self.u) - 2)
        ib = np.clip(np.searchsorted(self.v, vq) - 1, 0, len(self.v) - 2)
        fu = (uq - self.u[ia]) / (self.u[ia + 1] - self.u[ia])
        fv = (vq - self.v[ib]) / (self.v[ib + 1] - self.v[ib])
        z = self.values
        return complex(
            z[ia, ib] * (1 - fu) * (1 - fv)
            + z[ia + 1, ib] * fu * (1 - fv)
            + z[ia, ib + 1] * (1 - fu) * fv
            + z[ia + 1, ib + 1] * fu * fv
        )


@dataclass
class CovarianceMatrix:
    """Centered symmetrized second moments on (p1, p2, q1, q2) ordering."""

    K: np.ndarray
    mean: np.ndarray

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=float)
        self.mean = np.asarray(self.mean, dtype=float)


# ---------------------------------------------------------------------------
# shifts and single-chord evaluation


def _domain_lengths(grid: GridSpec) -> np.ndarray:
    return np.asarray(grid.upper) - np.asarray(grid.lower)


def _check_reach(grid: GridSpec, xi_q: np.ndarray) -> None:
    lengths = _domain_lengths(grid)
    if np.any(np.abs(xi_q) > lengths / 2.0 + 1e-12):
        raise ChordReachError(
            f"position displacement {tuple(xi_q)} exceeds half the domain "
            f"lengths {tuple(lengths / 2.0)}"
        )


def _fourier_shift(values: np.ndarray, grid: GridSpec, shift: Sequence[float]) -> np.ndarray:
    """Samples of the trig interpolant at q - shift, i.e. psi shifted by +shift."""
    out = sfft.fftn(values)
    for j, s in enumerate(shift):
        if s == 0.0:
            continue
        k = 2.0 * np.pi * sfft.fftfreq(grid.n[j], d=grid.step[j])
        shape = [1] * values.ndim
        shape[j] = -1
        out = out * np.exp(-1j * k * s).reshape(shape)
    return sfft.ifftn(out)


def translate(state: WavefunctionGrid, xi: Chord, warn: bool = True) -> WavefunctionGrid:
    """Phase-space translation T_xi psi.

    (T_xi psi)(q) = exp[(i/hbar)(xi_p . q - xi_p . xi_q / 2)] psi(q - xi_q).
    """
    grid = state.grid
    _check_reach(grid, xi.xi_q)
    shifted = _fourier_shift(state.values, grid, xi.xi_q)
    phase = np.zeros(grid.n)
    mesh = grid.meshgrid()
    for j in range(grid.dim):
        phase = phase + xi.xi_p[j] * mesh[j]
    phase = (phase - 0.5 * float(np.dot(xi.xi_p, xi.xi_q))) / state.hbar
    out = WavefunctionGrid(grid, shifted * np.exp(1j * phase), state.hbar)
    if warn and not out.is_confined():
        import warnings

        warnings.warn(
            "translation pushed support into the boundary zone "
            f"(edge ratio {out.boundary_amplitude_ratio():.2e})",
            RuntimeWarning,
        )
    return out


def inner_product(bra: WavefunctionGrid, ket: WavefunctionGrid) -> complex:
    if bra.grid != ket.grid:
        raise ValueError("states live on different grids")
    return complex(np.vdot(bra.values, ket.values) * bra.grid.cell_volume)


def chord_exact(state: WavefunctionGrid, xi: Chord) -> complex:
    """chi(xi) = <psi|T_{-xi}|psi>, normalized so chi(0) = 1."""
    grid = state.grid
    _check_reach(grid, xi.xi_q)
    plus = _fourier_shift(state.values, grid, -0.5 * xi.xi_q)
    minus = _fourier_shift(state.values, grid, 0.5 * xi.xi_q)
    integrand = plus * np.conj(minus)
    if np.any(xi.xi_p):
        mesh = grid.meshgrid()
        phase = np.zeros(grid.n)
        for j in range(grid.dim):
            phase = phase + xi.xi_p[j] * mesh[j]
        integrand = integrand * np.exp(-1j * phase / state.hbar)
    return complex(integrand.sum() * grid.cell_volume)


def section_evaluator(state: WavefunctionGrid, plane: SectionPlane) -> Callable[[float, float], complex]:
    """Pointwise re-evaluator of the exact chord function on a plane."""

    def evaluate(u: float, v: float) -> complex:
        return chord_exact(state, plane.chord_at(u, v))

    return evaluate


# ---------------------------------------------------------------------------
# dense sections


def _fourier_sum_matrix(targets: np.ndarray, nodes: np.ndarray, sign: float) -> np.ndarray:
    """E[a, m] = exp(sign * i * targets[a] * nodes[m])."""
    return np.exp(sign * 1j * np.outer(targets, nodes))


def _section_axes(half_widths, resolution) -> Tuple[np.ndarray, np.ndarray]:
    if np.isscalar(half_widths):
        half_widths = (float(half_widths), float(half_widths))
    if np.isscalar(resolution):
        resolution = (int(resolution), int(resolution))
    if any(r < 32 for r in resolution):
        raise ValueError("section resolution must be at least 32 per axis")
    u = np.linspace(-half_widths[0], half_widths[0], resolution[0])
    v = np.linspace(-half_widths[1], half_widths[1], resolution[1])
    return u, v


def chord_section(
    state: WavefunctionGrid,
    plane: SectionPlane,
    half_widths,
    resolution,
    source: str = "",
) -> ChordSection:
    """Dense chord-function evaluation over an axis-aligned plane.

    The plane coordinates are symmetric about the plane offset; odd
    resolutions place a node exactly at the offset (and so at xi = 0 for
    planes through the origin).
    """
    grid = state.grid
    hbar = state.hbar
    u, v = _section_axes(half_widths, resolution)
    base = plane.base()
    kinds = [_axis_info(name) for name in plane.axes]

    # worst-case reach check over the section corners
    reach = np.abs(base.xi_q).astype(float)
    for (kind, j), hw in zip(kinds, (abs(u).max(), abs(v).max())):
        if kind == "q":
            reach[j] += hw
    _check_reach(grid, reach)

    mesh = grid.meshgrid()
    cell = grid.cell_volume

    if kinds[0][0] == "p" and kinds[1][0] == "p":
        # fixed xi_q, both section axes conjugate to positions
        plus = _fourier_shift(state.values, grid, -0.5 * base.xi_q)
        minus = _fourier_shift(state.values, grid, 0.5 * base.xi_q)
        phi = plus * np.conj(minus)
        j0, j1 = kinds[0][1], kinds[1][1]
        for j in range(grid.dim):  # leftover fixed momentum components
            if j not in (j0, j1) and base.xi_p[j] != 0.0:
                phi = phi * np.exp(-1j * base.xi_p[j] * mesh[j] / hbar)
        e0 = _fourier_sum_matrix((u + base.xi_p[j0]) / hbar, grid.axis(j0), -1.0)
        e1 = _fourier_sum_matrix((v + base.xi_p[j1]) / hbar, grid.axis(j1), -1.0)
        if j0 == 0:
            vals = e0 @ phi @ e1.T
        else:
            vals = e0 @ phi.T @ e1.T
        return ChordSection(plane, u, v, vals * cell, hbar, source)

    if kinds[0][0] == "q" and kinds[1][0] == "q":
        # fixed xi_p: cross spectrum of psi twisted by +-xi_p/2
        half_phase = np.zeros(grid.n)
        for j in range(grid.dim):
            if base.xi_p[j] != 0.0:
                half_phase = half_phase + 0.5 * base.xi_p[j] * mesh[j] / hbar
        f = state.values * np.exp(-1j * half_phase)
        g = state.values * np.exp(1j * half_phase)
        fh = sfft.fftn(f)
        gh = sfft.fftn(g)
        rho = fh * np.conj(gh) * (cell / f.size)
        ks = [2.0 * np.pi * sfft.fftfreq(grid.n[j], d=grid.step[j]) for j in range(grid.dim)]
        j0, j1 = kinds[0][1], kinds[1][1]
        for j in range(grid.dim):  # leftover fixed position components
            if j not in (j0, j1) and base.xi_q[j] != 0.0:
                shape = [1] * grid.dim
                shape[j] = -1
                rho = rho * np.exp(1j * ks[j] * base.xi_q[j]).reshape(shape)
        e0 = _fourier_sum_matrix(u + base.xi_q[j0], ks[j0], 1.0)
        e1 = _fourier_sum_matrix(v + base.xi_q[j1], ks[j1], 1.0)
        if j0 == 0:
            vals = e0 @ rho @ e1.T
        else:
            vals = e0 @ rho.T @ e1.T
        return ChordSection(plane, u, v, vals, hbar, source)

    # mixed plane: iterate over the position-type axis, Fourier-sum the other
    if kinds[0][0] == "q":
        q_axis_vals, p_axis_vals = u, v
        q_j, p_j = kinds[0][1], kinds[1][1]
        transpose = False
    else:
        q_axis_vals, p_axis_vals = v, u
        q_j, p_j = kinds[1][1], kinds[0][1]
        transpose = True

    fixed_phase = np.zeros(grid.n)
    for j in range(grid.dim):
        if j != p_j and base.xi_p[j] != 0.0:
            fixed_phase = fixed_phase + base.xi_p[j] * mesh[j] / hbar
    phase_fixed = np.exp(-1j * fixed_phase) if np.any(fixed_phase) else None

    ep = _fourier_sum_matrix((p_axis_vals + base.xi_p[p_j]) / hbar, grid.axis(p_j), -1.0)
    other = 1 - p_j  # the position axis summed out before the Fourier sum
    rows = np.empty((len(q_axis_vals), len(p_axis_vals)), dtype=complex)
    for a, t in enumerate(q_axis_vals):
        xi_q = base.xi_q.copy()
        xi_q[q_j] += t
        plus = _fourier_shift(state.values, grid, -0.5 * xi_q)
        minus = _fourier_shift(state.values, grid, 0.5 * xi_q)
        phi = plus * np.conj(minus)
        if phase_fixed is not None:
            phi = phi * phase_fixed
        profile = phi.sum(axis=other) * cell
        rows[a] = ep @ profile
    vals = rows.T.copy() if transpose else rows
    return ChordSection(plane, u, v, vals, hbar, source)


# ---------------------------------------------------------------------------
# Wigner function


@dataclass
class WignerGrid:
    """W on the tensor lattice (p1, p2, q1, q2), axes ascending.

    The momentum lattice is the exact Fourier dual of the doubled
    position steps, so lattice sums reproduce the continuum marginal and
    normalization identities for band-limited states.
    """

    values: np.ndarray
    p_axes: Tuple[np.ndarray, np.ndarray]
    q_axes: Tuple[np.ndarray, np.ndarray]
    hbar: float

    @property
    def cell_volume(self) -> float:
        dp = [float(a[1] - a[0]) for a in self.p_axes]
        dq = [float(a[1] - a[0]) for a in self.q_axes]
        return float(np.prod(dp + dq))

    def normalization(self) -> float:
        return float(self.values.sum() * self.cell_volume)

    def position_marginal(self) -> np.ndarray:
        dp = [float(a[1] - a[0]) for a in self.p_axes]
        return self.values.sum(axis=(0, 1)) * float(np.prod(dp))

    def _lattice_steps(self, xi: Chord) -> Tuple[int, int, int, int]:
        steps = []
        for k, (val, axis) in enumerate(zip(
            (xi.xi_p[0], xi.xi_p[1], xi.xi_q[0], xi.xi_q[1]),
            (*self.p_axes, *self.q_axes),
        )):
            d = float(axis[1] - axis[0])
            s = val / d
            if abs(s - round(s)) > 1e-8:
                raise ValueError(
                    "chord is not on the Wigner lattice; overlap shifts "
                    "require lattice-commensurate chords"
                )
            s = int(round(s))
            # the momentum lattice is twice as dense as the reciprocal
            # lattice of the periodic domain; only even p-steps carry
            # L-periodic content, odd ones correlate to exactly zero
            if k < 2 and s % 2 != 0:
                raise ValueError(
                    "momentum displacement must be an even multiple of the "
                    "momentum lattice step"
                )
            steps.append(s)
        return tuple(steps)

    def translate_overlap(self, xi: Chord) -> float:
        """(2 pi hbar)^D integral of W(x + xi) W(x) over the lattice.

        The separation lattice behind this grid covers two periods of the
        domain, so the raw autocorrelation sum counts every physical
        configuration twice per axis; the 2^D division restores the
        continuum normalization.
        """
        steps = self._lattice_steps(xi)
        shifted = np.roll(self.values, shift=tuple(-s for s in steps), axis=(0, 1, 2, 3))
        d = len(self.q_axes)
        raw = (shifted * self.values).sum() * self.cell_volume
        return float(raw * (2.0 * np.pi * self.hbar) ** d / 2.0**d)


def wigner(state: WavefunctionGrid, slab: int = 8) -> WignerGrid:
    """Wigner transform on the natural exact lattice of the state's grid.

    Separation-vector values are even multiples of the grid step (integer
    index rolls), making every half-point sample exact; the conjugate
    momentum lattice then spans |p| <= pi hbar / (2 step). The full 4D
    array is produced; callers control cost by the resolution of the
    state they pass in.
    """
    grid = state.grid
    if grid.dim != 2:
        raise ValueError("wigner is implemented for 2D states")
    n1, n2 = grid.n
    psi = state.values
    a_cube = np.empty((n1, n2, n1, n2), dtype=complex)
    for m1 in range(n1):
        left = np.roll(psi, -m1, axis=0)
        right = np.roll(psi, m1, axis=0)
        for m2 in range(n2):
            a_cube[m1, m2] = np.roll(left, -m2, axis=1) * np.conj(np.roll(right, m2, axis=1))
    d = grid.dim
    scale = np.prod([2.0 * s for s in grid.step]) / (2.0 * np.pi * state.hbar) ** d
    out = np.empty((n1, n2, n1, n2), dtype=float)
    for start in range(0, n1, slab):
        sl = slice(start, min(start + slab, n1))
        block = sfft.fftn(a_cube[:, :, sl, :], axes=(0, 1))
        out[:, :, sl, :] = block.real * scale
    del a_cube
    out = np.fft.fftshift(out, axes=(0, 1))
    p_axes = tuple(
        np.fft.fftshift(2.0 * np.pi * state.hbar * sfft.fftfreq(grid.n[j], d=2.0 * grid.step[j]))
        for j in range(2)
    )
    return WignerGrid(out, p_axes, tuple(grid.axes()), state.hbar)


# ---------------------------------------------------------------------------
# Husimi function


def husimi(state: WavefunctionGrid, point: PhasePoint) -> float:
    """|<coherent state at X | psi>|^2 / (pi hbar)^D, width sqrt(hbar/2)."""
    grid = state.grid
    hbar = state.hbar
    mesh = grid.meshgrid()
    log_amp = np.zeros(grid.n)
    phase = np.zeros(grid.n)
    for j in range(grid.dim):
        dq = mesh[j] - point.q[j]
        log_amp -= dq**2 / (2.0 * hbar)
        phase += point.p[j] * (mesh[j] - 0.5 * point.q[j]) / hbar
    coh = (np.pi * hbar) ** (-grid.dim / 4.0) * np.exp(log_amp + 1j * phase)
    ov = np.vdot(coh, state.values) * grid.cell_volume
    return float(abs(ov) ** 2 / (np.pi * hbar) ** grid.dim)


# ---------------------------------------------------------------------------
# moments, covariance


def _apply_axis_weyl(
    values: np.ndarray, grid: GridSpec, axis: int, n_q: int, k_p: int, hbar: float
) -> np.ndarray:
    """Weyl-symmetrized M(q^n p^k) along one axis, totally symmetric form
    2^-n sum_r C(n,r) q^r p^k q^(n-r) applied to the state."""
    if n_q == 0 and k_p == 0:
        return values
    shape = [1] * values.ndim
    shape[axis] = -1
    q = grid.axis(axis).reshape(shape)
    kappa = (2.0 * np.pi * sfft.fftfreq(grid.n[axis], d=grid.step[axis])).reshape(shape)
    mult = (hbar * kappa) ** k_p if k_p else None
    acc = np.zeros_like(values, dtype=complex)
    for r in range(n_q + 1):
        w = math.comb(n_q, r) / 2.0**n_q
        tmp = values * q ** (n_q - r) if n_q - r else values
        if mult is not None:
            tmp = sfft.ifft(sfft.fft(tmp, axis=axis) * mult, axis=axis)
        if r:
            tmp = tmp * q**r
        acc += w * tmp
    return acc


def moments(state: WavefunctionGrid, q_powers: Sequence[int], p_powers: Sequence[int]) -> float:
    """Weyl-symmetrized moment <M(q1^a1 q2^a2 p1^b1 p2^b2)>.

    Position factors act pointwise and momentum factors through the FFT;
    the symmetrization factorizes over the two commuting axes. Total
    order above 4 is refused (grid noise dominates there).
    """
    grid = state.grid
    q_powers = tuple(int(x) for x in q_powers)
    p_powers = tuple(int(x) for x in p_powers)
    if len(q_powers) != grid.dim or len(p_powers) != grid.dim:
        raise ValueError("need one power per axis for q and p")
    if any(x < 0 for x in q_powers + p_powers):
        raise ValueError("powers must be non-negative")
    if sum(q_powers) + sum(p_powers) > 4:
        raise ValueError("moments above total order 4 are refused")
    phi = state.values
    for axis in range(grid.dim):
        phi = _apply_axis_weyl(phi, grid, axis, q_powers[axis], p_powers[axis], state.hbar)
    val = complex(np.vdot(state.values, phi) * grid.cell_volume)
    return float(val.real)


def covariance(state: WavefunctionGrid) -> CovarianceMatrix:
    """Mean vector and centered covariance on (p1, p2, q1, q2) ordering."""
    d = state.grid.dim
    mean = np.empty(2 * d)
    for j in range(d):
        pp = [0] * d
        pp[j] = 1
        mean[j] = moments(state, (0,) * d, pp)
        qq = [0] * d
        qq[j] = 1
        mean[d + j] = moments(state, qq, (0,) * d)

    def second(a: int, b: int) -> float:
        qpow = [0] * d
        ppow = [0] * d
        for idx in (a, b):
            if idx < d:
                ppow[idx] += 1
            else:
                qpow[idx - d] += 1
        return moments(state, qpow, ppow)

    k = np.empty((2 * d, 2 * d))
    for a in range(2 * d):
        for b in range(a, 2 * d):
            k[a, b] = k[b, a] = second(a, b) - mean[a] * mean[b]
    return CovarianceMatrix(K=k, mean=mean)


def uncertainty_eigenvalues(cov: CovarianceMatrix, hbar: float) -> np.ndarray:
    """Eigenvalues of K + (i hbar / 2) J; all >= 0 for physical states."""
    d = cov.K.shape[0] // 2
    j = symplectic_matrix(d)
    herm = cov.K.astype(complex) + 0.5j * hbar * j
    return np.linalg.eigvalsh(herm)


def cos_sin_expectations(state: WavefunctionGrid, xi: Chord) -> Tuple[float, float]:
    """(Re chi, Im chi) from the Hermitian half-sum/half-difference of the
    two opposite translations, evaluated as literal operator averages."""
    minus = translate(state, Chord(-xi.xi_p, -xi.xi_q), warn=False)
    plus = translate(state, xi, warn=False)
    z_minus = inner_product(state, minus)  # chi(xi)
    z_plus = inner_product(state, plus)  # chi(-xi)
    c = 0.5 * (z_minus + z_plus)
    s = (z_minus - z_plus) / 2.0j
    return float(c.real), float(s.real)


# ---------------------------------------------------------------------------
# resampling


def resample(state: WavefunctionGrid, new_grid: GridSpec, renormalize: bool = True) -> WavefunctionGrid:
    """Trig-interpolate the state onto a new grid (usually a compact one).

    The new domain must lie inside the old one. Exact for band-limited
    content; the tiny truncated-tail weight is restored by renormalizing.
    """
    old = state.grid
    if any(
        nl < ol - 1e-9 or nh > oh + 1e-9
        for nl, nh, ol, oh in zip(new_grid.lower, new_grid.upper, old.lower, old.upper)
    ):
        raise ValueError("new grid must be contained in the old domain")
    spec_side = sfft.fftn(state.values) / state.values.size
    mats = []
    for j in range(old.dim):
        k = 2.0 * np.pi * sfft.fftfreq(old.n[j], d=old.step[j])
        # spectral modes are referenced to the old grid origin
        mats.append(np.exp(1j * np.outer(new_grid.axis(j) - old.lower[j], k)))
    vals = mats[0] @ spec_side @ mats[1].T
    out = WavefunctionGrid(new_grid, vals, state.hbar)
    return out.normalized() if renormalize else out
