"""Pseudospectral eigensolver for 2D confining Hamiltonians.

Discretization: uniform periodic grid, kinetic energy diagonal in the
Fourier basis, potential diagonal in the position basis. The operator is
only ever applied matrix-free. States are valid when they are confined:
the domain must contain the classically allowed region of the target
energy and the wavefunction must be negligible at the domain boundary,
in which case periodic wrap-around is irrelevant.

The solver is a Chebyshev-filtered block subspace iteration. On large
grids it first converges the block on the half-resolution grid, embeds
it by Fourier zero-padding, and then re-Ritzes and polishes on the
target grid. Reported energies are always Rayleigh quotients of the
target-grid operator and reported residuals are measured against the
uncapped target-grid operator.
"""

from __future__ import annotations

import hashlib
import struct
import warnings
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.fft as sfft

from .hamiltonian import HamiltonianSpec

__all__ = [
    "GridSpec",
    "WavefunctionGrid",
    "Eigenpair",
    "GridOperator",
    "GridTooSmallError",
    "SolverConvergenceError",
    "CacheError",
    "CacheMetadataError",
    "discretize",
    "solve",
    "solve_window",
    "energy_for_index",
    "suggest_domain",
    "store_eigenpair",
    "load_eigenpair",
]

BOUNDARY_AMPLITUDE_TOL = 1e-6
RESIDUAL_TOL = 1e-8
DEGENERACY_TOL = 1e-9


class GridTooSmallError(ValueError):
    """Domain fails to contain the classically allowed region."""


class SolverConvergenceError(RuntimeError):
    def __init__(self, message: str, residuals: Optional[np.ndarray] = None):
        super().__init__(message)
        self.residuals = residuals


class CacheError(IOError):
    """Unreadable or corrupted state file."""


class CacheMetadataError(CacheError):
    """State file readable but inconsistent with the request."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid: node j of axis i sits at lower[i] + j*step[i].

    The upper edge is excluded (periodic convention), so step[i] =
    (upper[i] - lower[i]) / n[i].
    """

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    n: Tuple[int, ...]

    def __post_init__(self):
        if not (len(self.lower) == len(self.upper) == len(self.n)):
            raise ValueError("lower/upper/n length mismatch")
        if any(u <= l for l, u in zip(self.lower, self.upper)):
            raise ValueError("need lower < upper per axis")
        if any(m < 4 for m in self.n):
            raise ValueError("need at least 4 nodes per axis")

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def step(self) -> Tuple[float, ...]:
        return tuple((u - l) / m for l, u, m in zip(self.lower, self.upper, self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.step))

    def axis(self, i: int) -> np.ndarray:
        return self.lower[i] + self.step[i] * np.arange(self.n[i])

    def axes(self) -> List[np.ndarray]:
        return [self.axis(i) for i in range(self.dim)]

    def meshgrid(self) -> List[np.ndarray]:
        return list(np.meshgrid(*self.axes(), indexing="ij"))

    def wavenumbers(self) -> List[np.ndarray]:
        """Angular wavenumbers per axis in FFT layout."""
        return [2.0 * np.pi * sfft.fftfreq(m, d=s) for m, s in zip(self.n, self.step)]

    def coarsened(self) -> "GridSpec":
        if any(m % 2 for m in self.n):
            raise ValueError("can only halve even grids")
        return GridSpec(self.lower, self.upper, tuple(m // 2 for m in self.n))


@dataclass
class WavefunctionGrid:
    """Complex wavefunction samples on a GridSpec, unit L2 norm."""

    grid: GridSpec
    values: np.ndarray
    hbar: float

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != tuple(self.grid.n):
            raise ValueError("values shape does not match grid")

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.cell_volume))

    def normalized(self) -> "WavefunctionGrid":
        return WavefunctionGrid(self.grid, self.values / self.norm(), self.hbar)

    def boundary_amplitude_ratio(self) -> float:
        """max |psi| over the outermost node layer / max |psi|."""
        v = np.abs(self.values)
        edge = max(v[0, :].max(), v[-1, :].max(), v[:, 0].max(), v[:, -1].max())
        return float(edge / v.max())

    def is_confined(self, tol: float = BOUNDARY_AMPLITUDE_TOL) -> bool:
        return self.boundary_amplitude_ratio() < tol


@dataclass
class Eigenpair:
    state: WavefunctionGrid
    energy: float
    index: int
    residual: float
    label: str = ""


class GridOperator:
    """Matrix-free H = FFT-diagonal kinetic + diagonal potential."""

    def __init__(self, spec: HamiltonianSpec, grid: GridSpec, hbar: float):
        if spec.dim != grid.dim:
            raise ValueError("spec/grid dimension mismatch")
        self.spec = spec
        self.grid = grid
        self.hbar = float(hbar)
        mesh = grid.meshgrid()
        v = np.asarray(spec.potential(*mesh), dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("potential is not finite on the grid; "
                             "hard-wall specs cannot be discretized")
        self.v_grid = v
        ks = grid.wavenumbers()
        masses = np.asarray(spec.masses, dtype=float)
        # kinetic multiplier t(k) = sum_j (hbar k_j)^2 / (2 m_j)
        t = np.zeros(grid.n)
        for j, k in enumerate(ks):
            shape = [1] * grid.dim
            shape[j] = -1
            t = t + (self.hbar * k.reshape(shape)) ** 2 / (2.0 * masses[j])
        self.t_grid = t
        # rfft layout of the same multiplier, for real-block applies
        self.t_rfft = t[..., : grid.n[-1] // 2 + 1].copy()

    @property
    def kinetic_bound(self) -> float:
        return float(self.t_grid.max())

    def spectrum_bounds(self, v_cap: Optional[float] = None) -> Tuple[float, float]:
        """Rigorous (lower, upper) bounds of the discrete spectrum."""
        v = self.v_grid if v_cap is None else np.minimum(self.v_grid, v_cap)
        return float(v.min()), float(v.max() + self.t_grid.max())

    def apply(self, values: np.ndarray) -> np.ndarray:
        """H psi for a single complex (or real) array of grid shape."""
        spec_side = sfft.fftn(values)
        out = sfft.ifftn(self.t_grid * spec_side)
        return out + self.v_grid * values

    def apply_real_block(self, block: np.ndarray, v_cap: Optional[float] = None) -> np.ndarray:
        """H applied to a stack of real arrays, shape (m, n1, ..., nD)."""
        v = self.v_grid if v_cap is None else np.minimum(self.v_grid, v_cap)
        axes = tuple(range(1, block.ndim))
        out = sfft.irfftn(self.t_rfft * sfft.rfftn(block, axes=axes), axes=axes,
                          s=self.grid.n)
        out += v * block
        return out

    def coarsened(self) -> "GridOperator":
        return GridOperator(self.spec, self.grid.coarsened(), self.hbar)


def discretize(
    spec: HamiltonianSpec,
    grid: GridSpec,
    hbar: float,
    target_energy: Optional[float] = None,
) -> GridOperator:
    """Build the grid operator; refuse domains that cannot confine states.

    When ``target_energy`` is given, every boundary node must satisfy
    V > target_energy, otherwise the classically allowed region leaks
    through the domain edge and the periodic discretization is invalid.
    """
    op = GridOperator(spec, grid, hbar)
    if target_energy is not None:
        v = op.v_grid
        edge_min = min(v[0, :].min(), v[-1, :].min(), v[:, 0].min(), v[:, -1].min())
        if edge_min <= target_energy:
            raise GridTooSmallError(
                "classically allowed region reaches the domain boundary: "
                f"min boundary V = {edge_min:.6g} <= target energy {target_energy:.6g}; "
                "enlarge the domain"
            )
    return op


# ---------------------------------------------------------------------------
# block linear algebra helpers (blocks are stacks of real grid arrays)


def _flat(block: np.ndarray) -> np.ndarray:
    return block.reshape(block.shape[0], -1)


def _orthonormalize(block: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(_flat(block).T)
    return np.ascontiguousarray(q.T).reshape(block.shape)


def _rayleigh_ritz(
    op: GridOperator, block: np.ndarray, v_cap: Optional[float]
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (theta, rotated block, H block) with ascending Ritz values."""
    hblock = op.apply_real_block(block, v_cap=v_cap)
    s = _flat(block) @ _flat(hblock).T
    s = 0.5 * (s + s.T)
    theta, u = np.linalg.eigh(s)
    rot = np.ascontiguousarray((u.T @ _flat(block))).reshape(block.shape)
    hrot = np.ascontiguousarray((u.T @ _flat(hblock))).reshape(block.shape)
    return theta, rot, hrot


def _residual_norms(theta: np.ndarray, block: np.ndarray, hblock: np.ndarray) -> np.ndarray:
    r = hblock - theta[:, None, None] * block
    return np.linalg.norm(_flat(r), axis=1)


def _chebyshev_filter(
    op: GridOperator,
    block: np.ndarray,
    degree: int,
    a: float,
    b: float,
    a_low: float,
    v_cap: Optional[float],
) -> np.ndarray:
    """Scaled Chebyshev filter damping [a, b], amplifying below a.

    Standard three-term recurrence with sigma-scaling anchored at a_low
    to keep amplitudes bounded.
    """
    e = 0.5 * (b - a)
    c = 0.5 * (b + a)
    sigma = e / (a_low - c)
    sigma1 = sigma
    y = op.apply_real_block(block, v_cap=v_cap)
    y -= c * block
    y *= sigma1 / e
    for _ in range(2, degree + 1):
        sigma_new = 1.0 / (2.0 / sigma1 - sigma)
        y_new = op.apply_real_block(y, v_cap=v_cap)
        y_new -= c * y
        y_new *= 2.0 * sigma_new / e
        y_new -= (sigma * sigma_new) * block
        block = y
        y = y_new
        sigma = sigma_new
    return y


def _fourier_embed(block: np.ndarray, fine_n: Tuple[int, ...]) -> np.ndarray:
    """Zero-pad interpolation of a stack of real arrays onto a finer grid.

    Coarse Nyquist rows are dropped (converged bound states carry no
    weight there), which keeps the embedding exactly real.
    """
    m, n1, n2 = block.shape
    f1, f2 = fine_n
    spec_c = sfft.fftn(block.astype(complex), axes=(1, 2))
    spec_f = np.zeros((m, f1, f2), dtype=complex)
    h1, h2 = n1 // 2, n2 // 2
    # positive and negative frequency quadrants, Nyquist lines omitted
    spec_f[:, :h1, :h2] = spec_c[:, :h1, :h2]
    spec_f[:, :h1, f2 - h2 + 1:] = spec_c[:, :h1, n2 - h2 + 1:]
    spec_f[:, f1 - h1 + 1:, :h2] = spec_c[:, n1 - h1 + 1:, :h2]
    spec_f[:, f1 - h1 + 1:, f2 - h2 + 1:] = spec_c[:, n1 - h1 + 1:, n2 - h2 + 1:]
    out = sfft.ifftn(spec_f, axes=(1, 2)).real
    out *= (f1 * f2) / (n1 * n2)
    return np.ascontiguousarray(out)


def _filter_degree(gap: float, a: float, b: float, lo: int = 40, hi: int = 400) -> int:
    eps = 2.0 * max(gap, 1e-12) / max(b - a, 1e-12)
    # gain per iteration ~ exp(degree * sqrt(2 eps)); aim for ~e^5
    d = int(np.ceil(5.0 / np.sqrt(2.0 * eps)))
    return int(np.clip(d, lo, hi))


def _chefsi(
    op: GridOperator,
    k: int,
    block: np.ndarray,
    v_cap: Optional[float],
    tol: float,
    max_iter: int,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run filtered subspace iteration until the first k pairs converge.

    Returns (theta, block, residuals of the first k columns).
    """
    m = block.shape[0]
    lam_lo, lam_hi = op.spectrum_bounds(v_cap=v_cap)
    block = _orthonormalize(block)
    theta, block, hblock = _rayleigh_ritz(op, block, v_cap)
    for it in range(max_iter):
        res = _residual_norms(theta, block, hblock)
        if res[:k].max() < tol:
            return theta, block, res[:k]
        # damp everything above the buffer midpoint
        a = theta[(k + m - 1) // 2]
        a = min(max(a, lam_lo + 1e-6 * (lam_hi - lam_lo)), lam_hi - 1e-6 * (lam_hi - lam_lo))
        gap = max(theta[m - 1] - theta[k - 1], 1e-3 * max(abs(theta[k - 1]), 1.0))
        degree = _filter_degree(gap, a, lam_hi)
        block = _chebyshev_filter(op, block, degree, a, lam_hi, lam_lo, v_cap)
        block = _orthonormalize(block)
        theta, block, hblock = _rayleigh_ritz(op, block, v_cap)
    res = _residual_norms(theta, block, hblock)
    if res[:k].max() < tol:
        return theta, block, res[:k]
    raise SolverConvergenceError(
        f"subspace iteration did not reach residual {tol:g} in {max_iter} sweeps "
        f"(best {res[:k].max():.3g})",
        residuals=res[:k],
    )


def _expectation_q1sq(values: np.ndarray, grid: GridSpec) -> float:
    q1 = grid.axis(0)[:, None]
    w = np.abs(values) ** 2
    return float(np.sum(w * q1**2) / np.sum(w))


def _fix_sign(values: np.ndarray) -> np.ndarray:
    flat = values.ravel()
    j = int(np.argmax(np.abs(flat)))
    return -values if flat[j] < 0 else values


def solve(
    op: GridOperator,
    k: int,
    seed: int = 0,
    tol: float = RESIDUAL_TOL,
    energy_hint: Optional[float] = None,
    max_iter: int = 60,
    check_confinement: bool = True,
) -> List[Eigenpair]:
    """Lowest k eigenpairs of the discretized Hamiltonian.

    Deterministic for a fixed seed. ``energy_hint`` (an upper estimate of
    the k-th energy) enables potential capping during the filtering
    stages; final energies and residuals always use the uncapped
    operator. Degenerate clusters (|dE| < 1e-9) are ordered by <q1^2>
    ascending.
    """
    if k < 1:
        raise ValueError("k must be positive")
    n_total = int(np.prod(op.grid.n))
    buffer = max(16, k // 5)
    m = min(k + buffer, n_total)
    rng = np.random.default_rng(seed)

    v_cap = None
    if energy_hint is not None:
        v_cap = max(8.0 * abs(energy_hint), float(op.v_grid.min()) + 1.0)
        if v_cap >= float(op.v_grid.max()):
            v_cap = None

    # two-grid warm start for large grids
    use_coarse = all(n >= 256 and n % 2 == 0 for n in op.grid.n)
    if use_coarse:
        coarse = op.coarsened()
        x0 = rng.standard_normal((m,) + tuple(coarse.grid.n))
        theta, block, _ = _chefsi(coarse, k, x0, v_cap, tol, max_iter)
        block = _fourier_embed(block, op.grid.n)
        block = _orthonormalize(block)
    else:
        block = rng.standard_normal((m,) + tuple(op.grid.n))
        block = _orthonormalize(block)

    theta, block, hblock = _rayleigh_ritz(op, block, None)
    res = _residual_norms(theta, block, hblock)
    if res[:k].max() >= tol and v_cap is not None:
        # warm stage on the capped operator; the cap leaves noise-floor
        # amplitude where V is huge, so it cannot certify the final
        # residual and a looser target is enough here
        theta, block, _ = _chefsi(op, k, block, v_cap, max(tol, 1e-6), max_iter)
        theta, block, hblock = _rayleigh_ritz(op, block, None)
        res = _residual_norms(theta, block, hblock)
    if res[:k].max() >= tol:
        theta, block, _ = _chefsi(op, k, block, None, tol, max_iter)
        theta, block, hblock = _rayleigh_ritz(op, block, None)
        res = _residual_norms(theta, block, hblock)
        if res[:k].max() >= tol:
            raise SolverConvergenceError(
                f"final uncapped residual {res[:k].max():.3g} exceeds {tol:g}",
                residuals=res[:k],
            )

    # order within degenerate clusters by <q1^2>
    order = list(range(k))
    i = 0
    while i < k:
        j = i + 1
        while j < k and theta[j] - theta[i] < DEGENERACY_TOL:
            j += 1
        if j - i > 1:
            order[i:j] = sorted(
                order[i:j], key=lambda c: _expectation_q1sq(block[c], op.grid)
            )
        i = j

    cell = op.grid.cell_volume
    pairs = []
    for idx, col in enumerate(order):
        vals = _fix_sign(block[col]) / np.sqrt(cell)
        state = WavefunctionGrid(op.grid, vals.astype(complex), op.hbar)
        if check_confinement and not state.is_confined():
            warnings.warn(
                f"state {idx} has boundary amplitude ratio "
                f"{state.boundary_amplitude_ratio():.2e}; enlarge the domain",
                RuntimeWarning,
            )
        pairs.append(
            Eigenpair(
                state=state,
                energy=float(theta[col]),
                index=idx,
                residual=float(res[col]),
                label=op.spec.label,
            )
        )
    return pairs


def solve_window(
    op: GridOperator,
    window: Tuple[float, float],
    seed: int = 0,
    tol: float = RESIDUAL_TOL,
    k_start: int = 32,
) -> List[Eigenpair]:
    """All eigenpairs with energy inside [window[0], window[1]]."""
    lo, hi = window
    if hi <= lo:
        raise ValueError("empty energy window")
    k = k_start
    n_total = int(np.prod(op.grid.n))
    while True:
        pairs = solve(op, k, seed=seed, tol=tol, energy_hint=hi)
        if pairs[-1].energy > hi or k >= n_total:
            return [p for p in pairs if lo <= p.energy <= hi]
        k = min(int(k * 1.6) + 8, n_total)


# ---------------------------------------------------------------------------
# semiclassical sizing helpers


def energy_for_index(
    spec: HamiltonianSpec,
    index: int,
    hbar: float,
    bounds: Optional[Tuple[Tuple[float, float], ...]] = None,
    samples: int = 512,
) -> float:
    """Leading-order counting estimate of the energy of a given index.

    Inverts N(E) = Vol(H < E) / (2 pi hbar)^D, with the momentum integral
    done in closed form for quadratic kinetic energy. Used only for
    domain sizing and solver hints, never for reported energies.
    """
    masses = np.asarray(spec.masses, dtype=float)
    target = index + 1.0

    def count(e_val: float, box) -> float:
        axes = [np.linspace(lo, hi, samples) for lo, hi in box]
        cell = float(np.prod([(hi - lo) / (samples - 1) for lo, hi in box]))
        mesh = np.meshgrid(*axes, indexing="ij")
        v = np.asarray(spec.potential(*mesh), dtype=float)
        defect = np.clip(e_val - v, 0.0, None)
        vol_q = float(defect.sum()) * cell
        return 2.0 * np.pi * float(np.sqrt(np.prod(masses))) * vol_q / (2.0 * np.pi * hbar) ** spec.dim

    e = max(1.0, hbar)
    for _ in range(80):
        box = bounds if bounds is not None else suggest_domain(spec, e, factor=1.2)
        n_e = count(e, box)
        if n_e <= 0:
            e *= 2.0
            continue
        e_new = e * (target / n_e) ** 0.5  # N ~ E^2 for 2D quadratic kinetic
        if abs(e_new - e) < 1e-3 * e:
            return float(e_new)
        e = e_new
    return float(e)


def suggest_domain(
    spec: HamiltonianSpec,
    e_target: float,
    factor: float = 2.0,
    samples: int = 257,
    step: float = 0.5,
    max_extent: float = 400.0,
) -> Tuple[Tuple[float, float], ...]:
    """Smallest axis-aligned box (in steps of ``step``) whose boundary
    satisfies V >= factor * e_target, so states up to e_target are confined."""
    level = factor * e_target
    lo = np.array([-step, -step], dtype=float)
    hi = np.array([step, step], dtype=float)

    def edge_min(axis: int, side: int) -> float:
        ts = [np.linspace(lo[j], hi[j], samples) for j in range(2)]
        ts[axis] = np.array([hi[axis] if side else lo[axis]])
        mesh = np.meshgrid(*ts, indexing="ij")
        return float(np.min(spec.potential(*mesh)))

    for _ in range(int(4 * max_extent / step)):
        grown = False
        for axis in range(2):
            if edge_min(axis, 0) < level and -lo[axis] < max_extent:
                lo[axis] -= step
                grown = True
            if edge_min(axis, 1) < level and hi[axis] < max_extent:
                hi[axis] += step
                grown = True
        if not grown:
            return tuple((float(l), float(h)) for l, h in zip(lo, hi))
    raise GridTooSmallError("could not find a confining box; potential may be unbounded below")


# ---------------------------------------------------------------------------
# on-disk state cache

_MAGIC = b"SCHORD01"
_VERSION = 1


def store_eigenpair(path, pair: Eigenpair) -> None:
    """Versioned binary snapshot, bit-exact for values, checksummed."""
    grid = pair.state.grid
    values = np.ascontiguousarray(pair.state.values, dtype=np.complex128)
    label = pair.label.encode("utf-8")
    header = bytearray()
    header += _MAGIC
    header += struct.pack("<II", _VERSION, grid.dim)
    header += struct.pack("<" + "I" * grid.dim, *grid.n)
    for lo, hiv in zip(grid.lower, grid.upper):
        header += struct.pack("<dd", lo, hiv)
    header += struct.pack("<dddq", pair.state.hbar, pair.energy, pair.residual, pair.index)
    header += struct.pack("<H", len(label)) + label
    payload = values.astype("<c16").tobytes(order="C")
    digest = hashlib.sha256(bytes(header) + payload).digest()
    with open(path, "wb") as fh:
        fh.write(bytes(header))
        fh.write(payload)
        fh.write(digest)


def load_eigenpair(
    path,
    expect_hbar: Optional[float] = None,
    expect_label: Optional[str] = None,
) -> Eigenpair:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(_MAGIC) + 8 + 32 or raw[: len(_MAGIC)] != _MAGIC:
        raise CacheError(f"{path}: not a state cache file")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CacheError(f"{path}: checksum mismatch, file corrupted")
    off = len(_MAGIC)
    version, dim = struct.unpack_from("<II", body, off)
    off += 8
    if version != _VERSION:
        raise CacheError(f"{path}: unsupported cache version {version}")
    n = struct.unpack_from("<" + "I" * dim, body, off)
    off += 4 * dim
    lowers, uppers = [], []
    for _ in range(dim):
        lo, hiv = struct.unpack_from("<dd", body, off)
        off += 16
        lowers.append(lo)
        uppers.append(hiv)
    hbar, energy, residual, index = struct.unpack_from("<dddq", body, off)
    off += 32
    (label_len,) = struct.unpack_from("<H", body, off)
    off += 2
    label = body[off : off + label_len].decode("utf-8")
    off += label_len
    count = int(np.prod(n))
    values = np.frombuffer(body, dtype="<c16", count=count, offset=off).reshape(n)
    if expect_hbar is not None and not np.isclose(hbar, expect_hbar, rtol=0, atol=1e-12):
        raise CacheMetadataError(
            f"{path}: cached hbar {hbar!r} does not match requested {expect_hbar!r}"
        )
    if expect_label is not None and label != expect_label:
        raise CacheMetadataError(
            f"{path}: cached system {label!r} does not match requested {expect_label!r}"
        )
    grid = GridSpec(tuple(lowers), tuple(uppers), tuple(int(x) for x in n))
    state = WavefunctionGrid(grid, values.copy(), hbar)
    return Eigenpair(state=state, energy=energy, index=int(index), residual=residual, label=label)
