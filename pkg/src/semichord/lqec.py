"""Semiclassical energy-shell chord functions.

The classical prediction replaces the state's Wigner function by the
normalized microcanonical shell. Three routes are provided:

* ``chord_mc``: Monte Carlo average of exp(-i wedge(xi, x)/hbar) over a
  Metropolis sample of the Gaussian-smeared shell,
* ``chord_bessel``: reduction of the shell integral over the momentum
  sphere to the radial kernel F_D, leaving a quadrature over the
  classically allowed position region (computed in the mass-absorbed
  frame where H = p'^2 + V'; wedge phases are invariant under that
  rescaling, only the kernel argument picks up the mass scales),
* local predictors: the covariance ellipsoid for the real part's first
  nodal surface and the hyperplane wedge(xi, <x>) = 0 for the imaginary
  part.

The sampler draws randomness from a seeded Generator in fixed-size
chunks, so results are identical whether the chain steps run through
the compiled kernel or pure Python.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy import special as sp_special

from .hamiltonian import (
    Chord,
    HamiltonianSpec,
    PhasePoint,
    mass_rescale,
    symplectic_matrix,
)
from .phasespace import (
    ChordSection,
    CovarianceMatrix,
    SectionPlane,
    _axis_info,
    _section_axes,
)

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - environment without the compiler
    NUMBA_AVAILABLE = False

__all__ = [
    "ShellSample",
    "FKernelQuery",
    "QuadratureSpec",
    "ChordEstimate",
    "EllipsoidForm",
    "ChordHyperplane",
    "TuningError",
    "QuadratureError",
    "ForbiddenRegionError",
    "sample_shell",
    "chord_mc",
    "mc_section",
    "f_kernel",
    "chord_bessel",
    "bessel_section",
    "allowed_region_rule",
    "ellipsoid_predictor",
    "imag_nodal_plane",
    "shell_covariance",
    "local_shell_radius",
]


class TuningError(RuntimeError):
    """Proposal auto-tuning left the acceptance rate out of range."""


class QuadratureError(RuntimeError):
    """Allowed-region quadrature failed to converge under refinement."""


class ForbiddenRegionError(ValueError):
    """Anchor point lies outside the classically allowed region."""


@dataclass
class ShellSample:
    """Markov sample of the Gaussian-smeared energy shell.

    points holds one phase-space row (p1, .., pD, q1, .., qD) per
    retained step, in chain order (batch error estimates rely on the
    ordering).
    """

    points: np.ndarray
    energies: np.ndarray
    energy: float
    sigma: float
    seed: int
    acceptance_rate: float
    autocorrelation_estimate: float

    @property
    def dim(self) -> int:
        return self.points.shape[1] // 2

    @property
    def p(self) -> np.ndarray:
        return self.points[:, : self.dim]

    @property
    def q(self) -> np.ndarray:
        return self.points[:, self.dim :]

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class FKernelQuery:
    """Radial-kernel query: dimension D and argument s = r_E |xi_q| / hbar."""

    D: int
    s: float

    def __post_init__(self):
        if self.D < 1:
            raise ValueError("D must be at least 1")
        if self.s < 0:
            raise ValueError("s must be non-negative")


@dataclass(frozen=True)
class QuadratureSpec:
    initial: int = 128
    max_refinements: int = 5
    rel_tol: float = 1e-4
    edge_subsample: int = 4


@dataclass
class ChordEstimate:
    value: complex
    stderr: float
    stderr_real: float
    stderr_imag: float
    n: int

    def __complex__(self) -> complex:
        return complex(self.value)


# ---------------------------------------------------------------------------
# Metropolis sampler

_ADAPT_CHUNK = 256
_MAIN_CHUNK = 1 << 18


def _chain_chunk_poly(
    p, q, masses, coeffs, expts, energy, sigma, wp, wq,
    normals, logu, h_cur, thin, out_points, out_h,
):
    """One chunk of Metropolis steps for a polynomial potential.

    Mutates p, q in place. Retains the walker at local steps thin-1,
    2*thin-1, ... when thin > 0 (chunk length is then a multiple of
    thin). Returns (accepted count, final H). Compiled and interpreted
    executions share this source, so their chains match bit for bit.
    """
    d = p.shape[0]
    steps = normals.shape[0]
    accepted = 0
    k = 0
    for i in range(steps):
        pn = p + wp * normals[i, :d]
        qn = q + wq * normals[i, d:]
        v = 0.0
        for t in range(coeffs.shape[0]):
            term = coeffs[t]
            for j in range(d):
                for _ in range(expts[t, j]):
                    term *= qn[j]
            v += term
        h_new = v
        for j in range(d):
            h_new += pn[j] * pn[j] / (2.0 * masses[j])
        du = (h_cur - energy) ** 2 - (h_new - energy) ** 2
        if logu[i] < du / (2.0 * sigma * sigma):
            for j in range(d):
                p[j] = pn[j]
                q[j] = qn[j]
            h_cur = h_new
            accepted += 1
        if thin > 0 and (i + 1) % thin == 0:
            for j in range(d):
                out_points[k, j] = p[j]
                out_points[k, d + j] = q[j]
            out_h[k] = h_cur
            k += 1
    return accepted, h_cur


def _chain_chunk_callable(
    p, q, masses, potential, energy, sigma, wp, wq,
    normals, logu, h_cur, thin, out_points, out_h,
):
    """Python-only twin of _chain_chunk_poly for black-box potentials."""
    d = p.shape[0]
    steps = normals.shape[0]
    accepted = 0
    k = 0
    for i in range(steps):
        pn = p + wp * normals[i, :d]
        qn = q + wq * normals[i, d:]
        h_new = float(potential(*qn))
        for j in range(d):
            h_new += pn[j] * pn[j] / (2.0 * masses[j])
        du = (h_cur - energy) ** 2 - (h_new - energy) ** 2
        if logu[i] < du / (2.0 * sigma * sigma):
            p[:] = pn
            q[:] = qn
            h_cur = h_new
            accepted += 1
        if thin > 0 and (i + 1) % thin == 0:
            out_points[k, :d] = p
            out_points[k, d:] = q
            out_h[k] = h_cur
            k += 1
    return accepted, h_cur


if NUMBA_AVAILABLE:
    _chain_chunk_jit = njit(cache=True)(_chain_chunk_poly)


def _coordinate_extents(spec: HamiltonianSpec, energy: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rough per-coordinate scales of the shell, plus a low-V start point."""
    from .eigensolver import suggest_domain

    box = suggest_domain(spec, energy, factor=1.2)
    axes = [np.linspace(lo, hi, 201) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    v = np.asarray(spec.potential(*mesh), dtype=float)
    allowed = v < energy
    if not allowed.any():
        raise ValueError(f"energy {energy} is below the potential minimum on the scan box")
    q_ext = np.empty(spec.dim)
    for j in range(spec.dim):
        other = tuple(i for i in range(spec.dim) if i != j)
        line = allowed.any(axis=other)
        qs = axes[j][line]
        q_ext[j] = max(qs.max() - qs.min(), 1e-3)
    p_ext = np.sqrt(2.0 * np.asarray(spec.masses) * energy)
    flat = int(np.argmin(np.where(np.isfinite(v), v, np.inf)))
    q0 = np.array([mesh[j].ravel()[flat] for j in range(spec.dim)])
    return p_ext, q_ext, q0


def _integrated_autocorr(series: np.ndarray, c: float = 5.0) -> float:
    """Windowed integrated autocorrelation time, in retained-sample units."""
    x = np.asarray(series, dtype=float)
    n = x.size
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var == 0.0 or n < 8:
        return 1.0
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, nfft)
    acf = np.fft.irfft(f * np.conj(f))[:n].real / (var * n)
    tau = 1.0
    for m in range(1, n // 2):
        tau = 1.0 + 2.0 * float(acf[1 : m + 1].sum())
        if m >= c * tau:
            break
    return max(tau, 1.0)


def sample_shell(
    spec: HamiltonianSpec,
    energy: float,
    sigma: float,
    n: int,
    seed: int,
    thin: int = 20,
    target_acceptance: float = 0.4,
    use_compiled: Optional[bool] = None,
) -> ShellSample:
    """Metropolis sample with stationary density exp(-(H - E)^2 / 2 sigma^2).

    Gaussian random-walk proposals with per-coordinate widths set by the
    shell extents; a global width factor is tuned toward the target
    acceptance during the burn-in (roughly the first tenth of the chain,
    discarded). Every ``thin``-th post-burn step is retained.
    Deterministic for a given seed.
    """
    if n < 1000:
        raise ValueError("shell samples need at least 1000 points")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if thin < 1:
        raise ValueError("thin must be at least 1")
    d = spec.dim
    if use_compiled is None:
        use_compiled = NUMBA_AVAILABLE and spec.poly_terms is not None
    if use_compiled and spec.poly_terms is None:
        raise ValueError("compiled sampling requires a polynomial potential")
    poly = spec.poly_terms is not None
    if poly:
        coeffs = np.array([c for c, _ in spec.poly_terms], dtype=float)
        expts = np.array([e for _, e in spec.poly_terms], dtype=np.int64)
    masses = np.asarray(spec.masses, dtype=float)

    p_ext, q_ext, q0 = _coordinate_extents(spec, energy)
    p = np.zeros(d)
    q = q0.copy()
    v0 = float(spec.potential(*q))
    p[0] = math.sqrt(max(2.0 * masses[0] * (energy - v0), 0.0))
    h_cur = float(np.sum(p**2 / (2.0 * masses)) + v0)

    raw = n * thin
    burn = int(np.ceil(max(raw // 10, 2048) / _ADAPT_CHUNK)) * _ADAPT_CHUNK
    rng = np.random.default_rng(seed)
    scale = 0.1
    base_wp = 0.5 * p_ext
    base_wq = 0.5 * q_ext
    empty_pts = np.empty((0, 2 * d))
    empty_h = np.empty(0)

    def run_chunk(steps, wp, wq, thin_now, out_pts, out_h):
        nonlocal h_cur
        normals = rng.standard_normal((steps, 2 * d))
        logu = np.log(rng.random(steps))
        if poly:
            kernel = _chain_chunk_jit if use_compiled else _chain_chunk_poly
            acc, h_cur = kernel(
                p, q, masses, coeffs, expts, energy, sigma, wp, wq,
                normals, logu, h_cur, thin_now, out_pts, out_h,
            )
        else:
            acc, h_cur = _chain_chunk_callable(
                p, q, masses, spec.potential, energy, sigma, wp, wq,
                normals, logu, h_cur, thin_now, out_pts, out_h,
            )
        return acc

    for _ in range(burn // _ADAPT_CHUNK):
        acc = run_chunk(_ADAPT_CHUNK, scale * base_wp, scale * base_wq, 0, empty_pts, empty_h)
        rate = acc / _ADAPT_CHUNK
        scale *= math.exp(1.5 * (rate - target_acceptance))
        scale = min(max(scale, 1e-7), 10.0)

    wp = scale * base_wp
    wq = scale * base_wq
    points = np.empty((n, 2 * d))
    energies = np.empty(n)
    accepted = 0
    done = 0
    filled = 0
    chunk_cap = max(thin, (_MAIN_CHUNK // thin) * thin)
    while done < raw:
        steps = min(chunk_cap, raw - done)
        k = steps // thin
        acc = run_chunk(steps, wp, wq, thin, points[filled : filled + k], energies[filled : filled + k])
        accepted += acc
        filled += k
        done += steps

    acceptance = accepted / raw
    if not (0.02 < acceptance < 0.98):
        raise TuningError(
            f"acceptance rate {acceptance:.3f} outside (0.02, 0.98) after tuning; "
            "adjust sigma or thinning"
        )
    tau = _integrated_autocorr(energies)
    return ShellSample(
        points=points,
        energies=energies,
        energy=float(energy),
        sigma=float(sigma),
        seed=int(seed),
        acceptance_rate=float(acceptance),
        autocorrelation_estimate=float(tau),
    )


# ---------------------------------------------------------------------------
# Monte Carlo chord estimator


def _wedge_with_points(xi: Chord, points: np.ndarray) -> np.ndarray:
    """wedge(xi, x_j) = xi_p . q_j - xi_q . p_j for each sample row."""
    d = xi.dim
    return points[:, d:] @ xi.xi_p - points[:, :d] @ xi.xi_q


def chord_mc(sample: ShellSample, xi: Chord, hbar: float, batches: int = 64) -> ChordEstimate:
    """Sample mean of exp(-i wedge(xi, x)/hbar) with batch-means errors.

    Batch means over the chain order absorb the Markov autocorrelation
    into the standard error, so 3-sigma comparisons stay honest.
    """
    n = len(sample)
    if n == 0:
        raise ValueError("empty sample")
    phases = np.exp(-1j * _wedge_with_points(xi, sample.points) / hbar)
    value = complex(phases.mean())
    b = max(2, min(batches, n // 4))
    m = n // b
    bm = phases[: b * m].reshape(b, m).mean(axis=1)
    se_re = float(bm.real.std(ddof=1) / math.sqrt(b))
    se_im = float(bm.imag.std(ddof=1) / math.sqrt(b))
    return ChordEstimate(
        value=value,
        stderr=math.hypot(se_re, se_im),
        stderr_real=se_re,
        stderr_imag=se_im,
        n=n,
    )


def mc_section(
    sample: ShellSample,
    plane: SectionPlane,
    half_widths,
    resolution,
    hbar: float,
    source: str = "lqec_mc",
) -> ChordSection:
    """Monte Carlo chord estimates over a whole section plane.

    The phase separates per plane axis, so the section costs two thin
    matrix products instead of resolution^2 independent averages.
    """
    u, v = _section_axes(half_widths, resolution)
    base = plane.base()
    pts = sample.points
    n = len(sample)
    d = sample.dim

    def axis_wedge(name: str) -> np.ndarray:
        kind, j = _axis_info(name)
        if kind == "p":
            return pts[:, d + j]  # a xi_p component pairs with +q_j
        return -pts[:, j]  # a xi_q component pairs with -p_j

    w0 = axis_wedge(plane.axes[0])
    w1 = axis_wedge(plane.axes[1])
    e0 = np.exp(-1j * np.outer(u, w0) / hbar)
    e1 = np.exp(-1j * np.outer(v, w1) / hbar)
    if np.any(base.xi_p) or np.any(base.xi_q):
        e0 = e0 * np.exp(-1j * _wedge_with_points(base, pts) / hbar)
    vals = (e0 @ e1.T) / n
    return ChordSection(plane, u, v, vals, hbar, source)


# ---------------------------------------------------------------------------
# Bessel-kernel route


def f_kernel(query: Union[FKernelQuery, Tuple[int, float]]) -> float:
    if isinstance(query, tuple):
        query = FKernelQuery(*query)
    return float(_f_kernel_array(query.D, np.asarray([query.s]))[0])


def _f_kernel_array(d: int, s: np.ndarray) -> np.ndarray:
    """F_D(s) = Gamma(D/2) J_{D/2-1}(s) / (s/2)^{D/2-1}, F_D(0) = 1."""
    s = np.asarray(s, dtype=float)
    nu = d / 2.0 - 1.0
    out = np.empty_like(s)
    small = s < 1e-4
    ssm = s[small]
    # two series terms reach double precision below the 1e-4 cut
    out[small] = 1.0 - ssm**2 / (2.0 * d) + ssm**4 / (8.0 * d * (d + 2.0))
    big = ~small
    sb = s[big]
    out[big] = sp_special.gamma(d / 2.0) * sp_special.jv(nu, sb) / (sb / 2.0) ** nu
    return out


def allowed_region_rule(
    potential: Callable[..., np.ndarray],
    energy: float,
    box: Tuple[Tuple[float, float], Tuple[float, float]],
    n: int,
    edge_subsample: int = 4,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Midpoint rule over {V < E} with boundary cells subsampled.

    Returns (points (M, 2), weights (M,), values of E - V at the points).
    Interior cells carry their full area at the center; cells cut by the
    region boundary are replaced by their inside sub-cells.
    """
    (lo1, hi1), (lo2, hi2) = box
    e = edge_subsample
    f1 = np.linspace(lo1, hi1, n * e + 1)
    f2 = np.linspace(lo2, hi2, n * e + 1)
    c1 = 0.5 * (f1[:-1] + f1[1:])
    c2 = 0.5 * (f2[:-1] + f2[1:])
    cc1 = 0.5 * (f1[: -1 : e] + f1[e::e])
    cc2 = 0.5 * (f2[: -1 : e] + f2[e::e])
    cell_area = ((hi1 - lo1) / n) * ((hi2 - lo2) / n)
    sub_area = cell_area / (e * e)

    pts = []
    wts = []
    defect = []
    # stream over slabs of coarse rows; the sub-grid at large n would not
    # fit in memory as one array
    slab = max(1, (1 << 22) // (n * e * e))
    for r0 in range(0, n, slab):
        r1 = min(r0 + slab, n)
        m1, m2 = np.meshgrid(c1[r0 * e : r1 * e], c2, indexing="ij")
        v_sub = np.asarray(potential(m1, m2), dtype=float)
        inside_sub = v_sub < energy
        frac = inside_sub.reshape(r1 - r0, e, n, e).mean(axis=(1, 3))
        full = frac == 1.0
        partial = (frac > 0.0) & ~full
        if full.any():
            g1, g2 = np.meshgrid(cc1[r0:r1], cc2, indexing="ij")
            vc = np.asarray(potential(g1, g2), dtype=float)
            pts.append(np.column_stack([g1[full], g2[full]]))
            wts.append(np.full(int(full.sum()), cell_area))
            defect.append(energy - vc[full])
        if partial.any():
            part_mask = np.repeat(np.repeat(partial, e, axis=0), e, axis=1) & inside_sub
            pts.append(np.column_stack([m1[part_mask], m2[part_mask]]))
            wts.append(np.full(int(part_mask.sum()), sub_area))
            defect.append(energy - v_sub[part_mask])
    if not pts:
        raise ForbiddenRegionError("no classically allowed region inside the box")
    return np.concatenate(pts), np.concatenate(wts), np.concatenate(defect)


def _rescaled_frame(spec: HamiltonianSpec, energy: float):
    """Rescaled spec plus the allowed-region bounding box in that frame."""
    from .eigensolver import suggest_domain

    resc = mass_rescale(spec)
    box = suggest_domain(resc.rescaled, energy, factor=1.0, step=0.25)
    return resc, box


def chord_bessel(
    spec: HamiltonianSpec,
    energy: float,
    xi: Chord,
    hbar: float,
    quad: Optional[QuadratureSpec] = None,
) -> complex:
    """Shell chord function via the momentum-sphere reduction.

    chi_E(xi) = (1/Omega) integral over {V' < E} of
    exp(-i xi'_p . q'/hbar) F_D(r_E(q') |xi'_q| / hbar), primes in the
    mass-absorbed frame, r_E = sqrt(E - V'). The rule is refined by
    doubling until the value settles to quad.rel_tol.
    """
    quad = quad or QuadratureSpec()
    resc, box = _rescaled_frame(spec, energy)
    xi_r = resc.chord_to_rescaled(xi)
    xiq_norm = float(np.linalg.norm(xi_r.xi_q))
    d = spec.dim

    prev = None
    n = quad.initial
    for _ in range(quad.max_refinements + 1):
        pts, wts, defect = allowed_region_rule(
            resc.rescaled.potential, energy, box, n, quad.edge_subsample
        )
        radii = np.sqrt(np.clip(defect, 0.0, None))
        kern = _f_kernel_array(d, radii * xiq_norm / hbar)
        phase = np.exp(-1j * (pts @ xi_r.xi_p) / hbar)
        val = complex(np.sum(wts * kern * phase) / np.sum(wts))
        if prev is not None and abs(val - prev) <= quad.rel_tol * max(0.1, abs(prev)):
            return val
        prev = val
        n *= 2
    raise QuadratureError(
        f"allowed-region quadrature did not settle to {quad.rel_tol:g} "
        f"(last value {prev})"
    )


def bessel_section(
    spec: HamiltonianSpec,
    energy: float,
    plane: SectionPlane,
    half_widths,
    resolution,
    hbar: float,
    quad: Optional[QuadratureSpec] = None,
    source: str = "lqec_bessel",
) -> ChordSection:
    """Dense Bessel-route section on a fixed converged quadrature rule.

    The rule is converged once on a probe chord at the section corner,
    then reused for every node, so all values share the same
    discretization. Momentum-type plane axes only contribute position
    phases (handled by matrix products); position-type axes enter the
    kernel argument and are looped.
    """
    quad = quad or QuadratureSpec()
    u, v = _section_axes(half_widths, resolution)
    base = plane.base()
    kinds = [_axis_info(a) for a in plane.axes]
    resc, box = _rescaled_frame(spec, energy)
    scale = resc.scale
    d = spec.dim

    def eval_on(pts, wts, radii, xi: Chord) -> complex:
        xi_r = resc.chord_to_rescaled(xi)
        kern = _f_kernel_array(d, radii * float(np.linalg.norm(xi_r.xi_q)) / hbar)
        phase = np.exp(-1j * (pts @ xi_r.xi_p) / hbar)
        return complex(np.sum(wts * kern * phase))

    probe = plane.chord_at(float(np.abs(u).max()), float(np.abs(v).max()))
    n = quad.initial
    prev = None
    rule = None
    for _ in range(quad.max_refinements + 1):
        pts, wts, defect = allowed_region_rule(
            resc.rescaled.potential, energy, box, n, quad.edge_subsample
        )
        radii = np.sqrt(np.clip(defect, 0.0, None))
        total = float(np.sum(wts))
        val = eval_on(pts, wts, radii, probe) / total
        if prev is not None and abs(val - prev) <= quad.rel_tol * max(0.1, abs(prev)):
            rule = (pts, wts, radii, total)
            break
        prev = val
        n *= 2
    if rule is None:
        raise QuadratureError("section quadrature did not converge on the probe chord")
    pts, wts, radii, total = rule

    def xi_q_scaled(a: float, b: float) -> np.ndarray:
        xi_q = base.xi_q.copy()
        for (kind, j), t in zip(kinds, (a, b)):
            if kind == "q":
                xi_q[j] += t
        return xi_q * scale

    p_axes = [i for i, (kind, _) in enumerate(kinds) if kind == "p"]
    vals = np.zeros((len(u), len(v)), dtype=complex)

    # phase matrices are (resolution x points); stream over point blocks
    # so huge rules stay within memory
    block = 1 << 17
    for s0 in range(0, pts.shape[0], block):
        sl = slice(s0, min(s0 + block, pts.shape[0]))
        pts_b, wts_b, radii_b = pts[sl], wts[sl], radii[sl]
        base_phase = np.exp(-1j * (pts_b @ (base.xi_p / scale)) / hbar)

        def p_phase(axis_idx: int, ts: np.ndarray) -> np.ndarray:
            # exp(-i t q_j / hbar) per node; pts hold q' = scale * q.
            # ts is uniform, so consecutive rows differ by a fixed
            # unit-modulus factor; the recurrence avoids res x block exps
            j = kinds[axis_idx][1]
            w = pts_b[:, j] / (scale[j] * hbar)
            out = np.empty((len(ts), w.size), dtype=complex)
            out[0] = np.exp(-1j * ts[0] * w)
            if len(ts) > 1:
                step = np.exp(-1j * (ts[1] - ts[0]) * w)
                for a in range(1, len(ts)):
                    np.multiply(out[a - 1], step, out=out[a])
            return out

        if len(p_axes) == 2:
            kern = _f_kernel_array(d, radii_b * float(np.linalg.norm(xi_q_scaled(0.0, 0.0))) / hbar)
            e_u = p_phase(0, u)
            e_v = p_phase(1, v)
            vals += (e_u * (wts_b * kern * base_phase)) @ e_v.T
        elif len(p_axes) == 1:
            pi = p_axes[0]
            e_p = p_phase(pi, u if pi == 0 else v)
            q_ts = v if pi == 0 else u
            for b, t in enumerate(q_ts):
                ab = (0.0, t) if pi == 0 else (t, 0.0)
                kern = _f_kernel_array(d, radii_b * float(np.linalg.norm(xi_q_scaled(*ab))) / hbar)
                col = e_p @ (wts_b * kern * base_phase)
                if pi == 0:
                    vals[:, b] += col
                else:
                    vals[b, :] += col
        else:
            wphase = wts_b * base_phase
            for a, ua in enumerate(u):
                args = np.empty((len(v), pts_b.shape[0]))
                for b, vb in enumerate(v):
                    args[b] = radii_b * (float(np.linalg.norm(xi_q_scaled(ua, vb))) / hbar)
                kern = _f_kernel_array(d, args.ravel()).reshape(args.shape)
                vals[a, :] += kern @ wphase
    vals /= total
    return ChordSection(plane, u, v, vals, hbar, source)


# ---------------------------------------------------------------------------
# local predictors


@dataclass
class EllipsoidForm:
    """Quadratic form Q(xi) = xi^T J^T K J xi with its nodal level."""

    matrix: np.ndarray
    level: float

    def value(self, xi: Union[Chord, np.ndarray]) -> float:
        vec = xi.as_vector() if isinstance(xi, Chord) else np.asarray(xi, dtype=float)
        return float(vec @ self.matrix @ vec)

    def axis_crossing(self, direction: Union[Chord, np.ndarray]) -> float:
        """Distance along the direction at which Q reaches the level."""
        vec = direction.as_vector() if isinstance(direction, Chord) else np.asarray(direction, dtype=float)
        unit = vec / np.linalg.norm(vec)
        quad = float(unit @ self.matrix @ unit)
        if quad <= 0:
            raise ValueError("degenerate direction for the quadratic form")
        return math.sqrt(self.level / quad)


def ellipsoid_predictor(cov: CovarianceMatrix, hbar: float) -> EllipsoidForm:
    """Small-chord surrogate for the real part's first zero surface.

    Re chi ~ 1 - <wedge(xi, x)^2> / (2 hbar^2) near the origin, and the
    centered second moment of the wedge is xi^T J^T K J xi, so the
    predicted nodal surface is that form at level 2 hbar^2.
    """
    d = cov.K.shape[0] // 2
    j = symplectic_matrix(d)
    return EllipsoidForm(matrix=j.T @ cov.K @ j, level=2.0 * hbar**2)


@dataclass
class ChordHyperplane:
    """{xi : wedge(xi, mean) = 0}; degenerate when the mean vanishes."""

    normal: Optional[np.ndarray]
    degenerate: bool

    def value(self, xi: Union[Chord, np.ndarray]) -> float:
        if self.degenerate:
            return 0.0
        vec = xi.as_vector() if isinstance(xi, Chord) else np.asarray(xi, dtype=float)
        return float(vec @ self.normal)


def imag_nodal_plane(mean: Union[PhasePoint, np.ndarray], tol: float = 1e-10) -> ChordHyperplane:
    """Leading-order nodal plane of the imaginary part.

    wedge(xi, m) = (J xi) . m = xi . (J^T m), so the plane normal is
    J^T m. A vanishing mean (parity-symmetric states) gives the
    degenerate marker: the leading imaginary part is zero everywhere.
    """
    vec = mean.as_vector() if isinstance(mean, PhasePoint) else np.asarray(mean, dtype=float)
    d = vec.size // 2
    norm = float(np.linalg.norm(vec))
    if norm < tol:
        return ChordHyperplane(normal=None, degenerate=True)
    j = symplectic_matrix(d)
    normal = j.T @ vec
    return ChordHyperplane(normal=normal / np.linalg.norm(normal), degenerate=False)


def local_shell_radius(spec: HamiltonianSpec, energy: float, q_anchor) -> float:
    """r_E = sqrt(E - V(Q)) in the mass-absorbed frame (frame-invariant)."""
    v = float(spec.potential(*np.asarray(q_anchor, dtype=float)))
    if v >= energy:
        raise ForbiddenRegionError(
            f"anchor {tuple(np.asarray(q_anchor, dtype=float))} is classically forbidden at E={energy}"
        )
    return math.sqrt(energy - v)


def shell_covariance(
    spec: HamiltonianSpec,
    energy: float,
    resolution: int = 512,
    edge_subsample: int = 4,
) -> CovarianceMatrix:
    """Classical mean and covariance of the microcanonical shell.

    For quadratic kinetic energy in two degrees of freedom the position
    marginal of the shell is uniform on the allowed region, and the
    momentum part at fixed q is a centered sphere:
    <p_i p_j> = delta_ij m_i <E - V>, with no p-q cross terms.
    """
    if spec.dim != 2:
        raise ValueError("shell covariance implemented for D=2")
    from .eigensolver import suggest_domain

    box = suggest_domain(spec, energy, factor=1.0, step=0.25)
    pts, wts, defect = allowed_region_rule(
        spec.potential, energy, box, resolution, edge_subsample
    )
    w = wts / wts.sum()
    mean_q = w @ pts
    dq = pts - mean_q
    k_qq = (dq * w[:, None]).T @ dq
    mean_defect = float(w @ defect)
    masses = np.asarray(spec.masses, dtype=float)
    k = np.zeros((4, 4))
    k[0, 0] = masses[0] * mean_defect
    k[1, 1] = masses[1] * mean_defect
    k[2:, 2:] = k_qq
    mean = np.concatenate([np.zeros(2), mean_q])
    return CovarianceMatrix(K=k, mean=mean)
