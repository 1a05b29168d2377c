"""Semiclassical shell-chord routes: sampler, Monte Carlo, Bessel kernel.

The round well H = p^2 + q^2 (masses 1/2, unit coefficients) is the
anchor oracle: its shell is a 3-sphere of radius sqrt(E) and the full
chord function collapses to the radial kernel of one higher dimension,
chi_E(xi) = F_4(sqrt(E) |xi|).
"""

import math

import mpmath
import numpy as np
import pytest

from semichord import (
    Chord,
    FKernelQuery,
    ForbiddenRegionError,
    PhasePoint,
    QuadratureError,
    QuadratureSpec,
    SectionPlane,
    bessel_section,
    box_billiard,
    chord_bessel,
    chord_mc,
    ellipsoid_predictor,
    f_kernel,
    imag_nodal_plane,
    local_shell_radius,
    mc_section,
    sample_shell,
    shell_covariance,
)
from semichord.phasespace import CovarianceMatrix

HBAR = 1.0


def _chord(xp1, xp2, xq1, xq2):
    return Chord(xi_p=np.array([xp1, xp2]), xi_q=np.array([xq1, xq2]))


def _f4(s):
    if s < 1e-12:
        return 1.0
    from scipy.special import j1
    return 2.0 * j1(s) / s


# ---------------------------------------------------------------------------
# radial kernel


def test_f_kernel_low_dims_closed_forms():
    for s in np.linspace(0.0, 20.0, 101):
        assert f_kernel((1, s)) == pytest.approx(math.cos(s), abs=1e-12)
        sinc = 1.0 if s == 0 else math.sin(s) / s
        assert f_kernel((3, s)) == pytest.approx(sinc, abs=1e-12)


@pytest.mark.parametrize("d", [2, 4, 5])
def test_f_kernel_matches_reference_bessel(d):
    mpmath.mp.dps = 30
    for s in np.linspace(1e-3, 20.0, 81):
        nu = d / 2.0 - 1.0
        ref = mpmath.gamma(d / 2.0) * mpmath.besselj(nu, s) / (s / 2.0) ** nu
        assert f_kernel((d, s)) == pytest.approx(float(ref), abs=1e-12)


def test_f_kernel_small_argument_continuity():
    mpmath.mp.dps = 30
    for d in (2, 3, 4):
        assert f_kernel((d, 0.0)) == 1.0
        # both sides of the series/Bessel switch agree with the reference
        for s in (9.9e-5, 1.01e-4):
            nu = d / 2.0 - 1.0
            ref = float(mpmath.gamma(d / 2.0) * mpmath.besselj(nu, s) / (s / 2.0) ** nu)
            assert f_kernel((d, s)) == pytest.approx(ref, abs=1e-14)
        assert f_kernel((d, 1e-3)) == pytest.approx(1.0 - 1e-6 / (2 * d), abs=1e-12)


def test_f_kernel_query_validation():
    with pytest.raises(ValueError):
        FKernelQuery(0, 1.0)
    with pytest.raises(ValueError):
        FKernelQuery(2, -0.1)


# ---------------------------------------------------------------------------
# shell sampler


def test_sample_shell_deterministic(round_shell_spec):
    a = sample_shell(round_shell_spec, 4.0, 0.2, 1000, seed=3, thin=2)
    b = sample_shell(round_shell_spec, 4.0, 0.2, 1000, seed=3, thin=2)
    c = sample_shell(round_shell_spec, 4.0, 0.2, 1000, seed=4, thin=2)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)


def test_sample_shell_compiled_matches_interpreted(round_shell_spec):
    fast = sample_shell(round_shell_spec, 4.0, 0.2, 1000, seed=11, thin=2,
                        use_compiled=True)
    slow = sample_shell(round_shell_spec, 4.0, 0.2, 1000, seed=11, thin=2,
                        use_compiled=False)
    assert np.array_equal(fast.points, slow.points)
    assert fast.acceptance_rate == slow.acceptance_rate


def test_sample_shell_validation(round_shell_spec):
    with pytest.raises(ValueError):
        sample_shell(round_shell_spec, 4.0, 0.2, 999, seed=0)
    with pytest.raises(ValueError):
        sample_shell(round_shell_spec, 4.0, -0.1, 2000, seed=0)
    with pytest.raises(ValueError):
        sample_shell(round_shell_spec, 4.0, 0.2, 2000, seed=0, thin=0)
    walls = box_billiard((0.0, 0.0), (1.0, 1.0))
    with pytest.raises(ValueError):
        sample_shell(walls, 4.0, 0.2, 2000, seed=0, use_compiled=True)


def test_sample_shell_concentrates_on_shell(round_shell_sample):
    s = round_shell_sample
    assert 0.2 < s.acceptance_rate < 0.6
    assert s.autocorrelation_estimate >= 1.0
    assert np.max(np.abs(s.energies - 4.0)) < 6.0 * 0.2
    assert np.std(s.energies) == pytest.approx(0.2, rel=0.15)
    # microcanonical equipartition on the 3-sphere: <x_i^2> = E/4
    second = (s.points**2).mean(axis=0)
    assert np.allclose(second, 1.0, atol=0.1)
    assert np.allclose(s.points.mean(axis=0), 0.0, atol=0.1)


# ---------------------------------------------------------------------------
# Monte Carlo chord route


def test_chord_mc_origin_and_symmetry(round_shell_sample):
    at0 = chord_mc(round_shell_sample, _chord(0, 0, 0, 0), HBAR)
    assert at0.value == 1.0 + 0.0j
    assert at0.stderr == 0.0
    xi = _chord(0.3, -0.2, 0.4, 0.1)
    neg = _chord(-0.3, 0.2, -0.4, -0.1)
    fwd = chord_mc(round_shell_sample, xi, HBAR)
    rev = chord_mc(round_shell_sample, neg, HBAR)
    assert rev.value == np.conj(fwd.value)
    assert fwd.n == len(round_shell_sample)


def test_chord_mc_matches_round_shell_closed_form(round_shell_sample):
    rng = np.random.default_rng(12)
    for _ in range(8):
        vec = rng.normal(size=4)
        vec *= rng.uniform(0.2, 1.2) / np.linalg.norm(vec)
        xi = Chord(xi_p=vec[:2], xi_q=vec[2:])
        est = chord_mc(round_shell_sample, xi, HBAR)
        target = _f4(2.0 * np.linalg.norm(vec))
        tol = 5.0 * est.stderr + 5e-3  # finite shell width biases at 1e-3
        assert abs(est.value - target) < tol


def test_mc_section_matches_pointwise(round_shell_sample):
    plane = SectionPlane(axes=("xi_p1", "xi_q2"))
    section = mc_section(round_shell_sample, plane, (1.0, 0.8), (32, 32), HBAR)
    assert section.source == "lqec_mc"
    for a, b in [(0, 0), (5, 20), (31, 7)]:
        direct = chord_mc(round_shell_sample, plane.chord_at(section.u[a], section.v[b]), HBAR)
        assert section.values[a, b] == pytest.approx(direct.value, abs=1e-10)


# ---------------------------------------------------------------------------
# Bessel-kernel chord route


def test_allowed_region_disk_area():
    from semichord.lqec import allowed_region_rule

    pts, wts, defect = allowed_region_rule(
        lambda q1, q2: q1**2 + q2**2, 4.0, ((-2.5, 2.5), (-2.5, 2.5)), 256
    )
    assert wts.sum() == pytest.approx(4.0 * np.pi, rel=5e-4)
    assert np.all(defect > 0.0)
    assert np.max(pts[:, 0] ** 2 + pts[:, 1] ** 2) < 4.0
    with pytest.raises(ForbiddenRegionError):
        allowed_region_rule(lambda q1, q2: q1**2 + q2**2, 4.0, ((10.0, 12.0), (10.0, 12.0)), 64)


def test_chord_bessel_matches_round_shell_closed_form(round_shell_spec):
    rng = np.random.default_rng(13)
    for _ in range(5):
        vec = rng.normal(size=4)
        vec *= rng.uniform(0.2, 1.5) / np.linalg.norm(vec)
        xi = Chord(xi_p=vec[:2], xi_q=vec[2:])
        val = chord_bessel(round_shell_spec, 4.0, xi, HBAR)
        target = _f4(2.0 * np.linalg.norm(vec))
        assert val == pytest.approx(target, abs=5e-4)


def test_chord_bessel_anisotropic_masses_frame():
    from semichord import polynomial_spec

    # same round shell written with unit masses; physical chords map
    # through the mass-absorbing frame
    spec = polynomial_spec([(2.0, (2, 0)), (2.0, (0, 2))], masses=(1.0, 1.0),
                           label="round_unit_mass")
    # p' = p / sqrt(2), q' = q sqrt(2): H = p'^2 + 2 (q'/sqrt(2))^2 = p'^2 + q'^2
    xi = _chord(0.5, 0.0, 0.3, -0.2)
    xi_r = np.array([0.5 / math.sqrt(2), 0.0, 0.3 * math.sqrt(2), -0.2 * math.sqrt(2)])
    val = chord_bessel(spec, 4.0, xi, HBAR)
    target = _f4(2.0 * float(np.linalg.norm(xi_r)))
    assert val == pytest.approx(target, abs=5e-4)


def test_chord_bessel_quadrature_error(round_shell_spec):
    strict = QuadratureSpec(initial=32, max_refinements=0, rel_tol=1e-4)
    with pytest.raises(QuadratureError):
        chord_bessel(round_shell_spec, 4.0, _chord(0.4, 0.0, 0.2, 0.0), HBAR, strict)


def test_bessel_section_matches_pointwise(round_shell_spec):
    plane = SectionPlane(axes=("xi_p1", "xi_p2"))
    section = bessel_section(round_shell_spec, 4.0, plane, (1.2, 1.2), (33, 33), HBAR)
    assert section.source == "lqec_bessel"
    assert section.value_at_origin() == pytest.approx(1.0, abs=1e-9)
    for a, b in [(4, 9), (16, 16), (30, 2)]:
        direct = chord_bessel(
            round_shell_spec, 4.0, plane.chord_at(section.u[a], section.v[b]), HBAR
        )
        assert section.values[a, b] == pytest.approx(direct, abs=2e-4)


# ---------------------------------------------------------------------------
# local predictors


def test_shell_covariance_round_well(round_shell_spec):
    cov = shell_covariance(round_shell_spec, 4.0)
    assert np.allclose(cov.mean, 0.0, atol=1e-9)
    assert np.allclose(cov.K, np.eye(4), atol=2e-3)


def test_ellipsoid_predictor_isotropic_crossing():
    cov = CovarianceMatrix(K=0.5 * HBAR * np.eye(4), mean=np.zeros(4))
    form = ellipsoid_predictor(cov, HBAR)
    for direction in [(1, 0, 0, 0), (0, 0, 1, 0), (1, 1, 1, 1)]:
        t = form.axis_crossing(np.array(direction, dtype=float))
        assert t == pytest.approx(2.0 * math.sqrt(HBAR), abs=1e-12)
    level_point = 2.0 * math.sqrt(HBAR) * np.array([1.0, 0.0, 0.0, 0.0])
    assert form.value(level_point) == pytest.approx(form.level, abs=1e-12)


def test_ellipsoid_predictor_squeezed_crossing():
    k = np.diag([2.0, 0.5, 0.125, 0.5])
    form = ellipsoid_predictor(CovarianceMatrix(K=k, mean=np.zeros(4)), HBAR)
    # J maps a pure xi_p1 direction onto the q1 covariance entry
    assert form.axis_crossing(np.array([1.0, 0, 0, 0])) == pytest.approx(
        math.sqrt(2.0 / 0.125), abs=1e-12
    )
    assert form.axis_crossing(np.array([0, 0, 1.0, 0])) == pytest.approx(
        math.sqrt(2.0 / 2.0), abs=1e-12
    )


def test_imag_nodal_plane_cases():
    flat = imag_nodal_plane(np.zeros(4))
    assert flat.degenerate
    assert flat.value(np.ones(4)) == 0.0
    plane = imag_nodal_plane(PhasePoint(p=np.array([0.0, 0.0]), q=np.array([1.0, 0.0])))
    assert not plane.degenerate
    # wedge(xi, mean) reduces to xi_p1 <q1>, so the normal is the p1 axis
    assert np.allclose(np.abs(plane.normal), [1.0, 0.0, 0.0, 0.0], atol=1e-12)
    assert plane.value(_chord(0.7, 0.2, 0.4, -0.1)) == pytest.approx(0.7, abs=1e-12)


def test_local_shell_radius(round_shell_spec):
    assert local_shell_radius(round_shell_spec, 4.0, (1.0, 0.0)) == pytest.approx(
        math.sqrt(3.0), abs=1e-12
    )
    walls = box_billiard((0.0, 0.0), (1.0, 1.0))
    assert local_shell_radius(walls, 4.0, (0.5, 0.5)) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(ForbiddenRegionError):
        local_shell_radius(round_shell_spec, 4.0, (3.0, 0.0))
    with pytest.raises(ForbiddenRegionError):
        local_shell_radius(walls, 4.0, (1.5, 0.5))
