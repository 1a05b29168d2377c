"""Phase-space primitives: wedge algebra, Hamiltonian specs, mass frames."""

import numpy as np
import pytest

from semichord import (
    Chord,
    PhasePoint,
    box_billiard,
    eval_h,
    grad_h,
    mass_rescale,
    nelson,
    polynomial_spec,
    symplectic_matrix,
    wedge,
)


def test_wedge_hand_value():
    xi = Chord(xi_p=np.array([1.0, 2.0]), xi_q=np.array([3.0, 4.0]))
    x = PhasePoint(p=np.array([5.0, 6.0]), q=np.array([7.0, 8.0]))
    # xi_p.q - xi_q.p = (7 + 16) - (15 + 24)
    assert wedge(xi, x) == pytest.approx(-16.0, abs=1e-14)


def test_wedge_antisymmetry():
    rng = np.random.default_rng(0)
    for _ in range(5):
        a, b, c, d = rng.normal(size=(4, 2))
        fwd = wedge(Chord(xi_p=a, xi_q=b), PhasePoint(p=c, q=d))
        rev = wedge(Chord(xi_p=c, xi_q=d), PhasePoint(p=a, q=b))
        assert fwd == pytest.approx(-rev, abs=1e-12)


def test_wedge_matches_symplectic_matrix():
    j = symplectic_matrix(2)
    assert j.shape == (4, 4)
    assert np.array_equal(j.T, -j)
    assert np.allclose(j @ j, -np.eye(4))
    rng = np.random.default_rng(1)
    for _ in range(5):
        xi = Chord(xi_p=rng.normal(size=2), xi_q=rng.normal(size=2))
        x = PhasePoint(p=rng.normal(size=2), q=rng.normal(size=2))
        # documented identity: wedge(xi, x) = (J xi) . x
        assert wedge(xi, x) == pytest.approx(
            float((j @ xi.as_vector()) @ x.as_vector()), abs=1e-12
        )


def test_phase_point_validation():
    with pytest.raises(ValueError):
        PhasePoint(p=np.zeros(2), q=np.zeros(3))
    with pytest.raises(ValueError):
        Chord(xi_p=np.zeros(1), xi_q=np.zeros(2))


def test_well_spec_hand_values():
    spec = nelson(hbar=1.0)
    assert spec.masses == (1.0, 1.0)
    assert spec.poly_terms is not None
    x = PhasePoint(p=np.array([1.0, 2.0]), q=np.array([3.0, 4.0]))
    # T = (1 + 4)/2, V = 0.5*9 + (4 - 4.5)^2
    assert eval_h(spec, x) == pytest.approx(7.25, abs=1e-13)
    assert float(spec.potential(0.0, 0.0)) == 0.0
    # even in q1, not in q2
    assert float(spec.potential(1.3, 0.7)) == pytest.approx(
        float(spec.potential(-1.3, 0.7)), abs=1e-14
    )
    assert float(spec.potential(1.3, 0.7)) != pytest.approx(
        float(spec.potential(1.3, -0.7)), abs=1e-6
    )
    with pytest.raises(ValueError):
        nelson(hbar=0.0)


def test_grad_h_matches_finite_differences():
    spec = nelson(hbar=1.0)
    rng = np.random.default_rng(2)
    for _ in range(4):
        x = PhasePoint(p=rng.normal(size=2), q=rng.normal(size=2))
        dp, dq = grad_h(spec, x)
        h = 1e-6
        for j in range(2):
            pp = x.p.copy()
            pm = x.p.copy()
            pp[j] += h
            pm[j] -= h
            num = (eval_h(spec, PhasePoint(pp, x.q)) - eval_h(spec, PhasePoint(pm, x.q))) / (2 * h)
            assert dp[j] == pytest.approx(num, abs=1e-7)
            qp = x.q.copy()
            qm = x.q.copy()
            qp[j] += h
            qm[j] -= h
            num = (eval_h(spec, PhasePoint(x.p, qp)) - eval_h(spec, PhasePoint(x.p, qm))) / (2 * h)
            assert dq[j] == pytest.approx(num, abs=1e-5, rel=1e-6)


def test_polynomial_spec_matches_manual_sum():
    terms = [(0.7, (2, 0)), (-0.3, (1, 1)), (0.05, (0, 4))]
    spec = polynomial_spec(terms, masses=(2.0, 0.5), label="mixed")
    assert spec.label == "mixed"
    rng = np.random.default_rng(3)
    q = rng.normal(size=2)
    manual = 0.7 * q[0] ** 2 - 0.3 * q[0] * q[1] + 0.05 * q[1] ** 4
    assert float(spec.potential(*q)) == pytest.approx(manual, abs=1e-13)
    p = rng.normal(size=2)
    x = PhasePoint(p=p, q=q)
    assert eval_h(spec, x) == pytest.approx(
        p[0] ** 2 / 4.0 + p[1] ** 2 + manual, abs=1e-12
    )
    # gradient closes with the evaluation
    dp, dq = grad_h(spec, x)
    assert dq[0] == pytest.approx(1.4 * q[0] - 0.3 * q[1], abs=1e-12)
    assert dq[1] == pytest.approx(-0.3 * q[0] + 0.2 * q[1] ** 3, abs=1e-12)


def test_polynomial_spec_validation():
    with pytest.raises(ValueError):
        polynomial_spec([(1.0, (2, 0)), (1.0, (2,))])
    with pytest.raises(ValueError):
        polynomial_spec([(1.0, (2, 0, 0))], masses=(1.0, 1.0))


def test_box_billiard_walls():
    spec = box_billiard((0.0, 0.0), (2.0, 1.0))
    assert spec.masses == (0.5, 0.5)
    v = spec.potential(np.array([0.5, 2.5]), np.array([0.5, 0.5]))
    assert v[0] == 0.0
    assert np.isinf(v[1])
    with pytest.raises(ValueError):
        box_billiard((0.0, 0.0), (0.0, 1.0))


def test_mass_rescale_frame():
    spec = nelson(hbar=1.0)
    resc = mass_rescale(spec)
    # unit masses: p shrinks by sqrt(2), q grows by sqrt(2)
    x = PhasePoint(p=np.array([1.0, 0.0]), q=np.array([0.0, 0.0]))
    xr = resc.point_to_rescaled(x)
    assert xr.p[0] == pytest.approx(1.0 / np.sqrt(2.0), abs=1e-14)
    rng = np.random.default_rng(4)
    for _ in range(4):
        x = PhasePoint(p=rng.normal(size=2), q=rng.normal(size=2))
        xi = Chord(xi_p=rng.normal(size=2), xi_q=rng.normal(size=2))
        xr = resc.point_to_rescaled(x)
        xir = resc.chord_to_rescaled(xi)
        # energy and wedge are invariants of the frame change
        assert eval_h(resc.rescaled, xr) == pytest.approx(eval_h(spec, x), rel=1e-12)
        assert wedge(xir, xr) == pytest.approx(wedge(xi, x), rel=1e-12, abs=1e-12)
        back = resc.point_from_rescaled(xr)
        assert np.allclose(back.p, x.p) and np.allclose(back.q, x.q)
        backc = resc.chord_from_rescaled(xir)
        assert np.allclose(backc.xi_p, xi.xi_p) and np.allclose(backc.xi_q, xi.xi_q)
    # the rescaled frame has masses 1/2, i.e. H = p'^2 + V'
    assert tuple(resc.rescaled.masses) == (0.5, 0.5)
