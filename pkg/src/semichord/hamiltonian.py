"""Hamiltonian specifications for 2D bound systems.

Conventions used throughout the package:

* phase-space points are ordered x = (p, q) = (p1, p2, q1, q2),
* the wedge (symplectic) product is  xi ^ x = xi_p . q - xi_q . p,
* Hamiltonians are H = sum_j p_j^2 / (2 m_j) + V(q).

The kinetic-energy normalization H = p'^2 + V used by the energy-shell
kernel routines is reached through ``mass_rescale``, which absorbs the
masses by the symplectic scaling p'_j = p_j / sqrt(2 m_j),
q'_j = sqrt(2 m_j) q_j. Energies, hbar and phase-space areas are
unchanged by it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "PhasePoint",
    "Chord",
    "HamiltonianSpec",
    "nelson",
    "polynomial_spec",
    "box_billiard",
    "eval_h",
    "grad_h",
    "mass_rescale",
    "wedge",
    "symplectic_matrix",
]


@dataclass(frozen=True)
class PhasePoint:
    """A point x = (p, q) of 2D phase space (arrays of length D)."""

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.atleast_1d(np.asarray(self.p, dtype=float)))
        object.__setattr__(self, "q", np.atleast_1d(np.asarray(self.q, dtype=float)))
        if self.p.shape != self.q.shape:
            raise ValueError("p and q must have matching shapes")

    @property
    def dim(self) -> int:
        return self.p.shape[-1]

    def as_vector(self) -> np.ndarray:
        """Concatenated (p, q) vector."""
        return np.concatenate([self.p, self.q], axis=-1)


@dataclass(frozen=True)
class Chord:
    """A phase-space displacement xi = (xi_p, xi_q)."""

    xi_p: np.ndarray
    xi_q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xi_p", np.atleast_1d(np.asarray(self.xi_p, dtype=float)))
        object.__setattr__(self, "xi_q", np.atleast_1d(np.asarray(self.xi_q, dtype=float)))
        if self.xi_p.shape != self.xi_q.shape:
            raise ValueError("xi_p and xi_q must have matching shapes")

    @property
    def dim(self) -> int:
        return self.xi_p.shape[-1]

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.xi_p, self.xi_q], axis=-1)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.xi_p**2) + np.sum(self.xi_q**2)))


def wedge(xi: Chord, x: PhasePoint) -> float:
    """Wedge product xi ^ x = xi_p . q - xi_q . p."""
    return float(np.dot(xi.xi_p, x.q) - np.dot(xi.xi_q, x.p))


def symplectic_matrix(dim: int) -> np.ndarray:
    """J acting on (p, q)-ordered vectors: J (xi_p, xi_q) = (-xi_q, xi_p).

    Satisfies xi ^ x = (J xi) . x for the ordering x = (p, q).
    """
    eye = np.eye(dim)
    zero = np.zeros((dim, dim))
    return np.block([[zero, -eye], [eye, zero]])


@dataclass(frozen=True)
class HamiltonianSpec:
    """H = sum_j p_j^2 / (2 m_j) + V(q) on a D-dimensional configuration space.

    Parameters
    ----------
    masses : tuple of float
        One mass per degree of freedom. masses = (1/2, ..., 1/2) means the
        Hamiltonian is already in the H = p^2 + V normalization.
    potential : callable
        Vectorized V(q1, q2, ...) -> array. Must broadcast over grids.
    grad_potential : callable, optional
        Vectorized gradient, returning a tuple of D arrays. When absent,
        ``grad_h`` falls back to central finite differences.
    label : str
        Stable identifier used in cache headers and output metadata.
    poly_terms : tuple, optional
        Polynomial form of V as ((coeff, (e1, ..., eD)), ...). Enables the
        compiled sampler fast path; must agree with ``potential``.
    """

    masses: Tuple[float, ...]
    potential: Callable[..., np.ndarray]
    grad_potential: Optional[Callable[..., Tuple[np.ndarray, ...]]] = None
    label: str = "custom"
    poly_terms: Optional[Tuple[Tuple[float, Tuple[int, ...]], ...]] = None

    @property
    def dim(self) -> int:
        return len(self.masses)


def _poly_eval(terms, *qs):
    qs = [np.asarray(q, dtype=float) for q in qs]
    out = np.zeros(np.broadcast(*qs).shape)
    for coeff, expts in terms:
        term = np.full_like(out, coeff)
        for qj, ej in zip(qs, expts):
            if ej:
                term = term * qj**ej
        out += term
    return out


def _poly_grad(terms, *qs):
    qs = [np.asarray(q, dtype=float) for q in qs]
    shape = np.broadcast(*qs).shape
    grads = []
    for j in range(len(qs)):
        g = np.zeros(shape)
        for coeff, expts in terms:
            ej = expts[j]
            if ej == 0:
                continue
            term = coeff * ej * qs[j] ** (ej - 1)
            for i, qi in enumerate(qs):
                if i != j and expts[i]:
                    term = term * qi ** expts[i]
            g = g + term
        grads.append(g)
    return tuple(grads)


def polynomial_spec(
    terms: Sequence[Tuple[float, Sequence[int]]],
    masses: Sequence[float] = (1.0, 1.0),
    label: str = "polynomial",
) -> HamiltonianSpec:
    """Build a spec whose potential is a polynomial sum of c * q1^e1 * q2^e2 terms."""
    terms = tuple((float(c), tuple(int(e) for e in ex)) for c, ex in terms)
    dims = {len(ex) for _, ex in terms}
    if len(dims) != 1:
        raise ValueError("all exponent vectors must share one length")
    if dims.pop() != len(masses):
        raise ValueError("exponent vectors must match the number of masses")
    return HamiltonianSpec(
        masses=tuple(float(m) for m in masses),
        potential=lambda *qs: _poly_eval(terms, *qs),
        grad_potential=lambda *qs: _poly_grad(terms, *qs),
        label=label,
        poly_terms=terms,
    )


def nelson(hbar: float = 1.0) -> HamiltonianSpec:
    """The 2D oscillator with a parabolic valley:

        V(q1, q2) = q1^2 / 2 + (q2 - q1^2 / 2)^2,  masses (1, 1).

    Nonnegative, vanishing only at the origin, even in q1 but not in q2.
    hbar is validated here for interface uniformity; it is a runtime
    parameter of the solvers and transforms, not of the Hamiltonian.
    """
    if hbar <= 0:
        raise ValueError("hbar must be positive")
    terms = ((0.5, (2, 0)), (1.0, (0, 2)), (-1.0, (2, 1)), (0.25, (4, 0)))
    spec = polynomial_spec(terms, masses=(1.0, 1.0), label="nelson")
    return spec


def box_billiard(
    lower: Sequence[float] = (0.0, 0.0),
    upper: Sequence[float] = (1.0, 1.0),
    label: str = "box_billiard",
) -> HamiltonianSpec:
    """Hard-wall rectangle: V = 0 inside, +inf outside; H = p^2 + V."""
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if lo.shape != hi.shape or np.any(hi <= lo):
        raise ValueError("need lower < upper per axis")

    def potential(*qs):
        qs = [np.asarray(q, dtype=float) for q in qs]
        inside = np.ones(np.broadcast(*qs).shape, dtype=bool)
        for j, qj in enumerate(qs):
            inside &= (qj >= lo[j]) & (qj <= hi[j])
        v = np.where(inside, 0.0, np.inf)
        return v

    return HamiltonianSpec(
        masses=tuple(0.5 for _ in lo),
        potential=potential,
        grad_potential=lambda *qs: tuple(np.zeros(np.broadcast(*qs).shape) for _ in qs),
        label=label,
    )


def eval_h(spec: HamiltonianSpec, x: PhasePoint) -> float:
    """H(x) = sum_j p_j^2 / (2 m_j) + V(q)."""
    if x.dim != spec.dim:
        raise ValueError("phase point dimension does not match spec")
    kin = float(np.sum(x.p**2 / (2.0 * np.asarray(spec.masses))))
    pot = float(spec.potential(*x.q))
    return kin + pot


_FD_STEP = 1e-6


def grad_h(spec: HamiltonianSpec, x: PhasePoint) -> Tuple[np.ndarray, np.ndarray]:
    """(dH/dp, dH/dq) at x; analytic dV when available, else central differences."""
    if x.dim != spec.dim:
        raise ValueError("phase point dimension does not match spec")
    dp = x.p / np.asarray(spec.masses)
    if spec.grad_potential is not None:
        dq = np.array([float(g) for g in spec.grad_potential(*x.q)])
    else:
        dq = np.empty(spec.dim)
        for j in range(spec.dim):
            h = _FD_STEP * max(1.0, abs(x.q[j]))
            qp = x.q.copy()
            qm = x.q.copy()
            qp[j] += h
            qm[j] -= h
            dq[j] = (float(spec.potential(*qp)) - float(spec.potential(*qm))) / (2.0 * h)
    return dp, dq


@dataclass(frozen=True)
class MassRescaling:
    """Symplectic change of frame taking H to the p'^2 + V' normalization.

    p'_j = p_j / sqrt(2 m_j),  q'_j = sqrt(2 m_j) q_j. Chords transform the
    same way as phase points. Wedge products and energies are invariant.
    """

    rescaled: HamiltonianSpec
    scale: np.ndarray  # sqrt(2 m_j) per axis

    def point_to_rescaled(self, x: PhasePoint) -> PhasePoint:
        return PhasePoint(p=x.p / self.scale, q=x.q * self.scale)

    def point_from_rescaled(self, x: PhasePoint) -> PhasePoint:
        return PhasePoint(p=x.p * self.scale, q=x.q / self.scale)

    def chord_to_rescaled(self, xi: Chord) -> Chord:
        return Chord(xi_p=xi.xi_p / self.scale, xi_q=xi.xi_q * self.scale)

    def chord_from_rescaled(self, xi: Chord) -> Chord:
        return Chord(xi_p=xi.xi_p * self.scale, xi_q=xi.xi_q / self.scale)


def mass_rescale(spec: HamiltonianSpec) -> MassRescaling:
    """Absorb the masses: returns the frame where H = p'^2 + V'(q').

    For masses already equal to 1/2 the transformation is the identity.
    V'(q') = V(q'_1 / s_1, ..., q'_D / s_D) with s_j = sqrt(2 m_j).
    """
    scale = np.sqrt(2.0 * np.asarray(spec.masses, dtype=float))
    old_pot = spec.potential
    old_grad = spec.grad_potential

    def potential(*qs):
        return old_pot(*[np.asarray(q) / s for q, s in zip(qs, scale)])

    grad = None
    if old_grad is not None:

        def grad(*qs):
            gs = old_grad(*[np.asarray(q) / s for q, s in zip(qs, scale)])
            return tuple(g / s for g, s in zip(gs, scale))

    poly = None
    if spec.poly_terms is not None:
        poly = tuple(
            (c * float(np.prod(scale ** (-np.asarray(ex, dtype=float)))), ex)
            for c, ex in spec.poly_terms
        )

    new = HamiltonianSpec(
        masses=tuple(0.5 for _ in spec.masses),
        potential=potential,
        grad_potential=grad,
        label=spec.label + "_rescaled",
        poly_terms=poly,
    )
    return MassRescaling(rescaled=new, scale=scale)
