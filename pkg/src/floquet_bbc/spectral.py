"""Spectral calculus for unitary lattice operators.

Eigenphases live in ``[0, 2pi)``. Every spectral object is assembled from
phase-window membership, so degenerate clusters with arbitrary eigenvector
bases are harmless.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DomainError, GapViolationError, PreconditionError
from .lattice import LatticeGeometry, LatticeOperator

TWO_PI = 2 * np.pi
UNITARITY_TOL = 1e-8


def wrap_phase(phi):
    """Map angles to ``[0, 2pi)``; values within 1e-12 below 2pi become 0."""
    p = np.mod(np.asarray(phi, dtype=float), TWO_PI)
    return np.where(p > TWO_PI - 1e-12, 0.0, p)


def circular_distance(a, b):
    d = np.mod(np.asarray(a) - np.asarray(b), TWO_PI)
    return np.minimum(d, TWO_PI - d)


@dataclass(frozen=True, eq=False)
class QuasiEnergySpectrum:
    phases: np.ndarray
    vectors: np.ndarray
    geometry: LatticeGeometry
    source: LatticeOperator | None = None

    def __len__(self):
        return len(self.phases)

    def eigenvalues(self):
        return np.exp(1j * self.phases)


@dataclass(frozen=True)
class SpectralGap:
    lo: float
    hi: float

    @property
    def width(self):
        return self.hi - self.lo

    @property
    def center(self):
        return float(wrap_phase(0.5 * (self.lo + self.hi)))

    def contains(self, phi):
        return bool(0 < np.mod(phi - self.lo, TWO_PI) < self.width)


@dataclass(frozen=True, eq=False)
class BandProjection:
    P: LatticeOperator
    arc: tuple[float, float]
    rank: int


def eigen_unitary(U: LatticeOperator) -> QuasiEnergySpectrum:
    defect = U.unitarity_defect()
    if defect > UNITARITY_TOL:
        raise PreconditionError(f"operator is not unitary: |U*U - 1| = {defect:.3e}", defect)
    m = U.matrix
    if U.is_diagonal():
        lam = np.diagonal(m).copy()
        vecs = np.eye(len(lam), dtype=np.complex128)
    else:
        # complex Schur form of a normal matrix is diagonal with unitary Z
        T, vecs = scipy.linalg.schur(m, output="complex")
        lam = np.diagonal(T).copy()
    phases = wrap_phase(np.angle(lam))
    order = np.argsort(phases, kind="stable")
    return QuasiEnergySpectrum(phases[order], vecs[:, order], U.geometry, U)


def find_gaps(s: QuasiEnergySpectrum, min_width: float) -> list[SpectralGap]:
    """All maximal spectrum-free arcs of width at least ``min_width``, by ascending center."""
    if min_width <= 0:
        raise DomainError("min_width must be positive")
    ph = s.phases
    upper = np.append(ph[1:], ph[0] + TWO_PI)
    gaps = [SpectralGap(float(a), float(b)) for a, b in zip(ph, upper) if b - a >= min_width]
    return sorted(gaps, key=lambda g: g.center)


def largest_gap(s: QuasiEnergySpectrum) -> SpectralGap:
    """Widest gap; ties within 1e-9 go to the smallest center."""
    gaps = find_gaps(s, 1e-300)
    widest = max(g.width for g in gaps)
    return min((g for g in gaps if g.width > widest - 1e-9), key=lambda g: g.center)


def gap_tolerance(width):
    return max(1e-8, 1e-3 * width)


def check_in_gap(s: QuasiEnergySpectrum, theta: float):
    """Raise unless ``e^{i theta}`` is safely inside a spectral gap."""
    ph = s.phases
    t = float(wrap_phase(theta))
    k = np.searchsorted(ph, t)
    below = ph[k - 1] if k > 0 else ph[-1] - TWO_PI
    above = ph[k] if k < len(ph) else ph[0] + TWO_PI
    dist = min(t - below, above - t)
    if dist <= gap_tolerance(above - below):
        raise GapViolationError(
            f"angle {theta:.6g} lies within {dist:.3e} of the spectrum", dist)


def _arc_mask(phases, theta, theta_p):
    return np.mod(phases - theta, TWO_PI) < theta_p - theta


def band_projection(s: QuasiEnergySpectrum, theta: float, theta_p: float) -> BandProjection:
    """Spectral projection onto eigenphases on the counterclockwise arc ``(theta, theta_p)``."""
    if not 0 < theta_p - theta <= TWO_PI:
        raise DomainError("need theta < theta' <= theta + 2pi")
    check_in_gap(s, theta)
    check_in_gap(s, theta_p)
    mask = _arc_mask(s.phases, theta, theta_p)
    V = s.vectors[:, mask]
    P = LatticeOperator.wrap(s.geometry, V @ V.conj().T)
    return BandProjection(P, (theta, theta_p), int(mask.sum()))


def branch_representative(phases, theta):
    """Representative of each phase in ``(theta - 2pi, theta]``."""
    return theta - np.mod(theta - phases, TWO_PI)


def branch_log(s: QuasiEnergySpectrum, theta: float) -> LatticeOperator:
    """Effective Hamiltonian ``h_theta = -log_theta(U) / (2 pi i)``, so ``U = exp(-2 pi i h)``."""
    check_in_gap(s, theta)
    h = -branch_representative(s.phases, theta) / TWO_PI
    return _assemble(s, h.astype(np.complex128))


def unitary_function(s: QuasiEnergySpectrum, f) -> LatticeOperator:
    """``f(U) = V f(D) V*`` with ``f`` evaluated on the eigenphases."""
    vals = np.broadcast_to(np.asarray(f(s.phases), dtype=np.complex128), s.phases.shape)
    return _assemble(s, vals)


def _assemble(s, vals):
    V = s.vectors
    return LatticeOperator.wrap(s.geometry, (V * vals) @ V.conj().T)


def _ramp(x, w):
    x = np.clip(x, -w / 2, w / 2)
    return 0.5 + x / w + np.sin(TWO_PI * x / w) / TWO_PI


def _bump(x, w):
    return np.where(np.abs(x) < w / 2, (2 / w) * np.cos(np.pi * x / w) ** 2, 0.0)


def _signed(x):
    """Angle offset folded into ``(-pi, pi]``."""
    return np.pi - np.mod(np.pi - x, TWO_PI)


@dataclass(frozen=True)
class GapFunction:
    """Smooth gap functions built from raised-cosine bumps.

    ``kind == "bump"``: ``derivative`` is a unit-integral bump of width
    ``width`` centered at ``theta``; ``value`` is its cumulative ramp, which
    jumps by one at ``theta + pi`` (so only ``exp(-2 pi i G)`` is continuous).

    ``kind == "step_pair"``: ``value`` rises from 0 to 1 across the bump at
    ``theta`` and falls back across the bump at ``theta_p``; the derivative is
    the difference of the two bumps.
    """

    kind: str
    theta: float
    width: float
    theta_p: float | None = None
    width_p: float | None = None

    def __post_init__(self):
        if self.kind not in ("bump", "step_pair"):
            raise DomainError(f"unknown gap function kind {self.kind!r}")
        if not 0 < self.width < TWO_PI:
            raise DomainError("bump width must lie in (0, 2pi)")
        if self.kind == "step_pair":
            if self.theta_p is None or self.width_p is None or self.width_p <= 0:
                raise DomainError("step_pair needs theta_p and width_p")
            sp = np.mod(self.theta_p - self.theta, TWO_PI)
            if sp - self.width_p / 2 < self.width / 2 or sp + self.width_p / 2 > TWO_PI - self.width / 2:
                raise DomainError("the two ramps of a step pair overlap")

    @classmethod
    def bump(cls, gap: SpectralGap, theta=None, fraction=0.8):
        theta = gap.center if theta is None else float(theta)
        if not gap.contains(theta):
            raise GapViolationError(f"bump center {theta:.6g} is outside the gap")
        return cls("bump", theta, _width_in(gap, theta, fraction))

    @classmethod
    def step_pair(cls, gap: SpectralGap, gap_p: SpectralGap, fraction=0.8, theta=None, theta_p=None):
        theta = gap.center if theta is None else float(theta)
        theta_p = gap_p.center if theta_p is None else float(theta_p)
        return cls("step_pair", theta, _width_in(gap, theta, fraction),
                   theta_p, _width_in(gap_p, theta_p, fraction))

    def supports(self):
        """Arcs ``(lo, hi)`` carrying the derivative."""
        arcs = [(self.theta - self.width / 2, self.theta + self.width / 2)]
        if self.kind == "step_pair":
            arcs.append((self.theta_p - self.width_p / 2, self.theta_p + self.width_p / 2))
        return arcs

    def _unrolled(self, phi):
        x = np.mod(np.asarray(phi, dtype=float) - self.theta, TWO_PI)
        sp = np.mod(self.theta_p - self.theta, TWO_PI)
        lo = sp + self.width_p / 2
        split = lo + (TWO_PI - self.width / 2 - lo) / 2
        return np.where(x > split, x - TWO_PI, x), sp

    def value(self, phi):
        if self.kind == "bump":
            return _ramp(_signed(np.asarray(phi, dtype=float) - self.theta), self.width)
        x, sp = self._unrolled(phi)
        return _ramp(x, self.width) - _ramp(x - sp, self.width_p)

    def derivative(self, phi):
        if self.kind == "bump":
            return _bump(_signed(np.asarray(phi, dtype=float) - self.theta), self.width)
        x, sp = self._unrolled(phi)
        return _bump(x, self.width) - _bump(x - sp, self.width_p)

    def check_against(self, s: QuasiEnergySpectrum):
        """Raise if any eigenphase of ``s`` falls inside the derivative's support."""
        for lo, hi in self.supports():
            inside = np.mod(s.phases - lo, TWO_PI) < hi - lo
            if inside.any():
                raise GapViolationError(
                    f"gap function support ({lo:.4g}, {hi:.4g}) meets {int(inside.sum())} eigenphases")


def _width_in(gap, theta, fraction):
    if not 0 < fraction <= 1:
        raise DomainError("width fraction must lie in (0, 1]")
    room = min(np.mod(theta - gap.lo, TWO_PI), gap.hi - gap.lo - np.mod(theta - gap.lo, TWO_PI))
    if room <= 0:
        raise GapViolationError("bump center sits on a gap edge")
    # cos^2 bump of width w vanishes at +-w/2, so w = 2*room*fraction stays inside
    return 2 * room * fraction


def gap_function_eval(gf: GapFunction, phi, derivative=False):
    return gf.derivative(phi) if derivative else gf.value(phi)
