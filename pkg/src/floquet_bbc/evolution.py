"""Piecewise-constant drives and their exact time-ordered evolutions."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, PreconditionError, UnsupportedGeometryError
from .lattice import LatticeGeometry, LatticeOperator, minimal_image
from .spectral import (TWO_PI, QuasiEnergySpectrum, branch_log, branch_representative,
                       check_in_gap, eigen_unitary, largest_gap)

PERIOD_TOL = 1e-12
HERMITIAN_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Segment:
    """Constant generator ``hamiltonian`` acting for ``duration``.

    ``eig`` optionally carries a known eigendecomposition ``(w, Z)`` with
    ``H = Z diag(w) Z*``, which saves a diagonalization.
    """

    hamiltonian: LatticeOperator
    duration: float
    eig: tuple | None = None


class DrivingProtocol:
    """Ordered piecewise-constant Hamiltonian over one period ``[0, 2pi]``."""

    def __init__(self, segments, steps=None):
        segments = tuple(segments)
        if not segments:
            raise DomainError("a protocol needs at least one segment (period must be 2pi)")
        geometry = segments[0].hamiltonian.geometry
        for n, seg in enumerate(segments):
            if seg.hamiltonian.geometry != geometry:
                raise DomainError(f"segment {n} lives on a different geometry")
            if not seg.duration > 0:
                raise DomainError(f"segment {n} has non-positive duration {seg.duration!r}")
            defect = seg.hamiltonian.hermiticity_defect()
            if defect > HERMITIAN_TOL:
                raise PreconditionError(f"segment {n} Hamiltonian is not self-adjoint ({defect:.2e})", defect)
        total = sum(seg.duration for seg in segments)
        if abs(total - TWO_PI) > PERIOD_TOL:
            raise DomainError(f"segment durations sum to {total!r}, expected 2pi")
        self.segments = segments
        self.geometry: LatticeGeometry = geometry
        # quantum walks keep their step generators H(n) with U(n) = exp(2 pi i H(n))
        self.steps = steps

    def __len__(self):
        return len(self.segments)

    @property
    def breakpoints(self):
        return np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])

    def refined(self, k=2):
        """Same drive with every segment split into ``k`` equal pieces."""
        segs = [Segment(s.hamiltonian, s.duration / k, s.eig) for s in self.segments for _ in range(k)]
        return DrivingProtocol(segs, self.steps)


def trotterize(geometry, hamiltonian_at, n_slices):
    """Sample a smooth drive ``t -> H(t)`` at slice midpoints into a protocol."""
    dt = TWO_PI / n_slices
    segs = []
    for k in range(n_slices):
        H = hamiltonian_at((k + 0.5) * dt)
        if not isinstance(H, LatticeOperator):
            H = LatticeOperator(geometry, H)
        segs.append(Segment(H, dt))
    return DrivingProtocol(segs)


def _eigh(seg: Segment):
    if seg.eig is not None:
        return seg.eig
    H = seg.hamiltonian
    if H.is_diagonal():
        return np.real(np.diagonal(H.matrix)).copy(), None
    return np.linalg.eigh(H.matrix)


class EvolutionPath:
    """Solution of ``i dU/dt = H(t) U``, ``U(0) = 1`` with exact per-segment exponentials.

    At a segment boundary ``t_n`` the sampler returns the right limit, i.e.
    the generator of the segment starting at ``t_n``.
    """

    def __init__(self, protocol: DrivingProtocol):
        self.protocol = protocol
        self.geometry = protocol.geometry
        self._eig = [_eigh(s) for s in protocol.segments]
        self.breakpoints = protocol.breakpoints
        n = self.geometry.dim
        U = np.eye(n, dtype=np.complex128)
        checkpoints = [U]
        self._right = []
        for seg, (w, Z) in zip(protocol.segments, self._eig):
            Y = U if Z is None else Z.conj().T @ U
            self._right.append(Y)
            U = self._propagate(w, Z, Y, seg.duration)
            checkpoints.append(U)
        for c in checkpoints:
            c.flags.writeable = False
        self.checkpoints = checkpoints

    @staticmethod
    def _propagate(w, Z, Y, tau, weight=None):
        phase = np.exp(-1j * w * tau)
        if weight is not None:
            phase = phase * weight
        if Z is None:
            return phase[:, None] * Y
        return (Z * phase) @ Y

    @property
    def floquet(self) -> LatticeOperator:
        return LatticeOperator.wrap(self.geometry, self.checkpoints[-1])

    @cached_property
    def spectrum(self) -> QuasiEnergySpectrum:
        return eigen_unitary(self.floquet)

    def segment_index(self, t):
        if not 0 <= t <= TWO_PI + PERIOD_TOL:
            raise DomainError(f"time {t!r} outside [0, 2pi]")
        n = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return min(n, len(self.protocol) - 1)

    def hamiltonian(self, t) -> LatticeOperator:
        return self.protocol.segments[self.segment_index(t)].hamiltonian

    def sample(self, t, derivative=True):
        """Raw arrays ``(U(t), dU/dt)``; the derivative is ``-i H(t) U(t)``."""
        n = self.segment_index(t)
        tau = t - self.breakpoints[n]
        w, Z = self._eig[n]
        Y = self._right[n]
        if tau == 0:
            U = self.checkpoints[n]
        else:
            U = self._propagate(w, Z, Y, tau)
        if not derivative:
            return U, None
        dU = self._propagate(w, Z, Y, tau, weight=-1j * w)
        return U, dU

    def unitary(self, t) -> LatticeOperator:
        U, _ = self.sample(t, derivative=False)
        return LatticeOperator(self.geometry, U)

    def derivative(self, t) -> LatticeOperator:
        return LatticeOperator.wrap(self.geometry, self.sample(t)[1])


def evolve(p: DrivingProtocol) -> EvolutionPath:
    return EvolutionPath(p)


def time_derivative(path: EvolutionPath, t) -> LatticeOperator:
    """Analytic ``dU/dt = -i H(t) U(t)`` (right limit at segment boundaries)."""
    return path.derivative(t)


class PeriodizedPath(EvolutionPath):
    """Loop ``V_theta``: the drive at double speed, then unwinding with ``-2 h_theta``."""

    def __init__(self, base: EvolutionPath, theta: float):
        s = base.spectrum
        check_in_gap(s, theta)
        hv = -branch_representative(s.phases, theta) / TWO_PI
        h = LatticeOperator.wrap(base.geometry, (s.vectors * hv) @ s.vectors.conj().T)
        segs = []
        for seg, (w, Z) in zip(base.protocol.segments, base._eig):
            segs.append(Segment(seg.hamiltonian * 2, seg.duration / 2, (2 * w, Z)))
        segs.append(Segment(h * -2, np.pi, (-2 * hv, s.vectors)))
        super().__init__(DrivingProtocol(segs))
        self.base = base
        self.theta = theta
        self.h_theta = h

    @property
    def endpoint_defect(self):
        U = self.checkpoints[-1]
        return float(np.abs(U - np.eye(U.shape[0])).max())


def periodize(path: EvolutionPath, theta: float) -> PeriodizedPath:
    return PeriodizedPath(path, theta)


def crossing_mask(geometry: LatticeGeometry, open_axis: int):
    """Matrix elements whose hop wraps around the torus along ``open_axis``.

    An element (m, n) is kept when ``2 |m_a - n_a| < L_a``, i.e. when the
    plain difference is the minimal image; everything else is cut, including
    the ambiguous ``|m_a - n_a| = L_a / 2`` so that self-adjointness survives.
    """
    x = geometry.positions(open_axis)
    diff = x[:, None] - x[None, :]
    return 2 * np.abs(diff) >= geometry.extents[open_axis - 1]


def restrict_half_space(p: DrivingProtocol, open_axis=None, boundary_terms=None) -> DrivingProtocol:
    """Dirichlet restriction of every segment Hamiltonian onto a cylinder.

    ``boundary_terms`` optionally adds one self-adjoint operator per segment
    (strip-supported near the cut) on the resulting cylinder.
    """
    g = p.geometry
    if not g.is_torus:
        raise UnsupportedGeometryError("half-space restriction starts from a torus protocol")
    open_axis = g.dimension if open_axis is None else open_axis
    g.check_axis(open_axis)
    cyl = g.to_cylinder(open_axis)
    cut = crossing_mask(g, open_axis)
    if boundary_terms is not None and len(boundary_terms) != len(p):
        raise DomainError("need exactly one boundary term per segment")
    segs = []
    for n, seg in enumerate(p.segments):
        m = np.where(cut, 0, seg.hamiltonian.matrix)
        if boundary_terms is not None and boundary_terms[n] is not None:
            extra = boundary_terms[n]
            m = m + (extra.matrix if isinstance(extra, LatticeOperator) else np.asarray(extra))
        segs.append(Segment(LatticeOperator.wrap(cyl, m), seg.duration))
    return DrivingProtocol(segs)


@dataclass(frozen=True)
class PrincipalAt:
    """Branch cut of the step logarithm at angle ``theta``; ``None`` picks the largest gap."""

    theta: float | None = None


@dataclass(frozen=True, eq=False)
class GivenGenerator:
    """Explicit self-adjoint ``H(n)`` with ``U(n) = exp(2 pi i H(n))``."""

    H: LatticeOperator


RECONSTRUCTION_TOL = 1e-9


def quantum_walk_protocol(steps) -> DrivingProtocol:
    """Drive whose Floquet operator is ``U(N) ... U(1)``.

    Step ``n`` runs for ``2pi/N`` with generator ``-N H(n)``, where
    ``exp(2 pi i H(n)) = U(n)``; for a principal branch ``H(n) = -h_theta``.
    """
    steps = list(steps)
    if not steps:
        raise DomainError("a quantum walk needs at least one step")
    N = len(steps)
    segs, gens = [], []
    for n, (U, branch) in enumerate(steps, start=1):
        if isinstance(branch, GivenGenerator):
            H = branch.H
            w, Z = np.linalg.eigh(H.matrix)
            rebuilt = (Z * np.exp(2j * np.pi * w)) @ Z.conj().T
            eig = (-N * w, Z)
        else:
            s = eigen_unitary(U)
            theta = largest_gap(s).center if branch is None or branch.theta is None else branch.theta
            h = branch_log(s, theta)
            hv = -branch_representative(s.phases, theta) / TWO_PI
            H = -h
            rebuilt = (s.vectors * np.exp(-2j * np.pi * hv)) @ s.vectors.conj().T
            eig = (N * hv, s.vectors)
        err = float(np.abs(rebuilt - U.matrix).max())
        if err > RECONSTRUCTION_TOL:
            raise PreconditionError(f"step {n}: exp(2 pi i H) differs from U by {err:.2e}", err)
        gens.append(H)
        segs.append(Segment(H * -N, TWO_PI / N, eig))
    return DrivingProtocol(segs, steps=gens)
