"""Bulk invariants: even Chern numbers of band projections and odd,
time-involved Chern numbers of unitary loops, plus a Bloch-space oracle."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, PreconditionError, UnsupportedGeometryError
from .evolution import EvolutionPath, Segment, DrivingProtocol, periodize
from .lattice import IndexSet, LatticeOperator, derivative_array
from .spectral import TWO_PI, BandProjection, band_projection, wrap_phase

QUANTIZATION_THRESHOLD = 0.1
LOOP_TOL = 1e-6
DEFAULT_NODES = 16


@dataclass
class ChernResult:
    raw: complex
    index_set: IndexSet
    metadata: dict = field(default_factory=dict)
    threshold: float = QUANTIZATION_THRESHOLD

    @property
    def quantization_residual(self):
        return abs(self.raw - round(self.raw.real))

    @property
    def quantized(self):
        return self.quantization_residual < self.threshold

    @property
    def value(self):
        return float(round(self.raw.real)) if self.quantized else float(self.raw.real)

    def as_dict(self):
        return {
            "index_set": str(self.index_set),
            "value": self.value,
            "raw_re": float(self.raw.real),
            "raw_im": float(self.raw.imag),
            "quantization_residual": float(self.quantization_residual),
            "quantized": bool(self.quantized),
            **self.metadata,
        }


def _sign(perm):
    s = 1
    p = list(perm)
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            s = -s
    return s


def permutation_trace(first, factors):
    """``sum_rho sign(rho) tr(first @ F[k][rho_1] @ F[k+1][rho_2] ...)``.

    ``factors[k]`` maps an index label to the array used at position ``k``;
    products over shared prefixes are computed once, and the last factor
    enters through an elementwise trace.
    """
    if not factors:
        return complex(np.trace(first))
    labels = list(factors[0])
    n = len(labels)
    total = 0j
    # flat dict, no recursive closure: a self-referencing closure would keep
    # every cached product alive until the cycle collector runs
    cache = {(): first}
    # fixed lexicographic order keeps the summation reproducible
    for perm in itertools.permutations(range(n)):
        key = tuple(labels[i] for i in perm)
        for k in range(1, n):
            if key[:k] not in cache:
                cache[key[:k]] = cache[key[:k - 1]] @ factors[k - 1][key[k - 1]]
        head = cache[key[:-1]]
        last = factors[n - 1][key[-1]]
        total += _sign(perm) * np.sum(head * last.T)
    cache.clear()
    return complex(total)


def _double_factorial(m):
    return int(np.prod(np.arange(m, 0, -2))) if m > 0 else 1


def even_chern(P: BandProjection | LatticeOperator, I: IndexSet, metadata=None) -> ChernResult:
    """``(2 i pi)^{n/2} / (n/2)! * sum_rho sign T(P grad P ... grad P)``."""
    op = P.P if isinstance(P, BandProjection) else P
    g = op.geometry
    if not g.is_torus:
        raise UnsupportedGeometryError("even Chern numbers are evaluated on a torus")
    I.check_even(g.dimension)
    n = len(I)
    if n > 2:
        raise DomainError("only |I| in {0, 2} is supported")
    m = op.matrix
    grads = {j: derivative_array(m, g, j) for j in I}
    raw = permutation_trace(m, [grads] * n) / g.n_sites
    pref = (2j * np.pi) ** (n // 2) / _factorial(n // 2)
    return ChernResult(complex(pref * raw), I, dict(metadata or {}))


def _factorial(k):
    return int(np.prod(np.arange(1, k + 1))) if k > 0 else 1


def odd_prefactor(m):
    return 1j * (1j * np.pi) ** ((m - 1) // 2) / _double_factorial(m)


def _loop_defect(path):
    U = path.checkpoints[-1]
    return float(np.abs(U - np.eye(U.shape[0])).max())


def odd_chern_time(V: EvolutionPath, J: IndexSet, nodes=DEFAULT_NODES, metadata=None) -> ChernResult:
    """Time-involved odd Chern number of a unitary loop.

    The integrand is the alternating product ``(V* - 1) grad V grad V* grad V``
    summed over permutations of ``J``; ``grad_0`` is the analytic time
    derivative and the time integral uses Gauss-Legendre nodes per segment.
    """
    g = V.geometry
    if not g.is_torus:
        raise UnsupportedGeometryError("bulk odd Chern numbers are evaluated on a torus")
    J.check_odd_time(g.dimension)
    m = len(J)
    if m > 3:
        raise DomainError("only |J| in {1, 3} is supported")
    defect = _loop_defect(V)
    if defect > LOOP_TOL:
        raise PreconditionError(f"path is not a loop: |V(2pi) - 1| = {defect:.2e}", defect)
    spatial = [j for j in J if j != 0]
    x, w = np.polynomial.legendre.leggauss(nodes)
    eye = np.eye(g.dim)
    total = 0j
    bp = V.breakpoints
    for a, b in zip(bp[:-1], bp[1:]):
        for xi, wi in zip(x, w):
            t = a + 0.5 * (xi + 1) * (b - a)
            U, dU = V.sample(t)
            Us = U.conj().T
            dV = {0: dU}
            dVs = {0: dU.conj().T}
            for j in spatial:
                dV[j] = derivative_array(U, g, j)
                dVs[j] = derivative_array(Us, g, j)
            factors = [dV if k % 2 == 0 else dVs for k in range(m)]
            total += 0.5 * (b - a) * wi * permutation_trace(Us - eye, factors)
    raw = odd_prefactor(m) * total / TWO_PI / g.n_sites
    meta = {"nodes": nodes, "loop_defect": defect}
    meta.update(metadata or {})
    return ChernResult(complex(raw), J, meta)


def bott_loop(P: BandProjection | LatticeOperator) -> EvolutionPath:
    """The loop ``t -> (1 - P) + e^{it} P``, generated by ``H = -P`` over one period."""
    op = P.P if isinstance(P, BandProjection) else P
    w, Z = np.linalg.eigh(op.matrix)
    w = np.round(w)
    if np.abs(np.linalg.eigvalsh(op.matrix) - w).max() > 1e-8:
        raise PreconditionError("operator is not a projection")
    return EvolutionPath(DrivingProtocol([Segment(op * -1, TWO_PI, (-w, Z))]))


@dataclass
class IdentityCheck:
    name: str
    lhs: float
    rhs: float
    parts: dict = field(default_factory=dict)

    @property
    def residual(self):
        return abs(self.lhs - self.rhs)

    def as_dict(self):
        return {"identity": self.name, "lhs": float(self.lhs), "rhs": float(self.rhs),
                "residual": float(self.residual), **self.parts}


def gap_difference_check(path: EvolutionPath, theta, theta_p, I: IndexSet, nodes=DEFAULT_NODES) -> IdentityCheck:
    """Winding difference across two gaps against the band Chern number in between."""
    if not 0 <= theta < theta_p < TWO_PI:
        raise DomainError("need 0 <= theta < theta' < 2pi")
    J = IndexSet((0,) + tuple(I))
    w0 = odd_chern_time(periodize(path, theta), J, nodes)
    w1 = odd_chern_time(periodize(path, theta_p), J, nodes)
    ch = even_chern(band_projection(path.spectrum, theta, theta_p), I)
    return IdentityCheck("gap_difference", w1.raw.real - w0.raw.real, ch.raw.real,
                         {"winding_theta": w0.raw.real, "winding_theta_p": w1.raw.real,
                          "band_chern": ch.raw.real})


def bloch_chern_oracle(symbol, arc, k_grid=64) -> int:
    """Plaquette (link-variable) Chern number of the bands on an arc.

    ``symbol(k1, k2)`` returns the fiber Floquet matrix at that momentum, with
    translations represented as ``S_j -> exp(-i k_j)``. The sign is chosen so
    that the result agrees with :func:`even_chern` under the position-space
    derivative convention.
    """
    theta, theta_p = arc
    ks = TWO_PI * np.arange(k_grid) / k_grid
    frames = np.empty((k_grid, k_grid), dtype=object)
    rank = None
    for a, k1 in enumerate(ks):
        for b, k2 in enumerate(ks):
            F = np.asarray(symbol(k1, k2), dtype=np.complex128)
            lam, vecs = np.linalg.eig(F)
            ph = wrap_phase(np.angle(lam))
            mask = np.mod(ph - theta, TWO_PI) < np.mod(theta_p - theta, TWO_PI)
            vecs, _ = np.linalg.qr(vecs[:, mask])
            if rank is None:
                rank = int(mask.sum())
            elif rank != int(mask.sum()):
                raise PreconditionError("band rank changes across the Brillouin zone; arc ends are not gaps")
            frames[a, b] = vecs
    if rank == 0:
        return 0

    def link(u, v):
        return np.linalg.det(u.conj().T @ v)

    flux = 0.0
    for a in range(k_grid):
        for b in range(k_grid):
            u00 = frames[a, b]
            u10 = frames[(a + 1) % k_grid, b]
            u11 = frames[(a + 1) % k_grid, (b + 1) % k_grid]
            u01 = frames[a, (b + 1) % k_grid]
            flux += np.angle(link(u00, u10) * link(u10, u11) * link(u11, u01) * link(u01, u00))
    return -int(round(flux / TWO_PI))
