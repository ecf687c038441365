"""Edge invariants on a cylinder: exponential-map unitaries, their odd Chern
numbers and the edge-channel count, with bulk-boundary consistency checks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GapViolationError, UnsupportedGeometryError
from .evolution import EvolutionPath, periodize
from .invariants_bulk import (DEFAULT_NODES, ChernResult, IdentityCheck, even_chern,
                              odd_chern_time, odd_prefactor, permutation_trace)
from .lattice import IndexSet, LatticeGeometry, LatticeOperator, derivative_array
from .spectral import (TWO_PI, GapFunction, QuasiEnergySpectrum, SpectralGap,
                       band_projection, find_gaps, unitary_function)

DEEP_BULK_TOL = 1e-6


def deep_bulk_mask(g: LatticeGeometry):
    """Basis vectors at least a quarter of the open extent away from both edges."""
    if g.is_torus:
        raise UnsupportedGeometryError("edge quantities need a cylinder geometry")
    L = g.extents[g.open_axis - 1]
    x = g.positions(g.open_axis)
    q = L // 4
    return (x >= q) & (x < L - q)


def deep_bulk_defect(A: np.ndarray, g: LatticeGeometry) -> float:
    """Largest row 2-norm of ``A`` over deep-bulk rows."""
    rows = A[deep_bulk_mask(g)]
    return float(np.sqrt((np.abs(rows) ** 2).sum(axis=1)).max()) if len(rows) else 0.0


def gap_at(s: QuasiEnergySpectrum, theta) -> SpectralGap:
    """The spectral gap of ``s`` containing the angle ``theta``."""
    for gap in find_gaps(s, 1e-300):
        if gap.contains(theta):
            return gap
    raise GapViolationError(f"angle {theta:.6g} is not inside a spectral gap")


@dataclass(frozen=True, eq=False)
class EdgeUnitary:
    W: LatticeOperator
    defect: float
    window: str = "lower"


def exp_map_unitary(uhat: QuasiEnergySpectrum, gf: GapFunction, bulk: QuasiEnergySpectrum | None = None,
                    window="lower") -> EdgeUnitary:
    """``exp(-2 pi i G(U_hat))`` for a gap function ``G``.

    With ``bulk`` given, the derivative support of ``G`` is checked to avoid
    the bulk quasi-energy spectrum.
    """
    if bulk is not None:
        gf.check_against(bulk)
    W = unitary_function(uhat, lambda ph: np.exp(-2j * np.pi * gf.value(ph)))
    g = W.geometry
    defect = deep_bulk_defect(W.matrix - np.eye(g.dim), g)
    return EdgeUnitary(W, defect, window)


def _edge_axes(g, J):
    if g.is_torus:
        raise UnsupportedGeometryError("edge invariants need a cylinder geometry")
    for j in J:
        if j == 0 or j == g.open_axis:
            raise DomainError(f"edge index sets use periodic axes only, got {J}")
        g.check_axis(j)


def _window_trace(A, B, g, window):
    """Boundary trace of ``A @ B`` restricted to the window, without forming the product."""
    mask = g.window_mask(window)
    diag = np.sum(A[mask, :] * B[:, mask].T, axis=1)
    length = np.prod([g.extents[j - 1] for j in g.periodic_axes()])
    return complex(diag.sum() / length)


def edge_odd_chern(W: EdgeUnitary | LatticeOperator, J: IndexSet, window=None) -> ChernResult:
    """``i T~((W* - 1) grad_1 W)`` (and its permutation sum for larger ``J``)."""
    if isinstance(W, EdgeUnitary):
        window = W.window if window is None else window
        defect, W = W.defect, W.W
    else:
        defect = None
        window = window or "lower"
    g = W.geometry
    _edge_axes(g, J)
    m = len(J)
    if m % 2 == 0:
        raise DomainError("edge odd Chern numbers need |J| odd")
    if m > 1:
        raise DomainError("only |J| = 1 is supported")
    Ws = W.matrix.conj().T
    j = J.entries[0]
    raw = odd_prefactor(m) * _window_trace(Ws - np.eye(g.dim), derivative_array(W.matrix, g, j), g, window)
    meta = {"window": window}
    if defect is not None:
        meta["deep_bulk_defect"] = defect
        meta["reliable"] = bool(defect < DEEP_BULK_TOL)
    return ChernResult(complex(raw), J, meta)


def edge_channel_count(uhat: QuasiEnergySpectrum, gap: SpectralGap, theta=None, fraction=0.8,
                       window="lower", axis=None) -> ChernResult:
    """Oriented edge-band count ``-2 pi i T~(G'(U_hat) U_hat* grad U_hat)``.

    ``gap`` is the bulk gap hosting ``theta``; ``G'`` is a unit-mass bump of
    width ``fraction`` times the room available around ``theta``.
    """
    g = uhat.geometry
    if g.dimension != 2:
        raise DomainError("the edge-channel count is defined for d = 2")
    axis = g.periodic_axes()[0] if axis is None else axis
    _edge_axes(g, (axis,))
    gf = GapFunction.bump(gap, theta, fraction)
    V = uhat.vectors
    e = np.exp(-1j * uhat.phases)
    A = (V * (gf.derivative(uhat.phases) * e)) @ V.conj().T
    U = uhat.source.matrix if uhat.source is not None else (V * np.conj(e)) @ V.conj().T
    raw = -2j * np.pi * _window_trace(A, derivative_array(U, g, axis), g, window)
    defect = deep_bulk_defect(unitary_function(uhat, gf.derivative).matrix, g)
    meta = {"window": window, "theta": gf.theta, "bump_width": gf.width,
            "deep_bulk_defect": defect, "reliable": bool(defect < DEEP_BULK_TOL)}
    return ChernResult(complex(raw), IndexSet((axis,)), meta)


def _gaps(bulk: EvolutionPath, theta, theta_p):
    s = bulk.spectrum
    return gap_at(s, theta), gap_at(s, theta_p)


def bbc_band_check(bulk: EvolutionPath, edge: EvolutionPath, theta, theta_p, fraction=0.8,
                   window="lower") -> IdentityCheck:
    """Band Chern number between two gaps against ``N_theta - N_theta'``."""
    gap, gap_p = _gaps(bulk, theta, theta_p)
    ch = even_chern(band_projection(bulk.spectrum, theta, theta_p), IndexSet((1, 2)))
    n0 = edge_channel_count(edge.spectrum, gap, theta, fraction, window)
    n1 = edge_channel_count(edge.spectrum, gap_p, theta_p, fraction, window)
    return IdentityCheck("band_edge", ch.raw.real, n0.raw.real - n1.raw.real,
                         {"band_chern": ch.raw.real, "N_theta": n0.raw.real, "N_theta_p": n1.raw.real})


def exp_map_check(bulk: EvolutionPath, edge: EvolutionPath, theta, theta_p, fraction=0.8,
                  window="lower") -> IdentityCheck:
    """Band Chern number against the edge winding of ``exp(-2 pi i G(U_hat))``."""
    gap, gap_p = _gaps(bulk, theta, theta_p)
    ch = even_chern(band_projection(bulk.spectrum, theta, theta_p), IndexSet((1, 2)))
    gf = GapFunction.step_pair(gap, gap_p, fraction, theta, theta_p)
    W = exp_map_unitary(edge.spectrum, gf, bulk.spectrum, window)
    w = edge_odd_chern(W, IndexSet((edge.geometry.periodic_axes()[0],)))
    return IdentityCheck("exp_map", ch.raw.real, w.raw.real,
                         {"band_chern": ch.raw.real, "edge_winding": w.raw.real,
                          "deep_bulk_defect": W.defect})


def bbc_anomalous_check(bulk: EvolutionPath, edge: EvolutionPath, theta, fraction=0.8,
                        window="lower", nodes=DEFAULT_NODES) -> IdentityCheck:
    """Bulk winding of ``V_theta`` against the edge-channel count in the same gap."""
    gap = gap_at(bulk.spectrum, theta)
    w = odd_chern_time(periodize(bulk, theta), IndexSet((0, 1, 2)), nodes)
    n = edge_channel_count(edge.spectrum, gap, theta, fraction, window)
    return IdentityCheck("anomalous_edge", w.raw.real, n.raw.real,
                         {"winding": w.raw.real, "N_theta": n.raw.real})
