"""Model zoo: the disordered Chalker-Coddington walk, a constant-drive
Chern insulator, the trivial drive and user protocols from JSON files."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np
import scipy.linalg

from .errors import ConfigError, DomainError, PreconditionError
from .evolution import (DrivingProtocol, GivenGenerator, PrincipalAt, Segment,
                        quantum_walk_protocol)
from .lattice import LatticeGeometry, LatticeOperator, build_translation
from .spectral import TWO_PI, largest_gap, wrap_phase

# --- counter-based disorder ------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z):
    """SplitMix64 finalizer on uint64 arrays (wrapping arithmetic)."""
    z = z.copy()
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z


def splitmix_uniform(seed: int, stream: int, coords) -> np.ndarray:
    """Uniform ``[0, 1)`` deviates keyed on ``(seed, stream, site coordinates)``.

    Each site's value depends only on its key, never on traversal order:
    the key is absorbed one word at a time as ``z <- mix(z + golden * (word + 1))``.
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=np.int64))
    with np.errstate(over="ignore"):
        z = np.full(len(coords), np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
        z = _mix(z + _GOLDEN * np.uint64(stream + 1))
        for col in coords.T:
            z = _mix(z + _GOLDEN * (col.astype(np.uint64) + np.uint64(1)))
    return (z >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


@dataclass(frozen=True)
class DisorderConfig:
    seed: int = 0
    lam: float = 0.0

    def __post_init__(self):
        if self.lam < 0:
            raise DomainError("disorder coupling must be non-negative")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")

    def phases(self, g: LatticeGeometry, field_index: int) -> np.ndarray:
        """Angle field ``phi_k(n)`` uniform on ``[0, 2pi)``; zero when ``lam == 0``."""
        if self.lam == 0:
            return np.zeros(g.n_sites)
        return TWO_PI * splitmix_uniform(self.seed, field_index, g.coords)


# --- model specifications ----------------------------------------------------

@dataclass(frozen=True)
class ChalkerCoddington:
    beta: float
    disorder: DisorderConfig = field(default_factory=DisorderConfig)
    branch_cuts: tuple | None = None
    kind: str = "chalker_coddington"

    def __post_init__(self):
        if not 0 <= self.beta <= np.pi:
            raise DomainError("beta must lie in [0, pi]")
        if self.branch_cuts is not None and len(self.branch_cuts) != 4:
            raise DomainError("branch_cuts needs one angle (or None) per step")


@dataclass(frozen=True)
class DrivenQWZ:
    mass: float
    hopping: float = 1.0
    kind: str = "driven_qwz"

    def __post_init__(self):
        if self.hopping <= 0:
            raise DomainError("hopping scale must be positive")
        if min(abs(abs(self.mass) - c) for c in (0.0, 2 * self.hopping)) < 1e-9:
            raise DomainError(f"mass {self.mass} sits at a gap-closing point (0 or +-2t)")


@dataclass(frozen=True)
class Trivial:
    kind: str = "trivial"


@dataclass(frozen=True)
class Custom:
    path: str
    kind: str = "custom"


# --- Chalker-Coddington -------------------------------------------------------

def _blocks(a, b, c, d):
    n = a.shape[0]
    m = np.zeros((2 * n, 2 * n), dtype=np.complex128)
    m[0::2, 0::2], m[0::2, 1::2], m[1::2, 0::2], m[1::2, 1::2] = a, b, c, d
    return m


def _cc_symbols(beta, k1, k2):
    s, c = np.sin(beta), np.cos(beta)
    e1, e2 = np.exp(-1j * k1), np.exp(-1j * k2)
    U1 = np.array([[s * e1, c], [c, -s * np.conj(e1)]])
    U3 = np.array([[c, s * e2], [s * np.conj(e2), -c]])
    return U1, U3


def cc_default_cuts(beta, k_grid=64):
    """Per-step branch cuts at the largest gap of each clean step, tie to smallest center."""
    ks = TWO_PI * np.arange(k_grid) / k_grid
    ph1, ph3 = [], []
    for k in ks:
        U1, U3 = _cc_symbols(beta, k, k)
        ph1.extend(np.angle(np.linalg.eigvals(U1)))
        ph3.extend(np.angle(np.linalg.eigvals(U3)))

    def center(ph):
        return largest_gap(SimpleNamespace(phases=np.sort(wrap_phase(ph)))).center

    diag = center([0.0])
    return (center(ph1), diag, center(ph3), diag)


def cc_bloch_floquet(beta):
    """Clean Floquet symbol ``k -> U3(k) U1(k)`` on the fiber."""
    def symbol(k1, k2):
        U1, U3 = _cc_symbols(beta, k1, k2)
        return U3 @ U1
    return symbol


def cc_steps(spec: ChalkerCoddington, g: LatticeGeometry):
    """The four step unitaries on the torus ``g`` (fiber 2)."""
    if g.fiber_dim != 2:
        raise DomainError("the Chalker-Coddington walk needs fiber dimension 2")
    if g.dimension != 2:
        raise DomainError("the Chalker-Coddington walk is two-dimensional")
    scalar = LatticeGeometry.torus(g.extents)
    S1 = build_translation(scalar, 1).matrix
    S2 = build_translation(scalar, 2).matrix
    one = np.eye(scalar.dim)
    s, c = np.sin(spec.beta), np.cos(spec.beta)
    U1 = _blocks(s * S1, c * one, c * one, -s * S1.conj().T)
    U3 = _blocks(c * one, s * S2, s * S2.conj().T, -c * one)
    lam = spec.disorder.lam
    phi = [spec.disorder.phases(g, k) for k in range(4)]
    U2 = np.diag(np.ravel(np.column_stack([np.exp(1j * lam * phi[0]), np.exp(1j * lam * phi[1])])))
    U4 = np.diag(np.ravel(np.column_stack([np.exp(1j * lam * phi[2]), np.exp(1j * lam * phi[3])])))
    steps = [LatticeOperator.wrap(g, m) for m in (U1, U2, U3, U4)]
    for n, U in enumerate(steps, start=1):
        d = U.unitarity_defect()
        if d > 1e-12:
            raise PreconditionError(f"step {n} is not unitary ({d:.2e})", d)
    return steps


def build_chalker_coddington(spec: ChalkerCoddington, g: LatticeGeometry):
    """Returns ``(steps, protocol)`` with Floquet operator ``U4 U3 U2 U1``."""
    steps = cc_steps(spec, g)
    cuts = cc_default_cuts(spec.beta)
    if spec.branch_cuts is not None:
        cuts = tuple(d if c is None else float(c) for c, d in zip(spec.branch_cuts, cuts))
    protocol = quantum_walk_protocol([(U, PrincipalAt(t)) for U, t in zip(steps, cuts)])
    return steps, protocol


# --- driven QWZ ---------------------------------------------------------------

_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]])
_SZ = np.diag([1.0 + 0j, -1.0])


def qwz_bloch(spec: DrivenQWZ, k1, k2):
    t = spec.hopping
    return t * (np.sin(k1) * _SX + np.sin(k2) * _SY + np.cos(k1) * _SZ + np.cos(k2) * _SZ) + spec.mass * _SZ


def qwz_scale(spec: DrivenQWZ, k_grid=257):
    ks = TWO_PI * np.arange(k_grid) / k_grid
    k1, k2 = np.meshgrid(ks, ks)
    t = spec.hopping
    e = np.sqrt((t * np.sin(k1)) ** 2 + (t * np.sin(k2)) ** 2 + (spec.mass + t * np.cos(k1) + t * np.cos(k2)) ** 2)
    return 1.01 * e.max()


def _rescale(H, emax):
    return 0.5 * np.eye(H.shape[0]) + 0.45 * H / emax


def qwz_bloch_floquet(spec: DrivenQWZ):
    emax = qwz_scale(spec)

    def symbol(k1, k2):
        return scipy.linalg.expm(-2j * np.pi * _rescale(qwz_bloch(spec, k1, k2), emax))
    return symbol


def qwz_hamiltonian(spec: DrivenQWZ, g: LatticeGeometry) -> LatticeOperator:
    """Rescaled real-space QWZ Hamiltonian with spectrum inside ``(0.05, 0.95)``."""
    if g.fiber_dim != 2 or g.dimension != 2:
        raise DomainError("the QWZ model needs d = 2 and fiber dimension 2")
    scalar = LatticeGeometry.torus(g.extents)
    H = spec.mass * np.kron(np.eye(scalar.dim), _SZ)
    for j, sj in ((1, _SX), (2, _SY)):
        S = build_translation(scalar, j).matrix
        hop = np.kron(S, spec.hopping * (_SZ + 1j * sj) / 2)
        H = H + hop + hop.conj().T
    H = _rescale(H, qwz_scale(spec))
    ev = np.linalg.eigvalsh(H)
    if ev[0] <= 0.05 or ev[-1] >= 0.95:
        raise PreconditionError(f"rescaled QWZ spectrum [{ev[0]:.4f}, {ev[-1]:.4f}] leaves (0.05, 0.95)")
    return LatticeOperator.wrap(g, H)


def build_driven_qwz(spec: DrivenQWZ, g: LatticeGeometry) -> DrivingProtocol:
    return DrivingProtocol([Segment(qwz_hamiltonian(spec, g), TWO_PI)])


def build_trivial(g: LatticeGeometry) -> DrivingProtocol:
    return DrivingProtocol([Segment(LatticeOperator.zeros(g), TWO_PI)])


def bloch_symbol(spec):
    """Clean fiber Floquet symbol for the oracle, or ``None`` if unavailable."""
    if isinstance(spec, ChalkerCoddington):
        if spec.disorder.lam != 0:
            return None
        return cc_bloch_floquet(spec.beta)
    if isinstance(spec, DrivenQWZ):
        return qwz_bloch_floquet(spec)
    if isinstance(spec, Trivial):
        return lambda k1, k2: np.eye(2, dtype=complex)
    return None


def build_protocol(spec, g: LatticeGeometry) -> DrivingProtocol:
    if isinstance(spec, ChalkerCoddington):
        return build_chalker_coddington(spec, g)[1]
    if isinstance(spec, DrivenQWZ):
        return build_driven_qwz(spec, g)
    if isinstance(spec, Trivial):
        return build_trivial(g)
    if isinstance(spec, Custom):
        return load_custom_protocol(spec.path)
    raise DomainError(f"unknown model {spec!r}")


def available_invariants(g: LatticeGeometry):
    """Index-set sizes offered for a geometry: even ``n`` and odd ``m``."""
    if g.dimension == 1:
        return {"even": [0], "odd": [1]}
    return {"even": [0, 2], "odd": [1, 3]}


# --- protocol files -------------------------------------------------------------

def _encode(m):
    flat = np.asarray(m).ravel(order="F")
    return [[float(z.real), float(z.imag)] for z in flat]


def _decode(entries, n, where):
    try:
        a = np.asarray(entries, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: matrix entries must be [re, im] pairs") from exc
    if a.shape != (n * n, 2):
        raise ConfigError(f"{where}: expected {n * n} [re, im] pairs, got shape {a.shape}")
    return (a[:, 0] + 1j * a[:, 1]).reshape((n, n), order="F")


def export_protocol(p: DrivingProtocol, path):
    """Write the segment form of a protocol (column-major ``[re, im]`` entries)."""
    doc = {
        "format": "floquet-bbc protocol v1",
        "geometry": p.geometry.header(),
        "segments": [{"duration": s.duration, "hamiltonian": _encode(s.hamiltonian.matrix)}
                     for s in p.segments],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def export_walk(steps, path, branches=None):
    """Write the step form: unitaries plus optional principal-branch cuts."""
    g = steps[0].geometry
    branches = branches or [None] * len(steps)
    doc = {
        "format": "floquet-bbc protocol v1",
        "geometry": g.header(),
        "steps": [{"unitary": _encode(U.matrix), "branch": {"principal_at": b}}
                  for U, b in zip(steps, branches)],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_custom_protocol(path) -> DrivingProtocol:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read protocol file {path}: {exc}") from exc
    return protocol_from_document(doc)


def protocol_from_document(doc) -> DrivingProtocol:
    if not isinstance(doc, dict) or "geometry" not in doc:
        raise ConfigError("protocol document needs a 'geometry' header")
    try:
        g = LatticeGeometry.from_header(doc["geometry"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"geometry: {exc}") from exc
    n = g.dim
    if "segments" in doc:
        segs = []
        for k, s in enumerate(doc["segments"]):
            where = f"segments[{k}]"
            if "duration" not in s or "hamiltonian" not in s:
                raise ConfigError(f"{where}: needs 'duration' and 'hamiltonian'")
            H = LatticeOperator.wrap(g, _decode(s["hamiltonian"], n, where + ".hamiltonian"))
            segs.append(Segment(H, float(s["duration"])))
        if not segs:
            raise DomainError("segments: empty list (period must be 2pi)")
        return DrivingProtocol(segs)
    if "steps" in doc:
        steps = []
        for k, s in enumerate(doc["steps"]):
            where = f"steps[{k}]"
            if "unitary" not in s:
                raise ConfigError(f"{where}: needs 'unitary'")
            U = LatticeOperator.wrap(g, _decode(s["unitary"], n, where + ".unitary"))
            b = s.get("branch") or {}
            if "generator" in b:
                branch = GivenGenerator(LatticeOperator.wrap(g, _decode(b["generator"], n, where + ".branch.generator")))
            else:
                branch = PrincipalAt(b.get("principal_at"))
            steps.append((U, branch))
        try:
            return quantum_walk_protocol(steps)
        except PreconditionError as exc:
            raise type(exc)(f"steps: {exc}", exc.defect) from exc
    raise ConfigError("protocol document needs 'segments' or 'steps'")
