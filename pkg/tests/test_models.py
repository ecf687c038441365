import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from floquet_bbc.errors import ConfigError, DomainError
from floquet_bbc.evolution import evolve
from floquet_bbc.lattice import LatticeGeometry, LatticeOperator, build_translation
from floquet_bbc.models import (ChalkerCoddington, Custom, DisorderConfig, DrivenQWZ, available_invariants,
                                build_chalker_coddington, build_protocol, cc_default_cuts, cc_steps,
                                export_protocol, export_walk, load_custom_protocol, protocol_from_document,
                                qwz_hamiltonian, splitmix_uniform)
from floquet_bbc.spectral import TWO_PI, find_gaps

from conftest import BETA_ANOMALOUS, BETA_TRIVIAL

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix_ref(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def uniform_ref(seed, stream, coords):
    """Plain-integer SplitMix64 key absorption."""
    z = mix_ref((seed + GOLDEN * (stream + 1)) & MASK)
    for c in coords:
        z = mix_ref((z + GOLDEN * (c + 1)) & MASK)
    return (z >> 11) * 2.0 ** -53


def test_splitmix_golden_value():
    # first output of the reference SplitMix64 generator seeded with 0
    assert splitmix_uniform(0, 0, np.zeros((1, 0), dtype=int))[0] == (0xE220A8397B1DCDAF >> 11) * 2.0 ** -53


@settings(max_examples=50, deadline=None)
@given(st.integers(0, MASK), st.integers(0, 3), st.lists(st.integers(0, 100), min_size=2, max_size=2))
def test_splitmix_matches_integer_reference(seed, stream, coords):
    assert splitmix_uniform(seed, stream, [coords])[0] == uniform_ref(seed, stream, coords)


def test_disorder_independent_of_lattice_size():
    a = DisorderConfig(7, 0.3).phases(LatticeGeometry.torus((4, 4)), 2)
    b = DisorderConfig(7, 0.3).phases(LatticeGeometry.torus((6, 6)), 2)
    # site (1, 2) sits at index 6 in the 4 x 4 lattice and 8 in the 6 x 6 one
    assert a[6] == b[8]
    assert not np.array_equal(a, DisorderConfig(8, 0.3).phases(LatticeGeometry.torus((4, 4)), 2))
    assert np.all((a >= 0) & (a < TWO_PI))


def test_disorder_validation():
    with pytest.raises(DomainError):
        DisorderConfig(0, -0.1)
    with pytest.raises(DomainError):
        DisorderConfig(-1, 0.1)
    with pytest.raises(DomainError):
        ChalkerCoddington(4.0)


def test_cc_steps_unitary_and_reproducible():
    g = LatticeGeometry.torus((6, 6), 2)
    spec = ChalkerCoddington(BETA_ANOMALOUS, DisorderConfig(3, 0.5))
    steps = cc_steps(spec, g)
    for U in steps:
        assert U.unitarity_defect() < 1e-12
    again = cc_steps(spec, g)
    assert all(np.array_equal(a.matrix, b.matrix) for a, b in zip(steps, again))
    with pytest.raises(DomainError):
        cc_steps(spec, LatticeGeometry.torus((6, 6), 1))


def test_cc_clean_translation_covariant():
    g = LatticeGeometry.torus((6, 6), 2)
    U = evolve(build_protocol(ChalkerCoddington(BETA_ANOMALOUS), g)).floquet.matrix
    for j in (1, 2):
        S = build_translation(g, j).matrix
        assert np.abs(S @ U - U @ S).max() < 1e-10


def test_cc_default_cuts_avoid_step_spectra():
    cuts = cc_default_cuts(BETA_TRIVIAL)
    assert len(cuts) == 4
    steps, p = build_chalker_coddington(ChalkerCoddington(BETA_TRIVIAL), LatticeGeometry.torus((4, 4), 2))
    assert len(p.segments) == 4


def test_cc_gaps_clean_and_weak_disorder():
    g = LatticeGeometry.torus((16, 16), 2)
    clean = evolve(build_protocol(ChalkerCoddington(BETA_TRIVIAL), g))
    assert len(find_gaps(clean.spectrum, 0.3)) == 2
    dirty = evolve(build_protocol(ChalkerCoddington(BETA_TRIVIAL, DisorderConfig(1, 0.2)), g))
    gaps = find_gaps(dirty.spectrum, 0.3)
    assert len(gaps) == 2 and min(gp.width for gp in gaps) > 0.05


@pytest.mark.parametrize("mass", [0.0, 2.0, -2.0])
def test_qwz_rejects_gap_closing_mass(mass):
    with pytest.raises(DomainError):
        DrivenQWZ(mass)


def test_qwz_rescaled_spectrum():
    H = qwz_hamiltonian(DrivenQWZ(1.0), LatticeGeometry.torus((8, 8), 2))
    ev = np.linalg.eigvalsh(H.matrix)
    assert 0.05 < ev[0] and ev[-1] < 0.95
    assert H.hermiticity_defect() < 1e-14


def test_export_segments_round_trip(tmp_path):
    g = LatticeGeometry.torus((4, 4), 2)
    p = build_protocol(DrivenQWZ(1.0), g)
    export_protocol(p, tmp_path / "p.json")
    q = load_custom_protocol(tmp_path / "p.json")
    assert q.geometry == g
    assert [s.duration for s in q.segments] == [s.duration for s in p.segments]
    assert np.array_equal(q.segments[0].hamiltonian.matrix, p.segments[0].hamiltonian.matrix)
    assert np.array_equal(build_protocol(Custom(str(tmp_path / "p.json")), g).segments[0].hamiltonian.matrix,
                          p.segments[0].hamiltonian.matrix)


def test_export_walk_round_trip(tmp_path):
    g = LatticeGeometry.torus((4, 4), 2)
    spec = ChalkerCoddington(BETA_ANOMALOUS, DisorderConfig(5, 0.4))
    steps, p = build_chalker_coddington(spec, g)
    export_walk(steps, tmp_path / "w.json", list(cc_default_cuts(spec.beta)))
    q = load_custom_protocol(tmp_path / "w.json")
    for a, b in zip(p.segments, q.segments):
        assert np.array_equal(a.hamiltonian.matrix, b.hamiltonian.matrix)


def test_protocol_document_errors(tmp_path):
    g = LatticeGeometry.torus((3,))
    with pytest.raises(DomainError):
        protocol_from_document({"geometry": g.header(), "segments": []})
    with pytest.raises(ConfigError, match="segments\\[0\\].hamiltonian"):
        protocol_from_document({"geometry": g.header(), "segments": [{"duration": TWO_PI, "hamiltonian": [[0, 0]]}]})
    with pytest.raises(ConfigError):
        protocol_from_document({"geometry": g.header()})
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError):
        load_custom_protocol(tmp_path / "bad.json")


def test_one_dimensional_walk_file(tmp_path):
    g = LatticeGeometry.torus((6,), 2)
    S = build_translation(g, 1)
    export_walk([S], tmp_path / "w1.json", [np.pi + 0.1])
    q = load_custom_protocol(tmp_path / "w1.json")
    assert q.geometry.dimension == 1
    assert available_invariants(q.geometry) == {"even": [0], "odd": [1]}
    assert np.abs(evolve(q).floquet.matrix - S.matrix).max() < 1e-10
    doc = json.loads((tmp_path / "w1.json").read_text())
    assert doc["steps"][0]["branch"]["principal_at"] == pytest.approx(np.pi + 0.1)
