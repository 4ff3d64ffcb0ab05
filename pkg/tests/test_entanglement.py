import numpy as np
import pytest

from edkit.basis import Sector, enumerate_sector
from edkit.entanglement import (
    DegenerateFermiLevelError,
    EntanglementError,
    decade_histogram,
    degenerate_average,
    entropy_both_sides,
    entropy_bits,
    free_fermion_oracle,
    schmidt_spectrum,
    sector_table,
)
from edkit.hamiltonian import ModelSpec, build_model
from edkit.lattice import Bipartition, Geometry, build_chain, half_cut
from edkit.solver import DegenerateManifold, dense_spectrum, group_degenerate, lanczos_lowest


def _ground(geometry, spec, sector):
    h = build_model(geometry, spec, sector)
    eig = dense_spectrum(h) if h.dim <= 5000 else lanczos_lowest(h, k=1, tol=1e-11)
    return eig.vectors[:, 0], h.basis


def test_heisenberg_singlet_maximally_entangled():
    g = build_chain(2)
    v, basis = _ground(g, ModelSpec(kind="heisenberg"), Sector(None, 0))
    spec = schmidt_spectrum(v, basis, half_cut(g, 1))
    assert np.allclose(np.sort(spec.weights), [0.5, 0.5], atol=1e-12)
    assert spec.total_entropy == pytest.approx(1.0, abs=1e-12)


def test_product_state_zero_entropy():
    g = build_chain(2)
    b = enumerate_sector(g, "hubbard", Sector(2, 2))
    v = np.array([1.0])
    spec = schmidt_spectrum(v, b, half_cut(g, 1))
    assert spec.total_entropy == pytest.approx(0.0, abs=1e-14)
    rows = sector_table(v, b, half_cut(g, 1))
    assert len(rows) == 1 and rows[0][1] == pytest.approx(0.0, abs=1e-14)


def test_free_orbital_two_site():
    g = build_chain(2)
    v, basis = _ground(g, ModelSpec(kind="hubbard", t=-1.0, U=0.0), Sector(2, 0))
    spec = schmidt_spectrum(v, basis, half_cut(g, 1))
    assert np.allclose(np.sort(spec.weights), [0.25] * 4, atol=1e-12)
    assert spec.total_entropy == pytest.approx(2.0, abs=1e-12)


def test_unnormalized_rejected():
    g = build_chain(2)
    b = enumerate_sector(g, "hubbard", Sector(2, 2))
    with pytest.raises(EntanglementError, match="normalized"):
        schmidt_spectrum(np.array([2.0]), b, half_cut(g, 1))


def test_both_sides_equal_and_same_nonzero_weights():
    g = build_chain(6)
    v, basis = _ground(g, ModelSpec(kind="hubbard", t=-1.0, U=4.0), Sector(6, 0))
    for left in (2, 3, 4):
        cut = half_cut(g, left)
        sl, sr = entropy_both_sides(v, basis, cut)
        assert abs(sl - sr) < 1e-10
        wl = schmidt_spectrum(v, basis, cut).weights
        wr = schmidt_spectrum(v, basis, Bipartition(cut.right, cut.left)).weights
        m = min(len(wl), len(wr))
        assert np.abs(wl[:m] - wr[:m]).max() < 1e-10


def test_sector_table_sums_and_order():
    g = build_chain(6)
    v, basis = _ground(g, ModelSpec(kind="hubbard", t=-1.0, U=4.0), Sector(6, 0))
    spec = schmidt_spectrum(v, basis, half_cut(g, 3))
    rows = spec.sector_entropies()
    values = [val for _, val in rows]
    assert values == sorted(values, reverse=True)
    assert sum(values) == pytest.approx(spec.total_entropy, abs=1e-10)
    assert sum(s.weights.sum() for s in spec.sectors) == pytest.approx(1.0, abs=1e-10)


def test_sector_conjugation_symmetry():
    # half-filled eigenstates: electron-hole and spin-inversion conjugate
    # sectors carry equal partial entropies
    g = build_chain(6)
    v, basis = _ground(g, ModelSpec(kind="hubbard", t=-1.0, U=4.0), Sector(6, 0))
    rows = dict(sector_table(v, basis, half_cut(g, 3)))
    for (tm, n), val in rows.items():
        assert rows[(-tm, n)] == pytest.approx(val, abs=1e-8)
        assert rows[(tm, 6 - n)] == pytest.approx(val, abs=1e-8)


def test_decade_histogram_examples():
    assert decade_histogram(np.array([0.5, 0.5])).tolist()[:3] == [2, 0, 0]
    h = decade_histogram(np.array([0.9, 0.05, 0.05]))
    assert h[0] == 1 and h[1] == 2 and h[2:].sum() == 0
    # exact powers of ten fall in the lower bin; w = 1 is clamped to bin 0
    h = decade_histogram(np.array([1.0, 0.1, 0.01]))
    assert h[0] == 2 and h[1] == 1
    # numerical zeros are dropped
    assert decade_histogram(np.array([1e-17])).sum() == 0
    assert decade_histogram(np.array([0.5, 1e-16, 1e-17])).sum() == 2


def test_global_phase_invariance():
    g = build_chain(4)
    v, basis = _ground(g, ModelSpec(kind="hubbard", t=-1.0, U=4.0), Sector(4, 0))
    cut = half_cut(g, 2)
    s1 = schmidt_spectrum(v, basis, cut).total_entropy
    s2 = schmidt_spectrum(-v, basis, cut).total_entropy
    assert abs(s1 - s2) < 1e-14


def test_entropy_bound():
    g = build_chain(4)
    v, basis = _ground(g, ModelSpec(kind="hubbard", t=-1.0, U=0.0), Sector(4, 0))
    for left in (1, 2, 3):
        spec = schmidt_spectrum(v, basis, half_cut(g, left))
        assert spec.total_entropy <= spec.entropy_bound + 1e-12
        assert spec.entropy_bound == pytest.approx(
            np.log2(min(4**left, 4 ** (4 - left))), abs=1e-12
        )


def test_degenerate_average_single_state_matches_schmidt():
    g = build_chain(4)
    v, basis = _ground(g, ModelSpec(kind="hubbard", t=-1.0, U=4.0), Sector(4, 0))
    man = DegenerateManifold(0.0, v[:, None])
    cut = half_cut(g, 2)
    s_av = degenerate_average(man, basis, cut)
    s_direct = schmidt_spectrum(v, basis, cut)
    assert s_av.total_entropy == pytest.approx(s_direct.total_entropy, abs=1e-12)
    assert np.allclose(np.sort(s_av.weights), np.sort(s_direct.weights), atol=1e-10)


def test_degenerate_average_orthogonal_products():
    # two product states with orthogonal left factors average to a rank-2
    # maximally mixed RDM
    g = build_chain(2)
    b = enumerate_sector(g, "heisenberg", Sector(None, 0))
    up_dn = np.zeros(2)
    dn_up = np.zeros(2)
    from edkit.basis import SpinState

    up_dn[b.index_of(SpinState((1, 0)))] = 1.0
    dn_up[b.index_of(SpinState((0, 1)))] = 1.0
    man = DegenerateManifold(0.0, np.column_stack([up_dn, dn_up]))
    spec = degenerate_average(man, b, half_cut(g, 1))
    assert np.allclose(np.sort(spec.weights), [0.5, 0.5], atol=1e-12)
    assert spec.total_entropy == pytest.approx(1.0, abs=1e-12)


def test_degenerate_average_rotation_invariance(rng):
    # two decoupled dimers: the (triplet x singlet) / (singlet x triplet)
    # pair is exactly degenerate and its members have different entropies
    # under re-mixing, but the averaged RDM does not care
    coords = np.zeros((4, 3))
    coords[:, 0] = [0.0, 1.0, 3.0, 4.0]
    g = Geometry(name="two-dimers", coords=coords, bonds=((1, 2), (3, 4)))
    h = build_model(g, ModelSpec(kind="heisenberg", J=1.0, site_spin=0.5), Sector(None, 0))
    eig = dense_spectrum(h)
    manifolds = [m for m in group_degenerate(eig) if m.multiplicity >= 2]
    assert manifolds
    man = manifolds[0]
    cut = half_cut(g, 2)
    s_ref = degenerate_average(man, h.basis, cut).total_entropy
    g_ = man.multiplicity
    for _ in range(5):
        q, _r = np.linalg.qr(rng.standard_normal((g_, g_)))
        rotated = DegenerateManifold(man.eigenvalue, man.vectors @ q)
        s_rot = degenerate_average(rotated, h.basis, cut).total_entropy
        assert abs(s_rot - s_ref) < 1e-10
    with pytest.raises(EntanglementError):
        degenerate_average(DegenerateManifold(0.0, np.zeros((h.dim, 0))), h.basis, cut)


def test_free_fermion_two_site_consistency():
    g = build_chain(2)
    s = free_fermion_oracle(g, -1.0, half_cut(g, 1), Sector(2, 0))
    assert s == pytest.approx(2.0, abs=1e-12)


def test_free_fermion_matches_many_body():
    g = build_chain(4)
    v, basis = _ground(g, ModelSpec(kind="hubbard", t=-1.0, U=0.0), Sector(4, 0))
    s_many = schmidt_spectrum(v, basis, half_cut(g, 2)).total_entropy
    s_free = free_fermion_oracle(g, -1.0, half_cut(g, 2), Sector(4, 0))
    assert abs(s_many - s_free) < 1e-10


def test_free_fermion_whole_block_zero():
    g = build_chain(4)
    s = free_fermion_oracle(g, -1.0, (1, 2, 3, 4), Sector(4, 0))
    assert abs(s) < 1e-12


def test_free_fermion_degenerate_fermi_level():
    coords = np.zeros((4, 3))
    coords[:, 0] = [0.0, 1.0, 3.0, 4.0]
    g = Geometry(name="two-dimers", coords=coords, bonds=((1, 2), (3, 4)))
    with pytest.raises(DegenerateFermiLevelError):
        free_fermion_oracle(g, -1.0, half_cut(g, 2), Sector(2, 0))


def test_entropy_bits_handles_zeros():
    assert entropy_bits(np.array([1.0, 0.0])) == 0.0
    assert entropy_bits(np.array([0.5, 0.5])) == pytest.approx(1.0, abs=1e-14)
