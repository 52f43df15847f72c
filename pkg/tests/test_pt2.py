import itertools

import numpy as np
import pytest

from rdmpt2 import exact, hamio, pt2, qsim, rdm
from rdmpt2.hamio import (ActiveSpaceSpec, IntegralTable, ReferenceDeterminant,
                          ValidationError)
from rdmpt2.pt2 import (DegenerateDenominatorError, embed_active_rdm, fbar,
                        gammabar, hf_mp2, rdm_pt2, reducible_3rdm,
                        transformed_energies)


def exact_active_rdm(table, entry):
    space = ActiveSpaceSpec.from_active_spatials(
        table.n_spatial, table.n_electrons, entry["active_spatial_orbitals"])
    active = hamio.freeze_core(table, space)
    e_active, amps = exact.fci_ground_state(active)
    basis = exact.SectorBasis.build(active.n_so, 2, 0)
    return space, active, e_active, exact.rdms_from_amplitudes(amps, basis)


def state_rdm(theta, provenance="exact"):
    sched = rdm.build_schedule(4)
    pair = rdm.rdm_from_state(qsim.simulate(qsim.build_ansatz(theta)), sched)
    pair.meta.provenance = provenance
    return pair


# ---------------------------------------------------------------------------
# reducible 3-RDM
# ---------------------------------------------------------------------------

def test_reducible_3rdm_antisymmetry_zero():
    pair = rdm.determinant_rdm((0, 1, 2), 6)
    assert reducible_3rdm(pair, (0, 0, 2, 0, 1, 2)) == pytest.approx(0.0)
    assert reducible_3rdm(pair, (0, 1, 2, 1, 1, 2)) == pytest.approx(0.0)


def test_reducible_3rdm_exact_on_determinants():
    # brute-force Wick value of <a+p a+q a+r a_u a_t a_s> on a determinant is
    # det of the occupation overlap; spot check the all-occupied diagonal
    det = rdm.determinant_rdm((0, 1, 2, 5), 6)
    assert reducible_3rdm(det, (0, 1, 2, 0, 1, 2)) == pytest.approx(1.0)
    assert reducible_3rdm(det, (0, 1, 5, 0, 1, 5)) == pytest.approx(1.0)
    assert reducible_3rdm(det, (0, 1, 3, 0, 1, 3)) == pytest.approx(0.0)
    # permuted ket picks up the permutation sign
    assert reducible_3rdm(det, (0, 1, 2, 1, 0, 2)) == pytest.approx(-1.0)


def test_reducible_3rdm_brute_force_wick_on_random_determinant():
    rng = np.random.default_rng(0)
    occ = (0, 2, 3, 5)
    det = rdm.determinant_rdm(occ, 6)
    n = np.zeros(6)
    n[list(occ)] = 1.0
    for _ in range(40):
        p, q, r = rng.choice(6, 3, replace=False)
        s, t, u = rng.choice(6, 3, replace=False)
        m = np.diag(n)[np.ix_([p, q, r], [s, t, u])]
        expected = np.linalg.det(m)
        assert reducible_3rdm(det, (p, q, r, s, t, u)) == pytest.approx(expected, abs=1e-12)


def test_true_3rdm_vanishes_for_two_electron_states(h2_fci):
    # statevector oracle: any 3-body expectation on a 2-electron state is zero
    _, amps, basis = h2_fci
    n = 4
    a = {p: sum(t.matrix() for t in qsim.jw_ladder(p, n, False)) for p in range(n)}
    ad = {p: m.conj().T for p, m in a.items()}
    psi = np.zeros(16)
    for i, det in enumerate(basis.states):
        psi[det] = amps[i]
    op = ad[0] @ ad[1] @ ad[2] @ a[3] @ a[2] @ a[0]
    assert abs(psi @ op @ psi) < 1e-12


# ---------------------------------------------------------------------------
# fbar / gammabar
# ---------------------------------------------------------------------------

def test_fbar_on_hf_determinant_is_fock_offdiagonal(lih):
    table, _ = lih
    ref = ReferenceDeterminant.aufbau(table)
    det = rdm.determinant_rdm(ref.occupied, table.n_so)
    f = hamio.normal_order(table, ref).f
    for i in (0, 1, 3):
        for a in (8, 9, 11):
            assert fbar(det, table, ref, i, a) == pytest.approx(f[i, a], abs=1e-12)
            # canonical orbitals: Brillouin makes these tiny
            assert abs(f[i, a]) < 1e-6


def test_gammabar_on_hf_determinant_is_bare_integral(lih):
    table, _ = lih
    ref = ReferenceDeterminant.aufbau(table)
    det = rdm.determinant_rdm(ref.occupied, table.n_so)
    g = table.g
    rng = np.random.default_rng(1)
    occ, virt = ref.occupied, ref.virtual
    for _ in range(10):
        i, j = rng.choice(occ, 2, replace=False)
        a, b = rng.choice(virt, 2, replace=False)
        assert gammabar(det, table, ref, i, j, a, b) == pytest.approx(
            g[i, j, a, b], abs=1e-12)


def test_gammabar_antisymmetry(h2):
    table, _ = h2
    ref = ReferenceDeterminant.aufbau(table)
    pair = state_rdm((0.8, 0.3, -0.2))
    assert gammabar(pair, table, ref, 0, 0, 2, 3) == pytest.approx(0.0)
    v = gammabar(pair, table, ref, 0, 1, 2, 3)
    assert gammabar(pair, table, ref, 1, 0, 2, 3) == pytest.approx(-v)
    assert gammabar(pair, table, ref, 0, 1, 3, 2) == pytest.approx(-v)


def test_scalar_and_batch_numerators_agree(lih):
    table, entry = lih
    space, active, e_active, active_rdm = exact_active_rdm(table, entry)
    emb = embed_active_rdm(active_rdm, space)
    ref = ReferenceDeterminant.aufbau(table)
    occ, virt = list(ref.occupied), list(ref.virtual)
    fmat = pt2._fbar_matrix(emb, table, occ, virt)
    gten = pt2._gammabar_tensor(emb, table, occ, virt)
    rng = np.random.default_rng(2)
    for _ in range(8):
        i, j = rng.choice(len(occ), 2, replace=False)
        a, b = rng.choice(len(virt), 2, replace=False)
        assert gten[i, j, a, b] == pytest.approx(
            gammabar(emb, table, ref, occ[i], occ[j], virt[a], virt[b]), abs=1e-11)
        assert fmat[i, a] == pytest.approx(
            fbar(emb, table, ref, occ[i], virt[a]), abs=1e-11)


def test_numerators_match_commutator_oracle_on_embedded_state(lih):
    # <Psi|[a+_i a+_j a_b a_a, H]|Psi> computed with ladder operators in the
    # determinant sector equals the RDM formula on every channel that is not
    # purely internal to the active space
    table, entry = lih
    space, active, e_active, active_rdm = exact_active_rdm(table, entry)
    emb = embed_active_rdm(active_rdm, space)
    ref = ReferenceDeterminant.aufbau(table)
    occ, virt = list(ref.occupied), list(ref.virtual)
    basis = exact.SectorBasis.build(table.n_so, table.n_electrons, 0)
    ham = exact.sector_hamiltonian(table, basis, dense=True)

    cas_basis = exact.SectorBasis.build(active.n_so, 2, 0)
    _, amps = exact.fci_ground_state(active)
    core = 0
    for c in space.frozen_occupied:
        core |= 1 << c
    psi = np.zeros(len(basis))
    for ci, det in enumerate(cas_basis.states):
        full = core
        for loc, orb in enumerate(space.active):
            if (det >> loc) & 1:
                full |= 1 << orb
        psi[basis.index[full]] = amps[ci]

    def apply_ops(vec, ops):
        out = np.zeros_like(vec)
        for ci, det in enumerate(basis.states):
            if vec[ci] == 0.0:
                continue
            d2, sign = exact._apply_ladder(det, ops)
            if d2 is None:
                continue
            ti = basis.index.get(d2)
            if ti is not None:
                out[ti] += sign * vec[ci]
        return out

    gten = pt2._gammabar_tensor(emb, table, occ, virt)
    rng = np.random.default_rng(3)
    active_set = set(space.active)
    checked = 0
    while checked < 10:
        i, j = sorted(rng.choice(occ, 2, replace=False))
        a, b = sorted(rng.choice(virt, 2, replace=False))
        if {i, j, a, b} <= active_set:
            continue
        ops = [(int(i), True), (int(j), True), (int(b), False), (int(a), False)]
        commutator = float(psi @ (ham @ apply_ops(psi, ops))
                           - psi @ apply_ops(ham @ psi, ops))
        formula = gten[occ.index(i), occ.index(j), virt.index(a), virt.index(b)]
        assert formula == pytest.approx(-commutator, abs=5e-4)
        checked += 1


def test_gradient_equivalence_finite_differences(h2):
    # 2 fbar and 2 gammabar equal central differences of the energy with
    # respect to the cluster amplitudes (parameters carry a half angle, so
    # dE/dtheta equals the transformed matrix element itself)
    table, _ = h2
    ref = ReferenceDeterminant.aufbau(table)
    sched = rdm.build_schedule(4)

    def energy(th):
        sv = qsim.simulate(qsim.build_ansatz(th))
        return hamio.energy_from_rdm(table, rdm.rdm_from_state(sv, sched))

    rng = np.random.default_rng(7)
    h = 1e-4
    for _ in range(5):
        th = rng.uniform(-np.pi, np.pi, 3)
        pair = state_rdm(tuple(th))
        for k, (i, a) in [(1, (0, 2)), (2, (1, 3))]:
            tp, tm = list(th), list(th)
            tp[k] += h
            tm[k] -= h
            fd_amplitude = 2 * (energy(tuple(tp)) - energy(tuple(tm))) / (2 * h)
            assert abs(2 * fbar(pair, table, ref, i, a) - fd_amplitude) < 1e-6
        # the double-excitation identity holds where the single rotations sit
        # at the reference (elsewhere the orderings differ at finite angle)
        t0 = rng.uniform(-np.pi, np.pi)
        pair0 = state_rdm((t0, 0.0, 0.0))
        fd_amplitude = 2 * (energy((t0 + h, 0, 0)) - energy((t0 - h, 0, 0))) / (2 * h)
        assert abs(2 * gammabar(pair0, table, ref, 0, 1, 2, 3) - fd_amplitude) < 1e-6


def test_stationarity_at_fci(h2, h2_fci):
    table, _ = h2
    ref = ReferenceDeterminant.aufbau(table)
    _, amps, basis = h2_fci
    pair = exact.rdms_from_amplitudes(amps, basis)
    occ, virt = list(ref.occupied), list(ref.virtual)
    assert np.abs(pt2._fbar_matrix(pair, table, occ, virt)).max() < 1e-6
    assert np.abs(pt2._gammabar_tensor(pair, table, occ, virt)).max() < 1e-6
    assert abs(rdm_pt2(pair, table, ref)) < 1e-8


def test_index_role_validation(h2):
    table, _ = h2
    ref = ReferenceDeterminant.aufbau(table)
    pair = state_rdm((0.3, 0, 0))
    with pytest.raises(ValidationError):
        fbar(pair, table, ref, 2, 0)
    with pytest.raises(ValidationError):
        gammabar(pair, table, ref, 0, 2, 1, 3)


def test_pt2_rejects_raw_rdm(h2):
    table, _ = h2
    ref = ReferenceDeterminant.aufbau(table)
    pair = state_rdm((0.3, 0, 0), provenance="raw")
    with pytest.raises(ValidationError, match="purified"):
        rdm_pt2(pair, table, ref)


# ---------------------------------------------------------------------------
# transformed energies
# ---------------------------------------------------------------------------

def test_transformed_energies_collapse_on_determinant(lih):
    table, _ = lih
    ref = ReferenceDeterminant.aufbau(table)
    det = rdm.determinant_rdm(ref.occupied, table.n_so)
    f = hamio.normal_order(table, ref).f
    eps_occ, eps_virt = transformed_energies(det, table, ref)
    for i in ref.occupied:
        assert eps_occ[i] == pytest.approx(f[i, i], abs=1e-12)
    for a in ref.virtual:
        assert eps_virt[a] == pytest.approx(f[a, a], abs=1e-12)


def test_transformed_energies_shift_directions(h2, h2_fci):
    # correlation pushes occupied levels down and virtuals up
    table, _ = h2
    ref = ReferenceDeterminant.aufbau(table)
    _, amps, basis = h2_fci
    pair = exact.rdms_from_amplitudes(amps, basis)
    f = hamio.normal_order(table, ref).f
    eps_occ, eps_virt = transformed_energies(pair, table, ref)
    for i in ref.occupied:
        assert eps_occ[i] < f[i, i]
    for a in ref.virtual:
        assert eps_virt[a] > f[a, a]


def test_transformed_energies_zero_offdiagonal_blocks(h2, h2_fci):
    table, _ = h2
    ref = ReferenceDeterminant.aufbau(table)
    _, amps, basis = h2_fci
    pair = exact.rdms_from_amplitudes(amps, basis)
    stripped = rdm.RdmPair(np.diag(np.diag(pair.rho1)), pair.rho2.copy(),
                           pair.meta)
    occ = list(ref.occupied)
    virt = list(ref.virtual)
    r2 = stripped.rho2.copy()
    r2[np.ix_(virt, virt, occ, occ)] = 0.0
    r2[np.ix_(occ, occ, virt, virt)] = 0.0
    stripped = rdm.RdmPair(stripped.rho1, r2, pair.meta)
    f = hamio.normal_order(table, ref).f
    eps_occ, eps_virt = transformed_energies(stripped, table, ref)
    for i in occ:
        assert eps_occ[i] == pytest.approx(f[i, i], abs=1e-12)
    for a in virt:
        assert eps_virt[a] == pytest.approx(f[a, a], abs=1e-12)


# ---------------------------------------------------------------------------
# the correction itself
# ---------------------------------------------------------------------------

def test_mp2_reduction_every_fixture():
    for fid in ("h2_0.70", "h2_2.00", "h2_3.00", "h2_4.00",
                "lih_1.5949", "nah_1.8874"):
        table, entry = hamio.load_fixture(fid)
        ref = ReferenceDeterminant.aufbau(table)
        det = rdm.determinant_rdm(ref.occupied, table.n_so)
        assert abs(rdm_pt2(det, table, ref, warn_positive=False)
                   - hf_mp2(table, ref)) < 1e-10


def test_mp2_matches_generator_value():
    # third, fully independent route: the generator's closed-shell MP2
    for fid in ("h2_0.70", "lih_1.5949", "nah_1.8874"):
        table, entry = hamio.load_fixture(fid)
        ref = ReferenceDeterminant.aufbau(table)
        assert abs(hf_mp2(table, ref) - entry["e_mp2_corr_full"]) < 1e-9


def test_hf_mp2_two_level_hand_value(tmp_path):
    # one occupied and one virtual spatial orbital coupled by (hp|hp) = k.
    # Fock diagonals: f_h = h_h (no same-spin partner term survives),
    # f_p = h_p - k (exchange with the occupied alpha/beta pair), so the
    # pair denominator is 2(f_h - f_p) and E2 = k^2 / (2 (f_h - f_p)).
    k, hh, hp = 0.30, -1.0, -0.2
    path = tmp_path / "toy.fcidump"
    path.write_text("&FCI NORB=2,NELEC=2,MS2=0,\n&END\n"
                    f"{k} 1 2 1 2\n"
                    f"{hh} 1 1 0 0\n"
                    f"{hp} 2 2 0 0\n"
                    "0.0 0 0 0 0\n")
    table = hamio.load_fcidump(path)
    ref = ReferenceDeterminant.aufbau(table)
    expected = k ** 2 / (2 * (hh - (hp - k)))
    assert expected == pytest.approx(-0.09)
    assert hf_mp2(table, ref) == pytest.approx(expected, abs=1e-12)


def test_degenerate_denominator_raises(tmp_path):
    # h_p chosen so the exchange dressing makes the Fock gap exactly zero
    path = tmp_path / "degenerate.fcidump"
    path.write_text("&FCI NORB=2,NELEC=2,MS2=0,\n&END\n"
                    "0.1 1 2 1 2\n"
                    "-0.5 1 1 0 0\n"
                    "-0.4 2 2 0 0\n"
                    "0.0 0 0 0 0\n")
    table = hamio.load_fcidump(path)
    ref = ReferenceDeterminant.aufbau(table)
    with pytest.raises(DegenerateDenominatorError) as err:
        hf_mp2(table, ref)
    assert err.value.orbitals  # names the tuple


def test_pt2_invariant_under_spin_relabeling(h2):
    table, _ = h2
    ref = ReferenceDeterminant.aufbau(table)
    pair = state_rdm((0.8, 0.0, 0.0))
    flip = np.arange(4) ^ 1
    flipped = rdm.RdmPair(pair.rho1[np.ix_(flip, flip)],
                          pair.rho2[np.ix_(flip, flip, flip, flip)], pair.meta)
    v1 = rdm_pt2(pair, table, ref, warn_positive=False)
    v2 = rdm_pt2(flipped, table, ref, warn_positive=False)
    assert v1 == pytest.approx(v2, abs=1e-12)


# ---------------------------------------------------------------------------
# embedding
# ---------------------------------------------------------------------------

def test_embed_identity_with_no_frozen_orbitals(h2_fci):
    _, amps, basis = h2_fci
    pair = exact.rdms_from_amplitudes(amps, basis)
    spec = ActiveSpaceSpec(frozen_occupied=(), active=(0, 1, 2, 3),
                           frozen_virtual=())
    emb = embed_active_rdm(pair, spec)
    assert np.abs(emb.rho1 - pair.rho1).max() < 1e-15
    assert np.abs(emb.rho2 - pair.rho2).max() < 1e-15


def test_embed_frozen_only_system_is_determinant():
    empty = rdm.RdmPair(np.zeros((0, 0)), np.zeros((0, 0, 0, 0)),
                        rdm.RdmMeta(provenance="exact", n_electrons=0))
    spec = ActiveSpaceSpec(frozen_occupied=(0, 1), active=(),
                           frozen_virtual=(2, 3))
    emb = embed_active_rdm(empty, spec)
    det = rdm.determinant_rdm((0, 1), 4)
    assert np.abs(emb.rho1 - det.rho1).max() < 1e-15
    assert np.abs(emb.rho2 - det.rho2).max() < 1e-15


def test_embed_energy_consistency(lih):
    # energy of the embedded RDM over the full table equals the active-space
    # energy over the frozen-core table (which folds the core energy)
    table, entry = lih
    space, active, e_active, active_rdm = exact_active_rdm(table, entry)
    e_act = hamio.energy_from_rdm(active, active_rdm)
    emb = embed_active_rdm(active_rdm, space)
    e_emb = hamio.energy_from_rdm(table, emb)
    assert abs(e_emb - e_act) < 1e-10
    assert abs(e_act - e_active) < 1e-10
    emb.validate(1e-10)
    assert emb.trace1() == pytest.approx(4.0, abs=1e-10)
    assert emb.trace2() == pytest.approx(12.0, abs=1e-10)


def test_embed_rejects_overlapping_sets(h2_fci):
    _, amps, basis = h2_fci
    pair = exact.rdms_from_amplitudes(amps, basis)
    spec = ActiveSpaceSpec(frozen_occupied=(0,), active=(0, 1, 2, 3),
                           frozen_virtual=())
    with pytest.raises(ValidationError):
        embed_active_rdm(pair, spec)


def test_full_space_correction_beats_mp2_baseline(lih):
    table, entry = lih
    space, active, e_active, active_rdm = exact_active_rdm(table, entry)
    emb = embed_active_rdm(active_rdm, space)
    ref = ReferenceDeterminant.aufbau(table)
    corr = rdm_pt2(emb, table, ref, space=space, warn_positive=False)
    e_est = e_active + corr
    e_fci = entry["e_fci_full"]
    e_mp2 = entry["e_hf"] + hf_mp2(table, ref)
    assert abs(e_est - e_fci) < abs(e_mp2 - e_fci)
