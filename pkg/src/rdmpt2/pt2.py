"""Second-order perturbative correction evaluated from measured RDMs.

The numerators are the real parts of commutator expectations
<[a+_i a_a, H]> and <[a+_i a+_j a_b a_a, H]> expressed through the 1-/2-RDM
(plus a reducible 3-RDM reconstruction when more than two electrons are
present); the denominators use transformed orbital energies obtained from the
same RDMs.  On a determinant RDM everything collapses to textbook MP2.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .hamio import IntegralTable, ReferenceDeterminant, ActiveSpaceSpec, ValidationError
from .rdm import RdmMeta, RdmPair

log = logging.getLogger(__name__)

DENOMINATOR_FLOOR = 1e-8


class DegenerateDenominatorError(ArithmeticError):
    def __init__(self, orbitals, value):
        self.orbitals = tuple(orbitals)
        self.value = float(value)
        super().__init__(
            f"energy denominator {value:.3e} Ha for orbital tuple {orbitals} "
            "is below the degeneracy floor; a perturbative correction is unreliable here")


def _check_pt2_input(rdm: RdmPair):
    if rdm.meta.provenance not in ("purified", "exact"):
        raise ValidationError(
            "perturbative corrections require a purified (or exact-oracle) RDM; "
            f"got provenance {rdm.meta.provenance!r}")


def _check_roles(ref: ReferenceDeterminant, occ_idx, virt_idx):
    occ = set(ref.occupied)
    for i in occ_idx:
        if i not in occ:
            raise ValidationError(f"index {i} is not occupied in the reference")
    for a in virt_idx:
        if a in occ:
            raise ValidationError(f"index {a} is not virtual in the reference")


# ---------------------------------------------------------------------------
# Reducible 3-RDM
# ---------------------------------------------------------------------------

def _pair_cumulant(rdm: RdmPair) -> np.ndarray:
    """lambda2 = rho2 - rho1 ^ rho1 (vanishes on a determinant)."""
    r1 = rdm.rho1
    return rdm.rho2 - (np.einsum("pr,qs->pqrs", r1, r1)
                       - np.einsum("ps,qr->pqrs", r1, r1))


def reducible_3rdm(rdm: RdmPair, indices) -> float:
    """Reconstruct rho_pqrstu from rho2 and rho1 (cumulant truncation).

    det3(rho1) plus the antisymmetrized pair-cumulant term
    (1 - P_pr - P_qr)(1 - P_su - P_tu) lambda_pqst rho_ru, each permutation
    operator swapping its index pair in every factor to its right.  Exact on
    determinants and, blockwise, on core (x) active product states everywhere
    except fully active index blocks (the dropped three-body cumulant).
    """
    p, q, r, s, t, u = indices
    r1 = rdm.rho1
    lam = _pair_cumulant(rdm)

    m = r1[np.ix_([p, q, r], [s, t, u])]
    det3 = (m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
            - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
            + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0]))

    def block(p_, q_, r_):
        return (lam[p_, q_, s, t] * r1[r_, u]
                - lam[p_, q_, u, t] * r1[r_, s]
                - lam[p_, q_, s, u] * r1[r_, t])

    return float(det3 + block(p, q, r) - block(r, q, p) - block(p, r, q))


# ---------------------------------------------------------------------------
# Transformed matrix elements (numerators)
# ---------------------------------------------------------------------------

def fbar(rdm: RdmPair, table: IntegralTable, ref: ReferenceDeterminant,
         i: int, a: int) -> float:
    """Re <[a+_i a_a, H]> from the RDMs (exact given the true 2-RDM)."""
    _check_pt2_input(rdm)
    _check_roles(ref, [i], [a])
    h, g = table.h, table.g
    r1, r2 = rdm.rho1, rdm.rho2
    n = table.n_so
    val = sum(h[a, m] * r1[m, i] - h[i, m] * r1[m, a] for m in range(n))
    acc = 0.0
    for m in range(n):
        for v in range(n):
            for w in range(n):
                acc += g[a, m, v, w] * r2[v, w, i, m] - g[i, m, v, w] * r2[v, w, a, m]
    return float(val + 0.5 * acc)


def _fbar_matrix(rdm: RdmPair, table: IntegralTable, occ, virt) -> np.ndarray:
    h, g = table.h, table.g
    r1, r2 = rdm.rho1, rdm.rho2
    one = (h[virt] @ r1[:, occ]).T - h[occ] @ r1[:, virt]
    two = 0.5 * (np.einsum("amvw,vwim->ia", g[virt], r2[:, :, occ, :], optimize=True)
                 - np.einsum("imvw,vwam->ia", g[occ], r2[:, :, virt, :], optimize=True))
    return one + two


def gammabar(rdm: RdmPair, table: IntegralTable, ref: ReferenceDeterminant,
             i: int, j: int, a: int, b: int, include_3rdm=None) -> float:
    """Re <[a+_i a+_j a_b a_a, H]> from the RDMs.

    The two 3-RDM contractions are evaluated through reducible_3rdm; they
    vanish identically for 2-electron states and are skipped there unless
    ``include_3rdm`` forces them.
    """
    _check_pt2_input(rdm)
    _check_roles(ref, [i, j], [a, b])
    h, g = table.h, table.g
    r1, r2 = rdm.rho1, rdm.rho2
    n = table.n_so
    if include_3rdm is None:
        include_3rdm = rdm.meta.n_electrons > 2

    def bracket(i_, j_, a_, b_):
        val = 0.0
        for m in range(n):
            val += h[i_, m] * r2[m, j_, a_, b_] - h[j_, m] * r2[m, i_, a_, b_]
            val -= h[a_, m] * r2[i_, j_, m, b_] - h[b_, m] * r2[i_, j_, m, a_]
        for m in range(n):
            for v in range(n):
                val += 0.5 * (g[i_, j_, m, v] * r2[m, v, a_, b_]
                              - g[m, v, a_, b_] * r2[i_, j_, m, v])
        if include_3rdm:
            t3 = 0.0
            for m in range(n):
                for v in range(n):
                    for w in range(n):
                        t3 -= 0.5 * (
                            g[i_, w, m, v] * reducible_3rdm(rdm, (m, v, j_, a_, b_, w))
                            - g[j_, w, m, v] * reducible_3rdm(rdm, (m, v, i_, a_, b_, w)))
                        t3 += 0.5 * (
                            g[m, v, a_, w] * reducible_3rdm(rdm, (i_, j_, w, b_, m, v))
                            - g[m, v, b_, w] * reducible_3rdm(rdm, (i_, j_, w, a_, m, v)))
            val += t3
        return val

    return float(-bracket(i, j, a, b))


def _gammabar_tensor(rdm: RdmPair, table: IntegralTable, occ, virt,
                     include_3rdm=None) -> np.ndarray:
    """All gammabar_ijab at once (same contractions, einsum form)."""
    h, g = table.h, table.g
    r2 = rdm.rho2
    if include_3rdm is None:
        include_3rdm = rdm.meta.n_electrons > 2
    r2_ovv = r2[:, occ][:, :, virt][:, :, :, virt]   # (m, j, a, b)
    r2_oov = r2[occ][:, occ][:, :, :, virt]          # (i, j, m, b)
    one = np.einsum("im,mjab->ijab", h[occ], r2_ovv)
    one = one - one.transpose(1, 0, 2, 3)
    two = np.einsum("am,ijmb->ijab", h[virt], r2_oov)
    two = two - two.transpose(0, 1, 3, 2)
    gpart = 0.5 * (np.einsum("ijmn,mnab->ijab", g[occ][:, occ],
                             r2[:, :, virt][:, :, :, virt], optimize=True)
                   - np.einsum("mnab,ijmn->ijab", g[:, :, virt][:, :, :, virt],
                               r2[occ][:, occ], optimize=True))
    bracket = one - two + gpart
    if include_3rdm:
        bracket = bracket + _gamma_3rdm_terms(rdm, table, occ, virt)
    return -bracket


def _gamma_3rdm_terms(rdm: RdmPair, table: IntegralTable, occ, virt) -> np.ndarray:
    """The two three-body contractions of the bracket, evaluated through the
    cumulant-truncated reconstruction without materializing a six-index
    tensor."""
    g = table.g
    r1 = rdm.rho1
    lam = _pair_cumulant(rdm)
    gi = g[occ]            # (i, v, m, n)
    gav = g[:, :, virt]    # (m, n, a, v)
    kw = {"optimize": True}

    def contract_a(t2):
        """1/2 sum_mnv g_ivmn X_{mnj,abv} for the nine pair/single splits."""
        return (np.einsum("ivmn,mnab,jv->ijab", gi, t2[:, :, virt][:, :, :, virt], r1[occ], **kw)
                - np.einsum("ivmn,mnvb,ja->ijab", gi, t2[:, :, :, virt], r1[occ][:, virt], **kw)
                - np.einsum("ivmn,mnav,jb->ijab", gi, t2[:, :, virt], r1[occ][:, virt], **kw)
                - np.einsum("ivmn,jnab,mv->ijab", gi, t2[occ][:, :, virt][:, :, :, virt], r1, **kw)
                + np.einsum("ivmn,jnvb,ma->ijab", gi, t2[occ][:, :, :, virt], r1[:, virt], **kw)
                + np.einsum("ivmn,jnav,mb->ijab", gi, t2[occ][:, :, virt], r1[:, virt], **kw)
                - np.einsum("ivmn,mjab,nv->ijab", gi, t2[:, occ][:, :, virt][:, :, :, virt], r1, **kw)
                + np.einsum("ivmn,mjvb,na->ijab", gi, t2[:, occ][:, :, :, virt], r1[:, virt], **kw)
                + np.einsum("ivmn,mjav,nb->ijab", gi, t2[:, occ][:, :, virt], r1[:, virt], **kw))

    def contract_b(t2):
        """1/2 sum_mnv g_mnav X_{ijv,bmn} for the nine pair/single splits."""
        t2_oo = t2[occ][:, occ]
        return (np.einsum("mnav,ijbm,vn->ijab", gav, t2_oo[:, :, virt], r1, **kw)
                - np.einsum("mnav,ijnm,vb->ijab", gav, t2_oo, r1[:, virt], **kw)
                - np.einsum("mnav,ijbn,vm->ijab", gav, t2_oo[:, :, virt], r1, **kw)
                - np.einsum("mnav,vjbm,in->ijab", gav, t2[:, occ][:, :, virt], r1[occ], **kw)
                + np.einsum("mnav,vjnm,ib->ijab", gav, t2[:, occ], r1[occ][:, virt], **kw)
                + np.einsum("mnav,vjbn,im->ijab", gav, t2[:, occ][:, :, virt], r1[occ], **kw)
                - np.einsum("mnav,ivbm,jn->ijab", gav, t2[occ][:, :, virt], r1[occ], **kw)
                + np.einsum("mnav,ivnm,jb->ijab", gav, t2[occ], r1[occ][:, virt], **kw)
                + np.einsum("mnav,ivbn,jm->ijab", gav, t2[occ][:, :, virt], r1[occ], **kw))

    # det3(rho1) parts: X_{mnj,abv} -> rho_ma (rho_nb rho_jv - rho_nv rho_jb) - ...
    det_a = (np.einsum("ivmn,ma,nb,jv->ijab", gi, r1[:, virt], r1[:, virt], r1[occ], **kw)
             - np.einsum("ivmn,ma,nv,jb->ijab", gi, r1[:, virt], r1, r1[occ][:, virt], **kw)
             - np.einsum("ivmn,mb,na,jv->ijab", gi, r1[:, virt], r1[:, virt], r1[occ], **kw)
             + np.einsum("ivmn,mb,nv,ja->ijab", gi, r1[:, virt], r1, r1[occ][:, virt], **kw)
             + np.einsum("ivmn,mv,na,jb->ijab", gi, r1, r1[:, virt], r1[occ][:, virt], **kw)
             - np.einsum("ivmn,mv,nb,ja->ijab", gi, r1, r1[:, virt], r1[occ][:, virt], **kw))
    det_b = (np.einsum("mnav,ib,jm,vn->ijab", gav, r1[occ][:, virt], r1[occ], r1, **kw)
             - np.einsum("mnav,ib,jn,vm->ijab", gav, r1[occ][:, virt], r1[occ], r1, **kw)
             - np.einsum("mnav,im,jb,vn->ijab", gav, r1[occ], r1[occ][:, virt], r1, **kw)
             + np.einsum("mnav,in,jb,vm->ijab", gav, r1[occ], r1[occ][:, virt], r1, **kw)
             + np.einsum("mnav,im,jn,vb->ijab", gav, r1[occ], r1[occ], r1[:, virt], **kw)
             - np.einsum("mnav,in,jm,vb->ijab", gav, r1[occ], r1[occ], r1[:, virt], **kw))

    ta = 0.5 * (contract_a(lam) + det_a)
    ta = ta - ta.transpose(1, 0, 2, 3)
    tb = 0.5 * (contract_b(lam) + det_b)
    tb = tb - tb.transpose(0, 1, 3, 2)
    return -ta + tb


# ---------------------------------------------------------------------------
# Transformed orbital energies (denominators)
# ---------------------------------------------------------------------------

def transformed_energies(rdm: RdmPair, table: IntegralTable,
                         ref: ReferenceDeterminant):
    """Per-orbital energies dressed by the off-diagonal RDM blocks.

    Correlation pushes occupied levels down and virtual levels up, widening
    the denominators (this is what keeps stretched-bond corrections from
    overbinding); on a determinant RDM both formulas collapse to the bare
    Fock diagonal.  Returns (eps_occ, eps_virt) keyed by spin-orbital index.
    """
    _check_pt2_input(rdm)
    h, g = table.h, table.g
    r1, r2 = rdm.rho1, rdm.rho2
    occ = list(ref.occupied)
    virt = list(ref.virtual)
    eps_occ = {}
    for i in occ:
        val = h[i, i] + sum(g[i, j, i, j] for j in occ)
        val += sum(h[i, a] * r1[a, i] for a in virt)
        val += 0.5 * sum(g[i, j, a, b] * r2[a, b, i, j]
                         for j in occ for a in virt for b in virt)
        eps_occ[i] = float(val)
    eps_virt = {}
    for a in virt:
        val = h[a, a] + sum(g[a, j, a, j] for j in occ)
        val -= sum(h[a, i] * r1[i, a] for i in occ)
        val -= 0.5 * sum(g[a, b, i, j] * r2[i, j, a, b]
                         for i in occ for j in occ for b in virt)
        eps_virt[a] = float(val)
    return eps_occ, eps_virt


# ---------------------------------------------------------------------------
# The second-order energy
# ---------------------------------------------------------------------------

def rdm_pt2(rdm: RdmPair, table: IntegralTable, ref: ReferenceDeterminant,
            space: ActiveSpaceSpec | None = None, warn_positive=True) -> float:
    """Second-order correction from the measured RDMs.

    Sums over the occupied/virtual split of ``ref`` within ``table``'s
    orbital space.  For a full-space correction on an embedded RDM, pass the
    active-space partition as ``space``: excitation channels lying entirely
    inside the active set are then skipped, since the active solver already
    treats them variationally (their true transformed numerators vanish at
    its optimum, and only reconstruction error would survive here).

    Raises DegenerateDenominatorError below a 1e-8 Ha denominator gap.
    """
    _check_pt2_input(rdm)
    occ = list(ref.occupied)
    virt = list(ref.virtual)
    internal = set(space.active) if space is not None else set()
    eps_occ, eps_virt = transformed_energies(rdm, table, ref)
    fmat = _fbar_matrix(rdm, table, occ, virt)
    gten = _gammabar_tensor(rdm, table, occ, virt)

    terms = []
    for ii, i in enumerate(occ):
        for aa, a in enumerate(virt):
            if i in internal and a in internal:
                continue
            denom = eps_occ[i] - eps_virt[a]
            if abs(denom) < DENOMINATOR_FLOOR:
                raise DegenerateDenominatorError((i, a), denom)
            terms.append(fmat[ii, aa] ** 2 / denom)
    for ii, i in enumerate(occ):
        for jj, j in enumerate(occ):
            for aa, a in enumerate(virt):
                for bb, b in enumerate(virt):
                    if (i in internal and j in internal
                            and a in internal and b in internal):
                        continue
                    num = gten[ii, jj, aa, bb] ** 2
                    denom = eps_occ[i] + eps_occ[j] - eps_virt[a] - eps_virt[b]
                    if abs(denom) < DENOMINATOR_FLOOR:
                        raise DegenerateDenominatorError((i, j, a, b), denom)
                    terms.append(0.25 * num / denom)
    total = math.fsum(terms)
    if total > 0 and warn_positive:
        log.warning("positive second-order correction %.3e Ha (ground-state "
                    "corrections are expected to be negative)", total)
    return float(total)


def embed_active_rdm(active_rdm: RdmPair, spec: ActiveSpaceSpec) -> RdmPair:
    """Lift an active-space RDM to the full orbital space.

    Frozen-occupied orbitals get determinant blocks, frozen-active cross
    blocks are antisymmetrized products of the core density with the active
    1-RDM, and frozen-virtual blocks stay zero.
    """
    fo = list(spec.frozen_occupied)
    act = list(spec.active)
    fv = list(spec.frozen_virtual)
    if set(fo) & set(act) or set(fo) & set(fv) or set(act) & set(fv):
        raise ValidationError("active-space sets overlap")
    n = len(fo) + len(act) + len(fv)
    if active_rdm.n_so != len(act):
        raise ValidationError("active RDM size does not match the active set")
    r1a, r2a = active_rdm.rho1, active_rdm.rho2
    rho1 = np.zeros((n, n))
    rho2 = np.zeros((n, n, n, n))
    for c in fo:
        rho1[c, c] = 1.0
    rho1[np.ix_(act, act)] = r1a
    rho2[np.ix_(act, act, act, act)] = r2a
    for c in fo:
        for d in fo:
            if c != d:
                rho2[c, d, c, d] = 1.0
                rho2[c, d, d, c] = -1.0
    for c in fo:
        rho2[np.ix_([c], act, [c], act)] = r1a[None, :, None, :]
        rho2[np.ix_(act, [c], [c], act)] = -r1a[:, None, None, :]
        rho2[np.ix_([c], act, act, [c])] = -r1a[None, :, :, None]
        rho2[np.ix_(act, [c], act, [c])] = r1a[:, None, :, None]
    meta = RdmMeta(provenance=active_rdm.meta.provenance,
                   shots=active_rdm.meta.shots, seed=active_rdm.meta.seed,
                   n_electrons=active_rdm.meta.n_electrons + len(fo),
                   sz_enforced=active_rdm.meta.sz_enforced,
                   reflection_averaged=active_rdm.meta.reflection_averaged,
                   purification=active_rdm.meta.purification)
    return RdmPair(rho1, rho2, meta)


def hf_mp2(table: IntegralTable, ref: ReferenceDeterminant) -> float:
    """Textbook second-order correction for the Hartree-Fock reference.

    Independent of the RDM machinery on purpose: a direct sum over Fock
    matrix elements and bare integrals.
    """
    occ = list(ref.occupied)
    virt = list(ref.virtual)
    f = table.h + np.einsum("piqi->pq", table.g[:, occ][:, :, :, occ])
    g = table.g
    terms = []
    for i in occ:
        for a in virt:
            denom = f[i, i] - f[a, a]
            if abs(denom) < DENOMINATOR_FLOOR:
                raise DegenerateDenominatorError((i, a), denom)
            terms.append(f[i, a] ** 2 / denom)
    for i in occ:
        for j in occ:
            for a in virt:
                for b in virt:
                    denom = f[i, i] + f[j, j] - f[a, a] - f[b, b]
                    if abs(denom) < DENOMINATOR_FLOOR:
                        raise DegenerateDenominatorError((i, j, a, b), denom)
                    terms.append(0.25 * g[i, j, a, b] ** 2 / denom)
    return float(math.fsum(terms))
