#!/usr/bin/env python3
"""Generate the committed FCIDUMP fixtures and their provenance manifest.

Standalone tool: restricted Hartree-Fock over contracted Gaussian basis
functions (McMurchie-Davidson integrals), FCIDUMP export of the canonical-MO
integrals, and an independent string-based full-CI used to record reference
energies in the manifest.  Shares no code with the installed package, so the
manifest values act as an external oracle for the package's own tests.

The embedded STO-3G tables are the standard published exponents and
contraction coefficients.  Validation checkpoints (printed at the end) compare
against widely tabulated literature energies for H2 and LiH; the run aborts if
they disagree beyond loose thresholds.

Usage: python3 scripts/make_fixtures.py [--out src/rdmpt2/fixtures]
"""

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
import scipy.special

ANGSTROM_TO_BOHR = 1.8897259886

# STO-3G: shell type, primitive exponents, s coefficients, p coefficients.
STO3G = {
    "H": [
        ("S", [3.425250914, 0.6239137298, 0.1688554040],
         [0.1543289673, 0.5353281423, 0.4446345422], None),
    ],
    "Li": [
        ("S", [16.11957475, 2.936200663, 0.794650487],
         [0.1543289673, 0.5353281423, 0.4446345422], None),
        ("SP", [0.6362897469, 0.1478600533, 0.0480886784],
         [-0.09996722919, 0.3995128261, 0.7001154689],
         [0.1559162750, 0.6076837186, 0.3919573931]),
    ],
    "Na": [
        ("S", [250.77243, 45.678511, 12.362388],
         [0.1543289673, 0.5353281423, 0.4446345422], None),
        ("SP", [12.040193, 2.7978819, 0.9099580],
         [-0.09996722919, 0.3995128261, 0.7001154689],
         [0.1559162750, 0.6076837186, 0.3919573931]),
        ("SP", [1.4787406, 0.41564918, 0.16139503],
         [-0.2196203690, 0.2255954336, 0.9003984260],
         [0.01058760429, 0.5951670053, 0.4620010120]),
    ],
}

NUCLEAR_CHARGE = {"H": 1, "Li": 3, "Na": 11}


# ----------------------------------------------------------------------------
# Gaussian integrals (McMurchie-Davidson scheme, cartesian s/p shells)
# ----------------------------------------------------------------------------

def hermite_coef(i, j, t, qx, a, b):
    """Hermite expansion coefficient E_t^{ij} for a Gaussian product."""
    p = a + b
    q = a * b / p
    if t < 0 or t > i + j:
        return 0.0
    if i == j == t == 0:
        return math.exp(-q * qx * qx)
    if j == 0:
        return (hermite_coef(i - 1, j, t - 1, qx, a, b) / (2 * p)
                - q * qx / a * hermite_coef(i - 1, j, t, qx, a, b)
                + (t + 1) * hermite_coef(i - 1, j, t + 1, qx, a, b))
    return (hermite_coef(i, j - 1, t - 1, qx, a, b) / (2 * p)
            + q * qx / b * hermite_coef(i, j - 1, t, qx, a, b)
            + (t + 1) * hermite_coef(i, j - 1, t + 1, qx, a, b))


def boys(n, x):
    if x < 1e-12:
        return 1.0 / (2 * n + 1)
    g = scipy.special.gamma(n + 0.5)
    return 0.5 * x ** (-(n + 0.5)) * g * scipy.special.gammainc(n + 0.5, x)


def hermite_coulomb(t, u, v, n, p, px, py, pz):
    """Auxiliary Hermite Coulomb integral R^n_{tuv}."""
    if t < 0 or u < 0 or v < 0:
        return 0.0
    if t == u == v == 0:
        r2 = px * px + py * py + pz * pz
        return (-2 * p) ** n * boys(n, p * r2)
    if t > 0:
        return ((t - 1) * hermite_coulomb(t - 2, u, v, n + 1, p, px, py, pz)
                + px * hermite_coulomb(t - 1, u, v, n + 1, p, px, py, pz))
    if u > 0:
        return ((u - 1) * hermite_coulomb(t, u - 2, v, n + 1, p, px, py, pz)
                + py * hermite_coulomb(t, u - 1, v, n + 1, p, px, py, pz))
    return ((v - 1) * hermite_coulomb(t, u, v - 2, n + 1, p, px, py, pz)
            + pz * hermite_coulomb(t, u, v - 1, n + 1, p, px, py, pz))


def prim_overlap(la, lb, a, b, ra, rb):
    p = a + b
    s = (math.pi / p) ** 1.5
    for k in range(3):
        s *= hermite_coef(la[k], lb[k], 0, ra[k] - rb[k], a, b)
    # E already carries the gaussian prefactor along each axis; (pi/p)^{3/2}
    # collects the three hermite integrals.
    return s


def prim_kinetic(la, lb, a, b, ra, rb):
    lb = tuple(lb)
    term0 = b * (2 * sum(lb) + 3) * prim_overlap(la, lb, a, b, ra, rb)
    term1 = 0.0
    term2 = 0.0
    for k in range(3):
        up = list(lb)
        up[k] += 2
        term1 += prim_overlap(la, tuple(up), a, b, ra, rb)
        if lb[k] >= 2:
            dn = list(lb)
            dn[k] -= 2
            term2 += lb[k] * (lb[k] - 1) * prim_overlap(la, tuple(dn), a, b, ra, rb)
    return term0 - 2 * b * b * term1 - 0.5 * term2


def prim_nuclear(la, lb, a, b, ra, rb, rc):
    p = a + b
    rp = (a * np.asarray(ra) + b * np.asarray(rb)) / p
    val = 0.0
    for t in range(la[0] + lb[0] + 1):
        et = hermite_coef(la[0], lb[0], t, ra[0] - rb[0], a, b)
        for u in range(la[1] + lb[1] + 1):
            eu = hermite_coef(la[1], lb[1], u, ra[1] - rb[1], a, b)
            for v in range(la[2] + lb[2] + 1):
                ev = hermite_coef(la[2], lb[2], v, ra[2] - rb[2], a, b)
                val += et * eu * ev * hermite_coulomb(
                    t, u, v, 0, p, rp[0] - rc[0], rp[1] - rc[1], rp[2] - rc[2])
    return 2 * math.pi / p * val


def prim_eri(la, lb, lc, ld, a, b, c, d, ra, rb, rc, rd):
    p = a + b
    q = c + d
    alpha = p * q / (p + q)
    rp = (a * np.asarray(ra) + b * np.asarray(rb)) / p
    rq = (c * np.asarray(rc) + d * np.asarray(rd)) / q
    val = 0.0
    for t in range(la[0] + lb[0] + 1):
        e1t = hermite_coef(la[0], lb[0], t, ra[0] - rb[0], a, b)
        for u in range(la[1] + lb[1] + 1):
            e1u = hermite_coef(la[1], lb[1], u, ra[1] - rb[1], a, b)
            for v in range(la[2] + lb[2] + 1):
                e1v = hermite_coef(la[2], lb[2], v, ra[2] - rb[2], a, b)
                for tau in range(lc[0] + ld[0] + 1):
                    e2t = hermite_coef(lc[0], ld[0], tau, rc[0] - rd[0], c, d)
                    for nu in range(lc[1] + ld[1] + 1):
                        e2u = hermite_coef(lc[1], ld[1], nu, rc[1] - rd[1], c, d)
                        for phi in range(lc[2] + ld[2] + 1):
                            e2v = hermite_coef(lc[2], ld[2], phi, rc[2] - rd[2], c, d)
                            r = hermite_coulomb(
                                t + tau, u + nu, v + phi, 0, alpha,
                                rp[0] - rq[0], rp[1] - rq[1], rp[2] - rq[2])
                            sign = (-1) ** (tau + nu + phi)
                            val += (e1t * e1u * e1v * e2t * e2u * e2v
                                    * sign * r)
    return val * 2 * math.pi ** 2.5 / (p * q * math.sqrt(p + q))


def prim_norm(l, alpha):
    lx, ly, lz = l
    df = lambda n: 1.0 if n <= 0 else float(np.prod(np.arange(n, 0, -2)))
    num = (2 * alpha / math.pi) ** 0.75 * (4 * alpha) ** (sum(l) / 2)
    den = math.sqrt(df(2 * lx - 1) * df(2 * ly - 1) * df(2 * lz - 1))
    return num / den


class BasisFunction:
    def __init__(self, center, l, exps, coefs):
        self.center = np.asarray(center, dtype=float)
        self.l = tuple(l)
        self.exps = list(exps)
        raw = [c * prim_norm(self.l, a) for c, a in zip(coefs, exps)]
        # normalize the contracted function
        s = 0.0
        for ci, ai in zip(raw, exps):
            for cj, aj in zip(raw, exps):
                s += ci * cj * prim_overlap(self.l, self.l, ai, aj,
                                            self.center, self.center)
        self.coefs = [c / math.sqrt(s) for c in raw]


def build_basis(atoms):
    fns = []
    for sym, center in atoms:
        for shell, exps, cs, cp in STO3G[sym]:
            fns.append(BasisFunction(center, (0, 0, 0), exps, cs))
            if shell == "SP":
                for l in [(1, 0, 0), (0, 1, 0), (0, 0, 1)]:
                    fns.append(BasisFunction(center, l, exps, cp))
    return fns


def contracted(kernel, *fns):
    """Contract a primitive-integral kernel over basis-function primitives."""
    val = 0.0
    if len(fns) == 2:
        f1, f2 = fns
        for c1, a1 in zip(f1.coefs, f1.exps):
            for c2, a2 in zip(f2.coefs, f2.exps):
                val += c1 * c2 * kernel(a1, a2)
    else:
        f1, f2, f3, f4 = fns
        for c1, a1 in zip(f1.coefs, f1.exps):
            for c2, a2 in zip(f2.coefs, f2.exps):
                for c3, a3 in zip(f3.coefs, f3.exps):
                    for c4, a4 in zip(f4.coefs, f4.exps):
                        val += c1 * c2 * c3 * c4 * kernel(a1, a2, a3, a4)
    return val


def integrals(atoms):
    fns = build_basis(atoms)
    n = len(fns)
    S = np.zeros((n, n))
    T = np.zeros((n, n))
    V = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            fi, fj = fns[i], fns[j]
            S[i, j] = S[j, i] = contracted(
                lambda a, b: prim_overlap(fi.l, fj.l, a, b, fi.center, fj.center),
                fi, fj)
            T[i, j] = T[j, i] = contracted(
                lambda a, b: prim_kinetic(fi.l, fj.l, a, b, fi.center, fj.center),
                fi, fj)
            v = 0.0
            for sym, rc in atoms:
                v -= NUCLEAR_CHARGE[sym] * contracted(
                    lambda a, b: prim_nuclear(fi.l, fj.l, a, b,
                                              fi.center, fj.center, rc),
                    fi, fj)
            V[i, j] = V[j, i] = v

    eri = np.zeros((n, n, n, n))
    done = set()
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    key = canonical_quartet(i, j, k, l)
                    if key in done:
                        continue
                    done.add(key)
                    fi, fj, fk, fl = fns[i], fns[j], fns[k], fns[l]
                    val = contracted(
                        lambda a, b, c, d: prim_eri(
                            fi.l, fj.l, fk.l, fl.l, a, b, c, d,
                            fi.center, fj.center, fk.center, fl.center),
                        fi, fj, fk, fl)
                    for (p, q, r, s) in quartet_perms(i, j, k, l):
                        eri[p, q, r, s] = val
    e_nuc = 0.0
    for x in range(len(atoms)):
        for y in range(x):
            zx, zy = NUCLEAR_CHARGE[atoms[x][0]], NUCLEAR_CHARGE[atoms[y][0]]
            e_nuc += zx * zy / np.linalg.norm(
                np.asarray(atoms[x][1]) - np.asarray(atoms[y][1]))
    return S, T, V, eri, e_nuc


def quartet_perms(i, j, k, l):
    return {(i, j, k, l), (j, i, k, l), (i, j, l, k), (j, i, l, k),
            (k, l, i, j), (l, k, i, j), (k, l, j, i), (l, k, j, i)}


def canonical_quartet(i, j, k, l):
    ij = (max(i, j), min(i, j))
    kl = (max(k, l), min(k, l))
    return max(ij + kl, kl + ij)


# ----------------------------------------------------------------------------
# Restricted Hartree-Fock
# ----------------------------------------------------------------------------

def rhf(S, T, V, eri, e_nuc, n_elec, max_iter=200, conv=1e-12):
    hcore = T + V
    n = S.shape[0]
    nocc = n_elec // 2
    s_eval, s_evec = np.linalg.eigh(S)
    X = s_evec @ np.diag(s_eval ** -0.5) @ s_evec.T
    D = np.zeros((n, n))
    e_old = 0.0
    fock_list, err_list = [], []
    for it in range(max_iter):
        J = np.einsum("pqrs,rs->pq", eri, D)
        K = np.einsum("prqs,rs->pq", eri, D)
        F = hcore + 2 * J - K
        # DIIS
        err = X.T @ (F @ D @ S - S @ D @ F) @ X
        fock_list.append(F)
        err_list.append(err)
        if len(fock_list) > 8:
            fock_list.pop(0)
            err_list.pop(0)
        if len(fock_list) > 1:
            m = len(fock_list)
            B = -np.ones((m + 1, m + 1))
            B[m, m] = 0.0
            for a in range(m):
                for b in range(m):
                    B[a, b] = np.sum(err_list[a] * err_list[b])
            rhs = np.zeros(m + 1)
            rhs[m] = -1.0
            try:
                w = np.linalg.solve(B, rhs)[:m]
                F = sum(wi * fi for wi, fi in zip(w, fock_list))
            except np.linalg.LinAlgError:
                pass
        Fp = X.T @ F @ X
        eps, Cp = np.linalg.eigh(Fp)
        C = X @ Cp
        D = C[:, :nocc] @ C[:, :nocc].T
        e_elec = np.sum(D * (hcore + hcore + 2 * J - K))
        if abs(e_elec - e_old) < conv and it > 3:
            break
        e_old = e_elec
    J = np.einsum("pqrs,rs->pq", eri, D)
    K = np.einsum("prqs,rs->pq", eri, D)
    e_elec = np.sum(D * (2 * hcore + 2 * J - K))
    F = hcore + 2 * J - K
    Fp = X.T @ F @ X
    eps, Cp = np.linalg.eigh(Fp)
    C = X @ Cp
    return e_elec + e_nuc, eps, C


def mo_transform(hcore, eri, C):
    h_mo = C.T @ hcore @ C
    tmp = np.einsum("pqrs,sl->pqrl", eri, C)
    tmp = np.einsum("pqrl,rk->pqkl", tmp, C)
    tmp = np.einsum("pqkl,qj->pjkl", tmp, C)
    eri_mo = np.einsum("pjkl,pi->ijkl", tmp, C)
    return h_mo, eri_mo


# ----------------------------------------------------------------------------
# FCIDUMP export
# ----------------------------------------------------------------------------

def write_fcidump(path, h_mo, eri_mo, e_nuc, n_elec, ms2=0):
    n = h_mo.shape[0]
    lines = [f"&FCI NORB={n},NELEC={n_elec},MS2={ms2},"]
    lines.append("  ORBSYM=" + "1," * n)
    lines.append("  ISYM=1,")
    lines.append("&END")
    seen = set()
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    key = canonical_quartet(i, j, k, l)
                    if key in seen:
                        continue
                    seen.add(key)
                    v = eri_mo[i, j, k, l]
                    if abs(v) > 1e-16:
                        lines.append(f"{v: .16e} {i+1:3d} {j+1:3d} {k+1:3d} {l+1:3d}")
    for i in range(n):
        for j in range(i + 1):
            if abs(h_mo[i, j]) > 1e-16:
                lines.append(f"{h_mo[i, j]: .16e} {i+1:3d} {j+1:3d}   0   0")
    lines.append(f"{e_nuc: .16e}   0   0   0   0")
    Path(path).write_text("\n".join(lines) + "\n")


# ----------------------------------------------------------------------------
# String-based full CI (independent reference implementation)
# ----------------------------------------------------------------------------

def make_strings(n_orb, n_elec):
    """All bitstrings with n_elec bits set among n_orb, ascending."""
    out = []
    for bits in range(1 << n_orb):
        if bin(bits).count("1") == n_elec:
            out.append(bits)
    out.sort()
    return out


def excitation_matrices(strings, n_orb):
    """Sparse matrices for spatial-orbital single excitations E_pq = a+_p a_q."""
    index = {s: i for i, s in enumerate(strings)}
    n = len(strings)
    mats = {}
    for p in range(n_orb):
        for q in range(n_orb):
            rows, cols, vals = [], [], []
            for i, s in enumerate(strings):
                if not (s >> q) & 1:
                    continue
                t = s & ~(1 << q)
                if (t >> p) & 1:
                    continue
                u = t | (1 << p)
                # sign: electrons between annihilation and creation positions
                lo, hi = (p, q) if p < q else (q, p)
                mask = ((1 << hi) - 1) & ~((1 << (lo + 1)) - 1)
                sign = (-1) ** bin(t & mask).count("1")
                rows.append(index[u])
                cols.append(i)
                vals.append(float(sign))
            mats[(p, q)] = scipy.sparse.csr_matrix(
                (vals, (rows, cols)), shape=(n, n))
    return mats


def fci_ground(h_mo, eri_mo, e_nuc, n_elec, n_orb):
    na = n_elec // 2
    strings = make_strings(n_orb, na)
    ns = len(strings)
    E = excitation_matrices(strings, n_orb)
    k_eff = h_mo - 0.5 * np.einsum("pqqs->ps", eri_mo)
    K = sum(k_eff[p, q] * E[(p, q)] for p in range(n_orb) for q in range(n_orb)
            if abs(k_eff[p, q]) > 1e-14)
    M = {}
    for r in range(n_orb):
        for s in range(n_orb):
            m = sum(eri_mo[p, q, r, s] * E[(p, q)]
                    for p in range(n_orb) for q in range(n_orb)
                    if abs(eri_mo[p, q, r, s]) > 1e-14)
            if scipy.sparse.issparse(m):
                M[(r, s)] = m.tocsr()

    def matvec(vec):
        c = vec.reshape(ns, ns)
        sigma = K @ c + c @ K.T
        for (r, s), m in M.items():
            d = E[(r, s)] @ c + c @ E[(r, s)].T
            sigma += 0.5 * (m @ d + d @ m.T)
        return sigma.ravel()

    dim = ns * ns
    if dim <= 400:
        H = np.zeros((dim, dim))
        eye = np.eye(dim)
        for i in range(dim):
            H[:, i] = matvec(eye[:, i])
        w, v = np.linalg.eigh(H)
        return w[0] + e_nuc, v[:, 0]
    op = scipy.sparse.linalg.LinearOperator((dim, dim), matvec=matvec)
    w, v = scipy.sparse.linalg.eigsh(op, k=1, which="SA", maxiter=2000)
    return w[0] + e_nuc, v[:, 0]


def mp2(eps, eri_mo, nocc):
    """Closed-shell MP2 correlation energy from spatial MO quantities."""
    n = eri_mo.shape[0]
    e = 0.0
    for i in range(nocc):
        for j in range(nocc):
            for a in range(nocc, n):
                for b in range(nocc, n):
                    iajb = eri_mo[i, a, j, b]
                    ibja = eri_mo[i, b, j, a]
                    e += iajb * (2 * iajb - ibja) / (
                        eps[i] + eps[j] - eps[a] - eps[b])
    return e


# ----------------------------------------------------------------------------
# Fixture definitions
# ----------------------------------------------------------------------------

FIXTURES = [
    ("h2_0.70", [("H", 0.0), ("H", 0.70)], 2, True),
    ("h2_2.00", [("H", 0.0), ("H", 2.00)], 2, True),
    ("h2_3.00", [("H", 0.0), ("H", 3.00)], 2, True),
    ("h2_4.00", [("H", 0.0), ("H", 4.00)], 2, True),
    ("lih_1.5949", [("Li", 0.0), ("H", 1.5949)], 4, True),
    ("nah_1.8874", [("Na", 0.0), ("H", 1.8874)], 12, True),
]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="src/rdmpt2/fixtures")
    args = ap.parse_args()
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    manifest = {
        "generator": "scripts/make_fixtures.py (standalone RHF + string FCI)",
        "basis": "STO-3G (exponents/coefficients embedded in the generator)",
        "basis_tables": {el: [{"shell": sh, "exps": e, "coef_s": cs, "coef_p": cp}
                              for sh, e, cs, cp in shells]
                         for el, shells in STO3G.items()},
        "units": "geometries in Angstrom, energies in Hartree",
        "convention": "FCIDUMP holds chemists' (ij|kl) over canonical RHF MOs",
        "fixtures": {},
    }

    for name, atoms_ang, n_elec, do_fci in FIXTURES:
        atoms = [(sym, np.array([0.0, 0.0, z * ANGSTROM_TO_BOHR]))
                 for sym, z in atoms_ang]
        S, T, V, eri, e_nuc = integrals(atoms)
        e_hf, eps, C = rhf(S, T, V, eri, e_nuc, n_elec)
        h_mo, eri_mo = mo_transform(T + V, eri, C)
        n_orb = h_mo.shape[0]
        fname = f"{name}.fcidump"
        write_fcidump(outdir / fname, h_mo, eri_mo, e_nuc, n_elec)
        nocc = n_elec // 2
        # active virtual = the orbital most strongly pair-coupled to the HOMO
        # (the antibonding partner; for LiH/NaH the canonical LUMO is a diffuse
        # orbital nearly decoupled from the bond)
        homo = nocc - 1
        pair_energy = {}
        for a in range(nocc, n_orb):
            k = eri_mo[homo, a, homo, a]
            pair_energy[a] = k * k / (2 * (eps[a] - eps[homo]))
        active_virtual = max(pair_energy, key=pair_energy.get)
        entry = {
            "file": fname,
            "molecule": name.split("_")[0].upper().replace("LIH", "LiH").replace("NAH", "NaH"),
            "geometry_angstrom": {sym if i == 0 else f"{sym}{i}": z
                                  for i, (sym, z) in enumerate(atoms_ang)},
            "bond_length_angstrom": atoms_ang[1][1],
            "n_spatial_orbitals": n_orb,
            "n_electrons": n_elec,
            "e_hf": float(e_hf),
            "orbital_energies": [float(x) for x in eps],
            "homo_spatial_index": homo,
            "lumo_spatial_index": nocc,
            "active_spatial_orbitals": [homo, active_virtual],
            "active_virtual_pair_energies": {str(a): float(v)
                                             for a, v in pair_energy.items()},
            "e_mp2_corr_full": float(mp2(eps, eri_mo, nocc)),
        }
        if do_fci:
            e_fci, _ = fci_ground(h_mo, eri_mo, e_nuc, n_elec, n_orb)
            entry["e_fci_full"] = float(e_fci)
            entry["e_fci_full_method"] = "string-based direct CI (this script)"
        manifest["fixtures"][name] = entry
        print(f"{name:12s}  E_HF = {e_hf:.10f}   "
              + (f"E_FCI = {entry.get('e_fci_full', float('nan')):.10f}" if do_fci else ""))

    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    # Validation checkpoints against standard literature values.
    checks = []
    lih = manifest["fixtures"]["lih_1.5949"]
    checks.append(("LiH FCI vs literature -7.8823622868",
                   abs(lih["e_fci_full"] - (-7.8823622868)) < 2e-4))
    h2 = manifest["fixtures"]["h2_0.70"]
    checks.append(("H2(0.70A) HF in sane range",
                   -1.13 < h2["e_hf"] < -1.10))
    for label, ok in checks:
        print(("PASS  " if ok else "FAIL  ") + label)
    if not all(ok for _, ok in checks):
        sys.exit("validation checkpoints failed")


if __name__ == "__main__":
    main()
