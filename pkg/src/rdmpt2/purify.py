"""Projection of measured 2-RDMs onto the nearest pure 2-electron state via
iterated application of the polynomial P -> 3P^2 - 2P^3.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import combinations

import numpy as np

from .hamio import ValidationError
from .rdm import RdmPair


class PurificationError(RuntimeError):
    """Raised when the polynomial iteration fails to reach a projector."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass
class PairBasisMatrix:
    """The 2-RDM reshaped over ordered pairs p < q.

    For a pure 2-electron state this matrix is rank one with trace
    N(N-1)/2 = 1 before normalization.
    """

    matrix: np.ndarray
    n_so: int

    @property
    def pairs(self):
        return list(combinations(range(self.n_so), 2))

    def trace(self) -> float:
        return float(np.trace(self.matrix))


def to_pair_basis(rdm: RdmPair, antisym_tol=1e-6) -> PairBasisMatrix:
    """Reshape rho2 into the ordered-pair basis, checking antisymmetry."""
    r2 = rdm.rho2
    viol = max(np.abs(r2 + r2.transpose(1, 0, 2, 3)).max(),
               np.abs(r2 + r2.transpose(0, 1, 3, 2)).max())
    if viol > antisym_tol:
        raise ValidationError(
            f"rho2 antisymmetry violated by {viol:.2e}; upstream assembly is broken")
    n = rdm.n_so
    pairs = list(combinations(range(n), 2))
    m = np.empty((len(pairs), len(pairs)))
    for a, (p, q) in enumerate(pairs):
        for b, (r, s) in enumerate(pairs):
            m[a, b] = r2[p, q, r, s]
    m = 0.5 * (m + m.T)
    return PairBasisMatrix(matrix=m, n_so=n)


def from_pair_basis(pbm: PairBasisMatrix) -> np.ndarray:
    """Inverse reshape; antisymmetry is restored exactly."""
    n = pbm.n_so
    rho2 = np.zeros((n, n, n, n))
    pairs = pbm.pairs
    for a, (p, q) in enumerate(pairs):
        for b, (r, s) in enumerate(pairs):
            v = pbm.matrix[a, b]
            rho2[p, q, r, s] = v
            rho2[q, p, r, s] = -v
            rho2[p, q, s, r] = -v
            rho2[q, p, s, r] = v
    return rho2


def mcweeney(pbm: PairBasisMatrix, tol=1e-10, max_iter=100):
    """Drive a near-idempotent hermitian matrix to a projector.

    Expects the input pre-scaled to unit trace (a pure 2-electron target).
    Returns (PairBasisMatrix, info) where info records iterations, the final
    residual ||P^2 - P||_F and whether eigenvalues started outside the
    polynomial's basin of attraction (-0.3, 1.3).
    """
    p = np.array(pbm.matrix, dtype=float)
    if not np.allclose(p, p.T, atol=1e-10):
        raise ValidationError("pair-basis matrix is not hermitian")
    evals = np.linalg.eigvalsh(p)
    basin_warning = bool(evals.min() < -0.3 or evals.max() > 1.3)
    residual = float(np.linalg.norm(p @ p - p))
    iterations = 0
    last = np.inf
    for iterations in range(max_iter + 1):
        if residual < tol:
            break
        if residual >= last and residual > 1e-6:
            raise PurificationError(
                f"purification residual stopped decreasing at {residual:.3e}",
                residual=residual, iterations=iterations)
        last = residual
        p2 = p @ p
        p = 3.0 * p2 - 2.0 * (p2 @ p)
        residual = float(np.linalg.norm(p @ p - p))
    else:
        raise PurificationError(
            f"no projector after {max_iter} iterations (residual {residual:.3e})",
            residual=residual, iterations=max_iter)
    info = {"iterations": iterations, "residual": residual,
            "basin_warning": basin_warning}
    return PairBasisMatrix(matrix=p, n_so=pbm.n_so), info


def purify_rdm(rdm: RdmPair, tol=1e-10, max_iter=100) -> RdmPair:
    """Full purification pipeline for a symmetrized 2-electron RDM.

    Reshape -> trace-normalize -> polynomial iteration -> restore the
    physical trace -> reshape back; rho1 is recomputed from the purified
    rho2 by partial trace so the pair stays mutually consistent.
    """
    n_elec = rdm.meta.n_electrons
    if n_elec != 2:
        raise ValidationError(
            f"purification targets 2-electron active spaces; got N={n_elec}. "
            "General-N purification needs semidefinite N-representability "
            "constraints, which are out of scope.")
    if rdm.meta.provenance not in ("symmetrized", "exact", "purified"):
        raise ValidationError(
            "purify_rdm expects a symmetrized RDM (enforce Sz and average "
            f"spin reflections first); got provenance {rdm.meta.provenance!r}")
    pbm = to_pair_basis(rdm)
    tr = pbm.trace()
    if tr <= 0:
        raise PurificationError(f"nonpositive pair trace {tr:.3e}")
    target = n_elec * (n_elec - 1) / 2.0
    pbm.matrix = pbm.matrix / tr
    pure, info = mcweeney(pbm, tol=tol, max_iter=max_iter)
    ptr = pure.trace()
    if ptr <= 0.5:
        raise PurificationError("purification collapsed to the zero projector")
    pure.matrix = pure.matrix * (target / ptr)
    rho2 = from_pair_basis(pure)
    rho1 = np.einsum("prqr->pq", rho2) / (n_elec - 1)
    meta = replace(rdm.meta, provenance="purified", purification=info)
    return RdmPair(rho1, rho2, meta)
