"""Statevector simulation: Jordan-Wigner operators, the 3-parameter ansatz,
stochastic-Pauli noise trajectories, shot sampling and readout mitigation.

Qubit k hosts spin orbital k (alpha/beta interleaved).  Basis states are
little-endian: bit k of the amplitude index is the occupation of qubit k, and
bitstrings are printed with qubit 0 as the leftmost character.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .hamio import ValidationError

_PAULI_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# single-qubit product table: (a, b) -> (phase, result)
_MUL = {}
for _a in "IXYZ":
    _MUL[("I", _a)] = (1.0, _a)
    _MUL[(_a, "I")] = (1.0, _a)
    _MUL[(_a, _a)] = (1.0, "I")
_MUL[("X", "Y")] = (1j, "Z")
_MUL[("Y", "X")] = (-1j, "Z")
_MUL[("Y", "Z")] = (1j, "X")
_MUL[("Z", "Y")] = (-1j, "X")
_MUL[("Z", "X")] = (1j, "Y")
_MUL[("X", "Z")] = (-1j, "Y")


@dataclass(frozen=True)
class PauliString:
    """A Pauli word with a complex coefficient.

    ``ops`` holds one letter per qubit (position k = qubit k).
    """

    ops: str
    coeff: complex = 1.0

    def __post_init__(self):
        if any(c not in "IXYZ" for c in self.ops):
            raise ValidationError(f"bad Pauli label {self.ops!r}")

    @property
    def n_qubits(self) -> int:
        return len(self.ops)

    @property
    def support(self) -> tuple:
        return tuple(k for k, c in enumerate(self.ops) if c != "I")

    def __mul__(self, other: "PauliString") -> "PauliString":
        if len(self.ops) != len(other.ops):
            raise ValidationError("qubit counts differ")
        phase = self.coeff * other.coeff
        out = []
        for a, b in zip(self.ops, other.ops):
            ph, c = _MUL[(a, b)]
            phase *= ph
            out.append(c)
        return PauliString("".join(out), phase)

    def matrix(self) -> np.ndarray:
        """Dense matrix in the little-endian basis (qubit 0 = LSB)."""
        m = np.array([[self.coeff]], dtype=complex)
        for c in self.ops:  # kron grows most-significant side first
            m = np.kron(_PAULI_MATS[c], m)
        return m

    def z_parity_signs(self) -> np.ndarray:
        """(-1)^(bit parity on support) for every basis index; requires I/Z only
        up to a basis rotation, used for expectation from counts."""
        n = len(self.ops)
        signs = np.ones(1 << n)
        idx = np.arange(1 << n)
        for k in self.support:
            signs *= 1 - 2.0 * ((idx >> k) & 1)
        return signs


def combine_paulis(terms, tol=1e-14):
    """Sum a list of PauliStrings, merging like words and dropping zeros."""
    acc = {}
    for t in terms:
        acc[t.ops] = acc.get(t.ops, 0.0) + t.coeff
    return [PauliString(ops, c) for ops, c in sorted(acc.items()) if abs(c) > tol]


def jw_ladder(p: int, n_qubits: int, dagger: bool):
    """Jordan-Wigner image of a_p (or a_p^dagger): 1/2 (X_p +- i Y_p) Z_{p-1}..Z_0."""
    if p < 0 or p >= n_qubits:
        raise ValidationError(f"mode index {p} out of range for {n_qubits} qubits")
    zs = "Z" * p
    tail = "I" * (n_qubits - p - 1)
    sign = -1j if dagger else 1j
    return [PauliString(zs + "X" + tail, 0.5),
            PauliString(zs + "Y" + tail, 0.5 * sign)]


def jw_operator(ops, n_qubits: int):
    """Pauli expansion of a product of ladder operators.

    ``ops`` is a sequence of (mode index, dagger flag), applied left to right
    as written, e.g. [(1, True), (0, False)] is a_1^dagger a_0.
    """
    terms = [PauliString("I" * n_qubits, 1.0)]
    for p, dag in ops:
        factors = jw_ladder(p, n_qubits, dag)
        terms = [t * f for t in terms for f in factors]
    return combine_paulis(terms)


def jw_hermitian(ops, n_qubits: int):
    """Pauli expansion of (A + A^dagger)/2 for the ladder product A."""
    fwd = jw_operator(ops, n_qubits)
    rev = jw_operator([(p, not dag) for p, dag in reversed(ops)], n_qubits)
    out = combine_paulis(fwd + rev)
    return [PauliString(t.ops, 0.5 * t.coeff) for t in out]


# ---------------------------------------------------------------------------
# Gates and circuits
# ---------------------------------------------------------------------------

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_X = _PAULI_MATS["X"]
_SDG = np.diag([1, -1j]).astype(complex)
_CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]],
                 dtype=complex)
_CZ = np.diag([1, 1, 1, -1]).astype(complex)
_FSWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, -1]],
                  dtype=complex)


def _givens(phi):
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[1, 0, 0, 0], [0, c, -s, 0], [0, s, c, 0], [0, 0, 0, 1]],
                    dtype=complex)


@dataclass(frozen=True)
class Gate:
    name: str
    qubits: tuple
    matrix: np.ndarray

    @property
    def arity(self) -> int:
        return len(self.qubits)


@dataclass
class Circuit:
    """An ordered gate list on a fixed register.

    Two-qubit matrices use the local basis |n_a n_b> for qubits (a, b) with
    the first-listed qubit as the most significant local bit.
    """

    n_qubits: int
    gates: list = field(default_factory=list)

    def add(self, name, qubits, matrix):
        q = tuple(qubits)
        if len(set(q)) != len(q) or any(k < 0 or k >= self.n_qubits for k in q):
            raise ValidationError(f"bad qubit tuple {q}")
        self.gates.append(Gate(name, q, np.asarray(matrix, dtype=complex)))
        return self

    def x(self, q):
        return self.add("x", (q,), _X)

    def h(self, q):
        return self.add("h", (q,), _H)

    def sdg(self, q):
        return self.add("sdg", (q,), _SDG)

    def cnot(self, control, target):
        return self.add("cnot", (control, target), _CNOT)

    def cz(self, a, b):
        return self.add("cz", (a, b), _CZ)

    def fswap(self, a, b):
        return self.add("fswap", (a, b), _FSWAP)

    def givens(self, a, b, phi):
        return self.add("givens", (a, b), _givens(phi))

    def extended(self, other: "Circuit") -> "Circuit":
        if other.n_qubits != self.n_qubits:
            raise ValidationError("register sizes differ")
        return Circuit(self.n_qubits, list(self.gates) + list(other.gates))

    def unitary(self) -> np.ndarray:
        dim = 1 << self.n_qubits
        u = np.eye(dim, dtype=complex)
        for k in range(dim):
            sv = StateVector.computational(self.n_qubits, k)
            for gate in self.gates:
                sv.apply(gate)
            u[:, k] = sv.amplitudes
        return u


class StateVector:
    """Complex amplitudes over the 2^n little-endian basis."""

    def __init__(self, amplitudes, n_qubits=None):
        self.amplitudes = np.asarray(amplitudes, dtype=complex)
        self.n_qubits = n_qubits if n_qubits is not None else int(
            np.log2(self.amplitudes.size))
        if self.amplitudes.size != 1 << self.n_qubits:
            raise ValidationError("amplitude count is not a power of two")

    @classmethod
    def computational(cls, n_qubits, index=0):
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(amps, n_qubits)

    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    def apply(self, gate: Gate):
        self.amplitudes = _apply_gate_batch(
            self.amplitudes[None, :], gate, self.n_qubits)[0]
        return self

    def probabilities(self):
        return np.abs(self.amplitudes) ** 2

    def expectation(self, pauli: PauliString) -> complex:
        psi = self.amplitudes
        out = _apply_pauli(psi, pauli)
        return complex(np.vdot(psi, out))


def simulate(circuit: Circuit) -> StateVector:
    sv = StateVector.computational(circuit.n_qubits, 0)
    for gate in circuit.gates:
        sv.apply(gate)
    return sv


def _apply_gate_batch(states, gate, n_qubits):
    """Apply a 1- or 2-qubit gate to a (batch, 2^n) array of amplitudes."""
    batch = states.shape[0]
    t = states.reshape((batch,) + (2,) * n_qubits)
    # axis for qubit k in the reshaped tensor (axis 0 is the batch)
    axes = [1 + (n_qubits - 1 - q) for q in gate.qubits]
    m = len(axes)
    t = np.moveaxis(t, axes, range(1, 1 + m))
    lead = t.shape[1 + m:]
    t = t.reshape(batch, 1 << m, -1)
    t = np.einsum("ij,bjk->bik", gate.matrix, t)
    t = t.reshape((batch,) + (2,) * m + lead)
    t = np.moveaxis(t, range(1, 1 + m), axes)
    return t.reshape(batch, 1 << n_qubits)


def _expand_matrix(matrix, qubits, n_qubits):
    """Embed a 1- or 2-qubit gate matrix into the full 2^n unitary.

    Batched trajectory evolution then reduces to one matmul per gate, which
    is much faster than axis shuffling for small registers.
    """
    dim = 1 << n_qubits
    m = len(qubits)
    full = np.zeros((dim, dim), dtype=complex)
    rest = [q for q in range(n_qubits) if q not in qubits]
    for loc_in in range(1 << m):
        base_in = sum(((loc_in >> (m - 1 - k)) & 1) << qubits[k] for k in range(m))
        for loc_out in range(1 << m):
            amp = matrix[loc_out, loc_in]
            if amp == 0:
                continue
            base_out = sum(((loc_out >> (m - 1 - k)) & 1) << qubits[k] for k in range(m))
            for fill in range(1 << len(rest)):
                extra = sum(((fill >> k) & 1) << rest[k] for k in range(len(rest)))
                full[base_out | extra, base_in | extra] = amp
    return full


def _apply_pauli(psi, pauli: PauliString):
    n = pauli.n_qubits
    out = psi.copy()
    for k, c in enumerate(pauli.ops):
        if c == "I":
            continue
        out = _apply_gate_batch(out[None, :], Gate("p", (k,), _PAULI_MATS[c]), n)[0]
    return out * pauli.coeff


# ---------------------------------------------------------------------------
# The 3-parameter ansatz (4 qubits, 2 electrons)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnsatzParameters:
    """Angles driving the paired double (theta0) and the alpha/beta single
    excitations (theta1/theta2); (0,0,0) prepares the reference determinant."""

    theta0: float = 0.0
    theta1: float = 0.0
    theta2: float = 0.0

    def __iter__(self):
        return iter((self.theta0, self.theta1, self.theta2))

    @classmethod
    def from_any(cls, params):
        if isinstance(params, cls):
            return params
        t0, t1, t2 = params
        return cls(float(t0), float(t1), float(t2))


def build_ansatz(params) -> Circuit:
    """Reference-state preparation plus the three excitation rotations.

    Each excitation is compiled to two-qubit primitives (Givens partial swaps
    with fermionic-swap / CNOT conjugation).  At theta = pi the corresponding
    excitation has full weight; the unitary on the N=2, Sz=0 sector matches
    the exact exponentials of the Jordan-Wigner generators.
    """
    p = AnsatzParameters.from_any(params)
    c = Circuit(4)
    c.x(0).x(1)
    # paired double 01 -> 23: Givens on the pair marker, anti-controlled on q0
    c.cnot(1, 0).cnot(3, 2)
    c.givens(1, 3, -p.theta0 / 4).cz(0, 1).givens(1, 3, -p.theta0 / 4).cz(0, 1)
    c.cnot(3, 2).cnot(1, 0)
    # alpha single 0 -> 2 (modes made adjacent by a fermionic swap)
    c.fswap(1, 2).givens(0, 1, -p.theta1 / 2).fswap(1, 2)
    # beta single 1 -> 3
    c.fswap(2, 3).givens(1, 2, -p.theta2 / 2).fswap(2, 3)
    return c


HF_INDEX = 0b0011  # qubits 0 and 1 occupied


# ---------------------------------------------------------------------------
# Noise model and sampling
# ---------------------------------------------------------------------------

_PAULIS_1Q = [_PAULI_MATS[c] for c in "XYZ"]
_PAULIS_2Q = [np.kron(_PAULI_MATS[a], _PAULI_MATS[b])
              for a in "IXYZ" for b in "IXYZ"][1:]  # drop II


@dataclass
class NoiseModel:
    """Depolarizing-plus-readout noise description.

    ``readout[q]`` is the 2x2 confusion matrix with columns indexed by the
    true bit: readout[q][m, t] = P(measured m | true t).
    """

    p1: float = 0.001
    p2: float = 0.01
    readout: np.ndarray = None
    n_qubits: int = 4

    def __post_init__(self):
        if not (0 <= self.p1 <= 1 and 0 <= self.p2 <= 1):
            raise ValidationError("depolarizing probabilities must be in [0, 1]")
        if self.readout is None:
            eps = 0.02
            self.readout = np.array([[[1 - eps, eps], [eps, 1 - eps]]] * self.n_qubits)
        self.readout = np.asarray(self.readout, dtype=float)
        if self.readout.shape != (self.n_qubits, 2, 2):
            raise ValidationError("readout must be one 2x2 matrix per qubit")
        if not np.allclose(self.readout.sum(axis=1), 1.0, atol=1e-10):
            raise ValidationError("confusion matrix columns must sum to 1")

    @classmethod
    def ideal(cls, n_qubits=4):
        return cls(p1=0.0, p2=0.0,
                   readout=np.array([np.eye(2)] * n_qubits), n_qubits=n_qubits)

    @classmethod
    def from_json(cls, path):
        cfg = json.loads(open(path).read())
        n = int(cfg.get("n_qubits", 4))
        readout = cfg.get("readout")
        if isinstance(readout, (int, float)):
            eps = float(readout)
            readout = [[[1 - eps, eps], [eps, 1 - eps]]] * n
        return cls(p1=float(cfg.get("p1", 0.001)), p2=float(cfg.get("p2", 0.01)),
                   readout=np.asarray(readout) if readout is not None else None,
                   n_qubits=n)

    def to_json(self, path):
        cfg = {"p1": self.p1, "p2": self.p2, "n_qubits": self.n_qubits,
               "readout": self.readout.tolist()}
        with open(path, "w") as fh:
            json.dump(cfg, fh, indent=2, sort_keys=True)

    @property
    def is_trivial(self):
        return (self.p1 == 0.0 and self.p2 == 0.0
                and np.allclose(self.readout, np.eye(2)[None, :, :], atol=0))


def bitstring(index: int, n_qubits: int) -> str:
    """Qubit-0-first bitstring for a little-endian basis index."""
    return "".join(str((index >> k) & 1) for k in range(n_qubits))


def bitstring_index(bits: str) -> int:
    return sum(1 << k for k, b in enumerate(bits) if b == "1")


@dataclass
class ShotTable:
    """Measured counts for one basis-rotated sampling circuit.

    ``basis`` names the measured Pauli basis per qubit (Z where untouched).
    Counts may be non-integer after readout mitigation.
    """

    basis: str
    counts: dict
    shots: int
    seed: int = 0
    n_qubits: int = 4

    def total(self) -> float:
        return float(sum(self.counts.values()))

    def count_vector(self) -> np.ndarray:
        v = np.zeros(1 << self.n_qubits)
        for bits, c in self.counts.items():
            if len(bits) != self.n_qubits:
                raise ValidationError(f"bitstring {bits!r} has wrong length")
            v[bitstring_index(bits)] = c
        return v

    def expectation(self, pauli: PauliString) -> float:
        """Expectation of a Pauli word measured in this table's basis."""
        for k, c in enumerate(pauli.ops):
            if c != "I" and c != self.basis[k]:
                raise ValidationError(
                    f"{pauli.ops} is not measurable in basis {self.basis}")
        v = self.count_vector()
        tot = v.sum()
        if tot <= 0:
            raise ValidationError("empty shot table")
        diag = PauliString("".join("Z" if c != "I" else "I" for c in pauli.ops))
        return float(np.dot(diag.z_parity_signs(), v) / tot)

    def to_json(self) -> dict:
        return {"basis": self.basis, "counts": dict(sorted(self.counts.items())),
                "shots": self.shots, "seed": self.seed, "n_qubits": self.n_qubits}

    @classmethod
    def from_json(cls, d) -> "ShotTable":
        return cls(basis=d["basis"], counts=dict(d["counts"]), shots=int(d["shots"]),
                   seed=int(d.get("seed", 0)), n_qubits=int(d["n_qubits"]))


def _rng_for(seed, *key):
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))))


def apply_noise(circuit: Circuit, model: NoiseModel, seed: int):
    """A seeded noisy sampling channel for one circuit (trajectory method).

    Returns a callable shots -> {bitstring: count}.  With a trivial model the
    channel samples the exact Born distribution.
    """

    def sample(shots: int) -> dict:
        if shots <= 0:
            raise ValidationError("shots must be positive")
        rng = _rng_for(seed, 0)
        n = circuit.n_qubits
        if model is None or model.is_trivial:
            probs = simulate(circuit).probabilities()
            counts = rng.multinomial(shots, probs / probs.sum())
            return {bitstring(i, n): int(c) for i, c in enumerate(counts) if c}
        compiled = [(_expand_matrix(g.matrix, g.qubits, n).T.copy(), g.arity, g.qubits)
                    for g in circuit.gates]
        err_cache = {}

        def error_matrix(arity, qubits, k):
            key = (arity, qubits, k)
            if key not in err_cache:
                pm = (_PAULIS_1Q if arity == 1 else _PAULIS_2Q)[k]
                err_cache[key] = _expand_matrix(pm, qubits, n).T.copy()
            return err_cache[key]

        states = np.zeros((shots, 1 << n), dtype=complex)
        states[:, 0] = 1.0
        for full_t, arity, qubits in compiled:
            states = states @ full_t
            p_err = model.p1 if arity == 1 else model.p2
            if p_err <= 0:
                continue
            hit = rng.random(shots) < p_err
            if not hit.any():
                continue
            n_paulis = 3 if arity == 1 else 15
            which = rng.integers(0, n_paulis, size=shots)
            for k in range(n_paulis):
                rows = np.where(hit & (which == k))[0]
                if rows.size:
                    states[rows] = states[rows] @ error_matrix(arity, qubits, k)
        probs = np.abs(states) ** 2
        probs /= probs.sum(axis=1, keepdims=True)
        u = rng.random(shots)
        outcomes = (probs.cumsum(axis=1) > u[:, None]).argmax(axis=1)
        # readout confusion, one flip decision per qubit
        for q in range(n):
            bit = (outcomes >> q) & 1
            p_flip = np.where(bit == 0, model.readout[q][1, 0], model.readout[q][0, 1])
            flip = rng.random(shots) < p_flip
            outcomes = outcomes ^ (flip.astype(np.int64) << q)
        vals, cnts = np.unique(outcomes, return_counts=True)
        return {bitstring(int(i), n): int(c) for i, c in zip(vals, cnts)}

    return sample


def qwc_groups(observables):
    """Greedy grouping into qubit-wise commuting sets.

    Returns (group basis strings, assignment list index->group).
    """
    bases = []
    assignment = []
    for obs in observables:
        placed = False
        for gi, basis in enumerate(bases):
            merged = list(basis)
            ok = True
            for k, c in enumerate(obs.ops):
                if c == "I":
                    continue
                if merged[k] == "I":
                    merged[k] = c
                elif merged[k] != c:
                    ok = False
                    break
            if ok:
                bases[gi] = merged
                assignment.append(gi)
                placed = True
                break
        if not placed:
            bases.append(list(obs.ops))
            assignment.append(len(bases) - 1)
    return ["".join("Z" if c == "I" else c for c in b) for b in bases], assignment


def basis_rotation(basis: str) -> Circuit:
    """Gates mapping the given per-qubit Pauli basis onto Z measurements."""
    c = Circuit(len(basis))
    for q, b in enumerate(basis):
        if b == "X":
            c.h(q)
        elif b == "Y":
            c.sdg(q)
            c.h(q)
    return c


def measure_pauli_sets(circuit, observables, shots, model=None, seed=0):
    """Sample every observable, one circuit per qubit-wise commuting group."""
    if shots <= 0:
        raise ValidationError("shots must be positive")
    bases, _ = qwc_groups(observables)
    tables = []
    for gi, basis in enumerate(bases):
        rotated = circuit.extended(basis_rotation(basis))
        counts = apply_noise(rotated, model, seed=_group_seed(seed, gi))(shots)
        tables.append(ShotTable(basis=basis, counts=counts, shots=shots,
                                seed=seed, n_qubits=circuit.n_qubits))
    return tables


def _group_seed(seed, group_index):
    return (int(seed) << 16) + group_index


def mitigate_readout(table: ShotTable, model: NoiseModel) -> ShotTable:
    """Invert the per-qubit confusion matrices on the count distribution.

    Negative quasi-counts are clipped to zero and the total renormalized.
    """
    n = table.n_qubits
    v = table.count_vector()
    total = v.sum()
    t = v.reshape((2,) * n)
    for q in range(n):
        try:
            inv = np.linalg.inv(model.readout[q])
        except np.linalg.LinAlgError as exc:
            raise ValidationError(f"singular confusion matrix on qubit {q}") from exc
        axis = n - 1 - q
        t = np.moveaxis(np.tensordot(inv, np.moveaxis(t, axis, 0), axes=(1, 0)), 0, axis)
    v = t.reshape(-1)
    v = np.clip(v, 0.0, None)
    if v.sum() <= 0:
        raise ValidationError("mitigation annihilated all counts")
    v *= total / v.sum()
    counts = {bitstring(i, n): float(c) for i, c in enumerate(v) if c > 0}
    return ShotTable(basis=table.basis, counts=counts, shots=table.shots,
                     seed=table.seed, n_qubits=n)
