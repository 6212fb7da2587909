"""Symbolic operator sums on the matter/link chain.

An operator is stored as a dictionary mapping a term key to a complex
coefficient.  A term key is a tuple of (slot, label_id) pairs sorted by
slot; slots not listed carry the identity.  Labels live in a per-dimension
palette of small matrices.  For two-dimensional slots the palette is the
fixed Pauli set {I, X, Y, Z} and every local matrix is decomposed over it,
so dumps of spin-1/2 operators read as Pauli strings.  For larger link
spins the palette starts from {I, Z, P, M} (twice S^z and the two ladder
operators) and grows on demand; every palette matrix has at most one
nonzero entry per column, a property preserved under products, so applying
a term to a basis state never branches.

Matrices are written in digit order: digit 0 is matter spin down or link
S^z = -S.  The Pauli algebra is unchanged, only the storage order of rows
and columns differs from the textbook up/down order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg

from .lattice import Boundary, LatticeSpec

__all__ = [
    "LocalPalette",
    "get_palette",
    "OperatorSum",
    "PulseKind",
    "PulseSpec",
    "ModelParams",
    "ModelTerms",
    "matter_op",
    "link_op",
    "build_hopping",
    "build_mixing",
    "build_detuning",
    "build_model",
    "build_gauss_generator",
    "build_z2_generator",
    "commutator_norm",
    "symmetry_report",
]

_TOL = 1e-12


# ---------------------------------------------------------------------------
# local matrix palettes


def _pauli_matrices() -> dict[str, np.ndarray]:
    # digit order (down, up); see module docstring
    return {
        "I": np.eye(2, dtype=complex),
        "X": np.array([[0, 1], [1, 0]], dtype=complex),
        "Y": np.array([[0, 1j], [-1j, 0]], dtype=complex),
        "Z": np.array([[-1, 0], [0, 1]], dtype=complex),
    }


def _ladder_matrices(dim: int) -> dict[str, np.ndarray]:
    s = (dim - 1) / 2
    m = np.arange(dim) - s
    plus = np.zeros((dim, dim), dtype=complex)
    for k in range(dim - 1):
        plus[k + 1, k] = np.sqrt(s * (s + 1) - m[k] * (m[k] + 1))
    return {
        "I": np.eye(dim, dtype=complex),
        "Z": np.diag(2 * m).astype(complex),
        "P": plus,
        "M": plus.conj().T,
    }


def _single_column_structure(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
    """Per-column (target row, amplitude) arrays, or None if some column has
    more than one nonzero entry."""
    dim = mat.shape[0]
    tgt = np.full(dim, -1, dtype=np.int64)
    amp = np.zeros(dim, dtype=complex)
    for c in range(dim):
        rows = np.flatnonzero(np.abs(mat[:, c]) > _TOL)
        if rows.size > 1:
            return None
        if rows.size == 1:
            tgt[c] = rows[0]
            amp[c] = mat[rows[0], c]
    return tgt, amp


class LocalPalette:
    """Named small matrices for one local dimension, closed under products.

    dim == 2 uses the fixed Pauli basis and decomposes by trace projection.
    dim >= 3 interns new labels as needed; every label keeps the
    one-nonzero-per-column structure so products stay internable.
    """

    def __init__(self, dim: int):
        self.dim = dim
        self.names: list[str] = []
        self.mats: list[np.ndarray] = []
        self.targets: list[np.ndarray] = []
        self.amps: list[np.ndarray] = []
        self._by_name: dict[str, int] = {}
        self._product_memo: dict[tuple[int, int], tuple[int, complex] | None] = {}
        self._dagger_memo: dict[int, tuple[int, complex]] = {}
        self._conj_memo: dict[str, list[list[tuple[int, complex]]]] = {}
        seeds = _pauli_matrices() if dim == 2 else _ladder_matrices(dim)
        for name, mat in seeds.items():
            self._intern(name, mat)
        self._n_generated = 0

    def _intern(self, name: str, mat: np.ndarray) -> int:
        struct = _single_column_structure(mat)
        if struct is None:
            raise ValueError(f"{name}: palette matrices need one nonzero per column")
        lid = len(self.names)
        self.names.append(name)
        self.mats.append(mat.copy())
        self.targets.append(struct[0])
        self.amps.append(struct[1])
        self._by_name[name] = lid
        return lid

    def label_id(self, name: str) -> int:
        return self._by_name[name]

    def name_of(self, lid: int) -> str:
        return self.names[lid]

    def matrix(self, lid: int) -> np.ndarray:
        return self.mats[lid]

    @property
    def identity_id(self) -> int:
        return self._by_name["I"]

    def _match(self, mat: np.ndarray) -> tuple[int, complex] | None:
        """Find an existing label proportional to mat."""
        pos = np.unravel_index(np.argmax(np.abs(mat)), mat.shape)
        pivot = mat[pos]
        if abs(pivot) <= _TOL:
            return None
        for lid, known in enumerate(self.mats):
            ref = known[pos]
            if abs(ref) <= _TOL:
                continue
            scale = pivot / ref
            if np.allclose(mat, scale * known, atol=1e-10 * max(1.0, abs(scale))):
                return lid, complex(scale)
        return None

    def _intern_or_match(self, mat: np.ndarray) -> tuple[int, complex]:
        hit = self._match(mat)
        if hit is not None:
            return hit
        if self.dim == 2:
            raise AssertionError("Pauli palette should be closed under products")
        name = f"T{self._n_generated}"
        self._n_generated += 1
        lid = self._intern(name, mat)
        return lid, 1.0 + 0j

    def decompose(self, mat: np.ndarray) -> list[tuple[int, complex]]:
        """Express mat as a sum of palette labels with scalar weights."""
        mat = np.asarray(mat, dtype=complex)
        if mat.shape != (self.dim, self.dim):
            raise ValueError(f"expected {self.dim}x{self.dim} matrix")
        if self.dim == 2:
            out = []
            for name in ("I", "X", "Y", "Z"):
                lid = self._by_name[name]
                w = np.trace(self.mats[lid].conj().T @ mat) / 2
                if abs(w) > _TOL:
                    out.append((lid, complex(w)))
            return out
        # split into diagonal bands; each band has one nonzero per column
        out = []
        for offset in range(-(self.dim - 1), self.dim):
            band = np.zeros_like(mat)
            idx = np.arange(max(0, -offset), min(self.dim, self.dim - offset))
            band[idx + offset, idx] = mat[idx + offset, idx]
            if np.abs(band).max() <= _TOL:
                continue
            out.append(self._intern_or_match(band))
        return out

    def product(self, a: int, b: int) -> tuple[int, complex] | None:
        """Label product a @ b as (label, scalar), or None when it vanishes."""
        key = (a, b)
        if key not in self._product_memo:
            mat = self.mats[a] @ self.mats[b]
            if np.abs(mat).max() <= _TOL:
                self._product_memo[key] = None
            else:
                self._product_memo[key] = self._intern_or_match(mat)
        return self._product_memo[key]

    def dagger(self, a: int) -> tuple[int, complex]:
        if a not in self._dagger_memo:
            self._dagger_memo[a] = self._intern_or_match(self.mats[a].conj().T)
        return self._dagger_memo[a]

    def conjugation_map(self, tag: str, unitary: np.ndarray, lid: int) -> list[tuple[int, complex]]:
        """Decomposition of U M U^dagger for palette label M, memoized by tag."""
        table = self._conj_memo.setdefault(tag, [])
        while len(table) <= lid:
            table.append(None)  # type: ignore[arg-type]
        if table[lid] is None:
            sandwich = unitary @ self.mats[lid] @ unitary.conj().T
            table[lid] = self.decompose(sandwich)
        return table[lid]


_palettes: dict[int, LocalPalette] = {}


def get_palette(dim: int) -> LocalPalette:
    if dim not in _palettes:
        _palettes[dim] = LocalPalette(dim)
    return _palettes[dim]


# ---------------------------------------------------------------------------
# pulses


class PulseKind(enum.Enum):
    """Global product pulses used by the drive protocols.

    TAU_Z : exp(-i pi S^z) on every active link
    TAU_X : exp(-i pi S^x) on every active link
    SIGMA_Z_ODD : exp(-i pi sigma^z / 2) on every odd matter site
    """

    TAU_Z = "tau_z"
    TAU_X = "tau_x"
    SIGMA_Z_ODD = "sigma_z_odd"


@dataclass(frozen=True)
class PulseSpec:
    kind: PulseKind
    dagger: bool = False

    def slots(self, spec: LatticeSpec) -> list[int]:
        if self.kind is PulseKind.SIGMA_Z_ODD:
            return [spec.matter_slot(j) for j in range(1, spec.n_sites, 2)]
        return [spec.link_slot(j) for j in spec.bonds()]

    def local_unitary(self, dim: int) -> np.ndarray:
        if self.kind is PulseKind.SIGMA_Z_ODD:
            if dim != 2:
                raise ValueError("matter pulse on a non-matter slot")
            u = np.diag(np.exp(-0.5j * np.pi * np.array([-1.0, 1.0])))
        else:
            s = (dim - 1) / 2
            m = np.arange(dim) - s
            if self.kind is PulseKind.TAU_Z:
                u = np.diag(np.exp(-1j * np.pi * m))
            else:
                sx = np.zeros((dim, dim), dtype=complex)
                for k in range(dim - 1):
                    w = 0.5 * np.sqrt(s * (s + 1) - m[k] * (m[k] + 1))
                    sx[k + 1, k] = w
                    sx[k, k + 1] = w
                u = scipy.linalg.expm(-1j * np.pi * sx)
        return u.conj().T if self.dagger else u

    def conjugation_tag(self, dim: int) -> str:
        # pi rotations satisfy U^2 proportional to 1, so U M U+ and U+ M U
        # coincide and the dagger flag is irrelevant for conjugation
        return f"{self.kind.value}:{dim}"


# ---------------------------------------------------------------------------
# operator sums


TermKey = tuple[tuple[int, int], ...]


def _merge_term(
    spec: LatticeSpec, a: TermKey, b: TermKey
) -> tuple[TermKey, complex] | None:
    """Product of two term keys (a acting after b, i.e. a @ b)."""
    scalar = 1.0 + 0j
    out: list[tuple[int, int]] = []
    ia, ib = 0, 0
    while ia < len(a) or ib < len(b):
        if ib >= len(b) or (ia < len(a) and a[ia][0] < b[ib][0]):
            out.append(a[ia])
            ia += 1
        elif ia >= len(a) or b[ib][0] < a[ia][0]:
            out.append(b[ib])
            ib += 1
        else:
            slot = a[ia][0]
            pal = get_palette(spec.slot_dim(slot))
            prod = pal.product(a[ia][1], b[ib][1])
            ia += 1
            ib += 1
            if prod is None:
                return None
            lid, w = prod
            scalar *= w
            if lid != pal.identity_id:
                out.append((slot, lid))
    return tuple(out), scalar


class OperatorSum:
    """A sum of products of single-slot palette labels with complex weights."""

    tol = _TOL

    def __init__(self, spec: LatticeSpec, terms: Mapping[TermKey, complex] | None = None):
        self.spec = spec
        self.terms: dict[TermKey, complex] = {}
        if terms:
            for key, coeff in terms.items():
                self._accumulate(key, coeff)

    # construction helpers

    @classmethod
    def zero(cls, spec: LatticeSpec) -> "OperatorSum":
        return cls(spec)

    @classmethod
    def identity(cls, spec: LatticeSpec, coeff: complex = 1.0) -> "OperatorSum":
        return cls(spec, {(): coeff})

    @classmethod
    def from_local_matrix(
        cls, spec: LatticeSpec, slot: int, mat: np.ndarray, coeff: complex = 1.0
    ) -> "OperatorSum":
        pal = get_palette(spec.slot_dim(slot))
        op = cls(spec)
        for lid, w in pal.decompose(np.asarray(mat, dtype=complex)):
            key = () if lid == pal.identity_id else ((slot, lid),)
            op._accumulate(key, coeff * w)
        return op

    def _accumulate(self, key: TermKey, coeff: complex) -> None:
        new = self.terms.get(key, 0.0 + 0j) + coeff
        if abs(new) <= self.tol:
            self.terms.pop(key, None)
        else:
            self.terms[key] = new

    # basic algebra

    def copy(self) -> "OperatorSum":
        out = OperatorSum(self.spec)
        out.terms = dict(self.terms)
        return out

    def __add__(self, other: "OperatorSum") -> "OperatorSum":
        self._check_compatible(other)
        out = self.copy()
        for key, coeff in other.terms.items():
            out._accumulate(key, coeff)
        return out

    def __sub__(self, other: "OperatorSum") -> "OperatorSum":
        return self + (-1.0) * other

    def __mul__(self, scalar: complex) -> "OperatorSum":
        if abs(scalar) <= self.tol:
            return OperatorSum.zero(self.spec)
        out = OperatorSum(self.spec)
        out.terms = {key: coeff * scalar for key, coeff in self.terms.items()}
        return out

    __rmul__ = __mul__

    def __neg__(self) -> "OperatorSum":
        return self * (-1.0)

    def __matmul__(self, other: "OperatorSum") -> "OperatorSum":
        self._check_compatible(other)
        out = OperatorSum.zero(self.spec)
        for ka, ca in self.terms.items():
            for kb, cb in other.terms.items():
                merged = _merge_term(self.spec, ka, kb)
                if merged is None:
                    continue
                key, scalar = merged
                out._accumulate(key, ca * cb * scalar)
        return out

    def _check_compatible(self, other: "OperatorSum") -> None:
        if other.spec != self.spec:
            raise ValueError("operators live on different lattices")

    def commutator(self, other: "OperatorSum") -> "OperatorSum":
        """[self, other], skipping term pairs with disjoint support."""
        self._check_compatible(other)
        out = OperatorSum.zero(self.spec)
        slot_index: dict[int, list[TermKey]] = {}
        for kb in other.terms:
            for slot, _ in kb:
                slot_index.setdefault(slot, []).append(kb)
        for ka, ca in self.terms.items():
            if not ka:
                continue  # constants commute
            seen: set[TermKey] = set()
            for slot, _ in ka:
                for kb in slot_index.get(slot, ()):
                    if kb in seen:
                        continue
                    seen.add(kb)
                    cb = other.terms[kb]
                    ab = _merge_term(self.spec, ka, kb)
                    ba = _merge_term(self.spec, kb, ka)
                    if ab is not None:
                        out._accumulate(ab[0], ca * cb * ab[1])
                    if ba is not None:
                        out._accumulate(ba[0], -ca * cb * ba[1])
        return out

    def dagger(self) -> "OperatorSum":
        out = OperatorSum.zero(self.spec)
        for key, coeff in self.terms.items():
            scalar = 1.0 + 0j
            new = []
            for slot, lid in key:
                pal = get_palette(self.spec.slot_dim(slot))
                lid2, w = pal.dagger(lid)
                scalar *= w
                new.append((slot, lid2))
            out._accumulate(tuple(new), np.conj(coeff) * scalar)
        return out

    def conjugated(self, pulse: PulseSpec) -> "OperatorSum":
        """Toggled-frame image U self U^dagger for a global product pulse."""
        slots = set(pulse.slots(self.spec))
        out = OperatorSum.zero(self.spec)
        for key, coeff in self.terms.items():
            partial = [((), coeff)]
            for slot, lid in key:
                if slot not in slots:
                    partial = [(k + ((slot, lid),), c) for k, c in partial]
                    continue
                pal = get_palette(self.spec.slot_dim(slot))
                unitary = pulse.local_unitary(pal.dim)
                branches = pal.conjugation_map(pulse.conjugation_tag(pal.dim), unitary, lid)
                grown = []
                for k, c in partial:
                    for lid2, w in branches:
                        if lid2 == pal.identity_id:
                            grown.append((k, c * w))
                        else:
                            grown.append((k + ((slot, lid2),), c * w))
                partial = grown
            for k, c in partial:
                out._accumulate(tuple(sorted(k)), c)
        return out

    # numerics

    @property
    def max_abs_coeff(self) -> float:
        if not self.terms:
            return 0.0
        return max(abs(c) for c in self.terms.values())

    @property
    def coeff_norm1(self) -> float:
        return sum(abs(c) for c in self.terms.values())

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        return (self - self.dagger()).max_abs_coeff <= tol

    def term_action(
        self, indices: np.ndarray, key: TermKey, coeff: complex
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Apply one term to the basis states `indices`.

        Returns (sources, targets, amplitudes) restricted to nonvanishing
        entries.  `indices` are global basis integers.
        """
        spec = self.spec
        amp = np.full(indices.shape, coeff, dtype=complex)
        shift = np.zeros(indices.shape, dtype=np.int64)
        alive = np.ones(indices.shape, dtype=bool)
        for slot, lid in key:
            pal = get_palette(spec.slot_dim(slot))
            digit = spec.digit_array(slot, indices)
            tgt = pal.targets[lid][digit]
            amp = amp * pal.amps[lid][digit]
            alive &= tgt >= 0
            shift = shift + (np.where(tgt >= 0, tgt, 0) - digit) * spec.strides[slot]
        alive &= np.abs(amp) > self.tol
        return indices[alive], (indices + shift)[alive], amp[alive]

    def to_dense(self, cap: int = 4096) -> np.ndarray:
        dim = self.spec.total_dim
        if dim > cap:
            raise ValueError(f"dense build refused: dim {dim} > cap {cap}")
        indices = np.arange(dim, dtype=np.int64)
        mat = np.zeros((dim, dim), dtype=complex)
        for key, coeff in self.terms.items():
            src, tgt, amp = self.term_action(indices, key, coeff)
            np.add.at(mat, (tgt, src), amp)
        return mat

    # inspection

    def dump(self) -> str:
        """Stable text form, one term per line, sorted by support then label."""
        lines = []
        for key in sorted(self.terms, key=lambda k: (len(k), k)):
            coeff = self.terms[key]
            if key:
                body = " ".join(
                    f"{get_palette(self.spec.slot_dim(slot)).name_of(lid)}@{slot}"
                    for slot, lid in key
                )
            else:
                body = "1"
            lines.append(f"{coeff.real:+.12g}{coeff.imag:+.12g}j  {body}")
        return "\n".join(lines)

    def __len__(self) -> int:
        return len(self.terms)

    def __repr__(self) -> str:
        return f"<OperatorSum on L={self.spec.n_sites}, {len(self.terms)} terms>"


# ---------------------------------------------------------------------------
# elementary operators and model builders


_MATTER_MATS = {
    "sigma_z": np.array([[-1, 0], [0, 1]], dtype=complex),
    "sigma_x": np.array([[0, 1], [1, 0]], dtype=complex),
    "sigma+": np.array([[0, 0], [1, 0]], dtype=complex),
    "sigma-": np.array([[0, 1], [0, 0]], dtype=complex),
    "n_up": np.array([[0, 0], [0, 1]], dtype=complex),
}


def matter_op(spec: LatticeSpec, name: str, j: int) -> OperatorSum:
    try:
        mat = _MATTER_MATS[name]
    except KeyError:
        raise ValueError(f"unknown matter operator {name!r}") from None
    return OperatorSum.from_local_matrix(spec, spec.matter_slot(j), mat)


def _link_mats(dim: int) -> dict[str, np.ndarray]:
    base = _ladder_matrices(dim)
    return {
        "tau+": base["P"],
        "tau-": base["M"],
        "tau_z": base["Z"],
        "tau_x": base["P"] + base["M"],
    }


def link_op(spec: LatticeSpec, name: str, j: int) -> OperatorSum:
    mats = _link_mats(spec.gauge_dim)
    try:
        mat = mats[name]
    except KeyError:
        raise ValueError(f"unknown link operator {name!r}") from None
    return OperatorSum.from_local_matrix(spec, spec.link_slot(j), mat)


def build_hopping(spec: LatticeSpec) -> OperatorSum:
    """Gauge-invariant correlated hopping: sum of sigma+ tau+ sigma- + h.c."""
    h = OperatorSum.zero(spec)
    for j in spec.bonds():
        term = (
            matter_op(spec, "sigma+", j)
            @ link_op(spec, "tau+", j)
            @ matter_op(spec, "sigma-", (j + 1) % spec.n_sites)
        )
        h = h + term + term.dagger()
    return h


def build_mixing(spec: LatticeSpec) -> OperatorSum:
    """Hopping with tau^x on the bond; breaks the U(1) charges but not their
    cyclic labels."""
    h = OperatorSum.zero(spec)
    for j in spec.bonds():
        term = (
            matter_op(spec, "sigma+", j)
            @ link_op(spec, "tau_x", j)
            @ matter_op(spec, "sigma-", (j + 1) % spec.n_sites)
        )
        h = h + term + term.dagger()
    return h


def build_detuning(spec: LatticeSpec, eps1: float = 0.0, eps2: float = 0.0) -> OperatorSum:
    """Transverse link field with optional matter-dressed asymmetries; breaks
    the cyclic labels as well."""
    h = OperatorSum.zero(spec)
    for j in spec.bonds():
        tx = link_op(spec, "tau_x", j)
        h = h + tx
        if eps1:
            h = h + eps1 * (matter_op(spec, "sigma_z", j) @ tx)
        if eps2:
            h = h + eps2 * (tx @ matter_op(spec, "sigma_z", (j + 1) % spec.n_sites))
    return h


@dataclass(frozen=True)
class ModelParams:
    J: float = 1.0
    K: float = 4.0
    h: float = 0.0
    eps1: float = 0.0
    eps2: float = 0.0


@dataclass(frozen=True)
class ModelTerms:
    hopping: OperatorSum
    mixing: OperatorSum
    detuning: OperatorSum

    def total(self, params: ModelParams) -> OperatorSum:
        h = params.J * self.hopping + params.K * self.mixing
        if params.h:
            h = h + params.h * self.detuning
        return h


def build_model(spec: LatticeSpec, params: ModelParams) -> ModelTerms:
    return ModelTerms(
        hopping=build_hopping(spec),
        mixing=build_mixing(spec),
        detuning=build_detuning(spec, params.eps1, params.eps2),
    )


def build_gauss_generator(spec: LatticeSpec, j: int) -> OperatorSum:
    """Local charge g_j as an operator (divergence of tau^z minus sigma^z)."""
    return (
        link_op(spec, "tau_z", j)
        - link_op(spec, "tau_z", (j - 1) % spec.n_sites)
        - matter_op(spec, "sigma_z", j)
    )


def build_z2_generator(spec: LatticeSpec, j: int) -> OperatorSum:
    """Cyclic label i exp(-i pi g_j / 2) as a diagonal operator product."""
    dim = spec.gauge_dim
    s = (dim - 1) / 2
    m = np.arange(dim) - s
    right = np.diag(np.exp(-1j * np.pi * m))
    left = np.diag(np.exp(+1j * np.pi * m))
    matter = np.diag(np.exp(+0.5j * np.pi * np.array([-1.0, 1.0])))
    op = OperatorSum.identity(spec, 1j)
    op = op @ OperatorSum.from_local_matrix(spec, spec.link_slot(j), right)
    op = op @ OperatorSum.from_local_matrix(
        spec, spec.link_slot((j - 1) % spec.n_sites), left
    )
    op = op @ OperatorSum.from_local_matrix(spec, spec.matter_slot(j), matter)
    return op


def commutator_norm(a: OperatorSum, b: OperatorSum) -> float:
    return a.commutator(b).max_abs_coeff


def symmetry_report(spec: LatticeSpec, op: OperatorSum) -> dict[str, float]:
    """Largest commutator coefficient of op with each local charge and cyclic
    label, plus the global charge."""
    report: dict[str, float] = {}
    total = OperatorSum.zero(spec)
    for j in range(spec.n_sites):
        g = build_gauss_generator(spec, j)
        total = total + g
        report[f"G_{j}"] = commutator_norm(op, g)
        report[f"S_{j}"] = commutator_norm(op, build_z2_generator(spec, j))
    report["G_total"] = commutator_norm(op, total)
    return report
