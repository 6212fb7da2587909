"""Reduced marble model for the charge-defect sector family.

States whose local charges are all +1 or -3 (spin-1/2 links) form a
family closed under the protected dynamics.  Each such state is a string
of three kinds of site: vacancy, kink (an up matter spin on a charge +1
site), and defect (the charge -3 excitation).  Walking along the chain,
kinks and defects strictly alternate, and both behave as hard-core
particles hopping on the vacancies.

This module enumerates those label strings, builds the reduced
Hamiltonians order by order in the drive period, converts label strings
to and from full-chain basis states, and projects full-chain operators
onto the family to verify the reduction.

Orders of the reduced Hamiltonian:

* zeroth: kinks hop freely, defects are frozen.
* first: a correlated pair shift moves a defect together with its
  neighboring kink; coefficient lambda0 (zero for the echoed drive).
* second: density-assisted defect motion from the double commutator
  lambda1 [Hk, [Hk, Hd]] - lambda2 [Hd, [Hd, Hk]], the swapped copy
  acting on kinks; an equivalent spelled-out sum of assisted hops exists
  for cross-checking.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg

from .engine import TimeSeries
from .lattice import Boundary, LatticeSpec, SectorError
from .magnus import DriveProtocol, effective_orders, first_order_weight, second_order_weights
from .operators import OperatorSum

__all__ = [
    "QmmError",
    "VACANT",
    "KINK",
    "DEFECT",
    "QmmConfig",
    "enumerate_qmm_basis",
    "hop_matrix",
    "string_term_matrix",
    "assisted_pair_terms",
    "assisted_density_terms",
    "qmm_couplings",
    "build_qmm_hamiltonian",
    "map_full_to_qmm",
    "qmm_to_full",
    "basis_to_full",
    "restrict_full_operator",
    "run_qmm",
    "compare_series",
]

VACANT, KINK, DEFECT = 0, 1, 2
_CHARS = ".kd"


class QmmError(ValueError):
    pass


@dataclass(frozen=True)
class QmmConfig:
    """One marble configuration: a label per site plus the topology."""

    labels: tuple[int, ...]
    boundary: Boundary = Boundary.PBC

    def __post_init__(self) -> None:
        if not self.labels:
            raise QmmError("empty configuration")
        if any(l not in (VACANT, KINK, DEFECT) for l in self.labels):
            raise QmmError(f"labels must be 0/1/2, got {self.labels}")
        if not _alternating(self.labels, self.boundary):
            raise QmmError(f"kinks and defects must alternate: {self.to_string()!r}")

    @property
    def n_sites(self) -> int:
        return len(self.labels)

    @property
    def n_kinks(self) -> int:
        return sum(1 for l in self.labels if l == KINK)

    @property
    def n_defects(self) -> int:
        return sum(1 for l in self.labels if l == DEFECT)

    def to_string(self) -> str:
        return "".join(_CHARS[l] for l in self.labels)

    @classmethod
    def from_string(cls, text: str, boundary: Boundary = Boundary.PBC) -> "QmmConfig":
        labels = []
        for c in text:
            if c.isspace():
                continue
            pos = _CHARS.find(c)
            if pos < 0:
                raise QmmError(f"character {c!r} is not one of '. k d'")
            labels.append(pos)
        return cls(tuple(labels), boundary)


def _alternating(labels: Sequence[int], boundary: Boundary) -> bool:
    seq = [l for l in labels if l != VACANT]
    for a, b in zip(seq, seq[1:]):
        if a == b:
            return False
    if boundary is Boundary.PBC and len(seq) > 1 and seq[0] == seq[-1]:
        return False
    return True


def enumerate_qmm_basis(
    n_sites: int, n_defects: int, n_kinks: int, boundary: Boundary = Boundary.PBC
) -> list[QmmConfig]:
    """All valid configurations with the given particle content, sorted by
    their label tuples."""
    if n_defects < 0 or n_kinks < 0 or n_defects + n_kinks > n_sites:
        raise QmmError(
            f"cannot place {n_defects} defects and {n_kinks} kinks on {n_sites} sites"
        )
    out = []
    sites = range(n_sites)
    for dpos in itertools.combinations(sites, n_defects):
        rest = [s for s in sites if s not in dpos]
        for kpos in itertools.combinations(rest, n_kinks):
            labels = [VACANT] * n_sites
            for p in dpos:
                labels[p] = DEFECT
            for p in kpos:
                labels[p] = KINK
            if _alternating(labels, boundary):
                out.append(QmmConfig(tuple(labels), boundary))
    out.sort(key=lambda c: c.labels)
    return out


def _index_map(basis: Sequence[QmmConfig]) -> dict[tuple[int, ...], int]:
    return {c.labels: i for i, c in enumerate(basis)}


def hop_matrix(basis: Sequence[QmmConfig], species: int) -> np.ndarray:
    """Nearest-neighbor hopping of one species onto vacancies, amplitude 1."""
    if species not in (KINK, DEFECT):
        raise QmmError("species must be KINK or DEFECT")
    if not basis:
        raise QmmError("empty basis")
    idx = _index_map(basis)
    n_sites = basis[0].n_sites
    ring = basis[0].boundary is Boundary.PBC
    bonds = range(n_sites) if ring else range(n_sites - 1)
    m = np.zeros((len(basis), len(basis)))
    for labels, col in idx.items():
        for j in bonds:
            a, b = j, (j + 1) % n_sites
            for s, t in ((a, b), (b, a)):
                if labels[s] == species and labels[t] == VACANT:
                    new = list(labels)
                    new[s], new[t] = VACANT, species
                    row = idx.get(tuple(new))
                    if row is not None:
                        m[row, col] += 1.0
    return m


# ---------------------------------------------------------------------------
# spelled-out operator strings

# an elementary move: (site offset, action); actions check and update one
# label, applied right to left like operator products
_ACTIONS = {
    "k+": (VACANT, KINK),
    "k-": (KINK, VACANT),
    "d+": (VACANT, DEFECT),
    "d-": (DEFECT, VACANT),
    "nk": (KINK, KINK),
    "nd": (DEFECT, DEFECT),
}


def _apply_string(labels: tuple[int, ...], ops: Sequence[tuple[int, str]]) -> tuple[int, ...] | None:
    state = list(labels)
    for site, action in reversed(ops):
        need, put = _ACTIONS[action]
        if state[site] != need:
            return None
        state[site] = put
    return tuple(state)


def string_term_matrix(
    basis: Sequence[QmmConfig],
    terms: Sequence[tuple[complex, Sequence[tuple[int, str]]]],
    add_hc: bool = True,
) -> np.ndarray:
    """Matrix of a sum of site-offset operator strings.

    Each term is (coefficient, [(offset, action), ...]) and is summed over
    every lattice placement; offsets reach across the wrap on a ring and
    are dropped at the edge of an open chain.  With add_hc the Hermitian
    conjugate of everything is added.
    """
    if not basis:
        raise QmmError("empty basis")
    idx = _index_map(basis)
    n_sites = basis[0].n_sites
    ring = basis[0].boundary is Boundary.PBC
    m = np.zeros((len(basis), len(basis)), dtype=complex)
    for coeff, pattern in terms:
        lo = min(0, min(off for off, _ in pattern))
        hi = max(0, max(off for off, _ in pattern))
        starts = range(n_sites) if ring else range(-lo, n_sites - hi)
        for labels, col in idx.items():
            for j in starts:
                ops = [((j + off) % n_sites, act) for off, act in pattern]
                new = _apply_string(labels, ops)
                if new is None:
                    continue
                row = idx.get(new)
                if row is None:
                    raise QmmError(
                        f"operator string left the constrained basis: "
                        f"{labels} -> {new}"
                    )
                m[row, col] += coeff
    if add_hc:
        m = m + m.conj().T
    return m


def assisted_pair_terms(weight: complex) -> list[tuple[complex, list[tuple[int, str]]]]:
    """First-order correlated shifts: a defect and its partner kink move
    together by one site.  Conjugates are implied."""
    return [
        (+1j * weight, [(0, "d+"), (1, "k+"), (1, "d-"), (2, "k-")]),
        (-1j * weight, [(0, "k+"), (1, "d+"), (1, "k-"), (2, "d-")]),
    ]


def assisted_density_terms() -> list[tuple[complex, list[tuple[int, str]]]]:
    """Second-order defect motion written out as assisted hops (unit
    overall scale; conjugates are implied)."""
    return [
        (-2.0, [(0, "k-"), (1, "k+"), (1, "d-"), (2, "d+"), (2, "k-"), (3, "k+")]),
        (-1.0, [(0, "d-"), (1, "d+"), (1, "k-"), (3, "k+")]),
        (-1.0, [(-1, "k-"), (1, "k+"), (1, "d-"), (2, "d+")]),
        (+1.0, [(0, "d+"), (1, "d-"), (2, "nk")]),
        (+1.0, [(0, "nk"), (1, "d+"), (2, "d-")]),
    ]


def qmm_couplings(protocol: DriveProtocol) -> dict[str, float]:
    """Reduced-model coefficients implied by one drive protocol."""
    weights = second_order_weights(protocol)
    if protocol.label == "simple":
        lambda0 = first_order_weight(protocol.params, protocol.spacing)
    else:
        q1 = effective_orders(protocol, 1)[1]
        lambda0 = 0.0 if q1.max_abs_coeff <= 1e-10 else float("nan")
    return {
        "lambda0": lambda0,
        "lambda1": weights["hop_hop_mix"] + weights["mix_hop_mix"],
        "lambda2": weights["mix_hop_mix"],
    }


def build_qmm_hamiltonian(
    basis: Sequence[QmmConfig],
    J: float,
    lambda0: float = 0.0,
    lambda1: float = 0.0,
    lambda2: float = 0.0,
    order: int = 2,
) -> np.ndarray:
    """Reduced Hamiltonian up to the requested order.

    Zeroth order is free kink hopping.  First order adds the correlated
    pair shifts with weight lambda0.  Second order adds the double
    commutators lambda1 [Hk, [Hk, Hd]] - lambda2 [Hd, [Hd, Hk]].
    """
    if order not in (0, 1, 2):
        raise QmmError("order must be 0, 1, or 2")
    hk = hop_matrix(basis, KINK)
    h = J * hk.astype(complex)
    if order >= 1 and lambda0:
        h = h + string_term_matrix(basis, assisted_pair_terms(lambda0))
    if order >= 2 and (lambda1 or lambda2):
        hd = hop_matrix(basis, DEFECT)
        comm = lambda a, b: a @ b - b @ a
        h = h + lambda1 * comm(hk, comm(hk, hd)) - lambda2 * comm(hd, comm(hd, hk))
    return h


# ---------------------------------------------------------------------------
# mapping between label strings and full-chain basis states


def _require_half(spec: LatticeSpec) -> None:
    if spec.twice_spin != 1:
        raise QmmError("the marble reduction is defined for spin-1/2 links only")


_TRIPLES = {
    (1, 1, 0): DEFECT,
    (0, 1, 1): KINK,
    (1, 0, 1): VACANT,
    (0, 0, 0): VACANT,
}


def map_full_to_qmm(spec: LatticeSpec, index: int) -> QmmConfig:
    """Classify each site of a full basis state as vacancy, kink, or defect.

    Fails if any site falls outside the two-charge family.  Open edges
    use the available neighbors only.
    """
    _require_half(spec)
    n = spec.n_sites
    digits = spec.digits(index)
    matter = [digits[spec.matter_slot(j)] for j in range(n)]
    link = [digits[spec.link_slot(j)] for j in range(n)]
    ring = spec.boundary is Boundary.PBC
    labels = []
    for j in range(n):
        left = link[(j - 1) % n]
        right = link[j]
        if not ring and j == 0:
            key_options = [(l, matter[j], right) for l in (0, 1)]
        elif not ring and j == n - 1:
            key_options = [(left, matter[j], r) for r in (0, 1)]
        else:
            key_options = [(left, matter[j], right)]
        hits = {_TRIPLES[k] for k in key_options if k in _TRIPLES}
        if not hits:
            raise QmmError(
                f"site {j} of state {index} is outside the marble family"
            )
        if len(hits) > 1:
            # an open edge can be ambiguous only between vacancy variants,
            # which agree on the label
            raise QmmError(f"site {j} of state {index} has an ambiguous label")
        labels.append(hits.pop())
    return QmmConfig(tuple(labels), spec.boundary)


def qmm_to_full(
    spec: LatticeSpec, config: QmmConfig, vacuum_fill: int | None = None
) -> int:
    """The unique full basis state realizing a marble configuration.

    Links are reconstructed by walking the chain: a kink raises the link
    value across it, a defect lowers it, vacancies copy it.  With no
    marbles at all the walk never starts and `vacuum_fill` (0 or 1) picks
    the uniform link value.
    """
    _require_half(spec)
    if config.boundary is not spec.boundary:
        raise QmmError("configuration and lattice disagree on the boundary")
    n = spec.n_sites
    if config.n_sites != n:
        raise QmmError(f"configuration has {config.n_sites} sites, lattice {n}")
    labels = config.labels
    # right-link value demanded by each label, as a function of the left one
    def step(label: int, left: int) -> int:
        if label == KINK:
            if left != 0:
                raise QmmError("kink needs a lowered link on its left")
            return 1
        if label == DEFECT:
            if left != 1:
                raise QmmError("defect needs a raised link on its left")
            return 0
        return left

    first = next((j for j, l in enumerate(labels) if l != VACANT), None)
    link = [0] * n
    if first is None:
        if vacuum_fill not in (0, 1):
            raise QmmError("an all-vacancy configuration needs vacuum_fill 0 or 1")
        link = [vacuum_fill] * n
    else:
        seed = 0 if labels[first] == KINK else 1
        if spec.boundary is Boundary.PBC:
            left = seed
            for j in range(first, first + n):
                left = step(labels[j % n], left)
                link[j % n] = left
            if link[(first - 1) % n] != seed:
                raise QmmError(
                    f"{config.to_string()!r} does not close around the ring"
                )
        else:
            for j in range(0, first):
                link[j] = seed
            left = seed
            for j in range(first, n):
                left = step(labels[j], left)
                link[j] = left
    digits = [0] * spec.n_slots
    for j in range(n):
        digits[spec.matter_slot(j)] = 1 if labels[j] != VACANT else 0
        digits[spec.link_slot(j)] = link[j]
    return spec.index_of(digits)


def basis_to_full(
    spec: LatticeSpec, basis: Sequence[QmmConfig], vacuum_fill: int | None = None
) -> np.ndarray:
    return np.array([qmm_to_full(spec, c, vacuum_fill) for c in basis], dtype=np.int64)


def restrict_full_operator(
    spec: LatticeSpec,
    op: OperatorSum,
    basis: Sequence[QmmConfig],
    vacuum_fill: int | None = None,
) -> tuple[np.ndarray, float]:
    """Project a full-chain operator onto the family: (matrix, leakage).

    The matrix is the operator between the realizing basis states; the
    leakage is the largest summed amplitude from a family state to any
    state outside it.  A faithful reduction has leakage at rounding level.
    """
    full = basis_to_full(spec, basis, vacuum_fill)
    order = np.argsort(full)
    sorted_full = full[order]
    m = np.zeros((len(basis), len(basis)), dtype=complex)
    out_src: list[np.ndarray] = []
    out_tgt: list[np.ndarray] = []
    out_amp: list[np.ndarray] = []
    for key, coeff in op.terms.items():
        src, tgt, amp = op.term_action(full, key, coeff)
        if not src.size:
            continue
        cols = order[np.searchsorted(sorted_full, src)]
        pos = np.minimum(np.searchsorted(sorted_full, tgt), len(basis) - 1)
        inside = sorted_full[pos] == tgt
        np.add.at(m, (order[pos[inside]], cols[inside]), amp[inside])
        if not inside.all():
            miss = ~inside
            out_src.append(src[miss])
            out_tgt.append(tgt[miss])
            out_amp.append(amp[miss].astype(complex))
    leakage = 0.0
    if out_src:
        # individual strings may leave the family even when the summed
        # operator does not; judge the summed amplitude per matrix element
        keys = np.concatenate(out_src) * np.int64(spec.total_dim) + np.concatenate(out_tgt)
        amps = np.concatenate(out_amp)
        uniq, inverse = np.unique(keys, return_inverse=True)
        sums = np.zeros(uniq.size, dtype=complex)
        np.add.at(sums, inverse, amps)
        leakage = float(np.abs(sums).max()) if uniq.size else 0.0
    return m, leakage


# ---------------------------------------------------------------------------
# reduced dynamics


def _config_columns(basis: Sequence[QmmConfig]) -> dict[str, np.ndarray]:
    n_sites = basis[0].n_sites
    lab = np.array([c.labels for c in basis])
    cols: dict[str, np.ndarray] = {}
    for j in range(n_sites):
        cols[f"nd_{j}"] = (lab[:, j] == DEFECT).astype(float)
        cols[f"nk_{j}"] = (lab[:, j] == KINK).astype(float)
    return cols


def run_qmm(
    h_matrix: np.ndarray,
    basis: Sequence[QmmConfig],
    initial: QmmConfig,
    t_period: float,
    n_periods: int,
    stride: int | None = None,
    metadata: Mapping | None = None,
) -> TimeSeries:
    """Reduced-model evolution sampled stroboscopically at t = n t_period.

    Produces the same site-density columns as the full engine (charges
    follow from the defect labels, so G and S columns are emitted too)
    for direct comparison of the two descriptions.
    """
    if initial.labels not in {c.labels for c in basis}:
        raise QmmError("initial configuration is not in the basis")
    h = np.asarray(h_matrix)
    if h.shape != (len(basis), len(basis)):
        raise QmmError("Hamiltonian and basis sizes disagree")
    if np.abs(h - h.conj().T).max() > 1e-10:
        raise QmmError("reduced Hamiltonian must be Hermitian")
    if stride is None:
        stride = max(1, n_periods // 2000)
    evals, evecs = scipy.linalg.eigh(h)
    start = np.zeros(len(basis))
    start[[c.labels for c in basis].index(initial.labels)] = 1.0
    weights = evecs.conj().T @ start
    site_cols = _config_columns(basis)
    n_sites = initial.n_sites
    sample_at = sorted(set(range(0, n_periods + 1, stride)) | {n_periods})
    steps, times = [], []
    rows: list[dict[str, float]] = []
    g_target = np.array([1.0 - 4.0 * (l == DEFECT) for l in initial.labels])
    for step in sample_at:
        t = step * t_period
        amps = evecs @ (np.exp(-1j * evals * t) * weights)
        prob = np.abs(amps) ** 2
        row: dict[str, float] = {}
        for j in range(n_sites):
            nd = float(site_cols[f"nd_{j}"] @ prob)
            nk = float(site_cols[f"nk_{j}"] @ prob)
            row[f"G_{j}"] = 1.0 - 4.0 * nd
            row[f"S_{j}"] = 1.0
            row[f"nd_{j}"] = nd
            row[f"nk_{j}"] = nk
        row["violG"] = float(
            np.mean([abs(row[f"G_{j}"] - g_target[j]) for j in range(n_sites)])
        )
        row["violS"] = 0.0
        steps.append(step)
        times.append(t)
        rows.append(row)
    columns = {name: np.array([r[name] for r in rows]) for name in rows[0]}
    meta = dict(metadata or {})
    meta.setdefault("model", "qmm")
    meta.setdefault("t_period", t_period)
    meta.setdefault("initial", initial.to_string())
    return TimeSeries(np.array(steps), np.array(times), columns, meta)


def compare_series(
    a: TimeSeries, b: TimeSeries, columns: Iterable[str]
) -> dict[str, float]:
    """Largest pointwise difference per column over the shared sample steps."""
    common, ia, ib = np.intersect1d(a.steps, b.steps, return_indices=True)
    if common.size == 0:
        raise QmmError("the two series share no sample steps")
    return {
        name: float(np.abs(a.column(name)[ia] - b.column(name)[ib]).max())
        for name in columns
    }
