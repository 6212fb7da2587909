"""Post-processing: plateau lifetimes, power-law fits, spectra, growth.

Everything here is pure numerics on arrays or TimeSeries objects.  The
physics enters through two structures: the kink spectrum of a segment
between frozen defects (an open hopping chain), and second-order
perturbation theory in the slow residual coupling, whose secular part is
controlled by degeneracies of the free kink spectrum across defect
arrangements.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .engine import TimeSeries

__all__ = [
    "AnalysisError",
    "Censored",
    "lifetime",
    "departure_time",
    "FitResult",
    "fit_power_law",
    "DegeneracyReport",
    "segment_spectrum",
    "spectra_match",
    "GrowthPrediction",
    "quadratic_growth_coefficients",
]


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class Censored:
    """A lifetime that did not end within the record."""

    horizon: float
    threshold: float

    def __repr__(self) -> str:
        return f"Censored(horizon={self.horizon:g}, threshold={self.threshold:g})"


def _crossing(times: np.ndarray, values: np.ndarray, threshold: float, rising: bool) -> float | None:
    y = values - threshold
    if rising:
        y = -y
    # y starts >= 0; find the first sample strictly past the threshold
    below = np.nonzero(y < 0)[0]
    if below.size == 0:
        return None
    i = int(below[0])
    if i == 0:
        return float(times[0])
    t0, t1 = times[i - 1], times[i]
    y0, y1 = y[i - 1], y[i]
    return float(t0 + (t1 - t0) * y0 / (y0 - y1))


def lifetime(ts: TimeSeries, column: str, threshold: float | None = None) -> float | Censored:
    """Time at which a decaying column first crosses a threshold.

    The default threshold is exp(-0.4) times the initial value.  Linear
    interpolation between the bracketing samples.  A record that never
    crosses yields a Censored outcome carrying the horizon, not a number.
    """
    values = ts.column(column)
    initial = float(values[0])
    if threshold is None:
        threshold = float(np.exp(-0.4) * initial)
    if not 0 < threshold < initial:
        raise AnalysisError(
            f"threshold {threshold:g} must lie strictly between 0 and the "
            f"initial value {initial:g}"
        )
    t = _crossing(ts.times, values, threshold, rising=False)
    if t is None:
        return Censored(float(ts.times[-1]), threshold)
    return t


def departure_time(ts: TimeSeries, column: str, threshold: float) -> float | Censored:
    """Time at which a growing column first exceeds a threshold."""
    values = ts.column(column)
    if float(values[0]) >= threshold:
        raise AnalysisError(
            f"column {column} already starts at or above {threshold:g}"
        )
    t = _crossing(ts.times, values, threshold, rising=True)
    if t is None:
        return Censored(float(ts.times[-1]), threshold)
    return t


@dataclass(frozen=True)
class FitResult:
    exponent: float
    prefactor: float
    window: tuple[float, float]
    residual: float

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return self.prefactor * np.asarray(x, dtype=float) ** self.exponent


def fit_power_law(
    xs: Sequence[float], ys: Sequence[float], window: tuple[float, float] | None = None
) -> FitResult:
    """Least-squares power law y = a x^b on log-log axes.

    Only points with x inside the window participate; all of them must be
    strictly positive in both coordinates.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise AnalysisError("xs and ys must be matching 1d arrays")
    if window is None:
        mask = np.ones(x.size, dtype=bool)
        lo, hi = (float(x.min()), float(x.max())) if x.size else (0.0, 0.0)
    else:
        lo, hi = float(window[0]), float(window[1])
        mask = (x >= lo) & (x <= hi)
    if mask.sum() < 3:
        raise AnalysisError(f"need at least 3 points in the window, have {int(mask.sum())}")
    xw, yw = x[mask], y[mask]
    if (xw <= 0).any() or (yw <= 0).any():
        raise AnalysisError("power-law fit needs strictly positive values")
    lx, ly = np.log(xw), np.log(yw)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = float(np.sqrt(np.mean((ly - (slope * lx + intercept)) ** 2)))
    return FitResult(float(slope), float(np.exp(intercept)), (lo, hi), resid)


@dataclass(frozen=True)
class DegeneracyReport:
    """Free kink spectrum over a defect arrangement, split by segment."""

    segments: tuple[int, ...]
    per_segment: tuple[np.ndarray, ...]
    assembled: np.ndarray
    groups: tuple[np.ndarray, ...]
    tol: float

    def describe(self) -> str:
        lines = [f"segments: {list(self.segments)}"]
        for d, spec in zip(self.segments, self.per_segment):
            lines.append(f"  d={d}: " + ", ".join(f"{e:+.6f}" for e in spec))
        lines.append("assembled: " + ", ".join(f"{e:+.6f}" for e in self.assembled))
        if self.groups:
            for g in self.groups:
                lines.append(f"degenerate x{g.size} at {g.mean():+.6f}")
        else:
            lines.append("no degeneracies within tolerance")
        return "\n".join(lines)


def segment_spectrum(
    d_list: Sequence[int], J: float = 1.0, tol: float | None = None
) -> DegeneracyReport:
    """Single-kink hopping spectra of open segments and their direct sum.

    Each segment of d sites contributes the eigenvalues of the d x d
    tridiagonal hopping matrix with amplitude J.  Degenerate groups of the
    assembled spectrum are reported for levels closer than tol (default
    1e-8 |J|: the degeneracies of interest are structural, not numerical).
    """
    segments = tuple(int(d) for d in d_list)
    if not segments or any(d < 1 for d in segments):
        raise AnalysisError("segment lengths must be positive integers")
    if tol is None:
        tol = 1e-8 * max(abs(J), 1.0)
    per = []
    for d in segments:
        m = np.zeros((d, d))
        for i in range(d - 1):
            m[i, i + 1] = m[i + 1, i] = J
        per.append(np.linalg.eigvalsh(m))
    assembled = np.sort(np.concatenate(per))
    groups = []
    start = 0
    for i in range(1, assembled.size + 1):
        if i == assembled.size or assembled[i] - assembled[i - 1] > tol:
            if i - start > 1:
                groups.append(assembled[start:i].copy())
            start = i
    return DegeneracyReport(segments, tuple(per), assembled, tuple(groups), tol)


def spectra_match(a: DegeneracyReport, b: DegeneracyReport, tol: float | None = None) -> bool:
    """Whether two defect arrangements share the same free spectrum."""
    if tol is None:
        tol = max(a.tol, b.tol)
    if a.assembled.size != b.assembled.size:
        return False
    return bool(np.abs(a.assembled - b.assembled).max() <= tol)


@dataclass(frozen=True)
class GrowthPrediction:
    """Secular growth of a conserved-charge observable at second order.

    The drive-period-independent residual coupling V2 feeds two channels:
    transitions into states degenerate with the initial support (secular,
    quadratic in time, coefficient c1) and into the rest (linear in time,
    coefficient c2, visible only on much longer scales).
    """

    c1: float
    c2: float
    degenerate_dim: int

    def delta(self, t: np.ndarray | float, t_period: float) -> np.ndarray | float:
        t = np.asarray(t, dtype=float)
        out = self.c1 * t_period**4 * t**2 + self.c2 * t_period**5 * t
        return out if out.shape else float(out)


def quadratic_growth_coefficients(
    q0: np.ndarray,
    v2: np.ndarray,
    psi0: np.ndarray,
    observable: np.ndarray,
    sectors: Sequence,
    tol: float = 1e-8,
) -> GrowthPrediction:
    """Perturbative growth coefficients of a sector-diagonal observable.

    q0 and v2 are Hermitian matrices on the same basis; psi0 the initial
    vector; observable a diagonal (one value per basis state) constant
    within each sector; sectors a hashable label per basis state grouping
    states that share a charge configuration.  The free Hamiltonian q0
    must not connect sectors, so its eigenbasis is built sector by sector
    and each eigenstate inherits a sharp observable value.

    The initial state must live in a single sector.  For each of its
    populated free levels, transitions driven by v2 into other sectors
    contribute (initial value - final value) |<final| v2 |level part>|^2,
    summed over degenerate finals for c1 and non-degenerate finals for
    c2, both negated.  Growth of the observable after n periods of length
    t_period is then c1 t_period^4 t^2 + c2 t_period^5 t with t = n t_period.
    """
    q0 = np.asarray(q0)
    v2 = np.asarray(v2)
    psi = np.asarray(psi0, dtype=complex)
    obs = np.asarray(observable, dtype=float)
    dim = q0.shape[0]
    if q0.shape != (dim, dim) or v2.shape != (dim, dim):
        raise AnalysisError("q0 and v2 must be square matrices of equal size")
    if psi.shape != (dim,) or obs.shape != (dim,):
        raise AnalysisError("psi0 and observable must match the matrix dimension")
    if len(sectors) != dim:
        raise AnalysisError("need one sector label per basis state")
    nrm = np.linalg.norm(psi)
    if not np.isfinite(nrm) or nrm < 1e-12:
        raise AnalysisError("initial state is not normalizable")
    psi = psi / nrm

    by_sector: dict = {}
    for i, s in enumerate(sectors):
        by_sector.setdefault(s, []).append(i)

    init_sectors = {s for s, idx in by_sector.items() if np.abs(psi[idx]).max() > 1e-12}
    if len(init_sectors) != 1:
        raise AnalysisError(
            f"initial state must occupy exactly one sector, found {len(init_sectors)}"
        )
    (home,) = init_sectors

    energies = []
    vectors = []
    values = []
    home_cols = []
    for s, idx in sorted(by_sector.items(), key=lambda kv: kv[1][0]):
        idx = np.array(idx)
        vals = obs[idx]
        if vals.max() - vals.min() > tol:
            raise AnalysisError(
                f"observable is not constant within sector {s!r}"
            )
        block = q0[np.ix_(idx, idx)]
        off = q0[np.ix_(idx, np.setdiff1d(np.arange(dim), idx))]
        if off.size and np.abs(off).max() > tol:
            raise AnalysisError("q0 connects different sectors")
        evals, evecs = scipy.linalg.eigh(block)
        for k in range(idx.size):
            col = len(energies)
            energies.append(evals[k])
            full = np.zeros(dim, dtype=complex)
            full[idx] = evecs[:, k]
            vectors.append(full)
            values.append(float(vals.mean()))
            if s == home:
                home_cols.append(col)
    energies = np.array(energies)
    basis = np.array(vectors).T
    values = np.array(values)

    amps = basis.conj().T @ psi
    lam = np.zeros_like(amps)
    lam[home_cols] = amps[home_cols]
    v2_eig = basis.conj().T @ v2 @ basis

    # cluster populated home energies into levels
    pop = [c for c in home_cols if abs(amps[c]) > 1e-12]
    pop.sort(key=lambda c: energies[c])
    levels: list[list[int]] = []
    for c in pop:
        if levels and energies[c] - energies[levels[-1][-1]] <= tol:
            levels[-1].append(c)
        else:
            levels.append([c])

    home_value = values[home_cols[0]]
    c1 = 0.0
    c2 = 0.0
    degenerate = set()
    for level in levels:
        e_level = float(np.mean(energies[level]))
        part = np.zeros_like(lam)
        part[level] = lam[level]
        reach = v2_eig @ part
        weight = (home_value - values) * np.abs(reach) ** 2
        deg_mask = np.abs(energies - e_level) <= tol
        c1 -= float(weight[deg_mask].sum())
        c2 -= float(weight[~deg_mask].sum())
        degenerate.update(np.nonzero(deg_mask & (np.abs(reach) > 1e-14))[0].tolist())
    return GrowthPrediction(c1, c2, len(degenerate))
