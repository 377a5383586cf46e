"""Branching-and-merging propagation of an observable through a circuit.

Each Pauli rotation partitions the current rows by commutation with the gate
generator.  Commuting rows pass through; anti-commuting rows rotate in the
(P, iσP) plane, merging with the partner row when it already exists and
branching a new row otherwise.  Angles are reduced to [-pi/4, pi/4] by
extracting exact Clifford quarter turns (pure row relabelings, no growth).
After every gate the coefficient threshold is applied once.

Rows are kept in canonical packed order throughout, which makes every run
bit-identical regardless of worker count or kernel path.  The hot path is a
single fused numba kernel per gate; the numpy fallback composes the same
update from vectorized pieces and produces identical arrays.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .circuits import Circuit
from .pauli import InvariantViolation, PauliError, PauliString
from .sums import PauliSum

__all__ = [
    "GateStats",
    "TraceLog",
    "PartitionResult",
    "BudgetExceeded",
    "RowCapExceeded",
    "partition",
    "apply_rotation",
    "evolve",
    "expectation",
]

_HALF_PI = math.pi / 2.0


class BudgetExceeded(RuntimeError):
    """Wall-clock budget ran out; carries the partial trace and state."""

    def __init__(self, message, trace=None, partial=None):
        super().__init__(message)
        self.trace = trace
        self.partial = partial


class RowCapExceeded(RuntimeError):
    """Row cap would be exceeded; carries the partial trace and state."""

    def __init__(self, message, trace=None, partial=None):
        super().__init__(message)
        self.trace = trace
        self.partial = partial


@dataclass
class GateStats:
    """Per-gate telemetry."""

    k: int
    theta: float
    phi: float
    eta: float
    n_before: int
    n_after: int
    truncated: int
    norm_after: float
    elapsed_ns: int


@dataclass
class TraceLog:
    """Telemetry for one evolution run."""

    n: int
    delta: float
    initial_norm: float
    gates: list[GateStats] = field(default_factory=list)
    snapshots: dict[int, PauliSum] = field(default_factory=dict)
    peak_snapshot: tuple[int, PauliSum] | None = None
    aborted: str | None = None

    @property
    def n_max(self) -> int:
        if not self.gates:
            return 0
        return max(g.n_after for g in self.gates)

    @property
    def k_star(self) -> int:
        """1-based gate index achieving n_max (first occurrence)."""
        if not self.gates:
            return 0
        best = max(g.n_after for g in self.gates)
        for g in self.gates:
            if g.n_after == best:
                return g.k
        return 0

    @property
    def total_elapsed_s(self) -> float:
        return sum(g.elapsed_ns for g in self.gates) * 1e-9

    def finalize(self) -> None:
        """Check the trivial memory bound N_max <= ||O||^2 / delta^2."""
        if self.delta > 0 and self.gates:
            bound = (self.initial_norm / self.delta) ** 2
            if self.n_max > bound * (1.0 + 1e-9):
                raise InvariantViolation(
                    f"N_max={self.n_max} exceeds trivial bound {bound:.6g} "
                    f"(norm={self.initial_norm}, delta={self.delta})"
                )

    def phi_series(self) -> np.ndarray:
        return np.array([g.phi for g in self.gates])

    def eta_series(self) -> np.ndarray:
        return np.array([g.eta for g in self.gates])

    def n_series(self) -> np.ndarray:
        return np.array([g.n_after for g in self.gates], dtype=np.int64)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["k", "theta", "phi", "eta", "n_before", "n_after", "truncated", "norm", "elapsed_ns"]
            )
            for g in self.gates:
                writer.writerow(
                    [g.k, repr(g.theta), repr(g.phi), repr(g.eta), g.n_before, g.n_after,
                     g.truncated, repr(g.norm_after), g.elapsed_ns]
                )

    @classmethod
    def from_csv(cls, path, n: int = 0, delta: float = 0.0, initial_norm: float = 1.0) -> "TraceLog":
        out = cls(n=n, delta=delta, initial_norm=initial_norm)
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                out.gates.append(
                    GateStats(
                        k=int(row["k"]), theta=float(row["theta"]), phi=float(row["phi"]),
                        eta=float(row["eta"]), n_before=int(row["n_before"]),
                        n_after=int(row["n_after"]), truncated=int(row["truncated"]),
                        norm_after=float(row["norm"]), elapsed_ns=int(row["elapsed_ns"]),
                    )
                )
        return out

    def summary(self, expectation=None) -> dict:
        out = {
            "n_qubits": self.n,
            "delta": self.delta,
            "initial_norm": self.initial_norm,
            "gates": len(self.gates),
            "n_max": self.n_max,
            "k_star": self.k_star,
            "aborted": self.aborted,
        }
        if expectation is not None:
            out["expectation"] = expectation
        return out


@dataclass
class PartitionResult:
    """Row partition against an upcoming gate generator.

    ``pairs`` lists each merge pair {P, iσP} once as (slot_a, slot_b) with
    slot_a < slot_b; ``unpaired`` are anti rows whose partner is absent.
    """

    comm: np.ndarray
    anti: np.ndarray
    pairs: np.ndarray
    unpaired: np.ndarray


# ---------------------------------------------------------------------------
# generator preparation and angle reduction
# ---------------------------------------------------------------------------


def _prepare_generator(sigma: PauliString, n: int):
    """Packed words, canonical alpha, orientation, and support flag.

    A generator whose alpha differs from canonical by 2 represents the
    negated plain string; rotating about -sigma by theta equals rotating
    about sigma by -theta.
    """
    if sigma.n != n:
        raise PauliError(f"generator acts on {sigma.n} qubits, observable has {n}")
    words = sigma.nu_words()
    canon = sigma.canonical_alpha()
    diff = (sigma.alpha - canon) % 4
    if diff == 0:
        orientation = 1.0
    elif diff == 2:
        orientation = -1.0
    else:
        raise PauliError(
            f"generator {sigma!r} is not Hermitian (phase offset {diff}); cannot rotate about it"
        )
    return words, canon, orientation, bool(words.any())


def _reduce_angle(theta: float) -> tuple[int, float]:
    """theta = q*(pi/2) + residual with residual in [-pi/4, pi/4]; q mod 4."""
    q = round(theta / _HALF_PI)
    residual = theta - q * _HALF_PI
    return q % 4, residual


# ---------------------------------------------------------------------------
# public partition (arbitrary row order)
# ---------------------------------------------------------------------------


def partition(s: PauliSum, sigma: PauliString) -> PartitionResult:
    """Split rows into commuting/anti-commuting sets and find merge pairs."""
    words, _canon, _orient, has_support = _prepare_generator(sigma, s.n)
    bits = s.bits
    anti_mask = kernels.anti_mask(bits, words)
    anti_idx = np.flatnonzero(anti_mask)
    comm_idx = np.flatnonzero(~anti_mask)
    if len(anti_idx) == 0 or not has_support:
        return PartitionResult(comm_idx, anti_idx, np.empty((0, 2), np.int64), anti_idx[:0])
    order = kernels.sort_order(bits)
    bits_sorted = np.ascontiguousarray(bits[order])
    partner_bits = bits[anti_idx] ^ words
    pos = kernels.find_rows(bits_sorted, partner_bits)
    found = pos >= 0
    partner_slots = order[pos[found]]
    a = anti_idx[found]
    first = a < partner_slots
    pairs = np.stack([a[first], partner_slots[first]], axis=1)
    return PartitionResult(comm_idx, anti_idx, pairs, anti_idx[~found])


# ---------------------------------------------------------------------------
# numpy fallback gate path (same arrays out as the fused kernel)
# ---------------------------------------------------------------------------


def _merge_arrays(bits, coeffs, new_bits, new_coeffs, pos):
    """Insert a sorted new block at the given searchsorted positions."""
    n, m = len(coeffs), len(new_coeffs)
    width = bits.shape[1]
    out_bits = np.empty((n + m, width), np.uint64)
    out_coeffs = np.empty(n + m, np.float64)
    new_at = pos + np.arange(m)
    old_mask = np.ones(n + m, bool)
    old_mask[new_at] = False
    out_bits[new_at] = new_bits
    out_coeffs[new_at] = new_coeffs
    out_bits[old_mask] = bits
    out_coeffs[old_mask] = coeffs
    return out_bits, out_coeffs


def _gate_numpy(bits, coeffs, words, sigma_alpha, q, cos_r, sin_r, delta, row_cap):
    """One gate on canonically sorted arrays, vectorized numpy pieces.

    Returns (bits, coeffs, anti_count, eta_count, truncated, cap_exceeded).
    """
    n_rows = len(coeffs)
    anti = kernels.anti_mask(bits, words)
    anti_idx = np.flatnonzero(anti)
    n_anti = len(anti_idx)
    if n_anti == 0:
        return bits, coeffs, 0, 0, 0, False

    partner_bits = bits[anti_idx] ^ words
    pos = kernels.find_rows(bits, partner_bits)
    eta_count = int(np.count_nonzero(pos >= 0))

    if q:
        signs = kernels.branch_signs(bits[anti_idx], words, sigma_alpha)
        if np.any(signs == 0):
            raise InvariantViolation("non-Hermitian branch phase; state is corrupt")
        if q == 2:
            coeffs[anti_idx] = -coeffs[anti_idx]
        else:
            mult = signs.astype(np.float64) if q == 1 else -signs.astype(np.float64)
            coeffs[anti_idx] = coeffs[anti_idx] * mult
            relabeled = bits[anti_idx] ^ words
            comm_idx = np.flatnonzero(~anti)
            order = kernels.sort_order(relabeled)
            relabeled = np.ascontiguousarray(relabeled[order])
            anti_coeffs = coeffs[anti_idx][order]
            comm_bits = np.ascontiguousarray(bits[comm_idx])
            comm_coeffs = coeffs[comm_idx]
            ins = kernels.lower_bound(comm_bits, relabeled)
            bits, coeffs = _merge_arrays(comm_bits, comm_coeffs, relabeled, anti_coeffs, ins)
            if sin_r != 0.0:
                anti = kernels.anti_mask(bits, words)
                anti_idx = np.flatnonzero(anti)
                partner_bits = bits[anti_idx] ^ words
                pos = kernels.find_rows(bits, partner_bits)

    truncated = 0
    if sin_r != 0.0:
        signs = kernels.branch_signs(bits[anti_idx], words, sigma_alpha)
        if np.any(signs == 0):
            raise InvariantViolation("non-Hermitian branch phase; state is corrupt")
        paired = pos >= 0

        unpaired_rows = anti_idx[~paired]
        if len(coeffs) + len(unpaired_rows) > row_cap:
            return bits, coeffs, n_anti, eta_count, 0, True

        new_bits = bits[unpaired_rows] ^ words
        new_coeffs = coeffs[unpaired_rows] * (sin_r * signs[~paired].astype(np.float64))

        paired_rows = anti_idx[paired]
        partner_slots = pos[paired]
        # partner of an anti row carries the opposite branch sign
        paired_signs = signs[paired].astype(np.float64)
        paired_new = coeffs[paired_rows] * cos_r + coeffs[partner_slots] * (sin_r * -paired_signs)

        coeffs[unpaired_rows] *= cos_r
        coeffs[paired_rows] = paired_new

        if len(unpaired_rows):
            order = kernels.sort_order(new_bits)
            new_bits = np.ascontiguousarray(new_bits[order])
            new_coeffs = new_coeffs[order]
            ins = kernels.lower_bound(bits, new_bits)
            bits, coeffs = _merge_arrays(bits, coeffs, new_bits, new_coeffs, ins)

        keep = np.abs(coeffs) >= delta if delta > 0 else coeffs != 0.0
        truncated = int(len(coeffs) - np.count_nonzero(keep))
        if truncated:
            bits = np.ascontiguousarray(bits[keep])
            coeffs = coeffs[keep]
    return bits, coeffs, n_anti, eta_count, truncated, False


def _run_gate(bits, coeffs, prep, theta, delta, row_cap):
    """Dispatch one gate to the fused kernel or the numpy fallback.

    Returns (bits, coeffs, phi, eta, truncated, cap_exceeded).
    """
    words, canon, orientation, has_support = prep
    n_rows = len(coeffs)
    if n_rows == 0 or not has_support:
        return bits, coeffs, 0.0, 0.0, 0, False
    q, residual = _reduce_angle(orientation * theta)
    cos_r = math.cos(residual)
    sin_r = math.sin(residual) if residual != 0.0 else 0.0
    if kernels.USING_NUMBA:
        bits, coeffs, n_anti, eta_count, truncated, capped = kernels.numba_impl["gate"](
            bits, coeffs, words, canon, q, cos_r, sin_r, delta, row_cap
        )
    else:
        bits, coeffs, n_anti, eta_count, truncated, capped = _gate_numpy(
            bits, coeffs, words, canon, q, cos_r, sin_r, delta, row_cap
        )
    return bits, coeffs, n_anti / n_rows, eta_count / n_rows, truncated, capped


def apply_rotation(
    s: PauliSum, sigma: PauliString, theta: float, delta: float, k: int = 1
) -> tuple[PauliSum, GateStats]:
    """Apply one Pauli rotation with post-gate truncation.

    Returns a new PauliSum (canonical row order) and the gate stats.
    """
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    if not math.isfinite(theta):
        raise ValueError(f"theta must be finite, got {theta}")
    prep = _prepare_generator(sigma, s.n)
    start = time.perf_counter_ns()
    out = s.copy()
    out.sort_canonical()
    bits = out.bits.copy()
    coeffs = out.coeffs.copy()
    n_before = len(coeffs)
    bits, coeffs, phi, eta, truncated, capped = _run_gate(
        bits, coeffs, prep, theta, delta, s.row_cap
    )
    if capped:
        raise RowCapExceeded(
            f"{n_before} rows would branch past the cap {s.row_cap}",
            partial=PauliSum._from_arrays(s.n, bits, coeffs, row_cap=s.row_cap),
        )
    norm_after = float(np.sqrt(np.dot(coeffs, coeffs)))
    stats = GateStats(
        k=k, theta=theta, phi=phi, eta=eta, n_before=n_before, n_after=len(coeffs),
        truncated=truncated, norm_after=norm_after, elapsed_ns=time.perf_counter_ns() - start,
    )
    return PauliSum._from_arrays(s.n, bits, coeffs, row_cap=s.row_cap), stats


def evolve(
    circuit: Circuit,
    observable: PauliSum,
    delta: float,
    snapshot_gates=(),
    snapshot_steps: bool = False,
    track_peak_snapshot: bool = False,
    budget_s: float | None = None,
    row_cap: int | None = None,
) -> tuple[PauliSum, TraceLog]:
    """Propagate the observable through the whole circuit (Heisenberg order).

    Parameters
    ----------
    snapshot_gates : sequence of int
        1-based gate indices at which to store coefficient snapshots.
    snapshot_steps : bool
        Additionally snapshot at end-of-Trotter-step boundaries when the
        circuit metadata records ``gates_per_step``.
    track_peak_snapshot : bool
        Keep a rolling snapshot of the gate achieving the running N_max.
    budget_s : float, optional
        Wall-clock budget; exceeding it raises BudgetExceeded carrying the
        partial trace.
    row_cap : int, optional
        Hard cap on row count (default: the observable's cap).
    """
    if circuit.n != observable.n:
        raise PauliError(f"circuit n={circuit.n} vs observable n={observable.n}")
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    cap = observable.row_cap if row_cap is None else row_cap

    snap_at = set(int(k) for k in snapshot_gates)
    if snapshot_steps:
        per_step = int(circuit.metadata.get("gates_per_step", 0))
        if per_step > 0:
            snap_at.update(range(per_step, len(circuit.gates) + 1, per_step))
    instrumented = bool(snap_at) or track_peak_snapshot

    # one prep per unique generator, resolved to a flat per-gate list
    prep_cache: dict[int, tuple] = {}
    preps = []
    for sigma, _theta in circuit.gates:
        prep = prep_cache.get(id(sigma))
        if prep is None:
            prep = _prepare_generator(sigma, circuit.n)
            prep_cache[id(sigma)] = prep
        preps.append(prep)

    trace = TraceLog(n=circuit.n, delta=delta, initial_norm=observable.raw_norm())
    state = observable.copy()
    state.sort_canonical()
    bits = state.bits.copy()
    coeffs = state.coeffs.copy()

    gates = trace.gates
    peak = -1
    t0 = time.monotonic()
    deadline = None if budget_s is None else t0 + budget_s

    for k, (sigma, theta) in enumerate(circuit.gates, start=1):
        if deadline is not None and time.monotonic() > deadline:
            trace.aborted = "budget"
            raise BudgetExceeded(
                f"budget {budget_s}s exhausted at gate {k}/{len(circuit.gates)}",
                trace=trace,
                partial=PauliSum._from_arrays(circuit.n, bits, coeffs, row_cap=cap),
            )
        gate_start = time.perf_counter_ns()
        n_before = len(coeffs)
        bits, coeffs, phi, eta, truncated, capped = _run_gate(
            bits, coeffs, preps[k - 1], theta, delta, cap
        )
        if capped:
            trace.aborted = "row_cap"
            raise RowCapExceeded(
                f"row cap {cap} exceeded at gate {k}/{len(circuit.gates)}",
                trace=trace,
                partial=PauliSum._from_arrays(circuit.n, bits, coeffs, row_cap=cap),
            )
        norm_after = math.sqrt(float(np.dot(coeffs, coeffs)))
        gates.append(
            GateStats(
                k=k, theta=theta, phi=phi, eta=eta, n_before=n_before, n_after=len(coeffs),
                truncated=truncated, norm_after=norm_after,
                elapsed_ns=time.perf_counter_ns() - gate_start,
            )
        )
        if instrumented:
            if k in snap_at:
                trace.snapshots[k] = PauliSum._from_arrays(
                    circuit.n, bits.copy(), coeffs.copy(), row_cap=cap
                )
            if track_peak_snapshot and len(coeffs) > peak:
                peak = len(coeffs)
                trace.peak_snapshot = (
                    k,
                    PauliSum._from_arrays(circuit.n, bits.copy(), coeffs.copy(), row_cap=cap),
                )

    trace.finalize()
    return PauliSum._from_arrays(circuit.n, bits, coeffs, row_cap=cap), trace


def expectation(s: PauliSum) -> float:
    """<0...0| O |0...0>: sum of coefficients over Z-type rows."""
    mask = s.z_type_mask()
    if not mask.any():
        return 0.0
    return float(np.sum(s.coeffs[mask]))
