"""Smooth ordered eigendecomposition along a 1-D parameter path.

Predictor-corrector continuation for symmetric-definite pencils (A(t), B(t)):
Euler predictors for eigenvalues and B-orthonormal eigenvectors, per-column
sign correction against the prediction, stepsize control driven by prediction
errors, a secant guard against imminent ordering violations, and a dedicated
traversal mode for veering intervals where two eigenvalues nearly coalesce
and their eigenvectors rotate rapidly.

Closed loops additionally yield the sign signature D, the diagonal +-1 matrix
with V(1) = V(0) D; its -1 entries betray eigenvalue coalescences enclosed by
the loop.

Pair indices in public interfaces are 1-based: pair i couples the i-th and
(i+1)-th eigenvalues in decreasing order.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    AmbiguousSign,
    DegenerateStart,
    GapTooSmall,
    LoopUnresolvable,
    StepUnderflow,
    TripleDegeneracy,
)
from .linalg import EigenPair, eig2x2_pencil, gen_eig_ordered, symmetrize

__all__ = [
    "EigenPoint",
    "StepRecord",
    "StepDecision",
    "TraceResult",
    "TOLSTEP",
    "TOLDIST",
    "init_decomposition",
    "predict",
    "sign_correct",
    "step_control",
    "secant_guard",
    "veering_traverse",
    "trace",
    "trace_loop",
    "write_trace_csv",
]

_EPS = np.finfo(float).eps

# Prediction-error budget per step; rho is the worst error over this budget.
TOLSTEP = 1e-2
# Accept a step when rho = max(rho_lambda, rho_V) / TOLSTEP stays below this.
RHO_ACCEPT = 1.5
# h never grows by more than this factor per step (h/rho diverges as rho -> 0).
GROWTH_CAP = 2.0
# Relative-gap threshold below which a pair counts as close to veering.
TOLDIST = 1e6 * _EPS
# Leave veering mode only once the gap exceeds this multiple of TOLDIST.
VEERING_EXIT_FACTOR = 10.0
# Sign decisions with overlap below this are unreliable; reject the step.
AMBIGUOUS_OVERLAP = 0.1
# Default initial stepsize and stepsize cap, as fractions of the path span.
H0_FRAC = 1.0 / 64.0
H_MAX_FRAC = 1.0 / 16.0
# Stepsize floor as a fraction of the path span.
H_MIN_FRAC = 1e-14
# Signature entries must sit within this distance of +-1 (diagonal) and 0
# (off-diagonal) before rounding.
SIGNATURE_TOL = 1e-6

# Veering traversal: per-substep guards. The in-pair sign decision needs the
# 2x2 overlap diagonal decisively away from zero (rotation under 45 degrees);
# outer columns rotate slowly and must overlap strongly.
_PAIR_DIAG_MIN = 0.75
_PAIR_ORTHO_TOL = 0.05
_OUTER_DIAG_MIN = 0.9
_VEER_GROW = 1.5
_VEER_EASY = 0.98
_MAX_SUBSTEPS = 10_000


@dataclass(frozen=True, eq=False)
class EigenPoint:
    """Decomposition at one path parameter: V.T B V = I, A V = B V Lambda."""

    t: float
    V: np.ndarray
    lam: np.ndarray
    h_next: float


class StepRecord(NamedTuple):
    """Diagnostics for one accepted step (NaN rho entries while veering)."""

    t: float
    h: float
    rho_lambda: float
    rho_V: float
    veering: bool


class StepDecision(NamedTuple):
    """Outcome of stepsize control for one attempted step."""

    rho: float
    h_new: float
    accept: bool
    rho_lambda: float
    rho_V: float


@dataclass(frozen=True, eq=False)
class TraceResult:
    """A completed trace; D is None for open paths.

    D, when present, is the length-n vector of +-1 signature entries with
    V(1) = V(0) diag(D); signature_raw holds the pre-rounding diagonal.
    """

    points: list[EigenPoint]
    records: list[StepRecord]
    veering_events: list[tuple[float, float, int]]
    step_stats: dict
    D: np.ndarray | None = None
    signature_raw: np.ndarray | None = None


class _VeeringResult(NamedTuple):
    state: EigenPoint
    event: tuple[float, float, int]
    points: list[EigenPoint]
    records: list[StepRecord]


def _rel_gaps(lam: np.ndarray) -> np.ndarray:
    """Adjacent eigenvalue gaps scaled by (|lambda_i| + 1)."""
    return (lam[:-1] - lam[1:]) / (np.abs(lam[:-1]) + 1.0)


def _canonical_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns so each column's largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(V), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1.0
    return V * s


def init_decomposition(pencil, path, t: float = 0.0) -> EigenPoint:
    """Ordered decomposition at the start of a path, with deterministic signs.

    Column signs are canonicalized (largest-magnitude entry positive) so the
    anchor does not depend on solver sign conventions.

    Raises
    ------
    DegenerateStart
        If eigenvalues tie at the starting point.
    """
    x, y = path.point(t)
    A, B = pencil.eval(x, y)
    ep = gen_eig_ordered(A, B)
    if ep.degenerate:
        raise DegenerateStart(
            f"eigenvalue tie at pairs {tuple(p + 1 for p in ep.degenerate_pairs)} "
            f"at t = {t:.12g}"
        )
    return EigenPoint(t=t, V=_canonical_signs(ep.vectors), lam=ep.values, h_next=0.0)


def predict(
    state: EigenPoint, A_next: np.ndarray, B_next: np.ndarray, h: float
) -> tuple[np.ndarray, np.ndarray]:
    """Euler predictors for the decomposition at the next parameter value.

    With A_V = V.T A(t+h) V and B_V = V.T B(t+h) V (V, Lambda from the
    current state), the predictions are

        Lambda_pred = diag(A_V) - Lambda (diag(B_V) - I),
        V_pred = V (I + P + H),   P = (I - B_V)/2,
        H_ik = ((lambda_i + lambda_k)/2 B_V[i,k] - A_V[i,k]) / (lambda_i - lambda_k)

    for i != k, H_ii = 0. H is skew-symmetric; the finite differences of A
    and B across the step replace the time derivatives of the underlying
    first-order system, so both predictions carry O(h^2) local error.

    Raises
    ------
    GapTooSmall
        If adjacent eigenvalues are closer than 10*eps relative; the divided
        differences in H are then meaningless and veering handling must take
        over.
    """
    V = state.V
    lam = state.lam
    n = lam.size
    if n > 1 and float(np.min(_rel_gaps(lam))) <= 10.0 * _EPS:
        raise GapTooSmall(f"adjacent eigenvalues closer than 10*eps at t = {state.t:.12g}")
    A_V = symmetrize(V.T @ A_next @ V)
    B_V = symmetrize(V.T @ B_next @ V)
    lam_pred = np.diag(A_V) - lam * (np.diag(B_V) - 1.0)
    P = 0.5 * (np.eye(n) - B_V)
    denom = np.subtract.outer(lam, lam)
    np.fill_diagonal(denom, 1.0)
    H = (0.5 * np.add.outer(lam, lam) * B_V - A_V) / denom
    np.fill_diagonal(H, 0.0)
    V_pred = V @ (np.eye(n) + P + H)
    return lam_pred, V_pred


def sign_correct(
    V_raw: np.ndarray, B_next: np.ndarray, V_pred: np.ndarray
) -> tuple[np.ndarray, np.ndarray, float]:
    """Choose column signs of V_raw to best match the prediction.

    The sign matrix S = diag(sign(diag(V_raw.T B_next V_pred))) minimizes
    || S V_raw.T B_next V_pred - I ||_F over diagonal sign matrices. Returns
    (V_raw S, S diagonal, smallest overlap magnitude). Exact zero overlaps
    resolve to +1 and, like any overlap below AMBIGUOUS_OVERLAP, emit an
    AmbiguousSign warning; callers treat that as a step rejection.
    """
    d = np.einsum("ij,ij->j", V_raw, B_next @ V_pred)
    s = np.where(d >= 0.0, 1.0, -1.0)
    min_overlap = float(np.min(np.abs(d)))
    if min_overlap < AMBIGUOUS_OVERLAP:
        warnings.warn(
            f"sign overlap {min_overlap:.3e} below {AMBIGUOUS_OVERLAP}; "
            "prediction too poor to trust",
            AmbiguousSign,
            stacklevel=2,
        )
    return V_raw * s, s, min_overlap


def step_control(
    lam_new: np.ndarray,
    lam_pred: np.ndarray,
    V_new: np.ndarray,
    V_pred: np.ndarray,
    B_new: np.ndarray,
    h: float,
    h_min: float | None = None,
) -> StepDecision:
    """Accept/reject an attempted step and propose the next stepsize.

    rho_lambda = max_i |lam_new_i - lam_pred_i| / (|lam_new_i| + 1) and
    rho_V = sqrt(tr[(V_new - V_pred).T B_new (V_new - V_pred)] / n) measure
    prediction quality; rho = max(rho_lambda, rho_V) / TOLSTEP. The step is
    accepted when rho <= RHO_ACCEPT and the new stepsize is h / rho, with
    growth capped at GROWTH_CAP * h.

    Raises
    ------
    StepUnderflow
        If h_min is given and the proposed stepsize falls below it.
    """
    n = lam_new.size
    rho_lambda = float(np.max(np.abs(lam_new - lam_pred) / (np.abs(lam_new) + 1.0)))
    E = V_new - V_pred
    rho_V = math.sqrt(max(float(np.trace(E.T @ B_new @ E)), 0.0) / n)
    rho = max(rho_lambda, rho_V) / TOLSTEP
    h_new = h / max(rho, 1.0 / GROWTH_CAP)
    if h_min is not None and h_new < h_min:
        raise StepUnderflow(f"proposed stepsize {h_new:.3e} below floor {h_min:.3e}")
    return StepDecision(
        rho=rho, h_new=h_new, accept=rho <= RHO_ACCEPT, rho_lambda=rho_lambda, rho_V=rho_V
    )


def secant_guard(
    lam_prev: np.ndarray,
    lam_new: np.ndarray,
    h: float,
    h_taken: float | None = None,
) -> float:
    """Cap h so secant extrapolation predicts no eigenvalue-ordering violation.

    Secant slopes (lam_new - lam_prev) / h_taken extrapolate each eigenvalue
    over the candidate step h. If the extrapolated values stay ordered, h is
    returned unchanged; otherwise h is reduced to 0.9 times the earliest
    predicted crossing time gap_i / (slope_{i+1} - slope_i) over the
    violating pairs.
    """
    if h_taken is None:
        h_taken = h
    slopes = (lam_new - lam_prev) / h_taken
    sec = lam_new + h * slopes
    viol = sec[:-1] < sec[1:]
    if not bool(viol.any()):
        return h
    gaps = lam_new[:-1] - lam_new[1:]
    sdiff = slopes[1:] - slopes[:-1]
    crossing = float(np.min(gaps[viol] / sdiff[viol]))
    return min(h, 0.9 * crossing)


def _resolve_pair(Ap: np.ndarray, Bp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form decomposition of a projected 2x2 pencil, diag-positive signs.

    Returns (Z, lam) with lam decreasing, Z.T Bp Z = I and Z[k, k] >= 0, so
    the columns stay aligned with the basis the pencil was projected onto.
    """
    a, b, c = Ap[0, 0], Ap[0, 1], Ap[1, 1]
    al, be, ga = Bp[0, 0], Bp[0, 1], Bp[1, 1]
    _, _, l1, l2 = eig2x2_pencil(a, b, c, al, be, ga)
    Z = np.empty((2, 2))
    for k, lam in enumerate((l1, l2)):
        m11 = a - lam * al
        m12 = b - lam * be
        m22 = c - lam * ga
        z_a = np.array([-m12, m11])
        z_b = np.array([m22, -m12])
        z = z_a if np.linalg.norm(z_a) >= np.linalg.norm(z_b) else z_b
        nrm = math.sqrt(max(float(z @ Bp @ z), 0.0))
        if nrm == 0.0:
            z = np.eye(2)[:, k]
            nrm = math.sqrt(float(z @ Bp @ z))
        Z[:, k] = z / nrm
        if Z[k, k] < 0.0:
            Z[:, k] = -Z[:, k]
    return Z, np.array([l1, l2])


def veering_traverse(
    state: EigenPoint,
    pencil,
    path,
    pair: int,
    h_entry: float | None = None,
    t_end: float = 1.0,
    h_min: float | None = None,
) -> _VeeringResult:
    """Advance past a veering interval of the 1-based pair (pair, pair+1).

    Substeps take fresh ordered decompositions and chain column signs by
    overlap with the previous point. The flagged pair's eigenvectors rotate
    rapidly while its invariant subspace stays smooth, so each substep must
    keep the pair's 2x2 overlap block close to orthogonal with a decisive
    diagonal (rotation under 45 degrees); the stepsize halves until that
    holds. Outer columns must overlap strongly with their predecessors.

    On exit (relative gap at least VEERING_EXIT_FACTOR * TOLDIST) the pair is
    re-resolved inside its 2-dim subspace with the closed-form 2x2 solve,
    signs matched to the tracked basis. Reaching t_end still inside the zone
    terminates the traversal there; downstream signature checks decide
    whether the result is usable.

    Raises
    ------
    StepUnderflow
        If the required substep falls below h_min (a coalescence sits on or
        numerically on the path).
    TripleDegeneracy
        If a third eigenvalue enters the near-degenerate zone.
    """
    i = pair - 1
    n = state.lam.size
    if not 0 <= i < n - 1:
        raise ValueError(f"pair must be in 1..{n - 1}, got {pair}")
    if h_entry is None:
        h_entry = state.h_next if state.h_next > 0 else (t_end - state.t) * H0_FRAC
    if h_min is None:
        h_min = H_MIN_FRAC * max(t_end, 1.0)
    t_enter = state.t
    t = state.t
    V_prev = state.V
    h_v = min(h_entry, t_end - t)
    points: list[EigenPoint] = []
    records: list[StepRecord] = []
    outer = np.array([k for k in range(n) if k not in (i, i + 1)], dtype=int)
    pair_ix = np.array([i, i + 1], dtype=int)

    for _ in range(_MAX_SUBSTEPS):
        if t >= t_end:
            break
        h_step = min(h_v, t_end - t)
        t_new = t_end if t_end - t <= h_v else t + h_step
        x, y = path.point(t_new)
        A_new, B_new = pencil.eval(x, y)
        ep = gen_eig_ordered(A_new, B_new)
        lam = ep.values
        gaps = _rel_gaps(lam)
        for k in (i - 1, i + 1):
            if 0 <= k < n - 1 and gaps[k] < TOLDIST:
                raise TripleDegeneracy(
                    f"pairs {k + 1} and {pair} both near-degenerate at t = {t_new:.12g}"
                )
        M = V_prev.T @ B_new @ ep.vectors
        diag = np.diag(M)
        Mp = M[np.ix_(pair_ix, pair_ix)]
        outer_ok = outer.size == 0 or float(np.min(np.abs(diag[outer]))) >= _OUTER_DIAG_MIN
        pair_diag = float(np.min(np.abs(np.diag(Mp))))
        pair_ok = (
            pair_diag >= _PAIR_DIAG_MIN
            and float(np.linalg.norm(Mp.T @ Mp - np.eye(2))) <= _PAIR_ORTHO_TOL
        )
        if not (outer_ok and pair_ok):
            h_v = h_step / 2.0
            if h_v < h_min:
                raise StepUnderflow(
                    f"eigenvector rotation unresolvable near t = {t:.12g} "
                    f"(substep {h_v:.3e} below floor {h_min:.3e})"
                )
            continue
        signs = np.where(diag >= 0.0, 1.0, -1.0)
        V_new = ep.vectors * signs
        t = t_new
        V_prev = V_new
        points.append(EigenPoint(t=t, V=V_new, lam=lam, h_next=h_v))
        records.append(StepRecord(t, h_step, math.nan, math.nan, True))
        if gaps[i] >= VEERING_EXIT_FACTOR * TOLDIST:
            W = V_new[:, pair_ix]
            Ap = symmetrize(W.T @ A_new @ W)
            Bp = symmetrize(W.T @ B_new @ W)
            Z, _ = _resolve_pair(Ap, Bp)
            V_res = V_new.copy()
            V_res[:, pair_ix] = W @ Z
            out = EigenPoint(t=t, V=V_res, lam=lam, h_next=h_entry)
            points[-1] = out
            return _VeeringResult(out, (t_enter, t, pair), points, records)
        if pair_diag > _VEER_EASY:
            h_v = min(h_v * _VEER_GROW, h_entry)
    else:
        raise StepUnderflow(
            f"veering zone starting at t = {t_enter:.12g} did not resolve "
            f"within {_MAX_SUBSTEPS} substeps"
        )

    out = points[-1] if points else state
    return _VeeringResult(out, (t_enter, t, pair), points, records)


def trace(
    pencil,
    path,
    h0: float | None = None,
    t0: float = 0.0,
    t1: float = 1.0,
) -> TraceResult:
    """Smooth ordered eigendecomposition of a pencil along a path.

    Predictor-corrector stepping with sign correction and adaptive stepsize;
    veering intervals are detected at the candidate point (relative gap below
    TOLDIST) and delegated to :func:`veering_traverse`. The returned result
    has D = None; use :func:`trace_loop` for closed paths.

    Raises
    ------
    DegenerateStart, StepUnderflow, TripleDegeneracy
        Propagated from the starting decomposition and the stepping modes.
    """
    if t1 <= t0:
        raise ValueError("need t1 > t0")
    span = t1 - t0
    h_min = H_MIN_FRAC * span
    h_max = H_MAX_FRAC * span
    state = init_decomposition(pencil, path, t0)
    h = min(h0 if h0 is not None else H0_FRAC * span, h_max)
    if h <= 0:
        raise ValueError("initial stepsize must be positive")

    points = [state]
    records: list[StepRecord] = []
    events: list[tuple[float, float, int]] = []
    accepted = 0
    rejected = 0
    h_lo = math.inf
    h_hi = 0.0

    while state.t < t1:
        remaining = t1 - state.t
        clamped = remaining <= h
        h_try = remaining if clamped else h
        t_next = t1 if clamped else state.t + h_try
        x, y = path.point(t_next)
        A_next, B_next = pencil.eval(x, y)
        ep = gen_eig_ordered(A_next, B_next)
        gaps = _rel_gaps(ep.values)
        flagged = np.flatnonzero(gaps < TOLDIST)
        if flagged.size:
            if flagged.size > 1:
                raise TripleDegeneracy(
                    f"{flagged.size} pairs simultaneously near-degenerate at t = {t_next:.12g}"
                )
            vr = veering_traverse(
                state,
                pencil,
                path,
                pair=int(flagged[0]) + 1,
                h_entry=h_try,
                t_end=t1,
                h_min=h_min,
            )
            events.append(vr.event)
            points.extend(vr.points)
            records.extend(vr.records)
            accepted += len(vr.points)
            state = vr.state
            h = min(state.h_next, h_max)
            continue
        lam_pred, V_pred = predict(state, A_next, B_next, h_try)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AmbiguousSign)
            V_corr, _, min_overlap = sign_correct(ep.vectors, B_next, V_pred)
        dec = step_control(ep.values, lam_pred, V_corr, V_pred, B_next, h_try)
        if dec.accept and min_overlap >= AMBIGUOUS_OVERLAP:
            h_next = min(dec.h_new, h_max)
            h_next = secant_guard(state.lam, ep.values, h_next, h_taken=h_try)
            state = EigenPoint(t=t_next, V=V_corr, lam=ep.values, h_next=h_next)
            points.append(state)
            records.append(StepRecord(t_next, h_try, dec.rho_lambda, dec.rho_V, False))
            accepted += 1
            h_lo = min(h_lo, h_try)
            h_hi = max(h_hi, h_try)
            h = h_next
        else:
            rejected += 1
            h = dec.h_new
            if min_overlap < AMBIGUOUS_OVERLAP:
                h = min(h, h_try / 2.0)
        if h < h_min and state.t < t1:
            raise StepUnderflow(
                f"stepsize {h:.3e} below floor {h_min:.3e} at t = {state.t:.12g}"
            )

    stats = {
        "accepted": accepted,
        "rejected": rejected,
        "h_min": h_lo if accepted else math.nan,
        "h_max": h_hi if accepted else math.nan,
        "veering_events": len(events),
    }
    return TraceResult(
        points=points, records=records, veering_events=events, step_stats=stats
    )


def trace_loop(pencil, loop, h0: float | None = None) -> TraceResult:
    """Trace a closed loop and extract the sign signature D.

    D is computed as the rounded diagonal of V(0).T B(0) V(1); pre-rounding
    entries must sit within SIGNATURE_TOL of +-1 (diagonal) and 0
    (off-diagonal), and D must have an even number of -1 entries.

    Raises
    ------
    LoopUnresolvable
        On StepUnderflow, TripleDegeneracy or DegenerateStart inside the
        trace, or when the signature fails the cleanliness checks.
    """
    if not getattr(loop, "closed", False):
        raise ValueError("trace_loop requires a closed path")
    try:
        tr = trace(pencil, loop, h0=h0)
    except (StepUnderflow, TripleDegeneracy, DegenerateStart) as exc:
        raise LoopUnresolvable(str(exc)) from exc
    V0 = tr.points[0].V
    V1 = tr.points[-1].V
    x, y = loop.point(0.0)
    _, B0 = pencil.eval(x, y)
    M = V0.T @ B0 @ V1
    d = np.diag(M).copy()
    off = float(np.max(np.abs(M - np.diag(d)))) if d.size > 1 else 0.0
    diag_err = float(np.max(np.abs(np.abs(d) - 1.0)))
    if diag_err > SIGNATURE_TOL or off > SIGNATURE_TOL:
        raise LoopUnresolvable(
            f"signature not clean: diagonal within {diag_err:.3e} of +-1, "
            f"off-diagonal magnitude {off:.3e} (tolerance {SIGNATURE_TOL})"
        )
    D = np.where(d > 0.0, 1, -1).astype(int)
    if int(np.prod(D)) != 1:
        raise LoopUnresolvable("signature has an odd number of -1 entries")
    return TraceResult(
        points=tr.points,
        records=tr.records,
        veering_events=tr.veering_events,
        step_stats=tr.step_stats,
        D=D,
        signature_raw=d,
    )


def write_trace_csv(result: TraceResult, path) -> None:
    """One row per accepted step: t, h, eigenvalues, rho values, veering flag."""
    n = result.points[0].lam.size
    header = ["t", "h"] + [f"lambda_{k + 1}" for k in range(n)] + [
        "rho_lambda",
        "rho_V",
        "veering",
    ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for point, rec in zip(result.points[1:], result.records):
            row = [f"{rec.t:.17g}", f"{rec.h:.17g}"]
            row += [f"{v:.17g}" for v in point.lam]
            row += [f"{rec.rho_lambda:.17g}", f"{rec.rho_V:.17g}", str(int(rec.veering))]
            writer.writerow(row)
