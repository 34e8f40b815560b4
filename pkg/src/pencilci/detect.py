"""Locating eigenvalue coalescences of a pencil family over a 2-D domain.

A coalescence between adjacent eigenvalues of (A(x, y), B(x, y)) flips the
signs of the associated eigenvector pair when transported around any small
enclosing loop. Tracing the boundary of each box of a grid therefore flags
exactly those boxes whose interior holds an odd number of coalescences per
pair; recursive subdivision of a flagged box then pins the location.

Pair indices are 1-based throughout: pair i couples eigenvalues i and i+1 in
decreasing order. Box rows index the first coordinate, columns the second.
"""

from __future__ import annotations

import csv
import json
import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .continuation import trace_loop
from .errors import LoopUnresolvable, OddSignCount, RefinementInconsistent
from .pencil import box_perimeter

__all__ = [
    "GridSpec",
    "BoxResult",
    "SweepResult",
    "CIEstimate",
    "decode_signature",
    "signature_from_counts",
    "sweep_grid",
    "refine_box",
    "write_ci_csv",
    "write_sweep_summary",
]

# Perimeter retry offsets are this fraction of a box side, preserving the
# local tiling among all boxes retried at the same attempt.
_SHIFT_FRAC = 1e-3
_SHIFT_TAG = 0xA11E
# Subdivision-center retry offsets in refine_box, as a fraction of child side.
_CENTER_SHIFT_FRAC = 1e-2
_CENTER_TAG = 0xC1


def decode_signature(D: np.ndarray) -> tuple[int, ...]:
    """Flagged pair indices (1-based) from a loop sign signature.

    The -1 entries of D come in consecutive runs delimiting the flipped
    eigenvector columns: with 1-based -1 positions i_1 < i_2 < ... < i_2m,
    pair i is flagged exactly when i_{2j-1} <= i < i_{2j} for some j.

    Raises
    ------
    OddSignCount
        If D has an odd number of -1 entries (no valid loop produces one).
    """
    D = np.asarray(D)
    neg = np.flatnonzero(D < 0) + 1
    if neg.size % 2:
        raise OddSignCount(f"signature has {neg.size} entries equal to -1")
    flagged: list[int] = []
    for j in range(0, neg.size, 2):
        flagged.extend(range(int(neg[j]), int(neg[j + 1])))
    return tuple(flagged)


def signature_from_counts(counts) -> np.ndarray:
    """Sign signature of a loop enclosing d_i coalescences of each pair.

    counts has length n-1; entry d_i (1-based pair i) is the number of
    enclosed coalescences between eigenvalues i and i+1. The signature is
    D_1 = (-1)^{d_1}, D_i = (-1)^{d_{i-1} + d_i}, D_n = (-1)^{d_{n-1}}, so
    decode_signature recovers exactly the pairs with odd d_i.
    """
    d = np.asarray(counts, dtype=int)
    if d.ndim != 1 or d.size < 1:
        raise ValueError("counts must be a 1-D sequence with at least one entry")
    if np.any(d < 0):
        raise ValueError("counts must be non-negative")
    n = d.size + 1
    exponents = np.zeros(n, dtype=int)
    exponents[:-1] += d
    exponents[1:] += d
    return np.where(exponents % 2 == 0, 1, -1).astype(int)


@dataclass(frozen=True)
class GridSpec:
    """Uniform box grid over [x0, x1] x [y0, y1].

    rows boxes partition the x-range (first coordinate), cols boxes the
    y-range. Box (r, c), 0-based, covers
    [x0 + r dx, x0 + (r+1) dx] x [y0 + c dy, y0 + (c+1) dy].
    """

    rows: int
    cols: int
    x_range: tuple[float, float] = (0.0, 1.0)
    y_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid needs at least one row and one column")
        if not (self.x_range[0] < self.x_range[1] and self.y_range[0] < self.y_range[1]):
            raise ValueError("ranges must be increasing")

    @property
    def dx(self) -> float:
        return (self.x_range[1] - self.x_range[0]) / self.rows

    @property
    def dy(self) -> float:
        return (self.y_range[1] - self.y_range[0]) / self.cols

    def box(self, row: int, col: int) -> tuple[float, float, float, float]:
        """Corner rectangle (x0, x1, y0, y1) of box (row, col)."""
        x0 = self.x_range[0] + row * self.dx
        y0 = self.y_range[0] + col * self.dy
        return (x0, x0 + self.dx, y0, y0 + self.dy)


@dataclass(frozen=True)
class BoxResult:
    """Outcome for one grid box; pairs lists the flagged 1-based indices."""

    row: int
    col: int
    center: tuple[float, float]
    pairs: tuple[int, ...]
    status: str  # "ok" or "unresolved"
    attempts: int
    shift: tuple[float, float]
    message: str = ""


@dataclass(frozen=True, eq=False)
class SweepResult:
    grid: GridSpec
    boxes: list[BoxResult]

    @property
    def flagged(self) -> list[BoxResult]:
        return [b for b in self.boxes if b.pairs]

    @property
    def unresolved(self) -> list[BoxResult]:
        return [b for b in self.boxes if b.status != "ok"]

    @property
    def total_count(self) -> int:
        """Total flags summed over boxes and pairs."""
        return sum(len(b.pairs) for b in self.boxes)

    def pair_counts(self) -> dict[int, int]:
        c: Counter = Counter()
        for b in self.boxes:
            c.update(b.pairs)
        return dict(sorted(c.items()))

    def rect_of(self, box: BoxResult) -> tuple[float, float, float, float]:
        """Rectangle actually traced for this box, including any retry shift.

        Refinement must start from this rectangle: a coalescence on the
        original box corner lies strictly inside the shifted one.
        """
        hx = 0.5 * self.grid.dx
        hy = 0.5 * self.grid.dy
        return (
            box.center[0] - hx,
            box.center[0] + hx,
            box.center[1] - hy,
            box.center[1] + hy,
        )


def _trace_box(pencil, rect, h0):
    """Loop signature of one box perimeter: (pairs, error message)."""
    x0, x1, y0, y1 = rect
    loop = box_perimeter(x0, y0, x1 - x0, y1 - y0)
    try:
        res = trace_loop(pencil, loop, h0=h0)
    except LoopUnresolvable as exc:
        return None, str(exc)
    return decode_signature(res.D), ""


def _attempt_shift(seed: int, attempt: int, dx: float, dy: float) -> tuple[float, float]:
    """Deterministic perimeter offset shared by every box at this attempt."""
    ss = np.random.SeedSequence([seed, _SHIFT_TAG, attempt])
    rng = np.random.Generator(np.random.Philox(ss))
    mag = rng.uniform(0.25, 1.0, size=2)
    sign = 2.0 * rng.integers(0, 2, size=2) - 1.0
    return (
        float(mag[0] * sign[0] * _SHIFT_FRAC * dx),
        float(mag[1] * sign[1] * _SHIFT_FRAC * dy),
    )


def sweep_grid(
    pencil,
    grid: GridSpec,
    seed: int = 0,
    workers: int = 1,
    h0: float | None = None,
    max_attempts: int = 4,
) -> SweepResult:
    """Trace every box perimeter of the grid and collect flagged pairs.

    A perimeter through (or numerically through) a coalescence is
    unresolvable; such boxes are retried with their perimeter rigidly shifted
    by a small deterministic offset. All boxes failing at the same attempt
    share one offset, so their shifted perimeters still tile and a corner
    coalescence lands strictly inside exactly one shifted box. Boxes failing
    every attempt are reported with status "unresolved" and no pairs.

    With workers > 1 the boxes of each attempt round run in a process pool;
    the pencil must then be picklable. Results are assembled in (row, col)
    order regardless of completion order.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be at least 1")
    cells = [(r, c) for r in range(grid.rows) for c in range(grid.cols)]
    results: dict[tuple[int, int], BoxResult] = {}
    pending = cells
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for attempt in range(max_attempts):
            if not pending:
                break
            if attempt == 0:
                shift = (0.0, 0.0)
            else:
                shift = _attempt_shift(seed, attempt, grid.dx, grid.dy)
            rects = []
            for r, c in pending:
                x0, x1, y0, y1 = grid.box(r, c)
                rects.append((x0 + shift[0], x1 + shift[0], y0 + shift[1], y1 + shift[1]))
            if pool is not None:
                outcomes = list(pool.map(_trace_box, [pencil] * len(rects), rects, [h0] * len(rects)))
            else:
                outcomes = [_trace_box(pencil, rect, h0) for rect in rects]
            still_failing = []
            for (r, c), rect, (pairs, msg) in zip(pending, rects, outcomes):
                if pairs is None:
                    still_failing.append((r, c))
                    results[(r, c)] = BoxResult(
                        row=r,
                        col=c,
                        center=(0.5 * (rect[0] + rect[1]), 0.5 * (rect[2] + rect[3])),
                        pairs=(),
                        status="unresolved",
                        attempts=attempt + 1,
                        shift=shift,
                        message=msg,
                    )
                else:
                    results[(r, c)] = BoxResult(
                        row=r,
                        col=c,
                        center=(0.5 * (rect[0] + rect[1]), 0.5 * (rect[2] + rect[3])),
                        pairs=pairs,
                        status="ok",
                        attempts=attempt + 1,
                        shift=shift,
                    )
            pending = still_failing
    finally:
        if pool is not None:
            pool.shutdown()
    boxes = [results[(r, c)] for r, c in cells]
    return SweepResult(grid=grid, boxes=boxes)


@dataclass(frozen=True)
class CIEstimate:
    """Coalescence location estimate from recursive box subdivision."""

    x: float
    y: float
    uncertainty: float  # half-diagonal of the final rectangle
    pair: int
    depth: int
    rect: tuple[float, float, float, float]


def _center_shift(seed: int, depth: int, attempt: int, sx: float, sy: float):
    ss = np.random.SeedSequence([seed, _CENTER_TAG, depth, attempt])
    rng = np.random.Generator(np.random.Philox(ss))
    mag = rng.uniform(0.25, 1.0, size=2)
    sign = 2.0 * rng.integers(0, 2, size=2) - 1.0
    return (
        float(mag[0] * sign[0] * _CENTER_SHIFT_FRAC * sx),
        float(mag[1] * sign[1] * _CENTER_SHIFT_FRAC * sy),
    )


def refine_box(
    pencil,
    rect: tuple[float, float, float, float],
    pair: int,
    depth: int = 10,
    seed: int = 0,
    h0: float | None = None,
    max_attempts: int = 3,
) -> CIEstimate:
    """Pin a coalescence inside a flagged box by recursive 2x2 subdivision.

    At each level the current rectangle splits into four children; exactly
    one child must flag the target pair (an odd child count matches the
    parent's flag, and a single enclosed coalescence gives one). Subdivision
    lines through the coalescence make children unresolvable or break that
    parity; the subdivision center is then retried at a small deterministic
    offset, keeping the children tiling the parent. The estimate is the
    center of the depth-th rectangle with the half-diagonal as uncertainty.

    Raises
    ------
    RefinementInconsistent
        If no subdivision attempt at some level yields exactly one flagged
        resolvable child.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    x0, x1, y0, y1 = rect
    for level in range(depth):
        done = False
        for attempt in range(max_attempts):
            if attempt == 0:
                shift = (0.0, 0.0)
            else:
                shift = _center_shift(seed, level, attempt, 0.5 * (x1 - x0), 0.5 * (y1 - y0))
            cx = 0.5 * (x0 + x1) + shift[0]
            cy = 0.5 * (y0 + y1) + shift[1]
            children = [
                (x0, cx, y0, cy),
                (cx, x1, y0, cy),
                (x0, cx, cy, y1),
                (cx, x1, cy, y1),
            ]
            flagged = []
            failed = False
            for child in children:
                pairs, _ = _trace_box(pencil, child, h0)
                if pairs is None:
                    failed = True
                    break
                if pair in pairs:
                    flagged.append(child)
            if not failed and len(flagged) == 1:
                x0, x1, y0, y1 = flagged[0]
                done = True
                break
        if not done:
            raise RefinementInconsistent(
                f"no subdivision of ({x0:.6g}, {x1:.6g}) x ({y0:.6g}, {y1:.6g}) "
                f"isolated pair {pair} after {max_attempts} attempts at level {level}"
            )
    half_diag = 0.5 * math.hypot(x1 - x0, y1 - y0)
    return CIEstimate(
        x=0.5 * (x0 + x1),
        y=0.5 * (y0 + y1),
        uncertainty=half_diag,
        pair=pair,
        depth=depth,
        rect=(x0, x1, y0, y1),
    )


def write_ci_csv(result: SweepResult, path) -> None:
    """One row per flagged (box, pair): row, col, center, pair index."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["box_row", "box_col", "center_x", "center_y", "pair_index"])
        for b in result.boxes:
            for p in b.pairs:
                writer.writerow(
                    [b.row, b.col, f"{b.center[0]:.17g}", f"{b.center[1]:.17g}", p]
                )


def write_sweep_summary(result: SweepResult, path) -> None:
    """JSON summary: box counts, per-pair totals, retry and failure counts."""
    attempts: Counter = Counter(b.attempts for b in result.boxes)
    summary = {
        "rows": result.grid.rows,
        "cols": result.grid.cols,
        "x_range": list(result.grid.x_range),
        "y_range": list(result.grid.y_range),
        "n_boxes": len(result.boxes),
        "n_flagged_boxes": len(result.flagged),
        "n_unresolved": len(result.unresolved),
        "total_count": result.total_count,
        "pair_counts": {str(k): v for k, v in result.pair_counts().items()},
        "attempts_histogram": {str(k): v for k, v in sorted(attempts.items())},
        "unresolved_boxes": [[b.row, b.col] for b in result.unresolved],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
