"""Parametric pencil families and path parametrizations.

A pencil maps a 2-D parameter point (x, y) to a pair (A, B) with A symmetric
and B symmetric positive definite. Built-in families:

* the SG+ random ensemble (banded Gaussian lower-triangular factors with
  Gamma-distributed positive diagonals),
* a 2x2 analytic test pencil with one conical intersection at a known point,
* block-diagonal embeddings that plant a 2x2 pencil at a chosen pair index
  inside a larger constant-diagonal pencil.

Paths map a scalar t in [0, 1] to parameter points; closed kinds satisfy
point(0) == point(1) exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BandwidthOutOfRange, DispersionOutOfRange, SpectrumOverlap
from .linalg import eig2x2_pencil, symmetrize

__all__ = [
    "ParametricPencil",
    "SGPlusRealization",
    "SGPlusPencil",
    "AnalyticCIPencil",
    "EmbeddedPencil",
    "sgplus_generate",
    "sgplus_pencil",
    "analytic_ci_pencil",
    "embed_2x2",
    "dispersion_bound",
    "Path",
    "BoxPerimeter",
    "CirclePath",
    "SegmentPath",
    "FunctionPath",
    "box_perimeter",
    "circle",
    "segment",
    "pencil_from_descriptor",
    "load_pencil",
    "save_pencil",
]


class ParametricPencil:
    """Base class: a deterministic map (x, y) -> (A, B), A symmetric, B SPD.

    Subclasses set ``n`` and ``smoothness`` and implement :meth:`eval` as a
    pure function (identical inputs give bitwise-identical matrices) and
    :meth:`descriptor` returning a JSON-serializable reconstruction recipe.
    """

    n: int
    smoothness: str = "analytic"

    def eval(self, x: float, y: float) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def descriptor(self) -> dict:
        raise NotImplementedError


def dispersion_bound(n: int) -> float:
    """Upper limit sqrt((n+1)/(n+5)) of the admissible dispersion range."""
    return float(np.sqrt((n + 1) / (n + 5)))


@dataclass(frozen=True, eq=False)
class SGPlusRealization:
    """One draw of the SG+ ensemble, reproducible from (n, b, delta, seed).

    L_A and L_B hold four strictly-lower-triangular banded factors each
    (entries only where 0 < i - j <= b); D_A and D_B are the positive
    diagonals, stored as length-n vectors.
    """

    n: int
    b: int
    delta: float
    seed: int
    L_A: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    L_B: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    D_A: np.ndarray
    D_B: np.ndarray


def sgplus_generate(n: int, b: int, delta: float, seed: int) -> SGPlusRealization:
    """Draw an SG+ realization with a pinned sampler and draw order.

    Band entries of each factor are i.i.d. Normal(0, 1) scaled by
    sigma_n = delta / sqrt(n + 1); diagonal entries are sigma_n * sqrt(2 v_i)
    with v_i ~ Gamma(a_i, rate 1) and a_i = (n+1)/(2 delta^2) + (1 - i)/2,
    i = 1..n. The generator is counter-based (Philox) and the draw order is
    fixed: L_A1..L_A4 then L_B1..L_B4, band entries row-major within each
    factor, then D_A, then D_B. The delta constraint keeps every a_i > 3, so
    the vectorized gamma sampler stays in its shape >= 1 regime.

    Raises
    ------
    BandwidthOutOfRange
        If b is outside 1..n-1.
    DispersionOutOfRange
        If delta is outside the open interval (0, sqrt((n+1)/(n+5))).
    """
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    if not 1 <= b <= n - 1:
        raise BandwidthOutOfRange(f"bandwidth {b} outside 1..{n - 1}")
    bound = dispersion_bound(n)
    if not 0.0 < delta < bound:
        raise DispersionOutOfRange(
            f"delta = {delta} outside the open interval "
            f"(0, sqrt((n+1)/(n+5))) = (0, {bound:.6f}) for n = {n}"
        )
    sigma = delta / np.sqrt(n + 1)
    rng = np.random.Generator(np.random.Philox(seed))

    offsets = np.subtract.outer(np.arange(n), np.arange(n))
    rows, cols = np.nonzero((offsets > 0) & (offsets <= b))
    m = rows.size

    def draw_factor() -> np.ndarray:
        M = np.zeros((n, n))
        M[rows, cols] = sigma * rng.standard_normal(m)
        return M

    L_A = tuple(draw_factor() for _ in range(4))
    L_B = tuple(draw_factor() for _ in range(4))

    i = np.arange(1, n + 1)
    a = (n + 1) / (2.0 * delta * delta) + (1.0 - i) / 2.0
    D_A = sigma * np.sqrt(2.0 * rng.standard_gamma(a))
    D_B = sigma * np.sqrt(2.0 * rng.standard_gamma(a))
    return SGPlusRealization(
        n=n, b=b, delta=delta, seed=seed, L_A=L_A, L_B=L_B, D_A=D_A, D_B=D_B
    )


@dataclass(frozen=True, eq=False)
class SGPlusPencil(ParametricPencil):
    """Trigonometric SG+ pencil, 2*pi-periodic in each parameter.

    A(x, y) = L(x, y) L(x, y)^T with
    L(x, y) = cos(x) L1 + sin(x) L2 + cos(y) L3 + sin(y) L4 + D;
    same for B with its own factors. B is SPD by construction: its L is lower
    triangular with strictly positive diagonal D_B.
    """

    realization: SGPlusRealization

    @property
    def n(self) -> int:
        return self.realization.n

    @staticmethod
    def _assemble(
        x: float,
        y: float,
        parts: tuple[np.ndarray, ...],
        diag: np.ndarray,
    ) -> np.ndarray:
        L = (
            np.cos(x) * parts[0]
            + np.sin(x) * parts[1]
            + np.cos(y) * parts[2]
            + np.sin(y) * parts[3]
        )
        L = L + np.diag(diag)
        return symmetrize(L @ L.T)

    def eval(self, x: float, y: float) -> tuple[np.ndarray, np.ndarray]:
        r = self.realization
        A = self._assemble(x, y, r.L_A, r.D_A)
        B = self._assemble(x, y, r.L_B, r.D_B)
        return A, B

    def descriptor(self) -> dict:
        r = self.realization
        return {
            "kind": "sgplus",
            "n": r.n,
            "b": r.b,
            "delta": r.delta,
            "seed": r.seed,
        }


def sgplus_pencil(realization: SGPlusRealization) -> SGPlusPencil:
    """Wrap a realization as a parametric pencil."""
    return SGPlusPencil(realization=realization)


@dataclass(frozen=True)
class AnalyticCIPencil(ParametricPencil):
    """2x2 test pencil with a single conical intersection at a known point.

    A(x, y) = [[4x + 3y, 5y], [5y, -4x + 3y]] + eps * [[1, 1], [1, -1]],
    B = [[5, 3], [3, 5]]. For eps = 0 the eigenvalues are +-sqrt(x^2 + y^2),
    coalescing at the origin; for eps != 0 the intersection moves to
    (-eps/4, -5 eps/16).
    """

    eps: float = 0.0

    @property
    def n(self) -> int:
        return 2

    def eval(self, x: float, y: float) -> tuple[np.ndarray, np.ndarray]:
        e = self.eps
        A = np.array(
            [
                [4.0 * x + 3.0 * y + e, 5.0 * y + e],
                [5.0 * y + e, -4.0 * x + 3.0 * y - e],
            ]
        )
        B = np.array([[5.0, 3.0], [3.0, 5.0]])
        return A, B

    def ci_location(self) -> tuple[float, float]:
        """Parameter point where the two eigenvalues coalesce."""
        return (-self.eps / 4.0, -5.0 * self.eps / 16.0)

    def descriptor(self) -> dict:
        return {"kind": "analytic_ci", "eps": self.eps}


def analytic_ci_pencil(eps: float = 0.0) -> AnalyticCIPencil:
    """The 2x2 analytic test pencil with perturbation eps."""
    return AnalyticCIPencil(eps=eps)


@dataclass(frozen=True)
class EmbeddedPencil(ParametricPencil):
    """Block-diagonal n x n pencil with a 2x2 inner pencil at rows j, j+1.

    The remaining diagonal of A carries the constant outer spectrum (first
    j-1 values above the inner block, the rest below); B is the identity
    outside the inner block. Pair index j is 1-based, matching reported pair
    indices.
    """

    inner: ParametricPencil
    dim: int
    j: int
    outer_spectrum: tuple[float, ...]

    @property
    def n(self) -> int:
        return self.dim

    def eval(self, x: float, y: float) -> tuple[np.ndarray, np.ndarray]:
        A_in, B_in = self.inner.eval(x, y)
        n, j = self.dim, self.j
        A = np.zeros((n, n))
        B = np.eye(n)
        above = self.outer_spectrum[: j - 1]
        below = self.outer_spectrum[j - 1 :]
        for k, val in enumerate(above):
            A[k, k] = val
        for k, val in enumerate(below):
            A[j + 1 + k, j + 1 + k] = val
        A[j - 1 : j + 1, j - 1 : j + 1] = A_in
        B[j - 1 : j + 1, j - 1 : j + 1] = B_in
        return A, B

    def descriptor(self) -> dict:
        return {
            "kind": "embedded",
            "inner": self.inner.descriptor(),
            "n": self.dim,
            "j": self.j,
            "outer_spectrum": list(self.outer_spectrum),
        }


def embed_2x2(
    inner: ParametricPencil,
    n: int,
    j: int,
    outer_spectrum: tuple[float, ...],
    check_domain: tuple[tuple[float, float], tuple[float, float]] = ((-2.0, 2.0), (-2.0, 2.0)),
    check_points: int = 9,
) -> EmbeddedPencil:
    """Embed a 2x2 pencil at pair index j (1-based) of an n x n pencil.

    The deterministic outer spectrum must stay strictly separated from the
    inner pencil's eigenvalue range so that sorting places the inner pair at
    positions j, j+1: exactly j-1 outer values above it and n-j-1 below it.
    Separation is verified on a check_points x check_points sample grid over
    check_domain.

    Raises
    ------
    SpectrumOverlap
        If separation fails at any sampled point.
    """
    if inner.n != 2:
        raise ValueError("inner pencil must be 2x2")
    if not (2 <= n and 1 <= j <= n - 1):
        raise ValueError(f"need 2 <= n and 1 <= j <= n-1, got n={n}, j={j}")
    if len(outer_spectrum) != n - 2:
        raise ValueError(f"outer_spectrum must have {n - 2} values")
    above = outer_spectrum[: j - 1]
    below = outer_spectrum[j - 1 :]
    (x_lo, x_hi), (y_lo, y_hi) = check_domain
    for x in np.linspace(x_lo, x_hi, check_points):
        for y in np.linspace(y_lo, y_hi, check_points):
            A_in, B_in = inner.eval(x, y)
            _, _, lam1, lam2 = eig2x2_pencil(
                A_in[0, 0], A_in[0, 1], A_in[1, 1],
                B_in[0, 0], B_in[0, 1], B_in[1, 1],
            )
            if any(v <= lam1 for v in above) or any(v >= lam2 for v in below):
                raise SpectrumOverlap(
                    f"outer spectrum not separated from inner range "
                    f"[{lam2:.6g}, {lam1:.6g}] at (x, y) = ({x:.6g}, {y:.6g})"
                )
    return EmbeddedPencil(inner=inner, dim=n, j=j, outer_spectrum=tuple(outer_spectrum))


_PENCIL_KINDS: dict[str, Callable[[dict], ParametricPencil]] = {}


def pencil_from_descriptor(desc: dict) -> ParametricPencil:
    """Reconstruct a pencil from its descriptor dictionary."""
    kind = desc.get("kind")
    if kind == "sgplus":
        return sgplus_pencil(
            sgplus_generate(int(desc["n"]), int(desc["b"]), float(desc["delta"]), int(desc["seed"]))
        )
    if kind == "analytic_ci":
        return analytic_ci_pencil(float(desc.get("eps", 0.0)))
    if kind == "embedded":
        inner = pencil_from_descriptor(desc["inner"])
        return embed_2x2(
            inner, int(desc["n"]), int(desc["j"]), tuple(float(v) for v in desc["outer_spectrum"])
        )
    raise ValueError(f"unknown pencil kind: {kind!r}")


def save_pencil(pencil: ParametricPencil, path) -> None:
    """Write a pencil descriptor as JSON. Matrices are regenerated, not stored."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(pencil.descriptor(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_pencil(path) -> ParametricPencil:
    """Reconstruct a pencil from a descriptor JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        return pencil_from_descriptor(json.load(fh))


class Path:
    """Base class for parameter paths t in [0, 1] -> (x, y)."""

    closed: bool = False

    def point(self, t: float) -> tuple[float, float]:
        raise NotImplementedError


@dataclass(frozen=True)
class BoxPerimeter(Path):
    """Counterclockwise rectangle perimeter; corners at t = 0, 1/4, 1/2, 3/4.

    The parameter is taken mod 1, so point(0) == point(1) exactly and the
    corner parameters hit the corner coordinates without roundoff.
    """

    x0: float
    y0: float
    side_x: float
    side_y: float
    closed = True

    def point(self, t: float) -> tuple[float, float]:
        s = 4.0 * (t % 1.0)
        if s < 1.0:
            return (self.x0 + s * self.side_x, self.y0)
        if s < 2.0:
            return (self.x0 + self.side_x, self.y0 + (s - 1.0) * self.side_y)
        if s < 3.0:
            return (self.x0 + (3.0 - s) * self.side_x, self.y0 + self.side_y)
        return (self.x0, self.y0 + (4.0 - s) * self.side_y)


@dataclass(frozen=True)
class CirclePath(Path):
    """Counterclockwise circle; t taken mod 1 so the loop closes exactly."""

    cx: float
    cy: float
    radius: float
    closed = True

    def point(self, t: float) -> tuple[float, float]:
        theta = 2.0 * np.pi * (t % 1.0)
        return (self.cx + self.radius * np.cos(theta), self.cy + self.radius * np.sin(theta))


@dataclass(frozen=True)
class SegmentPath(Path):
    """Straight open segment from (x0, y0) at t=0 to (x1, y1) at t=1."""

    x0: float
    y0: float
    x1: float
    y1: float
    closed = False

    def point(self, t: float) -> tuple[float, float]:
        return (self.x0 + t * (self.x1 - self.x0), self.y0 + t * (self.y1 - self.y0))


class FunctionPath(Path):
    """Path defined by an arbitrary callable t -> (x, y). Not picklable."""

    def __init__(self, fn: Callable[[float], tuple[float, float]], closed: bool):
        self.fn = fn
        self.closed = closed

    def point(self, t: float) -> tuple[float, float]:
        return self.fn(t)


def box_perimeter(x0: float, y0: float, side_x: float, side_y: float) -> BoxPerimeter:
    """Closed counterclockwise perimeter of [x0, x0+side_x] x [y0, y0+side_y]."""
    if side_x <= 0 or side_y <= 0:
        raise ValueError("box sides must be positive")
    return BoxPerimeter(x0=x0, y0=y0, side_x=side_x, side_y=side_y)


def circle(cx: float, cy: float, radius: float) -> CirclePath:
    """Closed counterclockwise circle of given center and radius."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    return CirclePath(cx=cx, cy=cy, radius=radius)


def segment(p0: tuple[float, float], p1: tuple[float, float]) -> SegmentPath:
    """Open straight segment from p0 to p1."""
    return SegmentPath(x0=p0[0], y0=p0[1], x1=p1[0], y1=p1[1])
