"""Integer-lattice geometry: cells, corners, the rotation group C4, transforms and parity."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple


class Cell(NamedTuple):
    x: int
    y: int


class Corner(NamedTuple):
    """Lattice point. Corner (x, y) touches cells (x-1, y-1), (x, y-1), (x-1, y), (x, y)."""

    x: int
    y: int


class ParityClass(NamedTuple):
    px: int
    py: int


# Quadrant order used everywhere a corner tuple appears.
QUADRANTS = ("NE", "NW", "SW", "SE")
_QUAD_OFFSETS = ((0, 0), (-1, 0), (-1, -1), (0, -1))


@dataclass(frozen=True, order=True)
class Rotation:
    quarter_turns: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "quarter_turns", self.quarter_turns % 4)

    def __add__(self, other: "Rotation") -> "Rotation":
        return Rotation(self.quarter_turns + other.quarter_turns)

    def __neg__(self) -> "Rotation":
        return Rotation(-self.quarter_turns)


IDENTITY_ROTATION = Rotation(0)
ROTATIONS = tuple(Rotation(k) for k in range(4))


def _turns(r: Rotation | int) -> int:
    return r.quarter_turns if isinstance(r, Rotation) else r % 4


def rotate_point(p: tuple[int, int], r: Rotation | int) -> Cell:
    """Counterclockwise rotation about the origin; one quarter turn maps (x, y) to (-y, x)."""
    x, y = p
    for _ in range(_turns(r)):
        x, y = -y, x
    return Cell(x, y)


def rotate_lattice_point(p: tuple[int, int], r: Rotation | int) -> Corner:
    """Rotate a lattice point so that it follows the cells it bounds.

    Cells rotate about the centre of cell (0, 0), which is the point (1/2, 1/2),
    so a quarter turn sends lattice point (x, y) to (1 - y, x).
    """
    x, y = p
    for _ in range(_turns(r)):
        x, y = 1 - y, x
    return Corner(x, y)


def rotate_vector(v: tuple[int, int], r: Rotation | int) -> tuple[int, int]:
    return tuple(rotate_point(v, r))  # type: ignore[return-value]


@dataclass(frozen=True, order=True)
class Transform:
    rotation: Rotation = IDENTITY_ROTATION
    translation: tuple[int, int] = (0, 0)

    def apply(self, p: tuple[int, int]) -> Cell:
        return apply_transform(self, p)

    def compose(self, other: "Transform") -> "Transform":
        """self after other."""
        return compose(self, other)

    def inverse(self) -> "Transform":
        return inverse(self)


IDENTITY = Transform()


def apply_transform(t: Transform, p: tuple[int, int]) -> Cell:
    """Rotate first, then translate."""
    x, y = rotate_point(p, t.rotation)
    return Cell(x + t.translation[0], y + t.translation[1])


def compose(a: Transform, b: Transform) -> Transform:
    """The transform p -> a(b(p))."""
    tx, ty = rotate_point(b.translation, a.rotation)
    return Transform(a.rotation + b.rotation, (tx + a.translation[0], ty + a.translation[1]))


def inverse(t: Transform) -> Transform:
    r = -t.rotation
    tx, ty = rotate_point(t.translation, r)
    return Transform(r, (-tx, -ty))


def parity(p: tuple[int, int]) -> ParityClass:
    # Python's % is already the mathematical (non-negative) modulus.
    return ParityClass(p[0] % 2, p[1] % 2)


def cell_corners(c: tuple[int, int]) -> tuple[Corner, Corner, Corner, Corner]:
    """The four corners of a cell, in the order SW, SE, NE, NW."""
    x, y = c
    return (Corner(x, y), Corner(x + 1, y), Corner(x + 1, y + 1), Corner(x, y + 1))


def corner_cells(c: tuple[int, int]) -> tuple[Cell, Cell, Cell, Cell]:
    """The four cells incident to a corner, in quadrant order NE, NW, SW, SE."""
    x, y = c
    return tuple(Cell(x + dx, y + dy) for dx, dy in _QUAD_OFFSETS)  # type: ignore[return-value]


def rotate_quadrant_tuple(t: tuple, r: Rotation | int = 1) -> tuple:
    """Move the entries of a NE, NW, SW, SE tuple along with a rotation of the plane.

    A quarter turn carries the NE quadrant to NW, NW to SW and so on, so the
    entry that sat at position i ends up at position i + 1.
    """
    t = tuple(t)
    k = _turns(r)
    return t[-k:] + t[:-k] if k else t


def box_cells(x0: int, y0: int, x1: int, y1: int) -> Iterator[Cell]:
    """Cells of the inclusive box [x0, x1] x [y0, y1], row-major from the bottom."""
    for y in range(y0, y1 + 1):
        for x in range(x0, x1 + 1):
            yield Cell(x, y)
