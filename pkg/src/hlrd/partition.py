"""Dyadic staircase partition of the off-diagonal region.

The (p, q) domain is tiled by square blocks that touch the diagonal at
exactly one corner and double in size away from it.  At level ``l`` the
block with index ``k`` spans ``[k, k+1] x [k+1, k+2]`` in units of
``2**-l`` when k is even (above the diagonal) and ``[k, k+1] x [k-1, k]``
when k is odd (below).  Two domains are supported:

* the open unit square, levels ``1..l_max`` with ``2**l`` blocks per
  level, used by the Bernoulli-KL kernel;
* a quarter-plane truncated to ``[0, A]^2`` with A a power of two, levels
  ``-log2(A)+1 .. l_max``, used by the rate kernels.  The untruncated
  decomposition extends to arbitrarily coarse levels; a finite matrix
  only ever meets the blocks inside its extent, so truncation loses
  nothing.

What the blocks do not cover is the strip of finest-level squares along
the diagonal; those are kept as an explicit dense remainder.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "Block",
    "DenseCell",
    "OutOfDomainError",
    "Parity",
    "PartitionScheme",
    "QuarterPlane",
    "TilingReport",
    "UnitSquare",
    "build_scheme",
    "locate",
    "verify_tiling",
]


class OutOfDomainError(ValueError):
    """Point outside the partition's domain."""


class Parity(enum.Enum):
    EVEN = "even"   # above the diagonal (q > p)
    ODD = "odd"     # below the diagonal (q < p)


@dataclass(frozen=True)
class Block:
    """One off-diagonal square, identified by (level, index)."""

    level: int
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("block index must be non-negative")

    @property
    def parity(self) -> Parity:
        return Parity.EVEN if self.index % 2 == 0 else Parity.ODD

    @property
    def side(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def p_interval(self) -> tuple[float, float]:
        w = self.side
        return (self.index * w, (self.index + 1) * w)

    @property
    def q_interval(self) -> tuple[float, float]:
        w = self.side
        if self.index % 2 == 0:
            return ((self.index + 1) * w, (self.index + 2) * w)
        return ((self.index - 1) * w, self.index * w)

    @property
    def corner(self) -> float:
        """Coordinate of the single corner that touches the diagonal."""
        w = self.side
        return self.index * w if self.index % 2 == 1 else (self.index + 1) * w

    def contains(self, p: float, q: float) -> bool:
        (plo, phi), (qlo, qhi) = self.p_interval, self.q_interval
        return plo <= p <= phi and qlo <= q <= qhi


@dataclass(frozen=True)
class DenseCell:
    """Finest-level diagonal square [k, k+1]^2 / 2^l, kept dense."""

    level: int
    index: int

    @property
    def interval(self) -> tuple[float, float]:
        w = 2.0 ** (-self.level)
        return (self.index * w, (self.index + 1) * w)

    def contains(self, p: float, q: float) -> bool:
        lo, hi = self.interval
        return lo <= p <= hi and lo <= q <= hi


@dataclass(frozen=True)
class UnitSquare:
    """Unit-square domain descriptor; requires l_max >= 1."""

    l_max: int


@dataclass(frozen=True)
class QuarterPlane:
    """Quarter-plane truncated to [0, extent]^2; extent a power of two.

    l_max may be zero or negative as long as it is >= -log2(extent) + 1,
    i.e. at least the coarsest level that fits inside the extent.
    """

    extent: float
    l_max: int


Domain = Union[UnitSquare, QuarterPlane]


@dataclass(frozen=True)
class TilingReport:
    samples: int
    covered: float
    overlaps: int


def _extent_exponent(extent: float) -> int:
    if not (extent > 0.0) or not math.isfinite(extent):
        raise ValueError("extent must be a positive power of two")
    a = math.log2(extent)
    a_int = round(a)
    if 2.0 ** a_int != extent:
        raise ValueError(f"extent {extent!r} is not a power of two; the dyadic structure requires it")
    return a_int


class PartitionScheme:
    """Immutable collection of staircase blocks plus the dense remainder."""

    def __init__(self, domain: Domain):
        if isinstance(domain, UnitSquare):
            if domain.l_max < 1:
                raise ValueError("unit-square partition needs l_max >= 1")
            levels = range(1, domain.l_max + 1)
            self.extent = 1.0
        elif isinstance(domain, QuarterPlane):
            a = _extent_exponent(domain.extent)
            if domain.l_max < -a + 1:
                raise ValueError(
                    f"l_max={domain.l_max} is coarser than the extent allows (needs >= {-a + 1})")
            levels = range(-a + 1, domain.l_max + 1)
            self.extent = float(domain.extent)
        else:
            raise TypeError(f"unsupported domain descriptor {domain!r}")

        self.domain = domain
        self.l_max = domain.l_max
        blocks = []
        for lvl in levels:
            count = int(round(self.extent * 2.0 ** lvl))
            blocks.extend(Block(lvl, k) for k in range(count))
        self.blocks: tuple[Block, ...] = tuple(blocks)
        n_cells = int(round(self.extent * 2.0 ** self.l_max))
        self.dense_cells: tuple[DenseCell, ...] = tuple(
            DenseCell(self.l_max, k) for k in range(n_cells))

    def __repr__(self) -> str:
        return (f"PartitionScheme({self.domain!r}, blocks={len(self.blocks)}, "
                f"dense_cells={len(self.dense_cells)})")


def build_scheme(domain: Domain) -> PartitionScheme:
    """Build the full staircase partition for a domain descriptor."""
    return PartitionScheme(domain)


def locate(scheme: PartitionScheme, p: float, q: float) -> Union[Block, DenseCell]:
    """Find the region containing (p, q).

    Points on shared boundaries resolve to the block with the smaller
    (level, index) pair; dense cells are only reached when no block
    contains the point.  Raises OutOfDomainError outside the domain.
    """
    A = scheme.extent
    if not (0.0 <= p <= A and 0.0 <= q <= A):
        raise OutOfDomainError(f"point ({p!r}, {q!r}) outside [0, {A}]^2")

    first_level = scheme.blocks[0].level if scheme.blocks else scheme.l_max
    for lvl in range(first_level, scheme.l_max + 1):
        w = 2.0 ** (-lvl)
        count = int(round(A * 2.0 ** lvl))
        k = min(int(p / w), count - 1)
        # a point exactly on a grid line also lies in the block to its left
        candidates = [k - 1, k] if (k > 0 and p == k * w) else [k]
        for cand in candidates:
            blk = Block(lvl, cand)
            if blk.contains(p, q):
                return blk
    w = 2.0 ** (-scheme.l_max)
    count = int(round(A * 2.0 ** scheme.l_max))
    kp = min(int(p / w), count - 1)
    for cand in ([kp - 1, kp] if (kp > 0 and p == kp * w) else [kp]):
        cell = DenseCell(scheme.l_max, cand)
        if cell.contains(p, q):
            return cell
    raise OutOfDomainError(f"point ({p!r}, {q!r}) not covered; this indicates a scheme bug")


def verify_tiling(scheme: PartitionScheme, samples: int, seed: int = 0) -> TilingReport:
    """Monte-Carlo check that blocks plus dense cells tile the domain.

    Draws uniform interior points and counts, for each, how many regions
    claim it.  A correct scheme reports covered == 1.0 and overlaps == 0
    (random points avoid the measure-zero shared boundaries).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    A = scheme.extent
    ps = rng.uniform(0.0, A, size=samples)
    qs = rng.uniform(0.0, A, size=samples)
    counts = np.zeros(samples, dtype=np.int64)
    for blk in scheme.blocks:
        (plo, phi), (qlo, qhi) = blk.p_interval, blk.q_interval
        counts += ((ps >= plo) & (ps <= phi) & (qs >= qlo) & (qs <= qhi))
    for cell in scheme.dense_cells:
        lo, hi = cell.interval
        counts += ((ps >= lo) & (ps <= hi) & (qs >= lo) & (qs <= hi))
    covered = float(np.mean(counts >= 1))
    overlaps = int(np.sum(counts >= 2))
    return TilingReport(samples=samples, covered=covered, overlaps=overlaps)
