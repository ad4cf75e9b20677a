"""Bows, bow representations and the counting data derived from them.

Positions are kept as exact fractions.  The circle [0, ell) is cut at the
base point s = 0; the marked points x_1 < ... < x_n (p- and lambda-points
together) then split it into n + 1 linear arcs

    [0, x_1), (x_1, x_2), ..., (x_n, ell)

and a representation lists one rank per linear arc.  The first and last arcs
are the same piece of the bow, so their ranks must agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

PLUS, MINUS, ZERO = "plus", "minus", "zero"
KINDS = (PLUS, MINUS, ZERO)


class ValidationError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    return Fraction(float(x))


@dataclass(frozen=True)
class BowDiagram:
    ell: Fraction
    p_points: tuple

    @property
    def k(self) -> int:
        return len(self.p_points)


@dataclass(frozen=True)
class MarkedPoint:
    position: Fraction
    kind: str  # "p" or "lambda"
    index: int  # sigma for p-points, position in lambda_points for lambda-points


@dataclass(frozen=True)
class Arc:
    index: int
    start: Fraction
    end: Fraction
    rank: int
    left: MarkedPoint | None  # None for the base point s = 0
    right: MarkedPoint | None  # None for s = ell

    @property
    def length(self) -> Fraction:
        return self.end - self.start


@dataclass(frozen=True)
class BowRepresentation:
    bow: BowDiagram
    lambda_points: tuple
    ranks: tuple
    tags: tuple | None = None
    w_dims: tuple | None = None
    min_separation: Fraction | None = None

    @property
    def ell(self) -> Fraction:
        return self.bow.ell

    @property
    def marked(self) -> list[MarkedPoint]:
        pts = [MarkedPoint(p, "p", i) for i, p in enumerate(self.bow.p_points)]
        pts += [MarkedPoint(x, "lambda", i) for i, x in enumerate(self.lambda_points)]
        return sorted(pts, key=lambda m: m.position)

    def arcs(self) -> list[Arc]:
        marks = self.marked
        cuts = [Fraction(0)] + [m.position for m in marks] + [self.ell]
        lefts = [None] + marks
        rights = marks + [None]
        return [
            Arc(i, cuts[i], cuts[i + 1], int(self.ranks[i]), lefts[i], rights[i])
            for i in range(len(marks) + 1)
        ]

    def ranks_at(self, point: MarkedPoint) -> tuple[int, int]:
        """(R(x-), R(x+)) at a marked point."""
        i = self.marked.index(point)
        return int(self.ranks[i]), int(self.ranks[i + 1])

    def lambda_ranks(self, i: int) -> tuple[int, int]:
        return self.ranks_at(MarkedPoint(self.lambda_points[i], "lambda", i))

    def p_ranks(self, sigma: int) -> tuple[int, int]:
        return self.ranks_at(MarkedPoint(self.bow.p_points[sigma], "p", sigma))

    def classify(self, i: int) -> str:
        lo, hi = self.lambda_ranks(i)
        return PLUS if hi > lo else MINUS if hi < lo else ZERO

    @property
    def kinds(self) -> tuple:
        return tuple(self.classify(i) for i in range(len(self.lambda_points)))

    @property
    def r0(self) -> int:
        return int(self.ranks[0])

    def rank_at(self, s) -> int:
        s = as_fraction(s) % self.ell
        for arc in self.arcs():
            if arc.start < s < arc.end or (s == 0 and arc.index == 0):
                return arc.rank
        raise ValueError(f"rank is not defined at the marked point {s}")


def make_representation(ell, p_points, lambda_points, ranks, tags=None, w_dims=None,
                        min_separation=None) -> BowRepresentation:
    ell = as_fraction(ell)
    bow = BowDiagram(ell, tuple(as_fraction(p) for p in p_points))
    lam = tuple(as_fraction(x) for x in lambda_points)
    order = sorted(range(len(lam)), key=lambda i: lam[i])
    lam = tuple(lam[i] for i in order)
    if tags is not None:
        tags = tuple(tags[i] for i in order)
    if w_dims is not None:
        w_dims = tuple(int(w_dims[i]) for i in order)
    sep = as_fraction(min_separation) if min_separation is not None else None
    return BowRepresentation(bow, lam, tuple(int(r) for r in ranks), tags, w_dims, sep)


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_if_invalid(self):
        if self.violations:
            raise ValidationError(self.violations)


def validate(rep: BowRepresentation) -> ValidationReport:
    rep_ = ValidationReport()
    bad = rep_.violations.append
    ell = rep.ell
    ps = list(rep.bow.p_points)
    lam = list(rep.lambda_points)
    if ell <= 0:
        bad(f"circle length must be positive, got {ell}")
        return rep_
    if len(ps) < 1:
        bad("a bow needs at least one p-point")
    if any(b <= a for a, b in zip(ps, ps[1:])):
        bad("p-points must be strictly increasing")
    for x in ps + lam:
        if not (0 < x < ell):
            bad(f"marked point {x} must lie strictly inside (0, ell); s = 0 is the base point")
    clash = sorted(set(ps) & set(lam))
    if clash:
        bad(f"lambda-points coincide with p-points at {[str(c) for c in clash]}")
    if len(set(lam)) != len(lam):
        bad("lambda-points must be distinct")
    n = len(ps) + len(lam)
    if len(rep.ranks) != n + 1:
        bad(f"expected {n + 1} ranks (one per arc between consecutive marked points), got {len(rep.ranks)}")
        return rep_
    if any(r < 0 for r in rep.ranks):
        bad("ranks must be nonnegative")
    if rep.ranks[0] != rep.ranks[-1]:
        bad(
            f"total rank change around the circle is {rep.ranks[-1] - rep.ranks[0]} != 0 "
            f"(first and last arcs are the same arc through s = 0)"
        )
    sep = rep.min_separation if rep.min_separation is not None else ell / 1000
    cuts = [Fraction(0)] + sorted(ps + lam) + [ell]
    for a, b in zip(cuts, cuts[1:]):
        if 0 < b - a < sep:
            bad(f"points {a} and {b} are closer than the minimum separation {sep}")
    if rep.tags is not None and not rep_.violations:
        for i, tag in enumerate(rep.tags):
            if tag not in KINDS:
                bad(f"unknown lambda tag {tag!r}")
                continue
            lo, hi = rep.lambda_ranks(i)
            derived = rep.classify(i)
            if tag != derived:
                bad(f"lambda-point {lam[i]} tagged {tag} but ranks jump {lo} -> {hi} ({derived})")
    if rep.w_dims is not None:
        for i, d in enumerate(rep.w_dims):
            if d != 1:
                bad(f"lambda-point {lam[i]}: only one-dimensional W is supported, got {d}")
    return rep_


@dataclass(frozen=True)
class DerivedCounts:
    m_lambda: tuple
    m_hat: tuple
    l_lambda: tuple
    r_p: tuple
    delta_r_lambda: tuple
    delta_r_p: tuple


def left_count(rep: BowRepresentation, s) -> int:
    """Number of p-points with 0 <= p < s."""
    s = as_fraction(s)
    return sum(1 for p in rep.bow.p_points if 0 <= p < s)


def right_count(rep: BowRepresentation, sigma: int) -> int:
    """Number of lambda-points strictly between p_sigma and ell."""
    p = rep.bow.p_points[sigma]
    return sum(1 for x in rep.lambda_points if p < x < rep.ell)


def derived_counts(rep: BowRepresentation) -> DerivedCounts:
    dl, ml, mh, ll = [], [], [], []
    for i, x in enumerate(rep.lambda_points):
        lo, hi = rep.lambda_ranks(i)
        l = left_count(rep, x)
        dl.append(hi - lo)
        ml.append(abs(hi - lo))
        ll.append(l)
        mh.append(hi - lo + l)
    dp = []
    for s in range(rep.bow.k):
        lo, hi = rep.p_ranks(s)
        dp.append(hi - lo)
    rp = tuple(right_count(rep, s) for s in range(rep.bow.k))
    return DerivedCounts(tuple(ml), tuple(mh), tuple(ll), rp, tuple(dl), tuple(dp))


def matching_dimensions(rep: BowRepresentation) -> dict:
    """Sizes of X, N, W and Y for the matching system, counted combinatorially.

    X carries 2R per elementary subinterval of the bow (the arc through the
    base point counts once), N carries R(p+) + R(p-) per p-point and W one
    dimension per continuous-rank lambda-point.  Y has R(x+) + R(x-) - 1 per
    jumping lambda-point, 2R per continuous lambda-point and 2R(p-) + 2R(p+)
    per p-point.
    """
    arcs = rep.arcs()
    x_dim = sum(2 * a.rank for a in arcs[1:-1]) + 2 * rep.r0
    n_dim = w_dim = y_dim = 0
    for s in range(rep.bow.k):
        lo, hi = rep.p_ranks(s)
        n_dim += lo + hi
        y_dim += 2 * lo + 2 * hi
    for i in range(len(rep.lambda_points)):
        lo, hi = rep.lambda_ranks(i)
        if lo == hi:
            w_dim += 1
            y_dim += 2 * lo
        else:
            y_dim += lo + hi - 1
    return {"X": x_dim, "N": n_dim, "W": w_dim, "Y": y_dim, "index": x_dim + n_dim + w_dim - y_dim}


@dataclass(frozen=True)
class Subinterval:
    start: float
    end: float
    nodes: np.ndarray


def subinterval_grid(rep: BowRepresentation, h: float) -> list[Subinterval]:
    """Uniform nodes of spacing at most h on every linear arc (endpoints included)."""
    out = []
    for arc in rep.arcs():
        a, b = float(arc.start), float(arc.end)
        n = max(2, int(np.ceil((b - a) / h - 1e-12)) + 1)
        out.append(Subinterval(a, b, np.linspace(a, b, n)))
    return out
