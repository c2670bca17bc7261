"""Candidate selectors and the feedback constraint set.

A constraint is an ordered fact "closer is nearer the target than farther".
Feedback constraint satisfaction (FCS) ranks candidates by the fraction of
constraints they satisfy, breaking ties by nearest-neighbor distance to the
query and then by item id; with no constraints it degenerates exactly to
nearest neighbors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from . import kernels
from .errors import ConfigError
from .index import SearchIndex


@dataclass(frozen=True)
class Constraint:
    closer: str
    farther: str
    iteration: int = 0

    def __post_init__(self):
        if self.closer == self.farther:
            raise ConfigError(f"degenerate constraint on {self.closer!r}")

    @property
    def pair(self) -> tuple[str, str]:
        return (self.closer, self.farther)


class ConstraintSet:
    """Ordered, duplicate-free collection of constraints."""

    def __init__(self, constraints: Sequence[Constraint] = ()):
        self._items: list[Constraint] = []
        self._pairs: set[tuple[str, str]] = set()
        for c in constraints:
            if c.pair not in self._pairs:
                self._items.append(c)
                self._pairs.add(c.pair)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def __getitem__(self, i: int) -> Constraint:
        return self._items[i]

    def __contains__(self, pair: tuple[str, str]) -> bool:
        return tuple(pair) in self._pairs

    def extended(self, constraints: Iterable[Constraint]) -> "ConstraintSet":
        """New set with the given constraints appended (duplicates dropped)."""
        return ConstraintSet(self._items + list(constraints))

    def to_records(self) -> list[dict]:
        return [{"closer": c.closer, "farther": c.farther, "iteration": c.iteration}
                for c in self._items]

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> "ConstraintSet":
        return cls([Constraint(r["closer"], r["farther"], int(r.get("iteration", 0)))
                    for r in records])


class Selection(NamedTuple):
    ids: list[str]
    short: bool         # fewer eligible items than requested


def constraint_score(item: str, l: int, constraints: ConstraintSet,
                     distance_fn: Callable[[str, str], float]) -> float:
    """Fraction of constraints the item satisfies (l=0) or violates (l=1).

    Strict inequality; ties count as unsatisfied.  An empty constraint set is
    vacuously satisfied: score 1 for l=0, 0 for l=1.
    """
    if l not in (0, 1):
        raise ConfigError(f"l must be 0 or 1, got {l!r}")
    if len(constraints) == 0:
        return 1.0 if l == 0 else 0.0
    sat = sum(
        1 for c in constraints
        if distance_fn(item, c.closer) < distance_fn(item, c.farther)
    )
    frac = sat / len(constraints)
    return frac if l == 0 else 1.0 - frac


def satisfied_counts(index: SearchIndex, attribute: str | int,
                     constraints: ConstraintSet) -> np.ndarray:
    """(N,) count per database item of constraints satisfied in one attribute space."""
    a = index.attr_index(attribute)
    if len(constraints) == 0:
        return np.zeros(index.n, dtype=np.int64)
    d_closer = np.stack([index.dist_row(a, index.row_of(c.closer)) for c in constraints])
    d_farther = np.stack([index.dist_row(a, index.row_of(c.farther)) for c in constraints])
    return kernels.count_satisfied(d_closer, d_farther)


def _eligible_rows(index: SearchIndex, query: str, excluded) -> np.ndarray:
    mask = index.eligible_mask(excluded)
    mask[index.row_of(query)] = False
    return np.nonzero(mask)[0]


def nn_select(index: SearchIndex, query: str, attribute: str | int, k: int,
              excluded: Iterable[str]) -> Selection:
    """K nearest eligible items to the query in one attribute space.

    Ascending distance, ties by item id.  Returns all eligible items with
    ``short=True`` when fewer than K remain.
    """
    if k < 1:
        raise ConfigError("k must be >= 1")
    a = index.attr_index(attribute)
    rows = _eligible_rows(index, query, excluded)
    d = index.dist_row(a, index.row_of(query))
    order = np.lexsort((index.id_rank[rows], d[rows]))
    chosen = rows[order[:k]]
    return Selection([index.ids[r] for r in chosen], short=len(rows) < k)


def fcs_select(index: SearchIndex, query: str, attribute: str | int, k: int,
               excluded: Iterable[str], constraints: ConstraintSet,
               counts: np.ndarray | None = None) -> Selection:
    """Top K eligible items by constraint satisfaction in one attribute space.

    Ranking keys: descending satisfied fraction, ascending distance to the
    query, ascending item id.  ``counts`` may carry precomputed per-item
    satisfied-constraint counts for this attribute (as maintained
    incrementally by a session); otherwise they are computed here.
    """
    if k < 1:
        raise ConfigError("k must be >= 1")
    if len(constraints) == 0:
        return nn_select(index, query, attribute, k, excluded)
    a = index.attr_index(attribute)
    if counts is None:
        counts = satisfied_counts(index, a, constraints)
    rows = _eligible_rows(index, query, excluded)
    d = index.dist_row(a, index.row_of(query))
    order = np.lexsort((index.id_rank[rows], d[rows], -counts[rows]))
    chosen = rows[order[:k]]
    return Selection([index.ids[r] for r in chosen], short=len(rows) < k)


def update_constraints(constraints: ConstraintSet, old_query: str,
                       presented: Sequence[str], accepted: Iterable[str],
                       iteration: int = 0) -> ConstraintSet:
    """Fold one feedback round into the constraint set.

    Every accepted candidate c contributes (c, old_query); every rejected
    presented candidate contributes (old_query, c).  Duplicates of existing
    pairs are dropped.
    """
    accepted_set = set(accepted)
    unknown = accepted_set - set(presented)
    if unknown:
        raise ConfigError(f"accepted ids not among presented: {sorted(unknown)}")
    new: list[Constraint] = []
    for c in presented:
        if c in accepted_set:
            new.append(Constraint(closer=c, farther=old_query, iteration=iteration))
    for c in presented:
        if c not in accepted_set:
            new.append(Constraint(closer=old_query, farther=c, iteration=iteration))
    return constraints.extended(new)
