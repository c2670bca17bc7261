"""Precomputed per-attribute representations of a searchable database.

The index owns the (E, N, e_dim) stack of attribute representations plus a
cache of distance rows keyed by (attribute, anchor row).  Rows are computed
with the selected kernel backend and reused across a session's lifetime, so
repeated scoring against the same anchors (queries, constraint endpoints)
costs one scan each.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .data import Dataset
from .embedding import EmbeddingModel
from .errors import ConfigError


class SearchIndex:
    def __init__(self, model: EmbeddingModel, database: Dataset):
        if model.schema.digest() != database.schema.digest():
            raise ConfigError("model and database were built for different schemas")
        if database.dim != model.dim:
            raise ConfigError(f"database dim {database.dim} != model dim {model.dim}")
        if len(database) == 0:
            raise ConfigError("empty database")
        self.model = model
        self.database = database
        self.schema = database.schema
        self.ids: tuple[str, ...] = tuple(it.id for it in database.items)
        self.n = len(self.ids)
        self.n_attributes = self.schema.n_attributes
        self.reps = model.all_reps(database.feature_matrix())
        self._row = {item_id: r for r, item_id in enumerate(self.ids)}
        order = np.argsort(np.array(self.ids))
        rank = np.empty(self.n, dtype=np.int64)
        rank[order] = np.arange(self.n)
        self.id_rank = rank            # lexicographic rank of each row's id, for tie-breaks
        self._dist_rows: dict[tuple[int, int], np.ndarray] = {}
        self._pooled_rows: dict[int, np.ndarray] = {}

    def row_of(self, item_id: str) -> int:
        try:
            return self._row[item_id]
        except KeyError:
            raise KeyError(f"item {item_id!r} is not in the search database") from None

    def id_of(self, row: int) -> str:
        return self.ids[row]

    def attr_index(self, attribute: str | int) -> int:
        return attribute if isinstance(attribute, int) else self.schema.index(attribute)

    def dist_row(self, attribute: str | int, row: int) -> np.ndarray:
        """(N,) distances from item ``row`` to every item, in one attribute space."""
        a = self.attr_index(attribute)
        key = (a, row)
        cached = self._dist_rows.get(key)
        if cached is None:
            cached = kernels.dists_to_row(self.reps[a], row)
            self._dist_rows[key] = cached
        return cached

    def pooled_row(self, row: int) -> np.ndarray:
        """(N,) distances from item ``row``, averaged over all attribute spaces."""
        cached = self._pooled_rows.get(row)
        if cached is None:
            cached = kernels.pooled_dists_to_row(self.reps, row)
            self._pooled_rows[row] = cached
        return cached

    def distance(self, attribute: str | int, id_i: str, id_j: str) -> float:
        return float(self.dist_row(attribute, self.row_of(id_i))[self.row_of(id_j)])

    def pooled_distance(self, id_i: str, id_j: str) -> float:
        return float(self.pooled_row(self.row_of(id_i))[self.row_of(id_j)])

    def eligible_mask(self, excluded_ids) -> np.ndarray:
        """Boolean (N,) mask, False on every excluded id."""
        mask = np.ones(self.n, dtype=bool)
        for item_id in excluded_ids:
            r = self._row.get(item_id)
            if r is not None:
                mask[r] = False
        return mask
