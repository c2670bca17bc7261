"""Item/schema data model, synthetic generation, dataset file I/O, sampling.

The dataset file format (version 1) is a single self-describing text file:

    attrsearch-dataset v1
    dim <D>
    attributes <E>
    attribute <name> <n_values> <value> ...      # one line per attribute
    items <N>
    item <id> <split> <attr=value[,attr=value...]> <f_1> ... <f_D>

Tokens (ids, attribute names, values) contain no whitespace, ``,`` or ``=``.
Feature floats are serialized with ``repr`` so load(save(d)) is bit-identical.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DatasetParseError, SamplingError

SPLITS = ("train", "val", "test")

_MAGIC = "attrsearch-dataset"
_VERSION = "v1"
_FORBIDDEN = set(" \t\r\n,=")


def _check_token(kind: str, token: str) -> str:
    if not token or any(c in _FORBIDDEN for c in token):
        raise ConfigError(f"{kind} {token!r} is empty or contains whitespace/','/'='")
    return token


@dataclass(frozen=True)
class AttributeSchema:
    """Ordered attribute names with their categorical value vocabularies."""

    attributes: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self):
        if not self.attributes:
            raise ConfigError("schema needs at least one attribute")
        seen = set()
        for name, vocab in self.attributes:
            _check_token("attribute name", name)
            if name in seen:
                raise ConfigError(f"duplicate attribute {name!r}")
            seen.add(name)
            if not vocab:
                raise ConfigError(f"attribute {name!r} has an empty vocabulary")
            if len(set(vocab)) != len(vocab):
                raise ConfigError(f"attribute {name!r} has duplicate values")
            for v in vocab:
                _check_token("attribute value", v)

    @classmethod
    def from_dict(cls, d: Mapping[str, Sequence[str]]) -> "AttributeSchema":
        return cls(tuple((name, tuple(vocab)) for name, vocab in d.items()))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.attributes)

    @property
    def n_attributes(self) -> int:
        return len(self.attributes)

    @property
    def label_count(self) -> int:
        """Total number of distinct (attribute, value) assignments."""
        return sum(len(vocab) for _, vocab in self.attributes)

    def vocab(self, name: str) -> tuple[str, ...]:
        for n, vocab in self.attributes:
            if n == name:
                return vocab
        raise KeyError(name)

    def index(self, name: str) -> int:
        for i, (n, _) in enumerate(self.attributes):
            if n == name:
                return i
        raise KeyError(name)

    def value_index(self, name: str, value: str) -> int:
        return self.vocab(name).index(value)

    def labels(self) -> list[tuple[str, str]]:
        """All (attribute, value) pairs in canonical order."""
        return [(n, v) for n, vocab in self.attributes for v in vocab]

    def digest(self) -> str:
        canon = ";".join(f"{n}={','.join(vocab)}" for n, vocab in self.attributes)
        return hashlib.sha256(canon.encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class Item:
    id: str
    features: np.ndarray
    labels: Mapping[str, str]
    split: str = "train"


@dataclass(frozen=True)
class Triplet:
    anchor: str
    positive: str
    negative: str
    attribute: str


@dataclass(frozen=True)
class QueryTargetPair:
    query: str
    target: str
    shared_attribute: str


class Dataset:
    """Immutable collection of items under one schema.

    Feature arrays are made read-only; samplers receive explicit seeds, so a
    dataset can be shared freely across workers.
    """

    def __init__(self, schema: AttributeSchema, items: Sequence[Item], dim: int | None = None):
        if dim is None:
            if not items:
                raise ConfigError("dim is required for an empty dataset")
            dim = int(items[0].features.shape[0])
        self.schema = schema
        self.dim = dim
        self.items: tuple[Item, ...] = tuple(items)
        self._by_id: dict[str, Item] = {}
        names = set(schema.names)
        for it in self.items:
            _check_token("item id", it.id)
            if it.id in self._by_id:
                raise ConfigError(f"duplicate item id {it.id!r}")
            if it.split not in SPLITS:
                raise ConfigError(f"item {it.id!r} has unknown split {it.split!r}")
            if it.features.shape != (dim,):
                raise ConfigError(
                    f"item {it.id!r} has feature shape {it.features.shape}, expected ({dim},)"
                )
            if not it.labels:
                raise ConfigError(f"item {it.id!r} has no labels")
            for a, v in it.labels.items():
                if a not in names:
                    raise ConfigError(f"item {it.id!r} labels unknown attribute {a!r}")
                if v not in schema.vocab(a):
                    raise ConfigError(f"item {it.id!r} has unknown value {a}={v}")
            it.features.setflags(write=False)
            self._by_id[it.id] = it
        self._rows = {it.id: i for i, it in enumerate(self.items)}
        self._features: np.ndarray | None = None
        self._label_matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[Item]:
        return iter(self.items)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._by_id

    def get(self, item_id: str) -> Item:
        try:
            return self._by_id[item_id]
        except KeyError:
            raise KeyError(f"unknown item id {item_id!r}") from None

    def subset(self, split: str) -> "Dataset":
        if split not in SPLITS:
            raise ConfigError(f"unknown split {split!r}")
        return Dataset(self.schema, [it for it in self.items if it.split == split], self.dim)

    def feature_matrix(self) -> np.ndarray:
        """(N, D) float64 feature matrix in item order."""
        if self._features is None:
            if self.items:
                feats = np.stack([it.features for it in self.items]).astype(np.float64)
            else:
                feats = np.zeros((0, self.dim))
            feats.setflags(write=False)
            self._features = feats
        return self._features

    def label_matrix(self) -> np.ndarray:
        """(N, E) int matrix of value indices, -1 where the label is absent."""
        if self._label_matrix is None:
            mat = np.full((len(self.items), self.schema.n_attributes), -1, dtype=np.int64)
            for i, it in enumerate(self.items):
                for a, v in it.labels.items():
                    mat[i, self.schema.index(a)] = self.schema.value_index(a, v)
            mat.setflags(write=False)
            self._label_matrix = mat
        return self._label_matrix

    def row_of(self, item_id: str) -> int:
        try:
            return self._rows[item_id]
        except KeyError:
            raise KeyError(f"unknown item id {item_id!r}") from None


# ---------------------------------------------------------------------------
# synthetic generation


def benchmark_schema() -> AttributeSchema:
    """Default four-attribute schema used by the CLI and the benchmarks."""
    return AttributeSchema((
        ("color", ("red", "green", "blue", "black")),
        ("size", ("small", "medium", "large")),
        ("texture", ("matte", "gloss", "rough")),
        ("shape", ("round", "square", "slim", "wide")),
    ))


def synthetic_prototypes(schema: AttributeSchema, dim: int, seed: int) -> dict[tuple[str, str], np.ndarray]:
    """Orthonormal prototype vector per (attribute, value), deterministic per seed."""
    n_labels = schema.label_count
    if dim < n_labels:
        raise ConfigError(f"dim {dim} < total label count {n_labels}; prototypes need dim >= labels")
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((dim, n_labels))
    q, r = np.linalg.qr(raw)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs
    return {lab: q[:, j].copy() for j, lab in enumerate(schema.labels())}


def generate_synthetic(
    schema: AttributeSchema,
    n_items: int,
    dim: int,
    noise_sigma: float,
    seed: int,
    label_density: float = 1.0,
    split_fractions: tuple[float, float, float] = (0.7, 0.1, 0.2),
) -> Dataset:
    """Prototype-plus-noise dataset: feature = sum of label prototypes + sigma * N(0, I).

    Pure function of (schema, parameters, seed).  Noise is drawn even when
    sigma is 0 so label assignments match across noise levels.
    """
    if n_items < 1:
        raise ConfigError("n_items must be >= 1")
    if noise_sigma < 0:
        raise ConfigError("noise_sigma must be >= 0")
    if not 0 < label_density <= 1:
        raise ConfigError("label_density must be in (0, 1]")
    if abs(sum(split_fractions) - 1) > 1e-9 or any(f < 0 for f in split_fractions):
        raise ConfigError("split_fractions must be nonnegative and sum to 1")

    protos = synthetic_prototypes(schema, dim, seed)
    rng = np.random.default_rng(seed)
    rng.standard_normal((dim, schema.label_count))  # keep stream aligned with prototype draw

    n_attrs = schema.n_attributes
    width = len(str(max(n_items - 1, 1)))
    records: list[tuple[str, dict[str, str], np.ndarray]] = []
    for i in range(n_items):
        labeled = rng.random(n_attrs) < label_density
        if not labeled.any():
            labeled[rng.integers(n_attrs)] = True
        labels: dict[str, str] = {}
        feats = np.zeros(dim)
        for a, (name, vocab) in enumerate(schema.attributes):
            if labeled[a]:
                v = int(rng.integers(len(vocab)))
                labels[name] = vocab[v]
                feats = feats + protos[(name, vocab[v])]
        feats = feats + noise_sigma * rng.standard_normal(dim)
        records.append((f"item-{i:0{width}d}", labels, feats))

    order = rng.permutation(n_items)
    n_train = int(np.floor(split_fractions[0] * n_items))
    n_val = int(np.floor((split_fractions[0] + split_fractions[1]) * n_items)) - n_train
    split_of = {}
    for pos, idx in enumerate(order):
        split_of[idx] = "train" if pos < n_train else ("val" if pos < n_train + n_val else "test")

    items = [
        Item(id=rid, features=feats, labels=labs, split=split_of[i])
        for i, (rid, labs, feats) in enumerate(records)
    ]
    return Dataset(schema, items, dim)


# ---------------------------------------------------------------------------
# sampling


def _grouped_by_value(dataset: Dataset, attribute: str) -> dict[str, list[int]]:
    """Value -> rows of items labeled with that value, in dataset order."""
    groups: dict[str, list[int]] = {}
    for row, it in enumerate(dataset.items):
        v = it.labels.get(attribute)
        if v is not None:
            groups.setdefault(v, []).append(row)
    return groups


def sample_triplets(dataset: Dataset, attribute: str, n: int, seed: int) -> list[Triplet]:
    """Uniform sample over valid (anchor, positive, negative) item triples.

    Anchor and positive share the attribute's value, the negative carries a
    different (present) value; all three are distinct items.
    """
    if attribute not in dataset.schema.names:
        raise SamplingError(f"unknown attribute {attribute!r}")
    groups = _grouped_by_value(dataset, attribute)
    if len(groups) < 2:
        raise SamplingError(f"attribute {attribute!r} has fewer than 2 represented values")
    values = sorted(groups)
    sizes = np.array([len(groups[v]) for v in values], dtype=np.float64)
    total = sizes.sum()
    # number of ordered valid triples anchored in each value group
    weights = sizes * (sizes - 1) * (total - sizes)
    if weights.sum() <= 0:
        raise SamplingError(f"attribute {attribute!r} has no value shared by two items")
    probs = weights / weights.sum()

    rng = np.random.default_rng(seed)
    others = {v: [r for u in values if u != v for r in groups[u]] for v in values}
    out: list[Triplet] = []
    choices = rng.choice(len(values), size=n, p=probs) if n else []
    for c in choices:
        v = values[c]
        rows = groups[v]
        i = int(rng.integers(len(rows)))
        j = int(rng.integers(len(rows) - 1))
        if j >= i:
            j += 1
        k = int(rng.integers(len(others[v])))
        out.append(
            Triplet(
                anchor=dataset.items[rows[i]].id,
                positive=dataset.items[rows[j]].id,
                negative=dataset.items[others[v][k]].id,
                attribute=attribute,
            )
        )
    return out


def sample_triplets_per_attribute(dataset: Dataset, n_per_attribute: int, seed: int) -> list[Triplet]:
    """n triplets for every schema attribute, one derived seed per attribute."""
    seeds = np.random.default_rng(seed).integers(2**31, size=dataset.schema.n_attributes)
    out: list[Triplet] = []
    for s, name in zip(seeds, dataset.schema.names):
        out.extend(sample_triplets(dataset, name, n_per_attribute, int(s)))
    return out


def sample_query_target_pairs(dataset: Dataset, per_attribute_n: int, seed: int) -> list[QueryTargetPair]:
    """Per attribute, uniform ordered pairs of distinct items sharing that attribute's value."""
    rng = np.random.default_rng(seed)
    out: list[QueryTargetPair] = []
    for name in dataset.schema.names:
        groups = _grouped_by_value(dataset, name)
        values = sorted(groups)
        sizes = np.array([len(groups[v]) for v in values], dtype=np.float64)
        weights = sizes * (sizes - 1)
        if per_attribute_n > 0 and weights.sum() <= 0:
            raise SamplingError(f"no co-labeled item pair for attribute {name!r}")
        if per_attribute_n == 0:
            continue
        probs = weights / weights.sum()
        for c in rng.choice(len(values), size=per_attribute_n, p=probs):
            rows = groups[values[c]]
            i = int(rng.integers(len(rows)))
            j = int(rng.integers(len(rows) - 1))
            if j >= i:
                j += 1
            out.append(
                QueryTargetPair(
                    query=dataset.items[rows[i]].id,
                    target=dataset.items[rows[j]].id,
                    shared_attribute=name,
                )
            )
    return out


# ---------------------------------------------------------------------------
# file I/O


def save_dataset(dataset: Dataset, path: str) -> None:
    lines = [f"{_MAGIC} {_VERSION}", f"dim {dataset.dim}", f"attributes {dataset.schema.n_attributes}"]
    for name, vocab in dataset.schema.attributes:
        lines.append(f"attribute {name} {len(vocab)} {' '.join(vocab)}")
    lines.append(f"items {len(dataset)}")
    for it in dataset.items:
        labels = ",".join(f"{a}={it.labels[a]}" for a in dataset.schema.names if a in it.labels)
        feats = " ".join(repr(float(x)) for x in it.features)
        lines.append(f"item {it.id} {it.split} {labels} {feats}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_dataset(path: str) -> Dataset:
    with open(path, "r", encoding="utf-8") as f:
        raw = f.read().splitlines()

    def fail(lineno: int, msg: str):
        raise DatasetParseError(f"{path}:{lineno}: {msg}")

    if not raw or raw[0].split() != [_MAGIC, _VERSION]:
        fail(1, f"expected header '{_MAGIC} {_VERSION}'")
    pos = 1

    def expect(keyword: str) -> list[str]:
        nonlocal pos
        if pos >= len(raw):
            fail(len(raw), f"unexpected end of file, expected {keyword!r}")
        parts = raw[pos].split()
        if not parts or parts[0] != keyword:
            fail(pos + 1, f"expected {keyword!r} line, got {raw[pos]!r}")
        pos += 1
        return parts

    dim_parts = expect("dim")
    try:
        dim = int(dim_parts[1])
    except (IndexError, ValueError):
        fail(pos, "malformed dim line")
    n_attr_parts = expect("attributes")
    try:
        n_attrs = int(n_attr_parts[1])
    except (IndexError, ValueError):
        fail(pos, "malformed attributes line")

    attrs: list[tuple[str, tuple[str, ...]]] = []
    for _ in range(n_attrs):
        parts = expect("attribute")
        if len(parts) < 4:
            fail(pos, "attribute line needs a name, a count and at least one value")
        name, count = parts[1], parts[2]
        try:
            n_values = int(count)
        except ValueError:
            fail(pos, f"bad value count {count!r}")
        vocab = tuple(parts[3:])
        if len(vocab) != n_values:
            fail(pos, f"attribute {name!r} declares {n_values} values but lists {len(vocab)}")
        attrs.append((name, vocab))
    try:
        schema = AttributeSchema(tuple(attrs))
    except ConfigError as e:
        fail(pos, str(e))

    n_items_parts = expect("items")
    try:
        n_items = int(n_items_parts[1])
    except (IndexError, ValueError):
        fail(pos, "malformed items line")

    items: list[Item] = []
    for _ in range(n_items):
        lineno = pos + 1
        parts = expect("item")
        if len(parts) != 4 + dim:
            fail(lineno, f"item line has {len(parts) - 4} feature values, expected {dim}")
        item_id, split, label_field = parts[1], parts[2], parts[3]
        labels: dict[str, str] = {}
        for chunk in label_field.split(","):
            if "=" not in chunk:
                fail(lineno, f"bad label assignment {chunk!r}")
            a, _, v = chunk.partition("=")
            if a in labels:
                fail(lineno, f"duplicate label for attribute {a!r}")
            labels[a] = v
        try:
            feats = np.array([float(t) for t in parts[4:]], dtype=np.float64)
        except ValueError as e:
            fail(lineno, f"bad feature value ({e})")
        items.append(Item(id=item_id, features=feats, labels=labels, split=split))

    if pos != len(raw) and any(line.strip() for line in raw[pos:]):
        fail(pos + 1, "trailing content after the declared item count")
    try:
        return Dataset(schema, items, dim)
    except ConfigError as e:
        raise DatasetParseError(f"{path}: {e}") from e
