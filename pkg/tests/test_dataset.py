import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from attrsearch import (
    AttributeSchema,
    ConfigError,
    Dataset,
    DatasetParseError,
    Item,
    SamplingError,
    generate_synthetic,
    load_dataset,
    sample_query_target_pairs,
    sample_triplets,
    sample_triplets_per_attribute,
    save_dataset,
)
from attrsearch.data import synthetic_prototypes


def test_schema_rejects_bad_tokens():
    for bad in ("", "a b", "a,b", "a=b"):
        with pytest.raises(ConfigError):
            AttributeSchema((("color", ("red", bad)),))
        with pytest.raises(ConfigError):
            AttributeSchema(((bad or " ", ("red",)),))
    with pytest.raises(ConfigError):
        AttributeSchema((("color", ("red", "red")),))
    with pytest.raises(ConfigError):
        AttributeSchema((("color", ("red",)), ("color", ("blue",))))


def test_schema_digest_depends_on_order_and_content():
    s1 = AttributeSchema((("a", ("x", "y")), ("b", ("z",))))
    s2 = AttributeSchema((("b", ("z",)), ("a", ("x", "y"))))
    s3 = AttributeSchema((("a", ("y", "x")), ("b", ("z",))))
    assert s1.digest() != s2.digest()
    assert s1.digest() != s3.digest()
    assert s1.digest() == AttributeSchema(s1.attributes).digest()


def test_dataset_validates_items(tiny_schema):
    feats = np.zeros(4)
    with pytest.raises(ConfigError):
        Dataset(tiny_schema, [Item("a", feats, {"color": "red"}),
                              Item("a", feats, {"color": "blue"})])
    with pytest.raises(ConfigError):
        Dataset(tiny_schema, [Item("a", feats, {"flavor": "sweet"})])
    with pytest.raises(ConfigError):
        Dataset(tiny_schema, [Item("a", feats, {"color": "mauve"})])
    with pytest.raises(ConfigError):
        Dataset(tiny_schema, [Item("a", feats, {})])
    with pytest.raises(ConfigError):
        Dataset(tiny_schema, [Item("a", np.zeros(3), {"color": "red"})], dim=4)


def test_feature_matrix_is_read_only(tiny_dataset):
    feats = tiny_dataset.feature_matrix()
    assert feats.shape == (len(tiny_dataset), tiny_dataset.dim)
    with pytest.raises(ValueError):
        feats[0, 0] = 1.0


def test_label_matrix_absent_is_minus_one(tiny_schema):
    items = [
        Item("a", np.zeros(4), {"color": "red"}),
        Item("b", np.zeros(4), {"color": "blue", "size": "large"}),
    ]
    ds = Dataset(tiny_schema, items, dim=4)
    mat = ds.label_matrix()
    assert mat[0].tolist() == [0, -1]
    assert mat[1].tolist() == [2, 1]


def test_prototypes_are_orthonormal(tiny_schema):
    protos = synthetic_prototypes(tiny_schema, dim=8, seed=0)
    labels = tiny_schema.labels()
    assert set(protos) == set(labels)
    mat = np.stack([protos[lab] for lab in labels])
    np.testing.assert_allclose(mat @ mat.T, np.eye(len(labels)), atol=1e-10)
    again = synthetic_prototypes(tiny_schema, dim=8, seed=0)
    for lab in labels:
        np.testing.assert_array_equal(protos[lab], again[lab])
    with pytest.raises(ConfigError):
        synthetic_prototypes(tiny_schema, dim=len(labels) - 1, seed=0)


def test_generate_synthetic_deterministic(tiny_schema):
    d1 = generate_synthetic(tiny_schema, n_items=50, dim=8, noise_sigma=0.3, seed=9)
    d2 = generate_synthetic(tiny_schema, n_items=50, dim=8, noise_sigma=0.3, seed=9)
    assert [it.id for it in d1] == [it.id for it in d2]
    np.testing.assert_array_equal(d1.feature_matrix(), d2.feature_matrix())
    assert all(a.labels == b.labels for a, b in zip(d1, d2))


def test_generate_synthetic_labels_match_across_noise(tiny_schema):
    clean = generate_synthetic(tiny_schema, n_items=40, dim=8, noise_sigma=0.0, seed=4)
    noisy = generate_synthetic(tiny_schema, n_items=40, dim=8, noise_sigma=0.5, seed=4)
    assert all(a.labels == b.labels for a, b in zip(clean, noisy))
    assert all(a.split == b.split for a, b in zip(clean, noisy))


def test_generate_synthetic_zero_noise_is_prototype_sum(tiny_schema):
    ds = generate_synthetic(tiny_schema, n_items=30, dim=8, noise_sigma=0.0, seed=7)
    protos = synthetic_prototypes(tiny_schema, dim=8, seed=7)
    for it in ds:
        want = sum((protos[(a, v)] for a, v in it.labels.items()), np.zeros(8))
        np.testing.assert_allclose(it.features, want, atol=1e-12)


def test_generate_synthetic_density_and_splits(tiny_schema):
    ds = generate_synthetic(tiny_schema, n_items=200, dim=8, noise_sigma=0.1,
                            seed=5, label_density=0.5)
    assert all(len(it.labels) >= 1 for it in ds)
    frac = np.mean([len(it.labels) for it in ds]) / tiny_schema.n_attributes
    assert 0.35 < frac < 0.7
    counts = {s: sum(1 for it in ds if it.split == s) for s in ("train", "val", "test")}
    assert counts["train"] == 140 and counts["val"] == 20 and counts["test"] == 40


def test_generate_synthetic_validates():
    schema = AttributeSchema((("a", ("x", "y")),))
    with pytest.raises(ConfigError):
        generate_synthetic(schema, n_items=0, dim=4, noise_sigma=0.1, seed=0)
    with pytest.raises(ConfigError):
        generate_synthetic(schema, n_items=5, dim=4, noise_sigma=-1, seed=0)
    with pytest.raises(ConfigError):
        generate_synthetic(schema, n_items=5, dim=4, noise_sigma=0.1, seed=0,
                           split_fractions=(0.5, 0.4, 0.2))


def test_sample_triplets_validity(tiny_dataset):
    for attr in tiny_dataset.schema.names:
        triplets = sample_triplets(tiny_dataset, attr, 200, seed=11)
        assert len(triplets) == 200
        for t in triplets:
            a = tiny_dataset.get(t.anchor).labels
            p = tiny_dataset.get(t.positive).labels
            n = tiny_dataset.get(t.negative).labels
            assert t.attribute == attr
            assert len({t.anchor, t.positive, t.negative}) == 3
            assert a[attr] == p[attr]
            assert attr in n and n[attr] != a[attr]


def test_sample_triplets_deterministic(tiny_dataset):
    t1 = sample_triplets(tiny_dataset, "color", 50, seed=2)
    t2 = sample_triplets(tiny_dataset, "color", 50, seed=2)
    assert t1 == t2
    t3 = sample_triplets(tiny_dataset, "color", 50, seed=3)
    assert t1 != t3


def test_sample_triplets_needs_two_values(tiny_schema):
    items = [Item(f"i{k}", np.zeros(4), {"color": "red"}) for k in range(4)]
    ds = Dataset(tiny_schema, items, dim=4)
    with pytest.raises(SamplingError):
        sample_triplets(ds, "color", 5, seed=0)
    with pytest.raises(SamplingError):
        sample_triplets(ds, "flavor", 5, seed=0)


def test_per_attribute_sampler_uses_distinct_streams(tiny_dataset):
    triplets = sample_triplets_per_attribute(tiny_dataset, 30, seed=6)
    assert len(triplets) == 30 * tiny_dataset.schema.n_attributes
    by_attr = {}
    for t in triplets:
        by_attr.setdefault(t.attribute, []).append((t.anchor, t.positive, t.negative))
    seqs = list(by_attr.values())
    assert seqs[0] != seqs[1]


def test_query_target_pairs(tiny_dataset):
    pairs = sample_query_target_pairs(tiny_dataset, 25, seed=8)
    assert len(pairs) == 25 * tiny_dataset.schema.n_attributes
    for p in pairs:
        assert p.query != p.target
        ql = tiny_dataset.get(p.query).labels
        tl = tiny_dataset.get(p.target).labels
        assert ql[p.shared_attribute] == tl[p.shared_attribute]


def test_roundtrip_is_identity(tiny_dataset, tmp_path):
    path = tmp_path / "ds.txt"
    save_dataset(tiny_dataset, str(path))
    loaded = load_dataset(str(path))
    assert loaded.schema.digest() == tiny_dataset.schema.digest()
    assert [it.id for it in loaded] == [it.id for it in tiny_dataset]
    assert all(a.split == b.split and a.labels == b.labels
               for a, b in zip(loaded, tiny_dataset))
    np.testing.assert_array_equal(loaded.feature_matrix(), tiny_dataset.feature_matrix())

    save_dataset(loaded, str(tmp_path / "ds2.txt"))
    assert (tmp_path / "ds.txt").read_bytes() == (tmp_path / "ds2.txt").read_bytes()


@pytest.mark.parametrize("mutate, lineno_part", [
    (lambda lines: ["junk"] + lines[1:], ":1:"),
    (lambda lines: lines[:1] + ["dim x"] + lines[2:], ":2:"),
    (lambda lines: lines[:3] + [lines[3].replace(" 3 ", " 4 ", 1)] + lines[4:], ":4:"),
])
def test_parse_errors_carry_position(tiny_dataset, tmp_path, mutate, lineno_part):
    path = tmp_path / "ds.txt"
    save_dataset(tiny_dataset, str(path))
    lines = path.read_text().splitlines()
    path.write_text("\n".join(mutate(lines)) + "\n")
    with pytest.raises(DatasetParseError) as err:
        load_dataset(str(path))
    assert lineno_part in str(err.value)


def test_parse_error_on_wrong_feature_count(tiny_dataset, tmp_path):
    path = tmp_path / "ds.txt"
    save_dataset(tiny_dataset, str(path))
    lines = path.read_text().splitlines()
    first_item = next(i for i, ln in enumerate(lines) if ln.startswith("item "))
    lines[first_item] = " ".join(lines[first_item].split()[:-1])
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetParseError):
        load_dataset(str(path))


@given(st.integers(1, 60), st.floats(0, 1, exclude_min=True), st.integers(0, 10**6))
def test_generate_synthetic_properties(n_items, density, seed):
    schema = AttributeSchema((("a", ("x", "y")), ("b", ("u", "v", "w"))))
    ds = generate_synthetic(schema, n_items=n_items, dim=6, noise_sigma=0.2,
                            seed=seed, label_density=density)
    assert len(ds) == n_items
    ids = [it.id for it in ds]
    assert len(set(ids)) == n_items
    assert all(len(i) == len(ids[0]) for i in ids)       # zero-padded, equal width
    assert all(it.labels for it in ds)
