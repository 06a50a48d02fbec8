import numpy as np
import pytest
from hypothesis import given, strategies as st

from adashift.data import (
    DomainFamily,
    DomainPool,
    DomainSpec,
    Shift,
    default_family,
    gen_domain,
    gen_family,
    load_csv,
    save_csv,
    split,
)

EXPECTED_SIZES = {
    "H": 4699, "HA": 557, "HLH": 220, "HLP": 218, "B": 4639, "BA": 879,
    "BLH": 932, "BLP": 297, "M": 1847, "MA": 464, "MLH": 292,
}
EXPECTED_RATIOS = {
    "H": 0.10, "HA": 0.04, "HLH": 0.45, "HLP": 0.07, "B": 0.41, "BA": 0.08,
    "BLH": 0.66, "BLP": 0.65, "M": 0.31, "MA": 0.08, "MLH": 0.60,
}


def small_family(seed=0, **kwargs):
    domains = [
        DomainSpec("src", 120, 0.25, role="source"),
        DomainSpec("tgt", 80, 0.4, shift=Shift(rotation=0.5, translation=(1.0, -0.5))),
    ]
    return DomainFamily(domains=domains, seed=seed, **kwargs)


def test_default_family_matches_benchmark_shape():
    family = default_family()
    assert [d.name for d in family.domains] == list(EXPECTED_SIZES)
    for d in family.domains:
        assert d.n_samples == EXPECTED_SIZES[d.name]
        assert d.positive_ratio == EXPECTED_RATIOS[d.name]
    assert family.source_name == "H"
    assert len(family.target_names) == 10


def test_default_family_ships_literal_positive_counts():
    family = default_family()
    ha = next(d for d in family.domains if d.name == "HA")
    assert ha.positive_count == 25 and ha.n_samples - ha.positive_count == 532
    pools = gen_family(default_family())
    assert int(pools["HA"].y.sum()) == 25


def test_ratio_based_positive_count_rounds():
    spec = DomainSpec("x", 557, 0.04)
    assert spec.resolved_positive_count() == round(557 * 0.04) == 22


def test_zero_positive_ratio_errors():
    with pytest.raises(ValueError, match="positive count"):
        DomainSpec("x", 5, 0.05).resolved_positive_count()


def test_generated_ratios_are_exact_not_bernoulli():
    pools = gen_family(small_family())
    assert int(pools["src"].y.sum()) == 30
    assert int(pools["tgt"].y.sum()) == 32


def test_identity_shift_same_name_reproduces_source_domain():
    family = small_family()
    src_spec = family.domains[0]
    as_target = DomainSpec("src", 120, 0.25, shift=Shift(), role="target")
    a = gen_domain(src_spec, family)
    b = gen_domain(as_target, family)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.y, b.y)


def test_generation_deterministic_per_seed():
    a = gen_family(small_family(seed=5))
    b = gen_family(small_family(seed=5))
    for name in a:
        np.testing.assert_array_equal(a[name].x, b[name].x)
        np.testing.assert_array_equal(a[name].y, b[name].y)


def test_shift_affine_round_trip():
    shift = Shift(rotation=0.8, translation=(2.0, -1.0))
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 2))
    back = shift.invert_affine(shift.apply_affine(x))
    np.testing.assert_allclose(back, x, rtol=0, atol=1e-12)


def test_gaussian_base_supports_higher_dims():
    pools = gen_family(small_family(feature_dim=8, base="gaussian"))
    assert pools["src"].x.shape == (120, 8)


# ---------------------------------------------------------------------------
# csv ingestion


def test_csv_round_trip_is_lossless(tmp_path):
    pool = gen_family(small_family())["src"]
    pool.y[5] = -1  # one unlabeled row
    path = tmp_path / "src.csv"
    save_csv(pool, path)
    loaded = load_csv(path)
    assert loaded.ids == pool.ids
    assert loaded.name == "src"
    np.testing.assert_array_equal(loaded.x, pool.x)
    np.testing.assert_array_equal(loaded.y, pool.y)


def test_empty_file_with_header(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("id,domain,label,f0,f1\n")
    pool = load_csv(path)
    assert len(pool) == 0


def test_missing_labels_mark_unlabeled(tmp_path):
    path = tmp_path / "three.csv"
    path.write_text(
        "id,domain,label,f0,f1\n"
        "a,d,1,0.5,0.25\n"
        "b,d,,1.5,-0.5\n"
        "c,d,0,2.5,0.125\n"
    )
    pool = load_csv(path)
    assert int(pool.labeled_mask.sum()) == 2
    assert pool.y.tolist() == [1, -1, 0]


def test_ragged_row_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,label,f0,f1\na,1,0.5\n")
    with pytest.raises(ValueError, match="ragged"):
        load_csv(path)


def test_non_numeric_feature_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,label,f0\na,1,zebra\n")
    with pytest.raises(ValueError, match="non-numeric"):
        load_csv(path)


def test_duplicate_ids_error(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,label,f0\na,1,0.5\na,0,0.25\n")
    with pytest.raises(ValueError, match="duplicate"):
        load_csv(path)


# ---------------------------------------------------------------------------
# splitting


def make_pool(n=100, ratio=0.1):
    n_pos = round(n * ratio)
    y = np.array([1] * n_pos + [0] * (n - n_pos))
    x = np.arange(2 * n, dtype=np.float64).reshape(n, 2)
    return DomainPool("p", [f"p-{i}" for i in range(n)], x, y)


def test_split_everything_to_train():
    train, evaluation = split(make_pool(), (1.0, 0.0), seed=0)
    assert len(train) == 100 and len(evaluation) == 0


def test_split_stratification_arithmetic():
    train, evaluation = split(make_pool(100, 0.1), (0.8, 0.2), seed=1)
    assert int(train.y.sum()) == 8 and int(evaluation.y.sum()) == 2
    assert len(train) == 80 and len(evaluation) == 20


def test_split_deterministic_and_disjoint():
    pool = make_pool(60, 0.2)
    a_train, a_eval = split(pool, (0.5, 0.5), seed=7)
    b_train, b_eval = split(pool, (0.5, 0.5), seed=7)
    assert a_train.ids == b_train.ids and a_eval.ids == b_eval.ids
    assert not set(a_train.ids) & set(a_eval.ids)
    assert set(a_train.ids) | set(a_eval.ids) == set(pool.ids)


def test_split_errors_when_class_too_small():
    pool = make_pool(10, 0.1)  # a single positive cannot feed two parts
    with pytest.raises(ValueError, match="fewer samples"):
        split(pool, (0.5, 0.5), seed=0)


def test_split_fractions_must_sum_to_one():
    with pytest.raises(ValueError):
        split(make_pool(), (0.5, 0.4), seed=0)


@given(st.integers(30, 200), st.floats(0.1, 0.9))
def test_split_is_exactly_stratified(n, frac):
    pool = make_pool(n, 0.3)
    train, evaluation = split(pool, (frac, 1.0 - frac), seed=3)
    n_pos = int(pool.y.sum())
    got = int(train.y.sum())
    want = round(n_pos * frac)
    assert abs(got - want) <= 1  # clamps keep both sides non-empty
    assert len(train) + len(evaluation) == n
