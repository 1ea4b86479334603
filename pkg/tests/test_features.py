import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clinbp.cohort import ColumnSpec
from clinbp.errors import ConfigError, DataError, SelectionError
from clinbp.features import (
    DEFAULT_PAIRS,
    DEFAULT_TRANSFORMS,
    FeaturePipelineConfig,
    align_features,
    build_interactions,
    build_power_transforms,
    compute_vif,
    estimate_mutual_information,
    mi_bin_count,
    normalize_name,
    select_features,
    univariate_pvalues,
    vif_of,
)
from clinbp.impute import impute

from conftest import make_table


def test_interaction_product():
    t = make_table([[60.0, 2.0], [0.0, 5.0]], names=["age", "creatinine"])
    out = build_interactions(t, [("age", "creatinine")])
    assert out.column("age__x__creatinine").tolist() == [120.0, 0.0]
    assert out.spec("age__x__creatinine").domain_tag == "derived"


def test_interaction_missing_column():
    with pytest.raises(ConfigError):
        build_interactions(make_table([[1.0]], names=["age"]), [("age", "lactate")])


def test_power_transforms_values():
    out = build_power_transforms(make_table([[4.0], [0.0]], names=["x"]), ["x"])
    assert out.column("x__sq").tolist() == [16.0, 0.0]
    assert out.column("x__sqrt").tolist() == [2.0, 0.0]
    assert out.column("x__log1p")[0] == pytest.approx(math.log(5))
    assert out.column("x__log1p")[1] == 0.0


def test_power_transform_negative_names_row_and_column():
    with pytest.raises(DataError, match="row 1.*|'x'"):
        build_power_transforms(make_table([[1.0], [-2.0]], names=["x"]), ["x"])


def test_default_construction_counts(synthetic_pair):
    internal, _ = synthetic_pair
    imp, _ = impute(internal)
    a = build_interactions(imp, DEFAULT_PAIRS)
    assert a.n_features == imp.n_features + 4
    b = build_power_transforms(a, DEFAULT_TRANSFORMS)
    assert b.n_features == a.n_features + 12
    # append-only: original columns untouched
    np.testing.assert_array_equal(b.X[:, : imp.n_features], imp.X)


def test_vif_orthogonal_is_one():
    # QR of a centred matrix gives centred, mutually orthogonal columns
    A = np.random.default_rng(0).normal(size=(100, 3))
    X = np.linalg.qr(A - A.mean(axis=0))[0]
    assert [vif_of(X, j) for j in range(3)] == pytest.approx([1.0] * 3, abs=1e-9)


def test_vif_exact_copy_is_inf():
    x = np.random.default_rng(1).normal(size=50)
    assert math.isinf(compute_vif(make_table(np.column_stack([x, x])), "f0"))


def test_vif_controlled_r2_is_ten():
    # construct x1 = x0 + e with e orthogonal to x0 and var chosen so R^2 = 0.9
    rng = np.random.default_rng(2)
    n = 500
    x0 = rng.normal(size=n)
    x0 -= x0.mean()
    e = rng.normal(size=n)
    e -= e.mean()
    e -= (e @ x0) / (x0 @ x0) * x0
    e *= math.sqrt((x0 @ x0) * (1 / 0.9 - 1) / (e @ e))
    X = np.column_stack([x0, x0 + e])
    assert vif_of(X, 1) == pytest.approx(10.0, rel=1e-9)


def test_univariate_pvalue_detects_signal():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(500, 2))
    y = 3 * x[:, 0] + rng.normal(size=500)
    p = univariate_pvalues(x, y)
    assert p[0] < 1e-10 and p[1] > 1e-3


def test_mi_independent_small():
    rng = np.random.default_rng(4)
    assert estimate_mutual_information(rng.normal(size=5000), rng.normal(size=5000)) < 0.05


def test_mi_identity_large():
    x = np.random.default_rng(5).normal(size=2000)
    v = estimate_mutual_information(x, x)
    assert v > 0.01 and v == pytest.approx(math.log(mi_bin_count(2000)), rel=0.05)


@pytest.mark.parametrize("snr", [1.0, 3.0])
def test_mi_gaussian_closed_form(snr):
    rng = np.random.default_rng(6)
    n = 5000
    x = rng.normal(size=n)
    y = x + rng.normal(scale=1 / math.sqrt(snr), size=n)
    truth = 0.5 * math.log(1 + snr)
    assert estimate_mutual_information(x, y) == pytest.approx(truth, rel=0.30)


def test_mi_small_n_and_constant():
    with pytest.raises(ValueError):
        estimate_mutual_information(np.arange(10.0), np.arange(10.0))
    assert estimate_mutual_information(np.ones(100), np.arange(100.0)) == 0.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_mi_nonnegative_and_self_dominates(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=200), rng.normal(size=200) + rng.random() * rng.normal(size=200)
    mxy = estimate_mutual_information(x, y)
    assert mxy >= 0
    assert estimate_mutual_information(x, x) >= mxy


def _selection_fixture(n=2000, seed=7):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=n), rng.normal(size=n)
    noise = rng.normal(size=n)
    sbp = 120 + 8 * a + 3 * b + rng.normal(size=n)
    dbp = 70 + 5 * b + rng.normal(size=n)
    X = np.column_stack([a, b, a.copy(), noise])
    return make_table(X, names=["a", "b", "a_copy", "noise"], targets=np.column_stack([sbp, dbp]))


def test_selection_drops_noise_and_one_duplicate():
    t = _selection_fixture()
    out, audit = select_features(t, FeaturePipelineConfig())
    assert "noise" not in out.feature_names
    assert ("a" in out.feature_names) != ("a_copy" in out.feature_names)
    assert "b" in out.feature_names
    dropped = {d["feature"] for stage in audit["stages"].values() for d in stage}
    assert "noise" in dropped
    assert audit["n_selected"] == out.n_features


def test_selection_orthonormal_survive_vif():
    t = _selection_fixture()
    out, audit = select_features(t.select(["a", "b"]), FeaturePipelineConfig())
    assert audit["stages"]["vif"] == [] and out.feature_names == ["a", "b"]


def test_selection_deterministic():
    t = _selection_fixture()
    assert select_features(t)[1] == select_features(t)[1]


def test_selection_everything_dropped():
    rng = np.random.default_rng(8)
    t = make_table(rng.normal(size=(300, 2)))
    with pytest.raises(SelectionError):
        select_features(t, FeaturePipelineConfig(p_value_cutoff=1e-12))


def test_selection_caps_at_target_count():
    t = _selection_fixture()
    out, audit = select_features(t, FeaturePipelineConfig(target_feature_count=1))
    assert out.n_features == 1 and audit["stages"]["top_k"]


def test_selection_requires_complete_data():
    with pytest.raises(DataError):
        select_features(make_table([[np.nan], [1.0]]))


def test_normalize_name():
    assert normalize_name("HR Mean") == normalize_name("hr-mean") == "hr_mean"


def _ref(n):
    return [ColumnSpec(f"feat_{i}") for i in range(n)]


def test_align_identical_schema():
    ref = _ref(5)
    ext = make_table(np.ones((3, 5)), names=[c.name for c in ref])
    aligned, amap = align_features(ext, ref)
    assert amap.coverage == 1.0 and not amap.defaulted
    assert aligned.feature_names == [c.name for c in ref]


def test_align_ten_of_74_missing():
    ref = _ref(74)
    ext = make_table(np.ones((3, 64)), names=[c.name for c in ref[:64]])
    aligned, amap = align_features(ext, ref, defaults={"feat_70": 9.0}, reference_medians={"feat_71": 2.0})
    assert amap.coverage == pytest.approx(64 / 74) and round(amap.coverage, 3) == 0.865
    assert len(amap.defaulted) == 10
    assert aligned.column("feat_70")[0] == 9.0 and aligned.column("feat_71")[0] == 2.0
    assert np.isnan(aligned.column("feat_72")).all()


def test_align_empty_external():
    ref = _ref(4)
    ext = make_table(np.empty((2, 0)), names=[])
    aligned, amap = align_features(ext, ref)
    assert amap.coverage == 0.0 and len(amap.defaulted) == 4


def test_align_cosmetic_rename():
    ref = [ColumnSpec("hr_mean"), ColumnSpec("spo2_mean")]
    ext = make_table(np.ones((2, 2)), names=["HR Mean", "SpO2-Mean"])
    _, amap = align_features(ext, ref)
    assert amap.coverage == 1.0


@settings(max_examples=25, deadline=None)
@given(st.lists(st.sampled_from([f"c{i}" for i in range(12)]), unique=True, max_size=12))
def test_align_output_schema_matches_reference(present):
    ref = [ColumnSpec(f"c{i}") for i in range(8)]
    ext = make_table(np.ones((2, len(present))), names=list(present)) if present else make_table(np.empty((2, 0)), names=[])
    aligned, amap = align_features(ext, ref)
    assert list(aligned.schema) == ref
    assert amap.coverage == pytest.approx(len([p for p in present if p in {c.name for c in ref}]) / 8)
