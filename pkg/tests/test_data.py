import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from simgen.data import (
    Dataset, ParameterSpace, ParameterSpec, ParseError, ScalingStats, SchemaError,
    apply_scaling, derive_features, derive_matrix, destandardize, fit_scaling, load_dataset,
    load_space, parse_material_model_name, split_counts, split_dataset, standardize,
)
from simgen.oracle import MATERIAL_SPACE, RUPTURE_SPACE, synth_dataset
from simgen import artifacts


def column_ds(values):
    space = ParameterSpace((ParameterSpec("a", "", -100, 100),))
    return Dataset(space, np.asarray(values, dtype=float)[:, None], np.zeros(len(values)))


def write_rupture_csv(path, ds, drop=None):
    names = RUPTURE_SPACE.names + ["label"]
    keep = [i for i, n in enumerate(names) if n != drop]
    rows = [list(r) + [int(o)] for r, o in zip(ds.rows, ds.outcomes)]
    artifacts.write_csv(path, [names[i] for i in keep], ([r[i] for i in keep] for r in rows))


# -- loading ----------------------------------------------------------------

def test_load_2000_rows(tmp_path):
    ds = synth_dataset("rupture", 2000, seed=3)
    write_rupture_csv(tmp_path / "d.csv", ds)
    loaded = load_dataset(tmp_path / "d.csv", RUPTURE_SPACE, "label", task="binary")
    assert len(loaded) == 2000
    assert loaded.rows.shape == (2000, 8)
    assert loaded.task == "binary"


def test_missing_column_names_it(tmp_path):
    ds = synth_dataset("rupture", 5, seed=3)
    write_rupture_csv(tmp_path / "d.csv", ds, drop="dc")
    with pytest.raises(SchemaError, match="dc"):
        load_dataset(tmp_path / "d.csv", RUPTURE_SPACE, "label")


def test_single_row_bit_equal(tmp_path):
    ds = synth_dataset("rupture", 1, seed=4)
    write_rupture_csv(tmp_path / "d.csv", ds)
    loaded = load_dataset(tmp_path / "d.csv", RUPTURE_SPACE, "label")
    assert len(loaded) == 1
    _, rows = artifacts.read_csv(tmp_path / "d.csv")
    assert loaded.rows[0].tolist() == [float(v) for v in rows[0][:8]]


def test_non_numeric_cell(tmp_path):
    ds = synth_dataset("rupture", 3, seed=4)
    write_rupture_csv(tmp_path / "d.csv", ds)
    text = (tmp_path / "d.csv").read_text().splitlines()
    cells = text[2].split(",")
    cells[5] = "abc"
    text[2] = ",".join(cells)
    (tmp_path / "d.csv").write_text("\n".join(text) + "\n")
    # rows are counted as file lines, header included
    with pytest.raises(ParseError, match=r"row 3, column 'dc'"):
        load_dataset(tmp_path / "d.csv", RUPTURE_SPACE, "label")


def test_empty_file(tmp_path):
    (tmp_path / "d.csv").write_text("")
    with pytest.raises(ValueError):
        load_dataset(tmp_path / "d.csv", RUPTURE_SPACE, "label")


def test_space_yaml_round_trip(tmp_path):
    import yaml
    for space in (RUPTURE_SPACE, MATERIAL_SPACE):
        path = tmp_path / "space.yaml"
        path.write_text(yaml.safe_dump(space.to_dict()))
        assert load_space(path) == space


def test_space_rejects_contradictory_plausibility():
    with pytest.raises(SchemaError):
        ParameterSpec("h", "km", -1.0, 3.0, "positive")
    with pytest.raises(SchemaError):
        ParameterSpec("h", "km", 3.0, 1.0)


# -- scaling ------------------------------------------------------------------

def test_fit_scaling_examples():
    st_ = fit_scaling(column_ds([1, 2, 3]))
    assert st_.mean[0] == 2.0
    assert st_.std[0] == pytest.approx(math.sqrt(2 / 3), abs=1e-12)
    assert round(st_.std[0], 4) == 0.8165
    st_ = fit_scaling(column_ds([-1, 1]))
    assert st_.mean[0] == 0.0 and st_.std[0] == 1.0


def test_constant_column_error():
    with pytest.raises(ValueError, match="'a'"):
        fit_scaling(column_ds([5, 5, 5]))


def test_standardize_examples():
    ds = column_ds([1, 2, 3])
    z = apply_scaling(ds, fit_scaling(ds)).rows[:, 0]
    np.testing.assert_allclose(z, [-1.2247449, 0.0, 1.2247449], atol=1e-6)
    ident = ScalingStats(np.zeros(1), np.ones(1))
    x = np.array([[0.3], [-7.0]])
    assert np.array_equal(standardize(x, ident), x)


def test_standardize_dimension_mismatch():
    with pytest.raises(ValueError):
        standardize(np.ones((2, 3)), ScalingStats(np.zeros(2), np.ones(2)))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_scaling_round_trip(seed):
    rng = np.random.default_rng(seed)
    n, d = rng.integers(2, 40), rng.integers(1, 6)
    x = rng.normal(rng.normal(0, 100, d), rng.uniform(0.01, 50, d), (n, d))
    space = ParameterSpace(tuple(ParameterSpec(f"p{k}", "", -1e9, 1e9) for k in range(d)))
    stats = fit_scaling(Dataset(space, x, np.zeros(n)))
    back = destandardize(standardize(x, stats), stats)
    assert np.all(np.abs(back - x) <= 1e-9 * np.maximum(np.abs(x), 1e-12) + 1e-12)
    z = standardize(x, stats)
    assert np.all(np.abs(z.mean(axis=0)) < 1e-9)
    assert np.all(np.abs(z.std(axis=0) - 1) < 1e-9)


# -- derived features -----------------------------------------------------------

def test_derived_feature_examples():
    row = np.array([[-100.0, -80.0, 60.0, 0.4, 0.2, 0.4, 2.0, 1.0]])
    feats = dict(zip(RUPTURE_SPACE.feature_names, derive_matrix(RUPTURE_SPACE, row)[0]))
    assert feats["width_over_height"] == 2.0
    assert feats["sxx_minus_syy"] == -20.0
    assert feats["mud_times_sdrop"] == pytest.approx(0.08, abs=1e-15)
    assert feats["mud_minus_sdrop"] == pytest.approx(0.2, abs=1e-15)


def test_ratio_zero_denominator_is_clamped():
    row = np.array([[-100.0, -80.0, 60.0, 0.4, 0.2, 0.4, 2.0, 0.0]])
    value = derive_matrix(RUPTURE_SPACE, row)[0, 8]
    assert math.isfinite(value) and value == pytest.approx(2e9)


def test_derived_features_survive_csv_round_trip(tmp_path):
    ds = synth_dataset("rupture", 200, seed=9)
    write_rupture_csv(tmp_path / "d.csv", ds)
    loaded = load_dataset(tmp_path / "d.csv", RUPTURE_SPACE, "label")
    assert np.array_equal(derive_features(loaded).rows, derive_features(ds).rows)


# -- splitting ------------------------------------------------------------------

def test_split_counts_examples():
    assert split_counts(2000, {"train": 0.8, "validation": 0.0, "test": 0.2}) == \
        {"validation": 0, "test": 400, "train": 1600}
    c = split_counts(35, {"train": 23 / 35, "validation": 5 / 35, "test": 7 / 35})
    assert (c["train"], c["validation"], c["test"]) == (23, 5, 7)


def test_split_too_few_rows():
    with pytest.raises(ValueError):
        split_counts(2, {"train": 0.5, "validation": 0.25, "test": 0.25})


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 500), st.floats(0, 0.5), st.floats(0, 0.4), st.integers(0, 1000))
def test_split_is_partition(n, f_val, f_test, seed):
    fr = {"train": 1 - f_val - f_test, "validation": f_val, "test": f_test}
    ds = column_ds(np.arange(n, dtype=float))
    out = split_dataset(ds, fr, seed)
    counts = split_counts(n, fr)
    for group in ("train", "validation", "test"):
        assert int(np.sum(out.split == group)) == counts[group]
    assert sum(counts.values()) == n
    assert set(out.split) <= {"train", "validation", "test"}


def test_split_determinism():
    ds = column_ds(np.arange(100, dtype=float))
    fr = {"train": 0.7, "validation": 0.1, "test": 0.2}
    a, b = split_dataset(ds, fr, 5), split_dataset(ds, fr, 5)
    assert a.split.tolist() == b.split.tolist()


# -- model names ------------------------------------------------------------------

def test_parse_model_names():
    assert parse_material_model_name("6_2_9_1_d7_r10") == ([6, 2, 9, 1], 7, 10)
    assert parse_material_model_name("3_4_5_2_d5_r20") == ([3, 4, 5, 2], 5, 20)
    with pytest.raises(ParseError, match="6_2_9_d7_r10"):
        parse_material_model_name("6_2_9_d7_r10")
