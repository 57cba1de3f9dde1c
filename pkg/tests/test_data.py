import numpy as np
import pytest

from sigfair.data import (ADULT_COLUMNS, Bin, Binarize, Dataset, Drop, Dummy, Filter,
                          PreprocessError, PreprocessSpec, Remap, Select, SplitError, SynthSpec,
                          generate_synthetic, load_adult, load_compas, load_csv, load_dataset,
                          load_spec, preprocess, save_dataset, split, standardize)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


class TestLoadCsv:
    def test_numeric(self, tmp_path):
        t = load_csv(write(tmp_path, "a.csv", "a,b\n1,2\n3,4\n"))
        assert t.n_rows == 2 and t.kinds == {"a": "numeric", "b": "numeric"}
        assert np.array_equal(t.cells["b"], [2.0, 4.0])

    def test_mixed_column_is_categorical(self, tmp_path):
        t = load_csv(write(tmp_path, "a.csv", "a,b\n1,x\n2,3\n"))
        assert t.kinds["b"] == "categorical" and list(t.cells["b"]) == ["x", "3"]

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_csv(str(tmp_path / "nope.csv"))

    def test_ragged_row_reports_line(self, tmp_path):
        with pytest.raises(PreprocessError, match=":3:"):
            load_csv(write(tmp_path, "a.csv", "a,b\n1,2\n3\n"))

    def test_missing_cells_and_override(self, tmp_path):
        t = load_csv(write(tmp_path, "a.csv", "a,b\n1,?\n,y\n"), kinds={"a": "categorical"})
        assert list(t.cells["a"]) == ["1", None]
        assert list(t.cells["b"]) == [None, "y"]


def small_table(tmp_path):
    text = "age,edu,race,sex,label\n" + "\n".join([
        "25,5,White,F,0", "69,9,Black,M,1", "71,13,White,M,1", "40,12,Asian,F,0",
        "33,?,White,F,1", "50,6,Black,M,0",
    ]) + "\n"
    return load_csv(write(tmp_path, "t.csv", text))


SPEC = PreprocessSpec("toy", [
    Bin("edu", [6, 13], ["lo", "mid", "hi"]),
    Binarize("age", 70),
    Remap("race", {"White": "white"}, default="non-white"),
    Remap("sex", {"M": 1, "F": 0}),
    Select(label="label", sensitive="sex"),
    Dummy(),
], expected_dim=6)


class TestPreprocess:
    def test_pipeline(self, tmp_path):
        ds = preprocess(small_table(tmp_path), SPEC)
        assert ds.n == 5  # one row dropped for a missing cell
        assert ds.feature_names == ["age", "edu=hi", "edu=lo", "edu=mid",
                                    "race=non-white", "race=white"]
        assert np.array_equal(ds.X[:, 0], [0, 0, 1, 0, 0])
        assert any("dropped 1 rows" in n for n in ds.notes)
        assert not any("differs" in n for n in ds.notes)
        for prefix in ("edu=", "race="):
            cols = [i for i, n in enumerate(ds.feature_names) if n.startswith(prefix)]
            assert np.all(ds.X[:, cols].sum(axis=1) == 1)

    def test_binarize_threshold(self, tmp_path):
        t = load_csv(write(tmp_path, "a.csv", "age,s,y\n69,0,0\n71,1,1\n"))
        ds = preprocess(t, PreprocessSpec("b", [Binarize("age", 70), Select("y", "s")]))
        assert list(ds.X[:, 0]) == [0.0, 1.0]

    def test_education_bins(self, tmp_path):
        t = load_csv(write(tmp_path, "a.csv", "e,s,y\n5,0,0\n6,0,1\n12,1,0\n13,1,1\n"))
        ds = preprocess(t, PreprocessSpec("b", [Bin("e", [6, 13], ["a", "b", "c"]),
                                                Select("y", "s"), Dummy()]))
        assert ds.feature_names == ["e=a", "e=b", "e=c"]
        assert np.array_equal(ds.X.argmax(axis=1), [0, 1, 1, 2])

    def test_filters_only_remove_rows(self, tmp_path):
        t = small_table(tmp_path)
        spec = PreprocessSpec("f", [Filter("age", "between", [30, 60]), Remap("sex", {"M": 1, "F": 0}),
                                    Select("label", "sex"), Dummy()])
        # ages 40, 33, 50 pass; the 33-year-old row has a missing cell
        assert preprocess(t, spec).n == 2

    def test_drop_removes_column_and_its_missing_cell(self, tmp_path):
        spec = PreprocessSpec("d", [Drop(["edu"]), Remap("sex", {"M": 1, "F": 0}),
                                    Select("label", "sex"), Dummy()])
        ds = preprocess(small_table(tmp_path), spec)
        # the only missing cell sat in the dropped column, so every row survives
        assert ds.n == 6
        assert not any(n.startswith("edu") for n in ds.feature_names)

    def test_filter_before_bin_order(self, tmp_path):
        t = small_table(tmp_path)
        a = PreprocessSpec("a", [Filter("edu", "ge", 6), Bin("edu", [6, 13], ["lo", "mid", "hi"]),
                                 Remap("sex", {"M": 1, "F": 0}), Select("label", "sex"), Dummy()])
        b = PreprocessSpec("b", [Bin("edu", [6, 13], ["lo", "mid", "hi"]), Filter("edu", "ge", 6),
                                 Remap("sex", {"M": 1, "F": 0}), Select("label", "sex"), Dummy()])
        assert preprocess(t, a).n == 4
        with pytest.raises(PreprocessError, match="numeric"):
            preprocess(t, b)

    @pytest.mark.parametrize("rules, match", [
        ([Binarize("nope", 1)], "nope"),
        ([Select("label", "race")], "sensitive"),
        ([Remap("sex", {"M": 1, "F": 0}), Select("label", "sex")], "categorical"),
        ([Remap("sex", {"M": 1, "F": 0})], "select"),
    ])
    def test_errors_name_the_problem(self, tmp_path, rules, match):
        with pytest.raises(PreprocessError, match=match):
            preprocess(small_table(tmp_path), PreprocessSpec("e", rules))

    def test_dimension_mismatch_reported(self, tmp_path):
        spec = PreprocessSpec("x", SPEC.rules, expected_dim=7)
        ds = preprocess(small_table(tmp_path), spec)
        assert any("differs from reference 7" in n for n in ds.notes)

    def test_toml_spec(self, tmp_path):
        path = write(tmp_path, "spec.toml", """
name = "toy"
expected_dim = 6
[[rules]]
kind = "bin"
column = "edu"
edges = [6, 13]
labels = ["lo", "mid", "hi"]
[[rules]]
kind = "binarize"
column = "age"
threshold = 70
[[rules]]
kind = "remap"
column = "race"
mapping = {White = "white"}
default = "non-white"
[[rules]]
kind = "remap"
column = "sex"
mapping = {M = 1, F = 0}
[[rules]]
kind = "select"
label = "label"
sensitive = "sex"
[[rules]]
kind = "dummy"
""")
        a = preprocess(small_table(tmp_path), load_spec(path))
        b = preprocess(small_table(tmp_path), SPEC)
        assert np.array_equal(a.X, b.X) and a.feature_names == b.feature_names

    def test_toml_unknown_rule(self, tmp_path):
        path = write(tmp_path, "spec.toml", '[[rules]]\nkind = "explode"\n')
        with pytest.raises(PreprocessError, match="explode"):
            load_spec(path)


def toy_dataset(n=10, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(X=rng.normal(size=(n, 3)), s=rng.integers(0, 2, n).astype(np.int8),
                   y=rng.integers(0, 2, n).astype(np.int8))


class TestSplit:
    def test_partition_and_sizes(self):
        ds = split(toy_dataset(100), test_fraction=0.3, val_fraction=0.2, seed=1)
        assert ds.sizes() == {"train": 56, "val": 14, "test": 30}
        assert set(ds.split) == {"train", "val", "test"}

    def test_ten_rows_eighty_twenty(self):
        base = toy_dataset(12)
        tags = np.array(["test", "test"] + [""] * 10)
        ds = split(Dataset(base.X, base.s, base.y, split=tags), scheme="fixed_test")
        assert ds.sizes() == {"train": 8, "val": 2, "test": 2}
        assert np.all(ds.split[:2] == "test")

    def test_deterministic(self):
        a = split(toy_dataset(50), seed=3)
        b = split(toy_dataset(50), seed=3)
        assert np.array_equal(a.split, b.split)

    def test_empty_split_rejected(self):
        with pytest.raises(SplitError):
            split(toy_dataset(3), test_fraction=0.3, val_fraction=0.2)

    def test_adult_arithmetic(self):
        n_rest = 24130 + 6032
        assert n_rest - int(np.floor(0.2 * n_rest)) == 24130


class TestStandardize:
    def test_train_moments(self):
        ds = standardize(split(toy_dataset(200), seed=0))
        X = ds.part("train")[0]
        assert np.all(np.abs(X.mean(axis=0)) < 1e-12)
        assert np.all(np.abs(X.var(axis=0) - 1) < 1e-10)

    def test_constant_column_dropped(self):
        base = toy_dataset(40)
        X = base.X.copy()
        X[:, 1] = 5.0
        ds = standardize(split(Dataset(X, base.s, base.y), seed=0))
        assert ds.d == 2 and ds.standardization["dropped"] == ["x1"]
        assert any("constant" in n for n in ds.notes)

    def test_uses_train_statistics(self):
        ds = split(toy_dataset(100), seed=0)
        out = standardize(ds)
        tr = ds.X[ds.split == "train"]
        te = ds.X[ds.split == "test"]
        expected = (te - tr.mean(axis=0)) / tr.std(axis=0)
        assert np.allclose(out.X[ds.split == "test"], expected, rtol=0, atol=1e-14)


class TestCache:
    def test_roundtrip(self, tmp_path):
        ds = standardize(split(toy_dataset(30), seed=2))
        path = str(tmp_path / "d.bin")
        save_dataset(path, ds)
        back = load_dataset(path)
        assert np.array_equal(back.X, ds.X) and np.array_equal(back.split, ds.split)
        assert np.array_equal(back.s, ds.s) and back.feature_names == ds.feature_names
        with open(path, "rb") as fh:
            head = fh.read(5)
        assert head[:4] == b"SGFD" and head[4] == 1

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.bin"
        p.write_bytes(b"nope")
        with pytest.raises(ValueError):
            load_dataset(str(p))


class TestSynthetic:
    def test_no_shift_no_gap(self):
        _, truth = generate_synthetic(SynthSpec(n=100, d=4, delta=0.0, b_s=0.0))
        assert truth["bayes_delta_dp"] < 0.01

    def test_planted_gap(self):
        _, truth = generate_synthetic(SynthSpec(n=100, d=4, delta=1.0, b_s=1.0))
        assert truth["bayes_delta_dp"] > 0.3

    def test_same_seed_same_data(self):
        a, ta = generate_synthetic(SynthSpec(n=50, seed=4, mc_draws=1000))
        b, tb = generate_synthetic(SynthSpec(n=50, seed=4, mc_draws=1000))
        assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y) and ta == tb

    @pytest.mark.parametrize("kwargs", [dict(d=0), dict(n=3), dict(d=2, w=(1.0,))])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SynthSpec(**kwargs)


class TestBuiltinSpecs:
    def test_adult_shape_on_a_tiny_file(self, tmp_path):
        rows = ["39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, "
                "Not-in-family, White, Male, 2174, 0, 40, United-States, <=50K",
                "50, Self-emp, 83311, HS-grad, 9, Married, Exec, Husband, Black, Female, "
                "0, 0, 13, Cuba, >50K",
                "38, ?, 215646, HS-grad, 9, Divorced, Handlers, Not-in-family, White, Male, "
                "0, 0, 40, United-States, <=50K"]
        test_rows = ["|1x3 Cross validator",
                     "25, Private, 226802, 11th, 5, Never-married, Machine, Own-child, Black, "
                     "Male, 0, 0, 40, United-States, <=50K.",
                     "72, Private, 89814, HS-grad, 9, Married, Farming, Husband, White, Female, "
                     "0, 0, 50, United-States, >50K."]
        tr = write(tmp_path, "adult.data", "\n".join(rows) + "\n")
        te = write(tmp_path, "adult.test", "\n".join(test_rows) + "\n")
        ds = load_adult(tr, te)
        assert ds.n == 4 and list(ds.split) == ["", "", "test", "test"]
        assert list(ds.s) == [1, 0, 1, 0] and list(ds.y) == [0, 1, 0, 1]
        assert ds.X[:, ds.feature_names.index("age")].tolist() == [0, 0, 0, 1]
        assert len(ADULT_COLUMNS) == 15

    def test_compas_filters(self, tmp_path):
        header = ("id,age_cat,c_charge_degree,sex,priors_count,juv_fel_count,juv_misd_count,"
                  "race,days_b_screening_arrest,is_recid,score_text,two_year_recid")
        rows = ["1,25 - 45,F,Male,2,0,0,Caucasian,-1,1,Low,1",
                "2,Less than 25,M,Female,0,1,0,African-American,0,0,High,0",
                "3,Greater than 45,F,Male,5,0,1,Hispanic,40,1,Low,1",      # screening gap
                "4,25 - 45,O,Male,1,0,0,Caucasian,0,0,Low,0",              # ordinary traffic
                "5,25 - 45,F,Female,1,0,0,Caucasian,0,-1,Low,0",           # no recid info
                "6,25 - 45,M,Female,1,0,0,Caucasian,0,0,N/A,0",            # no score
                "7,Greater than 45,M,Male,3,2,1,Other,,0,Medium,1"]        # missing gap
        ds = load_compas(write(tmp_path, "compas.csv", header + "\n" + "\n".join(rows) + "\n"))
        assert ds.n == 2 and list(ds.s) == [1, 0] and list(ds.y) == [1, 0]
        assert ds.d == 2 + 2 + 2 + 3  # only the levels that survive the filters
