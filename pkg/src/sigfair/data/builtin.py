"""Preprocessing specs for the Adult and COMPAS tables, plus fetch instructions."""

import hashlib

from .table import (Bin, Binarize, Drop, Dummy, Filter, PreprocessSpec, Remap, Select,
                    concat_tables, load_csv, preprocess)

ADULT_COLUMNS = (
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
)

ADULT_INSTRUCTIONS = """\
Adult: download adult.data and adult.test from the UCI repository
(https://archive.ics.uci.edu/dataset/2/adult).  Both files have no header row;
adult.test starts with one junk line, which the loader skips.  Record the
sha256 printed by the run metadata and compare it with your own copy."""

COMPAS_INSTRUCTIONS = """\
COMPAS: download compas-scores-two-years.csv from ProPublica
(https://github.com/propublica/compas-analysis).  The file has a header row."""

ADULT = PreprocessSpec(
    name="adult",
    expected_dim=112,
    rules=[
        Bin("education-num", edges=[6, 13], labels=["lt6", "6to12", "gt12"]),
        Drop(["education"]),
        Binarize("age", threshold=70),
        Remap("race", {"White": "white"}, default="non-white"),
        Remap("sex", {"Male": 1, "Female": 0}),
        Remap("income", {">50K": 1, ">50K.": 1, "<=50K": 0, "<=50K.": 0}),
        Select(label="income", sensitive="sex"),
        Dummy(),
    ],
)

COMPAS = PreprocessSpec(
    name="compas",
    expected_dim=10,
    rules=[
        Filter("days_b_screening_arrest", "between", [-30, 30]),
        Filter("is_recid", "ne", -1),
        Filter("c_charge_degree", "ne", "O"),
        Filter("score_text", "ne", "N/A"),
        Remap("race", {"Caucasian": 1}, default=0),
        Select(label="two_year_recid", sensitive="race",
               features=["age_cat", "c_charge_degree", "sex", "priors_count",
                         "juv_fel_count", "juv_misd_count"]),
        Dummy(),
    ],
)

BUILTIN = {"adult": ADULT, "compas": COMPAS}


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def load_adult(train_path, test_path):
    """Both Adult files, with the provided test rows tagged ``test``."""
    train = load_csv(train_path, names=ADULT_COLUMNS)
    test = load_csv(test_path, names=ADULT_COLUMNS, skip_rows=1)
    table = concat_tables(train, test)
    mask = [False] * train.n_rows + [True] * test.n_rows
    return preprocess(table, ADULT, test_mask=mask)


def load_compas(path):
    # "N/A" in score_text is a value the filter removes, not a missing cell
    return preprocess(load_csv(path), COMPAS)
