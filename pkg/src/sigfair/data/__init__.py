"""Tabular ingestion, preprocessing, splitting and synthetic data."""

from .builtin import (ADULT, ADULT_COLUMNS, ADULT_INSTRUCTIONS, BUILTIN, COMPAS,
                      COMPAS_INSTRUCTIONS, file_sha256, load_adult, load_compas)
from .dataset import (SPLITS, Dataset, SplitError, load_dataset, save_dataset, split,
                      standardize)
from .synth import SynthSpec, generate_synthetic
from .table import (FILTER_OPS, RULES, Bin, Binarize, Drop, Dummy, Filter, PreprocessError,
                    PreprocessSpec, RawTable, Remap, Select, concat_tables, load_csv,
                    load_spec, preprocess, spec_from_dict)

__all__ = [
    "ADULT", "ADULT_COLUMNS", "ADULT_INSTRUCTIONS", "BUILTIN", "COMPAS", "COMPAS_INSTRUCTIONS",
    "Bin", "Binarize", "Dataset", "Drop", "Dummy", "FILTER_OPS", "Filter", "PreprocessError",
    "PreprocessSpec", "RULES", "RawTable", "Remap", "SPLITS", "Select", "SplitError",
    "SynthSpec", "concat_tables", "file_sha256", "generate_synthetic", "load_adult",
    "load_compas", "load_csv", "load_dataset", "load_spec", "preprocess", "save_dataset",
    "spec_from_dict", "split", "standardize",
]
