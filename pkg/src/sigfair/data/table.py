"""CSV ingestion and the rule pipeline that turns a raw table into a Dataset."""

import csv
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset

MISSING = ("", "?")


class PreprocessError(ValueError):
    pass


@dataclass
class RawTable:
    columns: list
    kinds: dict
    cells: dict

    @property
    def n_rows(self):
        return len(self.cells[self.columns[0]]) if self.columns else 0

    def take(self, rows):
        return RawTable(list(self.columns), dict(self.kinds),
                        {c: self.cells[c][rows] for c in self.columns})


def _to_float(cell):
    try:
        return float(cell)
    except ValueError:
        return None


def load_csv(path, kinds=None, names=None, skip_rows=0, missing=MISSING):
    """Read a comma-separated file into a :class:`RawTable`.

    The first line is the header unless ``names`` is given.  A column whose
    every non-missing cell parses as a number is numeric, otherwise
    categorical; ``kinds`` overrides the inference per column.  Missing
    cells become NaN (numeric) or None (categorical).
    """
    kinds = dict(kinds or {})
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, skipinitialspace=True)
        for _ in range(skip_rows):
            next(reader, None)
        if names is None:
            header = next(reader, None)
            if header is None:
                raise PreprocessError(f"{path}: empty file, no header row")
            header = [h.strip() for h in header]
        else:
            header = list(names)
        rows = []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise PreprocessError(
                    f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}")
            rows.append([c.strip() for c in row])
    cols = list(zip(*rows)) if rows else [()] * len(header)
    cells, out_kinds = {}, {}
    for name, raw in zip(header, cols):
        present = [c for c in raw if c not in missing]
        parsed = [_to_float(c) for c in present]
        kind = kinds.get(name)
        if kind is None:
            kind = "numeric" if all(p is not None for p in parsed) else "categorical"
        if kind == "numeric":
            vals = np.full(len(raw), np.nan)
            for i, c in enumerate(raw):
                if c not in missing:
                    v = _to_float(c)
                    if v is None:
                        raise PreprocessError(f"{path}: column {name!r} has non-numeric cell {c!r}")
                    vals[i] = v
        elif kind == "categorical":
            vals = np.array([None if c in missing else c for c in raw], dtype=object)
        else:
            raise PreprocessError(f"unknown column kind {kind!r} for {name!r}")
        cells[name] = vals
        out_kinds[name] = kind
    return RawTable(header, out_kinds, cells)


def concat_tables(first, second):
    if first.columns != second.columns:
        raise PreprocessError("tables have different columns")
    kinds, cells = {}, {}
    for c in first.columns:
        if first.kinds[c] == second.kinds[c]:
            kinds[c] = first.kinds[c]
            cells[c] = np.concatenate([first.cells[c], second.cells[c]])
        else:
            # one side inferred numeric, the other categorical: fall back to text
            kinds[c] = "categorical"
            cells[c] = np.concatenate([_as_text(first.cells[c]), _as_text(second.cells[c])])
    return RawTable(list(first.columns), kinds, cells)


def _as_text(col):
    if col.dtype == object:
        return col
    return np.array([None if np.isnan(v) else _fmt(v) for v in col], dtype=object)


def _fmt(v):
    return str(int(v)) if float(v).is_integer() else repr(float(v))


# --- rules -------------------------------------------------------------------

@dataclass
class Bin:
    """Replace a numeric column by interval labels on ``[e_{i-1}, e_i)``."""
    column: str
    edges: list
    labels: list
    kind = "bin"


@dataclass
class Binarize:
    """Numeric column becomes ``1.0`` where ``value > threshold``, else ``0.0``."""
    column: str
    threshold: float
    kind = "binarize"


@dataclass
class Remap:
    column: str
    mapping: dict
    default: object = None
    kind = "remap"


@dataclass
class Filter:
    """Keep rows where ``column <op> value`` holds."""
    column: str
    op: str
    value: object
    kind = "filter"


@dataclass
class Drop:
    columns: list
    kind = "drop"


@dataclass
class Select:
    label: str
    sensitive: str
    features: list = None
    kind = "select"


@dataclass
class Dummy:
    kind = "dummy"


RULES = {cls.kind: cls for cls in (Bin, Binarize, Remap, Filter, Drop, Select, Dummy)}
FILTER_OPS = ("eq", "ne", "lt", "le", "gt", "ge", "between", "in", "not_in")


@dataclass
class PreprocessSpec:
    name: str
    rules: list
    expected_dim: int = None
    notes: list = field(default_factory=list)


def _require(state, rule, col):
    if col not in state["cells"]:
        raise PreprocessError(f"rule {rule!r}: no column named {col!r}")


def _filter_mask(col, kind, op, value):
    if op not in FILTER_OPS:
        raise PreprocessError(f"unknown filter op {op!r}; choose from {FILTER_OPS}")
    if kind == "numeric":
        x = col.astype(np.float64)
        with np.errstate(invalid="ignore"):
            if op == "between":
                lo, hi = value
                return (x >= lo) & (x <= hi)
            if op in ("in", "not_in"):
                hit = np.isin(x, np.asarray(value, dtype=np.float64))
                return hit if op == "in" else ~hit & ~np.isnan(x)
            v = float(value)
            return {"eq": x == v, "ne": (x != v) & ~np.isnan(x), "lt": x < v, "le": x <= v,
                    "gt": x > v, "ge": x >= v}[op]
    present = np.array([c is not None for c in col])
    if op == "eq":
        return np.array([c == str(value) for c in col])
    if op == "ne":
        return present & np.array([c != str(value) for c in col])
    if op in ("in", "not_in"):
        vals = {str(v) for v in value}
        hit = np.array([c in vals for c in col])
        return hit if op == "in" else present & ~hit
    raise PreprocessError(f"filter op {op!r} needs a numeric column")


def _binary(values, name, role):
    v = np.asarray(values)
    if v.dtype == object:
        try:
            v = np.array([float(c) for c in v])
        except (TypeError, ValueError):
            raise PreprocessError(f"{role} column {name!r} is not binary; remap it to 0/1") from None
    v = v.astype(np.float64)
    if not np.all(np.isin(v, (0.0, 1.0))):
        raise PreprocessError(f"{role} column {name!r} has values outside {{0, 1}}")
    return v.astype(np.int8)


def preprocess(table, spec, test_mask=None):
    """Apply ``spec.rules`` in order and assemble an unsplit :class:`Dataset`.

    Filters remove rows; every other rule keeps the row count.  The single
    ``select`` rule fixes label, sensitive attribute and feature columns and
    drops rows with a missing value in any of them.  ``test_mask`` marks rows
    that belong to a provided test partition.
    """
    state = {"columns": list(table.columns), "kinds": dict(table.kinds),
             "cells": {c: table.cells[c].copy() for c in table.columns}}
    n = table.n_rows
    tags = np.full(n, "", dtype="<U5")
    if test_mask is not None:
        tags[np.asarray(test_mask, dtype=bool)] = "test"
    notes = []
    selected = None

    def keep_rows(mask):
        nonlocal tags
        for c in state["columns"]:
            state["cells"][c] = state["cells"][c][mask]
        tags = tags[mask]

    for rule in spec.rules:
        if isinstance(rule, Bin):
            _require(state, rule, rule.column)
            if state["kinds"][rule.column] != "numeric":
                raise PreprocessError(f"rule {rule!r}: column must be numeric")
            if len(rule.labels) != len(rule.edges) + 1:
                raise PreprocessError(f"rule {rule!r}: need len(edges) + 1 labels")
            x = state["cells"][rule.column]
            idx = np.searchsorted(np.asarray(rule.edges, dtype=np.float64), x, side="right")
            state["cells"][rule.column] = np.array(
                [None if np.isnan(v) else rule.labels[i] for v, i in zip(x, idx)], dtype=object)
            state["kinds"][rule.column] = "categorical"
        elif isinstance(rule, Binarize):
            _require(state, rule, rule.column)
            if state["kinds"][rule.column] != "numeric":
                raise PreprocessError(f"rule {rule!r}: column must be numeric")
            x = state["cells"][rule.column]
            with np.errstate(invalid="ignore"):
                state["cells"][rule.column] = np.where(np.isnan(x), np.nan, (x > rule.threshold) * 1.0)
        elif isinstance(rule, Remap):
            _require(state, rule, rule.column)
            col = state["cells"][rule.column]
            if state["kinds"][rule.column] == "numeric":
                col = _as_text(col)
            mapping = {str(k): v for k, v in rule.mapping.items()}
            out = []
            for c in col:
                if c is None:
                    out.append(None)
                elif c in mapping:
                    out.append(mapping[c])
                elif rule.default is not None:
                    out.append(rule.default)
                else:
                    out.append(c)
            if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in out if v is not None):
                state["cells"][rule.column] = np.array(
                    [np.nan if v is None else float(v) for v in out])
                state["kinds"][rule.column] = "numeric"
            else:
                state["cells"][rule.column] = np.array(
                    [None if v is None else str(v) for v in out], dtype=object)
                state["kinds"][rule.column] = "categorical"
        elif isinstance(rule, Filter):
            _require(state, rule, rule.column)
            keep_rows(_filter_mask(state["cells"][rule.column], state["kinds"][rule.column],
                                   rule.op, rule.value))
        elif isinstance(rule, Drop):
            for c in rule.columns:
                _require(state, rule, c)
                state["columns"].remove(c)
                del state["cells"][c], state["kinds"][c]
        elif isinstance(rule, Select):
            if selected is not None:
                raise PreprocessError("only one select rule is allowed")
            for c in (rule.label, rule.sensitive, *(rule.features or ())):
                _require(state, rule, c)
            feats = list(rule.features) if rule.features else [
                c for c in state["columns"] if c not in (rule.label, rule.sensitive)]
            used = [rule.label, rule.sensitive] + feats
            missing = np.zeros(len(tags), dtype=bool)
            for c in used:
                col = state["cells"][c]
                missing |= (np.isnan(col) if state["kinds"][c] == "numeric"
                            else np.array([v is None for v in col], dtype=bool))
            if missing.any():
                notes.append(f"dropped {int(missing.sum())} rows with missing values")
            state["columns"] = used
            state["cells"] = {c: state["cells"][c] for c in used}
            state["kinds"] = {c: state["kinds"][c] for c in used}
            keep_rows(~missing)
            selected = rule
        elif isinstance(rule, Dummy):
            protected = () if selected is None else (selected.label, selected.sensitive)
            new_cols = []
            for c in state["columns"]:
                if state["kinds"][c] != "categorical" or c in protected:
                    new_cols.append(c)
                    continue
                col = state["cells"][c]
                levels = sorted({v for v in col if v is not None})
                for lvl in levels:
                    name = f"{c}={lvl}"
                    state["cells"][name] = np.array(
                        [np.nan if v is None else float(v == lvl) for v in col])
                    state["kinds"][name] = "numeric"
                    new_cols.append(name)
                del state["cells"][c], state["kinds"][c]
            state["columns"] = new_cols
        else:
            raise PreprocessError(f"unknown rule {rule!r}")

    if selected is None:
        raise PreprocessError("preprocessing spec has no select rule")
    s = _binary(state["cells"][selected.sensitive], selected.sensitive, "sensitive")
    y = _binary(state["cells"][selected.label], selected.label, "label")
    feats = [c for c in state["columns"] if c not in (selected.label, selected.sensitive)]
    for c in feats:
        if state["kinds"][c] != "numeric":
            raise PreprocessError(f"feature column {c!r} is categorical; add a dummy rule")
    X = (np.column_stack([state["cells"][c] for c in feats]) if feats
         else np.zeros((len(tags), 0)))
    if spec.expected_dim is not None and X.shape[1] != spec.expected_dim:
        notes.append(f"feature dimension {X.shape[1]} differs from reference {spec.expected_dim}")
    return Dataset(X=X.astype(np.float64), s=s, y=y, split=tags,
                   feature_names=feats, notes=notes)


# --- TOML specs --------------------------------------------------------------

def spec_from_dict(d):
    rules = []
    for i, r in enumerate(d.get("rules", [])):
        r = dict(r)
        kind = r.pop("kind", None)
        if kind not in RULES:
            raise PreprocessError(f"rule #{i}: unknown kind {kind!r}; choose from {sorted(RULES)}")
        try:
            rules.append(RULES[kind](**r))
        except TypeError as exc:
            raise PreprocessError(f"rule #{i} ({kind}): {exc}") from None
    return PreprocessSpec(name=d.get("name", "custom"), rules=rules,
                          expected_dim=d.get("expected_dim"))


def load_spec(path):
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return spec_from_dict(tomllib.load(fh))
