"""Marker and phenotype ingestion, scaling, kinship and principal components.

Everything downstream (selection criteria, the genetic algorithm, the mixed
model) consumes the types built here.  All types are immutable after
construction and every operation is a pure function of its inputs.

Conventions
-----------
* Columns are scaled by the population standard deviation (divide by ``n``),
  so the total variance of a centered/scaled matrix is ``n * m`` and
  ``K = M M' / m`` has diagonal entries averaging 1.
* Zero-variance (monomorphic) marker columns are dropped with a log message
  rather than raising: they carry no information and break scaling.
* Missing marker cells (token ``NA``) are imputed to the column mean at load
  time, before any centering.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DataError, DegenerateInputError, FormatError

logger = logging.getLogger(__name__)

MISSING_TOKEN = "NA"

# Columns whose population sd falls below this (relative to magnitude) are
# treated as zero-variance and dropped.
_ZERO_VARIANCE_TOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _check_unique_ids(ids) -> tuple:
    ids = tuple(str(i) for i in ids)
    if len(set(ids)) != len(ids):
        counts = {}
        for i in ids:
            counts[i] = counts.get(i, 0) + 1
        dup = sorted(i for i, c in counts.items() if c > 1)
        raise DataError(f"duplicate identifier(s): {', '.join(dup)}")
    return ids


@dataclass(frozen=True)
class MarkerMatrix:
    """Individuals-by-markers dosage matrix with row identifiers.

    Parameters
    ----------
    ids : sequence of str
        Unique row identifiers, one per individual.
    values : (n, m) ndarray
        Marker scores; must be finite (missingness is resolved at load time).
    marker_names : sequence of str
        Column names, one per marker.
    centered_scaled : bool
        True once columns have been centered to mean 0 and scaled to unit
        population standard deviation by :func:`center_scale`.
    """

    ids: tuple
    values: np.ndarray
    marker_names: tuple
    centered_scaled: bool = False
    _index: dict = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        ids = _check_unique_ids(self.ids)
        values = _readonly(np.atleast_2d(self.values))
        if values.shape[0] != len(ids):
            raise DataError(
                f"{len(ids)} ids but {values.shape[0]} marker rows"
            )
        names = tuple(str(n) for n in self.marker_names)
        if len(names) != values.shape[1]:
            raise DataError(
                f"{len(names)} marker names but {values.shape[1]} columns"
            )
        if len(set(names)) != len(names):
            raise DataError("duplicate marker names")
        if not np.all(np.isfinite(values)):
            raise DataError("marker matrix contains non-finite values")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "marker_names", names)
        object.__setattr__(self, "_index", {i: r for r, i in enumerate(ids)})

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def row_of(self, individual_id: str) -> int:
        try:
            return self._index[individual_id]
        except KeyError:
            raise DataError(f"unknown individual id: {individual_id!r}") from None

    def rows(self, ids) -> np.ndarray:
        """Row block for the given ids, in the given order."""
        return self.values[[self.row_of(i) for i in ids]]


@dataclass(frozen=True)
class PhenotypeVector:
    """Trait measurements aligned with individual identifiers."""

    ids: tuple
    values: np.ndarray
    trait_name: str = "trait"
    _index: dict = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        ids = _check_unique_ids(self.ids)
        values = _readonly(np.atleast_1d(self.values).ravel())
        if values.shape[0] != len(ids):
            raise DataError(f"{len(ids)} ids but {values.shape[0]} phenotype values")
        if not np.all(np.isfinite(values)):
            raise DataError("phenotype vector contains non-finite values")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_index", {i: r for r, i in enumerate(ids)})

    def __len__(self) -> int:
        return len(self.ids)

    def value_of(self, individual_id: str) -> float:
        try:
            return float(self.values[self._index[individual_id]])
        except KeyError:
            raise DataError(f"no phenotype for id: {individual_id!r}") from None

    def subset(self, ids) -> "PhenotypeVector":
        return PhenotypeVector(tuple(ids), [self.value_of(i) for i in ids],
                               self.trait_name)


@dataclass(frozen=True)
class KinshipMatrix:
    """Symmetric positive semi-definite relationship matrix with identifiers."""

    ids: tuple
    values: np.ndarray
    _index: dict = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        ids = _check_unique_ids(self.ids)
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        q = len(ids)
        if values.shape != (q, q):
            raise DataError(f"kinship shape {values.shape} does not match {q} ids")
        if not np.all(np.isfinite(values)):
            raise DataError("kinship matrix contains non-finite values")
        asym = np.max(np.abs(values - values.T), initial=0.0)
        if asym > 1e-10 * max(1.0, np.max(np.abs(values), initial=0.0)):
            raise DataError(f"kinship matrix is asymmetric (max deviation {asym:.3e})")
        values = _readonly((values + values.T) / 2.0)
        eigvals = np.linalg.eigvalsh(values)
        if eigvals[0] < -1e-8 * max(eigvals[-1], 1e-30):
            raise DataError(
                f"kinship matrix is not positive semi-definite "
                f"(min eigenvalue {eigvals[0]:.3e})"
            )
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_index", {i: r for r, i in enumerate(ids)})

    @property
    def q(self) -> int:
        return len(self.ids)

    def rows_of(self, ids) -> list:
        return [self._row_of(i) for i in ids]

    def _row_of(self, individual_id: str) -> int:
        try:
            return self._index[individual_id]
        except KeyError:
            raise DataError(f"unknown individual id: {individual_id!r}") from None

    def block(self, row_ids, col_ids) -> np.ndarray:
        return self.values[np.ix_(self.rows_of(row_ids), self.rows_of(col_ids))]

    def subset(self, ids) -> "KinshipMatrix":
        idx = self.rows_of(ids)
        return KinshipMatrix(tuple(ids), self.values[np.ix_(idx, idx)])


@dataclass(frozen=True)
class PCBasis:
    """Principal-component scores of a marker matrix.

    ``scores`` holds the first ``k`` left singular vectors scaled by their
    singular values, so ``scores @ scores.T`` approximates ``M @ M.T`` with
    error decreasing in ``k`` (exact at ``k = rank(M)``).
    ``explained_variance`` holds the corresponding eigenvalues of ``M @ M.T``.
    """

    ids: tuple
    scores: np.ndarray
    explained_variance: np.ndarray
    _index: dict = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        ids = _check_unique_ids(self.ids)
        scores = _readonly(np.atleast_2d(self.scores))
        ev = _readonly(np.atleast_1d(self.explained_variance).ravel())
        if scores.shape[0] != len(ids):
            raise DataError(f"{len(ids)} ids but {scores.shape[0]} score rows")
        if ev.shape[0] != scores.shape[1]:
            raise DataError("explained_variance length does not match k")
        if np.any(np.diff(ev) > 1e-8 * max(ev[0] if ev.size else 0.0, 1e-30)):
            raise DataError("explained_variance must be nonincreasing")
        gram = scores.T @ scores
        norms = np.sqrt(np.diag(gram))
        off = np.abs(gram - np.diag(np.diag(gram)))
        scale = np.outer(norms, norms) + 1.0
        if np.max(off / scale, initial=0.0) > 1e-8:
            raise DataError("score columns are not mutually orthogonal")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "explained_variance", ev)
        object.__setattr__(self, "_index", {i: r for r, i in enumerate(ids)})

    @property
    def k(self) -> int:
        return self.scores.shape[1]

    def rows(self, ids) -> np.ndarray:
        try:
            return self.scores[[self._index[i] for i in ids]]
        except KeyError as exc:
            raise DataError(f"unknown individual id: {exc.args[0]!r}") from None


@dataclass(frozen=True)
class PopulationPartition:
    """Disjoint candidate/test id sets, plus the chosen training ids once known."""

    candidate_ids: tuple
    test_ids: tuple
    train_ids: tuple = None

    def __post_init__(self):
        cand = _check_unique_ids(self.candidate_ids)
        test = _check_unique_ids(self.test_ids)
        if not cand:
            raise ContractError("candidate set is empty")
        if not test:
            raise ContractError("test set is empty")
        overlap = set(cand) & set(test)
        if overlap:
            raise ContractError(
                f"candidate and test sets overlap: {sorted(overlap)}"
            )
        object.__setattr__(self, "candidate_ids", cand)
        object.__setattr__(self, "test_ids", test)
        if self.train_ids is not None:
            train = _check_unique_ids(self.train_ids)
            if not set(train) <= set(cand):
                raise ContractError("train_ids must be a subset of candidate_ids")
            object.__setattr__(self, "train_ids", train)

    @property
    def n_candidates(self) -> int:
        return len(self.candidate_ids)

    @property
    def n_test(self) -> int:
        return len(self.test_ids)

    def with_train(self, train_ids) -> "PopulationPartition":
        return PopulationPartition(self.candidate_ids, self.test_ids,
                                   tuple(train_ids))


class PhenotypeTable:
    """All trait columns of a phenotype file, with optional year metadata."""

    def __init__(self, ids, columns, years=None):
        self.ids = _check_unique_ids(ids)
        self.columns = {str(k): np.asarray(v, dtype=float) for k, v in columns.items()}
        for name, col in self.columns.items():
            if col.shape[0] != len(self.ids):
                raise DataError(f"trait {name!r} length does not match ids")
        self.years = dict(years) if years is not None else None

    @property
    def trait_names(self) -> tuple:
        return tuple(self.columns)

    def trait(self, name: str) -> PhenotypeVector:
        """Phenotype vector for one trait, dropping individuals with missing values."""
        if name not in self.columns:
            raise DataError(f"unknown trait: {name!r}")
        col = self.columns[name]
        keep = np.isfinite(col)
        ids = tuple(i for i, k in zip(self.ids, keep) if k)
        return PhenotypeVector(ids, col[keep], trait_name=name)


def _parse_cell(raw: str, line_no: int, col_no: int, col_name: str) -> float:
    cell = raw.strip()
    if cell == MISSING_TOKEN:
        return np.nan
    try:
        return float(cell)
    except ValueError:
        raise DataError(
            f"non-numeric value {cell!r} at line {line_no}, column {col_no} "
            f"({col_name})"
        ) from None


def load_markers(path, headerless: bool = False) -> MarkerMatrix:
    """Read a marker file into a :class:`MarkerMatrix`.

    Two formats are supported:

    * default: CSV with a header row whose first column is ``id`` and whose
      remaining columns name the markers; missing cells use the token ``NA``;
    * ``headerless=True``: whitespace-delimited rows of ``id v1 ... vm`` with
      marker names generated as ``m0001``, ``m0002``, ...

    Missing cells are imputed to the mean of the column's observed values.
    Zero-variance columns are reported to the log; they are dropped later by
    :func:`center_scale`.
    """
    ids, rows = [], []
    if headerless:
        names = None
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                fields = line.split()
                if not fields:
                    continue
                if len(fields) < 2:
                    raise FormatError(
                        f"{path}: line {line_no} has no marker values"
                    )
                if names is None:
                    width = len(str(len(fields) - 1))
                    names = [f"m{j:0{max(width, 4)}d}" for j in range(1, len(fields))]
                if len(fields) - 1 != len(names):
                    raise FormatError(
                        f"{path}: line {line_no} has {len(fields) - 1} values, "
                        f"expected {len(names)} (column count mismatch)"
                    )
                ids.append(fields[0])
                rows.append([_parse_cell(c, line_no, j + 2, names[j])
                             for j, c in enumerate(fields[1:])])
    else:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise FormatError(f"{path}: empty file (line 1, column 1)") from None
            if not header or header[0].strip().lower() != "id":
                raise FormatError(
                    f"{path}: line 1, column 1 must be 'id', got "
                    f"{(header[0] if header else '')!r}"
                )
            names = [h.strip() for h in header[1:]]
            if not names:
                raise FormatError(f"{path}: header declares no marker columns")
            for line_no, fields in enumerate(reader, start=2):
                if not fields:
                    continue
                if len(fields) != len(names) + 1:
                    raise FormatError(
                        f"{path}: line {line_no} has {len(fields)} fields, "
                        f"expected {len(names) + 1}"
                    )
                ids.append(fields[0].strip())
                rows.append([_parse_cell(c, line_no, j + 2, names[j])
                             for j, c in enumerate(fields[1:])])
    if not rows:
        raise FormatError(f"{path}: no data rows")

    values = np.array(rows, dtype=float)
    # Impute missing cells to the column mean of the observed entries.
    for j in range(values.shape[1]):
        col = values[:, j]
        missing = np.isnan(col)
        if missing.any():
            if missing.all():
                raise DataError(
                    f"{path}: marker {names[j]!r} has no observed values"
                )
            col[missing] = col[~missing].mean()

    zero_var = [names[j] for j in range(values.shape[1])
                if np.std(values[:, j]) <= _ZERO_VARIANCE_TOL]
    if zero_var:
        logger.info("zero-variance markers (will be dropped at scaling): %s",
                    ", ".join(zero_var))
    return MarkerMatrix(tuple(ids), values, tuple(names), centered_scaled=False)


def load_phenotypes(path, year_column: str = "year") -> PhenotypeTable:
    """Read a phenotype CSV (columns: ``id``, one per trait).

    A column whose name equals ``year_column`` (case-insensitive) is treated
    as temporal metadata, not a trait.  Missing trait cells use ``NA`` and
    simply exclude that individual from the trait's vector.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file (line 1, column 1)") from None
        if not header or header[0].strip().lower() != "id":
            raise FormatError(f"{path}: line 1, column 1 must be 'id'")
        names = [h.strip() for h in header[1:]]
        if not names:
            raise FormatError(f"{path}: header declares no trait columns")
        ids, rows = [], []
        for line_no, fields in enumerate(reader, start=2):
            if not fields:
                continue
            if len(fields) != len(names) + 1:
                raise FormatError(
                    f"{path}: line {line_no} has {len(fields)} fields, "
                    f"expected {len(names) + 1}"
                )
            ids.append(fields[0].strip())
            rows.append([_parse_cell(c, line_no, j + 2, names[j])
                         for j, c in enumerate(fields[1:])])
    if not rows:
        raise FormatError(f"{path}: no data rows")
    data = np.array(rows, dtype=float)

    years = None
    columns = {}
    for j, name in enumerate(names):
        if name.lower() == year_column.lower():
            col = data[:, j]
            if not np.all(np.isfinite(col)):
                raise DataError(f"{path}: missing year values are not allowed")
            years = {i: int(v) for i, v in zip(ids, col)}
        else:
            columns[name] = data[:, j]
    return PhenotypeTable(tuple(ids), columns, years=years)


def center_scale(M: MarkerMatrix) -> MarkerMatrix:
    """Center each column to mean 0 and scale to unit population sd.

    Zero-variance columns are dropped and reported to the log.  Raises
    :class:`DegenerateInputError` when every column is constant and
    :class:`ContractError` when ``M`` is already centered/scaled.
    """
    if M.centered_scaled:
        raise ContractError("marker matrix is already centered and scaled")
    means = M.values.mean(axis=0)
    sds = M.values.std(axis=0)  # population convention (divide by n)
    keep = sds > _ZERO_VARIANCE_TOL * np.maximum(1.0, np.abs(means))
    if not keep.any():
        raise DegenerateInputError("all marker columns have zero variance")
    dropped = [n for n, k in zip(M.marker_names, keep) if not k]
    if dropped:
        logger.info("dropped %d zero-variance marker(s): %s",
                    len(dropped), ", ".join(dropped))
    scaled = (M.values[:, keep] - means[keep]) / sds[keep]
    kept_names = tuple(n for n, k in zip(M.marker_names, keep) if k)
    return MarkerMatrix(M.ids, scaled, kept_names, centered_scaled=True)


def kinship(M: MarkerMatrix) -> KinshipMatrix:
    """Additive relationship matrix ``M @ M.T / m`` from centered/scaled markers."""
    if not M.centered_scaled:
        raise ContractError("kinship requires a centered and scaled marker matrix")
    if M.m < 1:
        raise ContractError("kinship requires at least one marker column")
    K = M.values @ M.values.T / M.m
    return KinshipMatrix(M.ids, (K + K.T) / 2.0)


def _deterministic_signs(scores: np.ndarray) -> np.ndarray:
    """Flip score columns so the entry of largest magnitude is positive."""
    out = np.array(scores, copy=True)
    for j in range(out.shape[1]):
        col = out[:, j]
        if col.size and col[np.argmax(np.abs(col))] < 0:
            out[:, j] = -col
    return out


def choose_component_count(explained_variance, n_rows: int,
                           target: float = 0.9, cap: int = 200) -> int:
    """Smallest k explaining ``target`` of total variance, capped at min(n_rows, cap)."""
    ev = np.asarray(explained_variance, dtype=float)
    total = float(ev.sum())
    if total <= 0:
        return 1
    k = int(np.searchsorted(np.cumsum(ev), target * total) + 1)
    return max(1, min(k, n_rows, cap))


def principal_components(M: MarkerMatrix, k: int = None,
                         method: str = "auto") -> PCBasis:
    """First ``k`` principal-component scores of a centered/scaled marker matrix.

    Parameters
    ----------
    M : MarkerMatrix
        Centered and scaled markers.
    k : int, optional
        Component count, ``1 <= k <= min(n, m)``.  When omitted, the smallest
        k explaining at least 90% of the marker variance is used, capped at
        ``min(n, 200)``.
    method : {"auto", "svd", "gram"}
        "svd" decomposes ``M`` directly; "gram" eigendecomposes ``M @ M.T``.
        Both give identical scores up to roundoff; "auto" picks "svd" unless
        the marker count is very large.

    Returns
    -------
    PCBasis
        Scores (left singular vectors scaled by singular values) and the
        eigenvalues of ``M @ M.T`` as explained variance.
    """
    if not M.centered_scaled:
        raise ContractError("principal components require centered/scaled markers")
    if method not in ("auto", "svd", "gram"):
        raise ContractError(f"unknown method: {method!r}")
    if method == "auto":
        method = "svd" if M.m <= 4096 else "gram"

    if method == "svd":
        u, s, _ = np.linalg.svd(M.values, full_matrices=False)
        ev_full = s ** 2
        scores_full = u * s
    else:
        G = M.values @ M.values.T
        w, v = np.linalg.eigh((G + G.T) / 2.0)
        order = np.argsort(w)[::-1]
        ev_full = np.clip(w[order], 0.0, None)
        scores_full = v[:, order] * np.sqrt(ev_full)

    k_max = min(M.n, M.m)
    if k is None:
        k = choose_component_count(ev_full, M.n)
    if not 1 <= k <= k_max:
        raise ContractError(f"k={k} out of range [1, {k_max}]")
    scores = _deterministic_signs(scores_full[:, :k])
    return PCBasis(M.ids, scores, ev_full[:k])


def partition(M: MarkerMatrix, test_ids, candidate_ids) -> PopulationPartition:
    """Validate candidate/test id sets against a marker matrix.

    Every id must be present in ``M`` and the two sets must be disjoint and
    nonempty.  Row blocks of ``M`` or of any :class:`PCBasis` over the same
    ids are then addressable through the returned partition.
    """
    for i in tuple(test_ids) + tuple(candidate_ids):
        M.row_of(str(i))  # raises DataError for unknown ids
    return PopulationPartition(tuple(candidate_ids), tuple(test_ids))
