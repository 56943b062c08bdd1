"""Interaction logs, binarization, L-core filtering and dataset reports."""

from __future__ import annotations

import hashlib
import io
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import DomainError, EmptyInputError, RowError, SchemaError

_log = logging.getLogger(__name__)

FORMAT_TAG = "#recsys-evalkit v1"
SECONDS_PER_DAY = 86400


@dataclass(frozen=True, slots=True)
class Interaction:
    user_id: str
    item_id: str
    value: float
    timestamp: int | None = None

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise DomainError(f"non-finite value {self.value!r}")
        if self.timestamp is not None and self.timestamp < 0:
            raise DomainError(f"negative timestamp {self.timestamp}")


@dataclass(frozen=True)
class Schema:
    """Column mapping for delimited input.

    Columns are header names (requires ``header=True``) or 0-based positions.
    """

    user: str | int = 0
    item: str | int = 1
    rating: str | int = 2
    timestamp: str | int | None = None
    delimiter: str = "\t"
    header: bool = False

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class ParseResult:
    interactions: list[Interaction]
    skipped: int = 0

    def __len__(self):
        return len(self.interactions)


def _resolve_columns(schema: Schema, header_fields):
    cols = {}
    for key in ("user", "item", "rating", "timestamp"):
        spec = getattr(schema, key)
        if spec is None:
            continue
        if isinstance(spec, int):
            cols[key] = spec
        elif header_fields is None:
            if spec.isdigit():
                cols[key] = int(spec)
            else:
                raise SchemaError(f"column {spec!r} named but input has no header")
        else:
            try:
                cols[key] = header_fields.index(spec)
            except ValueError:
                raise SchemaError(f"missing mapped column {spec!r} (header: {header_fields})") from None
    return cols


def load_interactions(source: BinaryIO | str | Path, schema: Schema = Schema(), strict: bool = True) -> ParseResult:
    """Parse delimited text into interactions, preserving file order.

    With ``strict=False`` malformed rows are skipped and counted instead of
    raising :class:`RowError`.
    """
    if isinstance(source, (str, Path)):
        with open(source, "rb") as f:
            return load_interactions(f, schema, strict)
    text = io.TextIOWrapper(source, encoding="utf-8", errors="replace", newline="")
    lines = iter(text)
    header_fields = None
    line_no = 0
    if schema.header:
        for line in lines:
            line_no += 1
            if line.strip():
                header_fields = [h.strip() for h in line.rstrip("\r\n").split(schema.delimiter)]
                break
        if header_fields is None:
            raise EmptyInputError("empty input")
    cols = _resolve_columns(schema, header_fields)
    need = max(cols.values()) + 1
    u_col, i_col, r_col = cols["user"], cols["item"], cols["rating"]
    t_col = cols.get("timestamp")

    out = []
    skipped = 0
    seen_any = False
    for line in lines:
        line_no += 1
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        seen_any = True
        fields = line.split(schema.delimiter)
        try:
            if len(fields) < need:
                raise RowError(line_no, f"expected at least {need} fields, got {len(fields)}")
            try:
                value = float(fields[r_col])
                ts = None
                if t_col is not None:
                    raw_ts = fields[t_col].strip()
                    ts = int(raw_ts) if raw_ts.lstrip("-").isdigit() else int(float(raw_ts))
                out.append(Interaction(fields[u_col].strip(), fields[i_col].strip(), value, ts))
            except (ValueError, OverflowError) as e:
                raise RowError(line_no, str(e)) from None
        except RowError:
            if strict:
                raise
            skipped += 1
    if not seen_any:
        raise EmptyInputError("empty input")
    if skipped:
        _log.warning("skipped %d malformed rows", skipped)
    return ParseResult(out, skipped)


def binarize_threshold(scale_levels: int) -> int:
    if scale_levels < 2:
        raise DomainError(f"rating scale needs at least 2 levels, got {scale_levels}")
    return -(-4 * scale_levels // 5)


def binarize(interactions: Iterable[Interaction], scale_levels: int) -> list[Interaction]:
    """Keep interactions rated at least ``ceil(4n/5)`` on an n-level scale, as value 1."""
    threshold = binarize_threshold(scale_levels)
    return [Interaction(x.user_id, x.item_id, 1.0, x.timestamp) for x in interactions if x.value >= threshold]


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class InteractionDataset:
    """Immutable binary user x item matrix in CSR layout.

    ``user_tokens[u]`` / ``item_tokens[i]`` map dense indices back to the
    external ids. ``timestamps`` (optional) is parallel to ``indices``.
    """

    __slots__ = ("indptr", "indices", "timestamps", "user_tokens", "item_tokens", "_user_pos", "_item_pos")

    def __init__(self, indptr, indices, user_tokens, item_tokens, timestamps=None, validate=True):
        indptr = np.asarray(indptr, dtype=np.int64)
        indices = np.asarray(indices, dtype=np.int64)
        user_tokens = tuple(str(t) for t in user_tokens)
        item_tokens = tuple(str(t) for t in item_tokens)
        if timestamps is not None:
            timestamps = np.asarray(timestamps, dtype=np.int64)
        if validate:
            if len(indptr) != len(user_tokens) + 1 or indptr[0] != 0 or indptr[-1] != len(indices):
                raise DomainError("indptr inconsistent with user count / nnz")
            if np.any(np.diff(indptr) < 0):
                raise DomainError("indptr must be non-decreasing")
            if len(indices) and (indices.min() < 0 or indices.max() >= len(item_tokens)):
                raise DomainError("item index out of bounds")
            d = np.diff(indices)
            starts = indptr[1:-1]
            within = np.ones(len(d), bool)
            within[starts[(starts > 0) & (starts < len(indices))] - 1] = False
            if np.any(d[within] <= 0):
                raise DomainError("per-user item lists must be strictly increasing")
            if len(set(user_tokens)) != len(user_tokens) or len(set(item_tokens)) != len(item_tokens):
                raise DomainError("duplicate tokens")
            if timestamps is not None and len(timestamps) != len(indices):
                raise DomainError("timestamps not parallel to indices")
        self.indptr = _readonly(indptr)
        self.indices = _readonly(indices)
        self.timestamps = None if timestamps is None else _readonly(timestamps)
        self.user_tokens = user_tokens
        self.item_tokens = item_tokens
        self._user_pos = None
        self._item_pos = None

    # -- construction -----------------------------------------------------

    @classmethod
    def from_interactions(cls, interactions: Sequence[Interaction]) -> InteractionDataset:
        """Build a dataset, resolving duplicate (user, item) pairs.

        Duplicates keep the highest value, then the latest timestamp, then the
        first occurrence. Indices follow order of first appearance.
        """
        interactions = list(interactions)
        users: dict[str, int] = {}
        items: dict[str, int] = {}
        n = len(interactions)
        u = np.empty(n, np.int64)
        i = np.empty(n, np.int64)
        v = np.empty(n, np.float64)
        t = np.empty(n, np.int64)
        has_ts = n > 0 and all(x.timestamp is not None for x in interactions)
        for p, x in enumerate(interactions):
            u[p] = users.setdefault(x.user_id, len(users))
            i[p] = items.setdefault(x.item_id, len(items))
            v[p] = x.value
            t[p] = x.timestamp if x.timestamp is not None else -1
        pos = np.arange(n)
        # sort so that the preferred duplicate comes first within each (u, i)
        order = np.lexsort((pos, -t, -v, i, u))
        u, i, t = u[order], i[order], t[order]
        first = np.ones(n, bool)
        first[1:] = (u[1:] != u[:-1]) | (i[1:] != i[:-1])
        if n - first.sum():
            _log.info("resolved %d duplicate interactions", n - first.sum())
        u, i, t = u[first], i[first], t[first]
        indptr = np.zeros(len(users) + 1, np.int64)
        np.cumsum(np.bincount(u, minlength=len(users)), out=indptr[1:])
        return cls(indptr, i, list(users), list(items), t if has_ts else None, validate=False)

    @classmethod
    def from_csr(cls, matrix, user_tokens=None, item_tokens=None) -> InteractionDataset:
        m = sp.csr_matrix(matrix)
        m.sum_duplicates()
        m.sort_indices()
        m.eliminate_zeros()
        n_users, n_items = m.shape
        user_tokens = user_tokens if user_tokens is not None else [str(x) for x in range(n_users)]
        item_tokens = item_tokens if item_tokens is not None else [str(x) for x in range(n_items)]
        return cls(m.indptr, m.indices, user_tokens, item_tokens)

    # -- basic accessors --------------------------------------------------

    @property
    def n_users(self) -> int:
        return len(self.user_tokens)

    @property
    def n_items(self) -> int:
        return len(self.item_tokens)

    @property
    def n_ratings(self) -> int:
        return len(self.indices)

    @property
    def shape(self):
        return (self.n_users, self.n_items)

    def user_items(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u] : self.indptr[u + 1]]

    def user_degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def item_degrees(self) -> np.ndarray:
        return np.bincount(self.indices, minlength=self.n_items)

    def user_index(self, token: str) -> int:
        if self._user_pos is None:
            self._user_pos = {t: k for k, t in enumerate(self.user_tokens)}
        return self._user_pos[token]

    def item_index(self, token: str) -> int:
        if self._item_pos is None:
            self._item_pos = {t: k for k, t in enumerate(self.item_tokens)}
        return self._item_pos[token]

    def to_csr(self, dtype=np.float64) -> sp.csr_matrix:
        data = np.ones(self.n_ratings, dtype=dtype)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)

    def rows(self):
        return np.repeat(np.arange(self.n_users), np.diff(self.indptr))

    def __eq__(self, other):
        if not isinstance(other, InteractionDataset):
            return NotImplemented
        same_ts = (self.timestamps is None and other.timestamps is None) or (
            self.timestamps is not None
            and other.timestamps is not None
            and np.array_equal(self.timestamps, other.timestamps)
        )
        return (
            np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and self.user_tokens == other.user_tokens
            and self.item_tokens == other.item_tokens
            and same_ts
        )

    __hash__ = None

    def __repr__(self):
        return f"<InteractionDataset {self.n_users} users x {self.n_items} items, {self.n_ratings} ratings>"

    # -- sub-matrices -------------------------------------------------------

    def select(self, keep_users=None, keep_items=None) -> InteractionDataset:
        """Restrict to masked users/items, re-compacting indices in their current order."""
        keep_u = np.ones(self.n_users, bool) if keep_users is None else np.asarray(keep_users, bool)
        keep_i = np.ones(self.n_items, bool) if keep_items is None else np.asarray(keep_items, bool)
        rows = self.rows()
        edge = keep_u[rows] & keep_i[self.indices]
        new_u = np.cumsum(keep_u) - 1
        new_i = np.cumsum(keep_i) - 1
        r = new_u[rows[edge]]
        c = new_i[self.indices[edge]]
        n_u = int(keep_u.sum())
        indptr = np.zeros(n_u + 1, np.int64)
        np.cumsum(np.bincount(r, minlength=n_u), out=indptr[1:])
        ts = None if self.timestamps is None else self.timestamps[edge]
        return InteractionDataset(
            indptr,
            c,
            [t for t, k in zip(self.user_tokens, keep_u) if k],
            [t for t, k in zip(self.item_tokens, keep_i) if k],
            ts,
            validate=False,
        )

    def select_users(self, users) -> InteractionDataset:
        """Rows for `users` (in the given order); the item space is unchanged."""
        users = np.asarray(users, np.int64)
        lens = self.indptr[users + 1] - self.indptr[users]
        indptr = np.zeros(len(users) + 1, np.int64)
        np.cumsum(lens, out=indptr[1:])
        take = np.concatenate([np.arange(self.indptr[x], self.indptr[x + 1]) for x in users]) if len(users) else np.zeros(0, np.int64)
        ts = None if self.timestamps is None else self.timestamps[take]
        return InteractionDataset(
            indptr,
            self.indices[take],
            [self.user_tokens[x] for x in users],
            self.item_tokens,
            ts,
            validate=False,
        )

    def to_interactions(self) -> list[Interaction]:
        rows = self.rows()
        ts = self.timestamps
        return [
            Interaction(self.user_tokens[r], self.item_tokens[c], 1.0, None if ts is None else int(ts[p]))
            for p, (r, c) in enumerate(zip(rows, self.indices))
        ]


# ---------------------------------------------------------------------------
# filtering


def l_core(dataset: InteractionDataset, min_degree: int, backend=None) -> InteractionDataset:
    """The maximal sub-matrix where every user and item has >= `min_degree` interactions."""
    if min_degree < 1:
        raise DomainError(f"L must be >= 1, got {min_degree}")
    keep_u, keep_i = kernels.lcore_masks(dataset.indptr, dataset.indices, dataset.n_items, min_degree, backend)
    return dataset.select(keep_u, keep_i)


def single_pass_filter(dataset: InteractionDataset, min_degree: int, order: str = "user_first") -> InteractionDataset:
    """One user filter and one item filter, in the given order (not an L-core)."""
    if min_degree < 1:
        raise DomainError(f"L must be >= 1, got {min_degree}")
    if order not in ("user_first", "item_first"):
        raise DomainError(f"unknown order {order!r}")

    def by_users(d):
        return d.select(keep_users=d.user_degrees() >= min_degree)

    def by_items(d):
        return d.select(keep_items=d.item_degrees() >= min_degree)

    if order == "user_first":
        return by_items(by_users(dataset))
    return by_users(by_items(dataset))


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class DatasetStats:
    users: int
    items: int
    ratings: int
    sparsity: float
    ratings_per_item: float
    ratings_per_user: float

    def to_dict(self):
        return asdict(self)


def compute_stats(dataset: InteractionDataset) -> DatasetStats:
    if dataset.n_users == 0 or dataset.n_items == 0 or dataset.n_ratings == 0:
        raise DomainError("statistics of an empty dataset")
    n = dataset.n_ratings
    return DatasetStats(
        users=dataset.n_users,
        items=dataset.n_items,
        ratings=n,
        sparsity=n / (dataset.n_users * dataset.n_items),
        ratings_per_item=n / dataset.n_items,
        ratings_per_user=n / dataset.n_users,
    )


@dataclass(frozen=True)
class EventRate:
    per_day: float
    day_fraction: float


@dataclass(frozen=True)
class TemporalReport:
    span_days: int
    new_user: EventRate
    new_rating: EventRate
    new_item: EventRate

    def to_dict(self):
        return asdict(self)


def temporal_report(interactions: Sequence[Interaction], day_offset: int = 0, inclusive_span: bool = True) -> TemporalReport:
    """Daily arrival rates of new users, ratings and items.

    Days are UTC epoch days, ``floor((ts - day_offset) / 86400)``. The span
    counts first to last day inclusive; ``inclusive_span=False`` uses
    ``last - first`` instead.
    """
    if not interactions:
        raise EmptyInputError("no interactions")
    if any(x.timestamp is None for x in interactions):
        raise DomainError("temporal report needs a timestamp on every interaction")
    ts = np.array([x.timestamp for x in interactions], np.int64)
    days = (ts - day_offset) // SECONDS_PER_DAY
    first_day, last_day = int(days.min()), int(days.max())
    span = last_day - first_day + (1 if inclusive_span else 0)
    if span < 1:
        raise DomainError("span of zero days")

    def first_days(keys):
        seen = {}
        for k, d in zip(keys, days):
            if k not in seen or d < seen[k]:
                seen[k] = d
        return np.fromiter(seen.values(), np.int64, len(seen))

    def rate(event_days):
        return EventRate(len(event_days) / span, len(np.unique(event_days)) / span)

    return TemporalReport(
        span_days=span,
        new_user=rate(first_days(x.user_id for x in interactions)),
        new_rating=rate(days),
        new_item=rate(first_days(x.item_id for x in interactions)),
    )


# ---------------------------------------------------------------------------
# canonical on-disk format


def dumps_dataset(dataset: InteractionDataset) -> bytes:
    buf = io.StringIO()
    buf.write(f"{FORMAT_TAG} {dataset.n_users} {dataset.n_items} {dataset.n_ratings}\n")
    rows = dataset.rows()
    if dataset.timestamps is None:
        for r, c in zip(rows.tolist(), dataset.indices.tolist()):
            buf.write(f"{r}\t{c}\n")
    else:
        for r, c, t in zip(rows.tolist(), dataset.indices.tolist(), dataset.timestamps.tolist()):
            buf.write(f"{r}\t{c}\t{t}\n")
    return buf.getvalue().encode()


def loads_dataset(blob: bytes, user_tokens=None, item_tokens=None) -> InteractionDataset:
    lines = blob.decode().splitlines()
    if not lines or not lines[0].startswith(FORMAT_TAG):
        raise SchemaError("missing recsys-evalkit header")
    try:
        n_users, n_items, n_ratings = (int(x) for x in lines[0][len(FORMAT_TAG) :].split())
    except ValueError:
        raise SchemaError(f"bad header {lines[0]!r}") from None
    body = lines[1:]
    if len(body) != n_ratings:
        raise SchemaError(f"header promises {n_ratings} ratings, found {len(body)}")
    if n_ratings:
        arr = np.array([ln.split("\t") for ln in body], dtype=np.int64)
    else:
        arr = np.zeros((0, 2), np.int64)
    rows, cols = arr[:, 0], arr[:, 1]
    if np.any(np.diff(rows) < 0):
        raise SchemaError("interactions not sorted by user")
    if n_ratings and (rows.min() < 0 or rows.max() >= n_users):
        raise SchemaError("user index out of range")
    indptr = np.zeros(n_users + 1, np.int64)
    np.cumsum(np.bincount(rows, minlength=n_users), out=indptr[1:])
    ts = arr[:, 2] if arr.shape[1] > 2 else None
    user_tokens = user_tokens if user_tokens is not None else [str(x) for x in range(n_users)]
    item_tokens = item_tokens if item_tokens is not None else [str(x) for x in range(n_items)]
    return InteractionDataset(indptr, cols, user_tokens, item_tokens, ts)


def tokens_path(path) -> Path:
    return Path(str(path) + ".tokens.json")


def save_dataset(dataset: InteractionDataset, path, write_tokens: bool = True) -> None:
    """Write the canonical format, plus a ``.tokens.json`` sidecar with the external ids."""
    import json

    path = Path(path)
    path.write_bytes(dumps_dataset(dataset))
    if write_tokens:
        doc = {"users": list(dataset.user_tokens), "items": list(dataset.item_tokens)}
        tokens_path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n")


def load_dataset(path) -> InteractionDataset:
    import json

    path = Path(path)
    users = items = None
    tp = tokens_path(path)
    if tp.exists():
        doc = json.loads(tp.read_text())
        users, items = doc["users"], doc["items"]
    return loads_dataset(path.read_bytes(), users, items)


def dataset_digest(dataset: InteractionDataset) -> str:
    return hashlib.sha256(dumps_dataset(dataset)).hexdigest()
