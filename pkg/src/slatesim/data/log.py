"""Interaction-log dataset: canonical container, text parsing, binary round trip."""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..core import (
    BehaviorSchema, InteractionRecord, ItemCatalog, UserCatalog,
    KUAIRAND_SCHEMA, ML1M_SCHEMA, MS_PER_DAY,
)


@dataclass(frozen=True)
class Sessions:
    """Per-(user, date) contiguous record ranges, ordered by user then time."""

    user: np.ndarray   # [S] int32
    start: np.ndarray  # [S] int64, inclusive
    end: np.ndarray    # [S] int64, exclusive
    date: np.ndarray   # [S] int32

    @property
    def n_sessions(self) -> int:
        return int(self.user.shape[0])

    def sizes(self) -> np.ndarray:
        return self.end - self.start


@dataclass(frozen=True)
class LogDataset:
    """Time-ordered interaction records plus user/item catalogs.

    Records are sorted by (user index, timestamp); `user_offsets[u]` marks the
    first record of user u, so per-user slices are contiguous.
    """

    users: UserCatalog
    items: ItemCatalog
    schema: BehaviorSchema
    user_idx: np.ndarray    # [N] int32
    item_idx: np.ndarray    # [N] int32
    timestamps: np.ndarray  # [N] int64, milliseconds
    dates: np.ndarray       # [N] int32
    behaviors: np.ndarray   # [N, b] int8
    user_offsets: np.ndarray  # [n_users + 1] int64
    sessions: Sessions | None = None

    @property
    def n_records(self) -> int:
        return int(self.user_idx.shape[0])

    def record(self, i: int) -> InteractionRecord:
        return InteractionRecord(
            user_id=int(self.users.ids[self.user_idx[i]]),
            item_id=int(self.items.ids[self.item_idx[i]]),
            timestamp=int(self.timestamps[i]),
            date=int(self.dates[i]),
            behaviors=self.behaviors[i].copy(),
        )

    def user_slice(self, u: int) -> slice:
        return slice(int(self.user_offsets[u]), int(self.user_offsets[u + 1]))

    def with_sessions(self, sessions: Sessions) -> "LogDataset":
        return replace(self, sessions=sessions)


def _compute_offsets(user_idx: np.ndarray, n_users: int) -> np.ndarray:
    counts = np.bincount(user_idx, minlength=n_users)
    offsets = np.zeros(n_users + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return offsets


def build_dataset(user_ids, item_ids, timestamps, dates, behaviors,
                  schema: BehaviorSchema,
                  user_features: np.ndarray | None = None,
                  item_features: np.ndarray | None = None,
                  user_id_order: np.ndarray | None = None,
                  item_id_order: np.ndarray | None = None) -> LogDataset:
    """Re-index raw id arrays to contiguous integers and sort by (user, time).

    `user_id_order` / `item_id_order` fix the catalog id ordering (and must
    cover all observed ids); by default catalogs use sorted unique ids.
    Feature matrices, when given, are aligned with that ordering.
    """
    user_ids = np.asarray(user_ids, dtype=np.int64)
    item_ids = np.asarray(item_ids, dtype=np.int64)
    if user_ids.size == 0:
        raise ValueError("empty record set")

    uniq_users = np.unique(user_ids) if user_id_order is None else np.asarray(user_id_order, dtype=np.int64)
    uniq_items = np.unique(item_ids) if item_id_order is None else np.asarray(item_id_order, dtype=np.int64)
    user_idx = np.searchsorted(uniq_users, user_ids).astype(np.int32)
    item_idx = np.searchsorted(uniq_items, item_ids).astype(np.int32)
    if np.any(uniq_users[user_idx] != user_ids) or np.any(uniq_items[item_idx] != item_ids):
        raise ValueError("id order does not cover all observed ids")

    if user_features is None:
        user_features = np.ones((uniq_users.shape[0], 1), dtype=np.float32)
    if item_features is None:
        item_features = np.ones((uniq_items.shape[0], 1), dtype=np.float32)

    timestamps = np.asarray(timestamps, dtype=np.int64)
    dates = np.asarray(dates, dtype=np.int32)
    behaviors = np.asarray(behaviors, dtype=np.int8)
    if behaviors.shape != (user_ids.shape[0], schema.b):
        raise ValueError("behavior matrix shape does not match the schema")

    order = np.lexsort((timestamps, user_idx))
    user_idx = user_idx[order]
    return LogDataset(
        users=UserCatalog(ids=uniq_users, dense_features=np.asarray(user_features, dtype=np.float32)),
        items=ItemCatalog(ids=uniq_items, item_features=np.asarray(item_features, dtype=np.float32)),
        schema=schema,
        user_idx=user_idx,
        item_idx=item_idx[order],
        timestamps=timestamps[order],
        dates=dates[order],
        behaviors=behaviors[order],
        user_offsets=_compute_offsets(user_idx, uniq_users.shape[0]),
    )


@dataclass(frozen=True)
class ColumnSpec:
    """Column naming for delimiter-separated interaction logs."""

    user_col: str = "user_id"
    item_col: str = "video_id"
    time_col: str = "time_ms"
    date_col: str | None = "date"
    behavior_cols: tuple[str, ...] = KUAIRAND_SCHEMA.names
    schema: BehaviorSchema = KUAIRAND_SCHEMA
    delimiter: str = ","
    # Rating-log adaptation: a rating column maps to like/hate around the threshold.
    rating_col: str | None = None
    rating_threshold: float = 3.0

    def __post_init__(self):
        if self.rating_col is None and len(self.behavior_cols) != self.schema.b:
            raise ValueError("behavior_cols must match the schema length")


KUAIRAND_COLUMNS = ColumnSpec(
    behavior_cols=("is_click", "long_view", "is_like", "is_comment",
                   "is_follow", "is_forward", "is_hate"),
)

ML1M_COLUMNS = ColumnSpec(
    user_col="user_id", item_col="movie_id", time_col="timestamp",
    date_col=None, behavior_cols=(), schema=ML1M_SCHEMA,
    rating_col="rating", rating_threshold=3.0, delimiter=",",
)


@dataclass(frozen=True)
class ParseResult:
    dataset: LogDataset
    skipped_rows: int


def parse_log(path, columns: ColumnSpec | None = None,
              user_features: dict[int, np.ndarray] | None = None) -> ParseResult:
    """Parse a delimiter-separated log with a header row into a LogDataset.

    Malformed rows (bad numbers, wrong field count) are skipped and counted.
    The date key comes from the date column when present, else from
    floor(timestamp / ms-per-day). Optional `user_features` maps original
    user ids to dense vectors; users without an entry get zeros.
    """
    spec = columns or KUAIRAND_COLUMNS
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=spec.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        col = {name: i for i, name in enumerate(header)}

        needed = [spec.user_col, spec.item_col, spec.time_col]
        if spec.rating_col is not None:
            needed.append(spec.rating_col)
        else:
            needed.extend(spec.behavior_cols)
        if spec.date_col is not None:
            needed.append(spec.date_col)
        missing = [c for c in needed if c not in col]
        if missing:
            raise ValueError(f"missing mandatory columns: {missing}")

        users, items, times, dates, rows = [], [], [], [], []
        skipped = 0
        b = spec.schema.b
        for raw in reader:
            try:
                user = int(raw[col[spec.user_col]])
                item = int(raw[col[spec.item_col]])
                ts = int(raw[col[spec.time_col]])
                if spec.date_col is not None:
                    date = int(raw[col[spec.date_col]])
                else:
                    date = ts // MS_PER_DAY
                if spec.rating_col is not None:
                    rating = float(raw[col[spec.rating_col]])
                    bits = np.zeros(b, dtype=np.int8)
                    if rating > spec.rating_threshold:
                        bits[spec.schema.index("like")] = 1
                    else:
                        bits[spec.schema.index("hate")] = 1
                else:
                    bits = np.array(
                        [1 if int(raw[col[c]]) != 0 else 0 for c in spec.behavior_cols],
                        dtype=np.int8)
            except (ValueError, IndexError):
                skipped += 1
                continue
            users.append(user)
            items.append(item)
            times.append(ts)
            dates.append(date)
            rows.append(bits)

    if not rows:
        raise ValueError(f"{path} contains no parseable rows")

    behaviors = np.stack(rows)
    uniq = np.unique(np.asarray(users, dtype=np.int64))
    feats = None
    if user_features is not None:
        dim = len(next(iter(user_features.values())))
        feats = np.zeros((uniq.shape[0], dim), dtype=np.float32)
        for i, uid in enumerate(uniq):
            vec = user_features.get(int(uid))
            if vec is not None:
                feats[i] = vec
    dataset = build_dataset(users, items, times, dates, behaviors, spec.schema,
                            user_features=feats)
    return ParseResult(dataset=dataset, skipped_rows=skipped)


# ---------------------------------------------------------------------------
# Binary container (versioned header, little-endian) for fast reload.
# ---------------------------------------------------------------------------

_DS_MAGIC = b"SLDS"
_DS_VERSION = 1


def _write_array(fh, arr: np.ndarray, dtype: str) -> None:
    a = np.ascontiguousarray(arr, dtype=dtype)
    fh.write(struct.pack("<B", a.ndim))
    fh.write(struct.pack(f"<{a.ndim}q", *a.shape))
    fh.write(a.tobytes(order="C"))


def _read_array(fh, dtype: str) -> np.ndarray:
    (ndim,) = struct.unpack("<B", fh.read(1))
    shape = struct.unpack(f"<{ndim}q", fh.read(8 * ndim))
    count = int(np.prod(shape)) if shape else 1
    itemsize = np.dtype(dtype).itemsize
    return np.frombuffer(fh.read(itemsize * count), dtype=dtype).reshape(shape).copy()


def save_dataset(dataset: LogDataset, path) -> None:
    """Serialize a LogDataset (catalogs, schema, records, sessions) to disk."""
    meta = {
        "schema_names": list(dataset.schema.names),
        "schema_weights": list(dataset.schema.weights),
        "has_sessions": dataset.sessions is not None,
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_DS_MAGIC)
        fh.write(struct.pack("<I", _DS_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        _write_array(fh, dataset.users.ids, "<i8")
        _write_array(fh, dataset.users.dense_features, "<f4")
        _write_array(fh, dataset.items.ids, "<i8")
        _write_array(fh, dataset.items.item_features, "<f4")
        _write_array(fh, dataset.user_idx, "<i4")
        _write_array(fh, dataset.item_idx, "<i4")
        _write_array(fh, dataset.timestamps, "<i8")
        _write_array(fh, dataset.dates, "<i4")
        _write_array(fh, dataset.behaviors, "<i1")
        if dataset.sessions is not None:
            _write_array(fh, dataset.sessions.user, "<i4")
            _write_array(fh, dataset.sessions.start, "<i8")
            _write_array(fh, dataset.sessions.end, "<i8")
            _write_array(fh, dataset.sessions.date, "<i4")


def load_dataset(path) -> LogDataset:
    """Load a dataset written by save_dataset; exact round trip."""
    with open(path, "rb") as fh:
        if fh.read(4) != _DS_MAGIC:
            raise ValueError(f"{path} is not a dataset container")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _DS_VERSION:
            raise ValueError(f"unsupported dataset version {version}")
        (meta_len,) = struct.unpack("<Q", fh.read(8))
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
        schema = BehaviorSchema(names=tuple(meta["schema_names"]),
                                weights=tuple(meta["schema_weights"]))
        user_ids = _read_array(fh, "<i8")
        user_feats = _read_array(fh, "<f4")
        item_ids = _read_array(fh, "<i8")
        item_feats = _read_array(fh, "<f4")
        user_idx = _read_array(fh, "<i4")
        item_idx = _read_array(fh, "<i4")
        timestamps = _read_array(fh, "<i8")
        dates = _read_array(fh, "<i4")
        behaviors = _read_array(fh, "<i1")
        sessions = None
        if meta["has_sessions"]:
            sessions = Sessions(
                user=_read_array(fh, "<i4"),
                start=_read_array(fh, "<i8"),
                end=_read_array(fh, "<i8"),
                date=_read_array(fh, "<i4"),
            )
    return LogDataset(
        users=UserCatalog(ids=user_ids, dense_features=user_feats),
        items=ItemCatalog(ids=item_ids, item_features=item_feats),
        schema=schema,
        user_idx=user_idx,
        item_idx=item_idx,
        timestamps=timestamps,
        dates=dates,
        behaviors=behaviors,
        user_offsets=_compute_offsets(user_idx, user_ids.shape[0]),
        sessions=sessions,
    )


def datasets_equal(a: LogDataset, b: LogDataset) -> bool:
    """Field-by-field equality, used by round-trip tests."""
    if a.schema != b.schema:
        return False
    pairs = [
        (a.users.ids, b.users.ids), (a.users.dense_features, b.users.dense_features),
        (a.items.ids, b.items.ids), (a.items.item_features, b.items.item_features),
        (a.user_idx, b.user_idx), (a.item_idx, b.item_idx),
        (a.timestamps, b.timestamps), (a.dates, b.dates), (a.behaviors, b.behaviors),
    ]
    if (a.sessions is None) != (b.sessions is None):
        return False
    if a.sessions is not None:
        pairs += [(a.sessions.user, b.sessions.user), (a.sessions.start, b.sessions.start),
                  (a.sessions.end, b.sessions.end), (a.sessions.date, b.sessions.date)]
    return all(x.shape == y.shape and np.array_equal(x, y) for x, y in pairs)
