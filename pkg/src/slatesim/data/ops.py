"""Log preprocessing: occurrence filtering, day sessions, chronological split."""

from __future__ import annotations

import math

import numpy as np

from ..core import ItemCatalog, UserCatalog
from .log import LogDataset, Sessions, _compute_offsets


def _rebuild(dataset: LogDataset, keep: np.ndarray) -> LogDataset:
    """Restrict to `keep` records, dropping empty users/items and re-indexing."""
    user_idx = dataset.user_idx[keep]
    item_idx = dataset.item_idx[keep]
    if user_idx.size == 0:
        raise ValueError("filter removed all records")

    live_users = np.unique(user_idx)
    live_items = np.unique(item_idx)
    user_map = np.full(dataset.users.n_users, -1, dtype=np.int32)
    user_map[live_users] = np.arange(live_users.shape[0], dtype=np.int32)
    item_map = np.full(dataset.items.n_items, -1, dtype=np.int32)
    item_map[live_items] = np.arange(live_items.shape[0], dtype=np.int32)

    new_user_idx = user_map[user_idx]
    out = LogDataset(
        users=UserCatalog(ids=dataset.users.ids[live_users],
                          dense_features=dataset.users.dense_features[live_users]),
        items=ItemCatalog(ids=dataset.items.ids[live_items],
                          item_features=dataset.items.item_features[live_items]),
        schema=dataset.schema,
        user_idx=new_user_idx,
        item_idx=item_map[item_idx],
        timestamps=dataset.timestamps[keep],
        dates=dataset.dates[keep],
        behaviors=dataset.behaviors[keep],
        user_offsets=_compute_offsets(new_user_idx, live_users.shape[0]),
    )
    if dataset.sessions is not None:
        out = segment_sessions(out)
    return out


def kcore_filter(dataset: LogDataset, k: int, iterate: bool = False) -> LogDataset:
    """Drop items with fewer than k occurrences (single pass by default).

    With `iterate=True`, alternately drops under-k items and under-k users
    until a fixed point, for comparison against the single-pass rule.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    counts = np.bincount(dataset.item_idx, minlength=dataset.items.n_items)
    keep = counts[dataset.item_idx] >= k
    out = _rebuild(dataset, keep)
    if not iterate:
        return out
    while True:
        u_counts = np.bincount(out.user_idx, minlength=out.users.n_users)
        i_counts = np.bincount(out.item_idx, minlength=out.items.n_items)
        keep = (u_counts[out.user_idx] >= k) & (i_counts[out.item_idx] >= k)
        if np.all(keep):
            return out
        out = _rebuild(out, keep)


def segment_sessions(dataset: LogDataset) -> LogDataset:
    """Populate sessions: one per (user, date), ordered chronologically per user."""
    n = dataset.n_records
    if n == 0:
        raise ValueError("empty dataset")
    boundary = np.empty(n, dtype=bool)
    boundary[0] = True
    boundary[1:] = (np.diff(dataset.user_idx) != 0) | (np.diff(dataset.dates) != 0)
    starts = np.flatnonzero(boundary)
    ends = np.append(starts[1:], n)
    sessions = Sessions(
        user=dataset.user_idx[starts].astype(np.int32),
        start=starts.astype(np.int64),
        end=ends.astype(np.int64),
        date=dataset.dates[starts].astype(np.int32),
    )
    return dataset.with_sessions(sessions)


def split_train_test(dataset: LogDataset, ratio: float) -> tuple[LogDataset, LogDataset]:
    """Per-user chronological split: earliest ceil(ratio * n_u) records to train.

    Catalogs are shared by both sides (no re-indexing), so embedding tables
    trained on one side apply to the other. Users with a single record go
    entirely to train.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    n = dataset.n_records
    train_mask = np.zeros(n, dtype=bool)
    for u in range(dataset.users.n_users):
        lo, hi = int(dataset.user_offsets[u]), int(dataset.user_offsets[u + 1])
        count = hi - lo
        if count == 0:
            continue
        n_train = min(count, math.ceil(ratio * count))
        train_mask[lo:lo + n_train] = True

    def subset(mask: np.ndarray) -> LogDataset:
        user_idx = dataset.user_idx[mask]
        out = LogDataset(
            users=dataset.users,
            items=dataset.items,
            schema=dataset.schema,
            user_idx=user_idx,
            item_idx=dataset.item_idx[mask],
            timestamps=dataset.timestamps[mask],
            dates=dataset.dates[mask],
            behaviors=dataset.behaviors[mask],
            user_offsets=_compute_offsets(user_idx, dataset.users.n_users),
        )
        if dataset.sessions is not None and out.n_records > 0:
            out = segment_sessions(out)
        return out

    return subset(train_mask), subset(~train_mask)


def merge_user_logs(first: LogDataset, second: LogDataset) -> LogDataset:
    """Concatenate two splits sharing catalogs back into one ordered log."""
    if first.users.n_users != second.users.n_users or first.items.n_items != second.items.n_items:
        raise ValueError("splits must share catalogs")
    user_idx = np.concatenate([first.user_idx, second.user_idx])
    order = np.lexsort((np.concatenate([first.timestamps, second.timestamps]), user_idx))
    user_idx = user_idx[order]
    merged = LogDataset(
        users=first.users,
        items=first.items,
        schema=first.schema,
        user_idx=user_idx,
        item_idx=np.concatenate([first.item_idx, second.item_idx])[order],
        timestamps=np.concatenate([first.timestamps, second.timestamps])[order],
        dates=np.concatenate([first.dates, second.dates])[order],
        behaviors=np.concatenate([first.behaviors, second.behaviors])[order],
        user_offsets=_compute_offsets(user_idx, first.users.n_users),
    )
    return merged
