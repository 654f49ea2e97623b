"""Rating-stream ingestion: parse signed rating CSVs, discretize into snapshots.

The raw input is the public bitcoin trust-network format: one rating per line,
``source,target,rating,time`` with ratings in [-10, 10] \\ {0}.  Events are
binned into a fixed number of snapshots, node ids are remapped to a contiguous
range, and parallel ratings between the same pair inside one bin are collapsed
by summing (edge sign = sign of the sum, ties negative; edge label anomalous
iff the sum is strictly negative).
"""

import gzip
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from ._util import ValidationError, read_json, write_json

RATING_MAX = 10


class RatingEvent(NamedTuple):
    source: int
    target: int
    rating: int
    timestamp: float


class ParseError(ValueError):
    """Malformed input row; message carries the 1-based row number."""


@dataclass
class ParsedRatings:
    events: list  # RatingEvent, sorted by (timestamp, source, target, rating)
    self_loops_dropped: int
    rows_total: int


def parse_ratings(path) -> ParsedRatings:
    """Read a rating CSV (optionally gzipped); drop self-ratings, sort by time.

    Rows must be ``source,target,rating,time`` with integer endpoints and
    rating, rating in [-10,10] and nonzero.  Any malformed row aborts the
    parse with its row number.
    """
    opener = gzip.open if str(path).endswith(".gz") else open
    events = []
    dropped = 0
    rows = 0
    with opener(path, "rt", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            rows += 1
            parts = line.split(",")
            if len(parts) != 4:
                raise ParseError(f"row {lineno}: expected 4 fields, got {len(parts)}")
            try:
                src = int(parts[0])
                dst = int(parts[1])
                rating = int(parts[2])
                ts = float(parts[3])
            except ValueError as exc:
                raise ParseError(f"row {lineno}: {exc}") from None
            if rating == 0 or abs(rating) > RATING_MAX:
                raise ParseError(f"row {lineno}: rating {rating} outside [-10,10] \\ {{0}}")
            if src == dst:
                dropped += 1
                continue
            events.append(RatingEvent(src, dst, rating, ts))
    events.sort(key=lambda e: (e.timestamp, e.source, e.target, e.rating))
    return ParsedRatings(events=events, self_loops_dropped=dropped, rows_total=rows)


@dataclass
class Snapshot:
    """One time bin: collapsed undirected unit-weight graph with edge signs."""

    num_nodes: int
    # parallel arrays over collapsed undirected edges, u < v, lexicographic
    edge_u: np.ndarray
    edge_v: np.ndarray
    edge_sign: np.ndarray   # +1 / -1 (sum of ratings; ties resolve negative)
    edge_label: np.ndarray  # 1 = anomalous (summed rating < 0), else 0
    t_min: float
    t_max: float
    _adj: sp.csr_matrix = field(default=None, repr=False, compare=False)

    @property
    def num_edges(self) -> int:
        return len(self.edge_u)

    def _sym_csr(self, mask) -> sp.csr_matrix:
        u, v = self.edge_u[mask], self.edge_v[mask]
        data = np.ones(2 * len(u))
        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        m = sp.csr_matrix((data, (rows, cols)), shape=(self.num_nodes, self.num_nodes))
        m.sum_duplicates()
        return m

    @property
    def adjacency(self) -> sp.csr_matrix:
        if self._adj is None:
            self._adj = self._sym_csr(np.ones(self.num_edges, dtype=bool))
        return self._adj

    @property
    def sign_pos(self) -> sp.csr_matrix:
        return self._sym_csr(self.edge_sign > 0)

    @property
    def sign_neg(self) -> sp.csr_matrix:
        return self._sym_csr(self.edge_sign < 0)

    def neighbor_sets(self):
        """Adjacency as a list of Python sets (motif counting)."""
        adj = [set() for _ in range(self.num_nodes)]
        for u, v in zip(self.edge_u, self.edge_v):
            adj[u].add(int(v))
            adj[v].add(int(u))
        return adj


@dataclass
class SnapshotSeries:
    num_nodes: int
    node_ids: np.ndarray        # original dataset ids, index = contiguous id
    snapshots: list             # list[Snapshot], chronological
    split: tuple                # (train_ids, valid_ids, test_ids)
    binning: str
    node_stats: np.ndarray      # N x 5 raw directed stats over train bins
    self_loops_dropped: int = 0

    @property
    def num_snapshots(self) -> int:
        return len(self.snapshots)

    def union_adjacency(self, snapshot_ids) -> sp.csr_matrix:
        """Unsigned union graph (unit weights) over the given snapshots."""
        m = sp.csr_matrix((self.num_nodes, self.num_nodes))
        for t in snapshot_ids:
            m = m + self.snapshots[t].adjacency
        m.data[:] = 1.0
        return m

    def union_signed(self, snapshot_ids):
        """Cross-time positive/negative masked adjacencies (unit weights).

        An edge lands in the positive union if any of its per-snapshot
        resolved signs is positive (and likewise for negative); a pair that
        flips sign across snapshots can appear in both.
        """
        pos = sp.csr_matrix((self.num_nodes, self.num_nodes))
        neg = sp.csr_matrix((self.num_nodes, self.num_nodes))
        for t in snapshot_ids:
            snap = self.snapshots[t]
            pos = pos + snap.sign_pos
            neg = neg + snap.sign_neg
        pos.data[:] = 1.0
        neg.data[:] = 1.0
        return pos, neg


STAT_NAMES = ("in_deg_pos", "in_deg_neg", "out_deg_pos", "out_deg_neg", "mean_received")


def _directed_stats(events, id_map, num_nodes) -> np.ndarray:
    stats = np.zeros((num_nodes, 5))
    recv_sum = np.zeros(num_nodes)
    recv_cnt = np.zeros(num_nodes)
    for ev in events:
        s, t = id_map[ev.source], id_map[ev.target]
        if ev.rating > 0:
            stats[t, 0] += 1
            stats[s, 2] += 1
        else:
            stats[t, 1] += 1
            stats[s, 3] += 1
        recv_sum[t] += ev.rating
        recv_cnt[t] += 1
    nz = recv_cnt > 0
    stats[nz, 4] = recv_sum[nz] / recv_cnt[nz]
    return stats


def _bin_boundaries(events, num_snapshots, binning):
    """Return per-event bin assignment.  Bins never split a timestamp group."""
    ts = np.array([e.timestamp for e in events])
    distinct = np.unique(ts)
    if len(distinct) < num_snapshots:
        raise ValidationError(
            f"cannot form {num_snapshots} snapshots from {len(distinct)} distinct event times"
        )
    if binning == "equal-time":
        bounds = np.linspace(distinct[0], distinct[-1], num_snapshots + 1)
        assign = np.minimum(np.searchsorted(bounds, ts, side="right") - 1, num_snapshots - 1)
        return assign.astype(int)
    if binning == "equal-edges":
        n = len(events)
        assign = np.empty(n, dtype=int)
        # walk timestamp groups; close bin k once the cumulative count reaches
        # the ideal boundary (k+1)*n/T, keeping enough groups for later bins
        group_starts = np.flatnonzero(np.concatenate([[True], ts[1:] > ts[:-1]]))
        group_ends = np.append(group_starts[1:], n)
        k = 0
        for gi, (start, end) in enumerate(zip(group_starts, group_ends)):
            groups_left = len(group_starts) - gi
            bins_left = num_snapshots - k
            assign[start:end] = k
            target = (k + 1) * n / num_snapshots
            if k < num_snapshots - 1 and (end >= target or groups_left <= bins_left):
                k += 1
        return assign
    raise ValidationError(f"unknown binning mode: {binning!r}")


def build_snapshots(events, num_snapshots: int, binning: str = "equal-edges",
                    split=(8, 1, 3), self_loops_dropped: int = 0) -> SnapshotSeries:
    """Discretize a sorted event stream into a SnapshotSeries.

    Node ids are remapped to [0, N) by sorted original id.  The chronological
    split assigns whole snapshots: the first ``split[0]`` to train, then
    valid, then test.  Per-node directed statistics are accumulated over the
    train bins only, so features never see validation/test-period signs.
    """
    if num_snapshots < 2:
        raise ValidationError("num_snapshots must be >= 2")
    if not events:
        raise ValidationError("no events to bin")
    if len(split) != 3 or sum(split) != num_snapshots or min(split) < 1:
        raise ValidationError(
            f"split {split} must be three positive counts summing to {num_snapshots}"
        )
    # canonical total order; makes the result independent of input row order
    events = sorted(events, key=lambda e: (e.timestamp, e.source, e.target, e.rating))
    orig_ids = sorted({e.source for e in events} | {e.target for e in events})
    id_map = {oid: i for i, oid in enumerate(orig_ids)}
    num_nodes = len(orig_ids)

    assign = _bin_boundaries(events, num_snapshots, binning)

    train_ids = list(range(split[0]))
    valid_ids = list(range(split[0], split[0] + split[1]))
    test_ids = list(range(split[0] + split[1], num_snapshots))

    snapshots = []
    for k in range(num_snapshots):
        sums = {}
        t_lo, t_hi = np.inf, -np.inf
        for idx in np.flatnonzero(assign == k):
            ev = events[idx]
            u, v = id_map[ev.source], id_map[ev.target]
            key = (u, v) if u < v else (v, u)
            sums[key] = sums.get(key, 0) + ev.rating
            t_lo = min(t_lo, ev.timestamp)
            t_hi = max(t_hi, ev.timestamp)
        keys = sorted(sums)
        eu = np.array([k0 for k0, _ in keys], dtype=np.int64)
        ev_ = np.array([k1 for _, k1 in keys], dtype=np.int64)
        total = np.array([sums[k0] for k0 in keys], dtype=np.int64)
        sign = np.where(total > 0, 1, -1).astype(np.int64)
        label = (total < 0).astype(np.int64)
        snapshots.append(Snapshot(
            num_nodes=num_nodes, edge_u=eu, edge_v=ev_, edge_sign=sign,
            edge_label=label,
            t_min=float(t_lo) if len(keys) else 0.0,
            t_max=float(t_hi) if len(keys) else 0.0,
        ))

    train_mask = np.isin(assign, train_ids)
    stats = _directed_stats([events[i] for i in np.flatnonzero(train_mask)],
                            id_map, num_nodes)

    return SnapshotSeries(
        num_nodes=num_nodes,
        node_ids=np.array(orig_ids, dtype=np.int64),
        snapshots=snapshots,
        split=(train_ids, valid_ids, test_ids),
        binning=binning,
        node_stats=stats,
        self_loops_dropped=self_loops_dropped,
    )


def build_features(series: SnapshotSeries, d0: int = 8) -> np.ndarray:
    """Z-score the per-node directed stats and pad/truncate to d0 columns.

    Columns with zero variance (e.g. no negative edges anywhere) stay zero,
    so an all-isolated universe maps to the zero matrix.
    """
    if d0 < 2:
        raise ValidationError("d0 must be >= 2")
    raw = series.node_stats
    mu = raw.mean(axis=0)
    sd = raw.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    z = (raw - mu) / sd
    feats = np.zeros((series.num_nodes, d0))
    k = min(d0, z.shape[1])
    feats[:, :k] = z[:, :k]
    return feats


# --- snapshot bundle (plain-text interchange) --------------------------------

def save_bundle(series: SnapshotSeries, outdir) -> None:
    """Write one triplet file per snapshot plus manifest and node stats."""
    import os

    os.makedirs(outdir, exist_ok=True)
    for t, snap in enumerate(series.snapshots):
        with open(os.path.join(outdir, f"snapshot_{t:03d}.txt"), "w") as f:
            for u, v, s, lab in zip(snap.edge_u, snap.edge_v,
                                    snap.edge_sign, snap.edge_label):
                f.write(f"{u} {v} 1 {s} {lab}\n")
    with open(os.path.join(outdir, "node_stats.tsv"), "w") as f:
        f.write("\t".join(("node",) + STAT_NAMES) + "\n")
        for i in range(series.num_nodes):
            row = "\t".join(repr(float(x)) for x in series.node_stats[i])
            f.write(f"{i}\t{row}\n")
    manifest = {
        "format": "snapshot-bundle/v1",
        "num_nodes": series.num_nodes,
        "num_snapshots": series.num_snapshots,
        "binning": series.binning,
        "split": {
            "train": list(series.split[0]),
            "valid": list(series.split[1]),
            "test": list(series.split[2]),
        },
        "bin_bounds": [[s.t_min, s.t_max] for s in series.snapshots],
        "node_ids": [int(x) for x in series.node_ids],
        "self_loops_dropped": series.self_loops_dropped,
        "edges_per_snapshot": [s.num_edges for s in series.snapshots],
    }
    write_json(os.path.join(outdir, "manifest.json"), manifest)


def load_bundle(indir) -> SnapshotSeries:
    import os

    manifest = read_json(os.path.join(indir, "manifest.json"))
    if manifest.get("format") != "snapshot-bundle/v1":
        raise ValidationError(f"{indir}: not a snapshot bundle")
    num_nodes = manifest["num_nodes"]
    snapshots = []
    for t in range(manifest["num_snapshots"]):
        path = os.path.join(indir, f"snapshot_{t:03d}.txt")
        if os.path.getsize(path) == 0:
            rows = np.zeros((0, 5), dtype=np.int64)
        else:
            rows = np.loadtxt(path, dtype=np.int64, ndmin=2)
        lo, hi = manifest["bin_bounds"][t]
        snapshots.append(Snapshot(
            num_nodes=num_nodes,
            edge_u=rows[:, 0].copy(), edge_v=rows[:, 1].copy(),
            edge_sign=rows[:, 3].copy(), edge_label=rows[:, 4].copy(),
            t_min=lo, t_max=hi,
        ))
    stats = np.loadtxt(os.path.join(indir, "node_stats.tsv"),
                       skiprows=1, ndmin=2)
    if stats.size == 0:
        stats = np.zeros((num_nodes, 5))
    else:
        stats = stats[:, 1:]
    split = manifest["split"]
    return SnapshotSeries(
        num_nodes=num_nodes,
        node_ids=np.array(manifest["node_ids"], dtype=np.int64),
        snapshots=snapshots,
        split=(split["train"], split["valid"], split["test"]),
        binning=manifest["binning"],
        node_stats=stats,
        self_loops_dropped=manifest["self_loops_dropped"],
    )
