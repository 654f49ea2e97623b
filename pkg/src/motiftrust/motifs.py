"""Per-edge counting of the eight connected motifs on at most four nodes.

For every edge (u, v) of a snapshot and each motif type, the count is the
number of connected *induced* subgraphs of that type containing both u and v.
Types, in canonical order: triangle, 2-star, 4-clique, chordal cycle
(diamond), tailed triangle (paw), 4-cycle, 3-star, 4-path.

`count_motifs` is the production path: it classifies, for each edge, every
third/fourth node by which endpoints it touches (both / u only / v only /
neither) and combines neighbor-set intersection sizes, so each induced type
falls out of a closed-form tally instead of explicit subgraph enumeration.
`count_motifs_bruteforce` enumerates all 3- and 4-node subsets and is the
ground-truth oracle for small graphs.
"""

import os
from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.sparse as sp

from ._util import ValidationError, read_json, write_json

MOTIF_TYPES = (
    "triangle",
    "two_star",
    "four_clique",
    "chordal_cycle",
    "tailed_triangle",
    "four_cycle",
    "three_star",
    "four_path",
)

BRUTE_FORCE_MAX_NODES = 64
_COUNT_LIMIT = np.iinfo(np.int32).max


@dataclass
class MotifCounts:
    """Counts for one snapshot, aligned with its collapsed edge list."""

    num_nodes: int
    edge_u: np.ndarray
    edge_v: np.ndarray
    counts: np.ndarray  # shape (num_edges, 8), int32

    @property
    def num_edges(self) -> int:
        return len(self.edge_u)

    def matrix(self, type_index: int) -> sp.csr_matrix:
        """Symmetric count matrix for one motif type."""
        c = self.counts[:, type_index].astype(np.float64)
        rows = np.concatenate([self.edge_u, self.edge_v])
        cols = np.concatenate([self.edge_v, self.edge_u])
        data = np.concatenate([c, c])
        m = sp.csr_matrix((data, (rows, cols)),
                          shape=(self.num_nodes, self.num_nodes))
        m.eliminate_zeros()
        return m

    def matrices(self):
        return [self.matrix(i) for i in range(len(MOTIF_TYPES))]


def _checked_counts(raw: np.ndarray) -> np.ndarray:
    if raw.size and raw.max() > _COUNT_LIMIT:
        raise OverflowError("motif count exceeds 32-bit range")
    return raw.astype(np.int32)


def count_motifs(snapshot) -> MotifCounts:
    """Fast per-edge induced counts via neighbor-set intersections.

    For edge (u, v), partition other nodes into T = N(u) & N(v),
    Su = N(u) - N(v) - {v}, Sv = N(v) - N(u) - {u}.  Three-node counts are
    |T| (triangles) and |Su| + |Sv| (2-stars).  Four-node counts follow from
    how a pair of outside nodes connects across these classes; the per-node
    intersection sizes |N(w) & T|, |N(w) & Su|, |N(w) & Sv| supply every term,
    with complements standing in for the "attached nowhere else" cases.
    """
    adj = snapshot.neighbor_sets()
    n_edges = snapshot.num_edges
    out = np.zeros((n_edges, 8), dtype=np.int64)
    for k in range(n_edges):
        u = int(snapshot.edge_u[k])
        v = int(snapshot.edge_v[k])
        nu, nv = adj[u], adj[v]
        T = nu & nv
        su = nu - nv - {v}
        sv = nv - nu - {u}
        n_t, n_su, n_sv = len(T), len(su), len(sv)

        k4_twice = 0
        chordal = n_t * (n_t - 1) // 2  # pairs in T; adjacent ones move to K4
        paw = 0
        for w in T:
            nw = adj[w]
            w_t = len(nw & T)
            w_su = len(nw & su)
            w_sv = len(nw & sv)
            k4_twice += w_t
            chordal += w_su + w_sv                    # diamond, (u,v) on the rim
            paw += (n_su - w_su) + (n_sv - w_sv)      # pendant hangs off u or v
            paw += len(nw) - 2 - w_t - w_su - w_sv    # pendant hangs off w
        k4 = k4_twice // 2
        chordal -= k4

        adj_su = sum(len(adj[w] & su) for w in su) // 2
        adj_sv = sum(len(adj[w] & sv) for w in sv) // 2
        paw += adj_su + adj_sv                        # (u,v) is the tail edge
        threestar = (n_su * (n_su - 1) // 2 - adj_su
                     + n_sv * (n_sv - 1) // 2 - adj_sv)
        c4 = sum(len(adj[w] & sv) for w in su)
        p4 = n_su * n_sv - c4                         # (u,v) in the middle
        for w in su:
            nw = adj[w]
            p4 += len(nw) - 1 - len(nw & T) - len(nw & (su - {w})) - len(nw & sv)
        for w in sv:
            nw = adj[w]
            p4 += len(nw) - 1 - len(nw & T) - len(nw & (sv - {w})) - len(nw & su)

        out[k] = (len(T), n_su + n_sv, k4, chordal, paw, c4, threestar, p4)
    return MotifCounts(
        num_nodes=snapshot.num_nodes,
        edge_u=np.asarray(snapshot.edge_u, dtype=np.int64).copy(),
        edge_v=np.asarray(snapshot.edge_v, dtype=np.int64).copy(),
        counts=_checked_counts(out),
    )


def _classify4(degs, m):
    if m == 3:
        if degs == (1, 1, 1, 3):
            return 6  # three_star
        if degs == (1, 1, 2, 2):
            return 7  # four_path
    elif m == 4:
        if degs == (1, 2, 2, 3):
            return 4  # tailed_triangle
        if degs == (2, 2, 2, 2):
            return 5  # four_cycle
    elif m == 5:
        return 3      # chordal_cycle
    elif m == 6:
        return 2      # four_clique
    return None


def count_motifs_bruteforce(snapshot) -> MotifCounts:
    """Exhaustive oracle: classify every induced 3-/4-node subgraph.

    Refuses graphs with more than 64 nodes (subset enumeration is O(N^4)).
    """
    n = snapshot.num_nodes
    if n > BRUTE_FORCE_MAX_NODES:
        raise ValidationError(
            f"brute-force counting limited to {BRUTE_FORCE_MAX_NODES} nodes, got {n}"
        )
    adj = snapshot.neighbor_sets()
    edge_index = {}
    for k in range(snapshot.num_edges):
        edge_index[(int(snapshot.edge_u[k]), int(snapshot.edge_v[k]))] = k
    out = np.zeros((snapshot.num_edges, 8), dtype=np.int64)

    def bump(type_idx, pairs):
        for a, b in pairs:
            key = (a, b) if a < b else (b, a)
            out[edge_index[key], type_idx] += 1

    for s in combinations(range(n), 3):
        es = [(a, b) for a, b in combinations(s, 2) if b in adj[a]]
        if len(es) == 3:
            bump(0, es)
        elif len(es) == 2:
            bump(1, es)  # two edges on three nodes is always a path
    for s in combinations(range(n), 4):
        es = [(a, b) for a, b in combinations(s, 2) if b in adj[a]]
        if len(es) < 3:
            continue
        deg = dict.fromkeys(s, 0)
        for a, b in es:
            deg[a] += 1
            deg[b] += 1
        if min(deg.values()) == 0:
            continue
        idx = _classify4(tuple(sorted(deg.values())), len(es))
        if idx is not None:
            bump(idx, es)
    return MotifCounts(
        num_nodes=n,
        edge_u=np.asarray(snapshot.edge_u, dtype=np.int64).copy(),
        edge_v=np.asarray(snapshot.edge_v, dtype=np.int64).copy(),
        counts=_checked_counts(out),
    )


def combine_motifs(counts: MotifCounts, alpha) -> sp.csr_matrix:
    """Weighted sum of the eight count matrices (static helper).

    Inside the model the same combination runs through the autodiff graph so
    the weights receive gradients; this standalone version is for inspection
    and the CLI.
    """
    alpha = np.asarray(alpha, dtype=np.float64).reshape(-1)
    if alpha.shape != (8,) or not np.all(np.isfinite(alpha)):
        raise ValidationError("alpha must be 8 finite weights")
    vals = counts.counts.astype(np.float64) @ alpha
    rows = np.concatenate([counts.edge_u, counts.edge_v])
    cols = np.concatenate([counts.edge_v, counts.edge_u])
    data = np.concatenate([vals, vals])
    m = sp.csr_matrix((data, (rows, cols)),
                      shape=(counts.num_nodes, counts.num_nodes))
    m.eliminate_zeros()
    return m


def verify_snapshot(snapshot, max_nodes: int):
    """Cross-check fast counts against the oracle on one snapshot.

    The snapshot is compacted to its non-isolated nodes first (isolated nodes
    cannot join any motif), so the subset enumeration bound applies to the
    active node count.  Returns (checked, mismatches); checked is False when
    the compacted graph is still too large.
    """
    active = np.unique(np.concatenate([snapshot.edge_u, snapshot.edge_v])) \
        if snapshot.num_edges else np.array([], dtype=np.int64)
    if len(active) > max_nodes or len(active) > BRUTE_FORCE_MAX_NODES:
        return False, 0
    remap = {int(n): i for i, n in enumerate(active)}
    from .ingest import Snapshot
    compact = Snapshot(
        num_nodes=len(active),
        edge_u=np.array([remap[int(u)] for u in snapshot.edge_u], dtype=np.int64),
        edge_v=np.array([remap[int(v)] for v in snapshot.edge_v], dtype=np.int64),
        edge_sign=np.asarray(snapshot.edge_sign),
        edge_label=np.asarray(snapshot.edge_label),
        t_min=snapshot.t_min, t_max=snapshot.t_max,
    )
    fast = count_motifs(compact)
    oracle = count_motifs_bruteforce(compact)
    mismatches = int(np.sum(np.any(fast.counts != oracle.counts, axis=1)))
    return True, mismatches


# --- motif bundle -------------------------------------------------------------

def save_motif_bundle(slices, outdir, source_manifest_sha=None) -> None:
    os.makedirs(outdir, exist_ok=True)
    for t, mc in enumerate(slices):
        for i, name in enumerate(MOTIF_TYPES):
            path = os.path.join(outdir, f"motifs_{t:03d}_{name}.txt")
            with open(path, "w") as f:
                for k in range(mc.num_edges):
                    c = int(mc.counts[k, i])
                    if c:
                        f.write(f"{mc.edge_u[k]} {mc.edge_v[k]} {c}\n")
    write_json(os.path.join(outdir, "manifest.json"), {
        "format": "motif-bundle/v1",
        "num_nodes": slices[0].num_nodes if slices else 0,
        "num_snapshots": len(slices),
        "types": list(MOTIF_TYPES),
        "source_manifest_sha256": source_manifest_sha,
    })


class MotifBundle:
    """Lazy reader for a motif bundle; counts how often it is actually read."""

    def __init__(self, indir):
        self.indir = indir
        self.manifest = read_json(os.path.join(indir, "manifest.json"))
        if self.manifest.get("format") != "motif-bundle/v1":
            raise ValidationError(f"{indir}: not a motif bundle")
        self.reads = 0

    @property
    def num_snapshots(self):
        return self.manifest["num_snapshots"]

    def load(self, t, snapshot) -> MotifCounts:
        """Counts for snapshot t, aligned with the snapshot's edge list."""
        self.reads += 1
        n_edges = snapshot.num_edges
        index = {(int(snapshot.edge_u[k]), int(snapshot.edge_v[k])): k
                 for k in range(n_edges)}
        counts = np.zeros((n_edges, 8), dtype=np.int32)
        for i, name in enumerate(MOTIF_TYPES):
            path = os.path.join(self.indir, f"motifs_{t:03d}_{name}.txt")
            if os.path.getsize(path) == 0:
                continue
            rows = np.loadtxt(path, dtype=np.int64, ndmin=2)
            for u, v, c in rows:
                k = index.get((int(u), int(v)))
                if k is None:
                    raise ValidationError(
                        f"motif entry ({u},{v}) not an edge of snapshot {t}")
                counts[k, i] = c
        return MotifCounts(
            num_nodes=snapshot.num_nodes,
            edge_u=np.asarray(snapshot.edge_u, dtype=np.int64).copy(),
            edge_v=np.asarray(snapshot.edge_v, dtype=np.int64).copy(),
            counts=counts,
        )
