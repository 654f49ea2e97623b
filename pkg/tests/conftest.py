import numpy as np
import pytest

from motiftrust.ingest import RatingEvent, Snapshot, build_snapshots


def snapshot_from_edges(num_nodes, edges, signs=None, labels=None):
    """Build a bare Snapshot from an undirected edge list (u < v enforced)."""
    edges = sorted((min(u, v), max(u, v)) for u, v in edges)
    eu = np.array([e[0] for e in edges], dtype=np.int64)
    ev = np.array([e[1] for e in edges], dtype=np.int64)
    if signs is None:
        signs = np.ones(len(edges), dtype=np.int64)
    if labels is None:
        labels = (np.asarray(signs) < 0).astype(np.int64)
    return Snapshot(num_nodes=num_nodes, edge_u=eu, edge_v=ev,
                    edge_sign=np.asarray(signs, dtype=np.int64),
                    edge_label=np.asarray(labels, dtype=np.int64),
                    t_min=0.0, t_max=1.0)


def random_snapshot(n, p, seed):
    rng = np.random.default_rng(seed)
    edges = [(u, v) for u in range(n) for v in range(u + 1, n)
             if rng.random() < p]
    return snapshot_from_edges(n, edges)


def synthetic_events(num_nodes=24, num_events=480, flip=0.15, seed=0):
    """Two planted communities: trusting inside, distrusting across."""
    rng = np.random.default_rng(seed)
    half = num_nodes // 2
    events = []
    t = 0.0
    for _ in range(num_events):
        u = int(rng.integers(0, num_nodes))
        v = int(rng.integers(0, num_nodes))
        while v == u:
            v = int(rng.integers(0, num_nodes))
        same_side = (u < half) == (v < half)
        positive = same_side ^ (rng.random() < flip)
        rating = int(rng.integers(1, 11)) * (1 if positive else -1)
        t += float(rng.integers(1, 5))
        events.append(RatingEvent(u, v, rating, t))
    return events


@pytest.fixture(scope="session")
def synth_series():
    events = synthetic_events()
    return build_snapshots(events, 6, "equal-edges", (4, 1, 1))


@pytest.fixture(scope="session")
def synth_motifs(synth_series):
    from motiftrust.motifs import count_motifs

    return [count_motifs(s) for s in synth_series.snapshots]


def toy_run_config(**overrides):
    from motiftrust.train import RunConfig

    base = dict(emb_dim=8, group_dim=6, feat_dim=6, mlp_hidden=8, num_groups=3,
                warmup_epochs=2, total_epochs=6, repeats=1, seed=3)
    base.update(overrides)
    return RunConfig(**base)
