"""Training loop, evaluation protocol, vanilla-GCN baseline, and ablations.

Protocol: each epoch unrolls the model over all snapshots, sums the
per-train-snapshot mean cross-entropies, and takes one Adam step; validation
and test snapshots are scored every epoch with the all-ones sign override.
A run reports the mean of the test metrics at the five best validation-F1
epochs inside [warmup, total], and the whole procedure repeats over
`repeats` consecutive seeds whose results are averaged.
"""

import os
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from . import model as mdl
from ._util import ValidationError, canonical_json, read_json, sha256_text, write_json
from .ingest import build_features
from .metrics import evaluate
from .optim import Adam


@dataclass
class RunConfig:
    lr: float = 0.005
    weight_decay: float = 5e-5
    emb_dim: int = 200
    group_dim: int = 0          # 0 -> same as emb_dim
    feat_dim: int = 8
    mlp_hidden: int = 64
    num_groups: int = 10
    gcn_layers: int = 2
    dropout: float = 0.2
    warmup_epochs: int = 50
    total_epochs: int = 200
    repeats: int = 5
    beta: float = 0.35
    seed: int = 7
    no_motif: bool = False
    no_sign: bool = False
    no_global: bool = False
    check_invariants: bool = True

    def validate(self):
        if self.warmup_epochs >= self.total_epochs:
            raise ValidationError("warmup_epochs must be < total_epochs")
        if self.gcn_layers != 2:
            raise ValidationError("only 2-layer aggregation is supported")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError("dropout must be in [0, 1)")
        if self.repeats < 1:
            raise ValidationError("repeats must be >= 1")
        if self.num_groups < 2:
            raise ValidationError("num_groups must be >= 2")
        return self

    def model_config(self) -> mdl.ModelConfig:
        return mdl.ModelConfig(
            feat_dim=self.feat_dim,
            emb_dim=self.emb_dim,
            group_dim=self.group_dim or self.emb_dim,
            num_groups=self.num_groups,
            mlp_hidden=self.mlp_hidden,
            dropout=self.dropout,
            beta=self.beta,
            no_motif=self.no_motif,
            no_sign=self.no_sign,
            no_global=self.no_global,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def content_hash(self) -> str:
        return sha256_text(canonical_json(self.to_dict()))


def _motif_slices(series, motifs):
    """Normalize the motif source into a t -> MotifCounts callable."""
    if motifs is None:
        return None
    if isinstance(motifs, (list, tuple)):
        return lambda t: motifs[t]
    return lambda t: motifs.load(t, series.snapshots[t])


def _pool(probs, prep_snaps, snapshot_ids):
    scores, labels = [], []
    for t in snapshot_ids:
        if t in probs:
            scores.append(probs[t][:, 1])
            labels.append(prep_snaps[t].labels)
    if not scores:
        raise ValidationError("no edges to evaluate in the requested split")
    return np.concatenate(scores), np.concatenate(labels)


def _mean_metrics(records):
    out = {}
    for key in ("f1", "acc", "ap", "recall"):
        vals = [r[key] for r in records if r[key] is not None]
        out[key] = float(np.mean(vals)) if vals else None
    return out


def _select_top5(epochs, warmup, total):
    window = [e for e in epochs if warmup <= e["epoch"] <= total]
    ranked = sorted(window, key=lambda e: (-e["valid"]["f1"], e["epoch"]))
    return ranked[:5]


class _ApmTracker:
    def __init__(self):
        self.max_row_dev = 0.0
        self.min_entry = np.inf
        self.checks = 0

    def __call__(self, t, apm):
        self.checks += 1
        dev = float(np.abs(apm.sum(axis=1) - 1.0).max()) if apm.size else 0.0
        self.max_row_dev = max(self.max_row_dev, dev)
        if apm.size:
            self.min_entry = min(self.min_entry, float(apm.min()))

    def summary(self):
        return {
            "apm_max_row_dev": self.max_row_dev,
            "apm_min_entry": None if self.checks == 0 else self.min_entry,
            "apm_checks": self.checks,
        }


def train(config: RunConfig, series, motifs=None):
    """Full training protocol.  Returns (report, checkpoints) where
    checkpoints holds, per repeat, the parameter arrays at the best
    validation epoch."""
    config.validate()
    cfg = config.model_config()
    slices = None if config.no_motif else _motif_slices(series, motifs)
    feats = build_features(series, config.feat_dim)
    prep = mdl.prepare(series, feats, cfg, slices)

    train_ids = [t for t in prep.train_ids if len(prep.snaps[t].labels)]
    if not train_ids:
        raise ValidationError("empty training split")
    eval_ids = list(prep.valid_ids) + list(prep.test_ids)

    tracker = _ApmTracker() if config.check_invariants else None
    collect = tracker if tracker is not None else None

    reps = []
    checkpoints = []
    for r in range(config.repeats):
        seed_r = config.seed + r
        rng = np.random.default_rng(seed_r)
        params = mdl.init_params(cfg, rng)
        opt = Adam(params, lr=config.lr, weight_decay=config.weight_decay)

        with ad.no_grad():
            loss0, _, _ = mdl.run_model(prep, params, cfg, rng, training=False,
                                        loss_snapshots=train_ids)
        initial_loss = loss0.item()

        epochs = []
        best = None
        best_params = None
        for epoch in range(1, config.total_epochs + 1):
            loss, _, _ = mdl.run_model(prep, params, cfg, rng, training=True,
                                       loss_snapshots=train_ids,
                                       collect_apm=collect)
            ad.backward(loss)
            opt.step()
            opt.zero_grad()

            with ad.no_grad():
                _, probs, _ = mdl.run_model(prep, params, cfg, rng,
                                            training=False,
                                            predict_snapshots=eval_ids,
                                            collect_apm=collect)
            v_scores, v_labels = _pool(probs, prep.snaps, prep.valid_ids)
            t_scores, t_labels = _pool(probs, prep.snaps, prep.test_ids)
            rec = {
                "epoch": epoch,
                "train_loss": loss.item(),
                "valid": evaluate(v_scores, v_labels),
                "test": evaluate(t_scores, t_labels),
            }
            epochs.append(rec)
            if best is None or rec["valid"]["f1"] > best["valid"]["f1"]:
                best = rec
                best_params = {k: p.data.copy() for k, p in params.items()}

        selected = _select_top5(epochs, config.warmup_epochs, config.total_epochs)
        reps.append({
            "seed": seed_r,
            "initial_train_loss": initial_loss,
            "epochs": epochs,
            "selected_epochs": [e["epoch"] for e in selected],
            "test_mean": _mean_metrics([e["test"] for e in selected]),
            "best_valid_f1": best["valid"]["f1"],
            "best_epoch": best["epoch"],
        })
        checkpoints.append({"seed": seed_r, "epoch": best["epoch"],
                            "params": best_params})

    report = {
        "model": _variant_name(config),
        "config": config.to_dict(),
        "config_hash": config.content_hash(),
        "seeds": [config.seed + r for r in range(config.repeats)],
        "reps": reps,
        "aggregate": _mean_metrics([r["test_mean"] for r in reps]),
    }
    if tracker is not None:
        report["invariants"] = tracker.summary()
    return report, checkpoints


def _variant_name(config: RunConfig) -> str:
    flags = [name for name, on in (("motif", config.no_motif),
                                   ("sign", config.no_sign),
                                   ("global", config.no_global)) if on]
    return "full" if not flags else "-" + ",-".join(flags)


def evaluate_checkpoint(config: RunConfig, series, motifs, params_data):
    """Valid/test metrics for stored parameters (no training)."""
    config.validate()
    cfg = config.model_config()
    slices = None if config.no_motif else _motif_slices(series, motifs)
    feats = build_features(series, config.feat_dim)
    prep = mdl.prepare(series, feats, cfg, slices)
    params = {k: ad.constant(v) for k, v in params_data.items()}
    eval_ids = list(prep.valid_ids) + list(prep.test_ids)
    with ad.no_grad():
        _, probs, _ = mdl.run_model(prep, params, cfg, None, training=False,
                                    predict_snapshots=eval_ids)
    v = _pool(probs, prep.snaps, prep.valid_ids)
    t = _pool(probs, prep.snaps, prep.test_ids)
    return {"valid": evaluate(*v), "test": evaluate(*t)}


# --- vanilla GCN baseline -------------------------------------------------------

def baseline_gcn(config: RunConfig, series):
    """Two-layer GCN on the cross-time training graph, same protocol."""
    config.validate()
    feats_np = build_features(series, config.feat_dim)
    a_norm = ad.sym_normalize(series.union_adjacency(series.split[0]))
    feats = ad.constant(feats_np)
    d0, d = config.feat_dim, config.emb_dim

    snaps = series.snapshots
    train_ids = [t for t in series.split[0] if snaps[t].num_edges]
    valid_ids, test_ids = series.split[1], series.split[2]

    def forward(params, rng, training):
        h = ad.relu(ad.matmul(ad.spmm(a_norm, feats), params["gcn_w0"]))
        h = ad.dropout(h, config.dropout, rng, training)
        return ad.matmul(ad.spmm(a_norm, h), params["gcn_w1"])

    def edge_logits(params, h, t):
        return mdl.predict_edges(h, np.asarray(snaps[t].edge_u),
                                 np.asarray(snaps[t].edge_v), params)

    def pooled(params, h, ids):
        scores, labels = [], []
        for t in ids:
            if snaps[t].num_edges == 0:
                continue
            logits = edge_logits(params, h, t)
            scores.append(ad.row_softmax(logits).data[:, 1])
            labels.append(np.asarray(snaps[t].edge_label))
        if not scores:
            raise ValidationError("no edges to evaluate in the requested split")
        return np.concatenate(scores), np.concatenate(labels)

    reps = []
    checkpoints = []
    for r in range(config.repeats):
        seed_r = config.seed + r
        rng = np.random.default_rng(seed_r)
        params = {
            "gcn_w0": ad.parameter(mdl.glorot(rng, d0, d)),
            "gcn_w1": ad.parameter(mdl.glorot(rng, d, d)),
            "cls_w": ad.parameter(mdl.glorot(rng, 2 * d, 2)),
            "cls_b": ad.parameter(np.zeros((1, 2))),
        }
        opt = Adam(params, lr=config.lr, weight_decay=config.weight_decay)
        epochs = []
        best = None
        best_params = None
        for epoch in range(1, config.total_epochs + 1):
            h = forward(params, rng, training=True)
            loss = None
            for t in train_ids:
                lt = ad.cross_entropy(edge_logits(params, h, t),
                                      snaps[t].edge_label)
                loss = lt if loss is None else ad.add(loss, lt)
            ad.backward(loss)
            opt.step()
            opt.zero_grad()
            with ad.no_grad():
                h_eval = forward(params, rng, training=False)
                v = pooled(params, h_eval, valid_ids)
                te = pooled(params, h_eval, test_ids)
            rec = {"epoch": epoch, "train_loss": loss.item(),
                   "valid": evaluate(*v), "test": evaluate(*te)}
            epochs.append(rec)
            if best is None or rec["valid"]["f1"] > best["valid"]["f1"]:
                best = rec
                best_params = {k: p.data.copy() for k, p in params.items()}
        selected = _select_top5(epochs, config.warmup_epochs, config.total_epochs)
        reps.append({
            "seed": seed_r,
            "epochs": epochs,
            "selected_epochs": [e["epoch"] for e in selected],
            "test_mean": _mean_metrics([e["test"] for e in selected]),
            "best_valid_f1": best["valid"]["f1"],
            "best_epoch": best["epoch"],
        })
        checkpoints.append({"seed": seed_r, "epoch": best["epoch"],
                            "params": best_params})

    report = {
        "model": "baseline-gcn",
        "config": config.to_dict(),
        "config_hash": config.content_hash(),
        "seeds": [config.seed + r for r in range(config.repeats)],
        "reps": reps,
        "aggregate": _mean_metrics([r["test_mean"] for r in reps]),
    }
    return report, checkpoints


# --- ablations --------------------------------------------------------------------

ABLATION_VARIANTS = ("-motif", "-sign", "-global", "full")


def ablate(config: RunConfig, series, motifs=None):
    """Train the full model and each single-component removal."""
    results = {}
    for variant in ABLATION_VARIANTS:
        c = RunConfig(**{**config.to_dict(),
                         "no_motif": variant == "-motif",
                         "no_sign": variant == "-sign",
                         "no_global": variant == "-global"})
        use_motifs = None if c.no_motif else motifs
        report, _ = train(c, series, use_motifs)
        results[variant] = report
    return results


# --- checkpoint serialization -------------------------------------------------------

def save_checkpoint(prefix, params_data, meta) -> None:
    names = sorted(params_data)
    entries = []
    offset = 0
    with open(prefix + ".bin", "wb") as f:
        for name in names:
            arr = np.ascontiguousarray(params_data[name], dtype=np.float64)
            f.write(arr.tobytes())
            entries.append({"name": name, "shape": list(arr.shape),
                            "offset": offset})
            offset += arr.size
    write_json(prefix + ".json", {"format": "checkpoint/v1",
                                  "params": entries, **meta})


def load_checkpoint(prefix):
    manifest = read_json(prefix + ".json")
    if manifest.get("format") != "checkpoint/v1":
        raise ValidationError(f"{prefix}: not a checkpoint")
    flat = np.fromfile(prefix + ".bin", dtype=np.float64)
    params = {}
    for entry in manifest["params"]:
        size = int(np.prod(entry["shape"]))
        chunk = flat[entry["offset"]:entry["offset"] + size]
        params[entry["name"]] = chunk.reshape(entry["shape"]).copy()
    meta = {k: v for k, v in manifest.items() if k not in ("format", "params")}
    return params, meta


# --- embedding export ------------------------------------------------------------------

def node_fraud_labels(series) -> np.ndarray:
    """1 where a node touches more negative than positive edges, over all time."""
    pos = np.zeros(series.num_nodes, dtype=np.int64)
    neg = np.zeros(series.num_nodes, dtype=np.int64)
    for snap in series.snapshots:
        for u, v, s in zip(snap.edge_u, snap.edge_v, snap.edge_sign):
            if s > 0:
                pos[u] += 1
                pos[v] += 1
            else:
                neg[u] += 1
                neg[v] += 1
    return (neg > pos).astype(np.int64)


def export_embeddings(config: RunConfig, series, motifs, params_data, outdir,
                      snapshot_ids=None) -> list:
    """Write per-snapshot final node embeddings as TSV for external plotting."""
    config.validate()
    cfg = config.model_config()
    slices = None if config.no_motif else _motif_slices(series, motifs)
    feats = build_features(series, config.feat_dim)
    prep = mdl.prepare(series, feats, cfg, slices)
    params = {k: ad.constant(v) for k, v in params_data.items()}
    ids = list(range(series.num_snapshots)) if snapshot_ids is None else list(snapshot_ids)
    with ad.no_grad():
        _, _, embeddings = mdl.run_model(prep, params, cfg, None, training=False,
                                         predict_snapshots=ids)
    labels = node_fraud_labels(series)
    os.makedirs(outdir, exist_ok=True)
    written = []
    for t in ids:
        emb = embeddings[t]
        path = os.path.join(outdir, f"embeddings_{t:03d}.tsv")
        with open(path, "w") as f:
            dims = "\t".join(f"e{j}" for j in range(emb.shape[1]))
            f.write(f"node\tlabel\t{dims}\n")
            for i in range(series.num_nodes):
                coords = "\t".join(repr(float(x)) for x in emb[i])
                f.write(f"{series.node_ids[i]}\t{labels[i]}\t{coords}\n")
        written.append(path)
    return written
