"""Per-snapshot embedding assembly and the edge classifier.

Each snapshot combines three signals into the node embeddings:

* signed graph aggregation: positive and negative neighborhoods feed two
  mirrored paths, same-sign neighbors through one weight, cross-sign through
  another;
* a motif-matrix GCN, where the aggregation matrix is the learnable-weighted
  sum of the eight per-edge motif count matrices (normalized, self-loops);
* the latent-group global embedding.

Positive/negative dynamic embeddings smooth the per-snapshot signals over
time with a learnable mixing scalar.  At a prediction snapshot the edge
signs are unknown, so both sign masks are overridden to all-ones on the
snapshot's support for that step only; the history carried forward keeps the
true signs.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import groups as gg
from ._util import ValidationError
from .autodiff import sym_normalize
from .groups import glorot

NORM_FLOOR = 1e-8  # clamp for motif-matrix row sums during normalization


@dataclass
class ModelConfig:
    feat_dim: int = 8
    emb_dim: int = 200
    group_dim: int = 200
    num_groups: int = 10
    mlp_hidden: int = 64
    dropout: float = 0.2
    beta: float = 0.35
    no_motif: bool = False
    no_sign: bool = False
    no_global: bool = False

    @property
    def final_dim(self) -> int:
        d = self.emb_dim if self.no_sign else 2 * self.emb_dim
        if not self.no_global:
            d += self.group_dim
        return d


def init_params(cfg: ModelConfig, rng) -> dict:
    """All learnable tensors, keyed by role.  Mixing scalars start at 0.5
    (raw 0 through a sigmoid); biases start at zero; matrices are Glorot."""
    d0, d = cfg.feat_dim, cfg.emb_dim
    p = {
        "input_proj": ad.parameter(glorot(rng, d0, d)),
        "agg_same": ad.parameter(glorot(rng, d, d)),
        "bias_pos": ad.parameter(np.zeros((1, d))),
        "dynamic_mix_raw": ad.parameter(np.zeros((1, 1))),
        "cls_w": ad.parameter(glorot(rng, 2 * cfg.final_dim, 2)),
        "cls_b": ad.parameter(np.zeros((1, 2))),
    }
    if not cfg.no_sign:
        p["agg_cross"] = ad.parameter(glorot(rng, d, d))
        p["bias_neg"] = ad.parameter(np.zeros((1, d)))
    if not cfg.no_motif:
        p["motif_weights"] = ad.parameter(np.ones((8, 1)))
        p["motif_w0"] = ad.parameter(glorot(rng, d0, d))
        p["motif_w1"] = ad.parameter(glorot(rng, d, d))
    if not cfg.no_global:
        p.update(gg.init_group_params(cfg.num_groups, cfg.group_dim,
                                      d0, cfg.mlp_hidden, rng))
    return p


def sign_override_masks(snapshot):
    """All-ones sign masks on the snapshot's support (prediction time)."""
    a = snapshot.adjacency.copy()
    a.data[:] = 1.0
    return a, a.copy()


@dataclass
class SnapshotInputs:
    pos_norm: object            # normalized S+ (.) A_t
    neg_norm: object            # normalized S- (.) A_t
    full_norm: object           # normalized A_t (override + assignment)
    edge_u: np.ndarray
    edge_v: np.ndarray
    labels: np.ndarray
    motif_rows: np.ndarray = None   # symmetric COO over snapshot edges
    motif_cols: np.ndarray = None
    motif_vals: object = None       # constant Tensor (nnz, 8)


@dataclass
class PreparedData:
    num_nodes: int
    feats: object               # constant Tensor (N, d0)
    snaps: list = field(default_factory=list)
    union_pos: object = None    # normalized cross-time union (train window)
    union_neg: object = None
    train_ids: tuple = ()
    valid_ids: tuple = ()
    test_ids: tuple = ()


def prepare(series, features, cfg: ModelConfig, motif_slices=None) -> PreparedData:
    """Freeze every constant structure the forward pass needs.

    `motif_slices` is a callable t -> MotifCounts (or None when the motif
    path is ablated); it is consulted exactly once per snapshot.
    """
    if not cfg.no_motif and motif_slices is None:
        raise ValidationError("motif counts required unless the motif path is ablated")
    prep = PreparedData(
        num_nodes=series.num_nodes,
        feats=ad.constant(features),
        train_ids=tuple(series.split[0]),
        valid_ids=tuple(series.split[1]),
        test_ids=tuple(series.split[2]),
    )
    for t, snap in enumerate(series.snapshots):
        si = SnapshotInputs(
            pos_norm=None if cfg.no_sign else sym_normalize(snap.sign_pos),
            neg_norm=None if cfg.no_sign else sym_normalize(snap.sign_neg),
            full_norm=sym_normalize(snap.adjacency),
            edge_u=np.asarray(snap.edge_u, dtype=np.int64),
            edge_v=np.asarray(snap.edge_v, dtype=np.int64),
            labels=np.asarray(snap.edge_label, dtype=np.int64),
        )
        if not cfg.no_motif:
            mc = motif_slices(t)
            si.motif_rows = np.concatenate([mc.edge_u, mc.edge_v])
            si.motif_cols = np.concatenate([mc.edge_v, mc.edge_u])
            vals = mc.counts.astype(np.float64)
            si.motif_vals = ad.constant(np.concatenate([vals, vals], axis=0))
        prep.snaps.append(si)
    if not cfg.no_global:
        pos, neg = series.union_signed(series.split[0])
        prep.union_pos = sym_normalize(pos)
        prep.union_neg = sym_normalize(neg)
    return prep


def motif_embed(si: SnapshotInputs, feats, params, cfg, rng, training):
    """Two-layer GCN over the combined motif matrix; gradient reaches the
    per-type combination weights through the normalization."""
    n = feats.shape[0]
    mvals = ad.matmul(si.motif_vals, params["motif_weights"])      # (nnz, 1)
    rowsum = ad.affine(ad.scatter_rows(mvals, si.motif_rows, n), 1.0, 1.0)
    dinv = ad.power(rowsum, -0.5, floor=NORM_FLOOR)
    offd = ad.hadamard(ad.hadamard(ad.gather_rows(dinv, si.motif_rows), mvals),
                       ad.gather_rows(dinv, si.motif_cols))
    diag = ad.power(rowsum, -1.0, floor=NORM_FLOOR)

    h = ad.relu(ad.matmul(
        ad.spmm_coo(si.motif_rows, si.motif_cols, offd, diag, feats),
        params["motif_w0"]))
    h = ad.dropout(h, cfg.dropout, rng, training)
    h = ad.relu(ad.matmul(
        ad.spmm_coo(si.motif_rows, si.motif_cols, offd, diag, h),
        params["motif_w1"]))
    return ad.dropout(h, cfg.dropout, rng, training)


def graph_embed(si: SnapshotInputs, dy_pos, dy_neg, params, cfg, rng, training,
                override=False):
    """Signed neighborhood aggregation (mirrored positive/negative paths)."""
    if cfg.no_sign:
        agg = ad.spmm(si.full_norm, dy_pos)
        g = ad.relu(ad.add(ad.matmul(agg, params["agg_same"]), params["bias_pos"]))
        g = ad.dropout(g, cfg.dropout, rng, training)
        return g, g
    a_pos = si.full_norm if override else si.pos_norm
    a_neg = si.full_norm if override else si.neg_norm
    from_pos = ad.spmm(a_pos, dy_pos)
    from_neg = ad.spmm(a_neg, dy_neg)
    g_pos = ad.relu(ad.add(
        ad.add(ad.matmul(from_pos, params["agg_same"]),
               ad.matmul(from_neg, params["agg_cross"])),
        params["bias_pos"]))
    g_neg = ad.relu(ad.add(
        ad.add(ad.matmul(from_neg, params["agg_same"]),
               ad.matmul(from_pos, params["agg_cross"])),
        params["bias_neg"]))
    g_pos = ad.dropout(g_pos, cfg.dropout, rng, training)
    g_neg = ad.dropout(g_neg, cfg.dropout, rng, training)
    return g_pos, g_neg


def dynamic_embed(g_pos, g_neg, motif, dy_pos_prev, dy_neg_prev, params, cfg):
    """Exponential smoothing of the per-snapshot signal into the history."""
    mix = ad.sigmoid(params["dynamic_mix_raw"])
    keep = ad.affine(mix, -1.0, 1.0)

    def one(g, prev):
        cur = g if motif is None else ad.add(g, ad.affine(motif, cfg.beta))
        return ad.add(ad.scale_by(cur, mix), ad.scale_by(prev, keep))

    dy_pos = one(g_pos, dy_pos_prev)
    if cfg.no_sign:
        return dy_pos, dy_pos
    return dy_pos, one(g_neg, dy_neg_prev)


def final_embed(dy_pos, dy_neg, z_t, cfg):
    parts = [dy_pos] if cfg.no_sign else [dy_pos, dy_neg]
    if not cfg.no_global:
        parts.append(z_t)
    return ad.concat_cols(parts) if len(parts) > 1 else parts[0]


def predict_edges(emb, edge_u, edge_v, params):
    """Class logits for edges from concatenated endpoint embeddings."""
    n = emb.shape[0]
    if len(edge_u) and (edge_u.max() >= n or edge_v.max() >= n):
        raise ValidationError("edge references a node outside the embedding")
    link = ad.concat_cols([ad.gather_rows(emb, edge_u),
                           ad.gather_rows(emb, edge_v)])
    return ad.add(ad.matmul(link, params["cls_w"]), params["cls_b"])


def run_model(prep: PreparedData, params, cfg: ModelConfig, rng, training,
              loss_snapshots=(), predict_snapshots=(), collect_apm=None):
    """Unroll over all snapshots.

    At every snapshot in `loss_snapshots` or `predict_snapshots` a prediction
    branch runs with the all-ones sign override before the true-signed state
    is carried forward.  Returns (total_loss Tensor or None, probs dict
    t -> (E_t, 2) array, embeddings dict t -> history-branch final embedding).
    """
    loss_set = set(loss_snapshots)
    pred_set = set(predict_snapshots)
    t_max = max(loss_set | pred_set) if (loss_set | pred_set) else len(prep.snaps) - 1

    # global path: assignment matrices and windowed global embeddings
    z_per_t = [None] * (t_max + 1)
    if not cfg.no_global:
        q0 = gg.node_group_attention(prep.feats, params)
        qp = gg.signed_attention_aggregate(q0, prep.union_pos, prep.union_neg,
                                           params, rng, training, cfg.dropout)
        z_prev = None
        for t in range(t_max + 1):
            apm = gg.temporal_assignment(qp, prep.snaps[t].full_norm, params)
            if collect_apm is not None:
                collect_apm(t, apm.data)
            z_prev = gg.global_embedding(apm, params, z_prev)
            z_per_t[t] = z_prev

    dy_pos = dy_neg = ad.matmul(prep.feats, params["input_proj"])
    total_loss = None
    probs = {}
    embeddings = {}
    for t in range(t_max + 1):
        si = prep.snaps[t]
        motif = None
        if not cfg.no_motif:
            motif = motif_embed(si, prep.feats, params, cfg, rng, training)

        if t in loss_set or t in pred_set:
            g_pos_o, g_neg_o = graph_embed(si, dy_pos, dy_neg, params, cfg,
                                           rng, training, override=True)
            dp_o, dn_o = dynamic_embed(g_pos_o, g_neg_o, motif,
                                       dy_pos, dy_neg, params, cfg)
            emb_o = final_embed(dp_o, dn_o, z_per_t[t], cfg)
            if len(si.edge_u):
                logits = predict_edges(emb_o, si.edge_u, si.edge_v, params)
                if t in loss_set:
                    loss_t = ad.cross_entropy(logits, si.labels)
                    total_loss = loss_t if total_loss is None else ad.add(total_loss, loss_t)
                if t in pred_set:
                    probs[t] = ad.row_softmax(logits).data

        g_pos, g_neg = graph_embed(si, dy_pos, dy_neg, params, cfg,
                                   rng, training, override=False)
        dy_pos, dy_neg = dynamic_embed(g_pos, g_neg, motif,
                                       dy_pos, dy_neg, params, cfg)
        if t in pred_set:
            embeddings[t] = final_embed(dy_pos, dy_neg, z_per_t[t], cfg).data

    return total_loss, probs, embeddings
