"""Latent-group global embeddings.

Nodes hold soft memberships over C learned groups (a generalization of the
two-faction split implied by balance theory).  The pipeline: an MLP lifts
node features, inner products against per-group anchor embeddings give raw
attentions, a two-layer signed aggregation over the cross-time union graph
mixes in structure, a per-snapshot transform + row softmax yields the
assignment matrix, and the global embedding is an exponentially smoothed
mix of assignment-weighted anchors.
"""

import numpy as np

from . import autodiff as ad
from ._util import ValidationError


def glorot(rng, fan_in, fan_out, shape=None):
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape if shape is not None else (fan_in, fan_out))


def init_group_params(num_groups, group_dim, feat_dim, mlp_hidden, rng):
    """Learnable state for the global path; uniform Glorot init throughout."""
    if num_groups < 2:
        raise ValidationError("need at least 2 latent groups")
    c, d = num_groups, group_dim
    return {
        "group_emb": ad.parameter(glorot(rng, c, d)),
        "mlp_w1": ad.parameter(glorot(rng, feat_dim, mlp_hidden)),
        "mlp_b1": ad.parameter(np.zeros((1, mlp_hidden))),
        "mlp_w2": ad.parameter(glorot(rng, mlp_hidden, d)),
        "mlp_b2": ad.parameter(np.zeros((1, d))),
        "sign_agg_w0": ad.parameter(glorot(rng, c, c)),
        "sign_agg_w1": ad.parameter(glorot(rng, c, c)),
        "attn_transform": ad.parameter(glorot(rng, 2 * c, c)),
        "global_mix_raw": ad.parameter(np.zeros((1, 1))),  # sigmoid -> (0,1)
    }


def node_group_attention(feats, params):
    """Raw node-to-group attentions: MLP(X) against the group anchors."""
    h = ad.relu(ad.add(ad.matmul(feats, params["mlp_w1"]), params["mlp_b1"]))
    lifted = ad.add(ad.matmul(h, params["mlp_w2"]), params["mlp_b2"])
    return _matmul_bt(lifted, params["group_emb"])


def _matmul_bt(a, b):
    """a @ b.T with gradients to both operands."""
    out_data = a.data @ b.data.T

    def backward(out):
        if a.requires_grad:
            a.accumulate(out.grad @ b.data)
        if b.requires_grad:
            b.accumulate(out.grad.T @ a.data)

    return ad._make(out_data, (a, b), backward, "matmul_bt")


def signed_attention_aggregate(q0, pos_union, neg_union, params,
                               rng=None, training=False, drop=0.0):
    """Two-layer aggregation over the positive/negative union graphs.

    Both halves share the layer weights; the halves are concatenated.  The
    union adjacencies are symmetric-normalized constants.
    """
    def half(a_norm):
        h = ad.relu(ad.matmul(ad.spmm(a_norm, q0), params["sign_agg_w0"]))
        if training and drop > 0.0:
            h = ad.dropout(h, drop, rng, training)
        return ad.spmm(a_norm, ad.matmul(h, params["sign_agg_w1"]))

    return ad.concat_cols([half(pos_union), half(neg_union)])


def temporal_assignment(qp, snap_norm, params):
    """Row-stochastic node-to-group assignment for one snapshot."""
    qt = ad.matmul(ad.spmm(snap_norm, qp), params["attn_transform"])
    return ad.row_softmax(qt)


def global_embedding(apm, params, z_prev=None):
    """Windowed global embedding: mix of current assignment and history.

    With no history (first snapshot) the embedding is the assignment-weighted
    anchor matrix itself.
    """
    current = ad.matmul(apm, params["group_emb"])
    if z_prev is None:
        return current
    mix = ad.sigmoid(params["global_mix_raw"])
    keep = ad.affine(mix, -1.0, 1.0)
    return ad.add(ad.scale_by(current, mix), ad.scale_by(z_prev, keep))
