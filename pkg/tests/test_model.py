import numpy as np
import pytest

from conftest import snapshot_from_edges, synthetic_events
from gradcheck import check_grads
from motiftrust import autodiff as ad
from motiftrust import model as mdl
from motiftrust._util import ValidationError
from motiftrust.ingest import build_features, build_snapshots
from motiftrust.motifs import count_motifs


def tiny_cfg(**kw):
    base = dict(feat_dim=4, emb_dim=3, group_dim=2, num_groups=2,
                mlp_hidden=3, dropout=0.0, beta=0.35)
    base.update(kw)
    return mdl.ModelConfig(**base)


def signed_triangle_snapshot():
    # 0-1 positive, 1-2 negative, 0-2 positive
    return snapshot_from_edges(3, [(0, 1), (1, 2), (0, 2)], signs=[1, -1, 1])


def prepared_toy(cfg, seed=0, num_snaps=3, n=6):
    events = synthetic_events(num_nodes=n, num_events=n * 12, seed=seed)
    series = build_snapshots(events, num_snaps, "equal-edges",
                             (num_snaps - 2, 1, 1))
    slices = [count_motifs(s) for s in series.snapshots]
    feats = build_features(series, cfg.feat_dim)
    prep = mdl.prepare(series, feats, cfg,
                       None if cfg.no_motif else (lambda t: slices[t]))
    return series, prep


class TestGraphEmbed:
    def make_inputs(self, snap, cfg, seed=1):
        rng = np.random.default_rng(seed)
        params = mdl.init_params(cfg, rng)
        si = mdl.SnapshotInputs(
            pos_norm=ad.sym_normalize(snap.sign_pos),
            neg_norm=ad.sym_normalize(snap.sign_neg),
            full_norm=ad.sym_normalize(snap.adjacency),
            edge_u=snap.edge_u, edge_v=snap.edge_v, labels=snap.edge_label)
        dy_pos = ad.constant(rng.normal(size=(snap.num_nodes, cfg.emb_dim)))
        dy_neg = ad.constant(rng.normal(size=(snap.num_nodes, cfg.emb_dim)))
        return params, si, dy_pos, dy_neg

    def test_all_positive_graph_negative_term_vanishes(self):
        snap = snapshot_from_edges(3, [(0, 1), (1, 2)], signs=[1, 1])
        cfg = tiny_cfg(no_global=True, no_motif=True)
        params, si, dy_pos, dy_neg = self.make_inputs(snap, cfg)
        g_pos, _ = mdl.graph_embed(si, dy_pos, dy_neg, params, cfg, None, False)
        expected = np.maximum(
            si.pos_norm @ dy_pos.data @ params["agg_same"].data
            + si.neg_norm @ dy_neg.data @ params["agg_cross"].data
            + params["bias_pos"].data, 0.0)
        assert np.allclose(g_pos.data, expected, atol=1e-12)
        # empty negative support means neg_norm is exactly the identity
        assert np.allclose(si.neg_norm.toarray(), np.eye(3))

    def test_isolated_node_rows_are_relu_bias(self):
        # node 3 is isolated; with zero previous embeddings every row is
        # ReLU(bias)
        snap = snapshot_from_edges(4, [(0, 1)], signs=[1])
        cfg = tiny_cfg(no_global=True, no_motif=True)
        params, si, _, _ = self.make_inputs(snap, cfg)
        zero = ad.constant(np.zeros((4, cfg.emb_dim)))
        g_pos, g_neg = mdl.graph_embed(si, zero, zero, params, cfg, None, False)
        assert np.allclose(g_pos.data[3], np.maximum(params["bias_pos"].data, 0))
        assert np.allclose(g_neg.data[3], np.maximum(params["bias_neg"].data, 0))

    def test_signed_triangle_matches_dense_computation(self):
        snap = signed_triangle_snapshot()
        cfg = tiny_cfg(no_global=True, no_motif=True)
        params, si, dy_pos, dy_neg = self.make_inputs(snap, cfg, seed=7)
        g_pos, g_neg = mdl.graph_embed(si, dy_pos, dy_neg, params, cfg, None, False)
        ap = si.pos_norm.toarray()
        an = si.neg_norm.toarray()
        w3, w4 = params["agg_same"].data, params["agg_cross"].data
        exp_pos = np.maximum(ap @ dy_pos.data @ w3 + an @ dy_neg.data @ w4
                             + params["bias_pos"].data, 0.0)
        exp_neg = np.maximum(an @ dy_neg.data @ w3 + ap @ dy_pos.data @ w4
                             + params["bias_neg"].data, 0.0)
        assert np.allclose(g_pos.data, exp_pos, atol=1e-12)
        assert np.allclose(g_neg.data, exp_neg, atol=1e-12)

    def test_sign_swap_symmetry(self):
        # swapping masks, biases, and initial embeddings swaps the two
        # outputs exactly (the like-sign/cross-sign weights stay put)
        snap = signed_triangle_snapshot()
        cfg = tiny_cfg(no_global=True, no_motif=True)
        params, si, dy_pos, dy_neg = self.make_inputs(snap, cfg, seed=3)
        si_swapped = mdl.SnapshotInputs(
            pos_norm=si.neg_norm, neg_norm=si.pos_norm,
            full_norm=si.full_norm,
            edge_u=si.edge_u, edge_v=si.edge_v, labels=si.labels)
        params_swapped = dict(params)
        params_swapped["bias_pos"] = params["bias_neg"]
        params_swapped["bias_neg"] = params["bias_pos"]
        a_pos, a_neg = mdl.graph_embed(si, dy_pos, dy_neg, params, cfg, None, False)
        b_pos, b_neg = mdl.graph_embed(si_swapped, dy_neg, dy_pos,
                                       params_swapped, cfg, None, False)
        assert np.allclose(a_pos.data, b_neg.data, atol=1e-15)
        assert np.allclose(a_neg.data, b_pos.data, atol=1e-15)

    def test_override_aggregates_identical_neighborhoods(self):
        snap = signed_triangle_snapshot()
        cfg = tiny_cfg(no_global=True, no_motif=True)
        params, si, dy_pos, dy_neg = self.make_inputs(snap, cfg, seed=5)
        g_pos, _ = mdl.graph_embed(si, dy_pos, dy_neg, params, cfg, None, False,
                                   override=True)
        full = si.full_norm.toarray()
        exp = np.maximum(full @ dy_pos.data @ params["agg_same"].data
                         + full @ dy_neg.data @ params["agg_cross"].data
                         + params["bias_pos"].data, 0.0)
        assert np.allclose(g_pos.data, exp, atol=1e-12)

    def test_override_activates_dormant_path(self):
        # all-positive snapshot: without override the negative mask carries
        # no neighbors, with override it sees the full neighborhood
        snap = snapshot_from_edges(3, [(0, 1), (1, 2)], signs=[1, 1])
        cfg = tiny_cfg(no_global=True, no_motif=True)
        params, si, dy_pos, dy_neg = self.make_inputs(snap, cfg, seed=2)
        _, g_neg_true = mdl.graph_embed(si, dy_pos, dy_neg, params, cfg, None, False)
        _, g_neg_ovr = mdl.graph_embed(si, dy_pos, dy_neg, params, cfg, None, False,
                                       override=True)
        assert not np.allclose(g_neg_true.data, g_neg_ovr.data)

    def test_sign_override_masks_are_all_ones_on_support(self):
        snap = signed_triangle_snapshot()
        sp_, sn_ = mdl.sign_override_masks(snap)
        assert (sp_ != snap.adjacency).nnz == 0
        assert (sn_ != snap.adjacency).nnz == 0
        assert np.all(sp_.data == 1.0)


class TestMotifEmbed:
    def make(self, snap, cfg, seed=1):
        rng = np.random.default_rng(seed)
        params = mdl.init_params(cfg, rng)
        mc = count_motifs(snap)
        vals = mc.counts.astype(np.float64)
        si = mdl.SnapshotInputs(
            pos_norm=None, neg_norm=None,
            full_norm=ad.sym_normalize(snap.adjacency),
            edge_u=snap.edge_u, edge_v=snap.edge_v, labels=snap.edge_label,
            motif_rows=np.concatenate([mc.edge_u, mc.edge_v]),
            motif_cols=np.concatenate([mc.edge_v, mc.edge_u]),
            motif_vals=ad.constant(np.concatenate([vals, vals], axis=0)))
        return params, si

    def test_zero_motif_matrix_reduces_to_row_mlp(self):
        # triangle-free graph with alpha selecting triangles only
        snap = snapshot_from_edges(4, [(0, 1), (1, 2), (2, 3)])
        cfg = tiny_cfg(no_global=True)
        params, si = self.make(snap, cfg)
        params["motif_weights"].data[:] = 0.0
        params["motif_weights"].data[0] = 1.0  # triangles: none exist
        feats = ad.constant(np.random.default_rng(0).normal(size=(4, cfg.feat_dim)))
        out = mdl.motif_embed(si, feats, params, cfg, None, False)
        h = np.maximum(feats.data @ params["motif_w0"].data, 0.0)
        expected = np.maximum(h @ params["motif_w1"].data, 0.0)
        assert np.allclose(out.data, expected, atol=1e-12)

    def test_triangle_graph_matches_dense_normalized_gcn(self):
        snap = snapshot_from_edges(3, [(0, 1), (1, 2), (0, 2)])
        cfg = tiny_cfg(no_global=True)
        params, si = self.make(snap, cfg, seed=9)
        params["motif_weights"].data[:] = 0.0
        params["motif_weights"].data[0] = 1.0  # every edge count = 1
        feats = ad.constant(np.random.default_rng(1).normal(size=(3, cfg.feat_dim)))
        out = mdl.motif_embed(si, feats, params, cfg, None, False)
        m = np.ones((3, 3)) - np.eye(3) + np.eye(3)  # counts + self-loops
        d = np.diag(1.0 / np.sqrt(m.sum(axis=1)))
        mhat = d @ m @ d
        h = np.maximum(mhat @ feats.data @ params["motif_w0"].data, 0.0)
        expected = np.maximum(mhat @ h @ params["motif_w1"].data, 0.0)
        assert np.allclose(out.data, expected, atol=1e-12)


class TestDynamicEmbed:
    def test_mix_limits(self):
        cfg = tiny_cfg(no_global=True, no_motif=True)
        params = mdl.init_params(cfg, np.random.default_rng(0))
        g = ad.constant(np.random.default_rng(1).normal(size=(4, 3)))
        prev = ad.constant(np.random.default_rng(2).normal(size=(4, 3)))
        params["dynamic_mix_raw"].data[:] = 40.0
        dy, _ = mdl.dynamic_embed(g, g, None, prev, prev, params, cfg)
        assert np.allclose(dy.data, g.data, atol=1e-12)
        params["dynamic_mix_raw"].data[:] = -40.0
        dy, _ = mdl.dynamic_embed(g, g, None, prev, prev, params, cfg)
        assert np.allclose(dy.data, prev.data, atol=1e-12)

    def test_hand_arithmetic(self):
        cfg = tiny_cfg(no_global=True, beta=0.35)
        params = mdl.init_params(cfg, np.random.default_rng(0))
        params["dynamic_mix_raw"].data[:] = 0.0  # mix = 0.5
        g = ad.constant(np.full((1, 3), 2.0))
        motif = ad.constant(np.full((1, 3), 4.0))
        prev = ad.constant(np.full((1, 3), 10.0))
        dy, _ = mdl.dynamic_embed(g, g, motif, prev, prev, params, cfg)
        # 0.5 * (2 + 0.35*4) + 0.5 * 10 = 6.7
        assert np.allclose(dy.data, 6.7)

    def test_temporal_recursion_unrolls_geometric(self):
        cfg = tiny_cfg(no_global=True, no_motif=True)
        params = mdl.init_params(cfg, np.random.default_rng(0))
        params["dynamic_mix_raw"].data[:] = 0.7
        mix = 1.0 / (1.0 + np.exp(-0.7))
        rng = np.random.default_rng(5)
        gs = [ad.constant(rng.normal(size=(3, 3))) for _ in range(3)]
        prev = ad.constant(rng.normal(size=(3, 3)))
        dy = prev
        for g in gs:
            dy, _ = mdl.dynamic_embed(g, g, None, dy, dy, params, cfg)
        expected = (mix * gs[2].data
                    + mix * (1 - mix) * gs[1].data
                    + mix * (1 - mix) ** 2 * gs[0].data
                    + (1 - mix) ** 3 * prev.data)
        assert np.allclose(dy.data, expected, atol=1e-12)


class TestFinalEmbedAndPredict:
    def test_concat_shapes_and_slices(self):
        cfg = tiny_cfg()
        rng = np.random.default_rng(0)
        dp = ad.constant(rng.normal(size=(5, 2)))
        dn = ad.constant(rng.normal(size=(5, 2)))
        z = ad.constant(rng.normal(size=(5, 3)))
        cfg2 = mdl.ModelConfig(emb_dim=2, group_dim=3, feat_dim=4)
        emb = mdl.final_embed(dp, dn, z, cfg2)
        assert emb.shape == (5, 7)
        assert np.array_equal(emb.data[:, :2], dp.data)
        assert np.array_equal(emb.data[:, 2:4], dn.data)
        assert np.array_equal(emb.data[:, 4:], z.data)

    def test_zero_global_block(self):
        cfg = mdl.ModelConfig(emb_dim=2, group_dim=3, feat_dim=4)
        dp = ad.constant(np.ones((4, 2)))
        z = ad.constant(np.zeros((4, 3)))
        emb = mdl.final_embed(dp, dp, z, cfg)
        assert np.allclose(emb.data[:, 4:], 0.0)

    def test_zero_classifier_gives_uniform(self):
        cfg = tiny_cfg(no_global=True, no_motif=True)
        params = mdl.init_params(cfg, np.random.default_rng(0))
        params["cls_w"].data[:] = 0.0
        params["cls_b"].data[:] = 0.0
        emb = ad.constant(np.random.default_rng(1).normal(size=(4, 2 * cfg.emb_dim)))
        logits = mdl.predict_edges(emb, np.array([0, 1]), np.array([2, 3]), params)
        probs = ad.row_softmax(logits).data
        assert np.allclose(probs, 0.5)
        loss = ad.cross_entropy(logits, [0, 1])
        assert abs(loss.item() - np.log(2)) < 1e-12

    def test_invalid_node_id(self):
        cfg = tiny_cfg(no_global=True, no_motif=True)
        params = mdl.init_params(cfg, np.random.default_rng(0))
        emb = ad.constant(np.zeros((3, 2 * cfg.emb_dim)))
        with pytest.raises(ValidationError):
            mdl.predict_edges(emb, np.array([0]), np.array([5]), params)


class TestEndToEnd:
    def test_full_gradient_check_toy(self):
        # 6 nodes, 3 snapshots, 2 groups: every learnable path vs the oracle
        cfg = tiny_cfg()
        series, prep = prepared_toy(cfg, seed=1)
        params = mdl.init_params(cfg, np.random.default_rng(4))
        train_ids = [t for t in prep.train_ids if len(prep.snaps[t].labels)]

        def build():
            loss, _, _ = mdl.run_model(prep, params, cfg, None, training=False,
                                       loss_snapshots=train_ids)
            return loss

        errs = check_grads(build, params)
        worst = max(errs.values())
        assert worst < 1e-4, errs

    def test_sign_swap_symmetry_through_time(self):
        cfg = tiny_cfg(no_global=True, no_motif=True)
        series, prep = prepared_toy(cfg, seed=2)
        params = mdl.init_params(cfg, np.random.default_rng(1))

        swapped_prep = mdl.PreparedData(
            num_nodes=prep.num_nodes, feats=prep.feats,
            snaps=[mdl.SnapshotInputs(
                pos_norm=s.neg_norm, neg_norm=s.pos_norm, full_norm=s.full_norm,
                edge_u=s.edge_u, edge_v=s.edge_v, labels=s.labels)
                for s in prep.snaps],
            train_ids=prep.train_ids, valid_ids=prep.valid_ids,
            test_ids=prep.test_ids)
        params_swapped = dict(params)
        params_swapped["bias_pos"] = params["bias_neg"]
        params_swapped["bias_neg"] = params["bias_pos"]

        def unroll(pr, pa):
            dy_pos = dy_neg = ad.matmul(pr.feats, pa["input_proj"])
            outs = []
            for si in pr.snaps:
                g_pos, g_neg = mdl.graph_embed(si, dy_pos, dy_neg, pa, cfg,
                                               None, False)
                dy_pos, dy_neg = mdl.dynamic_embed(g_pos, g_neg, None,
                                                   dy_pos, dy_neg, pa, cfg)
                outs.append((dy_pos.data.copy(), dy_neg.data.copy()))
            return outs

        a = unroll(prep, params)
        b = unroll(swapped_prep, params_swapped)
        for (ap_, an_), (bp_, bn_) in zip(a, b):
            assert np.allclose(ap_, bn_, atol=1e-14)
            assert np.allclose(an_, bp_, atol=1e-14)

    def test_label_permutation_keeps_epoch1_loss_near_ln2(self):
        from motiftrust.optim import Adam

        cfg = tiny_cfg()
        series, prep = prepared_toy(cfg, seed=3, n=10)
        rng = np.random.default_rng(0)
        # shuffle training labels in place (balanced-ish on synthetic data)
        for t in prep.train_ids:
            rng.shuffle(prep.snaps[t].labels)
        params = mdl.init_params(cfg, np.random.default_rng(2))
        opt = Adam(params)
        train_ids = [t for t in prep.train_ids if len(prep.snaps[t].labels)]
        loss, _, _ = mdl.run_model(prep, params, cfg, rng, training=True,
                                   loss_snapshots=train_ids)
        ad.backward(loss)
        opt.step()
        per_snap = loss.item() / len(train_ids)
        assert abs(per_snap - np.log(2)) < 0.25
