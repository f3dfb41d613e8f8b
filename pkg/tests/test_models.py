import math

import numpy as np
import pytest

from splitgnn import graph as G
from splitgnn import models as M
from splitgnn import tensor as T
from splitgnn.errors import ConfigError, ContractError
from splitgnn.seeding import stable_rng


def fixture_bundle(seed=0, n_u=12, n_v=8, feature_dim=5):
    spec = G.SyntheticSpec(
        node_counts={"u": n_u, "v": n_v},
        relations=[
            G.RelationSpec("uu", "u", "u", edge_dim=2, avg_degree=2.0, symmetric=True),
            G.RelationSpec("uv", "u", "v", edge_dim=1, avg_degree=1.5),
            G.RelationSpec("vu", "v", "u", edge_dim=1, avg_degree=1.5),
        ],
        feature_dim=feature_dim,
        num_classes=2,
        homophily=0.7,
    )
    return G.generate_synthetic(spec, seed=seed)


def small_config(**overrides):
    kwargs = dict(kind="hat", layers=2, hidden=4, heads=2, fusion="concat", dropout=0.0)
    kwargs.update(overrides)
    return M.EncoderConfig(**kwargs)


class TestTransformAndFuse:
    def setup_method(self):
        rng = stable_rng("taf")
        self.params = {}
        self.Wt = M.init_param(self.params, "Wt", (3, 4), 0)
        self.bt = M.init_param(self.params, "bt", (4,), 0, zeros=True)
        self.We = M.init_param(self.params, "We", (2, 4), 0)
        self.be = M.init_param(self.params, "be", (4,), 0, zeros=True)
        self.node = rng.standard_normal((5, 3))
        self.edge = rng.standard_normal((5, 2))

    def test_add_with_zero_edge_latent(self):
        zeros_edge = np.zeros((5, 2))
        self.We.values[:] = 0.0
        out = M.transform_and_fuse(None, self.node, zeros_edge, self.Wt, self.bt,
                                   self.We, self.be, fusion="add")
        expected = T.linear(None, self.node, self.Wt, self.bt)
        np.testing.assert_allclose(out.values, expected.values)

    def test_concat_width_before_projection(self):
        h = T.linear(None, self.node, self.Wt, self.bt)
        r = T.linear(None, self.edge, self.We, self.be)
        cat = T.concat_cols(None, [h, r])
        assert cat.shape == (5, 8)  # 2d wide before the learned projection

    def test_gradient_wrt_node_weight(self):
        params = {}
        Wt = M.init_param(params, "g/Wt", (3, 4), 1)
        bt = M.init_param(params, "g/bt", (4,), 1, zeros=True)
        We = M.init_param(params, "g/We", (2, 4), 1)
        be = M.init_param(params, "g/be", (4,), 1, zeros=True)
        Wf = M.init_param(params, "g/Wf", (8, 4), 1)
        bf = M.init_param(params, "g/bf", (4,), 1, zeros=True)
        node, edge = self.node, self.edge

        def forward():
            tape = T.Tape()
            out = M.transform_and_fuse(tape, node, edge, Wt, bt, We, be,
                                       fusion="concat", fusion_params={"W": Wf, "b": bf})
            return T.mean_all(tape, T.mul(tape, out, out)), tape

        assert T.finite_diff_check(forward, [Wt]) < 1e-4


class TestNodeAttention:
    def _projs(self, d, m, seed=3):
        params = {}
        return [M.init_param(params, f"p{i}", (d, d), seed) for i in range(m)]

    def test_identical_neighbors_uniform(self):
        d = 4
        projs = self._projs(d, 2)
        rng = stable_rng("na-uniform")
        latent = rng.standard_normal(d)
        neighbors = np.stack([latent, latent])
        _, alphas = M.node_attention(None, T.Tensor(latent), neighbors, projs, 0.5)
        for alpha in alphas:
            np.testing.assert_allclose(alpha, [0.5, 0.5], atol=1e-12)

    def test_single_neighbor(self):
        d = 3
        projs = self._projs(d, 2)
        rng = stable_rng("na-single")
        target = rng.standard_normal(d)
        nbr = rng.standard_normal(d)
        z, alphas = M.node_attention(None, T.Tensor(target), nbr[None, :], projs, 1.0)
        for alpha in alphas:
            np.testing.assert_allclose(alpha, [1.0])
        expected = sum(nbr @ p.values for p in projs)
        expected = np.where(expected > 0, expected, np.expm1(expected))
        np.testing.assert_allclose(z.values, expected, rtol=1e-12)

    def test_matches_hand_loop(self):
        # Straight-line scalar recomputation of the attention equations.
        d, lam = 3, 0.8
        projs = self._projs(d, 1, seed=9)
        rng = stable_rng("na-loop")
        target = rng.standard_normal(d)
        neighbors = rng.standard_normal((3, d))
        z, _ = M.node_attention(None, T.Tensor(target), neighbors, projs, lam)

        P = projs[0].values
        t = target @ P
        hs = [nb @ P for nb in neighbors]
        raw = [math.exp(lam * sum(t[k] * h[k] for k in range(d))) for h in hs]
        alpha = [r / sum(raw) for r in raw]
        acc = np.zeros(d)
        for a, h in zip(alpha, hs):
            acc += a * h
        expected = np.where(acc > 0, acc, np.expm1(acc))
        np.testing.assert_allclose(z.values, expected, rtol=1e-10)

    def test_empty_neighbors_rejected(self):
        with pytest.raises(ContractError):
            M.node_attention(None, T.Tensor(np.ones(3)), np.zeros((0, 3)),
                             self._projs(3, 1), 1.0)

    def test_permutation_invariance(self):
        d = 4
        projs = self._projs(d, 2, seed=5)
        rng = stable_rng("na-perm")
        target = rng.standard_normal(d)
        neighbors = rng.standard_normal((5, d))
        z1, _ = M.node_attention(None, T.Tensor(target), neighbors, projs, 0.6)
        perm = rng.permutation(5)
        z2, _ = M.node_attention(None, T.Tensor(target), neighbors[perm], projs, 0.6)
        np.testing.assert_allclose(z1.values, z2.values, atol=1e-12)


class TestPathAttention:
    def _params(self, d, seed=7):
        params = {}
        q = M.init_param(params, "pa/q", (d,), seed)
        Wp = M.init_param(params, "pa/W", (d, d), seed)
        bp = M.init_param(params, "pa/b", (d,), seed, zeros=True)
        return q, Wp, bp

    def test_single_channel_identity(self):
        q, Wp, bp = self._params(3)
        z = stable_rng("pa-one").standard_normal((6, 3))
        out, beta = M.path_attention(None, [T.Tensor(z)], q, Wp, bp)
        np.testing.assert_allclose(beta, [1.0])
        np.testing.assert_allclose(out.values, z)

    def test_identical_channels_half_half(self):
        q, Wp, bp = self._params(3)
        z = stable_rng("pa-two").standard_normal((6, 3))
        out, beta = M.path_attention(None, [T.Tensor(z), T.Tensor(z.copy())], q, Wp, bp)
        np.testing.assert_allclose(beta, [0.5, 0.5], atol=1e-12)
        np.testing.assert_allclose(out.values, z, atol=1e-12)

    def test_three_channels_convex_combination(self):
        q, Wp, bp = self._params(4)
        rng = stable_rng("pa-three")
        zs = [rng.standard_normal((5, 4)) for _ in range(3)]
        out, beta = M.path_attention(None, [T.Tensor(z) for z in zs], q, Wp, bp)
        assert abs(beta.sum() - 1.0) <= 1e-12
        assert np.all(beta > 0)
        recomputed = sum(b * z for b, z in zip(beta, zs))
        np.testing.assert_allclose(out.values, recomputed, rtol=1e-12)
        upper = np.maximum.reduce(zs)
        lower = np.minimum.reduce(zs)
        assert np.all(out.values <= upper + 1e-12)
        assert np.all(out.values >= lower - 1e-12)


class TestEncoders:
    def test_isolated_participant_transforms_own_features(self):
        # no edges at all: embedding is the K-fold nodewise transform
        g = G.HetGraph(
            ["u"] * 4, stable_rng("iso").standard_normal((4, 3)),
            {"r": G.Relation("r", [], [], np.zeros((0, 2)), "u", "u")},
        )
        cfg = small_config(heads=1, fusion="add")
        enc = M.HatEncoder(g, cfg, seed=0, scope="enc")
        out = enc.forward(None, [0, 1, 2, 3])
        x = g.features
        for l in range(cfg.layers):
            W = enc.params[f"enc/l{l}/type:u/W"].values
            b = enc.params[f"enc/l{l}/type:u/b"].values
            h = x @ W + b
            # self-loop only: alpha=[1]; heads=1 so z = elu(h P)
            P = enc.params[f"enc/l{l}/rel:r/head0"].values
            z = h @ P
            z = np.where(z > 0, z, np.expm1(z))
            x = z  # single channel: path attention returns it unchanged
        np.testing.assert_allclose(out.values, x, rtol=1e-10)

    def test_alpha_and_beta_normalized(self):
        bundle = fixture_bundle()
        enc = M.HatEncoder(
            _single_view(bundle), small_config(), seed=1, scope="enc")
        enc.forward(None, [0, 1, 2])
        assert enc.diagnostics["alpha"]
        for (layer, name, head), (alpha, seg) in enc.diagnostics["alpha"].items():
            sums = np.zeros(bundle.graph.num_nodes)
            np.add.at(sums, seg, alpha)
            present = np.unique(seg)
            np.testing.assert_allclose(sums[present], 1.0, atol=1e-12)
            assert np.all(alpha >= 0)
        for layer, beta in enc.diagnostics["beta"].items():
            assert abs(beta.sum() - 1.0) <= 1e-12

    def test_neighbor_permutation_leaves_embeddings(self):
        bundle = fixture_bundle(seed=3)
        view = _single_view(bundle)
        enc1 = M.HatEncoder(view, small_config(), seed=2, scope="enc")
        out1 = enc1.forward(None, list(range(10)))

        # permute every relation's edge list; same graph, different order
        g = bundle.graph
        rng = stable_rng("perm-edges")
        rels = {}
        for name, rel in g.relations.items():
            p = rng.permutation(len(rel))
            rels[name] = G.Relation(name, rel.src[p], rel.dst[p], rel.feat[p],
                                    rel.src_type, rel.dst_type)
        g2 = G.HetGraph(g.node_types, g.features, rels, g.labels, g.num_classes)
        bundle2 = G.DatasetBundle(g2, bundle.metapaths, bundle.train_ids,
                                  bundle.val_ids, bundle.test_ids)
        enc2 = M.HatEncoder(_single_view(bundle2), small_config(), seed=2, scope="enc")
        out2 = enc2.forward(None, list(range(10)))
        np.testing.assert_allclose(out1.values, out2.values, atol=1e-12)

    def test_gcn_mean_identity_weights(self):
        # scalar features; node 0 has neighbors carrying 1.0 and 3.0
        g = G.HetGraph(
            ["u"] * 3, np.array([[5.0], [1.0], [3.0]]),
            {"r": G.Relation("r", [0, 0], [1, 2], np.zeros((2, 0)), "u", "u")},
        )
        cfg = M.EncoderConfig(kind="gcn", layers=1, hidden=1, heads=1)
        enc = M.GcnEncoder(g, cfg, seed=0, scope="g")
        enc.params["g/l0/W"].values[:] = 1.0
        enc.params["g/l0/b"].values[:] = 0.0
        out = enc.forward(None, [0])
        assert out.values[0, 0] == pytest.approx(2.0)  # mean(1, 3), self excluded

    def test_gcn_two_layer_hand_computation(self):
        bundle = G.load_dataset(__import__("pathlib").Path(__file__).parent / "fixtures" / "toy_dataset")
        g = bundle.graph
        cfg = M.EncoderConfig(kind="gcn", layers=2, hidden=2, heads=1)
        enc = M.GcnEncoder(g, cfg, seed=4, scope="g")
        out = enc.forward(None, [0, 1, 2])

        def elu(v):
            return np.where(v > 0, v, np.expm1(v))

        x = g.features
        for l in range(2):
            W = enc.params[f"g/l{l}/W"].values
            b = enc.params[f"g/l{l}/b"].values
            agg = np.stack([x[1], x[2], x[2]])  # a<-b, b<-c, c isolated -> self
            x = elu(agg @ W + b)
        np.testing.assert_allclose(out.values, x, rtol=1e-12)

    def test_gat_equal_latents_uniform_attention(self):
        g = G.HetGraph(
            ["u"] * 3, np.ones((3, 2)),
            {"r": G.Relation("r", [0, 0], [1, 2], np.zeros((2, 0)), "u", "u")},
        )
        cfg = M.EncoderConfig(kind="gat", layers=1, hidden=2, heads=1)
        enc = M.GatEncoder(g, cfg, seed=1, scope="g")
        enc.forward(None, [0])
        alpha, seg = enc.diagnostics["alpha"][(0, 0)]
        np.testing.assert_allclose(alpha[seg == 0], 1.0 / 3.0, atol=1e-12)

    def test_full_graph_forward_deterministic(self):
        bundle = fixture_bundle(seed=6)
        view = _single_view(bundle)
        enc1 = M.make_encoder(view, small_config(), seed=5, scope="e")
        enc2 = M.make_encoder(view, small_config(), seed=5, scope="e")
        o1 = enc1.forward(None, [0, 5, 9], step=3, training=True)
        o2 = enc2.forward(None, [0, 5, 9], step=3, training=True)
        assert np.array_equal(o1.values, o2.values)

    def test_head_concat_mode_shape_and_config(self):
        bundle = fixture_bundle(seed=7)
        cfg = small_config(head_mode="concat", hidden=4, heads=2)
        enc = M.HatEncoder(_single_view(bundle), cfg, seed=0, scope="e")
        out = enc.forward(None, [0, 1])
        assert out.shape == (2, 4)
        with pytest.raises(ConfigError):
            small_config(head_mode="concat", hidden=5, heads=2)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            M.make_encoder(None, small_config(kind="transformer"), 0, "e")


def _single_view(bundle):
    spec = G.PartitionSpec.from_ratio([1.0], bundle.graph.feature_dim,
                                      bundle.graph.relation_names())
    return G.vertical_partition(bundle, spec, seed=0)[0]


class TestEncoderGradients:
    @pytest.mark.parametrize("kind,fusion", [
        ("hat", "concat"), ("hat", "add"), ("hat", "linear"),
        ("gcn", "concat"), ("gat", "concat"),
    ])
    def test_finite_differences(self, kind, fusion):
        bundle = fixture_bundle(seed=8, n_u=8, n_v=5, feature_dim=3)
        cfg = small_config(kind=kind, fusion=fusion, hidden=3, heads=2, layers=2)
        enc = M.make_encoder(_single_view(bundle), cfg, seed=11, scope="e")
        batch = np.arange(6)
        labels = bundle.graph.labels[batch]
        params = {}
        head_w = M.init_param(params, "head/W", (3, 2), 11)
        head_b = M.init_param(params, "head/b", (2,), 11, zeros=True)

        def forward():
            tape = T.Tape()
            emb = enc.forward(tape, batch)
            logits = T.linear(tape, emb, head_w, head_b)
            return T.cross_entropy(tape, logits, labels), tape

        all_params = list(enc.params.values()) + [head_w, head_b]
        err = T.finite_diff_check(forward, all_params)
        assert err < 1e-4, f"{kind}/{fusion}: max rel err {err}"
