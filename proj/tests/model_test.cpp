#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "floydnet/graph/generators.hpp"
#include "floydnet/model/model.hpp"
#include "floydnet/verify/checks.hpp"
#include "support.hpp"

using namespace floydnet;
using namespace floydnet::model;
using graph::Graph;
using nn::Rng;
using testutil::random_tensor;

namespace {

ModelConfig small_config(std::size_t order = 2, ReadoutLevel readout = ReadoutLevel::kNode) {
  ModelConfig c;
  c.layers = 2;
  c.rel_dim = 8;
  c.heads = 2;
  c.order = order;
  c.readout = readout;
  c.node_dim = 2;
  c.edge_dim = 1;
  c.graph_dim = 1;
  c.seed = 5;
  return c;
}

Graph featured_graph(std::size_t n, std::uint64_t seed, std::size_t dn = 2, std::size_t de = 1, std::size_t dg = 1) {
  const Graph base = graph::gen_random_graph(n, 0.5, 1, 3, seed);
  Graph g(n, dn, de, dg);
  Rng rng(seed + 1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> f;
  for (std::size_t v = 0; v < n; ++v) {
    f.assign(dn, 0.0);
    for (double& x : f) x = u(rng);
    g.set_node_features(v, f);
  }
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      if (base.has_edge(a, b)) {
        f.assign(de, 0.0);
        for (double& x : f) x = u(rng);
        g.add_edge(a, b, base.weight(a, b), f);
      }
  f.assign(dg, 0.0);
  for (double& x : f) x = u(rng);
  g.set_graph_features(f);
  return g;
}

nn::Tensor forward(const Graph& g, const ModelConfig& cfg, const ModelParams& p) {
  nn::Tape tape;
  tape.set_recording(false);
  return tape.value(model_forward(tape, g, cfg, p));
}

nn::Tensor features(const Graph& g, const ModelConfig& cfg, const ModelParams& p, std::size_t order) {
  nn::Tape tape;
  return tape.value(init_features(tape, g, cfg, p, order));
}

}  // namespace

TEST(Config, RoundTripAndValidation) {
  ModelConfig c = small_config(3, ReadoutLevel::kEdge);
  c.combine = attention::CombineKind::kMultiplicative;
  c.kernel = KernelKind::kStreamed;
  c.init_hidden = {5, 7};
  const auto path = std::filesystem::temp_directory_path() / "floydnet_model_test.cfg";
  save_config(path, c);
  const ModelConfig d = load_config(path);
  EXPECT_EQ(format_config(c), format_config(d));
  std::filesystem::remove(path);

  EXPECT_THROW(parse_config({{"bogus", "1"}}), ConfigError);
  EXPECT_THROW(parse_config({{"heads", "x"}}), ConfigError);
  ModelConfig bad = small_config();
  bad.heads = 3;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = small_config(1, ReadoutLevel::kEdge);
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = small_config();
  bad.supernode = false;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = small_config();
  bad.order = 4;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(InitRelationship, ZeroFeaturesGiveZero) {
  ModelConfig c = small_config(1);
  c.edge_dim = 0;
  c.graph_dim = 0;
  auto p = ModelParams::init(c);
  p.sn_node.value.fill(0.0);
  const Graph g(4, 2);
  nn::Tape tape;
  const auto r = tape.value(init_korder(tape, g, c, p, 1));
  ASSERT_EQ(r.shape(), (nn::Shape{5, 8}));
  for (double v : r.values()) EXPECT_EQ(v, 0.0);

  // order 2, edgeless, no supernode: only diagonal pairs see a nonzero input
  ModelConfig c2 = small_config(2, ReadoutLevel::kEdge);
  c2.supernode = false;
  c2.edge_dim = 0;
  c2.graph_dim = 0;
  const auto p2 = ModelParams::init(c2);
  nn::Tape t2;
  const auto r2 = t2.value(init_relationship(t2, g, c2, p2));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t ch = 0; ch < 8; ++ch) {
        if (i != j) EXPECT_EQ(r2[(i * 4 + j) * 8 + ch], 0.0);
      }
}

TEST(InitRelationship, SymmetricInputGivesSymmetricR) {
  ModelConfig c = small_config(2, ReadoutLevel::kEdge);
  c.edge_dim = 0;
  const auto p = ModelParams::init(c);
  Graph g = graph::gen_random_graph(5, 0.5, 1, 3, 2);
  Graph h(5, 2, 0, 1);
  for (std::size_t v = 0; v < 5; ++v) h.set_node_features(v, std::vector<double>{0.3, -0.2});
  for (std::size_t a = 0; a < 5; ++a)
    for (std::size_t b = a + 1; b < 5; ++b)
      if (g.has_edge(a, b)) h.add_edge(a, b, g.weight(a, b));
  h.set_graph_features(std::vector<double>{0.7});
  nn::Tape tape;
  const auto r = tape.value(init_relationship(tape, h, c, p));
  // SN rows carry the learned SN feature on one side only
  const std::size_t np = 6, d = 8;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      for (std::size_t ch = 0; ch < d; ++ch) EXPECT_EQ(r[(i * np + j) * d + ch], r[(j * np + i) * d + ch]);
}

TEST(InitRelationship, ConcatenationLayout) {
  ModelConfig c = small_config(2, ReadoutLevel::kEdge);
  c.supernode = false;
  const auto p = ModelParams::init(c);
  const Graph g = featured_graph(4, 3);
  const auto f = features(g, c, p, 2);
  const std::size_t w = c.init_input_dim();
  ASSERT_EQ(w, 1u + 2 + 2 + 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      std::vector<double> expect{g.graph_feats()[0]};
      for (double v : g.node_features(i)) expect.push_back(v);
      for (double v : g.node_features(j)) expect.push_back(v);
      const bool e = g.has_edge(i, j);
      expect.push_back(e ? 1.0 : 0.0);
      expect.push_back(i == j ? 1.0 : 0.0);
      expect.push_back(e ? g.weight(i, j) : 0.0);
      expect.push_back(e ? g.edge_features(i, j)[0] : 0.0);
      for (std::size_t k = 0; k < w; ++k) EXPECT_EQ(f[(i * 4 + j) * w + k], expect[k]);
    }

  // an identity first layer reproduces the raw concatenation
  ModelConfig ci = c;
  ci.init_hidden = {w};
  auto pi = ModelParams::init(ci);
  pi.init_mlp[0].weight.value.fill(0.0);
  for (std::size_t k = 0; k < w; ++k) pi.init_mlp[0].weight.value[k * w + k] = 1.0;
  nn::Tape tape;
  const auto h = tape.value(nn::linear(tape, init_features(tape, g, ci, pi, 2), pi.init_mlp[0]));
  EXPECT_TRUE(nn::bitwise_equal(h, f));
}

TEST(InitKOrder, OrderOneAndTwo) {
  const ModelConfig c = small_config(2);
  const auto p = ModelParams::init(c);
  const Graph g = featured_graph(5, 4);
  nn::Tape t;
  EXPECT_TRUE(nn::bitwise_equal(t.value(init_korder(t, g, c, p, 2)), t.value(init_relationship(t, g, c, p))));
  ModelConfig c1 = small_config(1);
  const auto p1 = ModelParams::init(c1);
  const auto f = features(g, c1, p1, 1);
  ASSERT_EQ(f.shape(), (nn::Shape{6, 3}));
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(f[i * 3], g.graph_feats()[0]);
    EXPECT_EQ(f[i * 3 + 1], g.node_features(i)[0]);
    EXPECT_EQ(f[i * 3 + 2], g.node_features(i)[1]);
  }
  EXPECT_EQ(f[5 * 3 + 1], p1.sn_node.value[0]);
}

TEST(InitKOrder, OrderThreeSubsetLayout) {
  ModelConfig c = small_config(3, ReadoutLevel::kEdge);
  c.supernode = false;
  c.node_dim = 1;
  c.graph_dim = 0;
  const auto p = ModelParams::init(c);
  Graph g(3, 1, 1, 0);
  for (std::size_t v = 0; v < 3; ++v) g.set_node_features(v, std::vector<double>{10.0 + v});
  g.add_edge(0, 1, 2.0, std::vector<double>{0.5});
  g.add_edge(1, 2, 3.0, std::vector<double>{-0.5});
  const auto f = features(g, c, p, 3);
  const std::size_t w = 3 + 3 * 4;
  ASSERT_EQ(f.shape(), (nn::Shape{3, 3, 3, w}));
  auto seg = [&](std::size_t a, std::size_t b) {
    const bool e = g.has_edge(a, b);
    return std::vector<double>{e ? 1.0 : 0.0, a == b ? 1.0 : 0.0, e ? g.weight(a, b) : 0.0,
                               e ? g.edge_features(a, b)[0] : 0.0};
  };
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 3; ++k) {
        // X_i, X_j, X_k, then E_ij, E_ik, E_jk
        std::vector<double> expect{10.0 + i, 10.0 + j, 10.0 + k};
        for (auto [a, b] : {std::pair{i, j}, std::pair{i, k}, std::pair{j, k}}) {
          const auto s = seg(a, b);
          expect.insert(expect.end(), s.begin(), s.end());
        }
        const double* row = f.data() + ((i * 3 + j) * 3 + k) * w;
        for (std::size_t x = 0; x < w; ++x) EXPECT_EQ(row[x], expect[x]) << i << j << k << " col " << x;
      }
}

TEST(SuperNode, Contracts) {
  const ModelConfig c = small_config();
  const auto p = ModelParams::init(c);
  const Graph g = featured_graph(3, 5);
  const Graph a = attach_supernode(g, c, p);
  EXPECT_EQ(a.n(), 4u);
  for (std::size_t u = 0; u < 3; ++u)
    for (std::size_t v = 0; v < 3; ++v) {
      EXPECT_EQ(a.has_edge(u, v), g.has_edge(u, v));
      if (g.has_edge(u, v)) EXPECT_EQ(a.weight(u, v), g.weight(u, v));
    }
  for (std::size_t u = 0; u < 4; ++u) EXPECT_FALSE(a.has_edge(u, 3));
  ModelConfig off = small_config(2, ReadoutLevel::kEdge);
  off.supernode = false;
  EXPECT_EQ(attach_supernode(g, off, p), g);
  const Graph b = attach_supernode(featured_graph(6, 9), c, p);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(a.node_features(3)[k], b.node_features(6)[k]);

  // SN-node pairs use the shared learnable segment in both directions
  const auto f = features(g, c, p, 2);
  const std::size_t w = c.init_input_dim();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t s = 0; s < 4; ++s) {
      EXPECT_EQ(f[(i * 4 + 3) * w + 5 + s], p.sn_edge.value[s]);
      EXPECT_EQ(f[(3 * 4 + i) * w + 5 + s], p.sn_edge.value[s]);
    }
}

TEST(SuperNode, SizeFormulas) {
  ModelConfig on = small_config(2, ReadoutLevel::kEdge);
  ModelConfig off = on;
  off.supernode = false;
  auto pon = ModelParams::init(on);
  auto poff = ModelParams::init(off);
  auto count = [](ModelParams& p) {
    std::size_t t = 0;
    for (auto* q : p.collect()) t += q->value.size();
    return t;
  };
  EXPECT_EQ(count(pon), parameter_count(on));
  EXPECT_EQ(count(poff), parameter_count(off));
  EXPECT_EQ(parameter_count(on) - parameter_count(off), on.node_dim + on.edge_segment_dim());
  for (std::size_t order : {1, 2, 3}) {
    ModelConfig k = small_config(order, order == 1 ? ReadoutLevel::kNode : ReadoutLevel::kEdge);
    auto pk = ModelParams::init(k);
    EXPECT_EQ(count(pk), parameter_count(k));
  }
  EXPECT_EQ(activation_size(on, 7), 8u * 8u * 8u);
  EXPECT_EQ(activation_size(off, 7), 7u * 7u * 8u);
  const Graph g = featured_graph(7, 2);
  nn::Tape t;
  EXPECT_EQ(t.value(model_forward(t, g, on, pon)).size(), activation_size(on, 7));
}

TEST(FloydBlock, ResidualIdentity) {
  ModelConfig c = small_config();
  auto p = ModelParams::init(c);
  auto& b = p.blocks[0];
  auto& attn = std::get<attention::AttentionParams>(b.attention);
  attn.out.weight.value.fill(0.0);
  attn.out.bias->value.fill(0.0);
  b.ffn.down.weight.value.fill(0.0);
  b.ffn.down.bias->value.fill(0.0);
  Rng rng(1);
  const auto r = random_tensor({4, 4, 8}, rng);
  nn::Tape t;
  EXPECT_TRUE(nn::bitwise_equal(t.value(floyd_block(t, t.constant(r), b, c)), r));
}

TEST(FloydBlock, MatchesHandComposition) {
  for (auto kernel : {KernelKind::kNaive, KernelKind::kStreamed}) {
    ModelConfig c = small_config();
    c.kernel = kernel;
    const auto p = ModelParams::init(c);
    const auto& b = p.blocks[1];
    Rng rng(2);
    const auto r = random_tensor({3, 3, 8}, rng);
    nn::Tape t;
    const auto got = t.value(floyd_block(t, t.constant(r), b, c));
    const auto& ap = std::get<attention::AttentionParams>(b.attention);
    nn::Var x = t.constant(r);
    nn::Var n1 = nn::layer_norm(t, x, b.norm1);
    nn::Var a = kernel == KernelKind::kNaive ? attention::pivotal_attention_naive(t, n1, ap, c.combine)
                                             : attention::pivotal_attention_streamed(t, n1, ap, c.combine);
    nn::Var mid = nn::add(t, x, a);
    nn::Var out = nn::add(t, mid, nn::ffn(t, nn::layer_norm(t, mid, b.norm2), b.ffn));
    EXPECT_TRUE(nn::bitwise_equal(got, t.value(out)));
  }
}

TEST(FloydBlock, Equivariant) {
  const ModelConfig c = small_config();
  const auto p = ModelParams::init(c);
  Rng rng(3);
  const auto r = random_tensor({6, 6, 8}, rng);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto pi = graph::NodePermutation::random(6, s);
    nn::Tape t;
    const auto a = t.value(floyd_block(t, t.constant(permute_tuples(r, pi, 2)), p.blocks[0], c));
    const auto b = permute_tuples(t.value(floyd_block(t, t.constant(r), p.blocks[0], c)), pi, 2);
    EXPECT_LT(nn::max_abs_diff(a, b), 1e-10);
  }
}

TEST(FloydBlock, EveryPivotSegmentInfluencesTarget) {
  const ModelConfig c = small_config();
  const auto p = ModelParams::init(c);
  Rng rng(4);
  const std::size_t n = 5, d = 8, i = 1, k = 3;
  const auto r = random_tensor({n, n, d}, rng);
  nn::Tape t;
  const auto base = t.value(floyd_block(t, t.constant(r), p.blocks[0], c));
  auto delta_at_target = [&](std::size_t a, std::size_t b) {
    auto q = r;
    q[(a * n + b) * d] += 1e-3;
    nn::Tape tt;
    const auto y = tt.value(floyd_block(tt, tt.constant(q), p.blocks[0], c));
    double m = 0.0;
    for (std::size_t ch = 0; ch < d; ++ch) m = std::max(m, std::abs(y[(i * n + k) * d + ch] - base[(i * n + k) * d + ch]));
    return m;
  };
  for (std::size_t j = 0; j < n; ++j) {
    EXPECT_GT(delta_at_target(i, j), 1e-9) << "R_ij, j=" << j;
    EXPECT_GT(delta_at_target(j, k), 1e-9) << "R_jk, j=" << j;
  }
  // a pair sharing no endpoint with (i, k) is outside one block's reach
  EXPECT_EQ(delta_at_target(0, 2), 0.0);
}

TEST(ModelForward, EmptyStackIsNormalizedInit) {
  ModelConfig c = small_config();
  c.layers = 0;
  const auto p = ModelParams::init(c);
  const Graph g = featured_graph(4, 6);
  nn::Tape t;
  const auto expect = t.value(nn::layer_norm(t, init_relationship(t, g, c, p), p.final_norm));
  EXPECT_TRUE(nn::bitwise_equal(forward(g, c, p), expect));
}

TEST(ModelForward, DeterministicAndCheckpointRoundTrip) {
  for (std::size_t order : {1, 2, 3}) {
    const ModelConfig c = small_config(order);
    auto p = ModelParams::init(c);
    const Graph g = featured_graph(4, 7);
    EXPECT_TRUE(nn::bitwise_equal(forward(g, c, p), forward(g, c, ModelParams::init(c))));
    const auto path = std::filesystem::temp_directory_path() / "floydnet_model_test.ckpt";
    save_model(path, p);
    ModelConfig other = c;
    other.seed = 99;
    auto q = ModelParams::init(other);
    EXPECT_FALSE(nn::bitwise_equal(forward(g, c, p), forward(g, c, q)));
    load_model(path, q);
    EXPECT_TRUE(nn::bitwise_equal(predict(g, c, p), predict(g, c, q)));
    std::filesystem::remove(path);
  }
}

TEST(ModelForward, GradCheck) {
  for (std::uint64_t seed : {1, 2}) {
    const auto r = verify::gradcheck_model(seed, 1e-5);
    EXPECT_TRUE(r.passed) << r.worst();
  }
}

TEST(ModelForward, Equivariance) {
  for (std::size_t order : {1, 2, 3}) EXPECT_LT(verify::equivariance_max_error(order, 4, 11), 1e-9) << order;
}

TEST(Readout, ArityAndIdentityDecoder) {
  ModelConfig c = small_config();
  c.out_dim = 8;
  auto p = ModelParams::init(c);
  p.decoder.weight.value.fill(0.0);
  for (std::size_t k = 0; k < 8; ++k) p.decoder.weight.value[k * 8 + k] = 1.0;
  const Graph g = featured_graph(3, 8);
  nn::Tape t;
  const nn::Var r = model_forward(t, g, c, p);
  const auto graph_out = t.value(readout(t, r, 3, c, ReadoutLevel::kGraph, p.decoder));
  ASSERT_EQ(graph_out.shape(), (nn::Shape{1, 8}));
  const auto& rv = t.value(r);
  for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(graph_out[k], rv[(3 * 4 + 3) * 8 + k]);
  const auto node_out = t.value(readout(t, r, 3, c, ReadoutLevel::kNode, p.decoder));
  ASSERT_EQ(node_out.shape(), (nn::Shape{3, 8}));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(node_out[i * 8 + k], rv[(i * 4 + 3) * 8 + k]);
  const auto edge_out = t.value(readout(t, r, 3, c, ReadoutLevel::kEdge, p.decoder));
  ASSERT_EQ(edge_out.shape(), (nn::Shape{3, 3, 8}));
  EXPECT_EQ(edge_out[(2 * 3 + 1) * 8 + 4], rv[(2 * 4 + 1) * 8 + 4]);

  ModelConfig off = small_config(2, ReadoutLevel::kEdge);
  off.supernode = false;
  EXPECT_THROW(readout_tuples(3, off, ReadoutLevel::kNode), attention::CapabilityError);
  EXPECT_THROW(readout_tuples(3, off, ReadoutLevel::kGraph), attention::CapabilityError);
  EXPECT_EQ(readout_tuples(3, small_config(3), ReadoutLevel::kNode).size(), 3u);
  EXPECT_THROW(readout_tuples(3, small_config(1), ReadoutLevel::kEdge), attention::CapabilityError);
}

TEST(ModelForward, RejectsFeatureMismatch) {
  const ModelConfig c = small_config();
  const auto p = ModelParams::init(c);
  EXPECT_THROW(forward(graph::path_graph(4), c, p), nn::ShapeError);
}
