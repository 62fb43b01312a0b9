#include <gtest/gtest.h>

#include <cmath>

#include "floydnet/attention/korder.hpp"
#include "floydnet/attention/pivotal.hpp"
#include "floydnet/attention/rotation.hpp"
#include "floydnet/graph/graph.hpp"
#include "floydnet/nn/grad_check.hpp"
#include "support.hpp"

using namespace floydnet;
using namespace floydnet::attention;
using nn::Rng;
using nn::Tape;
using nn::Tensor;
using nn::Var;
using testutil::apply_linear;
using testutil::random_tensor;

namespace {

AttentionParams random_params(std::size_t d, std::size_t heads, Rng& rng) {
  auto p = AttentionParams::init("attn", d, heads, rng);
  testutil::randomize_biases(p.query, rng);
  testutil::randomize_biases(p.out, rng);
  return p;
}

Tensor run_naive(const Tensor& r, const AttentionParams& p, CombineKind kind) {
  Tape tape;
  return tape.value(pivotal_attention_naive(tape, tape.constant(r), p, kind));
}

Tensor run_streamed(const Tensor& r, const AttentionParams& p, CombineKind kind, std::size_t tile = kDefaultTile) {
  Tape tape;
  return tape.value(pivotal_attention_streamed(tape, tape.constant(r), p, kind, tile));
}

// Direct loop evaluation of pivotal attention for one [N, N, d] input.
Tensor pivotal_loops(const Tensor& r, const AttentionParams& p, CombineKind kind) {
  const std::size_t n = r.dim(0), d = r.dim(2), h = p.heads, dh = d / h;
  auto row = [&](std::size_t a, std::size_t b) { return r.data() + (a * n + b) * d; };
  Tensor out({n, n, d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      const auto q = apply_linear(p.query, row(i, k));
      std::vector<double> o(d, 0.0);
      for (std::size_t head = 0; head < h; ++head) {
        std::vector<double> logits(n), vals(n * dh);
        for (std::size_t j = 0; j < n; ++j) {
          const auto kl = apply_linear(p.key_left, row(i, j)), kr = apply_linear(p.key_right, row(j, k));
          const auto vl = apply_linear(p.value_left, row(i, j)), vr = apply_linear(p.value_right, row(j, k));
          double s = 0.0;
          for (std::size_t c = head * dh; c < (head + 1) * dh; ++c) {
            s += q[c] * combine_values(kl[c], kr[c], kind);
            vals[j * dh + c - head * dh] = combine_values(vl[c], vr[c], kind);
          }
          logits[j] = s / std::sqrt(static_cast<double>(dh));
        }
        double m = logits[0];
        for (double l : logits) m = std::max(m, l);
        double z = 0.0;
        for (double l : logits) z += std::exp(l - m);
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t c = 0; c < dh; ++c) o[head * dh + c] += std::exp(logits[j] - m) / z * vals[j * dh + c];
      }
      const auto y = apply_linear(p.out, o.data());
      std::copy(y.begin(), y.end(), out.data() + (i * n + k) * d);
    }
  }
  return out;
}

Tensor permute_pairs(const Tensor& r, const graph::NodePermutation& pi) {
  const std::size_t n = r.dim(0), d = r.dim(2);
  Tensor out(r.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t c = 0; c < d; ++c) out[(pi(i) * n + pi(k)) * d + c] = r[(i * n + k) * d + c];
  return out;
}

const CombineKind kKinds[] = {CombineKind::kAdditive, CombineKind::kMultiplicative};

}  // namespace

TEST(Combine, IdentityElements) {
  Rng rng(1);
  const Tensor a = random_tensor({3, 4}, rng);
  Tape tape;
  Var va = tape.constant(a);
  EXPECT_TRUE(nn::bitwise_equal(tape.value(combine(tape, va, tape.constant(Tensor({3, 4})), CombineKind::kAdditive)), a));
  EXPECT_TRUE(
      nn::bitwise_equal(tape.value(combine(tape, va, tape.constant(Tensor({3, 4}, 1.0)), CombineKind::kMultiplicative)), a));
  EXPECT_THROW(combine(tape, va, tape.constant(Tensor({4, 3})), CombineKind::kAdditive), nn::ShapeError);
}

TEST(PivotalNaive, SinglePivot) {
  Rng rng(2);
  for (auto kind : kKinds) {
    const auto p = random_params(4, 2, rng);
    const Tensor r = random_tensor({1, 1, 4}, rng);
    const Tensor y = run_naive(r, p, kind);
    const auto vl = apply_linear(p.value_left, r.data()), vr = apply_linear(p.value_right, r.data());
    std::vector<double> v(4);
    for (std::size_t c = 0; c < 4; ++c) v[c] = combine_values(vl[c], vr[c], kind);
    const auto expect = apply_linear(p.out, v.data());
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(y[c], expect[c], 1e-14);
  }
}

TEST(PivotalNaive, ZeroKeysGiveUniformWeights) {
  Rng rng(3);
  auto p = random_params(6, 3, rng);
  p.key_left.weight.value.fill(0.0);
  p.key_right.weight.value.fill(0.0);
  const std::size_t n = 4, d = 6;
  const Tensor r = random_tensor({n, n, d}, rng);
  for (auto kind : kKinds) {
    const Tensor y = run_naive(r, p, kind);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) {
        std::vector<double> mean(d, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
          const auto vl = apply_linear(p.value_left, r.data() + (i * n + j) * d);
          const auto vr = apply_linear(p.value_right, r.data() + (j * n + k) * d);
          for (std::size_t c = 0; c < d; ++c) mean[c] += combine_values(vl[c], vr[c], kind) / n;
        }
        const auto expect = apply_linear(p.out, mean.data());
        for (std::size_t c = 0; c < d; ++c) EXPECT_NEAR(y[(i * n + k) * d + c], expect[c], 1e-13);
      }
  }
}

TEST(PivotalNaive, MatchesScalarLoops) {
  Rng rng(4);
  for (auto kind : kKinds) {
    for (std::size_t heads : {1, 2, 4}) {
      const auto p = random_params(8, heads, rng);
      const Tensor r = random_tensor({3, 3, 8}, rng);
      EXPECT_LT(nn::max_abs_diff(run_naive(r, p, kind), pivotal_loops(r, p, kind)), 1e-13);
    }
  }
}

TEST(PivotalStreamed, MatchesNaiveAcrossTiles) {
  Rng rng(5);
  for (auto kind : kKinds) {
    for (std::size_t n : {1, 2, 5, 9}) {
      const auto p = random_params(8, 2, rng);
      const Tensor r = random_tensor({n, n, 8}, rng);
      const Tensor ref = run_naive(r, p, kind);
      for (std::size_t tile : {1, 3, 32}) EXPECT_LT(nn::max_abs_diff(run_streamed(r, p, kind, tile), ref), 1e-12);
    }
  }
}

TEST(PivotalStreamed, BackwardMatchesNaive) {
  Rng rng(6);
  for (auto kind : kKinds) {
    auto pn = random_params(8, 2, rng);
    auto ps = pn;
    Tensor r = random_tensor({5, 5, 8}, rng);
    Tensor seed = random_tensor({5, 5, 8}, rng);
    nn::Parameter rn("r", r), rs("r", r);
    {
      Tape tape;
      tape.backward(pivotal_attention_naive(tape, tape.parameter(rn), pn, kind), seed);
    }
    {
      Tape tape;
      tape.backward(pivotal_attention_streamed(tape, tape.parameter(rs), ps, kind, 2), seed);
    }
    nn::ParamRefs a{&rn}, b{&rs};
    pn.collect(a);
    ps.collect(b);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LT(nn::max_abs_diff(a[i]->grad, b[i]->grad), 1e-12) << a[i]->name;
  }
}

TEST(PivotalBackward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(7);
  auto p = random_params(4, 2, rng);
  const Tensor r = random_tensor({3, 3, 4}, rng);
  for (int streamed = 0; streamed < 2; ++streamed) {
    Tape tape;
    Var y = streamed ? pivotal_attention_streamed(tape, tape.constant(r), p, CombineKind::kMultiplicative)
                     : pivotal_attention_naive(tape, tape.constant(r), p, CombineKind::kMultiplicative);
    tape.backward(y, Tensor(tape.shape(y)));
    nn::ParamRefs refs;
    p.collect(refs);
    for (auto* q : refs)
      for (double g : q->grad.values()) EXPECT_EQ(g, 0.0);
  }
}

TEST(PivotalBackward, FiniteDifferences) {
  Rng rng(8);
  for (auto kind : kKinds) {
    auto p = random_params(8, 2, rng);
    nn::Parameter r("r", random_tensor({4, 4, 8}, rng));
    const Tensor w = random_tensor({4, 4, 8}, rng);
    nn::ParamRefs refs{&r};
    p.collect(refs);
    for (int streamed = 0; streamed < 2; ++streamed) {
      auto f = [&](Tape& t) {
        Var x = t.parameter(r);
        Var y = streamed ? pivotal_attention_streamed(t, x, p, kind, 3) : pivotal_attention_naive(t, x, p, kind);
        return nn::sum(t, nn::mul(t, y, t.constant(w)));
      };
      const auto rep = nn::grad_check(f, refs, 1e-5, 1e-6);
      EXPECT_TRUE(rep.passed) << rep.worst();
    }
  }
}

TEST(PivotalAttention, Equivariance) {
  Rng rng(9);
  for (auto kind : kKinds) {
    const auto p = random_params(8, 2, rng);
    const Tensor r = random_tensor({6, 6, 8}, rng);
    for (std::uint64_t s = 0; s < 5; ++s) {
      const auto pi = graph::NodePermutation::random(6, s);
      const Tensor rp = permute_pairs(r, pi);
      EXPECT_LT(nn::max_abs_diff(run_naive(rp, p, kind), permute_pairs(run_naive(r, p, kind), pi)), 1e-10);
      EXPECT_LT(nn::max_abs_diff(run_streamed(rp, p, kind, 4), permute_pairs(run_streamed(r, p, kind, 4), pi)), 1e-10);
    }
  }
}

TEST(PivotalAttention, OrderSensitive) {
  Rng rng(10);
  for (auto kind : kKinds) {
    const auto p = random_params(8, 2, rng);
    auto swapped = p;
    std::swap(swapped.key_left, swapped.key_right);
    std::swap(swapped.value_left, swapped.value_right);
    const Tensor r = random_tensor({4, 4, 8}, rng);
    EXPECT_GT(nn::max_abs_diff(run_naive(r, p, kind), run_naive(r, swapped, kind)), 1e-6);
  }
}

TEST(PivotalAttention, PivotRelabelingInvariant) {
  Rng rng(11);
  const std::size_t n = 5, d = 8;
  const auto sigma = graph::NodePermutation::random(n, 3);
  for (auto kind : kKinds) {
    Tensor q = random_tensor({n, n, d}, rng), kl = random_tensor({n, n, d}, rng), kr = random_tensor({n, n, d}, rng);
    Tensor vl = random_tensor({n, n, d}, rng), vr = random_tensor({n, n, d}, rng);
    // shuffle the pivot axis: left tensors on their second axis, right on their first
    auto shuffle_left = [&](const Tensor& t) {
      Tensor o(t.shape());
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          std::copy_n(t.data() + (i * n + sigma(j)) * d, d, o.data() + (i * n + j) * d);
      return o;
    };
    auto shuffle_right = [&](const Tensor& t) {
      Tensor o(t.shape());
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k)
          std::copy_n(t.data() + (sigma(j) * n + k) * d, d, o.data() + (j * n + k) * d);
      return o;
    };
    for (int streamed = 0; streamed < 2; ++streamed) {
      auto run = [&](const Tensor& a, const Tensor& b, const Tensor& c, const Tensor& e) {
        Tape t;
        Var out = streamed ? pivot_core_streamed(t, t.constant(q), t.constant(a), t.constant(b), t.constant(c),
                                                 t.constant(e), 2, kind)
                           : pivot_core_naive(t, t.constant(q), t.constant(a), t.constant(b), t.constant(c),
                                              t.constant(e), 2, kind);
        return t.value(out);
      };
      const Tensor base = run(kl, kr, vl, vr);
      const Tensor shuffled = run(shuffle_left(kl), shuffle_right(kr), shuffle_left(vl), shuffle_right(vr));
      EXPECT_LT(nn::max_abs_diff(base, shuffled), 1e-12);
    }
  }
}

TEST(KOrder, OrderOneIsSelfAttention) {
  Rng rng(12);
  const std::size_t n = 6, d = 8, h = 2, dh = 4;
  for (auto kind : kKinds) {
    auto p = KOrderAttentionParams::init("k1", 1, d, h, rng);
    testutil::randomize_biases(p.query, rng);
    testutil::randomize_biases(p.out, rng);
    const Tensor x = random_tensor({n, d}, rng);
    Tape tape;
    const Tensor y = tape.value(korder_pivotal_attention(tape, tape.constant(x), p, kind));
    for (std::size_t i = 0; i < n; ++i) {
      const auto q = apply_linear(p.query, x.data() + i * d);
      std::vector<double> o(d, 0.0);
      for (std::size_t head = 0; head < h; ++head) {
        std::vector<double> s(n);
        double m = -1e300, z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const auto k = apply_linear(p.keys[0], x.data() + j * d);
          s[j] = 0.0;
          for (std::size_t c = head * dh; c < (head + 1) * dh; ++c) s[j] += q[c] * k[c];
          s[j] /= std::sqrt(double(dh));
          m = std::max(m, s[j]);
        }
        for (double& v : s) z += (v = std::exp(v - m));
        for (std::size_t j = 0; j < n; ++j) {
          const auto v = apply_linear(p.values[0], x.data() + j * d);
          for (std::size_t c = head * dh; c < (head + 1) * dh; ++c) o[c] += s[j] / z * v[c];
        }
      }
      const auto expect = apply_linear(p.out, o.data());
      for (std::size_t c = 0; c < d; ++c) EXPECT_NEAR(y[i * d + c], expect[c], 1e-12);
    }
  }
}

TEST(KOrder, OrderTwoIsBitwisePivotal) {
  Rng rng(13);
  for (auto kind : kKinds) {
    const auto p = random_params(8, 2, rng);
    const Tensor r = random_tensor({5, 5, 8}, rng);
    Tape tape;
    const Tensor y = tape.value(korder_pivotal_attention(tape, tape.constant(r), KOrderAttentionParams::from_pivotal(p), kind));
    EXPECT_TRUE(nn::bitwise_equal(y, run_naive(r, p, kind)));
  }
}

TEST(KOrder, OrderThreeMatchesLoops) {
  Rng rng(14);
  const std::size_t n = 4, d = 6, h = 2, dh = 3;
  for (auto kind : kKinds) {
    auto p = KOrderAttentionParams::init("k3", 3, d, h, rng);
    testutil::randomize_biases(p.query, rng);
    testutil::randomize_biases(p.out, rng);
    const Tensor r = random_tensor({n, n, n, d}, rng);
    Tape tape;
    const Tensor y = tape.value(korder_pivotal_attention(tape, tape.constant(r), p, kind));
    auto at = [&](std::size_t a, std::size_t b, std::size_t c) { return r.data() + ((a * n + b) * n + c) * d; };
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t l = 0; l < n; ++l) {
          const auto q = apply_linear(p.query, at(i, j, l));
          std::vector<double> o(d, 0.0);
          for (std::size_t head = 0; head < h; ++head) {
            std::vector<double> s(n), vals(n * dh);
            double m = -1e300, z = 0.0;
            for (std::size_t pv = 0; pv < n; ++pv) {
              const auto k0 = apply_linear(p.keys[0], at(pv, j, l)), k1 = apply_linear(p.keys[1], at(i, pv, l)),
                         k2 = apply_linear(p.keys[2], at(i, j, pv));
              const auto v0 = apply_linear(p.values[0], at(pv, j, l)), v1 = apply_linear(p.values[1], at(i, pv, l)),
                         v2 = apply_linear(p.values[2], at(i, j, pv));
              s[pv] = 0.0;
              for (std::size_t c = head * dh; c < (head + 1) * dh; ++c) {
                s[pv] += q[c] * combine_values(combine_values(k0[c], k1[c], kind), k2[c], kind);
                vals[pv * dh + c - head * dh] = combine_values(combine_values(v0[c], v1[c], kind), v2[c], kind);
              }
              s[pv] /= std::sqrt(double(dh));
              m = std::max(m, s[pv]);
            }
            for (double& v : s) z += (v = std::exp(v - m));
            for (std::size_t pv = 0; pv < n; ++pv)
              for (std::size_t c = 0; c < dh; ++c) o[head * dh + c] += s[pv] / z * vals[pv * dh + c];
          }
          const auto expect = apply_linear(p.out, o.data());
          for (std::size_t c = 0; c < d; ++c)
            worst = std::max(worst, std::abs(y[((i * n + j) * n + l) * d + c] - expect[c]));
        }
    EXPECT_LT(worst, 1e-12);
  }
}

TEST(KOrder, DistinctProjectionSetsAndCapability) {
  Rng rng(15);
  const auto p = KOrderAttentionParams::init("k3", 3, 4, 1, rng);
  EXPECT_EQ(p.keys.size(), 3u);
  EXPECT_EQ(p.values.size(), 3u);
  EXPECT_FALSE(nn::bitwise_equal(p.keys[0].weight.value, p.keys[1].weight.value));
  EXPECT_THROW(KOrderAttentionParams::init("k4", 4, 4, 1, rng), CapabilityError);
  const auto big = KOrderAttentionParams::init("big", 3, 1, 1, rng);
  Tape tape;
  EXPECT_THROW(korder_pivotal_attention(tape, tape.constant(Tensor({100, 100, 100, 1})), big, CombineKind::kAdditive),
               CapabilityError);
}

TEST(Rotation, Examples) {
  const Mat3 eye{1, 0, 0, 0, 1, 0, 0, 0, 1};
  const Mat3 r = rotation_compose_check(eye, eye);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(r[i], eye[i], 1e-15);
  const Mat3 half = rotation_compose_check(rotation_z(M_PI / 2), rotation_z(M_PI / 2));
  const Mat3 expect{-1, 0, 0, 0, -1, 0, 0, 0, 1};
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(half[i], expect[i], 1e-15);
  const Mat3 reflect{-1, 0, 0, 0, 1, 0, 0, 0, 1};
  EXPECT_THROW(rotation_compose_check(reflect, eye), RotationError);
  EXPECT_THROW(rotation_compose_check(eye, Mat3{2, 0, 0, 0, 1, 0, 0, 0, 1}), RotationError);
}

TEST(Rotation, RandomPairsCompose) {
  Rng rng(16);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Mat3 a = random_rotation(rng), b = random_rotation(rng);
    ASSERT_TRUE(is_rotation(a));
    const Mat3 got = rotation_compose_check(a, b), want = mat3_product(a, b);
    for (std::size_t i = 0; i < 9; ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(Rotation, MapsAreTheFixedSelections) {
  const auto m = rotation_maps();
  ASSERT_EQ(m.left.weight.value.shape(), (nn::Shape{27, 27}));
  const Mat3 a{1, 2, 3, 4, 5, 6, 7, 8, 9}, b{9, 8, 7, 6, 5, 4, 3, 2, 1};
  std::vector<double> xa(27, 0.0), xb(27, 0.0);
  std::copy(a.begin(), a.end(), xa.begin());
  std::copy(b.begin(), b.end(), xb.begin());
  const auto la = apply_linear(m.left, xa.data()), lb = apply_linear(m.right, xb.data());
  std::vector<double> prod(27);
  for (std::size_t i = 0; i < 27; ++i) prod[i] = la[i] * lb[i];
  const auto o = apply_linear(m.out, prod.data());
  const Mat3 ab = mat3_product(a, b);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(o[i], ab[i]);
  for (std::size_t i = 9; i < 27; ++i) EXPECT_EQ(o[i], 0.0);
}
