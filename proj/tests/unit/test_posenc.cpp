#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "csirope/autodiff/ops.hpp"
#include "csirope/errors.hpp"
#include "csirope/posenc/posenc.hpp"
#include "support/gradcheck.hpp"

using namespace csirope;
using ad::Tensor;
using posenc::Stage;
using tokenizer::Coord;

namespace {

std::vector<Coord> random_coords(Rng& rng, std::size_t n) {
  std::vector<Coord> c(n);
  for (auto& x : c) {
    x.t = static_cast<std::int64_t>(rng.index(8));
    x.k = static_cast<std::int64_t>(rng.index(16));
    x.u = static_cast<std::int64_t>(rng.index(4));
  }
  return c;
}

// Direct per-pair rotation: the reference the tape op is compared to.
std::vector<double> rotate_reference(const std::vector<double>& x, const std::vector<double>& theta,
                                     std::size_t rows, std::size_t pairs) {
  std::vector<double> y(x.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < pairs; ++j) {
      const double a = x[r * 2 * pairs + 2 * j], b = x[r * 2 * pairs + 2 * j + 1];
      const std::complex<double> z = std::complex<double>(a, b) * std::polar(1.0, theta[r * pairs + j]);
      y[r * 2 * pairs + 2 * j] = z.real();
      y[r * 2 * pairs + 2 * j + 1] = z.imag();
    }
  return y;
}

// G from explicit 2D unit vectors: mean over pairs of <R(phi) e, e>.
double probe_oracle(const std::vector<double>& omega, std::size_t heads, std::size_t pairs,
                    std::size_t head, const Coord& d) {
  double acc = 0.0;
  for (std::size_t i = 0; i < pairs; ++i) {
    auto w = [&](std::size_t a) { return omega[(a * heads + head) * pairs + i]; };
    const double phi = static_cast<double>(d.t) * w(0) + static_cast<double>(d.k) * w(1) +
                       static_cast<double>(d.u) * w(2);
    const double ex = 1.0, ey = 0.0;
    const double rx = std::cos(phi) * ex - std::sin(phi) * ey;
    acc += rx * ex;
  }
  return acc / static_cast<double>(pairs);
}

}  // namespace

TEST(Bank, FixedBankAxisAssignment) {
  const auto b = posenc::fixed_bank(12, 2, 10000.0, Stage::kEncoder);
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t i = 0; i < 6; ++i) {
      std::size_t nonzero = 0;
      for (std::size_t a = 0; a < 3; ++a) {
        if (b.at(a, h, i) != 0.0) {
          ++nonzero;
          EXPECT_EQ(a, i % 3);
          EXPECT_EQ(b.at(a, h, i), posenc::rope_magnitude(i + 1, 12, 10000.0));
        }
      }
      EXPECT_EQ(nonzero, 1u);
    }
  EXPECT_FALSE(b.learnable);
}

TEST(Bank, RopeMagnitudeSchedule) {
  EXPECT_EQ(posenc::rope_magnitude(1, 16, 10000.0), 1.0);
  EXPECT_NEAR(posenc::rope_magnitude(3, 16, 10000.0), std::pow(10000.0, -4.0 / 16.0), 1e-15);
}

TEST(Bank, InitNormsFollowSchedule) {
  for (auto mode : {posenc::BankInit::kRandomDirection}) {
    const auto b = posenc::init_bank(16, 4, 10000.0, 7, Stage::kEncoder, mode);
    for (std::size_t h = 0; h < 4; ++h)
      for (std::size_t i = 0; i < 8; ++i) {
        const double n = std::hypot(b.at(0, h, i), b.at(1, h, i), b.at(2, h, i));
        EXPECT_NEAR(n, posenc::rope_magnitude(i + 1, 16, 10000.0), 1e-12);
      }
    EXPECT_TRUE(b.learnable);
  }
}

TEST(Bank, InitIsSeedDeterministic) {
  const auto a = posenc::init_bank(8, 2, 10000.0, 3, Stage::kDecoder);
  const auto b = posenc::init_bank(8, 2, 10000.0, 3, Stage::kDecoder);
  const auto c = posenc::init_bank(8, 2, 10000.0, 4, Stage::kDecoder);
  EXPECT_EQ(a.omega, b.omega);
  EXPECT_NE(a.omega, c.omega);
  EXPECT_EQ(posenc::fixed_bank(8, 2, 10000.0, Stage::kDecoder).omega,
            posenc::fixed_bank(8, 2, 10000.0, Stage::kDecoder).omega);
}

TEST(Bank, OddHeadDimRejected) {
  EXPECT_THROW(posenc::init_bank(7, 2, 10000.0, 1, Stage::kEncoder), ContractError);
  EXPECT_THROW(posenc::fixed_bank(5, 1, 10000.0, Stage::kEncoder), ContractError);
}

TEST(Context, IdenticalTokens) {
  const std::vector<double> v{1.5, -2.0, 0.25};
  std::vector<double> rows;
  for (int i = 0; i < 4; ++i) rows.insert(rows.end(), v.begin(), v.end());
  const auto c = posenc::context_vector(Tensor::constant({4, 3}, rows));
  EXPECT_EQ(c.shape(), (ad::Shape{1, 6}));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(c[i], v[i]);
    EXPECT_EQ(c[3 + i], 0.0);
  }
}

TEST(Context, OpposedTokens) {
  const auto c = posenc::context_vector(Tensor::constant({2, 2}, {3.0, -4.0, -3.0, 4.0}));
  EXPECT_EQ(c[0], 0.0);
  EXPECT_EQ(c[1], 0.0);
  EXPECT_EQ(c[2], 3.0);
  EXPECT_EQ(c[3], 4.0);
  EXPECT_THROW(posenc::context_vector(Tensor::constant({1, 2}, {1.0, 2.0})), ContractError);
}

TEST(Modulate, ArithmeticExample) {
  auto y = posenc::modulate(Tensor::constant({1}, {1.0}), Tensor::constant({1}, {0.1}),
                            Tensor::constant({1}, {0.05}));
  EXPECT_NEAR(y.item(), 1.15, 1e-15);
}

TEST(Modulate, ZeroControllerIsIdentity) {
  const auto bank = posenc::init_bank(8, 2, 10000.0, 5, Stage::kEncoder);
  const auto ctrl = posenc::zero_controller(6, 2, 8);
  Rng rng(1);
  const auto ctx = test::random_values(rng, 12, -3, 3);
  EXPECT_EQ(posenc::modulate(bank, ctrl, ctx), bank.omega);
  auto out = posenc::controller_forward(
      Tensor::constant({1, 12}, ctx), Tensor::constant({12, 24}, ctrl.w_scale),
      Tensor::constant({24}, ctrl.b_scale), Tensor::constant({12, 24}, ctrl.w_shift),
      Tensor::constant({24}, ctrl.b_shift), bank.columns());
  auto w = posenc::modulate(bank.as_tensor(), out.delta_scale, out.delta_shift);
  EXPECT_EQ(std::vector<double>(w.data().begin(), w.data().end()), bank.omega);
}

TEST(Modulate, TensorPathMatchesPlainPath) {
  const auto bank = posenc::init_bank(4, 2, 100.0, 6, Stage::kEncoder);
  auto ctrl = posenc::zero_controller(3, 2, 4);
  Rng rng(2);
  ctrl.w_scale = test::random_values(rng, ctrl.w_scale.size(), -0.1, 0.1);
  ctrl.b_scale = test::random_values(rng, ctrl.b_scale.size(), -0.1, 0.1);
  ctrl.w_shift = test::random_values(rng, ctrl.w_shift.size(), -0.1, 0.1);
  ctrl.b_shift = test::random_values(rng, ctrl.b_shift.size(), -0.1, 0.1);
  const auto ctx = test::random_values(rng, 6);
  const auto plain = posenc::modulate(bank, ctrl, ctx);
  const std::size_t n = ctrl.output_dim();
  auto out = posenc::controller_forward(
      Tensor::constant({1, 6}, ctx), Tensor::constant({6, n}, ctrl.w_scale),
      Tensor::constant({n}, ctrl.b_scale), Tensor::constant({6, n}, ctrl.w_shift),
      Tensor::constant({n}, ctrl.b_shift), bank.columns());
  auto w = posenc::modulate(bank.as_tensor(), out.delta_scale, out.delta_shift);
  for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(w[j], plain[j], 1e-14);
}

TEST(Phases, Examples) {
  const Coord origin{0, 0, 0};
  auto zero = posenc::phases(Tensor::constant({3, 1}, {0.5, 0.25, 1.0}),
                             posenc::coordinate_matrix(std::span(&origin, 1)));
  EXPECT_EQ(zero.item(), 0.0);
  const Coord c{2, 3, 1};
  auto th = posenc::phases(Tensor::constant({3, 1}, {0.5, 0.25, 1.0}),
                           posenc::coordinate_matrix(std::span(&c, 1)));
  EXPECT_EQ(th.item(), 2.75);
}

TEST(Rotary, IdentityAndQuarterTurn) {
  Rng rng(3);
  const auto x = test::random_values(rng, 8);
  auto same = posenc::apply_rotary(Tensor::constant({2, 4}, x), Tensor::zeros({2, 2}));
  EXPECT_EQ(std::vector<double>(same.data().begin(), same.data().end()), x);
  auto q = posenc::apply_rotary(Tensor::constant({1, 2}, {1.0, 0.0}),
                                Tensor::constant({1, 1}, {std::numbers::pi / 2}));
  EXPECT_NEAR(q[0], 0.0, 1e-12);
  EXPECT_NEAR(q[1], 1.0, 1e-12);
}

TEST(Rotary, MatchesComplexMultiplicationAndPreservesNorm) {
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const std::size_t rows = 1 + rng.index(5), pairs = 1 + rng.index(6);
    const auto x = test::random_values(rng, rows * 2 * pairs);
    const auto th = test::random_values(rng, rows * pairs, -10, 10);
    auto y = posenc::apply_rotary(Tensor::constant({rows, 2 * pairs}, x),
                                  Tensor::constant({rows, pairs}, th));
    const auto ref = rotate_reference(x, th, rows, pairs);
    double nx = 0.0, ny = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      EXPECT_NEAR(y[j], ref[j], 1e-14);
      nx += x[j] * x[j];
      ny += y[j] * y[j];
    }
    EXPECT_NEAR(nx, ny, 1e-12);
  }
}

TEST(Rotary, ShapeMismatch) {
  EXPECT_THROW(posenc::apply_rotary(Tensor::zeros({2, 4}), Tensor::zeros({2, 3})), ShapeError);
}

TEST(Gradients, RotaryPhasesAndModulation) {
  Rng rng(5);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t rows = 1 + rng.index(3), cols = 1 + rng.index(3);
    const auto coords = random_coords(rng, rows);
    const auto w = test::random_values(rng, rows * 2 * cols);
    auto r = test::check_gradients(
        [&](const auto& x) {
          auto omega = posenc::modulate(x[1], x[2], x[3]);
          auto theta = posenc::phases(omega, posenc::coordinate_matrix(coords));
          return ad::sum(ad::mul(posenc::apply_rotary(x[0], theta),
                                 Tensor::constant({rows, 2 * cols}, w)));
        },
        {{rows, 2 * cols}, {3, cols}, {3, cols}, {3, cols}},
        {test::random_values(rng, rows * 2 * cols), test::random_values(rng, 3 * cols, -0.5, 0.5),
         test::random_values(rng, 3 * cols, -0.2, 0.2), test::random_values(rng, 3 * cols, -0.2, 0.2)});
    worst = std::max(worst, r.max_rel);
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Gradients, ContextAndController) {
  Rng rng(6);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t L = 2 + rng.index(3), D = 1 + rng.index(3), cols = 1 + rng.index(2);
    const std::size_t out = 3 * cols;
    const auto proj = test::random_values(rng, 2 * out);
    auto r = test::check_gradients(
        [&](const auto& x) {
          auto c = posenc::context_vector(x[0]);
          auto o = posenc::controller_forward(c, x[1], x[2], x[3], x[4], cols);
          auto both = ad::concat_rows(std::vector<Tensor>{o.delta_scale, o.delta_shift});
          return ad::sum(ad::mul(both, Tensor::constant({6, cols}, proj)));
        },
        {{L, D}, {2 * D, out}, {out}, {2 * D, out}, {out}},
        {test::random_values(rng, L * D), test::random_values(rng, 2 * D * out),
         test::random_values(rng, out), test::random_values(rng, 2 * D * out),
         test::random_values(rng, out)});
    worst = std::max(worst, r.max_rel);
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(RelativeInvariance, RotaryScoresDependOnOffsetsOnly) {
  Rng rng(7);
  const std::size_t heads = 2, d = 8, n = 10;
  const auto coords = random_coords(rng, n);
  auto q = Tensor::constant({n, heads * d}, test::random_values(rng, n * heads * d));
  auto k = Tensor::constant({n, heads * d}, test::random_values(rng, n * heads * d));
  auto omega = posenc::init_bank(d, heads, 10000.0, 1, Stage::kEncoder).as_tensor();
  EXPECT_EQ(posenc::rotary_relative_deviation(q, k, coords, omega, heads, {0, 0, 0}), 0.0);
  EXPECT_LT(posenc::rotary_relative_deviation(q, k, coords, omega, heads, {5, 7, 3}), 1e-8);
}

TEST(RelativeInvariance, AdditiveScoresDependOnAbsolutePosition) {
  Rng rng(8);
  const std::size_t D = 12, n = 10;
  const auto coords = random_coords(rng, n);
  auto x = Tensor::constant({n, D}, test::random_values(rng, n * D));
  auto wq = Tensor::constant({D, D}, test::random_values(rng, D * D));
  auto wk = Tensor::constant({D, D}, test::random_values(rng, D * D));
  const tokenizer::GridExtents g{8, 16, 4};
  for (auto kind : {posenc::ApeKind::kApe1d, posenc::ApeKind::kApe3d}) {
    EXPECT_EQ(posenc::ape_relative_deviation(x, wq, wk, coords, kind, g, 2, {0, 0, 0}), 0.0);
    EXPECT_GT(posenc::ape_relative_deviation(x, wq, wk, coords, kind, g, 2, {5, 7, 3}), 1e-3);
  }
}

TEST(Ape, OneDimensionalOrigin) {
  const Coord origin{};
  const auto p = posenc::ape_embeddings(posenc::ApeKind::kApe1d, std::span(&origin, 1), {2, 2, 2}, 8);
  EXPECT_EQ(p, (std::vector<double>{0, 1, 0, 1, 0, 1, 0, 1}));
}

TEST(Ape, OneDimensionalFlattening) {
  const Coord a{1, 0, 1};
  const tokenizer::GridExtents g{2, 3, 2};
  const auto p = posenc::ape_embeddings(posenc::ApeKind::kApe1d, std::span(&a, 1), g, 4);
  // flat index (1*3+0)*2+1 = 7
  EXPECT_NEAR(p[0], std::sin(7.0), 1e-15);
  EXPECT_NEAR(p[1], std::cos(7.0), 1e-15);
  EXPECT_NEAR(p[2], std::sin(7.0 * std::pow(10000.0, -0.5)), 1e-15);
}

TEST(Ape, ThreeDimensionalAxisDecoupling) {
  const std::vector<Coord> c{{2, 5, 0}, {2, 5, 3}};
  const std::size_t D = 20;  // bands of 6, two padding columns
  const auto p = posenc::ape_embeddings(posenc::ApeKind::kApe3d, c, {4, 8, 4}, D);
  for (std::size_t j = 0; j < 12; ++j) EXPECT_EQ(p[j], p[D + j]);
  EXPECT_NE(p[12], p[D + 12]);
  for (std::size_t r = 0; r < 2; ++r) {
    EXPECT_EQ(p[r * D + 18], 0.0);
    EXPECT_EQ(p[r * D + 19], 0.0);
  }
  EXPECT_EQ(p, posenc::ape_embeddings(posenc::ApeKind::kApe3d, c, {4, 8, 4}, D));
}

TEST(Probe, OriginParityAndOracle) {
  const std::size_t heads = 2, d = 16, pairs = 8;
  const auto bank = posenc::init_bank(d, heads, 10000.0, 9, Stage::kEncoder);
  EXPECT_EQ(posenc::probe_value(bank.omega, heads, d, 1, {0, 0, 0}), 1.0);
  const auto map = posenc::phase_probe(bank.omega, heads, d, 0, posenc::ProbeGrid{});
  EXPECT_EQ(map.offsets.size(), 21u * 21u);
  for (std::size_t i = 0; i < map.offsets.size(); ++i) {
    const auto& o = map.offsets[i];
    EXPECT_NEAR(map.g[i], probe_oracle(bank.omega, heads, pairs, 0, o), 1e-8);
    EXPECT_NEAR(map.g[i], posenc::probe_value(bank.omega, heads, d, 0, {-o.t, -o.k, -o.u}), 1e-12);
  }
}

TEST(Probe, CsvHeaderAndRows) {
  const auto bank = posenc::fixed_bank(4, 1, 10000.0, Stage::kEncoder);
  posenc::ProbeGrid g;
  g.dt_min = -1;
  g.dt_max = 1;
  g.dk_min = 0;
  g.dk_max = 0;
  const auto map = posenc::phase_probe(bank.omega, 1, 4, 0, g);
  const auto csv = posenc::probe_csv(map);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(Variants, NamesRoundTrip) {
  for (auto v : posenc::kAllVariants) EXPECT_EQ(posenc::parse_variant(posenc::variant_name(v)), v);
  EXPECT_THROW(posenc::parse_variant("rope2d"), ConfigError);
  EXPECT_FALSE(posenc::is_rotary(posenc::PeVariant::kApe3d));
  EXPECT_TRUE(posenc::is_rotary(posenc::PeVariant::kRopeAdaptive));
}
