#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "csirope/channel/channel.hpp"
#include "csirope/coherence/acf.hpp"
#include "csirope/errors.hpp"
#include "csirope/util/rng.hpp"

using namespace csirope;
using coherence::Axis;

namespace {

double max_abs_diff(const coherence::AcfProfile& a, const coherence::AcfProfile& b) {
  double m = 0.0;
  for (std::size_t d = 0; d < a.rho.size(); ++d) m = std::max(m, std::abs(a.rho[d] - b.rho[d]));
  return m;
}

}  // namespace

TEST(Bessel, AgreesWithStandardLibrary) {
  for (double x = 0.0; x <= 40.0; x += 0.173) {
    EXPECT_NEAR(coherence::bessel_j0(x), std::cyl_bessel_j(0.0, x), 1e-12) << x;
  }
}

TEST(Bessel, SeriesAndQuadratureAgreeOnOverlap) {
  for (double x = 0.0; x < 8.0; x += 0.25) {
    EXPECT_NEAR(coherence::bessel_j0_series(x), coherence::bessel_j0_quadrature(x), 1e-12) << x;
  }
}

TEST(Bessel, KnownValues) {
  EXPECT_EQ(coherence::bessel_j0(0.0), 1.0);
  EXPECT_NEAR(coherence::bessel_j0(2.4048), 0.0, 1e-3);
  EXPECT_NEAR(coherence::bessel_j0(2.404825557695773), 0.0, 1e-12);
}

TEST(Analytic, ExpPdpAtZeroLag) {
  const auto p = coherence::analytic_acf(coherence::AnalyticKind::kExpPdp, {0.0, 0.01}, 4);
  EXPECT_EQ(p.rho[0], std::complex<double>(1.0, 0.0));
  EXPECT_NEAR(std::abs(p.rho[1]), 1.0 / std::sqrt(1.0 + std::pow(2.0 * std::numbers::pi * 0.01, 2)),
              1e-14);
}

TEST(EmpiricalAcf, LagZeroIsExactlyOneAndBounded) {
  channel::ChannelConfig c;
  c.T = 8;
  c.K = 8;
  c.U = 4;
  const auto samples = channel::generate(c, 10);
  for (auto axis : {Axis::kT, Axis::kK, Axis::kU}) {
    const std::size_t extent = axis == Axis::kT ? 8 : axis == Axis::kK ? 8 : 4;
    const auto p = coherence::empirical_acf(samples, axis, extent - 1);
    EXPECT_EQ(p.rho[0], std::complex<double>(1.0, 0.0));
    EXPECT_EQ(p.n_samples, 10u);
    for (double m : p.magnitude()) EXPECT_LE(m, 1.0 + 1e-9);
  }
}

TEST(EmpiricalAcf, HandComputedTwoSlotSeries) {
  channel::CsiArray a(2, 1, 1);
  a.h = {{1.0, 0.0}, {0.0, 1.0}};
  const std::vector<channel::CsiArray> v{a};
  const auto p = coherence::empirical_acf(v, Axis::kT, 1);
  // anchor sum over x=0 only: H(0) conj(H(1)) / |H(0)|^2 = 1 * (-j)
  EXPECT_EQ(p.rho[1], std::complex<double>(0.0, -1.0));
}

TEST(EmpiricalAcf, Preconditions) {
  channel::ChannelConfig c;
  c.T = 4;
  const auto samples = channel::generate(c, 2);
  EXPECT_THROW(coherence::empirical_acf(samples, Axis::kT, 4), ContractError);
  EXPECT_THROW(coherence::empirical_acf({}, Axis::kT, 1), ContractError);
}

TEST(EmpiricalAcf, ClarkeEnsembleMatchesBessel) {
  channel::ChannelConfig c;
  c.T = 11;
  c.K = 2;
  c.U = 2;
  c.speed_mps = 30.0;
  c.seed = 2024;
  const auto samples = channel::generate(c, 2000);
  const auto emp = coherence::empirical_acf(samples, Axis::kT, 10);
  const auto ref = coherence::analytic_acf(coherence::AnalyticKind::kClarkeBessel,
                                           {c.max_doppler_hz() * c.slot_duration_s, 0.0}, 10);
  EXPECT_LT(max_abs_diff(emp, ref), 0.05);
}

TEST(EmpiricalAcf, FrequencyEnsembleMatchesExponentialPdp) {
  channel::ChannelConfig c;
  c.T = 2;
  c.K = 11;
  c.U = 2;
  c.seed = 77;
  const auto samples = channel::generate(c, 2000);
  const auto emp = coherence::empirical_acf(samples, Axis::kK, 10);
  const auto ref = coherence::analytic_acf(coherence::AnalyticKind::kExpPdp,
                                           {0.0, c.subcarrier_spacing_hz * c.delay_spread_s}, 10);
  double worst = 0.0;
  for (std::size_t d = 0; d <= 10; ++d) worst = std::max(worst, std::abs(emp.magnitude()[d] - ref.magnitude()[d]));
  EXPECT_LT(worst, 0.05);
}

TEST(EmpiricalAcf, TemporalAcfIgnoresDelaySpread) {
  channel::ChannelConfig c;
  c.T = 11;
  c.K = 2;
  c.U = 2;
  c.speed_mps = 30.0;
  const auto a = coherence::empirical_acf(channel::generate(c, 1500), Axis::kT, 10);
  c.delay_spread_s *= 4.0;
  c.seed = 5;
  const auto b = coherence::empirical_acf(channel::generate(c, 1500), Axis::kT, 10);
  double worst = 0.0;
  for (std::size_t d = 0; d <= 10; ++d) worst = std::max(worst, std::abs(a.magnitude()[d] - b.magnitude()[d]));
  EXPECT_LT(worst, 0.05);
}

TEST(Extent, Examples) {
  const double a[] = {1.0, 0.8, 0.4, 0.2};
  EXPECT_EQ(coherence::coherence_extent(a, 0.5), std::optional<std::size_t>(2));
  const double b[] = {1.0, 0.9, 0.8};
  EXPECT_EQ(coherence::coherence_extent(b, 0.5), std::nullopt);
  const double c[] = {1.0, 0.5};
  EXPECT_EQ(coherence::coherence_extent(c, 0.5), std::optional<std::size_t>(1));
}

TEST(Extent, ReportedLagIsTheFirstCrossing) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> m{1.0};
    for (int d = 0; d < 12; ++d) m.push_back(rng.uniform());
    const double eta = rng.uniform(0.05, 0.95);
    const auto e = coherence::coherence_extent(m, eta);
    if (!e) {
      for (double x : m) EXPECT_GT(x, eta);
      continue;
    }
    EXPECT_LE(m[*e], eta);
    for (std::size_t j = 0; j < *e; ++j) EXPECT_GT(m[j], eta);
  }
}

TEST(Extent, MonotoneInSpeedAndDelaySpread) {
  channel::ChannelConfig c;
  c.T = 40;
  c.K = 40;
  c.U = 1;
  c.speed_mps = 15.0;
  c.delay_spread_s = 300e-9;
  auto extents = [](const channel::ChannelConfig& cfg) {
    const auto s = channel::generate(cfg, 300);
    return std::pair{coherence::coherence_extent(coherence::empirical_acf(s, Axis::kT, 39), 0.5),
                     coherence::coherence_extent(coherence::empirical_acf(s, Axis::kK, 39), 0.5)};
  };
  const auto base = extents(c);
  auto fast = c;
  fast.speed_mps *= 2.0;
  auto wide = c;
  wide.delay_spread_s *= 2.0;
  ASSERT_TRUE(base.first && base.second);
  const auto f = extents(fast);
  const auto w = extents(wide);
  ASSERT_TRUE(f.first && w.second);
  EXPECT_LT(*f.first, *base.first);
  EXPECT_LT(*w.second, *base.second);
}

TEST(Csv, OneRowPerLag) {
  const auto p = coherence::analytic_acf(coherence::AnalyticKind::kClarkeBessel, {0.05, 0.0}, 6);
  const auto csv = coherence::acf_csv(p);
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "axis,lag,re,im,abs");
  std::size_t rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 7u);
  EXPECT_EQ(coherence::parse_axis("K"), Axis::kK);
}
