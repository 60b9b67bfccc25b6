#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csirope/channel/channel.hpp"

namespace csirope::coherence {

enum class Axis { kT, kK, kU };

std::string_view axis_name(Axis axis);
Axis parse_axis(std::string_view s);

/// Normalized correlation rho[lag] along one axis; rho[0] == 1 exactly.
struct AcfProfile {
  Axis axis = Axis::kT;
  std::vector<std::complex<double>> rho;
  std::size_t n_samples = 0;

  std::size_t max_lag() const { return rho.empty() ? 0 : rho.size() - 1; }
  std::vector<double> magnitude() const;
};

/// rho[d] = sum H(x) conj(H(x+d)) / sum |H(x)|^2, both sums over the anchors
/// x for which x+d is inside the array, pooled over all samples. Requires
/// max_lag < extent along the axis and at least one sample.
AcfProfile empirical_acf(std::span<const channel::CsiArray> samples, Axis axis,
                         std::size_t max_lag);

/// Smallest lag with |rho| <= eta; nullopt when no lag up to max_lag
/// crosses ("beyond range").
std::optional<std::size_t> coherence_extent(std::span<const double> magnitude, double eta);
std::optional<std::size_t> coherence_extent(const AcfProfile& profile, double eta);

struct CoherenceExtents {
  double eta = 0.5;
  std::optional<std::size_t> c_t, c_k, c_u;
};

CoherenceExtents coherence_extents(const AcfProfile& t, const AcfProfile& k, const AcfProfile& u,
                                   double eta);

enum class AnalyticKind { kClarkeBessel, kExpPdp };

/// J0 for Clarke fading: argument 2*pi*fd*slot*lag. Exponential PDP:
/// 1/(1 + j*2*pi*df*sigma*lag).
struct AnalyticParams {
  double doppler_per_slot = 0.0;  // fd * slot duration
  double spacing_times_spread = 0.0;  // subcarrier spacing * rms delay spread
};

AcfProfile analytic_acf(AnalyticKind kind, const AnalyticParams& params, std::size_t max_lag);

/// Bessel function of the first kind, order zero. Power series below
/// |x| = 8, trapezoidal quadrature of (1/pi) int_0^pi cos(x sin t) dt above.
double bessel_j0(double x);
double bessel_j0_series(double x);
double bessel_j0_quadrature(double x);

/// CSV with header "axis,lag,re,im,abs", one row per lag.
std::string acf_csv(const AcfProfile& profile);
void write_acf_csv(const std::string& path, const AcfProfile& profile);

}  // namespace csirope::coherence
