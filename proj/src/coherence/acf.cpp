#include "csirope/coherence/acf.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "csirope/errors.hpp"
#include "csirope/util/kv.hpp"

namespace csirope::coherence {

std::string_view axis_name(Axis axis) {
  switch (axis) {
    case Axis::kT: return "T";
    case Axis::kK: return "K";
    case Axis::kU: return "U";
  }
  return "?";
}

Axis parse_axis(std::string_view s) {
  if (s == "T" || s == "t") return Axis::kT;
  if (s == "K" || s == "k") return Axis::kK;
  if (s == "U" || s == "u") return Axis::kU;
  throw ConfigError("axis", "expected T, K or U, got '" + std::string(s) + "'");
}

std::vector<double> AcfProfile::magnitude() const {
  std::vector<double> m(rho.size());
  for (std::size_t i = 0; i < rho.size(); ++i) m[i] = std::abs(rho[i]);
  return m;
}

AcfProfile empirical_acf(std::span<const channel::CsiArray> samples, Axis axis,
                         std::size_t max_lag) {
  if (samples.empty()) throw ContractError("empirical_acf: no samples");
  const auto& first = samples.front();
  const std::size_t extent = axis == Axis::kT ? first.T : axis == Axis::kK ? first.K : first.U;
  if (max_lag >= extent) {
    throw ContractError("empirical_acf: max_lag " + std::to_string(max_lag) +
                        " must be below the axis extent " + std::to_string(extent));
  }
  const std::size_t stride = axis == Axis::kT ? first.K * first.U : axis == Axis::kK ? first.U : 1;

  std::vector<std::complex<double>> num(max_lag + 1);
  std::vector<double> den(max_lag + 1);
  for (const auto& s : samples) {
    if (s.T != first.T || s.K != first.K || s.U != first.U) {
      throw ContractError("empirical_acf: samples have different extents");
    }
    for (std::size_t t = 0; t < s.T; ++t)
      for (std::size_t k = 0; k < s.K; ++k)
        for (std::size_t u = 0; u < s.U; ++u) {
          const std::size_t pos = axis == Axis::kT ? t : axis == Axis::kK ? k : u;
          const std::size_t o = s.offset(t, k, u);
          const auto a = s.h[o];
          const double p = std::norm(a);
          const std::size_t reach = std::min(max_lag, extent - 1 - pos);
          for (std::size_t d = 0; d <= reach; ++d) {
            num[d] += a * std::conj(s.h[o + d * stride]);
            den[d] += p;
          }
        }
  }
  AcfProfile out;
  out.axis = axis;
  out.n_samples = samples.size();
  out.rho.resize(max_lag + 1);
  for (std::size_t d = 0; d <= max_lag; ++d) out.rho[d] = den[d] > 0.0 ? num[d] / den[d] : 0.0;
  // Same anchors and same terms: the lag-0 ratio is exactly one.
  if (den[0] > 0.0) out.rho[0] = {1.0, 0.0};
  return out;
}

std::optional<std::size_t> coherence_extent(std::span<const double> magnitude, double eta) {
  if (!(eta > 0.0 && eta < 1.0)) throw ContractError("coherence_extent: eta must lie in (0,1)");
  for (std::size_t d = 0; d < magnitude.size(); ++d)
    if (magnitude[d] <= eta) return d;
  return std::nullopt;
}

std::optional<std::size_t> coherence_extent(const AcfProfile& profile, double eta) {
  const auto m = profile.magnitude();
  return coherence_extent(m, eta);
}

CoherenceExtents coherence_extents(const AcfProfile& t, const AcfProfile& k, const AcfProfile& u,
                                   double eta) {
  return {eta, coherence_extent(t, eta), coherence_extent(k, eta), coherence_extent(u, eta)};
}

double bessel_j0_series(double x) {
  // sum_m (-1)^m (x^2/4)^m / (m!)^2
  const double q = -0.25 * x * x;
  double term = 1.0;
  double sum = 1.0;
  for (int m = 1; m < 200; ++m) {
    term *= q / (static_cast<double>(m) * static_cast<double>(m));
    sum += term;
    if (std::abs(term) < 1e-17 * std::max(1.0, std::abs(sum))) break;
  }
  return sum;
}

double bessel_j0_quadrature(double x) {
  // The integrand is smooth and periodic, so the trapezoid rule converges
  // geometrically once the node count exceeds |x|.
  const int n = 64 + 2 * static_cast<int>(std::ceil(std::abs(x)));
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = std::numbers::pi * (static_cast<double>(i) + 0.5) / n;
    acc += std::cos(x * std::sin(t));
  }
  return acc / n;
}

double bessel_j0(double x) {
  return std::abs(x) < 8.0 ? bessel_j0_series(x) : bessel_j0_quadrature(x);
}

AcfProfile analytic_acf(AnalyticKind kind, const AnalyticParams& params, std::size_t max_lag) {
  AcfProfile out;
  out.axis = kind == AnalyticKind::kClarkeBessel ? Axis::kT : Axis::kK;
  out.rho.resize(max_lag + 1);
  for (std::size_t d = 0; d <= max_lag; ++d) {
    const double lag = static_cast<double>(d);
    if (kind == AnalyticKind::kClarkeBessel) {
      out.rho[d] = bessel_j0(2.0 * std::numbers::pi * params.doppler_per_slot * lag);
    } else {
      out.rho[d] = 1.0 / std::complex<double>(
                             1.0, 2.0 * std::numbers::pi * params.spacing_times_spread * lag);
    }
  }
  return out;
}

std::string acf_csv(const AcfProfile& profile) {
  std::ostringstream os;
  os << "axis,lag,re,im,abs\n";
  for (std::size_t d = 0; d < profile.rho.size(); ++d) {
    const auto& r = profile.rho[d];
    os << axis_name(profile.axis) << ',' << d << ',' << util::format_double(r.real()) << ','
       << util::format_double(r.imag()) << ',' << util::format_double(std::abs(r)) << '\n';
  }
  return os.str();
}

void write_acf_csv(const std::string& path, const AcfProfile& profile) {
  util::write_text_file(path, acf_csv(profile));
}

}  // namespace csirope::coherence
