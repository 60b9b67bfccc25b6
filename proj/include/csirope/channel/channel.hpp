#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace csirope::channel {

inline constexpr double kSpeedOfLight = 299792458.0;

/// Scenario controls of the sum-of-paths generator.
///
/// speed_mps and delay_spread_s may be zero: they are the zero-Doppler and
/// flat-fading limits. Every other physical quantity must be positive.
struct ChannelConfig {
  std::size_t T = 16;
  std::size_t K = 32;
  std::size_t U = 8;
  double slot_duration_s = 1e-3;
  double subcarrier_spacing_hz = 30e3;
  double carrier_hz = 3.5e9;
  double speed_mps = 3.0;
  double delay_spread_s = 300e-9;
  double antenna_spacing_wavelengths = 0.5;
  std::size_t num_paths = 64;
  std::uint64_t seed = 1;
  std::string scenario_tag = "UMi-like";
  // Additive white noise; off unless set.
  std::optional<double> noise_snr_db;

  double max_doppler_hz() const { return speed_mps * carrier_hz / kSpeedOfLight; }

  // Throws ConfigError naming the first invalid field.
  void validate() const;

  // Canonical key=value lines in a fixed key order; doubles print in the
  // shortest form that parses back to the same value.
  std::string to_record() const;
  static ChannelConfig from_record(const std::string& text);
  static ChannelConfig from_map(const std::map<std::string, std::string>& kv);
};

/// One channel realization H(t,k,u), stored t-major, then k, then u.
struct CsiArray {
  std::size_t T = 0, K = 0, U = 0;
  std::vector<std::complex<double>> h;
  ChannelConfig config;
  std::uint64_t sample_index = 0;

  CsiArray() = default;
  CsiArray(std::size_t t, std::size_t k, std::size_t u)
      : T(t), K(k), U(u), h(t * k * u) {}

  std::size_t size() const { return h.size(); }
  std::size_t offset(std::size_t t, std::size_t k, std::size_t u) const {
    return (t * K + k) * U + u;
  }
  std::complex<double>& at(std::size_t t, std::size_t k, std::size_t u) { return h[offset(t, k, u)]; }
  const std::complex<double>& at(std::size_t t, std::size_t k, std::size_t u) const {
    return h[offset(t, k, u)];
  }
  double mean_power() const;
};

/// Sum-of-paths channel: exponential power-delay profile, Clarke Doppler
/// ring and a uniform linear array,
///
///   H(t,k,u) = sum_p g_p exp(j2pi fD cos(a_p) t Ts) exp(-j2pi k df tau_p)
///                        exp(j2pi s u sin(phi_p)).
///
/// Sample i is drawn from its own stream derive_seed(seed, i), so the result
/// does not depend on generation order.
CsiArray generate_sample(const ChannelConfig& config, std::uint64_t sample_index);
std::vector<CsiArray> generate(const ChannelConfig& config, std::size_t n_samples,
                               std::size_t first_index = 0);

}  // namespace csirope::channel
