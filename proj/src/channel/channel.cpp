#include "csirope/channel/channel.hpp"

#include <cmath>
#include <algorithm>
#include <numbers>
#include <sstream>

#include "csirope/errors.hpp"
#include "csirope/util/kv.hpp"
#include "csirope/util/rng.hpp"

namespace csirope::channel {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Delays are drawn on [0, kDelayWindow * delay_spread].
constexpr double kDelayWindow = 10.0;

void require_positive(double v, const char* field) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(field, "must be positive and finite");
}

void require_nonnegative(double v, const char* field) {
  if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(field, "must be non-negative and finite");
}

}  // namespace

void ChannelConfig::validate() const {
  if (T < 1) throw ConfigError("T", "must be >= 1");
  if (K < 1) throw ConfigError("K", "must be >= 1");
  if (U < 1) throw ConfigError("U", "must be >= 1");
  require_positive(slot_duration_s, "slot_duration_s");
  require_positive(subcarrier_spacing_hz, "subcarrier_spacing_hz");
  require_positive(carrier_hz, "carrier_hz");
  require_nonnegative(speed_mps, "speed_mps");
  require_nonnegative(delay_spread_s, "delay_spread_s");
  require_positive(antenna_spacing_wavelengths, "antenna_spacing_wavelengths");
  if (num_paths < 8) throw ConfigError("num_paths", "must be >= 8");
  if (noise_snr_db && !std::isfinite(*noise_snr_db)) throw ConfigError("noise_snr_db", "must be finite");
}

std::string ChannelConfig::to_record() const {
  std::ostringstream os;
  os << "T=" << T << '\n'
     << "K=" << K << '\n'
     << "U=" << U << '\n'
     << "slot_duration_s=" << util::format_double(slot_duration_s) << '\n'
     << "subcarrier_spacing_hz=" << util::format_double(subcarrier_spacing_hz) << '\n'
     << "carrier_hz=" << util::format_double(carrier_hz) << '\n'
     << "speed_mps=" << util::format_double(speed_mps) << '\n'
     << "delay_spread_s=" << util::format_double(delay_spread_s) << '\n'
     << "antenna_spacing_wavelengths=" << util::format_double(antenna_spacing_wavelengths) << '\n'
     << "num_paths=" << num_paths << '\n'
     << "seed=" << seed << '\n'
     << "scenario_tag=" << scenario_tag << '\n';
  if (noise_snr_db) os << "noise_snr_db=" << util::format_double(*noise_snr_db) << '\n';
  return os.str();
}

ChannelConfig ChannelConfig::from_map(const std::map<std::string, std::string>& kv) {
  ChannelConfig c;
  c.T = util::get_size(kv, "T");
  c.K = util::get_size(kv, "K");
  c.U = util::get_size(kv, "U");
  c.slot_duration_s = util::get_double(kv, "slot_duration_s", c.slot_duration_s);
  c.subcarrier_spacing_hz = util::get_double(kv, "subcarrier_spacing_hz", c.subcarrier_spacing_hz);
  c.carrier_hz = util::get_double(kv, "carrier_hz", c.carrier_hz);
  c.speed_mps = util::get_double(kv, "speed_mps", c.speed_mps);
  c.delay_spread_s = util::get_double(kv, "delay_spread_s", c.delay_spread_s);
  c.antenna_spacing_wavelengths =
      util::get_double(kv, "antenna_spacing_wavelengths", c.antenna_spacing_wavelengths);
  c.num_paths = util::get_size(kv, "num_paths", c.num_paths);
  c.seed = util::get_u64(kv, "seed", c.seed);
  if (auto it = kv.find("scenario_tag"); it != kv.end()) c.scenario_tag = it->second;
  if (kv.count("noise_snr_db")) c.noise_snr_db = util::get_double(kv, "noise_snr_db");
  c.validate();
  return c;
}

ChannelConfig ChannelConfig::from_record(const std::string& text) {
  return from_map(util::parse_kv_lines(text));
}

double CsiArray::mean_power() const {
  double p = 0.0;
  for (const auto& v : h) p += std::norm(v);
  return h.empty() ? 0.0 : p / static_cast<double>(h.size());
}

CsiArray generate_sample(const ChannelConfig& config, std::uint64_t sample_index) {
  config.validate();
  Rng rng(derive_seed(config.seed, sample_index));
  const std::size_t P = config.num_paths;

  std::vector<double> delay(P);
  for (auto& d : delay) d = rng.uniform(0.0, kDelayWindow * config.delay_spread_s);
  std::sort(delay.begin(), delay.end());

  std::vector<double> power(P);
  double total = 0.0;
  for (std::size_t p = 0; p < P; ++p) {
    power[p] = config.delay_spread_s > 0.0 ? std::exp(-delay[p] / config.delay_spread_s) : 1.0;
    total += power[p];
  }

  const double fd = config.max_doppler_hz();
  std::vector<std::complex<double>> gain(P);
  // Per-path phase advance per slot, per subcarrier and per antenna.
  std::vector<double> wt(P), wk(P), wu(P);
  for (std::size_t p = 0; p < P; ++p) {
    const double phase = rng.uniform(0.0, kTwoPi);
    const double doppler_angle = rng.uniform(0.0, kTwoPi);
    const double departure = rng.uniform(0.0, kTwoPi);
    gain[p] = std::polar(std::sqrt(power[p] / total), phase);
    wt[p] = kTwoPi * fd * std::cos(doppler_angle) * config.slot_duration_s;
    wk[p] = -kTwoPi * config.subcarrier_spacing_hz * delay[p];
    wu[p] = kTwoPi * config.antenna_spacing_wavelengths * std::sin(departure);
  }

  CsiArray out(config.T, config.K, config.U);
  out.config = config;
  out.sample_index = sample_index;
  std::vector<std::complex<double>> et(config.T), ek(config.K), eu(config.U);
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t t = 0; t < config.T; ++t) et[t] = gain[p] * std::polar(1.0, wt[p] * static_cast<double>(t));
    for (std::size_t k = 0; k < config.K; ++k) ek[k] = std::polar(1.0, wk[p] * static_cast<double>(k));
    for (std::size_t u = 0; u < config.U; ++u) eu[u] = std::polar(1.0, wu[p] * static_cast<double>(u));
    auto* dst = out.h.data();
    for (std::size_t t = 0; t < config.T; ++t)
      for (std::size_t k = 0; k < config.K; ++k) {
        const auto gtk = et[t] * ek[k];
        for (std::size_t u = 0; u < config.U; ++u) *dst++ += gtk * eu[u];
      }
  }

  if (config.noise_snr_db) {
    const double sigma = std::sqrt(0.5 * std::pow(10.0, -*config.noise_snr_db / 10.0));
    for (auto& v : out.h) v += std::complex<double>(sigma * rng.normal(), sigma * rng.normal());
  }
  return out;
}

std::vector<CsiArray> generate(const ChannelConfig& config, std::size_t n_samples,
                               std::size_t first_index) {
  std::vector<CsiArray> out;
  out.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) out.push_back(generate_sample(config, first_index + i));
  return out;
}

}  // namespace csirope::channel
