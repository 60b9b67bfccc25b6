#include "csirope/channel/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>

#include "csirope/errors.hpp"
#include "csirope/util/binary_io.hpp"
#include "csirope/util/kv.hpp"
#include "csirope/util/rng.hpp"

namespace csirope::channel {

SplitCounts split_counts(std::size_t n, std::span<const double> ratios) {
  if (ratios.size() != 3) throw ContractError("split needs exactly three ratios");
  double total = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw ContractError("split ratios must be non-negative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw ContractError("split ratios sum to " + util::format_double(total) + ", expected 1");
  }
  // Ratios written to three decimals (0.083 for 1/12) snap to the nearby
  // small-denominator fraction when the snapped set still sums to one.
  std::array<std::int64_t, 3> num{}, den{};
  bool snapped = true;
  for (std::size_t i = 0; i < 3 && snapped; ++i) {
    snapped = false;
    for (std::int64_t q = 1; q <= 24; ++q) {
      const auto p = static_cast<std::int64_t>(std::llround(ratios[i] * static_cast<double>(q)));
      if (std::abs(ratios[i] - static_cast<double>(p) / static_cast<double>(q)) <= 5e-4) {
        num[i] = p;
        den[i] = q;
        snapped = true;
        break;
      }
    }
  }
  if (snapped) {
    const std::int64_t l = std::lcm(std::lcm(den[0], den[1]), den[2]);
    snapped = num[0] * (l / den[0]) + num[1] * (l / den[1]) + num[2] * (l / den[2]) == l;
  }
  std::array<std::size_t, 3> count{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    if (snapped) {
      const auto scaled = static_cast<std::int64_t>(n) * num[i];
      count[i] = static_cast<std::size_t>(scaled / den[i]);
      rem[i] = static_cast<double>(scaled % den[i]) / static_cast<double>(den[i]);
    } else {
      const double exact = ratios[i] * static_cast<double>(n);
      count[i] = static_cast<std::size_t>(std::floor(exact));
      rem[i] = exact - static_cast<double>(count[i]);
    }
    assigned += count[i];
  }
  // Hand the leftovers to the largest remainders; ties go to the earlier split.
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t j = 0; assigned < n; ++j, ++assigned) ++count[order[j % 3]];
  return {count[0], count[1], count[2]};
}

SplitIndices split_indices(const SplitCounts& counts, std::uint64_t seed) {
  std::vector<std::size_t> perm(counts.total());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, 0x5b117ULL));
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
  SplitIndices out;
  auto it = perm.begin();
  auto take = [&](std::size_t n, std::vector<std::size_t>& dst) {
    dst.assign(it, it + static_cast<std::ptrdiff_t>(n));
    std::sort(dst.begin(), dst.end());
    it += static_cast<std::ptrdiff_t>(n);
  };
  take(counts.train, out.train);
  take(counts.val, out.val);
  take(counts.test, out.test);
  return out;
}

std::vector<CsiArray> Dataset::subset(const std::vector<std::size_t>& ids) const {
  std::vector<CsiArray> out;
  out.reserve(ids.size());
  for (auto i : ids) out.push_back(samples.at(i));
  return out;
}

std::string dataset_record(const Dataset& ds) {
  return ds.config.to_record() + "split_train=" + std::to_string(ds.split.train) + '\n' +
         "split_val=" + std::to_string(ds.split.val) + '\n' +
         "split_test=" + std::to_string(ds.split.test) + '\n';
}

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  const auto& c = ds.config;
  if (ds.split.total() != ds.samples.size()) {
    throw ContractError("split counts cover " + std::to_string(ds.split.total()) + " samples, dataset has " +
                        std::to_string(ds.samples.size()));
  }
  util::ByteWriter w;
  w.bytes(kDatasetMagic);
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(c.T));
  w.u32(static_cast<std::uint32_t>(c.K));
  w.u32(static_cast<std::uint32_t>(c.U));
  w.u32(static_cast<std::uint32_t>(ds.samples.size()));
  w.u64(c.seed);
  w.prefixed(dataset_record(ds));
  const std::size_t payload_start = w.size();
  for (const auto& s : ds.samples) {
    if (s.T != c.T || s.K != c.K || s.U != c.U) {
      throw ContractError("sample extents do not match the dataset config");
    }
    for (const auto& v : s.h) {
      w.f32(static_cast<float>(v.real()));
      w.f32(static_cast<float>(v.imag()));
    }
  }
  const std::span<const std::uint8_t> payload(w.buffer().data() + payload_start,
                                              w.size() - payload_start);
  w.u32(util::crc32(payload));
  return std::move(w.buffer());
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  util::ByteReader r(bytes);
  if (r.bytes(kDatasetMagic.size()) != kDatasetMagic) throw FormatError("not a CSI3D1 file (bad magic)");
  const auto version = r.u32();
  if (version != kDatasetVersion) throw FormatError("unsupported CSI3D1 version " + std::to_string(version));
  const std::size_t T = r.u32(), K = r.u32(), U = r.u32(), N = r.u32();
  const std::uint64_t seed = r.u64();
  const auto record = r.prefixed();

  Dataset ds;
  const auto kv = util::parse_kv_lines(record);
  ds.config = ChannelConfig::from_map(kv);
  if (ds.config.T != T || ds.config.K != K || ds.config.U != U || ds.config.seed != seed) {
    throw FormatError("CSI3D1 header disagrees with its config record");
  }
  ds.split = {util::get_size(kv, "split_train", N), util::get_size(kv, "split_val", 0),
              util::get_size(kv, "split_test", 0)};
  if (ds.split.total() != N) throw FormatError("CSI3D1 split counts do not sum to N");

  const std::size_t per_sample = T * K * U;
  const auto payload = r.view(N * per_sample * 8);
  const auto stored_crc = r.u32();
  if (r.remaining() != 0) throw FormatError("trailing bytes after CSI3D1 footer");
  if (util::crc32(payload) != stored_crc) throw FormatError("CSI3D1 payload CRC32 mismatch");

  util::ByteReader pr(payload);
  ds.samples.reserve(N);
  for (std::size_t n = 0; n < N; ++n) {
    CsiArray s(T, K, U);
    s.config = ds.config;
    s.sample_index = n;
    for (auto& v : s.h) {
      const float re = pr.f32();
      const float im = pr.f32();
      v = {re, im};
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void write_dataset(const std::string& path, const Dataset& ds, bool force) {
  const auto bytes = encode_dataset(ds);
  util::write_binary_file(path, bytes, force);
}

Dataset read_dataset(const std::string& path) { return decode_dataset(util::read_binary_file(path)); }

std::vector<std::string> make_dataset_suite(const std::vector<ChannelConfig>& configs,
                                            std::size_t n_samples,
                                            std::span<const double> ratios,
                                            const std::string& out_dir, bool force) {
  const auto split = split_counts(n_samples, ratios);
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> paths;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    Dataset ds;
    ds.config = configs[i];
    ds.split = split;
    ds.samples = generate(configs[i], n_samples);
    const auto path =
        (std::filesystem::path(out_dir) / (std::to_string(i) + "_" + configs[i].scenario_tag + ".csi3d"))
            .string();
    write_dataset(path, ds, force);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace csirope::channel
