#include "csirope/posenc/posenc.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "csirope/autodiff/ops.hpp"
#include "csirope/errors.hpp"
#include "csirope/util/kv.hpp"
#include "csirope/util/rng.hpp"

namespace csirope::posenc {

using ad::Tensor;

std::string_view variant_name(PeVariant v) {
  switch (v) {
    case PeVariant::kApe1d: return "ape1d";
    case PeVariant::kApe3d: return "ape3d";
    case PeVariant::kRopeFixed: return "rope3d_fixed";
    case PeVariant::kRopeLearnable: return "rope3d_learnable";
    case PeVariant::kRopeAdaptive: return "rope3d_adaptive";
  }
  return "?";
}

PeVariant parse_variant(std::string_view s) {
  for (auto v : kAllVariants)
    if (variant_name(v) == s) return v;
  throw ConfigError("pe_variant", "unknown positional encoding '" + std::string(s) + "'");
}

bool is_rotary(PeVariant v) {
  return v == PeVariant::kRopeFixed || v == PeVariant::kRopeLearnable ||
         v == PeVariant::kRopeAdaptive;
}

std::string_view bank_init_name(BankInit b) {
  return b == BankInit::kRandomDirection ? "random_direction" : "pair_phase";
}

BankInit parse_bank_init(std::string_view s) {
  if (s == "random_direction") return BankInit::kRandomDirection;
  if (s == "pair_phase") return BankInit::kPairPhase;
  throw ConfigError("bank_init", "expected random_direction or pair_phase, got '" + std::string(s) + "'");
}

Tensor FrequencyBank::as_tensor(bool requires_grad) const {
  return requires_grad ? Tensor::parameter({kAxes, columns()}, omega)
                       : Tensor::constant({kAxes, columns()}, omega);
}

double rope_magnitude(std::size_t pair_1based, std::size_t head_dim, double rope_base) {
  return std::pow(rope_base, -2.0 * static_cast<double>(pair_1based - 1) /
                                 static_cast<double>(head_dim));
}

namespace {

void check_bank_shape(std::size_t head_dim, std::size_t heads, double rope_base) {
  if (head_dim == 0 || head_dim % 2 != 0) {
    throw ContractError("frequency bank: head dimension " + std::to_string(head_dim) +
                        " must be even and positive");
  }
  if (heads == 0) throw ContractError("frequency bank: need at least one head");
  if (!(rope_base > 1.0)) throw ContractError("frequency bank: rope base must exceed 1");
}

FrequencyBank empty_bank(std::size_t head_dim, std::size_t heads, Stage stage, bool learnable) {
  FrequencyBank b;
  b.heads = heads;
  b.head_dim = head_dim;
  b.stage = stage;
  b.learnable = learnable;
  b.omega.assign(kAxes * heads * (head_dim / 2), 0.0);
  return b;
}

}  // namespace

FrequencyBank init_bank(std::size_t head_dim, std::size_t heads, double rope_base,
                        std::uint64_t seed, Stage stage, BankInit mode) {
  check_bank_shape(head_dim, heads, rope_base);
  auto bank = empty_bank(head_dim, heads, stage, true);
  Rng rng(derive_seed(seed, stage == Stage::kEncoder ? 0xe4cULL : 0xdecULL));
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < bank.pairs(); ++i) {
      const double mag = rope_magnitude(i + 1, head_dim, rope_base);
      double dir[kAxes];
      if (mode == BankInit::kRandomDirection) {
        double norm = 0.0;
        do {
          norm = 0.0;
          for (auto& c : dir) {
            c = rng.normal();
            norm += c * c;
          }
        } while (norm < 1e-24);
        norm = std::sqrt(norm);
        for (auto& c : dir) c /= norm;
      } else {
        for (auto& c : dir) c = std::cos(rng.uniform(0.0, 2.0 * std::numbers::pi));
      }
      for (std::size_t a = 0; a < kAxes; ++a) bank.omega[bank.index(a, h, i)] = dir[a] * mag;
    }
  return bank;
}

FrequencyBank fixed_bank(std::size_t head_dim, std::size_t heads, double rope_base, Stage stage) {
  check_bank_shape(head_dim, heads, rope_base);
  auto bank = empty_bank(head_dim, heads, stage, false);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < bank.pairs(); ++i)
      bank.omega[bank.index(i % kAxes, h, i)] = rope_magnitude(i + 1, head_dim, rope_base);
  return bank;
}

ControllerParams zero_controller(std::size_t token_dim, std::size_t heads, std::size_t head_dim) {
  ControllerParams c;
  c.token_dim = token_dim;
  c.heads = heads;
  c.head_dim = head_dim;
  c.w_scale.assign(c.context_dim() * c.output_dim(), 0.0);
  c.w_shift.assign(c.context_dim() * c.output_dim(), 0.0);
  c.b_scale.assign(c.output_dim(), 0.0);
  c.b_shift.assign(c.output_dim(), 0.0);
  return c;
}

Tensor context_vector(const Tensor& tokens) {
  if (tokens.rank() != 2) throw ShapeError("context_vector: expected [L, D], got " + ad::shape_str(tokens.shape()));
  if (tokens.dim(0) < 2) {
    throw ContractError("context_vector: need at least two tokens, got " + std::to_string(tokens.dim(0)));
  }
  const std::size_t d = tokens.dim(1);
  const Tensor parts[] = {ad::reshape(ad::mean(tokens, 0), {1, d}),
                          ad::reshape(ad::std_dev(tokens, 0), {1, d})};
  return ad::concat_cols(parts);
}

ControllerOutputs controller_forward(const Tensor& context, const Tensor& w_scale,
                                     const Tensor& b_scale, const Tensor& w_shift,
                                     const Tensor& b_shift, std::size_t columns) {
  auto branch = [&](const Tensor& w, const Tensor& b) {
    return ad::reshape(ad::add(ad::matmul(context, w), b), {kAxes, columns});
  };
  return {branch(w_scale, b_scale), branch(w_shift, b_shift)};
}

Tensor modulate(const Tensor& base, const Tensor& delta_scale, const Tensor& delta_shift) {
  return ad::add(ad::mul(base, ad::add_scalar(delta_scale, 1.0)), delta_shift);
}

Tensor coordinate_matrix(std::span<const tokenizer::Coord> coords, const tokenizer::Coord& shift) {
  std::vector<double> v(coords.size() * kAxes);
  for (std::size_t m = 0; m < coords.size(); ++m) {
    v[m * 3 + 0] = static_cast<double>(coords[m].t + shift.t);
    v[m * 3 + 1] = static_cast<double>(coords[m].k + shift.k);
    v[m * 3 + 2] = static_cast<double>(coords[m].u + shift.u);
  }
  return Tensor::constant({coords.size(), kAxes}, std::move(v));
}

Tensor phases(const Tensor& omega, const Tensor& coords) { return ad::matmul(coords, omega); }

Tensor apply_rotary(const Tensor& x, const Tensor& theta) {
  if (x.rank() != 2 || theta.rank() != 2 || x.dim(0) != theta.dim(0) ||
      x.dim(1) != 2 * theta.dim(1)) {
    throw ShapeError("apply_rotary: features " + ad::shape_str(x.shape()) +
                     " do not match phases " + ad::shape_str(theta.shape()));
  }
  const std::size_t rows = theta.dim(0), pairs = theta.dim(1);
  auto xv = x.data();
  auto tv = theta.data();
  std::vector<double> out(xv.size()), cs(tv.size()), sn(tv.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < pairs; ++j) {
      const std::size_t q = r * pairs + j;
      cs[q] = std::cos(tv[q]);
      sn[q] = std::sin(tv[q]);
      const double a = xv[2 * q], b = xv[2 * q + 1];
      out[2 * q] = a * cs[q] - b * sn[q];
      out[2 * q + 1] = a * sn[q] + b * cs[q];
    }
  return ad::make_result(
      "rotary", x.shape(), std::move(out), {x, theta},
      [cs = std::move(cs), sn = std::move(sn)](ad::Node& self) {
        const auto& g = self.grad;
        const auto& y = self.value;
        if (self.inputs[0]->requires_grad) {
          auto& dx = self.inputs[0]->grad_buffer();
          for (std::size_t q = 0; q < cs.size(); ++q) {
            dx[2 * q] += g[2 * q] * cs[q] + g[2 * q + 1] * sn[q];
            dx[2 * q + 1] += -g[2 * q] * sn[q] + g[2 * q + 1] * cs[q];
          }
        }
        if (self.inputs[1]->requires_grad) {
          auto& dt = self.inputs[1]->grad_buffer();
          for (std::size_t q = 0; q < cs.size(); ++q)
            dt[q] += g[2 * q + 1] * y[2 * q] - g[2 * q] * y[2 * q + 1];
        }
      });
}

std::vector<double> modulate(const FrequencyBank& bank, const ControllerParams& ctrl,
                             std::span<const double> context) {
  if (context.size() != ctrl.context_dim() || ctrl.output_dim() != bank.omega.size()) {
    throw ShapeError("modulate: context/controller/bank shapes are inconsistent");
  }
  const std::size_t n = ctrl.output_dim();
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = ctrl.b_scale[j], b = ctrl.b_shift[j];
    for (std::size_t i = 0; i < context.size(); ++i) {
      s += context[i] * ctrl.w_scale[i * n + j];
      b += context[i] * ctrl.w_shift[i * n + j];
    }
    out[j] = bank.omega[j] * (1.0 + s) + b;
  }
  return out;
}

namespace {

void sinusoid_row(double pos, double* dst, std::size_t width) {
  for (std::size_t i = 0; i + 1 < width; i += 2) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(width));
    dst[i] = std::sin(pos * freq);
    dst[i + 1] = std::cos(pos * freq);
  }
}

}  // namespace

std::vector<double> ape_embeddings(ApeKind kind, std::span<const tokenizer::Coord> coords,
                                   const tokenizer::GridExtents& grid, std::size_t dim) {
  std::vector<double> out(coords.size() * dim, 0.0);
  const std::size_t band = 2 * (dim / 6);
  for (std::size_t m = 0; m < coords.size(); ++m) {
    const auto& c = coords[m];
    double* row = out.data() + m * dim;
    if (kind == ApeKind::kApe1d) {
      const auto flat = (c.t * static_cast<std::int64_t>(grid.k) + c.k) *
                            static_cast<std::int64_t>(grid.u) + c.u;
      sinusoid_row(static_cast<double>(flat), row, dim);
    } else {
      sinusoid_row(static_cast<double>(c.t), row, band);
      sinusoid_row(static_cast<double>(c.k), row + band, band);
      sinusoid_row(static_cast<double>(c.u), row + 2 * band, band);
    }
  }
  return out;
}

double probe_value(std::span<const double> omega, std::size_t heads, std::size_t head_dim,
                   std::size_t head, const tokenizer::Coord& offset) {
  const std::size_t pairs = head_dim / 2;
  if (head_dim % 2 != 0) throw ContractError("phase_probe: head dimension must be even");
  if (head >= heads || omega.size() != kAxes * heads * pairs) {
    throw ShapeError("phase_probe: head or frequency layout out of range");
  }
  const double* wt = omega.data() + (0 * heads + head) * pairs;
  const double* wk = omega.data() + (1 * heads + head) * pairs;
  const double* wu = omega.data() + (2 * heads + head) * pairs;
  double acc = 0.0;
  for (std::size_t i = 0; i < pairs; ++i) {
    acc += std::cos(static_cast<double>(offset.t) * wt[i] + static_cast<double>(offset.k) * wk[i] +
                    static_cast<double>(offset.u) * wu[i]);
  }
  // sum / (d/2) keeps the origin at exactly 1.
  return acc / static_cast<double>(pairs);
}

ProbeMap phase_probe(std::span<const double> omega, std::size_t heads, std::size_t head_dim,
                     std::size_t head, const ProbeGrid& grid) {
  if (grid.dt_step <= 0 || grid.dk_step <= 0 || grid.du_step <= 0) {
    throw ContractError("phase_probe: grid steps must be positive");
  }
  ProbeMap map;
  map.head = head;
  for (auto dt = grid.dt_min; dt <= grid.dt_max; dt += grid.dt_step)
    for (auto dk = grid.dk_min; dk <= grid.dk_max; dk += grid.dk_step)
      for (auto du = grid.du_min; du <= grid.du_max; du += grid.du_step) {
        tokenizer::Coord off{dt, dk, du};
        map.offsets.push_back(off);
        map.g.push_back(probe_value(omega, heads, head_dim, head, off));
      }
  return map;
}

std::string probe_csv(const ProbeMap& map) {
  std::ostringstream os;
  os << "head,dt,dk,du,g\n";
  for (std::size_t i = 0; i < map.g.size(); ++i) {
    const auto& o = map.offsets[i];
    os << map.head << ',' << o.t << ',' << o.k << ',' << o.u << ',' << util::format_double(map.g[i])
       << '\n';
  }
  return os.str();
}

std::string bank_csv(std::span<const double> omega, std::size_t heads, std::size_t head_dim) {
  static constexpr const char* kAxisNames[] = {"T", "K", "U"};
  const std::size_t pairs = head_dim / 2;
  std::ostringstream os;
  os << "axis,head,pair,value\n";
  for (std::size_t a = 0; a < kAxes; ++a)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < pairs; ++i)
        os << kAxisNames[a] << ',' << h << ',' << i << ','
           << util::format_double(omega[(a * heads + h) * pairs + i]) << '\n';
  return os.str();
}

namespace {

// Per-head score matrices concatenated: [heads * n * n].
std::vector<double> head_scores(const Tensor& q, const Tensor& k, std::size_t heads) {
  const std::size_t width = q.dim(1) / heads;
  std::vector<double> out;
  for (std::size_t h = 0; h < heads; ++h) {
    auto s = ad::matmul_nt(ad::slice_cols(q, h * width, width), ad::slice_cols(k, h * width, width));
    out.insert(out.end(), s.data().begin(), s.data().end());
  }
  return out;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

double rotary_relative_deviation(const Tensor& q, const Tensor& k,
                                 std::span<const tokenizer::Coord> coords, const Tensor& omega,
                                 std::size_t heads, const tokenizer::Coord& shift) {
  auto scores_at = [&](const tokenizer::Coord& s) {
    auto theta = phases(omega, coordinate_matrix(coords, s));
    return head_scores(apply_rotary(q, theta), apply_rotary(k, theta), heads);
  };
  return max_abs_diff(scores_at({}), scores_at(shift));
}

double ape_relative_deviation(const Tensor& x, const Tensor& w_q, const Tensor& w_k,
                              std::span<const tokenizer::Coord> coords, ApeKind kind,
                              const tokenizer::GridExtents& grid, std::size_t heads,
                              const tokenizer::Coord& shift) {
  const std::size_t dim = x.dim(1);
  auto scores_at = [&](const tokenizer::Coord& s) {
    std::vector<tokenizer::Coord> moved(coords.begin(), coords.end());
    for (auto& c : moved) {
      c.t += s.t;
      c.k += s.k;
      c.u += s.u;
    }
    auto p = Tensor::constant({coords.size(), dim}, ape_embeddings(kind, moved, grid, dim));
    auto xp = ad::add(x, p);
    return head_scores(ad::matmul(xp, w_q), ad::matmul(xp, w_k), heads);
  };
  return max_abs_diff(scores_at({}), scores_at(shift));
}

}  // namespace csirope::posenc
