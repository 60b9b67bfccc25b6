// Acceptance run: one PASS/FAIL line per criterion. Arguments select a
// subset of criteria by number; no arguments runs all eight.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "csirope/autodiff/ops.hpp"
#include "csirope/channel/dataset.hpp"
#include "csirope/coherence/acf.hpp"
#include "csirope/model/train.hpp"
#include "csirope/posenc/posenc.hpp"
#include "csirope/util/binary_io.hpp"
#include "support/gradcheck.hpp"
#include "support/micro_model.hpp"

using namespace csirope;
using ad::Shape;
using ad::Tensor;
using posenc::PeVariant;
using test::check_gradients;
using test::random_values;
using tokenizer::Coord;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<Coord> random_coords(Rng& rng, std::size_t n) {
  std::vector<Coord> c(n);
  for (auto& x : c) {
    x.t = static_cast<std::int64_t>(rng.index(16));
    x.k = static_cast<std::int64_t>(rng.index(32));
    x.u = static_cast<std::int64_t>(rng.index(8));
  }
  return c;
}

// 1 ---------------------------------------------------------------------------

Outcome relative_invariance() {
  Rng rng(101);
  const std::size_t heads = 2, d = 8, D = heads * d;
  const tokenizer::GridExtents grid{16, 32, 8};
  double rotary_worst = 0.0, ape_least = 1e300;
  for (int set = 0; set < 50; ++set) {
    const std::size_t n = 4 + rng.index(13);
    const auto coords = random_coords(rng, n);
    const Coord shift{static_cast<std::int64_t>(1 + rng.index(20)),
                      static_cast<std::int64_t>(1 + rng.index(20)),
                      static_cast<std::int64_t>(1 + rng.index(5))};
    auto q = Tensor::constant({n, D}, random_values(rng, n * D));
    auto k = Tensor::constant({n, D}, random_values(rng, n * D));

    // Fixed, learned, and controller-adapted frequency sets.
    const auto fixed = posenc::fixed_bank(d, heads, 10000.0, posenc::Stage::kEncoder);
    const auto learned = posenc::init_bank(d, heads, 10000.0, rng.next(), posenc::Stage::kEncoder);
    auto ctrl = posenc::zero_controller(D, heads, d);
    for (auto* w : {&ctrl.w_scale, &ctrl.b_scale, &ctrl.w_shift, &ctrl.b_shift})
      for (auto& v : *w) v = rng.uniform(-0.1, 0.1);
    const auto context = random_values(rng, 2 * D);
    const auto adapted = posenc::modulate(learned, ctrl, context);
    for (const auto* omega : {&fixed.omega, &learned.omega, &adapted}) {
      auto w = Tensor::constant({3, fixed.columns()}, *omega);
      rotary_worst = std::max(rotary_worst, posenc::rotary_relative_deviation(q, k, coords, w, heads, shift));
    }

    auto x = Tensor::constant({n, D}, random_values(rng, n * D));
    auto wq = Tensor::constant({D, D}, random_values(rng, D * D));
    auto wk = Tensor::constant({D, D}, random_values(rng, D * D));
    for (auto kind : {posenc::ApeKind::kApe1d, posenc::ApeKind::kApe3d})
      ape_least = std::min(ape_least, posenc::ape_relative_deviation(x, wq, wk, coords, kind, grid, heads, shift));
  }
  return {rotary_worst < 1e-8 && ape_least > 1e-3,
          "rotary max dev " + fmt("%.3g", rotary_worst) + ", ape min dev " + fmt("%.3g", ape_least)};
}

// 2 ---------------------------------------------------------------------------

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Outcome degeneracy() {
  std::size_t cases = 0, equal = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto cfg = test::micro_config(PeVariant::kRopeAdaptive);
    const model::MaskedAutoencoder adaptive(cfg, seed);
    cfg.pe_variant = PeVariant::kRopeLearnable;
    model::MaskedAutoencoder learnable(cfg, seed);
    cfg.pe_variant = PeVariant::kRopeFixed;
    const model::MaskedAutoencoder fixed(cfg, seed);
    const auto sample = test::micro_sample(seed);
    const auto grid = tokenizer::tokenize(sample, cfg.patch);
    for (auto kind : {tokenizer::MaskKind::kRandom, tokenizer::MaskKind::kTemporal,
                      tokenizer::MaskKind::kFrequency}) {
      const auto mask = tokenizer::build_mask(grid, kind, 0.5, seed);
      ++cases;
      equal += values(adaptive.forward(grid, mask, adaptive.bind(false))) ==
               values(learnable.forward(grid, mask, learnable.bind(false)));
      auto frozen = learnable;
      frozen.params().at("enc.bank").value = fixed.fixed_bank(posenc::Stage::kEncoder).omega;
      frozen.params().at("dec.bank").value = fixed.fixed_bank(posenc::Stage::kDecoder).omega;
      ++cases;
      equal += values(frozen.forward(grid, mask, frozen.bind(false))) ==
               values(fixed.forward(grid, mask, fixed.bind(false)));
    }
  }
  return {equal == cases, std::to_string(equal) + "/" + std::to_string(cases) + " outputs bit-identical"};
}

// 3 ---------------------------------------------------------------------------

Tensor project(const Tensor& t, std::uint64_t seed) {
  Rng rng(seed);
  return ad::sum(ad::mul(t, Tensor::constant(t.shape(), random_values(rng, t.size()))));
}

Outcome gradient_suite() {
  constexpr int kInstances = 30;
  Rng rng(303);
  double op_worst = 0.0;
  auto note = [&](const test::GradReport& r) { op_worst = std::max(op_worst, r.max_rel); };
  auto shape2 = [&] { return Shape{1 + rng.index(4), 1 + rng.index(4)}; };

  const std::vector<std::pair<std::function<Tensor(const Tensor&)>, double>> unary = {
      {[](const Tensor& x) { return ad::neg(x); }, 2.0},
      {[](const Tensor& x) { return ad::sin(x); }, 2.0},
      {[](const Tensor& x) { return ad::cos(x); }, 2.0},
      {[](const Tensor& x) { return ad::exp(x); }, 2.0},
      {[](const Tensor& x) { return ad::sqr(x); }, 2.0},
      {[](const Tensor& x) { return ad::scale(x, 0.7); }, 2.0},
      {[](const Tensor& x) { return ad::add_scalar(x, -0.4); }, 2.0},
      {[](const Tensor& x) { return ad::gelu(x); }, 4.0},
      {[](const Tensor& x) { return ad::transpose(x); }, 2.0},
      {[](const Tensor& x) { return ad::reshape(x, {x.size()}); }, 2.0},
      {[](const Tensor& x) { return ad::softmax_lastaxis(x); }, 2.0},
  };
  const std::vector<std::function<Tensor(const Tensor&, const Tensor&)>> binary = {
      [](const Tensor& a, const Tensor& b) { return ad::add(a, b); },
      [](const Tensor& a, const Tensor& b) { return ad::sub(a, b); },
      [](const Tensor& a, const Tensor& b) { return ad::mul(a, b); },
  };

  for (int i = 0; i < kInstances; ++i) {
    for (const auto& [op, range] : unary) {
      const Shape s = shape2();
      const auto seed = rng.next();
      note(check_gradients([&](const auto& x) { return project(op(x[0]), seed); }, {s},
                           {random_values(rng, ad::numel(s), -range, range)}));
    }
    for (const auto& op : binary) {
      const Shape s = shape2();
      for (const Shape& b : {s, Shape{s[0], 1}, Shape{s[1]}}) {
        const auto seed = rng.next();
        note(check_gradients([&](const auto& x) { return project(op(x[0], x[1]), seed); }, {s, b},
                             {random_values(rng, ad::numel(s)), random_values(rng, ad::numel(b))}));
      }
    }
    {
      const std::size_t m = 1 + rng.index(4), k = 1 + rng.index(4), n = 1 + rng.index(4);
      const auto seed = rng.next();
      note(check_gradients([&](const auto& x) { return project(ad::matmul(x[0], x[1]), seed); },
                           {{m, k}, {k, n}}, {random_values(rng, m * k), random_values(rng, k * n)}));
      note(check_gradients([&](const auto& x) { return project(ad::matmul_nt(x[0], x[1]), seed); },
                           {{m, k}, {n, k}}, {random_values(rng, m * k), random_values(rng, n * k)}));
    }
    {
      const std::size_t rows = 1 + rng.index(3), c1 = 1 + rng.index(3), c2 = 1 + rng.index(3);
      const std::size_t start = rng.index(c1 + c2), len = 1 + rng.index(c1 + c2 - start);
      const auto seed = rng.next();
      note(check_gradients(
          [&](const auto& x) {
            const Tensor parts[] = {x[0], x[1]};
            return project(ad::slice_cols(ad::concat_cols(parts), start, len), seed);
          },
          {{rows, c1}, {rows, c2}}, {random_values(rng, rows * c1), random_values(rng, rows * c2)}));
      note(check_gradients(
          [&](const auto& x) {
            const Tensor parts[] = {x[0], x[1]};
            return project(ad::concat_rows(parts), seed);
          },
          {{c1, rows}, {c2, rows}}, {random_values(rng, c1 * rows), random_values(rng, c2 * rows)}));
      std::vector<std::size_t> idx(1 + rng.index(6));
      for (auto& v : idx) v = rng.index(rows);
      note(check_gradients([&](const auto& x) { return project(ad::gather_rows(x[0], idx), seed); },
                           {{rows, c1}}, {random_values(rng, rows * c1)}));
    }
    {
      const Shape s{2 + rng.index(3), 2 + rng.index(3)};
      const auto seed = rng.next();
      const auto v = random_values(rng, ad::numel(s));
      for (auto op : {ad::ReduceOp::kSum, ad::ReduceOp::kMean, ad::ReduceOp::kStd})
        for (auto axis : {std::optional<std::size_t>{}, std::optional<std::size_t>{0},
                          std::optional<std::size_t>{1}})
          note(check_gradients([&](const auto& x) { return project(ad::reduce(op, x[0], axis), seed); },
                               {s}, {v}));
      const std::size_t n = s[1];
      note(check_gradients([&](const auto& x) { return project(ad::layernorm(x[0], x[1], x[2]), seed); },
                           {s, {n}, {n}}, {v, random_values(rng, n), random_values(rng, n)}));
    }
    {
      const std::size_t rows = 1 + rng.index(3), cols = 1 + rng.index(3);
      const auto coords = random_coords(rng, rows);
      const auto seed = rng.next();
      note(check_gradients(
          [&](const auto& x) {
            auto omega = posenc::modulate(x[1], x[2], x[3]);
            return project(posenc::apply_rotary(x[0], posenc::phases(omega, posenc::coordinate_matrix(coords))),
                           seed);
          },
          {{rows, 2 * cols}, {3, cols}, {3, cols}, {3, cols}},
          {random_values(rng, rows * 2 * cols), random_values(rng, 3 * cols, -0.2, 0.2),
           random_values(rng, 3 * cols, -0.2, 0.2), random_values(rng, 3 * cols, -0.2, 0.2)}));
    }
    {
      const std::size_t L = 2 + rng.index(3), D = 1 + rng.index(3), cols = 1 + rng.index(2), out = 3 * cols;
      const auto seed = rng.next();
      note(check_gradients(
          [&](const auto& x) {
            auto o = posenc::controller_forward(posenc::context_vector(x[0]), x[1], x[2], x[3], x[4], cols);
            return project(ad::concat_rows(std::vector<Tensor>{o.delta_scale, o.delta_shift}), seed);
          },
          {{L, D}, {2 * D, out}, {out}, {2 * D, out}, {out}},
          {random_values(rng, L * D), random_values(rng, 2 * D * out), random_values(rng, out),
           random_values(rng, 2 * D * out), random_values(rng, out)}));
    }
  }

  double e2e_worst = 0.0;
  for (auto v : posenc::kAllVariants) {
    model::MaskedAutoencoder m(test::micro_config(v), 4);
    test::perturb_controllers(m, 2);
    const auto sample = test::micro_sample(3);
    const auto grid = tokenizer::tokenize(sample, m.config().patch);
    for (auto kind : {tokenizer::MaskKind::kRandom, tokenizer::MaskKind::kTemporal}) {
      const auto mask = tokenizer::build_mask(grid, kind, 0.5, 6);
      const auto r = test::end_to_end_gradcheck(m, sample, mask, std::max<std::size_t>(20, m.params().size()), 7);
      e2e_worst = std::max(e2e_worst, r.max_rel);
    }
  }
  return {op_worst < 1e-4 && e2e_worst < 1e-3,
          "per-op max rel " + fmt("%.3g", op_worst) + ", end-to-end max rel " + fmt("%.3g", e2e_worst)};
}

// 4 ---------------------------------------------------------------------------

Outcome physics() {
  using coherence::Axis;
  channel::ChannelConfig ct;
  ct.T = 11;
  ct.K = 2;
  ct.U = 2;
  ct.speed_mps = 30.0;
  ct.seed = 404;
  const auto emp_t = coherence::empirical_acf(channel::generate(ct, 2000), Axis::kT, 10);
  const auto ref_t = coherence::analytic_acf(coherence::AnalyticKind::kClarkeBessel,
                                             {ct.max_doppler_hz() * ct.slot_duration_s, 0.0}, 10);
  double t_err = 0.0;
  for (std::size_t d = 0; d <= 10; ++d) t_err = std::max(t_err, std::abs(emp_t.rho[d] - ref_t.rho[d]));

  channel::ChannelConfig ck;
  ck.T = 2;
  ck.K = 11;
  ck.U = 2;
  ck.seed = 405;
  const auto emp_k = coherence::empirical_acf(channel::generate(ck, 2000), Axis::kK, 10);
  const auto ref_k = coherence::analytic_acf(coherence::AnalyticKind::kExpPdp,
                                             {0.0, ck.subcarrier_spacing_hz * ck.delay_spread_s}, 10);
  double k_err = 0.0;
  for (std::size_t d = 0; d <= 10; ++d) k_err = std::max(k_err, std::abs(emp_k.magnitude()[d] - ref_k.magnitude()[d]));

  channel::ChannelConfig base;
  base.T = 40;
  base.K = 40;
  base.U = 1;
  base.speed_mps = 5.0;
  base.delay_spread_s = 300e-9;
  base.seed = 406;
  auto extents = [](const channel::ChannelConfig& c) {
    const auto s = channel::generate(c, 300);
    return std::pair{coherence::coherence_extent(coherence::empirical_acf(s, Axis::kT, 39), 0.5),
                     coherence::coherence_extent(coherence::empirical_acf(s, Axis::kK, 39), 0.5)};
  };
  auto fast = base;
  fast.speed_mps *= 2.0;
  auto wide = base;
  wide.delay_spread_s *= 2.0;
  const auto b = extents(base), f = extents(fast), w = extents(wide);
  const bool mono = b.first && b.second && f.first && w.second && *f.first < *b.first && *w.second < *b.second;
  auto show = [](const std::optional<std::size_t>& e) { return e ? std::to_string(*e) : std::string("beyond"); };
  return {t_err < 0.05 && k_err < 0.05 && mono,
          "temporal err " + fmt("%.4f", t_err) + ", frequency err " + fmt("%.4f", k_err) + ", C_T " +
              show(b.first) + "->" + show(f.first) + ", C_K " + show(b.second) + "->" + show(w.second)};
}

// 5 ---------------------------------------------------------------------------

Outcome probe() {
  const std::size_t heads = 4, d = 16, pairs = d / 2;
  double oracle_err = 0.0, parity_err = 0.0;
  bool origin = true;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto bank = posenc::init_bank(d, heads, 10000.0, seed, posenc::Stage::kEncoder);
    for (std::size_t h = 0; h < heads; ++h) {
      origin = origin && posenc::probe_value(bank.omega, heads, d, h, {0, 0, 0}) == 1.0;
      const auto map = posenc::phase_probe(bank.omega, heads, d, h, posenc::ProbeGrid{});
      if (map.g.size() != 21 * 21) return {false, "probe grid has " + std::to_string(map.g.size()) + " points"};
      for (std::size_t i = 0; i < map.g.size(); ++i) {
        const auto& o = map.offsets[i];
        // Mean over pairs of <R(phi) e1, e1> with R an explicit 2x2 rotation.
        double acc = 0.0;
        for (std::size_t p = 0; p < pairs; ++p) {
          const double phi = static_cast<double>(o.t) * bank.at(0, h, p) +
                             static_cast<double>(o.k) * bank.at(1, h, p) +
                             static_cast<double>(o.u) * bank.at(2, h, p);
          const double r00 = std::cos(phi), r10 = std::sin(phi);
          acc += r00 * 1.0 + r10 * 0.0;
        }
        oracle_err = std::max(oracle_err, std::abs(map.g[i] - acc / static_cast<double>(pairs)));
        parity_err = std::max(parity_err,
                              std::abs(map.g[i] - posenc::probe_value(bank.omega, heads, d, h, {-o.t, -o.k, -o.u})));
      }
    }
  }
  return {oracle_err < 1e-8 && origin && parity_err < 1e-12,
          "oracle err " + fmt("%.3g", oracle_err) + ", parity err " + fmt("%.3g", parity_err) +
              (origin ? ", G(0)=1" : ", G(0)!=1")};
}

// 6, 7 ------------------------------------------------------------------------

model::ModelConfig replica_model(PeVariant v) {
  model::ModelConfig mc;
  mc.enc_depth = 1;
  mc.enc_dim = 64;
  mc.enc_heads = 4;
  mc.dec_depth = 1;
  mc.dec_dim = 64;
  mc.dec_heads = 4;
  mc.pe_variant = v;
  return mc;
}

model::TrainConfig replica_train(std::uint64_t seed) {
  model::TrainConfig tc;
  tc.epochs = 40;
  tc.warmup_epochs = 10;
  tc.batch_size = 8;
  tc.eval_every = 1000;
  tc.seed = seed;
  return tc;
}

constexpr std::size_t kPerConfig = 300;
constexpr std::uint64_t kEvalSeed = 7;

struct Corpus {
  std::vector<channel::CsiArray> train, val;
};

void add_config(Corpus& c, channel::ChannelConfig cfg) {
  const auto s = channel::generate(cfg, kPerConfig);
  const std::size_t ntr = kPerConfig * 8 / 10;
  c.train.insert(c.train.end(), s.begin(), s.begin() + ntr);
  c.val.insert(c.val.end(), s.begin() + ntr, s.end());
}

double mean_db(const std::vector<model::SuiteRow>& rows) {
  double acc = 0.0;
  for (const auto& r : rows) acc += r.nmse_db;
  return acc / static_cast<double>(rows.size());
}

model::TrainRun train_replica(PeVariant v, std::uint64_t seed, const Corpus& corpus) {
  model::TrainRun run(replica_model(v), replica_train(seed));
  model::train(run, corpus.train, {}, run.train_config.epochs);
  return run;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome extrapolation_replica() {
  const double speeds[] = {1.5, 4.0, 8.0, 15.0};
  const double spreads[] = {600e-9, 300e-9, 150e-9, 50e-9};
  Corpus corpus;
  std::vector<model::NamedSamples> extended;
  for (int i = 0; i < 4; ++i) {
    channel::ChannelConfig cfg;
    cfg.speed_mps = speeds[i];
    cfg.delay_spread_s = spreads[i];
    cfg.seed = 600 + i;
    add_config(corpus, cfg);
    auto big = cfg;
    big.T = 2 * cfg.T;
    big.seed = 650 + i;
    extended.push_back({"ext" + std::to_string(i), channel::generate(big, 50)});
  }
  const std::vector<model::NamedSamples> same{{"val", corpus.val}};
  const auto tasks = model::default_tasks();

  std::vector<double> same_db(5, 0.0), ext_db(5, 0.0);
  for (std::size_t vi = 0; vi < 5; ++vi) {
    const auto v = posenc::kAllVariants[vi];
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto run = train_replica(v, seed, corpus);
      const double s = mean_db(model::evaluate_suite(run.model, same, tasks, kEvalSeed));
      const double e = mean_db(model::evaluate_suite(run.model, extended, tasks, kEvalSeed));
      same_db[vi] += s / 3.0;
      ext_db[vi] += e / 3.0;
      std::printf("  [6] %-16s seed %llu  same %7.3f dB  extrapolated %7.3f dB  (%.0f s)\n",
                  std::string(posenc::variant_name(v)).c_str(), static_cast<unsigned long long>(seed), s, e,
                  elapsed(t0));
      std::fflush(stdout);
    }
  }
  for (std::size_t vi = 0; vi < 5; ++vi)
    std::printf("  [6] %-16s mean same %7.3f dB  mean extrapolated %7.3f dB\n",
                std::string(posenc::variant_name(posenc::kAllVariants[vi])).c_str(), same_db[vi], ext_db[vi]);

  // Index order follows kAllVariants: ape1d, ape3d, fixed, learnable, adaptive.
  const bool ordering = ext_db[4] <= ext_db[3] && ext_db[3] <= ext_db[2];
  const bool margin = ext_db[0] - ext_db[2] >= 1.0 && ext_db[0] - ext_db[3] >= 1.0 && ext_db[0] - ext_db[4] >= 1.0;
  const bool guard = same_db[4] - same_db[3] <= 0.2;
  std::string detail = std::string("ordering ") + (ordering ? "ok" : "violated") + ", rotary margin over ape1d " +
                       fmt("%.2f", std::min({ext_db[0] - ext_db[2], ext_db[0] - ext_db[3], ext_db[0] - ext_db[4]})) +
                       " dB, adaptive-learnable same-scale " + fmt("%+.2f", same_db[4] - same_db[3]) + " dB";
  return {ordering && margin && guard, detail};
}

Outcome mobility_replica() {
  Corpus low;
  const double speeds[] = {1.0, 3.0};
  const double spreads[] = {300e-9, 100e-9};
  for (int i = 0; i < 2; ++i) {
    channel::ChannelConfig cfg;
    cfg.speed_mps = speeds[i];
    cfg.delay_spread_s = spreads[i];
    cfg.seed = 700 + i;
    add_config(low, cfg);
  }
  channel::ChannelConfig high;
  high.speed_mps = 30.0;
  high.delay_spread_s = 300e-9;
  high.seed = 750;
  const std::vector<model::NamedSamples> val{{"low", low.val}};
  const std::vector<model::NamedSamples> test{{"high", channel::generate(high, kPerConfig / 2)}};
  const auto tasks = model::default_tasks();

  // Improvement = fixed NMSE - adaptive NMSE (dB); positive favours adaptive.
  double gain_low = 0.0, gain_high = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    double low_db[2], high_db[2];
    int slot = 0;
    for (auto v : {PeVariant::kRopeFixed, PeVariant::kRopeAdaptive}) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto run = train_replica(v, seed, low);
      low_db[slot] = mean_db(model::evaluate_suite(run.model, val, tasks, kEvalSeed));
      high_db[slot] = mean_db(model::evaluate_suite(run.model, test, tasks, kEvalSeed));
      std::printf("  [7] %-16s seed %llu  low-mobility val %7.3f dB  high-mobility test %7.3f dB  (%.0f s)\n",
                  std::string(posenc::variant_name(v)).c_str(), static_cast<unsigned long long>(seed),
                  low_db[slot], high_db[slot], elapsed(t0));
      std::fflush(stdout);
      ++slot;
    }
    gain_low += (low_db[0] - low_db[1]) / 3.0;
    gain_high += (high_db[0] - high_db[1]) / 3.0;
  }
  return {gain_high >= 0.0 && gain_high > gain_low,
          "adaptive gain over fixed: low-mobility " + fmt("%+.3f", gain_low) + " dB, high-mobility " +
              fmt("%+.3f", gain_high) + " dB"};
}

// 8 ---------------------------------------------------------------------------

bool trailing_crc_ok(const std::vector<std::uint8_t>& bytes, std::size_t from) {
  if (bytes.size() < from + 4) return false;
  const std::size_t end = bytes.size() - 4;
  const std::uint32_t stored = static_cast<std::uint32_t>(bytes[end]) | (static_cast<std::uint32_t>(bytes[end + 1]) << 8) |
                               (static_cast<std::uint32_t>(bytes[end + 2]) << 16) |
                               (static_cast<std::uint32_t>(bytes[end + 3]) << 24);
  return util::crc32(std::span(bytes).subspan(from, end - from)) == stored;
}

Outcome round_trips() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("csirope_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);

  channel::Dataset ds;
  ds.config.T = 8;
  ds.config.K = 12;
  ds.config.U = 4;
  ds.config.seed = 808;
  ds.split = channel::split_counts(20, std::vector<double>{0.75, 1.0 / 12, 1.0 / 6});
  ds.samples = channel::generate(ds.config, 20);
  const auto d1 = (dir / "a.csi3d").string(), d2 = (dir / "b.csi3d").string();
  channel::write_dataset(d1, ds);
  channel::write_dataset(d2, channel::read_dataset(d1));
  const auto da = util::read_binary_file(d1), db = util::read_binary_file(d2);
  // CSI3D1 CRC covers the float payload: the last N*T*K*U*8 bytes before it.
  const std::size_t payload = 20u * 8u * 12u * 4u * 8u;
  const bool ds_ok = da == db && da.size() > payload + 4 && trailing_crc_ok(da, da.size() - 4 - payload);

  model::TrainConfig tc;
  tc.epochs = 2;
  tc.warmup_epochs = 1;
  tc.batch_size = 4;
  model::TrainRun run(test::micro_config(PeVariant::kRopeAdaptive), tc);
  channel::ChannelConfig cc;
  cc.T = 8;
  cc.K = 6;
  cc.U = 2;
  model::train(run, channel::generate(cc, 8), {}, 2);
  const auto c1 = (dir / "a.ckpt").string(), c2 = (dir / "b.ckpt").string();
  model::write_checkpoint(c1, run);
  model::write_checkpoint(c2, model::read_checkpoint(c1));
  const auto ca = util::read_binary_file(c1), cb = util::read_binary_file(c2);
  const bool ck_ok = ca == cb && trailing_crc_ok(ca, model::kCheckpointMagic.size());

  fs::remove_all(dir);
  return {ds_ok && ck_ok, std::string("CSI3D1 ") + (ds_ok ? "identical, CRC ok" : "mismatch") + "; R3DCKPT1 " +
                              (ck_ok ? "identical, CRC ok" : "mismatch")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria = {
      {"relative invariance", relative_invariance},
      {"degeneracy chain", degeneracy},
      {"gradient suite", gradient_suite},
      {"physics oracle", physics},
      {"phase probe", probe},
      {"extrapolation replica", extrapolation_replica},
      {"mobility replica", mobility_replica},
      {"format round-trips", round_trips},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "usage: acceptance [criterion 1-8 ...]\n");
      return 2;
    }
    selected.insert(n);
  }
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(n)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::printf("criterion %d %s: %s (%s; %.1f s)\n", n, criteria[i].first, o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), elapsed(t0));
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
