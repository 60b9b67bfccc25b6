#include "csirope/model/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "csirope/errors.hpp"
#include "csirope/util/binary_io.hpp"
#include "csirope/util/parallel.hpp"
#include "csirope/util/rng.hpp"

namespace csirope::model {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
constexpr std::uint64_t kTrainMaskStream = 0x4d41534bULL;
constexpr std::uint64_t kEvalMaskStream = 0x4556414cULL;

std::string tasks_to_string(const std::vector<TaskSpec>& tasks) {
  std::string s;
  for (const auto& t : tasks) {
    if (!s.empty()) s += ',';
    s += std::string(tokenizer::mask_kind_name(t.kind)) + ":" + util::format_double(t.ratio);
  }
  return s;
}

std::vector<TaskSpec> tasks_from_string(const std::string& s) {
  std::vector<TaskSpec> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = util::trim(item);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("tasks", "expected kind:ratio, got '" + item + "'");
    TaskSpec t;
    t.kind = tokenizer::parse_mask_kind(util::trim(item.substr(0, colon)));
    try {
      t.ratio = std::stod(item.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("tasks", "bad ratio in '" + item + "'");
    }
    out.push_back(t);
  }
  return out;
}

}  // namespace

std::vector<TaskSpec> default_tasks() {
  return {{tokenizer::MaskKind::kRandom, 0.85},
          {tokenizer::MaskKind::kTemporal, 0.5},
          {tokenizer::MaskKind::kFrequency, 0.5}};
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs", "must be >= 1");
  if (warmup_epochs > epochs) throw ConfigError("warmup_epochs", "must not exceed epochs");
  if (!(lr > 0.0)) throw ConfigError("lr", "must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1", "must lie in [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2", "must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay", "must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (eval_every < 1) throw ConfigError("eval_every", "must be >= 1");
  if (tasks.empty()) throw ConfigError("tasks", "at least one task is required");
  for (const auto& t : tasks)
    if (!(t.ratio > 0.0 && t.ratio < 1.0)) throw ConfigError("tasks", "ratios must lie in (0,1)");
}

util::KeyValues TrainConfig::to_kv() const {
  return {{"epochs", std::to_string(epochs)},
          {"lr", util::format_double(lr)},
          {"beta1", util::format_double(beta1)},
          {"beta2", util::format_double(beta2)},
          {"weight_decay", util::format_double(weight_decay)},
          {"warmup_epochs", std::to_string(warmup_epochs)},
          {"batch_size", std::to_string(batch_size)},
          {"seed", std::to_string(seed)},
          {"schedule", schedule == LrSchedule::kCosine ? "cosine" : "constant"},
          {"full_loss", full_loss ? "true" : "false"},
          {"eval_every", std::to_string(eval_every)},
          {"threads", std::to_string(threads)},
          {"deterministic", deterministic ? "true" : "false"},
          {"tasks", tasks_to_string(tasks)}};
}

TrainConfig TrainConfig::from_kv(const util::KeyValues& kv) {
  TrainConfig c;
  c.epochs = util::get_size(kv, "epochs", c.epochs);
  c.lr = util::get_double(kv, "lr", c.lr);
  c.beta1 = util::get_double(kv, "beta1", c.beta1);
  c.beta2 = util::get_double(kv, "beta2", c.beta2);
  c.weight_decay = util::get_double(kv, "weight_decay", c.weight_decay);
  c.warmup_epochs = util::get_size(kv, "warmup_epochs", c.warmup_epochs);
  c.batch_size = util::get_size(kv, "batch_size", c.batch_size);
  c.seed = util::get_u64(kv, "seed", c.seed);
  const auto sched = util::get_string(kv, "schedule", "constant");
  if (sched == "cosine") {
    c.schedule = LrSchedule::kCosine;
  } else if (sched != "constant") {
    throw ConfigError("schedule", "expected constant or cosine, got '" + sched + "'");
  }
  c.full_loss = util::get_bool(kv, "full_loss", c.full_loss);
  c.eval_every = util::get_size(kv, "eval_every", c.eval_every);
  c.threads = util::get_size(kv, "threads", c.threads);
  c.deterministic = util::get_bool(kv, "deterministic", c.deterministic);
  if (kv.count("tasks")) c.tasks = tasks_from_string(kv.at("tasks"));
  c.validate();
  return c;
}

std::string metrics_csv_header() { return "epoch,task,split,nmse_db,loss\n"; }

std::string metrics_csv_rows(std::span<const EpochMetric> rows) {
  std::string out;
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + "," + r.task + "," + r.split + "," +
           util::format_double(r.nmse_db) + "," + util::format_double(r.loss) + "\n";
  }
  return out;
}

TrainRun::TrainRun(const ModelConfig& model_config, const TrainConfig& tc)
    : train_config(tc), model(model_config, tc.seed) {
  train_config.validate();
  optimizer = AdamW(model.params(), {tc.beta1, tc.beta2, 1e-8, tc.weight_decay});
}

util::Sections TrainRun::manifest() const {
  util::Sections s = provenance;
  s["model"] = model.config().to_kv();
  s["train"] = train_config.to_kv();
  s["run"] = {{"epoch", std::to_string(epoch)},
              {"optimizer_steps", std::to_string(optimizer.steps())},
              {"parameters", std::to_string(model.params().scalar_count())}};
  return s;
}

double loss_and_grads(const MaskedAutoencoder& model, const channel::CsiArray& sample,
                      const tokenizer::MaskSpec& mask, bool full_loss,
                      std::vector<std::vector<double>>* grads) {
  const auto grid = tokenizer::tokenize(sample, model.config().patch);
  const auto binding = model.bind(grads != nullptr);
  auto loss = masked_mse(model.forward(grid, mask, binding), grid, mask, full_loss);
  if (grads) {
    loss.backward();
    grads->resize(binding.leaves.size());
    for (std::size_t i = 0; i < binding.leaves.size(); ++i) {
      const auto g = binding.leaves[i].grad();
      (*grads)[i].assign(g.begin(), g.end());
    }
  }
  return loss.item();
}

std::uint64_t sample_key(const channel::CsiArray& sample) {
  return derive_seed(sample.config.seed, sample.sample_index);
}

tokenizer::MaskSpec eval_mask(const tokenizer::TokenGrid& grid, const TaskSpec& task,
                              std::uint64_t seed, std::uint64_t key) {
  return tokenizer::build_mask(grid, task.kind, task.ratio,
                               derive_seed(derive_seed(seed, kEvalMaskStream), key));
}

namespace {

struct SampleResult {
  double loss = 0.0;
  double nmse = 0.0;
};

// NMSE of one prediction on the task region; the loss is filled by the caller.
SampleResult score_sample(const channel::CsiArray& sample, const tokenizer::MaskSpec& mask,
                          const tokenizer::TokenGrid& grid, const ad::Tensor& pred) {
  SampleResult r;
  auto arr = tokenizer::detokenize({pred.data().begin(), pred.data().end()}, grid);
  r.nmse = nmse(arr, sample, task_region(grid, mask)).linear;
  return r;
}

}  // namespace

TaskScore evaluate(const MaskedAutoencoder& model, std::span<const channel::CsiArray> samples,
                   const TaskSpec& task, std::uint64_t seed, std::size_t threads) {
  TaskScore score;
  score.task = std::string(tokenizer::mask_kind_name(task.kind));
  score.samples = samples.size();
  if (samples.empty()) return score;
  std::vector<SampleResult> results(samples.size());
  util::parallel_for(samples.size(), threads, [&](std::size_t i) {
    const auto grid = tokenizer::tokenize(samples[i], model.config().patch);
    const auto mask = eval_mask(grid, task, seed, sample_key(samples[i]));
    const auto pred = model.forward(grid, mask, model.bind(false));
    auto r = score_sample(samples[i], mask, grid, pred);
    r.loss = masked_mse(pred, grid, mask).item();
    results[i] = r;
  });
  for (const auto& r : results) {
    score.loss += r.loss;
    score.nmse_linear += r.nmse;
  }
  score.loss /= static_cast<double>(samples.size());
  score.nmse_linear /= static_cast<double>(samples.size());
  score.nmse_db = to_db(score.nmse_linear);
  return score;
}

std::vector<SuiteRow> evaluate_suite(const MaskedAutoencoder& model,
                                     std::span<const NamedSamples> suite,
                                     std::span<const TaskSpec> tasks, std::uint64_t seed,
                                     std::size_t threads) {
  std::vector<SuiteRow> rows;
  for (const auto& ds : suite) {
    for (const auto& task : tasks) {
      const auto s = evaluate(model, ds.samples, task, seed, threads);
      rows.push_back({ds.name, s.task, s.samples, s.nmse_linear, s.nmse_db, s.loss});
    }
  }
  return rows;
}

std::string suite_csv(std::span<const SuiteRow> rows) {
  std::string out = "dataset,task,samples,nmse_linear,nmse_db,loss\n";
  for (const auto& r : rows) {
    out += r.dataset + "," + r.task + "," + std::to_string(r.samples) + "," +
           util::format_double(r.nmse_linear) + "," + util::format_double(r.nmse_db) + "," +
           util::format_double(r.loss) + "\n";
  }
  return out;
}

void train(TrainRun& run, std::span<const channel::CsiArray> train_set,
           std::span<const channel::CsiArray> val_set, std::size_t until_epoch,
           const EpochCallback& on_epoch) {
  const auto& tc = run.train_config;
  if (train_set.empty()) throw ContractError("train: empty training set");
  auto& model = run.model;
  const std::size_t n_params = model.params().size();
  const std::size_t n_tasks = tc.tasks.size();
  if (model.config().pe_variant == posenc::PeVariant::kRopeAdaptive) {
    const auto grid = tokenizer::tokenize(train_set[0], model.config().patch);
    for (const auto& task : tc.tasks) {
      const auto mask = tokenizer::build_mask(grid, task.kind, task.ratio, 0);
      if (mask.visible_ids.size() < 2) {
        throw ConfigError("tasks", std::string(tokenizer::mask_kind_name(task.kind)) +
                                       " masking leaves fewer than two visible tokens, which the "
                                       "adaptive controller context needs");
      }
    }
  }

  for (std::size_t epoch = run.epoch + 1; epoch <= until_epoch; ++epoch) {
    const double lr = learning_rate(epoch, tc.lr, tc.warmup_epochs, tc.epochs, tc.schedule);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(derive_seed(derive_seed(tc.seed, kShuffleStream), epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.index(i)]);
    const std::uint64_t mask_seed = derive_seed(derive_seed(tc.seed, kTrainMaskStream), epoch);

    std::vector<double> task_loss(n_tasks, 0.0), task_nmse(n_tasks, 0.0);
    std::vector<std::size_t> task_count(n_tasks, 0);
    const std::size_t n_batches = (order.size() + tc.batch_size - 1) / tc.batch_size;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::size_t lo = b * tc.batch_size, hi = std::min(order.size(), lo + tc.batch_size);
      const std::size_t task_id = b % n_tasks;
      const auto& task = tc.tasks[task_id];
      std::vector<std::vector<std::vector<double>>> grads(hi - lo);
      std::vector<SampleResult> results(hi - lo);
      util::parallel_for(hi - lo, tc.threads, [&](std::size_t j) {
        const std::size_t pos = lo + j;
        const auto& sample = train_set[order[pos]];
        const auto grid = tokenizer::tokenize(sample, model.config().patch);
        const auto mask = tokenizer::build_mask(grid, task.kind, task.ratio,
                                                derive_seed(mask_seed, pos));
        const auto binding = model.bind(true);
        const auto pred = model.forward(grid, mask, binding);
        auto loss = masked_mse(pred, grid, mask, tc.full_loss);
        loss.backward();
        auto& g = grads[j];
        g.resize(n_params);
        for (std::size_t i = 0; i < n_params; ++i) {
          const auto gi = binding.leaves[i].grad();
          g[i].assign(gi.begin(), gi.end());
        }
        results[j] = score_sample(sample, mask, grid, pred);
        results[j].loss = loss.item();
      });

      std::vector<std::vector<double>> total(n_params);
      const double inv = 1.0 / static_cast<double>(hi - lo);
      for (std::size_t j = 0; j < hi - lo; ++j) {
        if (!std::isfinite(results[j].loss)) {
          throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(b));
        }
        task_loss[task_id] += results[j].loss;
        task_nmse[task_id] += results[j].nmse;
        ++task_count[task_id];
        for (std::size_t i = 0; i < n_params; ++i) {
          const auto& gi = grads[j][i];
          if (gi.empty()) continue;
          auto& acc = total[i];
          if (acc.empty()) acc.assign(gi.size(), 0.0);
          for (std::size_t e = 0; e < gi.size(); ++e) acc[e] += gi[e] * inv;
        }
      }
      run.optimizer.step(model.params(), total, lr);
    }

    std::vector<EpochMetric> rows;
    for (std::size_t t = 0; t < n_tasks; ++t) {
      if (task_count[t] == 0) continue;
      const double c = static_cast<double>(task_count[t]);
      rows.push_back({epoch, std::string(tokenizer::mask_kind_name(tc.tasks[t].kind)), "train",
                      to_db(task_nmse[t] / c), task_loss[t] / c});
    }
    if (!val_set.empty() && (epoch % tc.eval_every == 0 || epoch == until_epoch)) {
      for (const auto& task : tc.tasks) {
        const auto s = evaluate(model, val_set, task, tc.seed, tc.threads);
        rows.push_back({epoch, s.task, "val", s.nmse_db, s.loss});
      }
    }
    run.epoch = epoch;
    run.metrics.insert(run.metrics.end(), rows.begin(), rows.end());
    if (on_epoch) on_epoch(run, rows);
  }
}

// --- checkpoints -------------------------------------------------------------

namespace {

void put_blob(util::ByteWriter& w, const std::string& name, const ad::Shape& shape,
              const std::vector<double>& values) {
  w.prefixed(name);
  w.u32(static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) w.u64(d);
  for (double v : values) w.f64(v);
}

struct Blob {
  std::string name;
  ad::Shape shape;
  std::vector<double> values;
};

Blob get_blob(util::ByteReader& r) {
  Blob b;
  b.name = r.prefixed();
  const auto rank = r.u32();
  if (rank > 8) throw FormatError("checkpoint blob '" + b.name + "' has implausible rank");
  for (std::uint32_t i = 0; i < rank; ++i) b.shape.push_back(r.u64());
  const auto n = ad::numel(b.shape);
  if (n > r.remaining() / 8) throw FormatError("checkpoint blob '" + b.name + "' is truncated");
  b.values.resize(n);
  for (auto& v : b.values) v = r.f64();
  return b;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const TrainRun& run) {
  util::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.prefixed(util::format_sections(run.manifest()));
  const auto& params = run.model.params();
  w.u64(3 * params.size());
  for (const auto& p : params) put_blob(w, p.name, p.shape, p.value);
  const auto& m = run.optimizer.first_moment();
  const auto& v = run.optimizer.second_moment();
  for (std::size_t i = 0; i < params.size(); ++i)
    put_blob(w, "adam.m/" + params[i].name, params[i].shape, m[i]);
  for (std::size_t i = 0; i < params.size(); ++i)
    put_blob(w, "adam.v/" + params[i].name, params[i].shape, v[i]);
  const auto& buf = w.buffer();
  const auto crc = util::crc32(std::span(buf).subspan(kCheckpointMagic.size()));
  w.u32(crc);
  return std::move(w.buffer());
}

TrainRun decode_checkpoint(std::span<const std::uint8_t> bytes) {
  util::ByteReader r(bytes);
  if (r.bytes(kCheckpointMagic.size()) != kCheckpointMagic) throw FormatError("not an R3DCKPT1 checkpoint");
  if (bytes.size() < kCheckpointMagic.size() + 4) throw FormatError("checkpoint is truncated");
  const auto body = bytes.subspan(kCheckpointMagic.size(), bytes.size() - kCheckpointMagic.size() - 4);
  util::ByteReader footer(bytes.subspan(bytes.size() - 4));
  if (util::crc32(body) != footer.u32()) throw FormatError("checkpoint CRC32 mismatch");

  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  auto sections = util::parse_sections(r.prefixed());
  if (!sections.count("model") || !sections.count("train") || !sections.count("run")) {
    throw FormatError("checkpoint manifest lacks model/train/run sections");
  }
  TrainRun run(ModelConfig::from_kv(sections["model"]), TrainConfig::from_kv(sections["train"]));
  run.epoch = util::get_size(sections["run"], "epoch");
  run.optimizer.set_steps(util::get_size(sections["run"], "optimizer_steps"));
  for (auto& [name, kv] : sections)
    if (name != "model" && name != "train" && name != "run") run.provenance[name] = kv;

  auto& params = run.model.params();
  const auto count = r.u64();
  if (count != 3 * params.size()) throw FormatError("checkpoint parameter count does not match the model");
  auto load = [&](const std::string& prefix, auto target) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto b = get_blob(r);
      if (b.name != prefix + params[i].name || b.shape != params[i].shape) {
        throw FormatError("checkpoint blob '" + b.name + "' does not match parameter '" +
                          prefix + params[i].name + "' " + ad::shape_str(params[i].shape));
      }
      target(i) = std::move(b.values);
    }
  };
  load("", [&](std::size_t i) -> std::vector<double>& { return params[i].value; });
  load("adam.m/", [&](std::size_t i) -> std::vector<double>& { return run.optimizer.first_moment()[i]; });
  load("adam.v/", [&](std::size_t i) -> std::vector<double>& { return run.optimizer.second_moment()[i]; });
  if (r.remaining() != 4) throw FormatError("trailing bytes after checkpoint blobs");
  return run;
}

void write_checkpoint(const std::string& path, const TrainRun& run, bool force) {
  util::write_binary_file(path, encode_checkpoint(run), force);
}

TrainRun read_checkpoint(const std::string& path) {
  return decode_checkpoint(util::read_binary_file(path));
}

}  // namespace csirope::model
