// csirope: dataset generation, coherence analysis, training, evaluation,
// phase-probe export and run comparison.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "csirope/autodiff/ops.hpp"
#include "csirope/channel/dataset.hpp"
#include "csirope/coherence/acf.hpp"
#include "csirope/errors.hpp"
#include "csirope/model/train.hpp"
#include "csirope/posenc/posenc.hpp"
#include "csirope/util/kv.hpp"
#include "csirope/util/manifest.hpp"

namespace fs = std::filesystem;
using namespace csirope;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::size_t threads = 1;
  bool deterministic = true;
  bool force = false;
};

void apply_threads(const Common& c) { ad::set_kernel_threads(c.deterministic ? 1 : c.threads); }

util::Sections load_config(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("config file not found: " + path);
  auto sections = util::parse_sections(util::read_text_file(path));
  if (auto it = sections.find(""); it != sections.end() && it->second.count("format")) {
    if (it->second.at("format") != util::kConfigFormat) {
      throw ConfigError("format", "unsupported config format '" + it->second.at("format") + "'");
    }
  }
  return sections;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = util::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::string> resolve_inputs(const std::vector<std::string>& patterns) {
  std::vector<std::string> paths;
  for (const auto& p : patterns) {
    auto found = util::expand_glob(p);
    if (found.empty()) throw UsageError("no files match '" + p + "'");
    paths.insert(paths.end(), found.begin(), found.end());
  }
  return paths;
}

enum class Split { kTrain, kVal, kTest, kAll };

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  if (s == "all") return Split::kAll;
  throw ConfigError("split", "expected train, val, test or all, got '" + s + "'");
}

std::vector<channel::CsiArray> select_split(const channel::Dataset& ds, Split split) {
  if (split == Split::kAll) return ds.samples;
  const auto idx = ds.indices();
  return ds.subset(split == Split::kTrain ? idx.train : split == Split::kVal ? idx.val : idx.test);
}

std::string manifest_path_for(const std::string& output) { return output + ".manifest"; }

// --- gen ----------------------------------------------------------------------

int cmd_gen(const std::string& config_path, std::optional<std::string> out_dir,
            std::optional<std::uint64_t> seed, const Common& common) {
  auto cfg = load_config(config_path);
  const auto gen = cfg.count("gen") ? cfg.at("gen") : util::KeyValues{};
  std::size_t n = 0;
  if (gen.count("N")) {
    n = util::get_size(gen, "N");
  } else {
    n = util::get_size(gen, "n_samples");
  }
  if (n == 0) throw ConfigError("N", "must be >= 1");
  std::vector<double> ratios;
  for (const auto& r : split_list(util::get_string(gen, "split", "0.8,0.1,0.1"))) {
    try {
      ratios.push_back(std::stod(r));
    } catch (const std::exception&) {
      throw ConfigError("split", "cannot parse '" + r + "'");
    }
  }
  if (ratios.size() != 3) throw ConfigError("split", "expected three ratios (train,val,test)");
  if (std::any_of(ratios.begin(), ratios.end(), [](double r) { return !(r >= 0.0); }) ||
      std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-6) {
    throw ConfigError("split", "ratios must be non-negative and sum to 1");
  }
  const std::string dir = out_dir ? *out_dir : util::get_string(gen, "out_dir", "data");

  std::vector<channel::ChannelConfig> configs;
  for (const auto& [name, kv] : cfg) {
    if (name != "channel" && name.rfind("channel.", 0) != 0) continue;
    auto c = channel::ChannelConfig::from_map(kv);
    if (seed) c.seed = *seed + configs.size();
    c.validate();
    configs.push_back(c);
  }
  if (configs.empty()) throw ConfigError("channel", "at least one [channel] section is required");

  for (std::size_t i = 0; i < configs.size() && !common.force; ++i) {
    const auto path = fs::path(dir) / (std::to_string(i) + "_" + configs[i].scenario_tag + ".csi3d");
    if (fs::exists(path)) throw UsageError("refusing to overwrite " + path.string() + " (use --force)");
  }
  apply_threads(common);
  util::RunManifest manifest("gen", common.deterministic, common.threads);
  cfg["gen"]["N"] = std::to_string(n);
  cfg["gen"]["out_dir"] = dir;
  manifest.set_config(cfg);
  const auto paths = channel::make_dataset_suite(configs, n, ratios, dir, common.force);
  for (std::size_t i = 0; i < configs.size(); ++i) {
    manifest.add_seed("channel" + std::to_string(i), configs[i].seed);
    manifest.add_output(paths[i]);
    std::printf("%s  samples=%zu  T=%zu K=%zu U=%zu  crc32=%s\n", paths[i].c_str(), n, configs[i].T,
                configs[i].K, configs[i].U, util::file_crc32(paths[i]).c_str());
  }
  manifest.write((fs::path(dir) / "gen.manifest").string());
  return 0;
}

// --- acf ----------------------------------------------------------------------

int cmd_acf(const std::string& dataset, const std::string& axis_s, std::size_t max_lag,
            const std::string& out, double eta, const std::string& split_s, const Common& common) {
  if (!fs::exists(dataset)) throw UsageError("dataset not found: " + dataset);
  const auto axis = coherence::parse_axis(axis_s);
  const auto split = parse_split(split_s);
  apply_threads(common);
  const auto ds = channel::read_dataset(dataset);
  const auto samples = select_split(ds, split);
  if (samples.empty()) throw UsageError("the selected split is empty");
  const std::size_t extent = axis == coherence::Axis::kT   ? ds.config.T
                             : axis == coherence::Axis::kK ? ds.config.K
                                                           : ds.config.U;
  if (max_lag >= extent) {
    throw ConfigError("max_lag", "must be below the axis extent " + std::to_string(extent));
  }
  const auto profile = coherence::empirical_acf(samples, axis, max_lag);
  if (fs::exists(out) && !common.force) throw UsageError("refusing to overwrite " + out + " (use --force)");
  coherence::write_acf_csv(out, profile);

  auto profile_for = [&](coherence::Axis a, std::size_t extent) {
    return coherence::empirical_acf(samples, a, std::min(max_lag, extent - 1));
  };
  const auto ext = coherence::coherence_extents(profile_for(coherence::Axis::kT, ds.config.T),
                                                profile_for(coherence::Axis::kK, ds.config.K),
                                                profile_for(coherence::Axis::kU, ds.config.U), eta);
  auto show = [](const std::optional<std::size_t>& v) {
    return v ? std::to_string(*v) : std::string("beyond range");
  };
  std::printf("eta=%g  C_T=%s  C_K=%s  C_U=%s\n", eta, show(ext.c_t).c_str(), show(ext.c_k).c_str(),
              show(ext.c_u).c_str());

  util::RunManifest manifest("acf", common.deterministic, common.threads);
  manifest.set_config({{"acf",
                        {{"dataset", dataset},
                         {"axis", std::string(coherence::axis_name(axis))},
                         {"max_lag", std::to_string(max_lag)},
                         {"eta", util::format_double(eta)},
                         {"split", split_s},
                         {"out", out}}}});
  manifest.add_input(dataset);
  manifest.add_output(out);
  manifest.set("results", "c_t", show(ext.c_t));
  manifest.set("results", "c_k", show(ext.c_k));
  manifest.set("results", "c_u", show(ext.c_u));
  manifest.write(manifest_path_for(out));
  return 0;
}

// --- train --------------------------------------------------------------------

struct TrainFlags {
  std::string config;
  std::optional<std::string> pe, out_dir, resume;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

struct LoadedData {
  std::vector<std::string> paths;
  std::vector<channel::CsiArray> train, val;
};

LoadedData load_training_data(const util::KeyValues& data) {
  LoadedData d;
  d.paths = resolve_inputs(split_list(util::get_string(data, "datasets")));
  for (const auto& p : d.paths) {
    const auto ds = channel::read_dataset(p);
    const auto tr = select_split(ds, Split::kTrain);
    const auto va = select_split(ds, Split::kVal);
    d.train.insert(d.train.end(), tr.begin(), tr.end());
    d.val.insert(d.val.end(), va.begin(), va.end());
  }
  return d;
}

int cmd_train(const TrainFlags& flags, Common common) {
  auto cfg = load_config(flags.config);
  if (flags.pe) cfg["model"]["pe_variant"] = *flags.pe;
  if (flags.epochs) cfg["train"]["epochs"] = std::to_string(*flags.epochs);
  if (flags.seed) cfg["train"]["seed"] = std::to_string(*flags.seed);
  cfg["train"]["threads"] = std::to_string(common.threads);
  cfg["train"]["deterministic"] = common.deterministic ? "true" : "false";
  const std::string dir = flags.out_dir ? *flags.out_dir : util::get_string(cfg["output"], "dir", "run");
  cfg["output"]["dir"] = dir;
  const auto checkpoint_every = util::get_size(cfg["output"], "checkpoint_every", 0);

  const auto data = load_training_data(cfg["data"]);
  if (data.train.empty()) throw UsageError("the training split of the datasets is empty");

  std::optional<model::TrainRun> run;
  if (flags.resume) {
    if (!fs::exists(*flags.resume)) throw UsageError("checkpoint not found: " + *flags.resume);
    run.emplace(model::read_checkpoint(*flags.resume));
    // Only the epoch budget and execution settings may change on resume.
    auto tc = run->train_config;
    tc.epochs = util::get_size(cfg["train"], "epochs", tc.epochs);
    tc.threads = common.threads;
    tc.deterministic = common.deterministic;
    tc.validate();
    run->train_config = tc;
    cfg["model"] = run->model.config().to_kv();
    cfg["train"] = tc.to_kv();
  } else {
    run.emplace(model::ModelConfig::from_kv(cfg["model"]), model::TrainConfig::from_kv(cfg["train"]));
    cfg["model"] = run->model.config().to_kv();
    cfg["train"] = run->train_config.to_kv();
  }
  for (const auto& p : data.paths) run->provenance["datasets"][p] = util::file_crc32(p);

  fs::create_directories(dir);
  const auto ckpt_path = (fs::path(dir) / "checkpoint.r3d").string();
  const auto metrics_path = (fs::path(dir) / "metrics.csv").string();
  if (!flags.resume && !common.force && fs::exists(ckpt_path)) {
    throw UsageError("output directory " + dir + " already holds a run (use --force or --resume)");
  }
  apply_threads(common);

  std::ofstream metrics;
  if (flags.resume && fs::exists(metrics_path)) {
    metrics.open(metrics_path, std::ios::app);
  } else {
    metrics.open(metrics_path, std::ios::trunc);
    metrics << model::metrics_csv_header();
  }
  if (!metrics) throw std::runtime_error("cannot write " + metrics_path);

  util::RunManifest manifest("train", common.deterministic, common.threads);
  manifest.set_config(cfg);
  manifest.add_seed("train", run->train_config.seed);
  for (const auto& p : data.paths) manifest.add_input(p);
  if (flags.resume) manifest.set("manifest", "resumed_from", *flags.resume);
  manifest.set("manifest", "start_epoch", std::to_string(run->epoch + 1));

  const auto params = run->model.params().scalar_count();
  if (!flags.quiet) {
    std::printf("variant=%s params=%zu train=%zu val=%zu epochs=%zu..%zu\n",
                std::string(posenc::variant_name(run->model.config().pe_variant)).c_str(), params,
                data.train.size(), data.val.size(), run->epoch + 1, run->train_config.epochs);
  }
  model::train(*run, data.train, data.val, run->train_config.epochs,
               [&](const model::TrainRun& r, std::span<const model::EpochMetric> rows) {
                 metrics << model::metrics_csv_rows(rows);
                 metrics.flush();
                 if (checkpoint_every && r.epoch % checkpoint_every == 0) {
                   model::write_checkpoint(ckpt_path, r);
                 }
                 if (flags.quiet) return;
                 std::printf("epoch %zu", r.epoch);
                 for (const auto& m : rows)
                   std::printf("  %s/%s %.3f dB", m.task.c_str(), m.split.c_str(), m.nmse_db);
                 std::printf("\n");
                 std::fflush(stdout);
               });
  metrics.close();
  model::write_checkpoint(ckpt_path, *run);
  manifest.add_output(ckpt_path);
  manifest.add_output(metrics_path);
  manifest.set("manifest", "end_epoch", std::to_string(run->epoch));
  manifest.write((fs::path(dir) / "manifest.txt").string());
  return 0;
}

// --- eval ---------------------------------------------------------------------

struct EvalFlags {
  std::string checkpoint;
  std::vector<std::string> datasets;
  std::string task = "all";
  std::optional<double> ratio;
  std::string split = "test";
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_eval(const EvalFlags& flags, const Common& common) {
  if (!fs::exists(flags.checkpoint)) throw UsageError("checkpoint not found: " + flags.checkpoint);
  const auto paths = resolve_inputs(flags.datasets);
  const auto split = parse_split(flags.split);
  std::vector<model::TaskSpec> tasks;
  if (flags.task == "all") {
    tasks = model::default_tasks();
  } else {
    const auto kind = tokenizer::parse_mask_kind(flags.task);
    for (const auto& t : model::default_tasks())
      if (t.kind == kind) tasks.push_back(t);
  }
  if (flags.ratio) {
    if (!(*flags.ratio > 0.0 && *flags.ratio < 1.0)) throw ConfigError("ratio", "must lie in (0,1)");
    for (auto& t : tasks) t.ratio = *flags.ratio;
  }
  if (fs::exists(flags.out) && !common.force) {
    throw UsageError("refusing to overwrite " + flags.out + " (use --force)");
  }
  apply_threads(common);
  const auto run = model::read_checkpoint(flags.checkpoint);
  const std::uint64_t seed = flags.seed ? *flags.seed : run.train_config.seed;

  std::vector<model::NamedSamples> suite;
  model::NamedSamples pooled{"pooled", {}};
  for (const auto& p : paths) {
    auto s = select_split(channel::read_dataset(p), split);
    if (s.empty()) continue;
    pooled.samples.insert(pooled.samples.end(), s.begin(), s.end());
    suite.push_back({fs::path(p).filename().string(), std::move(s)});
  }
  if (suite.empty()) throw UsageError("the selected split is empty in every dataset");
  auto rows = model::evaluate_suite(run.model, suite, tasks, seed, common.threads);
  double mean_db = 0.0;
  for (const auto& r : rows) mean_db += r.nmse_db;
  mean_db /= static_cast<double>(rows.size());
  if (suite.size() > 1) {
    const auto extra = model::evaluate_suite(run.model, std::span(&pooled, 1), tasks, seed, common.threads);
    rows.insert(rows.end(), extra.begin(), extra.end());
  }
  util::write_text_file(flags.out, model::suite_csv(rows));
  for (const auto& r : rows)
    std::printf("%-28s %-10s n=%-5zu nmse=%8.3f dB\n", r.dataset.c_str(), r.task.c_str(), r.samples,
                r.nmse_db);

  util::RunManifest manifest("eval", common.deterministic, common.threads);
  util::Sections cfg;
  cfg["model"] = run.model.config().to_kv();
  cfg["eval"] = {{"checkpoint", flags.checkpoint}, {"task", flags.task},
                 {"split", flags.split}, {"out", flags.out}};
  if (flags.ratio) cfg["eval"]["ratio"] = util::format_double(*flags.ratio);
  manifest.set_config(cfg);
  manifest.add_seed("eval", seed);
  manifest.add_input(flags.checkpoint);
  for (const auto& p : paths) manifest.add_input(p);
  manifest.add_output(flags.out);
  manifest.set("results", "pe_variant", std::string(posenc::variant_name(run.model.config().pe_variant)));
  manifest.set("results", "mean_nmse_db", util::format_double(mean_db));
  manifest.set("results", "rows", std::to_string(rows.size()));
  manifest.write(manifest_path_for(flags.out));
  return 0;
}

// --- probe --------------------------------------------------------------------

struct ProbeFlags {
  std::optional<std::string> checkpoint, config, pe, dataset, bank_out;
  std::uint64_t seed = 1;
  std::size_t index = 0;
  std::string stage = "encoder";
  std::size_t head = 0;
  std::string dt = "-10:10:1", dk = "-10:10:1", du = "0:0:1";
  std::string out;
};

void parse_range(const std::string& s, const std::string& field, std::int64_t& lo, std::int64_t& hi,
                 std::int64_t& step) {
  std::vector<std::int64_t> v;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ':')) {
    try {
      v.push_back(std::stoll(part));
    } catch (const std::exception&) {
      throw ConfigError(field, "expected lo:hi[:step], got '" + s + "'");
    }
  }
  if (v.size() < 2 || v.size() > 3) throw ConfigError(field, "expected lo:hi[:step], got '" + s + "'");
  lo = v[0];
  hi = v[1];
  step = v.size() == 3 ? v[2] : 1;
  if (step <= 0 || hi < lo) throw ConfigError(field, "needs lo <= hi and a positive step");
}

int cmd_probe(const ProbeFlags& flags, const Common& common) {
  posenc::Stage stage;
  if (flags.stage == "encoder") {
    stage = posenc::Stage::kEncoder;
  } else if (flags.stage == "decoder") {
    stage = posenc::Stage::kDecoder;
  } else {
    throw ConfigError("stage", "expected encoder or decoder");
  }
  posenc::ProbeGrid grid;
  parse_range(flags.dt, "dt", grid.dt_min, grid.dt_max, grid.dt_step);
  parse_range(flags.dk, "dk", grid.dk_min, grid.dk_max, grid.dk_step);
  parse_range(flags.du, "du", grid.du_min, grid.du_max, grid.du_step);
  if (fs::exists(flags.out) && !common.force) {
    throw UsageError("refusing to overwrite " + flags.out + " (use --force)");
  }
  apply_threads(common);

  std::optional<model::TrainRun> run;
  util::Sections cfg;
  if (flags.checkpoint) {
    if (!fs::exists(*flags.checkpoint)) throw UsageError("checkpoint not found: " + *flags.checkpoint);
    run.emplace(model::read_checkpoint(*flags.checkpoint));
  } else {
    util::Sections base;
    if (flags.config) base = load_config(*flags.config);
    if (flags.pe) base["model"]["pe_variant"] = *flags.pe;
    model::TrainConfig tc;
    tc.seed = flags.seed;
    run.emplace(model::ModelConfig::from_kv(base["model"]), tc);
  }
  const auto& m = run->model;
  const auto& mc = m.config();
  if (!posenc::is_rotary(mc.pe_variant)) {
    throw ConfigError("pe_variant", "the phase probe needs a rotary variant");
  }
  const std::size_t heads = stage == posenc::Stage::kEncoder ? mc.enc_heads : mc.dec_heads;
  const std::size_t head_dim = stage == posenc::Stage::kEncoder ? mc.enc_head_dim() : mc.dec_head_dim();
  if (flags.head >= heads) throw ConfigError("head", "must be < " + std::to_string(heads));

  std::vector<double> omega;
  std::string source = "bank";
  if (flags.dataset) {
    if (!fs::exists(*flags.dataset)) throw UsageError("dataset not found: " + *flags.dataset);
    const auto ds = channel::read_dataset(*flags.dataset);
    if (flags.index >= ds.samples.size()) throw ConfigError("index", "out of range");
    const auto& sample = ds.samples[flags.index];
    const auto tokens = tokenizer::tokenize(sample, mc.patch);
    const auto mask = model::eval_mask(tokens, model::default_tasks()[0], run->train_config.seed,
                                       model::sample_key(sample));
    omega = m.stage_frequencies(tokens, mask, stage);
    source = "sample " + std::to_string(flags.index) + " of " + *flags.dataset;
  } else if (mc.pe_variant == posenc::PeVariant::kRopeFixed) {
    omega = m.fixed_bank(stage).omega;
  } else {
    omega = m.params().at(stage == posenc::Stage::kEncoder ? "enc.bank" : "dec.bank").value;
  }
  const auto map = posenc::phase_probe(omega, heads, head_dim, flags.head, grid);
  util::write_text_file(flags.out, posenc::probe_csv(map));
  if (flags.bank_out) util::write_text_file(*flags.bank_out, posenc::bank_csv(omega, heads, head_dim));
  std::printf("probe %s head %zu (%s): %zu cells -> %s\n", flags.stage.c_str(), flags.head,
              source.c_str(), map.g.size(), flags.out.c_str());

  util::RunManifest manifest("probe", common.deterministic, common.threads);
  cfg["model"] = mc.to_kv();
  cfg["probe"] = {{"stage", flags.stage}, {"head", std::to_string(flags.head)}, {"dt", flags.dt},
                  {"dk", flags.dk},       {"du", flags.du},                     {"source", source},
                  {"out", flags.out}};
  if (flags.checkpoint) cfg["probe"]["checkpoint"] = *flags.checkpoint;
  manifest.set_config(cfg);
  manifest.add_seed("model", run->train_config.seed);
  if (flags.checkpoint) manifest.add_input(*flags.checkpoint);
  if (flags.dataset) manifest.add_input(*flags.dataset);
  manifest.add_output(flags.out);
  if (flags.bank_out) manifest.add_output(*flags.bank_out);
  manifest.write(manifest_path_for(flags.out));
  return 0;
}

// --- compare ------------------------------------------------------------------

int cmd_compare(const std::vector<std::string>& patterns, const std::optional<std::string>& reference,
                const std::string& out, const Common& common) {
  const auto paths = resolve_inputs(patterns);
  struct Acc {
    std::size_t runs = 0;
    double sum = 0.0;
  };
  std::map<std::string, Acc> by_variant;
  std::vector<std::string> order;
  for (const auto& p : paths) {
    const auto s = util::parse_sections(util::read_text_file(p));
    auto it = s.find("results");
    if (it == s.end() || !it->second.count("pe_variant") || !it->second.count("mean_nmse_db")) {
      throw UsageError(p + " is not an eval manifest (no [results] pe_variant/mean_nmse_db)");
    }
    const auto variant = it->second.at("pe_variant");
    if (!by_variant.count(variant)) order.push_back(variant);
    auto& a = by_variant[variant];
    ++a.runs;
    a.sum += util::get_double(it->second, "mean_nmse_db");
  }
  std::string ref = reference ? *reference : (by_variant.count("ape1d") ? "ape1d" : order.front());
  if (!by_variant.count(ref)) throw UsageError("reference variant '" + ref + "' has no runs");
  const double ref_db = by_variant[ref].sum / static_cast<double>(by_variant[ref].runs);
  std::string csv = "variant,runs,mean_nmse_db,delta_db\n";
  std::printf("%-18s %5s %12s %10s\n", "variant", "runs", "nmse_db", "delta_db");
  for (const auto& v : order) {
    const auto& a = by_variant[v];
    const double mean = a.sum / static_cast<double>(a.runs);
    csv += v + "," + std::to_string(a.runs) + "," + util::format_double(mean) + "," +
           util::format_double(mean - ref_db) + "\n";
    std::printf("%-18s %5zu %12.3f %10.3f\n", v.c_str(), a.runs, mean, mean - ref_db);
  }
  if (fs::exists(out) && !common.force) throw UsageError("refusing to overwrite " + out + " (use --force)");
  util::write_text_file(out, csv);
  util::RunManifest manifest("compare", common.deterministic, common.threads);
  manifest.set_config({{"compare", {{"reference", ref}, {"out", out}}}});
  for (const auto& p : paths) manifest.add_input(p);
  manifest.add_output(out);
  manifest.write(manifest_path_for(out));
  return 0;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  sub->add_flag("--deterministic,!--no-deterministic", c.deterministic,
                "bit-reproducible execution (default on)");
  sub->add_flag("--force", c.force, "overwrite existing outputs");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D rotary positional encodings for CSI transformers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", util::kToolVersion);
  Common common;

  auto* gen = app.add_subcommand("gen", "generate synthetic CSI datasets");
  std::string gen_config;
  std::optional<std::string> gen_out;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("config", gen_config, "config file")->required();
  gen->add_option("--out-dir", gen_out, "output directory");
  gen->add_option("--seed", gen_seed, "master seed (channel i gets seed + i)");
  add_common(gen, common);

  auto* acf = app.add_subcommand("acf", "empirical autocorrelation along one axis");
  std::string acf_dataset, acf_axis = "t", acf_out, acf_split = "all";
  std::size_t acf_lag = 10;
  double acf_eta = 0.5;
  acf->add_option("dataset", acf_dataset, "CSI3D1 file")->required();
  acf->add_option("--axis", acf_axis, "t, k or u");
  acf->add_option("--max-lag", acf_lag, "largest lag");
  acf->add_option("--out", acf_out, "CSV output")->required();
  acf->add_option("--eta", acf_eta, "coherence threshold");
  acf->add_option("--split", acf_split, "train, val, test or all");
  add_common(acf, common);

  auto* tr = app.add_subcommand("train", "train a masked encoder-decoder");
  TrainFlags tf;
  tr->add_option("config", tf.config, "config file")->required();
  tr->add_option("--pe", tf.pe, "ape1d, ape3d, rope3d_fixed, rope3d_learnable, rope3d_adaptive");
  tr->add_option("--epochs", tf.epochs, "epoch budget");
  tr->add_option("--seed", tf.seed, "training seed");
  tr->add_option("--out-dir", tf.out_dir, "run directory");
  tr->add_option("--resume", tf.resume, "checkpoint to continue from");
  tr->add_flag("--quiet", tf.quiet, "no per-epoch output");
  add_common(tr, common);

  auto* ev = app.add_subcommand("eval", "score a checkpoint on datasets");
  EvalFlags ef;
  ev->add_option("checkpoint", ef.checkpoint, "R3DCKPT1 file")->required();
  ev->add_option("datasets", ef.datasets, "dataset files or globs")->required();
  ev->add_option("--task", ef.task, "random, temporal, frequency or all");
  ev->add_option("--ratio", ef.ratio, "mask ratio override");
  ev->add_option("--split", ef.split, "train, val, test or all");
  ev->add_option("--out", ef.out, "results CSV")->required();
  ev->add_option("--seed", ef.seed, "evaluation mask seed (default: training seed)");
  add_common(ev, common);

  auto* pr = app.add_subcommand("probe", "export a phase-probe map");
  ProbeFlags pf;
  pr->add_option("--checkpoint", pf.checkpoint, "trained checkpoint (default: fresh model)");
  pr->add_option("--config", pf.config, "config with a [model] section for a fresh model");
  pr->add_option("--pe", pf.pe, "variant for a fresh model");
  pr->add_option("--seed", pf.seed, "seed for a fresh model");
  pr->add_option("--dataset", pf.dataset, "use the adapted frequencies of one sample");
  pr->add_option("--index", pf.index, "sample index in --dataset");
  pr->add_option("--stage", pf.stage, "encoder or decoder");
  pr->add_option("--head", pf.head, "head index");
  pr->add_option("--dt", pf.dt, "lo:hi[:step]");
  pr->add_option("--dk", pf.dk, "lo:hi[:step]");
  pr->add_option("--du", pf.du, "lo:hi[:step]");
  pr->add_option("--out", pf.out, "probe CSV")->required();
  pr->add_option("--bank-out", pf.bank_out, "frequency CSV");
  add_common(pr, common);

  auto* cmp = app.add_subcommand("compare", "summarize eval manifests per variant");
  std::vector<std::string> cmp_inputs;
  std::optional<std::string> cmp_ref;
  std::string cmp_out = "compare.csv";
  cmp->add_option("manifests", cmp_inputs, "eval manifest files or globs")->required();
  cmp->add_option("--reference", cmp_ref, "variant the deltas are taken against");
  cmp->add_option("--out", cmp_out, "summary CSV");
  add_common(cmp, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) return cmd_gen(gen_config, gen_out, gen_seed, common);
    if (*acf) return cmd_acf(acf_dataset, acf_axis, acf_lag, acf_out, acf_eta, acf_split, common);
    if (*tr) return cmd_train(tf, common);
    if (*ev) return cmd_eval(ef, common);
    if (*pr) return cmd_probe(pf, common);
    if (*cmp) return cmd_compare(cmp_inputs, cmp_ref, cmp_out, common);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const model::TrainingDiverged& e) {
    std::fprintf(stderr, "training diverged: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
