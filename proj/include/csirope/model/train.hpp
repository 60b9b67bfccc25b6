#pragma once

// Masked-token training, NMSE evaluation and R3DCKPT1 checkpoints.
//
// Checkpoint layout (little-endian):
//
//   "R3DCKPT1"
//   u32 version (=1)
//   u32 manifest length, manifest text ([model], [train], [run], ... sections)
//   u64 blob count, then per blob:
//     u32 name length, name, u32 rank, u64 dims[rank], f64 values
//   u32 CRC32 of every byte after the magic
//
// Blobs are the model parameters in declaration order followed by the AdamW
// moments "adam.m/<name>" and "adam.v/<name>".

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "csirope/channel/channel.hpp"
#include "csirope/model/metrics.hpp"
#include "csirope/model/model.hpp"
#include "csirope/model/optim.hpp"
#include "csirope/util/kv.hpp"

namespace csirope::model {

struct TaskSpec {
  tokenizer::MaskKind kind = tokenizer::MaskKind::kRandom;
  double ratio = 0.85;
};

/// Reconstruction 0.85, temporal prediction 0.5, frequency prediction 0.5.
std::vector<TaskSpec> default_tasks();

struct TrainConfig {
  std::size_t epochs = 150;
  double lr = 8e-4;
  double beta1 = 0.9, beta2 = 0.95;
  double weight_decay = 0.05;
  std::size_t warmup_epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  LrSchedule schedule = LrSchedule::kConstant;
  bool full_loss = false;
  std::size_t eval_every = 1;
  std::size_t threads = 1;
  bool deterministic = true;
  std::vector<TaskSpec> tasks = default_tasks();

  void validate() const;
  util::KeyValues to_kv() const;
  static TrainConfig from_kv(const util::KeyValues& kv);
};

struct EpochMetric {
  std::size_t epoch = 0;
  std::string task;
  std::string split;
  double nmse_db = 0.0;
  double loss = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_rows(std::span<const EpochMetric> rows);

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainRun {
  TrainRun(const ModelConfig& model_config, const TrainConfig& train_config);

  TrainConfig train_config;
  MaskedAutoencoder model;
  AdamW optimizer;
  std::size_t epoch = 0;  // last completed epoch
  std::vector<EpochMetric> metrics;
  // Extra manifest sections carried through checkpoints (dataset hashes...).
  util::Sections provenance;

  util::Sections manifest() const;
};

using EpochCallback = std::function<void(const TrainRun&, std::span<const EpochMetric>)>;

/// Runs epochs run.epoch+1 .. until_epoch. Batches cycle through the tasks;
/// per-sample gradients are summed in sample order, so results do not depend
/// on the thread count. Throws TrainingDiverged on a non-finite loss.
void train(TrainRun& run, std::span<const channel::CsiArray> train_set,
           std::span<const channel::CsiArray> val_set, std::size_t until_epoch,
           const EpochCallback& on_epoch = {});

struct TaskScore {
  std::string task;
  double nmse_linear = 0.0;  // mean of per-sample NMSE
  double nmse_db = 0.0;
  double loss = 0.0;  // mean masked MSE
  std::size_t samples = 0;
};

/// Identity of a sample independent of its position in any list: derived
/// from its dataset seed and sample index.
std::uint64_t sample_key(const channel::CsiArray& sample);

/// Evaluation mask of a sample under `seed`; the same sample always gets the
/// same mask, whichever set it is scored in.
tokenizer::MaskSpec eval_mask(const tokenizer::TokenGrid& grid, const TaskSpec& task,
                              std::uint64_t seed, std::uint64_t key);

TaskScore evaluate(const MaskedAutoencoder& model, std::span<const channel::CsiArray> samples,
                   const TaskSpec& task, std::uint64_t seed, std::size_t threads = 1);

struct NamedSamples {
  std::string name;
  std::vector<channel::CsiArray> samples;
};

struct SuiteRow {
  std::string dataset;
  std::string task;
  std::size_t samples = 0;
  double nmse_linear = 0.0;
  double nmse_db = 0.0;
  double loss = 0.0;
};

/// Per-dataset, per-task scores. Extents may exceed the training extents:
/// rotary coordinates and sinusoidal tables both extend to any position.
std::vector<SuiteRow> evaluate_suite(const MaskedAutoencoder& model,
                                     std::span<const NamedSamples> suite,
                                     std::span<const TaskSpec> tasks, std::uint64_t seed,
                                     std::size_t threads = 1);

std::string suite_csv(std::span<const SuiteRow> rows);

/// One forward pass; returns the gradient of the task loss for every
/// parameter (same order as the store) and the loss value.
double loss_and_grads(const MaskedAutoencoder& model, const channel::CsiArray& sample,
                      const tokenizer::MaskSpec& mask, bool full_loss,
                      std::vector<std::vector<double>>* grads);

// --- checkpoints -------------------------------------------------------------

inline constexpr std::string_view kCheckpointMagic = "R3DCKPT1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const TrainRun& run);
TrainRun decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const std::string& path, const TrainRun& run, bool force = true);
TrainRun read_checkpoint(const std::string& path);

}  // namespace csirope::model
