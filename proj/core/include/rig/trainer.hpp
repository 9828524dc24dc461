#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rig/data.hpp"
#include "rig/metrics.hpp"
#include "rig/model.hpp"

namespace rig::trainer {

struct TrainConfig {
  double lr0 = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-6;
  /// false: L2 term added to the gradient; true: shrink parameters directly.
  bool decoupled_weight_decay = false;
  std::size_t epochs = 20;
  std::size_t lr_half_every = 5;  // epochs; 0 keeps the rate constant
  std::size_t warmup_steps = 0;   // linear ramp over the first optimizer steps; 0 = off
  std::size_t batch_size = 2;
  std::size_t max_steps = 0;      // 0 = no cap
  double clip_grad_norm = 0.0;    // 0 = off
  std::uint64_t seed = 1;

  void validate() const;
  kv::Pairs to_pairs() const;  // "train." keys
  static TrainConfig from_reader(kv::Reader& reader);
};

/// lr0 * 0.5^floor(epoch / lr_half_every), epochs counted from 0.
double learning_rate(const TrainConfig& cfg, std::size_t epoch);

/// Warmup multiplier for the optimizer step about to be taken (1-based):
/// min(1, step / warmup_steps).
double warmup_factor(const TrainConfig& cfg, std::uint64_t step);

/// Bias-corrected Adam over every tensor of a parameter set.
template <class T>
class Adam {
 public:
  Adam() = default;
  explicit Adam(const nn::ParameterSet<T>& params);

  /// Applies one update from the gradients currently held by `params`. A
  /// non-finite gradient anywhere rejects the step: parameters and state
  /// stay untouched and the return value is false.
  bool step(nn::ParameterSet<T>& params, double lr, const TrainConfig& cfg);

  std::uint64_t t() const noexcept { return t_; }
  std::vector<nn::Tensor<T>>& first_moments() noexcept { return m_; }
  std::vector<nn::Tensor<T>>& second_moments() noexcept { return v_; }
  const std::vector<nn::Tensor<T>>& first_moments() const noexcept { return m_; }
  const std::vector<nn::Tensor<T>>& second_moments() const noexcept { return v_; }
  void set_t(std::uint64_t t) noexcept { t_ = t; }

 private:
  std::vector<nn::Tensor<T>> m_, v_;
  std::uint64_t t_ = 0;
};

struct LogRow {
  std::size_t epoch = 0;  // 0-based epoch just finished
  std::size_t step = 0;   // optimizer steps taken so far
  double lr = 0;
  double loss = 0;        // mean training batch loss over the epoch
  metrics::MetricReport val;
  std::size_t skipped = 0;   // batches without a valid GT pixel
  std::size_t rejected = 0;  // steps dropped for non-finite gradients
};

std::string log_header();
std::string log_line(const LogRow& row);

struct TrainOptions {
  /// Receives log.csv and per-epoch checkpoints; empty disables file output.
  std::filesystem::path out_dir;
  /// Continue from this checkpoint (written by a previous run of the same config).
  std::optional<std::filesystem::path> resume_from;
  /// Stop after this many epochs in total (simulates an interrupted run).
  std::optional<std::size_t> stop_after_epochs;
  /// Validate after every epoch; when false, log rows carry zero metrics.
  bool validate_each_epoch = true;
  std::function<void(const LogRow&)> on_epoch;
  /// Called after each optimizer step with (step, batch loss).
  std::function<void(std::size_t, double)> on_step;
};

struct TrainResult {
  std::vector<LogRow> log;
  std::size_t steps = 0;
  std::size_t skipped = 0;
  std::size_t rejected = 0;
  std::vector<double> step_losses;  // this invocation only
};

/// Scale-aware mean squared error of a batch: sum of squared errors over all
/// valid pixels in the batch, divided by their total count. Returns an empty
/// Var when the batch has no valid pixel.
nn::Var<float> batch_loss(const model::RigNet<float>& net, const std::vector<const data::Sample*>& batch);

metrics::MetricReport evaluate_dataset(const model::RigNet<float>& net,
                                       const std::vector<data::Sample>& samples);

TrainResult train(model::RigNet<float>& net, const std::vector<data::Sample>& train_set,
                  const std::vector<data::Sample>& val_set, const TrainConfig& cfg,
                  const TrainOptions& opts = {});

/// Config text stored in checkpoints: model, train, and seed keys.
std::string run_config_text(const model::RigNet<float>& net, const TrainConfig& cfg);

/// Flat key=value experiment description read by the command-line tool.
struct ExperimentConfig {
  model::RigNetConfig model;
  TrainConfig train;
  data::DatasetSpec data;

  static ExperimentConfig parse(std::string_view text);
  static ExperimentConfig load(const std::filesystem::path& path);
  std::string to_text() const;
};

// ---------------------------------------------------------------------------
// Ablation

struct AblationVariant {
  std::string label;
  model::RigNetConfig config;
};

/// Baseline dense dynamic convolution, EG with k = 1..3, the four fusion
/// modes at k = 3, and color-branch repetitions 1..3 around `base`.
std::vector<AblationVariant> default_plan(const model::RigNetConfig& base);
/// Throws on duplicate labels or an empty plan.
void validate_plan(const std::vector<AblationVariant>& plan);

struct AblationRow {
  std::string label;
  model::RigNetConfig config;
  std::vector<double> rmse;  // validation RMSE (mm) per seed
  double rmse_mean = 0, rmse_std = 0;
  std::uint64_t memory_proxy_bytes = 0;  // guidance intermediates of one forward, 4-byte floats
  std::size_t parameters = 0;
  std::vector<std::vector<double>> step_losses;  // per seed
};

struct AblationOptions {
  std::function<void(const std::string& label, std::uint64_t seed, double rmse)> on_run;
  bool keep_step_losses = false;
};

std::vector<AblationRow> run_ablation(const std::vector<AblationVariant>& plan,
                                      const std::vector<data::Sample>& train_set,
                                      const std::vector<data::Sample>& val_set,
                                      const std::vector<std::uint64_t>& seeds,
                                      const TrainConfig& cfg, const AblationOptions& opts = {});

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace rig::trainer
