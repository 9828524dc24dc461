#include "rig/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "rig/io.hpp"
#include "rig/nn/random.hpp"

namespace rig::trainer {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw std::invalid_argument("train: lr0 must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("train: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("train: eps must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("train: weight_decay must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
  if (clip_grad_norm < 0.0) throw std::invalid_argument("train: clip_grad_norm must be >= 0");
}

kv::Pairs TrainConfig::to_pairs() const {
  return {{"train.lr0", fmt(lr0)},
          {"train.beta1", fmt(beta1)},
          {"train.beta2", fmt(beta2)},
          {"train.eps", fmt(eps)},
          {"train.weight_decay", fmt(weight_decay)},
          {"train.decoupled_weight_decay", decoupled_weight_decay ? "true" : "false"},
          {"train.epochs", std::to_string(epochs)},
          {"train.lr_half_every", std::to_string(lr_half_every)},
          {"train.warmup_steps", std::to_string(warmup_steps)},
          {"train.batch_size", std::to_string(batch_size)},
          {"train.max_steps", std::to_string(max_steps)},
          {"train.clip_grad_norm", fmt(clip_grad_norm)},
          {"train.seed", std::to_string(seed)}};
}

TrainConfig TrainConfig::from_reader(kv::Reader& r) {
  TrainConfig c;
  c.lr0 = r.get_double("train.lr0", c.lr0);
  c.beta1 = r.get_double("train.beta1", c.beta1);
  c.beta2 = r.get_double("train.beta2", c.beta2);
  c.eps = r.get_double("train.eps", c.eps);
  c.weight_decay = r.get_double("train.weight_decay", c.weight_decay);
  c.decoupled_weight_decay = r.get_bool("train.decoupled_weight_decay", c.decoupled_weight_decay);
  c.epochs = r.get_size("train.epochs", c.epochs);
  c.lr_half_every = r.get_size("train.lr_half_every", c.lr_half_every);
  c.warmup_steps = r.get_size("train.warmup_steps", c.warmup_steps);
  c.batch_size = r.get_size("train.batch_size", c.batch_size);
  c.max_steps = r.get_size("train.max_steps", c.max_steps);
  c.clip_grad_norm = r.get_double("train.clip_grad_norm", c.clip_grad_norm);
  c.seed = r.get_u64("train.seed", c.seed);
  c.validate();
  return c;
}

double learning_rate(const TrainConfig& cfg, std::size_t epoch) {
  if (cfg.lr_half_every == 0) return cfg.lr0;
  return cfg.lr0 * std::ldexp(1.0, -static_cast<int>(epoch / cfg.lr_half_every));
}

double warmup_factor(const TrainConfig& cfg, std::uint64_t step) {
  if (cfg.warmup_steps == 0 || step >= cfg.warmup_steps) return 1.0;
  return static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
}

template <class T>
Adam<T>::Adam(const nn::ParameterSet<T>& params) {
  for (const auto& e : params.entries()) {
    m_.emplace_back(e.var.value().dims());
    v_.emplace_back(e.var.value().dims());
  }
}

template <class T>
bool Adam<T>::step(nn::ParameterSet<T>& params, double lr, const TrainConfig& cfg) {
  auto& entries = params.entries();
  if (entries.size() != m_.size()) throw std::logic_error("adam: parameter set changed shape");
  for (const auto& e : entries) {
    if (!e.var.grad().empty() && !e.var.grad().all_finite()) return false;
  }
  ++t_;
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(t_)));
  const T c2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(t_)));
  const T rate = static_cast<T>(lr), eps = static_cast<T>(cfg.eps);
  const T wd = static_cast<T>(cfg.weight_decay);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    nn::Tensor<T>& p = entries[i].var.mutable_value();
    const nn::Tensor<T>& g = entries[i].var.grad();
    T* m = m_[i].data();
    T* v = v_[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      T grad = g.empty() ? T(0) : g[k];
      if (!cfg.decoupled_weight_decay) grad += wd * p[k];
      m[k] = b1 * m[k] + (T(1) - b1) * grad;
      v[k] = b2 * v[k] + (T(1) - b2) * grad * grad;
      const T mhat = m[k] / c1;
      const T vhat = v[k] / c2;
      if (cfg.decoupled_weight_decay) p[k] -= rate * wd * p[k];
      p[k] -= rate * mhat / (std::sqrt(vhat) + eps);
    }
  }
  return true;
}

template class Adam<float>;
template class Adam<double>;

std::string log_header() {
  return "epoch,step,lr,loss,rmse_mm,mae_mm,irmse,imae,rel,delta1,delta2,delta3,skipped,rejected";
}

std::string log_line(const LogRow& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g,%.9g,", r.epoch, r.step, r.lr, r.loss);
  return buf + metrics::csv_row(r.val) + "," + std::to_string(r.skipped) + "," +
         std::to_string(r.rejected);
}

nn::Var<float> batch_loss(const model::RigNet<float>& net,
                          const std::vector<const data::Sample*>& batch) {
  std::size_t valid = 0;
  for (const data::Sample* s : batch) {
    valid += static_cast<std::size_t>(std::count_if(s->gt_mask.begin(), s->gt_mask.end(),
                                                    [](std::uint8_t m) { return m != 0; }));
  }
  if (valid == 0) return {};
  const float scale = 1.0f / static_cast<float>(valid);
  std::vector<nn::Var<float>> terms;
  terms.reserve(batch.size());
  for (const data::Sample* s : batch) {
    nn::Var<float> pred = net.forward(s->color, s->sparse, s->input_mask);
    terms.push_back(nn::masked_sum_squares(pred, s->gt, s->gt_mask, scale));
  }
  return terms.size() == 1 ? terms[0] : nn::add_all<float>(terms);
}

metrics::MetricReport evaluate_dataset(const model::RigNet<float>& net,
                                       const std::vector<data::Sample>& samples) {
  metrics::Accumulator acc;
  for (const auto& s : samples) {
    const nn::Var<float> pred = net.forward(s.color, s.sparse, s.input_mask);
    acc.add(pred.value().values(), s.gt.values(), s.gt_mask);
  }
  return acc.report();
}

std::string run_config_text(const model::RigNet<float>& net, const TrainConfig& cfg) {
  kv::Pairs pairs = net.config().to_pairs();
  pairs.emplace_back("model.seed", std::to_string(net.seed()));
  for (auto& p : cfg.to_pairs()) pairs.push_back(std::move(p));
  return kv::format(pairs);
}

namespace {

constexpr const char* kStateName = "train.state";

std::string epoch_checkpoint_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03zu.ckpt", epoch);
  return buf;
}

model::Checkpoint training_checkpoint(const model::RigNet<float>& net, const Adam<float>& adam,
                                      const TrainConfig& cfg, std::size_t epochs_done,
                                      std::size_t step, std::size_t skipped, std::size_t rejected) {
  model::Checkpoint ckpt;
  ckpt.config_text = run_config_text(net, cfg);
  const auto& entries = net.parameters().entries();
  for (const auto& e : entries) ckpt.tensors.push_back({e.name, e.var.value()});
  for (std::size_t i = 0; i < entries.size(); ++i) {
    ckpt.tensors.push_back({"adam.m/" + entries[i].name, adam.first_moments()[i]});
    ckpt.tensors.push_back({"adam.v/" + entries[i].name, adam.second_moments()[i]});
  }
  // Counters stay below 2^24, so float storage is exact.
  nn::Tensor<float> state({5});
  state[0] = static_cast<float>(epochs_done);
  state[1] = static_cast<float>(step);
  state[2] = static_cast<float>(adam.t());
  state[3] = static_cast<float>(skipped);
  state[4] = static_cast<float>(rejected);
  ckpt.tensors.push_back({kStateName, std::move(state)});
  return ckpt;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TrainResult train(model::RigNet<float>& net, const std::vector<data::Sample>& train_set,
                  const std::vector<data::Sample>& val_set, const TrainConfig& cfg,
                  const TrainOptions& opts) {
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");

  TrainResult result;
  Adam<float> adam(net.parameters());
  std::size_t start_epoch = 0;
  std::string log_text = log_header() + "\n";

  if (opts.resume_from) {
    const model::Checkpoint ckpt = model::load_checkpoint(*opts.resume_from);
    if (ckpt.config_text != run_config_text(net, cfg)) {
      throw std::invalid_argument("resume: checkpoint was written by a different configuration");
    }
    model::restore_parameters(net, ckpt);
    const auto& entries = net.parameters().entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto* m = ckpt.find("adam.m/" + entries[i].name);
      const auto* v = ckpt.find("adam.v/" + entries[i].name);
      if (m == nullptr || v == nullptr) {
        throw std::invalid_argument("resume: checkpoint lacks optimizer state for " + entries[i].name);
      }
      adam.first_moments()[i] = m->value;
      adam.second_moments()[i] = v->value;
    }
    const auto* state = ckpt.find(kStateName);
    if (state == nullptr || state->value.size() != 5) {
      throw std::invalid_argument("resume: checkpoint lacks training state");
    }
    start_epoch = static_cast<std::size_t>(state->value[0]);
    result.steps = static_cast<std::size_t>(state->value[1]);
    adam.set_t(static_cast<std::uint64_t>(state->value[2]));
    result.skipped = static_cast<std::size_t>(state->value[3]);
    result.rejected = static_cast<std::size_t>(state->value[4]);

    if (!opts.out_dir.empty() && std::filesystem::exists(opts.out_dir / "log.csv")) {
      const auto lines = split_lines(io::read_file(opts.out_dir / "log.csv"));
      if (lines.size() < start_epoch + 1) {
        throw std::invalid_argument("resume: log.csv has fewer rows than completed epochs");
      }
      log_text.clear();
      for (std::size_t i = 0; i <= start_epoch; ++i) log_text += lines[i] + "\n";
    }
  }
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    io::write_file(opts.out_dir / "log.csv", log_text);
  }

  std::vector<std::size_t> order(train_set.size());
  const std::size_t end_epoch =
      opts.stop_after_epochs ? std::min(cfg.epochs, *opts.stop_after_epochs) : cfg.epochs;
  for (std::size_t epoch = start_epoch; epoch < end_epoch; ++epoch) {
    if (cfg.max_steps != 0 && result.steps >= cfg.max_steps) break;
    std::iota(order.begin(), order.end(), std::size_t{0});
    nn::Rng(nn::derive_seed(cfg.seed, 0xE90C, epoch)).shuffle(order);
    const double lr = learning_rate(cfg, epoch);

    double loss_sum = 0.0;
    std::size_t loss_count = 0, skipped = 0, rejected = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      if (cfg.max_steps != 0 && result.steps >= cfg.max_steps) break;
      std::vector<const data::Sample*> batch;
      for (std::size_t i = b; i < std::min(order.size(), b + cfg.batch_size); ++i) {
        batch.push_back(&train_set[order[i]]);
      }
      nn::Var<float> loss = batch_loss(net, batch);
      if (!loss) {
        ++skipped;
        continue;
      }
      net.parameters().zero_grad();
      nn::backward(loss);
      if (cfg.clip_grad_norm > 0.0) {
        double sq = 0.0;
        for (const auto& e : net.parameters().entries()) {
          for (float g : e.var.grad().values()) sq += static_cast<double>(g) * g;
        }
        const double norm = std::sqrt(sq);
        if (norm > cfg.clip_grad_norm) {
          const float s = static_cast<float>(cfg.clip_grad_norm / norm);
          for (auto& e : net.parameters().entries()) {
            for (float& g : e.var.grad_buffer().values()) g *= s;
          }
        }
      }
      const double value = loss.value()[0];
      loss = {};
      if (!adam.step(net.parameters(), lr * warmup_factor(cfg, adam.t() + 1), cfg)) {
        ++rejected;
        continue;
      }
      ++result.steps;
      loss_sum += value;
      ++loss_count;
      result.step_losses.push_back(value);
      if (opts.on_step) opts.on_step(result.steps, value);
    }
    net.parameters().zero_grad();
    result.skipped += skipped;
    result.rejected += rejected;

    LogRow row;
    row.epoch = epoch;
    row.step = result.steps;
    row.lr = lr;
    row.loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    if (opts.validate_each_epoch && !val_set.empty()) row.val = evaluate_dataset(net, val_set);
    row.skipped = result.skipped;
    row.rejected = result.rejected;
    result.log.push_back(row);
    if (opts.on_epoch) opts.on_epoch(row);

    if (!opts.out_dir.empty()) {
      log_text += log_line(row) + "\n";
      io::write_file(opts.out_dir / "log.csv", log_text);
      const std::string bytes = model::encode_checkpoint(training_checkpoint(
          net, adam, cfg, epoch + 1, result.steps, result.skipped, result.rejected));
      io::write_file(opts.out_dir / epoch_checkpoint_name(epoch), bytes);
      io::write_file(opts.out_dir / "last.ckpt", bytes);
    }
  }
  return result;
}

ExperimentConfig ExperimentConfig::parse(std::string_view text) {
  kv::Reader reader(kv::parse(text));
  ExperimentConfig c;
  c.model = model::RigNetConfig::from_reader(reader);
  c.train = TrainConfig::from_reader(reader);
  c.data = data::DatasetSpec::from_reader(reader);
  reader.require_all_used();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  try {
    return parse(io::read_file(path));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::string ExperimentConfig::to_text() const {
  kv::Pairs pairs = model.to_pairs();
  for (auto& p : train.to_pairs()) pairs.push_back(std::move(p));
  for (auto& p : data.to_pairs()) pairs.push_back(std::move(p));
  return kv::format(pairs);
}

// ---------------------------------------------------------------------------
// Ablation

std::vector<AblationVariant> default_plan(const model::RigNetConfig& base) {
  using guidance::FusionMode;
  using guidance::GuidanceKind;
  auto variant = [&](std::string label, GuidanceKind kind, std::size_t k, FusionMode mode,
                     std::size_t rhn) {
    model::RigNetConfig c = base;
    c.guidance = kind;
    c.rg_repetitions = k;
    c.fusion = mode;
    c.hourglass.repetitions = rhn;
    return AblationVariant{std::move(label), c};
  };
  const std::size_t i = base.hourglass.repetitions;
  return {
      variant("G1", GuidanceKind::dynamic_conv, 1, FusionMode::last, i),
      variant("EG1", GuidanceKind::efficient, 1, FusionMode::last, i),
      variant("EG2", GuidanceKind::efficient, 2, FusionMode::last, i),
      variant("EG3", GuidanceKind::efficient, 3, FusionMode::last, i),
      variant("EG3+add", GuidanceKind::efficient, 3, FusionMode::add, i),
      variant("EG3+concat", GuidanceKind::efficient, 3, FusionMode::concat, i),
      variant("EG3+AF", GuidanceKind::efficient, 3, FusionMode::adaptive, i),
      variant("RHN1+EG3+AF", GuidanceKind::efficient, 3, FusionMode::adaptive, 1),
      variant("RHN2+EG3+AF", GuidanceKind::efficient, 3, FusionMode::adaptive, 2),
      variant("RHN3+EG3+AF", GuidanceKind::efficient, 3, FusionMode::adaptive, 3),
  };
}

void validate_plan(const std::vector<AblationVariant>& plan) {
  if (plan.empty()) throw std::invalid_argument("ablation: empty plan");
  for (std::size_t a = 0; a < plan.size(); ++a) {
    plan[a].config.validate();
    for (std::size_t b = a + 1; b < plan.size(); ++b) {
      if (plan[a].label == plan[b].label) {
        throw std::invalid_argument("ablation: duplicate label '" + plan[a].label + "'");
      }
    }
  }
}

std::vector<AblationRow> run_ablation(const std::vector<AblationVariant>& plan,
                                      const std::vector<data::Sample>& train_set,
                                      const std::vector<data::Sample>& val_set,
                                      const std::vector<std::uint64_t>& seeds,
                                      const TrainConfig& cfg, const AblationOptions& opts) {
  validate_plan(plan);
  if (seeds.empty()) throw std::invalid_argument("ablation: need at least one seed");
  if (val_set.empty()) throw std::invalid_argument("ablation: empty validation set");

  std::vector<AblationRow> rows;
  for (const AblationVariant& v : plan) {
    AblationRow row;
    row.label = v.label;
    row.config = v.config;
    for (std::uint64_t seed : seeds) {
      model::RigNet<float> net(v.config, seed);
      if (row.parameters == 0) {
        row.parameters = net.parameter_count();
        model::ForwardTrace<float> trace;
        const data::Sample& s = val_set.front();
        net.forward(s.color, s.sparse, s.input_mask, &trace);
        row.memory_proxy_bytes = 4 * static_cast<std::uint64_t>(trace.footprint.total());
      }
      TrainConfig c = cfg;
      c.seed = seed;
      TrainOptions topts;
      topts.validate_each_epoch = false;
      TrainResult tr = train(net, train_set, val_set, c, topts);
      const double rmse = evaluate_dataset(net, val_set).rmse;
      row.rmse.push_back(rmse);
      if (opts.keep_step_losses) row.step_losses.push_back(std::move(tr.step_losses));
      if (opts.on_run) opts.on_run(v.label, seed, rmse);
    }
    const double n = static_cast<double>(row.rmse.size());
    row.rmse_mean = std::accumulate(row.rmse.begin(), row.rmse.end(), 0.0) / n;
    double ss = 0.0;
    for (double r : row.rmse) ss += (r - row.rmse_mean) * (r - row.rmse_mean);
    row.rmse_std = row.rmse.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out =
      "label,guidance,fusion,rg_repetitions,rhn_repetitions,seeds,rmse_mean_mm,rmse_std_mm,"
      "memory_proxy_bytes,parameters\n";
  for (const auto& r : rows) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.4f,%.4f", r.rmse_mean, r.rmse_std);
    out += r.label + "," + guidance::to_string(r.config.guidance) + "," +
           guidance::to_string(r.config.fusion) + "," + std::to_string(r.config.rg_repetitions) +
           "," + std::to_string(r.config.hourglass.repetitions) + "," +
           std::to_string(r.rmse.size()) + "," + buf + "," + std::to_string(r.memory_proxy_bytes) +
           "," + std::to_string(r.parameters) + "\n";
  }
  return out;
}

}  // namespace rig::trainer
