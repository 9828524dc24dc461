// rignet: data generation, training, evaluation, inference and the
// memory/gradient/ablation reports from one binary.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rig/data.hpp"
#include "rig/gradsuite.hpp"
#include "rig/io.hpp"
#include "rig/memcost.hpp"
#include "rig/metrics.hpp"
#include "rig/model.hpp"
#include "rig/trainer.hpp"

namespace fs = std::filesystem;
using namespace rig;

namespace {

constexpr int kUsageError = 2;

struct Overrides {
  std::optional<std::size_t> epochs, batch, warmup, half_every;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--epochs", epochs, "Training epochs");
    cmd->add_option("--batch", batch, "Batch size");
    cmd->add_option("--lr", lr, "Initial learning rate");
    cmd->add_option("--warmup", warmup, "Linear warmup steps");
    cmd->add_option("--half-every", half_every, "Halve the learning rate every N epochs (0 = never)");
    cmd->add_option("--seed", seed, "Seed for parameters and shuffling");
  }

  void apply(trainer::TrainConfig& c) const {
    if (epochs) c.epochs = *epochs;
    if (batch) c.batch_size = *batch;
    if (lr) c.lr0 = *lr;
    if (warmup) c.warmup_steps = *warmup;
    if (half_every) c.lr_half_every = *half_every;
    if (seed) c.seed = *seed;
    c.validate();
  }
};

trainer::ExperimentConfig load_config(const std::string& path) {
  return path.empty() ? trainer::ExperimentConfig{} : trainer::ExperimentConfig::load(path);
}

std::vector<data::Sample> dataset_or_generated(const std::string& dir, const data::DatasetSpec& spec) {
  if (!dir.empty()) return data::load_dataset(dir);
  return data::generate(spec);
}

data::Mask read_mask(const std::string& arg, std::size_t pixels) {
  if (arg == "full") return data::Mask(pixels, 1);
  const data::Mask m = data::map_to_mask(data::read_dmap(arg));
  if (m.size() != pixels) throw std::invalid_argument("mask size does not match the maps");
  return m;
}

void write_prediction(const fs::path& out, const std::string& stem, const data::FeatureMap<float>& pred) {
  fs::create_directories(out);
  data::write_dmap(out / (stem + ".dmap"), pred);
  data::write_pnm16(out / (stem + ".pgm"), pred);
}

int run_gen_data(const fs::path& out, data::DatasetSpec spec) {
  spec.validate();
  const auto entries = data::write_dataset(out, spec);
  std::cout << "wrote " << entries.size() << " samples to " << out.string() << "\n";
  return 0;
}

int run_train(const trainer::ExperimentConfig& exp, const std::string& data_dir, const std::string& val_dir,
              const fs::path& out, const std::string& resume) {
  const auto train_set = dataset_or_generated(data_dir, exp.data);
  data::DatasetSpec val_spec = exp.data;
  val_spec.seed = exp.data.seed + 1;
  const auto val_set = dataset_or_generated(val_dir, val_spec);

  model::RigNet<float> net(exp.model, exp.train.seed);
  trainer::TrainOptions opts;
  opts.out_dir = out;
  if (!resume.empty()) opts.resume_from = resume;
  opts.on_epoch = [](const trainer::LogRow& row) {
    std::printf("epoch %zu  step %zu  lr %.3g  loss %.5f  val rmse %.1f mm\n", row.epoch, row.step, row.lr,
                row.loss, row.val.rmse);
    std::fflush(stdout);
  };
  fs::create_directories(out);
  io::write_file(out / "experiment.cfg", exp.to_text());
  trainer::train(net, train_set, val_set, exp.train, opts);
  std::cout << "checkpoint: " << (out / "last.ckpt").string() << "\n";
  return 0;
}

int run_eval_maps(const std::string& pred_path, const std::string& gt_path, const std::string& mask_arg) {
  const auto pred = data::read_dmap(pred_path);
  const auto gt = data::read_dmap(gt_path);
  if (pred.dims() != gt.dims()) throw std::invalid_argument("prediction and ground truth shapes differ");
  const data::Mask mask = read_mask(mask_arg, gt.size());
  std::cout << metrics::csv_header() << "\n"
            << metrics::csv_row(metrics::evaluate(pred.storage(), gt.storage(), mask)) << "\n";
  return 0;
}

int run_eval_checkpoint(const std::string& ckpt_path, const std::string& data_dir) {
  const model::Checkpoint ckpt = model::load_checkpoint(ckpt_path);
  model::RigNet<float> net(model::config_from_checkpoint(ckpt), 0);
  model::restore_parameters(net, ckpt);
  const auto samples = data::load_dataset(data_dir);
  std::cout << metrics::csv_header() << "\n" << metrics::csv_row(trainer::evaluate_dataset(net, samples)) << "\n";
  return 0;
}

int run_infer(const std::string& data_dir, std::size_t index, const fs::path& out, const std::string& ckpt_path,
              const std::string& config_path, std::uint64_t seed) {
  const auto entries = data::read_manifest(data_dir);
  const data::ManifestEntry* entry = nullptr;
  for (const auto& e : entries) {
    if (e.index == index) entry = &e;
  }
  if (entry == nullptr) throw std::invalid_argument("no sample with index " + std::to_string(index));
  const data::Sample s = data::load_sample(data_dir, *entry);

  std::optional<model::RigNet<float>> net;
  if (!ckpt_path.empty()) {
    const model::Checkpoint ckpt = model::load_checkpoint(ckpt_path);
    net.emplace(model::config_from_checkpoint(ckpt), 0);
    model::restore_parameters(*net, ckpt);
  } else {
    net.emplace(load_config(config_path).model, seed);
  }
  const data::FeatureMap<float> pred = net->forward(s.color, s.sparse, s.input_mask).value();
  char stem[32];
  std::snprintf(stem, sizeof stem, "%05zu_pred", index);
  write_prediction(out, stem, pred);
  std::cout << metrics::csv_header() << "\n"
            << metrics::csv_row(metrics::evaluate(pred.storage(), s.gt.storage(), s.gt_mask)) << "\n";
  return 0;
}

int run_memcost(const memcost::Shape& shape, const std::string& out) {
  const memcost::MemCostReport r = memcost::cost(shape);
  const std::string csv = memcost::to_csv({r});
  std::cout << csv;
  char line[160];
  std::snprintf(line, sizeof line, "GB (2^30 bytes): dc %.2f  cf %.3f  eg %.3f\n", memcost::MemCostReport::gib(r.bytes_dc),
                memcost::MemCostReport::gib(r.bytes_cf), memcost::MemCostReport::gib(r.bytes_eg));
  std::cout << line;
  if (!out.empty()) io::write_file(out, csv);
  return 0;
}

int run_gradcheck(double tolerance) {
  gradsuite::Options opts;
  opts.tolerance = tolerance;
  int failures = 0;
  for (const auto& r : gradsuite::run(opts)) {
    const bool ok = r.passed(tolerance);
    failures += ok ? 0 : 1;
    std::printf("%-4s %-20s max_rel_error %.3e over %zu elements\n", ok ? "ok" : "FAIL", r.op.c_str(),
                r.max_rel_error, r.elements_checked);
  }
  std::printf("%d failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}

int run_ablate(const trainer::ExperimentConfig& exp, const std::string& variants, std::size_t seeds,
               std::size_t train_count, std::size_t val_count, const std::string& out) {
  auto plan = trainer::default_plan(exp.model);
  if (!variants.empty()) {
    std::vector<trainer::AblationVariant> picked;
    std::stringstream list(variants);
    for (std::string label; std::getline(list, label, ',');) {
      bool found = false;
      for (const auto& v : plan) {
        if (v.label == label) {
          picked.push_back(v);
          found = true;
        }
      }
      if (!found) throw std::invalid_argument("unknown ablation variant '" + label + "'");
    }
    plan = std::move(picked);
  }
  data::DatasetSpec train_spec = exp.data, val_spec = exp.data;
  train_spec.count = train_count;
  val_spec.count = val_count;
  val_spec.seed = exp.data.seed + 1;
  const auto ts = data::generate(train_spec), vs = data::generate(val_spec);
  std::vector<std::uint64_t> seed_list;
  for (std::uint64_t s = 1; s <= seeds; ++s) seed_list.push_back(s);

  trainer::AblationOptions opts;
  opts.on_run = [](const std::string& label, std::uint64_t seed, double rmse) {
    std::printf("%-12s seed %llu  rmse %.1f mm\n", label.c_str(), static_cast<unsigned long long>(seed), rmse);
    std::fflush(stdout);
  };
  const std::string csv = trainer::ablation_csv(trainer::run_ablation(plan, ts, vs, seed_list, exp.train, opts));
  std::cout << csv;
  if (!out.empty()) io::write_file(out, csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Repetitive image-guided depth completion"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset of .dmap files and a manifest");
  std::string gen_out;
  data::DatasetSpec gen_spec;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--count", gen_spec.count, "Number of samples");
  gen->add_option("--seed", gen_spec.seed, "Dataset seed");
  gen->add_option("--height", gen_spec.height, "Image height");
  gen->add_option("--width", gen_spec.width, "Image width");
  gen->add_option("--rate", gen_spec.sample_rate, "Fraction of GT pixels kept as sparse input");
  gen->add_option("--gt-density", gen_spec.gt_density, "Fraction of pixels with ground truth");

  auto* train = app.add_subcommand("train", "Train a model and write log.csv plus checkpoints");
  std::string train_config, train_data, train_val, train_out, train_resume;
  Overrides train_over;
  train->add_option("--config", train_config, "Experiment config (key = value)");
  train->add_option("--data", train_data, "Training dataset directory (default: generated)");
  train->add_option("--val", train_val, "Validation dataset directory (default: generated)");
  train->add_option("--out", train_out, "Output directory")->required();
  train->add_option("--resume", train_resume, "Checkpoint to resume from");
  train_over.add_to(train);

  auto* eval = app.add_subcommand("eval", "Print metrics as CSV");
  std::string eval_pred, eval_gt, eval_mask = "full", eval_ckpt, eval_data;
  auto* pred_opt = eval->add_option("--pred", eval_pred, "Predicted depth .dmap");
  auto* gt_opt = eval->add_option("--gt", eval_gt, "Ground-truth depth .dmap");
  eval->add_option("--mask", eval_mask, "'full' or a mask .dmap");
  auto* ckpt_opt = eval->add_option("--checkpoint", eval_ckpt, "Evaluate a checkpoint on --data");
  auto* data_opt = eval->add_option("--data", eval_data, "Dataset directory for --checkpoint");
  pred_opt->needs(gt_opt);
  gt_opt->needs(pred_opt);
  ckpt_opt->needs(data_opt);
  ckpt_opt->excludes(pred_opt);

  auto* infer = app.add_subcommand("infer", "Predict one sample; writes .dmap and 16-bit .pgm");
  std::string infer_data, infer_out, infer_ckpt, infer_config;
  std::size_t infer_index = 0;
  std::uint64_t infer_seed = 1;
  infer->add_option("--data", infer_data, "Dataset directory")->required();
  infer->add_option("--index", infer_index, "Sample index");
  infer->add_option("--out", infer_out, "Output directory")->required();
  infer->add_option("--checkpoint", infer_ckpt, "Trained checkpoint (default: fresh weights)");
  infer->add_option("--config", infer_config, "Experiment config for fresh weights");
  infer->add_option("--seed", infer_seed, "Parameter seed for fresh weights");

  auto* mem = app.add_subcommand("memcost", "Guidance memory model for one shape");
  memcost::Shape shape{128, 128, 608, 3, 4};
  std::string mem_out;
  mem->add_option("--C", shape.C, "Channels");
  mem->add_option("--H", shape.H, "Height");
  mem->add_option("--W", shape.W, "Width");
  mem->add_option("--R", shape.R, "Kernel window");
  mem->add_option("--elem", shape.elem_bytes, "Bytes per element");
  mem->add_option("--out", mem_out, "Also write the CSV here");

  auto* ablate = app.add_subcommand("ablate", "Train each variant over several seeds and compare");
  std::string ablate_config, ablate_variants, ablate_out;
  std::size_t ablate_seeds = 3, ablate_train = 64, ablate_val = 64;
  Overrides ablate_over;
  ablate->add_option("--config", ablate_config, "Experiment config (key = value)");
  ablate->add_option("--variants", ablate_variants, "Comma-separated labels (default: whole plan)");
  ablate->add_option("--seeds", ablate_seeds, "Seeds 1..N");
  ablate->add_option("--train-count", ablate_train, "Training samples");
  ablate->add_option("--val-count", ablate_val, "Validation samples");
  ablate->add_option("--out", ablate_out, "Also write the CSV here");
  ablate_over.add_to(ablate);

  auto* grad = app.add_subcommand("gradcheck", "Central-difference check of every differentiable op");
  double grad_tol = 1e-4;
  grad->add_option("--tolerance", grad_tol, "Maximum relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return kUsageError;
  }

  try {
    if (*gen) return run_gen_data(gen_out, gen_spec);
    if (*train) {
      trainer::ExperimentConfig exp = load_config(train_config);
      train_over.apply(exp.train);
      return run_train(exp, train_data, train_val, train_out, train_resume);
    }
    if (*eval) {
      if (!eval_ckpt.empty()) return run_eval_checkpoint(eval_ckpt, eval_data);
      if (eval_pred.empty()) throw std::invalid_argument("eval needs --pred/--gt or --checkpoint/--data");
      return run_eval_maps(eval_pred, eval_gt, eval_mask);
    }
    if (*infer) return run_infer(infer_data, infer_index, infer_out, infer_ckpt, infer_config, infer_seed);
    if (*mem) return run_memcost(shape, mem_out);
    if (*ablate) {
      trainer::ExperimentConfig exp = load_config(ablate_config);
      ablate_over.apply(exp.train);
      return run_ablate(exp, ablate_variants, ablate_seeds, ablate_train, ablate_val, ablate_out);
    }
    if (*grad) return run_gradcheck(grad_tol);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
