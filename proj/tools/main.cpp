// sdvit: dataset synthesis, training, distillation, evaluation and export.
#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json_config.hpp"
#include "sdvit/checkpoint.hpp"
#include "sdvit/data.hpp"
#include "sdvit/distillation.hpp"
#include "sdvit/errors.hpp"
#include "sdvit/kernels.hpp"
#include "sdvit/metrics.hpp"
#include "sdvit/training.hpp"
#include "sdvit/vit.hpp"

#ifndef SDVIT_VERSION
#define SDVIT_VERSION "dev"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sdvit;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Common {
  std::string out;
  std::string config;
  std::uint64_t seed = 7;
  int threads = 1;
  bool dry_run = false;
};

struct ModelOpts {
  std::size_t image_size = 32;
  std::size_t patch_size = 8;
  std::size_t hidden_dim = 64;
  std::size_t layers = 12;
  std::size_t heads = 4;
  std::size_t mlp_dim = 128;
  float dropout = 0.0f;
  bool paper = false;
  bool per_layer_heads = false;
  std::string init;  // start from a checkpoint instead of a fresh model
};

struct DataOpts {
  std::string dir;
  std::size_t n_per_class = 64;
  std::uint64_t synth_seed = 7;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 7;
};

struct TrainOpts {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::size_t eval_every = 1;
  float lr = 5e-4f;
  float weight_decay = 0.0f;
  float clip = 0.0f;
  bool no_cosine = false;
  bool no_augment = false;
  float w_task = 1.0f;
  float w_distil = 0.5f;
  float w_cosine = 0.0f;
  float w_mse = 0.0f;
  float temperature = 1.0f;
  std::size_t M = 2, N = 1, P = 5;
  std::string layer_weights;
};

// Everything a subcommand can bind to; each subcommand owns one.
struct Command {
  CLI::App* app = nullptr;
  std::vector<std::string> outputs;
  Common common;
  ModelOpts model;
  DataOpts data;
  TrainOpts train;
  std::string regime = "plain";
  std::string teacher;
  std::string keep = "0,2,4,7,9,11";
  std::string checkpoint;
  std::size_t min_depth = 1;
  bool all_samples = false;
  // bench
  std::string models;
  std::string depths = "12,6";
  std::size_t samples = 256;
  std::size_t bench_batch = 32;
  std::size_t warmup = 2;
  std::size_t reps = 5;
  // export
  int layer = -1;
  std::size_t count = 8;
  std::string method = "tsne";
  double perplexity = 30.0;
  std::size_t iterations = 1000;
};

void add_common(Command& c) {
  CLI::App* a = c.app;
  a->add_option("--config", c.common.config, "JSON file of option values; command-line flags win");
  a->add_option("--out", c.common.out, "Output directory")->required();
  a->add_option("--seed", c.common.seed, "Model init and training seed");
  a->add_option("--threads", c.common.threads, "Worker threads for the numeric core")
      ->envname("SDVT_THREADS")
      ->check(CLI::PositiveNumber);
}

void add_model(Command& c) {
  CLI::App* a = c.app;
  ModelOpts& m = c.model;
  a->add_option("--image-size", m.image_size);
  a->add_option("--patch-size", m.patch_size);
  a->add_option("--hidden-dim", m.hidden_dim);
  a->add_option("--layers", m.layers);
  a->add_option("--heads", m.heads);
  a->add_option("--mlp-dim", m.mlp_dim);
  a->add_option("--dropout", m.dropout);
  a->add_flag("--paper-config", m.paper, "224px, patch 16, hidden 768, 12 layers (parameter counting)");
}

void add_data(Command& c) {
  CLI::App* a = c.app;
  DataOpts& d = c.data;
  a->add_option("--data", d.dir, "Image directory with labels.csv; synthetic lesions when omitted");
  a->add_option("--n-per-class", d.n_per_class, "Synthetic samples per class");
  a->add_option("--synth-seed", d.synth_seed);
  a->add_option("--train-fraction", d.train_fraction)->check(CLI::Range(0.0, 1.0));
  a->add_option("--split-seed", d.split_seed);
}

void add_train(Command& c, bool schedule) {
  CLI::App* a = c.app;
  TrainOpts& t = c.train;
  a->add_option("--epochs", t.epochs)->check(CLI::PositiveNumber);
  a->add_option("--batch-size", t.batch_size)->check(CLI::PositiveNumber);
  a->add_option("--eval-every", t.eval_every);
  a->add_option("--lr", t.lr);
  a->add_option("--weight-decay", t.weight_decay);
  a->add_option("--clip", t.clip, "Global grad-norm clip, 0 disables");
  a->add_flag("--no-cosine", t.no_cosine, "Constant learning rate");
  a->add_flag("--no-augment", t.no_augment);
  a->add_option("--w-task", t.w_task);
  a->add_option("--w-distil", t.w_distil);
  a->add_option("--w-cosine", t.w_cosine);
  a->add_option("--w-mse", t.w_mse);
  a->add_option("--temperature", t.temperature);
  a->add_option("--init", c.model.init, "Start from this checkpoint");
  a->add_flag("--dry-run", c.common.dry_run, "Build the models, write the manifest and stop");
  if (schedule) {
    a->add_option("--M", t.M, "Epochs with only the top head");
    a->add_option("--N", t.N, "Epochs per added head");
    a->add_option("--P", t.P, "Final epochs on everything");
  }
}

ViTConfig vit_config(const Command& c) {
  ViTConfig v = c.model.paper ? ViTConfig::paper() : ViTConfig::mini();
  if (!c.model.paper) {
    v.image_size = c.model.image_size;
    v.patch_size = c.model.patch_size;
    v.hidden_dim = c.model.hidden_dim;
    v.num_layers = c.model.layers;
    v.num_heads = c.model.heads;
    v.mlp_dim = c.model.mlp_dim;
  }
  v.dropout_prob = c.model.dropout;
  v.per_layer_heads = c.model.per_layer_heads;
  v.seed = c.common.seed;
  return v;
}

std::vector<float> parse_floats(const std::string& text) {
  std::vector<float> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    try {
      out.push_back(std::stof(item));
    } catch (const std::exception&) {
      throw InvalidArgument("not a number: '" + item + "'");
    }
  }
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

TrainConfig train_config(const Command& c, Regime regime) {
  const TrainOpts& t = c.train;
  TrainConfig cfg = TrainConfig::desk();
  cfg.epochs = t.epochs;
  cfg.batch_size = t.batch_size;
  cfg.eval_every = t.eval_every;
  cfg.seed = c.common.seed;
  cfg.optim.learning_rate = t.lr;
  cfg.optim.weight_decay = t.weight_decay;
  cfg.optim.max_grad_norm = t.clip;
  cfg.cosine_decay = !t.no_cosine;
  if (t.no_augment) cfg.augment = AugConfig::none();
  cfg.regime = regime;
  if (regime == Regime::fcvitprobs) cfg.schedule = ScheduleConfig{t.M, t.N, t.P};
  if (!t.layer_weights.empty()) cfg.layer_weights = parse_floats(t.layer_weights);
  cfg.checkpoint_dir = c.common.out;
  return cfg;
}

LossSpec loss_spec(const TrainOpts& t) {
  LossSpec s;
  s.w_task = t.w_task;
  s.w_distil_ce = t.w_distil;
  s.w_cosine = t.w_cosine;
  s.w_mse = t.w_mse;
  s.temperature = t.temperature;
  s.validate();
  return s;
}

fs::path out_path(const Command& c, const std::string& name) { return fs::path(c.common.out) / name; }

void write_manifest(Command& c, const std::vector<std::string>& argv, json extra = json::object()) {
  fs::create_directories(c.common.out);
  json config = cli::snapshot(c.app);
  json m;
  m["tool"] = "sdvit";
  m["version"] = SDVIT_VERSION;
  m["command"] = c.app->get_name();
  m["argv"] = argv;
  m["config"] = config;
  m["seed"] = c.common.seed;
  m["threads"] = kernels::num_threads();
#if defined(__linux__)
  m["platform"] = {{"os", "linux"}};
#elif defined(__APPLE__)
  m["platform"] = {{"os", "macos"}};
#else
  m["platform"] = {{"os", "other"}};
#endif
  m["platform"]["compiler"] = __VERSION__;
  m["outputs"] = c.outputs;
  for (auto& [k, v] : extra.items()) m[k] = v;
  std::ofstream(out_path(c, "manifest.json")) << m.dump(2) << '\n';
}

Dataset load_data(const Command& c, std::size_t image_size) {
  if (!c.data.dir.empty()) {
    return load_image_dataset(c.data.dir, fs::path(c.data.dir) / "labels.csv", image_size);
  }
  return synth_lesions(c.data.n_per_class, image_size, c.data.synth_seed);
}

std::pair<Dataset, Dataset> load_split(const Command& c, std::size_t image_size) {
  return stratified_split(load_data(c, image_size), c.data.train_fraction, c.data.split_seed);
}

void print_epoch(const EpochRecord& r) {
  std::printf("epoch %3zu  loss %.4f  train_acc %.3f", r.epoch, r.loss_total, r.train_acc);
  if (r.eval) std::printf("  bma %.4f  acc %.4f", r.eval->bma, r.eval->weighted.accuracy);
  std::printf("  %.1fs\n", r.seconds);
  std::fflush(stdout);
}

int finish_training(const Command& c, const ViTModel& model, const History& h, const Dataset& test) {
  const MetricsReport r = evaluate(model, test, 128);
  write_metrics_csv(r, out_path(c, "metrics.csv"));
  std::printf("final  bma %.4f  acc %.4f  params %llu  (best bma %.4f at epoch %zu)\n", r.bma, r.weighted.accuracy,
              static_cast<unsigned long long>(param_count(model)), h.best_bma, h.best_epoch);
  return kOk;
}

const std::vector<std::string> kTrainOutputs{"final.sdvt", "best.sdvt", "history.csv", "metrics.csv"};

json model_summary(const std::string& role, const ViTModel& m) {
  return {{"role", role}, {"params", param_count(m)}, {"config", json::parse(m.config.to_json())}};
}

int dry_run(Command& c, const std::vector<std::string>& argv, const std::vector<std::pair<std::string, const ViTModel*>>& models) {
  json list = json::array();
  for (const auto& [role, m] : models) {
    list.push_back(model_summary(role, *m));
    std::printf("%s params %llu\n", role.c_str(), static_cast<unsigned long long>(param_count(*m)));
  }
  c.outputs = {};
  write_manifest(c, argv, {{"models", list}, {"dry_run", true}});
  return kOk;
}

ViTModel initial_model(const Command& c, bool per_layer_heads) {
  if (!c.model.init.empty()) return load_checkpoint(c.model.init);
  ViTConfig v = vit_config(c);
  v.per_layer_heads = v.per_layer_heads || per_layer_heads;
  return build(v);
}

int run_synth(Command& c, const std::vector<std::string>& argv) {
  c.outputs = {"labels.csv", "*.png"};
  write_manifest(c, argv);
  Dataset d = synth_lesions(c.data.n_per_class, c.model.image_size, c.data.synth_seed);
  write_image_dataset(d, c.common.out);
  std::printf("wrote %zu images to %s\n", d.size(), c.common.out.c_str());
  return kOk;
}

int run_train(Command& c, const std::vector<std::string>& argv, Regime regime, bool per_layer_heads) {
  std::optional<ViTModel> teacher;
  if (regime_needs_teacher(regime)) {
    if (c.teacher.empty()) throw InvalidArgument("--regime " + regime_name(regime) + " needs --teacher");
    teacher = load_checkpoint(c.teacher);
  } else if (!c.teacher.empty()) {
    throw InvalidArgument("--teacher is only used by the skin_distil and cascade_step regimes");
  }
  ViTModel model = initial_model(c, per_layer_heads);
  if (c.common.dry_run) {
    std::vector<std::pair<std::string, const ViTModel*>> ms{{"model", &model}};
    if (teacher) ms.emplace_back("teacher", &*teacher);
    return dry_run(c, argv, ms);
  }
  c.outputs = kTrainOutputs;
  write_manifest(c, argv, {{"params", param_count(model)}});
  auto [tr, te] = load_split(c, model.config.image_size);
  const TrainConfig cfg = train_config(c, regime);
  History h = train(model, teacher ? &*teacher : nullptr, tr, te, cfg, loss_spec(c.train), print_epoch);
  return finish_training(c, model, h, te);
}

int run_distil(Command& c, const std::vector<std::string>& argv) {
  const BlockSelection sel = BlockSelection::parse(c.keep);
  ViTModel teacher;
  if (!c.teacher.empty()) {
    teacher = load_checkpoint(c.teacher);
  } else if (c.common.dry_run) {
    teacher = build(vit_config(c));  // parameter counting without a trained teacher
  } else {
    throw InvalidArgument("distil needs --teacher");
  }
  ViTModel student = init_student_from_teacher(teacher, sel);
  if (c.common.dry_run) return dry_run(c, argv, {{"teacher", &teacher}, {"student", &student}});
  c.outputs = kTrainOutputs;
  write_manifest(c, argv, {{"teacher_params", param_count(teacher)}, {"student_params", param_count(student)}});
  auto [tr, te] = load_split(c, teacher.config.image_size);
  TrainConfig cfg = train_config(c, Regime::skin_distil);
  cfg.alignment = sel.keep_indices;
  History h = train(student, &teacher, tr, te, cfg, loss_spec(c.train), print_epoch);
  return finish_training(c, student, h, te);
}

int run_cascade(Command& c, const std::vector<std::string>& argv) {
  if (c.teacher.empty()) throw InvalidArgument("cascade needs --teacher");
  const ViTModel teacher = load_checkpoint(c.teacher);
  if (c.common.dry_run) return dry_run(c, argv, {{"teacher", &teacher}});
  for (std::size_t d = teacher.config.num_layers; d >= std::max<std::size_t>(c.min_depth, 1); --d) {
    c.outputs.push_back("cascade_L" + std::to_string(d) + ".sdvt");
    if (d == 1) break;
  }
  c.outputs.push_back("cascade.csv");
  write_manifest(c, argv, {{"teacher_params", param_count(teacher)}});
  auto [tr, te] = load_split(c, teacher.config.image_size);
  TrainConfig cfg = train_config(c, Regime::cascade_step);
  cfg.eval_every = 0;
  CascadeOptions opts;
  opts.min_depth = c.min_depth;
  opts.on_step = [](const CascadeEntry& e) {
    std::printf("depth %2zu  params %8llu  bma %.4f  acc %.4f\n", e.depth, static_cast<unsigned long long>(e.params),
                e.bma, e.accuracy);
    std::fflush(stdout);
  };
  cascade_distill(teacher, tr, te, cfg, loss_spec(c.train), c.common.out, opts);
  return kOk;
}

Dataset eval_set(const Command& c, std::size_t image_size) {
  if (c.all_samples) return load_data(c, image_size);
  return load_split(c, image_size).second;
}

int run_eval(Command& c, const std::vector<std::string>& argv) {
  c.outputs = {"metrics.csv"};
  write_manifest(c, argv);
  const ViTModel model = load_checkpoint(c.checkpoint);
  const MetricsReport r = evaluate(model, eval_set(c, model.config.image_size), 128);
  write_metrics_csv(r, out_path(c, "metrics.csv"));
  std::printf("bma %.4f  acc %.4f  weighted_f1 %.4f  cancer_recall %.4f\n", r.bma, r.weighted.accuracy, r.weighted.f1,
              r.cancer.recall);
  return kOk;
}

int run_bench(Command& c, const std::vector<std::string>& argv) {
  c.outputs = {"bench.csv"};
  write_manifest(c, argv);
  std::vector<std::pair<std::string, ViTModel>> models;
  if (!c.models.empty()) {
    for (const std::string& p : split_list(c.models)) models.emplace_back(fs::path(p).stem().string(), load_checkpoint(p));
  } else {
    for (const std::string& d : split_list(c.depths)) {
      ViTConfig v = vit_config(c);
      v.num_layers = std::stoul(d);
      models.emplace_back("L" + d, build(v));
    }
  }
  if (models.empty()) throw InvalidArgument("bench: nothing to measure");
  const std::size_t size = models.front().second.config.image_size;
  for (const auto& [name, m] : models)
    if (m.config.image_size != size) throw InvalidArgument("bench: models disagree on image size");
  Dataset d = synth_lesions((c.samples + 7) / 8, size, c.data.synth_seed);
  d.resize(std::min(d.size(), c.samples));
  std::vector<Image> images;
  for (const Sample& s : d) images.push_back(s.image);
  const Tensor batch = batch_images(images);  // materialized before timing
  std::vector<BenchReport> rows;
  std::vector<std::string> names;
  for (const auto& [name, m] : models) {
    rows.push_back(bench_throughput(m, batch, c.bench_batch, c.warmup, c.reps));
    names.push_back(name);
    std::printf("%-12s params %10llu  %.2f items/s\n", name.c_str(),
                static_cast<unsigned long long>(rows.back().param_count), rows.back().items_per_second);
  }
  write_bench_csv(rows, names, out_path(c, "bench.csv"));
  return kOk;
}

int run_export_attn(Command& c, const std::vector<std::string>& argv) {
  c.outputs = {"attn/"};
  write_manifest(c, argv);
  const ViTModel model = load_checkpoint(c.checkpoint);
  const Dataset d = eval_set(c, model.config.image_size);
  const std::size_t n = std::min(c.count, d.size());
  const std::size_t layer = c.layer < 0 ? model.config.num_layers - 1 : static_cast<std::size_t>(c.layer);
  if (layer >= model.config.num_layers) throw InvalidArgument("--layer out of range");
  const fs::path dir = out_path(c, "attn");
  fs::create_directories(dir);
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<std::size_t> idx{i};
    const ForwardOutput out = forward(model, batch_images(d, idx), Mode::eval);
    const auto map = cls_attention_map(out, layer, 0);
    const auto overlay = upsample_nearest(map, model.config.grid(), model.config.image_size);
    const std::string stem = std::to_string(i) + "_" + ClassTaxonomy::short_names()[d[i].label];
    write_png_rgb(d[i].image, dir / (stem + ".png"));
    write_png_gray(overlay, model.config.image_size, dir / (stem + "_attn_L" + std::to_string(layer) + ".png"));
  }
  std::printf("wrote %zu attention maps for layer %zu\n", n, layer);
  return kOk;
}

int run_export_embed(Command& c, const std::vector<std::string>& argv) {
  c.outputs = {"projection.csv"};
  write_manifest(c, argv);
  const ViTModel model = load_checkpoint(c.checkpoint);
  const Dataset d = eval_set(c, model.config.image_size);
  const std::vector<float> e = embed(model, d, 128);
  Projection method;
  if (c.method == "pca") method = Projection::pca;
  else if (c.method == "tsne") method = Projection::tsne;
  else throw InvalidArgument("--method must be pca or tsne");
  TsneConfig t;
  t.perplexity = c.perplexity;
  t.iterations = c.iterations;
  const auto points = project_embeddings(e, d.size(), model.config.hidden_dim, method, c.common.seed, t);
  std::vector<int> labels;
  for (const Sample& s : d) labels.push_back(s.label);
  write_projection_csv(points, labels, out_path(c, "projection.csv"));
  std::printf("projected %zu embeddings with %s\n", d.size(), c.method.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vision transformer training, distillation and analysis"};
  app.set_version_flag("--version", SDVIT_VERSION);
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  std::vector<std::unique_ptr<Command>> commands;
  auto make = [&](const std::string& name, const std::string& help) -> Command& {
    commands.push_back(std::make_unique<Command>());
    Command& c = *commands.back();
    c.app = app.add_subcommand(name, help);
    add_common(c);
    return c;
  };

  Command& synth = make("synth", "Write a synthetic lesion dataset (PNGs + labels.csv)");
  synth.app->add_option("--n-per-class", synth.data.n_per_class);
  synth.app->add_option("--size", synth.model.image_size, "Image side in pixels");
  synth.app->add_option("--synth-seed", synth.data.synth_seed);
  // --seed is the generator seed for synth.
  synth.app->get_option("--seed")->description("Generator seed (same as --synth-seed)");

  Command& trn = make("train", "Train a model in any regime");
  add_model(trn);
  add_data(trn);
  add_train(trn, true);
  trn.app->add_option("--regime", trn.regime)
      ->check(CLI::IsMember({"plain", "skin_distil", "fcvit", "fcvitprobs", "cascade_step"}));
  trn.app->add_option("--teacher", trn.teacher, "Teacher checkpoint for skin_distil / cascade_step");
  trn.app->add_flag("--per-layer-heads", trn.model.per_layer_heads);
  trn.app->add_option("--layer-weights", trn.train.layer_weights, "fcvit per-layer weights, comma separated");

  Command& dst = make("distil", "Initialize a student from teacher blocks and distil it");
  add_model(dst);
  add_data(dst);
  add_train(dst, false);
  dst.app->add_option("--teacher", dst.teacher, "Teacher checkpoint");
  dst.app->add_option("--keep", dst.keep, "Teacher block indices to copy");

  Command& fcv = make("fcvit", "Train with a classification head after every block");
  add_model(fcv);
  add_data(fcv);
  add_train(fcv, false);
  fcv.app->add_option("--layer-weights", fcv.train.layer_weights, "Per-layer loss weights, uniform when omitted");

  Command& fcp = make("fcvitprobs", "Per-layer heads trained by the M/N/P schedule with KL to the head above");
  add_model(fcp);
  add_data(fcp);
  add_train(fcp, true);

  Command& cas = make("cascade", "Distil depth by depth down to --min-depth");
  add_data(cas);
  add_train(cas, false);
  cas.app->add_option("--teacher", cas.teacher, "Per-layer-head teacher checkpoint")->required();
  cas.app->add_option("--min-depth", cas.min_depth)->check(CLI::PositiveNumber);

  Command& evl = make("eval", "Metrics report on the test split");
  add_data(evl);
  evl.app->add_option("--model", evl.checkpoint)->required();
  evl.app->add_flag("--all", evl.all_samples, "Use every sample instead of the test split");

  Command& bch = make("bench", "Inference throughput");
  add_model(bch);
  bch.app->add_option("--synth-seed", bch.data.synth_seed);
  bch.app->add_option("--models", bch.models, "Comma-separated checkpoints");
  bch.app->add_option("--depths", bch.depths, "Fresh models of these depths when --models is absent");
  bch.app->add_option("--samples", bch.samples)->check(CLI::PositiveNumber);
  bch.app->add_option("--batch", bch.bench_batch)->check(CLI::PositiveNumber);
  bch.app->add_option("--warmup", bch.warmup)->check(CLI::PositiveNumber);
  bch.app->add_option("--reps", bch.reps)->check(CLI::PositiveNumber);

  Command& att = make("export-attn", "Class-token attention maps as grayscale PNGs");
  add_data(att);
  att.app->add_option("--model", att.checkpoint)->required();
  att.app->add_option("--layer", att.layer, "Block index, -1 for the last");
  att.app->add_option("--count", att.count);
  att.app->add_flag("--all", att.all_samples);

  Command& emb = make("export-embed", "2-D projection of class-token embeddings");
  add_data(emb);
  emb.app->add_option("--model", emb.checkpoint)->required();
  emb.app->add_option("--method", emb.method)->check(CLI::IsMember({"pca", "tsne"}));
  emb.app->add_option("--perplexity", emb.perplexity);
  emb.app->add_option("--iterations", emb.iterations);
  emb.app->add_flag("--all", emb.all_samples);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  const std::vector<std::string> args(argv, argv + argc);
  try {
    for (auto& cp : commands) {
      Command& c = *cp;
      if (!c.app->parsed()) continue;
      if (!c.common.config.empty()) cli::apply_json_config(c.app, c.common.config);
      kernels::set_num_threads(c.common.threads);
      const std::string name = c.app->get_name();
      if (name == "synth") {
        if (c.app->get_option("--seed")->count() > 0 && c.app->get_option("--synth-seed")->count() == 0)
          c.data.synth_seed = c.common.seed;
        return run_synth(c, args);
      }
      if (name == "train") return run_train(c, args, parse_regime(c.regime), c.model.per_layer_heads);
      if (name == "distil") return run_distil(c, args);
      if (name == "fcvit") return run_train(c, args, Regime::fcvit, true);
      if (name == "fcvitprobs") return run_train(c, args, Regime::fcvitprobs, true);
      if (name == "cascade") return run_cascade(c, args);
      if (name == "eval") return run_eval(c, args);
      if (name == "bench") return run_bench(c, args);
      if (name == "export-attn") return run_export_attn(c, args);
      if (name == "export-embed") return run_export_embed(c, args);
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const FormatError& e) {
    std::cerr << "bad checkpoint: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "filesystem error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
