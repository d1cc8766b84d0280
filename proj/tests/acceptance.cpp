// End-to-end acceptance run. Prints one PASS/FAIL line per criterion with the
// measured values, and exits non-zero if any criterion fails.
//
//   acceptance            all criteria
//   acceptance 1 4 10     a subset (5 is trained on demand for 6, 7 and 8)

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sdvit/checkpoint.hpp"
#include "sdvit/distillation.hpp"
#include "sdvit/errors.hpp"
#include "sdvit/grad_check.hpp"
#include "sdvit/kernels.hpp"
#include "sdvit/losses.hpp"
#include "sdvit/metrics.hpp"
#include "sdvit/ops.hpp"
#include "sdvit/training.hpp"
#include "sdvit/vit.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace sdvit;
using sdvit::testing::random_tensor;
using sdvit::testing::weighted_sum;

namespace {

const fs::path kWork = fs::temp_directory_path() / "sdvit_acceptance";

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool same_bytes(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)) == 0;
}

bool same_params(const ViTModel& a, const ViTModel& b) {
  auto x = a.named_parameters(), y = b.named_parameters();
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].first != y[i].first || !same_bytes(x[i].second, y[i].second)) return false;
  }
  return true;
}

// The student equals the first `depth` blocks (and matching heads) of the teacher.
bool is_prefix_of(const ViTModel& s, const ViTModel& t) {
  const std::size_t d = s.blocks.size();
  if (d > t.blocks.size()) return false;
  std::vector<Tensor> a{s.patch_proj.weight, s.patch_proj.bias, s.class_token, s.pos_embed, s.final_norm.gamma,
                        s.final_norm.beta};
  std::vector<Tensor> b{t.patch_proj.weight, t.patch_proj.bias, t.class_token, t.pos_embed, t.final_norm.gamma,
                        t.final_norm.beta};
  for (std::size_t i = 0; i < d; ++i) {
    auto x = s.block_parameters(i), y = t.block_parameters(i);
    a.insert(a.end(), x.begin(), x.end());
    b.insert(b.end(), y.begin(), y.end());
  }
  if (s.config.per_layer_heads) {
    for (std::size_t i = 0; i < d; ++i) {
      auto x = s.head_parameters(i), y = t.head_parameters(i);
      a.insert(a.end(), x.begin(), x.end());
      b.insert(b.end(), y.begin(), y.end());
    }
  }
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!same_bytes(a[i], b[i])) return false;
  return true;
}

std::string slurp(const fs::path& f) {
  std::ifstream in(f, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------------------

Verdict c1_param_anchor() {
  double best = 1e9;
  std::uint64_t tp = 0, sp = 0;
  std::string times;
  for (int rep = 0; rep < 3; ++rep) {
    const auto t0 = std::chrono::steady_clock::now();
    ViTModel teacher = build(ViTConfig::paper());
    ViTModel student = init_student_from_teacher(teacher, BlockSelection::parse("0,2,4,7,9,11"));
    const double s = seconds_since(t0);
    best = std::min(best, s);
    tp = param_count(teacher);
    sp = param_count(student);
    times += fmt("%s%.2f", rep ? "/" : "", s);
  }
  const double et = std::abs(double(tp) - 85.85e6) / 85.85e6;
  const double es = std::abs(double(sp) - 43.27e6) / 43.27e6;
  return {et <= 0.005 && es <= 0.005 && best < 1.0,
          fmt("teacher %llu (%.3f%% off 85.85M), student %llu (%.3f%% off 43.27M), construction best %.2fs [%s]",
              (unsigned long long)tp, 100 * et, (unsigned long long)sp, 100 * es, best, times.c_str())};
}

// Each op is checked along random directions, where the central difference is
// well conditioned. The per-element form is also reported: on entries whose
// gradient is tiny next to the loss, f32 rounding noise alone can exceed 1e-2.
Verdict c2_gradients() {
  constexpr float eps = 1e-3f, tol = 1e-2f;
  std::vector<std::pair<std::string, float>> errs;
  float elementwise = 0.0f;
  auto gc = [&](const std::string& name, const ScalarFn& f, std::vector<Tensor> in) {
    errs.emplace_back(name, directional_grad_check(f, in, eps, 8, errs.size() + 1));
    elementwise = std::max(elementwise, grad_check(f, in, eps));
  };
  Tensor a = random_tensor({3, 4}, 1), b = random_tensor({3, 4}, 2), bias4 = random_tensor({4}, 3);
  Tensor m = random_tensor({4, 5}, 4), x3 = random_tensor({2, 3, 4}, 5), bias5 = random_tensor({5}, 6);
  Tensor gamma = random_tensor({4}, 7, 0.5f, 1.5f);
  Tensor z = random_tensor({3, 5}, 8, -2.0f, 2.0f);
  gc("add", [](const auto& in) { return weighted_sum(add(in[0], in[1])); }, {a, b});
  gc("sub", [](const auto& in) { return weighted_sum(sub(in[0], in[1])); }, {a, b});
  gc("mul", [](const auto& in) { return weighted_sum(mul(in[0], in[1])); }, {a, b});
  gc("scale", [](const auto& in) { return weighted_sum(scale(in[0], -1.7f)); }, {a});
  gc("scale_by", [](const auto& in) { return weighted_sum(scale_by(in[0], in[1])); }, {a, Tensor::scalar(0.7f)});
  gc("add_broadcast", [](const auto& in) { return weighted_sum(add_broadcast(in[0], in[1])); }, {a, bias4});
  gc("sum", [](const auto& in) { return sum(mul(in[0], in[0])); }, {a});
  gc("mean", [](const auto& in) { return mean(in[0]); }, {a});
  gc("reshape", [](const auto& in) { return weighted_sum(reshape(in[0], {4, 3})); }, {a});
  gc("matmul", [](const auto& in) { return weighted_sum(matmul(in[0], in[1])); }, {a, m});
  gc("linear", [](const auto& in) { return weighted_sum(linear(in[0], in[1], in[2])); }, {x3, m, bias5});
  gc("gelu", [](const auto& in) { return weighted_sum(gelu(in[0])); }, {random_tensor({3, 4}, 9, -2, 2)});
  gc("layer_norm", [](const auto& in) { return weighted_sum(layer_norm(in[0], in[1], in[2])); }, {x3, gamma, bias4});
  gc("dropout",
     [](const auto& in) {
       std::mt19937_64 rng(5);
       return weighted_sum(dropout(in[0], 0.3f, rng));
     },
     {a});
  gc("softmax", [](const auto& in) { return weighted_sum(softmax(in[0], 2.5f)); }, {z});
  gc("log_softmax", [](const auto& in) { return weighted_sum(log_softmax(in[0], 1.5f)); }, {z});
  gc("prepend_token", [](const auto& in) { return weighted_sum(prepend_token(in[0], in[1])); }, {bias4, x3});
  gc("select_token", [](const auto& in) { return weighted_sum(select_token(in[0], 1)); }, {x3});
  gc("attention", [](const auto& in) { return weighted_sum(multi_head_attention(in[0], in[1], in[2], 2).output); },
     {x3, random_tensor({2, 3, 4}, 10), random_tensor({2, 3, 4}, 11)});
  const std::vector<int> labels{1, 3};
  Tensor logits = random_tensor({2, 4}, 12, -2.0f, 2.0f);
  Tensor soft = softmax(random_tensor({2, 4}, 13), 1.0f).detach();
  Tensor soft2 = softmax(random_tensor({2, 4}, 14), 1.0f).detach();
  gc("cross_entropy", [&](const auto& in) { return cross_entropy(in[0], labels); }, {logits});
  gc("soft_cross_entropy", [&](const auto& in) { return cross_entropy(in[0], soft, 2.0f); }, {logits});
  gc("kl_divergence", [](const auto& in) { return kl_divergence(in[0], in[1]); }, {soft, soft2});
  gc("cosine_distance", [](const auto& in) { return cosine_distance_loss(in[0], in[1]); },
     {random_tensor({3, 5}, 15), random_tensor({3, 5}, 16)});
  Tensor target = random_tensor({2, 4}, 17);
  const float mse_err = directional_grad_check([&](const auto& in) { return mse_loss(in[0], target); },
                                               {random_tensor({2, 4}, 18)}, eps, 8, 99);

  ViTModel model = build(ViTConfig::mini());
  Tensor img = random_tensor({2, 3, 32, 32}, 19, 0.0f, 1.0f);
  const std::vector<int> y{3, 5};
  auto composite = [&](const std::vector<Tensor>& p) {
    ViTModel bound = model;
    auto slots = bound.mutable_parameters();
    for (std::size_t i = 0; i < slots.size(); ++i) *slots[i] = p[i];
    return cross_entropy(forward(bound, img, Mode::eval).final_logits, y);
  };
  const float vit_err = directional_grad_check(composite, model.parameters(), eps, 6, 21);

  auto worst = std::max_element(errs.begin(), errs.end(), [](auto& l, auto& r) { return l.second < r.second; });
  const bool ok = worst->second < tol && mse_err < 1e-3f && vit_err < 5e-2f;
  return {ok, fmt("%zu ops along random directions, worst %s %.1e (< 1e-2); mse %.1e (< 1e-3); mini ViT + CE %.1e "
                  "(< 5e-2); per-element worst %.1e",
                  errs.size() + 1, worst->first.c_str(), worst->second, mse_err, vit_err, elementwise)};
}

Verdict c3_surgery() {
  ViTConfig c;
  c.hidden_dim = 16;
  c.mlp_dim = 32;
  c.num_heads = 2;
  c.per_layer_heads = true;
  c.seed = 3;
  ViTModel m = build(c);
  const bool identity = same_params(init_student_from_teacher(m, BlockSelection::prefix(12)), m);
  bool strip = true;
  ViTModel cur = m.clone();
  while (cur.blocks.size() > 1) {
    ViTModel s = strip_last_block(cur);
    strip = strip && same_params(s, init_student_from_teacher(cur, BlockSelection::prefix(cur.blocks.size() - 1)));
    cur = std::move(s);
  }

  Dataset all = synth_lesions(4, 32, 3);
  auto [tr, te] = stratified_split(all, 0.5, 3);
  TrainConfig tc = TrainConfig::desk();
  tc.epochs = 1;
  tc.eval_every = 0;
  CascadeOptions opts;
  std::size_t checked = 0, prefixes = 0;
  opts.on_init = [&](const ViTModel& s, const ViTModel& t) {
    ++checked;
    prefixes += is_prefix_of(s, t);
  };
  auto entries = cascade_distill(m, tr, te, tc, {}, kWork / "c3", opts);
  const bool chain = checked == 12 && prefixes == 12 && entries.size() == 12;
  return {identity && strip && chain,
          fmt("identity %s, strip == prefix at 11 depths %s, cascade prefix equality %zu/%zu", identity ? "yes" : "no",
              strip ? "yes" : "no", prefixes, checked)};
}

Verdict c4_losses() {
  Tensor logits = random_tensor({5, 8}, 41, -3.0f, 3.0f);
  const std::vector<int> labels{0, 7, 3, 3, 5};
  const bool ce_same = same_bytes(cross_entropy(logits, one_hot(labels, 8)), cross_entropy(logits, labels));

  Tensor p = softmax(random_tensor({5, 8}, 42), 1.0f).detach();
  const float kl = kl_divergence(p, p).item();

  std::vector<Tensor> layers(4, logits);
  const std::vector<std::size_t> active{0, 1, 2, 3};
  const float probs = fcvitprobs_loss(layers, labels, active).total.item();
  const float top = cross_entropy(logits, labels).item();

  ViTConfig c;
  c.num_layers = 4;
  ViTModel teacher = build(c);
  ViTModel student = init_student_from_teacher(teacher, BlockSelection{{0, 3}});
  for (float& v : student.blocks[1].fc1.weight.data()) v *= 1.5f;
  Tensor x = random_tensor({3, 3, 32, 32}, 43, 0.0f, 1.0f);
  ForwardOutput t;
  {
    NoGradGuard ng;
    t = forward(teacher, x, Mode::eval);
  }
  ForwardOutput s = forward(student, x, Mode::eval);
  LossSpec spec{1.0f, 0.5f, 0.3f, 0.2f, 0.0f, 2.0f};
  const std::vector<std::size_t> align{0, 3};
  LossBreakdown l = skin_distil_loss(s, t, std::vector<int>{0, 5, 2}, spec, align);
  const float expect =
      spec.w_task * l.task + spec.w_distil_ce * l.distil_ce + spec.w_cosine * l.cosine + spec.w_mse * l.mse;
  const float total = l.total.item();

  const bool ok = ce_same && std::abs(kl) <= 1e-6f && std::abs(probs - top) <= 1e-6f && total == expect;
  return {ok, fmt("one-hot CE bitwise %s; KL(p,p) %.1e; fcvitprobs - top CE %.1e; skin_distil total - sum %.1e",
                  ce_same ? "yes" : "no", kl, probs - top, total - expect)};
}

// Shared state for the training criteria.
struct Desk {
  Dataset train, test;
  std::optional<ViTModel> teacher;
  MetricsReport teacher_report;
  double seconds = 0.0;
  std::optional<ViTModel> student;
};

Desk& desk() {
  static Desk d = [] {
    Desk d;
    auto [tr, te] = stratified_split(synth_lesions(64, 32, 7), 0.8, 7);
    d.train = std::move(tr);
    d.test = std::move(te);
    return d;
  }();
  return d;
}

const ViTModel& desk_teacher() {
  Desk& d = desk();
  if (!d.teacher) {
    ViTConfig vc = ViTConfig::mini();
    vc.seed = 7;
    ViTModel m = build(vc);
    TrainConfig tc = TrainConfig::desk();
    tc.seed = 7;
    tc.eval_every = 0;
    const auto t0 = std::chrono::steady_clock::now();
    train(m, nullptr, d.train, d.test, tc);
    d.seconds = seconds_since(t0);
    d.teacher_report = evaluate(m, d.test, 128);
    d.teacher = std::move(m);
  }
  return *d.teacher;
}

Verdict c5_convergence() {
  desk_teacher();
  const MetricsReport& r = desk().teacher_report;
  return {r.weighted.accuracy >= 0.90 && r.bma >= 0.85,
          fmt("12-layer mini, 10 epochs, %zu train / %zu test: accuracy %.3f (>= 0.90), BMA %.3f (>= 0.85), %.0fs",
              desk().train.size(), desk().test.size(), r.weighted.accuracy, r.bma, desk().seconds)};
}

const BlockSelection kKeep{{0, 2, 4, 7, 9, 11}};

ViTModel train_student(bool distil, std::uint64_t seed) {
  const ViTModel& t = desk_teacher();
  ViTModel s = init_student_from_teacher(t, kKeep);
  TrainConfig tc = TrainConfig::desk();
  tc.seed = seed;
  tc.eval_every = 0;
  if (distil) {
    tc.regime = Regime::skin_distil;
    tc.alignment = kKeep.keep_indices;
  }
  LossSpec spec;  // task 1, soft-target CE 0.5
  train(s, distil ? &t : nullptr, desk().train, desk().test, tc, spec);
  return s;
}

Verdict c6_retention() {
  Desk& d = desk();
  if (!d.student) d.student = train_student(true, 7);
  const double tb = (desk_teacher(), d.teacher_report.bma);
  const double sb = evaluate(*d.student, d.test, 128).bma;
  const double ret = sb / tb;
  return {ret >= 0.95, fmt("teacher BMA %.3f, 6-layer student BMA %.3f, retention %.1f%% (>= 95%%)", tb, sb, 100 * ret)};
}

Verdict c7_guided_vs_plain() {
  double guided = 0.0, plain = 0.0;
  std::string per;
  for (std::uint64_t seed : {1, 2, 3}) {
    const double g = evaluate(train_student(true, seed), desk().test, 128).bma;
    const double p = evaluate(train_student(false, seed), desk().test, 128).bma;
    guided += g / 3;
    plain += p / 3;
    per += fmt("%s%.3f/%.3f", seed > 1 ? " " : "", g, p);
  }
  return {guided >= plain - 0.01, fmt("mean BMA guided %.3f vs task-only %.3f (need >= %.3f); per seed guided/task-only %s",
                                      guided, plain, plain - 0.01, per.c_str())};
}

Verdict c8_throughput() {
  Desk& d = desk();
  const ViTModel& t = desk_teacher();
  if (!d.student) d.student = train_student(true, 7);
  Dataset pool;
  while (pool.size() < 256) pool.insert(pool.end(), d.test.begin(), d.test.end());
  pool.resize(256);
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Tensor images = batch_images(pool, idx);
  const BenchReport b12 = bench_throughput(t, images, 32, 2, 5);
  const BenchReport b6 = bench_throughput(*d.student, images, 32, 2, 5);
  const double gain = b6.items_per_second / b12.items_per_second - 1.0;
  return {gain >= 0.40, fmt("median items/s at %d thread(s): 12 layers %.0f, 6 layers %.0f, +%.0f%% (>= 40%%)",
                            b12.threads, b12.items_per_second, b6.items_per_second, 100 * gain)};
}

Verdict c9_cascade() {
  Desk& d = desk();
  ViTConfig vc = ViTConfig::mini();
  vc.seed = 7;
  vc.per_layer_heads = true;
  ViTModel root = build(vc);
  TrainConfig tc = TrainConfig::desk();
  tc.seed = 7;
  tc.eval_every = 0;
  tc.regime = Regime::fcvit;
  train(root, nullptr, d.train, d.test, tc);

  const fs::path out = kWork / "c9";
  fs::remove_all(out);
  TrainConfig cc = TrainConfig::desk();
  cc.seed = 7;
  cc.eval_every = 0;
  auto entries = cascade_distill(root, d.train, d.test, cc, {}, out);

  std::size_t on_disk = 0;
  for (std::size_t depth = 1; depth <= 12; ++depth) on_disk += fs::exists(out / fmt("cascade_L%zu.sdvt", depth));
  bool decreasing = entries.size() == 12;
  for (std::size_t i = 1; i < entries.size(); ++i) decreasing = decreasing && entries[i].params < entries[i - 1].params;

  std::ifstream csv(out / "cascade.csv");
  std::string header, line;
  std::getline(csv, header);
  std::size_t rows = 0;
  while (std::getline(csv, line)) rows += !line.empty();
  const bool table = header == "depth,params,bma,accuracy" && rows == 12;

  double a12 = 0.0, a6 = 0.0;
  for (const CascadeEntry& e : entries) {
    if (e.depth == 12) a12 = e.accuracy;
    if (e.depth == 6) a6 = e.accuracy;
  }
  const bool ok = on_disk == 12 && decreasing && table && a6 >= 0.9 * a12;
  return {ok, fmt("%zu checkpoints, params %llu -> %llu strictly decreasing %s, cascade.csv %zu rows, "
                  "accuracy depth 12 %.3f, depth 6 %.3f (>= %.3f)",
                  on_disk, entries.empty() ? 0ULL : (unsigned long long)entries.front().params,
                  entries.empty() ? 0ULL : (unsigned long long)entries.back().params, decreasing ? "yes" : "no", rows,
                  a12, a6, 0.9 * a12)};
}

Verdict c10_metric_oracles() {
  std::mt19937_64 rng(10);
  std::size_t mismatches = 0;
  double worst = 0.0;
  auto diff = [&](double a, double b) {
    worst = std::max(worst, std::abs(a - b));
    if (std::abs(a - b) > 1e-12) ++mismatches;
  };
  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t n = 1 + rng() % 200;
    std::vector<int> preds(n), labels(n);
    // Skewed labels so some classes are empty or never predicted.
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(rng() % (1 + rng() % 8));
      preds[i] = rng() % 3 == 0 ? labels[i] : static_cast<int>(rng() % 8);
    }
    const MetricsReport r = make_report(preds, labels, 8);

    double recall_sum = 0.0, wp = 0.0, wr = 0.0, wf = 0.0;
    std::size_t present = 0, correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += preds[i] == labels[i];
    for (int c = 0; c < 8; ++c) {
      std::size_t tp = 0, support = 0, predicted = 0;
      for (std::size_t i = 0; i < n; ++i) {
        tp += preds[i] == c && labels[i] == c;
        support += labels[i] == c;
        predicted += preds[i] == c;
      }
      const double prec = predicted ? double(tp) / predicted : 0.0;
      const double rec = support ? double(tp) / support : 0.0;
      const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
      if (support) {
        ++present;
        recall_sum += rec;
      }
      wp += prec * support / n;
      wr += rec * support / n;
      wf += f1 * support / n;
    }
    diff(r.bma, recall_sum / present);
    diff(r.weighted.accuracy, double(correct) / n);
    diff(r.weighted.precision, wp);
    diff(r.weighted.recall, wr);
    diff(r.weighted.f1, wf);
    if (r.weighted.recall != r.weighted.accuracy) ++mismatches;  // identity, not approximate

    std::uint64_t tp = 0, fn = 0, tn = 0, fp = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool truth = ClassTaxonomy::malignant(labels[i]), pred = ClassTaxonomy::malignant(preds[i]);
      tp += truth && pred;
      fn += truth && !pred;
      tn += !truth && !pred;
      fp += !truth && pred;
    }
    if (r.cancer.tp != tp || r.cancer.fn != fn || r.cancer.tn != tn || r.cancer.fp != fp) ++mismatches;
    const double bp = tp + fp ? double(tp) / (tp + fp) : 0.0, br = tp + fn ? double(tp) / (tp + fn) : 0.0;
    diff(r.cancer.accuracy, double(tp + tn) / n);
    diff(r.cancer.precision, bp);
    diff(r.cancer.recall, br);
    diff(r.cancer.f1, bp + br > 0 ? 2 * bp * br / (bp + br) : 0.0);
  }
  return {mismatches == 0, fmt("1000 instances, %zu mismatches, worst |diff| %.1e, weighted recall == accuracy bitwise",
                               mismatches, worst)};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SDVIT_CLI) + " " + args + " > " + (kWork / "cli.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// history.csv without its wall-clock column.
std::string history_without_seconds(const fs::path& path) {
  std::ifstream in(path);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

Verdict c11_determinism() {
  const fs::path a = kWork / "c11a", b = kWork / "c11b";
  fs::remove_all(a);
  fs::remove_all(b);
  const int ra = run_cli("train --threads 1 --out " + a.string());
  const int rb = run_cli("train --config " + (a / "manifest.json").string() + " --out " + b.string());
  if (ra != 0 || rb != 0) return {false, fmt("CLI exit codes %d and %d", ra, rb)};
  const std::string ha = history_without_seconds(a / "history.csv");
  const bool hist = !ha.empty() && ha == history_without_seconds(b / "history.csv");
  const std::string ca = slurp(a / "final.sdvt");
  const bool ckpt = !ca.empty() && ca == slurp(b / "final.sdvt");
  std::size_t lines = std::count(ha.begin(), ha.end(), '\n');
  return {hist && ckpt, fmt("second run replayed from the first run's manifest: history.csv (%zu lines, seconds "
                            "masked) identical %s, final.sdvt (%zu bytes) identical %s",
                            lines, hist ? "yes" : "no", ca.size(), ckpt ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<const char*, std::function<Verdict()>>> criteria{
      {1, {"ViT-B/16 parameter counts", c1_param_anchor}},
      {2, {"gradient correctness", c2_gradients}},
      {3, {"weight surgery invariants", c3_surgery}},
      {4, {"loss identities", c4_losses}},
      {5, {"end-to-end convergence", c5_convergence}},
      {6, {"distillation retention", c6_retention}},
      {7, {"teacher-guided vs task-only student", c7_guided_vs_plain}},
      {8, {"throughput direction", c8_throughput}},
      {9, {"cascade output structure", c9_cascade}},
      {10, {"metric oracles", c10_metric_oracles}},
      {11, {"determinism", c11_determinism}},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  kernels::set_num_threads(1);
  fs::create_directories(kWork);

  int failed = 0;
  for (const auto& [id, entry] : criteria) {
    if (!wanted.empty() && !wanted.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = entry.second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("criterion %2d %s  %s: %s (%.1fs)\n", id, v.pass ? "PASS" : "FAIL", entry.first, v.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
