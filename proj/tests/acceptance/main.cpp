// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. Criteria 5 and 6 train real models and take tens
// of minutes; use --criteria to run a subset.

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <random>
#include <sstream>

#include "gradcheck.hpp"
#include "metric_reference.hpp"
#include "oracles.hpp"
#include "pcnet/core/errors.hpp"
#include "pcnet/data/image_io.hpp"
#include "pcnet/data/synthetic.hpp"
#include "pcnet/eval/metrics.hpp"
#include "pcnet/head/decoder.hpp"
#include "pcnet/iimc/correlation.hpp"
#include "pcnet/nn/ops.hpp"
#include "pcnet/pipeline/commands.hpp"
#include "pcnet/she/adapter.hpp"
#include "pcnet/she/estimator.hpp"
#include "pcnet/she/geometry.hpp"
#include "pcnet/she/pretrain.hpp"
#include "temp_dir.hpp"
#include "toy_config.hpp"

using namespace pcnet;
namespace pt = pcnet::testing;
namespace mref = ::testing::ref;
using nn::Tensor;
using pt::Mat;
using pt::random_tensor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back(std::string(ok ? "" : "FAILED ") + what);
  }
};

std::string num(double v, const char* f = "%.3g") {
  char buf[48];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Every regular file under root, relative path -> bytes.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_bytes(e.path());
  return out;
}

Mat tokens(const Tensor& t, int n = 0) {
  const auto s = t.shape();
  Mat out(s.h * s.w, std::vector<double>(s.c));
  for (int c = 0; c < s.c; ++c)
    for (int p = 0; p < s.h * s.w; ++p) out[p][c] = t.at(n, c, p / s.w, p % s.w);
  return out;
}

Mat rows(const Tensor& w) {
  const auto s = w.shape();
  Mat out(s.n, std::vector<double>(s.c));
  for (int o = 0; o < s.n; ++o)
    for (int i = 0; i < s.c; ++i) out[o][i] = w.at(o, i, 0, 0);
  return out;
}

double max_diff(const Tensor& got, const Mat& want) {
  const auto s = got.shape();
  double worst = 0;
  for (int p = 0; p < s.h * s.w; ++p)
    for (int c = 0; c < s.c; ++c) worst = std::max(worst, std::abs(got.at(0, c, p / s.w, p % s.w) - want[p][c]));
  return worst;
}

iimc::AttentionParams random_attention(int cq, int ckv, int dk, std::mt19937_64& rng) {
  return {random_tensor({dk, cq, 1, 1}, rng), random_tensor({dk, ckv, 1, 1}, rng),
          random_tensor({dk, ckv, 1, 1}, rng)};
}

// ---------------------------------------------------------------------------

Outcome geometry_suite() {
  Timer timer;
  Outcome o;
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> jitter(-20, 20);
  const std::array<Point2, 4> base = {Point2{0, 0}, {127, 0}, {127, 127}, {0, 127}};
  double worst = 0;
  int solved = 0;
  while (solved < 1000) {
    std::array<Point2, 4> src, dst;
    for (int j = 0; j < 4; ++j) {
      src[j] = {base[j].x + jitter(rng), base[j].y + jitter(rng)};
      dst[j] = {base[j].x + jitter(rng), base[j].y + jitter(rng)};
    }
    const Homography h = she::solve_dlt(src, dst);
    for (int j = 0; j < 4; ++j) {
      const Point2 p = apply_homography(h, src[j]);
      worst = std::max(worst, std::hypot(p.x - dst[j].x, p.y - dst[j].y));
    }
    ++solved;
  }
  o.require(worst < 1e-6, "1000 DLT solves, max corner reprojection " + num(worst) + " px");

  std::uniform_real_distribution<double> u(0, 1), d(-4, 4);
  double warp_worst = 0;
  bool masks = true;
  for (int t = 0; t < 100; ++t) {
    Image img(1, 16, 16);
    for (double& v : img.data()) v = u(rng);
    CornerDisplacement cd;
    for (auto& p : cd.d) p = {d(rng), d(rng)};
    const Homography h = she::displacement_to_homography(cd, 16, 16);
    const she::WarpResult got = she::warp_image(img, h);
    const auto [want, valid] = pt::brute_force_warp(img, h.matrix());
    masks = masks && got.valid == valid;
    for (std::size_t i = 0; i < want.size(); ++i)
      warp_worst = std::max(warp_worst, std::abs(got.warped.data()[i] - want.data()[i]));
  }
  o.require(warp_worst < 1e-6 && masks,
            "warp vs per-pixel oracle on 100 homographies, max diff " + num(warp_worst) +
                (masks ? ", valid masks equal" : ", valid masks differ"));
  const double secs = timer.seconds();
  o.require(secs < 30, "runtime " + num(secs) + " s (limit 30)");
  return o;
}

Outcome oracle_suite() {
  Outcome o;
  std::mt19937_64 rng(202);
  auto sig = [](double x) { return 1 / (1 + std::exp(-x)); };

  // Adapter composition and semantic gate, 4x4 = 16 tokens.
  double adapter_worst = 0, gate_worst = 0;
  for (int t = 0; t < 20; ++t) {
    nn::ParameterStore store;
    she::init_adapter(store, "a", 5, 6, 3, rng);
    for (double& v : store.get("a.up").values()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    const she::AdapterParams p = she::AdapterParams::from(store, "a");
    const Tensor f = random_tensor({1, 5, 4, 4}, rng), fs = random_tensor({1, 6, 4, 4}, rng);
    const Tensor out = she::s_adapter_forward(f, fs, p);
    const Tensor x = random_tensor({1, 3, 4, 4}, rng), y = random_tensor({1, 6, 4, 4}, rng);
    const Tensor g = she::semantic_gate(x, y);
    for (int q = 0; q < 16; ++q) {
      const int yy = q / 4, xx = q % 4;
      double mean_y = 0;
      for (int c = 0; c < 6; ++c) mean_y += y.at(0, c, yy, xx) / 6;
      for (int c = 0; c < 3; ++c)
        gate_worst = std::max(gate_worst, std::abs(g.at(0, c, yy, xx) - x.at(0, c, yy, xx) * sig(mean_y)));
      std::vector<double> down(3), sem(3);
      for (int a = 0; a < 3; ++a) {
        for (int c = 0; c < 5; ++c) down[a] += p.dn.at(a, c, 0, 0) * f.at(0, c, yy, xx);
        for (int c = 0; c < 6; ++c) sem[a] += p.dn_s.at(a, c, 0, 0) * fs.at(0, c, yy, xx);
      }
      const double gate = sig((sem[0] + sem[1] + sem[2]) / 3);
      for (int c = 0; c < 5; ++c) {
        double v = 0;
        for (int a = 0; a < 3; ++a) v += p.up.at(c, a, 0, 0) * std::max(0.0, down[a] * gate);
        adapter_worst = std::max(adapter_worst, std::abs(out.at(0, c, yy, xx) - v));
      }
    }
  }
  o.require(adapter_worst < 1e-6, "adapter composition oracle max diff " + num(adapter_worst));
  o.require(gate_worst < 1e-6, "semantic gate oracle max diff " + num(gate_worst));

  // Attention, inter-modal and intra-modal blocks; 4x8 = 32 tokens.
  double att = 0, inter = 0, intra = 0, rowsum = 0;
  for (int t = 0; t < 20; ++t) {
    const iimc::AttentionParams p = random_attention(4, 3, 4, rng);
    const Tensor q = random_tensor({1, 4, 4, 8}, rng), kv = random_tensor({1, 3, 2, 4}, rng);
    Mat weights;
    att = std::max(att, max_diff(iimc::attention_correlate(q, kv, p),
                                 pt::attention_oracle(tokens(q), tokens(kv), rows(p.pq), rows(p.pk),
                                                           rows(p.pv), &weights)));
    const Tensor w = iimc::attention_weights(q, kv, p);
    const auto ws = w.shape();
    for (int i = 0; i < ws.c; ++i) {
      double s = 0;
      for (int j = 0; j < ws.h; ++j) s += w.at(0, i, j, 0);
      rowsum = std::max(rowsum, std::abs(s - 1));
    }

    const iimc::AttentionParams pi = random_attention(4, 4, 4, rng);
    const Tensor fr = random_tensor({1, 4, 4, 8}, rng), ft = random_tensor({1, 4, 4, 8}, rng);
    const Tensor map = random_tensor({1, 1, 4, 8}, rng, 0, 1), gate = random_tensor({1, 1, 4, 8}, rng, 0, 1);
    Mat masked = tokens(fr);
    for (int k = 0; k < 32; ++k)
      for (double& v : masked[k]) v *= map.values()[k] * gate.values()[k];
    const Tensor got_inter = iimc::inter_modal_correlate(fr, ft, map, gate, pi);
    const Mat want_inter = pt::attention_oracle(masked, tokens(ft), rows(pi.pq), rows(pi.pk), rows(pi.pv));
    inter = std::max(inter, max_diff(got_inter, want_inter));

    Mat sum = tokens(fr);
    for (int k = 0; k < 32; ++k)
      for (int c = 0; c < 4; ++c) sum[k][c] += want_inter[k][c];
    intra = std::max(intra, max_diff(iimc::intra_modal_correlate(fr, got_inter, pi),
                                     pt::attention_oracle(sum, sum, rows(pi.pq), rows(pi.pk), rows(pi.pv))));
  }
  o.require(att < 1e-6, "attention block oracle max diff " + num(att));
  o.require(inter < 1e-6, "inter-modal oracle max diff " + num(inter));
  o.require(intra < 1e-6, "intra-modal oracle max diff " + num(intra));
  o.require(rowsum < 1e-6, "softmax row sums within " + num(rowsum) + " of 1");
  return o;
}

Outcome gradient_suite() {
  Timer timer;
  Outcome o;
  std::mt19937_64 rng(303);
  double adapter = 0, attention = 0, loss = 0, decoder = 0, warp = 0;

  {
    nn::ParameterStore store;
    she::init_adapter(store, "a", 3, 4, 2, rng);
    for (double& v : store.get("a.up").values()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    const she::AdapterParams p = she::AdapterParams::from(store, "a");
    const Tensor f = random_tensor({2, 3, 4, 4}, rng), fs = random_tensor({2, 4, 2, 2}, rng);
    auto fn = [&] { return pt::probe(she::s_adapter_forward(f, fs, p)); };
    for (Tensor t : {f, fs, p.dn, p.dn_s, p.up}) adapter = std::max(adapter, pt::gradient_error(fn, t, 1e-6));
  }
  {
    const iimc::AttentionParams p = random_attention(4, 3, 4, rng);
    const Tensor q = random_tensor({1, 4, 4, 4}, rng), kv = random_tensor({1, 3, 4, 4}, rng);
    auto fn = [&] { return pt::probe(iimc::attention_correlate(q, kv, p)); };
    for (Tensor t : {q, kv, p.pq, p.pk, p.pv}) attention = std::max(attention, pt::gradient_error(fn, t, 1e-6));
  }
  {
    std::bernoulli_distribution coin(0.35);
    for (int t = 0; t < 5; ++t) {
      const Tensor logits = random_tensor({1, 1, 8, 8}, rng, -3, 3);
      std::vector<double> g(64);
      for (double& v : g) v = coin(rng);
      const Tensor gt = Tensor::from({1, 1, 8, 8}, g);
      auto fn = [&] { return head::bce_dice_loss(logits, gt); };
      loss = std::max(loss, pt::gradient_error(fn, logits, 1e-6));
    }
  }
  {
    nn::ParameterStore store;
    const std::array<int, 4> ch{3, 4, 4, 5};
    head::Decoder::init(store, "dec", ch, 4, rng);
    const head::Decoder dec(store, "dec");
    std::array<Tensor, 4> levels;
    for (int i = 0; i < 4; ++i) levels[i] = random_tensor({1, ch[i], 8 >> i, 8 >> i}, rng);
    auto fn = [&] { return pt::probe(dec.decode(levels)); };
    for (auto& [name, entry] : store.entries())
      decoder = std::max(decoder, pt::gradient_error(fn, entry.tensor, 1e-6));
    for (const Tensor& l : levels) decoder = std::max(decoder, pt::gradient_error(fn, l, 1e-6));
  }
  {
    // Smooth image; homography parameterized by corner displacements.
    Image img(1, 32, 32);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) img.at(0, y, x) = 0.5 + 0.3 * std::sin(0.3 * x + 0.1 * y) + 0.2 * std::cos(0.2 * y);
    const Tensor src = she::image_to_tensor(img);
    std::uniform_int_distribution<int> pick(6, 25);
    for (int t = 0; t < 5; ++t) {
      const Tensor d = random_tensor({1, 8, 1, 1}, rng, -2, 2);
      std::vector<double> mask(32 * 32, 0.0);
      for (int k = 0; k < 40; ++k) mask[pick(rng) * 32 + pick(rng)] = 1.0;
      const Tensor m = Tensor::from({1, 1, 32, 32}, mask);
      auto fn = [&] {
        return nn::sum_all(nn::mul(she::warp_tensor(src, she::dlt_from_displacement(d, 32, 32, false), 32, 32).warped, m));
      };
      warp = std::max(warp, pt::gradient_error(fn, d, 1e-4));
    }
  }
  o.require(adapter < 1e-4, "S-Adapter " + num(adapter));
  o.require(attention < 1e-4, "attention " + num(attention));
  o.require(loss < 1e-4, "bce_dice_loss " + num(loss));
  o.require(decoder < 1e-4, "decoder " + num(decoder));
  o.require(warp < 1e-4, "warp w.r.t. corner displacements (h = 1e-4 px) " + num(warp));
  const double secs = timer.seconds();
  o.require(secs < 300, "runtime " + num(secs) + " s (limit 300)");
  return o;
}

Outcome metric_suite() {
  Outcome o;
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<int> side(4, 32);
  std::uniform_real_distribution<double> u(0, 1);
  double worst = 0;
  for (int t = 0; t < 200; ++t) {
    const int h = side(rng), w = side(rng);
    const double density = u(rng);
    mref::Grid pg(h, std::vector<double>(w)), gg(h, std::vector<double>(w));
    Image p(1, h, w), g(1, h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        gg[y][x] = g.at(0, y, x) = u(rng) < density ? 1 : 0;
        pg[y][x] = p.at(0, y, x) = u(rng);
      }
    worst = std::max({worst, std::abs(eval::e_measure(p, g) - mref::e_measure(pg, gg)),
                      std::abs(eval::s_measure(p, g) - mref::s_measure(pg, gg)),
                      std::abs(eval::f_measure(p, g) - mref::f_measure(pg, gg))});
  }
  o.require(worst < 1e-9, "200 random instances vs reference, max diff " + num(worst));

  double perfect = 0;
  for (int t = 0; t < 50; ++t) {
    Image g(1, side(rng), side(rng));
    for (double& v : g.data()) v = u(rng) < 0.4;
    g.data()[0] = 1;
    g.data()[1] = 0;
    const eval::Scores s = eval::score_image(g, g);
    perfect = std::max({perfect, std::abs(s.e - 1), std::abs(s.s - 1), std::abs(s.f - 1)});
  }
  o.require(perfect < 1e-9, "perfect predictions score 1 within " + num(perfect));

  Image gt(1, 2, 2, 0.0), pred(1, 2, 2, 0.0);
  gt.at(0, 0, 0) = 1;
  pred.at(0, 0, 0) = pred.at(0, 0, 1) = 1;
  const double f = eval::f_measure(pred, gt);
  o.require(num(f, "%.6f") == "0.565217" && f == 1.3 * 0.5 / (0.3 * 0.5 + 1),
            "hand F example " + num(f, "%.6f"));
  return o;
}

// ---------------------------------------------------------------------------

struct Workspace {
  fs::path root;
  std::optional<fs::path> estimator;  // pretrained at the toy-run estimator options
};

RunConfig pretrain_config(const fs::path& root) {
  RunConfig c;
  c.synth_count = 2000;
  c.synth_image_size = 128;
  c.estimator_size = 128;
  c.pretrain_epochs = 20;
  c.rng_seed = 11;
  c.pretrain_root = (root / "pretrain_data").string();
  return c;
}

Outcome estimator_pretraining(Workspace& ws, const pipeline::LogFn& log) {
  Timer timer;
  Outcome o;
  const RunConfig c = pretrain_config(ws.root);
  pipeline::cmd_synth(c, c.pretrain_root, log);
  const pipeline::PretrainResult r = pipeline::cmd_pretrain(c, ws.root / "pretrain", log);
  ws.estimator = r.checkpoint;
  const she::EstimatorEval& e = r.report.final;
  std::string per_iter;
  for (double v : e.per_iteration) per_iter += (per_iter.empty() ? "" : " ") + num(v, "%.2f");
  o.require(e.final_error < 0.25 * e.identity_error,
            "hold-out corner error " + num(e.final_error) + " px vs identity " + num(e.identity_error) +
                " px (ratio " + num(e.final_error / e.identity_error) + ", limit 0.25); per iteration " + per_iter);
  o.require(e.monotone_fraction >= 0.9,
            "non-increasing across iterations on " + num(100 * e.monotone_fraction) + "% of " +
                std::to_string(e.sample_errors.size()) + " hold-out samples (limit 90%)");
  // Known (8, 0) translation: the mean corner error must strictly decrease.
  {
    data::ToySceneSpec spec;
    spec.image_size = 128;
    spec.n_objects = 2;
    spec.misalign = data::MisalignParams::none();
    data::Sample scene = data::generate_toy_scene(spec, 4242);
    const Homography h = Homography::translation(8, 0);
    scene.thermal = she::warp_image(scene.thermal, h).warped;
    scene.true_homography = h;
    const pipeline::Checkpoint ck = pipeline::load_checkpoint(r.checkpoint);
    const she::HomographyEstimator est(ck.params, she::EstimatorOptions::from(ck.config));
    const she::EstimatorEval probe = she::evaluate_estimator(est, {she::make_estimator_pair(scene, 128)});
    bool strict = true;
    std::string seq;
    for (std::size_t k = 1; k < probe.per_iteration.size(); ++k) {
      if (k > 1) strict = strict && probe.per_iteration[k] < probe.per_iteration[k - 1];
      seq += (seq.empty() ? "" : " ") + num(probe.per_iteration[k], "%.3f");
    }
    o.require(strict, "translation (8, 0) probe strictly decreasing over iterations 1..K: " + seq);
  }
  const double secs = timer.seconds();
  o.require(secs < 3600, "runtime " + num(secs) + " s (limit 3600)");
  return o;
}

RunConfig toy_run_config(const fs::path& root) {
  RunConfig c = pretrain_config(root);
  c.input_size = 128;
  c.backbone_channels = {16, 24, 32, 48};
  c.attention_dim = 16;
  c.semantic_channels = 16;
  c.decoder_channels = 24;
  c.max_tokens_side = 16;
  c.lr = 1e-3;
  c.batch_size = 4;
  c.epochs = 30;
  c.checkpoint_every = 30;
  c.synth_image_size = 128;
  c.train_root = (root / "toy_train").string();
  c.test_root = (root / "toy_test").string();
  return c;
}

Outcome end_to_end(Workspace& ws, const pipeline::LogFn& log) {
  Outcome o;
  if (!ws.estimator) {
    const RunConfig c = pretrain_config(ws.root);
    pipeline::cmd_synth(c, c.pretrain_root, log);
    ws.estimator = pipeline::cmd_pretrain(c, ws.root / "pretrain", log).checkpoint;
  }
  Timer timer;
  RunConfig c = toy_run_config(ws.root);
  RunConfig train_data = c, test_data = c;
  train_data.synth_count = 500;
  train_data.rng_seed = 21;
  test_data.synth_count = 100;
  test_data.rng_seed = 22;
  pipeline::cmd_synth(train_data, c.train_root, log);
  pipeline::cmd_synth(test_data, c.test_root, log);

  pipeline::cmd_train(c, *ws.estimator, std::nullopt, ws.root / "toy_full", log);
  const eval::EvalReport full = pipeline::cmd_eval(ws.root / "toy_full" / "final.ckpt", c.test_root,
                                                   ws.root / "toy_full" / "report.tsv", std::nullopt, {}, log);
  RunConfig ablated = c;
  ablated.ablation.disable_she = true;
  pipeline::cmd_train(ablated, *ws.estimator, std::nullopt, ws.root / "toy_no_she", log);
  const eval::EvalReport no_she = pipeline::cmd_eval(ws.root / "toy_no_she" / "final.ckpt", c.test_root,
                                                     ws.root / "toy_no_she" / "report.tsv", std::nullopt, {}, log);
  const eval::Scores& f = full.aggregate.mean;
  const eval::Scores& n = no_she.aggregate.mean;
  o.require(f.s >= 0.80, "held-out S_m " + num(f.s, "%.4f") + " (limit 0.80)");
  o.require(f.f >= 0.70, "held-out F_m " + num(f.f, "%.4f") + " (limit 0.70), E_m " + num(f.e, "%.4f"));
  o.require(n.s < f.s, "without SHE S_m " + num(n.s, "%.4f") + ", F_m " + num(n.f, "%.4f") +
                           " (must be below the full model)");
  const double secs = timer.seconds();
  o.require(secs < 7200, "runtime " + num(secs) + " s (limit 7200)");
  return o;
}

Outcome freeze_invariants(Workspace& ws) {
  Outcome o;
  RunConfig c = pt::toy_config();
  // Estimator: the pretrained one when available (its options must match).
  pipeline::Checkpoint est;
  if (ws.estimator) {
    est = pipeline::load_checkpoint(*ws.estimator);
    const RunConfig& e = est.config;
    c.estimator_size = e.estimator_size;
    c.estimator_channels = e.estimator_channels;
    c.estimator_hidden = e.estimator_hidden;
    c.estimator_iterations = e.estimator_iterations;
    c.corr_radius = e.corr_radius;
    c.input_size = e.estimator_size;
    c.synth_image_size = e.estimator_size;
  } else {
    est.kind = "estimator";
    est.config = c;
    std::mt19937_64 rng(7);
    she::init_estimator(est.params, she::EstimatorOptions::from(c), rng);
    std::uniform_real_distribution<double> u(-0.01, 0.01);
    for (double& v : est.params.get("estimator.head.w").values()) v = u(rng);
  }
  c.synth_count = 24;
  c.batch_size = 1;
  pipeline::Checkpoint state = pipeline::init_training_state(c, est);
  std::vector<pipeline::PreparedSample> samples;
  for (const data::Sample& s : pipeline::synthesize_dataset(c))
    samples.push_back(pipeline::prepare_sample(s, c.input_size, c.ablation));

  // Zero adapters: the adapted path reproduces the plain estimator bitwise.
  {
    nn::NoGradGuard g;
    const pipeline::Batch b = pipeline::make_batch(samples, {0, 1, 2, 3});
    const pipeline::ModelOutput out = pipeline::PCNet(state.params, c).forward(b.rgb, b.thermal);
    const she::EstimatorOptions eo = she::EstimatorOptions::from(c);
    const she::EstimatorRun plain = she::HomographyEstimator(state.params, eo).run(
        she::working_input(b.rgb, eo.size), she::working_input(b.thermal, eo.size), Tensor{});
    const Tensor h = she::lift_homography(plain.final(), eo.size, c.input_size, c.input_size, c.input_size,
                                          c.input_size, false);
    o.require(h.values() == out.homography.values(),
              "zero-initialized adapters: adapted and plain homographies bitwise equal on 4 samples");
  }

  std::map<std::string, std::vector<double>> before;
  for (const auto& [name, entry] : state.params.entries())
    if (entry.frozen) before[name] = entry.tensor.values();
  const std::uint64_t adapters = state.params.hash(pipeline::kAdapterPrefix);
  int epochs = 0;
  while (state.optimizer_steps < 100) pipeline::train_model(state, samples, ++epochs);
  bool unchanged = !before.empty();
  for (const auto& [name, values] : before) unchanged = unchanged && state.params.get(name).values() == values;
  o.require(unchanged, std::to_string(before.size()) + " frozen estimator tensors bitwise unchanged after " +
                           std::to_string(state.optimizer_steps) + " optimizer steps");
  o.require(state.params.hash(pipeline::kAdapterPrefix) != adapters, "adapters did change");
  return o;
}

Outcome reproducibility(Workspace& ws) {
  Outcome o;
  RunConfig c = pt::toy_config();
  c.synth_count = 20;
  c.rng_seed = 5;
  const fs::path r = ws.root / "repro";
  std::array<fs::path, 2> run = {r / "a", r / "b"};
  // Both runs use the same paths (the checkpoint header records the data
  // roots); each run's outputs are moved aside afterwards.
  const fs::path live = r / "live";
  for (const fs::path& p : run) {
    RunConfig rc = c;
    rc.pretrain_root = rc.train_root = (live / "data").string();
    pipeline::cmd_synth(rc, rc.pretrain_root);
    pipeline::cmd_pretrain(rc, live / "pre");
    pipeline::cmd_train(rc, live / "pre" / "estimator.ckpt", std::nullopt, live / "train");
    pipeline::cmd_eval(live / "train" / "final.ckpt", rc.train_root, live / "report.tsv", std::nullopt);
    fs::rename(live, p);
  }
  o.require(tree(run[0] / "data") == tree(run[1] / "data"), "synth: identical dataset files");
  o.require(read_bytes(run[0] / "pre" / "estimator.ckpt") == read_bytes(run[1] / "pre" / "estimator.ckpt"),
            "pretrain: identical checkpoints");
  o.require(read_bytes(run[0] / "train" / "final.ckpt") == read_bytes(run[1] / "train" / "final.ckpt"),
            "train: identical checkpoints");
  o.require(read_bytes(run[0] / "report.tsv") == read_bytes(run[1] / "report.tsv"), "eval: identical reports");

  const pipeline::Checkpoint a = pipeline::load_checkpoint(run[0] / "train" / "final.ckpt");
  pipeline::save_checkpoint(a, r / "copy.ckpt");
  const pipeline::Checkpoint b = pipeline::load_checkpoint(r / "copy.ckpt");
  std::vector<pipeline::PreparedSample> samples;
  for (const data::Sample& s : data::load_vt_dataset(run[0] / "data", data::Split::kTrain))
    samples.push_back(pipeline::prepare_sample(s, c.input_size, c.ablation));
  const pipeline::Batch batch = pipeline::make_batch(samples, {0, 1, 2});
  nn::NoGradGuard g;
  const pipeline::ModelOutput x = pipeline::PCNet(a.params, a.config).forward(batch.rgb, batch.thermal);
  const pipeline::ModelOutput y = pipeline::PCNet(b.params, b.config).forward(batch.rgb, batch.thermal);
  o.require(x.logits.values() == y.logits.values() && x.homography.values() == y.homography.values(),
            "checkpoint save/load: forward outputs bitwise equal");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> which = {1, 2, 3, 4, 5, 6, 7, 8};
  std::string work;
  bool verbose = false;
  app.add_option("--criteria", which, "criteria to run (default all)")->delimiter(',');
  app.add_option("--work", work, "keep artifacts in this directory");
  app.add_flag("--verbose", verbose, "print training logs");
  CLI11_PARSE(app, argc, argv);

  std::optional<pt::TempDir> tmp;
  Workspace ws;
  if (work.empty()) {
    tmp.emplace();
    ws.root = tmp->path();
  } else {
    ws.root = work;
    fs::create_directories(ws.root);
  }
  const pipeline::LogFn log = [verbose](const std::string& line) {
    if (verbose) std::cerr << "  " << line << std::endl;
  };

  const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria = {
      {1, {"geometry", [] { return geometry_suite(); }}},
      {2, {"attention/adapter oracles", [] { return oracle_suite(); }}},
      {3, {"gradients", [] { return gradient_suite(); }}},
      {4, {"metrics", [] { return metric_suite(); }}},
      {5, {"estimator pretraining", [&] { return estimator_pretraining(ws, log); }}},
      {6, {"end-to-end toy run", [&] { return end_to_end(ws, log); }}},
      {7, {"freeze/identity invariants", [&] { return freeze_invariants(ws); }}},
      {8, {"reproducibility", [&] { return reproducibility(ws); }}},
  };
  bool all = true;
  for (int id : which) {
    const auto it = criteria.find(id);
    if (it == criteria.end()) {
      std::cerr << "unknown criterion " << id << "\n";
      return 2;
    }
    Timer timer;
    Outcome out;
    try {
      out = it->second.second();
    } catch (const std::exception& e) {
      out.require(false, std::string("exception: ") + e.what());
    }
    all = all && out.pass;
    std::string notes;
    for (const std::string& n : out.notes) notes += (notes.empty() ? "" : "; ") + n;
    std::cout << "criterion " << id << " " << (out.pass ? "PASS" : "FAIL") << " [" << it->second.first
              << ", " << num(timer.seconds(), "%.1f") << " s]: " << notes << std::endl;
  }
  return all ? 0 : 1;
}
