// pcnet: synthetic data, estimator pretraining, training, evaluation and
// inference from the command line. Exit codes: 0 success, 2 configuration
// error, 3 data or file error, 1 anything else.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <memory>

#include "pcnet/core/errors.hpp"
#include "pcnet/pipeline/commands.hpp"

namespace fs = std::filesystem;
using namespace pcnet;

namespace {

struct Common {
  std::string config;
  bool paper_config = false;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> ablations;
  std::string out;
};

// Relative dataset roots in a config file are taken relative to the file.
std::string resolve(const std::string& root, const fs::path& base) {
  if (root.empty() || fs::path(root).is_absolute()) return root;
  return (base / root).lexically_normal().string();
}

RunConfig make_config(const Common& o) {
  const RunConfig base = o.paper_config ? RunConfig::full_scale_defaults() : RunConfig{};
  RunConfig c = base;
  if (!o.config.empty()) {
    c = load_run_config(o.config, base);
    const fs::path dir = fs::path(o.config).parent_path();
    c.train_root = resolve(c.train_root, dir);
    c.test_root = resolve(c.test_root, dir);
    c.pretrain_root = resolve(c.pretrain_root, dir);
  }
  if (o.seed) c.rng_seed = *o.seed;
  for (const std::string& a : o.ablations) apply_ablation(c.ablation, a);
  c.validate();
  return c;
}

// Logs go to stdout and, when a file is given, to that file too.
pipeline::LogFn make_log(const fs::path& file) {
  std::shared_ptr<std::ofstream> f;
  if (!file.empty()) {
    fs::create_directories(file.parent_path());
    f = std::make_shared<std::ofstream>(file, std::ios::app);
  }
  return [f](const std::string& line) {
    std::cout << line << std::endl;
    if (f) *f << line << std::endl;
  };
}

void add_common(CLI::App* cmd, Common& o, bool with_ablation) {
  cmd->add_option("--config", o.config, "run configuration file (key = value lines)")
      ->check(CLI::ExistingFile);
  cmd->add_flag("--paper-config", o.paper_config, "start from full-scale defaults (384 px, 80 epochs)");
  cmd->add_option("--seed", o.seed, "override rng_seed");
  if (with_ablation)
    cmd->add_option("--ablation", o.ablations, "she|iimc|intra|semantics|thermal|fft (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PCNet: alignment-free RGB-thermal salient object detection"};
  app.require_subcommand(1);

  Common synth_o, pre_o, train_o;
  int count = -1;
  auto* synth = app.add_subcommand("synth", "write a synthetic misaligned dataset");
  add_common(synth, synth_o, false);
  synth->add_option("--out", synth_o.out, "output dataset root")->required();
  synth->add_option("--count", count, "number of scenes (overrides synth_count)");

  std::string pre_data;
  auto* pre = app.add_subcommand("pretrain", "pretrain the homography estimator");
  add_common(pre, pre_o, false);
  pre->add_option("--out", pre_o.out, "output directory")->required();
  pre->add_option("--data", pre_data, "dataset root (overrides pretrain_root)");

  std::string estimator, resume, train_data;
  int epochs = -1;
  auto* train = app.add_subcommand("train", "train the saliency network on a frozen estimator");
  add_common(train, train_o, true);
  train->add_option("--out", train_o.out, "output directory")->required();
  train->add_option("--estimator", estimator, "pretrain checkpoint");
  train->add_option("--resume", resume, "model checkpoint to continue from");
  train->add_option("--data", train_data, "dataset root (overrides train_root)");
  train->add_option("--epochs", epochs, "total epochs (overrides epochs)");

  std::string eval_ckpt, eval_data, report, pred_dir;
  std::vector<std::string> eval_ablations;
  auto* ev = app.add_subcommand("eval", "evaluate a trained model");
  ev->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  ev->add_option("--data", eval_data, "dataset root with GT")->required();
  ev->add_option("--report", report, "report path")->required();
  ev->add_option("--pred-dir", pred_dir, "also write 8-bit predictions here");
  ev->add_option("--ablation", eval_ablations, "force an ablation at inference (repeatable)");

  std::string inf_ckpt, rgb, thermal, inf_out;
  std::vector<std::string> inf_ablations;
  auto* inf = app.add_subcommand("infer", "predict one RGB/thermal pair");
  inf->add_option("--checkpoint", inf_ckpt, "model checkpoint")->required();
  inf->add_option("--rgb", rgb, "RGB image")->required();
  inf->add_option("--thermal", thermal, "thermal image")->required();
  inf->add_option("--out", inf_out, "output directory")->required();
  inf->add_option("--ablation", inf_ablations, "force an ablation at inference (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      RunConfig c = make_config(synth_o);
      if (count >= 0) c.synth_count = count;
      pipeline::cmd_synth(c, synth_o.out, make_log({}));
    } else if (pre->parsed()) {
      RunConfig c = make_config(pre_o);
      if (!pre_data.empty()) c.pretrain_root = pre_data;
      pipeline::cmd_pretrain(c, pre_o.out, make_log(fs::path(pre_o.out) / "pretrain.log"));
    } else if (train->parsed()) {
      RunConfig c = make_config(train_o);
      if (!train_data.empty()) c.train_root = train_data;
      if (epochs >= 0) c.epochs = epochs;
      c.validate();
      auto opt = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional<fs::path>(s); };
      pipeline::cmd_train(c, opt(estimator), opt(resume), train_o.out,
                          make_log(fs::path(train_o.out) / "train.log"));
    } else if (ev->parsed()) {
      pipeline::cmd_eval(eval_ckpt, eval_data, report,
                         pred_dir.empty() ? std::nullopt : std::optional<fs::path>(pred_dir),
                         eval_ablations, make_log({}));
    } else if (inf->parsed()) {
      pipeline::cmd_infer(inf_ckpt, rgb, thermal, inf_out, inf_ablations, make_log({}));
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
