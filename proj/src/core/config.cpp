#include "pcnet/core/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

#include "pcnet/core/errors.hpp"

namespace pcnet {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw ConfigError("invalid value for '" + key + "': '" + value + "'");
}

void parse_int(const std::string& key, const std::string& v, int& out) {
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v);
}

void parse_u64(const std::string& key, const std::string& v, std::uint64_t& out) {
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v);
}

void parse_double(const std::string& key, const std::string& v, double& out) {
  try {
    std::size_t used = 0;
    out = std::stod(v, &used);
    if (used != v.size()) bad_value(key, v);
  } catch (const std::logic_error&) {
    bad_value(key, v);
  }
}

void parse_bool(const std::string& key, const std::string& v, bool& out) {
  if (v == "true" || v == "1") out = true;
  else if (v == "false" || v == "0") out = false;
  else bad_value(key, v);
}

template <std::size_t N>
void parse_list(const std::string& key, const std::string& v, std::array<int, N>& out) {
  std::vector<std::string> parts;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(trim(item));
  if (parts.size() != N) bad_value(key, v);
  for (std::size_t i = 0; i < N; ++i) parse_int(key, parts[i], out[i]);
}

template <std::size_t N>
std::string fmt_list(const std::array<int, N>& a) {
  std::string s;
  for (std::size_t i = 0; i < N; ++i) s += (i ? "," : "") + std::to_string(a[i]);
  return s;
}

// One entry per config key: how to print it and how to parse it.
struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> print;
  std::function<void(RunConfig&, const std::string&)> parse;
};

#define PCNET_INT(name)                                                     \
  Field{#name, [](const RunConfig& c) { return std::to_string(c.name); }, \
        [](RunConfig& c, const std::string& v) { parse_int(#name, v, c.name); }}
#define PCNET_DOUBLE(name)                                                 \
  Field{#name, [](const RunConfig& c) { return fmt_double(c.name); },    \
        [](RunConfig& c, const std::string& v) { parse_double(#name, v, c.name); }}
#define PCNET_STRING(name)                                    \
  Field{#name, [](const RunConfig& c) { return c.name; },   \
        [](RunConfig& c, const std::string& v) { c.name = v; }}
#define PCNET_LIST(name)                                                   \
  Field{#name, [](const RunConfig& c) { return fmt_list(c.name); },      \
        [](RunConfig& c, const std::string& v) { parse_list(#name, v, c.name); }}
#define PCNET_FLAG(name)                                                            \
  Field{#name,                                                                      \
        [](const RunConfig& c) { return std::string(c.ablation.name ? "true" : "false"); }, \
        [](RunConfig& c, const std::string& v) { parse_bool(#name, v, c.ablation.name); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = {
      PCNET_INT(input_size),
      PCNET_LIST(backbone_channels),
      PCNET_INT(adapter_dim),
      PCNET_INT(attention_dim),
      PCNET_INT(semantic_channels),
      PCNET_INT(decoder_channels),
      PCNET_INT(estimator_iterations),
      PCNET_INT(estimator_size),
      PCNET_LIST(estimator_channels),
      PCNET_INT(estimator_hidden),
      PCNET_INT(corr_radius),
      PCNET_INT(max_tokens_side),
      PCNET_DOUBLE(bce_weight),
      PCNET_DOUBLE(dice_weight),
      PCNET_DOUBLE(lr),
      PCNET_DOUBLE(weight_decay),
      PCNET_INT(batch_size),
      PCNET_DOUBLE(grad_clip),
      PCNET_DOUBLE(adapter_lr_scale),
      PCNET_INT(epochs),
      PCNET_INT(checkpoint_every),
      PCNET_DOUBLE(pretrain_lr),
      PCNET_DOUBLE(pretrain_weight_decay),
      PCNET_INT(pretrain_batch_size),
      PCNET_INT(pretrain_epochs),
      PCNET_DOUBLE(pretrain_holdout),
      PCNET_FLAG(disable_she),
      PCNET_FLAG(disable_iimc),
      PCNET_FLAG(disable_intra),
      PCNET_FLAG(disable_semantics),
      PCNET_FLAG(thermal_as_rgb),
      PCNET_FLAG(full_finetune_estimator),
      Field{"rng_seed", [](const RunConfig& c) { return std::to_string(c.rng_seed); },
            [](RunConfig& c, const std::string& v) { parse_u64("rng_seed", v, c.rng_seed); }},
      PCNET_STRING(train_root),
      PCNET_STRING(test_root),
      PCNET_STRING(pretrain_root),
      PCNET_INT(synth_count),
      PCNET_INT(synth_image_size),
      PCNET_INT(synth_min_objects),
      PCNET_INT(synth_max_objects),
      PCNET_INT(synth_max_distractors),
      PCNET_DOUBLE(synth_rotation_deg),
      PCNET_DOUBLE(synth_translation),
      PCNET_DOUBLE(synth_scale),
      PCNET_DOUBLE(synth_perspective),
  };
  return kFields;
}

#undef PCNET_INT
#undef PCNET_DOUBLE
#undef PCNET_STRING
#undef PCNET_LIST
#undef PCNET_FLAG

}  // namespace

void apply_ablation(AblationFlags& flags, const std::string& name) {
  if (name == "she") flags.disable_she = true;
  else if (name == "iimc") flags.disable_iimc = true;
  else if (name == "intra") flags.disable_intra = true;
  else if (name == "semantics") flags.disable_semantics = true;
  else if (name == "thermal") flags.thermal_as_rgb = true;
  else if (name == "fft") flags.full_finetune_estimator = true;
  else throw ConfigError("unknown ablation '" + name + "'");
}

RunConfig RunConfig::full_scale_defaults() {
  RunConfig c;
  c.input_size = 384;
  c.epochs = 80;
  return c;
}

void RunConfig::validate() const {
  auto positive = [](const char* key, double v) {
    if (!(v > 0)) throw ConfigError(std::string(key) + " must be positive");
  };
  positive("input_size", input_size);
  for (int c : backbone_channels) positive("backbone_channels", c);
  for (int c : estimator_channels) positive("estimator_channels", c);
  positive("adapter_dim", adapter_dim);
  positive("attention_dim", attention_dim);
  positive("semantic_channels", semantic_channels);
  positive("decoder_channels", decoder_channels);
  positive("estimator_iterations", estimator_iterations);
  positive("estimator_size", estimator_size);
  positive("estimator_hidden", estimator_hidden);
  positive("corr_radius", corr_radius);
  positive("max_tokens_side", max_tokens_side);
  positive("lr", lr);
  positive("batch_size", batch_size);
  positive("adapter_lr_scale", adapter_lr_scale);
  positive("epochs", epochs);
  positive("checkpoint_every", checkpoint_every);
  positive("pretrain_lr", pretrain_lr);
  positive("pretrain_batch_size", pretrain_batch_size);
  positive("pretrain_epochs", pretrain_epochs);
  positive("synth_count", synth_count);
  if (input_size % 32 != 0) throw ConfigError("input_size must be divisible by 32");
  if (estimator_size % 32 != 0 || estimator_size < 64)
    throw ConfigError("estimator_size must be a multiple of 32 and at least 64");
  if (synth_image_size < 32) throw ConfigError("synth_image_size must be >= 32");
  if (synth_min_objects < 1 || synth_max_objects < synth_min_objects)
    throw ConfigError("synth object counts must satisfy 1 <= min <= max");
  if (synth_max_distractors < 0) throw ConfigError("synth_max_distractors must be >= 0");
  if (bce_weight < 0 || dice_weight < 0 || weight_decay < 0 || pretrain_weight_decay < 0 ||
      grad_clip < 0)
    throw ConfigError("loss weights, weight decay and grad_clip must be non-negative");
  if (pretrain_holdout < 0 || pretrain_holdout >= 1)
    throw ConfigError("pretrain_holdout must be in [0, 1)");
  if (synth_rotation_deg < 0 || synth_translation < 0 || synth_scale < 0 ||
      synth_scale >= 1 || synth_perspective < 0)
    throw ConfigError("misalignment ranges must be non-negative (scale < 1)");
}

RunConfig parse_run_config(const std::string& text, const RunConfig& base) {
  RunConfig config = base;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    const auto& all = fields();
    auto it = std::find_if(all.begin(), all.end(),
                           [&](const Field& f) { return f.key == key; });
    if (it == all.end())
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second)
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    it->parse(config, value);
  }
  config.validate();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), base);
}

std::string format_run_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.print(config) + "\n";
  return out;
}

}  // namespace pcnet
