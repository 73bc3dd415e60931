#include "pcnet/pipeline/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "pcnet/core/errors.hpp"

namespace pcnet::pipeline {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint payload is little-endian");

constexpr char kMagic[8] = {'P', 'C', 'N', 'E', 'T', 'C', 'K', 'P'};

using json = nlohmann::json;

void append(std::vector<double>& payload, json& list, const std::string& name,
            const std::vector<double>& values) {
  list.push_back({{"name", name}, {"offset", payload.size()}, {"count", values.size()}});
  payload.insert(payload.end(), values.begin(), values.end());
}

std::vector<double> slice(const std::vector<double>& payload, const json& entry) {
  const std::size_t offset = entry.at("offset"), count = entry.at("count");
  if (offset + count > payload.size()) throw DataError("checkpoint payload truncated");
  return {payload.begin() + static_cast<std::ptrdiff_t>(offset),
          payload.begin() + static_cast<std::ptrdiff_t>(offset + count)};
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json header;
  header["kind"] = ckpt.kind;
  header["epoch"] = ckpt.epoch;
  header["config"] = format_run_config(ckpt.config);
  header["rng_state"] = ckpt.rng_state;
  header["optimizer_steps"] = ckpt.optimizer_steps;
  header["metrics"] = ckpt.metrics;
  std::vector<double> payload;
  json tensors = json::array(), m = json::array(), v = json::array();
  for (const auto& [name, entry] : ckpt.params.entries()) {
    const nn::Shape s = entry.tensor.shape();
    append(payload, tensors, name, entry.tensor.values());
    tensors.back()["shape"] = {s.n, s.c, s.h, s.w};
    tensors.back()["frozen"] = entry.frozen;
  }
  for (const auto& [name, values] : ckpt.adam_m) append(payload, m, name, values);
  for (const auto& [name, values] : ckpt.adam_v) append(payload, v, name, values);
  header["tensors"] = tensors;
  header["adam_m"] = m;
  header["adam_v"] = v;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t length = text.size();
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&length), sizeof length);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(double)));
    if (!out) throw DataError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&length), sizeof length);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw DataError(path.string() + " is not a checkpoint");
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw DataError("checkpoint header truncated");
  std::vector<char> rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (rest.size() % sizeof(double) != 0) throw DataError("checkpoint payload truncated");
  std::vector<double> payload(rest.size() / sizeof(double));
  std::memcpy(payload.data(), rest.data(), rest.size());

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError("checkpoint header: " + std::string(e.what()));
  }
  Checkpoint ckpt;
  try {
    ckpt.kind = header.at("kind");
    ckpt.epoch = header.at("epoch");
    ckpt.rng_state = header.at("rng_state");
    ckpt.optimizer_steps = header.at("optimizer_steps");
    ckpt.metrics = header.at("metrics").get<std::map<std::string, double>>();
    ckpt.config = parse_run_config(header.at("config").get<std::string>());
    for (const json& t : header.at("tensors")) {
      const auto shape = t.at("shape").get<std::vector<int>>();
      if (shape.size() != 4) throw DataError("bad tensor shape in checkpoint");
      const nn::Shape s{shape[0], shape[1], shape[2], shape[3]};
      std::vector<double> values = slice(payload, t);
      if (values.size() != s.numel()) throw DataError("tensor size mismatch in checkpoint");
      const std::string name = t.at("name");
      ckpt.params.add(name, s).values() = std::move(values);
      ckpt.params.set_frozen(name, t.at("frozen").get<bool>());
    }
    for (const json& e : header.at("adam_m")) ckpt.adam_m[e.at("name")] = slice(payload, e);
    for (const json& e : header.at("adam_v")) ckpt.adam_v[e.at("name")] = slice(payload, e);
  } catch (const json::exception& e) {
    throw DataError("checkpoint header: " + std::string(e.what()));
  }
  return ckpt;
}

}  // namespace pcnet::pipeline
