#include "pcnet/data/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "pcnet/core/errors.hpp"
#include "pcnet/data/image_io.hpp"

namespace pcnet::data {

namespace fs = std::filesystem;

namespace {

bool image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

// stem -> file; the lexicographically first file wins when a stem repeats.
std::map<std::string, fs::path> index_folder(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  if (!fs::is_directory(dir)) return out;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && image_extension(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) out.try_emplace(f.stem().string(), f);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

Image binarize(const Image& gt) {
  const Image gray = gt.channels() == 1 ? gt : to_grayscale(gt);
  Image out(1, gray.height(), gray.width());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = gray.data()[i] >= 0.5 ? 1.0 : 0.0;
  return out;
}

}  // namespace

std::map<std::string, std::set<std::string>> read_attributes(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::map<std::string, std::set<std::string>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    const auto colon = body.find(':');
    if (colon == std::string::npos)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 'id: TAGS'");
    auto& tags = out[trim(body.substr(0, colon))];
    std::stringstream ss(body.substr(colon + 1));
    std::string tag;
    while (std::getline(ss, tag, ','))
      if (auto t = trim(tag); !t.empty()) tags.insert(t);
  }
  return out;
}

std::vector<Sample> load_vt_dataset(const fs::path& root, Split split) {
  if (!fs::is_directory(root)) throw DataError("dataset root " + root.string() + " not found");
  const auto rgb = index_folder(root / "RGB");
  const auto thermal = index_folder(root / "T");
  const auto gt = index_folder(root / "GT");

  std::set<std::string> ids;
  for (const auto* folder : {&rgb, &thermal, &gt})
    for (const auto& [id, path] : *folder) ids.insert(id);
  if (ids.empty()) throw EmptyDataset("no images under " + root.string());

  std::map<std::string, std::set<std::string>> attributes;
  if (fs::exists(root / "attributes.txt")) attributes = read_attributes(root / "attributes.txt");

  std::vector<Sample> samples;
  samples.reserve(ids.size());
  for (const auto& id : ids) {
    if (!rgb.count(id)) throw MissingModality("sample '" + id + "' has no RGB image");
    if (!thermal.count(id)) throw MissingModality("sample '" + id + "' has no thermal image");
    Sample s;
    s.id = id;
    s.rgb = read_image(rgb.at(id));
    if (s.rgb.channels() == 1) s.rgb = to_three_channel(s.rgb);
    s.thermal = read_image(thermal.at(id));
    if (auto it = gt.find(id); it != gt.end()) {
      s.gt_mask = binarize(read_image(it->second));
      if (!s.gt_mask->same_size(s.rgb))
        throw DataError("sample '" + id + "': GT size differs from RGB size");
    } else if (split == Split::kTrain) {
      throw MissingGroundTruth("sample '" + id + "' has no ground truth");
    }
    if (auto it = attributes.find(id); it != attributes.end()) s.attributes = it->second;
    const fs::path hfile = root / "H" / (id + ".txt");
    if (fs::exists(hfile)) s.true_homography = read_homography(hfile);
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_vt_dataset(const fs::path& root, const std::vector<Sample>& samples) {
  std::error_code ec;
  for (const char* sub : {"RGB", "T", "GT"}) {
    fs::create_directories(root / sub, ec);
    if (ec) throw IoError("cannot create " + (root / sub).string());
  }
  const bool any_h = std::any_of(samples.begin(), samples.end(),
                                 [](const Sample& s) { return s.true_homography.has_value(); });
  const bool any_attr = std::any_of(samples.begin(), samples.end(),
                                    [](const Sample& s) { return !s.attributes.empty(); });
  if (any_h) fs::create_directories(root / "H", ec);
  for (const auto& s : samples) {
    write_png(root / "RGB" / (s.id + ".png"), s.rgb);
    write_png(root / "T" / (s.id + ".png"), s.thermal);
    if (s.gt_mask) write_png(root / "GT" / (s.id + ".png"), *s.gt_mask);
    if (s.true_homography) write_homography(root / "H" / (s.id + ".txt"), *s.true_homography);
  }
  if (any_attr) {
    std::ofstream out(root / "attributes.txt");
    if (!out) throw IoError("cannot write attributes.txt");
    for (const auto& s : samples) {
      if (s.attributes.empty()) continue;
      out << s.id << ":";
      bool first = true;
      for (const auto& t : s.attributes) {
        out << (first ? " " : ",") << t;
        first = false;
      }
      out << "\n";
    }
  }
}

}  // namespace pcnet::data

namespace pcnet::data {

bool is_holdout(const std::string& id, double fraction) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : id) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return static_cast<double>(h % 1000) < fraction * 1000.0;
}

}  // namespace pcnet::data
