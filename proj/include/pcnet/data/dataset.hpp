#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pcnet/core/homography.hpp"
#include "pcnet/core/image.hpp"

namespace pcnet::data {

struct Sample {
  std::string id;
  Image rgb;                  // 3 x H x W
  Image thermal;              // 1 or 3 channels, any size
  std::optional<Image> gt_mask;  // 1 x H x W, values in {0, 1}
  std::set<std::string> attributes;
  std::optional<Homography> true_homography;  // thermal -> rgb pixels
};

enum class Split { kTrain, kTest };

// Reads root/{RGB,T,GT}/<id>.{png,jpg,bmp}, plus root/H/<id>.txt and
// root/attributes.txt when present. Samples are sorted by id.
//
// Errors: MissingModality when an id lacks RGB or T; MissingGroundTruth when
// a train-split id lacks GT (test split leaves gt_mask empty); DecodeError on
// unreadable files.
std::vector<Sample> load_vt_dataset(const std::filesystem::path& root, Split split);

// Writes the same layout (PNG images). H/ and attributes.txt are written
// when any sample carries them.
void write_vt_dataset(const std::filesystem::path& root, const std::vector<Sample>& samples);

// "id: TAG1,TAG2" per line.
std::map<std::string, std::set<std::string>> read_attributes(const std::filesystem::path& path);

// Fixed hold-out membership: FNV-1a hash of the id, bucketed into 1000
// slots. Independent of dataset order and size.
bool is_holdout(const std::string& id, double fraction);

}  // namespace pcnet::data
