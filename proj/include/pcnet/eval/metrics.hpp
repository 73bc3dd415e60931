#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pcnet/core/image.hpp"

namespace pcnet::eval {

// All metrics take single-channel maps of equal size: pred in [0, 1], gt in
// {0, 1}. Size or channel mismatches raise ShapeError.

// Adaptive binarization: pixel is foreground when pred >= min(1, 2 mean(pred))
// and pred > 0. The second condition keeps an all-zero map empty.
std::vector<double> adaptive_binarize(const Image& pred);

// Adaptive-threshold F with beta^2 = 0.3. Zero when precision and recall are
// both zero, which includes every empty-gt case.
double f_measure(const Image& pred, const Image& gt);

// Structure measure 0.5 * object + 0.5 * region, clipped at 0. A region
// block where both maps are constant scores 2xy / (x^2 + y^2) on the block
// means rather than 1, so a constant block of the wrong level counts as a
// mismatch. Empty gt
// gives 1 - mean(pred), full gt gives mean(pred).
double s_measure(const Image& pred, const Image& gt);

// Enhanced alignment over the adaptively binarized map. Empty gt gives
// 1 - mean(bin), full gt gives mean(bin).
double e_measure(const Image& pred, const Image& gt);

struct Scores {
  double e = 0, s = 0, f = 0;
};

struct ImageScores {
  std::string id;
  Scores scores;
};

struct Aggregate {
  Scores mean;
  std::size_t count = 0;
};

struct EvalReport {
  std::vector<ImageScores> per_image;
  Aggregate aggregate;
  std::map<std::string, Aggregate> per_attribute;
};

struct EvalItem {
  std::string id;
  Image pred;  // resized bilinearly to gt size when sizes differ
  Image gt;
  std::set<std::string> attributes;
};

Scores score_image(const Image& pred, const Image& gt);

// Per-image scores in input order, arithmetic means, and means over each
// attribute's tagged subset. Throws EmptyDataset on empty input.
EvalReport evaluate_dataset(const std::vector<EvalItem>& items);

// Tab-separated rows id, Em, Sm, Fm followed by a summary block with one row
// for the whole set and one per attribute.
void write_report(const EvalReport& report, std::ostream& out);
void write_report(const EvalReport& report, const std::filesystem::path& path);

}  // namespace pcnet::eval
