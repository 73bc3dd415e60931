#pragma once

#include <cstdint>
#include <random>

#include "pcnet/core/homography.hpp"
#include "pcnet/data/dataset.hpp"

namespace pcnet::data {

// Symmetric ranges of the random misalignment. Zero everywhere is the
// identity.
struct MisalignParams {
  double rotation_deg = 10.0;  // +- degrees about the image center
  double translation = 0.10;   // +- fraction of width / height
  double scale = 0.10;         // factor in [1 - scale, 1 + scale]
  double perspective = 0.02;   // +- fraction of size added to each corner

  static MisalignParams none() { return {0, 0, 0, 0}; }
  bool is_identity() const {
    return rotation_deg == 0 && translation == 0 && scale == 0 && perspective == 0;
  }
};

// Draws corner displacements for a width x height frame and solves for the
// homography (thermal -> rgb). Resamples degenerate quadrilaterals up to 8
// times, then throws DegenerateHomography.
Homography sample_misalignment(const MisalignParams& params, int width, int height,
                               std::mt19937_64& rng);

// Replaces sample.thermal with Warp(thermal, h) (zero fill) and records h.
Sample apply_misalignment(const Sample& sample, const Homography& h);

// sample_misalignment + apply_misalignment with a generator seeded by seed.
Sample synthesize_misalignment(const Sample& sample, const MisalignParams& params,
                               std::uint64_t seed);

struct ToySceneSpec {
  int image_size = 128;
  int n_objects = 1;
  // Extra shapes drawn in RGB only: visible but not salient and cold in the
  // thermal channel.
  int n_distractors = 0;
  MisalignParams misalign;
};

// Textured RGB background with colored shapes; gt is the union of the
// salient shapes; thermal = clamp(0.2 + 0.7 gt + noise) before
// misalignment, where the noise is N(0, 0.05^2) per pixel with a 2 px
// spatial correlation. The misaligned thermal is cut from a padded canvas,
// so it has no empty border. Attributes: MSO for several objects, SSO/BSO for small/big
// foreground. Deterministic per (spec, seed).
Sample generate_toy_scene(const ToySceneSpec& spec, std::uint64_t seed);

}  // namespace pcnet::data
