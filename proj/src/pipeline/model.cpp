#include "pcnet/pipeline/model.hpp"

#include "pcnet/backbone/encoder.hpp"
#include "pcnet/core/errors.hpp"
#include "pcnet/head/decoder.hpp"
#include "pcnet/iimc/correlation.hpp"
#include "pcnet/nn/ops.hpp"
#include "pcnet/she/estimator.hpp"
#include "pcnet/she/geometry.hpp"

namespace pcnet::pipeline {

namespace {

std::string level_prefix(int i, const char* kind) {
  return "iimc.l" + std::to_string(i) + "." + kind;
}

}  // namespace

PCNet::PCNet(const nn::ParameterStore& store, RunConfig config)
    : store_(store), config_(std::move(config)) {
  config_.validate();
}

void PCNet::init(nn::ParameterStore& store, const RunConfig& c, std::mt19937_64& rng) {
  c.validate();
  backbone::Encoder::init(store, "rgb_encoder", 3, c.backbone_channels, rng);
  backbone::Encoder::init(store, "thermal_encoder", 3, c.backbone_channels, rng);
  backbone::SemanticFusion::init(store, "fusion", c.backbone_channels[3], c.attention_dim,
                                 c.semantic_channels, rng);
  const she::EstimatorOptions eo = she::EstimatorOptions::from(c);
  she::init_estimator(store, eo, rng);
  she::init_estimator_adapters(store, eo, rng);
  for (int i = 0; i < 4; ++i) {
    const int ch = c.backbone_channels[i];
    iimc::init_attention(store, level_prefix(i, "inter"), ch, ch, ch, rng);
    iimc::init_attention(store, level_prefix(i, "intra"), ch, ch, ch, rng);
  }
  head::Decoder::init(store, "decoder", c.backbone_channels, c.decoder_channels, rng);
}

ModelOutput PCNet::forward(const nn::Tensor& rgb, const nn::Tensor& thermal) const {
  const int size = config_.input_size;
  const nn::Shape rs = rgb.shape();
  if (rs.c != 3 || rs.h != size || rs.w != size || !(thermal.shape() == rs))
    throw ShapeError("model inputs must both be [N,3," + std::to_string(size) + "," +
                     std::to_string(size) + "]");
  const AblationFlags& ab = config_.ablation;
  const int n = rs.n;

  const backbone::FeaturePyramid fr = backbone::Encoder(store_, "rgb_encoder").encode(rgb);
  const backbone::FeaturePyramid ft = backbone::Encoder(store_, "thermal_encoder").encode(thermal);
  const nn::Shape top = fr.levels[3].shape();
  const nn::Tensor f_s =
      ab.disable_semantics
          ? nn::Tensor::full({n, config_.semantic_channels, top.h, top.w}, 1.0)
          : backbone::SemanticFusion(store_, "fusion").fuse(fr.levels[3], ft.levels[3]);

  ModelOutput out;
  nn::Tensor to_thermal;  // rgb pixel -> thermal pixel, S grid
  if (ab.disable_she) {
    const std::vector<Homography> id(n, Homography::identity());
    to_thermal = she::homography_to_tensor(id);
    out.homography = to_thermal;
    out.flagged.assign(n, false);
  } else {
    const she::EstimatorOptions eo = she::EstimatorOptions::from(config_);
    const she::HomographyEstimator estimator(store_, eo);
    const she::EstimatorRun run = estimator.run(she::working_input(rgb, eo.size),
                                                she::working_input(thermal, eo.size), f_s);
    to_thermal = she::lift_homography(run.final(), eo.size, size, size, size, size, true);
    nn::NoGradGuard no_grad;
    out.homography =
        she::lift_homography(run.final().detach(), eo.size, size, size, size, size, false);
    out.flagged = run.flagged;
  }
  const she::WarpTensors warp = she::warp_tensor(thermal, to_thermal, size, size);
  out.warped_thermal = warp.warped;
  out.valid = warp.valid;

  std::array<nn::Tensor, 4> levels;
  for (int i = 0; i < 4; ++i) {
    const nn::Tensor& a = fr.levels[i];
    const nn::Tensor& b = ft.levels[i];
    if (ab.disable_iimc) {
      levels[i] = nn::add(a, b);
      continue;
    }
    const nn::Shape s = a.shape();
    const nn::Tensor map = iimc::region_map(warp.warped, warp.valid, s.h, s.w);
    const nn::Tensor gate = iimc::semantic_level_gate(f_s, s.h, s.w);
    const nn::Tensor inter = iimc::inter_modal_correlate(
        a, b, map, gate, iimc::AttentionParams::from(store_, level_prefix(i, "inter")),
        config_.max_tokens_side);
    levels[i] = ab.disable_intra
                    ? nn::add(a, inter)
                    : iimc::intra_modal_correlate(
                          a, inter, iimc::AttentionParams::from(store_, level_prefix(i, "intra")),
                          config_.max_tokens_side);
  }
  out.logits = head::Decoder(store_, "decoder").decode(levels);
  return out;
}

PreparedSample prepare_sample(const data::Sample& sample, int size, const AblationFlags& ablation) {
  PreparedSample p;
  p.id = sample.id;
  p.attributes = sample.attributes;
  p.rgb_height = sample.rgb.height();
  p.rgb_width = sample.rgb.width();
  const Image& thermal_src = ablation.thermal_as_rgb ? sample.rgb : sample.thermal;
  p.thermal_height = thermal_src.height();
  p.thermal_width = thermal_src.width();
  p.rgb = resize_bilinear(to_three_channel(sample.rgb), size, size);
  p.thermal = resize_bilinear(to_three_channel(to_grayscale(thermal_src)), size, size);
  if (sample.gt_mask) {
    Image g = resize_bilinear(*sample.gt_mask, size, size);
    for (double& v : g.data()) v = v >= 0.5 ? 1.0 : 0.0;
    p.gt = std::move(g);
    p.gt_full = sample.gt_mask;
  }
  return p;
}

Batch make_batch(const std::vector<PreparedSample>& samples, const std::vector<std::size_t>& indices) {
  std::vector<Image> rgb, thermal, gt;
  Batch b;
  bool all_gt = true;
  for (std::size_t i : indices) {
    const PreparedSample& s = samples.at(i);
    rgb.push_back(s.rgb);
    thermal.push_back(s.thermal);
    b.ids.push_back(s.id);
    if (s.gt)
      gt.push_back(*s.gt);
    else
      all_gt = false;
  }
  b.rgb = she::images_to_tensor(rgb);
  b.thermal = she::images_to_tensor(thermal);
  if (all_gt) b.gt = she::images_to_tensor(gt);
  return b;
}

Homography lift_to_original(const Homography& h_small, int size, const PreparedSample& s) {
  // Conjugating identity by equal resize maps is identity only up to
  // rounding; keep it exact.
  if (s.rgb_height == s.thermal_height && s.rgb_width == s.thermal_width &&
      h_small.matrix() == Mat3::Identity())
    return Homography::identity();
  const Mat3 a_rgb = she::resize_map(size, s.rgb_height, s.rgb_width);
  const Mat3 a_t = she::resize_map(size, s.thermal_height, s.thermal_width);
  return normalize_homography(a_rgb.inverse() * h_small.matrix() * a_t);
}

}  // namespace pcnet::pipeline
