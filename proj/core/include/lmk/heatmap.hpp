#pragma once
// Gaussian target encoding, sub-pixel argmax decoding, horizontal flip and
// ensemble averaging over heatmap stacks.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "lmk/dataset.hpp"
#include "lmk/schema.hpp"

namespace lmk {

inline constexpr int kHeatmapStride = 4;

struct HeatmapStack {
  int channels = 0;
  int width = 0;   // W_out = W_in / 4
  int height = 0;  // H_out = H_in / 4
  std::vector<double> data;        // channels * height * width, row-major
  std::vector<uint8_t> supervised; // per-channel mask

  double at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  double& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  size_t plane_size() const { return static_cast<size_t>(width) * height; }
};

HeatmapStack make_stack(int channels, int width, int height);

// Unnormalized Gaussians centered at each supervised v>=1 keypoint, mapped
// through the crop transform then the 4x output stride. Supervised v=0 slots
// are all-zero; unsupervised slots are flagged off for the loss.
HeatmapStack encode_gaussian(const AggregateKeypoints& agg_kps,
                             const CropTransform& transform,
                             int out_w, int out_h, double sigma);

struct DecodedPoint {
  double x = 0.0;  // image pixel coordinates
  double y = 0.0;
  double score = 0.0;
};

// Per channel: argmax plus a quarter-cell shift toward the larger neighbor on
// each axis (no shift on ties or at borders), mapped back through the stride
// and the inverse crop transform.
std::vector<DecodedPoint> decode(const HeatmapStack& stack, const CropTransform& transform);

// Mirror every channel left-right, then reindex channels by perm. Involution.
HeatmapStack hflip_stack(const HeatmapStack& stack, const std::vector<int>& perm);

// Element-wise arithmetic mean; shapes and masks must agree.
HeatmapStack average_stacks(const std::vector<HeatmapStack>& stacks);

// Flat binary interchange: int32 LE channels, H, W; then row-major float32.
void save_stack(const HeatmapStack& stack, const std::filesystem::path& path);
HeatmapStack load_stack(const std::filesystem::path& path);

}  // namespace lmk
