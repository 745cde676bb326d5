#include "lmk/heatmap.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace lmk {

HeatmapStack make_stack(int channels, int width, int height) {
  HeatmapStack s;
  s.channels = channels;
  s.width = width;
  s.height = height;
  s.data.assign(static_cast<size_t>(channels) * width * height, 0.0);
  s.supervised.assign(channels, 1);
  return s;
}

HeatmapStack encode_gaussian(const AggregateKeypoints& agg_kps,
                             const CropTransform& transform,
                             int out_w, int out_h, double sigma) {
  if (!(sigma > 0)) throw DataError("sigma must be positive");
  HeatmapStack s = make_stack(static_cast<int>(agg_kps.size()), out_w, out_h);
  const double inv = 1.0 / (2.0 * sigma * sigma);

  for (size_t c = 0; c < agg_kps.size(); ++c) {
    const auto& kp = agg_kps[c];
    s.supervised[c] = kp.supervised ? 1 : 0;
    if (!kp.supervised || kp.v < 1) continue;  // v=0 slots stay all-zero
    const auto [cx, cy] = transform.apply(kp.x, kp.y);
    const double mx = cx / kHeatmapStride;
    const double my = cy / kHeatmapStride;
    for (int y = 0; y < out_h; ++y) {
      const double dy = y - my;
      for (int x = 0; x < out_w; ++x) {
        const double dx = x - mx;
        s.at(static_cast<int>(c), y, x) = std::exp(-(dx * dx + dy * dy) * inv);
      }
    }
  }
  return s;
}

std::vector<DecodedPoint> decode(const HeatmapStack& stack, const CropTransform& transform) {
  std::vector<DecodedPoint> out(stack.channels);
  for (int c = 0; c < stack.channels; ++c) {
    int bx = 0, by = 0;
    double best = stack.at(c, 0, 0);
    for (int y = 0; y < stack.height; ++y)
      for (int x = 0; x < stack.width; ++x)
        if (stack.at(c, y, x) > best) {
          best = stack.at(c, y, x);
          bx = x;
          by = y;
        }

    double gx = bx, gy = by;
    if (bx > 0 && bx < stack.width - 1) {
      const double l = stack.at(c, by, bx - 1), r = stack.at(c, by, bx + 1);
      if (r > l)
        gx += 0.25;
      else if (l > r)
        gx -= 0.25;
    }
    if (by > 0 && by < stack.height - 1) {
      const double u = stack.at(c, by - 1, bx), d = stack.at(c, by + 1, bx);
      if (d > u)
        gy += 0.25;
      else if (u > d)
        gy -= 0.25;
    }

    const auto [ix, iy] =
        transform.apply_inverse(gx * kHeatmapStride, gy * kHeatmapStride);
    out[c] = {ix, iy, best};
  }
  return out;
}

HeatmapStack hflip_stack(const HeatmapStack& stack, const std::vector<int>& perm) {
  if (static_cast<int>(perm.size()) != stack.channels)
    throw DataError("flip permutation length " + std::to_string(perm.size()) +
                    " != channel count " + std::to_string(stack.channels));
  HeatmapStack out = make_stack(stack.channels, stack.width, stack.height);
  for (int c = 0; c < stack.channels; ++c) {
    const int src = perm[c];
    out.supervised[c] = stack.supervised[src];
    for (int y = 0; y < stack.height; ++y)
      for (int x = 0; x < stack.width; ++x)
        out.at(c, y, x) = stack.at(src, y, stack.width - 1 - x);
  }
  return out;
}

HeatmapStack average_stacks(const std::vector<HeatmapStack>& stacks) {
  if (stacks.empty()) throw DataError("average_stacks: empty list");
  const auto& first = stacks.front();
  HeatmapStack out = make_stack(first.channels, first.width, first.height);
  out.supervised = first.supervised;
  for (const auto& s : stacks) {
    if (s.channels != first.channels || s.width != first.width || s.height != first.height)
      throw DataError("average_stacks: shape mismatch");
    if (s.supervised != first.supervised)
      throw DataError("average_stacks: supervision mask mismatch");
    for (size_t i = 0; i < s.data.size(); ++i) out.data[i] += s.data[i];
  }
  const double inv = 1.0 / static_cast<double>(stacks.size());
  for (double& v : out.data) v *= inv;
  return out;
}

void save_stack(const HeatmapStack& stack, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const int32_t hdr[3] = {stack.channels, stack.height, stack.width};
  out.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
  for (double v : stack.data) {
    const float f = static_cast<float>(v);
    out.write(reinterpret_cast<const char*>(&f), sizeof(f));
  }
}

HeatmapStack load_stack(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  int32_t hdr[3];
  in.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
  if (!in || hdr[0] < 1 || hdr[1] < 1 || hdr[2] < 1)
    throw DataError(path.string() + ": bad stack header");
  HeatmapStack s = make_stack(hdr[0], hdr[2], hdr[1]);
  for (double& v : s.data) {
    float f;
    in.read(reinterpret_cast<char*>(&f), sizeof(f));
    if (!in) throw DataError(path.string() + ": truncated stack payload");
    v = f;
  }
  return s;
}

}  // namespace lmk
