#include "lmk/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace lmk {

namespace {

void check_input(const ModelWeights& w, const std::vector<float>& crop) {
  if (static_cast<int>(crop.size()) != w.in_dim())
    throw ModelError("crop length " + std::to_string(crop.size()) + " != in_dim " +
                     std::to_string(w.in_dim()));
}

std::vector<double> hidden_activations(const ModelWeights& w, const std::vector<float>& crop) {
  const int in = w.in_dim();
  std::vector<double> h(w.hidden);
  for (int i = 0; i < w.hidden; ++i) {
    double acc = w.b1[i];
    const double* row = &w.w1[static_cast<size_t>(i) * in];
    for (int k = 0; k < in; ++k) acc += row[k] * crop[k];
    h[i] = acc > 0.0 ? acc : 0.0;
  }
  return h;
}

}  // namespace

ModelWeights init_weights(int in_w, int in_h, int channels, int hidden, uint64_t seed) {
  if (in_w <= 0 || in_h <= 0 || channels <= 0 || hidden <= 0)
    throw ModelError("model dimensions must be positive");
  if (in_w % kHeatmapStride || in_h % kHeatmapStride)
    throw ModelError("input size must be divisible by the heatmap stride");
  ModelWeights w;
  w.in_w = in_w;
  w.in_h = in_h;
  w.channels = channels;
  w.out_w = in_w / kHeatmapStride;
  w.out_h = in_h / kHeatmapStride;
  w.hidden = hidden;

  std::mt19937_64 rng(seed);
  auto fill = [&](std::vector<double>& v, size_t n, int fan_in, int fan_out) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    v.resize(n);
    for (double& x : v) x = dist(rng);
  };
  fill(w.w1, static_cast<size_t>(w.hidden) * w.in_dim(), w.in_dim(), w.hidden);
  w.b1.assign(w.hidden, 0.0);
  fill(w.w2, static_cast<size_t>(w.out_dim()) * w.hidden, w.hidden, w.out_dim());
  w.b2.assign(w.out_dim(), 0.0);
  return w;
}

HeatmapStack forward(const ModelWeights& w, const std::vector<float>& crop) {
  check_input(w, crop);
  const auto h = hidden_activations(w, crop);

  HeatmapStack s = make_stack(w.channels, w.out_w, w.out_h);
  const int out = w.out_dim();
  for (int o = 0; o < out; ++o) {
    double acc = w.b2[o];
    const double* row = &w.w2[static_cast<size_t>(o) * w.hidden];
    for (int i = 0; i < w.hidden; ++i) acc += row[i] * h[i];
    s.data[o] = acc;
  }
  return s;
}

double loss(const HeatmapStack& pred, const HeatmapStack& target) {
  if (pred.channels != target.channels || pred.width != target.width ||
      pred.height != target.height)
    throw ModelError("loss: shape mismatch");
  const size_t plane = pred.plane_size();
  size_t n_sup = 0;
  double acc = 0.0;
  for (int c = 0; c < pred.channels; ++c) {
    if (!target.supervised[c]) continue;
    ++n_sup;
    for (size_t i = 0; i < plane; ++i) {
      const double d = pred.data[c * plane + i] - target.data[c * plane + i];
      acc += d * d;
    }
  }
  if (n_sup == 0) return 0.0;
  return acc / (static_cast<double>(n_sup) * plane);
}

Gradients zero_gradients(const ModelWeights& w) {
  Gradients g;
  g.w1.assign(w.w1.size(), 0.0);
  g.b1.assign(w.b1.size(), 0.0);
  g.w2.assign(w.w2.size(), 0.0);
  g.b2.assign(w.b2.size(), 0.0);
  return g;
}

double accumulate_gradient(const ModelWeights& w, const std::vector<float>& crop,
                           const HeatmapStack& target, Gradients& g, double weight) {
  check_input(w, crop);
  if (target.channels != w.channels || target.width != w.out_w || target.height != w.out_h)
    throw ModelError("gradient: target shape mismatch");

  const auto h = hidden_activations(w, crop);
  const size_t plane = static_cast<size_t>(w.out_w) * w.out_h;
  size_t n_sup = 0;
  for (int c = 0; c < w.channels; ++c)
    if (target.supervised[c]) ++n_sup;
  if (n_sup == 0) return 0.0;
  const double norm = 1.0 / (static_cast<double>(n_sup) * plane);
  const double scale = weight * 2.0 * norm;
  double sample_loss = 0.0;

  // dL/dy per output, backprop through the linear head and relu
  std::vector<double> dh(w.hidden, 0.0);
  for (int c = 0; c < w.channels; ++c) {
    if (!target.supervised[c]) continue;
    for (size_t i = 0; i < plane; ++i) {
      const size_t o = c * plane + i;
      double acc = w.b2[o];
      const double* row = &w.w2[o * w.hidden];
      for (int k = 0; k < w.hidden; ++k) acc += row[k] * h[k];
      const double diff = acc - target.data[o];
      sample_loss += diff * diff * norm;
      const double dy = scale * diff;
      if (dy == 0.0) continue;
      g.b2[o] += dy;
      double* gw2 = &g.w2[o * w.hidden];
      for (int k = 0; k < w.hidden; ++k) {
        gw2[k] += dy * h[k];
        dh[k] += dy * row[k];
      }
    }
  }

  const int in = w.in_dim();
  for (int i = 0; i < w.hidden; ++i) {
    if (h[i] <= 0.0) continue;  // relu subgradient 0 at 0
    g.b1[i] += dh[i];
    double* gw1 = &g.w1[static_cast<size_t>(i) * in];
    for (int k = 0; k < in; ++k) gw1[k] += dh[i] * crop[k];
  }
  return sample_loss;
}

Velocity zero_velocity(const ModelWeights& w) {
  Velocity v;
  v.w1.assign(w.w1.size(), 0.0);
  v.b1.assign(w.b1.size(), 0.0);
  v.w2.assign(w.w2.size(), 0.0);
  v.b2.assign(w.b2.size(), 0.0);
  return v;
}

void sgd_step(ModelWeights& w, const Gradients& g, double lr, double momentum, Velocity& v) {
  if (!(lr > 0)) throw ModelError("learning rate must be positive");
  auto step = [&](std::vector<double>& wv, const std::vector<double>& gv,
                  std::vector<double>& vv) {
    for (size_t i = 0; i < wv.size(); ++i) {
      vv[i] = momentum * vv[i] - lr * gv[i];
      wv[i] += vv[i];
    }
  };
  step(w.w1, g.w1, v.w1);
  step(w.b1, g.b1, v.b1);
  step(w.w2, g.w2, v.w2);
  step(w.b2, g.b2, v.b2);
}

// --- Serialization --------------------------------------------------------

namespace {
constexpr uint32_t kMagic = 0x4C4D4B57;  // "LMKW"
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw ModelError("truncated weights file");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}
}  // namespace

void save_weights(const ModelWeights& w, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot write " + path.string());
  write_u32(out, kMagic);
  write_u32(out, kVersion);
  for (int v : {w.in_w, w.in_h, w.channels, w.out_w, w.out_h, w.hidden})
    write_u32(out, static_cast<uint32_t>(v));
  auto dump = [&](const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  };
  dump(w.w1);
  dump(w.b1);
  dump(w.w2);
  dump(w.b2);
  if (!out) throw ModelError("write failed: " + path.string());
}

ModelWeights load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open " + path.string());
  if (read_u32(in) != kMagic) throw ModelError(path.string() + ": not a weights file");
  if (read_u32(in) != kVersion) throw ModelError(path.string() + ": unsupported version");

  ModelWeights w;
  w.in_w = static_cast<int>(read_u32(in));
  w.in_h = static_cast<int>(read_u32(in));
  w.channels = static_cast<int>(read_u32(in));
  w.out_w = static_cast<int>(read_u32(in));
  w.out_h = static_cast<int>(read_u32(in));
  w.hidden = static_cast<int>(read_u32(in));
  if (w.in_w < 1 || w.in_h < 1 || w.channels < 1 || w.hidden < 1 ||
      w.out_w != w.in_w / kHeatmapStride || w.out_h != w.in_h / kHeatmapStride)
    throw ModelError(path.string() + ": inconsistent shape header");

  auto slurp = [&](std::vector<double>& v, size_t n) {
    v.resize(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw ModelError(path.string() + ": truncated payload");
  };
  slurp(w.w1, static_cast<size_t>(w.hidden) * w.in_dim());
  slurp(w.b1, w.hidden);
  slurp(w.w2, static_cast<size_t>(w.out_dim()) * w.hidden);
  slurp(w.b2, w.out_dim());
  return w;
}

}  // namespace lmk
