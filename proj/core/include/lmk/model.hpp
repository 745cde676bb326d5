#pragma once
// Trainable heatmap predictor: one-hidden-layer MLP with hand-written
// gradients, the desk-scale stand-in for a full convolutional backbone.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "lmk/heatmap.hpp"

namespace lmk {

class ModelError : public std::runtime_error {
 public:
  explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

struct ModelWeights {
  int in_w = 0, in_h = 0;      // crop size
  int channels = 0;            // aggregate landmark count
  int out_w = 0, out_h = 0;    // in / 4
  int hidden = 128;

  std::vector<double> w1;  // hidden x in_dim
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // out_dim x hidden
  std::vector<double> b2;  // out_dim

  int in_dim() const { return in_w * in_h; }
  int out_dim() const { return channels * out_w * out_h; }
};

ModelWeights init_weights(int in_w, int in_h, int channels, int hidden, uint64_t seed);

// y = W2 * relu(W1 * x + b1) + b2, reshaped to (channels, H_out, W_out).
HeatmapStack forward(const ModelWeights& w, const std::vector<float>& crop);

// MSE over pixels of supervised channels only; 0 when nothing is supervised.
double loss(const HeatmapStack& pred, const HeatmapStack& target);

struct Gradients {
  std::vector<double> w1, b1, w2, b2;
};

Gradients zero_gradients(const ModelWeights& w);

// Exact analytic gradient of loss(forward(w, crop), target); relu subgradient
// 0 at 0. Accumulates into g (scaled by weight) so batch gradients can be
// summed. Returns the sample loss.
double accumulate_gradient(const ModelWeights& w, const std::vector<float>& crop,
                           const HeatmapStack& target, Gradients& g, double weight = 1.0);

struct Velocity {
  std::vector<double> w1, b1, w2, b2;
};

Velocity zero_velocity(const ModelWeights& w);

// v <- momentum*v - lr*g; w <- w + v
void sgd_step(ModelWeights& w, const Gradients& g, double lr, double momentum, Velocity& v);

// Little-endian binary: magic, version, shape header, float64 payload.
void save_weights(const ModelWeights& w, const std::filesystem::path& path);
ModelWeights load_weights(const std::filesystem::path& path);

}  // namespace lmk
