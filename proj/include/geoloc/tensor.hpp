#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "geoloc/error.hpp"

namespace geoloc {

/// Dense row-major tensor of doubles.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0)
      : shape(std::move(dims)), data(element_count(shape), fill) {}
  Tensor(std::vector<std::size_t> dims, std::vector<double> values) : shape(std::move(dims)), data(std::move(values)) {
    if (data.size() != element_count(shape)) fail(ErrorKind::ShapeMismatch, "data length does not match shape");
  }

  static std::size_t element_count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t axis) const { return shape.at(axis); }
  std::size_t size() const { return data.size(); }

  double& operator()(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) { return data[(i * shape[1] + j) * shape[2] + k]; }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }

  /// Innermost-axis slice of a rank-3 tensor.
  std::span<const double> fiber(std::size_t i, std::size_t j) const {
    return {data.data() + (i * shape[1] + j) * shape[2], shape[2]};
  }
  std::span<double> fiber(std::size_t i, std::size_t j) { return {data.data() + (i * shape[1] + j) * shape[2], shape[2]}; }

  bool all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Softmax over every entry of an H x W map, max-subtracted.
inline Tensor softmax_map(const Tensor& logits) {
  if (logits.rank() != 2) fail(ErrorKind::ShapeMismatch, "softmax_map expects a rank-2 map");
  Tensor out(logits.shape);
  if (logits.size() == 0) return out;
  const double peak = *std::max_element(logits.data.begin(), logits.data.end());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out.data[k] = std::exp(logits.data[k] - peak);
    total += out.data[k];
  }
  for (double& v : out.data) v /= total;
  return out;
}

enum class PoolingMode {
  MeanOfWeighted,  // G = mean over pixels of (a_bar * F); carries the 1/(H*W) factor
  WeightedSum,     // G = sum over pixels of (a_bar * F)
};

/// Attention pooling of a feature map F (H x W x E) by logits a (H x W).
inline std::vector<double> attention_pool(const Tensor& features, const Tensor& logits,
                                          PoolingMode mode = PoolingMode::MeanOfWeighted) {
  if (features.rank() != 3 || logits.rank() != 2 || features.dim(0) != logits.dim(0) ||
      features.dim(1) != logits.dim(1))
    fail(ErrorKind::ShapeMismatch, "attention_pool: feature map and attention map disagree");
  const Tensor weights = softmax_map(logits);
  const std::size_t h = features.dim(0), w = features.dim(1), e = features.dim(2);
  std::vector<double> pooled(e, 0.0);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const double a = weights(i, j);
      const auto f = features.fiber(i, j);
      for (std::size_t k = 0; k < e; ++k) pooled[k] += a * f[k];
    }
  if (mode == PoolingMode::MeanOfWeighted) {
    const double scale = 1.0 / static_cast<double>(h * w);
    for (double& v : pooled) v *= scale;
  }
  return pooled;
}

/// Nearest-cell lookup of the feature vector under an image-space center in
/// each map (rows x cols x channels), concatenated in map order.
inline std::vector<double> sample_multires(const std::vector<Tensor>& maps, double center_x, double center_y,
                                           double image_width, double image_height) {
  if (!(center_x >= 0.0 && center_x <= image_width && center_y >= 0.0 && center_y <= image_height))
    fail(ErrorKind::OutOfBounds, "center outside the image");
  std::vector<double> out;
  for (const Tensor& m : maps) {
    if (m.rank() != 3) fail(ErrorKind::ShapeMismatch, "feature maps must be rank 3");
    const std::size_t rows = m.dim(0), cols = m.dim(1);
    const auto row = std::min<std::size_t>(rows - 1, static_cast<std::size_t>(std::floor(center_y / image_height * rows)));
    const auto col = std::min<std::size_t>(cols - 1, static_cast<std::size_t>(std::floor(center_x / image_width * cols)));
    const auto f = m.fiber(row, col);
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

}  // namespace geoloc
