#pragma once

// Per-point MLP D -> 64 -> 64 -> F with softplus between layers and a linear
// output layer. Rows are processed in fixed 128-row blocks; block boundaries do
// not depend on the job count, so results are identical for any --jobs.

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "posefeat/errors.hpp"
#include "posefeat/features.hpp"
#include "posefeat/parallel.hpp"
#include "posefeat/random.hpp"

namespace posefeat {

inline constexpr int kDefaultHiddenDim = 64;
inline constexpr std::size_t kEmbedBlockRows = 128;

using RowMatrix = FeatureMatrix;

struct DenseLayer {
  RowMatrix weight;  // out x in
  Eigen::VectorXd bias;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

/// Named view onto one contiguous parameter (or gradient) array.
struct ParamBlock {
  std::string name;
  std::span<double> values;
};

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace embed_detail {
inline std::atomic<std::uint64_t>& next_model_id() {
  static std::atomic<std::uint64_t> id{1};
  return id;
}

inline std::vector<ParamBlock> blocks_of(std::vector<DenseLayer>& layers) {
  std::vector<ParamBlock> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& w = layers[l].weight;
    auto& b = layers[l].bias;
    out.push_back({"layer" + std::to_string(l) + ".weight", {w.data(), static_cast<std::size_t>(w.size())}});
    out.push_back({"layer" + std::to_string(l) + ".bias", {b.data(), static_cast<std::size_t>(b.size())}});
  }
  return out;
}
}  // namespace embed_detail

/// Each instance has a process-unique id (copies get a fresh one) and a version
/// bumped on every mutable access; caches record both to detect staleness.
class EmbeddingModel {
 public:
  EmbeddingModel() : id_(embed_detail::next_model_id().fetch_add(1)) {}

  /// Layer widths, e.g. {14, 64, 64, 32}; Glorot-uniform weights, zero biases.
  EmbeddingModel(std::vector<int> widths, std::uint64_t seed) : EmbeddingModel() {
    if (widths.size() < 2) throw InvalidArgument("EmbeddingModel needs at least input and output widths");
    for (int w : widths)
      if (w <= 0) throw InvalidArgument("EmbeddingModel layer widths must be positive");
    seed_ = seed;
    Rng rng = make_rng(seed);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      DenseLayer layer;
      const int in = widths[l], out = widths[l + 1];
      const double a = std::sqrt(6.0 / static_cast<double>(in + out));
      layer.weight.resize(out, in);
      for (Eigen::Index r = 0; r < out; ++r)
        for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = uniform(rng, -a, a);
      layer.bias = Eigen::VectorXd::Zero(out);
      layers_.push_back(std::move(layer));
    }
  }

  EmbeddingModel(int input_dim, int output_dim, std::uint64_t seed, int hidden_dim = kDefaultHiddenDim)
      : EmbeddingModel(std::vector<int>{input_dim, hidden_dim, hidden_dim, output_dim}, seed) {}

  static EmbeddingModel from_layers(std::vector<DenseLayer> layers, std::uint64_t seed = 0) {
    EmbeddingModel m;
    m.layers_ = std::move(layers);
    m.seed_ = seed;
    m.validate();
    return m;
  }

  EmbeddingModel(const EmbeddingModel& o) : id_(embed_detail::next_model_id().fetch_add(1)), seed_(o.seed_), layers_(o.layers_) {}
  EmbeddingModel& operator=(const EmbeddingModel& o) {
    if (this != &o) {
      layers_ = o.layers_;
      seed_ = o.seed_;
      ++version_;
    }
    return *this;
  }
  EmbeddingModel(EmbeddingModel&&) noexcept = default;
  EmbeddingModel& operator=(EmbeddingModel&&) noexcept = default;

  int input_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().in_dim()); }
  int output_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().out_dim()); }
  std::vector<int> widths() const {
    std::vector<int> w;
    if (layers_.empty()) return w;
    w.push_back(input_dim());
    for (const auto& l : layers_) w.push_back(static_cast<int>(l.out_dim()));
    return w;
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }
  std::uint64_t id() const noexcept { return id_; }
  std::uint64_t version() const noexcept { return version_; }
  std::uint64_t seed() const noexcept { return seed_; }

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& mutable_layers() {
    ++version_;
    return layers_;
  }
  std::vector<ParamBlock> parameter_blocks() {
    ++version_;
    return embed_detail::blocks_of(layers_);
  }

  void validate() const {
    if (layers_.empty()) throw InvalidArgument("EmbeddingModel has no layers");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      if (layer.bias.size() != layer.weight.rows())
        throw InvalidArgument("layer " + std::to_string(l) + ": bias size does not match weight rows");
      if (l > 0 && layer.weight.cols() != layers_[l - 1].weight.rows())
        throw InvalidArgument("layer " + std::to_string(l) + ": input width does not match previous output");
      if (!layer.weight.allFinite() || !layer.bias.allFinite())
        throw NumericalError("layer " + std::to_string(l) + " has non-finite parameters");
    }
  }

 private:
  std::uint64_t id_ = 0;
  std::uint64_t version_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<DenseLayer> layers_;
};

/// Gradient storage shaped like a model's parameters.
struct ModelGradients {
  std::vector<DenseLayer> layers;

  static ModelGradients zeros_like(const EmbeddingModel& m) {
    ModelGradients g;
    for (const auto& l : m.layers())
      g.layers.push_back({RowMatrix::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
    return g;
  }
  void add(const ModelGradients& o) {
    if (o.layers.size() != layers.size()) throw InvalidArgument("ModelGradients::add: shape mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].weight += o.layers[l].weight;
      layers[l].bias += o.layers[l].bias;
    }
  }
  void scale(double s) {
    for (auto& l : layers) {
      l.weight *= s;
      l.bias *= s;
    }
  }
  std::vector<ParamBlock> blocks() { return embed_detail::blocks_of(layers); }
};

/// Layer inputs and pre-activations, tagged with the producing model's state.
struct EmbedCache {
  std::uint64_t model_id = 0;
  std::uint64_t model_version = 0;
  std::vector<RowMatrix> inputs;  // inputs[l] feeds layer l
  std::vector<RowMatrix> pre;     // pre[l] = inputs[l] * W_l^T + b_l, for hidden layers
};

struct EmbedResult {
  FeatureMatrix features;
  EmbedCache cache;
};

inline EmbedResult embed_forward(const EmbeddingModel& model, const FeatureMatrix& descriptors, std::size_t jobs = 1) {
  if (model.layers().empty()) throw InvalidArgument("embed_forward: model has no layers");
  if (descriptors.cols() != model.input_dim())
    throw InvalidArgument("embed_forward: descriptor width " + std::to_string(descriptors.cols()) +
                          " does not match model input width " + std::to_string(model.input_dim()));
  const auto& layers = model.layers();
  const std::size_t n_layers = layers.size();
  const Eigen::Index n = descriptors.rows();
  EmbedResult res;
  res.cache.model_id = model.id();
  res.cache.model_version = model.version();
  res.cache.inputs.resize(n_layers);
  res.cache.pre.resize(n_layers - 1);
  res.cache.inputs[0] = descriptors;
  for (std::size_t l = 1; l < n_layers; ++l) res.cache.inputs[l].resize(n, layers[l].in_dim());
  for (std::size_t l = 0; l + 1 < n_layers; ++l) res.cache.pre[l].resize(n, layers[l].out_dim());
  res.features.resize(n, model.output_dim());

  parallel_chunks(static_cast<std::size_t>(n), kEmbedBlockRows, jobs,
                  [&](std::size_t, std::size_t begin, std::size_t end) {
                    const auto b = static_cast<Eigen::Index>(begin);
                    const auto rows = static_cast<Eigen::Index>(end - begin);
                    for (std::size_t l = 0; l < n_layers; ++l) {
                      const auto& layer = layers[l];
                      const auto in = res.cache.inputs[l].middleRows(b, rows);
                      RowMatrix z = in * layer.weight.transpose();
                      z.rowwise() += layer.bias.transpose();
                      if (l + 1 == n_layers) {
                        res.features.middleRows(b, rows) = z;
                      } else {
                        res.cache.pre[l].middleRows(b, rows) = z;
                        res.cache.inputs[l + 1].middleRows(b, rows) = z.unaryExpr([](double x) { return softplus(x); });
                      }
                    }
                  });
  return res;
}

/// Parameter gradients of sum_i <grad_features_i, f_i>. Per-block partial sums
/// are added in block order.
inline ModelGradients embed_backward(const EmbeddingModel& model, const EmbedCache& cache,
                                     const FeatureMatrix& grad_features, std::size_t jobs = 1) {
  if (cache.model_id != model.id() || cache.model_version != model.version())
    throw InvalidArgument("embed_backward: stale activation cache (model changed since forward)");
  const auto& layers = model.layers();
  const std::size_t n_layers = layers.size();
  if (cache.inputs.size() != n_layers || cache.pre.size() + 1 != n_layers)
    throw InvalidArgument("embed_backward: cache does not match model depth");
  const Eigen::Index n = cache.inputs[0].rows();
  if (grad_features.rows() != n || grad_features.cols() != model.output_dim())
    throw InvalidArgument("embed_backward: grad_features shape does not match forward output");

  const std::size_t n_chunks = (static_cast<std::size_t>(n) + kEmbedBlockRows - 1) / kEmbedBlockRows;
  std::vector<ModelGradients> partial(n_chunks);
  parallel_chunks(static_cast<std::size_t>(n), kEmbedBlockRows, jobs,
                  [&](std::size_t c, std::size_t begin, std::size_t end) {
                    const auto b = static_cast<Eigen::Index>(begin);
                    const auto rows = static_cast<Eigen::Index>(end - begin);
                    ModelGradients g = ModelGradients::zeros_like(model);
                    RowMatrix delta = grad_features.middleRows(b, rows);
                    for (std::size_t l = n_layers; l-- > 0;) {
                      const auto in = cache.inputs[l].middleRows(b, rows);
                      g.layers[l].weight.noalias() = delta.transpose() * in;
                      g.layers[l].bias = delta.colwise().sum().transpose();
                      if (l == 0) break;
                      RowMatrix up = delta * layers[l].weight;
                      const auto z = cache.pre[l - 1].middleRows(b, rows);
                      delta = up.cwiseProduct(z.unaryExpr([](double x) { return sigmoid(x); }));
                    }
                    partial[c] = std::move(g);
                  });
  ModelGradients total = ModelGradients::zeros_like(model);
  for (const auto& g : partial) total.add(g);
  return total;
}

}  // namespace posefeat
