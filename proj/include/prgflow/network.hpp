#pragma once

// Cascaded VanillaNet-style regressor. Each block is a stack of 3x3 stride-2
// convolutions (padding 1) with leaky-ReLU, followed by one dense layer that
// outputs the block's warp parameters. Activations are C x (H*W) matrices,
// channel-major, row-major within a channel.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "prgflow/cascade.hpp"
#include "prgflow/errors.hpp"
#include "prgflow/image.hpp"
#include "prgflow/parallel.hpp"
#include "prgflow/warp.hpp"

namespace prgflow {

inline constexpr double kLeakySlope = 0.1;

template <typename Scalar>
using Tensor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct ConvLayer {
  Tensor<Scalar> kernel;  // out x (in * 9), column (ci * 3 + ky) * 3 + kx
  VectorX<Scalar> bias;

  int in_channels() const { return static_cast<int>(kernel.cols() / 9); }
  int out_channels() const { return static_cast<int>(kernel.rows()); }
};

template <typename Scalar>
struct DenseLayer {
  Tensor<Scalar> weight;  // dof x flatten-dim
  VectorX<Scalar> bias;
};

template <typename Scalar>
struct BlockWeights {
  WarpModel model{WarpModel::PseudoSimilarity};
  std::vector<ConvLayer<Scalar>> convs;
  DenseLayer<Scalar> dense;
};

template <typename Scalar>
struct ModelWeights {
  CascadeConfig cascade;
  int input_channels{2};
  int input_size{128};
  std::vector<int> widths;
  std::uint64_t seed{0};
  std::vector<BlockWeights<Scalar>> blocks;

  template <typename Other>
  ModelWeights<Other> cast() const;
};

// Output spatial size after n stride-2 convolutions.
constexpr int conv_output_size(int size, int layers) {
  for (int i = 0; i < layers; ++i) size = (size - 1) / 2 + 1;
  return size;
}

inline std::vector<int> small_widths() { return {8, 16, 32, 32}; }
inline std::vector<int> large_widths() { return {32, 64, 128, 128}; }

struct ParamCount {
  std::uint64_t params{0};
  std::uint64_t flops{0};  // multiply-accumulates
};

template <typename Scalar>
ParamCount count_params_flops(const ModelWeights<Scalar>& w) {
  ParamCount pc;
  for (const auto& b : w.blocks) {
    int size = w.input_size;
    for (const auto& c : b.convs) {
      size = conv_output_size(size, 1);
      pc.params += static_cast<std::uint64_t>(c.kernel.size() + c.bias.size());
      pc.flops += static_cast<std::uint64_t>(size) * size * c.out_channels() * 9 * c.in_channels();
    }
    pc.params += static_cast<std::uint64_t>(b.dense.weight.size() + b.dense.bias.size());
    pc.flops += static_cast<std::uint64_t>(b.dense.weight.size());
  }
  return pc;
}

// Weights shaped for the given architecture, all zero.
template <typename Scalar>
ModelWeights<Scalar> zero_model(const CascadeConfig& cascade, int input_channels, int input_size,
                                const std::vector<int>& widths) {
  cascade.validate();
  if (input_channels < 1 || input_size < 1) throw ShapeError("network input must be non-empty");
  for (int v : widths)
    if (v < 1) throw ShapeError("network widths must be positive");
  ModelWeights<Scalar> m;
  m.cascade = cascade;
  m.input_channels = input_channels;
  m.input_size = input_size;
  m.widths = widths;
  for (WarpModel model : cascade.blocks) {
    BlockWeights<Scalar> b;
    b.model = model;
    int cin = input_channels;
    for (int cout : widths) {
      b.convs.push_back({Tensor<Scalar>::Zero(cout, cin * 9), VectorX<Scalar>::Zero(cout)});
      cin = cout;
    }
    const int fs = conv_output_size(input_size, static_cast<int>(widths.size()));
    b.dense.weight = Tensor<Scalar>::Zero(dof(model), cin * fs * fs);
    b.dense.bias = VectorX<Scalar>::Zero(dof(model));
    m.blocks.push_back(std::move(b));
  }
  return m;
}

// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
template <typename Scalar>
ModelWeights<Scalar> init_model(const CascadeConfig& cascade, int input_channels, int input_size,
                                const std::vector<int>& widths, std::uint64_t seed) {
  ModelWeights<Scalar> m = zero_model<Scalar>(cascade, input_channels, input_size, widths);
  m.seed = seed;
  std::uint64_t counter = 0;
  auto fill = [&](Tensor<Scalar>& t) {
    const double bound = std::sqrt(6.0 / static_cast<double>(t.cols()));
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const double u = static_cast<double>(derive_seed(seed, counter++) >> 11) * 0x1.0p-53;
      t.data()[i] = static_cast<Scalar>((2 * u - 1) * bound);
    }
  };
  for (auto& b : m.blocks) {
    for (auto& c : b.convs) fill(c.kernel);
    fill(b.dense.weight);
  }
  return m;
}

template <typename Scalar>
template <typename Other>
ModelWeights<Other> ModelWeights<Scalar>::cast() const {
  ModelWeights<Other> o;
  o.cascade = cascade;
  o.input_channels = input_channels;
  o.input_size = input_size;
  o.widths = widths;
  o.seed = seed;
  for (const auto& b : blocks) {
    BlockWeights<Other> ob;
    ob.model = b.model;
    for (const auto& c : b.convs)
      ob.convs.push_back({c.kernel.template cast<Other>(), c.bias.template cast<Other>()});
    ob.dense = {b.dense.weight.template cast<Other>(), b.dense.bias.template cast<Other>()};
    o.blocks.push_back(std::move(ob));
  }
  return o;
}

// Visits every parameter array in file/declaration order.
template <typename Scalar, typename Fn>
void for_each_array(ModelWeights<Scalar>& m, Fn&& fn) {
  for (auto& b : m.blocks) {
    for (auto& c : b.convs) {
      fn(c.kernel.data(), c.kernel.size());
      fn(c.bias.data(), c.bias.size());
    }
    fn(b.dense.weight.data(), b.dense.weight.size());
    fn(b.dense.bias.data(), b.dense.bias.size());
  }
}

template <typename Scalar>
VectorX<Scalar> flatten(const ModelWeights<Scalar>& m) {
  std::vector<Scalar> out;
  for_each_array(const_cast<ModelWeights<Scalar>&>(m), [&](Scalar* p, Eigen::Index n) { out.insert(out.end(), p, p + n); });
  return Eigen::Map<VectorX<Scalar>>(out.data(), static_cast<Eigen::Index>(out.size()));
}

template <typename Scalar>
void unflatten(ModelWeights<Scalar>& m, const VectorX<Scalar>& v) {
  Eigen::Index off = 0;
  for_each_array(m, [&](Scalar* p, Eigen::Index n) {
    if (off + n > v.size()) throw ShapeError("parameter vector too short");
    std::copy(v.data() + off, v.data() + off + n, p);
    off += n;
  });
  if (off != v.size()) throw ShapeError("parameter vector too long");
}

// Network input from a stacked patch pair: intensities centered on zero.
template <typename Scalar>
Tensor<Scalar> to_tensor(const ImagePlane& stack) {
  const int hw = stack.width() * stack.height();
  Tensor<Scalar> t(stack.channel_count(), hw);
  for (int c = 0; c < stack.channel_count(); ++c)
    t.row(c) = (Eigen::Map<const Eigen::RowVectorXd>(stack.channel(c).data(), hw).array() - 0.5).template cast<Scalar>();
  return t;
}

namespace detail {

template <typename Scalar>
Tensor<Scalar> im2col(const Tensor<Scalar>& in, int size) {
  const int out = conv_output_size(size, 1);
  const int cin = static_cast<int>(in.rows());
  Tensor<Scalar> col = Tensor<Scalar>::Zero(cin * 9, out * out);
  for (int c = 0; c < cin; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        Scalar* dst = col.row((c * 3 + ky) * 3 + kx).data();
        const Scalar* src = in.row(c).data();
        for (int oy = 0; oy < out; ++oy) {
          const int y = 2 * oy - 1 + ky;
          if (y < 0 || y >= size) continue;
          for (int ox = 0; ox < out; ++ox) {
            const int x = 2 * ox - 1 + kx;
            if (x >= 0 && x < size) dst[oy * out + ox] = src[y * size + x];
          }
        }
      }
  return col;
}

template <typename Scalar>
Tensor<Scalar> col2im(const Tensor<Scalar>& col, int cin, int size) {
  const int out = conv_output_size(size, 1);
  Tensor<Scalar> in = Tensor<Scalar>::Zero(cin, size * size);
  for (int c = 0; c < cin; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const Scalar* src = col.row((c * 3 + ky) * 3 + kx).data();
        Scalar* dst = in.row(c).data();
        for (int oy = 0; oy < out; ++oy) {
          const int y = 2 * oy - 1 + ky;
          if (y < 0 || y >= size) continue;
          for (int ox = 0; ox < out; ++ox) {
            const int x = 2 * ox - 1 + kx;
            if (x >= 0 && x < size) dst[y * size + x] += src[oy * out + ox];
          }
        }
      }
  return in;
}

}  // namespace detail

template <typename Scalar>
struct BlockCache {
  std::vector<Tensor<Scalar>> cols;  // im2col of each conv input
  std::vector<Tensor<Scalar>> pre;   // pre-activation of each conv
  VectorX<Scalar> flat;              // dense input
};

template <typename Scalar>
VectorX<Scalar> block_forward(const BlockWeights<Scalar>& b, const Tensor<Scalar>& input, int size,
                              BlockCache<Scalar>* cache = nullptr) {
  if (static_cast<Eigen::Index>(size) * size != input.cols())
    throw ShapeError("block input does not match declared size");
  if (!b.convs.empty() && input.rows() != b.convs.front().in_channels())
    throw ShapeError("block input channel count mismatch");
  Tensor<Scalar> act = input;
  for (const auto& c : b.convs) {
    Tensor<Scalar> col = detail::im2col(act, size);
    Tensor<Scalar> pre = c.kernel * col;
    pre.colwise() += c.bias;
    act = pre.unaryExpr([](Scalar v) { return v > Scalar(0) ? v : Scalar(kLeakySlope) * v; });
    size = conv_output_size(size, 1);
    if (cache) {
      cache->cols.push_back(std::move(col));
      cache->pre.push_back(std::move(pre));
    }
  }
  const Eigen::Map<const VectorX<Scalar>> flat(act.data(), act.size());
  if (flat.size() != b.dense.weight.cols()) throw ShapeError("dense input size mismatch");
  if (cache) cache->flat = flat;
  return b.dense.weight * flat + b.dense.bias;
}

// Reverse pass of block_forward. Gradients are accumulated into `grad`
// (shaped like the block); returns dL/d(input).
template <typename Scalar>
Tensor<Scalar> block_backward(const BlockWeights<Scalar>& b, const BlockCache<Scalar>& cache, int size,
                              const VectorX<Scalar>& upstream, BlockWeights<Scalar>& grad) {
  if (upstream.size() != b.dense.bias.size()) throw ShapeError("upstream gradient length mismatch");
  grad.dense.weight.noalias() += upstream * cache.flat.transpose();
  grad.dense.bias += upstream;
  VectorX<Scalar> dflat = b.dense.weight.transpose() * upstream;
  std::vector<int> sizes{size};
  for (std::size_t i = 0; i < b.convs.size(); ++i) sizes.push_back(conv_output_size(sizes.back(), 1));
  if (b.convs.empty())
    return Eigen::Map<Tensor<Scalar>>(dflat.data(), dflat.size() / (static_cast<Eigen::Index>(size) * size),
                                      static_cast<Eigen::Index>(size) * size);
  Tensor<Scalar> dact = Eigen::Map<Tensor<Scalar>>(dflat.data(), b.convs.back().out_channels(),
                                                   static_cast<Eigen::Index>(sizes.back()) * sizes.back());
  for (int l = static_cast<int>(b.convs.size()) - 1; l >= 0; --l) {
    const auto& c = b.convs[l];
    const Tensor<Scalar>& pre = cache.pre[l];
    const Tensor<Scalar> dpre =
        dact.binaryExpr(pre, [](Scalar d, Scalar p) { return p > Scalar(0) ? d : Scalar(kLeakySlope) * d; });
    grad.convs[l].kernel.noalias() += dpre * cache.cols[l].transpose();
    grad.convs[l].bias += dpre.rowwise().sum();
    const Tensor<Scalar> dcol = c.kernel.transpose() * dpre;
    dact = detail::col2im(dcol, c.in_channels(), sizes[l]);
  }
  return dact;
}

template <typename Scalar>
BlockWeights<Scalar> zero_like(const BlockWeights<Scalar>& b) {
  BlockWeights<Scalar> g;
  g.model = b.model;
  for (const auto& c : b.convs)
    g.convs.push_back({Tensor<Scalar>::Zero(c.kernel.rows(), c.kernel.cols()), VectorX<Scalar>::Zero(c.bias.size())});
  g.dense = {Tensor<Scalar>::Zero(b.dense.weight.rows(), b.dense.weight.cols()),
             VectorX<Scalar>::Zero(b.dense.bias.size())};
  return g;
}

template <typename Scalar>
ModelWeights<Scalar> zero_like(const ModelWeights<Scalar>& m) {
  ModelWeights<Scalar> g = m;
  for (auto& b : g.blocks) b = zero_like(b);
  return g;
}

// Block prediction on a stacked pair.
template <typename Scalar>
WarpParamsd cnn_forward(const ModelWeights<Scalar>& w, std::size_t block, const ImagePlane& stack) {
  if (block >= w.blocks.size()) throw ShapeError("block index out of range");
  if (stack.channel_count() != w.input_channels || stack.width() != w.input_size || stack.height() != w.input_size)
    throw ShapeError("network input must be " + std::to_string(w.input_size) + "x" + std::to_string(w.input_size) +
                     "x" + std::to_string(w.input_channels));
  const VectorX<Scalar> out = block_forward(w.blocks[block], to_tensor<Scalar>(stack), w.input_size);
  return WarpParamsd::from_vector(w.blocks[block].model, out.template cast<double>());
}

void save_model(const ModelWeights<float>& w, const std::filesystem::path& path);
ModelWeights<float> load_model(const std::filesystem::path& path);

}  // namespace prgflow
