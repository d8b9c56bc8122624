#pragma once

#include <memory>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace quiz::nn {

// Named trainable tensor with its gradient accumulator.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, std::vector<int64_t> shape)
      : name(std::move(n)), value(shape), grad(shape) {}
  void zero_grad() { grad.zero(); }
};

// Row-major C = alpha*op(A)*op(B) (+ C if accumulate). Thin wrapper over
// Eigen so every matmul in the project shares one code path.
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, const float* a,
          const float* b, float* c, bool accumulate);

// ---------------------------------------------------------------------------
// Layers. Each forward caches what its backward needs; backward returns the
// input gradient and accumulates parameter gradients. One in-flight
// forward/backward per layer instance.

// 3-D convolution over [B, C, D, H, W], cubic kernel, symmetric zero padding.
// No bias: every conv here feeds a normalization that cancels constant
// shifts, which would leave the bias with exactly zero gradient.
class Conv3d {
public:
  Conv3d(std::string name, int64_t in_c, int64_t out_c, int64_t ksize, int64_t stride,
         int64_t pad);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);

  void init(Rng& rng);  // fan-in uniform
  Param weight;         // [out_c, in_c*k^3]

  int64_t in_channels() const { return in_c_; }
  int64_t out_channels() const { return out_c_; }

private:
  int64_t in_c_, out_c_, k_, stride_, pad_;
  Tensor x_;  // cached input
  std::vector<int64_t> out_shape_;
};

// Per-(sample, channel) normalization over the spatial extent, with affine
// parameters.
class InstanceNorm3d {
public:
  InstanceNorm3d(std::string name, int64_t channels, double eps = 1e-5);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);

  Param gamma, beta;

private:
  int64_t channels_;
  double eps_;
  Tensor xhat_;
  std::vector<double> inv_std_;
};

class ReLU {
public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);

private:
  Tensor y_;
};

// y = x * W^T + b over the last axis of a [N, in] tensor.
class Linear {
public:
  Linear(std::string name, int64_t in, int64_t out, bool bias = true);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);

  void init_trunc_normal(Rng& rng, double sigma = 0.02);
  void init_zero();

  Param weight;  // [out, in]
  Param bias;    // [out] (empty when disabled)
  bool has_bias() const { return has_bias_; }

private:
  int64_t in_, out_;
  bool has_bias_;
  Tensor x_;
};

// LayerNorm over the last axis.
class LayerNorm {
public:
  LayerNorm(std::string name, int64_t dim, double eps = 1e-5);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);

  Param gamma, beta;

private:
  int64_t dim_;
  double eps_;
  Tensor xhat_;
  std::vector<double> inv_std_;
};

// Multi-head cross-attention: queries [N, dim] attend to memory [S, mem_dim].
// The key projection carries no bias (a shared key offset cancels in softmax
// and would be a dead parameter).
class CrossAttention {
public:
  CrossAttention(std::string name, int64_t dim, int64_t mem_dim, int64_t heads);

  Tensor forward(const Tensor& queries, const Tensor& memory);
  // Returns grad wrt queries; adds memory grad into grad_memory.
  Tensor backward(const Tensor& grad_out, Tensor& grad_memory);

  void init(Rng& rng);

  Linear wq, wk, wv, wo;

private:
  int64_t dim_, mem_dim_, heads_, head_dim_;
  Tensor q_, k_, v_, attn_, context_;
  const Tensor* memory_ = nullptr;
};

// ---------------------------------------------------------------------------

// Adam with bias correction; conventional (0.9, 0.999, 1e-8), no decay.
class Adam {
public:
  explicit Adam(std::vector<Param*> params, double lr = 1e-4, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  void step();
  void zero_grad();
  double lr() const { return lr_; }

private:
  std::vector<Param*> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

// Sinusoidal 3-D positional encoding of normalized [0,1] coordinates:
// interleaved sin/cos per axis, axes concatenated then truncated to dim.
// coords: [N, 3] in (x, y, z) order; returns [N, dim].
Tensor positional_encoding_3d(const Tensor& coords, int64_t dim);

}  // namespace quiz::nn
