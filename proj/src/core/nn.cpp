#include "nn.hpp"

#include <cmath>
#include <cstring>

#include <Eigen/Core>

namespace quiz::nn {

using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<Mat>;
using MapC = Eigen::Map<const Mat>;

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, const float* a,
          const float* b, float* c, bool accumulate) {
  MapC A(a, trans_a ? k : m, trans_a ? m : k);
  MapC B(b, trans_b ? n : k, trans_b ? k : n);
  MapM C(c, m, n);
  if (!trans_a && !trans_b) {
    if (accumulate) C.noalias() += A * B; else C.noalias() = A * B;
  } else if (trans_a && !trans_b) {
    if (accumulate) C.noalias() += A.transpose() * B; else C.noalias() = A.transpose() * B;
  } else if (!trans_a && trans_b) {
    if (accumulate) C.noalias() += A * B.transpose(); else C.noalias() = A * B.transpose();
  } else {
    if (accumulate) C.noalias() += A.transpose() * B.transpose();
    else C.noalias() = A.transpose() * B.transpose();
  }
}

// ---------------------------------------------------------------------------
// Conv3d

Conv3d::Conv3d(std::string name, int64_t in_c, int64_t out_c, int64_t ksize, int64_t stride,
               int64_t pad)
    : weight(name + ".weight", {out_c, in_c * ksize * ksize * ksize}),
      in_c_(in_c), out_c_(out_c), k_(ksize), stride_(stride), pad_(pad) {}

void Conv3d::init(Rng& rng) {
  double bound = 1.0 / std::sqrt(double(in_c_ * k_ * k_ * k_));
  for (int64_t i = 0; i < weight.value.numel(); ++i)
    weight.value[i] = float(rng.uniform(-bound, bound));
}

namespace {

struct ConvDims {
  int64_t D, H, W, Do, Ho, Wo, V, K;
};

ConvDims conv_dims(const std::vector<int64_t>& xshape, int64_t in_c, int64_t k, int64_t s,
                   int64_t p) {
  ConvDims d;
  d.D = xshape[2];
  d.H = xshape[3];
  d.W = xshape[4];
  d.Do = (d.D + 2 * p - k) / s + 1;
  d.Ho = (d.H + 2 * p - k) / s + 1;
  d.Wo = (d.W + 2 * p - k) / s + 1;
  d.V = d.Do * d.Ho * d.Wo;
  d.K = in_c * k * k * k;
  return d;
}

// One sample [Cin, D, H, W] -> col [K, V].
void im2col(const float* x, const ConvDims& d, int64_t in_c, int64_t k, int64_t s, int64_t p,
            float* col) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < d.K; ++r) {
    int64_t c = r / (k * k * k);
    int64_t rem = r % (k * k * k);
    int64_t offz = rem / (k * k) - p;
    int64_t offy = (rem / k) % k - p;
    int64_t offx = rem % k - p;
    const float* xc = x + c * d.D * d.H * d.W;
    float* row = col + r * d.V;

    // valid output x range for this kernel offset
    int64_t xo_lo = offx < 0 ? (-offx + s - 1) / s : 0;
    int64_t xo_hi = (d.W - 1 - offx) / s;  // inclusive
    if (xo_hi > d.Wo - 1) xo_hi = d.Wo - 1;

    for (int64_t zo = 0; zo < d.Do; ++zo) {
      int64_t zi = zo * s + offz;
      float* plane = row + zo * d.Ho * d.Wo;
      if (zi < 0 || zi >= d.D) {
        std::memset(plane, 0, size_t(d.Ho * d.Wo) * sizeof(float));
        continue;
      }
      for (int64_t yo = 0; yo < d.Ho; ++yo) {
        int64_t yi = yo * s + offy;
        float* line = plane + yo * d.Wo;
        if (yi < 0 || yi >= d.H || xo_lo > xo_hi) {
          std::memset(line, 0, size_t(d.Wo) * sizeof(float));
          continue;
        }
        const float* src = xc + (zi * d.H + yi) * d.W;
        for (int64_t xo = 0; xo < xo_lo; ++xo) line[xo] = 0.0f;
        if (s == 1) {
          std::memcpy(line + xo_lo, src + xo_lo + offx,
                      size_t(xo_hi - xo_lo + 1) * sizeof(float));
        } else {
          for (int64_t xo = xo_lo; xo <= xo_hi; ++xo) line[xo] = src[xo * s + offx];
        }
        for (int64_t xo = xo_hi + 1; xo < d.Wo; ++xo) line[xo] = 0.0f;
      }
    }
  }
}

// Scatter-add of dcol [K, V] back into one sample's gradient [Cin, D, H, W].
void col2im(const float* dcol, const ConvDims& d, int64_t in_c, int64_t k, int64_t s,
            int64_t p, float* dx) {
  for (int64_t r = 0; r < d.K; ++r) {
    int64_t c = r / (k * k * k);
    int64_t rem = r % (k * k * k);
    int64_t offz = rem / (k * k) - p;
    int64_t offy = (rem / k) % k - p;
    int64_t offx = rem % k - p;
    float* xc = dx + c * d.D * d.H * d.W;
    const float* row = dcol + r * d.V;

    int64_t xo_lo = offx < 0 ? (-offx + s - 1) / s : 0;
    int64_t xo_hi = (d.W - 1 - offx) / s;
    if (xo_hi > d.Wo - 1) xo_hi = d.Wo - 1;

    for (int64_t zo = 0; zo < d.Do; ++zo) {
      int64_t zi = zo * s + offz;
      if (zi < 0 || zi >= d.D) continue;
      const float* plane = row + zo * d.Ho * d.Wo;
      for (int64_t yo = 0; yo < d.Ho; ++yo) {
        int64_t yi = yo * s + offy;
        if (yi < 0 || yi >= d.H) continue;
        const float* line = plane + yo * d.Wo;
        float* dst = xc + (zi * d.H + yi) * d.W;
        for (int64_t xo = xo_lo; xo <= xo_hi; ++xo) dst[xo * s + offx] += line[xo];
      }
    }
  }
}

}  // namespace

Tensor Conv3d::forward(const Tensor& x) {
  if (x.ndim() != 5 || x.dim(1) != in_c_) throw_invalid("conv3d: bad input shape");
  x_ = x;
  ConvDims d = conv_dims(x.shape(), in_c_, k_, stride_, pad_);
  int64_t B = x.dim(0);
  out_shape_ = {B, out_c_, d.Do, d.Ho, d.Wo};
  Tensor y(out_shape_);
  Tensor col({d.K, d.V});
  for (int64_t b = 0; b < B; ++b) {
    im2col(x.data() + b * in_c_ * d.D * d.H * d.W, d, in_c_, k_, stride_, pad_, col.data());
    gemm(false, false, out_c_, d.V, d.K, weight.value.data(), col.data(),
         y.data() + b * out_c_ * d.V, false);
  }
  return y;
}

Tensor Conv3d::backward(const Tensor& grad_out) {
  ConvDims d = conv_dims(x_.shape(), in_c_, k_, stride_, pad_);
  int64_t B = x_.dim(0);
  Tensor dx(x_.shape());
  Tensor col({d.K, d.V});
  Tensor dcol({d.K, d.V});
  for (int64_t b = 0; b < B; ++b) {
    const float* dy = grad_out.data() + b * out_c_ * d.V;
    // weight grad needs the forward col; rebuild it
    im2col(x_.data() + b * in_c_ * d.D * d.H * d.W, d, in_c_, k_, stride_, pad_, col.data());
    gemm(false, true, out_c_, d.K, d.V, dy, col.data(), weight.grad.data(), true);
    gemm(true, false, d.K, d.V, out_c_, weight.value.data(), dy, dcol.data(), false);
    col2im(dcol.data(), d, in_c_, k_, stride_, pad_,
           dx.data() + b * in_c_ * d.D * d.H * d.W);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// InstanceNorm3d

InstanceNorm3d::InstanceNorm3d(std::string name, int64_t channels, double eps)
    : gamma(name + ".gamma", {channels}), beta(name + ".beta", {channels}),
      channels_(channels), eps_(eps) {
  gamma.value.fill(1.0f);
}

Tensor InstanceNorm3d::forward(const Tensor& x) {
  if (x.ndim() != 5 || x.dim(1) != channels_) throw_invalid("instance norm: bad input shape");
  int64_t B = x.dim(0), V = x.dim(2) * x.dim(3) * x.dim(4);
  Tensor y(x.shape());
  xhat_ = Tensor(x.shape());
  inv_std_.assign(size_t(B * channels_), 0.0);
#pragma omp parallel for schedule(static) collapse(2)
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < channels_; ++c) {
      const float* xs = x.data() + (b * channels_ + c) * V;
      float* xh = xhat_.data() + (b * channels_ + c) * V;
      float* ys = y.data() + (b * channels_ + c) * V;
      double sum = 0.0;
      for (int64_t i = 0; i < V; ++i) sum += xs[i];
      double mean = sum / double(V);
      double var = 0.0;
      for (int64_t i = 0; i < V; ++i) {
        double dv = xs[i] - mean;
        var += dv * dv;
      }
      var /= double(V);
      double istd = 1.0 / std::sqrt(var + eps_);
      inv_std_[size_t(b * channels_ + c)] = istd;
      float g = gamma.value[c], be = beta.value[c];
      for (int64_t i = 0; i < V; ++i) {
        float h = float((xs[i] - mean) * istd);
        xh[i] = h;
        ys[i] = g * h + be;
      }
    }
  return y;
}

Tensor InstanceNorm3d::backward(const Tensor& grad_out) {
  int64_t B = xhat_.dim(0), V = xhat_.dim(2) * xhat_.dim(3) * xhat_.dim(4);
  Tensor dx(xhat_.shape());
#pragma omp parallel for schedule(static)
  for (int64_t c = 0; c < channels_; ++c) {
    double dgamma = 0.0, dbeta = 0.0;
    for (int64_t b = 0; b < B; ++b) {
      const float* dy = grad_out.data() + (b * channels_ + c) * V;
      const float* xh = xhat_.data() + (b * channels_ + c) * V;
      float* dxs = dx.data() + (b * channels_ + c) * V;
      double istd = inv_std_[size_t(b * channels_ + c)];
      float g = gamma.value[c];
      double sum_dy = 0.0, sum_dy_xh = 0.0;
      for (int64_t i = 0; i < V; ++i) {
        dgamma += double(dy[i]) * xh[i];
        dbeta += dy[i];
        sum_dy += double(dy[i]) * g;
        sum_dy_xh += double(dy[i]) * g * xh[i];
      }
      double mean_dy = sum_dy / double(V);
      double mean_dy_xh = sum_dy_xh / double(V);
      for (int64_t i = 0; i < V; ++i)
        dxs[i] = float(istd * (double(dy[i]) * g - mean_dy - double(xh[i]) * mean_dy_xh));
    }
    gamma.grad[c] += float(dgamma);
    beta.grad[c] += float(dbeta);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// ReLU

Tensor ReLU::forward(const Tensor& x) {
  Tensor y = x;
  for (int64_t i = 0; i < y.numel(); ++i)
    if (y[i] < 0.0f) y[i] = 0.0f;
  y_ = y;
  return y;
}

Tensor ReLU::backward(const Tensor& grad_out) {
  Tensor dx = grad_out;
  for (int64_t i = 0; i < dx.numel(); ++i)
    if (y_[i] <= 0.0f) dx[i] = 0.0f;
  return dx;
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(std::string name, int64_t in, int64_t out, bool with_bias)
    : weight(name + ".weight", {out, in}), in_(in), out_(out), has_bias_(with_bias) {
  if (with_bias) bias = Param(name + ".bias", {out});
}

void Linear::init_trunc_normal(Rng& rng, double sigma) {
  for (int64_t i = 0; i < weight.value.numel(); ++i)
    weight.value[i] = float(rng.truncated_normal(sigma));
  if (has_bias_) bias.value.zero();
}

void Linear::init_zero() {
  weight.value.zero();
  if (has_bias_) bias.value.zero();
}

Tensor Linear::forward(const Tensor& x) {
  if (x.dim(x.ndim() - 1) != in_) throw_invalid("linear: bad input width");
  x_ = x;
  int64_t rows = x.numel() / in_;
  std::vector<int64_t> out_shape = x.shape();
  out_shape.back() = out_;
  Tensor y(out_shape);
  gemm(false, true, rows, out_, in_, x.data(), weight.value.data(), y.data(), false);
  if (has_bias_) {
    for (int64_t r = 0; r < rows; ++r) {
      float* yr = y.data() + r * out_;
      for (int64_t j = 0; j < out_; ++j) yr[j] += bias.value[j];
    }
  }
  return y;
}

Tensor Linear::backward(const Tensor& grad_out) {
  int64_t rows = x_.numel() / in_;
  gemm(true, false, out_, in_, rows, grad_out.data(), x_.data(), weight.grad.data(), true);
  if (has_bias_) {
    for (int64_t r = 0; r < rows; ++r) {
      const float* g = grad_out.data() + r * out_;
      for (int64_t j = 0; j < out_; ++j) bias.grad[j] += g[j];
    }
  }
  Tensor dx(x_.shape());
  gemm(false, false, rows, in_, out_, grad_out.data(), weight.value.data(), dx.data(), false);
  return dx;
}

// ---------------------------------------------------------------------------
// LayerNorm

LayerNorm::LayerNorm(std::string name, int64_t dim, double eps)
    : gamma(name + ".gamma", {dim}), beta(name + ".beta", {dim}), dim_(dim), eps_(eps) {
  gamma.value.fill(1.0f);
}

Tensor LayerNorm::forward(const Tensor& x) {
  if (x.dim(x.ndim() - 1) != dim_) throw_invalid("layer norm: bad input width");
  int64_t rows = x.numel() / dim_;
  Tensor y(x.shape());
  xhat_ = Tensor(x.shape());
  inv_std_.assign(size_t(rows), 0.0);
  for (int64_t r = 0; r < rows; ++r) {
    const float* xs = x.data() + r * dim_;
    float* xh = xhat_.data() + r * dim_;
    float* ys = y.data() + r * dim_;
    double sum = 0.0;
    for (int64_t i = 0; i < dim_; ++i) sum += xs[i];
    double mean = sum / double(dim_);
    double var = 0.0;
    for (int64_t i = 0; i < dim_; ++i) {
      double dv = xs[i] - mean;
      var += dv * dv;
    }
    var /= double(dim_);
    double istd = 1.0 / std::sqrt(var + eps_);
    inv_std_[size_t(r)] = istd;
    for (int64_t i = 0; i < dim_; ++i) {
      float h = float((xs[i] - mean) * istd);
      xh[i] = h;
      ys[i] = gamma.value[i] * h + beta.value[i];
    }
  }
  return y;
}

Tensor LayerNorm::backward(const Tensor& grad_out) {
  int64_t rows = xhat_.numel() / dim_;
  Tensor dx(xhat_.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const float* dy = grad_out.data() + r * dim_;
    const float* xh = xhat_.data() + r * dim_;
    float* dxs = dx.data() + r * dim_;
    double istd = inv_std_[size_t(r)];
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (int64_t i = 0; i < dim_; ++i) {
      gamma.grad[i] += dy[i] * xh[i];
      beta.grad[i] += dy[i];
      sum_dy += double(dy[i]) * gamma.value[i];
      sum_dy_xh += double(dy[i]) * gamma.value[i] * xh[i];
    }
    double mean_dy = sum_dy / double(dim_);
    double mean_dy_xh = sum_dy_xh / double(dim_);
    for (int64_t i = 0; i < dim_; ++i)
      dxs[i] = float(istd * (double(dy[i]) * gamma.value[i] - mean_dy -
                             double(xh[i]) * mean_dy_xh));
  }
  return dx;
}

// ---------------------------------------------------------------------------
// CrossAttention

CrossAttention::CrossAttention(std::string name, int64_t dim, int64_t mem_dim, int64_t heads)
    : wq(name + ".wq", dim, dim), wk(name + ".wk", mem_dim, dim, /*bias=*/false),
      wv(name + ".wv", mem_dim, dim), wo(name + ".wo", dim, dim),
      dim_(dim), mem_dim_(mem_dim), heads_(heads), head_dim_(dim / heads) {
  if (dim % heads != 0) throw_invalid("attention dim must be divisible by heads");
}

void CrossAttention::init(Rng& rng) {
  wq.init_trunc_normal(rng);
  wk.init_trunc_normal(rng);
  wv.init_trunc_normal(rng);
  wo.init_trunc_normal(rng);
}

Tensor CrossAttention::forward(const Tensor& queries, const Tensor& memory) {
  int64_t N = queries.dim(0), S = memory.dim(0);
  memory_ = &memory;
  q_ = wq.forward(queries);
  k_ = wk.forward(memory);
  v_ = wv.forward(memory);
  attn_ = Tensor({heads_, N, S});
  context_ = Tensor({N, dim_});
  double scale = 1.0 / std::sqrt(double(head_dim_));

  Tensor scores({N, S});
  for (int64_t h = 0; h < heads_; ++h) {
    const float* qh = q_.data() + h * head_dim_;
    const float* kh = k_.data() + h * head_dim_;
    // scores = qh * kh^T with row stride dim_
    for (int64_t i = 0; i < N; ++i) {
      const float* qrow = qh + i * dim_;
      float* srow = scores.data() + i * S;
      for (int64_t j = 0; j < S; ++j) {
        const float* krow = kh + j * dim_;
        double acc = 0.0;
        for (int64_t t = 0; t < head_dim_; ++t) acc += double(qrow[t]) * krow[t];
        srow[j] = float(acc * scale);
      }
      // softmax row
      float mx = srow[0];
      for (int64_t j = 1; j < S; ++j) mx = std::max(mx, srow[j]);
      double denom = 0.0;
      for (int64_t j = 0; j < S; ++j) denom += std::exp(double(srow[j]) - mx);
      float* arow = attn_.data() + (h * N + i) * S;
      for (int64_t j = 0; j < S; ++j)
        arow[j] = float(std::exp(double(srow[j]) - mx) / denom);
      // context_h[i] = attn row * vh
      float* crow = context_.data() + i * dim_ + h * head_dim_;
      for (int64_t t = 0; t < head_dim_; ++t) crow[t] = 0.0f;
      for (int64_t j = 0; j < S; ++j) {
        const float* vrow = v_.data() + j * dim_ + h * head_dim_;
        float a = arow[j];
        for (int64_t t = 0; t < head_dim_; ++t) crow[t] += a * vrow[t];
      }
    }
  }
  return wo.forward(context_);
}

Tensor CrossAttention::backward(const Tensor& grad_out, Tensor& grad_memory) {
  int64_t N = q_.dim(0), S = k_.dim(0);
  Tensor dcontext = wo.backward(grad_out);
  Tensor dq({N, dim_}), dk({S, dim_}), dv({S, dim_});
  double scale = 1.0 / std::sqrt(double(head_dim_));

  for (int64_t h = 0; h < heads_; ++h) {
    for (int64_t i = 0; i < N; ++i) {
      const float* arow = attn_.data() + (h * N + i) * S;
      const float* dcrow = dcontext.data() + i * dim_ + h * head_dim_;
      // dattn_j = dcontext_h[i] . v_h[j], accumulating dv along the way
      double dot_dp_p = 0.0;
      std::vector<double> dattn(static_cast<size_t>(S));
      for (int64_t j = 0; j < S; ++j) {
        const float* vrow = v_.data() + j * dim_ + h * head_dim_;
        float* dvrow = dv.data() + j * dim_ + h * head_dim_;
        double acc = 0.0;
        for (int64_t t = 0; t < head_dim_; ++t) {
          acc += double(dcrow[t]) * vrow[t];
          dvrow[t] += arow[j] * dcrow[t];
        }
        dattn[size_t(j)] = acc;
        dot_dp_p += acc * arow[j];
      }
      // softmax backward then score scale
      const float* qrow = q_.data() + i * dim_ + h * head_dim_;
      float* dqrow = dq.data() + i * dim_ + h * head_dim_;
      for (int64_t j = 0; j < S; ++j) {
        double ds = arow[j] * (dattn[size_t(j)] - dot_dp_p) * scale;
        const float* krow = k_.data() + j * dim_ + h * head_dim_;
        float* dkrow = dk.data() + j * dim_ + h * head_dim_;
        for (int64_t t = 0; t < head_dim_; ++t) {
          dqrow[t] += float(ds) * krow[t];
          dkrow[t] += float(ds) * qrow[t];
        }
      }
    }
  }

  Tensor dqueries = wq.backward(dq);
  Tensor dm1 = wk.backward(dk);
  Tensor dm2 = wv.backward(dv);
  for (int64_t i = 0; i < grad_memory.numel(); ++i) grad_memory[i] += dm1[i] + dm2[i];
  return dqueries;
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(std::vector<Param*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (Param* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::zero_grad() {
  for (Param* p : params_) p->zero_grad();
}

void Adam::step() {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, double(t_));
  double bc2 = 1.0 - std::pow(beta2_, double(t_));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Param& p = *params_[pi];
    float* w = p.value.data();
    const float* g = p.grad.data();
    float* m = m_[pi].data();
    float* v = v_[pi].data();
    int64_t n = p.value.numel();
    for (int64_t i = 0; i < n; ++i) {
      double gi = g[i];
      double mi = beta1_ * m[i] + (1.0 - beta1_) * gi;
      double vi = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      m[i] = float(mi);
      v[i] = float(vi);
      double mhat = mi / bc1;
      double vhat = vi / bc2;
      w[i] = float(w[i] - lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

// ---------------------------------------------------------------------------
// Positional encoding

Tensor positional_encoding_3d(const Tensor& coords, int64_t dim) {
  if (coords.ndim() != 2 || coords.dim(1) != 3) throw_invalid("pe3d: coords must be [N,3]");
  int64_t N = coords.dim(0);
  int64_t npf = ((dim + 2) / 3 + 1) / 2 * 2;  // even features per axis
  Tensor out({N, dim});
  // geometric frequency ladder from a half cycle (monotone over [0,1]) up to
  // 64 cycles, so both coarse position and sub-voxel offsets are encoded
  std::vector<double> freqs(size_t(npf / 2));
  for (int64_t j = 0; j < npf / 2; ++j)
    freqs[size_t(j)] = 0.5 * std::pow(128.0, double(j) / double(npf / 2 - 1));
  for (int64_t i = 0; i < N; ++i) {
    float* row = out.data() + i * dim;
    int64_t idx = 0;
    for (int a = 0; a < 3 && idx < dim; ++a) {
      double p = coords[i * 3 + a];
      for (int64_t j = 0; j < npf / 2 && idx < dim; ++j) {
        double t = 2.0 * M_PI * p * freqs[size_t(j)];
        row[idx++] = float(std::sin(t));
        if (idx < dim) row[idx++] = float(std::cos(t));
        else break;
      }
    }
  }
  return out;
}

}  // namespace quiz::nn
