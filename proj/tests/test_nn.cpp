#include <doctest.h>

#include <cmath>

#include "core/nn.hpp"
#include "core/rng.hpp"

using namespace quiz;
using namespace quiz::nn;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1, double hi = 1) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = float(rng.uniform(lo, hi));
  return t;
}

// central-difference check of d(sum(w * y))/d x against backward()
template <typename Layer>
void check_input_grad(Layer& layer, const Tensor& x, double h, double tol, Rng& rng,
                      int probes = 8) {
  Tensor y = layer.forward(x);
  Tensor w(y.shape());
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = float(rng.uniform(-1, 1));
  Tensor dx = layer.backward(w);

  for (int probe = 0; probe < probes; ++probe) {
    int64_t i = rng.uniform_int(0, x.numel() - 1);
    Tensor xp = x, xm = x;
    xp[i] += float(h);
    xm[i] -= float(h);
    double lp = 0, lm = 0;
    Tensor yp = layer.forward(xp);
    for (int64_t j = 0; j < yp.numel(); ++j) lp += double(w[j]) * yp[j];
    Tensor ym = layer.forward(xm);
    for (int64_t j = 0; j < ym.numel(); ++j) lm += double(w[j]) * ym[j];
    double fd = (lp - lm) / (2 * h);
    double got = dx[i];
    CHECK(std::abs(got - fd) <= tol * std::max(1.0, std::abs(fd)));
  }
}

}  // namespace

TEST_CASE("gemm against a hand loop") {
  Rng rng(1);
  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng);
  Tensor c({3, 5});
  gemm(false, false, 3, 5, 4, a.data(), b.data(), c.data(), false);
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < 5; ++j) {
      double acc = 0;
      for (int64_t k = 0; k < 4; ++k) acc += double(a[i * 4 + k]) * b[k * 5 + j];
      CHECK(c[i * 5 + j] == doctest::Approx(acc).epsilon(1e-5));
    }

  // transposed variants agree with explicit transposition
  Tensor at({4, 3});
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t k = 0; k < 4; ++k) at[k * 3 + i] = a[i * 4 + k];
  Tensor c2({3, 5});
  gemm(true, false, 3, 5, 4, at.data(), b.data(), c2.data(), false);
  for (int64_t i = 0; i < 15; ++i) CHECK(c2[i] == doctest::Approx(c[i]).epsilon(1e-5));
}

TEST_CASE("conv3d forward matches a naive 7-loop reference") {
  Rng rng(2);
  const int64_t B = 2, Cin = 3, Cout = 4, D = 6, H = 5, W = 7, k = 3;
  for (int64_t stride : {1, 2}) {
    Conv3d conv("c", Cin, Cout, k, stride, 1);
    conv.init(rng);
    Tensor x = random_tensor({B, Cin, D, H, W}, rng);
    Tensor y = conv.forward(x);

    int64_t Do = (D + 2 - k) / stride + 1, Ho = (H + 2 - k) / stride + 1,
            Wo = (W + 2 - k) / stride + 1;
    REQUIRE(y.shape() == std::vector<int64_t>{B, Cout, Do, Ho, Wo});

    auto xat = [&](int64_t b, int64_t c, int64_t z, int64_t yy, int64_t xx) -> double {
      if (z < 0 || z >= D || yy < 0 || yy >= H || xx < 0 || xx >= W) return 0.0;
      return x[(((b * Cin + c) * D + z) * H + yy) * W + xx];
    };
    for (int64_t b = 0; b < B; ++b)
      for (int64_t oc = 0; oc < Cout; ++oc)
        for (int64_t z = 0; z < Do; ++z)
          for (int64_t yy = 0; yy < Ho; ++yy)
            for (int64_t xx = 0; xx < Wo; ++xx) {
              double acc = 0;
              for (int64_t ic = 0; ic < Cin; ++ic)
                for (int64_t kz = 0; kz < k; ++kz)
                  for (int64_t ky = 0; ky < k; ++ky)
                    for (int64_t kx = 0; kx < k; ++kx) {
                      double wv =
                          conv.weight
                              .value[(oc * Cin + ic) * 27 + (kz * k + ky) * k + kx];
                      acc += wv * xat(b, ic, z * stride - 1 + kz, yy * stride - 1 + ky,
                                      xx * stride - 1 + kx);
                    }
              double got = y[(((b * Cout + oc) * Do + z) * Ho + yy) * Wo + xx];
              CHECK(std::abs(got - acc) < 1e-4);
            }
  }
}

TEST_CASE("conv3d gradients match finite differences") {
  Rng rng(3);
  for (int64_t stride : {1, 2}) {
    Conv3d conv("c", 2, 3, 3, stride, 1);
    conv.init(rng);
    Tensor x = random_tensor({1, 2, 5, 5, 5}, rng);
    check_input_grad(conv, x, 1e-2, 2e-2, rng);

    // weight gradient
    Tensor y = conv.forward(x);
    Tensor w(y.shape());
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = float(rng.uniform(-1, 1));
    conv.weight.grad.zero();
    conv.backward(w);
    const double h = 1e-2;
    for (int probe = 0; probe < 8; ++probe) {
      int64_t i = rng.uniform_int(0, conv.weight.value.numel() - 1);
      float keep = conv.weight.value[i];
      conv.weight.value[i] = keep + float(h);
      Tensor yp = conv.forward(x);
      conv.weight.value[i] = keep - float(h);
      Tensor ym = conv.forward(x);
      conv.weight.value[i] = keep;
      double lp = 0, lm = 0;
      for (int64_t j = 0; j < yp.numel(); ++j) {
        lp += double(w[j]) * yp[j];
        lm += double(w[j]) * ym[j];
      }
      double fd = (lp - lm) / (2 * h);
      CHECK(std::abs(conv.weight.grad[i] - fd) <= 2e-2 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("instance norm normalizes and backward matches finite differences") {
  Rng rng(4);
  InstanceNorm3d norm("n", 3);
  Tensor x = random_tensor({2, 3, 4, 4, 4}, rng, 0.0, 4.0);
  Tensor y = norm.forward(x);

  // unit gamma, zero beta: per-(sample, channel) mean 0, variance 1
  int64_t V = 64;
  for (int64_t b = 0; b < 2; ++b)
    for (int64_t c = 0; c < 3; ++c) {
      double mean = 0, var = 0;
      for (int64_t i = 0; i < V; ++i) mean += y[(b * 3 + c) * V + i];
      mean /= double(V);
      for (int64_t i = 0; i < V; ++i) {
        double d = y[(b * 3 + c) * V + i] - mean;
        var += d * d;
      }
      var /= double(V);
      CHECK(std::abs(mean) < 1e-5);
      CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }

  norm.gamma.value[1] = 1.7f;
  norm.beta.value[2] = -0.4f;
  check_input_grad(norm, x, 1e-2, 2e-2, rng);
}

TEST_CASE("linear and layer norm gradients") {
  Rng rng(5);
  Linear lin("l", 6, 4);
  lin.init_trunc_normal(rng, 0.3);
  Tensor x = random_tensor({5, 6}, rng);
  check_input_grad(lin, x, 1e-2, 2e-2, rng);

  LayerNorm ln("ln", 6);
  ln.gamma.value[2] = 1.4f;
  check_input_grad(ln, x, 1e-2, 2e-2, rng);
}

TEST_CASE("relu") {
  ReLU relu;
  Tensor x({4}, {-1.0f, 0.0f, 2.0f, -0.5f});
  Tensor y = relu.forward(x);
  CHECK(y[0] == 0.0f);
  CHECK(y[2] == 2.0f);
  Tensor g({4}, {1.0f, 1.0f, 1.0f, 1.0f});
  Tensor dx = relu.backward(g);
  CHECK(dx[0] == 0.0f);
  CHECK(dx[2] == 1.0f);
}

TEST_CASE("cross attention: gradients wrt queries and memory") {
  Rng rng(6);
  CrossAttention attn("a", 8, 6, 2);
  attn.init(rng);
  // larger init so attention is not uniform
  for (int64_t i = 0; i < attn.wq.weight.value.numel(); ++i)
    attn.wq.weight.value[i] = float(rng.uniform(-0.4, 0.4));
  for (int64_t i = 0; i < attn.wk.weight.value.numel(); ++i)
    attn.wk.weight.value[i] = float(rng.uniform(-0.4, 0.4));

  Tensor queries = random_tensor({3, 8}, rng);
  Tensor memory = random_tensor({7, 6}, rng);

  Tensor y = attn.forward(queries, memory);
  REQUIRE(y.shape() == std::vector<int64_t>{3, 8});
  Tensor w(y.shape());
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = float(rng.uniform(-1, 1));

  Tensor grad_mem({7, 6});
  Tensor dq = attn.backward(w, grad_mem);

  const double h = 1e-3;
  auto loss_at = [&](const Tensor& q, const Tensor& m) {
    Tensor out = attn.forward(q, m);
    double l = 0;
    for (int64_t j = 0; j < out.numel(); ++j) l += double(w[j]) * out[j];
    return l;
  };
  for (int probe = 0; probe < 8; ++probe) {
    int64_t i = rng.uniform_int(0, queries.numel() - 1);
    Tensor qp = queries, qm = queries;
    qp[i] += float(h);
    qm[i] -= float(h);
    double fd = (loss_at(qp, memory) - loss_at(qm, memory)) / (2 * h);
    CHECK(std::abs(dq[i] - fd) <= 3e-2 * std::max(1.0, std::abs(fd)));
  }
  for (int probe = 0; probe < 8; ++probe) {
    int64_t i = rng.uniform_int(0, memory.numel() - 1);
    Tensor mp = memory, mm = memory;
    mp[i] += float(h);
    mm[i] -= float(h);
    double fd = (loss_at(queries, mp) - loss_at(queries, mm)) / (2 * h);
    CHECK(std::abs(grad_mem[i] - fd) <= 3e-2 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("adam moves parameters against the gradient") {
  Param p("p", {4});
  for (int64_t i = 0; i < 4; ++i) p.value[i] = 1.0f;
  Adam adam({&p}, 0.1);
  for (int step = 0; step < 10; ++step) {
    p.zero_grad();
    for (int64_t i = 0; i < 4; ++i) p.grad[i] = 2.0f * p.value[i];  // d/dx of x^2
    adam.step();
  }
  for (int64_t i = 0; i < 4; ++i) CHECK(p.value[i] < 1.0f);
}

TEST_CASE("positional encoding shape and range") {
  Tensor coords({2, 3}, {0.0f, 0.5f, 1.0f, 0.25f, 0.75f, 0.1f});
  Tensor pe = positional_encoding_3d(coords, 64);
  REQUIRE(pe.shape() == std::vector<int64_t>{2, 64});
  for (int64_t i = 0; i < pe.numel(); ++i) {
    CHECK(pe[i] <= 1.0f);
    CHECK(pe[i] >= -1.0f);
  }
  // distinct positions produce distinct encodings
  double diff = 0;
  for (int64_t i = 0; i < 64; ++i) diff += std::abs(pe[i] - pe[64 + i]);
  CHECK(diff > 0.1);
}
