#include "metrics.hpp"

#include <cmath>

namespace quiz {

double l_pair_loss(const std::vector<Vec3>& d_pred, const std::vector<Vec3>& q,
                   const std::vector<Vec3>& q_t, std::vector<Vec3>* grad_pred) {
  size_t n = d_pred.size();
  if (n == 0) throw_invalid("l_pair: empty prediction set");
  if (q.size() != n || q_t.size() != n) throw_invalid("l_pair: shape mismatch");

  double sum = 0.0;
  if (grad_pred) grad_pred->assign(n, Vec3{});
  for (size_t i = 0; i < n; ++i) {
    Vec3 r = d_pred[i] + q[i] - q_t[i];
    sum += r.x * r.x + r.y * r.y + r.z * r.z;
    if (grad_pred) (*grad_pred)[i] = r * (2.0 / double(n));
  }
  return sum / double(n);
}

namespace {
constexpr double kNccEps = 1e-8;
}

double ncc_global(const float* a, const float* b, int64_t n) {
  double sa = 0, sb = 0;
  for (int64_t i = 0; i < n; ++i) {
    sa += a[i];
    sb += b[i];
  }
  double ma = sa / double(n), mb = sb / double(n);
  double cov = 0, va = 0, vb = 0;
  for (int64_t i = 0; i < n; ++i) {
    double da = a[i] - ma, db = b[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  return cov / std::sqrt(va * vb + kNccEps);
}

double ncc_global_grad(const float* a, const float* b, int64_t n, float* grad_b) {
  double sa = 0, sb = 0;
  for (int64_t i = 0; i < n; ++i) {
    sa += a[i];
    sb += b[i];
  }
  double ma = sa / double(n), mb = sb / double(n);
  double cov = 0, va = 0, vb = 0;
  for (int64_t i = 0; i < n; ++i) {
    double da = a[i] - ma, db = b[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  double denom = std::sqrt(va * vb + kNccEps);
  double value = cov / denom;
  // d ncc / d b_k = (a_k - ma)/denom - ncc * (b_k - mb) * va / denom^2
  double c1 = 1.0 / denom;
  double c2 = value * va / (denom * denom);
  for (int64_t i = 0; i < n; ++i)
    grad_b[i] = float((a[i] - ma) * c1 - (b[i] - mb) * c2);
  return value;
}

namespace {

// Summed-area table with one layer of zero padding at the low end.
struct Sat {
  Dims3 d;
  std::vector<double> s;

  Sat(const Volume& v, const Volume* w = nullptr) : d(v.dims()) {
    s.assign(size_t((d.x + 1) * (d.y + 1) * (d.z + 1)), 0.0);
    auto S = [&](int64_t x, int64_t y, int64_t z) -> double& {
      return s[(z * (d.y + 1) + y) * (d.x + 1) + x];
    };
    for (int64_t z = 1; z <= d.z; ++z)
      for (int64_t y = 1; y <= d.y; ++y)
        for (int64_t x = 1; x <= d.x; ++x) {
          double val = v.at(x - 1, y - 1, z - 1);
          if (w) val *= w->at(x - 1, y - 1, z - 1);
          S(x, y, z) = val + S(x - 1, y, z) + S(x, y - 1, z) + S(x, y, z - 1) -
                       S(x - 1, y - 1, z) - S(x - 1, y, z - 1) - S(x, y - 1, z - 1) +
                       S(x - 1, y - 1, z - 1);
        }
  }

  // Inclusive box sum over [x0,x1] x [y0,y1] x [z0,z1].
  double box(int64_t x0, int64_t y0, int64_t z0, int64_t x1, int64_t y1, int64_t z1) const {
    auto S = [&](int64_t x, int64_t y, int64_t z) {
      return s[(z * (d.y + 1) + y) * (d.x + 1) + x];
    };
    ++x1; ++y1; ++z1;
    return S(x1, y1, z1) - S(x0, y1, z1) - S(x1, y0, z1) - S(x1, y1, z0) +
           S(x0, y0, z1) + S(x0, y1, z0) + S(x1, y0, z0) - S(x0, y0, z0);
  }
};

double ncc_local(const Volume& a, const Volume& b, int window) {
  const Dims3& d = a.dims();
  int r = window / 2;
  if (d.x < window || d.y < window || d.z < window)
    throw_invalid("ncc window larger than volume");

  Sat sa(a), sb(b), sab(a, &b), saa(a, &a), sbb(b, &b);
  double m = double(window) * window * window;
  double acc = 0.0;
  int64_t count = 0;
  for (int64_t z = r; z < d.z - r; ++z)
    for (int64_t y = r; y < d.y - r; ++y)
      for (int64_t x = r; x < d.x - r; ++x) {
        int64_t x0 = x - r, y0 = y - r, z0 = z - r;
        int64_t x1 = x + r, y1 = y + r, z1 = z + r;
        double Sa = sa.box(x0, y0, z0, x1, y1, z1);
        double Sb = sb.box(x0, y0, z0, x1, y1, z1);
        double cov = sab.box(x0, y0, z0, x1, y1, z1) - Sa * Sb / m;
        double va = saa.box(x0, y0, z0, x1, y1, z1) - Sa * Sa / m;
        double vb = sbb.box(x0, y0, z0, x1, y1, z1) - Sb * Sb / m;
        ++count;
        if (va <= 1e-12 || vb <= 1e-12) continue;  // zero-variance window
        acc += cov / std::sqrt(va * vb + kNccEps);
      }
  if (count == 0) throw_invalid("ncc: no valid window centers");
  return acc / double(count);
}

}  // namespace

double ncc(const Volume& a, const Volume& b, int window) {
  if (!(a.dims() == b.dims())) throw_invalid("ncc: shape mismatch");
  if (window == 0) return ncc_global(a.data().data(), b.data().data(), a.size());
  if (window < 0 || window % 2 == 0) throw_invalid("ncc: window must be odd");
  return ncc_local(a, b, window);
}

double l_trans(const Volume& reference, const Volume& warped_search, int window) {
  return -ncc(reference, warped_search, window);
}

LossReport total_loss(double lp, double lt, double alpha) {
  if (lp < 0) throw_invalid("l_pair must be nonnegative");
  LossReport r;
  r.l_pair = lp;
  r.l_trans = lt;
  r.alpha = alpha;
  r.total = lp + alpha * lt;
  return r;
}

double tre(const std::vector<Vec3>& a_pts, const std::vector<Vec3>& b_pts) {
  if (a_pts.empty()) throw_invalid("tre: empty point set");
  if (a_pts.size() != b_pts.size()) throw_invalid("tre: shape mismatch");
  double sum = 0.0;
  for (size_t i = 0; i < a_pts.size(); ++i) sum += (a_pts[i] - b_pts[i]).norm();
  return sum / double(a_pts.size());
}

double rtre(double tre_val, const Vec3& extent_mm) {
  double diag = extent_mm.norm();
  if (!(diag > 0)) throw_invalid("rtre: non-positive diagonal");
  return tre_val / diag;
}

}  // namespace quiz
