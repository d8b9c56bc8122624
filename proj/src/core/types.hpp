#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace quiz {

// All domain errors surface as quiz::Error; the C API maps them to codes.
class Error : public std::runtime_error {
public:
  enum class Kind { InvalidArgument, Io, Format, Runtime };

  Error(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

private:
  Kind kind_;
};

[[noreturn]] inline void throw_invalid(const std::string& msg) {
  throw Error(Error::Kind::InvalidArgument, msg);
}
[[noreturn]] inline void throw_io(const std::string& msg) {
  throw Error(Error::Kind::Io, msg);
}
[[noreturn]] inline void throw_format(const std::string& msg) {
  throw Error(Error::Kind::Format, msg);
}
[[noreturn]] inline void throw_runtime(const std::string& msg) {
  throw Error(Error::Kind::Runtime, msg);
}

// Point / direction in (x, y, z) order. Continuous voxel or world mm
// depending on context; axes always match the user-facing convention.
struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3 operator*(const Vec3& o) const { return {x * o.x, y * o.y, z * o.z}; }
  Vec3 operator/(const Vec3& o) const { return {x / o.x, y / o.y, z / o.z}; }
  bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// Grid dimensions in (x, y, z) order.
struct Dims3 {
  int64_t x = 0, y = 0, z = 0;

  int64_t& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  int64_t operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  bool operator==(const Dims3& o) const { return x == o.x && y == o.y && z == o.z; }
  int64_t count() const { return x * y * z; }
  Vec3 as_vec() const { return {double(x), double(y), double(z)}; }
};

}  // namespace quiz
