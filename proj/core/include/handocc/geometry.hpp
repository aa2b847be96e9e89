// Copyright 2026 The handocc Authors.
// Distributed under the Apache License, Version 2.0.
// See the accompanying LICENSE file or http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace handocc {

/// Minimal 3-vector, templated on scalar so the mesh generator can run on
/// dual numbers as well as plain doubles. All lengths are millimeters.
template <class T>
struct Vec3 {
  T x{}, y{}, z{};

  constexpr Vec3() = default;
  constexpr Vec3(T xx, T yy, T zz) : x(xx), y(yy), z(zz) {}

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(const T& s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(const T& s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  Vec3& operator*=(const T& s) { x *= s; y *= s; z *= s; return *this; }

  T& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  const T& operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

template <class T>
constexpr Vec3<T> operator*(const T& s, const Vec3<T>& v) { return v * s; }

template <class T>
constexpr T dot(const Vec3<T>& a, const Vec3<T>& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

template <class T>
constexpr Vec3<T> cross(const Vec3<T>& a, const Vec3<T>& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

template <class T>
T norm(const Vec3<T>& v) {
  using std::sqrt;
  return sqrt(dot(v, v));
}

template <class T>
constexpr T squared_norm(const Vec3<T>& v) { return dot(v, v); }

template <class T>
Vec3<T> normalized(const Vec3<T>& v) { return v / norm(v); }

template <class T>
constexpr Vec3<T> lerp(const Vec3<T>& a, const Vec3<T>& b, const T& t) {
  return a + (b - a) * t;
}

using Vec3d = Vec3<double>;

/// Column-major 3x3 matrix.
template <class T>
struct Mat3 {
  // m[c] is column c.
  std::array<Vec3<T>, 3> col{};

  static Mat3 identity() {
    Mat3 r;
    r.col[0] = {T(1), T(0), T(0)};
    r.col[1] = {T(0), T(1), T(0)};
    r.col[2] = {T(0), T(0), T(1)};
    return r;
  }
  static Mat3 from_cols(const Vec3<T>& a, const Vec3<T>& b, const Vec3<T>& c) {
    Mat3 r;
    r.col = {a, b, c};
    return r;
  }

  Vec3<T> operator*(const Vec3<T>& v) const {
    return col[0] * v.x + col[1] * v.y + col[2] * v.z;
  }
  Mat3 operator*(const Mat3& o) const {
    return from_cols((*this) * o.col[0], (*this) * o.col[1], (*this) * o.col[2]);
  }
  Mat3 transposed() const {
    Mat3 r;
    r.col[0] = {col[0].x, col[1].x, col[2].x};
    r.col[1] = {col[0].y, col[1].y, col[2].y};
    r.col[2] = {col[0].z, col[1].z, col[2].z};
    return r;
  }
};

using Mat3d = Mat3<double>;

/// Rotation about a unit axis by `angle` radians (Rodrigues).
inline Mat3d axis_angle_matrix(const Vec3d& unit_axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  const Vec3d& k = unit_axis;
  Mat3d r;
  r.col[0] = {c + k.x * k.x * (1 - c), k.y * k.x * (1 - c) + k.z * s, k.z * k.x * (1 - c) - k.y * s};
  r.col[1] = {k.x * k.y * (1 - c) - k.z * s, c + k.y * k.y * (1 - c), k.z * k.y * (1 - c) + k.x * s};
  r.col[2] = {k.x * k.z * (1 - c) + k.y * s, k.y * k.z * (1 - c) - k.x * s, c + k.z * k.z * (1 - c)};
  return r;
}

/// exp map: axis-angle vector (axis * angle) to rotation matrix.
inline Mat3d rotation_exp(const Vec3d& omega) {
  const double angle = norm(omega);
  if (angle < 1e-12) {
    // First-order expansion keeps the map smooth through zero.
    Mat3d r = Mat3d::identity();
    r.col[0].y += omega.z; r.col[0].z -= omega.y;
    r.col[1].x -= omega.z; r.col[1].z += omega.x;
    r.col[2].x += omega.y; r.col[2].y -= omega.x;
    return r;
  }
  return axis_angle_matrix(omega / angle, angle);
}

/// log map: rotation matrix to axis-angle vector. Inverse of rotation_exp.
inline Vec3d rotation_log(const Mat3d& r) {
  const double tr = r.col[0].x + r.col[1].y + r.col[2].z;
  const double c = std::clamp((tr - 1.0) * 0.5, -1.0, 1.0);
  const double angle = std::acos(c);
  const Vec3d w{r.col[1].z - r.col[2].y, r.col[2].x - r.col[0].z, r.col[0].y - r.col[1].x};
  if (angle < 1e-9) return w * 0.5;
  if (angle > M_PI - 1e-6) {
    // Near pi the skew part degenerates; recover the axis from the symmetric part.
    Vec3d axis;
    const double xx = (r.col[0].x + 1.0) * 0.5, yy = (r.col[1].y + 1.0) * 0.5, zz = (r.col[2].z + 1.0) * 0.5;
    axis.x = std::sqrt(std::max(xx, 0.0));
    axis.y = std::sqrt(std::max(yy, 0.0));
    axis.z = std::sqrt(std::max(zz, 0.0));
    // Fix signs from the largest component.
    if (axis.x >= axis.y && axis.x >= axis.z) {
      axis.y = (r.col[0].y + r.col[1].x) / (4.0 * axis.x);
      axis.z = (r.col[0].z + r.col[2].x) / (4.0 * axis.x);
    } else if (axis.y >= axis.z) {
      axis.x = (r.col[0].y + r.col[1].x) / (4.0 * axis.y);
      axis.z = (r.col[1].z + r.col[2].y) / (4.0 * axis.y);
    } else {
      axis.x = (r.col[0].z + r.col[2].x) / (4.0 * axis.z);
      axis.y = (r.col[1].z + r.col[2].y) / (4.0 * axis.z);
    }
    return normalized(axis) * angle;
  }
  return w * (angle / (2.0 * std::sin(angle)));
}

/// Shortest rotation taking unit vector `from` to unit vector `to`.
/// Trig-free so it also works on dual-number scalars.
template <class T>
Mat3<T> rotation_between(const Vec3<T>& from, const Vec3<T>& to) {
  const Vec3<T> w = cross(from, to);
  const T c = dot(from, to);
  if (c < T(-1.0 + 1e-10)) {
    // Antiparallel: rotate pi about any perpendicular axis (deterministic pick).
    Vec3<T> perp = cross(from, Vec3<T>{T(1), T(0), T(0)});
    if (squared_norm(perp) < T(1e-12)) perp = cross(from, Vec3<T>{T(0), T(1), T(0)});
    perp = normalized(perp);
    Mat3<T> r;
    // R = 2*pp^T - I
    r.col[0] = perp * (T(2) * perp.x); r.col[0].x -= T(1);
    r.col[1] = perp * (T(2) * perp.y); r.col[1].y -= T(1);
    r.col[2] = perp * (T(2) * perp.z); r.col[2].z -= T(1);
    return r;
  }
  const T k = T(1) / (T(1) + c);
  Mat3<T> r;
  r.col[0] = Vec3<T>{T(1) - (w.y * w.y + w.z * w.z) * k, w.z + w.x * w.y * k, -w.y + w.x * w.z * k};
  r.col[1] = Vec3<T>{-w.z + w.x * w.y * k, T(1) - (w.x * w.x + w.z * w.z) * k, w.x + w.y * w.z * k};
  r.col[2] = Vec3<T>{w.y + w.x * w.z * k, -w.x + w.y * w.z * k, T(1) - (w.x * w.x + w.y * w.y) * k};
  return r;
}

/// Axis-aligned bounding box in mm.
struct Aabb {
  Vec3d min{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::infinity()};
  Vec3d max{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
            -std::numeric_limits<double>::infinity()};

  void expand(const Vec3d& p) {
    min.x = std::min(min.x, p.x); min.y = std::min(min.y, p.y); min.z = std::min(min.z, p.z);
    max.x = std::max(max.x, p.x); max.y = std::max(max.y, p.y); max.z = std::max(max.z, p.z);
  }
  void expand(const Aabb& o) { expand(o.min); expand(o.max); }

  Aabb padded(double margin) const {
    Aabb b = *this;
    const Vec3d m{margin, margin, margin};
    b.min -= m;
    b.max += m;
    return b;
  }

  bool contains(const Vec3d& p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z && p.z <= max.z;
  }

  /// Closed-interval overlap test (touching boxes overlap).
  bool overlaps(const Aabb& o) const {
    return min.x <= o.max.x && o.min.x <= max.x && min.y <= o.max.y && o.min.y <= max.y &&
           min.z <= o.max.z && o.min.z <= max.z;
  }

  bool valid() const { return min.x <= max.x && min.y <= max.y && min.z <= max.z; }
};

}  // namespace handocc
