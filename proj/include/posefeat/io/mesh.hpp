#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "posefeat/errors.hpp"
#include "posefeat/geometry.hpp"
#include "posefeat/io/ply.hpp"
#include "posefeat/random.hpp"

namespace posefeat {

inline double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) { return 0.5 * (b - a).cross(c - a).norm(); }

/// Area-weighted surface sampling: a triangle is picked with probability
/// proportional to its area, then a barycentric-uniform point inside it.
/// Colours are interpolated with the same barycentric weights.
inline PointCloud sample_mesh_surface(const TexturedMesh& mesh, std::size_t count, std::uint64_t seed) {
  if (count < 1) throw InvalidArgument("sample_mesh_surface: count must be >= 1");
  mesh.validate();
  std::vector<double> cdf(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    total += triangle_area(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
    cdf[t] = total;
  }
  if (!(total > 0.0)) throw InvalidArgument("sample_mesh_surface: mesh has zero surface area");

  Rng rng = make_rng(seed);
  PointCloud out;
  out.reserve(count, true);
  for (std::size_t i = 0; i < count; ++i) {
    const double pick = uniform01(rng) * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), pick);
    if (it == cdf.end()) --it;
    const auto& tri = mesh.triangles[static_cast<std::size_t>(it - cdf.begin())];
    const double s = std::sqrt(uniform01(rng));
    const double r = uniform01(rng);
    const double wa = 1.0 - s, wb = s * (1.0 - r), wc = s * r;
    out.positions.push_back(wa * mesh.vertices[tri[0]] + wb * mesh.vertices[tri[1]] + wc * mesh.vertices[tri[2]]);
    out.colors.push_back(wa * mesh.colors[tri[0]] + wb * mesh.colors[tri[1]] + wc * mesh.colors[tri[2]]);
  }
  return out;
}

/// HSV (all in [0, 1], hue wraps) to RGB.
inline Vec3 hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double hh = h * 6.0;
  const int sector = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s), q = v * (1.0 - s * f), t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

/// Colour as a function of normalised face coordinates (u, v) in [0, 1]^2.
using FaceTexture = std::function<Vec3(double, double)>;

/// Appends a subdivided parallelogram `origin + u*edge_u + v*edge_v`.
/// Winding follows edge_u x edge_v.
inline void append_grid(TexturedMesh& mesh, const Vec3& origin, const Vec3& edge_u, const Vec3& edge_v, int nu, int nv,
                        const FaceTexture& texture) {
  const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
  for (int j = 0; j <= nv; ++j)
    for (int i = 0; i <= nu; ++i) {
      const double u = static_cast<double>(i) / nu, v = static_cast<double>(j) / nv;
      mesh.vertices.push_back(origin + u * edge_u + v * edge_v);
      mesh.colors.push_back(texture(u, v));
    }
  const auto at = [&](int i, int j) { return base + static_cast<std::uint32_t>(j * (nu + 1) + i); };
  for (int j = 0; j < nv; ++j)
    for (int i = 0; i < nu; ++i) {
      mesh.triangles.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
      mesh.triangles.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
    }
}

/// Per-face colour gradient: hue drifts along u, saturation along v, value along u*v.
inline FaceTexture gradient_band(double base_hue) {
  return [base_hue](double u, double v) { return hsv_to_rgb(base_hue + 0.15 * u, 0.45 + 0.5 * v, 0.95 - 0.4 * u * v); };
}

/// Axis-aligned box [lo, hi] with six textured faces (first hue at `hue0`, spaced by 1/6).
inline void append_box(TexturedMesh& mesh, const Vec3& lo, const Vec3& hi, double hue0, int subdiv = 4,
                       bool bottom = true) {
  const Vec3 d = hi - lo;
  const Vec3 ex(d.x(), 0, 0), ey(0, d.y(), 0), ez(0, 0, d.z());
  const double step = 1.0 / 6.0;
  append_grid(mesh, Vec3(lo.x(), lo.y(), hi.z()), ex, ey, subdiv, subdiv, gradient_band(hue0));              // +z
  if (bottom) append_grid(mesh, lo, ey, ex, subdiv, subdiv, gradient_band(hue0 + step));                    // -z
  append_grid(mesh, Vec3(hi.x(), lo.y(), lo.z()), ey, ez, subdiv, subdiv, gradient_band(hue0 + 2 * step));  // +x
  append_grid(mesh, lo, ez, ey, subdiv, subdiv, gradient_band(hue0 + 3 * step));                            // -x
  append_grid(mesh, Vec3(lo.x(), hi.y(), lo.z()), ez, ex, subdiv, subdiv, gradient_band(hue0 + 4 * step));  // +y
  append_grid(mesh, lo, ex, ez, subdiv, subdiv, gradient_band(hue0 + 5 * step));                            // -y
}

/// Upright cylinder around the z axis from z0 to z0 + height. The side carries the
/// full hue wheel over the angle so rotations about the axis are distinguishable.
inline void append_cylinder(TexturedMesh& mesh, double radius, double z0, double height, double hue0,
                            int segments = 48, bool bottom = true, const Vec3& center = Vec3::Zero()) {
  const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
  const int rings = 4;
  for (int j = 0; j <= rings; ++j)
    for (int i = 0; i <= segments; ++i) {
      const double a = 2.0 * M_PI * i / segments, h = static_cast<double>(j) / rings;
      mesh.vertices.push_back(center + Vec3(radius * std::cos(a), radius * std::sin(a), z0 + h * height));
      mesh.colors.push_back(hsv_to_rgb(hue0 + static_cast<double>(i) / segments, 0.45 + 0.5 * h, 0.9));
    }
  const auto at = [&](int i, int j) { return base + static_cast<std::uint32_t>(j * (segments + 1) + i); };
  for (int j = 0; j < rings; ++j)
    for (int i = 0; i < segments; ++i) {
      mesh.triangles.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
      mesh.triangles.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
    }
  const auto cap = [&](double z, double value, bool up) {
    const auto centre = static_cast<std::uint32_t>(mesh.vertices.size());
    mesh.vertices.push_back(center + Vec3(0, 0, z));
    mesh.colors.push_back(hsv_to_rgb(hue0, 0.1, value));
    for (int i = 0; i <= segments; ++i) {
      const double a = 2.0 * M_PI * i / segments;
      mesh.vertices.push_back(center + Vec3(radius * std::cos(a), radius * std::sin(a), z));
      mesh.colors.push_back(hsv_to_rgb(hue0 + static_cast<double>(i) / segments, 0.8, value));
    }
    for (int i = 0; i < segments; ++i) {
      const std::uint32_t a = centre + 1 + i, b = centre + 2 + i;
      if (up) {
        mesh.triangles.push_back({centre, a, b});
      } else {
        mesh.triangles.push_back({centre, b, a});
      }
    }
  };
  cap(z0 + height, 0.65, true);
  if (bottom) cap(z0, 0.45, false);
}

}  // namespace posefeat
