/* Copyright 2026 The KCR Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef KCR_GEOMETRY_HPP_
#define KCR_GEOMETRY_HPP_

// Rotated and axis-aligned box geometry.
//
// Coordinates are image units. The geometry itself is orientation agnostic;
// "counter-clockwise" and angles are defined in raw (x, y) coordinates, i.e.
// as if y pointed up. A RotatedBox's theta is the angle from the +x axis to
// its w-edge, canonically in [-pi/2, pi/2).

#include <array>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

namespace kcr::geometry {

inline constexpr double kPi = std::numbers::pi;

// Intersection areas below this are treated as zero (tangency noise).
inline constexpr double kAreaEpsilon = 1e-12;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct RotatedBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
  double theta = 0.0;

  double area() const { return w * h; }
};

struct AABox {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double cx() const { return 0.5 * (xmin + xmax); }
  double cy() const { return 0.5 * (ymin + ymax); }
  double area() const { return width() * height(); }
};

// First-stage proposal: external rectangle (cx, cy, w, h), vertex offsets
// alpha / beta from the midpoints of its top and right sides, objectness p.
struct MidpointOffsetProposal {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double p = 1.0;
};

struct Quad {
  std::array<Point, 4> v{};
};

// Fixed-capacity convex polygon; clipping a quad by four half-planes never
// exceeds eight vertices.
struct ConvexPolygon {
  static constexpr std::size_t kCapacity = 16;
  std::array<Point, kCapacity> v{};
  std::size_t n = 0;
};

enum class EnlargementMode {
  kScale,    // width and height scaled by gamma about the centre
  kLiteral,  // each side pushed out by gamma * extent
};

// Area moments of a polygon: m00 = area, m10 = int x, m01 = int y,
// m20 = int x^2, m02 = int y^2, m11 = int xy.
struct AreaMoments {
  double m00 = 0.0;
  double m10 = 0.0;
  double m01 = 0.0;
  double m20 = 0.0;
  double m02 = 0.0;
  double m11 = 0.0;

  AreaMoments& operator+=(const AreaMoments& o) {
    m00 += o.m00;
    m10 += o.m10;
    m01 += o.m01;
    m20 += o.m20;
    m02 += o.m02;
    m11 += o.m11;
    return *this;
  }
};

// --- validation and canonical forms --------------------------------------

// Folds theta into [-pi/2, pi/2).
double canonical_angle(double theta);
// Smallest |a - b| modulo pi.
double angle_distance(double a, double b);

bool is_valid(const RotatedBox& b);
bool is_valid(const AABox& b);
// Throws Error(kInvalidBox) on invalid input.
void validate(const RotatedBox& b);
void validate(const AABox& b);

RotatedBox canonicalize(const RotatedBox& b);
// Canonical form with w >= h.
RotatedBox long_edge_form(const RotatedBox& b);

RotatedBox to_rotated(const AABox& b);  // theta = 0
AABox to_aabox_from_center(double cx, double cy, double w, double h);
AABox external_rect(const MidpointOffsetProposal& r);

// --- quads ----------------------------------------------------------------

double signed_area(const Quad& q);
bool is_convex(const Quad& q);
// Reverses the winding (keeping v[0]) when the signed area is negative.
Quad normalize_winding(const Quad& q);

Quad rotated_to_quad(const RotatedBox& b);
// Minimum-area enclosing rectangle of the four vertices. The rectangle axis
// closest to the first edge v[0] -> v[1] becomes the w axis. Throws
// Error(kDegenerateQuad) for collinear vertices.
RotatedBox quad_to_rotated(const Quad& q);

// --- midpoint-offset representation ---------------------------------------

// Parallelogram (cx + alpha, cy - h/2), (cx + w/2, cy + beta),
// (cx - alpha, cy + h/2), (cx - w/2, cy - beta).
Quad midpoint_offset_to_quad(const MidpointOffsetProposal& r);
// Rectifies the parallelogram by stretching the shorter diagonal to the
// longer one about the centre; the result is in long-edge form. Throws
// Error(kDegenerateQuad) when the parallelogram collapses.
RotatedBox midpoint_offset_to_rotated(const MidpointOffsetProposal& r);
MidpointOffsetProposal theta_to_midpoint_offset(const RotatedBox& b);

// --- projection -----------------------------------------------------------

AABox project_rotated(const RotatedBox& b);
// Throws Error(kInvalidGamma) when gamma < 1.
AABox enlarge_aabox(const AABox& b, double gamma,
                    EnlargementMode mode = EnlargementMode::kScale);

// --- overlap --------------------------------------------------------------

double iou_aabb(const AABox& a, const AABox& b);
double iou_rotated(const RotatedBox& a, const RotatedBox& b);

ConvexPolygon to_polygon(const Quad& q);
double polygon_area(const ConvexPolygon& p);
// Sutherland-Hodgman: clips `subject` against the counter-clockwise convex
// quad `clip`.
ConvexPolygon clip_polygon(const ConvexPolygon& subject, const Quad& clip);
double polygon_intersection_area(const Quad& p, const Quad& q);
AreaMoments polygon_moments(const ConvexPolygon& p);

// Row-major |a| x |b| IoU matrix; rows are split across worker threads.
std::vector<double> iou_matrix(std::span<const RotatedBox> a,
                               std::span<const RotatedBox> b);

}  // namespace kcr::geometry

#endif  // KCR_GEOMETRY_HPP_
