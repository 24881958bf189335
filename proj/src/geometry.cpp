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
#include "kcr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "kcr/error.hpp"
#include "kcr/runtime.hpp"

namespace kcr::geometry {
namespace {

inline Point operator-(const Point& a, const Point& b) {
  return {a.x - b.x, a.y - b.y};
}
inline Point operator+(const Point& a, const Point& b) {
  return {a.x + b.x, a.y + b.y};
}
inline Point operator*(double s, const Point& a) { return {s * a.x, s * a.y}; }
inline double cross(const Point& a, const Point& b) {
  return a.x * b.y - a.y * b.x;
}
inline double dot(const Point& a, const Point& b) {
  return a.x * b.x + a.y * b.y;
}
inline double norm(const Point& a) { return std::hypot(a.x, a.y); }

bool finite(double v) { return std::isfinite(v); }

// Strict weak order on boxes so that iou_rotated(a, b) clips the same way
// as iou_rotated(b, a).
bool box_less(const RotatedBox& a, const RotatedBox& b) {
  return std::tie(a.cx, a.cy, a.w, a.h, a.theta) <
         std::tie(b.cx, b.cy, b.w, b.h, b.theta);
}

double polygon_signed_area(const ConvexPolygon& p) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.n; ++i) {
    const Point& a = p.v[i];
    const Point& b = p.v[(i + 1) % p.n];
    s += cross(a, b);
  }
  return 0.5 * s;
}

bool aabb_disjoint(const AABox& a, const AABox& b) {
  return a.xmax <= b.xmin || b.xmax <= a.xmin || a.ymax <= b.ymin ||
         b.ymax <= a.ymin;
}

// Builds the rotated box of a rectangle given its centre and two adjacent,
// perpendicular edge vectors; `w_edge` becomes the w axis.
RotatedBox box_from_edges(const Point& centre, const Point& w_edge,
                          const Point& h_edge) {
  RotatedBox out;
  out.cx = centre.x;
  out.cy = centre.y;
  out.w = norm(w_edge);
  out.h = norm(h_edge);
  out.theta = canonical_angle(std::atan2(w_edge.y, w_edge.x));
  return out;
}

}  // namespace

double canonical_angle(double theta) {
  if (theta >= -kPi / 2 && theta < kPi / 2) return theta;
  double t = theta - kPi * std::floor((theta + kPi / 2) / kPi);
  if (t >= kPi / 2) t -= kPi;
  if (t < -kPi / 2) t += kPi;
  return t;
}

double angle_distance(double a, double b) {
  return std::abs(canonical_angle(a - b));
}

bool is_valid(const RotatedBox& b) {
  return finite(b.cx) && finite(b.cy) && finite(b.w) && finite(b.h) &&
         finite(b.theta) && b.w > 0.0 && b.h > 0.0;
}

bool is_valid(const AABox& b) {
  return finite(b.xmin) && finite(b.ymin) && finite(b.xmax) && finite(b.ymax) &&
         b.xmin <= b.xmax && b.ymin <= b.ymax;
}

void validate(const RotatedBox& b) {
  if (!is_valid(b))
    throw Error(ErrorCode::kInvalidBox,
                "rotated box needs finite fields and w > 0, h > 0");
}

void validate(const AABox& b) {
  if (!is_valid(b))
    throw Error(ErrorCode::kInvalidBox,
                "axis-aligned box needs finite fields, xmin <= xmax and "
                "ymin <= ymax");
}

RotatedBox canonicalize(const RotatedBox& b) {
  RotatedBox out = b;
  out.theta = canonical_angle(b.theta);
  return out;
}

RotatedBox long_edge_form(const RotatedBox& b) {
  RotatedBox out = b;
  if (out.w < out.h) {
    std::swap(out.w, out.h);
    out.theta += kPi / 2;
  }
  out.theta = canonical_angle(out.theta);
  return out;
}

RotatedBox to_rotated(const AABox& b) {
  return {b.cx(), b.cy(), b.width(), b.height(), 0.0};
}

AABox to_aabox_from_center(double cx, double cy, double w, double h) {
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

AABox external_rect(const MidpointOffsetProposal& r) {
  return to_aabox_from_center(r.cx, r.cy, r.w, r.h);
}

double signed_area(const Quad& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < 4; ++i) s += cross(q.v[i], q.v[(i + 1) % 4]);
  return 0.5 * s;
}

bool is_convex(const Quad& q) {
  const double orientation = signed_area(q);
  if (orientation == 0.0) return false;
  for (std::size_t i = 0; i < 4; ++i) {
    const Point e0 = q.v[(i + 1) % 4] - q.v[i];
    const Point e1 = q.v[(i + 2) % 4] - q.v[(i + 1) % 4];
    const double c = cross(e0, e1);
    const double tol = 1e-12 * norm(e0) * norm(e1);
    if (orientation > 0 ? c < -tol : c > tol) return false;
  }
  return true;
}

Quad normalize_winding(const Quad& q) {
  if (signed_area(q) >= 0.0) return q;
  return Quad{{q.v[0], q.v[3], q.v[2], q.v[1]}};
}

Quad rotated_to_quad(const RotatedBox& b) {
  const double c = std::cos(b.theta);
  const double s = std::sin(b.theta);
  const double a = 0.5 * b.w;
  const double d = 0.5 * b.h;
  // Corners (-a,-d), (a,-d), (a,d), (-a,d) rotated by theta.
  auto corner = [&](double x, double y) {
    return Point{b.cx + x * c - y * s, b.cy + x * s + y * c};
  };
  return Quad{{corner(-a, -d), corner(a, -d), corner(a, d), corner(-a, d)}};
}

RotatedBox quad_to_rotated(const Quad& input) {
  for (const Point& p : input.v)
    if (!finite(p.x) || !finite(p.y))
      throw Error(ErrorCode::kDegenerateQuad, "quad has non-finite vertex");

  const Quad q = normalize_winding(input);

  // Hull of the four points: the quad itself when convex, otherwise the
  // monotone-chain hull.
  std::vector<Point> hull;
  if (is_convex(q)) {
    hull.assign(q.v.begin(), q.v.end());
  } else {
    std::vector<Point> pts(q.v.begin(), q.v.end());
    std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
      return std::tie(a.x, a.y) < std::tie(b.x, b.y);
    });
    std::vector<Point> h(8);
    std::size_t k = 0;
    for (const Point& p : pts) {
      while (k >= 2 && cross(h[k - 1] - h[k - 2], p - h[k - 2]) <= 0) --k;
      h[k++] = p;
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
      while (k >= t && cross(h[k - 1] - h[k - 2], pts[i] - h[k - 2]) <= 0) --k;
      h[k++] = pts[i];
    }
    h.resize(k > 0 ? k - 1 : 0);
    hull = std::move(h);
  }

  double diameter2 = 0.0;
  for (const Point& a : q.v)
    for (const Point& b : q.v) diameter2 = std::max(diameter2, dot(a - b, a - b));
  double hull_area = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i)
    hull_area += cross(hull[i], hull[(i + 1) % hull.size()]);
  hull_area = 0.5 * std::abs(hull_area);
  if (hull.size() < 3 || diameter2 == 0.0 || hull_area <= 1e-12 * diameter2)
    throw Error(ErrorCode::kDegenerateQuad, "quad vertices are collinear");

  // Rotating calipers on the hull edges: the minimum-area rectangle is flush
  // with one of them.
  double best_area = 0.0;
  Point best_u{}, best_n{};
  double best_u0 = 0, best_u1 = 0, best_v0 = 0, best_v1 = 0;
  bool have_best = false;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Point e = hull[(i + 1) % hull.size()] - hull[i];
    const double len = norm(e);
    if (len == 0.0) continue;
    const Point u = (1.0 / len) * e;
    const Point n{-u.y, u.x};
    double u0 = dot(q.v[0], u), u1 = u0, v0 = dot(q.v[0], n), v1 = v0;
    for (const Point& p : q.v) {
      u0 = std::min(u0, dot(p, u));
      u1 = std::max(u1, dot(p, u));
      v0 = std::min(v0, dot(p, n));
      v1 = std::max(v1, dot(p, n));
    }
    const double area = (u1 - u0) * (v1 - v0);
    if (!have_best || area < best_area * (1.0 - 1e-12)) {
      have_best = true;
      best_area = area;
      best_u = u;
      best_n = n;
      best_u0 = u0;
      best_u1 = u1;
      best_v0 = v0;
      best_v1 = v1;
    }
  }

  const double um = 0.5 * (best_u0 + best_u1);
  const double vm = 0.5 * (best_v0 + best_v1);
  const Point centre = um * best_u + vm * best_n;
  const Point u_edge = (best_u1 - best_u0) * best_u;
  const Point n_edge = (best_v1 - best_v0) * best_n;
  const Point first = q.v[1] - q.v[0];
  if (std::abs(dot(first, best_u)) >= std::abs(dot(first, best_n)))
    return box_from_edges(centre, u_edge, n_edge);
  return box_from_edges(centre, n_edge, u_edge);
}

Quad midpoint_offset_to_quad(const MidpointOffsetProposal& r) {
  return Quad{{Point{r.cx + r.alpha, r.cy - 0.5 * r.h},
               Point{r.cx + 0.5 * r.w, r.cy + r.beta},
               Point{r.cx - r.alpha, r.cy + 0.5 * r.h},
               Point{r.cx - 0.5 * r.w, r.cy - r.beta}}};
}

RotatedBox midpoint_offset_to_rotated(const MidpointOffsetProposal& r) {
  if (!(finite(r.cx) && finite(r.cy) && finite(r.w) && finite(r.h) &&
        finite(r.alpha) && finite(r.beta) && r.w > 0.0 && r.h > 0.0))
    throw Error(ErrorCode::kInvalidBox,
                "midpoint-offset proposal needs finite fields and w, h > 0");

  Quad q = midpoint_offset_to_quad(r);
  const Point c{r.cx, r.cy};
  const Point d13 = q.v[0] - q.v[2];
  const Point d24 = q.v[1] - q.v[3];
  const double l13 = norm(d13);
  const double l24 = norm(d24);
  if (std::abs(cross(d13, d24)) <= 1e-12 * l13 * l24)
    throw Error(ErrorCode::kDegenerateQuad,
                "midpoint-offset parallelogram collapses to a segment");

  if (l13 < l24) {
    const double s = l24 / l13;
    q.v[0] = c + s * (q.v[0] - c);
    q.v[2] = c + s * (q.v[2] - c);
  } else if (l24 < l13) {
    const double s = l13 / l24;
    q.v[1] = c + s * (q.v[1] - c);
    q.v[3] = c + s * (q.v[3] - c);
  }

  const Point e1 = q.v[1] - q.v[0];
  const Point e2 = q.v[2] - q.v[1];
  if (norm(e1) >= norm(e2)) return box_from_edges(c, e1, e2);
  return box_from_edges(c, e2, e1);
}

MidpointOffsetProposal theta_to_midpoint_offset(const RotatedBox& input) {
  const RotatedBox b = canonicalize(input);
  const double a = 0.5 * b.w;
  const double d = 0.5 * b.h;
  const double c = std::cos(b.theta);
  const double s = std::sin(b.theta);
  const AABox ext = project_rotated(b);

  MidpointOffsetProposal r;
  r.cx = b.cx;
  r.cy = b.cy;
  r.w = ext.width();
  r.h = ext.height();
  // The top vertex (min y) and right vertex (max x) are adjacent corners.
  if (b.theta >= 0.0) {
    r.alpha = -a * c + d * s;
    r.beta = a * s - d * c;
  } else {
    r.alpha = a * c + d * s;
    r.beta = a * s + d * c;
  }
  r.p = 1.0;
  return r;
}

AABox project_rotated(const RotatedBox& b) {
  // Folding first makes theta, -theta and theta - pi share one evaluation.
  const double a = std::abs(canonical_angle(b.theta));
  const double c = std::cos(a);
  const double s = std::sin(a);
  const double hx = 0.5 * (b.w * c + b.h * s);
  const double hy = 0.5 * (b.w * s + b.h * c);
  return {b.cx - hx, b.cy - hy, b.cx + hx, b.cy + hy};
}

AABox enlarge_aabox(const AABox& b, double gamma, EnlargementMode mode) {
  if (!(gamma >= 1.0) || !finite(gamma))
    throw Error(ErrorCode::kInvalidGamma,
                "enlargement factor must be >= 1, got " + std::to_string(gamma));
  if (gamma == 1.0 && mode == EnlargementMode::kScale) return b;
  const double w = b.width();
  const double h = b.height();
  if (mode == EnlargementMode::kLiteral)
    return {b.xmin - gamma * w, b.ymin - gamma * h, b.xmax + gamma * w,
            b.ymax + gamma * h};
  return to_aabox_from_center(b.cx(), b.cy(), gamma * w, gamma * h);
}

double iou_aabb(const AABox& a, const AABox& b) {
  const double iw = std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin);
  const double ih = std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

ConvexPolygon to_polygon(const Quad& q) {
  ConvexPolygon p;
  for (std::size_t i = 0; i < 4; ++i) p.v[i] = q.v[i];
  p.n = 4;
  return p;
}

double polygon_area(const ConvexPolygon& p) {
  return std::abs(polygon_signed_area(p));
}

ConvexPolygon clip_polygon(const ConvexPolygon& subject, const Quad& clip) {
  ConvexPolygon cur = subject;
  ConvexPolygon next;
  for (std::size_t e = 0; e < 4 && cur.n > 0; ++e) {
    const Point& a = clip.v[e];
    const Point edge = clip.v[(e + 1) % 4] - a;
    next.n = 0;
    for (std::size_t i = 0; i < cur.n; ++i) {
      const Point& p = cur.v[i];
      const Point& q = cur.v[(i + 1) % cur.n];
      const double sp = cross(edge, p - a);
      const double sq = cross(edge, q - a);
      if (sp >= 0.0) next.v[next.n++] = p;
      if ((sp >= 0.0) != (sq >= 0.0)) {
        const double t = sp / (sp - sq);
        next.v[next.n++] = p + t * (q - p);
      }
      if (next.n + 2 > ConvexPolygon::kCapacity) break;
    }
    std::swap(cur, next);
  }
  return cur;
}

double polygon_intersection_area(const Quad& p, const Quad& q) {
  const ConvexPolygon clipped =
      clip_polygon(to_polygon(normalize_winding(p)), normalize_winding(q));
  if (clipped.n < 3) return 0.0;
  const double area = polygon_area(clipped);
  return area < kAreaEpsilon ? 0.0 : area;
}

AreaMoments polygon_moments(const ConvexPolygon& p) {
  AreaMoments m;
  if (p.n < 3) return m;
  for (std::size_t i = 0; i < p.n; ++i) {
    const Point& a = p.v[i];
    const Point& b = p.v[(i + 1) % p.n];
    const double c = cross(a, b);
    m.m00 += c;
    m.m10 += (a.x + b.x) * c;
    m.m01 += (a.y + b.y) * c;
    m.m20 += (a.x * a.x + a.x * b.x + b.x * b.x) * c;
    m.m02 += (a.y * a.y + a.y * b.y + b.y * b.y) * c;
    m.m11 += (a.x * b.y + 2 * a.x * a.y + 2 * b.x * b.y + b.x * a.y) * c;
  }
  m.m00 /= 2;
  m.m10 /= 6;
  m.m01 /= 6;
  m.m20 /= 12;
  m.m02 /= 12;
  m.m11 /= 24;
  if (m.m00 < 0) {
    m.m00 = -m.m00;
    m.m10 = -m.m10;
    m.m01 = -m.m01;
    m.m20 = -m.m20;
    m.m02 = -m.m02;
    m.m11 = -m.m11;
  }
  return m;
}

double iou_rotated(const RotatedBox& a_in, const RotatedBox& b_in) {
  const bool swap = box_less(b_in, a_in);
  const RotatedBox& a = swap ? b_in : a_in;
  const RotatedBox& b = swap ? a_in : b_in;
  const double area_a = a.area();
  const double area_b = b.area();
  if (!(area_a > 0.0) || !(area_b > 0.0)) return 0.0;
  if (aabb_disjoint(project_rotated(a), project_rotated(b))) return 0.0;
  const double inter =
      polygon_intersection_area(rotated_to_quad(a), rotated_to_quad(b));
  const double uni = area_a + area_b - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<double> iou_matrix(std::span<const RotatedBox> a,
                               std::span<const RotatedBox> b) {
  std::vector<double> out(a.size() * b.size(), 0.0);
  parallel_for(a.size(), [&](std::size_t i) {
    for (std::size_t j = 0; j < b.size(); ++j)
      out[i * b.size() + j] = iou_rotated(a[i], b[j]);
  });
  return out;
}

}  // namespace kcr::geometry
