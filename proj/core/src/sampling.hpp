#pragma once

// Bilinear sampling with border clamping shared by the tensor-display
// synthesis and the warping operators.

#include <algorithm>
#include <cmath>

namespace lfv::detail {

struct Axis {
  int i0 = 0;
  int i1 = 0;
  double t = 0.0;
  bool inside = false;  // false when the coordinate was clamped to the border
};

inline Axis bilinear_axis(double s, int n) {
  Axis a;
  if (!(s > 0.0)) {  // also catches NaN
    a.i0 = a.i1 = 0;
    a.t = 0.0;
    a.inside = false;
    return a;
  }
  if (s >= n - 1) {
    a.i0 = a.i1 = n - 1;
    a.t = 0.0;
    a.inside = false;
    return a;
  }
  a.i0 = static_cast<int>(std::floor(s));
  a.i1 = std::min(a.i0 + 1, n - 1);
  a.t = s - a.i0;
  a.inside = true;
  return a;
}

/// Value, d/dx and d/dy of a bilinear sample from a channel-strided plane.
struct Sample {
  double value;
  double dx;
  double dy;
};

inline Sample bilinear(const double* plane, int h, int w, int stride, const Axis& ay, const Axis& ax) {
  const double a = plane[(static_cast<std::size_t>(ay.i0) * w + ax.i0) * stride];
  const double b = plane[(static_cast<std::size_t>(ay.i0) * w + ax.i1) * stride];
  const double c = plane[(static_cast<std::size_t>(ay.i1) * w + ax.i0) * stride];
  const double d = plane[(static_cast<std::size_t>(ay.i1) * w + ax.i1) * stride];
  (void)h;
  const double top = a + ax.t * (b - a);
  const double bot = c + ax.t * (d - c);
  Sample s;
  s.value = top + ay.t * (bot - top);
  s.dx = ax.inside ? (1 - ay.t) * (b - a) + ay.t * (d - c) : 0.0;
  s.dy = ay.inside ? bot - top : 0.0;
  return s;
}

/// Scatters g into the four taps of a bilinear sample.
inline void bilinear_scatter(double* plane, int w, int stride, const Axis& ay, const Axis& ax, double g) {
  plane[(static_cast<std::size_t>(ay.i0) * w + ax.i0) * stride] += g * (1 - ay.t) * (1 - ax.t);
  plane[(static_cast<std::size_t>(ay.i0) * w + ax.i1) * stride] += g * (1 - ay.t) * ax.t;
  plane[(static_cast<std::size_t>(ay.i1) * w + ax.i0) * stride] += g * ay.t * (1 - ax.t);
  plane[(static_cast<std::size_t>(ay.i1) * w + ax.i1) * stride] += g * ay.t * ax.t;
}

}  // namespace lfv::detail
