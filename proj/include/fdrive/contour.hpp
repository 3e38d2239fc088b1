// Copyright 2026 The fdrive Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>

#include "fdrive/core.hpp"

namespace fdrive {

/// Filter-frequency trajectory of one part-tone inside an analysis window.
///
/// Positive chirp rates use a linear trend of the angular velocity, negative
/// ones a linear trend of its inverse, so a falling contour never reaches the
/// singular period length of the filter's impulse response:
///
///   omega(k) = omega0 * (1 + chirp * k)    chirp >= 0
///   omega(k) = omega0 / (1 - chirp * k)    chirp <  0
///
/// with k = t - window_offset. Both branches agree to first order at zero.
struct ChirpContour {
  double omega0 = 0.0;             // rad/sample at k = 0
  double chirp = 0.0;              // 1/sample
  std::int64_t window_offset = 0;  // absolute sample index of k = 0
};

/// Angular velocity (rad/sample) at absolute sample index `t`.
inline double eval_contour(const ChirpContour& c, std::int64_t t) {
  const double k = static_cast<double>(t - c.window_offset);
  if (c.chirp >= 0.0) {
    const double f = 1.0 + c.chirp * k;
    if (!(f > 0.0)) throw DomainError("contour: non-positive frequency before window start");
    return c.omega0 * f;
  }
  const double f = 1.0 - c.chirp * k;
  if (!(f > 0.0)) throw DomainError("contour: singular inverse-velocity trend (c*k >= 1)");
  return c.omega0 / f;
}

/// Instantaneous frequency at `t` if the contour is defined there.
inline bool contour_defined(const ChirpContour& c, std::int64_t t) {
  const double k = static_cast<double>(t - c.window_offset);
  return c.chirp >= 0.0 ? 1.0 + c.chirp * k > 0.0 : 1.0 - c.chirp * k > 0.0;
}

/// Samples `count` values starting at absolute index `first`.
inline Series sample_contour(const ChirpContour& c, std::int64_t first, std::size_t count) {
  Series out(count);
  for (std::size_t i = 0; i < count; ++i)
    out[i] = eval_contour(c, first + static_cast<std::int64_t>(i));
  return out;
}

}  // namespace fdrive
