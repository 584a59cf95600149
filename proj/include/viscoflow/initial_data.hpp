#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>

#include "viscoflow/discrete_space.hpp"
#include "viscoflow/error.hpp"

namespace viscoflow {

/// Shipped clamped initial displacements:
///   bump : a v prod_j sin^2(pi x_j)
///   sine : a v prod_j sin(pi x_j) sin(2 pi x_j)
///   mode : a sin(k pi x)              (1D only)
/// with direction v = (1, 0.5, 0.25).
struct InitialData {
  std::string family = "bump";
  double amplitude = 0.1;
  int mode = 1;

  static bool known_family(const std::string& f) { return f == "bump" || f == "sine" || f == "mode"; }
};

inline Field initial_displacement(const Grid& grid, const InitialData& spec, int clamp) {
  if (!InitialData::known_family(spec.family))
    throw InvalidArgument("unknown initial-data family '" + spec.family + "'");
  if (spec.family == "mode" && grid.dim() != 1) throw InvalidArgument("family 'mode' is 1D only");
  if (spec.mode < 1) throw InvalidArgument("mode index must be positive");
  const double pi = std::acos(-1.0);
  const int d = grid.dim();
  const std::array<double, 3> dir{1.0, 0.5, 0.25};
  const double a = spec.amplitude;
  return Field::from_function(grid, FieldKind::displacement, clamp, [&](const std::array<double, 3>& x) {
    std::array<double, 3> out{0.0, 0.0, 0.0};
    double s = a;
    if (spec.family == "mode") {
      s *= std::sin(spec.mode * pi * x[0]);
    } else {
      for (int j = 0; j < d; ++j)
        s *= spec.family == "bump" ? std::pow(std::sin(pi * x[j]), 2)
                                   : std::sin(pi * x[j]) * std::sin(2.0 * pi * x[j]);
    }
    for (int i = 0; i < d; ++i) out[i] = dir[i] * s;
    return out;
  });
}

/// (y0, u0) with y0 = id + delta u0 and u0 independent of delta.
inline std::pair<Field, Field> initial_pair(const Grid& grid, const InitialData& spec, double delta,
                                            int clamp = 2) {
  Field u0 = initial_displacement(grid, spec, clamp);
  Field y0 = to_deformation(u0, delta, clamp);
  if (!det_guard(gradients(y0)))
    throw AmplitudeTooLarge("initial deformation violates the det guard at delta = " +
                            std::to_string(delta));
  return {std::move(y0), std::move(u0)};
}

}  // namespace viscoflow
