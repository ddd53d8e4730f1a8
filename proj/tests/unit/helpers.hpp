#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "activedt/autodiff.hpp"
#include "activedt/detection.hpp"
#include "activedt/scene.hpp"

namespace adt::test {

// Room of the given size with only the border closed and the object at a
// continuous position.
inline Scene open_scene(int w, int h, Point2 object, double radius = 0.2) {
  Scene s;
  s.grid = OccupancyGrid(w, h, 0.3);
  s.object.center = object;
  s.object.radius = radius;
  return s;
}

inline double rel_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-7});
  return std::abs(a - b) / denom;
}

// Largest relative error between analytic gradients of every named parameter
// and central finite differences of `loss_of`.
inline double max_param_grad_error(ad::ParamStore& params, const ad::Gradients& analytic,
                                   const std::function<double(const ad::ParamStore&)>& loss_of, double h = 1e-4) {
  double worst = 0.0;
  for (auto& [name, p] : params) {
    const auto& g = analytic.at(name);
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      const double orig = p.values[i];
      p.values[i] = orig + h;
      const double up = loss_of(params);
      p.values[i] = orig - h;
      const double down = loss_of(params);
      p.values[i] = orig;
      worst = std::max(worst, rel_error(g[i], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

}  // namespace adt::test
