#pragma once

#include <cmath>

#include "nflab/models.hpp"

namespace nfl::kernels {

// Scalar activation; writes d(act)/dz into `deriv`.
template <typename T>
inline T activate(DenseLayer::Act act, double omega, T z, T& deriv) {
  using std::cos;
  using std::sin;
  switch (act) {
    case DenseLayer::Act::kSine: {
      const T w = static_cast<T>(omega) * z;
      deriv = static_cast<T>(omega) * cos(w);
      return sin(w);
    }
    case DenseLayer::Act::kRelu:
      deriv = z > 0 ? T(1) : T(0);
      return z > 0 ? z : T(0);
    case DenseLayer::Act::kNone:
      break;
  }
  deriv = T(1);
  return z;
}

}  // namespace nfl::kernels
