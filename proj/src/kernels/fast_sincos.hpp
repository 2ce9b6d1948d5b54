#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>

namespace nfl::kernels {

// Branch-free sin/cos over contiguous arrays, written so the compiler can
// vectorize the main loop. The argument is reduced by pi/2 with a three-term
// Cody-Waite split (first two terms carry 22 bits, so q*A and q*B are exact
// for |q| < 2^31); the remainder in [-pi/4, pi/4] goes through the Cephes
// minimax polynomials. Arguments with |x| > kFastLimit are redone with libm.
inline constexpr double kFastLimit = 1.0e5;

// out_sin[i] = sin(scale*x[i]); with kWithCos also
// out_cos[i] = cos_scale*cos(scale*x[i]). Outputs must not alias x.
template <bool kWithCos>
inline void sincos_impl(const double* __restrict x, std::size_t n, double scale, double* __restrict out_sin,
                        double* __restrict out_cos, double cos_scale) {
  constexpr double kTwoOverPi = 0.63661977236758134308;
  constexpr double kPio2A = 1.5707962512969970703125;
  constexpr double kPio2B = 7.54978941586159635336e-8;
  constexpr double kPio2C = 5.3903028581581190529e-15;
  constexpr double kRound = 6755399441055744.0;  // 1.5 * 2^52, round-to-nearest trick

  double max_abs = 0.0;
#pragma omp simd reduction(max : max_abs)
  for (std::size_t i = 0; i < n; ++i) {
    const double a = scale * x[i];
    max_abs = std::fabs(a) > max_abs ? std::fabs(a) : max_abs;
    const double qd = (a * kTwoOverPi + kRound) - kRound;
    const auto q = static_cast<std::int64_t>(qd);
    const double r = ((a - qd * kPio2A) - qd * kPio2B) - qd * kPio2C;
    const double z = r * r;

    double ps = 1.58962301576546568060e-10;
    ps = ps * z - 2.50507477628578072866e-8;
    ps = ps * z + 2.75573136213857245213e-6;
    ps = ps * z - 1.98412698295895385996e-4;
    ps = ps * z + 8.33333333332211858878e-3;
    ps = ps * z - 1.66666666666666307295e-1;
    const double s = r + r * z * ps;

    double pc = -1.13585365213876817300e-11;
    pc = pc * z + 2.08757008419747316778e-9;
    pc = pc * z - 2.75573141792967388112e-7;
    pc = pc * z + 2.48015872888517045348e-5;
    pc = pc * z - 1.38888888888730564116e-3;
    pc = pc * z + 4.16666666666665929218e-2;
    const double c = 1.0 - 0.5 * z + z * z * pc;

    const bool swap = (q & 1) != 0;
    const double sin_mag = swap ? c : s;
    const double cos_mag = swap ? s : c;
    out_sin[i] = (q & 2) != 0 ? -sin_mag : sin_mag;
    if constexpr (kWithCos) out_cos[i] = cos_scale * (((q + 1) & 2) != 0 ? -cos_mag : cos_mag);
  }
  if (!(max_abs <= kFastLimit)) {
    for (std::size_t i = 0; i < n; ++i) {
      const double a = scale * x[i];
      if (std::fabs(a) <= kFastLimit) continue;
      out_sin[i] = std::sin(a);
      if constexpr (kWithCos) out_cos[i] = cos_scale * std::cos(a);
    }
  }
}

inline void sincos_block(const double* x, std::size_t n, double scale, double* out_sin, double* out_cos,
                         double cos_scale) {
  sincos_impl<true>(x, n, scale, out_sin, out_cos, cos_scale);
}

inline void sin_block(const double* x, std::size_t n, double scale, double* out_sin) {
  sincos_impl<false>(x, n, scale, out_sin, nullptr, 1.0);
}

}  // namespace nfl::kernels
