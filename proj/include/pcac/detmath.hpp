#pragma once

#include <cmath>
#include <limits>

namespace pcac {

// Bit-reproducible exp/sigmoid/tanh. Entropy-coding frequency tables are
// rebuilt independently by the encoder and the decoder from the same model
// parameters; one last-ulp difference from a platform's libm would change a
// table entry and derail the arithmetic decode. These use only IEEE-exact
// operations (+,-,*,/,floor,ldexp) so every platform computes the same bits.

inline double det_exp(double x) {
  if (std::isnan(x)) return x;
  if (x > 709.7) return std::numeric_limits<double>::infinity();
  if (x < -745.2) return 0.0;

  // fdlibm-style Cody-Waite split of ln(2); kd * kLn2Hi is exact.
  constexpr double kInvLn2 = 1.44269504088896340736;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;

  const double kd = std::floor(x * kInvLn2 + 0.5);
  const double r = (x - kd * kLn2Hi) - kd * kLn2Lo;

  // Taylor series on |r| <= ln(2)/2; degree 13 leaves error below one ulp.
  double p = 1.0;
  for (int n = 13; n >= 1; --n) p = 1.0 + (r / n) * p;

  return std::ldexp(p, static_cast<int>(kd));
}

inline double det_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + det_exp(-x));
  const double e = det_exp(x);
  return e / (1.0 + e);
}

inline double det_tanh(double x) {
  const double t = det_exp(-2.0 * std::fabs(x));
  const double v = (1.0 - t) / (1.0 + t);
  return x < 0.0 ? -v : v;
}

}  // namespace pcac
