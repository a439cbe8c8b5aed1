#include "nrf/vmath.hpp"

#include <Eigen/Core>
#include <cmath>

namespace nrf::vmath {
namespace {

constexpr double kTwoOverPi = 0.63661977236758134308;
constexpr double kPio2Hi = 1.57079632679489655800e+00;
constexpr double kPio2Mid = 6.12323399573676603587e-17;
constexpr double kRound = 6755399441055744.0;  // 1.5 * 2^52
constexpr double kFastLimit = 1e5;

// fdlibm kernel polynomials on [-pi/4, pi/4].
inline double sin_poly(double r, double z) {
  return r + r * z *
                 (-1.66666666666666324348e-01 +
                  z * (8.33333333332248946124e-03 +
                       z * (-1.98412698298579493134e-04 +
                            z * (2.75573137070700676789e-06 +
                                 z * (-2.50507602534068634195e-08 + z * 1.58969099521155010221e-10)))));
}

inline double cos_poly(double z) {
  return 1.0 - 0.5 * z +
         z * z *
             (4.16666666666666019037e-02 +
              z * (-1.38888888888741095749e-03 +
                   z * (2.48015872894767294178e-05 +
                        z * (-2.75573143513906633035e-07 +
                             z * (2.08757232129817482790e-09 + z * -1.13596475577881948265e-11)))));
}

bool in_fast_range(const double* x, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m = std::fmax(m, std::fabs(x[i]));
  return m < kFastLimit;
}

}  // namespace

void sincos(const double* x, double* s, double* c, std::size_t n) {
  if (!in_fast_range(x, n)) {
    for (std::size_t i = 0; i < n; ++i) {
      double v = x[i];
      s[i] = std::sin(v);
      c[i] = std::cos(v);
    }
    return;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double k = (x[i] * kTwoOverPi + kRound) - kRound;
    double r = std::fma(-k, kPio2Hi, x[i]);
    r = std::fma(-k, kPio2Mid, r);
    double z = r * r;
    double sp = sin_poly(r, z);
    double cp = cos_poly(z);
    long q = static_cast<long>(k) & 3;
    double ss = (q & 1) ? cp : sp;
    double cc = (q & 1) ? sp : cp;
    s[i] = (q & 2) ? -ss : ss;
    c[i] = ((q + 1) & 2) ? -cc : cc;
  }
}

void sin(const double* x, double* out, std::size_t n) {
  if (!in_fast_range(x, n)) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::sin(x[i]);
    return;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double k = (x[i] * kTwoOverPi + kRound) - kRound;
    double r = std::fma(-k, kPio2Hi, x[i]);
    r = std::fma(-k, kPio2Mid, r);
    double z = r * r;
    double sp = sin_poly(r, z);
    double cp = cos_poly(z);
    long q = static_cast<long>(k) & 3;
    double ss = (q & 1) ? cp : sp;
    out[i] = (q & 2) ? -ss : ss;
  }
}

void cos(const double* x, double* out, std::size_t n) {
  if (!in_fast_range(x, n)) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::cos(x[i]);
    return;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double k = (x[i] * kTwoOverPi + kRound) - kRound;
    double r = std::fma(-k, kPio2Hi, x[i]);
    r = std::fma(-k, kPio2Mid, r);
    double z = r * r;
    double sp = sin_poly(r, z);
    double cp = cos_poly(z);
    long q = static_cast<long>(k) & 3;
    double cc = (q & 1) ? sp : cp;
    out[i] = ((q + 1) & 2) ? -cc : cc;
  }
}

void sigmoid(const double* x, double* out, std::size_t n) {
  using Arr = Eigen::Array<double, Eigen::Dynamic, 1>;
  Eigen::Map<const Arr> xi(x, static_cast<Eigen::Index>(n));
  Eigen::Map<Arr> o(out, static_cast<Eigen::Index>(n));
  o = xi.logistic();
}

void tanh(const double* x, double* out, std::size_t n) {
  using Arr = Eigen::Array<double, Eigen::Dynamic, 1>;
  Eigen::Map<const Arr> xi(x, static_cast<Eigen::Index>(n));
  Eigen::Map<Arr> o(out, static_cast<Eigen::Index>(n));
  o = 2.0 * (2.0 * xi).logistic() - 1.0;
}

void exp(const double* x, double* out, std::size_t n) {
  using Arr = Eigen::Array<double, Eigen::Dynamic, 1>;
  Eigen::Map<const Arr> xi(x, static_cast<Eigen::Index>(n));
  Eigen::Map<Arr> o(out, static_cast<Eigen::Index>(n));
  o = xi.exp();
}

}  // namespace nrf::vmath
