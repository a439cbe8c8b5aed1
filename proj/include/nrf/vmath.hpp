#pragma once

#include <cstddef>

// Elementwise kernels over contiguous arrays. sin/cos are accurate to about
// one ulp for |x| < 1e5; larger arguments fall back to the libm routines.
namespace nrf::vmath {

void sin(const double* x, double* out, std::size_t n);
void cos(const double* x, double* out, std::size_t n);
void sincos(const double* x, double* s, double* c, std::size_t n);
void sigmoid(const double* x, double* out, std::size_t n);
void tanh(const double* x, double* out, std::size_t n);
void exp(const double* x, double* out, std::size_t n);

}  // namespace nrf::vmath
