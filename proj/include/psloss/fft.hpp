#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

namespace psloss::detail {

/**
 * In-place complex FFT for arbitrary length: recursive Cooley-Tukey split on
 * the smallest prime factor, direct DFT once the length itself is prime.
 * Deterministic and allocation-simple; intended for series lengths <= a few
 * thousand.
 */
inline void fft(std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  if (n <= 1) return;

  std::size_t p = n;
  for (std::size_t f = 2; f * f <= n; ++f)
    if (n % f == 0) {
      p = f;
      break;
    }

  std::vector<std::complex<double>> twiddle(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double ang = -2.0 * M_PI * static_cast<double>(k) /
                       static_cast<double>(n);
    twiddle[k] = {std::cos(ang), std::sin(ang)};
  }

  if (p == n) {
    // Prime length: direct transform.
    std::vector<std::complex<double>> out(n, {0.0, 0.0});
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t t = 0; t < n; ++t) out[k] += x[t] * twiddle[(k * t) % n];
    x = std::move(out);
    return;
  }

  const std::size_t m = n / p;
  std::vector<std::vector<std::complex<double>>> sub(
      p, std::vector<std::complex<double>>(m));
  for (std::size_t r = 0; r < p; ++r)
    for (std::size_t q = 0; q < m; ++q) sub[r][q] = x[q * p + r];
  for (auto& s : sub) fft(s);

  for (std::size_t s = 0; s < p; ++s)
    for (std::size_t q = 0; q < m; ++q) {
      std::complex<double> acc{0.0, 0.0};
      const std::size_t idx = q + s * m;
      for (std::size_t r = 0; r < p; ++r)
        acc += twiddle[(r * idx) % n] * sub[r][q];
      x[idx] = acc;
    }
}

}  // namespace psloss::detail
