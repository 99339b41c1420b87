#ifndef PHENOFLUX_WAVELET_HPP
#define PHENOFLUX_WAVELET_HPP

#include "phenoflux/core.hpp"
#include "phenoflux/data_model.hpp"

#include <filesystem>
#include <numbers>
#include <vector>

namespace phenoflux {

struct WaveletConfig {
  std::vector<int> scale_exponents = {-1, 0, 1, 2, 3, 4, 5, 6, 7, 8};
  double truncation_radius = 5.0;  // in units of sigma

  void validate() const;
  Index scales() const { return static_cast<Index>(scale_exponents.size()); }
  double sigma(Index i) const { return std::ldexp(1.0, scale_exponents[static_cast<std::size_t>(i)]); }
};

/// L2-normalised Ricker ("Mexican hat") wavelet.
template <typename Scalar>
Scalar ricker(Scalar t, Scalar sigma) {
  if (!(sigma > Scalar(0))) throw Error("ricker: sigma must be positive");
  using std::exp;
  using std::sqrt;
  const Scalar amplitude = Scalar(2) / (sqrt(Scalar(3) * sigma) * std::pow(std::numbers::pi_v<Scalar>, Scalar(0.25)));
  const Scalar u = t / sigma;
  return amplitude * (Scalar(1) - u * u) * exp(-u * u / Scalar(2));
}

/// Sampled kernel ricker(k, sigma) for k in [-radius, radius].
template <typename Scalar>
VectorX<Scalar> ricker_kernel(Scalar sigma, Index radius) {
  VectorX<Scalar> k(2 * radius + 1);
  for (Index j = -radius; j <= radius; ++j) k(j + radius) = ricker(static_cast<Scalar>(j), sigma);
  return k;
}

inline Index truncation_half_width(double sigma, double radius) {
  return static_cast<Index>(std::floor(radius * sigma));
}

/// Continuous wavelet transform with zero padding, one row per scale.
/// coefficient(i, d) = sum_k series[k] * ricker(k - d, sigma_i), |k - d| <= radius * sigma_i.
template <typename Derived>
MatrixX<typename Derived::Scalar> cwt(const Eigen::MatrixBase<Derived>& series, const WaveletConfig& config) {
  using Scalar = typename Derived::Scalar;
  const Index n = series.size();
  MatrixX<Scalar> out = MatrixX<Scalar>::Zero(config.scales(), n);
  for (Index i = 0; i < config.scales(); ++i) {
    const Index half = truncation_half_width(config.sigma(i), config.truncation_radius);
    const VectorX<Scalar> kernel = ricker_kernel(static_cast<Scalar>(config.sigma(i)), half);
    for (Index d = 0; d < n; ++d) {
      const Index lo = std::max<Index>(0, d - half);
      const Index hi = std::min<Index>(n - 1, d + half);
      out(i, d) = series.derived().segment(lo, hi - lo + 1).dot(kernel.segment(lo - d + half, hi - lo + 1));
    }
  }
  return out;
}

/// Model input before normalization: rows variable-major, scale-minor,
/// the 11 met variables followed by the random-walk channel.
Matrix stack_wavelet_rows(const MetGrid& met, const Vector& walk, const WaveletConfig& config);
/// Same layout without the transform: one row per variable (12 x 730).
Matrix stack_raw_rows(const MetGrid& met, const Vector& walk);

/// Stacked transform followed by per-row z-normalisation.
Matrix build_input(const MetGrid& met, const Vector& walk, const WaveletConfig& config, const NormStats& stats);

/// Binary dump: "PHXW1", u64 rows, u64 cols, row-major little-endian f64.
void write_tensor(const std::filesystem::path& path, const Matrix& tensor);
Matrix read_tensor(const std::filesystem::path& path);

}  // namespace phenoflux

#endif  // PHENOFLUX_WAVELET_HPP
