#ifndef PHENOFLUX_CORE_HPP
#define PHENOFLUX_CORE_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace phenoflux {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using Index = Eigen::Index;

inline constexpr Index kYearDays = 365;
inline constexpr Index kMetDays = 2 * kYearDays;
inline constexpr Index kMetVariables = 11;
inline constexpr Index kAuxIndices = 20;
inline constexpr Index kKndviStats = 5;
// 4 degrees Celsius, base temperature for both forcing and chilling.
inline constexpr double kBaseTemperature = 277.15;
inline constexpr double kCelsiusOffset = 273.15;

// Met variable order of every MetGrid row.
inline constexpr std::string_view kMetVariableNames[kMetVariables] = {
    "dayl", "prcp", "srad", "swe", "vp", "vpd", "tmin", "tmax", "pet", "snow", "pres"};
inline constexpr Index kTminRow = 6;
inline constexpr Index kTmaxRow = 7;
inline constexpr Index kPrcpRow = 1;

enum class ErrorKind { Invalid, Validation, MissingArtifact, Numerical };

// Single exception type; the kind maps onto CLI exit codes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ErrorKind kind = ErrorKind::Invalid)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Warnings are collected by callers that care; default sink is stderr.
void warn(const std::string& message);

// FNV-1a, stable across platforms (std::hash is not).
inline std::uint64_t stable_hash(std::string_view text, std::uint64_t seed = 1469598103934665603ULL) {
  std::uint64_t h = seed;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Percentile with linear interpolation between closest ranks (numpy "linear").
template <typename Scalar>
Scalar percentile(std::vector<Scalar> values, double q) {
  if (values.empty()) throw Error("percentile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const Scalar frac = static_cast<Scalar>(pos - static_cast<double>(lo));
  return values[lo] + frac * (values[hi] - values[lo]);
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace phenoflux

#endif  // PHENOFLUX_CORE_HPP
