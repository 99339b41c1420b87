#include "phenoflux/wavelet.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace phenoflux {

void WaveletConfig::validate() const {
  if (scale_exponents.empty()) throw Error("wavelet config needs at least one scale");
  for (std::size_t i = 1; i < scale_exponents.size(); ++i)
    if (scale_exponents[i] <= scale_exponents[i - 1]) throw Error("wavelet scales must be strictly increasing");
  if (truncation_radius < 3.0) throw Error("wavelet truncation radius must be >= 3 sigma");
}

Matrix stack_wavelet_rows(const MetGrid& met, const Vector& walk, const WaveletConfig& config) {
  config.validate();
  if (met.values.rows() != kMetVariables || met.values.cols() != kMetDays || walk.size() != kMetDays)
    throw Error("build_input: dimension mismatch");
  const Index s = config.scales();
  Matrix out(s * (kMetVariables + 1), kMetDays);
  for (Index v = 0; v < kMetVariables; ++v) out.middleRows(v * s, s) = cwt(met.values.row(v).transpose(), config);
  out.bottomRows(s) = cwt(walk, config);
  return out;
}

Matrix stack_raw_rows(const MetGrid& met, const Vector& walk) {
  if (met.values.rows() != kMetVariables || met.values.cols() != kMetDays || walk.size() != kMetDays)
    throw Error("build_input: dimension mismatch");
  Matrix out(kMetVariables + 1, kMetDays);
  out.topRows(kMetVariables) = met.values;
  out.bottomRows(1) = walk.transpose();
  return out;
}

Matrix build_input(const MetGrid& met, const Vector& walk, const WaveletConfig& config, const NormStats& stats) {
  Matrix stacked = stack_wavelet_rows(met, walk, config);
  if (stats.rows() != stacked.rows()) throw Error("build_input: normalization stats do not match row count");
  return apply_norm(stacked, stats);
}

namespace {

constexpr char kTensorMagic[5] = {'P', 'H', 'X', 'W', '1'};

template <typename T>
void write_le(std::ostream& os, T value) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw Error("truncated tensor file", ErrorKind::Validation);
  return value;
}

}  // namespace

void write_tensor(const std::filesystem::path& path, const Matrix& tensor) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os.write(kTensorMagic, sizeof(kTensorMagic));
  write_le<std::uint64_t>(os, static_cast<std::uint64_t>(tensor.rows()));
  write_le<std::uint64_t>(os, static_cast<std::uint64_t>(tensor.cols()));
  for (Index r = 0; r < tensor.rows(); ++r)
    for (Index c = 0; c < tensor.cols(); ++c) write_le<double>(os, tensor(r, c));
}

Matrix read_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string(), ErrorKind::MissingArtifact);
  char magic[5];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kTensorMagic, sizeof(magic)) != 0)
    throw Error("not a PHXW1 tensor: " + path.string(), ErrorKind::Validation);
  const auto rows = static_cast<Index>(read_le<std::uint64_t>(is));
  const auto cols = static_cast<Index>(read_le<std::uint64_t>(is));
  Matrix out(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) out(r, c) = read_le<double>(is);
  return out;
}

}  // namespace phenoflux
