#ifndef PHENOFLUX_DATA_MODEL_HPP
#define PHENOFLUX_DATA_MODEL_HPP

#include "phenoflux/core.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace phenoflux {

struct ClimateNormals {
  double mean_annual_temp = 283.15;  // kelvin
  double mean_annual_precip = 0.0;   // mm / year
  int window_years = 30;

  void validate() const;
};

struct Site {
  std::string site_id;
  double latitude = 0.0;
  double longitude = 0.0;
  ClimateNormals normals;

  void validate() const;
};

/// 11 x 730 daily meteorology. Columns 0..364 are the previous year,
/// 365..729 the current year. Temperatures are kelvin.
struct MetGrid {
  Matrix values = Matrix::Zero(kMetVariables, kMetDays);

  void validate() const;
  /// Daily mean temperature (tmin + tmax) / 2 over all 730 days.
  Vector tmean() const;
  Vector tmean_current() const { return tmean().tail(kYearDays); }
  Vector tmean_previous() const { return tmean().head(kYearDays); }
};

struct GccSeries {
  Vector values = Vector::Zero(kYearDays);
  Eigen::Array<bool, Eigen::Dynamic, 1> observed = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(kYearDays, false);

  Index observed_count() const { return observed.count(); }
  /// Values with masked days filled by linear interpolation (edges held constant).
  Vector filled() const;
};

struct SiteYear {
  std::string site_id;
  int year = 0;
  MetGrid met;
  GccSeries gcc;
  std::optional<Matrix> aux_color;  // 20 x 365, NaN where missing
  std::optional<Vector> kndvi;      // mean, std, p50, p75, p90
  ClimateNormals normals;
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
};

struct NormStats {
  Vector mean;
  Vector std;

  Index rows() const { return mean.size(); }
};

struct CivilDate {
  int year = 0;
  int month = 0;
  int day = 0;

  friend auto operator<=>(const CivilDate&, const CivilDate&) = default;
};

bool is_leap_year(int year);
/// ISO-8601 date, optionally followed by a time part which is ignored.
CivilDate parse_iso_date(std::string_view text);
/// Day of year in [1, 365] with 29 February dropped (nullopt for that day).
std::optional<int> day_of_year_noleap(const CivilDate& date);
/// Inverse of day_of_year_noleap; never yields 29 February.
CivilDate date_from_doy_noleap(int year, int doy);

struct GccObservation {
  CivilDate date;
  double gcc = 0.0;
};

/// 90th percentile of each day's observations; days without data stay masked.
GccSeries daily_gcc_percentile(std::span<const GccObservation> observations);

/// Raw GCC history of a candidate site as seen by the quality filter.
struct SiteGccHistory {
  std::string site_id;
  int quality_group = 1;
  std::vector<double> raw_values;      // every sub-daily observation
  std::map<int, GccSeries> daily;      // per calendar year, raw 90th percentiles
};

struct QualityRules {
  double gcc_min = 0.1;
  double gcc_max = 0.6;
  int max_quality_group = 2;
  Index min_observed_days = 300;  // per calendar year to count as a complete year
};

struct Rejection {
  std::string site_id;
  std::string reason;
};

struct QualityReport {
  std::vector<SiteGccHistory> accepted;
  std::vector<Rejection> rejected;
};

int complete_years(const SiteGccHistory& history, const QualityRules& rules = {});
QualityReport quality_filter(const std::vector<SiteGccHistory>& sites, const QualityRules& rules = {});

struct GccRange {
  double min = 0.0;
  double max = 1.0;
};

/// Min-max map of every observed value of the history into [0, 1].
GccRange gcc_range(const std::map<int, GccSeries>& history);
std::map<int, GccSeries> standardize_gcc(const std::map<int, GccSeries>& history, const GccRange& range);
std::map<int, GccSeries> standardize_gcc(const std::map<int, GccSeries>& history, GccRange* range_out = nullptr);
std::map<int, GccSeries> destandardize_gcc(const std::map<int, GccSeries>& history, const GccRange& range);

struct SplitSizes {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

/// 66 : 9 : 16 scaled to n, each part nonempty.
SplitSizes split_sizes(std::size_t n_sites);
DatasetSplit split_sites(std::vector<std::string> site_ids, std::uint64_t seed);
void validate_split(const DatasetSplit& split);

/// Per-row mean / std pooled over samples and columns.
NormStats fit_norm_stats(std::span<const Matrix> inputs);
Matrix apply_norm(const Matrix& input, const NormStats& stats);

/// Linear interpolation over gaps of at most `max_gap` days.
/// Returns false when a longer gap (or an unbounded edge gap) remains.
bool fill_met_gaps(Matrix& values, const std::vector<bool>& present, Index max_gap = 7);

}  // namespace phenoflux

#endif  // PHENOFLUX_DATA_MODEL_HPP
