#include "phenoflux/data_model.hpp"

#include <charconv>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>
#include <set>

namespace phenoflux {

void warn(const std::string& message) { std::cerr << "warning: " << message << '\n'; }

void ClimateNormals::validate() const {
  if (!(mean_annual_temp >= 200.0 && mean_annual_temp <= 330.0))
    throw Error("mean_annual_temp outside [200, 330] K", ErrorKind::Validation);
  if (!(mean_annual_precip >= 0.0)) throw Error("mean_annual_precip must be >= 0", ErrorKind::Validation);
  if (window_years < 1) throw Error("normals window must be >= 1 year", ErrorKind::Validation);
}

void Site::validate() const {
  if (site_id.empty()) throw Error("empty site_id", ErrorKind::Validation);
  if (std::abs(latitude) > 90.0) throw Error("latitude out of range for " + site_id, ErrorKind::Validation);
  if (std::abs(longitude) > 180.0) throw Error("longitude out of range for " + site_id, ErrorKind::Validation);
  normals.validate();
}

void MetGrid::validate() const {
  if (values.rows() != kMetVariables || values.cols() != kMetDays)
    throw Error("met grid must be 11 x 730", ErrorKind::Validation);
  if (!values.allFinite()) throw Error("met grid has missing values", ErrorKind::Validation);
}

Vector MetGrid::tmean() const {
  return (0.5 * (values.row(kTminRow) + values.row(kTmaxRow))).transpose();
}

Vector GccSeries::filled() const {
  Vector out = values;
  const Index n = values.size();
  Index prev = -1;
  for (Index d = 0; d <= n; ++d) {
    if (d < n && !observed(d)) continue;
    if (d - prev > 1) {
      for (Index k = prev + 1; k < d; ++k) {
        if (prev < 0 && d >= n) {
          out(k) = 0.0;
        } else if (prev < 0) {
          out(k) = values(d);
        } else if (d >= n) {
          out(k) = values(prev);
        } else {
          const double w = static_cast<double>(k - prev) / static_cast<double>(d - prev);
          out(k) = (1.0 - w) * values(prev) + w * values(d);
        }
      }
    }
    prev = d;
  }
  return out;
}

bool is_leap_year(int year) { return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0; }

CivilDate parse_iso_date(std::string_view text) {
  auto fail = [&] { return Error("bad ISO-8601 date '" + std::string(text) + "'", ErrorKind::Validation); };
  if (text.size() < 10 || text[4] != '-' || text[7] != '-') throw fail();
  CivilDate d;
  auto parse = [&](std::size_t pos, std::size_t len, int& out) {
    auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, out);
    if (ec != std::errc() || ptr != text.data() + pos + len) throw fail();
  };
  parse(0, 4, d.year);
  parse(5, 2, d.month);
  parse(8, 2, d.day);
  static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (d.month < 1 || d.month > 12) throw fail();
  const int limit = kDays[d.month - 1] + (d.month == 2 && is_leap_year(d.year) ? 1 : 0);
  if (d.day < 1 || d.day > limit) throw fail();
  return d;
}

std::optional<int> day_of_year_noleap(const CivilDate& date) {
  static constexpr int kCumulative[] = {0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334};
  if (date.month == 2 && date.day == 29) return std::nullopt;
  return kCumulative[date.month - 1] + date.day;
}

CivilDate date_from_doy_noleap(int year, int doy) {
  static constexpr int kCumulative[] = {0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334, 365};
  if (doy < 1 || doy > 365) throw Error("doy " + std::to_string(doy) + " outside [1, 365]");
  int m = 0;
  while (doy > kCumulative[m + 1]) ++m;
  return {year, m + 1, doy - kCumulative[m]};
}

GccSeries daily_gcc_percentile(std::span<const GccObservation> observations) {
  if (observations.empty()) throw Error("no observations");
  const int year = observations.front().date.year;
  std::vector<std::vector<double>> per_day(kYearDays);
  for (const auto& obs : observations) {
    if (obs.date.year != year) throw Error("observations span more than one calendar year");
    if (auto doy = day_of_year_noleap(obs.date)) per_day[*doy - 1].push_back(obs.gcc);
  }
  GccSeries out;
  for (Index d = 0; d < kYearDays; ++d) {
    if (per_day[d].empty()) continue;
    out.values(d) = percentile(std::move(per_day[d]), 90.0);
    out.observed(d) = true;
  }
  return out;
}

int complete_years(const SiteGccHistory& history, const QualityRules& rules) {
  int n = 0;
  for (const auto& [year, series] : history.daily)
    if (series.observed_count() >= rules.min_observed_days) ++n;
  return n;
}

QualityReport quality_filter(const std::vector<SiteGccHistory>& sites, const QualityRules& rules) {
  QualityReport report;
  for (const auto& site : sites) {
    if (site.quality_group < 1 || site.quality_group > rules.max_quality_group) {
      report.rejected.push_back({site.site_id, "quality group " + std::to_string(site.quality_group)});
      continue;
    }
    const bool in_range = std::all_of(site.raw_values.begin(), site.raw_values.end(),
                                      [&](double v) { return v >= rules.gcc_min && v <= rules.gcc_max; });
    if (!in_range) {
      report.rejected.push_back({site.site_id, "gcc out of range"});
      continue;
    }
    if (complete_years(site, rules) < 1) {
      report.rejected.push_back({site.site_id, "no complete year"});
      continue;
    }
    report.accepted.push_back(site);
  }
  return report;
}

GccRange gcc_range(const std::map<int, GccSeries>& history) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& [year, s] : history) {
    for (Index d = 0; d < s.values.size(); ++d) {
      if (!s.observed(d)) continue;
      lo = std::min(lo, s.values(d));
      hi = std::max(hi, s.values(d));
    }
  }
  if (!(hi > lo)) throw Error("degenerate gcc range");
  return {lo, hi};
}

std::map<int, GccSeries> standardize_gcc(const std::map<int, GccSeries>& history, const GccRange& range) {
  if (!(range.max > range.min)) throw Error("degenerate gcc range");
  const double scale = range.max - range.min;
  std::map<int, GccSeries> out;
  for (const auto& [year, s] : history) {
    GccSeries t = s;
    for (Index d = 0; d < t.values.size(); ++d)
      if (t.observed(d)) t.values(d) = (s.values(d) - range.min) / scale;
    out.emplace(year, std::move(t));
  }
  return out;
}

std::map<int, GccSeries> standardize_gcc(const std::map<int, GccSeries>& history, GccRange* range_out) {
  const GccRange range = gcc_range(history);
  if (range_out) *range_out = range;
  return standardize_gcc(history, range);
}

std::map<int, GccSeries> destandardize_gcc(const std::map<int, GccSeries>& history, const GccRange& range) {
  std::map<int, GccSeries> out;
  for (const auto& [year, s] : history) {
    GccSeries t = s;
    for (Index d = 0; d < t.values.size(); ++d)
      if (t.observed(d)) t.values(d) = range.min + s.values(d) * (range.max - range.min);
    out.emplace(year, std::move(t));
  }
  return out;
}

SplitSizes split_sizes(std::size_t n) {
  if (n < 3) throw Error("need at least 3 sites to split");
  auto share = [n](double parts) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(n) * parts / 91.0)));
  };
  SplitSizes s;
  s.validation = share(9.0);
  s.test = share(16.0);
  while (s.validation + s.test >= n) {
    if (s.test > 1) --s.test;
    else --s.validation;
  }
  s.train = n - s.validation - s.test;
  return s;
}

DatasetSplit split_sites(std::vector<std::string> site_ids, std::uint64_t seed) {
  const SplitSizes sizes = split_sizes(site_ids.size());
  std::sort(site_ids.begin(), site_ids.end());
  if (std::adjacent_find(site_ids.begin(), site_ids.end()) != site_ids.end())
    throw Error("duplicate site ids in split");
  std::mt19937_64 rng(seed);
  // Fisher-Yates with plain modulo; std::shuffle output differs between standard libraries.
  for (std::size_t i = site_ids.size() - 1; i > 0; --i) std::swap(site_ids[i], site_ids[rng() % (i + 1)]);

  DatasetSplit split;
  split.seed = seed;
  auto it = site_ids.begin();
  split.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes.train));
  it += static_cast<std::ptrdiff_t>(sizes.train);
  split.validation.assign(it, it + static_cast<std::ptrdiff_t>(sizes.validation));
  it += static_cast<std::ptrdiff_t>(sizes.validation);
  split.test.assign(it, site_ids.end());
  for (auto* part : {&split.train, &split.validation, &split.test}) std::sort(part->begin(), part->end());
  return split;
}

void validate_split(const DatasetSplit& split) {
  std::set<std::string> seen;
  for (const auto* part : {&split.train, &split.validation, &split.test}) {
    if (part->empty()) throw Error("empty split part", ErrorKind::Validation);
    for (const auto& id : *part)
      if (!seen.insert(id).second) throw Error("site '" + id + "' in more than one split", ErrorKind::Validation);
  }
}

NormStats fit_norm_stats(std::span<const Matrix> inputs) {
  if (inputs.empty()) throw Error("no inputs to fit normalization");
  const Index rows = inputs.front().rows();
  Vector sum = Vector::Zero(rows);
  double count = 0.0;
  for (const auto& m : inputs) {
    if (m.rows() != rows) throw Error("inconsistent input row count");
    sum += m.rowwise().sum();
    count += static_cast<double>(m.cols());
  }
  NormStats stats;
  stats.mean = sum / count;
  Vector sq = Vector::Zero(rows);
  for (const auto& m : inputs) sq += (m.colwise() - stats.mean).rowwise().squaredNorm();
  stats.std = (sq / count).cwiseSqrt();
  for (Index r = 0; r < rows; ++r)
    if (!(stats.std(r) > 1e-12 * std::max(1.0, std::abs(stats.mean(r))))) stats.std(r) = 1.0;
  return stats;
}

Matrix apply_norm(const Matrix& input, const NormStats& stats) {
  if (input.rows() != stats.rows()) throw Error("normalization stats do not match input rows");
  return (input.colwise() - stats.mean).array().colwise() / stats.std.array();
}

bool fill_met_gaps(Matrix& values, const std::vector<bool>& present, Index max_gap) {
  const Index n = values.cols();
  Index prev = -1;
  for (Index d = 0; d <= n; ++d) {
    if (d < n && !present[static_cast<std::size_t>(d)]) continue;
    const Index gap = d - prev - 1;
    if (gap > 0) {
      if (prev < 0 || d >= n || gap > max_gap) return false;
      for (Index k = prev + 1; k < d; ++k) {
        const double w = static_cast<double>(k - prev) / static_cast<double>(d - prev);
        values.col(k) = (1.0 - w) * values.col(prev) + w * values.col(d);
      }
    }
    prev = d;
  }
  return true;
}

}  // namespace phenoflux
