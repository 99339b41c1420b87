#include "phenoflux/config.hpp"

#include "phenoflux/dataset_io.hpp"
#include "phenoflux/linear_model.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>
#include <variant>

namespace phenoflux {

namespace {

using Field = std::variant<std::string*, int*, long*, unsigned*, std::uint64_t*, double*, bool*, std::vector<int>*,
                           std::vector<long>*, std::vector<double>*, Optimizer*>;

template <typename F>
void visit_fields(RunConfig& c, F&& f) {
  f("input_dir", Field(&c.input_dir));
  f("seed", Field(&c.seed));
  f("jobs", Field(&c.jobs));
  f("data.gcc_standardization", Field(&c.gcc_standardization));
  f("data.chill_start_prev_doy", Field(&c.chill_start_prev_doy));
  f("data.feature_doy", Field(&c.feature_doy));
  f("wavelet.scale_exponents", Field(&c.wavelet.scale_exponents));
  f("wavelet.truncation_radius", Field(&c.wavelet.truncation_radius));
  f("network.channels", Field(&c.network.channels));
  f("network.kernel", Field(&c.network.kernel));
  f("network.stem_kernel_rows", Field(&c.network.stem_kernel_rows));
  f("network.stem_kernel_days", Field(&c.network.stem_kernel_days));
  f("network.stem_stride_rows", Field(&c.network.stem_stride_rows));
  f("network.stem_stride_days", Field(&c.network.stem_stride_days));
  f("network.hidden", Field(&c.network.hidden));
  f("train.batch_size", Field(&c.train.batch_size));
  f("train.learning_rate", Field(&c.train.learning_rate));
  f("train.optimizer", Field(&c.train.optimizer));
  f("train.cosine_t0", Field(&c.train.cosine_t0));
  f("train.early_stop_patience", Field(&c.train.early_stop_patience));
  f("train.aux_weight", Field(&c.train.aux_weight));
  f("train.max_epochs", Field(&c.train.max_epochs));
  f("train.clip_norm", Field(&c.train.clip_norm));
  f("ensemble.size", Field(&c.ensemble_size));
  f("search.budget", Field(&c.search_budget));
  f("linear.ridge_grid", Field(&c.ridge_grid));
  f("attribution.ig_steps", Field(&c.ig_steps));
  f("attribution.steepness", Field(&c.soft_sos_steepness));
  f("attribution.pooled_cutoff", Field(&c.ig_pooled_cutoff));
  f("attribution.cutoff_percentile", Field(&c.ig_cutoff_percentile));
  f("attribution.min_sos", Field(&c.attribution_min_sos));
  f("feature_test.alpha", Field(&c.feature_test.alpha));
  f("feature_test.epsilon", Field(&c.feature_test.epsilon));
  f("feature_test.permutations", Field(&c.feature_test.permutations));
  f("feature_test.bins", Field(&c.feature_test.bins));
  f("feature_test.subset", Field(&c.feature_test_subset));
  f("synth.n_sites", Field(&c.synth.n_sites));
  f("synth.years_per_site", Field(&c.synth.years_per_site));
  f("synth.first_year", Field(&c.synth.first_year));
  f("synth.climate_spread", Field(&c.synth.climate_spread));
  f("synth.noise_std", Field(&c.synth.noise_std));
  f("synth.gcc_noise", Field(&c.synth.gcc_noise));
  f("synth.photoperiod_gain", Field(&c.synth.photoperiod_gain));
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) out += fmt_double(v[i]);
    else out += std::to_string(v[i]);
  }
  return out;
}

std::string format(const Field& field) {
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) return *p;
        else if constexpr (std::is_same_v<T, bool>) return *p ? "true" : "false";
        else if constexpr (std::is_same_v<T, double>) return fmt_double(*p);
        else if constexpr (std::is_same_v<T, Optimizer>) return to_string(*p);
        else if constexpr (std::is_arithmetic_v<T>) return std::to_string(*p);
        else return join(*p);
      },
      field);
}

template <typename T>
T parse_number(const std::string& key, std::string_view s) {
  T v{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end)
    throw Error("config key '" + key + "': bad value '" + std::string(s) + "'", ErrorKind::Validation);
  return v;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& s) {
  std::vector<T> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = s.find(',', start);
    std::string_view item(s.data() + start, (comma == std::string::npos ? s.size() : comma) - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    out.push_back(parse_number<T>(key, item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

void assign(const std::string& key, const Field& field, const std::string& value) {
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) {
          *p = value;
        } else if constexpr (std::is_same_v<T, bool>) {
          if (value == "true" || value == "1") *p = true;
          else if (value == "false" || value == "0") *p = false;
          else throw Error("config key '" + key + "': expected true or false", ErrorKind::Validation);
        } else if constexpr (std::is_same_v<T, Optimizer>) {
          *p = optimizer_from_string(value);
        } else if constexpr (std::is_arithmetic_v<T>) {
          *p = parse_number<T>(key, value);
        } else {
          *p = parse_list<typename T::value_type>(key, value);
        }
      },
      field);
}

std::string trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

}  // namespace

RunConfig::RunConfig() { ridge_grid = default_ridge_grid(); }

void RunConfig::validate() const {
  wavelet.validate();
  train.validate();
  feature_test.validate();
  if (gcc_standardization != "per_site" && gcc_standardization != "global")
    throw Error("data.gcc_standardization must be per_site or global", ErrorKind::Validation);
  if (feature_test_subset != "test" && feature_test_subset != "all")
    throw Error("feature_test.subset must be test or all", ErrorKind::Validation);
  if (chill_start_prev_doy < 0 || chill_start_prev_doy > kYearDays)
    throw Error("data.chill_start_prev_doy must lie in [0, 365]", ErrorKind::Validation);
  if (feature_doy < 2 || feature_doy > kYearDays) throw Error("data.feature_doy must lie in [2, 365]", ErrorKind::Validation);
  if (ensemble_size < 1) throw Error("ensemble.size must be >= 1", ErrorKind::Validation);
  if (search_budget < 0) throw Error("search.budget must be >= 0", ErrorKind::Validation);
  if (ridge_grid.empty()) throw Error("linear.ridge_grid is empty", ErrorKind::Validation);
  for (double r : ridge_grid)
    if (!(r >= 0.0)) throw Error("linear.ridge_grid entries must be >= 0", ErrorKind::Validation);
  if (ig_steps < 1) throw Error("attribution.ig_steps must be >= 1", ErrorKind::Validation);
  if (!(ig_cutoff_percentile >= 0.0 && ig_cutoff_percentile <= 100.0))
    throw Error("attribution.cutoff_percentile must lie in [0, 100]", ErrorKind::Validation);
  if (jobs < 1) throw Error("jobs must be >= 1", ErrorKind::Validation);
  NeuralConfig n = network;
  n.validate();
}

std::map<std::string, std::string> RunConfig::to_map() const {
  std::map<std::string, std::string> kv;
  RunConfig copy = *this;
  visit_fields(copy, [&](const char* key, const Field& f) { kv[key] = format(f); });
  return kv;
}

RunConfig RunConfig::from_map(const std::map<std::string, std::string>& kv) {
  RunConfig c;
  std::map<std::string, Field> fields;
  visit_fields(c, [&](const char* key, const Field& f) { fields.emplace(key, f); });
  for (const auto& [k, v] : kv) {
    auto it = fields.find(k);
    if (it == fields.end()) throw Error("unknown config key '" + k + "'", ErrorKind::Validation);
    assign(k, it->second, v);
  }
  return c;
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : to_map()) os << k << " = " << v << '\n';
  return os.str();
}

std::vector<std::string> config_assignments(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error("config line " + std::to_string(lineno) + ": expected key = value", ErrorKind::Validation);
    out.push_back(trim(std::string_view(t).substr(0, eq)) + "=" + trim(std::string_view(t).substr(eq + 1)));
  }
  return out;
}

RunConfig RunConfig::parse(const std::string& text) { return with_overrides(RunConfig(), config_assignments(text)); }

RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("config file " + path.string() + " not found", ErrorKind::Validation);
  return RunConfig::parse(read_text(path));
}

RunConfig with_overrides(const RunConfig& base, const std::vector<std::string>& assignments) {
  auto kv = base.to_map();
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw Error("override '" + a + "' is not key=value", ErrorKind::Validation);
    kv[trim(std::string_view(a).substr(0, eq))] = trim(std::string_view(a).substr(eq + 1));
  }
  return RunConfig::from_map(kv);
}

}  // namespace phenoflux
