#include "phenoflux/dataset_io.hpp"

#include "phenoflux/climate_features.hpp"
#include "phenoflux/serialization.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace phenoflux {

namespace fs = std::filesystem;

const Site& Dataset::site(const std::string& id) const {
  for (const auto& s : sites)
    if (s.site_id == id) return s;
  throw Error("unknown site '" + id + "'", ErrorKind::Validation);
}

std::vector<std::string> Dataset::site_ids() const {
  std::vector<std::string> ids;
  for (const auto& s : sites) ids.push_back(s.site_id);
  return ids;
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read " + path.string(), ErrorKind::MissingArtifact);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
}

std::size_t CsvTable::column(const std::string& col) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == col) return i;
  throw Error(name + ": missing column '" + col + "'", ErrorKind::Validation);
}

bool CsvTable::has_column(const std::string& col) const {
  return std::find(header.begin(), header.end(), col) != header.end();
}

std::string CsvTable::where(std::size_t row) const { return name + ":" + std::to_string(line[row]); }

double CsvTable::number(std::size_t row, std::size_t col) const {
  const std::string& f = rows[row][col];
  if (f.empty() || f == "NA" || f == "nan" || f == "NaN") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const char* end = f.data() + f.size();
  auto [ptr, ec] = std::from_chars(f.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw Error(where(row) + ": bad number '" + f + "' in column '" + header[col] + "'", ErrorKind::Validation);
  return v;
}

int CsvTable::integer(std::size_t row, std::size_t col) const {
  const std::string& f = rows[row][col];
  int v = 0;
  const char* end = f.data() + f.size();
  auto [ptr, ec] = std::from_chars(f.data(), end, v);
  if (f.empty() || ec != std::errc() || ptr != end)
    throw Error(where(row) + ": bad integer '" + f + "' in column '" + header[col] + "'", ErrorKind::Validation);
  return v;
}

namespace {

std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view f = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t')) f.remove_suffix(1);
    out.emplace_back(f);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

CsvTable read_csv(const fs::path& path) {
  CsvTable t;
  t.name = path.filename().string();
  if (!fs::exists(path)) throw Error("missing input file " + path.string(), ErrorKind::Validation);
  const std::string text = read_text(path);
  std::size_t pos = 0;
  std::size_t lineno = 0;
  bool have_header = false;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string_view line(text.data() + pos, nl - pos);
    pos = nl + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size())
      throw Error(t.name + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                      " fields, got " + std::to_string(fields.size()),
                  ErrorKind::Validation);
    t.rows.push_back(std::move(fields));
    t.line.push_back(lineno);
  }
  if (!have_header) throw Error(t.name + ": empty file, header expected", ErrorKind::Validation);
  return t;
}

namespace {

CivilDate date_at(const CsvTable& t, std::size_t row, std::size_t col) {
  try {
    return parse_iso_date(t.rows[row][col]);
  } catch (const Error& e) {
    throw Error(t.where(row) + ": " + e.what(), ErrorKind::Validation);
  }
}

struct MetHistory {
  std::map<int, Matrix> years;  // 11 x 365, NaN where absent
};

std::map<std::string, MetHistory> read_met(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t c_site = t.column("site_id");
  const std::size_t c_date = t.column("date");
  std::size_t cols[kMetVariables];
  for (Index v = 0; v < kMetVariables; ++v) cols[v] = t.column(std::string(kMetVariableNames[v]));
  std::map<std::string, MetHistory> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const CivilDate date = date_at(t, r, c_date);
    const auto doy = day_of_year_noleap(date);
    if (!doy) continue;  // 29 February is dropped
    auto& years = out[t.rows[r][c_site]].years;
    auto it = years.find(date.year);
    if (it == years.end())
      it = years.emplace(date.year, Matrix::Constant(kMetVariables, kYearDays, std::numeric_limits<double>::quiet_NaN()))
               .first;
    for (Index v = 0; v < kMetVariables; ++v) {
      double x = t.number(r, cols[v]);
      if (v == kTminRow || v == kTmaxRow) x += kCelsiusOffset;
      it->second(v, *doy - 1) = x;
    }
  }
  return out;
}

}  // namespace

Dataset ingest_csv_dir(const fs::path& dir, const IngestOptions& options) {
  if (options.gcc_standardization != "per_site" && options.gcc_standardization != "global")
    throw Error("gcc standardization must be per_site or global", ErrorKind::Validation);
  if (!fs::is_directory(dir)) throw Error("input directory " + dir.string() + " does not exist", ErrorKind::Validation);

  // gcc observations
  const CsvTable gt = read_csv(dir / "gcc.csv");
  const std::size_t g_site = gt.column("site_id");
  const std::size_t g_time = gt.column("timestamp");
  const std::size_t g_val = gt.column("gcc");
  const std::size_t g_group = gt.column("quality_group");
  std::map<std::string, std::map<int, std::vector<GccObservation>>> obs;
  std::map<std::string, SiteGccHistory> histories;
  for (std::size_t r = 0; r < gt.rows.size(); ++r) {
    const std::string& id = gt.rows[r][g_site];
    if (id.empty()) throw Error(gt.where(r) + ": empty site_id", ErrorKind::Validation);
    const CivilDate date = date_at(gt, r, g_time);
    const double v = gt.number(r, g_val);
    if (std::isnan(v)) continue;
    const int group = gt.integer(r, g_group);
    auto [it, fresh] = histories.try_emplace(id);
    if (fresh) {
      it->second.site_id = id;
      it->second.quality_group = group;
    } else if (it->second.quality_group != group) {
      throw Error(gt.where(r) + ": quality_group changes within site '" + id + "'", ErrorKind::Validation);
    }
    it->second.raw_values.push_back(v);
    obs[id][date.year].push_back({date, v});
  }
  std::vector<SiteGccHistory> candidates;
  for (auto& [id, h] : histories) {
    for (const auto& [year, list] : obs[id]) h.daily.emplace(year, daily_gcc_percentile(list));
    candidates.push_back(std::move(h));
  }
  QualityReport report = quality_filter(candidates, options.rules);

  Dataset data;
  data.gcc_standardization = options.gcc_standardization;
  data.rejected = report.rejected;

  std::map<std::string, std::map<int, GccSeries>> standardized;
  if (options.gcc_standardization == "global" && !report.accepted.empty()) {
    std::map<int, GccSeries> pooled;
    int key = 0;
    for (const auto& h : report.accepted)
      for (const auto& [y, s] : h.daily) pooled.emplace(key++, s);
    const GccRange range = gcc_range(pooled);
    for (const auto& h : report.accepted) {
      standardized[h.site_id] = standardize_gcc(h.daily, range);
      data.gcc_ranges[h.site_id] = range;
    }
  } else {
    for (const auto& h : report.accepted) {
      GccRange range;
      try {
        standardized[h.site_id] = standardize_gcc(h.daily, &range);
      } catch (const Error&) {
        data.rejected.push_back({h.site_id, "degenerate gcc range"});
        continue;
      }
      data.gcc_ranges[h.site_id] = range;
    }
  }

  // optional site coordinates
  std::map<std::string, std::pair<double, double>> coords;
  if (fs::exists(dir / "sites.csv")) {
    const CsvTable st = read_csv(dir / "sites.csv");
    const std::size_t s_id = st.column("site_id"), s_lat = st.column("latitude"), s_lon = st.column("longitude");
    for (std::size_t r = 0; r < st.rows.size(); ++r)
      coords[st.rows[r][s_id]] = {st.number(r, s_lat), st.number(r, s_lon)};
  }
  std::map<std::string, ClimateNormals> normals;
  if (fs::exists(dir / "normals.csv")) {
    const CsvTable nt = read_csv(dir / "normals.csv");
    const std::size_t n_id = nt.column("site_id"), n_t = nt.column("tmean_annual"), n_p = nt.column("prcp_annual");
    for (std::size_t r = 0; r < nt.rows.size(); ++r) {
      ClimateNormals n;
      n.mean_annual_temp = nt.number(r, n_t) + kCelsiusOffset;
      n.mean_annual_precip = nt.number(r, n_p);
      try {
        n.validate();
      } catch (const Error& e) {
        throw Error(nt.where(r) + ": " + e.what(), ErrorKind::Validation);
      }
      normals[nt.rows[r][n_id]] = n;
    }
  }

  const auto met = read_met(dir / "met.csv");

  for (const auto& [id, years] : standardized) {
    auto mit = met.find(id);
    if (mit == met.end()) {
      data.rejected.push_back({id, "no meteorology"});
      data.gcc_ranges.erase(id);
      continue;
    }
    const auto& met_years = mit->second.years;
    Site site;
    site.site_id = id;
    if (auto c = coords.find(id); c != coords.end()) {
      site.latitude = c->second.first;
      site.longitude = c->second.second;
    }
    if (auto n = normals.find(id); n != normals.end()) {
      site.normals = n->second;
    } else {
      std::vector<int> full;
      for (const auto& [y, m] : met_years)
        if (m.allFinite()) full.push_back(y);
      if (full.empty()) {
        data.rejected.push_back({id, "no full meteorological year for climate normals"});
        data.gcc_ranges.erase(id);
        continue;
      }
      Matrix t(static_cast<Index>(full.size()), kYearDays), p(static_cast<Index>(full.size()), kYearDays);
      for (std::size_t k = 0; k < full.size(); ++k) {
        const Matrix& m = met_years.at(full[k]);
        t.row(static_cast<Index>(k)) = 0.5 * (m.row(kTminRow) + m.row(kTmaxRow));
        p.row(static_cast<Index>(k)) = m.row(kPrcpRow);
      }
      site.normals = normals_from_history(t, p);
    }
    site.validate();

    int kept = 0;
    for (const auto& [year, gcc] : years) {
      if (gcc.observed_count() < options.rules.min_observed_days) continue;
      auto prev = met_years.find(year - 1);
      auto cur = met_years.find(year);
      if (prev == met_years.end() || cur == met_years.end()) {
        data.rejected.push_back({id + " " + std::to_string(year), "meteorology does not cover two years"});
        continue;
      }
      SiteYear sy;
      sy.site_id = id;
      sy.year = year;
      sy.normals = site.normals;
      sy.met.values.leftCols(kYearDays) = prev->second;
      sy.met.values.rightCols(kYearDays) = cur->second;
      std::vector<bool> present(kMetDays);
      for (Index d = 0; d < kMetDays; ++d) present[static_cast<std::size_t>(d)] = sy.met.values.col(d).allFinite();
      if (!fill_met_gaps(sy.met.values, present, options.max_met_gap)) {
        data.rejected.push_back({id + " " + std::to_string(year), "met gap longer than " +
                                                                        std::to_string(options.max_met_gap) + " days"});
        continue;
      }
      sy.gcc = gcc;
      data.site_years.push_back(std::move(sy));
      ++kept;
    }
    if (kept == 0) {
      data.rejected.push_back({id, "no usable site-year"});
      data.gcc_ranges.erase(id);
      continue;
    }
    data.sites.push_back(site);
    for (const auto& h : report.accepted)
      if (h.site_id == id) data.quality_group[id] = h.quality_group;
  }

  // optional auxiliary labels
  std::map<std::pair<std::string, int>, std::size_t> index;
  for (std::size_t i = 0; i < data.site_years.size(); ++i)
    index[{data.site_years[i].site_id, data.site_years[i].year}] = i;
  if (fs::exists(dir / "aux.csv")) {
    const CsvTable at = read_csv(dir / "aux.csv");
    const std::size_t a_id = at.column("site_id"), a_date = at.column("date");
    std::vector<std::size_t> cols;
    for (Index c = 0; c < kAuxIndices; ++c) {
      char name[16];
      std::snprintf(name, sizeof(name), "aux_%02d", static_cast<int>(c + 1));
      cols.push_back(at.column(name));
    }
    for (std::size_t r = 0; r < at.rows.size(); ++r) {
      const CivilDate date = date_at(at, r, a_date);
      const auto doy = day_of_year_noleap(date);
      auto it = index.find({at.rows[r][a_id], date.year});
      if (!doy || it == index.end()) continue;
      SiteYear& sy = data.site_years[it->second];
      if (!sy.aux_color)
        sy.aux_color = Matrix::Constant(kAuxIndices, kYearDays, std::numeric_limits<double>::quiet_NaN());
      for (Index c = 0; c < kAuxIndices; ++c) (*sy.aux_color)(c, *doy - 1) = at.number(r, cols[static_cast<std::size_t>(c)]);
    }
  }
  if (fs::exists(dir / "kndvi.csv")) {
    const CsvTable kt = read_csv(dir / "kndvi.csv");
    const std::size_t k_id = kt.column("site_id"), k_year = kt.column("year");
    const std::size_t kc[] = {kt.column("mean"), kt.column("std"), kt.column("p50"), kt.column("p75"),
                              kt.column("p90")};
    for (std::size_t r = 0; r < kt.rows.size(); ++r) {
      auto it = index.find({kt.rows[r][k_id], kt.integer(r, k_year)});
      if (it == index.end()) continue;
      Vector v(kKndviStats);
      for (Index k = 0; k < kKndviStats; ++k) v(k) = kt.number(r, kc[k]);
      data.site_years[it->second].kndvi = v;
    }
  }
  return data;
}

namespace {

constexpr char kDatasetMagic[6] = "PHXD1";

Vector mask_to_vector(const Eigen::Array<bool, Eigen::Dynamic, 1>& m) { return m.cast<double>().matrix(); }

}  // namespace

void save_dataset(const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["format"] = "phenoflux-dataset-1";
  manifest["gcc_standardization"] = data.gcc_standardization;
  manifest["sites"] = nlohmann::ordered_json::array();
  for (const auto& s : data.sites) {
    const GccRange& r = data.gcc_ranges.at(s.site_id);
    manifest["sites"].push_back({{"site_id", s.site_id},
                                 {"latitude", s.latitude},
                                 {"longitude", s.longitude},
                                 {"mean_annual_temp", s.normals.mean_annual_temp},
                                 {"mean_annual_precip", s.normals.mean_annual_precip},
                                 {"normals_window_years", s.normals.window_years},
                                 {"quality_group", data.quality_group.count(s.site_id) ? data.quality_group.at(s.site_id) : 0},
                                 {"gcc_min", r.min},
                                 {"gcc_max", r.max}});
  }
  manifest["site_years"] = nlohmann::ordered_json::array();
  for (const auto& y : data.site_years)
    manifest["site_years"].push_back({{"site_id", y.site_id}, {"year", y.year}, {"observed_days", y.gcc.observed_count()},
                                      {"aux", y.aux_color.has_value()}, {"kndvi", y.kndvi.has_value()}});
  manifest["rejected"] = nlohmann::ordered_json::array();
  for (const auto& r : data.rejected) manifest["rejected"].push_back({{"site", r.site_id}, {"reason", r.reason}});
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");

  std::ofstream os(dir / "siteyears.bin", std::ios::binary);
  if (!os) throw Error("cannot write " + (dir / "siteyears.bin").string());
  io::put_magic(os, kDatasetMagic);
  io::put<std::uint64_t>(os, data.site_years.size());
  for (const auto& y : data.site_years) {
    io::put_string(os, y.site_id);
    io::put<std::int32_t>(os, y.year);
    io::put_matrix(os, y.met.values);
    io::put_matrix(os, y.gcc.values);
    io::put_matrix(os, mask_to_vector(y.gcc.observed));
    io::put<std::uint8_t>(os, y.aux_color ? 1 : 0);
    if (y.aux_color) io::put_matrix(os, *y.aux_color);
    io::put<std::uint8_t>(os, y.kndvi ? 1 : 0);
    if (y.kndvi) io::put_matrix(os, *y.kndvi);
    io::put<double>(os, y.normals.mean_annual_temp);
    io::put<double>(os, y.normals.mean_annual_precip);
    io::put<std::int32_t>(os, y.normals.window_years);
  }
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json") || !fs::exists(dir / "siteyears.bin"))
    throw Error("no dataset in " + dir.string() + "; run 'phenoflux ingest' or 'phenoflux synth' first",
                ErrorKind::MissingArtifact);
  Dataset data;
  const auto manifest = nlohmann::json::parse(read_text(dir / "manifest.json"));
  data.gcc_standardization = manifest.at("gcc_standardization").get<std::string>();
  for (const auto& s : manifest.at("sites")) {
    Site site;
    site.site_id = s.at("site_id").get<std::string>();
    site.latitude = s.at("latitude").get<double>();
    site.longitude = s.at("longitude").get<double>();
    site.normals.mean_annual_temp = s.at("mean_annual_temp").get<double>();
    site.normals.mean_annual_precip = s.at("mean_annual_precip").get<double>();
    site.normals.window_years = s.at("normals_window_years").get<int>();
    data.quality_group[site.site_id] = s.at("quality_group").get<int>();
    data.gcc_ranges[site.site_id] = {s.at("gcc_min").get<double>(), s.at("gcc_max").get<double>()};
    data.sites.push_back(site);
  }
  for (const auto& r : manifest.at("rejected"))
    data.rejected.push_back({r.at("site").get<std::string>(), r.at("reason").get<std::string>()});

  std::ifstream is(dir / "siteyears.bin", std::ios::binary);
  io::expect_magic(is, kDatasetMagic, (dir / "siteyears.bin").string());
  const auto n = io::get<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < n; ++i) {
    SiteYear y;
    y.site_id = io::get_string(is);
    y.year = io::get<std::int32_t>(is);
    y.met.values = io::get_matrix(is);
    y.gcc.values = io::get_matrix(is);
    y.gcc.observed = io::get_matrix(is).array() > 0.5;
    if (io::get<std::uint8_t>(is)) y.aux_color = io::get_matrix(is);
    if (io::get<std::uint8_t>(is)) y.kndvi = Vector(io::get_matrix(is));
    y.normals.mean_annual_temp = io::get<double>(is);
    y.normals.mean_annual_precip = io::get<double>(is);
    y.normals.window_years = io::get<std::int32_t>(is);
    y.met.validate();
    data.site_years.push_back(std::move(y));
  }
  return data;
}

void save_split(const DatasetSplit& split, const fs::path& path) {
  nlohmann::ordered_json j;
  j["train"] = split.train;
  j["validation"] = split.validation;
  j["test"] = split.test;
  j["seed"] = split.seed;
  write_text(path, j.dump(2) + "\n");
}

DatasetSplit load_split(const fs::path& path) {
  if (!fs::exists(path))
    throw Error("missing split file " + path.string() + "; run 'phenoflux featurize' first", ErrorKind::MissingArtifact);
  const auto j = nlohmann::json::parse(read_text(path));
  DatasetSplit s;
  s.train = j.at("train").get<std::vector<std::string>>();
  s.validation = j.at("validation").get<std::vector<std::string>>();
  s.test = j.at("test").get<std::vector<std::string>>();
  s.seed = j.at("seed").get<std::uint64_t>();
  validate_split(s);
  return s;
}

void save_norm_stats(const NormStats& stats, const fs::path& path) {
  std::ostringstream os;
  os << "row,mean,std\n";
  char buf[96];
  for (Index r = 0; r < stats.rows(); ++r) {
    std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g\n", static_cast<long>(r), stats.mean(r), stats.std(r));
    os << buf;
  }
  write_text(path, os.str());
}

NormStats load_norm_stats(const fs::path& path) {
  if (!fs::exists(path))
    throw Error("missing normalization stats " + path.string() + "; run 'phenoflux featurize' first",
                ErrorKind::MissingArtifact);
  const CsvTable t = read_csv(path);
  const std::size_t c_mean = t.column("mean"), c_std = t.column("std");
  NormStats s;
  s.mean.resize(static_cast<Index>(t.rows.size()));
  s.std.resize(static_cast<Index>(t.rows.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    s.mean(static_cast<Index>(r)) = t.number(r, c_mean);
    s.std(static_cast<Index>(r)) = t.number(r, c_std);
  }
  return s;
}

}  // namespace phenoflux
