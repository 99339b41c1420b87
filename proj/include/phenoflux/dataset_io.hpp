#ifndef PHENOFLUX_DATASET_IO_HPP
#define PHENOFLUX_DATASET_IO_HPP

#include "phenoflux/core.hpp"
#include "phenoflux/data_model.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace phenoflux {

/// Ingested, filtered and standardized site-years plus their sites.
struct Dataset {
  std::vector<Site> sites;                         // sorted by id
  std::map<std::string, int> quality_group;
  std::map<std::string, GccRange> gcc_ranges;      // raw range used for standardization
  std::string gcc_standardization = "per_site";    // or "global"
  std::vector<SiteYear> site_years;                // sorted by (site_id, year)
  std::vector<Rejection> rejected;

  const Site& site(const std::string& id) const;
  std::vector<std::string> site_ids() const;
};

struct IngestOptions {
  QualityRules rules;
  std::string gcc_standardization = "per_site";
  Index max_met_gap = 7;
};

/// Reads met.csv and gcc.csv (required) plus sites.csv, normals.csv,
/// aux.csv and kndvi.csv (optional) from `dir`. Temperatures in the CSV
/// files are degrees C and are stored in kelvin.
Dataset ingest_csv_dir(const std::filesystem::path& dir, const IngestOptions& options = {});

/// manifest.json + siteyears.bin
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

void save_split(const DatasetSplit& split, const std::filesystem::path& path);
DatasetSplit load_split(const std::filesystem::path& path);

void save_norm_stats(const NormStats& stats, const std::filesystem::path& path);
NormStats load_norm_stats(const std::filesystem::path& path);

/// Minimal CSV table: comma separated, no quoting, header required.
struct CsvTable {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line;  // 1-based source line of each row

  std::size_t column(const std::string& col) const;  // throws naming the missing column
  bool has_column(const std::string& col) const;
  double number(std::size_t row, std::size_t col) const;  // NaN for an empty field
  int integer(std::size_t row, std::size_t col) const;
  std::string where(std::size_t row) const;  // "name:line"
};

CsvTable read_csv(const std::filesystem::path& path);

/// Creates parent directories as needed.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace phenoflux

#endif  // PHENOFLUX_DATASET_IO_HPP
