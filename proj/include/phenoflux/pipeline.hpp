#ifndef PHENOFLUX_PIPELINE_HPP
#define PHENOFLUX_PIPELINE_HPP

#include "phenoflux/config.hpp"
#include "phenoflux/dataset_io.hpp"
#include "phenoflux/linear_model.hpp"
#include "phenoflux/mechanistic.hpp"
#include "phenoflux/network.hpp"
#include "phenoflux/pheno_metrics.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace phenoflux {

/// Layout of one run directory.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path raw() const { return root / "raw"; }
  std::filesystem::path dataset() const { return root / "dataset"; }
  std::filesystem::path features() const { return root / "features"; }
  std::filesystem::path models() const { return root / "models"; }
  std::filesystem::path reports() const { return root / "reports"; }
  std::filesystem::path input(const RunConfig& c) const;
};

enum class Layout { Raw, Wavelet };
std::string layout_name(Layout l);

/// Model names of the results table, in table order.
inline const std::vector<std::string> kModelNames = {"prescribed", "spring", "linear", "linear+wavelet", "nn",
                                                     "nn+wavelet"};

struct TrainSelection {
  bool mechanistic = true;
  bool linear = true;
  bool neural = true;
  bool wavelet = true;
  bool raw = true;
};

/// `model` is one of all, mechanistic, linear, nn; `no_wavelet` drops the
/// wavelet variants.
TrainSelection train_selection(const std::string& model, bool no_wavelet);

/// Dataset, split and cached model inputs shared by the stages.
class Workspace {
 public:
  Workspace(RunConfig config, RunPaths paths);

  const RunConfig& config() const { return config_; }
  const RunPaths& paths() const { return paths_; }
  const Dataset& data() const { return data_; }
  const DatasetSplit& split() const { return split_; }

  const std::vector<std::size_t>& train() const { return train_; }
  const std::vector<std::size_t>& validation() const { return validation_; }
  const std::vector<std::size_t>& test() const { return test_; }
  std::vector<std::size_t> all() const;

  const SiteYear& site_year(std::size_t i) const { return data_.site_years[i]; }
  /// Un-normalized stacked input (wavelet rows or raw rows).
  const Matrix& stacked(std::size_t i, Layout layout) const;
  Matrix input(std::size_t i, Layout layout) const;  // normalized with the featurize statistics
  Vector fusion(std::size_t i) const;
  const NormStats& input_stats(Layout layout) const;
  Index scales(Layout layout) const;

  SeasonDates observed_dates(std::size_t i) const;

 private:
  RunConfig config_;
  RunPaths paths_;
  Dataset data_;
  DatasetSplit split_;
  std::vector<std::size_t> train_, validation_, test_;
  mutable std::map<std::pair<std::size_t, int>, Matrix> stack_cache_;
  mutable std::map<int, NormStats> stats_;
  mutable std::optional<NormStats> fusion_stats_;
};

/// Loaded ensemble of one input layout.
struct NeuralEnsemble {
  std::vector<Network> members;
  Vector weights;
  Layout layout = Layout::Wavelet;

  Vector predict_gcc(const Matrix& input, const Vector& fusion) const;
  std::vector<const Network*> member_pointers() const;
};

NeuralEnsemble load_ensemble(const RunPaths& paths, Layout layout);

struct StageOptions {
  bool deterministic_output = true;
  bool quiet = false;
};

void write_effective_config(const RunConfig& config, const RunPaths& paths, const std::string& stage,
                            const StageOptions& options);

void run_synth(const RunConfig& config, const RunPaths& paths, const StageOptions& options = {});
void run_ingest(const RunConfig& config, const RunPaths& paths, const StageOptions& options = {});
void run_featurize(const RunConfig& config, const RunPaths& paths, const StageOptions& options = {});
void run_train(const RunConfig& config, const RunPaths& paths, const TrainSelection& selection,
               const StageOptions& options = {});
void run_calibrate(const RunConfig& config, const RunPaths& paths, const StageOptions& options = {});
ResultsTable run_eval(const RunConfig& config, const RunPaths& paths, const StageOptions& options = {});
void run_attribute(const RunConfig& config, const RunPaths& paths, const StageOptions& options = {});
std::vector<FeatureTestResult> run_feature_test(const RunConfig& config, const RunPaths& paths,
                                                const StageOptions& options = {});
void run_report(const RunConfig& config, const RunPaths& paths, const StageOptions& options = {});

/// Raw (uncalibrated) predictions of every trained model for the given
/// site-years; models without artifacts are absent from the map. Missing
/// crossings carry the 365 sentinel.
struct ModelPredictions {
  std::vector<Vector> gcc;  // empty for date-only models
  std::vector<int> sos, eos;
};
std::map<std::string, ModelPredictions> predict_models(const Workspace& ws, const std::vector<std::size_t>& rows);

}  // namespace phenoflux

#endif  // PHENOFLUX_PIPELINE_HPP
