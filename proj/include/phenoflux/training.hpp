#ifndef PHENOFLUX_TRAINING_HPP
#define PHENOFLUX_TRAINING_HPP

#include "phenoflux/core.hpp"
#include "phenoflux/data_model.hpp"
#include "phenoflux/network.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace phenoflux {

/// Standardized targets of one site-year. Missing aux entries are NaN.
struct Labels {
  Vector gcc;
  Eigen::Array<bool, Eigen::Dynamic, 1> gcc_observed;
  std::optional<Vector> aux;    // 20 x days, index-major
  std::optional<Vector> kndvi;  // 5
};

struct TrainingSample {
  Matrix input;   // normalized rows x days
  Vector fusion;  // normalized climate normals
  Labels labels;
};

struct LossGradient {
  Vector d_gcc, d_aux, d_kndvi;
};

/// MSE(gcc) + lambda * r * (sum of the 20 aux-index MSEs + sum of the 5
/// kndvi squared errors), r = 25 / (aux tasks present) re-weights the
/// auxiliary sum when some of its 25 tasks are missing.
double multitask_loss(const MultiTaskOutput& pred, const Labels& labels, double aux_weight,
                      LossGradient* grad = nullptr);

enum class Optimizer { Sgd, Adam };
std::string to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string& s);

struct TrainConfig {
  Index batch_size = 1;
  double learning_rate = 0.912;
  Optimizer optimizer = Optimizer::Sgd;
  Index cosine_t0 = 790;
  int early_stop_patience = 18;
  double aux_weight = 0.890;
  int max_epochs = 40;
  double clip_norm = 1.0;  // 0 disables global-norm clipping
  std::uint64_t seed = 0;

  void validate() const;
};

/// Cosine annealing with warm restarts: lr * (1 + cos(pi * (s mod t0) / t0)) / 2.
double cosine_lr(double lr, Index step, Index t0);

class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}
  /// Records one validation loss; returns true when training should stop.
  bool update(double val_loss);
  bool last_improved() const { return last_improved_; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }
  int epochs() const { return epochs_; }

 private:
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int best_epoch_ = 0;
  int epochs_ = 0;
  int since_best_ = 0;
  bool last_improved_ = false;
};

struct TrainLogRow {
  int epoch = 0;
  Index step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  double best_val_loss = 0.0;
  int best_epoch = 0;
  int epochs_run = 0;
  std::vector<TrainLogRow> log;
};

double dataset_loss(const Network& net, std::span<const TrainingSample> data, double aux_weight);

/// Mini-batch training; leaves the best-validation parameters in `net`.
TrainResult train(Network& net, std::span<const TrainingSample> train_set, std::span<const TrainingSample> val_set,
                  const TrainConfig& config);

std::string training_log_csv(const std::vector<TrainLogRow>& log);

struct EnsembleWeights {
  Vector weights;
  double validation_mse = 0.0;
  int iterations = 0;
};

/// Simplex-constrained least squares on member predictions (one column per
/// member) by accelerated projected gradient.
EnsembleWeights fit_ensemble_weights(const Matrix& member_predictions, const Vector& target, int max_iterations = 20000,
                                     double tolerance = 1e-8);
Vector project_to_simplex(const Vector& v);

struct SearchSpace {
  Index batch_min = 1, batch_max = 128;
  double lr_min = 1e-5, lr_max = 1.0;
  Index t0_min = 10, t0_max = 1000;
  int patience_min = 1, patience_max = 100;
  double aux_min = 0.0, aux_max = 1.0;
  std::vector<Optimizer> optimizers = {Optimizer::Adam, Optimizer::Sgd};
  std::vector<int> resnet_sizes = {18, 34, 50, 101, 152};
};

struct Candidate {
  TrainConfig train;
  int resnet_size = 18;
};

/// Residual blocks of the desk-scale network standing in for a ResNet size.
int blocks_for_resnet_size(int size);

std::vector<Candidate> sample_candidates(const SearchSpace& space, int budget, std::uint64_t seed,
                                         const TrainConfig& base = {});

struct SearchResult {
  Candidate best;
  double best_score = 0.0;
  std::vector<double> scores;
};

/// Seeded random search; `evaluate` returns the validation loss of a candidate.
SearchResult hyperparam_search(const SearchSpace& space, int budget, std::uint64_t seed,
                               const std::function<double(const Candidate&)>& evaluate, const TrainConfig& base = {});

struct CheckpointExtras {
  NormStats input_stats;
  NormStats fusion_stats;
  std::string input_layout;  // "wavelet" or "raw"
  double best_val_loss = 0.0;
};

void save_checkpoint(const std::filesystem::path& path, const Network& net, const CheckpointExtras& extras);
Network load_checkpoint(const std::filesystem::path& path, CheckpointExtras* extras = nullptr);

}  // namespace phenoflux

#endif  // PHENOFLUX_TRAINING_HPP
