#ifndef PHENOFLUX_LINEAR_MODEL_HPP
#define PHENOFLUX_LINEAR_MODEL_HPP

#include "phenoflux/core.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace phenoflux {

/// Multi-output ridge regression y = W x + b.
///
/// When features outnumber samples the weights are kept in dual form,
/// W = alpha^T * support, with `support` the centred training design; this
/// keeps a 365 x 87602 wavelet model at a few megabytes.
class LinearModel {
 public:
  LinearModel() = default;
  LinearModel(Matrix weights, Vector bias, double ridge);
  LinearModel(Matrix support, Matrix dual, Vector bias, double ridge);

  Index outputs() const { return bias_.size(); }
  Index features() const { return dual_form_ ? support_.cols() : weights_.cols(); }
  double ridge() const { return ridge_; }
  bool dual_form() const { return dual_form_; }
  const Vector& bias() const { return bias_; }

  /// Weight row for one output.
  Vector weights_for(Index output) const;
  /// Full weight matrix (outputs x features); large for wavelet layouts.
  Matrix weights() const;

  Vector predict(const Vector& x) const;
  /// One sample per row.
  Matrix predict_rows(const Matrix& X) const;

  std::string layout;  // "raw" or "wavelet"
  std::vector<std::string> feature_groups;  // variable name per feature block
  Index features_per_group = 0;

  void save(const std::filesystem::path& path) const;
  static LinearModel load(const std::filesystem::path& path);

 private:
  bool dual_form_ = false;
  Matrix weights_;  // primal
  Matrix support_;  // dual: samples x features
  Matrix dual_;     // dual: samples x outputs
  Vector bias_;
  double ridge_ = 0.0;
};

/// Ridge fit minimising |X w - y|^2 + ridge |w|^2 per output with an
/// unpenalised intercept. Samples are rows. NaN targets are excluded from
/// that output's fit. Constant feature columns get zero weight.
LinearModel fit_linear(const Matrix& X, const Matrix& Y, double ridge);

/// Validation-selected ridge from `grid` (validation MSE over non-NaN targets).
struct RidgeSelection {
  LinearModel model;
  double ridge = 0.0;
  std::vector<double> validation_mse;
};
RidgeSelection select_ridge(const Matrix& X_train, const Matrix& Y_train, const Matrix& X_val, const Matrix& Y_val,
                            const std::vector<double>& grid);
std::vector<double> default_ridge_grid();

}  // namespace phenoflux

#endif  // PHENOFLUX_LINEAR_MODEL_HPP
