#ifndef PHENOFLUX_ATTRIBUTION_HPP
#define PHENOFLUX_ATTRIBUTION_HPP

#include "phenoflux/core.hpp"
#include "phenoflux/linear_model.hpp"
#include "phenoflux/network.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace phenoflux {

/// Scalar function of a (rows x days) input together with its gradient.
struct ScalarHead {
  std::function<double(const Matrix&)> value;
  std::function<Matrix(const Matrix&)> gradient;
};

/// Weighted ensemble of networks followed by the soft-SoS layer. Members
/// with zero weight are skipped.
ScalarHead soft_sos_head(std::vector<const Network*> members, Vector weights, Vector fusion, double steepness = 50.0);
/// F(x) = sum(w .* x) + b.
ScalarHead linear_head(Matrix w, double bias = 0.0);

struct AttributionMap {
  Matrix values;
  int steps = 0;
  double output_delta = 0.0;           // F(x) - F(baseline)
  double completeness_residual = 0.0;  // sum(values) - output_delta
};

/// Integrated gradients with the midpoint rule over `steps` intervals.
AttributionMap integrated_gradients(const ScalarHead& head, const Matrix& input, const Matrix& baseline,
                                    int steps = 256);

/// Rows of the random-walk channel: the last `scales` rows of the
/// variable-major input (one row per variable for raw inputs).
std::vector<Index> walk_rows(Index input_rows, Index scales);

/// 99.9th percentile of |attribution| over the walk rows of every map.
double random_walk_cutoff(std::span<const Matrix> maps, Index scales, double q = 99.9);

struct FilteredMap {
  Matrix values;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> filtered;
};
FilteredMap filter_attributions(const Matrix& map, double threshold);

struct VariableImportance {
  std::string variable;
  std::vector<double> per_site_year;  // summed signed attribution
  double mean = 0.0;
};

struct ImportanceSummary {
  std::vector<VariableImportance> variables;  // descending |mean|
  Matrix per_scale;                            // variables x scales
  Vector per_day;                              // days
};

/// Variable names of the input blocks: the met variables then "random_walk".
std::vector<std::string> input_variable_names();

ImportanceSummary aggregate_importance(std::span<const Matrix> maps, Index scales,
                                       const std::vector<std::string>& names = input_variable_names());

struct RankedImportance {
  std::string name;
  double importance = 0.0;
};

/// |w| * std per feature.
Vector feature_importance(const Vector& weights, const Vector& feature_std);
/// Feature importances summed per contiguous group, sorted descending (stable).
std::vector<RankedImportance> rank_groups(const Vector& importance, const std::vector<std::string>& names,
                                          Index per_group);
/// Ranking for the output of day `doy` of a fitted linear model.
std::vector<RankedImportance> linear_importance(const LinearModel& model, const Vector& feature_std, int doy = 120);

}  // namespace phenoflux

#endif  // PHENOFLUX_ATTRIBUTION_HPP
