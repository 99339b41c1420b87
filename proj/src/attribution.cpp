#include "phenoflux/attribution.hpp"

#include "phenoflux/pheno_metrics.hpp"

#include <numeric>

namespace phenoflux {

ScalarHead soft_sos_head(std::vector<const Network*> members, Vector weights, Vector fusion, double steepness) {
  if (members.empty() || static_cast<Index>(members.size()) != weights.size())
    throw Error("soft_sos_head: member / weight count mismatch");
  std::vector<std::size_t> active;
  for (std::size_t m = 0; m < members.size(); ++m)
    if (weights(static_cast<Index>(m)) != 0.0) active.push_back(m);
  ScalarHead head;
  head.value = [=](const Matrix& x) {
    Vector gcc = Vector::Zero(kYearDays);
    for (std::size_t m : active) gcc += weights(static_cast<Index>(m)) * members[m]->forward(x, fusion).gcc;
    return soft_sos(gcc, steepness);
  };
  head.gradient = [=](const Matrix& x) {
    std::vector<Network::Tape> tapes(active.size());
    Vector gcc = Vector::Zero(kYearDays);
    for (std::size_t k = 0; k < active.size(); ++k) {
      const std::size_t m = active[k];
      gcc += weights(static_cast<Index>(m)) * members[m]->forward(x, fusion, &tapes[k]).gcc;
    }
    const Vector d_out = soft_sos_gradient(gcc, steepness);
    Matrix grad = Matrix::Zero(x.rows(), x.cols());
    Vector scratch;
    for (std::size_t k = 0; k < active.size(); ++k) {
      const std::size_t m = active[k];
      Matrix g;
      scratch.setZero(members[m]->parameter_count());
      members[m]->backward(tapes[k], weights(static_cast<Index>(m)) * d_out, Vector(), Vector(), &scratch, &g);
      grad += g;
    }
    return grad;
  };
  return head;
}

ScalarHead linear_head(Matrix w, double bias) {
  ScalarHead head;
  head.value = [w, bias](const Matrix& x) { return w.cwiseProduct(x).sum() + bias; };
  head.gradient = [w](const Matrix&) { return w; };
  return head;
}

AttributionMap integrated_gradients(const ScalarHead& head, const Matrix& input, const Matrix& baseline, int steps) {
  if (steps < 1) throw Error("integrated_gradients: steps must be >= 1");
  if (input.rows() != baseline.rows() || input.cols() != baseline.cols())
    throw Error("integrated_gradients: baseline shape differs from input");
  const Matrix delta = input - baseline;
  Matrix sum = Matrix::Zero(input.rows(), input.cols());
  for (int j = 1; j <= steps; ++j) {
    const double alpha = (static_cast<double>(j) - 0.5) / static_cast<double>(steps);
    sum += head.gradient(baseline + alpha * delta);
  }
  AttributionMap out;
  out.steps = steps;
  out.values = delta.cwiseProduct(sum) / static_cast<double>(steps);
  out.output_delta = head.value(input) - head.value(baseline);
  out.completeness_residual = out.values.sum() - out.output_delta;
  return out;
}

std::vector<Index> walk_rows(Index input_rows, Index scales) {
  if (scales < 1 || input_rows < (kMetVariables + 1) * scales)
    throw Error("input has no random-walk rows");
  std::vector<Index> rows;
  for (Index r = kMetVariables * scales; r < (kMetVariables + 1) * scales; ++r) rows.push_back(r);
  return rows;
}

double random_walk_cutoff(std::span<const Matrix> maps, Index scales, double q) {
  if (maps.empty()) throw Error("random_walk_cutoff: no attribution maps");
  std::vector<double> pool;
  for (const Matrix& m : maps)
    for (Index r : walk_rows(m.rows(), scales))
      for (Index d = 0; d < m.cols(); ++d) pool.push_back(std::abs(m(r, d)));
  return percentile(std::move(pool), q);
}

FilteredMap filter_attributions(const Matrix& map, double threshold) {
  FilteredMap out;
  out.filtered = map.array().abs() < threshold;
  out.values = out.filtered.select(Matrix::Zero(map.rows(), map.cols()), map);
  return out;
}

std::vector<std::string> input_variable_names() {
  std::vector<std::string> names(std::begin(kMetVariableNames), std::end(kMetVariableNames));
  names.emplace_back("random_walk");
  return names;
}

ImportanceSummary aggregate_importance(std::span<const Matrix> maps, Index scales,
                                       const std::vector<std::string>& names) {
  if (maps.empty()) throw Error("aggregate_importance: no attribution maps");
  const auto n_vars = static_cast<Index>(names.size());
  const Index rows = maps.front().rows();
  const Index days = maps.front().cols();
  if (rows != n_vars * scales) throw Error("aggregate_importance: rows do not match variables x scales");
  ImportanceSummary out;
  out.per_scale = Matrix::Zero(n_vars, scales);
  out.per_day = Vector::Zero(days);
  std::vector<VariableImportance> vars(static_cast<std::size_t>(n_vars));
  for (Index v = 0; v < n_vars; ++v) vars[static_cast<std::size_t>(v)].variable = names[static_cast<std::size_t>(v)];
  for (const Matrix& m : maps) {
    if (m.rows() != rows || m.cols() != days) throw Error("aggregate_importance: map shapes differ");
    for (Index v = 0; v < n_vars; ++v) {
      const auto block = m.middleRows(v * scales, scales);
      vars[static_cast<std::size_t>(v)].per_site_year.push_back(block.sum());
      out.per_scale.row(v) += block.rowwise().sum().transpose();
    }
    out.per_day += m.colwise().sum().transpose();
  }
  for (auto& v : vars)
    v.mean = std::accumulate(v.per_site_year.begin(), v.per_site_year.end(), 0.0) /
             static_cast<double>(v.per_site_year.size());
  std::vector<std::size_t> order(vars.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(vars[a].mean) > std::abs(vars[b].mean); });
  for (std::size_t i : order) out.variables.push_back(vars[i]);
  return out;
}

Vector feature_importance(const Vector& weights, const Vector& feature_std) {
  if (weights.size() != feature_std.size()) throw Error("feature_importance: length mismatch");
  return weights.cwiseAbs().cwiseProduct(feature_std);
}

std::vector<RankedImportance> rank_groups(const Vector& importance, const std::vector<std::string>& names,
                                          Index per_group) {
  if (per_group < 1 || importance.size() != static_cast<Index>(names.size()) * per_group)
    throw Error("rank_groups: feature count does not match groups");
  std::vector<RankedImportance> out;
  for (std::size_t g = 0; g < names.size(); ++g)
    out.push_back({names[g], importance.segment(static_cast<Index>(g) * per_group, per_group).sum()});
  std::stable_sort(out.begin(), out.end(),
                   [](const RankedImportance& a, const RankedImportance& b) { return a.importance > b.importance; });
  return out;
}

std::vector<RankedImportance> linear_importance(const LinearModel& model, const Vector& feature_std, int doy) {
  if (doy < 1 || doy > model.outputs()) throw Error("linear_importance: doy outside the model outputs");
  const Vector imp = feature_importance(model.weights_for(doy - 1), feature_std);
  if (model.feature_groups.empty()) {
    std::vector<std::string> names;
    for (Index j = 0; j < imp.size(); ++j) names.push_back("f" + std::to_string(j));
    return rank_groups(imp, names, 1);
  }
  return rank_groups(imp, model.feature_groups, model.features_per_group);
}

}  // namespace phenoflux
