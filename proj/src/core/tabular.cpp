#include "tabular.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "csvio.hpp"
#include "metrics.hpp"

namespace sep {

PredictorSet PredictorSet::reduced(ImageType indoor) {
  if (image_group(indoor) != ImageGroup::kIndoor) {
    throw ValidationError("PredictorSet::reduced: '" + image_type_name(indoor) +
                          "' is not an indoor image type");
  }
  return {PredictorSetKind::kReduced, indoor};
}

std::vector<ImageType> PredictorSet::image_types() const {
  std::vector<ImageType> out;
  for (ImageType t : all_image_types()) {
    const ImageGroup g = image_group(t);
    switch (kind) {
      case PredictorSetKind::kSatellite:
        if (g == ImageGroup::kSatellite) out.push_back(t);
        break;
      case PredictorSetKind::kOutdoor:
        if (g == ImageGroup::kSatellite || g == ImageGroup::kOutdoor) out.push_back(t);
        break;
      case PredictorSetKind::kComplete:
        out.push_back(t);
        break;
      case PredictorSetKind::kReduced:
        if (g == ImageGroup::kSatellite || g == ImageGroup::kOutdoor || t == *reduced_indoor) {
          out.push_back(t);
        }
        break;
    }
  }
  return out;
}

std::string PredictorSet::name() const {
  switch (kind) {
    case PredictorSetKind::kSatellite:
      return "satellite";
    case PredictorSetKind::kOutdoor:
      return "outdoor";
    case PredictorSetKind::kComplete:
      return "complete";
    case PredictorSetKind::kReduced:
      return "reduced_" + image_type_name(*reduced_indoor);
  }
  return "unknown";
}

std::string ColumnProvenance::column_name() const {
  return image_type_name(type) + "_" + std::to_string(index);
}

FeatureTable FeatureTable::subset(const std::vector<HouseholdId>& keep_ids) const {
  std::map<HouseholdId, size_t> row_of;
  for (size_t i = 0; i < ids.size(); ++i) row_of[ids[i]] = i;
  FeatureTable out;
  out.p = p;
  out.provenance = provenance;
  out.n = keep_ids.size();
  out.values.resize(out.n * p);
  out.missing.resize(out.n * p);
  out.outcome.resize(out.n);
  out.ids = keep_ids;
  for (size_t i = 0; i < keep_ids.size(); ++i) {
    auto it = row_of.find(keep_ids[i]);
    if (it == row_of.end()) {
      throw ValidationError("FeatureTable::subset: unknown household id " + keep_ids[i]);
    }
    std::copy_n(values.begin() + it->second * p, p, out.values.begin() + i * p);
    std::copy_n(missing.begin() + it->second * p, p, out.missing.begin() + i * p);
    out.outcome[i] = outcome[it->second];
  }
  return out;
}

FeatureTable assemble_feature_table(const FeatureStore& features, const PredictorSet& set,
                                    const std::map<HouseholdId, double>& outcome) {
  const std::vector<ImageType> types = set.image_types();

  // Feature width per type, from any non-missing vector.
  std::map<ImageType, int> width;
  for (const auto& [id, per_type] : features) {
    for (ImageType t : types) {
      auto it = per_type.find(t);
      if (it != per_type.end() && !it->second.missing) {
        const int d = static_cast<int>(it->second.values.size());
        auto [w, inserted] = width.try_emplace(t, d);
        if (!inserted && w->second != d) {
          throw ValidationError("assemble_feature_table: inconsistent feature width for " +
                                image_type_name(t));
        }
      }
    }
  }
  for (ImageType t : types) {
    if (!width.count(t)) {
      throw ValidationError("assemble_feature_table: no extracted features for image type " +
                            image_type_name(t));
    }
  }

  FeatureTable table;
  for (ImageType t : types) {
    for (int k = 0; k < width[t]; ++k) table.provenance.push_back({t, k});
  }
  table.p = table.provenance.size();
  table.n = features.size();
  table.values.assign(table.n * table.p, 0.0);
  table.missing.assign(table.n * table.p, 0);
  table.outcome.resize(table.n);

  size_t row = 0;
  for (const auto& [id, per_type] : features) {
    auto oit = outcome.find(id);
    if (oit == outcome.end()) {
      throw ValidationError("assemble_feature_table: no outcome for household " + id);
    }
    table.ids.push_back(id);
    table.outcome[row] = oit->second;
    size_t col = 0;
    bool any_present = false;
    for (ImageType t : types) {
      auto it = per_type.find(t);
      const bool missing = it == per_type.end() || it->second.missing;
      const int d = width[t];
      if (missing) {
        for (int k = 0; k < d; ++k) table.missing[row * table.p + col + k] = 1;
      } else {
        if (static_cast<int>(it->second.values.size()) != d) {
          throw ValidationError("assemble_feature_table: feature width mismatch for " + id);
        }
        for (int k = 0; k < d; ++k) table.values[row * table.p + col + k] = it->second.values[k];
        any_present = true;
      }
      col += d;
    }
    if (!any_present) {
      throw ValidationError("assemble_feature_table: household " + id +
                            " lacks all image types of predictor set " + set.name());
    }
    ++row;
  }
  return table;
}

std::vector<double> mean_imputer_fit(const FeatureTable& train) {
  std::vector<double> means(train.p, 0.0);
  for (size_t j = 0; j < train.p; ++j) {
    double sum = 0.0;
    size_t count = 0;
    for (size_t i = 0; i < train.n; ++i) {
      if (!train.is_missing(i, j)) {
        sum += train.at(i, j);
        ++count;
      }
    }
    if (count == 0) {
      throw ValidationError("mean_imputer_fit: column " + train.provenance[j].column_name() +
                            " has no observed training values");
    }
    means[j] = sum / static_cast<double>(count);
  }
  return means;
}

void mean_imputer_transform(FeatureTable& table, const std::vector<double>& means) {
  if (means.size() != table.p) throw ValidationError("mean_imputer_transform: width mismatch");
  for (size_t i = 0; i < table.n; ++i) {
    for (size_t j = 0; j < table.p; ++j) {
      if (table.missing[i * table.p + j]) {
        table.values[i * table.p + j] = means[j];
        table.missing[i * table.p + j] = 0;
      }
    }
  }
}

std::vector<int> fstat_select(const FeatureTable& train, int k,
                              std::vector<double>* f_out) {
  if (k < 1 || static_cast<size_t>(k) > train.p) {
    throw ValidationError("fstat_select: k must be in [1, p]");
  }
  const size_t n = train.n;
  if (n < 3) throw ValidationError("fstat_select: need at least 3 rows");
  constexpr double kFCap = 1e12;  // perfect correlations stay rankable

  const double my = mean(train.outcome);
  double syy = 0.0;
  for (double v : train.outcome) syy += (v - my) * (v - my);

  std::vector<double> f(train.p, 0.0);
  for (size_t j = 0; j < train.p; ++j) {
    double mx = 0.0;
    for (size_t i = 0; i < n; ++i) mx += train.at(i, j);
    mx /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double dx = train.at(i, j) - mx;
      sxx += dx * dx;
      sxy += dx * (train.outcome[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
      f[j] = 0.0;  // zero variance convention
      continue;
    }
    const double r2 = (sxy * sxy) / (sxx * syy);
    const double denom = 1.0 - r2;
    f[j] = denom <= 0.0 ? kFCap
                        : std::min(kFCap, r2 * static_cast<double>(n - 2) / denom);
  }

  if (f_out) *f_out = f;
  std::vector<int> order(train.p);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return f[a] > f[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());  // keep original column order in the output
  return order;
}

ElasticNetModel elasticnet_fit(const std::vector<double>& x, size_t n, size_t p,
                               const std::vector<double>& y, double alpha, double l1_ratio,
                               double tol, int max_iter) {
  if (n < 2 || x.size() != n * p || y.size() != n) {
    throw ValidationError("elasticnet_fit: shape mismatch");
  }
  if (alpha < 0.0 || l1_ratio < 0.0 || l1_ratio > 1.0) {
    throw ValidationError("elasticnet_fit: need alpha >= 0 and l1_ratio in [0, 1]");
  }

  ElasticNetModel model;
  model.alpha = alpha;
  model.l1_ratio = l1_ratio;
  model.outcome_mean = mean(y);
  model.column_mean.resize(p);
  model.column_sd.resize(p);

  // Standardize columns (population sd); zero-variance columns are frozen
  // at beta = 0.
  std::vector<double> xs(n * p);
  for (size_t j = 0; j < p; ++j) {
    double m = 0.0;
    for (size_t i = 0; i < n; ++i) m += x[i * p + j];
    m /= static_cast<double>(n);
    double ss = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double d = x[i * p + j] - m;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n));
    model.column_mean[j] = m;
    model.column_sd[j] = sd;
    for (size_t i = 0; i < n; ++i) {
      xs[i * p + j] = sd > 0.0 ? (x[i * p + j] - m) / sd : 0.0;
    }
  }

  std::vector<double> beta(p, 0.0);
  std::vector<double> residual(n);
  for (size_t i = 0; i < n; ++i) residual[i] = y[i] - model.outcome_mean;

  const double l1_penalty = alpha * l1_ratio;
  const double l2_penalty = alpha * (1.0 - l1_ratio);
  const double inv_n = 1.0 / static_cast<double>(n);

  int iter = 0;
  for (; iter < max_iter; ++iter) {
    double max_delta = 0.0;
    for (size_t j = 0; j < p; ++j) {
      if (model.column_sd[j] == 0.0) continue;
      double rho = 0.0;
      for (size_t i = 0; i < n; ++i) rho += xs[i * p + j] * residual[i];
      rho = rho * inv_n + beta[j];  // standardized columns have unit variance
      const double soft = std::abs(rho) <= l1_penalty
                              ? 0.0
                              : (rho > 0.0 ? rho - l1_penalty : rho + l1_penalty);
      const double updated = soft / (1.0 + l2_penalty);
      const double delta = updated - beta[j];
      if (delta != 0.0) {
        for (size_t i = 0; i < n; ++i) residual[i] -= delta * xs[i * p + j];
        beta[j] = updated;
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    if (max_delta < tol) {
      model.converged = true;
      ++iter;
      break;
    }
  }
  model.iterations = iter;

  // KKT residual on the standardized problem (subdifferential violation).
  double kkt = 0.0;
  for (size_t j = 0; j < p; ++j) {
    if (model.column_sd[j] == 0.0) continue;
    double g = 0.0;
    for (size_t i = 0; i < n; ++i) g += xs[i * p + j] * residual[i];
    g *= inv_n;
    const double lhs = g - l2_penalty * beta[j];
    if (beta[j] != 0.0) {
      kkt = std::max(kkt, std::abs(lhs - l1_penalty * (beta[j] > 0.0 ? 1.0 : -1.0)));
    } else {
      kkt = std::max(kkt, std::max(0.0, std::abs(lhs) - l1_penalty));
    }
  }
  model.kkt_residual = kkt;

  model.beta_standardized = beta;
  model.coefficients.resize(p);
  double intercept = model.outcome_mean;
  for (size_t j = 0; j < p; ++j) {
    model.coefficients[j] = model.column_sd[j] > 0.0 ? beta[j] / model.column_sd[j] : 0.0;
    intercept -= model.coefficients[j] * model.column_mean[j];
  }
  model.intercept = intercept;
  return model;
}

std::vector<double> elasticnet_predict(const ElasticNetModel& model, const std::vector<double>& x,
                                       size_t n, size_t p) {
  if (p != model.coefficients.size() || x.size() != n * p) {
    throw ValidationError("elasticnet_predict: shape mismatch");
  }
  std::vector<double> out(n, model.intercept);
  for (size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (size_t j = 0; j < p; ++j) acc += model.coefficients[j] * x[i * p + j];
    out[i] += acc;
  }
  return out;
}

void write_feature_table_csv(const std::string& path, const FeatureTable& table) {
  CsvTable csv;
  csv.header.push_back("id");
  for (const auto& prov : table.provenance) csv.header.push_back(prov.column_name());
  for (size_t i = 0; i < table.n; ++i) {
    std::vector<std::string> row;
    row.reserve(table.p + 1);
    row.push_back(table.ids[i]);
    for (size_t j = 0; j < table.p; ++j) {
      row.push_back(table.is_missing(i, j) ? "" : format_double(table.at(i, j)));
    }
    csv.rows.push_back(std::move(row));
  }
  write_csv(path, csv);
}

FeatureTable read_feature_table_csv(const std::string& path) {
  const CsvTable csv = read_csv(path);
  if (csv.header.empty() || csv.header[0] != "id") {
    throw ValidationError("feature table " + path + ": first column must be id");
  }
  FeatureTable table;
  table.p = csv.header.size() - 1;
  for (size_t j = 1; j < csv.header.size(); ++j) {
    const std::string& name = csv.header[j];
    const size_t sep_pos = name.rfind('_');
    if (sep_pos == std::string::npos) {
      throw ValidationError("feature table " + path + ": malformed column '" + name + "'");
    }
    const auto type = image_type_from_name(name.substr(0, sep_pos));
    if (!type) {
      throw ValidationError("feature table " + path + ": unknown image type in column '" + name +
                            "'");
    }
    table.provenance.push_back({*type, std::stoi(name.substr(sep_pos + 1))});
  }
  table.n = csv.rows.size();
  table.values.assign(table.n * table.p, 0.0);
  table.missing.assign(table.n * table.p, 0);
  table.outcome.assign(table.n, 0.0);
  for (size_t i = 0; i < table.n; ++i) {
    table.ids.push_back(csv.rows[i][0]);
    for (size_t j = 0; j < table.p; ++j) {
      const std::string& cell = csv.rows[i][j + 1];
      if (cell.empty()) {
        table.missing[i * table.p + j] = 1;
      } else {
        table.values[i * table.p + j] = std::stod(cell);
      }
    }
  }
  return table;
}

void write_outcome_csv(const std::string& path, const std::vector<HouseholdId>& ids,
                       const std::vector<double>& values) {
  if (ids.size() != values.size()) throw ValidationError("write_outcome_csv: size mismatch");
  CsvTable csv;
  csv.header = {"id", "value"};
  for (size_t i = 0; i < ids.size(); ++i) {
    csv.rows.push_back({ids[i], format_double(values[i])});
  }
  write_csv(path, csv);
}

std::map<HouseholdId, double> read_outcome_csv(const std::string& path) {
  const CsvTable csv = read_csv(path);
  const int id_col = csv.column("id");
  const int value_col = csv.column("value");
  if (id_col < 0 || value_col < 0) {
    throw ValidationError("outcome CSV " + path + ": need id and value columns");
  }
  std::map<HouseholdId, double> out;
  for (const auto& row : csv.rows) out[row[id_col]] = std::stod(row[value_col]);
  return out;
}

}  // namespace sep
