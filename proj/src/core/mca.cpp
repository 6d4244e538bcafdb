#include "mca.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "csvio.hpp"

namespace sep {

IndicatorMatrix indicator_matrix(const Cohort& cohort, const AssetSchema& schema) {
  if (cohort.empty()) throw ValidationError("indicator_matrix: empty cohort");

  IndicatorMatrix out;
  const auto n = static_cast<Eigen::Index>(cohort.size());

  // Observed categories per variable, in schema category order.
  struct VarColumns {
    std::string name;
    std::vector<std::string> categories;
  };
  std::vector<VarColumns> kept;
  for (const auto& var : schema.variables) {
    std::set<std::string> observed;
    for (const auto& rec : cohort) {
      auto it = rec.assets.find(var.name);
      if (it == rec.assets.end() || !it->second.has_value()) {
        throw ValidationError("indicator_matrix: household " + rec.id + " has missing '" +
                              var.name + "' (impute first)");
      }
      observed.insert(*it->second);
    }
    if (observed.size() < 2) {
      out.warnings.push_back("variable '" + var.name +
                             "' dropped: single observed category (zero variance)");
      continue;
    }
    VarColumns vc;
    vc.name = var.name;
    for (const auto& cat : var.categories) {
      if (observed.count(cat)) vc.categories.push_back(cat);
    }
    // Categories outside the schema list still get columns, after the
    // schema-ordered ones, in lexicographic order.
    for (const auto& cat : observed) {
      if (std::find(var.categories.begin(), var.categories.end(), cat) == var.categories.end()) {
        vc.categories.push_back(cat);
      }
    }
    kept.push_back(std::move(vc));
  }
  if (kept.empty()) throw ValidationError("indicator_matrix: no variable with >= 2 categories");

  Eigen::Index j_total = 0;
  for (const auto& vc : kept) j_total += static_cast<Eigen::Index>(vc.categories.size());

  out.z = Eigen::MatrixXd::Zero(n, j_total);
  out.num_variables = static_cast<int>(kept.size());
  out.labels.reserve(j_total);
  std::map<std::string, std::map<std::string, Eigen::Index>> col_of;
  Eigen::Index col = 0;
  for (const auto& vc : kept) {
    for (const auto& cat : vc.categories) {
      out.labels.push_back({vc.name, cat});
      col_of[vc.name][cat] = col++;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    out.ids.push_back(cohort[i].id);
    for (const auto& vc : kept) {
      const std::string& cat = *cohort[i].assets.at(vc.name);
      out.z(i, col_of.at(vc.name).at(cat)) = 1.0;
    }
  }
  return out;
}

McaModel fit_mca(const IndicatorMatrix& indicator) {
  const Eigen::MatrixXd& z = indicator.z;
  if (z.rows() < 2 || z.cols() < 2) throw ValidationError("fit_mca: need n >= 2 and J >= 2");

  const double grand_total = z.sum();
  const Eigen::MatrixXd p = z / grand_total;
  const Eigen::VectorXd r = p.rowwise().sum();  // row masses, all 1/n
  const Eigen::VectorXd c = p.colwise().sum();  // column masses

  for (Eigen::Index j = 0; j < c.size(); ++j) {
    if (c(j) <= 0.0) {
      throw ValidationError("fit_mca: zero-frequency category column '" +
                            indicator.labels[j].variable + "=" + indicator.labels[j].category +
                            "' must be dropped before decomposition");
    }
  }

  const Eigen::VectorXd r_isqrt = r.array().rsqrt();
  const Eigen::VectorXd c_isqrt = c.array().rsqrt();
  // Standardized residuals; centering removes the trivial dimension.
  const Eigen::MatrixXd s =
      r_isqrt.asDiagonal() * (p - r * c.transpose()) * c_isqrt.asDiagonal();

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(s, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sigma = svd.singularValues();
  if (sigma.size() == 0 || sigma(0) <= 0.0) throw NumericalError("fit_mca: no variance");

  const double tol = 1e-12 * sigma(0);
  Eigen::Index k = 0;
  while (k < sigma.size() && sigma(k) > tol) ++k;
  if (k == 0) throw NumericalError("fit_mca: no variance");

  McaModel model;
  model.singular_values = sigma.head(k);
  model.row_masses = r;
  model.col_masses = c;
  model.labels = indicator.labels;
  model.ids = indicator.ids;
  model.num_variables = indicator.num_variables;

  const Eigen::MatrixXd u = svd.matrixU().leftCols(k);
  const Eigen::MatrixXd v = svd.matrixV().leftCols(k);
  model.row_standard = r_isqrt.asDiagonal() * u;
  model.row_principal = model.row_standard * model.singular_values.asDiagonal();
  model.col_principal =
      c_isqrt.asDiagonal() * v * model.singular_values.asDiagonal();

  const double total_inertia = model.singular_values.array().square().sum();
  model.inertia_shares = model.singular_values.array().square() / total_inertia;
  return model;
}

Eigen::VectorXd McaModel::benzecri_adjusted_shares() const {
  const double q = static_cast<double>(num_variables);
  const double threshold = 1.0 / q;
  const double factor = q / (q - 1.0);
  Eigen::VectorXd adjusted = Eigen::VectorXd::Zero(singular_values.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < singular_values.size(); ++i) {
    const double ev = singular_values(i) * singular_values(i);
    if (ev > threshold) {
      const double a = factor * (ev - threshold);
      adjusted(i) = a * a;
      total += a * a;
    }
  }
  if (total > 0.0) adjusted /= total;
  return adjusted;
}

int McaModel::find_column(const CategoryLabel& label) const {
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) return static_cast<int>(i);
  }
  return -1;
}

std::map<HouseholdId, double> first_dimension_scores(const McaModel& model,
                                                     const CategoryLabel& anchor) {
  const int col = model.find_column(anchor);
  if (col < 0) {
    throw ValidationError("first_dimension_scores: anchor category '" + anchor.variable + "=" +
                          anchor.category + "' is not among the model columns");
  }
  const double sign = model.col_principal(col, 0) < 0.0 ? -1.0 : 1.0;
  std::map<HouseholdId, double> scores;
  for (size_t i = 0; i < model.ids.size(); ++i) {
    scores[model.ids[i]] = sign * model.row_principal(static_cast<Eigen::Index>(i), 0);
  }
  return scores;
}

void write_mca_report(const McaModel& model, const std::string& coords_csv_path,
                      const std::string& inertia_json_path, bool include_adjusted) {
  CsvTable table;
  table.header = {"variable", "category"};
  for (Eigen::Index d = 0; d < model.singular_values.size(); ++d) {
    table.header.push_back("dim" + std::to_string(d + 1));
  }
  for (size_t j = 0; j < model.labels.size(); ++j) {
    std::vector<std::string> row = {model.labels[j].variable, model.labels[j].category};
    for (Eigen::Index d = 0; d < model.singular_values.size(); ++d) {
      row.push_back(format_double(model.col_principal(static_cast<Eigen::Index>(j), d)));
    }
    table.rows.push_back(std::move(row));
  }
  write_csv(coords_csv_path, table);

  nlohmann::ordered_json j;
  j["num_variables"] = model.num_variables;
  j["singular_values"] = std::vector<double>(
      model.singular_values.data(), model.singular_values.data() + model.singular_values.size());
  j["inertia_shares"] = std::vector<double>(
      model.inertia_shares.data(), model.inertia_shares.data() + model.inertia_shares.size());
  if (include_adjusted) {
    const Eigen::VectorXd adj = model.benzecri_adjusted_shares();
    j["benzecri_adjusted_shares"] = std::vector<double>(adj.data(), adj.data() + adj.size());
  }
  std::ofstream out(inertia_json_path, std::ios::trunc);
  if (!out) throw ValidationError("cannot write inertia report: " + inertia_json_path);
  out << j.dump(2) << '\n';
}

}  // namespace sep
