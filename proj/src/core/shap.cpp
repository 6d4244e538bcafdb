#include "shap.hpp"

#include <algorithm>
#include <cmath>

#include "metrics.hpp"

namespace sep {

EnsembleView EnsembleView::from_forest(const RandomForestModel& model) {
  EnsembleView view;
  const double scale = 1.0 / static_cast<double>(model.trees.size());
  for (const auto& tree : model.trees) {
    view.trees.push_back(&tree);
    view.scales.push_back(scale);
  }
  return view;
}

EnsembleView EnsembleView::from_gbt(const GbtModel& model) {
  EnsembleView view;
  view.offset = model.base_score;
  for (const auto& tree : model.trees) {
    view.trees.push_back(&tree);
    view.scales.push_back(model.params.eta);
  }
  return view;
}

double EnsembleView::predict(const double* row) const {
  double out = offset;
  for (size_t t = 0; t < trees.size(); ++t) out += scales[t] * trees[t]->predict(row);
  return out;
}

double EnsembleView::expected_value() const {
  double out = offset;
  for (size_t t = 0; t < trees.size(); ++t) out += scales[t] * trees[t]->expected_value();
  return out;
}

// --- TreeSHAP path-tracking recursion ------------------------------------------
// Follows the standard polynomial algorithm: the path records, per feature
// on the way down, the fraction of subsets that flow through when the
// feature is excluded (zero_fraction) or included (one_fraction), with
// weights maintained so leaf contributions can be read off per feature.

namespace {

struct PathElement {
  int feature = -1;
  double zero_fraction = 1.0;
  double one_fraction = 1.0;
  double weight = 0.0;
};

void extend(std::vector<PathElement>& path, double zero_fraction, double one_fraction,
            int feature) {
  const int depth = static_cast<int>(path.size());
  path.push_back({feature, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0});
  for (int i = depth - 1; i >= 0; --i) {
    path[i + 1].weight +=
        one_fraction * path[i].weight * static_cast<double>(i + 1) / static_cast<double>(depth + 1);
    path[i].weight =
        zero_fraction * path[i].weight * static_cast<double>(depth - i) / static_cast<double>(depth + 1);
  }
}

void unwind(std::vector<PathElement>& path, int index) {
  const int depth = static_cast<int>(path.size()) - 1;
  double next = path[depth].weight;
  if (path[index].one_fraction != 0.0) {
    for (int j = depth - 1; j >= 0; --j) {
      const double tmp = path[j].weight;
      path[j].weight = next * static_cast<double>(depth + 1) /
                       (static_cast<double>(j + 1) * path[index].one_fraction);
      next = tmp - path[j].weight * path[index].zero_fraction * static_cast<double>(depth - j) /
                       static_cast<double>(depth + 1);
    }
  } else {
    for (int j = depth - 1; j >= 0; --j) {
      path[j].weight = path[j].weight * static_cast<double>(depth + 1) /
                       (path[index].zero_fraction * static_cast<double>(depth - j));
    }
  }
  for (int j = index; j < depth; ++j) {
    path[j].feature = path[j + 1].feature;
    path[j].zero_fraction = path[j + 1].zero_fraction;
    path[j].one_fraction = path[j + 1].one_fraction;
  }
  path.pop_back();
}

double unwound_sum(const std::vector<PathElement>& path, int index) {
  const int depth = static_cast<int>(path.size()) - 1;
  double total = 0.0;
  if (path[index].one_fraction != 0.0) {
    double next = path[depth].weight;
    for (int j = depth - 1; j >= 0; --j) {
      const double tmp = next / (static_cast<double>(j + 1) * path[index].one_fraction);
      total += tmp;
      next = path[j].weight -
             tmp * path[index].zero_fraction * static_cast<double>(depth - j);
    }
  } else {
    for (int j = depth - 1; j >= 0; --j) {
      total += path[j].weight / (path[index].zero_fraction * static_cast<double>(depth - j));
    }
  }
  return total * static_cast<double>(depth + 1);
}

void treeshap_recurse(const DecisionTree& tree, const double* row, std::vector<double>& phi,
                      std::vector<PathElement> path, int node_id, double zero_fraction,
                      double one_fraction, int feature) {
  extend(path, zero_fraction, one_fraction, feature);
  const TreeNode& node = tree.nodes[node_id];
  if (node.is_leaf()) {
    for (int i = 1; i < static_cast<int>(path.size()); ++i) {
      phi[path[i].feature] +=
          unwound_sum(path, i) * (path[i].one_fraction - path[i].zero_fraction) * node.value;
    }
    return;
  }

  const bool goes_left = row[node.feature] < node.threshold;
  const int hot = goes_left ? node.left : node.right;
  const int cold = goes_left ? node.right : node.left;

  double incoming_zero = 1.0;
  double incoming_one = 1.0;
  for (int k = 1; k < static_cast<int>(path.size()); ++k) {
    if (path[k].feature == node.feature) {
      // Same feature appeared higher up: undo its extension and inherit
      // its fractions, so each feature occurs once along the path.
      incoming_zero = path[k].zero_fraction;
      incoming_one = path[k].one_fraction;
      unwind(path, k);
      break;
    }
  }

  const double hot_fraction = tree.nodes[hot].cover / node.cover;
  const double cold_fraction = tree.nodes[cold].cover / node.cover;
  treeshap_recurse(tree, row, phi, path, hot, incoming_zero * hot_fraction, incoming_one,
                   node.feature);
  treeshap_recurse(tree, row, phi, path, cold, incoming_zero * cold_fraction, 0.0, node.feature);
}

}  // namespace

std::vector<double> treeshap_tree(const DecisionTree& tree, const double* row,
                                  size_t num_features) {
  tree.validate();
  std::vector<double> phi(num_features, 0.0);
  if (tree.nodes.size() == 1) return phi;  // constant tree: all phi zero
  treeshap_recurse(tree, row, phi, {}, 0, 1.0, 1.0, -1);
  return phi;
}

double conditional_expectation(const DecisionTree& tree, const double* row,
                               const std::vector<bool>& in_subset) {
  // Iterative over an explicit stack: (node, weight) pairs.
  double result = 0.0;
  std::vector<std::pair<int, double>> stack{{0, 1.0}};
  while (!stack.empty()) {
    auto [node_id, weight] = stack.back();
    stack.pop_back();
    const TreeNode& node = tree.nodes[node_id];
    if (node.is_leaf()) {
      result += weight * node.value;
      continue;
    }
    if (static_cast<size_t>(node.feature) < in_subset.size() && in_subset[node.feature]) {
      stack.push_back({row[node.feature] < node.threshold ? node.left : node.right, weight});
    } else {
      stack.push_back({node.left, weight * tree.nodes[node.left].cover / node.cover});
      stack.push_back({node.right, weight * tree.nodes[node.right].cover / node.cover});
    }
  }
  return result;
}

std::vector<double> brute_force_shap(const EnsembleView& ensemble, const double* row,
                                     size_t num_features) {
  if (num_features > 15) {
    throw ValidationError("brute_force_shap: feature universe larger than 15 is refused");
  }
  const size_t subsets = size_t{1} << num_features;

  // v(S) for every subset, additive over trees.
  std::vector<double> value(subsets, 0.0);
  std::vector<bool> mask(num_features);
  for (size_t s = 0; s < subsets; ++s) {
    for (size_t f = 0; f < num_features; ++f) mask[f] = (s >> f) & 1;
    double v = ensemble.offset;
    for (size_t t = 0; t < ensemble.trees.size(); ++t) {
      v += ensemble.scales[t] * conditional_expectation(*ensemble.trees[t], row, mask);
    }
    value[s] = v;
  }

  // Shapley weights s!(F-1-s)!/F! by subset size.
  std::vector<double> weight(num_features, 0.0);
  double f_factorial = 1.0;
  for (size_t i = 2; i <= num_features; ++i) f_factorial *= static_cast<double>(i);
  for (size_t s = 0; s < num_features; ++s) {
    double sf = 1.0, rf = 1.0;
    for (size_t i = 2; i <= s; ++i) sf *= static_cast<double>(i);
    for (size_t i = 2; i <= num_features - 1 - s; ++i) rf *= static_cast<double>(i);
    weight[s] = sf * rf / f_factorial;
  }

  std::vector<double> phi(num_features, 0.0);
  for (size_t j = 0; j < num_features; ++j) {
    const size_t bit = size_t{1} << j;
    for (size_t s = 0; s < subsets; ++s) {
      if (s & bit) continue;
      const size_t size = static_cast<size_t>(__builtin_popcountll(s));
      phi[j] += weight[size] * (value[s | bit] - value[s]);
    }
  }
  return phi;
}

ShapVector treeshap_ensemble(const EnsembleView& ensemble, const double* row, size_t num_features,
                             const HouseholdId& id, const std::string& model_id) {
  ShapVector out;
  out.id = id;
  out.model_id = model_id;
  out.base_value = ensemble.expected_value();
  out.phi.assign(num_features, 0.0);
  for (size_t t = 0; t < ensemble.trees.size(); ++t) {
    const std::vector<double> tree_phi = treeshap_tree(*ensemble.trees[t], row, num_features);
    for (size_t j = 0; j < num_features; ++j) out.phi[j] += ensemble.scales[t] * tree_phi[j];
  }
  return out;
}

// --- Image-level aggregation ---------------------------------------------------

std::map<ImageType, double> group_by_image(const std::vector<double>& phi,
                                           const std::vector<ColumnProvenance>& provenance) {
  if (phi.size() != provenance.size()) {
    throw ValidationError("group_by_image: provenance does not cover all columns");
  }
  std::map<ImageType, double> grouped;
  for (size_t j = 0; j < phi.size(); ++j) grouped[provenance[j].type] += phi[j];
  return grouped;
}

std::vector<std::pair<ImageType, double>> rank_image_types(
    const std::vector<GroupedShap>& reports, const std::string& split) {
  std::map<ImageType, std::vector<double>> abs_values;
  for (const auto& report : reports) {
    if (!split.empty() && report.split != split) continue;
    for (const auto& [type, value] : report.grouped) {
      abs_values[type].push_back(std::abs(value));
    }
  }
  if (abs_values.empty()) throw ValidationError("rank_image_types: no households in split");

  std::vector<std::pair<ImageType, double>> ranking;
  for (ImageType t : all_image_types()) {
    auto it = abs_values.find(t);
    if (it != abs_values.end()) ranking.push_back({t, median(it->second)});
  }
  // Descending by median; stable sort keeps enumeration order on ties.
  std::stable_sort(ranking.begin(), ranking.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return ranking;
}

std::vector<TopBottomImages> top_bottom_images(
    const std::array<std::vector<GroupedShap>, kNumMeasures>& reports, int n) {
  if (n < 1) throw ValidationError("top_bottom_images: n must be >= 1");
  for (int m = 1; m < kNumMeasures; ++m) {
    if (reports[m].size() != reports[0].size()) {
      throw ValidationError("top_bottom_images: reports must cover the same households");
    }
  }
  const size_t count = reports[0].size();
  if (count == 0) return {};

  // Image types present in all three reports.
  std::vector<ImageType> types;
  for (const auto& [type, _] : reports[0][0].grouped) types.push_back(type);

  std::vector<TopBottomImages> out;
  for (ImageType type : types) {
    // Average over measures of the within-measure rank (1 = most positive).
    std::vector<double> avg_rank(count, 0.0);
    for (int m = 0; m < kNumMeasures; ++m) {
      std::vector<double> values(count);
      for (size_t i = 0; i < count; ++i) values[i] = reports[m][i].grouped.at(type);
      // average_ranks ranks ascending; descending rank = n + 1 - ascending.
      const std::vector<double> asc = average_ranks(values);
      for (size_t i = 0; i < count; ++i) {
        avg_rank[i] += (static_cast<double>(count) + 1.0 - asc[i]) / kNumMeasures;
      }
    }
    std::vector<size_t> order(count);
    for (size_t i = 0; i < count; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      if (avg_rank[a] != avg_rank[b]) return avg_rank[a] < avg_rank[b];
      return reports[0][a].id < reports[0][b].id;
    });

    TopBottomImages tb;
    tb.type = type;
    const size_t take = std::min(static_cast<size_t>(n), count);
    for (size_t i = 0; i < take; ++i) tb.top.push_back(reports[0][order[i]].id);
    for (size_t i = 0; i < take; ++i) {
      tb.bottom.push_back(reports[0][order[count - 1 - i]].id);
    }
    out.push_back(std::move(tb));
  }
  return out;
}

PredictorSet reduced_predictor_set(const std::vector<std::pair<ImageType, double>>& ranking) {
  for (const auto& [type, _] : ranking) {
    if (image_group(type) == ImageGroup::kIndoor) return PredictorSet::reduced(type);
  }
  throw ValidationError("reduced_predictor_set: ranking contains no indoor image type");
}

}  // namespace sep
