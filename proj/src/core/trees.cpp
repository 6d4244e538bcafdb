#include "trees.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

#include "parallel.hpp"
#include "rng.hpp"

namespace sep {

double DecisionTree::predict(const double* row) const {
  int node = 0;
  while (!nodes[node].is_leaf()) {
    node = row[nodes[node].feature] < nodes[node].threshold ? nodes[node].left
                                                            : nodes[node].right;
  }
  return nodes[node].value;
}

double DecisionTree::expected_value() const {
  // Iterative cover-weighted expectation, children before parents (children
  // always have higher indices than their parent here).
  std::vector<double> expect(nodes.size(), 0.0);
  for (size_t i = nodes.size(); i-- > 0;) {
    const TreeNode& node = nodes[i];
    if (node.is_leaf()) {
      expect[i] = node.value;
    } else {
      const double total = nodes[node.left].cover + nodes[node.right].cover;
      expect[i] = (nodes[node.left].cover * expect[node.left] +
                   nodes[node.right].cover * expect[node.right]) /
                  total;
    }
  }
  return expect[0];
}

int DecisionTree::max_depth() const {
  std::vector<int> depth(nodes.size(), 0);
  int best = 0;
  for (size_t i = 0; i < nodes.size(); ++i) {
    if (!nodes[i].is_leaf()) {
      depth[nodes[i].left] = depth[i] + 1;
      depth[nodes[i].right] = depth[i] + 1;
    } else {
      best = std::max(best, depth[i]);
    }
  }
  return best;
}

void DecisionTree::validate() const {
  if (nodes.empty()) throw ValidationError("tree: empty node array");
  for (size_t i = 0; i < nodes.size(); ++i) {
    const TreeNode& node = nodes[i];
    if (node.is_leaf()) continue;
    if (node.left < 0 || node.right < 0 || node.left >= static_cast<int>(nodes.size()) ||
        node.right >= static_cast<int>(nodes.size())) {
      throw ValidationError("tree: node " + std::to_string(i) + " has out-of-range children");
    }
    if (node.left <= static_cast<int>(i) || node.right <= static_cast<int>(i)) {
      throw ValidationError("tree: children must come after their parent");
    }
    const double sum = nodes[node.left].cover + nodes[node.right].cover;
    if (std::abs(sum - node.cover) > 1e-9 * std::max(1.0, node.cover)) {
      throw ValidationError("tree: cover mismatch at node " + std::to_string(i));
    }
  }
}

namespace {

struct SplitResult {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double score = 0.0;  // criterion value, lower is better
};

// Best split of `samples` (indices into x/y, duplicates allowed) over the
// given candidate features: minimizes SSE_left + SSE_right, i.e. the
// weighted child variance. Midpoints of consecutive distinct sorted values
// are the candidate thresholds.
SplitResult best_variance_split(const std::vector<double>& x, size_t p,
                                const std::vector<double>& y,
                                const std::vector<size_t>& samples,
                                const std::vector<size_t>& features, size_t min_leaf) {
  SplitResult best;
  const size_t m = samples.size();
  std::vector<std::pair<double, double>> vy(m);  // (feature value, outcome)
  for (size_t feature : features) {
    for (size_t i = 0; i < m; ++i) {
      vy[i] = {x[samples[i] * p + feature], y[samples[i]]};
    }
    std::sort(vy.begin(), vy.end());
    if (vy.front().first == vy.back().first) continue;  // constant feature

    double left_sum = 0.0, left_sq = 0.0;
    double right_sum = 0.0, right_sq = 0.0;
    for (const auto& [v, yy] : vy) {
      right_sum += yy;
      right_sq += yy * yy;
    }
    for (size_t i = 0; i + 1 < m; ++i) {
      const double yy = vy[i].second;
      left_sum += yy;
      left_sq += yy * yy;
      right_sum -= yy;
      right_sq -= yy * yy;
      if (vy[i].first == vy[i + 1].first) continue;  // not a boundary
      const size_t nl = i + 1, nr = m - nl;
      if (nl < min_leaf || nr < min_leaf) continue;
      const double sse_left = left_sq - left_sum * left_sum / static_cast<double>(nl);
      const double sse_right = right_sq - right_sum * right_sum / static_cast<double>(nr);
      const double score = sse_left + sse_right;
      if (!best.found || score < best.score) {
        best.found = true;
        best.feature = static_cast<int>(feature);
        best.threshold = 0.5 * (vy[i].first + vy[i + 1].first);
        best.score = score;
      }
    }
  }
  return best;
}

DecisionTree fit_variance_tree(const std::vector<double>& x, size_t n, size_t p,
                               const std::vector<double>& y, std::vector<size_t> root_samples,
                               const RfParams& params, Rng& rng) {
  const size_t mtry = std::clamp<size_t>(
      static_cast<size_t>(std::lround(params.mtry_fraction * static_cast<double>(p))), 1, p);
  const size_t min_leaf = static_cast<size_t>(std::max(1, params.min_leaf));

  DecisionTree tree;
  struct WorkItem {
    int node;
    int depth;
    std::vector<size_t> samples;
  };
  std::vector<WorkItem> stack;
  tree.nodes.emplace_back();
  stack.push_back({0, 0, std::move(root_samples)});

  while (!stack.empty()) {
    WorkItem item = std::move(stack.back());
    stack.pop_back();
    TreeNode& node = tree.nodes[item.node];
    node.cover = static_cast<double>(item.samples.size());

    double sum = 0.0;
    for (size_t s : item.samples) sum += y[s];
    const double node_mean = sum / static_cast<double>(item.samples.size());

    bool make_leaf = item.samples.size() < 2 * min_leaf ||
                     (params.max_depth > 0 && item.depth >= params.max_depth);
    if (!make_leaf) {
      bool pure = true;
      for (size_t s : item.samples) {
        if (y[s] != y[item.samples.front()]) {
          pure = false;
          break;
        }
      }
      make_leaf = pure;
    }

    SplitResult split;
    if (!make_leaf) {
      const std::vector<size_t> features = rng.sample_without_replacement(p, mtry);
      split = best_variance_split(x, p, y, item.samples, features, min_leaf);
      make_leaf = !split.found;
    }
    if (make_leaf) {
      node.feature = -1;
      node.value = node_mean;
      continue;
    }

    std::vector<size_t> left_samples, right_samples;
    for (size_t s : item.samples) {
      (x[s * p + split.feature] < split.threshold ? left_samples : right_samples).push_back(s);
    }
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = static_cast<int>(tree.nodes.size());
    node.right = node.left + 1;
    const int left_id = node.left, right_id = node.right;
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    stack.push_back({right_id, item.depth + 1, std::move(right_samples)});
    stack.push_back({left_id, item.depth + 1, std::move(left_samples)});
  }
  return tree;
}

}  // namespace

RandomForestModel rf_fit(const std::vector<double>& x, size_t n, size_t p,
                         const std::vector<double>& y, const RfParams& params) {
  if (n < 2) throw ValidationError("rf_fit: need at least 2 rows");
  if (x.size() != n * p || y.size() != n) throw ValidationError("rf_fit: shape mismatch");
  if (params.n_trees < 1) throw ValidationError("rf_fit: n_trees must be >= 1");

  RandomForestModel model;
  model.params = params;
  model.trees.resize(params.n_trees);
  parallel_for(static_cast<size_t>(params.n_trees), [&](size_t t) {
    Rng rng = Rng::substream(params.seed, "rf-tree", t);
    std::vector<size_t> samples(n);
    if (params.bootstrap) {
      for (size_t i = 0; i < n; ++i) samples[i] = static_cast<size_t>(rng.uniform_index(n));
    } else {
      std::iota(samples.begin(), samples.end(), size_t{0});
    }
    model.trees[t] = fit_variance_tree(x, n, p, y, std::move(samples), params, rng);
  });
  return model;
}

std::vector<double> rf_predict(const RandomForestModel& model, const std::vector<double>& x,
                               size_t n, size_t p) {
  if (x.size() != n * p) throw ValidationError("rf_predict: shape mismatch");
  std::vector<double> out(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (const auto& tree : model.trees) sum += tree.predict(&x[i * p]);
    out[i] = sum / static_cast<double>(model.trees.size());
  }
  return out;
}

namespace {

struct GainSplit {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

// XGBoost-style exact greedy split over all features.
GainSplit best_gain_split(const std::vector<double>& x, size_t p,
                          const std::vector<double>& grad, const std::vector<size_t>& samples,
                          double lambda, double gamma) {
  GainSplit best;
  const size_t m = samples.size();
  if (m < 2) return best;
  double g_total = 0.0;
  for (size_t s : samples) g_total += grad[s];
  const double h_total = static_cast<double>(m);
  const double parent_score = g_total * g_total / (h_total + lambda);

  std::vector<std::pair<double, double>> vg(m);  // (feature value, gradient)
  for (size_t feature = 0; feature < p; ++feature) {
    for (size_t i = 0; i < m; ++i) {
      vg[i] = {x[samples[i] * p + feature], grad[samples[i]]};
    }
    std::sort(vg.begin(), vg.end());
    if (vg.front().first == vg.back().first) continue;

    double g_left = 0.0;
    for (size_t i = 0; i + 1 < m; ++i) {
      g_left += vg[i].second;
      if (vg[i].first == vg[i + 1].first) continue;
      const double h_left = static_cast<double>(i + 1);
      const double g_right = g_total - g_left;
      const double h_right = h_total - h_left;
      const double gain = 0.5 * (g_left * g_left / (h_left + lambda) +
                                 g_right * g_right / (h_right + lambda) - parent_score) -
                          gamma;
      if (gain > 0.0 && (!best.found || gain > best.gain)) {
        best.found = true;
        best.feature = static_cast<int>(feature);
        best.threshold = 0.5 * (vg[i].first + vg[i + 1].first);
        best.gain = gain;
      }
    }
  }
  return best;
}

DecisionTree fit_gbt_tree(const std::vector<double>& x, size_t p, const std::vector<double>& grad,
                          std::vector<size_t> root_samples, const GbtParams& params) {
  DecisionTree tree;
  struct WorkItem {
    int node;
    int depth;
    std::vector<size_t> samples;
  };
  std::vector<WorkItem> stack;
  tree.nodes.emplace_back();
  stack.push_back({0, 0, std::move(root_samples)});
  while (!stack.empty()) {
    WorkItem item = std::move(stack.back());
    stack.pop_back();
    TreeNode& node = tree.nodes[item.node];
    node.cover = static_cast<double>(item.samples.size());

    GainSplit split;
    if (item.depth < params.max_depth) {
      split = best_gain_split(x, p, grad, item.samples, params.lambda, params.gamma);
    }
    if (!split.found) {
      double g = 0.0;
      for (size_t s : item.samples) g += grad[s];
      node.feature = -1;
      node.value = -g / (static_cast<double>(item.samples.size()) + params.lambda);
      continue;
    }

    std::vector<size_t> left_samples, right_samples;
    for (size_t s : item.samples) {
      (x[s * p + split.feature] < split.threshold ? left_samples : right_samples).push_back(s);
    }
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = static_cast<int>(tree.nodes.size());
    node.right = node.left + 1;
    const int left_id = node.left, right_id = node.right;
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    stack.push_back({right_id, item.depth + 1, std::move(right_samples)});
    stack.push_back({left_id, item.depth + 1, std::move(left_samples)});
  }
  return tree;
}

}  // namespace

GbtModel gbt_fit(const std::vector<double>& x, size_t n, size_t p, const std::vector<double>& y,
                 const GbtParams& params) {
  if (n < 1) throw ValidationError("gbt_fit: empty input");
  if (x.size() != n * p || y.size() != n) throw ValidationError("gbt_fit: shape mismatch");
  if (!(params.eta > 0.0)) throw ValidationError("gbt_fit: eta must be > 0");
  if (params.lambda < 0.0 || params.gamma < 0.0) {
    throw ValidationError("gbt_fit: lambda and gamma must be >= 0");
  }

  GbtModel model;
  model.params = params;
  double mean = 0.0;
  for (double v : y) mean += v;
  model.base_score = mean / static_cast<double>(n);

  std::vector<double> prediction(n, model.base_score);
  std::vector<double> grad(n);
  std::vector<size_t> all(n);
  std::iota(all.begin(), all.end(), size_t{0});

  for (int round = 0; round < params.n_rounds; ++round) {
    for (size_t i = 0; i < n; ++i) grad[i] = prediction[i] - y[i];
    DecisionTree tree = fit_gbt_tree(x, p, grad, all, params);
    for (size_t i = 0; i < n; ++i) prediction[i] += params.eta * tree.predict(&x[i * p]);
    model.trees.push_back(std::move(tree));
  }
  return model;
}

std::vector<double> gbt_predict(const GbtModel& model, const std::vector<double>& x, size_t n,
                                size_t p) {
  if (x.size() != n * p) throw ValidationError("gbt_predict: shape mismatch");
  std::vector<double> out(n, model.base_score);
  for (size_t i = 0; i < n; ++i) {
    for (const auto& tree : model.trees) out[i] += model.params.eta * tree.predict(&x[i * p]);
  }
  return out;
}

// --- Binary tree-array blocks -------------------------------------------------

namespace {

void put_i32(std::ostream& out, int32_t v) {
  unsigned char b[4];
  std::memcpy(b, &v, 4);  // little-endian host layout
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
  unsigned char b[8];
  std::memcpy(b, &v, 8);
  out.write(reinterpret_cast<const char*>(b), 8);
}

int32_t get_i32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  int32_t v;
  std::memcpy(&v, b, 4);
  return v;
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  double v;
  std::memcpy(&v, b, 8);
  return v;
}

constexpr char kTreeMagic[4] = {'S', 'E', 'P', 'T'};

}  // namespace

void write_tree_blocks(const std::string& path, const std::vector<DecisionTree>& trees) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write tree blocks: " + path);
  out.write(kTreeMagic, 4);
  put_i32(out, static_cast<int32_t>(trees.size()));
  for (const auto& tree : trees) {
    put_i32(out, static_cast<int32_t>(tree.nodes.size()));
    for (const auto& node : tree.nodes) {
      put_i32(out, node.feature);
      put_f64(out, node.threshold);
      put_i32(out, node.left);
      put_i32(out, node.right);
      put_f64(out, node.value);
      put_f64(out, node.cover);
    }
  }
  if (!out) throw ValidationError("write failed for tree blocks: " + path);
}

std::vector<DecisionTree> read_tree_blocks(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingDependencyError("cannot open tree blocks: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kTreeMagic, 4) != 0) {
    throw ValidationError("tree blocks " + path + ": bad magic");
  }
  const int32_t count = get_i32(in);
  std::vector<DecisionTree> trees(static_cast<size_t>(count));
  for (auto& tree : trees) {
    const int32_t nodes = get_i32(in);
    tree.nodes.resize(static_cast<size_t>(nodes));
    for (auto& node : tree.nodes) {
      node.feature = get_i32(in);
      node.threshold = get_f64(in);
      node.left = get_i32(in);
      node.right = get_i32(in);
      node.value = get_f64(in);
      node.cover = get_f64(in);
    }
  }
  if (!in) throw ValidationError("tree blocks " + path + ": truncated payload");
  return trees;
}

}  // namespace sep
