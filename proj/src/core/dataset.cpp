#include "dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "csvio.hpp"
#include "metrics.hpp"
#include "rng.hpp"

namespace sep {

const AssetVariable* AssetSchema::find(const std::string& name) const {
  for (const auto& v : variables) {
    if (v.name == name) return &v;
  }
  return nullptr;
}

const AssetSchema& bundled_asset_schema() {
  // Stand-in for the HDSS asset questionnaire: housing materials, services,
  // and durable goods. Categories are ordered from high to low SEP, which
  // the synthetic generator relies on.
  static const AssetSchema schema{{
      {"water_source", {"piped", "borehole", "well", "surface"}},
      {"light_fuel", {"electricity", "solar", "kerosene", "candle"}},
      {"cooking_fuel", {"electricity", "gas", "charcoal", "firewood"}},
      {"roof_material", {"concrete", "metal_sheet", "thatch"}},
      {"wall_material", {"brick", "cement_block", "wood", "reed"}},
      {"floor_material", {"tile", "cement", "earth"}},
      {"latrine_type", {"flush", "improved", "unimproved", "none"}},
      {"has_television", {"yes", "no"}},
      {"has_radio", {"yes", "no"}},
      {"has_bicycle", {"yes", "no"}},
      {"has_car", {"yes", "no"}},
      {"has_mobile_phone", {"yes", "no"}},
  }};
  return schema;
}

const std::vector<std::string>& bundled_income_sources() {
  static const std::vector<std::string> sources = {"salary",      "agriculture", "business",
                                                   "remittances", "pension",     "other"};
  return sources;
}

const std::vector<std::string>& bundled_expenditure_sources() {
  static const std::vector<std::string> sources = {"food",      "transport", "energy_water",
                                                   "education", "health",    "clothing",
                                                   "communication", "other"};
  return sources;
}

double SepMeasures::get(Measure m) const {
  switch (m) {
    case Measure::kAssets:
      return assets;
    case Measure::kExpenditure:
      return expenditure;
    case Measure::kIncome:
      return income;
  }
  return 0.0;
}

bool CohortSplit::is_train(const HouseholdId& id) const {
  return std::binary_search(train_ids.begin(), train_ids.end(), id);
}

namespace {

Money sum_sources(const std::map<std::string, Money>& sources, const HouseholdId& id,
                  const char* kind) {
  Money total = 0.0;
  for (const auto& [name, value] : sources) {
    if (!(value >= 0.0)) {
      throw ValidationError("household " + id + ": negative or non-finite " + kind + " source '" +
                            name + "'");
    }
    total += value;
  }
  return total;
}

}  // namespace

Money compute_income_sep(const HouseholdRecord& record) {
  return sum_sources(record.income_sources, record.id, "income");
}

Money compute_expenditure_sep(const HouseholdRecord& record) {
  return sum_sources(record.expenditure_sources, record.id, "expenditure");
}

Cohort impute_assets(const Cohort& cohort) {
  // Collect the variable universe in deterministic (sorted) order.
  std::set<std::string> variables;
  for (const auto& rec : cohort) {
    for (const auto& [var, _] : rec.assets) variables.insert(var);
  }

  std::map<std::string, std::string> modal;
  for (const auto& var : variables) {
    std::map<std::string, size_t> counts;  // ordered: lexicographic tie-break for free
    for (const auto& rec : cohort) {
      auto it = rec.assets.find(var);
      if (it != rec.assets.end() && it->second.has_value()) ++counts[*it->second];
    }
    if (counts.empty()) {
      throw ValidationError("asset variable '" + var + "' has no observed values to impute from");
    }
    std::string best;
    size_t best_count = 0;
    for (const auto& [cat, count] : counts) {
      if (count > best_count) {
        best = cat;
        best_count = count;
      }
    }
    modal[var] = best;
  }

  Cohort out = cohort;
  for (auto& rec : out) {
    for (auto& [var, cell] : rec.assets) {
      if (!cell.has_value()) cell = modal.at(var);
    }
  }
  return out;
}

BinaryLabels binarize_labels(const SepTable& sep, const std::vector<HouseholdId>& train_ids) {
  if (train_ids.empty()) throw ValidationError("binarize_labels: empty train id set");
  BinaryLabels labels;
  for (int m = 0; m < kNumMeasures; ++m) {
    std::vector<double> train_values;
    train_values.reserve(train_ids.size());
    for (const auto& id : train_ids) {
      auto it = sep.find(id);
      if (it == sep.end()) throw ValidationError("binarize_labels: unknown train id " + id);
      train_values.push_back(it->second.get(static_cast<Measure>(m)));
    }
    labels.thresholds[m] = median(train_values);
  }
  for (const auto& [id, measures] : sep) {
    std::array<bool, kNumMeasures> flags{};
    for (int m = 0; m < kNumMeasures; ++m) {
      flags[m] = measures.get(static_cast<Measure>(m)) > labels.thresholds[m];
    }
    labels.flags[id] = flags;
  }
  return labels;
}

std::vector<HouseholdId> quartile_stratified_sample(const std::map<HouseholdId, double>& scores,
                                                    size_t n_per_quartile, uint64_t seed) {
  if (scores.size() < 4 * n_per_quartile) {
    throw ValidationError("quartile_stratified_sample: need at least 4 x n_per_quartile scores");
  }
  std::vector<double> values;
  values.reserve(scores.size());
  for (const auto& [_, v] : scores) values.push_back(v);
  const double q1 = percentile(values, 25.0);
  const double q2 = percentile(values, 50.0);
  const double q3 = percentile(values, 75.0);

  std::array<std::vector<HouseholdId>, 4> quartiles;
  for (const auto& [id, v] : scores) {
    int q = v <= q1 ? 0 : v <= q2 ? 1 : v <= q3 ? 2 : 3;
    quartiles[q].push_back(id);
  }

  std::vector<HouseholdId> out;
  out.reserve(4 * n_per_quartile);
  for (int q = 0; q < 4; ++q) {
    if (quartiles[q].size() < n_per_quartile) {
      throw ValidationError("quartile_stratified_sample: quartile " + std::to_string(q + 1) +
                            " holds only " + std::to_string(quartiles[q].size()) +
                            " households, need " + std::to_string(n_per_quartile));
    }
    Rng rng = Rng::substream(seed, "quartile-sample", static_cast<uint64_t>(q));
    const auto pick = rng.sample_without_replacement(quartiles[q].size(), n_per_quartile);
    for (size_t idx : pick) out.push_back(quartiles[q][idx]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

CohortSplit train_test_split(const std::vector<HouseholdId>& ids, size_t n_train, size_t n_test,
                             uint64_t seed) {
  if (n_train + n_test > ids.size()) {
    throw ValidationError("train_test_split: requested " + std::to_string(n_train) + "+" +
                          std::to_string(n_test) + " households from a cohort of " +
                          std::to_string(ids.size()));
  }
  std::vector<HouseholdId> pool = ids;
  std::sort(pool.begin(), pool.end());
  Rng rng = Rng::substream(seed, "train-test-split");
  rng.shuffle(pool);
  CohortSplit split;
  split.seed = seed;
  split.train_ids.assign(pool.begin(), pool.begin() + n_train);
  split.test_ids.assign(pool.begin() + n_train, pool.begin() + n_train + n_test);
  std::sort(split.train_ids.begin(), split.train_ids.end());
  std::sort(split.test_ids.begin(), split.test_ids.end());
  return split;
}

// --- File formats ------------------------------------------------------------

namespace {

double parse_money(const std::string& cell, const std::string& context) {
  try {
    size_t pos = 0;
    const double v = std::stod(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument("trailing characters");
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ValidationError(context + ": money value must be finite and >= 0, got '" + cell + "'");
    }
    return v;
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception&) {
    throw ValidationError(context + ": cannot parse money value '" + cell + "'");
  }
}

constexpr const char* kIncomePrefix = "income_";
constexpr const char* kExpenditurePrefix = "exp_";

}  // namespace

Cohort read_survey_csv(const std::string& path, const AssetSchema& schema) {
  const CsvTable table = read_csv(path);
  enum class Kind { kId, kX, kY, kAsset, kIncome, kExpenditure };
  std::vector<Kind> kinds(table.header.size());
  std::vector<std::string> names(table.header.size());
  for (size_t c = 0; c < table.header.size(); ++c) {
    const std::string& h = table.header[c];
    if (h == "id") {
      kinds[c] = Kind::kId;
    } else if (h == "x") {
      kinds[c] = Kind::kX;
    } else if (h == "y") {
      kinds[c] = Kind::kY;
    } else if (schema.find(h) != nullptr) {
      kinds[c] = Kind::kAsset;
      names[c] = h;
    } else if (h.rfind(kIncomePrefix, 0) == 0) {
      kinds[c] = Kind::kIncome;
      names[c] = h.substr(std::string(kIncomePrefix).size());
    } else if (h.rfind(kExpenditurePrefix, 0) == 0) {
      kinds[c] = Kind::kExpenditure;
      names[c] = h.substr(std::string(kExpenditurePrefix).size());
    } else {
      throw ValidationError("survey CSV " + path + ": unknown column '" + h + "'");
    }
  }
  if (table.column("id") < 0) throw ValidationError("survey CSV " + path + ": missing id column");

  Cohort cohort;
  std::set<HouseholdId> seen;
  for (const auto& row : table.rows) {
    HouseholdRecord rec;
    for (size_t c = 0; c < row.size(); ++c) {
      const std::string& cell = row[c];
      switch (kinds[c]) {
        case Kind::kId:
          rec.id = cell;
          break;
        case Kind::kX:
          rec.x = cell.empty() ? 0.0 : std::stod(cell);
          break;
        case Kind::kY:
          rec.y = cell.empty() ? 0.0 : std::stod(cell);
          break;
        case Kind::kAsset:
          rec.assets[names[c]] = cell.empty() ? std::nullopt : std::optional<std::string>(cell);
          break;
        case Kind::kIncome:
          if (!cell.empty()) {
            rec.income_sources[names[c]] = parse_money(cell, "household " + rec.id);
          }
          break;
        case Kind::kExpenditure:
          if (!cell.empty()) {
            rec.expenditure_sources[names[c]] = parse_money(cell, "household " + rec.id);
          }
          break;
      }
    }
    if (rec.id.empty()) throw ValidationError("survey CSV " + path + ": row with empty id");
    if (!seen.insert(rec.id).second) {
      throw ValidationError("survey CSV " + path + ": duplicate household id " + rec.id);
    }
    cohort.push_back(std::move(rec));
  }
  return cohort;
}

void write_survey_csv(const std::string& path, const Cohort& cohort, const AssetSchema& schema) {
  CsvTable table;
  table.header = {"id", "x", "y"};
  for (const auto& var : schema.variables) table.header.push_back(var.name);
  // Source columns: union over the cohort, in sorted order.
  std::set<std::string> income_names, exp_names;
  for (const auto& rec : cohort) {
    for (const auto& [name, _] : rec.income_sources) income_names.insert(name);
    for (const auto& [name, _] : rec.expenditure_sources) exp_names.insert(name);
  }
  for (const auto& name : income_names) table.header.push_back(kIncomePrefix + name);
  for (const auto& name : exp_names) table.header.push_back(kExpenditurePrefix + name);

  for (const auto& rec : cohort) {
    std::vector<std::string> row = {rec.id, format_double(rec.x), format_double(rec.y)};
    for (const auto& var : schema.variables) {
      auto it = rec.assets.find(var.name);
      row.push_back(it != rec.assets.end() && it->second.has_value() ? *it->second : "");
    }
    for (const auto& name : income_names) {
      auto it = rec.income_sources.find(name);
      row.push_back(it != rec.income_sources.end() ? format_double(it->second) : "");
    }
    for (const auto& name : exp_names) {
      auto it = rec.expenditure_sources.find(name);
      row.push_back(it != rec.expenditure_sources.end() ? format_double(it->second) : "");
    }
    table.rows.push_back(std::move(row));
  }
  write_csv(path, table);
}

void read_image_manifest(const std::string& path, Cohort& cohort) {
  std::ifstream in(path);
  if (!in) throw MissingDependencyError("cannot open image manifest: " + path);
  std::map<HouseholdId, HouseholdRecord*> by_id;
  for (auto& rec : cohort) by_id[rec.id] = &rec;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw ValidationError("manifest " + path + " line " + std::to_string(line_no) + ": " +
                            e.what());
    }
    const std::string id = j.at("id").get<std::string>();
    const std::string type_name = j.at("image_type").get<std::string>();
    auto type = image_type_from_name(type_name);
    if (!type) {
      throw ValidationError("manifest " + path + " line " + std::to_string(line_no) +
                            ": unknown image_type '" + type_name + "'");
    }
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw ValidationError("manifest " + path + " line " + std::to_string(line_no) +
                            ": id " + id + " not present in cohort");
    }
    ImageRef ref;
    ref.missing = j.at("missing").get<bool>();
    ref.path = j.value("path", std::string{});
    it->second->images[*type] = ref;
  }
}

void append_image_manifest(const std::string& path, const Cohort& cohort,
                           const std::vector<ImageType>& types, bool truncate) {
  std::ofstream out(path, truncate ? std::ios::trunc : std::ios::app);
  if (!out) throw ValidationError("cannot write image manifest: " + path);
  for (const auto& rec : cohort) {
    for (ImageType t : types) {
      auto it = rec.images.find(t);
      if (it == rec.images.end()) continue;
      nlohmann::ordered_json j;
      j["id"] = rec.id;
      j["image_type"] = image_type_name(t);
      j["path"] = it->second.path;
      j["missing"] = it->second.missing;
      out << j.dump() << '\n';
    }
  }
}

CohortSplit read_split_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingDependencyError("cannot open split file: " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  CohortSplit split;
  split.seed = j.at("seed").get<uint64_t>();
  split.train_ids = j.at("train_ids").get<std::vector<std::string>>();
  split.test_ids = j.at("test_ids").get<std::vector<std::string>>();
  std::sort(split.train_ids.begin(), split.train_ids.end());
  std::sort(split.test_ids.begin(), split.test_ids.end());
  return split;
}

void write_split_file(const std::string& path, const CohortSplit& split) {
  nlohmann::ordered_json j;
  j["seed"] = split.seed;
  j["train_ids"] = split.train_ids;
  j["test_ids"] = split.test_ids;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError("cannot write split file: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace sep
