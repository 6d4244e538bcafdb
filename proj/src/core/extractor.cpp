#include "extractor.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "csvio.hpp"
#include "rng.hpp"

namespace sep {

namespace {

Matrix<float> labels_matrix(const std::vector<std::array<bool, kNumMeasures>>& labels,
                            const std::vector<size_t>& indices) {
  Matrix<float> y(kNumMeasures, static_cast<Eigen::Index>(indices.size()));
  for (size_t i = 0; i < indices.size(); ++i) {
    for (int m = 0; m < kNumMeasures; ++m) {
      y(m, static_cast<Eigen::Index>(i)) = labels[indices[i]][m] ? 1.0f : 0.0f;
    }
  }
  return y;
}

std::vector<size_t> iota_indices(size_t n) {
  std::vector<size_t> v(n);
  std::iota(v.begin(), v.end(), size_t{0});
  return v;
}

// Forward in evaluation batches; returns loss and per-measure accuracy.
std::pair<double, std::array<double, kNumMeasures>> evaluate_set(
    const NetworkParams<float>& params, const LabeledImages& set) {
  const NetworkSpec& spec = params.spec;
  constexpr size_t kEvalBatch = 64;
  double loss_sum = 0.0;
  std::array<size_t, kNumMeasures> hits{};
  const size_t n = set.images.size();
  for (size_t start = 0; start < n; start += kEvalBatch) {
    const size_t count = std::min(kEvalBatch, n - start);
    std::vector<Image> chunk(set.images.begin() + start, set.images.begin() + start + count);
    const auto batch = ImageBatch<float>::from_images(chunk, spec.input_h, spec.input_w);
    auto indices = iota_indices(count);
    for (auto& idx : indices) idx += start;
    const Matrix<float> y = labels_matrix(set.labels, indices);
    const ForwardResult<float> out = forward(params, batch);
    loss_sum += bce_multilabel_loss(out.probabilities, y) * static_cast<double>(count);
    for (int m = 0; m < kNumMeasures; ++m) {
      for (Eigen::Index c = 0; c < out.probabilities.cols(); ++c) {
        const bool predicted = out.probabilities(m, c) >= 0.5f;
        const bool actual = y(m, c) > 0.5f;
        if (predicted == actual) ++hits[m];
      }
    }
  }
  std::array<double, kNumMeasures> acc{};
  for (int m = 0; m < kNumMeasures; ++m) {
    acc[m] = n > 0 ? static_cast<double>(hits[m]) / static_cast<double>(n) : 0.0;
  }
  return {n > 0 ? loss_sum / static_cast<double>(n) : 0.0, acc};
}

}  // namespace

TrainResult train_extractor(const LabeledImages& train, const LabeledImages& test,
                            const NetworkSpec& spec, const TrainOptions& options) {
  spec.validate();
  if (train.images.size() != train.labels.size() || test.images.size() != test.labels.size()) {
    throw ValidationError("train_extractor: image/label count mismatch");
  }
  const size_t n = train.images.size();
  if (n < 2 * static_cast<size_t>(options.batch_size)) {
    throw ValidationError("train_extractor: need at least 2 x batch_size = " +
                          std::to_string(2 * options.batch_size) + " usable images, have " +
                          std::to_string(n));
  }

  TrainResult result;
  result.params = build_network<float>(spec);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::vector<size_t> order = iota_indices(n);
    Rng shuffle_rng = Rng::substream(options.seed, "epoch-shuffle", static_cast<uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::array<size_t, kNumMeasures> hits{};
    size_t seen = 0;
    for (size_t start = 0; start < n; start += options.batch_size) {
      const size_t count = std::min(static_cast<size_t>(options.batch_size), n - start);
      std::vector<Image> batch_images;
      batch_images.reserve(count);
      std::vector<size_t> batch_indices(order.begin() + start, order.begin() + start + count);
      for (size_t idx : batch_indices) {
        Rng aug_rng = Rng::substream(
            options.seed, "augment",
            static_cast<uint64_t>(epoch) * n + static_cast<uint64_t>(idx));
        batch_images.push_back(augment(train.images[idx], aug_rng, options.augment));
      }
      const auto batch = ImageBatch<float>::from_images(batch_images, spec.input_h, spec.input_w);
      const Matrix<float> y = labels_matrix(train.labels, batch_indices);

      Gradients<float> grads;
      Matrix<float> probs;
      const double loss = backward(result.params, batch, y, grads, &probs);
      // Running train metrics from the pre-update forward probabilities.
      for (int m = 0; m < kNumMeasures; ++m) {
        for (Eigen::Index c = 0; c < probs.cols(); ++c) {
          if ((probs(m, c) >= 0.5f) == (y(m, c) > 0.5f)) ++hits[m];
        }
      }
      sgd_momentum_step(result.params, grads, options.lr, options.momentum);
      loss_sum += loss * static_cast<double>(count);
      seen += count;
    }

    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.train_loss = loss_sum / static_cast<double>(seen);
    for (int m = 0; m < kNumMeasures; ++m) {
      stats.train_acc[m] = static_cast<double>(hits[m]) / static_cast<double>(seen);
    }
    if (!test.images.empty()) {
      auto [test_loss, test_acc] = evaluate_set(result.params, test);
      stats.test_loss = test_loss;
      stats.test_acc = test_acc;
    }
    result.log.push_back(stats);
  }
  return result;
}

FeatureVector extract_features(const NetworkParams<float>& params, const Image& image,
                               const HouseholdId& id, ImageType type) {
  const auto batch =
      ImageBatch<float>::from_images({image}, params.spec.input_h, params.spec.input_w);
  const ForwardResult<float> out = forward(params, batch);
  FeatureVector fv;
  fv.id = id;
  fv.type = type;
  fv.missing = false;
  fv.values.resize(params.spec.penultimate_width());
  for (Eigen::Index i = 0; i < out.penultimate.rows(); ++i) {
    fv.values[static_cast<size_t>(i)] = static_cast<double>(out.penultimate(i, 0));
  }
  return fv;
}

FeatureVector missing_feature_vector(const HouseholdId& id, ImageType type) {
  FeatureVector fv;
  fv.id = id;
  fv.type = type;
  fv.missing = true;
  return fv;
}

NetworkParams<float> build_frozen_network(int input_h, int input_w, int penultimate_width,
                                          uint64_t seed) {
  NetworkSpec spec;
  spec.input_h = input_h;
  spec.input_w = input_w;
  spec.conv_filters = {8, 16, 32};
  spec.fc_widths = {penultimate_width};
  spec.seed = seed;
  return build_network<float>(spec);
}

// --- Checkpoint format ---------------------------------------------------
// magic "SEPX" | uint32 LE header length | UTF-8 JSON header | float32 LE
// tensor payload (weights then biases per layer, declaration order).

namespace {

constexpr char kMagic[4] = {'S', 'E', 'P', 'X'};

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_f32_le(std::ostream& out, const float* data, size_t count) {
  // Little-endian hosts write the buffer directly.
  static_assert(sizeof(float) == 4);
  for (size_t i = 0; i < count; ++i) {
    uint32_t bits;
    std::memcpy(&bits, &data[i], 4);
    write_u32(out, bits);
  }
}

void read_f32_le(std::istream& in, float* data, size_t count) {
  for (size_t i = 0; i < count; ++i) {
    const uint32_t bits = read_u32(in);
    std::memcpy(&data[i], &bits, 4);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const NetworkParams<float>& params, int epoch) {
  nlohmann::ordered_json header;
  header["spec"] = {{"input_h", params.spec.input_h},
                    {"input_w", params.spec.input_w},
                    {"conv_filters", params.spec.conv_filters},
                    {"fc_widths", params.spec.fc_widths},
                    {"outputs", params.spec.outputs}};
  header["seed"] = params.spec.seed;
  header["epoch"] = epoch;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  write_u32(out, static_cast<uint32_t>(header_str.size()));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (size_t i = 0; i < params.weights.size(); ++i) {
    write_f32_le(out, params.weights[i].data(), static_cast<size_t>(params.weights[i].size()));
    write_f32_le(out, params.biases[i].data(), static_cast<size_t>(params.biases[i].size()));
  }
  if (!out) throw ValidationError("write failed for checkpoint: " + path);
}

NetworkParams<float> load_checkpoint(const std::string& path, int* epoch) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingDependencyError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw ValidationError("checkpoint " + path + ": bad magic");
  }
  const uint32_t header_len = read_u32(in);
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), header_len);
  if (!in) throw ValidationError("checkpoint " + path + ": truncated header");
  const nlohmann::json header = nlohmann::json::parse(header_str);

  NetworkSpec spec;
  spec.input_h = header.at("spec").at("input_h").get<int>();
  spec.input_w = header.at("spec").at("input_w").get<int>();
  spec.conv_filters = header.at("spec").at("conv_filters").get<std::vector<int>>();
  spec.fc_widths = header.at("spec").at("fc_widths").get<std::vector<int>>();
  spec.outputs = header.at("spec").at("outputs").get<int>();
  spec.seed = header.at("seed").get<uint64_t>();
  if (epoch) *epoch = header.at("epoch").get<int>();

  NetworkParams<float> params = build_network<float>(spec);
  for (size_t i = 0; i < params.weights.size(); ++i) {
    read_f32_le(in, params.weights[i].data(), static_cast<size_t>(params.weights[i].size()));
    read_f32_le(in, params.biases[i].data(), static_cast<size_t>(params.biases[i].size()));
    params.vel_w[i].setZero();
    params.vel_b[i].setZero();
  }
  if (!in) throw ValidationError("checkpoint " + path + ": truncated tensor payload");
  return params;
}

void write_training_log(const std::string& path, const std::vector<EpochStats>& log) {
  CsvTable table;
  table.header = {"epoch", "loss", "acc_assets", "acc_expenditure", "acc_income", "split"};
  for (const auto& e : log) {
    table.rows.push_back({std::to_string(e.epoch), format_double(e.train_loss),
                          format_double(e.train_acc[0]), format_double(e.train_acc[1]),
                          format_double(e.train_acc[2]), "train"});
    table.rows.push_back({std::to_string(e.epoch), format_double(e.test_loss),
                          format_double(e.test_acc[0]), format_double(e.test_acc[1]),
                          format_double(e.test_acc[2]), "test"});
  }
  write_csv(path, table);
}

}  // namespace sep
