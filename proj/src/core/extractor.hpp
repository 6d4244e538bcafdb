#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "cnn.hpp"
#include "common.hpp"
#include "imagery.hpp"

namespace sep {

// Penultimate activations of one image, or a missing marker.
struct FeatureVector {
  HouseholdId id;
  ImageType type = ImageType::kSatellite25m;
  std::vector<double> values;  // empty iff missing
  bool missing = true;
};

struct TrainOptions {
  int epochs = 50;
  int batch_size = 32;
  double lr = 0.01;
  double momentum = 0.9;
  AugmentPolicy augment;
  uint64_t seed = 0;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  std::array<double, kNumMeasures> train_acc{};  // running estimate over augmented batches
  double test_loss = 0.0;
  std::array<double, kNumMeasures> test_acc{};   // evaluation pass at epoch end
};

struct LabeledImages {
  std::vector<Image> images;
  std::vector<std::array<bool, kNumMeasures>> labels;
};

struct TrainResult {
  NetworkParams<float> params;
  std::vector<EpochStats> log;
};

// Trains one per-image-type network with mini-batch SGD + momentum on the
// multi-label binary task. Deterministic given options.seed.
TrainResult train_extractor(const LabeledImages& train, const LabeledImages& test,
                            const NetworkSpec& spec, const TrainOptions& options);

// Penultimate activations with augmentation disabled.
FeatureVector extract_features(const NetworkParams<float>& params, const Image& image,
                               const HouseholdId& id, ImageType type);
FeatureVector missing_feature_vector(const HouseholdId& id, ImageType type);

// Frozen, never-trained wide network used for the off-the-shelf feature
// path; identical across runs for a given spec seed.
NetworkParams<float> build_frozen_network(int input_h, int input_w, int penultimate_width,
                                          uint64_t seed);

// Checkpoint: JSON header (spec, seed, epoch) + little-endian float32
// tensors in declaration order.
void save_checkpoint(const std::string& path, const NetworkParams<float>& params, int epoch);
NetworkParams<float> load_checkpoint(const std::string& path, int* epoch = nullptr);

// Training log CSV: epoch, loss, acc_assets, acc_expenditure, acc_income, split.
void write_training_log(const std::string& path, const std::vector<EpochStats>& log);

}  // namespace sep
