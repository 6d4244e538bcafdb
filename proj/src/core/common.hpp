#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sep {

// Error taxonomy mirrored by the C API status codes: validation problems
// (bad config, bad input data), missing upstream artifacts, and numerical
// failures discovered mid-computation.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class MissingDependencyError : public std::runtime_error {
 public:
  explicit MissingDependencyError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Money amounts are metical/month, always finite and >= 0 once validated.
using Money = double;
using HouseholdId = std::string;

enum class ImageType : int {
  kSatellite25m = 0,
  kSatellite100m,
  kFrontDoor,
  kWall,
  kStreetView,
  kRoof,
  kFloor,
  kLightSource,
  kKitchen,
  kStove,
  kBathroom,
  kLatrine,
  kWaterSource,
};

inline constexpr int kNumImageTypes = 13;

enum class ImageGroup { kSatellite, kOutdoor, kIndoor };

const std::array<ImageType, kNumImageTypes>& all_image_types();
ImageGroup image_group(ImageType t);
const std::string& image_type_name(ImageType t);
std::optional<ImageType> image_type_from_name(const std::string& name);
std::vector<ImageType> indoor_image_types();

// The three SEP measures, in the fixed order used for labels, network
// outputs, and reports.
enum class Measure : int { kAssets = 0, kExpenditure = 1, kIncome = 2 };
inline constexpr int kNumMeasures = 3;
const std::string& measure_name(Measure m);
std::optional<Measure> measure_from_name(const std::string& name);

}  // namespace sep
