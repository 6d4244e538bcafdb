#include "common.hpp"

namespace sep {

const std::array<ImageType, kNumImageTypes>& all_image_types() {
  static const std::array<ImageType, kNumImageTypes> types = {
      ImageType::kSatellite25m, ImageType::kSatellite100m, ImageType::kFrontDoor,
      ImageType::kWall,         ImageType::kStreetView,    ImageType::kRoof,
      ImageType::kFloor,        ImageType::kLightSource,   ImageType::kKitchen,
      ImageType::kStove,        ImageType::kBathroom,      ImageType::kLatrine,
      ImageType::kWaterSource,
  };
  return types;
}

ImageGroup image_group(ImageType t) {
  switch (t) {
    case ImageType::kSatellite25m:
    case ImageType::kSatellite100m:
      return ImageGroup::kSatellite;
    case ImageType::kFrontDoor:
    case ImageType::kWall:
    case ImageType::kStreetView:
      return ImageGroup::kOutdoor;
    default:
      return ImageGroup::kIndoor;
  }
}

const std::string& image_type_name(ImageType t) {
  static const std::array<std::string, kNumImageTypes> names = {
      "satellite_25m", "satellite_100m", "front_door", "wall",     "street_view",
      "roof",          "floor",          "light_source", "kitchen", "stove",
      "bathroom",      "latrine",        "water_source",
  };
  return names[static_cast<int>(t)];
}

std::optional<ImageType> image_type_from_name(const std::string& name) {
  for (ImageType t : all_image_types()) {
    if (image_type_name(t) == name) return t;
  }
  return std::nullopt;
}

std::vector<ImageType> indoor_image_types() {
  std::vector<ImageType> out;
  for (ImageType t : all_image_types()) {
    if (image_group(t) == ImageGroup::kIndoor) out.push_back(t);
  }
  return out;
}

const std::string& measure_name(Measure m) {
  static const std::array<std::string, kNumMeasures> names = {"assets", "expenditure", "income"};
  return names[static_cast<int>(m)];
}

std::optional<Measure> measure_from_name(const std::string& name) {
  for (int i = 0; i < kNumMeasures; ++i) {
    if (measure_name(static_cast<Measure>(i)) == name) return static_cast<Measure>(i);
  }
  return std::nullopt;
}

}  // namespace sep
