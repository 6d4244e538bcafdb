#include "synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "parallel.hpp"

namespace sep {

SyntheticConfig SyntheticConfig::defaults() {
  SyntheticConfig config;
  config.signal = {
      {ImageType::kSatellite25m, 0.30}, {ImageType::kSatellite100m, 0.20},
      {ImageType::kFrontDoor, 0.45},    {ImageType::kWall, 0.45},
      {ImageType::kStreetView, 0.40},   {ImageType::kRoof, 0.25},
      {ImageType::kFloor, 0.25},        {ImageType::kLightSource, 1.00},
      {ImageType::kKitchen, 0.25},      {ImageType::kStove, 0.20},
      {ImageType::kBathroom, 0.20},     {ImageType::kLatrine, 0.25},
      {ImageType::kWaterSource, 0.30},
  };
  return config;
}

double SyntheticConfig::signal_for(ImageType t) const {
  auto it = signal.find(t);
  return it != signal.end() ? it->second : 0.0;
}

void SyntheticConfig::validate() const {
  if (n_households < 1) throw ValidationError("synthetic config: n_households must be >= 1");
  if (image_size < 8) throw ValidationError("synthetic config: image_size must be >= 8");
  auto check_rate = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValidationError(std::string("synthetic config: ") + name + " must be in [0, 1]");
    }
  };
  check_rate(missing_rate, "missing_rate");
  check_rate(asset_missing_rate, "asset_missing_rate");
  for (const auto& [type, s] : signal) {
    if (!(s >= 0.0 && s <= 1.0)) {
      throw ValidationError("synthetic config: signal for " + image_type_name(type) +
                            " must be in [0, 1]");
    }
  }
  if (!(raster_pixel_size > 0.0)) {
    throw ValidationError("synthetic config: raster_pixel_size must be > 0");
  }
}

double normal_cdf(double x) {
  // Abramowitz & Stegun 26.2.17; avoids libm erf so output is bit-stable.
  const double z = std::abs(x);
  const double t = 1.0 / (1.0 + 0.2316419 * z);
  const double poly =
      t * (0.319381530 +
           t * (-0.356563782 + t * (1.781477937 + t * (-1.821255978 + t * 1.330274429))));
  const double tail = std::exp(-0.5 * z * z) * 0.3989422804014327 * poly;
  return x >= 0.0 ? 1.0 - tail : tail;
}

namespace {

void add_pixel_noise(Image& img, Rng& rng, double sigma) {
  for (float& v : img.pixels) {
    v = static_cast<float>(std::clamp(static_cast<double>(v) + sigma * rng.normal(), 0.0, 1.0));
  }
}

void fill_base(Image& img, double r, double g, double b) {
  for (int row = 0; row < img.height; ++row) {
    for (int col = 0; col < img.width; ++col) {
      img.at(row, col, 0) = static_cast<float>(r);
      img.at(row, col, 1) = static_cast<float>(g);
      img.at(row, col, 2) = static_cast<float>(b);
    }
  }
}

void draw_blob(Image& img, double center_r, double center_c, double radius, double r, double g,
               double b) {
  const int lo_r = std::max(0, static_cast<int>(center_r - radius - 1));
  const int hi_r = std::min(img.height - 1, static_cast<int>(center_r + radius + 1));
  const int lo_c = std::max(0, static_cast<int>(center_c - radius - 1));
  const int hi_c = std::min(img.width - 1, static_cast<int>(center_c + radius + 1));
  for (int row = lo_r; row <= hi_r; ++row) {
    for (int col = lo_c; col <= hi_c; ++col) {
      const double d2 = (row - center_r) * (row - center_r) + (col - center_c) * (col - center_c);
      if (d2 <= radius * radius) {
        img.at(row, col, 0) = static_cast<float>(r);
        img.at(row, col, 1) = static_cast<float>(g);
        img.at(row, col, 2) = static_cast<float>(b);
      }
    }
  }
}

// Ground photo renderers. `key` in [0, 1] drives brightness bands, texture
// frequency, and object-blob presence depending on the image type.
Image render_photo(ImageType type, double key, int size, Rng& rng) {
  Image img = make_image(size, size);
  const double s = static_cast<double>(size);
  switch (type) {
    case ImageType::kLightSource: {
      // Overall illumination is the cue: bright room vs dark room.
      const double base = 0.12 + 0.72 * key;
      fill_base(img, base, base * 0.98, base * 0.9);
      const double glow_r = s * (0.10 + 0.08 * key);
      draw_blob(img, s * (0.3 + 0.2 * rng.uniform()), s * (0.3 + 0.4 * rng.uniform()), glow_r,
                0.5 + 0.5 * key, 0.5 + 0.48 * key, 0.4 + 0.4 * key);
      add_pixel_noise(img, rng, 0.03);
      break;
    }
    case ImageType::kRoof:
    case ImageType::kFloor:
    case ImageType::kWall: {
      // Material texture: stripe frequency and lightness both follow key.
      const double base = 0.22 + 0.45 * key;
      const double freq = 2.0 + 9.0 * key;
      const double phase = rng.uniform(0.0, 2.0 * M_PI);
      for (int row = 0; row < size; ++row) {
        for (int col = 0; col < size; ++col) {
          double coord = 0.0;
          if (type == ImageType::kRoof) coord = (row + col) / (2.0 * s);
          if (type == ImageType::kFloor) coord = row / s;
          if (type == ImageType::kWall) coord = col / s;
          const double v =
              std::clamp(base + 0.15 * std::sin(2.0 * M_PI * freq * coord + phase), 0.0, 1.0);
          img.at(row, col, 0) = static_cast<float>(v);
          img.at(row, col, 1) = static_cast<float>(v * 0.95);
          img.at(row, col, 2) = static_cast<float>(v * 0.85);
        }
      }
      add_pixel_noise(img, rng, 0.04);
      break;
    }
    case ImageType::kFrontDoor: {
      fill_base(img, 0.32, 0.30, 0.28);
      const double door = 0.22 + 0.6 * key;  // painted metal vs weathered wood
      const int width = static_cast<int>(s * 0.38);
      const int left = (size - width) / 2 + static_cast<int>(rng.uniform(-2.0, 2.0));
      for (int row = static_cast<int>(s * 0.15); row < size; ++row) {
        for (int col = std::max(0, left); col < std::min(size, left + width); ++col) {
          img.at(row, col, 0) = static_cast<float>(door * 0.9);
          img.at(row, col, 1) = static_cast<float>(door);
          img.at(row, col, 2) = static_cast<float>(door * 1.05);
        }
      }
      add_pixel_noise(img, rng, 0.04);
      break;
    }
    case ImageType::kStreetView: {
      // Sky, then built structures whose count follows key, then road.
      for (int row = 0; row < size; ++row) {
        const bool sky = row < size / 2;
        for (int col = 0; col < size; ++col) {
          img.at(row, col, 0) = sky ? 0.65f : 0.35f;
          img.at(row, col, 1) = sky ? 0.72f : 0.32f;
          img.at(row, col, 2) = sky ? 0.80f : 0.28f;
        }
      }
      const int buildings = static_cast<int>(1.0 + 3.99 * key);
      for (int k = 0; k < buildings; ++k) {
        draw_blob(img, s * 0.5 + rng.uniform(-4.0, 0.0), rng.uniform(0.1, 0.9) * s,
                  s * (0.05 + 0.06 * key), 0.55 + 0.3 * key, 0.53 + 0.3 * key, 0.5 + 0.3 * key);
      }
      add_pixel_noise(img, rng, 0.03);
      break;
    }
    default: {
      // Indoor items (kitchen, stove, bathroom, latrine, water source):
      // object blobs on a background whose lightness follows key.
      const double base = 0.2 + 0.28 * key;
      const bool watery = type == ImageType::kWaterSource || type == ImageType::kBathroom;
      fill_base(img, base, base * (watery ? 1.02 : 0.96), base * (watery ? 1.15 : 0.9));
      const int blobs = static_cast<int>(1.0 + 2.99 * key);
      for (int k = 0; k < blobs; ++k) {
        const double v = 0.35 + 0.55 * key;
        draw_blob(img, rng.uniform(0.2, 0.8) * s, rng.uniform(0.2, 0.8) * s,
                  s * (0.07 + 0.05 * rng.uniform()), v, v * (watery ? 1.05 : 0.97),
                  v * (watery ? 1.2 : 0.9));
      }
      add_pixel_noise(img, rng, 0.04);
      break;
    }
  }
  return img;
}

void draw_raster_rect(Raster& raster, int row0, int col0, int rows, int cols, double r, double g,
                      double b) {
  for (int row = std::max(0, row0); row < std::min(raster.height, row0 + rows); ++row) {
    for (int col = std::max(0, col0); col < std::min(raster.width, col0 + cols); ++col) {
      raster.at(row, col, 0) = r;
      raster.at(row, col, 1) = g;
      raster.at(row, col, 2) = b;
    }
  }
}

std::string household_id(size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "hh%05zu", index + 1);
  return buf;
}

}  // namespace

SyntheticCohort generate_synthetic_cohort(const SyntheticConfig& config, uint64_t seed) {
  config.validate();
  const size_t n = config.n_households;
  const AssetSchema& schema = bundled_asset_schema();

  SyntheticCohort cohort;
  cohort.records.resize(n);

  // Scene layout: jittered grid, wide enough margins that every 100 m
  // window stays inside the raster.
  const size_t grid_cols = static_cast<size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  const size_t grid_rows = (n + grid_cols - 1) / grid_cols;
  const double width_m = 2.0 * config.margin_m + config.grid_pitch_m * static_cast<double>(grid_cols - 1);
  const double height_m = 2.0 * config.margin_m + config.grid_pitch_m * static_cast<double>(grid_rows - 1);
  GeoReference geo;
  geo.origin_x = 0.0;
  geo.origin_y = 0.0;
  geo.pixel_size = config.raster_pixel_size;
  const int raster_w = static_cast<int>(std::ceil(width_m / geo.pixel_size));
  const int raster_h = static_cast<int>(std::ceil(height_m / geo.pixel_size));
  cohort.raster = make_raster(raster_h, raster_w, geo);

  // Terrain: vegetation-toned noise with low-frequency undulation.
  {
    Rng bg = Rng::substream(seed, "raster-terrain");
    for (int row = 0; row < raster_h; ++row) {
      for (int col = 0; col < raster_w; ++col) {
        const double undulation = 8.0 * std::sin(row * 0.011) * std::cos(col * 0.013);
        const double base = 78.0 + undulation + bg.uniform(-10.0, 10.0);
        cohort.raster.at(row, col, 0) = std::clamp(base * 0.92, 0.0, 255.0);
        cohort.raster.at(row, col, 1) = std::clamp(base * 1.08, 0.0, 255.0);
        cohort.raster.at(row, col, 2) = std::clamp(base * 0.72, 0.0, 255.0);
      }
    }
  }

  std::vector<double> latent(n);
  for (size_t i = 0; i < n; ++i) {
    latent[i] = Rng::substream(seed, "latent", i).normal();
  }

  // Households are independent given their sub-streams; photo rendering
  // dominates the cost, so parallelize per household. The shared raster is
  // safe because household neighborhoods never overlap in write range only
  // if pitch is wide; they can overlap, so scene drawing stays sequential.
  for (size_t i = 0; i < n; ++i) {
    HouseholdRecord& rec = cohort.records[i];
    rec.id = household_id(i);
    const double z = latent[i];
    const double pz = normal_cdf(z);
    cohort.latent[rec.id] = z;

    Rng geo_rng = Rng::substream(seed, "geocode", i);
    const size_t gr = i / grid_cols, gc = i % grid_cols;
    rec.x = config.margin_m + config.grid_pitch_m * static_cast<double>(gc) +
            geo_rng.uniform(-15.0, 15.0);
    rec.y = config.margin_m + config.grid_pitch_m * static_cast<double>(gr) +
            geo_rng.uniform(-15.0, 15.0);

    // Assets: ordinal categories keyed to latent with Gaussian noise; the
    // bucket index uses the normalized score so marginals stay balanced.
    Rng asset_rng = Rng::substream(seed, "assets", i);
    const double norm =
        std::sqrt(config.asset_signal * config.asset_signal + config.asset_noise * config.asset_noise);
    for (const auto& var : schema.variables) {
      const double score = config.asset_signal * z + config.asset_noise * asset_rng.normal();
      const bool missing = asset_rng.uniform() < config.asset_missing_rate;
      if (missing) {
        rec.assets[var.name] = std::nullopt;
        continue;
      }
      const double quantile = 1.0 - normal_cdf(score / (norm > 0.0 ? norm : 1.0));
      const int k = static_cast<int>(var.categories.size());
      const int idx = std::clamp(static_cast<int>(quantile * k), 0, k - 1);
      rec.assets[var.name] = var.categories[static_cast<size_t>(idx)];
    }

    // Money: monotone lognormal transforms of latent, right-skewed.
    Rng money_rng = Rng::substream(seed, "money", i);
    const double income_total =
        std::exp(std::log(config.income_base) + config.income_latent_scale * z +
                 config.income_noise_sigma * money_rng.normal());
    const double expenditure_total =
        std::exp(std::log(config.expenditure_base) + config.expenditure_latent_scale * z +
                 config.expenditure_noise_sigma * money_rng.normal());
    auto split_total = [&](const std::vector<std::string>& sources, double total,
                           std::map<std::string, Money>& out) {
      std::vector<double> weights(sources.size());
      double sum = 0.0;
      for (size_t sidx = 0; sidx < sources.size(); ++sidx) {
        weights[sidx] = std::exp(0.6 * money_rng.normal());
        sum += weights[sidx];
      }
      for (size_t sidx = 0; sidx < sources.size(); ++sidx) {
        out[sources[sidx]] = total * weights[sidx] / sum;
      }
    };
    split_total(bundled_income_sources(), income_total, rec.income_sources);
    split_total(bundled_expenditure_sources(), expenditure_total, rec.expenditure_sources);

    // Image availability for all 13 types.
    for (ImageType t : all_image_types()) {
      Rng miss_rng = Rng::substream(seed, "image-missing",
                                    i * static_cast<size_t>(kNumImageTypes) +
                                        static_cast<size_t>(static_cast<int>(t)));
      ImageRef ref;
      ref.missing = miss_rng.uniform() < config.missing_rate;
      rec.images[t] = ref;
    }

    // Satellite scene: the inner dwelling reflects the 25 m key, the
    // surrounding ring the 100 m key.
    Rng scene_rng = Rng::substream(seed, "raster-household", i);
    const double u25 = scene_rng.uniform(), u100 = scene_rng.uniform();
    const double k25 = config.signal_for(ImageType::kSatellite25m) * pz +
                       (1.0 - config.signal_for(ImageType::kSatellite25m)) * u25;
    const double k100 = config.signal_for(ImageType::kSatellite100m) * pz +
                        (1.0 - config.signal_for(ImageType::kSatellite100m)) * u100;
    const double ps = geo.pixel_size;
    const int hh_row = static_cast<int>(rec.y / ps);
    const int hh_col = static_cast<int>(rec.x / ps);
    {
      const double main_side_m = 5.0 + 9.0 * k25;
      const int half = std::max(1, static_cast<int>(main_side_m / ps / 2.0));
      const double tone = 120.0 + 110.0 * k25;
      draw_raster_rect(cohort.raster, hh_row - half, hh_col - half, 2 * half, 2 * half, tone,
                       tone * 0.97, tone * 0.92);
      const int sheds = static_cast<int>(scene_rng.uniform(0.0, 2.0));
      for (int sidx = 0; sidx < sheds; ++sidx) {
        const int dr = static_cast<int>(scene_rng.uniform(-10.0, 10.0) / ps * 2.0);
        const int dc = static_cast<int>(scene_rng.uniform(-10.0, 10.0) / ps * 2.0);
        draw_raster_rect(cohort.raster, hh_row + dr, hh_col + dc, half, half, tone * 0.9,
                         tone * 0.88, tone * 0.85);
      }
    }
    {
      const int ring_buildings = static_cast<int>(1.0 + 6.99 * k100);
      for (int b = 0; b < ring_buildings; ++b) {
        const double angle = scene_rng.uniform(0.0, 2.0 * M_PI);
        const double radius_m = scene_rng.uniform(32.0, 90.0);
        const int row = hh_row + static_cast<int>(radius_m * std::sin(angle) / ps);
        const int col = hh_col + static_cast<int>(radius_m * std::cos(angle) / ps);
        const int side = std::max(1, static_cast<int>((3.0 + 4.0 * k100) / ps));
        const double tone = 110.0 + 90.0 * k100;
        draw_raster_rect(cohort.raster, row, col, side, side, tone, tone * 0.96, tone * 0.9);
      }
    }
  }

  // Ground photos, parallel per household.
  std::vector<std::map<ImageType, Image>> photo_slots(n);
  parallel_for(n, [&](size_t i) {
    const HouseholdRecord& rec = cohort.records[i];
    const double pz = normal_cdf(latent[i]);
    for (ImageType t : all_image_types()) {
      if (image_group(t) == ImageGroup::kSatellite) continue;
      if (rec.images.at(t).missing) continue;
      Rng photo_rng = Rng::substream(seed, "photo",
                                     i * static_cast<size_t>(kNumImageTypes) +
                                         static_cast<size_t>(static_cast<int>(t)));
      const double sig = config.signal_for(t);
      const double key = sig * pz + (1.0 - sig) * photo_rng.uniform();
      photo_slots[i][t] = render_photo(t, key, config.image_size, photo_rng);
    }
  });
  for (size_t i = 0; i < n; ++i) {
    cohort.photos[cohort.records[i].id] = std::move(photo_slots[i]);
  }
  return cohort;
}

}  // namespace sep
