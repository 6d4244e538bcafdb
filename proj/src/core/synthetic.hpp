#pragma once

#include <map>

#include "dataset.hpp"
#include "imagery.hpp"

namespace sep {

// Knobs of the synthetic verification cohort. Every household carries a
// latent SEP value; assets, money amounts, ground photos, and the rendered
// satellite neighborhoods are keyed to it with configurable strength.
struct SyntheticConfig {
  size_t n_households = 975;
  int image_size = 64;
  double missing_rate = 0.03;        // per image, all 13 types
  double asset_missing_rate = 0.002;  // per asset cell

  // Per-image-type key strength in [0, 1]: 1 = the visual cue is a pure
  // monotone function of latent SEP, 0 = pure noise. Defaults plant an
  // indoor-dominant signal (light source strongest, satellite weakest).
  std::map<ImageType, double> signal;

  double asset_signal = 1.0;  // latent weight in the asset category model
  double asset_noise = 0.6;

  double income_base = 8000.0;  // metical/month scale parameters
  double income_latent_scale = 0.7;
  double income_noise_sigma = 0.5;
  double expenditure_base = 6000.0;
  double expenditure_latent_scale = 0.6;
  double expenditure_noise_sigma = 0.35;

  double raster_pixel_size = 2.0;  // meters/pixel of the synthetic scene
  double grid_pitch_m = 120.0;     // household spacing
  double margin_m = 110.0;         // scene border so 100 m windows stay inside

  static SyntheticConfig defaults();
  double signal_for(ImageType t) const;
  void validate() const;
};

struct SyntheticCohort {
  Cohort records;  // image refs carry missing flags; paths are assigned when written
  std::map<HouseholdId, double> latent;
  Raster raster;  // shared satellite scene
  // Rendered ground photos for non-missing photo entries (11 types).
  std::map<HouseholdId, std::map<ImageType, Image>> photos;
};

// Deterministic given seed; households can be generated in parallel because
// each owns derived sub-streams.
SyntheticCohort generate_synthetic_cohort(const SyntheticConfig& config, uint64_t seed);

// Deterministic standard normal CDF (no libm erf), used by the generator.
double normal_cdf(double x);

}  // namespace sep
