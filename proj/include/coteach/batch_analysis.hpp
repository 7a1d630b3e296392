#pragma once

#include <string>

namespace coteach {

// Two readings of the residual-noise expectation:
//  Literal   - the summand max(0, k - p*k) taken as written, which reduces
//              to (1-p)*N*p and is independent of batch size as a fraction;
//  Capacity  - a per-batch discard budget of floor(p*N) items, whose
//              expected residual fraction shrinks as N grows.
enum class AnalysisMode { Literal, Capacity };

std::string analysis_mode_name(AnalysisMode mode);
AnalysisMode analysis_mode_from_name(const std::string& name);

struct BatchNoiseParams {
  int batch_size = 1;              // N (images, or effective objects)
  double noise_probability = 0;    // p
  double objects_per_image = 1.0;  // phi, metadata for per-object sweeps
  AnalysisMode mode = AnalysisMode::Capacity;
};

struct NoisyRemaining {
  double expected_count = 0;
  double expected_fraction = 0;
};

NoisyRemaining expected_noisy_remaining(const BatchNoiseParams& params);

// Per-object view of an image batch: N = round(phi * N_i), p = p_object.
BatchNoiseParams per_object_params(int images_per_batch, double p_object, double phi,
                                   AnalysisMode mode);

}  // namespace coteach
