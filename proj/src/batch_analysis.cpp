#include "coteach/batch_analysis.hpp"

#include <cmath>

#include "coteach/errors.hpp"

namespace coteach {

namespace {

double binomial_pmf(int n, int k, double p) {
  if (p <= 0.0) return k == 0 ? 1.0 : 0.0;
  if (p >= 1.0) return k == n ? 1.0 : 0.0;
  const double log_pmf = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                         std::lgamma(n - k + 1.0) + k * std::log(p) +
                         (n - k) * std::log1p(-p);
  return std::exp(log_pmf);
}

}  // namespace

std::string analysis_mode_name(AnalysisMode mode) {
  return mode == AnalysisMode::Literal ? "literal" : "capacity";
}

AnalysisMode analysis_mode_from_name(const std::string& name) {
  if (name == "literal") return AnalysisMode::Literal;
  if (name == "capacity") return AnalysisMode::Capacity;
  throw Error("unknown analysis mode '" + name + "'");
}

NoisyRemaining expected_noisy_remaining(const BatchNoiseParams& params) {
  const int n = params.batch_size;
  const double p = params.noise_probability;
  if (n < 1) throw Error("batch size must be at least 1");
  if (p < 0 || p > 1) throw Error("noise probability must be in [0,1]");

  NoisyRemaining result;
  double denom = 0;
  if (params.mode == AnalysisMode::Literal) {
    for (int k = 0; k <= n; ++k)
      result.expected_count += std::max(0.0, k - p * k) * binomial_pmf(n, k, p);
    denom = (1.0 - p) * n;
  } else {
    const int budget = static_cast<int>(std::floor(p * n));
    for (int k = budget + 1; k <= n; ++k)
      result.expected_count += (k - budget) * binomial_pmf(n, k, p);
    denom = n - budget;
  }
  result.expected_fraction = denom > 0 ? result.expected_count / denom : 0.0;
  return result;
}

BatchNoiseParams per_object_params(int images_per_batch, double p_object, double phi,
                                   AnalysisMode mode) {
  if (phi <= 0) throw Error("objects per image must be positive");
  BatchNoiseParams params;
  params.batch_size = std::max(1, static_cast<int>(std::llround(phi * images_per_batch)));
  params.noise_probability = p_object;
  params.objects_per_image = phi;
  params.mode = mode;
  return params;
}

}  // namespace coteach
