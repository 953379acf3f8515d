#pragma once

// Layer vulnerability scoring. Negating a parameter p changes the loss by
// about 2 p dL/dp (first-order Taylor), so each element is scored
// (2 p g)^2 from a single backward pass; a layer scores the mean of its five
// largest element scores.

#include <cstddef>
#include <string>
#include <vector>

#include "hashtag/tensor_net.hpp"

namespace hashtag::sensitivity {

inline constexpr std::size_t kTopElementsPerLayer = 5;

struct SensitivityReport {
  std::vector<std::vector<double>> per_element;
  std::vector<double> per_layer;
  std::vector<int> ranking;       // most sensitive first; ties by lower index
  std::vector<double> normalized; // per_layer scaled to sum to 1 (all 0 if sum is 0)
};

// Mean of the min(5, n) largest scores.
double layer_score(std::vector<double> element_scores);

// Assembles per_layer / ranking / normalized from element scores.
SensitivityReport make_report(std::vector<std::vector<double>> per_element);

SensitivityReport taylor_sensitivity(const net::QuantizedModel& model,
                                     const net::Dataset& validation);

// Squared loss change when quantized weight q becomes clamp(-q).
double exact_sensitivity(const net::QuantizedModel& model,
                         const net::Dataset& validation, int layer,
                         std::size_t element);

std::vector<int> select_checkpoints(const SensitivityReport& report, int k);

// Fixed-width table: layer, score, normalized, rank.
std::string format_report(const SensitivityReport& report);
// Machine-readable JSON record.
std::string report_json(const SensitivityReport& report);
SensitivityReport report_from_json(const std::string& text);

}  // namespace hashtag::sensitivity
