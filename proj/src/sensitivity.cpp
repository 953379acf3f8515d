#include "hashtag/sensitivity.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <numeric>

#include <json.hpp>

#include "hashtag/error.hpp"

namespace hashtag::sensitivity {

double layer_score(std::vector<double> element_scores) {
  if (element_scores.empty()) return 0.0;
  const std::size_t top = std::min(kTopElementsPerLayer, element_scores.size());
  std::partial_sort(element_scores.begin(), element_scores.begin() + top,
                    element_scores.end(), std::greater<>());
  double sum = 0.0;
  for (std::size_t i = 0; i < top; ++i) sum += element_scores[i];
  return sum / static_cast<double>(top);
}

SensitivityReport make_report(std::vector<std::vector<double>> per_element) {
  SensitivityReport r;
  r.per_element = std::move(per_element);
  for (const auto& e : r.per_element) r.per_layer.push_back(layer_score(e));
  r.ranking.resize(r.per_layer.size());
  std::iota(r.ranking.begin(), r.ranking.end(), 0);
  std::stable_sort(r.ranking.begin(), r.ranking.end(), [&](int a, int b) {
    return r.per_layer[static_cast<std::size_t>(a)] >
           r.per_layer[static_cast<std::size_t>(b)];
  });
  const double total = std::accumulate(r.per_layer.begin(), r.per_layer.end(), 0.0);
  for (double s : r.per_layer) r.normalized.push_back(total > 0.0 ? s / total : 0.0);
  return r;
}

SensitivityReport taylor_sensitivity(const net::QuantizedModel& model,
                                     const net::Dataset& validation) {
  if (validation.size() == 0) throw Error("sensitivity: empty validation set");
  const auto grads = net::backward(model, validation);
  std::vector<std::vector<double>> scores(model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    scores[l].resize(layer.element_count());
    for (std::size_t i = 0; i < layer.element_count(); ++i) {
      const double delta = 2.0 * layer.weight(i) * grads.weights[l][i];
      scores[l][i] = delta * delta;
    }
  }
  return make_report(std::move(scores));
}

double exact_sensitivity(const net::QuantizedModel& model,
                         const net::Dataset& validation, int layer,
                         std::size_t element) {
  if (layer < 0 || layer >= static_cast<int>(model.layers.size())) {
    throw Error("sensitivity: layer " + std::to_string(layer) + " out of range");
  }
  const auto& src = model.layers[static_cast<std::size_t>(layer)];
  if (element >= src.element_count()) {
    throw Error("sensitivity: element " + std::to_string(element) + " out of range");
  }
  const int q = src.weight_q[element];
  const int negated = std::clamp(-q, src.min_q(), src.max_q());
  if (negated == q) return 0.0;
  net::RealNetwork real = net::dequantize(model);
  const double before = net::forward(real, validation).loss;
  real[static_cast<std::size_t>(layer)].weight[element] = src.scale * negated;
  const double after = net::forward(real, validation).loss;
  return (before - after) * (before - after);
}

std::vector<int> select_checkpoints(const SensitivityReport& report, int k) {
  if (k < 1 || k > static_cast<int>(report.ranking.size())) {
    throw Error("checkpoint count " + std::to_string(k) + " outside [1, " +
                std::to_string(report.ranking.size()) + "]");
  }
  return {report.ranking.begin(), report.ranking.begin() + k};
}

std::string format_report(const SensitivityReport& report) {
  std::vector<int> rank_of(report.per_layer.size());
  for (std::size_t i = 0; i < report.ranking.size(); ++i) {
    rank_of[static_cast<std::size_t>(report.ranking[i])] = static_cast<int>(i) + 1;
  }
  std::string out = "layer        score   normalized  rank\n";
  char line[96];
  for (std::size_t l = 0; l < report.per_layer.size(); ++l) {
    std::snprintf(line, sizeof line, "%5zu  %11.4e  %11.6f  %4d\n", l,
                  report.per_layer[l], report.normalized[l], rank_of[l]);
    out += line;
  }
  return out;
}

std::string report_json(const SensitivityReport& report) {
  nlohmann::json j;
  j["per_layer"] = report.per_layer;
  j["normalized"] = report.normalized;
  j["ranking"] = report.ranking;
  j["top_elements_per_layer"] = kTopElementsPerLayer;
  return j.dump(2) + "\n";
}

SensitivityReport report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    SensitivityReport r;
    r.per_layer = j.at("per_layer").get<std::vector<double>>();
    r.normalized = j.at("normalized").get<std::vector<double>>();
    r.ranking = j.at("ranking").get<std::vector<int>>();
    std::vector<int> sorted = r.ranking;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (sorted[i] != static_cast<int>(i)) throw Error("ranking is not a permutation");
    }
    if (r.per_layer.size() != r.ranking.size() || r.normalized.size() != r.ranking.size()) {
      throw Error("inconsistent layer counts");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("sensitivity report: ") + e.what());
  } catch (const Error& e) {
    throw FormatError(std::string("sensitivity report: ") + e.what());
  }
}

}  // namespace hashtag::sensitivity
