#include "hashtag/detector.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include <json.hpp>

#include "hashtag/error.hpp"
#include "hashtag/rng.hpp"
#include "hashtag/sensitivity.hpp"
#include "hashtag/stats.hpp"

namespace hashtag::detector {

namespace {

void check_structure(const net::QuantizedModel& model,
                     const signature::SignatureBundle& bundle) {
  if (bundle.width_units() < 1) throw StructuralMismatch("bundle has no hash width");
  for (const auto& c : bundle.checkpoints) {
    if (c.layer_index < 0 || c.layer_index >= static_cast<int>(model.layers.size())) {
      throw StructuralMismatch("bundle checkpoint layer " +
                               std::to_string(c.layer_index) +
                               " does not exist in a " +
                               std::to_string(model.layers.size()) + "-layer model");
    }
    const auto& layer = model.layers[static_cast<std::size_t>(c.layer_index)];
    if (layer.element_count() != c.element_count) {
      throw StructuralMismatch("bundle expects " + std::to_string(c.element_count) +
                               " weights in layer " + std::to_string(c.layer_index) +
                               ", model has " + std::to_string(layer.element_count()));
    }
    if (c.hash.width_units() != static_cast<std::size_t>(bundle.width_units())) {
      throw StructuralMismatch("checkpoint hash width differs from bundle width");
    }
  }
}

}  // namespace

VerificationResult verify(const net::QuantizedModel& model,
                          const signature::SignatureBundle& bundle) {
  const auto start = std::chrono::steady_clock::now();
  check_structure(model, bundle);
  VerificationResult res;
  for (const auto& c : bundle.checkpoints) {
    const auto& layer = model.layers[static_cast<std::size_t>(c.layer_index)];
    res.checked_layers.push_back(c.layer_index);
    if (signature::rehash_layer(layer, c, bundle.width_units()) != c.hash) {
      res.mismatched_layers.push_back(c.layer_index);
    }
  }
  res.verdict = res.mismatched_layers.empty() ? Verdict::Clean : Verdict::Compromised;
  res.elapsed = std::chrono::steady_clock::now() - start;
  return res;
}

GuardedOutput guarded_infer(const net::QuantizedModel& model,
                            const signature::SignatureBundle& bundle,
                            const net::Dataset& batch) {
  GuardedOutput out;
  out.verification = verify(model, bundle);
  if (!out.verification.compromised()) out.output = net::forward(model, batch);
  return out;
}

EvalSummary evaluate(const EvalHooks& hooks, int k,
                     std::span<const std::uint64_t> round_seeds) {
  if (round_seeds.empty()) throw Error("evaluate: need at least one round");
  if (!hooks.model_factory || !hooks.bundle_builder || !hooks.attack_runner) {
    throw Error("evaluate: missing hook");
  }
  EvalSummary s;
  s.rounds = static_cast<int>(round_seeds.size());
  s.k = k;
  std::size_t total_flips = 0, flips_in_cp = 0;
  for (auto seed : round_seeds) {
    RoundOutcome r;
    r.seed = seed;
    const net::QuantizedModel benign = hooks.model_factory(seed);
    const auto bundle = hooks.bundle_builder(benign, k, seed);
    for (const auto& c : bundle.checkpoints) r.checkpoints.push_back(c.layer_index);

    r.benign_alarm = verify(benign, bundle).compromised();
    ++s.benign_checks;
    if (r.benign_alarm) ++s.false_alarms;

    r.trace = hooks.attack_runner(benign, seed);
    r.flips = r.trace.flips();
    const std::set<int> cps(r.checkpoints.begin(), r.checkpoints.end());
    for (const auto& f : r.trace.records) {
      if (cps.count(f.layer)) ++r.flips_in_checkpoints;
    }
    total_flips += r.flips;
    flips_in_cp += r.flips_in_checkpoints;
    r.attacked = r.flips > 0;
    if (r.attacked) {
      ++s.attacked_rounds;
      const auto attacked = attack::apply_trace(benign, r.trace);
      r.detected = verify(attacked, bundle).compromised();
      if (r.detected) ++s.detected_rounds;
    }
    s.per_round.push_back(std::move(r));
  }
  if (s.attacked_rounds > 0) {
    s.detection_rate = static_cast<double>(s.detected_rounds) /
                       static_cast<double>(s.attacked_rounds);
  }
  s.false_positive_rate =
      static_cast<double>(s.false_alarms) / static_cast<double>(s.benign_checks);
  s.mean_flips = static_cast<double>(total_flips) / static_cast<double>(s.rounds);
  s.flips_in_checkpoints_fraction =
      total_flips ? static_cast<double>(flips_in_cp) / static_cast<double>(total_flips)
                  : 0.0;
  return s;
}

std::function<signature::SignatureBundle(const net::QuantizedModel&, int,
                                         std::uint64_t)>
sensitivity_bundle_builder(net::Dataset validation, std::uint64_t master_secret,
                           int width_units) {
  return [validation = std::move(validation), master_secret, width_units](
             const net::QuantizedModel& model, int k, std::uint64_t round_seed) {
    const auto report = sensitivity::taylor_sensitivity(model, validation);
    const auto cps = sensitivity::select_checkpoints(report, k);
    return signature::build_bundle(model, cps, mix64(master_secret ^ round_seed),
                                   width_units);
  };
}

OverheadReport overhead_report(const net::QuantizedModel& model,
                               const signature::SignatureBundle& bundle,
                               const net::Dataset& batch, int repetitions) {
  OverheadReport r;
  r.repetitions = std::max(10, repetitions);
  r.checkpoints = bundle.checkpoints.size();
  r.signature_bytes = signature::serialize_bundle(bundle).size();
  for (const auto& c : bundle.checkpoints) r.hashed_elements += c.element_count;

  std::vector<double> hash_t, infer_t;
  const auto real = net::dequantize(model);
  for (int i = 0; i < r.repetitions; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    const auto v = verify(model, bundle);
    auto t1 = std::chrono::steady_clock::now();
    const auto f = net::forward(real, batch);
    auto t2 = std::chrono::steady_clock::now();
    if (v.checked_layers.empty() && f.logits.empty()) std::abort();  // keep both live
    hash_t.push_back(std::chrono::duration<double>(t1 - t0).count());
    infer_t.push_back(std::chrono::duration<double>(t2 - t1).count());
  }
  r.hash_seconds = stats::median(hash_t);
  r.inference_seconds = stats::median(infer_t);
  r.ratio = r.inference_seconds > 0.0 ? r.hash_seconds / r.inference_seconds : 0.0;
  return r;
}

std::string summary_json(const EvalSummary& s, const attack::AttackStats& st) {
  nlohmann::json j;
  j["rounds"] = s.rounds;
  j["k"] = s.k;
  if (s.detection_rate) j["detection_rate"] = *s.detection_rate;
  else j["detection_rate"] = "n/a";
  j["false_positive_rate"] = s.false_positive_rate;
  j["attacked_rounds"] = s.attacked_rounds;
  j["detected_rounds"] = s.detected_rounds;
  j["false_alarms"] = s.false_alarms;
  j["mean_flips_per_round"] = s.mean_flips;
  j["flips_in_checkpoints_fraction_comparison_only"] = s.flips_in_checkpoints_fraction;
  j["sign_change_pct"] = st.sign_change_pct;
  j["per_layer_max_concentration"] = st.per_layer_max_concentration;
  j["per_layer_hits"] = st.per_layer_hit_counts;
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : s.per_round) {
    rounds.push_back({{"seed", r.seed},
                      {"checkpoints", r.checkpoints},
                      {"benign_alarm", r.benign_alarm},
                      {"attacked", r.attacked},
                      {"detected", r.detected},
                      {"flips", r.flips},
                      {"flips_in_checkpoints", r.flips_in_checkpoints},
                      {"terminal_accuracy", r.trace.terminal_accuracy}});
  }
  j["per_round"] = rounds;
  return j.dump(2) + "\n";
}

std::string summary_table(const EvalSummary& s, const attack::AttackStats& st) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "rounds                 %d\n", s.rounds);
  out += line;
  std::snprintf(line, sizeof line, "checkpoints (k)        %d\n", s.k);
  out += line;
  if (s.detection_rate) {
    std::snprintf(line, sizeof line, "detection rate         %.4f (%zu/%zu)\n",
                  *s.detection_rate, s.detected_rounds, s.attacked_rounds);
  } else {
    std::snprintf(line, sizeof line, "detection rate         n/a (no attacked rounds)\n");
  }
  out += line;
  std::snprintf(line, sizeof line, "false positive rate    %.4f (%zu/%zu)\n",
                s.false_positive_rate, s.false_alarms, s.benign_checks);
  out += line;
  std::snprintf(line, sizeof line, "mean flips per round   %.2f\n", s.mean_flips);
  out += line;
  std::snprintf(line, sizeof line, "sign-change share      %.4f\n", st.sign_change_pct);
  out += line;
  std::snprintf(line, sizeof line, "max hits in one layer  %.2f (mean over rounds)\n",
                st.per_layer_max_concentration);
  out += line;
  out += "per-layer hits        ";
  for (auto h : st.per_layer_hit_counts) out += " " + std::to_string(h);
  out += "\n";
  return out;
}

}  // namespace hashtag::detector
