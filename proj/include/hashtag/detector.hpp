#pragma once

// Online integrity checking: recompute checkpoint hashes, compare against the
// bundle, gate inference on the verdict, and score detection over attack
// rounds.

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hashtag/attack.hpp"
#include "hashtag/signature.hpp"
#include "hashtag/tensor_net.hpp"

namespace hashtag::detector {

enum class Verdict { Clean, Compromised };

struct VerificationResult {
  Verdict verdict = Verdict::Clean;
  std::vector<int> mismatched_layers;
  std::vector<int> checked_layers;
  std::chrono::nanoseconds elapsed{0};

  bool compromised() const { return verdict == Verdict::Compromised; }
};

// Throws StructuralMismatch when the bundle names a layer the model does not
// have or a layer whose element count differs.
VerificationResult verify(const net::QuantizedModel& model,
                          const signature::SignatureBundle& bundle);

struct GuardedOutput {
  std::optional<net::ForwardResult> output;  // empty when the alarm fired
  VerificationResult verification;

  bool alarm() const { return verification.compromised(); }
};

// Verification completes before any logits are released.
GuardedOutput guarded_infer(const net::QuantizedModel& model,
                            const signature::SignatureBundle& bundle,
                            const net::Dataset& batch);

struct RoundOutcome {
  std::uint64_t seed = 0;
  std::vector<int> checkpoints;
  bool benign_alarm = false;
  bool attacked = false;   // the attack committed at least one flip
  bool detected = false;
  std::size_t flips = 0;
  std::size_t flips_in_checkpoints = 0;
  attack::AttackTrace trace;
};

struct EvalSummary {
  // Empty when no round was attacked: the rate is not applicable.
  std::optional<double> detection_rate;
  double false_positive_rate = 0.0;
  int rounds = 0;
  int k = 0;
  std::size_t attacked_rounds = 0;
  std::size_t detected_rounds = 0;
  std::size_t benign_checks = 0;
  std::size_t false_alarms = 0;
  double mean_flips = 0.0;
  // Share of individual flips landing in a checkpoint layer. Comparison-only
  // accounting; the round verdict is what detection_rate measures.
  double flips_in_checkpoints_fraction = 0.0;
  std::vector<RoundOutcome> per_round;
};

struct EvalHooks {
  std::function<net::QuantizedModel(std::uint64_t round_seed)> model_factory;
  std::function<signature::SignatureBundle(const net::QuantizedModel&, int k,
                                           std::uint64_t round_seed)>
      bundle_builder;
  std::function<attack::AttackTrace(const net::QuantizedModel&,
                                    std::uint64_t round_seed)>
      attack_runner;
};

EvalSummary evaluate(const EvalHooks& hooks, int k,
                     std::span<const std::uint64_t> round_seeds);

// Bundle builder that picks the top-k layers by Taylor sensitivity on
// `validation` and derives per-round secrets from master_secret.
std::function<signature::SignatureBundle(const net::QuantizedModel&, int,
                                         std::uint64_t)>
sensitivity_bundle_builder(net::Dataset validation, std::uint64_t master_secret,
                           int width_units);

struct OverheadReport {
  std::size_t signature_bytes = 0;
  std::size_t checkpoints = 0;
  std::size_t hashed_elements = 0;
  double hash_seconds = 0.0;       // median verify time
  double inference_seconds = 0.0;  // median forward time
  double ratio = 0.0;              // hash / inference
  int repetitions = 0;
};

OverheadReport overhead_report(const net::QuantizedModel& model,
                               const signature::SignatureBundle& bundle,
                               const net::Dataset& batch, int repetitions = 15);

std::string summary_json(const EvalSummary& summary,
                         const attack::AttackStats& stats);
std::string summary_table(const EvalSummary& summary,
                          const attack::AttackStats& stats);

}  // namespace hashtag::detector
