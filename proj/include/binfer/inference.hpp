#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "binfer/graph.hpp"
#include "binfer/model.hpp"

namespace binfer {

enum class InitMode { kFeedforward, kRandom, kGiven };

struct InferenceOptions {
  int max_iters = 500;
  double lr = 0.05;
  // Stop when the best loss improved by less than rel_tol (relative) over
  // the trailing 10-iteration window.
  double rel_tol = 1e-6;
  InitMode init = InitMode::kFeedforward;
  std::uint64_t seed = 0;                 // used by random initialization
  std::vector<double> given;             // per-target values for kGiven

  void validate() const;
};

struct InferenceResult {
  std::vector<std::size_t> targets;
  std::vector<double> estimates;  // aligned with targets
  double final_loss = 0.0;
  int iterations_used = 0;
  bool converged = false;
};

enum class InferenceMode { kForward, kHybrid, kGeneral };

// Runs the three query modes against one model. Holds the compiled graph;
// create one engine per concurrent task (the model itself is shared
// read-only).
class InferenceEngine {
 public:
  explicit InferenceEngine(const BinModel& model);

  const BinModel& model() const { return model_; }

  // Topological sweep filling every unobserved variable with its conditional
  // mean given already-known inputs. Observed values are never altered.
  Assignment init_targets(std::span<const double> x, const Assignment& observed);

  // Gradient-based MAP over the target values, everything else frozen.
  // Returns the best iterate seen, so the reported loss never exceeds the
  // loss at initialization.
  InferenceResult general_infer(std::span<const double> x,
                                const Assignment& observed,
                                const InferenceOptions& opts);

  // One-pass prediction; requires the observed set to be ancestrally closed
  // (every parent of an observed variable is observed).
  InferenceResult forward_predict(std::span<const double> x,
                                  const Assignment& observed);

  // Gradient-based refinement of targets before the last observed variable,
  // then a one-pass sweep for the targets after it. Requires the final
  // variable to be unobserved.
  InferenceResult hybrid_infer(std::span<const double> x,
                               const Assignment& observed,
                               const InferenceOptions& opts);

  InferenceResult infer(std::span<const double> x, const Assignment& observed,
                        const InferenceOptions& opts, InferenceMode mode);

  static bool ancestrally_closed(const BinModel& model, const Assignment& observed);
  static InferenceMode select_mode(const BinModel& model, const Assignment& observed);

  // Joint NLL at a full assignment, evaluated on the compiled graph.
  double loss_at(std::span<const double> x, std::span<const double> values);

 private:
  const BinModel& model_;
  ModelGraph graph_;

  std::vector<std::size_t> target_list(const Assignment& observed) const;
  void sweep_init(const Assignment& observed, std::vector<double>& values);
  InferenceResult run_descent(std::span<const double> x,
                              const Assignment& observed,
                              std::span<const std::size_t> targets,
                              std::vector<double>& values, NodeId root,
                              const InferenceOptions& opts);
};

}  // namespace binfer
