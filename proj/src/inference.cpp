#include "binfer/inference.hpp"

#include <algorithm>
#include <cmath>

#include "binfer/rng.hpp"

namespace binfer {

void InferenceOptions::validate() const {
  if (max_iters < 1) throw Error("inference: max_iters must be >= 1");
  if (!(lr > 0.0)) throw Error("inference: lr must be positive");
  if (!(rel_tol >= 0.0)) throw Error("inference: rel_tol must be non-negative");
}

InferenceEngine::InferenceEngine(const BinModel& model)
    : model_(model), graph_(model) {}

bool InferenceEngine::ancestrally_closed(const BinModel& model,
                                         const Assignment& observed) {
  for (std::size_t n = 0; n < model.num_vars(); ++n) {
    if (!observed.observed[n]) continue;
    for (const std::size_t p : model.variables[n].parents) {
      if (!observed.observed[p]) return false;
    }
  }
  return true;
}

InferenceMode InferenceEngine::select_mode(const BinModel& model,
                                           const Assignment& observed) {
  if (ancestrally_closed(model, observed)) return InferenceMode::kForward;
  if (!observed.observed[model.num_vars() - 1]) return InferenceMode::kHybrid;
  return InferenceMode::kGeneral;
}

std::vector<std::size_t> InferenceEngine::target_list(
    const Assignment& observed) const {
  std::vector<std::size_t> targets;
  for (std::size_t n = 0; n < model_.num_vars(); ++n) {
    if (!observed.observed[n]) targets.push_back(n);
  }
  return targets;
}

void InferenceEngine::sweep_init(const Assignment& observed,
                                 std::vector<double>& values) {
  for (std::size_t n = 0; n < model_.num_vars(); ++n) {
    graph_.set_value(n, values[n]);
  }
  for (std::size_t n = 0; n < model_.num_vars(); ++n) {
    if (observed.observed[n]) continue;
    graph_.tape().forward();
    values[n] = graph_.tape().value(graph_.moments(n).mean);
    graph_.set_value(n, values[n]);
  }
}

Assignment InferenceEngine::init_targets(std::span<const double> x,
                                         const Assignment& observed) {
  if (observed.values.size() != model_.num_vars()) {
    throw Error("init_targets: assignment size mismatch");
  }
  graph_.set_features(x);
  std::vector<double> values = observed.values;
  sweep_init(observed, values);
  Assignment out = observed;
  out.values = std::move(values);
  return out;
}

InferenceResult InferenceEngine::run_descent(
    std::span<const double> x, const Assignment& observed,
    std::span<const std::size_t> targets, std::vector<double>& values,
    NodeId root, const InferenceOptions& opts) {
  graph_.set_features(x);
  for (std::size_t n = 0; n < model_.num_vars(); ++n) {
    graph_.set_value(n, values[n]);
  }
  graph_.tape().forward();
  double loss = graph_.tape().value(root);
  if (!std::isfinite(loss)) {
    throw Error("inference: non-finite loss at initialization");
  }

  InferenceResult result;
  result.targets.assign(targets.begin(), targets.end());
  double best = loss;
  std::vector<double> best_values(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    best_values[t] = values[targets[t]];
  }

  AdamState adam(targets.size());
  std::vector<double> grads(targets.size());
  std::vector<double> point(best_values);
  std::vector<double> best_history;
  best_history.reserve(static_cast<std::size_t>(opts.max_iters) + 1);
  best_history.push_back(best);

  // When the best loss plateaus over a 10-iteration window, restart from the
  // best point with a halved step and fresh optimizer state; after
  // kMaxHalvings plateaus the run stops as converged.
  constexpr int kWindow = 10;
  constexpr int kMaxHalvings = 8;
  double lr = opts.lr;
  int halvings = 0;
  int next_check = kWindow;

  int iters = 0;
  bool converged = false;
  for (int it = 1; it <= opts.max_iters; ++it) {
    graph_.tape().backward(root);
    for (std::size_t t = 0; t < targets.size(); ++t) {
      grads[t] = graph_.value_grad(targets[t]);
    }
    if (!adam_step(adam, point, grads, lr)) break;
    for (std::size_t t = 0; t < targets.size(); ++t) {
      graph_.set_value(targets[t], point[t]);
    }
    graph_.tape().forward();
    loss = graph_.tape().value(root);
    iters = it;
    if (std::isfinite(loss) && loss < best) {
      best = loss;
      best_values = point;
    }
    best_history.push_back(best);
    if (it >= next_check) {
      const double prev = best_history[static_cast<std::size_t>(it - kWindow)];
      const double denom = std::max(std::abs(prev), 1e-12);
      if ((prev - best) / denom < opts.rel_tol) {
        if (halvings >= kMaxHalvings) {
          converged = true;
          break;
        }
        lr *= 0.5;
        ++halvings;
        point = best_values;
        adam = AdamState(targets.size());
        for (std::size_t t = 0; t < targets.size(); ++t) {
          graph_.set_value(targets[t], point[t]);
        }
        graph_.tape().forward();
        next_check = it + kWindow;
      }
    }
  }

  for (std::size_t t = 0; t < targets.size(); ++t) {
    values[targets[t]] = best_values[t];
    graph_.set_value(targets[t], best_values[t]);
  }
  result.estimates = std::move(best_values);
  result.final_loss = best;
  result.iterations_used = iters;
  result.converged = converged;
  return result;
}

InferenceResult InferenceEngine::general_infer(std::span<const double> x,
                                               const Assignment& observed,
                                               const InferenceOptions& opts) {
  opts.validate();
  const std::vector<std::size_t> targets = target_list(observed);
  if (targets.empty()) throw Error("general_infer: no target variables");
  for (std::size_t n = 0; n < model_.num_vars(); ++n) {
    if (observed.observed[n] && !std::isfinite(observed.values[n])) {
      throw Error("general_infer: observed values must be finite");
    }
  }

  graph_.set_features(x);
  std::vector<double> values = observed.values;
  switch (opts.init) {
    case InitMode::kFeedforward:
      sweep_init(observed, values);
      break;
    case InitMode::kRandom: {
      Rng rng(opts.seed);
      for (const std::size_t n : targets) values[n] = rng.normal();
      break;
    }
    case InitMode::kGiven:
      if (opts.given.size() != targets.size()) {
        throw Error("general_infer: given initialization size mismatch");
      }
      for (std::size_t t = 0; t < targets.size(); ++t) {
        values[targets[t]] = opts.given[t];
      }
      break;
  }
  return run_descent(x, observed, targets, values, graph_.joint_root(), opts);
}

InferenceResult InferenceEngine::forward_predict(std::span<const double> x,
                                                 const Assignment& observed) {
  if (!ancestrally_closed(model_, observed)) {
    throw Error(
        "forward_predict: observed set is not ancestrally closed; use hybrid "
        "or general inference");
  }
  const std::vector<std::size_t> targets = target_list(observed);
  graph_.set_features(x);
  std::vector<double> values = observed.values;
  sweep_init(observed, values);

  InferenceResult result;
  result.targets = targets;
  result.estimates.reserve(targets.size());
  for (const std::size_t n : targets) result.estimates.push_back(values[n]);
  graph_.tape().forward();
  result.final_loss = graph_.tape().value(graph_.joint_root());
  result.iterations_used = 0;
  result.converged = true;
  return result;
}

InferenceResult InferenceEngine::hybrid_infer(std::span<const double> x,
                                              const Assignment& observed,
                                              const InferenceOptions& opts) {
  const std::size_t N = model_.num_vars();
  if (observed.observed[N - 1]) {
    throw Error("hybrid_infer: the last variable must be unobserved");
  }
  std::size_t q = N;  // N means "nothing observed"
  for (std::size_t n = N; n-- > 0;) {
    if (observed.observed[n]) {
      q = n;
      break;
    }
  }
  std::vector<std::size_t> backward_targets;
  if (q != N) {
    for (std::size_t n = 0; n < q; ++n) {
      if (!observed.observed[n]) backward_targets.push_back(n);
    }
  }
  if (backward_targets.empty()) {
    return forward_predict(x, observed);
  }

  graph_.set_features(x);
  std::vector<double> values = observed.values;
  sweep_init(observed, values);

  // Refine the targets before q against the NLL terms up to and including q;
  // later terms involve only variables the forward sweep fills afterwards.
  InferenceResult backward_part =
      run_descent(x, observed, backward_targets, values,
                  graph_.prefix_root(q + 1), opts);

  for (std::size_t n = q + 1; n < N; ++n) {
    if (observed.observed[n]) continue;
    graph_.tape().forward();
    values[n] = graph_.tape().value(graph_.moments(n).mean);
    graph_.set_value(n, values[n]);
  }

  InferenceResult result;
  result.targets = target_list(observed);
  result.estimates.reserve(result.targets.size());
  for (const std::size_t n : result.targets) result.estimates.push_back(values[n]);
  graph_.tape().forward();
  result.final_loss = graph_.tape().value(graph_.joint_root());
  result.iterations_used = backward_part.iterations_used;
  result.converged = backward_part.converged;
  return result;
}

InferenceResult InferenceEngine::infer(std::span<const double> x,
                                       const Assignment& observed,
                                       const InferenceOptions& opts,
                                       InferenceMode mode) {
  switch (mode) {
    case InferenceMode::kForward:
      return forward_predict(x, observed);
    case InferenceMode::kHybrid:
      return hybrid_infer(x, observed, opts);
    case InferenceMode::kGeneral:
      return general_infer(x, observed, opts);
  }
  throw Error("infer: unknown mode");
}

double InferenceEngine::loss_at(std::span<const double> x,
                                std::span<const double> values) {
  graph_.set_features(x);
  graph_.set_values(values);
  graph_.tape().forward();
  return graph_.tape().value(graph_.joint_root());
}

}  // namespace binfer
