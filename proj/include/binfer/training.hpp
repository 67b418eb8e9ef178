#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "binfer/data.hpp"
#include "binfer/graph.hpp"
#include "binfer/model.hpp"

namespace binfer {

struct TrainConfig {
  double lambda_c = 0.0;   // composite-likelihood weight
  int warmup_epochs = 20;  // plain joint-NLL epochs
  int train_epochs = 0;    // composite epochs
  int inner_iters = 0;     // gradient steps per inner-loop inference
  double rho = 1e-2;       // outer Adam learning rate
  double gamma = 0.05;     // inner Adam step size on target values
  std::size_t batch_size = 32;
  // Subsets for the composite terms; empty means the prefixes
  // {v1}, {v1,v2}, ..., {v1..vN-1}.
  std::vector<std::vector<std::size_t>> cl_subsets;
  std::uint64_t seed = 0;

  void validate(std::size_t n_vars) const;
  std::vector<std::vector<std::size_t>> effective_subsets(std::size_t n_vars) const;
};

struct TrainReport {
  std::vector<double> epoch_joint_nll;        // train mean per epoch
  std::vector<double> epoch_val_nll;          // validation mean per epoch
  std::vector<std::vector<double>> epoch_cl;  // per epoch, one entry per subset
  std::vector<std::int64_t> epoch_inner_steps;
  std::size_t inner_resets = 0;  // non-finite inner iterates reset to init
  double wall_seconds = 0.0;
};

void write_report_jsonl(const TrainReport& report, const std::filesystem::path& path);

// Minibatch Adam on the joint NLL for `epochs` epochs (warmup_epochs when
// `epochs` is negative). Ignores lambda_c, inner_iters and cl_subsets.
TrainReport warmup_train(BinModel& model, const Dataset& data,
                         const TrainConfig& cfg, int epochs = -1);

// Full composite training: warmup, then train_epochs of inner-loop inference
// per subset followed by one outer step on
//   L_all = L(V|X) + lambda_c * sum_j [ L(Vhat_Sj, V_-Sj | X) - Lm(V_-Sj | X) ]
// where Lm is the moment-propagated marginal NLL and the Vhat are treated as
// constants for the outer gradient.
TrainReport cbin_train(BinModel& model, const Dataset& data, const TrainConfig& cfg);

// Inner-loop inference for one subset over the given sample rows: greedy
// initialization, then inner_iters Adam steps on the substituted joint NLL.
// Returns the final iterates (last, not best), one vector per row, aligned
// with `subset`.
std::vector<std::vector<double>> inner_loop_infer(
    const BinModel& model, const Dataset& data,
    std::span<const std::size_t> rows, std::span<const std::size_t> subset,
    const TrainConfig& cfg);

// Moment-propagated NLL of the variables outside `subset` with the subset
// marginalized out. `subset` must be a topological prefix {0..j-1}. For
// affine subnetworks the propagation also carries the covariances among
// marginalized variables and the resulting moments are exact for
// linear-Gaussian chains; deeper subnetworks fall back to diagonal moment
// propagation.
double marginal_nll(const BinModel& model, std::span<const double> x,
                    std::span<const double> values,
                    std::span<const std::size_t> subset);

struct MarginalEval {
  double nll = 0.0;
  std::vector<std::size_t> observed;      // variables outside the subset
  std::vector<ScalarMoments> moments;     // propagated, aligned with observed
  std::vector<ScalarMoments> marginals;   // propagated, aligned with subset
};

MarginalEval eval_marginal(const BinModel& model, std::span<const double> x,
                           std::span<const double> values,
                           std::span<const std::size_t> subset);

// L_all at fixed Vhat values (vhat[j] aligned with subset j).
double composite_loss(const BinModel& model, std::span<const double> x,
                      std::span<const double> values,
                      std::span<const std::vector<double>> vhat,
                      const TrainConfig& cfg);

namespace detail {

struct SubsetProgram {
  std::vector<std::size_t> subset;
  std::vector<NodeId> vhat_leaves;
  std::vector<SubnetOutput> moments;  // per variable, substituted inputs
  NodeId term_root = kInvalidNode;    // L(Vhat_Sj, V_-Sj | X)
  NodeId marginal_root = kInvalidNode;
  std::size_t ctx_begin = 0;  // node range of the substituted-term context
  std::size_t ctx_end = 0;
};

// One tape holding the base joint, every subset context and the total loss.
class CompositeProgram {
 public:
  CompositeProgram(const BinModel& model, const TrainConfig& cfg);

  ModelGraph& base() { return base_; }
  NodeId total_root() const { return total_root_; }
  NodeId joint_root() const { return base_.joint_root(); }
  std::size_t num_subsets() const { return subsets_.size(); }
  const SubsetProgram& subset(std::size_t j) const { return subsets_[j]; }

  void set_sample(std::span<const double> x, std::span<const double> v);
  // Greedy init + inner_iters Adam steps for subset j; returns steps taken.
  int run_inner_loop(std::size_t j, int inner_iters, double gamma);
  void set_vhat(std::size_t j, std::span<const double> values);
  std::vector<double> vhat(std::size_t j) const;
  double subset_term(std::size_t j) const;      // term - marginal, evaluated
  std::size_t inner_resets() const { return inner_resets_; }
  std::size_t base_node_count() const { return base_end_; }

 private:
  ModelGraph base_;
  std::vector<SubsetProgram> subsets_;
  NodeId total_root_ = kInvalidNode;
  std::size_t base_end_ = 0;
  std::size_t inner_resets_ = 0;
};

struct MarginalNodes {
  NodeId root = kInvalidNode;
  std::vector<std::size_t> observed;
  std::vector<SubnetOutput> observed_moments;
  std::vector<SubnetOutput> subset_moments;
};

MarginalNodes emit_marginal(ModelGraph& graph, std::span<const std::size_t> subset);

}  // namespace detail

}  // namespace binfer
