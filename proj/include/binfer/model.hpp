#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "binfer/npn.hpp"

namespace binfer {

enum class VarKind { kContinuous, kBinary };

// One variable of the factorized joint. Parent indices refer to earlier
// variables in declaration order, which is the topological order; the full
// chain is the special case parents(n) = {0..n-1}.
struct VariableSpec {
  std::string name;
  VarKind kind = VarKind::kContinuous;
  std::vector<std::size_t> parents;
};

// Values plus an observed mask over the N variables of a model.
struct Assignment {
  std::vector<double> values;
  std::vector<bool> observed;

  static Assignment empty(std::size_t n) {
    return Assignment{std::vector<double>(n, 0.0), std::vector<bool>(n, false)};
  }
  void set(std::size_t i, double v) {
    values[i] = v;
    observed[i] = true;
  }
  std::size_t count_observed() const {
    std::size_t c = 0;
    for (const bool b : observed) c += b ? 1 : 0;
    return c;
  }
};

// Per-column affine maps between raw data units and the standardized units
// the model computes in. Empty vectors mean the identity.
struct Scaler {
  std::vector<double> x_mean, x_std;
  std::vector<double> v_mean, v_std;

  bool empty() const { return x_mean.empty() && v_mean.empty(); }
};

// A conditional model p(V | X) factorized over `variables`, one subnetwork
// per variable. Subnetwork n conditions on the X features followed by the
// parent values in parent-list order.
struct BinModel {
  std::size_t feature_dim = 0;
  std::vector<VariableSpec> variables;
  std::vector<NpnSubnetwork> subnets;
  Scaler scaler;
  std::string meta;  // free-form provenance (config hash, hyperparameters)

  std::size_t num_vars() const { return variables.size(); }
  std::size_t param_count() const;
  void validate() const;
};

// Chain-factorized model with identical hidden architecture per subnetwork.
BinModel make_chain_model(std::size_t feature_dim,
                          std::span<const std::string> names,
                          std::span<const VarKind> kinds,
                          std::span<const std::size_t> hidden_widths, Rng& rng);

// General factorization: specs carry explicit parent sets.
BinModel make_model(std::size_t feature_dim, std::vector<VariableSpec> specs,
                    std::span<const std::size_t> hidden_widths, Rng& rng);

// Assemble subnetwork n's input (features then parent values) and return its
// predictive moments. All inputs enter with variance 0.
ScalarMoments conditional_moments(const BinModel& model, std::size_t n,
                                  std::span<const double> x,
                                  std::span<const double> values);

// Sum of per-variable conditional NLL terms at a full assignment.
double joint_nll(const BinModel& model, std::span<const double> x,
                 std::span<const double> values);

std::vector<double> flatten_params(const BinModel& model);
void unflatten_params(BinModel& model, std::span<const double> flat);

// Self-describing little-endian binary container. Round-trips losslessly:
// the loaded model evaluates bit-identically to the saved one.
void save_checkpoint(const BinModel& model, const std::filesystem::path& path);
BinModel load_checkpoint(const std::filesystem::path& path);

}  // namespace binfer
