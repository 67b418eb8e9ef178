#include "binfer/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include <json.hpp>

#include "binfer/rng.hpp"

namespace binfer {

void TrainConfig::validate(std::size_t n_vars) const {
  if (lambda_c < 0.0) throw Error("train: lambda_c must be non-negative");
  if (warmup_epochs < 0 || train_epochs < 0) throw Error("train: negative epoch count");
  if (inner_iters < 0) throw Error("train: inner_iters must be non-negative");
  if (!(rho > 0.0)) throw Error("train: rho must be positive");
  if (!(gamma > 0.0)) throw Error("train: gamma must be positive");
  if (batch_size < 1) throw Error("train: batch_size must be at least 1");
  for (const auto& s : cl_subsets) {
    if (s.empty() || s.size() >= n_vars) {
      throw Error("train: each composite subset must be a proper non-empty subset");
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= n_vars) throw Error("train: subset index out of range");
      if (i > 0 && s[i] <= s[i - 1]) throw Error("train: subset must be sorted and unique");
    }
  }
}

std::vector<std::vector<std::size_t>> TrainConfig::effective_subsets(
    std::size_t n_vars) const {
  if (!cl_subsets.empty()) return cl_subsets;
  std::vector<std::vector<std::size_t>> subsets;
  for (std::size_t j = 1; j < n_vars; ++j) {
    std::vector<std::size_t> s(j);
    std::iota(s.begin(), s.end(), 0);
    subsets.push_back(std::move(s));
  }
  return subsets;
}

namespace detail {

MarginalNodes emit_marginal(ModelGraph& graph, std::span<const std::size_t> subset) {
  const BinModel& model = graph.model();
  const std::size_t N = model.num_vars();
  for (std::size_t i = 0; i < subset.size(); ++i) {
    if (subset[i] != i) {
      throw Error("marginal propagation requires a topological prefix subset");
    }
  }
  if (subset.size() >= N) throw Error("marginal: subset must be a proper subset");
  const std::size_t j = subset.size();

  Tape& t = graph.tape();
  const NodeId zero = graph.zero();
  const NodeId floor = t.constant(kVarianceFloor);
  std::vector<NodeId> marg_mean(N, kInvalidNode);
  std::vector<NodeId> marg_var(N, kInvalidNode);
  std::map<std::pair<std::size_t, std::size_t>, NodeId> cov;
  auto cov_at = [&](std::size_t a, std::size_t b) -> NodeId {
    if (a > b) std::swap(a, b);
    const auto it = cov.find({a, b});
    return it == cov.end() ? kInvalidNode : it->second;
  };

  MarginalNodes out;
  std::vector<NodeId> terms;
  for (std::size_t n = 0; n < N; ++n) {
    const auto& parents = model.variables[n].parents;
    NodeMoments in;
    in.mean.reserve(model.feature_dim + parents.size());
    in.var.reserve(model.feature_dim + parents.size());
    for (std::size_t d = 0; d < model.feature_dim; ++d) {
      in.mean.push_back(graph.feature_leaf(d));
      in.var.push_back(zero);
    }
    std::vector<std::size_t> marg_parents;
    std::vector<std::size_t> marg_slots;
    for (std::size_t pi = 0; pi < parents.size(); ++pi) {
      const std::size_t p = parents[pi];
      if (p < j) {
        in.mean.push_back(marg_mean[p]);
        in.var.push_back(marg_var[p]);
        marg_parents.push_back(p);
        marg_slots.push_back(model.feature_dim + pi);
      } else {
        in.mean.push_back(graph.value_leaf(p));
        in.var.push_back(zero);
      }
    }

    SubnetOutput o = graph.emit_subnet_at(n, in);
    const bool affine = model.subnets[n].affine();

    // Cross-covariance correction: diagonal propagation misses the
    // covariances among marginalized parents. For affine subnetworks the
    // mean weights are the exact sensitivities, which restores the exact
    // variance; deeper subnetworks keep the diagonal approximation.
    if (affine && marg_parents.size() > 1) {
      const LayerNodes& head = graph.subnet_nodes(n).head;
      std::vector<NodeId> corr;
      for (std::size_t a = 0; a < marg_parents.size(); ++a) {
        for (std::size_t b = a + 1; b < marg_parents.size(); ++b) {
          const NodeId c = cov_at(marg_parents[a], marg_parents[b]);
          if (c == kInvalidNode) continue;
          corr.push_back(
              t.mul(t.mul(head.w_mean[marg_slots[a]], head.w_mean[marg_slots[b]]), c));
        }
      }
      if (!corr.empty()) {
        const NodeId s = t.sum(corr);
        const NodeId corrected = t.add(o.var, t.add(s, s));
        o.var = t.add(t.max_zero(t.sub(corrected, floor)), floor);
      }
    }

    if (n < j) {
      marg_mean[n] = o.mean;
      marg_var[n] = o.var;
      out.subset_moments.push_back(o);
      if (affine) {
        const LayerNodes& head = graph.subnet_nodes(n).head;
        for (std::size_t k = 0; k < n; ++k) {
          std::vector<NodeId> parts;
          for (std::size_t a = 0; a < marg_parents.size(); ++a) {
            const std::size_t p = marg_parents[a];
            const NodeId cpk = p == k ? marg_var[k] : cov_at(p, k);
            if (cpk == kInvalidNode) continue;
            parts.push_back(t.mul(head.w_mean[marg_slots[a]], cpk));
          }
          if (!parts.empty()) cov[{k, n}] = t.sum(parts);
        }
      }
    } else {
      out.observed.push_back(n);
      out.observed_moments.push_back(o);
      terms.push_back(graph.emit_nll_of(graph.value_leaf(n), o));
    }
  }
  out.root = terms.size() == 1 ? terms[0] : t.sum(terms);
  return out;
}

CompositeProgram::CompositeProgram(const BinModel& model, const TrainConfig& cfg)
    : base_(model) {
  const std::size_t N = model.num_vars();
  const auto subsets = cfg.effective_subsets(N);
  Tape& t = base_.tape();
  base_end_ = t.size();

  std::vector<NodeId> penalties;
  for (const auto& S : subsets) {
    SubsetProgram sp;
    sp.subset = S;
    for (std::size_t i = 0; i < S.size(); ++i) sp.vhat_leaves.push_back(t.leaf(0.0));

    std::vector<NodeId> value_of(N);
    for (std::size_t n = 0; n < N; ++n) value_of[n] = base_.value_leaf(n);
    for (std::size_t i = 0; i < S.size(); ++i) value_of[S[i]] = sp.vhat_leaves[i];

    sp.ctx_begin = t.size();
    std::vector<NodeId> terms;
    sp.moments.resize(N);
    for (std::size_t n = 0; n < N; ++n) {
      NodeMoments in;
      for (std::size_t d = 0; d < model.feature_dim; ++d) {
        in.mean.push_back(base_.feature_leaf(d));
        in.var.push_back(base_.zero());
      }
      for (const std::size_t p : model.variables[n].parents) {
        in.mean.push_back(value_of[p]);
        in.var.push_back(base_.zero());
      }
      sp.moments[n] = base_.emit_subnet_at(n, in);
      terms.push_back(base_.emit_nll_of(value_of[n], sp.moments[n]));
    }
    sp.term_root = t.sum(terms);
    sp.ctx_end = t.size();

    const MarginalNodes marg = emit_marginal(base_, S);
    sp.marginal_root = marg.root;
    penalties.push_back(t.sub(sp.term_root, sp.marginal_root));
    subsets_.push_back(std::move(sp));
  }

  if (penalties.empty()) {
    total_root_ = base_.joint_root();
  } else {
    const NodeId lambda = t.constant(cfg.lambda_c);
    total_root_ = t.add(base_.joint_root(), t.mul(lambda, t.sum(penalties)));
  }
}

void CompositeProgram::set_sample(std::span<const double> x,
                                  std::span<const double> v) {
  base_.set_features(x);
  base_.set_values(v);
  base_.tape().forward();
}

int CompositeProgram::run_inner_loop(std::size_t j, int inner_iters, double gamma) {
  SubsetProgram& sp = subsets_[j];
  Tape& t = base_.tape();

  // Greedy initialization: sweep the subset in topological order, setting
  // each entry to its conditional mean under the values filled so far.
  std::vector<double> init(sp.subset.size());
  for (std::size_t i = 0; i < sp.subset.size(); ++i) {
    t.forward_range(sp.ctx_begin, sp.ctx_end);
    init[i] = t.value(sp.moments[sp.subset[i]].mean);
    t.set_value(sp.vhat_leaves[i], init[i]);
  }
  t.forward_range(sp.ctx_begin, sp.ctx_end);

  std::vector<double> point = init;
  std::vector<double> grads(point.size());
  AdamState adam(point.size());
  int steps = 0;
  for (int it = 0; it < inner_iters; ++it) {
    t.backward_range(sp.term_root, sp.ctx_begin);
    for (std::size_t i = 0; i < point.size(); ++i) {
      grads[i] = t.adjoint(sp.vhat_leaves[i]);
    }
    bool ok = adam_step(adam, point, grads, gamma);
    if (ok) {
      for (const double v : point) {
        if (!std::isfinite(v)) {
          ok = false;
          break;
        }
      }
    }
    if (!ok) {
      ++inner_resets_;
      point = init;
      for (std::size_t i = 0; i < point.size(); ++i) {
        t.set_value(sp.vhat_leaves[i], point[i]);
      }
      t.forward_range(sp.ctx_begin, sp.ctx_end);
      break;
    }
    for (std::size_t i = 0; i < point.size(); ++i) {
      t.set_value(sp.vhat_leaves[i], point[i]);
    }
    t.forward_range(sp.ctx_begin, sp.ctx_end);
    ++steps;
  }
  return steps;
}

void CompositeProgram::set_vhat(std::size_t j, std::span<const double> values) {
  SubsetProgram& sp = subsets_[j];
  if (values.size() != sp.vhat_leaves.size()) {
    throw Error("set_vhat: size mismatch");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    base_.tape().set_value(sp.vhat_leaves[i], values[i]);
  }
}

std::vector<double> CompositeProgram::vhat(std::size_t j) const {
  const SubsetProgram& sp = subsets_[j];
  std::vector<double> out(sp.vhat_leaves.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = base_.tape().value(sp.vhat_leaves[i]);
  }
  return out;
}

double CompositeProgram::subset_term(std::size_t j) const {
  const SubsetProgram& sp = subsets_[j];
  return base_.tape().value(sp.term_root) - base_.tape().value(sp.marginal_root);
}

}  // namespace detail

namespace {

double mean_nll_over(ModelGraph& graph, const Dataset& data,
                     std::span<const std::size_t> rows, std::size_t eval_end) {
  if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (const std::size_t r : rows) {
    graph.set_features(data.x_row(r));
    graph.set_values(data.v_row(r));
    graph.tape().forward_range(0, eval_end);
    sum += graph.tape().value(graph.joint_root());
  }
  return sum / static_cast<double>(rows.size());
}

// Shared by standalone warmup and the warmup phase of composite training;
// both must consume the shuffle stream identically.
void run_plain_epochs(ModelGraph& graph, const Dataset& data,
                      const TrainConfig& cfg, int epochs,
                      std::vector<double>& flat, AdamState& adam, Rng& rng,
                      TrainReport& report) {
  std::vector<double> grads(flat.size());
  std::vector<double> accum(flat.size());
  graph.set_params(flat);
  for (int e = 0; e < epochs; ++e) {
    std::vector<std::size_t> order = data.train_idx;
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t k = std::min(cfg.batch_size, order.size() - b);
      std::fill(accum.begin(), accum.end(), 0.0);
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t r = order[b + i];
        graph.set_features(data.x_row(r));
        graph.set_values(data.v_row(r));
        graph.tape().forward();
        const double loss = graph.tape().value(graph.joint_root());
        if (!std::isfinite(loss)) {
          throw Error("training diverged: non-finite loss at epoch " +
                      std::to_string(e) + ", batch " + std::to_string(b / cfg.batch_size));
        }
        loss_sum += loss;
        ++count;
        graph.tape().backward(graph.joint_root());
        graph.param_grads(grads);
        for (std::size_t p = 0; p < accum.size(); ++p) accum[p] += grads[p];
      }
      for (double& g : accum) g /= static_cast<double>(k);
      if (!adam_step(adam, flat, accum, cfg.rho)) {
        throw Error("training diverged: non-finite gradient at epoch " +
                    std::to_string(e) + ", batch " + std::to_string(b / cfg.batch_size));
      }
      graph.set_params(flat);
    }
    report.epoch_joint_nll.push_back(loss_sum / static_cast<double>(count));
    report.epoch_val_nll.push_back(
        mean_nll_over(graph, data, data.val_idx, graph.tape().size()));
    report.epoch_cl.emplace_back();
    report.epoch_inner_steps.push_back(0);
  }
}

}  // namespace

TrainReport warmup_train(BinModel& model, const Dataset& data,
                         const TrainConfig& cfg, int epochs) {
  cfg.validate(model.num_vars());
  if (data.train_idx.empty()) throw Error("training: dataset has no training split");
  if (epochs < 0) epochs = cfg.warmup_epochs;
  const auto t0 = std::chrono::steady_clock::now();

  ModelGraph graph(model);
  std::vector<double> flat = flatten_params(model);
  AdamState adam(flat.size());
  Rng rng(cfg.seed);
  TrainReport report;
  run_plain_epochs(graph, data, cfg, epochs, flat, adam, rng, report);
  unflatten_params(model, flat);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

TrainReport cbin_train(BinModel& model, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate(model.num_vars());
  if (data.train_idx.empty()) throw Error("training: dataset has no training split");
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<double> flat = flatten_params(model);
  AdamState adam(flat.size());
  Rng rng(cfg.seed);
  TrainReport report;
  {
    ModelGraph graph(model);
    run_plain_epochs(graph, data, cfg, cfg.warmup_epochs, flat, adam, rng, report);
  }
  unflatten_params(model, flat);

  if (cfg.train_epochs > 0) {
    detail::CompositeProgram prog(model, cfg);
    prog.base().set_params(flat);
    const std::size_t J = prog.num_subsets();
    std::vector<double> grads(flat.size());
    std::vector<double> accum(flat.size());
    Tape& tape = prog.base().tape();
    for (int e = 0; e < cfg.train_epochs; ++e) {
      std::vector<std::size_t> order = data.train_idx;
      rng.shuffle(order);
      double loss_sum = 0.0;
      std::size_t count = 0;
      std::vector<double> cl_sum(J, 0.0);
      std::int64_t inner_total = 0;
      for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
        const std::size_t k = std::min(cfg.batch_size, order.size() - b);
        std::fill(accum.begin(), accum.end(), 0.0);
        for (std::size_t i = 0; i < k; ++i) {
          const std::size_t r = order[b + i];
          prog.set_sample(data.x_row(r), data.v_row(r));
          for (std::size_t j = 0; j < J; ++j) {
            inner_total += prog.run_inner_loop(j, cfg.inner_iters, cfg.gamma);
          }
          tape.forward();
          const double lall = tape.value(prog.total_root());
          if (!std::isfinite(lall)) {
            throw Error("training diverged: non-finite total loss at epoch " +
                        std::to_string(cfg.warmup_epochs + e) + ", batch " +
                        std::to_string(b / cfg.batch_size));
          }
          loss_sum += tape.value(prog.joint_root());
          ++count;
          for (std::size_t j = 0; j < J; ++j) cl_sum[j] += prog.subset_term(j);
          tape.backward(prog.total_root());
          prog.base().param_grads(grads);
          for (std::size_t p = 0; p < accum.size(); ++p) accum[p] += grads[p];
        }
        for (double& g : accum) g /= static_cast<double>(k);
        if (!adam_step(adam, flat, accum, cfg.rho)) {
          throw Error("training diverged: non-finite gradient at epoch " +
                      std::to_string(cfg.warmup_epochs + e) + ", batch " +
                      std::to_string(b / cfg.batch_size));
        }
        prog.base().set_params(flat);
      }
      report.epoch_joint_nll.push_back(loss_sum / static_cast<double>(count));
      for (std::size_t j = 0; j < J; ++j) cl_sum[j] /= static_cast<double>(count);
      report.epoch_cl.push_back(std::move(cl_sum));
      report.epoch_val_nll.push_back(
          mean_nll_over(prog.base(), data, data.val_idx, prog.base_node_count()));
      report.epoch_inner_steps.push_back(inner_total);
    }
    report.inner_resets = prog.inner_resets();
    unflatten_params(model, flat);
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

std::vector<std::vector<double>> inner_loop_infer(
    const BinModel& model, const Dataset& data,
    std::span<const std::size_t> rows, std::span<const std::size_t> subset,
    const TrainConfig& cfg) {
  TrainConfig local = cfg;
  local.cl_subsets = {std::vector<std::size_t>(subset.begin(), subset.end())};
  local.validate(model.num_vars());
  detail::CompositeProgram prog(model, local);
  std::vector<std::vector<double>> out;
  out.reserve(rows.size());
  for (const std::size_t r : rows) {
    prog.set_sample(data.x_row(r), data.v_row(r));
    prog.run_inner_loop(0, cfg.inner_iters, cfg.gamma);
    out.push_back(prog.vhat(0));
  }
  return out;
}

MarginalEval eval_marginal(const BinModel& model, std::span<const double> x,
                           std::span<const double> values,
                           std::span<const std::size_t> subset) {
  ModelGraph graph(model);
  const detail::MarginalNodes nodes = detail::emit_marginal(graph, subset);
  graph.set_features(x);
  graph.set_values(values);
  graph.tape().forward();
  MarginalEval out;
  out.nll = graph.tape().value(nodes.root);
  out.observed = nodes.observed;
  out.moments.reserve(nodes.observed_moments.size());
  for (const auto& m : nodes.observed_moments) {
    out.moments.push_back({graph.tape().value(m.mean), graph.tape().value(m.var)});
  }
  out.marginals.reserve(nodes.subset_moments.size());
  for (const auto& m : nodes.subset_moments) {
    out.marginals.push_back({graph.tape().value(m.mean), graph.tape().value(m.var)});
  }
  return out;
}

double marginal_nll(const BinModel& model, std::span<const double> x,
                    std::span<const double> values,
                    std::span<const std::size_t> subset) {
  return eval_marginal(model, x, values, subset).nll;
}

double composite_loss(const BinModel& model, std::span<const double> x,
                      std::span<const double> values,
                      std::span<const std::vector<double>> vhat,
                      const TrainConfig& cfg) {
  const auto subsets = cfg.effective_subsets(model.num_vars());
  if (vhat.size() != subsets.size()) {
    throw Error("composite_loss: one vhat vector per configured subset is required");
  }
  detail::CompositeProgram prog(model, cfg);
  prog.set_sample(x, values);
  for (std::size_t j = 0; j < vhat.size(); ++j) prog.set_vhat(j, vhat[j]);
  prog.base().tape().forward();
  return prog.base().tape().value(prog.total_root());
}

void write_report_jsonl(const TrainReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open report for writing: " + path.string());
  for (std::size_t e = 0; e < report.epoch_joint_nll.size(); ++e) {
    nlohmann::json rec;
    rec["epoch"] = e;
    rec["joint_nll"] = report.epoch_joint_nll[e];
    if (std::isfinite(report.epoch_val_nll[e])) {
      rec["val_nll"] = report.epoch_val_nll[e];
    } else {
      rec["val_nll"] = nullptr;
    }
    rec["cl_terms"] = report.epoch_cl[e];
    rec["inner_steps"] = report.epoch_inner_steps[e];
    out << rec.dump() << "\n";
  }
  nlohmann::json tail;
  tail["wall_seconds"] = report.wall_seconds;
  tail["inner_resets"] = report.inner_resets;
  out << tail.dump() << "\n";
  if (!out) throw IoError("report write failed");
}

}  // namespace binfer
