#include "binfer/model.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace binfer {

namespace {

constexpr char kMagic[8] = {'B', 'I', 'N', 'F', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.write(buf, sizeof(T));
  if (!out) throw IoError("checkpoint write failed");
}

template <typename T>
T read_le(std::istream& in) {
  char buf[sizeof(T)];
  in.read(buf, sizeof(T));
  if (!in) throw IoError("checkpoint read failed or file truncated");
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

void write_string(std::ostream& out, const std::string& s) {
  write_le<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!out) throw IoError("checkpoint write failed");
}

std::string read_string(std::istream& in) {
  const auto n = read_le<std::uint64_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw IoError("checkpoint read failed or file truncated");
  return s;
}

void write_doubles(std::ostream& out, const std::vector<double>& v) {
  write_le<std::uint64_t>(out, v.size());
  for (const double d : v) write_le<double>(out, d);
}

std::vector<double> read_doubles(std::istream& in) {
  const auto n = read_le<std::uint64_t>(in);
  std::vector<double> v(n);
  for (auto& d : v) d = read_le<double>(in);
  return v;
}

}  // namespace

std::size_t BinModel::param_count() const {
  std::size_t n = 0;
  for (const auto& net : subnets) n += net.param_count();
  return n;
}

void BinModel::validate() const {
  if (variables.size() != subnets.size()) {
    throw Error("model: one subnetwork per variable is required");
  }
  for (std::size_t n = 0; n < variables.size(); ++n) {
    const auto& spec = variables[n];
    for (const std::size_t p : spec.parents) {
      if (p >= n) {
        throw Error("model: variable '" + spec.name +
                    "' has a parent that does not precede it");
      }
    }
    const std::size_t want = feature_dim + spec.parents.size();
    if (subnets[n].input_dim != want) {
      throw Error("model: subnetwork input dimension mismatch for '" +
                  spec.name + "'");
    }
  }
}

BinModel make_model(std::size_t feature_dim, std::vector<VariableSpec> specs,
                    std::span<const std::size_t> hidden_widths, Rng& rng) {
  BinModel model;
  model.feature_dim = feature_dim;
  model.variables = std::move(specs);
  model.subnets.reserve(model.variables.size());
  for (const auto& spec : model.variables) {
    model.subnets.push_back(
        make_subnet(feature_dim + spec.parents.size(), hidden_widths, rng));
  }
  model.validate();
  return model;
}

BinModel make_chain_model(std::size_t feature_dim,
                          std::span<const std::string> names,
                          std::span<const VarKind> kinds,
                          std::span<const std::size_t> hidden_widths, Rng& rng) {
  if (names.size() != kinds.size()) {
    throw Error("make_chain_model: names/kinds size mismatch");
  }
  std::vector<VariableSpec> specs(names.size());
  for (std::size_t n = 0; n < names.size(); ++n) {
    specs[n].name = names[n];
    specs[n].kind = kinds[n];
    specs[n].parents.resize(n);
    for (std::size_t p = 0; p < n; ++p) specs[n].parents[p] = p;
  }
  return make_model(feature_dim, std::move(specs), hidden_widths, rng);
}

ScalarMoments conditional_moments(const BinModel& model, std::size_t n,
                                  std::span<const double> x,
                                  std::span<const double> values) {
  const auto& spec = model.variables[n];
  Moments in;
  in.mean.reserve(model.feature_dim + spec.parents.size());
  in.mean.assign(x.begin(), x.end());
  for (const std::size_t p : spec.parents) in.mean.push_back(values[p]);
  in.var.assign(in.mean.size(), 0.0);
  return subnet_forward(model.subnets[n], in);
}

double joint_nll(const BinModel& model, std::span<const double> x,
                 std::span<const double> values) {
  if (values.size() != model.num_vars()) {
    throw Error("joint_nll: assignment must cover every variable");
  }
  double total = 0.0;
  for (std::size_t n = 0; n < model.num_vars(); ++n) {
    const ScalarMoments m = conditional_moments(model, n, x, values);
    total += gaussian_nll(values[n], m);
  }
  return total;
}

std::vector<double> flatten_params(const BinModel& model) {
  std::vector<double> flat;
  flat.reserve(model.param_count());
  for (const auto& net : model.subnets) append_params(net, flat);
  return flat;
}

void unflatten_params(BinModel& model, std::span<const double> flat) {
  std::size_t pos = 0;
  for (auto& net : model.subnets) pos += read_params(net, flat.subspan(pos));
  if (pos != flat.size()) throw Error("unflatten_params: size mismatch");
}

namespace {

void write_layer(std::ostream& out, const NpnLinearLayer& layer) {
  write_le<std::uint64_t>(out, layer.in_dim);
  write_le<std::uint64_t>(out, layer.out_dim);
  write_doubles(out, layer.w_mean);
  write_doubles(out, layer.w_var_raw);
  write_doubles(out, layer.b_mean);
  write_doubles(out, layer.b_var_raw);
}

NpnLinearLayer read_layer(std::istream& in) {
  NpnLinearLayer layer;
  layer.in_dim = read_le<std::uint64_t>(in);
  layer.out_dim = read_le<std::uint64_t>(in);
  layer.w_mean = read_doubles(in);
  layer.w_var_raw = read_doubles(in);
  layer.b_mean = read_doubles(in);
  layer.b_var_raw = read_doubles(in);
  if (layer.w_mean.size() != layer.in_dim * layer.out_dim ||
      layer.w_var_raw.size() != layer.w_mean.size() ||
      layer.b_mean.size() != layer.out_dim ||
      layer.b_var_raw.size() != layer.out_dim) {
    throw IoError("checkpoint: inconsistent layer shapes");
  }
  return layer;
}

}  // namespace

void save_checkpoint(const BinModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(out, kFormatVersion);
  write_string(out, model.meta);
  write_le<std::uint64_t>(out, model.feature_dim);
  write_le<std::uint64_t>(out, model.num_vars());
  for (const auto& spec : model.variables) {
    write_string(out, spec.name);
    write_le<std::uint8_t>(out, spec.kind == VarKind::kBinary ? 1 : 0);
    write_le<std::uint64_t>(out, spec.parents.size());
    for (const std::size_t p : spec.parents) write_le<std::uint64_t>(out, p);
  }
  for (const auto& net : model.subnets) {
    write_le<std::uint64_t>(out, net.input_dim);
    write_le<std::uint64_t>(out, net.hidden.size());
    for (const auto& layer : net.hidden) write_layer(out, layer);
    write_layer(out, net.head);
  }
  write_doubles(out, model.scaler.x_mean);
  write_doubles(out, model.scaler.x_std);
  write_doubles(out, model.scaler.v_mean);
  write_doubles(out, model.scaler.v_std);
  if (!out) throw IoError("checkpoint write failed");
}

BinModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a model checkpoint (bad magic header)");
  }
  const auto version = read_le<std::uint32_t>(in);
  if (version != kFormatVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  BinModel model;
  model.meta = read_string(in);
  model.feature_dim = read_le<std::uint64_t>(in);
  const auto num_vars = read_le<std::uint64_t>(in);
  model.variables.resize(num_vars);
  for (auto& spec : model.variables) {
    spec.name = read_string(in);
    spec.kind = read_le<std::uint8_t>(in) != 0 ? VarKind::kBinary : VarKind::kContinuous;
    spec.parents.resize(read_le<std::uint64_t>(in));
    for (auto& p : spec.parents) p = read_le<std::uint64_t>(in);
  }
  model.subnets.resize(num_vars);
  for (auto& net : model.subnets) {
    net.input_dim = read_le<std::uint64_t>(in);
    net.hidden.resize(read_le<std::uint64_t>(in));
    for (auto& layer : net.hidden) layer = read_layer(in);
    net.head = read_layer(in);
    if (net.head.out_dim != 2) throw IoError("checkpoint: head must have two units");
  }
  model.scaler.x_mean = read_doubles(in);
  model.scaler.x_std = read_doubles(in);
  model.scaler.v_mean = read_doubles(in);
  model.scaler.v_std = read_doubles(in);
  model.validate();
  return model;
}

}  // namespace binfer
