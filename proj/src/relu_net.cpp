#include "dlab/relu_net.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dlab {

namespace {

void normalize(Layer& layer) {
  if (static_cast<int>(layer.bias.size()) != layer.out_dim) throw std::invalid_argument("layer bias has wrong length");
  for (const auto& t : layer.weights)
    if (t.row < 0 || t.row >= layer.out_dim || t.col < 0 || t.col >= layer.in_dim)
      throw std::invalid_argument("layer weight index out of range");
  std::stable_sort(layer.weights.begin(), layer.weights.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::vector<Triplet> merged;
  merged.reserve(layer.weights.size());
  for (const auto& t : layer.weights) {
    if (!merged.empty() && merged.back().row == t.row && merged.back().col == t.col)
      merged.back().value += t.value;
    else
      merged.push_back(t);
  }
  std::erase_if(merged, [](const Triplet& t) { return t.value == 0.0; });
  layer.weights = std::move(merged);
}

Layer negated_rows_interleaved(const Layer& last) {
  // rows (y_r, -y_r) at (2r, 2r+1)
  Layer out;
  out.in_dim = last.in_dim;
  out.out_dim = 2 * last.out_dim;
  out.bias.resize(static_cast<std::size_t>(out.out_dim));
  for (const auto& t : last.weights) {
    out.weights.push_back({2 * t.row, t.col, t.value});
    out.weights.push_back({2 * t.row + 1, t.col, -t.value});
  }
  for (int r = 0; r < last.out_dim; ++r) {
    out.bias[static_cast<std::size_t>(2 * r)] = last.bias[static_cast<std::size_t>(r)];
    out.bias[static_cast<std::size_t>(2 * r + 1)] = -last.bias[static_cast<std::size_t>(r)];
  }
  return out;
}

Layer split_columns(const Layer& first) {
  // column c becomes (w at 2c, -w at 2c+1)
  Layer out;
  out.in_dim = 2 * first.in_dim;
  out.out_dim = first.out_dim;
  out.bias = first.bias;
  for (const auto& t : first.weights) {
    out.weights.push_back({t.row, 2 * t.col, t.value});
    out.weights.push_back({t.row, 2 * t.col + 1, -t.value});
  }
  return out;
}

ReluNetwork pad_to_depth(const ReluNetwork& net, int depth) {
  const int missing = depth - net.ledger().depth;
  if (missing <= 0) return net;
  return concat({net, identity_net(net.output_dim(), missing)});
}

}  // namespace

nlohmann::json Ledger::to_json() const {
  return {{"L", depth}, {"W", widths}, {"S", nonzeros}, {"B", max_abs}};
}

nlohmann::json ErrorCertificate::to_json() const {
  nlohmann::json dom = nlohmann::json::array();
  for (const auto& [lo, hi] : domain) dom.push_back({lo, hi});
  return {{"construction", construction},
          {"target_eps", target_eps},
          {"domain", dom},
          {"grid_points", grid_points},
          {"measured_sup_error", measured_sup_error},
          {"valid", valid},
          {"note", note}};
}

ErrorCertificate ErrorCertificate::from_json(const nlohmann::json& j) {
  ErrorCertificate c;
  c.construction = j.value("construction", "");
  c.target_eps = j.at("target_eps").get<double>();
  for (const auto& d : j.at("domain")) c.domain.emplace_back(d.at(0).get<double>(), d.at(1).get<double>());
  c.grid_points = j.at("grid_points").get<long long>();
  c.measured_sup_error = j.at("measured_sup_error").get<double>();
  c.valid = j.at("valid").get<bool>();
  c.note = j.value("note", "");
  return c;
}

ReluNetwork::ReluNetwork(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw std::invalid_argument("network needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    normalize(layers_[i]);
    if (i > 0 && layers_[i].in_dim != layers_[i - 1].out_dim)
      throw std::invalid_argument("adjacent layer dimensions do not match");
  }
  ledger_ = recount();
}

ReluNetwork ReluNetwork::affine(int in_dim, int out_dim, const std::vector<double>& dense, std::vector<double> bias) {
  if (dense.size() != static_cast<std::size_t>(in_dim) * static_cast<std::size_t>(out_dim))
    throw std::invalid_argument("affine: matrix has wrong size");
  Layer layer;
  layer.in_dim = in_dim;
  layer.out_dim = out_dim;
  layer.bias = std::move(bias);
  for (int r = 0; r < out_dim; ++r)
    for (int c = 0; c < in_dim; ++c) {
      const double v = dense[static_cast<std::size_t>(r) * static_cast<std::size_t>(in_dim) + static_cast<std::size_t>(c)];
      if (v != 0.0) layer.weights.push_back({r, c, v});
    }
  return ReluNetwork({layer});
}

Ledger ReluNetwork::recount() const {
  Ledger led;
  led.depth = static_cast<int>(layers_.size());
  if (layers_.empty()) return led;
  led.widths.push_back(layers_.front().in_dim);
  for (const auto& layer : layers_) {
    led.widths.push_back(layer.out_dim);
    for (const auto& t : layer.weights)
      if (t.value != 0.0) {
        ++led.nonzeros;
        led.max_abs = std::max(led.max_abs, std::abs(t.value));
      }
    for (double b : layer.bias)
      if (b != 0.0) {
        ++led.nonzeros;
        led.max_abs = std::max(led.max_abs, std::abs(b));
      }
  }
  return led;
}

std::size_t ReluNetwork::hidden_units() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) n += static_cast<std::size_t>(layers_[i].out_dim);
  return n;
}

void ReluNetwork::eval(const double* x, double* out, std::vector<double>& a, std::vector<double>& b) const {
  a.assign(x, x + input_dim());
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& layer = layers_[li];
    b.assign(static_cast<std::size_t>(layer.out_dim), 0.0);
    for (const auto& t : layer.weights) b[static_cast<std::size_t>(t.row)] += t.value * a[static_cast<std::size_t>(t.col)];
    const bool hidden = li + 1 < layers_.size();
    for (std::size_t r = 0; r < b.size(); ++r) {
      b[r] += layer.bias[r];
      if (hidden && !(b[r] > 0.0)) b[r] = 0.0;
    }
    a.swap(b);
  }
  std::copy(a.begin(), a.end(), out);
}

std::vector<double> ReluNetwork::eval(const std::vector<double>& x) const {
  if (static_cast<int>(x.size()) != input_dim()) throw std::invalid_argument("eval: input dimension mismatch");
  std::vector<double> out(static_cast<std::size_t>(output_dim()));
  std::vector<double> a;
  std::vector<double> b;
  eval(x.data(), out.data(), a, b);
  return out;
}

double ReluNetwork::eval_scalar(double x) const {
  if (input_dim() != 1 || output_dim() != 1) throw std::invalid_argument("eval_scalar needs a 1 -> 1 network");
  thread_local std::vector<double> a;
  thread_local std::vector<double> b;
  double out = 0.0;
  eval(&x, &out, a, b);
  return out;
}

nlohmann::json ReluNetwork::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : layers_) {
    std::vector<int> rows;
    std::vector<int> cols;
    std::vector<double> vals;
    for (const auto& t : layer.weights) {
      rows.push_back(t.row);
      cols.push_back(t.col);
      vals.push_back(t.value);
    }
    layers.push_back({{"in", layer.in_dim}, {"out", layer.out_dim}, {"rows", rows}, {"cols", cols}, {"vals", vals},
                      {"bias", layer.bias}});
  }
  nlohmann::json j = {{"layers", layers}, {"ledger", ledger_.to_json()}};
  if (certificate) j["certificate"] = certificate->to_json();
  return j;
}

ReluNetwork ReluNetwork::from_json(const nlohmann::json& j) {
  std::vector<Layer> layers;
  for (const auto& lj : j.at("layers")) {
    Layer layer;
    layer.in_dim = lj.at("in").get<int>();
    layer.out_dim = lj.at("out").get<int>();
    const auto rows = lj.at("rows").get<std::vector<int>>();
    const auto cols = lj.at("cols").get<std::vector<int>>();
    const auto vals = lj.at("vals").get<std::vector<double>>();
    if (rows.size() != cols.size() || rows.size() != vals.size()) throw std::invalid_argument("ragged triplet arrays");
    for (std::size_t i = 0; i < rows.size(); ++i) layer.weights.push_back({rows[i], cols[i], vals[i]});
    layer.bias = lj.at("bias").get<std::vector<double>>();
    layers.push_back(std::move(layer));
  }
  ReluNetwork net(std::move(layers));
  if (j.contains("ledger")) {
    const auto& lj = j.at("ledger");
    Ledger stored;
    stored.depth = lj.at("L").get<int>();
    stored.widths = lj.at("W").get<std::vector<int>>();
    stored.nonzeros = lj.at("S").get<long long>();
    stored.max_abs = lj.at("B").get<double>();
    if (!(stored == net.ledger())) throw std::invalid_argument("stored ledger disagrees with recount");
  }
  if (j.contains("certificate")) net.certificate = ErrorCertificate::from_json(j.at("certificate"));
  return net;
}

ReluNetwork concat(const std::vector<ReluNetwork>& nets) {
  if (nets.empty()) throw std::invalid_argument("concat: empty list");
  std::vector<Layer> layers = nets.front().layers();
  for (std::size_t i = 1; i < nets.size(); ++i) {
    const auto& next = nets[i].layers();
    if (layers.back().out_dim != next.front().in_dim) throw std::invalid_argument("concat: dimension mismatch");
    layers.back() = negated_rows_interleaved(layers.back());
    layers.push_back(split_columns(next.front()));
    layers.insert(layers.end(), next.begin() + 1, next.end());
  }
  return ReluNetwork(std::move(layers));
}

ReluNetwork identity_net(int d, int depth) {
  if (d < 1 || depth < 1) throw std::invalid_argument("identity_net: need d >= 1 and depth >= 1");
  std::vector<Layer> layers;
  if (depth == 1) {
    Layer layer{d, d, {}, std::vector<double>(static_cast<std::size_t>(d), 0.0)};
    for (int i = 0; i < d; ++i) layer.weights.push_back({i, i, 1.0});
    layers.push_back(layer);
    return ReluNetwork(std::move(layers));
  }
  Layer first{d, 2 * d, {}, std::vector<double>(static_cast<std::size_t>(2 * d), 0.0)};
  for (int i = 0; i < d; ++i) {
    first.weights.push_back({i, i, 1.0});
    first.weights.push_back({d + i, i, -1.0});
  }
  layers.push_back(first);
  for (int l = 0; l < depth - 2; ++l) {
    Layer mid{2 * d, 2 * d, {}, std::vector<double>(static_cast<std::size_t>(2 * d), 0.0)};
    for (int i = 0; i < 2 * d; ++i) mid.weights.push_back({i, i, 1.0});
    layers.push_back(mid);
  }
  Layer last{2 * d, d, {}, std::vector<double>(static_cast<std::size_t>(d), 0.0)};
  for (int i = 0; i < d; ++i) {
    last.weights.push_back({i, i, 1.0});
    last.weights.push_back({i, d + i, -1.0});
  }
  layers.push_back(last);
  return ReluNetwork(std::move(layers));
}

ReluNetwork parallel_select(const std::vector<ReluNetwork>& nets, const std::vector<std::vector<int>>& selections,
                            int input_dim) {
  if (nets.empty()) throw std::invalid_argument("parallel: empty list");
  if (selections.size() != nets.size()) throw std::invalid_argument("parallel: one selection per network");
  int depth = 0;
  for (const auto& n : nets) depth = std::max(depth, n.ledger().depth);
  std::vector<ReluNetwork> padded;
  padded.reserve(nets.size());
  for (std::size_t i = 0; i < nets.size(); ++i) {
    if (static_cast<int>(selections[i].size()) != nets[i].input_dim())
      throw std::invalid_argument("parallel: selection size differs from network input");
    for (int c : selections[i])
      if (c < 0 || c >= input_dim) throw std::invalid_argument("parallel: selection out of range");
    padded.push_back(pad_to_depth(nets[i], depth));
  }
  std::vector<Layer> layers(static_cast<std::size_t>(depth));
  for (int l = 0; l < depth; ++l) {
    Layer& out = layers[static_cast<std::size_t>(l)];
    int row_offset = 0;
    int col_offset = 0;
    for (std::size_t i = 0; i < padded.size(); ++i) {
      const Layer& src = padded[i].layers()[static_cast<std::size_t>(l)];
      for (const auto& t : src.weights) {
        const int col = (l == 0) ? selections[i][static_cast<std::size_t>(t.col)] : col_offset + t.col;
        out.weights.push_back({row_offset + t.row, col, t.value});
      }
      out.bias.insert(out.bias.end(), src.bias.begin(), src.bias.end());
      row_offset += src.out_dim;
      col_offset += src.in_dim;
    }
    out.out_dim = row_offset;
    out.in_dim = (l == 0) ? input_dim : col_offset;
  }
  return ReluNetwork(std::move(layers));
}

ReluNetwork parallel(const std::vector<ReluNetwork>& nets, ParallelMode mode) {
  if (nets.empty()) throw std::invalid_argument("parallel: empty list");
  const int in = nets.front().input_dim();
  std::vector<std::vector<int>> selections;
  for (const auto& n : nets) {
    if (n.input_dim() != in) throw std::invalid_argument("parallel: networks need a shared input dimension");
    std::vector<int> sel(static_cast<std::size_t>(in));
    for (int c = 0; c < in; ++c) sel[static_cast<std::size_t>(c)] = c;
    selections.push_back(std::move(sel));
  }
  ReluNetwork stacked = parallel_select(nets, selections, in);
  if (mode == ParallelMode::stack) return stacked;
  const int out = nets.front().output_dim();
  for (const auto& n : nets)
    if (n.output_dim() != out) throw std::invalid_argument("parallel sum: output dimensions differ");
  const int k = static_cast<int>(nets.size());
  std::vector<double> sum(static_cast<std::size_t>(out) * static_cast<std::size_t>(out * k), 0.0);
  for (int r = 0; r < out; ++r)
    for (int i = 0; i < k; ++i) sum[static_cast<std::size_t>(r * out * k + i * out + r)] = 1.0;
  return concat({stacked, ReluNetwork::affine(out * k, out, sum, std::vector<double>(static_cast<std::size_t>(out), 0.0))});
}

ReluNetwork compose(const ReluNetwork& f, const ReluNetwork& g) {
  if (f.output_dim() != g.input_dim()) throw std::invalid_argument("compose: dimension mismatch");
  const Layer& last = f.layers().back();
  const Layer& first = g.layers().front();
  std::vector<std::size_t> row_start(static_cast<std::size_t>(last.out_dim) + 1, 0);
  for (const auto& t : last.weights) ++row_start[static_cast<std::size_t>(t.row) + 1];
  for (std::size_t r = 0; r < static_cast<std::size_t>(last.out_dim); ++r) row_start[r + 1] += row_start[r];

  Layer merged;
  merged.in_dim = last.in_dim;
  merged.out_dim = first.out_dim;
  merged.bias.assign(static_cast<std::size_t>(first.out_dim), 0.0);
  for (const auto& t : first.weights) {
    const auto c = static_cast<std::size_t>(t.col);
    for (std::size_t q = row_start[c]; q < row_start[c + 1]; ++q)
      merged.weights.push_back({t.row, last.weights[q].col, t.value * last.weights[q].value});
    merged.bias[static_cast<std::size_t>(t.row)] += t.value * last.bias[c];
  }
  for (int r = 0; r < first.out_dim; ++r) merged.bias[static_cast<std::size_t>(r)] += first.bias[static_cast<std::size_t>(r)];

  std::vector<Layer> layers(f.layers().begin(), f.layers().end() - 1);
  layers.push_back(std::move(merged));
  layers.insert(layers.end(), g.layers().begin() + 1, g.layers().end());
  return ReluNetwork(std::move(layers));
}

ReluNetwork pre_affine(const ReluNetwork& net, int in_dim, const std::vector<double>& a, const std::vector<double>& b) {
  return compose(ReluNetwork::affine(in_dim, net.input_dim(), a, b), net);
}

ReluNetwork post_affine(const ReluNetwork& net, int out_dim, const std::vector<double>& a, const std::vector<double>& b) {
  return compose(net, ReluNetwork::affine(net.output_dim(), out_dim, a, b));
}

}  // namespace dlab
