#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "iirc/io.hpp"
#include "iirc/mathutil.hpp"

namespace iirc {

/// Dense layer, row-major: w[r * in + c] connects input c to output r.
struct Layer {
  int in = 0;
  int out = 0;
  std::vector<double> w;
  std::vector<double> b;

  bool operator==(const Layer&) const = default;
};

/// Activations retained by forward() so backward() can run: the input, each
/// hidden layer's post-ReLU vector, and the logits.
struct ForwardCache {
  std::vector<double> input;
  std::vector<std::vector<double>> hidden;  // post-ReLU, one per hidden layer
  std::vector<double> logits;
};

/// Parameter-shaped gradient accumulator: hidden layers first, output last.
struct Gradients {
  std::vector<std::vector<double>> w;
  std::vector<std::vector<double>> b;

  void scale(double s) {
    for (auto& v : w)
      for (double& x : v) x *= s;
    for (auto& v : b)
      for (double& x : v) x *= s;
  }

  bool finite() const {
    for (const auto& v : w)
      for (double x : v)
        if (!std::isfinite(x)) return false;
    for (const auto& v : b)
      for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
  }
};

/// Feedforward net: ReLU hidden layers, linear per-class output rows. Output
/// row i is class i's logit, and rows are appended (never reordered) as new
/// classes arrive, so earlier classes keep their rows for a model's lifetime.
class Net {
 public:
  Net() = default;

  Net(int input_dim, const std::vector<int>& hidden_dims, int classes,
      std::mt19937_64& rng) {
    if (input_dim < 1) throw std::invalid_argument("input dimension must be positive");
    if (classes < 1) throw std::invalid_argument("class count must be positive");
    int prev = input_dim;
    for (int hdim : hidden_dims) {
      if (hdim < 1) throw std::invalid_argument("hidden width must be positive");
      layers_.push_back(random_layer(prev, hdim, rng));
      prev = hdim;
    }
    layers_.push_back(random_layer(prev, classes, rng));
    input_dim_ = input_dim;
  }

  int input_dim() const { return input_dim_; }
  int output_count() const { return layers_.back().out; }
  int hidden_count() const { return static_cast<int>(layers_.size()) - 1; }
  const std::vector<Layer>& layers() const { return layers_; }

  /// Width of the representation fed to the output layer (the herding
  /// feature space): last hidden width, or the input itself with no hidden.
  int feature_dim() const { return layers_.back().in; }

  ForwardCache forward(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != input_dim_)
      throw std::invalid_argument("input has dimension " + std::to_string(x.size()) +
                                  ", net expects " + std::to_string(input_dim_));
    ForwardCache cache;
    cache.input = x;
    const std::vector<double>* cur = &cache.input;
    for (int l = 0; l < hidden_count(); ++l) {
      std::vector<double> a = affine(layers_[l], *cur);
      for (double& v : a) v = v > 0.0 ? v : 0.0;
      cache.hidden.push_back(std::move(a));
      cur = &cache.hidden.back();
    }
    cache.logits = affine(layers_.back(), *cur);
    return cache;
  }

  std::vector<double> logits(const std::vector<double>& x) const {
    return forward(x).logits;
  }

  std::vector<double> scores(const std::vector<double>& x) const {
    auto o = logits(x);
    for (double& v : o) v = stable_sigmoid(v);
    return o;
  }

  std::vector<double> features(const std::vector<double>& x) const {
    auto cache = forward(x);
    return cache.hidden.empty() ? cache.input : std::move(cache.hidden.back());
  }

  /// Appends m_new output rows, drawn N(0, 1/fan_in), biases 0. Existing
  /// rows and all hidden parameters are untouched; expanding by 0 is a no-op.
  void expand_outputs(int m_new, std::mt19937_64& rng) {
    if (m_new < 0) throw std::invalid_argument("cannot expand by a negative count");
    if (m_new == 0) return;
    Layer& out = layers_.back();
    std::normal_distribution<double> init(0.0, 1.0 / std::sqrt(double(out.in)));
    for (int r = 0; r < m_new; ++r) {
      for (int c = 0; c < out.in; ++c) out.w.push_back(init(rng));
      out.b.push_back(0.0);
    }
    out.out += m_new;
  }

  Gradients zero_gradients() const {
    Gradients g;
    for (const auto& l : layers_) {
      g.w.emplace_back(l.w.size(), 0.0);
      g.b.emplace_back(l.b.size(), 0.0);
    }
    return g;
  }

  /// Accumulates dL/dparams into g given dL/dlogits. The cache must come
  /// from this net's forward at the current parameters.
  void backward(const ForwardCache& cache, const std::vector<double>& dlogits,
                Gradients& g) const {
    if (dlogits.size() != cache.logits.size())
      throw std::invalid_argument("logit gradient size mismatch");
    if (g.w.size() != layers_.size()) throw std::invalid_argument("gradient shape mismatch");

    std::vector<double> delta = dlogits;  // dL/d(pre-activation) of current layer
    for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
      const Layer& layer = layers_[l];
      const std::vector<double>& below =
          l == 0 ? cache.input : cache.hidden[static_cast<std::size_t>(l) - 1];
      for (int r = 0; r < layer.out; ++r) {
        const double d = delta[r];
        if (d == 0.0) continue;
        double* gw = g.w[l].data() + static_cast<std::size_t>(r) * layer.in;
        for (int c = 0; c < layer.in; ++c) gw[c] += d * below[c];
        g.b[l][r] += d;
      }
      if (l == 0) break;
      std::vector<double> next(layer.in, 0.0);
      for (int r = 0; r < layer.out; ++r) {
        const double d = delta[r];
        if (d == 0.0) continue;
        const double* wr = layer.w.data() + static_cast<std::size_t>(r) * layer.in;
        for (int c = 0; c < layer.in; ++c) next[c] += d * wr[c];
      }
      // ReLU gate: activation is zero exactly where the pre-activation was
      // clamped, so the stored post-ReLU value decides the derivative.
      const auto& act = cache.hidden[static_cast<std::size_t>(l) - 1];
      for (int c = 0; c < layer.in; ++c)
        if (act[c] <= 0.0) next[c] = 0.0;
      delta = std::move(next);
    }
  }

  void sgd_step(const Gradients& g, double lr) {
    if (g.w.size() != layers_.size()) throw std::invalid_argument("gradient shape mismatch");
    if (!g.finite()) throw std::runtime_error("non-finite gradient");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      if (g.w[l].size() != layers_[l].w.size() || g.b[l].size() != layers_[l].b.size())
        throw std::invalid_argument("gradient shape mismatch at layer " + std::to_string(l));
      for (std::size_t i = 0; i < g.w[l].size(); ++i) layers_[l].w[i] -= lr * g.w[l][i];
      for (std::size_t i = 0; i < g.b[l].size(); ++i) layers_[l].b[i] -= lr * g.b[l][i];
    }
  }

  /// Flat parameter view, ordered like Gradients (per layer: weights then
  /// biases). Lets generic code — e.g. numeric gradient checks — walk every
  /// parameter without knowing the layer structure.
  std::vector<double> parameters() const {
    std::vector<double> p;
    for (const auto& l : layers_) {
      p.insert(p.end(), l.w.begin(), l.w.end());
      p.insert(p.end(), l.b.begin(), l.b.end());
    }
    return p;
  }

  void set_parameters(const std::vector<double>& p) {
    std::size_t i = 0;
    for (auto& l : layers_) {
      if (i + l.w.size() + l.b.size() > p.size())
        throw std::invalid_argument("parameter vector too short");
      std::copy(p.begin() + i, p.begin() + i + l.w.size(), l.w.begin());
      i += l.w.size();
      std::copy(p.begin() + i, p.begin() + i + l.b.size(), l.b.begin());
      i += l.b.size();
    }
    if (i != p.size()) throw std::invalid_argument("parameter vector too long");
  }

  json to_json() const {
    json layers = json::array();
    for (const auto& l : layers_)
      layers.push_back(json{{"in", l.in}, {"out", l.out}, {"w", l.w}, {"b", l.b}});
    return json{{"input_dim", input_dim_}, {"layers", layers}};
  }

  static Net from_json(const json& j) {
    Net net;
    net.input_dim_ = j.at("input_dim").get<int>();
    for (const auto& jl : j.at("layers")) {
      Layer l;
      l.in = jl.at("in").get<int>();
      l.out = jl.at("out").get<int>();
      l.w = jl.at("w").get<std::vector<double>>();
      l.b = jl.at("b").get<std::vector<double>>();
      if (static_cast<int>(l.w.size()) != l.in * l.out ||
          static_cast<int>(l.b.size()) != l.out)
        throw std::runtime_error("model file has inconsistent layer shapes");
      net.layers_.push_back(std::move(l));
    }
    if (net.layers_.empty()) throw std::runtime_error("model file has no layers");
    return net;
  }

  void save(const std::string& path) const { write_json_file(path, to_json()); }
  static Net load(const std::string& path) { return from_json(read_json_file(path)); }

  bool operator==(const Net&) const = default;

  /// Test seam: build a net from explicit layers.
  static Net from_layers(int input_dim, std::vector<Layer> layers) {
    Net net;
    net.input_dim_ = input_dim;
    net.layers_ = std::move(layers);
    if (net.layers_.empty()) throw std::invalid_argument("need at least an output layer");
    return net;
  }

 private:
  static Layer random_layer(int in, int out, std::mt19937_64& rng) {
    Layer l;
    l.in = in;
    l.out = out;
    l.w.resize(static_cast<std::size_t>(in) * out);
    l.b.assign(out, 0.0);
    std::normal_distribution<double> init(0.0, 1.0 / std::sqrt(double(in)));
    for (double& v : l.w) v = init(rng);
    return l;
  }

  static std::vector<double> affine(const Layer& l, const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != l.in)
      throw std::invalid_argument("layer input size mismatch");
    std::vector<double> y(l.out);
    for (int r = 0; r < l.out; ++r) {
      const double* wr = l.w.data() + static_cast<std::size_t>(r) * l.in;
      double acc = l.b[r];
      for (int c = 0; c < l.in; ++c) acc += wr[c] * x[c];
      y[r] = acc;
    }
    return y;
  }

  int input_dim_ = 0;
  std::vector<Layer> layers_;
};

/// Frozen copy of a net at a step boundary; teachers are snapshots.
class Snapshot {
 public:
  Snapshot() = default;
  Snapshot(const Net& net, int step) : net_(net), step_(step) {}

  int step() const { return step_; }
  int output_count() const { return net_.output_count(); }
  std::vector<double> logits(const std::vector<double>& x) const { return net_.logits(x); }
  std::vector<double> scores(const std::vector<double>& x) const { return net_.scores(x); }
  const Net& net() const { return net_; }

  json to_json() const { return json{{"step", step_}, {"net", net_.to_json()}}; }
  static Snapshot from_json(const json& j) {
    return Snapshot(Net::from_json(j.at("net")), j.at("step").get<int>());
  }

  bool operator==(const Snapshot&) const = default;

 private:
  Net net_;
  int step_ = -1;
};

}  // namespace iirc
