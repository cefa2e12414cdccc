#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hnav/errors.hpp"
#include "hnav/rng.hpp"

namespace hnav {

// Named parameter tensors backed by one flat array, in registration order.
// The flat view is the unit of optimization, clipping, and checksums.
template <typename T>
class ParamStoreT {
 public:
  struct Entry {
    std::string name;
    std::vector<int> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  // Registers a tensor filled with zeros and returns its index.
  int add(const std::string& name, std::vector<int> shape) {
    if (index_.count(name))
      throw ShapeMismatch("duplicate parameter name: " + name);
    std::size_t sz = 1;
    for (int d : shape) sz *= std::size_t(d);
    Entry e;
    e.name = name;
    e.shape = std::move(shape);
    e.offset = data_.size();
    e.size = sz;
    index_[name] = int(entries_.size());
    entries_.push_back(std::move(e));
    data_.resize(data_.size() + sz, T(0));
    return int(entries_.size()) - 1;
  }

  // Fan-in-scaled uniform init U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  int add_uniform(const std::string& name, std::vector<int> shape, int fan_in,
                  Rng& rng) {
    int id = add(name, std::move(shape));
    T bound = T(1) / std::sqrt(T(fan_in));
    auto v = view(id);
    for (auto& x : v) x = T(rng.uniform(-double(bound), double(bound)));
    return id;
  }

  std::span<T> view(int id) {
    auto& e = entries_[std::size_t(id)];
    return {data_.data() + e.offset, e.size};
  }
  std::span<const T> view(int id) const {
    auto& e = entries_[std::size_t(id)];
    return {data_.data() + e.offset, e.size};
  }
  std::span<T> view(const std::string& name) { return view(find(name)); }
  std::span<const T> view(const std::string& name) const {
    return view(find(name));
  }

  int find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw ShapeMismatch("unknown parameter: " + name);
    return it->second;
  }
  bool has(const std::string& name) const { return index_.count(name) != 0; }

  const Entry& entry(int id) const { return entries_[std::size_t(id)]; }
  std::size_t tensor_count() const { return entries_.size(); }
  std::span<T> flat() { return {data_.data(), data_.size()}; }
  std::span<const T> flat() const { return {data_.data(), data_.size()}; }
  std::size_t flat_size() const { return data_.size(); }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, int> index_;
  std::vector<T> data_;
};

using ParamStore = ParamStoreT<float>;

// Adaptive-moment optimizer state over a flat parameter vector.
template <typename T>
struct AdamStateT {
  std::vector<T> m, v;
  std::int64_t t = 0;
  void init(std::size_t n) {
    m.assign(n, T(0));
    v.assign(n, T(0));
    t = 0;
  }
};

using AdamState = AdamStateT<float>;

struct AdamHyper {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads,
               AdamStateT<T>& state, const AdamHyper& h) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ShapeMismatch("adam_step: size mismatch");
  state.t += 1;
  double bc1 = 1.0 - std::pow(h.beta1, double(state.t));
  double bc2 = 1.0 - std::pow(h.beta2, double(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = double(grads[i]);
    double m = h.beta1 * double(state.m[i]) + (1.0 - h.beta1) * g;
    double v = h.beta2 * double(state.v[i]) + (1.0 - h.beta2) * g * g;
    state.m[i] = T(m);
    state.v[i] = T(v);
    double mhat = m / bc1;
    double vhat = v / bc2;
    params[i] = T(double(params[i]) - h.lr * mhat / (std::sqrt(vhat) + h.eps));
  }
}

template <typename T>
double global_norm(std::span<const T> grads) {
  double acc = 0.0;
  for (T g : grads) acc += double(g) * double(g);
  return std::sqrt(acc);
}

// Scales grads in place so the global norm is at most max_norm.
// Returns the pre-clip norm.
template <typename T>
double clip_global_norm(std::span<T> grads, double max_norm) {
  double norm = global_norm(std::span<const T>(grads.data(), grads.size()));
  if (norm > max_norm && norm > 0.0) {
    T scale = T(max_norm / norm);
    for (auto& g : grads) g *= scale;
  }
  return norm;
}

}  // namespace hnav
