#pragma once

#include <vector>

#include "hnav/nn.hpp"
#include "hnav/tape.hpp"

namespace hnav {

// Ties tape leaves back to the parameter store they were copied from so
// gradients can be collected into one flat vector after backward().
template <typename T>
struct LeafBinding {
  int store_tensor;
  typename Tape<T>::Id leaf;
};

// Creates one gradient-requiring leaf per store tensor (1 x size rows suit
// every consumer; weight matrices get their true 2-D shape).
template <typename T>
std::vector<LeafBinding<T>> bind_leaves(Tape<T>& tape,
                                        const ParamStoreT<T>& store) {
  std::vector<LeafBinding<T>> out;
  for (int i = 0; i < int(store.tensor_count()); ++i) {
    const auto& e = store.entry(i);
    int rows = e.shape.size() == 2 ? e.shape[0] : 1;
    int cols = e.shape.size() == 2 ? e.shape[1] : int(e.size);
    out.push_back({i, tape.leaf(rows, cols, store.view(i))});
  }
  return out;
}

template <typename T>
typename Tape<T>::Id leaf_of(const std::vector<LeafBinding<T>>& bindings,
                             const ParamStoreT<T>& store,
                             const std::string& name) {
  int want = store.find(name);
  for (auto& b : bindings)
    if (b.store_tensor == want) return b.leaf;
  throw ShapeMismatch("no leaf bound for parameter " + name);
}

// Accumulates all leaf gradients into a flat vector aligned with
// store.flat(). Call after tape.backward().
template <typename T>
void collect_gradients(Tape<T>& tape, const ParamStoreT<T>& store,
                       const std::vector<LeafBinding<T>>& bindings,
                       std::span<T> grad_flat) {
  if (grad_flat.size() != store.flat_size())
    throw ShapeMismatch("collect_gradients: flat size mismatch");
  for (auto& b : bindings) {
    const auto& e = store.entry(b.store_tensor);
    auto g = tape.gradient(b.leaf);
    for (std::size_t i = 0; i < e.size; ++i) grad_flat[e.offset + i] += g[i];
  }
}

}  // namespace hnav
