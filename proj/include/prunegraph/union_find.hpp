#pragma once

#include <cstddef>
#include <algorithm>
#include <numeric>
#include <vector>

namespace prunegraph {

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n), size_(n, 1) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return true;
  }

  std::size_t size() const { return parent_.size(); }

  /// Members of each set, sets ordered by their smallest element.
  std::vector<std::vector<std::size_t>> sets() {
    std::vector<std::vector<std::size_t>> by_root(parent_.size());
    for (std::size_t i = 0; i < parent_.size(); ++i) by_root[find(i)].push_back(i);
    std::vector<std::vector<std::size_t>> out;
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < parent_.size(); ++i) {
      if (!by_root[i].empty()) order.push_back(i);
    }
    // members are pushed in ascending order, so front() is the minimum
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return by_root[a][0] < by_root[b][0]; });
    for (auto r : order) out.push_back(std::move(by_root[r]));
    return out;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

}  // namespace prunegraph
