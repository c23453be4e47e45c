#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

namespace gridgin::detail {

// Union-find with union by size, an optional per-set mark (used for "this
// component contains a source") and an undo log. No path compression, so
// every union can be rolled back in LIFO order.
class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), size_(n, 1), mark_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }

  void set_mark(std::uint32_t x) { mark_[find(x)] = 1; }
  bool marked(std::uint32_t x) const { return mark_[find(x)] != 0; }

  std::uint32_t find(std::uint32_t x) const {
    while (parent_[x] != x) x = parent_[x];
    return x;
  }

  bool same(std::uint32_t a, std::uint32_t b) const { return find(a) == find(b); }

  // Returns false (and records nothing) if a and b are already joined.
  bool unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (size_[a] < size_[b]) std::swap(a, b);
    log_.push_back({b, mark_[a]});
    parent_[b] = a;
    size_[a] += size_[b];
    mark_[a] = static_cast<char>(mark_[a] | mark_[b]);
    return true;
  }

  std::size_t checkpoint() const { return log_.size(); }

  void rollback(std::size_t mark) {
    while (log_.size() > mark) {
      const Entry entry = log_.back();
      log_.pop_back();
      const std::uint32_t a = parent_[entry.child];
      size_[a] -= size_[entry.child];
      mark_[a] = entry.old_mark;
      parent_[entry.child] = entry.child;
    }
  }

 private:
  struct Entry {
    std::uint32_t child;
    char old_mark;
  };
  std::vector<std::uint32_t> parent_;
  std::vector<std::uint32_t> size_;
  std::vector<char> mark_;
  std::vector<Entry> log_;
};

}  // namespace gridgin::detail
