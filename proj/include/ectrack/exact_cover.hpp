#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ectrack/detection.hpp"
#include "ectrack/likelihood.hpp"
#include "ectrack/util.hpp"

namespace ectrack {

/// Universe {0, ..., universe_size - 1} and subsets of it, one per association.
struct ExactCoverProblem {
  std::size_t universe_size = 0;
  std::vector<std::vector<std::size_t>> subsets;
};

struct ExactCoverResult {
  /// Each cover lists subset indices in increasing order.
  std::vector<std::vector<std::size_t>> covers;
  /// True when enumeration stopped at the cover cap.
  bool truncated = false;
};

/// Knuth's dancing-links matrix: a toroidal doubly-linked list with one
/// header per column and one node per (row, column) one-entry.
class DancingLinks {
 public:
  explicit DancingLinks(const ExactCoverProblem& p) : columns_(p.universe_size) {
    const std::size_t header_count = columns_ + 1;  // node 0 is the root
    left_.resize(header_count);
    right_.resize(header_count);
    up_.resize(header_count);
    down_.resize(header_count);
    column_.resize(header_count);
    row_.assign(header_count, kNone);
    size_.assign(header_count, 0);
    for (std::size_t i = 0; i < header_count; ++i) {
      left_[i] = i == 0 ? columns_ : i - 1;
      right_[i] = i == columns_ ? 0 : i + 1;
      up_[i] = down_[i] = column_[i] = i;
    }
    for (std::size_t r = 0; r < p.subsets.size(); ++r) {
      std::vector<std::size_t> cols(p.subsets[r]);
      std::sort(cols.begin(), cols.end());
      if (std::adjacent_find(cols.begin(), cols.end()) != cols.end()) {
        throw Error("subset " + std::to_string(r) + " repeats an element");
      }
      std::size_t first = kNone;
      for (std::size_t c : cols) {
        if (c >= columns_) throw Error("subset element outside the universe");
        const std::size_t h = c + 1;
        const std::size_t x = left_.size();
        column_.push_back(h);
        row_.push_back(r);
        size_.push_back(0);
        up_.push_back(up_[h]);
        down_.push_back(h);
        down_[up_[h]] = x;
        up_[h] = x;
        ++size_[h];
        if (first == kNone) {
          first = x;
          left_.push_back(x);
          right_.push_back(x);
        } else {
          left_.push_back(left_[first]);
          right_.push_back(first);
          right_[left_[first]] = x;
          left_[first] = x;
        }
      }
    }
  }

  ExactCoverResult solve(std::size_t max_covers) {
    ExactCoverResult out;
    std::vector<std::size_t> partial;
    search(partial, out, max_covers);
    return out;
  }

 private:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  void cover(std::size_t c) {
    right_[left_[c]] = right_[c];
    left_[right_[c]] = left_[c];
    for (std::size_t i = down_[c]; i != c; i = down_[i]) {
      for (std::size_t j = right_[i]; j != i; j = right_[j]) {
        down_[up_[j]] = down_[j];
        up_[down_[j]] = up_[j];
        --size_[column_[j]];
      }
    }
  }

  void uncover(std::size_t c) {
    for (std::size_t i = up_[c]; i != c; i = up_[i]) {
      for (std::size_t j = left_[i]; j != i; j = left_[j]) {
        ++size_[column_[j]];
        down_[up_[j]] = j;
        up_[down_[j]] = j;
      }
    }
    right_[left_[c]] = c;
    left_[right_[c]] = c;
  }

  // Returns false once the cap is hit.
  bool search(std::vector<std::size_t>& partial, ExactCoverResult& out, std::size_t max_covers) {
    if (right_[0] == 0) {
      if (out.covers.size() >= max_covers) {
        out.truncated = true;
        return false;
      }
      std::vector<std::size_t> cover(partial);
      std::sort(cover.begin(), cover.end());
      out.covers.push_back(std::move(cover));
      return true;
    }
    // Fewest remaining rows; headers are visited in index order, so ties
    // go to the lowest element.
    std::size_t c = right_[0];
    for (std::size_t j = right_[c]; j != 0; j = right_[j]) {
      if (size_[j] < size_[c]) c = j;
    }
    if (size_[c] == 0) return true;
    cover(c);
    bool go_on = true;
    for (std::size_t r = down_[c]; r != c && go_on; r = down_[r]) {
      partial.push_back(row_[r]);
      for (std::size_t j = right_[r]; j != r; j = right_[j]) cover(column_[j]);
      go_on = search(partial, out, max_covers);
      for (std::size_t j = left_[r]; j != r; j = left_[j]) uncover(column_[j]);
      partial.pop_back();
    }
    uncover(c);
    return go_on;
  }

  std::size_t columns_;
  std::vector<std::size_t> left_, right_, up_, down_, column_, row_, size_;
};

/// Every exact cover of `problem`, up to `max_covers`.
inline ExactCoverResult solve_exact_cover(const ExactCoverProblem& problem,
                                          std::size_t max_covers = 100000) {
  DancingLinks dlx(problem);
  return dlx.solve(max_covers);
}

/// Direct check that `selection` is pairwise disjoint and covers the universe.
inline bool is_exact_cover(const ExactCoverProblem& problem, std::span<const std::size_t> selection) {
  std::vector<int> hits(problem.universe_size, 0);
  for (std::size_t s : selection) {
    for (std::size_t e : problem.subsets.at(s)) {
      if (e >= problem.universe_size || ++hits[e] > 1) return false;
    }
  }
  return std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; });
}

struct Hypothesis {
  std::vector<std::size_t> selected;
  double log_likelihood = 0.0;
  double likelihood = 0.0;
};

/// Most likely cover under the product of f (selected) and 1 - f (the rest).
/// Ties go to the lexicographically smallest index set.
inline Hypothesis select_map(std::span<const std::vector<std::size_t>> covers,
                             std::span<const double> f, double floor = 1e-6,
                             double ceiling = 1.0 - 1e-9) {
  if (covers.empty()) throw Error("infeasible component");
  Hypothesis best;
  bool have = false;
  for (const auto& cover : covers) {
    std::vector<bool> x(f.size(), false);
    for (std::size_t i : cover) x.at(i) = true;
    const double ll = log_hypothesis_likelihood(x, f, floor, ceiling);
    if (!have || ll > best.log_likelihood ||
        (ll == best.log_likelihood && cover < best.selected)) {
      best.selected = cover;
      best.log_likelihood = ll;
      have = true;
    }
  }
  best.likelihood = std::exp(best.log_likelihood);
  return best;
}

/// Connected components of the conflict graph: subsets sharing an element
/// end up together. Components are ordered by their smallest subset index and
/// list indices increasingly. Element ids may be arbitrary.
inline std::vector<std::vector<std::size_t>> disjoint_components(
    std::span<const std::vector<std::size_t>> subsets) {
  std::map<std::size_t, std::size_t> first_owner;
  DisjointSets sets(subsets.size());
  for (std::size_t i = 0; i < subsets.size(); ++i) {
    for (std::size_t e : subsets[i]) {
      auto [it, fresh] = first_owner.try_emplace(e, i);
      if (!fresh) sets.unite(it->second, i);
    }
  }
  std::map<std::size_t, std::size_t> root_to_group;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < subsets.size(); ++i) {
    auto [it, fresh] = root_to_group.try_emplace(sets.find(i), groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  return groups;
}

/// Restricts `subsets` to the listed indices and renumbers their elements
/// densely, giving a self-contained exact cover problem.
inline ExactCoverProblem component_problem(std::span<const std::vector<std::size_t>> subsets,
                                           std::span<const std::size_t> indices) {
  std::map<std::size_t, std::size_t> dense;
  for (std::size_t i : indices) {
    for (std::size_t e : subsets[i]) dense.try_emplace(e, 0);
  }
  std::size_t next = 0;
  for (auto& [e, d] : dense) d = next++;
  ExactCoverProblem p;
  p.universe_size = dense.size();
  for (std::size_t i : indices) {
    std::vector<std::size_t> s;
    for (std::size_t e : subsets[i]) s.push_back(dense.at(e));
    p.subsets.push_back(std::move(s));
  }
  return p;
}

}  // namespace ectrack
