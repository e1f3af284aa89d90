#pragma once

#include <algorithm>
#include <deque>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "spchol/sparse_matrix.hpp"

namespace spchol {

// Bijection on [0, n): perm maps old -> new, iperm maps new -> old.
struct Permutation {
  std::vector<Index> perm;
  std::vector<Index> iperm;

  Index size() const { return static_cast<Index>(perm.size()); }

  static Permutation identity(Index n) {
    Permutation p;
    p.perm.resize(n);
    std::iota(p.perm.begin(), p.perm.end(), Index{0});
    p.iperm = p.perm;
    return p;
  }

  // From an elimination order: order[k] is the old index eliminated k-th.
  static Permutation from_order(std::vector<Index> order) {
    Permutation p;
    p.iperm = std::move(order);
    p.perm.assign(p.iperm.size(), kNone);
    for (Index k = 0; k < p.size(); ++k) p.perm[p.iperm[k]] = k;
    p.validate();
    return p;
  }

  // Apply *this first, then next.
  Permutation then(const Permutation& next) const {
    std::vector<Index> order(perm.size());
    for (Index k = 0; k < size(); ++k) order[k] = iperm[next.iperm[k]];
    return from_order(std::move(order));
  }

  void validate() const {
    const Index n = size();
    if (static_cast<Index>(iperm.size()) != n) throw StructuralError("permutation size mismatch");
    for (Index k = 0; k < n; ++k) {
      if (iperm[k] < 0 || iperm[k] >= n || perm[iperm[k]] != k)
        throw StructuralError("permutation is not a bijection");
    }
  }
};

// parent[v] is the first off-diagonal row of column v of L, or kNone.
struct EliminationTree {
  std::vector<Index> parent;

  Index size() const { return static_cast<Index>(parent.size()); }

  std::vector<std::vector<Index>> children() const {
    std::vector<std::vector<Index>> c(parent.size());
    for (Index v = 0; v < size(); ++v)
      if (parent[v] != kNone) c[parent[v]].push_back(v);
    return c;
  }

  std::vector<Index> roots() const {
    std::vector<Index> r;
    for (Index v = 0; v < size(); ++v)
      if (parent[v] == kNone) r.push_back(v);
    return r;
  }

  bool topological() const {
    for (Index v = 0; v < size(); ++v)
      if (parent[v] != kNone && parent[v] <= v) return false;
    return true;
  }
};

// Dissection tree: every node owns a separator (internal) or a domain (leaf).
struct SeparatorTree {
  struct Node {
    std::vector<Index> vertices;
    std::vector<Index> children;
  };
  std::vector<Node> nodes;
  std::vector<Index> roots;

  // Node vertex sets partition [0, n) and leaves respect leaf_size.
  bool well_formed(Index n, Index leaf_size) const {
    std::vector<int> seen(n, 0);
    for (const auto& node : nodes) {
      if (node.children.empty() && static_cast<Index>(node.vertices.size()) > leaf_size) {
        // Unsplittable domains (cliques) become separators with one child, so
        // a childless oversized node is a violation.
        return false;
      }
      for (Index v : node.vertices) {
        if (v < 0 || v >= n || seen[v]++) return false;
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; });
  }
};

namespace detail {

// Minimum-degree elimination on the subgraph induced by `verts`, explicit
// quotient-free elimination graph. Ties go to the lowest vertex index.
inline std::vector<Index> minimum_degree_order(const AdjacencyGraph& g,
                                               std::span<const Index> verts) {
  const Index k = static_cast<Index>(verts.size());
  std::vector<Index> sorted(verts.begin(), verts.end());
  std::sort(sorted.begin(), sorted.end());
  auto local = [&](Index v) -> Index {
    auto it = std::lower_bound(sorted.begin(), sorted.end(), v);
    return (it != sorted.end() && *it == v) ? it - sorted.begin() : kNone;
  };
  std::vector<std::vector<Index>> adj(k);
  for (Index a = 0; a < k; ++a) {
    for (Index u : g.neighbors(sorted[a])) {
      Index b = local(u);
      if (b != kNone) adj[a].push_back(b);
    }
    std::sort(adj[a].begin(), adj[a].end());
  }
  std::vector<char> eliminated(k, 0);
  std::vector<Index> order;
  order.reserve(k);
  std::vector<Index> merged;
  for (Index step = 0; step < k; ++step) {
    Index best = kNone;
    for (Index a = 0; a < k; ++a) {
      if (eliminated[a]) continue;
      if (best == kNone || adj[a].size() < adj[best].size()) best = a;
    }
    eliminated[best] = 1;
    order.push_back(sorted[best]);
    const auto nbrs = adj[best];
    for (Index u : nbrs) {
      // adj[u] <- (adj[u] U nbrs) \ {u, best}
      merged.clear();
      std::set_union(adj[u].begin(), adj[u].end(), nbrs.begin(), nbrs.end(),
                     std::back_inserter(merged));
      merged.erase(std::remove_if(merged.begin(), merged.end(),
                                  [&](Index w) { return w == u || w == best; }),
                   merged.end());
      adj[u].swap(merged);
    }
    adj[best].clear();
  }
  return order;
}

class Dissector {
 public:
  Dissector(const AdjacencyGraph& g, Index leaf_size)
      : g_(g), leaf_size_(std::max<Index>(leaf_size, 1)), mark_(g.n, 0), level_(g.n, kNone),
        side_(g.n, 0) {}

  void run() {
    std::vector<Index> all(g_.n);
    std::iota(all.begin(), all.end(), Index{0});
    tree.roots = dissect(all);
  }

  std::vector<Index> order;
  SeparatorTree tree;

 private:
  const AdjacencyGraph& g_;
  Index leaf_size_;
  std::vector<Index> mark_;
  Index stamp_ = 0;
  std::vector<Index> level_;
  std::vector<int> side_;

  // Labels `verts` as the active subset.
  void activate(std::span<const Index> verts) {
    ++stamp_;
    for (Index v : verts) mark_[v] = stamp_;
  }
  bool active(Index v) const { return mark_[v] == stamp_; }

  std::vector<std::vector<Index>> components(std::vector<Index> verts) {
    std::sort(verts.begin(), verts.end());
    activate(verts);
    std::vector<std::vector<Index>> comps;
    const Index visit = ++stamp_;
    // Vertices of the subset carry stamp visit-1 until they are visited.
    for (Index s : verts) {
      if (mark_[s] != visit - 1) continue;
      std::vector<Index> comp{s};
      mark_[s] = visit;
      for (std::size_t h = 0; h < comp.size(); ++h)
        for (Index u : g_.neighbors(comp[h]))
          if (mark_[u] == visit - 1) {
            mark_[u] = visit;
            comp.push_back(u);
          }
      std::sort(comp.begin(), comp.end());
      comps.push_back(std::move(comp));
    }
    return comps;
  }

  // BFS level structure over the active subset; returns levels.
  std::vector<std::vector<Index>> bfs_levels(Index root) {
    std::vector<std::vector<Index>> levels{{root}};
    level_[root] = 0;
    std::vector<Index> touched{root};
    while (true) {
      std::vector<Index> next;
      for (Index v : levels.back())
        for (Index u : g_.neighbors(v))
          if (active(u) && level_[u] == kNone) {
            level_[u] = static_cast<Index>(levels.size());
            next.push_back(u);
            touched.push_back(u);
          }
      if (next.empty()) break;
      std::sort(next.begin(), next.end());
      levels.push_back(std::move(next));
    }
    for (Index v : touched) level_[v] = kNone;
    return levels;
  }

  // Gibbs-Poole-Stockmeyer style search for a pseudo-peripheral vertex.
  std::vector<std::vector<Index>> peripheral_levels(Index start) {
    auto levels = bfs_levels(start);
    while (true) {
      const auto& last = levels.back();
      Index cand = last.front();
      for (Index v : last)
        if (g_.degree(v) < g_.degree(cand)) cand = v;
      auto trial = bfs_levels(cand);
      if (trial.size() <= levels.size()) return levels;
      levels = std::move(trial);
    }
  }

  std::vector<Index> dissect(std::vector<Index> verts) {
    std::vector<Index> ids;
    for (auto& comp : components(std::move(verts))) ids.push_back(dissect_connected(comp));
    return ids;
  }

  Index dissect_connected(const std::vector<Index>& comp) {
    const Index size = static_cast<Index>(comp.size());
    if (size <= leaf_size_) {
      auto local = minimum_degree_order(g_, comp);
      order.insert(order.end(), local.begin(), local.end());
      tree.nodes.push_back({std::move(local), {}});
      return static_cast<Index>(tree.nodes.size()) - 1;
    }
    activate(comp);
    auto levels = peripheral_levels(comp.front());
    std::vector<Index> part_a, part_b, sep;
    if (levels.size() < 3) {
      // No vertex cut separates two nonempty sides from this root: the root
      // alone forms a domain under the rest.
      part_a = levels[0];
      sep = levels[1];
    } else {
      const Index last_allowed = static_cast<Index>(levels.size()) - 2;
      Index before = 0, chosen = 1;
      for (Index l = 0; l < static_cast<Index>(levels.size()); ++l) {
        before += static_cast<Index>(levels[l].size());
        if (2 * before >= size) {
          chosen = l;
          break;
        }
      }
      chosen = std::clamp<Index>(chosen, 1, last_allowed);
      for (Index l = 0; l < static_cast<Index>(levels.size()); ++l) {
        auto& dst = l < chosen ? part_a : (l > chosen ? part_b : sep);
        dst.insert(dst.end(), levels[l].begin(), levels[l].end());
      }
      refine(part_a, part_b, sep);
    }
    check_cut(part_a, part_b);
    std::sort(sep.begin(), sep.end());

    // The subset stamp is clobbered by recursion, so children are collected
    // before the separator is numbered.
    auto ids_a = part_a.empty() ? std::vector<Index>{} : dissect(part_a);
    auto ids_b = part_b.empty() ? std::vector<Index>{} : dissect(part_b);
    order.insert(order.end(), sep.begin(), sep.end());
    SeparatorTree::Node node{sep, ids_a};
    node.children.insert(node.children.end(), ids_b.begin(), ids_b.end());
    tree.nodes.push_back(std::move(node));
    return static_cast<Index>(tree.nodes.size()) - 1;
  }

  // One boundary pass: a separator vertex with no neighbour on one side can
  // join that other side without reconnecting the parts.
  void refine(std::vector<Index>& part_a, std::vector<Index>& part_b, std::vector<Index>& sep) {
    for (Index v : part_a) side_[v] = 1;
    for (Index v : part_b) side_[v] = 2;
    for (Index v : sep) side_[v] = 3;
    std::sort(sep.begin(), sep.end());
    std::vector<Index> kept;
    for (Index v : sep) {
      bool touches_a = false, touches_b = false;
      for (Index u : g_.neighbors(v)) {
        if (!active(u)) continue;
        touches_a |= side_[u] == 1;
        touches_b |= side_[u] == 2;
      }
      int dest = 0;
      if (!touches_a && !touches_b)
        dest = part_a.size() <= part_b.size() ? 1 : 2;
      else if (!touches_a)
        dest = 2;
      else if (!touches_b)
        dest = 1;
      if (dest == 1) {
        side_[v] = 1;
        part_a.push_back(v);
      } else if (dest == 2) {
        side_[v] = 2;
        part_b.push_back(v);
      } else {
        kept.push_back(v);
      }
    }
    sep.swap(kept);
    for (Index v : part_a) side_[v] = 0;
    for (Index v : part_b) side_[v] = 0;
    for (Index v : sep) side_[v] = 0;
  }

  void check_cut(const std::vector<Index>& part_a, const std::vector<Index>& part_b) {
    ++stamp_;
    const Index a_stamp = stamp_;
    for (Index v : part_a) mark_[v] = a_stamp;
    for (Index v : part_b)
      for (Index u : g_.neighbors(v))
        if (mark_[u] == a_stamp) throw StructuralError("separator is not a vertex cut");
  }
};

}  // namespace detail

struct Dissection {
  Permutation perm;
  SeparatorTree tree;
};

// Nested dissection: separators are numbered after both sub-domains, domains
// of at most leaf_size vertices are ordered by minimum degree.
inline Dissection nested_dissection(const AdjacencyGraph& g, Index leaf_size = 64) {
  detail::Dissector d(g, leaf_size);
  d.run();
  return {Permutation::from_order(std::move(d.order)), std::move(d.tree)};
}

// Liu's algorithm with path compression over the lower pattern.
template <typename Scalar>
EliminationTree elimination_tree(const SparseMatrix<Scalar>& a) {
  const Index n = a.n;
  // Row lists of the strictly-lower part: for row i, columns j < i.
  std::vector<Index> rowptr(n + 1, 0);
  for (Index j = 0; j < n; ++j)
    for (Index i : a.rows(j))
      if (i > j) ++rowptr[i + 1];
  std::partial_sum(rowptr.begin(), rowptr.end(), rowptr.begin());
  std::vector<Index> cols(rowptr.back());
  std::vector<Index> fill(rowptr.begin(), rowptr.end() - 1);
  for (Index j = 0; j < n; ++j)
    for (Index i : a.rows(j))
      if (i > j) cols[fill[i]++] = j;

  EliminationTree t;
  t.parent.assign(n, kNone);
  std::vector<Index> ancestor(n, kNone);
  for (Index i = 0; i < n; ++i) {
    for (Index k = rowptr[i]; k < rowptr[i + 1]; ++k) {
      Index r = cols[k];
      while (ancestor[r] != kNone && ancestor[r] != i) {
        Index next = ancestor[r];
        ancestor[r] = i;
        r = next;
      }
      if (ancestor[r] == kNone) {
        ancestor[r] = i;
        t.parent[r] = i;
      }
    }
  }
  return t;
}

// Post-order of a forest: roots ascending, children ascending.
inline Permutation tree_postorder(const EliminationTree& t) {
  const auto kids = t.children();
  std::vector<Index> order;
  order.reserve(t.parent.size());
  std::vector<std::pair<Index, std::size_t>> stack;
  for (Index r : t.roots()) {
    stack.emplace_back(r, 0);
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      if (next < kids[v].size()) {
        Index c = kids[v][next++];
        stack.emplace_back(c, 0);
      } else {
        order.push_back(v);
        stack.pop_back();
      }
    }
  }
  return Permutation::from_order(std::move(order));
}

// Relabels the tree in post-order and composes the relabeling onto p.
inline std::pair<Permutation, EliminationTree> postorder_permute(const EliminationTree& t,
                                                                 const Permutation& p) {
  auto post = tree_postorder(t);
  EliminationTree relabeled;
  relabeled.parent.assign(t.parent.size(), kNone);
  for (Index v = 0; v < t.size(); ++v)
    if (t.parent[v] != kNone) relabeled.parent[post.perm[v]] = post.perm[t.parent[v]];
  return {p.then(post), std::move(relabeled)};
}

}  // namespace spchol
