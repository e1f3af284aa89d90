#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"

using namespace spchol;

namespace {

AdjacencyGraph path_graph(Index n) {
  std::vector<std::pair<Index, Index>> e;
  for (Index v = 0; v + 1 < n; ++v) e.emplace_back(v, v + 1);
  return AdjacencyGraph::from_edges(n, e);
}

// Fill under an ordering, by the dense boolean oracle.
Index fill_with(const SparseMatrix<double>& a, const Permutation& p) {
  return oracle::symbolic_fill(permute_symmetric(a, p.perm));
}

}  // namespace

TEST(Permutation, ComposeAndInverse) {
  auto p = Permutation::from_order({2, 0, 1});
  EXPECT_EQ(p.perm, (std::vector<Index>{1, 2, 0}));
  auto q = p.then(Permutation::from_order({1, 2, 0}));
  q.validate();
  for (Index k = 0; k < 3; ++k) EXPECT_EQ(q.perm[q.iperm[k]], k);
  EXPECT_THROW(Permutation::from_order({0, 0, 1}), StructuralError);
}

TEST(NestedDissection, CompleteGraphWellFormed) {
  std::vector<std::pair<Index, Index>> e;
  for (Index i = 0; i < 4; ++i)
    for (Index j = i + 1; j < 4; ++j) e.emplace_back(i, j);
  auto nd = nested_dissection(AdjacencyGraph::from_edges(4, e), 1);
  nd.perm.validate();
  EXPECT_TRUE(nd.tree.well_formed(4, 1));
}

TEST(NestedDissection, PathMiddleLast) {
  auto g = path_graph(7);
  auto nd = nested_dissection(g, 1);
  EXPECT_EQ(nd.perm.iperm.back(), 3);
  EXPECT_TRUE(nd.tree.well_formed(7, 1));
  // Exhaustive check that vertex 3 cuts the path into halves of size <= 4.
  std::vector<int> comp(7, -1);
  int c = 0;
  for (Index s = 0; s < 7; ++s) {
    if (s == 3 || comp[s] >= 0) continue;
    std::vector<Index> stack{s};
    comp[s] = c;
    Index size = 0;
    while (!stack.empty()) {
      Index v = stack.back();
      stack.pop_back();
      ++size;
      for (Index u : g.neighbors(v))
        if (u != 3 && comp[u] < 0) {
          comp[u] = c;
          stack.push_back(u);
        }
    }
    EXPECT_LE(size, 4);
    ++c;
  }
  EXPECT_EQ(c, 2);
}

TEST(NestedDissection, GridFillNotWorseThanNatural) {
  for (Index k = 8; k <= 16; k += 4) {
    auto a = gen_laplacian(2, {k, k});
    auto nd = nested_dissection(adjacency_graph(a), 4);
    EXPECT_TRUE(nd.tree.well_formed(a.n, 4));
    EXPECT_LE(fill_with(a, nd.perm), fill_with(a, Permutation::identity(a.n))) << k;
  }
}

TEST(NestedDissection, DisconnectedComponents) {
  std::vector<std::pair<Index, Index>> e{{0, 1}, {1, 2}, {3, 4}, {4, 5}, {5, 6}};
  auto nd = nested_dissection(AdjacencyGraph::from_edges(8, e), 1);
  nd.perm.validate();
  EXPECT_TRUE(nd.tree.well_formed(8, 1));
}

TEST(NestedDissection, LeavesRespectLeafSize) {
  auto a = gen_laplacian(3, {6, 6, 6});
  for (Index leaf : {1, 8, 64, 1000}) {
    auto nd = nested_dissection(adjacency_graph(a), leaf);
    EXPECT_TRUE(nd.tree.well_formed(a.n, leaf)) << leaf;
  }
}

TEST(EliminationTree, Diagonal) {
  auto a = SparseMatrix<double>::from_triplets(3, {{0, 0, 1}, {1, 1, 1}, {2, 2, 1}},
                                               Storage::symmetric_lower);
  EXPECT_EQ(elimination_tree(a).parent, (std::vector<Index>{kNone, kNone, kNone}));
}

TEST(EliminationTree, Tridiagonal) {
  auto a = gen_laplacian(2, {4, 1});
  EXPECT_EQ(elimination_tree(a).parent, (std::vector<Index>{1, 2, 3, kNone}));
}

TEST(EliminationTree, Arrow) {
  std::vector<Triplet<double>> t;
  for (Index i = 0; i < 5; ++i) t.push_back({4, i, 1.0});
  auto a = SparseMatrix<double>::from_triplets(5, t, Storage::symmetric_lower);
  EXPECT_EQ(elimination_tree(a).parent, (std::vector<Index>{4, 4, 4, 4, kNone}));
}

TEST(EliminationTree, MatchesDenseFillOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = oracle::random_spd(30, 0.08, rng);
    auto t = elimination_tree(a);
    // parent(j) = first off-diagonal row of L(:, j) from dense Cholesky.
    auto l = oracle::cholesky(oracle::to_dense(a), a.n);
    for (Index j = 0; j < a.n; ++j) {
      Index expect = kNone;
      for (Index i = j + 1; i < a.n && expect == kNone; ++i)
        if (oracle::at(l, a.n, i, j) != 0.0) expect = i;
      EXPECT_EQ(t.parent[j], expect);
    }
  }
}

TEST(Postorder, AlreadyPostorderedIsIdentity) {
  EliminationTree t{{1, 2, 3, kNone}};
  auto [p, t2] = postorder_permute(t, Permutation::identity(4));
  EXPECT_EQ(p.perm, (std::vector<Index>{0, 1, 2, 3}));
  EXPECT_EQ(t2.parent, t.parent);
}

TEST(Postorder, TwoRootForestContiguous) {
  // roots 4 and 5; children interleaved
  EliminationTree t{{4, 5, 4, 5, kNone, kNone}};
  auto [p, t2] = postorder_permute(t, Permutation::identity(6));
  EXPECT_TRUE(t2.topological());
  // Subtree of the first root occupies [0, 3), the second [3, 6).
  EXPECT_EQ(p.perm[4], 2);
  EXPECT_EQ(p.perm[5], 5);
  EXPECT_LT(p.perm[0], 3);
  EXPECT_LT(p.perm[2], 3);
}

TEST(Postorder, RandomTreesMonotone) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 20;
    EliminationTree t;
    t.parent.assign(n, kNone);
    // Random forest in a random labeling: parent chosen among later vertices
    // of a random order, then labels shuffled.
    std::vector<Index> label(n);
    std::iota(label.begin(), label.end(), 0);
    std::shuffle(label.begin(), label.end(), rng);
    for (Index k = 0; k + 1 < n; ++k) {
      std::uniform_int_distribution<Index> pick(k + 1, n);
      Index par = pick(rng);
      if (par < n) t.parent[label[k]] = label[par];
    }
    auto [p, t2] = postorder_permute(t, Permutation::identity(n));
    for (Index v = 0; v < n; ++v) {
      if (t2.parent[v] != kNone) {
        EXPECT_GT(t2.parent[v], v);
      }
      // same tree, relabeled
      const Index old = p.iperm[v];
      EXPECT_EQ(t2.parent[v], t.parent[old] == kNone ? kNone : p.perm[t.parent[old]]);
    }
    // children of every node occupy a contiguous range ending just before it
    std::vector<Index> size(n, 1);
    for (Index v = 0; v < n; ++v)
      if (t2.parent[v] != kNone) size[t2.parent[v]] += size[v];
    for (Index v = 0; v < n; ++v)
      for (Index u = v - size[v] + 1; u < v; ++u) {
        Index a = u;
        while (a != kNone && a != v) a = t2.parent[a];
        EXPECT_EQ(a, v);
      }
  }
}
