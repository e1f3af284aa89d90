#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "spchol/core.hpp"

namespace spchol {

enum class Storage { general, symmetric_lower };

template <typename Scalar>
struct Triplet {
  Index row;
  Index col;
  Scalar value;
};

// Compressed sparse column matrix. For symmetric_lower storage only the lower
// triangle (including the diagonal) is kept.
template <typename Scalar = double>
struct SparseMatrix {
  Index n = 0;
  std::vector<Index> colptr{0};
  std::vector<Index> rowidx;
  std::vector<Scalar> values;
  Storage stype = Storage::general;

  Index nnz() const { return static_cast<Index>(rowidx.size()); }
  bool symmetric() const { return stype == Storage::symmetric_lower; }

  std::span<const Index> rows(Index col) const {
    return {rowidx.data() + colptr[col], static_cast<std::size_t>(colptr[col + 1] - colptr[col])};
  }
  std::span<const Scalar> vals(Index col) const {
    return {values.data() + colptr[col], static_cast<std::size_t>(colptr[col + 1] - colptr[col])};
  }

  // Entry lookup; symmetric storage answers for both triangles.
  Scalar lookup(Index i, Index j) const {
    if (symmetric() && i < j) std::swap(i, j);
    auto r = rows(j);
    auto it = std::lower_bound(r.begin(), r.end(), i);
    if (it == r.end() || *it != i) return Scalar{};
    return values[colptr[j] + (it - r.begin())];
  }

  void validate() const {
    if (n < 0) throw StructuralError("negative matrix order");
    if (static_cast<Index>(colptr.size()) != n + 1 || colptr.front() != 0 ||
        colptr.back() != nnz() || values.size() != rowidx.size())
      throw StructuralError("inconsistent CSC array sizes");
    for (Index j = 0; j < n; ++j) {
      if (colptr[j + 1] < colptr[j]) throw StructuralError("colptr decreasing");
      for (Index k = colptr[j]; k < colptr[j + 1]; ++k) {
        Index i = rowidx[k];
        if (i < 0 || i >= n) throw StructuralError("row index out of range");
        if (k > colptr[j] && rowidx[k - 1] >= i)
          throw StructuralError("row indices not strictly increasing in column " +
                                std::to_string(j));
        if (symmetric() && i < j)
          throw StructuralError("upper entry in symmetric-lower storage");
      }
    }
  }

  // Builds a matrix from (row, col, value) entries; duplicates are summed.
  // For symmetric_lower, upper entries are mirrored into the lower triangle.
  static SparseMatrix from_triplets(Index n, std::vector<Triplet<Scalar>> entries,
                                    Storage stype) {
    if (stype == Storage::symmetric_lower) {
      for (auto& t : entries)
        if (t.row < t.col) std::swap(t.row, t.col);
    }
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      return std::tie(a.col, a.row) < std::tie(b.col, b.row);
    });
    SparseMatrix m;
    m.n = n;
    m.stype = stype;
    m.colptr.assign(n + 1, 0);
    m.rowidx.reserve(entries.size());
    m.values.reserve(entries.size());
    for (std::size_t k = 0; k < entries.size();) {
      const auto& t = entries[k];
      Scalar sum = t.value;
      std::size_t l = k + 1;
      while (l < entries.size() && entries[l].row == t.row && entries[l].col == t.col)
        sum += entries[l++].value;
      m.rowidx.push_back(t.row);
      m.values.push_back(sum);
      ++m.colptr[t.col + 1];
      k = l;
    }
    std::partial_sum(m.colptr.begin(), m.colptr.end(), m.colptr.begin());
    m.validate();
    return m;
  }

  std::vector<Triplet<Scalar>> to_triplets() const {
    std::vector<Triplet<Scalar>> out;
    out.reserve(rowidx.size());
    for (Index j = 0; j < n; ++j)
      for (Index k = colptr[j]; k < colptr[j + 1]; ++k) out.push_back({rowidx[k], j, values[k]});
    return out;
  }
};

// Undirected graph in CSR form: symmetric, no self loops.
struct AdjacencyGraph {
  Index n = 0;
  std::vector<Index> xadj{0};
  std::vector<Index> adj;

  std::span<const Index> neighbors(Index v) const {
    return {adj.data() + xadj[v], static_cast<std::size_t>(xadj[v + 1] - xadj[v])};
  }
  Index degree(Index v) const { return xadj[v + 1] - xadj[v]; }

  static AdjacencyGraph from_edges(Index n, std::vector<std::pair<Index, Index>> edges) {
    std::vector<std::pair<Index, Index>> both;
    both.reserve(edges.size() * 2);
    for (auto [u, v] : edges) {
      if (u == v) continue;
      both.emplace_back(u, v);
      both.emplace_back(v, u);
    }
    std::sort(both.begin(), both.end());
    both.erase(std::unique(both.begin(), both.end()), both.end());
    AdjacencyGraph g;
    g.n = n;
    g.xadj.assign(n + 1, 0);
    g.adj.reserve(both.size());
    for (auto [u, v] : both) {
      ++g.xadj[u + 1];
      g.adj.push_back(v);
    }
    std::partial_sum(g.xadj.begin(), g.xadj.end(), g.xadj.begin());
    return g;
  }
};

// Pattern of A + A^T in symmetric-lower storage. Entries that exist only in
// A^T get the value zero.
template <typename Scalar>
SparseMatrix<Scalar> symmetrize_pattern(const SparseMatrix<Scalar>& a) {
  if (a.symmetric()) return a;
  std::vector<Triplet<Scalar>> t;
  t.reserve(a.rowidx.size());
  for (Index j = 0; j < a.n; ++j) {
    for (Index k = a.colptr[j]; k < a.colptr[j + 1]; ++k) {
      Index i = a.rowidx[k];
      if (i >= j)
        t.push_back({i, j, a.values[k]});
      else
        t.push_back({j, i, Scalar{}});
    }
  }
  return SparseMatrix<Scalar>::from_triplets(a.n, std::move(t), Storage::symmetric_lower);
}

template <typename Scalar>
AdjacencyGraph adjacency_graph(const SparseMatrix<Scalar>& a) {
  std::vector<std::pair<Index, Index>> edges;
  edges.reserve(a.rowidx.size());
  for (Index j = 0; j < a.n; ++j)
    for (Index i : a.rows(j))
      if (i != j) edges.emplace_back(i, j);
  return AdjacencyGraph::from_edges(a.n, std::move(edges));
}

// 5-point (2D) or 7-point (3D) Dirichlet Laplacian, symmetric-lower storage.
// Grid point (x, y, z) maps to x + nx * (y + ny * z).
inline SparseMatrix<double> gen_laplacian(int dims, std::span<const Index> extents) {
  if (dims != 2 && dims != 3) throw std::invalid_argument("laplacian dims must be 2 or 3");
  if (static_cast<int>(extents.size()) != dims)
    throw std::invalid_argument("laplacian needs one extent per dimension");
  for (Index e : extents)
    if (e < 1) throw std::invalid_argument("laplacian extents must be >= 1");
  const Index nx = extents[0], ny = extents[1], nz = dims == 3 ? extents[2] : 1;
  const Index n = nx * ny * nz;
  SparseMatrix<double> m;
  m.n = n;
  m.stype = Storage::symmetric_lower;
  m.colptr.assign(n + 1, 0);
  m.rowidx.reserve(n * (1 + dims));
  m.values.reserve(n * (1 + dims));
  for (Index z = 0; z < nz; ++z)
    for (Index y = 0; y < ny; ++y)
      for (Index x = 0; x < nx; ++x) {
        Index v = x + nx * (y + ny * z);
        m.rowidx.push_back(v);
        m.values.push_back(2.0 * dims);
        if (x + 1 < nx) {
          m.rowidx.push_back(v + 1);
          m.values.push_back(-1.0);
        }
        if (y + 1 < ny) {
          m.rowidx.push_back(v + nx);
          m.values.push_back(-1.0);
        }
        if (z + 1 < nz) {
          m.rowidx.push_back(v + nx * ny);
          m.values.push_back(-1.0);
        }
        m.colptr[v + 1] = static_cast<Index>(m.rowidx.size());
      }
  return m;
}

inline SparseMatrix<double> gen_laplacian(int dims, std::initializer_list<Index> extents) {
  std::vector<Index> e(extents);
  return gen_laplacian(dims, std::span<const Index>(e));
}

// Symmetric permutation P A P^T of a symmetric-lower matrix; perm maps
// old index -> new index.
template <typename Scalar>
SparseMatrix<Scalar> permute_symmetric(const SparseMatrix<Scalar>& a, std::span<const Index> perm) {
  if (!a.symmetric()) throw std::invalid_argument("permute_symmetric needs symmetric-lower input");
  std::vector<Triplet<Scalar>> t;
  t.reserve(a.rowidx.size());
  for (Index j = 0; j < a.n; ++j)
    for (Index k = a.colptr[j]; k < a.colptr[j + 1]; ++k)
      t.push_back({perm[a.rowidx[k]], perm[j], a.values[k]});
  return SparseMatrix<Scalar>::from_triplets(a.n, std::move(t), Storage::symmetric_lower);
}

// Values a pattern for numeric use: off-diagonals -1, diagonal = degree + 1.
// The result is strictly diagonally dominant, hence SPD.
template <typename Scalar>
SparseMatrix<Scalar> spd_shift(const SparseMatrix<Scalar>& a) {
  auto s = symmetrize_pattern(a);
  std::vector<Index> degree(s.n, 0);
  for (Index j = 0; j < s.n; ++j)
    for (Index i : s.rows(j))
      if (i != j) {
        ++degree[i];
        ++degree[j];
      }
  std::vector<Triplet<Scalar>> t;
  for (Index j = 0; j < s.n; ++j) {
    t.push_back({j, j, Scalar(static_cast<double>(degree[j] + 1))});
    for (Index i : s.rows(j))
      if (i != j) t.push_back({i, j, Scalar(-1.0)});
  }
  return SparseMatrix<Scalar>::from_triplets(s.n, std::move(t), Storage::symmetric_lower);
}

// A + shift * I (diagonal entries are created when missing).
template <typename Scalar>
SparseMatrix<Scalar> add_diagonal(const SparseMatrix<Scalar>& a, Scalar shift) {
  auto t = a.to_triplets();
  for (Index j = 0; j < a.n; ++j) t.push_back({j, j, shift});
  return SparseMatrix<Scalar>::from_triplets(a.n, std::move(t), a.stype);
}

template <typename Scalar>
std::vector<Scalar> spmv(const SparseMatrix<Scalar>& a, std::span<const Scalar> x) {
  if (static_cast<Index>(x.size()) != a.n) throw std::invalid_argument("spmv: dimension mismatch");
  std::vector<Scalar> y(a.n, Scalar{});
  for (Index j = 0; j < a.n; ++j) {
    for (Index k = a.colptr[j]; k < a.colptr[j + 1]; ++k) {
      Index i = a.rowidx[k];
      y[i] += a.values[k] * x[j];
      if (a.symmetric() && i != j) y[j] += a.values[k] * x[i];
    }
  }
  return y;
}

template <typename Scalar>
double norm_inf(const SparseMatrix<Scalar>& a) {
  std::vector<double> rowsum(a.n, 0.0);
  for (Index j = 0; j < a.n; ++j)
    for (Index k = a.colptr[j]; k < a.colptr[j + 1]; ++k) {
      Index i = a.rowidx[k];
      rowsum[i] += std::abs(a.values[k]);
      if (a.symmetric() && i != j) rowsum[j] += std::abs(a.values[k]);
    }
  return rowsum.empty() ? 0.0 : *std::max_element(rowsum.begin(), rowsum.end());
}

template <typename Scalar>
double norm_inf(std::span<const Scalar> v) {
  double m = 0.0;
  for (const auto& x : v) m = std::max(m, static_cast<double>(std::abs(x)));
  return m;
}

// ||b - A x||_inf / (||A||_inf ||x||_inf + ||b||_inf)
template <typename Scalar>
double residual_norm(const SparseMatrix<Scalar>& a, std::span<const Scalar> x,
                     std::span<const Scalar> b) {
  if (static_cast<Index>(b.size()) != a.n)
    throw std::invalid_argument("residual_norm: dimension mismatch");
  auto ax = spmv(a, x);
  double num = 0.0;
  for (Index i = 0; i < a.n; ++i) num = std::max(num, static_cast<double>(std::abs(b[i] - ax[i])));
  double den = norm_inf(a) * norm_inf(x) + norm_inf(b);
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return num / den;
}

template <typename Scalar>
double max_abs_diagonal(const SparseMatrix<Scalar>& a) {
  double m = 0.0;
  for (Index j = 0; j < a.n; ++j) m = std::max(m, magnitude(a.lookup(j, j)));
  return m;
}

}  // namespace spchol
