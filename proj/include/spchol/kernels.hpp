#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "spchol/panel_store.hpp"
#include "spchol/symbolic.hpp"

namespace spchol {

enum class FactorForm { llt, ldlt };
enum class KernelVariant { buffered, direct };

// ---------------------------------------------------------------------------
// Flop accounting. potrf(k) = sum_{c=1..k} c^2 is the exact operation count of
// an unblocked Cholesky (1 sqrt, c-1 divisions, (c-1)c update flops per
// column), so supernodal totals equal the per-column count sum_j |struct(j)|^2
// however the columns are grouped.
// ---------------------------------------------------------------------------

inline double flops_potrf(Index k) {
  const double kk = static_cast<double>(k);
  return kk * (kk + 1) * (2 * kk + 1) / 6;
}
inline double flops_trsm(Index m, Index k) {
  return static_cast<double>(m) * static_cast<double>(k) * static_cast<double>(k);
}
inline double flops_gemm(Index m, Index n, Index k) {
  return 2.0 * static_cast<double>(m) * static_cast<double>(n) * static_cast<double>(k);
}
// Trailing update of n facing rows against m rows (the first n of which are
// the facing rows): the strictly upper n x n corner is skipped.
inline double flops_update(Index m, Index n, Index k) {
  return flops_gemm(m, n, k) -
         static_cast<double>(k) * static_cast<double>(n) * static_cast<double>(n - 1);
}
inline double flops_ldlt_trsm(Index m, Index k) {
  return flops_trsm(m, k) + static_cast<double>(m) * static_cast<double>(k);
}
inline double flops_ldlt_update(Index m, Index n, Index k) {
  return flops_update(m, n, k) + static_cast<double>(m) * static_cast<double>(k);
}

// ---------------------------------------------------------------------------
// Diagonal block and panel solves.
// ---------------------------------------------------------------------------

// In-place lower Cholesky of a square block; the strict upper part is never
// read or written. `first_col` offsets the column reported on failure.
template <typename Scalar>
void potrf_block(DenseBlockView<Scalar> d, double pivot_threshold, Index first_col = 0) {
  const Index w = d.cols;
  for (Index j = 0; j < w; ++j) {
    Scalar* cj = d.data + j * d.ld;
    const Scalar pivot = cj[j];
    if (!acceptable_cholesky_pivot(pivot, pivot_threshold))
      throw NotPositiveDefinite(first_col + j);
    const Scalar root = std::sqrt(pivot);
    cj[j] = root;
    for (Index i = j + 1; i < w; ++i) cj[i] /= root;
    for (Index k = j + 1; k < w; ++k) {
      Scalar* ck = d.data + k * d.ld;
      const Scalar t = cj[k];
      for (Index i = k; i < w; ++i) ck[i] -= cj[i] * t;
    }
  }
}

// B <- B * L^{-T} for the stacked off-diagonal rows of one panel.
template <typename Scalar>
void trsm_panel(DenseBlockView<Scalar> l, DenseBlockView<Scalar> b, Index first_col = 0) {
  const Index w = l.cols, m = b.rows;
  for (Index j = 0; j < w; ++j) {
    Scalar* bj = b.data + j * b.ld;
    for (Index k = 0; k < j; ++k) {
      const Scalar t = l(j, k);
      const Scalar* bk = b.data + k * b.ld;
      for (Index i = 0; i < m; ++i) bj[i] -= bk[i] * t;
    }
    const Scalar diag = l(j, j);
    if (diag == Scalar{}) throw DivergentSolve(first_col + j);
    for (Index i = 0; i < m; ++i) bj[i] /= diag;
  }
}

// In-place L D L^T without pivoting: d on the diagonal, unit L below it.
template <typename Scalar>
void ldlt_block(DenseBlockView<Scalar> d, double pivot_threshold, Index first_col = 0) {
  const Index w = d.cols;
  for (Index j = 0; j < w; ++j) {
    Scalar* cj = d.data + j * d.ld;
    const Scalar pivot = cj[j];
    if (!(std::abs(pivot) > pivot_threshold)) throw SingularPivot(first_col + j);
    for (Index k = j + 1; k < w; ++k) {
      Scalar* ck = d.data + k * d.ld;
      const Scalar t = cj[k] / pivot;
      for (Index i = k; i < w; ++i) ck[i] -= cj[i] * t;
    }
    for (Index i = j + 1; i < w; ++i) cj[i] /= pivot;
  }
}

// B <- B * (D L^T)^{-1}, with L unit lower and D stored on its diagonal.
template <typename Scalar>
void ldlt_trsm(DenseBlockView<Scalar> l, DenseBlockView<Scalar> b, Index first_col = 0) {
  const Index w = l.cols, m = b.rows;
  for (Index j = 0; j < w; ++j) {
    Scalar* bj = b.data + j * b.ld;
    for (Index k = 0; k < j; ++k) {
      const Scalar t = l(k, k) * l(j, k);
      const Scalar* bk = b.data + k * b.ld;
      for (Index i = 0; i < m; ++i) bj[i] -= bk[i] * t;
    }
    const Scalar diag = l(j, j);
    if (diag == Scalar{}) throw DivergentSolve(first_col + j);
    for (Index i = 0; i < m; ++i) bj[i] /= diag;
  }
}

// Diagonal factorization plus the grouped solve of all off-diagonal rows.
template <typename Scalar>
void factor_panel(const SymbolStructure& s, PanelStore<Scalar>& store, Index p, FactorForm form,
                  double pivot_threshold) {
  const auto& pn = s.panels[p];
  auto all = store.view(p);
  DenseBlockView<Scalar> diag{all.data, pn.width(), pn.width(), all.ld, all.row_map};
  auto below = all.sub(pn.width(), pn.offdiag_height());
  if (form == FactorForm::llt) {
    potrf_block(diag, pivot_threshold, pn.first_col);
    if (below.rows > 0) trsm_panel(diag, below, pn.first_col);
  } else {
    ldlt_block(diag, pivot_threshold, pn.first_col);
    if (below.rows > 0) ldlt_trsm(diag, below, pn.first_col);
  }
}

// ---------------------------------------------------------------------------
// Panel-to-panel updates.
// ---------------------------------------------------------------------------

// Geometry of the update of panel p onto the panel faced by block `first`.
struct UpdateShape {
  Index dst;       // facing panel q
  Index row0;      // first local row of p involved (first row facing q)
  Index m;         // rows of p from row0 to the end
  Index n;         // rows of p facing q
  Index k;         // width of p
  Index end_block; // one past the last block of p facing q
};

inline UpdateShape update_shape(const SymbolStructure& s, Index p, Index first) {
  const auto& pn = s.panels[p];
  const auto& b0 = s.blocks[first];
  UpdateShape u{b0.facing, b0.offset, pn.rows - b0.offset, 0, pn.width(), first};
  while (u.end_block < pn.last_block && s.blocks[u.end_block].facing == u.dst)
    u.n += s.blocks[u.end_block++].height();
  return u;
}

// Where a run of source rows lands in the destination panel.
struct ScatterSegment {
  Index src_row;  // relative to UpdateShape::row0
  Index count;
  Index dst_row;  // local row in the destination panel
};

namespace detail {

inline ScatterSegment locate_segment(const SymbolStructure& s, const UpdateShape& u,
                                     const Block& blk) {
  const auto& q = s.panels[u.dst];
  Index dst_row;
  if (blk.facing == u.dst) {
    dst_row = blk.first_row - q.first_col;
  } else {
    Index db = s.find_block(u.dst, blk.first_row);
    if (db == kNone || blk.last_row > s.blocks[db].last_row)
      throw StructuralError("update target rows [" + std::to_string(blk.first_row) + ", " +
                            std::to_string(blk.last_row) + ") have no slot in panel " +
                            std::to_string(u.dst));
    dst_row = s.blocks[db].offset + (blk.first_row - s.blocks[db].first_row);
  }
  return {blk.offset - u.row0, blk.height(), dst_row};
}

}  // namespace detail

// Per-worker scratch for the buffered update; never shared between tasks
// that run concurrently.
template <typename Scalar>
struct WorkBuffer {
  std::vector<Scalar> product;
  std::vector<ScatterSegment> segments;
  std::vector<Index> dst_cols;
  std::vector<Scalar> coef;

  explicit WorkBuffer(std::size_t capacity = 0) { product.reserve(capacity); }
};

// Largest m x n outer product produced by any update of the symbol.
inline std::size_t max_update_buffer(const SymbolStructure& s) {
  std::size_t best = 0;
  for (Index p = 0; p < s.panel_count(); ++p) {
    const auto& pn = s.panels[p];
    for (Index b = pn.first_block + 1; b < pn.last_block;) {
      auto u = update_shape(s, p, b);
      best = std::max(best, static_cast<std::size_t>(u.m * u.n));
      b = u.end_block;
    }
  }
  return best;
}

// C_q -= A_rest * A_i^T (LL^T) or C_q -= (A_rest * D) * A_i^T (LDL^T): the
// product goes to a contiguous buffer first, then is scattered into the
// facing panel through the row maps. Only the lower triangle is touched.
template <typename Scalar>
void update_buffered(const SymbolStructure& s, PanelStore<Scalar>& store, Index p, Index first,
                     WorkBuffer<Scalar>& buf, FactorForm form = FactorForm::llt) {
  const auto u = update_shape(s, p, first);
  const Index ldp = store.ld(p);
  const Scalar* a = store.data(p) + u.row0;  // A_rest(r, k) = a[r + k * ldp]
  const Scalar* diag = store.data(p);
  const Index m = u.m;

  buf.product.assign(static_cast<std::size_t>(m * u.n), Scalar{});
  Scalar* w = buf.product.data();
  buf.coef.resize(static_cast<std::size_t>(4 * u.k));
  constexpr Index kCols = 4;
  for (Index c0 = 0; c0 < u.n; c0 += kCols) {
    const Index nc = std::min(kCols, u.n - c0);
    for (Index k = 0; k < u.k; ++k) {
      const Scalar* ak = a + k * ldp;
      Scalar coef[kCols] = {};
      for (Index t = 0; t < nc; ++t)
        coef[t] = form == FactorForm::ldlt ? diag[k + k * ldp] * ak[c0 + t] : ak[c0 + t];
      if (nc == kCols) {
        Scalar* w0 = w + (c0 + 0) * m;
        Scalar* w1 = w + (c0 + 1) * m;
        Scalar* w2 = w + (c0 + 2) * m;
        Scalar* w3 = w + (c0 + 3) * m;
        for (Index r = c0; r < m; ++r) {
          const Scalar ar = ak[r];
          w0[r] += ar * coef[0];
          w1[r] += ar * coef[1];
          w2[r] += ar * coef[2];
          w3[r] += ar * coef[3];
        }
      } else {
        for (Index t = 0; t < nc; ++t) {
          Scalar* wt = w + (c0 + t) * m;
          for (Index r = c0; r < m; ++r) wt[r] += ak[r] * coef[t];
        }
      }
    }
  }

  // Scatter through the destination row map.
  const auto& pn = s.panels[p];
  const auto& q = s.panels[u.dst];
  buf.segments.clear();
  for (Index b = first; b < pn.last_block; ++b)
    buf.segments.push_back(detail::locate_segment(s, u, s.blocks[b]));
  buf.dst_cols.clear();
  for (Index b = first; b < u.end_block; ++b)
    for (Index r = s.blocks[b].first_row; r < s.blocks[b].last_row; ++r)
      buf.dst_cols.push_back(r - q.first_col);

  Scalar* dst = store.data(u.dst);
  const Index ldq = store.ld(u.dst);
  for (Index c = 0; c < u.n; ++c) {
    Scalar* dcol = dst + buf.dst_cols[c] * ldq;
    const Scalar* wc = w + c * m;
    for (const auto& seg : buf.segments) {
      const Index lo = std::max<Index>(seg.src_row, c);
      const Index hi = seg.src_row + seg.count;
      for (Index r = lo; r < hi; ++r) dcol[seg.dst_row + (r - seg.src_row)] -= wc[r];
    }
  }
}

// Same map as update_buffered, without the temporary: every entry's dot
// product is formed in a register and subtracted straight into its final
// position in the facing panel. Accumulation order over k matches the
// buffered kernel, so both variants agree bit for bit.
template <typename Scalar>
void update_scatter_direct(const SymbolStructure& s, PanelStore<Scalar>& store, Index p,
                           Index first, FactorForm form = FactorForm::llt) {
  const auto u = update_shape(s, p, first);
  const Index ldp = store.ld(p);
  const Scalar* a = store.data(p) + u.row0;
  const Scalar* diag = store.data(p);
  const auto& pn = s.panels[p];
  const auto& q = s.panels[u.dst];
  Scalar* dst = store.data(u.dst);
  const Index ldq = store.ld(u.dst);

  for (Index ib = first; ib < u.end_block; ++ib) {
    const auto& facing_blk = s.blocks[ib];
    for (Index cc = 0; cc < facing_blk.height(); ++cc) {
      const Index c = facing_blk.offset - u.row0 + cc;
      Scalar* dcol = dst + (facing_blk.first_row + cc - q.first_col) * ldq;
      for (Index b = first; b < pn.last_block; ++b) {
        const auto seg = detail::locate_segment(s, u, s.blocks[b]);
        const Index lo = std::max<Index>(seg.src_row, c);
        const Index hi = seg.src_row + seg.count;
        for (Index r = lo; r < hi; ++r) {
          Scalar acc{};
          for (Index k = 0; k < u.k; ++k) {
            const Scalar coef =
                form == FactorForm::ldlt ? diag[k + k * ldp] * a[c + k * ldp] : a[c + k * ldp];
            acc += a[r + k * ldp] * coef;
          }
          dcol[seg.dst_row + (r - seg.src_row)] -= acc;
        }
      }
    }
  }
}

}  // namespace spchol
