#pragma once

#include <span>
#include <vector>

#include "spchol/sparse_matrix.hpp"
#include "spchol/symbolic.hpp"

namespace spchol {

// Column-major view into a panel's dense storage.
template <typename Scalar>
struct DenseBlockView {
  Scalar* data = nullptr;
  Index rows = 0;
  Index cols = 0;
  Index ld = 0;
  const Index* row_map = nullptr;  // local row -> global row, optional

  Scalar& operator()(Index i, Index j) const { return data[i + j * ld]; }
  DenseBlockView sub(Index row, Index nrows) const {
    return {data + row, nrows, cols, ld, row_map ? row_map + row : nullptr};
  }
};

// Tall-and-skinny dense storage for every panel, laid out back to back.
// Local rows: the diagonal block first, then off-diagonal blocks ascending.
template <typename Scalar>
class PanelStore {
 public:
  PanelStore() = default;

  explicit PanelStore(const SymbolStructure& s) {
    offsets_.resize(s.panel_count() + 1, 0);
    row_offsets_.resize(s.panel_count() + 1, 0);
    for (Index p = 0; p < s.panel_count(); ++p) {
      const auto& pn = s.panels[p];
      offsets_[p + 1] = offsets_[p] + pn.rows * pn.width();
      row_offsets_[p + 1] = row_offsets_[p] + pn.rows;
    }
    data_.assign(offsets_.back(), Scalar{});
    row_map_.resize(row_offsets_.back());
    for (Index p = 0; p < s.panel_count(); ++p) {
      Index* map = row_map_.data() + row_offsets_[p];
      for (Index b = s.panels[p].first_block; b < s.panels[p].last_block; ++b) {
        const auto& blk = s.blocks[b];
        for (Index r = blk.first_row; r < blk.last_row; ++r) map[blk.offset + r - blk.first_row] = r;
      }
    }
    widths_.resize(s.panel_count());
    for (Index p = 0; p < s.panel_count(); ++p) widths_[p] = s.panels[p].width();
  }

  Index panel_count() const { return static_cast<Index>(widths_.size()); }
  Index ld(Index p) const { return row_offsets_[p + 1] - row_offsets_[p]; }
  Index width(Index p) const { return widths_[p]; }
  Scalar* data(Index p) { return data_.data() + offsets_[p]; }
  const Scalar* data(Index p) const { return data_.data() + offsets_[p]; }
  std::span<const Index> row_map(Index p) const {
    return {row_map_.data() + row_offsets_[p], static_cast<std::size_t>(ld(p))};
  }
  DenseBlockView<Scalar> view(Index p) {
    return {data(p), ld(p), width(p), ld(p), row_map_.data() + row_offsets_[p]};
  }
  std::span<const Scalar> raw() const { return data_; }
  std::span<Scalar> raw() { return data_; }

 private:
  std::vector<Scalar> data_;
  std::vector<Index> offsets_;
  std::vector<Index> row_offsets_;
  std::vector<Index> row_map_;
  std::vector<Index> widths_;
};

// Zeroed storage with the lower triangle of `a` (already permuted to the
// symbol's numbering) scattered into its slots.
template <typename Scalar>
PanelStore<Scalar> allocate_panels(const SymbolStructure& s, const SparseMatrix<Scalar>& a) {
  if (a.n != s.n || !a.symmetric())
    throw StructuralError("allocate_panels needs the permuted symmetric-lower matrix");
  PanelStore<Scalar> store(s);
  for (Index j = 0; j < a.n; ++j) {
    const Index p = s.col_to_panel[j];
    const Index c = j - s.panels[p].first_col;
    Scalar* col = store.data(p) + c * store.ld(p);
    auto rows = a.rows(j);
    auto vals = a.vals(j);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      Index local = s.local_row(p, rows[k]);
      if (local == kNone)
        throw StructuralError("entry (" + std::to_string(rows[k]) + ", " + std::to_string(j) +
                              ") has no slot in the symbol");
      col[local] += vals[k];
    }
  }
  return store;
}

// Dense column-major n x n copy of the stored lower factor (upper part zero).
template <typename Scalar>
std::vector<Scalar> gather_lower(const SymbolStructure& s, const PanelStore<Scalar>& store) {
  const Index n = s.n;
  std::vector<Scalar> dense(static_cast<std::size_t>(n * n), Scalar{});
  for (Index p = 0; p < s.panel_count(); ++p) {
    const auto& pn = s.panels[p];
    auto map = store.row_map(p);
    for (Index c = 0; c < pn.width(); ++c) {
      const Index gc = pn.first_col + c;
      for (Index r = 0; r < pn.rows; ++r) {
        const Index gr = map[r];
        if (gr >= gc) dense[gr + gc * n] = store.data(p)[r + c * store.ld(p)];
      }
    }
  }
  return dense;
}

}  // namespace spchol
