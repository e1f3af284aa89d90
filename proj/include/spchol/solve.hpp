#pragma once

#include <span>
#include <vector>

#include "spchol/kernels.hpp"
#include "spchol/ordering.hpp"

namespace spchol {

// Solves L L^T x = y (or L D L^T x = y) in the permuted numbering, in place.
template <typename Scalar>
void supernodal_solve_inplace(const SymbolStructure& s, const PanelStore<Scalar>& store,
                              std::span<Scalar> y, FactorForm form) {
  if (static_cast<Index>(y.size()) != s.n) throw std::invalid_argument("rhs size mismatch");
  const bool unit = form == FactorForm::ldlt;

  for (Index p = 0; p < s.panel_count(); ++p) {
    const auto& pn = s.panels[p];
    const Scalar* l = store.data(p);
    const Index ld = store.ld(p);
    auto map = store.row_map(p);
    for (Index c = 0; c < pn.width(); ++c) {
      const Scalar* col = l + c * ld;
      Scalar& xc = y[pn.first_col + c];
      if (!unit) xc /= col[c];
      for (Index r = c + 1; r < pn.rows; ++r) y[map[r]] -= col[r] * xc;
    }
  }

  if (unit) {
    for (Index p = 0; p < s.panel_count(); ++p) {
      const auto& pn = s.panels[p];
      for (Index c = 0; c < pn.width(); ++c)
        y[pn.first_col + c] /= store.data(p)[c + c * store.ld(p)];
    }
  }

  for (Index p = s.panel_count() - 1; p >= 0; --p) {
    const auto& pn = s.panels[p];
    const Scalar* l = store.data(p);
    const Index ld = store.ld(p);
    auto map = store.row_map(p);
    for (Index c = pn.width() - 1; c >= 0; --c) {
      const Scalar* col = l + c * ld;
      Scalar acc = y[pn.first_col + c];
      for (Index r = c + 1; r < pn.rows; ++r) acc -= col[r] * y[map[r]];
      if (!unit) acc /= col[c];
      y[pn.first_col + c] = acc;
    }
  }
}

// Original numbering in and out; `perm` maps original index -> factor index.
template <typename Scalar>
std::vector<Scalar> supernodal_solve(const SymbolStructure& s, const PanelStore<Scalar>& store,
                                     const Permutation& perm, std::span<const Scalar> b,
                                     FactorForm form) {
  std::vector<Scalar> y(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) y[perm.perm[i]] = b[i];
  supernodal_solve_inplace<Scalar>(s, store, y, form);
  std::vector<Scalar> x(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) x[i] = y[perm.perm[i]];
  return x;
}

}  // namespace spchol
