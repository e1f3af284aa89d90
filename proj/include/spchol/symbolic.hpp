#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <vector>

#include "spchol/ordering.hpp"
#include "spchol/sparse_matrix.hpp"

namespace spchol {

// Row structure of every column of L, diagonal included, ascending.
struct ColumnStructure {
  std::vector<std::vector<Index>> cols;

  Index size() const { return static_cast<Index>(cols.size()); }
  Index nnz() const {
    Index total = 0;
    for (const auto& c : cols) total += static_cast<Index>(c.size());
    return total;
  }
};

// Contiguous column ranges: panel p owns columns [start[p], start[p + 1]).
struct PanelPartition {
  std::vector<Index> start{0};

  Index count() const { return static_cast<Index>(start.size()) - 1; }
  Index width(Index p) const { return start[p + 1] - start[p]; }
  std::vector<Index> widths() const {
    std::vector<Index> w(count());
    for (Index p = 0; p < count(); ++p) w[p] = width(p);
    return w;
  }
  std::vector<Index> column_map() const {
    std::vector<Index> map(start.back());
    for (Index p = 0; p < count(); ++p)
      std::fill(map.begin() + start[p], map.begin() + start[p + 1], p);
    return map;
  }
  bool operator==(const PanelPartition&) const = default;
};

// struct(j) = pattern(j) U (U_{children c} struct(c) \ {c})
template <typename Scalar>
ColumnStructure symbolic_factorize(const SparseMatrix<Scalar>& pattern, const EliminationTree& t) {
  const Index n = pattern.n;
  if (t.size() != n) throw StructuralError("elimination tree size mismatch");
  const auto kids = t.children();
  ColumnStructure cs;
  cs.cols.resize(n);
  std::vector<Index> mark(n, kNone);
  for (Index j = 0; j < n; ++j) {
    auto& s = cs.cols[j];
    s.push_back(j);
    mark[j] = j;
    for (Index i : pattern.rows(j)) {
      if (i < j) throw StructuralError("symbolic_factorize needs lower storage");
      if (mark[i] != j) {
        mark[i] = j;
        s.push_back(i);
      }
    }
    for (Index c : kids[j]) {
      for (Index i : cs.cols[c]) {
        if (i != c && mark[i] != j) {
          mark[i] = j;
          s.push_back(i);
        }
      }
    }
    std::sort(s.begin(), s.end());
  }
  return cs;
}

// Fundamental supernodes: j and j+1 share a panel iff parent(j) = j+1 and
// struct(j) \ {j} = struct(j+1).
inline PanelPartition find_supernodes(const ColumnStructure& cs, const EliminationTree& t) {
  PanelPartition p;
  const Index n = cs.size();
  for (Index j = 0; j + 1 < n; ++j) {
    const auto& a = cs.cols[j];
    const auto& b = cs.cols[j + 1];
    bool merge = t.parent[j] == j + 1 && a.size() == b.size() + 1 &&
                 std::equal(a.begin() + 1, a.end(), b.begin());
    if (!merge) p.start.push_back(j + 1);
  }
  if (n > 0) p.start.push_back(n);
  return p;
}

namespace detail {

// Off-diagonal rows of each panel (rows beyond the panel's last column).
inline std::vector<std::vector<Index>> panel_rows(const PanelPartition& panels,
                                                  const ColumnStructure& cs) {
  const Index n = cs.size();
  std::vector<std::vector<Index>> rows(panels.count());
  std::vector<Index> mark(n, kNone);
  for (Index p = 0; p < panels.count(); ++p) {
    const Index last = panels.start[p + 1];
    auto& r = rows[p];
    for (Index j = panels.start[p]; j < last; ++j)
      for (Index i : cs.cols[j])
        if (i >= last && mark[i] != p) {
          mark[i] = p;
          r.push_back(i);
        }
    std::sort(r.begin(), r.end());
  }
  return rows;
}

inline Index panel_nnz(Index width, Index height) { return width * (width + 1) / 2 + width * height; }

// Panel tree: parent panel owns the first off-diagonal row.
inline std::vector<Index> panel_parents(const PanelPartition& panels,
                                        const std::vector<std::vector<Index>>& rows) {
  const auto colmap = panels.column_map();
  std::vector<Index> parent(panels.count(), kNone);
  for (Index p = 0; p < panels.count(); ++p)
    if (!rows[p].empty()) parent[p] = colmap[rows[p].front()];
  return parent;
}

// Depth from the root (roots are at depth 0). Parents always follow children.
inline std::vector<Index> panel_depths(const std::vector<Index>& parent) {
  const Index np = static_cast<Index>(parent.size());
  std::vector<Index> depth(np, 0);
  for (Index p = np - 1; p >= 0; --p)
    if (parent[p] != kNone) depth[p] = depth[parent[p]] + 1;
  return depth;
}

}  // namespace detail

// nnz(L) implied by a partition: dense diagonal triangles plus rectangular
// off-diagonal parts.
inline Index partition_nnz(const PanelPartition& panels, const ColumnStructure& cs) {
  auto rows = detail::panel_rows(panels, cs);
  Index total = 0;
  for (Index p = 0; p < panels.count(); ++p)
    total += detail::panel_nnz(panels.width(p), static_cast<Index>(rows[p].size()));
  return total;
}

// Greedy bottom-up amalgamation. A child panel that immediately precedes its
// parent panel may be merged into it; the merged panel's structure is the
// union. Candidates at each tree depth are taken deepest first, cheapest
// first, while the cumulative added entries stay within
// max_fill_ratio * nnz(L).
inline PanelPartition amalgamate(const PanelPartition& panels, const ColumnStructure& cs,
                                 double max_fill_ratio) {
  if (max_fill_ratio < 0) throw std::invalid_argument("amalgamation ratio must be >= 0");
  const Index np = panels.count();
  if (np <= 1) return panels;
  auto rows = detail::panel_rows(panels, cs);
  const auto parent = detail::panel_parents(panels, rows);
  const auto depth = detail::panel_depths(parent);
  const Index nnz_before = cs.nnz();
  const double budget = max_fill_ratio * static_cast<double>(nnz_before);

  // Current owner of each original panel after merges (union-find by hand,
  // merges always go child -> parent).
  std::vector<Index> first(panels.start.begin(), panels.start.end() - 1);
  std::vector<Index> owner(np);
  std::iota(owner.begin(), owner.end(), Index{0});
  auto find = [&](Index p) {
    while (owner[p] != p) p = owner[p] = owner[owner[p]];
    return p;
  };
  std::vector<Index> width = panels.widths();
  double added = 0;

  auto merged_rows = [&](Index child, Index par) {
    // Rows of the child that fall inside the parent's columns become part of
    // the merged diagonal block.
    const Index lo = first[par], hi = first[par] + width[par];
    std::vector<Index> out;
    out.reserve(rows[child].size() + rows[par].size());
    std::vector<Index> tail;
    for (Index r : rows[child])
      if (r < lo || r >= hi) tail.push_back(r);
    std::set_union(tail.begin(), tail.end(), rows[par].begin(), rows[par].end(),
                   std::back_inserter(out));
    return out;
  };

  const Index max_depth = *std::max_element(depth.begin(), depth.end());
  for (Index d = max_depth; d >= 1; --d) {
    struct Candidate {
      Index extra;
      Index child;
      Index parent;
    };
    std::vector<Candidate> cands;
    for (Index c = 0; c < np; ++c) {
      if (depth[c] != d || find(c) != c) continue;
      Index q = find(parent[c]);
      // Keep every panel an elimination-tree chain: the child's first
      // off-diagonal row must be the parent's first column.
      if (first[c] + width[c] != first[q] || rows[c].empty() || rows[c].front() != first[q])
        continue;
      auto u = merged_rows(c, q);
      Index extra = detail::panel_nnz(width[c] + width[q], static_cast<Index>(u.size())) -
                    detail::panel_nnz(width[c], static_cast<Index>(rows[c].size())) -
                    detail::panel_nnz(width[q], static_cast<Index>(rows[q].size()));
      cands.push_back({extra, c, q});
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      return a.extra != b.extra ? a.extra < b.extra : a.child < b.child;
    });
    for (const auto& cand : cands) {
      if (added + static_cast<double>(cand.extra) > budget) continue;
      Index q = cand.parent;
      rows[q] = merged_rows(cand.child, q);
      first[q] = first[cand.child];
      width[q] += width[cand.child];
      owner[cand.child] = q;
      rows[cand.child].clear();
      added += static_cast<double>(cand.extra);
    }
  }

  PanelPartition out;
  out.start.clear();
  for (Index p = 0; p < np; ++p)
    if (find(p) == p) out.start.push_back(first[p]);
  std::sort(out.start.begin(), out.start.end());
  out.start.push_back(cs.size());

  const Index nnz_after = partition_nnz(out, cs);
  if (nnz_before > 0 &&
      static_cast<double>(nnz_after - nnz_before) / static_cast<double>(nnz_before) >
          max_fill_ratio + 1e-12)
    throw StructuralError("amalgamation exceeded its fill budget");
  return out;
}

// Column structures padded to the dense shape of their panel: column j of
// panel p gets rows j..last_col(p)-1 plus all of p's off-diagonal rows. Split
// panels built from these keep the fill their parent panel accepted.
inline ColumnStructure panel_closure(const PanelPartition& panels, const ColumnStructure& cs) {
  auto rows = detail::panel_rows(panels, cs);
  ColumnStructure out;
  out.cols.resize(cs.size());
  for (Index p = 0; p < panels.count(); ++p)
    for (Index j = panels.start[p]; j < panels.start[p + 1]; ++j) {
      auto& c = out.cols[j];
      c.reserve(static_cast<std::size_t>(panels.start[p + 1] - j) + rows[p].size());
      for (Index i = j; i < panels.start[p + 1]; ++i) c.push_back(i);
      c.insert(c.end(), rows[p].begin(), rows[p].end());
    }
  return out;
}

// Cuts panels of the top `top_levels` tree levels that are wider than
// max_width into chunks of max_width columns (the last chunk takes the rest).
inline PanelPartition split_panels(const PanelPartition& panels, const ColumnStructure& cs,
                                   Index max_width, Index top_levels) {
  if (max_width < 1) throw std::invalid_argument("split width must be >= 1");
  auto rows = detail::panel_rows(panels, cs);
  const auto depth = detail::panel_depths(detail::panel_parents(panels, rows));
  PanelPartition out;
  for (Index p = 0; p < panels.count(); ++p) {
    const Index w = panels.width(p);
    if (depth[p] < top_levels && w > max_width) {
      for (Index c = panels.start[p] + max_width; c < panels.start[p + 1]; c += max_width)
        out.start.push_back(c);
    }
    out.start.push_back(panels.start[p + 1]);
  }
  return out;
}

struct Block {
  Index first_row;  // global, inclusive
  Index last_row;   // global, exclusive
  Index facing;     // panel owning these rows; the owner itself for the diagonal block
  Index offset;     // first local row inside the owner's dense storage

  Index height() const { return last_row - first_row; }
  bool operator==(const Block&) const = default;
};

struct Panel {
  Index first_col;
  Index last_col;     // exclusive
  Index first_block;  // diagonal block
  Index last_block;   // exclusive
  Index rows;         // stored rows = width + off-diagonal height

  Index width() const { return last_col - first_col; }
  Index offdiag_height() const { return rows - width(); }
  bool operator==(const Panel&) const = default;
};

// Block-symbolic structure of L: panels with their diagonal block followed by
// off-diagonal blocks in ascending row order.
struct SymbolStructure {
  Index n = 0;
  std::vector<Panel> panels;
  std::vector<Block> blocks;
  std::vector<Index> col_to_panel;

  Index panel_count() const { return static_cast<Index>(panels.size()); }
  Index offdiag_block_count() const {
    return static_cast<Index>(blocks.size()) - panel_count();
  }

  std::span<const Block> offdiag_blocks(Index p) const {
    const auto& pn = panels[p];
    return {blocks.data() + pn.first_block + 1,
            static_cast<std::size_t>(pn.last_block - pn.first_block - 1)};
  }

  // Block of panel p holding global row `row`, or kNone.
  Index find_block(Index p, Index row) const {
    const auto& pn = panels[p];
    if (row >= pn.first_col && row < pn.last_col) return pn.first_block;
    auto first = blocks.begin() + pn.first_block + 1;
    auto last = blocks.begin() + pn.last_block;
    auto it = std::upper_bound(first, last, row,
                               [](Index r, const Block& b) { return r < b.first_row; });
    if (it == first) return kNone;
    --it;
    return row < it->last_row ? static_cast<Index>(it - blocks.begin()) : kNone;
  }

  // Local storage row of a global row inside panel p, or kNone.
  Index local_row(Index p, Index row) const {
    Index b = find_block(p, row);
    if (b == kNone) return kNone;
    return blocks[b].offset + (row - blocks[b].first_row);
  }

  Index nnz() const {
    Index total = 0;
    for (const auto& p : panels) total += detail::panel_nnz(p.width(), p.offdiag_height());
    return total;
  }

  Index max_panel_rows() const {
    Index m = 0;
    for (const auto& p : panels) m = std::max(m, p.rows);
    return m;
  }

  void validate() const {
    Index expect_col = 0;
    for (Index p = 0; p < panel_count(); ++p) {
      const auto& pn = panels[p];
      if (pn.first_col != expect_col || pn.last_col <= pn.first_col)
        throw StructuralError("panel column ranges do not partition [0, n)");
      expect_col = pn.last_col;
      const auto& diag = blocks[pn.first_block];
      if (diag.first_row != pn.first_col || diag.last_row != pn.last_col || diag.facing != p ||
          diag.offset != 0)
        throw StructuralError("diagonal block does not match panel columns");
      Index prev = pn.last_col, offset = pn.width();
      for (const auto& b : offdiag_blocks(p)) {
        if (b.first_row < prev || b.last_row <= b.first_row)
          throw StructuralError("off-diagonal blocks not sorted and disjoint");
        if (b.facing <= p || b.facing >= panel_count())
          throw StructuralError("facing panel must follow the owner");
        const auto& f = panels[b.facing];
        if (b.first_row < f.first_col || b.last_row > f.last_col)
          throw StructuralError("block rows escape their facing panel");
        if (b.offset != offset) throw StructuralError("block offsets not contiguous");
        offset += b.height();
        prev = b.last_row;
      }
      if (offset != pn.rows) throw StructuralError("panel row count mismatch");
    }
    if (expect_col != n) throw StructuralError("panel column ranges do not cover [0, n)");
  }

  bool operator==(const SymbolStructure&) const = default;
};

// Turns a partition plus column structures into blocks: maximal runs of
// contiguous off-diagonal rows, cut wherever the facing panel changes.
inline SymbolStructure build_symbol(const PanelPartition& panels, const ColumnStructure& cs) {
  SymbolStructure s;
  s.n = cs.size();
  s.col_to_panel = panels.column_map();
  const auto rows = detail::panel_rows(panels, cs);
  for (Index p = 0; p < panels.count(); ++p) {
    Panel pn;
    pn.first_col = panels.start[p];
    pn.last_col = panels.start[p + 1];
    pn.first_block = static_cast<Index>(s.blocks.size());
    s.blocks.push_back({pn.first_col, pn.last_col, p, 0});
    Index offset = pn.width();
    for (Index i : rows[p]) {
      Index facing = s.col_to_panel[i];
      auto& last = s.blocks.back();
      if (s.blocks.size() > static_cast<std::size_t>(pn.first_block + 1) && last.last_row == i &&
          last.facing == facing) {
        ++last.last_row;
      } else {
        s.blocks.push_back({i, i + 1, facing, offset});
      }
      ++offset;
    }
    pn.last_block = static_cast<Index>(s.blocks.size());
    pn.rows = offset;
    s.panels.push_back(pn);
  }
  s.validate();
  return s;
}

// One line per block: `panel first_row last_row facing`.
inline void write_symbol(std::ostream& out, const SymbolStructure& s) {
  out << "# symbol schema=1 n=" << s.n << " panels=" << s.panel_count()
      << " blocks=" << s.blocks.size() << " nnz_l=" << s.nnz() << '\n';
  for (Index p = 0; p < s.panel_count(); ++p)
    for (Index b = s.panels[p].first_block; b < s.panels[p].last_block; ++b)
      out << p << ' ' << s.blocks[b].first_row << ' ' << s.blocks[b].last_row << ' '
          << s.blocks[b].facing << '\n';
}

}  // namespace spchol
