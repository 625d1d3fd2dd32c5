#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "paramqp/sparse/csc.hpp"

namespace paramqp {

// Position of a declared nonzero inside a matrix parameter.
struct Position {
  Index row;
  Index col;
  friend auto operator<=>(const Position&, const Position&) = default;
};

// Column-major ordering key for positions.
inline bool column_major_less(const Position& a, const Position& b) noexcept {
  return a.col != b.col ? a.col < b.col : a.row < b.row;
}

// One parameter's slot in the flat parameter vector.
struct ParamBlock {
  int id = 0;
  Index rows = 1;
  Index cols = 1;
  // Declared nonzero positions, column-major sorted. Empty optional means dense.
  std::optional<std::vector<Position>> sparsity;
};

// Maps (parameter id, row, col) onto the flat parameter vector. Parameters are
// laid out back to back in declaration order, each flattened column-major;
// sparse parameters contribute only their declared nonzeros.
class FlattenLayout {
 public:
  FlattenLayout() = default;

  explicit FlattenLayout(std::vector<ParamBlock> blocks) : blocks_(std::move(blocks)) {
    Index offset = 0;
    for (auto& b : blocks_) {
      if (b.rows < 1 || b.cols < 1) throw DimensionError("FlattenLayout: parameter shape must be at least 1x1");
      if (b.sparsity) {
        auto& s = *b.sparsity;
        std::sort(s.begin(), s.end(), column_major_less);
        for (std::size_t k = 0; k < s.size(); ++k) {
          if (s[k].row < 0 || s[k].row >= b.rows || s[k].col < 0 || s[k].col >= b.cols)
            throw DimensionError("FlattenLayout: sparsity position out of bounds for parameter " +
                                 std::to_string(b.id));
          if (k > 0 && s[k] == s[k - 1])
            throw DimensionError("FlattenLayout: duplicate sparsity position for parameter " + std::to_string(b.id));
        }
      }
      offsets_.push_back(offset);
      offset += length_of(b);
    }
    offsets_.push_back(offset);
  }

  // Total flat length d.
  Index size() const noexcept { return offsets_.empty() ? 0 : offsets_.back(); }
  std::size_t block_count() const noexcept { return blocks_.size(); }
  const std::vector<ParamBlock>& blocks() const noexcept { return blocks_; }

  std::size_t block_of(int param_id) const {
    for (std::size_t b = 0; b < blocks_.size(); ++b)
      if (blocks_[b].id == param_id) return b;
    throw DimensionError("FlattenLayout: unknown parameter id " + std::to_string(param_id));
  }

  Index offset(int param_id) const { return offsets_[block_of(param_id)]; }
  Index length(int param_id) const { return length_of(blocks_[block_of(param_id)]); }

  // Flat index of entry (row, col) of the parameter, or nullopt when the entry
  // is structurally zero under the declared sparsity.
  std::optional<Index> index(int param_id, Index row, Index col) const {
    const auto b = block_of(param_id);
    const auto& blk = blocks_[b];
    if (row < 0 || row >= blk.rows || col < 0 || col >= blk.cols)
      throw DimensionError("FlattenLayout: entry out of bounds for parameter " + std::to_string(param_id));
    if (!blk.sparsity) return offsets_[b] + row + col * blk.rows;
    const auto& s = *blk.sparsity;
    const Position p{row, col};
    const auto it = std::lower_bound(s.begin(), s.end(), p, column_major_less);
    if (it == s.end() || *it != p) return std::nullopt;
    return offsets_[b] + static_cast<Index>(it - s.begin());
  }

  // Inverse of index(): (parameter id, row, col) for flat index k.
  std::pair<int, Position> entry(Index k) const {
    if (k < 0 || k >= size()) throw DimensionError("FlattenLayout: flat index out of range");
    const auto b = static_cast<std::size_t>(std::upper_bound(offsets_.begin(), offsets_.end(), k) - offsets_.begin() - 1);
    const auto& blk = blocks_[b];
    const Index local = k - offsets_[b];
    if (blk.sparsity) return {blk.id, (*blk.sparsity)[local]};
    return {blk.id, Position{local % blk.rows, local / blk.rows}};
  }

  // Pulls the declared entries of a dense column-major parameter value into
  // `theta`. Values at undeclared positions must be zero.
  void scatter(int param_id, std::span<const double> dense_col_major, std::span<double> theta) const {
    const auto b = block_of(param_id);
    const auto& blk = blocks_[b];
    if (dense_col_major.size() != static_cast<std::size_t>(blk.rows) * static_cast<std::size_t>(blk.cols))
      throw DimensionError("FlattenLayout: value length mismatch for parameter " + std::to_string(param_id));
    if (theta.size() != static_cast<std::size_t>(size())) throw DimensionError("FlattenLayout: theta length mismatch");
    const Index off = offsets_[b];
    if (!blk.sparsity) {
      std::copy(dense_col_major.begin(), dense_col_major.end(), theta.begin() + off);
      return;
    }
    std::vector<bool> declared(dense_col_major.size(), false);
    for (std::size_t k = 0; k < blk.sparsity->size(); ++k) {
      const auto& p = (*blk.sparsity)[k];
      const auto at = static_cast<std::size_t>(p.row + p.col * blk.rows);
      declared[at] = true;
      theta[off + static_cast<Index>(k)] = dense_col_major[at];
    }
    for (std::size_t at = 0; at < declared.size(); ++at)
      if (!declared[at] && dense_col_major[at] != 0.0)
        throw DimensionError("FlattenLayout: nonzero value outside declared sparsity of parameter " +
                             std::to_string(param_id));
  }

  // Dense column-major value of a parameter reconstructed from `theta`.
  std::vector<double> gather(int param_id, std::span<const double> theta) const {
    const auto b = block_of(param_id);
    const auto& blk = blocks_[b];
    std::vector<double> out(static_cast<std::size_t>(blk.rows) * static_cast<std::size_t>(blk.cols), 0.0);
    const Index off = offsets_[b];
    if (!blk.sparsity) {
      std::copy(theta.begin() + off, theta.begin() + off + static_cast<Index>(out.size()), out.begin());
    } else {
      for (std::size_t k = 0; k < blk.sparsity->size(); ++k) {
        const auto& p = (*blk.sparsity)[k];
        out[static_cast<std::size_t>(p.row + p.col * blk.rows)] = theta[off + static_cast<Index>(k)];
      }
    }
    return out;
  }

 private:
  static Index length_of(const ParamBlock& b) {
    return b.sparsity ? static_cast<Index>(b.sparsity->size()) : b.rows * b.cols;
  }

  std::vector<ParamBlock> blocks_;
  std::vector<Index> offsets_;
};

}  // namespace paramqp
