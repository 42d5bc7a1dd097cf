#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rliv/error.hpp"
#include "rliv/nn/dense.hpp"
#include "rliv/nn/tensor.hpp"
#include "rliv/rng.hpp"

namespace rliv::nn {

/// Id -> vector lookup. Column `i` holds id `i` for ids in [0, vocab); the
/// final column is a shared out-of-vocabulary row used for every other id.
template <class T>
class EmbeddingTable {
 public:
  EmbeddingTable() = default;

  EmbeddingTable(std::int64_t vocab, int dim, Rng& rng, double init_limit = 0.05)
      : vocab_(vocab), table_(dim, vocab + 1) {
    if (vocab < 0 || dim <= 0) throw ConfigError("EmbeddingTable: bad shape");
    fill_uniform(table_, init_limit, rng);
  }

  int dim() const { return static_cast<int>(table_.rows()); }
  std::int64_t vocab() const { return vocab_; }

  Eigen::Index column(std::int64_t id) const {
    return (id >= 0 && id < vocab_) ? static_cast<Eigen::Index>(id) : static_cast<Eigen::Index>(vocab_);
  }

  auto lookup(std::int64_t id) const { return table_.col(column(id)); }

  /// Adds embedding of ids[b] into column b of `out` (dim x ids.size()).
  void gather_add(std::span<const std::int64_t> ids, Mat<T>& out) const {
    for (std::size_t b = 0; b < ids.size(); ++b) out.col(static_cast<Eigen::Index>(b)) += lookup(ids[b]);
  }

  /// Scatters column b of `grad_out` onto the row of ids[b].
  void scatter_add(std::span<const std::int64_t> ids, const Mat<T>& grad_out, Mat<T>& grad_table) const {
    for (std::size_t b = 0; b < ids.size(); ++b)
      grad_table.col(column(ids[b])) += grad_out.col(static_cast<Eigen::Index>(b));
  }

  Mat<T>& table() { return table_; }
  const Mat<T>& table() const { return table_; }

 private:
  std::int64_t vocab_ = 0;
  Mat<T> table_;
};

}  // namespace rliv::nn
