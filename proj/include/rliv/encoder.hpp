#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rliv/domain.hpp"
#include "rliv/nn/dense.hpp"
#include "rliv/nn/embedding.hpp"
#include "rliv/rng.hpp"

namespace rliv {

/// Id-space sizes of the categorical state features.
struct Vocab {
  std::int64_t users = 1;
  std::int64_t cohorts = 1;
  std::int64_t activity_tiers = 1;
  std::int64_t authors = 1;
  std::int64_t items = 1;
  std::int64_t categories = 1;

  friend bool operator==(const Vocab&, const Vocab&) = default;
};

inline constexpr int kDynamicFeatures = 6;

/// log1p of every counter; bounded growth keeps large counters finite and tame.
inline std::array<double, kDynamicFeatures> dynamic_features(const DynamicCounters& c) {
  return {std::log1p(static_cast<double>(c.click_count)), std::log1p(static_cast<double>(c.watch_count)),
          std::log1p(static_cast<double>(c.follow_flag)), std::log1p(static_cast<double>(c.gift_count)),
          std::log1p(c.cumulative_watch_seconds),          std::log1p(c.cumulative_gift_amount)};
}

template <class T>
struct EncodeCache {
  std::array<std::vector<std::int64_t>, 6> ids;
  nn::Mat<T> dyn_in;
  nn::DenseCache<T> dyn_cache;
};

/// Shared embedding layer: H = concat(h_u, h_a, h_ua) where h_u sums the
/// user-field embeddings, h_a sums the author/item-field embeddings and h_ua
/// is a learned linear projection of the log1p counters.
template <class T>
class StateEncoder {
 public:
  static constexpr std::size_t kTables = 6;

  StateEncoder() = default;

  StateEncoder(const Vocab& v, int dim, std::uint64_t seed) : dim_(dim) {
    const std::array<std::int64_t, kTables> sizes = {v.users, v.cohorts, v.activity_tiers,
                                                     v.authors, v.items, v.categories};
    for (std::size_t k = 0; k < kTables; ++k) {
      Rng rng(derive_seed(seed, "encoder.table", k));
      tables_[k] = nn::EmbeddingTable<T>(sizes[k], dim, rng);
    }
    Rng rng(derive_seed(seed, "encoder.dynamic"));
    dynamic_ = nn::DenseNetwork<T>(kDynamicFeatures, {}, dim, rng);
  }

  int dim() const { return dim_; }
  int out_dim() const { return 3 * dim_; }
  std::size_t num_tensors() const { return kTables + dynamic_.num_tensors(); }

  void append_params(std::vector<nn::Mat<T>*>& out) {
    for (auto& t : tables_) out.push_back(&t.table());
    dynamic_.append_params(out);
  }

  static const char* table_name(std::size_t k) {
    static constexpr const char* names[kTables] = {"user", "cohort", "tier", "author", "item", "category"};
    return names[k];
  }

  nn::Mat<T> encode(std::span<const UAState> states, EncodeCache<T>* cache = nullptr) const {
    const auto B = static_cast<Eigen::Index>(states.size());
    EncodeCache<T> local;
    EncodeCache<T>& c = cache ? *cache : local;
    for (auto& ids : c.ids) ids.resize(states.size());
    c.dyn_in.resize(kDynamicFeatures, B);
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto& s = states[static_cast<std::size_t>(b)];
      c.ids[0][b] = s.user.user_id;
      c.ids[1][b] = s.user.cohort_id;
      c.ids[2][b] = s.user.activity_tier;
      c.ids[3][b] = s.author.author_id;
      c.ids[4][b] = s.author.item_id;
      c.ids[5][b] = s.author.category_id;
      const auto f = dynamic_features(s.dynamic);
      for (int k = 0; k < kDynamicFeatures; ++k) c.dyn_in(k, b) = static_cast<T>(f[k]);
    }
    nn::Mat<T> H = nn::Mat<T>::Zero(3 * dim_, B);
    nn::Mat<T> hu = nn::Mat<T>::Zero(dim_, B);
    nn::Mat<T> ha = nn::Mat<T>::Zero(dim_, B);
    for (std::size_t k = 0; k < 3; ++k) tables_[k].gather_add(c.ids[k], hu);
    for (std::size_t k = 3; k < 6; ++k) tables_[k].gather_add(c.ids[k], ha);
    H.topRows(dim_) = hu;
    H.middleRows(dim_, dim_) = ha;
    H.bottomRows(dim_) = cache ? dynamic_.forward(c.dyn_in, c.dyn_cache) : dynamic_.forward(c.dyn_in);
    return H;
  }

  /// Accumulates gradients of the tables and the dynamic projection.
  void backward(const nn::Mat<T>& grad_H, const EncodeCache<T>& cache, std::span<nn::Mat<T>> grads) const {
    const nn::Mat<T> gu = grad_H.topRows(dim_);
    const nn::Mat<T> ga = grad_H.middleRows(dim_, dim_);
    for (std::size_t k = 0; k < 3; ++k) tables_[k].scatter_add(cache.ids[k], gu, grads[k]);
    for (std::size_t k = 3; k < 6; ++k) tables_[k].scatter_add(cache.ids[k], ga, grads[k]);
    dynamic_.backward(grad_H.bottomRows(dim_), cache.dyn_cache, grads.subspan(kTables));
  }

  const nn::EmbeddingTable<T>& table(std::size_t k) const { return tables_[k]; }
  const nn::DenseNetwork<T>& dynamic_projection() const { return dynamic_; }

 private:
  int dim_ = 0;
  std::array<nn::EmbeddingTable<T>, kTables> tables_;
  nn::DenseNetwork<T> dynamic_;
};

}  // namespace rliv
