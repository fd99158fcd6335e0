#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "bayesrank/errors.hpp"

namespace bayesrank {

using Index = Eigen::Index;

/// M x L matrix of posterior ability draws, one row per draw and one column
/// per entity. Column-major storage keeps every entity's draws contiguous,
/// which is the access pattern of all pairwise comparisons.
template <typename Scalar>
class PosteriorDraws {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  PosteriorDraws(Matrix values, std::vector<std::string> entity_ids)
      : values_(std::move(values)), ids_(std::move(entity_ids)) {
    if (values_.rows() < 1 || values_.cols() < 1)
      throw InvalidInput("posterior draws need at least one draw and one entity");
    if (static_cast<Index>(ids_.size()) != values_.cols())
      throw InvalidInput("entity id count does not match the number of columns");
    std::unordered_set<std::string> seen;
    for (const auto& id : ids_)
      if (!seen.insert(id).second) throw InvalidInput("duplicate entity id '" + id + "'");
    if (!values_.allFinite()) throw InvalidInput("posterior draws contain non-finite values");
  }

  /// Draws labelled "0", "1", ...
  explicit PosteriorDraws(Matrix values) : PosteriorDraws(values, default_ids(values.cols())) {}

  Index draws() const noexcept { return values_.rows(); }
  Index entities() const noexcept { return values_.cols(); }
  const Matrix& values() const noexcept { return values_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::string& id(Index l) const { return ids_.at(static_cast<std::size_t>(l)); }
  auto column(Index l) const { return values_.col(l); }

 private:
  static std::vector<std::string> default_ids(Index n) {
    std::vector<std::string> ids;
    ids.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) ids.push_back(std::to_string(i));
    return ids;
  }

  Matrix values_;
  std::vector<std::string> ids_;
};

using DrawsXd = PosteriorDraws<double>;
using DrawsXf = PosteriorDraws<float>;

/// Fixed-length bit vector over draws.
class DrawMask {
 public:
  DrawMask() = default;
  explicit DrawMask(Index size, bool value = false)
      : size_(size), words_(static_cast<std::size_t>((size + 63) / 64), value ? ~std::uint64_t{0} : 0) {
    trim();
  }

  Index size() const noexcept { return size_; }
  bool test(Index i) const { return (words_[static_cast<std::size_t>(i >> 6)] >> (i & 63)) & 1u; }
  void set(Index i, bool value = true) {
    auto& w = words_[static_cast<std::size_t>(i >> 6)];
    const std::uint64_t bit = std::uint64_t{1} << (i & 63);
    w = value ? (w | bit) : (w & ~bit);
  }
  Index count() const noexcept {
    Index c = 0;
    for (auto w : words_) c += std::popcount(w);
    return c;
  }
  const std::vector<std::uint64_t>& words() const noexcept { return words_; }
  bool operator==(const DrawMask&) const = default;

 private:
  void trim() {
    if (size_ % 64 != 0 && !words_.empty()) words_.back() &= (std::uint64_t{1} << (size_ % 64)) - 1;
  }

  Index size_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Conversions between real-valued error levels and integer counts. Every
/// threshold in the library goes through these so that levels which are not
/// exactly representable (0.05, 0.1, ...) behave as their decimal value.
namespace fraction {

inline constexpr double kSlack = 1e-9;

/// floor(frac * n), clamped to [0, n].
inline Index floor_of(double frac, Index n) {
  const auto f = static_cast<Index>(std::floor(frac * static_cast<double>(n) + kSlack));
  return std::clamp<Index>(f, 0, n);
}

/// count / total > level
inline bool strictly_above(Index count, Index total, double level) {
  return static_cast<double>(count) - level * static_cast<double>(total) > kSlack * static_cast<double>(total);
}

/// count / total >= level
inline bool at_least(Index count, Index total, double level) {
  return static_cast<double>(count) - level * static_cast<double>(total) >= -kSlack * static_cast<double>(total);
}

}  // namespace fraction

}  // namespace bayesrank
