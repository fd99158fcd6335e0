#pragma once

#include <vector>

#include "bayesrank/draws.hpp"
#include "oracle.hpp"

namespace testing_support {

inline bayesrank::DrawsXd to_draws(const oracle::Table& x) {
  Eigen::MatrixXd v(static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(x.front().size()));
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j) v(i, j) = x[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return bayesrank::DrawsXd(v);
}

inline bayesrank::Action to_action(const oracle::RAction& a) {
  return {a.alpha.value(), a.t.value(), a.gamma.value(), a.q.value()};
}

inline std::vector<int> to_int(const std::vector<bayesrank::Index>& v) { return {v.begin(), v.end()}; }

}  // namespace testing_support
