// Copyright 2026 The ibcomm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Statistical helpers shared by the test suites.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

namespace ibcomm::testing {

// Pearson goodness-of-fit p-value of observed counts against expected
// probabilities (which must sum to 1).
inline double chi_square_pvalue(const std::vector<std::size_t>& counts,
                                const std::vector<double>& probs) {
  if (counts.size() != probs.size() || counts.size() < 2) {
    throw std::invalid_argument("chi_square_pvalue: bad input");
  }
  double n = 0.0;
  for (std::size_t c : counts) n += static_cast<double>(c);
  double stat = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double e = n * probs[i];
    const double d = static_cast<double>(counts[i]) - e;
    stat += d * d / e;
  }
  const boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace ibcomm::testing
