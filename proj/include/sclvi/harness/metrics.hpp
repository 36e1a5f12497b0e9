#pragma once

#include <vector>

#include "sclvi/core/error.hpp"

namespace sclvi::harness {

// Rank-based AUROC with midrank tie handling: the probability that a
// random positive outranks a random negative, ties at half credit.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace sclvi::harness
