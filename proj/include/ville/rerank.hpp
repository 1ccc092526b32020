#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ville/errors.hpp"

namespace ville {

// Second-stage re-ranking: the top-K first-stage candidates are re-sorted by
// a matching score (descending, stable), the remainder keeps its first-stage
// order after the re-ranked block. Output is always a permutation of the
// input. K > |candidates| reranks everything; K < 1 is an argument error.
std::vector<std::pair<std::string, double>> two_stage_rerank(
    const std::vector<std::string>& first_stage, int64_t K,
    const std::function<double(const std::string&)>& match_score);

}  // namespace ville
