#include "ville/rerank.hpp"

#include <algorithm>
#include <limits>

namespace ville {

std::vector<std::pair<std::string, double>> two_stage_rerank(
    const std::vector<std::string>& first_stage, int64_t K,
    const std::function<double(const std::string&)>& match_score) {
    if (K < 1) throw ArgumentError("rerank: K must be >= 1");
    int64_t n = static_cast<int64_t>(first_stage.size());
    int64_t top = std::min(K, n);

    std::vector<std::pair<std::string, double>> head;
    head.reserve(static_cast<size_t>(top));
    for (int64_t i = 0; i < top; ++i)
        head.emplace_back(first_stage[static_cast<size_t>(i)],
                          match_score(first_stage[static_cast<size_t>(i)]));
    std::stable_sort(head.begin(), head.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    // candidates beyond K were never scored; NaN marks that honestly
    for (int64_t i = top; i < n; ++i)
        head.emplace_back(first_stage[static_cast<size_t>(i)],
                          std::numeric_limits<double>::quiet_NaN());
    return head;
}

}  // namespace ville
