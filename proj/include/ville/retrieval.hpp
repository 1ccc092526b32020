#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ville/errors.hpp"

namespace ville {

// Exact brute-force cosine index. Entries are unit-normalized on insertion;
// search ranks by similarity descending with ascending-id tie-breaks, so the
// ranking is a total order independent of insertion order.
class EmbeddingIndex {
public:
    EmbeddingIndex() = default;
    explicit EmbeddingIndex(int64_t dim);

    void add(const std::string& id, const std::vector<double>& vec);
    int64_t size() const { return static_cast<int64_t>(ids_.size()); }
    int64_t dim() const { return dim_; }
    const std::vector<std::string>& ids() const { return ids_; }
    const std::vector<double>& vec(int64_t i) const { return vecs_[static_cast<size_t>(i)]; }

    // k is clamped to the index size; an empty index yields an empty list.
    std::vector<std::pair<std::string, double>> search(const std::vector<double>& query,
                                                       int64_t k) const;

    void save(const std::string& path) const;
    static EmbeddingIndex load(const std::string& path);

private:
    int64_t dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<std::vector<double>> vecs_;
};

}  // namespace ville
