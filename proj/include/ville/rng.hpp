#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace ville {

// Seeded RNG wrapper. All stochastic behavior in the library goes through
// one of these so runs are reproducible from a single uint64 seed and RNG
// state can round-trip through checkpoints as text.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [lo, hi).
    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    // Uniform integer in [lo, hi] inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        return std::uniform_int_distribution<int64_t>(lo, hi)(engine_);
    }

    double gaussian(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

    std::vector<double> gaussian_vec(size_t n, double mean = 0.0, double stddev = 1.0) {
        std::vector<double> out(n);
        for (auto& v : out) v = gaussian(mean, stddev);
        return out;
    }

    // Fisher-Yates pick of k distinct indices from [0, n).
    std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k) {
        std::vector<int64_t> idx(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
        for (int64_t i = 0; i < k && i < n; ++i) {
            int64_t j = uniform_int(i, n - 1);
            std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
        }
        idx.resize(static_cast<size_t>(std::min(k, n)));
        return idx;
    }

    // Derive an independent stream; used so e.g. data order and init noise
    // don't perturb each other when one consumer draws more.
    Rng fork(uint64_t salt) {
        std::seed_seq seq{next_u64(), salt};
        std::mt19937_64 e(seq);
        Rng r;
        r.engine_ = e;
        return r;
    }

    std::string serialize_state() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void restore_state(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace ville
