// Kernel benchmark: OpenMP gemm vs the serial reference, plus a forward-pass
// timing at model scale. Run with OMP_NUM_THREADS to vary the thread count;
// the parity check must hold bit-exactly at any setting.
#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "ville/backbone.hpp"
#include "ville/kernels.hpp"
#include "ville/rng.hpp"

using namespace ville;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename F>
double time_best_of(int reps, F&& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        auto t0 = Clock::now();
        fn();
        best = std::min(best, seconds_since(t0));
    }
    return best;
}

void bench_gemm(int64_t m, int64_t n, int64_t k, Rng& rng) {
    std::vector<double> a(static_cast<size_t>(m * k)), b(static_cast<size_t>(k * n)),
        c_ref(static_cast<size_t>(m * n), 0.0), c_par(static_cast<size_t>(m * n), 0.0);
    for (double& x : a) x = rng.gaussian();
    for (double& x : b) x = rng.gaussian();

    gemm_ref(m, n, k, a.data(), k, false, b.data(), n, false, c_ref.data(), n, 1.0, 0.0);
    gemm(m, n, k, a.data(), k, false, b.data(), n, false, c_par.data(), n, 1.0, 0.0);
    bool exact = std::memcmp(c_ref.data(), c_par.data(), c_ref.size() * sizeof(double)) == 0;

    double flops = 2.0 * static_cast<double>(m) * static_cast<double>(n) * static_cast<double>(k);
    double t_ref = time_best_of(3, [&] {
        gemm_ref(m, n, k, a.data(), k, false, b.data(), n, false, c_ref.data(), n, 1.0, 0.0);
    });
    double t_par = time_best_of(3, [&] {
        gemm(m, n, k, a.data(), k, false, b.data(), n, false, c_par.data(), n, 1.0, 0.0);
    });
    std::printf("%5lld x%5lld x%5lld | %8.3f | %8.3f | %5.2fx | %s\n",
                static_cast<long long>(m), static_cast<long long>(n), static_cast<long long>(k),
                flops / t_ref / 1e9, flops / t_par / 1e9, t_ref / t_par,
                exact ? "bit-exact" : "MISMATCH");
}

}  // namespace

int main() {
    Rng rng(7);
    std::printf("threads: %d\n\n", max_threads());
    std::printf("gemm (f64)            | ref GF/s | omp GF/s | speed | parity\n");
    std::printf("----------------------+----------+----------+-------+----------\n");
    for (int64_t s : {64, 128, 256, 512}) bench_gemm(s, s, s, rng);

    // end-to-end encode at working scale: 60 frames + trigger through the
    // default 2-layer backbone
    BackboneConfig bc;
    bc.vocab_size = 64;
    Backbone bb(bc, rng);
    TokenSequence seq;
    for (int i = 0; i < 60; ++i) seq.push_frame(rng.gaussian_vec(bc.d_frame));
    seq.push_token(tok::VID_EMBED);
    seq.prefix_len = seq.size();

    NoGradGuard ng;
    double t = time_best_of(5, [&] { (void)bb.encode(seq); });
    std::printf("\nencode 61 tokens, d=%lld, %lld layers: %.2f ms\n",
                static_cast<long long>(bc.d_model), static_cast<long long>(bc.n_layers),
                t * 1e3);
    return 0;
}
