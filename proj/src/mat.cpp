#include "mmgnn/mat.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <thread>

namespace mmgnn {

namespace {

int env_default_threads() {
    if (const char* s = std::getenv("MMGNN_THREADS")) {
        int v = std::atoi(s);
        if (v >= 1) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

std::atomic<int> g_max_threads{0};  // 0 = not yet resolved

}  // namespace

void set_max_threads(int n) { g_max_threads.store(n > 0 ? n : env_default_threads()); }

int max_threads() {
    int v = g_max_threads.load();
    if (v == 0) {
        v = env_default_threads();
        g_max_threads.store(v);
    }
    return v;
}

namespace detail {

void parallel_for_impl(std::size_t n, void (*trampoline)(void*, std::size_t, std::size_t), void* ctx) {
    const int t = max_threads();
    if (t <= 1 || n < 64) {
        trampoline(ctx, 0, n);
        return;
    }
    const std::size_t chunks = std::min<std::size_t>(static_cast<std::size_t>(t), n);
    const std::size_t per = (n + chunks - 1) / chunks;
    std::vector<std::thread> workers;
    workers.reserve(chunks - 1);
    for (std::size_t c = 1; c < chunks; ++c) {
        const std::size_t b = c * per;
        const std::size_t e = std::min(n, b + per);
        if (b >= e) break;
        workers.emplace_back([=] { trampoline(ctx, b, e); });
    }
    trampoline(ctx, 0, std::min(n, per));
    for (auto& w : workers) w.join();
}

}  // namespace detail

Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimension mismatch");
    Mat out(a.rows, b.cols);
    parallel_for(a.rows, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            double* oi = out.row(i);
            const double* ai = a.row(i);
            for (std::size_t k = 0; k < a.cols; ++k) {
                const double v = ai[k];
                if (v == 0.0) continue;
                const double* bk = b.row(k);
                for (std::size_t j = 0; j < b.cols; ++j) oi[j] += v * bk[j];
            }
        }
    });
    return out;
}

Mat transpose(const Mat& m) {
    Mat out(m.cols, m.rows);
    constexpr std::size_t B = 32;  // cache blocking
    for (std::size_t ib = 0; ib < m.rows; ib += B) {
        const std::size_t ie = std::min(m.rows, ib + B);
        for (std::size_t jb = 0; jb < m.cols; jb += B) {
            const std::size_t je = std::min(m.cols, jb + B);
            for (std::size_t i = ib; i < ie; ++i)
                for (std::size_t j = jb; j < je; ++j) out(j, i) = m(i, j);
        }
    }
    return out;
}

Mat matmul_tn(const Mat& a, const Mat& b) {
    if (a.rows != b.rows) throw std::invalid_argument("matmul_tn: row mismatch");
    return matmul(transpose(a), b);
}

Mat matmul_nt(const Mat& a, const Mat& b) {
    if (a.cols != b.cols) throw std::invalid_argument("matmul_nt: col mismatch");
    return matmul(a, transpose(b));
}

void add_inplace(Mat& dst, const Mat& src) {
    if (!dst.same_shape(src)) throw std::invalid_argument("add_inplace: shape mismatch");
    for (std::size_t i = 0; i < dst.size(); ++i) dst.a[i] += src.a[i];
}

bool all_finite(const Mat& m) {
    for (double v : m.a)
        if (!std::isfinite(v)) return false;
    return true;
}

double max_abs_diff(const Mat& a, const Mat& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.a[i] - b.a[i]));
    return d;
}

}  // namespace mmgnn
