#pragma once

#include <cstddef>
#include <vector>

namespace mmgnn {

/// Dense row-major matrix of doubles; the only numeric container in the
/// library. All model state (features, weights, gradients) is 2-D.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
    double* row(std::size_t i) { return a.data() + i * cols; }
    const double* row(std::size_t i) const { return a.data() + i * cols; }
    std::size_t size() const { return a.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
    bool operator==(const Mat& o) const { return rows == o.rows && cols == o.cols && a == o.a; }
};

// Thread cap for the data-parallel kernels below. 0 restores the default
// (MMGNN_THREADS env var if set, else hardware concurrency). Partitioning is
// by contiguous row ranges and each output cell is reduced sequentially by
// exactly one thread, so results are bit-identical at any thread count.
void set_max_threads(int n);
int max_threads();

/// Runs fn(begin, end) over a contiguous partition of [0, n).
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn);

namespace detail {
void parallel_for_impl(std::size_t n, void (*trampoline)(void*, std::size_t, std::size_t), void* ctx);
}

template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    detail::parallel_for_impl(
        n,
        [](void* ctx, std::size_t b, std::size_t e) { (*static_cast<Fn*>(ctx))(b, e); },
        &fn);
}

Mat matmul(const Mat& a, const Mat& b);
Mat transpose(const Mat& m);
/// a^T * b without materializing errors for tall a; used by matmul backward.
Mat matmul_tn(const Mat& a, const Mat& b);
/// a * b^T.
Mat matmul_nt(const Mat& a, const Mat& b);

void add_inplace(Mat& dst, const Mat& src);
bool all_finite(const Mat& m);
double max_abs_diff(const Mat& a, const Mat& b);

}  // namespace mmgnn
