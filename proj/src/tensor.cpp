#include "oscar/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace oscar {

namespace {

void check_finite(const std::vector<double> &v, const char *what) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw std::invalid_argument(std::string(what) + ": non-finite entry");
        }
    }
}

}  // namespace

Tensor3::Tensor3(int64_t s, int64_t h, int64_t c)
    : tokens(s), heads(h), channels(c), data(static_cast<size_t>(s * h * c), 0.0) {
    if (s < 0 || h <= 0 || c <= 0) {
        throw std::invalid_argument("Tensor3: bad shape");
    }
}

Tensor3::Tensor3(int64_t s, int64_t h, int64_t c, std::vector<double> values)
    : tokens(s), heads(h), channels(c), data(std::move(values)) {
    if (s < 0 || h <= 0 || c <= 0) {
        throw std::invalid_argument("Tensor3: bad shape");
    }
    if (static_cast<int64_t>(data.size()) != s * h * c) {
        throw std::invalid_argument("Tensor3: data length does not match shape");
    }
    check_finite(data, "Tensor3");
}

Matrix::Matrix(int64_t r, int64_t c)
    : rows(r), cols(c), data(static_cast<size_t>(r * c), 0.0) {
    if (r < 0 || c < 0) {
        throw std::invalid_argument("Matrix: bad shape");
    }
}

Matrix::Matrix(int64_t r, int64_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
    if (static_cast<int64_t>(data.size()) != r * c) {
        throw std::invalid_argument("Matrix: data length does not match shape");
    }
    check_finite(data, "Matrix");
}

Matrix Matrix::identity(int64_t n) {
    Matrix m(n, n);
    for (int64_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

Matrix matmul(const Matrix &a, const Matrix &b) {
    if (a.cols != b.rows) {
        throw std::invalid_argument("matmul: inner dimensions do not match");
    }
    Matrix c(a.rows, b.cols);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < a.rows; ++i) {
        double *out = c.data.data() + i * c.cols;
        for (int64_t k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            const double *brow = b.data.data() + k * b.cols;
            for (int64_t j = 0; j < b.cols; ++j) {
                out[j] += aik * brow[j];
            }
        }
    }
    return c;
}

double token_l2_norm(const Tensor3 &x, int64_t token, int64_t head) {
    if (token < 0 || token >= x.tokens || head < 0 || head >= x.heads) {
        throw std::out_of_range("token_l2_norm: index out of range");
    }
    const double *r = x.row(token, head);
    double s = 0.0;
    for (int64_t c = 0; c < x.channels; ++c) s += r[c] * r[c];
    return std::sqrt(s);
}

double SeededRng::next_normal() {
    double u1 = next_uniform();
    double u2 = next_uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * M_PI * u2);
}

uint64_t SeededRng::next_below(uint64_t n) {
    if (n == 0) throw std::invalid_argument("next_below: n must be positive");
    // rejection sampling keeps the draw unbiased
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

}  // namespace oscar
