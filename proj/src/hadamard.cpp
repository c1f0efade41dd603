#include "oscar/hadamard.hpp"

#include <cmath>
#include <stdexcept>

namespace oscar {

bool is_power_of_two(int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

void fht_inplace(double *v, int64_t d) {
    if (!is_power_of_two(d)) {
        throw std::invalid_argument("fht_inplace: length must be a power of two");
    }
    for (int64_t half = 1; half < d; half <<= 1) {
        for (int64_t base = 0; base < d; base += half << 1) {
            for (int64_t i = base; i < base + half; ++i) {
                const double a = v[i];
                const double b = v[i + half];
                v[i] = a + b;
                v[i + half] = a - b;
            }
        }
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (int64_t i = 0; i < d; ++i) v[i] *= scale;
}

void fht_inplace(std::vector<double> &v) {
    fht_inplace(v.data(), static_cast<int64_t>(v.size()));
}

Tensor3 fht_tensor(const Tensor3 &x) {
    if (!is_power_of_two(x.channels)) {
        throw std::invalid_argument("fht_tensor: channel count must be a power of two");
    }
    Tensor3 out = x;
    const int64_t n = x.tokens * x.heads;
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        fht_inplace(out.data.data() + i * x.channels, x.channels);
    }
    return out;
}

Matrix hadamard_matrix(int64_t d) {
    if (!is_power_of_two(d)) {
        throw std::invalid_argument("hadamard_matrix: size must be a power of two");
    }
    Matrix h(d, d);
    h.at(0, 0) = 1.0;
    for (int64_t k = 1; k < d; k <<= 1) {
        for (int64_t i = 0; i < k; ++i) {
            for (int64_t j = 0; j < k; ++j) {
                const double v = h.at(i, j);
                h.at(i, j + k) = v;
                h.at(i + k, j) = v;
                h.at(i + k, j + k) = -v;
            }
        }
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (double &v : h.data) v *= scale;
    return h;
}

}  // namespace oscar
