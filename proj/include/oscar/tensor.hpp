#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace oscar {

// Dense [token, head, channel] tensor of doubles, row-major with the
// channel index fastest. All math in this project runs in fp64.
struct Tensor3 {
    int64_t tokens = 0;
    int64_t heads = 0;
    int64_t channels = 0;
    std::vector<double> data;

    Tensor3() = default;
    Tensor3(int64_t s, int64_t h, int64_t c);
    Tensor3(int64_t s, int64_t h, int64_t c, std::vector<double> values);

    double &at(int64_t t, int64_t h, int64_t c) {
        return data[(t * heads + h) * channels + c];
    }
    double at(int64_t t, int64_t h, int64_t c) const {
        return data[(t * heads + h) * channels + c];
    }
    // pointer to the d_h contiguous values of one (token, head) vector
    double *row(int64_t t, int64_t h) { return data.data() + (t * heads + h) * channels; }
    const double *row(int64_t t, int64_t h) const {
        return data.data() + (t * heads + h) * channels;
    }
    bool empty() const { return tokens == 0; }
};

// Row-major dense matrix.
struct Matrix {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int64_t r, int64_t c);
    Matrix(int64_t r, int64_t c, std::vector<double> values);

    static Matrix identity(int64_t n);

    double &at(int64_t i, int64_t j) { return data[i * cols + j]; }
    double at(int64_t i, int64_t j) const { return data[i * cols + j]; }
};

// C = A * B. Parallel over output rows; each row is accumulated in a
// fixed order so results do not depend on the thread count.
Matrix matmul(const Matrix &a, const Matrix &b);

double token_l2_norm(const Tensor3 &x, int64_t token, int64_t head);

// Deterministic RNG. The raw stream is std::mt19937_64, which the C++
// standard pins bit-exactly, so one seed gives one stream on every
// conforming platform. Uniforms take the top 53 bits; normals are
// Box-Muller on top of the uniform stream (two uniforms per normal).
class SeededRng {
  public:
    explicit SeededRng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // uniform on [0, 1)
    double next_uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double next_normal();

    // uniform integer in [0, n)
    uint64_t next_below(uint64_t n);

  private:
    std::mt19937_64 engine_;
};

}  // namespace oscar
