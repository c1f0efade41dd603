#pragma once

#include "oscar/quant.hpp"
#include "oscar/tensor.hpp"

// Serial reference implementations. These are kept deliberately naive:
// the test suites compare the parallel kernels against them, and the
// benchmark tool reports the speedup of the parallel paths.
namespace oscar::ref {

// plain i-j-k triple loop
Matrix matmul(const Matrix &a, const Matrix &b);

// dense (H_d/sqrt(d)) * v via explicit matrix product
std::vector<double> hadamard_apply_dense(const Matrix &h, const std::vector<double> &v);

// serial butterfly over every (token, head) vector
Tensor3 fht_tensor(const Tensor3 &x);

// softmax attention with direct exponentiation (no max subtraction);
// q is one [heads x channels] row set, keys/values are [S x H x d_h]
Tensor3 attention_naive(const Tensor3 &q, const Tensor3 &keys, const Tensor3 &values);

// serial copies of the grouped quantizers
std::vector<QuantBlock> group_quant_per_channel(const Matrix &k, int64_t group_size,
                                                int bits);
std::vector<QuantBlock> group_quant_per_token(const Matrix &v, int64_t group_size,
                                              int bits);

}  // namespace oscar::ref
