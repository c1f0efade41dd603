#pragma once

#include "oscar/tensor.hpp"

namespace oscar {

bool is_power_of_two(int64_t n);

// In-place normalized fast Walsh-Hadamard transform: v <- (H_d v)/sqrt(d).
// Sylvester ordering, O(d log d) butterfly. Self-inverse under this
// normalization. Length must be a power of two.
void fht_inplace(double *v, int64_t d);
void fht_inplace(std::vector<double> &v);

// Applies fht_inplace to every (token, head) vector independently.
Tensor3 fht_tensor(const Tensor3 &x);

// Dense H_d / sqrt(d). Exists for weight folding and as a cross-check
// for the butterfly path.
Matrix hadamard_matrix(int64_t d);

}  // namespace oscar
