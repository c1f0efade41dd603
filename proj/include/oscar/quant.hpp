#pragma once

#include <cstdint>
#include <vector>

#include "oscar/tensor.hpp"

namespace oscar {

// Asymmetric uniform quantizer parameters for one group.
//
//   delta = (max - min) / (2^b - 1)
//   zero_point = round(-min / delta)        (round half away from zero)
//   q(x) = clamp(round(x / delta) + zero_point, 0, 2^b - 1)
//   x^(q) = delta * (q - zero_point)
//
// zero_point is kept as a plain integer and is NOT clamped into
// [0, 2^b - 1]: blocks that do not straddle zero (all-positive or
// all-negative) need an out-of-range zero point, otherwise values on the
// grid would not reconstruct. Parameters are stored at full precision.
//
// Because the zero point is rounded, the reconstruction grid is the
// zero-anchored lattice {m * delta}: values at integer multiples of
// delta come back exactly, everything else lands within delta/2.
//
// A constant block (max == min) is stored as delta = 0 with the constant
// in `constant`; its codes are all zero and dequantize returns the
// constant exactly.
struct QuantParams {
    double delta = 0.0;
    int64_t zero_point = 0;
    int bits = 0;
    double constant = 0.0;
};

enum class GroupAxis { kChannelGrouped, kTokenGrouped };

// One quantized group: G codes sharing one QuantParams.
struct QuantBlock {
    std::vector<uint16_t> codes;
    QuantParams params;
    GroupAxis axis = GroupAxis::kChannelGrouped;
    int64_t group_size = 0;
    // channel index for channel-grouped blocks, token index for
    // token-grouped blocks
    int64_t lane = 0;
    int64_t group = 0;
};

// 2-bit codes packed eight to a 16-bit word, little-endian within the
// word: code i occupies bits [2*(i%8), 2*(i%8)+1] of word i/8. This
// layout is normative for the cache dump format.
struct PackedWords {
    std::vector<uint16_t> words;
    int bits = 2;
    int64_t count = 0;
};

QuantParams quant_params(const double *values, int64_t n, int bits);
QuantParams quant_params(const std::vector<double> &values, int bits);

uint16_t quantize_one(double x, const QuantParams &p);
std::vector<uint16_t> quantize(const std::vector<double> &values, const QuantParams &p);
double dequantize_one(uint16_t code, const QuantParams &p);
std::vector<double> dequantize(const std::vector<uint16_t> &codes, const QuantParams &p);

// KIVI-style grouping for one head.
//
// Per-channel: k is [tokens x d_h]; every channel is cut into
// token-blocks of size G, one QuantBlock per (channel, group), ordered
// channel-major. Token count must be divisible by G.
std::vector<QuantBlock> group_quant_per_channel(const Matrix &k, int64_t group_size,
                                                int bits);

// Per-token: one QuantBlock per (token, channel-group), ordered
// token-major. d_h must be divisible by G.
std::vector<QuantBlock> group_quant_per_token(const Matrix &v, int64_t group_size,
                                              int bits);

// Reconstructs the [tokens x d_h] matrix from group_quant_* output.
Matrix dequant_per_channel(const std::vector<QuantBlock> &blocks, int64_t tokens,
                           int64_t channels, int64_t group_size);
Matrix dequant_per_token(const std::vector<QuantBlock> &blocks, int64_t tokens,
                         int64_t channels, int64_t group_size);

PackedWords pack_2bit(const std::vector<uint16_t> &codes);
std::vector<uint16_t> unpack_2bit(const PackedWords &packed);

}  // namespace oscar
