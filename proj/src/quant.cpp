#include "oscar/quant.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oscar {

namespace {

int64_t max_code(int bits) { return (int64_t{1} << bits) - 1; }

void check_bits(int bits) {
    if (bits < 1 || bits > 16) {
        throw std::invalid_argument("quant: bits must be in [1, 16]");
    }
}

}  // namespace

QuantParams quant_params(const double *values, int64_t n, int bits) {
    check_bits(bits);
    if (n <= 0) {
        throw std::invalid_argument("quant_params: empty value array");
    }
    double lo = values[0], hi = values[0];
    for (int64_t i = 0; i < n; ++i) {
        const double x = values[i];
        if (!std::isfinite(x)) {
            throw std::invalid_argument("quant_params: non-finite value");
        }
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    QuantParams p;
    p.bits = bits;
    if (hi == lo) {
        p.delta = 0.0;
        p.zero_point = 0;
        p.constant = lo;
        return p;
    }
    p.delta = (hi - lo) / static_cast<double>(max_code(bits));
    p.zero_point = std::llround(-lo / p.delta);
    p.constant = lo;
    return p;
}

QuantParams quant_params(const std::vector<double> &values, int bits) {
    return quant_params(values.data(), static_cast<int64_t>(values.size()), bits);
}

uint16_t quantize_one(double x, const QuantParams &p) {
    if (p.delta == 0.0) return 0;
    const int64_t q = std::llround(x / p.delta) + p.zero_point;
    return static_cast<uint16_t>(std::clamp<int64_t>(q, 0, max_code(p.bits)));
}

std::vector<uint16_t> quantize(const std::vector<double> &values, const QuantParams &p) {
    std::vector<uint16_t> codes(values.size());
    for (size_t i = 0; i < values.size(); ++i) codes[i] = quantize_one(values[i], p);
    return codes;
}

double dequantize_one(uint16_t code, const QuantParams &p) {
    if (p.delta == 0.0) return p.constant;
    return p.delta * (static_cast<double>(code) - static_cast<double>(p.zero_point));
}

std::vector<double> dequantize(const std::vector<uint16_t> &codes, const QuantParams &p) {
    std::vector<double> out(codes.size());
    for (size_t i = 0; i < codes.size(); ++i) out[i] = dequantize_one(codes[i], p);
    return out;
}

std::vector<QuantBlock> group_quant_per_channel(const Matrix &k, int64_t group_size,
                                                int bits) {
    if (group_size <= 0 || k.rows % group_size != 0) {
        throw std::invalid_argument(
            "group_quant_per_channel: token count not divisible by group size");
    }
    const int64_t groups = k.rows / group_size;
    std::vector<QuantBlock> blocks(static_cast<size_t>(k.cols * groups));
#pragma omp parallel for schedule(static)
    for (int64_t j = 0; j < k.cols; ++j) {
        std::vector<double> vals(static_cast<size_t>(group_size));
        for (int64_t g = 0; g < groups; ++g) {
            for (int64_t i = 0; i < group_size; ++i) {
                vals[static_cast<size_t>(i)] = k.at(g * group_size + i, j);
            }
            QuantBlock &blk = blocks[static_cast<size_t>(j * groups + g)];
            blk.params = quant_params(vals.data(), group_size, bits);
            blk.codes = quantize(vals, blk.params);
            blk.axis = GroupAxis::kChannelGrouped;
            blk.group_size = group_size;
            blk.lane = j;
            blk.group = g;
        }
    }
    return blocks;
}

std::vector<QuantBlock> group_quant_per_token(const Matrix &v, int64_t group_size,
                                              int bits) {
    if (group_size <= 0 || v.cols % group_size != 0) {
        throw std::invalid_argument(
            "group_quant_per_token: channel count not divisible by group size");
    }
    const int64_t groups = v.cols / group_size;
    std::vector<QuantBlock> blocks(static_cast<size_t>(v.rows * groups));
#pragma omp parallel for schedule(static)
    for (int64_t t = 0; t < v.rows; ++t) {
        for (int64_t g = 0; g < groups; ++g) {
            QuantBlock &blk = blocks[static_cast<size_t>(t * groups + g)];
            const double *vals = v.data.data() + t * v.cols + g * group_size;
            blk.params = quant_params(vals, group_size, bits);
            blk.codes.resize(static_cast<size_t>(group_size));
            for (int64_t i = 0; i < group_size; ++i) {
                blk.codes[static_cast<size_t>(i)] = quantize_one(vals[i], blk.params);
            }
            blk.axis = GroupAxis::kTokenGrouped;
            blk.group_size = group_size;
            blk.lane = t;
            blk.group = g;
        }
    }
    return blocks;
}

Matrix dequant_per_channel(const std::vector<QuantBlock> &blocks, int64_t tokens,
                           int64_t channels, int64_t group_size) {
    Matrix out(tokens, channels);
    const int64_t groups = tokens / group_size;
    if (static_cast<int64_t>(blocks.size()) != channels * groups) {
        throw std::invalid_argument("dequant_per_channel: block count mismatch");
    }
    for (const QuantBlock &blk : blocks) {
        for (int64_t i = 0; i < group_size; ++i) {
            out.at(blk.group * group_size + i, blk.lane) =
                dequantize_one(blk.codes[static_cast<size_t>(i)], blk.params);
        }
    }
    return out;
}

Matrix dequant_per_token(const std::vector<QuantBlock> &blocks, int64_t tokens,
                         int64_t channels, int64_t group_size) {
    Matrix out(tokens, channels);
    const int64_t groups = channels / group_size;
    if (static_cast<int64_t>(blocks.size()) != tokens * groups) {
        throw std::invalid_argument("dequant_per_token: block count mismatch");
    }
    for (const QuantBlock &blk : blocks) {
        for (int64_t i = 0; i < group_size; ++i) {
            out.at(blk.lane, blk.group * group_size + i) =
                dequantize_one(blk.codes[static_cast<size_t>(i)], blk.params);
        }
    }
    return out;
}

PackedWords pack_2bit(const std::vector<uint16_t> &codes) {
    PackedWords out;
    out.bits = 2;
    out.count = static_cast<int64_t>(codes.size());
    out.words.assign((codes.size() + 7) / 8, 0);
    for (size_t i = 0; i < codes.size(); ++i) {
        if (codes[i] > 3) {
            throw std::invalid_argument("pack_2bit: code exceeds 2 bits");
        }
        out.words[i / 8] = static_cast<uint16_t>(
            out.words[i / 8] | (codes[i] << (2 * (i % 8))));
    }
    return out;
}

std::vector<uint16_t> unpack_2bit(const PackedWords &packed) {
    std::vector<uint16_t> codes(static_cast<size_t>(packed.count));
    for (size_t i = 0; i < codes.size(); ++i) {
        codes[i] = static_cast<uint16_t>((packed.words[i / 8] >> (2 * (i % 8))) & 0x3);
    }
    return codes;
}

}  // namespace oscar
