#include "oscar/ref.hpp"

#include <cmath>
#include <stdexcept>

#include "oscar/hadamard.hpp"

namespace oscar::ref {

Matrix matmul(const Matrix &a, const Matrix &b) {
    if (a.cols != b.rows) {
        throw std::invalid_argument("ref::matmul: inner dimensions do not match");
    }
    Matrix c(a.rows, b.cols);
    for (int64_t i = 0; i < a.rows; ++i) {
        for (int64_t j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (int64_t k = 0; k < a.cols; ++k) {
                acc += a.at(i, k) * b.at(k, j);
            }
            c.at(i, j) = acc;
        }
    }
    return c;
}

std::vector<double> hadamard_apply_dense(const Matrix &h, const std::vector<double> &v) {
    if (h.cols != static_cast<int64_t>(v.size())) {
        throw std::invalid_argument("hadamard_apply_dense: size mismatch");
    }
    std::vector<double> out(static_cast<size_t>(h.rows), 0.0);
    for (int64_t i = 0; i < h.rows; ++i) {
        double acc = 0.0;
        for (int64_t j = 0; j < h.cols; ++j) acc += h.at(i, j) * v[static_cast<size_t>(j)];
        out[static_cast<size_t>(i)] = acc;
    }
    return out;
}

Tensor3 fht_tensor(const Tensor3 &x) {
    Tensor3 out = x;
    for (int64_t t = 0; t < x.tokens; ++t) {
        for (int64_t h = 0; h < x.heads; ++h) {
            fht_inplace(out.row(t, h), x.channels);
        }
    }
    return out;
}

Tensor3 attention_naive(const Tensor3 &q, const Tensor3 &keys, const Tensor3 &values) {
    if (q.heads != keys.heads || q.channels != keys.channels ||
        keys.tokens != values.tokens || keys.heads != values.heads) {
        throw std::invalid_argument("attention_naive: shape mismatch");
    }
    const double temp = 1.0 / std::sqrt(static_cast<double>(q.channels));
    Tensor3 out(q.tokens, q.heads, values.channels);
    for (int64_t t = 0; t < q.tokens; ++t) {
        for (int64_t h = 0; h < q.heads; ++h) {
            std::vector<double> w(static_cast<size_t>(keys.tokens));
            double z = 0.0;
            for (int64_t s = 0; s < keys.tokens; ++s) {
                double dot = 0.0;
                const double *qr = q.row(t, h);
                const double *kr = keys.row(s, h);
                for (int64_t c = 0; c < q.channels; ++c) dot += qr[c] * kr[c];
                w[static_cast<size_t>(s)] = std::exp(dot * temp);
                z += w[static_cast<size_t>(s)];
            }
            double *orow = out.row(t, h);
            for (int64_t s = 0; s < keys.tokens; ++s) {
                const double ws = w[static_cast<size_t>(s)] / z;
                const double *vr = values.row(s, h);
                for (int64_t c = 0; c < values.channels; ++c) orow[c] += ws * vr[c];
            }
        }
    }
    return out;
}

std::vector<QuantBlock> group_quant_per_channel(const Matrix &k, int64_t group_size,
                                                int bits) {
    if (group_size <= 0 || k.rows % group_size != 0) {
        throw std::invalid_argument("ref::group_quant_per_channel: bad group size");
    }
    const int64_t groups = k.rows / group_size;
    std::vector<QuantBlock> blocks;
    blocks.reserve(static_cast<size_t>(k.cols * groups));
    std::vector<double> vals(static_cast<size_t>(group_size));
    for (int64_t j = 0; j < k.cols; ++j) {
        for (int64_t g = 0; g < groups; ++g) {
            for (int64_t i = 0; i < group_size; ++i) {
                vals[static_cast<size_t>(i)] = k.at(g * group_size + i, j);
            }
            QuantBlock blk;
            blk.params = quant_params(vals.data(), group_size, bits);
            blk.codes = quantize(vals, blk.params);
            blk.axis = GroupAxis::kChannelGrouped;
            blk.group_size = group_size;
            blk.lane = j;
            blk.group = g;
            blocks.push_back(std::move(blk));
        }
    }
    return blocks;
}

std::vector<QuantBlock> group_quant_per_token(const Matrix &v, int64_t group_size,
                                              int bits) {
    if (group_size <= 0 || v.cols % group_size != 0) {
        throw std::invalid_argument("ref::group_quant_per_token: bad group size");
    }
    const int64_t groups = v.cols / group_size;
    std::vector<QuantBlock> blocks;
    blocks.reserve(static_cast<size_t>(v.rows * groups));
    for (int64_t t = 0; t < v.rows; ++t) {
        for (int64_t g = 0; g < groups; ++g) {
            QuantBlock blk;
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
            blocks.push_back(std::move(blk));
        }
    }
    return blocks;
}

}  // namespace oscar::ref
