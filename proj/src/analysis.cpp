#include "oscar/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "oscar/quant.hpp"

namespace oscar {

TniProfile tni_profile(const Tensor3 &x, const std::string &tag) {
    TniProfile p;
    p.tag = tag;
    p.rows.resize(static_cast<size_t>(x.tokens));
#pragma omp parallel for schedule(static)
    for (int64_t t = 0; t < x.tokens; ++t) {
        std::vector<double> norms(static_cast<size_t>(x.heads));
        double sum = 0.0;
        for (int64_t h = 0; h < x.heads; ++h) {
            norms[static_cast<size_t>(h)] = token_l2_norm(x, t, h);
            sum += norms[static_cast<size_t>(h)];
        }
        std::sort(norms.begin(), norms.end());
        TniProfile::Row &row = p.rows[static_cast<size_t>(t)];
        row.min = norms.front();
        row.max = norms.back();
        const size_t n = norms.size();
        row.median = n % 2 == 1 ? norms[n / 2] : 0.5 * (norms[n / 2 - 1] + norms[n / 2]);
        row.mean = sum / static_cast<double>(n);
    }
    return p;
}

namespace {

double row_norm(const Matrix &m, int64_t row) {
    double s = 0.0;
    for (int64_t j = 0; j < m.cols; ++j) s += m.at(row, j) * m.at(row, j);
    return std::sqrt(s);
}

}  // namespace

double mse_lower_bound(const Matrix &block, int bits) {
    if (block.rows == 0) {
        throw std::invalid_argument("mse_lower_bound: empty block");
    }
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (int64_t t = 0; t < block.rows; ++t) {
        const double n = row_norm(block, t);
        lo = std::min(lo, n);
        hi = std::max(hi, n);
    }
    const double levels = static_cast<double>((int64_t{1} << bits) - 1);
    const double diff = hi - lo;
    return diff * diff / (12.0 * levels * levels);
}

double rtn_block_mse_model(const Matrix &block, int bits) {
    double acc = 0.0;
    const double levels = static_cast<double>((int64_t{1} << bits) - 1);
    for (int64_t j = 0; j < block.cols; ++j) {
        double lo = block.at(0, j), hi = block.at(0, j);
        for (int64_t t = 1; t < block.rows; ++t) {
            lo = std::min(lo, block.at(t, j));
            hi = std::max(hi, block.at(t, j));
        }
        const double delta = (hi - lo) / levels;
        acc += delta * delta / 12.0;
    }
    return acc;
}

double rtn_block_mse_empirical(const Matrix &block, int bits) {
    double acc = 0.0;
    std::vector<double> col(static_cast<size_t>(block.rows));
    for (int64_t j = 0; j < block.cols; ++j) {
        for (int64_t t = 0; t < block.rows; ++t) col[static_cast<size_t>(t)] = block.at(t, j);
        const QuantParams p = quant_params(col, bits);
        for (int64_t t = 0; t < block.rows; ++t) {
            const double xh = dequantize_one(quantize_one(col[static_cast<size_t>(t)], p), p);
            const double e = col[static_cast<size_t>(t)] - xh;
            acc += e * e;
        }
    }
    return acc / static_cast<double>(block.rows);
}

double rtn_mse_per_channel(const Matrix &slice, int64_t group_size, int bits) {
    if (group_size <= 0 || slice.rows % group_size != 0) {
        throw std::invalid_argument("rtn_mse_per_channel: token count not divisible by group size");
    }
    const auto blocks = group_quant_per_channel(slice, group_size, bits);
    const Matrix rec = dequant_per_channel(blocks, slice.rows, slice.cols, group_size);
    double acc = 0.0;
    for (size_t i = 0; i < slice.data.size(); ++i) {
        const double e = slice.data[i] - rec.data[i];
        acc += e * e;
    }
    return acc / static_cast<double>(slice.data.size());
}

double rtn_mse_per_token(const Matrix &slice, int64_t group_size, int bits) {
    if (group_size <= 0 || slice.cols % group_size != 0) {
        throw std::invalid_argument("rtn_mse_per_token: channel count not divisible by group size");
    }
    const auto blocks = group_quant_per_token(slice, group_size, bits);
    const Matrix rec = dequant_per_token(blocks, slice.rows, slice.cols, group_size);
    double acc = 0.0;
    for (size_t i = 0; i < slice.data.size(); ++i) {
        const double e = slice.data[i] - rec.data[i];
        acc += e * e;
    }
    return acc / static_cast<double>(slice.data.size());
}

double ErrorReport::cell(int bits, const std::string &condition, const std::string &axis) const {
    for (const ErrorStudyRow &r : rows) {
        if (r.bits == bits && r.condition == condition && r.axis == axis) return r.mse_x100;
    }
    throw std::out_of_range("error report: no such cell");
}

namespace {

Matrix head_slice_all(const Tensor3 &x, int64_t head) {
    Matrix m(x.tokens, x.channels);
    for (int64_t t = 0; t < x.tokens; ++t) {
        for (int64_t c = 0; c < x.channels; ++c) m.at(t, c) = x.at(t, head, c);
    }
    return m;
}

Matrix select_rows(const Matrix &m, const std::vector<int64_t> &rows) {
    Matrix out(static_cast<int64_t>(rows.size()), m.cols);
    for (size_t i = 0; i < rows.size(); ++i) {
        for (int64_t c = 0; c < m.cols; ++c) {
            out.at(static_cast<int64_t>(i), c) = m.at(rows[i], c);
        }
    }
    return out;
}

}  // namespace

ErrorReport error_study(const Tensor3 &data, const ErrorStudySpec &spec) {
    if (spec.group_size <= 0) {
        throw std::invalid_argument("error_study: bad group size");
    }
    if (data.tokens % spec.group_size != 0) {
        throw std::invalid_argument("error_study: token count not divisible by group size");
    }
    std::set<int64_t> ot(spec.outlier_tokens.begin(), spec.outlier_tokens.end());
    std::vector<int64_t> keep;
    for (int64_t t = 0; t < data.tokens; ++t) {
        if (ot.count(t) == 0) keep.push_back(t);
    }
    if (static_cast<int64_t>(keep.size()) % spec.group_size != 0) {
        throw std::invalid_argument(
            "error_study: token count without outliers not divisible by group size");
    }

    // modality arrangements (only when at least two blocks are given)
    std::vector<std::vector<int64_t>> single_slices;
    std::vector<int64_t> interleaved;
    if (spec.modality_blocks.size() >= 2) {
        for (const ModalityBlock &b : spec.modality_blocks) {
            if ((b.end - b.start) % spec.group_size != 0) {
                throw std::invalid_argument(
                    "error_study: modality block length not divisible by group size");
            }
            std::vector<int64_t> idx;
            for (int64_t t = b.start; t < b.end; ++t) idx.push_back(t);
            single_slices.push_back(std::move(idx));
        }
        // round-robin over blocks so every group mixes modalities
        std::vector<size_t> pos(single_slices.size(), 0);
        bool more = true;
        while (more) {
            more = false;
            for (size_t b = 0; b < single_slices.size(); ++b) {
                if (pos[b] < single_slices[b].size()) {
                    interleaved.push_back(single_slices[b][pos[b]++]);
                    more = true;
                }
            }
        }
    }

    ErrorReport report;
    for (int bits : spec.bits_list) {
        double k_with = 0, k_without = 0, v_with = 0, v_without = 0;
        double k_mixed = 0, k_single = 0, v_mixed = 0, v_single = 0;
        for (int64_t h = 0; h < data.heads; ++h) {
            const Matrix slice = head_slice_all(data, h);
            k_with += rtn_mse_per_channel(slice, spec.group_size, bits);
            v_with += rtn_mse_per_token(slice, spec.group_size, bits);
            const Matrix slice_wo = select_rows(slice, keep);
            k_without += rtn_mse_per_channel(slice_wo, spec.group_size, bits);
            v_without += rtn_mse_per_token(slice_wo, spec.group_size, bits);
            if (!single_slices.empty()) {
                const Matrix mixed = select_rows(slice, interleaved);
                k_mixed += rtn_mse_per_channel(mixed, spec.group_size, bits);
                v_mixed += rtn_mse_per_token(mixed, spec.group_size, bits);
                double ks = 0, vs = 0;
                int64_t values = 0;
                for (const auto &idx : single_slices) {
                    const Matrix blk = select_rows(slice, idx);
                    const int64_t n = blk.rows * blk.cols;
                    ks += rtn_mse_per_channel(blk, spec.group_size, bits) * static_cast<double>(n);
                    vs += rtn_mse_per_token(blk, spec.group_size, bits) * static_cast<double>(n);
                    values += n;
                }
                k_single += ks / static_cast<double>(values);
                v_single += vs / static_cast<double>(values);
            }
        }
        const double hn = static_cast<double>(data.heads);
        auto push = [&](const std::string &cond, const std::string &axis, double v) {
            report.rows.push_back({bits, cond, axis, 100.0 * v / hn});
        };
        push("with-ot", "per-channel-k", k_with);
        push("without-ot", "per-channel-k", k_without);
        push("with-ot", "per-token-v", v_with);
        push("without-ot", "per-token-v", v_without);
        if (!single_slices.empty()) {
            push("mixed-modality", "per-channel-k", k_mixed);
            push("single-modality", "per-channel-k", k_single);
            push("mixed-modality", "per-token-v", v_mixed);
            push("single-modality", "per-token-v", v_single);
        }
    }
    return report;
}

ArtifactDemo artifact_demo() {
    ArtifactDemo d;
    const double target_norm = 1.0;
    double na = 0, nb = 0;
    for (double x : d.a) na += x * x;
    for (double x : d.b) nb += x * x;
    d.norm_a = std::sqrt(na);
    d.norm_b = std::sqrt(nb);
    d.beta = target_norm / d.norm_a;
    d.alpha = target_norm / d.norm_b;
    d.a_scaled.resize(d.a.size());
    d.b_scaled.resize(d.b.size());
    for (size_t i = 0; i < d.a.size(); ++i) d.a_scaled[i] = d.beta * d.a[i];
    for (size_t i = 0; i < d.b.size(); ++i) d.b_scaled[i] = d.alpha * d.b[i];
    // channels 1..3 (the non-dominant ones): the grid must reach the
    // largest magnitude present
    d.range_before = 0;
    d.range_after = 0;
    for (size_t i = 0; i + 1 < d.a.size(); ++i) {
        d.range_before = std::max(d.range_before, std::fabs(d.a_scaled[i]));
        d.range_after = std::max({d.range_after, std::fabs(d.a_scaled[i]),
                                  std::fabs(d.b_scaled[i])});
    }
    d.step_inflation = d.range_after / d.range_before;
    double amax = 0;
    for (size_t i = 0; i + 1 < d.a.size(); ++i) amax = std::max(amax, std::fabs(d.a[i]));
    d.artifact_lhs = d.alpha * d.b[0];
    d.artifact_rhs = d.beta * amax;
    return d;
}

}  // namespace oscar
