#pragma once

#include <string>
#include <vector>

#include "oscar/datagen.hpp"
#include "oscar/tensor.hpp"

namespace oscar {

// Per-token summary of the head-wise l2 norms.
struct TniProfile {
    struct Row {
        double min = 0, median = 0, max = 0, mean = 0;
    };
    std::string tag;  // "q", "k" or "v"
    std::vector<Row> rows;
};

TniProfile tni_profile(const Tensor3 &x, const std::string &tag);

// Lower bound on the average per-channel reconstruction error of a
// block, driven by the token-norm range:
//   (||k_m|| - ||k_n||)^2 / (12 (2^b - 1)^2)
// with m, n the max/min-norm rows. Channel-summed per-token units.
double mse_lower_bound(const Matrix &block, int bits);

// Block-average RTN error in the same channel-summed units.
// The model variant evaluates sum_j delta_j^2 / 12 with the measured
// group ranges (the uniform rounding-noise model); the empirical variant
// measures the realized squared error.
double rtn_block_mse_model(const Matrix &block, int bits);
double rtn_block_mse_empirical(const Matrix &block, int bits);

// Plain per-value RTN MSE of one head slice under both groupings.
double rtn_mse_per_channel(const Matrix &slice, int64_t group_size, int bits);
double rtn_mse_per_token(const Matrix &slice, int64_t group_size, int bits);

struct ErrorStudySpec {
    std::vector<int> bits_list = {2, 3, 4};
    int64_t group_size = 32;
    std::vector<int64_t> outlier_tokens;
    std::vector<ModalityBlock> modality_blocks;
};

struct ErrorStudyRow {
    int bits = 0;
    std::string condition;  // with-ot | without-ot | mixed-modality | single-modality
    std::string axis;       // per-channel-k | per-token-v
    double mse_x100 = 0;
};

struct ErrorReport {
    std::vector<ErrorStudyRow> rows;
    double cell(int bits, const std::string &condition, const std::string &axis) const;
};

// RTN quantization-error study over a token tensor, averaged across
// heads, reported as MSE * 100.
//
// with-ot quantizes the data as laid out; without-ot removes the
// designated outlier-token rows and regroups the survivors (both token
// counts must stay divisible by the group size). single-modality
// quantizes each block separately; mixed-modality interleaves the
// blocks round-robin so groups straddle modalities.
ErrorReport error_study(const Tensor3 &data, const ErrorStudySpec &spec);

// Worked example of the scaling-induced outlier artifact: a normal
// token dominated by one channel and a flat low-norm token, both scaled
// to unit norm.
struct ArtifactDemo {
    std::vector<double> a{1.0, 1.0, 1.0, 100.0};
    std::vector<double> b{0.1, 0.1, 0.1, 0.1};
    double norm_a = 0, norm_b = 0;
    double alpha = 0, beta = 0;
    std::vector<double> a_scaled, b_scaled;
    // channels 1..3 at 2-bit: dynamic range (largest magnitude the
    // quantizer grid must reach) before and after adding the scaled
    // low-norm token
    double range_before = 0, range_after = 0, step_inflation = 0;
    double artifact_lhs = 0;  // alpha * c
    double artifact_rhs = 0;  // beta * max_{j != d} a_j
};

ArtifactDemo artifact_demo();

}  // namespace oscar
