#pragma once

#include <string>
#include <vector>

#include "oscar/tensor.hpp"

namespace oscar {

struct ModalityBlock {
    int64_t start = 0;
    int64_t end = 0;  // exclusive
    double scale = 1.0;
};

// Synthetic token-norm-imbalance patterns layered over a standard
// normal base, per head:
//
//  * offset channels: consistent-sign stripes, value = sign * factor +
//    width * N(0,1). These are the classic key-cache outlier channels;
//    a near-zero token inside such a channel stretches the group range
//    down to zero, which is what makes shared per-channel parameters
//    fragile.
//  * scaled channels: plain variance scaling (zero mean).
//  * sink tokens: rows replaced by a flat low-norm profile,
//    factor * typical_norm / sqrt(d_h) * N(0,1) per entry. Flat on
//    purpose: low-norm outlier tokens have roughly uniform entries, so
//    amplifying them to a common norm creates artificial outliers in
//    channels where normal tokens are small.
//  * heavy tokens: whole rows scaled up (large-norm outliers).
//  * modality blocks: contiguous token ranges rescaled.
struct TniSpec {
    int64_t tokens = 256;
    int64_t heads = 4;
    int64_t head_dim = 64;
    uint64_t seed = 42;

    std::vector<int64_t> offset_channels;
    double offset_factor = 20.0;
    double offset_width = 1.0;

    std::vector<int64_t> scaled_channels;
    double scaled_factor = 8.0;

    std::vector<int64_t> sink_tokens;
    double sink_factor = 0.01;

    std::vector<int64_t> heavy_tokens;
    double heavy_factor = 20.0;

    std::vector<ModalityBlock> modality_blocks;

    // Default profile used by the CLI and the error study: stripe
    // channels plus a sink population sized so the with/without study
    // keeps group divisibility.
    static TniSpec default_spec();
    void validate() const;
};

struct DataAnnotations {
    std::vector<int64_t> sink_tokens;
    std::vector<int64_t> heavy_tokens;
    std::vector<int64_t> offset_channels;
    std::vector<int64_t> scaled_channels;
    std::vector<ModalityBlock> modality_blocks;
};

struct GeneratedData {
    Tensor3 tensor;
    DataAnnotations annotations;
};

GeneratedData generate(const TniSpec &spec);

// Portable tensor container: magic "KVT1", one JSON header line
// {shape, dtype, layout, modality_blocks, outlier_tokens, ...}, then the
// raw little-endian float body.
void write_file(const std::string &path, const Tensor3 &tensor,
                const DataAnnotations &annotations, const std::string &dtype = "f64");
GeneratedData read_file(const std::string &path);

}  // namespace oscar
