#pragma once

#include <string>
#include <vector>

#include "oscar/quant.hpp"
#include "oscar/tensor.hpp"

namespace oscar {

enum class Method { kFp, kKivi, kRotateOnly, kScaleOnly, kOscar };
enum class Scaling { kL2, kRsqrt, kMax, kMeanAbs };

Method method_from_string(const std::string &s);
std::string method_to_string(Method m);
Scaling scaling_from_string(const std::string &s);
std::string scaling_to_string(Scaling s);

struct PipelineConfig {
    Method method = Method::kOscar;
    int bits = 2;               // 0 = quantization disabled (exact cache)
    int64_t group_size = 32;    // G
    int64_t residual_len = 128; // R
    Scaling scaling = Scaling::kL2;
    int64_t head_dim = 128;     // d_h
    int64_t heads = 1;          // H

    bool rotates() const { return method == Method::kRotateOnly || method == Method::kOscar; }
    bool scales() const { return method == Method::kScaleOnly || method == Method::kOscar; }
    bool quantizes() const { return method != Method::kFp && bits != 0; }
    void validate() const;
};

// One packed block of R tokens for one head. Key blocks hold codes
// channel-major ([channel][token]), value blocks token-major
// ([token][channel-group]). bits==2 uses the packed word layout from
// quant.hpp; other widths keep raw codes; bits==0 stores exact values.
struct PackedBlock {
    std::vector<QuantParams> params;
    PackedWords packed;           // bits == 2
    std::vector<uint16_t> codes;  // bits in {3,4,8,16}
    std::vector<double> raw;      // bits == 0, token-major rows
};

struct MemoryReport {
    int64_t packed_tokens = 0;
    int64_t residual_tokens = 0;
    int64_t packed_k_payload_bits = 0;   // packed tokens * H * d_h * b
    int64_t packed_v_payload_bits = 0;
    int64_t residual_k_payload_bits = 0; // residual tokens * H * d_h * 64
    int64_t residual_v_payload_bits = 0;
    int64_t k_norm_bits = 0;             // per-(token, head) norms, fp64
    int64_t param_bits = 0;              // delta + zero point per group, fp64 each
    int64_t total_bits() const;
    double effective_bits_per_value() const;
};

// The stateful cache of the buffered-quantization algorithm: packed
// low-bit history plus a high-precision residual window of fewer than R
// tokens, with per-token key norms kept as metadata.
class KvCache {
  public:
    KvCache() = default;
    explicit KvCache(const PipelineConfig &cfg);

    const PipelineConfig &config() const { return config_; }
    int64_t packed_tokens() const { return packed_tokens_; }
    int64_t residual_tokens() const { return k_residual_rows_; }
    int64_t total_tokens() const { return packed_tokens_ + k_residual_rows_; }
    int64_t flush_count() const { return flush_count_; }

    // Key path. new_k holds tokens already transformed for the active
    // method (rotated and/or normalized); norms has one entry per
    // (token, head), all ones for methods without scaling.
    //
    // First call on an empty cache is the prefill path: with r = S mod R
    // the first S - r tokens are packed immediately and the last r enter
    // the residual window. Later calls append token by token, flushing a
    // full R-block whenever the window fills.
    void buffer_quant_k(const Tensor3 &new_k, const std::vector<double> &norms);

    // Value path; mirrors the key path with token-grouped quantization
    // and no norm metadata.
    void buffer_quant_v(const Tensor3 &new_v);

    // Dequantized history with key norms multiplied back into the rows
    // (packed and residual alike), concatenated with the residual.
    Tensor3 materialize_k() const;
    Tensor3 materialize_v() const;

    MemoryReport memory_report() const;

    // debug dump: JSON manifest line + raw little-endian sections
    void dump(const std::string &path) const;
    static KvCache load(const std::string &path);

  private:
    void flush_k_block(int64_t head, const double *rows, const double *norms);
    void flush_v_block(int64_t head, const double *rows);
    void pack_k_tokens(const Tensor3 &k, const std::vector<double> &norms,
                       int64_t begin, int64_t count);
    void pack_v_tokens(const Tensor3 &v, int64_t begin, int64_t count);

    PipelineConfig config_;
    bool k_prefilled_ = false;
    bool v_prefilled_ = false;
    int64_t packed_tokens_ = 0;
    int64_t v_packed_tokens_ = 0;
    int64_t flush_count_ = 0;

    // [head][block]
    std::vector<std::vector<PackedBlock>> k_blocks_;
    std::vector<std::vector<PackedBlock>> v_blocks_;
    // [head][packed token]
    std::vector<std::vector<double>> k_norms_grouped_;

    // residual window, row-major [token][head][d_h]
    std::vector<double> k_residual_;
    std::vector<double> k_norms_residual_;  // [token * H + head]
    std::vector<double> v_residual_;
    int64_t k_residual_rows_ = 0;
    int64_t v_residual_rows_ = 0;
};

}  // namespace oscar
