#pragma once

#include <vector>

#include "oscar/kv_cache.hpp"
#include "oscar/tensor.hpp"

namespace oscar {

// Single-layer attention stub. w_q/w_k/w_v map d_model -> H*d_h
// (heads side by side), w_o maps H*d_h -> d_model.
struct ModelStub {
    int64_t d_model = 0;
    int64_t heads = 0;
    int64_t head_dim = 0;
    Matrix w_q, w_k, w_v, w_o;
    bool preprocessed = false;
};

// Folds the normalized Hadamard matrix into the value path, per head
// block: W_V <- W_V (I_H (x) Hn), W_O <- (I_H (x) Hn) W_O. Running the
// folded weights leaves the attention output unchanged because Hn is
// self-inverse; the cache then holds rotated values.
ModelStub preprocess(const ModelStub &model);

struct ScaledTokens {
    Tensor3 scaled;
    std::vector<double> norms;  // [token * H + head]
    int64_t degenerate_count = 0;  // zero vectors replaced by epsilon norm
};

// Per-(token, head) norm scaling. l2 divides by the Euclidean norm;
// rsqrt multiplies by a fast reciprocal square root (float seed + one
// Newton step, relative error well under 1e-6); max uses the largest
// absolute entry; mean-abs the mean absolute entry. Zero vectors get
// norm 1e-12 and are counted in degenerate_count.
ScaledTokens omni_token_scale(const Tensor3 &k, Scaling strategy);

double fast_rsqrt(double x);

// Stable softmax attention for one query row set [1 x H x d_h] against
// [S x H x d_h] keys/values, 1/sqrt(d_h) temperature.
Tensor3 attention(const Tensor3 &q, const Tensor3 &keys, const Tensor3 &values);

// Causal prefill attention: query t sees keys 0..t. Parallel over
// (query, head) pairs.
Tensor3 attention_causal(const Tensor3 &q, const Tensor3 &keys, const Tensor3 &values);

struct PrefillResult {
    KvCache cache;
    Matrix attn_out;  // [S x d_model], after the output projection
};

struct StepOutput {
    Matrix attn_out;              // [1 x d_model]
    std::vector<double> logits;   // [H x S_total], head-major
    int64_t context_tokens = 0;
};

// Runs one prefill pass: projections, method-specific transforms,
// causal attention over the current (norm-restored) tensors, then
// buffered quantization of K and V into a fresh cache.
PrefillResult prefill(const ModelStub &model, const Matrix &hidden,
                      const PipelineConfig &cfg);

// One decode step against the cache; appends the new token afterwards.
StepOutput decode_step(const ModelStub &model, KvCache &cache, const Matrix &hidden_t,
                       const PipelineConfig &cfg);

// ---- simulation harness ----------------------------------------------

// Projections for fidelity experiments on synthetic key data: the key
// projection is the identity so generated patterns land in K unchanged;
// the query projection is a +/- diagonal at a small gain, which keeps
// queries channel-aligned with the keys while decorrelating each token
// from itself and keeping softmax temperatures moderate; the value
// projection is block-diagonal per head, an identity share plus a dense
// mix, so the value stream carries a controllable amount of the channel
// structure; the output projection is dense random.
ModelStub make_sim_stub(int64_t heads, int64_t head_dim, double query_gain,
                        double value_mix, SeededRng &rng);

struct FidelityReport {
    double output_mse = 0.0;       // decode outputs vs the fp oracle
    double logit_mse = 0.0;        // decode logits vs the fp oracle
    double prefill_output_mse = 0.0;
    MemoryReport memory;
    int64_t flushes = 0;
    int64_t decode_steps = 0;
};

// Runs the configured method and the fp oracle side by side on the same
// hidden stream (prefill rows then decode rows) and reports decode-side
// MSEs.
FidelityReport simulate_fidelity(const ModelStub &model, const Matrix &hidden_prefill,
                                 const Matrix &hidden_decode, const PipelineConfig &cfg);

}  // namespace oscar
