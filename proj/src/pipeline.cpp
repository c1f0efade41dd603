#include "oscar/pipeline.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "oscar/hadamard.hpp"

namespace oscar {

namespace {

Tensor3 reshape_to_heads(const Matrix &m, int64_t heads, int64_t head_dim) {
    if (m.cols != heads * head_dim) {
        throw std::invalid_argument("reshape_to_heads: column count mismatch");
    }
    return Tensor3(m.rows, heads, head_dim, m.data);
}

Matrix flatten_heads(const Tensor3 &x) {
    return Matrix(x.tokens, x.heads * x.channels, x.data);
}

void check_model(const ModelStub &model, const PipelineConfig &cfg) {
    if (model.heads != cfg.heads || model.head_dim != cfg.head_dim) {
        throw std::invalid_argument("model stub and config disagree on head layout");
    }
    if (cfg.method == Method::kOscar && !model.preprocessed) {
        throw std::invalid_argument("oscar needs a preprocessed model (value-path folding)");
    }
    if (cfg.method != Method::kOscar && model.preprocessed) {
        throw std::invalid_argument("only oscar runs on a preprocessed model");
    }
}

}  // namespace

ModelStub preprocess(const ModelStub &model) {
    if (model.preprocessed) {
        throw std::logic_error("preprocess: model is already preprocessed");
    }
    if (!is_power_of_two(model.head_dim)) {
        throw std::invalid_argument("preprocess: head_dim must be a power of two");
    }
    const Matrix hn = hadamard_matrix(model.head_dim);
    ModelStub out = model;
    const int64_t d = model.head_dim;
    // W_V block column update: B <- B * Hn
    for (int64_t h = 0; h < model.heads; ++h) {
        for (int64_t r = 0; r < model.w_v.rows; ++r) {
            std::vector<double> row(static_cast<size_t>(d));
            for (int64_t j = 0; j < d; ++j) {
                double acc = 0.0;
                for (int64_t k = 0; k < d; ++k) {
                    acc += model.w_v.at(r, h * d + k) * hn.at(k, j);
                }
                row[static_cast<size_t>(j)] = acc;
            }
            for (int64_t j = 0; j < d; ++j) out.w_v.at(r, h * d + j) = row[static_cast<size_t>(j)];
        }
    }
    // W_O block row update: B <- Hn * B
    for (int64_t h = 0; h < model.heads; ++h) {
        for (int64_t c = 0; c < model.w_o.cols; ++c) {
            std::vector<double> col(static_cast<size_t>(d));
            for (int64_t i = 0; i < d; ++i) {
                double acc = 0.0;
                for (int64_t k = 0; k < d; ++k) {
                    acc += hn.at(i, k) * model.w_o.at(h * d + k, c);
                }
                col[static_cast<size_t>(i)] = acc;
            }
            for (int64_t i = 0; i < d; ++i) out.w_o.at(h * d + i, c) = col[static_cast<size_t>(i)];
        }
    }
    out.preprocessed = true;
    return out;
}

double fast_rsqrt(double x) {
    const float xf = static_cast<float>(x);
    if (xf <= 0.0f || !std::isfinite(xf)) {
        return 1.0 / std::sqrt(x);
    }
    double y = static_cast<double>(1.0f / std::sqrt(xf));
    y = y * (1.5 - 0.5 * x * y * y);  // one Newton-Raphson step
    return y;
}

ScaledTokens omni_token_scale(const Tensor3 &k, Scaling strategy) {
    ScaledTokens out;
    out.scaled = k;
    out.norms.assign(static_cast<size_t>(k.tokens * k.heads), 1.0);
    constexpr double kEps = 1e-12;
    for (int64_t t = 0; t < k.tokens; ++t) {
        for (int64_t h = 0; h < k.heads; ++h) {
            const double *src = k.row(t, h);
            double s = 0.0;
            bool zero = true;
            for (int64_t c = 0; c < k.channels; ++c) {
                if (src[c] != 0.0) zero = false;
            }
            double inv = 0.0;
            if (zero) {
                s = kEps;
                inv = 1.0 / kEps;
                ++out.degenerate_count;
            } else {
                switch (strategy) {
                    case Scaling::kL2: {
                        double ss = 0.0;
                        for (int64_t c = 0; c < k.channels; ++c) ss += src[c] * src[c];
                        s = std::sqrt(ss);
                        inv = 1.0 / s;
                        break;
                    }
                    case Scaling::kRsqrt: {
                        double ss = 0.0;
                        for (int64_t c = 0; c < k.channels; ++c) ss += src[c] * src[c];
                        inv = fast_rsqrt(ss);
                        s = 1.0 / inv;
                        break;
                    }
                    case Scaling::kMax: {
                        double m = 0.0;
                        for (int64_t c = 0; c < k.channels; ++c) {
                            m = std::max(m, std::fabs(src[c]));
                        }
                        s = m;
                        inv = 1.0 / s;
                        break;
                    }
                    case Scaling::kMeanAbs: {
                        double m = 0.0;
                        for (int64_t c = 0; c < k.channels; ++c) m += std::fabs(src[c]);
                        s = m / static_cast<double>(k.channels);
                        inv = 1.0 / s;
                        break;
                    }
                }
            }
            out.norms[static_cast<size_t>(t * k.heads + h)] = s;
            double *dst = out.scaled.row(t, h);
            for (int64_t c = 0; c < k.channels; ++c) dst[c] = src[c] * inv;
        }
    }
    return out;
}

namespace {

void attend_one(const double *q, const Tensor3 &keys, const Tensor3 &values, int64_t head,
                int64_t limit, double *out, double *logits_out) {
    const int64_t d = keys.channels;
    const double temp = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> logits(static_cast<size_t>(limit));
    double mx = -HUGE_VAL;
    for (int64_t s = 0; s < limit; ++s) {
        const double *kr = keys.row(s, head);
        double dot = 0.0;
        for (int64_t c = 0; c < d; ++c) dot += q[c] * kr[c];
        logits[static_cast<size_t>(s)] = dot * temp;
        mx = std::max(mx, dot * temp);
    }
    if (logits_out != nullptr) {
        std::memcpy(logits_out, logits.data(), sizeof(double) * static_cast<size_t>(limit));
    }
    double z = 0.0;
    for (int64_t s = 0; s < limit; ++s) {
        logits[static_cast<size_t>(s)] = std::exp(logits[static_cast<size_t>(s)] - mx);
        z += logits[static_cast<size_t>(s)];
    }
    const int64_t dv = values.channels;
    for (int64_t c = 0; c < dv; ++c) out[c] = 0.0;
    for (int64_t s = 0; s < limit; ++s) {
        const double w = logits[static_cast<size_t>(s)] / z;
        const double *vr = values.row(s, head);
        for (int64_t c = 0; c < dv; ++c) out[c] += w * vr[c];
    }
}

}  // namespace

Tensor3 attention(const Tensor3 &q, const Tensor3 &keys, const Tensor3 &values) {
    if (q.heads != keys.heads || q.channels != keys.channels ||
        keys.tokens != values.tokens || keys.heads != values.heads) {
        throw std::invalid_argument("attention: shape mismatch");
    }
    Tensor3 out(q.tokens, q.heads, values.channels);
    const int64_t n = q.tokens * q.heads;
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        const int64_t t = i / q.heads;
        const int64_t h = i % q.heads;
        attend_one(q.row(t, h), keys, values, h, keys.tokens, out.row(t, h), nullptr);
    }
    return out;
}

Tensor3 attention_causal(const Tensor3 &q, const Tensor3 &keys, const Tensor3 &values) {
    if (q.tokens != keys.tokens) {
        throw std::invalid_argument("attention_causal: query/key token counts differ");
    }
    Tensor3 out(q.tokens, q.heads, values.channels);
    const int64_t n = q.tokens * q.heads;
#pragma omp parallel for schedule(dynamic, 16)
    for (int64_t i = 0; i < n; ++i) {
        const int64_t t = i / q.heads;
        const int64_t h = i % q.heads;
        attend_one(q.row(t, h), keys, values, h, t + 1, out.row(t, h), nullptr);
    }
    return out;
}

namespace {

// Applies the method's key/query transforms. Returns transformed q, k
// and per-(token, head) norms (ones when the method does not scale).
struct Transformed {
    Tensor3 q, k;
    std::vector<double> norms;
};

Transformed apply_method(const Tensor3 &xq, const Tensor3 &xk, const PipelineConfig &cfg) {
    Transformed tr;
    tr.q = cfg.rotates() ? fht_tensor(xq) : xq;
    if (cfg.scales()) {
        ScaledTokens st = omni_token_scale(cfg.rotates() ? fht_tensor(xk) : xk, cfg.scaling);
        tr.k = std::move(st.scaled);
        tr.norms = std::move(st.norms);
    } else {
        tr.k = cfg.rotates() ? fht_tensor(xk) : xk;
        tr.norms.assign(static_cast<size_t>(xk.tokens * xk.heads), 1.0);
    }
    return tr;
}

// norm-restored copy (rows times per-(token, head) norms)
Tensor3 restore_norms(const Tensor3 &k, const std::vector<double> &norms) {
    Tensor3 out = k;
    for (int64_t t = 0; t < k.tokens; ++t) {
        for (int64_t h = 0; h < k.heads; ++h) {
            const double s = norms[static_cast<size_t>(t * k.heads + h)];
            double *r = out.row(t, h);
            for (int64_t c = 0; c < k.channels; ++c) r[c] *= s;
        }
    }
    return out;
}

}  // namespace

PrefillResult prefill(const ModelStub &model, const Matrix &hidden,
                      const PipelineConfig &cfg) {
    cfg.validate();
    check_model(model, cfg);
    if (hidden.cols != model.d_model) {
        throw std::invalid_argument("prefill: hidden width does not match model");
    }
    const Tensor3 xq = reshape_to_heads(matmul(hidden, model.w_q), cfg.heads, cfg.head_dim);
    const Tensor3 xk = reshape_to_heads(matmul(hidden, model.w_k), cfg.heads, cfg.head_dim);
    const Tensor3 xv = reshape_to_heads(matmul(hidden, model.w_v), cfg.heads, cfg.head_dim);

    Transformed tr = apply_method(xq, xk, cfg);

    // The prefill attention consumes the current tokens with norms
    // restored; quantization only affects later decode steps.
    const Tensor3 k_att = cfg.scales() ? restore_norms(tr.k, tr.norms) : tr.k;
    const Tensor3 attn = attention_causal(tr.q, k_att, xv);

    PrefillResult res{KvCache(cfg), matmul(flatten_heads(attn), model.w_o)};
    res.cache.buffer_quant_k(tr.k, tr.norms);
    res.cache.buffer_quant_v(xv);
    return res;
}

StepOutput decode_step(const ModelStub &model, KvCache &cache, const Matrix &hidden_t,
                       const PipelineConfig &cfg) {
    cfg.validate();
    check_model(model, cfg);
    if (hidden_t.rows != 1 || hidden_t.cols != model.d_model) {
        throw std::invalid_argument("decode_step: expected one hidden row of model width");
    }
    if (cache.config().method != cfg.method || cache.config().bits != cfg.bits ||
        cache.config().heads != cfg.heads || cache.config().head_dim != cfg.head_dim) {
        throw std::invalid_argument("decode_step: cache was built under a different config");
    }
    const Tensor3 xq = reshape_to_heads(matmul(hidden_t, model.w_q), cfg.heads, cfg.head_dim);
    const Tensor3 xk = reshape_to_heads(matmul(hidden_t, model.w_k), cfg.heads, cfg.head_dim);
    const Tensor3 xv = reshape_to_heads(matmul(hidden_t, model.w_v), cfg.heads, cfg.head_dim);

    Transformed tr = apply_method(xq, xk, cfg);

    const Tensor3 k_hist = cache.materialize_k();
    const Tensor3 v_hist = cache.materialize_v();
    const int64_t total = k_hist.tokens + 1;

    // history plus the current token (norm restored)
    Tensor3 k_all(total, cfg.heads, cfg.head_dim);
    Tensor3 v_all(total, cfg.heads, cfg.head_dim);
    std::memcpy(k_all.data.data(), k_hist.data.data(), sizeof(double) * k_hist.data.size());
    std::memcpy(v_all.data.data(), v_hist.data.data(), sizeof(double) * v_hist.data.size());
    for (int64_t h = 0; h < cfg.heads; ++h) {
        const double s = tr.norms[static_cast<size_t>(h)];
        const double *src = tr.k.row(0, h);
        double *dst = k_all.row(total - 1, h);
        for (int64_t c = 0; c < cfg.head_dim; ++c) dst[c] = src[c] * s;
        std::memcpy(v_all.row(total - 1, h), xv.row(0, h),
                    sizeof(double) * static_cast<size_t>(cfg.head_dim));
    }

    StepOutput out;
    out.context_tokens = total;
    out.logits.resize(static_cast<size_t>(cfg.heads * total));
    Tensor3 attn(1, cfg.heads, cfg.head_dim);
    for (int64_t h = 0; h < cfg.heads; ++h) {
        attend_one(tr.q.row(0, h), k_all, v_all, h, total, attn.row(0, h),
                   out.logits.data() + h * total);
    }
    out.attn_out = matmul(flatten_heads(attn), model.w_o);

    cache.buffer_quant_k(tr.k, tr.norms);
    cache.buffer_quant_v(xv);
    return out;
}

ModelStub make_sim_stub(int64_t heads, int64_t head_dim, double query_gain,
                        double value_mix, SeededRng &rng) {
    const int64_t d_model = heads * head_dim;
    ModelStub m;
    m.d_model = d_model;
    m.heads = heads;
    m.head_dim = head_dim;
    m.w_k = Matrix::identity(d_model);
    m.w_q = Matrix(d_model, d_model);
    for (int64_t i = 0; i < d_model; ++i) {
        m.w_q.at(i, i) = rng.next_uniform() < 0.5 ? -query_gain : query_gain;
    }
    // block-diagonal per head: an identity share keeps the hidden
    // channel structure visible in the value stream, the dense share
    // mixes it
    m.w_v = Matrix(d_model, d_model);
    const double hs = 1.0 / std::sqrt(static_cast<double>(head_dim));
    for (int64_t h = 0; h < heads; ++h) {
        for (int64_t i = 0; i < head_dim; ++i) {
            for (int64_t j = 0; j < head_dim; ++j) {
                double v = (1.0 - value_mix) * rng.next_normal() * hs;
                if (i == j) v += value_mix;
                m.w_v.at(h * head_dim + i, h * head_dim + j) = v;
            }
        }
    }
    m.w_o = Matrix(d_model, d_model);
    const double vs = 1.0 / std::sqrt(static_cast<double>(d_model));
    for (double &x : m.w_o.data) x = rng.next_normal() * vs;
    return m;
}

FidelityReport simulate_fidelity(const ModelStub &model, const Matrix &hidden_prefill,
                                 const Matrix &hidden_decode, const PipelineConfig &cfg) {
    cfg.validate();
    PipelineConfig fp_cfg = cfg;
    fp_cfg.method = Method::kFp;

    const ModelStub *run_model = &model;
    ModelStub folded;
    if (cfg.method == Method::kOscar) {
        folded = preprocess(model);
        run_model = &folded;
    }

    PrefillResult fp_res = prefill(model, hidden_prefill, fp_cfg);
    PrefillResult res = prefill(*run_model, hidden_prefill, cfg);

    FidelityReport rep;
    double pre_acc = 0.0;
    for (size_t i = 0; i < res.attn_out.data.size(); ++i) {
        const double d = res.attn_out.data[i] - fp_res.attn_out.data[i];
        pre_acc += d * d;
    }
    rep.prefill_output_mse = pre_acc / static_cast<double>(res.attn_out.data.size());

    double out_acc = 0.0, logit_acc = 0.0;
    int64_t out_n = 0, logit_n = 0;
    for (int64_t t = 0; t < hidden_decode.rows; ++t) {
        Matrix row(1, hidden_decode.cols,
                   std::vector<double>(hidden_decode.data.begin() + t * hidden_decode.cols,
                                       hidden_decode.data.begin() + (t + 1) * hidden_decode.cols));
        StepOutput fp_step = decode_step(model, fp_res.cache, row, fp_cfg);
        StepOutput step = decode_step(*run_model, res.cache, row, cfg);
        for (size_t i = 0; i < step.attn_out.data.size(); ++i) {
            const double d = step.attn_out.data[i] - fp_step.attn_out.data[i];
            out_acc += d * d;
            ++out_n;
        }
        for (size_t i = 0; i < step.logits.size(); ++i) {
            const double d = step.logits[i] - fp_step.logits[i];
            logit_acc += d * d;
            ++logit_n;
        }
    }
    rep.output_mse = out_n > 0 ? out_acc / static_cast<double>(out_n) : 0.0;
    rep.logit_mse = logit_n > 0 ? logit_acc / static_cast<double>(logit_n) : 0.0;
    rep.memory = res.cache.memory_report();
    rep.flushes = res.cache.flush_count();
    rep.decode_steps = hidden_decode.rows;
    return rep;
}

}  // namespace oscar
