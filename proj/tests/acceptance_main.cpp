// Acceptance suite: one line per criterion, exit code reflects overall
// pass/fail. Runs everything the README promises at the stated
// tolerances.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "oscar/analysis.hpp"
#include "oscar/costmodel.hpp"
#include "oscar/datagen.hpp"
#include "oscar/hadamard.hpp"
#include "oscar/pipeline.hpp"
#include "oscar/quant.hpp"
#include "oscar/tensor.hpp"

using namespace oscar;

namespace {

int g_failures = 0;

class Criterion {
  public:
    explicit Criterion(std::string name) : name_(std::move(name)) {
        start_ = std::chrono::steady_clock::now();
    }
    void check(bool ok, const std::string &detail) {
        if (!ok) {
            failed_details_.push_back(detail);
        }
    }
    void finish() {
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        if (failed_details_.empty()) {
            std::printf("PASS %-58s (%.2fs)\n", name_.c_str(), secs);
        } else {
            ++g_failures;
            std::printf("FAIL %-58s (%.2fs)\n", name_.c_str(), secs);
            for (const auto &d : failed_details_) std::printf("     - %s\n", d.c_str());
        }
    }

  private:
    std::string name_;
    std::vector<std::string> failed_details_;
    std::chrono::steady_clock::time_point start_;
};

std::string fmt(const char *pattern, double a, double b = 0, double c = 0) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), pattern, a, b, c);
    return buf;
}

// ---- 1: cost table ------------------------------------------------------

void criterion_cost_table() {
    Criterion crit("1 cost-table reproduction (d=4096 h=128 L=1e4, +-0.1M)");
    CostConfig cfg;
    cfg.d = 4096;
    cfg.h = 128;
    cfg.L = 10000;
    cfg.lookup_weight = 5;
    const struct {
        CostMethod m;
        double prefill, decode;
    } cells[] = {
        {CostMethod::kKivi, 204.8, 81.9},
        {CostMethod::kQuarot, 778.2, 82.0},
        {CostMethod::kOscar, 901.1, 123.0},
        {CostMethod::kTurboquant, 32051.0, 249.0},
        {CostMethod::kTurboquantPlus, 21187.0, 247.9},
    };
    for (const auto &cell : cells) {
        const CostBreakdown c = method_cost(cell.m, cfg);
        crit.check(std::fabs(c.effective_prefill_m() - cell.prefill) <= 0.1,
                   cost_method_to_string(cell.m) +
                       fmt(" prefill %.2fM vs %.1fM", c.effective_prefill_m(), cell.prefill));
        crit.check(std::fabs(c.effective_decode_m() - cell.decode) <= 0.1,
                   cost_method_to_string(cell.m) +
                       fmt(" decode %.2fM vs %.1fM", c.effective_decode_m(), cell.decode));
    }
    crit.finish();
}

// ---- 2: artifact demo ---------------------------------------------------

void criterion_artifact_demo() {
    Criterion crit("2 scaling-artifact demo (alpha=5, b'=0.5 exact, >=50x step)");
    const ArtifactDemo d = artifact_demo();
    crit.check(d.alpha == 5.0, fmt("alpha %.9f != 5", d.alpha));
    crit.check(std::fabs(d.beta - 0.01) <= 1e-4, fmt("beta %.9f vs 0.01", d.beta));
    for (int i = 0; i < 3; ++i) {
        crit.check(std::fabs(d.a_scaled[static_cast<size_t>(i)] - 0.01) <= 1e-3,
                   fmt("a'[%g] = %.6f vs 0.01", i, d.a_scaled[static_cast<size_t>(i)]));
    }
    crit.check(std::fabs(d.a_scaled[3] - 1.0) <= 1e-3, fmt("a'[3] = %.6f vs 1.0", d.a_scaled[3]));
    for (double b : d.b_scaled) crit.check(b == 0.5, fmt("b' entry %.17g != 0.5", b));
    crit.check(d.step_inflation >= 50.0, fmt("step inflation %.3f < 50", d.step_inflation));
    crit.finish();
}

// ---- 3: transparency ----------------------------------------------------

void criterion_transparency() {
    Criterion crit("3 rotation/scaling transparency (quant off, 1e-9 rel)");
    for (int64_t d_h : {32, 64, 128}) {
        for (int64_t S : {64, 300}) {
            for (uint64_t seed = 1; seed <= 10; ++seed) {
                SeededRng rng(seed * 1000 + static_cast<uint64_t>(d_h) + static_cast<uint64_t>(S));
                const int64_t heads = 2;
                ModelStub m;
                m.heads = heads;
                m.head_dim = d_h;
                m.d_model = heads * d_h;
                const double sc = 1.0 / std::sqrt(static_cast<double>(m.d_model));
                for (Matrix *w : {&m.w_q, &m.w_k, &m.w_v, &m.w_o}) {
                    *w = Matrix(m.d_model, m.d_model);
                    for (double &x : w->data) x = rng.next_normal() * sc;
                }
                Matrix hidden(S, m.d_model);
                for (double &x : hidden.data) x = rng.next_normal();

                PipelineConfig cfg;
                cfg.bits = 0;  // quantization disabled
                cfg.heads = heads;
                cfg.head_dim = d_h;
                cfg.group_size = 32;
                cfg.residual_len = 128;

                cfg.method = Method::kFp;
                const PrefillResult fp = prefill(m, hidden, cfg);
                cfg.method = Method::kOscar;
                const PrefillResult os = prefill(preprocess(m), hidden, cfg);
                double worst = 0.0;
                for (size_t i = 0; i < fp.attn_out.data.size(); ++i) {
                    const double denom = std::max(1e-6, std::fabs(fp.attn_out.data[i]));
                    worst = std::max(worst,
                                     std::fabs(os.attn_out.data[i] - fp.attn_out.data[i]) / denom);
                }
                crit.check(worst < 1e-9,
                           fmt("d_h=%g S=%g worst rel err %.3g", static_cast<double>(d_h),
                               static_cast<double>(S), worst));
            }
        }
    }
    crit.finish();
}

// ---- 4: flush consistency -----------------------------------------------

void criterion_flush_consistency() {
    Criterion crit("4 flush consistency (prefill == token-by-token, 1e-12)");
    for (auto [S, R] : std::vector<std::pair<int64_t, int64_t>>{{300, 128}, {256, 128}, {130, 64}}) {
        PipelineConfig cfg;
        cfg.method = Method::kOscar;
        cfg.bits = 2;
        cfg.group_size = 32;
        cfg.residual_len = R;
        cfg.heads = 2;
        cfg.head_dim = 64;

        SeededRng rng(static_cast<uint64_t>(S * 31 + R));
        Tensor3 k(S, 2, 64), v(S, 2, 64);
        for (double &x : k.data) x = rng.next_normal();
        for (double &x : v.data) x = rng.next_normal();
        std::vector<double> norms(static_cast<size_t>(S * 2));
        for (double &n : norms) n = 0.5 + rng.next_uniform();

        KvCache batched(cfg);
        batched.buffer_quant_k(k, norms);
        batched.buffer_quant_v(v);

        KvCache stepped(cfg);
        stepped.buffer_quant_k(Tensor3(0, 2, 64), {});
        stepped.buffer_quant_v(Tensor3(0, 2, 64));
        for (int64_t t = 0; t < S; ++t) {
            Tensor3 kt(1, 2, 64), vt(1, 2, 64);
            std::copy(k.data.begin() + t * 128, k.data.begin() + (t + 1) * 128, kt.data.begin());
            std::copy(v.data.begin() + t * 128, v.data.begin() + (t + 1) * 128, vt.data.begin());
            stepped.buffer_quant_k(kt, {norms[static_cast<size_t>(2 * t)],
                                        norms[static_cast<size_t>(2 * t + 1)]});
            stepped.buffer_quant_v(vt);
        }
        const Tensor3 a = batched.materialize_k();
        const Tensor3 b = stepped.materialize_k();
        const Tensor3 av = batched.materialize_v();
        const Tensor3 bv = stepped.materialize_v();
        double worst = 0.0;
        for (size_t i = 0; i < a.data.size(); ++i) {
            worst = std::max(worst, std::fabs(a.data[i] - b.data[i]));
        }
        for (size_t i = 0; i < av.data.size(); ++i) {
            worst = std::max(worst, std::fabs(av.data[i] - bv.data[i]));
        }
        crit.check(worst <= 1e-12, fmt("S=%g R=%g worst diff %.3g", static_cast<double>(S),
                                       static_cast<double>(R), worst));
    }
    crit.finish();
}

// ---- 5: quantizer bounds --------------------------------------------------

void criterion_quantizer_bounds() {
    Criterion crit("5 quantizer bounds (roundtrip, delta^2/12 MSE, packing)");
    SeededRng rng(2024);
    for (int bits : {2, 3, 4, 8}) {
        std::vector<double> vals(100000);
        for (double &v : vals) v = -4.0 + 8.0 * rng.next_uniform();
        const QuantParams p = quant_params(vals, bits);
        double worst = 0.0;
        for (double v : vals) {
            const double back = dequantize_one(quantize_one(v, p), p);
            worst = std::max(worst, std::fabs(v - back));
        }
        crit.check(worst <= p.delta / 2 + 1e-12,
                   fmt("bits=%g roundtrip err %.3g > delta/2 %.3g", bits, worst, p.delta / 2));
    }
    {
        std::vector<double> vals(1000000);
        for (double &v : vals) v = rng.next_uniform();
        const QuantParams p = quant_params(vals, 8);
        double acc = 0.0;
        for (double v : vals) {
            const double back = dequantize_one(quantize_one(v, p), p);
            acc += (v - back) * (v - back);
        }
        const double mse = acc / static_cast<double>(vals.size());
        const double expect = p.delta * p.delta / 12.0;
        crit.check(std::fabs(mse - expect) <= 0.05 * expect,
                   fmt("uniform MSE %.4g vs delta^2/12 %.4g", mse, expect));
    }
    {
        bool all_ok = true;
        for (int round = 0; round < 10000 && all_ok; ++round) {
            const size_t n = 1 + static_cast<size_t>(rng.next_below(64));
            std::vector<uint16_t> codes(n);
            for (auto &c : codes) c = static_cast<uint16_t>(rng.next_below(4));
            all_ok = unpack_2bit(pack_2bit(codes)) == codes;
        }
        crit.check(all_ok, "pack/unpack bijection failed");
    }
    crit.finish();
}

// ---- 6: TNI error amplification -------------------------------------------

void criterion_error_amplification() {
    Criterion crit("6 TNI error amplification (K>1.2x, V in [0.5,1.5], 18/20)");
    int k_ok = 0, v_ok = 0;
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        TniSpec spec = TniSpec::default_spec();
        spec.seed = seed;
        const GeneratedData data = generate(spec);
        ErrorStudySpec es;
        es.bits_list = {2};
        es.group_size = 32;
        es.outlier_tokens = data.annotations.sink_tokens;
        const ErrorReport rep = error_study(data.tensor, es);
        const double k_ratio =
            rep.cell(2, "with-ot", "per-channel-k") / rep.cell(2, "without-ot", "per-channel-k");
        const double v_ratio =
            rep.cell(2, "with-ot", "per-token-v") / rep.cell(2, "without-ot", "per-token-v");
        if (k_ratio > 1.2) ++k_ok;
        if (v_ratio >= 0.5 && v_ratio <= 1.5) ++v_ok;
    }
    crit.check(k_ok >= 18, fmt("per-channel K ratio > 1.2 in %g/20 seeds", k_ok));
    crit.check(v_ok >= 18, fmt("per-token V ratio in [0.5,1.5] in %g/20 seeds", v_ok));
    crit.finish();
}

// ---- 7: method ordering ----------------------------------------------------

void criterion_method_ordering() {
    Criterion crit("7 method ordering (oscar<rotate<kivi, scale>kivi, 18/20)");
    const int64_t S = 256, D = 64, heads = 4, d_h = 128;
    int oscar_lt_rotate = 0, rotate_lt_kivi = 0, scale_gt_kivi = 0;
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        TniSpec spec;
        spec.tokens = S + D;
        spec.heads = heads;
        spec.head_dim = d_h;
        spec.seed = seed;
        spec.offset_channels = {0, 1, 2, 3};
        spec.offset_factor = 18.0;
        spec.offset_width = 0.3;
        spec.scaled_channels = {4, 5, 6, 7, 8, 9, 10, 11};
        spec.scaled_factor = 8.0;
        spec.sink_factor = 0.01;
        SeededRng pick(seed * 77 + 5);
        while (spec.sink_tokens.size() < 8) {
            const int64_t t = static_cast<int64_t>(pick.next_below(static_cast<uint64_t>(S)));
            bool dup = false;
            for (int64_t s : spec.sink_tokens) dup = dup || s == t;
            if (!dup) spec.sink_tokens.push_back(t);
        }
        const GeneratedData data = generate(spec);
        const int64_t d_model = heads * d_h;
        Matrix hidden_prefill(S, d_model,
                              std::vector<double>(data.tensor.data.begin(),
                                                  data.tensor.data.begin() + S * d_model));
        Matrix hidden_decode(D, d_model,
                             std::vector<double>(data.tensor.data.begin() + S * d_model,
                                                 data.tensor.data.end()));
        SeededRng stub_rng(seed ^ 0x9e3779b97f4a7c15ull);
        const ModelStub model = make_sim_stub(heads, d_h, 0.12, 0.5, stub_rng);

        PipelineConfig cfg;
        cfg.bits = 2;
        cfg.group_size = 32;
        cfg.residual_len = 128;
        cfg.heads = heads;
        cfg.head_dim = d_h;

        auto run = [&](Method method) {
            cfg.method = method;
            return simulate_fidelity(model, hidden_prefill, hidden_decode, cfg).output_mse;
        };
        const double kivi = run(Method::kKivi);
        const double rotate = run(Method::kRotateOnly);
        const double scale = run(Method::kScaleOnly);
        const double oscar = run(Method::kOscar);
        if (oscar < rotate) ++oscar_lt_rotate;
        if (rotate < kivi) ++rotate_lt_kivi;
        if (scale > kivi) ++scale_gt_kivi;
    }
    crit.check(oscar_lt_rotate >= 18, fmt("oscar < rotate-only in %g/20 seeds", oscar_lt_rotate));
    crit.check(rotate_lt_kivi >= 18, fmt("rotate-only < kivi in %g/20 seeds", rotate_lt_kivi));
    crit.check(scale_gt_kivi >= 18, fmt("scale-only > kivi in %g/20 seeds", scale_gt_kivi));
    crit.finish();
}

// ---- 8: MSE lower bound -----------------------------------------------------

void criterion_mse_lower_bound() {
    Criterion crit("8 MSE lower bound (two-token exact, 2x slack on blocks)");
    SeededRng rng(31337);
    int exact_ok = 0;
    const int pairs = 1000;
    for (int round = 0; round < pairs; ++round) {
        const int bits = std::vector<int>{2, 3, 4}[static_cast<size_t>(round % 3)];
        const double n1 = 0.1 + 10.0 * rng.next_uniform();
        const double n2 = 0.1 + 10.0 * rng.next_uniform();
        Matrix block(2, 16);
        for (int row = 0; row < 2; ++row) {
            double ss = 0.0;
            std::vector<double> v(16);
            for (double &x : v) {
                x = rng.next_normal();
                ss += x * x;
            }
            const double target = row == 0 ? n1 : n2;
            for (int64_t c = 0; c < 16; ++c) {
                block.at(row, c) = v[static_cast<size_t>(c)] * target / std::sqrt(ss);
            }
        }
        if (rtn_block_mse_model(block, bits) >= mse_lower_bound(block, bits)) ++exact_ok;
    }
    crit.check(exact_ok == pairs, fmt("exact bound held for %g/%g pairs", exact_ok, pairs));

    int slack_ok = 0;
    const int blocks = 200;
    for (int round = 0; round < blocks; ++round) {
        Matrix block(32, 16);
        for (double &x : block.data) x = rng.next_normal() * 1.5;
        if (rtn_block_mse_empirical(block, 2) >= mse_lower_bound(block, 2) / 2.0) ++slack_ok;
    }
    crit.check(slack_ok == blocks, fmt("2x-slack bound held for %g/%g blocks", slack_ok, blocks));
    crit.finish();
}

// ---- 9: hadamard properties --------------------------------------------------

void criterion_hadamard() {
    Criterion crit("9 hadamard properties (orthonormal, self-inverse, 1e-10)");
    SeededRng rng(4096);
    for (int64_t d = 1; d <= 256; d <<= 1) {
        const Matrix h = hadamard_matrix(d);
        double worst = 0.0;
        for (int64_t i = 0; i < d; ++i) {
            for (int64_t j = 0; j < d; ++j) {
                double acc = 0.0;
                for (int64_t k = 0; k < d; ++k) acc += h.at(k, i) * h.at(k, j);
                worst = std::max(worst, std::fabs(acc - (i == j ? 1.0 : 0.0)));
            }
        }
        crit.check(worst < 1e-10, fmt("d=%g orthonormality err %.3g", static_cast<double>(d), worst));

        std::vector<double> v(static_cast<size_t>(d)), q(static_cast<size_t>(d));
        for (double &x : v) x = rng.next_normal();
        for (double &x : q) x = rng.next_normal();
        double dot = 0.0, nv = 0.0;
        for (int64_t i = 0; i < d; ++i) {
            dot += v[static_cast<size_t>(i)] * q[static_cast<size_t>(i)];
            nv += v[static_cast<size_t>(i)] * v[static_cast<size_t>(i)];
        }
        std::vector<double> v2 = v, q2 = q;
        fht_inplace(v2);
        fht_inplace(q2);
        double dot2 = 0.0, nv2 = 0.0;
        for (int64_t i = 0; i < d; ++i) {
            dot2 += v2[static_cast<size_t>(i)] * q2[static_cast<size_t>(i)];
            nv2 += v2[static_cast<size_t>(i)] * v2[static_cast<size_t>(i)];
        }
        crit.check(std::fabs(dot2 - dot) <= 1e-10 * std::max(1.0, std::fabs(dot)),
                   fmt("d=%g inner product drift", static_cast<double>(d)));
        crit.check(std::fabs(std::sqrt(nv2) - std::sqrt(nv)) < 1e-10,
                   fmt("d=%g norm drift", static_cast<double>(d)));
        std::vector<double> v3 = v;
        fht_inplace(v3);
        fht_inplace(v3);
        double selfinv = 0.0;
        for (int64_t i = 0; i < d; ++i) {
            selfinv = std::max(selfinv, std::fabs(v3[static_cast<size_t>(i)] - v[static_cast<size_t>(i)]));
        }
        crit.check(selfinv < 1e-10, fmt("d=%g self-inverse err %.3g", static_cast<double>(d), selfinv));
    }
    crit.finish();
}

}  // namespace

int main() {
    criterion_cost_table();
    criterion_artifact_demo();
    criterion_transparency();
    criterion_flush_consistency();
    criterion_quantizer_bounds();
    criterion_error_amplification();
    criterion_method_ordering();
    criterion_mse_lower_bound();
    criterion_hadamard();
    if (g_failures > 0) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all acceptance criteria passed\n");
    return 0;
}
