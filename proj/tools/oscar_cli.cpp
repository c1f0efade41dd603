// Command-line front end: synthetic data generation, TNI profiling,
// quantization error studies, the scaling-artifact demo, the analytic
// cost model, and end-to-end cache-quantization fidelity simulation.
//
// Output files are CSV with fixed headers (JSON mirrors under --json);
// each output starts with a "# manifest=<path>" comment naming the run
// manifest, which carries the command echo, seed, version and
// timestamp. With identical flags and seed every output file is
// byte-identical; timestamps live only in the manifest.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "oscar/analysis.hpp"
#include "oscar/costmodel.hpp"
#include "oscar/datagen.hpp"
#include "oscar/pipeline.hpp"

using namespace oscar;
using nlohmann::json;

namespace {

constexpr const char *kVersion = "0.1.0";

uint64_t default_seed() {
    const char *env = std::getenv("OSCAR_SEED");
    if (env != nullptr && *env != '\0') {
        return std::strtoull(env, nullptr, 10);
    }
    return 42;
}

std::vector<int64_t> parse_index_list(const std::string &s) {
    std::vector<int64_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoll(item));
    }
    return out;
}

std::vector<ModalityBlock> parse_modality(const std::string &s) {
    std::vector<ModalityBlock> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        ModalityBlock b;
        long long start = 0, end = 0;
        if (std::sscanf(item.c_str(), "%lld:%lld:%lf", &start, &end, &b.scale) != 3) {
            throw CLI::ValidationError("--modality-blocks", "expected start:end:scale entries");
        }
        b.start = start;
        b.end = end;
        out.push_back(b);
    }
    return out;
}

std::string manifest_path(const std::string &out) { return out + ".manifest.json"; }

void write_manifest(const std::string &out, const std::string &command, const json &config,
                    uint64_t seed, const std::vector<std::string> &outputs) {
    json m;
    m["command"] = command;
    m["config"] = config;
    m["seed"] = seed;
    m["version"] = kVersion;
    const auto now = std::chrono::system_clock::now();
    m["timestamp_unix"] =
        std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
    m["outputs"] = outputs;
    std::ofstream f(manifest_path(out));
    f << m.dump(2) << "\n";
}

void write_table(const std::string &out, bool as_json, const std::string &header,
                 const std::vector<std::string> &csv_rows, const json &json_rows) {
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot open output file " + out);
    if (as_json) {
        json doc;
        doc["manifest"] = manifest_path(out);
        doc["rows"] = json_rows;
        f << doc.dump(2) << "\n";
    } else {
        f << "# manifest=" << manifest_path(out) << "\n" << header << "\n";
        for (const auto &r : csv_rows) f << r << "\n";
    }
}

std::string fmt(double v, int prec = 9) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    return buf;
}

// ---- generate ---------------------------------------------------------

struct GenerateArgs {
    std::string out = "tni.kvt";
    std::string dtype = "f64";
    std::string preset = "default";
    uint64_t seed = default_seed();
    int64_t tokens = -1, heads = -1, head_dim = -1;
    std::string offset_channels, scaled_channels, sink_tokens, heavy_tokens, modality;
    double offset_factor = -1, offset_width = -1, scaled_factor = -1, sink_factor = -1,
           heavy_factor = -1;
};

TniSpec spec_from_args(const GenerateArgs &a) {
    TniSpec spec = a.preset == "default" ? TniSpec::default_spec() : TniSpec{};
    if (a.preset == "none") {
        spec.offset_channels.clear();
        spec.sink_tokens.clear();
    }
    spec.seed = a.seed;
    if (a.tokens > 0) spec.tokens = a.tokens;
    if (a.heads > 0) spec.heads = a.heads;
    if (a.head_dim > 0) spec.head_dim = a.head_dim;
    if (!a.offset_channels.empty()) spec.offset_channels = parse_index_list(a.offset_channels);
    if (!a.scaled_channels.empty()) spec.scaled_channels = parse_index_list(a.scaled_channels);
    if (!a.sink_tokens.empty()) spec.sink_tokens = parse_index_list(a.sink_tokens);
    if (!a.heavy_tokens.empty()) spec.heavy_tokens = parse_index_list(a.heavy_tokens);
    if (!a.modality.empty()) spec.modality_blocks = parse_modality(a.modality);
    if (a.offset_factor > 0) spec.offset_factor = a.offset_factor;
    if (a.offset_width >= 0) spec.offset_width = a.offset_width;
    if (a.scaled_factor > 0) spec.scaled_factor = a.scaled_factor;
    if (a.sink_factor > 0) spec.sink_factor = a.sink_factor;
    if (a.heavy_factor > 0) spec.heavy_factor = a.heavy_factor;
    return spec;
}

json spec_to_json(const TniSpec &s) {
    json jb = json::array();
    for (const auto &b : s.modality_blocks) jb.push_back({b.start, b.end, b.scale});
    return json{{"tokens", s.tokens},
                {"heads", s.heads},
                {"head_dim", s.head_dim},
                {"seed", s.seed},
                {"offset_channels", s.offset_channels},
                {"offset_factor", s.offset_factor},
                {"offset_width", s.offset_width},
                {"scaled_channels", s.scaled_channels},
                {"scaled_factor", s.scaled_factor},
                {"sink_tokens", s.sink_tokens},
                {"sink_factor", s.sink_factor},
                {"heavy_tokens", s.heavy_tokens},
                {"heavy_factor", s.heavy_factor},
                {"modality_blocks", jb}};
}

int cmd_generate(const GenerateArgs &a) {
    const TniSpec spec = spec_from_args(a);
    const GeneratedData data = generate(spec);
    write_file(a.out, data.tensor, data.annotations, a.dtype);
    write_manifest(a.out, "generate", spec_to_json(spec), spec.seed, {a.out});
    std::cout << "wrote " << a.out << " shape [" << data.tensor.tokens << ", "
              << data.tensor.heads << ", " << data.tensor.channels << "] dtype " << a.dtype
              << "\n";
    return 0;
}

// ---- profile ----------------------------------------------------------

int cmd_profile(const std::string &input, const std::string &state, const std::string &out,
                bool as_json) {
    const GeneratedData data = read_file(input);
    const TniProfile prof = tni_profile(data.tensor, state);
    std::vector<std::string> rows;
    json jrows = json::array();
    for (size_t t = 0; t < prof.rows.size(); ++t) {
        const auto &r = prof.rows[t];
        rows.push_back(std::to_string(t) + "," + fmt(r.min) + "," + fmt(r.median) + "," +
                       fmt(r.max) + "," + fmt(r.mean));
        jrows.push_back({{"token", t},
                         {"min", r.min},
                         {"median", r.median},
                         {"max", r.max},
                         {"mean", r.mean}});
    }
    write_table(out, as_json, "token,min,median,max,mean", rows, jrows);
    write_manifest(out, "profile", {{"input", input}, {"state", state}}, 0, {out});
    std::cout << "profiled " << prof.rows.size() << " tokens -> " << out << "\n";
    return 0;
}

// ---- error-study ------------------------------------------------------

int cmd_error_study(const std::string &input, bool synthetic, uint64_t seed,
                    const std::string &bits_csv, int64_t group, const std::string &out,
                    bool as_json) {
    GeneratedData data;
    if (synthetic) {
        TniSpec spec = TniSpec::default_spec();
        spec.seed = seed;
        data = generate(spec);
    } else {
        data = read_file(input);
    }
    ErrorStudySpec spec;
    spec.bits_list.clear();
    for (int64_t b : parse_index_list(bits_csv)) spec.bits_list.push_back(static_cast<int>(b));
    spec.group_size = group;
    spec.outlier_tokens = data.annotations.sink_tokens;
    spec.modality_blocks = data.annotations.modality_blocks;
    const ErrorReport report = error_study(data.tensor, spec);
    std::vector<std::string> rows;
    json jrows = json::array();
    for (const auto &r : report.rows) {
        rows.push_back(std::to_string(r.bits) + "," + r.condition + "," + r.axis + "," +
                       fmt(r.mse_x100));
        jrows.push_back({{"bits", r.bits},
                         {"condition", r.condition},
                         {"axis", r.axis},
                         {"mse_x100", r.mse_x100}});
    }
    write_table(out, as_json, "bits,condition,axis,mse_x100", rows, jrows);
    write_manifest(out, "error-study",
                   {{"input", synthetic ? "synthetic-default" : input},
                    {"bits", bits_csv},
                    {"group", group}},
                   seed, {out});
    std::cout << "error study: " << report.rows.size() << " cells -> " << out << "\n";
    return 0;
}

// ---- demo-artifact ----------------------------------------------------

int cmd_demo_artifact(bool as_json) {
    const ArtifactDemo d = artifact_demo();
    if (as_json) {
        json j = {{"norm_a", d.norm_a},         {"norm_b", d.norm_b},
                  {"alpha", d.alpha},           {"beta", d.beta},
                  {"a_scaled", d.a_scaled},     {"b_scaled", d.b_scaled},
                  {"range_before", d.range_before}, {"range_after", d.range_after},
                  {"step_inflation", d.step_inflation},
                  {"artifact_lhs", d.artifact_lhs}, {"artifact_rhs", d.artifact_rhs}};
        std::cout << j.dump(2) << "\n";
        return 0;
    }
    auto vec = [](const std::vector<double> &v) {
        std::string s = "[";
        for (size_t i = 0; i < v.size(); ++i) {
            s += fmt(v[i], 6);
            if (i + 1 < v.size()) s += ", ";
        }
        return s + "]";
    };
    std::cout << "scaling-induced outlier artifact, worked example\n"
              << "  a  = " << vec(d.a) << "  (normal token, one dominant channel)\n"
              << "  b  = " << vec(d.b) << "  (flat low-norm token)\n"
              << "  ||a|| = " << fmt(d.norm_a, 6) << ", ||b|| = " << fmt(d.norm_b, 6) << "\n"
              << "  beta = 1/||a|| = " << fmt(d.beta, 6) << ", alpha = 1/||b|| = "
              << fmt(d.alpha, 6) << "\n"
              << "  a' = " << vec(d.a_scaled) << "\n"
              << "  b' = " << vec(d.b_scaled) << "\n"
              << "  channels 1-3 dynamic range: " << fmt(d.range_before, 6) << " -> "
              << fmt(d.range_after, 6) << "  (x" << fmt(d.step_inflation, 6)
              << " step inflation at 2 bits)\n"
              << "  artifact condition: alpha*c = " << fmt(d.artifact_lhs, 6)
              << " >> beta*max_(j!=d) a_j = " << fmt(d.artifact_rhs, 6) << "\n";
    return 0;
}

// ---- cost -------------------------------------------------------------

int cmd_cost(double d, double h, double L, double lookup_weight, const std::string &methods_csv,
             const std::string &scores_csv, const std::string &out, bool as_json) {
    CostConfig cfg;
    cfg.d = d;
    cfg.h = h;
    cfg.L = L;
    cfg.lookup_weight = lookup_weight;
    std::vector<CostMethod> methods;
    {
        std::stringstream ss(methods_csv);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) methods.push_back(cost_method_from_string(item));
        }
    }
    std::vector<std::string> rows;
    json jrows = json::array();
    for (CostMethod m : methods) {
        const CostBreakdown c = method_cost(m, cfg);
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s,%.1f,%.1f", cost_method_to_string(m).c_str(),
                      c.effective_prefill_m(), c.effective_decode_m());
        rows.push_back(buf);
        jrows.push_back({{"method", cost_method_to_string(m)},
                         {"prefill_arith", c.prefill_arith},
                         {"prefill_lookup", c.prefill_lookup},
                         {"decode_arith", c.decode_arith},
                         {"decode_lookup", c.decode_lookup},
                         {"effective_prefill_m", c.effective_prefill_m()},
                         {"effective_decode_m", c.effective_decode_m()}});
    }
    write_table(out, as_json, "method,prefill_m_units,decode_m_units", rows, jrows);
    for (const auto &r : rows) std::cout << r << "\n";

    if (!scores_csv.empty()) {
        std::map<std::string, double> scores;
        std::stringstream ss(scores_csv);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto eq = item.find('=');
            if (eq == std::string::npos) {
                throw CLI::ValidationError("--scores", "expected method=score entries");
            }
            scores[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
        }
        const ParetoTable table = pareto_table(methods, cfg, scores);
        for (const auto &w : table.warnings) std::cerr << "warning: " << w << "\n";
        std::cout << "method,decode_m_units,score,on_front\n";
        for (const auto &row : table.rows) {
            std::cout << cost_method_to_string(row.method) << "," << fmt(row.effective_decode_m, 6)
                      << "," << fmt(row.score, 6) << "," << (row.on_front ? 1 : 0) << "\n";
        }
    }
    write_manifest(out, "cost",
                   {{"d", d}, {"h", h}, {"L", L}, {"lookup_weight", lookup_weight},
                    {"methods", methods_csv}},
                   0, {out});
    return 0;
}

// ---- simulate ---------------------------------------------------------

struct SimulateArgs {
    std::string method = "oscar";
    int bits = 2;
    int64_t group = 32;
    int64_t residual = 128;
    int64_t seq = 256;
    int64_t decode_steps = 64;
    std::string scaling = "l2";
    uint64_t seed = default_seed();
    int64_t heads = 4;
    int64_t head_dim = 128;
    double query_gain = 0.12;
    double value_mix = 0.5;
    std::string input;       // optional KVT1 tensor; last decode_steps rows decode
    std::string preset = "pipeline-eval";
    std::string out = "simulate.csv";
    std::string dump_cache;
    bool as_json = false;
};

// Synthetic profile tuned for method comparisons: a few consistent-sign
// stripe channels, a block of variance-scaled channels, a small flat
// sink population.
TniSpec pipeline_eval_spec(int64_t tokens, int64_t heads, int64_t head_dim, uint64_t seed) {
    TniSpec spec;
    spec.tokens = tokens;
    spec.heads = heads;
    spec.head_dim = head_dim;
    spec.seed = seed;
    spec.offset_channels = {0, 1, 2, 3};
    spec.offset_factor = 18.0;
    spec.offset_width = 0.3;
    spec.scaled_channels = {4, 5, 6, 7, 8, 9, 10, 11};
    spec.scaled_factor = 8.0;
    spec.sink_factor = 0.01;
    SeededRng rng(seed ^ 0x5151515151515151ull);
    while (spec.sink_tokens.size() < 8) {
        const int64_t t = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(tokens)));
        bool dup = false;
        for (int64_t s : spec.sink_tokens) dup = dup || s == t;
        if (!dup) spec.sink_tokens.push_back(t);
    }
    return spec;
}

int cmd_simulate(const SimulateArgs &a) {
    PipelineConfig cfg;
    cfg.method = method_from_string(a.method);
    cfg.bits = a.bits;
    cfg.group_size = a.group;
    cfg.residual_len = a.residual;
    cfg.scaling = scaling_from_string(a.scaling);
    cfg.heads = a.heads;
    cfg.head_dim = a.head_dim;
    cfg.validate();

    Tensor3 tokens;
    if (!a.input.empty()) {
        tokens = read_file(a.input).tensor;
        if (tokens.tokens <= a.decode_steps) {
            throw std::invalid_argument("simulate: input file too short for decode steps");
        }
        if (tokens.heads != a.heads || tokens.channels != a.head_dim) {
            throw std::invalid_argument("simulate: input tensor shape does not match --heads/--head-dim");
        }
    } else {
        const TniSpec spec = pipeline_eval_spec(a.seq + a.decode_steps, a.heads, a.head_dim, a.seed);
        tokens = generate(spec).tensor;
    }
    const int64_t prefill_rows = tokens.tokens - a.decode_steps;
    const int64_t d_model = a.heads * a.head_dim;
    Matrix hidden_prefill(prefill_rows, d_model,
                          std::vector<double>(tokens.data.begin(),
                                              tokens.data.begin() + prefill_rows * d_model));
    Matrix hidden_decode(a.decode_steps, d_model,
                         std::vector<double>(tokens.data.begin() + prefill_rows * d_model,
                                             tokens.data.end()));

    SeededRng stub_rng(a.seed ^ 0x9e3779b97f4a7c15ull);
    const ModelStub model = make_sim_stub(a.heads, a.head_dim, a.query_gain, a.value_mix, stub_rng);
    const FidelityReport rep = simulate_fidelity(model, hidden_prefill, hidden_decode, cfg);

    char buf[512];
    std::snprintf(buf, sizeof(buf), "%s,%d,%s,%s,%s,%s,%s,%lld,%lld,%lld,%.6g",
                  a.method.c_str(), a.bits, fmt(rep.output_mse).c_str(),
                  fmt(rep.logit_mse).c_str(), fmt(rep.prefill_output_mse).c_str(),
                  std::to_string(rep.memory.total_bits()).c_str(),
                  std::to_string(rep.memory.packed_k_payload_bits).c_str(),
                  static_cast<long long>(rep.memory.packed_tokens),
                  static_cast<long long>(rep.memory.residual_tokens),
                  static_cast<long long>(rep.flushes),
                  rep.memory.effective_bits_per_value());
    json jrow = {{"method", a.method},
                 {"bits", a.bits},
                 {"output_mse", rep.output_mse},
                 {"logit_mse", rep.logit_mse},
                 {"prefill_output_mse", rep.prefill_output_mse},
                 {"total_bits", rep.memory.total_bits()},
                 {"packed_k_payload_bits", rep.memory.packed_k_payload_bits},
                 {"packed_tokens", rep.memory.packed_tokens},
                 {"residual_tokens", rep.memory.residual_tokens},
                 {"flushes", rep.flushes},
                 {"effective_bits_per_value", rep.memory.effective_bits_per_value()}};
    write_table(a.out, a.as_json,
                "method,bits,output_mse,logit_mse,prefill_output_mse,total_bits,"
                "packed_k_payload_bits,packed_tokens,residual_tokens,flushes,"
                "effective_bits_per_value",
                {buf}, json::array({jrow}));
    write_manifest(a.out, "simulate",
                   {{"method", a.method},
                    {"bits", a.bits},
                    {"group", a.group},
                    {"residual", a.residual},
                    {"seq", a.seq},
                    {"decode_steps", a.decode_steps},
                    {"scaling", a.scaling},
                    {"heads", a.heads},
                    {"head_dim", a.head_dim},
                    {"query_gain", a.query_gain},
                    {"value_mix", a.value_mix},
                    {"input", a.input}},
                   a.seed, {a.out});
    std::cout << "method=" << a.method << " bits=" << a.bits
              << " output_mse=" << fmt(rep.output_mse, 6)
              << " logit_mse=" << fmt(rep.logit_mse, 6) << " flushes=" << rep.flushes << "\n";

    if (!a.dump_cache.empty()) {
        // rebuild the method cache for the dump
        PrefillResult pre = [&] {
            if (cfg.method == Method::kOscar) {
                SeededRng r2(a.seed ^ 0x9e3779b97f4a7c15ull);
                const ModelStub m2 = make_sim_stub(a.heads, a.head_dim, a.query_gain, a.value_mix, r2);
                return prefill(preprocess(m2), hidden_prefill, cfg);
            }
            return prefill(model, hidden_prefill, cfg);
        }();
        pre.cache.dump(a.dump_cache);
        std::cout << "cache dump -> " << a.dump_cache << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"KV-cache quantization reference toolkit"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto *cg = app.add_subcommand("generate", "generate a synthetic TNI tensor (KVT1 file)");
    cg->add_option("--out", gen.out, "output .kvt path");
    cg->add_option("--dtype", gen.dtype, "f64 or f32")->check(CLI::IsMember({"f64", "f32"}));
    cg->add_option("--preset", gen.preset, "default (stripes+sinks) or none")
        ->check(CLI::IsMember({"default", "none"}));
    cg->add_option("--seed", gen.seed, "rng seed (default env OSCAR_SEED or 42)");
    cg->add_option("--tokens", gen.tokens, "token count S");
    cg->add_option("--heads", gen.heads, "head count H");
    cg->add_option("--head-dim", gen.head_dim, "channels per head d_h");
    cg->add_option("--offset-channels", gen.offset_channels,
                   "comma list of consistent-sign stripe channels");
    cg->add_option("--offset-factor", gen.offset_factor, "stripe magnitude (default 20)");
    cg->add_option("--offset-width", gen.offset_width, "in-stripe spread (default 1)");
    cg->add_option("--scaled-channels", gen.scaled_channels,
                   "comma list of variance-scaled channels");
    cg->add_option("--scaled-factor", gen.scaled_factor, "variance scale factor (default 8)");
    cg->add_option("--sink-tokens", gen.sink_tokens, "comma list of low-norm sink tokens");
    cg->add_option("--sink-factor", gen.sink_factor, "sink shrink factor (default 0.01)");
    cg->add_option("--heavy-tokens", gen.heavy_tokens, "comma list of large-norm tokens");
    cg->add_option("--heavy-factor", gen.heavy_factor, "heavy scale factor (default 20)");
    cg->add_option("--modality-blocks", gen.modality,
                   "start:end:scale comma list of modality ranges");

    std::string prof_in, prof_state = "k", prof_out = "profile.csv";
    bool prof_json = false;
    auto *cp = app.add_subcommand("profile",
                                  "per-token min/median/max/mean of head-wise l2 norms "
                                  "(CSV columns: token,min,median,max,mean)");
    cp->add_option("--input", prof_in, "KVT1 tensor file")->required();
    cp->add_option("--state", prof_state, "state tag q|k|v")
        ->check(CLI::IsMember({"q", "k", "v"}));
    cp->add_option("--out", prof_out, "output CSV path");
    cp->add_flag("--json", prof_json, "emit JSON instead of CSV");

    std::string es_in, es_bits = "2,3,4", es_out = "error_study.csv";
    bool es_synth = false, es_json = false;
    int64_t es_group = 32;
    uint64_t es_seed = default_seed();
    auto *ce = app.add_subcommand("error-study",
                                  "RTN quantization error cells (CSV columns: "
                                  "bits,condition,axis,mse_x100)");
    ce->add_option("--input", es_in, "KVT1 tensor file");
    ce->add_flag("--synthetic", es_synth, "use the default synthetic TNI spec");
    ce->add_option("--seed", es_seed, "seed for --synthetic");
    ce->add_option("--bits", es_bits, "comma list of bit widths");
    ce->add_option("--group", es_group, "quantization group size");
    ce->add_option("--out", es_out, "output CSV path");
    ce->add_flag("--json", es_json, "emit JSON instead of CSV");

    bool da_json = false;
    auto *cd = app.add_subcommand("demo-artifact",
                                  "print the worked scaling-artifact example");
    cd->add_flag("--json", da_json, "emit JSON");

    double c_d = 4096, c_h = 128, c_L = 10000, c_w = 5;
    std::string c_methods = "kivi,quarot,oscar,turboquant,turboquant+";
    std::string c_scores, c_out = "cost.csv";
    bool c_json = false;
    auto *cc = app.add_subcommand("cost",
                                  "analytic effective-cost model (CSV columns: "
                                  "method,prefill_m_units,decode_m_units)");
    cc->set_help_flag("--help", "print help");  // frees -h for the head dimension
    cc->add_option("--d", c_d, "hidden dimension");
    cc->add_option("--h", c_h, "head dimension (power of two)");
    cc->add_option("--L", c_L, "sequence length");
    cc->add_option("--lookup-weight", c_w, "effective units per table lookup");
    cc->add_option("--methods", c_methods, "comma list of methods");
    cc->add_option("--scores", c_scores,
                   "method=score list; adds a Pareto table over decode cost");
    cc->add_option("--out", c_out, "output CSV path");
    cc->add_flag("--json", c_json, "emit JSON instead of CSV");

    SimulateArgs sim;
    auto *cs = app.add_subcommand("simulate",
                                  "prefill+decode fidelity vs the fp oracle (CSV columns: "
                                  "method,bits,output_mse,logit_mse,prefill_output_mse,"
                                  "total_bits,packed_k_payload_bits,packed_tokens,"
                                  "residual_tokens,flushes,effective_bits_per_value)");
    cs->add_option("--method", sim.method, "fp|kivi|rotate-only|scale-only|oscar");
    cs->add_option("--bits", sim.bits, "0 (quantization off), 2, 3, 4, 8 or 16");
    cs->add_option("--group", sim.group, "group size G");
    cs->add_option("--residual", sim.residual, "residual window length R");
    cs->add_option("--seq", sim.seq, "prefill length");
    cs->add_option("--decode-steps", sim.decode_steps, "decode steps after prefill");
    cs->add_option("--scaling", sim.scaling, "l2|rsqrt|max|mean-abs");
    cs->add_option("--seed", sim.seed, "rng seed (default env OSCAR_SEED or 42)");
    cs->add_option("--heads", sim.heads, "head count");
    cs->add_option("--head-dim", sim.head_dim, "channels per head");
    cs->add_option("--query-gain", sim.query_gain, "simulation query projection gain");
    cs->add_option("--value-mix", sim.value_mix, "identity share of the value projection");
    cs->add_option("--input", sim.input,
                   "KVT1 tensor; last decode-steps rows drive decode, the rest prefill");
    cs->add_option("--out", sim.out, "output CSV path");
    cs->add_option("--dump-cache", sim.dump_cache, "write the method cache (debug format)");
    cs->add_flag("--json", sim.as_json, "emit JSON instead of CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cg->parsed()) return cmd_generate(gen);
        if (cp->parsed()) return cmd_profile(prof_in, prof_state, prof_out, prof_json);
        if (ce->parsed()) {
            if (!es_synth && es_in.empty()) {
                std::cerr << "error-study: need --input or --synthetic\n";
                return 2;
            }
            return cmd_error_study(es_in, es_synth, es_seed, es_bits, es_group, es_out, es_json);
        }
        if (cd->parsed()) return cmd_demo_artifact(da_json);
        if (cc->parsed()) return cmd_cost(c_d, c_h, c_L, c_w, c_methods, c_scores, c_out, c_json);
        if (cs->parsed()) return cmd_simulate(sim);
    } catch (const std::invalid_argument &e) {
        std::cerr << "invalid arguments: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
