#include "oscar/kv_cache.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace oscar {

using nlohmann::json;

Method method_from_string(const std::string &s) {
    if (s == "fp") return Method::kFp;
    if (s == "kivi") return Method::kKivi;
    if (s == "rotate-only") return Method::kRotateOnly;
    if (s == "scale-only") return Method::kScaleOnly;
    if (s == "oscar") return Method::kOscar;
    throw std::invalid_argument("unknown method: " + s);
}

std::string method_to_string(Method m) {
    switch (m) {
        case Method::kFp: return "fp";
        case Method::kKivi: return "kivi";
        case Method::kRotateOnly: return "rotate-only";
        case Method::kScaleOnly: return "scale-only";
        case Method::kOscar: return "oscar";
    }
    return "?";
}

Scaling scaling_from_string(const std::string &s) {
    if (s == "l2") return Scaling::kL2;
    if (s == "rsqrt") return Scaling::kRsqrt;
    if (s == "max") return Scaling::kMax;
    if (s == "mean-abs") return Scaling::kMeanAbs;
    throw std::invalid_argument("unknown scaling strategy: " + s);
}

std::string scaling_to_string(Scaling s) {
    switch (s) {
        case Scaling::kL2: return "l2";
        case Scaling::kRsqrt: return "rsqrt";
        case Scaling::kMax: return "max";
        case Scaling::kMeanAbs: return "mean-abs";
    }
    return "?";
}

void PipelineConfig::validate() const {
    if (heads <= 0 || head_dim <= 0) {
        throw std::invalid_argument("config: heads and head_dim must be positive");
    }
    if (bits != 0 && bits != 2 && bits != 3 && bits != 4 && bits != 8 && bits != 16) {
        throw std::invalid_argument("config: bits must be one of 0,2,3,4,8,16");
    }
    if (residual_len <= 0 || group_size <= 0 || residual_len % group_size != 0) {
        throw std::invalid_argument("config: residual_len must be a positive multiple of group_size");
    }
    if (quantizes() && head_dim % group_size != 0) {
        throw std::invalid_argument("config: head_dim must be divisible by group_size for the value path");
    }
    if (rotates() && (head_dim & (head_dim - 1)) != 0) {
        throw std::invalid_argument("config: head_dim must be a power of two when rotating");
    }
}

int64_t MemoryReport::total_bits() const {
    return packed_k_payload_bits + packed_v_payload_bits + residual_k_payload_bits +
           residual_v_payload_bits + k_norm_bits + param_bits;
}

double MemoryReport::effective_bits_per_value() const {
    const int64_t values = 2 * (packed_tokens + residual_tokens);
    if (values == 0) return 0.0;
    return static_cast<double>(total_bits()) / static_cast<double>(values);
}

KvCache::KvCache(const PipelineConfig &cfg) : config_(cfg) {
    config_.validate();
    k_blocks_.resize(static_cast<size_t>(cfg.heads));
    v_blocks_.resize(static_cast<size_t>(cfg.heads));
    k_norms_grouped_.resize(static_cast<size_t>(cfg.heads));
}

namespace {

// Extracts one head of a token range as a [count x d_h] matrix.
Matrix head_slice(const Tensor3 &x, int64_t head, int64_t begin, int64_t count) {
    Matrix m(count, x.channels);
    for (int64_t t = 0; t < count; ++t) {
        std::memcpy(m.data.data() + t * x.channels, x.row(begin + t, head),
                    sizeof(double) * static_cast<size_t>(x.channels));
    }
    return m;
}

}  // namespace

void KvCache::flush_k_block(int64_t head, const double *rows, const double *norms) {
    const int64_t R = config_.residual_len;
    const int64_t d = config_.head_dim;
    PackedBlock blk;
    if (!config_.quantizes()) {
        blk.raw.assign(rows, rows + R * d);
    } else {
        Matrix m(R, d, std::vector<double>(rows, rows + R * d));
        auto qblocks = group_quant_per_channel(m, config_.group_size, config_.bits);
        const int64_t groups = R / config_.group_size;
        blk.params.resize(static_cast<size_t>(d * groups));
        std::vector<uint16_t> codes(static_cast<size_t>(d * R));
        for (const QuantBlock &qb : qblocks) {
            blk.params[static_cast<size_t>(qb.lane * groups + qb.group)] = qb.params;
            for (int64_t i = 0; i < config_.group_size; ++i) {
                codes[static_cast<size_t>(qb.lane * R + qb.group * config_.group_size + i)] =
                    qb.codes[static_cast<size_t>(i)];
            }
        }
        if (config_.bits == 2) {
            blk.packed = pack_2bit(codes);
        } else {
            blk.codes = std::move(codes);
        }
    }
    k_blocks_[static_cast<size_t>(head)].push_back(std::move(blk));
    auto &ng = k_norms_grouped_[static_cast<size_t>(head)];
    for (int64_t t = 0; t < R; ++t) ng.push_back(norms[t]);
}

void KvCache::flush_v_block(int64_t head, const double *rows) {
    const int64_t R = config_.residual_len;
    const int64_t d = config_.head_dim;
    PackedBlock blk;
    if (!config_.quantizes()) {
        blk.raw.assign(rows, rows + R * d);
    } else {
        Matrix m(R, d, std::vector<double>(rows, rows + R * d));
        auto qblocks = group_quant_per_token(m, config_.group_size, config_.bits);
        const int64_t groups = d / config_.group_size;
        blk.params.resize(static_cast<size_t>(R * groups));
        std::vector<uint16_t> codes(static_cast<size_t>(R * d));
        for (const QuantBlock &qb : qblocks) {
            blk.params[static_cast<size_t>(qb.lane * groups + qb.group)] = qb.params;
            for (int64_t i = 0; i < config_.group_size; ++i) {
                codes[static_cast<size_t>(qb.lane * d + qb.group * config_.group_size + i)] =
                    qb.codes[static_cast<size_t>(i)];
            }
        }
        if (config_.bits == 2) {
            blk.packed = pack_2bit(codes);
        } else {
            blk.codes = std::move(codes);
        }
    }
    v_blocks_[static_cast<size_t>(head)].push_back(std::move(blk));
}

void KvCache::pack_k_tokens(const Tensor3 &k, const std::vector<double> &norms,
                            int64_t begin, int64_t count) {
    const int64_t R = config_.residual_len;
    const int64_t d = config_.head_dim;
    std::vector<double> rows(static_cast<size_t>(R * d));
    std::vector<double> blk_norms(static_cast<size_t>(R));
    for (int64_t b = 0; b < count / R; ++b) {
        for (int64_t h = 0; h < config_.heads; ++h) {
            for (int64_t t = 0; t < R; ++t) {
                const int64_t tok = begin + b * R + t;
                std::memcpy(rows.data() + t * d, k.row(tok, h),
                            sizeof(double) * static_cast<size_t>(d));
                blk_norms[static_cast<size_t>(t)] =
                    norms[static_cast<size_t>(tok * config_.heads + h)];
            }
            flush_k_block(h, rows.data(), blk_norms.data());
        }
    }
}

void KvCache::pack_v_tokens(const Tensor3 &v, int64_t begin, int64_t count) {
    const int64_t R = config_.residual_len;
    const int64_t d = config_.head_dim;
    std::vector<double> rows(static_cast<size_t>(R * d));
    for (int64_t b = 0; b < count / R; ++b) {
        for (int64_t h = 0; h < config_.heads; ++h) {
            for (int64_t t = 0; t < R; ++t) {
                std::memcpy(rows.data() + t * d, v.row(begin + b * R + t, h),
                            sizeof(double) * static_cast<size_t>(d));
            }
            flush_v_block(h, rows.data());
        }
    }
}

void KvCache::buffer_quant_k(const Tensor3 &new_k, const std::vector<double> &norms) {
    const int64_t R = config_.residual_len;
    const int64_t d = config_.head_dim;
    const int64_t H = config_.heads;
    if (new_k.tokens > 0 && (new_k.heads != H || new_k.channels != d)) {
        throw std::invalid_argument("buffer_quant_k: tensor shape does not match config");
    }
    if (static_cast<int64_t>(norms.size()) != new_k.tokens * H) {
        throw std::invalid_argument("buffer_quant_k: one norm per (token, head) required");
    }
    if (!k_prefilled_) {
        k_prefilled_ = true;
        const int64_t S = new_k.tokens;
        const int64_t r = R > 0 ? S % R : 0;
        pack_k_tokens(new_k, norms, 0, S - r);
        packed_tokens_ += S - r;
        for (int64_t t = S - r; t < S; ++t) {
            k_residual_.insert(k_residual_.end(), new_k.row(t, 0), new_k.row(t, 0) + H * d);
            for (int64_t h = 0; h < H; ++h) {
                k_norms_residual_.push_back(norms[static_cast<size_t>(t * H + h)]);
            }
            ++k_residual_rows_;
        }
        return;
    }
    for (int64_t t = 0; t < new_k.tokens; ++t) {
        k_residual_.insert(k_residual_.end(), new_k.row(t, 0), new_k.row(t, 0) + H * d);
        for (int64_t h = 0; h < H; ++h) {
            k_norms_residual_.push_back(norms[static_cast<size_t>(t * H + h)]);
        }
        ++k_residual_rows_;
        if (k_residual_rows_ > R) {
            throw std::logic_error("buffer_quant_k: residual window overflow");
        }
        if (k_residual_rows_ == R) {
            // residual rows are already transformed; flushing only
            // quantizes and packs
            std::vector<double> rows(static_cast<size_t>(R * d));
            std::vector<double> blk_norms(static_cast<size_t>(R));
            for (int64_t h = 0; h < H; ++h) {
                for (int64_t i = 0; i < R; ++i) {
                    std::memcpy(rows.data() + i * d,
                                k_residual_.data() + (i * H + h) * d,
                                sizeof(double) * static_cast<size_t>(d));
                    blk_norms[static_cast<size_t>(i)] =
                        k_norms_residual_[static_cast<size_t>(i * H + h)];
                }
                flush_k_block(h, rows.data(), blk_norms.data());
            }
            packed_tokens_ += R;
            ++flush_count_;
            k_residual_.clear();
            k_norms_residual_.clear();
            k_residual_rows_ = 0;
        }
    }
}

void KvCache::buffer_quant_v(const Tensor3 &new_v) {
    const int64_t R = config_.residual_len;
    const int64_t d = config_.head_dim;
    const int64_t H = config_.heads;
    if (new_v.tokens > 0 && (new_v.heads != H || new_v.channels != d)) {
        throw std::invalid_argument("buffer_quant_v: tensor shape does not match config");
    }
    if (!v_prefilled_) {
        v_prefilled_ = true;
        const int64_t S = new_v.tokens;
        const int64_t r = R > 0 ? S % R : 0;
        pack_v_tokens(new_v, 0, S - r);
        v_packed_tokens_ += S - r;
        for (int64_t t = S - r; t < S; ++t) {
            v_residual_.insert(v_residual_.end(), new_v.row(t, 0), new_v.row(t, 0) + H * d);
            ++v_residual_rows_;
        }
        return;
    }
    for (int64_t t = 0; t < new_v.tokens; ++t) {
        v_residual_.insert(v_residual_.end(), new_v.row(t, 0), new_v.row(t, 0) + H * d);
        ++v_residual_rows_;
        if (v_residual_rows_ > R) {
            throw std::logic_error("buffer_quant_v: residual window overflow");
        }
        if (v_residual_rows_ == R) {
            std::vector<double> rows(static_cast<size_t>(R * d));
            for (int64_t h = 0; h < H; ++h) {
                for (int64_t i = 0; i < R; ++i) {
                    std::memcpy(rows.data() + i * d,
                                v_residual_.data() + (i * H + h) * d,
                                sizeof(double) * static_cast<size_t>(d));
                }
                flush_v_block(h, rows.data());
            }
            v_packed_tokens_ += R;
            v_residual_.clear();
            v_residual_rows_ = 0;
        }
    }
}

namespace {

// Reconstructs one packed block into [R x d_h] rows.
Matrix unpack_block(const PackedBlock &blk, bool channel_grouped, int64_t R, int64_t d,
                    int64_t G, int bits) {
    if (!blk.raw.empty()) {
        return Matrix(R, d, blk.raw);
    }
    std::vector<uint16_t> codes =
        bits == 2 ? unpack_2bit(blk.packed) : blk.codes;
    Matrix out(R, d);
    if (channel_grouped) {
        const int64_t groups = R / G;
        for (int64_t j = 0; j < d; ++j) {
            for (int64_t t = 0; t < R; ++t) {
                const QuantParams &p = blk.params[static_cast<size_t>(j * groups + t / G)];
                out.at(t, j) = dequantize_one(codes[static_cast<size_t>(j * R + t)], p);
            }
        }
    } else {
        const int64_t groups = d / G;
        for (int64_t t = 0; t < R; ++t) {
            for (int64_t j = 0; j < d; ++j) {
                const QuantParams &p = blk.params[static_cast<size_t>(t * groups + j / G)];
                out.at(t, j) = dequantize_one(codes[static_cast<size_t>(t * d + j)], p);
            }
        }
    }
    return out;
}

}  // namespace

Tensor3 KvCache::materialize_k() const {
    const int64_t R = config_.residual_len;
    const int64_t d = config_.head_dim;
    const int64_t H = config_.heads;
    const int64_t total = packed_tokens_ + k_residual_rows_;
    Tensor3 out(total, H, d);
    for (int64_t h = 0; h < H; ++h) {
        const auto &blocks = k_blocks_[static_cast<size_t>(h)];
        const auto &norms = k_norms_grouped_[static_cast<size_t>(h)];
        for (size_t b = 0; b < blocks.size(); ++b) {
            Matrix rows = unpack_block(blocks[b], true, R, d, config_.group_size, config_.bits);
            for (int64_t t = 0; t < R; ++t) {
                const int64_t tok = static_cast<int64_t>(b) * R + t;
                const double s = norms[static_cast<size_t>(tok)];
                double *dst = out.row(tok, h);
                for (int64_t c = 0; c < d; ++c) dst[c] = rows.at(t, c) * s;
            }
        }
    }
    for (int64_t t = 0; t < k_residual_rows_; ++t) {
        for (int64_t h = 0; h < H; ++h) {
            const double s = k_norms_residual_[static_cast<size_t>(t * H + h)];
            const double *src = k_residual_.data() + (t * H + h) * d;
            double *dst = out.row(packed_tokens_ + t, h);
            for (int64_t c = 0; c < d; ++c) dst[c] = src[c] * s;
        }
    }
    return out;
}

Tensor3 KvCache::materialize_v() const {
    const int64_t R = config_.residual_len;
    const int64_t d = config_.head_dim;
    const int64_t H = config_.heads;
    const int64_t total = v_packed_tokens_ + v_residual_rows_;
    Tensor3 out(total, H, d);
    for (int64_t h = 0; h < H; ++h) {
        const auto &blocks = v_blocks_[static_cast<size_t>(h)];
        for (size_t b = 0; b < blocks.size(); ++b) {
            Matrix rows = unpack_block(blocks[b], false, R, d, config_.group_size, config_.bits);
            for (int64_t t = 0; t < R; ++t) {
                std::memcpy(out.row(static_cast<int64_t>(b) * R + t, h),
                            rows.data.data() + t * d, sizeof(double) * static_cast<size_t>(d));
            }
        }
    }
    for (int64_t t = 0; t < v_residual_rows_; ++t) {
        for (int64_t h = 0; h < H; ++h) {
            std::memcpy(out.row(v_packed_tokens_ + t, h),
                        v_residual_.data() + (t * H + h) * d,
                        sizeof(double) * static_cast<size_t>(d));
        }
    }
    return out;
}

MemoryReport KvCache::memory_report() const {
    MemoryReport r;
    const int64_t d = config_.head_dim;
    const int64_t H = config_.heads;
    const int64_t G = config_.group_size;
    const int payload_bits = config_.quantizes() ? config_.bits : 64;
    r.packed_tokens = packed_tokens_;
    r.residual_tokens = k_residual_rows_;
    r.packed_k_payload_bits = packed_tokens_ * H * d * payload_bits;
    r.packed_v_payload_bits = v_packed_tokens_ * H * d * payload_bits;
    r.residual_k_payload_bits = k_residual_rows_ * H * d * 64;
    r.residual_v_payload_bits = v_residual_rows_ * H * d * 64;
    r.k_norm_bits = (packed_tokens_ + k_residual_rows_) * H * 64;
    if (config_.quantizes()) {
        const int64_t k_groups = packed_tokens_ / G * d * H;
        const int64_t v_groups = v_packed_tokens_ * (d / G) * H;
        r.param_bits = (k_groups + v_groups) * 2 * 64;  // delta + zero point
    }
    return r;
}

namespace {

template <typename T>
void write_raw(std::ofstream &f, const std::vector<T> &v) {
    f.write(reinterpret_cast<const char *>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
std::vector<T> read_raw(std::ifstream &f, size_t count) {
    std::vector<T> v(count);
    f.read(reinterpret_cast<char *>(v.data()),
           static_cast<std::streamsize>(count * sizeof(T)));
    if (!f) throw std::runtime_error("cache load: truncated section");
    return v;
}

json params_to_json_sizes(const std::vector<PackedBlock> &blocks) {
    json arr = json::array();
    for (const auto &b : blocks) {
        arr.push_back({{"params", b.params.size()},
                       {"words", b.packed.words.size()},
                       {"packed_count", b.packed.count},
                       {"codes", b.codes.size()},
                       {"raw", b.raw.size()}});
    }
    return arr;
}

void write_blocks(std::ofstream &f, const std::vector<PackedBlock> &blocks) {
    for (const auto &b : blocks) {
        for (const auto &p : b.params) {
            f.write(reinterpret_cast<const char *>(&p.delta), 8);
            f.write(reinterpret_cast<const char *>(&p.zero_point), 8);
            f.write(reinterpret_cast<const char *>(&p.constant), 8);
        }
        write_raw(f, b.packed.words);
        write_raw(f, b.codes);
        write_raw(f, b.raw);
    }
}

std::vector<PackedBlock> read_blocks(std::ifstream &f, const json &sizes, int bits) {
    std::vector<PackedBlock> blocks;
    for (const auto &s : sizes) {
        PackedBlock b;
        b.params.resize(s["params"].get<size_t>());
        for (auto &p : b.params) {
            f.read(reinterpret_cast<char *>(&p.delta), 8);
            f.read(reinterpret_cast<char *>(&p.zero_point), 8);
            f.read(reinterpret_cast<char *>(&p.constant), 8);
            p.bits = bits;
        }
        b.packed.words = read_raw<uint16_t>(f, s["words"].get<size_t>());
        b.packed.count = s["packed_count"].get<int64_t>();
        b.codes = read_raw<uint16_t>(f, s["codes"].get<size_t>());
        b.raw = read_raw<double>(f, s["raw"].get<size_t>());
        if (!f) throw std::runtime_error("cache load: truncated block");
        blocks.push_back(std::move(b));
    }
    return blocks;
}

}  // namespace

void KvCache::dump(const std::string &path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cache dump: cannot open " + path);
    json manifest = {
        {"magic", "KVC1"},
        {"S_packed", packed_tokens_},
        {"S_packed_v", v_packed_tokens_},
        {"R", config_.residual_len},
        {"G", config_.group_size},
        {"b", config_.bits},
        {"H", config_.heads},
        {"d_h", config_.head_dim},
        {"method", method_to_string(config_.method)},
        {"scaling", scaling_to_string(config_.scaling)},
        {"residual_tokens", k_residual_rows_},
        {"v_residual_tokens", v_residual_rows_},
        {"flush_count", flush_count_},
        {"k_prefilled", k_prefilled_},
        {"v_prefilled", v_prefilled_},
    };
    json ksizes = json::array(), vsizes = json::array();
    for (int64_t h = 0; h < config_.heads; ++h) {
        ksizes.push_back(params_to_json_sizes(k_blocks_[static_cast<size_t>(h)]));
        vsizes.push_back(params_to_json_sizes(v_blocks_[static_cast<size_t>(h)]));
    }
    manifest["k_blocks"] = ksizes;
    manifest["v_blocks"] = vsizes;
    f << manifest.dump() << "\n";
    for (int64_t h = 0; h < config_.heads; ++h) {
        write_blocks(f, k_blocks_[static_cast<size_t>(h)]);
        write_raw(f, k_norms_grouped_[static_cast<size_t>(h)]);
    }
    write_raw(f, k_residual_);
    write_raw(f, k_norms_residual_);
    for (int64_t h = 0; h < config_.heads; ++h) {
        write_blocks(f, v_blocks_[static_cast<size_t>(h)]);
    }
    write_raw(f, v_residual_);
}

KvCache KvCache::load(const std::string &path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cache load: cannot open " + path);
    std::string line;
    std::getline(f, line);
    json manifest = json::parse(line);
    if (manifest.value("magic", "") != "KVC1") {
        throw std::runtime_error("cache load: bad magic");
    }
    PipelineConfig cfg;
    cfg.residual_len = manifest["R"].get<int64_t>();
    cfg.group_size = manifest["G"].get<int64_t>();
    cfg.bits = manifest["b"].get<int>();
    cfg.heads = manifest["H"].get<int64_t>();
    cfg.head_dim = manifest["d_h"].get<int64_t>();
    cfg.method = method_from_string(manifest["method"].get<std::string>());
    cfg.scaling = scaling_from_string(manifest["scaling"].get<std::string>());
    KvCache cache(cfg);
    cache.packed_tokens_ = manifest["S_packed"].get<int64_t>();
    cache.v_packed_tokens_ = manifest["S_packed_v"].get<int64_t>();
    cache.k_residual_rows_ = manifest["residual_tokens"].get<int64_t>();
    cache.v_residual_rows_ = manifest["v_residual_tokens"].get<int64_t>();
    cache.flush_count_ = manifest["flush_count"].get<int64_t>();
    cache.k_prefilled_ = manifest["k_prefilled"].get<bool>();
    cache.v_prefilled_ = manifest["v_prefilled"].get<bool>();
    const int64_t H = cfg.heads, d = cfg.head_dim;
    for (int64_t h = 0; h < H; ++h) {
        cache.k_blocks_[static_cast<size_t>(h)] =
            read_blocks(f, manifest["k_blocks"][static_cast<size_t>(h)], cfg.bits);
        cache.k_norms_grouped_[static_cast<size_t>(h)] =
            read_raw<double>(f, static_cast<size_t>(cache.packed_tokens_));
    }
    cache.k_residual_ = read_raw<double>(f, static_cast<size_t>(cache.k_residual_rows_ * H * d));
    cache.k_norms_residual_ = read_raw<double>(f, static_cast<size_t>(cache.k_residual_rows_ * H));
    for (int64_t h = 0; h < H; ++h) {
        cache.v_blocks_[static_cast<size_t>(h)] =
            read_blocks(f, manifest["v_blocks"][static_cast<size_t>(h)], cfg.bits);
    }
    cache.v_residual_ = read_raw<double>(f, static_cast<size_t>(cache.v_residual_rows_ * H * d));
    return cache;
}

}  // namespace oscar
