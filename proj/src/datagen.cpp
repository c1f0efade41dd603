#include "oscar/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace oscar {

using nlohmann::json;

TniSpec TniSpec::default_spec() {
    TniSpec s;
    s.tokens = 256;
    s.heads = 4;
    s.head_dim = 64;
    s.offset_channels = {0, 1, 2, 3, 4, 5, 6, 7};
    s.offset_factor = 20.0;
    s.offset_width = 1.0;
    // 32 sinks of 256 keep both the full and the sink-free token counts
    // divisible by the study's group size of 32
    for (int64_t t = 0; t < 256; t += 8) s.sink_tokens.push_back(t);
    s.sink_factor = 0.01;
    return s;
}

void TniSpec::validate() const {
    if (tokens <= 0 || heads <= 0 || head_dim <= 0) {
        throw std::invalid_argument("TniSpec: bad shape");
    }
    auto check_idx = [&](const std::vector<int64_t> &v, int64_t limit, const char *what) {
        for (int64_t i : v) {
            if (i < 0 || i >= limit) {
                throw std::invalid_argument(std::string("TniSpec: ") + what + " index out of range");
            }
        }
    };
    check_idx(offset_channels, head_dim, "offset channel");
    check_idx(scaled_channels, head_dim, "scaled channel");
    check_idx(sink_tokens, tokens, "sink token");
    check_idx(heavy_tokens, tokens, "heavy token");
    if (offset_factor <= 0 || offset_width < 0 || scaled_factor <= 0 || sink_factor <= 0 ||
        heavy_factor <= 0) {
        throw std::invalid_argument("TniSpec: factors must be positive");
    }
    std::set<int64_t> sinks(sink_tokens.begin(), sink_tokens.end());
    for (int64_t t : heavy_tokens) {
        if (sinks.count(t) != 0) {
            throw std::invalid_argument("TniSpec: sink and heavy token sets overlap");
        }
    }
    std::set<int64_t> off(offset_channels.begin(), offset_channels.end());
    for (int64_t c : scaled_channels) {
        if (off.count(c) != 0) {
            throw std::invalid_argument("TniSpec: offset and scaled channel sets overlap");
        }
    }
    for (const ModalityBlock &b : modality_blocks) {
        if (b.start < 0 || b.end > tokens || b.start >= b.end || b.scale <= 0) {
            throw std::invalid_argument("TniSpec: bad modality block");
        }
    }
}

GeneratedData generate(const TniSpec &spec) {
    spec.validate();
    SeededRng rng(spec.seed);
    Tensor3 x(spec.tokens, spec.heads, spec.head_dim);
    for (double &v : x.data) v = rng.next_normal();

    // per-(head, channel) stripe signs
    std::vector<double> signs(static_cast<size_t>(spec.heads * spec.offset_channels.size()));
    for (double &s : signs) s = rng.next_uniform() < 0.5 ? -1.0 : 1.0;

    for (int64_t h = 0; h < spec.heads; ++h) {
        for (size_t ci = 0; ci < spec.offset_channels.size(); ++ci) {
            const int64_t c = spec.offset_channels[ci];
            const double mu =
                signs[static_cast<size_t>(h) * spec.offset_channels.size() + ci] *
                spec.offset_factor;
            for (int64_t t = 0; t < spec.tokens; ++t) {
                x.at(t, h, c) = mu + spec.offset_width * x.at(t, h, c);
            }
        }
        for (int64_t c : spec.scaled_channels) {
            for (int64_t t = 0; t < spec.tokens; ++t) {
                x.at(t, h, c) *= spec.scaled_factor;
            }
        }
    }

    for (const ModalityBlock &b : spec.modality_blocks) {
        for (int64_t t = b.start; t < b.end; ++t) {
            double *row = x.row(t, 0);
            for (int64_t i = 0; i < spec.heads * spec.head_dim; ++i) row[i] *= b.scale;
        }
    }

    for (int64_t t : spec.heavy_tokens) {
        double *row = x.row(t, 0);
        for (int64_t i = 0; i < spec.heads * spec.head_dim; ++i) row[i] *= spec.heavy_factor;
    }

    // typical per-head token norm of the structured base, used to size
    // the flat sink rows
    double tn2 = 0.0;
    tn2 += static_cast<double>(spec.head_dim - static_cast<int64_t>(spec.offset_channels.size()) -
                               static_cast<int64_t>(spec.scaled_channels.size()));
    tn2 += static_cast<double>(spec.offset_channels.size()) *
           (spec.offset_factor * spec.offset_factor + spec.offset_width * spec.offset_width);
    tn2 += static_cast<double>(spec.scaled_channels.size()) * spec.scaled_factor * spec.scaled_factor;
    const double sink_scale = spec.sink_factor * std::sqrt(tn2 / static_cast<double>(spec.head_dim));
    for (int64_t t : spec.sink_tokens) {
        for (int64_t h = 0; h < spec.heads; ++h) {
            double *row = x.row(t, h);
            for (int64_t c = 0; c < spec.head_dim; ++c) row[c] = sink_scale * rng.next_normal();
        }
    }

    GeneratedData out;
    out.tensor = std::move(x);
    out.annotations.sink_tokens = spec.sink_tokens;
    out.annotations.heavy_tokens = spec.heavy_tokens;
    out.annotations.offset_channels = spec.offset_channels;
    out.annotations.scaled_channels = spec.scaled_channels;
    out.annotations.modality_blocks = spec.modality_blocks;
    std::sort(out.annotations.sink_tokens.begin(), out.annotations.sink_tokens.end());
    std::sort(out.annotations.heavy_tokens.begin(), out.annotations.heavy_tokens.end());
    return out;
}

namespace {

json annotations_to_json(const DataAnnotations &a) {
    json jb = json::array();
    for (const ModalityBlock &b : a.modality_blocks) {
        jb.push_back({b.start, b.end, b.scale});
    }
    return json{{"outlier_tokens", a.sink_tokens},
                {"heavy_tokens", a.heavy_tokens},
                {"offset_channels", a.offset_channels},
                {"scaled_channels", a.scaled_channels},
                {"modality_blocks", jb}};
}

DataAnnotations annotations_from_json(const json &j) {
    DataAnnotations a;
    if (j.contains("outlier_tokens")) a.sink_tokens = j["outlier_tokens"].get<std::vector<int64_t>>();
    if (j.contains("heavy_tokens")) a.heavy_tokens = j["heavy_tokens"].get<std::vector<int64_t>>();
    if (j.contains("offset_channels")) {
        a.offset_channels = j["offset_channels"].get<std::vector<int64_t>>();
    }
    if (j.contains("scaled_channels")) {
        a.scaled_channels = j["scaled_channels"].get<std::vector<int64_t>>();
    }
    if (j.contains("modality_blocks")) {
        for (const auto &b : j["modality_blocks"]) {
            a.modality_blocks.push_back({b[0].get<int64_t>(), b[1].get<int64_t>(), b[2].get<double>()});
        }
    }
    return a;
}

}  // namespace

void write_file(const std::string &path, const Tensor3 &tensor,
                const DataAnnotations &annotations, const std::string &dtype) {
    if (dtype != "f32" && dtype != "f64") {
        throw std::invalid_argument("write_file: dtype must be f32 or f64");
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_file: cannot open " + path);
    json header = annotations_to_json(annotations);
    header["shape"] = {tensor.tokens, tensor.heads, tensor.channels};
    header["dtype"] = dtype;
    header["layout"] = "row-major-channel-fastest";
    f << "KVT1" << header.dump() << "\n";
    if (dtype == "f64") {
        f.write(reinterpret_cast<const char *>(tensor.data.data()),
                static_cast<std::streamsize>(tensor.data.size() * 8));
    } else {
        std::vector<float> body(tensor.data.size());
        for (size_t i = 0; i < body.size(); ++i) body[i] = static_cast<float>(tensor.data[i]);
        f.write(reinterpret_cast<const char *>(body.data()),
                static_cast<std::streamsize>(body.size() * 4));
    }
}

GeneratedData read_file(const std::string &path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_file: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "KVT1", 4) != 0) {
        throw std::runtime_error("read_file: bad magic, expected KVT1 at byte 0");
    }
    std::string line;
    std::getline(f, line);
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception &e) {
        throw std::runtime_error(std::string("read_file: bad header: ") + e.what());
    }
    const auto shape = header.at("shape").get<std::vector<int64_t>>();
    if (shape.size() != 3) throw std::runtime_error("read_file: shape must have 3 entries");
    const std::string dtype = header.at("dtype").get<std::string>();
    const std::string layout = header.value("layout", "row-major-channel-fastest");
    if (layout != "row-major-channel-fastest") {
        throw std::runtime_error("read_file: unsupported layout " + layout);
    }
    const int64_t count = shape[0] * shape[1] * shape[2];
    const int64_t header_bytes = static_cast<int64_t>(4 + line.size() + 1);
    std::vector<double> data(static_cast<size_t>(count));
    if (dtype == "f64") {
        f.read(reinterpret_cast<char *>(data.data()), count * 8);
    } else if (dtype == "f32") {
        std::vector<float> body(static_cast<size_t>(count));
        f.read(reinterpret_cast<char *>(body.data()), count * 4);
        for (size_t i = 0; i < body.size(); ++i) data[i] = static_cast<double>(body[i]);
    } else {
        throw std::runtime_error("read_file: unsupported dtype " + dtype);
    }
    if (!f) {
        const int64_t got = static_cast<int64_t>(f.gcount());
        const int64_t want = count * (dtype == "f64" ? 8 : 4);
        throw std::runtime_error("read_file: truncated body at byte " +
                                 std::to_string(header_bytes + got) + ", expected " +
                                 std::to_string(want) + " body bytes, got " +
                                 std::to_string(got));
    }
    GeneratedData out;
    out.tensor = Tensor3(shape[0], shape[1], shape[2], std::move(data));
    out.annotations = annotations_from_json(header);
    return out;
}

}  // namespace oscar
