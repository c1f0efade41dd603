#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "oscar/analysis.hpp"
#include "oscar/datagen.hpp"

using namespace oscar;

TEST_CASE("plain gaussian spec keeps token norms concentrated") {
    TniSpec spec;
    spec.tokens = 256;
    spec.heads = 1;
    spec.head_dim = 128;
    spec.seed = 5;
    const GeneratedData data = generate(spec);
    const TniProfile p = tni_profile(data.tensor, "k");
    double lo = 1e300, hi = 0.0;
    for (const auto &r : p.rows) {
        lo = std::min(lo, r.min);
        hi = std::max(hi, r.max);
    }
    CHECK(hi / lo < 3.0);
}

TEST_CASE("sink rows land at the requested fraction of the typical norm") {
    TniSpec spec = TniSpec::default_spec();
    spec.seed = 6;
    const GeneratedData data = generate(spec);
    std::vector<double> normal_norms;
    for (int64_t t = 0; t < spec.tokens; ++t) {
        bool is_sink = false;
        for (int64_t s : spec.sink_tokens) is_sink = is_sink || s == t;
        if (!is_sink) normal_norms.push_back(token_l2_norm(data.tensor, t, 0));
    }
    std::sort(normal_norms.begin(), normal_norms.end());
    const double typical = normal_norms[normal_norms.size() / 2];
    for (int64_t s : spec.sink_tokens) {
        const double ratio = token_l2_norm(data.tensor, s, 0) / typical;
        CHECK(ratio > 0.005);
        CHECK(ratio < 0.02);
    }
}

TEST_CASE("generation is bit-deterministic in the seed") {
    TniSpec spec = TniSpec::default_spec();
    spec.seed = 99;
    const GeneratedData a = generate(spec);
    const GeneratedData b = generate(spec);
    REQUIRE(a.tensor.data.size() == b.tensor.data.size());
    for (size_t i = 0; i < a.tensor.data.size(); ++i) {
        CHECK(a.tensor.data[i] == b.tensor.data[i]);
    }
}

TEST_CASE("heavy tokens scale whole rows") {
    TniSpec spec;
    spec.tokens = 32;
    spec.heads = 1;
    spec.head_dim = 16;
    spec.seed = 12;
    TniSpec with = spec;
    with.heavy_tokens = {5};
    with.heavy_factor = 10.0;
    const GeneratedData base = generate(spec);
    const GeneratedData heavy = generate(with);
    for (int64_t c = 0; c < 16; ++c) {
        CHECK(heavy.tensor.at(5, 0, c) == doctest::Approx(10.0 * base.tensor.at(5, 0, c)));
    }
}

TEST_CASE("overlapping sink and heavy sets are rejected") {
    TniSpec spec;
    spec.sink_tokens = {3};
    spec.heavy_tokens = {3};
    CHECK_THROWS_AS(generate(spec), std::invalid_argument);
}

TEST_CASE("sink tokens are detected as the bottom-k norms across seeds") {
    int hits = 0;
    const int seeds = 20;
    for (int seed = 1; seed <= seeds; ++seed) {
        TniSpec spec = TniSpec::default_spec();
        spec.seed = static_cast<uint64_t>(seed);
        const GeneratedData data = generate(spec);
        const TniProfile p = tni_profile(data.tensor, "k");
        std::vector<std::pair<double, int64_t>> by_norm;
        for (int64_t t = 0; t < spec.tokens; ++t) {
            by_norm.push_back({p.rows[static_cast<size_t>(t)].mean, t});
        }
        std::sort(by_norm.begin(), by_norm.end());
        std::set<int64_t> bottom;
        for (size_t i = 0; i < spec.sink_tokens.size(); ++i) bottom.insert(by_norm[i].second);
        bool all = true;
        for (int64_t s : spec.sink_tokens) all = all && bottom.count(s) > 0;
        hits += all ? 1 : 0;
    }
    CHECK(hits >= 19);
}

TEST_CASE("tensor file round-trips bit-exactly at f64") {
    TniSpec spec = TniSpec::default_spec();
    spec.seed = 17;
    spec.modality_blocks = {{0, 128, 1.0}, {128, 256, 2.0}};
    const GeneratedData data = generate(spec);
    const std::string path = "datagen_roundtrip_test.kvt";
    write_file(path, data.tensor, data.annotations, "f64");
    const GeneratedData back = read_file(path);
    std::remove(path.c_str());
    REQUIRE(back.tensor.data.size() == data.tensor.data.size());
    for (size_t i = 0; i < data.tensor.data.size(); ++i) {
        CHECK(back.tensor.data[i] == data.tensor.data[i]);
    }
    CHECK(back.annotations.sink_tokens == data.annotations.sink_tokens);
    CHECK(back.annotations.offset_channels == data.annotations.offset_channels);
    REQUIRE(back.annotations.modality_blocks.size() == 2);
    CHECK(back.annotations.modality_blocks[1].scale == 2.0);
}

TEST_CASE("f32 files widen exactly into f64 tensors") {
    Tensor3 x(2, 1, 2, {1.5, -0.25, 1024.0, 3.0});
    const std::string path = "datagen_f32_test.kvt";
    write_file(path, x, {}, "f32");
    const GeneratedData back = read_file(path);
    std::remove(path.c_str());
    for (size_t i = 0; i < x.data.size(); ++i) CHECK(back.tensor.data[i] == x.data[i]);
}

TEST_CASE("bad magic and truncated bodies are named in errors") {
    const std::string path = "datagen_bad_test.kvt";
    {
        std::ofstream f(path, std::ios::binary);
        f << "NOPE{\"shape\":[1,1,1]}\n";
    }
    CHECK_THROWS_WITH_AS(read_file(path), doctest::Contains("bad magic"), std::runtime_error);
    {
        Tensor3 x(4, 2, 8);
        write_file(path, x, {}, "f64");
        // chop the body
        std::ifstream in(path, std::ios::binary);
        std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(all.data(), static_cast<std::streamsize>(all.size() - 64));
    }
    try {
        read_file(path);
        CHECK(false);
    } catch (const std::runtime_error &e) {
        const std::string msg = e.what();
        CHECK(msg.find("truncated") != std::string::npos);
        CHECK(msg.find("expected") != std::string::npos);
    }
    std::remove(path.c_str());
}
