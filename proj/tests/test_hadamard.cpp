#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "oscar/hadamard.hpp"
#include "oscar/ref.hpp"
#include "oscar/tensor.hpp"

using namespace oscar;

TEST_CASE("fht on small hand-checked vectors") {
    std::vector<double> v{1.0, 1.0};
    fht_inplace(v);
    CHECK(v[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(v[1] == doctest::Approx(0.0).epsilon(1e-15));

    std::vector<double> e0{1.0, 0.0, 0.0, 0.0};
    fht_inplace(e0);
    for (double x : e0) CHECK(x == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("fht rejects non-power-of-two lengths") {
    std::vector<double> v(6, 1.0);
    CHECK_THROWS_AS(fht_inplace(v), std::invalid_argument);
}

TEST_CASE("fht is self-inverse at d=128") {
    SeededRng rng(11);
    std::vector<double> v(128);
    for (double &x : v) x = rng.next_normal();
    std::vector<double> twice = v;
    fht_inplace(twice);
    fht_inplace(twice);
    for (size_t i = 0; i < v.size(); ++i) {
        CHECK(std::fabs(twice[i] - v[i]) < 1e-12);
    }
}

TEST_CASE("fht_tensor transforms each (token, head) vector") {
    Tensor3 x(1, 1, 2, {1.0, 1.0});
    const Tensor3 y = fht_tensor(x);
    CHECK(y.at(0, 0, 0) == doctest::Approx(std::sqrt(2.0)));
    CHECK(y.at(0, 0, 1) == doctest::Approx(0.0));
}

TEST_CASE("fht_tensor preserves norms and matches the serial reference") {
    SeededRng rng(12);
    Tensor3 x(5, 3, 64);
    for (double &v : x.data) v = rng.next_normal();
    const Tensor3 y = fht_tensor(x);
    for (int64_t t = 0; t < x.tokens; ++t) {
        for (int64_t h = 0; h < x.heads; ++h) {
            CHECK(token_l2_norm(y, t, h) ==
                  doctest::Approx(token_l2_norm(x, t, h)).epsilon(1e-12));
        }
    }
    const Tensor3 yref = ref::fht_tensor(x);
    for (size_t i = 0; i < y.data.size(); ++i) CHECK(y.data[i] == yref.data[i]);
}

TEST_CASE("rotation preserves inner products (query cancels key rotation)") {
    SeededRng rng(13);
    for (int round = 0; round < 20; ++round) {
        std::vector<double> q(64), k(64);
        for (double &x : q) x = rng.next_normal();
        for (double &x : k) x = rng.next_normal();
        double plain = 0.0;
        for (int i = 0; i < 64; ++i) plain += q[i] * k[i];
        fht_inplace(q);
        fht_inplace(k);
        double rotated = 0.0;
        for (int i = 0; i < 64; ++i) rotated += q[i] * k[i];
        CHECK(std::fabs(rotated - plain) <= 1e-11 * std::max(1.0, std::fabs(plain)));
    }
}

TEST_CASE("hadamard_matrix small cases") {
    const Matrix h1 = hadamard_matrix(1);
    CHECK(h1.at(0, 0) == 1.0);
    const Matrix h2 = hadamard_matrix(2);
    const double r = 1.0 / std::sqrt(2.0);
    CHECK(h2.at(0, 0) == doctest::Approx(r));
    CHECK(h2.at(0, 1) == doctest::Approx(r));
    CHECK(h2.at(1, 0) == doctest::Approx(r));
    CHECK(h2.at(1, 1) == doctest::Approx(-r));
    CHECK_THROWS_AS(hadamard_matrix(6), std::invalid_argument);
}

TEST_CASE("dense matrix path agrees with the butterfly at d=16") {
    SeededRng rng(14);
    const Matrix h = hadamard_matrix(16);
    std::vector<double> v(16);
    for (double &x : v) x = rng.next_normal();
    const std::vector<double> dense = ref::hadamard_apply_dense(h, v);
    std::vector<double> fast = v;
    fht_inplace(fast);
    for (size_t i = 0; i < v.size(); ++i) CHECK(std::fabs(dense[i] - fast[i]) < 1e-12);
}

TEST_CASE("orthonormality for every power of two up to 256") {
    for (int64_t d = 1; d <= 256; d <<= 1) {
        const Matrix h = hadamard_matrix(d);
        for (int64_t i = 0; i < d; ++i) {
            for (int64_t j = 0; j < d; ++j) {
                double acc = 0.0;
                for (int64_t k = 0; k < d; ++k) acc += h.at(k, i) * h.at(k, j);
                CHECK(std::fabs(acc - (i == j ? 1.0 : 0.0)) < 1e-10);
            }
        }
    }
}
