#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "stim/error.hpp"
#include "stim/kernels.hpp"

using namespace stim;

namespace {

RowVector row(std::initializer_list<double> v) {
    RowVector r(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) r(i++) = x;
    return r;
}

}  // namespace

TEST_CASE("cosine similarity: identical, orthogonal, 45 degrees") {
    CHECK(cosine_similarity(row({1, 2, 3}), row({1, 2, 3})) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cosine_similarity(row({1, 0}), row({0, 1})) == 0.0);
    CHECK(std::abs(cosine_similarity(row({1, 0}), row({1, 1})) - 0.70710678118654752) < 1e-9);
}

TEST_CASE("cosine similarity: zero norm gives 0, length mismatch throws") {
    CHECK(cosine_similarity(row({0, 0, 0}), row({1, 2, 3})) == 0.0);
    CHECK(cosine_similarity(row({1, 2}), row({0, 0})) == 0.0);
    CHECK_THROWS_AS(cosine_similarity(row({1, 2}), row({1, 2, 3})), Error);
}

TEST_CASE("cosine similarity: symmetric, scale invariant, matches oracle") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> scale(0.01, 100.0);
    for (int trial = 0; trial < 200; ++trial) {
        const Matrix m = oracle::random_matrix(rng, 2, 7);
        const RowVector a = m.row(0);
        const RowVector b = m.row(1);
        const double s = cosine_similarity(a, b);
        CHECK(std::abs(s - cosine_similarity(b, a)) < 1e-12);
        CHECK(std::abs(s - cosine_similarity(RowVector(scale(rng) * a), RowVector(scale(rng) * b))) < 1e-9);
        CHECK(std::abs(s - oracle::cosine(a, b)) < 1e-12);
        CHECK(s >= -1.0);
        CHECK(s <= 1.0);
    }
}

TEST_CASE("softmax: uniform, large logits, ln 2") {
    const RowVector u = softmax_row(row({0, 0, 0, 0}));
    for (Eigen::Index i = 0; i < 4; ++i) CHECK(u(i) == doctest::Approx(0.25).epsilon(1e-15));
    const RowVector big = softmax_row(row({1000, 0}));
    CHECK(std::abs(big(0) - 1.0) < 1e-12);
    CHECK(std::abs(big(1)) < 1e-12);
    const RowVector l2 = softmax_row(row({std::log(2.0), 0}));
    CHECK(std::abs(l2(0) - 2.0 / 3.0) < 1e-9);
    CHECK(std::abs(l2(1) - 1.0 / 3.0) < 1e-9);
    CHECK_THROWS_WITH_AS(softmax_row(RowVector(0)), "empty attention row", Error);
}

TEST_CASE("negative entropy: one-hot, uniform, half-half") {
    for (int n = 1; n <= 9; ++n) {
        RowVector onehot = RowVector::Zero(n);
        onehot(n - 1) = 1.0;
        CHECK(std::abs(negative_entropy(onehot)) < 1e-9);
        const RowVector uni = RowVector::Constant(n, 1.0 / n);
        CHECK(std::abs(negative_entropy(uni) + std::log(static_cast<double>(n))) < 1e-9);
    }
    CHECK(std::abs(negative_entropy(row({0.25, 0.25, 0.25, 0.25})) + 1.3862944) < 1e-7);
    CHECK(std::abs(negative_entropy(row({0.5, 0.5, 0, 0})) + 0.6931472) < 1e-7);
    CHECK_THROWS_WITH_AS(negative_entropy(row({0.5, -0.1, 0.6})), "invalid distribution", Error);
}

TEST_CASE("negative entropy: permutation invariant, bounded, matches oracle") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 10);
        const RowVector p = softmax_row(RowVector(oracle::random_matrix(rng, 1, n).row(0) * 3.0));
        const double h = negative_entropy(p);
        CHECK(std::abs(h - oracle::neg_entropy(p)) < 1e-12);
        CHECK(h <= 0.0);
        CHECK(h >= -std::log(static_cast<double>(n)) - 1e-12);
        RowVector q = p;
        std::shuffle(q.data(), q.data() + q.size(), rng);
        CHECK(std::abs(negative_entropy(q) - h) < 1e-12);
    }
}

TEST_CASE("minmax scaling: affine, degenerate, thirds") {
    const RowVector a = minmax_scale(row({-1.0, -0.5, 0.0}));
    CHECK(a(0) == 0.0);
    CHECK(a(1) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(a(2) == 1.0);
    const RowVector c = minmax_scale(row({3.25, 3.25, 3.25}));
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(c(i) == 0.5);
    const RowVector t = minmax_scale(row({0, 1, 3}));
    CHECK(t(0) == 0.0);
    CHECK(std::abs(t(1) - 1.0 / 3.0) < 1e-12);
    CHECK(t(2) == 1.0);
}

TEST_CASE("minmax scaling preserves argmax, argmin and ties") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        RowVector v = oracle::random_matrix(rng, 1, 6).row(0);
        v(3) = v(1);  // a tie
        const RowVector s = minmax_scale(v);
        Eigen::Index imax = 0, imin = 0, jmax = 0, jmin = 0;
        v.maxCoeff(&imax);
        v.minCoeff(&imin);
        s.maxCoeff(&jmax);
        s.minCoeff(&jmin);
        CHECK(imax == jmax);
        CHECK(imin == jmin);
        CHECK(s(3) == s(1));
        CHECK(s.minCoeff() == 0.0);
        CHECK(s.maxCoeff() == 1.0);
    }
}
