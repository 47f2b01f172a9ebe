#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "traffic/tensor.hpp"

using namespace traffic;

namespace {

Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -2.0, double hi = 2.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = dist(rng);
    return t;
}

}  // namespace

TEST_CASE("tensor construction checks shape against data") {
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.at(5) == 0.0);
}

TEST_CASE("from_external rejects non-finite values") {
    CHECK_THROWS_AS(Tensor::from_external({2}, {1.0, std::nan("")}, "test input"), ValidationError);
    CHECK_THROWS_AS(Tensor::from_external({1}, {INFINITY}, "test input"), ValidationError);
    CHECK_NOTHROW(Tensor::from_external({2}, {1.0, -3.5}, "test input"));
}

TEST_CASE("matmul identity and zero cases") {
    Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    std::mt19937_64 rng(7);
    Tensor a = random_tensor(rng, {3, 3});
    CHECK(matmul(eye, a) == a);

    Tensor zero({3, 2});
    Tensor prod = matmul(a, zero);
    for (std::size_t i = 0; i < prod.size(); ++i) CHECK(prod.at(i) == 0.0);
}

TEST_CASE("matmul direct evaluation") {
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor b({2, 1}, {1, 1});
    Tensor c = matmul(a, b);
    CHECK(c.shape() == Shape{2, 1});
    CHECK(c.at(0) == 3.0);
    CHECK(c.at(1) == 7.0);
}

TEST_CASE("matmul dimension error names both shapes") {
    Tensor a({2, 3});
    Tensor b({2, 3});
    try {
        matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        CHECK(msg.find("(2x3)") != std::string::npos);
    }
}

TEST_CASE("softmax rows: symmetry, ratios, stabilization") {
    Tensor constant_row({1, 3}, {4.2, 4.2, 4.2});
    Tensor s = softmax_rows(constant_row);
    for (std::size_t j = 0; j < 3; ++j) CHECK(s.at(j) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    Tensor r({1, 2}, {0.0, std::log(2.0)});
    Tensor s2 = softmax_rows(r);
    CHECK(s2.at(0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(s2.at(1) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

    Tensor big({1, 2}, {1000.0, 1000.0});
    Tensor s3 = softmax_rows(big);
    CHECK(s3.all_finite());
    CHECK(s3.at(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s3.at(1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = random_tensor(rng, {4, 5}, -10.0, 10.0);
        Tensor s = softmax_rows(x);
        for (std::size_t i = 0; i < 4; ++i) {
            double row_sum = 0.0;
            for (std::size_t j = 0; j < 5; ++j) row_sum += s(i, j);
            CHECK(std::abs(row_sum - 1.0) <= 1e-12);
        }
        Tensor shifted = x;
        std::uniform_real_distribution<double> cd(-50.0, 50.0);
        const double c = cd(rng);
        for (std::size_t i = 0; i < shifted.size(); ++i) shifted.at(i) += c;
        CHECK(max_abs_diff(softmax_rows(shifted), s) <= 1e-12);
    }
}

TEST_CASE("elementwise ops") {
    Tensor x({3}, {-1.0, 0.0, 2.0});
    Tensor r = relu(x);
    CHECK(r.at(0) == 0.0);
    CHECK(r.at(1) == 0.0);
    CHECK(r.at(2) == 2.0);

    std::mt19937_64 rng(3);
    Tensor a = random_tensor(rng, {2, 4});
    CHECK(add(a, Tensor({2, 4})) == a);

    Tensor s = scale(Tensor({2}, {1.0, 2.0}), 0.5);
    CHECK(s.at(0) == 0.5);
    CHECK(s.at(1) == 1.0);

    CHECK_THROWS_AS(add(Tensor({2, 3}), Tensor({3, 2})), ShapeError);
    CHECK_THROWS_AS(mul(Tensor({2}), Tensor({3})), ShapeError);
}

TEST_CASE("concat basics") {
    Tensor a({2}, {1.0, 2.0});
    CHECK(concat({a}, 0) == a);

    Tensor b({1}, {3.0});
    Tensor joined = concat({a, b}, 0);
    CHECK(joined.shape() == Shape{3});
    CHECK(joined.at(0) == 1.0);
    CHECK(joined.at(1) == 2.0);
    CHECK(joined.at(2) == 3.0);

    Tensor m1({2, 3});
    Tensor m2({2, 5});
    CHECK(concat({m1, m2}, 1).shape() == Shape{2, 8});
    CHECK_THROWS_AS(concat({Tensor({2, 3}), Tensor({3, 3})}, 1), ShapeError);
}

TEST_CASE("concat then split recovers the parts exactly") {
    std::mt19937_64 rng(19);
    for (std::size_t axis = 0; axis < 2; ++axis) {
        std::uniform_int_distribution<std::size_t> dim(1, 4);
        for (int trial = 0; trial < 10; ++trial) {
            const std::size_t fixed = dim(rng);
            std::vector<Tensor> parts;
            std::vector<std::size_t> extents;
            for (int p = 0; p < 3; ++p) {
                const std::size_t e = dim(rng);
                extents.push_back(e);
                Shape s = axis == 0 ? Shape{e, fixed} : Shape{fixed, e};
                parts.push_back(random_tensor(rng, s));
            }
            Tensor joined = concat(parts, axis);
            std::size_t offset = 0;
            for (int p = 0; p < 3; ++p) {
                Tensor back(parts[p].shape());
                for (std::size_t i = 0; i < back.shape()[0]; ++i)
                    for (std::size_t j = 0; j < back.shape()[1]; ++j)
                        back(i, j) = axis == 0 ? joined(offset + i, j) : joined(i, offset + j);
                CHECK(back == parts[p]);
                offset += extents[static_cast<std::size_t>(p)];
            }
        }
    }
}

TEST_CASE("layer_norm_rows standardizes each row") {
    std::mt19937_64 rng(5);
    Tensor x = random_tensor(rng, {3, 8}, -4.0, 4.0);
    Tensor y = layer_norm_rows(x, 1e-5);
    for (std::size_t i = 0; i < 3; ++i) {
        double mu = 0.0, var = 0.0;
        for (std::size_t j = 0; j < 8; ++j) mu += y(i, j);
        mu /= 8.0;
        for (std::size_t j = 0; j < 8; ++j) var += (y(i, j) - mu) * (y(i, j) - mu);
        var /= 8.0;
        CHECK(std::abs(mu) <= 1e-10);
        CHECK(std::abs(var - 1.0) <= 1e-4);  // eps shifts variance slightly below 1
    }
}

TEST_CASE("gather and slice helpers") {
    Tensor a({3, 2}, {1, 2, 3, 4, 5, 6});
    Tensor g = gather_rows(a, {2, 0});
    CHECK(g == Tensor({2, 2}, {5, 6, 1, 2}));
    CHECK_THROWS_AS(gather_rows(a, {3}), ShapeError);

    Tensor s = slice_axis0(a, 1, 3);
    CHECK(s == Tensor({2, 2}, {3, 4, 5, 6}));
}

TEST_CASE("reductions") {
    Tensor a({2, 2}, {1, 2, 3, 4});
    CHECK(sum(a) == 10.0);
    CHECK(mean(a) == 2.5);
}
