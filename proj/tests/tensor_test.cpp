#include "natlab/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace natlab;

namespace {

Tensor random_tensor(std::vector<int> shape, RandomSource& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(shape);
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

// independent triple-loop matmul oracle
std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
    int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> c(size_t(m) * size_t(n), 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            for (int p = 0; p < k; ++p) c[size_t(i) * size_t(n) + size_t(j)] += a.at(i, p) * b.at(p, j);
    return c;
}

}  // namespace

TEST(RandomSource, IdenticalSeedStreamGivesIdenticalSequence) {
    RandomSource a(1234, 7), b(1234, 7);
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
    RandomSource c(1234, 7), d(1234, 7);
    for (int i = 0; i < 1000; ++i) {
        ASSERT_EQ(c.uniform(), d.uniform());
        ASSERT_EQ(c.normal(), d.normal());
    }
}

TEST(RandomSource, StreamsAreDistinct) {
    RandomSource a(1234, 0), b(1234, 1);
    int same = 0;
    for (int i = 0; i < 100; ++i) same += (a.next_u64() == b.next_u64());
    EXPECT_EQ(same, 0);
}

TEST(RandomSource, SplitIsDeterministicAndStable) {
    RandomSource root(42);
    RandomSource s1 = root.split(3);
    RandomSource s2 = root.split(3);
    EXPECT_EQ(s1.next_u64(), s2.next_u64());
    RandomSource s3 = root.split(4);
    RandomSource s4 = root.split(3);
    s4.next_u64();
    EXPECT_NE(s3.next_u64(), s4.next_u64());
}

TEST(RandomSource, UniformRangeAndMoments) {
    RandomSource rng(99);
    double sum = 0.0, sumsq = 0.0;
    const int N = 100000;
    for (int i = 0; i < N; ++i) {
        double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
        sumsq += u * u;
    }
    EXPECT_NEAR(sum / N, 0.5, 0.01);
    EXPECT_NEAR(sumsq / N - 0.25, 1.0 / 12.0, 0.01);
}

TEST(RandomSource, NormalMoments) {
    RandomSource rng(7);
    double sum = 0.0, sumsq = 0.0;
    const int N = 200000;
    for (int i = 0; i < N; ++i) {
        double z = rng.normal();
        sum += z;
        sumsq += z * z;
    }
    EXPECT_NEAR(sum / N, 0.0, 0.02);
    EXPECT_NEAR(sumsq / N, 1.0, 0.02);
}

TEST(Tensor, ConstructionInvariants) {
    EXPECT_THROW(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
    EXPECT_THROW(Tensor::zeros({0, 3}), std::invalid_argument);
    EXPECT_THROW(Tensor::zeros({}), std::invalid_argument);
    EXPECT_THROW(Tensor::from({1}, {std::nan("")}), std::invalid_argument);
    Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    EXPECT_EQ(t.numel(), 6u);
    EXPECT_EQ(t.at(1, 2), 6.0);
}

TEST(Matmul, IdentityCase) {
    Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor a   = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor c   = matmul(eye, a);
    for (size_t i = 0; i < 4; ++i) EXPECT_EQ(c.data()[i], a.data()[i]);
}

TEST(Matmul, HandOracle2x2Times2x1) {
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from({2, 1}, {0, 1});
    Tensor c = matmul(a, b);
    EXPECT_EQ(c.at(0, 0), 2.0);
    EXPECT_EQ(c.at(1, 0), 4.0);
}

TEST(Matmul, ZeroAnnihilator) {
    RandomSource rng(3);
    Tensor z = Tensor::zeros({3, 3});
    Tensor a = random_tensor({3, 3}, rng);
    Tensor c = matmul(z, a);
    for (double v : c.data()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({2, 3});
    try {
        matmul(a, b);
        FAIL() << "expected throw";
    } catch (const std::invalid_argument& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    }
}

TEST(Matmul, AgreesWithNaiveOracleOnRandom5x5) {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        RandomSource rng(seed);
        Tensor a = random_tensor({5, 5}, rng, -2.0, 2.0);
        Tensor b = random_tensor({5, 5}, rng, -2.0, 2.0);
        Tensor c = matmul(a, b);
        std::vector<double> ref = naive_matmul(a, b);
        for (size_t i = 0; i < ref.size(); ++i) {
            double denom = std::max(1.0, std::abs(ref[i]));
            ASSERT_LE(std::abs(c.data()[i] - ref[i]) / denom, 1e-12);
        }
    }
}

TEST(Softmax, UniformRow) {
    Tensor x = Tensor::from({1, 3}, {0, 0, 0});
    Tensor y = softmax_rows(x, 1.0);
    for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Softmax, SingleColumnIsAllOnes) {
    Tensor x = Tensor::from({4, 1}, {-3, 0, 5, 100});
    Tensor y = softmax_rows(x, 1.0);
    for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Softmax, ClosedFormTwoLogits) {
    Tensor x = Tensor::from({1, 2}, {1, 2});
    Tensor y = softmax_rows(x, 1.0);
    double e = std::exp(1.0);
    EXPECT_NEAR(y.at(0, 0), 1.0 / (1.0 + e), 1e-15);
    EXPECT_NEAR(y.at(0, 1), e / (1.0 + e), 1e-15);
}

TEST(Softmax, RowsSumToOneForLargeLogits) {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        RandomSource rng(seed);
        Tensor x = random_tensor({6, 9}, rng, -50.0, 50.0);
        Tensor y = softmax_rows(x, 1.0);
        for (int i = 0; i < 6; ++i) {
            double s = 0.0;
            for (int j = 0; j < 9; ++j) s += y.at(i, j);
            ASSERT_LE(std::abs(s - 1.0), 1e-12);
        }
    }
}

TEST(Softmax, RejectsBadArguments) {
    Tensor x = Tensor::zeros({2, 2});
    EXPECT_THROW(softmax_rows(x, 0.0), std::invalid_argument);
    EXPECT_THROW(softmax_rows(x, -1.0), std::invalid_argument);
    // an empty row dimension is rejected at construction already
    EXPECT_THROW(Tensor::zeros({2, 0}), std::invalid_argument);
}

TEST(Norms, ScaleThreeFourFive) {
    Tensor v = Tensor::from({1, 2}, {3, 4});
    EXPECT_DOUBLE_EQ(l2_norm(v), 5.0);
    Tensor s = scale_to_norm(v, 10.0);
    EXPECT_DOUBLE_EQ(s.at(0, 0), 6.0);
    EXPECT_DOUBLE_EQ(s.at(0, 1), 8.0);
}

TEST(Norms, FixpointAtOwnNorm) {
    RandomSource rng(11);
    Tensor v = random_tensor({1, 7}, rng);
    Tensor s = scale_to_norm(v, l2_norm(v));
    for (size_t i = 0; i < v.numel(); ++i) ASSERT_LE(std::abs(s.data()[i] - v.data()[i]), 1e-12);
}

TEST(Norms, UnitTargetOnOnesVector) {
    Tensor v = Tensor::from({1, 4}, {1, 1, 1, 1});
    Tensor s = scale_to_norm(v, 1.0);
    for (double x : s.data()) EXPECT_DOUBLE_EQ(x, 0.5);
    EXPECT_NEAR(l2_norm(s), 1.0, 1e-9);
}

TEST(Norms, ZeroVectorRejected) {
    Tensor v = Tensor::zeros({1, 3});
    EXPECT_THROW(scale_to_norm(v, 1.0), std::invalid_argument);
}

TEST(GradCheck, QuadraticIsExactToRounding) {
    Tensor x   = Tensor::from({1, 3}, {1, 2, 3});
    double err = grad_check([](const Tensor& t) { return sum(mul(t, t)); }, x, 1e-5);
    EXPECT_LT(err, 1e-6);
}

TEST(GradCheck, SoftmaxThenDot) {
    RandomSource rng(5);
    Tensor x = random_tensor({2, 4}, rng);
    Tensor w = random_tensor({2, 4}, rng);
    double err = grad_check([&](const Tensor& t) { return sum(mul(softmax_rows(t, 2.0), w)); }, x, 1e-5);
    EXPECT_LT(err, 1e-4);
}

TEST(GradCheck, ConstantFunctionHasZeroError) {
    Tensor x   = Tensor::from({1, 2}, {1, 2});
    double err = grad_check([](const Tensor&) { return Tensor::filled({1}, 3.0); }, x, 1e-5);
    EXPECT_EQ(err, 0.0);
}

TEST(GradCheck, RejectsBadEps) {
    Tensor x = Tensor::from({1}, {1.0});
    EXPECT_THROW(grad_check([](const Tensor& t) { return sum(t); }, x, 1e-2), std::invalid_argument);
    EXPECT_THROW(grad_check([](const Tensor& t) { return sum(t); }, x, 1e-8), std::invalid_argument);
}

TEST(GradCheck, RejectsNonFiniteF) {
    Tensor x = Tensor::from({1}, {1.0});
    EXPECT_THROW(grad_check([](const Tensor&) { return Tensor::filled({1}, std::nan("")); }, x, 1e-5),
                 std::invalid_argument);
}

// Every differentiable op, finite-difference checked over 20 seeds.
TEST(GradCheck, AllOpsUnderTolerance) {
    struct Case {
        const char* name;
        std::function<Tensor(const Tensor&, const Tensor&)> f;  // (x, aux) -> scalar
        bool positive_input;
    };
    std::vector<Case> cases = {
        {"add", [](const Tensor& x, const Tensor& a) { return sum(add(x, a)); }, false},
        {"sub", [](const Tensor& x, const Tensor& a) { return sum(sub(a, x)); }, false},
        {"mul", [](const Tensor& x, const Tensor& a) { return sum(mul(x, a)); }, false},
        {"div_num", [](const Tensor& x, const Tensor& a) { return sum(div(x, add_const(mul(a, a), 0.5))); }, false},
        {"div_den", [](const Tensor& x, const Tensor& a) { return sum(div(a, add_const(mul(x, x), 0.5))); }, false},
        {"scale", [](const Tensor& x, const Tensor&) { return sum(scale(x, -2.5)); }, false},
        {"add_const", [](const Tensor& x, const Tensor&) { return sum(add_const(x, 3.0)); }, false},
        {"recip", [](const Tensor& x, const Tensor&) { return sum(recip(add_const(mul(x, x), 1.0))); }, false},
        {"sqrt", [](const Tensor& x, const Tensor&) { return sum(sqrt_elem(x)); }, true},
        {"silu", [](const Tensor& x, const Tensor& a) { return sum(mul(silu(x), a)); }, false},
        {"row_sum", [](const Tensor& x, const Tensor&) { return sum(mul(row_sum(x), row_sum(x))); }, false},
        {"matmul_lhs", [](const Tensor& x, const Tensor& a) { return sum(matmul(x, transpose(a))); }, false},
        {"matmul_rhs", [](const Tensor& x, const Tensor& a) { return sum(matmul(a, transpose(x))); }, false},
        {"transpose", [](const Tensor& x, const Tensor& a) { return sum(mul(transpose(x), transpose(a))); }, false},
        {"softmax", [](const Tensor& x, const Tensor& a) { return sum(mul(softmax_rows(x, 1.5), a)); }, false},
        {"select_row", [](const Tensor& x, const Tensor&) { return sum(mul(select_row(x, 1), select_row(x, 1))); }, false},
        {"select_col", [](const Tensor& x, const Tensor&) { return sum(mul(select_col(x, 2), select_col(x, 2))); }, false},
        {"concat_rows",
         [](const Tensor& x, const Tensor& a) { return sum(mul(concat_rows({x, x}), concat_rows({a, a}))); }, false},
        {"gather_rows",
         [](const Tensor& x, const Tensor&) {
             Tensor g = gather_rows(x, {1, 1, 0, 2});
             return sum(mul(g, g));
         },
         false},
        {"row_broadcast",
         [](const Tensor& x, const Tensor& a) { return sum(mul(row_broadcast(select_row(x, 0), 3), a)); }, false},
        {"add_rowvec", [](const Tensor& x, const Tensor& a) { return sum(mul(add_rowvec(x, select_row(x, 2)), a)); }, false},
        {"mul_colvec", [](const Tensor& x, const Tensor& a) { return sum(mul(mul_colvec(x, select_col(x, 0)), a)); }, false},
        {"mul_scalar_t", [](const Tensor& x, const Tensor& a) { return sum(mul(mul_scalar_t(x, sum(x)), a)); }, false},
        {"reshape", [](const Tensor& x, const Tensor& a) { return sum(mul(reshape(x, {4, 3}), reshape(a, {4, 3}))); }, false},
        {"rmsnorm", [](const Tensor& x, const Tensor& a) { return sum(mul(rmsnorm_rows(x), a)); }, false},
        {"l2_norm_t", [](const Tensor& x, const Tensor&) { return l2_norm_t(x); }, false},
    };
    for (const Case& c : cases) {
        double worst = 0.0;
        for (uint64_t seed = 0; seed < 20; ++seed) {
            RandomSource rng(seed * 131 + 17);
            Tensor x = c.positive_input ? random_tensor({3, 4}, rng, 0.5, 2.0) : random_tensor({3, 4}, rng);
            Tensor a = random_tensor({3, 4}, rng);
            worst    = std::max(worst, grad_check([&](const Tensor& t) { return c.f(t, a); }, x, 1e-5));
        }
        EXPECT_LT(worst, 1e-4) << "op " << c.name;
    }
}

// Backward of a composed graph equals the product-rule composition; checked
// end to end through a multi-stage pipeline including a fan-out reuse.
TEST(GradCheck, ComposedPipeline) {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        RandomSource rng(seed + 1000);
        Tensor x = random_tensor({3, 4}, rng);
        Tensor w = random_tensor({4, 4}, rng, -0.7, 0.7);
        double err = grad_check(
            [&](const Tensor& t) {
                Tensor h = matmul(rmsnorm_rows(t), w);
                Tensor s = softmax_rows(h, 2.0);
                Tensor u = silu(add(h, s));  // reuse of h: fan-out
                return scale(sum(mul(u, u)), 0.25);
            },
            x, 1e-5);
        ASSERT_LT(err, 1e-4) << "seed " << seed;
    }
}

TEST(Autodiff, DiamondReuseAccumulatesOnce) {
    Tensor x = Tensor::from({1, 2}, {3.0, -2.0}, true);
    Tensor y = add(mul(x, x), mul(x, x));  // y = 2x^2, dy/dx = 4x
    Tensor s = sum(y);
    s.backward();
    EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
    EXPECT_DOUBLE_EQ(x.grad()[1], -8.0);
}

TEST(Autodiff, NonFiniteOperationRejected) {
    Tensor big = Tensor::filled({1, 1}, 1e308);
    EXPECT_THROW(mul(big, big), std::runtime_error);
}

TEST(Autodiff, NoTapeWithoutRequiresGrad) {
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
    Tensor c = matmul(a, b);
    EXPECT_FALSE(c.requires_grad());
    EXPECT_EQ(c.node()->parents.size(), 0u);
}
