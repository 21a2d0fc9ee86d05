#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "core/tensor.hpp"
#include "doctest.h"

using namespace nfarec;

namespace {

Mat random_mat(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Mat m(r, c);
    for (double& v : m.a) v = d(rng);
    return m;
}

}  // namespace

TEST_CASE("matmul identity and hand product") {
    Tape tape;
    Mat id(2, 2);
    id.at(0, 0) = id.at(1, 1) = 1.0;
    Mat m(2, 2);
    m.at(0, 0) = 3.0;
    m.at(0, 1) = -2.0;
    m.at(1, 0) = 0.5;
    m.at(1, 1) = 7.0;
    Tensor out = matmul(tape, make_constant(id), make_constant(m));
    for (std::size_t i = 0; i < 4; ++i) CHECK(out->val[i] == m.a[i]);

    Mat a(2, 2);
    a.at(0, 0) = 1;
    a.at(0, 1) = 2;
    a.at(1, 0) = 3;
    a.at(1, 1) = 4;
    Mat b(2, 1);
    b.at(0, 0) = 0;
    b.at(1, 0) = 1;
    Tensor p = matmul(tape, make_constant(a), make_constant(b));
    CHECK(p->val[0] == doctest::Approx(2.0));
    CHECK(p->val[1] == doctest::Approx(4.0));
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tape tape;
    Tensor a = make_constant(Mat(2, 3));
    Tensor b = make_constant(Mat(2, 2));
    CHECK_THROWS_AS(matmul(tape, a, b), ShapeError);
}

TEST_CASE("matmul gradient vs finite differences") {
    Rng rng(11);
    Tensor a = make_param(random_mat(3, 4, rng));
    Tensor b = make_param(random_mat(4, 2, rng));
    auto f = [&](Tape& t) { return sum(t, matmul(t, a, b)); };
    auto rep = grad_check(f, {a, b}, 1e-5, 1e-6);
    CHECK(rep.passed);
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("softplus_beta closed forms") {
    Tape tape;
    Tensor x0 = make_constant(Mat(1, 1, 0.0));
    Tensor y = softplus_beta(tape, x0, 1.0);
    CHECK(y->val[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    Tensor x100 = make_constant(Mat(1, 1, 100.0));
    Tensor y2 = softplus_beta(tape, x100, 1.0);
    CHECK(std::abs(y2->val[0] - 100.0) < 1e-9);

    double xv = -1.5, beta = 0.7;
    Tensor x = make_constant(Mat(1, 1, xv));
    Tensor y3 = softplus_beta(tape, x, beta);
    CHECK(y3->val[0] == doctest::Approx(beta * std::log1p(std::exp(xv / beta))).epsilon(1e-12));

    // gradient in x is sigmoid(x / beta)
    Tensor xp = make_param(Mat(1, 1, xv));
    Tape t2;
    Tensor loss = sum(t2, softplus_beta(t2, xp, beta));
    t2.backward(loss);
    CHECK(xp->grad[0] == doctest::Approx(stable_sigmoid(xv / beta)).epsilon(1e-12));
}

TEST_CASE("softplus_beta rejects nonpositive beta and stays positive") {
    Tape tape;
    Tensor x = make_constant(Mat(1, 1, 0.0));
    CHECK_THROWS_AS(softplus_beta(tape, x, 0.0), DomainError);
    CHECK_THROWS_AS(softplus_beta(tape, x, -1.0), DomainError);

    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        std::uniform_real_distribution<double> dx(-100.0, 100.0), db(0.01, 5.0);
        Tensor xi = make_constant(Mat(1, 1, dx(rng)));
        Tensor yi = softplus_beta(tape, xi, db(rng));
        CHECK(yi->val[0] > 0.0);
    }
}

TEST_CASE("masked_softmax basics") {
    Tape tape;
    Tensor s = make_constant(Mat(3, 3, 0.7));
    std::vector<std::uint8_t> allow(9, 1);
    Tensor y = masked_softmax(tape, s, allow);
    for (double v : y->val) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    // lower-triangular mask: row 0 has exactly one allowed entry
    Rng rng(5);
    Tensor s2 = make_constant(random_mat(3, 3, rng, -4.0, 4.0));
    std::vector<std::uint8_t> lower = {1, 0, 0, 1, 1, 0, 1, 1, 1};
    Tensor y2 = masked_softmax(tape, s2, lower);
    CHECK(y2->val[0] == 1.0);
    CHECK(y2->val[1] == 0.0);
    CHECK(y2->val[2] == 0.0);
    for (std::size_t r = 0; r < 3; ++r) {
        double row = y2->val[3 * r] + y2->val[3 * r + 1] + y2->val[3 * r + 2];
        CHECK(std::abs(row - 1.0) <= 1e-12);
    }
}

TEST_CASE("masked_softmax equals large-negative substitution") {
    Rng rng(17);
    Mat scores = random_mat(4, 4, rng, -3.0, 3.0);
    std::vector<std::uint8_t> mask(16, 0);
    for (std::size_t j = 0; j < 4; ++j) {
        for (std::size_t k = 0; k <= j; ++k) mask[j * 4 + k] = 1;
    }
    Tape tape;
    Tensor y = masked_softmax(tape, make_constant(scores), mask);

    for (std::size_t j = 0; j < 4; ++j) {
        double mx = -1e300;
        for (std::size_t k = 0; k < 4; ++k) {
            double s = mask[j * 4 + k] ? scores.at(j, k) : -1e30;
            mx = std::max(mx, s);
        }
        double denom = 0.0;
        for (std::size_t k = 0; k < 4; ++k) {
            double s = mask[j * 4 + k] ? scores.at(j, k) : -1e30;
            denom += std::exp(s - mx);
        }
        for (std::size_t k = 0; k < 4; ++k) {
            double s = mask[j * 4 + k] ? scores.at(j, k) : -1e30;
            CHECK(y->val[j * 4 + k] == doctest::Approx(std::exp(s - mx) / denom).epsilon(1e-10));
        }
    }
}

TEST_CASE("masked_softmax rejects a fully masked row") {
    Tape tape;
    Tensor s = make_constant(Mat(2, 2, 1.0));
    std::vector<std::uint8_t> mask = {1, 1, 0, 0};
    CHECK_THROWS_AS(masked_softmax(tape, s, mask), DomainError);
}

TEST_CASE("elementwise closed forms") {
    Tape tape;
    Tensor z = make_constant(Mat(1, 1, 0.0));
    CHECK(tanh_op(tape, z)->val[0] == 0.0);
    CHECK(sigmoid(tape, z)->val[0] == 0.5);

    // zero row survives l2 normalization via the epsilon guard
    Mat m(2, 3);
    m.at(1, 0) = 3.0;
    m.at(1, 1) = 4.0;
    Tensor n = l2_normalize_rows(tape, make_constant(m));
    CHECK(n->val[0] == 0.0);
    CHECK(n->val[1] == 0.0);
    CHECK(n->val[2] == 0.0);
    CHECK(n->val[3] == doctest::Approx(0.6));
    CHECK(n->val[4] == doctest::Approx(0.8));
}

TEST_CASE("elu gradient at -0.3 matches finite differences") {
    Tensor x = make_param(Mat(1, 1, -0.3));
    auto f = [&](Tape& t) { return sum(t, elu(t, x)); };
    auto rep = grad_check(f, {x}, 1e-5, 1e-6);
    CHECK(rep.passed);
}

TEST_CASE("grad_check quadratic oracle") {
    Rng rng(23);
    Tensor x = make_param(random_mat(2, 3, rng));
    auto f = [&](Tape& t) { return scale(t, sum(t, mul(t, x, x)), 0.5); };
    auto rep = grad_check(f, {x}, 1e-5, 1e-8);
    CHECK(rep.passed);
    CHECK(rep.max_rel_err < 1e-8);
    // the analytic gradient of 0.5*||x||^2 is x itself
    Tape t;
    Tensor loss = f(t);
    for (auto& g : x->grad) g = 0.0;
    t.backward(loss);
    for (std::size_t i = 0; i < x->numel(); ++i) {
        CHECK(x->grad[i] == doctest::Approx(x->val[i]).epsilon(1e-12));
    }
}

TEST_CASE("grad_check flags a corrupted backward rule") {
    Tensor x = make_param(Mat(1, 2, 0.4));
    auto f = [&](Tape& t) {
        // op computes 2x but claims gradient 3
        Tensor bad = t.record({1, 2}, true, nullptr);
        for (std::size_t i = 0; i < 2; ++i) bad->val[i] = 2.0 * x->val[i];
        bad->backprop = [bad_p = bad.get(), x_p = x.get()]() {
            for (std::size_t i = 0; i < 2; ++i) x_p->grad[i] += 3.0 * bad_p->grad[i];
        };
        return sum(t, bad);
    };
    auto rep = grad_check(f, {x}, 1e-5, 1e-4);
    CHECK_FALSE(rep.passed);
}

TEST_CASE("second backward without reset is an error") {
    Tensor x = make_param(Mat(1, 1, 1.0));
    Tape tape;
    Tensor loss = sum(tape, mul(tape, x, x));
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), DomainError);
    tape.reset();
}

TEST_CASE("gradient is zero off the path to the loss") {
    Tensor x = make_param(Mat(1, 2, 1.5));
    Tensor y = make_param(Mat(1, 2, -0.5));
    Tape tape;
    Tensor used = sum(tape, mul(tape, x, x));
    Tensor unused = sum(tape, mul(tape, y, y));
    (void)unused;
    x->zero_grad();
    y->zero_grad();
    tape.backward(used);
    for (double g : y->grad) CHECK(g == 0.0);
    for (double g : x->grad) CHECK(g != 0.0);
}

TEST_CASE("independent subgraphs keep independent gradients") {
    Rng rng(31);
    Mat xv = random_mat(1, 3, rng), yv = random_mat(1, 3, rng);

    Tensor x1 = make_param(xv), y1 = make_param(yv);
    Tape t1;
    t1.backward(add(t1, sum(t1, mul(t1, x1, x1)), sum(t1, tanh_op(t1, y1))));

    Tensor x2 = make_param(xv), y2 = make_param(yv);
    Tape t2;
    t2.backward(sum(t2, mul(t2, x2, x2)));
    Tape t3;
    t3.backward(sum(t3, tanh_op(t3, y2)));

    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(x1->grad[i] == doctest::Approx(x2->grad[i]).epsilon(1e-14));
        CHECK(y1->grad[i] == doctest::Approx(y2->grad[i]).epsilon(1e-14));
    }
}

TEST_CASE("gather_rows equals one-hot matmul and sums duplicate gradients") {
    Rng rng(41);
    Mat table = random_mat(5, 3, rng);
    std::vector<std::size_t> idx = {2, 0, 2};

    Tensor v1 = make_param(table);
    Tape t1;
    Tensor g = gather_rows(t1, v1, idx);
    Mat onehot(3, 5);
    for (std::size_t j = 0; j < idx.size(); ++j) onehot.at(j, idx[j]) = 1.0;
    Tensor v2 = make_param(table);
    Tape t2;
    Tensor m = matmul(t2, make_constant(onehot), v2);
    for (std::size_t i = 0; i < g->numel(); ++i) CHECK(g->val[i] == m->val[i]);

    t1.backward(sum(t1, g));
    t2.backward(sum(t2, m));
    for (std::size_t i = 0; i < v1->numel(); ++i) {
        CHECK(v1->grad[i] == doctest::Approx(v2->grad[i]).epsilon(1e-14));
    }
    // row 2 was selected twice, so its gradient doubled
    CHECK(v1->grad[2 * 3] == doctest::Approx(2.0));
    CHECK(v1->grad[1 * 3] == 0.0);
}

TEST_CASE("every op composition passes grad_check on 10 seeds") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed);
        Tensor A = make_param(random_mat(3, 4, rng));
        Tensor B = make_param(random_mat(4, 3, rng));
        Tensor C = make_param(random_mat(3, 3, rng));
        Tensor v = make_param(random_mat(1, 3, rng));
        Tensor s = make_param(random_mat(1, 1, rng, 0.2, 1.5));
        Tensor col = make_param(random_mat(3, 1, rng));
        std::vector<std::uint8_t> mask(9, 0);
        for (std::size_t j = 0; j < 3; ++j) {
            for (std::size_t k = 0; k <= j; ++k) mask[j * 3 + k] = 1;
        }
        Mat w = random_mat(3, 3, rng, 0.1, 1.0);
        Mat w_pos = random_mat(3, 3, rng, 0.0, 2.0);
        Mat neg = random_mat(3, 3, rng, 0.0, 1.0);

        auto f = [&](Tape& t) {
            Tensor m = matmul(t, A, B);                       // 3x3
            Tensor att = masked_softmax(t, m, mask);          // 3x3
            Tensor h = matmul_nt(t, att, C);                  // 3x3
            h = add(t, h, C);
            h = layer_norm_rows(t, h);
            h = elu(t, h);
            h = l2_normalize_rows(t, h);
            h = add_rowvec(t, h, v);
            h = mul_rowvec(t, h, v);
            h = sub(t, h, scale(t, C, 0.3));
            Tensor sp = softplus_beta(t, h, s);
            Tensor lg = log_op(t, sp);
            Tensor ex = exp_op(t, scale_s(t, tanh_op(t, h), s));
            Tensor g = gather_rows(t, ex, {1, 0, 2});
            Tensor gc = gather_col(t, g, 1);                  // 3x1
            Tensor tc = tile_cols(t, add(t, gc, col), 3);     // 3x3
            Tensor st = stack_rows(t, {gather_rows(t, tc, {0}), gather_rows(t, tc, {2}),
                                       gather_rows(t, lg, {1})});
            Tensor r = mul(t, sigmoid(t, st), tanh_op(t, h));
            Tensor parts = add(t, weighted_sum(t, r, w), weighted_bce(t, h, w_pos, neg));
            parts = add(t, parts, mean(t, st));
            parts = add(t, parts, get_elem(t, g, 2, 2));
            return parts;
        };
        auto rep = grad_check(f, {A, B, C, v, s, col}, 1e-5, 1e-4);
        CAPTURE(seed);
        CAPTURE(rep.max_rel_err);
        CHECK(rep.passed);
    }
}
