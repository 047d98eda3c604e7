#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "killfie/error.hpp"
#include "killfie/stats.hpp"

using namespace killfie;
using namespace killfie::stats;

namespace {

double brute_d(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    double best = 0.0;
    for (double x : pooled) {
        double fa = static_cast<double>(std::count_if(a.begin(), a.end(), [&](double v) { return v <= x; })) / a.size();
        double fb = static_cast<double>(std::count_if(b.begin(), b.end(), [&](double v) { return v <= x; })) / b.size();
        best = std::max(best, std::abs(fa - fb));
    }
    return best;
}

double direct_kappa(const std::vector<std::vector<double>>& m) {
    double N = m.size(), k = m[0].size(), r = 0;
    for (double x : m[0]) r += x;
    double pbar = 0;
    for (const auto& row : m) {
        double s = 0;
        for (double x : row) s += x * x;
        pbar += (s - r) / (r * (r - 1));
    }
    pbar /= N;
    double pe = 0;
    for (std::size_t j = 0; j < k; ++j) {
        double col = 0;
        for (const auto& row : m) col += row[j];
        pe += (col / (N * r)) * (col / (N * r));
    }
    return (pbar - pe) / (1 - pe);
}

}  // namespace

TEST_SUITE("stats") {

TEST_CASE("ecdf") {
    std::vector<double> s{1, 2, 3};
    std::vector<double> grid{0, 1.5, 3};
    auto pts = ecdf_export(s, grid);
    REQUIRE(pts.size() == 3);
    CHECK(pts[0].f == 0.0);
    CHECK(pts[1].f == doctest::Approx(1.0 / 3.0));
    CHECK(pts[2].f == 1.0);

    std::vector<double> one{5};
    Ecdf e(one);
    CHECK(e(4.999) == 0.0);
    CHECK(e(5.0) == 1.0);
    auto steps = ecdf_steps(one);
    REQUIRE(steps.size() == 1);
    CHECK(steps[0].x == 5.0);

    std::vector<double> below{-3, -2};
    for (auto p : ecdf_export(s, below)) CHECK(p.f == 0.0);
    CHECK_THROWS_AS(ecdf_export(std::vector<double>{}, grid), InvalidArgument);

    std::vector<double> ties{2, 1, 2, 3};
    auto st = ecdf_steps(ties);
    REQUIRE(st.size() == 3);
    CHECK(st[1].f == 0.75);
    CHECK(ecdf_to_csv(st).rfind("x,F\n", 0) == 0);
}

TEST_CASE("ks examples") {
    std::vector<double> a{1, 2, 3}, b{4, 5, 6};
    auto r = ks_two_sample(a, a);
    CHECK(r.d == 0.0);
    CHECK(r.p == 1.0);
    CHECK(ks_two_sample(a, b).d == 1.0);

    std::vector<double> c{1, 2}, d{1.5, 2.5};
    auto k = ks_two_sample(c, d);
    CHECK(k.d == brute_d(c, d));
    CHECK(k.d == 0.5);
    CHECK(k.exact);
    CHECK(k.p == doctest::Approx(1.0));

    CHECK_THROWS_AS(ks_two_sample(std::vector<double>{}, a), InvalidArgument);
}

TEST_CASE("ks properties") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0, 1);
    for (int t = 0; t < 30; ++t) {
        std::vector<double> a(5 + t % 7), b(4 + t % 5);
        for (auto& x : a) x = g(rng);
        for (auto& x : b) x = g(rng) + 0.5;
        auto ab = ks_two_sample(a, b), ba = ks_two_sample(b, a);
        CHECK(ab.d == ba.d);
        CHECK(ab.p == ba.p);
        CHECK(ab.d == doctest::Approx(brute_d(a, b)).epsilon(1e-15));
        auto ta = a, tb = b;
        for (auto& x : ta) x = std::exp(x);
        for (auto& x : tb) x = std::exp(x);
        CHECK(ks_two_sample(ta, tb).d == ab.d);
        CHECK(ab.p >= 0.0);
        CHECK(ab.p <= 1.0);
    }
    double prev = 2.0;
    for (std::uint64_t ds = 0; ds <= 48; ds += 4) {
        double p = ks_pvalue_exact(ds, 6, 8);
        CHECK(p <= prev + 1e-15);
        prev = p;
    }
    prev = 2.0;
    for (double dd = 0.0; dd <= 1.0; dd += 0.05) {
        double p = ks_pvalue_asymptotic(dd, 100, 120);
        CHECK(p <= prev);
        prev = p;
    }
    CHECK(kolmogorov_q(0.0) == 1.0);
    CHECK(kolmogorov_q(1.36) == doctest::Approx(0.049).epsilon(0.02));
}

TEST_CASE("ks method selection") {
    std::vector<double> a(200), b(200);
    for (int i = 0; i < 200; ++i) {
        a[i] = i;
        b[i] = i + 30.5;
    }
    auto r = ks_two_sample(a, b);
    CHECK_FALSE(r.exact);
    CHECK(r.d == doctest::Approx(0.155));
    CHECK(ks_two_sample(a, b, KsMethod::Exact).exact);
    std::vector<double> s{1, 2, 3};
    CHECK_FALSE(ks_two_sample(s, s, KsMethod::Asymptotic).exact);
}

TEST_CASE("fleiss kappa") {
    RatingsMatrix perfect(4, 3, {3, 0, 0, 0, 3, 0, 3, 0, 0, 0, 0, 3});
    CHECK(*fleiss_kappa(perfect) == 1.0);

    RatingsMatrix degenerate(3, 2, {2, 0, 2, 0, 2, 0});
    CHECK_FALSE(fleiss_kappa(degenerate));

    RatingsMatrix small(4, 2, {3, 0, 2, 1, 1, 2, 0, 3});
    CHECK(*fleiss_kappa(small) == doctest::Approx(direct_kappa({{3, 0}, {2, 1}, {1, 2}, {0, 3}})).epsilon(1e-14));
    CHECK(*fleiss_kappa(small) == doctest::Approx(1.0 / 3.0));

    RatingsMatrix permuted(4, 2, {0, 3, 1, 2, 2, 1, 3, 0});
    CHECK(*fleiss_kappa(permuted) == doctest::Approx(*fleiss_kappa(small)).epsilon(1e-15));

    CHECK_THROWS_AS(RatingsMatrix(2, 2, {1, 1, 2, 1}), InvalidArgument);
    CHECK_THROWS_AS(RatingsMatrix(2, 2, {1, 0, 1, 0}), InvalidArgument);
    CHECK_THROWS_AS(RatingsMatrix(2, 2, {1, 1, 1}), InvalidArgument);
}

}  // TEST_SUITE
