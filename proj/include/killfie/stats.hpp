#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace killfie::stats {

/// Right-continuous empirical CDF: F(x) = #{samples <= x} / n.
class Ecdf {
public:
    explicit Ecdf(std::span<const double> samples);

    double operator()(double x) const;
    std::size_t size() const { return sorted_.size(); }
    const std::vector<double>& sorted() const { return sorted_; }

private:
    std::vector<double> sorted_;
};

struct EcdfPoint {
    double x;
    double f;
};

/// Evaluates the ECDF of `samples` on `grid`. Throws on empty samples.
std::vector<EcdfPoint> ecdf_export(std::span<const double> samples, std::span<const double> grid);
/// Steps at every distinct sample value.
std::vector<EcdfPoint> ecdf_steps(std::span<const double> samples);
std::string ecdf_to_csv(const std::vector<EcdfPoint>& points);

enum class KsMethod {
    Auto,        ///< exact when n*m <= kExactKsLimit, asymptotic otherwise
    Exact,       ///< permutation distribution of D (no-ties lattice-path count)
    Asymptotic,  ///< Kolmogorov series with the Stephens correction
};

inline constexpr std::uint64_t kExactKsLimit = 10000;

struct KsResult {
    double d = 0.0;
    double p = 1.0;
    std::size_t n = 0;
    std::size_t m = 0;
    bool exact = false;
};

/// Two-sample Kolmogorov-Smirnov test. D is exact (merge over the pooled
/// sorted values, evaluating both ECDFs at every distinct value).
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b, KsMethod method = KsMethod::Auto);

/// Q(lambda) = 2 * sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2), truncated once
/// a term drops below 1e-12, clamped to [0, 1].
double kolmogorov_q(double lambda);

/// Asymptotic p with lambda = (sqrt(ne) + 0.12 + 0.11/sqrt(ne)) * d.
double ks_pvalue_asymptotic(double d, std::size_t n, std::size_t m);

/// P(D >= d) under H0, counting monotone lattice paths that stay strictly
/// inside the band. `d_scaled` is d * n * m, an integer for an observed D.
double ks_pvalue_exact(std::uint64_t d_scaled, std::size_t n, std::size_t m);

/// N items x k categories of rater counts; every row sums to the same r >= 2.
class RatingsMatrix {
public:
    RatingsMatrix(std::size_t items, std::size_t categories, std::vector<std::uint32_t> counts);

    std::size_t items() const { return items_; }
    std::size_t categories() const { return categories_; }
    std::uint32_t raters() const { return raters_; }
    std::uint32_t at(std::size_t i, std::size_t j) const { return counts_[i * categories_ + j]; }

private:
    std::size_t items_;
    std::size_t categories_;
    std::uint32_t raters_ = 0;
    std::vector<std::uint32_t> counts_;
};

/// Fleiss' kappa; nullopt (undefined) when expected agreement is 1.
std::optional<double> fleiss_kappa(const RatingsMatrix& m);

}  // namespace killfie::stats
