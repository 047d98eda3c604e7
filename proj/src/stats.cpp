#include "killfie/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "killfie/error.hpp"
#include "killfie/io.hpp"

namespace killfie::stats {

Ecdf::Ecdf(std::span<const double> samples) : sorted_(samples.begin(), samples.end()) {
    if (sorted_.empty()) throw InvalidArgument("ECDF of an empty sample");
    std::sort(sorted_.begin(), sorted_.end());
}

double Ecdf::operator()(double x) const {
    auto it = std::upper_bound(sorted_.begin(), sorted_.end(), x);
    return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
}

std::vector<EcdfPoint> ecdf_export(std::span<const double> samples, std::span<const double> grid) {
    Ecdf f(samples);
    std::vector<EcdfPoint> out;
    out.reserve(grid.size());
    for (double x : grid) out.push_back({x, f(x)});
    return out;
}

std::vector<EcdfPoint> ecdf_steps(std::span<const double> samples) {
    Ecdf f(samples);
    std::vector<double> xs = f.sorted();
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    return ecdf_export(samples, xs);
}

std::string ecdf_to_csv(const std::vector<EcdfPoint>& points) {
    std::string out = "x,F\n";
    for (const auto& p : points) out += io::format_double(p.x) + "," + io::format_double(p.f) + "\n";
    return out;
}

double kolmogorov_q(double lambda) {
    if (!(lambda > 0)) return 1.0;
    double sum = 0.0;
    for (int k = 1;; ++k) {
        double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1) ? term : -term;
        if (term < 1e-12) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

double ks_pvalue_asymptotic(double d, std::size_t n, std::size_t m) {
    double ne = static_cast<double>(n) * static_cast<double>(m) / static_cast<double>(n + m);
    double sq = std::sqrt(ne);
    return kolmogorov_q((sq + 0.12 + 0.11 / sq) * d);
}

double ks_pvalue_exact(std::uint64_t d_scaled, std::size_t n, std::size_t m) {
    if (d_scaled == 0) return 1.0;
    if (n > m) std::swap(n, m);
    // paths[j] holds the probability mass of reaching (i, j) while staying
    // strictly inside |i*m - j*n| < d_scaled. Each step is a draw without
    // replacement from the pooled sample, so mass is split by the remaining
    // counts; this keeps values in [0, 1] for any n, m.
    auto inside = [&](std::size_t i, std::size_t j) {
        auto a = static_cast<std::int64_t>(i * m), b = static_cast<std::int64_t>(j * n);
        return static_cast<std::uint64_t>(std::llabs(a - b)) < d_scaled;
    };
    std::vector<double> prev(m + 1, 0.0), cur(m + 1, 0.0);
    prev[0] = 1.0;
    for (std::size_t j = 1; j <= m; ++j) {
        double step = static_cast<double>(m - j + 1) / static_cast<double>(n + m - j + 1);
        prev[j] = inside(0, j) ? prev[j - 1] * step : 0.0;
    }
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 0; j <= m; ++j) {
            if (!inside(i, j)) {
                cur[j] = 0.0;
                continue;
            }
            std::size_t used = i + j;
            double remaining = static_cast<double>(n + m - used + 1);
            // From (i-1, j): take one of the n-i+1 remaining a-values.
            double from_a = prev[j] * static_cast<double>(n - i + 1) / remaining;
            // From (i, j-1): take one of the m-j+1 remaining b-values.
            double from_b = j > 0 ? cur[j - 1] * static_cast<double>(m - j + 1) / remaining : 0.0;
            cur[j] = from_a + from_b;
        }
        std::swap(prev, cur);
    }
    return std::clamp(1.0 - prev[m], 0.0, 1.0);
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b, KsMethod method) {
    if (a.empty() || b.empty()) throw InvalidArgument("ks_two_sample: both samples must be non-empty");
    std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    const std::size_t n = sa.size(), m = sb.size();
    // Track |i*m - j*n| in integers so D = max / (n*m) is exact.
    std::size_t i = 0, j = 0;
    std::uint64_t best = 0;
    while (i < n || j < m) {
        double x = (j >= m || (i < n && sa[i] <= sb[j])) ? sa[i] : sb[j];
        while (i < n && sa[i] <= x) ++i;
        while (j < m && sb[j] <= x) ++j;
        auto diff = static_cast<std::int64_t>(i * m) - static_cast<std::int64_t>(j * n);
        best = std::max(best, static_cast<std::uint64_t>(std::llabs(diff)));
    }
    KsResult r;
    r.n = n;
    r.m = m;
    r.d = static_cast<double>(best) / (static_cast<double>(n) * static_cast<double>(m));
    bool exact = method == KsMethod::Exact ||
                 (method == KsMethod::Auto && static_cast<std::uint64_t>(n) * m <= kExactKsLimit);
    r.exact = exact;
    r.p = exact ? ks_pvalue_exact(best, n, m) : ks_pvalue_asymptotic(r.d, n, m);
    return r;
}

RatingsMatrix::RatingsMatrix(std::size_t items, std::size_t categories, std::vector<std::uint32_t> counts)
    : items_(items), categories_(categories), counts_(std::move(counts)) {
    if (items == 0 || categories == 0) throw InvalidArgument("ratings matrix must be non-empty");
    if (counts_.size() != items * categories) throw InvalidArgument("ratings matrix size mismatch");
    for (std::size_t i = 0; i < items; ++i) {
        std::uint32_t row = 0;
        for (std::size_t j = 0; j < categories; ++j) row += at(i, j);
        if (i == 0) raters_ = row;
        else if (row != raters_)
            throw InvalidArgument("ratings matrix rows must all sum to the same number of raters");
    }
    if (raters_ < 2) throw InvalidArgument("Fleiss' kappa needs at least two raters per item");
}

std::optional<double> fleiss_kappa(const RatingsMatrix& m) {
    const double n_items = static_cast<double>(m.items());
    const double r = m.raters();
    double p_bar = 0.0;
    std::vector<double> col(m.categories(), 0.0);
    for (std::size_t i = 0; i < m.items(); ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < m.categories(); ++j) {
            double c = m.at(i, j);
            sq += c * c;
            col[j] += c;
        }
        p_bar += (sq - r) / (r * (r - 1.0));
    }
    p_bar /= n_items;
    double pe = 0.0;
    for (double c : col) {
        double pj = c / (n_items * r);
        pe += pj * pj;
    }
    if (pe >= 1.0) return std::nullopt;
    return (p_bar - pe) / (1.0 - pe);
}

}  // namespace killfie::stats
