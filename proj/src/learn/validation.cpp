#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "killfie/error.hpp"
#include "killfie/hash.hpp"
#include "killfie/learn.hpp"

namespace killfie::learn {

using nlohmann::json;

namespace {

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
    return static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

std::array<std::vector<std::size_t>, 2> by_class(const Labels& y) {
    std::array<std::vector<std::size_t>, 2> out;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] != 0 && y[i] != 1) throw InvalidArgument("labels must be 0 or 1");
        out[static_cast<std::size_t>(y[i])].push_back(i);
    }
    return out;
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return lo + (hi - lo) / 2.0;
}

MeanSd summarize(const std::vector<FoldResult>& folds, double (*get)(const EvalMetrics&)) {
    MeanSd out;
    if (folds.empty()) return out;
    for (const auto& f : folds) out.mean += get(f.metrics);
    out.mean /= static_cast<double>(folds.size());
    if (folds.size() > 1) {
        double ss = 0.0;
        for (const auto& f : folds) ss += (get(f.metrics) - out.mean) * (get(f.metrics) - out.mean);
        out.sd = std::sqrt(ss / static_cast<double>(folds.size() - 1));
    }
    return out;
}

json mean_sd_json(const MeanSd& m) { return {{"mean", m.mean}, {"sd", m.sd}}; }

json class_scores_json(const ClassScores& s) {
    return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
}

class MatrixFitted final : public FittedFeaturizer {
public:
    MatrixFitted(const FeatureMatrix& X, std::vector<double> medians, std::vector<std::size_t> indicators)
        : X_(X), medians_(std::move(medians)), indicators_(std::move(indicators)) {}

    FeatureMatrix transform(std::span<const std::size_t> rows) const override {
        std::vector<std::string> names = X_.columns();
        for (auto c : indicators_) names.push_back(X_.columns()[c] + "_missing");
        FeatureMatrix out(rows.size(), std::move(names));
        const std::size_t p = X_.cols();
        for (std::size_t i = 0; i < rows.size(); ++i) {
            out.row_ids[i] = X_.row_ids[rows[i]];
            for (std::size_t c = 0; c < p; ++c) {
                double v = X_.at(rows[i], c);
                out.at(i, c) = std::isnan(v) ? medians_[c] : v;
            }
            for (std::size_t j = 0; j < indicators_.size(); ++j)
                out.at(i, p + j) = X_.missing(rows[i], indicators_[j]) ? 1.0 : 0.0;
        }
        return out;
    }

private:
    const FeatureMatrix& X_;
    std::vector<double> medians_;
    std::vector<std::size_t> indicators_;
};

}  // namespace

std::vector<std::size_t> undersample(const Labels& y, std::uint64_t seed) {
    auto classes = by_class(y);
    if (classes[0].empty() || classes[1].empty()) throw InvalidArgument("undersampling needs both classes present");
    std::size_t minority = classes[0].size() <= classes[1].size() ? 0 : 1;
    auto& keep = classes[minority];
    auto& major = classes[1 - minority];
    std::mt19937_64 rng(seed);
    std::size_t m = keep.size();
    for (std::size_t i = 0; i < m; ++i) std::swap(major[i], major[i + uniform_index(rng, major.size() - i)]);
    std::vector<std::size_t> out = keep;
    out.insert(out.end(), major.begin(), major.begin() + static_cast<std::ptrdiff_t>(m));
    shuffle(out, rng);
    return out;
}

std::vector<std::vector<std::size_t>> stratified_kfold(const Labels& y, int k, std::uint64_t seed) {
    if (k < 2) throw InvalidArgument("k must be at least 2");
    auto classes = by_class(y);
    for (int c = 0; c < 2; ++c)
        if (!classes[c].empty() && classes[c].size() < static_cast<std::size_t>(k))
            throw InvalidArgument("class " + std::to_string(c) + " has " + std::to_string(classes[c].size()) +
                                  " rows, fewer than k=" + std::to_string(k));
    std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
    std::size_t offset = 0;
    for (std::size_t c = 0; c < 2; ++c) {
        std::mt19937_64 rng(derive_seed(seed, c));
        shuffle(classes[c], rng);
        for (std::size_t i = 0; i < classes[c].size(); ++i) folds[(offset + i) % folds.size()].push_back(classes[c][i]);
        offset = (offset + classes[c].size()) % folds.size();
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

EvalMetrics metrics(const Labels& y_true, const Labels& y_pred, int positive_class) {
    if (y_true.size() != y_pred.size()) throw InvalidArgument("metrics: label vectors differ in length");
    if (positive_class != 0 && positive_class != 1) throw InvalidArgument("positive class must be 0 or 1");
    EvalMetrics m;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        bool t = y_true[i] == positive_class, p = y_pred[i] == positive_class;
        if (t && p) ++m.tp;
        else if (!t && p) ++m.fp;
        else if (t && !p) ++m.fn;
        else ++m.tn;
    }
    auto scores = [](double tp, double fp, double fn) {
        ClassScores s;
        s.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        s.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        s.f1 = s.precision > 0 && s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
        return s;
    };
    const double n = static_cast<double>(y_true.size());
    m.accuracy = n > 0 ? static_cast<double>(m.tp + m.tn) / n : 0.0;
    m.positive = scores(double(m.tp), double(m.fp), double(m.fn));
    m.negative = scores(double(m.tn), double(m.fn), double(m.fp));
    m.no_positive_predictions = m.tp + m.fp == 0;
    m.macro = {(m.positive.precision + m.negative.precision) / 2, (m.positive.recall + m.negative.recall) / 2,
               (m.positive.f1 + m.negative.f1) / 2};
    if (n > 0) {
        double wp = static_cast<double>(m.tp + m.fn) / n, wn = 1.0 - wp;
        m.weighted = {wp * m.positive.precision + wn * m.negative.precision,
                      wp * m.positive.recall + wn * m.negative.recall, wp * m.positive.f1 + wn * m.negative.f1};
    }
    return m;
}

json EvalMetrics::to_json() const {
    return {{"accuracy", accuracy},
            {"confusion", {{"tp", tp}, {"fp", fp}, {"fn", fn}, {"tn", tn}}},
            {"positive", class_scores_json(positive)},
            {"negative", class_scores_json(negative)},
            {"macro", class_scores_json(macro)},
            {"weighted", class_scores_json(weighted)},
            {"no_positive_predictions", no_positive_predictions}};
}

GridResult grid_search(std::span<const ModelSpec> grid, const FeatureMatrix& X, const Labels& y, int inner_k,
                       std::uint64_t seed, Audit* audit) {
    if (grid.empty()) throw InvalidArgument("grid is empty");
    if (audit) audit->record("grid_search", X.row_ids);
    GridResult out;
    out.scores.assign(grid.size(), 0.0);
    if (grid.size() == 1) return out;
    std::vector<std::vector<std::size_t>> folds;
    try {
        folds = stratified_kfold(y, inner_k, seed);
    } catch (const InvalidArgument&) {
        return out;
    }
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double total = 0.0;
        try {
            for (std::size_t f = 0; f < folds.size(); ++f) {
                std::vector<std::size_t> train_rows;
                for (std::size_t o = 0; o < folds.size(); ++o)
                    if (o != f) train_rows.insert(train_rows.end(), folds[o].begin(), folds[o].end());
                std::sort(train_rows.begin(), train_rows.end());
                FeatureMatrix Xtr = X.select_rows(train_rows), Xte = X.select_rows(folds[f]);
                Labels ytr, yte;
                for (auto r : train_rows) ytr.push_back(y[r]);
                for (auto r : folds[f]) yte.push_back(y[r]);
                auto model = train(grid[g], Xtr, ytr, audit);
                total += metrics(yte, model->predict(Xte)).accuracy;
            }
            out.scores[g] = total / static_cast<double>(folds.size());
        } catch (const Error&) {
            out.scores[g] = 0.0;
        }
        if (out.scores[g] > out.scores[out.best]) out.best = g;
    }
    return out;
}

std::unique_ptr<FittedFeaturizer> MatrixFeatureSource::fit(std::span<const std::size_t> train_rows,
                                                           Audit* audit) const {
    std::vector<double> medians(X_.cols(), 0.0);
    std::vector<std::size_t> indicators;
    std::vector<double> vals;
    std::vector<std::string> ids;
    for (auto r : train_rows) ids.push_back(X_.row_ids[r]);
    if (audit) audit->record("impute", ids);
    for (std::size_t c = 0; c < X_.cols(); ++c) {
        vals.clear();
        for (auto r : train_rows)
            if (!X_.missing(r, c)) vals.push_back(X_.at(r, c));
        medians[c] = median(vals);
        if (vals.size() != train_rows.size()) indicators.push_back(c);
    }
    return std::make_unique<MatrixFitted>(X_, std::move(medians), std::move(indicators));
}

json CvReport::to_json() const {
    json folds_json = json::array();
    for (const auto& f : folds)
        folds_json.push_back(
            {{"test_rows", f.test_ids.size()}, {"chosen", grid_labels.at(f.chosen)}, {"metrics", f.metrics.to_json()}});
    return {{"folds", folds_json},
            {"grid", grid_labels},
            {"accuracy", mean_sd_json(accuracy)},
            {"precision", mean_sd_json(precision)},
            {"recall", mean_sd_json(recall)},
            {"f1", mean_sd_json(f1)},
            {"macro", {{"precision", mean_sd_json(macro_precision)},
                       {"recall", mean_sd_json(macro_recall)},
                       {"f1", mean_sd_json(macro_f1)}}},
            {"weighted", {{"precision", mean_sd_json(weighted_precision)},
                          {"recall", mean_sd_json(weighted_recall)},
                          {"f1", mean_sd_json(weighted_f1)}}}};
}

CvReport cross_validate(std::span<const ModelSpec> grid, const FeatureSource& source, const Labels& y,
                        const CvOptions& opts, Audit* audit) {
    if (grid.empty()) throw InvalidArgument("grid is empty");
    if (y.size() != source.rows()) throw InvalidArgument("label count does not match row count");
    CvReport report;
    for (const auto& s : grid) report.grid_labels.push_back(s.label());
    auto folds = stratified_kfold(y, opts.k, derive_seed(opts.seed, "folds"));
    for (std::size_t f = 0; f < folds.size(); ++f) {
        if (audit) audit->set_fold(static_cast<int>(f));
        const auto& test = folds[f];
        std::vector<std::size_t> train_rows;
        {
            std::vector<bool> in_test(y.size(), false);
            for (auto r : test) in_test[r] = true;
            for (std::size_t r = 0; r < y.size(); ++r)
                if (!in_test[r]) train_rows.push_back(r);
        }
        if (opts.undersample) {
            Labels ytr;
            for (auto r : train_rows) ytr.push_back(y[r]);
            auto pick = undersample(ytr, derive_seed(derive_seed(opts.seed, "undersample"), f));
            std::vector<std::size_t> chosen;
            for (auto i : pick) chosen.push_back(train_rows[i]);
            train_rows = std::move(chosen);
        }
        auto fitted = source.fit(train_rows, audit);
        FeatureMatrix Xtr = fitted->transform(train_rows);
        FeatureMatrix Xte = fitted->transform(test);
        if (audit && opts.undersample) audit->record("undersample", Xtr.row_ids);
        Labels ytr, yte;
        for (auto r : train_rows) ytr.push_back(y[r]);
        for (auto r : test) yte.push_back(y[r]);

        auto gr = grid_search(grid, Xtr, ytr, opts.inner_k, derive_seed(derive_seed(opts.seed, "grid"), f), audit);
        auto model = train(grid[gr.best], Xtr, ytr, audit);
        FoldResult fr;
        fr.test_ids = Xte.row_ids;
        fr.chosen = gr.best;
        fr.metrics = metrics(yte, model->predict(Xte));
        report.folds.push_back(std::move(fr));
    }
    if (audit) audit->set_fold(-1);
    const auto& fs = report.folds;
    report.accuracy = summarize(fs, [](const EvalMetrics& m) { return m.accuracy; });
    report.precision = summarize(fs, [](const EvalMetrics& m) { return m.positive.precision; });
    report.recall = summarize(fs, [](const EvalMetrics& m) { return m.positive.recall; });
    report.f1 = summarize(fs, [](const EvalMetrics& m) { return m.positive.f1; });
    report.macro_precision = summarize(fs, [](const EvalMetrics& m) { return m.macro.precision; });
    report.macro_recall = summarize(fs, [](const EvalMetrics& m) { return m.macro.recall; });
    report.macro_f1 = summarize(fs, [](const EvalMetrics& m) { return m.macro.f1; });
    report.weighted_precision = summarize(fs, [](const EvalMetrics& m) { return m.weighted.precision; });
    report.weighted_recall = summarize(fs, [](const EvalMetrics& m) { return m.weighted.recall; });
    report.weighted_f1 = summarize(fs, [](const EvalMetrics& m) { return m.weighted.f1; });
    return report;
}

CvReport cross_validate(const ModelSpec& spec, const FeatureMatrix& X, const Labels& y, const CvOptions& opts) {
    MatrixFeatureSource source(X);
    return cross_validate(std::span<const ModelSpec>(&spec, 1), source, y, opts);
}

std::vector<ModelSpec> default_grid(Family family, std::uint64_t seed) {
    std::vector<ModelSpec> out;
    switch (family) {
        case Family::DecisionTree:
            for (int d : {3, 5, 10, kUnlimitedDepth}) out.emplace_back(TreeParams{d, 1}, seed);
            break;
        case Family::RandomForest:
            for (int n : {50, 100, 200})
                for (auto m : {MaxFeatures::Sqrt, MaxFeatures::Log2})
                    out.emplace_back(ForestParams{n, m, true, kUnlimitedDepth, 1}, seed);
            break;
        case Family::KNN:
            for (int k : {3, 5, 7, 11}) out.emplace_back(KnnParams{k, true}, seed);
            break;
        case Family::LinearSVM:
            for (double l : {1e-4, 1e-3, 1e-2, 1e-1}) out.emplace_back(SvmParams{l, 50}, seed);
            break;
    }
    return out;
}

}  // namespace killfie::learn
