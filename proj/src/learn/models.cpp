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

void check_training_input(const FeatureMatrix& X, const Labels& y) {
    if (X.rows() == 0) throw InvalidArgument("training set is empty");
    if (X.cols() == 0) throw InvalidArgument("training set has no feature columns");
    if (y.size() != X.rows()) throw InvalidArgument("label count does not match row count");
    for (int v : y)
        if (v != 0 && v != 1) throw InvalidArgument("labels must be 0 or 1");
    if (!X.complete()) throw DataError("training matrix has missing cells; impute first");
}

std::size_t features_per_split(MaxFeatures m, std::size_t p) {
    switch (m) {
        case MaxFeatures::Sqrt: return std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(double(p))));
        case MaxFeatures::Log2: return std::max<std::size_t>(1, static_cast<std::size_t>(std::log2(double(p))));
        case MaxFeatures::All: return p;
    }
    return p;
}

class TreeBuilder {
public:
    TreeBuilder(const FeatureMatrix& X, const Labels& y, int max_depth, int min_leaf, std::size_t mtry,
                std::mt19937_64* rng)
        : X_(X), y_(y), max_depth_(max_depth), min_leaf_(static_cast<std::size_t>(min_leaf)), mtry_(mtry),
          rng_(rng), features_(X.cols()) {
        std::iota(features_.begin(), features_.end(), 0);
    }

    std::vector<TreeNode> build(std::vector<std::size_t> idx) {
        idx_ = std::move(idx);
        nodes_.clear();
        grow(0, idx_.size(), 0);
        return std::move(nodes_);
    }

private:
    struct Split {
        int feature = -1;
        double threshold = 0.0;
        unsigned __int128 num = 0;
        unsigned __int128 den = 1;
    };

    int grow(std::size_t lo, std::size_t hi, int depth) {
        std::uint32_t n1 = 0;
        for (std::size_t i = lo; i < hi; ++i) n1 += static_cast<std::uint32_t>(y_[idx_[i]]);
        std::uint32_t n0 = static_cast<std::uint32_t>(hi - lo) - n1;
        int id = static_cast<int>(nodes_.size());
        nodes_.push_back({-1, 0.0, -1, -1, n1 > n0 ? 1 : 0, n0, n1});

        bool stop = n0 == 0 || n1 == 0 || (max_depth_ >= 0 && depth >= max_depth_) || hi - lo < 2 * min_leaf_;
        if (stop) return id;
        Split s = best_split(lo, hi, n0, n1);
        if (s.feature < 0) return id;

        auto mid = std::partition(idx_.begin() + static_cast<std::ptrdiff_t>(lo),
                                  idx_.begin() + static_cast<std::ptrdiff_t>(hi),
                                  [&](std::size_t r) { return X_.at(r, s.feature) <= s.threshold; });
        std::size_t cut = static_cast<std::size_t>(mid - idx_.begin());
        int left = grow(lo, cut, depth + 1);
        int right = grow(cut, hi, depth + 1);
        auto& node = nodes_[id];
        node.feature = s.feature;
        node.threshold = s.threshold;
        node.left = left;
        node.right = right;
        return id;
    }

    std::vector<std::size_t> candidate_features() {
        const std::size_t p = features_.size();
        if (mtry_ >= p || rng_ == nullptr) {
            std::vector<std::size_t> all(p);
            std::iota(all.begin(), all.end(), 0);
            return all;
        }
        for (std::size_t i = 0; i < mtry_; ++i) {
            std::size_t j = i + uniform_index(*rng_, p - i);
            std::swap(features_[i], features_[j]);
        }
        std::vector<std::size_t> pick(features_.begin(), features_.begin() + static_cast<std::ptrdiff_t>(mtry_));
        std::sort(pick.begin(), pick.end());
        return pick;
    }

    // Maximizing (l0^2+l1^2)/nl + (r0^2+r1^2)/nr is minimizing weighted Gini;
    // compared as exact rationals so ties are real ties.
    Split best_split(std::size_t lo, std::size_t hi, std::uint32_t n0, std::uint32_t n1) {
        Split best;
        const std::size_t n = hi - lo;
        buf_.resize(n);
        for (std::size_t f : candidate_features()) {
            for (std::size_t i = 0; i < n; ++i) {
                std::size_t r = idx_[lo + i];
                buf_[i] = {X_.at(r, f), y_[r]};
            }
            std::sort(buf_.begin(), buf_.end());
            if (buf_.front().first == buf_.back().first) continue;
            std::uint64_t l0 = 0, l1 = 0;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                (buf_[i].second ? l1 : l0) += 1;
                if (buf_[i].first == buf_[i + 1].first) continue;
                std::uint64_t nl = i + 1, nr = n - nl;
                if (nl < min_leaf_ || nr < min_leaf_) continue;
                std::uint64_t r0 = n0 - l0, r1 = n1 - l1;
                unsigned __int128 num = static_cast<unsigned __int128>(l0 * l0 + l1 * l1) * nr +
                                        static_cast<unsigned __int128>(r0 * r0 + r1 * r1) * nl;
                unsigned __int128 den = static_cast<unsigned __int128>(nl) * nr;
                if (best.feature < 0 || num * best.den > best.num * den) {
                    double a = buf_[i].first, b = buf_[i + 1].first;
                    double t = a + (b - a) / 2.0;
                    if (!(t >= a && t < b)) t = a;
                    best = {static_cast<int>(f), t, num, den};
                }
            }
        }
        return best;
    }

    const FeatureMatrix& X_;
    const Labels& y_;
    int max_depth_;
    std::size_t min_leaf_;
    std::size_t mtry_;
    std::mt19937_64* rng_;
    std::vector<std::size_t> features_;
    std::vector<std::size_t> idx_;
    std::vector<TreeNode> nodes_;
    std::vector<std::pair<double, int>> buf_;
};

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

std::shared_ptr<DecisionTree> fit_tree(const FeatureMatrix& X, const Labels& y, const TreeParams& p) {
    TreeBuilder b(X, y, p.max_depth, p.min_samples_leaf, X.cols(), nullptr);
    return std::make_shared<DecisionTree>(b.build(all_rows(X.rows())), X.cols());
}

std::shared_ptr<RandomForest> fit_forest(const FeatureMatrix& X, const Labels& y, const ForestParams& p,
                                         std::uint64_t seed) {
    const std::size_t n = X.rows();
    std::size_t mtry = features_per_split(p.max_features, X.cols());
    std::vector<std::shared_ptr<const DecisionTree>> trees;
    trees.reserve(static_cast<std::size_t>(p.n_trees));
    for (int t = 0; t < p.n_trees; ++t) {
        std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
        std::vector<std::size_t> idx;
        if (p.bootstrap) {
            idx.resize(n);
            for (auto& i : idx) i = uniform_index(rng, n);
        } else {
            idx = all_rows(n);
        }
        TreeBuilder b(X, y, p.max_depth, p.min_samples_leaf, mtry, &rng);
        trees.push_back(std::make_shared<DecisionTree>(b.build(std::move(idx)), X.cols()));
    }
    return std::make_shared<RandomForest>(std::move(trees), X.cols());
}

std::shared_ptr<Knn> fit_knn(const FeatureMatrix& X, const Labels& y, const KnnParams& p) {
    std::optional<Standardizer> st;
    std::vector<double> rows(X.rows() * X.cols());
    if (p.standardize) {
        st = Standardizer::fit(X);
        for (std::size_t r = 0; r < X.rows(); ++r) st->apply(X.row(r), rows.data() + r * X.cols());
    } else {
        for (std::size_t r = 0; r < X.rows(); ++r) std::copy_n(X.row(r), X.cols(), rows.data() + r * X.cols());
    }
    return std::make_shared<Knn>(p.k, std::move(st), std::move(rows), y, X.cols());
}

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

std::shared_ptr<LinearSvm> fit_svm(const FeatureMatrix& X, const Labels& y, const SvmParams& p, std::uint64_t seed) {
    const std::size_t n = X.rows(), d = X.cols() + 1;
    Standardizer st = Standardizer::fit(X);
    std::vector<double> Z(n * d);
    std::vector<double> ys(n);
    for (std::size_t r = 0; r < n; ++r) {
        st.apply(X.row(r), Z.data() + r * d);
        Z[r * d + d - 1] = 1.0;
        ys[r] = y[r] ? 1.0 : -1.0;
    }
    auto objective = [&](const std::vector<double>& w) {
        double hinge = 0.0;
        for (std::size_t r = 0; r < n; ++r) hinge += std::max(0.0, 1.0 - ys[r] * dot(w.data(), Z.data() + r * d, d));
        return 0.5 * p.lambda * dot(w.data(), w.data(), d) + hinge / static_cast<double>(n);
    };
    std::vector<double> w(d, 0.0), pocket = w;
    double best = objective(w);
    std::vector<double> history;
    std::vector<std::size_t> order = all_rows(n);
    std::uint64_t t = 0;
    for (int e = 0; e < p.epochs; ++e) {
        std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(e)));
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
        for (std::size_t r : order) {
            ++t;
            double eta = 1.0 / (p.lambda * static_cast<double>(t));
            const double* z = Z.data() + r * d;
            double margin = ys[r] * dot(w.data(), z, d);
            double shrink = 1.0 - eta * p.lambda;
            for (auto& v : w) v *= shrink;
            if (margin < 1.0)
                for (std::size_t j = 0; j < d; ++j) w[j] += eta * ys[r] * z[j];
        }
        double obj = objective(w);
        if (obj < best) {
            best = obj;
            pocket = w;
        }
        history.push_back(best);
    }
    double bias = pocket.back();
    pocket.pop_back();
    return std::make_shared<LinearSvm>(std::move(pocket), bias, std::move(st), std::move(history));
}

json tree_nodes_json(const std::vector<TreeNode>& nodes) {
    json arr = json::array();
    for (const auto& nd : nodes) arr.push_back({nd.feature, nd.threshold, nd.left, nd.right, nd.value, nd.n0, nd.n1});
    return arr;
}

std::string depth_text(int d) { return d == kUnlimitedDepth ? "none" : std::to_string(d); }

int depth_from_json(const json& j) {
    if (j.is_null() || (j.is_string() && j.get<std::string>() == "none")) return kUnlimitedDepth;
    return j.get<int>();
}

json depth_json(int d) { return d == kUnlimitedDepth ? json(nullptr) : json(d); }

}  // namespace

std::string_view to_string(Family f) {
    switch (f) {
        case Family::DecisionTree: return "decision_tree";
        case Family::RandomForest: return "random_forest";
        case Family::KNN: return "knn";
        case Family::LinearSVM: return "linear_svm";
    }
    return "?";
}

std::optional<Family> parse_family(std::string_view s) {
    if (s == "decision_tree" || s == "dt" || s == "tree") return Family::DecisionTree;
    if (s == "random_forest" || s == "rf" || s == "forest") return Family::RandomForest;
    if (s == "knn" || s == "nearest_neighbors") return Family::KNN;
    if (s == "linear_svm" || s == "svm") return Family::LinearSVM;
    return std::nullopt;
}

std::string_view to_string(MaxFeatures m) {
    switch (m) {
        case MaxFeatures::Sqrt: return "sqrt";
        case MaxFeatures::Log2: return "log2";
        case MaxFeatures::All: return "all";
    }
    return "?";
}

std::optional<MaxFeatures> parse_max_features(std::string_view s) {
    if (s == "sqrt") return MaxFeatures::Sqrt;
    if (s == "log2") return MaxFeatures::Log2;
    if (s == "all") return MaxFeatures::All;
    return std::nullopt;
}

ModelSpec::ModelSpec(Hyperparameters params, std::uint64_t seed) : params_(std::move(params)), seed_(seed) {
    auto bad = [](const std::string& m) { throw InvalidArgument("invalid hyperparameters: " + m); };
    auto check_depth = [&](int d) {
        if (d != kUnlimitedDepth && d < 1) bad("max_depth must be >= 1 or unlimited");
    };
    if (auto* t = std::get_if<TreeParams>(&params_)) {
        check_depth(t->max_depth);
        if (t->min_samples_leaf < 1) bad("min_samples_leaf must be >= 1");
    } else if (auto* f = std::get_if<ForestParams>(&params_)) {
        check_depth(f->max_depth);
        if (f->n_trees < 1) bad("n_trees must be >= 1");
        if (f->min_samples_leaf < 1) bad("min_samples_leaf must be >= 1");
    } else if (auto* k = std::get_if<KnnParams>(&params_)) {
        if (k->k < 1) bad("k must be >= 1");
    } else if (auto* s = std::get_if<SvmParams>(&params_)) {
        if (!(s->lambda > 0) || !std::isfinite(s->lambda)) bad("lambda must be positive");
        if (s->epochs < 1) bad("epochs must be >= 1");
    }
}

Family ModelSpec::family() const { return static_cast<Family>(params_.index()); }

std::string ModelSpec::label() const {
    std::string out(to_string(family()));
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, TreeParams>) {
                out += "(max_depth=" + depth_text(p.max_depth) + ",min_samples_leaf=" +
                       std::to_string(p.min_samples_leaf) + ")";
            } else if constexpr (std::is_same_v<T, ForestParams>) {
                out += "(n_trees=" + std::to_string(p.n_trees) + ",max_features=" +
                       std::string(to_string(p.max_features)) + ",bootstrap=" + (p.bootstrap ? "true" : "false") +
                       ",max_depth=" + depth_text(p.max_depth) + ")";
            } else if constexpr (std::is_same_v<T, KnnParams>) {
                out += "(k=" + std::to_string(p.k) + ",standardize=" + (p.standardize ? "true" : "false") + ")";
            } else {
                out += "(lambda=" + json(p.lambda).dump() + ",epochs=" + std::to_string(p.epochs) + ")";
            }
        },
        params_);
    return out;
}

json ModelSpec::to_json() const {
    json j;
    j["family"] = to_string(family());
    j["seed"] = seed_;
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, TreeParams>) {
                j["max_depth"] = depth_json(p.max_depth);
                j["min_samples_leaf"] = p.min_samples_leaf;
            } else if constexpr (std::is_same_v<T, ForestParams>) {
                j["n_trees"] = p.n_trees;
                j["max_features"] = to_string(p.max_features);
                j["bootstrap"] = p.bootstrap;
                j["max_depth"] = depth_json(p.max_depth);
                j["min_samples_leaf"] = p.min_samples_leaf;
            } else if constexpr (std::is_same_v<T, KnnParams>) {
                j["k"] = p.k;
                j["standardize"] = p.standardize;
            } else {
                j["lambda"] = p.lambda;
                j["epochs"] = p.epochs;
            }
        },
        params_);
    return j;
}

ModelSpec ModelSpec::from_json(const json& j) {
    try {
        auto fam = parse_family(j.at("family").get<std::string>());
        if (!fam) throw ConfigError("unknown model family '" + j.at("family").get<std::string>() + "'");
        std::uint64_t seed = j.value("seed", std::uint64_t{0});
        switch (*fam) {
            case Family::DecisionTree: {
                TreeParams p;
                if (j.contains("max_depth")) p.max_depth = depth_from_json(j["max_depth"]);
                p.min_samples_leaf = j.value("min_samples_leaf", p.min_samples_leaf);
                return ModelSpec(p, seed);
            }
            case Family::RandomForest: {
                ForestParams p;
                p.n_trees = j.value("n_trees", p.n_trees);
                if (j.contains("max_features")) {
                    auto m = parse_max_features(j["max_features"].get<std::string>());
                    if (!m) throw ConfigError("max_features must be sqrt, log2 or all");
                    p.max_features = *m;
                }
                p.bootstrap = j.value("bootstrap", p.bootstrap);
                if (j.contains("max_depth")) p.max_depth = depth_from_json(j["max_depth"]);
                p.min_samples_leaf = j.value("min_samples_leaf", p.min_samples_leaf);
                return ModelSpec(p, seed);
            }
            case Family::KNN: {
                KnnParams p;
                p.k = j.value("k", p.k);
                p.standardize = j.value("standardize", p.standardize);
                return ModelSpec(p, seed);
            }
            case Family::LinearSVM: {
                SvmParams p;
                p.lambda = j.value("lambda", p.lambda);
                p.epochs = j.value("epochs", p.epochs);
                return ModelSpec(p, seed);
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad model spec: ") + e.what());
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    throw ConfigError("bad model spec");
}

Labels Model::predict(const FeatureMatrix& X) const {
    if (X.cols() != n_features_)
        throw InvalidArgument("model expects " + std::to_string(n_features_) + " features, got " +
                              std::to_string(X.cols()));
    if (!X.complete()) throw DataError("prediction matrix has missing cells; impute first");
    Labels out(X.rows());
    for (std::size_t r = 0; r < X.rows(); ++r) out[r] = predict_row(X.row(r));
    return out;
}

DecisionTree::DecisionTree(std::vector<TreeNode> nodes, std::size_t n_features) : nodes_(std::move(nodes)) {
    if (nodes_.empty()) throw InvalidArgument("tree has no nodes");
    n_features_ = n_features;
}

int DecisionTree::predict_row(const double* x) const {
    int i = 0;
    while (nodes_[i].feature >= 0) i = x[nodes_[i].feature] <= nodes_[i].threshold ? nodes_[i].left : nodes_[i].right;
    return nodes_[i].value;
}

int DecisionTree::depth() const {
    std::vector<int> d(nodes_.size(), 0);
    int best = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        best = std::max(best, d[i]);
        if (nodes_[i].feature >= 0) d[nodes_[i].left] = d[nodes_[i].right] = d[i] + 1;
    }
    return best;
}

json DecisionTree::to_json() const {
    return {{"family", "decision_tree"}, {"n_features", n_features_}, {"nodes", tree_nodes_json(nodes_)}};
}

std::shared_ptr<DecisionTree> DecisionTree::from_json(const json& j) {
    std::vector<TreeNode> nodes;
    for (const auto& a : j.at("nodes"))
        nodes.push_back({a.at(0).get<int>(), a.at(1).get<double>(), a.at(2).get<int>(), a.at(3).get<int>(),
                         a.at(4).get<int>(), a.at(5).get<std::uint32_t>(), a.at(6).get<std::uint32_t>()});
    auto n = j.at("n_features").get<std::size_t>();
    for (const auto& nd : nodes) {
        bool leaf = nd.feature < 0;
        auto in_range = [&](int c) { return c > 0 && static_cast<std::size_t>(c) < nodes.size(); };
        if (!leaf && (static_cast<std::size_t>(nd.feature) >= n || !in_range(nd.left) || !in_range(nd.right)))
            throw DataError("corrupt tree node");
    }
    return std::make_shared<DecisionTree>(std::move(nodes), n);
}

RandomForest::RandomForest(std::vector<std::shared_ptr<const DecisionTree>> trees, std::size_t n_features)
    : trees_(std::move(trees)) {
    if (trees_.empty()) throw InvalidArgument("forest has no trees");
    n_features_ = n_features;
}

int RandomForest::predict_row(const double* x) const {
    std::size_t pos = 0;
    for (const auto& t : trees_) pos += static_cast<std::size_t>(t->predict_row(x));
    return 2 * pos > trees_.size() ? 1 : 0;
}

json RandomForest::to_json() const {
    json trees = json::array();
    for (const auto& t : trees_) trees.push_back(tree_nodes_json(t->nodes()));
    return {{"family", "random_forest"}, {"n_features", n_features_}, {"trees", trees}};
}

std::shared_ptr<RandomForest> RandomForest::from_json(const json& j) {
    auto n = j.at("n_features").get<std::size_t>();
    std::vector<std::shared_ptr<const DecisionTree>> trees;
    for (const auto& t : j.at("trees")) trees.push_back(DecisionTree::from_json({{"n_features", n}, {"nodes", t}}));
    return std::make_shared<RandomForest>(std::move(trees), n);
}

Standardizer Standardizer::fit(const FeatureMatrix& X) {
    Standardizer s;
    const std::size_t p = X.cols();
    s.mean.assign(p, 0.0);
    s.scale.assign(p, 0.0);
    const double n = static_cast<double>(X.rows());
    for (std::size_t r = 0; r < X.rows(); ++r)
        for (std::size_t c = 0; c < p; ++c) s.mean[c] += X.at(r, c);
    for (auto& m : s.mean) m /= n;
    for (std::size_t r = 0; r < X.rows(); ++r)
        for (std::size_t c = 0; c < p; ++c) {
            double d = X.at(r, c) - s.mean[c];
            s.scale[c] += d * d;
        }
    for (auto& v : s.scale) {
        v = std::sqrt(v / n);
        if (!(v > 1e-12)) v = 1.0;
    }
    return s;
}

void Standardizer::apply(const double* in, double* out) const {
    for (std::size_t c = 0; c < mean.size(); ++c) out[c] = (in[c] - mean[c]) / scale[c];
}

json Standardizer::to_json() const { return {{"mean", mean}, {"scale", scale}}; }

Standardizer Standardizer::from_json(const json& j) {
    Standardizer s;
    s.mean = j.at("mean").get<std::vector<double>>();
    s.scale = j.at("scale").get<std::vector<double>>();
    if (s.mean.size() != s.scale.size()) throw DataError("standardizer size mismatch");
    return s;
}

Knn::Knn(int k, std::optional<Standardizer> standardizer, std::vector<double> rows, Labels labels,
         std::size_t n_features)
    : k_(k), standardizer_(std::move(standardizer)), rows_(std::move(rows)), labels_(std::move(labels)) {
    n_features_ = n_features;
    if (rows_.size() != labels_.size() * n_features) throw InvalidArgument("knn training data size mismatch");
    if (labels_.empty()) throw InvalidArgument("knn needs at least one training row");
}

int Knn::predict_row(const double* x) const {
    std::vector<double> q(x, x + n_features_);
    if (standardizer_) standardizer_->apply(x, q.data());
    const std::size_t n = labels_.size();
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t r = 0; r < n; ++r) {
        const double* row = rows_.data() + r * n_features_;
        double s = 0.0;
        for (std::size_t c = 0; c < n_features_; ++c) {
            double d = row[c] - q[c];
            s += d * d;
        }
        dist[r] = {s, r};
    }
    std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(k_), n);
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k - 1), dist.end());
    std::size_t pos = 0;
    for (std::size_t i = 0; i < k; ++i) pos += static_cast<std::size_t>(labels_[dist[i].second]);
    return 2 * pos > k ? 1 : 0;
}

json Knn::to_json() const {
    return {{"family", "knn"},
            {"k", k_},
            {"n_features", n_features_},
            {"standardizer", standardizer_ ? standardizer_->to_json() : json(nullptr)},
            {"rows", rows_},
            {"labels", labels_}};
}

std::shared_ptr<Knn> Knn::from_json(const json& j) {
    std::optional<Standardizer> st;
    if (!j.at("standardizer").is_null()) st = Standardizer::from_json(j["standardizer"]);
    return std::make_shared<Knn>(j.at("k").get<int>(), std::move(st), j.at("rows").get<std::vector<double>>(),
                                 j.at("labels").get<Labels>(), j.at("n_features").get<std::size_t>());
}

LinearSvm::LinearSvm(std::vector<double> weights, double bias, Standardizer standardizer,
                     std::vector<double> objective)
    : weights_(std::move(weights)), bias_(bias), standardizer_(std::move(standardizer)),
      objective_(std::move(objective)) {
    n_features_ = weights_.size();
    if (standardizer_.mean.size() != n_features_) throw InvalidArgument("svm standardizer size mismatch");
}

double LinearSvm::decision(const double* x) const {
    double s = bias_;
    for (std::size_t c = 0; c < n_features_; ++c)
        s += weights_[c] * (x[c] - standardizer_.mean[c]) / standardizer_.scale[c];
    return s;
}

int LinearSvm::predict_row(const double* x) const { return decision(x) > 0.0 ? 1 : 0; }

json LinearSvm::to_json() const {
    return {{"family", "linear_svm"},
            {"weights", weights_},
            {"bias", bias_},
            {"standardizer", standardizer_.to_json()},
            {"objective", objective_}};
}

std::shared_ptr<LinearSvm> LinearSvm::from_json(const json& j) {
    return std::make_shared<LinearSvm>(j.at("weights").get<std::vector<double>>(), j.at("bias").get<double>(),
                                       Standardizer::from_json(j.at("standardizer")),
                                       j.value("objective", std::vector<double>{}));
}

TrainedModel train(const ModelSpec& spec, const FeatureMatrix& X, const Labels& y, Audit* audit) {
    check_training_input(X, y);
    switch (spec.family()) {
        case Family::DecisionTree: return fit_tree(X, y, std::get<TreeParams>(spec.params()));
        case Family::RandomForest: return fit_forest(X, y, std::get<ForestParams>(spec.params()), spec.seed());
        case Family::KNN: {
            const auto& p = std::get<KnnParams>(spec.params());
            if (audit && p.standardize) audit->record("standardize", X.row_ids);
            return fit_knn(X, y, p);
        }
        case Family::LinearSVM:
            if (audit) audit->record("standardize", X.row_ids);
            return fit_svm(X, y, std::get<SvmParams>(spec.params()), spec.seed());
    }
    throw InvalidArgument("unknown model family");
}

TrainedModel model_from_json(const json& j) {
    try {
        auto fam = parse_family(j.at("family").get<std::string>());
        if (!fam) throw DataError("unknown model family in model JSON");
        switch (*fam) {
            case Family::DecisionTree: return DecisionTree::from_json(j);
            case Family::RandomForest: return RandomForest::from_json(j);
            case Family::KNN: return Knn::from_json(j);
            case Family::LinearSVM: return LinearSvm::from_json(j);
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("bad model JSON: ") + e.what());
    } catch (const InvalidArgument& e) {
        throw DataError(std::string("bad model JSON: ") + e.what());
    }
    throw DataError("bad model JSON");
}

}  // namespace killfie::learn
