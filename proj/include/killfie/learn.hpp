#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "killfie/corpus.hpp"
#include "killfie/geofeat.hpp"
#include "killfie/text.hpp"

namespace killfie::learn {

/// Dense row-major matrix; NaN marks a missing cell.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    FeatureMatrix(std::size_t rows, std::vector<std::string> columns);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return columns_.size(); }
    const std::vector<std::string>& columns() const { return columns_; }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    const double* row(std::size_t r) const { return data_.data() + r * cols(); }
    double* row(std::size_t r) { return data_.data() + r * cols(); }

    bool missing(std::size_t r, std::size_t c) const;
    bool complete() const;

    /// One id per row; empty ids are allowed but defeat auditing.
    std::vector<std::string> row_ids;

    FeatureMatrix select_rows(std::span<const std::size_t> rows) const;
    FeatureMatrix select_columns(std::span<const std::size_t> cols) const;
    std::optional<std::size_t> column_index(std::string_view name) const;

    std::string to_csv() const;
    /// First column is `id`; empty cells parse as missing.
    static FeatureMatrix from_csv(std::string_view text);

private:
    std::size_t rows_ = 0;
    std::vector<std::string> columns_;
    std::vector<double> data_;
};

/// Binary labels: 1 is the positive (dangerous) class.
using Labels = std::vector<int>;

/// Records which row ids each leakage-sensitive stage touched, per fold.
class Audit {
public:
    void set_fold(int fold) { fold_ = fold; }
    int fold() const { return fold_; }
    void record(std::string_view stage, std::span<const std::string> row_ids);
    const std::set<std::string>& touched(int fold, std::string_view stage) const;
    std::set<std::string> stages() const;

private:
    int fold_ = -1;
    std::map<std::pair<int, std::string>, std::set<std::string>> touched_;
};

enum class Family { DecisionTree, RandomForest, KNN, LinearSVM };
enum class MaxFeatures { Sqrt, Log2, All };

std::string_view to_string(Family f);
std::optional<Family> parse_family(std::string_view s);
std::string_view to_string(MaxFeatures m);
std::optional<MaxFeatures> parse_max_features(std::string_view s);

inline constexpr int kUnlimitedDepth = -1;

struct TreeParams {
    int max_depth = kUnlimitedDepth;
    int min_samples_leaf = 1;
};

struct ForestParams {
    int n_trees = 100;
    MaxFeatures max_features = MaxFeatures::Sqrt;
    bool bootstrap = true;
    int max_depth = kUnlimitedDepth;
    int min_samples_leaf = 1;
};

struct KnnParams {
    int k = 5;
    bool standardize = true;
};

struct SvmParams {
    double lambda = 1e-3;
    int epochs = 50;
};

using Hyperparameters = std::variant<TreeParams, ForestParams, KnnParams, SvmParams>;

/// Hyperparameters are validated on construction; the family follows the variant.
class ModelSpec {
public:
    ModelSpec(Hyperparameters params, std::uint64_t seed = 0);

    Family family() const;
    const Hyperparameters& params() const { return params_; }
    std::uint64_t seed() const { return seed_; }
    ModelSpec with_seed(std::uint64_t seed) const { return ModelSpec(params_, seed); }

    std::string label() const;
    nlohmann::json to_json() const;
    static ModelSpec from_json(const nlohmann::json& j);

private:
    Hyperparameters params_;
    std::uint64_t seed_;
};

class Model {
public:
    virtual ~Model() = default;
    virtual Family family() const = 0;
    virtual int predict_row(const double* x) const = 0;
    virtual nlohmann::json to_json() const = 0;
    std::size_t n_features() const { return n_features_; }

    Labels predict(const FeatureMatrix& X) const;

protected:
    std::size_t n_features_ = 0;
};

using TrainedModel = std::shared_ptr<const Model>;

struct TreeNode {
    int feature = -1;  ///< -1 for a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int value = 0;
    std::uint32_t n0 = 0;
    std::uint32_t n1 = 0;
};

/// Binary CART with Gini impurity; `x <= threshold` goes left.
class DecisionTree final : public Model {
public:
    DecisionTree(std::vector<TreeNode> nodes, std::size_t n_features);
    Family family() const override { return Family::DecisionTree; }
    int predict_row(const double* x) const override;
    nlohmann::json to_json() const override;
    const std::vector<TreeNode>& nodes() const { return nodes_; }
    int depth() const;
    static std::shared_ptr<DecisionTree> from_json(const nlohmann::json& j);

private:
    std::vector<TreeNode> nodes_;
};

class RandomForest final : public Model {
public:
    explicit RandomForest(std::vector<std::shared_ptr<const DecisionTree>> trees, std::size_t n_features);
    Family family() const override { return Family::RandomForest; }
    int predict_row(const double* x) const override;
    nlohmann::json to_json() const override;
    const std::vector<std::shared_ptr<const DecisionTree>>& trees() const { return trees_; }
    static std::shared_ptr<RandomForest> from_json(const nlohmann::json& j);

private:
    std::vector<std::shared_ptr<const DecisionTree>> trees_;
};

struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;  ///< 1 for constant columns

    static Standardizer fit(const FeatureMatrix& X);
    void apply(const double* in, double* out) const;
    nlohmann::json to_json() const;
    static Standardizer from_json(const nlohmann::json& j);
};

class Knn final : public Model {
public:
    Knn(int k, std::optional<Standardizer> standardizer, std::vector<double> rows, Labels labels,
        std::size_t n_features);
    Family family() const override { return Family::KNN; }
    int predict_row(const double* x) const override;
    nlohmann::json to_json() const override;
    static std::shared_ptr<Knn> from_json(const nlohmann::json& j);

private:
    int k_;
    std::optional<Standardizer> standardizer_;
    std::vector<double> rows_;
    Labels labels_;
};

class LinearSvm final : public Model {
public:
    LinearSvm(std::vector<double> weights, double bias, Standardizer standardizer, std::vector<double> objective);
    Family family() const override { return Family::LinearSVM; }
    int predict_row(const double* x) const override;
    double decision(const double* x) const;
    nlohmann::json to_json() const override;
    const std::vector<double>& weights() const { return weights_; }
    double bias() const { return bias_; }
    /// Best primal objective seen at the end of each epoch.
    const std::vector<double>& objective_history() const { return objective_; }
    static std::shared_ptr<LinearSvm> from_json(const nlohmann::json& j);

private:
    std::vector<double> weights_;
    double bias_;
    Standardizer standardizer_;
    std::vector<double> objective_;
};

/// X must be complete and both label classes present for tree/forest/svm.
TrainedModel train(const ModelSpec& spec, const FeatureMatrix& X, const Labels& y, Audit* audit = nullptr);
TrainedModel model_from_json(const nlohmann::json& j);

// --- resampling and evaluation ---------------------------------------------

/// Indices of the balanced subset, in deterministically shuffled order.
std::vector<std::size_t> undersample(const Labels& y, std::uint64_t seed);

/// Folds partition [0, y.size()); each fold's indices are sorted.
std::vector<std::vector<std::size_t>> stratified_kfold(const Labels& y, int k, std::uint64_t seed);

struct ClassScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct EvalMetrics {
    double accuracy = 0.0;
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    ClassScores positive;  ///< headline precision/recall/f1
    ClassScores negative;
    ClassScores macro;
    ClassScores weighted;
    bool no_positive_predictions = false;

    nlohmann::json to_json() const;
};

EvalMetrics metrics(const Labels& y_true, const Labels& y_pred, int positive_class = 1);

struct GridResult {
    std::size_t best = 0;
    std::vector<double> scores;  ///< mean inner-CV accuracy per cell; 0 for failing cells
};

GridResult grid_search(std::span<const ModelSpec> grid, const FeatureMatrix& X, const Labels& y, int inner_k,
                       std::uint64_t seed, Audit* audit = nullptr);

/// Per-fold featurization fitted on training rows only.
class FittedFeaturizer {
public:
    virtual ~FittedFeaturizer() = default;
    virtual FeatureMatrix transform(std::span<const std::size_t> rows) const = 0;
};

class FeatureSource {
public:
    virtual ~FeatureSource() = default;
    virtual std::size_t rows() const = 0;
    virtual std::unique_ptr<FittedFeaturizer> fit(std::span<const std::size_t> train_rows, Audit* audit) const = 0;
};

/// Median imputation plus a `<col>_missing` indicator for every column with
/// a missing training cell.
class MatrixFeatureSource final : public FeatureSource {
public:
    explicit MatrixFeatureSource(FeatureMatrix X) : X_(std::move(X)) {}
    std::size_t rows() const override { return X_.rows(); }
    std::unique_ptr<FittedFeaturizer> fit(std::span<const std::size_t> train_rows, Audit* audit) const override;

private:
    FeatureMatrix X_;
};

struct CvOptions {
    int k = 10;
    int inner_k = 3;
    std::uint64_t seed = 0;
    bool undersample = true;
};

struct FoldResult {
    std::vector<std::string> test_ids;
    std::size_t chosen = 0;
    EvalMetrics metrics;
};

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;
};

struct CvReport {
    std::vector<FoldResult> folds;
    std::vector<std::string> grid_labels;
    MeanSd accuracy, precision, recall, f1;
    MeanSd macro_precision, macro_recall, macro_f1;
    MeanSd weighted_precision, weighted_recall, weighted_f1;

    nlohmann::json to_json() const;
};

/// Per fold: undersample the training rows, fit featurization on them, grid
/// search, refit the winner and score it on the untouched test fold.
CvReport cross_validate(std::span<const ModelSpec> grid, const FeatureSource& source, const Labels& y,
                        const CvOptions& opts, Audit* audit = nullptr);
CvReport cross_validate(const ModelSpec& spec, const FeatureMatrix& X, const Labels& y, const CvOptions& opts);

/// Grids with the given seed applied to every cell.
std::vector<ModelSpec> default_grid(Family family, std::uint64_t seed);

// --- feature blocks ----------------------------------------------------------

enum class Block : unsigned { Text = 1, Image = 2, Location = 4 };

/// Non-empty subset of blocks.
class BlockSet {
public:
    explicit BlockSet(std::initializer_list<Block> blocks);
    static BlockSet from_bits(unsigned bits);
    static BlockSet parse(std::string_view comma_list);

    bool has(Block b) const { return (bits_ & static_cast<unsigned>(b)) != 0; }
    unsigned bits() const { return bits_; }
    std::string name() const;        ///< e.g. "Text + Image"
    std::string short_name() const;  ///< e.g. "text,image"
    friend bool operator==(const BlockSet&, const BlockSet&) = default;

private:
    BlockSet() = default;
    unsigned bits_ = 0;
};

/// The seven non-empty configurations in report order.
std::vector<BlockSet> all_feature_configs();

std::string_view block_of_column(std::string_view column);
/// Indices of columns belonging to the requested blocks.
std::vector<std::size_t> feature_config(const FeatureMatrix& X, const BlockSet& blocks);

struct RawRow {
    std::string id;
    text::TokenStream text_tokens;
    std::optional<text::TokenStream> caption_tokens;
    text::DenseVector text_embedding;
    text::DenseVector caption_embedding;
    geofeat::LocationFeatureBlock location = geofeat::all_missing_block();
};

struct FeaturizeParams {
    text::VocabParams vocab{2, 500};
    std::size_t embedding_dim = 100;
    std::uint64_t embedding_seed = 0;
};

RawRow make_raw_row(const TweetRecord& tweet, const geofeat::LocationFeatureBlock& location,
                    const FeaturizeParams& params);

/// Builds per-fold text/caption vocabularies, location medians and indicator
/// columns from the training rows only.
class RawFeatureSource final : public FeatureSource {
public:
    RawFeatureSource(std::shared_ptr<const std::vector<RawRow>> rows, BlockSet blocks, FeaturizeParams params,
                     std::vector<std::size_t> location_columns = {0, 1, 2, 3, 4, 5, 6, 7});
    std::size_t rows() const override { return rows_->size(); }
    std::unique_ptr<FittedFeaturizer> fit(std::span<const std::size_t> train_rows, Audit* audit) const override;

private:
    std::shared_ptr<const std::vector<RawRow>> rows_;
    BlockSet blocks_;
    FeaturizeParams params_;
    std::vector<std::size_t> location_columns_;
};

enum class RiskTask { Water, Height, VehicleRoad };
std::string_view to_string(RiskTask r);
std::optional<RiskTask> parse_risk_task(std::string_view s);

bool risk_positive(const std::set<RiskReason>& reasons, RiskTask risk);
std::vector<std::size_t> risk_location_columns(RiskTask risk);

inline constexpr std::size_t kMinRiskPositives = 20;

struct RiskSelection {
    std::vector<std::size_t> rows;  ///< indices into the candidate rows
    Labels labels;
    std::vector<std::size_t> location_columns;
};

/// Rows with a decided (non-Unsure) annotation; label 1 when the reasons
/// include the risk. Throws DataError below kMinRiskPositives positives.
RiskSelection risk_dataset(const std::map<std::string, ResolvedAnnotation>& annotations,
                           std::span<const std::string> row_ids, RiskTask risk);

}  // namespace killfie::learn
