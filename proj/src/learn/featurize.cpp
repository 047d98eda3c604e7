#include <algorithm>
#include <cmath>

#include "killfie/error.hpp"
#include "killfie/hash.hpp"
#include "killfie/learn.hpp"

namespace killfie::learn {

namespace {

text::Vocabulary fit_or_empty(const std::vector<text::TokenStream>& docs, const text::VocabParams& params) {
    try {
        return text::fit_vocab(docs, params);
    } catch (const InvalidArgument&) {
        return {};
    }
}

class RawFitted final : public FittedFeaturizer {
public:
    const std::vector<RawRow>* rows = nullptr;
    BlockSet blocks{Block::Text};
    std::size_t dim = 0;
    std::vector<std::size_t> location_columns;
    text::Vocabulary text_vocab;
    text::Vocabulary caption_vocab;
    bool caption_indicator = false;
    std::vector<double> medians;
    std::vector<bool> location_indicator;

    std::vector<std::string> column_names() const {
        std::vector<std::string> names;
        if (blocks.has(Block::Text)) {
            for (const auto& e : text_vocab.entries()) names.push_back("text:tfidf:" + e.term);
            for (std::size_t i = 0; i < dim; ++i) names.push_back("text:emb:" + std::to_string(i));
        }
        if (blocks.has(Block::Image)) {
            for (const auto& e : caption_vocab.entries()) names.push_back("image:tfidf:" + e.term);
            for (std::size_t i = 0; i < dim; ++i) names.push_back("image:emb:" + std::to_string(i));
            if (caption_indicator) names.push_back("image:missing");
        }
        if (blocks.has(Block::Location)) {
            for (auto c : location_columns) names.emplace_back(geofeat::kLocationColumns[c]);
            for (std::size_t j = 0; j < location_columns.size(); ++j)
                if (location_indicator[j])
                    names.push_back(std::string(geofeat::kLocationColumns[location_columns[j]]) + "_missing");
        }
        return names;
    }

    FeatureMatrix transform(std::span<const std::size_t> idx) const override {
        FeatureMatrix out(idx.size(), column_names());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const RawRow& r = rows->at(idx[i]);
            out.row_ids[i] = r.id;
            double* dst = out.row(i);
            if (blocks.has(Block::Text)) {
                for (const auto& [k, v] : text::tfidf(r.text_tokens, text_vocab)) dst[k] = v;
                dst += text_vocab.size();
                std::copy_n(r.text_embedding.begin(), std::min(dim, r.text_embedding.size()), dst);
                dst += dim;
            }
            if (blocks.has(Block::Image)) {
                if (r.caption_tokens)
                    for (const auto& [k, v] : text::tfidf(*r.caption_tokens, caption_vocab)) dst[k] = v;
                dst += caption_vocab.size();
                if (r.caption_tokens)
                    std::copy_n(r.caption_embedding.begin(), std::min(dim, r.caption_embedding.size()), dst);
                dst += dim;
                if (caption_indicator) *dst++ = r.caption_tokens ? 0.0 : 1.0;
            }
            if (blocks.has(Block::Location)) {
                for (std::size_t j = 0; j < location_columns.size(); ++j) {
                    auto c = location_columns[j];
                    *dst++ = r.location.missing[c] ? medians[j] : r.location.values[c];
                }
                for (std::size_t j = 0; j < location_columns.size(); ++j)
                    if (location_indicator[j]) *dst++ = r.location.missing[location_columns[j]] ? 1.0 : 0.0;
            }
        }
        return out;
    }
};

}  // namespace

RawRow make_raw_row(const TweetRecord& tweet, const geofeat::LocationFeatureBlock& location,
                    const FeaturizeParams& params) {
    RawRow r;
    r.id = tweet.id;
    r.text_tokens = text::tokenize(tweet.text);
    text::HashingEmbedder text_embedder(params.embedding_dim, derive_seed(params.embedding_seed, "text"));
    text::HashingEmbedder image_embedder(params.embedding_dim, derive_seed(params.embedding_seed, "image"));
    r.text_embedding = text_embedder.embed(r.text_tokens);
    if (tweet.captions && !tweet.captions->empty()) {
        r.caption_tokens = text::tokenize(text::join_captions(*tweet.captions));
        r.caption_embedding = image_embedder.embed(*r.caption_tokens);
    } else {
        r.caption_embedding.assign(params.embedding_dim, 0.0);
    }
    r.location = location;
    return r;
}

RawFeatureSource::RawFeatureSource(std::shared_ptr<const std::vector<RawRow>> rows, BlockSet blocks,
                                   FeaturizeParams params, std::vector<std::size_t> location_columns)
    : rows_(std::move(rows)), blocks_(blocks), params_(params), location_columns_(std::move(location_columns)) {
    if (!rows_) throw InvalidArgument("feature source needs rows");
    for (auto c : location_columns_)
        if (c >= geofeat::kLocationSlots) throw InvalidArgument("location column index out of range");
}

std::unique_ptr<FittedFeaturizer> RawFeatureSource::fit(std::span<const std::size_t> train_rows,
                                                        Audit* audit) const {
    auto fitted = std::make_unique<RawFitted>();
    fitted->rows = rows_.get();
    fitted->blocks = blocks_;
    fitted->dim = params_.embedding_dim;
    fitted->location_columns = location_columns_;
    std::vector<std::string> ids;
    for (auto r : train_rows) ids.push_back(rows_->at(r).id);

    if (blocks_.has(Block::Text) || blocks_.has(Block::Image)) {
        if (audit) audit->record("vocab_fit", ids);
    }
    if (blocks_.has(Block::Text)) {
        std::vector<text::TokenStream> docs;
        for (auto r : train_rows) docs.push_back(rows_->at(r).text_tokens);
        fitted->text_vocab = fit_or_empty(docs, params_.vocab);
    }
    if (blocks_.has(Block::Image)) {
        std::vector<text::TokenStream> docs;
        for (auto r : train_rows) {
            const auto& c = rows_->at(r).caption_tokens;
            if (c) docs.push_back(*c);
            else fitted->caption_indicator = true;
        }
        fitted->caption_vocab = fit_or_empty(docs, params_.vocab);
    }
    if (blocks_.has(Block::Location)) {
        if (audit) audit->record("impute", ids);
        for (auto c : location_columns_) {
            std::vector<double> vals;
            for (auto r : train_rows) {
                const auto& loc = rows_->at(r).location;
                if (!loc.missing[c]) vals.push_back(loc.values[c]);
            }
            fitted->location_indicator.push_back(vals.size() != train_rows.size());
            double med = 0.0;
            if (!vals.empty()) {
                std::sort(vals.begin(), vals.end());
                std::size_t mid = vals.size() / 2;
                med = vals.size() % 2 ? vals[mid] : vals[mid - 1] + (vals[mid] - vals[mid - 1]) / 2.0;
            }
            fitted->medians.push_back(med);
        }
    }
    return fitted;
}

std::string_view to_string(RiskTask r) {
    switch (r) {
        case RiskTask::Water: return "water";
        case RiskTask::Height: return "height";
        case RiskTask::VehicleRoad: return "vehicle";
    }
    return "?";
}

std::optional<RiskTask> parse_risk_task(std::string_view s) {
    if (s == "water") return RiskTask::Water;
    if (s == "height") return RiskTask::Height;
    if (s == "vehicle" || s == "vehicle_road" || s == "road") return RiskTask::VehicleRoad;
    return std::nullopt;
}

bool risk_positive(const std::set<RiskReason>& reasons, RiskTask risk) {
    auto has = [&](RiskReason r) { return reasons.count(r) > 0; };
    switch (risk) {
        case RiskTask::Water: return has(RiskReason::Water) || has(RiskReason::HeightAndWater);
        case RiskTask::Height: return has(RiskReason::Height) || has(RiskReason::HeightAndWater);
        case RiskTask::VehicleRoad: return has(RiskReason::Vehicle) || has(RiskReason::Road);
    }
    return false;
}

std::vector<std::size_t> risk_location_columns(RiskTask risk) {
    switch (risk) {
        case RiskTask::Water: return {4, 5};
        case RiskTask::Height: return {0, 1, 2, 3};
        case RiskTask::VehicleRoad: return {6, 7};
    }
    return {};
}

RiskSelection risk_dataset(const std::map<std::string, ResolvedAnnotation>& annotations,
                           std::span<const std::string> row_ids, RiskTask risk) {
    RiskSelection out;
    out.location_columns = risk_location_columns(risk);
    std::size_t positives = 0;
    for (std::size_t i = 0; i < row_ids.size(); ++i) {
        auto it = annotations.find(row_ids[i]);
        if (it == annotations.end() || it->second.label == Label::Unsure) continue;
        int y = it->second.label == Label::Dangerous && risk_positive(it->second.risk_reasons, risk) ? 1 : 0;
        out.rows.push_back(i);
        out.labels.push_back(y);
        positives += static_cast<std::size_t>(y);
    }
    if (positives < kMinRiskPositives)
        throw DataError("risk '" + std::string(to_string(risk)) + "' has only " + std::to_string(positives) +
                        " positive samples (need at least " + std::to_string(kMinRiskPositives) +
                        "); insufficient to train a classifier");
    return out;
}

}  // namespace killfie::learn
