#include "killfie/killfie.h"

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "killfie/corpus.hpp"
#include "killfie/error.hpp"
#include "killfie/geofeat.hpp"
#include "killfie/hash.hpp"
#include "killfie/io.hpp"
#include "killfie/learn.hpp"
#include "killfie/pipeline.hpp"
#include "killfie/stats.hpp"
#include "killfie/synth.hpp"
#include "killfie/text.hpp"

using nlohmann::json;
namespace fs = std::filesystem;
using namespace killfie;

struct kf_context {
    std::string last_error;
    std::uint64_t network_calls = 0;
};

struct kf_model {
    learn::TrainedModel model;
};

namespace {

kf_status status_of(Error::Kind k) { return static_cast<kf_status>(static_cast<int>(k)); }

template <class F>
kf_status guard(kf_context* ctx, F&& fn) {
    if (!ctx) return KF_ERR_INVALID_ARGUMENT;
    try {
        fn();
        ctx->last_error.clear();
        return KF_OK;
    } catch (const Error& e) {
        ctx->last_error = e.what();
        return status_of(e.kind());
    } catch (const json::exception& e) {
        ctx->last_error = std::string("bad request: ") + e.what();
        return KF_ERR_INVALID_ARGUMENT;
    } catch (const std::exception& e) {
        ctx->last_error = e.what();
        return KF_ERR_INTERNAL;
    } catch (...) {
        ctx->last_error = "unknown error";
        return KF_ERR_INTERNAL;
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

using Handler = json (*)(kf_context&, const json&);

kf_status call(kf_context* ctx, const char* request, char** response, Handler h) {
    if (response) *response = nullptr;
    return guard(ctx, [&] {
        if (!response) throw InvalidArgument("response pointer is null");
        json req = request && *request ? json::parse(request) : json::object();
        if (!req.is_object()) throw InvalidArgument("request must be a JSON object");
        *response = dup_string(h(*ctx, req).dump());
    });
}

std::string need_str(const json& r, const char* key) {
    if (!r.contains(key) || !r[key].is_string() || r[key].get<std::string>().empty())
        throw InvalidArgument(std::string("missing required field '") + key + "'");
    return r[key].get<std::string>();
}

std::string opt_str(const json& r, const char* key, const std::string& def = "") {
    return r.contains(key) && r[key].is_string() ? r[key].get<std::string>() : def;
}

std::vector<std::string> str_list(const json& r, const char* key) {
    std::vector<std::string> out;
    if (!r.contains(key)) return out;
    if (r[key].is_string()) out.push_back(r[key].get<std::string>());
    else
        for (const auto& v : r[key]) out.push_back(v.get<std::string>());
    return out;
}

// --- tabular inputs ---------------------------------------------------------

double parse_cell(const std::string& cell, const std::string& where) {
    if (cell.empty()) return std::numeric_limits<double>::quiet_NaN();
    double v = 0;
    auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || p != cell.data() + cell.size()) throw DataError(where + ": bad number '" + cell + "'");
    return v;
}

/// First column is the row id; a `missing_mask` column is ignored.
learn::FeatureMatrix read_features(const std::string& path) {
    auto rows = io::parse_csv(io::read_file(path));
    if (rows.empty() || rows[0].fields.size() < 2) throw DataError(path + ": feature CSV needs an id and a column");
    const auto& header = rows[0].fields;
    std::vector<std::size_t> keep;
    std::vector<std::string> names;
    for (std::size_t c = 1; c < header.size(); ++c) {
        if (header[c] == "missing_mask") continue;
        keep.push_back(c);
        names.push_back(header[c]);
    }
    learn::FeatureMatrix X(rows.size() - 1, names);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r].fields;
        std::string where = path + ":" + std::to_string(rows[r].line);
        if (f.size() != header.size()) throw DataError(where + ": expected " + std::to_string(header.size()) + " fields");
        X.row_ids[r - 1] = f[0];
        for (std::size_t j = 0; j < keep.size(); ++j) X.at(r - 1, j) = parse_cell(f[keep[j]], where);
    }
    return X;
}

/// Joins feature files on the id column, in the row order of the first file.
/// Ids absent from a later file get missing cells for its columns.
learn::FeatureMatrix load_features(const json& req) {
    auto paths = str_list(req, "features");
    if (paths.empty()) throw InvalidArgument("missing required field 'features'");
    auto base = read_features(paths[0]);
    for (std::size_t i = 1; i < paths.size(); ++i) {
        auto extra = read_features(paths[i]);
        std::map<std::string, std::size_t> at;
        for (std::size_t r = 0; r < extra.rows(); ++r) at[extra.row_ids[r]] = r;
        auto cols = base.columns();
        for (const auto& c : extra.columns()) {
            if (std::find(cols.begin(), cols.end(), c) != cols.end()) throw DataError("duplicate feature column '" + c + "'");
            cols.push_back(c);
        }
        learn::FeatureMatrix joined(base.rows(), cols);
        joined.row_ids = base.row_ids;
        for (std::size_t r = 0; r < base.rows(); ++r) {
            std::copy(base.row(r), base.row(r) + base.cols(), joined.row(r));
            auto it = at.find(base.row_ids[r]);
            for (std::size_t c = 0; c < extra.cols(); ++c)
                joined.at(r, base.cols() + c) =
                    it == at.end() ? std::numeric_limits<double>::quiet_NaN() : extra.at(it->second, c);
        }
        base = std::move(joined);
    }
    return base;
}

std::optional<int> parse_label_cell(const std::string& s) {
    if (s == "1" || s == "Dangerous" || s == "dangerous") return 1;
    if (s == "0" || s == "NotDangerous" || s == "not_dangerous") return 0;
    return std::nullopt;
}

/// Either `id,label` (0/1 or Dangerous/NotDangerous; Unsure rows skipped) or
/// an annotations file, detected by its `annotator_id` column.
std::map<std::string, int> read_labels(const std::string& path) {
    std::string text = io::read_file(path);
    auto rows = io::parse_csv(text);
    std::map<std::string, int> out;
    if (rows.empty()) return out;
    const auto& header = rows[0].fields;
    if (std::find(header.begin(), header.end(), "annotator_id") != header.end()) {
        for (const auto& [id, a] : resolve_annotations(parse_annotations_csv(text))) {
            if (a.label == Label::Dangerous) out[id] = 1;
            else if (a.label == Label::NotDangerous) out[id] = 0;
        }
        return out;
    }
    if (header.size() < 2) throw DataError(path + ": labels CSV needs id and label columns");
    std::size_t lc = 1;
    for (std::size_t c = 1; c < header.size(); ++c)
        if (header[c] == "label") lc = c;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r].fields;
        if (f.size() != header.size())
            throw DataError(path + ":" + std::to_string(rows[r].line) + ": expected " + std::to_string(header.size()) +
                            " fields");
        if (f[lc] == "Unsure" || f[lc].empty()) continue;
        auto y = parse_label_cell(f[lc]);
        if (!y) throw DataError(path + ":" + std::to_string(rows[r].line) + ": bad label '" + f[lc] + "'");
        out[f[0]] = *y;
    }
    return out;
}

struct Labeled {
    learn::FeatureMatrix X;
    learn::Labels y;
};

Labeled align(const learn::FeatureMatrix& X, const std::map<std::string, int>& labels) {
    std::vector<std::size_t> rows;
    learn::Labels y;
    for (std::size_t r = 0; r < X.rows(); ++r) {
        auto it = labels.find(X.row_ids[r]);
        if (it == labels.end()) continue;
        rows.push_back(r);
        y.push_back(it->second);
    }
    if (rows.empty()) throw DataError("no feature row has a label");
    return {X.select_rows(rows), std::move(y)};
}

learn::FeatureMatrix select_blocks(const learn::FeatureMatrix& X, const std::string& blocks) {
    auto cols = learn::feature_config(X, learn::BlockSet::parse(blocks));
    if (cols.empty()) throw DataError("no feature columns belong to blocks '" + blocks + "'");
    return X.select_columns(cols);
}

// --- learning helpers ---------------------------------------------------------

std::vector<learn::Family> families_of(const json& req) {
    auto names = str_list(req, "families");
    if (names.empty()) names = str_list(req, "family");
    std::vector<learn::Family> out;
    for (const auto& n : names) {
        auto f = learn::parse_family(n);
        if (!f) throw InvalidArgument("unknown model family '" + n + "'");
        out.push_back(*f);
    }
    if (out.empty())
        out = {learn::Family::LinearSVM, learn::Family::RandomForest, learn::Family::KNN, learn::Family::DecisionTree};
    return out;
}

std::vector<learn::ModelSpec> grid_of(const json& req, learn::Family fam, std::uint64_t seed) {
    if (req.contains("params")) {
        json p = req["params"];
        p["family"] = learn::to_string(fam);
        p["seed"] = seed;
        return {learn::ModelSpec::from_json(p)};
    }
    std::string g = opt_str(req, "grid", "default");
    if (g == "default") return learn::default_grid(fam, seed);
    if (g == "single") return {learn::ModelSpec::from_json({{"family", learn::to_string(fam)}, {"seed", seed}})};
    throw InvalidArgument("grid must be default or single");
}

learn::CvOptions cv_options(const json& req) {
    learn::CvOptions o;
    o.k = req.value("k", o.k);
    o.inner_k = req.value("inner_k", o.inner_k);
    o.seed = req.value("seed", std::uint64_t{0});
    o.undersample = req.value("undersample", o.undersample);
    if (o.k < 2 || o.inner_k < 2) throw InvalidArgument("k and inner_k must be at least 2");
    return o;
}

std::string_view table4_family_name(learn::Family f) {
    switch (f) {
        case learn::Family::LinearSVM: return "SVM";
        case learn::Family::RandomForest: return "RandomForest";
        case learn::Family::KNN: return "Nearest Neighbors";
        case learn::Family::DecisionTree: return "Decision Tree";
    }
    return "?";
}

std::string_view technique_name(learn::Family f) {
    switch (f) {
        case learn::Family::LinearSVM: return "SVM";
        case learn::Family::RandomForest: return "Random Forest";
        case learn::Family::KNN: return "Nearest Neighbors";
        case learn::Family::DecisionTree: return "Decision Tree";
    }
    return "?";
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    std::size_t mid = v.size() / 2;
    return v.size() % 2 ? v[mid] : v[mid - 1] + (v[mid] - v[mid - 1]) / 2.0;
}

/// Median imputation with `<col>_missing` indicators, persisted with models.
struct Imputer {
    std::vector<std::string> inputs;
    std::vector<double> medians;
    std::vector<std::size_t> indicators;

    static Imputer fit(const learn::FeatureMatrix& X) {
        Imputer im;
        im.inputs = X.columns();
        for (std::size_t c = 0; c < X.cols(); ++c) {
            std::vector<double> vals;
            for (std::size_t r = 0; r < X.rows(); ++r)
                if (!X.missing(r, c)) vals.push_back(X.at(r, c));
            im.medians.push_back(median_of(vals));
            if (vals.size() != X.rows()) im.indicators.push_back(c);
        }
        return im;
    }

    std::vector<std::string> columns() const {
        auto out = inputs;
        for (auto c : indicators) out.push_back(inputs[c] + "_missing");
        return out;
    }

    learn::FeatureMatrix apply(const learn::FeatureMatrix& X) const {
        std::vector<std::size_t> src;
        for (const auto& name : inputs) {
            auto c = X.column_index(name);
            if (!c) throw DataError("feature column '" + name + "' is missing");
            src.push_back(*c);
        }
        learn::FeatureMatrix out(X.rows(), columns());
        out.row_ids = X.row_ids;
        for (std::size_t r = 0; r < X.rows(); ++r) {
            for (std::size_t j = 0; j < src.size(); ++j)
                out.at(r, j) = X.missing(r, src[j]) ? medians[j] : X.at(r, src[j]);
            for (std::size_t i = 0; i < indicators.size(); ++i)
                out.at(r, src.size() + i) = X.missing(r, src[indicators[i]]) ? 1.0 : 0.0;
        }
        return out;
    }

    json to_json() const { return {{"inputs", inputs}, {"medians", medians}, {"indicators", indicators}}; }
    static Imputer from_json(const json& j) {
        Imputer im;
        im.inputs = j.at("inputs").get<std::vector<std::string>>();
        im.medians = j.at("medians").get<std::vector<double>>();
        im.indicators = j.at("indicators").get<std::vector<std::size_t>>();
        if (im.medians.size() != im.inputs.size()) throw DataError("model imputer is inconsistent");
        for (auto c : im.indicators)
            if (c >= im.inputs.size()) throw DataError("model imputer is inconsistent");
        return im;
    }
};

struct ModelFile {
    json spec;
    Imputer imputer;
    learn::TrainedModel model;
};

ModelFile load_model_file(const std::string& path) {
    json j;
    try {
        j = json::parse(io::read_file(path));
    } catch (const json::exception& e) {
        throw DataError("cannot parse model " + path + ": " + e.what());
    }
    try {
        return {j.at("spec"), Imputer::from_json(j.at("imputer")), learn::model_from_json(j.at("model"))};
    } catch (const json::exception& e) {
        throw DataError("malformed model " + path + ": " + e.what());
    }
}

// --- config helpers -------------------------------------------------------------

pipeline::PipelineConfig load_config(const json& req) {
    auto cfg = pipeline::PipelineConfig::load(need_str(req, "config"));
    if (req.contains("seed")) cfg.seed = req["seed"].get<std::uint64_t>();
    if (req.contains("providers")) {
        auto m = req["providers"].get<std::string>();
        if (m == "offline") cfg.providers.mode = pipeline::ProviderMode::Offline;
        else if (m == "http") cfg.providers.mode = pipeline::ProviderMode::Http;
        else throw ConfigError("providers must be offline or http");
    }
    if (req.contains("cache_dir")) cfg.cache_dir = req["cache_dir"].get<std::string>();
    if (req.contains("output_dir")) cfg.output_dir = req["output_dir"].get<std::string>();
    if (req.contains("rate_limit")) {
        cfg.providers.rate_limit = req["rate_limit"].get<double>();
        if (!(cfg.providers.rate_limit > 0)) throw ConfigError("rate limit must be positive");
    }
    return cfg;
}

/// Counts HTTP traffic into the context, also when the wrapped call throws.
struct TrafficScope {
    kf_context& ctx;
    std::shared_ptr<geo::CountingTransport> transport;

    TrafficScope(kf_context& c, const pipeline::PipelineConfig& cfg)
        : ctx(c),
          transport(std::make_shared<geo::CountingTransport>(
              std::make_shared<geo::HttpTransport>(std::chrono::milliseconds(cfg.providers.timeout_ms)))) {}
    ~TrafficScope() { ctx.network_calls += transport->calls(); }
};

json corpus_stats_json(const CorpusStats& s) {
    auto ts = [](const std::optional<Timestamp>& t) { return t ? json(format_timestamp(*t)) : json(nullptr); };
    return {{"total_tweets", s.total_tweets},
            {"total_users", s.total_users},
            {"tweets_with_images", s.tweets_with_images},
            {"tweets_with_geo", s.tweets_with_geo},
            {"tweets_with_text_besides_hashtags", s.tweets_with_text_besides_hashtags},
            {"first_tweet_at", ts(s.first_tweet_at)},
            {"last_tweet_at", ts(s.last_tweet_at)}};
}

CorpusFormat corpus_format(const json& req) {
    auto f = opt_str(req, "format", "jsonl");
    if (f == "jsonl") return CorpusFormat::Jsonl;
    if (f == "csv") return CorpusFormat::Csv;
    throw InvalidArgument("format must be jsonl or csv");
}

// --- handlers -------------------------------------------------------------------

json h_ingest(kf_context&, const json& req) {
    auto loaded = load_tweets(need_str(req, "tweets"), corpus_format(req));
    json rejects = json::array();
    std::string csv = io::csv_line({"line", "id", "reason"});
    for (const auto& r : loaded.rejects) {
        rejects.push_back({{"line", r.line}, {"id", r.id}, {"reason", r.reason}});
        csv += io::csv_line({std::to_string(r.line), r.id, r.reason});
    }
    json out = {{"accepted", loaded.corpus.size()},
                {"rejected", loaded.rejects.size()},
                {"rejects", rejects},
                {"stats", corpus_stats_json(corpus_stats(loaded.corpus))}};
    if (auto path = opt_str(req, "out"); !path.empty()) {
        save_tweets(loaded.corpus, path);
        auto rpath = opt_str(req, "rejects", path + ".rejects.csv");
        io::write_file(rpath, csv);
        out["out"] = path;
        out["rejects_file"] = rpath;
    }
    return out;
}

json h_incident_stats(kf_context&, const json& req) {
    auto set = load_incidents(need_str(req, "incidents"));
    json full = pipeline::incident_stats_json(set);
    auto by = opt_str(req, "by");
    if (by.empty()) return full;
    if (!parse_incident_dimension(by)) throw InvalidArgument("--by must be country, reason, group_size, gender or age_band");
    return {{"by", by},
            {"rows", full[by]},
            {"total_deaths", full["total_deaths"]},
            {"incidents", full["incidents"]},
            {"group_incidents", full["group_incidents"]}};
}

json h_geofeat(kf_context& ctx, const json& req) {
    auto cfg = load_config(req);
    auto corpus = load_tweets(need_str(req, "corpus"), corpus_format(req)).corpus;
    auto out_path = need_str(req, "out");
    std::optional<fs::path> cache_dir;
    if (!cfg.cache_dir.empty()) cache_dir = cfg.cache_dir;
    geo::ProviderCache cache(cache_dir);
    TrafficScope traffic(ctx, cfg);
    std::optional<geo::ProviderSet> providers;
    std::vector<std::pair<std::string, geofeat::LocationFeatureBlock>> rows;
    std::size_t geotagged = 0, missing = 0;
    for (const auto& t : corpus.records()) {
        if (!t.geo) {
            rows.emplace_back(t.id, geofeat::all_missing_block());
            missing += geofeat::kLocationSlots;
            continue;
        }
        if (!providers) providers = pipeline::make_providers(cfg, traffic.transport);
        ++geotagged;
        auto block = geofeat::location_feature_vector(*t.geo, *providers, cache, cfg.location,
                                                      geofeat::tweet_seed(cfg.seed, t.id));
        missing += static_cast<std::size_t>(std::count(block.missing.begin(), block.missing.end(), true));
        rows.emplace_back(t.id, block);
    }
    io::write_file(out_path, geofeat::location_features_to_csv(rows));
    return {{"rows", rows.size()},
            {"geotagged", geotagged},
            {"missing_cells", missing},
            {"cache_hits", cache.hits()},
            {"cache_misses", cache.misses()},
            {"network_calls", traffic.transport->calls()},
            {"out", out_path}};
}

json h_textfeat(kf_context&, const json& req) {
    auto corpus = load_tweets(need_str(req, "corpus"), corpus_format(req)).corpus;
    auto out_path = need_str(req, "out");
    auto field = opt_str(req, "field", "text");
    if (field != "text" && field != "captions") throw InvalidArgument("field must be text or captions");
    const std::string prefix = field == "text" ? "text" : "image";

    std::vector<std::string> ids;
    std::vector<std::optional<text::TokenStream>> docs;
    std::vector<text::TokenStream> present;
    for (const auto& t : corpus.records()) {
        ids.push_back(t.id);
        if (field == "text") docs.emplace_back(text::tokenize(t.text));
        else if (t.captions) docs.emplace_back(text::tokenize(text::join_captions(*t.captions)));
        else docs.emplace_back(std::nullopt);
        if (docs.back()) present.push_back(*docs.back());
    }

    text::Vocabulary vocab;
    json out = json::object();
    if (req.value("fit_vocab", false)) {
        text::VocabParams vp;
        vp.min_df = req.value("min_df", vp.min_df);
        vp.max_features = req.value("max_features", vp.max_features);
        vocab = text::fit_vocab(present, vp);
        auto vpath = opt_str(req, "vocab_out", out_path + ".vocab.json");
        io::write_file(vpath, vocab.to_json().dump(1) + "\n");
        out["vocab_out"] = vpath;
    } else if (auto vpath = opt_str(req, "vocab"); !vpath.empty()) {
        try {
            vocab = text::Vocabulary::from_json(json::parse(io::read_file(vpath)));
        } catch (const json::exception& e) {
            throw DataError("cannot parse vocabulary " + vpath + ": " + e.what());
        }
    } else {
        throw InvalidArgument("textfeat needs fit_vocab or a vocab path");
    }

    std::size_t dim = req.value("embedding_dim", std::size_t{100});
    if (dim < 2) throw InvalidArgument("embedding_dim must be at least 2");
    text::HashingEmbedder embedder(dim, req.value("seed", std::uint64_t{0}));
    std::string format = opt_str(req, "vector_format", "sparse");
    std::size_t missing = 0;

    if (format == "sparse") {
        std::string body;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            body += ids[i] + "\t";
            if (docs[i]) body += text::sparse_to_text(text::tfidf(*docs[i], vocab));
            else {
                body += "missing";
                ++missing;
            }
            body += "\n";
        }
        io::write_file(out_path, body);
    } else if (format == "dense") {
        std::vector<std::string> cols;
        for (const auto& e : vocab.entries()) cols.push_back(prefix + ":tfidf:" + e.term);
        for (std::size_t d = 0; d < dim; ++d) cols.push_back(prefix + ":emb:" + std::to_string(d));
        if (field == "captions") cols.push_back("image:missing");
        learn::FeatureMatrix X(ids.size(), cols);
        X.row_ids = ids;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            double* dst = X.row(i);
            std::fill(dst, dst + cols.size(), 0.0);
            if (!docs[i]) {
                ++missing;
                if (field == "captions") dst[cols.size() - 1] = 1.0;
                continue;
            }
            for (const auto& [k, v] : text::tfidf(*docs[i], vocab)) dst[k] = v;
            auto e = embedder.embed(*docs[i]);
            std::copy(e.begin(), e.end(), dst + vocab.size());
        }
        io::write_file(out_path, X.to_csv());
    } else {
        throw InvalidArgument("vector_format must be sparse or dense");
    }

    if (auto epath = opt_str(req, "embeddings"); !epath.empty()) {
        std::vector<std::string> header{"id"};
        for (std::size_t d = 0; d < dim; ++d) header.push_back(prefix + ":emb:" + std::to_string(d));
        std::string csv = io::csv_line(header);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            std::vector<std::string> row{ids[i]};
            if (docs[i])
                for (double v : embedder.embed(*docs[i])) row.push_back(io::format_double(v));
            else
                row.resize(dim + 1);
            csv += io::csv_line(row);
        }
        io::write_file(epath, csv);
        out["embeddings"] = epath;
    }
    out["docs"] = ids.size();
    out["missing"] = missing;
    out["vocab_size"] = vocab.size();
    out["out"] = out_path;
    return out;
}

json h_ks(kf_context&, const json& req) {
    auto X = load_features(req);
    auto column = need_str(req, "column");
    auto c = X.column_index(column);
    if (!c) throw DataError("feature column '" + column + "' not found");
    auto labels = read_labels(need_str(req, "labels"));
    std::vector<double> pos, neg;
    for (std::size_t r = 0; r < X.rows(); ++r) {
        auto it = labels.find(X.row_ids[r]);
        if (it == labels.end() || X.missing(r, *c)) continue;
        (it->second == 1 ? pos : neg).push_back(X.at(r, *c));
    }
    if (pos.empty() || neg.empty()) throw DataError("both classes need at least one value in '" + column + "'");
    auto method = opt_str(req, "method", "auto");
    stats::KsMethod m = method == "exact" ? stats::KsMethod::Exact
                        : method == "asymptotic" ? stats::KsMethod::Asymptotic
                                                 : stats::KsMethod::Auto;
    if (method != "auto" && method != "exact" && method != "asymptotic")
        throw InvalidArgument("method must be auto, exact or asymptotic");
    auto r = stats::ks_two_sample(pos, neg, m);
    json out = {{"column", column}, {"d", r.d}, {"p", r.p}, {"n", r.n}, {"m", r.m}, {"exact", r.exact}};
    if (auto dir = opt_str(req, "ecdf_dir"); !dir.empty()) {
        std::vector<double> grid = pos;
        grid.insert(grid.end(), neg.begin(), neg.end());
        std::sort(grid.begin(), grid.end());
        grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
        fs::path d(dir);
        auto a = d / ("ecdf_" + column + "_dangerous.csv"), b = d / ("ecdf_" + column + "_not_dangerous.csv");
        io::write_file(a.string(), stats::ecdf_to_csv(stats::ecdf_export(pos, grid)));
        io::write_file(b.string(), stats::ecdf_to_csv(stats::ecdf_export(neg, grid)));
        out["ecdf"] = {a.string(), b.string()};
    }
    return out;
}

json h_kappa(kf_context&, const json& req) {
    auto records = load_annotations(need_str(req, "annotations"));
    std::vector<std::string> ids;
    for (auto line : io::split(io::read_file(need_str(req, "common_set")), '\n')) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) ids.push_back(line);
    }
    if (ids.empty()) throw DataError("common set is empty");
    std::map<std::string, std::array<std::uint32_t, 3>> counts;
    for (const auto& id : ids) counts[id] = {0, 0, 0};
    for (const auto& a : records) {
        auto it = counts.find(a.tweet_id);
        if (it != counts.end()) ++it->second[static_cast<std::size_t>(a.label)];
    }
    std::vector<std::uint32_t> flat;
    for (const auto& id : ids) {
        const auto& c = counts[id];
        flat.insert(flat.end(), c.begin(), c.end());
    }
    stats::RatingsMatrix m(ids.size(), 3, flat);
    auto k = stats::fleiss_kappa(m);
    return {{"kappa", k ? json(*k) : json(nullptr)},
            {"defined", k.has_value()},
            {"items", m.items()},
            {"raters", m.raters()},
            {"categories", {"Dangerous", "NotDangerous", "Unsure"}}};
}

json h_train(kf_context&, const json& req) {
    auto fams = families_of(req);
    if (fams.size() != 1) throw InvalidArgument("train needs exactly one family");
    auto data = align(select_blocks(load_features(req), opt_str(req, "blocks", "text,image,location")),
                      read_labels(need_str(req, "labels")));
    auto spec = grid_of(req.contains("params") ? req : json{{"grid", "single"}}, fams[0],
                        req.value("seed", std::uint64_t{0}))[0];
    auto imputer = Imputer::fit(data.X);
    auto Xt = imputer.apply(data.X);
    auto model = learn::train(spec, Xt, data.y);
    auto acc = learn::metrics(data.y, model->predict(Xt)).accuracy;
    json file = {{"spec", spec.to_json()}, {"imputer", imputer.to_json()}, {"columns", Xt.columns()},
                 {"model", model->to_json()}};
    auto out_path = need_str(req, "out");
    io::write_file(out_path, file.dump() + "\n");
    return {{"rows", Xt.rows()},
            {"columns", Xt.cols()},
            {"family", learn::to_string(spec.family())},
            {"spec", spec.to_json()},
            {"training_accuracy", acc},
            {"out", out_path}};
}

json h_predict(kf_context&, const json& req) {
    auto mf = load_model_file(need_str(req, "model"));
    auto X = mf.imputer.apply(load_features(req));
    auto pred = mf.model->predict(X);
    std::string csv = io::csv_line({"id", "prediction"});
    for (std::size_t r = 0; r < X.rows(); ++r) csv += io::csv_line({X.row_ids[r], std::to_string(pred[r])});
    json out = {{"rows", X.rows()}, {"positives", std::count(pred.begin(), pred.end(), 1)}};
    if (auto path = opt_str(req, "out"); !path.empty()) {
        io::write_file(path, csv);
        out["out"] = path;
    } else {
        out["predictions"] = pred;
    }
    return out;
}

json h_cv(kf_context&, const json& req) {
    auto data = align(select_blocks(load_features(req), opt_str(req, "blocks", "text,image,location")),
                      read_labels(need_str(req, "labels")));
    auto opts = cv_options(req);
    json reports = json::array();
    for (auto fam : families_of(req)) {
        auto grid = grid_of(req, fam, opts.seed);
        learn::MatrixFeatureSource src(data.X);
        auto rep = learn::cross_validate(grid, src, data.y, opts);
        reports.push_back({{"family", learn::to_string(fam)}, {"report", rep.to_json()}});
    }
    json out = {{"rows", data.y.size()},
                {"positives", std::count(data.y.begin(), data.y.end(), 1)},
                {"k", opts.k},
                {"results", reports}};
    if (auto path = opt_str(req, "out"); !path.empty()) io::write_file(path, out.dump(2) + "\n");
    return out;
}

json read_report_json(const pipeline::PipelineConfig& cfg, pipeline::ReportKind kind, const std::string& name) {
    auto run = pipeline::RunManifest::load(cfg.output_dir);
    for (const auto& p : pipeline::emit_report(run, kind, cfg))
        if (p.filename() == name) return json::parse(io::read_file(p.string()));
    throw DataError("report did not produce " + name);
}

json h_table4(kf_context&, const json& req) {
    if (req.contains("config")) return {{"table", read_report_json(load_config(req), pipeline::ReportKind::Table4, "table4.json")}};
    auto data = align(load_features(req), read_labels(need_str(req, "labels")));
    auto opts = cv_options(req);
    auto fams = families_of(req);
    json cells = json::array(), table = json::object();
    std::vector<std::string> header{"configuration"};
    for (auto f : fams) header.emplace_back(table4_family_name(f));
    std::string csv = io::csv_line(header);
    for (const auto& blocks : learn::all_feature_configs()) {
        auto cols = learn::feature_config(data.X, blocks);
        std::vector<std::string> row{blocks.name()};
        for (auto fam : fams) {
            if (cols.empty()) {
                row.emplace_back();
                cells.push_back({{"config", blocks.name()}, {"family", learn::to_string(fam)}, {"report", nullptr}});
                continue;
            }
            learn::MatrixFeatureSource src(data.X.select_columns(cols));
            auto rep = learn::cross_validate(grid_of(req, fam, opts.seed), src, data.y, opts);
            table[blocks.name()][std::string(table4_family_name(fam))] = rep.accuracy.mean;
            row.push_back(io::format_double(rep.accuracy.mean));
            cells.push_back({{"config", blocks.name()},
                             {"blocks", blocks.short_name()},
                             {"family", learn::to_string(fam)},
                             {"report", rep.to_json()}});
        }
        csv += io::csv_line(row);
    }
    json out = {{"table", table}, {"cells", cells}};
    if (auto dir = opt_str(req, "out_dir"); !dir.empty()) {
        io::write_file((fs::path(dir) / "table4.csv").string(), csv);
        io::write_file((fs::path(dir) / "table4.json").string(), out.dump(1) + "\n");
    }
    return out;
}

json h_risk_cv(kf_context&, const json& req) {
    auto risk_name = need_str(req, "risk");
    auto risk = learn::parse_risk_task(risk_name);
    if (!risk) throw InvalidArgument("risk must be water, height or vehicle");
    if (req.contains("config")) {
        auto t = read_report_json(load_config(req), pipeline::ReportKind::Table5, "table5.json");
        std::string key(learn::to_string(*risk));
        if (!t.contains(key)) throw DataError("risk '" + key + "' is not in the configured risks");
        return {{"risk", key}, {"result", t[key]}};
    }
    auto X = load_features(req);
    auto sel = learn::risk_dataset(resolve_annotations(load_annotations(need_str(req, "annotations"))), X.row_ids, *risk);
    std::vector<std::size_t> cols;
    for (std::size_t c = 0; c < X.cols(); ++c) {
        const auto& name = X.columns()[c];
        if (learn::block_of_column(name) != "location") {
            cols.push_back(c);
            continue;
        }
        for (auto slot : sel.location_columns) {
            std::string base(geofeat::kLocationColumns[slot]);
            if (name == base || name == base + "_missing") cols.push_back(c);
        }
    }
    if (cols.empty()) throw DataError("no feature columns are relevant to risk '" + risk_name + "'");
    auto Xr = X.select_rows(sel.rows).select_columns(cols);
    auto opts = cv_options(req);
    json per_family = json::array();
    std::optional<std::pair<learn::Family, learn::CvReport>> best;
    for (auto fam : families_of(req)) {
        learn::MatrixFeatureSource src(Xr);
        auto rep = learn::cross_validate(grid_of(req, fam, opts.seed), src, sel.labels, opts);
        per_family.push_back({{"family", learn::to_string(fam)}, {"report", rep.to_json()}});
        if (!best || rep.accuracy.mean > best->second.accuracy.mean) best = {fam, rep};
    }
    const auto& rep = best->second;
    json out = {{"risk", learn::to_string(*risk)},
                {"rows", sel.labels.size()},
                {"positives", std::count(sel.labels.begin(), sel.labels.end(), 1)},
                {"result",
                 {{"accuracy", rep.accuracy.mean},
                  {"precision", rep.precision.mean},
                  {"recall", rep.recall.mean},
                  {"f1", rep.f1.mean},
                  {"technique", technique_name(best->first)},
                  {"macro", {{"precision", rep.macro_precision.mean},
                             {"recall", rep.macro_recall.mean},
                             {"f1", rep.macro_f1.mean}}},
                  {"weighted", {{"precision", rep.weighted_precision.mean},
                                {"recall", rep.weighted_recall.mean},
                                {"f1", rep.weighted_f1.mean}}}}},
                {"families", per_family}};
    if (auto path = opt_str(req, "out"); !path.empty()) io::write_file(path, out.dump(2) + "\n");
    return out;
}

json h_run(kf_context& ctx, const json& req) {
    auto cfg = load_config(req);
    TrafficScope traffic(ctx, cfg);
    pipeline::RunOptions opts;
    opts.resume = req.value("resume", true);
    opts.transport = traffic.transport;
    auto manifest = pipeline::run_pipeline(cfg, opts);
    json out = manifest.to_json();
    out["network_calls"] = traffic.transport->calls();
    return out;
}

json h_report(kf_context&, const json& req) {
    auto cfg = load_config(req);
    auto kind_name = need_str(req, "kind");
    auto kind = pipeline::parse_report_kind(kind_name);
    if (!kind) throw InvalidArgument("kind must be table4, table5, ecdf or incidents");
    if (req.contains("incidents")) cfg.incidents = req["incidents"].get<std::string>();
    pipeline::RunManifest run;
    if (*kind == pipeline::ReportKind::Incidents) run.output_dir = cfg.output_dir;
    else run = pipeline::RunManifest::load(cfg.output_dir);
    json files = json::array();
    for (const auto& p : pipeline::emit_report(run, *kind, cfg)) files.push_back(p.string());
    return {{"kind", kind_name}, {"files", files}};
}

json h_synth(kf_context&, const json& req) {
    synth::FixtureOptions o;
    std::uint64_t seed = req.value("seed", std::uint64_t{1});
    o.world.seed = seed;
    o.corpus.seed = seed;
    o.corpus.tweets = req.value("tweets", o.corpus.tweets);
    o.corpus.dangerous_fraction = req.value("dangerous_fraction", o.corpus.dangerous_fraction);
    o.corpus.unsure_fraction = req.value("unsure_fraction", o.corpus.unsure_fraction);
    o.corpus.geo_fraction = req.value("geo_fraction", o.corpus.geo_fraction);
    o.corpus.common_set = req.value("common_set", o.corpus.common_set);
    o.write_tiles = req.value("write_tiles", true);
    if (req.contains("config_patch")) o.config_patch = req["config_patch"];
    auto f = synth::write_fixture(need_str(req, "out"), o);
    return {{"tweets", f.tweets.string()},         {"annotations", f.annotations.string()},
            {"common_set", f.common_set.string()}, {"elevation_grid", f.elevation_grid.string()},
            {"places", f.places.string()},         {"tiles", f.tiles.string()},
            {"config", f.config.string()}};
}

}  // namespace

extern "C" {

const char* kf_version(void) { return KILLFIE_VERSION; }

kf_context* kf_context_new(void) { return new (std::nothrow) kf_context(); }
void kf_context_free(kf_context* ctx) { delete ctx; }
const char* kf_last_error(const kf_context* ctx) { return ctx ? ctx->last_error.c_str() : "null context"; }
uint64_t kf_network_calls(const kf_context* ctx) { return ctx ? ctx->network_calls : 0; }
void kf_string_free(char* s) { std::free(s); }

kf_status kf_ingest(kf_context* c, const char* q, char** r) { return call(c, q, r, h_ingest); }
kf_status kf_incident_stats(kf_context* c, const char* q, char** r) { return call(c, q, r, h_incident_stats); }
kf_status kf_geofeat(kf_context* c, const char* q, char** r) { return call(c, q, r, h_geofeat); }
kf_status kf_textfeat(kf_context* c, const char* q, char** r) { return call(c, q, r, h_textfeat); }
kf_status kf_ks(kf_context* c, const char* q, char** r) { return call(c, q, r, h_ks); }
kf_status kf_kappa(kf_context* c, const char* q, char** r) { return call(c, q, r, h_kappa); }
kf_status kf_train(kf_context* c, const char* q, char** r) { return call(c, q, r, h_train); }
kf_status kf_predict(kf_context* c, const char* q, char** r) { return call(c, q, r, h_predict); }
kf_status kf_cv(kf_context* c, const char* q, char** r) { return call(c, q, r, h_cv); }
kf_status kf_table4(kf_context* c, const char* q, char** r) { return call(c, q, r, h_table4); }
kf_status kf_risk_cv(kf_context* c, const char* q, char** r) { return call(c, q, r, h_risk_cv); }
kf_status kf_run(kf_context* c, const char* q, char** r) { return call(c, q, r, h_run); }
kf_status kf_report(kf_context* c, const char* q, char** r) { return call(c, q, r, h_report); }
kf_status kf_synth(kf_context* c, const char* q, char** r) { return call(c, q, r, h_synth); }

kf_status kf_ks_two_sample(kf_context* ctx, const double* a, size_t n, const double* b, size_t m, double* d,
                           double* p) {
    return guard(ctx, [&] {
        if ((!a && n) || (!b && m) || !d || !p) throw InvalidArgument("null pointer argument");
        auto r = stats::ks_two_sample(std::span<const double>(a, n), std::span<const double>(b, m));
        *d = r.d;
        *p = r.p;
    });
}

kf_status kf_fleiss_kappa(kf_context* ctx, const uint32_t* counts, size_t items, size_t categories, double* kappa,
                          int* defined) {
    return guard(ctx, [&] {
        if (!counts || !kappa || !defined) throw InvalidArgument("null pointer argument");
        stats::RatingsMatrix m(items, categories, std::vector<std::uint32_t>(counts, counts + items * categories));
        auto k = stats::fleiss_kappa(m);
        *defined = k.has_value() ? 1 : 0;
        *kappa = k.value_or(std::numeric_limits<double>::quiet_NaN());
    });
}

kf_status kf_model_load(kf_context* ctx, const char* path, kf_model** out) {
    if (out) *out = nullptr;
    return guard(ctx, [&] {
        if (!path || !out) throw InvalidArgument("null pointer argument");
        auto mf = load_model_file(path);
        *out = new kf_model{mf.model};
    });
}

void kf_model_free(kf_model* model) { delete model; }

size_t kf_model_n_features(const kf_model* model) { return model ? model->model->n_features() : 0; }

kf_status kf_model_predict(kf_context* ctx, const kf_model* model, const double* rows, size_t n_rows, size_t n_cols,
                           int* labels) {
    return guard(ctx, [&] {
        if (!model || (!rows && n_rows) || (!labels && n_rows)) throw InvalidArgument("null pointer argument");
        if (n_cols != model->model->n_features())
            throw InvalidArgument("model expects " + std::to_string(model->model->n_features()) + " columns, got " +
                                  std::to_string(n_cols));
        for (size_t r = 0; r < n_rows; ++r) {
            const double* x = rows + r * n_cols;
            for (size_t c = 0; c < n_cols; ++c)
                if (std::isnan(x[c])) throw DataError("row " + std::to_string(r) + " has a missing value");
            labels[r] = model->model->predict_row(x);
        }
    });
}

}  // extern "C"
