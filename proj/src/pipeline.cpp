#include "killfie/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>

#include "killfie/error.hpp"
#include "killfie/hash.hpp"
#include "killfie/io.hpp"
#include "killfie/stats.hpp"

namespace killfie::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json endpoint_json(const geo::HttpEndpoint& e) { return {{"url", e.url}, {"api_key", e.api_key}}; }

geo::HttpEndpoint endpoint_from_json(const json& j) {
    geo::HttpEndpoint e;
    e.url = j.value("url", "");
    e.api_key = j.value("api_key", "");
    if (j.contains("api_key_env")) {
        const char* v = std::getenv(j["api_key_env"].get<std::string>().c_str());
        if (v) e.api_key = v;
    }
    return e;
}

json vocab_json(const text::VocabParams& v) { return {{"min_df", v.min_df}, {"max_features", v.max_features}}; }

text::VocabParams vocab_from_json(const json& j, text::VocabParams d) {
    d.min_df = j.value("min_df", d.min_df);
    d.max_features = j.value("max_features", d.max_features);
    return d;
}

std::string resolve(const fs::path& base, const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (base / p).lexically_normal().string();
}

std::string digest_path(const std::string& path) {
    if (path.empty()) return "";
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::recursive_directory_iterator(path))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        std::string acc;
        for (const auto& f : files) acc += fs::relative(f, path).generic_string() + ":" + sha256_file_hex(f.string()) + "\n";
        return sha256_hex(acc);
    }
    if (!fs::exists(path)) throw ConfigError("input file does not exist: " + path);
    return sha256_file_hex(path);
}

std::string slug(std::string_view s) {
    std::string out;
    for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::tolower(c)) : '_');
    return out;
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

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

class Runner {
public:
    Runner(const PipelineConfig& cfg, const RunOptions& opts) : cfg_(cfg), opts_(opts), out_(cfg.output_dir) {}

    RunManifest run();

private:
    using StageFn = std::function<std::map<std::string, std::string>()>;

    void stage(const std::string& name, const json& params, const StageFn& fn);
    std::string stage_path(const std::string& rel) const { return (out_ / rel).string(); }
    std::string read_output(const std::string& stage, const std::string& rel) const;
    void write_manifest() const { io::write_file((out_ / "manifest.json").string(), manifest_.to_json().dump(2) + "\n"); }

    std::map<std::string, std::string> ingest();
    std::map<std::string, std::string> filter();
    std::map<std::string, std::string> featurize();
    std::map<std::string, std::string> ks();
    std::map<std::string, std::string> cv();
    std::map<std::string, std::string> report();

    std::vector<std::pair<std::string, geofeat::LocationFeatureBlock>> load_locations() const;
    std::map<std::string, ResolvedAnnotation> annotations() const;

    const PipelineConfig& cfg_;
    RunOptions opts_;
    fs::path out_;
    RunManifest manifest_;
    std::optional<RunManifest> previous_;
    std::string chain_;
};

void Runner::stage(const std::string& name, const json& params, const StageFn& fn) {
    json in = {{"stage", name}, {"params", params}, {"upstream", chain_}, {"version", KILLFIE_VERSION}};
    std::string digest = sha256_hex(in.dump());
    StageRecord rec;
    rec.name = name;
    rec.input_digest = digest;
    auto t0 = std::chrono::steady_clock::now();
    const StageRecord* prev = previous_ ? previous_->stage(name) : nullptr;
    bool reuse = opts_.resume && prev && prev->input_digest == digest && !prev->outputs.empty();
    if (reuse) {
        for (const auto& [rel, sha] : prev->outputs) {
            auto p = out_ / rel;
            if (!fs::exists(p) || sha256_file_hex(p.string()) != sha) {
                reuse = false;
                break;
            }
        }
    }
    if (reuse) {
        rec.outputs = prev->outputs;
        rec.reused = true;
    } else {
        try {
            for (const auto& [rel, content] : fn()) {
                io::write_file(stage_path(rel), content);
                rec.outputs[rel] = sha256_hex(content);
            }
        } catch (const std::exception& e) {
            manifest_.failed_stage = name;
            manifest_.error = e.what();
            write_manifest();
            throw;
        }
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& [rel, sha] : rec.outputs) chain_ = sha256_hex(chain_ + rel + sha);
    manifest_.stages.push_back(std::move(rec));
    write_manifest();
}

std::string Runner::read_output(const std::string& stage, const std::string& rel) const {
    auto p = out_ / rel;
    if (!fs::exists(p)) throw DataError("missing output " + p.string() + "; rerun the '" + stage + "' stage");
    return io::read_file(p.string());
}

RunManifest Runner::run() {
    if (cfg_.output_dir.empty()) throw ConfigError("output_dir is required");
    if (cfg_.corpus.empty()) throw ConfigError("corpus is required");
    if (cfg_.annotations.empty()) throw ConfigError("annotations is required");
    fs::create_directories(out_);
    if (opts_.resume && fs::exists(out_ / "manifest.json")) {
        try {
            previous_ = RunManifest::load(out_);
        } catch (const Error&) {
            previous_.reset();
        }
    }
    manifest_.tool_version = KILLFIE_VERSION;
    manifest_.config_digest = cfg_.digest();
    manifest_.output_dir = out_.string();
    try {
        for (const auto& p : {cfg_.corpus, cfg_.annotations, cfg_.incidents})
            if (!p.empty()) manifest_.inputs[p] = digest_path(p);
    } catch (const std::exception& e) {
        manifest_.failed_stage = "ingest";
        manifest_.error = e.what();
        write_manifest();
        throw;
    }
    if (cfg_.providers.mode == ProviderMode::Offline)
        for (const auto& p : {cfg_.providers.elevation_grid, cfg_.providers.places_csv, cfg_.providers.tiles_dir})
            if (!p.empty() && fs::exists(p)) manifest_.inputs[p] = digest_path(p);
    json cj = cfg_.to_json();

    stage("ingest", {{"corpus", manifest_.inputs.at(cfg_.corpus)}, {"format", cfg_.corpus_format}},
          [&] { return ingest(); });
    stage("filter", cj["selfie_filter"], [&] { return filter(); });
    json inputs_json = manifest_.inputs;
    stage("featurize",
          {{"providers", cj["providers"]}, {"location", cj["location"]}, {"seed", cfg_.seed}, {"text", cj["text"]},
           {"inputs", inputs_json}},
          [&] { return featurize(); });
    std::string ann = manifest_.inputs.at(cfg_.annotations);
    stage("ks", {{"annotations", ann}}, [&] { return ks(); });
    stage("cv", {{"annotations", ann}, {"learn", cj["learn"]}, {"text", cj["text"]}, {"seed", cfg_.seed}},
          [&] { return cv(); });
    stage("report", {{"incidents", cfg_.incidents.empty() ? "" : manifest_.inputs.at(cfg_.incidents)}},
          [&] { return report(); });
    return manifest_;
}

std::map<std::string, std::string> Runner::ingest() {
    CorpusFormat fmt = cfg_.corpus_format == "csv" ? CorpusFormat::Csv : CorpusFormat::Jsonl;
    auto loaded = load_tweets(cfg_.corpus, fmt);
    std::string rejects = io::csv_line({"line", "id", "reason"});
    for (const auto& r : loaded.rejects) rejects += io::csv_line({std::to_string(r.line), r.id, r.reason});
    auto s = corpus_stats(loaded.corpus);
    json stats = {{"total_tweets", s.total_tweets},
                  {"total_users", s.total_users},
                  {"tweets_with_images", s.tweets_with_images},
                  {"tweets_with_geo", s.tweets_with_geo},
                  {"tweets_with_text_besides_hashtags", s.tweets_with_text_besides_hashtags},
                  {"rejected", loaded.rejects.size()},
                  {"first_tweet_at", s.first_tweet_at ? json(format_timestamp(*s.first_tweet_at)) : json(nullptr)},
                  {"last_tweet_at", s.last_tweet_at ? json(format_timestamp(*s.last_tweet_at)) : json(nullptr)}};
    return {{"ingest/tweets.jsonl", corpus_to_jsonl(loaded.corpus)},
            {"ingest/rejects.csv", rejects},
            {"ingest/stats.json", stats.dump(2) + "\n"}};
}

std::map<std::string, std::string> Runner::filter() {
    auto loaded = parse_tweets_jsonl(read_output("ingest", "ingest/tweets.jsonl"));
    std::unique_ptr<SelfieFilter> f;
    const auto& sf = cfg_.selfie_filter;
    if (sf.kind == "constant") f = std::make_unique<ConstantSelfieFilter>(sf.value);
    else if (sf.kind == "filename_hash") f = std::make_unique<FilenameHashSelfieFilter>(sf.salt);
    else throw ConfigError("unknown selfie filter kind '" + sf.kind + "'");
    auto kept = filter_selfies(loaded.corpus, *f, sf.threshold);
    std::string rejects = io::csv_line({"id", "reason"});
    for (const auto& r : kept.rejects) rejects += io::csv_line({r.id, r.reason});
    return {{"filter/selfies.jsonl", corpus_to_jsonl(kept.corpus)}, {"filter/rejects.csv", rejects}};
}

std::map<std::string, std::string> Runner::featurize() {
    auto selfies = parse_tweets_jsonl(read_output("filter", "filter/selfies.jsonl")).corpus;
    bool any_geo = std::any_of(selfies.records().begin(), selfies.records().end(),
                               [](const TweetRecord& t) { return t.geo.has_value(); });
    std::vector<std::pair<std::string, geofeat::LocationFeatureBlock>> rows;
    std::optional<geo::ProviderSet> providers;
    std::optional<fs::path> cache_dir;
    if (!cfg_.cache_dir.empty()) cache_dir = cfg_.cache_dir;
    geo::ProviderCache cache(cache_dir);
    if (any_geo) providers = make_providers(cfg_, opts_.transport);
    for (const auto& t : selfies.records()) {
        if (t.geo)
            rows.emplace_back(t.id, geofeat::location_feature_vector(*t.geo, *providers, cache, cfg_.location,
                                                                     geofeat::tweet_seed(cfg_.seed, t.id)));
        else
            rows.emplace_back(t.id, geofeat::all_missing_block());
    }
    std::vector<text::TokenStream> text_docs, caption_docs;
    for (const auto& t : selfies.records()) {
        text_docs.push_back(text::tokenize(t.text));
        if (t.captions) caption_docs.push_back(text::tokenize(text::join_captions(*t.captions)));
    }
    auto vocab_or_empty = [&](const std::vector<text::TokenStream>& docs) {
        try {
            return text::fit_vocab(docs, cfg_.export_vocab).to_json().dump(1) + "\n";
        } catch (const InvalidArgument&) {
            return text::Vocabulary().to_json().dump(1) + "\n";
        }
    };
    return {{"featurize/location.csv", geofeat::location_features_to_csv(rows)},
            {"featurize/vocab_text.json", vocab_or_empty(text_docs)},
            {"featurize/vocab_captions.json", vocab_or_empty(caption_docs)}};
}

std::vector<std::pair<std::string, geofeat::LocationFeatureBlock>> Runner::load_locations() const {
    return geofeat::parse_location_features_csv(read_output("featurize", "featurize/location.csv"));
}

std::map<std::string, ResolvedAnnotation> Runner::annotations() const {
    return resolve_annotations(load_annotations(cfg_.annotations));
}

std::map<std::string, std::string> Runner::ks() {
    auto rows = load_locations();
    auto ann = annotations();
    std::map<std::string, std::string> files;
    json report = json::object();
    struct Comparison {
        std::string name;
        std::optional<learn::RiskTask> risk;
        std::vector<std::size_t> columns;
    };
    std::vector<Comparison> comparisons{{"overall", std::nullopt, {0, 1, 2, 3, 4, 5, 6, 7}}};
    for (auto r : {learn::RiskTask::Water, learn::RiskTask::Height, learn::RiskTask::VehicleRoad})
        comparisons.push_back({std::string(learn::to_string(r)), r, learn::risk_location_columns(r)});
    for (const auto& cmp : comparisons) {
        json block = json::object();
        for (auto c : cmp.columns) {
            std::vector<double> pos, neg;
            for (const auto& [id, loc] : rows) {
                auto it = ann.find(id);
                if (it == ann.end() || loc.missing[c]) continue;
                const auto& a = it->second;
                if (a.label == Label::NotDangerous) neg.push_back(loc.values[c]);
                else if (a.label == Label::Dangerous && (!cmp.risk || learn::risk_positive(a.risk_reasons, *cmp.risk)))
                    pos.push_back(loc.values[c]);
            }
            std::string feature(geofeat::kLocationColumns[c]);
            if (pos.empty() || neg.empty()) {
                block[feature] = {{"d", nullptr}, {"p", nullptr}, {"n", pos.size()}, {"m", neg.size()}};
                continue;
            }
            auto r = stats::ks_two_sample(pos, neg);
            block[feature] = {{"d", r.d}, {"p", r.p}, {"n", r.n}, {"m", r.m}, {"exact", r.exact}};
            if (!cmp.risk) {
                std::vector<double> grid = pos;
                grid.insert(grid.end(), neg.begin(), neg.end());
                std::sort(grid.begin(), grid.end());
                grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
                files["ks/ecdf_" + feature + "_dangerous.csv"] = stats::ecdf_to_csv(stats::ecdf_export(pos, grid));
                files["ks/ecdf_" + feature + "_not_dangerous.csv"] = stats::ecdf_to_csv(stats::ecdf_export(neg, grid));
            }
        }
        report[cmp.name] = block;
    }
    files["ks/ks.json"] = report.dump(2) + "\n";
    return files;
}

std::map<std::string, std::string> Runner::cv() {
    auto selfies = parse_tweets_jsonl(read_output("filter", "filter/selfies.jsonl")).corpus;
    auto locs = load_locations();
    std::map<std::string, geofeat::LocationFeatureBlock> loc_by_id(locs.begin(), locs.end());
    auto ann = annotations();
    learn::FeaturizeParams fp = cfg_.featurize;
    fp.embedding_seed = derive_seed(cfg_.seed, "embedding");

    auto all_rows = std::make_shared<std::vector<learn::RawRow>>();
    std::vector<std::string> ids;
    for (const auto& t : selfies.records()) {
        auto it = loc_by_id.find(t.id);
        all_rows->push_back(
            learn::make_raw_row(t, it == loc_by_id.end() ? geofeat::all_missing_block() : it->second, fp));
        ids.push_back(t.id);
    }

    learn::CvOptions opts;
    opts.k = cfg_.learn.k;
    opts.inner_k = cfg_.learn.inner_k;
    opts.undersample = cfg_.learn.undersample;
    opts.seed = derive_seed(cfg_.seed, "cv");
    const std::uint64_t model_seed = derive_seed(cfg_.seed, "model");

    auto overall = std::make_shared<std::vector<learn::RawRow>>();
    learn::Labels y;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        auto it = ann.find(ids[i]);
        if (it == ann.end() || it->second.label == Label::Unsure) continue;
        overall->push_back((*all_rows)[i]);
        y.push_back(it->second.label == Label::Dangerous ? 1 : 0);
    }

    json table4 = json::array();
    for (const auto& blocks : learn::all_feature_configs()) {
        for (auto fam : cfg_.learn.families) {
            auto grid = cfg_.learn.grid(fam, model_seed);
            learn::RawFeatureSource src(overall, blocks, fp);
            auto rep = learn::cross_validate(grid, src, y, opts);
            table4.push_back({{"config", blocks.name()},
                              {"blocks", blocks.short_name()},
                              {"family", learn::to_string(fam)},
                              {"report", rep.to_json()}});
        }
    }

    json risks = json::array();
    for (auto risk : cfg_.learn.risks) {
        json entry = {{"risk", learn::to_string(risk)}};
        try {
            auto sel = learn::risk_dataset(ann, ids, risk);
            auto rows = std::make_shared<std::vector<learn::RawRow>>();
            for (auto i : sel.rows) rows->push_back((*all_rows)[i]);
            learn::BlockSet blocks{learn::Block::Text, learn::Block::Image, learn::Block::Location};
            json per_family = json::array();
            std::optional<std::pair<double, learn::Family>> best;
            for (auto fam : cfg_.learn.families) {
                auto grid = cfg_.learn.grid(fam, model_seed);
                learn::RawFeatureSource src(rows, blocks, fp, sel.location_columns);
                auto rep = learn::cross_validate(grid, src, sel.labels, opts);
                per_family.push_back({{"family", learn::to_string(fam)}, {"report", rep.to_json()}});
                if (!best || rep.accuracy.mean > best->first) best = {rep.accuracy.mean, fam};
            }
            std::size_t positives = static_cast<std::size_t>(std::count(sel.labels.begin(), sel.labels.end(), 1));
            entry["positives"] = positives;
            entry["rows"] = sel.labels.size();
            entry["families"] = per_family;
            entry["best_family"] = learn::to_string(best->second);
        } catch (const DataError& e) {
            entry["skipped"] = e.what();
        }
        risks.push_back(entry);
    }
    json dataset = {{"rows", y.size()},
                    {"dangerous", std::count(y.begin(), y.end(), 1)},
                    {"not_dangerous", std::count(y.begin(), y.end(), 0)}};
    return {{"cv/table4.json", table4.dump(1) + "\n"},
            {"cv/risk.json", risks.dump(1) + "\n"},
            {"cv/dataset.json", dataset.dump(2) + "\n"}};
}

std::map<std::string, std::string> Runner::report() {
    std::map<std::string, std::string> files;
    // emit_report writes directly; re-read to record digests through the stage.
    RunManifest partial = manifest_;
    std::vector<ReportKind> kinds{ReportKind::Table4, ReportKind::Table5, ReportKind::Ecdf};
    if (!cfg_.incidents.empty()) kinds.push_back(ReportKind::Incidents);
    for (auto k : kinds)
        for (const auto& p : emit_report(partial, k, cfg_))
            files[fs::relative(p, out_).generic_string()] = io::read_file(p.string());
    return files;
}

}  // namespace

std::vector<learn::ModelSpec> LearnConfig::grid(learn::Family f, std::uint64_t seed) const {
    auto it = grids.find(f);
    if (it == grids.end() || it->second.empty()) return learn::default_grid(f, seed);
    std::vector<learn::ModelSpec> out;
    for (const auto& s : it->second) out.push_back(s.with_seed(seed));
    return out;
}

json location_config_to_json(const geofeat::LocationConfig& c) {
    json palette = json::array();
    for (const auto& p : c.water_palette) palette.push_back({p.r, p.g, p.b});
    return {{"elevation",
             {{"n_near", c.elevation.n_near},
              {"r_near_m", c.elevation.r_near_m},
              {"n_far", c.elevation.n_far},
              {"r_far_m", c.elevation.r_far_m}}},
            {"zoom", c.zoom},
            {"tile_width", c.tile_width},
            {"tile_height", c.tile_height},
            {"water_palette", palette},
            {"water_tolerance", c.water_tolerance},
            {"search_radius_m", c.search_radius_m},
            {"max_retries", c.retry.max_retries}};
}

geofeat::LocationConfig location_config_from_json(const json& j) {
    geofeat::LocationConfig c;
    if (j.contains("elevation")) {
        const auto& e = j["elevation"];
        c.elevation.n_near = e.value("n_near", c.elevation.n_near);
        c.elevation.r_near_m = e.value("r_near_m", c.elevation.r_near_m);
        c.elevation.n_far = e.value("n_far", c.elevation.n_far);
        c.elevation.r_far_m = e.value("r_far_m", c.elevation.r_far_m);
    }
    c.zoom = j.value("zoom", c.zoom);
    c.tile_width = j.value("tile_width", c.tile_width);
    c.tile_height = j.value("tile_height", c.tile_height);
    if (j.contains("water_palette")) {
        c.water_palette.clear();
        for (const auto& p : j["water_palette"]) {
            auto v = p.get<std::vector<int>>();
            if (v.size() != 3) throw ConfigError("water_palette entries must be [r, g, b]");
            for (int x : v)
                if (x < 0 || x > 255) throw ConfigError("water_palette channel out of range");
            c.water_palette.push_back(
                {static_cast<std::uint8_t>(v[0]), static_cast<std::uint8_t>(v[1]), static_cast<std::uint8_t>(v[2])});
        }
    }
    c.water_tolerance = j.value("water_tolerance", c.water_tolerance);
    c.search_radius_m = j.value("search_radius_m", c.search_radius_m);
    c.retry.max_retries = j.value("max_retries", c.retry.max_retries);
    if (c.water_palette.empty()) throw ConfigError("water_palette must not be empty");
    if (c.zoom < 0 || c.zoom > 21) throw ConfigError("zoom must be in [0, 21]");
    if (c.tile_width < 1 || c.tile_height < 1) throw ConfigError("tile dimensions must be positive");
    return c;
}

json PipelineConfig::to_json() const {
    json grids_json = json::object();
    for (const auto& [fam, specs] : learn.grids) {
        json arr = json::array();
        for (const auto& s : specs) {
            json sj = s.to_json();
            sj.erase("seed");
            arr.push_back(sj);
        }
        grids_json[std::string(learn::to_string(fam))] = arr;
    }
    json families = json::array();
    for (auto f : learn.families) families.push_back(learn::to_string(f));
    json risks = json::array();
    for (auto r : learn.risks) risks.push_back(learn::to_string(r));
    return {{"corpus", corpus},
            {"corpus_format", corpus_format},
            {"annotations", annotations},
            {"incidents", incidents},
            {"cache_dir", cache_dir},
            {"output_dir", output_dir},
            {"seed", seed},
            {"providers",
             {{"mode", providers.mode == ProviderMode::Offline ? "offline" : "http"},
              {"elevation_grid", providers.elevation_grid},
              {"tiles_dir", providers.tiles_dir},
              {"places_csv", providers.places_csv},
              {"http",
               {{"elevation", endpoint_json(providers.elevation_http)},
                {"tiles", endpoint_json(providers.tiles_http)},
                {"places", endpoint_json(providers.places_http)}}},
              {"rate_limit", providers.rate_limit},
              {"timeout_ms", providers.timeout_ms}}},
            {"selfie_filter",
             {{"kind", selfie_filter.kind},
              {"value", selfie_filter.value},
              {"salt", selfie_filter.salt},
              {"threshold", selfie_filter.threshold}}},
            {"location", location_config_to_json(location)},
            {"text",
             {{"export_vocab", vocab_json(export_vocab)},
              {"cv_vocab", vocab_json(featurize.vocab)},
              {"embedding_dim", featurize.embedding_dim}}},
            {"learn",
             {{"families", families},
              {"grids", grids_json},
              {"k", learn.k},
              {"inner_k", learn.inner_k},
              {"undersample", learn.undersample},
              {"risks", risks}}}};
}

PipelineConfig PipelineConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    PipelineConfig c;
    try {
        c.corpus = j.value("corpus", "");
        c.corpus_format = j.value("corpus_format", c.corpus_format);
        if (c.corpus_format != "jsonl" && c.corpus_format != "csv") throw ConfigError("corpus_format must be jsonl or csv");
        c.annotations = j.value("annotations", "");
        c.incidents = j.value("incidents", "");
        c.cache_dir = j.value("cache_dir", "");
        c.output_dir = j.value("output_dir", "");
        c.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("providers")) {
            const auto& p = j["providers"];
            std::string mode = p.value("mode", "offline");
            if (mode == "offline") c.providers.mode = ProviderMode::Offline;
            else if (mode == "http") c.providers.mode = ProviderMode::Http;
            else throw ConfigError("providers.mode must be offline or http");
            c.providers.elevation_grid = p.value("elevation_grid", "");
            c.providers.tiles_dir = p.value("tiles_dir", "");
            c.providers.places_csv = p.value("places_csv", "");
            if (p.contains("http")) {
                const auto& h = p["http"];
                if (h.contains("elevation")) c.providers.elevation_http = endpoint_from_json(h["elevation"]);
                if (h.contains("tiles")) c.providers.tiles_http = endpoint_from_json(h["tiles"]);
                if (h.contains("places")) c.providers.places_http = endpoint_from_json(h["places"]);
            }
            c.providers.rate_limit = p.value("rate_limit", c.providers.rate_limit);
            c.providers.timeout_ms = p.value("timeout_ms", c.providers.timeout_ms);
            if (!(c.providers.rate_limit > 0)) throw ConfigError("providers.rate_limit must be positive");
        }
        if (j.contains("selfie_filter")) {
            const auto& s = j["selfie_filter"];
            c.selfie_filter.kind = s.value("kind", c.selfie_filter.kind);
            c.selfie_filter.value = s.value("value", c.selfie_filter.value);
            c.selfie_filter.salt = s.value("salt", c.selfie_filter.salt);
            c.selfie_filter.threshold = s.value("threshold", c.selfie_filter.threshold);
            if (c.selfie_filter.kind != "constant" && c.selfie_filter.kind != "filename_hash")
                throw ConfigError("selfie_filter.kind must be constant or filename_hash");
        }
        if (j.contains("location")) c.location = location_config_from_json(j["location"]);
        if (j.contains("text")) {
            const auto& t = j["text"];
            if (t.contains("export_vocab")) c.export_vocab = vocab_from_json(t["export_vocab"], c.export_vocab);
            if (t.contains("cv_vocab")) c.featurize.vocab = vocab_from_json(t["cv_vocab"], c.featurize.vocab);
            c.featurize.embedding_dim = t.value("embedding_dim", c.featurize.embedding_dim);
            if (c.featurize.embedding_dim < 2) throw ConfigError("text.embedding_dim must be at least 2");
        }
        if (j.contains("learn")) {
            const auto& l = j["learn"];
            if (l.contains("families")) {
                c.learn.families.clear();
                for (const auto& f : l["families"]) {
                    auto fam = learn::parse_family(f.get<std::string>());
                    if (!fam) throw ConfigError("unknown family '" + f.get<std::string>() + "'");
                    c.learn.families.push_back(*fam);
                }
                if (c.learn.families.empty()) throw ConfigError("learn.families must not be empty");
            }
            if (l.contains("grids")) {
                for (const auto& [name, arr] : l["grids"].items()) {
                    auto fam = learn::parse_family(name);
                    if (!fam) throw ConfigError("unknown family '" + name + "' in learn.grids");
                    std::vector<learn::ModelSpec> specs;
                    for (auto s : arr) {
                        s["family"] = learn::to_string(*fam);
                        specs.push_back(learn::ModelSpec::from_json(s));
                    }
                    c.learn.grids[*fam] = std::move(specs);
                }
            }
            c.learn.k = l.value("k", c.learn.k);
            c.learn.inner_k = l.value("inner_k", c.learn.inner_k);
            c.learn.undersample = l.value("undersample", c.learn.undersample);
            if (c.learn.k < 2 || c.learn.inner_k < 2) throw ConfigError("learn.k and learn.inner_k must be >= 2");
            if (l.contains("risks")) {
                c.learn.risks.clear();
                for (const auto& r : l["risks"]) {
                    auto risk = learn::parse_risk_task(r.get<std::string>());
                    if (!risk) throw ConfigError("unknown risk '" + r.get<std::string>() + "'");
                    c.learn.risks.push_back(*risk);
                }
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config: ") + e.what());
    }
    return c;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    json j;
    try {
        j = json::parse(io::read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("cannot parse config " + path + ": " + e.what());
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    auto c = from_json(j);
    fs::path base = fs::absolute(path).parent_path();
    for (auto* p : {&c.corpus, &c.annotations, &c.incidents, &c.cache_dir, &c.output_dir, &c.providers.elevation_grid,
                    &c.providers.tiles_dir, &c.providers.places_csv})
        *p = resolve(base, *p);
    return c;
}

std::string PipelineConfig::digest() const { return sha256_hex(to_json().dump()); }

json RunManifest::to_json() const {
    json stages_json = json::array();
    for (const auto& s : stages)
        stages_json.push_back({{"name", s.name},
                               {"input_digest", s.input_digest},
                               {"outputs", s.outputs},
                               {"seconds", s.seconds},
                               {"reused", s.reused}});
    json j = {{"tool_version", tool_version},
              {"config_digest", config_digest},
              {"inputs", inputs},
              {"stages", stages_json},
              {"output_dir", output_dir}};
    if (failed_stage) j["failed_stage"] = *failed_stage;
    if (!error.empty()) j["error"] = error;
    return j;
}

RunManifest RunManifest::from_json(const json& j) {
    RunManifest m;
    try {
        m.tool_version = j.at("tool_version").get<std::string>();
        m.config_digest = j.at("config_digest").get<std::string>();
        m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
        m.output_dir = j.value("output_dir", "");
        for (const auto& s : j.at("stages")) {
            StageRecord r;
            r.name = s.at("name").get<std::string>();
            r.input_digest = s.at("input_digest").get<std::string>();
            r.outputs = s.at("outputs").get<std::map<std::string, std::string>>();
            r.seconds = s.value("seconds", 0.0);
            r.reused = s.value("reused", false);
            m.stages.push_back(std::move(r));
        }
        if (j.contains("failed_stage")) m.failed_stage = j["failed_stage"].get<std::string>();
        m.error = j.value("error", "");
    } catch (const json::exception& e) {
        throw DataError(std::string("bad manifest: ") + e.what());
    }
    return m;
}

RunManifest RunManifest::load(const fs::path& output_dir) {
    auto p = output_dir / "manifest.json";
    if (!fs::exists(p)) throw DataError("no manifest in " + output_dir.string() + "; run the pipeline first");
    try {
        auto m = from_json(json::parse(io::read_file(p.string())));
        if (m.output_dir.empty()) m.output_dir = output_dir.string();
        return m;
    } catch (const json::exception& e) {
        throw DataError("cannot parse manifest " + p.string() + ": " + e.what());
    }
}

const StageRecord* RunManifest::stage(std::string_view name) const {
    for (const auto& s : stages)
        if (s.name == name) return &s;
    return nullptr;
}

std::map<std::string, std::string> RunManifest::output_digests() const {
    std::map<std::string, std::string> out;
    for (const auto& s : stages)
        for (const auto& [rel, sha] : s.outputs) out[rel] = sha;
    return out;
}

RunManifest run_pipeline(const PipelineConfig& config, const RunOptions& opts) {
    Runner r(config, opts);
    return r.run();
}

std::optional<ReportKind> parse_report_kind(std::string_view s) {
    if (s == "table4") return ReportKind::Table4;
    if (s == "table5") return ReportKind::Table5;
    if (s == "ecdf") return ReportKind::Ecdf;
    if (s == "incidents") return ReportKind::Incidents;
    return std::nullopt;
}

std::string_view to_string(ReportKind k) {
    switch (k) {
        case ReportKind::Table4: return "table4";
        case ReportKind::Table5: return "table5";
        case ReportKind::Ecdf: return "ecdf";
        case ReportKind::Incidents: return "incidents";
    }
    return "?";
}

json incident_stats_json(const IncidentSet& incidents) {
    auto rows_json = [&](IncidentDimension d) {
        json arr = json::array();
        for (const auto& r : incident_breakdown(incidents, d)) arr.push_back({{"key", r.key}, {"count", r.count}});
        return arr;
    };
    json by_reason = json::object();
    for (int i = 0; i <= static_cast<int>(IncidentReason::Other); ++i) {
        auto r = static_cast<IncidentReason>(i);
        auto n = incidents_with_reason(incidents, r);
        if (n == 0) continue;
        by_reason[std::string(to_string(r))] = {{"deaths", deaths_with_reason(incidents, r)}, {"incidents", n}};
    }
    return {{"total_deaths", total_deaths(incidents)},
            {"incidents", incidents.size()},
            {"individual_incidents", individual_incident_count(incidents)},
            {"group_incidents", group_incident_count(incidents)},
            {"country", rows_json(IncidentDimension::Country)},
            {"reason", rows_json(IncidentDimension::Reason)},
            {"group_size", rows_json(IncidentDimension::GroupSize)},
            {"gender", rows_json(IncidentDimension::Gender)},
            {"age_band", rows_json(IncidentDimension::AgeBand)},
            {"by_reason", by_reason}};
}

std::vector<fs::path> emit_report(const RunManifest& run, ReportKind kind, const PipelineConfig& config) {
    fs::path out = run.output_dir.empty() ? fs::path(config.output_dir) : fs::path(run.output_dir);
    fs::path dir = out / "report";
    std::vector<fs::path> written;
    auto need = [&](const char* stage, const std::string& rel) {
        if (!run.stage(stage) || !fs::exists(out / rel))
            throw DataError(std::string(to_string(kind)) + " report needs the '" + stage +
                            "' stage; run `killfie run --config <config>` first");
        return io::read_file((out / rel).string());
    };
    auto put = [&](const std::string& name, const std::string& content) {
        io::write_file((dir / name).string(), content);
        written.push_back(dir / name);
    };
    switch (kind) {
        case ReportKind::Table4: {
            json cells = json::parse(need("cv", "cv/table4.json"));
            std::vector<std::string> configs;
            std::vector<learn::Family> fams;
            std::map<std::pair<std::string, std::string>, double> acc;
            for (const auto& c : cells) {
                auto cfg_name = c["config"].get<std::string>();
                auto fam = *learn::parse_family(c["family"].get<std::string>());
                if (std::find(configs.begin(), configs.end(), cfg_name) == configs.end()) configs.push_back(cfg_name);
                if (std::find(fams.begin(), fams.end(), fam) == fams.end()) fams.push_back(fam);
                acc[{cfg_name, std::string(learn::to_string(fam))}] = c["report"]["accuracy"]["mean"].get<double>();
            }
            std::vector<std::string> header{"configuration"};
            for (auto f : fams) header.emplace_back(table4_family_name(f));
            std::string csv = io::csv_line(header);
            json table = json::object();
            for (const auto& cn : configs) {
                std::vector<std::string> row{cn};
                for (auto f : fams) {
                    auto it = acc.find({cn, std::string(learn::to_string(f))});
                    row.push_back(it == acc.end() ? "" : fixed(it->second, 4));
                    if (it != acc.end()) table[cn][std::string(table4_family_name(f))] = it->second;
                }
                csv += io::csv_line(row);
            }
            put("table4.csv", csv);
            put("table4.json", table.dump(2) + "\n");
            break;
        }
        case ReportKind::Table5: {
            json risks = json::parse(need("cv", "cv/risk.json"));
            std::vector<std::string> header{"metric"};
            std::vector<std::vector<std::string>> rows{{"Accuracy"}, {"Precision"}, {"Recall"}, {"F1-Score"}, {"Technique"}};
            json table = json::object();
            for (const auto& r : risks) {
                std::string name = r["risk"].get<std::string>();
                header.push_back(name == "vehicle" ? "Vehicle" : std::string(1, static_cast<char>(std::toupper(name[0]))) + name.substr(1));
                if (r.contains("skipped")) {
                    for (auto& row : rows) row.push_back("");
                    table[name] = {{"skipped", r["skipped"]}};
                    continue;
                }
                auto best = r["best_family"].get<std::string>();
                json rep;
                for (const auto& f : r["families"])
                    if (f["family"] == best) rep = f["report"];
                double a = rep["accuracy"]["mean"], p = rep["precision"]["mean"], re = rep["recall"]["mean"],
                       f1 = rep["f1"]["mean"];
                rows[0].push_back(fixed(a, 3));
                rows[1].push_back(fixed(p, 3));
                rows[2].push_back(fixed(re, 3));
                rows[3].push_back(fixed(f1, 3));
                rows[4].emplace_back(technique_name(*learn::parse_family(best)));
                table[name] = {{"accuracy", a},
                               {"precision", p},
                               {"recall", re},
                               {"f1", f1},
                               {"technique", technique_name(*learn::parse_family(best))},
                               {"macro", rep["macro"]},
                               {"weighted", rep["weighted"]}};
            }
            std::string csv = io::csv_line(header);
            for (const auto& row : rows) csv += io::csv_line(row);
            put("table5.csv", csv);
            put("table5.json", table.dump(2) + "\n");
            break;
        }
        case ReportKind::Ecdf: {
            json ks = json::parse(need("ks", "ks/ks.json"));
            std::string csv = io::csv_line({"comparison", "feature", "d", "p", "n", "m"});
            for (const auto& [cmp, block] : ks.items())
                for (const auto& [feature, r] : block.items())
                    csv += io::csv_line({cmp, feature, r["d"].is_null() ? "" : io::format_double(r["d"].get<double>()),
                                         r["p"].is_null() ? "" : io::format_double(r["p"].get<double>()),
                                         std::to_string(r["n"].get<std::size_t>()),
                                         std::to_string(r["m"].get<std::size_t>())});
            put("ecdf_ks.csv", csv);
            for (const auto& [rel, sha] : run.stage("ks")->outputs) {
                fs::path p(rel);
                if (p.extension() != ".csv") continue;
                put("ecdf/" + p.filename().string(), io::read_file((out / rel).string()));
            }
            break;
        }
        case ReportKind::Incidents: {
            if (config.incidents.empty()) throw ConfigError("incidents report needs `incidents` in the config");
            auto set = load_incidents(config.incidents);
            json stats = incident_stats_json(set);
            put("incidents.json", stats.dump(2) + "\n");
            for (const char* dim : {"country", "reason", "group_size", "gender", "age_band"}) {
                std::string csv = io::csv_line({dim, dim == std::string("country") || dim == std::string("reason")
                                                         ? "deaths"
                                                         : (dim == std::string("group_size") ? "incidents" : "victims")});
                for (const auto& r : stats[dim]) csv += io::csv_line({r["key"].get<std::string>(), std::to_string(r["count"].get<std::uint64_t>())});
                put("incidents_" + slug(dim) + ".csv", csv);
            }
            break;
        }
    }
    return written;
}

geo::ProviderSet make_providers(const PipelineConfig& config, std::shared_ptr<geo::Transport> transport) {
    const auto& p = config.providers;
    geo::ProviderSet set;
    if (p.mode == ProviderMode::Offline) {
        if (p.elevation_grid.empty() || p.tiles_dir.empty() || p.places_csv.empty())
            throw ConfigError("offline providers need elevation_grid, tiles_dir and places_csv");
        set.elevation = std::make_shared<geo::GridElevationProvider>(geo::GridElevationProvider::load(p.elevation_grid));
        set.tiles = std::make_shared<geo::DirectoryTileProvider>(p.tiles_dir);
        set.places = std::make_shared<geo::FixturePlacesProvider>(geo::FixturePlacesProvider::load(p.places_csv));
        return set;
    }
    if (p.elevation_http.url.empty() || p.tiles_http.url.empty() || p.places_http.url.empty())
        throw ConfigError("http providers need elevation, tiles and places endpoints");
    if (!transport) transport = std::make_shared<geo::HttpTransport>(std::chrono::milliseconds(p.timeout_ms));
    auto limiter = std::make_shared<geo::TokenBucket>(p.rate_limit, std::max(1.0, p.rate_limit));
    set.elevation = std::make_shared<geo::HttpElevationProvider>(transport, p.elevation_http, limiter);
    set.tiles = std::make_shared<geo::HttpTileProvider>(transport, p.tiles_http, limiter);
    set.places = std::make_shared<geo::HttpPlacesProvider>(transport, p.places_http, limiter);
    return set;
}

}  // namespace killfie::pipeline
