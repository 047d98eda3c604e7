#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "killfie/killfie.h"

using nlohmann::json;

namespace {

using Fn = kf_status (*)(kf_context*, const char*, char**);

struct Globals {
    std::optional<std::uint64_t> seed;
    std::string providers;
    std::string cache_dir;
    std::optional<double> rate_limit;
};

int exit_code(kf_status s) {
    switch (s) {
        case KF_OK: return 0;
        case KF_ERR_INVALID_ARGUMENT:
        case KF_ERR_CONFIG: return 2;
        case KF_ERR_PROVIDER: return 3;
        case KF_ERR_DATA: return 4;
        default: return 1;
    }
}

int invoke(Fn fn, const json& req, json* response = nullptr, bool print = true) {
    kf_context* ctx = kf_context_new();
    char* out = nullptr;
    kf_status s = fn(ctx, req.dump().c_str(), &out);
    if (s != KF_OK) {
        std::cerr << "killfie: " << kf_last_error(ctx) << "\n";
    } else {
        json j = json::parse(out);
        if (print) std::cout << j.dump(2) << "\n";
        if (response) *response = std::move(j);
    }
    kf_string_free(out);
    kf_context_free(ctx);
    return exit_code(s);
}

void apply_globals(json& req, const Globals& g, bool providers) {
    if (g.seed) req["seed"] = *g.seed;
    if (!providers) return;
    if (!g.providers.empty()) req["providers"] = g.providers;
    if (!g.cache_dir.empty()) req["cache_dir"] = g.cache_dir;
    if (g.rate_limit) req["rate_limit"] = *g.rate_limit;
}

json parse_params(const std::string& text) {
    if (text.empty()) return nullptr;
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw CLI::ValidationError("--params", e.what());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"killfie: dangerous-selfie feature extraction and classification"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", std::string(kf_version()));

    Globals g;
    app.add_option("--seed", g.seed, "Global seed (overrides the config)");
    app.add_option("--providers", g.providers, "Provider mode")->check(CLI::IsMember({"offline", "http"}));
    app.add_option("--cache-dir", g.cache_dir, "Provider cache directory");
    app.add_option("--rate-limit", g.rate_limit, "Provider requests per second")->check(CLI::PositiveNumber);

    std::function<int()> action;

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Validate a tweet corpus and write it canonically");
    std::string tweets, out, format = "jsonl", rejects;
    ingest->add_option("--tweets", tweets, "Input tweets")->required();
    ingest->add_option("--out", out, "Canonical JSONL corpus")->required();
    ingest->add_option("--format", format, "Input format")->check(CLI::IsMember({"jsonl", "csv"}));
    ingest->add_option("--rejects", rejects, "Reject report CSV (default <out>.rejects.csv)");
    ingest->callback([&] {
        action = [&] {
            json req = {{"tweets", tweets}, {"out", out}, {"format", format}};
            if (!rejects.empty()) req["rejects"] = rejects;
            return invoke(kf_ingest, req);
        };
    });

    // incidents stats
    auto* incidents = app.add_subcommand("incidents", "Incident database");
    incidents->require_subcommand(1);
    auto* istats = incidents->add_subcommand("stats", "Breakdown of incidents");
    std::string by = "country", incidents_path = KILLFIE_DATA_DIR "/incidents.csv", istats_format = "json";
    istats->add_option("--by", by, "Dimension")
        ->check(CLI::IsMember({"country", "reason", "group_size", "gender", "age_band"}));
    istats->add_option("--incidents", incidents_path, "Incidents CSV")->capture_default_str();
    istats->add_option("--format", istats_format, "Output format")->check(CLI::IsMember({"json", "csv"}));
    istats->callback([&] {
        action = [&] {
            json resp;
            int rc = invoke(kf_incident_stats, {{"incidents", incidents_path}, {"by", by}}, &resp,
                            istats_format == "json");
            if (rc == 0 && istats_format == "csv") {
                std::cout << by << ",count\n";
                for (const auto& r : resp["rows"])
                    std::cout << r["key"].get<std::string>() << "," << r["count"].get<std::uint64_t>() << "\n";
            }
            return rc;
        };
    });

    // geofeat
    auto* geofeat = app.add_subcommand("geofeat", "Location features for geotagged tweets");
    std::string corpus, config;
    geofeat->add_option("--corpus", corpus, "Corpus JSONL")->required();
    geofeat->add_option("--out", out, "Feature CSV")->required();
    geofeat->add_option("--config", config, "Pipeline config (providers and location settings)")->required();
    geofeat->callback([&] {
        action = [&] {
            json req = {{"corpus", corpus}, {"out", out}, {"config", config}};
            apply_globals(req, g, true);
            return invoke(kf_geofeat, req);
        };
    });

    // textfeat
    auto* textfeat = app.add_subcommand("textfeat", "TF-IDF and hashed embeddings for text or captions");
    std::string field = "text", vocab, vocab_out, tf_format = "sparse", embeddings;
    bool fit_vocab = false;
    std::uint32_t min_df = 2, max_features = 20000;
    std::size_t embedding_dim = 100;
    textfeat->add_option("--corpus", corpus, "Corpus JSONL")->required();
    textfeat->add_option("--field", field, "Field")->check(CLI::IsMember({"text", "captions"}));
    textfeat->add_option("--out", out, "Output vectors")->required();
    auto* fit_flag = textfeat->add_flag("--fit-vocab", fit_vocab, "Fit a vocabulary on this corpus");
    textfeat->add_option("--vocab", vocab, "Existing vocabulary JSON")->excludes(fit_flag);
    textfeat->add_option("--vocab-out", vocab_out, "Where to write a fitted vocabulary");
    textfeat->add_option("--min-df", min_df, "Minimum document frequency");
    textfeat->add_option("--max-features", max_features, "Vocabulary size cap");
    textfeat->add_option("--embedding-dim", embedding_dim, "Embedding dimension");
    textfeat->add_option("--format", tf_format, "sparse (index:value) or dense CSV")
        ->check(CLI::IsMember({"sparse", "dense"}));
    textfeat->add_option("--embeddings", embeddings, "Dense embedding CSV");
    textfeat->callback([&] {
        action = [&] {
            json req = {{"corpus", corpus},         {"field", field},         {"out", out},
                        {"fit_vocab", fit_vocab},   {"min_df", min_df},       {"max_features", max_features},
                        {"embedding_dim", embedding_dim}, {"vector_format", tf_format}};
            if (!vocab.empty()) req["vocab"] = vocab;
            if (!vocab_out.empty()) req["vocab_out"] = vocab_out;
            if (!embeddings.empty()) req["embeddings"] = embeddings;
            apply_globals(req, g, false);
            return invoke(kf_textfeat, req);
        };
    });

    // ks
    auto* ks = app.add_subcommand("ks", "Two-sample KS test of one feature between classes");
    std::vector<std::string> features;
    std::string column, labels, ecdf_dir = ".", method = "auto";
    ks->add_option("--features", features, "Feature CSV(s), joined on id")->required();
    ks->add_option("--column", column, "Feature column")->required();
    ks->add_option("--labels", labels, "Labels or annotations CSV")->required();
    ks->add_option("--ecdf-dir", ecdf_dir, "Directory for per-class ECDF CSVs")->capture_default_str();
    ks->add_option("--method", method, "p-value method")->check(CLI::IsMember({"auto", "exact", "asymptotic"}));
    ks->callback([&] {
        action = [&] {
            return invoke(kf_ks, {{"features", features},
                                  {"column", column},
                                  {"labels", labels},
                                  {"ecdf_dir", ecdf_dir},
                                  {"method", method}});
        };
    });

    // kappa
    auto* kappa = app.add_subcommand("kappa", "Fleiss' kappa over the common annotation set");
    std::string annotations, common_set;
    kappa->add_option("--annotations", annotations, "Annotations CSV")->required();
    kappa->add_option("--common-set", common_set, "File with one tweet id per line")->required();
    kappa->callback([&] {
        action = [&] { return invoke(kf_kappa, {{"annotations", annotations}, {"common_set", common_set}}); };
    });

    // learning commands share these
    std::string blocks = "text,image,location", grid = "default", params_text, out_dir, model;
    std::vector<std::string> families;
    int k = 10, inner_k = 3;
    bool no_undersample = false;
    auto learn_request = [&] {
        json req = {{"features", features}, {"k", k}, {"inner_k", inner_k}, {"grid", grid},
                    {"undersample", !no_undersample}};
        if (!families.empty()) req["families"] = families;
        if (auto p = parse_params(params_text); !p.is_null()) req["params"] = p;
        apply_globals(req, g, false);
        return req;
    };
    auto add_cv_options = [&](CLI::App* sub) {
        sub->add_option("--family", families, "Model families (svm, rf, knn, dt)");
        sub->add_option("--k", k, "Outer folds")->check(CLI::Range(2, 1000));
        sub->add_option("--inner-k", inner_k, "Grid-search folds")->check(CLI::Range(2, 1000));
        sub->add_option("--grid", grid, "Hyperparameter grid")->check(CLI::IsMember({"default", "single"}));
        sub->add_option("--params", params_text, "Single hyperparameter set as JSON");
        sub->add_flag("--no-undersample", no_undersample, "Keep the class imbalance");
    };

    // train
    auto* train = app.add_subcommand("train", "Train one model on all labeled rows");
    std::string family;
    train->add_option("--features", features, "Feature CSV(s), joined on id")->required();
    train->add_option("--labels", labels, "Labels or annotations CSV")->required();
    train->add_option("--blocks", blocks, "Feature blocks");
    train->add_option("--family", family, "Model family")->required();
    train->add_option("--params", params_text, "Hyperparameters as JSON");
    train->add_option("--out", out, "Model JSON")->required();
    train->callback([&] {
        action = [&] {
            json req = {{"features", features}, {"labels", labels}, {"blocks", blocks}, {"family", family},
                        {"out", out}};
            if (auto p = parse_params(params_text); !p.is_null()) req["params"] = p;
            apply_globals(req, g, false);
            return invoke(kf_train, req);
        };
    });

    // predict
    auto* predict = app.add_subcommand("predict", "Apply a trained model");
    predict->add_option("--model", model, "Model JSON")->required();
    predict->add_option("--features", features, "Feature CSV(s), joined on id")->required();
    predict->add_option("--out", out, "Predictions CSV")->required();
    predict->callback([&] {
        action = [&] { return invoke(kf_predict, {{"model", model}, {"features", features}, {"out", out}}); };
    });

    // cv
    auto* cv = app.add_subcommand("cv", "Stratified cross-validation with inner grid search");
    cv->add_option("--features", features, "Feature CSV(s), joined on id")->required();
    cv->add_option("--labels", labels, "Labels or annotations CSV")->required();
    cv->add_option("--blocks", blocks, "Feature blocks");
    cv->add_option("--out", out, "Report JSON");
    add_cv_options(cv);
    cv->callback([&] {
        action = [&] {
            json req = learn_request();
            req["labels"] = labels;
            req["blocks"] = blocks;
            if (!out.empty()) req["out"] = out;
            return invoke(kf_cv, req);
        };
    });

    // table4
    auto* table4 = app.add_subcommand("table4", "Accuracy over the seven feature configurations x families");
    table4->add_option("--config", config, "Read the table from a pipeline run");
    table4->add_option("--features", features, "Feature CSV(s), joined on id");
    table4->add_option("--labels", labels, "Labels or annotations CSV");
    table4->add_option("--out-dir", out_dir, "Write table4.csv and table4.json here");
    add_cv_options(table4);
    table4->callback([&] {
        action = [&] {
            if (!config.empty()) return invoke(kf_table4, {{"config", config}});
            if (features.empty() || labels.empty()) throw CLI::ValidationError("table4", "--config or --features/--labels");
            json req = learn_request();
            req["labels"] = labels;
            if (!out_dir.empty()) req["out_dir"] = out_dir;
            return invoke(kf_table4, req);
        };
    });

    // risk-cv
    auto* risk_cv = app.add_subcommand("risk-cv", "Per-risk classification");
    std::string risk;
    risk_cv->add_option("--risk", risk, "Risk")->required()->check(CLI::IsMember({"water", "height", "vehicle"}));
    risk_cv->add_option("--config", config, "Read the result from a pipeline run");
    risk_cv->add_option("--features", features, "Feature CSV(s), joined on id");
    risk_cv->add_option("--annotations", annotations, "Annotations CSV");
    risk_cv->add_option("--out", out, "Report JSON");
    add_cv_options(risk_cv);
    risk_cv->callback([&] {
        action = [&] {
            if (!config.empty()) return invoke(kf_risk_cv, {{"config", config}, {"risk", risk}});
            if (features.empty() || annotations.empty())
                throw CLI::ValidationError("risk-cv", "--config or --features/--annotations");
            json req = learn_request();
            req["risk"] = risk;
            req["annotations"] = annotations;
            if (!out.empty()) req["out"] = out;
            return invoke(kf_risk_cv, req);
        };
    });

    // run
    auto* run = app.add_subcommand("run", "Run the whole pipeline from a config");
    bool no_resume = false;
    run->add_option("--config", config, "Pipeline config JSON")->required();
    run->add_flag("--no-resume", no_resume, "Recompute every stage");
    run->callback([&] {
        action = [&] {
            json req = {{"config", config}, {"resume", !no_resume}};
            apply_globals(req, g, true);
            json resp;
            int rc = invoke(kf_run, req, &resp, false);
            if (rc == 0) {
                for (const auto& s : resp["stages"])
                    std::cout << s["name"].get<std::string>() << (s.value("reused", false) ? " (reused)" : "")
                              << "\n";
                std::cout << "manifest: " << resp["output_dir"].get<std::string>() << "/manifest.json\n";
            }
            return rc;
        };
    });

    // report
    auto* report = app.add_subcommand("report", "Emit report artifacts from a finished run");
    std::string kind;
    report->add_option("--config", config, "Pipeline config JSON")->required();
    report->add_option("--kind", kind, "Report kind")
        ->required()
        ->check(CLI::IsMember({"table4", "table5", "ecdf", "incidents"}));
    report->add_option("--incidents", incidents_path, "Incidents CSV for the incidents kind");
    report->callback([&] {
        action = [&] {
            json req = {{"config", config}, {"kind", kind}};
            if (report->count("--incidents")) req["incidents"] = incidents_path;
            return invoke(kf_report, req);
        };
    });

    // synth
    auto* synth = app.add_subcommand("synth", "Write a synthetic offline fixture (world, corpus, config)");
    std::size_t n_tweets = 1000;
    std::string patch_text;
    synth->add_option("--out", out, "Fixture directory")->required();
    synth->add_option("--tweets", n_tweets, "Number of tweets");
    synth->add_option("--config-patch", patch_text, "JSON merge-patch applied to the generated config");
    synth->callback([&] {
        action = [&] {
            json req = {{"out", out}, {"tweets", n_tweets}};
            if (g.seed) req["seed"] = *g.seed;
            if (!patch_text.empty()) req["config_patch"] = parse_params(patch_text);
            return invoke(kf_synth, req);
        };
    });

    try {
        app.parse(argc, argv);
        return action ? action() : 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
}
