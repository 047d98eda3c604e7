#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "killfie/geofeat.hpp"
#include "killfie/learn.hpp"
#include "killfie/providers.hpp"

namespace killfie::pipeline {

enum class ProviderMode { Offline, Http };

struct ProviderConfig {
    ProviderMode mode = ProviderMode::Offline;
    std::string elevation_grid;
    std::string tiles_dir;
    std::string places_csv;
    geo::HttpEndpoint elevation_http;
    geo::HttpEndpoint tiles_http;
    geo::HttpEndpoint places_http;
    double rate_limit = 10.0;  ///< requests per second, shared by all endpoints
    int timeout_ms = 10000;
};

struct SelfieFilterConfig {
    std::string kind = "constant";  ///< constant | filename_hash
    double value = 1.0;
    std::uint64_t salt = 0;
    double threshold = 0.5;
};

struct LearnConfig {
    std::vector<learn::Family> families{learn::Family::LinearSVM, learn::Family::RandomForest, learn::Family::KNN,
                                        learn::Family::DecisionTree};
    /// Per-family grids; families without an entry use the default grid.
    std::map<learn::Family, std::vector<learn::ModelSpec>> grids;
    int k = 10;
    int inner_k = 3;
    bool undersample = true;
    std::vector<learn::RiskTask> risks{learn::RiskTask::Water, learn::RiskTask::Height, learn::RiskTask::VehicleRoad};

    std::vector<learn::ModelSpec> grid(learn::Family f, std::uint64_t seed) const;
};

struct PipelineConfig {
    std::string corpus;
    std::string corpus_format = "jsonl";
    std::string annotations;
    std::string incidents;  ///< optional
    std::string cache_dir;  ///< optional; memory-only cache when empty
    std::string output_dir;
    ProviderConfig providers;
    SelfieFilterConfig selfie_filter;
    geofeat::LocationConfig location;
    text::VocabParams export_vocab{2, 20000};
    learn::FeaturizeParams featurize;
    LearnConfig learn;
    std::uint64_t seed = 0;

    /// Canonical form: sorted keys, every field present.
    nlohmann::json to_json() const;
    static PipelineConfig from_json(const nlohmann::json& j);
    /// Relative paths resolve against the config file's directory.
    static PipelineConfig load(const std::string& path);
    std::string digest() const;
};

nlohmann::json location_config_to_json(const geofeat::LocationConfig& c);
geofeat::LocationConfig location_config_from_json(const nlohmann::json& j);

struct StageRecord {
    std::string name;
    std::string input_digest;
    std::map<std::string, std::string> outputs;  ///< relative path -> sha256
    double seconds = 0.0;
    bool reused = false;
};

struct RunManifest {
    std::string tool_version;
    std::string config_digest;
    std::map<std::string, std::string> inputs;  ///< input path -> sha256
    std::vector<StageRecord> stages;
    std::string output_dir;
    std::optional<std::string> failed_stage;
    std::string error;

    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);
    static RunManifest load(const std::filesystem::path& output_dir);
    const StageRecord* stage(std::string_view name) const;
    /// Output digests across all stages, for determinism comparisons.
    std::map<std::string, std::string> output_digests() const;
};

inline constexpr const char* kStageNames[] = {"ingest", "filter", "featurize", "ks", "cv"};

struct RunOptions {
    bool resume = true;
    /// Counts provider traffic in http mode; offline runs never touch it.
    std::shared_ptr<geo::Transport> transport;
};

/// Runs ingest -> filter -> featurize -> ks -> cv, persisting each stage under
/// `<output_dir>/<stage>/` and the manifest at `<output_dir>/manifest.json`.
/// A failing stage is recorded in the manifest and the error rethrown.
RunManifest run_pipeline(const PipelineConfig& config, const RunOptions& opts = {});

enum class ReportKind { Table4, Table5, Ecdf, Incidents };
std::optional<ReportKind> parse_report_kind(std::string_view s);
std::string_view to_string(ReportKind k);

/// Writes CSV + JSON artifacts under `<output_dir>/report/` and returns their
/// paths. Throws DataError naming the stage to run when inputs are missing.
std::vector<std::filesystem::path> emit_report(const RunManifest& run, ReportKind kind,
                                               const PipelineConfig& config);

geo::ProviderSet make_providers(const PipelineConfig& config, std::shared_ptr<geo::Transport> transport = nullptr);

/// Table-1 style breakdowns of an incident set.
nlohmann::json incident_stats_json(const IncidentSet& incidents);

}  // namespace killfie::pipeline
