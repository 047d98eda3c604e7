#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "killfie/corpus.hpp"
#include "killfie/geofeat.hpp"
#include "killfie/providers.hpp"

namespace killfie::synth {

struct Cliff {
    GeoPoint center;
    double radius_m;
    double height_m;
};

struct Lake {
    GeoPoint center;
    double radius_m;
};

struct WorldParams {
    std::uint64_t seed = 1;
    double lat_min = 10.0, lat_max = 10.6;
    double lon_min = 76.0, lon_max = 76.6;
    std::size_t cliffs = 6;
    std::size_t lakes = 6;
    std::size_t railways = 2;
    std::size_t roads = 3;
};

inline constexpr geo::Rgb kLandColor{236, 232, 224};

/// In-memory landscape of plateau cliffs, circular lakes and rail/road
/// polylines on a gently varying ground. Serves all three provider roles.
class SyntheticWorld final : public geo::ElevationProvider, public geo::TileProvider, public geo::PlacesProvider {
public:
    static SyntheticWorld generate(const WorldParams& params);

    const WorldParams& params() const { return params_; }
    const std::vector<Cliff>& cliffs() const { return cliffs_; }
    const std::vector<Lake>& lakes() const { return lakes_; }
    const std::vector<geo::PlaceFeature>& features() const { return features_; }

    double ground(const GeoPoint& p) const;
    double elevation(const GeoPoint& p) const override;
    bool is_water(const GeoPoint& p) const;

    geo::MapTile render_tile(const GeoPoint& center, int zoom, int width, int height) const;
    std::string tile_png(const GeoPoint& center, int zoom, int width, int height) const override;
    std::optional<double> nearest_distance(const GeoPoint& point, geo::PlaceCategory category,
                                           double radius_m) const override;

    geo::ElevationGrid elevation_grid(double step_deg) const;

    /// Sampling helpers for planted populations. Results are rounded to the
    /// canonical 6-decimal grid.
    GeoPoint near_cliff_edge(std::mt19937_64& rng) const;
    GeoPoint near_lake(std::mt19937_64& rng) const;
    GeoPoint near_road(std::mt19937_64& rng) const;
    /// At least 7 km from every cliff and lake, 2 km from every line.
    GeoPoint plain(std::mt19937_64& rng) const;

private:
    WorldParams params_;
    std::vector<Cliff> cliffs_;
    std::vector<Lake> lakes_;
    std::vector<geo::PlaceFeature> features_;
};

geo::ProviderSet world_providers(std::shared_ptr<const SyntheticWorld> world);

struct CorpusParams {
    std::size_t tweets = 1000;
    double dangerous_fraction = 0.3;
    double unsure_fraction = 0.03;
    double geo_fraction = 0.9;
    std::size_t common_set = 60;
    std::uint64_t seed = 1;
};

struct SynthCorpus {
    std::vector<TweetRecord> tweets;
    std::vector<AnnotationRecord> annotations;
    std::vector<std::string> common_set;
};

/// Dangerous records sit near cliffs, lakes or roads and carry captions from
/// a danger word pool; safe records mostly sit on open plains.
SynthCorpus generate_corpus(const SyntheticWorld& world, const CorpusParams& params);

struct FixtureOptions {
    WorldParams world;
    CorpusParams corpus;
    geofeat::LocationConfig location;
    double grid_step_deg = 0.001;
    bool write_tiles = true;
    /// Merge-patched into the generated pipeline config before it is written.
    nlohmann::json config_patch = nlohmann::json::object();
};

struct FixtureFiles {
    std::filesystem::path tweets, annotations, common_set, elevation_grid, places, tiles, config;
};

/// Writes tweets.jsonl, annotations.csv, common_set.txt, elevation.json,
/// places.csv, tiles/ and a pipeline config.json under `dir`.
FixtureFiles write_fixture(const std::filesystem::path& dir, const FixtureOptions& opts);

}  // namespace killfie::synth
