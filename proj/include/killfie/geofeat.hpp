#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "killfie/providers.hpp"

namespace killfie::geofeat {

/// Uniform points over a disk: bearing U[0, 2pi), distance radius*sqrt(U[0,1)),
/// applied with the local equirectangular approximation. Rejects |lat| > 89.
std::vector<GeoPoint> sample_disk(const GeoPoint& center, double radius_m, std::size_t n, std::uint64_t seed);

struct ElevationConfig {
    std::size_t n_near = 10;
    double r_near_m = 1000.0;
    std::size_t n_far = 5;
    double r_far_m = 5000.0;
};

/// Slots are nullopt when a provider lookup they depend on failed.
struct ElevationFeatures {
    std::optional<double> elev_here;
    std::optional<double> max_elev_nearby;     ///< max over the far sample set
    std::optional<double> max_drop_from_here;  ///< max(elev_here - s) over the near set
    std::optional<double> max_pairwise_range;  ///< max - min over the near set
};

/// Seed streams for the two sample sets, derived from the per-point seed.
std::uint64_t near_seed(std::uint64_t seed);
std::uint64_t far_seed(std::uint64_t seed);

ElevationFeatures elevation_features(const GeoPoint& point, const geo::ElevationProvider& provider,
                                     geo::ProviderCache& cache, const ElevationConfig& cfg, std::uint64_t seed,
                                     const geo::RetryPolicy& retry = {});

/// Binary per-pixel water classification.
struct WaterMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    WaterMask() = default;
    WaterMask(int w, int h, bool fill = false)
        : width(w), height(h), bits(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

    bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
};

inline constexpr geo::Rgb kDefaultWaterColor{170, 218, 255};
inline constexpr int kDefaultWaterTolerance = 12;

/// A pixel is water when some palette colour is within `tol` on every channel.
WaterMask segment_water(const geo::MapTile& tile, std::span<const geo::Rgb> palette, int tol);

struct WaterFeatures {
    double min_water_dist_px = 0.0;
    double water_fraction = 0.0;
};

/// ceil(sqrt(w^2 + h^2)); reported when the mask holds no water.
double no_water_sentinel(int width, int height);

/// Exact Euclidean distance from (cx, cy) to the nearest water pixel.
WaterFeatures water_features(const WaterMask& mask, int cx, int cy);
/// Centre defaults to (w/2, h/2) rounded down.
WaterFeatures water_features(const WaterMask& mask);

struct LocationConfig {
    ElevationConfig elevation;
    int zoom = 13;
    int tile_width = 500;
    int tile_height = 500;
    std::vector<geo::Rgb> water_palette{kDefaultWaterColor};
    int water_tolerance = kDefaultWaterTolerance;
    double search_radius_m = 10000.0;
    geo::RetryPolicy retry;
};

inline constexpr std::size_t kLocationSlots = 8;
inline constexpr std::array<std::string_view, kLocationSlots> kLocationColumns = {
    "elev_here",         "max_elev_nearby", "max_drop_from_here", "max_pairwise_range",
    "min_water_dist_px", "water_fraction",  "rail_dist_m",        "road_dist_m"};

std::optional<std::size_t> location_column_index(std::string_view name);

struct LocationFeatureBlock {
    std::array<double, kLocationSlots> values{};  ///< NaN where missing
    std::array<bool, kLocationSlots> missing{};

    std::string missing_mask() const;
    bool any_missing() const;
};

LocationFeatureBlock all_missing_block();

/// Per-tweet seed so that results do not depend on processing order.
std::uint64_t tweet_seed(std::uint64_t global_seed, std::string_view tweet_id);

/// Never aborts the whole block for one missing slot.
LocationFeatureBlock location_feature_vector(const GeoPoint& point, const geo::ProviderSet& providers,
                                             geo::ProviderCache& cache, const LocationConfig& cfg,
                                             std::uint64_t seed);

/// CSV with `tweet_id`, the eight columns (empty cell when missing) and `missing_mask`.
std::string location_features_to_csv(const std::vector<std::pair<std::string, LocationFeatureBlock>>& rows);
std::vector<std::pair<std::string, LocationFeatureBlock>> parse_location_features_csv(std::string_view text);

}  // namespace killfie::geofeat
