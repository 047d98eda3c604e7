#include "killfie/geofeat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "killfie/error.hpp"
#include "killfie/hash.hpp"
#include "killfie/io.hpp"

namespace killfie::geofeat {

std::vector<GeoPoint> sample_disk(const GeoPoint& center, double radius_m, std::size_t n, std::uint64_t seed) {
    if (!(radius_m > 0)) throw InvalidArgument("sample_disk: radius must be positive");
    if (n < 1) throw InvalidArgument("sample_disk: need at least one sample");
    if (std::abs(center.lat()) > 89.0)
        throw InvalidArgument("sample_disk: equirectangular offsets are invalid beyond 89 degrees latitude");
    std::mt19937_64 rng(seed);
    std::vector<GeoPoint> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        double theta = 2.0 * std::numbers::pi * unit_interval(rng());
        double d = radius_m * std::sqrt(unit_interval(rng()));
        out.push_back(geo::offset(center, d * std::cos(theta), d * std::sin(theta)));
    }
    return out;
}

std::uint64_t near_seed(std::uint64_t seed) { return derive_seed(seed, "elevation/near"); }
std::uint64_t far_seed(std::uint64_t seed) { return derive_seed(seed, "elevation/far"); }

ElevationFeatures elevation_features(const GeoPoint& point, const geo::ElevationProvider& provider,
                                     geo::ProviderCache& cache, const ElevationConfig& cfg, std::uint64_t seed,
                                     const geo::RetryPolicy& retry) {
    auto lookup_all = [&](const std::vector<GeoPoint>& pts) -> std::optional<std::vector<double>> {
        std::vector<double> out;
        out.reserve(pts.size());
        for (const auto& p : pts) {
            auto e = geo::get_elevation(provider, cache, p, retry);
            if (!e) return std::nullopt;
            out.push_back(*e);
        }
        return out;
    };

    ElevationFeatures f;
    f.elev_here = geo::get_elevation(provider, cache, point, retry);

    if (auto far = lookup_all(sample_disk(point, cfg.r_far_m, cfg.n_far, far_seed(seed))))
        f.max_elev_nearby = *std::max_element(far->begin(), far->end());

    if (auto near = lookup_all(sample_disk(point, cfg.r_near_m, cfg.n_near, near_seed(seed)))) {
        auto [lo, hi] = std::minmax_element(near->begin(), near->end());
        f.max_pairwise_range = *hi - *lo;
        if (f.elev_here) f.max_drop_from_here = *f.elev_here - *lo;
    }
    return f;
}

WaterMask segment_water(const geo::MapTile& tile, std::span<const geo::Rgb> palette, int tol) {
    if (palette.empty()) throw InvalidArgument("segment_water: empty palette");
    if (tol < 0) throw InvalidArgument("segment_water: negative tolerance");
    WaterMask mask(tile.width, tile.height);
    const std::size_t n = static_cast<std::size_t>(tile.width) * tile.height;
    for (std::size_t i = 0; i < n; ++i) {
        int r = tile.pixels[3 * i], g = tile.pixels[3 * i + 1], b = tile.pixels[3 * i + 2];
        for (const auto& c : palette) {
            if (std::abs(r - c.r) <= tol && std::abs(g - c.g) <= tol && std::abs(b - c.b) <= tol) {
                mask.bits[i] = 1;
                break;
            }
        }
    }
    return mask;
}

double no_water_sentinel(int width, int height) {
    return std::ceil(std::sqrt(static_cast<double>(width) * width + static_cast<double>(height) * height));
}

WaterFeatures water_features(const WaterMask& mask, int cx, int cy) {
    // A single pass over the mask: the nearest water pixel to one fixed point
    // only needs the minimum integer squared distance.
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    std::size_t water = 0;
    for (int y = 0; y < mask.height; ++y) {
        const std::uint8_t* row = mask.bits.data() + static_cast<std::size_t>(y) * mask.width;
        std::int64_t dy = y - cy;
        for (int x = 0; x < mask.width; ++x) {
            if (!row[x]) continue;
            ++water;
            std::int64_t dx = x - cx;
            best = std::min(best, dx * dx + dy * dy);
        }
    }
    WaterFeatures f;
    const auto total = static_cast<double>(mask.width) * mask.height;
    f.water_fraction = total > 0 ? static_cast<double>(water) / total : 0.0;
    f.min_water_dist_px = water ? std::sqrt(static_cast<double>(best)) : no_water_sentinel(mask.width, mask.height);
    return f;
}

WaterFeatures water_features(const WaterMask& mask) { return water_features(mask, mask.width / 2, mask.height / 2); }

std::optional<std::size_t> location_column_index(std::string_view name) {
    for (std::size_t i = 0; i < kLocationColumns.size(); ++i)
        if (kLocationColumns[i] == name) return i;
    return std::nullopt;
}

std::string LocationFeatureBlock::missing_mask() const {
    std::string s;
    for (bool m : missing) s.push_back(m ? '1' : '0');
    return s;
}

bool LocationFeatureBlock::any_missing() const { return std::find(missing.begin(), missing.end(), true) != missing.end(); }

LocationFeatureBlock all_missing_block() {
    LocationFeatureBlock b;
    b.values.fill(std::numeric_limits<double>::quiet_NaN());
    b.missing.fill(true);
    return b;
}

std::uint64_t tweet_seed(std::uint64_t global_seed, std::string_view tweet_id) {
    return derive_seed(global_seed, tweet_id);
}

LocationFeatureBlock location_feature_vector(const GeoPoint& point, const geo::ProviderSet& providers,
                                             geo::ProviderCache& cache, const LocationConfig& cfg,
                                             std::uint64_t seed) {
    auto block = all_missing_block();
    auto put = [&](std::size_t slot, std::optional<double> v) {
        if (v && std::isfinite(*v)) {
            block.values[slot] = *v;
            block.missing[slot] = false;
        }
    };
    if (providers.elevation) {
        auto e = elevation_features(point, *providers.elevation, cache, cfg.elevation, seed, cfg.retry);
        put(0, e.elev_here);
        put(1, e.max_elev_nearby);
        put(2, e.max_drop_from_here);
        put(3, e.max_pairwise_range);
    }
    if (providers.tiles) {
        auto tile = geo::get_map_tile(*providers.tiles, cache, point, cfg.zoom, cfg.tile_width, cfg.tile_height,
                                      cfg.retry);
        if (tile) {
            auto w = water_features(segment_water(*tile, cfg.water_palette, cfg.water_tolerance));
            put(4, w.min_water_dist_px);
            put(5, w.water_fraction);
        }
    }
    if (providers.places) {
        put(6, geo::nearest_place_distance(*providers.places, cache, point, geo::PlaceCategory::Railway,
                                           cfg.search_radius_m, cfg.retry));
        put(7, geo::nearest_place_distance(*providers.places, cache, point, geo::PlaceCategory::MajorRoad,
                                           cfg.search_radius_m, cfg.retry));
    }
    return block;
}

std::string location_features_to_csv(const std::vector<std::pair<std::string, LocationFeatureBlock>>& rows) {
    std::vector<std::string> header{"tweet_id"};
    header.insert(header.end(), kLocationColumns.begin(), kLocationColumns.end());
    header.emplace_back("missing_mask");
    std::string out = io::csv_line(header);
    for (const auto& [id, b] : rows) {
        std::vector<std::string> f{id};
        for (std::size_t i = 0; i < kLocationSlots; ++i) f.push_back(b.missing[i] ? "" : io::format_double(b.values[i]));
        f.push_back(b.missing_mask());
        out += io::csv_line(f);
    }
    return out;
}

std::vector<std::pair<std::string, LocationFeatureBlock>> parse_location_features_csv(std::string_view text) {
    auto rows = io::parse_csv(text);
    std::vector<std::pair<std::string, LocationFeatureBlock>> out;
    if (rows.empty()) return out;
    std::vector<std::string> header{"tweet_id"};
    header.insert(header.end(), kLocationColumns.begin(), kLocationColumns.end());
    header.emplace_back("missing_mask");
    if (rows[0].fields != header) throw DataError("location feature CSV has unexpected columns");
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r].fields;
        if (f.size() != header.size())
            throw DataError("location feature CSV line " + std::to_string(rows[r].line) + ": wrong field count");
        auto b = all_missing_block();
        for (std::size_t i = 0; i < kLocationSlots; ++i) {
            if (f[i + 1].empty()) continue;
            try {
                b.values[i] = std::stod(f[i + 1]);
                b.missing[i] = false;
            } catch (const std::exception&) {
                throw DataError("location feature CSV line " + std::to_string(rows[r].line) + ": bad number");
            }
        }
        out.emplace_back(f[0], b);
    }
    return out;
}

}  // namespace killfie::geofeat
