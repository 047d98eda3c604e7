#include "killfie/providers.hpp"

#include <cmath>
#include <cstdio>
#include <ctime>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "killfie/error.hpp"
#include "killfie/hash.hpp"
#include "killfie/io.hpp"

namespace killfie::geo {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(PlaceCategory c) { return c == PlaceCategory::Railway ? "railway" : "major_road"; }

std::optional<PlaceCategory> parse_place_category(std::string_view s) {
    if (s == "railway") return PlaceCategory::Railway;
    if (s == "major_road") return PlaceCategory::MajorRoad;
    return std::nullopt;
}

// --- cache ------------------------------------------------------------------

double canonical_coord(double degrees) {
    double r = std::round(degrees * 1e6) / 1e6;
    return r == 0.0 ? 0.0 : r;
}

std::string canonical_coord_text(double degrees) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", canonical_coord(degrees));
    return buf;
}

GeoPoint canonical_point(const GeoPoint& p) { return {canonical_coord(p.lat()), canonical_coord(p.lon())}; }

ProviderCache::ProviderCache(std::optional<fs::path> dir) : dir_(std::move(dir)) {
    if (dir_) fs::create_directories(*dir_);
}

fs::path ProviderCache::entry_path(std::string_view provider, std::string_view key, const char* ext) const {
    return *dir_ / std::string(provider) / (sha256_hex(key) + ext);
}

std::optional<std::string> ProviderCache::get(std::string_view provider, std::string_view key) {
    std::string mem_key = std::string(provider) + '\n' + std::string(key);
    {
        std::lock_guard lock(mutex_);
        if (auto it = memory_.find(mem_key); it != memory_.end()) {
            ++hits_;
            return it->second;
        }
    }
    if (dir_) {
        auto bin = entry_path(provider, key, ".bin");
        auto meta = entry_path(provider, key, ".meta");
        if (fs::exists(bin) && fs::exists(meta)) {
            try {
                auto m = json::parse(io::read_file(meta.string()));
                if (m.at("key").get<std::string>() == key) {
                    auto payload = io::read_file(bin.string());
                    std::lock_guard lock(mutex_);
                    memory_.emplace(mem_key, payload);
                    ++hits_;
                    return payload;
                }
            } catch (const std::exception&) {
                // Unreadable entries are treated as misses and rewritten.
            }
        }
    }
    ++misses_;
    return std::nullopt;
}

void ProviderCache::put(std::string_view provider, std::string_view key, std::string_view payload) {
    std::string mem_key = std::string(provider) + '\n' + std::string(key);
    {
        std::lock_guard lock(mutex_);
        memory_[mem_key] = std::string(payload);
    }
    if (!dir_) return;
    json meta = {{"provider", provider},
                 {"key", key},
                 {"bytes", payload.size()},
                 {"sha256", sha256_hex(payload)},
                 {"fetched_at", static_cast<std::int64_t>(std::time(nullptr))}};
    io::write_file(entry_path(provider, key, ".bin").string(), payload);
    io::write_file(entry_path(provider, key, ".meta").string(), meta.dump());
}

// --- cached lookups ---------------------------------------------------------

namespace {

template <typename F>
auto with_retries(const RetryPolicy& retry, F&& fetch) -> std::optional<decltype(fetch())> {
    for (int attempt = 0;; ++attempt) {
        try {
            return fetch();
        } catch (const ProviderError& e) {
            if (!e.retryable() || attempt >= retry.max_retries) return std::nullopt;
        }
    }
}

std::string point_key(const GeoPoint& p) {
    return "lat=" + canonical_coord_text(p.lat()) + "&lon=" + canonical_coord_text(p.lon());
}

}  // namespace

std::optional<double> get_elevation(const ElevationProvider& provider, ProviderCache& cache, const GeoPoint& point,
                                    const RetryPolicy& retry) {
    auto p = canonical_point(point);
    auto key = point_key(p);
    if (auto hit = cache.get("elevation", key)) return json::parse(*hit).at("elevation").get<double>();
    auto value = with_retries(retry, [&] { return provider.elevation(p); });
    if (!value) return std::nullopt;
    cache.put("elevation", key, json{{"elevation", *value}}.dump());
    return value;
}

std::optional<MapTile> get_map_tile(const TileProvider& provider, ProviderCache& cache, const GeoPoint& point,
                                    int zoom, int width, int height, const RetryPolicy& retry) {
    if (zoom < 0 || zoom > 21) throw InvalidArgument("zoom must lie in [0, 21]");
    if (width <= 0 || height <= 0) throw InvalidArgument("tile size must be positive");
    auto p = canonical_point(point);
    auto key = point_key(p) + "&zoom=" + std::to_string(zoom) + "&size=" + std::to_string(width) + "x" +
               std::to_string(height);
    std::optional<std::string> payload = cache.get("tiles", key);
    bool fetched = false;
    if (!payload) {
        payload = with_retries(retry, [&] { return provider.tile_png(p, zoom, width, height); });
        if (!payload) return std::nullopt;
        fetched = true;
    }
    MapTile tile;
    try {
        tile = decode_png(*payload);
    } catch (const DataError& e) {
        throw DataError("tile payload for " + key + " (" + std::to_string(payload->size()) +
                        " bytes): " + e.what());
    }
    if (tile.width != width || tile.height != height)
        throw DataError("tile payload for " + key + " is " + std::to_string(tile.width) + "x" +
                        std::to_string(tile.height) + ", expected " + std::to_string(width) + "x" +
                        std::to_string(height));
    if (fetched) cache.put("tiles", key, *payload);
    tile.center = p;
    tile.zoom = zoom;
    return tile;
}

std::optional<double> nearest_place_distance(const PlacesProvider& provider, ProviderCache& cache,
                                             const GeoPoint& point, PlaceCategory category, double radius_m,
                                             const RetryPolicy& retry) {
    if (!(radius_m > 0)) throw InvalidArgument("search radius must be positive");
    auto p = canonical_point(point);
    auto key = point_key(p) + "&category=" + std::string(to_string(category)) + "&radius=" + io::format_double(radius_m);
    std::optional<double> found;
    if (auto hit = cache.get("places", key)) {
        auto j = json::parse(*hit).at("distance_m");
        if (!j.is_null()) found = j.get<double>();
    } else {
        auto value = with_retries(retry, [&] { return provider.nearest_distance(p, category, radius_m); });
        if (!value) return std::nullopt;
        found = *value;
        json payload = {{"distance_m", found ? json(*found) : json(nullptr)}};
        cache.put("places", key, payload.dump());
    }
    if (!found || *found > radius_m) return radius_m;
    return std::max(0.0, *found);
}

// --- rate limiting ----------------------------------------------------------

TokenBucket::TokenBucket(double rate_per_s, double burst, Clock clock, Sleeper sleeper)
    : rate_(rate_per_s), burst_(burst), tokens_(burst), clock_(std::move(clock)), sleeper_(std::move(sleeper)) {
    if (!(rate_per_s > 0) || !(burst >= 1)) throw InvalidArgument("token bucket needs rate > 0 and burst >= 1");
    if (!clock_) clock_ = [] { return std::chrono::steady_clock::now(); };
    if (!sleeper_) sleeper_ = [](std::chrono::nanoseconds d) { std::this_thread::sleep_for(d); };
    last_ = clock_();
}

void TokenBucket::refill_locked() {
    auto now = clock_();
    double elapsed = std::chrono::duration<double>(now - last_).count();
    if (elapsed > 0) {
        tokens_ = std::min(burst_, tokens_ + elapsed * rate_);
        last_ = now;
    }
}

bool TokenBucket::try_acquire() {
    std::lock_guard lock(mutex_);
    refill_locked();
    if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return true;
    }
    return false;
}

void TokenBucket::acquire() {
    while (true) {
        std::chrono::nanoseconds wait{};
        {
            std::lock_guard lock(mutex_);
            refill_locked();
            if (tokens_ >= 1.0) {
                tokens_ -= 1.0;
                return;
            }
            wait = std::chrono::nanoseconds(static_cast<std::int64_t>((1.0 - tokens_) / rate_ * 1e9) + 1);
        }
        sleeper_(wait);
    }
}

// --- transport --------------------------------------------------------------

HttpTransport::HttpTransport(std::chrono::milliseconds timeout) : timeout_(timeout) {}

HttpResponse HttpTransport::get(const std::string& url, const std::multimap<std::string, std::string>& params,
                                const std::map<std::string, std::string>& headers) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint URL lacks a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    std::string base = url.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);
    httplib::Client client(base);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    httplib::Params p(params.begin(), params.end());
    httplib::Headers h(headers.begin(), headers.end());
    auto res = client.Get(path, p, h);
    if (!res) throw ProviderError("request to " + url + " failed: " + httplib::to_string(res.error()));
    return {res->status, res->body};
}

HttpResponse CountingTransport::get(const std::string& url, const std::multimap<std::string, std::string>& params,
                                    const std::map<std::string, std::string>& headers) {
    ++calls_;
    if (!inner_) throw ProviderError("network access is disabled", false);
    return inner_->get(url, params, headers);
}

namespace {

HttpResponse checked_get(Transport& transport, const HttpEndpoint& ep, TokenBucket* limiter,
                         const std::multimap<std::string, std::string>& params) {
    if (limiter) limiter->acquire();
    std::map<std::string, std::string> headers;
    if (!ep.api_key.empty()) headers["X-Api-Key"] = ep.api_key;
    auto res = transport.get(ep.url, params, headers);
    if (res.status == 429 || res.status >= 500)
        throw ProviderError(ep.url + " returned HTTP " + std::to_string(res.status));
    if (res.status == 404) throw ProviderError(ep.url + " has no data for this request", false);
    if (res.status != 200)
        throw ProviderError(ep.url + " returned HTTP " + std::to_string(res.status), false);
    return res;
}

std::multimap<std::string, std::string> point_params(const GeoPoint& p) {
    return {{"lat", canonical_coord_text(p.lat())}, {"lon", canonical_coord_text(p.lon())}};
}

}  // namespace

HttpElevationProvider::HttpElevationProvider(std::shared_ptr<Transport> transport, HttpEndpoint endpoint,
                                             std::shared_ptr<TokenBucket> limiter)
    : transport_(std::move(transport)), endpoint_(std::move(endpoint)), limiter_(std::move(limiter)) {}

double HttpElevationProvider::elevation(const GeoPoint& point) const {
    auto res = checked_get(*transport_, endpoint_, limiter_.get(), point_params(point));
    try {
        return json::parse(res.body).at("elevation").get<double>();
    } catch (const json::exception& e) {
        throw ProviderError("malformed elevation response from " + endpoint_.url + ": " + e.what(), false);
    }
}

HttpTileProvider::HttpTileProvider(std::shared_ptr<Transport> transport, HttpEndpoint endpoint,
                                   std::shared_ptr<TokenBucket> limiter)
    : transport_(std::move(transport)), endpoint_(std::move(endpoint)), limiter_(std::move(limiter)) {}

std::string HttpTileProvider::tile_png(const GeoPoint& center, int zoom, int width, int height) const {
    auto params = point_params(center);
    params.emplace("zoom", std::to_string(zoom));
    params.emplace("width", std::to_string(width));
    params.emplace("height", std::to_string(height));
    return checked_get(*transport_, endpoint_, limiter_.get(), params).body;
}

HttpPlacesProvider::HttpPlacesProvider(std::shared_ptr<Transport> transport, HttpEndpoint endpoint,
                                       std::shared_ptr<TokenBucket> limiter)
    : transport_(std::move(transport)), endpoint_(std::move(endpoint)), limiter_(std::move(limiter)) {}

std::optional<double> HttpPlacesProvider::nearest_distance(const GeoPoint& point, PlaceCategory category,
                                                           double radius_m) const {
    auto params = point_params(point);
    params.emplace("category", std::string(to_string(category)));
    params.emplace("radius", io::format_double(radius_m));
    auto res = checked_get(*transport_, endpoint_, limiter_.get(), params);
    try {
        auto d = json::parse(res.body).at("distance_m");
        if (d.is_null()) return std::nullopt;
        return d.get<double>();
    } catch (const json::exception& e) {
        throw ProviderError("malformed places response from " + endpoint_.url + ": " + e.what(), false);
    }
}

// --- offline fixtures -------------------------------------------------------

std::string ElevationGrid::to_json() const {
    json j = {{"lat0", lat0}, {"lon0", lon0}, {"dlat", dlat}, {"dlon", dlon},
              {"rows", rows}, {"cols", cols}, {"values", values}};
    return j.dump();
}

ElevationGrid ElevationGrid::from_json(std::string_view text) {
    auto j = json::parse(text);
    ElevationGrid g;
    g.lat0 = j.at("lat0").get<double>();
    g.lon0 = j.at("lon0").get<double>();
    g.dlat = j.at("dlat").get<double>();
    g.dlon = j.at("dlon").get<double>();
    g.rows = j.at("rows").get<std::size_t>();
    g.cols = j.at("cols").get<std::size_t>();
    g.values = j.at("values").get<std::vector<double>>();
    return g;
}

GridElevationProvider::GridElevationProvider(ElevationGrid grid) : grid_(std::move(grid)) {
    if (grid_.rows < 2 || grid_.cols < 2 || !(grid_.dlat > 0) || !(grid_.dlon > 0) ||
        grid_.values.size() != grid_.rows * grid_.cols)
        throw DataError("elevation grid needs >= 2x2 nodes, positive spacing and rows*cols values");
}

GridElevationProvider GridElevationProvider::load(const std::string& path) {
    return GridElevationProvider(ElevationGrid::from_json(io::read_file(path)));
}

double GridElevationProvider::elevation(const GeoPoint& p) const {
    double fr = (p.lat() - grid_.lat0) / grid_.dlat;
    double fc = (p.lon() - grid_.lon0) / grid_.dlon;
    double max_r = static_cast<double>(grid_.rows - 1), max_c = static_cast<double>(grid_.cols - 1);
    if (fr < 0 || fc < 0 || fr > max_r || fc > max_c)
        throw ProviderError("point outside elevation grid coverage", false);
    auto r0 = static_cast<std::size_t>(std::min(std::floor(fr), max_r - 1));
    auto c0 = static_cast<std::size_t>(std::min(std::floor(fc), max_c - 1));
    double tr = fr - static_cast<double>(r0), tc = fc - static_cast<double>(c0);
    double v00 = grid_.at(r0, c0), v01 = grid_.at(r0, c0 + 1);
    double v10 = grid_.at(r0 + 1, c0), v11 = grid_.at(r0 + 1, c0 + 1);
    return (1 - tr) * ((1 - tc) * v00 + tc * v01) + tr * ((1 - tc) * v10 + tc * v11);
}

GeoPoint DirectoryTileProvider::quantize(const GeoPoint& p) {
    auto q = [](double v) {
        double r = std::round(v * 1e4) / 1e4;
        return r == 0.0 ? 0.0 : r;
    };
    return {q(p.lat()), q(p.lon())};
}

std::string DirectoryTileProvider::file_name(const GeoPoint& center, int zoom, int width, int height) {
    auto q = quantize(center);
    char buf[128];
    std::snprintf(buf, sizeof(buf), "z%d_%dx%d_%.4f_%.4f.png", zoom, width, height, q.lat(), q.lon());
    return buf;
}

std::string DirectoryTileProvider::tile_png(const GeoPoint& center, int zoom, int width, int height) const {
    auto path = dir_ / file_name(center, zoom, width, height);
    if (!fs::exists(path)) throw ProviderError("no tile fixture " + path.string(), false);
    return io::read_file(path.string());
}

double distance_to_feature_m(const GeoPoint& p, const PlaceFeature& f) {
    if (f.vertices.empty()) return std::numeric_limits<double>::infinity();
    if (f.vertices.size() == 1) return haversine_m(p, f.vertices[0]);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < f.vertices.size(); ++i)
        best = std::min(best, distance_to_segment_m(p, f.vertices[i], f.vertices[i + 1]));
    return best;
}

std::vector<PlaceFeature> FixturePlacesProvider::parse_csv(std::string_view text) {
    auto rows = io::parse_csv(text);
    std::vector<PlaceFeature> features;
    if (rows.empty()) return features;
    if (rows[0].fields != std::vector<std::string>{"feature_id", "category", "lat", "lon"})
        throw DataError("places CSV header must be: feature_id,category,lat,lon");
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r].fields;
        auto where = "places CSV line " + std::to_string(rows[r].line) + ": ";
        if (f.size() != 4) throw DataError(where + "expected 4 fields");
        auto cat = parse_place_category(f[1]);
        if (!cat) throw DataError(where + "unknown category '" + f[1] + "'");
        double lat = 0, lon = 0;
        try {
            lat = std::stod(f[2]);
            lon = std::stod(f[3]);
        } catch (const std::exception&) {
            throw DataError(where + "malformed coordinate");
        }
        if (features.empty() || features.back().id != f[0]) features.push_back({f[0], *cat, {}});
        if (features.back().category != *cat) throw DataError(where + "category changes within a feature");
        features.back().vertices.emplace_back(lat, lon);
    }
    return features;
}

std::string FixturePlacesProvider::to_csv(const std::vector<PlaceFeature>& features) {
    std::string out = io::csv_line({"feature_id", "category", "lat", "lon"});
    for (const auto& f : features)
        for (const auto& v : f.vertices)
            out += io::csv_line({f.id, std::string(to_string(f.category)), io::format_double(v.lat()),
                                 io::format_double(v.lon())});
    return out;
}

FixturePlacesProvider FixturePlacesProvider::load(const std::string& path) {
    return FixturePlacesProvider(parse_csv(io::read_file(path)));
}

std::optional<double> FixturePlacesProvider::nearest_distance(const GeoPoint& point, PlaceCategory category,
                                                              double radius_m) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& f : features_)
        if (f.category == category) best = std::min(best, distance_to_feature_m(point, f));
    if (best > radius_m) return std::nullopt;
    return best;
}

}  // namespace killfie::geo
