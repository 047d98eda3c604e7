#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "killfie/corpus.hpp"
#include "killfie/geo.hpp"

namespace killfie::geo {

// --- provider contracts -----------------------------------------------------

/// Elevation in meters; negative values (e.g. over water) are legitimate.
class ElevationProvider {
public:
    virtual ~ElevationProvider() = default;
    virtual double elevation(const GeoPoint& point) const = 0;
};

/// Rendered map tiles as PNG bytes.
class TileProvider {
public:
    virtual ~TileProvider() = default;
    virtual std::string tile_png(const GeoPoint& center, int zoom, int width, int height) const = 0;
};

enum class PlaceCategory { Railway, MajorRoad };
std::string_view to_string(PlaceCategory c);
std::optional<PlaceCategory> parse_place_category(std::string_view s);

/// Distance to the nearest feature of a category, or nullopt when nothing
/// lies within `radius_m`.
class PlacesProvider {
public:
    virtual ~PlacesProvider() = default;
    virtual std::optional<double> nearest_distance(const GeoPoint& point, PlaceCategory category,
                                                   double radius_m) const = 0;
};

// --- cache ------------------------------------------------------------------

/// Rounds a coordinate to 6 decimals; -0 is normalized to 0.
double canonical_coord(double degrees);
std::string canonical_coord_text(double degrees);
GeoPoint canonical_point(const GeoPoint& p);

/// Response cache keyed by (provider kind, canonical request). With a
/// directory it persists `<dir>/<provider>/<sha256(key)>.bin` plus a `.meta`
/// JSON sidecar; without one it is memory-only.
class ProviderCache {
public:
    explicit ProviderCache(std::optional<std::filesystem::path> dir = std::nullopt);

    std::optional<std::string> get(std::string_view provider, std::string_view key);
    void put(std::string_view provider, std::string_view key, std::string_view payload);

    std::size_t hits() const { return hits_; }
    std::size_t misses() const { return misses_; }
    const std::optional<std::filesystem::path>& directory() const { return dir_; }

private:
    std::filesystem::path entry_path(std::string_view provider, std::string_view key, const char* ext) const;

    std::optional<std::filesystem::path> dir_;
    std::mutex mutex_;
    std::unordered_map<std::string, std::string> memory_;
    std::atomic<std::size_t> hits_{0};
    std::atomic<std::size_t> misses_{0};
};

struct RetryPolicy {
    int max_retries = 3;
};

// --- cached lookups ---------------------------------------------------------

/// Provider calls are made with the canonicalized point so that cache hits and
/// misses return identical values. Unavailable providers are retried; once
/// retries are exhausted (or on a non-retryable failure) the result is nullopt.
std::optional<double> get_elevation(const ElevationProvider& provider, ProviderCache& cache, const GeoPoint& point,
                                    const RetryPolicy& retry = {});

/// Throws DataError naming the payload when the PNG cannot be decoded or its
/// dimensions differ from the request.
std::optional<MapTile> get_map_tile(const TileProvider& provider, ProviderCache& cache, const GeoPoint& point,
                                    int zoom = 13, int width = 500, int height = 500, const RetryPolicy& retry = {});

/// Returns the distance in meters, or `radius_m` itself when nothing of the
/// category lies within the radius. nullopt only for provider failure.
std::optional<double> nearest_place_distance(const PlacesProvider& provider, ProviderCache& cache,
                                             const GeoPoint& point, PlaceCategory category,
                                             double radius_m = 10000.0, const RetryPolicy& retry = {});

// --- rate limiting ----------------------------------------------------------

/// Thread-safe token bucket. `acquire` blocks until a token is available.
class TokenBucket {
public:
    using Clock = std::function<std::chrono::steady_clock::time_point()>;
    using Sleeper = std::function<void(std::chrono::nanoseconds)>;

    TokenBucket(double rate_per_s, double burst, Clock clock = {}, Sleeper sleeper = {});

    void acquire();
    bool try_acquire();
    double rate() const { return rate_; }

private:
    void refill_locked();

    double rate_;
    double burst_;
    double tokens_;
    Clock clock_;
    Sleeper sleeper_;
    std::chrono::steady_clock::time_point last_;
    std::mutex mutex_;
};

// --- transport --------------------------------------------------------------

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Minimal GET transport. Every network access in the library goes through
/// one of these, so tests can count or forbid traffic.
class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse get(const std::string& url, const std::multimap<std::string, std::string>& params,
                             const std::map<std::string, std::string>& headers) = 0;
};

/// cpp-httplib backed transport (plain HTTP).
class HttpTransport final : public Transport {
public:
    explicit HttpTransport(std::chrono::milliseconds timeout = std::chrono::seconds(10));
    HttpResponse get(const std::string& url, const std::multimap<std::string, std::string>& params,
                     const std::map<std::string, std::string>& headers) override;

private:
    std::chrono::milliseconds timeout_;
};

class CountingTransport final : public Transport {
public:
    explicit CountingTransport(std::shared_ptr<Transport> inner = nullptr) : inner_(std::move(inner)) {}
    HttpResponse get(const std::string& url, const std::multimap<std::string, std::string>& params,
                     const std::map<std::string, std::string>& headers) override;
    std::size_t calls() const { return calls_; }

private:
    std::shared_ptr<Transport> inner_;
    std::atomic<std::size_t> calls_{0};
};

struct HttpEndpoint {
    std::string url;      ///< e.g. http://host:8080/elevation
    std::string api_key;  ///< sent as `X-Api-Key` when non-empty
};

/// GET url?lat=..&lon=.. -> {"elevation": <float>}
class HttpElevationProvider final : public ElevationProvider {
public:
    HttpElevationProvider(std::shared_ptr<Transport> transport, HttpEndpoint endpoint,
                          std::shared_ptr<TokenBucket> limiter = nullptr);
    double elevation(const GeoPoint& point) const override;

private:
    std::shared_ptr<Transport> transport_;
    HttpEndpoint endpoint_;
    std::shared_ptr<TokenBucket> limiter_;
};

/// GET url?lat=..&lon=..&zoom=..&width=..&height=.. -> PNG bytes
class HttpTileProvider final : public TileProvider {
public:
    HttpTileProvider(std::shared_ptr<Transport> transport, HttpEndpoint endpoint,
                     std::shared_ptr<TokenBucket> limiter = nullptr);
    std::string tile_png(const GeoPoint& center, int zoom, int width, int height) const override;

private:
    std::shared_ptr<Transport> transport_;
    HttpEndpoint endpoint_;
    std::shared_ptr<TokenBucket> limiter_;
};

/// GET url?lat=..&lon=..&category=..&radius=.. -> {"distance_m": <float|null>}
class HttpPlacesProvider final : public PlacesProvider {
public:
    HttpPlacesProvider(std::shared_ptr<Transport> transport, HttpEndpoint endpoint,
                       std::shared_ptr<TokenBucket> limiter = nullptr);
    std::optional<double> nearest_distance(const GeoPoint& point, PlaceCategory category,
                                           double radius_m) const override;

private:
    std::shared_ptr<Transport> transport_;
    HttpEndpoint endpoint_;
    std::shared_ptr<TokenBucket> limiter_;
};

// --- offline fixtures -------------------------------------------------------

class ConstantElevationProvider final : public ElevationProvider {
public:
    explicit ConstantElevationProvider(double meters) : meters_(meters) {}
    double elevation(const GeoPoint&) const override { return meters_; }

private:
    double meters_;
};

class FunctionElevationProvider final : public ElevationProvider {
public:
    explicit FunctionElevationProvider(std::function<double(const GeoPoint&)> fn) : fn_(std::move(fn)) {}
    double elevation(const GeoPoint& p) const override { return fn_(p); }

private:
    std::function<double(const GeoPoint&)> fn_;
};

/// Regular lat/lon grid; row r holds latitude lat0 + r*dlat, column c holds
/// longitude lon0 + c*dlon. Queries are bilinearly interpolated.
struct ElevationGrid {
    double lat0 = 0, lon0 = 0, dlat = 0, dlon = 0;
    std::size_t rows = 0, cols = 0;
    std::vector<double> values;  ///< row-major

    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    std::string to_json() const;
    static ElevationGrid from_json(std::string_view text);
};

class GridElevationProvider final : public ElevationProvider {
public:
    explicit GridElevationProvider(ElevationGrid grid);
    static GridElevationProvider load(const std::string& path);
    /// Throws a non-retryable ProviderError outside grid coverage.
    double elevation(const GeoPoint& p) const override;

private:
    ElevationGrid grid_;
};

/// Tile fixtures stored as `<dir>/z<zoom>_<w>x<h>_<lat>_<lon>.png` with the
/// centre quantized to 4 decimals.
class DirectoryTileProvider final : public TileProvider {
public:
    explicit DirectoryTileProvider(std::filesystem::path dir) : dir_(std::move(dir)) {}
    std::string tile_png(const GeoPoint& center, int zoom, int width, int height) const override;

    static std::string file_name(const GeoPoint& center, int zoom, int width, int height);
    static GeoPoint quantize(const GeoPoint& p);

private:
    std::filesystem::path dir_;
};

/// A point (one vertex) or polyline feature.
struct PlaceFeature {
    std::string id;
    PlaceCategory category = PlaceCategory::Railway;
    std::vector<GeoPoint> vertices;
};

double distance_to_feature_m(const GeoPoint& p, const PlaceFeature& f);

/// Loaded from CSV `feature_id,category,lat,lon`; consecutive rows sharing a
/// feature id form a polyline.
class FixturePlacesProvider final : public PlacesProvider {
public:
    explicit FixturePlacesProvider(std::vector<PlaceFeature> features) : features_(std::move(features)) {}
    static FixturePlacesProvider load(const std::string& path);
    static std::vector<PlaceFeature> parse_csv(std::string_view text);
    static std::string to_csv(const std::vector<PlaceFeature>& features);

    std::optional<double> nearest_distance(const GeoPoint& point, PlaceCategory category,
                                           double radius_m) const override;

private:
    std::vector<PlaceFeature> features_;
};

/// The three providers a location feature extraction needs.
struct ProviderSet {
    std::shared_ptr<const ElevationProvider> elevation;
    std::shared_ptr<const TileProvider> tiles;
    std::shared_ptr<const PlacesProvider> places;
};

}  // namespace killfie::geo
