#include <doctest.h>

#include <atomic>
#include <cmath>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "killfie/error.hpp"
#include "killfie/geo.hpp"
#include "killfie/hash.hpp"
#include "killfie/io.hpp"
#include "killfie/providers.hpp"
#include "unit/util.hpp"

using namespace killfie;
using namespace killfie::geo;

namespace {

class CountingElevation final : public ElevationProvider {
public:
    explicit CountingElevation(double v, int failures = 0, bool retryable = true)
        : v_(v), failures_(failures), retryable_(retryable) {}
    double elevation(const GeoPoint& p) const override {
        ++calls;
        last = p;
        if (failures_-- > 0) throw ProviderError("unavailable", retryable_);
        return v_;
    }
    mutable int calls = 0;
    mutable GeoPoint last{0, 0};

private:
    double v_;
    mutable int failures_;
    bool retryable_;
};

class BytesTiles final : public TileProvider {
public:
    explicit BytesTiles(std::string bytes) : bytes_(std::move(bytes)) {}
    std::string tile_png(const GeoPoint&, int, int, int) const override { return bytes_; }

private:
    std::string bytes_;
};

MapTile solid(int w, int h, Rgb c) {
    MapTile t;
    t.width = w;
    t.height = h;
    t.pixels.resize(static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) t.set(x, y, c);
    return t;
}

}  // namespace

TEST_SUITE("geoproviders") {

TEST_CASE("coordinate canonicalization") {
    CHECK(canonical_coord_text(1.23456789) == "1.234568");
    CHECK(canonical_coord_text(-0.0000001) == "0.000000");
    CHECK(canonical_coord(-0.0) == 0.0);
    CHECK_FALSE(std::signbit(canonical_coord(-0.0000001)));
}

TEST_CASE("elevation cache hits and misses") {
    ProviderCache cache;
    CountingElevation provider(42.0);
    GeoPoint p(10.1234567, 20.7654321);
    CHECK(*get_elevation(provider, cache, p) == 42.0);
    CHECK(*get_elevation(provider, cache, p) == 42.0);
    CHECK(*get_elevation(provider, cache, GeoPoint(10.12345671, 20.76543209)) == 42.0);
    CHECK(provider.calls == 1);
    CHECK(cache.misses() == 1);
    CHECK(cache.hits() == 2);
    CHECK(provider.last.lat() == canonical_coord(10.1234567));
}

TEST_CASE("constant and negative elevations pass through") {
    ProviderCache cache;
    CHECK(*get_elevation(ConstantElevationProvider(0.0), cache, GeoPoint(0, 0)) == 0.0);
    ProviderCache cache2;
    CHECK(*get_elevation(ConstantElevationProvider(-10.0), cache2, GeoPoint(1, 1)) == -10.0);
}

TEST_CASE("retries then gives up") {
    ProviderCache cache;
    CountingElevation flaky(5.0, 2);
    CHECK(*get_elevation(flaky, cache, GeoPoint(0, 0), RetryPolicy{3}) == 5.0);
    CHECK(flaky.calls == 3);

    CountingElevation down(5.0, 100);
    CHECK_FALSE(get_elevation(down, cache, GeoPoint(1, 0), RetryPolicy{3}));
    CHECK(down.calls == 4);

    CountingElevation fatal(5.0, 100, false);
    CHECK_FALSE(get_elevation(fatal, cache, GeoPoint(2, 0), RetryPolicy{3}));
    CHECK(fatal.calls == 1);
}

TEST_CASE("disk cache layout and persistence") {
    auto dir = testutil::temp_dir("provider_cache");
    {
        ProviderCache cache(dir);
        CountingElevation provider(7.5);
        get_elevation(provider, cache, GeoPoint(1.5, 2.5));
    }
    std::string key = "lat=1.500000&lon=2.500000";
    auto bin = dir / "elevation" / (sha256_hex(key) + ".bin");
    auto meta = dir / "elevation" / (sha256_hex(key) + ".meta");
    REQUIRE(std::filesystem::exists(bin));
    REQUIRE(std::filesystem::exists(meta));
    auto m = nlohmann::json::parse(io::read_file(meta.string()));
    CHECK(m.at("key") == key);
    CHECK(m.at("provider") == "elevation");
    CHECK(m.at("sha256") == sha256_hex(io::read_file(bin.string())));

    ProviderCache reopened(dir);
    CountingElevation provider(99.0);
    CHECK(*get_elevation(provider, reopened, GeoPoint(1.5, 2.5)) == 7.5);
    CHECK(provider.calls == 0);
    CHECK(reopened.hits() == 1);
}

TEST_CASE("png round trip and tile decoding") {
    auto tile = solid(100, 100, {200, 200, 200});
    tile.set(0, 0, {1, 2, 3});
    tile.set(99, 99, {170, 211, 223});
    auto png = encode_png(tile);
    auto back = decode_png(png);
    CHECK(back.width == 100);
    CHECK(back.height == 100);
    CHECK(back.at(0, 0) == Rgb{1, 2, 3});
    CHECK(back.at(99, 99) == Rgb{170, 211, 223});
    CHECK(back.at(50, 50) == Rgb{200, 200, 200});

    ProviderCache cache;
    auto fetched = get_map_tile(BytesTiles(png), cache, GeoPoint(5, 5), 13, 100, 100);
    REQUIRE(fetched);
    CHECK(fetched->at(0, 0) == Rgb{1, 2, 3});
    CHECK(fetched->zoom == 13);
    CHECK_THROWS_AS(get_map_tile(BytesTiles(png), cache, GeoPoint(6, 6), 13, 50, 50), DataError);
    CHECK_THROWS_AS(get_map_tile(BytesTiles("not a png"), cache, GeoPoint(7, 7), 13, 100, 100), DataError);
    CHECK_THROWS_AS(decode_png(""), DataError);
}

TEST_CASE("directory tile fixtures") {
    auto dir = testutil::temp_dir("tiles");
    GeoPoint c(12.34567, -45.6789);
    auto name = DirectoryTileProvider::file_name(c, 13, 10, 10);
    CHECK(name == "z13_10x10_12.3457_-45.6789.png");
    io::write_file((dir / name).string(), encode_png(solid(10, 10, {1, 1, 1})));
    DirectoryTileProvider provider(dir);
    ProviderCache cache;
    CHECK(get_map_tile(provider, cache, c, 13, 10, 10));
    CHECK_FALSE(get_map_tile(provider, cache, GeoPoint(0, 0), 13, 10, 10));
}

TEST_CASE("places distances") {
    GeoPoint p(20.0, 30.0);
    PlaceFeature rail{"r1", PlaceCategory::Railway, {offset(p, 0, 120)}};
    PlaceFeature road{"m1", PlaceCategory::MajorRoad, {offset(p, -500, -500), offset(p, 500, -500)}};
    FixturePlacesProvider provider({rail, road});
    ProviderCache cache;
    auto d = nearest_place_distance(provider, cache, p, PlaceCategory::Railway);
    REQUIRE(d);
    CHECK(std::abs(*d - 120.0) <= 1.0);
    auto r = nearest_place_distance(provider, cache, p, PlaceCategory::MajorRoad);
    CHECK(std::abs(*r - 500.0) <= 2.0);

    FixturePlacesProvider empty({});
    ProviderCache cache1;
    CHECK(*nearest_place_distance(empty, cache1, p, PlaceCategory::Railway) == 10000.0);
    FixturePlacesProvider far({{"f", PlaceCategory::Railway, {offset(p, 20000, 0)}}});
    ProviderCache cache2;
    CHECK(*nearest_place_distance(far, cache2, p, PlaceCategory::Railway) == 10000.0);
    FixturePlacesProvider on({{"o", PlaceCategory::Railway, {p}}});
    ProviderCache cache3;
    CHECK(*nearest_place_distance(on, cache3, p, PlaceCategory::Railway) == 0.0);

    auto csv = FixturePlacesProvider::to_csv({rail, road});
    auto parsed = FixturePlacesProvider::parse_csv(csv);
    REQUIRE(parsed.size() == 2);
    CHECK(parsed[1].vertices.size() == 2);
    CHECK_THROWS_AS(FixturePlacesProvider::parse_csv("feature_id,category,lat,lon\nx,canal,1,1\n"), DataError);
}

TEST_CASE("token bucket with a fake clock") {
    auto now = std::chrono::steady_clock::time_point{};
    std::chrono::nanoseconds slept{0};
    TokenBucket bucket(
        2.0, 2.0, [&] { return now; },
        [&](std::chrono::nanoseconds d) {
            slept += d;
            now += d;
        });
    CHECK(bucket.try_acquire());
    CHECK(bucket.try_acquire());
    CHECK_FALSE(bucket.try_acquire());
    now += std::chrono::milliseconds(500);
    CHECK(bucket.try_acquire());
    CHECK_FALSE(bucket.try_acquire());
    for (int i = 0; i < 4; ++i) bucket.acquire();
    double s = std::chrono::duration<double>(slept).count();
    CHECK(s == doctest::Approx(2.0).epsilon(0.01));
    CHECK_THROWS_AS(TokenBucket(0.0, 1.0), InvalidArgument);
}

TEST_CASE("counting transport without a backend forbids traffic") {
    auto transport = std::make_shared<CountingTransport>();
    HttpElevationProvider provider(transport, {"http://127.0.0.1:1/elevation", ""});
    ProviderCache cache;
    CHECK_FALSE(get_elevation(provider, cache, GeoPoint(0, 0)));
    CHECK(transport->calls() == 1);
}

TEST_CASE("http providers against a local server") {
    httplib::Server server;
    std::atomic<int> hits{0};
    std::string seen_key;
    server.Get("/elevation", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        seen_key = req.get_header_value("X-Api-Key");
        double lat = std::stod(req.get_param_value("lat"));
        res.set_content(nlohmann::json{{"elevation", lat * 10}}.dump(), "application/json");
    });
    server.Get("/busy", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 503;
    });
    server.Get("/tiles", [&](const httplib::Request& req, httplib::Response& res) {
        int w = std::stoi(req.get_param_value("width"));
        int h = std::stoi(req.get_param_value("height"));
        res.set_content(encode_png(solid(w, h, {170, 211, 223})), "image/png");
    });
    server.Get("/places", [&](const httplib::Request& req, httplib::Response& res) {
        nlohmann::json j = {{"distance_m", req.get_param_value("category") == "railway" ? nlohmann::json(250.0)
                                                                                        : nlohmann::json(nullptr)}};
        res.set_content(j.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    std::string base = "http://127.0.0.1:" + std::to_string(port);

    auto transport = std::make_shared<CountingTransport>(std::make_shared<HttpTransport>());
    ProviderCache cache;
    HttpElevationProvider elev(transport, {base + "/elevation", "secret"});
    CHECK(*get_elevation(elev, cache, GeoPoint(3.5, 1)) == doctest::Approx(35.0));
    CHECK(*get_elevation(elev, cache, GeoPoint(3.5, 1)) == doctest::Approx(35.0));
    CHECK(hits == 1);
    CHECK(seen_key == "secret");

    HttpElevationProvider busy(transport, {base + "/busy", ""});
    CHECK_FALSE(get_elevation(busy, cache, GeoPoint(0, 0), RetryPolicy{2}));
    CHECK(hits == 4);

    HttpTileProvider tiles(transport, {base + "/tiles", ""});
    auto t = get_map_tile(tiles, cache, GeoPoint(1, 1), 13, 20, 30);
    REQUIRE(t);
    CHECK(t->height == 30);
    CHECK(t->at(5, 5) == Rgb{170, 211, 223});

    HttpPlacesProvider places(transport, {base + "/places", ""});
    CHECK(*nearest_place_distance(places, cache, GeoPoint(1, 1), PlaceCategory::Railway) == 250.0);
    CHECK(*nearest_place_distance(places, cache, GeoPoint(1, 1), PlaceCategory::MajorRoad) == 10000.0);
    CHECK(transport->calls() == 7);

    server.stop();
    th.join();
}

}  // TEST_SUITE
