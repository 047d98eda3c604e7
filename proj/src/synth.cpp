#include "killfie/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "killfie/error.hpp"
#include "killfie/hash.hpp"
#include "killfie/io.hpp"
#include "killfie/pipeline.hpp"

namespace killfie::synth {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kMarginDeg = 0.06;

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit_interval(rng()); }

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
    return static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

GeoPoint round_point(const GeoPoint& p) { return geo::canonical_point(p); }

GeoPoint random_inside(const WorldParams& w, std::mt19937_64& rng) {
    return {uniform(rng, w.lat_min + kMarginDeg, w.lat_max - kMarginDeg),
            uniform(rng, w.lon_min + kMarginDeg, w.lon_max - kMarginDeg)};
}

const std::vector<std::string> kBenignCaptions = {
    "woman smiling at the camera",  "man wearing a black hat",      "group of friends in a room",
    "plate of food on a table",     "dog sitting on the couch",     "person holding a phone",
    "girl with long brown hair",    "man in a white shirt",         "two people posing indoors",
    "cake with candles on a table", "woman wearing sunglasses",     "boy sitting on a chair",
    "people at a birthday party",   "man with a beard smiling",     "cup of coffee on a desk",
    "woman in a red dress",         "child playing with a toy",     "friends sitting in a restaurant",
};

const std::vector<std::string> kHeightCaptions = {
    "person standing on the edge of a cliff", "man sitting on a rock ledge",      "steep drop below the mountain",
    "woman on top of a high cliff",           "person leaning over a tall cliff", "rocky mountain edge behind man",
};

const std::vector<std::string> kWaterCaptions = {
    "person standing in deep water", "man on rocks near big waves", "girl sitting on the river bank",
    "woman standing in the lake",    "waves crashing behind person", "boy swimming in the river",
};

const std::vector<std::string> kVehicleCaptions = {
    "man sitting in a moving car",   "person standing on a busy road", "woman on a motorcycle on the road",
    "man driving a car on highway",  "traffic behind person on road",  "person near a fast truck",
};

const std::vector<std::string> kOtherCaptions = {
    "man holding a gun",       "person with a large snake", "woman holding a pistol",
    "man next to an elephant", "person near a wild bear",   "boy holding a rifle",
};

const std::vector<std::string> kBenignText = {
    "Lunch with friends #selfie",        "Happy birthday to me #bday",   "New haircut today #selfie",
    "Sunday vibes #relax",               "Coffee time #morning",         "Best day ever with the squad",
    "Feeling good today #selfie #me",    "At the office again",          "Family dinner tonight #family",
    "Throwback to last weekend #tbt",
};

const std::vector<std::string> kDangerText = {
    "Living on the edge #adventure #selfie", "No fear at the top #cliff",   "Extreme selfie #risky #yolo",
    "Hanging out near the waves #danger",    "Look how high we are #edge", "Selfie on the tracks #thrill",
};

enum class Kind { Height, Water, Vehicle, Other, Safe, Unsure };

std::vector<std::string> hashtags_of(const std::string& text) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '#') continue;
        std::size_t j = i + 1;
        while (j < text.size() && (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_')) ++j;
        if (j > i + 1) out.push_back(text.substr(i + 1, j - i - 1));
        i = j;
    }
    return out;
}

}  // namespace

SyntheticWorld SyntheticWorld::generate(const WorldParams& params) {
    if (!(params.lat_max - params.lat_min > 3 * kMarginDeg) || !(params.lon_max - params.lon_min > 3 * kMarginDeg))
        throw InvalidArgument("synthetic world bounds are too small");
    SyntheticWorld w;
    w.params_ = params;
    std::mt19937_64 rng(derive_seed(params.seed, "world"));
    std::vector<GeoPoint> placed;
    auto place = [&](double min_sep_m) {
        for (int attempt = 0; attempt < 10000; ++attempt) {
            GeoPoint p = random_inside(params, rng);
            bool ok = true;
            for (const auto& q : placed) ok = ok && geo::haversine_m(p, q) >= min_sep_m;
            if (ok) {
                placed.push_back(p);
                return p;
            }
        }
        throw InvalidArgument("cannot place synthetic features; enlarge the world or reduce counts");
    };
    for (std::size_t i = 0; i < params.cliffs; ++i) {
        GeoPoint c = place(8000.0);
        w.cliffs_.push_back({c, uniform(rng, 800.0, 1400.0), uniform(rng, 150.0, 400.0)});
    }
    for (std::size_t i = 0; i < params.lakes; ++i) {
        GeoPoint c = place(8000.0);
        w.lakes_.push_back({c, uniform(rng, 500.0, 1100.0)});
    }
    auto add_line = [&](geo::PlaceCategory cat, std::size_t idx) {
        geo::PlaceFeature f;
        f.id = std::string(cat == geo::PlaceCategory::Railway ? "rail_" : "road_") + std::to_string(idx);
        f.category = cat;
        bool east_west = pick(rng, 2) == 0;
        const int n = 6;
        double base = east_west ? uniform(rng, params.lat_min + kMarginDeg, params.lat_max - kMarginDeg)
                                : uniform(rng, params.lon_min + kMarginDeg, params.lon_max - kMarginDeg);
        for (int v = 0; v < n; ++v) {
            double t = static_cast<double>(v) / (n - 1);
            double jitter = uniform(rng, -0.03, 0.03);
            if (east_west)
                f.vertices.push_back(round_point({std::clamp(base + jitter, params.lat_min, params.lat_max),
                                                  params.lon_min + t * (params.lon_max - params.lon_min)}));
            else
                f.vertices.push_back(round_point({params.lat_min + t * (params.lat_max - params.lat_min),
                                                  std::clamp(base + jitter, params.lon_min, params.lon_max)}));
        }
        w.features_.push_back(std::move(f));
    };
    for (std::size_t i = 0; i < params.railways; ++i) add_line(geo::PlaceCategory::Railway, i);
    for (std::size_t i = 0; i < params.roads; ++i) add_line(geo::PlaceCategory::MajorRoad, i);
    return w;
}

double SyntheticWorld::ground(const GeoPoint& p) const {
    double u = (p.lon() - params_.lon_min) / 0.3, v = (p.lat() - params_.lat_min) / 0.4;
    return 40.0 + 15.0 * std::sin(2 * kPi * u) * std::cos(2 * kPi * v);
}

double SyntheticWorld::elevation(const GeoPoint& p) const {
    double h = ground(p);
    for (const auto& c : cliffs_)
        if (geo::haversine_m(p, c.center) <= c.radius_m) h += c.height_m;
    for (const auto& l : lakes_)
        if (geo::haversine_m(p, l.center) <= l.radius_m) h -= 5.0;
    return h;
}

bool SyntheticWorld::is_water(const GeoPoint& p) const {
    for (const auto& l : lakes_)
        if (geo::haversine_m(p, l.center) <= l.radius_m) return true;
    return false;
}

geo::MapTile SyntheticWorld::render_tile(const GeoPoint& center, int zoom, int width, int height) const {
    geo::MapTile tile;
    tile.center = center;
    tile.zoom = zoom;
    tile.width = width;
    tile.height = height;
    tile.pixels.resize(static_cast<std::size_t>(width) * height * 3);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) tile.set(x, y, kLandColor);
    const double mpp = geo::meters_per_pixel(center.lat(), zoom);
    const double cos_lat = std::cos(center.lat() * kPi / 180.0);
    for (const auto& l : lakes_) {
        double ln = (l.center.lat() - center.lat()) * geo::kMetersPerDegree;
        double le = (l.center.lon() - center.lon()) * geo::kMetersPerDegree * cos_lat;
        // Lake centre and radius in pixel space; pixel (w/2, h/2) is the tile centre.
        double cx = width / 2 + le / mpp, cy = height / 2 - ln / mpp, r = l.radius_m / mpp;
        int x0 = std::max(0, static_cast<int>(std::floor(cx - r))), x1 = std::min(width - 1, static_cast<int>(std::ceil(cx + r)));
        int y0 = std::max(0, static_cast<int>(std::floor(cy - r))), y1 = std::min(height - 1, static_cast<int>(std::ceil(cy + r)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) tile.set(x, y, geofeat::kDefaultWaterColor);
    }
    return tile;
}

std::string SyntheticWorld::tile_png(const GeoPoint& center, int zoom, int width, int height) const {
    return geo::encode_png(render_tile(center, zoom, width, height));
}

std::optional<double> SyntheticWorld::nearest_distance(const GeoPoint& point, geo::PlaceCategory category,
                                                       double radius_m) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& f : features_)
        if (f.category == category) best = std::min(best, geo::distance_to_feature_m(point, f));
    if (best > radius_m) return std::nullopt;
    return best;
}

geo::ElevationGrid SyntheticWorld::elevation_grid(double step_deg) const {
    if (!(step_deg > 0)) throw InvalidArgument("grid step must be positive");
    geo::ElevationGrid g;
    g.lat0 = params_.lat_min;
    g.lon0 = params_.lon_min;
    g.dlat = g.dlon = step_deg;
    g.rows = static_cast<std::size_t>(std::floor((params_.lat_max - params_.lat_min) / step_deg + 1e-9)) + 1;
    g.cols = static_cast<std::size_t>(std::floor((params_.lon_max - params_.lon_min) / step_deg + 1e-9)) + 1;
    g.values.resize(g.rows * g.cols);
    for (std::size_t r = 0; r < g.rows; ++r)
        for (std::size_t c = 0; c < g.cols; ++c) {
            GeoPoint p(g.lat0 + static_cast<double>(r) * step_deg, g.lon0 + static_cast<double>(c) * step_deg);
            g.values[r * g.cols + c] = std::round(elevation(p) * 100.0) / 100.0;
        }
    return g;
}

GeoPoint SyntheticWorld::near_cliff_edge(std::mt19937_64& rng) const {
    if (cliffs_.empty()) throw InvalidArgument("world has no cliffs");
    const auto& c = cliffs_[pick(rng, cliffs_.size())];
    double theta = uniform(rng, 0.0, 2 * kPi), d = c.radius_m + uniform(rng, -150.0, 150.0);
    return round_point(geo::offset(c.center, d * std::cos(theta), d * std::sin(theta)));
}

GeoPoint SyntheticWorld::near_lake(std::mt19937_64& rng) const {
    if (lakes_.empty()) throw InvalidArgument("world has no lakes");
    const auto& l = lakes_[pick(rng, lakes_.size())];
    double theta = uniform(rng, 0.0, 2 * kPi), d = l.radius_m + uniform(rng, 20.0, 200.0);
    return round_point(geo::offset(l.center, d * std::cos(theta), d * std::sin(theta)));
}

GeoPoint SyntheticWorld::near_road(std::mt19937_64& rng) const {
    std::vector<const geo::PlaceFeature*> roads;
    for (const auto& f : features_)
        if (f.category == geo::PlaceCategory::MajorRoad) roads.push_back(&f);
    if (roads.empty()) throw InvalidArgument("world has no roads");
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const auto& f = *roads[pick(rng, roads.size())];
        std::size_t s = pick(rng, f.vertices.size() - 1);
        double t = unit_interval(rng());
        const auto &a = f.vertices[s], &b = f.vertices[s + 1];
        GeoPoint on(a.lat() + t * (b.lat() - a.lat()), a.lon() + t * (b.lon() - a.lon()));
        double theta = uniform(rng, 0.0, 2 * kPi), d = uniform(rng, 0.0, 40.0);
        GeoPoint p = round_point(geo::offset(on, d * std::cos(theta), d * std::sin(theta)));
        if (p.lat() > params_.lat_min + kMarginDeg && p.lat() < params_.lat_max - kMarginDeg &&
            p.lon() > params_.lon_min + kMarginDeg && p.lon() < params_.lon_max - kMarginDeg)
            return p;
    }
    throw InvalidArgument("cannot place a point near a road inside the world margin");
}

GeoPoint SyntheticWorld::plain(std::mt19937_64& rng) const {
    for (int attempt = 0; attempt < 100000; ++attempt) {
        GeoPoint p = round_point(random_inside(params_, rng));
        bool ok = true;
        for (const auto& c : cliffs_) ok = ok && geo::haversine_m(p, c.center) >= 7000.0;
        for (const auto& l : lakes_) ok = ok && geo::haversine_m(p, l.center) >= 7000.0;
        for (const auto& f : features_) ok = ok && geo::distance_to_feature_m(p, f) >= 2000.0;
        if (ok) return p;
    }
    throw InvalidArgument("cannot find open plain in the synthetic world");
}

geo::ProviderSet world_providers(std::shared_ptr<const SyntheticWorld> world) {
    return {std::shared_ptr<const geo::ElevationProvider>(world, world.get()),
            std::shared_ptr<const geo::TileProvider>(world, world.get()),
            std::shared_ptr<const geo::PlacesProvider>(world, world.get())};
}

SynthCorpus generate_corpus(const SyntheticWorld& world, const CorpusParams& params) {
    if (params.tweets == 0) throw InvalidArgument("synthetic corpus needs at least one tweet");
    std::mt19937_64 rng(derive_seed(params.seed, "corpus"));
    const std::size_t n = params.tweets;
    auto n_danger = static_cast<std::size_t>(std::llround(static_cast<double>(n) * params.dangerous_fraction));
    auto n_unsure = static_cast<std::size_t>(std::llround(static_cast<double>(n) * params.unsure_fraction));
    if (n_danger + n_unsure > n) throw InvalidArgument("dangerous plus unsure fractions exceed 1");

    std::vector<Kind> kinds;
    const Kind danger_cycle[] = {Kind::Height, Kind::Water, Kind::Height, Kind::Water, Kind::Vehicle,
                                 Kind::Height, Kind::Water, Kind::Vehicle, Kind::Other, Kind::Water};
    for (std::size_t i = 0; i < n_danger; ++i) kinds.push_back(danger_cycle[i % 10]);
    kinds.insert(kinds.end(), n_unsure, Kind::Unsure);
    kinds.resize(n, Kind::Safe);
    for (std::size_t i = n; i > 1; --i) std::swap(kinds[i - 1], kinds[pick(rng, i)]);

    auto draw = [&](const std::vector<std::string>& pool) { return pool[pick(rng, pool.size())]; };
    auto danger_pool = [&](Kind k) -> const std::vector<std::string>& {
        switch (k) {
            case Kind::Height: return kHeightCaptions;
            case Kind::Water: return kWaterCaptions;
            case Kind::Vehicle: return kVehicleCaptions;
            default: return kOtherCaptions;
        }
    };
    const Kind danger_kinds[] = {Kind::Height, Kind::Water, Kind::Vehicle, Kind::Other};

    SynthCorpus out;
    const Timestamp start = 1451606400;  // 2016-01-01
    for (std::size_t i = 0; i < n; ++i) {
        Kind kind = kinds[i];
        TweetRecord t;
        char id[32];
        std::snprintf(id, sizeof(id), "t%05zu", i + 1);
        t.id = id;
        t.user_id = "u" + std::to_string(pick(rng, 300));
        t.posted_at = start + static_cast<Timestamp>(pick(rng, 365 * 86400));
        t.image_ref = "img/" + t.id + ".jpg";

        bool dangerous = kind != Kind::Safe && kind != Kind::Unsure;
        GeoPoint where(0, 0);
        auto random_feature_point = [&] {
            switch (pick(rng, 3)) {
                case 0: return world.near_cliff_edge(rng);
                case 1: return world.near_lake(rng);
                default: return world.near_road(rng);
            }
        };
        switch (kind) {
            case Kind::Height: where = world.near_cliff_edge(rng); break;
            case Kind::Water: where = world.near_lake(rng); break;
            case Kind::Vehicle: where = world.near_road(rng); break;
            case Kind::Other: where = world.plain(rng); break;
            case Kind::Safe: where = unit_interval(rng()) < 0.1 ? random_feature_point() : world.plain(rng); break;
            case Kind::Unsure: where = unit_interval(rng()) < 0.5 ? random_feature_point() : world.plain(rng); break;
        }
        if (unit_interval(rng()) < params.geo_fraction) t.geo = where;

        std::vector<std::string> captions;
        if (dangerous) {
            captions = {draw(danger_pool(kind)), draw(kBenignCaptions), draw(danger_pool(kind))};
        } else if (kind == Kind::Unsure) {
            captions = {draw(kBenignCaptions), draw(danger_pool(danger_kinds[pick(rng, 4)])), draw(kBenignCaptions)};
        } else {
            captions = {draw(kBenignCaptions), draw(kBenignCaptions), draw(kBenignCaptions)};
            if (unit_interval(rng()) < 0.08) captions[1] = draw(danger_pool(danger_kinds[pick(rng, 4)]));
        }
        if (unit_interval(rng()) >= 0.02) t.captions = captions;

        double danger_text_p = dangerous ? 0.5 : 0.05;
        t.text = unit_interval(rng()) < danger_text_p ? draw(kDangerText) : draw(kBenignText);
        if (unit_interval(rng()) < 0.15) t.text += " https://t.co/" + t.id;
        t.hashtags = hashtags_of(t.text);

        AnnotationRecord a;
        a.tweet_id = t.id;
        a.annotator_id = "a1";
        if (kind == Kind::Safe) a.label = Label::NotDangerous;
        else if (kind == Kind::Unsure) a.label = Label::Unsure;
        else {
            a.label = Label::Dangerous;
            switch (kind) {
                case Kind::Height: a.risk_reasons = {RiskReason::Height}; break;
                case Kind::Water: a.risk_reasons = {RiskReason::Water}; break;
                case Kind::Vehicle:
                    a.risk_reasons = {pick(rng, 2) == 0 ? RiskReason::Vehicle : RiskReason::Road};
                    break;
                default: a.risk_reasons = {pick(rng, 2) == 0 ? RiskReason::Weapon : RiskReason::Animal}; break;
            }
        }
        out.annotations.push_back(a);
        if (i < params.common_set) {
            out.common_set.push_back(t.id);
            AnnotationRecord b = a;
            b.annotator_id = "a2";
            out.annotations.push_back(b);
            AnnotationRecord c = a;
            c.annotator_id = "a3";
            if (unit_interval(rng()) < 0.15) {
                c.label = static_cast<Label>((static_cast<int>(a.label) + 1 + static_cast<int>(pick(rng, 2))) % 3);
                c.risk_reasons.clear();
                if (c.label == Label::Dangerous) c.risk_reasons = {RiskReason::Height};
            }
            out.annotations.push_back(c);
        }
        out.tweets.push_back(std::move(t));
    }
    return out;
}

FixtureFiles write_fixture(const fs::path& dir, const FixtureOptions& opts) {
    fs::create_directories(dir);
    auto world = SyntheticWorld::generate(opts.world);
    auto corpus = generate_corpus(world, opts.corpus);
    FixtureFiles files{dir / "tweets.jsonl",   dir / "annotations.csv", dir / "common_set.txt",
                       dir / "elevation.json", dir / "places.csv",      dir / "tiles",
                       dir / "config.json"};
    save_tweets(Corpus(corpus.tweets), files.tweets.string());
    io::write_file(files.annotations.string(), annotations_to_csv(corpus.annotations));
    std::string common;
    for (const auto& id : corpus.common_set) common += id + "\n";
    io::write_file(files.common_set.string(), common);
    io::write_file(files.elevation_grid.string(), world.elevation_grid(opts.grid_step_deg).to_json());
    io::write_file(files.places.string(), geo::FixturePlacesProvider::to_csv(world.features()));
    fs::create_directories(files.tiles);
    if (opts.write_tiles) {
        const auto& loc = opts.location;
        std::set<std::string> written;
        for (const auto& t : corpus.tweets) {
            if (!t.geo) continue;
            GeoPoint q = geo::DirectoryTileProvider::quantize(geo::canonical_point(*t.geo));
            std::string name = geo::DirectoryTileProvider::file_name(q, loc.zoom, loc.tile_width, loc.tile_height);
            if (!written.insert(name).second) continue;
            io::write_file((files.tiles / name).string(),
                           world.tile_png(q, loc.zoom, loc.tile_width, loc.tile_height));
        }
    }
    pipeline::PipelineConfig cfg;
    cfg.corpus = "tweets.jsonl";
    cfg.annotations = "annotations.csv";
    cfg.cache_dir = "cache";
    cfg.output_dir = "out";
    cfg.providers.mode = pipeline::ProviderMode::Offline;
    cfg.providers.elevation_grid = "elevation.json";
    cfg.providers.tiles_dir = "tiles";
    cfg.providers.places_csv = "places.csv";
    cfg.location = opts.location;
    cfg.seed = opts.corpus.seed;
    auto cj = cfg.to_json();
    cj.merge_patch(opts.config_patch);
    cj = pipeline::PipelineConfig::from_json(cj).to_json();
    io::write_file(files.config.string(), cj.dump(2) + "\n");
    return files;
}

}  // namespace killfie::synth
