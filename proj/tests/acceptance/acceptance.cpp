#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "json.hpp"
#include "killfie/corpus.hpp"
#include "killfie/geo.hpp"
#include "killfie/geofeat.hpp"
#include "killfie/hash.hpp"
#include "killfie/io.hpp"
#include "killfie/learn.hpp"
#include "killfie/pipeline.hpp"
#include "killfie/stats.hpp"
#include "killfie/synth.hpp"
#include "killfie/text.hpp"

using namespace killfie;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;

    void expect(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            notes.push_back("failed: " + what);
        }
    }
    void note(const std::string& s) { notes.push_back(s); }
};

std::string sci(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("killfie_accept_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// --- 01 ----------------------------------------------------------------------

Outcome incidents() {
    Outcome o;
    auto set = load_incidents(KILLFIE_DATA_DIR "/incidents.csv");
    auto stats = pipeline::incident_stats_json(set);
    const std::vector<std::pair<std::string, std::uint64_t>> table1 = {
        {"India", 76},     {"Pakistan", 9},  {"USA", 8},          {"Russia", 6},  {"Philippines", 4},
        {"China", 4},      {"Spain", 3},     {"Indonesia", 2},    {"Turkey", 2},  {"Portugal", 2},
        {"Peru", 2},       {"Mexico", 1},    {"Hong Kong", 1},    {"South Africa", 1}, {"Italy", 1},
        {"Romania", 1},    {"Nepal", 1},     {"Chile", 1},        {"Serbia", 1},  {"Australia", 1}};
    std::map<std::string, std::uint64_t> got;
    for (const auto& r : stats["country"]) got[r["key"]] = r["count"];
    o.expect(got.size() == table1.size(), "20 countries");
    for (const auto& [country, deaths] : table1)
        o.expect(got[country] == deaths, country + " deaths = " + std::to_string(deaths));
    o.expect(stats["total_deaths"] == 127, "127 deaths");
    std::map<std::string, std::uint64_t> groups;
    for (const auto& r : stats["group_size"]) groups[r["key"]] = r["count"];
    o.expect(groups == std::map<std::string, std::uint64_t>{{"2", 16}, {"3", 5}, {"5", 1}, {"7", 2}},
             "group sizes {2:16, 3:5, 5:1, 7:2}");
    o.expect(stats["by_reason"]["Height"]["deaths"] == 29, "height deaths 29");
    o.expect(stats["by_reason"]["Train"]["deaths"] == 11, "train deaths 11");
    o.expect(stats["by_reason"]["HeightAndWater"]["deaths"] == 27, "height+water deaths 27");
    o.expect(stats["by_reason"]["HeightAndWater"]["incidents"] == 14, "height+water incidents 14");
    o.note("deaths " + stats["total_deaths"].dump() + ", incidents " + stats["incidents"].dump());
    return o;
}

// --- 02 ----------------------------------------------------------------------

Outcome ks() {
    Outcome o;
    std::mt19937_64 rng(20240601);
    std::uniform_int_distribution<int> size(1, 12);
    std::normal_distribution<double> g;
    std::size_t compared = 0, d_mismatch = 0;
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
        int n = size(rng), m = size(rng);
        double shift = (t % 5) * 0.4;
        std::vector<double> a(n), b(m);
        for (auto& x : a) x = g(rng);
        for (auto& x : b) x = g(rng) + shift;
        auto r = stats::ks_two_sample(a, b);

        std::vector<double> pooled = a;
        pooled.insert(pooled.end(), b.begin(), b.end());
        std::int64_t brute_scaled = 0;
        for (double x : pooled) {
            std::int64_t ca = std::count_if(a.begin(), a.end(), [&](double v) { return v <= x; });
            std::int64_t cb = std::count_if(b.begin(), b.end(), [&](double v) { return v <= x; });
            brute_scaled = std::max(brute_scaled, std::abs(ca * m - cb * n));
        }
        double brute = static_cast<double>(brute_scaled) / (static_cast<double>(n) * m);
        if (r.d != brute) ++d_mismatch;

        if (!(r.p >= 0.01 && r.p <= 0.99)) continue;
        // Permutation oracle on integer-scaled statistics: D*n*m = max |cA*m - cB*n|.
        std::sort(pooled.begin(), pooled.end());
        std::int64_t observed = 0;
        {
            std::int64_t ca = 0, cb = 0;
            std::vector<double> sa = a, sb = b;
            std::sort(sa.begin(), sa.end());
            std::sort(sb.begin(), sb.end());
            for (double x : pooled) {
                ca = std::upper_bound(sa.begin(), sa.end(), x) - sa.begin();
                cb = std::upper_bound(sb.begin(), sb.end(), x) - sb.begin();
                observed = std::max(observed, std::abs(ca * m - cb * n));
            }
        }
        std::vector<int> labels(n + m, 0);
        std::fill(labels.begin(), labels.begin() + n, 1);
        const int shuffles = 100000;
        int extreme = 0;
        for (int s = 0; s < shuffles; ++s) {
            std::shuffle(labels.begin(), labels.end(), rng);
            std::int64_t ca = 0, cb = 0, best = 0;
            for (int l : labels) {
                l ? ++ca : ++cb;
                best = std::max(best, std::abs(ca * m - cb * n));
            }
            extreme += best >= observed;
        }
        double perm = static_cast<double>(extreme) / shuffles;
        worst = std::max(worst, std::abs(perm - r.p));
        ++compared;
    }
    o.expect(d_mismatch == 0, "d equals brute force on all 200 pairs");
    o.expect(compared >= 50, "at least 50 pairs with p in [0.01, 0.99]");
    o.expect(worst <= 0.02, "p within 0.02 of the permutation oracle");
    o.note("d mismatches " + std::to_string(d_mismatch) + ", pairs compared " + std::to_string(compared) + ", max |p - p_perm| " + fmt(worst));
    return o;
}

// --- 03 ----------------------------------------------------------------------

Outcome water_geometry() {
    Outcome o;
    std::mt19937_64 rng(33);
    const int W = 100, H = 100;
    std::vector<geo::Rgb> palette{geofeat::kDefaultWaterColor};
    for (int t = 0; t < 20; ++t) {
        double density = std::pow(10.0, -3.0 + 3.0 * t / 19.0);
        std::bernoulli_distribution wet(density);
        geo::MapTile tile;
        tile.width = W;
        tile.height = H;
        tile.pixels.resize(W * H * 3);
        std::vector<int> truth(W * H);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                truth[y * W + x] = wet(rng);
                tile.set(x, y, truth[y * W + x] ? geofeat::kDefaultWaterColor : synth::kLandColor);
            }
        auto decoded = geo::decode_png(geo::encode_png(tile));
        auto mask = geofeat::segment_water(decoded, palette, geofeat::kDefaultWaterTolerance);
        auto f = geofeat::water_features(mask);

        double best = std::numeric_limits<double>::infinity();
        int count = 0;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                o.expect(mask.at(x, y) == static_cast<bool>(truth[y * W + x]), "segmentation of pixel");
                if (!truth[y * W + x]) continue;
                ++count;
                double dx = x - W / 2, dy = y - H / 2;
                best = std::min(best, std::sqrt(dx * dx + dy * dy));
            }
        if (count == 0) best = std::ceil(std::sqrt(static_cast<double>(W * W + H * H)));
        o.expect(f.min_water_dist_px == best, "min_water_dist_px on mask " + std::to_string(t));
        o.expect(f.water_fraction == static_cast<double>(count) / (W * H), "water_fraction on mask " + std::to_string(t));
        if (!o.pass) break;
    }
    auto none = geofeat::water_features(geofeat::WaterMask(W, H, false));
    o.expect(none.min_water_dist_px == 142.0 && none.water_fraction == 0.0, "no-water sentinel 142");
    auto all = geofeat::water_features(geofeat::WaterMask(W, H, true));
    o.expect(all.min_water_dist_px == 0.0 && all.water_fraction == 1.0, "all-water (0, 1)");
    o.note("20 masks with densities 0.001..1, sentinel " + fmt(none.min_water_dist_px, 0));
    return o;
}

// --- 04 ----------------------------------------------------------------------

std::vector<GeoPoint> replay_disk(const GeoPoint& c, double r, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<GeoPoint> out;
    for (std::size_t i = 0; i < n; ++i) {
        double theta = 2.0 * std::numbers::pi * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
        double d = r * std::sqrt(static_cast<double>(rng() >> 11) * 0x1.0p-53);
        double lat = c.lat() + d * std::cos(theta) / geo::kMetersPerDegree;
        double lon = c.lon() + d * std::sin(theta) / (geo::kMetersPerDegree * std::cos(c.lat() * std::numbers::pi / 180.0));
        out.emplace_back(lat, lon);
    }
    return out;
}

GeoPoint grid6(const GeoPoint& p) {
    auto q = [](double v) {
        double r = std::round(v * 1e6) / 1e6;
        return r == 0.0 ? 0.0 : r;
    };
    return {q(p.lat()), q(p.lon())};
}

Outcome elevation() {
    Outcome o;
    auto world = synth::SyntheticWorld::generate({});
    geofeat::ElevationConfig cfg;
    std::mt19937_64 rng(404);
    double worst = 0.0, worst_cov = 0.0;
    for (int i = 0; i < 50; ++i) {
        GeoPoint p = world.near_cliff_edge(rng);
        std::uint64_t seed = geofeat::tweet_seed(7, "cliff-" + std::to_string(i));
        geo::ProviderCache cache;
        auto f = geofeat::elevation_features(p, world, cache, cfg, seed);

        auto elev = [&](const GeoPoint& q) { return world.elevation(grid6(q)); };
        double here = elev(p);
        double far_max = -1e300, lo = 1e300, hi = -1e300;
        for (const auto& q : replay_disk(p, cfg.r_far_m, cfg.n_far, derive_seed(seed, "elevation/far")))
            far_max = std::max(far_max, elev(q));
        for (const auto& q : replay_disk(p, cfg.r_near_m, cfg.n_near, derive_seed(seed, "elevation/near"))) {
            lo = std::min(lo, elev(q));
            hi = std::max(hi, elev(q));
        }
        if (!f.elev_here || !f.max_elev_nearby || !f.max_drop_from_here || !f.max_pairwise_range) {
            o.expect(false, "all elevation slots present");
            break;
        }
        worst = std::max({worst, std::abs(*f.elev_here - here), std::abs(*f.max_elev_nearby - far_max),
                          std::abs(*f.max_drop_from_here - (here - lo)), std::abs(*f.max_pairwise_range - (hi - lo))});

        for (double k : {-50.0, 0.0, 1000.0}) {
            geo::FunctionElevationProvider shifted([&](const GeoPoint& q) { return world.elevation(q) + k; });
            geo::ProviderCache c2;
            auto s = geofeat::elevation_features(p, shifted, c2, cfg, seed);
            worst_cov = std::max({worst_cov, std::abs(*s.elev_here - (*f.elev_here + k)),
                                  std::abs(*s.max_elev_nearby - (*f.max_elev_nearby + k)),
                                  std::abs(*s.max_drop_from_here - *f.max_drop_from_here),
                                  std::abs(*s.max_pairwise_range - *f.max_pairwise_range)});
        }
    }
    o.expect(worst <= 1e-9, "oracle replay within 1e-9");
    o.expect(worst_cov <= 1e-9, "translation covariance within 1e-9");
    o.note("50 cliff points, max replay error " + sci(worst) + ", max covariance error " +
           sci(worst_cov));
    return o;
}

// --- 05 ----------------------------------------------------------------------

Outcome ks_separation() {
    Outcome o;
    auto world = std::make_shared<synth::SyntheticWorld>(synth::SyntheticWorld::generate({}));
    auto providers = synth::world_providers(world);
    geofeat::LocationConfig cfg;
    std::mt19937_64 rng(505);
    geo::ProviderCache cache;
    std::vector<double> cliff_range, plain_range, lake_dist, inland_dist, lake_frac, inland_frac;
    for (int i = 0; i < 100; ++i) {
        auto seed = geofeat::tweet_seed(5, std::to_string(i));
        auto c = geofeat::elevation_features(world->near_cliff_edge(rng), *world, cache, cfg.elevation, seed);
        auto p = geofeat::elevation_features(world->plain(rng), *world, cache, cfg.elevation, seed);
        cliff_range.push_back(*c.max_pairwise_range);
        plain_range.push_back(*p.max_pairwise_range);

        geo::ProviderSet tiles_only;
        tiles_only.tiles = providers.tiles;
        auto lake = geofeat::location_feature_vector(world->near_lake(rng), tiles_only, cache, cfg, seed);
        auto inland = geofeat::location_feature_vector(world->plain(rng), tiles_only, cache, cfg, seed);
        lake_dist.push_back(lake.values[4]);
        inland_dist.push_back(inland.values[4]);
        lake_frac.push_back(lake.values[5]);
        inland_frac.push_back(inland.values[5]);
    }
    auto r1 = stats::ks_two_sample(cliff_range, plain_range);
    auto r2 = stats::ks_two_sample(lake_dist, inland_dist);
    auto r3 = stats::ks_two_sample(lake_frac, inland_frac);
    o.expect(r1.p < 0.01, "cliff vs plain max_pairwise_range p < 0.01");
    o.expect(r2.p < 0.01, "lake vs inland min_water_dist_px p < 0.01");
    o.expect(r3.p < 0.01, "lake vs inland water_fraction p < 0.01");
    o.note("max_pairwise_range D=" + fmt(r1.d) + " p=" + sci(r1.p) + "; min_water_dist_px D=" + fmt(r2.d) +
           " p=" + sci(r2.p) + "; water_fraction D=" + fmt(r3.d) + " p=" + sci(r3.p));
    return o;
}

// --- 06 ----------------------------------------------------------------------

Outcome text_stack() {
    Outcome o;
    using text::TokenStream;
    o.expect(text::tokenize("").empty(), "empty text");
    o.expect(text::tokenize("#Selfie at http://x.co cliff!") == TokenStream{"selfie", "at", "cliff"},
             "url + hashtag fixture");
    o.expect(text::tokenize("\xF0\x9F\x98\x80") == TokenStream{"emoji:1f600"}, "emoji fixture");
    o.expect(text::tokenize("www.site.org ON the EDGE\xF0\x9F\x8C\x8A") ==
                 TokenStream{"on", "the", "edge", "emoji:1f30a"},
             "www url + trailing emoji");

    std::vector<TokenStream> docs{{"a", "b"}, {"a"}};
    auto v = text::fit_vocab(docs, {1, 20000});
    o.expect(v.size() == 3, "vocabulary {a, b, a_b}");
    o.expect(v.at(v.index_of("a")).idf == 1.0, "idf(a) = 1");
    o.expect(text::fit_vocab(docs, {2, 20000}).size() == 1, "min_df = 2 keeps {a}");
    auto x = text::tfidf({"a", "a", "b"}, v);
    double ib = std::log(1.5) + 1.0;
    double norm = std::sqrt(4.0 + 2 * ib * ib);
    std::map<std::string, double> want{{"a", 2.0 / norm}, {"b", ib / norm}, {"a_b", ib / norm}};
    for (const auto& [term, w] : want) {
        double got = 0;
        for (auto [i, val] : x)
            if (static_cast<std::int64_t>(i) == v.index_of(term)) got = val;
        o.expect(std::abs(got - w) <= 1e-15, "tfidf(" + term + ")");
    }
    auto single = text::tfidf({"b"}, v);
    o.expect(single.size() == 1 && single[0].second == 1.0, "single term has unit mass");

    std::mt19937_64 rng(606);
    std::uniform_int_distribution<int> len(0, 30), word(0, 199);
    text::HashingEmbedder e(100, 42);
    double worst = 0.0;
    std::size_t empties = 0;
    std::vector<TokenStream> corpus;
    for (int d = 0; d < 1000; ++d) {
        TokenStream doc;
        int n = len(rng);
        for (int i = 0; i < n; ++i) doc.push_back("w" + std::to_string(word(rng)));
        corpus.push_back(doc);
        auto a = e.embed(doc), b = e.embed(doc);
        o.expect(a == b, "deterministic embedding");
        double sq = 0;
        for (double z : a) sq += z * z;
        if (doc.empty()) {
            ++empties;
            o.expect(sq == 0.0, "empty doc embeds to zero");
        } else {
            worst = std::max(worst, std::abs(std::sqrt(sq) - 1.0));
        }
        if (!o.pass) break;
    }
    auto vocab = text::fit_vocab(corpus, {2, 20000});
    for (const auto& doc : corpus) {
        double n = text::l2_norm(text::tfidf(doc, vocab));
        o.expect(n == 0.0 || std::abs(n - 1.0) <= 1e-12, "tfidf norm in {0, 1}");
        if (!o.pass) break;
    }
    o.expect(worst <= 1e-12, "unit-norm embeddings");
    o.note("1000 docs (" + std::to_string(empties) + " empty), max |norm-1| " + sci(worst));
    return o;
}

// --- 07 ----------------------------------------------------------------------

learn::FeatureMatrix to_matrix(const std::vector<std::vector<double>>& rows) {
    learn::FeatureMatrix X(rows.size(), [&] {
        std::vector<std::string> c;
        for (std::size_t i = 0; i < rows[0].size(); ++i) c.push_back("f" + std::to_string(i));
        return c;
    }());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        X.row_ids[r] = "r" + std::to_string(r);
        for (std::size_t c = 0; c < rows[r].size(); ++c) X.at(r, c) = rows[r][c];
    }
    return X;
}

double train_accuracy(const learn::ModelSpec& spec, const learn::FeatureMatrix& X, const learn::Labels& y) {
    auto m = learn::train(spec, X, y);
    return learn::metrics(y, m->predict(X)).accuracy;
}

Outcome learners() {
    Outcome o;
    std::mt19937_64 rng(707);
    std::uniform_real_distribution<double> u(-1, 1);

    std::vector<std::vector<double>> sep;
    learn::Labels ys;
    for (int i = 0; i < 200; ++i) {
        double a = u(rng), b = u(rng);
        int y = a + 0.5 * b > 0.1;
        sep.push_back({a, b, u(rng)});
        ys.push_back(y);
    }
    auto Xs = to_matrix(sep);
    double dt = train_accuracy(learn::ModelSpec(learn::TreeParams{}), Xs, ys);
    double knn = train_accuracy(learn::ModelSpec(learn::KnnParams{1, true}), Xs, ys);
    o.expect(dt == 1.0, "decision tree 100% on separable data");
    o.expect(knn == 1.0, "knn 100% on separable data");

    std::vector<std::vector<double>> xr;
    learn::Labels yx;
    std::bernoulli_distribution flip(0.15);
    for (int i = 0; i < 500; ++i) {
        double a = u(rng), b = u(rng);
        int y = (a > 0) != (b > 0);
        xr.push_back({a, b});
        yx.push_back(flip(rng) ? 1 - y : y);
    }
    auto Xx = to_matrix(xr);
    learn::CvOptions cv;
    cv.k = 10;
    cv.seed = 77;
    learn::ForestParams fp;
    fp.n_trees = 100;
    auto rf_cv = learn::cross_validate(learn::ModelSpec(fp, 11), Xx, yx, cv).accuracy.mean;
    auto dt_cv = learn::cross_validate(learn::ModelSpec(learn::TreeParams{}, 11), Xx, yx, cv).accuracy.mean;
    o.expect(rf_cv >= dt_cv, "random forest CV >= decision tree CV on noisy XOR");

    std::vector<std::vector<double>> mg;
    learn::Labels ym;
    for (int i = 0; i < 200; ++i) {
        int y = i % 2;
        double side = u(rng) * 3;
        double off = (y ? 1.0 : -1.0) * (1.0 + std::abs(u(rng)) * 2);
        mg.push_back({off + side * 0.0, side});
        ym.push_back(y);
    }
    auto Xm = to_matrix(mg);
    double svm = train_accuracy(learn::ModelSpec(learn::SvmParams{1e-3, 50}, 3), Xm, ym);
    o.expect(svm == 1.0, "linear svm 100% on a margin-2 fixture");

    auto shuffled = yx;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    std::vector<std::vector<double>> noise;
    std::normal_distribution<double> g;
    for (int i = 0; i < 500; ++i) noise.push_back({g(rng), g(rng), g(rng)});
    auto null_cv = learn::cross_validate(learn::ModelSpec(learn::TreeParams{4, 5}, 2), to_matrix(noise), shuffled, cv)
                       .accuracy.mean;
    o.expect(null_cv >= 0.4 && null_cv <= 0.6, "shuffled-label CV accuracy in [0.4, 0.6]");
    o.note("dt " + fmt(dt) + ", knn " + fmt(knn) + ", xor rf " + fmt(rf_cv) + " vs dt " + fmt(dt_cv) + ", svm " +
           fmt(svm) + ", shuffled " + fmt(null_cv));
    return o;
}

// --- 08 / 11 -----------------------------------------------------------------

json small_grids(std::size_t embedding_dim) {
    json patch = json::parse(R"({
        "learn": {"grids": {"random_forest": [{"n_trees": 60}],
                            "decision_tree": [{"max_depth": 8}],
                            "knn": [{"k": 5}],
                            "linear_svm": [{"lambda": 0.001, "epochs": 15}]}}
    })");
    patch["text"] = {{"embedding_dim", embedding_dim}};
    return patch;
}

Outcome end_to_end() {
    Outcome o;
    auto dir = scratch("e2e");
    synth::FixtureOptions opts;
    opts.corpus.tweets = 1000;
    opts.config_patch = small_grids(32);
    auto files = synth::write_fixture(dir, opts);
    auto cfg = pipeline::PipelineConfig::load(files.config.string());
    auto t0 = std::chrono::steady_clock::now();
    auto manifest = pipeline::run_pipeline(cfg, {false, nullptr});
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    pipeline::emit_report(manifest, pipeline::ReportKind::Table4, cfg);
    auto t4 = json::parse(io::read_file((fs::path(cfg.output_dir) / "report/table4.json").string()));
    double til = t4["Text + Image + Location"]["RandomForest"];
    double loc = t4["Location Only"]["RandomForest"];
    double img = t4["Image Only"]["RandomForest"];
    o.expect(til >= 0.90, "text+image+location RF >= 0.90");
    o.expect(loc >= 0.75, "location only RF >= 0.75");
    o.expect(img >= 0.80, "image only RF >= 0.80");
    o.expect(secs < 300.0, "pipeline under 5 minutes");
    o.note("T+I+L " + fmt(til, 3) + ", location " + fmt(loc, 3) + ", image " + fmt(img, 3) + ", pipeline " +
           fmt(secs, 1) + " s");
    return o;
}

Outcome determinism() {
    Outcome o;
    auto dir = scratch("determinism");
    synth::FixtureOptions opts;
    opts.corpus.tweets = 400;
    opts.config_patch = small_grids(32);
    auto files = synth::write_fixture(dir, opts);
    auto cfg = pipeline::PipelineConfig::load(files.config.string());
    std::vector<std::map<std::string, std::string>> digests;
    for (const char* name : {"run_a", "run_b"}) {
        auto c = cfg;
        c.output_dir = (dir / name).string();
        c.cache_dir = (dir / (std::string(name) + "_cache")).string();
        digests.push_back(pipeline::run_pipeline(c, {false, nullptr}).output_digests());
    }
    o.expect(!digests[0].empty(), "outputs recorded");
    o.expect(digests[0] == digests[1], "identical output digests");
    std::size_t differing = 0;
    for (const auto& [k, v] : digests[0])
        if (digests[1].count(k) == 0 || digests[1].at(k) != v) ++differing;
    o.note(std::to_string(digests[0].size()) + " output files, " + std::to_string(differing) + " differing");
    return o;
}

// --- 09 ----------------------------------------------------------------------

Outcome leakage() {
    Outcome o;
    auto world = std::make_shared<synth::SyntheticWorld>(synth::SyntheticWorld::generate({}));
    auto providers = synth::world_providers(world);
    synth::CorpusParams cp;
    cp.tweets = 300;
    auto sc = synth::generate_corpus(*world, cp);
    auto resolved = resolve_annotations(sc.annotations);
    geofeat::LocationConfig lc;
    lc.tile_width = lc.tile_height = 100;
    geo::ProviderCache cache;
    learn::FeaturizeParams fp;
    fp.embedding_dim = 16;
    auto rows = std::make_shared<std::vector<learn::RawRow>>();
    learn::Labels y;
    for (const auto& t : sc.tweets) {
        auto it = resolved.find(t.id);
        if (it == resolved.end() || it->second.label == Label::Unsure) continue;
        auto loc = t.geo ? geofeat::location_feature_vector(*t.geo, providers, cache, lc, geofeat::tweet_seed(1, t.id))
                         : geofeat::all_missing_block();
        rows->push_back(learn::make_raw_row(t, loc, fp));
        y.push_back(it->second.label == Label::Dangerous);
    }
    learn::RawFeatureSource source(rows, learn::BlockSet{learn::Block::Text, learn::Block::Image, learn::Block::Location},
                                   fp);
    std::vector<learn::ModelSpec> grid{learn::ModelSpec(learn::SvmParams{1e-2, 5}, 1),
                                       learn::ModelSpec(learn::SvmParams{1e-3, 5}, 1)};
    learn::CvOptions opts;
    opts.k = 5;
    opts.inner_k = 3;
    learn::Audit audit;
    auto rep = learn::cross_validate(grid, source, y, opts, &audit);
    auto stages = audit.stages();
    for (const char* s : {"undersample", "grid_search", "vocab_fit", "standardize", "impute"})
        o.expect(stages.count(s) == 1, std::string("stage '") + s + "' audited");
    std::size_t checked = 0, leaks = 0;
    for (int f = 0; f < static_cast<int>(rep.folds.size()); ++f) {
        for (const auto& stage : stages) {
            const auto& touched = audit.touched(f, stage);
            o.expect(!touched.empty(), "stage " + stage + " touched rows in fold " + std::to_string(f));
            for (const auto& id : rep.folds[f].test_ids) {
                ++checked;
                leaks += touched.count(id);
            }
        }
    }
    o.expect(leaks == 0, "no test-fold row touched");
    o.note(std::to_string(rep.folds.size()) + " folds, " + std::to_string(stages.size()) + " stages, " +
           std::to_string(checked) + " (row, stage) checks, " + std::to_string(leaks) + " leaks");
    return o;
}

// --- 10 ----------------------------------------------------------------------

Outcome kappa() {
    Outcome o;
    stats::RatingsMatrix perfect(5, 3, {4, 0, 0, 0, 4, 0, 0, 0, 4, 4, 0, 0, 0, 4, 0});
    auto k1 = stats::fleiss_kappa(perfect);
    o.expect(k1 && *k1 == 1.0, "perfect agreement gives exactly 1");
    stats::RatingsMatrix degenerate(4, 3, {0, 3, 0, 0, 3, 0, 0, 3, 0, 0, 3, 0});
    o.expect(!stats::fleiss_kappa(degenerate), "degenerate matrix is undefined");

    std::mt19937_64 rng(1010);
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
        std::size_t N = 3 + rng() % 8, k = 2 + rng() % 4;
        std::uint32_t r = 2 + rng() % 5;
        std::vector<std::uint32_t> counts(N * k, 0);
        for (std::size_t i = 0; i < N; ++i)
            for (std::uint32_t j = 0; j < r; ++j) ++counts[i * k + rng() % k];
        auto got = stats::fleiss_kappa(stats::RatingsMatrix(N, k, counts));
        // Direct formula in long double.
        long double pbar = 0, pe = 0;
        for (std::size_t i = 0; i < N; ++i) {
            long double s = 0;
            for (std::size_t j = 0; j < k; ++j) s += static_cast<long double>(counts[i * k + j]) * counts[i * k + j];
            pbar += (s - r) / (static_cast<long double>(r) * (r - 1));
        }
        pbar /= N;
        for (std::size_t j = 0; j < k; ++j) {
            long double col = 0;
            for (std::size_t i = 0; i < N; ++i) col += counts[i * k + j];
            long double pj = col / (static_cast<long double>(N) * r);
            pe += pj * pj;
        }
        if (pe == 1.0L) {
            o.expect(!got, "undefined when expected agreement is 1");
            continue;
        }
        long double want = (pbar - pe) / (1.0L - pe);
        o.expect(got.has_value(), "defined kappa");
        if (got) worst = std::max(worst, static_cast<double>(std::fabs(static_cast<long double>(*got) - want)));
    }
    o.expect(worst <= 1e-12, "random matrices within 1e-12");
    o.note("max |kappa - oracle| " + sci(worst));
    return o;
}

struct Criterion {
    const char* id;
    const char* name;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    std::vector<Criterion> all = {
        {"01", "incidents", incidents},         {"02", "ks", ks},
        {"03", "water_geometry", water_geometry}, {"04", "elevation", elevation},
        {"05", "ks_separation", ks_separation}, {"06", "text", text_stack},
        {"07", "learners", learners},           {"08", "end_to_end", end_to_end},
        {"09", "leakage", leakage},             {"10", "kappa", kappa},
        {"11", "determinism", determinism}};
    std::string only;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) only = argv[++i];
        else {
            std::fprintf(stderr, "usage: %s [--criterion NN]\n", argv[0]);
            return 2;
        }
    }
    int failures = 0, ran = 0;
    for (const auto& c : all) {
        if (!only.empty() && only != c.id) continue;
        ++ran;
        auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out.pass = false;
            out.notes.push_back(std::string("exception: ") + e.what());
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s %s_%s (%.2fs)", out.pass ? "PASS" : "FAIL", c.id, c.name, secs);
        for (const auto& n : out.notes) std::printf(" | %s", n.c_str());
        std::printf("\n");
        std::fflush(stdout);
        failures += !out.pass;
    }
    if (ran == 0) {
        std::fprintf(stderr, "unknown criterion '%s'\n", only.c_str());
        return 2;
    }
    return failures ? 1 : 0;
}
