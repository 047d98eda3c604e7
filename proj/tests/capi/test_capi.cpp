#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "httplib.h"
#include "json.hpp"
#include "killfie/killfie.h"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Ctx {
    kf_context* c = kf_context_new();
    ~Ctx() { kf_context_free(c); }
};

using Fn = kf_status (*)(kf_context*, const char*, char**);

json invoke(Fn fn, kf_context* ctx, const json& req, kf_status expect = KF_OK) {
    char* out = nullptr;
    auto s = fn(ctx, req.dump().c_str(), &out);
    INFO(kf_last_error(ctx));
    REQUIRE(s == expect);
    if (s != KF_OK) {
        CHECK(out == nullptr);
        return nullptr;
    }
    auto j = json::parse(out);
    kf_string_free(out);
    return j;
}

fs::path temp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("killfie_capi_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write(const fs::path& p, const std::string& s) {
    std::ofstream(p, std::ios::binary) << s;
}

// Minimal PNG writer (stored deflate blocks) for the test tile server.
std::uint32_t crc32(const std::string& s) {
    std::uint32_t c = 0xffffffffu;
    for (unsigned char b : s) {
        c ^= b;
        for (int k = 0; k < 8; ++k) c = (c >> 1) ^ (0xedb88320u & (0u - (c & 1u)));
    }
    return ~c;
}

std::string be32(std::uint32_t v) {
    return {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8), static_cast<char>(v)};
}

std::string chunk(const std::string& type, const std::string& data) {
    return be32(static_cast<std::uint32_t>(data.size())) + type + data + be32(crc32(type + data));
}

std::string solid_png(int w, int h, std::array<unsigned char, 3> rgb, int water_cols) {
    std::string raw;
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);
        for (int x = 0; x < w; ++x) {
            bool water = x < water_cols;
            raw.push_back(static_cast<char>(water ? 170 : rgb[0]));
            raw.push_back(static_cast<char>(water ? 218 : rgb[1]));
            raw.push_back(static_cast<char>(water ? 255 : rgb[2]));
        }
    }
    std::string z = "\x78\x01";
    std::uint32_t a = 1, b = 0;
    for (unsigned char ch : raw) {
        a = (a + ch) % 65521;
        b = (b + a) % 65521;
    }
    for (std::size_t pos = 0; pos < raw.size(); pos += 65535) {
        std::size_t len = std::min<std::size_t>(65535, raw.size() - pos);
        z.push_back(pos + len == raw.size() ? 1 : 0);
        z.push_back(static_cast<char>(len & 0xff));
        z.push_back(static_cast<char>(len >> 8));
        z.push_back(static_cast<char>(~len & 0xff));
        z.push_back(static_cast<char>((~len >> 8) & 0xff));
        z += raw.substr(pos, len);
    }
    z += be32((b << 16) | a);
    std::string ihdr = be32(w) + be32(h) + std::string("\x08\x02\x00\x00\x00", 5);
    return std::string("\x89PNG\r\n\x1a\n", 8) + chunk("IHDR", ihdr) + chunk("IDAT", z) + chunk("IEND", "");
}

}  // namespace

TEST_CASE("version and error reporting") {
    CHECK(std::string(kf_version()).size() > 0);
    Ctx ctx;
    CHECK(std::string(kf_last_error(ctx.c)).empty());
    CHECK(kf_network_calls(ctx.c) == 0);

    invoke(kf_run, ctx.c, json{{"config", "/nonexistent/config.json"}}, KF_ERR_CONFIG);
    CHECK(std::string(kf_last_error(ctx.c)).find("config") != std::string::npos);

    char* out = nullptr;
    CHECK(kf_kappa(ctx.c, "{not json", &out) == KF_ERR_INVALID_ARGUMENT);
    CHECK(out == nullptr);
    invoke(kf_incident_stats, ctx.c, json{{"incidents", "/nonexistent/incidents.csv"}}, KF_ERR_DATA);
    invoke(kf_train, ctx.c, json{{"features", "x"}, {"labels", "y"}, {"family", "boosting"}, {"out", "m"}},
           KF_ERR_INVALID_ARGUMENT);

    auto ok = invoke(kf_incident_stats, ctx.c, json{{"incidents", KILLFIE_DATA_DIR "/incidents.csv"}});
    CHECK(ok["total_deaths"] == 127);
    CHECK(std::string(kf_last_error(ctx.c)).empty());
}

TEST_CASE("typed statistics entry points") {
    Ctx ctx;
    double a[] = {1, 2, 3}, b[] = {4, 5, 6};
    double d = -1, p = -1;
    REQUIRE(kf_ks_two_sample(ctx.c, a, 3, b, 3, &d, &p) == KF_OK);
    CHECK(d == 1.0);
    CHECK(p > 0.0);
    CHECK(p < 0.2);
    CHECK(kf_ks_two_sample(ctx.c, a, 0, b, 3, &d, &p) == KF_ERR_INVALID_ARGUMENT);
    CHECK(kf_ks_two_sample(ctx.c, a, 3, b, 3, nullptr, &p) == KF_ERR_INVALID_ARGUMENT);

    std::uint32_t perfect[] = {3, 0, 0, 3, 3, 0};
    double k = 0;
    int defined = 0;
    REQUIRE(kf_fleiss_kappa(ctx.c, perfect, 3, 2, &k, &defined) == KF_OK);
    CHECK(defined == 1);
    CHECK(k == 1.0);
    std::uint32_t degenerate[] = {2, 0, 2, 0};
    REQUIRE(kf_fleiss_kappa(ctx.c, degenerate, 2, 2, &k, &defined) == KF_OK);
    CHECK(defined == 0);
    CHECK(std::isnan(k));
    std::uint32_t ragged[] = {2, 0, 1, 0};
    CHECK(kf_fleiss_kappa(ctx.c, ragged, 2, 2, &k, &defined) == KF_ERR_INVALID_ARGUMENT);
}

TEST_CASE("train, load and predict through handles") {
    Ctx ctx;
    auto dir = temp_dir("model");
    std::string feats = "id,a,b\n", labels = "id,label\n";
    for (int i = 0; i < 40; ++i) {
        int y = i % 2;
        feats += "r" + std::to_string(i) + "," + std::to_string(y * 10 + i % 5) + "," + std::to_string(i % 3) + "\n";
        labels += "r" + std::to_string(i) + "," + std::to_string(y) + "\n";
    }
    write(dir / "f.csv", feats);
    write(dir / "y.csv", labels);
    auto model_path = (dir / "m.json").string();
    auto r = invoke(kf_train, ctx.c,
                    json{{"features", (dir / "f.csv").string()},
                         {"labels", (dir / "y.csv").string()},
                         {"family", "dt"},
                         {"out", model_path}});
    CHECK(r["training_accuracy"] == 1.0);

    kf_model* model = nullptr;
    REQUIRE(kf_model_load(ctx.c, model_path.c_str(), &model) == KF_OK);
    CHECK(kf_model_n_features(model) == 2);
    double rows[] = {14, 0, 1, 2};
    int out[2] = {-1, -1};
    REQUIRE(kf_model_predict(ctx.c, model, rows, 2, 2, out) == KF_OK);
    CHECK(out[0] == 1);
    CHECK(out[1] == 0);
    CHECK(kf_model_predict(ctx.c, model, rows, 1, 3, out) == KF_ERR_INVALID_ARGUMENT);
    double bad[] = {NAN, 1};
    CHECK(kf_model_predict(ctx.c, model, bad, 1, 2, out) == KF_ERR_DATA);
    kf_model_free(model);

    kf_model* none = nullptr;
    CHECK(kf_model_load(ctx.c, (dir / "missing.json").string().c_str(), &none) == KF_ERR_DATA);
    CHECK(none == nullptr);

    auto pred = invoke(kf_predict, ctx.c, json{{"model", model_path}, {"features", (dir / "f.csv").string()}});
    CHECK(pred["rows"] == 40);
    CHECK(pred["positives"] == 20);
}

TEST_CASE("offline run makes no network calls") {
    Ctx ctx;
    auto dir = temp_dir("run");
    json patch = json::parse(R"({
        "text": {"embedding_dim": 16},
        "learn": {"k": 3, "inner_k": 2, "families": ["decision_tree"], "risks": ["water"],
                  "grids": {"decision_tree": [{"max_depth": 4}]}}
    })");
    auto fx = invoke(kf_synth, ctx.c, json{{"out", dir.string()}, {"tweets", 150}, {"config_patch", patch}});
    auto run = invoke(kf_run, ctx.c, json{{"config", fx["config"]}});
    CHECK(run["network_calls"] == 0);
    CHECK(run["stages"].size() == 6);
    CHECK(kf_network_calls(ctx.c) == 0);

    auto again = invoke(kf_run, ctx.c, json{{"config", fx["config"]}});
    for (const auto& s : again["stages"]) CHECK(s["reused"] == true);

    auto rep = invoke(kf_report, ctx.c, json{{"config", fx["config"]}, {"kind", "table4"}});
    CHECK(rep["files"].size() == 2);
    auto t4 = invoke(kf_table4, ctx.c, json{{"config", fx["config"]}});
    CHECK(t4.size() > 0);
    auto kappa = invoke(kf_kappa, ctx.c, json{{"annotations", fx["annotations"]}, {"common_set", fx["common_set"]}});
    CHECK(kappa.contains("kappa"));
}

TEST_CASE("http providers are counted") {
    httplib::Server server;
    server.Get("/elevation", [](const httplib::Request& req, httplib::Response& res) {
        double lat = std::stod(req.get_param_value("lat"));
        res.set_content(json{{"elevation", 100.0 + lat}}.dump(), "application/json");
    });
    server.Get("/tiles", [](const httplib::Request& req, httplib::Response& res) {
        int w = std::stoi(req.get_param_value("width"));
        int h = std::stoi(req.get_param_value("height"));
        res.set_content(solid_png(w, h, {236, 232, 224}, w / 4), "image/png");
    });
    server.Get("/places", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(json{{"distance_m", 321.0}}.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    std::string base = "http://127.0.0.1:" + std::to_string(port);

    auto dir = temp_dir("http");
    json cfg = {{"corpus", "tweets.jsonl"},
                {"annotations", "annotations.csv"},
                {"output_dir", "out"},
                {"providers",
                 {{"mode", "http"},
                  {"rate_limit", 1000},
                  {"http",
                   {{"elevation", {{"url", base + "/elevation"}}},
                    {"tiles", {{"url", base + "/tiles"}}},
                    {"places", {{"url", base + "/places"}}}}}}},
                {"location", {{"tile_width", 40}, {"tile_height", 40}}}};
    write(dir / "config.json", cfg.dump());
    write(dir / "tweets.jsonl",
          R"({"id":"a","text":"x","geo":{"lat":10.1,"lon":76.1},"posted_at":"2015-01-01T00:00:00Z","user_id":"u"})"
          "\n"
          R"({"id":"b","text":"y","posted_at":"2015-01-01T00:00:00Z","user_id":"u"})"
          "\n");

    Ctx ctx;
    auto out = (dir / "loc.csv").string();
    auto r = invoke(kf_geofeat, ctx.c,
                    json{{"config", (dir / "config.json").string()}, {"corpus", (dir / "tweets.jsonl").string()},
                         {"out", out}});
    CHECK(r["rows"] == 2);
    CHECK(r["geotagged"] == 1);
    CHECK(r["network_calls"] == 19);
    CHECK(kf_network_calls(ctx.c) == 19);

    std::ifstream in(out);
    std::stringstream ss;
    ss << in.rdbuf();
    auto csv = ss.str();
    CHECK(csv.find("a,110.1,") != std::string::npos);
    CHECK(csv.find(",321,321,00000000") != std::string::npos);
    CHECK(csv.find("b,,,,,,,,,11111111") != std::string::npos);

    server.stop();
    th.join();
}
