#include <doctest.h>

#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "killfie/corpus.hpp"
#include "killfie/error.hpp"
#include "killfie/hash.hpp"
#include "killfie/io.hpp"
#include "unit/util.hpp"

using namespace killfie;

namespace {

std::string tweet_line(int i, bool with_id = true, bool with_image = false) {
    std::ostringstream os;
    os << "{";
    if (with_id) os << "\"id\":\"t" << i << "\",";
    os << "\"text\":\"hello #selfie\",\"hashtags\":[\"selfie\"],";
    if (with_image) os << "\"image_ref\":\"img/photo_" << i << ".jpg\",";
    os << "\"posted_at\":\"2015-06-0" << (i % 9 + 1) << "T10:00:00Z\",\"user_id\":\"u" << (i % 3) << "\"}\n";
    return os.str();
}

class ThrowingFilter final : public SelfieFilter {
public:
    double score(const std::string& ref) const override {
        if (ref.find("bad") != std::string::npos) throw std::runtime_error("cannot decode");
        return 0.9;
    }
};

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("empty file yields an empty corpus") {
    auto dir = testutil::temp_dir("corpus_empty");
    io::write_file((dir / "t.jsonl").string(), "");
    auto loaded = load_tweets((dir / "t.jsonl").string());
    CHECK(loaded.corpus.empty());
    CHECK(loaded.rejects.empty());
}

TEST_CASE("ten valid lines load ten records") {
    std::string text;
    for (int i = 0; i < 10; ++i) text += tweet_line(i);
    auto loaded = parse_tweets_jsonl(text);
    CHECK(loaded.corpus.size() == 10);
    CHECK(loaded.rejects.empty());
    REQUIRE(loaded.corpus.find("t3") != nullptr);
    CHECK(loaded.corpus.find("t3")->hashtags == std::vector<std::string>{"selfie"});
}

TEST_CASE("missing id is rejected with its line number") {
    std::string text;
    for (int i = 0; i < 10; ++i) text += tweet_line(i, i != 4);
    auto loaded = parse_tweets_jsonl(text);
    CHECK(loaded.corpus.size() == 9);
    REQUIRE(loaded.rejects.size() == 1);
    CHECK(loaded.rejects[0].line == 5);
}

TEST_CASE("mostly malformed input fails the load") {
    std::string text;
    for (int i = 0; i < 10; ++i) text += i < 6 ? "{not json\n" : tweet_line(i);
    CHECK_THROWS_AS(parse_tweets_jsonl(text), DataError);
    std::string half;
    for (int i = 0; i < 10; ++i) half += i < 5 ? "{not json\n" : tweet_line(i);
    CHECK(parse_tweets_jsonl(half).corpus.size() == 5);
}

TEST_CASE("duplicate ids and invalid coordinates are rejected") {
    std::string text = tweet_line(1) + tweet_line(1) + tweet_line(2) +
                       "{\"id\":\"g\",\"geo\":{\"lat\":91,\"lon\":0},\"posted_at\":\"2015-01-01T00:00:00Z\","
                       "\"user_id\":\"u\"}\n" +
                       tweet_line(3) + tweet_line(4);
    auto loaded = parse_tweets_jsonl(text);
    CHECK(loaded.corpus.size() == 4);
    CHECK(loaded.rejects.size() == 2);
    CHECK_THROWS_AS(GeoPoint(0, 181), InvalidArgument);
    CHECK_NOTHROW(GeoPoint(-90, -180));
}

TEST_CASE("jsonl round trip is canonical") {
    std::string text;
    for (int i = 0; i < 5; ++i) text += tweet_line(i, true, i % 2 == 0);
    auto a = parse_tweets_jsonl(text).corpus;
    auto dumped = corpus_to_jsonl(a);
    auto b = parse_tweets_jsonl(dumped).corpus;
    CHECK(corpus_to_jsonl(b) == dumped);
    CHECK(b.size() == 5);
}

TEST_CASE("csv tweets") {
    std::string text =
        "id,text,hashtags,lat,lon,image_ref,captions,posted_at,user_id\n"
        "a,on the edge,selfie|cliff,10.5,20.25,img/a.jpg,a man on a cliff|blue sky,2015-05-01T00:00:00Z,u1\n"
        "b,hi,,,,,,2015-05-02 00:00:00,u2\n";
    auto loaded = parse_tweets_csv(text);
    REQUIRE(loaded.corpus.size() == 2);
    const auto* a = loaded.corpus.find("a");
    REQUIRE(a->geo);
    CHECK(a->geo->lat() == 10.5);
    CHECK(a->hashtags.size() == 2);
    CHECK(a->captions->size() == 2);
    CHECK_FALSE(loaded.corpus.find("b")->geo);
    CHECK_THROWS_AS(parse_tweets_csv("x,y\n1,2\n"), DataError);
}

TEST_CASE("timestamps") {
    auto t = parse_timestamp("2016-02-29T23:59:59Z");
    REQUIRE(t);
    CHECK(format_timestamp(*t) == "2016-02-29T23:59:59Z");
    CHECK(*parse_timestamp("1970-01-01T00:00:00Z") == 0);
    CHECK_FALSE(parse_timestamp("2016-13-01T00:00:00Z"));
    CHECK_FALSE(parse_timestamp("yesterday"));
}

TEST_CASE("corpus stats") {
    CHECK(corpus_stats(Corpus{}).total_tweets == 0);
    CHECK_FALSE(corpus_stats(Corpus{}).first_tweet_at);

    std::vector<TweetRecord> recs(3);
    recs[0] = {"a", "#selfie", {"selfie"}, GeoPoint(1, 2), "x.jpg", std::nullopt, 100, "u1"};
    recs[1] = {"b", "look at this #selfie http://t.co/x", {"selfie"}, GeoPoint(3, 4), std::nullopt, std::nullopt, 50,
               "u1"};
    recs[2] = {"c", "#selfie https://t.co/y", {"selfie"}, std::nullopt, "y.jpg", std::nullopt, 300, "u2"};
    auto s = corpus_stats(Corpus(recs));
    CHECK(s.total_tweets == 3);
    CHECK(s.total_users == 2);
    CHECK(s.tweets_with_images == 2);
    CHECK(s.tweets_with_geo == 2);
    CHECK(s.tweets_with_text_besides_hashtags == 1);
    CHECK(*s.first_tweet_at == 50);
    CHECK(*s.last_tweet_at == 300);

    CHECK_FALSE(has_text_besides_hashtags(""));
    CHECK_FALSE(has_text_besides_hashtags("#a #b http://x.y"));
    CHECK(has_text_besides_hashtags("#a wow"));
}

TEST_CASE("selfie filter with constant scores") {
    std::string text;
    for (int i = 0; i < 8; ++i) text += tweet_line(i, true, i < 6);
    auto corpus = parse_tweets_jsonl(text).corpus;
    CHECK(filter_selfies(corpus, ConstantSelfieFilter(1.0)).corpus.size() == 6);
    CHECK(filter_selfies(corpus, ConstantSelfieFilter(0.0)).corpus.empty());
    CHECK_THROWS_AS(filter_selfies(corpus, ConstantSelfieFilter(1.0), 1.5), InvalidArgument);
    auto out_of_range = filter_selfies(corpus, ConstantSelfieFilter(2.0));
    CHECK(out_of_range.corpus.empty());
    CHECK(out_of_range.rejects.size() == 6);
}

TEST_CASE("filename hash filter matches an independent recomputation") {
    std::string text;
    for (int i = 0; i < 20; ++i) text += tweet_line(i, true, true);
    auto corpus = parse_tweets_jsonl(text).corpus;
    const std::uint64_t salt = 7;
    FilenameHashSelfieFilter filter(salt);
    std::set<std::string> expected;
    for (int i = 0; i < 20; ++i) {
        std::string name = "photo_" + std::to_string(i) + ".jpg";
        double score = unit_interval(mix64(fnv1a64(name) ^ salt));
        CHECK(filter.score("img/" + name) == score);
        CHECK(filter.score("/other/dir/" + name) == score);
        if (score >= 0.5) expected.insert("t" + std::to_string(i));
    }
    std::set<std::string> kept;
    for (const auto& t : filter_selfies(corpus, filter, 0.5).corpus.records()) kept.insert(t.id);
    CHECK(kept == expected);

    std::size_t prev = corpus.size() + 1;
    for (double th = 0.0; th <= 1.0; th += 0.1) {
        auto n = filter_selfies(corpus, filter, th).corpus.size();
        CHECK(n <= prev);
        prev = n;
    }
}

TEST_CASE("filter failures become rejects") {
    std::vector<TweetRecord> recs(2);
    recs[0] = {"a", "", {}, std::nullopt, "good.jpg", std::nullopt, 0, "u"};
    recs[1] = {"b", "", {}, std::nullopt, "bad.jpg", std::nullopt, 0, "u"};
    auto out = filter_selfies(Corpus(recs), ThrowingFilter());
    CHECK(out.corpus.size() == 1);
    REQUIRE(out.rejects.size() == 1);
    CHECK(out.rejects[0].id == "b");
}

TEST_CASE("shipped incident fixture") {
    auto inc = load_incidents(KILLFIE_DATA_DIR "/incidents.csv");
    CHECK(total_deaths(inc) == 127);
    CHECK(group_incident_count(inc) == 24);
    CHECK(individual_incident_count(inc) + group_incident_count(inc) == inc.size());

    std::map<std::string, std::uint64_t> country;
    for (const auto& r : incident_breakdown(inc, IncidentDimension::Country)) country[r.key] = r.count;
    CHECK(country.size() == 20);
    CHECK(country["India"] == 76);
    CHECK(country["Pakistan"] == 9);
    CHECK(country["USA"] == 8);
    CHECK(country["Russia"] == 6);

    auto reasons = incident_breakdown(inc, IncidentDimension::Reason);
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < reasons.size(); ++i) {
        sum += reasons[i].count;
        if (i) CHECK(reasons[i - 1].count >= reasons[i].count);
    }
    CHECK(sum == 127);

    std::map<std::string, std::uint64_t> groups;
    for (const auto& r : incident_breakdown(inc, IncidentDimension::GroupSize)) groups[r.key] = r.count;
    CHECK(groups == std::map<std::string, std::uint64_t>{{"2", 16}, {"3", 5}, {"5", 1}, {"7", 2}});
}

TEST_CASE("incident schema violations list every row") {
    std::string csv =
        "incident_id,date,country,reason,deaths,victim_genders,victim_age_bands\n"
        "a,2015-01-01,India,Water,1,M,Unknown\n"
        "b,2015-02-30,India,Water,1,M,Unknown\n"
        "c,2015-01-01,India,Lava,1,M,Unknown\n"
        "d,2015-01-01,India,Water,2,M,Unknown\n";
    try {
        parse_incidents_csv(csv);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        std::string msg = e.what();
        CHECK(msg.find("line 3") != std::string::npos);
        CHECK(msg.find("line 4") != std::string::npos);
        CHECK(msg.find("line 5") != std::string::npos);
        CHECK(msg.find("line 2") == std::string::npos);
    }
    CHECK(parse_incidents_csv("").empty());
    auto one = parse_incidents_csv(
        "incident_id,date,country,reason,deaths,victim_genders,victim_age_bands\n"
        "a,2015-01-01,India,HeightAndWater,2,M|F,Under20|Unknown\n");
    REQUIRE(one.size() == 1);
    CHECK(one[0].is_group());
    CHECK(parse_incidents_csv(incidents_to_csv(one)).size() == 1);
}

TEST_CASE("annotations") {
    std::string csv =
        "tweet_id,label,risk_reasons,annotator_id\n"
        "t1,Dangerous,Water|Height,a\n"
        "t1,Dangerous,Water,b\n"
        "t1,NotDangerous,,c\n"
        "t2,Dangerous,Road,a\n"
        "t2,NotDangerous,,b\n"
        "t3,Unsure,,a\n";
    auto recs = parse_annotations_csv(csv);
    CHECK(recs.size() == 6);
    CHECK(parse_annotations_csv(annotations_to_csv(recs)).size() == 6);
    auto res = resolve_annotations(recs);
    CHECK(res["t1"].label == Label::Dangerous);
    CHECK(res["t1"].risk_reasons == std::set<RiskReason>{RiskReason::Water, RiskReason::Height});
    CHECK(res["t2"].label == Label::Unsure);
    CHECK(res["t2"].risk_reasons.empty());
    CHECK(res["t3"].label == Label::Unsure);

    CHECK_THROWS_AS(parse_annotations_csv("tweet_id,label,risk_reasons,annotator_id\nt,NotDangerous,Water,a\n"),
                    DataError);
    CHECK_THROWS_AS(parse_annotations_csv("tweet_id,label,risk_reasons,annotator_id\nt,Maybe,,a\n"), DataError);
}

}  // TEST_SUITE
