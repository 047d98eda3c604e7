#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "killfie/error.hpp"
#include "killfie/text.hpp"

using namespace killfie;
using namespace killfie::text;

namespace {

std::set<std::string> terms_of(const Vocabulary& v) {
    std::set<std::string> s;
    for (const auto& e : v.entries()) s.insert(e.term);
    return s;
}

double value_at(const SparseVector& v, std::int64_t idx) {
    for (auto [i, x] : v)
        if (static_cast<std::int64_t>(i) == idx) return x;
    return 0.0;
}

}  // namespace

TEST_SUITE("textfeat") {

TEST_CASE("tokenizer rules") {
    CHECK(tokenize("").empty());
    CHECK(tokenize("#Selfie at http://x.co cliff!") == TokenStream{"selfie", "at", "cliff"});
    CHECK(tokenize("\xF0\x9F\x98\x80") == TokenStream{"emoji:1f600"});
    CHECK(tokenize("see www.example.com/x NOW") == TokenStream{"see", "now"});
    CHECK(tokenize("hey @Friend look") == TokenStream{"hey", "@friend", "look"});
    CHECK(tokenize("top\xF0\x9F\x98\x80\xF0\x9F\x8C\x8A" "edge") ==
          TokenStream{"top", "emoji:1f600", "emoji:1f30a", "edge"});
    CHECK(tokenize("Don't-stop, 2016!") == TokenStream{"don", "t", "stop", "2016"});
    CHECK(strip_hashtags("on the #edge now") == "on the  now");
}

TEST_CASE("unigrams and bigrams") {
    CHECK(unigrams_and_bigrams({"a", "b", "c"}) == std::vector<std::string>{"a", "b", "c", "a_b", "b_c"});
    CHECK(unigrams_and_bigrams({"a"}) == std::vector<std::string>{"a"});
    CHECK(unigrams_and_bigrams({}).empty());
}

TEST_CASE("vocabulary fitting") {
    std::vector<TokenStream> docs{{"a", "b"}, {"a"}};
    auto v = fit_vocab(docs, {1, 20000});
    CHECK(terms_of(v) == std::set<std::string>{"a", "b", "a_b"});
    CHECK(v.at(v.index_of("a")).idf == 1.0);
    CHECK(v.at(v.index_of("b")).idf == doctest::Approx(std::log(3.0 / 2.0) + 1.0));
    CHECK(v.fitted_on() == 2);
    CHECK(v.index_of("zzz") == -1);
    CHECK(v.index_of("a") == 0);
    CHECK(v.index_of("a_b") == 1);
    CHECK(v.index_of("b") == 2);

    CHECK(terms_of(fit_vocab(docs, {2, 20000})) == std::set<std::string>{"a"});

    std::vector<TokenStream> rev{{"a"}, {"a", "b"}};
    auto r = fit_vocab(rev, {1, 20000});
    CHECK(r.to_json() == v.to_json());

    std::vector<TokenStream> once{{"x", "y", "x"}};
    std::vector<TokenStream> twice{{"x", "y", "x"}, {"x", "y", "x"}};
    auto v1 = fit_vocab(once, {1, 20000});
    auto v2 = fit_vocab(twice, {1, 20000});
    CHECK(terms_of(v1) == terms_of(v2));
    for (const auto& e : v1.entries()) {
        CHECK(v2.at(v2.index_of(e.term)).df == 2 * e.df);
        CHECK(v2.at(v2.index_of(e.term)).idf == doctest::Approx(e.idf));
    }

    std::vector<TokenStream> capped{{"a", "b", "c"}, {"a", "b"}, {"a"}};
    auto c = fit_vocab(capped, {1, 2});
    CHECK(terms_of(c) == std::set<std::string>{"a", "a_b"});

    CHECK_THROWS_AS(fit_vocab(std::vector<TokenStream>{}), InvalidArgument);
    CHECK_THROWS_AS(fit_vocab(std::vector<TokenStream>{{}, {}}), InvalidArgument);

    auto round = Vocabulary::from_json(v.to_json());
    CHECK(round.to_json() == v.to_json());
}

TEST_CASE("tf-idf by hand") {
    std::vector<TokenStream> docs{{"a", "b"}, {"a"}};
    auto v = fit_vocab(docs, {1, 20000});
    CHECK(tfidf({}, v).empty());
    CHECK(tfidf({"q"}, v).empty());

    auto one = tfidf({"b"}, v);
    REQUIRE(one.size() == 1);
    CHECK(one[0].second == 1.0);

    // counts: a=2, b=1, a_a=oov, a_b=1
    double ia = 1.0, ib = std::log(1.5) + 1.0, iab = std::log(1.5) + 1.0;
    double wa = 2 * ia, wb = ib, wab = iab;
    double norm = std::sqrt(wa * wa + wb * wb + wab * wab);
    auto x = tfidf({"a", "a", "b"}, v);
    CHECK(x.size() == 3);
    CHECK(value_at(x, v.index_of("a")) == doctest::Approx(wa / norm).epsilon(1e-15));
    CHECK(value_at(x, v.index_of("b")) == doctest::Approx(wb / norm).epsilon(1e-15));
    CHECK(value_at(x, v.index_of("a_b")) == doctest::Approx(wab / norm).epsilon(1e-15));
    CHECK(l2_norm(x) == doctest::Approx(1.0));
    CHECK(std::is_sorted(x.begin(), x.end()));
}

TEST_CASE("hashed embeddings") {
    HashingEmbedder e(64, 7);
    TokenStream doc{"cliff", "edge", "water"};
    auto a = e.embed(doc);
    CHECK(a.size() == 64);
    CHECK(a == e.embed(doc));
    double n = 0;
    for (double x : a) n += x * x;
    CHECK(std::sqrt(n) == doctest::Approx(1.0));
    auto zero = e.embed({});
    CHECK(std::all_of(zero.begin(), zero.end(), [](double x) { return x == 0.0; }));

    DenseVector oracle(64, 0.0);
    for (const auto& t : unigrams_and_bigrams(doc)) oracle[e.bucket(t)] += e.sign(t);
    double on = 0;
    for (double x : oracle) on += x * x;
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(oracle[i] / std::sqrt(on)).epsilon(1e-15));

    HashingEmbedder other(64, 8);
    CHECK(other.embed(doc) != a);
    CHECK(embed(doc, 64, 7) == a);
    CHECK(std::abs(e.sign("cliff")) == 1);
    CHECK(e.bucket("cliff") < 64);
    CHECK_THROWS_AS(HashingEmbedder(1, 0), InvalidArgument);
}

TEST_CASE("caption features") {
    std::vector<std::string> caps{"a man on a cliff", "blue water below"};
    CHECK(join_captions(caps) == "a man on a cliff blue water below");
    auto joined = tokenize(join_captions(caps));
    std::vector<TokenStream> docs{joined, {"a", "man"}};
    auto vocab = fit_vocab(docs, {1, 20000});
    HashingEmbedder e(32, 1);
    auto f = caption_features(caps, vocab, e);
    CHECK_FALSE(f.missing);
    CHECK(f.tfidf == tfidf(joined, vocab));
    CHECK(f.embedding == e.embed(joined));

    auto none = caption_features(std::span<const std::string>{}, vocab, e);
    CHECK(none.missing);
    CHECK(none.tfidf.empty());
    CHECK(none.embedding.size() == 32);
}

TEST_CASE("sparse text format") {
    CHECK(sparse_to_text({{1, 0.5}, {4, 0.25}}) == "1:0.5 4:0.25");
    CHECK(sparse_to_text({}).empty());
}

}  // TEST_SUITE
