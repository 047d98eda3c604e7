#include "killfie/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <unordered_map>

#include "killfie/error.hpp"
#include "killfie/hash.hpp"
#include "killfie/io.hpp"

namespace killfie::text {

namespace {

constexpr char32_t kReplacement = 0xFFFD;

// Decodes one codepoint at `i`, advancing it. Malformed input yields U+FFFD.
char32_t next_codepoint(std::string_view s, std::size_t& i) {
    auto b0 = static_cast<unsigned char>(s[i++]);
    if (b0 < 0x80) return b0;
    int extra = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        extra = 1;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        extra = 2;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        extra = 3;
        cp = b0 & 0x07;
    } else {
        return kReplacement;
    }
    for (int k = 0; k < extra; ++k) {
        if (i >= s.size()) return kReplacement;
        auto b = static_cast<unsigned char>(s[i]);
        if ((b & 0xC0) != 0x80) return kReplacement;
        cp = (cp << 6) | (b & 0x3F);
        ++i;
    }
    return cp;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

bool is_emoji(char32_t cp) {
    return (cp >= 0x1F000 && cp <= 0x1FAFF) || (cp >= 0x2600 && cp <= 0x27BF) ||
           (cp >= 0x2300 && cp <= 0x23FF) || (cp >= 0x2B00 && cp <= 0x2BFF);
}

bool is_space(char32_t cp) {
    return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' || cp == '\v' || cp == 0xA0 ||
           (cp >= 0x2000 && cp <= 0x200B) || cp == 0x3000;
}

bool is_word_char(char32_t cp) {
    if (cp < 0x80) return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') || (cp >= '0' && cp <= '9');
    if (cp == kReplacement || is_emoji(cp)) return false;
    if (cp < 0xC0) return cp == 0xAA || cp == 0xB5 || cp == 0xBA;
    if (cp == 0xD7 || cp == 0xF7) return false;
    if (cp >= 0x2000 && cp <= 0x2BFF) return false;
    if (cp >= 0x3000 && cp <= 0x303F) return false;
    if (cp >= 0xE000 && cp <= 0xF8FF) return false;
    if (cp >= 0xFE00 && cp <= 0xFE0F) return false;
    if (cp >= 0xFF00 && cp <= 0xFF0F) return false;
    if (cp >= 0xFFF0 && cp <= 0xFFFF) return false;
    return true;
}

char32_t to_lower(char32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 32;
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;
    if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 32;
    if (cp >= 0x410 && cp <= 0x42F) return cp + 32;
    if (cp >= 0x400 && cp <= 0x40F) return cp + 80;
    if (cp >= 0x100 && cp <= 0x17F && cp % 2 == 0 && cp != 0x130 && cp != 0x138) return cp + 1;
    return cp;
}

bool starts_with_ci(std::string_view s, std::size_t pos, std::string_view prefix) {
    if (s.size() - pos < prefix.size()) return false;
    for (std::size_t k = 0; k < prefix.size(); ++k) {
        char c = s[pos + k];
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
        if (c != prefix[k]) return false;
    }
    return true;
}

bool url_at(std::string_view s, std::size_t pos) {
    return starts_with_ci(s, pos, "http://") || starts_with_ci(s, pos, "https://") || starts_with_ci(s, pos, "www.");
}

}  // namespace

TokenStream tokenize(std::string_view s) {
    TokenStream tokens;
    std::string word;
    bool mention = false;
    bool prev_word = false;
    auto flush = [&] {
        if (!word.empty()) {
            tokens.push_back(mention ? "@" + word : word);
        }
        word.clear();
        mention = false;
    };
    std::size_t i = 0;
    while (i < s.size()) {
        if (!prev_word && url_at(s, i)) {
            flush();
            while (i < s.size()) {
                std::size_t j = i;
                if (is_space(next_codepoint(s, j))) break;
                i = j;
            }
            prev_word = false;
            continue;
        }
        char32_t cp = next_codepoint(s, i);
        if (is_word_char(cp)) {
            append_utf8(word, to_lower(cp));
            prev_word = true;
            continue;
        }
        // '_' continues a mention handle but splits ordinary words.
        if (cp == '_' && mention && !word.empty()) {
            word.push_back('_');
            continue;
        }
        flush();
        prev_word = false;
        if (cp == '@' && i < s.size()) {
            std::size_t j = i;
            if (is_word_char(next_codepoint(s, j))) mention = true;
        } else if (is_emoji(cp)) {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "emoji:%x", static_cast<unsigned>(cp));
            tokens.emplace_back(buf);
        }
    }
    flush();
    return tokens;
}

std::string strip_hashtags(std::string_view s) {
    std::string out;
    std::size_t i = 0;
    while (i < s.size()) {
        std::size_t start = i;
        char32_t cp = next_codepoint(s, i);
        if (cp == '#') {
            std::size_t j = i;
            while (j < s.size()) {
                std::size_t k = j;
                char32_t c = next_codepoint(s, k);
                if (!is_word_char(c) && c != '_') break;
                j = k;
            }
            if (j > i) {
                i = j;
                continue;
            }
        }
        out.append(s.substr(start, i - start));
    }
    return out;
}

std::vector<std::string> unigrams_and_bigrams(const TokenStream& doc) {
    std::vector<std::string> terms(doc.begin(), doc.end());
    for (std::size_t i = 0; i + 1 < doc.size(); ++i) terms.push_back(doc[i] + "_" + doc[i + 1]);
    return terms;
}

double idf_formula(std::uint32_t n_docs, std::uint32_t df) {
    return std::log((1.0 + n_docs) / (1.0 + df)) + 1.0;
}

Vocabulary::Vocabulary(std::vector<VocabEntry> entries, std::uint32_t fitted_on)
    : entries_(std::move(entries)), fitted_on_(fitted_on) {
    std::sort(entries_.begin(), entries_.end(),
              [](const VocabEntry& a, const VocabEntry& b) { return a.term < b.term; });
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (!index_.emplace(entries_[i].term, static_cast<std::uint32_t>(i)).second)
            throw InvalidArgument("duplicate vocabulary term: " + entries_[i].term);
    }
}

std::int64_t Vocabulary::index_of(std::string_view term) const {
    auto it = index_.find(term);
    return it == index_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

nlohmann::json Vocabulary::to_json() const {
    nlohmann::json terms = nlohmann::json::array();
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        terms.push_back({{"term", entries_[i].term}, {"index", i}, {"df", entries_[i].df}, {"idf", entries_[i].idf}});
    }
    return {{"fitted_on", fitted_on_}, {"terms", std::move(terms)}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
    std::vector<VocabEntry> entries;
    for (const auto& t : j.at("terms")) {
        entries.push_back({t.at("term").get<std::string>(), t.at("df").get<std::uint32_t>(), t.at("idf").get<double>()});
    }
    Vocabulary v(std::move(entries), j.at("fitted_on").get<std::uint32_t>());
    for (const auto& t : j.at("terms")) {
        if (v.index_of(t.at("term").get<std::string>()) != t.at("index").get<std::int64_t>())
            throw DataError("vocabulary indices are not in lexicographic term order");
    }
    return v;
}

Vocabulary fit_vocab(std::span<const TokenStream> docs, const VocabParams& params) {
    if (docs.empty()) throw InvalidArgument("fit_vocab: no documents");
    if (std::all_of(docs.begin(), docs.end(), [](const TokenStream& d) { return d.empty(); }))
        throw InvalidArgument("fit_vocab: every document is empty");
    std::unordered_map<std::string, std::uint32_t> df;
    for (const auto& doc : docs) {
        auto terms = unigrams_and_bigrams(doc);
        std::sort(terms.begin(), terms.end());
        terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
        for (auto& t : terms) ++df[std::move(t)];
    }
    std::vector<std::pair<std::string, std::uint32_t>> kept;
    for (auto& [term, count] : df)
        if (count >= params.min_df) kept.emplace_back(term, count);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (kept.size() > params.max_features) kept.resize(params.max_features);
    const auto n = static_cast<std::uint32_t>(docs.size());
    std::vector<VocabEntry> entries;
    entries.reserve(kept.size());
    for (auto& [term, count] : kept) entries.push_back({term, count, idf_formula(n, count)});
    return Vocabulary(std::move(entries), n);
}

double l2_norm(const SparseVector& v) {
    double s = 0.0;
    for (const auto& [_, x] : v) s += x * x;
    return std::sqrt(s);
}

SparseVector tfidf(const TokenStream& doc, const Vocabulary& vocab) {
    std::map<std::uint32_t, double> counts;
    for (const auto& term : unigrams_and_bigrams(doc)) {
        auto idx = vocab.index_of(term);
        if (idx >= 0) counts[static_cast<std::uint32_t>(idx)] += 1.0;
    }
    SparseVector out;
    out.reserve(counts.size());
    for (const auto& [idx, c] : counts) out.emplace_back(idx, c * vocab.at(idx).idf);
    double norm = l2_norm(out);
    if (norm > 0)
        for (auto& [_, x] : out) x /= norm;
    return out;
}

HashingEmbedder::HashingEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim < 2) throw InvalidArgument("embedding dimension must be at least 2");
}

std::size_t HashingEmbedder::bucket(std::string_view term) const {
    return static_cast<std::size_t>(mix64(fnv1a64(term) ^ mix64(seed_)) % dim_);
}

int HashingEmbedder::sign(std::string_view term) const {
    // Independent of the bucket hash: different basis and seed lane.
    std::uint64_t h = mix64(fnv1a64(term, 0x84222325cbf29ce4ULL) ^ mix64(seed_ ^ 0x5bd1e9955bd1e995ULL));
    return (h >> 63) ? -1 : 1;
}

DenseVector HashingEmbedder::embed(const TokenStream& doc) const {
    DenseVector v(dim_, 0.0);
    for (const auto& term : unigrams_and_bigrams(doc)) v[bucket(term)] += sign(term);
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0)
        for (double& x : v) x /= norm;
    return v;
}

DenseVector embed(const TokenStream& doc, std::size_t dim, std::uint64_t seed) {
    return HashingEmbedder(dim, seed).embed(doc);
}

std::string join_captions(std::span<const std::string> captions) {
    std::string out;
    for (std::size_t i = 0; i < captions.size(); ++i) {
        if (i) out.push_back(' ');
        out += captions[i];
    }
    return out;
}

CaptionFeatures caption_features(std::span<const std::string> captions, const Vocabulary& caption_vocab,
                                 const DocumentEmbedder& embedder) {
    CaptionFeatures out;
    if (captions.empty()) {
        out.embedding.assign(embedder.dim(), 0.0);
        out.missing = true;
        return out;
    }
    auto doc = tokenize(join_captions(captions));
    out.tfidf = tfidf(doc, caption_vocab);
    out.embedding = embedder.embed(doc);
    return out;
}

std::string sparse_to_text(const SparseVector& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out.push_back(' ');
        out += std::to_string(v[i].first);
        out.push_back(':');
        out += io::format_double(v[i].second);
    }
    return out;
}

}  // namespace killfie::text
