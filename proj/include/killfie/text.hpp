#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace killfie::text {

using TokenStream = std::vector<std::string>;

/// Lowercased tokens with URLs dropped, hashtags unwrapped, mentions kept
/// with their '@', and each emoji codepoint as `emoji:<hex>`.
TokenStream tokenize(std::string_view utf8);

/// Removes `#tag` runs (the '#' and the word characters after it).
std::string strip_hashtags(std::string_view utf8);

/// Unigrams followed by adjacency bigrams joined with '_'.
std::vector<std::string> unigrams_and_bigrams(const TokenStream& doc);

struct VocabEntry {
    std::string term;
    std::uint32_t df = 0;
    double idf = 0.0;
};

/// Term index over unigrams and bigrams with smoothed idf
/// `ln((1 + N) / (1 + df)) + 1`. Indices follow lexicographic term order.
class Vocabulary {
public:
    Vocabulary() = default;
    Vocabulary(std::vector<VocabEntry> entries, std::uint32_t fitted_on);

    std::size_t size() const { return entries_.size(); }
    std::uint32_t fitted_on() const { return fitted_on_; }
    const std::vector<VocabEntry>& entries() const { return entries_; }

    /// Returns -1 when the term is out of vocabulary.
    std::int64_t index_of(std::string_view term) const;
    const VocabEntry& at(std::size_t index) const { return entries_.at(index); }

    nlohmann::json to_json() const;
    static Vocabulary from_json(const nlohmann::json& j);

private:
    std::vector<VocabEntry> entries_;
    std::map<std::string, std::uint32_t, std::less<>> index_;
    std::uint32_t fitted_on_ = 0;
};

struct VocabParams {
    std::uint32_t min_df = 2;
    std::uint32_t max_features = 20000;
};

/// Throws InvalidArgument when `docs` is empty or every document is empty.
Vocabulary fit_vocab(std::span<const TokenStream> docs, const VocabParams& params = {});

double idf_formula(std::uint32_t n_docs, std::uint32_t df);

/// Sorted by index, no explicit zeros.
using SparseVector = std::vector<std::pair<std::uint32_t, double>>;

double l2_norm(const SparseVector& v);

/// Raw count times idf, then L2-normalized. OOV terms are ignored.
SparseVector tfidf(const TokenStream& doc, const Vocabulary& vocab);

using DenseVector = std::vector<double>;

/// Document embedding interface. Implementations return unit-norm vectors for
/// non-empty documents and the zero vector otherwise.
class DocumentEmbedder {
public:
    virtual ~DocumentEmbedder() = default;
    virtual std::size_t dim() const = 0;
    virtual DenseVector embed(const TokenStream& doc) const = 0;
};

/// Signed feature hashing over unigrams and bigrams.
class HashingEmbedder final : public DocumentEmbedder {
public:
    HashingEmbedder(std::size_t dim, std::uint64_t seed);

    std::size_t dim() const override { return dim_; }
    DenseVector embed(const TokenStream& doc) const override;

    std::size_t bucket(std::string_view term) const;
    int sign(std::string_view term) const;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

DenseVector embed(const TokenStream& doc, std::size_t dim = 100, std::uint64_t seed = 0);

/// Joins dense-caption sentences with single spaces.
std::string join_captions(std::span<const std::string> captions);

struct CaptionFeatures {
    SparseVector tfidf;
    DenseVector embedding;
    bool missing = false;
};

/// Captions are treated as the text describing the image; the vocabulary
/// here must be the caption vocabulary, fitted separately from tweet text.
CaptionFeatures caption_features(std::span<const std::string> captions, const Vocabulary& caption_vocab,
                                 const DocumentEmbedder& embedder);

std::string sparse_to_text(const SparseVector& v);

}  // namespace killfie::text
