#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace killfie {

/// WGS84 coordinate in degrees. Construction outside [-90, 90] x [-180, 180]
/// throws InvalidArgument.
class GeoPoint {
public:
    GeoPoint(double lat, double lon);

    double lat() const { return lat_; }
    double lon() const { return lon_; }

    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;

private:
    double lat_;
    double lon_;
};

/// Seconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

/// Parses `YYYY-MM-DDTHH:MM:SSZ` (the `T` may be a space; `Z` optional).
std::optional<Timestamp> parse_timestamp(std::string_view s);
std::string format_timestamp(Timestamp t);

struct TweetRecord {
    std::string id;
    std::string text;
    std::vector<std::string> hashtags;
    std::optional<GeoPoint> geo;
    std::optional<std::string> image_ref;
    std::optional<std::vector<std::string>> captions;
    Timestamp posted_at = 0;
    std::string user_id;

    bool has_image() const { return image_ref && !image_ref->empty(); }
};

/// A record that failed parsing or validation, kept for auditing.
struct Reject {
    std::size_t line = 0;  ///< 1-based source line, 0 when not file-backed
    std::string id;
    std::string reason;
};

/// Immutable collection of tweets with unique ids.
class Corpus {
public:
    Corpus() = default;
    explicit Corpus(std::vector<TweetRecord> records);

    const std::vector<TweetRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    const TweetRecord* find(std::string_view id) const;

private:
    std::vector<TweetRecord> records_;
    std::unordered_map<std::string, std::size_t> index_;
};

enum class CorpusFormat { Jsonl, Csv };

struct LoadedCorpus {
    Corpus corpus;
    std::vector<Reject> rejects;
};

/// Records failing invariants go to `rejects`. When more than half of the
/// records are rejected the whole load fails with per-line diagnostics.
LoadedCorpus load_tweets(const std::string& path, CorpusFormat format = CorpusFormat::Jsonl);
LoadedCorpus parse_tweets_jsonl(std::string_view text);
LoadedCorpus parse_tweets_csv(std::string_view text);

/// Canonical JSONL: one record per line, keys sorted, absent optionals omitted.
std::string tweet_to_json_line(const TweetRecord& t);
std::string corpus_to_jsonl(const Corpus& corpus);
void save_tweets(const Corpus& corpus, const std::string& path);

struct CorpusStats {
    std::size_t total_tweets = 0;
    std::size_t total_users = 0;
    std::size_t tweets_with_images = 0;
    std::size_t tweets_with_geo = 0;
    std::size_t tweets_with_text_besides_hashtags = 0;
    std::optional<Timestamp> first_tweet_at;
    std::optional<Timestamp> last_tweet_at;
};

/// True when the text holds at least one token once hashtags and URLs are removed.
bool has_text_besides_hashtags(std::string_view text);

CorpusStats corpus_stats(const Corpus& corpus);

/// Scores how likely an image is a selfie, in [0, 1]. May throw on failure.
class SelfieFilter {
public:
    virtual ~SelfieFilter() = default;
    virtual double score(const std::string& image_ref) const = 0;
};

class ConstantSelfieFilter final : public SelfieFilter {
public:
    explicit ConstantSelfieFilter(double value) : value_(value) {}
    double score(const std::string&) const override { return value_; }

private:
    double value_;
};

/// Deterministic stub: hashes the file name (last path component).
class FilenameHashSelfieFilter final : public SelfieFilter {
public:
    explicit FilenameHashSelfieFilter(std::uint64_t salt = 0) : salt_(salt) {}
    double score(const std::string& image_ref) const override;

private:
    std::uint64_t salt_;
};

struct FilteredCorpus {
    Corpus corpus;
    std::vector<Reject> rejects;
};

/// Keeps tweets that have an image scoring at least `threshold`. Filter
/// failures and out-of-range scores are routed to rejects.
FilteredCorpus filter_selfies(const Corpus& corpus, const SelfieFilter& filter, double threshold = 0.5);

/// Produces dense-caption sentences for a tweet's image.
class Captioner {
public:
    virtual ~Captioner() = default;
    virtual std::optional<std::vector<std::string>> captions(const TweetRecord& tweet) const = 0;
};

/// Stub that returns captions already ingested with the record.
class RecordCaptioner final : public Captioner {
public:
    std::optional<std::vector<std::string>> captions(const TweetRecord& tweet) const override {
        return tweet.captions;
    }
};

// --- incidents ------------------------------------------------------------

enum class IncidentReason { Height, Water, HeightAndWater, Train, Vehicle, Electricity, Weapon, Animal, Other };
enum class Gender { M, F, Unknown };
enum class AgeBand { Under20, A20to24, A25to29, A30plus, Unknown };

std::string_view to_string(IncidentReason r);
std::string_view to_string(Gender g);
std::string_view to_string(AgeBand a);
std::optional<IncidentReason> parse_incident_reason(std::string_view s);
std::optional<Gender> parse_gender(std::string_view s);
std::optional<AgeBand> parse_age_band(std::string_view s);

struct CalendarDate {
    int year = 1970;
    unsigned month = 1;
    unsigned day = 1;
    friend auto operator<=>(const CalendarDate&, const CalendarDate&) = default;
};

struct IncidentRecord {
    std::string incident_id;
    CalendarDate date;
    std::string country;
    IncidentReason reason = IncidentReason::Other;
    std::uint32_t deaths = 1;
    std::vector<Gender> victim_genders;   ///< empty when unknown, else size == deaths
    std::vector<AgeBand> victim_age_bands;
    bool synthetic = false;

    bool is_group() const { return deaths >= 2; }
};

using IncidentSet = std::vector<IncidentRecord>;

/// Parses an incidents CSV (header row mandatory). Any schema violation
/// fails the load with one diagnostic per offending row.
IncidentSet parse_incidents_csv(std::string_view text);
IncidentSet load_incidents(const std::string& path);
std::string incidents_to_csv(const IncidentSet& incidents);

enum class IncidentDimension { Country, Reason, GroupSize, Gender, AgeBand };
std::optional<IncidentDimension> parse_incident_dimension(std::string_view s);

struct CountRow {
    std::string key;
    std::uint64_t count = 0;
};

/// Country and reason count deaths; group_size counts group incidents
/// (deaths >= 2) per death count; gender and age_band count victims.
/// Country/reason rows are ordered by count descending, then key.
std::vector<CountRow> incident_breakdown(const IncidentSet& incidents, IncidentDimension dim);

std::uint64_t total_deaths(const IncidentSet& incidents);
std::size_t individual_incident_count(const IncidentSet& incidents);
std::size_t group_incident_count(const IncidentSet& incidents);
/// Incidents (not deaths) per reason.
std::uint64_t incidents_with_reason(const IncidentSet& incidents, IncidentReason reason);
std::uint64_t deaths_with_reason(const IncidentSet& incidents, IncidentReason reason);

// --- annotations ----------------------------------------------------------

enum class Label { Dangerous, NotDangerous, Unsure };
enum class RiskReason { Vehicle, Water, Height, HeightAndWater, Road, Animal, Train, Weapon };

std::string_view to_string(Label l);
std::string_view to_string(RiskReason r);
std::optional<Label> parse_label(std::string_view s);
std::optional<RiskReason> parse_risk_reason(std::string_view s);

struct AnnotationRecord {
    std::string tweet_id;
    Label label = Label::Unsure;
    std::set<RiskReason> risk_reasons;
    std::string annotator_id;
};

/// Format: `tweet_id,label,risk_reasons,annotator_id` with pipe-separated reasons.
std::vector<AnnotationRecord> parse_annotations_csv(std::string_view text);
std::vector<AnnotationRecord> load_annotations(const std::string& path);
std::string annotations_to_csv(const std::vector<AnnotationRecord>& records);

struct ResolvedAnnotation {
    Label label = Label::Unsure;
    std::set<RiskReason> risk_reasons;
};

/// Collapses multiple annotators per tweet: plurality label (ties resolve to
/// Unsure); reasons are the union over annotators who chose the winning
/// Dangerous label.
std::map<std::string, ResolvedAnnotation> resolve_annotations(const std::vector<AnnotationRecord>& records);

}  // namespace killfie
