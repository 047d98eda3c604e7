#include "killfie/corpus.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "json.hpp"
#include "killfie/error.hpp"
#include "killfie/hash.hpp"
#include "killfie/io.hpp"
#include "killfie/text.hpp"

namespace killfie {

using nlohmann::json;

GeoPoint::GeoPoint(double lat, double lon) : lat_(lat), lon_(lon) {
    if (!(lat >= -90.0 && lat <= 90.0) || !(lon >= -180.0 && lon <= 180.0))
        throw InvalidArgument("coordinate out of range: (" + io::format_double(lat) + ", " + io::format_double(lon) +
                              ")");
}

namespace {

template <typename T>
bool parse_int(std::string_view s, T& out) {
    if (s.empty()) return false;
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
    if (s.empty()) return false;
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

std::optional<CalendarDate> parse_date(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    int y = 0;
    unsigned m = 0, d = 0;
    if (!parse_int(s.substr(0, 4), y) || !parse_int(s.substr(5, 2), m) || !parse_int(s.substr(8, 2), d))
        return std::nullopt;
    std::chrono::year_month_day ymd{std::chrono::year(y), std::chrono::month(m), std::chrono::day(d)};
    if (!ymd.ok()) return std::nullopt;
    return CalendarDate{y, m, d};
}

std::string format_date(const CalendarDate& d) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", d.year, d.month, d.day);
    return buf;
}

}  // namespace

std::optional<Timestamp> parse_timestamp(std::string_view s) {
    if (s.size() < 19) return std::nullopt;
    auto date = parse_date(s.substr(0, 10));
    if (!date || (s[10] != 'T' && s[10] != ' ') || s[13] != ':' || s[16] != ':') return std::nullopt;
    int hh = 0, mm = 0, ss = 0;
    if (!parse_int(s.substr(11, 2), hh) || !parse_int(s.substr(14, 2), mm) || !parse_int(s.substr(17, 2), ss))
        return std::nullopt;
    auto rest = s.substr(19);
    if (!(rest.empty() || rest == "Z")) return std::nullopt;
    if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;
    using namespace std::chrono;
    sys_days days{year_month_day{year(date->year), month(date->month), day(date->day)}};
    return days.time_since_epoch().count() * 86400LL + hh * 3600LL + mm * 60LL + ss;
}

std::string format_timestamp(Timestamp t) {
    using namespace std::chrono;
    auto day_count = t >= 0 ? t / 86400 : -((-t + 86399) / 86400);
    auto secs = t - day_count * 86400;
    year_month_day ymd{sys_days{days{day_count}}};
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long long>(secs / 3600), static_cast<long long>((secs / 60) % 60),
                  static_cast<long long>(secs % 60));
    return buf;
}

// --- Corpus -----------------------------------------------------------------

Corpus::Corpus(std::vector<TweetRecord> records) : records_(std::move(records)) {
    index_.reserve(records_.size());
    for (std::size_t i = 0; i < records_.size(); ++i) {
        if (records_[i].id.empty()) throw InvalidArgument("tweet with empty id");
        if (!index_.emplace(records_[i].id, i).second) throw InvalidArgument("duplicate tweet id: " + records_[i].id);
    }
}

const TweetRecord* Corpus::find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &records_[it->second];
}

namespace {

// Validates invariants shared by every input format; returns an error string.
std::string validate(const TweetRecord& t) {
    if (t.id.empty()) return "missing or empty id";
    if (t.user_id.empty()) return "missing user_id";
    if (t.captions) {
        for (const auto& c : *t.captions)
            if (c.empty()) return "empty caption string";
    }
    return {};
}

TweetRecord tweet_from_json(const json& j) {
    if (!j.is_object()) throw DataError("record is not a JSON object");
    TweetRecord t;
    if (j.contains("id")) t.id = j.at("id").get<std::string>();
    if (j.contains("text")) t.text = j.at("text").get<std::string>();
    if (j.contains("hashtags")) t.hashtags = j.at("hashtags").get<std::vector<std::string>>();
    if (j.contains("geo") && !j.at("geo").is_null()) {
        const auto& g = j.at("geo");
        t.geo = GeoPoint(g.at("lat").get<double>(), g.at("lon").get<double>());
    }
    if (j.contains("image_ref") && !j.at("image_ref").is_null()) t.image_ref = j.at("image_ref").get<std::string>();
    if (j.contains("captions") && !j.at("captions").is_null())
        t.captions = j.at("captions").get<std::vector<std::string>>();
    if (!j.contains("posted_at")) throw DataError("missing posted_at");
    auto ts = parse_timestamp(j.at("posted_at").get<std::string>());
    if (!ts) throw DataError("malformed posted_at");
    t.posted_at = *ts;
    if (j.contains("user_id")) t.user_id = j.at("user_id").get<std::string>();
    return t;
}

std::string diagnostics(const std::vector<Reject>& rejects) {
    std::string out;
    for (const auto& r : rejects) {
        out += "\n  line " + std::to_string(r.line);
        if (!r.id.empty()) out += " (id " + r.id + ")";
        out += ": " + r.reason;
    }
    return out;
}

LoadedCorpus finish_load(std::vector<std::pair<std::size_t, TweetRecord>> parsed, std::vector<Reject> rejects,
                         std::size_t total) {
    std::vector<TweetRecord> kept;
    std::unordered_set<std::string> seen;
    for (auto& [line, t] : parsed) {
        if (auto err = validate(t); !err.empty()) {
            rejects.push_back({line, t.id, err});
            continue;
        }
        if (!seen.insert(t.id).second) {
            rejects.push_back({line, t.id, "duplicate id"});
            continue;
        }
        kept.push_back(std::move(t));
    }
    std::sort(rejects.begin(), rejects.end(), [](const Reject& a, const Reject& b) { return a.line < b.line; });
    if (total > 0 && rejects.size() * 2 > total)
        throw DataError(std::to_string(rejects.size()) + " of " + std::to_string(total) +
                        " records malformed:" + diagnostics(rejects));
    return {Corpus(std::move(kept)), std::move(rejects)};
}

}  // namespace

LoadedCorpus parse_tweets_jsonl(std::string_view text) {
    std::vector<std::pair<std::size_t, TweetRecord>> parsed;
    std::vector<Reject> rejects;
    std::size_t total = 0;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        ++line_no;
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
        ++total;
        std::string id;
        try {
            auto j = json::parse(line);
            if (j.is_object() && j.contains("id") && j.at("id").is_string()) id = j.at("id").get<std::string>();
            parsed.emplace_back(line_no, tweet_from_json(j));
        } catch (const json::exception& e) {
            rejects.push_back({line_no, id, std::string("malformed JSON record: ") + e.what()});
        } catch (const Error& e) {
            rejects.push_back({line_no, id, e.what()});
        }
    }
    return finish_load(std::move(parsed), std::move(rejects), total);
}

LoadedCorpus parse_tweets_csv(std::string_view text) {
    auto rows = io::parse_csv(text);
    std::vector<std::pair<std::size_t, TweetRecord>> parsed;
    std::vector<Reject> rejects;
    if (rows.empty()) return {};
    static const std::vector<std::string> kHeader = {"id", "text", "hashtags", "lat", "lon",
                                                     "image_ref", "captions", "posted_at", "user_id"};
    if (rows[0].fields != kHeader)
        throw DataError("tweet CSV header must be: id,text,hashtags,lat,lon,image_ref,captions,posted_at,user_id");
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const auto& f = row.fields;
        if (f.size() != kHeader.size()) {
            rejects.push_back({row.line, f.empty() ? "" : f[0], "expected 9 fields, got " + std::to_string(f.size())});
            continue;
        }
        try {
            TweetRecord t;
            t.id = f[0];
            t.text = f[1];
            t.hashtags = io::split(f[2], '|');
            if (!f[3].empty() || !f[4].empty()) {
                double lat = 0, lon = 0;
                if (!parse_double(f[3], lat) || !parse_double(f[4], lon)) throw DataError("malformed lat/lon");
                t.geo = GeoPoint(lat, lon);
            }
            if (!f[5].empty()) t.image_ref = f[5];
            if (!f[6].empty()) t.captions = io::split(f[6], '|');
            auto ts = parse_timestamp(f[7]);
            if (!ts) throw DataError("malformed posted_at");
            t.posted_at = *ts;
            t.user_id = f[8];
            parsed.emplace_back(row.line, std::move(t));
        } catch (const Error& e) {
            rejects.push_back({row.line, f[0], e.what()});
        }
    }
    return finish_load(std::move(parsed), std::move(rejects), rows.size() - 1);
}

LoadedCorpus load_tweets(const std::string& path, CorpusFormat format) {
    auto text = io::read_file(path);
    return format == CorpusFormat::Jsonl ? parse_tweets_jsonl(text) : parse_tweets_csv(text);
}

std::string tweet_to_json_line(const TweetRecord& t) {
    json j;
    j["id"] = t.id;
    j["text"] = t.text;
    j["hashtags"] = t.hashtags;
    if (t.geo) j["geo"] = {{"lat", t.geo->lat()}, {"lon", t.geo->lon()}};
    if (t.image_ref) j["image_ref"] = *t.image_ref;
    if (t.captions) j["captions"] = *t.captions;
    j["posted_at"] = format_timestamp(t.posted_at);
    j["user_id"] = t.user_id;
    return j.dump();
}

std::string corpus_to_jsonl(const Corpus& corpus) {
    std::string out;
    for (const auto& t : corpus.records()) {
        out += tweet_to_json_line(t);
        out.push_back('\n');
    }
    return out;
}

void save_tweets(const Corpus& corpus, const std::string& path) { io::write_file(path, corpus_to_jsonl(corpus)); }

bool has_text_besides_hashtags(std::string_view text) {
    return !text::tokenize(text::strip_hashtags(text)).empty();
}

CorpusStats corpus_stats(const Corpus& corpus) {
    CorpusStats s;
    std::unordered_set<std::string> users;
    for (const auto& t : corpus.records()) {
        ++s.total_tweets;
        users.insert(t.user_id);
        if (t.has_image()) ++s.tweets_with_images;
        if (t.geo) ++s.tweets_with_geo;
        if (has_text_besides_hashtags(t.text)) ++s.tweets_with_text_besides_hashtags;
        if (!s.first_tweet_at || t.posted_at < *s.first_tweet_at) s.first_tweet_at = t.posted_at;
        if (!s.last_tweet_at || t.posted_at > *s.last_tweet_at) s.last_tweet_at = t.posted_at;
    }
    s.total_users = users.size();
    return s;
}

double FilenameHashSelfieFilter::score(const std::string& image_ref) const {
    auto slash = image_ref.find_last_of("/\\");
    std::string_view name = slash == std::string::npos ? std::string_view(image_ref)
                                                       : std::string_view(image_ref).substr(slash + 1);
    return unit_interval(mix64(fnv1a64(name) ^ salt_));
}

FilteredCorpus filter_selfies(const Corpus& corpus, const SelfieFilter& filter, double threshold) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw InvalidArgument("selfie threshold must lie in [0, 1]");
    std::vector<TweetRecord> kept;
    std::vector<Reject> rejects;
    for (const auto& t : corpus.records()) {
        if (!t.has_image()) continue;
        double score = 0.0;
        try {
            score = filter.score(*t.image_ref);
        } catch (const std::exception& e) {
            rejects.push_back({0, t.id, std::string("selfie filter failed: ") + e.what()});
            continue;
        }
        if (!(score >= 0.0 && score <= 1.0)) {
            rejects.push_back({0, t.id, "selfie filter score outside [0, 1]: " + io::format_double(score)});
            continue;
        }
        if (score >= threshold) kept.push_back(t);
    }
    return {Corpus(std::move(kept)), std::move(rejects)};
}

// --- enums ------------------------------------------------------------------

namespace {

template <typename E, std::size_t N>
std::optional<E> lookup(std::string_view s, const std::array<std::pair<E, std::string_view>, N>& table) {
    for (const auto& [e, name] : table)
        if (name == s) return e;
    return std::nullopt;
}

template <typename E, std::size_t N>
std::string_view name_of(E e, const std::array<std::pair<E, std::string_view>, N>& table) {
    for (const auto& [v, name] : table)
        if (v == e) return name;
    return "?";
}

constexpr std::array<std::pair<IncidentReason, std::string_view>, 9> kIncidentReasons{{
    {IncidentReason::Height, "Height"},
    {IncidentReason::Water, "Water"},
    {IncidentReason::HeightAndWater, "HeightAndWater"},
    {IncidentReason::Train, "Train"},
    {IncidentReason::Vehicle, "Vehicle"},
    {IncidentReason::Electricity, "Electricity"},
    {IncidentReason::Weapon, "Weapon"},
    {IncidentReason::Animal, "Animal"},
    {IncidentReason::Other, "Other"},
}};

constexpr std::array<std::pair<Gender, std::string_view>, 3> kGenders{{
    {Gender::M, "M"},
    {Gender::F, "F"},
    {Gender::Unknown, "Unknown"},
}};

constexpr std::array<std::pair<AgeBand, std::string_view>, 5> kAgeBands{{
    {AgeBand::Under20, "Under20"},
    {AgeBand::A20to24, "A20to24"},
    {AgeBand::A25to29, "A25to29"},
    {AgeBand::A30plus, "A30plus"},
    {AgeBand::Unknown, "Unknown"},
}};

constexpr std::array<std::pair<Label, std::string_view>, 3> kLabels{{
    {Label::Dangerous, "Dangerous"},
    {Label::NotDangerous, "NotDangerous"},
    {Label::Unsure, "Unsure"},
}};

constexpr std::array<std::pair<RiskReason, std::string_view>, 8> kRiskReasons{{
    {RiskReason::Vehicle, "Vehicle"},
    {RiskReason::Water, "Water"},
    {RiskReason::Height, "Height"},
    {RiskReason::HeightAndWater, "HeightAndWater"},
    {RiskReason::Road, "Road"},
    {RiskReason::Animal, "Animal"},
    {RiskReason::Train, "Train"},
    {RiskReason::Weapon, "Weapon"},
}};

constexpr std::array<std::pair<IncidentDimension, std::string_view>, 5> kDimensions{{
    {IncidentDimension::Country, "country"},
    {IncidentDimension::Reason, "reason"},
    {IncidentDimension::GroupSize, "group_size"},
    {IncidentDimension::Gender, "gender"},
    {IncidentDimension::AgeBand, "age_band"},
}};

}  // namespace

std::string_view to_string(IncidentReason r) { return name_of(r, kIncidentReasons); }
std::string_view to_string(Gender g) { return name_of(g, kGenders); }
std::string_view to_string(AgeBand a) { return name_of(a, kAgeBands); }
std::string_view to_string(Label l) { return name_of(l, kLabels); }
std::string_view to_string(RiskReason r) { return name_of(r, kRiskReasons); }
std::optional<IncidentReason> parse_incident_reason(std::string_view s) { return lookup(s, kIncidentReasons); }
std::optional<Gender> parse_gender(std::string_view s) { return lookup(s, kGenders); }
std::optional<AgeBand> parse_age_band(std::string_view s) { return lookup(s, kAgeBands); }
std::optional<Label> parse_label(std::string_view s) { return lookup(s, kLabels); }
std::optional<RiskReason> parse_risk_reason(std::string_view s) { return lookup(s, kRiskReasons); }
std::optional<IncidentDimension> parse_incident_dimension(std::string_view s) { return lookup(s, kDimensions); }

// --- incidents --------------------------------------------------------------

namespace {

const std::vector<std::string> kIncidentHeader = {"incident_id", "date", "country", "reason",
                                                  "deaths", "victim_genders", "victim_age_bands", "synthetic"};

}  // namespace

IncidentSet parse_incidents_csv(std::string_view text) {
    auto rows = io::parse_csv(text);
    if (rows.empty()) return {};
    auto header = rows[0].fields;
    // The synthetic flag column is optional.
    bool has_synthetic = header == kIncidentHeader;
    if (!has_synthetic && header != std::vector<std::string>(kIncidentHeader.begin(), kIncidentHeader.end() - 1))
        throw DataError("incident CSV header must be: incident_id,date,country,reason,deaths,victim_genders,"
                        "victim_age_bands[,synthetic]");
    IncidentSet out;
    std::vector<std::string> errors;
    std::unordered_set<std::string> ids;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r].fields;
        auto fail = [&](const std::string& msg) {
            errors.push_back("row at line " + std::to_string(rows[r].line) + ": " + msg);
        };
        if (f.size() != header.size()) {
            fail("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
            continue;
        }
        IncidentRecord rec;
        rec.incident_id = f[0];
        if (rec.incident_id.empty() || !ids.insert(rec.incident_id).second) {
            fail("missing or duplicate incident_id");
            continue;
        }
        auto date = parse_date(f[1]);
        if (!date) {
            fail("malformed date '" + f[1] + "'");
            continue;
        }
        rec.date = *date;
        rec.country = f[2];
        if (rec.country.empty()) {
            fail("empty country");
            continue;
        }
        auto reason = parse_incident_reason(f[3]);
        if (!reason) {
            fail("unknown reason '" + f[3] + "'");
            continue;
        }
        rec.reason = *reason;
        if (!parse_int(f[4], rec.deaths) || rec.deaths < 1) {
            fail("deaths must be a positive integer");
            continue;
        }
        bool ok = true;
        for (const auto& g : io::split(f[5], '|')) {
            auto v = parse_gender(g);
            if (!v) ok = false;
            else rec.victim_genders.push_back(*v);
        }
        for (const auto& a : io::split(f[6], '|')) {
            auto v = parse_age_band(a);
            if (!v) ok = false;
            else rec.victim_age_bands.push_back(*v);
        }
        if (!ok) {
            fail("unknown gender or age band");
            continue;
        }
        if ((!rec.victim_genders.empty() && rec.victim_genders.size() != rec.deaths) ||
            (!rec.victim_age_bands.empty() && rec.victim_age_bands.size() != rec.deaths)) {
            fail("demographics must list exactly one entry per death");
            continue;
        }
        if (has_synthetic) {
            if (f[7] != "true" && f[7] != "false") {
                fail("synthetic must be true or false");
                continue;
            }
            rec.synthetic = f[7] == "true";
        }
        out.push_back(std::move(rec));
    }
    if (!errors.empty()) {
        std::string msg = "incident schema violations:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw DataError(msg);
    }
    return out;
}

IncidentSet load_incidents(const std::string& path) { return parse_incidents_csv(io::read_file(path)); }

std::string incidents_to_csv(const IncidentSet& incidents) {
    std::string out = io::csv_line(kIncidentHeader);
    for (const auto& r : incidents) {
        std::string genders, ages;
        for (std::size_t i = 0; i < r.victim_genders.size(); ++i)
            genders += (i ? "|" : "") + std::string(to_string(r.victim_genders[i]));
        for (std::size_t i = 0; i < r.victim_age_bands.size(); ++i)
            ages += (i ? "|" : "") + std::string(to_string(r.victim_age_bands[i]));
        out += io::csv_line({r.incident_id, format_date(r.date), r.country, std::string(to_string(r.reason)),
                             std::to_string(r.deaths), genders, ages, r.synthetic ? "true" : "false"});
    }
    return out;
}

std::vector<CountRow> incident_breakdown(const IncidentSet& incidents, IncidentDimension dim) {
    std::vector<CountRow> rows;
    switch (dim) {
        case IncidentDimension::Country:
        case IncidentDimension::Reason: {
            std::map<std::string, std::uint64_t> counts;
            for (const auto& r : incidents) {
                auto key = dim == IncidentDimension::Country ? r.country : std::string(to_string(r.reason));
                counts[key] += r.deaths;
            }
            for (auto& [k, v] : counts) rows.push_back({k, v});
            std::stable_sort(rows.begin(), rows.end(),
                             [](const CountRow& a, const CountRow& b) { return a.count > b.count; });
            break;
        }
        case IncidentDimension::GroupSize: {
            std::map<std::uint32_t, std::uint64_t> counts;
            for (const auto& r : incidents)
                if (r.is_group()) ++counts[r.deaths];
            for (auto& [k, v] : counts) rows.push_back({std::to_string(k), v});
            break;
        }
        case IncidentDimension::Gender: {
            std::array<std::uint64_t, 3> counts{};
            for (const auto& r : incidents)
                for (auto g : r.victim_genders) ++counts[static_cast<std::size_t>(g)];
            for (const auto& [g, name] : kGenders)
                if (counts[static_cast<std::size_t>(g)]) rows.push_back({std::string(name), counts[static_cast<std::size_t>(g)]});
            break;
        }
        case IncidentDimension::AgeBand: {
            std::array<std::uint64_t, 5> counts{};
            for (const auto& r : incidents)
                for (auto a : r.victim_age_bands) ++counts[static_cast<std::size_t>(a)];
            for (const auto& [a, name] : kAgeBands)
                if (counts[static_cast<std::size_t>(a)]) rows.push_back({std::string(name), counts[static_cast<std::size_t>(a)]});
            break;
        }
    }
    return rows;
}

std::uint64_t total_deaths(const IncidentSet& incidents) {
    std::uint64_t n = 0;
    for (const auto& r : incidents) n += r.deaths;
    return n;
}

std::size_t individual_incident_count(const IncidentSet& incidents) {
    return static_cast<std::size_t>(
        std::count_if(incidents.begin(), incidents.end(), [](const IncidentRecord& r) { return !r.is_group(); }));
}

std::size_t group_incident_count(const IncidentSet& incidents) {
    return incidents.size() - individual_incident_count(incidents);
}

std::uint64_t incidents_with_reason(const IncidentSet& incidents, IncidentReason reason) {
    return static_cast<std::uint64_t>(std::count_if(incidents.begin(), incidents.end(),
                                                    [&](const IncidentRecord& r) { return r.reason == reason; }));
}

std::uint64_t deaths_with_reason(const IncidentSet& incidents, IncidentReason reason) {
    std::uint64_t n = 0;
    for (const auto& r : incidents)
        if (r.reason == reason) n += r.deaths;
    return n;
}

// --- annotations ------------------------------------------------------------

std::vector<AnnotationRecord> parse_annotations_csv(std::string_view text) {
    auto rows = io::parse_csv(text);
    if (rows.empty()) return {};
    if (rows[0].fields != std::vector<std::string>{"tweet_id", "label", "risk_reasons", "annotator_id"})
        throw DataError("annotation CSV header must be: tweet_id,label,risk_reasons,annotator_id");
    std::vector<AnnotationRecord> out;
    std::vector<std::string> errors;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r].fields;
        auto where = "line " + std::to_string(rows[r].line) + ": ";
        if (f.size() != 4) {
            errors.push_back(where + "expected 4 fields");
            continue;
        }
        AnnotationRecord a;
        a.tweet_id = f[0];
        a.annotator_id = f[3];
        auto label = parse_label(f[1]);
        if (a.tweet_id.empty() || !label) {
            errors.push_back(where + "missing tweet_id or unknown label '" + f[1] + "'");
            continue;
        }
        a.label = *label;
        bool ok = true;
        for (const auto& name : io::split(f[2], '|')) {
            auto reason = parse_risk_reason(name);
            if (!reason) ok = false;
            else a.risk_reasons.insert(*reason);
        }
        if (!ok) {
            errors.push_back(where + "unknown risk reason in '" + f[2] + "'");
            continue;
        }
        if (!a.risk_reasons.empty() && a.label != Label::Dangerous) {
            errors.push_back(where + "risk reasons are only allowed on Dangerous labels");
            continue;
        }
        out.push_back(std::move(a));
    }
    if (!errors.empty()) {
        std::string msg = "annotation schema violations:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw DataError(msg);
    }
    return out;
}

std::vector<AnnotationRecord> load_annotations(const std::string& path) {
    return parse_annotations_csv(io::read_file(path));
}

std::string annotations_to_csv(const std::vector<AnnotationRecord>& records) {
    std::string out = io::csv_line({"tweet_id", "label", "risk_reasons", "annotator_id"});
    for (const auto& a : records) {
        std::string reasons;
        for (auto r : a.risk_reasons) reasons += (reasons.empty() ? "" : "|") + std::string(to_string(r));
        out += io::csv_line({a.tweet_id, std::string(to_string(a.label)), reasons, a.annotator_id});
    }
    return out;
}

std::map<std::string, ResolvedAnnotation> resolve_annotations(const std::vector<AnnotationRecord>& records) {
    std::map<std::string, std::array<std::size_t, 3>> votes;
    for (const auto& a : records) ++votes[a.tweet_id][static_cast<std::size_t>(a.label)];
    std::map<std::string, ResolvedAnnotation> out;
    for (const auto& [id, v] : votes) {
        auto best = std::max_element(v.begin(), v.end());
        bool tie = std::count(v.begin(), v.end(), *best) > 1;
        out[id].label = tie ? Label::Unsure : static_cast<Label>(best - v.begin());
    }
    for (const auto& a : records) {
        auto& res = out[a.tweet_id];
        if (res.label == Label::Dangerous && a.label == Label::Dangerous)
            res.risk_reasons.insert(a.risk_reasons.begin(), a.risk_reasons.end());
    }
    return out;
}

}  // namespace killfie
