#include <algorithm>
#include <cmath>
#include <charconv>

#include "killfie/error.hpp"
#include "killfie/io.hpp"
#include "killfie/learn.hpp"

namespace killfie::learn {

FeatureMatrix::FeatureMatrix(std::size_t rows, std::vector<std::string> columns)
    : rows_(rows), columns_(std::move(columns)), data_(rows * columns_.size(), 0.0) {
    std::set<std::string_view> seen;
    for (const auto& c : columns_)
        if (!seen.insert(c).second) throw InvalidArgument("duplicate column name: " + c);
    row_ids.resize(rows);
}

bool FeatureMatrix::missing(std::size_t r, std::size_t c) const { return std::isnan(at(r, c)); }

bool FeatureMatrix::complete() const {
    return std::none_of(data_.begin(), data_.end(), [](double v) { return std::isnan(v); });
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> rows) const {
    FeatureMatrix out(rows.size(), columns_);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= rows_) throw InvalidArgument("row index out of range");
        std::copy_n(row(rows[i]), cols(), out.row(i));
        out.row_ids[i] = row_ids[rows[i]];
    }
    return out;
}

FeatureMatrix FeatureMatrix::select_columns(std::span<const std::size_t> cols) const {
    std::vector<std::string> names;
    for (auto c : cols) {
        if (c >= columns_.size()) throw InvalidArgument("column index out of range");
        names.push_back(columns_[c]);
    }
    FeatureMatrix out(rows_, std::move(names));
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t j = 0; j < cols.size(); ++j) out.at(r, j) = at(r, cols[j]);
    out.row_ids = row_ids;
    return out;
}

std::optional<std::size_t> FeatureMatrix::column_index(std::string_view name) const {
    auto it = std::find(columns_.begin(), columns_.end(), name);
    if (it == columns_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - columns_.begin());
}

std::string FeatureMatrix::to_csv() const {
    std::vector<std::string> header{"id"};
    header.insert(header.end(), columns_.begin(), columns_.end());
    std::string out = io::csv_line(header);
    std::vector<std::string> fields;
    for (std::size_t r = 0; r < rows_; ++r) {
        fields.assign(1, row_ids[r]);
        for (std::size_t c = 0; c < cols(); ++c) fields.push_back(missing(r, c) ? "" : io::format_double(at(r, c)));
        out += io::csv_line(fields);
    }
    return out;
}

FeatureMatrix FeatureMatrix::from_csv(std::string_view text) {
    auto rows = io::parse_csv(text);
    if (rows.empty() || rows[0].fields.empty() || rows[0].fields[0] != "id")
        throw DataError("feature CSV must start with an `id` column");
    std::vector<std::string> names(rows[0].fields.begin() + 1, rows[0].fields.end());
    FeatureMatrix X(rows.size() - 1, names);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r].fields;
        if (f.size() != names.size() + 1)
            throw DataError("feature CSV line " + std::to_string(rows[r].line) + ": expected " +
                            std::to_string(names.size() + 1) + " fields");
        X.row_ids[r - 1] = f[0];
        for (std::size_t c = 0; c < names.size(); ++c) {
            const std::string& cell = f[c + 1];
            if (cell.empty()) {
                X.at(r - 1, c) = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            double v = 0;
            auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || p != cell.data() + cell.size())
                throw DataError("feature CSV line " + std::to_string(rows[r].line) + ": bad number '" + cell + "'");
            X.at(r - 1, c) = v;
        }
    }
    return X;
}

void Audit::record(std::string_view stage, std::span<const std::string> row_ids) {
    auto& s = touched_[{fold_, std::string(stage)}];
    s.insert(row_ids.begin(), row_ids.end());
}

const std::set<std::string>& Audit::touched(int fold, std::string_view stage) const {
    static const std::set<std::string> empty;
    auto it = touched_.find({fold, std::string(stage)});
    return it == touched_.end() ? empty : it->second;
}

std::set<std::string> Audit::stages() const {
    std::set<std::string> out;
    for (const auto& [key, _] : touched_) out.insert(key.second);
    return out;
}

BlockSet::BlockSet(std::initializer_list<Block> blocks) {
    for (auto b : blocks) bits_ |= static_cast<unsigned>(b);
    if (bits_ == 0) throw InvalidArgument("feature configuration needs at least one block");
}

BlockSet BlockSet::from_bits(unsigned bits) {
    if (bits == 0 || bits > 7) throw InvalidArgument("feature configuration needs at least one block");
    BlockSet s;
    s.bits_ = bits;
    return s;
}

BlockSet BlockSet::parse(std::string_view comma_list) {
    unsigned bits = 0;
    for (const auto& part : io::split(comma_list, ',')) {
        if (part == "text") bits |= static_cast<unsigned>(Block::Text);
        else if (part == "image") bits |= static_cast<unsigned>(Block::Image);
        else if (part == "location") bits |= static_cast<unsigned>(Block::Location);
        else if (!part.empty()) throw InvalidArgument("unknown feature block '" + part + "'");
    }
    return from_bits(bits);
}

std::string BlockSet::name() const {
    std::vector<std::string> parts;
    if (has(Block::Text)) parts.push_back("Text");
    if (has(Block::Image)) parts.push_back("Image");
    if (has(Block::Location)) parts.push_back("Location");
    if (parts.size() == 1) return parts[0] + " Only";
    std::string out;
    for (const auto& p : parts) out += (out.empty() ? "" : " + ") + p;
    return out;
}

std::string BlockSet::short_name() const {
    std::string out;
    auto add = [&](const char* s) { out += (out.empty() ? "" : ",") + std::string(s); };
    if (has(Block::Text)) add("text");
    if (has(Block::Image)) add("image");
    if (has(Block::Location)) add("location");
    return out;
}

std::vector<BlockSet> all_feature_configs() {
    return {BlockSet{Block::Image},
            BlockSet{Block::Text},
            BlockSet{Block::Location},
            BlockSet{Block::Image, Block::Location},
            BlockSet{Block::Text, Block::Location},
            BlockSet{Block::Text, Block::Image},
            BlockSet{Block::Text, Block::Image, Block::Location}};
}

std::string_view block_of_column(std::string_view column) {
    if (column.starts_with("text:")) return "text";
    if (column.starts_with("image:")) return "image";
    return "location";
}

std::vector<std::size_t> feature_config(const FeatureMatrix& X, const BlockSet& blocks) {
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < X.cols(); ++c) {
        auto b = block_of_column(X.columns()[c]);
        if ((b == "text" && blocks.has(Block::Text)) || (b == "image" && blocks.has(Block::Image)) ||
            (b == "location" && blocks.has(Block::Location)))
            out.push_back(c);
    }
    return out;
}

}  // namespace killfie::learn
