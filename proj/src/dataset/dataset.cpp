#include "labq/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "labq/errors.hpp"
#include "labq/strings.hpp"
#include "labq/table_io.hpp"

namespace labq {

namespace {

constexpr double kLabelLo = 1.0;
constexpr double kLabelHi = 7.0;

bool in_label_range(double v) { return v >= kLabelLo && v <= kLabelHi; }

std::string join(const std::vector<std::string>& parts, const char* sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

}  // namespace

std::string_view split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

std::optional<Split> parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    return std::nullopt;
}

LabelField parse_label_field(std::string_view name) {
    if (name == "crowd") return LabelField::crowd;
    if (name == "llm") return LabelField::llm;
    if (name == "revised") return LabelField::revised;
    throw ValidationError("unknown label field '" + std::string(name) +
                          "' (expected crowd, llm or revised)");
}

std::string_view label_field_name(LabelField f) {
    switch (f) {
        case LabelField::crowd: return "crowd";
        case LabelField::llm: return "llm";
        case LabelField::revised: return "revised";
    }
    return "crowd";
}

std::optional<double> label_of(const Sample& s, LabelField f) {
    switch (f) {
        case LabelField::crowd: return s.crowd_label;
        case LabelField::llm: return s.llm_label;
        case LabelField::revised: return s.revised_label;
    }
    return std::nullopt;
}

void Dataset::validate() const {
    std::unordered_set<std::string_view> seen;
    seen.reserve(samples.size());
    std::vector<std::string> problems;
    for (const auto& s : samples) {
        if (!seen.insert(s.id).second)
            problems.push_back("duplicate id '" + s.id + "'");
        for (auto label : {s.crowd_label, s.llm_label, s.revised_label})
            if (label && !in_label_range(*label))
                problems.push_back("sample '" + s.id + "' label " +
                                   fmt_double(*label) + " outside [1,7]");
    }
    if (!problems.empty())
        throw ValidationError("dataset '" + name + "': " + join(problems, "; "));
}

std::vector<const Sample*> Dataset::in_split(Split s) const {
    std::vector<const Sample*> out;
    for (const auto& sample : samples)
        if (sample.split == s) out.push_back(&sample);
    return out;
}

std::size_t Dataset::count_in_split(Split s) const {
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(),
                      [s](const Sample& x) { return x.split == s; }));
}

ColumnMapping ColumnMapping::canonical() {
    ColumnMapping m;
    m.id = "id";
    m.essay = "essay";
    m.crowd_label = "crowd_label";
    m.llm_label = "llm_label";
    m.revised_label = "revised_label";
    m.label_source = "label_source";
    m.latent_truth = "latent_truth";
    m.split = "split";
    m.source_column = "source";
    return m;
}

ColumnMapping ColumnMapping::from_json(const nlohmann::json& j) {
    ColumnMapping m;
    m.essay.clear();
    auto get = [&j](const char* key) -> std::string {
        return j.contains(key) ? j.at(key).get<std::string>() : std::string{};
    };
    m.id = get("id");
    m.essay = get("essay");
    m.crowd_label = get("crowd_label");
    m.llm_label = get("llm_label");
    m.revised_label = get("revised_label");
    m.label_source = get("label_source");
    m.latent_truth = get("latent_truth");
    m.split = get("split");
    m.source_column = get("source_column");
    m.source_tag = get("source");
    if (j.contains("default_split")) {
        auto s = parse_split(j.at("default_split").get<std::string>());
        if (!s)
            throw SchemaError("mapping: bad default_split '" +
                              j.at("default_split").get<std::string>() + "'");
        m.default_split = *s;
    }
    if (j.contains("demographics"))
        for (const auto& [field, column] : j.at("demographics").items())
            m.demographics[field] = column.get<std::string>();
    if (m.essay.empty()) throw SchemaError("mapping: 'essay' column is required");
    return m;
}

ColumnMapping ColumnMapping::from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mapping " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("mapping " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

namespace {

class RowReader {
public:
    RowReader(const Table& table, const ColumnMapping& mapping,
              const std::string& file) {
        for (std::size_t i = 0; i < table.header.size(); ++i)
            index_.emplace(table.header[i], i);
        auto require = [&](const std::string& column, const char* role) {
            if (column.empty()) return -1;
            auto it = index_.find(column);
            if (it == index_.end())
                throw SchemaError(file + ": mapped column '" + column + "' (" +
                                  role + ") not in header");
            return static_cast<int>(it->second);
        };
        id_ = require(mapping.id, "id");
        essay_ = require(mapping.essay, "essay");
        crowd_ = require(mapping.crowd_label, "crowd_label");
        llm_ = require(mapping.llm_label, "llm_label");
        revised_ = require(mapping.revised_label, "revised_label");
        label_source_ = require(mapping.label_source, "label_source");
        latent_ = require(mapping.latent_truth, "latent_truth");
        split_ = require(mapping.split, "split");
        source_ = require(mapping.source_column, "source");
        for (const auto& [field, column] : mapping.demographics)
            demo_.emplace_back(field, require(column, "demographic"));
        if (essay_ < 0) throw SchemaError(file + ": essay column unmapped");
    }

    int id_ = -1, essay_ = -1, crowd_ = -1, llm_ = -1, revised_ = -1,
        label_source_ = -1, latent_ = -1, split_ = -1, source_ = -1;
    std::vector<std::pair<std::string, int>> demo_;

    const std::string* cell(const std::vector<std::string>& row, int col) const {
        if (col < 0) return nullptr;
        const std::string& v = row[static_cast<std::size_t>(col)];
        return v.empty() ? nullptr : &v;
    }

private:
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace

Dataset load_dataset(const std::filesystem::path& path, const ColumnMapping& mapping) {
    Table table = read_delimited(path);
    RowReader cols(table, mapping, path.string());

    Dataset out;
    out.name = mapping.source_tag.empty() ? path.stem().string() : mapping.source_tag;
    out.samples.reserve(table.rows.size());

    std::vector<std::string> errors;
    auto row_error = [&errors](std::size_t row, const std::string& what) {
        errors.push_back("row " + std::to_string(row + 1) + ": " + what);
    };

    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        Sample s;

        if (const auto* v = cols.cell(row, cols.source_))
            s.source = *v;
        else
            s.source = mapping.source_tag.empty() ? out.name : mapping.source_tag;

        if (const auto* v = cols.cell(row, cols.id_))
            s.id = *v;
        else
            s.id = s.source + ":" + std::to_string(r);

        if (const auto* v = cols.cell(row, cols.essay_); v && !trim(*v).empty())
            s.essay = *v;
        else
            row_error(r, "empty essay");

        auto read_label = [&](int col, const char* role) -> std::optional<double> {
            const auto* v = cols.cell(row, col);
            if (!v) return std::nullopt;
            auto parsed = parse_strict_double(*v);
            if (!parsed) {
                row_error(r, std::string(role) + " '" + *v + "' is not numeric");
                return std::nullopt;
            }
            if (!in_label_range(*parsed)) {
                row_error(r, std::string(role) + " " + fmt_double(*parsed) +
                                 " outside [1,7]");
                return std::nullopt;
            }
            return parsed;
        };
        s.crowd_label = read_label(cols.crowd_, "crowd_label");
        s.llm_label = read_label(cols.llm_, "llm_label");
        s.revised_label = read_label(cols.revised_, "revised_label");

        if (const auto* v = cols.cell(row, cols.label_source_)) s.label_source = *v;

        if (const auto* v = cols.cell(row, cols.latent_)) {
            auto parsed = parse_strict_double(*v);
            if (!parsed)
                row_error(r, "latent_truth '" + *v + "' is not numeric");
            else
                s.latent_truth = parsed;
        }

        if (const auto* v = cols.cell(row, cols.split_)) {
            auto sp = parse_split(*v);
            if (!sp)
                row_error(r, "split '" + *v + "' not one of train/val/test");
            else
                s.split = *sp;
        } else {
            s.split = mapping.default_split;
        }

        for (const auto& [field, col] : cols.demo_)
            if (const auto* v = cols.cell(row, col)) s.demographics[field] = *v;

        out.samples.push_back(std::move(s));
    }

    if (!errors.empty())
        throw ValidationError(path.string() + ": " + join(errors, "; "));
    out.validate();
    return out;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    bool any_crowd = false, any_llm = false, any_revised = false,
         any_source_tag = false, any_latent = false;
    std::set<std::string> demo_fields;
    for (const auto& s : dataset.samples) {
        any_crowd |= s.crowd_label.has_value();
        any_llm |= s.llm_label.has_value();
        any_revised |= s.revised_label.has_value();
        any_source_tag |= s.label_source.has_value();
        any_latent |= s.latent_truth.has_value();
        for (const auto& [field, _] : s.demographics) demo_fields.insert(field);
    }

    Table table;
    table.header = {"id", "essay"};
    if (any_crowd) table.header.push_back("crowd_label");
    if (any_llm) table.header.push_back("llm_label");
    if (any_revised) table.header.push_back("revised_label");
    if (any_source_tag) table.header.push_back("label_source");
    table.header.push_back("split");
    table.header.push_back("source");
    if (any_latent) table.header.push_back("latent_truth");
    for (const auto& field : demo_fields) table.header.push_back("demo_" + field);

    auto opt_num = [](const std::optional<double>& v) {
        return v ? fmt_double(*v) : std::string{};
    };

    for (const auto& s : dataset.samples) {
        std::vector<std::string> row{s.id, s.essay};
        if (any_crowd) row.push_back(opt_num(s.crowd_label));
        if (any_llm) row.push_back(opt_num(s.llm_label));
        if (any_revised) row.push_back(opt_num(s.revised_label));
        if (any_source_tag) row.push_back(s.label_source.value_or(""));
        row.emplace_back(split_name(s.split));
        row.push_back(s.source);
        if (any_latent) row.push_back(opt_num(s.latent_truth));
        for (const auto& field : demo_fields) {
            auto it = s.demographics.find(field);
            row.push_back(it == s.demographics.end() ? std::string{} : it->second);
        }
        table.rows.push_back(std::move(row));
    }
    write_tsv(path, table);
}

Dataset load_canonical(const std::filesystem::path& path) {
    Table table = read_delimited(path);
    ColumnMapping mapping = ColumnMapping::canonical();
    // Optional canonical columns may be absent; demo_* columns are discovered.
    auto present = [&table](const std::string& name) {
        return std::find(table.header.begin(), table.header.end(), name) !=
               table.header.end();
    };
    if (!present("crowd_label")) mapping.crowd_label.clear();
    if (!present("llm_label")) mapping.llm_label.clear();
    if (!present("revised_label")) mapping.revised_label.clear();
    if (!present("label_source")) mapping.label_source.clear();
    if (!present("latent_truth")) mapping.latent_truth.clear();
    if (!present("split")) mapping.split.clear();
    if (!present("source")) mapping.source_column.clear();
    for (const auto& column : table.header)
        if (column.rfind("demo_", 0) == 0)
            mapping.demographics[column.substr(5)] = column;
    return load_dataset(path, mapping);
}

OverlapReport detect_overlap(const Dataset& a, const Dataset& b, NormPolicy norm) {
    auto key_of = [norm](const std::string& essay) {
        return norm == NormPolicy::exact ? essay : normalize_text(essay);
    };

    std::unordered_map<std::string, std::vector<const Sample*>> by_key;
    by_key.reserve(a.samples.size());
    for (const auto& s : a.samples) by_key[key_of(s.essay)].push_back(&s);

    OverlapReport report;
    for (const auto& sb : b.samples) {
        auto it = by_key.find(key_of(sb.essay));
        if (it == by_key.end()) continue;
        for (const Sample* sa : it->second) {
            OverlapPair pair;
            pair.id_a = sa->id;
            pair.id_b = sb.id;
            pair.kind = (sa->essay == sb.essay) ? "exact" : "normalized";
            report.pairs.push_back(std::move(pair));
            std::string bucket = std::string(split_name(sa->split)) + "->" +
                                 std::string(split_name(sb.split));
            ++report.counts[bucket];
        }
    }
    std::sort(report.pairs.begin(), report.pairs.end(),
              [](const OverlapPair& x, const OverlapPair& y) {
                  return std::tie(x.id_a, x.id_b) < std::tie(y.id_a, y.id_b);
              });
    return report;
}

nlohmann::json OverlapReport::to_json() const {
    nlohmann::json pairs_json = nlohmann::json::array();
    for (const auto& p : pairs)
        pairs_json.push_back({{"id_a", p.id_a}, {"id_b", p.id_b}, {"kind", p.kind}});
    nlohmann::json counts_json = nlohmann::json::object();
    for (const auto& [bucket, n] : counts) counts_json[bucket] = n;
    return {{"pairs", pairs_json},
            {"counts", counts_json},
            {"total", pairs.size()}};
}

LeakageResult assert_no_leakage(const Dataset& train, const Dataset& test) {
    Dataset pool{train.name + ":train+val", {}};
    for (const auto& s : train.samples)
        if (s.split != Split::test) pool.samples.push_back(s);
    Dataset held_out{test.name + ":test", {}};
    for (const auto& s : test.samples)
        if (s.split == Split::test) held_out.samples.push_back(s);

    OverlapReport report = detect_overlap(pool, held_out, NormPolicy::normalized);
    return LeakageResult{report.empty(), std::move(report)};
}

GroupCounts demographic_profile(const Dataset& dataset, std::string_view field) {
    GroupCounts counts;
    std::set<std::string> available;
    for (const auto& s : dataset.samples) {
        for (const auto& [name, _] : s.demographics) available.insert(name);
        auto it = s.demographics.find(std::string(field));
        if (it != s.demographics.end()) ++counts[it->second];
    }
    if (counts.empty()) {
        std::vector<std::string> names(available.begin(), available.end());
        throw ValidationError("demographic field '" + std::string(field) +
                              "' not present; available: " +
                              (names.empty() ? "(none)" : join(names, ", ")));
    }
    return counts;
}

}  // namespace labq
