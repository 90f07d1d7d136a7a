#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace labq {

enum class Split { train, val, test };

std::string_view split_name(Split s);
std::optional<Split> parse_split(std::string_view s);

struct Sample {
    std::string id;
    std::string essay;
    std::optional<double> crowd_label;    // noisy crowdsourced score
    std::optional<double> llm_label;      // model-annotated score
    std::optional<double> revised_label;  // effective training target after mixing
    std::optional<std::string> label_source;  // "crowd" | "llm"
    std::optional<double> latent_truth;       // synthetic corpora only
    std::map<std::string, std::string> demographics;
    Split split = Split::train;
    std::string source;
};

struct Dataset {
    std::string name;
    std::vector<Sample> samples;

    // Throws ValidationError on duplicate ids or out-of-range labels.
    void validate() const;
    std::vector<const Sample*> in_split(Split s) const;
    std::size_t count_in_split(Split s) const;
};

// Which per-sample value feeds training or evaluation.
enum class LabelField { crowd, llm, revised };
LabelField parse_label_field(std::string_view name);
std::string_view label_field_name(LabelField f);
std::optional<double> label_of(const Sample& s, LabelField f);

// Maps canonical field names onto the columns of a concrete release. The
// NewsEmp files rename columns across years, so the mapping travels as a
// sidecar JSON file next to the data.
struct ColumnMapping {
    std::string id;             // empty: ids synthesized as "<source>:<row>"
    std::string essay = "essay";
    std::string crowd_label;
    std::string llm_label;
    std::string revised_label;
    std::string label_source;
    std::string latent_truth;
    std::string split;          // empty: every row gets default_split
    Split default_split = Split::train;
    std::string source_column;  // per-row source tag, if the file carries one
    std::string source_tag;     // constant fallback, also the id prefix
    std::map<std::string, std::string> demographics;

    static ColumnMapping canonical();
    static ColumnMapping from_json(const nlohmann::json& j);
    static ColumnMapping from_json_file(const std::filesystem::path& path);
};

Dataset load_dataset(const std::filesystem::path& path, const ColumnMapping& mapping);

// Canonical on-disk form: TSV, fixed columns + demo_<field> columns,
// doubles printed in shortest round-trip form.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_canonical(const std::filesystem::path& path);

enum class NormPolicy { exact, normalized };

struct OverlapPair {
    std::string id_a;
    std::string id_b;
    std::string kind;  // "exact" | "normalized"
};

struct OverlapReport {
    std::vector<OverlapPair> pairs;
    std::map<std::string, std::size_t> counts;  // "<split_a>-><split_b>" -> n
    bool empty() const { return pairs.empty(); }
    nlohmann::json to_json() const;
};

// Every cross-dataset pair of samples whose essays match under the policy.
OverlapReport detect_overlap(const Dataset& a, const Dataset& b, NormPolicy norm);

struct LeakageResult {
    bool ok;
    OverlapReport report;
};

// train/val pool of `train` against the test split of `test`, normalized
// matching. ok == false iff any pair was found.
LeakageResult assert_no_leakage(const Dataset& train, const Dataset& test);

using GroupCounts = std::map<std::string, std::size_t>;

// Category -> count for one demographic field; throws if no sample carries it.
GroupCounts demographic_profile(const Dataset& dataset, std::string_view field);

}  // namespace labq
