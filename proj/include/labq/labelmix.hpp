#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"
#include "labq/dataset.hpp"

namespace labq {

struct RevisionEntry {
    std::string id;
    double crowd_label = 0.0;
    double llm_label = 0.0;
    double revised_label = 0.0;
    std::string source;  // "crowd" | "llm"
};

struct RevisionReport {
    double alpha = 0.0;
    std::vector<RevisionEntry> entries;
    std::size_t replaced_count = 0;
    nlohmann::json to_json() const;
};

// Per train-split sample: take the LLM label when |crowd - llm| > alpha
// (strictly; ties keep the crowd label), the crowd label otherwise. The
// outcome lands in revised_label/label_source; val and test splits pass
// through untouched unless include_val extends the rule to the validation
// split. Requires both labels on every revised sample.
std::pair<Dataset, RevisionReport> revise_labels(const Dataset& train, double alpha,
                                                 bool include_val = false);

struct SweepPoint {
    double alpha = 0.0;
    Dataset dataset;
    RevisionReport report;
};

// One revise_labels per grid point; grid values must lie in [0, 6].
std::vector<SweepPoint> sweep_alpha(const Dataset& train,
                                    const std::vector<double>& grid);

struct ExtensionManifest {
    std::size_t base_count = 0;      // N_train
    std::size_t added_count = 0;     // M
    std::size_t combined_count = 0;  // N_train + M
    struct Provenance {
        std::string id;           // id in the combined dataset
        std::string original_id;  // id in the extra dataset
        std::string source;
        std::string original_split;
    };
    std::vector<Provenance> provenance;
    nlohmann::json to_json() const;
};

// Which splits of the extra dataset enter the base training pool.
enum class MergePolicy { train_and_val, train_only, all };
MergePolicy parse_merge_policy(std::string_view name);

// Appends LLM-labelled extra samples (ids prefixed with their source tag)
// to the base training split. Added samples train on llm_label; base train
// samples keep their existing target (revised_label if set, else crowd).
std::pair<Dataset, ExtensionManifest> extend_training(
    const Dataset& base, const Dataset& extra,
    MergePolicy policy = MergePolicy::train_and_val);

// Uniform subset without replacement, round(fraction * M) samples, emitted
// in original order. Deterministic per seed.
Dataset sample_portion(const Dataset& extra, double fraction, std::uint64_t seed);

}  // namespace labq
