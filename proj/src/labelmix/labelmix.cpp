#include "labq/labelmix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "labq/errors.hpp"
#include "labq/rng.hpp"
#include "labq/strings.hpp"

namespace labq {

std::pair<Dataset, RevisionReport> revise_labels(const Dataset& train, double alpha,
                                                 bool include_val) {
    if (alpha < 0.0 || !std::isfinite(alpha))
        throw ValidationError("revise_labels: alpha must be finite and >= 0");

    auto in_scope = [include_val](const Sample& s) {
        return s.split == Split::train || (include_val && s.split == Split::val);
    };

    std::vector<std::string> missing;
    for (const auto& s : train.samples)
        if (in_scope(s) && (!s.crowd_label || !s.llm_label))
            missing.push_back(s.id);
    if (!missing.empty()) {
        std::string ids;
        for (std::size_t i = 0; i < missing.size(); ++i)
            ids += (i ? ", " : "") + missing[i];
        throw ValidationError(
            "revise_labels: train samples missing crowd/llm label: " + ids);
    }

    Dataset out = train;
    RevisionReport report;
    report.alpha = alpha;
    for (auto& s : out.samples) {
        if (!in_scope(s)) continue;
        RevisionEntry entry;
        entry.id = s.id;
        entry.crowd_label = *s.crowd_label;
        entry.llm_label = *s.llm_label;
        if (std::fabs(entry.crowd_label - entry.llm_label) > alpha) {
            entry.revised_label = entry.llm_label;
            entry.source = "llm";
            ++report.replaced_count;
        } else {
            entry.revised_label = entry.crowd_label;
            entry.source = "crowd";
        }
        s.revised_label = entry.revised_label;
        s.label_source = entry.source;
        report.entries.push_back(std::move(entry));
    }
    return {std::move(out), std::move(report)};
}

std::vector<SweepPoint> sweep_alpha(const Dataset& train,
                                    const std::vector<double>& grid) {
    if (grid.empty()) throw ValidationError("sweep_alpha: empty grid");
    for (double a : grid)
        if (a < 0.0 || a > 6.0)
            throw ValidationError("sweep_alpha: alpha " + fmt_double(a) +
                                  " outside [0, 6]");
    std::vector<SweepPoint> out;
    out.reserve(grid.size());
    for (double a : grid) {
        auto [revised, report] = revise_labels(train, a);
        out.push_back({a, std::move(revised), std::move(report)});
    }
    return out;
}

nlohmann::json RevisionReport::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& e : entries)
        rows.push_back({{"id", e.id},
                        {"crowd_label", e.crowd_label},
                        {"llm_label", e.llm_label},
                        {"revised_label", e.revised_label},
                        {"source", e.source}});
    return {{"alpha", alpha},
            {"replaced_count", replaced_count},
            {"total", entries.size()},
            {"entries", rows}};
}

MergePolicy parse_merge_policy(std::string_view name) {
    if (name == "train_and_val" || name == "train+val") return MergePolicy::train_and_val;
    if (name == "train_only" || name == "train") return MergePolicy::train_only;
    if (name == "all") return MergePolicy::all;
    throw ValidationError("unknown merge policy '" + std::string(name) + "'");
}

std::pair<Dataset, ExtensionManifest> extend_training(const Dataset& base,
                                                      const Dataset& extra,
                                                      MergePolicy policy) {
    auto admits = [policy](Split s) {
        switch (policy) {
            case MergePolicy::train_and_val: return s != Split::test;
            case MergePolicy::train_only: return s == Split::train;
            case MergePolicy::all: return true;
        }
        return false;
    };

    std::vector<std::string> unlabelled;
    for (const auto& s : extra.samples)
        if (admits(s.split) && !s.llm_label) unlabelled.push_back(s.id);
    if (!unlabelled.empty()) {
        std::string ids;
        for (std::size_t i = 0; i < unlabelled.size(); ++i)
            ids += (i ? ", " : "") + unlabelled[i];
        throw ValidationError("extend_training: extra samples missing llm_label: " +
                              ids);
    }

    Dataset out = base;
    out.name = base.name + "+" + extra.name;
    ExtensionManifest manifest;
    manifest.base_count = base.count_in_split(Split::train);

    for (auto& s : out.samples) {
        if (s.split != Split::train) continue;
        if (!s.revised_label) {
            s.revised_label = s.crowd_label;
            if (s.crowd_label) s.label_source = "crowd";
        }
    }

    for (const auto& s : extra.samples) {
        if (!admits(s.split)) continue;
        Sample added = s;
        std::string prefix = s.source.empty() ? std::string("extra") : s.source;
        added.id = prefix + ":" + s.id;
        added.split = Split::train;
        added.revised_label = s.llm_label;
        added.label_source = "llm";
        manifest.provenance.push_back({added.id, s.id, added.source,
                                       std::string(split_name(s.split))});
        out.samples.push_back(std::move(added));
        ++manifest.added_count;
    }
    manifest.combined_count = manifest.base_count + manifest.added_count;
    out.validate();  // id collisions after prefixing would surface here
    return {std::move(out), std::move(manifest)};
}

nlohmann::json ExtensionManifest::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& p : provenance)
        rows.push_back({{"id", p.id},
                        {"original_id", p.original_id},
                        {"source", p.source},
                        {"original_split", p.original_split}});
    return {{"base_count", base_count},
            {"added_count", added_count},
            {"combined_count", combined_count},
            {"provenance", rows}};
}

Dataset sample_portion(const Dataset& extra, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0) || fraction > 1.0)
        throw ValidationError("sample_portion: fraction must be in (0, 1]");
    const std::size_t m = extra.samples.size();
    const auto k = static_cast<std::size_t>(
        std::lround(fraction * static_cast<double>(m)));

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    order.resize(std::min(k, m));
    std::sort(order.begin(), order.end());

    Dataset out;
    out.name = extra.name;
    out.samples.reserve(order.size());
    for (std::size_t idx : order) out.samples.push_back(extra.samples[idx]);
    return out;
}

}  // namespace labq
