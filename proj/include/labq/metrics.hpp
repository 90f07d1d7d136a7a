#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace labq {

struct MetricReport {
    double pcc = 0.0;
    double ccc = 0.0;
    double rmse = 0.0;
    std::size_t n = 0;
    nlohmann::json to_json() const;
    static MetricReport from_json(const nlohmann::json& j);
};

// Pearson correlation. Throws ValidationError when either vector is
// constant (correlation undefined) or lengths mismatch / n < 2.
double pcc(std::span<const double> pred, std::span<const double> truth);

// Lin's concordance, 2*cov / (var_x + var_y + (mean_x - mean_y)^2), with
// population (1/N) moments throughout -- Lin's original definition. The
// estimator choice matters: with sample (1/(N-1)) moments the [1,2,3] vs
// [5,6,7] case would give 3/40 instead of 1/13. Throws only on the 0/0
// case (both vectors constant with equal means).
double ccc(std::span<const double> pred, std::span<const double> truth);

double rmse(std::span<const double> pred, std::span<const double> truth);

struct MaeSd {
    double mae = 0.0;
    double sd = 0.0;  // sample SD (N-1) of the absolute errors; 0 when n < 2
};
MaeSd mae_sd(std::span<const double> a, std::span<const double> b);

// pcc + ccc + rmse over one prediction set.
MetricReport compute_metrics(std::span<const double> pred,
                             std::span<const double> truth);

// Interval-distance alpha over a units x raters matrix, missing entries
// allowed. Coincidence-matrix formulation; delta^2(a,b) = (a-b)^2.
double krippendorff_alpha_interval(
    const std::vector<std::vector<std::optional<double>>>& ratings);

struct ReliabilityReport {
    double krippendorff_alpha = 0.0;
    double mae = 0.0;
    double sd = 0.0;
    nlohmann::json to_json() const;
};

// Two raters scoring the same units.
ReliabilityReport reliability(std::span<const double> rater_a,
                              std::span<const double> rater_b);

// Mean silhouette (Euclidean) after discretising labels in [1,7] into the
// six unit bins [1,2), [2,3), ..., [6,7]. Singleton-bin points and 0/0
// ratios score 0. Throws when all samples land in one bin.
double silhouette_binned(const std::vector<std::vector<double>>& embeddings,
                         std::span<const double> labels);

int label_bin(double label);  // 1..6

struct GroupEntry {
    std::size_t n = 0;
    // Absent when the category has n < 2 or constant vectors.
    std::optional<MetricReport> metrics;
};

std::map<std::string, GroupEntry> group_metrics(
    std::span<const double> pred, std::span<const double> truth,
    const std::vector<std::string>& groups);

struct RunAggregate {
    std::map<std::uint64_t, MetricReport> per_seed;
    MetricReport median;
    MetricReport peak;  // max PCC/CCC, min RMSE
    nlohmann::json to_json() const;
    static RunAggregate from_json(const nlohmann::json& j);
};

RunAggregate aggregate_runs(const std::map<std::uint64_t, MetricReport>& reports);

struct SignificanceResult {
    double u = 0.0;  // Mann-Whitney U of the first list
    double p_value = 1.0;
    std::string stars;
};

// Two-sided Mann-Whitney U; exact enumeration when both sides have <= 8
// values, normal approximation with tie correction above that.
SignificanceResult significance_stars(std::span<const double> runs_a,
                                      std::span<const double> runs_b);

std::string stars_for_p(double p);

// Header-less delimited file: first column sample id, rest the vector.
std::map<std::string, std::vector<double>> load_embeddings(
    const std::filesystem::path& path);

}  // namespace labq
