#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "labq/dataset.hpp"
#include "labq/metrics.hpp"

namespace labq {

// Hashed n-gram features; indices strictly increasing, L2-normalized.
struct SparseVector {
    std::uint32_t dim = 0;
    std::vector<std::pair<std::uint32_t, double>> entries;

    double dot_dense(std::span<const double> w) const;
};

// Lowercased word uni- to max_order-grams, signed hashing trick into `dim`
// buckets (power of two in [2^10, 2^22]). The seed salts the hash, which is
// what spreads otherwise-deterministic fits across random runs. Empty text
// gives the zero vector.
SparseVector featurize(std::string_view text, std::uint32_t dim, int max_order,
                       std::uint64_t seed);

struct RidgeModel {
    std::vector<double> weights;  // length dim
    double bias = 0.0;
    double lambda = 0.0;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    static RidgeModel from_json(const nlohmann::json& j);
};

void save_model(const RidgeModel& model, const std::filesystem::path& path);
RidgeModel load_model(const std::filesystem::path& path);

// Minimizes (1/N) sum (w.x_i + b - y_i)^2 + lambda * |w|^2. Bias is
// unpenalized and recovered from mean-centering; the centered normal
// equations (X'X + lambda*N*I) w = X'y are solved by conjugate gradient to
// relative residual 1e-8 (cap 1000 iterations) without densifying X.
RidgeModel fit_ridge(std::span<const SparseVector> X, std::span<const double> y,
                     double lambda, std::uint64_t seed);

std::vector<double> predict(const RidgeModel& model,
                            std::span<const SparseVector> X,
                            bool clamp_to_range = false);

// Ridge objective and its analytic gradient, for optimality checks.
double ridge_objective(std::span<const SparseVector> X, std::span<const double> y,
                       const RidgeModel& model);
struct RidgeGradient {
    std::vector<double> w;
    double bias = 0.0;
};
RidgeGradient ridge_gradient(std::span<const SparseVector> X,
                             std::span<const double> y, const RidgeModel& model);

struct TrainConfig {
    std::uint32_t dim = 1u << 16;
    int ngram_order = 2;
    double lambda = 1e-3;
    bool clamp_predictions = false;
};

// Per seed: seed-salted featurization, ridge fit on the chosen label field
// of the train split, evaluation on the test split against crowd labels.
RunAggregate train_eval(const Dataset& train, const Dataset& test,
                        LabelField label_field, const TrainConfig& config,
                        const std::vector<std::uint64_t>& seeds);

// Single-seed variant returning the raw test predictions alongside the report.
struct EvalRun {
    MetricReport report;
    std::vector<std::string> ids;
    std::vector<double> predictions;
};
EvalRun train_eval_single(const Dataset& train, const Dataset& test,
                          LabelField label_field, const TrainConfig& config,
                          std::uint64_t seed);

}  // namespace labq
