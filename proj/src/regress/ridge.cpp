#include <algorithm>
#include <cmath>
#include <fstream>

#include "labq/errors.hpp"
#include "labq/kernels.hpp"
#include "labq/regress.hpp"

namespace labq {

namespace {

constexpr double kCgTolerance = 1e-8;
constexpr int kCgMaxIterations = 1000;

void check_inputs(std::span<const SparseVector> X, std::span<const double> y,
                  double lambda) {
    if (X.empty() || X.size() != y.size())
        throw ValidationError("fit_ridge: |X| must equal |y| and be >= 1");
    if (lambda < 0.0 || !std::isfinite(lambda))
        throw ValidationError("fit_ridge: lambda must be finite and >= 0");
    for (double v : y)
        if (!std::isfinite(v)) throw ValidationError("fit_ridge: non-finite label");
    const std::uint32_t dim = X.front().dim;
    for (const auto& x : X)
        if (x.dim != dim) throw ValidationError("fit_ridge: mixed feature dims");
}

// u = X_c v and back-projection X_c' u, with X_c = X - 1*mean' applied
// implicitly so sparse rows stay sparse.
struct CenteredDesign {
    std::span<const SparseVector> X;
    std::vector<double> mean;  // column means of X
    double n = 0.0;

    explicit CenteredDesign(std::span<const SparseVector> rows)
        : X(rows), mean(rows.front().dim, 0.0),
          n(static_cast<double>(rows.size())) {
        for (const auto& x : X)
            for (const auto& [idx, v] : x.entries) mean[idx] += v;
        for (double& m : mean) m /= n;
    }

    // out = (X_c' X_c + lambda*n*I) v
    void apply(std::span<const double> v, double lambda,
               std::span<double> out) const {
        const double mean_dot_v = kernels::dot(mean.data(), v.data(), mean.size());
        std::fill(out.begin(), out.end(), 0.0);
        double row_sum = 0.0;
        for (const auto& x : X) {
            double u = x.dot_dense(v) - mean_dot_v;
            row_sum += u;
            for (const auto& [idx, val] : x.entries) out[idx] += u * val;
        }
        kernels::axpy(-row_sum, mean.data(), out.data(), mean.size());
        kernels::axpy(lambda * n, v.data(), out.data(), out.size());
    }
};

}  // namespace

RidgeModel fit_ridge(std::span<const SparseVector> X, std::span<const double> y,
                     double lambda, std::uint64_t seed) {
    check_inputs(X, y, lambda);
    const std::uint32_t dim = X.front().dim;
    const double n = static_cast<double>(X.size());
    const double y_mean = kernels::sum(y) / n;

    CenteredDesign design(X);

    // rhs = X_c' y_c; the mean-correction term vanishes since y_c sums to 0.
    std::vector<double> rhs(dim, 0.0);
    for (std::size_t i = 0; i < X.size(); ++i) {
        double yc = y[i] - y_mean;
        for (const auto& [idx, v] : X[i].entries) rhs[idx] += yc * v;
    }

    RidgeModel model;
    model.weights.assign(dim, 0.0);
    model.lambda = lambda;
    model.seed = seed;

    const double rhs_norm = std::sqrt(kernels::dot(rhs.data(), rhs.data(), dim));
    if (rhs_norm > 0.0) {
        std::vector<double> r = rhs;  // residual, since w starts at 0
        std::vector<double> p = rhs;
        std::vector<double> ap(dim);
        double rr = kernels::dot(r.data(), r.data(), dim);
        const double stop = kCgTolerance * rhs_norm;
        for (int it = 0; it < kCgMaxIterations && std::sqrt(rr) > stop; ++it) {
            design.apply(p, lambda, ap);
            double alpha = rr / kernels::dot(p.data(), ap.data(), dim);
            kernels::axpy(alpha, p.data(), model.weights.data(), dim);
            kernels::axpy(-alpha, ap.data(), r.data(), dim);
            double rr_next = kernels::dot(r.data(), r.data(), dim);
            double beta = rr_next / rr;
            rr = rr_next;
            for (std::uint32_t j = 0; j < dim; ++j) p[j] = r[j] + beta * p[j];
        }
    }

    model.bias = y_mean - kernels::dot(model.weights.data(), design.mean.data(), dim);
    return model;
}

std::vector<double> predict(const RidgeModel& model,
                            std::span<const SparseVector> X,
                            bool clamp_to_range) {
    std::vector<double> out;
    out.reserve(X.size());
    for (const auto& x : X) {
        if (x.dim != model.weights.size())
            throw ValidationError("predict: feature dim " + std::to_string(x.dim) +
                                  " != model dim " +
                                  std::to_string(model.weights.size()));
        double v = x.dot_dense(model.weights) + model.bias;
        if (clamp_to_range) v = std::clamp(v, 1.0, 7.0);
        out.push_back(v);
    }
    return out;
}

double ridge_objective(std::span<const SparseVector> X, std::span<const double> y,
                       const RidgeModel& model) {
    const double n = static_cast<double>(X.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        double d = X[i].dot_dense(model.weights) + model.bias - y[i];
        loss += d * d;
    }
    loss /= n;
    double reg = model.lambda *
                 kernels::dot(model.weights.data(), model.weights.data(),
                              model.weights.size());
    return loss + reg;
}

RidgeGradient ridge_gradient(std::span<const SparseVector> X,
                             std::span<const double> y, const RidgeModel& model) {
    const double n = static_cast<double>(X.size());
    RidgeGradient g;
    g.w.assign(model.weights.size(), 0.0);
    for (std::size_t i = 0; i < X.size(); ++i) {
        double resid = X[i].dot_dense(model.weights) + model.bias - y[i];
        g.bias += 2.0 / n * resid;
        for (const auto& [idx, v] : X[i].entries) g.w[idx] += 2.0 / n * resid * v;
    }
    kernels::axpy(2.0 * model.lambda, model.weights.data(), g.w.data(), g.w.size());
    return g;
}

nlohmann::json RidgeModel::to_json() const {
    return {{"surrogate", true},
            {"dim", weights.size()},
            {"lambda", lambda},
            {"seed", seed},
            {"bias", bias},
            {"weights", weights}};
}

RidgeModel RidgeModel::from_json(const nlohmann::json& j) {
    RidgeModel m;
    m.weights = j.at("weights").get<std::vector<double>>();
    if (j.at("dim").get<std::size_t>() != m.weights.size())
        throw ValidationError("model file: dim does not match weight count");
    m.bias = j.at("bias").get<double>();
    m.lambda = j.at("lambda").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    return m;
}

void save_model(const RidgeModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << model.to_json().dump(2) << '\n';
}

RidgeModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    nlohmann::json j;
    in >> j;
    return RidgeModel::from_json(j);
}

namespace {

struct EvalData {
    std::vector<const Sample*> train;
    std::vector<const Sample*> test;
    std::vector<double> train_labels;
    std::vector<double> test_truth;
};

EvalData collect_eval_data(const Dataset& train, const Dataset& test,
                           LabelField label_field) {
    EvalData data;
    data.train = train.in_split(Split::train);
    data.test = test.in_split(Split::test);
    if (data.train.empty())
        throw ValidationError("train_eval: no train-split samples");
    if (data.test.empty())
        throw ValidationError("train_eval: no test-split samples");

    std::vector<std::string> missing;
    for (const Sample* s : data.train) {
        auto label = label_of(*s, label_field);
        if (!label)
            missing.push_back(s->id);
        else
            data.train_labels.push_back(*label);
    }
    if (!missing.empty())
        throw ValidationError("train_eval: " + std::to_string(missing.size()) +
                              " train samples lack the '" +
                              std::string(label_field_name(label_field)) +
                              "' label, e.g. " + missing.front());

    // Evaluation always runs against the held-out crowd labels.
    for (const Sample* s : data.test) {
        if (!s->crowd_label)
            throw ValidationError("train_eval: test sample '" + s->id +
                                  "' lacks a crowd label");
        data.test_truth.push_back(*s->crowd_label);
    }
    return data;
}

}  // namespace

EvalRun train_eval_single(const Dataset& train, const Dataset& test,
                          LabelField label_field, const TrainConfig& config,
                          std::uint64_t seed) {
    EvalData data = collect_eval_data(train, test, label_field);

    std::vector<SparseVector> x_train;
    x_train.reserve(data.train.size());
    for (const Sample* s : data.train)
        x_train.push_back(featurize(s->essay, config.dim, config.ngram_order, seed));

    RidgeModel model = fit_ridge(x_train, data.train_labels, config.lambda, seed);

    std::vector<SparseVector> x_test;
    x_test.reserve(data.test.size());
    for (const Sample* s : data.test)
        x_test.push_back(featurize(s->essay, config.dim, config.ngram_order, seed));

    EvalRun run;
    run.predictions = predict(model, x_test, config.clamp_predictions);
    run.report = compute_metrics(run.predictions, data.test_truth);
    run.ids.reserve(data.test.size());
    for (const Sample* s : data.test) run.ids.push_back(s->id);
    return run;
}

RunAggregate train_eval(const Dataset& train, const Dataset& test,
                        LabelField label_field, const TrainConfig& config,
                        const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw ValidationError("train_eval: no seeds");
    std::map<std::uint64_t, MetricReport> reports;
    for (std::uint64_t seed : seeds)
        reports[seed] =
            train_eval_single(train, test, label_field, config, seed).report;
    return aggregate_runs(reports);
}

}  // namespace labq
