#include "labq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "labq/errors.hpp"
#include "labq/kernels.hpp"
#include "labq/strings.hpp"
#include "labq/table_io.hpp"

namespace labq {

namespace {

void require_pair(std::span<const double> a, std::span<const double> b,
                  std::size_t min_n, const char* who) {
    if (a.size() != b.size())
        throw ValidationError(std::string(who) + ": length mismatch (" +
                              std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()) + ")");
    if (a.size() < min_n)
        throw ValidationError(std::string(who) + ": needs at least " +
                              std::to_string(min_n) + " values");
}

bool is_constant(std::span<const double> x) {
    return std::all_of(x.begin(), x.end(),
                       [&x](double v) { return v == x.front(); });
}

struct Moments {
    double mean_x, mean_y;
    double var_x, var_y;  // population, 1/N
    double cov;
};

Moments moments(std::span<const double> x, std::span<const double> y) {
    const auto n = static_cast<double>(x.size());
    Moments m{};
    m.mean_x = kernels::sum(x) / n;
    m.mean_y = kernels::sum(y) / n;
    std::vector<double> cx(x.begin(), x.end());
    std::vector<double> cy(y.begin(), y.end());
    for (double& v : cx) v -= m.mean_x;
    for (double& v : cy) v -= m.mean_y;
    m.var_x = kernels::dot(cx, cx) / n;
    m.var_y = kernels::dot(cy, cy) / n;
    m.cov = kernels::dot(cx, cy) / n;
    return m;
}

}  // namespace

double pcc(std::span<const double> pred, std::span<const double> truth) {
    require_pair(pred, truth, 2, "pcc");
    if (is_constant(pred) || is_constant(truth))
        throw ValidationError("pcc: undefined for constant input");
    Moments m = moments(pred, truth);
    return m.cov / std::sqrt(m.var_x * m.var_y);
}

double ccc(std::span<const double> pred, std::span<const double> truth) {
    require_pair(pred, truth, 2, "ccc");
    if (is_constant(pred) && is_constant(truth) && pred.front() == truth.front())
        throw ValidationError("ccc: 0/0 for identical constant vectors");
    Moments m = moments(pred, truth);
    double gap = m.mean_x - m.mean_y;
    return 2.0 * m.cov / (m.var_x + m.var_y + gap * gap);
}

double rmse(std::span<const double> pred, std::span<const double> truth) {
    require_pair(pred, truth, 1, "rmse");
    return std::sqrt(kernels::sum_sq_diff(pred, truth) /
                     static_cast<double>(pred.size()));
}

MaeSd mae_sd(std::span<const double> a, std::span<const double> b) {
    require_pair(a, b, 1, "mae_sd");
    const auto n = a.size();
    MaeSd out;
    out.mae = kernels::sum_abs_diff(a, b) / static_cast<double>(n);
    if (n >= 2) {
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double d = std::fabs(a[i] - b[i]) - out.mae;
            ss += d * d;
        }
        out.sd = std::sqrt(ss / static_cast<double>(n - 1));
    }
    return out;
}

MetricReport compute_metrics(std::span<const double> pred,
                             std::span<const double> truth) {
    MetricReport r;
    r.pcc = pcc(pred, truth);
    r.ccc = ccc(pred, truth);
    r.rmse = rmse(pred, truth);
    r.n = pred.size();
    return r;
}

nlohmann::json MetricReport::to_json() const {
    return {{"pcc", pcc}, {"ccc", ccc}, {"rmse", rmse}, {"n", n}};
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
    MetricReport r;
    r.pcc = j.at("pcc").get<double>();
    r.ccc = j.at("ccc").get<double>();
    r.rmse = j.at("rmse").get<double>();
    r.n = j.at("n").get<std::size_t>();
    return r;
}

double krippendorff_alpha_interval(
    const std::vector<std::vector<std::optional<double>>>& ratings) {
    // Values from units with >= 2 ratings are pairable; each ordered pair
    // within a unit contributes 1/(m_u - 1) to the coincidence matrix.
    std::vector<std::vector<double>> units;
    for (const auto& row : ratings) {
        std::vector<double> vals;
        for (const auto& v : row)
            if (v) vals.push_back(*v);
        if (vals.size() >= 2) units.push_back(std::move(vals));
    }
    if (units.size() < 2)
        throw ValidationError(
            "krippendorff_alpha_interval: needs at least two units with >= 2 "
            "ratings");

    std::map<double, std::size_t> value_index;
    for (const auto& unit : units)
        for (double v : unit) value_index.emplace(v, 0);
    std::size_t k = 0;
    for (auto& [v, idx] : value_index) idx = k++;
    std::vector<double> values(k);
    for (const auto& [v, idx] : value_index) values[idx] = v;

    std::vector<std::vector<double>> coincidence(k, std::vector<double>(k, 0.0));
    double n_pairable = 0.0;
    for (const auto& unit : units) {
        const double w = 1.0 / static_cast<double>(unit.size() - 1);
        n_pairable += static_cast<double>(unit.size());
        for (std::size_t i = 0; i < unit.size(); ++i)
            for (std::size_t j = 0; j < unit.size(); ++j)
                if (i != j)
                    coincidence[value_index[unit[i]]][value_index[unit[j]]] += w;
    }

    std::vector<double> marginal(k, 0.0);
    double observed = 0.0;
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t d = 0; d < k; ++d) {
            marginal[c] += coincidence[c][d];
            double diff = values[c] - values[d];
            observed += coincidence[c][d] * diff * diff;
        }
    observed /= n_pairable;

    double expected = 0.0;
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t d = 0; d < k; ++d) {
            if (c == d) continue;
            double diff = values[c] - values[d];
            expected += marginal[c] * marginal[d] * diff * diff;
        }
    expected /= n_pairable * (n_pairable - 1.0);

    if (observed == 0.0) return 1.0;
    if (expected == 0.0)
        throw ValidationError(
            "krippendorff_alpha_interval: zero expected disagreement with "
            "nonzero observed disagreement");
    return 1.0 - observed / expected;
}

ReliabilityReport reliability(std::span<const double> rater_a,
                              std::span<const double> rater_b) {
    require_pair(rater_a, rater_b, 2, "reliability");
    std::vector<std::vector<std::optional<double>>> matrix;
    matrix.reserve(rater_a.size());
    for (std::size_t i = 0; i < rater_a.size(); ++i)
        matrix.push_back({rater_a[i], rater_b[i]});
    ReliabilityReport out;
    out.krippendorff_alpha = krippendorff_alpha_interval(matrix);
    MaeSd m = mae_sd(rater_a, rater_b);
    out.mae = m.mae;
    out.sd = m.sd;
    return out;
}

nlohmann::json ReliabilityReport::to_json() const {
    return {{"krippendorff_alpha", krippendorff_alpha}, {"mae", mae}, {"sd", sd}};
}

int label_bin(double label) {
    int bin = static_cast<int>(std::floor(label));
    return std::clamp(bin, 1, 6);  // 7.0 belongs to [6,7]
}

double silhouette_binned(const std::vector<std::vector<double>>& embeddings,
                         std::span<const double> labels) {
    const std::size_t n = embeddings.size();
    if (labels.size() != n)
        throw ValidationError("silhouette_binned: embeddings/labels mismatch");
    if (n == 0) throw ValidationError("silhouette_binned: empty input");
    const std::size_t dim = embeddings.front().size();
    for (const auto& e : embeddings)
        if (e.size() != dim)
            throw ValidationError("silhouette_binned: ragged embedding dims");

    std::vector<int> bins(n);
    std::map<int, std::size_t> bin_sizes;
    for (std::size_t i = 0; i < n; ++i) {
        bins[i] = label_bin(labels[i]);
        ++bin_sizes[bins[i]];
    }
    if (bin_sizes.size() < 2)
        throw ValidationError("silhouette_binned: all samples in one bin");

    auto dist = [&](std::size_t i, std::size_t j) {
        return std::sqrt(kernels::sum_sq_diff(embeddings[i].data(),
                                              embeddings[j].data(), dim));
    };

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (bin_sizes[bins[i]] == 1) continue;  // singleton scores 0
        std::map<int, double> sum_by_bin;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            sum_by_bin[bins[j]] += dist(i, j);
        }
        double a = sum_by_bin[bins[i]] /
                   static_cast<double>(bin_sizes[bins[i]] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [bin, sum] : sum_by_bin) {
            if (bin == bins[i]) continue;
            b = std::min(b, sum / static_cast<double>(bin_sizes[bin]));
        }
        double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(n);
}

std::map<std::string, GroupEntry> group_metrics(
    std::span<const double> pred, std::span<const double> truth,
    const std::vector<std::string>& groups) {
    require_pair(pred, truth, 1, "group_metrics");
    if (groups.size() != pred.size())
        throw ValidationError("group_metrics: groups/values mismatch");

    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_cat;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        auto& [p, t] = by_cat[groups[i]];
        p.push_back(pred[i]);
        t.push_back(truth[i]);
    }

    std::map<std::string, GroupEntry> out;
    for (const auto& [category, vecs] : by_cat) {
        GroupEntry entry;
        entry.n = vecs.first.size();
        try {
            entry.metrics = compute_metrics(vecs.first, vecs.second);
        } catch (const ValidationError&) {
            // n < 2 or constant vectors: unavailable rather than an error
        }
        out.emplace(category, std::move(entry));
    }
    return out;
}

namespace {

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

RunAggregate aggregate_runs(const std::map<std::uint64_t, MetricReport>& reports) {
    if (reports.empty()) throw ValidationError("aggregate_runs: no reports");
    RunAggregate agg;
    agg.per_seed = reports;

    std::vector<double> pccs, cccs, rmses;
    for (const auto& [seed, r] : reports) {
        pccs.push_back(r.pcc);
        cccs.push_back(r.ccc);
        rmses.push_back(r.rmse);
    }
    agg.median.pcc = median_of(pccs);
    agg.median.ccc = median_of(cccs);
    agg.median.rmse = median_of(rmses);
    agg.median.n = reports.begin()->second.n;

    agg.peak.pcc = *std::max_element(pccs.begin(), pccs.end());
    agg.peak.ccc = *std::max_element(cccs.begin(), cccs.end());
    agg.peak.rmse = *std::min_element(rmses.begin(), rmses.end());
    agg.peak.n = agg.median.n;
    return agg;
}

nlohmann::json RunAggregate::to_json() const {
    nlohmann::json seeds = nlohmann::json::object();
    for (const auto& [seed, r] : per_seed) seeds[std::to_string(seed)] = r.to_json();
    return {{"per_seed", seeds},
            {"median", median.to_json()},
            {"peak", peak.to_json()}};
}

RunAggregate RunAggregate::from_json(const nlohmann::json& j) {
    RunAggregate agg;
    for (const auto& [seed, r] : j.at("per_seed").items())
        agg.per_seed[std::stoull(seed)] = MetricReport::from_json(r);
    agg.median = MetricReport::from_json(j.at("median"));
    agg.peak = MetricReport::from_json(j.at("peak"));
    return agg;
}

namespace {

double u_statistic(std::span<const double> a, std::span<const double> b) {
    double u = 0.0;
    for (double x : a)
        for (double y : b) {
            if (x > y)
                u += 1.0;
            else if (x == y)
                u += 0.5;
        }
    return u;
}

double exact_two_sided_p(std::span<const double> a, std::span<const double> b) {
    const std::size_t n1 = a.size();
    const std::size_t n2 = b.size();
    const std::size_t n = n1 + n2;
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());

    const double u_obs = u_statistic(a, b);
    const double u_max = static_cast<double>(n1 * n2);
    const double u_lo = std::min(u_obs, u_max - u_obs);
    const double u_hi = u_max - u_lo;

    // Every assignment of n1 pooled positions to the first group is equally
    // likely under the null; walk them with Gosper's hack.
    std::uint64_t total = 0, as_extreme = 0;
    std::vector<double> ga(n1), gb(n2);
    const std::uint32_t limit = 1u << n;
    std::uint32_t mask = (1u << n1) - 1;
    while (mask < limit) {
        std::size_t ia = 0, ib = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (1u << i))
                ga[ia++] = pooled[i];
            else
                gb[ib++] = pooled[i];
        }
        double u = u_statistic(ga, gb);
        bool lo = u <= u_lo;
        bool hi = u >= u_hi;
        ++total;
        if (lo || hi) ++as_extreme;
        // next mask with the same popcount
        std::uint32_t c = mask & (0u - mask);
        std::uint32_t r = mask + c;
        mask = (((r ^ mask) >> 2) / c) | r;
        if (c == 0) break;
    }
    return static_cast<double>(as_extreme) / static_cast<double>(total);
}

double normal_two_sided_p(std::span<const double> a, std::span<const double> b) {
    const double n1 = static_cast<double>(a.size());
    const double n2 = static_cast<double>(b.size());
    const double n = n1 + n2;
    const double u = u_statistic(a, b);
    const double mu = n1 * n2 / 2.0;

    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    std::sort(pooled.begin(), pooled.end());
    double tie_term = 0.0;
    for (std::size_t i = 0; i < pooled.size();) {
        std::size_t j = i;
        while (j < pooled.size() && pooled[j] == pooled[i]) ++j;
        double t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        i = j;
    }
    double var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if (var <= 0.0) return 1.0;  // complete tie
    double z = (std::fabs(u - mu) - 0.5) / std::sqrt(var);
    if (z < 0.0) z = 0.0;
    return std::erfc(z / std::sqrt(2.0));
}

}  // namespace

std::string stars_for_p(double p) {
    if (p <= 0.0001) return "****";
    if (p <= 0.001) return "***";
    if (p <= 0.01) return "**";
    if (p <= 0.05) return "*";
    return "ns";
}

SignificanceResult significance_stars(std::span<const double> runs_a,
                                      std::span<const double> runs_b) {
    if (runs_a.size() < 3 || runs_b.size() < 3)
        throw ValidationError("significance_stars: needs >= 3 values per side");
    SignificanceResult out;
    out.u = u_statistic(runs_a, runs_b);
    out.p_value = (runs_a.size() <= 8 && runs_b.size() <= 8)
                      ? exact_two_sided_p(runs_a, runs_b)
                      : normal_two_sided_p(runs_a, runs_b);
    if (out.p_value > 1.0) out.p_value = 1.0;
    out.stars = stars_for_p(out.p_value);
    return out;
}

std::map<std::string, std::vector<double>> load_embeddings(
    const std::filesystem::path& path) {
    Table table = read_delimited(path, /*has_header=*/false);
    std::map<std::string, std::vector<double>> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (row.size() < 2)
            throw SchemaError(path.string() + ": row " + std::to_string(r + 1) +
                              " has no vector components");
        std::vector<double> vec;
        vec.reserve(row.size() - 1);
        for (std::size_t c = 1; c < row.size(); ++c) {
            auto v = parse_strict_double(row[c]);
            if (!v)
                throw ValidationError(path.string() + ": row " +
                                      std::to_string(r + 1) + " column " +
                                      std::to_string(c + 1) + " not numeric");
            vec.push_back(*v);
        }
        if (!out.emplace(row[0], std::move(vec)).second)
            throw ValidationError(path.string() + ": duplicate embedding id '" +
                                  row[0] + "'");
    }
    return out;
}

}  // namespace labq
