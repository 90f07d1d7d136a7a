#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "labq/errors.hpp"
#include "labq/metrics.hpp"
#include "test_util.hpp"

using namespace labq;

// ---------------------------------------------------------------------------
// Independent direct-definition oracles. These deliberately avoid the library
// kernels and formulas structured the same way.
namespace oracle {

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double pcc(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / (std::sqrt(sxx) * std::sqrt(syy));
}

double ccc(const std::vector<double>& x, const std::vector<double>& y) {
    double n = static_cast<double>(x.size());
    double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return 2.0 * (sxy / n) / (sxx / n + syy / n + (mx - my) * (mx - my));
}

double rmse(const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    return std::sqrt(s / static_cast<double>(x.size()));
}

std::pair<double, double> mae_sd(const std::vector<double>& x,
                                 const std::vector<double>& y) {
    std::vector<double> abs_err;
    for (std::size_t i = 0; i < x.size(); ++i)
        abs_err.push_back(std::fabs(x[i] - y[i]));
    double m = mean(abs_err);
    double ss = 0.0;
    for (double e : abs_err) ss += (e - m) * (e - m);
    double sd = abs_err.size() > 1
                    ? std::sqrt(ss / static_cast<double>(abs_err.size() - 1))
                    : 0.0;
    return {m, sd};
}

// Krippendorff via the pairwise (matrix-free) formulation: algebraically the
// same alpha, different computation route.
double krippendorff(const std::vector<std::vector<std::optional<double>>>& m) {
    std::vector<std::vector<double>> units;
    for (const auto& row : m) {
        std::vector<double> vals;
        for (const auto& v : row)
            if (v) vals.push_back(*v);
        if (vals.size() >= 2) units.push_back(vals);
    }
    double n = 0.0;
    for (const auto& u : units) n += static_cast<double>(u.size());

    double d_o = 0.0;
    for (const auto& u : units) {
        double within = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i)
            for (std::size_t j = 0; j < u.size(); ++j)
                if (i != j) within += (u[i] - u[j]) * (u[i] - u[j]);
        d_o += within / static_cast<double>(u.size() - 1);
    }
    d_o /= n;

    std::vector<double> all;
    for (const auto& u : units) all.insert(all.end(), u.begin(), u.end());
    double d_e = 0.0;
    for (std::size_t i = 0; i < all.size(); ++i)
        for (std::size_t j = 0; j < all.size(); ++j)
            if (i != j) d_e += (all[i] - all[j]) * (all[i] - all[j]);
    d_e /= n * (n - 1.0);

    if (d_o == 0.0) return 1.0;
    return 1.0 - d_o / d_e;
}

// Silhouette by the textbook a(i)/b(i) double loop.
double silhouette(const std::vector<std::vector<double>>& emb,
                  const std::vector<int>& bin) {
    auto dist = [&](std::size_t i, std::size_t j) {
        double s = 0.0;
        for (std::size_t k = 0; k < emb[i].size(); ++k)
            s += (emb[i][k] - emb[j][k]) * (emb[i][k] - emb[j][k]);
        return std::sqrt(s);
    };
    const std::size_t n = emb.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t same = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && bin[j] == bin[i]) ++same;
        if (same == 0) continue;
        double a = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && bin[j] == bin[i]) a += dist(i, j);
        a /= static_cast<double>(same);

        double b = std::numeric_limits<double>::infinity();
        std::set<int> other_bins;
        for (std::size_t j = 0; j < n; ++j)
            if (bin[j] != bin[i]) other_bins.insert(bin[j]);
        for (int ob : other_bins) {
            double sum = 0.0;
            std::size_t cnt = 0;
            for (std::size_t j = 0; j < n; ++j)
                if (bin[j] == ob) {
                    sum += dist(i, j);
                    ++cnt;
                }
            b = std::min(b, sum / static_cast<double>(cnt));
        }
        double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(n);
}

// Exact Mann-Whitney two-sided p by recursive combination enumeration,
// structured differently from the library's Gosper walk.
namespace mwu {

double u_stat(const std::vector<double>& a, const std::vector<double>& b) {
    double u = 0.0;
    for (double x : a)
        for (double y : b) u += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
    return u;
}

void enumerate(const std::vector<double>& pooled, std::size_t n1, std::size_t start,
               std::vector<std::size_t>& chosen,
               const std::function<void(const std::vector<std::size_t>&)>& visit) {
    if (chosen.size() == n1) {
        visit(chosen);
        return;
    }
    for (std::size_t i = start; i < pooled.size(); ++i) {
        chosen.push_back(i);
        enumerate(pooled, n1, i + 1, chosen, visit);
        chosen.pop_back();
    }
}

double exact_p(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    const double u_obs = u_stat(a, b);
    const double u_max = static_cast<double>(a.size() * b.size());
    const double lo = std::min(u_obs, u_max - u_obs);
    const double hi = u_max - lo;

    std::size_t total = 0, extreme = 0;
    std::vector<std::size_t> chosen;
    enumerate(pooled, a.size(), 0, chosen,
              [&](const std::vector<std::size_t>& ids) {
                  std::vector<double> ga, gb;
                  std::vector<bool> in_a(pooled.size(), false);
                  for (auto i : ids) in_a[i] = true;
                  for (std::size_t i = 0; i < pooled.size(); ++i)
                      (in_a[i] ? ga : gb).push_back(pooled[i]);
                  double u = u_stat(ga, gb);
                  ++total;
                  if (u <= lo || u >= hi) ++extreme;
              });
    return static_cast<double>(extreme) / static_cast<double>(total);
}

}  // namespace mwu

}  // namespace oracle

namespace {

std::vector<double> random_vec(std::mt19937_64& gen, std::size_t n, double lo = -5,
                               double hi = 5) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(gen);
    return v;
}

}  // namespace

TEST_CASE("paper-anchored metric values") {
    std::vector<double> pred{1, 2, 3}, truth{5, 6, 7};
    CHECK(pcc(pred, truth) == 1.0);
    CHECK(rmse(pred, truth) == 4.0);
    CHECK(ccc(pred, truth) == doctest::Approx(1.0 / 13.0).epsilon(1e-13));
}

TEST_CASE("pcc of a vector with itself is 1; constants are errors") {
    std::vector<double> x{0.3, 1.7, 2.9, -4.0};
    CHECK(pcc(x, x) == doctest::Approx(1.0).epsilon(1e-15));
    std::vector<double> c{2.0, 2.0, 2.0};
    CHECK_THROWS_AS(pcc(c, x), ValidationError);
    CHECK_THROWS_AS(pcc(x, c), ValidationError);
    CHECK_THROWS_AS(ccc(c, c), ValidationError);  // 0/0 case
    // constant vs constant with different means is defined (ccc = 0)
    std::vector<double> c2{3.0, 3.0, 3.0};
    CHECK(ccc(c, c2) == 0.0);
}

TEST_CASE("metrics match direct-definition oracles on random pairs") {
    std::mt19937_64 gen(17);
    for (int rep = 0; rep < 50; ++rep) {
        std::uniform_int_distribution<std::size_t> len(2, 200);
        std::size_t n = len(gen);
        auto x = random_vec(gen, n);
        auto y = random_vec(gen, n);
        CHECK(pcc(x, y) == doctest::Approx(oracle::pcc(x, y)).epsilon(1e-10));
        CHECK(ccc(x, y) == doctest::Approx(oracle::ccc(x, y)).epsilon(1e-10));
        CHECK(rmse(x, y) == doctest::Approx(oracle::rmse(x, y)).epsilon(1e-12));
        auto [om, os] = oracle::mae_sd(x, y);
        MaeSd m = mae_sd(x, y);
        CHECK(m.mae == doctest::Approx(om).epsilon(1e-12));
        CHECK(m.sd == doctest::Approx(os).epsilon(1e-12));
        CHECK(std::fabs(ccc(x, y)) <= std::fabs(pcc(x, y)) + 1e-12);
    }
}

TEST_CASE("pcc is affine-invariant, ccc is not") {
    std::mt19937_64 gen(23);
    auto x = random_vec(gen, 40);
    auto y = random_vec(gen, 40);
    std::vector<double> y2(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) y2[i] = 2.5 * y[i] + 1.0;
    CHECK(pcc(x, y2) == doctest::Approx(pcc(x, y)).epsilon(1e-12));

    CHECK(ccc(x, x) == doctest::Approx(1.0).epsilon(1e-15));
    std::vector<double> shifted(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) shifted[i] = x[i] + 0.7;
    CHECK(ccc(x, shifted) < 1.0);
}

TEST_CASE("rmse is zero iff vectors are equal") {
    std::vector<double> x{1.5, 2.5, 3.5};
    CHECK(rmse(x, x) == 0.0);
    std::vector<double> y = x;
    y[1] += 1e-6;
    CHECK(rmse(x, y) > 0.0);
}

TEST_CASE("mae_sd basics") {
    std::vector<double> a{1, 3}, b{2, 5};
    MaeSd m = mae_sd(a, b);
    CHECK(m.mae == doctest::Approx(1.5));
    std::vector<double> id{4.0, 4.0, 4.0};
    MaeSd z = mae_sd(id, id);
    CHECK(z.mae == 0.0);
    CHECK(z.sd == 0.0);
}

TEST_CASE("krippendorff alpha: perfect agreement, frozen case, permutations") {
    using Row = std::vector<std::optional<double>>;
    std::vector<Row> perfect{{1.0, 1.0}, {5.5, 5.5}, {3.0, 3.0}};
    CHECK(krippendorff_alpha_interval(perfect) == 1.0);

    // two raters, two units: (1,2) and (2,1); D_o = 1, D_e = 2/3
    std::vector<Row> frozen{{1.0, 2.0}, {2.0, 1.0}};
    CHECK(krippendorff_alpha_interval(frozen) ==
          doctest::Approx(-0.5).epsilon(1e-13));

    std::mt19937_64 gen(31);
    std::uniform_real_distribution<double> score(1.0, 7.0);
    std::uniform_int_distribution<int> miss(0, 3);
    std::vector<Row> matrix;
    for (int u = 0; u < 12; ++u) {
        Row row;
        for (int r = 0; r < 4; ++r) {
            if (miss(gen) == 0)
                row.push_back(std::nullopt);
            else
                row.push_back(score(gen));
        }
        matrix.push_back(row);
    }
    double alpha = krippendorff_alpha_interval(matrix);
    CHECK(alpha == doctest::Approx(oracle::krippendorff(matrix)).epsilon(1e-10));

    auto shuffled = matrix;
    std::shuffle(shuffled.begin(), shuffled.end(), gen);  // permute units
    for (auto& row : shuffled) std::shuffle(row.begin(), row.end(), gen);  // raters
    CHECK(krippendorff_alpha_interval(shuffled) == doctest::Approx(alpha).epsilon(1e-10));

    std::vector<Row> thin{{1.0, 2.0}};
    CHECK_THROWS_AS(krippendorff_alpha_interval(thin), ValidationError);
}

TEST_CASE("silhouette: separated blobs, degenerate embeddings, oracle") {
    std::mt19937_64 gen(37);
    std::normal_distribution<double> noise(0.0, 0.1);

    std::vector<std::vector<double>> emb;
    std::vector<double> labels;
    for (int i = 0; i < 20; ++i) {
        emb.push_back({noise(gen), noise(gen)});
        labels.push_back(1.5);  // bin [1,2)
    }
    for (int i = 0; i < 20; ++i) {
        emb.push_back({10.0 + noise(gen), noise(gen)});
        labels.push_back(6.5);  // bin [6,7]
    }
    CHECK(silhouette_binned(emb, labels) > 0.9);

    std::vector<std::vector<double>> same(10, {1.0, 2.0});
    std::vector<double> two_bins;
    for (int i = 0; i < 10; ++i) two_bins.push_back(i < 5 ? 1.5 : 6.5);
    CHECK(silhouette_binned(same, two_bins) == 0.0);

    std::vector<double> one_bin(10, 3.5);
    CHECK_THROWS_AS(silhouette_binned(same, one_bin), ValidationError);

    // 30 random points in 3 bins vs the brute-force double loop
    std::vector<std::vector<double>> pts;
    std::vector<double> lbl;
    std::vector<int> bins;
    std::uniform_real_distribution<double> coord(-3.0, 3.0);
    std::uniform_int_distribution<int> which(0, 2);
    for (int i = 0; i < 30; ++i) {
        pts.push_back({coord(gen), coord(gen), coord(gen)});
        int b = which(gen);
        lbl.push_back(1.5 + 2.0 * b);  // bins 1, 3, 5
        bins.push_back(1 + 2 * b);
    }
    CHECK(silhouette_binned(pts, lbl) ==
          doctest::Approx(oracle::silhouette(pts, bins)).epsilon(1e-9));

    CHECK(label_bin(7.0) == 6);
    CHECK(label_bin(1.0) == 1);
    CHECK(label_bin(2.0) == 2);
}

TEST_CASE("group_metrics: single group equals global; tiny groups reported") {
    std::mt19937_64 gen(41);
    auto pred = random_vec(gen, 30, 1, 7);
    auto truth = random_vec(gen, 30, 1, 7);

    auto single = group_metrics(pred, truth, std::vector<std::string>(30, "all"));
    MetricReport global = compute_metrics(pred, truth);
    REQUIRE(single.at("all").metrics.has_value());
    CHECK(single.at("all").metrics->pcc == global.pcc);
    CHECK(single.at("all").metrics->ccc == global.ccc);
    CHECK(single.at("all").metrics->rmse == global.rmse);

    std::vector<std::string> groups(30, "big");
    for (int i = 0; i < 4; ++i) groups[static_cast<std::size_t>(i)] = "Other";
    auto mixed = group_metrics(pred, truth, groups);
    CHECK(mixed.at("Other").n == 4);
    CHECK(mixed.at("Other").metrics.has_value());  // even if negative

    // per-group values match running the metrics on the slices directly
    std::vector<double> po, to, pb, tb;
    for (std::size_t i = 0; i < 30; ++i) {
        if (groups[i] == "Other") {
            po.push_back(pred[i]);
            to.push_back(truth[i]);
        } else {
            pb.push_back(pred[i]);
            tb.push_back(truth[i]);
        }
    }
    CHECK(mixed.at("Other").metrics->ccc == doctest::Approx(oracle::ccc(po, to)).epsilon(1e-10));
    CHECK(mixed.at("big").metrics->ccc == doctest::Approx(oracle::ccc(pb, tb)).epsilon(1e-10));

    // n < 2 or constant: unavailable, not an error
    std::vector<std::string> lonely(30, "big");
    lonely[0] = "solo";
    auto with_solo = group_metrics(pred, truth, lonely);
    CHECK(with_solo.at("solo").n == 1);
    CHECK_FALSE(with_solo.at("solo").metrics.has_value());
}

TEST_CASE("aggregate_runs median and peak") {
    std::map<std::uint64_t, MetricReport> reports;
    const double pccs[] = {0.1, 0.2, 0.3, 0.4, 0.5};
    for (std::uint64_t s = 0; s < 5; ++s) {
        MetricReport r;
        r.pcc = pccs[s];
        r.ccc = pccs[s] - 0.05;
        r.rmse = 2.0 - pccs[s];
        r.n = 10;
        reports[s] = r;
    }
    RunAggregate agg = aggregate_runs(reports);
    CHECK(agg.median.pcc == 0.3);
    CHECK(agg.peak.pcc == 0.5);
    CHECK(agg.peak.rmse == 1.5);  // minimum for error metrics

    std::map<std::uint64_t, MetricReport> two;
    two[0] = MetricReport{0, 0, 1.0, 5};
    two[1] = MetricReport{0, 0, 2.0, 5};
    RunAggregate even = aggregate_runs(two);
    CHECK(even.median.rmse == 1.5);
    CHECK(even.peak.rmse == 1.0);

    std::map<std::uint64_t, MetricReport> one;
    one[7] = MetricReport{0.42, 0.40, 1.1, 5};
    RunAggregate solo = aggregate_runs(one);
    CHECK(solo.median.pcc == solo.peak.pcc);
    CHECK(solo.median.rmse == solo.peak.rmse);

    // permutation invariance in seed order is inherent to the map keying;
    // check via re-insertion in reverse
    std::map<std::uint64_t, MetricReport> rev(reports.rbegin(), reports.rend());
    RunAggregate agg2 = aggregate_runs(rev);
    CHECK(agg2.median.pcc == agg.median.pcc);
    CHECK(agg2.peak.rmse == agg.peak.rmse);
}

TEST_CASE("significance: frozen exact values and star bands") {
    std::vector<double> same{1, 2, 3, 4, 5};
    SignificanceResult id = significance_stars(same, same);
    CHECK(id.p_value == 1.0);
    CHECK(id.stars == "ns");

    std::vector<double> a{1, 2, 3, 4, 5}, b{6, 7, 8, 9, 10};
    SignificanceResult sep = significance_stars(a, b);
    CHECK(sep.p_value == doctest::Approx(2.0 / 252.0).epsilon(1e-15));
    CHECK(sep.stars == "**");

    CHECK(stars_for_p(0.05) == "*");
    CHECK(stars_for_p(0.010000001) == "*");
    CHECK(stars_for_p(0.01) == "**");
    CHECK(stars_for_p(0.001) == "***");
    CHECK(stars_for_p(0.0001) == "****");
    CHECK(stars_for_p(0.051) == "ns");

    std::vector<double> two{1, 2};
    CHECK_THROWS_AS(significance_stars(two, a), ValidationError);
}

TEST_CASE("large samples switch to the normal approximation") {
    // 9 per side is beyond the exact-enumeration cutoff; the tie-corrected
    // normal approximation should land near the exact distribution, which the
    // recursive oracle can still enumerate at this size.
    std::vector<double> a{1.2, 2.1, 2.9, 3.3, 4.8, 5.1, 5.9, 6.4, 6.9};
    std::vector<double> b{2.0, 2.8, 3.1, 3.9, 4.1, 5.5, 6.0, 6.6, 7.0};
    SignificanceResult r = significance_stars(a, b);
    double exact = oracle::mwu::exact_p(a, b);
    CHECK(r.p_value == doctest::Approx(exact).epsilon(0.15));
    CHECK(r.p_value <= 1.0);
    CHECK(r.p_value > 0.0);

    // strongly separated large samples are still highly significant
    std::vector<double> lo(10), hi(10);
    for (int i = 0; i < 10; ++i) {
        lo[static_cast<std::size_t>(i)] = i;
        hi[static_cast<std::size_t>(i)] = 100 + i;
    }
    CHECK(significance_stars(lo, hi).p_value < 0.001);
}

TEST_CASE("significance matches an independent enumerator, ties included") {
    std::mt19937_64 gen(43);
    std::uniform_int_distribution<int> val(0, 4);  // small range forces ties
    std::uniform_int_distribution<std::size_t> len(3, 6);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> a(len(gen)), b(len(gen));
        for (auto& v : a) v = val(gen);
        for (auto& v : b) v = val(gen);
        SignificanceResult r = significance_stars(a, b);
        CHECK(r.p_value == doctest::Approx(oracle::mwu::exact_p(a, b)).epsilon(1e-12));
    }
}

TEST_CASE("embedding file loader") {
    labq::testutil::TempDir dir;
    labq::testutil::write_file(dir.file("emb.tsv"),
                               "id1\t0.5\t1.5\nid2\t-1\t2\n");
    auto embs = load_embeddings(dir.file("emb.tsv"));
    REQUIRE(embs.size() == 2);
    CHECK(embs.at("id1") == std::vector<double>{0.5, 1.5});
    CHECK(embs.at("id2") == std::vector<double>{-1.0, 2.0});
}
