#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "labq/errors.hpp"
#include "labq/synth.hpp"

using namespace labq;

namespace {

// Spearman rank correlation, direct definition with average ranks.
double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> order(v.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        std::size_t i = 0;
        while (i < order.size()) {
            std::size_t j = i;
            while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
            double avg = 0.5 * static_cast<double>(i + j - 1) + 1.0;
            for (std::size_t k = i; k < j; ++k) r[order[k]] = avg;
            i = j;
        }
        return r;
    };
    auto rx = ranks(x), ry = ranks(y);
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= static_cast<double>(rx.size());
    my /= static_cast<double>(ry.size());
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

std::size_t count_empathic_phrases(const std::string& essay,
                                   const std::vector<std::string>& bank) {
    std::size_t count = 0;
    for (const auto& phrase : bank) {
        for (std::size_t pos = essay.find(phrase); pos != std::string::npos;
             pos = essay.find(phrase, pos + 1))
            ++count;
    }
    return count;
}

bool corpora_equal(const Dataset& a, const Dataset& b) {
    if (a.samples.size() != b.samples.size()) return false;
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        const auto& x = a.samples[i];
        const auto& y = b.samples[i];
        if (x.id != y.id || x.essay != y.essay || x.latent_truth != y.latent_truth ||
            x.crowd_label != y.crowd_label || x.llm_label != y.llm_label)
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("generate_corpus is deterministic per seed") {
    SynthConfig cfg;
    cfg.n_samples = 50;
    cfg.seed = 9;
    CHECK(corpora_equal(generate_corpus(cfg), generate_corpus(cfg)));

    SynthConfig other = cfg;
    other.seed = 10;
    CHECK_FALSE(corpora_equal(generate_corpus(cfg), generate_corpus(other)));

    SynthConfig empty = cfg;
    empty.n_samples = 0;
    CHECK(generate_corpus(empty).samples.empty());

    SynthConfig bad = cfg;
    bad.empathic_phrases.clear();
    CHECK_THROWS_AS(generate_corpus(bad), ValidationError);
}

TEST_CASE("empathic phrase count tracks the latent score") {
    SynthConfig cfg;
    cfg.n_samples = 1000;
    cfg.seed = 4;
    Dataset corpus = generate_corpus(cfg);

    std::vector<double> counts, latents;
    for (const auto& s : corpus.samples) {
        counts.push_back(static_cast<double>(
            count_empathic_phrases(s.essay, default_empathic_phrases())));
        latents.push_back(*s.latent_truth);
        CHECK(*s.latent_truth >= 1.0);
        CHECK(*s.latent_truth <= 7.0);
        CHECK_FALSE(s.essay.empty());
    }
    CHECK(spearman(counts, latents) > 0.8);
}

TEST_CASE("inject_noise: fraction, models, determinism") {
    SynthConfig cfg;
    cfg.n_samples = 1000;
    cfg.seed = 12;
    Dataset corpus = generate_corpus(cfg);

    SUBCASE("p = 0 copies the latent") {
        cfg.noise_fraction = 0.0;
        Dataset noisy = inject_noise(corpus, cfg);
        for (const auto& s : noisy.samples) CHECK(*s.crowd_label == *s.latent_truth);
    }

    SUBCASE("p = 1 scale_flip mirrors the scale") {
        cfg.noise_fraction = 1.0;
        cfg.noise_model = NoiseModel::scale_flip;
        Dataset noisy = inject_noise(corpus, cfg);
        for (const auto& s : noisy.samples)
            CHECK(*s.crowd_label == doctest::Approx(8.0 - *s.latent_truth));
    }

    SUBCASE("p = 0.3 corrupts exactly 300 of 1000") {
        cfg.noise_fraction = 0.3;
        cfg.noise_model = NoiseModel::spammer_uniform;
        Dataset noisy = inject_noise(corpus, cfg);
        std::size_t corrupted = 0;
        for (const auto& s : noisy.samples)
            if (*s.crowd_label != *s.latent_truth) ++corrupted;
        // a uniform draw could coincide with the latent only with probability 0
        CHECK(corrupted == 300);
        CHECK(corpora_equal(noisy, inject_noise(corpus, cfg)));
    }

    SUBCASE("labels stay in range under gaussian noise") {
        cfg.noise_fraction = 1.0;
        cfg.noise_model = NoiseModel::gaussian;
        cfg.noise_sigma = 5.0;
        Dataset noisy = inject_noise(corpus, cfg);
        for (const auto& s : noisy.samples) {
            CHECK(*s.crowd_label >= 1.0);
            CHECK(*s.crowd_label <= 7.0);
        }
    }
}

TEST_CASE("simulate_teacher: perfect, calibrated, deterministic") {
    SynthConfig cfg;
    cfg.n_samples = 2000;
    cfg.seed = 21;
    Dataset corpus = generate_corpus(cfg);

    Dataset perfect = simulate_teacher(corpus, 0.0, 21);
    for (const auto& s : perfect.samples) CHECK(*s.llm_label == *s.latent_truth);

    Dataset noisy = simulate_teacher(corpus, 0.5, 21);
    double mean = 0.0;
    std::vector<double> errors;
    for (const auto& s : noisy.samples) {
        errors.push_back(*s.llm_label - *s.latent_truth);
        mean += errors.back();
        CHECK(*s.llm_label >= 1.0);
        CHECK(*s.llm_label <= 7.0);
    }
    mean /= static_cast<double>(errors.size());
    double var = 0.0;
    for (double e : errors) var += (e - mean) * (e - mean);
    double sd = std::sqrt(var / static_cast<double>(errors.size()));
    CHECK(sd == doctest::Approx(0.5).epsilon(0.15));

    CHECK(corpora_equal(noisy, simulate_teacher(corpus, 0.5, 21)));
}

TEST_CASE("teacher closer to latent than corrupted crowd labels") {
    SynthConfig cfg;
    cfg.n_samples = 1500;
    cfg.seed = 33;
    cfg.noise_fraction = 0.5;
    cfg.noise_model = NoiseModel::gaussian;
    cfg.noise_sigma = 2.0;
    cfg.teacher_sigma = 0.5;

    Dataset corpus = generate_corpus(cfg);
    Dataset noisy = inject_noise(corpus, cfg);
    Dataset both = simulate_teacher(noisy, cfg.teacher_sigma, cfg.seed);

    double crowd_err = 0.0, teacher_err = 0.0;
    std::size_t corrupted = 0;
    for (const auto& s : both.samples) {
        if (*s.crowd_label == *s.latent_truth) continue;  // untouched subset
        ++corrupted;
        crowd_err += std::fabs(*s.crowd_label - *s.latent_truth);
        teacher_err += std::fabs(*s.llm_label - *s.latent_truth);
    }
    REQUIRE(corrupted > 500);
    CHECK(teacher_err / static_cast<double>(corrupted) <
          crowd_err / static_cast<double>(corrupted));
}

TEST_CASE("synth config json parsing and validation") {
    auto cfg = SynthConfig::from_json(nlohmann::json{
        {"n_samples", 123},
        {"noise_model", "scale_flip"},
        {"noise_fraction", 0.25},
        {"teacher_sigma", 0.1},
        {"seed", 5}});
    CHECK(cfg.n_samples == 123);
    CHECK(cfg.noise_model == NoiseModel::scale_flip);
    CHECK(cfg.noise_fraction == 0.25);

    CHECK_THROWS_AS(
        SynthConfig::from_json(nlohmann::json{{"noise_fraction", 1.5}}),
        ValidationError);
    CHECK_THROWS_AS(
        SynthConfig::from_json(nlohmann::json{{"noise_model", "banana"}}),
        ValidationError);
    CHECK_THROWS_AS(
        SynthConfig::from_json(nlohmann::json{{"teacher_sigma", -1.0}}),
        ValidationError);
}
