#include "labq/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "labq/errors.hpp"
#include "labq/hash.hpp"
#include "labq/rng.hpp"

namespace labq {

namespace {

double clip_label(double v) { return std::clamp(v, 1.0, 7.0); }

const std::vector<std::string> kEmpathicBank = {
    "my heart goes out to everyone affected",
    "i feel so sorry for the families involved",
    "it is heartbreaking to imagine what they endured",
    "i was moved to tears reading about their loss",
    "those poor children deserve so much better",
    "i wish i could do something to ease their pain",
    "my heart aches for the survivors",
    "i feel deep compassion for the victims",
    "it hurts to think of the suffering they went through",
    "i am devastated by what happened to them",
    "i truly hope they find comfort and peace",
    "reading this filled me with sorrow for them",
    "i cannot stop thinking about their grief",
    "i feel tender sympathy for every person affected",
    "their pain weighs heavily on my heart",
    "i am so saddened by this terrible tragedy",
    "i sincerely pray the community can heal",
    "it breaks my heart that they lost everything",
    "i feel warm concern for the people rebuilding their lives",
    "nobody should have to endure such heartbreak",
    "i share in the sadness of everyone touched by this",
    "the thought of their anguish brings tears to my eyes",
    "i long to comfort those who are grieving",
    "my soul aches knowing how much they suffered",
};

const std::vector<std::string> kNeutralBank = {
    "the article summarised the main events",
    "officials released a statement on tuesday",
    "the report listed several figures and dates",
    "authorities are reviewing the circumstances",
    "the investigation remains ongoing",
    "local agencies coordinated the response",
    "the timeline of events was described in detail",
    "several sources confirmed the account",
    "the region has seen similar incidents before",
    "statistics were provided by the ministry",
    "the update included quotes from spokespeople",
    "infrastructure in the area was discussed",
    "the coverage mentioned previous policy changes",
    "a follow-up briefing is scheduled next week",
    "the document outlined the procedural steps",
    "weather conditions at the time were noted",
    "the map showed the locations involved",
    "reporters described the scene factually",
    "the budget implications were estimated",
    "committee members debated the regulations",
    "the measurements were recorded by instruments",
    "analysts compared the numbers across years",
    "the agency published its annual review",
    "the press release covered logistical details",
};

}  // namespace

NoiseModel parse_noise_model(std::string_view name) {
    if (name == "spammer_uniform") return NoiseModel::spammer_uniform;
    if (name == "gaussian") return NoiseModel::gaussian;
    if (name == "scale_flip") return NoiseModel::scale_flip;
    throw ValidationError("unknown noise model '" + std::string(name) + "'");
}

std::string_view noise_model_name(NoiseModel m) {
    switch (m) {
        case NoiseModel::spammer_uniform: return "spammer_uniform";
        case NoiseModel::gaussian: return "gaussian";
        case NoiseModel::scale_flip: return "scale_flip";
    }
    return "gaussian";
}

const std::vector<std::string>& default_empathic_phrases() { return kEmpathicBank; }
const std::vector<std::string>& default_neutral_phrases() { return kNeutralBank; }

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
    SynthConfig cfg;
    auto opt = [&j](const char* key, auto& slot) {
        if (j.contains(key)) slot = j.at(key).get<std::decay_t<decltype(slot)>>();
    };
    opt("n_samples", cfg.n_samples);
    opt("empathic_phrases", cfg.empathic_phrases);
    opt("neutral_phrases", cfg.neutral_phrases);
    opt("latent_lo", cfg.latent_lo);
    opt("latent_hi", cfg.latent_hi);
    if (j.contains("noise_model"))
        cfg.noise_model = parse_noise_model(j.at("noise_model").get<std::string>());
    opt("noise_fraction", cfg.noise_fraction);
    opt("noise_sigma", cfg.noise_sigma);
    opt("teacher_sigma", cfg.teacher_sigma);
    opt("seed", cfg.seed);
    opt("train_frac", cfg.train_frac);
    opt("val_frac", cfg.val_frac);
    opt("extra_samples", cfg.extra_samples);
    opt("essay_phrases_min", cfg.essay_phrases_min);
    opt("essay_phrases_max", cfg.essay_phrases_max);

    if (cfg.noise_fraction < 0.0 || cfg.noise_fraction > 1.0)
        throw ValidationError("synth config: noise_fraction must be in [0,1]");
    if (cfg.noise_sigma < 0.0 || cfg.teacher_sigma < 0.0)
        throw ValidationError("synth config: sigmas must be >= 0");
    if (cfg.latent_lo >= cfg.latent_hi)
        throw ValidationError("synth config: latent range is empty");
    if (cfg.train_frac <= 0.0 || cfg.val_frac < 0.0 ||
        cfg.train_frac + cfg.val_frac >= 1.0)
        throw ValidationError("synth config: bad split fractions");
    if (cfg.essay_phrases_min < 1 || cfg.essay_phrases_max < cfg.essay_phrases_min)
        throw ValidationError("synth config: bad essay phrase counts");
    return cfg;
}

SynthConfig SynthConfig::from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open synth config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("synth config " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

Dataset generate_corpus(const SynthConfig& cfg) {
    const auto& empathic = cfg.empathic_phrases;
    const auto& neutral = cfg.neutral_phrases;
    if (empathic.empty() || neutral.empty())
        throw ValidationError("generate_corpus: empty phrase bank");

    Rng rng(splitmix64(cfg.seed ^ fnv1a64("corpus")));
    Dataset out;
    out.name = "synth";

    const auto n_train = static_cast<std::size_t>(
        std::floor(cfg.train_frac * static_cast<double>(cfg.n_samples)));
    const auto n_val = static_cast<std::size_t>(
        std::floor(cfg.val_frac * static_cast<double>(cfg.n_samples)));

    for (std::size_t i = 0; i < cfg.n_samples; ++i) {
        Sample s;
        s.source = "synth";
        s.id = "synth:" + std::to_string(i);
        s.split = i < n_train           ? Split::train
                  : i < n_train + n_val ? Split::val
                                        : Split::test;

        double latent = rng.uniform(cfg.latent_lo, cfg.latent_hi);
        s.latent_truth = latent;

        // Each phrase slot is empathic with probability equal to the latent
        // position in its range, so essays carry a noisy but monotone signal.
        double rate = (latent - cfg.latent_lo) / (cfg.latent_hi - cfg.latent_lo);
        int length = cfg.essay_phrases_min +
                     static_cast<int>(rng.index(static_cast<std::size_t>(
                         cfg.essay_phrases_max - cfg.essay_phrases_min + 1)));
        std::string essay;
        for (int p = 0; p < length; ++p) {
            const auto& bank = rng.uniform() < rate ? empathic : neutral;
            if (p) essay += ". ";
            essay += bank[rng.index(bank.size())];
        }
        essay += ".";
        s.essay = std::move(essay);
        out.samples.push_back(std::move(s));
    }
    return out;
}

Dataset inject_noise(const Dataset& corpus, const SynthConfig& cfg) {
    Dataset out = corpus;
    for (const auto& s : out.samples)
        if (!s.latent_truth)
            throw ValidationError("inject_noise: sample '" + s.id +
                                  "' lacks latent_truth");

    const std::size_t n = out.samples.size();
    const auto k = static_cast<std::size_t>(
        std::lround(cfg.noise_fraction * static_cast<double>(n)));

    Rng rng(splitmix64(cfg.seed ^ fnv1a64("noise")));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    std::vector<bool> corrupted(n, false);
    for (std::size_t i = 0; i < k; ++i) corrupted[order[i]] = true;

    for (std::size_t i = 0; i < n; ++i) {
        auto& s = out.samples[i];
        double latent = *s.latent_truth;
        if (!corrupted[i]) {
            s.crowd_label = latent;
            continue;
        }
        switch (cfg.noise_model) {
            case NoiseModel::spammer_uniform:
                s.crowd_label = rng.uniform(1.0, 7.0);
                break;
            case NoiseModel::gaussian:
                s.crowd_label = clip_label(latent + rng.normal(0.0, cfg.noise_sigma));
                break;
            case NoiseModel::scale_flip:
                s.crowd_label = 8.0 - latent;
                break;
        }
    }
    return out;
}

Dataset simulate_teacher(const Dataset& corpus, double teacher_sigma,
                         std::uint64_t seed) {
    if (teacher_sigma < 0.0)
        throw ValidationError("simulate_teacher: sigma must be >= 0");
    Dataset out = corpus;
    Rng rng(splitmix64(seed ^ fnv1a64("teacher")));
    for (auto& s : out.samples) {
        if (!s.latent_truth)
            throw ValidationError("simulate_teacher: sample '" + s.id +
                                  "' lacks latent_truth");
        double noise = teacher_sigma > 0.0 ? rng.normal(0.0, teacher_sigma) : 0.0;
        s.llm_label = clip_label(*s.latent_truth + noise);
    }
    return out;
}

}  // namespace labq
