#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "labq/dataset.hpp"

namespace labq {

enum class NoiseModel { spammer_uniform, gaussian, scale_flip };
NoiseModel parse_noise_model(std::string_view name);
std::string_view noise_model_name(NoiseModel m);

const std::vector<std::string>& default_empathic_phrases();
const std::vector<std::string>& default_neutral_phrases();

struct SynthConfig {
    SynthConfig()
        : empathic_phrases(default_empathic_phrases()),
          neutral_phrases(default_neutral_phrases()) {}

    std::size_t n_samples = 1000;
    std::vector<std::string> empathic_phrases;
    std::vector<std::string> neutral_phrases;
    double latent_lo = 1.0;
    double latent_hi = 7.0;
    NoiseModel noise_model = NoiseModel::scale_flip;
    double noise_fraction = 0.3;  // p
    double noise_sigma = 1.0;
    double teacher_sigma = 0.5;
    std::uint64_t seed = 0;

    // harness plumbing
    double train_frac = 0.7;
    double val_frac = 0.15;  // remainder is test
    std::size_t extra_samples = 500;
    int essay_phrases_min = 8;
    int essay_phrases_max = 16;

    static SynthConfig from_json(const nlohmann::json& j);
    static SynthConfig from_json_file(const std::filesystem::path& path);
};

// Essays are phrase compositions whose empathic-phrase rate follows the
// latent score; latent_truth is drawn uniform on [latent_lo, latent_hi].
// Fully deterministic per (config, seed).
Dataset generate_corpus(const SynthConfig& cfg);

// Picks round(p * n) samples and corrupts their crowd labels per the noise
// model; everyone else gets crowd_label = latent_truth.
Dataset inject_noise(const Dataset& corpus, const SynthConfig& cfg);

// llm_label = latent + N(0, teacher_sigma), clipped to [1,7]; the teacher
// stream is independent of the crowd-noise stream.
Dataset simulate_teacher(const Dataset& corpus, double teacher_sigma,
                         std::uint64_t seed);

}  // namespace labq
