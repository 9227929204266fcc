#pragma once

#include <string>

#include "facepriv/anonymizer_training.hpp"
#include "facepriv/batch_builder.hpp"

namespace facepriv {

/// Flat key=value pipeline configuration. Unknown keys are rejected.
struct PipelineConfig {
    // training (shared)
    double alpha = 0.01;
    double triplet_margin = 0.2;
    double learning_rate = 1e-3;
    std::uint32_t seed = 42;
    int batch_k = 1;

    // per-stage effort
    int pretrain_epochs = 20;
    int fpp_steps = 300;
    int fexp_epochs = 20;
    int denoise_epochs = 20;
    int fer_epochs = 60;
    int recovery_epochs = 30;

    // thresholds and knobs
    double sim_threshold = 0.7;
    double matcher_threshold = 0.5;
    double blur_sigma = 0.4;
    ExpressionMode expression_mode = ExpressionMode::matched;
    bool denoise_enabled = true;
    std::string anonymizer = "fpp";  // fpp | blur

    // geometry
    int crop_size = 112;
    int embed_dim = 512;
    int clip_len = 16;

    // toy dataset
    int synth_identities = 24;
    int synth_expressions = 3;
    int synth_videos = 18;
    int synth_frames = 6;
    int second_identity_every = 5;
    double test_fraction = 0.3;

    std::string out_dir = "out";
};

void validateConfig(const PipelineConfig& cfg);
PipelineConfig loadConfig(const std::string& path);
void saveConfig(const PipelineConfig& cfg, const std::string& path);
/// Canonical key=value dump, stable key order; basis of the config hash.
std::string configCanonical(const PipelineConfig& cfg);
std::uint64_t configHash(const PipelineConfig& cfg);

/// The TrainConfig view used by the training modules.
TrainConfig trainConfigOf(const PipelineConfig& cfg, int epochs);

}  // namespace facepriv
