#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "facepriv/anonymizer_training.hpp"
#include "facepriv/nn.hpp"

namespace facepriv {

/// Post-anonymization image enhancer (f_denoise).
struct DenoiserModel {
    nn::EncoderDecoder net;
    int resolution = 0;

    DenoiserModel(int resolution_, int baseChannels, std::uint32_t seed)
        : net(baseChannels, seed), resolution(resolution_) {}
    std::uint64_t checksum() const { return net.checksum(); }
};

/// Frame-level expression classifier (f_exp). Frozen while the denoiser trains.
struct FrameExpressionModel {
    nn::FrameClassifier net;
    std::vector<std::string> classes;
    bool frozen = false;

    FrameExpressionModel(std::vector<std::string> classes_, std::uint32_t seed)
        : net(static_cast<int>(classes_.size()), seed),
          classes(std::move(classes_)) {}
    std::uint64_t checksum() const { return net.checksum(); }
};

/// Clip-level expression classifier (f_fer), desk-scale 3-D conv stand-in.
struct VideoExpressionModel {
    nn::VideoClassifier net;
    std::vector<std::string> classes;

    VideoExpressionModel(std::vector<std::string> classes_, std::uint32_t seed)
        : net(static_cast<int>(classes_.size()), seed),
          classes(std::move(classes_)) {}
    std::uint64_t checksum() const { return net.checksum(); }
};

struct FerReport {
    std::vector<std::string> classes;
    // per-class accuracy; nullopt for classes absent from the test set
    std::vector<std::optional<double>> per_class;
    double overall = 0.0;
    std::vector<std::vector<long>> confusion;  // rows: truth, cols: prediction
    long total = 0;
};

void validateFerReport(const FerReport& r);
std::string ferReportToJson(const FerReport& r);
FerReport ferReportFromJson(const std::string& json);
std::string confusionCsv(const FerReport& r);

/// Cross-entropy training of the frame classifier (used to pretrain f_exp).
void trainExpressionClassifier(const std::vector<Image>& images,
                               const std::vector<int>& labels,
                               FrameExpressionModel& model,
                               const TrainConfig& cfg,
                               std::vector<double>* epochLoss = nullptr);

double frameAccuracy(const FrameExpressionModel& model,
                     const std::vector<Image>& images,
                     const std::vector<int>& labels);

/// Algorithm-2 style denoiser training: cross entropy of the frozen
/// classifier's prediction on denoised anonymized images.
void trainDenoiser(const std::vector<Image>& ppImages,
                   const std::vector<int>& labels, DenoiserModel& denoiser,
                   const FrameExpressionModel& fexp, const TrainConfig& cfg,
                   std::vector<double>* epochLoss = nullptr);

std::vector<Image> denoise(const DenoiserModel& denoiser,
                           const std::vector<Image>& images);

void trainFer(const std::vector<Clip>& clips, const std::vector<int>& labels,
              VideoExpressionModel& model, const TrainConfig& cfg,
              std::vector<double>* epochLoss = nullptr);

FerReport evaluateFer(const VideoExpressionModel& model,
                      const std::vector<Clip>& clips,
                      const std::vector<int>& labels);

/// Report built from an already-computed prediction list (test oracle path).
FerReport ferReportFromPredictions(const std::vector<std::string>& classes,
                                   const std::vector<int>& truth,
                                   const std::vector<int>& predictions);

}  // namespace facepriv
