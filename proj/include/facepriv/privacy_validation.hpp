#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "facepriv/anonymizer_training.hpp"
#include "facepriv/data_model.hpp"

namespace facepriv {

// ------------------------------------------------------------- metrics

/// Windowed structural similarity, Gaussian 11-tap window (sigma 1.5),
/// k1=0.01 / k2=0.03 on unit dynamic range, averaged over channels and
/// valid window positions.
double ssim(const Image& a, const Image& b);

/// SSIM plus its gradient w.r.t. the first argument (the prediction).
double ssimWithGrad(const Image& pred, const Image& target, Image* grad);

/// 10*log10(peak^2 / MSE), peak 1.0; identical images return +infinity.
double psnr(const Image& a, const Image& b);

/// Individual embedding displacement: ||z_a - z_b||_2.
double ied(const EmbeddingVector& za, const EmbeddingVector& zb);

/// Convolution with a discretized, renormalized Gaussian kernel
/// (clamp-to-edge); the GB baseline anonymizer.
Image gaussianBlur(const Image& img, double sigma);

/// The discretized kernel itself (entries sum to 1).
std::vector<double> gaussianKernel2d(double sigma, int* radiusOut);

// ------------------------------------------------------------- recovery

/// Image-to-image attacker trained to invert one anonymization stage.
struct RecoveryModel {
    nn::EncoderDecoder net;
    int resolution = 0;
    Variant source = Variant::pp;  // pp or dpp

    RecoveryModel(int resolution_, Variant source_, int baseChannels,
                  std::uint32_t seed)
        : net(baseChannels, seed), resolution(resolution_), source(source_) {}
};

/// Pairs are (target original, source anonymized). Objective 1 - SSIM.
void trainRecovery(const std::vector<std::pair<Image, Image>>& pairs,
                   RecoveryModel& model, const TrainConfig& cfg,
                   std::vector<double>* epochLoss = nullptr);

/// sourceVariant must match the model's training pair.
std::vector<Image> recover(const RecoveryModel& model,
                           const std::vector<Image>& crops,
                           Variant sourceVariant);

/// Aligns an original manifest with a derived-variant manifest by
/// (video, track, frame); throws DomainError on a missing counterpart.
std::vector<std::pair<FaceRecord, FaceRecord>> alignVariantPairs(
    const DatasetManifest& original, const DatasetManifest& derived);

// ------------------------------------------------------------- cases

struct ValidationCase {
    int rule_id = 0;  // 1..7
    FaceRecord left;  // always original for rules 4-7
    FaceRecord right;
    int ground_truth = 0;
};

/// Rules 1-2 emit up to this many seeded GT-0 pairs each; default is the
/// number of tracked faces.
struct CaseGenOptions {
    long rule12_quota = -1;  // -1: one per tracked face
    std::uint32_t seed = 42;
};

std::vector<ValidationCase> generateCases(
    const std::map<Variant, DatasetManifest>& manifests,
    const CaseGenOptions& opts = {});

void saveCases(const std::vector<ValidationCase>& cases, const std::string& path);
std::vector<ValidationCase> loadCases(const std::string& path);

/// f_match: 1 iff cosine(embed(left), embed(right)) >= threshold.
int matchCrops(const Image& left, const Image& right,
               const IdentityEmbedder& embedder, double threshold);

/// Fraction of rule 1-3 cases where prediction equals ground truth.
double matcherAccuracy(const std::vector<ValidationCase>& cases,
                       const std::vector<int>& predictions);

struct RuleStats {
    long cases = 0;
    long correct = 0;
};

struct PPreResult {
    std::map<int, RuleStats> per_rule;  // keys 4..7
    double p_pre = 0.0;
};

/// Rules 4-7 only; correct means prediction == 0.
PPreResult pPre(const std::vector<ValidationCase>& cases,
                const std::vector<int>& predictions);

// ------------------------------------------------------------- report

struct PrivacyReport {
    std::map<int, RuleStats> per_rule;  // keys 1..7
    double matcher_accuracy_r13 = 0.0;
    double p_pre = 0.0;
    // keyed by explicit pairing label, e.g. "original_vs_pp"
    std::map<std::string, double> mean_ssim;
    std::map<std::string, double> mean_psnr;
    std::map<std::string, double> mean_ied;
};

std::string privacyReportToJson(const PrivacyReport& r);
PrivacyReport privacyReportFromJson(const std::string& json);

}  // namespace facepriv
