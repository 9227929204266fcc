#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "facepriv/nn.hpp"

namespace facepriv {

struct TrainConfig {
    double alpha = 0.01;
    int epochs = 400;
    double triplet_margin = 0.2;
    double learning_rate = 1e-3;
    std::uint32_t seed = 42;
    int batch_k = 1;
};

void validateTrainConfig(const TrainConfig& cfg);

/// Frozen identity embedder contract (f_e). Implementations must emit
/// L2-normalized embeddings and support backprop through the embedding.
class IdentityEmbedder {
public:
    virtual ~IdentityEmbedder() = default;
    virtual int dim() const = 0;
    virtual std::vector<double> embed(const Image& x) const = 0;
    /// Gradient of a scalar loss w.r.t. the input image, given the gradient
    /// w.r.t. the (normalized) embedding.
    virtual Image embedBackward(const Image& x,
                                const std::vector<double>& dEmb) const = 0;
    virtual std::uint64_t checksum() const = 0;

    bool frozen = true;
};

/// Toy embedder: fixed seeded linear projection of centered pixels, then
/// L2 normalization. Differentiable and deterministic; stands in for a
/// pretrained face embedding network.
class ToyLinearEmbedder : public IdentityEmbedder {
public:
    ToyLinearEmbedder(int dim, int channels, int height, int width,
                      std::uint32_t seed = 9001);
    int dim() const override { return dim_; }
    std::vector<double> embed(const Image& x) const override;
    Image embedBackward(const Image& x,
                        const std::vector<double>& dEmb) const override;
    std::uint64_t checksum() const override;

private:
    int dim_, channels_, height_, width_;
    std::vector<float> weights_;  // dim x (c*h*w)
    std::vector<double> project(const Image& x) const;
};

/// Privacy-preservation encoder-decoder (f_pp) bound to a fixed crop size.
struct AnonymizerModel {
    nn::EncoderDecoder net;
    int resolution = 0;

    AnonymizerModel(int resolution_, int baseChannels, std::uint32_t seed)
        : net(baseChannels, seed), resolution(resolution_) {}
    std::uint64_t checksum() const { return net.checksum(); }
};

struct LossParts {
    double total = 0.0;
    double l_tri = 0.0;
    double l_bce = 0.0;
};

/// cosine(features[j+1], features[0]) for j in [0, 3n).
std::vector<double> cosineRow(const std::vector<std::vector<double>>& features);

/// alpha * l_tri + (1 - alpha) * l_bce over a batch of embeddings.
/// l_bce maps cosines to probabilities via (1 + cos) / 2.
/// If grad is non-null it receives d(total)/d(features).
LossParts combinedLoss(const std::vector<std::vector<double>>& features,
                       const std::vector<int>& labels, const TrainConfig& cfg,
                       std::vector<std::vector<double>>* grad = nullptr);

struct TrainLogEntry {
    int step = 0;
    double l_tri = 0.0, l_bce = 0.0, total = 0.0;
};

/// L1 reconstruction pre-training; `epochs` passes over `crops`.
void pretrainReconstruction(AnonymizerModel& model,
                            const std::vector<Image>& crops,
                            const TrainConfig& cfg,
                            std::vector<double>* epochL1 = nullptr);

/// Algorithm-1 style training: batchProvider(step) yields the ordered
/// [extra, (a,p,n) x n] images of one batch. f_e stays frozen.
void trainFpp(const std::function<std::vector<Image>(int)>& batchProvider,
              int steps, AnonymizerModel& fpp, const IdentityEmbedder& fe,
              const TrainConfig& cfg, std::vector<TrainLogEntry>* log = nullptr);

/// Deterministic inference; output shape equals input shape.
std::vector<Image> anonymize(const AnonymizerModel& fpp,
                             const std::vector<Image>& images);

// Checkpoint container: magic, JSON metadata, raw parameter blob.
void saveCheckpoint(const std::string& path, const std::string& arch,
                    std::uint32_t seed, const std::string& metaJson,
                    const std::vector<nn::ParamRef>& params);
/// Returns the metadata JSON; loads parameters in place.
std::string loadCheckpoint(const std::string& path, const std::string& arch,
                           std::vector<nn::ParamRef> params);

}  // namespace facepriv
