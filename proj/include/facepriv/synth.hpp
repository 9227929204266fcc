#pragma once

#include <string>
#include <vector>

#include "facepriv/knowledge_priors.hpp"

namespace facepriv {

/// Parametric toy-face generator: identity is a seeded smooth zero-mean
/// texture, expression is a strong localized deformation, so a linear
/// embedder separates identities and a small conv net separates expressions.
struct SynthOptions {
    int identities = 6;
    int expressions = 3;
    int videos = 18;
    int frames_per_video = 6;
    int crop_size = 32;
    int second_identity_every = 3;  // every n-th video hosts a second identity
    std::uint32_t seed = 42;
};

struct SynthFace {
    Image image;
    std::string video_id;
    int frame_index;
    int identity;  // generator-internal truth, never exposed to training
    std::string expression;
};

/// One toy face crop.
Image synthFace(int identity, int expressionIdx, int cropSize, Rng& jitterRng);

/// Full toy dataset; one video has one expression and one or two identities,
/// each identity present once per frame.
std::vector<SynthFace> synthDataset(const SynthOptions& opts);

std::string expressionName(int idx);

}  // namespace facepriv
