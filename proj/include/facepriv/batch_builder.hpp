#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "facepriv/knowledge_priors.hpp"

namespace facepriv {

enum class ExpressionMode { matched, agnostic };

/// Batch layout [extra, (anchor, positive, negative) x n].
struct TripletBatch {
    std::vector<FaceRecord> face_refs;  // length 3n+1
    int n = 0;
    ExpressionMode expression_mode = ExpressionMode::matched;
    std::string expression;  // the batch expression label
};

struct BatchShape {
    int m;     // exponent of 2
    int n;     // number of triplets
    int size;  // 2^m == 3n+1
};

/// m = 2k, n = (4^k - 1) / 3, size = 4^k.
BatchShape validBatchShape(int k);

/// Length 3n, zeros exactly at positions 0 and 2.
std::vector<int> bceLabels(int n);

struct TripletViews {
    std::vector<int> anchors;    // 1, 4, ..., 3n-2
    std::vector<int> positives;  // 2, 5, ..., 3n-1
    std::vector<int> negatives;  // 3, 6, ..., 3n
};

TripletViews tripletViews(int size);

/// Builds one batch from a track index. Deterministic given the seed.
TripletBatch buildBatch(const TrackIndex& index, const std::string& expression,
                        int k, ExpressionMode mode, std::uint32_t rngSeed);

/// Throws ValidationError if the batch breaks any TripletBatch invariant.
void validateBatch(const TripletBatch& batch);

/// Sample a batch expression label proportional to label frequency among
/// first-slot eligible tracks.
std::string sampleBatchExpression(const TrackIndex& index, Rng& rng);

}  // namespace facepriv
