#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "facepriv/common.hpp"

namespace facepriv {

enum class Variant { original, pp, dpp, pp_recovered, dpp_recovered };

std::string variantName(Variant v);
Variant variantFromName(const std::string& name);

/// One detected/aligned face crop.
struct FaceRecord {
    std::string video_id;
    int frame_index = 0;
    int track_id = 0;
    std::array<double, 4> bbox{};  // x1,y1,x2,y2 pixel coordinates
    std::optional<std::string> expression;
    std::string crop_ref;  // relative path key for the aligned crop image
    Variant variant = Variant::original;

    bool operator==(const FaceRecord& o) const;
};

/// Identity embedding with an explicit normalization flag.
struct EmbeddingVector {
    std::vector<double> values;
    bool normalized = false;
};

void validateEmbedding(const EmbeddingVector& e);

struct DatasetManifest {
    std::vector<FaceRecord> records;
    Variant variant = Variant::original;
    int schema_version = 1;

    bool operator==(const DatasetManifest& o) const;
};

/// Checks FaceRecord invariants; throws ValidationError naming the record.
void validateRecord(const FaceRecord& r);

/// Checks manifest-level invariants (variant agreement, key uniqueness).
void validateManifest(const DatasetManifest& m);

DatasetManifest loadManifest(const std::string& path);
void saveManifest(const DatasetManifest& m, const std::string& path);

/// Merge manifests of distinct variants; the uniqueness key
/// (video, frame, track, variant) must still hold afterwards.
std::vector<FaceRecord> mergeManifests(const std::vector<DatasetManifest>& ms);

}  // namespace facepriv
