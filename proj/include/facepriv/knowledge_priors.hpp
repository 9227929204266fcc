#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "facepriv/data_model.hpp"

namespace facepriv {

/// One face detection before a tracking ID has been assigned.
struct Detection {
    std::string video_id;
    int frame_index = 0;
    std::array<double, 4> bbox{};
    std::optional<std::string> expression;
    std::string crop_ref;
    EmbeddingVector embedding;
};

using TrackKey = std::pair<std::string, int>;  // (video_id, track_id)

struct TrackInfo {
    std::vector<FaceRecord> records;  // frame_index strictly increasing
    EmbeddingVector representative;   // running mean, renormalized
};

struct TrackIndex {
    std::map<TrackKey, TrackInfo> tracks;
};

/// Assigns per-video tracking IDs from embedding similarity.
/// A detection joins the most similar existing track of its video whose
/// representative clears the threshold and is still free in the current
/// frame; otherwise it opens a new track. Ties break toward the lower
/// track_id. Track IDs never compare across videos.
DatasetManifest assignTracks(const std::vector<Detection>& detections,
                             double threshold, TrackIndex* indexOut = nullptr);

/// general: tracks with >=2 distinct crops (anchor + negative);
/// first_slot: tracks with >=3 distinct crops (anchor + negative + extra).
std::pair<std::set<TrackKey>, std::set<TrackKey>> eligibleTracks(
    const DatasetManifest& manifest);

/// Rebuild a track index from an already-tracked manifest (no embeddings).
TrackIndex buildTrackIndex(const DatasetManifest& manifest);

// Detections file: manifest line format plus an embedding array per line.
std::vector<Detection> loadDetections(const std::string& path);
void saveDetections(const std::vector<Detection>& dets, const std::string& path);

}  // namespace facepriv
