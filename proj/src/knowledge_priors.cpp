#include "facepriv/knowledge_priors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace facepriv {

using ordered_json = nlohmann::ordered_json;

static double cosineUnit(const std::vector<double>& a,
                         const std::vector<double>& b) {
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return dot;
}

static void renormalize(std::vector<double>& v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n > 0.0)
        for (double& x : v) x /= n;
}

DatasetManifest assignTracks(const std::vector<Detection>& detections,
                             double threshold, TrackIndex* indexOut) {
    if (threshold <= 0.0 || threshold > 1.0)
        throw DomainError("assignTracks: threshold must lie in (0,1]");

    // per-video running state
    struct TrackState {
        std::vector<double> meanSum;  // un-normalized running sum
        std::vector<double> rep;      // normalized representative
        int count = 0;
        std::vector<FaceRecord> records;
    };
    std::map<std::string, std::vector<TrackState>> videos;

    // group detections by (video, frame); frames processed in order
    std::map<std::string, std::map<int, std::vector<const Detection*>>> grouped;
    for (const auto& d : detections) {
        validateEmbedding(d.embedding);
        if (!d.embedding.normalized)
            throw ValidationError("assignTracks: embedding for " + d.crop_ref +
                                  " is not normalized");
        if (d.frame_index < 0)
            throw ValidationError("assignTracks: negative frame index for " +
                                  d.crop_ref);
        grouped[d.video_id][d.frame_index].push_back(&d);
    }

    DatasetManifest out;
    out.variant = Variant::original;

    for (auto& [video, byFrame] : grouped) {
        auto& tracks = videos[video];
        for (auto& [frame, dets] : byFrame) {
            // candidate (similarity, track, det) pairs above threshold
            struct Cand {
                double sim;
                int track;
                int det;
            };
            std::vector<Cand> cands;
            for (int di = 0; di < static_cast<int>(dets.size()); ++di)
                for (int ti = 0; ti < static_cast<int>(tracks.size()); ++ti) {
                    double s = cosineUnit(dets[di]->embedding.values,
                                          tracks[ti].rep);
                    if (s >= threshold) cands.push_back({s, ti, di});
                }
            std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
                if (a.sim != b.sim) return a.sim > b.sim;
                if (a.track != b.track) return a.track < b.track;
                return a.det < b.det;
            });
            std::vector<int> detTrack(dets.size(), -1);
            std::vector<bool> trackUsed(tracks.size(), false);
            for (const auto& c : cands) {
                if (detTrack[c.det] != -1 || trackUsed[c.track]) continue;
                detTrack[c.det] = c.track;
                trackUsed[c.track] = true;
            }
            for (int di = 0; di < static_cast<int>(dets.size()); ++di) {
                int ti = detTrack[di];
                if (ti == -1) {
                    tracks.emplace_back();
                    ti = static_cast<int>(tracks.size()) - 1;
                    tracks[ti].meanSum.assign(dets[di]->embedding.values.size(),
                                              0.0);
                }
                TrackState& t = tracks[ti];
                for (std::size_t i = 0; i < t.meanSum.size(); ++i)
                    t.meanSum[i] += dets[di]->embedding.values[i];
                t.rep = t.meanSum;
                renormalize(t.rep);
                ++t.count;
                FaceRecord r;
                r.video_id = video;
                r.frame_index = frame;
                r.track_id = ti;
                r.bbox = dets[di]->bbox;
                r.expression = dets[di]->expression;
                r.crop_ref = dets[di]->crop_ref;
                r.variant = Variant::original;
                t.records.push_back(r);
                out.records.push_back(r);
            }
        }
        if (indexOut) {
            for (int ti = 0; ti < static_cast<int>(tracks.size()); ++ti) {
                TrackInfo info;
                info.records = tracks[ti].records;
                info.representative.values = tracks[ti].rep;
                info.representative.normalized = true;
                indexOut->tracks[{video, ti}] = std::move(info);
            }
        }
    }
    validateManifest(out);
    return out;
}

std::pair<std::set<TrackKey>, std::set<TrackKey>> eligibleTracks(
    const DatasetManifest& manifest) {
    if (manifest.variant != Variant::original)
        throw DomainError("eligibleTracks: manifest variant must be original");
    std::map<TrackKey, int> counts;
    for (const auto& r : manifest.records) ++counts[{r.video_id, r.track_id}];
    std::set<TrackKey> general, firstSlot;
    for (const auto& [key, n] : counts) {
        if (n >= 2) general.insert(key);
        if (n >= 3) firstSlot.insert(key);
    }
    return {firstSlot, general};
}

TrackIndex buildTrackIndex(const DatasetManifest& manifest) {
    TrackIndex idx;
    for (const auto& r : manifest.records)
        idx.tracks[{r.video_id, r.track_id}].records.push_back(r);
    for (auto& [key, info] : idx.tracks) {
        std::sort(info.records.begin(), info.records.end(),
                  [](const FaceRecord& a, const FaceRecord& b) {
                      return a.frame_index < b.frame_index;
                  });
    }
    return idx;
}

std::vector<Detection> loadDetections(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("loadDetections: cannot open " + path);
    std::vector<Detection> dets;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            auto j = ordered_json::parse(line);
            Detection d;
            d.video_id = j.at("video_id").get<std::string>();
            d.frame_index = j.at("frame_index").get<int>();
            auto bb = j.at("bbox");
            for (int i = 0; i < 4; ++i) d.bbox[i] = bb.at(i).get<double>();
            if (!j.at("expression").is_null())
                d.expression = j.at("expression").get<std::string>();
            d.crop_ref = j.at("crop_ref").get<std::string>();
            d.embedding.values = j.at("embedding").get<std::vector<double>>();
            d.embedding.normalized = true;
            dets.push_back(std::move(d));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("loadDetections: " + path + ":" +
                             std::to_string(lineno) + ": " + e.what());
        }
    }
    return dets;
}

void saveDetections(const std::vector<Detection>& dets, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("saveDetections: cannot open " + path);
    for (const auto& d : dets) {
        ordered_json j;
        j["video_id"] = d.video_id;
        j["frame_index"] = d.frame_index;
        j["bbox"] = d.bbox;
        if (d.expression)
            j["expression"] = *d.expression;
        else
            j["expression"] = nullptr;
        j["crop_ref"] = d.crop_ref;
        j["embedding"] = d.embedding.values;
        f << j.dump() << "\n";
    }
    if (!f) throw IoError("saveDetections: write failed for " + path);
}

}  // namespace facepriv
