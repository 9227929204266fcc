#include "facepriv/data_model.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <tuple>

#include <json.hpp>

namespace facepriv {

using ordered_json = nlohmann::ordered_json;

std::string variantName(Variant v) {
    switch (v) {
        case Variant::original: return "original";
        case Variant::pp: return "pp";
        case Variant::dpp: return "dpp";
        case Variant::pp_recovered: return "pp_recovered";
        case Variant::dpp_recovered: return "dpp_recovered";
    }
    throw DomainError("variantName: bad variant");
}

Variant variantFromName(const std::string& name) {
    if (name == "original") return Variant::original;
    if (name == "pp") return Variant::pp;
    if (name == "dpp") return Variant::dpp;
    if (name == "pp_recovered") return Variant::pp_recovered;
    if (name == "dpp_recovered") return Variant::dpp_recovered;
    throw ParseError("unknown variant: " + name);
}

bool FaceRecord::operator==(const FaceRecord& o) const {
    return video_id == o.video_id && frame_index == o.frame_index &&
           track_id == o.track_id && bbox == o.bbox &&
           expression == o.expression && crop_ref == o.crop_ref &&
           variant == o.variant;
}

bool DatasetManifest::operator==(const DatasetManifest& o) const {
    return records == o.records && variant == o.variant &&
           schema_version == o.schema_version;
}

void validateEmbedding(const EmbeddingVector& e) {
    double ss = 0.0;
    for (double v : e.values) {
        if (!std::isfinite(v))
            throw ValidationError("embedding contains a non-finite entry");
        ss += v * v;
    }
    if (e.normalized && std::fabs(std::sqrt(ss) - 1.0) > 1e-6)
        throw ValidationError("embedding flagged normalized but L2 norm is " +
                              std::to_string(std::sqrt(ss)));
}

static std::string recordKey(const FaceRecord& r) {
    return r.video_id + "/f" + std::to_string(r.frame_index) + "/t" +
           std::to_string(r.track_id) + "/" + variantName(r.variant);
}

void validateRecord(const FaceRecord& r) {
    if (r.frame_index < 0)
        throw ValidationError("record " + recordKey(r) + ": negative frame_index");
    if (r.track_id < 0)
        throw ValidationError("record " + recordKey(r) + ": negative track_id");
    if (!(r.bbox[0] < r.bbox[2]) || !(r.bbox[1] < r.bbox[3]))
        throw ValidationError("record " + recordKey(r) +
                              ": bbox must satisfy x1<x2 and y1<y2");
    if (r.bbox[0] < 0 || r.bbox[1] < 0)
        throw ValidationError("record " + recordKey(r) +
                              ": bbox outside frame bounds");
}

void validateManifest(const DatasetManifest& m) {
    std::set<std::tuple<std::string, int, int, Variant>> keys;
    for (const auto& r : m.records) {
        validateRecord(r);
        if (r.variant != m.variant)
            throw ValidationError("record " + recordKey(r) +
                                  ": variant differs from manifest variant " +
                                  variantName(m.variant));
        if (!keys.insert({r.video_id, r.frame_index, r.track_id, r.variant}).second)
            throw ValidationError("duplicate record key " + recordKey(r));
    }
}

static ordered_json recordToJson(const FaceRecord& r) {
    ordered_json j;
    j["video_id"] = r.video_id;
    j["frame_index"] = r.frame_index;
    j["track_id"] = r.track_id;
    j["bbox"] = r.bbox;
    if (r.expression)
        j["expression"] = *r.expression;
    else
        j["expression"] = nullptr;
    j["crop_ref"] = r.crop_ref;
    j["variant"] = variantName(r.variant);
    return j;
}

static FaceRecord recordFromJson(const ordered_json& j) {
    FaceRecord r;
    r.video_id = j.at("video_id").get<std::string>();
    r.frame_index = j.at("frame_index").get<int>();
    r.track_id = j.at("track_id").get<int>();
    auto bb = j.at("bbox");
    if (!bb.is_array() || bb.size() != 4)
        throw ParseError("bbox must be a 4-element array");
    for (int i = 0; i < 4; ++i) r.bbox[i] = bb[i].get<double>();
    if (!j.at("expression").is_null())
        r.expression = j.at("expression").get<std::string>();
    r.crop_ref = j.at("crop_ref").get<std::string>();
    r.variant = variantFromName(j.at("variant").get<std::string>());
    return r;
}

DatasetManifest loadManifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("loadManifest: cannot open " + path);
    DatasetManifest m;
    std::string line;
    int lineno = 0;
    bool variantSet = false;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
            m.records.push_back(recordFromJson(j));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("loadManifest: " + path + ":" +
                             std::to_string(lineno) + ": " + e.what());
        }
        if (!variantSet) {
            m.variant = m.records.back().variant;
            variantSet = true;
        }
    }
    validateManifest(m);
    return m;
}

void saveManifest(const DatasetManifest& m, const std::string& path) {
    validateManifest(m);
    std::ofstream f(path);
    if (!f) throw IoError("saveManifest: cannot open " + path);
    for (const auto& r : m.records) f << recordToJson(r).dump() << "\n";
    if (!f) throw IoError("saveManifest: write failed for " + path);
}

std::vector<FaceRecord> mergeManifests(const std::vector<DatasetManifest>& ms) {
    std::vector<FaceRecord> all;
    std::set<std::tuple<std::string, int, int, Variant>> keys;
    for (const auto& m : ms) {
        validateManifest(m);
        for (const auto& r : m.records) {
            if (!keys.insert({r.video_id, r.frame_index, r.track_id, r.variant})
                     .second)
                throw ValidationError("mergeManifests: duplicate key " +
                                      recordKey(r));
            all.push_back(r);
        }
    }
    return all;
}

}  // namespace facepriv
