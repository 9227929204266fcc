#include "facepriv/batch_builder.hpp"

#include <algorithm>
#include <set>

namespace facepriv {

BatchShape validBatchShape(int k) {
    if (k < 1) throw DomainError("validBatchShape: k must be >= 1");
    long n = 0, pow4 = 1;
    for (int i = 0; i < k; ++i) pow4 *= 4;
    n = (pow4 - 1) / 3;
    BatchShape s;
    s.m = 2 * k;
    s.n = static_cast<int>(n);
    s.size = static_cast<int>(pow4);  // 2^m == 3n+1
    return s;
}

std::vector<int> bceLabels(int n) {
    if (n < 1) throw DomainError("bceLabels: n must be >= 1");
    std::vector<int> bits(static_cast<std::size_t>(3) * n, 1);
    bits[0] = 0;
    bits[2] = 0;
    return bits;
}

TripletViews tripletViews(int size) {
    if (size < 4 || (size - 1) % 3 != 0)
        throw DomainError("tripletViews: size must be 3n+1 with n >= 1");
    TripletViews v;
    const int n = (size - 1) / 3;
    for (int t = 0; t < n; ++t) {
        v.anchors.push_back(3 * t + 1);
        v.positives.push_back(3 * t + 2);
        v.negatives.push_back(3 * t + 3);
    }
    return v;
}

static bool hasExpression(const FaceRecord& r, const std::string& expr) {
    return r.expression && *r.expression == expr;
}

static int pick(Rng& rng, int n) {
    return std::uniform_int_distribution<int>(0, n - 1)(rng);
}

TripletBatch buildBatch(const TrackIndex& index, const std::string& expression,
                        int k, ExpressionMode mode, std::uint32_t rngSeed) {
    const BatchShape shape = validBatchShape(k);
    Rng rng(rngSeed);

    // triplet 0: a first-slot track (>=3 crops) with an expression-matching anchor
    std::vector<const TrackInfo*> firstSlot;
    std::vector<TrackKey> firstSlotKeys;
    for (const auto& [key, info] : index.tracks) {
        if (info.records.size() < 3) continue;
        bool anyExpr = std::any_of(info.records.begin(), info.records.end(),
                                   [&](const FaceRecord& r) {
                                       return hasExpression(r, expression);
                                   });
        if (anyExpr) {
            firstSlot.push_back(&info);
            firstSlotKeys.push_back(key);
        }
    }
    if (firstSlot.empty())
        throw CapacityError(
            "buildBatch: no track with >=3 crops carries expression '" +
            expression + "' for the first slot");

    TripletBatch batch;
    batch.n = shape.n;
    batch.expression_mode = mode;
    batch.expression = expression;
    batch.face_refs.resize(static_cast<std::size_t>(shape.size));

    struct TripletPick {
        FaceRecord anchor, negative;
        std::string positiveExpr;  // empty means any
    };
    std::vector<TripletPick> picks(shape.n);
    std::set<std::string> usedVideos;

    {
        const int ti = pick(rng, static_cast<int>(firstSlot.size()));
        const TrackInfo& t0 = *firstSlot[ti];
        std::vector<int> anchorIdx;
        for (int i = 0; i < static_cast<int>(t0.records.size()); ++i)
            if (hasExpression(t0.records[i], expression)) anchorIdx.push_back(i);
        const int ai = anchorIdx[pick(rng, static_cast<int>(anchorIdx.size()))];
        std::vector<int> rest;
        for (int i = 0; i < static_cast<int>(t0.records.size()); ++i)
            if (i != ai) rest.push_back(i);
        const int ni = rest[pick(rng, static_cast<int>(rest.size()))];
        std::vector<int> rest2;
        for (int i : rest)
            if (i != ni) rest2.push_back(i);
        const int ei = rest2[pick(rng, static_cast<int>(rest2.size()))];
        picks[0].anchor = t0.records[ai];
        picks[0].negative = t0.records[ni];
        picks[0].positiveExpr = expression;
        batch.face_refs[0] = t0.records[ei];
        usedVideos.insert(picks[0].anchor.video_id);
    }

    for (int t = 1; t < shape.n; ++t) {
        std::vector<const TrackInfo*> cands;
        for (const auto& [key, info] : index.tracks) {
            if (info.records.size() < 2) continue;
            if (usedVideos.count(key.first)) continue;
            if (mode == ExpressionMode::matched &&
                !std::any_of(info.records.begin(), info.records.end(),
                             [&](const FaceRecord& r) {
                                 return hasExpression(r, expression);
                             }))
                continue;
            cands.push_back(&info);
        }
        if (cands.empty())
            throw CapacityError("buildBatch: not enough distinct videos with "
                                "eligible tracks for triplet " +
                                std::to_string(t) + " (need " +
                                std::to_string(shape.n) + " videos)");
        const TrackInfo& tr = *cands[pick(rng, static_cast<int>(cands.size()))];
        std::vector<int> anchorIdx;
        for (int i = 0; i < static_cast<int>(tr.records.size()); ++i)
            if (mode == ExpressionMode::agnostic ||
                hasExpression(tr.records[i], expression))
                anchorIdx.push_back(i);
        const int ai = anchorIdx[pick(rng, static_cast<int>(anchorIdx.size()))];
        std::vector<int> rest;
        for (int i = 0; i < static_cast<int>(tr.records.size()); ++i)
            if (i != ai) rest.push_back(i);
        const int ni = rest[pick(rng, static_cast<int>(rest.size()))];
        picks[t].anchor = tr.records[ai];
        picks[t].negative = tr.records[ni];
        picks[t].positiveExpr =
            mode == ExpressionMode::matched ? expression : std::string();
        usedVideos.insert(picks[t].anchor.video_id);
    }

    // positives: a random qualifying face from a different video than the anchor
    for (int t = 0; t < shape.n; ++t) {
        std::vector<const FaceRecord*> cands;
        for (const auto& [key, info] : index.tracks) {
            if (key.first == picks[t].anchor.video_id) continue;
            for (const auto& r : info.records) {
                if (!picks[t].positiveExpr.empty() &&
                    !hasExpression(r, picks[t].positiveExpr))
                    continue;
                cands.push_back(&r);
            }
        }
        if (cands.empty())
            throw CapacityError(
                "buildBatch: no positive candidate outside video '" +
                picks[t].anchor.video_id + "' for triplet " + std::to_string(t));
        const FaceRecord& pos = *cands[pick(rng, static_cast<int>(cands.size()))];
        batch.face_refs[static_cast<std::size_t>(3) * t + 1] = picks[t].anchor;
        batch.face_refs[static_cast<std::size_t>(3) * t + 2] = pos;
        batch.face_refs[static_cast<std::size_t>(3) * t + 3] = picks[t].negative;
    }

    validateBatch(batch);
    return batch;
}

static bool sameCrop(const FaceRecord& a, const FaceRecord& b) {
    return a.video_id == b.video_id && a.track_id == b.track_id &&
           a.frame_index == b.frame_index;
}

void validateBatch(const TripletBatch& batch) {
    const int n = batch.n;
    if (static_cast<int>(batch.face_refs.size()) != 3 * n + 1)
        throw ValidationError("batch: face_refs length is not 3n+1");
    const FaceRecord& extra = batch.face_refs[0];
    std::set<std::string> videos;
    for (int t = 0; t < n; ++t) {
        const FaceRecord& a = batch.face_refs[static_cast<std::size_t>(3) * t + 1];
        const FaceRecord& p = batch.face_refs[static_cast<std::size_t>(3) * t + 2];
        const FaceRecord& g = batch.face_refs[static_cast<std::size_t>(3) * t + 3];
        if (a.video_id != g.video_id || a.track_id != g.track_id)
            throw ValidationError("batch: anchor and negative of triplet " +
                                  std::to_string(t) + " differ in track");
        if (sameCrop(a, g))
            throw ValidationError("batch: anchor equals negative in triplet " +
                                  std::to_string(t));
        if (p.video_id == a.video_id)
            throw ValidationError("batch: positive shares the anchor video in "
                                  "triplet " + std::to_string(t));
        if (!videos.insert(a.video_id).second)
            throw ValidationError("batch: two triplets share video " + a.video_id);
        const bool exprRequired =
            batch.expression_mode == ExpressionMode::matched || t == 0;
        if (exprRequired) {
            if (!hasExpression(a, batch.expression))
                throw ValidationError("batch: anchor of triplet " +
                                      std::to_string(t) +
                                      " misses the batch expression");
            if (!hasExpression(p, batch.expression))
                throw ValidationError("batch: positive of triplet " +
                                      std::to_string(t) +
                                      " misses the batch expression");
        }
    }
    const FaceRecord& a0 = batch.face_refs[1];
    const FaceRecord& n0 = batch.face_refs[3];
    if (extra.video_id != a0.video_id || extra.track_id != a0.track_id)
        throw ValidationError("batch: extra face does not share the first "
                              "anchor's track");
    if (sameCrop(extra, a0) || sameCrop(extra, n0))
        throw ValidationError("batch: extra face duplicates a triplet-0 crop");
}

std::string sampleBatchExpression(const TrackIndex& index, Rng& rng) {
    std::map<std::string, long> freq;
    for (const auto& [key, info] : index.tracks) {
        if (info.records.size() < 3) continue;
        for (const auto& r : info.records)
            if (r.expression) ++freq[*r.expression];
    }
    if (freq.empty())
        throw CapacityError("sampleBatchExpression: no labeled first-slot tracks");
    long total = 0;
    for (const auto& [e, c] : freq) total += c;
    long r = std::uniform_int_distribution<long>(0, total - 1)(rng);
    for (const auto& [e, c] : freq) {
        if (r < c) return e;
        r -= c;
    }
    return freq.rbegin()->first;  // unreachable
}

}  // namespace facepriv
