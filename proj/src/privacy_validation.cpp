#include "facepriv/privacy_validation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace facepriv {

using ordered_json = nlohmann::ordered_json;

// ------------------------------------------------------------- SSIM

namespace {

constexpr double kC1 = 0.01 * 0.01;  // (k1*L)^2, L = 1
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> gaussianWindow(int win, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(win) * win);
    const double c = (win - 1) / 2.0;
    double sum = 0.0;
    for (int y = 0; y < win; ++y)
        for (int x = 0; x < win; ++x) {
            const double dy = y - c, dx = x - c;
            w[static_cast<std::size_t>(y) * win + x] =
                std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            sum += w[static_cast<std::size_t>(y) * win + x];
        }
    for (double& v : w) v /= sum;
    return w;
}

}  // namespace

static double ssimImpl(const Image& a, const Image& b, Image* grad) {
    if (!a.sameShape(b)) throw DomainError("ssim: shape mismatch");
    if (a.height < 1 || a.width < 1) throw DomainError("ssim: empty image");
    const int win = std::min({11, a.height, a.width});
    const std::vector<double> w = gaussianWindow(win, 1.5);
    if (grad) *grad = Image(a.channels, a.height, a.width);
    double total = 0.0;
    long count = 0;
    for (int c = 0; c < a.channels; ++c) {
        for (int y0 = 0; y0 + win <= a.height; ++y0) {
            for (int x0 = 0; x0 + win <= a.width; ++x0) {
                double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
                for (int ky = 0; ky < win; ++ky)
                    for (int kx = 0; kx < win; ++kx) {
                        const double wi = w[static_cast<std::size_t>(ky) * win + kx];
                        const double xa = a.at(c, y0 + ky, x0 + kx);
                        const double xb = b.at(c, y0 + ky, x0 + kx);
                        mx += wi * xa;
                        my += wi * xb;
                        sxx += wi * xa * xa;
                        syy += wi * xb * xb;
                        sxy += wi * xa * xb;
                    }
                const double vx = sxx - mx * mx;
                const double vy = syy - my * my;
                const double cxy = sxy - mx * my;
                const double A1 = 2 * mx * my + kC1;
                const double A2 = 2 * cxy + kC2;
                const double B1 = mx * mx + my * my + kC1;
                const double B2 = vx + vy + kC2;
                const double S = (A1 * A2) / (B1 * B2);
                total += S;
                ++count;
                if (grad) {
                    const double dS_dA1 = A2 / (B1 * B2);
                    const double dS_dA2 = A1 / (B1 * B2);
                    const double dS_dB1 = -S / B1;
                    const double dS_dB2 = -S / B2;
                    const double dS_dmx = dS_dA1 * 2 * my + dS_dB1 * 2 * mx;
                    for (int ky = 0; ky < win; ++ky)
                        for (int kx = 0; kx < win; ++kx) {
                            const double wi =
                                w[static_cast<std::size_t>(ky) * win + kx];
                            const double xa = a.at(c, y0 + ky, x0 + kx);
                            const double xb = b.at(c, y0 + ky, x0 + kx);
                            const double g =
                                wi * dS_dmx +
                                2 * wi * (xa - mx) * dS_dB2 +
                                2 * wi * (xb - my) * dS_dA2;
                            grad->at(c, y0 + ky, x0 + kx) +=
                                static_cast<float>(g);
                        }
                }
            }
        }
    }
    if (count == 0) throw DomainError("ssim: image smaller than the window");
    if (grad)
        for (float& v : grad->data) v /= static_cast<float>(count);
    return total / count;
}

double ssim(const Image& a, const Image& b) { return ssimImpl(a, b, nullptr); }

double ssimWithGrad(const Image& pred, const Image& target, Image* grad) {
    return ssimImpl(pred, target, grad);
}

double psnr(const Image& a, const Image& b) {
    if (!a.sameShape(b)) throw DomainError("psnr: shape mismatch");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double ied(const EmbeddingVector& za, const EmbeddingVector& zb) {
    if (za.values.size() != zb.values.size())
        throw DomainError("ied: embedding dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < za.values.size(); ++i) {
        const double d = za.values[i] - zb.values[i];
        s += d * d;
    }
    return std::sqrt(s);
}

std::vector<double> gaussianKernel2d(double sigma, int* radiusOut) {
    if (sigma <= 0.0) throw DomainError("gaussianBlur: sigma must be > 0");
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    const int side = 2 * r + 1;
    std::vector<double> k(static_cast<std::size_t>(side) * side);
    double sum = 0.0;
    for (int y = -r; y <= r; ++y)
        for (int x = -r; x <= r; ++x) {
            const double v = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma)) /
                             (2.0 * M_PI * sigma * sigma);
            k[static_cast<std::size_t>(y + r) * side + (x + r)] = v;
            sum += v;
        }
    for (double& v : k) v /= sum;  // renormalized after discretization
    if (radiusOut) *radiusOut = r;
    return k;
}

Image gaussianBlur(const Image& img, double sigma) {
    int r = 0;
    const std::vector<double> k = gaussianKernel2d(sigma, &r);
    const int side = 2 * r + 1;
    Image out(img.channels, img.height, img.width);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                double acc = 0.0;
                for (int ky = -r; ky <= r; ++ky)
                    for (int kx = -r; kx <= r; ++kx) {
                        const int iy = std::clamp(y + ky, 0, img.height - 1);
                        const int ix = std::clamp(x + kx, 0, img.width - 1);
                        acc += k[static_cast<std::size_t>(ky + r) * side +
                                 (kx + r)] *
                               img.at(c, iy, ix);
                    }
                out.at(c, y, x) = static_cast<float>(acc);
            }
    return out;
}

// ------------------------------------------------------------- recovery

void trainRecovery(const std::vector<std::pair<Image, Image>>& pairs,
                   RecoveryModel& model, const TrainConfig& cfg,
                   std::vector<double>* epochLoss) {
    validateTrainConfig(cfg);
    if (pairs.empty()) throw DomainError("trainRecovery: zero pairs");
    for (const auto& [target, source] : pairs)
        if (!target.sameShape(source) || target.height != model.resolution)
            throw DomainError("trainRecovery: pair resolution mismatch");
    auto params = model.net.params();
    nn::Adam opt(cfg.learning_rate);
    Rng rng(cfg.seed + 3);
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        for (std::size_t oi : order) {
            nn::EncoderDecoder::Cache cc;
            Image pred = model.net.forward(pairs[oi].second, &cc);
            Image g;
            const double s = ssimWithGrad(pred, pairs[oi].first, &g);
            const double loss = 1.0 - s;
            if (!std::isfinite(loss)) throw TrainingError("trainRecovery: NaN loss");
            sum += loss;
            for (float& v : g.data) v = -v;  // d(1 - ssim)/dpred
            nn::zeroGrad(params);
            model.net.backward(cc, g);
            opt.step(params);
        }
        if (epochLoss) epochLoss->push_back(sum / pairs.size());
    }
}

std::vector<Image> recover(const RecoveryModel& model,
                           const std::vector<Image>& crops,
                           Variant sourceVariant) {
    if (sourceVariant != model.source)
        throw ContractError("recover: model was trained on variant '" +
                            variantName(model.source) + "', got '" +
                            variantName(sourceVariant) + "'");
    std::vector<Image> out;
    out.reserve(crops.size());
    for (const auto& img : crops) {
        if (img.height != model.resolution || img.width != model.resolution)
            throw DomainError("recover: input resolution mismatch");
        out.push_back(clamp01(model.net.forward(img)));
    }
    return out;
}

std::vector<std::pair<FaceRecord, FaceRecord>> alignVariantPairs(
    const DatasetManifest& original, const DatasetManifest& derived) {
    std::map<std::tuple<std::string, int, int>, FaceRecord> lookup;
    for (const auto& r : derived.records)
        lookup[{r.video_id, r.track_id, r.frame_index}] = r;
    std::vector<std::pair<FaceRecord, FaceRecord>> pairs;
    for (const auto& r : original.records) {
        auto it = lookup.find({r.video_id, r.track_id, r.frame_index});
        if (it == lookup.end())
            throw DomainError("alignVariantPairs: no " +
                              variantName(derived.variant) + " counterpart for " +
                              r.crop_ref);
        pairs.emplace_back(r, it->second);
    }
    return pairs;
}

// ------------------------------------------------------------- cases

static Variant ruleVariant(int rule) {
    switch (rule) {
        case 4: return Variant::pp;
        case 5: return Variant::dpp;
        case 6: return Variant::pp_recovered;
        case 7: return Variant::dpp_recovered;
    }
    throw DomainError("ruleVariant: rule has no derived variant");
}

std::vector<ValidationCase> generateCases(
    const std::map<Variant, DatasetManifest>& manifests,
    const CaseGenOptions& opts) {
    auto itOrg = manifests.find(Variant::original);
    if (itOrg == manifests.end())
        throw CapacityError("generateCases: missing variant original");
    const DatasetManifest& org = itOrg->second;
    for (Variant v : {Variant::pp, Variant::dpp, Variant::pp_recovered,
                      Variant::dpp_recovered})
        if (!manifests.count(v))
            throw CapacityError("generateCases: missing variant " +
                                variantName(v));

    std::vector<ValidationCase> cases;

    // rules 4-7: one case per tracked face, pairing the original crop with
    // its same-ID counterpart in the rule's variant
    for (int rule = 4; rule <= 7; ++rule) {
        const DatasetManifest& derived = manifests.at(ruleVariant(rule));
        std::map<std::tuple<std::string, int, int>, const FaceRecord*> lookup;
        for (const auto& r : derived.records)
            lookup[{r.video_id, r.track_id, r.frame_index}] = &r;
        for (const auto& r : org.records) {
            auto it = lookup.find({r.video_id, r.track_id, r.frame_index});
            if (it == lookup.end())
                throw CapacityError("generateCases: variant " +
                                    variantName(derived.variant) +
                                    " misses a counterpart for " + r.crop_ref);
            cases.push_back({rule, r, *it->second, 0});
        }
    }

    // rule 3: consecutive distinct crops within a track, GT 1
    std::map<std::pair<std::string, int>, std::vector<const FaceRecord*>> tracks;
    for (const auto& r : org.records)
        tracks[{r.video_id, r.track_id}].push_back(&r);
    for (auto& [key, recs] : tracks) {
        std::sort(recs.begin(), recs.end(),
                  [](const FaceRecord* a, const FaceRecord* b) {
                      return a->frame_index < b->frame_index;
                  });
        for (std::size_t i = 0; i + 1 < recs.size(); ++i)
            cases.push_back({3, *recs[i], *recs[i + 1], 1});
    }

    // rules 1-2: seeded GT-0 samples up to the quota
    const long quota = opts.rule12_quota >= 0
                           ? opts.rule12_quota
                           : static_cast<long>(org.records.size());
    Rng rng(opts.seed);

    // rule 1: same video, different track
    {
        std::vector<std::pair<const FaceRecord*, const FaceRecord*>> pool;
        std::map<std::string, std::vector<const FaceRecord*>> byVideo;
        for (const auto& r : org.records) byVideo[r.video_id].push_back(&r);
        for (const auto& [vid, recs] : byVideo)
            for (std::size_t i = 0; i < recs.size(); ++i)
                for (std::size_t j = i + 1; j < recs.size(); ++j)
                    if (recs[i]->track_id != recs[j]->track_id)
                        pool.emplace_back(recs[i], recs[j]);
        std::shuffle(pool.begin(), pool.end(), rng);
        for (long i = 0; i < quota && i < static_cast<long>(pool.size()); ++i)
            cases.push_back({1, *pool[i].first, *pool[i].second, 0});
    }

    // rule 2: two different original videos
    {
        const auto& recs = org.records;
        const long n = static_cast<long>(recs.size());
        long emitted = 0, tries = 0;
        while (emitted < quota && tries < quota * 50 && n > 1) {
            ++tries;
            const long i = std::uniform_int_distribution<long>(0, n - 1)(rng);
            const long j = std::uniform_int_distribution<long>(0, n - 1)(rng);
            if (recs[i].video_id == recs[j].video_id) continue;
            cases.push_back({2, recs[i], recs[j], 0});
            ++emitted;
        }
    }

    return cases;
}

void saveCases(const std::vector<ValidationCase>& cases, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("saveCases: cannot open " + path);
    for (const auto& c : cases) {
        ordered_json j;
        j["rule_id"] = c.rule_id;
        j["left"] = c.left.crop_ref;
        j["right"] = c.right.crop_ref;
        j["ground_truth"] = c.ground_truth;
        f << j.dump() << "\n";
    }
}

std::vector<ValidationCase> loadCases(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("loadCases: cannot open " + path);
    std::vector<ValidationCase> cases;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto j = ordered_json::parse(line);
        ValidationCase c;
        c.rule_id = j.at("rule_id").get<int>();
        c.left.crop_ref = j.at("left").get<std::string>();
        c.right.crop_ref = j.at("right").get<std::string>();
        c.ground_truth = j.at("ground_truth").get<int>();
        cases.push_back(c);
    }
    return cases;
}

// ------------------------------------------------------------- matching

int matchCrops(const Image& left, const Image& right,
               const IdentityEmbedder& embedder, double threshold) {
    const std::vector<double> a = embedder.embed(left);
    const std::vector<double> b = embedder.embed(right);
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return dot >= threshold ? 1 : 0;
}

double matcherAccuracy(const std::vector<ValidationCase>& cases,
                       const std::vector<int>& predictions) {
    if (cases.size() != predictions.size())
        throw DomainError("matcherAccuracy: prediction count mismatch");
    if (cases.empty()) throw DomainError("matcherAccuracy: no cases");
    long correct = 0;
    for (std::size_t i = 0; i < cases.size(); ++i)
        if (predictions[i] == cases[i].ground_truth) ++correct;
    return static_cast<double>(correct) / cases.size();
}

PPreResult pPre(const std::vector<ValidationCase>& cases,
                const std::vector<int>& predictions) {
    if (cases.size() != predictions.size())
        throw DomainError("pPre: prediction count mismatch");
    PPreResult res;
    long total = 0, correct = 0;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const int rule = cases[i].rule_id;
        if (rule < 4 || rule > 7)
            throw DomainError("pPre: case with rule " + std::to_string(rule) +
                              " present; only rules 4-7 are allowed");
        auto& rs = res.per_rule[rule];
        ++rs.cases;
        ++total;
        if (predictions[i] == 0) {  // GT is 0 for every rule 4-7 case
            ++rs.correct;
            ++correct;
        }
    }
    res.p_pre = total > 0 ? static_cast<double>(correct) / total : 0.0;
    return res;
}

// ------------------------------------------------------------- report

std::string privacyReportToJson(const PrivacyReport& r) {
    ordered_json j;
    ordered_json rules = ordered_json::object();
    for (const auto& [rule, rs] : r.per_rule) {
        ordered_json e;
        e["cases"] = rs.cases;
        e["correct"] = rs.correct;
        rules[std::to_string(rule)] = e;
    }
    j["per_rule"] = rules;
    j["matcher_accuracy_r13"] = r.matcher_accuracy_r13;
    j["p_pre"] = r.p_pre;
    auto dumpMap = [](const std::map<std::string, double>& m) {
        ordered_json o = ordered_json::object();
        for (const auto& [k, v] : m) {
            if (std::isinf(v))
                o[k] = "inf";
            else
                o[k] = v;
        }
        return o;
    };
    j["mean_ssim"] = dumpMap(r.mean_ssim);
    j["mean_psnr"] = dumpMap(r.mean_psnr);
    j["mean_ied"] = dumpMap(r.mean_ied);
    return j.dump(2);
}

PrivacyReport privacyReportFromJson(const std::string& json) {
    auto j = ordered_json::parse(json);
    PrivacyReport r;
    for (const auto& [key, val] : j.at("per_rule").items()) {
        RuleStats rs;
        rs.cases = val.at("cases").get<long>();
        rs.correct = val.at("correct").get<long>();
        r.per_rule[std::stoi(key)] = rs;
    }
    r.matcher_accuracy_r13 = j.at("matcher_accuracy_r13").get<double>();
    r.p_pre = j.at("p_pre").get<double>();
    auto readMap = [](const ordered_json& o) {
        std::map<std::string, double> m;
        for (const auto& [k, v] : o.items())
            m[k] = v.is_string() ? std::numeric_limits<double>::infinity()
                                 : v.get<double>();
        return m;
    };
    r.mean_ssim = readMap(j.at("mean_ssim"));
    r.mean_psnr = readMap(j.at("mean_psnr"));
    r.mean_ied = readMap(j.at("mean_ied"));
    return r;
}

}  // namespace facepriv
