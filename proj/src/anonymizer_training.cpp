#include "facepriv/anonymizer_training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace facepriv {

void validateTrainConfig(const TrainConfig& cfg) {
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
        throw DomainError("TrainConfig: alpha must lie in (0,1)");
    if (!(cfg.triplet_margin > 0.0))
        throw DomainError("TrainConfig: triplet_margin must be > 0");
    if (cfg.epochs < 0) throw DomainError("TrainConfig: epochs must be >= 0");
    if (cfg.batch_k < 1) throw DomainError("TrainConfig: batch_k must be >= 1");
}

// ------------------------------------------------------ ToyLinearEmbedder

ToyLinearEmbedder::ToyLinearEmbedder(int dim, int channels, int height,
                                     int width, std::uint32_t seed)
    : dim_(dim), channels_(channels), height_(height), width_(width),
      weights_(static_cast<std::size_t>(dim) * channels * height * width) {
    Rng rng(seed);
    std::normal_distribution<float> d(0.0f, 1.0f / std::sqrt(static_cast<float>(
                                                 channels * height * width)));
    for (float& w : weights_) w = d(rng);
}

std::vector<double> ToyLinearEmbedder::project(const Image& x) const {
    if (x.channels != channels_ || x.height != height_ || x.width != width_)
        throw DomainError("ToyLinearEmbedder: input resolution mismatch");
    const std::size_t in = x.data.size();
    std::vector<double> u(dim_, 0.0);
    for (int o = 0; o < dim_; ++o) {
        const float* wp = &weights_[static_cast<std::size_t>(o) * in];
        double acc = 0.0;
        for (std::size_t i = 0; i < in; ++i)
            acc += wp[i] * (x.data[i] - 0.5f);  // centered pixels
        u[o] = acc;
    }
    return u;
}

std::vector<double> ToyLinearEmbedder::embed(const Image& x) const {
    std::vector<double> u = project(x);
    double n = 0.0;
    for (double v : u) n += v * v;
    n = std::sqrt(n);
    if (n < 1e-12) {
        // degenerate constant image; emit a fixed unit vector
        std::vector<double> e(dim_, 0.0);
        e[0] = 1.0;
        return e;
    }
    for (double& v : u) v /= n;
    return u;
}

Image ToyLinearEmbedder::embedBackward(const Image& x,
                                       const std::vector<double>& dEmb) const {
    std::vector<double> u = project(x);
    double n = 0.0;
    for (double v : u) n += v * v;
    n = std::sqrt(n);
    Image gx(x.channels, x.height, x.width);
    if (n < 1e-12) return gx;
    // e = u/n; dL/du = (dEmb - (dEmb . e) e) / n
    double dot = 0.0;
    for (int i = 0; i < dim_; ++i) dot += dEmb[i] * u[i] / n;
    std::vector<double> du(dim_);
    for (int i = 0; i < dim_; ++i) du[i] = (dEmb[i] - dot * u[i] / n) / n;
    const std::size_t in = x.data.size();
    for (int o = 0; o < dim_; ++o) {
        const float* wp = &weights_[static_cast<std::size_t>(o) * in];
        for (std::size_t i = 0; i < in; ++i)
            gx.data[i] += static_cast<float>(du[o] * wp[i]);
    }
    return gx;
}

std::uint64_t ToyLinearEmbedder::checksum() const {
    return fnv1a(weights_.data(), weights_.size() * sizeof(float));
}

// ------------------------------------------------------------- losses

static double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

static double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

static double cosine(const std::vector<double>& u, const std::vector<double>& v) {
    return dot(u, v) / (norm2(u) * norm2(v));
}

// accumulate d(cos(u,v))/du and /dv scaled by g
static void cosineGrad(const std::vector<double>& u, const std::vector<double>& v,
                       double g, std::vector<double>& gu,
                       std::vector<double>& gv) {
    const double nu = norm2(u), nv = norm2(v), d = dot(u, v);
    for (std::size_t i = 0; i < u.size(); ++i) {
        gu[i] += g * (v[i] / (nu * nv) - d * u[i] / (nu * nu * nu * nv));
        gv[i] += g * (u[i] / (nu * nv) - d * v[i] / (nv * nv * nv * nu));
    }
}

std::vector<double> cosineRow(const std::vector<std::vector<double>>& features) {
    if (features.size() < 4 || (features.size() - 1) % 3 != 0)
        throw DomainError("cosineRow: feature count must be 3n+1 with n >= 1");
    std::vector<double> row(features.size() - 1);
    for (std::size_t j = 0; j + 1 < features.size(); ++j)
        row[j] = cosine(features[j + 1], features[0]);
    return row;
}

LossParts combinedLoss(const std::vector<std::vector<double>>& features,
                       const std::vector<int>& labels, const TrainConfig& cfg,
                       std::vector<std::vector<double>>* grad) {
    validateTrainConfig(cfg);
    if (features.size() < 4 || (features.size() - 1) % 3 != 0)
        throw DomainError("combinedLoss: feature count must be 3n+1 with n >= 1");
    const int n = static_cast<int>((features.size() - 1) / 3);
    if (labels.size() != static_cast<std::size_t>(3) * n)
        throw DomainError("combinedLoss: labels length must be 3n");
    const std::size_t D = features[0].size();
    for (const auto& f : features)
        if (f.size() != D)
            throw DomainError("combinedLoss: inconsistent embedding dimension");

    if (grad) {
        grad->assign(features.size(), std::vector<double>(D, 0.0));
    }

    const double eps = 1e-7;
    LossParts parts;

    // BCE over (1 + cos(f[j+1], f[0])) / 2 against the label bits
    const double bceScale = (1.0 - cfg.alpha) / (3.0 * n);
    for (int j = 0; j < 3 * n; ++j) {
        const double c = cosine(features[j + 1], features[0]);
        double p = (1.0 + c) / 2.0;
        p = std::min(1.0 - eps, std::max(eps, p));
        const double y = labels[j];
        parts.l_bce += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
        if (grad) {
            const double dLdp = (-y / p + (1.0 - y) / (1.0 - p));
            cosineGrad(features[j + 1], features[0], bceScale * dLdp * 0.5,
                       (*grad)[j + 1], (*grad)[0]);
        }
    }
    parts.l_bce /= 3.0 * n;

    // margin triplet loss in cosine distance: hinge(cos(a,n) - cos(a,p) + m)
    const double triScale = cfg.alpha / n;
    for (int t = 0; t < n; ++t) {
        const auto& a = features[static_cast<std::size_t>(3) * t + 1];
        const auto& p = features[static_cast<std::size_t>(3) * t + 2];
        const auto& g = features[static_cast<std::size_t>(3) * t + 3];
        const double h = cosine(a, g) - cosine(a, p) + cfg.triplet_margin;
        if (h > 0.0) {
            parts.l_tri += h;
            if (grad) {
                auto& ga = (*grad)[static_cast<std::size_t>(3) * t + 1];
                auto& gp = (*grad)[static_cast<std::size_t>(3) * t + 2];
                auto& gn = (*grad)[static_cast<std::size_t>(3) * t + 3];
                cosineGrad(a, g, triScale, ga, gn);
                cosineGrad(a, p, -triScale, ga, gp);
            }
        }
    }
    parts.l_tri /= n;

    parts.total = cfg.alpha * parts.l_tri + (1.0 - cfg.alpha) * parts.l_bce;
    if (!std::isfinite(parts.total))
        throw TrainingError("combinedLoss: non-finite loss");
    return parts;
}

// ------------------------------------------------------------- training

void pretrainReconstruction(AnonymizerModel& model,
                            const std::vector<Image>& crops,
                            const TrainConfig& cfg,
                            std::vector<double>* epochL1) {
    validateTrainConfig(cfg);
    if (crops.empty())
        throw DomainError("pretrainReconstruction: empty crop set");
    auto params = model.net.params();
    nn::Adam opt(cfg.learning_rate);
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(crops.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sumL1 = 0.0;
        for (std::size_t oi : order) {
            const Image& x = crops[oi];
            nn::EncoderDecoder::Cache cc;
            Image y = model.net.forward(x, &cc);
            Image gy(y.channels, y.height, y.width);
            double l1 = 0.0;
            const double invN = 1.0 / static_cast<double>(y.data.size());
            for (std::size_t i = 0; i < y.data.size(); ++i) {
                const double d = y.data[i] - x.data[i];
                l1 += std::fabs(d);
                gy.data[i] = static_cast<float>((d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0) *
                                                invN);
            }
            l1 *= invN;
            if (!std::isfinite(l1))
                throw TrainingError("pretrainReconstruction: NaN loss");
            sumL1 += l1;
            nn::zeroGrad(params);
            model.net.backward(cc, gy);
            opt.step(params);
        }
        if (epochL1) epochL1->push_back(sumL1 / static_cast<double>(crops.size()));
    }
}

void trainFpp(const std::function<std::vector<Image>(int)>& batchProvider,
              int steps, AnonymizerModel& fpp, const IdentityEmbedder& fe,
              const TrainConfig& cfg, std::vector<TrainLogEntry>* log) {
    validateTrainConfig(cfg);
    if (!fe.frozen)
        throw ContractError("trainFpp: identity embedder must be frozen");
    auto params = fpp.net.params();
    nn::Adam opt(cfg.learning_rate);
    const std::uint64_t feBefore = fe.checksum();

    for (int step = 0; step < steps; ++step) {
        std::vector<Image> batch = batchProvider(step);
        if (batch.size() < 4 || (batch.size() - 1) % 3 != 0)
            throw DomainError("trainFpp: batch size must be 3n+1");
        const int n = static_cast<int>((batch.size() - 1) / 3);
        const std::vector<int> labels = [&] {
            std::vector<int> b(static_cast<std::size_t>(3) * n, 1);
            b[0] = 0;
            b[2] = 0;
            return b;
        }();

        std::vector<nn::EncoderDecoder::Cache> caches(batch.size());
        std::vector<Image> outputs(batch.size());
        std::vector<std::vector<double>> feats(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            outputs[i] = fpp.net.forward(batch[i], &caches[i]);
            feats[i] = fe.embed(outputs[i]);
        }
        std::vector<std::vector<double>> dfeats;
        LossParts parts = combinedLoss(feats, labels, cfg, &dfeats);
        if (!std::isfinite(parts.total))
            throw TrainingError("trainFpp: NaN loss at batch " +
                                std::to_string(step));
        nn::zeroGrad(params);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            Image dOut = fe.embedBackward(outputs[i], dfeats[i]);
            fpp.net.backward(caches[i], dOut);
        }
        opt.step(params);
        if (log) log->push_back({step, parts.l_tri, parts.l_bce, parts.total});
    }
    if (fe.checksum() != feBefore)
        throw ContractError("trainFpp: frozen embedder changed during training");
}

std::vector<Image> anonymize(const AnonymizerModel& fpp,
                             const std::vector<Image>& images) {
    std::vector<Image> out;
    out.reserve(images.size());
    for (const auto& img : images) {
        if (img.height != fpp.resolution || img.width != fpp.resolution)
            throw DomainError("anonymize: input resolution " +
                              std::to_string(img.height) + "x" +
                              std::to_string(img.width) + " != model " +
                              std::to_string(fpp.resolution));
        out.push_back(clamp01(fpp.net.forward(img)));
    }
    return out;
}

// ------------------------------------------------------------ checkpoints

static constexpr char kMagic[] = "FPCKPT1\n";

void saveCheckpoint(const std::string& path, const std::string& arch,
                    std::uint32_t seed, const std::string& metaJson,
                    const std::vector<nn::ParamRef>& params) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("saveCheckpoint: cannot open " + path);
    nlohmann::ordered_json meta;
    meta["arch"] = arch;
    meta["seed"] = seed;
    meta["config"] =
        metaJson.empty() ? nlohmann::ordered_json(nullptr)
                         : nlohmann::ordered_json::parse(metaJson);
    const std::string m = meta.dump();
    f.write(kMagic, sizeof(kMagic) - 1);
    std::uint64_t len = m.size();
    f.write(reinterpret_cast<const char*>(&len), sizeof(len));
    f.write(m.data(), static_cast<std::streamsize>(m.size()));
    nn::saveParams(params, f);
    if (!f) throw IoError("saveCheckpoint: write failed for " + path);
}

std::string loadCheckpoint(const std::string& path, const std::string& arch,
                           std::vector<nn::ParamRef> params) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("loadCheckpoint: cannot open " + path);
    char magic[sizeof(kMagic) - 1];
    f.read(magic, sizeof(magic));
    if (!f || std::string(magic, sizeof(magic)) != std::string(kMagic).substr(0, sizeof(magic)))
        throw ParseError("loadCheckpoint: bad magic in " + path);
    std::uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string m(len, '\0');
    f.read(m.data(), static_cast<std::streamsize>(len));
    if (!f) throw ParseError("loadCheckpoint: truncated metadata in " + path);
    auto meta = nlohmann::ordered_json::parse(m);
    if (meta.at("arch").get<std::string>() != arch)
        throw ContractError("loadCheckpoint: checkpoint arch '" +
                            meta.at("arch").get<std::string>() +
                            "' does not match expected '" + arch + "'");
    nn::loadParams(params, f);
    return m;
}

}  // namespace facepriv
