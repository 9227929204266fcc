#include "facepriv/denoise_and_fer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace facepriv {

using ordered_json = nlohmann::ordered_json;

void validateFerReport(const FerReport& r) {
    const int e = static_cast<int>(r.classes.size());
    if (static_cast<int>(r.per_class.size()) != e ||
        static_cast<int>(r.confusion.size()) != e)
        throw ValidationError("FerReport: size mismatch with class list");
    long total = 0, diag = 0;
    for (int i = 0; i < e; ++i) {
        if (static_cast<int>(r.confusion[i].size()) != e)
            throw ValidationError("FerReport: confusion matrix is not square");
        long rowSum = 0;
        for (int j = 0; j < e; ++j) {
            rowSum += r.confusion[i][j];
            total += r.confusion[i][j];
        }
        diag += r.confusion[i][i];
        if (rowSum == 0) {
            if (r.per_class[i].has_value())
                throw ValidationError("FerReport: class '" + r.classes[i] +
                                      "' absent but has an accuracy value");
        } else {
            if (!r.per_class[i].has_value() ||
                std::fabs(*r.per_class[i] -
                          static_cast<double>(r.confusion[i][i]) / rowSum) > 1e-9)
                throw ValidationError("FerReport: per-class accuracy for '" +
                                      r.classes[i] +
                                      "' disagrees with the confusion matrix");
        }
    }
    if (total != r.total)
        throw ValidationError("FerReport: total disagrees with confusion matrix");
    if (total > 0 &&
        std::fabs(r.overall - static_cast<double>(diag) / total) > 1e-9)
        throw ValidationError("FerReport: overall != trace/total");
}

std::string ferReportToJson(const FerReport& r) {
    ordered_json j;
    j["classes"] = r.classes;
    ordered_json pc = ordered_json::array();
    for (const auto& v : r.per_class)
        pc.push_back(v ? ordered_json(*v) : ordered_json(nullptr));
    j["per_class_accuracy"] = pc;
    j["overall_accuracy"] = r.overall;
    j["confusion"] = r.confusion;
    j["total"] = r.total;
    return j.dump(2);
}

FerReport ferReportFromJson(const std::string& json) {
    auto j = ordered_json::parse(json);
    FerReport r;
    r.classes = j.at("classes").get<std::vector<std::string>>();
    for (const auto& v : j.at("per_class_accuracy"))
        r.per_class.push_back(v.is_null() ? std::optional<double>{}
                                          : std::optional<double>(v.get<double>()));
    r.overall = j.at("overall_accuracy").get<double>();
    r.confusion = j.at("confusion").get<std::vector<std::vector<long>>>();
    r.total = j.at("total").get<long>();
    validateFerReport(r);
    return r;
}

std::string confusionCsv(const FerReport& r) {
    std::ostringstream os;
    os << "truth\\pred";
    for (const auto& c : r.classes) os << "," << c;
    os << "\n";
    for (std::size_t i = 0; i < r.classes.size(); ++i) {
        os << r.classes[i];
        for (long v : r.confusion[i]) os << "," << v;
        os << "\n";
    }
    return os.str();
}

// ------------------------------------------------------------- training

void trainExpressionClassifier(const std::vector<Image>& images,
                               const std::vector<int>& labels,
                               FrameExpressionModel& model,
                               const TrainConfig& cfg,
                               std::vector<double>* epochLoss) {
    validateTrainConfig(cfg);
    if (images.empty()) throw DomainError("trainExpressionClassifier: empty set");
    if (images.size() != labels.size())
        throw DomainError("trainExpressionClassifier: label count mismatch");
    const int e = static_cast<int>(model.classes.size());
    for (int l : labels)
        if (l < 0 || l >= e)
            throw DomainError("trainExpressionClassifier: label out of range");
    auto params = model.net.params();
    nn::Adam opt(cfg.learning_rate);
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(images.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        for (std::size_t oi : order) {
            nn::FrameClassifier::Cache cc;
            auto logits = model.net.forward(images[oi], &cc);
            std::vector<float> dlogits;
            const double loss = nn::softmaxCrossEntropy(logits, labels[oi], &dlogits);
            if (!std::isfinite(loss))
                throw TrainingError("trainExpressionClassifier: NaN loss");
            sum += loss;
            nn::zeroGrad(params);
            model.net.backward(cc, dlogits);
            opt.step(params);
        }
        if (epochLoss) epochLoss->push_back(sum / images.size());
    }
}

double frameAccuracy(const FrameExpressionModel& model,
                     const std::vector<Image>& images,
                     const std::vector<int>& labels) {
    if (images.empty()) throw DomainError("frameAccuracy: empty set");
    long correct = 0;
    for (std::size_t i = 0; i < images.size(); ++i)
        if (nn::argmax(model.net.forward(images[i])) == labels[i]) ++correct;
    return static_cast<double>(correct) / images.size();
}

void trainDenoiser(const std::vector<Image>& ppImages,
                   const std::vector<int>& labels, DenoiserModel& denoiser,
                   const FrameExpressionModel& fexp, const TrainConfig& cfg,
                   std::vector<double>* epochLoss) {
    validateTrainConfig(cfg);
    if (!fexp.frozen)
        throw ContractError("trainDenoiser: expression classifier must be frozen");
    if (ppImages.empty()) throw DomainError("trainDenoiser: empty image set");
    if (ppImages.size() != labels.size())
        throw DomainError("trainDenoiser: label count mismatch");
    const int e = static_cast<int>(fexp.classes.size());
    for (int l : labels)
        if (l < 0 || l >= e)
            throw DomainError("trainDenoiser: label outside the class set");
    const std::uint64_t fexpBefore = fexp.checksum();

    auto params = denoiser.net.params();
    nn::Adam opt(cfg.learning_rate);
    Rng rng(cfg.seed + 1);
    std::vector<std::size_t> order(ppImages.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        for (std::size_t oi : order) {
            nn::EncoderDecoder::Cache dc;
            Image denoised = denoiser.net.forward(ppImages[oi], &dc);
            nn::FrameClassifier::Cache cc;
            auto logits = fexp.net.forward(denoised, &cc);
            std::vector<float> dlogits;
            const double loss = nn::softmaxCrossEntropy(logits, labels[oi], &dlogits);
            if (!std::isfinite(loss)) throw TrainingError("trainDenoiser: NaN loss");
            sum += loss;
            Image dImg = fexp.net.inputGrad(cc, dlogits);
            nn::zeroGrad(params);
            denoiser.net.backward(dc, dImg);
            opt.step(params);
        }
        if (epochLoss) epochLoss->push_back(sum / ppImages.size());
    }
    if (fexp.checksum() != fexpBefore)
        throw ContractError("trainDenoiser: frozen classifier changed");
}

std::vector<Image> denoise(const DenoiserModel& denoiser,
                           const std::vector<Image>& images) {
    std::vector<Image> out;
    out.reserve(images.size());
    for (const auto& img : images) {
        if (img.height != denoiser.resolution || img.width != denoiser.resolution)
            throw DomainError("denoise: input resolution mismatch");
        out.push_back(clamp01(denoiser.net.forward(img)));
    }
    return out;
}

void trainFer(const std::vector<Clip>& clips, const std::vector<int>& labels,
              VideoExpressionModel& model, const TrainConfig& cfg,
              std::vector<double>* epochLoss) {
    validateTrainConfig(cfg);
    if (clips.empty()) throw DomainError("trainFer: empty dataset");
    if (clips.size() != labels.size())
        throw DomainError("trainFer: label count mismatch");
    std::vector<nn::Volume> vols;
    vols.reserve(clips.size());
    for (const auto& c : clips) vols.push_back(nn::clipToVolume(c));
    for (std::size_t i = 1; i < vols.size(); ++i)
        if (vols[i].frames != vols[0].frames || vols[i].height != vols[0].height ||
            vols[i].width != vols[0].width)
            throw DomainError("trainFer: clips differ in frame count or size");
    auto params = model.net.params();
    nn::Adam opt(cfg.learning_rate);
    Rng rng(cfg.seed + 2);
    std::vector<std::size_t> order(clips.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        for (std::size_t oi : order) {
            nn::VideoClassifier::Cache cc;
            auto logits = model.net.forward(vols[oi], &cc);
            std::vector<float> dlogits;
            const double loss = nn::softmaxCrossEntropy(logits, labels[oi], &dlogits);
            if (!std::isfinite(loss)) throw TrainingError("trainFer: NaN loss");
            sum += loss;
            nn::zeroGrad(params);
            model.net.backward(cc, dlogits);
            opt.step(params);
        }
        if (epochLoss) epochLoss->push_back(sum / clips.size());
    }
}

FerReport ferReportFromPredictions(const std::vector<std::string>& classes,
                                   const std::vector<int>& truth,
                                   const std::vector<int>& predictions) {
    if (truth.size() != predictions.size())
        throw DomainError("ferReportFromPredictions: length mismatch");
    const int e = static_cast<int>(classes.size());
    FerReport r;
    r.classes = classes;
    r.confusion.assign(e, std::vector<long>(e, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= e || predictions[i] < 0 ||
            predictions[i] >= e)
            throw DomainError("ferReportFromPredictions: label out of range");
        ++r.confusion[truth[i]][predictions[i]];
    }
    long diag = 0;
    r.total = static_cast<long>(truth.size());
    for (int i = 0; i < e; ++i) {
        long rowSum = 0;
        for (int j = 0; j < e; ++j) rowSum += r.confusion[i][j];
        diag += r.confusion[i][i];
        if (rowSum == 0)
            r.per_class.push_back(std::nullopt);
        else
            r.per_class.push_back(static_cast<double>(r.confusion[i][i]) / rowSum);
    }
    r.overall = r.total > 0 ? static_cast<double>(diag) / r.total : 0.0;
    validateFerReport(r);
    return r;
}

FerReport evaluateFer(const VideoExpressionModel& model,
                      const std::vector<Clip>& clips,
                      const std::vector<int>& labels) {
    if (clips.empty()) throw DomainError("evaluateFer: empty test set");
    if (clips.size() != labels.size())
        throw DomainError("evaluateFer: label count mismatch");
    const int e = static_cast<int>(model.classes.size());
    std::vector<int> preds;
    preds.reserve(clips.size());
    for (std::size_t i = 0; i < clips.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= e)
            throw DomainError("evaluateFer: label outside the model class set");
        preds.push_back(nn::argmax(model.net.forward(nn::clipToVolume(clips[i]))));
    }
    return ferReportFromPredictions(model.classes, labels, preds);
}

}  // namespace facepriv
