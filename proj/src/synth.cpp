#include "facepriv/synth.hpp"

#include <cmath>

namespace facepriv {

static const char* kExpressionNames[] = {"happy", "sad", "surprise", "angry",
                                         "fear"};

std::string expressionName(int idx) {
    if (idx < 0) throw DomainError("expressionName: negative index");
    const int n = static_cast<int>(sizeof(kExpressionNames) /
                                   sizeof(kExpressionNames[0]));
    if (idx < n) return kExpressionNames[idx];
    return "expr" + std::to_string(idx);
}

// identity texture: zero-mean sum of two oriented sinusoids per channel
static void paintIdentity(Image& img, int identity) {
    Rng rng(1000u + 7919u * static_cast<std::uint32_t>(identity));
    std::uniform_real_distribution<float> freq(1.5f, 4.5f);
    std::uniform_real_distribution<float> phase(0.0f, 6.2831853f);
    const float S = static_cast<float>(img.width);
    for (int c = 0; c < img.channels; ++c) {
        const float f1 = freq(rng), f2 = freq(rng);
        const float th1 = phase(rng), th2 = phase(rng);
        const float p1 = phase(rng), p2 = phase(rng);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                const float u = x / S, v = y / S;
                const float a1 = 6.2831853f * f1 *
                                 (u * std::cos(th1) + v * std::sin(th1));
                const float a2 = 6.2831853f * f2 *
                                 (u * std::cos(th2) + v * std::sin(th2));
                img.at(c, y, x) = 0.5f + 0.22f * std::sin(a1 + p1) +
                                  0.22f * std::sin(a2 + p2);
            }
    }
}

static void blendPixel(Image& img, int y, int x, float target, float alpha) {
    if (y < 0 || y >= img.height || x < 0 || x >= img.width) return;
    for (int c = 0; c < img.channels; ++c)
        img.at(c, y, x) = (1.0f - alpha) * img.at(c, y, x) + alpha * target;
}

// expression: a strong localized "mouth" mark in the lower face band
static void paintExpression(Image& img, int exprIdx, int dy, int dx) {
    const int S = img.width;
    const int thick = std::max(1, S / 16);
    const int cy = static_cast<int>(0.72f * S) + dy;
    const int cx = S / 2 + dx;
    const int half = static_cast<int>(0.25f * S);
    const float alpha = 0.9f;
    switch (exprIdx % 5) {
        case 0:  // bright upward arc (smile)
            for (int x = cx - half; x <= cx + half; ++x) {
                const float t = static_cast<float>(x - cx) / half;
                const int y = cy + static_cast<int>(0.12f * S * (t * t - 0.5f));
                for (int k = 0; k < thick; ++k) blendPixel(img, y + k, x, 0.95f, alpha);
            }
            break;
        case 1:  // dark downward arc (frown)
            for (int x = cx - half; x <= cx + half; ++x) {
                const float t = static_cast<float>(x - cx) / half;
                const int y = cy - static_cast<int>(0.12f * S * (t * t - 0.5f));
                for (int k = 0; k < thick; ++k) blendPixel(img, y + k, x, 0.05f, alpha);
            }
            break;
        case 2: {  // dark filled ellipse (open mouth)
            const int ry = std::max(2, S / 8), rx = std::max(2, S / 10);
            for (int y = cy - ry; y <= cy + ry; ++y)
                for (int x = cx - rx; x <= cx + rx; ++x) {
                    const float ey = static_cast<float>(y - cy) / ry;
                    const float ex = static_cast<float>(x - cx) / rx;
                    if (ey * ey + ex * ex <= 1.0f) blendPixel(img, y, x, 0.05f, alpha);
                }
            break;
        }
        case 3:  // bright X cross
            for (int d = -half; d <= half; ++d) {
                for (int k = 0; k < thick; ++k) {
                    blendPixel(img, cy + d / 2 + k, cx + d, 0.95f, alpha);
                    blendPixel(img, cy - d / 2 + k, cx + d, 0.95f, alpha);
                }
            }
            break;
        default:  // dark horizontal bar
            for (int x = cx - half; x <= cx + half; ++x)
                for (int k = 0; k < thick * 2; ++k)
                    blendPixel(img, cy + k - thick, x, 0.05f, alpha);
            break;
    }
}

Image synthFace(int identity, int expressionIdx, int cropSize, Rng& jitterRng) {
    if (cropSize < 16) throw DomainError("synthFace: crop size below 16");
    Image img(3, cropSize, cropSize);
    paintIdentity(img, identity);
    std::uniform_int_distribution<int> jit(-1, 1);
    paintExpression(img, expressionIdx, jit(jitterRng), jit(jitterRng));
    std::normal_distribution<float> noise(0.0f, 0.02f);
    for (float& v : img.data) v += noise(jitterRng);
    return clamp01(img);
}

std::vector<SynthFace> synthDataset(const SynthOptions& opts) {
    if (opts.videos < 1 || opts.frames_per_video < 1 || opts.expressions < 1)
        throw DomainError("synthDataset: non-positive size option");
    int needed = opts.videos;
    if (opts.second_identity_every > 0)
        needed += (opts.videos + opts.second_identity_every - 1) /
                  opts.second_identity_every;
    if (opts.identities < needed)
        throw CapacityError("synthDataset: need at least " +
                            std::to_string(needed) +
                            " identities so no identity repeats across videos");
    Rng rng(opts.seed);
    std::vector<SynthFace> faces;
    int nextSecond = opts.videos;  // secondary identities drawn after primaries
    for (int v = 0; v < opts.videos; ++v) {
        const int expr = v % opts.expressions;
        std::vector<int> ids = {v};
        if (opts.second_identity_every > 0 && v % opts.second_identity_every == 0)
            ids.push_back(nextSecond++);
        for (int f = 0; f < opts.frames_per_video; ++f) {
            for (int id : ids) {
                SynthFace face;
                face.image = synthFace(id, expr, opts.crop_size, rng);
                face.video_id = "v" + std::to_string(v);
                face.frame_index = f;
                face.identity = id;
                face.expression = expressionName(expr);
                faces.push_back(std::move(face));
            }
        }
    }
    return faces;
}

}  // namespace facepriv
