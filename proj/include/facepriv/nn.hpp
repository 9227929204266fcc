#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "facepriv/common.hpp"
#include "facepriv/image.hpp"

namespace facepriv {
namespace nn {

/// View onto one parameter tensor and its gradient accumulator.
struct ParamRef {
    float* w;
    float* g;
    std::size_t n;
};

std::uint64_t checksum(const std::vector<ParamRef>& params);
void zeroGrad(std::vector<ParamRef>& params);
void saveParams(const std::vector<ParamRef>& params, std::ostream& os);
void loadParams(std::vector<ParamRef>& params, std::istream& is);

/// 5-D tensor for clips: CTHW.
struct Volume {
    int channels = 0, frames = 0, height = 0, width = 0;
    std::vector<float> data;

    Volume() = default;
    Volume(int c, int t, int h, int w, float fill = 0.0f)
        : channels(c), frames(t), height(h), width(w),
          data(static_cast<std::size_t>(c) * t * h * w, fill) {}
    float& at(int c, int t, int y, int x) {
        return data[((static_cast<std::size_t>(c) * frames + t) * height + y) *
                        width + x];
    }
    float at(int c, int t, int y, int x) const {
        return data[((static_cast<std::size_t>(c) * frames + t) * height + y) *
                        width + x];
    }
};

Volume clipToVolume(const Clip& clip);

struct Conv2d {
    int ic = 0, oc = 0, k = 3, stride = 1, pad = 1;
    std::vector<float> w, b, gw, gb;

    Conv2d() = default;
    Conv2d(int in, int out, int stride_);
    void init(Rng& rng);
    Image forward(const Image& x) const;
    Image backward(const Image& x, const Image& gy);
    /// Gradient w.r.t. the input only; parameter grads untouched.
    Image backwardData(const Image& x, const Image& gy) const;
    void collect(std::vector<ParamRef>& out);
};

struct Conv3d {
    int ic = 0, oc = 0, k = 3;
    int st = 1, ss = 1;  // temporal / spatial stride
    std::vector<float> w, b, gw, gb;

    Conv3d() = default;
    Conv3d(int in, int out, int strideT, int strideS);
    void init(Rng& rng);
    Volume forward(const Volume& x) const;
    Volume backward(const Volume& x, const Volume& gy);
    void collect(std::vector<ParamRef>& out);
};

struct Linear {
    int in = 0, out = 0;
    std::vector<float> w, b, gw, gb;

    Linear() = default;
    Linear(int in_, int out_);
    void init(Rng& rng);
    std::vector<float> forward(const std::vector<float>& x) const;
    std::vector<float> backward(const std::vector<float>& x,
                                const std::vector<float>& gy);
    std::vector<float> backwardData(const std::vector<float>& gy) const;
    void collect(std::vector<ParamRef>& out);
};

Image relu(const Image& x);
Image reluBackward(const Image& y, const Image& gy);
Volume relu(const Volume& x);
Volume reluBackward(const Volume& y, const Volume& gy);
Image sigmoid(const Image& x);
Image sigmoidBackward(const Image& y, const Image& gy);
Image upsample2(const Image& x);
Image upsample2Backward(const Image& gy);

/// Softmax + cross entropy; returns loss and writes dlogits.
double softmaxCrossEntropy(const std::vector<float>& logits, int label,
                           std::vector<float>* dlogits);
int argmax(const std::vector<float>& v);

struct Adam {
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step_count = 0;
    std::vector<std::vector<float>> m, v;

    explicit Adam(double lr_) : lr(lr_) {}
    void step(std::vector<ParamRef>& params);
};

/// Shape-preserving conv encoder-decoder with one skip connection.
/// Shared architecture for the anonymizer, denoiser, and recovery models.
struct EncoderDecoder {
    int base = 8;
    Conv2d c0, c1, c2, c3, c4;

    struct Cache {
        Image x, a0, a1, a2, up, a3, cat, y;
    };

    explicit EncoderDecoder(int baseChannels = 8, std::uint32_t seed = 1);
    Image forward(const Image& x, Cache* cache = nullptr) const;
    /// Accumulates parameter grads; returns grad w.r.t. the input.
    Image backward(const Cache& cache, const Image& gy);
    std::vector<ParamRef> params();
    std::vector<ParamRef> params() const;
    std::uint64_t checksum() const;
};

/// Small conv classifier: RGB frame -> class logits.
struct FrameClassifier {
    int numClasses = 0;
    Conv2d c0, c1;
    Linear head;

    struct Cache {
        Image x, a0, a1;
        std::vector<float> pooled;
    };

    FrameClassifier(int classes, std::uint32_t seed = 1);
    std::vector<float> forward(const Image& x, Cache* cache = nullptr) const;
    void backward(const Cache& cache, const std::vector<float>& dlogits,
                  Image* dx = nullptr);
    /// Gradient w.r.t. the input image with parameters held fixed.
    Image inputGrad(const Cache& cache, const std::vector<float>& dlogits) const;
    std::vector<ParamRef> params();
    std::uint64_t checksum() const;
};

/// Small 3-D conv classifier: clip -> class logits.
struct VideoClassifier {
    int numClasses = 0;
    Conv3d c0, c1;
    Linear head;

    struct Cache {
        Volume x, a0, a1;
        std::vector<float> pooled;
    };

    VideoClassifier(int classes, std::uint32_t seed = 1);
    std::vector<float> forward(const Volume& x, Cache* cache = nullptr) const;
    void backward(const Cache& cache, const std::vector<float>& dlogits);
    std::vector<ParamRef> params();
    std::uint64_t checksum() const;
};

}  // namespace nn
}  // namespace facepriv
