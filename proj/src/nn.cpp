#include "facepriv/nn.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

namespace facepriv {
namespace nn {

std::uint64_t checksum(const std::vector<ParamRef>& params) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& p : params) h = fnv1a(p.w, p.n * sizeof(float), h);
    return h;
}

void zeroGrad(std::vector<ParamRef>& params) {
    for (auto& p : params) std::fill(p.g, p.g + p.n, 0.0f);
}

void saveParams(const std::vector<ParamRef>& params, std::ostream& os) {
    std::uint64_t count = params.size();
    os.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (const auto& p : params) {
        std::uint64_t n = p.n;
        os.write(reinterpret_cast<const char*>(&n), sizeof(n));
        os.write(reinterpret_cast<const char*>(p.w),
                 static_cast<std::streamsize>(n * sizeof(float)));
    }
}

void loadParams(std::vector<ParamRef>& params, std::istream& is) {
    std::uint64_t count = 0;
    is.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!is || count != params.size())
        throw ParseError("loadParams: parameter tensor count mismatch");
    for (auto& p : params) {
        std::uint64_t n = 0;
        is.read(reinterpret_cast<char*>(&n), sizeof(n));
        if (!is || n != p.n)
            throw ParseError("loadParams: parameter tensor size mismatch");
        is.read(reinterpret_cast<char*>(p.w),
                static_cast<std::streamsize>(n * sizeof(float)));
        if (!is) throw ParseError("loadParams: truncated parameter blob");
    }
}

Volume clipToVolume(const Clip& clip) {
    if (clip.frames.empty()) return {};
    const Image& f0 = clip.frames[0];
    Volume v(f0.channels, static_cast<int>(clip.frames.size()), f0.height,
             f0.width);
    for (int t = 0; t < v.frames; ++t) {
        const Image& f = clip.frames[t];
        if (!f.sameShape(f0))
            throw DomainError("clipToVolume: frames differ in shape");
        for (int c = 0; c < v.channels; ++c)
            for (int y = 0; y < v.height; ++y)
                for (int x = 0; x < v.width; ++x)
                    v.at(c, t, y, x) = f.at(c, y, x);
    }
    return v;
}

static float heInit(Rng& rng, int fanIn) {
    std::normal_distribution<float> d(0.0f, std::sqrt(2.0f / fanIn));
    return d(rng);
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in, int out, int stride_)
    : ic(in), oc(out), stride(stride_),
      w(static_cast<std::size_t>(out) * in * 9),
      b(out),
      gw(w.size()),
      gb(out) {}

void Conv2d::init(Rng& rng) {
    for (float& v : w) v = heInit(rng, ic * k * k);
    std::fill(b.begin(), b.end(), 0.0f);
}

Image Conv2d::forward(const Image& x) const {
    const int oh = (x.height + 2 * pad - k) / stride + 1;
    const int ow = (x.width + 2 * pad - k) / stride + 1;
    Image y(oc, oh, ow);
    for (int o = 0; o < oc; ++o) {
        for (int yy = 0; yy < oh; ++yy) {
            for (int xx = 0; xx < ow; ++xx) {
                float acc = b[o];
                const int y0 = yy * stride - pad;
                const int x0 = xx * stride - pad;
                for (int c = 0; c < ic; ++c) {
                    const float* wp = &w[((static_cast<std::size_t>(o) * ic + c) * k) * k];
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = y0 + ky;
                        if (iy < 0 || iy >= x.height) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = x0 + kx;
                            if (ix < 0 || ix >= x.width) continue;
                            acc += wp[ky * k + kx] * x.at(c, iy, ix);
                        }
                    }
                }
                y.at(o, yy, xx) = acc;
            }
        }
    }
    return y;
}

Image Conv2d::backward(const Image& x, const Image& gy) {
    Image gx(x.channels, x.height, x.width);
    for (int o = 0; o < oc; ++o) {
        for (int yy = 0; yy < gy.height; ++yy) {
            for (int xx = 0; xx < gy.width; ++xx) {
                const float g = gy.at(o, yy, xx);
                if (g == 0.0f) continue;
                gb[o] += g;
                const int y0 = yy * stride - pad;
                const int x0 = xx * stride - pad;
                for (int c = 0; c < ic; ++c) {
                    const std::size_t wbase =
                        (static_cast<std::size_t>(o) * ic + c) * k * k;
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = y0 + ky;
                        if (iy < 0 || iy >= x.height) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = x0 + kx;
                            if (ix < 0 || ix >= x.width) continue;
                            gw[wbase + ky * k + kx] += g * x.at(c, iy, ix);
                            gx.at(c, iy, ix) += g * w[wbase + ky * k + kx];
                        }
                    }
                }
            }
        }
    }
    return gx;
}

Image Conv2d::backwardData(const Image& x, const Image& gy) const {
    Image gx(x.channels, x.height, x.width);
    for (int o = 0; o < oc; ++o)
        for (int yy = 0; yy < gy.height; ++yy)
            for (int xx = 0; xx < gy.width; ++xx) {
                const float g = gy.at(o, yy, xx);
                if (g == 0.0f) continue;
                const int y0 = yy * stride - pad;
                const int x0 = xx * stride - pad;
                for (int c = 0; c < ic; ++c) {
                    const std::size_t wbase =
                        (static_cast<std::size_t>(o) * ic + c) * k * k;
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = y0 + ky;
                        if (iy < 0 || iy >= x.height) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = x0 + kx;
                            if (ix < 0 || ix >= x.width) continue;
                            gx.at(c, iy, ix) += g * w[wbase + ky * k + kx];
                        }
                    }
                }
            }
    return gx;
}

void Conv2d::collect(std::vector<ParamRef>& out) {
    out.push_back({w.data(), gw.data(), w.size()});
    out.push_back({b.data(), gb.data(), b.size()});
}

// ---------------------------------------------------------------- Conv3d

Conv3d::Conv3d(int in, int out, int strideT, int strideS)
    : ic(in), oc(out), st(strideT), ss(strideS),
      w(static_cast<std::size_t>(out) * in * 27),
      b(out),
      gw(w.size()),
      gb(out) {}

void Conv3d::init(Rng& rng) {
    for (float& v : w) v = heInit(rng, ic * k * k * k);
    std::fill(b.begin(), b.end(), 0.0f);
}

Volume Conv3d::forward(const Volume& x) const {
    const int pad = 1;
    const int ot = (x.frames + 2 * pad - k) / st + 1;
    const int oh = (x.height + 2 * pad - k) / ss + 1;
    const int ow = (x.width + 2 * pad - k) / ss + 1;
    Volume y(oc, ot, oh, ow);
    for (int o = 0; o < oc; ++o)
        for (int tt = 0; tt < ot; ++tt)
            for (int yy = 0; yy < oh; ++yy)
                for (int xx = 0; xx < ow; ++xx) {
                    float acc = b[o];
                    const int t0 = tt * st - pad;
                    const int y0 = yy * ss - pad;
                    const int x0 = xx * ss - pad;
                    for (int c = 0; c < ic; ++c)
                        for (int kt = 0; kt < k; ++kt) {
                            const int it = t0 + kt;
                            if (it < 0 || it >= x.frames) continue;
                            for (int ky = 0; ky < k; ++ky) {
                                const int iy = y0 + ky;
                                if (iy < 0 || iy >= x.height) continue;
                                for (int kx = 0; kx < k; ++kx) {
                                    const int ix = x0 + kx;
                                    if (ix < 0 || ix >= x.width) continue;
                                    acc += w[(((static_cast<std::size_t>(o) * ic + c) *
                                               k + kt) * k + ky) * k + kx] *
                                           x.at(c, it, iy, ix);
                                }
                            }
                        }
                    y.at(o, tt, yy, xx) = acc;
                }
    return y;
}

Volume Conv3d::backward(const Volume& x, const Volume& gy) {
    const int pad = 1;
    Volume gx(x.channels, x.frames, x.height, x.width);
    for (int o = 0; o < oc; ++o)
        for (int tt = 0; tt < gy.frames; ++tt)
            for (int yy = 0; yy < gy.height; ++yy)
                for (int xx = 0; xx < gy.width; ++xx) {
                    const float g = gy.at(o, tt, yy, xx);
                    if (g == 0.0f) continue;
                    gb[o] += g;
                    const int t0 = tt * st - pad;
                    const int y0 = yy * ss - pad;
                    const int x0 = xx * ss - pad;
                    for (int c = 0; c < ic; ++c)
                        for (int kt = 0; kt < k; ++kt) {
                            const int it = t0 + kt;
                            if (it < 0 || it >= x.frames) continue;
                            for (int ky = 0; ky < k; ++ky) {
                                const int iy = y0 + ky;
                                if (iy < 0 || iy >= x.height) continue;
                                for (int kx = 0; kx < k; ++kx) {
                                    const int ix = x0 + kx;
                                    if (ix < 0 || ix >= x.width) continue;
                                    const std::size_t wi =
                                        (((static_cast<std::size_t>(o) * ic + c) * k +
                                          kt) * k + ky) * k + kx;
                                    gw[wi] += g * x.at(c, it, iy, ix);
                                    gx.at(c, it, iy, ix) += g * w[wi];
                                }
                            }
                        }
                }
    return gx;
}

void Conv3d::collect(std::vector<ParamRef>& out) {
    out.push_back({w.data(), gw.data(), w.size()});
    out.push_back({b.data(), gb.data(), b.size()});
}

// ---------------------------------------------------------------- Linear

Linear::Linear(int in_, int out_)
    : in(in_), out(out_),
      w(static_cast<std::size_t>(in_) * out_),
      b(out_),
      gw(w.size()),
      gb(out_) {}

void Linear::init(Rng& rng) {
    for (float& v : w) v = heInit(rng, in);
    std::fill(b.begin(), b.end(), 0.0f);
}

std::vector<float> Linear::forward(const std::vector<float>& x) const {
    std::vector<float> y(out);
    for (int o = 0; o < out; ++o) {
        float acc = b[o];
        const float* wp = &w[static_cast<std::size_t>(o) * in];
        for (int i = 0; i < in; ++i) acc += wp[i] * x[i];
        y[o] = acc;
    }
    return y;
}

std::vector<float> Linear::backward(const std::vector<float>& x,
                                    const std::vector<float>& gy) {
    std::vector<float> gx(in, 0.0f);
    for (int o = 0; o < out; ++o) {
        const float g = gy[o];
        gb[o] += g;
        float* gwp = &gw[static_cast<std::size_t>(o) * in];
        const float* wp = &w[static_cast<std::size_t>(o) * in];
        for (int i = 0; i < in; ++i) {
            gwp[i] += g * x[i];
            gx[i] += g * wp[i];
        }
    }
    return gx;
}

std::vector<float> Linear::backwardData(const std::vector<float>& gy) const {
    std::vector<float> gx(in, 0.0f);
    for (int o = 0; o < out; ++o) {
        const float g = gy[o];
        const float* wp = &w[static_cast<std::size_t>(o) * in];
        for (int i = 0; i < in; ++i) gx[i] += g * wp[i];
    }
    return gx;
}

void Linear::collect(std::vector<ParamRef>& out_) {
    out_.push_back({w.data(), gw.data(), w.size()});
    out_.push_back({b.data(), gb.data(), b.size()});
}

// ---------------------------------------------------------------- pointwise

Image relu(const Image& x) {
    Image y = x;
    for (float& v : y.data) v = v > 0.0f ? v : 0.0f;
    return y;
}

Image reluBackward(const Image& y, const Image& gy) {
    Image gx = gy;
    for (std::size_t i = 0; i < gx.data.size(); ++i)
        if (y.data[i] <= 0.0f) gx.data[i] = 0.0f;
    return gx;
}

Volume relu(const Volume& x) {
    Volume y = x;
    for (float& v : y.data) v = v > 0.0f ? v : 0.0f;
    return y;
}

Volume reluBackward(const Volume& y, const Volume& gy) {
    Volume gx = gy;
    for (std::size_t i = 0; i < gx.data.size(); ++i)
        if (y.data[i] <= 0.0f) gx.data[i] = 0.0f;
    return gx;
}

Image sigmoid(const Image& x) {
    Image y = x;
    for (float& v : y.data) v = 1.0f / (1.0f + std::exp(-v));
    return y;
}

Image sigmoidBackward(const Image& y, const Image& gy) {
    Image gx = gy;
    for (std::size_t i = 0; i < gx.data.size(); ++i)
        gx.data[i] *= y.data[i] * (1.0f - y.data[i]);
    return gx;
}

Image upsample2(const Image& x) {
    Image y(x.channels, x.height * 2, x.width * 2);
    for (int c = 0; c < x.channels; ++c)
        for (int yy = 0; yy < y.height; ++yy)
            for (int xx = 0; xx < y.width; ++xx)
                y.at(c, yy, xx) = x.at(c, yy / 2, xx / 2);
    return y;
}

Image upsample2Backward(const Image& gy) {
    Image gx(gy.channels, gy.height / 2, gy.width / 2);
    for (int c = 0; c < gy.channels; ++c)
        for (int yy = 0; yy < gy.height; ++yy)
            for (int xx = 0; xx < gy.width; ++xx)
                gx.at(c, yy / 2, xx / 2) += gy.at(c, yy, xx);
    return gx;
}

double softmaxCrossEntropy(const std::vector<float>& logits, int label,
                           std::vector<float>* dlogits) {
    if (label < 0 || label >= static_cast<int>(logits.size()))
        throw DomainError("softmaxCrossEntropy: label out of range");
    double mx = logits[0];
    for (float v : logits) mx = std::max(mx, static_cast<double>(v));
    double sum = 0.0;
    std::vector<double> e(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        e[i] = std::exp(logits[i] - mx);
        sum += e[i];
    }
    const double loss = -std::log(e[label] / sum);
    if (dlogits) {
        dlogits->resize(logits.size());
        for (std::size_t i = 0; i < logits.size(); ++i)
            (*dlogits)[i] = static_cast<float>(
                e[i] / sum - (static_cast<int>(i) == label ? 1.0 : 0.0));
    }
    return loss;
}

int argmax(const std::vector<float>& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

// ---------------------------------------------------------------- Adam

void Adam::step(std::vector<ParamRef>& params) {
    if (m.empty()) {
        m.resize(params.size());
        v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i].assign(params[i].n, 0.0f);
            v[i].assign(params[i].n, 0.0f);
        }
    }
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, step_count);
    const double bc2 = 1.0 - std::pow(beta2, step_count);
    for (std::size_t i = 0; i < params.size(); ++i) {
        ParamRef& p = params[i];
        for (std::size_t j = 0; j < p.n; ++j) {
            const double g = p.g[j];
            m[i][j] = static_cast<float>(beta1 * m[i][j] + (1.0 - beta1) * g);
            v[i][j] = static_cast<float>(beta2 * v[i][j] + (1.0 - beta2) * g * g);
            const double mh = m[i][j] / bc1;
            const double vh = v[i][j] / bc2;
            p.w[j] -= static_cast<float>(lr * mh / (std::sqrt(vh) + eps));
        }
    }
}

// ------------------------------------------------------- EncoderDecoder

EncoderDecoder::EncoderDecoder(int baseChannels, std::uint32_t seed)
    : base(baseChannels),
      c0(3, base, 1),
      c1(base, 2 * base, 2),
      c2(2 * base, 2 * base, 1),
      c3(2 * base, base, 1),
      c4(2 * base, 3, 1) {
    Rng rng(seed);
    c0.init(rng);
    c1.init(rng);
    c2.init(rng);
    c3.init(rng);
    c4.init(rng);
}

static Image concatChannels(const Image& a, const Image& b) {
    Image y(a.channels + b.channels, a.height, a.width);
    std::copy(a.data.begin(), a.data.end(), y.data.begin());
    std::copy(b.data.begin(), b.data.end(), y.data.begin() + a.data.size());
    return y;
}

Image EncoderDecoder::forward(const Image& x, Cache* cache) const {
    if (x.channels != 3 || x.height % 2 != 0 || x.width % 2 != 0)
        throw DomainError("EncoderDecoder: expected RGB with even side length");
    Image a0 = relu(c0.forward(x));
    Image a1 = relu(c1.forward(a0));
    Image a2 = relu(c2.forward(a1));
    Image up = upsample2(a2);
    Image a3 = relu(c3.forward(up));
    Image cat = concatChannels(a3, a0);
    Image y = sigmoid(c4.forward(cat));
    if (cache) {
        cache->x = x;
        cache->a0 = a0;
        cache->a1 = a1;
        cache->a2 = a2;
        cache->up = up;
        cache->a3 = a3;
        cache->cat = cat;
        cache->y = y;
    }
    return y;
}

Image EncoderDecoder::backward(const Cache& cc, const Image& gy) {
    Image g = sigmoidBackward(cc.y, gy);
    Image gcat = c4.backward(cc.cat, g);
    // split concat grad into the a3 part and the skip (a0) part
    Image ga3(base, gcat.height, gcat.width);
    Image ga0skip(base, gcat.height, gcat.width);
    std::copy(gcat.data.begin(), gcat.data.begin() + ga3.data.size(),
              ga3.data.begin());
    std::copy(gcat.data.begin() + ga3.data.size(), gcat.data.end(),
              ga0skip.data.begin());
    Image gup = c3.backward(cc.up, reluBackward(cc.a3, ga3));
    Image ga2 = upsample2Backward(gup);
    Image ga1 = c2.backward(cc.a1, reluBackward(cc.a2, ga2));
    Image ga0 = c1.backward(cc.a0, reluBackward(cc.a1, ga1));
    for (std::size_t i = 0; i < ga0.data.size(); ++i)
        ga0.data[i] += ga0skip.data[i];
    return c0.backward(cc.x, reluBackward(cc.a0, ga0));
}

std::vector<ParamRef> EncoderDecoder::params() {
    std::vector<ParamRef> p;
    c0.collect(p);
    c1.collect(p);
    c2.collect(p);
    c3.collect(p);
    c4.collect(p);
    return p;
}

std::vector<ParamRef> EncoderDecoder::params() const {
    return const_cast<EncoderDecoder*>(this)->params();
}

std::uint64_t EncoderDecoder::checksum() const { return nn::checksum(params()); }

// ------------------------------------------------------ FrameClassifier

FrameClassifier::FrameClassifier(int classes, std::uint32_t seed)
    : numClasses(classes), c0(3, 8, 2), c1(8, 16, 2), head(16, classes) {
    Rng rng(seed);
    c0.init(rng);
    c1.init(rng);
    head.init(rng);
}

static std::vector<float> gap(const Image& x) {
    std::vector<float> p(x.channels, 0.0f);
    const float inv = 1.0f / (x.height * x.width);
    for (int c = 0; c < x.channels; ++c) {
        float acc = 0.0f;
        for (int y = 0; y < x.height; ++y)
            for (int xx = 0; xx < x.width; ++xx) acc += x.at(c, y, xx);
        p[c] = acc * inv;
    }
    return p;
}

std::vector<float> FrameClassifier::forward(const Image& x, Cache* cache) const {
    Image a0 = relu(c0.forward(x));
    Image a1 = relu(c1.forward(a0));
    std::vector<float> pooled = gap(a1);
    std::vector<float> logits = head.forward(pooled);
    if (cache) {
        cache->x = x;
        cache->a0 = a0;
        cache->a1 = a1;
        cache->pooled = pooled;
    }
    return logits;
}

void FrameClassifier::backward(const Cache& cc, const std::vector<float>& dlogits,
                               Image* dx) {
    std::vector<float> gp = head.backward(cc.pooled, dlogits);
    Image ga1(cc.a1.channels, cc.a1.height, cc.a1.width);
    const float inv = 1.0f / (cc.a1.height * cc.a1.width);
    for (int c = 0; c < ga1.channels; ++c)
        for (int y = 0; y < ga1.height; ++y)
            for (int x = 0; x < ga1.width; ++x) ga1.at(c, y, x) = gp[c] * inv;
    Image ga0 = c1.backward(cc.a0, reluBackward(cc.a1, ga1));
    Image gx = c0.backward(cc.x, reluBackward(cc.a0, ga0));
    if (dx) *dx = gx;
}

Image FrameClassifier::inputGrad(const Cache& cc,
                                 const std::vector<float>& dlogits) const {
    std::vector<float> gp = head.backwardData(dlogits);
    Image ga1(cc.a1.channels, cc.a1.height, cc.a1.width);
    const float inv = 1.0f / (cc.a1.height * cc.a1.width);
    for (int c = 0; c < ga1.channels; ++c)
        for (int y = 0; y < ga1.height; ++y)
            for (int x = 0; x < ga1.width; ++x) ga1.at(c, y, x) = gp[c] * inv;
    Image ga0 = c1.backwardData(cc.a0, reluBackward(cc.a1, ga1));
    return c0.backwardData(cc.x, reluBackward(cc.a0, ga0));
}

std::vector<ParamRef> FrameClassifier::params() {
    std::vector<ParamRef> p;
    c0.collect(p);
    c1.collect(p);
    head.collect(p);
    return p;
}

std::uint64_t FrameClassifier::checksum() const {
    return nn::checksum(const_cast<FrameClassifier*>(this)->params());
}

// ------------------------------------------------------ VideoClassifier

VideoClassifier::VideoClassifier(int classes, std::uint32_t seed)
    : numClasses(classes), c0(3, 8, 1, 2), c1(8, 16, 2, 2), head(16, classes) {
    Rng rng(seed);
    c0.init(rng);
    c1.init(rng);
    head.init(rng);
}

static std::vector<float> gap(const Volume& x) {
    std::vector<float> p(x.channels, 0.0f);
    const float inv = 1.0f / (x.frames * x.height * x.width);
    for (int c = 0; c < x.channels; ++c) {
        float acc = 0.0f;
        for (int t = 0; t < x.frames; ++t)
            for (int y = 0; y < x.height; ++y)
                for (int xx = 0; xx < x.width; ++xx) acc += x.at(c, t, y, xx);
        p[c] = acc * inv;
    }
    return p;
}

std::vector<float> VideoClassifier::forward(const Volume& x, Cache* cache) const {
    Volume a0 = relu(c0.forward(x));
    Volume a1 = relu(c1.forward(a0));
    std::vector<float> pooled = gap(a1);
    std::vector<float> logits = head.forward(pooled);
    if (cache) {
        cache->x = x;
        cache->a0 = a0;
        cache->a1 = a1;
        cache->pooled = pooled;
    }
    return logits;
}

void VideoClassifier::backward(const Cache& cc, const std::vector<float>& dlogits) {
    std::vector<float> gp = head.backward(cc.pooled, dlogits);
    Volume ga1(cc.a1.channels, cc.a1.frames, cc.a1.height, cc.a1.width);
    const float inv = 1.0f / (cc.a1.frames * cc.a1.height * cc.a1.width);
    for (int c = 0; c < ga1.channels; ++c)
        for (int t = 0; t < ga1.frames; ++t)
            for (int y = 0; y < ga1.height; ++y)
                for (int x = 0; x < ga1.width; ++x)
                    ga1.at(c, t, y, x) = gp[c] * inv;
    Volume ga0 = c1.backward(cc.a0, reluBackward(cc.a1, ga1));
    c0.backward(cc.x, reluBackward(cc.a0, ga0));
}

std::vector<ParamRef> VideoClassifier::params() {
    std::vector<ParamRef> p;
    c0.collect(p);
    c1.collect(p);
    head.collect(p);
    return p;
}

std::uint64_t VideoClassifier::checksum() const {
    return nn::checksum(const_cast<VideoClassifier*>(this)->params());
}

}  // namespace nn
}  // namespace facepriv
