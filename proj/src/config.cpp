#include "facepriv/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace facepriv {

void validateConfig(const PipelineConfig& cfg) {
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
        throw DomainError("config: alpha must lie in (0,1)");
    if (!(cfg.triplet_margin > 0.0))
        throw DomainError("config: triplet_margin must be > 0");
    if (cfg.batch_k < 1) throw DomainError("config: batch_k must be >= 1");
    if (!(cfg.sim_threshold > 0.0 && cfg.sim_threshold <= 1.0))
        throw DomainError("config: sim_threshold must lie in (0,1]");
    if (cfg.blur_sigma <= 0.0)
        throw DomainError("config: blur_sigma must be > 0");
    if (cfg.anonymizer != "fpp" && cfg.anonymizer != "blur")
        throw DomainError("config: anonymizer must be 'fpp' or 'blur'");
    if (cfg.crop_size < 16 || cfg.crop_size % 2 != 0)
        throw DomainError("config: crop_size must be even and >= 16");
    if (cfg.embed_dim < 2) throw DomainError("config: embed_dim must be >= 2");
    if (cfg.clip_len < 2) throw DomainError("config: clip_len must be >= 2");
    if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0))
        throw DomainError("config: test_fraction must lie in (0,1)");
    if (cfg.out_dir.empty()) throw DomainError("config: out_dir must be set");
}

namespace {

using Setter = std::function<void(PipelineConfig&, const std::string&)>;

int toInt(const std::string& v) { return std::stoi(v); }
double toDouble(const std::string& v) { return std::stod(v); }
bool toBool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ParseError("config: expected boolean, got '" + v + "'");
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> s = {
        {"alpha", [](auto& c, auto& v) { c.alpha = toDouble(v); }},
        {"triplet_margin", [](auto& c, auto& v) { c.triplet_margin = toDouble(v); }},
        {"learning_rate", [](auto& c, auto& v) { c.learning_rate = toDouble(v); }},
        {"seed", [](auto& c, auto& v) { c.seed = static_cast<std::uint32_t>(std::stoul(v)); }},
        {"batch_k", [](auto& c, auto& v) { c.batch_k = toInt(v); }},
        {"pretrain_epochs", [](auto& c, auto& v) { c.pretrain_epochs = toInt(v); }},
        {"fpp_steps", [](auto& c, auto& v) { c.fpp_steps = toInt(v); }},
        {"fexp_epochs", [](auto& c, auto& v) { c.fexp_epochs = toInt(v); }},
        {"denoise_epochs", [](auto& c, auto& v) { c.denoise_epochs = toInt(v); }},
        {"fer_epochs", [](auto& c, auto& v) { c.fer_epochs = toInt(v); }},
        {"recovery_epochs", [](auto& c, auto& v) { c.recovery_epochs = toInt(v); }},
        {"sim_threshold", [](auto& c, auto& v) { c.sim_threshold = toDouble(v); }},
        {"matcher_threshold", [](auto& c, auto& v) { c.matcher_threshold = toDouble(v); }},
        {"blur_sigma", [](auto& c, auto& v) { c.blur_sigma = toDouble(v); }},
        {"expression_mode", [](auto& c, auto& v) {
             if (v == "matched") c.expression_mode = ExpressionMode::matched;
             else if (v == "agnostic") c.expression_mode = ExpressionMode::agnostic;
             else throw ParseError("config: expression_mode must be matched|agnostic");
         }},
        {"denoise_enabled", [](auto& c, auto& v) { c.denoise_enabled = toBool(v); }},
        {"anonymizer", [](auto& c, auto& v) { c.anonymizer = v; }},
        {"crop_size", [](auto& c, auto& v) { c.crop_size = toInt(v); }},
        {"embed_dim", [](auto& c, auto& v) { c.embed_dim = toInt(v); }},
        {"clip_len", [](auto& c, auto& v) { c.clip_len = toInt(v); }},
        {"synth_identities", [](auto& c, auto& v) { c.synth_identities = toInt(v); }},
        {"synth_expressions", [](auto& c, auto& v) { c.synth_expressions = toInt(v); }},
        {"synth_videos", [](auto& c, auto& v) { c.synth_videos = toInt(v); }},
        {"synth_frames", [](auto& c, auto& v) { c.synth_frames = toInt(v); }},
        {"second_identity_every", [](auto& c, auto& v) { c.second_identity_every = toInt(v); }},
        {"test_fraction", [](auto& c, auto& v) { c.test_fraction = toDouble(v); }},
        {"out_dir", [](auto& c, auto& v) { c.out_dir = v; }},
    };
    return s;
}

std::string trimmed(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

}  // namespace

PipelineConfig loadConfig(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("loadConfig: cannot open " + path);
    PipelineConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const std::string t = trimmed(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ParseError("loadConfig: " + path + ":" + std::to_string(lineno) +
                             ": expected key=value");
        const std::string key = trimmed(t.substr(0, eq));
        const std::string val = trimmed(t.substr(eq + 1));
        auto it = setters().find(key);
        if (it == setters().end())
            throw ParseError("loadConfig: " + path + ":" + std::to_string(lineno) +
                             ": unknown key '" + key + "'");
        try {
            it->second(cfg, val);
        } catch (const std::exception& e) {
            throw ParseError("loadConfig: " + path + ":" + std::to_string(lineno) +
                             ": bad value for '" + key + "': " + e.what());
        }
    }
    validateConfig(cfg);
    return cfg;
}

std::string configCanonical(const PipelineConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << "alpha=" << c.alpha << "\n"
       << "anonymizer=" << c.anonymizer << "\n"
       << "batch_k=" << c.batch_k << "\n"
       << "blur_sigma=" << c.blur_sigma << "\n"
       << "clip_len=" << c.clip_len << "\n"
       << "crop_size=" << c.crop_size << "\n"
       << "denoise_enabled=" << (c.denoise_enabled ? "true" : "false") << "\n"
       << "denoise_epochs=" << c.denoise_epochs << "\n"
       << "embed_dim=" << c.embed_dim << "\n"
       << "expression_mode="
       << (c.expression_mode == ExpressionMode::matched ? "matched" : "agnostic")
       << "\n"
       << "fer_epochs=" << c.fer_epochs << "\n"
       << "fexp_epochs=" << c.fexp_epochs << "\n"
       << "fpp_steps=" << c.fpp_steps << "\n"
       << "learning_rate=" << c.learning_rate << "\n"
       << "matcher_threshold=" << c.matcher_threshold << "\n"
       << "out_dir=" << c.out_dir << "\n"
       << "pretrain_epochs=" << c.pretrain_epochs << "\n"
       << "recovery_epochs=" << c.recovery_epochs << "\n"
       << "second_identity_every=" << c.second_identity_every << "\n"
       << "seed=" << c.seed << "\n"
       << "sim_threshold=" << c.sim_threshold << "\n"
       << "synth_expressions=" << c.synth_expressions << "\n"
       << "synth_frames=" << c.synth_frames << "\n"
       << "synth_identities=" << c.synth_identities << "\n"
       << "synth_videos=" << c.synth_videos << "\n"
       << "test_fraction=" << c.test_fraction << "\n"
       << "triplet_margin=" << c.triplet_margin << "\n";
    return os.str();
}

void saveConfig(const PipelineConfig& cfg, const std::string& path) {
    validateConfig(cfg);
    std::ofstream f(path);
    if (!f) throw IoError("saveConfig: cannot open " + path);
    f << configCanonical(cfg);
}

std::uint64_t configHash(const PipelineConfig& cfg) {
    return fnv1a(configCanonical(cfg));
}

TrainConfig trainConfigOf(const PipelineConfig& cfg, int epochs) {
    TrainConfig t;
    t.alpha = cfg.alpha;
    t.epochs = epochs;
    t.triplet_margin = cfg.triplet_margin;
    t.learning_rate = cfg.learning_rate;
    t.seed = cfg.seed;
    t.batch_k = cfg.batch_k;
    return t;
}

}  // namespace facepriv
