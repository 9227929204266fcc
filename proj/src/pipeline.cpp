#include "facepriv/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "facepriv/knowledge_priors.hpp"
#include "facepriv/synth.hpp"

namespace facepriv {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string joinPath(const std::string& a, const std::string& b) {
    return (fs::path(a) / b).string();
}

void ensureDir(const std::string& path) { fs::create_directories(path); }

std::uint64_t fileHash(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("fileHash: cannot open " + path);
    std::uint64_t h = 1469598103934665603ULL;
    char buf[1 << 14];
    while (f.read(buf, sizeof(buf)) || f.gcount() > 0)
        h = fnv1a(buf, static_cast<std::size_t>(f.gcount()), h);
    return h;
}

void requireArtifact(const std::string& path, const std::string& stage,
                     const std::string& producer) {
    if (!fs::exists(path))
        throw DependencyError("stage '" + stage + "' needs missing artifact " +
                              path + "; run stage '" + producer + "' first");
}

void writeProvenance(const PipelineConfig& cfg, const std::string& stage,
                     const std::vector<std::string>& inputs) {
    ordered_json j;
    j["stage"] = stage;
    std::ostringstream hh;
    hh << std::hex << configHash(cfg);
    j["config_hash"] = hh.str();
    j["seed"] = cfg.seed;
    ordered_json in = ordered_json::object();
    for (const auto& p : inputs) {
        std::ostringstream fh;
        fh << std::hex << fileHash(p);
        in[p] = fh.str();
    }
    j["inputs"] = in;
    const std::string dir = joinPath(cfg.out_dir, stage);
    ensureDir(dir);
    std::ofstream f(joinPath(dir, "provenance.json"));
    f << j.dump(2) << "\n";
}

ToyLinearEmbedder embedderFor(const PipelineConfig& cfg) {
    // fixed seed: the embedder is the pipeline's frozen external prior and
    // must be identical across stages and across alpha sweeps
    return ToyLinearEmbedder(cfg.embed_dim, 3, cfg.crop_size, cfg.crop_size,
                             9001);
}

std::string cropName(const FaceRecord& r) {
    return r.video_id + "_t" + std::to_string(r.track_id) + "_f" +
           std::to_string(r.frame_index) + ".ppm";
}

Image loadCrop(const PipelineConfig& cfg, const FaceRecord& r) {
    return loadPpm(joinPath(cfg.out_dir, r.crop_ref));
}

// Writes derived-variant crops and the matching manifest.
DatasetManifest writeDerived(const PipelineConfig& cfg,
                             const DatasetManifest& source,
                             const std::vector<Image>& images, Variant variant,
                             const std::string& cropsRel,
                             const std::string& manifestPath) {
    ensureDir(joinPath(cfg.out_dir, cropsRel));
    DatasetManifest out;
    out.variant = variant;
    for (std::size_t i = 0; i < source.records.size(); ++i) {
        FaceRecord r = source.records[i];
        r.variant = variant;
        r.crop_ref = cropsRel + "/" + cropName(r);
        savePpm(images[i], joinPath(cfg.out_dir, r.crop_ref));
        out.records.push_back(r);
    }
    saveManifest(out, manifestPath);
    return out;
}

struct Paths {
    std::string detections, manifestOrg, eligible, fppCkpt, manifestPp,
        fexpCkpt, fdenoiseCkpt, manifestDpp, ferReport, frecoPp, frecoDpp,
        manifestPpr, manifestDppr, casesFile, privacyReport, combined;
    explicit Paths(const PipelineConfig& cfg) {
        const std::string& o = cfg.out_dir;
        detections = joinPath(o, "synth/detections.jsonl");
        manifestOrg = joinPath(o, "track/manifest_original.jsonl");
        eligible = joinPath(o, "priors/eligible.json");
        fppCkpt = joinPath(o, "train_pp/fpp.ckpt");
        manifestPp = joinPath(o, "anonymize/manifest_pp.jsonl");
        fexpCkpt = joinPath(o, "train_denoise/fexp.ckpt");
        fdenoiseCkpt = joinPath(o, "train_denoise/fdenoise.ckpt");
        manifestDpp = joinPath(o, "denoise/manifest_dpp.jsonl");
        ferReport = joinPath(o, "train_fer/fer_report.json");
        frecoPp = joinPath(o, "train_recovery/freco_pp.ckpt");
        frecoDpp = joinPath(o, "train_recovery/freco_dpp.ckpt");
        manifestPpr = joinPath(o, "validate/manifest_pp_recovered.jsonl");
        manifestDppr = joinPath(o, "validate/manifest_dpp_recovered.jsonl");
        casesFile = joinPath(o, "validate/cases.jsonl");
        privacyReport = joinPath(o, "validate/privacy_report.json");
        combined = joinPath(o, "report/report.json");
    }
};

std::vector<std::string> sortedClasses(const DatasetManifest& m) {
    std::set<std::string> classes;
    for (const auto& r : m.records)
        if (r.expression) classes.insert(*r.expression);
    return {classes.begin(), classes.end()};
}

int classIndex(const std::vector<std::string>& classes, const std::string& c) {
    const auto it = std::find(classes.begin(), classes.end(), c);
    if (it == classes.end())
        throw DomainError("unknown expression class '" + c + "'");
    return static_cast<int>(it - classes.begin());
}

// ------------------------------------------------------------- stages

void stageSynth(const PipelineConfig& cfg) {
    SynthOptions opts;
    opts.identities = cfg.synth_identities;
    opts.expressions = cfg.synth_expressions;
    opts.videos = cfg.synth_videos;
    opts.frames_per_video = cfg.synth_frames;
    opts.crop_size = cfg.crop_size;
    opts.second_identity_every = cfg.second_identity_every;
    opts.seed = cfg.seed;
    const std::vector<SynthFace> faces = synthDataset(opts);

    const std::string cropsRel = "synth/crops/org";
    ensureDir(joinPath(cfg.out_dir, cropsRel));
    const ToyLinearEmbedder fe = embedderFor(cfg);
    std::vector<Detection> dets;
    std::map<std::pair<std::string, int>, int> perFrame;
    for (const auto& face : faces) {
        const int k = perFrame[{face.video_id, face.frame_index}]++;
        Detection d;
        d.video_id = face.video_id;
        d.frame_index = face.frame_index;
        d.bbox = {0.0, 0.0, static_cast<double>(cfg.crop_size),
                  static_cast<double>(cfg.crop_size)};
        d.expression = face.expression;
        d.crop_ref = cropsRel + "/" + face.video_id + "_f" +
                     std::to_string(face.frame_index) + "_d" +
                     std::to_string(k) + ".ppm";
        savePpm(face.image, joinPath(cfg.out_dir, d.crop_ref));
        // embed what later stages will read back from disk
        d.embedding.values = fe.embed(quantize8(face.image));
        d.embedding.normalized = true;
        dets.push_back(std::move(d));
    }
    saveDetections(dets, Paths(cfg).detections);
    writeProvenance(cfg, "synth", {});
}

void stageTrack(const PipelineConfig& cfg) {
    const Paths p(cfg);
    requireArtifact(p.detections, "track", "synth");
    const auto dets = loadDetections(p.detections);
    const DatasetManifest m = assignTracks(dets, cfg.sim_threshold);
    ensureDir(joinPath(cfg.out_dir, "track"));
    saveManifest(m, p.manifestOrg);
    writeProvenance(cfg, "track", {p.detections});
}

void stagePriors(const PipelineConfig& cfg) {
    const Paths p(cfg);
    requireArtifact(p.manifestOrg, "priors", "track");
    const DatasetManifest m = loadManifest(p.manifestOrg);
    const auto [firstSlot, general] = eligibleTracks(m);
    ordered_json j;
    auto dump = [](const std::set<TrackKey>& s) {
        ordered_json a = ordered_json::array();
        for (const auto& [v, t] : s) a.push_back({v, t});
        return a;
    };
    j["first_slot_tracks"] = dump(firstSlot);
    j["general_tracks"] = dump(general);
    ensureDir(joinPath(cfg.out_dir, "priors"));
    std::ofstream f(p.eligible);
    f << j.dump(2) << "\n";
    writeProvenance(cfg, "priors", {p.manifestOrg});
}

void stageTrainPp(const PipelineConfig& cfg) {
    const Paths p(cfg);
    ensureDir(joinPath(cfg.out_dir, "train_pp"));
    if (cfg.anonymizer == "blur") {
        // baseline anonymizer needs no training
        std::ofstream f(joinPath(cfg.out_dir, "train_pp/skipped.json"));
        f << R"({"skipped": "anonymizer is gaussian blur"})" << "\n";
        writeProvenance(cfg, "train_pp", {});
        return;
    }
    requireArtifact(p.manifestOrg, "train-pp", "track");
    const DatasetManifest manifest = loadManifest(p.manifestOrg);
    const TrackIndex index = buildTrackIndex(manifest);

    std::map<std::string, Image> crops;
    std::vector<Image> allCrops;
    for (const auto& r : manifest.records) {
        crops[r.crop_ref] = loadCrop(cfg, r);
        allCrops.push_back(crops[r.crop_ref]);
    }

    AnonymizerModel fpp(cfg.crop_size, 8, cfg.seed + 100);
    std::vector<double> pretrainLog;
    pretrainReconstruction(fpp, allCrops, trainConfigOf(cfg, cfg.pretrain_epochs),
                           &pretrainLog);
    {
        std::ofstream f(joinPath(cfg.out_dir, "train_pp/pretrain_log.jsonl"));
        for (std::size_t i = 0; i < pretrainLog.size(); ++i)
            f << ordered_json{{"epoch", i}, {"l1", pretrainLog[i]}}.dump() << "\n";
    }

    const ToyLinearEmbedder fe = embedderFor(cfg);
    Rng exprRng(cfg.seed + 17);
    std::ofstream batchLog(joinPath(cfg.out_dir, "train_pp/batches.jsonl"));
    auto provider = [&](int step) {
        Rng r(exprRng());  // per-step, deterministic from the seeded stream
        const std::string expr = sampleBatchExpression(index, r);
        const TripletBatch batch =
            buildBatch(index, expr, cfg.batch_k, cfg.expression_mode,
                       cfg.seed + 1000 + static_cast<std::uint32_t>(step));
        ordered_json refs = ordered_json::array();
        std::vector<Image> imgs;
        for (const auto& fr : batch.face_refs) {
            refs.push_back(fr.crop_ref);
            imgs.push_back(crops.at(fr.crop_ref));
        }
        batchLog << ordered_json{{"step", step}, {"crop_refs", refs}}.dump()
                 << "\n";
        return imgs;
    };
    std::vector<TrainLogEntry> log;
    trainFpp(provider, cfg.fpp_steps, fpp, fe, trainConfigOf(cfg, 1), &log);
    {
        std::ofstream f(joinPath(cfg.out_dir, "train_pp/train_log.jsonl"));
        for (const auto& e : log)
            f << ordered_json{{"step", e.step},
                              {"l_tri", e.l_tri},
                              {"l_bce", e.l_bce},
                              {"total", e.total}}
                     .dump()
              << "\n";
    }
    ordered_json meta;
    meta["resolution"] = cfg.crop_size;
    meta["base_channels"] = 8;
    saveCheckpoint(p.fppCkpt, "encoder_decoder", cfg.seed, meta.dump(),
                   fpp.net.params());
    writeProvenance(cfg, "train_pp", {p.manifestOrg});
}

void stageAnonymize(const PipelineConfig& cfg) {
    const Paths p(cfg);
    requireArtifact(p.manifestOrg, "anonymize", "track");
    const DatasetManifest manifest = loadManifest(p.manifestOrg);
    std::vector<Image> orgs;
    for (const auto& r : manifest.records) orgs.push_back(loadCrop(cfg, r));

    std::vector<Image> pp;
    std::vector<std::string> inputs = {p.manifestOrg};
    if (cfg.anonymizer == "blur") {
        for (const auto& img : orgs) pp.push_back(gaussianBlur(img, cfg.blur_sigma));
    } else {
        requireArtifact(p.fppCkpt, "anonymize", "train-pp");
        AnonymizerModel fpp(cfg.crop_size, 8, 1);
        loadCheckpoint(p.fppCkpt, "encoder_decoder", fpp.net.params());
        pp = anonymize(fpp, orgs);
        inputs.push_back(p.fppCkpt);
    }
    ensureDir(joinPath(cfg.out_dir, "anonymize"));
    writeDerived(cfg, manifest, pp, Variant::pp, "anonymize/crops/pp",
                 p.manifestPp);
    writeProvenance(cfg, "anonymize", inputs);
}

void stageTrainDenoise(const PipelineConfig& cfg) {
    const Paths p(cfg);
    ensureDir(joinPath(cfg.out_dir, "train_denoise"));
    if (!cfg.denoise_enabled) {
        std::ofstream f(joinPath(cfg.out_dir, "train_denoise/skipped.json"));
        f << R"({"skipped": "denoise_enabled is false"})" << "\n";
        writeProvenance(cfg, "train_denoise", {});
        return;
    }
    requireArtifact(p.manifestOrg, "train-denoise", "track");
    requireArtifact(p.manifestPp, "train-denoise", "anonymize");
    const DatasetManifest org = loadManifest(p.manifestOrg);
    const DatasetManifest ppm = loadManifest(p.manifestPp);
    const std::vector<std::string> classes = sortedClasses(org);
    if (classes.empty())
        throw DomainError("train-denoise: no expression labels in manifest");

    std::vector<Image> orgImgs, ppImgs;
    std::vector<int> orgLabels, ppLabels;
    for (const auto& r : org.records) {
        orgImgs.push_back(loadCrop(cfg, r));
        orgLabels.push_back(classIndex(classes, r.expression.value()));
    }
    for (const auto& r : ppm.records) {
        ppImgs.push_back(loadCrop(cfg, r));
        ppLabels.push_back(classIndex(classes, r.expression.value()));
    }

    // f_exp: frame classifier trained on originals, then frozen
    FrameExpressionModel fexp(classes, cfg.seed + 200);
    std::vector<double> fexpLog;
    trainExpressionClassifier(orgImgs, orgLabels, fexp,
                              trainConfigOf(cfg, cfg.fexp_epochs), &fexpLog);
    fexp.frozen = true;

    DenoiserModel fdenoise(cfg.crop_size, 8, cfg.seed + 300);
    std::vector<double> denLog;
    trainDenoiser(ppImgs, ppLabels, fdenoise, fexp,
                  trainConfigOf(cfg, cfg.denoise_epochs), &denLog);

    {
        std::ofstream f(joinPath(cfg.out_dir, "train_denoise/train_log.jsonl"));
        for (std::size_t i = 0; i < fexpLog.size(); ++i)
            f << ordered_json{{"model", "fexp"}, {"epoch", i}, {"ce", fexpLog[i]}}
                     .dump()
              << "\n";
        for (std::size_t i = 0; i < denLog.size(); ++i)
            f << ordered_json{{"model", "fdenoise"}, {"epoch", i}, {"ce", denLog[i]}}
                     .dump()
              << "\n";
    }
    ordered_json meta;
    meta["classes"] = classes;
    saveCheckpoint(p.fexpCkpt, "frame_classifier", cfg.seed, meta.dump(),
                   fexp.net.params());
    ordered_json meta2;
    meta2["resolution"] = cfg.crop_size;
    saveCheckpoint(p.fdenoiseCkpt, "encoder_decoder", cfg.seed, meta2.dump(),
                   fdenoise.net.params());
    writeProvenance(cfg, "train_denoise", {p.manifestOrg, p.manifestPp});
}

void stageDenoise(const PipelineConfig& cfg) {
    const Paths p(cfg);
    requireArtifact(p.manifestPp, "denoise", "anonymize");
    const DatasetManifest ppm = loadManifest(p.manifestPp);
    std::vector<Image> ppImgs;
    for (const auto& r : ppm.records) ppImgs.push_back(loadCrop(cfg, r));
    std::vector<Image> dppImgs;
    std::vector<std::string> inputs = {p.manifestPp};
    if (cfg.denoise_enabled) {
        requireArtifact(p.fdenoiseCkpt, "denoise", "train-denoise");
        DenoiserModel fdenoise(cfg.crop_size, 8, 1);
        loadCheckpoint(p.fdenoiseCkpt, "encoder_decoder", fdenoise.net.params());
        dppImgs = denoise(fdenoise, ppImgs);
        inputs.push_back(p.fdenoiseCkpt);
    } else {
        dppImgs = ppImgs;  // denoiser bypassed: dpp mirrors pp
    }
    ensureDir(joinPath(cfg.out_dir, "denoise"));
    writeDerived(cfg, ppm, dppImgs, Variant::dpp, "denoise/crops/dpp",
                 p.manifestDpp);
    writeProvenance(cfg, "denoise", inputs);
}

struct ClipSet {
    std::vector<Clip> clips;
    std::vector<int> labels;
};

ClipSet buildClips(const PipelineConfig& cfg, const DatasetManifest& m,
                   const std::vector<std::string>& classes,
                   const std::set<std::string>& videos) {
    std::map<TrackKey, std::vector<const FaceRecord*>> tracks;
    for (const auto& r : m.records)
        if (videos.count(r.video_id)) tracks[{r.video_id, r.track_id}].push_back(&r);
    int minLen = 1 << 30;
    for (const auto& [k, recs] : tracks)
        minLen = std::min(minLen, static_cast<int>(recs.size()));
    const int clipLen = std::min(cfg.clip_len, minLen);
    ClipSet out;
    for (auto& [key, recs] : tracks) {
        std::sort(recs.begin(), recs.end(),
                  [](const FaceRecord* a, const FaceRecord* b) {
                      return a->frame_index < b->frame_index;
                  });
        Clip clip;
        // uniform temporal sampling down to clipLen frames
        for (int i = 0; i < clipLen; ++i) {
            const int idx =
                clipLen == 1
                    ? 0
                    : static_cast<int>(
                          static_cast<long>(i) * (recs.size() - 1) / (clipLen - 1));
            clip.frames.push_back(loadCrop(cfg, *recs[idx]));
        }
        out.clips.push_back(std::move(clip));
        out.labels.push_back(classIndex(classes, recs[0]->expression.value()));
    }
    return out;
}

std::pair<std::set<std::string>, std::set<std::string>> splitVideos(
    const PipelineConfig& cfg, const DatasetManifest& org) {
    // stratified by expression, at least one test video per expression
    std::map<std::string, std::set<std::string>> byExpr;
    for (const auto& r : org.records)
        if (r.expression) byExpr[*r.expression].insert(r.video_id);
    Rng rng(cfg.seed + 4);
    std::set<std::string> train, test;
    for (auto& [expr, vidSet] : byExpr) {
        std::vector<std::string> vids(vidSet.begin(), vidSet.end());
        std::shuffle(vids.begin(), vids.end(), rng);
        const int nTest = std::max(
            1, static_cast<int>(std::floor(vids.size() * cfg.test_fraction)));
        for (std::size_t i = 0; i < vids.size(); ++i)
            (static_cast<int>(i) < nTest ? test : train).insert(vids[i]);
    }
    return {train, test};
}

void stageTrainFer(const PipelineConfig& cfg) {
    const Paths p(cfg);
    requireArtifact(p.manifestOrg, "train-fer", "track");
    requireArtifact(p.manifestPp, "train-fer", "anonymize");
    requireArtifact(p.manifestDpp, "train-fer", "denoise");
    const DatasetManifest org = loadManifest(p.manifestOrg);
    const DatasetManifest ppm = loadManifest(p.manifestPp);
    const DatasetManifest dpp = loadManifest(p.manifestDpp);
    const std::vector<std::string> classes = sortedClasses(org);
    const auto [trainVids, testVids] = splitVideos(cfg, org);

    auto runMode = [&](const DatasetManifest& m,
                       std::uint32_t seedOffset) -> FerReport {
        const ClipSet trainSet = buildClips(cfg, m, classes, trainVids);
        const ClipSet testSet = buildClips(cfg, m, classes, testVids);
        VideoExpressionModel fer(classes, cfg.seed + seedOffset);
        TrainConfig tc = trainConfigOf(cfg, cfg.fer_epochs);
        trainFer(trainSet.clips, trainSet.labels, fer, tc);
        return evaluateFer(fer, testSet.clips, testSet.labels);
    };

    // ablation hook: FER on denoised clips and directly on pp clips
    const FerReport withDenoise = runMode(dpp, 400);
    const FerReport withoutDenoise = runMode(ppm, 400);

    ensureDir(joinPath(cfg.out_dir, "train_fer"));
    ordered_json j;
    j["classes"] = classes;
    j["with_denoise"] = ordered_json::parse(ferReportToJson(withDenoise));
    j["without_denoise"] = ordered_json::parse(ferReportToJson(withoutDenoise));
    ordered_json split;
    split["train_videos"] = std::vector<std::string>(trainVids.begin(), trainVids.end());
    split["test_videos"] = std::vector<std::string>(testVids.begin(), testVids.end());
    j["split"] = split;
    std::ofstream f(p.ferReport);
    f << j.dump(2) << "\n";
    std::ofstream csv(joinPath(cfg.out_dir, "train_fer/confusion_with_denoise.csv"));
    csv << confusionCsv(withDenoise);
    std::ofstream csv2(joinPath(cfg.out_dir, "train_fer/confusion_without_denoise.csv"));
    csv2 << confusionCsv(withoutDenoise);
    writeProvenance(cfg, "train_fer", {p.manifestOrg, p.manifestPp, p.manifestDpp});
}

void stageTrainRecovery(const PipelineConfig& cfg) {
    const Paths p(cfg);
    requireArtifact(p.manifestOrg, "train-recovery", "track");
    requireArtifact(p.manifestPp, "train-recovery", "anonymize");
    requireArtifact(p.manifestDpp, "train-recovery", "denoise");
    const DatasetManifest org = loadManifest(p.manifestOrg);
    const DatasetManifest ppm = loadManifest(p.manifestPp);
    const DatasetManifest dpp = loadManifest(p.manifestDpp);
    ensureDir(joinPath(cfg.out_dir, "train_recovery"));
    std::ofstream log(joinPath(cfg.out_dir, "train_recovery/train_log.jsonl"));

    auto trainOne = [&](const DatasetManifest& derived, Variant v,
                        const std::string& ckpt, std::uint32_t seedOffset) {
        std::vector<std::pair<Image, Image>> pairs;
        for (const auto& [orgRec, derRec] : alignVariantPairs(org, derived))
            pairs.emplace_back(loadCrop(cfg, orgRec), loadCrop(cfg, derRec));
        RecoveryModel reco(cfg.crop_size, v, 8, cfg.seed + seedOffset);
        std::vector<double> losses;
        TrainConfig tc = trainConfigOf(cfg, cfg.recovery_epochs);
        trainRecovery(pairs, reco, tc, &losses);
        for (std::size_t i = 0; i < losses.size(); ++i)
            log << ordered_json{{"model", variantName(v)},
                                {"epoch", i},
                                {"one_minus_ssim", losses[i]}}
                       .dump()
                << "\n";
        ordered_json meta;
        meta["resolution"] = cfg.crop_size;
        meta["source_variant"] = variantName(v);
        saveCheckpoint(ckpt, "encoder_decoder", cfg.seed, meta.dump(),
                       reco.net.params());
    };
    trainOne(ppm, Variant::pp, p.frecoPp, 500);
    trainOne(dpp, Variant::dpp, p.frecoDpp, 600);
    writeProvenance(cfg, "train_recovery",
                    {p.manifestOrg, p.manifestPp, p.manifestDpp});
}

void stageValidate(const PipelineConfig& cfg) {
    const Paths p(cfg);
    requireArtifact(p.manifestOrg, "validate", "track");
    requireArtifact(p.manifestPp, "validate", "anonymize");
    requireArtifact(p.manifestDpp, "validate", "denoise");
    requireArtifact(p.frecoPp, "validate", "train-recovery");
    requireArtifact(p.frecoDpp, "validate", "train-recovery");
    const DatasetManifest org = loadManifest(p.manifestOrg);
    const DatasetManifest ppm = loadManifest(p.manifestPp);
    const DatasetManifest dpp = loadManifest(p.manifestDpp);
    ensureDir(joinPath(cfg.out_dir, "validate"));

    // recovery attacks produce the two recovered variants
    auto recoverAll = [&](const DatasetManifest& src, Variant srcVariant,
                          Variant outVariant, const std::string& ckpt,
                          const std::string& cropsRel,
                          const std::string& manifestPath) {
        RecoveryModel reco(cfg.crop_size, srcVariant, 8, 1);
        loadCheckpoint(ckpt, "encoder_decoder", reco.net.params());
        std::vector<Image> srcImgs;
        for (const auto& r : src.records) srcImgs.push_back(loadCrop(cfg, r));
        const std::vector<Image> rec = recover(reco, srcImgs, srcVariant);
        return writeDerived(cfg, src, rec, outVariant, cropsRel, manifestPath);
    };
    const DatasetManifest ppr =
        recoverAll(ppm, Variant::pp, Variant::pp_recovered, p.frecoPp,
                   "validate/crops/ppr", p.manifestPpr);
    const DatasetManifest dppr =
        recoverAll(dpp, Variant::dpp, Variant::dpp_recovered, p.frecoDpp,
                   "validate/crops/dppr", p.manifestDppr);

    std::map<Variant, DatasetManifest> manifests = {
        {Variant::original, org},
        {Variant::pp, ppm},
        {Variant::dpp, dpp},
        {Variant::pp_recovered, ppr},
        {Variant::dpp_recovered, dppr}};
    CaseGenOptions copts;
    copts.seed = cfg.seed + 8;
    const std::vector<ValidationCase> cases = generateCases(manifests, copts);
    saveCases(cases, p.casesFile);

    const ToyLinearEmbedder fe = embedderFor(cfg);
    std::map<std::string, Image> cache;
    auto img = [&](const FaceRecord& r) -> const Image& {
        auto it = cache.find(r.crop_ref);
        if (it == cache.end())
            it = cache.emplace(r.crop_ref, loadCrop(cfg, r)).first;
        return it->second;
    };

    PrivacyReport report;
    std::vector<ValidationCase> cal, probe;
    std::vector<int> calPred, probePred;
    for (const auto& c : cases) {
        const int pred = matchCrops(img(c.left), img(c.right), fe,
                                    cfg.matcher_threshold);
        auto& rs = report.per_rule[c.rule_id];
        ++rs.cases;
        if (pred == c.ground_truth) ++rs.correct;
        if (c.rule_id <= 3) {
            cal.push_back(c);
            calPred.push_back(pred);
        } else {
            probe.push_back(c);
            probePred.push_back(pred);
        }
    }
    report.matcher_accuracy_r13 = matcherAccuracy(cal, calPred);
    report.p_pre = pPre(probe, probePred).p_pre;

    // similarity metrics for every original-vs-derived pairing, labeled
    auto addMetrics = [&](const DatasetManifest& derived, const std::string& tag) {
        double sSsim = 0.0, sPsnr = 0.0, sIed = 0.0;
        long n = 0;
        bool inf = false;
        for (const auto& [orgRec, derRec] : alignVariantPairs(org, derived)) {
            const Image& a = img(orgRec);
            const Image& b = img(derRec);
            sSsim += ssim(a, b);
            const double pv = psnr(a, b);
            if (std::isinf(pv)) inf = true;
            else sPsnr += pv;
            EmbeddingVector za, zb;
            za.values = fe.embed(a);
            zb.values = fe.embed(b);
            sIed += ied(za, zb);
            ++n;
        }
        report.mean_ssim["original_vs_" + tag] = sSsim / n;
        report.mean_psnr["original_vs_" + tag] =
            inf ? std::numeric_limits<double>::infinity() : sPsnr / n;
        report.mean_ied["original_vs_" + tag] = sIed / n;
    };
    addMetrics(ppm, "pp");
    addMetrics(dpp, "dpp");
    addMetrics(ppr, "pp_recovered");
    addMetrics(dppr, "dpp_recovered");
    {
        // pp vs dpp displacement completes the three-stage IED summary
        double s = 0.0;
        long n = 0;
        for (const auto& [ppRec, dppRec] : alignVariantPairs(ppm, dpp)) {
            EmbeddingVector za, zb;
            za.values = fe.embed(img(ppRec));
            zb.values = fe.embed(img(dppRec));
            s += ied(za, zb);
            ++n;
        }
        report.mean_ied["pp_vs_dpp"] = s / n;
    }

    std::ofstream f(p.privacyReport);
    f << privacyReportToJson(report) << "\n";
    writeProvenance(cfg, "validate",
                    {p.manifestOrg, p.manifestPp, p.manifestDpp, p.frecoPp,
                     p.frecoDpp});
}

void stageReport(const PipelineConfig& cfg) {
    const Paths p(cfg);
    requireArtifact(p.privacyReport, "report", "validate");
    std::ifstream pf(p.privacyReport);
    std::stringstream pbuf;
    pbuf << pf.rdbuf();
    std::optional<std::string> fer;
    if (fs::exists(p.ferReport)) {
        std::ifstream ff(p.ferReport);
        std::stringstream fbuf;
        fbuf << ff.rdbuf();
        fer = fbuf.str();
    }
    ensureDir(joinPath(cfg.out_dir, "report"));
    emitReport(pbuf.str(), fer, p.combined);
    std::vector<std::string> inputs = {p.privacyReport};
    if (fer) inputs.push_back(p.ferReport);
    writeProvenance(cfg, "report", inputs);
}

}  // namespace

const std::vector<std::string>& allStages() {
    static const std::vector<std::string> stages = {
        "synth",        "track",       "priors",        "train-pp",
        "anonymize",    "train-denoise", "denoise",     "train-fer",
        "train-recovery", "validate",  "report"};
    return stages;
}

void runStage(const PipelineConfig& cfg, const std::string& stage) {
    validateConfig(cfg);
    ensureDir(cfg.out_dir);
    if (stage == "synth") stageSynth(cfg);
    else if (stage == "track") stageTrack(cfg);
    else if (stage == "priors") stagePriors(cfg);
    else if (stage == "train-pp") stageTrainPp(cfg);
    else if (stage == "anonymize") stageAnonymize(cfg);
    else if (stage == "train-denoise") stageTrainDenoise(cfg);
    else if (stage == "denoise") stageDenoise(cfg);
    else if (stage == "train-fer") stageTrainFer(cfg);
    else if (stage == "train-recovery") stageTrainRecovery(cfg);
    else if (stage == "validate") stageValidate(cfg);
    else if (stage == "report") stageReport(cfg);
    else throw ParseError("unknown stage '" + stage + "'");
}

void runPipeline(const PipelineConfig& cfg,
                 const std::vector<std::string>& stages) {
    for (const auto& s : stages) runStage(cfg, s);
}

void emitReport(const std::string& privacyJson,
                const std::optional<std::string>& ferJson,
                const std::string& path) {
    ordered_json j;
    j["privacy"] = ordered_json::parse(privacyJson);
    j["fer"] = ferJson ? ordered_json::parse(*ferJson) : ordered_json(nullptr);
    std::ofstream f(path);
    if (!f) throw IoError("emitReport: cannot open " + path);
    f << j.dump(2) << "\n";
    if (!f) throw IoError("emitReport: write failed for " + path);
}

std::string privacyReportPath(const PipelineConfig& cfg) {
    return Paths(cfg).privacyReport;
}
std::string ferReportPath(const PipelineConfig& cfg) {
    return Paths(cfg).ferReport;
}
std::string combinedReportPath(const PipelineConfig& cfg) {
    return Paths(cfg).combined;
}

}  // namespace facepriv
