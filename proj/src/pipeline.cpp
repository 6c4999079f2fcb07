#include "gaborcomp/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#include <json.hpp>

namespace gaborcomp {

namespace {

using nlohmann::json;

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::filesystem::path& p) {
    return p.is_absolute() ? p : base / p;
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (const auto& item : obj.items())
        if (!allowed.count(item.key()))
            throw InvalidSpec("config: unknown key '" + item.key() + "' in " + where);
}

double parse_snr(const json& v) {
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
        throw InvalidSpec("config: snr_db must be a number or \"inf\", got '" + s + "'");
    }
    return v.get<double>();
}

std::string segment_ref_of(size_t row) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "seg%06zu", row);
    return buf;
}

}  // namespace

RunConfig RunConfig::from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw DecodeError("config " + path.string() + ": " + e.what());
    }
    if (!doc.is_object()) throw DecodeError("config " + path.string() + " is not an object");

    reject_unknown_keys(doc,
                        {"m", "seed", "synth", "manifest", "length_fit", "out_dir",
                         "zeta", "residual_tol", "joint_by_recording", "feature_mode",
                         "normalize_features", "heads", "d_head", "lr", "momentum",
                         "batch_size", "epochs", "val_fraction", "k",
                         "group_by_recording"},
                        "config");

    RunConfig cfg;
    const std::filesystem::path base = path.parent_path();
    cfg.m = doc.value("m", cfg.m);
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.out_dir = resolve(base, doc.value("out_dir", std::string("out")));

    if (doc.contains("synth")) {
        const json& synth = doc["synth"];
        reject_unknown_keys(synth, {"sample_rate", "segments_per_recording", "specs"},
                            "synth");
        cfg.sample_rate = synth.value("sample_rate", cfg.sample_rate);
        cfg.segments_per_recording =
            synth.value("segments_per_recording", cfg.segments_per_recording);
        if (!synth.contains("specs") || !synth["specs"].is_array() ||
            synth["specs"].empty())
            throw InvalidSpec("config: synth.specs must be a non-empty array");
        uint64_t ordinal = 0;
        for (const json& js : synth["specs"]) {
            reject_unknown_keys(js, {"shape", "band_hz", "snr_db", "count", "seed"},
                                "synth spec");
            SynthSpec spec;
            spec.shape = murmur_class_from_string(js.at("shape").get<std::string>());
            if (js.contains("band_hz")) {
                const auto band = js["band_hz"].get<std::vector<double>>();
                if (band.size() != 2)
                    throw InvalidSpec("config: band_hz must hold [low, high]");
                spec.band_low_hz = band[0];
                spec.band_high_hz = band[1];
            }
            if (js.contains("snr_db")) spec.noise_snr_db = parse_snr(js["snr_db"]);
            spec.count = js.value("count", spec.count);
            spec.seed = js.contains("seed") ? js["seed"].get<uint64_t>()
                                            : mix_seed(cfg.seed, ordinal);
            cfg.synth_specs.push_back(spec);
            ++ordinal;
        }
    }
    if (doc.contains("manifest"))
        cfg.manifest = resolve(base, doc["manifest"].get<std::string>());

    if (doc.contains("length_fit")) {
        const std::string fit = doc["length_fit"].get<std::string>();
        if (fit == "resample") cfg.length_fit = LengthFit::Resample;
        else if (fit == "pad") cfg.length_fit = LengthFit::Pad;
        else throw InvalidSpec("config: length_fit must be 'resample' or 'pad'");
    }

    cfg.zeta = doc.value("zeta", cfg.zeta);
    cfg.residual_tol = doc.value("residual_tol", cfg.residual_tol);
    cfg.joint_by_recording = doc.value("joint_by_recording", cfg.joint_by_recording);
    if (doc.contains("feature_mode"))
        cfg.feature_mode = feature_mode_from_string(doc["feature_mode"].get<std::string>());
    cfg.normalize_features = doc.value("normalize_features", cfg.normalize_features);
    cfg.heads = doc.value("heads", cfg.heads);
    cfg.d_head = doc.value("d_head", cfg.d_head);
    cfg.train.lr = doc.value("lr", cfg.train.lr);
    cfg.train.momentum = doc.value("momentum", cfg.train.momentum);
    cfg.train.batch_size = doc.value("batch_size", cfg.train.batch_size);
    cfg.train.epochs = doc.value("epochs", cfg.train.epochs);
    cfg.train.seed = cfg.seed;
    cfg.val_fraction = doc.value("val_fraction", cfg.val_fraction);
    cfg.k = doc.value("k", cfg.k);
    cfg.group_by_recording = doc.value("group_by_recording", cfg.group_by_recording);
    return cfg;
}

SegmentSet pipeline_data(const RunConfig& cfg) {
    if (!cfg.synth_specs.empty()) {
        SegmentSet set = make_synth_dataset(cfg.synth_specs, cfg.m, cfg.sample_rate,
                                            cfg.segments_per_recording);
        write_segment_dir(set, cfg.data_dir());
        return set;
    }
    if (cfg.manifest.empty())
        throw InvalidSpec("config: either synth.specs or manifest is required");
    SegmentSet set = load_segments(cfg.manifest, cfg.m, cfg.length_fit);
    set.validate_length(cfg.m);
    return set;
}

Dictionary pipeline_dictionary(const RunConfig& cfg) {
    Dictionary dict = build_multires(cfg.m);
    write_dictionary(cfg.dict_path(), dict);
    return dict;
}

std::vector<CodeFile> decompose_to_dir(const std::filesystem::path& dir,
                                       const SegmentSet& set, const Dictionary& dict,
                                       const PursuitConfig& pursuit,
                                       bool joint_by_recording) {
    if (set.segments.empty()) throw EmptyInput("decompose: no segments");
    set.validate_length(dict.m);
    std::filesystem::create_directories(dir);

    const size_t n = set.segments.size();
    std::vector<CodeFile> out(n);
    const auto finalize = [&](size_t row, SparseCode&& code) {
        const Segment& seg = set.segments[row];
        CodeFile& cf = out[row];
        cf.code = std::move(code);
        cf.code.segment_ref = segment_ref_of(row);
        cf.meta.segment_ref = cf.code.segment_ref;
        cf.meta.recording_id = seg.recording_id;
        cf.meta.label = seg.label;
        cf.meta.location = seg.location;
        cf.meta.zeta = pursuit.zeta;
        cf.meta.residual_tol = pursuit.residual_tol;
        write_code(dir / (cf.meta.segment_ref + ".mrgc"), cf.code, cf.meta);
    };

    if (!joint_by_recording) {
        parallel_for(static_cast<int>(n), [&](int i) {
            const Eigen::Map<const Eigen::VectorXd> x(set.segments[i].samples.data(),
                                                      dict.m);
            finalize(static_cast<size_t>(i), comp_single(x, dict, pursuit));
        });
        return out;
    }

    // Group rows by recording in order of first appearance.
    std::vector<std::vector<size_t>> groups;
    std::map<std::string, size_t> group_of;
    for (size_t i = 0; i < n; ++i) {
        const std::string& id = set.segments[i].recording_id;
        auto it = group_of.find(id);
        if (it == group_of.end()) {
            it = group_of.emplace(id, groups.size()).first;
            groups.emplace_back();
        }
        groups[it->second].push_back(i);
    }
    parallel_for(static_cast<int>(groups.size()), [&](int g) {
        std::vector<Eigen::VectorXd> members;
        members.reserve(groups[g].size());
        for (const size_t row : groups[g])
            members.emplace_back(Eigen::Map<const Eigen::VectorXd>(
                set.segments[row].samples.data(), dict.m));
        JointSparseCode joint = comp_joint(members, dict, pursuit);
        for (size_t k = 0; k < groups[g].size(); ++k)
            finalize(groups[g][k], std::move(joint.codes[k]));
    });
    return out;
}

std::vector<CodeFile> decompose_segments(const RunConfig& cfg, const SegmentSet& set,
                                         const Dictionary& dict) {
    if (cfg.m != dict.m)
        throw InvalidResolution("decompose: dictionary has M=" + std::to_string(dict.m) +
                                " but M=" + std::to_string(cfg.m) + " was requested");
    PursuitConfig pursuit;
    pursuit.zeta = cfg.zeta;
    pursuit.residual_tol = cfg.residual_tol;
    return decompose_to_dir(cfg.codes_dir(), set, dict, pursuit,
                            cfg.joint_by_recording);
}

std::vector<FeatureStack> featurize_all(const std::vector<CodeFile>& codes,
                                        FeatureMode mode, bool normalize) {
    if (codes.empty()) throw EmptyInput("featurize: no codes");
    std::vector<FeatureStack> stacks;
    stacks.reserve(codes.size());
    for (const CodeFile& cf : codes) {
        FeatureStack stack = featurize(cf.code, mode, cf.meta.label);
        stack.recording_id = cf.meta.recording_id;
        if (normalize) normalize_stack(stack);
        stacks.push_back(std::move(stack));
    }
    return stacks;
}

std::vector<FeatureStack> featurize_codes(const RunConfig& cfg,
                                          const std::vector<CodeFile>& codes) {
    std::vector<FeatureStack> stacks =
        featurize_all(codes, cfg.feature_mode, cfg.normalize_features);
    write_feature_file(cfg.features_path(), stacks);
    return stacks;
}

Model fit_stacks(const std::vector<FeatureStack>& stacks, int heads, int d_head,
                 const TrainConfig& train_cfg, double val_fraction, uint64_t split_seed,
                 std::vector<EpochStats>* history) {
    if (stacks.empty()) throw EmptyInput("train: no feature stacks");
    std::vector<const FeatureStack*> train_split, val_split;
    if (val_fraction > 0.0) {
        if (val_fraction >= 0.5)
            throw InvalidSpec("train: val_fraction must lie in [0, 0.5)");
        std::vector<int> labels;
        labels.reserve(stacks.size());
        for (const FeatureStack& s : stacks) {
            if (!s.label)
                throw InvalidLabel("train: stack '" + s.segment_ref + "' has no label");
            labels.push_back(static_cast<int>(*s.label));
        }
        const int k_val =
            std::max(2, static_cast<int>(std::lround(1.0 / val_fraction)));
        const FoldPlan plan = stratified_kfold(labels, k_val, mix_seed(split_seed, 3));
        for (size_t i = 0; i < stacks.size(); ++i) {
            if (plan.assignment[i] == 0) val_split.push_back(&stacks[i]);
            else train_split.push_back(&stacks[i]);
        }
    } else {
        for (const FeatureStack& s : stacks) train_split.push_back(&s);
    }

    const ModelArch arch = ModelArch::make(stacks.front().m, heads, d_head);
    return train(train_split, val_split, arch, train_cfg, history);
}

Model train_stacks(const RunConfig& cfg, const std::vector<FeatureStack>& stacks) {
    std::vector<EpochStats> history;
    Model model = fit_stacks(stacks, cfg.heads, cfg.d_head, cfg.train, cfg.val_fraction,
                             cfg.seed, &history);
    write_model(cfg.model_path(), model);
    write_curves_csv(cfg.curves_path(), history);
    return model;
}

CvResult eval_cv(const std::vector<FeatureStack>& stacks, int k, int heads, int d_head,
                 const TrainConfig& train_cfg, uint64_t seed, bool group_by_recording) {
    if (stacks.empty()) throw EmptyInput("eval: no feature stacks");
    FoldPlan plan;
    const FoldPlan* plan_ptr = nullptr;
    if (group_by_recording) {
        std::vector<int> labels;
        std::vector<std::string> groups;
        for (const FeatureStack& s : stacks) {
            if (!s.label)
                throw InvalidLabel("eval: stack '" + s.segment_ref + "' has no label");
            labels.push_back(static_cast<int>(*s.label));
            groups.push_back(s.recording_id);
        }
        plan = stratified_group_kfold(labels, groups, k, seed);
        plan_ptr = &plan;
    }
    return cross_validate_transformer(stacks, k, heads, d_head, train_cfg, seed,
                                      plan_ptr);
}

CvResult eval_stacks(const RunConfig& cfg, const std::vector<FeatureStack>& stacks) {
    const CvResult result = eval_cv(stacks, cfg.k, cfg.heads, cfg.d_head, cfg.train,
                                    cfg.seed, cfg.group_by_recording);
    ReportContext ctx;
    ctx.k = cfg.k;
    ctx.seed = cfg.seed;
    ctx.heads = cfg.heads;
    ctx.d_head = cfg.d_head;
    ctx.train = cfg.train;
    write_report_json(cfg.report_path(), result, ctx);
    return result;
}

void run_pipeline(const RunConfig& cfg, std::ostream& log) {
    const SegmentSet set = pipeline_data(cfg);
    log << "data: " << set.segments.size() << " segments";
    if (!cfg.synth_specs.empty()) log << " -> " << cfg.data_dir().string();
    log << '\n' << std::flush;

    const Dictionary dict = pipeline_dictionary(cfg);
    log << "dictionary: " << dict.m << "x" << dict.cols() << " -> "
        << cfg.dict_path().string() << '\n' << std::flush;

    const std::vector<CodeFile> codes = decompose_segments(cfg, set, dict);
    log << "decompose: " << codes.size() << " codes (zeta=" << cfg.zeta << ") -> "
        << cfg.codes_dir().string() << '\n' << std::flush;

    const std::vector<FeatureStack> stacks = featurize_codes(cfg, codes);
    log << "featurize: " << stacks.size() << " stacks (" << to_string(cfg.feature_mode)
        << ") -> " << cfg.features_path().string() << '\n' << std::flush;

    train_stacks(cfg, stacks);
    log << "train: model -> " << cfg.model_path().string() << '\n' << std::flush;

    const CvResult result = eval_stacks(cfg, stacks);
    log << "eval: macro accuracy " << result.macro_accuracy.mean << " +/- "
        << result.macro_accuracy.stddev << " -> " << cfg.report_path().string() << '\n'
        << std::flush;
}

}  // namespace gaborcomp
