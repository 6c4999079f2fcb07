// Command-line front end. Exit codes: 0 success, 2 argument errors,
// 3 validation errors, 4 I/O and format errors, 5 numerical failures.
#include <algorithm>
#include <cstdio>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gaborcomp/pipeline.hpp"

using namespace gaborcomp;

namespace {

AtomParams parse_atom_triplet(const std::string& s) {
    AtomParams p;
    char extra = 0;
    if (std::sscanf(s.c_str(), "%d,%d,%d%c", &p.j, &p.t, &p.f, &extra) != 3)
        throw InvalidSpec("build-dict: --dump-atom expects 'j,t,f', got '" + s + "'");
    return p;
}

struct BuildDictArgs {
    int m = 512;
    std::string out;
    std::string dump_atom;

    void run() const {
        if (out.empty() && dump_atom.empty())
            throw InvalidSpec("build-dict: specify --out and/or --dump-atom");
        if (!dump_atom.empty()) {
            const AtomParams p = parse_atom_triplet(dump_atom);
            Eigen::VectorXcd atom = gabor_atom(p, m);
            atom /= atom.norm();
            std::printf("re,im\n");
            for (long i = 0; i < atom.size(); ++i)
                std::printf("%.17g,%.17g\n", atom[i].real(), atom[i].imag());
        }
        if (!out.empty()) {
            const Dictionary dict = build_multires(m);
            write_dictionary(out, dict);
            std::cout << "dictionary M=" << dict.m << " levels=" << dict.j_count
                      << " columns=" << dict.cols() << " -> " << out << '\n';
        }
    }
};

struct SynthArgs {
    std::string config;
    std::string out_dir;

    void run() const {
        const RunConfig cfg = RunConfig::from_json_file(config);
        if (cfg.synth_specs.empty())
            throw InvalidSpec("synth: config has no synth.specs");
        const SegmentSet set = make_synth_dataset(cfg.synth_specs, cfg.m,
                                                  cfg.sample_rate,
                                                  cfg.segments_per_recording);
        const std::filesystem::path dir =
            out_dir.empty() ? cfg.data_dir() : std::filesystem::path(out_dir);
        const std::filesystem::path manifest = write_segment_dir(set, dir);
        std::cout << "wrote " << set.segments.size() << " segments -> "
                  << manifest.string() << '\n';
    }
};

struct DecomposeArgs {
    std::string manifest;
    std::string dict_path;
    std::string out_dir = "codes";
    int m = 0;  // 0 = take the dictionary's M
    int zeta = 511;
    double residual_tol = 0.0;
    std::string joint_by;
    std::string length_fit = "resample";

    void run() const {
        const Dictionary dict = read_dictionary(dict_path);
        if (m != 0 && m != dict.m)
            throw InvalidResolution("decompose: dictionary has M=" +
                                    std::to_string(dict.m) + " but M=" +
                                    std::to_string(m) + " was requested");
        const LengthFit fit =
            length_fit == "pad" ? LengthFit::Pad : LengthFit::Resample;
        const SegmentSet set = load_segments(manifest, dict.m, fit);
        PursuitConfig pursuit;
        pursuit.zeta = zeta;
        pursuit.residual_tol = residual_tol;
        const auto codes =
            decompose_to_dir(out_dir, set, dict, pursuit, !joint_by.empty());
        std::cout << "decomposed " << codes.size() << " segments (zeta=" << zeta
                  << (joint_by.empty() ? "" : ", joint per recording")
                  << ") -> " << out_dir << '\n';
    }
};

struct FeaturizeArgs {
    std::string codes_dir;
    std::string out;
    std::string mode = "squared_magnitude";
    bool normalize = false;
    std::string dump_csv;

    void run() const {
        std::vector<std::filesystem::path> files;
        if (!std::filesystem::is_directory(codes_dir))
            throw IoError("featurize: '" + codes_dir + "' is not a directory");
        for (const auto& entry : std::filesystem::directory_iterator(codes_dir))
            if (entry.is_regular_file() && entry.path().extension() == ".mrgc")
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        if (files.empty())
            throw EmptyInput("featurize: no .mrgc files in " + codes_dir);
        std::vector<CodeFile> codes;
        codes.reserve(files.size());
        for (const auto& f : files) codes.push_back(read_code(f));
        const auto stacks =
            featurize_all(codes, feature_mode_from_string(mode), normalize);
        write_feature_file(out, stacks);
        std::cout << "featurized " << stacks.size() << " codes (" << mode << ") -> "
                  << out << '\n';
        if (!dump_csv.empty()) dump(stacks);
    }

    // One CSV per resolution level, written next to the feature file.
    void dump(const std::vector<FeatureStack>& stacks) const {
        const auto it = std::find_if(stacks.begin(), stacks.end(),
                                     [this](const FeatureStack& s) {
                                         return s.segment_ref == dump_csv;
                                     });
        if (it == stacks.end())
            throw InvalidSpec("featurize: no stack named '" + dump_csv + "'");
        const auto dir = std::filesystem::path(out).parent_path();
        for (int j = 1; j <= it->j_count(); ++j) {
            const auto path = dir / (dump_csv + "_A" + std::to_string(j) + ".csv");
            std::ofstream fh(path);
            if (!fh) throw IoError("cannot open " + path.string());
            const Eigen::MatrixXd& mat = it->matrices[static_cast<size_t>(j - 1)];
            for (long r = 0; r < mat.rows(); ++r) {
                for (long c = 0; c < mat.cols(); ++c) {
                    if (c) fh << ',';
                    char buf[32];
                    std::snprintf(buf, sizeof(buf), "%.17g", mat(r, c));
                    fh << buf;
                }
                fh << '\n';
            }
            std::cout << "dumped " << path.string() << '\n';
        }
    }
};

struct TrainArgs {
    std::string features;
    std::string out = "model.mrgm";
    std::string curves;
    int heads = 4;
    int d_head = 32;
    TrainConfig train;
    double val_split = 0.0;

    void run() const {
        const auto stacks = read_feature_file(features);
        std::vector<EpochStats> history;
        const Model model = fit_stacks(stacks, heads, d_head, train, val_split,
                                       train.seed, &history);
        write_model(out, model);
        if (!curves.empty()) write_curves_csv(curves, history);
        std::cout << "trained " << model.params.size() << " parameters over "
                  << history.size() << " epochs";
        if (!history.empty()) {
            const EpochStats& last = history.back();
            std::cout << " (train acc " << last.train_acc;
            if (last.val_acc) std::cout << ", val acc " << *last.val_acc;
            std::cout << ")";
        }
        std::cout << " -> " << out << '\n';
    }
};

struct PredictArgs {
    std::string model_path;
    std::string features;
    std::string out;

    void run() const {
        const Model model = read_model(model_path);
        const auto stacks = read_feature_file(features);
        if (stacks.empty()) throw EmptyInput("predict: no feature stacks");
        std::vector<PredictionRow> rows;
        rows.reserve(stacks.size());
        for (const FeatureStack& stack : stacks) {
            auto [cls, probs] = predict(stack, model);
            rows.push_back({stack.segment_ref, stack.label, cls, std::move(probs)});
        }
        if (out.empty()) {
            write_predictions_csv(std::cout, rows);
        } else {
            write_predictions_csv(std::filesystem::path(out), rows);
            std::cout << "predicted " << rows.size() << " segments -> " << out << '\n';
        }
    }
};

struct EvalArgs {
    std::string features;
    std::string out = "report.json";
    int k = 5;
    int heads = 4;
    int d_head = 32;
    TrainConfig train;
    uint64_t seed = 0;
    std::string group_by;

    void run() const {
        const auto stacks = read_feature_file(features);
        TrainConfig tc = train;
        tc.seed = seed;
        const CvResult result =
            eval_cv(stacks, k, heads, d_head, tc, seed, !group_by.empty());
        ReportContext ctx;
        ctx.k = k;
        ctx.seed = seed;
        ctx.heads = heads;
        ctx.d_head = d_head;
        ctx.train = tc;
        write_report_json(out, result, ctx);
        std::cout << "macro accuracy " << result.macro_accuracy.mean << " +/- "
                  << result.macro_accuracy.stddev << " over " << k << " folds -> "
                  << out << '\n';
    }
};

struct PipelineArgs {
    std::string config;

    void run() const { run_pipeline(RunConfig::from_json_file(config), std::cout); }
};

void add_train_options(CLI::App* cmd, TrainConfig& train) {
    cmd->add_option("--lr", train.lr, "learning rate");
    cmd->add_option("--momentum", train.momentum, "momentum factor");
    cmd->add_option("--batch", train.batch_size, "mini-batch size");
    cmd->add_option("--epochs", train.epochs, "training epochs");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multiresolution Gabor decomposition and murmur classification"};
    app.require_subcommand(1);

    std::function<void()> action;
    std::string active = "gaborcomp";
    const auto arm = [&](CLI::App* cmd, std::function<void()> fn) {
        cmd->callback([&action, &active, cmd, fn = std::move(fn)] {
            action = fn;
            active = cmd->get_name();
        });
    };

    BuildDictArgs bd;
    CLI::App* build_dict = app.add_subcommand(
        "build-dict", "build the multiresolution Gabor dictionary");
    build_dict->add_option("--m", bd.m, "segment length (power of two)");
    build_dict->add_option("--out", bd.out, "output .mrgd path");
    build_dict->add_option("--dump-atom", bd.dump_atom,
                           "print one atom as re,im CSV; format j,t,f");
    arm(build_dict, [&bd] { bd.run(); });

    SynthArgs sy;
    CLI::App* synth =
        app.add_subcommand("synth", "generate a synthetic murmur dataset");
    synth->add_option("--config", sy.config, "run config JSON")->required();
    synth->add_option("--out-dir", sy.out_dir, "override the output directory");
    arm(synth, [&sy] { sy.run(); });

    DecomposeArgs de;
    CLI::App* decompose = app.add_subcommand(
        "decompose", "sparse-code segments against a dictionary");
    decompose->add_option("--manifest", de.manifest, "segment manifest CSV")
        ->required();
    decompose->add_option("--dict", de.dict_path, "dictionary .mrgd path")->required();
    decompose->add_option("--out-dir", de.out_dir, "directory for .mrgc codes");
    decompose->add_option("--m", de.m, "expected segment length (0 = dictionary's)");
    decompose->add_option("--zeta", de.zeta, "sparsity budget");
    decompose->add_option("--residual-tol", de.residual_tol,
                          "relative residual stopping threshold");
    decompose->add_option("--joint-by", de.joint_by,
                          "share support within groups (recording_id)")
        ->check(CLI::IsMember({"recording_id"}));
    decompose->add_option("--length-fit", de.length_fit, "resample or pad")
        ->check(CLI::IsMember({"resample", "pad"}));
    arm(decompose, [&de] { de.run(); });

    FeaturizeArgs fe;
    CLI::App* featurize_cmd = app.add_subcommand(
        "featurize", "reshape sparse codes into time-frequency feature stacks");
    featurize_cmd->add_option("--codes", fe.codes_dir, "directory of .mrgc files")
        ->required();
    featurize_cmd->add_option("--out", fe.out, "output .mrgf path")->required();
    featurize_cmd->add_option("--mode", fe.mode, "magnitude or squared_magnitude");
    featurize_cmd->add_flag("--normalize", fe.normalize,
                            "scale each stack to unit max entry");
    arm(featurize_cmd, [&fe] { fe.run(); });

    TrainArgs tr;
    CLI::App* train_cmd =
        app.add_subcommand("train", "train the classifier on a feature file");
    train_cmd->add_option("--features", tr.features, "input .mrgf path")->required();
    train_cmd->add_option("--out", tr.out, "output .mrgm path");
    train_cmd->add_option("--curves", tr.curves, "write per-epoch stats CSV here");
    train_cmd->add_option("--heads", tr.heads, "attention heads");
    train_cmd->add_option("--d-head", tr.d_head, "per-head dimension");
    add_train_options(train_cmd, tr.train);
    train_cmd->add_option("--seed", tr.train.seed, "init and shuffle seed");
    train_cmd->add_option("--val-split", tr.val_split,
                          "held-out validation fraction");
    arm(train_cmd, [&tr] { tr.run(); });

    PredictArgs pr;
    CLI::App* predict_cmd =
        app.add_subcommand("predict", "classify feature stacks with a saved model");
    predict_cmd->add_option("--model", pr.model_path, "model .mrgm path")->required();
    predict_cmd->add_option("--features", pr.features, "input .mrgf path")->required();
    predict_cmd->add_option("--out", pr.out, "predictions CSV (default stdout)");
    arm(predict_cmd, [&pr] { pr.run(); });

    EvalArgs ev;
    CLI::App* eval_cmd = app.add_subcommand(
        "eval", "stratified k-fold cross-validation on a feature file");
    eval_cmd->add_option("--features", ev.features, "input .mrgf path")->required();
    eval_cmd->add_option("--out", ev.out, "report JSON path");
    eval_cmd->add_option("--k", ev.k, "fold count");
    eval_cmd->add_option("--heads", ev.heads, "attention heads");
    eval_cmd->add_option("--d-head", ev.d_head, "per-head dimension");
    add_train_options(eval_cmd, ev.train);
    eval_cmd->add_option("--seed", ev.seed, "fold and training seed");
    eval_cmd->add_option("--group-by", ev.group_by,
                         "keep groups in one fold (recording_id)")
        ->check(CLI::IsMember({"recording_id"}));
    arm(eval_cmd, [&ev] { ev.run(); });

    PipelineArgs pl;
    CLI::App* pipeline_cmd =
        app.add_subcommand("pipeline", "run every stage from a config file");
    pipeline_cmd->add_option("--config", pl.config, "run config JSON")->required();
    arm(pipeline_cmd, [&pl] { pl.run(); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        action();
        return 0;
    } catch (const IoError& e) {
        std::cerr << "error: " << active << ": " << e.what() << '\n';
        return 4;
    } catch (const DecodeError& e) {
        std::cerr << "error: " << active << ": " << e.what() << '\n';
        return 4;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << active << ": " << e.what() << '\n';
        return 5;
    } catch (const Error& e) {
        std::cerr << "error: " << active << ": " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << active << ": " << e.what() << '\n';
        return 1;
    }
}
