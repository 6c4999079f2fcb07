#include "gaborcomp/formats.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "gaborcomp/bytes.hpp"

namespace gaborcomp {

namespace {

using nlohmann::json;

constexpr uint16_t kFormatVersion = 1;

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + path.string());
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

void expect_magic(std::istream& in, const char* magic, const std::filesystem::path& path,
                  const char* kind) {
    char buf[4];
    bytes::get_bytes(in, buf, 4, "magic");
    if (std::string(buf, buf + 4) != magic)
        throw DecodeError(path.string() + " is not a " + kind + " file (bad magic)");
    const uint16_t version = bytes::get_u16(in, "version");
    if (version != kFormatVersion)
        throw DecodeError(path.string() + ": unsupported " + kind + " version " +
                          std::to_string(version));
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void write_dictionary(const std::filesystem::path& path, const Dictionary& dict) {
    if (dict.m <= 0 || dict.atoms.cols() != dict.cols())
        throw DimError("write_dictionary: dictionary is empty or inconsistent");
    std::ofstream out = open_out(path);
    bytes::put_bytes(out, "MRGD", 4);
    bytes::put_u16(out, kFormatVersion);
    bytes::put_u32(out, static_cast<uint32_t>(dict.m));
    bytes::put_u32(out, static_cast<uint32_t>(dict.j_count));
    for (long c = 0; c < dict.cols(); ++c) {
        for (int r = 0; r < dict.m; ++r) {
            bytes::put_f64(out, dict.atoms(r, c).real());
            bytes::put_f64(out, dict.atoms(r, c).imag());
        }
    }
    for (long c = 0; c < dict.cols(); ++c) bytes::put_f64(out, dict.raw_norms[c]);
    finish(out, path);
}

Dictionary read_dictionary(const std::filesystem::path& path) {
    std::ifstream in = open_in(path);
    expect_magic(in, "MRGD", path, "dictionary");
    Dictionary dict;
    dict.m = static_cast<int>(bytes::get_u32(in, "M"));
    dict.j_count = static_cast<int>(bytes::get_u32(in, "level count"));
    if (dict.m < 8 || dict.m > (1 << 24) || (dict.m & (dict.m - 1)) != 0)
        throw DecodeError(path.string() + ": stored M=" + std::to_string(dict.m) +
                          " is not a power of two in range");
    if (dict.j_count != log2_exact(dict.m, "read_dictionary") - 1)
        throw DecodeError(path.string() + ": level count " +
                          std::to_string(dict.j_count) + " does not match M=" +
                          std::to_string(dict.m));
    dict.atoms.resize(dict.m, dict.cols());
    for (long c = 0; c < dict.cols(); ++c)
        for (int r = 0; r < dict.m; ++r) {
            const double re = bytes::get_f64(in, "atom value");
            const double im = bytes::get_f64(in, "atom value");
            dict.atoms(r, c) = cplx(re, im);
        }
    dict.raw_norms.resize(dict.cols());
    for (long c = 0; c < dict.cols(); ++c)
        dict.raw_norms[c] = bytes::get_f64(in, "raw norm");
    return dict;
}

void write_code(const std::filesystem::path& path, const SparseCode& code,
                const CodeMeta& meta) {
    json header;
    header["segment_ref"] = meta.segment_ref;
    header["recording_id"] = meta.recording_id;
    header["label"] = meta.label ? json(to_string(*meta.label)) : json(nullptr);
    header["location"] = to_string(meta.location);
    header["m"] = code.m;
    header["j_count"] = code.j_count;
    header["zeta"] = meta.zeta;
    header["residual_tol"] = meta.residual_tol;
    header["support"] = code.support;
    header["residual_norms"] = code.residual_norms;
    header["dependent_cols"] = code.dependent_cols;
    const std::string text = header.dump();

    std::ofstream out = open_out(path);
    bytes::put_bytes(out, "MRGC", 4);
    bytes::put_u16(out, kFormatVersion);
    bytes::put_u32(out, static_cast<uint32_t>(text.size()));
    bytes::put_bytes(out, text.data(), text.size());
    for (const long col : code.support) {
        bytes::put_f64(out, code.coefficients[col].real());
        bytes::put_f64(out, code.coefficients[col].imag());
    }
    finish(out, path);
}

CodeFile read_code(const std::filesystem::path& path) {
    std::ifstream in = open_in(path);
    expect_magic(in, "MRGC", path, "sparse code");
    const uint32_t len = bytes::get_u32(in, "header length");
    std::string text(len, '\0');
    bytes::get_bytes(in, text.data(), len, "header");
    json header;
    try {
        header = json::parse(text);
    } catch (const json::exception& e) {
        throw DecodeError(path.string() + ": bad header json: " + e.what());
    }

    CodeFile out;
    try {
        out.meta.segment_ref = header.at("segment_ref").get<std::string>();
        out.meta.recording_id = header.at("recording_id").get<std::string>();
        if (!header.at("label").is_null())
            out.meta.label = murmur_class_from_string(header.at("label").get<std::string>());
        out.meta.location = site_from_string(header.at("location").get<std::string>());
        out.meta.zeta = header.at("zeta").get<int>();
        out.meta.residual_tol = header.at("residual_tol").get<double>();
        out.code.m = header.at("m").get<int>();
        out.code.j_count = header.at("j_count").get<int>();
        out.code.support = header.at("support").get<std::vector<long>>();
        out.code.residual_norms = header.at("residual_norms").get<std::vector<double>>();
        out.code.dependent_cols = header.at("dependent_cols").get<std::vector<long>>();
    } catch (const json::exception& e) {
        throw DecodeError(path.string() + ": incomplete header: " + e.what());
    }
    if (out.code.m < 1 || out.code.j_count < 1)
        throw DecodeError(path.string() + ": invalid dimensions in header");
    out.code.segment_ref = out.meta.segment_ref;
    const long cols = static_cast<long>(out.code.m) * out.code.j_count;
    out.code.coefficients = Eigen::VectorXcd::Zero(cols);
    for (const long col : out.code.support) {
        if (col < 0 || col >= cols)
            throw DecodeError(path.string() + ": support index " + std::to_string(col) +
                              " outside [0, " + std::to_string(cols) + ")");
        const double re = bytes::get_f64(in, "coefficient");
        const double im = bytes::get_f64(in, "coefficient");
        out.code.coefficients[col] = cplx(re, im);
    }
    return out;
}

void write_feature_file(const std::filesystem::path& path,
                        const std::vector<FeatureStack>& stacks) {
    if (stacks.empty()) throw EmptyInput("write_feature_file: no stacks");
    const int m = stacks.front().m;
    const int j_count = stacks.front().j_count();
    const FeatureMode mode = stacks.front().mode;
    for (const FeatureStack& s : stacks)
        if (s.m != m || s.j_count() != j_count || s.mode != mode)
            throw DimError("write_feature_file: stacks disagree on shape or mode");

    std::ofstream out = open_out(path);
    bytes::put_bytes(out, "MRGF", 4);
    bytes::put_u16(out, kFormatVersion);
    bytes::put_u32(out, static_cast<uint32_t>(stacks.size()));
    bytes::put_u32(out, static_cast<uint32_t>(m));
    bytes::put_u32(out, static_cast<uint32_t>(j_count));
    bytes::put_u8(out, static_cast<uint8_t>(mode));
    for (const FeatureStack& s : stacks) {
        bytes::put_u32(out, static_cast<uint32_t>(s.segment_ref.size()));
        bytes::put_bytes(out, s.segment_ref.data(), s.segment_ref.size());
        bytes::put_u32(out, static_cast<uint32_t>(s.recording_id.size()));
        bytes::put_bytes(out, s.recording_id.data(), s.recording_id.size());
        bytes::put_u8(out, s.label ? static_cast<uint8_t>(*s.label) : 255);
        for (const Eigen::MatrixXd& mat : s.matrices)
            for (long r = 0; r < mat.rows(); ++r)
                for (long c = 0; c < mat.cols(); ++c)
                    bytes::put_f32(out, static_cast<float>(mat(r, c)));
    }
    finish(out, path);
}

std::vector<FeatureStack> read_feature_file(const std::filesystem::path& path) {
    std::ifstream in = open_in(path);
    expect_magic(in, "MRGF", path, "feature");
    const uint32_t count = bytes::get_u32(in, "stack count");
    const int m = static_cast<int>(bytes::get_u32(in, "M"));
    const int j_count = static_cast<int>(bytes::get_u32(in, "level count"));
    const uint8_t mode_byte = bytes::get_u8(in, "mode");
    if (count == 0 || count > (1u << 24))
        throw DecodeError(path.string() + ": implausible stack count");
    if (m < 8 || (m & (m - 1)) != 0 || j_count != log2_exact(m, "read_feature_file") - 1)
        throw DecodeError(path.string() + ": inconsistent M/level header");
    if (mode_byte > 1) throw DecodeError(path.string() + ": unknown feature mode");

    std::vector<FeatureStack> stacks(count);
    for (FeatureStack& s : stacks) {
        s.m = m;
        s.mode = static_cast<FeatureMode>(mode_byte);
        const uint32_t ref_len = bytes::get_u32(in, "segment_ref length");
        if (ref_len > 4096) throw DecodeError(path.string() + ": implausible ref length");
        s.segment_ref.resize(ref_len);
        bytes::get_bytes(in, s.segment_ref.data(), ref_len, "segment_ref");
        const uint32_t rec_len = bytes::get_u32(in, "recording_id length");
        if (rec_len > 4096) throw DecodeError(path.string() + ": implausible id length");
        s.recording_id.resize(rec_len);
        bytes::get_bytes(in, s.recording_id.data(), rec_len, "recording_id");
        const uint8_t label = bytes::get_u8(in, "label");
        if (label != 255) {
            if (label >= kNumClasses)
                throw DecodeError(path.string() + ": label byte " + std::to_string(label) +
                                  " outside the class range");
            s.label = static_cast<MurmurClass>(label);
        }
        s.matrices.reserve(static_cast<size_t>(j_count));
        for (int j = 1; j <= j_count; ++j) {
            const int rows = 1 << j;
            const int cols = m / rows;
            Eigen::MatrixXd mat(rows, cols);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c)
                    mat(r, c) = static_cast<double>(bytes::get_f32(in, "feature value"));
            s.matrices.push_back(std::move(mat));
        }
    }
    return stacks;
}

void write_model(const std::filesystem::path& path, const Model& model) {
    std::ofstream out = open_out(path);
    bytes::put_bytes(out, "MRGM", 4);
    bytes::put_u16(out, kFormatVersion);
    bytes::put_u32(out, static_cast<uint32_t>(model.arch.m));
    bytes::put_u32(out, static_cast<uint32_t>(model.arch.j_count));
    bytes::put_u32(out, static_cast<uint32_t>(model.arch.heads));
    bytes::put_u32(out, static_cast<uint32_t>(model.arch.d_head));
    bytes::put_u32(out, static_cast<uint32_t>(model.arch.d_model));
    bytes::put_u32(out, static_cast<uint32_t>(model.arch.n_classes));
    for (const BranchShape& b : model.arch.branches) {
        bytes::put_u32(out, static_cast<uint32_t>(b.kh));
        bytes::put_u32(out, static_cast<uint32_t>(b.kw));
    }
    bytes::put_u64(out, model.init_seed);
    bytes::put_u64(out, static_cast<uint64_t>(model.params.size()));
    for (long i = 0; i < model.params.size(); ++i) bytes::put_f64(out, model.params[i]);
    finish(out, path);
}

Model read_model(const std::filesystem::path& path) {
    std::ifstream in = open_in(path);
    expect_magic(in, "MRGM", path, "model");
    const int m = static_cast<int>(bytes::get_u32(in, "M"));
    const int j_count = static_cast<int>(bytes::get_u32(in, "level count"));
    const int heads = static_cast<int>(bytes::get_u32(in, "heads"));
    const int d_head = static_cast<int>(bytes::get_u32(in, "d_head"));
    const int d_model = static_cast<int>(bytes::get_u32(in, "d_model"));
    const int n_classes = static_cast<int>(bytes::get_u32(in, "class count"));
    if (m < 8 || (m & (m - 1)) != 0 || heads < 1 || d_head < 1)
        throw DecodeError(path.string() + ": invalid architecture header");

    ModelArch arch = ModelArch::make(m, heads, d_head);
    if (arch.j_count != j_count || arch.d_model != d_model || arch.n_classes != n_classes)
        throw DecodeError(path.string() + ": architecture header disagrees with M=" +
                          std::to_string(m));
    for (const BranchShape& b : arch.branches) {
        const int kh = static_cast<int>(bytes::get_u32(in, "kernel height"));
        const int kw = static_cast<int>(bytes::get_u32(in, "kernel width"));
        if (kh != b.kh || kw != b.kw)
            throw DecodeError(path.string() + ": stored kernel schedule " +
                              std::to_string(kh) + "x" + std::to_string(kw) +
                              " does not match the derived " + std::to_string(b.kh) +
                              "x" + std::to_string(b.kw));
    }

    Model model;
    model.arch = arch;
    model.layout = ParamLayout::make(arch);
    model.init_seed = bytes::get_u64(in, "seed");
    const uint64_t n_params = bytes::get_u64(in, "parameter count");
    if (n_params != static_cast<uint64_t>(model.layout.total))
        throw DecodeError(path.string() + ": stores " + std::to_string(n_params) +
                          " parameters, architecture needs " +
                          std::to_string(model.layout.total));
    model.params.resize(model.layout.total);
    for (long i = 0; i < model.params.size(); ++i)
        model.params[i] = bytes::get_f64(in, "parameter");
    return model;
}

void write_curves_csv(const std::filesystem::path& path,
                      const std::vector<EpochStats>& history) {
    std::ofstream out = open_out(path);
    out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
    for (const EpochStats& e : history) {
        out << e.epoch << ',' << format_double(e.train_loss) << ','
            << format_double(e.train_acc) << ',';
        if (e.val_loss) out << format_double(*e.val_loss);
        out << ',';
        if (e.val_acc) out << format_double(*e.val_acc);
        out << '\n';
    }
    finish(out, path);
}

namespace {

json metrics_json(const MetricsReport& report) {
    json per_class;
    for (int c = 0; c < kNumClasses; ++c) {
        json entry;
        const auto put = [&entry](const char* key, const std::optional<double>& v) {
            entry[key] = v ? json(*v) : json(nullptr);
        };
        put("specificity", report.per_class.specificity[c]);
        put("f1", report.per_class.f1[c]);
        put("accuracy", report.per_class.accuracy[c]);
        per_class[to_string(static_cast<MurmurClass>(c))] = entry;
    }
    json macro;
    macro["specificity"] = report.macro_specificity;
    macro["f1"] = report.macro_f1;
    macro["accuracy"] = report.macro_accuracy;
    json out;
    out["per_class"] = per_class;
    out["macro"] = macro;
    out["has_undefined"] = report.has_undefined;
    if (report.fold_id) out["fold"] = *report.fold_id;
    return out;
}

}  // namespace

void write_report_json(const std::filesystem::path& path, const CvResult& result,
                       const ReportContext& ctx) {
    json folds = json::array();
    for (size_t i = 0; i < result.folds.size(); ++i) {
        json fold = metrics_json(result.folds[i]);
        json cm = json::array();
        for (int a = 0; a < kNumClasses; ++a) {
            json row = json::array();
            for (int p = 0; p < kNumClasses; ++p)
                row.push_back(result.fold_confusions[i].counts[a][p]);
            cm.push_back(row);
        }
        fold["confusion"] = cm;
        folds.push_back(fold);
    }
    const auto summary = [](const MetricSummary& s) {
        json out;
        out["mean"] = s.mean;
        out["std"] = s.stddev;
        return out;
    };
    json doc;
    doc["k"] = ctx.k;
    doc["seed"] = ctx.seed;
    doc["heads"] = ctx.heads;
    doc["d_head"] = ctx.d_head;
    json train;
    train["lr"] = ctx.train.lr;
    train["momentum"] = ctx.train.momentum;
    train["batch_size"] = ctx.train.batch_size;
    train["epochs"] = ctx.train.epochs;
    doc["train"] = train;
    doc["folds"] = folds;
    json agg;
    agg["macro_specificity"] = summary(result.macro_specificity);
    agg["macro_f1"] = summary(result.macro_f1);
    agg["macro_accuracy"] = summary(result.macro_accuracy);
    doc["summary"] = agg;

    std::ofstream out = open_out(path);
    out << doc.dump(2) << '\n';
    finish(out, path);
}

void write_predictions_csv(std::ostream& out, const std::vector<PredictionRow>& rows) {
    out << "segment_ref,label,predicted";
    for (int c = 0; c < kNumClasses; ++c)
        out << ",p_" << to_string(static_cast<MurmurClass>(c));
    out << '\n';
    for (const PredictionRow& r : rows) {
        out << r.segment_ref << ',';
        if (r.actual) out << to_string(*r.actual);
        out << ',' << to_string(static_cast<MurmurClass>(r.predicted));
        for (long c = 0; c < r.probs.size(); ++c) out << ',' << format_double(r.probs[c]);
        out << '\n';
    }
}

void write_predictions_csv(const std::filesystem::path& path,
                           const std::vector<PredictionRow>& rows) {
    std::ofstream out = open_out(path);
    write_predictions_csv(out, rows);
    finish(out, path);
}

}  // namespace gaborcomp
