#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "deferlab/error.hpp"
#include "deferlab/metrics.hpp"
#include "deferlab/model_train.hpp"
#include "deferlab/oracle.hpp"
#include "deferlab/types.hpp"

namespace deferlab {

using json = nlohmann::ordered_json;

enum class Mode { train, evaluate, simulate, verify };

inline const char* to_string(Mode m) {
    switch (m) {
        case Mode::train: return "train";
        case Mode::evaluate: return "evaluate";
        case Mode::simulate: return "simulate";
        case Mode::verify: return "verify";
    }
    return "?";
}

inline Mode mode_from_string(const std::string& s) {
    if (s == "train") return Mode::train;
    if (s == "evaluate") return Mode::evaluate;
    if (s == "simulate") return Mode::simulate;
    if (s == "verify") return Mode::verify;
    throw ParseError("unknown mode '" + s + "' (expected train|evaluate|simulate|verify)");
}

/// Shortest decimal representation that parses back to the same double;
/// used for CSV emission so round-trips are exact.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view token, const std::string& where) {
    double v = 0.0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last)
        throw ParseError(where + ": '" + std::string(token) + "' is not a number");
    return v;
}

inline int parse_int(std::string_view token, const std::string& where) {
    int v = 0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last)
        throw ParseError(where + ": '" + std::string(token) + "' is not an integer");
    return v;
}

// ---------------------------------------------------------------------------
// strict JSON access
// ---------------------------------------------------------------------------

namespace jsonio {

inline void reject_unknown_keys(const json& j, const std::string& path,
                                std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const char* a : allowed)
            if (key == a) known = true;
        if (!known) throw ParseError(path + ": unknown key '" + key + "'");
    }
}

inline const json& require(const json& j, const char* key, const std::string& path) {
    const auto it = j.find(key);
    if (it == j.end()) throw ParseError(path + ": missing required key '" + key + "'");
    return *it;
}

inline std::string get_string(const json& j, const std::string& path) {
    if (!j.is_string()) throw ParseError(path + ": expected a string");
    return j.get<std::string>();
}

inline double get_number(const json& j, const std::string& path) {
    if (!j.is_number()) throw ParseError(path + ": expected a number");
    return j.get<double>();
}

inline int get_int(const json& j, const std::string& path) {
    if (!j.is_number_integer()) throw ParseError(path + ": expected an integer");
    return j.get<int>();
}

inline std::uint64_t get_seed(const json& j, const std::string& path) {
    if (!j.is_number_integer()) throw ParseError(path + ": expected a non-negative integer");
    if (!j.is_number_unsigned() && j.get<std::int64_t>() < 0)
        throw ParseError(path + ": expected a non-negative integer");
    return j.get<std::uint64_t>();
}

}  // namespace jsonio

// ---------------------------------------------------------------------------
// run configuration
// ---------------------------------------------------------------------------

struct CsvDataSpec {
    std::string train_path;
    std::string test_path;  // optional; evaluation falls back to train_path
    int k_classes = 0;
    int num_experts = 1;
};

struct VerifySpec {
    int grad_checks = 100;        // per loss kind
    long prop_samples = 100000;   // boundedness / argmax sweep
    int recovery_points = 1000;   // minimizer-recovery sweep
    long equivalence_samples = 10000;
    long regret_tuples = 10000;
};

struct RunConfig {
    Mode mode = Mode::verify;
    LossKind loss = LossKind::asym_softmax;
    Arch arch = Arch::linear;
    int hidden = 0;
    TrainConfig train;  // seed/loss mirrored from the top level on parse
    std::optional<SyntheticSpec> synthetic;
    std::optional<CsvDataSpec> csv;
    std::vector<double> budgets = {0.1, 0.2, 0.3};
    int ece_bins = 15;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    std::string checkpoint;  // evaluate mode input
    VerifySpec verify;
};

inline SyntheticSpec synthetic_spec_from_json(const json& j, const std::string& path) {
    if (!j.is_object()) throw ParseError(path + ": expected an object");
    jsonio::reject_unknown_keys(
        j, path, {"k_classes", "feature_dim", "class_means", "sigma", "experts", "n", "seed"});
    SyntheticSpec spec;
    spec.k_classes = jsonio::get_int(jsonio::require(j, "k_classes", path), path + ".k_classes");
    spec.feature_dim =
        jsonio::get_int(jsonio::require(j, "feature_dim", path), path + ".feature_dim");
    spec.sigma = jsonio::get_number(jsonio::require(j, "sigma", path), path + ".sigma");
    spec.n = jsonio::get_int(jsonio::require(j, "n", path), path + ".n");
    spec.seed = jsonio::get_seed(jsonio::require(j, "seed", path), path + ".seed");

    const json& means = jsonio::require(j, "class_means", path);
    if (!means.is_array()) throw ParseError(path + ".class_means: expected an array");
    for (std::size_t c = 0; c < means.size(); ++c) {
        const std::string mp = path + ".class_means[" + std::to_string(c) + "]";
        if (!means[c].is_array()) throw ParseError(mp + ": expected an array");
        std::vector<double> mu;
        for (std::size_t f = 0; f < means[c].size(); ++f)
            mu.push_back(jsonio::get_number(means[c][f], mp + "[" + std::to_string(f) + "]"));
        spec.class_means.push_back(std::move(mu));
    }

    const json& experts = jsonio::require(j, "experts", path);
    if (!experts.is_array()) throw ParseError(path + ".experts: expected an array");
    for (std::size_t e = 0; e < experts.size(); ++e) {
        const std::string ep = path + ".experts[" + std::to_string(e) + "]";
        if (!experts[e].is_object()) throw ParseError(ep + ": expected an object");
        jsonio::reject_unknown_keys(experts[e], ep, {"k", "p"});
        ExpertSpec es;
        es.strong_classes = jsonio::get_int(jsonio::require(experts[e], "k", ep), ep + ".k");
        es.strong_accuracy = jsonio::get_number(jsonio::require(experts[e], "p", ep), ep + ".p");
        spec.experts.push_back(es);
    }
    try {
        spec.validate();
    } catch (const Error& e) {
        throw ParseError(path + ": " + e.what());
    }
    return spec;
}

inline json synthetic_spec_to_json(const SyntheticSpec& spec) {
    json j;
    j["k_classes"] = spec.k_classes;
    j["feature_dim"] = spec.feature_dim;
    j["class_means"] = spec.class_means;
    j["sigma"] = spec.sigma;
    json experts = json::array();
    for (const auto& e : spec.experts)
        experts.push_back(json{{"k", e.strong_classes}, {"p", e.strong_accuracy}});
    j["experts"] = std::move(experts);
    j["n"] = spec.n;
    j["seed"] = spec.seed;
    return j;
}

inline RunConfig run_config_from_json(const json& root) {
    if (!root.is_object()) throw ParseError("config: expected a JSON object");
    jsonio::reject_unknown_keys(root, "config",
                                {"mode", "loss", "model", "train", "data", "budgets",
                                 "ece_bins", "out_dir", "seed", "checkpoint", "verify"});
    RunConfig cfg;
    if (root.contains("mode"))
        cfg.mode = mode_from_string(jsonio::get_string(root["mode"], "config.mode"));
    if (root.contains("loss")) {
        try {
            cfg.loss = loss_kind_from_string(jsonio::get_string(root["loss"], "config.loss"));
        } catch (const InvalidInputError& e) {
            throw ParseError(std::string("config.loss: ") + e.what());
        }
    }
    if (root.contains("seed")) cfg.seed = jsonio::get_seed(root["seed"], "config.seed");
    if (root.contains("out_dir"))
        cfg.out_dir = jsonio::get_string(root["out_dir"], "config.out_dir");
    if (root.contains("checkpoint"))
        cfg.checkpoint = jsonio::get_string(root["checkpoint"], "config.checkpoint");
    if (root.contains("ece_bins")) {
        cfg.ece_bins = jsonio::get_int(root["ece_bins"], "config.ece_bins");
        if (cfg.ece_bins < 1) throw ParseError("config.ece_bins: must be >= 1");
    }
    if (root.contains("budgets")) {
        if (!root["budgets"].is_array()) throw ParseError("config.budgets: expected an array");
        cfg.budgets.clear();
        for (std::size_t i = 0; i < root["budgets"].size(); ++i) {
            const std::string bp = "config.budgets[" + std::to_string(i) + "]";
            const double b = jsonio::get_number(root["budgets"][i], bp);
            if (!(b >= 0.0 && b <= 1.0)) throw ParseError(bp + ": budget outside [0,1]");
            cfg.budgets.push_back(b);
        }
    }
    if (root.contains("model")) {
        const json& m = root["model"];
        if (!m.is_object()) throw ParseError("config.model: expected an object");
        jsonio::reject_unknown_keys(m, "config.model", {"arch", "hidden"});
        try {
            cfg.arch = arch_from_string(
                jsonio::get_string(jsonio::require(m, "arch", "config.model"), "config.model.arch"));
        } catch (const InvalidInputError& e) {
            throw ParseError(std::string("config.model.arch: ") + e.what());
        }
        if (m.contains("hidden"))
            cfg.hidden = jsonio::get_int(m["hidden"], "config.model.hidden");
        if (cfg.arch == Arch::mlp && cfg.hidden < 1)
            throw ParseError("config.model.hidden: mlp requires a positive hidden width");
    }
    if (root.contains("train")) {
        const json& t = root["train"];
        if (!t.is_object()) throw ParseError("config.train: expected an object");
        jsonio::reject_unknown_keys(
            t, "config.train",
            {"optimizer", "learning_rate", "epochs", "batch_size", "weight_decay"});
        if (t.contains("optimizer")) {
            try {
                cfg.train.optimizer = optimizer_from_string(
                    jsonio::get_string(t["optimizer"], "config.train.optimizer"));
            } catch (const InvalidInputError& e) {
                throw ParseError(std::string("config.train.optimizer: ") + e.what());
            }
        }
        if (t.contains("learning_rate"))
            cfg.train.learning_rate =
                jsonio::get_number(t["learning_rate"], "config.train.learning_rate");
        if (t.contains("epochs"))
            cfg.train.epochs = jsonio::get_int(t["epochs"], "config.train.epochs");
        if (t.contains("batch_size"))
            cfg.train.batch_size = jsonio::get_int(t["batch_size"], "config.train.batch_size");
        if (t.contains("weight_decay"))
            cfg.train.weight_decay =
                jsonio::get_number(t["weight_decay"], "config.train.weight_decay");
        try {
            cfg.train.validate();
        } catch (const Error& e) {
            throw ParseError(std::string("config.train: ") + e.what());
        }
    }
    if (root.contains("data")) {
        const json& d = root["data"];
        if (!d.is_object()) throw ParseError("config.data: expected an object");
        jsonio::reject_unknown_keys(d, "config.data", {"synthetic", "csv"});
        if (d.contains("synthetic") && d.contains("csv"))
            throw ParseError("config.data: exactly one of 'synthetic' or 'csv' may be set");
        if (d.contains("synthetic"))
            cfg.synthetic = synthetic_spec_from_json(d["synthetic"], "config.data.synthetic");
        if (d.contains("csv")) {
            const json& c = d["csv"];
            if (!c.is_object()) throw ParseError("config.data.csv: expected an object");
            jsonio::reject_unknown_keys(c, "config.data.csv",
                                        {"train", "test", "k_classes", "experts"});
            CsvDataSpec spec;
            spec.train_path = jsonio::get_string(
                jsonio::require(c, "train", "config.data.csv"), "config.data.csv.train");
            if (c.contains("test"))
                spec.test_path = jsonio::get_string(c["test"], "config.data.csv.test");
            spec.k_classes = jsonio::get_int(
                jsonio::require(c, "k_classes", "config.data.csv"), "config.data.csv.k_classes");
            if (c.contains("experts"))
                spec.num_experts = jsonio::get_int(c["experts"], "config.data.csv.experts");
            if (spec.k_classes < 2)
                throw ParseError("config.data.csv.k_classes: must be >= 2");
            if (spec.num_experts < 1)
                throw ParseError("config.data.csv.experts: must be >= 1");
            cfg.csv = std::move(spec);
        }
        if (!cfg.synthetic && !cfg.csv)
            throw ParseError("config.data: needs 'synthetic' or 'csv'");
    }
    if (root.contains("verify")) {
        const json& v = root["verify"];
        if (!v.is_object()) throw ParseError("config.verify: expected an object");
        jsonio::reject_unknown_keys(v, "config.verify",
                                    {"grad_checks", "prop_samples", "recovery_points",
                                     "equivalence_samples", "regret_tuples"});
        auto opt_int = [&](const char* key, auto& field) {
            if (v.contains(key)) {
                const int value = jsonio::get_int(v[key], std::string("config.verify.") + key);
                if (value < 1)
                    throw ParseError(std::string("config.verify.") + key + ": must be >= 1");
                field = value;
            }
        };
        opt_int("grad_checks", cfg.verify.grad_checks);
        opt_int("prop_samples", cfg.verify.prop_samples);
        opt_int("recovery_points", cfg.verify.recovery_points);
        opt_int("equivalence_samples", cfg.verify.equivalence_samples);
        opt_int("regret_tuples", cfg.verify.regret_tuples);
    }
    cfg.train.loss = cfg.loss;
    cfg.train.seed = cfg.seed;
    return cfg;
}

/// Fully resolved configuration; artifacts embed this form, and feeding
/// it back through run_config_from_json reproduces the run.
inline json run_config_to_json(const RunConfig& cfg) {
    json j;
    j["mode"] = to_string(cfg.mode);
    j["loss"] = to_string(cfg.loss);
    j["model"] = json{{"arch", to_string(cfg.arch)}, {"hidden", cfg.hidden}};
    j["train"] = json{{"optimizer", to_string(cfg.train.optimizer)},
                      {"learning_rate", cfg.train.learning_rate},
                      {"epochs", cfg.train.epochs},
                      {"batch_size", cfg.train.batch_size},
                      {"weight_decay", cfg.train.weight_decay}};
    json data = json::object();
    if (cfg.synthetic) data["synthetic"] = synthetic_spec_to_json(*cfg.synthetic);
    if (cfg.csv) {
        json c;
        c["train"] = cfg.csv->train_path;
        if (!cfg.csv->test_path.empty()) c["test"] = cfg.csv->test_path;
        c["k_classes"] = cfg.csv->k_classes;
        c["experts"] = cfg.csv->num_experts;
        data["csv"] = std::move(c);
    }
    if (!data.empty()) j["data"] = std::move(data);
    j["budgets"] = cfg.budgets;
    j["ece_bins"] = cfg.ece_bins;
    j["out_dir"] = cfg.out_dir;
    j["seed"] = cfg.seed;
    if (!cfg.checkpoint.empty()) j["checkpoint"] = cfg.checkpoint;
    if (cfg.mode == Mode::verify)
        j["verify"] = json{{"grad_checks", cfg.verify.grad_checks},
                           {"prop_samples", cfg.verify.prop_samples},
                           {"recovery_points", cfg.verify.recovery_points},
                           {"equivalence_samples", cfg.verify.equivalence_samples},
                           {"regret_tuples", cfg.verify.regret_tuples}};
    return j;
}

inline RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("config: cannot open '" + path + "'");
    json root;
    try {
        root = json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("config '" + path + "': " + e.what());
    }
    return run_config_from_json(root);
}

// ---------------------------------------------------------------------------
// CSV datasets
// ---------------------------------------------------------------------------

struct Dataset {
    std::vector<LabeledSample> samples;
    int feature_dim = 0;
};

namespace csvio {

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace csvio

/// Load a dataset CSV with header x0..x{d-1},y,m0..m{M-1}. Labels and
/// expert predictions are 0-indexed class ids.
inline Dataset load_dataset(const std::string& path, int k_classes, int num_experts) {
    std::ifstream in(path);
    if (!in) throw ParseError("dataset: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ParseError("dataset '" + path + "': empty file");
    const std::vector<std::string> header = csvio::split_line(line);

    const int cols = static_cast<int>(header.size());
    const int feature_dim = cols - 1 - num_experts;
    if (feature_dim < 1)
        throw ParseError("dataset '" + path + "': header has " + std::to_string(cols) +
                         " columns, too few for " + std::to_string(num_experts) + " expert(s)");
    for (int f = 0; f < feature_dim; ++f)
        if (header[f] != "x" + std::to_string(f))
            throw ParseError("dataset '" + path + "': header column " + std::to_string(f) +
                             " is '" + header[f] + "', expected 'x" + std::to_string(f) + "'");
    if (header[feature_dim] != "y")
        throw ParseError("dataset '" + path + "': header column " +
                         std::to_string(feature_dim) + " is '" + header[feature_dim] +
                         "', expected 'y'");
    for (int j = 0; j < num_experts; ++j)
        if (header[feature_dim + 1 + j] != "m" + std::to_string(j))
            throw ParseError("dataset '" + path + "': expected expert column 'm" +
                             std::to_string(j) + "'");

    Dataset ds;
    ds.feature_dim = feature_dim;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = "dataset '" + path + "' line " + std::to_string(line_no);
        const std::vector<std::string> tokens = csvio::split_line(line);
        if (static_cast<int>(tokens.size()) != cols)
            throw ParseError(where + ": has " + std::to_string(tokens.size()) +
                             " columns, expected " + std::to_string(cols));
        LabeledSample s;
        s.features.resize(feature_dim);
        for (int f = 0; f < feature_dim; ++f) {
            s.features[f] = parse_double(tokens[f], where);
            if (!std::isfinite(s.features[f]))
                throw ParseError(where + ": non-finite feature");
        }
        s.label = parse_int(tokens[feature_dim], where);
        if (s.label < 0 || s.label >= k_classes)
            throw ParseError(where + ": label " + std::to_string(s.label) + " outside {0.." +
                             std::to_string(k_classes - 1) + "}");
        s.expert_preds.resize(num_experts);
        for (int j = 0; j < num_experts; ++j) {
            const int m = parse_int(tokens[feature_dim + 1 + j], where);
            if (m < 0 || m >= k_classes)
                throw ParseError(where + ": expert prediction " + std::to_string(m) +
                                 " outside {0.." + std::to_string(k_classes - 1) + "}");
            s.expert_preds[j] = m;
        }
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.empty()) throw ParseError("dataset '" + path + "': no data rows");
    return ds;
}

inline void save_dataset(const std::string& path, std::span<const LabeledSample> samples) {
    if (samples.empty()) throw InvalidInputError("save_dataset: empty dataset");
    std::ofstream out(path);
    if (!out) throw ParseError("dataset: cannot write '" + path + "'");
    const int d = static_cast<int>(samples[0].features.size());
    const int m = static_cast<int>(samples[0].expert_preds.size());
    for (int f = 0; f < d; ++f) out << "x" << f << ",";
    out << "y";
    for (int j = 0; j < m; ++j) out << ",m" << j;
    out << "\n";
    for (const auto& s : samples) {
        for (int f = 0; f < d; ++f) out << format_double(s.features[f]) << ",";
        out << s.label;
        for (int j = 0; j < m; ++j) out << "," << s.expert_preds[j];
        out << "\n";
    }
}

/// Ground-truth companion file: eta0..eta{K-1},p0..p{M-1} per sample.
inline void save_truth(const std::string& path, std::span<const ConditionalPoint> truth) {
    if (truth.empty()) throw InvalidInputError("save_truth: empty truth table");
    std::ofstream out(path);
    if (!out) throw ParseError("truth: cannot write '" + path + "'");
    const int k = truth[0].num_classes();
    const int m = truth[0].num_experts();
    for (int y = 0; y < k; ++y) out << (y ? "," : "") << "eta" << y;
    for (int j = 0; j < m; ++j) out << ",p" << j;
    out << "\n";
    for (const auto& t : truth) {
        for (int y = 0; y < k; ++y) out << (y ? "," : "") << format_double(t.eta[y]);
        for (int j = 0; j < m; ++j) out << "," << format_double(t.expert_acc[j]);
        out << "\n";
    }
}

// ---------------------------------------------------------------------------
// model checkpoints and reports
// ---------------------------------------------------------------------------

inline json model_to_json(const ScorerModel& model, LossKind loss, std::uint64_t seed) {
    json j;
    j["arch"] = to_string(model.arch);
    j["input_dim"] = model.input_dim;
    j["k_classes"] = model.num_classes;
    j["experts"] = model.num_experts;
    j["hidden"] = model.hidden;
    j["loss"] = to_string(loss);
    j["seed"] = seed;
    j["w1"] = model.w1.data;  // row-major
    j["b1"] = model.b1;
    j["w2"] = model.w2.data;
    j["b2"] = model.b2;
    return j;
}

struct LoadedModel {
    ScorerModel model;
    LossKind loss = LossKind::asym_softmax;
    std::uint64_t seed = 0;
};

inline LoadedModel model_from_json(const json& j, const std::string& path) {
    if (!j.is_object()) throw ParseError(path + ": expected an object");
    jsonio::reject_unknown_keys(j, path,
                                {"arch", "input_dim", "k_classes", "experts", "hidden", "loss",
                                 "seed", "w1", "b1", "w2", "b2"});
    LoadedModel out;
    out.model.arch = arch_from_string(
        jsonio::get_string(jsonio::require(j, "arch", path), path + ".arch"));
    out.model.input_dim =
        jsonio::get_int(jsonio::require(j, "input_dim", path), path + ".input_dim");
    out.model.num_classes =
        jsonio::get_int(jsonio::require(j, "k_classes", path), path + ".k_classes");
    out.model.num_experts =
        jsonio::get_int(jsonio::require(j, "experts", path), path + ".experts");
    out.model.hidden = jsonio::get_int(jsonio::require(j, "hidden", path), path + ".hidden");
    try {
        out.loss =
            loss_kind_from_string(jsonio::get_string(jsonio::require(j, "loss", path), path));
    } catch (const InvalidInputError& e) {
        throw ParseError(path + ".loss: " + e.what());
    }
    out.seed = jsonio::get_seed(jsonio::require(j, "seed", path), path + ".seed");

    auto load_vec = [&](const char* key) {
        const json& arr = jsonio::require(j, key, path);
        if (!arr.is_array()) throw ParseError(path + "." + key + ": expected an array");
        std::vector<double> v;
        v.reserve(arr.size());
        for (std::size_t i = 0; i < arr.size(); ++i)
            v.push_back(jsonio::get_number(arr[i], path + "." + key));
        return v;
    };
    const int out_dim = out.model.num_classes + out.model.num_experts;
    const int rows1 = out.model.arch == Arch::mlp ? out.model.hidden : out_dim;
    out.model.w1 = Matrix(rows1, out.model.input_dim);
    out.model.w1.data = load_vec("w1");
    out.model.b1 = load_vec("b1");
    if (out.model.arch == Arch::mlp) {
        out.model.w2 = Matrix(out_dim, out.model.hidden);
        out.model.w2.data = load_vec("w2");
        out.model.b2 = load_vec("b2");
    } else {
        const std::vector<double> w2 = load_vec("w2");
        const std::vector<double> b2 = load_vec("b2");
        if (!w2.empty() || !b2.empty())
            throw ParseError(path + ": linear checkpoint carries second-layer weights");
    }
    if (out.model.w1.data.size() !=
            static_cast<std::size_t>(rows1) * out.model.input_dim ||
        out.model.b1.size() != static_cast<std::size_t>(rows1))
        throw ParseError(path + ": first-layer weight shape mismatch");
    if (out.model.arch == Arch::mlp &&
        (out.model.w2.data.size() != static_cast<std::size_t>(out_dim) * out.model.hidden ||
         out.model.b2.size() != static_cast<std::size_t>(out_dim)))
        throw ParseError(path + ": second-layer weight shape mismatch");
    return out;
}

inline json eval_report_to_json(const EvalReport& report) {
    json j;
    j["error"] = report.error;
    j["coverage"] = report.coverage;
    j["ece"] = report.ece;
    json budgets = json::object();
    for (const auto& [budget, error] : report.budgeted_errors)
        budgets[format_double(budget)] = error;
    j["budgeted_errors"] = std::move(budgets);
    json hist;
    hist["bin_lo"] = report.histogram.bin_lo;
    hist["bin_hi"] = report.histogram.bin_hi;
    hist["count_estimated"] = report.histogram.count_estimated;
    if (!report.histogram.count_true.empty()) hist["count_true"] = report.histogram.count_true;
    j["histogram"] = std::move(hist);
    return j;
}

inline void save_histogram_csv(const std::string& path, const HistogramData& h) {
    std::ofstream out(path);
    if (!out) throw ParseError("histogram: cannot write '" + path + "'");
    out << "bin_lo,bin_hi,count_estimated,count_true\n";
    for (std::size_t b = 0; b < h.bin_lo.size(); ++b) {
        out << format_double(h.bin_lo[b]) << "," << format_double(h.bin_hi[b]) << ","
            << h.count_estimated[b] << ",";
        if (!h.count_true.empty()) out << h.count_true[b];
        out << "\n";
    }
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write '" + path + "'");
    out << content;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("'" + path + "': " + e.what());
    }
}

}  // namespace deferlab
