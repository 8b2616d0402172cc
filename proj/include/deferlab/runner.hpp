#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "deferlab/error.hpp"
#include "deferlab/io.hpp"
#include "deferlab/metrics.hpp"
#include "deferlab/model_train.hpp"
#include "deferlab/oracle.hpp"
#include "deferlab/verify.hpp"

namespace deferlab {

namespace runner_detail {

inline std::string join(const std::string& dir, const std::string& file) {
    return (std::filesystem::path(dir) / file).string();
}

struct LoadedData {
    std::vector<LabeledSample> samples;
    std::vector<ConditionalPoint> truth;  // empty for CSV sources
    int feature_dim = 0;
    int k_classes = 0;
    int num_experts = 0;
    double bayes_risk = -1.0;  // < 0 when unknown
};

inline LoadedData load_run_data(const RunConfig& cfg, bool prefer_test_split) {
    LoadedData out;
    if (cfg.synthetic) {
        SyntheticData data = sample_synthetic(*cfg.synthetic);
        out.samples = std::move(data.samples);
        out.truth = std::move(data.truth);
        out.feature_dim = cfg.synthetic->feature_dim;
        out.k_classes = cfg.synthetic->k_classes;
        out.num_experts = static_cast<int>(cfg.synthetic->experts.size());
        out.bayes_risk = data.bayes_risk;
        return out;
    }
    if (cfg.csv) {
        const std::string& path = prefer_test_split && !cfg.csv->test_path.empty()
                                      ? cfg.csv->test_path
                                      : cfg.csv->train_path;
        Dataset ds = load_dataset(path, cfg.csv->k_classes, cfg.csv->num_experts);
        out.samples = std::move(ds.samples);
        out.feature_dim = ds.feature_dim;
        out.k_classes = cfg.csv->k_classes;
        out.num_experts = cfg.csv->num_experts;
        return out;
    }
    throw InvalidInputError("this mode requires a data source (config.data)");
}

inline void write_json_artifact(const std::string& path, json body) {
    write_text_file(path, body.dump(2) + "\n");
}

}  // namespace runner_detail

inline int run_train(const RunConfig& cfg, std::ostream& log) {
    const runner_detail::LoadedData data = runner_detail::load_run_data(cfg, false);
    ScorerModel model = init_model(cfg.arch, data.feature_dim, data.k_classes,
                                   data.num_experts, cfg.seed, cfg.hidden);
    TrainConfig tc = cfg.train;
    tc.loss = cfg.loss;
    tc.seed = cfg.seed;
    const TrainResult result = train(std::move(model), data.samples, tc);

    const json cfg_json = run_config_to_json(cfg);
    json checkpoint;
    checkpoint["config"] = cfg_json;
    checkpoint["model"] = model_to_json(result.model, cfg.loss, cfg.seed);
    runner_detail::write_json_artifact(runner_detail::join(cfg.out_dir, "checkpoint.json"),
                                       std::move(checkpoint));

    json history;
    history["config"] = cfg_json;
    history["history"] = result.history;
    runner_detail::write_json_artifact(runner_detail::join(cfg.out_dir, "history.json"),
                                       std::move(history));

    log << "trained " << to_string(cfg.arch) << " on " << data.samples.size()
        << " samples for " << cfg.train.epochs << " epochs; final mean loss "
        << result.history.back() << "\n";
    log << "wrote " << runner_detail::join(cfg.out_dir, "checkpoint.json") << " and "
        << runner_detail::join(cfg.out_dir, "history.json") << "\n";
    return 0;
}

inline int run_evaluate(const RunConfig& cfg, std::ostream& log) {
    if (cfg.checkpoint.empty())
        throw InvalidInputError("evaluate requires config.checkpoint");
    const json ckpt = read_json_file(cfg.checkpoint);
    if (!ckpt.contains("model"))
        throw ParseError("'" + cfg.checkpoint + "': missing 'model' object");
    const LoadedModel loaded = model_from_json(ckpt["model"], cfg.checkpoint + ".model");

    const runner_detail::LoadedData data = runner_detail::load_run_data(cfg, true);
    if (data.feature_dim != loaded.model.input_dim ||
        data.k_classes != loaded.model.num_classes ||
        data.num_experts != loaded.model.num_experts)
        throw InvalidInputError("evaluate: dataset dimensions do not match the checkpoint");

    const Evaluation eval = evaluate(loaded.model, data.samples, loaded.loss);
    std::vector<int> labels(data.samples.size());
    std::vector<std::vector<int>> experts(data.samples.size());
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        labels[i] = data.samples[i].label;
        experts[i] = data.samples[i].expert_preds;
    }
    std::vector<double> true_acc;
    if (!data.truth.empty()) {
        true_acc.resize(data.truth.size());
        for (std::size_t i = 0; i < data.truth.size(); ++i)
            true_acc[i] = data.truth[i].expert_acc[0];
    }
    const EvalReport report = make_eval_report(eval.decisions, eval.estimates, labels,
                                               experts, cfg.budgets, cfg.ece_bins, true_acc);

    json body;
    body["config"] = run_config_to_json(cfg);
    body["report"] = eval_report_to_json(report);
    if (data.bayes_risk >= 0.0) body["oracle_bayes_risk"] = data.bayes_risk;
    runner_detail::write_json_artifact(runner_detail::join(cfg.out_dir, "eval_report.json"),
                                       std::move(body));
    save_histogram_csv(runner_detail::join(cfg.out_dir, "histogram.csv"), report.histogram);

    log << "error " << report.error << ", coverage " << report.coverage << ", ece "
        << report.ece << "\n";
    log << "wrote " << runner_detail::join(cfg.out_dir, "eval_report.json") << " and "
        << runner_detail::join(cfg.out_dir, "histogram.csv") << "\n";
    return 0;
}

inline int run_simulate(const RunConfig& cfg, std::ostream& log) {
    if (!cfg.synthetic)
        throw InvalidInputError("simulate requires config.data.synthetic");
    const SyntheticData data = sample_synthetic(*cfg.synthetic);
    save_dataset(runner_detail::join(cfg.out_dir, "dataset.csv"), data.samples);
    save_truth(runner_detail::join(cfg.out_dir, "truth.csv"), data.truth);

    json body;
    body["config"] = run_config_to_json(cfg);
    body["n"] = static_cast<long>(data.samples.size());
    body["bayes_risk"] = data.bayes_risk;
    body["dataset"] = "dataset.csv";
    body["truth"] = "truth.csv";
    runner_detail::write_json_artifact(
        runner_detail::join(cfg.out_dir, "simulate_summary.json"), std::move(body));

    log << "sampled " << data.samples.size() << " points (seed " << cfg.seed
        << "); oracle bayes risk " << data.bayes_risk << "\n";
    log << "wrote dataset.csv, truth.csv, simulate_summary.json under " << cfg.out_dir
        << "\n";
    return 0;
}

inline int run_verify(const RunConfig& cfg, std::ostream& log) {
    std::vector<CheckResult> checks;
    checks.push_back(check_gradients(cfg.verify.grad_checks, cfg.seed));
    checks.push_back(check_asym_softmax_properties(cfg.verify.prop_samples, cfg.seed + 1));
    checks.push_back(
        check_asym_softmax_properties(cfg.verify.prop_samples, cfg.seed + 2, 2));
    checks.push_back(check_minimizer_recovery(cfg.verify.recovery_points, cfg.seed + 3));
    checks.push_back(check_minimizer_recovery(cfg.verify.recovery_points, cfg.seed + 4, 2));
    checks.push_back(check_generic_equivalence(cfg.verify.equivalence_samples, cfg.seed + 5));
    checks.push_back(check_regret_transfer(cfg.verify.regret_tuples, cfg.seed + 6));
    checks.push_back(check_unboundedness_witness());

    bool all_passed = true;
    json report_checks = json::array();
    for (const CheckResult& c : checks) {
        all_passed = all_passed && c.passed();
        log << (c.passed() ? "[PASS] " : "[FAIL] ") << c.name << " (" << c.total
            << " cases, " << c.failures << " failures, worst " << c.worst << ")\n";
        json jc;
        jc["name"] = c.name;
        jc["cases"] = c.total;
        jc["failures"] = c.failures;
        jc["worst"] = c.worst;
        jc["passed"] = c.passed();
        if (!c.counterexamples.empty()) jc["counterexamples"] = c.counterexamples;
        report_checks.push_back(std::move(jc));
    }

    json body;
    body["config"] = run_config_to_json(cfg);
    body["checks"] = std::move(report_checks);
    body["all_passed"] = all_passed;
    runner_detail::write_json_artifact(runner_detail::join(cfg.out_dir, "verify_report.json"),
                                       std::move(body));
    log << "wrote " << runner_detail::join(cfg.out_dir, "verify_report.json") << "\n";
    return all_passed ? 0 : 1;
}

/// Dispatch a fully resolved configuration. Returns the process exit
/// status; failures surface as exceptions for the caller to report.
inline int run(const RunConfig& cfg, std::ostream& log) {
    std::filesystem::create_directories(cfg.out_dir);
    log << "resolved config (seed " << cfg.seed << "): " << run_config_to_json(cfg).dump()
        << "\n";
    switch (cfg.mode) {
        case Mode::train: return run_train(cfg, log);
        case Mode::evaluate: return run_evaluate(cfg, log);
        case Mode::simulate: return run_simulate(cfg, log);
        case Mode::verify: return run_verify(cfg, log);
    }
    throw InvalidInputError("run: unknown mode");
}

}  // namespace deferlab
