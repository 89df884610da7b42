#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "grpl/checkpoint.hpp"
#include "grpl/config.hpp"
#include "grpl/eval.hpp"
#include "grpl/hash.hpp"
#include "grpl/scenes.hpp"
#include "grpl/train.hpp"

namespace grpl {

inline constexpr const char* kToolVersion = "0.1.0";

namespace fs = std::filesystem;

// Fixed run-directory layout:
//   out/{config.json, manifest.json, checkpoints/, metrics.csv, report.*}
struct RunPaths {
    fs::path dir;

    static RunPaths in(const std::string& out_dir) { return RunPaths{fs::path(out_dir)}; }

    fs::path config() const { return dir / "config.json"; }
    fs::path manifest() const { return dir / "manifest.json"; }
    fs::path metrics() const { return dir / "metrics.csv"; }
    fs::path sft_metrics() const { return dir / "sft_metrics.csv"; }
    fs::path checkpoints() const { return dir / "checkpoints"; }
    fs::path ckpt(const std::string& name) const { return checkpoints() / (name + ".grpl"); }
    fs::path report_json() const { return dir / "report.json"; }
    fs::path report_txt() const { return dir / "report.txt"; }
    fs::path preds() const { return dir / "preds.jsonl"; }
    fs::path lock() const { return dir / ".lock"; }
};

// One lock file per run directory; concurrent writers fail fast.
class RunLock {
public:
    explicit RunLock(const RunPaths& paths) : path_(paths.lock()) {
        fs::create_directories(paths.dir);
        std::FILE* f = std::fopen(path_.string().c_str(), "wx");
        if (!f) {
            throw ValidationError("run directory is locked by another process (" +
                                  path_.string() + "); remove the lock file if stale");
        }
        std::fclose(f);
    }
    ~RunLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    fs::path path_;
};

// ---------------------------------------------------------------------------
// Metrics CSV
// ---------------------------------------------------------------------------

inline void write_metrics_csv(const std::string& path, std::span<const MetricsRow> rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write metrics file: " + path);
    out << "step,mean_composite,structure_rate,accuracy_rate,mean_kl,mean_abs_advantage,"
           "mean_response_len,loss,wall_ms\n";
    char buf[320];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf),
                      "%lld,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                      static_cast<long long>(r.step), r.mean_composite, r.structure_rate,
                      r.accuracy_rate, r.mean_kl, r.mean_abs_advantage, r.mean_response_len,
                      r.loss, r.wall_ms);
        out << buf;
    }
}

inline std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open metrics file: " + path);
    std::vector<MetricsRow> rows;
    std::string line;
    std::getline(in, line);  // header
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        MetricsRow r;
        long long step = 0;
        const int got = std::sscanf(line.c_str(), "%lld,%lg,%lg,%lg,%lg,%lg,%lg,%lg,%lg",
                                    &step, &r.mean_composite, &r.structure_rate,
                                    &r.accuracy_rate, &r.mean_kl, &r.mean_abs_advantage,
                                    &r.mean_response_len, &r.loss, &r.wall_ms);
        if (got != 9) {
            throw ValidationError(path + ":" + std::to_string(line_no) +
                                  ": malformed metrics row");
        }
        r.step = step;
        rows.push_back(r);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

inline std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

class RunManifest {
public:
    RunManifest(const RunPaths& paths, const std::string& mode, const RunConfig& cfg)
        : paths_(paths) {
        j_["run_id"] = paths.dir.filename().string() + "-" +
                       to_hex(hash_string(config_to_json(cfg).dump())).substr(0, 8);
        j_["tool_version"] = kToolVersion;
        j_["mode"] = mode;
        j_["created_utc"] = utc_timestamp();
        j_["finished_utc"] = nullptr;
        j_["config"] = config_to_json(cfg);
        j_["datasets"] = ordered_json::object();
        j_["checkpoints"] = ordered_json::array();
        j_["metrics"] = nullptr;
        j_["sft_metrics"] = nullptr;
        j_["report"] = nullptr;
        j_["status"] = "running";
    }

    void add_dataset(const std::string& name, const std::string& path) {
        j_["datasets"][name] = {{"path", path}, {"hash", to_hex(hash_file(path))}};
    }

    void add_checkpoint(const std::string& role, const fs::path& path, int64_t step) {
        j_["checkpoints"].push_back({{"role", role},
                                     {"path", fs::relative(path, paths_.dir).string()},
                                     {"step", step},
                                     {"hash", to_hex(hash_file(path.string()))}});
    }

    void set_metrics(const fs::path& path) {
        j_["metrics"] = {{"path", fs::relative(path, paths_.dir).string()},
                         {"hash", to_hex(hash_file(path.string()))}};
    }

    void set_sft_metrics(const fs::path& path) {
        j_["sft_metrics"] = {{"path", fs::relative(path, paths_.dir).string()},
                             {"hash", to_hex(hash_file(path.string()))}};
    }

    void set_report(const fs::path& json_path, const fs::path& txt_path) {
        j_["report"] = {{"json", fs::relative(json_path, paths_.dir).string()},
                        {"json_hash", to_hex(hash_file(json_path.string()))},
                        {"txt", fs::relative(txt_path, paths_.dir).string()},
                        {"txt_hash", to_hex(hash_file(txt_path.string()))}};
    }

    void finish() {
        j_["finished_utc"] = utc_timestamp();
        j_["status"] = "complete";
        std::ofstream out(paths_.manifest(), std::ios::binary);
        if (!out) throw RuntimeFailure("cannot write manifest: " + paths_.manifest().string());
        out << j_.dump(2) << "\n";
    }

private:
    RunPaths paths_;
    ordered_json j_;
};

inline std::optional<ordered_json> read_manifest_json(const RunPaths& paths) {
    std::ifstream in(paths.manifest());
    if (!in) return std::nullopt;
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ValidationError(paths.manifest().string() + ": malformed manifest (" +
                              std::string(e.what()) + ")");
    }
    return j;
}

inline bool run_is_complete(const RunPaths& paths) {
    auto j = read_manifest_json(paths);
    return j && j->value("status", "") == "complete";
}

// ---------------------------------------------------------------------------
// Shared plumbing for the stage commands
// ---------------------------------------------------------------------------

namespace detail {

struct LoadedData {
    std::vector<SamplePair> pairs;
    DatasetManifest manifest;
    Vocab vocab;
};

// Dataset file plus the manifest.json sitting next to it; the manifest's
// scene alphabet defines the vocabulary.
inline LoadedData load_data(const std::string& data_path) {
    LoadedData d{read_dataset(data_path),
                 read_manifest((fs::path(data_path).parent_path() / "manifest.json").string()),
                 Vocab::build({"placeholder"})};
    d.vocab = build_vocab(d.manifest.scene_alphabet);
    return d;
}

inline uint64_t vocab_hash(const std::vector<std::string>& tokens) {
    Fnv1a64 h;
    for (const auto& t : tokens) {
        h.update(t);
        h.update("\x1f", 1);
    }
    return h.digest();
}

// The config's vocab_size must agree with the dataset-derived vocabulary.
inline void reconcile_vocab(RunConfig& cfg, const Vocab& vocab) {
    const int n = static_cast<int>(vocab.size());
    if (cfg.policy.vocab_size == 0) cfg.policy.vocab_size = n;
    if (cfg.policy.vocab_size != n) {
        throw ValidationError("config vocab_size " + std::to_string(cfg.policy.vocab_size) +
                              " does not match the dataset vocabulary (" + std::to_string(n) +
                              " tokens)");
    }
    cfg.validate();
    if (cfg.policy.context_len < 120) {
        // Longest prompt (2 x 8 objects) plus max generation must fit.
        throw ValidationError("context_len must be at least 120 for this scene world");
    }
}

inline void check_checkpoint_vocab(const CheckpointMeta& meta, const Vocab& vocab,
                                   const std::string& ckpt_path) {
    if (meta.vocab_tokens != vocab.tokens()) {
        throw ValidationError(
            "vocabulary mismatch between checkpoint and dataset: checkpoint " + ckpt_path +
            " has vocab hash " + to_hex(vocab_hash(meta.vocab_tokens)) + ", dataset has " +
            to_hex(vocab_hash(vocab.tokens())));
    }
}

inline void write_config_file(const RunPaths& paths, const RunConfig& cfg) {
    std::ofstream out(paths.config(), std::ios::binary);
    if (!out) throw ValidationError("cannot write config: " + paths.config().string());
    out << config_to_json(cfg).dump(2) << "\n";
}

inline void write_sft_metrics_csv(const std::string& path, const SftMetrics& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write metrics file: " + path);
    out << "epoch,mean_nll\n";
    char buf[64];
    for (size_t e = 0; e < m.epoch_mean_nll.size(); ++e) {
        std::snprintf(buf, sizeof(buf), "%zu,%.10g\n", e, m.epoch_mean_nll[e]);
        out << buf;
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stage commands (shared by the CLI and the acceptance suite)
// ---------------------------------------------------------------------------

// SFT only: gold traces -> checkpoints/post_sft.grpl.
inline void run_sft_command(RunConfig cfg, const std::string& data_path,
                            const std::string& out_dir, bool resume) {
    RunPaths paths = RunPaths::in(out_dir);
    if (resume && run_is_complete(paths)) {
        std::cout << "run already complete: " << out_dir << "\n";
        return;
    }
    RunLock lock(paths);
    auto data = detail::load_data(data_path);
    detail::reconcile_vocab(cfg, data.vocab);
    fs::create_directories(paths.checkpoints());
    detail::write_config_file(paths, cfg);

    RunManifest manifest(paths, "sft", cfg);
    manifest.add_dataset("sft", data_path);

    PolicyParams params = init_params(cfg.policy, cfg.train.seed);
    SftMetrics metrics = sft_train(params, data.pairs, data.vocab, cfg.train);
    detail::write_sft_metrics_csv(paths.sft_metrics().string(), metrics);

    save_checkpoint(params, nullptr, data.vocab.tokens(), ordered_json::object(), 0,
                    paths.ckpt("post_sft").string());
    manifest.add_checkpoint("policy", paths.ckpt("post_sft"), 0);
    manifest.set_sft_metrics(paths.sft_metrics());
    manifest.finish();
}

namespace detail {

// GRPO loop shared by run_grpo_command and run_two_stage_command. `policy`
// must already hold the starting parameters; reference.grpl must exist.
inline void grpo_stage(const RunPaths& paths, RunConfig& cfg, PolicyParams& policy,
                       const PolicyParams& ref, const LoadedData& data, RunManifest& manifest,
                       bool resume) {
    AdamState opt = AdamState::like(policy);
    int64_t start_step = 0;
    if (resume && fs::exists(paths.ckpt("latest"))) {
        LoadedCheckpoint latest = load_checkpoint(paths.ckpt("latest").string());
        check_checkpoint_vocab(latest.meta, data.vocab, paths.ckpt("latest").string());
        policy = latest.params;
        policy.role = "policy";
        if (latest.opt_state) opt = *latest.opt_state;
        start_step = latest.meta.step;
        std::cout << "resuming from step " << start_step << "\n";
    }

    CheckpointHook hook = [&](int64_t step, const PolicyParams& p, const AdamState& o) {
        const std::string path = paths.ckpt("latest").string();
        save_checkpoint(p, &o, data.vocab.tokens(), ordered_json::object(), step, path);
        return path;
    };
    GrpoResult result =
        grpo_train(policy, ref, data.pairs, data.vocab, cfg.train, hook, &opt, start_step);

    std::vector<MetricsRow> rows;
    if (resume && fs::exists(paths.metrics())) {
        rows = read_metrics_csv(paths.metrics().string());
        std::erase_if(rows, [&](const MetricsRow& r) { return r.step >= start_step; });
    }
    rows.insert(rows.end(), result.metrics.begin(), result.metrics.end());
    write_metrics_csv(paths.metrics().string(), rows);

    save_checkpoint(policy, nullptr, data.vocab.tokens(), ordered_json::object(),
                    cfg.train.grpo_steps, paths.ckpt("final").string());
    manifest.add_checkpoint("policy", paths.ckpt("final"), cfg.train.grpo_steps);
    manifest.set_metrics(paths.metrics());
}

}  // namespace detail

// GRPO from a checkpoint (or from random init when init_ckpt is empty — the
// no-SFT ablation).
inline void run_grpo_command(RunConfig cfg, const std::string& data_path,
                             const std::string& init_ckpt, const std::string& out_dir,
                             bool resume) {
    RunPaths paths = RunPaths::in(out_dir);
    if (resume && run_is_complete(paths)) {
        std::cout << "run already complete: " << out_dir << "\n";
        return;
    }
    RunLock lock(paths);
    auto data = detail::load_data(data_path);
    detail::reconcile_vocab(cfg, data.vocab);
    fs::create_directories(paths.checkpoints());
    detail::write_config_file(paths, cfg);

    RunManifest manifest(paths, init_ckpt.empty() ? "grpo_only" : "grpo", cfg);
    manifest.add_dataset("grpo_train", data_path);

    PolicyParams policy;
    if (init_ckpt.empty()) {
        policy = init_params(cfg.policy, cfg.train.seed);
    } else {
        LoadedCheckpoint loaded = load_checkpoint(init_ckpt);
        detail::check_checkpoint_vocab(loaded.meta, data.vocab, init_ckpt);
        if (loaded.params.config != cfg.policy) {
            throw ValidationError("checkpoint config does not match the run config: " +
                                  init_ckpt);
        }
        policy = loaded.params;
        policy.role = "policy";
    }

    PolicyParams ref = snapshot(policy, "reference");
    if (resume && fs::exists(paths.ckpt("reference"))) {
        LoadedCheckpoint prev = load_checkpoint(paths.ckpt("reference").string());
        detail::check_checkpoint_vocab(prev.meta, data.vocab, paths.ckpt("reference").string());
        ref = prev.params;
    } else {
        save_checkpoint(ref, nullptr, data.vocab.tokens(), ordered_json::object(), 0,
                        paths.ckpt("reference").string());
    }
    manifest.add_checkpoint("reference", paths.ckpt("reference"), 0);

    detail::grpo_stage(paths, cfg, policy, ref, data, manifest, resume);
    manifest.finish();
}

// Two-stage pipeline: SFT on gold traces, then GRPO anchored to the
// post-SFT snapshot. The manifest references exactly three checkpoints:
// post-SFT, reference, and final.
inline void run_two_stage_command(RunConfig cfg, const std::string& sft_data_path,
                                  const std::string& grpo_data_path,
                                  const std::string& out_dir, bool resume) {
    RunPaths paths = RunPaths::in(out_dir);
    if (resume && run_is_complete(paths)) {
        std::cout << "run already complete: " << out_dir << "\n";
        return;
    }
    RunLock lock(paths);
    auto sft_data = detail::load_data(sft_data_path);
    auto grpo_data = detail::load_data(grpo_data_path);
    if (sft_data.manifest.scene_alphabet != grpo_data.manifest.scene_alphabet) {
        throw ValidationError("sft and grpo datasets carry different scene alphabets");
    }
    detail::reconcile_vocab(cfg, sft_data.vocab);
    fs::create_directories(paths.checkpoints());
    detail::write_config_file(paths, cfg);

    RunManifest manifest(paths, "two_stage", cfg);
    manifest.add_dataset("sft", sft_data_path);
    manifest.add_dataset("grpo_train", grpo_data_path);

    PolicyParams policy;
    if (resume && fs::exists(paths.ckpt("post_sft"))) {
        LoadedCheckpoint prev = load_checkpoint(paths.ckpt("post_sft").string());
        detail::check_checkpoint_vocab(prev.meta, sft_data.vocab,
                                       paths.ckpt("post_sft").string());
        policy = prev.params;
        policy.role = "policy";
        std::cout << "reusing post-SFT checkpoint\n";
    } else {
        policy = init_params(cfg.policy, cfg.train.seed);
        SftMetrics sft_metrics = sft_train(policy, sft_data.pairs, sft_data.vocab, cfg.train);
        detail::write_sft_metrics_csv(paths.sft_metrics().string(), sft_metrics);
        save_checkpoint(policy, nullptr, sft_data.vocab.tokens(), ordered_json::object(), 0,
                        paths.ckpt("post_sft").string());
    }
    manifest.add_checkpoint("policy", paths.ckpt("post_sft"), 0);
    if (fs::exists(paths.sft_metrics())) manifest.set_sft_metrics(paths.sft_metrics());

    PolicyParams ref = snapshot(policy, "reference");
    if (resume && fs::exists(paths.ckpt("reference"))) {
        ref = load_checkpoint(paths.ckpt("reference").string()).params;
    } else {
        save_checkpoint(ref, nullptr, sft_data.vocab.tokens(), ordered_json::object(), 0,
                        paths.ckpt("reference").string());
    }
    manifest.add_checkpoint("reference", paths.ckpt("reference"), 0);

    detail::grpo_stage(paths, cfg, policy, ref, grpo_data, manifest, resume);
    manifest.finish();
}

// Argmax evaluation of one checkpoint: report.json/report.txt/preds.jsonl.
inline EvalReport run_eval_command(const std::string& ckpt_path, const std::string& data_path,
                                   const std::string& out_dir, bool anomalous_positive = true) {
    RunPaths paths = RunPaths::in(out_dir);
    fs::create_directories(paths.dir);
    auto data = detail::load_data(data_path);

    LoadedCheckpoint loaded = load_checkpoint(ckpt_path);
    detail::check_checkpoint_vocab(loaded.meta, data.vocab, ckpt_path);

    DecodeConfig decode_cfg;
    auto preds = predict_dataset(loaded.params, data.pairs, data.vocab, decode_cfg);
    EvalReport report = summarize(preds, anomalous_positive);

    {
        std::ofstream out(paths.preds(), std::ios::binary);
        if (!out) throw ValidationError("cannot write predictions: " + paths.preds().string());
        for (const auto& p : preds) {
            ordered_json j;
            j["id"] = p.sample_id;
            j["pred"] = to_string(p.predicted);
            j["label"] = p.label;
            j["category"] = to_string(p.category);
            j["len"] = p.response_len;
            j["response"] = decode(p.response_ids, data.vocab);
            out << j.dump() << "\n";
        }
    }
    {
        std::ofstream out(paths.report_json(), std::ios::binary);
        out << report_to_json(report).dump(2) << "\n";
    }
    {
        std::ofstream out(paths.report_txt(), std::ios::binary);
        out << render_report_text({{fs::path(ckpt_path).stem().string(), report}});
    }
    return report;
}

// Merges several evaluated runs into one comparison table plus the aligned
// response-length series of every run with training metrics.
inline void run_report_command(const std::vector<std::string>& run_dirs,
                               const std::string& out_dir) {
    if (run_dirs.empty()) throw ValidationError("report requires at least one run directory");
    fs::create_directories(out_dir);

    std::vector<std::pair<std::string, EvalReport>> rows;
    std::vector<std::string> series_labels;
    std::vector<std::vector<MetricsRow>> series;
    for (const auto& dir : run_dirs) {
        RunPaths paths = RunPaths::in(dir);
        std::ifstream in(paths.report_json());
        if (!in) {
            throw ValidationError("no report.json in " + dir +
                                  " (run `grpl eval` into that directory first)");
        }
        ordered_json j;
        in >> j;
        std::string label = paths.dir.filename().string();
        if (auto manifest = read_manifest_json(paths)) {
            label += " (" + manifest->value("mode", "?") + ")";
        }
        rows.push_back({label, report_from_json(j)});
        if (fs::exists(paths.metrics())) {
            series_labels.push_back(paths.dir.filename().string());
            series.push_back(read_metrics_csv(paths.metrics().string()));
        }
    }

    const std::string text = render_report_text(rows);
    {
        std::ofstream out(fs::path(out_dir) / "comparison.txt", std::ios::binary);
        out << text;
    }
    {
        ordered_json j = ordered_json::array();
        for (const auto& [label, report] : rows) {
            j.push_back({{"run", label}, {"report", report_to_json(report)}});
        }
        std::ofstream out(fs::path(out_dir) / "comparison.json", std::ios::binary);
        out << j.dump(2) << "\n";
    }
    if (!series.empty()) {
        auto aligned = align_length_series(series);
        std::ofstream out(fs::path(out_dir) / "length_series.csv", std::ios::binary);
        out << "step";
        for (const auto& label : series_labels) out << "," << label;
        out << "\n";
        for (const auto& row : aligned) {
            out << row.step;
            for (double len : row.lens) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), ",%.10g", len);
                out << buf;
            }
            out << "\n";
        }
    }
    std::cout << text;
}

}  // namespace grpl
