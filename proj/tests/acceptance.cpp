// Acceptance suite: every exit criterion with its tolerance pinned in code,
// one pass/fail line each. Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "grpl/checkpoint.hpp"
#include "grpl/config.hpp"
#include "grpl/eval.hpp"
#include "grpl/run.hpp"
#include "grpl/train.hpp"
#include "test_oracles.hpp"

using namespace grpl;
namespace fs = std::filesystem;

namespace {

struct CriterionFailure : std::runtime_error {
    explicit CriterionFailure(const std::string& msg) : std::runtime_error(msg) {}
};

void check(bool ok, const std::string& msg) {
    if (!ok) throw CriterionFailure(msg);
}

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

fs::path work_dir() {
    static fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "grpl_acceptance";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

void info(const std::string& line) { std::cout << "    " << line << "\n"; }

// ---------------------------------------------------------------------------
// 1. Gradient fidelity (NLL and GRPO clipped surrogate), 64-bit shadow
// ---------------------------------------------------------------------------

void criterion_gradient_fidelity() {
    const auto started = std::chrono::steady_clock::now();
    Vocab vocab = build_vocab(default_scene_alphabet());
    PolicyConfig pc;
    pc.vocab_size = static_cast<int>(vocab.size());
    pc.embed_dim = 3;
    pc.hidden_dim = 4;
    pc.layers = 1;
    pc.context_len = 64;
    ModelParams<double> params = convert<double>(init_params(pc, 17));
    check(params.total_params() <= 1000,
          "config exceeds the 1e3-parameter budget: " + std::to_string(params.total_params()));

    const double delta = 1e-4;
    const double tol = 1e-4;

    // NLL loss.
    std::vector<SftExample> batch;
    for (uint64_t i = 0; i < 4; ++i) {
        SamplePair pair =
            make_pair(derive_seed(41, i), Category::number, i % 2 == 0, true, Difficulty::easy);
        batch.push_back(sft_example_from_pair(pair, vocab));
    }
    GradBuffer<double> nll_grads = GradBuffer<double>::like(params);
    nll_loss_and_grad<double>(params, batch, nll_grads);

    Rng rng(7);
    int checked = 0;
    while (checked < 20) {
        const size_t a = rng.below(params.arrays.size());
        const size_t j = rng.below(params.arrays[a].size());
        const double orig = params.arrays[a][j];
        params.arrays[a][j] = orig + delta;
        const double up = nll_loss<double>(params, batch);
        params.arrays[a][j] = orig - delta;
        const double down = nll_loss<double>(params, batch);
        params.arrays[a][j] = orig;
        const double fd = (up - down) / (2.0 * delta);
        const double an = nll_grads.arrays[a][j];
        if (std::abs(fd) < 1e-9 && std::abs(an) < 1e-9) continue;
        check(rel_err(fd, an) <= tol, "NLL gradient mismatch at " + params.names[a] + "[" +
                                          std::to_string(j) + "]: fd=" + std::to_string(fd) +
                                          " analytic=" + std::to_string(an));
        ++checked;
    }
    info("NLL: 20 coordinates within 1e-4 relative error");

    // GRPO clipped-surrogate loss, off-policy ratios, KL in the objective.
    TrainConfig tc;
    tc.group_size = 3;
    tc.batch_size = 1;
    tc.max_gen_len = 14;
    tc.reward_cfg.kl_mode = KlMode::in_objective;
    PolicyParams policy32 = init_params(pc, 17);
    PolicyParams old_policy = snapshot(init_params(pc, 18), "old");
    PolicyParams ref = snapshot(init_params(pc, 19), "reference");
    SamplePair pair = make_pair(2, Category::number, true, false, Difficulty::easy);
    GroupBatch group = rollout_group(policy32, old_policy, ref, pair_prompt_ids(pair, vocab),
                                     tc, vocab, 23);
    fill_group_rewards(group, pair.label, vocab, tc);
    std::vector<GroupBatch> groups = {group};

    GradBuffer<double> ggrads = GradBuffer<double>::like(params);
    grpo_loss_and_grad<double>(params, groups, tc, ggrads);
    checked = 0;
    while (checked < 20) {
        const size_t a = rng.below(params.arrays.size());
        const size_t j = rng.below(params.arrays[a].size());
        const double orig = params.arrays[a][j];
        params.arrays[a][j] = orig + delta;
        const double up = grpo_loss<double>(params, groups, tc);
        params.arrays[a][j] = orig - delta;
        const double down = grpo_loss<double>(params, groups, tc);
        params.arrays[a][j] = orig;
        const double fd = (up - down) / (2.0 * delta);
        const double an = ggrads.arrays[a][j];
        if (std::abs(fd) < 1e-9 && std::abs(an) < 1e-9) continue;
        check(rel_err(fd, an) <= tol, "GRPO gradient mismatch at " + params.names[a] + "[" +
                                          std::to_string(j) + "]: fd=" + std::to_string(fd) +
                                          " analytic=" + std::to_string(an));
        ++checked;
    }
    info("GRPO surrogate: 20 coordinates within 1e-4 relative error");

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    check(secs <= 60.0, "gradient fidelity exceeded its 1-minute budget");
}

// ---------------------------------------------------------------------------
// 2. Advantage invariants over 1e4 random groups
// ---------------------------------------------------------------------------

void criterion_advantage_invariants() {
    Rng rng(99);
    const std::vector<size_t> sizes = {2, 4, 8, 16};
    for (int trial = 0; trial < 10000; ++trial) {
        const size_t g = sizes[rng.below(sizes.size())];
        std::vector<double> rewards(g);
        for (auto& r : rewards) r = static_cast<double>(rng.below(41)) / 8.0;  // dyadic

        for (AdvNorm mode : {AdvNorm::mean_std, AdvNorm::mean_only}) {
            const auto adv = compute_advantages(rewards, mode);
            double mean = 0.0;
            for (double a : adv) mean += a;
            check(std::abs(mean / static_cast<double>(g)) <= 1e-9,
                  "advantage mean exceeds 1e-9");

            if (mode == AdvNorm::mean_std) {
                const bool degenerate =
                    std::all_of(adv.begin(), adv.end(), [](double a) { return a == 0.0; });
                if (!degenerate) {
                    double var = 0.0;
                    for (double a : adv) var += a * a;
                    check(std::abs(std::sqrt(var / static_cast<double>(g)) - 1.0) <= 1e-6,
                          "population std of normalized advantages is not 1");
                }
            }

            std::vector<double> shifted = rewards;
            for (auto& r : shifted) r += 3.375;
            check(compute_advantages(shifted, mode) == adv,
                  "shifting all rewards changed the advantages");
        }

        // All-equal group: exactly zero.
        std::vector<double> equal(g, static_cast<double>(rng.below(9)) / 4.0);
        for (AdvNorm mode : {AdvNorm::mean_std, AdvNorm::mean_only}) {
            for (double a : compute_advantages(equal, mode)) {
                check(a == 0.0, "degenerate group produced nonzero advantages");
            }
        }
    }
    info("10000 groups, G in {2,4,8,16}: zero mean, unit std, exact shift invariance");
}

// ---------------------------------------------------------------------------
// 3. Trust-region center identity
// ---------------------------------------------------------------------------

void criterion_trust_region_identity() {
    Vocab vocab = build_vocab(default_scene_alphabet());
    PolicyConfig pc;
    pc.vocab_size = static_cast<int>(vocab.size());
    pc.embed_dim = 8;
    pc.hidden_dim = 12;
    pc.layers = 1;
    PolicyParams policy = init_params(pc, 5);
    PolicyParams ref = snapshot(policy, "reference");

    TrainConfig tc;
    tc.group_size = 8;
    tc.batch_size = 1;
    tc.max_gen_len = 16;
    tc.reward_cfg.kl_mode = KlMode::both_off_check;  // KL off

    SamplePair pair = make_pair(3, Category::number, true, false, Difficulty::easy);
    GroupBatch group =
        rollout_group(policy, policy, ref, pair_prompt_ids(pair, vocab), tc, vocab, 11);
    fill_group_rewards(group, pair.label, vocab, tc);

    for (const auto& t : group.trajectories) {
        for (size_t k = 0; k < t.output_ids.size(); ++k) {
            const double rho = std::exp(t.logp_policy.per_token[k] - t.logp_old.per_token[k]);
            check(rho >= 1.0 - 1e-6 && rho <= 1.0 + 1e-6,
                  "importance ratio drifted from 1 at the trust-region center");
        }
    }

    std::vector<GroupBatch> groups = {group};
    GradBuffer<float> surrogate = GradBuffer<float>::like(policy);
    grpo_loss_and_grad<float>(policy, groups, tc, surrogate);

    GradBuffer<float> reinforce = GradBuffer<float>::like(policy);
    for (size_t i = 0; i < group.trajectories.size(); ++i) {
        const auto& t = group.trajectories[i];
        const double w = -group.advantages[i] /
                         (static_cast<double>(tc.group_size) *
                          static_cast<double>(t.output_ids.size()));
        std::vector<double> upstream(t.output_ids.size(), w);
        weighted_logprob_grad<float>(policy, t.prompt_ids, t.output_ids, upstream, reinforce);
    }

    double num = 0.0, da = 0.0, db = 0.0;
    for (size_t i = 0; i < surrogate.arrays.size(); ++i) {
        for (size_t j = 0; j < surrogate.arrays[i].size(); ++j) {
            const double x = surrogate.arrays[i][j], y = reinforce.arrays[i][j];
            num += (x - y) * (x - y);
            da += x * x;
            db += y * y;
        }
    }
    const double err = std::sqrt(num) / std::max({std::sqrt(da), std::sqrt(db), 1e-12});
    check(err <= 1e-5, "surrogate gradient deviates from REINFORCE-with-baseline: rel err " +
                           std::to_string(err));
    info("all ratios within 1e-6 of 1; gradient identity within 1e-5");
}

// ---------------------------------------------------------------------------
// 4. Reward-rule suite
// ---------------------------------------------------------------------------

void criterion_reward_rules() {
    Vocab vocab = build_vocab(default_scene_alphabet());
    RewardConfig cfg;  // lambda_struct = lambda_acc = 0.5
    cfg.kl_mode = KlMode::in_objective;

    // The three reachable (r_struct, r_acc) combinations.
    check(composite_reward(0, 0, 0.7, cfg).composite == 0.0, "composite(0,0) != 0");
    check(composite_reward(1, 0, -1.3, cfg).composite == 0.5, "composite(1,0) != 0.5");
    check(composite_reward(1, 1, 2.9, cfg).composite == 1.0, "composite(1,1) != 1.0");

    // Worked accuracy rule: ground-truth yes needs <answer> yes </answer>.
    auto ids = [&](const std::string& s) { return encode(s, vocab); };
    check(accuracy_reward(ids("<think> 2 pin </think> <answer> yes </answer>"), true, vocab) == 1,
          "matching yes answer did not earn reward 1");
    check(accuracy_reward(ids("<think> 2 pin </think> <answer> no </answer>"), true, vocab) == 0,
          "wrong answer earned a reward");
    check(accuracy_reward(ids("<answer> yes </answer>"), true, vocab) == 0,
          "malformed output earned a reward");
    check(accuracy_reward(ids("<think> x </think> <answer> no </answer>"), false, vocab) == 1,
          "matching no answer did not earn reward 1");

    // Parser/structure-reward agreement on fuzzed sequences.
    Rng rng(4);
    for (int i = 0; i < 10000; ++i) {
        std::vector<TokenId> seq;
        for (size_t k = 0, n = rng.below(32); k < n; ++k) {
            seq.push_back(static_cast<TokenId>(rng.below(vocab.size())));
        }
        check(structure_reward(seq, vocab) == (parse_response(seq, vocab).well_formed ? 1 : 0),
              "structure reward disagreed with the parser");
    }
    info("composites exactly {0, 0.5, 1.0}; worked rule holds; 1e4 fuzzed sequences agree");
}

// ---------------------------------------------------------------------------
// 5. Generator/oracle agreement and dataset round trip
// ---------------------------------------------------------------------------

void criterion_generator_oracle() {
    const auto cats = all_categories();
    for (uint64_t i = 0; i < 10000; ++i) {
        const Category cat = cats[i % cats.size()];
        const bool anomalous = (i / cats.size()) % 2 == 0;
        SamplePair pair = make_pair(derive_seed(5150, i), cat, anomalous, false);
        check(oracle_label(pair) == pair.label, "oracle disagreed with the generator label");
        const int edits = grpl_test::canonical_diff_count(pair.reference, pair.query);
        check(edits == (anomalous ? 1 : 0),
              "pair is not a single-edit pair: " + std::to_string(edits) + " edits");
    }

    DatasetManifest m;
    m.seed = 31;
    m.mix = DatasetManifest::uniform_mix();
    m.sft_size = 60;
    m.grpo_train_size = 40;
    m.grpo_test_size = 20;
    const fs::path dir = work_dir() / "roundtrip";
    DatasetFiles files = write_dataset(m, dir.string());
    check(read_dataset(files.sft) == generate_split(m, "sft", m.sft_size, true),
          "write->read round trip is not exact");
    info("10000 pairs: oracle agreement and single-edit property; round trip exact");
}

// ---------------------------------------------------------------------------
// 6. Metric oracle equivalence
// ---------------------------------------------------------------------------

void criterion_metric_oracle() {
    // Worked example.
    std::vector<Prediction> preds;
    auto push = [&](Answer a, bool label, int n, Category c = Category::number) {
        for (int i = 0; i < n; ++i) {
            Prediction p;
            p.predicted = a;
            p.label = label;
            p.category = c;
            p.response_len = 10;
            preds.push_back(p);
        }
    };
    push(Answer::yes, true, 3);   // TP
    push(Answer::yes, false, 1);  // FP
    push(Answer::no, true, 2);    // FN
    push(Answer::no, false, 4);   // TN
    auto [acc, f1] = accuracy_f1(preds);
    check(std::abs(acc - 0.7) <= 1e-12, "worked example accuracy != 0.7");
    check(std::abs(f1 - 2.0 / 3.0) <= 1e-12, "worked example F1 != 2/3");

    // Brute-force equivalence on 1e3 random sets.
    Rng rng(606);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<Prediction> sample;
        const size_t n = 1 + rng.below(60);
        for (size_t i = 0; i < n; ++i) {
            Prediction p;
            const size_t pick = rng.below(3);
            p.predicted = pick == 0 ? Answer::yes : pick == 1 ? Answer::no : Answer::malformed;
            p.label = rng.coin();
            p.category = all_categories()[rng.below(5)];
            sample.push_back(p);
        }
        grpl_test::BruteConfusion brute;
        for (const auto& p : sample) {
            if (p.predicted == Answer::malformed) {
                ++brute.malformed;
                if (p.label) ++brute.malformed_on_positive;
            } else if (p.predicted == Answer::yes) {
                p.label ? ++brute.tp : ++brute.fp;
            } else {
                p.label ? ++brute.fn : ++brute.tn;
            }
        }
        auto [a2, f2] = accuracy_f1(sample);
        check(std::abs(a2 - brute.accuracy()) <= 1e-12, "accuracy deviates from brute force");
        check(std::abs(f2 - brute.f1()) <= 1e-12, "F1 deviates from brute force");

        // Pooling law: per-category correct counts sum to the pooled count.
        EvalReport report = summarize(sample);
        double weighted = 0.0;
        for (const auto& [name, score] : report.per_category) {
            weighted += score.accuracy * static_cast<double>(score.support);
        }
        check(std::abs(report.overall.accuracy -
                       weighted / static_cast<double>(report.overall.support)) <= 1e-12,
              "pooled accuracy deviates from the support-weighted mean");
    }
    info("worked example 0.7 & 2/3; 1000 random sets exact; pooling law holds");
}

// ---------------------------------------------------------------------------
// 7. Toy convergence and the ablation grid
// ---------------------------------------------------------------------------

RunConfig convergence_config() {
    RunConfig cfg;
    cfg.train.seed = 3;
    cfg.train.lr = 1e-3;        // SFT stage
    cfg.train.grpo_lr = 1e-4;   // RL stage
    cfg.train.sft_epochs = 3;
    cfg.train.sft_batch_size = 16;
    cfg.train.group_size = 8;
    cfg.train.batch_size = 4;
    cfg.train.grpo_steps = 400;
    cfg.train.checkpoint_every = 200;
    cfg.train.max_gen_len = 48;
    cfg.train.temperature = 1.0;
    cfg.train.mask_mode = MaskMode::off;
    return cfg;
}

void criterion_toy_convergence() {
    const auto started = std::chrono::steady_clock::now();
    const fs::path root = work_dir() / "convergence";

    // Easy number-anomaly curriculum; >= 2000 gold traces for SFT.
    DatasetManifest m;
    m.seed = 7;
    m.difficulty = Difficulty::easy;
    m.mix = {{"number", 1.0}};
    m.sft_size = 8000;
    m.grpo_train_size = 984;
    m.grpo_test_size = 500;
    DatasetFiles files = write_dataset(m, (root / "data").string());
    info("dataset written (sft=8000, grpo=984, test=500, number-only, easy)");

    RunConfig cfg = convergence_config();
    const fs::path two_stage_dir = root / "two_stage";
    run_two_stage_command(cfg, files.sft, files.grpo_train, two_stage_dir.string(), false);
    info("two-stage run complete");

    // Gate 1: structure-reward rate at the end of GRPO.
    auto metrics = read_metrics_csv((two_stage_dir / "metrics.csv").string());
    check(!metrics.empty(), "two-stage run produced no metrics");
    const size_t tail = std::min<size_t>(50, metrics.size());
    double structure_rate = 0.0;
    for (size_t i = metrics.size() - tail; i < metrics.size(); ++i) {
        structure_rate += metrics[i].structure_rate;
    }
    structure_rate /= static_cast<double>(tail);
    info("structure-reward rate over the last " + std::to_string(tail) +
         " steps: " + std::to_string(structure_rate));
    check(structure_rate >= 0.95, "structure-reward rate " + std::to_string(structure_rate) +
                                      " is below the 0.95 gate");

    // Gate 2: held-out accuracy on the 500-pair test split.
    EvalReport two_stage_report = run_eval_command(
        two_stage_dir / "checkpoints" / "final.grpl", files.grpo_test,
        (root / "eval_two_stage").string());
    info("two-stage held-out accuracy: " + std::to_string(two_stage_report.overall.accuracy));
    check(two_stage_report.overall.accuracy >= 0.90,
          "held-out accuracy " + std::to_string(two_stage_report.overall.accuracy) +
              " is below the 0.90 gate");

    // Ablation grid: base / SFT-only / GRPO-only / SFT+GRPO.
    const fs::path grpo_only_dir = root / "grpo_only";
    run_grpo_command(cfg, files.grpo_train, "", grpo_only_dir.string(), false);
    info("grpo-only ablation complete");

    run_eval_command(grpo_only_dir / "checkpoints" / "reference.grpl", files.grpo_test,
                     (root / "eval_base").string());
    run_eval_command(two_stage_dir / "checkpoints" / "post_sft.grpl", files.grpo_test,
                     (root / "eval_sft_only").string());
    run_eval_command(grpo_only_dir / "checkpoints" / "final.grpl", files.grpo_test,
                     (root / "eval_grpo_only").string());

    // The report needs the training metrics beside the eval artifacts to
    // emit the length series for the SFT vs no-SFT pair.
    fs::copy_file(two_stage_dir / "metrics.csv", root / "eval_two_stage" / "metrics.csv");
    fs::copy_file(grpo_only_dir / "metrics.csv", root / "eval_grpo_only" / "metrics.csv");
    run_report_command({(root / "eval_base").string(), (root / "eval_sft_only").string(),
                        (root / "eval_grpo_only").string(),
                        (root / "eval_two_stage").string()},
                       (root / "report").string());
    check(fs::exists(root / "report" / "comparison.txt"), "comparison table missing");
    check(fs::exists(root / "report" / "length_series.csv"), "length series missing");

    // Directional Fig.-5-style note, reported but not gated.
    auto grpo_metrics = read_metrics_csv((grpo_only_dir / "metrics.csv").string());
    double len_with_sft = 0.0, len_without = 0.0;
    for (const auto& r : metrics) len_with_sft += r.mean_response_len;
    for (const auto& r : grpo_metrics) len_without += r.mean_response_len;
    len_with_sft /= static_cast<double>(metrics.size());
    len_without /= static_cast<double>(grpo_metrics.size());
    info("mean response length during GRPO: with SFT " + std::to_string(len_with_sft) +
         ", without SFT " + std::to_string(len_without));

    const double minutes =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count() / 60.0;
    info("wall clock: " + std::to_string(minutes) + " min");
    check(minutes <= 15.0, "convergence criterion exceeded the 15-minute budget");
}

// ---------------------------------------------------------------------------
// 8. End-to-end determinism
// ---------------------------------------------------------------------------

void criterion_determinism() {
    const fs::path root = work_dir() / "determinism";

    DatasetManifest m;
    m.seed = 12;
    m.difficulty = Difficulty::easy;
    m.mix = {{"number", 1.0}};
    m.sft_size = 24;
    m.grpo_train_size = 12;
    m.grpo_test_size = 8;
    DatasetFiles a = write_dataset(m, (root / "data_a").string());
    DatasetFiles b = write_dataset(m, (root / "data_b").string());
    const std::vector<std::pair<std::string, std::string>> twins = {
        {a.sft, b.sft},
        {a.grpo_train, b.grpo_train},
        {a.grpo_test, b.grpo_test},
        {a.manifest, b.manifest},
    };
    for (const auto& [first_path, second_path] : twins) {
        check(hash_file(first_path) == hash_file(second_path),
              "dataset regeneration changed " + first_path);
    }

    RunConfig cfg;
    cfg.policy.embed_dim = 10;
    cfg.policy.hidden_dim = 12;
    cfg.policy.layers = 1;
    cfg.train.seed = 9;
    cfg.train.lr = 2e-3;
    cfg.train.sft_epochs = 1;
    cfg.train.sft_batch_size = 8;
    cfg.train.group_size = 2;
    cfg.train.batch_size = 1;
    cfg.train.grpo_steps = 3;
    cfg.train.max_gen_len = 12;

    auto run_pipeline = [&](const fs::path& dir) {
        run_two_stage_command(cfg, a.sft, a.grpo_train, dir.string(), false);
        run_eval_command(dir / "checkpoints" / "final.grpl", a.grpo_test,
                         (dir / "eval").string());
        std::ostringstream out;
        out << to_hex(hash_file((dir / "checkpoints" / "post_sft.grpl").string())) << "|"
            << to_hex(hash_file((dir / "checkpoints" / "reference.grpl").string())) << "|"
            << to_hex(hash_file((dir / "checkpoints" / "final.grpl").string())) << "|"
            << to_hex(hash_file((dir / "eval" / "report.json").string())) << "|"
            << to_hex(hash_file((dir / "eval" / "preds.jsonl").string()));
        return out.str();
    };
    const std::string first = run_pipeline(root / "run_a");
    const std::string second = run_pipeline(root / "run_b");
    check(first == second, "two identical pipelines produced different artifact hashes");
    info("dataset, checkpoint, and report hashes identical across reruns");
}

struct Criterion {
    int id;
    std::string name;
    std::function<void()> body;
};

}  // namespace

int main() {
    // The runtime gates are single-core by definition.
    unsetenv("GRPL_THREADS");

    const std::vector<Criterion> criteria = {
        {1, "gradient fidelity (NLL + GRPO, 64-bit shadow, 1e-4 relative)",
         criterion_gradient_fidelity},
        {2, "advantage invariants (1e4 groups, zero mean, unit std, shift-exact)",
         criterion_advantage_invariants},
        {3, "trust-region center identity (rho=1, REINFORCE equivalence)",
         criterion_trust_region_identity},
        {4, "reward rules (Eq.-exact composites, worked rule, parser agreement)",
         criterion_reward_rules},
        {5, "generator/oracle agreement and dataset round trip",
         criterion_generator_oracle},
        {6, "metric oracle equivalence (accuracy/F1, pooling law)",
         criterion_metric_oracle},
        {7, "toy convergence and the ablation grid", criterion_toy_convergence},
        {8, "end-to-end determinism", criterion_determinism},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        std::cout << "criterion " << c.id << ": " << c.name << "\n" << std::flush;
        try {
            c.body();
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::cout << "[PASS] criterion " << c.id << " (" << std::fixed
                      << std::setprecision(1) << secs << "s)\n";
        } catch (const std::exception& e) {
            ++failures;
            std::cout << "[FAIL] criterion " << c.id << ": " << e.what() << "\n";
        }
        std::cout.unsetf(std::ios::fixed);
    }

    if (failures == 0) {
        std::cout << "ACCEPTANCE: all " << criteria.size() << " criteria passed\n";
    } else {
        std::cout << "ACCEPTANCE: " << failures << " of " << criteria.size()
                  << " criteria FAILED\n";
    }
    return failures == 0 ? 0 : 1;
}
