// grpl: synthetic-scene data generation, two-stage SFT+GRPO training,
// evaluation, and reporting for reference/query anomaly reasoning.

#include <algorithm>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "grpl/config.hpp"
#include "grpl/run.hpp"
#include "grpl/scenes.hpp"

namespace {

using namespace grpl;

std::map<std::string, double> parse_mix(const std::string& spec) {
    std::map<std::string, double> mix;
    if (spec.empty()) return DatasetManifest::uniform_mix();
    std::istringstream in(spec);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("mix entries look like category=ratio, got \"" + item + "\"");
        }
        const std::string name = item.substr(0, eq);
        category_from_string(name);
        try {
            mix[name] = std::stod(item.substr(eq + 1));
        } catch (const std::exception&) {
            throw ValidationError("bad mix ratio in \"" + item + "\"");
        }
    }
    return mix;
}

RunConfig load_config_opt(const std::string& path) {
    return path.empty() ? RunConfig{} : load_config_file(path);
}

Scene parse_scene_tokens(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> words;
    std::string w;
    while (in >> w) words.push_back(w);
    if (words.empty() || words.size() % 3 != 0) {
        throw ValidationError("scene tokens come in `<slot> <color> <kind>` triples, got \"" +
                              text + "\"");
    }
    Scene scene;
    const auto& palette_colors = colors();
    for (size_t i = 0; i < words.size(); i += 3) {
        SceneObject obj;
        try {
            obj.slot = std::stoi(words[i]);
        } catch (const std::exception&) {
            throw ValidationError("bad slot \"" + words[i] + "\" in scene tokens");
        }
        obj.color = words[i + 1];
        obj.kind = words[i + 2];
        if (std::find(palette_colors.begin(), palette_colors.end(), obj.color) ==
            palette_colors.end()) {
            throw ValidationError("unknown color \"" + obj.color + "\" in scene tokens");
        }
        scene.objects.push_back(obj);
    }
    scene.canonicalize();
    scene.validate();
    return scene;
}

std::string render_scene(const Scene& scene) {
    std::string out;
    for (const auto& t : scene_tokens(scene)) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

int cmd_gen_data(const std::string& out, uint64_t seed, size_t sft_size, size_t grpo_size,
                 size_t test_size, const std::string& mix, const std::string& difficulty) {
    DatasetManifest m;
    m.seed = seed;
    m.difficulty = difficulty_from_string(difficulty);
    m.mix = parse_mix(mix);
    m.sft_size = sft_size;
    m.grpo_train_size = grpo_size;
    m.grpo_test_size = test_size;
    m.validate();
    DatasetFiles files = write_dataset(m, out);
    std::cout << "wrote " << files.sft << " (" << sft_size << " samples)\n"
              << "wrote " << files.grpo_train << " (" << grpo_size << " samples)\n"
              << "wrote " << files.grpo_test << " (" << test_size << " samples)\n"
              << "wrote " << files.manifest << "\n";
    return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& ref_tokens,
              const std::string& qry_tokens, const std::string& label) {
    LoadedCheckpoint loaded = load_checkpoint(ckpt);
    if (loaded.meta.vocab_tokens.size() <= kNumSpecials) {
        throw ValidationError("checkpoint carries no usable vocabulary");
    }
    Vocab vocab = build_vocab(std::vector<std::string>(
        loaded.meta.vocab_tokens.begin() + kNumSpecials, loaded.meta.vocab_tokens.end()));

    SamplePair pair;
    pair.id = "infer";
    pair.reference = parse_scene_tokens(ref_tokens);
    pair.query = parse_scene_tokens(qry_tokens);
    for (const auto* scene : {&pair.reference, &pair.query}) {
        for (const auto& obj : scene->objects) vocab.id(obj.kind);  // unknown kind -> error
    }

    SampleSettings settings;
    settings.temperature = 0.0;  // argmax
    Rng rng(0);
    Trajectory traj = sample_trajectory<float>(loaded.params, pair_prompt_ids(pair, vocab),
                                               settings, vocab, rng);
    ParsedResponse parsed = parse_response(traj.output_ids, vocab);

    std::cout << "prompt: " << kUnifiedPromptText << "\n"
              << "ref:    " << render_scene(pair.reference) << "\n"
              << "qry:    " << render_scene(pair.query) << "\n"
              << "output: " << decode(traj.output_ids, vocab) << "\n"
              << "answer: " << to_string(parsed.answer) << "\n";

    if (!label.empty()) {
        if (label != "yes" && label != "no") {
            throw ValidationError("--label must be yes or no");
        }
        const bool truth = label == "yes";
        RewardConfig rcfg;
        RewardBreakdown b = score_output(traj.output_ids, truth, traj.logp_old.total,
                                         traj.logp_old.total, vocab, rcfg);
        std::cout << "r_struct = " << b.r_struct << "\n"
                  << "r_acc    = " << b.r_acc << "\n"
                  << "r_kl     = " << b.r_kl << " (model scored against itself)\n"
                  << "composite = " << b.composite << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-stage SFT+GRPO trainer for reference/query anomaly reasoning"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset splits");
    std::string gen_out;
    uint64_t gen_seed = 0;
    size_t sft_size = 2731, grpo_size = 984, test_size = 500;
    std::string mix, difficulty = "full";
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--seed", gen_seed, "dataset seed");
    gen->add_option("--sft-size", sft_size, "SFT split size");
    gen->add_option("--grpo-size", grpo_size, "GRPO train split size");
    gen->add_option("--test-size", test_size, "held-out test split size");
    gen->add_option("--mix", mix, "category ratios, e.g. number=0.5,color=0.5 (default uniform)");
    gen->add_option("--difficulty", difficulty, "easy|full")
        ->check(CLI::IsMember({"easy", "full"}));

    // shared train options
    std::string data, sft_data, grpo_data, config_path, out_dir, init_ckpt;
    bool resume = false, ablate_sft = false, paper_steps = false;
    uint64_t seed_override = 0;
    bool seed_set = false;

    auto add_train_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "flat JSON config file");
        cmd->add_option("--out", out_dir, "run directory")->required();
        cmd->add_flag("--resume", resume, "continue from the last checkpoint");
        cmd->add_flag("--paper-steps", paper_steps, "use the 50-step fidelity preset");
        cmd->add_option("--seed", seed_override, "override the config seed")
            ->each([&](const std::string&) { seed_set = true; });
    };

    auto* sft = app.add_subcommand("sft", "supervised fine-tuning on gold traces");
    sft->add_option("--data", data, "sft.jsonl")->required();
    add_train_common(sft);

    auto* grpo = app.add_subcommand("grpo", "GRPO training");
    grpo->add_option("--data", data, "grpo_train.jsonl")->required();
    grpo->add_option("--init", init_ckpt, "initial checkpoint (post-SFT)");
    grpo->add_flag("--ablate-sft", ablate_sft, "start from random init (no-SFT ablation)");
    add_train_common(grpo);

    auto* two = app.add_subcommand("two-stage", "SFT followed by GRPO");
    two->add_option("--sft-data", sft_data, "sft.jsonl")->required();
    two->add_option("--grpo-data", grpo_data, "grpo_train.jsonl")->required();
    add_train_common(two);

    // eval
    auto* ev = app.add_subcommand("eval", "argmax evaluation of a checkpoint");
    std::string eval_ckpt, eval_data, eval_out, f1_positive = "anomalous";
    ev->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
    ev->add_option("--data", eval_data, "test jsonl")->required();
    ev->add_option("--out", eval_out, "output directory")->required();
    ev->add_option("--f1-positive", f1_positive, "F1 positive class: anomalous|normal")
        ->check(CLI::IsMember({"anomalous", "normal"}));

    // report
    auto* rep = app.add_subcommand("report", "merge evaluated runs into one comparison");
    std::vector<std::string> run_dirs;
    std::string report_out = ".";
    rep->add_option("--runs", run_dirs, "run directories")->required()->expected(-1);
    rep->add_option("--out", report_out, "output directory");

    // infer
    auto* inf = app.add_subcommand("infer", "one reference/query pair through a checkpoint");
    std::string inf_ckpt, inf_ref, inf_qry, inf_label;
    inf->add_option("--ckpt", inf_ckpt, "checkpoint file")->required();
    inf->add_option("--ref", inf_ref, "reference scene tokens: `<slot> <color> <kind>`...")
        ->required();
    inf->add_option("--qry", inf_qry, "query scene tokens")->required();
    inf->add_option("--label", inf_label, "ground truth yes|no for reward scoring");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) {
            return cmd_gen_data(gen_out, gen_seed, sft_size, grpo_size, test_size, mix,
                                difficulty);
        }

        RunConfig cfg = load_config_opt(config_path);
        if (seed_set) cfg.train.seed = seed_override;
        if (paper_steps) cfg.train.grpo_steps = 50;

        if (sft->parsed()) {
            grpl::run_sft_command(cfg, data, out_dir, resume);
        } else if (grpo->parsed()) {
            if (ablate_sft && !init_ckpt.empty()) {
                throw ValidationError("--ablate-sft and --init are mutually exclusive");
            }
            if (!ablate_sft && init_ckpt.empty()) {
                throw ValidationError("grpo needs --init CKPT, or --ablate-sft for random init");
            }
            grpl::run_grpo_command(cfg, data, init_ckpt, out_dir, resume);
        } else if (two->parsed()) {
            grpl::run_two_stage_command(cfg, sft_data, grpo_data, out_dir, resume);
        } else if (ev->parsed()) {
            EvalReport report = grpl::run_eval_command(eval_ckpt, eval_data, eval_out,
                                                       f1_positive == "anomalous");
            std::cout << render_report_text({{eval_ckpt, report}});
        } else if (rep->parsed()) {
            grpl::run_report_command(run_dirs, report_out);
        } else if (inf->parsed()) {
            return cmd_infer(inf_ckpt, inf_ref, inf_qry, inf_label);
        }
        return 0;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
    }
}
