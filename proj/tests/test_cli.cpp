// End-to-end checks of the grpl binary: exit codes, determinism, resume,
// and the run-directory artifact contract.
#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "grpl/hash.hpp"
#include "grpl/run.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

const std::string kBin = GRPL_CLI_BIN;

struct CmdResult {
    int exit_code;
    std::string output;
};

CmdResult run_cli(const std::string& args) {
    const std::string out_file = (fs::temp_directory_path() / "grpl_cli_out.txt").string();
    const std::string cmd = kBin + " " + args + " > " + out_file + " 2>&1";
    const int raw = std::system(cmd.c_str());
    std::ifstream in(out_file);
    std::string output((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return {WEXITSTATUS(raw), output};
}

fs::path temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("grpl_cli_" + tag);
    fs::remove_all(p);
    return p;
}

std::string write_tiny_config(const std::string& name) {
    ordered_json j;
    j["embed_dim"] = 10;
    j["hidden_dim"] = 12;
    j["layers"] = 1;
    j["lr"] = 0.002;
    j["sft_epochs"] = 1;
    j["sft_batch_size"] = 8;
    j["group_size"] = 2;
    j["batch_size"] = 1;
    j["grpo_steps"] = 2;
    j["max_gen_len"] = 12;
    j["seed"] = 5;
    fs::path p = fs::temp_directory_path() / name;
    std::ofstream out(p);
    out << j.dump();
    return p.string();
}

}  // namespace

TEST_CASE("cli: gen-data is deterministic and validates its inputs") {
    auto dir_a = temp_dir("gen_a");
    auto dir_b = temp_dir("gen_b");
    const std::string flags = " --seed 11 --sft-size 12 --grpo-size 8 --test-size 4";

    REQUIRE(run_cli("gen-data --out " + dir_a.string() + flags).exit_code == 0);
    REQUIRE(run_cli("gen-data --out " + dir_b.string() + flags).exit_code == 0);
    for (const char* f : {"sft.jsonl", "grpo_train.jsonl", "grpo_test.jsonl", "manifest.json"}) {
        REQUIRE(grpl::hash_file((dir_a / f).string()) == grpl::hash_file((dir_b / f).string()));
    }

    // Mix ratios must sum to 1.
    CmdResult bad = run_cli("gen-data --out " + temp_dir("gen_bad").string() +
                            " --mix number=0.5,color=0.4");
    REQUIRE(bad.exit_code == 1);
    REQUIRE(bad.output.find("sum to 1") != std::string::npos);

    // easy difficulty rejects a functional share.
    CmdResult easy_bad = run_cli("gen-data --out " + temp_dir("gen_bad2").string() +
                                 " --difficulty easy");
    REQUIRE(easy_bad.exit_code == 1);
}

TEST_CASE("cli: unknown config keys and missing inputs are validation errors") {
    auto dir = temp_dir("cfg");
    fs::create_directories(dir);
    const std::string cfg = (dir / "bad.json").string();
    {
        std::ofstream out(cfg);
        out << R"({"learning_rate": 0.1})";  // not a known key
    }
    CmdResult r = run_cli("sft --data /nonexistent.jsonl --config " + cfg + " --out " +
                          (dir / "run").string());
    REQUIRE(r.exit_code == 1);
    REQUIRE(r.output.find("unknown config key") != std::string::npos);

    CmdResult missing = run_cli("sft --data /nonexistent.jsonl --out " + (dir / "run2").string());
    REQUIRE(missing.exit_code == 1);
}

TEST_CASE("cli: two-stage run directory contract, resume, eval, report") {
    auto data_dir = temp_dir("pipeline_data");
    REQUIRE(run_cli("gen-data --out " + data_dir.string() +
                    " --seed 3 --sft-size 16 --grpo-size 10 --test-size 6 --mix number=1.0"
                    " --difficulty easy")
                .exit_code == 0);
    const std::string cfg = write_tiny_config("tiny_cfg.json");
    auto run_dir = temp_dir("pipeline_run");

    CmdResult train = run_cli("two-stage --sft-data " + (data_dir / "sft.jsonl").string() +
                              " --grpo-data " + (data_dir / "grpo_train.jsonl").string() +
                              " --config " + cfg + " --out " + run_dir.string());
    REQUIRE(train.exit_code == 0);

    // Run manifest references exactly three checkpoints with recorded hashes.
    std::ifstream mf(run_dir / "manifest.json");
    ordered_json manifest;
    mf >> manifest;
    REQUIRE(manifest.at("status") == "complete");
    REQUIRE(manifest.at("checkpoints").size() == 3);
    std::vector<std::string> roles;
    for (const auto& c : manifest.at("checkpoints")) {
        roles.push_back(c.at("role").get<std::string>());
        const fs::path p = run_dir / c.at("path").get<std::string>();
        REQUIRE(fs::exists(p));
        REQUIRE(grpl::to_hex(grpl::hash_file(p.string())) == c.at("hash").get<std::string>());
    }
    REQUIRE(roles == std::vector<std::string>{"policy", "reference", "policy"});
    // Effective config echoed in full, defaults included.
    REQUIRE(manifest.at("config").contains("clip_eps"));
    REQUIRE(manifest.at("config").contains("beta"));

    // Resume on a finished run is an explicit no-op.
    CmdResult resume = run_cli("two-stage --sft-data " + (data_dir / "sft.jsonl").string() +
                               " --grpo-data " + (data_dir / "grpo_train.jsonl").string() +
                               " --config " + cfg + " --out " + run_dir.string() + " --resume");
    REQUIRE(resume.exit_code == 0);
    REQUIRE(resume.output.find("already complete") != std::string::npos);

    // Evaluation writes report + predictions; repeated runs hash identically.
    const std::string final_ckpt = (run_dir / "checkpoints" / "final.grpl").string();
    const std::string test_data = (data_dir / "grpo_test.jsonl").string();
    REQUIRE(run_cli("eval --ckpt " + final_ckpt + " --data " + test_data + " --out " +
                    run_dir.string())
                .exit_code == 0);
    const uint64_t report_hash = grpl::hash_file((run_dir / "report.json").string());
    const uint64_t preds_hash = grpl::hash_file((run_dir / "preds.jsonl").string());
    REQUIRE(run_cli("eval --ckpt " + final_ckpt + " --data " + test_data + " --out " +
                    run_dir.string())
                .exit_code == 0);
    REQUIRE(grpl::hash_file((run_dir / "report.json").string()) == report_hash);
    REQUIRE(grpl::hash_file((run_dir / "preds.jsonl").string()) == preds_hash);

    // report merges evaluated runs.
    auto report_dir = temp_dir("pipeline_report");
    CmdResult rep = run_cli("report --runs " + run_dir.string() + " --out " +
                            report_dir.string());
    REQUIRE(rep.exit_code == 0);
    REQUIRE(fs::exists(report_dir / "comparison.txt"));
    REQUIRE(fs::exists(report_dir / "comparison.json"));
    REQUIRE(fs::exists(report_dir / "length_series.csv"));
}

TEST_CASE("cli: vocabulary mismatch between checkpoint and dataset is a hard error") {
    auto data_dir = temp_dir("vocab_data");
    REQUIRE(run_cli("gen-data --out " + data_dir.string() +
                    " --seed 4 --sft-size 8 --grpo-size 6 --test-size 4 --mix number=1.0"
                    " --difficulty easy")
                .exit_code == 0);

    // A checkpoint whose vocabulary is not the dataset's.
    grpl::PolicyConfig pc;
    pc.vocab_size = 14;
    pc.embed_dim = 4;
    pc.hidden_dim = 4;
    pc.layers = 1;
    grpl::PolicyParams params = grpl::init_params(pc, 1);
    auto ckpt = fs::temp_directory_path() / "grpl_cli_mismatch.grpl";
    grpl::save_checkpoint(params, nullptr, {"a", "b"}, ordered_json::object(), 0,
                          ckpt.string());

    CmdResult r = run_cli("eval --ckpt " + ckpt.string() + " --data " +
                          (data_dir / "grpo_test.jsonl").string() + " --out " +
                          temp_dir("vocab_out").string());
    REQUIRE(r.exit_code == 1);
    REQUIRE(r.output.find("vocabulary mismatch") != std::string::npos);
    REQUIRE(r.output.find("hash") != std::string::npos);
    REQUIRE_FALSE(fs::exists(temp_dir("vocab_out") / "report.json"));
}

TEST_CASE("cli: infer prints the template output and reward breakdown") {
    // Train nothing; a random-init checkpoint suffices for the contract.
    auto data_dir = temp_dir("infer_data");
    REQUIRE(run_cli("gen-data --out " + data_dir.string() +
                    " --seed 5 --sft-size 8 --grpo-size 6 --test-size 4 --mix number=1.0"
                    " --difficulty easy")
                .exit_code == 0);
    const std::string cfg = write_tiny_config("tiny_cfg2.json");
    auto run_dir = temp_dir("infer_run");
    REQUIRE(run_cli("sft --data " + (data_dir / "sft.jsonl").string() + " --config " + cfg +
                    " --out " + run_dir.string())
                .exit_code == 0);

    CmdResult r = run_cli("infer --ckpt " + (run_dir / "checkpoints" / "post_sft.grpl").string() +
                          " --ref \"0 red pin 2 red pin\" --qry \"0 red pin\" --label yes");
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.output.find("output:") != std::string::npos);
    REQUIRE(r.output.find("r_struct") != std::string::npos);
    REQUIRE(r.output.find("r_acc") != std::string::npos);

    CmdResult bad_scene = run_cli("infer --ckpt " +
                                  (run_dir / "checkpoints" / "post_sft.grpl").string() +
                                  " --ref \"0 red\" --qry \"0 red pin\"");
    REQUIRE(bad_scene.exit_code == 1);
}

TEST_CASE("cli: a lock file blocks concurrent writes to one run directory") {
    auto run_dir = temp_dir("locked");
    fs::create_directories(run_dir);
    {
        std::ofstream lock(run_dir / ".lock");
    }
    const std::string cfg = write_tiny_config("tiny_cfg3.json");
    CmdResult r = run_cli("sft --data /tmp/nonexistent.jsonl --config " + cfg + " --out " +
                          run_dir.string());
    REQUIRE(r.exit_code == 1);
    REQUIRE(r.output.find("lock") != std::string::npos);
}
