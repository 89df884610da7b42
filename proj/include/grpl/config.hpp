#pragma once

#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "grpl/policy.hpp"
#include "grpl/train.hpp"

namespace grpl {

// One flat key=value JSON object covering policy, reward, and train
// settings. Unknown keys are errors, not warnings; every effective value
// (defaults included) is echoed back out through config_to_json.
struct RunConfig {
    PolicyConfig policy;  // vocab_size 0 = derive from the dataset alphabet
    TrainConfig train;

    void validate() const {
        if (policy.vocab_size != 0) policy.validate();
        train.validate();
    }
};

inline ordered_json config_to_json(const RunConfig& c) {
    ordered_json j;
    j["vocab_size"] = c.policy.vocab_size;
    j["embed_dim"] = c.policy.embed_dim;
    j["hidden_dim"] = c.policy.hidden_dim;
    j["layers"] = c.policy.layers;
    j["context_len"] = c.policy.context_len;
    j["arch"] = to_string(c.policy.arch);

    j["lambda_struct"] = c.train.reward_cfg.lambda_struct;
    j["lambda_acc"] = c.train.reward_cfg.lambda_acc;
    j["beta"] = c.train.reward_cfg.beta;
    j["kl_mode"] = to_string(c.train.reward_cfg.kl_mode);

    j["group_size"] = c.train.group_size;
    j["clip_eps"] = c.train.clip_eps;
    j["lr"] = c.train.lr;
    j["grpo_lr"] = c.train.grpo_lr;
    j["batch_size"] = c.train.batch_size;
    j["sft_batch_size"] = c.train.sft_batch_size;
    j["grpo_steps"] = c.train.grpo_steps;
    j["sft_epochs"] = c.train.sft_epochs;
    j["advantage_norm"] = to_string(c.train.advantage_norm);
    j["seed"] = c.train.seed;
    j["old_policy_refresh"] = c.train.old_policy_refresh;
    j["checkpoint_every"] = c.train.checkpoint_every;
    j["temperature"] = c.train.temperature;
    j["max_gen_len"] = c.train.max_gen_len;
    j["mask_mode"] = c.train.mask_mode == MaskMode::hard ? "hard" : "off";
    return j;
}

inline RunConfig config_from_json(const ordered_json& j) {
    static const std::set<std::string> known = {
        "vocab_size", "embed_dim", "hidden_dim", "layers", "context_len", "arch",
        "lambda_struct", "lambda_acc", "beta", "kl_mode",
        "group_size", "clip_eps", "lr", "grpo_lr", "batch_size", "sft_batch_size", "grpo_steps",
        "sft_epochs", "advantage_norm", "seed", "old_policy_refresh", "checkpoint_every",
        "temperature", "max_gen_len", "mask_mode",
    };
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) throw ValidationError("unknown config key: \"" + key + "\"");
    }

    RunConfig c;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("vocab_size", c.policy.vocab_size);
    get("embed_dim", c.policy.embed_dim);
    get("hidden_dim", c.policy.hidden_dim);
    get("layers", c.policy.layers);
    get("context_len", c.policy.context_len);
    if (j.contains("arch")) c.policy.arch = arch_from_string(j.at("arch").get<std::string>());

    get("lambda_struct", c.train.reward_cfg.lambda_struct);
    get("lambda_acc", c.train.reward_cfg.lambda_acc);
    get("beta", c.train.reward_cfg.beta);
    if (j.contains("kl_mode")) {
        c.train.reward_cfg.kl_mode = kl_mode_from_string(j.at("kl_mode").get<std::string>());
    }

    get("group_size", c.train.group_size);
    get("clip_eps", c.train.clip_eps);
    get("lr", c.train.lr);
    get("grpo_lr", c.train.grpo_lr);
    get("batch_size", c.train.batch_size);
    get("sft_batch_size", c.train.sft_batch_size);
    get("grpo_steps", c.train.grpo_steps);
    get("sft_epochs", c.train.sft_epochs);
    if (j.contains("advantage_norm")) {
        c.train.advantage_norm = adv_norm_from_string(j.at("advantage_norm").get<std::string>());
    }
    get("seed", c.train.seed);
    get("old_policy_refresh", c.train.old_policy_refresh);
    get("checkpoint_every", c.train.checkpoint_every);
    get("temperature", c.train.temperature);
    get("max_gen_len", c.train.max_gen_len);
    if (j.contains("mask_mode")) {
        const std::string m = j.at("mask_mode").get<std::string>();
        if (m == "off") c.train.mask_mode = MaskMode::off;
        else if (m == "hard") c.train.mask_mode = MaskMode::hard;
        else throw ValidationError("unknown mask_mode: \"" + m + "\"");
    }
    c.validate();
    return c;
}

inline RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ValidationError(path + ": malformed config JSON (" + std::string(e.what()) + ")");
    }
    return config_from_json(j);
}

}  // namespace grpl
