#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "grpl/model.hpp"
#include "grpl/policy.hpp"
#include "grpl/rewards.hpp"
#include "grpl/scenes.hpp"

namespace grpl {

enum class AdvNorm { mean_std, mean_only };

inline const char* to_string(AdvNorm a) { return a == AdvNorm::mean_std ? "mean_std" : "mean_only"; }

inline AdvNorm adv_norm_from_string(const std::string& s) {
    if (s == "mean_std") return AdvNorm::mean_std;
    if (s == "mean_only") return AdvNorm::mean_only;
    throw ValidationError("unknown advantage_norm: \"" + s + "\"");
}

struct TrainConfig {
    int group_size = 8;      // G
    double clip_eps = 0.2;   // trust-region half-width
    double lr = 3e-4;        // desk-scale default; the reference setup used 1e-6 on a 3B model
    double grpo_lr = 0.0;    // 0 = reuse lr; the RL stage usually wants a smaller step
    int batch_size = 64;     // prompts per GRPO step
    int sft_batch_size = 16; // sequences per SFT minibatch
    int grpo_steps = 2000;   // desk-scale default; --paper-steps selects 50
    int sft_epochs = 3;
    AdvNorm advantage_norm = AdvNorm::mean_std;
    RewardConfig reward_cfg;
    uint64_t seed = 0;
    int old_policy_refresh = 1;  // steps between pi_old snapshots (1 = fully on-policy)
    int checkpoint_every = 500;
    double temperature = 1.0;
    int max_gen_len = 48;
    MaskMode mask_mode = MaskMode::off;

    void validate() const {
        if (group_size < 2) throw ValidationError("group_size must be >= 2");
        if (clip_eps <= 0.0 || clip_eps >= 1.0) throw ValidationError("clip_eps must be in (0,1)");
        if (lr <= 0.0) throw ValidationError("lr must be positive");
        if (grpo_lr < 0.0) throw ValidationError("grpo_lr must be >= 0 (0 = reuse lr)");
        if (batch_size < 1 || sft_batch_size < 1) throw ValidationError("batch sizes must be >= 1");
        if (grpo_steps < 0 || sft_epochs < 0) throw ValidationError("step counts must be >= 0");
        if (old_policy_refresh < 1) throw ValidationError("old_policy_refresh must be >= 1");
        if (checkpoint_every < 1) throw ValidationError("checkpoint_every must be >= 1");
        if (temperature < 0.0) throw ValidationError("temperature must be >= 0");
        if (max_gen_len < 1) throw ValidationError("max_gen_len must be >= 1");
        reward_cfg.validate();
    }

    double effective_grpo_lr() const { return grpo_lr > 0.0 ? grpo_lr : lr; }

    SampleSettings sample_settings() const {
        return SampleSettings{temperature, max_gen_len, mask_mode};
    }
};

// G trajectories for one prompt plus their rewards and group-normalized
// advantages.
struct GroupBatch {
    std::vector<TokenId> prompt_ids;
    std::vector<Trajectory> trajectories;
    std::vector<RewardBreakdown> rewards;
    std::vector<double> advantages;
};

struct MetricsRow {
    int64_t step = 0;
    double mean_composite = 0;
    double structure_rate = 0;
    double accuracy_rate = 0;
    double mean_kl = 0;
    double mean_abs_advantage = 0;
    double mean_response_len = 0;
    double loss = 0;
    double wall_ms = 0;
};

// Worker cap from GRPL_THREADS; defaults to 1 so runs are single-core unless
// asked otherwise. Results are identical at any setting: every parallel
// region writes to per-index slots and reduces in index order.
inline int worker_threads() {
    const char* env = std::getenv("GRPL_THREADS");
    if (!env) return 1;
    int n = std::atoi(env);
    return n < 1 ? 1 : n;
}

namespace detail {

template <class Fn>
inline void parallel_for(size_t count, Fn&& fn) {
    const int workers = std::min<int>(worker_threads(), static_cast<int>(count));
    if (workers <= 1) {
        for (size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<size_t> next{0};
    std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                errors[static_cast<size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Advantages (group-relative baseline)
// ---------------------------------------------------------------------------

// mean_only: A_i = r_i - mean(r). mean_std: A_i = (r_i - mean) / population
// std, with an all-zero result when the group is degenerate.
inline std::vector<double> compute_advantages(std::span<const double> composites, AdvNorm mode) {
    const size_t g = composites.size();
    if (g < 2) throw ValidationError("advantage groups need G >= 2");
    double mean = 0.0;
    for (double r : composites) mean += r;
    mean /= static_cast<double>(g);

    std::vector<double> adv(g);
    for (size_t i = 0; i < g; ++i) adv[i] = composites[i] - mean;
    if (mode == AdvNorm::mean_only) return adv;

    double var = 0.0;
    for (double a : adv) var += a * a;
    const double std_pop = std::sqrt(var / static_cast<double>(g));
    if (std_pop < 1e-8) {
        std::fill(adv.begin(), adv.end(), 0.0);
        return adv;
    }
    for (auto& a : adv) a /= std_pop;
    return adv;
}

// ---------------------------------------------------------------------------
// Rollouts
// ---------------------------------------------------------------------------

// G trajectories sampled from the old policy, scored under the current
// policy and the frozen reference. Rewards and advantages stay unfilled.
inline GroupBatch rollout_group(const PolicyParams& policy, const PolicyParams& old_policy,
                                const PolicyParams& ref_policy,
                                std::span<const TokenId> prompt_ids, const TrainConfig& cfg,
                                const Vocab& vocab, uint64_t rng_seed) {
    cfg.validate();
    GroupBatch batch;
    batch.prompt_ids.assign(prompt_ids.begin(), prompt_ids.end());
    batch.trajectories.resize(static_cast<size_t>(cfg.group_size));
    const SampleSettings settings = cfg.sample_settings();
    detail::parallel_for(static_cast<size_t>(cfg.group_size), [&](size_t i) {
        Rng rng(derive_seed(rng_seed, 0x9011, i));
        Trajectory t = sample_trajectory<float>(old_policy, prompt_ids, settings, vocab, rng);
        t.logp_policy = score_sequence<float>(policy, t.prompt_ids, t.output_ids);
        t.logp_ref = score_sequence<float>(ref_policy, t.prompt_ids, t.output_ids);
        batch.trajectories[i] = std::move(t);
    });
    return batch;
}

// Scores each trajectory against the label and normalizes advantages.
inline void fill_group_rewards(GroupBatch& batch, bool label, const Vocab& vocab,
                               const TrainConfig& cfg) {
    batch.rewards.clear();
    std::vector<double> composites;
    for (const auto& t : batch.trajectories) {
        RewardBreakdown b = score_output(t.output_ids, label, t.logp_policy.total,
                                         t.logp_ref.total, vocab, cfg.reward_cfg);
        composites.push_back(b.composite);
        batch.rewards.push_back(b);
    }
    batch.advantages = compute_advantages(composites, cfg.advantage_norm);
}

// ---------------------------------------------------------------------------
// Clipped surrogate loss
// ---------------------------------------------------------------------------
//
// Per token of trajectory i, with rho = exp(l_theta - l_old):
//   term = min(rho * A_i, clip(rho, 1-eps, 1+eps) * A_i)
// loss = -(1/B) sum_groups (1/G) sum_i (1/|o_i|) sum_t term, plus a
// beta-weighted per-token KL sample (l_theta - l_ref) when the config puts
// the KL term in the objective. Gradients flow only through l_theta; old and
// ref logps are detached constants stored in the trajectories.

namespace detail {

struct SurrogateCoeffs {
    double loss = 0.0;                  // contribution of one trajectory
    std::vector<double> upstream;       // dLoss/dl_theta per token
};

// `scale` is 1/(B*G). Branch selection follows the forward values; at ties
// the unclipped branch wins so gradients flow at the trust-region center.
inline SurrogateCoeffs surrogate_for_trajectory(std::span<const double> logp_theta,
                                                const Trajectory& traj, double advantage,
                                                double scale, const TrainConfig& cfg,
                                                size_t group_index, size_t traj_index) {
    const size_t len = traj.output_ids.size();
    if (logp_theta.size() != len || traj.logp_old.per_token.size() != len) {
        throw RuntimeFailure("surrogate: log-probability record length mismatch");
    }
    const double inv_len = 1.0 / static_cast<double>(len);
    const double eps = cfg.clip_eps;
    const bool kl_in_obj = cfg.reward_cfg.kl_mode == KlMode::in_objective;
    const double beta = cfg.reward_cfg.beta;

    SurrogateCoeffs out;
    out.upstream.assign(len, 0.0);
    for (size_t t = 0; t < len; ++t) {
        const double rho = std::exp(logp_theta[t] - traj.logp_old.per_token[t]);
        if (!std::isfinite(rho)) {
            throw RuntimeFailure("non-finite importance ratio at trajectory " +
                                 std::to_string(group_index) + ", token " + std::to_string(t) +
                                 " of trajectory " + std::to_string(traj_index));
        }
        const double unclipped = rho * advantage;
        const double clipped = std::clamp(rho, 1.0 - eps, 1.0 + eps) * advantage;
        const double term = std::min(unclipped, clipped);
        out.loss -= scale * inv_len * term;
        if (unclipped <= clipped) {
            out.upstream[t] -= scale * inv_len * rho * advantage;
        }
        if (kl_in_obj) {
            out.loss += scale * inv_len * beta * (logp_theta[t] - traj.logp_ref.per_token[t]);
            out.upstream[t] += scale * inv_len * beta;
        }
    }
    return out;
}

}  // namespace detail

// Loss value only, recomputing l_theta under `policy`; the 64-bit
// finite-difference probes go through this.
template <class Real>
inline double grpo_loss(const ModelParams<Real>& policy, std::span<const GroupBatch> groups,
                        const TrainConfig& cfg) {
    cfg.validate();
    if (groups.empty()) throw ValidationError("grpo_loss requires at least one group");
    const double scale =
        1.0 / (static_cast<double>(groups.size()) * static_cast<double>(cfg.group_size));
    double loss = 0.0;
    for (size_t b = 0; b < groups.size(); ++b) {
        const GroupBatch& g = groups[b];
        for (size_t i = 0; i < g.trajectories.size(); ++i) {
            const Trajectory& traj = g.trajectories[i];
            LogProbRecord rec = score_sequence<Real>(policy, traj.prompt_ids, traj.output_ids);
            loss += detail::surrogate_for_trajectory(rec.per_token, traj, g.advantages[i],
                                                     scale, cfg, b, i)
                        .loss;
        }
    }
    return loss;
}

template <class Real>
inline double grpo_loss_and_grad(const ModelParams<Real>& policy,
                                 std::span<const GroupBatch> groups, const TrainConfig& cfg,
                                 GradBuffer<Real>& grads) {
    cfg.validate();
    if (groups.empty()) throw ValidationError("grpo_loss_and_grad requires at least one group");
    for (const auto& g : groups) {
        if (g.trajectories.size() != static_cast<size_t>(cfg.group_size) ||
            g.advantages.size() != g.trajectories.size()) {
            throw ValidationError("grpo_loss_and_grad: group not fully populated");
        }
    }
    const double scale =
        1.0 / (static_cast<double>(groups.size()) * static_cast<double>(cfg.group_size));

    // Per-group gradient buffers keep the reduction order fixed under
    // parallel execution.
    std::vector<GradBuffer<Real>> partial(groups.size());
    std::vector<double> losses(groups.size(), 0.0);
    detail::parallel_for(groups.size(), [&](size_t b) {
        partial[b] = GradBuffer<Real>::like(policy);
        const GroupBatch& g = groups[b];
        TapedSeq<Real> seq(policy, partial[b]);
        for (size_t i = 0; i < g.trajectories.size(); ++i) {
            const Trajectory& traj = g.trajectories[i];
            auto picks = seq.run(traj.prompt_ids, traj.output_ids);
            std::vector<double> logp_theta;
            logp_theta.reserve(picks.size());
            for (auto pick : picks) {
                logp_theta.push_back(static_cast<double>(seq.tape().value(pick)[0]));
            }
            auto co = detail::surrogate_for_trajectory(logp_theta, traj, g.advantages[i],
                                                       scale, cfg, b, i);
            losses[b] += co.loss;
            for (size_t t = 0; t < picks.size(); ++t) {
                seq.tape().seed_grad(picks[t], static_cast<Real>(co.upstream[t]));
            }
            seq.tape().backward();
        }
    });
    double loss = 0.0;
    for (size_t b = 0; b < groups.size(); ++b) {
        loss += losses[b];
        grads.add(partial[b]);
    }
    return loss;
}

// ---------------------------------------------------------------------------
// SFT stage
// ---------------------------------------------------------------------------

struct SftMetrics {
    std::vector<double> epoch_mean_nll;  // one entry per epoch
};

inline SftExample sft_example_from_pair(const SamplePair& pair, const Vocab& vocab) {
    if (!pair.gold_trace) {
        throw ValidationError("sample " + pair.id + " carries no gold trace");
    }
    SftExample ex;
    ex.prompt_ids = pair_prompt_ids(pair, vocab);
    ex.target_ids = encode(*pair.gold_trace, vocab);
    ex.target_ids.push_back(kEos);
    return ex;
}

// Full shuffled-minibatch passes over the gold traces. Rejects the dataset
// up front if any trace fails to parse.
inline SftMetrics sft_train(PolicyParams& params, const std::vector<SamplePair>& dataset,
                            const Vocab& vocab, const TrainConfig& cfg,
                            AdamState* opt_state = nullptr) {
    cfg.validate();
    if (dataset.empty()) throw ValidationError("sft_train requires a nonempty dataset");
    std::vector<SftExample> examples;
    examples.reserve(dataset.size());
    for (const auto& pair : dataset) {
        SftExample ex = sft_example_from_pair(pair, vocab);
        if (!parse_response(encode(*pair.gold_trace, vocab), vocab).well_formed) {
            throw ValidationError("malformed gold trace in sample " + pair.id);
        }
        examples.push_back(std::move(ex));
    }

    AdamState local = AdamState::like(params);
    AdamState& opt = opt_state ? *opt_state : local;
    GradBuffer<float> grads = GradBuffer<float>::like(params);

    SftMetrics metrics;
    std::vector<size_t> order(examples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int epoch = 0; epoch < cfg.sft_epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, 0x5f7, static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        double epoch_nll = 0.0;
        size_t epoch_tokens = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.sft_batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.sft_batch_size));
            std::vector<SftExample> batch;
            size_t batch_tokens = 0;
            for (size_t k = start; k < end; ++k) {
                batch.push_back(examples[order[k]]);
                batch_tokens += batch.back().target_ids.size();
            }
            grads.zero();
            const double loss = nll_loss_and_grad<float>(params, batch, grads);
            adam_step(params, grads, opt, cfg.lr);
            epoch_nll += loss * static_cast<double>(batch_tokens);
            epoch_tokens += batch_tokens;
        }
        metrics.epoch_mean_nll.push_back(epoch_nll / static_cast<double>(epoch_tokens));
    }
    return metrics;
}

// ---------------------------------------------------------------------------
// GRPO stage
// ---------------------------------------------------------------------------

// Writes a checkpoint when invoked and returns its path (used for the
// last-good pointer in blowup reports).
using CheckpointHook = std::function<std::string(int64_t step, const PolicyParams& params,
                                                 const AdamState& opt)>;

struct GrpoResult {
    std::vector<MetricsRow> metrics;
};

inline GrpoResult grpo_train(PolicyParams& policy, const PolicyParams& ref_policy,
                             const std::vector<SamplePair>& dataset, const Vocab& vocab,
                             const TrainConfig& cfg, const CheckpointHook& checkpoint_hook = {},
                             AdamState* opt_state = nullptr, int64_t start_step = 0) {
    cfg.validate();
    if (dataset.empty()) throw ValidationError("grpo_train requires a nonempty dataset");
    if (ref_policy.role != "reference") {
        throw ValidationError("grpo_train expects the frozen snapshot to carry role "
                              "\"reference\", got \"" + ref_policy.role + "\"");
    }

    AdamState local = AdamState::like(policy);
    AdamState& opt = opt_state ? *opt_state : local;
    GradBuffer<float> grads = GradBuffer<float>::like(policy);
    PolicyParams old_policy = snapshot(policy, "old");

    GrpoResult result;
    std::string last_checkpoint = "<none>";
    using clock = std::chrono::steady_clock;
    for (int64_t step = start_step; step < cfg.grpo_steps; ++step) {
        const auto t0 = clock::now();
        if ((step - start_step) % cfg.old_policy_refresh == 0) {
            old_policy = snapshot(policy, "old");
        }

        // Prompt minibatch for this step.
        Rng prompt_rng(derive_seed(cfg.seed, 0x6e0, static_cast<uint64_t>(step)));
        std::vector<size_t> picks(static_cast<size_t>(cfg.batch_size));
        for (auto& idx : picks) idx = prompt_rng.below(dataset.size());

        std::vector<GroupBatch> groups(picks.size());
        detail::parallel_for(picks.size(), [&](size_t b) {
            const SamplePair& pair = dataset[picks[b]];
            const uint64_t group_seed =
                derive_seed(cfg.seed ^ 0x9e3779b9u, static_cast<uint64_t>(step), b);
            GroupBatch g = rollout_group(policy, old_policy, ref_policy,
                                         pair_prompt_ids(pair, vocab), cfg, vocab, group_seed);
            fill_group_rewards(g, pair.label, vocab, cfg);
            groups[b] = std::move(g);
        });

        grads.zero();
        double loss = 0.0;
        try {
            loss = grpo_loss_and_grad<float>(policy, groups, cfg, grads);
            adam_step(policy, grads, opt, cfg.effective_grpo_lr());
        } catch (const RuntimeFailure& e) {
            throw RuntimeFailure(std::string(e.what()) +
                                 "; last good checkpoint: " + last_checkpoint);
        }

        MetricsRow row;
        row.step = step;
        size_t count = 0;
        for (const auto& g : groups) {
            for (size_t i = 0; i < g.trajectories.size(); ++i) {
                row.mean_composite += g.rewards[i].composite;
                row.structure_rate += g.rewards[i].r_struct;
                row.accuracy_rate += g.rewards[i].r_acc;
                row.mean_kl += g.rewards[i].r_kl;
                row.mean_abs_advantage += std::abs(g.advantages[i]);
                row.mean_response_len += static_cast<double>(g.trajectories[i].output_ids.size());
                ++count;
            }
        }
        const double inv = 1.0 / static_cast<double>(count);
        row.mean_composite *= inv;
        row.structure_rate *= inv;
        row.accuracy_rate *= inv;
        row.mean_kl *= inv;
        row.mean_abs_advantage *= inv;
        row.mean_response_len *= inv;
        row.loss = loss;
        row.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        result.metrics.push_back(row);

        if (checkpoint_hook &&
            ((step + 1) % cfg.checkpoint_every == 0 || step + 1 == cfg.grpo_steps)) {
            last_checkpoint = checkpoint_hook(step + 1, policy, opt);
        }
    }
    return result;
}

}  // namespace grpl
