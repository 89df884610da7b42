#pragma once

#include <cmath>
#include <span>
#include <string>

#include "grpl/common.hpp"
#include "grpl/textcodec.hpp"

namespace grpl {

// Where the sequence-level KL term acts: subtracted inside the composite
// reward, applied inside the surrogate objective instead, or disabled for
// A/B checks.
enum class KlMode { in_reward, in_objective, both_off_check };

inline const char* to_string(KlMode m) {
    switch (m) {
        case KlMode::in_reward: return "in_reward";
        case KlMode::in_objective: return "in_objective";
        case KlMode::both_off_check: return "both_off_check";
    }
    return "in_reward";
}

inline KlMode kl_mode_from_string(const std::string& s) {
    if (s == "in_reward") return KlMode::in_reward;
    if (s == "in_objective") return KlMode::in_objective;
    if (s == "both_off_check") return KlMode::both_off_check;
    throw ValidationError("unknown kl_mode: \"" + s + "\"");
}

struct RewardConfig {
    double lambda_struct = 0.5;
    double lambda_acc = 0.5;
    // Not reported by the reference setup; an engineering default.
    double beta = 0.04;
    KlMode kl_mode = KlMode::in_reward;

    void validate() const {
        if (lambda_struct < 0 || lambda_acc < 0 || beta < 0) {
            throw ValidationError("reward weights must be nonnegative");
        }
    }
};

struct RewardBreakdown {
    int r_struct = 0;  // {0,1}
    int r_acc = 0;     // {0,1}; r_acc = 1 implies r_struct = 1
    double r_kl = 0.0;
    double composite = 0.0;
};

// 1 iff the output parses as the full reasoning template. Shares the grammar
// with parse_response, so the two can never drift apart.
inline int structure_reward(std::span<const TokenId> output_ids, const Vocab& v) {
    return parse_response(output_ids, v).well_formed ? 1 : 0;
}

// 1 iff the parsed answer matches the ground-truth label; malformed outputs
// score 0, which makes r_acc = 1 imply r_struct = 1.
inline int accuracy_reward(std::span<const TokenId> output_ids, bool label, const Vocab& v) {
    ParsedResponse r = parse_response(output_ids, v);
    if (!r.well_formed) return 0;
    return r.answer == (label ? Answer::yes : Answer::no) ? 1 : 0;
}

// Sequence-level log-probability difference l_theta(o|q) - l_ref(o|q). A
// per-sample quantity that may be negative; its expectation under pi_theta
// is the KL divergence from the reference.
inline double kl_penalty(double logp_policy_total, double logp_ref_total) {
    if (!std::isfinite(logp_policy_total) || !std::isfinite(logp_ref_total)) {
        throw RuntimeFailure("kl_penalty: non-finite log-probability");
    }
    return logp_policy_total - logp_ref_total;
}

// Composite R(o) = lambda_struct*R_struct + lambda_acc*R_acc - beta*R_KL,
// with the KL term held out of the composite when it lives in the objective
// (or is switched off).
inline RewardBreakdown composite_reward(int r_struct, int r_acc, double r_kl,
                                        const RewardConfig& cfg) {
    if ((r_struct != 0 && r_struct != 1) || (r_acc != 0 && r_acc != 1)) {
        throw ValidationError("structure/accuracy rewards must be 0 or 1");
    }
    cfg.validate();
    RewardBreakdown b;
    b.r_struct = r_struct;
    b.r_acc = r_acc;
    b.r_kl = r_kl;
    b.composite = cfg.lambda_struct * r_struct + cfg.lambda_acc * r_acc;
    if (cfg.kl_mode == KlMode::in_reward) b.composite -= cfg.beta * r_kl;
    return b;
}

// Full breakdown for one sampled output against its ground-truth label.
inline RewardBreakdown score_output(std::span<const TokenId> output_ids, bool label,
                                    double logp_policy_total, double logp_ref_total,
                                    const Vocab& v, const RewardConfig& cfg) {
    const int rs = structure_reward(output_ids, v);
    const int ra = accuracy_reward(output_ids, label, v);
    const double rkl = kl_penalty(logp_policy_total, logp_ref_total);
    return composite_reward(rs, ra, rkl, cfg);
}

}  // namespace grpl
