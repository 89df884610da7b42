#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "grpl/policy.hpp"
#include "grpl/rng.hpp"
#include "grpl/tape.hpp"
#include "grpl/textcodec.hpp"

namespace grpl {

// Eq.-style log-probability accounting for one sequence: per-token
// log pi(a_t | q, a_<t) and their sum.
struct LogProbRecord {
    std::vector<double> per_token;
    double total = 0.0;
};

enum class TerminationReason { eos, max_len };

struct Trajectory {
    std::vector<TokenId> prompt_ids;
    std::vector<TokenId> output_ids;
    LogProbRecord logp_policy;  // pi_theta, filled by the caller
    LogProbRecord logp_old;     // sampling-time snapshot, recorded here
    LogProbRecord logp_ref;     // frozen reference, filled by the caller
    TerminationReason terminated = TerminationReason::max_len;
};

namespace detail {

template <class Real>
inline void matvec_plain(const std::vector<Real>& w, int rows, int cols,
                         const Real* x, Real* out) {
    for (int r = 0; r < rows; ++r) {
        const Real* wr = w.data() + static_cast<size_t>(r) * cols;
        Real acc = 0;
        for (int c = 0; c < cols; ++c) acc += wr[c] * x[c];
        out[r] = acc;
    }
}

// Must mirror Tape::logsoftmax_pick so that sampled logps and
// score_sequence agree exactly.
template <class Real>
inline Real log_softmax_pick_plain(std::span<const Real> logits, int index) {
    Real m = logits[0];
    for (size_t i = 1; i < logits.size(); ++i) m = std::max(m, logits[i]);
    Real sum = 0;
    for (size_t i = 0; i < logits.size(); ++i) sum += std::exp(logits[i] - m);
    return logits[index] - m - std::log(sum);
}

// Parameter indices resolved once; the forward paths index arrays directly.
struct GruLayerIdx {
    int wzx, wzh, bz, wrx, wrh, br, wnx, wnh, bn;
};
struct TfLayerIdx {
    int norm1, wq, wk, wv, wo, norm2, w1, b1, w2, b2;
};

template <class Real>
struct ArchIdx {
    std::vector<GruLayerIdx> gru;
    std::vector<TfLayerIdx> tf;
    int pos = -1, normf = -1, head_w = -1, head_b = -1;

    explicit ArchIdx(const ModelParams<Real>& p) {
        const auto& cfg = p.config;
        if (cfg.arch == Arch::gru_like) {
            for (int l = 0; l < cfg.layers; ++l) {
                const int b = 1 + 9 * l;
                gru.push_back({b, b + 1, b + 2, b + 3, b + 4, b + 5, b + 6, b + 7, b + 8});
            }
        } else {
            pos = p.index_of("pos");
            for (int l = 0; l < cfg.layers; ++l) {
                const std::string pre = "blk" + std::to_string(l) + ".";
                tf.push_back({p.index_of(pre + "norm1.g"), p.index_of(pre + "wq"),
                              p.index_of(pre + "wk"), p.index_of(pre + "wv"),
                              p.index_of(pre + "wo"), p.index_of(pre + "norm2.g"),
                              p.index_of(pre + "mlp.w1"), p.index_of(pre + "mlp.b1"),
                              p.index_of(pre + "mlp.w2"), p.index_of(pre + "mlp.b2")});
            }
            normf = p.index_of("normf.g");
        }
        head_w = p.index_of("head.w");
        head_b = p.index_of("head.b");
    }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Fast (untaped) incremental forward
// ---------------------------------------------------------------------------

template <class Real>
class SeqScan {
public:
    explicit SeqScan(const ModelParams<Real>& p) : p_(&p), idx_(p) { reset(); }

    void reset() {
        const auto& cfg = p_->config;
        pos_ = 0;
        if (cfg.arch == Arch::gru_like) {
            h_.assign(static_cast<size_t>(cfg.layers),
                      std::vector<Real>(static_cast<size_t>(cfg.hidden_dim), Real(0)));
        } else {
            kcache_.assign(static_cast<size_t>(cfg.layers), {});
            vcache_.assign(static_cast<size_t>(cfg.layers), {});
            x_.assign(static_cast<size_t>(cfg.embed_dim), Real(0));
        }
    }

    int position() const { return pos_; }

    void feed(TokenId tok) {
        const auto& cfg = p_->config;
        if (pos_ >= cfg.context_len) {
            throw RuntimeFailure("context overflow: sequence exceeds context_len " +
                                 std::to_string(cfg.context_len));
        }
        if (tok < 0 || tok >= cfg.vocab_size) {
            throw RuntimeFailure("token id out of vocabulary: " + std::to_string(tok));
        }
        if (cfg.arch == Arch::gru_like) feed_gru(tok);
        else feed_tf(tok);
        ++pos_;
    }

    // Next-token logits at the current state.
    void logits(std::vector<Real>& out) {
        const auto& cfg = p_->config;
        out.resize(static_cast<size_t>(cfg.vocab_size));
        const auto& head_w = p_->arrays[static_cast<size_t>(idx_.head_w)];
        const auto& head_b = p_->arrays[static_cast<size_t>(idx_.head_b)];
        const Real* src;
        int width;
        if (cfg.arch == Arch::gru_like) {
            src = h_.back().data();
            width = cfg.hidden_dim;
        } else {
            norm_buf_.resize(x_.size());
            rmsnorm_plain(x_.data(), p_->arrays[static_cast<size_t>(idx_.normf)],
                          norm_buf_.data(), static_cast<int>(x_.size()));
            src = norm_buf_.data();
            width = cfg.embed_dim;
        }
        detail::matvec_plain(head_w, cfg.vocab_size, width, src, out.data());
        for (int i = 0; i < cfg.vocab_size; ++i) out[static_cast<size_t>(i)] += head_b[static_cast<size_t>(i)];
    }

private:
    static void rmsnorm_plain(const Real* x, const std::vector<Real>& gain, Real* out, int n) {
        Real ms = 0;
        for (int i = 0; i < n; ++i) ms += x[i] * x[i];
        const Real r = std::sqrt(ms / Real(n) + Real(1e-8));
        for (int i = 0; i < n; ++i) out[i] = x[i] / r * gain[static_cast<size_t>(i)];
    }

    const std::vector<Real>& arr(int i) const { return p_->arrays[static_cast<size_t>(i)]; }

    void feed_gru(TokenId tok) {
        const auto& cfg = p_->config;
        const int E = cfg.embed_dim, H = cfg.hidden_dim;
        const auto& embed = arr(0);
        xbuf_.assign(embed.begin() + static_cast<size_t>(tok) * E,
                     embed.begin() + (static_cast<size_t>(tok) + 1) * E);
        wa_.resize(static_cast<size_t>(H));
        wb_.resize(static_cast<size_t>(H));
        wz_.resize(static_cast<size_t>(H));
        wr_.resize(static_cast<size_t>(H));
        for (int l = 0; l < cfg.layers; ++l) {
            const int in = l == 0 ? E : H;
            const auto& g = idx_.gru[static_cast<size_t>(l)];
            auto& h = h_[static_cast<size_t>(l)];

            detail::matvec_plain(arr(g.wzx), H, in, xbuf_.data(), wa_.data());
            detail::matvec_plain(arr(g.wzh), H, H, h.data(), wb_.data());
            const auto& bz = arr(g.bz);
            for (int i = 0; i < H; ++i) {
                wz_[static_cast<size_t>(i)] = Real(1) /
                    (Real(1) + std::exp(-((wa_[static_cast<size_t>(i)] +
                                           wb_[static_cast<size_t>(i)]) +
                                          bz[static_cast<size_t>(i)])));
            }
            detail::matvec_plain(arr(g.wrx), H, in, xbuf_.data(), wa_.data());
            detail::matvec_plain(arr(g.wrh), H, H, h.data(), wb_.data());
            const auto& br = arr(g.br);
            for (int i = 0; i < H; ++i) {
                wr_[static_cast<size_t>(i)] = Real(1) /
                    (Real(1) + std::exp(-((wa_[static_cast<size_t>(i)] +
                                           wb_[static_cast<size_t>(i)]) +
                                          br[static_cast<size_t>(i)])));
            }
            detail::matvec_plain(arr(g.wnx), H, in, xbuf_.data(), wa_.data());
            detail::matvec_plain(arr(g.wnh), H, H, h.data(), wb_.data());
            const auto& bn = arr(g.bn);
            for (int i = 0; i < H; ++i) {
                const Real n = std::tanh((wa_[static_cast<size_t>(i)] +
                                          wr_[static_cast<size_t>(i)] *
                                              wb_[static_cast<size_t>(i)]) +
                                         bn[static_cast<size_t>(i)]);
                h[static_cast<size_t>(i)] =
                    (Real(1) - wz_[static_cast<size_t>(i)]) * h[static_cast<size_t>(i)] +
                    wz_[static_cast<size_t>(i)] * n;
            }
            xbuf_ = h;
        }
    }

    void feed_tf(TokenId tok) {
        const auto& cfg = p_->config;
        const int E = cfg.embed_dim, H = cfg.hidden_dim;
        const Real inv_sqrt_e = Real(1.0 / std::sqrt(static_cast<double>(E)));
        const auto& embed = arr(0);
        const auto& posemb = arr(idx_.pos);
        std::vector<Real>& x = x_;
        for (int i = 0; i < E; ++i) {
            x[static_cast<size_t>(i)] = embed[static_cast<size_t>(tok) * E + i] +
                                        posemb[static_cast<size_t>(pos_) * E + i];
        }
        norm_buf_.resize(static_cast<size_t>(E));
        wa_.resize(static_cast<size_t>(std::max(E, H)));
        wb_.resize(static_cast<size_t>(std::max(E, H)));
        for (int l = 0; l < cfg.layers; ++l) {
            const auto& t = idx_.tf[static_cast<size_t>(l)];
            rmsnorm_plain(x.data(), arr(t.norm1), norm_buf_.data(), E);
            std::vector<Real> q(static_cast<size_t>(E)), k(static_cast<size_t>(E)),
                v(static_cast<size_t>(E));
            detail::matvec_plain(arr(t.wq), E, E, norm_buf_.data(), q.data());
            detail::matvec_plain(arr(t.wk), E, E, norm_buf_.data(), k.data());
            detail::matvec_plain(arr(t.wv), E, E, norm_buf_.data(), v.data());
            kcache_[static_cast<size_t>(l)].push_back(std::move(k));
            vcache_[static_cast<size_t>(l)].push_back(std::move(v));

            const auto& ks = kcache_[static_cast<size_t>(l)];
            const auto& vs = vcache_[static_cast<size_t>(l)];
            std::vector<Real> scores(ks.size());
            for (size_t j = 0; j < ks.size(); ++j) {
                Real acc = 0;
                for (int i = 0; i < E; ++i) {
                    acc += q[static_cast<size_t>(i)] * ks[j][static_cast<size_t>(i)];
                }
                scores[j] = acc;
            }
            for (auto& s : scores) s *= inv_sqrt_e;
            Real m = scores[0];
            for (size_t j = 1; j < scores.size(); ++j) m = std::max(m, scores[j]);
            Real sum = 0;
            for (auto& s : scores) {
                s = std::exp(s - m);
                sum += s;
            }
            for (auto& s : scores) s /= sum;

            std::fill(wa_.begin(), wa_.begin() + E, Real(0));
            for (size_t j = 0; j < vs.size(); ++j) {
                for (int i = 0; i < E; ++i) {
                    wa_[static_cast<size_t>(i)] += scores[j] * vs[j][static_cast<size_t>(i)];
                }
            }
            wb_.resize(static_cast<size_t>(E));
            detail::matvec_plain(arr(t.wo), E, E, wa_.data(), wb_.data());
            for (int i = 0; i < E; ++i) x[static_cast<size_t>(i)] += wb_[static_cast<size_t>(i)];

            rmsnorm_plain(x.data(), arr(t.norm2), norm_buf_.data(), E);
            wa_.resize(static_cast<size_t>(H));
            detail::matvec_plain(arr(t.w1), H, E, norm_buf_.data(), wa_.data());
            const auto& b1 = arr(t.b1);
            for (int i = 0; i < H; ++i) {
                wa_[static_cast<size_t>(i)] += b1[static_cast<size_t>(i)];
                if (wa_[static_cast<size_t>(i)] < Real(0)) wa_[static_cast<size_t>(i)] = Real(0);
            }
            wb_.resize(static_cast<size_t>(E));
            detail::matvec_plain(arr(t.w2), E, H, wa_.data(), wb_.data());
            const auto& b2 = arr(t.b2);
            for (int i = 0; i < E; ++i) {
                x[static_cast<size_t>(i)] += wb_[static_cast<size_t>(i)] + b2[static_cast<size_t>(i)];
            }
        }
    }

    const ModelParams<Real>* p_;
    detail::ArchIdx<Real> idx_;
    int pos_ = 0;
    std::vector<std::vector<Real>> h_;                    // gru hidden per layer
    std::vector<std::vector<std::vector<Real>>> kcache_;  // transformer caches
    std::vector<std::vector<std::vector<Real>>> vcache_;
    std::vector<Real> x_;
    std::vector<Real> xbuf_, wa_, wb_, wz_, wr_, norm_buf_;
};

// pi(a | q, a_<t) as raw logits; log-softmax of these is the per-token
// log-probability.
template <class Real>
inline std::vector<Real> next_token_logits(const ModelParams<Real>& params,
                                           std::span<const TokenId> prefix) {
    if (static_cast<int>(prefix.size()) >= params.config.context_len) {
        throw RuntimeFailure("prefix overflows context_len");
    }
    SeqScan<Real> scan(params);
    for (TokenId t : prefix) scan.feed(t);
    std::vector<Real> out;
    scan.logits(out);
    return out;
}

// ---------------------------------------------------------------------------
// Sequence scoring and sampling
// ---------------------------------------------------------------------------

template <class Real>
inline LogProbRecord score_sequence(const ModelParams<Real>& params,
                                    std::span<const TokenId> prompt_ids,
                                    std::span<const TokenId> output_ids) {
    if (output_ids.empty()) throw ValidationError("score_sequence requires a nonempty output");
    if (static_cast<int>(prompt_ids.size() + output_ids.size()) > params.config.context_len) {
        throw RuntimeFailure("sequence overflows context_len");
    }
    SeqScan<Real> scan(params);
    for (TokenId t : prompt_ids) scan.feed(t);
    LogProbRecord rec;
    std::vector<Real> logits;
    for (size_t t = 0; t < output_ids.size(); ++t) {
        scan.logits(logits);
        const double lp = static_cast<double>(
            detail::log_softmax_pick_plain<Real>(logits, output_ids[t]));
        rec.per_token.push_back(lp);
        rec.total += lp;
        if (t + 1 < output_ids.size()) scan.feed(output_ids[t]);
    }
    return rec;
}

struct SampleSettings {
    double temperature = 1.0;  // 0 selects argmax decoding
    int max_len = 48;
    MaskMode mask_mode = MaskMode::off;
};

// Samples one output from `params` given the prompt, recording the unmasked
// temperature-1 log-probabilities of the chosen tokens as logp_old (these
// are what score_sequence reproduces on the same params). logp_policy and
// logp_ref are left for the caller to fill against the respective snapshots.
template <class Real>
inline Trajectory sample_trajectory(const ModelParams<Real>& params,
                                    std::span<const TokenId> prompt_ids,
                                    const SampleSettings& settings, const Vocab& vocab,
                                    Rng& rng) {
    if (settings.temperature < 0.0) throw ValidationError("temperature must be >= 0");
    if (settings.max_len < 1) throw ValidationError("max_len must be >= 1");
    const int room = params.config.context_len - static_cast<int>(prompt_ids.size());
    if (room < 1) throw RuntimeFailure("prompt leaves no room for generation");
    const int max_len = std::min(settings.max_len, room);

    Trajectory traj;
    traj.prompt_ids.assign(prompt_ids.begin(), prompt_ids.end());
    SeqScan<Real> scan(params);
    for (TokenId t : prompt_ids) scan.feed(t);

    std::vector<Real> logits;
    std::vector<double> weights(static_cast<size_t>(params.config.vocab_size));
    traj.terminated = TerminationReason::max_len;
    for (int step = 0; step < max_len; ++step) {
        scan.logits(logits);
        std::vector<bool> mask = constraint_mask(traj.output_ids, vocab, settings.mask_mode);
        TokenId chosen = -1;
        if (settings.temperature == 0.0) {
            for (size_t i = 0; i < logits.size(); ++i) {
                if (!mask[i]) continue;
                if (chosen < 0 || logits[i] > logits[static_cast<size_t>(chosen)]) {
                    chosen = static_cast<TokenId>(i);
                }
            }
        } else {
            Real m = 0;
            bool any = false;
            for (size_t i = 0; i < logits.size(); ++i) {
                if (mask[i] && (!any || logits[i] > m)) {
                    m = logits[i];
                    any = true;
                }
            }
            if (any) {
                for (size_t i = 0; i < logits.size(); ++i) {
                    weights[i] = mask[i] ? std::exp(static_cast<double>(logits[i] - m) /
                                                    settings.temperature)
                                         : 0.0;
                }
                chosen = static_cast<TokenId>(rng.categorical(weights));
            }
        }
        if (chosen < 0) {
            throw ValidationError("dead prefix: the constraint mask allows no token");
        }
        const double lp = static_cast<double>(
            detail::log_softmax_pick_plain<Real>(logits, chosen));
        traj.output_ids.push_back(chosen);
        traj.logp_old.per_token.push_back(lp);
        traj.logp_old.total += lp;
        if (chosen == kEos) {
            traj.terminated = TerminationReason::eos;
            break;
        }
        if (step + 1 < max_len) scan.feed(chosen);
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Taped teacher-forced pass
// ---------------------------------------------------------------------------

template <class Real>
class TapedSeq {
public:
    TapedSeq(const ModelParams<Real>& p, GradBuffer<Real>& grads) : p_(&p), idx_(p) {
        auto shapes = param_shapes(p.config);
        for (size_t i = 0; i < p.arrays.size(); ++i) {
            tape_.add_param(p.arrays[i].data(), grads.arrays[i].data(), shapes[i].rows,
                            shapes[i].cols);
        }
    }

    Tape<Real>& tape() { return tape_; }

    // Rebuilds the graph for prompt+output and returns one scalar logprob
    // node per output token.
    std::vector<typename Tape<Real>::NodeId> run(std::span<const TokenId> prompt_ids,
                                                 std::span<const TokenId> output_ids) {
        if (output_ids.empty()) throw ValidationError("taped pass requires a nonempty output");
        if (static_cast<int>(prompt_ids.size() + output_ids.size()) > p_->config.context_len) {
            throw RuntimeFailure("sequence overflows context_len");
        }
        tape_.reset();
        reset_state();
        for (TokenId t : prompt_ids) feed(t);
        std::vector<typename Tape<Real>::NodeId> picks;
        for (size_t t = 0; t < output_ids.size(); ++t) {
            picks.push_back(tape_.logsoftmax_pick(logits_node(), output_ids[t]));
            if (t + 1 < output_ids.size()) feed(output_ids[t]);
        }
        return picks;
    }

private:
    using NodeId = typename Tape<Real>::NodeId;

    void reset_state() {
        const auto& cfg = p_->config;
        pos_ = 0;
        if (cfg.arch == Arch::gru_like) {
            h_.clear();
            for (int l = 0; l < cfg.layers; ++l) h_.push_back(tape_.zeros(cfg.hidden_dim));
        } else {
            kcache_.assign(static_cast<size_t>(cfg.layers), {});
            vcache_.assign(static_cast<size_t>(cfg.layers), {});
            x_ = tape_.zeros(cfg.embed_dim);
        }
    }

    void feed(TokenId tok) {
        const auto& cfg = p_->config;
        if (cfg.arch == Arch::gru_like) {
            NodeId x = tape_.embed(0, tok);
            for (int l = 0; l < cfg.layers; ++l) {
                const auto& g = idx_.gru[static_cast<size_t>(l)];
                NodeId h = h_[static_cast<size_t>(l)];
                NodeId z = tape_.sigmoid(tape_.add_bias(
                    tape_.add(tape_.matvec(g.wzx, x), tape_.matvec(g.wzh, h)), g.bz));
                NodeId r = tape_.sigmoid(tape_.add_bias(
                    tape_.add(tape_.matvec(g.wrx, x), tape_.matvec(g.wrh, h)), g.br));
                NodeId n = tape_.tanh_(tape_.add_bias(
                    tape_.add(tape_.matvec(g.wnx, x), tape_.mul(r, tape_.matvec(g.wnh, h))),
                    g.bn));
                NodeId hnew = tape_.lerp(z, h, n);
                h_[static_cast<size_t>(l)] = hnew;
                x = hnew;
            }
        } else {
            const int E = cfg.embed_dim;
            const Real inv_sqrt_e = Real(1.0 / std::sqrt(static_cast<double>(E)));
            NodeId x = tape_.add(tape_.embed(0, tok), tape_.embed(idx_.pos, pos_));
            for (int l = 0; l < cfg.layers; ++l) {
                const auto& t = idx_.tf[static_cast<size_t>(l)];
                NodeId xn = tape_.rmsnorm(x, t.norm1);
                NodeId q = tape_.matvec(t.wq, xn);
                kcache_[static_cast<size_t>(l)].push_back(tape_.matvec(t.wk, xn));
                vcache_[static_cast<size_t>(l)].push_back(tape_.matvec(t.wv, xn));
                const auto& ks = kcache_[static_cast<size_t>(l)];
                std::vector<NodeId> scores;
                scores.reserve(ks.size());
                for (NodeId k : ks) scores.push_back(tape_.dot(q, k));
                NodeId alpha = tape_.softmax(
                    tape_.scale(tape_.stack(std::span<const NodeId>(scores)), inv_sqrt_e));
                NodeId attn =
                    tape_.wsum(alpha, std::span<const NodeId>(vcache_[static_cast<size_t>(l)]));
                x = tape_.add(x, tape_.matvec(t.wo, attn));
                NodeId xn2 = tape_.rmsnorm(x, t.norm2);
                NodeId m = tape_.relu(tape_.add_bias(tape_.matvec(t.w1, xn2), t.b1));
                x = tape_.add(x, tape_.add_bias(tape_.matvec(t.w2, m), t.b2));
            }
            x_ = x;
        }
        ++pos_;
    }

    NodeId logits_node() {
        if (p_->config.arch == Arch::gru_like) {
            return tape_.add_bias(tape_.matvec(idx_.head_w, h_.back()), idx_.head_b);
        }
        NodeId fh = tape_.rmsnorm(x_, idx_.normf);
        return tape_.add_bias(tape_.matvec(idx_.head_w, fh), idx_.head_b);
    }

    const ModelParams<Real>* p_;
    detail::ArchIdx<Real> idx_;
    Tape<Real> tape_;
    int pos_ = 0;
    std::vector<NodeId> h_;
    std::vector<std::vector<NodeId>> kcache_, vcache_;
    NodeId x_ = -1;
};

// Adds sum_t upstream[t] * d logp_t / d params into `grads` and returns the
// per-token logps of the pass. The caller owns zeroing of `grads`.
template <class Real>
inline std::vector<double> weighted_logprob_grad(const ModelParams<Real>& params,
                                                 std::span<const TokenId> prompt_ids,
                                                 std::span<const TokenId> output_ids,
                                                 std::span<const double> upstream,
                                                 GradBuffer<Real>& grads) {
    if (upstream.size() != output_ids.size()) {
        throw RuntimeFailure("weighted_logprob_grad: weight/output length mismatch");
    }
    TapedSeq<Real> seq(params, grads);
    auto picks = seq.run(prompt_ids, output_ids);
    std::vector<double> logps;
    logps.reserve(picks.size());
    for (size_t t = 0; t < picks.size(); ++t) {
        logps.push_back(static_cast<double>(seq.tape().value(picks[t])[0]));
        seq.tape().seed_grad(picks[t], static_cast<Real>(upstream[t]));
    }
    seq.tape().backward();
    return logps;
}

// ---------------------------------------------------------------------------
// SFT next-token cross-entropy
// ---------------------------------------------------------------------------

struct SftExample {
    std::vector<TokenId> prompt_ids;
    std::vector<TokenId> target_ids;
};

// Mean NLL per target token across the batch.
template <class Real>
inline double nll_loss(const ModelParams<Real>& params, std::span<const SftExample> batch) {
    if (batch.empty()) throw ValidationError("nll_loss requires a nonempty batch");
    double total = 0.0;
    size_t tokens = 0;
    for (const auto& ex : batch) {
        LogProbRecord rec = score_sequence(params, ex.prompt_ids, ex.target_ids);
        total -= rec.total;
        tokens += ex.target_ids.size();
    }
    return total / static_cast<double>(tokens);
}

template <class Real>
inline double nll_loss_and_grad(const ModelParams<Real>& params,
                                std::span<const SftExample> batch, GradBuffer<Real>& grads) {
    if (batch.empty()) throw ValidationError("nll_loss_and_grad requires a nonempty batch");
    size_t tokens = 0;
    for (const auto& ex : batch) tokens += ex.target_ids.size();
    const double w = -1.0 / static_cast<double>(tokens);

    double total = 0.0;
    TapedSeq<Real> seq(params, grads);
    for (const auto& ex : batch) {
        auto picks = seq.run(ex.prompt_ids, ex.target_ids);
        for (auto pick : picks) {
            total -= static_cast<double>(seq.tape().value(pick)[0]);
            seq.tape().seed_grad(pick, static_cast<Real>(w));
        }
        seq.tape().backward();
    }
    return total / static_cast<double>(tokens);
}

}  // namespace grpl
