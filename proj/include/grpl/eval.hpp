#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "grpl/train.hpp"

namespace grpl {

struct DecodeConfig {
    bool argmax = true;        // default evaluation decode
    double temperature = 1.0;  // used when argmax = false
    int max_len = 48;
    MaskMode mask_mode = MaskMode::off;
};

struct Prediction {
    std::string sample_id;
    Answer predicted = Answer::malformed;  // malformed predictions are retained
    bool label = false;
    Category category = Category::number;
    std::vector<TokenId> response_ids;
    int response_len = 0;
};

inline Prediction predict(const PolicyParams& params, const SamplePair& pair, const Vocab& vocab,
                          const DecodeConfig& decode = {}, uint64_t rng_seed = 0) {
    SampleSettings settings;
    settings.temperature = decode.argmax ? 0.0 : decode.temperature;
    settings.max_len = decode.max_len;
    settings.mask_mode = decode.mask_mode;
    Rng rng(derive_seed(rng_seed, 0xe7a1));
    Trajectory traj =
        sample_trajectory<float>(params, pair_prompt_ids(pair, vocab), settings, vocab, rng);

    Prediction p;
    p.sample_id = pair.id;
    p.label = pair.label;
    p.category = pair.category;
    p.response_ids = traj.output_ids;
    p.response_len = static_cast<int>(traj.output_ids.size());
    p.predicted = parse_response(traj.output_ids, vocab).answer;
    return p;
}

// ---------------------------------------------------------------------------
// Accuracy and F1
// ---------------------------------------------------------------------------
//
// The positive class is "anomalous" (label true / answer yes) by default.
// Malformed outputs count as wrong for accuracy and as non-positive
// predictions for the confusion matrix: they never enter TP/FP/FN/TN, so
// TP+FP+FN+TN+malformed = |preds|, and recall charges malformed positives
// against the positive support.

struct Confusion {
    long tp = 0, fp = 0, fn = 0, tn = 0;
    long malformed = 0;
    long malformed_positive = 0;

    long total() const { return tp + fp + fn + tn + malformed; }

    double accuracy() const {
        const long n = total();
        return n == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(n);
    }

    double precision() const {
        return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    }

    double recall() const {
        const long pos = tp + fn + malformed_positive;
        return pos == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(pos);
    }

    // 2PR/(P+R), defined as 0 when P+R = 0.
    double f1() const {
        const double p = precision(), r = recall();
        return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
    }
};

inline Confusion confusion_matrix(std::span<const Prediction> preds,
                                  bool anomalous_positive = true) {
    Confusion c;
    for (const auto& p : preds) {
        const bool positive_label = anomalous_positive ? p.label : !p.label;
        if (p.predicted == Answer::malformed) {
            ++c.malformed;
            if (positive_label) ++c.malformed_positive;
            continue;
        }
        const bool positive_pred = anomalous_positive ? p.predicted == Answer::yes
                                                      : p.predicted == Answer::no;
        if (positive_pred && positive_label) ++c.tp;
        else if (positive_pred && !positive_label) ++c.fp;
        else if (!positive_pred && positive_label) ++c.fn;
        else ++c.tn;
    }
    return c;
}

inline std::pair<double, double> accuracy_f1(std::span<const Prediction> preds,
                                             bool anomalous_positive = true) {
    if (preds.empty()) throw ValidationError("accuracy_f1 requires at least one prediction");
    Confusion c = confusion_matrix(preds, anomalous_positive);
    return {c.accuracy(), c.f1()};
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct CategoryScore {
    double accuracy = 0.0;
    double f1 = 0.0;
    long support = 0;
};

struct LengthStats {
    double mean = 0.0;
    double median = 0.0;
};

inline LengthStats length_stats(std::span<const Prediction> preds) {
    LengthStats s;
    if (preds.empty()) return s;
    std::vector<double> lens;
    lens.reserve(preds.size());
    for (const auto& p : preds) {
        s.mean += p.response_len;
        lens.push_back(p.response_len);
    }
    s.mean /= static_cast<double>(preds.size());
    std::sort(lens.begin(), lens.end());
    const size_t n = lens.size();
    s.median = n % 2 == 1 ? lens[n / 2] : 0.5 * (lens[n / 2 - 1] + lens[n / 2]);
    return s;
}

struct EvalReport {
    CategoryScore overall;  // pooled over the whole test set, not averaged
    std::map<std::string, CategoryScore> per_category;
    double malformed_rate = 0.0;
    double mean_len = 0.0;
    double median_len = 0.0;
};

inline EvalReport summarize(std::span<const Prediction> preds, bool anomalous_positive = true) {
    if (preds.empty()) throw ValidationError("evaluate requires a nonempty dataset");
    EvalReport report;
    Confusion overall = confusion_matrix(preds, anomalous_positive);
    report.overall = {overall.accuracy(), overall.f1(), overall.total()};
    report.malformed_rate =
        static_cast<double>(overall.malformed) / static_cast<double>(preds.size());

    for (Category c : all_categories()) {
        std::vector<Prediction> subset;
        for (const auto& p : preds) {
            if (p.category == c) subset.push_back(p);
        }
        CategoryScore score;
        score.support = static_cast<long>(subset.size());
        if (!subset.empty()) {
            Confusion cm = confusion_matrix(subset, anomalous_positive);
            score.accuracy = cm.accuracy();
            score.f1 = cm.f1();
        }
        report.per_category[to_string(c)] = score;
    }
    LengthStats lens = length_stats(preds);
    report.mean_len = lens.mean;
    report.median_len = lens.median;
    return report;
}

inline std::vector<Prediction> predict_dataset(const PolicyParams& params,
                                               const std::vector<SamplePair>& dataset,
                                               const Vocab& vocab,
                                               const DecodeConfig& decode = {}) {
    std::vector<Prediction> preds(dataset.size());
    detail::parallel_for(dataset.size(), [&](size_t i) {
        preds[i] = predict(params, dataset[i], vocab, decode, /*rng_seed=*/i);
    });
    return preds;
}

inline EvalReport evaluate(const PolicyParams& params, const std::vector<SamplePair>& dataset,
                           const Vocab& vocab, const DecodeConfig& decode = {},
                           bool anomalous_positive = true) {
    auto preds = predict_dataset(params, dataset, vocab, decode);
    return summarize(preds, anomalous_positive);
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_metric(double v, long support) {
    if (support == 0) return "—";  // em dash for empty categories
    std::ostringstream out;
    out << std::fixed << std::setprecision(3) << v;
    return out.str();
}

}  // namespace detail

// Fixed-width comparison table: Overall first, then one Acc./F1 pair per
// category, one row per evaluated checkpoint.
inline std::string render_report_text(
    const std::vector<std::pair<std::string, EvalReport>>& rows) {
    std::ostringstream out;
    const int label_w = 22, col_w = 9;
    out << std::left << std::setw(label_w) << "model";
    out << std::right << std::setw(col_w) << "Acc." << std::setw(col_w) << "F1";
    for (Category c : all_categories()) {
        std::string name = to_string(c);
        out << std::setw(col_w) << (name.substr(0, 6) + " A") << std::setw(col_w)
            << (name.substr(0, 6) + " F");
    }
    out << "\n";
    out << std::string(static_cast<size_t>(label_w + col_w * 2 * 6), '-') << "\n";
    for (const auto& [label, report] : rows) {
        out << std::left << std::setw(label_w) << label << std::right;
        out << std::setw(col_w) << detail::fmt_metric(report.overall.accuracy, report.overall.support)
            << std::setw(col_w) << detail::fmt_metric(report.overall.f1, report.overall.support);
        for (Category c : all_categories()) {
            const auto& score = report.per_category.at(to_string(c));
            out << std::setw(col_w) << detail::fmt_metric(score.accuracy, score.support)
                << std::setw(col_w) << detail::fmt_metric(score.f1, score.support);
        }
        out << "\n";
    }
    return out.str();
}

inline ordered_json report_to_json(const EvalReport& r) {
    ordered_json j;
    j["overall"] = {{"accuracy", r.overall.accuracy},
                    {"f1", r.overall.f1},
                    {"support", r.overall.support}};
    ordered_json cats = ordered_json::object();
    for (Category c : all_categories()) {
        const auto& s = r.per_category.at(to_string(c));
        cats[to_string(c)] = {{"accuracy", s.accuracy}, {"f1", s.f1}, {"support", s.support}};
    }
    j["per_category"] = cats;
    j["malformed_rate"] = r.malformed_rate;
    j["mean_len"] = r.mean_len;
    j["median_len"] = r.median_len;
    return j;
}

inline EvalReport report_from_json(const ordered_json& j) {
    EvalReport r;
    r.overall = {j.at("overall").at("accuracy").get<double>(),
                 j.at("overall").at("f1").get<double>(),
                 j.at("overall").at("support").get<long>()};
    for (auto& [name, s] : j.at("per_category").items()) {
        r.per_category[name] = {s.at("accuracy").get<double>(), s.at("f1").get<double>(),
                                s.at("support").get<long>()};
    }
    r.malformed_rate = j.at("malformed_rate").get<double>();
    r.mean_len = j.at("mean_len").get<double>();
    r.median_len = j.at("median_len").get<double>();
    return r;
}

// ---------------------------------------------------------------------------
// Response-length series (SFT vs no-SFT comparison)
// ---------------------------------------------------------------------------

struct LengthSeriesRow {
    int64_t step = 0;
    std::vector<double> lens;  // one entry per run, in input order
};

// Aligns the per-step mean response lengths of several training runs on
// their common steps, one row per common step.
inline std::vector<LengthSeriesRow> align_length_series(
    const std::vector<std::vector<MetricsRow>>& runs) {
    std::vector<LengthSeriesRow> out;
    if (runs.empty()) return out;
    std::map<int64_t, int> step_count;
    std::vector<std::map<int64_t, double>> lookup(runs.size());
    for (size_t r = 0; r < runs.size(); ++r) {
        for (const auto& row : runs[r]) {
            lookup[r][row.step] = row.mean_response_len;
            step_count[row.step] += 1;
        }
    }
    for (const auto& [step, count] : step_count) {
        if (static_cast<size_t>(count) != runs.size()) continue;
        LengthSeriesRow row;
        row.step = step;
        for (size_t r = 0; r < runs.size(); ++r) row.lens.push_back(lookup[r].at(step));
        out.push_back(row);
    }
    return out;
}

}  // namespace grpl
