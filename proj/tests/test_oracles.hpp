// Test-side oracles, kept independent of the implementation paths they
// check. Shared by the unit suites and the acceptance runner.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "grpl/scenes.hpp"

namespace grpl_test {

// Brute-force canonical diff between two scenes. Counts one edit per
// in-place attribute change, one per matched move (same kind+color leaving
// one slot and appearing in another), and one per leftover add/remove.
inline int canonical_diff_count(const grpl::Scene& a, const grpl::Scene& b) {
    int edits = 0;
    std::vector<grpl::SceneObject> removed, added;
    for (int slot = 0; slot < grpl::kNumSlots; ++slot) {
        const grpl::SceneObject* oa = a.at_slot(slot);
        const grpl::SceneObject* ob = b.at_slot(slot);
        if (oa && ob) {
            if (oa->kind != ob->kind) ++edits;
            if (oa->color != ob->color) ++edits;
        } else if (oa) {
            removed.push_back(*oa);
        } else if (ob) {
            added.push_back(*ob);
        }
    }
    for (const auto& r : removed) {
        auto it = std::find_if(added.begin(), added.end(), [&](const grpl::SceneObject& x) {
            return x.kind == r.kind && x.color == r.color;
        });
        if (it != added.end()) {
            added.erase(it);  // a move
            ++edits;
        } else {
            ++edits;  // a removal
        }
    }
    edits += static_cast<int>(added.size());
    return edits;
}

// Plain confusion counting for accuracy/F1, written against the metric
// definitions rather than the eval implementation.
struct BruteConfusion {
    long tp = 0, fp = 0, fn = 0, tn = 0, malformed = 0;
    long malformed_on_positive = 0;

    long total() const { return tp + fp + fn + tn + malformed; }

    double accuracy() const {
        return total() == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(total());
    }

    double f1() const {
        const double pos_pred = static_cast<double>(tp + fp);
        const double pos_true = static_cast<double>(tp + fn + malformed_on_positive);
        const double precision = pos_pred > 0 ? tp / pos_pred : 0.0;
        const double recall = pos_true > 0 ? tp / pos_true : 0.0;
        if (precision + recall == 0.0) return 0.0;
        return 2.0 * precision * recall / (precision + recall);
    }
};

}  // namespace grpl_test
