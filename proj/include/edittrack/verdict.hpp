#pragma once

#include <string>
#include <vector>

#include "edittrack/manifest.hpp"

namespace edittrack {

enum class Decision { NonEdited, EditedBy, EditedByUnseen };

struct Verdict {
    Decision decision = Decision::NonEdited;
    int model = 0;                      // 1..n when decision == EditedBy
    std::vector<double> probabilities;  // n+1 entries, index 0 = not edited

    static Verdict non_edited(std::vector<double> p) { return {Decision::NonEdited, 0, std::move(p)}; }
    static Verdict edited_by(int i, std::vector<double> p) { return {Decision::EditedBy, i, std::move(p)}; }
    static Verdict unseen(std::vector<double> p) { return {Decision::EditedByUnseen, 0, std::move(p)}; }

    bool is_edited() const { return decision != Decision::NonEdited; }

    // Predicted label in manifest terms: 0, 1..n, or kUnseenLabel.
    int label() const {
        switch (decision) {
            case Decision::NonEdited: return 0;
            case Decision::EditedBy: return model;
            case Decision::EditedByUnseen: return kUnseenLabel;
        }
        return 0;
    }

    std::string to_string() const {
        switch (decision) {
            case Decision::NonEdited: return "NonEdited";
            case Decision::EditedBy: return "EditedBy(" + std::to_string(model) + ")";
            case Decision::EditedByUnseen: return "EditedByUnseen";
        }
        return "?";
    }
};

}  // namespace edittrack
