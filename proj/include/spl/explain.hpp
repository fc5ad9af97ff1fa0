#pragma once

#include <cmath>
#include <string>

#include "spl/planner.hpp"

namespace spl {

// ============================================================
// Number formatting
// ============================================================

inline std::string with_thousands(long long v) {
    std::string digits = std::to_string(v < 0 ? -v : v);
    std::string out;
    int count = 0;
    for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
        if (count && count % 3 == 0) out += ',';
        out += *it;
        ++count;
    }
    if (v < 0) out += '-';
    return std::string(out.rbegin(), out.rend());
}

/// Round to the nearest integer, ties to even (the default FP rounding mode).
inline long long round_half_even(double v) {
    return static_cast<long long>(std::nearbyint(v));
}

/// Percentage of `whole`, one decimal, ties to even: 0.25% renders as "0.2".
inline std::string percent_string(long long part, long long whole) {
    if (whole == 0) return "0.0";
    long long tenths = round_half_even(static_cast<double>(part) * 1000.0 /
                                       static_cast<double>(whole));
    std::string out = std::to_string(tenths / 10);
    out += '.';
    out += std::to_string(tenths % 10);
    return out;
}

/// Dollar amount with four decimals, ties to even: 0.04116 renders as 0.0412.
inline std::string money_string(double amount) {
    long long basis = round_half_even(amount * 10000.0);
    std::string frac = std::to_string(basis % 10000);
    frac.insert(0, 4 - frac.size(), '0');
    return std::to_string(basis / 10000) + "." + frac;
}

// ============================================================
// Rendering
// ============================================================

struct ExplainOptions {
    bool show_cost = true;
    /// Label column width; token counts start right after it.
    int width = 25;
};

/// Renders the human-readable token allocation plan. The layout is pinned
/// byte-for-byte by the golden files: labels fill a fixed-width column
/// (the Output Budget row is one column narrower, the Total label three
/// wider), counts carry thousands separators, and percentages show one
/// decimal with ties rounded to even.
inline std::string render(const ExecutionPlan& plan, const ExplainOptions& options = {}) {
    auto label = [](const std::string& name, int width) {
        if (static_cast<int>(name.size()) >= width) return name + " ";
        return name + std::string(static_cast<std::size_t>(width - name.size()), ' ');
    };

    std::string out;
    out += "Execution Plan for: " + plan.prompt_name + "\n";
    out += "=====\n";
    out += "Budget: " + with_thousands(plan.total_budget) + " tokens | Model: " + plan.model +
           "\n\n";
    out += "Token Allocation:\n";

    auto row = [&](const char* marker, const std::string& name, int width, long long tokens,
                   const std::string& annotations) {
        out += marker;
        out += label(name, width);
        out += with_thousands(tokens) + " tokens ( " + percent_string(tokens, plan.total_budget) +
               "%)";
        out += annotations;
        out += "\n";
    };

    for (const auto& a : plan.allocations) {
        std::string notes;
        if (a.kind == AllocationKind::Memory) notes += " [from memory]";
        if (a.kind == AllocationKind::Rag) {
            notes += a.cache_status == CacheStatus::Hit ? " [cache HIT]" : " [cache MISS]";
        }
        if (a.compression_ratio < 1.0) {
            notes += " [compressed to " +
                     std::to_string(round_half_even(a.compression_ratio * 100.0)) + "%]";
        }
        row("+-- ", a.name, options.width, a.allocated_tokens, notes);
    }
    row("+-- ", "Output Budget", options.width - 1, plan.output_budget, "");
    row("\\-- ", "Buffer", options.width, plan.buffer_tokens, "");

    long long total = plan.allocated_total() + plan.output_budget;
    out += "-----\n";
    out += label("Total", options.width + 3) + with_thousands(total) + " / " +
           with_thousands(plan.total_budget) + " tokens (" +
           percent_string(total, plan.total_budget) + "%)\n";

    if (options.show_cost) {
        out += "\n";
        if (plan.estimated_cost) {
            out += "Estimated Cost: $" + money_string(*plan.estimated_cost) + "\n";
        } else {
            out += "Estimated Cost: unavailable\n";
        }
    }
    return out;
}

}  // namespace spl
