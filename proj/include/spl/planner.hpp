#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spl/ast.hpp"

namespace spl {

class PlanError : public std::runtime_error {
public:
    explicit PlanError(const std::string& message) : std::runtime_error(message) {}
};

class UnknownModelError : public std::runtime_error {
public:
    explicit UnknownModelError(const std::string& model)
        : std::runtime_error("no pricing entry for model '" + model + "'"), model(model) {}
    std::string model;
};

// ============================================================
// Token estimation
// ============================================================

using TokenCounter = std::function<long long(std::string_view)>;

inline long long heuristic_token_count(std::string_view text) {
    return static_cast<long long>((text.size() + 3) / 4);
}

/// Delegates to the adapter-supplied counter when given one; otherwise
/// ceil(chars / 4). Empty text always counts as zero.
inline long long estimate_tokens(std::string_view text, const TokenCounter& counter = nullptr) {
    if (text.empty()) return 0;
    if (counter) return counter(text);
    return heuristic_token_count(text);
}

// ============================================================
// Pricing
// ============================================================

struct Pricing {
    double input_per_million = 0.0;
    double output_per_million = 0.0;
};

class PricingTable {
public:
    PricingTable() = default;

    void set(const std::string& model, double input_per_million, double output_per_million) {
        prices_[model] = Pricing{input_per_million, output_per_million};
    }

    std::optional<Pricing> find(const std::string& model) const {
        auto it = prices_.find(model);
        if (it == prices_.end()) return std::nullopt;
        return it->second;
    }

    const std::map<std::string, Pricing>& entries() const { return prices_; }

private:
    std::map<std::string, Pricing> prices_;
};

/// Dollar cost of a call: tokens times per-million rates, unrounded.
inline double estimate_cost(long long input_tokens, long long output_tokens,
                            const std::string& model, const PricingTable& pricing) {
    auto p = pricing.find(model);
    if (!p) throw UnknownModelError(model);
    return static_cast<double>(input_tokens) * p->input_per_million / 1e6 +
           static_cast<double>(output_tokens) * p->output_per_million / 1e6;
}

// ============================================================
// Plan types
// ============================================================

struct OptimizerConfig {
    /// Fraction of the total budget withheld as the safety buffer.
    double buffer_fraction = 0.10;
    /// Per-source compression cap: a source loses at most this fraction.
    double max_compression = 0.5;
    long long default_output_budget = 1024;
    long long default_budget = 8000;
    /// Pre-execution estimates for sources without a LIMIT.
    long long rag_estimate = 2000;
    long long memory_estimate = 500;
    long long context_estimate = 200;
};

enum class AllocationKind { SystemRole, Memory, Rag, Context, Cte, Output, Buffer };

enum class CacheStatus { Hit, Miss, NotApplicable };

inline const char* allocation_kind_name(AllocationKind k) {
    switch (k) {
        case AllocationKind::SystemRole: return "system_role";
        case AllocationKind::Memory: return "memory";
        case AllocationKind::Rag: return "rag";
        case AllocationKind::Context: return "context";
        case AllocationKind::Cte: return "cte";
        case AllocationKind::Output: return "output";
        case AllocationKind::Buffer: return "buffer";
    }
    return "?";
}

inline const char* cache_status_name(CacheStatus s) {
    switch (s) {
        case CacheStatus::Hit: return "HIT";
        case CacheStatus::Miss: return "MISS";
        case CacheStatus::NotApplicable: return "N/A";
    }
    return "?";
}

/// Execution sequencing rank; larger runs earlier. Sequencing only: priority
/// never protects a source from compression.
inline int allocation_priority(AllocationKind k) {
    switch (k) {
        case AllocationKind::SystemRole: return 100;
        case AllocationKind::Cte: return 90;
        case AllocationKind::Memory: return 80;
        case AllocationKind::Rag: return 70;
        case AllocationKind::Context: return 60;
        case AllocationKind::Output: return 10;
        case AllocationKind::Buffer: return 0;
    }
    return 0;
}

struct Allocation {
    std::string name;
    AllocationKind kind = AllocationKind::Context;
    long long estimated_tokens = 0;
    std::optional<long long> limit_tokens;
    long long allocated_tokens = 0;
    double compression_ratio = 1.0;
    CacheStatus cache_status = CacheStatus::NotApplicable;
    int priority = 0;
};

struct ExecutionPlan {
    std::string prompt_name;
    std::string model;
    long long total_budget = 0;
    long long output_budget = 0;
    long long input_budget = 0;
    /// Context sources in execution order; the output budget and buffer are
    /// carried by the fields above, not by pseudo-rows.
    std::vector<Allocation> allocations;
    long long buffer_tokens = 0;
    std::optional<double> estimated_cost;
    std::vector<std::string> warnings;

    long long allocated_total() const {
        return std::accumulate(allocations.begin(), allocations.end(), 0LL,
                               [](long long acc, const Allocation& a) {
                                   return acc + a.allocated_tokens;
                               });
    }

    const Allocation* find(const std::string& name) const {
        for (const auto& a : allocations) {
            if (a.name == name) return &a;
        }
        return nullptr;
    }
};

// ============================================================
// Compression
// ============================================================

/// Largest-first greedy compression. Sorts by allocation descending (stable,
/// so earlier sources win ties) and strips up to max_compression of each
/// source until the excess is gone. Mutates `allocations` in place and
/// returns the residual excess, zero when the input budget was met.
inline long long compress_largest_first(std::vector<long long>& allocations,
                                        long long input_budget, double max_compression = 0.5) {
    long long total = std::accumulate(allocations.begin(), allocations.end(), 0LL);
    if (total <= input_budget) return 0;
    long long excess = total - input_budget;

    std::vector<std::size_t> order(allocations.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return allocations[a] > allocations[b];
    });

    for (std::size_t i : order) {
        long long cap = static_cast<long long>(
            std::floor(static_cast<double>(allocations[i]) * max_compression));
        long long reduction = std::min(cap, excess);
        allocations[i] -= reduction;
        excess -= reduction;
        if (excess <= 0) break;
    }
    return excess;
}

// ============================================================
// Planning
// ============================================================

/// Runtime-supplied token estimates keyed by source display name.
using SourceEstimates = std::map<std::string, long long>;

/// Cache annotation hook; the default marks RAG sources MISS and everything
/// else not-applicable.
using CacheProbe = std::function<CacheStatus(const std::string& name, AllocationKind kind)>;

struct PlanInputs {
    SourceEstimates estimates;
    CacheProbe cache_probe;
    /// Overrides the prompt's declared model (routing result).
    std::string model_override;
    /// Throw PlanError instead of leaving the cost unavailable when the
    /// model has no pricing entry.
    bool strict_pricing = false;
};

inline AllocationKind plan_allocation_kind(const SelectItem& item,
                                           const std::set<std::string>& cte_names) {
    switch (item.source.kind) {
        case SourceKind::SystemRole: return AllocationKind::SystemRole;
        case SourceKind::Memory: return AllocationKind::Memory;
        case SourceKind::Rag: return AllocationKind::Rag;
        case SourceKind::Context:
            return cte_names.count(item.source.text) ? AllocationKind::Cte
                                                     : AllocationKind::Context;
        case SourceKind::NameRef:
            return cte_names.count(item.source.text) ? AllocationKind::Cte
                                                     : AllocationKind::Context;
        case SourceKind::FunctionCall: return AllocationKind::Context;
    }
    return AllocationKind::Context;
}

/// Builds the execution plan for one prompt: computes the input budget
/// (total minus output minus safety buffer), caps each source at its LIMIT,
/// compresses largest-first when over budget, orders sources for execution,
/// and attaches the cost estimate.
inline ExecutionPlan plan(const PromptStatement& prompt, const OptimizerConfig& config,
                          const PricingTable& pricing, const PlanInputs& inputs = {}) {
    ExecutionPlan out;
    out.prompt_name = prompt.name;
    out.model = !inputs.model_override.empty() ? inputs.model_override
                                               : prompt.model.value_or("");
    out.total_budget = prompt.budget_tokens.value_or(config.default_budget);
    out.output_budget = prompt.generate.output_budget_tokens.value_or(config.default_output_budget);
    long long buffer_reserve =
        std::llround(config.buffer_fraction * static_cast<double>(out.total_budget));
    out.input_budget = out.total_budget - out.output_budget - buffer_reserve;
    if (out.input_budget <= 0) {
        throw PlanError("no input budget: total budget " + std::to_string(out.total_budget) +
                        " does not cover output budget " + std::to_string(out.output_budget) +
                        " plus safety buffer " + std::to_string(buffer_reserve));
    }

    std::set<std::string> cte_names;
    for (const auto& cte : prompt.ctes) cte_names.insert(cte.name);

    auto cte_estimate = [&](const std::string& name) -> long long {
        for (const auto& cte : prompt.ctes) {
            if (cte.name != name) continue;
            if (cte.is_prompt()) {
                return cte.prompt->generate.output_budget_tokens.value_or(
                    config.default_output_budget);
            }
            if (cte.select && cte.select->limit_tokens) return *cte.select->limit_tokens;
        }
        return config.context_estimate;
    };

    for (const auto& item : prompt.select_items) {
        Allocation a;
        a.name = item.display_name();
        a.kind = plan_allocation_kind(item, cte_names);
        a.limit_tokens = item.limit_tokens;
        a.priority = allocation_priority(a.kind);

        auto supplied = inputs.estimates.find(a.name);
        if (supplied != inputs.estimates.end()) {
            a.estimated_tokens = supplied->second;
        } else if (a.kind == AllocationKind::SystemRole) {
            a.estimated_tokens = estimate_tokens(item.source.text);
        } else if (item.limit_tokens) {
            a.estimated_tokens = *item.limit_tokens;
        } else {
            switch (a.kind) {
                case AllocationKind::Rag: a.estimated_tokens = config.rag_estimate; break;
                case AllocationKind::Memory: a.estimated_tokens = config.memory_estimate; break;
                case AllocationKind::Cte: a.estimated_tokens = cte_estimate(item.source.text); break;
                default: a.estimated_tokens = config.context_estimate; break;
            }
        }

        a.allocated_tokens = item.limit_tokens
                                 ? std::min(a.estimated_tokens, *item.limit_tokens)
                                 : a.estimated_tokens;
        out.allocations.push_back(std::move(a));
    }

    std::vector<long long> sizes;
    sizes.reserve(out.allocations.size());
    for (const auto& a : out.allocations) sizes.push_back(a.allocated_tokens);
    long long residual = compress_largest_first(sizes, out.input_budget, config.max_compression);
    for (std::size_t i = 0; i < out.allocations.size(); ++i) {
        Allocation& a = out.allocations[i];
        long long before = a.allocated_tokens;
        a.allocated_tokens = sizes[i];
        a.compression_ratio =
            before > 0 ? static_cast<double>(a.allocated_tokens) / static_cast<double>(before)
                       : 1.0;
    }
    if (residual > 0) {
        out.warnings.push_back("context exceeds the input budget by " + std::to_string(residual) +
                               " tokens even after maximum compression; raise the budget, lower "
                               "LIMIT values, or reduce the output budget");
    }

    std::stable_sort(out.allocations.begin(), out.allocations.end(),
                     [](const Allocation& a, const Allocation& b) {
                         return a.priority > b.priority;
                     });

    for (auto& a : out.allocations) {
        a.cache_status = inputs.cache_probe
                             ? inputs.cache_probe(a.name, a.kind)
                             : (a.kind == AllocationKind::Rag ? CacheStatus::Miss
                                                              : CacheStatus::NotApplicable);
    }

    out.buffer_tokens = out.total_budget - out.output_budget - out.allocated_total();

    if (pricing.find(out.model)) {
        out.estimated_cost =
            estimate_cost(out.allocated_total(), out.output_budget, out.model, pricing);
    } else if (inputs.strict_pricing) {
        throw PlanError("no pricing entry for model '" + out.model + "'");
    }

    return out;
}

}  // namespace spl
