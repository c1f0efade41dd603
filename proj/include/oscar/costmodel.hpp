#pragma once

#include <map>
#include <string>
#include <vector>

namespace oscar {

enum class CostMethod { kKivi, kQuarot, kOscar, kTurboquant, kTurboquantPlus };

CostMethod cost_method_from_string(const std::string &s);
std::string cost_method_to_string(CostMethod m);
std::vector<CostMethod> all_cost_methods();

struct CostConfig {
    double d = 4096;          // hidden dimension
    double h = 128;           // head dimension, power of two
    double L = 10000;         // sequence length
    double lookup_weight = 5; // effective units per random table lookup
    void validate() const;
};

// Raw operation counts and weighted effective units. Prefill numbers
// cover the whole L-token sequence; decode numbers are per step.
// Per-token prefill counts are carried at five significant digits
// before scaling by L, which is how sequence totals are quoted.
struct CostBreakdown {
    CostMethod method = CostMethod::kKivi;
    double prefill_arith = 0;
    double prefill_lookup = 0;
    double decode_arith = 0;
    double decode_lookup = 0;
    double effective_prefill = 0;  // arith + weight * lookup
    double effective_decode = 0;
    double effective_prefill_m() const { return effective_prefill / 1e6; }
    double effective_decode_m() const { return effective_decode / 1e6; }
};

// Closed-form per-method costs. The fast Walsh-Hadamard transform of a
// d-wide tensor over heads of dimension h costs d*log2(h) additions
// (h*log2(h) per head times d/h heads).
CostBreakdown method_cost(CostMethod method, const CostConfig &cfg);

struct ParetoRow {
    CostMethod method;
    double effective_decode_m = 0;
    double score = 0;
    bool on_front = false;
};

struct ParetoTable {
    std::vector<ParetoRow> rows;            // sorted by decode cost
    std::vector<std::string> warnings;      // methods skipped for missing scores
};

// Joins decode costs with externally supplied accuracy scores and flags
// Pareto-dominant rows (no other row is at most as costly and at least
// as accurate with one strict).
ParetoTable pareto_table(const std::vector<CostMethod> &methods, const CostConfig &cfg,
                         const std::map<std::string, double> &accuracy);

}  // namespace oscar
