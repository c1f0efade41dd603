#include "oscar/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oscar {

CostMethod cost_method_from_string(const std::string &s) {
    if (s == "kivi") return CostMethod::kKivi;
    if (s == "quarot") return CostMethod::kQuarot;
    if (s == "oscar") return CostMethod::kOscar;
    if (s == "turboquant") return CostMethod::kTurboquant;
    if (s == "turboquant+" || s == "turboquant_plus") return CostMethod::kTurboquantPlus;
    throw std::invalid_argument("unknown cost method: " + s);
}

std::string cost_method_to_string(CostMethod m) {
    switch (m) {
        case CostMethod::kKivi: return "kivi";
        case CostMethod::kQuarot: return "quarot";
        case CostMethod::kOscar: return "oscar";
        case CostMethod::kTurboquant: return "turboquant";
        case CostMethod::kTurboquantPlus: return "turboquant+";
    }
    return "?";
}

std::vector<CostMethod> all_cost_methods() {
    return {CostMethod::kKivi, CostMethod::kQuarot, CostMethod::kOscar,
            CostMethod::kTurboquant, CostMethod::kTurboquantPlus};
}

void CostConfig::validate() const {
    if (d <= 0 || h <= 0 || L <= 0) {
        throw std::invalid_argument("cost config: d, h, L must be positive");
    }
    const double lg = std::log2(h);
    if (std::fabs(lg - std::round(lg)) > 1e-9) {
        throw std::invalid_argument("cost config: h must be a power of two");
    }
    if (lookup_weight < 0) {
        throw std::invalid_argument("cost config: lookup weight must be non-negative");
    }
}

namespace {

double round_sig(double x, int digits) {
    if (x == 0.0) return 0.0;
    const double mag =
        std::pow(10.0, digits - 1 - static_cast<int>(std::floor(std::log10(std::fabs(x)))));
    return std::round(x * mag) / mag;
}

}  // namespace

CostBreakdown method_cost(CostMethod method, const CostConfig &cfg) {
    cfg.validate();
    const double d = cfg.d, h = cfg.h, L = cfg.L;
    const double wht = d * std::log2(h);  // one transformed tensor

    double pre_arith = 0, pre_lookup = 0;   // per token
    double dec_arith = 0, dec_lookup = 0;   // per step
    switch (method) {
        case CostMethod::kKivi:
            pre_arith = 5 * d;
            dec_arith = 5 * d + 2 * L * d;
            break;
        case CostMethod::kQuarot:
            pre_arith = 2 * wht + 5 * d;
            dec_arith = 2 * wht + 5 * d + 2 * L * d;
            break;
        case CostMethod::kOscar:
            pre_arith = 2 * wht + 8 * d;
            dec_arith = 2 * wht + 8 * d + 3 * L * d;
            break;
        case CostMethod::kTurboquant:
            pre_arith = 6 * d * h + 14.5 * d;
            dec_arith = 6 * d * h + 14.5 * d + L * d;
            dec_lookup = L * d;
            break;
        case CostMethod::kTurboquantPlus:
            pre_arith = 4 * d * h + 5.25 * d;
            dec_arith = 4 * d * h + 5.25 * d + L * d;
            dec_lookup = L * d;
            break;
    }

    CostBreakdown out;
    out.method = method;
    out.prefill_arith = round_sig(pre_arith, 5) * L;
    out.prefill_lookup = round_sig(pre_lookup, 5) * L;
    out.decode_arith = dec_arith;
    out.decode_lookup = dec_lookup;
    out.effective_prefill = out.prefill_arith + cfg.lookup_weight * out.prefill_lookup;
    out.effective_decode = out.decode_arith + cfg.lookup_weight * out.decode_lookup;
    return out;
}

ParetoTable pareto_table(const std::vector<CostMethod> &methods, const CostConfig &cfg,
                         const std::map<std::string, double> &accuracy) {
    ParetoTable table;
    for (CostMethod m : methods) {
        const std::string name = cost_method_to_string(m);
        auto it = accuracy.find(name);
        if (it == accuracy.end()) {
            table.warnings.push_back("no accuracy score for " + name + ", row omitted");
            continue;
        }
        ParetoRow row;
        row.method = m;
        row.effective_decode_m = method_cost(m, cfg).effective_decode_m();
        row.score = it->second;
        table.rows.push_back(row);
    }
    std::sort(table.rows.begin(), table.rows.end(),
              [](const ParetoRow &a, const ParetoRow &b) {
                  return a.effective_decode_m < b.effective_decode_m;
              });
    for (ParetoRow &row : table.rows) {
        row.on_front = true;
        for (const ParetoRow &other : table.rows) {
            const bool no_worse = other.effective_decode_m <= row.effective_decode_m &&
                                  other.score >= row.score;
            const bool strictly_better = other.effective_decode_m < row.effective_decode_m ||
                                         other.score > row.score;
            if (no_worse && strictly_better) {
                row.on_front = false;
                break;
            }
        }
    }
    return table;
}

}  // namespace oscar
