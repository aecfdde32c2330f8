#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nmc/bounds.hpp"
#include "nmc/chain.hpp"
#include "nmc/csv.hpp"

namespace nmc {

/// How Example 2's row-3 entry "0.2 - kappa mu^4" is read.
enum class Example2Variant {
    RowConsistent,  // 0.2 - kappa mu^3, like every other entry in the row
    Printed,        // literal mu^4 dependence (rows then fail to sum to one)
};

/// Degree-2 kernels of the two worked examples. kappa in [0, 0.25].
PolynomialKernel builtin_example(int id, double kappa,
                                 Example2Variant variant = Example2Variant::RowConsistent);

struct Envelope {
    // Index n = 0..steps.
    std::vector<double> min, mean, max;
};

/// True ||mu_n - pi|| over `trials` random starts (or the given start).
Envelope tv_envelope(const PolynomialKernel& K, std::size_t trials, std::size_t steps, std::uint64_t seed,
                     const Distribution* start_override = nullptr, double stationary_tol = 1e-10);

struct CompareConfig {
    std::size_t trials = 1000;
    ReportConfig report;
};

/// Columns: n, env_min, env_mean, env_max, md, spectral, theorem4_small,
/// theorem4_large. Rows n = 1..steps.
CsvTable compare_bounds(const PolynomialKernel& K, std::size_t steps, const CompareConfig& config,
                        std::uint64_t seed);

void export_report(const CsvTable& table, const std::string& path);

}  // namespace nmc
