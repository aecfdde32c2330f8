#include "nmc/experiments.hpp"

#include <algorithm>
#include <limits>

namespace nmc {

PolynomialKernel builtin_example(int id, double kappa, Example2Variant variant) {
    if (kappa < 0.0 || kappa > 0.25) throw InvalidInput("kappa must lie in [0, 0.25] for built-in examples");
    if (id == 1) {
        Eigen::MatrixXd P(4, 4);
        P << 0.4, 0.2, 0.2, 0.2,
             0.3, 0.4, 0.2, 0.1,
             0.2, 0.2, 0.4, 0.2,
             0.2, 0.1, 0.2, 0.5;
        Eigen::MatrixXd C2 = Eigen::MatrixXd::Zero(4, 4);
        C2(0, 0) = -kappa;
        C2(0, 2) = kappa;
        return PolynomialKernel({P, C2});
    }
    if (id == 2) {
        Eigen::MatrixXd P(5, 5);
        P << 0.4, 0.3, 0.1, 0.1, 0.1,
             0.2, 0.4, 0.2, 0.1, 0.1,
             0.1, 0.2, 0.4, 0.2, 0.1,
             0.1, 0.1, 0.2, 0.4, 0.2,
             0.1, 0.1, 0.1, 0.3, 0.4;
        Eigen::MatrixXd C2 = Eigen::MatrixXd::Zero(5, 5);
        C2(0, 0) = kappa;  C2(0, 1) = -kappa;
        C2(1, 1) = kappa;  C2(1, 2) = -kappa;
        C2(2, 2) = kappa;  C2(2, 3) = -kappa;
        C2(3, 3) = kappa;  C2(3, 4) = -kappa;
        C2(4, 4) = kappa;  C2(4, 3) = -kappa;
        Eigen::MatrixXi coord(5, 5);
        for (int x = 0; x < 5; ++x) coord.row(x).setConstant(x);
        if (variant == Example2Variant::Printed) coord(2, 3) = 3;
        return PolynomialKernel({P, C2}, coord);
    }
    throw InvalidInput("unknown example id " + std::to_string(id) + " (expected 1 or 2)");
}

Envelope tv_envelope(const PolynomialKernel& K, std::size_t trials, std::size_t steps, std::uint64_t seed,
                     const Distribution* start_override, double stationary_tol) {
    if (trials < 1) throw InvalidInput("tv_envelope: trials must be >= 1");
    const Distribution pi = stationary(K, stationary_tol).dist;
    Envelope env;
    env.min.assign(steps + 1, std::numeric_limits<double>::infinity());
    env.mean.assign(steps + 1, 0.0);
    env.max.assign(steps + 1, 0.0);
    for (std::size_t i = 0; i < trials; ++i) {
        Rng rng(derive_seed(seed, i));
        const Distribution mu0 = start_override ? *start_override : random_distribution(K.size(), rng);
        const auto flow = propagate(K, mu0, steps);
        for (std::size_t n = 0; n <= steps; ++n) {
            const double d = tv_distance(flow[n], pi);
            env.min[n] = std::min(env.min[n], d);
            env.max[n] = std::max(env.max[n], d);
            env.mean[n] += d;
        }
    }
    for (double& m : env.mean) m /= static_cast<double>(trials);
    return env;
}

CsvTable compare_bounds(const PolynomialKernel& K, std::size_t steps, const CompareConfig& config,
                        std::uint64_t seed) {
    ReportConfig rc = config.report;
    rc.sampling.seed = derive_seed(seed, 1);
    const BoundReport rep = full_report(K, steps, rc);
    const Envelope env = tv_envelope(K, config.trials, steps, derive_seed(seed, 2), nullptr, rc.stationary_tol);
    CsvTable t;
    t.header = {"n", "env_min", "env_mean", "env_max", "md", "spectral", "theorem4_small", "theorem4_large"};
    for (std::size_t n = 1; n <= steps; ++n) {
        t.add_row({std::to_string(n), format_number(env.min[n]), format_number(env.mean[n]),
                   format_number(env.max[n]), format_number(rep.curve("md").at(n)),
                   format_number(rep.curve("spectral").at(n)),
                   format_number(rep.curve("theorem4_small").at(n)),
                   format_number(rep.curve("theorem4_large").at(n))});
    }
    return t;
}

void export_report(const CsvTable& table, const std::string& path) {
    write_file_atomic(path, table.to_string());
}

}  // namespace nmc
