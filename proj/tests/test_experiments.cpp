#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "nmc/csv.hpp"
#include "nmc/error.hpp"
#include "nmc/experiments.hpp"

using namespace nmc;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    fs::path d = fs::temp_directory_path() / "nmc_experiments_test";
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(BuiltinExample, Definitions) {
    const auto K1 = builtin_example(1, 0.0);
    EXPECT_EQ(K1.coeff()[1].norm(), 0.0);
    EXPECT_TRUE(validate_kernel(builtin_example(2, 0.2)).pass);
    EXPECT_THROW(builtin_example(1, 0.3), InvalidInput);
    EXPECT_THROW(builtin_example(3, 0.1), InvalidInput);
    const auto P = evaluate_kernel(builtin_example(1, 0.1), Distribution::vertex(4, 0));
    EXPECT_NEAR(P(0, 0), 0.3, 1e-15);
    EXPECT_NEAR(P(0, 2), 0.3, 1e-15);
}

TEST(TvEnvelope, StartAtFixedPointIsZero) {
    const auto K = builtin_example(1, 0.1);
    const auto pi = stationary(K, 1e-13).dist;
    const auto env = tv_envelope(K, 1, 10, 0, &pi, 1e-13);
    for (double v : env.max) EXPECT_LT(v, 1e-11);
}

TEST(TvEnvelope, Example1Shape) {
    const auto env = tv_envelope(builtin_example(1, 0.1), 1000, 15, 3);
    EXPECT_LE(env.max[1], 2.0);
    for (std::size_t n = 0; n <= 15; ++n) {
        EXPECT_LE(env.min[n], env.mean[n]);
        EXPECT_LE(env.mean[n], env.max[n]);
        EXPECT_GE(env.min[n], 0.0);
        if (n > 0) EXPECT_LT(env.mean[n], env.mean[n - 1]);
    }
}

TEST(TvEnvelope, RankOneKernelMixesInOneStep) {
    Eigen::MatrixXd same(3, 3);
    same << 0.2, 0.5, 0.3, 0.2, 0.5, 0.3, 0.2, 0.5, 0.3;
    const auto env = tv_envelope(PolynomialKernel::linear(StochasticMatrix(same)), 50, 5, 1);
    for (std::size_t n = 1; n <= 5; ++n) EXPECT_LT(env.max[n], 1e-15);
}

TEST(CompareBounds, Example1Columns) {
    CompareConfig cc;
    cc.trials = 200;
    const auto t = compare_bounds(builtin_example(1, 0.1), 30, cc, 5);
    ASSERT_EQ(t.rows.size(), 30u);
    const auto spec = t.column("spectral"), md = t.column("md"), t4 = t.column("theorem4_small"),
               emax = t.column("env_max");
    const double expected[] = {0.54, 0.20, 0.07};
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(std::stod(t.rows[i][spec]), expected[i], 0.02);
    EXPECT_NEAR(std::stod(t.rows[0][md]), 0.8, 5e-3);
    for (const auto& r : t.rows) EXPECT_LE(std::stod(r[emax]), std::stod(r[t4]));
}

TEST(CompareBounds, DominationBothExamples) {
    CompareConfig cc;
    cc.trials = 200;
    for (int id : {1, 2})
        for (double k : {0.1, 0.2}) {
            const auto t = compare_bounds(builtin_example(id, k), 30, cc, 11);
            for (const auto& r : t.rows)
                EXPECT_LE(std::stod(r[t.column("env_max")]), std::stod(r[t.column("theorem4_small")]))
                    << "example " << id << " kappa " << k << " n " << r[0];
        }
}

TEST(CompareBounds, Deterministic) {
    CompareConfig cc;
    cc.trials = 50;
    const auto a = compare_bounds(builtin_example(2, 0.2), 10, cc, 9).to_string();
    const auto b = compare_bounds(builtin_example(2, 0.2), 10, cc, 9).to_string();
    EXPECT_EQ(a, b);
}

TEST(ExportReport, RoundTripAndErrors) {
    const fs::path dir = scratch_dir();
    CompareConfig cc;
    cc.trials = 20;
    const auto t = compare_bounds(builtin_example(1, 0.1), 8, cc, 1);
    const fs::path p = dir / "cmp.csv";
    export_report(t, p.string());
    const auto back = read_csv(p.string());
    EXPECT_EQ(back.header, t.header);
    EXPECT_EQ(back.rows, t.rows);
    EXPECT_EQ(slurp(p), t.to_string());

    CsvTable empty;
    empty.header = {"n", "x"};
    export_report(empty, (dir / "empty.csv").string());
    EXPECT_EQ(slurp(dir / "empty.csv"), "n,x\n");

    const fs::path missing = dir / "no_such_dir" / "out.csv";
    EXPECT_THROW(export_report(t, missing.string()), IoError);
    EXPECT_FALSE(fs::exists(missing));
    EXPECT_FALSE(fs::exists(missing.string() + ".tmp"));
}
