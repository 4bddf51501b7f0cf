#include "doctest.h"

#include "mmd_oracle.hpp"
#include "toy.hpp"

#include "forge/mmd.hpp"

#include <cstring>
#include <limits>
#include <random>

using namespace forge;
using namespace forge::mmd;
using forge::testing::Rows;
using Eigen::MatrixXd;
using nlohmann::json;

namespace {

MatrixXd to_matrix(const Rows& r) {
    MatrixXd m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.front().size()));
    for (std::size_t i = 0; i < r.size(); ++i)
        for (std::size_t j = 0; j < r[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[i][j];
    return m;
}

Rows random_rows(std::mt19937& rng, std::size_t n, std::size_t d, double shift) {
    std::normal_distribution<double> g(shift, 1.0);
    Rows r(n, std::vector<double>(d));
    for (auto& row : r)
        for (auto& v : row) v = g(rng);
    return r;
}

EmbeddingSet random_set(std::mt19937& rng, Style domain, Modality modality, std::size_t n, std::size_t d,
                        double shift) {
    EmbeddingSet s;
    s.domain = domain;
    s.modality = modality;
    s.vectors = to_matrix(random_rows(rng, n, d, shift));
    for (std::size_t i = 0; i < n; ++i) s.ids.push_back("id" + std::to_string(i));
    return s;
}

}  // namespace

TEST_SUITE("mmd") {

TEST_CASE("vectorized estimate matches the double-loop oracle") {
    std::mt19937 rng(123);
    std::uniform_int_distribution<std::size_t> size(2, 30), dim(1, 16);
    std::uniform_real_distribution<double> shift(-1.0, 1.0), bw(0.3, 4.0);
    int cases = 0;
    for (int k = 0; k < 60; ++k) {
        const auto d = dim(rng);
        const auto x = random_rows(rng, size(rng), d, 0.0);
        const auto y = random_rows(rng, size(rng), d, shift(rng));
        const auto X = to_matrix(x), Y = to_matrix(y);
        const double median = forge::testing::oracle_bandwidth(x, y);
        const double fixed = bw(rng);
        for (auto est : {Estimator::Biased, Estimator::Unbiased}) {
            const bool ub = est == Estimator::Unbiased;
            CHECK(std::abs(mmd_squared(X, Y, KernelSpec::linear(), est) - forge::testing::oracle_mmd2(x, y, 0.0, ub)) <=
                  1e-9);
            CHECK(std::abs(mmd_squared(X, Y, KernelSpec::rbf_median(), est) -
                           forge::testing::oracle_mmd2(x, y, median, ub)) <= 1e-9);
            CHECK(std::abs(mmd_squared(X, Y, KernelSpec::rbf(fixed), est) -
                           forge::testing::oracle_mmd2(x, y, fixed, ub)) <= 1e-9);
            cases += 3;
        }
        CHECK(std::abs(resolve_bandwidth(X, Y, KernelSpec::rbf_median()) - median) <= 1e-12);
    }
    CHECK(cases >= 100);
}

TEST_CASE("identical samples give zero, swapped operands give the same bits") {
    std::mt19937 rng(4);
    for (int k = 0; k < 30; ++k) {
        const auto X = to_matrix(random_rows(rng, 3 + static_cast<std::size_t>(k), 8, 0.0));
        const auto Y = to_matrix(random_rows(rng, 5 + static_cast<std::size_t>(k % 7), 8, 0.5));
        for (const auto& kernel : {KernelSpec::linear(), KernelSpec::rbf_median(), KernelSpec::rbf(1.5)}) {
            CHECK(std::abs(mmd_squared(X, X, kernel, Estimator::Biased)) <= 1e-12);
            for (auto est : {Estimator::Biased, Estimator::Unbiased}) {
                const double a = mmd_squared(X, Y, kernel, est);
                const double b = mmd_squared(Y, X, kernel, est);
                CHECK(std::memcmp(&a, &b, sizeof a) == 0);
            }
        }
    }
}

TEST_CASE("kernel values and singletons") {
    Eigen::VectorXd a(2), b(2);
    a << 0, 0;
    b << 3, 4;
    CHECK(kernel_value(KernelSpec::linear(), 0.0, a, b) == 0.0);
    CHECK(kernel_value(KernelSpec::rbf(5.0), 5.0, a, b) == doctest::Approx(std::exp(-0.5)));
    MatrixXd x(1, 2), y(1, 2);
    x << 0, 0;
    y << 3, 4;
    CHECK(mmd_squared(x, y, KernelSpec::rbf(5.0), Estimator::Biased) == doctest::Approx(2.0 - 2.0 * std::exp(-0.5)));
    CHECK(mmd_squared(x, y, KernelSpec::rbf_median(), Estimator::Biased) ==
          doctest::Approx(2.0 - 2.0 * std::exp(-0.5)));
    // Far apart singletons approach the kernel's maximum discrepancy of 2.
    y << 300, 400;
    CHECK(mmd_squared(x, y, KernelSpec::rbf(1.0), Estimator::Biased) == doctest::Approx(2.0));
    CHECK(mmd_squared(x, y, KernelSpec::linear(), Estimator::Biased) == doctest::Approx(250000.0));
    CHECK_THROWS_AS(mmd_squared(x, y, KernelSpec::rbf(1.0), Estimator::Unbiased), PreconditionError);
}

TEST_CASE("median heuristic") {
    MatrixXd p(3, 1);
    p << 0, 1, 3;
    CHECK(median_heuristic(p) == 2.0);
    MatrixXd q(4, 1);
    q << 0, 1, 3, 6;  // distances 1 2 3 3 5 6
    CHECK(median_heuristic(q) == 3.0);
    MatrixXd half(4, 2);
    half << 1, 1, 1, 1, 1, 1, 4, 5;  // 0 0 0 5 5 5
    CHECK(median_heuristic(half) == 2.5);
    MatrixXd dup(5, 2);
    dup << 1, 1, 1, 1, 1, 1, 1, 1, 4, 5;  // six zeros, four fives: falls back to the nonzero median
    CHECK(median_heuristic(dup) == 5.0);
    MatrixXd same = MatrixXd::Ones(5, 3);
    CHECK_THROWS_AS(median_heuristic(same), PreconditionError);
    CHECK_THROWS_AS(median_heuristic(MatrixXd::Ones(1, 3)), PreconditionError);
    CHECK_THROWS_AS(mmd_squared(same, same, KernelSpec::rbf_median(), Estimator::Biased), PreconditionError);
}

TEST_CASE("median heuristic subsamples deterministically above the cap") {
    std::mt19937 rng(8);
    const auto big = to_matrix(random_rows(rng, 60, 4, 0.0));
    const double a = median_heuristic(big, 3, 20);
    CHECK(a == median_heuristic(big, 3, 20));
    CHECK(a > 0.0);
    CHECK(median_heuristic(big, 0, 1000) == doctest::Approx(median_heuristic(big, 0, 60)));
}

TEST_CASE("scale and translation behaviour") {
    std::mt19937 rng(31);
    for (int k = 0; k < 20; ++k) {
        const auto X = to_matrix(random_rows(rng, 12, 5, 0.0));
        const auto Y = to_matrix(random_rows(rng, 9, 5, 0.7));
        const double c = 0.5 + k * 0.37;
        MatrixXd shift = MatrixXd::Constant(1, 5, 2.5 * k);
        const MatrixXd Xs = X.rowwise() + shift.row(0), Ys = Y.rowwise() + shift.row(0);
        for (auto est : {Estimator::Biased, Estimator::Unbiased}) {
            const double base = mmd_squared(X, Y, KernelSpec::rbf_median(), est);
            CHECK(mmd_squared(c * X, c * Y, KernelSpec::rbf_median(), est) == doctest::Approx(base).epsilon(1e-9));
            CHECK(mmd_squared(Xs, Ys, KernelSpec::rbf_median(), est) == doctest::Approx(base).epsilon(1e-6));
            CHECK(mmd_squared(c * X, c * Y, KernelSpec::linear(), est) ==
                  doctest::Approx(c * c * mmd_squared(X, Y, KernelSpec::linear(), est)).epsilon(1e-9));
        }
        CHECK(mmd_squared(X, Y, KernelSpec::rbf_median(), Estimator::Biased) >= 0.0);
    }
}

TEST_CASE("input checks") {
    MatrixXd x = MatrixXd::Ones(3, 2), y = MatrixXd::Ones(3, 3);
    CHECK_THROWS_AS(mmd_squared(x, y, KernelSpec::linear(), Estimator::Biased), PreconditionError);
    CHECK_THROWS_AS(mmd_squared(MatrixXd(0, 2), x, KernelSpec::linear(), Estimator::Biased), PreconditionError);
    x(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(mmd_squared(x, x, KernelSpec::linear(), Estimator::Biased), PreconditionError);
    CHECK_THROWS_AS(mmd_squared(y, y, KernelSpec::rbf(0.0), Estimator::Biased), PreconditionError);
    CHECK(describe(parse_kernel("rbf", std::nullopt)) == "rbf(median)");
    CHECK(describe(parse_kernel("linear", std::nullopt)) == "linear");
    CHECK(parse_kernel("rbf", 2.0).bandwidth == 2.0);
    CHECK_THROWS_AS(parse_kernel("poly", std::nullopt), ConfigError);
    CHECK(parse_estimator("unbiased") == Estimator::Unbiased);
}

TEST_CASE("gap matrix layout and averages on synthetic sets") {
    std::mt19937 rng(77);
    std::vector<EmbeddingSet> sets;
    const std::array<double, 4> vshift{0.0, 0.8, 1.2, 1.6}, lshift{0.0, 0.1, 0.2, 0.3};
    for (std::size_t s = 0; s < 4; ++s) {
        sets.push_back(random_set(rng, kAllStyles[s], Modality::Visual, 15, 6, vshift[s]));
        sets.push_back(random_set(rng, kAllStyles[s], Modality::Linguistic, 15, 6, lshift[s]));
    }
    const auto kernel = KernelSpec::rbf_median();
    const auto g = gap_matrix(sets, kernel, Estimator::Biased);
    double vsum = 0.0, lsum = 0.0;
    for (Eigen::Index i = 0; i < 4; ++i) {
        for (Eigen::Index j = 0; j < 4; ++j) {
            if (i > j) {
                const double expect = mmd_squared(sets[static_cast<std::size_t>(2 * i)],
                                                  sets[static_cast<std::size_t>(2 * j)], kernel, Estimator::Biased);
                CHECK(g.visual(i, j) == expect);
                CHECK(g.linguistic(i, j) == 0.0);
                vsum += expect;
            } else if (i < j) {
                const double expect = mmd_squared(sets[static_cast<std::size_t>(2 * i + 1)],
                                                  sets[static_cast<std::size_t>(2 * j + 1)], kernel, Estimator::Biased);
                CHECK(g.linguistic(i, j) == expect);
                CHECK(g.visual(i, j) == 0.0);
                lsum += expect;
            }
        }
    }
    CHECK(g.visual_avg == doctest::Approx(vsum / 6));
    CHECK(g.linguistic_avg == doctest::Approx(lsum / 6));
    // Larger style shift, larger gap from the real domain.
    CHECK(g.visual(3, 0) > g.visual(1, 0));

    const auto j = to_json(g, kernel, Estimator::Biased);
    CHECK(j["domains"] == json{"real", "cartoon", "pencil", "oil"});
    CHECK(j["visual"][0][1].is_null());
    CHECK(j["visual"][2][2].is_null());
    CHECK(j["visual"][2][1].get<double>() == g.visual(2, 1));
    CHECK(j["linguistic"][1][2].get<double>() == g.linguistic(1, 2));
    CHECK(j["linguistic"][2][1].is_null());
    CHECK(j["kernel"] == "rbf(median)");
    const auto text = render_text(g);
    CHECK(text.find("visual (below diagonal) avg") != std::string::npos);

    sets.pop_back();
    CHECK_THROWS_AS(gap_matrix(sets, kernel, Estimator::Biased), PreconditionError);
    sets.push_back(sets.front());
    CHECK_THROWS_AS(gap_matrix(sets, kernel, Estimator::Biased), PreconditionError);
}

TEST_CASE("VLDG round trip and corruption") {
    std::mt19937 rng(2);
    const auto set = random_set(rng, Style::PencilDrawing, Modality::Linguistic, 7, 5, 0.0);
    const auto bytes = serialize_vldg(set);
    CHECK(bytes.size() > 14 + 7 * 5 * 4);
    const auto back = parse_vldg(bytes);
    CHECK(back.domain == Style::PencilDrawing);
    CHECK(back.modality == Modality::Linguistic);
    CHECK(back.ids == set.ids);
    CHECK(back.vectors.isApprox(set.vectors.cast<float>().cast<double>(), 0.0));
    CHECK(serialize_vldg(back) == bytes);

    auto expect_error = [](std::vector<std::uint8_t> data, const std::string& fragment) {
        try {
            parse_vldg(data, "f.vldg");
            FAIL("expected a validation error");
        } catch (const ValidationError& e) {
            CHECK_MESSAGE(std::string(e.what()).find(fragment) != std::string::npos, e.what());
        }
    };
    auto bad = bytes;
    bad[0] = 'X';
    expect_error(bad, "bad magic");
    expect_error({bytes.begin(), bytes.begin() + 9}, "truncated header");
    expect_error({bytes.begin(), bytes.begin() + 14 + 40}, "truncated payload");
    expect_error({bytes.begin(), bytes.begin() + 14 + 7 * 5 * 4}, "metadata block missing");
    bad = bytes;
    bad[4] = 2;
    expect_error(bad, "version 2");
    bad = bytes;
    const float nan = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(&bad[14 + (2 * 5 + 3) * 4], &nan, 4);
    expect_error(bad, "row 2, column 3");
    bad = {bytes.begin(), bytes.begin() + 14 + 7 * 5 * 4};
    const std::string meta = R"({"ids":["a"],"domain":"oil","modality":"visual"})";
    bad.insert(bad.end(), meta.begin(), meta.end());
    expect_error(bad, "1 ids for 7 rows");
    bad = {bytes.begin(), bytes.begin() + 14 + 7 * 5 * 4};
    const std::string junk = "{not json";
    bad.insert(bad.end(), junk.begin(), junk.end());
    expect_error(bad, "bad metadata");
}

TEST_CASE("checked-in fixtures load with 768 dimensions") {
    for (const auto* modality : {"visual", "linguistic"}) {
        const auto sets = read_vldg_dir(forge::testing::fixture_dir() / "vldg" / modality);
        REQUIRE(sets.size() == 4);
        for (const auto& s : sets) {
            CHECK(s.dim() == 768);
            CHECK(s.size() == 24);
            CHECK(to_string(s.modality) == modality);
            CHECK(std::abs(mmd_squared(s, s, KernelSpec::rbf_median(), Estimator::Biased)) <= 1e-9);
        }
    }
}

}
