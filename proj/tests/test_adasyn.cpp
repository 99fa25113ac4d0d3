#include "pdfuse/adasyn.hpp"
#include "pdfuse/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace pdfuse;
using namespace pdfuse::adasyn;

namespace {

FeatureMatrix matrix_1d(const std::vector<float>& xs, const std::vector<ClassLabel>& labels) {
    FeatureMatrix m;
    m.cols = 1;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        m.append_row(std::span<const float>(&xs[i], 1), labels[i]);
    }
    return m;
}

// two well-separated gaussian-ish clusters per class in 2-D
FeatureMatrix random_imbalanced(Rng& rng, const std::array<int, 3>& counts) {
    FeatureMatrix m;
    m.cols = 2;
    for (ClassLabel label : all_class_labels()) {
        const double cx = 10.0 * static_cast<int>(label);
        for (int i = 0; i < counts[static_cast<int>(label)]; ++i) {
            const float row[2] = {static_cast<float>(cx + rng.normal()),
                                  static_cast<float>(rng.normal())};
            m.append_row(row, label);
        }
    }
    return m;
}

} // namespace

TEST_CASE("knn by euclidean distance") {
    const auto m = matrix_1d({0, 1, 10}, {ClassLabel::HC, ClassLabel::HC, ClassLabel::HC});

    CHECK(knn_indices(m, 0, 1) == std::vector<std::size_t>{1});
    CHECK(knn_indices(m, 1, 2) == std::vector<std::size_t>{0, 2});

    SUBCASE("equidistant neighbors tie-break by ascending row index") {
        // query row 2 (value 3): rows 0 and 5 are both at distance 2; lower index wins
        const auto v = matrix_1d({1, 9, 3, 9, 9, 1},
                                 std::vector<ClassLabel>(6, ClassLabel::HC));
        CHECK(knn_indices(v, 2, 1) == std::vector<std::size_t>{0});
        CHECK(knn_indices(v, 2, 2) == std::vector<std::size_t>{0, 5});
    }

    SUBCASE("k must be smaller than the row count") {
        CHECK_THROWS_WITH_AS(knn_indices(m, 0, 3), doctest::Contains("smaller"),
                             std::runtime_error);
    }
}

TEST_CASE("adasyn plan") {
    SUBCASE("G follows (m_maj - m_min) * beta") {
        Rng rng(11);
        FeatureMatrix m;
        m.cols = 1;
        for (int i = 0; i < 100; ++i) {
            const float v = static_cast<float>(rng.normal());
            m.append_row(std::span<const float>(&v, 1), ClassLabel::PD);
        }
        for (int i = 0; i < 40; ++i) {
            const float v = static_cast<float>(5.0 + rng.normal());
            m.append_row(std::span<const float>(&v, 1), ClassLabel::HC);
        }
        AdasynConfig cfg;
        cfg.k = 5;
        cfg.beta = 1.0;
        const auto plan = adasyn_plan(m, ClassLabel::HC, 100, cfg);
        CHECK(plan.total == 60);
        CHECK(std::accumulate(plan.counts.begin(), plan.counts.end(), std::size_t{0}) == 60);

        cfg.beta = 0.5;
        CHECK(adasyn_plan(m, ClassLabel::HC, 100, cfg).total == 30);
    }

    SUBCASE("r_i counts foreign neighbors over k") {
        // minority row 0 at x=0; neighbors at 1,2,3 are majority, 4,5 minority
        const auto m = matrix_1d({0.0f, 0.5f, 0.6f, 0.7f, 0.9f, 1.1f, 50.0f},
                                 {ClassLabel::HC, ClassLabel::PD, ClassLabel::PD, ClassLabel::PD,
                                  ClassLabel::HC, ClassLabel::HC, ClassLabel::PD});
        AdasynConfig cfg;
        cfg.k = 5;
        const auto plan = adasyn_plan(m, ClassLabel::HC, 4, cfg);
        REQUIRE(plan.minority_rows == std::vector<std::size_t>{0, 4, 5});
        CHECK(plan.ratio[0] == doctest::Approx(0.6)); // 3 of 5 nearest are PD
    }

    SUBCASE("largest-remainder apportionment, oracle example") {
        CHECK(largest_remainder_apportion({0.6, 0.2, 0.2}, 10) ==
              std::vector<std::size_t>{6, 2, 2});
        CHECK(largest_remainder_apportion({0.5, 0.25, 0.25}, 2) ==
              std::vector<std::size_t>{1, 1, 0}); // frac tie broken by lower index
    }

    SUBCASE("apportionment sums exactly for random shares") {
        Rng rng(77);
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t n = 1 + rng.next_below(12);
            std::vector<double> shares(n);
            double sum = 0.0;
            for (double& s : shares) {
                s = rng.next_double();
                sum += s;
            }
            for (double& s : shares) s /= sum;
            const std::size_t total = rng.next_below(500);
            const auto counts = largest_remainder_apportion(shares, total);
            CHECK(std::accumulate(counts.begin(), counts.end(), std::size_t{0}) == total);
        }
    }

    SUBCASE("errors") {
        const auto m = matrix_1d({0, 1, 2}, {ClassLabel::HC, ClassLabel::PD, ClassLabel::PD});
        AdasynConfig cfg;
        cfg.k = 1;
        CHECK_THROWS_WITH_AS(adasyn_plan(m, ClassLabel::SWEDD, 2, cfg),
                             doctest::Contains("no samples"), std::runtime_error);
        CHECK_THROWS_WITH_AS(adasyn_plan(m, ClassLabel::PD, 1, cfg),
                             doctest::Contains("larger than the majority"), std::runtime_error);
    }
}

TEST_CASE("interpolation endpoints and midpoint") {
    const std::vector<float> a = {0, 0};
    const std::vector<float> b = {2, 4};
    CHECK(interpolate_row(a, b, 0.0) == std::vector<float>{0, 0});
    CHECK(interpolate_row(a, b, 1.0) == std::vector<float>{2, 4});
    CHECK(interpolate_row(a, b, 0.5) == std::vector<float>{1, 2});
}

TEST_CASE("adasyn generation") {
    Rng rng(42);
    const auto m = random_imbalanced(rng, {8, 30, 20});
    AdasynConfig cfg;
    cfg.k = 5;
    cfg.beta = 1.0;
    cfg.seed = 9;

    const auto plan = adasyn_plan(m, ClassLabel::HC, 30, cfg);
    const auto synth = adasyn_generate(m, plan, cfg);
    REQUIRE(synth.rows.rows == plan.total);

    SUBCASE("synthetic rows stay within the componentwise bounds of their class") {
        // every synthetic point is a convex combination of two HC rows
        std::vector<float> lo(m.cols, 1e30f), hi(m.cols, -1e30f);
        for (std::size_t r = 0; r < m.rows; ++r) {
            if (m.labels[r] != ClassLabel::HC) continue;
            for (std::size_t c = 0; c < m.cols; ++c) {
                lo[c] = std::min(lo[c], m.row(r)[c]);
                hi[c] = std::max(hi[c], m.row(r)[c]);
            }
        }
        for (std::size_t r = 0; r < synth.rows.rows; ++r) {
            CHECK(synth.rows.labels[r] == ClassLabel::HC);
            for (std::size_t c = 0; c < m.cols; ++c) {
                CHECK(synth.rows.row(r)[c] >= lo[c]);
                CHECK(synth.rows.row(r)[c] <= hi[c]);
            }
        }
    }

    SUBCASE("same seed reproduces the set; different seed differs but keeps counts") {
        const auto again = adasyn_generate(m, plan, cfg);
        CHECK(again.rows.values == synth.rows.values);

        AdasynConfig other = cfg;
        other.seed = 10;
        const auto different = adasyn_generate(m, plan, other);
        CHECK(different.rows.rows == synth.rows.rows); // plan is seed-independent
        CHECK(different.rows.values != synth.rows.values);
    }
}

TEST_CASE("multiclass balancing") {
    SUBCASE("counts (29,141,54) reach (141,141,141) at beta=1") {
        Rng rng(5);
        const auto m = random_imbalanced(rng, {29, 141, 54});
        AdasynConfig cfg;
        cfg.k = 7;
        cfg.beta = 1.0;
        const auto result = balance_multiclass(m, cfg);
        CHECK(result.balanced.class_counts() ==
              std::array<std::size_t, 3>{141, 141, 141});
        CHECK(result.synthesized == (141 - 29) + (141 - 54));
    }

    SUBCASE("already balanced data is untouched") {
        Rng rng(6);
        const auto m = random_imbalanced(rng, {10, 10, 10});
        AdasynConfig cfg;
        cfg.k = 3;
        const auto result = balance_multiclass(m, cfg);
        CHECK(result.synthesized == 0);
        CHECK(result.balanced.rows == m.rows);
    }

    SUBCASE("two-class beta=0.5 grows the minority by round(15*0.5)") {
        Rng rng(7);
        FeatureMatrix m;
        m.cols = 2;
        for (int i = 0; i < 5; ++i) {
            const float row[2] = {static_cast<float>(rng.normal()),
                                  static_cast<float>(rng.normal())};
            m.append_row(row, ClassLabel::HC);
        }
        for (int i = 0; i < 20; ++i) {
            const float row[2] = {static_cast<float>(8 + rng.normal()),
                                  static_cast<float>(rng.normal())};
            m.append_row(row, ClassLabel::PD);
        }
        AdasynConfig cfg;
        cfg.k = 4;
        cfg.beta = 0.5;
        const auto result = balance_multiclass(m, cfg);
        CHECK(result.balanced.class_counts()[0] == 5 + 8);
    }

    SUBCASE("beta=1 equalizes 100 random imbalanced instances") {
        Rng rng(2025);
        for (int trial = 0; trial < 100; ++trial) {
            const std::array<int, 3> counts = {static_cast<int>(2 + rng.next_below(30)),
                                               static_cast<int>(2 + rng.next_below(30)),
                                               static_cast<int>(2 + rng.next_below(30))};
            const auto m = random_imbalanced(rng, counts);
            AdasynConfig cfg;
            cfg.k = 1 + static_cast<int>(rng.next_below(8));
            cfg.beta = 1.0;
            cfg.seed = rng.next_u64();
            const auto result = balance_multiclass(m, cfg);
            const auto final_counts = result.balanced.class_counts();
            const std::size_t majority =
                *std::max_element(final_counts.begin(), final_counts.end());
            CHECK(final_counts == std::array<std::size_t, 3>{majority, majority, majority});
        }
    }

    SUBCASE("k larger than the data is clamped") {
        Rng rng(8);
        const auto m = random_imbalanced(rng, {3, 6, 4});
        AdasynConfig cfg;
        cfg.k = 50;
        const auto result = balance_multiclass(m, cfg);
        CHECK(result.k_clamped);
        const auto final_counts = result.balanced.class_counts();
        CHECK(final_counts == std::array<std::size_t, 3>{6, 6, 6});
    }
}

TEST_CASE("adaptivity: harder neighborhoods receive at least as many synthetics") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const auto m = random_imbalanced(rng, {10, 40, 15});
        AdasynConfig cfg;
        cfg.k = 6;
        cfg.beta = 1.0;
        const auto plan = adasyn_plan(m, ClassLabel::HC, 40, cfg);
        for (std::size_t a = 0; a < plan.ratio.size(); ++a) {
            for (std::size_t b = 0; b < plan.ratio.size(); ++b) {
                if (plan.ratio[a] > plan.ratio[b]) {
                    CHECK(plan.counts[a] >= plan.counts[b]);
                }
            }
        }
    }
}

TEST_CASE("single-sample minority duplicates with a warning counter") {
    const auto m = matrix_1d({0.0f, 5.0f, 6.0f, 7.0f},
                             {ClassLabel::HC, ClassLabel::PD, ClassLabel::PD, ClassLabel::PD});
    AdasynConfig cfg;
    cfg.k = 2;
    cfg.beta = 1.0;
    const auto plan = adasyn_plan(m, ClassLabel::HC, 3, cfg);
    const auto synth = adasyn_generate(m, plan, cfg);
    CHECK(synth.rows.rows == 2);
    CHECK(synth.lone_duplicates == 2);
    for (std::size_t r = 0; r < synth.rows.rows; ++r) {
        CHECK(synth.rows.row(r)[0] == 0.0f);
    }
}

TEST_CASE("uniform fallback when every minority neighborhood is pure") {
    // minority tightly clustered and far from the majority: all r_i = 0
    const auto m = matrix_1d({0.0f, 0.1f, 0.2f, 100.0f, 101.0f, 102.0f, 103.0f, 104.0f},
                             {ClassLabel::HC, ClassLabel::HC, ClassLabel::HC, ClassLabel::PD,
                              ClassLabel::PD, ClassLabel::PD, ClassLabel::PD, ClassLabel::PD});
    AdasynConfig cfg;
    cfg.k = 2;
    cfg.beta = 1.0;
    const auto plan = adasyn_plan(m, ClassLabel::HC, 5, cfg);
    CHECK(plan.total == 2);
    for (double r : plan.ratio) CHECK(r == 0.0);
    for (double rn : plan.ratio_norm) CHECK(rn == doctest::Approx(1.0 / 3.0));
    CHECK(std::accumulate(plan.counts.begin(), plan.counts.end(), std::size_t{0}) == 2);
}
