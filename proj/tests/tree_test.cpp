#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "emma/learning/tree.hpp"
#include "test_util.hpp"
#include "tree_oracle.hpp"

using namespace emma;
using testutil::oracle_tree;
using testutil::random_matrix;

namespace {

void expect_same_tree(const Tree& tree, const std::vector<TreeNode>& oracle) {
    ASSERT_EQ(tree.nodes.size(), oracle.size());
    for (std::size_t i = 0; i < oracle.size(); ++i) {
        const TreeNode& a = tree.nodes[i];
        const TreeNode& b = oracle[i];
        ASSERT_EQ(a.feature, b.feature) << "node " << i;
        ASSERT_EQ(a.left, b.left) << "node " << i;
        ASSERT_EQ(a.right, b.right) << "node " << i;
        if (!a.is_leaf()) {
            ASSERT_EQ(a.threshold, b.threshold) << "node " << i;
        }
        ASSERT_NEAR(a.value, b.value, 1e-12) << "node " << i;
        ASSERT_EQ(a.class_counts, b.class_counts) << "node " << i;
    }
}

} // namespace

TEST(Tree, RegressionMatchesBruteForceOracle) {
    testutil::Gen gen(101);
    for (int trial = 0; trial < 150; ++trial) {
        const std::size_t n = static_cast<std::size_t>(gen.integer(2, 45));
        const std::size_t d = static_cast<std::size_t>(gen.integer(1, 7));
        const FeatureMatrix x = random_matrix(gen, n, d);
        std::vector<double> y(n);
        for (auto& v : y) v = gen.coin(0.2) ? std::round(gen.real(0, 3)) : gen.real(0, 1);
        std::vector<std::size_t> sample(n);
        for (auto& s : sample) s = static_cast<std::size_t>(gen.integer(0, static_cast<int>(n) - 1));
        TreeParams params;
        params.min_leaf = static_cast<std::size_t>(gen.integer(1, 4));
        params.max_depth = gen.coin(0.3) ? std::nullopt : std::optional<std::size_t>(gen.integer(0, 5));
        const Tree tree = fit_tree(x, y, Task::regression, params, sample);
        SCOPED_TRACE(trial);
        expect_same_tree(tree, oracle_tree(x, y, Task::regression, params, sample));
    }
}

TEST(Tree, ClassificationMatchesBruteForceOracle) {
    testutil::Gen gen(202);
    for (int trial = 0; trial < 150; ++trial) {
        const std::size_t n = static_cast<std::size_t>(gen.integer(2, 45));
        const std::size_t d = static_cast<std::size_t>(gen.integer(1, 7));
        const FeatureMatrix x = random_matrix(gen, n, d);
        const int k = gen.coin(0.7) ? 1 : 2;  // two or three classes
        std::vector<double> y(n);
        for (auto& v : y) v = gen.integer(0, k);
        std::vector<std::size_t> sample(n);
        for (auto& s : sample) s = static_cast<std::size_t>(gen.integer(0, static_cast<int>(n) - 1));
        TreeParams params;
        params.min_leaf = static_cast<std::size_t>(gen.integer(1, 4));
        params.max_depth = gen.coin(0.3) ? std::nullopt : std::optional<std::size_t>(gen.integer(0, 5));
        const Tree tree = fit_tree(x, y, Task::classification, params, sample, nullptr, class_count_of(y));
        SCOPED_TRACE(trial);
        expect_same_tree(tree, oracle_tree(x, y, Task::classification, params, sample));
    }
}

TEST(Tree, SharedPresortMatchesLocalPresort) {
    testutil::Gen gen(7);
    const FeatureMatrix x = random_matrix(gen, 60, 9);
    std::vector<double> y(60);
    for (auto& v : y) v = gen.unit();
    const PresortedColumns presorted(x);
    for (int t = 0; t < 10; ++t) {
        std::vector<std::size_t> sample(60);
        for (auto& s : sample) s = static_cast<std::size_t>(gen.integer(0, 59));
        EXPECT_EQ(fit_tree(x, y, Task::regression, {}, sample, nullptr, 0, &presorted),
                  fit_tree(x, y, Task::regression, {}, sample));
    }
}

TEST(Tree, StoppingRules) {
    const FeatureMatrix x = FeatureMatrix::from_rows({{0}, {1}, {2}, {3}, {4}, {5}});
    const std::vector<double> y{0, 0, 0, 1, 1, 1};
    EXPECT_EQ(fit_tree(x, y, Task::regression, {0, 1, 0}).nodes.size(), 1u);  // depth 0
    EXPECT_EQ(fit_tree(x, y, Task::regression, {8, 4, 0}).nodes.size(), 1u);  // fewer than 2 * min_leaf
    const Tree split = fit_tree(x, y, Task::regression, {8, 3, 0});
    ASSERT_EQ(split.nodes.size(), 3u);
    EXPECT_EQ(split.nodes[0].threshold, 2.5);
    EXPECT_EQ(split.predict(std::vector<double>{1.0}), 0.0);
    EXPECT_EQ(split.predict(std::vector<double>{2.5}), 0.0);  // <= threshold goes left
    EXPECT_EQ(split.predict(std::vector<double>{2.6}), 1.0);
    const std::vector<double> flat(6, 0.25);
    EXPECT_EQ(fit_tree(x, flat, Task::regression, {8, 1, 0}).nodes.size(), 1u);  // pure
}

TEST(Tree, FirstFeatureWinsTies) {
    // Columns 0 and 1 induce the same partition.
    const FeatureMatrix x = FeatureMatrix::from_rows({{0, 5}, {0, 5}, {1, 9}, {1, 9}});
    const std::vector<double> y{0.1, 0.2, 0.8, 0.9};
    const Tree t = fit_tree(x, y, Task::regression, {8, 1, 0});
    EXPECT_EQ(t.nodes[0].feature, 0);
    EXPECT_EQ(t.nodes[0].threshold, 0.5);
}

TEST(Tree, RegressionPredictionsStayInTargetRange) {
    testutil::Gen gen(9);
    for (int trial = 0; trial < 50; ++trial) {
        const FeatureMatrix x = random_matrix(gen, 40, 5);
        std::vector<double> y(40);
        for (auto& v : y) v = gen.real(-3, 7);
        const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
        const Tree t = fit_tree(x, y, Task::regression, {std::nullopt, 1, 0});
        for (int i = 0; i < 50; ++i) {
            std::vector<double> q(5);
            for (auto& v : q) v = gen.real(-2, 5);
            const double p = t.predict(q);
            ASSERT_GE(p, *lo);
            ASSERT_LE(p, *hi);
        }
    }
}

TEST(Tree, Gini) {
    EXPECT_DOUBLE_EQ(gini_impurity(std::vector<double>{5, 5}), 0.5);
    EXPECT_DOUBLE_EQ(gini_impurity(std::vector<double>{4, 0}), 0.0);
    EXPECT_DOUBLE_EQ(gini_impurity(std::vector<double>{1, 1, 1, 1}), 0.75);
    EXPECT_EQ(gini_impurity(std::vector<double>{0, 0}), 0.0);
}

TEST(Tree, RejectsBadInput) {
    const FeatureMatrix x = FeatureMatrix::from_rows({{0}, {1}});
    EXPECT_THROW(fit_tree(x, std::vector<double>{0.0}, Task::regression), TrainingError);
    EXPECT_THROW(fit_tree(x, std::vector<double>{0.5, 1.0}, Task::classification), TrainingError);
    EXPECT_THROW(fit_tree(FeatureMatrix{}, std::vector<double>{}, Task::regression), TrainingError);
    EXPECT_THROW(FeatureMatrix::from_rows({{0, 1}, {1}}), TrainingError);
}
