#pragma once

// Greedy CART trees. Classification trees minimize weighted Gini impurity of
// the children, regression trees the weighted child variance. A node becomes
// a leaf when it is pure, holds fewer than 2 * min_leaf rows, sits at
// max_depth, or admits no split leaving min_leaf rows on each side.
//
// Thresholds are midpoints between consecutive distinct feature values;
// rows with x[feature] <= threshold go left. Among equally good splits the
// first one in (feature order, ascending threshold) wins.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "emma/errors.hpp"
#include "emma/random.hpp"

namespace emma {

enum class Task { regression, classification };

// Dense row-major feature matrix.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    FeatureMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}
    FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
        : rows_(rows), cols_(cols), values_(std::move(values)) {
        if (values_.size() != rows_ * cols_) {
            throw TrainingError("feature matrix size mismatch");
        }
    }

    static FeatureMatrix from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) {
            return {};
        }
        FeatureMatrix m(rows.size(), rows.front().size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != m.cols_) {
                throw TrainingError("rows differ in feature length");
            }
            std::copy(rows[i].begin(), rows[i].end(), m.values_.begin() + static_cast<std::ptrdiff_t>(i * m.cols_));
        }
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
    std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

struct TreeParams {
    std::optional<std::size_t> max_depth = 8;  // nullopt = unlimited
    std::size_t min_leaf = 5;
    // Features examined per split; 0 means all of them.
    std::size_t max_features = 0;
};

struct TreeNode {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    // Regression: mean target. Classification: majority class id.
    double value = 0.0;
    // Classification only: per-class row counts at this node.
    std::vector<double> class_counts;

    bool is_leaf() const { return feature < 0; }

    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

// Nodes are stored in preorder; node 0 is the root.
struct Tree {
    Task task = Task::regression;
    std::size_t n_classes = 0;
    std::vector<TreeNode> nodes;

    const TreeNode& leaf_for(std::span<const double> x) const {
        std::size_t i = 0;
        while (!nodes[i].is_leaf()) {
            const TreeNode& n = nodes[i];
            i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
        }
        return nodes[i];
    }

    double predict(std::span<const double> x) const { return leaf_for(x).value; }

    std::size_t depth() const {
        if (nodes.empty()) {
            return 0;
        }
        std::vector<std::size_t> level(nodes.size(), 0);
        std::size_t deepest = 0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            deepest = std::max(deepest, level[i]);
            if (!nodes[i].is_leaf()) {
                level[static_cast<std::size_t>(nodes[i].left)] = level[i] + 1;
                level[static_cast<std::size_t>(nodes[i].right)] = level[i] + 1;
            }
        }
        return deepest;
    }

    friend bool operator==(const Tree&, const Tree&) = default;
};

inline double gini_impurity(std::span<const double> class_counts) {
    double total = 0.0;
    for (const double c : class_counts) total += c;
    if (total <= 0.0) {
        return 0.0;
    }
    double sum_sq = 0.0;
    for (const double c : class_counts) {
        const double p = c / total;
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

inline std::size_t class_count_of(std::span<const double> y) {
    std::size_t k = 0;
    for (const double v : y) {
        if (v < 0.0 || v != std::floor(v)) {
            throw TrainingError("classification targets must be non-negative integers");
        }
        k = std::max(k, static_cast<std::size_t>(v) + 1);
    }
    return std::max<std::size_t>(k, 2);
}

// Row ids of a matrix sorted per feature by (value, row id). Computing it once
// per matrix lets every tree of an ensemble skip its own sorting. Columns with
// at most two distinct values (one-hot blocks) need no ordering and get none.
struct PresortedColumns {
    enum class Shape : std::uint8_t { constant, two_valued, general };

    std::vector<std::vector<std::uint32_t>> order;
    std::vector<double> columns;  // column-major copy of the matrix
    std::vector<Shape> shape;
    std::vector<double> low;  // two-valued columns: the smaller value
    std::vector<double> high;
    // Per row, the two-valued columns holding their larger value (CSR).
    std::vector<std::uint32_t> high_start;
    std::vector<std::uint32_t> high_features;
    std::size_t rows = 0;

    explicit PresortedColumns(const FeatureMatrix& x)
        : order(x.cols()),
          columns(x.rows() * x.cols()),
          shape(x.cols(), Shape::general),
          low(x.cols(), 0.0),
          high(x.cols(), 0.0),
          rows(x.rows()) {
        for (std::size_t r = 0; r < x.rows(); ++r) {
            for (std::size_t f = 0; f < x.cols(); ++f) columns[f * rows + r] = x(r, f);
        }
        std::vector<std::uint32_t> ids(x.rows());
        std::iota(ids.begin(), ids.end(), std::uint32_t{0});
        for (std::size_t f = 0; f < x.cols(); ++f) {
            const double* col = columns.data() + f * rows;
            std::optional<double> a, b;
            bool more = false;
            for (std::size_t r = 0; r < rows && !more; ++r) {
                if (!a || col[r] == *a) {
                    a = col[r];
                } else if (!b || col[r] == *b) {
                    b = col[r];
                } else {
                    more = true;
                }
            }
            if (!more) {
                shape[f] = b ? Shape::two_valued : Shape::constant;
                if (a) low[f] = high[f] = *a;
                if (b) {
                    low[f] = std::min(*a, *b);
                    high[f] = std::max(*a, *b);
                }
                continue;
            }
            order[f] = ids;
            std::stable_sort(order[f].begin(), order[f].end(),
                             [&](std::uint32_t i, std::uint32_t j) { return col[i] < col[j]; });
        }
        high_start.assign(rows + 1, 0);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t f = 0; f < x.cols(); ++f) {
                if (shape[f] == Shape::two_valued && x(r, f) == high[f]) {
                    high_features.push_back(static_cast<std::uint32_t>(f));
                }
            }
            high_start[r + 1] = static_cast<std::uint32_t>(high_features.size());
        }
    }
};

namespace detail {

inline bool score_improves(double candidate, double best) {
    if (!std::isfinite(best)) return true;
    return candidate < best - 1e-12 * std::max(1.0, std::fabs(best));
}

inline double split_threshold(double lo, double hi) {
    const double mid = lo + (hi - lo) / 2.0;
    return (mid >= hi) ? lo : mid;
}

class TreeBuilder {
public:
    TreeBuilder(const FeatureMatrix& x, std::span<const double> y, Task task, std::size_t n_classes,
                const TreeParams& params, Rng* rng)
        : x_(x), y_(y), task_(task), n_classes_(n_classes), params_(params), rng_(rng) {}

    // Rows drawn several times are kept once with their draw count as weight;
    // every count and sum below is over draws, as if the copies were present.
    Tree build(std::span<const std::size_t> sample, const PresortedColumns* presorted = nullptr) {
        if (sample.empty()) {
            throw TrainingError("cannot fit a tree on zero rows");
        }
        const std::size_t d = x_.cols();
        std::optional<PresortedColumns> local;
        if (presorted == nullptr) local.emplace(x_);
        const PresortedColumns& sorted = presorted ? *presorted : *local;
        sorted_ = &sorted;
        if (sorted.order.size() != d || sorted.rows != x_.rows()) {
            throw TrainingError("presorted columns do not match the feature matrix");
        }
        weight_.assign(x_.rows(), 0.0);
        for (const std::size_t r : sample) {
            if (r >= x_.rows()) throw TrainingError("sample row out of range");
            weight_[r] += 1.0;
        }
        rows_.clear();
        for (std::size_t r = 0; r < x_.rows(); ++r) {
            if (weight_[r] > 0.0) rows_.push_back(static_cast<std::uint32_t>(r));
        }
        const std::size_t m = rows_.size();
        // Per-feature orderings of the drawn rows, sorted by value then row id.
        order_.resize(d);
        for (std::size_t f = 0; f < d; ++f) {
            auto& ord = order_[f];
            ord.clear();
            if (sorted.shape[f] != PresortedColumns::Shape::general) continue;
            ord.reserve(m);
            for (const std::uint32_t r : sorted.order[f]) {
                if (weight_[r] > 0.0) ord.push_back(r);
            }
        }
        scratch_.resize(m);
        goes_left_.assign(x_.rows(), 0);
        feature_pool_.resize(d);
        live_mark_.assign(d, 0);
        tree_.task = task_;
        tree_.n_classes = task_ == Task::classification ? n_classes_ : 0;
        tree_.nodes.clear();
        live_pool_.clear();
        std::vector<std::uint32_t> all;
        for (std::size_t f = 0; f < d; ++f) {
            if (sorted.shape[f] != PresortedColumns::Shape::constant) all.push_back(static_cast<std::uint32_t>(f));
        }
        grow(0, m, 0, all);
        return std::move(tree_);
    }

private:
    struct Split {
        std::size_t feature = 0;
        double threshold = 0.0;
        double score = std::numeric_limits<double>::infinity();
        bool found = false;
    };

    // Weighted totals of the rows in a node.
    struct NodeStats {
        double weight = 0.0;
        double sum = 0.0;
        double sum_sq = 0.0;
        std::vector<double> counts;  // classification only
    };

    NodeStats node_stats(std::size_t begin, std::size_t end) const {
        NodeStats st;
        if (task_ == Task::classification) st.counts.assign(n_classes_, 0.0);
        for (std::size_t i = begin; i < end; ++i) {
            const std::uint32_t r = rows_[i];
            const double w = weight_[r];
            const double v = y_[r];
            st.weight += w;
            if (task_ == Task::classification) {
                st.counts[static_cast<std::size_t>(v)] += w;
            } else {
                st.sum += w * v;
                st.sum_sq += w * v * v;
            }
        }
        return st;
    }

    // `candidates` lists the features that were not constant in the parent;
    // orderings of the others are stale inside this subtree and never read.
    std::int32_t grow(std::size_t begin, std::size_t end, std::size_t depth,
                      const std::vector<std::uint32_t>& candidates) {
        const auto index = static_cast<std::int32_t>(tree_.nodes.size());
        tree_.nodes.emplace_back();

        bool pure = true;
        const double first = y_[rows_[begin]];
        for (std::size_t i = begin; i < end; ++i) {
            if (y_[rows_[i]] != first) {
                pure = false;
                break;
            }
        }
        const NodeStats st = node_stats(begin, end);
        set_leaf_value(tree_.nodes[static_cast<std::size_t>(index)], st, first, pure);

        const bool depth_capped = params_.max_depth && depth >= *params_.max_depth;
        const double min_leaf = static_cast<double>(std::max<std::size_t>(1, params_.min_leaf));
        if (pure || st.weight < 2.0 * min_leaf || depth_capped) {
            return index;
        }
        if (live_pool_.size() <= depth) live_pool_.resize(depth + 1);
        std::vector<std::uint32_t>& live = live_pool_[depth];
        const Split split = best_split(begin, end, candidates, st, live);
        if (!split.found) {
            return index;
        }
        const std::size_t n_left = partition(begin, end, split, live);
        {
            TreeNode& node = tree_.nodes[static_cast<std::size_t>(index)];
            node.feature = static_cast<std::int32_t>(split.feature);
            node.threshold = split.threshold;
        }
        const std::int32_t left = grow(begin, begin + n_left, depth + 1, live);
        const std::int32_t right = grow(begin + n_left, end, depth + 1, live);
        tree_.nodes[static_cast<std::size_t>(index)].left = left;
        tree_.nodes[static_cast<std::size_t>(index)].right = right;
        return index;
    }

    void set_leaf_value(TreeNode& node, const NodeStats& st, double first, bool pure) const {
        if (task_ == Task::classification) {
            node.class_counts = st.counts;
            std::size_t best = 0;
            for (std::size_t c = 1; c < n_classes_; ++c) {
                if (node.class_counts[c] > node.class_counts[best]) best = c;
            }
            node.value = static_cast<double>(best);
            return;
        }
        node.value = pure ? first : st.sum / st.weight;
    }

    bool is_general(std::size_t f) const { return sorted_->shape[f] == PresortedColumns::Shape::general; }

    // Scans one feature; false when it is constant in the node.
    bool scan(std::size_t f, std::size_t begin, std::size_t end, const NodeStats& st, Split& best) {
        if (is_general(f)) {
            const auto& ord = order_[f];
            const double* col = column(f);
            if (col[ord[begin]] == col[ord[end - 1]]) return false;
            scan_feature(f, begin, end, st, best);
            return true;
        }
        return scan_two_valued(f, st, best);
    }

    // Features constant in the node are skipped and do not count toward the
    // max_features budget. `live` receives the candidates that may still vary
    // below this node.
    Split best_split(std::size_t begin, std::size_t end, const std::vector<std::uint32_t>& candidates,
                     const NodeStats& st, std::vector<std::uint32_t>& live) {
        const std::size_t d = x_.cols();
        const bool subsample = params_.max_features > 0 && params_.max_features < d && rng_ != nullptr;
        Split best;
        live.clear();
        tally_high_values(begin, end);
        if (!subsample) {
            for (const std::uint32_t f : candidates) {
                if (scan(f, begin, end, st, best)) live.push_back(f);
            }
            return best;
        }
        std::iota(feature_pool_.begin(), feature_pool_.end(), std::size_t{0});
        rng_->shuffle(std::span<std::size_t>(feature_pool_));
        // 1 = candidate not yet scanned, 2 = scanned and varying, 0 otherwise.
        for (const std::uint32_t f : candidates) live_mark_[f] = 1;
        std::size_t examined = 0;
        for (const std::size_t f : feature_pool_) {
            if (examined >= params_.max_features) {
                break;
            }
            if (live_mark_[f] != 1) {
                continue;
            }
            if (scan(f, begin, end, st, best)) {
                live_mark_[f] = 2;
                ++examined;
            } else {
                live_mark_[f] = 0;
            }
        }
        for (const std::uint32_t f : candidates) {
            if (live_mark_[f] == 2 || (live_mark_[f] == 1 && !(is_general(f) && constant_in(f, begin, end)))) {
                live.push_back(f);
            }
            live_mark_[f] = 0;
        }
        return best;
    }

    bool constant_in(std::size_t f, std::size_t begin, std::size_t end) const {
        const double* col = column(f);
        return col[order_[f][begin]] == col[order_[f][end - 1]];
    }

    // Weighted totals of the rows holding the larger value, for every
    // two-valued column at once.
    void tally_high_values(std::size_t begin, std::size_t end) {
        const std::size_t d = x_.cols();
        const std::size_t k = task_ == Task::classification ? n_classes_ : 0;
        high_weight_.assign(d, 0.0);
        high_sum_.assign(d, 0.0);
        high_sq_.assign(d, 0.0);
        high_counts_.assign(d * k, 0.0);
        for (std::size_t i = begin; i < end; ++i) {
            const std::uint32_t r = rows_[i];
            const double w = weight_[r];
            const double v = y_[r];
            for (std::uint32_t j = sorted_->high_start[r]; j < sorted_->high_start[r + 1]; ++j) {
                const std::uint32_t f = sorted_->high_features[j];
                high_weight_[f] += w;
                if (k > 0) {
                    high_counts_[f * k + static_cast<std::size_t>(v)] += w;
                } else {
                    high_sum_[f] += w * v;
                    high_sq_[f] += w * v * v;
                }
            }
        }
    }

    // A two-valued column has one possible threshold; the left side is every
    // row holding the smaller value. Needs tally_high_values for the node.
    bool scan_two_valued(std::size_t f, const NodeStats& st, Split& best) {
        const double min_leaf = static_cast<double>(std::max<std::size_t>(1, params_.min_leaf));
        const double total = st.weight;
        const double nr = high_weight_[f];
        const double nl = total - nr;
        if (nl <= 0.0 || nr <= 0.0) return false;
        if (nl < min_leaf || nr < min_leaf) return true;
        double score = 0.0;
        if (task_ == Task::classification) {
            right_counts_.assign(high_counts_.begin() + static_cast<std::ptrdiff_t>(f * n_classes_),
                                 high_counts_.begin() + static_cast<std::ptrdiff_t>((f + 1) * n_classes_));
            left_counts_ = st.counts;
            for (std::size_t c = 0; c < n_classes_; ++c) left_counts_[c] -= right_counts_[c];
            score = (nl * gini_impurity(left_counts_) + nr * gini_impurity(right_counts_)) / total;
        } else {
            const double sum_right = high_sum_[f];
            const double sq_right = high_sq_[f];
            const double sum_left = st.sum - sum_right;
            const double sq_left = st.sum_sq - sq_right;
            const double sse_left = std::max(0.0, sq_left - sum_left * sum_left / nl);
            const double sse_right = std::max(0.0, sq_right - sum_right * sum_right / nr);
            score = (sse_left + sse_right) / total;
        }
        if (score_improves(score, best.score)) {
            best = {f, split_threshold(sorted_->low[f], sorted_->high[f]), score, true};
        }
        return true;
    }

    const double* column(std::size_t f) const { return sorted_->columns.data() + f * sorted_->rows; }

    void scan_feature(std::size_t f, std::size_t begin, std::size_t end, const NodeStats& st, Split& best) {
        const auto& ord = order_[f];
        const double* col = column(f);
        const double min_leaf = static_cast<double>(std::max<std::size_t>(1, params_.min_leaf));
        const double total = st.weight;
        if (task_ == Task::classification && n_classes_ == 2) {
            // Two classes: Gini of a side with counts (a, b) is 2ab / (a + b)^2.
            double l0 = 0.0, l1 = 0.0;
            for (std::size_t i = begin; i + 1 < end; ++i) {
                const std::uint32_t r = ord[i];
                (y_[r] == 0.0 ? l0 : l1) += weight_[r];
                const double lo = col[r];
                const double hi = col[ord[i + 1]];
                const double nl = l0 + l1;
                const double nr = total - nl;
                if (lo == hi || nl < min_leaf || nr < min_leaf) {
                    continue;
                }
                const double r0 = st.counts[0] - l0;
                const double r1 = st.counts[1] - l1;
                const double score = (2.0 * l0 * l1 / nl + 2.0 * r0 * r1 / nr) / total;
                if (score_improves(score, best.score)) {
                    best = {f, split_threshold(lo, hi), score, true};
                }
            }
            return;
        }
        if (task_ == Task::classification) {
            left_counts_.assign(n_classes_, 0.0);
            right_counts_ = st.counts;
            double nl = 0.0;
            for (std::size_t i = begin; i + 1 < end; ++i) {
                const std::uint32_t r = ord[i];
                const auto c = static_cast<std::size_t>(y_[r]);
                left_counts_[c] += weight_[r];
                right_counts_[c] -= weight_[r];
                nl += weight_[r];
                const double lo = col[r];
                const double hi = col[ord[i + 1]];
                const double nr = total - nl;
                if (lo == hi || nl < min_leaf || nr < min_leaf) {
                    continue;
                }
                const double score = (nl * gini_impurity(left_counts_) + nr * gini_impurity(right_counts_)) / total;
                if (score_improves(score, best.score)) {
                    best = {f, split_threshold(lo, hi), score, true};
                }
            }
            return;
        }
        double nl = 0.0, sum_left = 0.0, sq_left = 0.0;
        for (std::size_t i = begin; i + 1 < end; ++i) {
            const std::uint32_t r = ord[i];
            const double w = weight_[r];
            const double v = y_[r];
            nl += w;
            sum_left += w * v;
            sq_left += w * v * v;
            const double lo = col[r];
            const double hi = col[ord[i + 1]];
            const double nr = total - nl;
            if (lo == hi || nl < min_leaf || nr < min_leaf) {
                continue;
            }
            const double sum_right = st.sum - sum_left;
            const double sq_right = st.sum_sq - sq_left;
            const double sse_left = std::max(0.0, sq_left - sum_left * sum_left / nl);
            const double sse_right = std::max(0.0, sq_right - sum_right * sum_right / nr);
            const double score = (sse_left + sse_right) / total;
            if (score_improves(score, best.score)) {
                best = {f, split_threshold(lo, hi), score, true};
            }
        }
    }

    // Stable partition of the row list and of every live ordering; returns
    // the left size.
    std::size_t partition(std::size_t begin, std::size_t end, const Split& split,
                          const std::vector<std::uint32_t>& live) {
        const double* col = column(split.feature);
        for (std::size_t i = begin; i < end; ++i) {
            const std::uint32_t row = rows_[i];
            goes_left_[row] = col[row] <= split.threshold;
        }
        const auto split_range = [&](std::vector<std::uint32_t>& ord) {
            std::size_t l = begin;
            std::size_t r = 0;
            for (std::size_t i = begin; i < end; ++i) {
                const std::uint32_t row = ord[i];
                if (goes_left_[row]) {
                    ord[l++] = row;
                } else {
                    scratch_[r++] = row;
                }
            }
            std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(r),
                      ord.begin() + static_cast<std::ptrdiff_t>(l));
            return l - begin;
        };
        const std::size_t n_left = split_range(rows_);
        for (const std::uint32_t f : live) {
            if (is_general(f)) split_range(order_[f]);
        }
        return n_left;
    }

    const FeatureMatrix& x_;
    std::span<const double> y_;
    Task task_;
    std::size_t n_classes_;
    TreeParams params_;
    Rng* rng_;
    std::vector<std::vector<std::uint32_t>> order_;
    std::vector<std::uint32_t> scratch_;
    std::vector<std::uint8_t> goes_left_;
    std::vector<std::uint8_t> live_mark_;
    std::vector<std::uint32_t> rows_;
    std::vector<double> weight_;
    std::deque<std::vector<std::uint32_t>> live_pool_;
    std::vector<double> high_weight_, high_sum_, high_sq_, high_counts_;  // one live list per depth
    const PresortedColumns* sorted_ = nullptr;
    std::vector<std::size_t> feature_pool_;
    std::vector<double> left_counts_;
    std::vector<double> right_counts_;
    Tree tree_;
};

} // namespace detail

// Fits a tree on the rows listed in `sample` (duplicates allowed, as produced
// by bootstrapping). `rng` is only consulted when params.max_features limits
// the features examined per split.
inline Tree fit_tree(const FeatureMatrix& x, std::span<const double> y, Task task, const TreeParams& params,
                     std::span<const std::size_t> sample, Rng* rng = nullptr, std::size_t n_classes = 0,
                     const PresortedColumns* presorted = nullptr) {
    if (x.rows() == 0 || sample.empty()) {
        throw TrainingError("cannot fit a tree on an empty dataset");
    }
    if (y.size() != x.rows()) {
        throw TrainingError("target length does not match the feature matrix");
    }
    if (task == Task::classification && n_classes == 0) {
        n_classes = class_count_of(y);
    }
    detail::TreeBuilder builder(x, y, task, n_classes, params, rng);
    return builder.build(sample, presorted);
}

inline Tree fit_tree(const FeatureMatrix& x, std::span<const double> y, Task task, const TreeParams& params = {}) {
    std::vector<std::size_t> all(x.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return fit_tree(x, y, task, params, all);
}

} // namespace emma
