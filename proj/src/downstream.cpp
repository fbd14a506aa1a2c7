#include "comhom/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "comhom/error.hpp"
#include "comhom/rng.hpp"

namespace comhom::cal {

namespace {

constexpr int kHeadClasses = 5;
const std::string kAlgorithmNames[] = {"random_forest", "knn", "decision_tree", "lda",
                                       "logistic_regression"};
constexpr char kMagic[] = "CHDS1";

int argmax_low(const double* scores, int n) {
    int best = 0;
    for (int i = 1; i < n; ++i)
        if (scores[i] > scores[best]) best = i;
    return best;
}

int majority_low(const int* counts, int n) {
    int best = 0;
    for (int i = 1; i < n; ++i)
        if (counts[i] > counts[best]) best = i;
    return best;
}

// --- binary payload helpers -------------------------------------------

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

struct Reader {
    const std::string& s;
    std::size_t pos = 0;

    template <typename T>
    T get() {
        if (pos + sizeof(T) > s.size()) throw LoadError("downstream model blob truncated");
        T v;
        std::memcpy(&v, s.data() + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }
};

// --- decision tree ------------------------------------------------------

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int leaf_class = -1;
};

int tree_predict(const std::vector<TreeNode>& nodes, const float* row) {
    int at = 0;
    while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
        const TreeNode& nd = nodes[static_cast<std::size_t>(at)];
        at = static_cast<double>(row[nd.feature]) < nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(at)].leaf_class;
}

void serialize_tree(std::string& out, const std::vector<TreeNode>& nodes) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(nodes.size()));
    for (const TreeNode& nd : nodes) {
        put<std::int32_t>(out, nd.feature);
        put<double>(out, nd.threshold);
        put<std::int32_t>(out, nd.left);
        put<std::int32_t>(out, nd.right);
        put<std::int32_t>(out, nd.leaf_class);
    }
}

std::vector<TreeNode> deserialize_tree(Reader& r) {
    const auto count = r.get<std::uint32_t>();
    std::vector<TreeNode> nodes(count);
    for (TreeNode& nd : nodes) {
        nd.feature = r.get<std::int32_t>();
        nd.threshold = r.get<double>();
        nd.left = r.get<std::int32_t>();
        nd.right = r.get<std::int32_t>();
        nd.leaf_class = r.get<std::int32_t>();
    }
    return nodes;
}

// Grows a Gini tree to purity. Split thresholds use the first value of the
// right partition with a strict less-than test, so the partition is exact in
// floating point. Ties between splits keep the lowest feature, then the
// lowest threshold.
class TreeBuilder {
  public:
    TreeBuilder(const std::vector<double>& x, int dim, const std::vector<int>& y, int candidates,
                RngStream* rng)
        : x_(x), dim_(dim), y_(y), candidates_(candidates), rng_(rng) {}

    std::vector<TreeNode> build(std::vector<int> idx) {
        nodes_.clear();
        grow(std::move(idx));
        return std::move(nodes_);
    }

  private:
    int grow(std::vector<int> idx) {
        const int n = static_cast<int>(idx.size());
        int counts[kHeadClasses] = {0};
        for (const int i : idx) ++counts[y_[static_cast<std::size_t>(i)]];
        const int majority = majority_low(counts, kHeadClasses);

        const int node_id = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
        if (counts[majority] == n) {
            nodes_[static_cast<std::size_t>(node_id)].leaf_class = majority;
            return node_id;
        }

        std::vector<int> feats;
        if (rng_ != nullptr && candidates_ < dim_) {
            feats = rng_->sample_without_replacement(dim_, candidates_);
            std::sort(feats.begin(), feats.end());
        } else {
            feats.resize(static_cast<std::size_t>(dim_));
            for (int f = 0; f < dim_; ++f) feats[static_cast<std::size_t>(f)] = f;
        }

        double parent = static_cast<double>(n);
        for (int c = 0; c < kHeadClasses; ++c)
            parent -= static_cast<double>(counts[c]) * counts[c] / n;

        double best_w = parent - 1e-12;
        int best_f = -1;
        double best_thr = 0.0;
        std::vector<std::pair<double, int>> order(static_cast<std::size_t>(n));
        for (const int f : feats) {
            for (int i = 0; i < n; ++i) {
                const int row = idx[static_cast<std::size_t>(i)];
                order[static_cast<std::size_t>(i)] = {
                    x_[static_cast<std::size_t>(row) * dim_ + f], y_[static_cast<std::size_t>(row)]};
            }
            std::sort(order.begin(), order.end());
            int left[kHeadClasses] = {0};
            int right[kHeadClasses];
            std::copy(counts, counts + kHeadClasses, right);
            for (int pos = 1; pos < n; ++pos) {
                const int cls = order[static_cast<std::size_t>(pos - 1)].second;
                ++left[cls];
                --right[cls];
                if (order[static_cast<std::size_t>(pos - 1)].first ==
                    order[static_cast<std::size_t>(pos)].first)
                    continue;
                double wl = static_cast<double>(pos);
                double wr = static_cast<double>(n - pos);
                for (int c = 0; c < kHeadClasses; ++c) {
                    wl -= static_cast<double>(left[c]) * left[c] / pos;
                    wr -= static_cast<double>(right[c]) * right[c] / (n - pos);
                }
                const double w = wl + wr;
                if (w < best_w) {
                    best_w = w;
                    best_f = f;
                    best_thr = order[static_cast<std::size_t>(pos)].first;
                }
            }
        }

        if (best_f < 0) {
            nodes_[static_cast<std::size_t>(node_id)].leaf_class = majority;
            return node_id;
        }

        std::vector<int> lo, hi;
        for (const int i : idx)
            (x_[static_cast<std::size_t>(i) * dim_ + best_f] < best_thr ? lo : hi).push_back(i);
        idx.clear();
        idx.shrink_to_fit();
        const int left_id = grow(std::move(lo));
        const int right_id = grow(std::move(hi));
        TreeNode& nd = nodes_[static_cast<std::size_t>(node_id)];
        nd.feature = best_f;
        nd.threshold = best_thr;
        nd.left = left_id;
        nd.right = right_id;
        return node_id;
    }

    const std::vector<double>& x_;
    const int dim_;
    const std::vector<int>& y_;
    const int candidates_;
    RngStream* rng_;
    std::vector<TreeNode> nodes_;
};

class TreeHead : public Head {
  public:
    explicit TreeHead(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

    int predict_one(const float* row, int) const override { return tree_predict(nodes_, row); }

    void serialize(std::string& out) const override {
        out.push_back('T');
        serialize_tree(out, nodes_);
    }

  private:
    std::vector<TreeNode> nodes_;
};

class ForestHead : public Head {
  public:
    explicit ForestHead(std::vector<std::vector<TreeNode>> trees) : trees_(std::move(trees)) {}

    int predict_one(const float* row, int) const override {
        int votes[kHeadClasses] = {0};
        for (const std::vector<TreeNode>& t : trees_) ++votes[tree_predict(t, row)];
        return majority_low(votes, kHeadClasses);
    }

    void serialize(std::string& out) const override {
        out.push_back('F');
        put<std::uint32_t>(out, static_cast<std::uint32_t>(trees_.size()));
        for (const std::vector<TreeNode>& t : trees_) serialize_tree(out, t);
    }

  private:
    std::vector<std::vector<TreeNode>> trees_;
};

// --- k nearest neighbors -------------------------------------------------

class KnnHead : public Head {
  public:
    KnnHead(int k, int dim, std::vector<float> feats, std::vector<int> labels)
        : k_(k), dim_(dim), feats_(std::move(feats)), labels_(std::move(labels)) {}

    int predict_one(const float* row, int) const override {
        const int n = static_cast<int>(labels_.size());
        std::vector<std::pair<double, int>> dists(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            double d = 0.0;
            const float* p = feats_.data() + static_cast<std::size_t>(i) * dim_;
            for (int j = 0; j < dim_; ++j) {
                const double diff = static_cast<double>(p[j]) - static_cast<double>(row[j]);
                d += diff * diff;
            }
            dists[static_cast<std::size_t>(i)] = {d, i};
        }
        const int k = std::min(k_, n);
        std::partial_sort(dists.begin(), dists.begin() + k, dists.end());
        int votes[kHeadClasses] = {0};
        for (int i = 0; i < k; ++i)
            ++votes[labels_[static_cast<std::size_t>(dists[static_cast<std::size_t>(i)].second)]];
        return majority_low(votes, kHeadClasses);
    }

    void serialize(std::string& out) const override {
        out.push_back('K');
        put<std::uint32_t>(out, static_cast<std::uint32_t>(k_));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(labels_.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
        for (const float v : feats_) put<float>(out, v);
        for (const int l : labels_) put<std::int32_t>(out, l);
    }

  private:
    int k_;
    int dim_;
    std::vector<float> feats_;
    std::vector<int> labels_;
};

// --- linear discriminant ---------------------------------------------------

// Cholesky solve of the ridged pooled covariance; spd is guaranteed by the
// ridge term.
std::vector<double> spd_solve(std::vector<double> a, int n, const std::vector<double>& b) {
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            double sum = a[static_cast<std::size_t>(i) * n + j];
            for (int k = 0; k < i; ++k)
                sum -= a[static_cast<std::size_t>(i) * n + k] * a[static_cast<std::size_t>(j) * n + k];
            if (i == j) {
                if (sum <= 0.0) throw NumericError("pooled covariance not positive definite");
                a[static_cast<std::size_t>(i) * n + i] = std::sqrt(sum);
            } else {
                a[static_cast<std::size_t>(j) * n + i] =
                    sum / a[static_cast<std::size_t>(i) * n + i];
            }
        }
    }
    std::vector<double> x = b;
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < i; ++k)
            x[static_cast<std::size_t>(i)] -=
                a[static_cast<std::size_t>(i) * n + k] * x[static_cast<std::size_t>(k)];
        x[static_cast<std::size_t>(i)] /= a[static_cast<std::size_t>(i) * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
        for (int k = i + 1; k < n; ++k)
            x[static_cast<std::size_t>(i)] -=
                a[static_cast<std::size_t>(k) * n + i] * x[static_cast<std::size_t>(k)];
        x[static_cast<std::size_t>(i)] /= a[static_cast<std::size_t>(i) * n + i];
    }
    return x;
}

class LdaHead : public Head {
  public:
    LdaHead(int dim, std::vector<bool> present, std::vector<double> weights,
            std::vector<double> biases)
        : dim_(dim),
          present_(std::move(present)),
          weights_(std::move(weights)),
          biases_(std::move(biases)) {}

    int predict_one(const float* row, int) const override {
        double scores[kHeadClasses];
        for (int c = 0; c < kHeadClasses; ++c) {
            if (!present_[static_cast<std::size_t>(c)]) {
                scores[c] = -std::numeric_limits<double>::infinity();
                continue;
            }
            double s = biases_[static_cast<std::size_t>(c)];
            const double* w = weights_.data() + static_cast<std::size_t>(c) * dim_;
            for (int j = 0; j < dim_; ++j) s += w[j] * static_cast<double>(row[j]);
            scores[c] = s;
        }
        return argmax_low(scores, kHeadClasses);
    }

    void serialize(std::string& out) const override {
        out.push_back('L');
        put<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
        for (int c = 0; c < kHeadClasses; ++c) {
            put<std::uint8_t>(out, present_[static_cast<std::size_t>(c)] ? 1 : 0);
            if (!present_[static_cast<std::size_t>(c)]) continue;
            for (int j = 0; j < dim_; ++j)
                put<double>(out, weights_[static_cast<std::size_t>(c) * dim_ + j]);
            put<double>(out, biases_[static_cast<std::size_t>(c)]);
        }
    }

  private:
    int dim_;
    std::vector<bool> present_;
    std::vector<double> weights_;  // [5, dim], zero rows for absent classes
    std::vector<double> biases_;
};

// --- multinomial logistic regression ---------------------------------------

class LogRegHead : public Head {
  public:
    LogRegHead(int dim, std::vector<int> classes, std::vector<double> weights,
               std::vector<double> biases)
        : dim_(dim),
          classes_(std::move(classes)),
          weights_(std::move(weights)),
          biases_(std::move(biases)) {}

    int predict_one(const float* row, int) const override {
        double scores[kHeadClasses];
        std::fill(scores, scores + kHeadClasses, -std::numeric_limits<double>::infinity());
        for (std::size_t k = 0; k < classes_.size(); ++k) {
            double s = biases_[k];
            const double* w = weights_.data() + k * dim_;
            for (int j = 0; j < dim_; ++j) s += w[j] * static_cast<double>(row[j]);
            scores[classes_[k]] = s;
        }
        return argmax_low(scores, kHeadClasses);
    }

    void serialize(std::string& out) const override {
        out.push_back('R');
        put<std::uint32_t>(out, static_cast<std::uint32_t>(classes_.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
        for (const int c : classes_) put<std::int32_t>(out, c);
        for (const double w : weights_) put<double>(out, w);
        for (const double b : biases_) put<double>(out, b);
    }

  private:
    int dim_;
    std::vector<int> classes_;     // observed classes, ascending
    std::vector<double> weights_;  // [n_classes, dim]
    std::vector<double> biases_;
};

// --- fitting ---------------------------------------------------------------

std::unique_ptr<Head> fit_tree(const std::vector<double>& x, int n, int dim,
                               const std::vector<int>& y) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    TreeBuilder builder(x, dim, y, dim, nullptr);
    return std::make_unique<TreeHead>(builder.build(std::move(idx)));
}

std::unique_ptr<Head> fit_forest(const DownstreamSpec& spec, const std::vector<double>& x, int n,
                                 int dim, const std::vector<int>& y, RngStream& rng) {
    std::vector<std::vector<TreeNode>> trees;
    trees.reserve(static_cast<std::size_t>(spec.forest_trees));
    for (int t = 0; t < spec.forest_trees; ++t) {
        RngStream tree_rng = rng.fork("tree", static_cast<std::uint64_t>(t));
        std::vector<int> idx(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = tree_rng.uniform_int(n);
        TreeBuilder builder(x, dim, y, spec.forest_split_candidates, &tree_rng);
        trees.push_back(builder.build(std::move(idx)));
    }
    return std::make_unique<ForestHead>(std::move(trees));
}

std::unique_ptr<Head> fit_lda(const DownstreamSpec& spec, const std::vector<double>& x, int n,
                              int dim, const std::vector<int>& y) {
    int counts[kHeadClasses] = {0};
    for (const int cls : y) ++counts[cls];
    std::vector<double> means(static_cast<std::size_t>(kHeadClasses) * dim, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < dim; ++j)
            means[static_cast<std::size_t>(y[static_cast<std::size_t>(i)]) * dim + j] +=
                x[static_cast<std::size_t>(i) * dim + j];
    int observed = 0;
    for (int c = 0; c < kHeadClasses; ++c) {
        if (counts[c] == 0) continue;
        ++observed;
        for (int j = 0; j < dim; ++j) means[static_cast<std::size_t>(c) * dim + j] /= counts[c];
    }

    std::vector<double> cov(static_cast<std::size_t>(dim) * dim, 0.0);
    std::vector<double> centered(static_cast<std::size_t>(dim));
    for (int i = 0; i < n; ++i) {
        const double* mu = means.data() + static_cast<std::size_t>(y[static_cast<std::size_t>(i)]) * dim;
        for (int j = 0; j < dim; ++j)
            centered[static_cast<std::size_t>(j)] = x[static_cast<std::size_t>(i) * dim + j] - mu[j];
        for (int j = 0; j < dim; ++j)
            for (int k = j; k < dim; ++k)
                cov[static_cast<std::size_t>(j) * dim + k] +=
                    centered[static_cast<std::size_t>(j)] * centered[static_cast<std::size_t>(k)];
    }
    const double divisor = std::max(1, n - observed);
    double trace = 0.0;
    for (int j = 0; j < dim; ++j) {
        for (int k = j; k < dim; ++k) {
            cov[static_cast<std::size_t>(j) * dim + k] /= divisor;
            cov[static_cast<std::size_t>(k) * dim + j] = cov[static_cast<std::size_t>(j) * dim + k];
        }
        trace += cov[static_cast<std::size_t>(j) * dim + j];
    }
    const double ridge = std::max(spec.lda_ridge * trace / dim, 1e-12);
    for (int j = 0; j < dim; ++j) cov[static_cast<std::size_t>(j) * dim + j] += ridge;

    std::vector<bool> present(kHeadClasses, false);
    std::vector<double> weights(static_cast<std::size_t>(kHeadClasses) * dim, 0.0);
    std::vector<double> biases(kHeadClasses, 0.0);
    for (int c = 0; c < kHeadClasses; ++c) {
        if (counts[c] == 0) continue;
        present[static_cast<std::size_t>(c)] = true;
        const std::vector<double> mu(means.begin() + static_cast<std::ptrdiff_t>(c) * dim,
                                     means.begin() + static_cast<std::ptrdiff_t>(c + 1) * dim);
        const std::vector<double> w = spd_solve(cov, dim, mu);
        double quad = 0.0;
        for (int j = 0; j < dim; ++j) {
            weights[static_cast<std::size_t>(c) * dim + j] = w[static_cast<std::size_t>(j)];
            quad += w[static_cast<std::size_t>(j)] * mu[static_cast<std::size_t>(j)];
        }
        biases[static_cast<std::size_t>(c)] =
            -0.5 * quad + std::log(static_cast<double>(counts[c]) / n);
    }
    return std::make_unique<LdaHead>(dim, std::move(present), std::move(weights),
                                     std::move(biases));
}

std::unique_ptr<Head> fit_logreg(const DownstreamSpec& spec, const std::vector<double>& raw_x,
                                 int n, int dim, const std::vector<int>& y) {
    std::vector<int> classes;
    {
        bool seen[kHeadClasses] = {false};
        for (const int cls : y) seen[cls] = true;
        for (int c = 0; c < kHeadClasses; ++c)
            if (seen[c]) classes.push_back(c);
    }
    const int kk = static_cast<int>(classes.size());
    std::vector<int> target(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        target[static_cast<std::size_t>(i)] = static_cast<int>(
            std::lower_bound(classes.begin(), classes.end(), y[static_cast<std::size_t>(i)]) -
            classes.begin());

    // standardize per coordinate so plain gradient descent is well
    // conditioned; the affine map folds back into the returned weights
    std::vector<double> mu(static_cast<std::size_t>(dim), 0.0);
    std::vector<double> sigma(static_cast<std::size_t>(dim), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < dim; ++j)
            mu[static_cast<std::size_t>(j)] += raw_x[static_cast<std::size_t>(i) * dim + j];
    for (int j = 0; j < dim; ++j) mu[static_cast<std::size_t>(j)] /= n;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < dim; ++j) {
            const double d = raw_x[static_cast<std::size_t>(i) * dim + j] -
                             mu[static_cast<std::size_t>(j)];
            sigma[static_cast<std::size_t>(j)] += d * d;
        }
    for (int j = 0; j < dim; ++j)
        sigma[static_cast<std::size_t>(j)] =
            std::max(std::sqrt(sigma[static_cast<std::size_t>(j)] / n), 1e-12);
    std::vector<double> x(raw_x.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < dim; ++j)
            x[static_cast<std::size_t>(i) * dim + j] =
                (raw_x[static_cast<std::size_t>(i) * dim + j] - mu[static_cast<std::size_t>(j)]) /
                sigma[static_cast<std::size_t>(j)];

    std::vector<double> w(static_cast<std::size_t>(kk) * dim, 0.0), b(kk, 0.0);
    std::vector<double> gw(w.size()), gb(b.size());
    std::vector<double> logits(static_cast<std::size_t>(kk));

    // loss and, when grads is set, its gradient; mean cross entropy plus the
    // l2 term on the weights (biases unpenalized)
    const auto evaluate = [&](const std::vector<double>& cw, const std::vector<double>& cb,
                              bool grads) {
        if (grads) {
            std::fill(gw.begin(), gw.end(), 0.0);
            std::fill(gb.begin(), gb.end(), 0.0);
        }
        double loss = 0.0;
        for (int i = 0; i < n; ++i) {
            const double* row = x.data() + static_cast<std::size_t>(i) * dim;
            double mx = -std::numeric_limits<double>::infinity();
            for (int k = 0; k < kk; ++k) {
                double s = cb[static_cast<std::size_t>(k)];
                const double* wk = cw.data() + static_cast<std::size_t>(k) * dim;
                for (int j = 0; j < dim; ++j) s += wk[j] * row[j];
                logits[static_cast<std::size_t>(k)] = s;
                mx = std::max(mx, s);
            }
            double denom = 0.0;
            for (int k = 0; k < kk; ++k)
                denom += std::exp(logits[static_cast<std::size_t>(k)] - mx);
            const int t = target[static_cast<std::size_t>(i)];
            loss -= logits[static_cast<std::size_t>(t)] - mx - std::log(denom);
            if (!grads) continue;
            for (int k = 0; k < kk; ++k) {
                const double p = std::exp(logits[static_cast<std::size_t>(k)] - mx) / denom;
                const double delta = (p - (k == t ? 1.0 : 0.0)) / n;
                gb[static_cast<std::size_t>(k)] += delta;
                double* gwk = gw.data() + static_cast<std::size_t>(k) * dim;
                for (int j = 0; j < dim; ++j) gwk[j] += delta * row[j];
            }
        }
        loss /= n;
        for (std::size_t j = 0; j < cw.size(); ++j) {
            loss += 0.5 * spec.logreg_l2 * cw[j] * cw[j];
            if (grads) gw[j] += spec.logreg_l2 * cw[j];
        }
        return loss;
    };

    double loss = evaluate(w, b, true);
    double lr = 1.0;
    std::vector<double> cw(w.size()), cb(b.size());
    for (int iter = 0; iter < spec.logreg_max_iters; ++iter) {
        double gnorm = 0.0;
        for (const double g : gw) gnorm += g * g;
        for (const double g : gb) gnorm += g * g;
        if (std::sqrt(gnorm) < spec.logreg_tolerance) break;

        double trial = 0.0;
        for (int halving = 0; halving < 60; ++halving) {
            for (std::size_t j = 0; j < w.size(); ++j) cw[j] = w[j] - lr * gw[j];
            for (std::size_t j = 0; j < b.size(); ++j) cb[j] = b[j] - lr * gb[j];
            trial = evaluate(cw, cb, false);
            if (trial <= loss) break;
            lr *= 0.5;
        }
        if (trial > loss) break;  // step stalled below float resolution
        w.swap(cw);
        b.swap(cb);
        loss = evaluate(w, b, true);
        lr = std::min(lr * 1.2, 16.0);
    }

    for (int k = 0; k < kk; ++k) {
        double* wk = w.data() + static_cast<std::size_t>(k) * dim;
        double shift = 0.0;
        for (int j = 0; j < dim; ++j) {
            wk[j] /= sigma[static_cast<std::size_t>(j)];
            shift += wk[j] * mu[static_cast<std::size_t>(j)];
        }
        b[static_cast<std::size_t>(k)] -= shift;
    }
    return std::make_unique<LogRegHead>(dim, std::move(classes), std::move(w), std::move(b));
}

std::unique_ptr<Head> fit_head(const DownstreamSpec& spec, const std::vector<double>& x, int n,
                               int dim, const std::vector<float>& raw, const std::vector<int>& y,
                               const std::string& head_tag) {
    int distinct = 0;
    {
        bool seen[kHeadClasses] = {false};
        for (const int cls : y)
            if (!seen[cls]) {
                seen[cls] = true;
                ++distinct;
            }
    }
    if (distinct < 2)
        throw DegenerateFitError("the " + head_tag + " head saw a single target class");

    switch (spec.algorithm) {
        case Algorithm::DecisionTree:
            return fit_tree(x, n, dim, y);
        case Algorithm::RandomForest: {
            RngStream rng(spec.seed, "downstream-forest");
            RngStream head_rng = rng.fork(head_tag);
            return fit_forest(spec, x, n, dim, y, head_rng);
        }
        case Algorithm::Knn:
            return std::make_unique<KnnHead>(spec.knn_k, dim, raw, y);
        case Algorithm::Lda:
            return fit_lda(spec, x, n, dim, y);
        case Algorithm::LogisticRegression:
            return fit_logreg(spec, x, n, dim, y);
    }
    throw ConfigError("unknown downstream algorithm");
}

std::unique_ptr<Head> deserialize_head(Reader& r) {
    const auto tag = r.get<char>();
    switch (tag) {
        case 'T':
            return std::make_unique<TreeHead>(deserialize_tree(r));
        case 'F': {
            const auto count = r.get<std::uint32_t>();
            std::vector<std::vector<TreeNode>> trees;
            trees.reserve(count);
            for (std::uint32_t t = 0; t < count; ++t) trees.push_back(deserialize_tree(r));
            return std::make_unique<ForestHead>(std::move(trees));
        }
        case 'K': {
            const int k = static_cast<int>(r.get<std::uint32_t>());
            const auto n = r.get<std::uint32_t>();
            const int dim = static_cast<int>(r.get<std::uint32_t>());
            std::vector<float> feats(static_cast<std::size_t>(n) * dim);
            for (float& v : feats) v = r.get<float>();
            std::vector<int> labels(n);
            for (int& v : labels) v = r.get<std::int32_t>();
            return std::make_unique<KnnHead>(k, dim, std::move(feats), std::move(labels));
        }
        case 'L': {
            const int dim = static_cast<int>(r.get<std::uint32_t>());
            std::vector<bool> present(kHeadClasses, false);
            std::vector<double> weights(static_cast<std::size_t>(kHeadClasses) * dim, 0.0);
            std::vector<double> biases(kHeadClasses, 0.0);
            for (int c = 0; c < kHeadClasses; ++c) {
                if (r.get<std::uint8_t>() == 0) continue;
                present[static_cast<std::size_t>(c)] = true;
                for (int j = 0; j < dim; ++j)
                    weights[static_cast<std::size_t>(c) * dim + j] = r.get<double>();
                biases[static_cast<std::size_t>(c)] = r.get<double>();
            }
            return std::make_unique<LdaHead>(dim, std::move(present), std::move(weights),
                                             std::move(biases));
        }
        case 'R': {
            const auto count = r.get<std::uint32_t>();
            const int dim = static_cast<int>(r.get<std::uint32_t>());
            std::vector<int> classes(count);
            for (int& c : classes) c = r.get<std::int32_t>();
            std::vector<double> weights(static_cast<std::size_t>(count) * dim);
            for (double& w : weights) w = r.get<double>();
            std::vector<double> biases(count);
            for (double& b : biases) b = r.get<double>();
            return std::make_unique<LogRegHead>(dim, std::move(classes), std::move(weights),
                                                std::move(biases));
        }
        default:
            throw LoadError("unknown downstream head tag");
    }
}

}  // namespace

const std::string& algorithm_name(Algorithm a) { return kAlgorithmNames[static_cast<int>(a)]; }

Algorithm parse_algorithm(const std::string& s) {
    for (int i = 0; i < 5; ++i)
        if (s == kAlgorithmNames[i]) return static_cast<Algorithm>(i);
    throw ConfigError("unknown downstream algorithm '" + s + "'");
}

TwoHeadModel fit_downstream(const DownstreamSpec& spec, const CalibrationSet& calib) {
    if (calib.size() == 0) throw ConfigError("calibration set is empty");
    if (calib.features.rank() != 2 ||
        calib.features.shape[0] != static_cast<int>(calib.labels.size()))
        throw ConfigError("calibration features must be one row per label");
    if (spec.forest_trees < 1 || spec.forest_split_candidates < 1 || spec.knn_k < 1)
        throw ConfigError("downstream hyperparameters must be positive");

    const int n = calib.features.shape[0];
    const int dim = calib.features.shape[1];
    std::vector<double> x(calib.features.values.begin(), calib.features.values.end());

    std::vector<int> dir_targets(static_cast<std::size_t>(n)), mod_targets(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        dir_targets[static_cast<std::size_t>(i)] =
            static_cast<int>(calib.labels[static_cast<std::size_t>(i)].direction);
        mod_targets[static_cast<std::size_t>(i)] =
            static_cast<int>(calib.labels[static_cast<std::size_t>(i)].modifier);
    }

    TwoHeadModel model;
    model.spec = spec;
    model.direction = fit_head(spec, x, n, dim, calib.features.values, dir_targets, "direction");
    model.modifier = fit_head(spec, x, n, dim, calib.features.values, mod_targets, "modifier");
    return model;
}

std::vector<data::GestureLabel> predict(const TwoHeadModel& model, const nn::Tensor& features) {
    if (features.rank() != 2) throw ConfigError("prediction features must be [n, dim]");
    const int n = features.shape[0];
    const int dim = features.shape[1];
    std::vector<data::GestureLabel> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const float* row = features.values.data() + static_cast<std::size_t>(i) * dim;
        out[static_cast<std::size_t>(i)] = {
            static_cast<data::Direction>(model.direction->predict_one(row, dim)),
            static_cast<data::Modifier>(model.modifier->predict_one(row, dim))};
    }
    return out;
}

std::string serialize_downstream(const TwoHeadModel& model) {
    std::string out(kMagic, sizeof(kMagic) - 1);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(model.spec.algorithm));
    put<std::uint64_t>(out, model.spec.seed);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(model.spec.forest_trees));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(model.spec.forest_split_candidates));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(model.spec.knn_k));
    put<double>(out, model.spec.lda_ridge);
    put<double>(out, model.spec.logreg_l2);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(model.spec.logreg_max_iters));
    put<double>(out, model.spec.logreg_tolerance);
    model.direction->serialize(out);
    model.modifier->serialize(out);
    return out;
}

TwoHeadModel deserialize_downstream(const std::string& blob) {
    if (blob.size() < sizeof(kMagic) - 1 || blob.compare(0, sizeof(kMagic) - 1, kMagic) != 0)
        throw LoadError("not a downstream model blob");
    Reader r{blob, sizeof(kMagic) - 1};
    TwoHeadModel model;
    const auto tag = r.get<std::uint8_t>();
    if (tag > 4) throw LoadError("unknown downstream algorithm tag");
    model.spec.algorithm = static_cast<Algorithm>(tag);
    model.spec.seed = r.get<std::uint64_t>();
    model.spec.forest_trees = static_cast<int>(r.get<std::uint32_t>());
    model.spec.forest_split_candidates = static_cast<int>(r.get<std::uint32_t>());
    model.spec.knn_k = static_cast<int>(r.get<std::uint32_t>());
    model.spec.lda_ridge = r.get<double>();
    model.spec.logreg_l2 = r.get<double>();
    model.spec.logreg_max_iters = static_cast<int>(r.get<std::uint32_t>());
    model.spec.logreg_tolerance = r.get<double>();
    model.direction = deserialize_head(r);
    model.modifier = deserialize_head(r);
    if (r.pos != blob.size()) throw LoadError("trailing bytes after downstream model blob");
    return model;
}

void save_downstream(const TwoHeadModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path);
    const std::string blob = serialize_downstream(model);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw LoadError("failed writing " + path);
}

TwoHeadModel load_downstream(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot read " + path);
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_downstream(blob);
}

}  // namespace comhom::cal
