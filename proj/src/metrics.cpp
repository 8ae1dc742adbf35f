#include "fedsplit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>

#include "fedsplit/rng.hpp"

namespace fedsplit {

namespace {

constexpr std::uint64_t kKmeansSalt = 0x6b6d65616e73ULL;  // "kmeans"

struct ClassCounts {
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

ClassCounts check_binary_inputs(const std::vector<double>& scores,
                                const std::vector<int>& labels) {
    if (scores.size() != labels.size()) {
        throw ContractError("auc: scores and labels differ in length");
    }
    ClassCounts counts;
    for (int y : labels) {
        if (y == 1) {
            ++counts.positives;
        } else if (y == 0) {
            ++counts.negatives;
        } else {
            throw ContractError("auc: labels must be 0 or 1, got " + std::to_string(y));
        }
    }
    if (counts.positives == 0 || counts.negatives == 0) {
        throw UndefinedMetricError("auc: needs at least one positive and one negative");
    }
    return counts;
}

std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double sq_dist(const Tensor& points, std::size_t row, const std::vector<double>& center) {
    double d = 0.0;
    for (std::size_t j = 0; j < center.size(); ++j) {
        const double diff = points.at2(row, j) - center[j];
        d += diff * diff;
    }
    return d;
}

struct KmeansRun {
    std::vector<int> assignment;
    double inertia = 0.0;
};

KmeansRun kmeans_once(const Tensor& points, int k, Rng& rng) {
    const std::size_t n = points.rows();
    const std::size_t dim = points.cols();
    const std::size_t kk = static_cast<std::size_t>(k);

    // k-means++ seeding: each next center is drawn proportionally to its
    // squared distance from the nearest center chosen so far.
    std::vector<std::vector<double>> centers;
    centers.reserve(kk);
    std::size_t first = static_cast<std::size_t>(rng.below(n));
    centers.push_back(std::vector<double>(points.data() + first * dim,
                                          points.data() + (first + 1) * dim));
    std::vector<double> nearest(n, 0.0);
    while (centers.size() < kk) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = sq_dist(points, i, centers[0]);
            for (std::size_t c = 1; c < centers.size(); ++c) {
                best = std::min(best, sq_dist(points, i, centers[c]));
            }
            nearest[i] = best;
            total += best;
        }
        std::size_t pick;
        if (total <= 0.0) {
            pick = static_cast<std::size_t>(rng.below(n));
        } else {
            const double x = rng.next_double() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += nearest[i];
                if (x < acc) {
                    pick = i;
                    break;
                }
            }
        }
        centers.push_back(std::vector<double>(points.data() + pick * dim,
                                              points.data() + (pick + 1) * dim));
    }

    std::vector<int> assignment(n, 0);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            int best_c = 0;
            double best_d = sq_dist(points, i, centers[0]);
            for (std::size_t c = 1; c < kk; ++c) {
                const double d = sq_dist(points, i, centers[c]);
                if (d < best_d) {
                    best_d = d;
                    best_c = static_cast<int>(c);
                }
            }
            if (assignment[i] != best_c) {
                assignment[i] = best_c;
                changed = true;
            }
        }
        if (!changed && iter > 0) break;

        std::vector<std::vector<double>> sums(kk, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(kk, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(assignment[i]);
            ++counts[c];
            for (std::size_t j = 0; j < dim; ++j) sums[c][j] += points.at2(i, j);
        }
        for (std::size_t c = 0; c < kk; ++c) {
            if (counts[c] == 0) {
                // Re-seed an emptied cluster at the point farthest from its
                // current center; first such point wins so reruns agree.
                std::size_t far = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double d =
                        sq_dist(points, i, centers[static_cast<std::size_t>(assignment[i])]);
                    if (d > far_d) {
                        far_d = d;
                        far = i;
                    }
                }
                centers[c].assign(points.data() + far * dim,
                                  points.data() + (far + 1) * dim);
                assignment[far] = static_cast<int>(c);
            } else {
                const double inv = 1.0 / static_cast<double>(counts[c]);
                for (std::size_t j = 0; j < dim; ++j) centers[c][j] = sums[c][j] * inv;
            }
        }
    }

    KmeansRun run;
    run.assignment = std::move(assignment);
    for (std::size_t i = 0; i < n; ++i) {
        run.inertia +=
            sq_dist(points, i, centers[static_cast<std::size_t>(run.assignment[i])]);
    }
    return run;
}

double comb2(double x) { return x * (x - 1.0) * 0.5; }

}  // namespace

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    const ClassCounts counts = check_binary_inputs(scores, labels);
    const std::size_t n = scores.size();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] < scores[b];
        return a < b;
    });

    // Average rank within tie groups keeps each rank a multiple of one half,
    // which is exact in floating point for these sizes.
    double positive_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t t = i; t < j; ++t) {
            if (labels[order[t]] == 1) positive_rank_sum += avg_rank;
        }
        i = j;
    }

    const double n_pos = static_cast<double>(counts.positives);
    const double n_neg = static_cast<double>(counts.negatives);
    const double u_stat = positive_rank_sum - n_pos * (n_pos + 1.0) * 0.5;
    return u_stat / (n_pos * n_neg);
}

double auc_all_pairs(const std::vector<double>& scores, const std::vector<int>& labels) {
    const ClassCounts counts = check_binary_inputs(scores, labels);
    double wins = 0.0;
    for (std::size_t p = 0; p < scores.size(); ++p) {
        if (labels[p] != 1) continue;
        for (std::size_t q = 0; q < scores.size(); ++q) {
            if (labels[q] != 0) continue;
            if (scores[p] > scores[q]) {
                wins += 1.0;
            } else if (scores[p] == scores[q]) {
                wins += 0.5;
            }
        }
    }
    return wins / (static_cast<double>(counts.positives) *
                   static_cast<double>(counts.negatives));
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size()) {
        throw ContractError("accuracy: predictions and labels differ in length");
    }
    if (predictions.empty()) throw ContractError("accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] == labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

void export_embeddings(const ClientStore& store, const std::string& path) {
    if (store.empty()) throw ContractError("export_embeddings: empty store");
    const std::size_t dim = store.records.front().embedding.numel();

    std::vector<std::size_t> order(store.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return store.records[a].user_id < store.records[b].user_id;
    });

    std::ofstream out(path);
    if (!out) throw IoError("export_embeddings: cannot open '" + path + "'");
    out << "user_id";
    for (std::size_t j = 0; j < dim; ++j) out << ",e" << j;
    out << "\n";
    for (std::size_t idx : order) {
        const ClientRecord& rec = store.records[idx];
        if (rec.embedding.numel() != dim) {
            throw ContractError("export_embeddings: inconsistent embedding size for '" +
                                rec.user_id + "'");
        }
        out << rec.user_id;
        for (std::size_t j = 0; j < dim; ++j) out << "," << format_value(rec.embedding[j]);
        out << "\n";
    }
    if (!out) throw IoError("export_embeddings: write failed for '" + path + "'");
}

Tensor pca_project(const Tensor& embeddings, int out_dim) {
    if (embeddings.rank() != 2) {
        throw ContractError("pca_project: expected a rank-2 matrix, got " +
                            Tensor::shape_string(embeddings.shape()));
    }
    const std::size_t n = embeddings.rows();
    const std::size_t dim = embeddings.cols();
    if (out_dim < 1 ||
        static_cast<std::size_t>(out_dim) > std::min(n, dim)) {
        throw ContractError("pca_project: out_dim " + std::to_string(out_dim) +
                            " exceeds min(" + std::to_string(n) + ", " +
                            std::to_string(dim) + ")");
    }

    std::vector<double> mean(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < dim; ++j) mean[j] += embeddings.at2(i, j);
    }
    for (double& m : mean) m /= static_cast<double>(n);

    Tensor centered({n, dim});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
            centered.at2(i, j) = embeddings.at2(i, j) - mean[j];
        }
    }

    // Eigen-decompose X^T X with cyclic Jacobi rotations. D stays small here
    // so the quadratic sweeps are cheap.
    std::vector<std::vector<double>> a(dim, std::vector<double>(dim, 0.0));
    for (std::size_t p = 0; p < dim; ++p) {
        for (std::size_t q = p; q < dim; ++q) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += centered.at2(i, p) * centered.at2(i, q);
            a[p][q] = s;
            a[q][p] = s;
        }
    }
    std::vector<std::vector<double>> v(dim, std::vector<double>(dim, 0.0));
    for (std::size_t i = 0; i < dim; ++i) v[i][i] = 1.0;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < dim; ++p) {
            for (std::size_t q = p + 1; q < dim; ++q) off += a[p][q] * a[p][q];
        }
        if (off <= 1e-24) break;
        for (std::size_t p = 0; p < dim; ++p) {
            for (std::size_t q = p + 1; q < dim; ++q) {
                if (a[p][q] == 0.0) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t i = 0; i < dim; ++i) {
                    const double aip = a[i][p];
                    const double aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < dim; ++i) {
                    const double api = a[p][i];
                    const double aqi = a[q][i];
                    a[p][i] = c * api - s * aqi;
                    a[q][i] = s * api + c * aqi;
                }
                for (std::size_t i = 0; i < dim; ++i) {
                    const double vip = v[i][p];
                    const double viq = v[i][q];
                    v[i][p] = c * vip - s * viq;
                    v[i][q] = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<std::size_t> by_eigenvalue(dim);
    std::iota(by_eigenvalue.begin(), by_eigenvalue.end(), std::size_t{0});
    std::sort(by_eigenvalue.begin(), by_eigenvalue.end(),
              [&](std::size_t x, std::size_t y) {
                  if (a[x][x] != a[y][y]) return a[x][x] > a[y][y];
                  return x < y;
              });

    Tensor projected({n, static_cast<std::size_t>(out_dim)});
    for (int col = 0; col < out_dim; ++col) {
        const std::size_t e = by_eigenvalue[static_cast<std::size_t>(col)];
        std::size_t top = 0;
        for (std::size_t i = 1; i < dim; ++i) {
            if (std::abs(v[i][e]) > std::abs(v[top][e])) top = i;
        }
        const double sign = v[top][e] < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < dim; ++j) s += centered.at2(i, j) * v[j][e] * sign;
            projected.at2(i, static_cast<std::size_t>(col)) = s;
        }
    }
    return projected;
}

std::vector<int> kmeans_assign(const Tensor& points, int k, std::uint64_t seed) {
    if (points.rank() != 2) {
        throw ContractError("kmeans_assign: expected a rank-2 matrix");
    }
    if (k < 1 || static_cast<std::size_t>(k) > points.rows()) {
        throw ContractError("kmeans_assign: k " + std::to_string(k) +
                            " out of range for " + std::to_string(points.rows()) +
                            " rows");
    }
    KmeansRun best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int restart = 0; restart < 20; ++restart) {
        Rng rng(derive_seed(seed, kKmeansSalt, static_cast<std::uint64_t>(restart)));
        KmeansRun run = kmeans_once(points, k, rng);
        if (run.inertia < best.inertia) best = std::move(run);
    }
    return best.assignment;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) {
        throw ContractError("adjusted_rand_index: labelings differ in length");
    }
    if (a.empty()) throw ContractError("adjusted_rand_index: empty labelings");

    auto compact = [](const std::vector<int>& labels) {
        std::vector<int> ids(labels.size());
        std::map<int, int> seen;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            auto [it, inserted] = seen.emplace(labels[i], static_cast<int>(seen.size()));
            ids[i] = it->second;
        }
        return std::pair{ids, seen.size()};
    };
    auto [ia, ka] = compact(a);
    auto [ib, kb] = compact(b);

    std::vector<std::vector<std::size_t>> table(ka, std::vector<std::size_t>(kb, 0));
    for (std::size_t i = 0; i < ia.size(); ++i) {
        ++table[static_cast<std::size_t>(ia[i])][static_cast<std::size_t>(ib[i])];
    }

    double paired = 0.0;
    std::vector<std::size_t> row_sums(ka, 0), col_sums(kb, 0);
    for (std::size_t r = 0; r < ka; ++r) {
        for (std::size_t c = 0; c < kb; ++c) {
            paired += comb2(static_cast<double>(table[r][c]));
            row_sums[r] += table[r][c];
            col_sums[c] += table[r][c];
        }
    }
    double rows2 = 0.0, cols2 = 0.0;
    for (std::size_t s : row_sums) rows2 += comb2(static_cast<double>(s));
    for (std::size_t s : col_sums) cols2 += comb2(static_cast<double>(s));
    const double all2 = comb2(static_cast<double>(ia.size()));

    const double expected = all2 > 0.0 ? rows2 * cols2 / all2 : 0.0;
    const double maximum = 0.5 * (rows2 + cols2);
    const double denom = maximum - expected;
    if (denom == 0.0) {
        // Both partitions are trivial. Identical partitions still deserve a 1.
        bool identical = true;
        for (std::size_t r = 0; r < ka && identical; ++r) {
            std::size_t nonzero = 0;
            for (std::size_t c = 0; c < kb; ++c) nonzero += table[r][c] > 0 ? 1 : 0;
            identical = nonzero == 1;
        }
        if (ka != kb) identical = false;
        return identical ? 1.0 : 0.0;
    }
    return (paired - expected) / denom;
}

double cluster_agreement(const Tensor& embeddings, const std::vector<int>& true_clusters,
                         int k, std::uint64_t seed) {
    if (embeddings.rank() != 2 || embeddings.rows() != true_clusters.size()) {
        throw ContractError("cluster_agreement: embeddings rows must match labels");
    }
    if (k < 2) throw ContractError("cluster_agreement: k must be >= 2");
    if (static_cast<std::size_t>(k) > embeddings.rows()) {
        throw ContractError("cluster_agreement: k exceeds the number of rows");
    }

    const std::size_t dim = embeddings.cols();
    bool degenerate = true;
    for (std::size_t i = 1; i < embeddings.rows() && degenerate; ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
            if (embeddings.at2(i, j) != embeddings.at2(0, j)) {
                degenerate = false;
                break;
            }
        }
    }
    if (degenerate) {
        std::cerr << "warning: cluster_agreement on identical embeddings, scoring 0\n";
        return 0.0;
    }
    return adjusted_rand_index(kmeans_assign(embeddings, k, seed), true_clusters);
}

}  // namespace fedsplit
