#include "dvhn/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <numeric>
#include <random>
#include <sstream>

#include "dvhn/errors.hpp"
#include "dvhn/losses.hpp"
#include "dvhn/model.hpp"

namespace dvhn::verify {

namespace {

constexpr double kKinkClearance = 1e-3;

struct GradCase {
    ModelParams params;
    Eigen::MatrixXd inputs;
    std::vector<std::uint32_t> labels;
    Eigen::MatrixXd codes;
    double margin = 0.3;
    double lambda = 1.0;
    double sigma = 1.0;
    double eta = 1.0;
};

Eigen::MatrixXd normal_matrix(Eigen::Index r, Eigen::Index c, double sd, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, sd);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
}

GradCase draw_case(std::mt19937_64& rng) {
    auto pick = [&rng](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    auto real = [&rng](double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(rng);
    };
    GradCase c;
    const int p = pick(2, 4);
    const int k1 = p == 4 ? 2 : pick(2, 8 / p);
    const int classes = p + pick(0, 4);
    const int depth = pick(0, 2);
    const int m = pick(2, 16);
    const int m_prime = depth == 0 ? m : pick(2, 16);
    const int bits = pick(2, 16);

    int in = m;
    for (int l = 0; l < depth; ++l) {
        DenseLayer layer;
        layer.weight = normal_matrix(m_prime, in, std::sqrt(2.0 / in), rng);
        layer.bias = normal_matrix(m_prime, 1, 0.1, rng);
        layer.rectify = true;
        c.params.adapter.push_back(std::move(layer));
        in = m_prime;
    }
    c.params.hash_layer.weight = normal_matrix(bits, m_prime, 0.5, rng);
    c.params.hash_layer.bias = normal_matrix(bits, 1, 0.1, rng);
    c.params.identity_head.weight = normal_matrix(classes, m_prime, 0.5, rng);
    c.params.identity_head.bias = normal_matrix(classes, 1, 0.1, rng);

    std::vector<std::uint32_t> ids(static_cast<std::size_t>(classes));
    std::iota(ids.begin(), ids.end(), 0U);
    std::shuffle(ids.begin(), ids.end(), rng);
    for (int i = 0; i < p; ++i) c.labels.insert(c.labels.end(), static_cast<std::size_t>(k1), ids[i]);

    const auto batch = static_cast<Eigen::Index>(c.labels.size());
    c.inputs = normal_matrix(batch, m, 1.0, rng);
    c.codes = normal_matrix(batch, bits, 1.0, rng).unaryExpr(
        [](double v) { return v >= 0.0 ? 1.0 : -1.0; });
    c.margin = real(0.0, 1.0);
    c.lambda = real(0.5, 2.0);
    c.sigma = real(0.5, 2.0);
    c.eta = real(0.5, 2.0);
    return c;
}

bool triplet_is_smooth(const Eigen::MatrixXd& h, const std::vector<std::uint32_t>& labels,
                       double margin) {
    const auto n = h.rows();
    for (Eigen::Index a = 0; a < n; ++a) {
        std::vector<double> pos;
        std::vector<double> neg;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == a) continue;
            const double d = (h.row(a) - h.row(j)).norm();
            if (d < kKinkClearance) return false;
            (labels[j] == labels[a] ? pos : neg).push_back(d);
        }
        std::sort(pos.begin(), pos.end(), std::greater<>());
        std::sort(neg.begin(), neg.end());
        if (pos.size() > 1 && pos[0] - pos[1] < kKinkClearance) return false;
        if (neg.size() > 1 && neg[1] - neg[0] < kKinkClearance) return false;
        if (std::abs(margin + pos[0] - neg[0]) < kKinkClearance) return false;
    }
    return true;
}

bool case_is_smooth(const GradCase& c) {
    const auto trace = forward(c.params, c.inputs);
    for (const auto& pre : trace.pre_activations) {
        if ((pre.array().abs() < kKinkClearance).any()) return false;
    }
    return triplet_is_smooth(trace.hash, c.labels, c.margin);
}

GradCase draw_smooth_case(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        auto c = draw_case(rng);
        if (case_is_smooth(c)) return c;
    }
    throw ContractError("gradient check: no smooth configuration found for seed " +
                        std::to_string(seed));
}

// Finite-difference oracle: plain loops in long double, independent of
// forward() and the loss functions.
using Ext = long double;

struct ExtOutputs {
    std::vector<Ext> hash;    // batch x K, row-major
    std::vector<Ext> logits;  // batch x C, row-major
};

// Reads one layer from a flat parameter vector in for_each_tensor order
// (Eigen column-major weights) and applies it to each row of `in`.
std::vector<Ext> ext_dense(std::span<const Ext> flat, std::size_t& offset, std::size_t rows,
                           std::size_t in_dim, std::size_t out_dim, const std::vector<Ext>& in,
                           bool rectify) {
    std::vector<Ext> out(rows * out_dim);
    const std::size_t bias_at = offset + out_dim * in_dim;
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t o = 0; o < out_dim; ++o) {
            Ext z = flat[bias_at + o];
            for (std::size_t j = 0; j < in_dim; ++j) {
                z += flat[offset + o + j * out_dim] * in[i * in_dim + j];
            }
            out[i * out_dim + o] = rectify && z < 0 ? Ext{0} : z;
        }
    }
    offset = bias_at + out_dim;
    return out;
}

ExtOutputs ext_forward(const GradCase& c, std::span<const Ext> flat) {
    const auto rows = static_cast<std::size_t>(c.inputs.rows());
    std::size_t width = static_cast<std::size_t>(c.inputs.cols());
    std::vector<Ext> act(rows * width);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < width; ++j) {
            act[i * width + j] = c.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
    }
    std::size_t offset = 0;
    for (const auto& layer : c.params.adapter) {
        const auto out_dim = static_cast<std::size_t>(layer.out_dim());
        act = ext_dense(flat, offset, rows, width, out_dim, act, layer.rectify);
        width = out_dim;
    }
    ExtOutputs o;
    o.hash = ext_dense(flat, offset, rows, width,
                       static_cast<std::size_t>(c.params.hash_layer.out_dim()), act, false);
    o.logits = ext_dense(flat, offset, rows, width,
                         static_cast<std::size_t>(c.params.identity_head.out_dim()), act, false);
    return o;
}

Ext ext_triplet(const GradCase& c, const std::vector<Ext>& h, std::size_t bits) {
    const std::size_t n = c.labels.size();
    auto dist = [&](std::size_t a, std::size_t b) {
        Ext s = 0;
        for (std::size_t k = 0; k < bits; ++k) {
            const Ext d = h[a * bits + k] - h[b * bits + k];
            s += d * d;
        }
        return std::sqrt(s);
    };
    Ext total = 0;
    for (std::size_t a = 0; a < n; ++a) {
        Ext hardest_pos = -1;
        Ext hardest_neg = std::numeric_limits<Ext>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == a) continue;
            const Ext d = dist(a, j);
            if (c.labels[j] == c.labels[a]) {
                hardest_pos = std::max(hardest_pos, d);
            } else {
                hardest_neg = std::min(hardest_neg, d);
            }
        }
        total += std::max(Ext{0}, static_cast<Ext>(c.margin) + hardest_pos - hardest_neg);
    }
    return total / static_cast<Ext>(n);
}

Ext ext_identity(const GradCase& c, const std::vector<Ext>& logits, std::size_t classes) {
    const std::size_t n = c.labels.size();
    Ext total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        Ext top = logits[i * classes];
        for (std::size_t k = 1; k < classes; ++k) top = std::max(top, logits[i * classes + k]);
        Ext z = 0;
        for (std::size_t k = 0; k < classes; ++k) z += std::exp(logits[i * classes + k] - top);
        total += std::log(z) + top - logits[i * classes + c.labels[i]];
    }
    return total / static_cast<Ext>(n);
}

Ext ext_coupling(const GradCase& c, const std::vector<Ext>& h, std::size_t bits) {
    const std::size_t n = c.labels.size();
    Ext total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < bits; ++k) {
            const Ext d = static_cast<Ext>(c.codes(static_cast<Eigen::Index>(i),
                                                   static_cast<Eigen::Index>(k))) -
                          h[i * bits + k];
            total += d * d;
        }
    }
    return total / static_cast<Ext>(n);
}

Ext ext_loss(LossTerm term, const GradCase& c, const ExtOutputs& o) {
    const auto bits = static_cast<std::size_t>(c.params.hash_layer.out_dim());
    const auto classes = static_cast<std::size_t>(c.params.identity_head.out_dim());
    switch (term) {
        case LossTerm::triplet: return ext_triplet(c, o.hash, bits);
        case LossTerm::identity: return ext_identity(c, o.logits, classes);
        case LossTerm::coupling: return ext_coupling(c, o.hash, bits);
        case LossTerm::combined:
            return static_cast<Ext>(c.lambda) * ext_triplet(c, o.hash, bits) +
                   static_cast<Ext>(c.sigma) * ext_identity(c, o.logits, classes) +
                   static_cast<Ext>(c.eta) * ext_coupling(c, o.hash, bits);
    }
    return 0;
}

std::vector<double> ext_central_difference(const std::function<Ext(std::span<const Ext>)>& f,
                                           std::vector<Ext> x, double step) {
    std::vector<double> out(x.size());
    const Ext h = step;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Ext saved = x[i];
        x[i] = saved + h;
        const Ext up = f(x);
        x[i] = saved - h;
        const Ext down = f(x);
        x[i] = saved;
        out[i] = static_cast<double>((up - down) / (2 * h));
    }
    return out;
}

// Upstream partials (d/dh, d/dlogits) of the chosen term.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> upstream(LossTerm term, const GradCase& c,
                                                     const Eigen::MatrixXd& h,
                                                     const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd gh = Eigen::MatrixXd::Zero(h.rows(), h.cols());
    Eigen::MatrixXd gl = Eigen::MatrixXd::Zero(logits.rows(), logits.cols());
    const bool all = term == LossTerm::combined;
    if (term == LossTerm::triplet || all) {
        gh += (all ? c.lambda : 1.0) * batch_hard_triplet(h, c.labels, c.margin).grad;
    }
    if (term == LossTerm::identity || all) {
        gl += (all ? c.sigma : 1.0) * identity_loss(logits, c.labels).grad;
    }
    if (term == LossTerm::coupling || all) {
        gh += (all ? c.eta : 1.0) * quant_coupling(h, c.codes).grad;
    }
    return {gh, gl};
}

void apply_fault(std::vector<double>& g, double fault) {
    if (fault == 0.0) return;
    for (auto& v : g) v = v * (1.0 + fault) + fault * 1e-3;
}

GradCheckResult compare(const std::vector<double>& analytic, const std::vector<double>& numeric,
                        double floor, const std::function<std::string(std::size_t)>& name) {
    GradCheckResult r;
    r.num_checked = analytic.size();
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double e = relative_error(analytic[i], numeric[i], floor);
        if (e >= r.max_rel_error) {
            r.max_rel_error = e;
            std::ostringstream s;
            s.precision(10);
            s << name(i) << " analytic=" << analytic[i] << " numeric=" << numeric[i];
            r.worst = s.str();
        }
    }
    return r;
}

}  // namespace

double relative_error(double a, double b, double floor) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double step) {
    std::vector<double> probe(x.begin(), x.end());
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + step;
        const double up = f(probe);
        probe[i] = x[i] - step;
        const double down = f(probe);
        probe[i] = x[i];
        out[i] = (up - down) / (2.0 * step);
    }
    return out;
}

const char* to_string(LossTerm term) {
    switch (term) {
        case LossTerm::triplet: return "triplet";
        case LossTerm::identity: return "identity";
        case LossTerm::coupling: return "coupling";
        case LossTerm::combined: return "combined";
    }
    return "?";
}

GradCheckResult network_gradient_check(LossTerm term, std::uint64_t seed,
                                       const GradCheckOptions& options) {
    const GradCase c = draw_smooth_case(seed);
    const auto trace = forward(c.params, c.inputs);
    const auto [gh, gl] = upstream(term, c, trace.hash, trace.logits);
    auto analytic = flatten(backward(c.params, trace, gh, gl));
    apply_fault(analytic, options.fault);

    const auto x = flatten(c.params);
    const auto numeric = ext_central_difference(
        [&](std::span<const Ext> v) { return ext_loss(term, c, ext_forward(c, v)); },
        std::vector<Ext>(x.begin(), x.end()), options.step);
    return compare(analytic, numeric, options.floor,
                   [](std::size_t i) { return "param[" + std::to_string(i) + "]"; });
}

GradCheckResult loss_input_gradient_check(LossTerm term, std::uint64_t seed,
                                          const GradCheckOptions& options) {
    const GradCase c = draw_smooth_case(seed);
    const auto trace = forward(c.params, c.inputs);
    const auto [gh, gl] = upstream(term, c, trace.hash, trace.logits);

    std::vector<double> analytic(gh.data(), gh.data() + gh.size());
    analytic.insert(analytic.end(), gl.data(), gl.data() + gl.size());
    apply_fault(analytic, options.fault);

    // Row-major copies of h and logits; the analytic side is column-major.
    const auto batch = static_cast<std::size_t>(trace.hash.rows());
    const auto bits = static_cast<std::size_t>(trace.hash.cols());
    const auto classes = static_cast<std::size_t>(trace.logits.cols());
    const std::size_t h_size = batch * bits;
    std::vector<Ext> x(h_size + batch * classes);
    std::vector<std::size_t> to_analytic(x.size());
    for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t k = 0; k < bits; ++k) {
            x[i * bits + k] = trace.hash(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
            to_analytic[i * bits + k] = i + k * batch;
        }
        for (std::size_t k = 0; k < classes; ++k) {
            x[h_size + i * classes + k] =
                trace.logits(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
            to_analytic[h_size + i * classes + k] = h_size + i + k * batch;
        }
    }
    const auto numeric = ext_central_difference(
        [&](std::span<const Ext> v) {
            ExtOutputs o;
            o.hash.assign(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h_size));
            o.logits.assign(v.begin() + static_cast<std::ptrdiff_t>(h_size), v.end());
            return ext_loss(term, c, o);
        },
        std::move(x), options.step);
    std::vector<double> analytic_row_major(analytic.size());
    for (std::size_t i = 0; i < analytic.size(); ++i) analytic_row_major[i] = analytic[to_analytic[i]];
    analytic = std::move(analytic_row_major);
    return compare(analytic, numeric, options.floor, [h_size](std::size_t i) {
        return i < h_size ? "h[" + std::to_string(i) + "]"
                          : "logits[" + std::to_string(i - h_size) + "]";
    });
}

double best_row_objective(const Eigen::MatrixXd& classifier, const Eigen::MatrixXd& target,
                          const Eigen::MatrixXd& codes, Eigen::Index row) {
    const auto n = codes.cols();
    if (n > 20) throw ShapeError("best_row_objective: N must be <= 20 for enumeration");
    Eigen::MatrixXd b = codes;
    double best = std::numeric_limits<double>::infinity();
    for (std::uint64_t pattern = 0; pattern < (std::uint64_t{1} << n); ++pattern) {
        for (Eigen::Index j = 0; j < n; ++j) b(row, j) = ((pattern >> j) & 1U) ? 1.0 : -1.0;
        // Objective written out term by term, not via the solver's helper.
        double quad = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index cidx = 0; cidx < classifier.cols(); ++cidx) {
                double s = 0.0;
                for (Eigen::Index k = 0; k < b.rows(); ++k) s += classifier(k, cidx) * b(k, i);
                quad += s * s;
            }
        }
        double lin = 0.0;
        for (Eigen::Index k = 0; k < b.rows(); ++k) {
            for (Eigen::Index i = 0; i < n; ++i) lin += target(k, i) * b(k, i);
        }
        best = std::min(best, quad - 2.0 * lin);
    }
    return best;
}

namespace {

double objective_loops(const Eigen::MatrixXd& classifier, const Eigen::MatrixXd& target,
                       const Eigen::MatrixXd& b) {
    double quad = 0.0;
    for (Eigen::Index i = 0; i < b.cols(); ++i) {
        for (Eigen::Index cidx = 0; cidx < classifier.cols(); ++cidx) {
            double s = 0.0;
            for (Eigen::Index k = 0; k < b.rows(); ++k) s += classifier(k, cidx) * b(k, i);
            quad += s * s;
        }
    }
    double lin = 0.0;
    for (Eigen::Index k = 0; k < b.rows(); ++k) {
        for (Eigen::Index i = 0; i < b.cols(); ++i) lin += target(k, i) * b(k, i);
    }
    return quad - 2.0 * lin;
}

}  // namespace

Eigen::Index first_suboptimal_row_update(const Eigen::MatrixXd& classifier,
                                         const Eigen::MatrixXd& target,
                                         const Eigen::MatrixXd& before,
                                         const Eigen::MatrixXd& after, double tol) {
    Eigen::MatrixXd state = before;
    for (Eigen::Index row = 0; row < before.rows(); ++row) {
        state.row(row) = after.row(row);
        const double value = objective_loops(classifier, target, state);
        if (best_row_objective(classifier, target, state, row) < value - tol) return row;
    }
    return -1;
}

std::vector<Eigen::Index> suboptimal_rows(const Eigen::MatrixXd& classifier,
                                          const Eigen::MatrixXd& target,
                                          const Eigen::MatrixXd& codes, double tol) {
    const double value = objective_loops(classifier, target, codes);
    std::vector<Eigen::Index> out;
    for (Eigen::Index row = 0; row < codes.rows(); ++row) {
        if (best_row_objective(classifier, target, codes, row) < value - tol) out.push_back(row);
    }
    return out;
}

std::uint32_t naive_hamming(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    std::uint32_t d = 0;
    for (Eigen::Index j = 0; j < a.size(); ++j) d += (a[j] != b[j]) ? 1U : 0U;
    return d;
}

RankedList naive_rank(const Eigen::VectorXd& query, const Eigen::MatrixXd& gallery_rows) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> keyed;
    for (Eigen::Index i = 0; i < gallery_rows.rows(); ++i) {
        keyed.emplace_back(naive_hamming(query, gallery_rows.row(i).transpose()),
                           static_cast<std::uint32_t>(i));
    }
    std::sort(keyed.begin(), keyed.end());
    RankedList out;
    for (const auto& [d, i] : keyed) {
        out.indices.push_back(i);
        out.distances.push_back(d);
    }
    return out;
}

}  // namespace dvhn::verify
