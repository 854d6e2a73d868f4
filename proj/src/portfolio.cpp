#include "hcgan/portfolio.hpp"

#include "hcgan/errors.hpp"
#include "hcgan/market_data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace hcgan::pf {

namespace {

void require_finite(const MomentEstimate& m) {
    if (m.mean_returns.size() == 0) throw ValidationError("moments: no assets");
    if (m.covariance.rows() != m.mean_returns.size() || m.covariance.cols() != m.mean_returns.size()) {
        throw ValidationError("moments: covariance is " + std::to_string(m.covariance.rows()) + "x" +
                              std::to_string(m.covariance.cols()) + " for " + std::to_string(m.mean_returns.size()) +
                              " assets");
    }
    if (!m.mean_returns.allFinite() || !m.covariance.allFinite()) throw NumericError("moments contain non-finite values");
}

// Ratio e'v / sqrt(v'Sv) with the variance floor.
double ratio(const Vector& v, const Vector& e, const Matrix& s) {
    const double var = std::max(v.dot(s * v), kVarianceFloor);
    return v.dot(e) / std::sqrt(var);
}

Vector ratio_gradient(const Vector& v, const Vector& e, const Matrix& s) {
    const Vector sv = s * v;
    const double raw = v.dot(sv);
    const double var = std::max(raw, kVarianceFloor);
    const double sd = std::sqrt(var);
    if (raw < kVarianceFloor) return e / sd;
    return e / sd - (v.dot(e) / (var * sd)) * sv;
}

Vector ascend(Vector v, const Vector& e, const Matrix& s) {
    double f = ratio(v, e, s);
    double step = 1.0;
    for (int it = 0; it < 500; ++it) {
        const Vector g = ratio_gradient(v, e, s);
        bool moved = false;
        while (step > 1e-18) {
            const Vector cand = project_to_simplex(v + step * g);
            const double fc = ratio(cand, e, s);
            if (fc >= f + 1e-4 * g.dot(cand - v) && fc >= f) {
                const double change = (cand - v).cwiseAbs().maxCoeff();
                v = cand;
                f = fc;
                moved = change > 1e-14;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
    }
    return v;
}

struct Polished {
    Vector weights;
    bool certified = false;  // KKT conditions verified
};

// Active-set refinement of the tangency direction on the support of `v`:
// solves S_AA y = e_A, drops non-positive entries and adds violated ones.
std::optional<Polished> polish(const Vector& v, const Vector& e, const Matrix& s) {
    const Index n = v.size();
    std::vector<char> active(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) active[static_cast<std::size_t>(i)] = v(i) > 1e-10;
    const double scale = std::max({s.cwiseAbs().maxCoeff(), e.cwiseAbs().maxCoeff(), 1e-300});
    for (int iter = 0; iter < 4 * static_cast<int>(n) + 4; ++iter) {
        std::vector<Index> idx;
        for (Index i = 0; i < n; ++i) {
            if (active[static_cast<std::size_t>(i)]) idx.push_back(i);
        }
        if (idx.empty()) return std::nullopt;
        const auto k = static_cast<Index>(idx.size());
        Matrix sa(k, k);
        Vector ea(k);
        for (Index a = 0; a < k; ++a) {
            ea(a) = e(idx[static_cast<std::size_t>(a)]);
            for (Index b = 0; b < k; ++b) sa(a, b) = s(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
        }
        const Eigen::LDLT<Matrix> ldlt(sa);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return std::nullopt;
        const Vector ya = ldlt.solve(ea);
        if (!ya.allFinite() || (sa * ya - ea).norm() > 1e-9 * (ea.norm() + scale * ya.norm())) return std::nullopt;
        Index worst = 0;
        if (ya.minCoeff(&worst) <= 0.0) {
            if (k == 1) return std::nullopt;
            active[static_cast<std::size_t>(idx[static_cast<std::size_t>(worst)])] = 0;
            continue;
        }
        Vector y = Vector::Zero(n);
        for (Index a = 0; a < k; ++a) y(idx[static_cast<std::size_t>(a)]) = ya(a);
        const Vector slack = s * y - e;
        Index violator = -1;
        double most = -1e-12 * scale * std::max(1.0, y.cwiseAbs().maxCoeff());
        for (Index i = 0; i < n; ++i) {
            if (!active[static_cast<std::size_t>(i)] && slack(i) < most) {
                most = slack(i);
                violator = i;
            }
        }
        if (violator >= 0) {
            active[static_cast<std::size_t>(violator)] = 1;
            continue;
        }
        Polished out;
        out.weights = y / y.sum();
        const Eigen::LDLT<Matrix> full(s);
        out.certified = full.info() == Eigen::Success && full.isPositive() && full.vectorD().minCoeff() > 0.0;
        return out;
    }
    return std::nullopt;
}

Vector clean(Vector v) {
    v = v.cwiseMax(0.0).cwiseMin(1.0);
    return v / v.sum();
}

// Maximizes e'v / sqrt(v'Sv) over the simplex; e must have a positive entry.
Vector maximize_ratio(const Vector& e, const Matrix& s) {
    const Index n = e.size();
    const Vector uniform = Vector::Constant(n, 1.0 / static_cast<double>(n));
    std::vector<Vector> starts{uniform};
    for (Index i = 0; i < n; ++i) starts.push_back(Vector::Unit(n, i));

    std::vector<Vector> found;
    for (const Vector& start : starts) {
        const Vector v = ascend(start, e, s);
        found.push_back(v);
        if (auto p = polish(v, e, s)) {
            found.push_back(p->weights);
            // A certified optimum of the strictly convex reformulation is unique.
            if (p->certified) return clean(p->weights);
        }
    }
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& v : found) best = std::max(best, ratio(v, e, s));
    const Vector* pick = nullptr;
    double pick_distance = std::numeric_limits<double>::infinity();
    for (const auto& v : found) {
        if (ratio(v, e, s) < best - kTieTolerance) continue;
        const double d = (v - uniform).norm();
        if (d < pick_distance) {
            pick_distance = d;
            pick = &v;
        }
    }
    return clean(*pick);
}

}  // namespace

ReturnRisk portfolio_return_risk(const Vector& weights, const MomentEstimate& moments) {
    if (weights.size() != moments.mean_returns.size() || moments.covariance.rows() != weights.size() ||
        moments.covariance.cols() != weights.size()) {
        throw ValidationError("portfolio_return_risk: " + std::to_string(weights.size()) + " weights for " +
                              std::to_string(moments.mean_returns.size()) + " assets");
    }
    return {weights.dot(moments.mean_returns), weights.dot(moments.covariance * weights)};
}

double sharpe_ratio(const Vector& weights, const MomentEstimate& moments, double r_f) {
    const auto rr = portfolio_return_risk(weights, moments);
    if (!std::isfinite(rr.variance) || rr.variance < -1e-12) {
        throw NumericError("sharpe_ratio: portfolio variance " + std::to_string(rr.variance) +
                           " is degenerate; raise the covariance diagonal loading (kDiagonalLoading)");
    }
    return (rr.ret - r_f) / std::sqrt(std::max(rr.variance, kVarianceFloor));
}

MomentEstimate estimate_moments(const Matrix& returns, double loading) {
    if (returns.cols() < 2) {
        throw ValidationError("estimate_moments: need at least 2 return observations, got " +
                              std::to_string(returns.cols()));
    }
    if (!returns.allFinite()) throw NumericError("estimate_moments: non-finite returns");
    MomentEstimate m;
    m.sample_count = returns.cols();
    m.mean_returns = returns.rowwise().mean();
    const Matrix centered = returns.colwise() - m.mean_returns;
    m.covariance = centered * centered.transpose() / static_cast<double>(returns.cols() - 1);
    m.covariance = 0.5 * (m.covariance + m.covariance.transpose()).eval();
    const double load = loading * m.covariance.trace() / static_cast<double>(returns.rows());
    m.covariance.diagonal().array() += load;
    return m;
}

Vector project_to_simplex(const Vector& x) {
    const Index n = x.size();
    if (n == 0) throw ValidationError("project_to_simplex: empty vector");
    std::vector<double> u(x.data(), x.data() + n);
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumulative = 0.0;
    double theta = 0.0;
    for (Index j = 0; j < n; ++j) {
        cumulative += u[static_cast<std::size_t>(j)];
        const double t = (cumulative - 1.0) / static_cast<double>(j + 1);
        if (u[static_cast<std::size_t>(j)] - t > 0.0) theta = t;
    }
    return (x.array() - theta).cwiseMax(0.0).matrix();
}

bool on_simplex(const Vector& v, double tolerance) {
    if (v.size() == 0 || !v.allFinite()) return false;
    return std::abs(v.sum() - 1.0) <= tolerance && v.minCoeff() >= -tolerance && v.maxCoeff() <= 1.0 + tolerance;
}

Vector max_sharpe_weights(const MomentEstimate& moments, double r_f) {
    require_finite(moments);
    const Vector excess = moments.mean_returns.array() - r_f;
    if (excess.maxCoeff() <= 0.0) return min_variance_weights(moments.covariance);
    return maximize_ratio(excess, moments.covariance);
}

Vector min_variance_weights(const Matrix& covariance) {
    if (covariance.rows() == 0 || covariance.rows() != covariance.cols()) {
        throw ValidationError("min_variance_weights: covariance must be square and non-empty");
    }
    if (!covariance.allFinite()) throw NumericError("min_variance_weights: non-finite covariance");
    // 1'v = 1 on the simplex, so maximizing 1'v / sqrt(v'Sv) minimizes the variance.
    return maximize_ratio(Vector::Ones(covariance.rows()), covariance);
}

Vector markowitz_weights(const Matrix& prices, double r_f) {
    if (prices.cols() < 3) {
        throw ValidationError("markowitz_weights: need at least 3 prices per asset, got " +
                              std::to_string(prices.cols()));
    }
    return max_sharpe_weights(estimate_moments(data::simple_returns(prices)), r_f);
}

}  // namespace hcgan::pf
