#pragma once

// Named parameter blocks with constraint transforms. The sampler moves in the
// unconstrained space; everything else (priors, observables, draw output)
// reads constrained values through ParameterValues.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lap/errors.hpp"
#include "lap/math/correlation.hpp"

namespace lap {

struct Constraint {
    enum class Kind { real, positive, interval, correlation };

    Kind kind = Kind::real;
    double lo = 0.0;
    double hi = 0.0;
    std::size_t k = 0;

    static Constraint real() { return {}; }
    static Constraint positive() { return {Kind::positive}; }
    static Constraint interval(double a, double b) {
        if (!(a < b)) throw config_error("interval constraint needs lo < hi");
        return {Kind::interval, a, b};
    }
    static Constraint correlation(std::size_t k) {
        if (k < 2) throw config_error("correlation constraint needs k >= 2");
        return {Kind::correlation, 0.0, 0.0, k};
    }
};

struct ParameterBlock {
    std::string name;
    std::size_t dim = 1;  // number of stored values (k(k-1)/2 for correlation)
    Constraint constraint;
    std::size_t offset = 0;
};

class ParameterSpace;

/// Constrained values for one point, with correlation matrices materialised.
class ParameterValues {
public:
    ParameterValues() = default;

    double scalar(std::size_t block) const { return flat_[blocks_->at(block).offset]; }
    std::span<const double> block(std::size_t block) const {
        const auto& b = blocks_->at(block);
        return {flat_.data() + b.offset, b.dim};
    }
    const Eigen::MatrixXd& corr(std::size_t block) const { return corr_.at(block); }

    const std::vector<double>& flat() const noexcept { return flat_; }
    double log_jacobian() const noexcept { return log_jacobian_; }

private:
    friend class ParameterSpace;
    const std::vector<ParameterBlock>* blocks_ = nullptr;
    std::vector<double> flat_;
    std::vector<Eigen::MatrixXd> corr_;
    double log_jacobian_ = 0.0;
};

class ParameterSpace {
public:
    std::size_t add(std::string name, std::size_t dim, Constraint c) {
        for (const auto& b : blocks_)
            if (b.name == name) throw config_error("duplicate parameter block '" + name + "'");
        if (c.kind == Constraint::Kind::correlation) dim = math::corr_free_dim(c.k);
        if (dim == 0) throw config_error("parameter block '" + name + "' has zero dimension");
        blocks_.push_back({std::move(name), dim, c, dim_});
        dim_ += dim;
        return blocks_.size() - 1;
    }

    std::size_t dim() const noexcept { return dim_; }
    const std::vector<ParameterBlock>& blocks() const noexcept { return blocks_; }

    std::size_t index_of(const std::string& name) const {
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            if (blocks_[i].name == name) return i;
        throw config_error("unknown parameter block '" + name + "'");
    }

    /// Column names for constrained values: "t_med", "mu[1]", "Sigma[1,2]".
    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& b : blocks_) {
            if (b.constraint.kind == Constraint::Kind::correlation) {
                for (std::size_t n = 0; n < b.dim; ++n) {
                    auto [i, j] = math::corr_pair(n);
                    out.push_back(b.name + "[" + std::to_string(i + 1) + "," + std::to_string(j + 1) + "]");
                }
            } else if (b.dim == 1) {
                out.push_back(b.name);
            } else {
                for (std::size_t i = 0; i < b.dim; ++i) out.push_back(b.name + "[" + std::to_string(i + 1) + "]");
            }
        }
        return out;
    }

    ParameterValues constrain(std::span<const double> u) const {
        if (u.size() != dim_) throw domain_error("constrain: wrong vector length");
        ParameterValues pv;
        pv.blocks_ = &blocks_;
        pv.flat_.resize(dim_);
        pv.corr_.resize(blocks_.size());
        double lj = 0.0;
        for (std::size_t bi = 0; bi < blocks_.size(); ++bi) {
            const auto& b = blocks_[bi];
            const double* in = u.data() + b.offset;
            double* out = pv.flat_.data() + b.offset;
            switch (b.constraint.kind) {
            case Constraint::Kind::real:
                for (std::size_t i = 0; i < b.dim; ++i) out[i] = in[i];
                break;
            case Constraint::Kind::positive:
                for (std::size_t i = 0; i < b.dim; ++i) {
                    out[i] = std::exp(in[i]);
                    lj += in[i];
                }
                break;
            case Constraint::Kind::interval: {
                const double a = b.constraint.lo, w = b.constraint.hi - b.constraint.lo;
                for (std::size_t i = 0; i < b.dim; ++i) {
                    // log sigmoid and log(1 - sigmoid) without cancellation
                    const double x = in[i];
                    const double log_s = -std::log1p(std::exp(-std::fabs(x))) + std::min(x, 0.0);
                    const double log_1ms = log_s - x;
                    const double s = std::exp(log_s);
                    out[i] = a + w * s;
                    lj += std::log(w) + log_s + log_1ms;
                }
                break;
            }
            case Constraint::Kind::correlation: {
                auto t = math::corr_transform({in, b.dim}, b.constraint.k);
                const auto entries = math::corr_entries(t.matrix);
                for (std::size_t i = 0; i < b.dim; ++i) out[i] = entries[i];
                pv.corr_[bi] = std::move(t.matrix);
                lj += t.log_jacobian;
                break;
            }
            }
        }
        pv.log_jacobian_ = lj;
        return pv;
    }

    /// Inverse of constrain() applied to a flat constrained vector.
    std::vector<double> unconstrain(std::span<const double> x) const {
        if (x.size() != dim_) throw domain_error("unconstrain: wrong vector length");
        std::vector<double> u(dim_);
        for (const auto& b : blocks_) {
            const double* in = x.data() + b.offset;
            double* out = u.data() + b.offset;
            switch (b.constraint.kind) {
            case Constraint::Kind::real:
                for (std::size_t i = 0; i < b.dim; ++i) out[i] = in[i];
                break;
            case Constraint::Kind::positive:
                for (std::size_t i = 0; i < b.dim; ++i) {
                    if (!(in[i] > 0.0)) throw domain_error("unconstrain: '" + b.name + "' must be positive");
                    out[i] = std::log(in[i]);
                }
                break;
            case Constraint::Kind::interval:
                for (std::size_t i = 0; i < b.dim; ++i) {
                    const double s = (in[i] - b.constraint.lo) / (b.constraint.hi - b.constraint.lo);
                    if (!(s > 0.0 && s < 1.0)) throw domain_error("unconstrain: '" + b.name + "' outside its interval");
                    out[i] = std::log(s) - std::log1p(-s);
                }
                break;
            case Constraint::Kind::correlation: {
                const auto v = math::corr_inverse(math::corr_from_entries({in, b.dim}, b.constraint.k));
                for (std::size_t i = 0; i < b.dim; ++i) out[i] = v[i];
                break;
            }
            }
        }
        return u;
    }

    bool satisfies_constraints(std::span<const double> x) const {
        if (x.size() != dim_) return false;
        for (const auto& b : blocks_) {
            const double* in = x.data() + b.offset;
            switch (b.constraint.kind) {
            case Constraint::Kind::real:
                for (std::size_t i = 0; i < b.dim; ++i)
                    if (!std::isfinite(in[i])) return false;
                break;
            case Constraint::Kind::positive:
                for (std::size_t i = 0; i < b.dim; ++i)
                    if (!(in[i] > 0.0)) return false;
                break;
            case Constraint::Kind::interval:
                for (std::size_t i = 0; i < b.dim; ++i)
                    if (!(in[i] >= b.constraint.lo && in[i] <= b.constraint.hi)) return false;
                break;
            case Constraint::Kind::correlation:
                if (!math::is_positive_definite(math::corr_from_entries({in, b.dim}, b.constraint.k))) return false;
                break;
            }
        }
        return true;
    }

private:
    std::vector<ParameterBlock> blocks_;
    std::size_t dim_ = 0;
};

}  // namespace lap
