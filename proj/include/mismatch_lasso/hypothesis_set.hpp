#pragma once

// Convex hypothesis sets K: support functions h_K(g) = sup_{h in K} <g, h>
// and Euclidean projections.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "errors.hpp"

namespace mismatch_lasso {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

class HypothesisSet;

struct L2Ball {
    double radius = 1.0;
};

struct L1Ball {
    double radius = 1.0;
};

struct Box {
    VectorXd lo;
    VectorXd hi;
};

// { B c : ||c|| <= radius } for a basis B with orthonormal columns. An
// infinite radius gives the whole subspace (unbounded).
struct Subspace {
    MatrixXd basis;
    double radius = std::numeric_limits<double>::infinity();
};

// inner + center
struct Shifted {
    std::shared_ptr<const HypothesisSet> inner;
    VectorXd center;
};

// M * inner. Has a support function but no projection.
struct LinearImage {
    MatrixXd map;
    std::shared_ptr<const HypothesisSet> inner;
};

// R^p; unbounded, projection is the identity.
struct FullSpace {};

class HypothesisSet {
public:
    using Variant = std::variant<L2Ball, L1Ball, Box, Subspace, Shifted, LinearImage, FullSpace>;

    HypothesisSet(Variant v) : v_(std::move(v)) { validate(); }  // NOLINT(google-explicit-constructor)

    static HypothesisSet l2_ball(double r) { return HypothesisSet(L2Ball{r}); }
    static HypothesisSet l1_ball(double r) { return HypothesisSet(L1Ball{r}); }
    static HypothesisSet box(VectorXd lo, VectorXd hi) { return HypothesisSet(Box{std::move(lo), std::move(hi)}); }
    static HypothesisSet subspace(MatrixXd basis, double r = std::numeric_limits<double>::infinity()) {
        return HypothesisSet(Subspace{std::move(basis), r});
    }
    static HypothesisSet full_space() { return HypothesisSet(FullSpace{}); }
    static HypothesisSet singleton_zero(Index d) {
        return box(VectorXd::Zero(d), VectorXd::Zero(d));
    }
    static HypothesisSet shifted(HypothesisSet inner, VectorXd center) {
        return HypothesisSet(Shifted{std::make_shared<const HypothesisSet>(std::move(inner)), std::move(center)});
    }
    static HypothesisSet linear_image(MatrixXd m, HypothesisSet inner) {
        return HypothesisSet(LinearImage{std::move(m), std::make_shared<const HypothesisSet>(std::move(inner))});
    }

    const Variant& variant() const noexcept { return v_; }

    template <class T>
    const T* get_if() const noexcept {
        return std::get_if<T>(&v_);
    }

    bool bounded() const {
        return std::visit(
            [](const auto& k) -> bool {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, Subspace>) {
                    return std::isfinite(k.radius) || k.basis.cols() == 0;
                } else if constexpr (std::is_same_v<T, Shifted> || std::is_same_v<T, LinearImage>) {
                    return k.inner->bounded();
                } else if constexpr (std::is_same_v<T, FullSpace>) {
                    return false;
                } else {
                    return true;
                }
            },
            v_);
    }

    std::string name() const {
        static constexpr const char* names[] = {"l2_ball", "l1_ball", "box", "subspace", "shifted", "linear_image",
                                                "full_space"};
        return names[v_.index()];
    }

    // The same set scaled by lambda > 0.
    HypothesisSet scaled(double lambda) const {
        detail::require(lambda > 0.0, "HypothesisSet::scaled: lambda must be > 0");
        return std::visit(
            [lambda](const auto& k) -> HypothesisSet {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, L2Ball>) {
                    return l2_ball(lambda * k.radius);
                } else if constexpr (std::is_same_v<T, L1Ball>) {
                    return l1_ball(lambda * k.radius);
                } else if constexpr (std::is_same_v<T, Box>) {
                    return box(lambda * k.lo, lambda * k.hi);
                } else if constexpr (std::is_same_v<T, Subspace>) {
                    return subspace(k.basis, lambda * k.radius);
                } else if constexpr (std::is_same_v<T, Shifted>) {
                    return shifted(k.inner->scaled(lambda), lambda * k.center);
                } else if constexpr (std::is_same_v<T, LinearImage>) {
                    return linear_image(k.map, k.inner->scaled(lambda));
                } else {
                    return full_space();
                }
            },
            v_);
    }

private:
    void validate() const {
        std::visit(
            [](const auto& k) {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, L2Ball> || std::is_same_v<T, L1Ball>) {
                    detail::require(k.radius > 0.0 && std::isfinite(k.radius), "ball radius must be finite and > 0");
                } else if constexpr (std::is_same_v<T, Box>) {
                    detail::require_dims(k.lo.size() == k.hi.size(), "box: lo and hi differ in length");
                    detail::require((k.lo.array() <= k.hi.array()).all(), "box: lo must be <= hi componentwise");
                } else if constexpr (std::is_same_v<T, Subspace>) {
                    detail::require(k.radius > 0.0, "subspace: radius must be > 0");
                    const Index r = k.basis.cols();
                    if (r > 0) {
                        const MatrixXd gram = k.basis.transpose() * k.basis;
                        if ((gram - MatrixXd::Identity(r, r)).cwiseAbs().maxCoeff() > 1e-10) {
                            throw ParameterError("subspace: basis is not orthonormal");
                        }
                    }
                } else if constexpr (std::is_same_v<T, Shifted> || std::is_same_v<T, LinearImage>) {
                    detail::require(k.inner != nullptr, "composite set without inner set");
                }
            },
            v_);
    }

    Variant v_;
};

// h_K(g) = sup_{h in K} <g, h>. Convention for images: h_{MK}(g) = h_K(M^T g).
inline double support_function(const HypothesisSet& set, const VectorXd& g) {
    if (!set.bounded()) throw UnsupportedError("support_function: unbounded hypothesis set " + set.name());
    return std::visit(
        [&g](const auto& k) -> double {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, L2Ball>) {
                return k.radius * g.norm();
            } else if constexpr (std::is_same_v<T, L1Ball>) {
                return k.radius * g.cwiseAbs().maxCoeff();
            } else if constexpr (std::is_same_v<T, Box>) {
                detail::require_dims(k.lo.size() == g.size(), "support_function: box dimension mismatch");
                return (k.lo.array() * g.array()).max(k.hi.array() * g.array()).sum();
            } else if constexpr (std::is_same_v<T, Subspace>) {
                detail::require_dims(k.basis.rows() == g.size(), "support_function: subspace dimension mismatch");
                if (k.basis.cols() == 0) return 0.0;
                return k.radius * (k.basis.transpose() * g).norm();
            } else if constexpr (std::is_same_v<T, Shifted>) {
                detail::require_dims(k.center.size() == g.size(), "support_function: shift dimension mismatch");
                return g.dot(k.center) + support_function(*k.inner, g);
            } else if constexpr (std::is_same_v<T, LinearImage>) {
                detail::require_dims(k.map.rows() == g.size(), "support_function: image dimension mismatch");
                return support_function(*k.inner, k.map.transpose() * g);
            } else {
                return std::numeric_limits<double>::infinity();
            }
        },
        set.variant());
}

namespace detail {

// Projection onto { x : ||x||_1 <= r } by sorting |v| and soft-thresholding.
inline VectorXd project_l1_ball(const VectorXd& v, double r) {
    if (v.lpNorm<1>() <= r) return v;
    std::vector<double> u(v.data(), v.data() + v.size());
    for (double& x : u) x = std::abs(x);
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumsum = 0.0;
    double theta = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        cumsum += u[j];
        const double t = (cumsum - r) / static_cast<double>(j + 1);
        if (u[j] - t > 0.0) theta = t;
    }
    VectorXd out(v.size());
    for (Index i = 0; i < v.size(); ++i) {
        const double m = std::max(std::abs(v(i)) - theta, 0.0);
        out(i) = v(i) >= 0.0 ? m : -m;
    }
    return out;
}

}  // namespace detail

// Euclidean projection onto K. LinearImage has no direct projection.
inline VectorXd project(const HypothesisSet& set, const VectorXd& v) {
    return std::visit(
        [&v](const auto& k) -> VectorXd {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, L2Ball>) {
                const double nv = v.norm();
                return nv <= k.radius ? v : VectorXd((k.radius / nv) * v);
            } else if constexpr (std::is_same_v<T, L1Ball>) {
                return detail::project_l1_ball(v, k.radius);
            } else if constexpr (std::is_same_v<T, Box>) {
                detail::require_dims(k.lo.size() == v.size(), "project: box dimension mismatch");
                return v.cwiseMax(k.lo).cwiseMin(k.hi);
            } else if constexpr (std::is_same_v<T, Subspace>) {
                detail::require_dims(k.basis.rows() == v.size(), "project: subspace dimension mismatch");
                VectorXd c = k.basis.transpose() * v;
                const double nc = c.norm();
                if (nc > k.radius) c *= k.radius / nc;
                return k.basis * c;
            } else if constexpr (std::is_same_v<T, Shifted>) {
                detail::require_dims(k.center.size() == v.size(), "project: shift dimension mismatch");
                return k.center + project(*k.inner, v - k.center);
            } else if constexpr (std::is_same_v<T, LinearImage>) {
                throw UnsupportedError("project: linear images have no direct projection");
            } else {
                return v;
            }
        },
        set.variant());
}

// True when v lies in K up to `tol` (distance to its projection).
inline bool contains(const HypothesisSet& set, const VectorXd& v, double tol = 1e-10) {
    return (project(set, v) - v).norm() <= tol * std::max(1.0, v.norm());
}

}  // namespace mismatch_lasso
