#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "grulsif/rng.hpp"

namespace grulsif {

// Gaussian kernel K(x,y) = exp(-||x-y||^2 / (2 sigma^2)).
// The 1/(2 sigma^2) normalization of the exponent is fixed here and the
// sigma grids elsewhere in the library assume it.
struct GaussianKernel {
    double sigma;

    explicit GaussianKernel(double sigma_) : sigma(sigma_) {
        if (!(sigma > 0.0))
            throw std::invalid_argument("GaussianKernel: sigma must be positive");
    }

    double operator()(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
        if (x.size() != y.size())
            throw std::invalid_argument("kernel_eval: dimension mismatch");
        return std::exp(-(x - y).squaredNorm() / (2.0 * sigma * sigma));
    }
};

inline double kernel_eval(const GaussianKernel& k, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& y) {
    return k(x, y);
}

// Median of pairwise Euclidean distances over distinct pairs. Exact for
// n <= max_exact points; beyond that a seeded uniform subsample of
// max_exact points is used to cap the O(n^2) cost.
inline double median_heuristic(const std::vector<Eigen::VectorXd>& points,
                               std::size_t max_exact = 2000,
                               std::uint64_t seed = 0) {
    if (points.size() < 2)
        throw std::invalid_argument("median_heuristic: need at least 2 points");
    std::vector<const Eigen::VectorXd*> pts;
    pts.reserve(points.size());
    for (const auto& p : points) pts.push_back(&p);
    if (pts.size() > max_exact) {
        Rng rng(derive_seed(seed, 0xa11));
        rng.shuffle(pts);
        pts.resize(max_exact);
    }
    std::vector<double> dist;
    dist.reserve(pts.size() * (pts.size() - 1) / 2);
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j)
            dist.push_back((*pts[i] - *pts[j]).norm());
    const std::size_t mid = (dist.size() - 1) / 2;  // lower middle for even counts
    std::nth_element(dist.begin(), dist.begin() + mid, dist.end());
    const double med = dist[mid];
    if (!(med > 0.0))
        throw std::invalid_argument("median_heuristic: all points identical");
    return med;
}

// Shared kernel dictionary: L centers plus the Gaussian width defining
// the feature map phi(x) = (K(x,x_1),...,K(x,x_L)).
class Dictionary {
public:
    Dictionary(std::vector<Eigen::VectorXd> centers, GaussianKernel kernel)
        : centers_(std::move(centers)), kernel_(kernel) {
        if (centers_.empty())
            throw std::invalid_argument("Dictionary: needs at least one center");
        const auto d = centers_.front().size();
        for (const auto& c : centers_)
            if (c.size() != d)
                throw std::invalid_argument("Dictionary: inconsistent center dimensions");
    }

    int size() const { return static_cast<int>(centers_.size()); }
    int dim() const { return static_cast<int>(centers_.front().size()); }
    const std::vector<Eigen::VectorXd>& centers() const { return centers_; }
    const GaussianKernel& kernel() const { return kernel_; }
    double sigma() const { return kernel_.sigma; }

    Eigen::VectorXd feature_map(const Eigen::VectorXd& x) const {
        if (x.size() != dim())
            throw std::invalid_argument("feature_map: dimension mismatch");
        Eigen::VectorXd phi(size());
        for (int l = 0; l < size(); ++l) phi[l] = kernel_(x, centers_[l]);
        return phi;
    }

    // Largest off-diagonal |K| between distinct centers; 0 for L = 1.
    double coherence() const {
        double mu = 0.0;
        for (int a = 0; a < size(); ++a)
            for (int b = a + 1; b < size(); ++b)
                mu = std::max(mu, kernel_(centers_[a], centers_[b]));
        return mu;
    }

    Dictionary with_sigma(double sigma) const {
        return Dictionary(centers_, GaussianKernel(sigma));
    }

private:
    std::vector<Eigen::VectorXd> centers_;
    GaussianKernel kernel_;
};

inline Eigen::VectorXd feature_map(const Dictionary& dict,
                                   const Eigen::VectorXd& x) {
    return dict.feature_map(x);
}

}  // namespace grulsif
