#pragma once

#include "matxfer/autodiff/tape.hpp"
#include "matxfer/core/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace matxfer::ad {

struct GradCheckOptions {
    double eps = 1e-5;
    // Blocks larger than this are checked on a random coordinate subset, half
    // of it drawn from coordinates with non-zero analytic gradient.
    std::size_t max_coords_per_block = 24;
    // Denominator floor of the relative error.
    double floor = 1e-6;
    // Central differences at eps and eps/10 further apart than this (relative)
    // mean a kink (relu, clamp, table cell) lies inside the interval; the step
    // then shrinks by 10 until the two agree, at most max_refine times.
    // Agreement allows for roundoff of about round_ulps ulps of the loss.
    double converge_tol = 1e-5;
    int max_refine = 2;
    double round_ulps = 4;
    std::uint64_t seed = 1;
};

struct GradCheckEntry {
    std::string block;
    Eigen::Index index = 0;
    double analytic = 0;
    double numeric = 0;
    double rel_error = 0;
    double step = 0;
};

struct GradCheckResult {
    double max_rel_error = 0;
    std::size_t coords_checked = 0;
    std::size_t refined = 0;
    GradCheckEntry worst;
    std::vector<GradCheckEntry> per_block_worst;
};

using LossFn = std::function<Var<double>(Tape<double>&, const ParamStore<double>&)>;

inline double relative_error(double a, double b, double floor) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Compares backward() against central differences of `loss`.
inline GradCheckResult finite_diff_check(const LossFn& loss, ParamStore<double>& params,
                                         const GradCheckOptions& opt = {}) {
    if (!(opt.eps > 0)) throw ContractError("finite_diff_check: eps must be positive");
    Gradients<double> analytic;
    {
        Tape<double> tape;
        analytic = tape.backward(loss(tape, params));
    }
    auto eval = [&] {
        Tape<double> tape;
        return loss(tape, params).value()(0, 0);
    };

    const double f0 = std::abs(eval());
    auto roundoff = [&](double h) { return opt.round_ulps * std::numeric_limits<double>::epsilon() * f0 / h; };
    GradCheckResult result;
    Rng rng(opt.seed, 0x6772616463686bULL);
    for (std::size_t b = 0; b < params.size(); ++b) {
        const auto& ga = analytic.blocks[b];
        const Eigen::Index n = ga.size();
        std::vector<Eigen::Index> coords;
        if (static_cast<std::size_t>(n) <= opt.max_coords_per_block) {
            for (Eigen::Index i = 0; i < n; ++i) coords.push_back(i);
        } else {
            std::vector<Eigen::Index> nonzero;
            for (Eigen::Index i = 0; i < n; ++i)
                if (ga.data()[i] != 0) nonzero.push_back(i);
            const std::size_t want_nz = std::min(nonzero.size(), opt.max_coords_per_block / 2);
            for (std::size_t k = 0; k < want_nz; ++k) coords.push_back(nonzero[rng.below(nonzero.size())]);
            while (coords.size() < opt.max_coords_per_block) coords.push_back(static_cast<Eigen::Index>(rng.below(n)));
            std::sort(coords.begin(), coords.end());
            coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
        }
        GradCheckEntry block_worst{params.name(b), 0, 0, 0, -1, 0};
        for (Eigen::Index idx : coords) {
            double& w = params.mutable_block(b).data()[idx];
            const double saved = w;
            auto central = [&](double h) {
                w = saved + h;
                const double fp = eval();
                w = saved - h;
                const double fm = eval();
                w = saved;
                return (fp - fm) / (2 * h);
            };
            double h = opt.eps;
            double numeric = central(h);
            for (int k = 0; k < opt.max_refine; ++k) {
                const double finer = central(h / 10);
                const double scale = std::max({std::abs(numeric), std::abs(finer), opt.floor});
                if (std::abs(numeric - finer) <= opt.converge_tol * scale + 2 * roundoff(h / 10)) break;
                ++result.refined;
                h /= 10;
                numeric = finer;
            }
            const double a = ga.data()[idx];
            const double err = relative_error(a, numeric, opt.floor);
            ++result.coords_checked;
            if (err > block_worst.rel_error) block_worst = {params.name(b), idx, a, numeric, err, h};
        }
        if (block_worst.rel_error >= 0) {
            result.per_block_worst.push_back(block_worst);
            if (block_worst.rel_error > result.max_rel_error || result.worst.block.empty()) {
                result.max_rel_error = std::max(result.max_rel_error, block_worst.rel_error);
                if (block_worst.rel_error >= result.max_rel_error) result.worst = block_worst;
            }
        }
    }
    return result;
}

}  // namespace matxfer::ad
