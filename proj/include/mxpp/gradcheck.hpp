#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mxpp/rng.hpp"
#include "mxpp/tensor.hpp"

namespace mxpp {

struct GradCheckEntry {
    std::string block;
    double max_rel_err = 0.0;
    size_t checked = 0;
    // Elements where the two-scale difference quotients disagreed: the
    // objective is locally non-smooth there (relu/abs/assignment kinks) and
    // central differencing is not a valid oracle at such points.
    size_t skipped_nonsmooth = 0;
};

struct GradCheckReport {
    double tol = 1e-4;
    std::vector<GradCheckEntry> entries;

    bool all_ok() const {
        for (const auto& e : entries)
            if (!(e.max_rel_err < tol)) return false;
        return true;
    }

    double worst() const {
        double w = 0.0;
        for (const auto& e : entries) w = std::max(w, e.max_rel_err);
        return w;
    }

    std::string summary() const {
        std::ostringstream os;
        for (const auto& e : entries) {
            os << (e.max_rel_err < tol ? "ok   " : "FAIL ") << e.block
               << "  max_rel_err=" << e.max_rel_err << "  (" << e.checked << " elements";
            if (e.skipped_nonsmooth) os << ", " << e.skipped_nonsmooth << " non-smooth skipped";
            os << ")\n";
        }
        return os.str();
    }
};

struct GradCheckOptions {
    double h = 1e-5;
    double tol = 1e-4;
    // 0 = check every element of every block.
    int max_samples_per_block = 0;
    uint64_t sample_seed = 1234;
    // Negative-control hook: analytic gradients are multiplied by this factor
    // before the comparison. Anything other than 1.0 must be reported as a
    // failure by a healthy checker.
    double corrupt_factor = 1.0;
};

// Central-difference verification of tape gradients. `f` must rebuild its
// computation from the current parameter values on every call; the tape run
// happens once, the perturbed evaluations run with recording disabled.
inline GradCheckReport grad_check(const std::function<Tensor<double>()>& f,
                                  const std::vector<std::pair<std::string, Tensor<double>>>& params,
                                  const GradCheckOptions& opt = {}) {
    GradCheckReport report;
    report.tol = opt.tol;

    // Analytic pass.
    std::vector<std::vector<double>> analytic;
    {
        for (auto& p : params) const_cast<Tensor<double>&>(p.second).zero_grad();
        Tape<double> tape;
        TapeScope<double> scope(tape);
        Tensor<double> loss = f();
        tape.backward(loss);
        for (auto& p : params) {
            auto& t = const_cast<Tensor<double>&>(p.second);
            std::vector<double> g(t.numel(), 0.0);
            if (t.has_grad()) g = t.grad();
            if (opt.corrupt_factor != 1.0)
                for (double& v : g) v *= opt.corrupt_factor;
            analytic.push_back(std::move(g));
        }
    }

    // Finite-difference pass, recording disabled.
    NoTapeScope<double> nograd;
    Rng rng(opt.sample_seed);
    for (size_t bi = 0; bi < params.size(); ++bi) {
        auto& t = const_cast<Tensor<double>&>(params[bi].second);
        const size_t n = t.numel();
        std::vector<size_t> indices;
        if (opt.max_samples_per_block <= 0 || n <= static_cast<size_t>(opt.max_samples_per_block)) {
            indices.resize(n);
            for (size_t i = 0; i < n; ++i) indices[i] = i;
        } else {
            std::set<size_t> chosen;
            while (chosen.size() < static_cast<size_t>(opt.max_samples_per_block))
                chosen.insert(static_cast<size_t>(rng.below(n)));
            indices.assign(chosen.begin(), chosen.end());
        }

        GradCheckEntry entry;
        entry.block = params[bi].first;
        for (size_t idx : indices) {
            const double saved = t.data()[idx];
            auto fd_at = [&](double h) {
                t.data()[idx] = saved + h;
                const double fp = f().item();
                t.data()[idx] = saved - h;
                const double fm = f().item();
                t.data()[idx] = saved;
                return (fp - fm) / (2.0 * h);
            };
            const double fd1 = fd_at(opt.h);
            const double fd2 = fd_at(opt.h * 0.5);
            const double dd = std::abs(fd1 - fd2) / std::max({std::abs(fd1), std::abs(fd2), 1e-4});
            if (dd > opt.tol) {
                // The quotient is scale-dependent: a kink sits inside the
                // stencil. A wrong analytic gradient cannot hide here; it
                // disagrees with scale-consistent quotients elsewhere.
                ++entry.skipped_nonsmooth;
                continue;
            }
            ++entry.checked;
            const double g = analytic[bi][idx];
            const double denom = std::max({std::abs(fd2), std::abs(g), 1e-4});
            entry.max_rel_err = std::max(entry.max_rel_err, std::abs(fd2 - g) / denom);
        }
        report.entries.push_back(std::move(entry));
    }
    return report;
}

} // namespace mxpp
