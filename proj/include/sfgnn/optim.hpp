#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "sfgnn/matrix.hpp"

namespace sfgnn {

/// Named parameter blocks, ordered by name for deterministic iteration.
using ParamMap = std::map<std::string, DenseMatrix>;
using GradMap = std::map<std::string, DenseMatrix>;

/// base_lr scaled linearly down to 0 at total_steps.
inline double linear_decay_lr(std::size_t step, std::size_t total_steps, double base_lr) {
    if (total_steps < 1) throw std::invalid_argument("linear_decay_lr: total_steps must be >= 1");
    if (step > total_steps) {
        throw std::invalid_argument("linear_decay_lr: step " + std::to_string(step) +
                                    " > total_steps " + std::to_string(total_steps));
    }
    double lr = base_lr * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
    return lr > 0.0 ? lr : 0.0;
}

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with bias correction. Moment buffers are lazily created per parameter
/// on the first step; one shared step counter covers all parameters.
class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    std::size_t step_count() const { return step_; }

    void step(ParamMap& params, const GradMap& grads, double lr) {
        if (lr < 0.0) throw std::invalid_argument("adam_step: negative learning rate");
        ++step_;
        double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (auto& [name, p] : params) {
            auto git = grads.find(name);
            if (git == grads.end()) continue;
            const DenseMatrix& g = git->second;
            if (!g.same_shape(p)) {
                throw std::invalid_argument("adam_step: gradient shape " + g.shape_str() +
                                            " != parameter shape " + p.shape_str() + " for '" +
                                            name + "'");
            }
            if (!g.all_finite()) {
                throw std::domain_error("adam_step: non-finite gradient for '" + name + "'");
            }
            Moments& m = moments_.try_emplace(name, Moments{DenseMatrix(p.rows(), p.cols(), 0.0),
                                                            DenseMatrix(p.rows(), p.cols(), 0.0)})
                             .first->second;
            for (std::size_t i = 0; i < p.size(); ++i) {
                double gv = g.values()[i];
                double& mv = m.first.values()[i];
                double& vv = m.second.values()[i];
                mv = cfg_.beta1 * mv + (1.0 - cfg_.beta1) * gv;
                vv = cfg_.beta2 * vv + (1.0 - cfg_.beta2) * gv * gv;
                double m_hat = mv / bc1;
                double v_hat = vv / bc2;
                p.values()[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
            }
        }
    }

private:
    using Moments = std::pair<DenseMatrix, DenseMatrix>;
    AdamConfig cfg_;
    std::size_t step_ = 0;
    std::map<std::string, Moments> moments_;
};

/// Scale all gradients so their global L2 norm is at most max_norm.
inline void clip_global_norm(GradMap& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, g] : grads) {
        for (double v : g.values()) sq += v * v;
    }
    double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    double scale = max_norm / norm;
    for (auto& [name, g] : grads) {
        for (double& v : g.values()) v *= scale;
    }
}

}  // namespace sfgnn
