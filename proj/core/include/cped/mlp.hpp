#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cped/types.hpp"

namespace cped {

// Only C^2 (in fact C^inf) nonlinearities are offered; the barrier's
// input gradient enters the QP constraint and the training loss.
enum class Activation { Tanh, Softplus };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

class BarrierNet;

/// Gradients shaped like a BarrierNet's parameters.
struct ParamGrads {
    std::vector<Mat> weights;
    std::vector<Vec> biases;

    static ParamGrads zeros_like(const BarrierNet& net);

    ParamGrads& operator+=(const ParamGrads& other);
    ParamGrads& operator*=(double s);
    void set_zero();
    bool all_finite() const;
    Vec flatten() const;
    double squared_norm() const;
};

/// Value of the barrier and its derivative along a direction.
struct BarrierEval {
    double value = 0.0;
    double directional = 0.0;  // <grad_x h(x), dir>
};

/// Fully connected network h_theta: R^n -> R with smooth hidden activations
/// and a linear scalar output.
class BarrierNet {
public:
    BarrierNet() = default;

    /// All parameters zero.
    BarrierNet(std::vector<int> layer_sizes, Activation act = Activation::Tanh);

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
    static BarrierNet initialized(std::vector<int> layer_sizes, Activation act, std::uint64_t seed);

    int input_dim() const { return layer_sizes_.front(); }
    int num_layers() const { return static_cast<int>(weights_.size()); }
    const std::vector<int>& layer_sizes() const { return layer_sizes_; }
    Activation activation() const { return activation_; }

    const std::vector<Mat>& weights() const { return weights_; }
    const std::vector<Vec>& biases() const { return biases_; }
    Mat& weight(int layer) { return weights_.at(layer); }
    Vec& bias(int layer) { return biases_.at(layer); }

    double forward(const Vec& x) const;
    Vec grad_input(const Vec& x) const;
    BarrierEval evaluate(const Vec& x, const Vec& dir) const;

    /// Adds d/dtheta [w_value * h(x) + w_dir * <grad_x h(x), dir>] to `out`
    /// (exact second-order propagation for the directional term) and returns
    /// the primal values.
    BarrierEval accumulate_param_grad(const Vec& x, const Vec& dir, double w_value, double w_dir,
                                      ParamGrads& out) const;

    std::size_t num_parameters() const;
    Vec parameters() const;
    void set_parameters(const Vec& flat);

    /// Applies `theta += scale * grads`.
    void add_scaled(const ParamGrads& grads, double scale);

    bool operator==(const BarrierNet& other) const;

private:
    void check_input(const Vec& x) const;

    std::vector<int> layer_sizes_;
    Activation activation_ = Activation::Tanh;
    std::vector<Mat> weights_;
    std::vector<Vec> biases_;
};

/// Gradient of sum_i upstream[i] * h(batch[i]) with respect to all parameters.
ParamGrads grad_params(const BarrierNet& net, const StateList& batch, const std::vector<double>& upstream);

// Optimizers own their state (velocity, moments); a trainer creates a fresh
// one per stage.
class Optimizer {
public:
    virtual ~Optimizer() = default;
    /// Throws TrainingDiverged on non-finite gradients.
    virtual void step(BarrierNet& net, const ParamGrads& grads) = 0;
};

/// velocity <- momentum * velocity + grad; theta <- theta - lr * velocity
class SgdMomentum : public Optimizer {
public:
    SgdMomentum(double lr, double momentum);
    void step(BarrierNet& net, const ParamGrads& grads) override;

private:
    double lr_;
    double momentum_;
    ParamGrads velocity_;
    bool initialized_ = false;
};

class Adam : public Optimizer {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(BarrierNet& net, const ParamGrads& grads) override;

private:
    double lr_, beta1_, beta2_, eps_;
    ParamGrads m_, v_;
    long t_ = 0;
};

/// One plain momentum-SGD update; `velocity` is created on first use.
void sgd_step(BarrierNet& net, const ParamGrads& grads, double lr, double momentum, ParamGrads& velocity);

}  // namespace cped
