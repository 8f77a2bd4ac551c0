#include "cped/mlp.hpp"

#include <cmath>

#include "cped/errors.hpp"
#include "cped/random.hpp"

namespace cped {

namespace {

struct ActDerivs {
    Vec value;
    Vec d1;
    Vec d2;
};

ActDerivs activate(Activation act, const Vec& z)
{
    ActDerivs out{Vec(z.size()), Vec(z.size()), Vec(z.size())};
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        if (act == Activation::Tanh) {
            const double t = std::tanh(z[i]);
            out.value[i] = t;
            out.d1[i] = 1.0 - t * t;
            out.d2[i] = -2.0 * t * (1.0 - t * t);
        } else {
            const double s = 1.0 / (1.0 + std::exp(-z[i]));
            out.value[i] = z[i] > 30.0 ? z[i] : std::log1p(std::exp(z[i]));
            out.d1[i] = s;
            out.d2[i] = s * (1.0 - s);
        }
    }
    return out;
}

Vec activate_value(Activation act, const Vec& z)
{
    Vec out(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i)
        out[i] = act == Activation::Tanh ? std::tanh(z[i])
                                         : (z[i] > 30.0 ? z[i] : std::log1p(std::exp(z[i])));
    return out;
}

}  // namespace

std::string to_string(Activation act)
{
    return act == Activation::Tanh ? "tanh" : "softplus";
}

Activation activation_from_string(const std::string& name)
{
    if (name == "tanh")
        return Activation::Tanh;
    if (name == "softplus")
        return Activation::Softplus;
    throw ConfigError("activation", "unknown activation '" + name + "' (expected tanh or softplus)");
}

// ---------------------------------------------------------------------------
// ParamGrads

ParamGrads ParamGrads::zeros_like(const BarrierNet& net)
{
    ParamGrads g;
    for (int l = 0; l < net.num_layers(); ++l) {
        g.weights.push_back(Mat::Zero(net.weights()[l].rows(), net.weights()[l].cols()));
        g.biases.push_back(Vec::Zero(net.biases()[l].size()));
    }
    return g;
}

ParamGrads& ParamGrads::operator+=(const ParamGrads& other)
{
    for (std::size_t l = 0; l < weights.size(); ++l) {
        weights[l] += other.weights[l];
        biases[l] += other.biases[l];
    }
    return *this;
}

ParamGrads& ParamGrads::operator*=(double s)
{
    for (std::size_t l = 0; l < weights.size(); ++l) {
        weights[l] *= s;
        biases[l] *= s;
    }
    return *this;
}

void ParamGrads::set_zero()
{
    for (std::size_t l = 0; l < weights.size(); ++l) {
        weights[l].setZero();
        biases[l].setZero();
    }
}

bool ParamGrads::all_finite() const
{
    for (std::size_t l = 0; l < weights.size(); ++l)
        if (!weights[l].allFinite() || !biases[l].allFinite())
            return false;
    return true;
}

Vec ParamGrads::flatten() const
{
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
        n += weights[l].size() + biases[l].size();
    Vec flat(n);
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        for (Eigen::Index j = 0; j < weights[l].cols(); ++j)
            for (Eigen::Index i = 0; i < weights[l].rows(); ++i)
                flat[k++] = weights[l](i, j);
        for (Eigen::Index i = 0; i < biases[l].size(); ++i)
            flat[k++] = biases[l][i];
    }
    return flat;
}

double ParamGrads::squared_norm() const
{
    double s = 0.0;
    for (std::size_t l = 0; l < weights.size(); ++l)
        s += weights[l].squaredNorm() + biases[l].squaredNorm();
    return s;
}

// ---------------------------------------------------------------------------
// BarrierNet

BarrierNet::BarrierNet(std::vector<int> layer_sizes, Activation act)
    : layer_sizes_(std::move(layer_sizes)), activation_(act)
{
    if (layer_sizes_.size() < 2)
        throw ShapeError("BarrierNet needs at least an input and an output layer");
    if (layer_sizes_.back() != 1)
        throw ShapeError("BarrierNet output dimension must be 1");
    for (int s : layer_sizes_)
        if (s <= 0)
            throw ShapeError("BarrierNet layer sizes must be positive");
    for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
        weights_.push_back(Mat::Zero(layer_sizes_[l + 1], layer_sizes_[l]));
        biases_.push_back(Vec::Zero(layer_sizes_[l + 1]));
    }
}

BarrierNet BarrierNet::initialized(std::vector<int> layer_sizes, Activation act, std::uint64_t seed)
{
    BarrierNet net(std::move(layer_sizes), act);
    Rng rng(seed);
    for (int l = 0; l < net.num_layers(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(net.weights_[l].cols()));
        Mat& W = net.weights_[l];
        for (Eigen::Index j = 0; j < W.cols(); ++j)
            for (Eigen::Index i = 0; i < W.rows(); ++i)
                W(i, j) = rng.uniform(-bound, bound);
        for (Eigen::Index i = 0; i < net.biases_[l].size(); ++i)
            net.biases_[l][i] = rng.uniform(-bound, bound);
    }
    return net;
}

void BarrierNet::check_input(const Vec& x) const
{
    if (layer_sizes_.empty())
        throw ShapeError("BarrierNet is empty");
    if (x.size() != layer_sizes_.front())
        throw ShapeError("BarrierNet input: expected dimension " + std::to_string(layer_sizes_.front()) +
                         ", got " + std::to_string(x.size()));
}

double BarrierNet::forward(const Vec& x) const
{
    check_input(x);
    Vec a = x;
    const int L = num_layers();
    for (int l = 0; l < L - 1; ++l) {
        a = activate_value(activation_, weights_[l] * a + biases_[l]);
    }
    return (weights_[L - 1] * a + biases_[L - 1])[0];
}

Vec BarrierNet::grad_input(const Vec& x) const
{
    check_input(x);
    const int L = num_layers();
    std::vector<Vec> d1(L - 1);
    Vec a = x;
    for (int l = 0; l < L - 1; ++l) {
        ActDerivs act = activate(activation_, weights_[l] * a + biases_[l]);
        a = std::move(act.value);
        d1[l] = std::move(act.d1);
    }
    Vec g = weights_[L - 1].row(0).transpose();
    for (int l = L - 2; l >= 0; --l)
        g = weights_[l].transpose() * d1[l].cwiseProduct(g);
    return g;
}

BarrierEval BarrierNet::evaluate(const Vec& x, const Vec& dir) const
{
    check_input(x);
    if (dir.size() != x.size())
        throw ShapeError("BarrierNet::evaluate: direction dimension mismatch");
    const int L = num_layers();
    Vec a = x;
    Vec t = dir;
    for (int l = 0; l < L - 1; ++l) {
        ActDerivs act = activate(activation_, weights_[l] * a + biases_[l]);
        t = act.d1.cwiseProduct(weights_[l] * t);
        a = std::move(act.value);
    }
    return {(weights_[L - 1] * a + biases_[L - 1])[0], (weights_[L - 1] * t)[0]};
}

BarrierEval BarrierNet::accumulate_param_grad(const Vec& x, const Vec& dir, double w_value, double w_dir,
                                              ParamGrads& out) const
{
    check_input(x);
    if (dir.size() != x.size())
        throw ShapeError("BarrierNet::accumulate_param_grad: direction dimension mismatch");
    const int L = num_layers();

    // Forward pass carrying the tangent t = d a / d x * dir alongside a.
    std::vector<Vec> a(L), t(L), tz(L - 1), d1(L - 1), d2(L - 1);
    a[0] = x;
    t[0] = dir;
    for (int l = 0; l < L - 1; ++l) {
        ActDerivs act = activate(activation_, weights_[l] * a[l] + biases_[l]);
        tz[l] = weights_[l] * t[l];
        t[l + 1] = act.d1.cwiseProduct(tz[l]);
        a[l + 1] = std::move(act.value);
        d1[l] = std::move(act.d1);
        d2[l] = std::move(act.d2);
    }
    BarrierEval result{(weights_[L - 1] * a[L - 1] + biases_[L - 1])[0], (weights_[L - 1] * t[L - 1])[0]};

    // Reverse pass over the joint (value, tangent) graph.
    Vec gz = Vec::Constant(1, w_value);
    Vec gtz = Vec::Constant(1, w_dir);
    for (int l = L - 1; l >= 0; --l) {
        out.weights[l].noalias() += gz * a[l].transpose();
        out.weights[l].noalias() += gtz * t[l].transpose();
        out.biases[l] += gz;
        if (l == 0)
            break;
        const Vec ga = weights_[l].transpose() * gz;
        const Vec gta = weights_[l].transpose() * gtz;
        gz = ga.cwiseProduct(d1[l - 1]) + gta.cwiseProduct(d2[l - 1]).cwiseProduct(tz[l - 1]);
        gtz = gta.cwiseProduct(d1[l - 1]);
    }
    return result;
}

std::size_t BarrierNet::num_parameters() const
{
    std::size_t n = 0;
    for (int l = 0; l < num_layers(); ++l)
        n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
    return n;
}

// Layout: per layer, weights column-major then biases.
Vec BarrierNet::parameters() const
{
    ParamGrads view{weights_, biases_};
    return view.flatten();
}

void BarrierNet::set_parameters(const Vec& flat)
{
    if (static_cast<std::size_t>(flat.size()) != num_parameters())
        throw ShapeError("set_parameters: expected " + std::to_string(num_parameters()) + " values, got " +
                         std::to_string(flat.size()));
    Eigen::Index k = 0;
    for (int l = 0; l < num_layers(); ++l) {
        for (Eigen::Index j = 0; j < weights_[l].cols(); ++j)
            for (Eigen::Index i = 0; i < weights_[l].rows(); ++i)
                weights_[l](i, j) = flat[k++];
        for (Eigen::Index i = 0; i < biases_[l].size(); ++i)
            biases_[l][i] = flat[k++];
    }
}

void BarrierNet::add_scaled(const ParamGrads& grads, double scale)
{
    for (int l = 0; l < num_layers(); ++l) {
        weights_[l] += scale * grads.weights[l];
        biases_[l] += scale * grads.biases[l];
    }
}

bool BarrierNet::operator==(const BarrierNet& other) const
{
    if (layer_sizes_ != other.layer_sizes_ || activation_ != other.activation_)
        return false;
    for (int l = 0; l < num_layers(); ++l)
        if (weights_[l] != other.weights_[l] || biases_[l] != other.biases_[l])
            return false;
    return true;
}

ParamGrads grad_params(const BarrierNet& net, const StateList& batch, const std::vector<double>& upstream)
{
    if (batch.size() != upstream.size())
        throw ShapeError("grad_params: upstream length must equal batch length");
    ParamGrads g = ParamGrads::zeros_like(net);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (upstream[i] == 0.0)
            continue;
        net.accumulate_param_grad(batch[i], Vec::Zero(batch[i].size()), upstream[i], 0.0, g);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Optimizers

void sgd_step(BarrierNet& net, const ParamGrads& grads, double lr, double momentum, ParamGrads& velocity)
{
    if (!grads.all_finite())
        throw TrainingDiverged("non-finite gradient in optimizer step");
    if (velocity.weights.empty())
        velocity = ParamGrads::zeros_like(net);
    velocity *= momentum;
    velocity += grads;
    net.add_scaled(velocity, -lr);
}

SgdMomentum::SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum)
{
    if (!(lr > 0.0))
        throw InvalidInput("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw InvalidInput("momentum must lie in [0, 1)");
}

void SgdMomentum::step(BarrierNet& net, const ParamGrads& grads)
{
    sgd_step(net, grads, lr_, momentum_, velocity_);
}

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps)
{
    if (!(lr > 0.0))
        throw InvalidInput("learning rate must be positive");
}

void Adam::step(BarrierNet& net, const ParamGrads& grads)
{
    if (!grads.all_finite())
        throw TrainingDiverged("non-finite gradient in optimizer step");
    if (m_.weights.empty()) {
        m_ = ParamGrads::zeros_like(net);
        v_ = ParamGrads::zeros_like(net);
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
        param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    };
    for (int l = 0; l < net.num_layers(); ++l) {
        update(net.weight(l), m_.weights[l], v_.weights[l], grads.weights[l]);
        update(net.bias(l), m_.biases[l], v_.biases[l], grads.biases[l]);
    }
}

}  // namespace cped
