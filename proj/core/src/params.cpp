#include "dome/params.hpp"

#include <cmath>

#include "dome/errors.hpp"

namespace dome {

Tensor ParameterStore::create(const std::string& name,
                              std::vector<std::size_t> shape) {
    if (contains(name))
        throw ConfigError("parameter '" + name + "' registered twice");
    Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
    order_.push_back(name);
    by_name_.emplace(name, t);
    return t;
}

Tensor ParameterStore::get(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end())
        throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
}

void ParameterStore::zero_grad() {
    for (const std::string& n : order_) by_name_.at(n).zero_grad();
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t total = 0;
    for (const auto& n : order_) total += by_name_.at(n).size();
    return total;
}

void ParameterStore::quantize_f32() {
    for (const std::string& n : order_)
        for (double& x : by_name_.at(n).data())
            x = static_cast<double>(static_cast<float>(x));
}

void init_xavier_uniform(Tensor& w, Rng& rng) {
    if (w.ndim() != 2)
        throw ShapeError("init_xavier_uniform: expected a 2-D tensor");
    const double fan_in = static_cast<double>(w.rows());
    const double fan_out = static_cast<double>(w.cols());
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& x : w.data()) x = rng.uniform(-limit, limit);
}

void init_normal(Tensor& w, Rng& rng, double stddev) {
    for (double& x : w.data()) x = rng.normal(0.0, stddev);
}

double clip_global_norm(ParameterStore& params, double max_norm) {
    double sq = 0.0;
    for (const std::string& n : params.names()) {
        const Tensor t = params.get(n);
        if (!t.has_grad())
            throw StateError("clip_global_norm: gradient missing for '" + n + "'");
        for (double g : t.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double factor = max_norm / norm;
        for (const std::string& n : params.names()) {
            Tensor t = params.get(n);
            for (double& g : t.node()->grad) g *= factor;
        }
    }
    return norm;
}

std::vector<double>& Adam::first_moment(const std::string& name, std::size_t size) {
    auto& buf = m_[name];
    if (buf.size() != size) buf.assign(size, 0.0);
    return buf;
}

std::vector<double>& Adam::second_moment(const std::string& name, std::size_t size) {
    auto& buf = v_[name];
    if (buf.size() != size) buf.assign(size, 0.0);
    return buf;
}

void Adam::step(ParameterStore& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (const std::string& name : params.names()) {
        Tensor p = params.get(name);
        if (!p.has_grad())
            throw StateError("adam: gradient missing for '" + name + "'");
        const std::vector<double>& g = p.grad();
        std::vector<double>& m = first_moment(name, p.size());
        std::vector<double>& v = second_moment(name, p.size());
        std::vector<double>& x = p.data();
        for (std::size_t i = 0; i < x.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            x[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void Adam::quantize_f32() {
    for (auto& [name, buf] : m_)
        for (double& x : buf) x = static_cast<double>(static_cast<float>(x));
    for (auto& [name, buf] : v_)
        for (double& x : buf) x = static_cast<double>(static_cast<float>(x));
}

}  // namespace dome
