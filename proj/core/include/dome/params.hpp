#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "dome/rng.hpp"
#include "dome/tensor.hpp"

namespace dome {

/// Named registry of trainable tensors with deterministic (insertion)
/// iteration order.  Every trainable parameter of a model lives here exactly
/// once; optimizers and checkpoints walk the registry by name.
class ParameterStore {
public:
    /// Registers a zero-initialized parameter; name must be unused.
    Tensor create(const std::string& name, std::vector<std::size_t> shape);

    /// Looks up a registered parameter.
    Tensor get(const std::string& name) const;

    bool contains(const std::string& name) const {
        return by_name_.find(name) != by_name_.end();
    }

    const std::vector<std::string>& names() const { return order_; }
    std::size_t size() const { return order_.size(); }

    /// Allocates/zeroes the gradient buffer of every parameter.
    void zero_grad();

    /// Total number of scalar parameters.
    std::size_t scalar_count() const;

    /// Rounds every parameter value through 32-bit float precision.  Called
    /// at checkpoint boundaries so that a run resumed from disk is
    /// bit-identical to one that kept going in memory.
    void quantize_f32();

private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, Tensor> by_name_;
};

/// Xavier/Glorot uniform initialization over [-limit, limit] with
/// limit = sqrt(6 / (fan_in + fan_out)); fans come from the 2-D shape.
void init_xavier_uniform(Tensor& w, Rng& rng);

/// Gaussian initialization (used for embedding tables).
void init_normal(Tensor& w, Rng& rng, double stddev);

/// Scales all gradients in place so their global L2 norm is at most
/// max_norm; returns the pre-clip norm.
double clip_global_norm(ParameterStore& params, double max_norm);

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction.  Moment buffers are keyed by parameter name
/// and persist across steps (and through checkpoints).
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }

    /// One update over every parameter in the store; requires populated
    /// gradients (StateError otherwise).
    void step(ParameterStore& params);

    std::uint64_t step_count() const { return t_; }
    void set_step_count(std::uint64_t t) { t_ = t; }

    /// Moment buffers for checkpointing; allocated on first use.
    std::vector<double>& first_moment(const std::string& name, std::size_t size);
    std::vector<double>& second_moment(const std::string& name, std::size_t size);

    /// Rounds moment buffers through float32, mirroring
    /// ParameterStore::quantize_f32 for exact training resumption.
    void quantize_f32();

private:
    AdamConfig cfg_;
    std::uint64_t t_ = 0;
    std::unordered_map<std::string, std::vector<double>> m_;
    std::unordered_map<std::string, std::vector<double>> v_;
};

}  // namespace dome
