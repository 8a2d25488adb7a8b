#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace flockrl {

enum class OutputActivation : std::uint32_t { Identity = 0, Tanh = 1 };

// Dense MLP parameters. Hidden layers are tanh; the output layer activation
// is configurable (identity for critics, tanh for actors). Weights are
// row-major (out x in) per layer.
struct Mlp {
    std::vector<int> layer_sizes;
    std::vector<std::vector<double>> weights;  // weights[k]: layer_sizes[k+1] x layer_sizes[k]
    std::vector<std::vector<double>> biases;   // biases[k]:  layer_sizes[k+1]
    OutputActivation output_activation = OutputActivation::Identity;

    int input_size() const { return layer_sizes.front(); }
    int output_size() const { return layer_sizes.back(); }
    int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
    std::size_t parameter_count() const;

    bool same_shape(const Mlp& other) const;
};

// Parameter-shaped gradient accumulator.
struct MlpGrad {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    void zero();
    bool all_finite() const;
};

MlpGrad make_grad(const Mlp& net);

// Post-activation values of every layer from one forward pass; reused across
// samples to keep batch updates allocation-free.
struct MlpWorkspace {
    std::vector<std::vector<double>> activations;  // activations[0] = input copy
    std::vector<double> delta_a;                   // scratch for backward
    std::vector<double> delta_b;
};

MlpWorkspace make_workspace(const Mlp& net);

struct AdamState {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    MlpGrad m;  // first moment
    MlpGrad v;  // second moment
};

AdamState make_adam(const Mlp& net, double learning_rate = 0.001);

// Uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] weights, zero biases.
Mlp mlp_init(const std::vector<int>& layer_sizes, std::uint64_t seed,
             OutputActivation out_act = OutputActivation::Identity);

// Forward pass; output written to ws.activations.back(). Returns a reference
// to it for convenience.
const std::vector<double>& mlp_forward(const Mlp& net, const std::vector<double>& input,
                                       MlpWorkspace& ws);

std::vector<double> mlp_forward(const Mlp& net, const std::vector<double>& input);

// Reverse-mode gradients of <upstream_grad, output> accumulated into `grad`
// (caller zeroes). `ws` must hold the matching forward pass. If `input_grad`
// is non-null it receives the gradient w.r.t. the input (overwritten).
void mlp_backward(const Mlp& net, const MlpWorkspace& ws,
                  const std::vector<double>& upstream_grad, MlpGrad& grad,
                  std::vector<double>* input_grad = nullptr);

// Input gradient only, skipping parameter accumulation (used when a frozen
// network sits inside another network's loss).
void mlp_backward_input(const Mlp& net, const MlpWorkspace& ws,
                        const std::vector<double>& upstream_grad, std::vector<double>& input_grad);

// Bias-corrected Adam update; throws NumericError on non-finite gradients
// without touching the parameters.
void adam_step(AdamState& state, Mlp& net, const MlpGrad& grad);

// target <- tau*source + (1-tau)*target
void soft_update(Mlp& target, const Mlp& source, double tau);

// Euclidean norm over all weights and biases.
double l2_param_norm(const Mlp& net);

// Adds alpha * d||theta||/dtheta = alpha * theta/||theta|| to `grad`
// (zero subgradient at the all-zero point).
void add_l2_norm_gradient(const Mlp& net, double alpha, MlpGrad& grad);

// Checkpoint I/O: little-endian binary, magic "FLRL". Bit-exact round-trip.
void save_params(const Mlp& net, const AdamState& adam, const std::string& path);
void load_params(Mlp& net, AdamState& adam, const std::string& path);
void write_params(const Mlp& net, const AdamState& adam, std::ostream& out);
void read_params(Mlp& net, AdamState& adam, std::istream& in);

}  // namespace flockrl
