#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "retina/slicer.hpp"

namespace retina {

struct ConvSpec {
    int c_in{1}, c_out{1};
    int k_x{1}, k_y{1};
    int s_x{1}, s_y{1};
    int p_x{0}, p_y{0};
    // Weights laid out (c_out, c_in, k_y, k_x); empty until loaded/initialized.
    std::vector<double> weights;
    std::vector<double> bias;  // empty = no bias
    bool has_bias{false};

    size_t weight_count() const {
        return static_cast<size_t>(c_out) * c_in * k_y * k_x;
    }
    double& w(int oc, int ic, int ky, int kx) {
        return weights[((static_cast<size_t>(oc) * c_in + ic) * k_y + ky) * k_x + kx];
    }
    double w(int oc, int ic, int ky, int kx) const {
        return weights[((static_cast<size_t>(oc) * c_in + ic) * k_y + ky) * k_x + kx];
    }
};

struct BatchNormSpec {
    int channels{1};
    std::vector<double> gamma, beta, mean, var;
    double eps{1e-5};

    static BatchNormSpec identity(int channels, double eps = 1e-5);
};

struct IFSpec {
    double threshold{1.0};
    double v_min{-1.0};
};

struct SumPoolSpec {
    int k{2};
    int s{2};
};

struct FlattenSpec {};

using LayerSpec = std::variant<ConvSpec, BatchNormSpec, IFSpec, SumPoolSpec, FlattenSpec>;

struct LayerShape {
    int c{0}, h{0}, w{0};
    size_t count() const { return static_cast<size_t>(c) * h * w; }
};

struct NetworkConfig {
    std::vector<LayerSpec> layers;
    int in_channels{2};
    int in_height{64};
    int in_width{64};

    // The paper's eight conv blocks: channels 2-16-64-16-16-8-16, three 2x2
    // pools, flatten to 144, then 1x1 convs 144-128-160. Weights unset.
    static NetworkConfig retina_default();

    // Reduced two-block variant for CPU-scale training demos: same 64x64
    // input and 160-channel grid head, already in fused (conv+bias) form.
    static NetworkConfig desk_default();
};

// Output shape after each layer, from Eq.-style floor arithmetic
// f = (c - k + 2p)/s + 1. Throws on non-positive intermediate sizes.
std::vector<LayerShape> spatial_trace(const NetworkConfig& net);

// Folds normalization into the convolution: weights scale by
// gamma/sqrt(var+eps), bias becomes beta - gamma*mean/sqrt(var+eps).
ConvSpec fuse_batchnorm(const ConvSpec& conv, const BatchNormSpec& bn);

// Applies fuse_batchnorm to every conv+bn pair in the network.
NetworkConfig fuse_network(const NetworkConfig& net);

// Conv weights plus one bias per output channel when the conv has a bias or
// is followed by a batch norm (fused at inference).
long long count_params(const NetworkConfig& net);

// Dense MACs per forward pass: sum of c_in*c_out*k_x*k_y*f_x*f_y over convs.
long long count_macs(const NetworkConfig& net);

// One discrete IF step over a flat state vector: V += input; spike and reset
// to 0 where V >= threshold; clamp below at v_min.
void if_step(std::span<double> v, std::span<const double> input, std::span<double> spikes,
             const IFSpec& spec = {});

struct LayerActivity {
    std::string name;
    size_t neurons{0};
    std::vector<long long> spikes_per_step;

    long long total_spikes() const;
};

struct ForwardTrace {
    std::vector<LayerActivity> if_layers;
    int timesteps{0};
};

std::vector<double> firing_rate_profile(const ForwardTrace& trace);

struct SequenceOutput {
    int num_bins{0};
    int channels{0};
    std::vector<double> values;  // (T, C) row-major; final IF layer spikes
    ForwardTrace trace;

    double at(int t, int c) const { return values[static_cast<size_t>(t) * channels + c]; }
};

// Runs the network over all bins of a sequence. Membrane states start at
// zero and persist across bins; shape errors report the layer index.
SequenceOutput forward_sequence(const NetworkConfig& net, const EventFrameSequence& frames);

// Network description JSON and packed float32 weights.
void save_network_json(const NetworkConfig& net, const std::string& path);
NetworkConfig load_network_json(const std::string& path);
void save_weights(const NetworkConfig& net, const std::string& path);
void load_weights(NetworkConfig& net, const std::string& path);

}  // namespace retina
