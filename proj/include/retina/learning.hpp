#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "retina/readout.hpp"
#include "retina/slicer.hpp"
#include "retina/snn.hpp"

namespace retina {

struct LossWeights {
    double lambda_box{7.5};
    double lambda_conf{1.5};
    double lambda_syn{1e-7};
    double syn_target{1e6};  // synaptic ops per layer the processor can absorb
};

struct TrainConfig {
    int iterations{576};
    int batch{16};
    int sequence_length{64};
    double lr{1e-3};
    double lr_gamma{0.8};
    int lr_step{64};
    double adam_beta1{0.9};
    double adam_beta2{0.999};
    double adam_eps{1e-8};
    double surrogate_alpha{1.0};
    double surrogate_beta{10.0};
    bool reset_passthrough{false};  // default: reset is a stop-gradient event
    int loss_warmup_bins{-1};       // -1: use the filter length
    double init_scale{1.0};
    // Pixels per unit of the regressed coordinates. 64 supervises the [0,1]
    // convention of decode_grid. Binary spike trains through the fixed filter
    // hold steady values of a few units at best, so desk-scale training uses
    // a small scale (2 px/unit) and decodes with the same factor.
    double coord_scale{64.0};
    // Confidence target for the owning cell. Only the ranking matters for
    // NMS; a larger target keeps the owning cell's filtered score in the
    // steady high-rate band instead of dipping between sparse spikes.
    double conf_scale{1.0};
    uint64_t seed{1};
};

// Sum of squared differences over matched box coordinates (Eq.-9 style).
double loss_box(std::span<const double> pred, std::span<const double> target);
// Sum of squared confidence errors over all cells/anchors.
double loss_conf(std::span<const double> pred, std::span<const double> target);
// Sum over layers of (ops - target)^2 / target^2.
double loss_syn(std::span<const double> per_layer_ops, double target = 1e6);
double total_loss(double box, double conf, double syn, const LossWeights& w = {});

double centroid_error(double pred_x, double pred_y, double label_x, double label_y);
double centroid_error(const std::array<double, 2>& pred, const PupilLabel& label);

// Pseudo-derivative of the spike nonlinearity: alpha * exp(-beta*|v - threshold|).
double surrogate_grad(double v, double alpha = 1.0, double beta = 10.0,
                      double threshold = 1.0);

struct SampleLoss {
    double total{0}, box{0}, conf{0}, syn{0};
    std::vector<double> per_layer_ops;
};

// Backpropagation-through-time engine for a fused network (conv+bias, IF,
// sum pool, flatten). The temporal filter and the composite loss sit on top
// of the final layer's spike train; IF layers use the surrogate gradient and
// treat the reset as stop-gradient unless configured otherwise.
class BpttModel {
public:
    BpttModel(const NetworkConfig& fused, const TemporalFilter& filter,
              const LossWeights& weights, const TrainConfig& cfg);
    ~BpttModel();
    BpttModel(BpttModel&&) noexcept;
    BpttModel& operator=(BpttModel&&) noexcept;

    size_t param_count() const;
    std::span<double> params();
    std::span<const double> params() const;
    std::span<const double> grads() const;
    void zero_grad();

    void init_params(uint64_t seed, double scale);
    void import_params(const NetworkConfig& fused);
    void export_params(NetworkConfig& fused) const;

    // Forward (and optionally backward, accumulating into grads) for one
    // sequence; targets come from the sequence's per-bin labels.
    SampleLoss compute(const EventFrameSequence& seq, bool with_grad);

    // Final-layer spike train of the last compute() call, (T, C) row-major.
    const std::vector<double>& last_outputs() const;
    int output_channels() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct TrainLogRow {
    int iter{0};
    double loss_total{0}, loss_box{0}, loss_conf{0}, loss_syn{0};
    double lr{0};
};

struct TrainResult {
    NetworkConfig net;  // fused network with trained weights
    std::vector<TrainLogRow> log;
};

// Adam + step learning-rate schedule over a dataset of sliced sequences.
// States reset at every iteration (each sample starts from zero membranes).
// Throws if the loss goes non-finite.
TrainResult train(const NetworkConfig& fused, const std::vector<EventFrameSequence>& dataset,
                  const TrainConfig& cfg, const LossWeights& weights,
                  const TemporalFilter& filter);

void save_train_log(const std::vector<TrainLogRow>& log, const std::string& path);

struct EvalResult {
    double mean_px{0};
    double std_px{0};
    size_t bins{0};
};

// Slices at each anchor label in [anchor_begin, anchor_end), runs the
// inference engine, decodes boxes, and reports the centroid error against
// the per-bin labels. Warm-up bins (attenuated filter history) are skipped.
// coord_scale must match the value the network was trained with.
// jobs > 1 distributes anchors across threads; slices are independent.
EvalResult evaluate_recording(const NetworkConfig& net, const Recording& rec,
                              const SliceConfig& slice_cfg, const TemporalFilter& filter,
                              size_t anchor_begin, size_t anchor_end, size_t anchor_stride = 1,
                              int warmup_bins = -1, int jobs = 1, double coord_scale = 64.0);

}  // namespace retina
