#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "retina/events.hpp"

namespace retina {

// Fixed causal kernel: the truncated convolution of exponential synaptic and
// membrane kernels, S(t)=exp(-t/tau_syn), M(t)=exp(-t/tau_mem).
struct TemporalFilter {
    double tau_mem{5.0};
    double tau_syn{5.0};
    std::vector<double> weights;

    int size() const { return static_cast<int>(weights.size()); }
};

TemporalFilter build_filter(double tau_mem, double tau_syn, int n = 20);

// y[t] = sum_i w[i] * x[t-i] per channel, zero-padded history.
// x and the result are (T, C) row-major.
std::vector<double> apply_filter(const TemporalFilter& filter, const std::vector<double>& x,
                                 int num_bins, int channels);

struct BBox {
    double x_min{0}, y_min{0}, x_max{0}, y_max{0};
    double confidence{0};
};

struct CellIndex {
    int row{0};
    int col{0};
};

// (T, 4, 4, 2, 5) view of the 160-channel output. Component order per anchor:
// x_tr, y_tr, x_bl, y_bl, confidence; coordinates in [0,1] of the frame.
struct GridPrediction {
    static constexpr int kGrid = 4;
    static constexpr int kAnchors = 2;
    static constexpr int kComponents = 5;
    static constexpr int kChannels = kGrid * kGrid * kAnchors * kComponents;  // 160

    int num_bins{0};
    std::vector<double> values;

    static size_t channel_of(int row, int col, int anchor, int comp) {
        return ((static_cast<size_t>(row) * kGrid + col) * kAnchors + anchor) * kComponents +
               comp;
    }
    double& at(int t, int row, int col, int anchor, int comp) {
        return values[static_cast<size_t>(t) * kChannels + channel_of(row, col, anchor, comp)];
    }
    double at(int t, int row, int col, int anchor, int comp) const {
        return values[static_cast<size_t>(t) * kChannels + channel_of(row, col, anchor, comp)];
    }
};

GridPrediction decode_grid(const std::vector<double>& filtered, int num_bins);

// Materializes one bin's anchors as pixel-space boxes (corners re-sorted,
// coordinates scaled by the frame size).
std::vector<BBox> grid_to_boxes(const GridPrediction& grid, int bin, double frame_size = 64.0);

// Label -> target box ([x-2, y-2, x+2, y+2] clipped) and its owning grid cell.
std::pair<BBox, CellIndex> make_target(const PupilLabel& label, double frame_size = 64.0);

// Zeroes every cell that owns no target; training-time step 4 of the
// spike-to-box pipeline.
GridPrediction mask_cells(const GridPrediction& pred,
                          const std::vector<std::vector<CellIndex>>& target_cells_per_bin);

double iou(const BBox& a, const BBox& b);

// Greedy suppression, highest confidence first; confidence ties break on
// lower (x_min, y_min).
std::vector<BBox> nms(const std::vector<BBox>& boxes, double iou_threshold = 0.5);

std::array<double, 2> centroid(const BBox& box);

}  // namespace retina
