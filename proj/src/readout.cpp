#include "retina/readout.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace retina {

TemporalFilter build_filter(double tau_mem, double tau_syn, int n) {
    if (tau_mem <= 0 || tau_syn <= 0) {
        throw std::invalid_argument("filter time constants must be positive");
    }
    if (n < 1) throw std::invalid_argument("filter length must be >= 1");
    std::vector<double> synaptic(n), membrane(n);
    for (int t = 0; t < n; ++t) {
        synaptic[t] = std::exp(-t / tau_syn);
        membrane[t] = std::exp(-t / tau_mem);
    }
    TemporalFilter filter;
    filter.tau_mem = tau_mem;
    filter.tau_syn = tau_syn;
    filter.weights.assign(n, 0.0);
    for (int t = 0; t < n; ++t) {
        double acc = 0.0;
        for (int k = 0; k <= t; ++k) acc += synaptic[k] * membrane[t - k];
        filter.weights[t] = acc;
    }
    return filter;
}

std::vector<double> apply_filter(const TemporalFilter& filter, const std::vector<double>& x,
                                 int num_bins, int channels) {
    if (num_bins < 1) throw std::invalid_argument("apply_filter: need at least one bin");
    if (x.size() != static_cast<size_t>(num_bins) * channels) {
        throw std::invalid_argument("apply_filter: input size does not match (T, C)");
    }
    std::vector<double> y(x.size(), 0.0);
    const int n = filter.size();
    for (int t = 0; t < num_bins; ++t) {
        const int taps = std::min(n, t + 1);
        double* yrow = y.data() + static_cast<size_t>(t) * channels;
        for (int i = 0; i < taps; ++i) {
            const double w = filter.weights[i];
            const double* xrow = x.data() + static_cast<size_t>(t - i) * channels;
            for (int c = 0; c < channels; ++c) yrow[c] += w * xrow[c];
        }
    }
    return y;
}

GridPrediction decode_grid(const std::vector<double>& filtered, int num_bins) {
    if (filtered.size() != static_cast<size_t>(num_bins) * GridPrediction::kChannels) {
        throw std::invalid_argument("decode_grid: expected " +
                                    std::to_string(GridPrediction::kChannels) + " channels");
    }
    GridPrediction grid;
    grid.num_bins = num_bins;
    grid.values = filtered;  // channel order is already (row, col, anchor, component)
    return grid;
}

std::vector<BBox> grid_to_boxes(const GridPrediction& grid, int bin, double frame_size) {
    std::vector<BBox> boxes;
    boxes.reserve(GridPrediction::kGrid * GridPrediction::kGrid * GridPrediction::kAnchors);
    for (int row = 0; row < GridPrediction::kGrid; ++row) {
        for (int col = 0; col < GridPrediction::kGrid; ++col) {
            for (int a = 0; a < GridPrediction::kAnchors; ++a) {
                double x_tr = grid.at(bin, row, col, a, 0) * frame_size;
                double y_tr = grid.at(bin, row, col, a, 1) * frame_size;
                double x_bl = grid.at(bin, row, col, a, 2) * frame_size;
                double y_bl = grid.at(bin, row, col, a, 3) * frame_size;
                BBox box;
                box.x_min = std::min(x_tr, x_bl);
                box.x_max = std::max(x_tr, x_bl);
                box.y_min = std::min(y_tr, y_bl);
                box.y_max = std::max(y_tr, y_bl);
                box.confidence = grid.at(bin, row, col, a, 4);
                boxes.push_back(box);
            }
        }
    }
    return boxes;
}

std::pair<BBox, CellIndex> make_target(const PupilLabel& label, double frame_size) {
    const double lo = 0.0;
    const double hi = frame_size - 1.0;
    BBox box;
    box.x_min = std::clamp(label.x - 2.0, lo, hi);
    box.y_min = std::clamp(label.y - 2.0, lo, hi);
    box.x_max = std::clamp(label.x + 2.0, lo, hi);
    box.y_max = std::clamp(label.y + 2.0, lo, hi);
    box.confidence = 1.0;
    double cell_size = frame_size / GridPrediction::kGrid;
    CellIndex cell;
    cell.row = std::min(GridPrediction::kGrid - 1,
                        std::max(0, static_cast<int>(std::floor(label.y / cell_size))));
    cell.col = std::min(GridPrediction::kGrid - 1,
                        std::max(0, static_cast<int>(std::floor(label.x / cell_size))));
    return {box, cell};
}

GridPrediction mask_cells(const GridPrediction& pred,
                          const std::vector<std::vector<CellIndex>>& target_cells_per_bin) {
    if (target_cells_per_bin.size() != static_cast<size_t>(pred.num_bins)) {
        throw std::invalid_argument("mask_cells: one target cell list per bin required");
    }
    GridPrediction out;
    out.num_bins = pred.num_bins;
    out.values.assign(pred.values.size(), 0.0);
    for (int t = 0; t < pred.num_bins; ++t) {
        for (const CellIndex& cell : target_cells_per_bin[t]) {
            for (int a = 0; a < GridPrediction::kAnchors; ++a) {
                for (int comp = 0; comp < GridPrediction::kComponents; ++comp) {
                    out.at(t, cell.row, cell.col, a, comp) = pred.at(t, cell.row, cell.col, a, comp);
                }
            }
        }
    }
    return out;
}

double iou(const BBox& a, const BBox& b) {
    double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
    double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
    double inter = ix * iy;
    double area_a = (a.x_max - a.x_min) * (a.y_max - a.y_min);
    double area_b = (b.x_max - b.x_min) * (b.y_max - b.y_min);
    double uni = area_a + area_b - inter;
    if (uni <= 0.0) {
        // Degenerate (zero-area) boxes: treat exact overlap as full overlap.
        return (a.x_min == b.x_min && a.y_min == b.y_min && a.x_max == b.x_max &&
                a.y_max == b.y_max)
                   ? 1.0
                   : 0.0;
    }
    return inter / uni;
}

std::vector<BBox> nms(const std::vector<BBox>& boxes, double iou_threshold) {
    std::vector<BBox> sorted = boxes;
    std::stable_sort(sorted.begin(), sorted.end(), [](const BBox& a, const BBox& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        if (a.x_min != b.x_min) return a.x_min < b.x_min;
        return a.y_min < b.y_min;
    });
    std::vector<BBox> kept;
    std::vector<bool> suppressed(sorted.size(), false);
    for (size_t i = 0; i < sorted.size(); ++i) {
        if (suppressed[i]) continue;
        kept.push_back(sorted[i]);
        for (size_t j = i + 1; j < sorted.size(); ++j) {
            if (!suppressed[j] && iou(sorted[i], sorted[j]) > iou_threshold) {
                suppressed[j] = true;
            }
        }
    }
    return kept;
}

std::array<double, 2> centroid(const BBox& box) {
    return {0.5 * (box.x_min + box.x_max), 0.5 * (box.y_min + box.y_max)};
}

}  // namespace retina
