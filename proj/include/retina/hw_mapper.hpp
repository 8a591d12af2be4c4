#pragma once

#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "retina/snn.hpp"

namespace retina {
namespace hw {

struct CoreSpec {
    int id{0};
    double kernel_limit_ki{0};  // Ki entries, 8-bit weights
    double neuron_limit_ki{0};  // Ki entries, 16-bit states
};

// The nine-core layout: 3x(16,64), 2x(32,32), 2x(64,16), 2x(16,16).
std::array<CoreSpec, 9> speck_cores();

struct LayerFootprint {
    long long kernel_entries{0};
    long long neuron_entries{0};

    double kernel_ki() const { return static_cast<double>(kernel_entries) / 1024.0; }
    double neuron_ki() const { return static_cast<double>(neuron_entries) / 1024.0; }
    long long kernel_bytes() const { return kernel_entries; }      // 8-bit weights
    long long neuron_bytes() const { return neuron_entries * 2; }  // 16-bit states
};

// Exact kernel entries c * kx * ky * f.
long long kernel_memory_exact(const ConvSpec& conv);
// Power-of-two addressed form c * 2^(ceil(log2(kx*ky)) + ceil(log2 f)).
long long kernel_memory_rounded(const ConvSpec& conv);

long long neuron_memory(int channels, int f_x, int f_y);

std::set<int> compatible_cores(const LayerFootprint& footprint,
                               const std::array<CoreSpec, 9>& cores = speck_cores());

struct Assignment {
    bool feasible{false};
    std::vector<int> core_of_layer;       // layer index -> core id (when feasible)
    std::vector<int> infeasible_layers;   // a Hall-violating layer subset otherwise
};

// Injective layer->core assignment via backtracking, most-constrained layer
// first, lowest core id first. Infeasibility comes with a pigeonhole witness.
Assignment assign_layers(const std::vector<std::set<int>>& compatible_per_layer);
Assignment assign_layers(const std::vector<LayerFootprint>& footprints,
                         const std::array<CoreSpec, 9>& cores = speck_cores());

// -- Validation against the published per-layer table ------------------------

struct TableRow {
    int layer_id{0};
    int c_in{0}, c_out{0}, k{0};
    double printed_nm_ki{0};    // as printed under N_M
    double printed_kmt_ki{0};   // as printed under K_MT
    std::set<int> printed_cores;
};

std::array<TableRow, 8> paper_table();

enum class Verdict { MatchesAsPrinted, MatchesSwapped, Mismatch };

std::string to_string(Verdict v);

struct LayerValidation {
    int layer_id{0};
    long long kernel_exact{0};
    long long kernel_rounded{0};
    long long neuron_runtime{0};   // from the network's own spatial trace
    long long neuron_nominal{0};   // same-padded conv-only chain (pools/flatten skipped)
    Verdict verdict{Verdict::Mismatch};
    std::set<int> cores_from_printed;  // compatibility of the swapped printed footprint
};

// Recomputes Eqs. 1-3 for each conv block of the network and scores each
// printed row as-printed vs columns-swapped vs mismatch. A cell matches when
// any computed candidate agrees with the printed Ki value to its two printed
// decimals. The printed table is internally inconsistent (no single trace
// explains every row), hence the candidate sets.
std::vector<LayerValidation> validate_against_table(const NetworkConfig& net);

}  // namespace hw
}  // namespace retina
