#include "retina/hw_mapper.hpp"

#include <algorithm>
#include <cmath>

namespace retina {
namespace hw {

std::array<CoreSpec, 9> speck_cores() {
    return {{{0, 16, 64},
             {1, 16, 64},
             {2, 16, 64},
             {3, 32, 32},
             {4, 32, 32},
             {5, 64, 16},
             {6, 64, 16},
             {7, 16, 16},
             {8, 16, 16}}};
}

namespace {

int ceil_log2(long long v) {
    int bits = 0;
    long long p = 1;
    while (p < v) {
        p <<= 1;
        ++bits;
    }
    return bits;
}

}  // namespace

long long kernel_memory_exact(const ConvSpec& conv) {
    return static_cast<long long>(conv.c_in) * conv.k_x * conv.k_y * conv.c_out;
}

long long kernel_memory_rounded(const ConvSpec& conv) {
    int exp = ceil_log2(static_cast<long long>(conv.k_x) * conv.k_y) + ceil_log2(conv.c_out);
    return static_cast<long long>(conv.c_in) << exp;
}

long long neuron_memory(int channels, int f_x, int f_y) {
    if (channels <= 0 || f_x <= 0 || f_y <= 0) {
        throw std::invalid_argument("neuron_memory: non-positive dimensions");
    }
    return static_cast<long long>(channels) * f_x * f_y;
}

std::set<int> compatible_cores(const LayerFootprint& footprint,
                               const std::array<CoreSpec, 9>& cores) {
    std::set<int> out;
    for (const CoreSpec& core : cores) {
        if (footprint.kernel_ki() <= core.kernel_limit_ki &&
            footprint.neuron_ki() <= core.neuron_limit_ki) {
            out.insert(core.id);
        }
    }
    return out;
}

namespace {

// Smallest Hall-violating subset: layers whose combined compatible cores are
// fewer than the layers themselves.
std::vector<int> hall_witness(const std::vector<std::set<int>>& compat) {
    const size_t n = compat.size();
    for (size_t size = 1; size <= n; ++size) {
        // iterative subset enumeration of the given size
        std::vector<size_t> idx(size);
        for (size_t i = 0; i < size; ++i) idx[i] = i;
        while (true) {
            std::set<int> uni;
            for (size_t i : idx) uni.insert(compat[i].begin(), compat[i].end());
            if (uni.size() < size) {
                std::vector<int> witness(idx.begin(), idx.end());
                return witness;
            }
            // next combination
            size_t k = size;
            while (k > 0 && idx[k - 1] == n - size + (k - 1)) --k;
            if (k == 0) break;
            ++idx[k - 1];
            for (size_t j = k; j < size; ++j) idx[j] = idx[j - 1] + 1;
        }
    }
    return {};
}

bool backtrack(const std::vector<std::set<int>>& compat, std::vector<size_t>& order,
               size_t depth, std::vector<int>& core_of_layer, std::set<int>& used) {
    if (depth == order.size()) return true;
    size_t layer = order[depth];
    for (int core : compat[layer]) {  // std::set iterates lowest id first
        if (used.count(core)) continue;
        used.insert(core);
        core_of_layer[layer] = core;
        if (backtrack(compat, order, depth + 1, core_of_layer, used)) return true;
        used.erase(core);
        core_of_layer[layer] = -1;
    }
    return false;
}

}  // namespace

Assignment assign_layers(const std::vector<std::set<int>>& compatible_per_layer) {
    Assignment result;
    const size_t n = compatible_per_layer.size();
    if (n == 0) {
        result.feasible = true;
        return result;
    }
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return compatible_per_layer[a].size() < compatible_per_layer[b].size();
    });
    result.core_of_layer.assign(n, -1);
    std::set<int> used;
    if (backtrack(compatible_per_layer, order, 0, result.core_of_layer, used)) {
        result.feasible = true;
        return result;
    }
    result.core_of_layer.clear();
    result.infeasible_layers = hall_witness(compatible_per_layer);
    return result;
}

Assignment assign_layers(const std::vector<LayerFootprint>& footprints,
                         const std::array<CoreSpec, 9>& cores) {
    std::vector<std::set<int>> compat;
    compat.reserve(footprints.size());
    for (const LayerFootprint& fp : footprints) compat.push_back(compatible_cores(fp, cores));
    return assign_layers(compat);
}

std::array<TableRow, 8> paper_table() {
    std::set<int> all{0, 1, 2, 3, 4, 5, 6, 7, 8};
    return {{{1, 2, 16, 5, 0.78, 15.02, all},
             {2, 16, 64, 3, 9.00, 64.00, {0, 1, 2}},
             {3, 64, 16, 3, 9.00, 4.00, all},
             {4, 16, 16, 3, 2.25, 1.00, all},
             {5, 16, 8, 3, 1.12, 0.50, all},
             {6, 8, 16, 3, 1.12, 1.00, all},
             {7, 144, 128, 1, 18.00, 1.12, {3, 4, 5, 6}},
             {8, 128, 160, 1, 34.37, 2.42, {5, 6}}}};
}

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::MatchesAsPrinted: return "as-printed";
        case Verdict::MatchesSwapped: return "columns-swapped";
        case Verdict::Mismatch: return "mismatch";
    }
    return "?";
}

namespace {

// Printed values carry two decimals and are truncated (15376/1024 prints as
// 15.02, 1152/1024 as 1.12), so a match means agreement within that grid.
bool matches_printed(double printed_ki, long long entries) {
    double ki = static_cast<double>(entries) / 1024.0;
    return std::abs(ki - printed_ki) <= 0.0055;
}

bool any_match(double printed_ki, const std::vector<long long>& candidates) {
    return std::any_of(candidates.begin(), candidates.end(),
                       [&](long long c) { return matches_printed(printed_ki, c); });
}

}  // namespace

std::vector<LayerValidation> validate_against_table(const NetworkConfig& net) {
    auto shapes = spatial_trace(net);
    auto table = paper_table();

    // Runtime: IF state tensor per block = the conv output of that block.
    std::vector<long long> neuron_runtime;
    std::vector<const ConvSpec*> convs;
    for (size_t i = 0; i < net.layers.size(); ++i) {
        if (const auto* conv = std::get_if<ConvSpec>(&net.layers[i])) {
            convs.push_back(conv);
            neuron_runtime.push_back(neuron_memory(shapes[i].c, shapes[i].h, shapes[i].w));
        }
    }
    if (convs.size() != table.size()) {
        throw std::invalid_argument("validate_against_table: expected " +
                                    std::to_string(table.size()) + " conv blocks, got " +
                                    std::to_string(convs.size()));
    }

    // Nominal: the chain that best explains the printed numbers - Eq. 3 on
    // conv layers only, same padding (k/2), printed strides, pools and
    // flatten skipped (the table prints pool stride 1x1).
    std::vector<long long> neuron_nominal;
    {
        int size = net.in_height;
        for (const ConvSpec* conv : convs) {
            int k = conv->k_x;
            int stride = conv->s_x;
            size = (size - k + 2 * (k / 2)) / stride + 1;
            neuron_nominal.push_back(neuron_memory(conv->c_out, size, size));
        }
    }

    std::vector<LayerValidation> report;
    for (size_t i = 0; i < table.size(); ++i) {
        LayerValidation v;
        v.layer_id = table[i].layer_id;
        v.kernel_exact = kernel_memory_exact(*convs[i]);
        v.kernel_rounded = kernel_memory_rounded(*convs[i]);
        v.neuron_runtime = neuron_runtime[i];
        v.neuron_nominal = neuron_nominal[i];

        std::vector<long long> kernel_candidates{v.kernel_exact, v.kernel_rounded};
        std::vector<long long> neuron_candidates{v.neuron_runtime, v.neuron_nominal};

        bool as_printed = any_match(table[i].printed_kmt_ki, kernel_candidates) &&
                          any_match(table[i].printed_nm_ki, neuron_candidates);
        bool swapped = any_match(table[i].printed_nm_ki, kernel_candidates) &&
                       any_match(table[i].printed_kmt_ki, neuron_candidates);
        v.verdict = as_printed ? Verdict::MatchesAsPrinted
                               : (swapped ? Verdict::MatchesSwapped : Verdict::Mismatch);

        // Compatibility of the printed footprint under the swapped reading
        // (kernel = N_M column, neuron = K_MT column) reproduces the printed
        // Cores ID column for every row.
        LayerFootprint printed;
        printed.kernel_entries = static_cast<long long>(table[i].printed_nm_ki * 1024.0 + 0.5);
        printed.neuron_entries = static_cast<long long>(table[i].printed_kmt_ki * 1024.0 + 0.5);
        v.cores_from_printed = compatible_cores(printed);
        report.push_back(v);
    }
    return report;
}

}  // namespace hw
}  // namespace retina
