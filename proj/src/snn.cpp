#include "retina/snn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace retina {

BatchNormSpec BatchNormSpec::identity(int channels, double eps) {
    BatchNormSpec bn;
    bn.channels = channels;
    bn.gamma.assign(channels, 1.0);
    bn.beta.assign(channels, 0.0);
    bn.mean.assign(channels, 0.0);
    bn.var.assign(channels, 1.0);
    bn.eps = eps;
    return bn;
}

NetworkConfig NetworkConfig::retina_default() {
    NetworkConfig net;
    net.in_channels = 2;
    net.in_height = 64;
    net.in_width = 64;

    auto conv = [](int ci, int co, int k, int s, int p) {
        ConvSpec c;
        c.c_in = ci;
        c.c_out = co;
        c.k_x = c.k_y = k;
        c.s_x = c.s_y = s;
        c.p_x = c.p_y = p;
        return c;
    };
    auto block = [&](int ci, int co, int k, int s, int p, bool pool) {
        net.layers.emplace_back(conv(ci, co, k, s, p));
        net.layers.emplace_back(BatchNormSpec::identity(co));
        net.layers.emplace_back(IFSpec{});
        if (pool) net.layers.emplace_back(SumPoolSpec{2, 2});
    };

    block(2, 16, 5, 2, 1, true);    // 64 -> 31 -> 15
    block(16, 64, 3, 1, 1, true);   // 15 -> 15 -> 7
    block(64, 16, 3, 1, 1, true);   // 7 -> 7 -> 3
    block(16, 16, 3, 1, 1, false);  // 3
    block(16, 8, 3, 1, 1, false);
    block(8, 16, 3, 1, 1, false);
    net.layers.emplace_back(FlattenSpec{});  // 16*3*3 = 144
    block(144, 128, 1, 1, 0, false);
    block(128, 160, 1, 1, 0, false);
    return net;
}

NetworkConfig NetworkConfig::desk_default() {
    NetworkConfig net;
    net.in_channels = 2;
    net.in_height = 64;
    net.in_width = 64;
    auto conv = [](int ci, int co, int k, int s, int p) {
        ConvSpec c;
        c.c_in = ci;
        c.c_out = co;
        c.k_x = c.k_y = k;
        c.s_x = c.s_y = s;
        c.p_x = c.p_y = p;
        c.has_bias = true;
        return c;
    };
    net.layers.emplace_back(conv(2, 8, 5, 4, 1));  // 64 -> 16
    net.layers.emplace_back(IFSpec{});
    net.layers.emplace_back(SumPoolSpec{2, 2});    // -> 8
    net.layers.emplace_back(conv(8, 16, 3, 1, 1));
    net.layers.emplace_back(IFSpec{});
    net.layers.emplace_back(SumPoolSpec{2, 2});    // -> 4
    net.layers.emplace_back(FlattenSpec{});        // 256
    net.layers.emplace_back(conv(256, 160, 1, 1, 0));
    net.layers.emplace_back(IFSpec{});
    return net;
}

std::vector<LayerShape> spatial_trace(const NetworkConfig& net) {
    std::vector<LayerShape> shapes;
    LayerShape cur{net.in_channels, net.in_height, net.in_width};
    auto shrink = [](int size, int k, int p, int s) {
        return (size - k + 2 * p) / s + 1;
    };
    for (size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& layer = net.layers[i];
        if (const auto* conv = std::get_if<ConvSpec>(&layer)) {
            if (conv->c_in != cur.c) {
                throw std::invalid_argument("layer " + std::to_string(i) + ": conv expects " +
                                            std::to_string(conv->c_in) + " channels, got " +
                                            std::to_string(cur.c));
            }
            cur = {conv->c_out, shrink(cur.h, conv->k_y, conv->p_y, conv->s_y),
                   shrink(cur.w, conv->k_x, conv->p_x, conv->s_x)};
        } else if (const auto* bn = std::get_if<BatchNormSpec>(&layer)) {
            if (bn->channels != cur.c) {
                throw std::invalid_argument("layer " + std::to_string(i) +
                                            ": batchnorm channel mismatch");
            }
        } else if (const auto* pool = std::get_if<SumPoolSpec>(&layer)) {
            cur = {cur.c, shrink(cur.h, pool->k, 0, pool->s), shrink(cur.w, pool->k, 0, pool->s)};
        } else if (std::holds_alternative<FlattenSpec>(layer)) {
            cur = {static_cast<int>(cur.count()), 1, 1};
        }
        if (cur.h <= 0 || cur.w <= 0 || cur.c <= 0) {
            throw std::invalid_argument("layer " + std::to_string(i) +
                                        ": non-positive feature map size");
        }
        shapes.push_back(cur);
    }
    return shapes;
}

ConvSpec fuse_batchnorm(const ConvSpec& conv, const BatchNormSpec& bn) {
    if (bn.channels != conv.c_out) {
        throw std::invalid_argument("fuse_batchnorm: channel mismatch");
    }
    // A weightless conv (architecture only) fuses to architecture only; the
    // bias still folds since it depends on the normalization statistics alone.
    if (!conv.weights.empty() && conv.weights.size() != conv.weight_count()) {
        throw std::invalid_argument("fuse_batchnorm: conv weights have the wrong size");
    }
    ConvSpec fused = conv;
    fused.has_bias = true;
    fused.bias.assign(conv.c_out, 0.0);
    size_t per_channel = static_cast<size_t>(conv.c_in) * conv.k_y * conv.k_x;
    for (int oc = 0; oc < conv.c_out; ++oc) {
        double scale = bn.gamma[oc] / std::sqrt(bn.var[oc] + bn.eps);
        if (!fused.weights.empty()) {
            for (size_t j = 0; j < per_channel; ++j) {
                fused.weights[oc * per_channel + j] *= scale;
            }
        }
        double base = conv.has_bias && !conv.bias.empty() ? conv.bias[oc] : 0.0;
        fused.bias[oc] = bn.beta[oc] + scale * (base - bn.mean[oc]);
    }
    return fused;
}

NetworkConfig fuse_network(const NetworkConfig& net) {
    NetworkConfig out = net;
    out.layers.clear();
    for (size_t i = 0; i < net.layers.size(); ++i) {
        if (const auto* conv = std::get_if<ConvSpec>(&net.layers[i])) {
            if (i + 1 < net.layers.size()) {
                if (const auto* bn = std::get_if<BatchNormSpec>(&net.layers[i + 1])) {
                    out.layers.emplace_back(fuse_batchnorm(*conv, *bn));
                    ++i;
                    continue;
                }
            }
        }
        out.layers.push_back(net.layers[i]);
    }
    return out;
}

long long count_params(const NetworkConfig& net) {
    long long total = 0;
    for (size_t i = 0; i < net.layers.size(); ++i) {
        if (const auto* conv = std::get_if<ConvSpec>(&net.layers[i])) {
            total += static_cast<long long>(conv->weight_count());
            bool followed_by_bn = i + 1 < net.layers.size() &&
                                  std::holds_alternative<BatchNormSpec>(net.layers[i + 1]);
            if (conv->has_bias || followed_by_bn) total += conv->c_out;
        }
    }
    return total;
}

long long count_macs(const NetworkConfig& net) {
    auto shapes = spatial_trace(net);
    long long total = 0;
    for (size_t i = 0; i < net.layers.size(); ++i) {
        if (const auto* conv = std::get_if<ConvSpec>(&net.layers[i])) {
            total += static_cast<long long>(conv->weight_count()) * shapes[i].h * shapes[i].w;
        }
    }
    return total;
}

void if_step(std::span<double> v, std::span<const double> input, std::span<double> spikes,
             const IFSpec& spec) {
    if (v.size() != input.size() || v.size() != spikes.size()) {
        throw std::invalid_argument("if_step: shape mismatch");
    }
    for (size_t i = 0; i < v.size(); ++i) {
        double m = v[i] + input[i];
        if (m >= spec.threshold) {
            spikes[i] = 1.0;
            m = 0.0;  // reset to rest, not subtract
        } else {
            spikes[i] = 0.0;
            if (m < spec.v_min) m = spec.v_min;
        }
        v[i] = m;
    }
}

long long LayerActivity::total_spikes() const {
    return std::accumulate(spikes_per_step.begin(), spikes_per_step.end(), 0ll);
}

std::vector<double> firing_rate_profile(const ForwardTrace& trace) {
    std::vector<double> rates;
    for (const LayerActivity& layer : trace.if_layers) {
        double denom = static_cast<double>(layer.neurons) * trace.timesteps;
        rates.push_back(denom > 0 ? static_cast<double>(layer.total_spikes()) / denom : 0.0);
    }
    return rates;
}

namespace {

void conv_forward(const ConvSpec& conv, const LayerShape& in, const LayerShape& out,
                  const double* x, double* y) {
    for (int oc = 0; oc < conv.c_out; ++oc) {
        double b = conv.has_bias ? conv.bias[oc] : 0.0;
        double* ych = y + static_cast<size_t>(oc) * out.h * out.w;
        std::fill(ych, ych + static_cast<size_t>(out.h) * out.w, b);
    }
    for (int oc = 0; oc < conv.c_out; ++oc) {
        double* ych = y + static_cast<size_t>(oc) * out.h * out.w;
        for (int ic = 0; ic < conv.c_in; ++ic) {
            const double* xch = x + static_cast<size_t>(ic) * in.h * in.w;
            for (int ky = 0; ky < conv.k_y; ++ky) {
                for (int kx = 0; kx < conv.k_x; ++kx) {
                    double wv = conv.w(oc, ic, ky, kx);
                    if (wv == 0.0) continue;
                    for (int oy = 0; oy < out.h; ++oy) {
                        int iy = oy * conv.s_y - conv.p_y + ky;
                        if (iy < 0 || iy >= in.h) continue;
                        const double* xrow = xch + static_cast<size_t>(iy) * in.w;
                        double* yrow = ych + static_cast<size_t>(oy) * out.w;
                        for (int ox = 0; ox < out.w; ++ox) {
                            int ix = ox * conv.s_x - conv.p_x + kx;
                            if (ix < 0 || ix >= in.w) continue;
                            yrow[ox] += wv * xrow[ix];
                        }
                    }
                }
            }
        }
    }
}

void pool_forward(const SumPoolSpec& pool, const LayerShape& in, const LayerShape& out,
                  const double* x, double* y) {
    for (int c = 0; c < in.c; ++c) {
        const double* xch = x + static_cast<size_t>(c) * in.h * in.w;
        double* ych = y + static_cast<size_t>(c) * out.h * out.w;
        for (int oy = 0; oy < out.h; ++oy) {
            for (int ox = 0; ox < out.w; ++ox) {
                double sum = 0.0;
                for (int ky = 0; ky < pool.k; ++ky) {
                    for (int kx = 0; kx < pool.k; ++kx) {
                        sum += xch[static_cast<size_t>(oy * pool.s + ky) * in.w + ox * pool.s + kx];
                    }
                }
                ych[static_cast<size_t>(oy) * out.w + ox] = sum;
            }
        }
    }
}

}  // namespace

SequenceOutput forward_sequence(const NetworkConfig& net, const EventFrameSequence& frames) {
    if (frames.height != net.in_height || frames.width != net.in_width) {
        throw std::invalid_argument("input frames do not match network input shape");
    }
    auto shapes = spatial_trace(net);
    LayerShape in_shape{net.in_channels, net.in_height, net.in_width};

    // Membrane state per IF layer, zeroed at sequence start.
    std::vector<std::vector<double>> states;
    for (size_t i = 0; i < net.layers.size(); ++i) {
        if (std::holds_alternative<IFSpec>(net.layers[i])) {
            states.emplace_back(shapes[i].count(), 0.0);
        }
    }

    SequenceOutput out;
    out.num_bins = frames.num_bins;
    out.channels = static_cast<int>(shapes.back().count());
    out.values.assign(static_cast<size_t>(out.num_bins) * out.channels, 0.0);
    out.trace.timesteps = frames.num_bins;
    for (size_t i = 0; i < net.layers.size(); ++i) {
        if (std::holds_alternative<IFSpec>(net.layers[i])) {
            LayerActivity a;
            a.name = "if" + std::to_string(out.trace.if_layers.size());
            a.neurons = shapes[i].count();
            a.spikes_per_step.assign(frames.num_bins, 0);
            out.trace.if_layers.push_back(std::move(a));
        }
    }

    std::vector<double> cur, next;
    for (int bin = 0; bin < frames.num_bins; ++bin) {
        cur.assign(in_shape.count(), 0.0);
        for (size_t i = 0; i < in_shape.count(); ++i) {
            cur[i] = frames.frames[static_cast<size_t>(bin) * in_shape.count() + i];
        }
        LayerShape shape = in_shape;
        size_t if_index = 0;
        for (size_t i = 0; i < net.layers.size(); ++i) {
            const LayerShape& out_shape = shapes[i];
            if (const auto* conv = std::get_if<ConvSpec>(&net.layers[i])) {
                if (conv->weights.size() != conv->weight_count()) {
                    throw std::invalid_argument("layer " + std::to_string(i) +
                                                ": conv weights not set");
                }
                next.assign(out_shape.count(), 0.0);
                conv_forward(*conv, shape, out_shape, cur.data(), next.data());
                cur.swap(next);
            } else if (const auto* bn = std::get_if<BatchNormSpec>(&net.layers[i])) {
                size_t hw = static_cast<size_t>(shape.h) * shape.w;
                for (int c = 0; c < shape.c; ++c) {
                    double scale = bn->gamma[c] / std::sqrt(bn->var[c] + bn->eps);
                    double shift = bn->beta[c] - scale * bn->mean[c];
                    double* ch = cur.data() + c * hw;
                    for (size_t j = 0; j < hw; ++j) ch[j] = scale * ch[j] + shift;
                }
            } else if (const auto* ifspec = std::get_if<IFSpec>(&net.layers[i])) {
                std::vector<double>& v = states[if_index];
                next.assign(out_shape.count(), 0.0);
                if_step(v, cur, next, *ifspec);
                long long count = 0;
                for (double s : next) count += s > 0.5 ? 1 : 0;
                out.trace.if_layers[if_index].spikes_per_step[bin] = count;
                cur.swap(next);
                ++if_index;
            } else if (const auto* pool = std::get_if<SumPoolSpec>(&net.layers[i])) {
                next.assign(out_shape.count(), 0.0);
                pool_forward(*pool, shape, out_shape, cur.data(), next.data());
                cur.swap(next);
            }
            // Flatten is a relabeling; the buffer is already contiguous.
            shape = out_shape;
        }
        std::copy(cur.begin(), cur.end(),
                  out.values.begin() + static_cast<size_t>(bin) * out.channels);
    }
    return out;
}

namespace {

nlohmann::json layer_to_json(const LayerSpec& layer) {
    nlohmann::json j;
    if (const auto* conv = std::get_if<ConvSpec>(&layer)) {
        j["kind"] = "conv";
        j["c_in"] = conv->c_in;
        j["c_out"] = conv->c_out;
        j["k_x"] = conv->k_x;
        j["k_y"] = conv->k_y;
        j["s_x"] = conv->s_x;
        j["s_y"] = conv->s_y;
        j["p_x"] = conv->p_x;
        j["p_y"] = conv->p_y;
        j["bias"] = conv->has_bias;
    } else if (const auto* bn = std::get_if<BatchNormSpec>(&layer)) {
        j["kind"] = "batchnorm";
        j["channels"] = bn->channels;
        j["eps"] = bn->eps;
    } else if (const auto* ifspec = std::get_if<IFSpec>(&layer)) {
        j["kind"] = "if";
        j["threshold"] = ifspec->threshold;
        j["v_min"] = ifspec->v_min;
    } else if (const auto* pool = std::get_if<SumPoolSpec>(&layer)) {
        j["kind"] = "sumpool";
        j["k"] = pool->k;
        j["s"] = pool->s;
    } else {
        j["kind"] = "flatten";
    }
    return j;
}

LayerSpec layer_from_json(const nlohmann::json& j) {
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "conv") {
        ConvSpec conv;
        conv.c_in = j.at("c_in").get<int>();
        conv.c_out = j.at("c_out").get<int>();
        conv.k_x = j.at("k_x").get<int>();
        conv.k_y = j.at("k_y").get<int>();
        conv.s_x = j.at("s_x").get<int>();
        conv.s_y = j.at("s_y").get<int>();
        conv.p_x = j.at("p_x").get<int>();
        conv.p_y = j.at("p_y").get<int>();
        conv.has_bias = j.value("bias", false);
        return conv;
    }
    if (kind == "batchnorm") {
        auto bn = BatchNormSpec::identity(j.at("channels").get<int>(), j.value("eps", 1e-5));
        return bn;
    }
    if (kind == "if") {
        return IFSpec{j.value("threshold", 1.0), j.value("v_min", -1.0)};
    }
    if (kind == "sumpool") {
        return SumPoolSpec{j.at("k").get<int>(), j.at("s").get<int>()};
    }
    if (kind == "flatten") {
        return FlattenSpec{};
    }
    throw DataError("unknown layer kind: " + kind);
}

// Parameter blocks serialized per layer, in declaration order.
std::vector<std::pair<std::string, std::vector<double>*>> param_blocks(NetworkConfig& net) {
    std::vector<std::pair<std::string, std::vector<double>*>> blocks;
    int conv_id = 0, bn_id = 0;
    for (LayerSpec& layer : net.layers) {
        if (auto* conv = std::get_if<ConvSpec>(&layer)) {
            std::string name = "conv" + std::to_string(conv_id++);
            conv->weights.resize(conv->weight_count());
            blocks.emplace_back(name + ".weight", &conv->weights);
            if (conv->has_bias) {
                conv->bias.resize(conv->c_out);
                blocks.emplace_back(name + ".bias", &conv->bias);
            }
        } else if (auto* bn = std::get_if<BatchNormSpec>(&layer)) {
            std::string name = "bn" + std::to_string(bn_id++);
            blocks.emplace_back(name + ".gamma", &bn->gamma);
            blocks.emplace_back(name + ".beta", &bn->beta);
            blocks.emplace_back(name + ".mean", &bn->mean);
            blocks.emplace_back(name + ".var", &bn->var);
        }
    }
    return blocks;
}

}  // namespace

void save_network_json(const NetworkConfig& net, const std::string& path) {
    nlohmann::json j;
    j["input"] = {net.in_channels, net.in_height, net.in_width};
    auto layers = nlohmann::json::array();
    for (const LayerSpec& layer : net.layers) layers.push_back(layer_to_json(layer));
    j["layers"] = layers;
    std::ofstream file(path);
    if (!file.is_open()) throw DataError("cannot open file for writing: " + path);
    file << j.dump(2) << '\n';
}

NetworkConfig load_network_json(const std::string& path) {
    std::ifstream file(path);
    if (!file.is_open()) throw DataError("cannot open network file: " + path);
    nlohmann::json j;
    try {
        file >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": bad network json: " + e.what());
    }
    NetworkConfig net;
    auto input = j.at("input");
    net.in_channels = input[0].get<int>();
    net.in_height = input[1].get<int>();
    net.in_width = input[2].get<int>();
    for (const auto& layer : j.at("layers")) {
        net.layers.push_back(layer_from_json(layer));
    }
    return net;
}

void save_weights(const NetworkConfig& net, const std::string& path) {
    NetworkConfig copy = net;
    auto blocks = param_blocks(copy);
    nlohmann::json header;
    header["dtype"] = "f32";
    auto list = nlohmann::json::array();
    for (auto& [name, vec] : blocks) {
        list.push_back({{"name", name}, {"count", vec->size()}});
    }
    header["blocks"] = list;

    std::ofstream file(path, std::ios::binary);
    if (!file.is_open()) throw DataError("cannot open file for writing: " + path);
    file << header.dump() << '\n';
    for (auto& [name, vec] : blocks) {
        for (double v : *vec) {
            float f = static_cast<float>(v);
            unsigned char buf[4];
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            for (int b = 0; b < 4; ++b) buf[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
            file.write(reinterpret_cast<const char*>(buf), 4);
        }
    }
}

void load_weights(NetworkConfig& net, const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file.is_open()) throw DataError("cannot open weights file: " + path);
    std::string header_line;
    if (!std::getline(file, header_line)) throw DataError(path + ": missing weights header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": bad weights header: " + e.what());
    }
    auto blocks = param_blocks(net);
    const auto& list = header.at("blocks");
    if (list.size() != blocks.size()) {
        throw DataError(path + ": weights file has " + std::to_string(list.size()) +
                        " blocks, network needs " + std::to_string(blocks.size()));
    }
    for (size_t i = 0; i < blocks.size(); ++i) {
        size_t count = list[i].at("count").get<size_t>();
        if (count != blocks[i].second->size()) {
            throw DataError(path + ": block " + blocks[i].first + " expects " +
                            std::to_string(blocks[i].second->size()) + " values, file has " +
                            std::to_string(count));
        }
        for (size_t k = 0; k < count; ++k) {
            unsigned char buf[4];
            file.read(reinterpret_cast<char*>(buf), 4);
            if (file.gcount() != 4) throw DataError(path + ": truncated weights");
            uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) bits |= static_cast<uint32_t>(buf[b]) << (8 * b);
            float f;
            std::memcpy(&f, &bits, 4);
            (*blocks[i].second)[k] = f;
        }
    }
}

}  // namespace retina
