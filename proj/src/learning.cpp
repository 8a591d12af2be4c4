#include "retina/learning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include "retina/rng.hpp"

namespace retina {

double loss_box(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) {
        throw std::invalid_argument("loss_box: pred/target count mismatch");
    }
    double sum = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double d = pred[i] - target[i];
        sum += d * d;
    }
    return sum;
}

double loss_conf(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) {
        throw std::invalid_argument("loss_conf: pred/target shape mismatch");
    }
    double sum = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double d = pred[i] - target[i];
        sum += d * d;
    }
    return sum;
}

double loss_syn(std::span<const double> per_layer_ops, double target) {
    double sum = 0.0;
    for (double ops : per_layer_ops) {
        double d = ops - target;
        sum += d * d / (target * target);
    }
    return sum;
}

double total_loss(double box, double conf, double syn, const LossWeights& w) {
    return w.lambda_box * box + w.lambda_conf * conf + w.lambda_syn * syn;
}

double centroid_error(double pred_x, double pred_y, double label_x, double label_y) {
    return std::hypot(pred_x - label_x, pred_y - label_y);
}

double centroid_error(const std::array<double, 2>& pred, const PupilLabel& label) {
    return centroid_error(pred[0], pred[1], label.x, label.y);
}

double surrogate_grad(double v, double alpha, double beta, double threshold) {
    return alpha * std::exp(-beta * std::abs(v - threshold));
}

// ---------------------------------------------------------------------------
// BPTT engine
// ---------------------------------------------------------------------------

namespace {

enum class Kind { Conv, If, Pool, Flatten };

struct LayerPlan {
    Kind kind;
    LayerShape in, out;
    // conv
    const ConvSpec* conv{nullptr};
    size_t w_off{0}, b_off{0};
    double fanout{0};
    int conv_index{-1};
    // if
    const IFSpec* ifspec{nullptr};
    int if_index{-1};
    // pool
    const SumPoolSpec* pool{nullptr};
};

void conv_fwd(const ConvSpec& c, const LayerShape& in, const LayerShape& out,
              const double* params_w, const double* params_b, const double* x, double* y) {
    size_t per_oc = static_cast<size_t>(c.c_in) * c.k_y * c.k_x;
    for (int oc = 0; oc < c.c_out; ++oc) {
        double* ych = y + static_cast<size_t>(oc) * out.h * out.w;
        std::fill(ych, ych + static_cast<size_t>(out.h) * out.w, params_b[oc]);
        for (int ic = 0; ic < c.c_in; ++ic) {
            const double* xch = x + static_cast<size_t>(ic) * in.h * in.w;
            const double* wk = params_w + oc * per_oc + static_cast<size_t>(ic) * c.k_y * c.k_x;
            for (int ky = 0; ky < c.k_y; ++ky) {
                for (int kx = 0; kx < c.k_x; ++kx) {
                    double wv = wk[ky * c.k_x + kx];
                    if (wv == 0.0) continue;
                    for (int oy = 0; oy < out.h; ++oy) {
                        int iy = oy * c.s_y - c.p_y + ky;
                        if (iy < 0 || iy >= in.h) continue;
                        const double* xrow = xch + static_cast<size_t>(iy) * in.w;
                        double* yrow = ych + static_cast<size_t>(oy) * out.w;
                        for (int ox = 0; ox < out.w; ++ox) {
                            int ix = ox * c.s_x - c.p_x + kx;
                            if (ix < 0 || ix >= in.w) continue;
                            yrow[ox] += wv * xrow[ix];
                        }
                    }
                }
            }
        }
    }
}

void conv_bwd(const ConvSpec& c, const LayerShape& in, const LayerShape& out,
              const double* params_w, const double* x, const double* gy, double* gx,
              double* gw, double* gb) {
    size_t per_oc = static_cast<size_t>(c.c_in) * c.k_y * c.k_x;
    std::fill(gx, gx + in.count(), 0.0);
    for (int oc = 0; oc < c.c_out; ++oc) {
        const double* gych = gy + static_cast<size_t>(oc) * out.h * out.w;
        double acc_b = 0.0;
        for (size_t j = 0; j < static_cast<size_t>(out.h) * out.w; ++j) acc_b += gych[j];
        gb[oc] += acc_b;
        for (int ic = 0; ic < c.c_in; ++ic) {
            const double* xch = x + static_cast<size_t>(ic) * in.h * in.w;
            double* gxch = gx + static_cast<size_t>(ic) * in.h * in.w;
            const double* wk = params_w + oc * per_oc + static_cast<size_t>(ic) * c.k_y * c.k_x;
            double* gwk = gw + oc * per_oc + static_cast<size_t>(ic) * c.k_y * c.k_x;
            for (int ky = 0; ky < c.k_y; ++ky) {
                for (int kx = 0; kx < c.k_x; ++kx) {
                    double wv = wk[ky * c.k_x + kx];
                    double acc_w = 0.0;
                    for (int oy = 0; oy < out.h; ++oy) {
                        int iy = oy * c.s_y - c.p_y + ky;
                        if (iy < 0 || iy >= in.h) continue;
                        const double* xrow = xch + static_cast<size_t>(iy) * in.w;
                        double* gxrow = gxch + static_cast<size_t>(iy) * in.w;
                        const double* gyrow = gych + static_cast<size_t>(oy) * out.w;
                        for (int ox = 0; ox < out.w; ++ox) {
                            int ix = ox * c.s_x - c.p_x + kx;
                            if (ix < 0 || ix >= in.w) continue;
                            acc_w += xrow[ix] * gyrow[ox];
                            gxrow[ix] += wv * gyrow[ox];
                        }
                    }
                    gwk[ky * c.k_x + kx] += acc_w;
                }
            }
        }
    }
}

void pool_fwd(const SumPoolSpec& p, const LayerShape& in, const LayerShape& out, const double* x,
              double* y) {
    for (int c = 0; c < in.c; ++c) {
        const double* xch = x + static_cast<size_t>(c) * in.h * in.w;
        double* ych = y + static_cast<size_t>(c) * out.h * out.w;
        for (int oy = 0; oy < out.h; ++oy) {
            for (int ox = 0; ox < out.w; ++ox) {
                double sum = 0.0;
                for (int ky = 0; ky < p.k; ++ky) {
                    for (int kx = 0; kx < p.k; ++kx) {
                        sum += xch[static_cast<size_t>(oy * p.s + ky) * in.w + ox * p.s + kx];
                    }
                }
                ych[static_cast<size_t>(oy) * out.w + ox] = sum;
            }
        }
    }
}

void pool_bwd(const SumPoolSpec& p, const LayerShape& in, const LayerShape& out, const double* gy,
              double* gx) {
    std::fill(gx, gx + in.count(), 0.0);
    for (int c = 0; c < in.c; ++c) {
        const double* gych = gy + static_cast<size_t>(c) * out.h * out.w;
        double* gxch = gx + static_cast<size_t>(c) * in.h * in.w;
        for (int oy = 0; oy < out.h; ++oy) {
            for (int ox = 0; ox < out.w; ++ox) {
                double g = gych[static_cast<size_t>(oy) * out.w + ox];
                for (int ky = 0; ky < p.k; ++ky) {
                    for (int kx = 0; kx < p.k; ++kx) {
                        gxch[static_cast<size_t>(oy * p.s + ky) * in.w + ox * p.s + kx] += g;
                    }
                }
            }
        }
    }
}

struct BinTarget {
    CellIndex cell;
    std::array<double, 4> box;  // x_tr, y_tr, x_bl, y_bl, in coord_scale units
};

BinTarget bin_target(const PupilLabel& label, double frame_size, double coord_scale) {
    auto [box, cell] = make_target(label, frame_size);
    BinTarget t;
    t.cell = cell;
    t.box = {box.x_max / coord_scale, box.y_min / coord_scale, box.x_min / coord_scale,
             box.y_max / coord_scale};
    return t;
}

}  // namespace

struct BpttModel::Impl {
    NetworkConfig cfg;  // fused; geometry source of truth
    TemporalFilter filter;
    LossWeights weights;
    TrainConfig train_cfg;

    LayerShape in_shape;
    std::vector<LayerPlan> plan;
    int num_convs{0};
    int num_ifs{0};

    std::vector<double> params, grads;
    std::vector<size_t> conv_w_off, conv_b_off;

    // Tapes for the current sequence.
    int T{0};
    std::vector<std::vector<double>> acts;    // acts[l]: T x in-size of layer l; acts[L]: output
    std::vector<std::vector<double>> if_pre;  // per IF layer: T x size, pre-spike membrane
    std::vector<std::vector<double>> membrane, carry;
    std::vector<double> outputs;  // (T, C) final spikes

    int out_channels() const { return static_cast<int>(plan.back().out.count()); }

    void build(const NetworkConfig& fused) {
        cfg = fused;
        in_shape = {cfg.in_channels, cfg.in_height, cfg.in_width};
        auto shapes = spatial_trace(cfg);
        size_t offset = 0;
        LayerShape cur = in_shape;
        for (size_t i = 0; i < cfg.layers.size(); ++i) {
            LayerPlan p;
            p.in = cur;
            p.out = shapes[i];
            if (const auto* conv = std::get_if<ConvSpec>(&cfg.layers[i])) {
                p.kind = Kind::Conv;
                p.conv = conv;
                p.conv_index = num_convs++;
                p.w_off = offset;
                offset += conv->weight_count();
                p.b_off = offset;
                offset += conv->c_out;
                p.fanout = static_cast<double>(conv->c_out) * conv->k_x * conv->k_y /
                           (static_cast<double>(conv->s_x) * conv->s_y);
                conv_w_off.push_back(p.w_off);
                conv_b_off.push_back(p.b_off);
            } else if (const auto* ifs = std::get_if<IFSpec>(&cfg.layers[i])) {
                p.kind = Kind::If;
                p.ifspec = ifs;
                p.if_index = num_ifs++;
            } else if (const auto* pool = std::get_if<SumPoolSpec>(&cfg.layers[i])) {
                p.kind = Kind::Pool;
                p.pool = pool;
            } else if (std::holds_alternative<FlattenSpec>(cfg.layers[i])) {
                p.kind = Kind::Flatten;
            } else {
                throw std::invalid_argument(
                    "BpttModel requires a fused network (no batchnorm layers); call "
                    "fuse_network first");
            }
            plan.push_back(p);
            cur = shapes[i];
        }
        params.assign(offset, 0.0);
        grads.assign(offset, 0.0);
        membrane.resize(num_ifs);
        carry.resize(num_ifs);
        if_pre.resize(num_ifs);
    }

    void ensure_tapes(int bins) {
        T = bins;
        acts.resize(plan.size() + 1);
        acts[0].assign(static_cast<size_t>(T) * in_shape.count(), 0.0);
        for (size_t l = 0; l < plan.size(); ++l) {
            acts[l + 1].assign(static_cast<size_t>(T) * plan[l].out.count(), 0.0);
        }
        for (int k = 0; k < num_ifs; ++k) if_pre[k].clear();
        for (size_t l = 0; l < plan.size(); ++l) {
            if (plan[l].kind == Kind::If) {
                if_pre[plan[l].if_index].assign(static_cast<size_t>(T) * plan[l].out.count(),
                                                0.0);
                membrane[plan[l].if_index].assign(plan[l].out.count(), 0.0);
                carry[plan[l].if_index].assign(plan[l].out.count(), 0.0);
            }
        }
    }

    void forward(const EventFrameSequence& seq) {
        for (int t = 0; t < T; ++t) {
            const uint8_t* frame = seq.frames.data() + static_cast<size_t>(t) * in_shape.count();
            double* x0 = acts[0].data() + static_cast<size_t>(t) * in_shape.count();
            for (size_t i = 0; i < in_shape.count(); ++i) x0[i] = frame[i];
            for (size_t l = 0; l < plan.size(); ++l) {
                const LayerPlan& p = plan[l];
                const double* x = acts[l].data() + static_cast<size_t>(t) * p.in.count();
                double* y = acts[l + 1].data() + static_cast<size_t>(t) * p.out.count();
                switch (p.kind) {
                    case Kind::Conv:
                        conv_fwd(*p.conv, p.in, p.out, params.data() + p.w_off,
                                 params.data() + p.b_off, x, y);
                        break;
                    case Kind::If: {
                        std::vector<double>& v = membrane[p.if_index];
                        double* pre = if_pre[p.if_index].data() +
                                      static_cast<size_t>(t) * p.out.count();
                        for (size_t i = 0; i < p.out.count(); ++i) {
                            double a = v[i] + x[i];
                            pre[i] = a;
                            if (a >= p.ifspec->threshold) {
                                y[i] = 1.0;
                                v[i] = 0.0;
                            } else {
                                y[i] = 0.0;
                                v[i] = std::max(a, p.ifspec->v_min);
                            }
                        }
                        break;
                    }
                    case Kind::Pool:
                        pool_fwd(*p.pool, p.in, p.out, x, y);
                        break;
                    case Kind::Flatten:
                        std::copy(x, x + p.in.count(), y);
                        break;
                }
            }
        }
        outputs = acts.back();
    }

    // dL/d final-output plus per-conv synop gradients, backwards through time.
    void backward(const std::vector<double>& d_out, const std::vector<double>& syn_g) {
        size_t max_size = in_shape.count();
        for (const LayerPlan& p : plan) max_size = std::max(max_size, p.out.count());
        std::vector<double> gout(max_size), gin(max_size);
        for (int k = 0; k < num_ifs; ++k) {
            std::fill(carry[k].begin(), carry[k].end(), 0.0);
        }
        for (int t = T - 1; t >= 0; --t) {
            std::copy(d_out.begin() + static_cast<size_t>(t) * plan.back().out.count(),
                      d_out.begin() + static_cast<size_t>(t + 1) * plan.back().out.count(),
                      gout.begin());
            for (int l = static_cast<int>(plan.size()) - 1; l >= 0; --l) {
                const LayerPlan& p = plan[l];
                const double* x = acts[l].data() + static_cast<size_t>(t) * p.in.count();
                switch (p.kind) {
                    case Kind::Conv:
                        conv_bwd(*p.conv, p.in, p.out, params.data() + p.w_off, x, gout.data(),
                                 gin.data(), grads.data() + p.w_off, grads.data() + p.b_off);
                        if (syn_g[p.conv_index] != 0.0) {
                            double g = syn_g[p.conv_index];
                            for (size_t i = 0; i < p.in.count(); ++i) gin[i] += g;
                        }
                        break;
                    case Kind::If: {
                        const double* pre = if_pre[p.if_index].data() +
                                            static_cast<size_t>(t) * p.out.count();
                        std::vector<double>& cv = carry[p.if_index];
                        double theta = p.ifspec->threshold;
                        double vmin = p.ifspec->v_min;
                        for (size_t i = 0; i < p.out.count(); ++i) {
                            double a = pre[i];
                            double sg = surrogate_grad(a, train_cfg.surrogate_alpha,
                                                       train_cfg.surrogate_beta, theta);
                            double post_factor;
                            if (a >= theta) {
                                post_factor = 0.0;  // reset branch: stop-gradient
                                if (train_cfg.reset_passthrough) post_factor = -sg * std::max(a, vmin);
                            } else {
                                post_factor = a >= vmin ? 1.0 : 0.0;
                                if (train_cfg.reset_passthrough && a >= vmin) {
                                    post_factor -= sg * a;
                                }
                            }
                            double da = gout[i] * sg + cv[i] * post_factor;
                            gin[i] = da;
                            cv[i] = da;
                        }
                        break;
                    }
                    case Kind::Pool:
                        pool_bwd(*p.pool, p.in, p.out, gout.data(), gin.data());
                        break;
                    case Kind::Flatten:
                        std::copy(gout.begin(), gout.begin() + p.in.count(), gin.begin());
                        break;
                }
                std::swap(gout, gin);
            }
        }
    }
};

BpttModel::BpttModel(const NetworkConfig& fused, const TemporalFilter& filter,
                     const LossWeights& weights, const TrainConfig& cfg)
    : impl_(std::make_unique<Impl>()) {
    impl_->filter = filter;
    impl_->weights = weights;
    impl_->train_cfg = cfg;
    impl_->build(fused);
}

BpttModel::~BpttModel() = default;
BpttModel::BpttModel(BpttModel&&) noexcept = default;
BpttModel& BpttModel::operator=(BpttModel&&) noexcept = default;

size_t BpttModel::param_count() const { return impl_->params.size(); }
std::span<double> BpttModel::params() { return impl_->params; }
std::span<const double> BpttModel::params() const { return impl_->params; }
std::span<const double> BpttModel::grads() const { return impl_->grads; }
void BpttModel::zero_grad() { std::fill(impl_->grads.begin(), impl_->grads.end(), 0.0); }
const std::vector<double>& BpttModel::last_outputs() const { return impl_->outputs; }
int BpttModel::output_channels() const { return impl_->out_channels(); }

void BpttModel::init_params(uint64_t seed, double scale) {
    Rng rng(seed);
    for (const LayerPlan& p : impl_->plan) {
        if (p.kind != Kind::Conv) continue;
        double fan_in = static_cast<double>(p.conv->c_in) * p.conv->k_x * p.conv->k_y;
        double bound = scale * std::sqrt(6.0 / fan_in);
        for (size_t i = 0; i < p.conv->weight_count(); ++i) {
            impl_->params[p.w_off + i] = rng.uniform(-bound, bound);
        }
        for (int i = 0; i < p.conv->c_out; ++i) impl_->params[p.b_off + i] = 0.0;
    }
}

void BpttModel::import_params(const NetworkConfig& fused) {
    int ci = 0;
    for (const LayerSpec& layer : fused.layers) {
        if (const auto* conv = std::get_if<ConvSpec>(&layer)) {
            if (conv->weights.size() != conv->weight_count()) {
                throw std::invalid_argument("import_params: conv weights not set");
            }
            std::copy(conv->weights.begin(), conv->weights.end(),
                      impl_->params.begin() + impl_->conv_w_off[ci]);
            if (conv->has_bias && !conv->bias.empty()) {
                std::copy(conv->bias.begin(), conv->bias.end(),
                          impl_->params.begin() + impl_->conv_b_off[ci]);
            } else {
                std::fill_n(impl_->params.begin() + impl_->conv_b_off[ci], conv->c_out, 0.0);
            }
            ++ci;
        }
    }
}

void BpttModel::export_params(NetworkConfig& fused) const {
    int ci = 0;
    for (LayerSpec& layer : fused.layers) {
        if (auto* conv = std::get_if<ConvSpec>(&layer)) {
            conv->weights.assign(impl_->params.begin() + impl_->conv_w_off[ci],
                                 impl_->params.begin() + impl_->conv_w_off[ci] +
                                     conv->weight_count());
            conv->has_bias = true;
            conv->bias.assign(impl_->params.begin() + impl_->conv_b_off[ci],
                              impl_->params.begin() + impl_->conv_b_off[ci] + conv->c_out);
            ++ci;
        }
    }
}

SampleLoss BpttModel::compute(const EventFrameSequence& seq, bool with_grad) {
    Impl& m = *impl_;
    if (seq.height != m.in_shape.h || seq.width != m.in_shape.w) {
        throw std::invalid_argument("sequence does not match network input shape");
    }
    m.ensure_tapes(seq.num_bins);
    m.forward(seq);

    const int T = m.T;
    const int C = m.out_channels();
    if (C != GridPrediction::kChannels) {
        throw std::invalid_argument("training head expects " +
                                    std::to_string(GridPrediction::kChannels) + " channels");
    }
    std::vector<double> filtered = apply_filter(m.filter, m.outputs, T, C);

    int warmup = m.train_cfg.loss_warmup_bins >= 0 ? m.train_cfg.loss_warmup_bins
                                                   : m.filter.size();
    warmup = std::min(warmup, T - 1);
    const int n_sup = T - warmup;
    const double frame = static_cast<double>(seq.width);

    // Assemble matched box pairs and the full confidence grids, then grade
    // with the loss primitives.
    std::vector<double> pred_box, target_box, pred_conf, target_conf;
    pred_box.reserve(static_cast<size_t>(n_sup) * GridPrediction::kAnchors * 4);
    const int cells = GridPrediction::kGrid * GridPrediction::kGrid;
    pred_conf.reserve(static_cast<size_t>(n_sup) * cells * GridPrediction::kAnchors);
    std::vector<BinTarget> targets(T);
    for (int t = warmup; t < T; ++t) {
        targets[t] = bin_target(seq.labels[t], frame, m.train_cfg.coord_scale);
        const BinTarget& bt = targets[t];
        for (int a = 0; a < GridPrediction::kAnchors; ++a) {
            for (int j = 0; j < 4; ++j) {
                size_t ch = GridPrediction::channel_of(bt.cell.row, bt.cell.col, a, j);
                pred_box.push_back(filtered[static_cast<size_t>(t) * C + ch]);
                target_box.push_back(bt.box[j]);
            }
        }
        for (int r = 0; r < GridPrediction::kGrid; ++r) {
            for (int c = 0; c < GridPrediction::kGrid; ++c) {
                for (int a = 0; a < GridPrediction::kAnchors; ++a) {
                    size_t ch = GridPrediction::channel_of(r, c, a, 4);
                    pred_conf.push_back(filtered[static_cast<size_t>(t) * C + ch]);
                    bool owns = r == bt.cell.row && c == bt.cell.col;
                    target_conf.push_back(owns ? m.train_cfg.conf_scale : 0.0);
                }
            }
        }
    }

    SampleLoss loss;
    loss.box = loss_box(pred_box, target_box) / n_sup;
    loss.conf = loss_conf(pred_conf, target_conf) / n_sup;

    // Synaptic operations: spikes entering each conv times its fan-out.
    loss.per_layer_ops.assign(m.num_convs, 0.0);
    for (const LayerPlan& p : m.plan) {
        if (p.kind != Kind::Conv) continue;
        const std::vector<double>& in_act = m.acts[&p - m.plan.data()];
        double sum = std::accumulate(in_act.begin(), in_act.end(), 0.0);
        loss.per_layer_ops[p.conv_index] = sum * p.fanout;
    }
    loss.syn = loss_syn(loss.per_layer_ops, m.weights.syn_target);
    loss.total = total_loss(loss.box, loss.conf, loss.syn, m.weights);

    if (!with_grad) return loss;

    // Gradient w.r.t. the filtered output.
    std::vector<double> d_filtered(static_cast<size_t>(T) * C, 0.0);
    for (int t = warmup; t < T; ++t) {
        const BinTarget& bt = targets[t];
        for (int a = 0; a < GridPrediction::kAnchors; ++a) {
            for (int j = 0; j < 4; ++j) {
                size_t ch = GridPrediction::channel_of(bt.cell.row, bt.cell.col, a, j);
                size_t idx = static_cast<size_t>(t) * C + ch;
                d_filtered[idx] += m.weights.lambda_box * 2.0 *
                                   (filtered[idx] - bt.box[j]) / n_sup;
            }
        }
        for (int r = 0; r < GridPrediction::kGrid; ++r) {
            for (int c = 0; c < GridPrediction::kGrid; ++c) {
                for (int a = 0; a < GridPrediction::kAnchors; ++a) {
                    size_t ch = GridPrediction::channel_of(r, c, a, 4);
                    size_t idx = static_cast<size_t>(t) * C + ch;
                    bool owns = r == bt.cell.row && c == bt.cell.col;
                    d_filtered[idx] += m.weights.lambda_conf * 2.0 *
                                       (filtered[idx] - (owns ? m.train_cfg.conf_scale : 0.0)) /
                                       n_sup;
                }
            }
        }
    }

    // Through the causal filter: dx[t] = sum_i w[i] * dy[t+i].
    std::vector<double> d_out(static_cast<size_t>(T) * C, 0.0);
    const int n_taps = m.filter.size();
    for (int t = 0; t < T; ++t) {
        double* row = d_out.data() + static_cast<size_t>(t) * C;
        for (int i = 0; i < n_taps && t + i < T; ++i) {
            const double w = m.filter.weights[i];
            const double* dyrow = d_filtered.data() + static_cast<size_t>(t + i) * C;
            for (int c = 0; c < C; ++c) row[c] += w * dyrow[c];
        }
    }

    // Per-conv synop gradient injected at the conv input.
    std::vector<double> syn_g(m.num_convs, 0.0);
    for (const LayerPlan& p : m.plan) {
        if (p.kind != Kind::Conv) continue;
        double dl_dops = m.weights.lambda_syn * 2.0 *
                         (loss.per_layer_ops[p.conv_index] - m.weights.syn_target) /
                         (m.weights.syn_target * m.weights.syn_target);
        syn_g[p.conv_index] = dl_dops * p.fanout;
    }

    m.backward(d_out, syn_g);
    return loss;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

TrainResult train(const NetworkConfig& fused, const std::vector<EventFrameSequence>& dataset,
                  const TrainConfig& cfg, const LossWeights& weights,
                  const TemporalFilter& filter) {
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");

    BpttModel model(fused, filter, weights, cfg);
    bool has_weights = false;
    for (const LayerSpec& layer : fused.layers) {
        if (const auto* conv = std::get_if<ConvSpec>(&layer)) {
            has_weights = conv->weights.size() == conv->weight_count();
            break;
        }
    }
    if (has_weights) {
        model.import_params(fused);
    } else {
        model.init_params(cfg.seed, cfg.init_scale);
    }

    const size_t n = model.param_count();
    std::vector<double> m1(n, 0.0), m2(n, 0.0);
    Rng rng(cfg.seed ^ 0x7261696eull);
    std::vector<size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    size_t cursor = order.size();  // trigger shuffle on first use

    TrainResult result;
    result.log.reserve(cfg.iterations);

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        double lr = cfg.lr * std::pow(cfg.lr_gamma, iter / cfg.lr_step);
        model.zero_grad();
        double sum_total = 0, sum_box = 0, sum_conf = 0, sum_syn = 0;
        for (int b = 0; b < cfg.batch; ++b) {
            if (cursor >= order.size()) {
                for (size_t i = order.size(); i > 1; --i) {
                    std::swap(order[i - 1], order[rng.below(i)]);
                }
                cursor = 0;
            }
            const EventFrameSequence& sample = dataset[order[cursor++]];
            SampleLoss loss = model.compute(sample, true);
            sum_total += loss.total;
            sum_box += loss.box;
            sum_conf += loss.conf;
            sum_syn += loss.syn;
        }
        double inv_b = 1.0 / cfg.batch;
        TrainLogRow row;
        row.iter = iter;
        row.loss_total = sum_total * inv_b;
        row.loss_box = sum_box * inv_b;
        row.loss_conf = sum_conf * inv_b;
        row.loss_syn = sum_syn * inv_b;
        row.lr = lr;
        result.log.push_back(row);
        if (!std::isfinite(row.loss_total)) {
            throw std::runtime_error("training diverged at iteration " + std::to_string(iter) +
                                     ": loss=" + std::to_string(row.loss_total));
        }

        auto params = model.params();
        auto grads = model.grads();
        double bc1 = 1.0 - std::pow(cfg.adam_beta1, iter + 1);
        double bc2 = 1.0 - std::pow(cfg.adam_beta2, iter + 1);
        for (size_t i = 0; i < n; ++i) {
            double g = grads[i] * inv_b;
            m1[i] = cfg.adam_beta1 * m1[i] + (1.0 - cfg.adam_beta1) * g;
            m2[i] = cfg.adam_beta2 * m2[i] + (1.0 - cfg.adam_beta2) * g * g;
            params[i] -= lr * (m1[i] / bc1) / (std::sqrt(m2[i] / bc2) + cfg.adam_eps);
        }
    }

    result.net = fused;
    model.export_params(result.net);
    return result;
}

void save_train_log(const std::vector<TrainLogRow>& log, const std::string& path) {
    std::ofstream file(path);
    if (!file.is_open()) throw DataError("cannot open file for writing: " + path);
    file << "iter,loss_total,loss_box,loss_conf,loss_syn,lr\n";
    for (const TrainLogRow& row : log) {
        file << row.iter << ',' << row.loss_total << ',' << row.loss_box << ',' << row.loss_conf
             << ',' << row.loss_syn << ',' << row.lr << '\n';
    }
}

EvalResult evaluate_recording(const NetworkConfig& net, const Recording& rec,
                              const SliceConfig& slice_cfg, const TemporalFilter& filter,
                              size_t anchor_begin, size_t anchor_end, size_t anchor_stride,
                              int warmup_bins, int jobs, double coord_scale) {
    if (anchor_end > rec.labels.size()) anchor_end = rec.labels.size();
    int warmup = warmup_bins >= 0 ? warmup_bins : filter.size();

    std::vector<size_t> anchors;
    for (size_t idx = anchor_begin; idx < anchor_end; idx += anchor_stride) {
        anchors.push_back(idx);
    }
    auto eval_anchor = [&](size_t idx, std::vector<double>& errors) {
        EventFrameSequence seq = slice(rec, slice_cfg, idx);
        SequenceOutput out = forward_sequence(net, seq);
        std::vector<double> filtered =
            apply_filter(filter, out.values, out.num_bins, out.channels);
        GridPrediction grid = decode_grid(filtered, out.num_bins);
        int start = std::max(warmup, seq.padded_bins);
        for (int t = start; t < seq.num_bins; ++t) {
            std::vector<BBox> kept = nms(grid_to_boxes(grid, t, coord_scale));
            if (kept.empty()) continue;
            errors.push_back(centroid_error(centroid(kept.front()), seq.labels[t]));
        }
    };

    std::vector<double> errors;
    if (jobs <= 1 || anchors.size() <= 1) {
        for (size_t idx : anchors) eval_anchor(idx, errors);
    } else {
        size_t n_threads = std::min<size_t>(jobs, anchors.size());
        std::vector<std::vector<double>> partial(n_threads);
        std::vector<std::thread> pool;
        for (size_t w = 0; w < n_threads; ++w) {
            pool.emplace_back([&, w] {
                for (size_t k = w; k < anchors.size(); k += n_threads) {
                    eval_anchor(anchors[k], partial[w]);
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& part : partial) errors.insert(errors.end(), part.begin(), part.end());
    }
    EvalResult r;
    r.bins = errors.size();
    if (errors.empty()) return r;
    double sum = std::accumulate(errors.begin(), errors.end(), 0.0);
    r.mean_px = sum / errors.size();
    double sq = 0;
    for (double e : errors) sq += (e - r.mean_px) * (e - r.mean_px);
    r.std_px = std::sqrt(sq / errors.size());
    return r;
}

}  // namespace retina
