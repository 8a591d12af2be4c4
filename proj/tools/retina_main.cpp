#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "retina/events.hpp"
#include "retina/hw_mapper.hpp"
#include "retina/learning.hpp"
#include "retina/readout.hpp"
#include "retina/slicer.hpp"
#include "retina/snn.hpp"
#include "retina/synth.hpp"

namespace {

using namespace retina;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInfeasible = 3;

struct PipelineOpts {
    std::string events_path;
    std::string labels_path;
    std::string format{"csv"};
    int width{640};
    int height{480};
};

struct SliceOpts {
    std::string mode{"dynamic"};
    int n_events{300};
    int64_t dt_us{1000};
    int num_bins{64};
    int frame{64};
};

struct FilterOpts {
    double tau_mem{5.0};
    double tau_syn{5.0};
    int size{20};
    double coord_scale{2.0};  // pixels per regressed unit; must match training
};

void add_pipeline_opts(CLI::App* cmd, PipelineOpts& o, bool labels_required) {
    cmd->add_option("--events", o.events_path, "events file (csv or packed binary)")
        ->required();
    auto* lab = cmd->add_option("--labels", o.labels_path, "labels csv");
    if (labels_required) lab->required();
    cmd->add_option("--format", o.format, "events file format")
        ->check(CLI::IsMember({"csv", "bin"}))
        ->capture_default_str();
    cmd->add_option("--width", o.width, "declared sensor width (csv)")->capture_default_str();
    cmd->add_option("--height", o.height, "declared sensor height (csv)")->capture_default_str();
}

void add_slice_opts(CLI::App* cmd, SliceOpts& o) {
    cmd->add_option("--mode", o.mode, "slicing mode")
        ->check(CLI::IsMember({"fixed", "dynamic"}))
        ->capture_default_str();
    cmd->add_option("--n", o.n_events, "dynamic mode: distinct pixels per bin")
        ->capture_default_str();
    cmd->add_option("--dt", o.dt_us, "fixed mode: window length in us")->capture_default_str();
    cmd->add_option("--bins", o.num_bins, "time bins per sequence")->capture_default_str();
    cmd->add_option("--frame", o.frame, "frame resolution fed to the network")
        ->capture_default_str();
}

void add_filter_opts(CLI::App* cmd, FilterOpts& o) {
    cmd->add_option("--tau-mem", o.tau_mem, "membrane kernel time constant (bins)")
        ->capture_default_str();
    cmd->add_option("--tau-syn", o.tau_syn, "synaptic kernel time constant (bins)")
        ->capture_default_str();
    cmd->add_option("--filter-size", o.size, "temporal filter length (bins)")
        ->capture_default_str();
    cmd->add_option("--coord-scale", o.coord_scale,
                    "pixels per regressed coordinate unit (training and decode)")
        ->capture_default_str();
}

SliceConfig make_slice_config(const SliceOpts& o) {
    SliceConfig cfg;
    cfg.mode = o.mode == "fixed" ? SliceConfig::Mode::Fixed : SliceConfig::Mode::Dynamic;
    cfg.dt_us = o.dt_us;
    cfg.n_events = o.n_events;
    cfg.num_bins = o.num_bins;
    cfg.height = o.frame;
    cfg.width = o.frame;
    return cfg;
}

// Loads a recording and brings it to the network resolution: a 640x480
// sensor stream goes through the square crop and sum pooling; a stream
// already at the target resolution passes through.
Recording load_pipeline(const PipelineOpts& p, int frame) {
    Recording rec;
    rec.stream = load_events(p.events_path,
                             p.format == "bin" ? EventFormat::Bin : EventFormat::Csv, p.width,
                             p.height);
    if (!p.labels_path.empty()) rec.labels = load_labels_csv(p.labels_path);
    if (rec.stream.width == frame && rec.stream.height == frame) return rec;
    if (rec.stream.width == 640 && rec.stream.height == 480) {
        Recording square = sensor_to_square(rec);
        if (512 % frame != 0) {
            throw DataError("frame size " + std::to_string(frame) + " does not divide 512");
        }
        return sum_pool_recording(square, 512 / frame);
    }
    throw DataError("recording resolution " + std::to_string(rec.stream.width) + "x" +
                    std::to_string(rec.stream.height) + " is neither 640x480 nor " +
                    std::to_string(frame) + "x" + std::to_string(frame));
}

NetworkConfig load_net(const std::string& net_path, const std::string& weights_path,
                       const std::string& arch) {
    NetworkConfig net;
    if (!net_path.empty()) {
        net = load_network_json(net_path);
    } else if (arch == "retina") {
        net = NetworkConfig::retina_default();
    } else {
        net = NetworkConfig::desk_default();
    }
    if (!weights_path.empty()) load_weights(net, weights_path);
    return net;
}

void print_stats_row(const char* name, const Stats& s) {
    std::printf("%-24s %10.1f %10.1f %10.1f %10.0f %10.0f\n", name, s.median, s.mean, s.stddev,
                s.min, s.max);
}

int run_map(const std::string& net_path) {
    NetworkConfig net = net_path.empty() ? NetworkConfig::retina_default()
                                         : load_network_json(net_path);
    auto report = hw::validate_against_table(net);
    auto table = hw::paper_table();

    std::printf("layer  kernel(exact)  kernel(pow2)  neuron(runtime)  neuron(nominal)  verdict\n");
    for (const auto& row : report) {
        std::printf("%5d  %8.2f Ki   %8.2f Ki   %9.2f Ki     %9.2f Ki     %s\n", row.layer_id,
                    row.kernel_exact / 1024.0, row.kernel_rounded / 1024.0,
                    row.neuron_runtime / 1024.0, row.neuron_nominal / 1024.0,
                    hw::to_string(row.verdict).c_str());
    }

    std::printf("\nlayer  printed footprint (swapped)  compatible cores\n");
    std::vector<std::set<int>> compat;
    for (size_t i = 0; i < report.size(); ++i) {
        compat.push_back(report[i].cores_from_printed);
        std::printf("%5d  kernel %6.2f Ki neuron %6.2f Ki  {", table[i].layer_id,
                    table[i].printed_nm_ki, table[i].printed_kmt_ki);
        bool first = true;
        for (int c : report[i].cores_from_printed) {
            std::printf("%s%d", first ? "" : ",", c);
            first = false;
        }
        std::printf("}\n");
    }

    hw::Assignment assignment = hw::assign_layers(compat);
    if (!assignment.feasible) {
        std::printf("\nno feasible layer-to-core assignment; blocked layer set:");
        for (int l : assignment.infeasible_layers) std::printf(" %d", l + 1);
        std::printf("\n");
        return kExitInfeasible;
    }
    std::printf("\nassignment:");
    for (size_t l = 0; l < assignment.core_of_layer.size(); ++l) {
        std::printf(" L%zu->core%d", l + 1, assignment.core_of_layer[l]);
    }
    std::printf("\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Event-based pupil tracking pipeline: spiking CNN, dynamic event windows, "
                 "temporal weighted-sum readout, and a nine-core memory-mapping validator"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value config file; flags override config values");
    app.get_config_formatter_base()->comment('#');

    int exit_code = 0;

    // ---- gen ----
    auto* gen = app.add_subcommand("gen", "generate a synthetic recording (events+labels csv)");
    struct {
        std::string out_events{"events.csv"}, out_labels{"labels.csv"};
        double duration_ms{2000};
        std::string trajectory{"circular"};
        double speed{1.6}, orbit{96}, pupil_radius{44}, ring_rate{0.5}, noise_rate{30};
        int64_t label_period_ms{30};
        uint64_t seed{7};
        bool golden{false};
    } g;
    gen->add_option("--out-events", g.out_events, "output events csv")->capture_default_str();
    gen->add_option("--out-labels", g.out_labels, "output labels csv")->capture_default_str();
    gen->add_option("--duration-ms", g.duration_ms)->capture_default_str();
    gen->add_option("--trajectory", g.trajectory)
        ->check(CLI::IsMember({"circular", "walk"}))
        ->capture_default_str();
    gen->add_option("--speed", g.speed, "rad/s (circular) or px/ms scale (walk)")
        ->capture_default_str();
    gen->add_option("--orbit-radius", g.orbit)->capture_default_str();
    gen->add_option("--pupil-radius", g.pupil_radius)->capture_default_str();
    gen->add_option("--ring-rate", g.ring_rate, "events per contour pixel per ms")
        ->capture_default_str();
    gen->add_option("--noise-rate", g.noise_rate, "background events per ms")
        ->capture_default_str();
    gen->add_option("--label-period-ms", g.label_period_ms)->capture_default_str();
    gen->add_option("--seed", g.seed)->capture_default_str();
    gen->add_flag("--golden", g.golden, "use the fixed-seed golden configuration");
    gen->callback([&] {
        synth::SynthConfig cfg;
        if (g.golden) {
            cfg = synth::golden_config();
        } else {
            cfg.duration_us = static_cast<int64_t>(g.duration_ms * 1000);
            cfg.trajectory = g.trajectory == "walk" ? synth::Trajectory::RandomWalk
                                                    : synth::Trajectory::Circular;
            cfg.speed = g.speed;
            cfg.orbit_radius = g.orbit;
            cfg.pupil_radius = g.pupil_radius;
            cfg.event_rate_on_ring = g.ring_rate;
            cfg.noise_rate = g.noise_rate;
            cfg.label_period_us = g.label_period_ms * 1000;
            cfg.rng_seed = g.seed;
        }
        Recording rec = synth::generate(cfg);
        save_events_csv(rec.stream, g.out_events);
        save_labels_csv(rec.labels, g.out_labels);
        std::printf("wrote %zu events to %s, %zu labels to %s\n", rec.stream.size(),
                    g.out_events.c_str(), rec.labels.size(), g.out_labels.c_str());
    });

    // ---- stats ----
    auto* stats_cmd = app.add_subcommand("stats", "sampling-time and event-count statistics");
    static PipelineOpts stats_pipe;
    int64_t stats_label_period_ms = 30;
    add_pipeline_opts(stats_cmd, stats_pipe, false);
    stats_cmd->add_option("--label-period-ms", stats_label_period_ms)->capture_default_str();
    stats_cmd->callback([&] {
        EventStream stream = load_events(
            stats_pipe.events_path,
            stats_pipe.format == "bin" ? EventFormat::Bin : EventFormat::Csv, stats_pipe.width,
            stats_pipe.height);
        StatsReport report = stream_stats(stream, stats_label_period_ms * 1000);
        std::printf("%-24s %10s %10s %10s %10s %10s\n", "", "Median", "Mean", "Std", "Min",
                    "Max");
        print_stats_row("Sampling Time [us]", report.sampling_time);
        print_stats_row("Events / Ts", report.events_per_timestamp);
        if (report.has_label_period) {
            print_stats_row("Events / label period", report.events_per_label_period);
        }
    });

    // ---- slice ----
    auto* slice_cmd = app.add_subcommand("slice", "slice a recording into an event-frame tensor");
    static PipelineOpts slice_pipe;
    static SliceOpts slice_opts;
    std::string slice_out{"frames.efs"};
    int64_t slice_anchor = -1;
    add_pipeline_opts(slice_cmd, slice_pipe, true);
    add_slice_opts(slice_cmd, slice_opts);
    slice_cmd->add_option("--anchor", slice_anchor, "anchor label index (default: last)")
        ->capture_default_str();
    slice_cmd->add_option("--out", slice_out, "output file")->capture_default_str();
    slice_cmd->callback([&] {
        Recording rec = load_pipeline(slice_pipe, slice_opts.frame);
        if (rec.labels.empty()) throw DataError("slicing requires labels");
        size_t anchor = slice_anchor < 0 ? rec.labels.size() - 1
                                         : static_cast<size_t>(slice_anchor);
        EventFrameSequence seq = slice(rec, make_slice_config(slice_opts), anchor);
        save_frames(seq, slice_out);
        std::printf("wrote %dx2x%dx%d tensor to %s (%d padded bins)\n", seq.num_bins,
                    seq.height, seq.width, slice_out.c_str(), seq.padded_bins);
    });

    // ---- infer ----
    auto* infer_cmd = app.add_subcommand("infer", "run the network over one sliced sequence");
    static PipelineOpts infer_pipe;
    static SliceOpts infer_slice;
    static FilterOpts infer_filter;
    struct {
        std::string net, weights, seq, out{"predictions.csv"};
        int64_t anchor{-1};
        std::string arch{"desk"};
    } inf;
    infer_cmd->add_option("--net", inf.net, "network description json");
    infer_cmd->add_option("--weights", inf.weights, "weights file")->required();
    infer_cmd->add_option("--arch", inf.arch, "architecture when --net is absent")
        ->check(CLI::IsMember({"desk", "retina"}))
        ->capture_default_str();
    infer_cmd->add_option("--seq", inf.seq, "pre-sliced .efs input (skips slicing)");
    add_pipeline_opts(infer_cmd, infer_pipe, false);
    add_slice_opts(infer_cmd, infer_slice);
    add_filter_opts(infer_cmd, infer_filter);
    infer_cmd->add_option("--anchor", inf.anchor)->capture_default_str();
    infer_cmd->add_option("--out", inf.out, "prediction csv")->capture_default_str();
    infer_cmd->callback([&] {
        NetworkConfig net = load_net(inf.net, inf.weights, inf.arch);
        EventFrameSequence seq;
        if (!inf.seq.empty()) {
            seq = load_frames(inf.seq);
        } else {
            Recording rec = load_pipeline(infer_pipe, infer_slice.frame);
            if (rec.labels.empty()) throw DataError("slicing requires labels");
            size_t anchor = inf.anchor < 0 ? rec.labels.size() - 1
                                           : static_cast<size_t>(inf.anchor);
            seq = slice(rec, make_slice_config(infer_slice), anchor);
        }
        SequenceOutput out = forward_sequence(net, seq);
        TemporalFilter filter =
            build_filter(infer_filter.tau_mem, infer_filter.tau_syn, infer_filter.size);
        std::vector<double> filtered =
            apply_filter(filter, out.values, out.num_bins, out.channels);
        GridPrediction grid = decode_grid(filtered, out.num_bins);

        std::ofstream file(inf.out);
        if (!file.is_open()) throw DataError("cannot open file for writing: " + inf.out);
        file << "bin,x_min,y_min,x_max,y_max,conf,cx,cy\n";
        for (int t = 0; t < out.num_bins; ++t) {
            auto kept = nms(grid_to_boxes(grid, t, infer_filter.coord_scale));
            if (kept.empty()) continue;
            const BBox& best = kept.front();
            auto c = centroid(best);
            file << t << ',' << best.x_min << ',' << best.y_min << ',' << best.x_max << ','
                 << best.y_max << ',' << best.confidence << ',' << c[0] << ',' << c[1] << '\n';
        }
        std::printf("wrote predictions to %s\n", inf.out.c_str());
        auto rates = firing_rate_profile(out.trace);
        std::printf("firing rates:");
        for (size_t i = 0; i < rates.size(); ++i) std::printf(" if%zu=%.4f", i, rates[i]);
        std::printf("\n");
    });

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "desk-scale training on a recording");
    static PipelineOpts train_pipe;
    static SliceOpts train_slice;
    static FilterOpts train_filter;
    struct {
        std::string arch{"desk"};
        std::string net, weights;
        std::string out_dir{"run"};
        TrainConfig cfg;
        double holdout{0.25};
        int anchor_stride{1};
    } tr;
    add_pipeline_opts(train_cmd, train_pipe, true);
    add_slice_opts(train_cmd, train_slice);
    add_filter_opts(train_cmd, train_filter);
    train_cmd->add_option("--arch", tr.arch)->check(CLI::IsMember({"desk", "retina"}))
        ->capture_default_str();
    train_cmd->add_option("--net", tr.net, "network description json (overrides --arch)");
    train_cmd->add_option("--weights", tr.weights, "warm-start weights");
    train_cmd->add_option("--out-dir", tr.out_dir)->capture_default_str();
    train_cmd->add_option("--iterations", tr.cfg.iterations)->capture_default_str();
    train_cmd->add_option("--batch", tr.cfg.batch)->capture_default_str();
    train_cmd->add_option("--seq", tr.cfg.sequence_length)->capture_default_str();
    train_cmd->add_option("--lr", tr.cfg.lr)->capture_default_str();
    train_cmd->add_option("--gamma", tr.cfg.lr_gamma)->capture_default_str();
    train_cmd->add_option("--lr-step", tr.cfg.lr_step)->capture_default_str();
    train_cmd->add_option("--seed", tr.cfg.seed)->capture_default_str();
    train_cmd->add_option("--init-scale", tr.cfg.init_scale)->capture_default_str();
    train_cmd->add_option("--holdout", tr.holdout, "fraction of anchors held out for validation")
        ->capture_default_str();
    train_cmd->add_option("--anchor-stride", tr.anchor_stride)->capture_default_str();
    train_cmd->callback([&] {
        Recording rec = load_pipeline(train_pipe, train_slice.frame);
        if (rec.labels.size() < 4) throw DataError("training needs at least 4 labels");
        NetworkConfig net = load_net(tr.net, tr.weights, tr.arch);
        net = fuse_network(net);

        SliceConfig scfg = make_slice_config(train_slice);
        scfg.num_bins = tr.cfg.sequence_length;
        size_t n_anchors = rec.labels.size();
        size_t split = n_anchors - static_cast<size_t>(tr.holdout * n_anchors);
        std::vector<EventFrameSequence> dataset;
        for (size_t a = 1; a < split; a += tr.anchor_stride) {
            dataset.push_back(slice(rec, scfg, a));
        }
        std::printf("training on %zu sequences (%zu anchors held out)\n", dataset.size(),
                    n_anchors - split);

        TemporalFilter filter =
            build_filter(train_filter.tau_mem, train_filter.tau_syn, train_filter.size);
        tr.cfg.coord_scale = train_filter.coord_scale;
        LossWeights weights;
        TrainResult result = train(net, dataset, tr.cfg, weights, filter);

        std::filesystem::create_directories(tr.out_dir);
        save_network_json(result.net, tr.out_dir + "/net.json");
        save_weights(result.net, tr.out_dir + "/weights.bin");
        save_train_log(result.log, tr.out_dir + "/train_log.csv");

        EvalResult val = evaluate_recording(result.net, rec, scfg, filter, split, n_anchors, 1,
                                            -1, 1, tr.cfg.coord_scale);
        std::printf("final loss %.4f; validation centroid error %.2f px (std %.2f, %zu bins)\n",
                    result.log.back().loss_total, val.mean_px, val.std_px, val.bins);
    });

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "centroid error of a trained network");
    static PipelineOpts eval_pipe;
    static SliceOpts eval_slice;
    static FilterOpts eval_filter;
    struct {
        std::string net, weights;
        std::string arch{"desk"};
        size_t anchor_begin{1};
        int64_t anchor_end{-1};
        int anchor_stride{1};
        int jobs{1};
    } ev;
    eval_cmd->add_option("--net", ev.net);
    eval_cmd->add_option("--weights", ev.weights)->required();
    eval_cmd->add_option("--arch", ev.arch)->check(CLI::IsMember({"desk", "retina"}))
        ->capture_default_str();
    add_pipeline_opts(eval_cmd, eval_pipe, true);
    add_slice_opts(eval_cmd, eval_slice);
    add_filter_opts(eval_cmd, eval_filter);
    eval_cmd->add_option("--anchor-begin", ev.anchor_begin)->capture_default_str();
    eval_cmd->add_option("--anchor-end", ev.anchor_end, "exclusive; default all labels")
        ->capture_default_str();
    eval_cmd->add_option("--anchor-stride", ev.anchor_stride)->capture_default_str();
    eval_cmd->add_option("--jobs", ev.jobs, "parallelize over independent slices")
        ->capture_default_str();
    eval_cmd->callback([&] {
        Recording rec = load_pipeline(eval_pipe, eval_slice.frame);
        NetworkConfig net = load_net(ev.net, ev.weights, ev.arch);
        TemporalFilter filter =
            build_filter(eval_filter.tau_mem, eval_filter.tau_syn, eval_filter.size);
        size_t end = ev.anchor_end < 0 ? rec.labels.size() : static_cast<size_t>(ev.anchor_end);
        EvalResult r = evaluate_recording(net, rec, make_slice_config(eval_slice), filter,
                                          ev.anchor_begin, end, ev.anchor_stride, -1, ev.jobs,
                                          eval_filter.coord_scale);
        std::printf("centroid error: mean %.2f px, std %.2f px over %zu bins\n", r.mean_px,
                    r.std_px, r.bins);
    });

    // ---- profile ----
    auto* prof_cmd = app.add_subcommand(
        "profile", "per-layer firing rates, fixed vs dynamic slicing");
    static PipelineOpts prof_pipe;
    static FilterOpts prof_filter;
    struct {
        std::string net, weights;
        std::string arch{"desk"};
        int64_t dt_us{1000};
        int num_bins{64};
        int frame{64};
        int anchors{8};
    } pf;
    prof_cmd->add_option("--net", pf.net);
    prof_cmd->add_option("--weights", pf.weights)->required();
    prof_cmd->add_option("--arch", pf.arch)->check(CLI::IsMember({"desk", "retina"}))
        ->capture_default_str();
    add_pipeline_opts(prof_cmd, prof_pipe, true);
    prof_cmd->add_option("--dt", pf.dt_us, "fixed window length (us)")->capture_default_str();
    prof_cmd->add_option("--bins", pf.num_bins)->capture_default_str();
    prof_cmd->add_option("--frame", pf.frame)->capture_default_str();
    prof_cmd->add_option("--anchors", pf.anchors, "number of anchors to average over")
        ->capture_default_str();
    prof_cmd->callback([&] {
        Recording rec = load_pipeline(prof_pipe, pf.frame);
        NetworkConfig net = load_net(pf.net, pf.weights, pf.arch);

        SliceConfig fixed_cfg;
        fixed_cfg.mode = SliceConfig::Mode::Fixed;
        fixed_cfg.dt_us = pf.dt_us;
        fixed_cfg.num_bins = pf.num_bins;
        fixed_cfg.height = fixed_cfg.width = pf.frame;

        size_t stride = std::max<size_t>(1, rec.labels.size() / (pf.anchors + 1));
        std::vector<size_t> anchors;
        for (size_t a = stride; a < rec.labels.size() && anchors.size() < size_t(pf.anchors);
             a += stride) {
            anchors.push_back(a);
        }
        if (anchors.empty()) throw DataError("not enough labels to profile");

        // Match the dynamic pixel budget to the fixed window's mean count.
        double mean_active = 0;
        size_t n_bins = 0;
        std::vector<EventFrameSequence> fixed_seqs;
        for (size_t a : anchors) {
            EventFrameSequence seq = slice(rec, fixed_cfg, a);
            for (int t = 0; t < seq.num_bins; ++t) {
                long count = 0;
                for (int c = 0; c < 2; ++c)
                    for (int y = 0; y < seq.height; ++y)
                        for (int x = 0; x < seq.width; ++x) count += seq.at(t, c, y, x);
                mean_active += static_cast<double>(count);
                ++n_bins;
            }
            fixed_seqs.push_back(std::move(seq));
        }
        mean_active /= static_cast<double>(n_bins);
        SliceConfig dyn_cfg = fixed_cfg;
        dyn_cfg.mode = SliceConfig::Mode::Dynamic;
        dyn_cfg.n_events = std::max(1, static_cast<int>(std::lround(mean_active)));
        std::printf("fixed dt=%lldus mean active pixels %.1f -> dynamic N=%d\n",
                    static_cast<long long>(pf.dt_us), mean_active, dyn_cfg.n_events);

        auto profile_over = [&](const std::vector<EventFrameSequence>& seqs) {
            std::vector<double> acc;
            for (const auto& seq : seqs) {
                auto rates = firing_rate_profile(forward_sequence(net, seq).trace);
                if (acc.empty()) acc.assign(rates.size(), 0.0);
                for (size_t i = 0; i < rates.size(); ++i) acc[i] += rates[i];
            }
            for (double& r : acc) r /= static_cast<double>(seqs.size());
            return acc;
        };
        std::vector<EventFrameSequence> dyn_seqs;
        for (size_t a : anchors) dyn_seqs.push_back(slice(rec, dyn_cfg, a));

        auto fixed_rates = profile_over(fixed_seqs);
        auto dyn_rates = profile_over(dyn_seqs);
        std::printf("%-8s %12s %12s\n", "layer", "fixed", "dynamic");
        for (size_t i = 0; i < fixed_rates.size(); ++i) {
            std::printf("if%-6zu %12.4f %12.4f\n", i, fixed_rates[i], dyn_rates[i]);
        }
    });

    // ---- map ----
    auto* map_cmd = app.add_subcommand(
        "map", "per-layer memory footprints, table validation, core assignment");
    std::string map_net;
    map_cmd->add_option("--net", map_net, "network description json (default: built-in)");
    map_cmd->callback([&] { exit_code = run_map(map_net); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    } catch (const retina::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return exit_code;
}
