#include "retina/slicer.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace retina {

namespace {

void validate_config(const SliceConfig& cfg) {
    if (cfg.num_bins < 1) throw std::invalid_argument("num_bins must be >= 1");
    if (cfg.height < 1 || cfg.width < 1) throw std::invalid_argument("bad frame size");
    if (cfg.mode == SliceConfig::Mode::Fixed && cfg.dt_us <= 0) {
        throw std::invalid_argument("fixed window dt must be > 0");
    }
    if (cfg.mode == SliceConfig::Mode::Dynamic && cfg.n_events < 1) {
        throw std::invalid_argument("dynamic pixel count must be >= 1");
    }
}

int64_t anchor_time(const Recording& rec, size_t anchor_label_index) {
    if (anchor_label_index >= rec.labels.size()) {
        throw std::invalid_argument("anchor label index out of range");
    }
    return rec.labels[anchor_label_index].t;
}

// Scratch counters reused across bins.
struct BinAccumulator {
    int height, width;
    std::vector<int> on, off;
    std::vector<int> touched;  // flat pixel ids with any event this bin

    BinAccumulator(int h, int w) : height(h), width(w), on(h * w, 0), off(h * w, 0) {}

    void reset() {
        for (int pix : touched) {
            on[pix] = 0;
            off[pix] = 0;
        }
        touched.clear();
    }

    // Returns true if this event touched a fresh pixel.
    bool add(const Event& e) {
        int pix = e.y * width + e.x;
        bool fresh = on[pix] == 0 && off[pix] == 0;
        if (fresh) touched.push_back(pix);
        if (e.polarity == Polarity::On) {
            ++on[pix];
        } else {
            ++off[pix];
        }
        return fresh;
    }

    void emit(EventFrameSequence& seq, int bin) const {
        for (int pix : touched) {
            auto [on_bit, off_bit] = resolve_polarity(on[pix], off[pix]);
            int y = pix / width;
            int x = pix % width;
            seq.at(bin, 1, y, x) = on_bit;
            seq.at(bin, 0, y, x) = off_bit;
        }
    }
};

void check_resolution(const Recording& rec, const SliceConfig& cfg) {
    if (rec.stream.width != cfg.width || rec.stream.height != cfg.height) {
        throw DataError("recording resolution " + std::to_string(rec.stream.width) + "x" +
                        std::to_string(rec.stream.height) + " does not match slice config " +
                        std::to_string(cfg.width) + "x" + std::to_string(cfg.height));
    }
}

// Fill labels and enforce strictly increasing bin end times. Dynamic bins can
// share a timestamp in a burst; collisions are clamped backwards by 1 us.
void finalize_times_and_labels(EventFrameSequence& seq, const Recording& rec) {
    for (int i = seq.num_bins - 2; i >= 0; --i) {
        if (seq.bin_end_times[i] >= seq.bin_end_times[i + 1]) {
            seq.bin_end_times[i] = seq.bin_end_times[i + 1] - 1;
        }
    }
    seq.labels.resize(seq.num_bins);
    for (int i = 0; i < seq.num_bins; ++i) {
        seq.labels[i] = interpolate_label(rec.labels, seq.bin_end_times[i]);
    }
}

}  // namespace

std::pair<uint8_t, uint8_t> resolve_polarity(int on_count, int off_count) {
    if (on_count < 0 || off_count < 0) throw std::invalid_argument("negative polarity count");
    if (on_count >= off_count) {
        return {static_cast<uint8_t>(on_count > 0 ? 1 : 0), 0};
    }
    return {0, 1};
}

PupilLabel interpolate_label(std::span<const PupilLabel> labels, int64_t t) {
    if (labels.empty()) throw std::invalid_argument("interpolate_label: no labels");
    if (t <= labels.front().t) return {t, labels.front().x, labels.front().y};
    if (t >= labels.back().t) return {t, labels.back().x, labels.back().y};
    auto it = std::lower_bound(labels.begin(), labels.end(), t,
                               [](const PupilLabel& l, int64_t v) { return l.t < v; });
    const PupilLabel& hi = *it;
    const PupilLabel& lo = *(it - 1);
    if (hi.t == lo.t) return {t, lo.x, lo.y};
    double w = static_cast<double>(t - lo.t) / static_cast<double>(hi.t - lo.t);
    return {t, lo.x + w * (hi.x - lo.x), lo.y + w * (hi.y - lo.y)};
}

EventFrameSequence slice_dynamic(const Recording& rec, const SliceConfig& cfg,
                                 size_t anchor_label_index) {
    validate_config(cfg);
    check_resolution(rec, cfg);
    const int64_t anchor = anchor_time(rec, anchor_label_index);
    const auto& events = rec.stream.events;

    EventFrameSequence seq;
    seq.num_bins = cfg.num_bins;
    seq.height = cfg.height;
    seq.width = cfg.width;
    seq.frames.assign(static_cast<size_t>(cfg.num_bins) * 2 * cfg.height * cfg.width, 0);
    seq.bin_end_times.assign(cfg.num_bins, 0);

    // First index past the anchor; windows consume backwards from here.
    size_t end = std::upper_bound(events.begin(), events.end(), anchor,
                                  [](int64_t v, const Event& e) { return v < e.t; }) -
                 events.begin();

    BinAccumulator acc(cfg.height, cfg.width);
    int64_t next_end_time = anchor;  // fallback for padded bins
    for (int bin = cfg.num_bins - 1; bin >= 0; --bin) {
        acc.reset();
        size_t j = end;
        int unique = 0;
        while (j > 0 && unique < cfg.n_events) {
            if (acc.add(events[j - 1])) ++unique;
            --j;
        }
        if (unique < cfg.n_events) {
            // Stream exhausted before reaching N distinct pixels: this and
            // every earlier bin stay all-zero with synthetic end times.
            for (int k = bin; k >= 0; --k) {
                seq.bin_end_times[k] = next_end_time - (bin - k + 1);
                ++seq.padded_bins;
            }
            end = 0;
            break;
        }
        seq.bin_end_times[bin] = events[end - 1].t;
        next_end_time = events[j].t;  // oldest consumed event bounds earlier bins
        acc.emit(seq, bin);
        end = j;
    }

    finalize_times_and_labels(seq, rec);
    return seq;
}

EventFrameSequence slice_fixed(const Recording& rec, const SliceConfig& cfg,
                               size_t anchor_label_index) {
    validate_config(cfg);
    check_resolution(rec, cfg);
    const int64_t anchor = anchor_time(rec, anchor_label_index);
    const auto& events = rec.stream.events;

    EventFrameSequence seq;
    seq.num_bins = cfg.num_bins;
    seq.height = cfg.height;
    seq.width = cfg.width;
    seq.frames.assign(static_cast<size_t>(cfg.num_bins) * 2 * cfg.height * cfg.width, 0);
    seq.bin_end_times.assign(cfg.num_bins, 0);

    size_t end = std::upper_bound(events.begin(), events.end(), anchor,
                                  [](int64_t v, const Event& e) { return v < e.t; }) -
                 events.begin();

    BinAccumulator acc(cfg.height, cfg.width);
    for (int bin = cfg.num_bins - 1; bin >= 0; --bin) {
        // Bin covers (t_end - dt, t_end], t_end = anchor - (T-1-bin)*dt.
        int64_t t_end = anchor - static_cast<int64_t>(cfg.num_bins - 1 - bin) * cfg.dt_us;
        int64_t t_start = t_end - cfg.dt_us;
        seq.bin_end_times[bin] = t_end;
        acc.reset();
        size_t j = end;
        while (j > 0 && events[j - 1].t > t_start) {
            acc.add(events[j - 1]);
            --j;
        }
        acc.emit(seq, bin);
        end = j;
    }

    finalize_times_and_labels(seq, rec);
    return seq;
}

EventFrameSequence slice(const Recording& rec, const SliceConfig& cfg,
                         size_t anchor_label_index) {
    return cfg.mode == SliceConfig::Mode::Dynamic ? slice_dynamic(rec, cfg, anchor_label_index)
                                                  : slice_fixed(rec, cfg, anchor_label_index);
}

void save_frames(const EventFrameSequence& seq, const std::string& path) {
    std::ofstream file(path, std::ios::binary);
    if (!file.is_open()) throw DataError("cannot open file for writing: " + path);
    nlohmann::json header;
    header["shape"] = {seq.num_bins, 2, seq.height, seq.width};
    header["bin_end_times"] = seq.bin_end_times;
    auto labels = nlohmann::json::array();
    for (const PupilLabel& l : seq.labels) labels.push_back({l.x, l.y});
    header["labels"] = labels;
    file << header.dump() << '\n';
    file.write(reinterpret_cast<const char*>(seq.frames.data()),
               static_cast<std::streamsize>(seq.frames.size()));
}

EventFrameSequence load_frames(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file.is_open()) throw DataError("cannot open frames file: " + path);
    std::string header_line;
    if (!std::getline(file, header_line)) throw DataError(path + ": missing header line");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": bad header: " + e.what());
    }
    auto shape = header.at("shape");
    if (shape.size() != 4 || shape[1].get<int>() != 2) {
        throw DataError(path + ": expected shape [T,2,H,W]");
    }
    EventFrameSequence seq;
    seq.num_bins = shape[0].get<int>();
    seq.height = shape[2].get<int>();
    seq.width = shape[3].get<int>();
    seq.bin_end_times = header.at("bin_end_times").get<std::vector<int64_t>>();
    for (size_t i = 0; i < header.at("labels").size(); ++i) {
        auto& l = header["labels"][i];
        int64_t t = i < seq.bin_end_times.size() ? seq.bin_end_times[i] : 0;
        seq.labels.push_back(PupilLabel{t, l[0].get<double>(), l[1].get<double>()});
    }
    size_t n = static_cast<size_t>(seq.num_bins) * 2 * seq.height * seq.width;
    seq.frames.resize(n);
    file.read(reinterpret_cast<char*>(seq.frames.data()), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(file.gcount()) != n) throw DataError(path + ": truncated tensor");
    for (uint8_t v : seq.frames) {
        if (v > 1) throw DataError(path + ": tensor entries must be 0 or 1");
    }
    return seq;
}

}  // namespace retina
