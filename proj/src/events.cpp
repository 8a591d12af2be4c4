#include "retina/events.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace retina {

namespace {

void check_event_bounds(int64_t t, long x, long y, long p, int width, int height,
                        const std::string& path, size_t line_no) {
    std::ostringstream where;
    where << path << ":" << line_no;
    if (t < 0) {
        throw DataError(where.str() + ": negative timestamp");
    }
    if (x < 0 || x >= width) {
        throw DataError(where.str() + ": x=" + std::to_string(x) +
                        " out of range [0," + std::to_string(width) + ")");
    }
    if (y < 0 || y >= height) {
        throw DataError(where.str() + ": y=" + std::to_string(y) +
                        " out of range [0," + std::to_string(height) + ")");
    }
    if (p != 0 && p != 1) {
        throw DataError(where.str() + ": polarity must be 0 or 1, got " + std::to_string(p));
    }
}

void sort_if_needed(EventStream& stream) {
    if (!std::is_sorted(stream.events.begin(), stream.events.end(),
                        [](const Event& a, const Event& b) { return a.t < b.t; })) {
        std::stable_sort(stream.events.begin(), stream.events.end(),
                         [](const Event& a, const Event& b) { return a.t < b.t; });
    }
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string token;
    std::istringstream ss(line);
    while (std::getline(ss, token, ',')) {
        out.push_back(token);
    }
    return out;
}

int64_t parse_i64(const std::string& s, const std::string& ctx) {
    try {
        size_t pos = 0;
        int64_t v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing garbage");
        return v;
    } catch (const std::exception&) {
        throw DataError(ctx + ": non-numeric field '" + s + "'");
    }
}

double parse_f64(const std::string& s, const std::string& ctx) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing garbage");
        return v;
    } catch (const std::exception&) {
        throw DataError(ctx + ": non-numeric field '" + s + "'");
    }
}

}  // namespace

EventStream load_events(const std::string& path, EventFormat format, int width, int height) {
    switch (format) {
        case EventFormat::Csv: return load_events_csv(path, width, height);
        case EventFormat::Bin: return load_events_bin(path);
    }
    throw std::invalid_argument("unknown event format");
}

void save_events(const EventStream& stream, const std::string& path, EventFormat format) {
    switch (format) {
        case EventFormat::Csv: save_events_csv(stream, path); return;
        case EventFormat::Bin: save_events_bin(stream, path); return;
    }
    throw std::invalid_argument("unknown event format");
}

EventStream load_events_csv(const std::string& path, int width, int height) {
    std::ifstream file(path);
    if (!file.is_open()) {
        throw DataError("cannot open events file: " + path);
    }
    EventStream stream;
    stream.width = width;
    stream.height = height;

    std::string line;
    size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(file, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header_seen) {
            header_seen = true;
            if (line.rfind("t_us", 0) == 0) continue;  // header row is optional
        }
        auto fields = split_fields(line);
        if (fields.size() != 4) {
            throw DataError(path + ":" + std::to_string(line_no) + ": expected 4 fields, got " +
                            std::to_string(fields.size()));
        }
        std::string ctx = path + ":" + std::to_string(line_no);
        int64_t t = parse_i64(fields[0], ctx);
        int64_t x = parse_i64(fields[1], ctx);
        int64_t y = parse_i64(fields[2], ctx);
        int64_t p = parse_i64(fields[3], ctx);
        check_event_bounds(t, x, y, p, width, height, path, line_no);
        stream.events.push_back(Event{t, static_cast<int16_t>(x), static_cast<int16_t>(y),
                                      p == 1 ? Polarity::On : Polarity::Off});
    }
    sort_if_needed(stream);
    return stream;
}

void save_events_csv(const EventStream& stream, const std::string& path) {
    std::ofstream file(path);
    if (!file.is_open()) {
        throw DataError("cannot open file for writing: " + path);
    }
    file << "t_us,x,y,p\n";
    for (const Event& e : stream.events) {
        file << e.t << ',' << e.x << ',' << e.y << ',' << static_cast<int>(e.polarity) << '\n';
    }
}

// Packed record: u64 t_us, u16 x, u16 y, u8 p, little-endian, 13 bytes.
EventStream load_events_bin(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file.is_open()) {
        throw DataError("cannot open events file: " + path);
    }
    std::string header_line;
    if (!std::getline(file, header_line)) {
        throw DataError(path + ": missing binary header line");
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": bad binary header: " + e.what());
    }
    EventStream stream;
    stream.width = header.at("width").get<int>();
    stream.height = header.at("height").get<int>();
    const uint64_t count = header.at("count").get<uint64_t>();
    stream.events.reserve(count);

    unsigned char buf[13];
    for (uint64_t i = 0; i < count; ++i) {
        file.read(reinterpret_cast<char*>(buf), sizeof(buf));
        if (static_cast<size_t>(file.gcount()) != sizeof(buf)) {
            throw DataError(path + ": truncated record " + std::to_string(i));
        }
        uint64_t t = 0;
        for (int b = 0; b < 8; ++b) t |= static_cast<uint64_t>(buf[b]) << (8 * b);
        uint16_t x = static_cast<uint16_t>(buf[8] | (buf[9] << 8));
        uint16_t y = static_cast<uint16_t>(buf[10] | (buf[11] << 8));
        uint8_t p = buf[12];
        check_event_bounds(static_cast<int64_t>(t), x, y, p, stream.width, stream.height, path, i);
        stream.events.push_back(Event{static_cast<int64_t>(t), static_cast<int16_t>(x),
                                      static_cast<int16_t>(y),
                                      p == 1 ? Polarity::On : Polarity::Off});
    }
    sort_if_needed(stream);
    return stream;
}

void save_events_bin(const EventStream& stream, const std::string& path) {
    std::ofstream file(path, std::ios::binary);
    if (!file.is_open()) {
        throw DataError("cannot open file for writing: " + path);
    }
    nlohmann::json header;
    header["width"] = stream.width;
    header["height"] = stream.height;
    header["count"] = stream.events.size();
    file << header.dump() << '\n';

    unsigned char buf[13];
    for (const Event& e : stream.events) {
        uint64_t t = static_cast<uint64_t>(e.t);
        for (int b = 0; b < 8; ++b) buf[b] = static_cast<unsigned char>((t >> (8 * b)) & 0xff);
        buf[8] = static_cast<unsigned char>(e.x & 0xff);
        buf[9] = static_cast<unsigned char>((e.x >> 8) & 0xff);
        buf[10] = static_cast<unsigned char>(e.y & 0xff);
        buf[11] = static_cast<unsigned char>((e.y >> 8) & 0xff);
        buf[12] = static_cast<unsigned char>(e.polarity);
        file.write(reinterpret_cast<const char*>(buf), sizeof(buf));
    }
}

std::vector<PupilLabel> load_labels_csv(const std::string& path) {
    std::ifstream file(path);
    if (!file.is_open()) {
        throw DataError("cannot open labels file: " + path);
    }
    std::vector<PupilLabel> labels;
    std::string line;
    size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(file, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header_seen) {
            header_seen = true;
            if (line.rfind("t_us", 0) == 0) continue;
        }
        auto fields = split_fields(line);
        if (fields.size() != 3) {
            throw DataError(path + ":" + std::to_string(line_no) + ": expected 3 fields, got " +
                            std::to_string(fields.size()));
        }
        std::string ctx = path + ":" + std::to_string(line_no);
        labels.push_back(PupilLabel{parse_i64(fields[0], ctx), parse_f64(fields[1], ctx),
                                    parse_f64(fields[2], ctx)});
    }
    if (!std::is_sorted(labels.begin(), labels.end(),
                        [](const PupilLabel& a, const PupilLabel& b) { return a.t < b.t; })) {
        throw DataError(path + ": labels not sorted by t");
    }
    return labels;
}

void save_labels_csv(const std::vector<PupilLabel>& labels, const std::string& path) {
    std::ofstream file(path);
    if (!file.is_open()) {
        throw DataError("cannot open file for writing: " + path);
    }
    file << "t_us,x,y\n";
    file.precision(6);
    file << std::fixed;
    for (const PupilLabel& l : labels) {
        file << l.t << ',' << l.x << ',' << l.y << '\n';
    }
}

Recording sensor_to_square(const Recording& rec) {
    constexpr int kXMin = 96;
    constexpr int kXMax = 607;  // inclusive; keeps exactly 512 columns
    constexpr int kYShift = 16;
    constexpr int kOut = 512;

    if (rec.stream.width != 640 || rec.stream.height != 480) {
        throw DataError("sensor_to_square expects a 640x480 stream, got " +
                        std::to_string(rec.stream.width) + "x" +
                        std::to_string(rec.stream.height));
    }
    Recording out;
    out.stream.width = kOut;
    out.stream.height = kOut;
    out.stream.events.reserve(rec.stream.events.size());
    for (const Event& e : rec.stream.events) {
        if (e.x < kXMin || e.x > kXMax) continue;
        out.stream.events.push_back(Event{e.t, static_cast<int16_t>(e.x - kXMin),
                                          static_cast<int16_t>(e.y + kYShift), e.polarity});
    }
    out.labels.reserve(rec.labels.size());
    for (const PupilLabel& l : rec.labels) {
        double x = std::clamp(l.x - kXMin, 0.0, std::nextafter(double(kOut), 0.0));
        double y = std::clamp(l.y + kYShift, 0.0, std::nextafter(double(kOut), 0.0));
        out.labels.push_back(PupilLabel{l.t, x, y});
    }
    return out;
}

EventStream sum_pool_events(const EventStream& stream, int factor) {
    if (factor <= 0) {
        throw std::invalid_argument("pool factor must be positive");
    }
    if (stream.width % factor != 0 || stream.height % factor != 0) {
        throw DataError("pool factor " + std::to_string(factor) + " does not divide " +
                        std::to_string(stream.width) + "x" + std::to_string(stream.height));
    }
    EventStream out;
    out.width = stream.width / factor;
    out.height = stream.height / factor;
    out.events.reserve(stream.events.size());
    for (const Event& e : stream.events) {
        out.events.push_back(Event{e.t, static_cast<int16_t>(e.x / factor),
                                   static_cast<int16_t>(e.y / factor), e.polarity});
    }
    return out;
}

std::vector<PupilLabel> sum_pool_labels(const std::vector<PupilLabel>& labels, int factor) {
    std::vector<PupilLabel> out;
    out.reserve(labels.size());
    for (const PupilLabel& l : labels) {
        out.push_back(PupilLabel{l.t, l.x / factor, l.y / factor});
    }
    return out;
}

Recording sum_pool_recording(const Recording& rec, int factor) {
    return Recording{sum_pool_events(rec.stream, factor), sum_pool_labels(rec.labels, factor)};
}

Stats compute_stats(const std::vector<double>& values) {
    Stats s;
    if (values.empty()) return s;
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    size_t n = sorted.size();
    s.median = (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    double sum = 0.0;
    for (double v : sorted) sum += v;
    s.mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (double v : sorted) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(n));  // population std
    s.min = sorted.front();
    s.max = sorted.back();
    return s;
}

StatsReport stream_stats(const EventStream& stream, int64_t label_period_us) {
    if (stream.empty()) {
        throw DataError("stream_stats: empty stream");
    }
    // Unique timestamps and counts per timestamp (events already sorted by t).
    std::vector<double> gaps;
    std::vector<double> counts;
    int64_t prev_t = stream.events.front().t;
    double run = 1;
    for (size_t i = 1; i < stream.events.size(); ++i) {
        int64_t t = stream.events[i].t;
        if (t == prev_t) {
            run += 1;
        } else {
            counts.push_back(run);
            gaps.push_back(static_cast<double>(t - prev_t));
            prev_t = t;
            run = 1;
        }
    }
    counts.push_back(run);

    StatsReport report;
    report.sampling_time = compute_stats(gaps);
    report.events_per_timestamp = compute_stats(counts);

    if (label_period_us > 0) {
        report.has_label_period = true;
        std::vector<double> per_window;
        int64_t t0 = stream.events.front().t;
        int64_t window_end = t0 + label_period_us;
        double in_window = 0;
        for (const Event& e : stream.events) {
            while (e.t >= window_end) {
                per_window.push_back(in_window);
                in_window = 0;
                window_end += label_period_us;
            }
            in_window += 1;
        }
        per_window.push_back(in_window);
        report.events_per_label_period = compute_stats(per_window);
    }
    return report;
}

}  // namespace retina
