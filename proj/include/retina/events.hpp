#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace retina {

// Raised on malformed or out-of-contract input data (files, resolutions).
// The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

enum class Polarity : uint8_t { Off = 0, On = 1 };

struct Event {
    int64_t t{0};  // microseconds
    int16_t x{0};
    int16_t y{0};
    Polarity polarity{Polarity::Off};
};

struct EventStream {
    int width{0};
    int height{0};
    std::vector<Event> events;  // sorted by t, non-decreasing

    size_t size() const { return events.size(); }
    bool empty() const { return events.empty(); }
};

struct PupilLabel {
    int64_t t{0};     // microseconds
    double x{0.0};    // real-valued pixel coordinates
    double y{0.0};
};

struct Recording {
    EventStream stream;
    std::vector<PupilLabel> labels;  // sorted by t, strictly increasing
};

enum class EventFormat { Csv, Bin };

// File ingestion. CSV carries no resolution, so the caller declares it;
// the packed binary header carries its own.
EventStream load_events(const std::string& path, EventFormat format,
                        int width = 640, int height = 480);
EventStream load_events_csv(const std::string& path, int width, int height);
EventStream load_events_bin(const std::string& path);
void save_events(const EventStream& stream, const std::string& path, EventFormat format);
void save_events_csv(const EventStream& stream, const std::string& path);
void save_events_bin(const EventStream& stream, const std::string& path);

std::vector<PupilLabel> load_labels_csv(const std::string& path);
void save_labels_csv(const std::vector<PupilLabel>& labels, const std::string& path);

// Sensor-to-network spatial transforms. The 640x480 sensor array becomes a
// 512x512 square: columns x in [96,607] survive and shift to x-96, rows
// shift down by 16. Labels transform identically (clamped into range).
Recording sensor_to_square(const Recording& rec);

// Coordinates become (x/factor, y/factor); timestamps and polarities are
// untouched. factor must divide both dimensions.
EventStream sum_pool_events(const EventStream& stream, int factor);
std::vector<PupilLabel> sum_pool_labels(const std::vector<PupilLabel>& labels, int factor);
Recording sum_pool_recording(const Recording& rec, int factor);

struct Stats {
    double median{0.0};
    double mean{0.0};
    double stddev{0.0};
    double min{0.0};
    double max{0.0};
};

struct StatsReport {
    Stats sampling_time;          // gaps between successive unique timestamps (us)
    Stats events_per_timestamp;   // event counts per unique timestamp
    Stats events_per_label_period;  // event counts per label_period window (when > 0)
    bool has_label_period{false};
};

Stats compute_stats(const std::vector<double>& values);

StatsReport stream_stats(const EventStream& stream, int64_t label_period_us = 0);

}  // namespace retina
