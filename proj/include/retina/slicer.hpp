#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "retina/events.hpp"

namespace retina {

struct SliceConfig {
    enum class Mode { Fixed, Dynamic };
    Mode mode{Mode::Dynamic};
    int64_t dt_us{1000};   // Fixed: window length
    int n_events{300};     // Dynamic: distinct pixels per window
    int num_bins{64};
    int height{64};
    int width{64};
};

// T x 2 x H x W binary tensor plus per-bin end times and interpolated labels.
// Channel 0 holds OFF events, channel 1 ON, matching the CSV polarity codes.
struct EventFrameSequence {
    int num_bins{0};
    int height{0};
    int width{0};
    std::vector<uint8_t> frames;          // (t, c, y, x) row-major, entries in {0,1}
    std::vector<int64_t> bin_end_times;   // strictly increasing
    std::vector<PupilLabel> labels;       // one per bin, at bin_end_times
    int padded_bins{0};                   // leading all-zero bins (stream exhausted)

    uint8_t& at(int t, int c, int y, int x) {
        return frames[((static_cast<size_t>(t) * 2 + c) * height + y) * width + x];
    }
    uint8_t at(int t, int c, int y, int x) const {
        return frames[((static_cast<size_t>(t) * 2 + c) * height + y) * width + x];
    }
};

// One pixel's polarity resolution: the channel with strictly more events wins,
// ties go to ON, empty pixels stay empty. Returns (on_bit, off_bit).
std::pair<uint8_t, uint8_t> resolve_polarity(int on_count, int off_count);

// Linear interpolation between the two labels bracketing t; clamps to the
// endpoints outside the labelled range.
PupilLabel interpolate_label(std::span<const PupilLabel> labels, int64_t t);

EventFrameSequence slice_dynamic(const Recording& rec, const SliceConfig& cfg,
                                 size_t anchor_label_index);
EventFrameSequence slice_fixed(const Recording& rec, const SliceConfig& cfg,
                               size_t anchor_label_index);
EventFrameSequence slice(const Recording& rec, const SliceConfig& cfg,
                         size_t anchor_label_index);

// JSON header line + packed tensor bytes, row-major (t, c, y, x).
void save_frames(const EventFrameSequence& seq, const std::string& path);
EventFrameSequence load_frames(const std::string& path);

}  // namespace retina
