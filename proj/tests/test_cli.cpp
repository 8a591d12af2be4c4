#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "retina/slicer.hpp"

#ifndef RETINA_CLI
#define RETINA_CLI "retina"
#endif

namespace {

namespace fs = std::filesystem;

struct Workdir {
    fs::path dir;
    Workdir() {
        dir = fs::temp_directory_path() / "retina_cli_test";
        fs::create_directories(dir);
    }
    std::string operator/(const char* name) const { return (dir / name).string(); }
};

int run(const std::string& args) {
    std::string cmd = std::string(RETINA_CLI) + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("map validates the built-in network and finds an assignment") {
    CHECK(run("map") == 0);
}

TEST_CASE("unknown subcommand and missing flags are usage errors") {
    CHECK(run("frobnicate") == 1);
    CHECK(run("slice") == 1);  // --events/--labels required
}

TEST_CASE("gen, stats, slice pipeline round-trips") {
    Workdir w;
    std::string events = w / "events.csv";
    std::string labels = w / "labels.csv";
    REQUIRE(run("gen --out-events " + events + " --out-labels " + labels +
                " --duration-ms 700 --seed 5") == 0);
    CHECK(run("stats --events " + events) == 0);

    std::string frames = w / "frames.efs";
    REQUIRE(run("slice --events " + events + " --labels " + labels +
                " --mode dynamic --n 120 --bins 16 --out " + frames) == 0);

    retina::EventFrameSequence seq = retina::load_frames(frames);
    CHECK(seq.num_bins == 16);
    // dynamic invariant: every non-padded bin holds exactly N active pixels
    for (int b = seq.padded_bins; b < seq.num_bins; ++b) {
        int active = 0;
        for (int y = 0; y < seq.height; ++y)
            for (int x = 0; x < seq.width; ++x)
                if (seq.at(b, 0, y, x) || seq.at(b, 1, y, x)) ++active;
        CHECK(active == 120);
    }
}

TEST_CASE("missing data file exits with the data error code") {
    CHECK(run("stats --events /nonexistent/events.csv") == 2);
}

TEST_CASE("train then eval and infer on a small run") {
    Workdir w;
    std::string events = w / "t_events.csv";
    std::string labels = w / "t_labels.csv";
    REQUIRE(run("gen --out-events " + events + " --out-labels " + labels +
                " --duration-ms 900 --seed 9") == 0);
    std::string out_dir = w / "run";
    REQUIRE(run("train --events " + events + " --labels " + labels +
                " --iterations 4 --batch 2 --seq 12 --bins 12 --n 150 --out-dir " + out_dir +
                " --filter-size 6 --holdout 0.3") == 0);
    CHECK(fs::exists(out_dir + "/net.json"));
    CHECK(fs::exists(out_dir + "/weights.bin"));
    CHECK(fs::exists(out_dir + "/train_log.csv"));

    CHECK(run("eval --events " + events + " --labels " + labels + " --net " + out_dir +
              "/net.json --weights " + out_dir + "/weights.bin --bins 12 --n 150"
              " --filter-size 6 --anchor-stride 4") == 0);

    std::string pred = w / "pred.csv";
    CHECK(run("infer --events " + events + " --labels " + labels + " --net " + out_dir +
              "/net.json --weights " + out_dir + "/weights.bin --bins 12 --n 150"
              " --filter-size 6 --out " + pred) == 0);
    std::ifstream f(pred);
    std::string header;
    std::getline(f, header);
    CHECK(header == "bin,x_min,y_min,x_max,y_max,conf,cx,cy");
}

}  // TEST_SUITE
