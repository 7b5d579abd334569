#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "cellspan/dataset.hpp"
#include "cellspan/error.hpp"
#include "cellspan/physics.hpp"

using namespace cellspan;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("cellspan_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CellRecord tiny_cell(const std::string& id, Split split) {
    CellRecord cell;
    cell.cell_id = id;
    cell.split = split;
    cell.nominal_capacity_ah = 1.1;
    cell.charge_policy = "4C(80%)-4C";
    for (int cycle = 1; cycle <= 110; ++cycle)
        cell.summaries.push_back(
            {cycle, 1.05 - 0.0005 * cycle, 0.016, 30.0, 32.0});
    cell.cycle_life = 700;
    DischargeCurve curve;
    curve.voltage = {2.0, 2.5, 3.0, 3.2, 3.6};
    curve.capacity = {1.05, 0.9, 0.6, 0.2, 0.0};
    cell.early_curves.emplace(10, curve);
    curve.capacity = {1.0, 0.85, 0.5, 0.15, 0.0};
    cell.early_curves.emplace(100, curve);
    return cell;
}

} // namespace

TEST_CASE("round-trip preserves cells and split labels") {
    TempDir dir;
    std::vector<CellRecord> cells{tiny_cell("a1", Split::train),
                                  tiny_cell("b2", Split::primary_test),
                                  tiny_cell("c3", Split::secondary_test)};
    const auto path = dir.file("cells.json");
    save_dataset(cells, path);
    const auto loaded = load_dataset(path);
    REQUIRE(loaded.size() == 3);
    CHECK(loaded[0].split == Split::train);
    CHECK(loaded[1].split == Split::primary_test);
    CHECK(loaded[2].split == Split::secondary_test);
    CHECK(loaded[0].cell_id == "a1");
    CHECK(loaded[0].nominal_capacity_ah == 1.1);
    CHECK(loaded[0].summaries.size() == cells[0].summaries.size());
    CHECK(loaded[0].early_curves.at(100).capacity ==
          cells[0].early_curves.at(100).capacity);
    CHECK(*loaded[2].cycle_life == 700);

    // canonical writer: a second save of the loaded data is byte-identical
    const auto path2 = dir.file("cells2.json");
    save_dataset(loaded, path2);
    CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("duplicate summary cycle is rejected naming cell and cycle") {
    TempDir dir;
    auto cell = tiny_cell("dup_cell", Split::train);
    cell.summaries[55].cycle = 57;  // duplicates the next row's cycle 57
    const auto path = dir.file("bad.json");
    save_dataset({cell}, path);
    try {
        load_dataset(path);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("dup_cell") != std::string::npos);
        CHECK(msg.find("57") != std::string::npos);
    }
}

TEST_CASE("structured errors for malformed files") {
    TempDir dir;
    const auto path = dir.file("broken.json");
    {
        std::ofstream out(path);
        out << "{\"cells\": [{\"cell_id\": \"x\",";  // truncated
    }
    CHECK_THROWS_AS(load_dataset(path), DataError);

    {
        std::ofstream out(path);
        out << R"({"cells": [{"cell_id": "x", "split": "train",
                  "charge_policy": "p", "cycle_life": null,
                  "summaries": {"cycle": [], "qd": [], "ir": [], "t_avg": [], "t_max": []},
                  "early_curves": {}}]})";  // nominal_capacity_ah missing
    }
    try {
        load_dataset(path);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("nominal_capacity_ah") != std::string::npos);
    }

    {
        std::ofstream out(path);
        out << R"({"cells": [{"cell_id": "x", "split": "holdout",
                  "nominal_capacity_ah": 1.1, "charge_policy": "p"}]})";
    }
    CHECK_THROWS_AS(load_dataset(path), DataError);  // unknown split label
}

TEST_CASE("capacity loss series definition and clamping") {
    CellRecord cell;
    cell.cell_id = "loss";
    cell.nominal_capacity_ah = 1.1;
    cell.summaries = {{1, 1.1, 0, 0, 0}, {2, 1.12, 0, 0, 0}, {3, 0.88, 0, 0, 0}};
    const auto series = capacity_loss_series(cell);
    CHECK(series.loss[0] == 0.0);
    CHECK(series.loss[1] == 0.0);  // overshoot clamps
    CHECK(series.clamped == 1);
    CHECK(series.loss[2] == doctest::Approx(0.2).epsilon(1e-12));  // 80% SOH

    cell.summaries.push_back({4, 0.0, 0, 0, 0});
    CHECK_THROWS_AS(capacity_loss_series(cell), DataError);  // loss would reach 1
}

TEST_CASE("noiseless synthetic cells follow the loss law exactly") {
    SyntheticSpec spec;
    spec.n_cells = 1;
    spec.noise_sd = 0.0;
    spec.rng_seed = 5;
    const auto data = generate_synthetic(spec);
    REQUIRE(data.cells.size() == 1);
    const auto& cell = data.cells[0];
    const auto& t = data.truth.at(cell.cell_id);
    const PhysicsParams p{t.a, t.b, t.c};
    const auto series = capacity_loss_series(cell);
    for (std::size_t i = 0; i < series.cycles.size(); ++i)
        CHECK(series.loss[i] == doctest::Approx(q_loss(p, series.cycles[i])).epsilon(1e-12));

    // label is the first cycle at or past the threshold
    REQUIRE(cell.cycle_life.has_value());
    const int label = *cell.cycle_life;
    CHECK(q_loss(p, label) >= 0.2);
    CHECK(q_loss(p, label - 1) < 0.2);
    // sidecar life is the exact real-valued crossing
    CHECK(q_loss(p, t.cycle_life_true) == doctest::Approx(0.2).epsilon(1e-9));
}

TEST_CASE("noiseless synthetic + fit recovers (A, B) to 1e-6") {
    SyntheticSpec spec;
    spec.n_cells = 8;
    spec.noise_sd = 0.0;
    spec.rng_seed = 123;
    const auto data = generate_synthetic(spec);
    for (const auto& cell : data.cells) {
        const auto& t = data.truth.at(cell.cell_id);
        const auto series = capacity_loss_series(cell);
        const auto report = fit_params(series, t.c);
        CHECK(std::fabs(report.params.a - t.a) < 1e-6);
        CHECK(std::fabs(report.params.b - t.b) < 1e-6);
    }
}

TEST_CASE("loss series values stay in [0, 1) on noisy synthetic data") {
    SyntheticSpec spec;
    spec.n_cells = 12;
    spec.noise_sd = 0.004;
    spec.rng_seed = 77;
    const auto data = generate_synthetic(spec);
    for (const auto& cell : data.cells) {
        const auto series = capacity_loss_series(cell);
        for (double v : series.loss) {
            CHECK(v >= 0.0);
            CHECK(v < 1.0);
        }
    }
}

TEST_CASE("generator is deterministic per seed, byte for byte") {
    TempDir dir;
    SyntheticSpec spec;
    spec.n_cells = 6;
    spec.noise_sd = 0.002;
    spec.rng_seed = 42;
    const auto d1 = generate_synthetic(spec);
    const auto d2 = generate_synthetic(spec);
    save_dataset(d1.cells, dir.file("a.json"));
    save_dataset(d2.cells, dir.file("b.json"));
    save_truth(d1.truth, dir.file("a_truth.json"));
    save_truth(d2.truth, dir.file("b_truth.json"));
    CHECK(slurp(dir.file("a.json")) == slurp(dir.file("b.json")));
    CHECK(slurp(dir.file("a_truth.json")) == slurp(dir.file("b_truth.json")));

    SyntheticSpec other = spec;
    other.rng_seed = 43;
    const auto d3 = generate_synthetic(other);
    save_dataset(d3.cells, dir.file("c.json"));
    CHECK(slurp(dir.file("a.json")) != slurp(dir.file("c.json")));
}

TEST_CASE("empty synthetic dataset") {
    TempDir dir;
    SyntheticSpec spec;
    spec.n_cells = 0;
    const auto data = generate_synthetic(spec);
    CHECK(data.cells.empty());
    CHECK(data.truth.empty());
    save_dataset(data.cells, dir.file("empty.json"));
    save_truth(data.truth, dir.file("empty_truth.json"));
    CHECK(load_dataset(dir.file("empty.json")).empty());
    CHECK(load_truth(dir.file("empty_truth.json")).empty());
}

TEST_CASE("synthetic splits follow the 8/1/1 pattern") {
    SyntheticSpec spec;
    spec.n_cells = 20;
    spec.rng_seed = 1;
    const auto data = generate_synthetic(spec);
    int train = 0, primary = 0, secondary = 0;
    for (const auto& cell : data.cells) {
        if (cell.split == Split::train) ++train;
        if (cell.split == Split::primary_test) ++primary;
        if (cell.split == Split::secondary_test) ++secondary;
    }
    CHECK(train == 16);
    CHECK(primary == 2);
    CHECK(secondary == 2);
}

TEST_CASE("invalid synthetic specs are rejected") {
    SyntheticSpec spec;
    spec.n_cells = 1;
    spec.b_range = {0.0, 0.5};  // B must stay positive
    CHECK_THROWS_AS(generate_synthetic(spec), DataError);
    spec.b_range = {0.9, 0.8};  // empty range
    CHECK_THROWS_AS(generate_synthetic(spec), DataError);
    spec = SyntheticSpec{};
    spec.n_cells = 1;
    spec.max_cycles = 50;  // cannot cover cycle 100
    CHECK_THROWS_AS(generate_synthetic(spec), DataError);
}

TEST_CASE("cell validation catches the documented violations") {
    auto cell = tiny_cell("v", Split::train);
    cell.nominal_capacity_ah = 0.0;
    CHECK_THROWS_AS(validate(cell), DataError);

    cell = tiny_cell("v", Split::train);
    cell.cycle_life = 700;
    cell.summaries.resize(50);  // labeled cell must cover cycle 100
    CHECK_THROWS_AS(validate(cell), DataError);

    cell = tiny_cell("v", Split::train);
    cell.early_curves.at(10).capacity[1] = -0.5;
    CHECK_THROWS_AS(validate(cell), DataError);

    cell = tiny_cell("v", Split::train);
    cell.early_curves.at(10).voltage.resize(3);
    CHECK_THROWS_AS(validate(cell), DataError);
}

TEST_CASE("out-of-window voltages are clipped at load") {
    TempDir dir;
    auto cell = tiny_cell("clip", Split::train);
    cell.early_curves.at(10).voltage[0] = 1.95;  // below the window
    cell.early_curves.at(10).voltage[4] = 3.65;  // above the window
    const auto path = dir.file("clip.json");
    save_dataset({cell}, path);
    const auto loaded = load_dataset(path);
    CHECK(loaded[0].early_curves.at(10).voltage.front() == kVoltageMin);
    CHECK(loaded[0].early_curves.at(10).voltage.back() == kVoltageMax);
}
