#include "jettwin/error.hpp"
#include "jettwin/kv_config.hpp"
#include "jettwin/persistence.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <unistd.h>

using namespace jettwin;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an error";
    return ErrorCode::Io;
}

std::string message_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    ADD_FAILURE() << "expected an error";
    return {};
}

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("jettwin_persist_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

StateFile two_zone_state() {
    StateFile s;
    s.mode = ControlMode::TemperatureControl;
    s.roles = {ChannelRole::Outlet, ChannelRole::Inlet, ChannelRole::Closed, ChannelRole::Inlet, ChannelRole::Outlet};
    s.regions.push_back({region_around(0, 22, 12, 3), {10.0, 0.1, 0.0}, 100.0});
    s.regions.push_back({region_around(1, 10, 12, 1), {10.0, 0.1, 0.0}, 100.0});
    return s;
}

// Any double, including awkward ones, as long as it is finite.
double wild(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> kind(0, 3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    switch (kind(rng)) {
    case 0: return u(rng) * 1e-300;
    case 1: return u(rng) * 1e300;
    case 2: return std::nextafter(0.1, 1.0) * u(rng);
    default: return u(rng) * 300.0;
    }
}

StateFile random_state(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> nch(1, 9);
    std::uniform_int_distribution<int> role(0, 2);
    std::uniform_real_distribution<double> gain(0.0, 50.0);
    std::uniform_real_distribution<double> temp(-20.0, 200.0);
    StateFile s;
    s.mode = rng() % 2 ? ControlMode::TemperatureControl : ControlMode::MfcDirect;
    s.decoupler_enabled = rng() % 2;
    const int n = nch(rng);
    for (int k = 0; k < n; ++k) s.roles.push_back(static_cast<ChannelRole>(role(rng)));
    s.roles[static_cast<std::size_t>(rng() % static_cast<unsigned>(n))] = ChannelRole::Outlet;
    const int m = static_cast<int>(rng() % 6);
    for (int r = 0; r < m; ++r) {
        std::uniform_int_distribution<int> xs(0, 31);
        std::uniform_int_distribution<int> ys(0, 23);
        const int x0 = xs(rng), y0 = ys(rng);
        std::uniform_int_distribution<int> xw(1, 32 - x0);
        std::uniform_int_distribution<int> yw(1, 24 - y0);
        Region g{r, x0, x0 + xw(rng), y0, y0 + yw(rng), static_cast<int>(rng() % static_cast<unsigned>(n))};
        s.regions.push_back({g, {gain(rng), gain(rng) / 100.0, rng() % 3 ? 0.0 : gain(rng)}, temp(rng)});
    }
    if (m > 0 && rng() % 2) {
        s.decoupler_gains.assign(static_cast<std::size_t>(m), std::vector<double>(static_cast<std::size_t>(m)));
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                s.decoupler_gains[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                    i == j ? -0.1 - gain(rng) / 100.0 : wild(rng) * 1e-3;
    }
    return s;
}

RunLogRecord random_record(std::mt19937_64& rng, const RunLogLayout& layout, double elapsed) {
    RunLogRecord rec;
    rec.elapsed = elapsed;
    for (int k = 0; k < layout.channel_count; ++k) rec.channels.push_back({wild(rng), wild(rng)});
    for (int r = 0; r < layout.region_count; ++r) {
        RegionLog g;
        g.mean = wild(rng);
        g.x_min = static_cast<int>(rng() % 16);
        g.x_max = g.x_min + 1 + static_cast<int>(rng() % 16);
        g.y_min = static_cast<int>(rng() % 12);
        g.y_max = g.y_min + 1 + static_cast<int>(rng() % 12);
        if (layout.control_columns) {
            g.setpoint = wild(rng);
            g.gains = {std::abs(wild(rng)), std::abs(wild(rng)), std::abs(wild(rng))};
        }
        rec.regions.push_back(g);
    }
    return rec;
}

} // namespace

TEST(StateFile, GoldenDocument) {
    const auto golden = read_text_file(std::string(JETTWIN_FIXTURE_DIR) + "/golden/two_zone_state.txt");
    EXPECT_EQ(save_state(two_zone_state()), golden);
    EXPECT_EQ(load_state(golden), two_zone_state());
}

TEST(StateFile, DefaultRoundTrip) {
    StateFile s;
    s.roles = {ChannelRole::Closed};
    EXPECT_EQ(load_state(save_state(s)), s);
}

TEST(StateFile, RandomRoundTrips) {
    std::mt19937_64 rng(31);
    for (int k = 0; k < 100; ++k) {
        const auto s = random_state(rng);
        ASSERT_NO_THROW(s.validate());
        const auto text = save_state(s);
        ASSERT_EQ(load_state(text), s) << text;
        ASSERT_EQ(save_state(load_state(text)), text);
    }
}

TEST(StateFile, MissingKeysAreNamed) {
    const auto golden = save_state(two_zone_state());
    for (const std::string key : {"version", "mode", "channel.3.role", "region.1.kp", "region.0.bounds"}) {
        std::string cut;
        for (auto line : split(golden, '\n')) {
            if (line.substr(0, key.size() + 1) == key + " ") continue;
            cut += std::string(line) + "\n";
        }
        EXPECT_EQ(code_of([&] { load_state(cut); }), ErrorCode::StateFormat) << key;
        EXPECT_NE(message_of([&] { load_state(cut); }).find(key), std::string::npos) << key;
    }
    // Truncated mid-way.
    const auto half = golden.substr(0, golden.find("region.1.mfc"));
    EXPECT_NE(message_of([&] { load_state(half); }).find("region.1.mfc"), std::string::npos);
}

TEST(StateFile, VersionAndValueErrors) {
    auto text = save_state(two_zone_state());
    auto replace = [&](const std::string& from, const std::string& to) {
        auto t = text;
        t.replace(t.find(from), from.size(), to);
        return t;
    };
    EXPECT_EQ(code_of([&] { load_state(replace("version = 1", "version = 2")); }), ErrorCode::StateFormat);
    EXPECT_EQ(code_of([&] { load_state(replace("mode = temperature", "mode = auto")); }), ErrorCode::StateFormat);
    EXPECT_EQ(code_of([&] { load_state(replace("decoupler = off", "decoupler = yes")); }), ErrorCode::StateFormat);
    EXPECT_EQ(code_of([&] { load_state(replace("region.0.kp = 10", "region.0.kp = ten")); }), ErrorCode::StateFormat);
    EXPECT_EQ(code_of([&] { load_state(replace("21 24 11 14", "21 24 11")); }), ErrorCode::StateFormat);
    EXPECT_EQ(code_of([&] { load_state(replace("21 24 11 14", "21 21 11 14")); }), ErrorCode::InvalidRegion);
    EXPECT_EQ(code_of([&] { load_state(replace("region.0.mfc = 3", "region.0.mfc = 9")); }), ErrorCode::UnknownChannel);
    EXPECT_EQ(code_of([&] {
                  auto t = replace("channel.0.role = outlet", "channel.0.role = closed");
                  t.replace(t.find("channel.4.role = outlet"), 23, "channel.4.role = closed");
                  load_state(t);
              }),
              ErrorCode::ArrangementViolation);
    EXPECT_EQ(code_of([&] { load_state(replace("region.0.kd = 0", "region.0.kd = -1")); }), ErrorCode::InvalidArgument);
}

TEST(RunLog, GoldenHeaders) {
    EXPECT_EQ(run_log_header({2, 1, false}),
              "elapsed_s,mfc0_cmd_lpm,mfc0_act_lpm,mfc1_cmd_lpm,mfc1_act_lpm,"
              "region0_mean_c,region0_x_min_px,region0_x_max_px,region0_y_min_px,region0_y_max_px");
    EXPECT_EQ(run_log_header({1, 1, true}),
              "elapsed_s,mfc0_cmd_lpm,mfc0_act_lpm,"
              "region0_mean_c,region0_x_min_px,region0_x_max_px,region0_y_min_px,region0_y_max_px,"
              "region0_setpoint_c,region0_kp,region0_ki,region0_kd");
    const auto pix = pixel_log_header();
    EXPECT_EQ(split(pix, ',').size(), 769u);
    EXPECT_EQ(pix.substr(0, 30), "elapsed_s,px_0_0_c,px_1_0_c,px");
    EXPECT_EQ(pix.substr(pix.size() - 10), "px_31_23_c");
    EXPECT_EQ(parse_run_log(run_log_header({3, 0, false}) + "\n").layout, (RunLogLayout{3, 0, false}));
}

TEST(RunLog, RandomRoundTrips) {
    std::mt19937_64 rng(77);
    for (int k = 0; k < 100; ++k) {
        // Without regions the control columns are absent, so layouts start at one region.
        const RunLogLayout layout{1 + static_cast<int>(rng() % 9), 1 + static_cast<int>(rng() % 4), rng() % 2 == 1};
        std::vector<RunLogRecord> recs;
        std::string text = run_log_header(layout) + "\n";
        for (int r = 0; r < 1 + static_cast<int>(rng() % 20); ++r) {
            recs.push_back(random_record(rng, layout, r * 0.5));
            text += format_run_row(recs.back(), layout) + "\n";
        }
        const auto parsed = parse_run_log(text);
        ASSERT_EQ(parsed.layout, layout);
        ASSERT_EQ(parsed.records, recs);
    }
}

TEST(RunLog, Errors) {
    const RunLogLayout layout{2, 1, false};
    std::mt19937_64 rng(1);
    const auto rec = random_record(rng, layout, 0.0);
    EXPECT_EQ(code_of([&] { format_run_row(rec, {3, 1, false}); }), ErrorCode::LogFormat);
    EXPECT_EQ(code_of([&] { parse_run_log(""); }), ErrorCode::LogFormat);
    EXPECT_EQ(code_of([&] { parse_run_log("time,a,b\n1,2,3\n"); }), ErrorCode::LogFormat);
    const auto bad = run_log_header(layout) + "\n" + format_run_row(rec, layout) + ",7\n";
    EXPECT_NE(message_of([&] { parse_run_log(bad); }).find("row 2"), std::string::npos);
}

TEST(PixelLog, RandomRoundTrips) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> t(50.0, 20.0);
    std::string text = pixel_log_header() + "\n";
    std::vector<PixelLogRecord> recs;
    for (int k = 0; k < 100; ++k) {
        PixelLogRecord p;
        p.elapsed = k;
        for (double& v : p.pixels) v = t(rng);
        const auto row = format_pixel_row(p);
        ASSERT_EQ(split(row, ',').size(), 769u);
        text += row + "\n";
        recs.push_back(p);
    }
    EXPECT_EQ(parse_pixel_log(text), recs);
    EXPECT_EQ(code_of([&] { parse_pixel_log(pixel_log_header() + "\n1,2,3\n"); }), ErrorCode::LogFormat);
}

TEST(Logger, HeadersOnFirstAppendAndFileNaming) {
    const auto dir = fresh_dir("logger");
    const RunLogLayout layout{2, 1, true};
    std::mt19937_64 rng(2);
    std::string first_run;
    {
        auto log = RunLogger::in_directory(dir.string(), layout);
        first_run = log.run_path();
        EXPECT_EQ(fs::path(log.run_path()).filename(), "runlog_001.csv");
        EXPECT_EQ(fs::path(log.pixel_path()).filename(), "pixels_001.csv");
        EXPECT_FALSE(fs::exists(log.run_path()));
        std::vector<RunLogRecord> recs;
        for (int k = 0; k < 3; ++k) {
            recs.push_back(random_record(rng, layout, k));
            log.append_run_log(recs.back());
            PixelLogRecord p;
            p.elapsed = k;
            log.append_pixel_log(p);
        }
        EXPECT_EQ(log.layout(), layout);
        const auto text = read_text_file(log.run_path());
        EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
        EXPECT_EQ(parse_run_log(text).records, recs);
        EXPECT_EQ(parse_pixel_log(read_text_file(log.pixel_path())).size(), 3u);
        EXPECT_EQ(code_of([&] { log.append_run_log(random_record(rng, {1, 1, true}, 4)); }), ErrorCode::LogFormat);
    }
    const auto second = RunLogger::in_directory(dir.string(), layout);
    EXPECT_EQ(fs::path(second.run_path()).filename(), "runlog_002.csv");
    fs::remove_all(dir);
}

TEST(Logger, IoErrorsNameThePath) {
    const auto dir = fresh_dir("io");
    const auto blocker = dir / "file";
    write_text_file(blocker.string(), "x");
    EXPECT_EQ(code_of([&] { RunLogger::in_directory((blocker / "sub").string(), {1, 1, false}); }), ErrorCode::Io);
    const auto missing = (dir / "nope" / "x.txt").string();
    EXPECT_NE(message_of([&] { read_text_file(missing); }).find(missing), std::string::npos);
    fs::remove_all(dir);
}
