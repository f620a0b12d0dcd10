#include "jettwin/error.hpp"
#include "jettwin/service.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <random>
#include <thread>

using namespace jettwin;
using nlohmann::json;

namespace {

WorldConfig small_world(std::uint64_t seed = 3) {
    WorldConfig cfg;
    cfg.seed = seed;
    return cfg;
}

ServiceOptions test_options() {
    ServiceOptions o;
    o.port = 0;
    o.realtime_factor = 0.0;
    o.start_running = false;
    return o;
}

json post(httplib::Client& cli, const json& body, int* status = nullptr) {
    auto res = cli.Post("/api/v1/command", body.dump(), "application/json");
    if (!res) {
        ADD_FAILURE() << "no HTTP response";
        return json{};
    }
    if (status) *status = res->status;
    return json::parse(res->body);
}

json get(httplib::Client& cli, const std::string& path, int* status = nullptr) {
    auto res = cli.Get(path);
    if (!res) {
        ADD_FAILURE() << "no HTTP response";
        return json{};
    }
    if (status) *status = res->status;
    return json::parse(res->body);
}

// Every command variant with every optional field exercised somewhere.
std::vector<Command> all_commands() {
    return {
        cmd::SetChannelRole{2, ChannelRole::Inlet},
        cmd::SetFlow{1, 123.5},
        cmd::SetRegion{Region{1, 3, 6, 4, 8, 2}, 2},
        cmd::SetRegion{Region{0, 0, 32, 0, 24, 0}, std::nullopt},
        cmd::SetGains{1, {10.46, 0.11, 0.0}},
        cmd::SetSetpoint{0, 75.25},
        cmd::SetMode{ControlMode::TemperatureControl},
        cmd::SetMode{ControlMode::MfcDirect},
        cmd::SetDecoupler{true, std::vector<std::vector<double>>{{-0.14, -0.05}, {-0.05, -0.14}}},
        cmd::SetDecoupler{false, std::nullopt},
        cmd::LoadScheduler{ScheduleMode::Flow, "0,100\n300,150\n", std::nullopt},
        cmd::LoadScheduler{ScheduleMode::Setpoint, std::nullopt, "/tmp/sched.csv"},
        cmd::ClearScheduler{},
        cmd::SaveState{std::nullopt},
        cmd::SaveState{"/tmp/state.txt"},
        cmd::LoadState{"version = 1\n", std::nullopt},
        cmd::LoadState{std::nullopt, "/tmp/state.txt"},
        cmd::SaveMode{true, "/tmp/logs"},
        cmd::SaveMode{false, std::nullopt},
        cmd::SetGun{0.1, 0.12, 60.0, 0.03, true},
        cmd::SetGun{std::nullopt, std::nullopt, std::nullopt, std::nullopt, false},
        cmd::PlotControl{20.0, 120.0, 300, true},
        cmd::PlotControl{},
        cmd::SetRunning{true},
        cmd::Step{17},
    };
}

} // namespace

TEST(Wire, CommandJsonRoundTrip) {
    for (const auto& c : all_commands()) {
        const auto j = command_to_json(c);
        EXPECT_EQ(j.at("v"), protocol_version);
        EXPECT_EQ(j.at("cmd"), command_name(c));
        EXPECT_EQ(parse_command(j), c) << j.dump();
        EXPECT_EQ(parse_command(std::string_view(j.dump())), c) << j.dump();
    }
}

TEST(Wire, AckJsonRoundTrip) {
    std::vector<Ack> acks{Ack{}, Ack::failure(ErrorCode::ArrangementViolation, "needs an outlet")};
    Ack flow;
    flow.applied_flow = 300.0;
    acks.push_back(flow);
    Ack doc;
    doc.document = "version = 1\n";
    acks.push_back(doc);
    Ack ran;
    ran.ran = 5;
    acks.push_back(ran);
    for (int k = 0; k <= static_cast<int>(ErrorCode::Protocol); ++k) {
        acks.push_back(Ack::failure(static_cast<ErrorCode>(k), "m"));
    }
    for (const auto& a : acks) EXPECT_EQ(parse_ack(json::parse(ack_to_json(a).dump())), a);
    EXPECT_EQ(ack_to_json(Ack::failure(ErrorCode::Protocol, "x"))["error"]["code"], "ProtocolError");
}

TEST(Wire, ProtocolErrors) {
    const std::vector<std::string> bad{
        "not json",
        "[1,2]",
        R"({"v":1})",
        R"({"v":1,"cmd":"Explode"})",
        R"({"v":2,"cmd":"ClearScheduler"})",
        R"({"v":1,"cmd":"SetFlow","channel":1})",
        R"({"v":1,"cmd":"SetFlow","channel":"one","flow":3})",
        R"({"v":1,"cmd":"SetFlow","channel":1.5,"flow":3})",
        R"({"v":1,"cmd":"SetChannelRole","channel":1,"role":"open"})",
        R"({"v":1,"cmd":"SetMode","mode":"auto"})",
        R"({"v":1,"cmd":"LoadScheduler","mode":"flow"})",
        R"({"v":1,"cmd":"LoadScheduler","mode":"flow","csv":"0,1","path":"x"})",
        R"({"v":1,"cmd":"LoadState"})",
        R"({"v":1,"cmd":"SaveMode","enabled":true})",
        R"({"v":1,"cmd":"Step","cycles":0})",
        R"({"v":1,"cmd":"SetDecoupler","enabled":true,"gains":[["a"]]})",
    };
    for (const auto& text : bad) {
        try {
            parse_command(std::string_view(text));
            ADD_FAILURE() << "accepted: " << text;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::Protocol) << text;
        }
    }
}

TEST(ApplyCommand, SemanticsAndErrors) {
    World w(small_world());
    EXPECT_TRUE(apply_command(w, cmd::SetChannelRole{0, ChannelRole::Outlet}).ok);
    EXPECT_TRUE(apply_command(w, cmd::SetChannelRole{1, ChannelRole::Inlet}).ok);
    const auto flow = apply_command(w, cmd::SetFlow{1, 400.0});
    ASSERT_TRUE(flow.ok);
    EXPECT_EQ(flow.applied_flow, 300.0);

    const auto closing = apply_command(w, cmd::SetChannelRole{0, ChannelRole::Closed});
    EXPECT_FALSE(closing.ok);
    EXPECT_EQ(closing.code, ErrorCode::ArrangementViolation);
    EXPECT_EQ(w.channels()[0].role, ChannelRole::Outlet);

    // Bounds change without a binding keeps the binding.
    ASSERT_TRUE(apply_command(w, cmd::SetRegion{Region{2, 0, 32, 0, 24, 0}, 1}).ok);
    ASSERT_TRUE(apply_command(w, cmd::SetRegion{Region{2, 5, 9, 5, 9, 0}, std::nullopt}).ok);
    EXPECT_EQ(w.regions()[2], (Region{2, 5, 9, 5, 9, 1}));

    EXPECT_EQ(apply_command(w, cmd::SetGun{0.5, 0.1, 10.0, 0.03, true}).code, ErrorCode::InvalidArgument);
    ASSERT_TRUE(apply_command(w, cmd::SetGun{0.1, std::nullopt, 55.0, std::nullopt, true}).ok);
    EXPECT_EQ(w.gun().center.x, 0.1);
    EXPECT_EQ(w.gun().center.y, 0.127);
    EXPECT_EQ(w.gun().total_power, 55.0);

    EXPECT_EQ(apply_command(w, cmd::Step{3}).code, ErrorCode::Protocol);
    EXPECT_EQ(apply_command(w, cmd::SetRunning{true}).code, ErrorCode::Protocol);

    const auto saved = apply_command(w, cmd::SaveState{});
    ASSERT_TRUE(saved.ok);
    ASSERT_TRUE(saved.document);
    EXPECT_EQ(load_state(*saved.document), w.state());
    EXPECT_EQ(apply_command(w, cmd::LoadState{"version = 9\n", std::nullopt}).code, ErrorCode::StateFormat);
    EXPECT_EQ(apply_command(w, cmd::LoadScheduler{ScheduleMode::Flow, "0,1\n0,2", std::nullopt}).code,
              ErrorCode::SchedulerFormat);
    EXPECT_EQ(apply_command(w, cmd::LoadScheduler{ScheduleMode::Flow, std::nullopt, "/nonexistent/x.csv"}).code,
              ErrorCode::Io);
    EXPECT_TRUE(apply_command(w, cmd::LoadScheduler{ScheduleMode::Flow, "0,10\n5,20", std::nullopt}).ok);
    EXPECT_EQ(apply_command(w, cmd::SetMode{ControlMode::TemperatureControl}).code, ErrorCode::SchedulerMismatch);
    EXPECT_EQ(apply_command(w, cmd::PlotControl{90.0, 10.0, std::nullopt, std::nullopt}).code,
              ErrorCode::InvalidArgument);
}

TEST(Hub, OrderedAndBounded) {
    TelemetryHub hub(4);
    for (std::uint64_t k = 0; k < 10; ++k) {
        TelemetryFrame f;
        f.seq = k;
        hub.publish(f);
    }
    EXPECT_EQ(hub.next_after(std::nullopt)->seq, 6u);
    EXPECT_EQ(hub.next_after(7)->seq, 8u);
    // Overwritten cursor skips to the oldest held frame.
    EXPECT_EQ(hub.next_after(1)->seq, 6u);
    EXPECT_FALSE(hub.next_after(9));
    const auto some = hub.frames_after(6, 2);
    ASSERT_EQ(some.size(), 2u);
    EXPECT_EQ(some[0].seq, 7u);
    EXPECT_EQ(some[1].seq, 8u);
    EXPECT_FALSE(hub.wait_next(9, std::chrono::milliseconds(20)));
    std::thread later([&] {
        std::this_thread::sleep_for(std::chrono::milliseconds(30));
        TelemetryFrame f;
        f.seq = 10;
        hub.publish(f);
    });
    const auto got = hub.wait_next(9, std::chrono::milliseconds(5000));
    later.join();
    ASSERT_TRUE(got);
    EXPECT_EQ(got->seq, 10u);
    hub.close();
    EXPECT_TRUE(hub.closed());
    EXPECT_FALSE(hub.wait_next(10, std::chrono::milliseconds(5000)));
}

TEST(Http, SnapshotAndCommands) {
    Service svc(World(small_world()), test_options());
    const int port = svc.listen();
    httplib::Client cli("127.0.0.1", port);

    int status = 0;
    const auto snap = get(cli, "/api/v1/snapshot", &status);
    EXPECT_EQ(status, 200);
    EXPECT_EQ(snap.at("v"), 1);
    EXPECT_EQ(snap.at("running"), false);
    EXPECT_TRUE(snap.at("latest_frame").is_null());
    ASSERT_EQ(snap.at("regions").size(), 5u);
    for (const auto& r : snap.at("regions")) {
        EXPECT_EQ(r.at("x_min"), 0);
        EXPECT_EQ(r.at("x_max"), 32);
        EXPECT_EQ(r.at("y_min"), 0);
        EXPECT_EQ(r.at("y_max"), 24);
    }
    EXPECT_EQ(get(cli, "/api/v1/snapshot"), snap);

    EXPECT_EQ(post(cli, {{"v", 1}, {"cmd", "SetChannelRole"}, {"channel", 0}, {"role", "outlet"}}, &status).at("ok"), true);
    EXPECT_EQ(status, 200);
    post(cli, {{"v", 1}, {"cmd", "SetChannelRole"}, {"channel", 2}, {"role", "inlet"}});
    const auto flow = post(cli, {{"v", 1}, {"cmd", "SetFlow"}, {"channel", 2}, {"flow", 400}});
    EXPECT_EQ(flow.at("applied_flow"), 300.0);

    const auto violation = post(cli, {{"v", 1}, {"cmd", "SetChannelRole"}, {"channel", 0}, {"role", "closed"}}, &status);
    EXPECT_EQ(status, 200);
    EXPECT_EQ(violation.at("ok"), false);
    EXPECT_EQ(violation.at("error").at("code"), "ArrangementViolation");

    post(cli, {{"v", 1}, {"cmd", "SetGains"}, {"region", 3}, {"kp", 10.0}, {"ki", 0.1}, {"kd", 0.0}});
    const auto after = get(cli, "/api/v1/snapshot");
    EXPECT_EQ(after.at("regions")[3].at("gains").at("kp"), 10.0);
    EXPECT_EQ(after.at("regions")[3].at("gains").at("ki"), 0.1);
    EXPECT_EQ(after.at("channels")[2].at("commanded"), 300.0);

    auto raw = cli.Post("/api/v1/command", "{oops", "application/json");
    ASSERT_TRUE(raw);
    EXPECT_EQ(raw->status, 400);
    EXPECT_EQ(json::parse(raw->body).at("error").at("code"), "ProtocolError");
    post(cli, {{"v", 1}, {"cmd", "Launch"}}, &status);
    EXPECT_EQ(status, 400);

    const auto stepped = post(cli, {{"v", 1}, {"cmd", "Step"}, {"cycles", 7}});
    EXPECT_EQ(stepped.at("ran"), 7);
    const auto frames = get(cli, "/api/v1/frames?after=1&max=3");
    ASSERT_EQ(frames.at("frames").size(), 3u);
    EXPECT_EQ(frames.at("frames")[0].at("seq"), 2);
    EXPECT_EQ(frames.at("frames")[2].at("seq"), 4);
    EXPECT_EQ(frames.at("frames")[0].at("frame").at("pixels").size(), 768u);
    EXPECT_EQ(get(cli, "/api/v1/frames").at("frames").size(), 7u);
    get(cli, "/api/v1/frames?max=lots", &status);
    EXPECT_EQ(status, 400);
    EXPECT_EQ(get(cli, "/api/v1/snapshot").at("latest_frame").at("seq"), 6);
    svc.stop();
}

TEST(Http, StreamsAreOrderedAndShared) {
    Service svc(World(small_world()), test_options());
    const int port = svc.listen();
    const int wanted = 12;

    auto subscribe = [port, wanted](const std::string& path, bool sse) {
        std::vector<std::uint64_t> seqs;
        std::vector<double> means;
        std::string buffer;
        httplib::Client cli("127.0.0.1", port);
        cli.set_read_timeout(std::chrono::seconds(30));
        cli.Get(path, [&](const char* data, std::size_t len) {
            buffer.append(data, len);
            const std::string sep = sse ? "\n\n" : "\n";
            std::size_t pos;
            while ((pos = buffer.find(sep)) != std::string::npos) {
                std::string msg = buffer.substr(0, pos);
                buffer.erase(0, pos + sep.size());
                if (sse) {
                    EXPECT_EQ(msg.rfind("data: ", 0), 0u);
                    msg.erase(0, 6);
                }
                const auto f = json::parse(msg);
                seqs.push_back(f.at("seq").get<std::uint64_t>());
                means.push_back(f.at("regions")[0].at("mean").get<double>());
            }
            return static_cast<int>(seqs.size()) < wanted;
        });
        return std::make_pair(seqs, means);
    };

    // One frame exists before anyone connects; the rest arrive while streaming.
    svc.apply(cmd::Step{1});
    std::pair<std::vector<std::uint64_t>, std::vector<double>> a, b, c;
    std::thread ta([&] { a = subscribe("/api/v1/telemetry?after=0", true); });
    std::thread tb([&] { b = subscribe("/api/v1/telemetry?after=0", true); });
    std::thread tc([&] { c = subscribe("/api/v1/telemetry.ndjson?after=0", false); });
    for (int k = 0; k < wanted; ++k) {
        svc.apply(cmd::Step{1});
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ta.join();
    tb.join();
    tc.join();
    svc.stop();

    ASSERT_EQ(a.first.size(), static_cast<std::size_t>(wanted));
    for (int k = 0; k < wanted; ++k) EXPECT_EQ(a.first[static_cast<std::size_t>(k)], static_cast<std::uint64_t>(k + 1));
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, c);
}

TEST(Http, RunningLoopPublishesAndStops) {
    auto opts = test_options();
    opts.realtime_factor = 200.0;
    Service svc(World(small_world()), opts);
    const int port = svc.listen();
    httplib::Client cli("127.0.0.1", port);
    EXPECT_EQ(post(cli, {{"v", 1}, {"cmd", "SetRunning"}, {"running", true}}).at("ok"), true);
    std::this_thread::sleep_for(std::chrono::milliseconds(300));
    post(cli, {{"v", 1}, {"cmd", "SetRunning"}, {"running", false}});
    const auto s1 = get(cli, "/api/v1/snapshot");
    EXPECT_EQ(s1.at("running"), false);
    EXPECT_GT(s1.at("cycles").get<int>(), 5);
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    EXPECT_EQ(get(cli, "/api/v1/snapshot").at("cycles"), s1.at("cycles"));
    svc.stop();
    EXPECT_FALSE(svc.apply(cmd::Step{1}).ok);
}

// The same random script sent over HTTP and applied to a twin world directly.
TEST(Http, DifferentialAgainstDirectCalls) {
    std::mt19937_64 rng(2718);
    for (int script = 0; script < 5; ++script) {
        Service svc(World(small_world(10 + script)), test_options());
        const int port = svc.listen();
        httplib::Client cli("127.0.0.1", port);
        World direct(small_world(10 + script));
        std::vector<TelemetryFrame> direct_frames;

        std::uniform_int_distribution<int> kind(0, 9);
        std::uniform_int_distribution<int> chan(-1, 5);
        std::uniform_int_distribution<int> role(0, 2);
        std::uniform_real_distribution<double> flow(-20.0, 350.0);
        std::uniform_int_distribution<int> px(0, 32);
        std::uniform_int_distribution<int> py(0, 24);
        std::uniform_real_distribution<double> g(0.0, 20.0);
        for (int k = 0; k < 50; ++k) {
            Command c;
            switch (kind(rng)) {
            case 0:
            case 1: c = cmd::SetChannelRole{chan(rng), static_cast<ChannelRole>(role(rng))}; break;
            case 2:
            case 3: c = cmd::SetFlow{chan(rng), flow(rng)}; break;
            case 4: {
                const int x0 = px(rng), y0 = py(rng);
                c = cmd::SetRegion{Region{static_cast<int>(rng() % 6), x0, x0 + 1 + static_cast<int>(rng() % 4), y0,
                                          y0 + 1 + static_cast<int>(rng() % 4), 0},
                                   std::nullopt};
                break;
            }
            case 5: c = cmd::SetGains{static_cast<int>(rng() % 6), {g(rng), g(rng) / 100.0, 0.0}}; break;
            case 6: c = cmd::SetSetpoint{static_cast<int>(rng() % 5), 20.0 + g(rng) * 3.0}; break;
            case 7: c = cmd::SetMode{rng() % 2 ? ControlMode::TemperatureControl : ControlMode::MfcDirect}; break;
            case 8: c = cmd::SetGun{0.02 + 0.2 * (rng() % 100) / 100.0, std::nullopt, g(rng) * 4.0, std::nullopt, true}; break;
            default: c = cmd::Step{1 + static_cast<int>(rng() % 4)}; break;
            }
            const auto over_http = parse_ack(post(cli, command_to_json(c)));
            Ack local;
            if (const auto* s = std::get_if<cmd::Step>(&c)) {
                for (int n = 0; n < s->cycles; ++n) direct_frames.push_back(direct.cycle());
                local.ran = s->cycles;
            } else {
                local = apply_command(direct, c);
            }
            ASSERT_EQ(over_http, local) << script << ":" << k << " " << command_to_json(c).dump();
        }
        auto snap = get(cli, "/api/v1/snapshot");
        EXPECT_EQ(snap.at("running"), false);
        const auto latest = snap.at("latest_frame");
        snap.erase("running");
        snap.erase("latest_frame");
        EXPECT_EQ(snap, world_to_json(direct));
        if (!direct_frames.empty()) EXPECT_EQ(latest, frame_to_json(direct_frames.back()));
        const auto frames = get(cli, "/api/v1/frames?max=1000").at("frames");
        const std::size_t held = std::min<std::size_t>(direct_frames.size(), 64);
        ASSERT_EQ(frames.size(), held);
        for (std::size_t i = 0; i < held; ++i)
            EXPECT_EQ(frames[i], frame_to_json(direct_frames[direct_frames.size() - held + i]));
        svc.stop();
    }
}
