#include "jettwin/control.hpp"
#include "jettwin/error.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace jettwin;

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

// Analytic first-order-plus-dead-time response to one input step.
std::vector<StepRecordSample> fopdt_record(double k, double tau, double theta, double u0, double u1,
                                           double y0, double t_step, double t_end, double dt = 1.0) {
    std::vector<StepRecordSample> rec;
    for (double t = 0.0; t <= t_end + 1e-9; t += dt) {
        const double u = t < t_step ? u0 : u1;
        const double lag = t - t_step - theta;
        const double y = lag > 0.0 ? y0 + k * (u1 - u0) * (1.0 - std::exp(-lag / tau)) : y0;
        rec.push_back({t, u, y});
    }
    return rec;
}

// Closed-form least-squares line through (x, y), evaluated at x = 0.
double line_at_zero(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return (sy - slope * sx) / n;
}

} // namespace

TEST(RegionMean, UniformFrame) {
    IrFrame f;
    f.pixels.fill(80.0);
    EXPECT_EQ(region_mean(f, Region{}), 80.0);
    EXPECT_EQ(region_mean(f, region_around(0, 5, 5, 0)), 80.0);
}

TEST(RegionMean, NineValueBlock) {
    IrFrame f;
    f.pixels.fill(-1000.0);
    const auto r = region_around(0, 16, 12, 2);
    EXPECT_EQ(r.x_min, 15);
    EXPECT_EQ(r.x_max, 18);
    EXPECT_EQ(r.y_min, 11);
    EXPECT_EQ(r.y_max, 14);
    int v = 99;
    for (int y = 11; y < 14; ++y)
        for (int x = 15; x < 18; ++x) f.at(x, y) = v++;
    EXPECT_DOUBLE_EQ(region_mean(f, r), 103.0);
}

TEST(RegionMean, MatchesBruteForceOnRandomRegions) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> temp(20.0, 120.0);
    IrFrame f;
    for (double& p : f.pixels) p = temp(rng);

    double full = 0.0;
    for (double p : f.pixels) full += p;
    EXPECT_NEAR(region_mean(f, Region{}), full / 768.0, 1e-12);

    std::uniform_int_distribution<int> xs(0, 32);
    std::uniform_int_distribution<int> ys(0, 24);
    for (int k = 0; k < 500; ++k) {
        int x0 = xs(rng), x1 = xs(rng), y0 = ys(rng), y1 = ys(rng);
        if (x0 == x1 || y0 == y1) continue;
        Region r{0, std::min(x0, x1), std::max(x0, x1), std::min(y0, y1), std::max(y0, y1), 0};
        double sum = 0.0;
        int count = 0;
        for (int i = 0; i < 768; ++i) {
            const int x = i % 32, y = i / 32;
            if (x >= r.x_min && x < r.x_max && y >= r.y_min && y < r.y_max) {
                sum += f.pixels[static_cast<std::size_t>(i)];
                ++count;
            }
        }
        ASSERT_NEAR(region_mean(f, r), sum / count, 1e-12);
    }
}

TEST(RegionMean, DegenerateRegionsRejected) {
    IrFrame f;
    EXPECT_EQ(code_of([&] { region_mean(f, Region{0, 4, 4, 0, 24, 0}); }), ErrorCode::InvalidRegion);
    EXPECT_EQ(code_of([&] { region_mean(f, Region{0, 0, 33, 0, 24, 0}); }), ErrorCode::InvalidRegion);
    EXPECT_EQ(code_of([&] { region_mean(f, Region{0, 0, 32, -1, 24, 0}); }), ErrorCode::InvalidRegion);
    EXPECT_EQ(code_of([&] { region_around(0, 0, 5, 0); }), ErrorCode::InvalidRegion);
}

TEST(Pid, SetpointReachedGivesBias) {
    PidLoop loop{{10.46, 0.11, 0.5}, 75.0, 0.0, 0.0, 75.0};
    const auto s = pid_step(loop, 75.0, 1.0);
    EXPECT_EQ(s.output, 75.0);
    EXPECT_EQ(s.loop, loop);
}

TEST(Pid, ProportionalOnly) {
    PidLoop loop{{10.0, 0.0, 0.0}, 50.0};
    EXPECT_DOUBLE_EQ(pid_step(loop, 52.0, 1.0).output, 20.0);
    // Too cold asks for less flow, clamped at zero.
    EXPECT_EQ(pid_step(loop, 48.0, 1.0).output, 0.0);
    EXPECT_DOUBLE_EQ(pid_step(loop, 48.0, 1.0).raw, -20.0);
}

TEST(Pid, FullLawAgainstHandEvaluation) {
    PidLoop loop{{2.0, 0.5, 3.0}, 60.0, 4.0, 1.0, 30.0};
    const auto s = pid_step(loop, 62.5, 0.5);
    const double e = 2.5;
    const double integ = 4.0 + e * 0.5;
    const double expect = 30.0 + 2.0 * e + 0.5 * integ + 3.0 * (e - 1.0) / 0.5;
    EXPECT_DOUBLE_EQ(s.raw, expect);
    EXPECT_DOUBLE_EQ(s.output, expect);
    EXPECT_DOUBLE_EQ(s.loop.integrator, integ);
    EXPECT_DOUBLE_EQ(s.loop.last_error, e);
}

TEST(Pid, AntiWindupHoldsTheIntegrator) {
    PidLoop loop{{10.46, 0.11, 0.0}, 70.0};
    double peak = 0.0;
    std::vector<double> integ;
    for (int k = 0; k < 1000; ++k) {
        const auto s = pid_step(loop, 100.0, 1.0);
        ASSERT_EQ(s.output, 300.0);
        loop = s.loop;
        peak = std::max(peak, std::abs(loop.integrator));
        integ.push_back(loop.integrator);
    }
    // Plateau: the last 990 steps leave it untouched.
    for (std::size_t k = 10; k < integ.size(); ++k) ASSERT_EQ(integ[k], integ[9]);
    // kp*e alone is 313.8 > 300, so not even the first update is kept.
    EXPECT_EQ(peak, 0.0);

    // Once the output is back inside the limits a cold error integrates again.
    loop.output_bias = 100.0;
    const auto back = pid_step(loop, 69.0, 1.0);
    EXPECT_LT(back.loop.integrator, loop.integrator);
}

TEST(Pid, IntegratesWhenUpdateLeadsBackInside) {
    PidLoop loop{{1.0, 1.0, 0.0}, 50.0, 400.0, 0.0, 0.0};
    // raw = -5 + (400 - 5) > 300 but the update shrinks it, so it is kept.
    const auto s = pid_step(loop, 45.0, 1.0);
    EXPECT_EQ(s.output, 300.0);
    EXPECT_DOUBLE_EQ(s.loop.integrator, 395.0);
}

TEST(Pid, OutputAlwaysWithinLimits) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> temp(0.0, 200.0);
    std::uniform_real_distribution<double> gain(0.0, 50.0);
    PidLoop loop{{gain(rng), gain(rng) / 10.0, gain(rng) / 10.0}, 80.0, 0.0, 0.0, 50.0};
    for (int k = 0; k < 20000; ++k) {
        const auto s = pid_step(loop, temp(rng), 1.0);
        ASSERT_GE(s.output, 0.0);
        ASSERT_LE(s.output, 300.0);
        ASSERT_TRUE(std::isfinite(s.loop.integrator));
        loop = s.loop;
    }
}

TEST(Pid, RejectsNonPositiveDtAndBadGains) {
    PidLoop loop;
    EXPECT_THROW(pid_step(loop, 1.0, 0.0), Error);
    EXPECT_THROW(pid_step(loop, 1.0, -1.0), Error);
    EXPECT_THROW((PidGains{-1.0, 0.0, 0.0}.validate()), Error);
    EXPECT_THROW((PidGains{1.0, std::nan(""), 0.0}.validate()), Error);
    EXPECT_NO_THROW((PidGains{10.46, 0.11, 0.0}.validate()));
}

TEST(Decouple, DiagonalIsIdentity) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-100.0, 100.0);
    for (int n = 1; n <= 6; ++n) {
        std::vector<std::vector<double>> k(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n), 0.0));
        for (int i = 0; i < n; ++i) k[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = -0.01 - std::abs(u(rng)) / 100.0;
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> d(static_cast<std::size_t>(n));
            for (double& v : d) v = u(rng);
            ASSERT_EQ(decouple(d, k), d);
        }
    }
}

TEST(Decouple, TwoByTwoHandEvaluation) {
    const std::vector<std::vector<double>> k{{-0.14, -0.05}, {-0.05, -0.14}};
    const std::vector<double> d{10.0, 0.0};
    const auto out = decouple(d, k);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_DOUBLE_EQ(out[0], 10.0);
    EXPECT_NEAR(out[1], -3.5714285714285716, 1e-12);
}

TEST(Decouple, ThreeByThreeFormula) {
    const std::vector<std::vector<double>> k{{-0.2, 0.03, -0.01}, {-0.04, -0.1, 0.02}, {0.0, -0.05, -0.3}};
    const std::vector<double> d{5.0, -2.0, 7.0};
    const auto out = decouple(d, k);
    for (int i = 0; i < 3; ++i) {
        double expect = d[static_cast<std::size_t>(i)];
        for (int j = 0; j < 3; ++j) {
            if (j != i) expect -= k[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] / k[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] * d[static_cast<std::size_t>(j)];
        }
        EXPECT_NEAR(out[static_cast<std::size_t>(i)], expect, 1e-12);
    }
}

TEST(Decouple, Errors) {
    const std::vector<double> d{1.0, 2.0};
    EXPECT_EQ(code_of([&] { decouple(d, {{0.0, 0.1}, {0.1, 1.0}}); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([&] { decouple(d, {{1.0, 1.0}, {1.0, 1.0}}); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([&] { decouple(d, {{1.0, 0.0}}); }), ErrorCode::DimensionMismatch);
    EXPECT_EQ(code_of([&] { decouple(d, {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}); }),
              ErrorCode::DimensionMismatch);
}

TEST(FitFopdt, NoiselessRoundTrip) {
    const auto rec = fopdt_record(-0.14, 400.0, 10.0, 100.0, 150.0, 71.0, 100.0, 3600.0);
    const auto fit = fit_fopdt(rec);
    EXPECT_EQ(fit.method, FitMethod::TwoPoint28_63);
    EXPECT_NEAR(fit.model.gain, -0.14, 0.05 * 0.14);
    EXPECT_NEAR(fit.model.time_constant, 400.0, 0.05 * 400.0);
    EXPECT_NEAR(fit.model.dead_time, 10.0, 0.05 * 10.0);
    EXPECT_EQ(fit.step_time, 100.0);
    EXPECT_EQ(fit.input_before, 100.0);
    EXPECT_EQ(fit.input_after, 150.0);
}

TEST(FitFopdt, RandomNoiselessRoundTrips) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> kd(0.05, 2.0);
    std::uniform_real_distribution<double> taud(50.0, 600.0);
    std::uniform_real_distribution<double> thetad(5.0, 60.0);
    for (int k = 0; k < 50; ++k) {
        const double gain = (k % 2 ? -1.0 : 1.0) * kd(rng);
        const double tau = taud(rng);
        const double theta = thetad(rng);
        const auto rec = fopdt_record(gain, tau, theta, 40.0, 90.0, 50.0, 50.0, 50.0 + theta + 12.0 * tau, 0.5);
        const auto fit = fit_fopdt(rec);
        ASSERT_NEAR(fit.model.gain, gain, 0.05 * std::abs(gain));
        ASSERT_NEAR(fit.model.time_constant, tau, 0.05 * tau);
        ASSERT_NEAR(fit.model.dead_time, theta, 0.05 * theta + 0.5) << "tau " << tau;
    }
}

TEST(FitFopdt, NoisyRoundTripAfterSmoothing) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto rec = fopdt_record(-0.14, 400.0, 10.0, 100.0, 150.0, 71.0, 100.0, 4000.0);
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> noise(0.0, 0.5);
        std::vector<double> y;
        for (auto& s : rec) y.push_back(s.output + noise(rng));
        const auto smooth = savgol_filter(y, 10, 1);
        for (std::size_t i = 0; i < rec.size(); ++i) rec[i].output = smooth[i];
        const auto fit = fit_fopdt(rec);
        EXPECT_NEAR(fit.model.gain, -0.14, 0.15 * 0.14) << seed;
        EXPECT_NEAR(fit.model.time_constant, 400.0, 0.15 * 400.0) << seed;
    }
}

TEST(FitFopdt, ReferenceBumpGain) {
    const auto rec = fopdt_record(-0.14, 400.0, 0.0, 100.0, 150.0, 71.0, 300.0, 8000.0);
    const auto fit = fit_fopdt(rec);
    EXPECT_NEAR(fit.output_before, 71.0, 1e-9);
    EXPECT_NEAR(fit.output_after, 64.0, 1e-3);
    EXPECT_NEAR(fit.model.gain, -7.0 / 50.0, 1e-4);
}

TEST(FitFopdt, ErrorPaths) {
    auto flat = fopdt_record(-0.14, 400.0, 0.0, 100.0, 100.0, 71.0, 100.0, 2000.0);
    EXPECT_EQ(code_of([&] { fit_fopdt(flat); }), ErrorCode::NoStepDetected);
    EXPECT_EQ(code_of([&] { fit_fopdt(std::span(flat).first(3)); }), ErrorCode::NoStepDetected);

    // Still moving at the end of the record.
    const auto short_run = fopdt_record(-0.14, 400.0, 0.0, 100.0, 150.0, 71.0, 100.0, 500.0);
    EXPECT_EQ(code_of([&] { fit_fopdt(short_run); }), ErrorCode::NonSettling);

    auto two_steps = fopdt_record(-0.14, 400.0, 0.0, 100.0, 150.0, 71.0, 100.0, 3000.0);
    for (auto& s : two_steps)
        if (s.t >= 2000.0) s.input = 120.0;
    EXPECT_EQ(code_of([&] { fit_fopdt(two_steps); }), ErrorCode::InvalidArgument);

    auto no_response = fopdt_record(0.0, 400.0, 0.0, 100.0, 150.0, 71.0, 100.0, 3000.0);
    EXPECT_EQ(code_of([&] { fit_fopdt(no_response); }), ErrorCode::NoStepDetected);
}

TEST(DirectSynthesis, ReferenceGains) {
    const auto g = direct_synthesis_tune({-0.14, 400.0, 0.0}, 273.3);
    // 400 / (0.14 * 273.3) = 10.4542
    EXPECT_NEAR(g.kp, 10.4542, 1e-4);
    EXPECT_NEAR(g.kp, 10.46, 0.01);
    EXPECT_NEAR(g.ki, g.kp / 400.0, 1e-15);
    EXPECT_NEAR(g.ki, 0.026136, 1e-6);
    EXPECT_EQ(g.kd, 0.0);
}

TEST(DirectSynthesis, AlgebraicRatios) {
    const FopdtModel base{-0.3, 250.0, 0.0};
    const auto g0 = direct_synthesis_tune(base, 100.0);
    const auto g_tau = direct_synthesis_tune({-0.3, 500.0, 0.0}, 100.0);
    EXPECT_NEAR(g_tau.kp, 2.0 * g0.kp, 1e-12);
    EXPECT_NEAR(g_tau.ki, g0.ki, 1e-15);
    const auto g_theta = direct_synthesis_tune({-0.3, 250.0, 100.0}, 100.0);
    EXPECT_NEAR(g_theta.kp, 0.5 * g0.kp, 1e-12);
    // Sign of K does not matter.
    EXPECT_EQ(direct_synthesis_tune({0.3, 250.0, 0.0}, 100.0), g0);
}

TEST(DirectSynthesis, Errors) {
    EXPECT_THROW(direct_synthesis_tune({-0.14, 400.0, 0.0}, 0.0), Error);
    EXPECT_THROW(direct_synthesis_tune({-0.14, 0.0, 0.0}, 100.0), Error);
    EXPECT_THROW(direct_synthesis_tune({-0.14, 400.0, -1.0}, 100.0), Error);
    EXPECT_THROW(direct_synthesis_tune({0.0, 400.0, 0.0}, 100.0), Error);
}

TEST(Savgol, ConstantSeriesUnchanged) {
    const std::vector<double> c(37, 4.25);
    const auto out = savgol_filter(c);
    for (double v : out) EXPECT_NEAR(v, 4.25, 1e-12);
}

TEST(Savgol, ReproducesPolynomialsUpToOrder) {
    for (int order = 0; order <= 3; ++order) {
        std::vector<double> coeff{1.5, -0.25, 0.03, -0.001};
        std::vector<double> s;
        for (int i = 0; i < 60; ++i) {
            double v = 0.0, p = 1.0;
            for (int c = 0; c <= order; ++c) {
                v += coeff[static_cast<std::size_t>(c)] * p;
                p *= i;
            }
            s.push_back(v);
        }
        for (int window : {order + 1, 5, 10, 11}) {
            if (window < order + 1) continue;
            const auto out = savgol_filter(s, window, order);
            for (std::size_t i = 0; i < s.size(); ++i) ASSERT_NEAR(out[i], s[i], 1e-9 * std::max(1.0, std::abs(s[i])));
        }
    }
}

TEST(Savgol, MatchesLeastSquaresLineOracle) {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> s;
    for (int i = 0; i < 80; ++i) s.push_back(0.1 * i + noise(rng));
    const int w = 10;
    const auto out = savgol_filter(s, w, 1);
    const int n = static_cast<int>(s.size());
    for (int i = 0; i < n; ++i) {
        // Window [i-4, i+5], clipped at the ends.
        std::vector<double> x, y;
        for (int j = std::max(0, i - 4); j <= std::min(n - 1, i + 5); ++j) {
            x.push_back(j - i);
            y.push_back(s[static_cast<std::size_t>(j)]);
        }
        ASSERT_NEAR(out[static_cast<std::size_t>(i)], line_at_zero(x, y), 1e-9) << i;
    }
}

TEST(Savgol, Preconditions) {
    const std::vector<double> s(20, 1.0);
    EXPECT_NO_THROW(savgol_filter(s, 10, 1));
    EXPECT_EQ(code_of([&] { savgol_filter(s, 2, 5); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([&] { savgol_filter(std::span(s).first(9), 10, 1); }), ErrorCode::InvalidArgument);
}

TEST(ControlMode, TextRoundTrip) {
    for (auto m : {ControlMode::MfcDirect, ControlMode::TemperatureControl}) {
        EXPECT_EQ(parse_control_mode(to_string(m)), m);
    }
    EXPECT_THROW(parse_control_mode("auto"), Error);
}
