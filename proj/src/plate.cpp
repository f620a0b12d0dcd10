#include "jettwin/plate.hpp"

#include "jettwin/error.hpp"
#include "jettwin/kv_config.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <numeric>

namespace jettwin {

namespace {

constexpr double kStefanBoltzmann = 5.670374419e-8;
constexpr double kKelvin = 273.15;
constexpr double kStabilityFraction = 0.4;

std::string lower(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

double gaussian_footprint(double r2, double sigma) {
    if (std::isinf(sigma)) return 1.0;
    return std::exp(-r2 / (2.0 * sigma * sigma));
}

double radiative_loss(double temp, double ambient, double emissivity) {
    const double t = temp + kKelvin;
    const double ta = ambient + kKelvin;
    return emissivity * kStefanBoltzmann * (t * t * t * t - ta * ta * ta * ta);
}

} // namespace

std::string_view to_string(ChannelRole role) noexcept {
    switch (role) {
    case ChannelRole::Inlet: return "inlet";
    case ChannelRole::Outlet: return "outlet";
    case ChannelRole::Closed: return "closed";
    }
    return "closed";
}

ChannelRole parse_role(std::string_view text) {
    const auto t = lower(trim(text));
    if (t == "inlet") return ChannelRole::Inlet;
    if (t == "outlet") return ChannelRole::Outlet;
    if (t == "closed") return ChannelRole::Closed;
    fail(ErrorCode::InvalidArgument, "unknown channel role '" + std::string(text) + "'");
}

std::string_view to_string(PlateMaterial material) noexcept {
    switch (material) {
    case PlateMaterial::Steel: return "steel";
    case PlateMaterial::Aluminum: return "aluminum";
    case PlateMaterial::Copper: return "copper";
    case PlateMaterial::Stainless: return "stainless";
    }
    return "steel";
}

PlateMaterial parse_material(std::string_view text) {
    const auto t = lower(trim(text));
    if (t == "steel") return PlateMaterial::Steel;
    if (t == "aluminum" || t == "aluminium") return PlateMaterial::Aluminum;
    if (t == "copper") return PlateMaterial::Copper;
    if (t == "stainless") return PlateMaterial::Stainless;
    fail(ErrorCode::InvalidArgument, "unknown plate material '" + std::string(text) + "'");
}

PlateConfig PlateConfig::for_material(PlateMaterial material) {
    PlateConfig cfg;
    switch (material) {
    case PlateMaterial::Steel:
        break;
    case PlateMaterial::Aluminum: // 6061, 1/2 in sheet
        cfg.density = 2700.0;
        cfg.specific_heat = 896.0;
        cfg.conductivity = 167.0;
        cfg.thickness = 0.0127;
        break;
    case PlateMaterial::Copper: // 101, 12 x 12 x 1/8 in
        cfg.density = 8940.0;
        cfg.specific_heat = 385.0;
        cfg.conductivity = 391.0;
        cfg.length_x = cfg.length_y = 0.3048;
        break;
    case PlateMaterial::Stainless: // 304
        cfg.density = 8000.0;
        cfg.specific_heat = 500.0;
        cfg.conductivity = 16.2;
        break;
    }
    return cfg;
}

void PlateConfig::validate() const {
    if (grid_nx <= 0 || grid_ny <= 0 || grid_nx % 32 != 0 || grid_ny % 24 != 0) {
        fail(ErrorCode::InvalidArgument,
             "plate grid must be a positive multiple of 32 x 24, got " +
                 std::to_string(grid_nx) + " x " + std::to_string(grid_ny));
    }
    const double positive[] = {length_x, length_y, thickness, density, specific_heat,
                               conductivity};
    for (double v : positive) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            fail(ErrorCode::InvalidArgument, "plate physical constants must be positive");
        }
    }
    if (!(natural_h >= 0.0) || !std::isfinite(ambient_temp) || !std::isfinite(coolant_temp)) {
        fail(ErrorCode::InvalidArgument, "invalid ambient/coolant/natural_h settings");
    }
    if (thickness > 0.1 * std::min(length_x, length_y)) {
        fail(ErrorCode::InvalidArgument, "thin-plate model requires thickness << length");
    }
    if (radiation && !(emissivity > 0.0 && emissivity <= 1.0)) {
        fail(ErrorCode::InvalidArgument, "emissivity must be in (0, 1]");
    }
}

double Field2D::min() const { return *std::min_element(data.begin(), data.end()); }
double Field2D::max() const { return *std::max_element(data.begin(), data.end()); }
double Field2D::mean() const {
    return std::accumulate(data.begin(), data.end(), 0.0) / static_cast<double>(data.size());
}

ThermalGrid ThermalGrid::uniform(const PlateConfig& cfg, double temp) {
    return ThermalGrid{Field2D(cfg.grid_nx, cfg.grid_ny, temp), 0.0};
}

void HeatGun::validate() const {
    if (!(total_power >= 0.0) || !std::isfinite(total_power)) {
        fail(ErrorCode::InvalidArgument, "heat gun power must be >= 0");
    }
    if (!(spread_sigma > 0.0) || !std::isfinite(spread_sigma)) {
        fail(ErrorCode::InvalidArgument, "heat gun spread must be > 0");
    }
}

Vec2 pixel_center(const PlateConfig& cfg, double px, double py) {
    return {(px + 0.5) * cfg.length_x / 32.0, (py + 0.5) * cfg.length_y / 24.0};
}

JetGeometry JetGeometry::default_layout(const PlateConfig& cfg, int channel_count) {
    if (channel_count < 1 || channel_count > 9) {
        fail(ErrorCode::InvalidArgument, "channel count must be in [1, 9]");
    }
    JetGeometry geom;
    if (channel_count <= 5) {
        const double mid = (channel_count - 1) / 2.0;
        for (int k = 0; k < channel_count; ++k) {
            const double col = 16.0 + 6.0 * (k - mid);
            geom.channel_positions.push_back(pixel_center(cfg, std::floor(col), 12.0));
        }
    } else {
        const int cols[] = {7, 16, 25};
        const int rows[] = {5, 12, 19};
        for (int k = 0; k < channel_count; ++k) {
            geom.channel_positions.push_back(pixel_center(cfg, cols[k % 3], rows[k / 3]));
        }
    }
    return geom;
}

void JetGeometry::validate(const PlateConfig& cfg) const {
    for (const auto& p : channel_positions) {
        if (p.x < 0.0 || p.x > cfg.length_x || p.y < 0.0 || p.y > cfg.length_y) {
            fail(ErrorCode::InvalidArgument, "jet position outside plate bounds");
        }
    }
    if (!(jet_sigma > 0.0) || !(h_ref > 0.0) || !(q_ref > 0.0) || !(flow_exponent > 0.0) ||
        flow_exponent > 1.0 || !(outlet_h_fraction >= 0.0) || outlet_h_fraction > 1.0) {
        fail(ErrorCode::InvalidArgument, "invalid jet geometry parameters");
    }
}

JetFootprints::JetFootprints(const JetGeometry& geom, const PlateConfig& cfg)
    : geom_(geom), cfg_(cfg) {
    for (const auto& c : geom.channel_positions) {
        Field2D f(cfg.grid_nx, cfg.grid_ny, 0.0);
        for (int j = 0; j < cfg.grid_ny; ++j) {
            const double ry = cfg.cell_y(j) - c.y;
            for (int i = 0; i < cfg.grid_nx; ++i) {
                const double rx = cfg.cell_x(i) - c.x;
                f(i, j) = gaussian_footprint(rx * rx + ry * ry, geom.jet_sigma);
            }
        }
        unit_.push_back(std::move(f));
    }
}

Field2D JetFootprints::forced_h(std::span<const WyeChannel> channels) const {
    Field2D h(cfg_.grid_nx, cfg_.grid_ny, 0.0);
    double total_inlet = 0.0;
    for (const auto& ch : channels) {
        if (ch.role == ChannelRole::Inlet) total_inlet += std::max(0.0, ch.mfc.actual_flow);
    }
    for (const auto& ch : channels) {
        double amplitude = 0.0;
        if (ch.role == ChannelRole::Inlet) {
            amplitude = geom_.h_ref * std::pow(std::max(0.0, ch.mfc.actual_flow) / geom_.q_ref,
                                               geom_.flow_exponent);
        } else if (ch.role == ChannelRole::Outlet) {
            amplitude = geom_.outlet_h_fraction * geom_.h_ref *
                        std::pow(total_inlet / geom_.q_ref, geom_.flow_exponent);
        }
        if (amplitude <= 0.0) continue;
        if (ch.id < 0 || static_cast<std::size_t>(ch.id) >= unit_.size()) {
            fail(ErrorCode::UnknownChannel, "no jet position for channel " + std::to_string(ch.id));
        }
        const auto& u = unit_[static_cast<std::size_t>(ch.id)].data;
        for (std::size_t k = 0; k < u.size(); ++k) h.data[k] += amplitude * u[k];
    }
    return h;
}

Field2D forced_h_field(std::span<const WyeChannel> channels, const JetGeometry& geom,
                       const PlateConfig& cfg) {
    return JetFootprints(geom, cfg).forced_h(channels);
}

Field2D jet_h_field(std::span<const WyeChannel> channels, const JetGeometry& geom,
                    const PlateConfig& cfg) {
    Field2D h = forced_h_field(channels, geom, cfg);
    for (double& v : h.data) v += cfg.natural_h;
    return h;
}

Field2D heat_gun_flux(const HeatGun& gun, const PlateConfig& cfg) {
    gun.validate();
    Field2D q(cfg.grid_nx, cfg.grid_ny, 0.0);
    if (!gun.enabled || gun.total_power == 0.0) return q;
    const double s2 = gun.spread_sigma * gun.spread_sigma;
    const double peak = gun.total_power / (2.0 * std::numbers::pi * s2);
    for (int j = 0; j < cfg.grid_ny; ++j) {
        const double ry = cfg.cell_y(j) - gun.center.y;
        for (int i = 0; i < cfg.grid_nx; ++i) {
            const double rx = cfg.cell_x(i) - gun.center.x;
            q(i, j) = peak * std::exp(-(rx * rx + ry * ry) / (2.0 * s2));
        }
    }
    return q;
}

PlantStepper::PlantStepper(std::span<const WyeChannel> channels, const HeatGun& gun,
                           const PlateConfig& cfg, const JetGeometry& geom)
    : PlantStepper(forced_h_field(channels, geom, cfg), heat_gun_flux(gun, cfg), cfg) {}

PlantStepper::PlantStepper(Field2D forced_h, Field2D gun_flux, const PlateConfig& cfg)
    : cfg_(cfg), forced_h_(std::move(forced_h)), gun_flux_(std::move(gun_flux)) {
    cfg_.validate();
    const double alpha = cfg.conductivity / (cfg.density * cfg.specific_heat);
    const double dx = cfg.dx();
    const double dy = cfg.dy();
    double sink = cfg.natural_h + forced_h_.max();
    if (cfg.radiation) {
        // Linearised radiative coefficient at a generous 200 degC ceiling.
        const double t = 200.0 + kKelvin;
        sink += 4.0 * cfg.emissivity * kStefanBoltzmann * t * t * t;
    }
    const double limit = 1.0 / (2.0 * alpha * (1.0 / (dx * dx) + 1.0 / (dy * dy)) +
                                sink / cfg.areal_heat_capacity());
    stable_dt_ = kStabilityFraction * limit;
}

void PlantStepper::explicit_step(const Field2D& in, Field2D& out, double dt) const {
    const int nx = in.nx;
    const int ny = in.ny;
    const double cap = cfg_.areal_heat_capacity();
    const double kd = cfg_.conductivity * cfg_.thickness;
    const double inv_dx2 = 1.0 / (cfg_.dx() * cfg_.dx());
    const double inv_dy2 = 1.0 / (cfg_.dy() * cfg_.dy());
    const double scale = dt / cap;
    for (int j = 0; j < ny; ++j) {
        const int jm = j > 0 ? j - 1 : j;
        const int jp = j < ny - 1 ? j + 1 : j;
        for (int i = 0; i < nx; ++i) {
            const int im = i > 0 ? i - 1 : i;
            const int ip = i < nx - 1 ? i + 1 : i;
            const double t = in(i, j);
            // Mirrored neighbours at the boundary give zero edge flux.
            const double lap = (in(ip, j) - 2.0 * t + in(im, j)) * inv_dx2 +
                               (in(i, jp) - 2.0 * t + in(i, jm)) * inv_dy2;
            double flux = kd * lap + gun_flux_(i, j) - cfg_.natural_h * (t - cfg_.ambient_temp) -
                          forced_h_(i, j) * (t - cfg_.coolant_temp);
            if (cfg_.radiation) flux -= radiative_loss(t, cfg_.ambient_temp, cfg_.emissivity);
            out(i, j) = t + scale * flux;
        }
    }
}

void PlantStepper::advance(ThermalGrid& grid, double dt) const {
    if (!(dt > 0.0)) fail(ErrorCode::InvalidArgument, "plant step requires dt > 0");
    if (grid.temps.nx != cfg_.grid_nx || grid.temps.ny != cfg_.grid_ny) {
        fail(ErrorCode::DimensionMismatch, "thermal grid does not match plate config");
    }
    const int substeps = std::max(1, static_cast<int>(std::ceil(dt / stable_dt_)));
    const double h = dt / substeps;
    Field2D scratch(grid.temps.nx, grid.temps.ny);
    for (int s = 0; s < substeps; ++s) {
        explicit_step(grid.temps, scratch, h);
        std::swap(grid.temps.data, scratch.data);
    }
    const auto bad = std::find_if(grid.temps.data.begin(), grid.temps.data.end(),
                                  [](double v) { return !std::isfinite(v); });
    if (bad != grid.temps.data.end()) {
        const auto idx = static_cast<int>(bad - grid.temps.data.begin());
        fail(ErrorCode::SimulationDiverged,
             "non-finite temperature at cell (" + std::to_string(idx % grid.temps.nx) + ", " +
                 std::to_string(idx / grid.temps.nx) + ") after t = " +
                 format_double(grid.sim_time + dt) + " s");
    }
    grid.sim_time += dt;
}

Field2D PlantStepper::rate(const ThermalGrid& grid) const {
    Field2D out(grid.temps.nx, grid.temps.ny);
    explicit_step(grid.temps, out, 1.0);
    for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] -= grid.temps.data[k];
    return out;
}

ThermalGrid step_plant(const ThermalGrid& grid, std::span<const WyeChannel> channels,
                       const HeatGun& gun, const PlateConfig& cfg, const JetGeometry& geom,
                       double dt) {
    ThermalGrid next = grid;
    PlantStepper(channels, gun, cfg, geom).advance(next, dt);
    return next;
}

SteadyStateResult steady_state(const ThermalGrid& grid, std::span<const WyeChannel> channels,
                               const HeatGun& gun, const PlateConfig& cfg,
                               const JetGeometry& geom, double tol, int max_steps,
                               double probe_dt) {
    if (!(tol > 0.0)) fail(ErrorCode::InvalidArgument, "steady-state tolerance must be > 0");
    const PlantStepper stepper(channels, gun, cfg, geom);
    SteadyStateResult result{grid, false, 0, 0.0};
    while (true) {
        const Field2D r = stepper.rate(result.grid);
        result.max_rate = std::max(std::abs(r.min()), std::abs(r.max()));
        if (result.max_rate < tol) {
            result.converged = true;
            return result;
        }
        if (result.steps >= max_steps) return result;
        stepper.advance(result.grid, probe_dt);
        ++result.steps;
    }
}

ThermalGrid equilibrium_field(std::span<const WyeChannel> channels, const HeatGun& gun,
                              const PlateConfig& cfg, const JetGeometry& geom) {
    cfg.validate();
    const Field2D forced = forced_h_field(channels, geom, cfg);
    const Field2D q = heat_gun_flux(gun, cfg);
    if (cfg.natural_h <= 0.0 && forced.max() <= 0.0 && !cfg.radiation) {
        fail(ErrorCode::InvalidArgument, "no heat sink: equilibrium is undefined");
    }
    const int nx = cfg.grid_nx;
    const int ny = cfg.grid_ny;
    const int n = nx * ny;
    const double kd = cfg.conductivity * cfg.thickness;
    const double cx = kd / (cfg.dx() * cfg.dx());
    const double cy = kd / (cfg.dy() * cfg.dy());
    auto index = [nx](int i, int j) { return j * nx + i; };

    Eigen::VectorXd x = Eigen::VectorXd::Constant(n, cfg.ambient_temp);
    // Radiation is handled by Picard iteration on its linearised coefficient.
    const int passes = cfg.radiation ? 30 : 1;
    for (int pass = 0; pass < passes; ++pass) {
        std::vector<Eigen::Triplet<double>> triplets;
        triplets.reserve(static_cast<std::size_t>(n) * 5);
        Eigen::VectorXd b(n);
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i) {
                const int k = index(i, j);
                double diag = cfg.natural_h + forced(i, j);
                double rhs = q(i, j) + cfg.natural_h * cfg.ambient_temp +
                             forced(i, j) * cfg.coolant_temp;
                if (cfg.radiation) {
                    const double t = x[k] + kKelvin;
                    const double ta = cfg.ambient_temp + kKelvin;
                    const double hr = cfg.emissivity * kStefanBoltzmann * (t * t + ta * ta) * (t + ta);
                    diag += hr;
                    rhs += hr * cfg.ambient_temp;
                }
                auto link = [&](int ii, int jj, double c) {
                    triplets.emplace_back(k, index(ii, jj), -c);
                    diag += c;
                };
                if (i > 0) link(i - 1, j, cx);
                if (i < nx - 1) link(i + 1, j, cx);
                if (j > 0) link(i, j - 1, cy);
                if (j < ny - 1) link(i, j + 1, cy);
                triplets.emplace_back(k, k, diag);
                b[k] = rhs;
            }
        }
        Eigen::SparseMatrix<double> a(n, n);
        a.setFromTriplets(triplets.begin(), triplets.end());
        Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                                 Eigen::IncompleteCholesky<double>>
            cg;
        cg.setTolerance(1e-13);
        cg.setMaxIterations(20 * n);
        cg.compute(a);
        const Eigen::VectorXd prev = x;
        x = cg.solveWithGuess(b, x);
        if (cg.info() != Eigen::Success) {
            fail(ErrorCode::SimulationDiverged, "equilibrium solve did not converge");
        }
        if (cfg.radiation && (x - prev).lpNorm<Eigen::Infinity>() < 1e-9) break;
    }
    ThermalGrid grid = ThermalGrid::uniform(cfg, 0.0);
    std::copy(x.data(), x.data() + n, grid.temps.data.begin());
    return grid;
}

PlateConfig plate_config_from(const KeyValueDoc& doc, PlateConfig base) {
    if (const auto m = doc.find("plate.material")) base = PlateConfig::for_material(parse_material(*m));
    PlateConfig cfg = base;
    cfg.length_x = doc.get_double("plate.length_x", base.length_x);
    cfg.length_y = doc.get_double("plate.length_y", base.length_y);
    cfg.thickness = doc.get_double("plate.thickness", base.thickness);
    cfg.density = doc.get_double("plate.density", base.density);
    cfg.specific_heat = doc.get_double("plate.specific_heat", base.specific_heat);
    cfg.conductivity = doc.get_double("plate.conductivity", base.conductivity);
    cfg.grid_nx = static_cast<int>(doc.get_int("plate.grid_nx", base.grid_nx));
    cfg.grid_ny = static_cast<int>(doc.get_int("plate.grid_ny", base.grid_ny));
    cfg.ambient_temp = doc.get_double("plate.ambient_temp", base.ambient_temp);
    cfg.coolant_temp = doc.get_double("plate.coolant_temp", base.coolant_temp);
    cfg.natural_h = doc.get_double("plate.natural_h", base.natural_h);
    cfg.radiation = doc.get("plate.radiation", base.radiation ? "on" : "off") == "on";
    cfg.emissivity = doc.get_double("plate.emissivity", base.emissivity);
    cfg.validate();
    return cfg;
}

JetGeometry jet_geometry_from(const KeyValueDoc& doc, const PlateConfig& cfg, int channel_count,
                              JetGeometry base) {
    JetGeometry geom = base;
    if (geom.channel_positions.size() != static_cast<std::size_t>(channel_count)) {
        geom.channel_positions = JetGeometry::default_layout(cfg, channel_count).channel_positions;
    }
    for (int k = 0; k < channel_count; ++k) {
        const auto key = "jet.position." + std::to_string(k);
        if (const auto v = doc.find(key)) {
            const auto parts = split(*v, ' ');
            std::vector<double> xy;
            for (auto p : parts) {
                if (!trim(p).empty()) xy.push_back(parse_double(p, key));
            }
            if (xy.size() != 2) fail(ErrorCode::InvalidArgument, key + ": expected 'x y'");
            geom.channel_positions[static_cast<std::size_t>(k)] = {xy[0], xy[1]};
        }
    }
    geom.jet_sigma = doc.get_double("jet.sigma", base.jet_sigma);
    geom.h_ref = doc.get_double("jet.h_ref", base.h_ref);
    geom.q_ref = doc.get_double("jet.q_ref", base.q_ref);
    geom.flow_exponent = doc.get_double("jet.flow_exponent", base.flow_exponent);
    geom.outlet_h_fraction = doc.get_double("jet.outlet_h_fraction", base.outlet_h_fraction);
    geom.validate(cfg);
    return geom;
}

HeatGun heat_gun_from(const KeyValueDoc& doc, HeatGun base) {
    HeatGun gun = base;
    gun.center.x = doc.get_double("gun.x", base.center.x);
    gun.center.y = doc.get_double("gun.y", base.center.y);
    gun.total_power = doc.get_double("gun.power", base.total_power);
    gun.spread_sigma = doc.get_double("gun.sigma", base.spread_sigma);
    gun.validate();
    return gun;
}

} // namespace jettwin
