#pragma once

// Thin-plate thermal model: 2D conduction in the plate plane, a Gaussian
// heat-gun load on top, jet-impingement convection underneath and natural
// convection losses. Edges are insulated.
//
//   rho*cp*thickness*dT/dt = k*thickness*lap(T) + q_gun
//                            - h_nat*(T - T_ambient) - h_jet(x,y)*(T - T_coolant)
//
// Thin-plate assumption: thickness << length, so the through-thickness
// gradient is ignored.

#include "jettwin/channel.hpp"

#include <span>
#include <string>
#include <vector>

namespace jettwin {

class KeyValueDoc;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Vec2&) const = default;
};

enum class PlateMaterial { Steel, Aluminum, Copper, Stainless };

std::string_view to_string(PlateMaterial material) noexcept;
PlateMaterial parse_material(std::string_view text);

struct PlateConfig {
    double length_x = 0.254;       // m (10 in)
    double length_y = 0.254;       // m
    double thickness = 0.003175;   // m (1/8 in)
    double density = 7850.0;       // kg/m^3
    double specific_heat = 490.0;  // J/(kg K)
    double conductivity = 50.0;    // W/(m K)
    int grid_nx = 96;
    int grid_ny = 72;
    double ambient_temp = 20.0;    // degC
    double coolant_temp = 20.0;    // degC
    double natural_h = 7.0;        // W/(m^2 K)
    bool radiation = false;
    double emissivity = 0.8;

    /// Low-carbon steel sheet unless another material preset is requested.
    static PlateConfig for_material(PlateMaterial material);

    void validate() const;
    double dx() const { return length_x / grid_nx; }
    double dy() const { return length_y / grid_ny; }
    /// rho * cp * thickness, J/(m^2 K).
    double areal_heat_capacity() const { return density * specific_heat * thickness; }
    /// Cell-centre coordinates.
    double cell_x(int i) const { return (i + 0.5) * dx(); }
    double cell_y(int j) const { return (j + 0.5) * dy(); }

    bool operator==(const PlateConfig&) const = default;
};

/// Row-major (j * nx + i) scalar field on the plate mesh.
struct Field2D {
    int nx = 0;
    int ny = 0;
    std::vector<double> data;

    Field2D() = default;
    Field2D(int nx_, int ny_, double fill = 0.0)
        : nx(nx_), ny(ny_), data(static_cast<std::size_t>(nx_) * ny_, fill) {}

    double& operator()(int i, int j) { return data[static_cast<std::size_t>(j) * nx + i]; }
    double operator()(int i, int j) const { return data[static_cast<std::size_t>(j) * nx + i]; }
    double min() const;
    double max() const;
    double mean() const;

    bool operator==(const Field2D&) const = default;
};

struct ThermalGrid {
    Field2D temps;         // degC
    double sim_time = 0.0; // s

    static ThermalGrid uniform(const PlateConfig& cfg, double temp);
    bool operator==(const ThermalGrid&) const = default;
};

struct HeatGun {
    Vec2 center{0.127, 0.127}; // m
    double total_power = 0.0;  // W absorbed by the plate
    double spread_sigma = 0.03; // m
    bool enabled = false;

    void validate() const;
    bool operator==(const HeatGun&) const = default;
};

struct JetGeometry {
    std::vector<Vec2> channel_positions; // m, one per channel id
    double jet_sigma = 0.07863571971558096; // m; +inf gives a uniform footprint
    double h_ref = 17.382752096330158;      // W/(m^2 K) at q_ref
    double q_ref = 100.0;                // L/min
    double flow_exponent = 0.8;
    double outlet_h_fraction = 0.2;

    /// Orifices at camera-pixel centres: up to five in a row along the
    /// plate midline (6 px pitch), six to nine on a 3x3 lattice.
    static JetGeometry default_layout(const PlateConfig& cfg, int channel_count);

    void validate(const PlateConfig& cfg) const;
    bool operator==(const JetGeometry&) const = default;
};

/// Camera pixel (px, py) centre in plate coordinates.
Vec2 pixel_center(const PlateConfig& cfg, double px, double py);

/// Forced-convection part only (jets), W/(m^2 K).
Field2D forced_h_field(std::span<const WyeChannel> channels, const JetGeometry& geom,
                       const PlateConfig& cfg);

/// natural_h plus the jet contribution of every Inlet and Outlet channel.
Field2D jet_h_field(std::span<const WyeChannel> channels, const JetGeometry& geom,
                    const PlateConfig& cfg);

/// Gun flux sampled at cell centres, W/m^2. Zero when disabled.
Field2D heat_gun_flux(const HeatGun& gun, const PlateConfig& cfg);

/// Unit Gaussian footprint per channel, computed once per geometry.
class JetFootprints {
public:
    JetFootprints(const JetGeometry& geom, const PlateConfig& cfg);

    /// Same result as forced_h_field for these channels.
    Field2D forced_h(std::span<const WyeChannel> channels) const;

private:
    JetGeometry geom_;
    PlateConfig cfg_;
    std::vector<Field2D> unit_;
};

/// Precomputed source and sink fields for a fixed actuator state. The
/// orchestration loop rebuilds one per control period.
class PlantStepper {
public:
    PlantStepper(std::span<const WyeChannel> channels, const HeatGun& gun,
                 const PlateConfig& cfg, const JetGeometry& geom);
    PlantStepper(Field2D forced_h, Field2D gun_flux, const PlateConfig& cfg);

    /// Advances by dt with explicit sub-steps at 0.4x the stability limit.
    void advance(ThermalGrid& grid, double dt) const;
    /// dT/dt at the current state, degC/s.
    Field2D rate(const ThermalGrid& grid) const;
    double stable_dt() const { return stable_dt_; }

    const Field2D& forced_h() const { return forced_h_; }
    const Field2D& gun_flux() const { return gun_flux_; }

private:
    void explicit_step(const Field2D& in, Field2D& out, double dt) const;

    PlateConfig cfg_;
    Field2D forced_h_;
    Field2D gun_flux_;
    double stable_dt_ = 0.0;
};

ThermalGrid step_plant(const ThermalGrid& grid, std::span<const WyeChannel> channels,
                       const HeatGun& gun, const PlateConfig& cfg, const JetGeometry& geom,
                       double dt);

struct SteadyStateResult {
    ThermalGrid grid;
    bool converged = false;
    int steps = 0;
    double max_rate = 0.0; // degC/s at return
};

/// Steps with `probe_dt` until max |dT/dt| < tol or `max_steps` steps are used.
SteadyStateResult steady_state(const ThermalGrid& grid, std::span<const WyeChannel> channels,
                               const HeatGun& gun, const PlateConfig& cfg,
                               const JetGeometry& geom, double tol, int max_steps = 20000,
                               double probe_dt = 1.0);

/// Direct solve of the time-independent balance (conjugate gradients).
/// Used to warm-start long experiments and as a second route to steady state.
ThermalGrid equilibrium_field(std::span<const WyeChannel> channels, const HeatGun& gun,
                              const PlateConfig& cfg, const JetGeometry& geom);

/// Overrides from `plate.*` keys; absent keys keep the values of `base`.
PlateConfig plate_config_from(const KeyValueDoc& doc, PlateConfig base = {});
JetGeometry jet_geometry_from(const KeyValueDoc& doc, const PlateConfig& cfg, int channel_count,
                              JetGeometry base);
HeatGun heat_gun_from(const KeyValueDoc& doc, HeatGun base);

} // namespace jettwin
