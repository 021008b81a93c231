#pragma once

// Hybrid power plant: fuel cell + battery as the priority block, an
// ultracapacitor for surge. Rule-based split, energy bookkeeping and the
// pre-mission charge step.

#include "aeps/common.hpp"
#include "aeps/csv.hpp"
#include "aeps/powermodel.hpp"

#include <algorithm>
#include <ostream>
#include <string>

namespace aeps {

enum class SourceKind { fuel_cell, battery, ultracap };

inline const char* to_string(SourceKind k) {
  switch (k) {
    case SourceKind::fuel_cell: return "fuel_cell";
    case SourceKind::battery: return "battery";
    case SourceKind::ultracap: return "ultracap";
  }
  return "?";
}

struct SourceSpec {
  SourceKind kind = SourceKind::battery;
  double energy_capacity = 0.0;    // J
  double max_output = 0.0;         // W
  double max_charge_accept = 0.0;  // W, ultracap only

  void validate() const {
    // A zero-capacity ultracapacitor models a plant without surge storage.
    const bool cap_ok = kind == SourceKind::ultracap ? energy_capacity >= 0.0 : energy_capacity > 0.0;
    if (!cap_ok) throw DomainError(std::string(to_string(kind)) + ": invalid energy capacity");
    if (!(max_output > 0.0)) throw DomainError(std::string(to_string(kind)) + ": max_output must be positive");
    if (!(max_charge_accept >= 0.0)) throw DomainError("max_charge_accept must be non-negative");
    if (kind != SourceKind::ultracap && max_charge_accept != 0.0) {
      throw DomainError("only the ultracapacitor accepts charge");
    }
  }
};

inline double mah_to_joules(double mah, double volts) { return mah / 1000.0 * 3600.0 * volts; }
inline double capacitor_joules(double farads, double volts) { return 0.5 * farads * volts * volts; }

struct PlantSpec {
  // 10000 mAh fuel cell and 2000 mAh battery at a nominal 11.1 V; 1000 F
  // ultracapacitor over a 3.0 V swing.
  SourceSpec fuel_cell{SourceKind::fuel_cell, mah_to_joules(10000.0, 11.1), 3.0, 0.0};
  SourceSpec battery{SourceKind::battery, mah_to_joules(2000.0, 11.1), 13.0, 0.0};
  SourceSpec ultracap{SourceKind::ultracap, capacitor_joules(1000.0, 3.0), 30.0, 10.0};
  double charge_efficiency = 1.0;
  double full_band = 0.0;  // extra tolerance on the "fully charged" test

  double p_max() const { return fuel_cell.max_output + battery.max_output; }

  void validate() const {
    fuel_cell.validate();
    battery.validate();
    ultracap.validate();
    if (!(charge_efficiency > 0.0 && charge_efficiency <= 1.0)) {
      throw DomainError("charge efficiency must be in (0, 1]");
    }
    if (!(full_band >= 0.0 && full_band < 1.0)) throw DomainError("full_band must be in [0, 1)");
  }
};

/// Stored energy per source. SOC is derived: energy / capacity.
struct PlantState {
  PlantSpec spec;
  double e_fc = 0.0;    // J
  double e_batt = 0.0;  // J
  double e_uc = 0.0;    // J

  static PlantState from_soc(const PlantSpec& spec, double soc_fc, double soc_batt, double soc_uc) {
    spec.validate();
    for (double s : {soc_fc, soc_batt, soc_uc}) {
      if (!(s >= 0.0 && s <= 1.0)) throw DomainError("state of charge must be in [0, 1]");
    }
    return {spec, soc_fc * spec.fuel_cell.energy_capacity, soc_batt * spec.battery.energy_capacity,
            soc_uc * spec.ultracap.energy_capacity};
  }

  double soc_fc() const { return e_fc / spec.fuel_cell.energy_capacity; }
  double soc_batt() const { return e_batt / spec.battery.energy_capacity; }
  double soc_uc() const {
    return spec.ultracap.energy_capacity > 0.0 ? e_uc / spec.ultracap.energy_capacity : 0.0;
  }
  double cell_energy() const { return e_fc + e_batt; }

  bool uc_full() const {
    if (spec.ultracap.energy_capacity <= 0.0) return true;
    return soc_uc() >= 1.0 - std::max(1e-9, spec.full_band);
  }
};

struct AllocationDecision {
  double p_fc_batt = 0.0;  // W, combined cell output to the load
  double p_uc = 0.0;       // W, ultracapacitor output to the load
  double p_charge = 0.0;   // W, cells -> ultracapacitor
  bool brownout = false;

  double supplied() const { return p_fc_batt + p_uc; }
};

/// Running totals for conservation checks.
struct EnergyAccount {
  double cells_out = 0.0;        // J drawn from fuel cell + battery
  double cells_to_load = 0.0;    // J
  double cells_to_uc = 0.0;      // J (before charge efficiency)
  double uc_in = 0.0;            // J stored into the ultracapacitor
  double uc_out = 0.0;           // J
  double clamp_violation = 0.0;  // J lost or invented by SOC clamping
};

namespace detail {

inline double fc_available(const PlantState& s, double dt) {
  return std::min(s.spec.fuel_cell.max_output, s.e_fc / dt);
}
inline double batt_available(const PlantState& s, double dt) {
  return std::min(s.spec.battery.max_output, s.e_batt / dt);
}

}  // namespace detail

/// Power deliverable by the fuel cell + battery block this step.
inline double cell_capacity(const PlantState& s, double dt) {
  return detail::fc_available(s, dt) + detail::batt_available(s, dt);
}

/// Rule-based split. The cells carry the load first; any excess comes from
/// the ultracapacitor; spare cell capacity recharges a non-full capacitor.
inline AllocationDecision allocate(double p_load, const PlantState& state, double dt = 0.1) {
  if (!(p_load >= 0.0)) throw DomainError("load must be non-negative");
  if (!(dt > 0.0)) throw DomainError("dt must be positive");
  const auto& spec = state.spec;
  const double cells = cell_capacity(state, dt);

  AllocationDecision d;
  if (p_load <= cells) {
    d.p_fc_batt = p_load;
    if (!state.uc_full()) {
      const double headroom =
          (spec.ultracap.energy_capacity - state.e_uc) / (spec.charge_efficiency * dt);
      d.p_charge = std::max(0.0, std::min({spec.ultracap.max_charge_accept, cells - p_load, headroom}));
    }
    return d;
  }
  d.p_fc_batt = cells;
  const double shortfall = p_load - cells;
  const double uc_limit = std::min(spec.ultracap.max_output, state.e_uc / dt);
  if (shortfall <= uc_limit) {
    d.p_uc = shortfall;
  } else {
    d.p_uc = uc_limit;
    d.brownout = true;
  }
  return d;
}

/// Applies a decision for `dt` seconds. Cell draw is taken fuel-cell first.
inline PlantState step(const PlantState& state, const AllocationDecision& d, double dt,
                       EnergyAccount* account = nullptr) {
  if (!(dt > 0.0)) throw DomainError("dt must be positive");
  PlantState next = state;
  const double draw = d.p_fc_batt + d.p_charge;
  const double from_fc = std::min(draw, detail::fc_available(state, dt));
  const double from_batt = draw - from_fc;

  double violation = 0.0;
  auto apply = [&violation](double energy, double delta, double cap) {
    double v = energy + delta;
    if (v < 0.0) {
      violation += -v;
      v = 0.0;
    } else if (v > cap) {
      violation += v - cap;
      v = cap;
    }
    return v;
  };
  next.e_fc = apply(state.e_fc, -from_fc * dt, state.spec.fuel_cell.energy_capacity);
  next.e_batt = apply(state.e_batt, -from_batt * dt, state.spec.battery.energy_capacity);
  const double uc_in = state.spec.charge_efficiency * d.p_charge * dt;
  const double uc_out = d.p_uc * dt;
  next.e_uc = apply(state.e_uc, uc_in - uc_out, state.spec.ultracap.energy_capacity);

  if (account != nullptr) {
    account->cells_out += draw * dt;
    account->cells_to_load += d.p_fc_batt * dt;
    account->cells_to_uc += d.p_charge * dt;
    account->uc_in += uc_in;
    account->uc_out += uc_out;
    account->clamp_violation += violation;
  }
  return next;
}

/// Deliverable ultracapacitor power over a one-second horizon.
inline double available_surge(const PlantState& state) {
  return std::min(state.spec.ultracap.max_output, std::max(0.0, state.e_uc) / 1.0);
}

/// Energy the profile needs above the cell limit.
inline double predicted_surge_energy(const PlantState& state, const DemandProfile& profile) {
  const double pmax = state.spec.p_max();
  double e = 0.0;
  for (double d : profile.demand) e += std::max(0.0, d - pmax) * profile.sample_interval;
  return e;
}

struct PrechargeResult {
  PlantState state;
  double duration = 0.0;        // s spent charging before the mission
  double required_energy = 0.0; // J of predicted surge
};

/// Charges the ultracapacitor from the cells at its acceptance rate until it
/// holds the predicted surge energy, or is full.
inline PrechargeResult precharge(const PlantState& state, const DemandProfile& predicted) {
  PrechargeResult r{state, 0.0, predicted_surge_energy(state, predicted)};
  const auto& spec = state.spec;
  const double target = std::min(r.required_energy, spec.ultracap.energy_capacity);
  if (state.uc_full() || state.e_uc >= target) return r;

  const double rate = std::min(spec.ultracap.max_charge_accept, cell_capacity(state, 1.0));
  if (!(rate > 0.0)) return r;
  const double duration = (target - state.e_uc) / (spec.charge_efficiency * rate);
  AllocationDecision d;
  d.p_charge = rate;
  r.state = step(state, d, duration);
  r.duration = duration;
  return r;
}

inline void write_plant_header(csv::Writer& w) {
  w.header({"t", "p_load", "p_fc_batt", "p_uc", "p_charge", "soc_fc", "soc_batt", "soc_uc", "brownout"});
}

inline void write_plant_row(csv::Writer& w, double t, double p_load, const AllocationDecision& d,
                            const PlantState& s) {
  w.row(t, p_load, d.p_fc_batt, d.p_uc, d.p_charge, s.soc_fc(), s.soc_batt(), s.soc_uc(), d.brownout);
}

}  // namespace aeps
