//! Command implementations behind the `citegauge` binary.

pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluate;

pub use config::{Overrides, RunConfig};
pub use error::CliError;

use citegauge::scoring::EnergyReport;

/// Plain-text table of an energy estimate.
pub fn energy_table(r: &EnergyReport) -> String {
    let rows = [
        ("accelerator power (kW)", r.inputs.tdp_kw),
        ("hours", r.inputs.hours),
        ("accelerator energy (kWh)", r.gpu_kwh),
        ("PUE", r.inputs.pue),
        ("facility energy (kWh)", r.total_kwh),
        ("carbon intensity (kg CO2/kWh)", r.inputs.carbon_kg_per_kwh),
        ("emissions (kg CO2)", r.kg_co2),
        ("vehicle emissions (kg CO2/mile)", r.inputs.kg_per_mile),
        ("equivalent miles driven", r.miles),
    ];
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    rows.iter()
        .map(|(k, v)| format!("{k:<width$}  {v}\n"))
        .collect()
}
