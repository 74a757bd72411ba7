mod assemble;
mod histogram;
mod imaging;
mod loading;
mod stack;
mod transport;
mod trap;

use schemars::{schema_for, JsonSchema};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tweezerlab::constants::{PhysicalConstants, SurfaceMaterial};
use tweezerlab::potential::TrapPotential;
use tweezerlab::{beam::TrapConfiguration, presets};

use crate::manifest::FileHash;
use crate::output::Output;
use crate::CliResult;

/// Configuration as actually used, for the manifest.
pub struct Resolved {
    pub config: Value,
    pub seed: Option<u64>,
}

pub struct Context<'a> {
    pub out: &'a mut Output,
    pub inputs: &'a mut Vec<FileHash>,
}

pub fn dispatch(name: &str, value: Value, out: &mut Output, inputs: &mut Vec<FileHash>) -> CliResult<Resolved> {
    let mut ctx = Context { out, inputs };
    match name {
        "stack" => stack::run(value, &mut ctx),
        "field" => trap::field(value, &mut ctx),
        "potential" => trap::potential(value, &mut ctx),
        "conveyor" => trap::conveyor(value, &mut ctx),
        "mc-load" => loading::run(value, &mut ctx),
        "imaging" => imaging::run(value, &mut ctx),
        "synth-hist" => histogram::synth(value, &mut ctx),
        "fit-histogram" => histogram::fit(value, &mut ctx),
        "fit-transport" => transport::run(value, &mut ctx),
        "assemble" => assemble::run(value, &mut ctx),
        other => unreachable!("unknown subcommand {other}"),
    }
}

/// JSON Schema of each subcommand's configuration.
pub fn schemas() -> Vec<(&'static str, Value)> {
    fn s<T: JsonSchema>() -> Value {
        serde_json::to_value(schema_for!(T)).expect("schema serializes")
    }
    vec![
        ("stack", s::<stack::StackConfig>()),
        ("field", s::<trap::FieldConfig>()),
        ("potential", s::<trap::PotentialConfig>()),
        ("conveyor", s::<trap::ConveyorConfig>()),
        ("mc-load", s::<loading::McLoadConfig>()),
        ("imaging", s::<imaging::ImagingConfig>()),
        ("synth-hist", s::<histogram::SynthConfig>()),
        ("fit-histogram", s::<histogram::FitConfig>()),
        ("fit-transport", s::<transport::TransportConfig>()),
        ("assemble", s::<assemble::AssembleConfig>()),
    ]
}

/// Atomic unit of polarizability in C·m²/V.
const ATOMIC_POLARIZABILITY: f64 = 1.648_777_274_36e-41;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum System {
    /// Stationary lattice above the suspended membrane.
    #[default]
    Membrane,
    /// Membrane stack with the reflection scaled to the waveguide reflectance.
    Waveguide,
    /// Membrane lattice with the counter-propagating bottom beam.
    MembraneConveyor,
}

/// Trap geometry shared by several subcommands.
#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TrapSpec {
    #[serde(default)]
    pub system: System,
    #[serde(rename = "power_mW", default = "default_power")]
    pub power_mw: f64,
    /// Bottom-beam phase relative to the reflected tweezer (conveyor only).
    #[serde(default)]
    pub relative_phase_cycles: f64,
    /// Polarizability in atomic units; calibrated to the reference depth when absent.
    #[serde(default)]
    pub polarizability_au: Option<f64>,
}

impl Default for TrapSpec {
    fn default() -> Self {
        Self {
            system: System::Membrane,
            power_mw: default_power(),
            relative_phase_cycles: 0.0,
            polarizability_au: None,
        }
    }
}

fn default_power() -> f64 {
    5.0
}

impl TrapSpec {
    pub fn configuration(&self) -> CliResult<TrapConfiguration> {
        let p = self.power_mw * 1e-3;
        Ok(match self.system {
            System::Membrane => presets::stationary_membrane(p),
            System::Waveguide => presets::waveguide_surrogate(p)?,
            System::MembraneConveyor => presets::conveyor_membrane(p, self.relative_phase_cycles)?,
        })
    }

    pub fn material(&self) -> SurfaceMaterial {
        match self.system {
            System::Waveguide => presets::waveguide_surface(),
            _ => presets::membrane_surface(),
        }
    }

    pub fn constants(&self) -> CliResult<PhysicalConstants> {
        Ok(match self.polarizability_au {
            Some(a) => PhysicalConstants::default().with_polarizability(a * ATOMIC_POLARIZABILITY),
            None => presets::calibrated_constants()?,
        })
    }

    pub fn potential(&self) -> CliResult<TrapPotential> {
        Ok(TrapPotential::new(
            &self.configuration()?,
            &self.constants()?,
            &self.material(),
        )?)
    }
}

pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    tweezerlab::beam::linspace(start, stop, count)
}
