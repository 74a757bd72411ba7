use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tweezerlab::constants::PhysicalConstants;
use tweezerlab::imaging::{
    area_capture_fraction, counts_from_photons, defocused_counts, photons_from_counts, recoil_heating, CameraModel,
};
use tweezerlab::optics::{stack_response, LayerStack, Polarization};

use super::{linspace, Context, Resolved};
use crate::config::{parse, to_value};
use crate::output::num;
use crate::{CliError, CliResult};

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub adc_electrons_per_count: f64,
    pub em_gain: f64,
    pub quantum_efficiency: f64,
    pub optics_transmittance: f64,
    pub collection_fraction: f64,
    /// Pixel size referred to the object plane.
    pub pixel_pitch_nm: f64,
    pub exposure_ms: f64,
    pub counting_pixels: usize,
    pub numerical_aperture: f64,
    pub wavelength_nm: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        let c = CameraModel::default();
        Self {
            adc_electrons_per_count: c.adc_electrons_per_count,
            em_gain: c.em_gain,
            quantum_efficiency: c.quantum_efficiency,
            optics_transmittance: c.optics_transmittance,
            collection_fraction: c.collection_fraction,
            pixel_pitch_nm: c.pixel_pitch * 1e9,
            exposure_ms: c.exposure * 1e3,
            counting_pixels: c.counting_pixels,
            numerical_aperture: c.numerical_aperture,
            wavelength_nm: c.wavelength * 1e9,
        }
    }
}

impl CameraConfig {
    fn model(&self) -> CameraModel {
        CameraModel {
            adc_electrons_per_count: self.adc_electrons_per_count,
            em_gain: self.em_gain,
            quantum_efficiency: self.quantum_efficiency,
            optics_transmittance: self.optics_transmittance,
            collection_fraction: self.collection_fraction,
            pixel_pitch: self.pixel_pitch_nm * 1e-9,
            exposure: self.exposure_ms * 1e-3,
            counting_pixels: self.counting_pixels,
            numerical_aperture: self.numerical_aperture,
            wavelength: self.wavelength_nm * 1e-9,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct ImagingConfig {
    pub camera: CameraConfig,
    /// Photons scattered per exposure.
    pub photons: f64,
    /// Membrane reflectance at the imaging wavelength; computed from the
    /// membrane stack at normal incidence when absent.
    pub membrane_reflectance: Option<f64>,
    pub z_start_um: f64,
    pub z_end_um: f64,
    pub z_count: usize,
    /// Camera counts converted to photons for the budget summary.
    pub reference_counts: f64,
}

impl Default for ImagingConfig {
    fn default() -> Self {
        Self {
            camera: CameraConfig::default(),
            photons: 45_000.0,
            membrane_reflectance: None,
            z_start_um: 0.0,
            z_end_um: 15.0,
            z_count: 61,
            reference_counts: 1000.0,
        }
    }
}

pub fn run(value: Value, ctx: &mut Context) -> CliResult<Resolved> {
    let mut cfg: ImagingConfig = parse(value)?;
    let camera = cfg.camera.model();
    camera.validate()?;
    if !(cfg.z_end_um >= cfg.z_start_um) || cfg.z_count == 0 || cfg.z_start_um < 0.0 {
        return Err(CliError::Config(
            "need 0 <= z_start_um <= z_end_um and z_count >= 1".into(),
        ));
    }
    let r = match cfg.membrane_reflectance {
        Some(r) => r,
        None => stack_response(&LayerStack::membrane(), camera.wavelength, 0.0, Polarization::S)?.reflectance,
    };
    cfg.membrane_reflectance = Some(r);
    let zs = if cfg.z_count == 1 {
        vec![cfg.z_start_um]
    } else {
        linspace(cfg.z_start_um, cfg.z_end_um, cfg.z_count)
    };
    let mut rows = Vec::with_capacity(zs.len());
    for z_um in zs {
        let z = z_um * 1e-6;
        rows.push(vec![
            num(z_um),
            num(defocused_counts(z, &camera, 0.0, cfg.photons)?),
            num(defocused_counts(z, &camera, r, cfg.photons)?),
            num(area_capture_fraction(z, &camera)),
        ]);
    }
    ctx.out.csv(
        "counts_vs_defocus.csv",
        &["z_um", "counts_bare", "counts_membrane", "capture_fraction"],
        rows,
    )?;
    let constants = PhysicalConstants::default();
    ctx.out.json(
        "summary.json",
        &json!({
            "counts_per_photon": camera.counts_per_photon(),
            "reference_counts": cfg.reference_counts,
            "photons_for_reference_counts": photons_from_counts(cfg.reference_counts, &camera)?,
            "counts_for_photons": counts_from_photons(cfg.photons, &camera)?,
            "recoil_heating_mK": recoil_heating(cfg.photons, &constants)? * 1e3,
            "membrane_reflectance": r,
        }),
    )?;
    Ok(Resolved {
        config: to_value(&cfg),
        seed: None,
    })
}
