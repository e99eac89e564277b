//! Empirical stability ratios against a high-degree proxy of the continuous minimizer.

use crate::error::Result;
use crate::fields::{FaceData, HdivData};
use crate::topology::{shape_regularity, PatchMesh};

use super::data::{smooth_h1_data, smooth_hdiv_data};
use super::h1::global_min_h1;
use super::hdiv::global_min_hdiv_direct;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Setting {
    H1,
    Hdiv,
}

impl Setting {
    pub fn name(self) -> &'static str {
        match self {
            Setting::H1 => "h1",
            Setting::Hdiv => "hdiv",
        }
    }
}

impl std::str::FromStr for Setting {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "h1" => Ok(Setting::H1),
            "hdiv" => Ok(Setting::Hdiv),
            other => Err(format!("unknown setting `{other}` (expected h1 or hdiv)")),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ExtensionData {
    H1(FaceData),
    Hdiv(HdivData),
}

impl ExtensionData {
    pub fn setting(&self) -> Setting {
        match self {
            ExtensionData::H1(_) => Setting::H1,
            ExtensionData::Hdiv(_) => Setting::Hdiv,
        }
    }

    /// The fixed smooth family of the given setting at degree p.
    pub fn smooth(patch: &PatchMesh, setting: Setting, p: usize, seed: u64) -> Self {
        match setting {
            Setting::H1 => ExtensionData::H1(smooth_h1_data(patch, p.max(1), seed)),
            Setting::Hdiv => ExtensionData::Hdiv(smooth_hdiv_data(patch, p, seed)),
        }
    }
}

/// Minimal discrete energy at degree q.
pub fn discrete_energy(patch: &PatchMesh, data: &ExtensionData, q: usize) -> Result<f64> {
    match data {
        ExtensionData::H1(r) => Ok(global_min_h1(patch, r, q)?.energy),
        ExtensionData::Hdiv(d) => Ok(global_min_hdiv_direct(patch, d, q)?.energy),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub p: usize,
    pub setting: Setting,
    pub energy_p: f64,
    pub energy_proxy: f64,
    /// Energy at degree `p + delta - 2`.
    pub energy_proxy_coarse: f64,
    pub ratio: f64,
    /// `|E(p+delta-2) - E(p+delta)| / E(p+delta)`.
    pub proxy_convergence: f64,
    pub converged: bool,
    pub gamma: f64,
}

/// Proxy convergence threshold on the relative energy drop between the two top degrees.
pub const PROXY_TOLERANCE: f64 = 0.01;

pub fn stability_ratio(patch: &PatchMesh, data: &ExtensionData, p: usize, delta: usize) -> Result<StabilityReport> {
    let delta = delta.max(2);
    let energy_p = discrete_energy(patch, data, p)?;
    let energy_proxy = discrete_energy(patch, data, p + delta)?;
    let energy_proxy_coarse = discrete_energy(patch, data, p + delta - 2)?;
    let (ratio, proxy_convergence) = if energy_proxy <= 1e-300 {
        (if energy_p <= 1e-14 { 1.0 } else { f64::INFINITY }, 0.0)
    } else {
        (energy_p / energy_proxy, (energy_proxy_coarse - energy_proxy).abs() / energy_proxy)
    };
    Ok(StabilityReport {
        p,
        setting: data.setting(),
        energy_p,
        energy_proxy,
        energy_proxy_coarse,
        ratio,
        proxy_convergence,
        converged: proxy_convergence < PROXY_TOLERANCE,
        gamma: shape_regularity(patch),
    })
}

/// Ratios for each p in `degrees` on the fixed smooth data family (data regenerated at each p).
pub fn stability_sweep(
    patch: &PatchMesh,
    setting: Setting,
    degrees: impl IntoIterator<Item = usize>,
    seed: u64,
    delta: usize,
) -> Result<Vec<StabilityReport>> {
    degrees
        .into_iter()
        .map(|p| stability_ratio(patch, &ExtensionData::smooth(patch, setting, p, seed), p, delta))
        .collect()
}

/// `max ratio / min ratio` over a sweep.
pub fn flatness(reports: &[StabilityReport]) -> f64 {
    let max = reports.iter().map(|r| r.ratio).fold(f64::MIN, f64::max);
    let min = reports.iter().map(|r| r.ratio).fold(f64::MAX, f64::min);
    max / min
}
