//! Photon-budget calculators for a quantum dot in a micropillar cavity.
//!
//! The brightness of the source at the first lens is the product of the
//! fraction of emission funnelled into the cavity mode (beta), the fraction of
//! cavity photons escaping through the top mirror (eta_out) and the quantum
//! yield of the emitting state (q_QD). All functions here are pure and total
//! over their documented domains.

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, require_unit_interval};
use crate::{Error, Result};

/// Planck constant times the speed of light, in eV·m.
pub const HC_EV_M: f64 = 1.239_841_984e-6;

/// Photon energy in eV for a vacuum wavelength in metres.
pub fn photon_energy_ev(wavelength: f64) -> Result<f64> {
    require_positive("wavelength", wavelength)?;
    Ok(HC_EV_M / wavelength)
}

/// Cavity quality factor `E / dE` from the resonance energy and its FWHM.
pub fn quality_factor(center_energy: f64, fwhm: f64) -> Result<f64> {
    require_positive("center_energy", center_energy)?;
    require_positive("fwhm", fwhm)?;
    if fwhm >= center_energy {
        return Err(Error::domain(format!(
            "fwhm ({fwhm}) must be smaller than center_energy ({center_energy})"
        )));
    }
    Ok(center_energy / fwhm)
}

/// Quality factor `lambda / dlambda` from wavelength-domain inputs.
pub fn quality_factor_from_wavelength(wavelength: f64, fwhm_wavelength: f64) -> Result<f64> {
    require_positive("wavelength", wavelength)?;
    require_positive("fwhm_wavelength", fwhm_wavelength)?;
    if fwhm_wavelength >= wavelength {
        return Err(Error::domain("fwhm_wavelength must be smaller than wavelength"));
    }
    Ok(wavelength / fwhm_wavelength)
}

/// Which root of `R_min = (1 - 2 eta)^2` to return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RootBranch {
    /// `eta <= 1/2`: the bottom mirror dominates the losses.
    Low,
    /// `eta >= 1/2`: the top mirror dominates the losses.
    #[default]
    High,
}

/// Extraction efficiency from the minimum of the reflectance dip.
pub fn eta_out_from_reflectance(r_min: f64, branch: RootBranch) -> Result<f64> {
    require_unit_interval("r_min", r_min)?;
    let root = r_min.sqrt();
    Ok(match branch {
        RootBranch::Low => (1.0 - root) / 2.0,
        RootBranch::High => (1.0 + root) / 2.0,
    })
}

/// Extraction efficiency `kappa_top / kappa_total`.
pub fn eta_out_from_rates(kappa_top: f64, kappa_total: f64) -> Result<f64> {
    require_positive("kappa_total", kappa_total)?;
    if !(kappa_top.is_finite() && kappa_top >= 0.0) {
        return Err(Error::domain(format!("kappa_top must be >= 0, got {kappa_top}")));
    }
    if kappa_top > kappa_total {
        return Err(Error::domain(format!(
            "kappa_top ({kappa_top}) exceeds kappa_total ({kappa_total})"
        )));
    }
    Ok(kappa_top / kappa_total)
}

/// Purcell factor from the shortening of the radiative lifetime.
pub fn purcell_from_lifetimes(tau_bulk: f64, tau_cavity: f64) -> Result<f64> {
    require_positive("tau_bulk", tau_bulk)?;
    require_positive("tau_cavity", tau_cavity)?;
    Ok(tau_bulk / tau_cavity)
}

/// Mode coupling fraction `F / (F + 1)`.
pub fn beta_from_purcell(purcell: f64) -> Result<f64> {
    if !(purcell.is_finite() && purcell >= 0.0) {
        return Err(Error::domain(format!("purcell must be >= 0, got {purcell}")));
    }
    Ok(purcell / (purcell + 1.0))
}

/// Purcell factor `(3 / 4 pi^2) (lambda / n)^3 (Q / V)` from the mode volume.
pub fn purcell_from_mode(wavelength: f64, index: f64, quality: f64, mode_volume: f64) -> Result<f64> {
    require_positive("wavelength", wavelength)?;
    require_positive("refractive_index", index)?;
    require_positive("quality", quality)?;
    require_positive("mode_volume", mode_volume)?;
    let reduced = wavelength / index;
    Ok(3.0 / (4.0 * std::f64::consts::PI.powi(2)) * reduced.powi(3) * (quality / mode_volume))
}

/// Photons per pulse at the first lens.
pub fn brightness(beta: f64, eta_out: f64, q_qd: f64) -> Result<f64> {
    require_unit_interval("beta", beta)?;
    require_unit_interval("eta_out", eta_out)?;
    require_unit_interval("q_qd", q_qd)?;
    Ok(beta * eta_out * q_qd)
}

/// Static cavity parameters. Energies are in eV, rates in 1/s, lengths in m.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_energy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linewidth_fwhm: Option<f64>,
    /// FWHM of the resonance in wavelength units, used with `wavelength_vacuum`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linewidth_wavelength: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_top: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_total: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelength_vacuum: Option<f64>,
    #[serde(default = "default_index")]
    pub refractive_index: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_volume: Option<f64>,
}

fn default_index() -> f64 {
    1.0
}

impl CavitySpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(e) = self.center_energy {
            require_positive("center_energy", e)?;
        }
        if let Some(w) = self.linewidth_fwhm {
            require_positive("linewidth_fwhm", w)?;
            if let Some(e) = self.center_energy {
                if w >= e {
                    return Err(Error::domain("linewidth_fwhm must be smaller than center_energy"));
                }
            }
        }
        if let Some(r) = self.r_min {
            require_unit_interval("r_min", r)?;
        }
        if !(self.refractive_index.is_finite() && self.refractive_index >= 1.0) {
            return Err(Error::domain(format!(
                "refractive_index must be >= 1, got {}",
                self.refractive_index
            )));
        }
        if let (Some(top), Some(total)) = (self.kappa_top, self.kappa_total) {
            eta_out_from_rates(top, total)?;
        }
        Ok(())
    }

    /// Resonance energy, taken from `center_energy` or derived from the wavelength.
    pub fn resolved_energy(&self) -> Result<Option<f64>> {
        match (self.center_energy, self.wavelength_vacuum) {
            (Some(e), _) => Ok(Some(e)),
            (None, Some(l)) => photon_energy_ev(l).map(Some),
            (None, None) => Ok(None),
        }
    }

    /// Quality factor from whichever linewidth is available.
    pub fn quality(&self) -> Result<Option<f64>> {
        if let (Some(e), Some(w)) = (self.resolved_energy()?, self.linewidth_fwhm) {
            return quality_factor(e, w).map(Some);
        }
        if let (Some(l), Some(dl)) = (self.wavelength_vacuum, self.linewidth_wavelength) {
            return quality_factor_from_wavelength(l, dl).map(Some);
        }
        Ok(None)
    }

    /// Extraction efficiency, preferring escape rates over the reflectance dip.
    pub fn eta_out(&self, branch: RootBranch) -> Result<Option<f64>> {
        match (self.kappa_top, self.kappa_total, self.r_min) {
            (Some(top), Some(total), _) => eta_out_from_rates(top, total).map(Some),
            (_, _, Some(r)) => eta_out_from_reflectance(r, branch).map(Some),
            _ => Ok(None),
        }
    }
}

/// Emitter lifetimes (s) and quantum yield.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterSpec {
    pub lifetime_cavity: f64,
    pub lifetime_bulk: f64,
    pub quantum_yield: f64,
}

impl EmitterSpec {
    pub fn validate(&self) -> Result<()> {
        require_positive("lifetime_cavity", self.lifetime_cavity)?;
        require_positive("lifetime_bulk", self.lifetime_bulk)?;
        if self.lifetime_cavity > self.lifetime_bulk {
            return Err(Error::domain("lifetime_cavity must not exceed lifetime_bulk"));
        }
        require_unit_interval("quantum_yield", self.quantum_yield)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrightnessBudget {
    pub beta: f64,
    pub eta_out: f64,
    pub q_qd: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub purcell: Option<f64>,
    /// Purcell factor predicted from the mode volume, when one is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub purcell_from_mode: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quality: Option<f64>,
    pub brightness: f64,
}

/// Input document of the budget calculation. Explicit `beta`, `eta_out` or
/// `q_qd` values override the ones derived from the specs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetRequest {
    #[serde(default)]
    pub cavity: Option<CavitySpec>,
    #[serde(default)]
    pub emitter: Option<EmitterSpec>,
    #[serde(default)]
    pub eta_branch: RootBranch,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub eta_out: Option<f64>,
    #[serde(default)]
    pub q_qd: Option<f64>,
}

pub fn budget(request: &BudgetRequest) -> Result<BrightnessBudget> {
    if let Some(c) = &request.cavity {
        c.validate()?;
    }
    if let Some(e) = &request.emitter {
        e.validate()?;
    }
    let cavity = request.cavity.as_ref();
    let emitter = request.emitter.as_ref();

    let quality = cavity.map(|c| c.quality()).transpose()?.flatten();
    let purcell = emitter
        .map(|e| purcell_from_lifetimes(e.lifetime_bulk, e.lifetime_cavity))
        .transpose()?;
    let purcell_mode = match (cavity, quality) {
        (Some(c), Some(q)) => match (c.wavelength_vacuum, c.mode_volume) {
            (Some(l), Some(v)) => Some(purcell_from_mode(l, c.refractive_index, q, v)?),
            _ => None,
        },
        _ => None,
    };

    let beta = match (request.beta, purcell.or(purcell_mode)) {
        (Some(b), _) => b,
        (None, Some(f)) => beta_from_purcell(f)?,
        (None, None) => {
            return Err(Error::domain(
                "beta is undetermined: give emitter lifetimes, a mode volume or an explicit beta",
            ))
        }
    };
    let eta_out = match request.eta_out {
        Some(e) => e,
        None => cavity
            .map(|c| c.eta_out(request.eta_branch))
            .transpose()?
            .flatten()
            .ok_or_else(|| {
                Error::domain("eta_out is undetermined: give kappa_top/kappa_total, r_min or an explicit eta_out")
            })?,
    };
    let q_qd = match (request.q_qd, emitter) {
        (Some(q), _) => q,
        (None, Some(e)) => e.quantum_yield,
        (None, None) => return Err(Error::domain("q_qd is undetermined: give an emitter or an explicit q_qd")),
    };

    Ok(BrightnessBudget {
        beta,
        eta_out,
        q_qd,
        purcell: if request.beta.is_some() { None } else { purcell.or(purcell_mode) },
        purcell_from_mode: purcell_mode,
        quality,
        brightness: brightness(beta, eta_out, q_qd)?,
    })
}
