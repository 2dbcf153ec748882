//! TOML scenario files.
//!
//! Every key has a default, so an empty file is a valid scenario. Unknown
//! keys are rejected.
//!
//! ```toml
//! seed = 7
//! method = "reference"
//! duration_s = 2.0
//!
//! [waveform]
//! m = 0.7
//!
//! [battery]
//! initial_soc = [0.55, 0.5, 0.5, 0.5, 0.45]
//! ```

use std::fs;
use std::path::Path;

use mmspc_core::analysis::{RandlesParams, DEFAULT_CUTOFFS};
use mmspc_core::control::{DemandMode, Gains, LutPolicy};
use mmspc_core::electrical::{
    BatteryModule, InterconnectResistances, OcvMap, DEFAULT_CAPACITY_AH, DEFAULT_R_B,
    DEFAULT_R_LINK, DEFAULT_V_MAX, DEFAULT_V_MIN,
};
use mmspc_core::modulation::WaveformSpec;
use mmspc_core::sim::{Method, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::{Error, Result};

/// Scheduler name as written in files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    #[default]
    Proposed,
    ProposedSensorless,
    Reference,
}

impl From<MethodName> for Method {
    fn from(m: MethodName) -> Self {
        match m {
            MethodName::Proposed => Method::Proposed,
            MethodName::ProposedSensorless => Method::ProposedSensorless,
            MethodName::Reference => Method::Reference,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DemandName {
    #[default]
    EqualShare,
    SocProportional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LutName {
    #[default]
    Constant,
    Refresh,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveformSection {
    pub f_out_hz: f64,
    pub f_rate_hz: f64,
    pub m: f64,
    pub i_pk_a: f64,
    pub phi_rad: f64,
}

impl Default for WaveformSection {
    fn default() -> Self {
        let w = WaveformSpec::default();
        Self {
            f_out_hz: w.f_out,
            f_rate_hz: w.f_rate,
            m: w.m,
            i_pk_a: w.i_pk,
            phi_rad: w.phi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSection {
    pub feedback_delay_s: f64,
    pub toggle_limit: usize,
    pub reselect_idle: bool,
    pub kp: Option<f64>,
    pub ki: Option<f64>,
    pub windup_limit: Option<f64>,
    pub demand: DemandName,
    pub beta: f64,
    pub lut: LutName,
    pub lut_threshold_v: f64,
    pub sensorless_phase_shift_rad: f64,
}

impl Default for ControlSection {
    fn default() -> Self {
        Self {
            feedback_delay_s: 0.0,
            toggle_limit: 2,
            reselect_idle: true,
            kp: None,
            ki: None,
            windup_limit: None,
            demand: DemandName::EqualShare,
            beta: 2.0,
            lut: LutName::Constant,
            lut_threshold_v: 0.05,
            sensorless_phase_shift_rad: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceSection {
    pub update_period_s: f64,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        Self {
            update_period_s: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatterySection {
    pub capacity_ah: f64,
    pub r_b_ohm: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// State of charge of every module unless `initial_soc` is given.
    pub soc: f64,
    pub initial_soc: Option<Vec<f64>>,
    /// Half-width of a uniform perturbation added to every initial SoC.
    pub soc_jitter: f64,
}

impl Default for BatterySection {
    fn default() -> Self {
        Self {
            capacity_ah: DEFAULT_CAPACITY_AH,
            r_b_ohm: DEFAULT_R_B,
            v_min: DEFAULT_V_MIN,
            v_max: DEFAULT_V_MAX,
            soc: 0.5,
            initial_soc: None,
            soc_jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterconnectSection {
    pub r_sh_ohm: f64,
    pub r_sl_ohm: f64,
    /// Relative half-width of a uniform perturbation of every link.
    pub jitter: f64,
}

impl Default for InterconnectSection {
    fn default() -> Self {
        Self {
            r_sh_ohm: DEFAULT_R_LINK,
            r_sl_ohm: DEFAULT_R_LINK,
            jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandlesSection {
    pub r0_ohm: f64,
    pub rct_ohm: f64,
    pub cdl_f: f64,
    pub sigma_w: f64,
}

impl Default for RandlesSection {
    fn default() -> Self {
        let p = RandlesParams::default();
        Self {
            r0_ohm: p.r0,
            rct_ohm: p.rct,
            cdl_f: p.cdl,
            sigma_w: p.sigma_w,
        }
    }
}

/// Parsed scenario file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioFile {
    pub seed: u64,
    pub method: MethodName,
    pub n_modules: usize,
    pub duration_s: f64,
    pub cutoffs_hz: Vec<f64>,
    /// Module analysed by the experiments; defaults to the last module.
    pub target_module: Option<usize>,
    pub waveform: WaveformSection,
    pub control: ControlSection,
    pub reference: ReferenceSection,
    pub battery: BatterySection,
    pub interconnect: InterconnectSection,
    pub randles: RandlesSection,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        Self {
            seed: 0,
            method: MethodName::Proposed,
            n_modules: 5,
            duration_s: 2.0,
            cutoffs_hz: DEFAULT_CUTOFFS.to_vec(),
            target_module: None,
            waveform: WaveformSection::default(),
            control: ControlSection::default(),
            reference: ReferenceSection::default(),
            battery: BatterySection::default(),
            interconnect: InterconnectSection::default(),
            randles: RandlesSection::default(),
        }
    }
}

impl ScenarioFile {
    /// Parses TOML text.
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads and parses a file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Module analysed by the experiments.
    pub fn target(&self) -> usize {
        self.target_module
            .unwrap_or(self.n_modules.saturating_sub(1))
    }

    /// Randles parameters.
    pub fn randles_params(&self) -> Result<RandlesParams> {
        let r = &self.randles;
        let p = RandlesParams {
            r0: r.r0_ohm,
            rct: r.rct_ohm,
            cdl: r.cdl_f,
            sigma_w: r.sigma_w,
        };
        if [p.r0, p.rct, p.cdl, p.sigma_w].iter().all(|v| *v > 0.0) {
            Ok(p)
        } else {
            Err(Error::Config("randles parameters must be positive".into()))
        }
    }

    /// Builds and validates the simulation configuration. Jitter is drawn
    /// from a generator seeded with `seed`; with zero jitter the seed has no
    /// effect.
    pub fn scenario(&self) -> Result<ScenarioConfig> {
        let n = self.n_modules;
        let bad = |msg: String| Error::Config(msg);
        if n == 0 {
            return Err(bad("n_modules must be positive".into()));
        }
        if self.target() >= n {
            return Err(bad(format!("target_module {} out of range", self.target())));
        }
        let b = &self.battery;
        let mut socs = match &b.initial_soc {
            Some(v) if v.len() != n => {
                return Err(bad(format!(
                    "initial_soc has {} entries, expected {n}",
                    v.len()
                )))
            }
            Some(v) => v.clone(),
            None => vec![b.soc; n],
        };
        if !(b.soc_jitter >= 0.0
            && self.interconnect.jitter >= 0.0
            && self.interconnect.jitter < 1.0)
        {
            return Err(bad("jitter must lie in [0, 1)".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        if b.soc_jitter > 0.0 {
            for s in &mut socs {
                *s = (*s + rng.gen_range(-b.soc_jitter..=b.soc_jitter)).clamp(0.0, 1.0);
            }
        }
        let ocv = OcvMap::Affine {
            v_min: b.v_min,
            v_max: b.v_max,
        };
        let modules = socs
            .iter()
            .map(|&s| BatteryModule::new(s, b.capacity_ah, b.r_b_ohm, ocv.clone()))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(e.to_string()))?;

        let ic = &self.interconnect;
        let mut link = |r: f64| {
            if ic.jitter > 0.0 {
                r * (1.0 + rng.gen_range(-ic.jitter..=ic.jitter))
            } else {
                r
            }
        };
        let links = n.saturating_sub(1);
        let r_sh: Vec<f64> = (0..links).map(|_| link(ic.r_sh_ohm)).collect();
        let r_sl: Vec<f64> = (0..links).map(|_| link(ic.r_sl_ohm)).collect();
        let resistances =
            InterconnectResistances::new(r_sh, r_sl).map_err(|e| bad(e.to_string()))?;

        let c = &self.control;
        let gains = match (c.kp, c.ki) {
            (None, None) => None,
            (kp, ki) => {
                let base = match self.method {
                    MethodName::ProposedSensorless => Gains::SENSORLESS,
                    _ => Gains::SENSORED,
                };
                Some(Gains {
                    kp: kp.unwrap_or(base.kp),
                    ki: ki.unwrap_or(base.ki),
                })
            }
        };
        let w = &self.waveform;
        let cfg = ScenarioConfig {
            waveform: WaveformSpec {
                f_out: w.f_out_hz,
                f_rate: w.f_rate_hz,
                m: w.m,
                i_pk: w.i_pk_a,
                phi: w.phi_rad,
            },
            method: self.method.into(),
            feedback_delay: c.feedback_delay_s,
            update_period: self.reference.update_period_s,
            toggle_limit: c.toggle_limit,
            reselect_idle: c.reselect_idle,
            gains,
            windup_limit: c.windup_limit,
            demand_mode: match c.demand {
                DemandName::EqualShare => DemandMode::EqualShare,
                DemandName::SocProportional => DemandMode::SocProportional { beta: c.beta },
            },
            lut_policy: match c.lut {
                LutName::Constant => LutPolicy::Constant,
                LutName::Refresh => LutPolicy::Refresh {
                    threshold: c.lut_threshold_v,
                },
            },
            sensorless_phase_shift: c.sensorless_phase_shift_rad,
            modules,
            resistances,
            duration: self.duration_s,
            cutoffs: self.cutoffs_hz.clone(),
        };
        cfg.validate().map_err(|e| bad(e.to_string()))?;
        Ok(cfg)
    }
}
