//! Mismatch sampling and batch statistics for Monte-Carlo studies.
//!
//! A [`MismatchInstance`] is one fabrication draw: a relative error per
//! trimmable unit capacitor, a capacitance-equivalent offset per CDAC
//! switch, and an input offset of the EPC. Fixed branch capacitors (C_IN,
//! C_FB, C_IPF, C_EXT) are carried at their nominal values: the trim loops
//! recentre on absolute shifts, so only the per-element errors that distort
//! the trim lattices drive the batch spread.
//!
//! Draw layout: the internal-IBL sink and the external-IBL CDAC are
//! unit-capacitor (thermometer) arrays of 63 elements, the coarse servo DAC
//! is binary with eight bits (bit 7 carries the ±128 saturation code), the
//! fine servo has five uniform phase legs. Every element's error is an
//! independent Gaussian keyed by `(seed, element-id)` from the counter-based
//! generator, so adding channels or studies never perturbs existing draws.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::impedance;
use crate::model::AfeParams;
use crate::rng;
use crate::servo::{self, AnalyticPlant, DslConfig};
use crate::Result;

/// Number of unit capacitors in the 6-bit thermometer CDACs.
pub const CDAC_UNITS: usize = 63;
/// Number of binary bits in the coarse servo DAC model.
pub const DSLC_BITS: usize = 8;
/// Number of phase legs in the fine servo CDAC.
pub const DSLF_UNITS: usize = 5;

// Element-id banks for the counter-based draws.
const ID_IPFC_UNIT: u64 = 0x1000;
const ID_IPFC_SWITCH: u64 = 0x2000;
const ID_EPF_UNIT: u64 = 0x3000;
const ID_EPF_SWITCH: u64 = 0x4000;
const ID_DSLC_BIT: u64 = 0x5000;
const ID_DSLC_SWITCH: u64 = 0x6000;
const ID_DSLF_UNIT: u64 = 0x7000;
const ID_DSLF_SWITCH: u64 = 0x8000;
const ID_EPC_OFFSET: u64 = 0x9000;

/// Standard deviations of one mismatch draw.
#[derive(Debug, Clone, PartialEq)]
pub struct MismatchSigmas {
    /// Relative error per trimmable unit capacitor (dimensionless).
    pub cap_rel: f64,
    /// Capacitance-equivalent error per CDAC switch (F).
    pub switch_farads: f64,
    /// EPC input offset (V).
    pub epc_volts: f64,
}

impl Default for MismatchSigmas {
    fn default() -> Self {
        Self {
            cap_rel: 0.01,
            switch_farads: 0.25e-15,
            epc_volts: 20e-6,
        }
    }
}

impl MismatchSigmas {
    pub fn zero() -> Self {
        Self {
            cap_rel: 0.0,
            switch_farads: 0.0,
            epc_volts: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cap_rel < 0.0 || self.switch_farads < 0.0 || self.epc_volts < 0.0 {
            return Err(Error::Invalid("mismatch sigmas must be >= 0"));
        }
        Ok(())
    }
}

/// One Monte-Carlo draw of capacitor, switch and comparator errors.
#[derive(Debug, Clone, PartialEq)]
pub struct MismatchInstance {
    /// Relative errors of the internal-IBL sink unit caps.
    pub ipfc_units: Vec<f64>,
    /// Switch-charge offsets of the internal-IBL sink units (F).
    pub ipfc_switch: Vec<f64>,
    /// Relative errors of the external-IBL unit caps.
    pub epf_units: Vec<f64>,
    /// Switch-charge offsets of the external-IBL units (F).
    pub epf_switch: Vec<f64>,
    /// Relative errors of the coarse servo DAC bits.
    pub dslc_bits: Vec<f64>,
    /// Switch-charge offsets of the coarse servo DAC bits (F).
    pub dslc_switch: Vec<f64>,
    /// Relative errors of the fine servo phase legs.
    pub dslf_units: Vec<f64>,
    /// Switch-charge offsets of the fine servo phase legs (F).
    pub dslf_switch: Vec<f64>,
    /// EPC input-referred offset (V).
    pub epc_offset: f64,
    /// Seed this instance was drawn from.
    pub seed: u64,
}

impl MismatchInstance {
    /// All-zero instance (nominal device).
    pub fn zero(seed: u64) -> Self {
        Self {
            ipfc_units: vec![0.0; CDAC_UNITS],
            ipfc_switch: vec![0.0; CDAC_UNITS],
            epf_units: vec![0.0; CDAC_UNITS],
            epf_switch: vec![0.0; CDAC_UNITS],
            dslc_bits: vec![0.0; DSLC_BITS],
            dslc_switch: vec![0.0; DSLC_BITS],
            dslf_units: vec![0.0; DSLF_UNITS],
            dslf_switch: vec![0.0; DSLF_UNITS],
            epc_offset: 0.0,
            seed,
        }
    }

    pub fn is_zero(&self) -> bool {
        let all = |v: &[f64]| v.iter().all(|&x| x == 0.0);
        all(&self.ipfc_units)
            && all(&self.ipfc_switch)
            && all(&self.epf_units)
            && all(&self.epf_switch)
            && all(&self.dslc_bits)
            && all(&self.dslc_switch)
            && all(&self.dslf_units)
            && all(&self.dslf_switch)
            && self.epc_offset == 0.0
    }

    /// Effective internal-sink CDAC capacitance at `code` (thermometer sum).
    pub fn ipfc_cap(&self, code: u8, params: &AfeParams) -> f64 {
        thermometer_cap(code, params.c_ipfc_lsb, &self.ipfc_units, &self.ipfc_switch)
    }

    /// Effective external-IBL CDAC capacitance at `code`.
    pub fn epf_cap(&self, code: u8, params: &AfeParams) -> f64 {
        thermometer_cap(code, params.c_epf_lsb, &self.epf_units, &self.epf_switch)
    }

    /// Effective coarse servo DAC capacitance at magnitude `mag` (binary sum).
    pub fn dslc_cap(&self, mag: u16, params: &AfeParams) -> f64 {
        let mut cap = 0.0;
        for (b, (&err, &sw)) in self.dslc_bits.iter().zip(&self.dslc_switch).enumerate() {
            if mag & (1 << b) != 0 {
                cap += (1u32 << b) as f64 * params.c_dslc_lsb * (1.0 + err) + sw;
            }
        }
        cap
    }
}

fn thermometer_cap(code: u8, lsb: f64, units: &[f64], switches: &[f64]) -> f64 {
    let n = (code as usize).min(units.len());
    let mut cap = 0.0;
    for i in 0..n {
        cap += lsb * (1.0 + units[i]) + switches[i];
    }
    cap
}

/// Draw one mismatch instance. Deterministic in `(seed, sigmas)`.
pub fn sample_mismatch(seed: u64, sigmas: &MismatchSigmas) -> MismatchInstance {
    let draw = |bank: u64, i: usize, sigma: f64| sigma * rng::normal(seed, bank + i as u64);
    let vec_of = |bank: u64, n: usize, sigma: f64| -> Vec<f64> {
        (0..n).map(|i| draw(bank, i, sigma)).collect()
    };
    MismatchInstance {
        ipfc_units: vec_of(ID_IPFC_UNIT, CDAC_UNITS, sigmas.cap_rel),
        ipfc_switch: vec_of(ID_IPFC_SWITCH, CDAC_UNITS, sigmas.switch_farads),
        epf_units: vec_of(ID_EPF_UNIT, CDAC_UNITS, sigmas.cap_rel),
        epf_switch: vec_of(ID_EPF_SWITCH, CDAC_UNITS, sigmas.switch_farads),
        dslc_bits: vec_of(ID_DSLC_BIT, DSLC_BITS, sigmas.cap_rel),
        dslc_switch: vec_of(ID_DSLC_SWITCH, DSLC_BITS, sigmas.switch_farads),
        dslf_units: vec_of(ID_DSLF_UNIT, DSLF_UNITS, sigmas.cap_rel),
        dslf_switch: vec_of(ID_DSLF_SWITCH, DSLF_UNITS, sigmas.switch_farads),
        epc_offset: draw(ID_EPC_OFFSET, 0, sigmas.epc_volts),
        seed,
    }
}

/// What a batch evaluates per sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Study {
    /// Post-trim total input impedance at a frequency (Ω).
    ImpedanceAt(f64),
    /// EPC count margin between a one-LSB and a 1.5-LSB residual.
    DeltaN,
    /// Worst per-channel servo residual over an EDO grid spanning ±`edo_span`.
    CalibrationResidual,
}

/// Shared configuration of a batch run.
#[derive(Debug, Clone)]
pub struct BatchConfig {
    pub params: AfeParams,
    pub sigmas: MismatchSigmas,
    pub dsl: DslConfig,
    pub base_seed: u64,
    /// EDO grid half-span for the calibration-residual study (V).
    pub edo_span: f64,
}

impl BatchConfig {
    pub fn new(params: AfeParams, base_seed: u64) -> Self {
        Self {
            params,
            sigmas: MismatchSigmas::default(),
            dsl: DslConfig::default(),
            base_seed,
            edo_span: 0.384,
        }
    }
}

/// Per-sample result row.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampleRow {
    pub sample_id: usize,
    pub seed: u64,
    /// Study metric; NaN when the sample failed.
    pub metric: f64,
    pub flags: Vec<String>,
    pub error: Option<String>,
}

impl SampleRow {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Order statistics of a batch metric.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BatchStats {
    pub n: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
}

impl BatchStats {
    /// Aggregate from raw metric values. Order-independent.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Invalid("no successful samples to aggregate"));
        }
        let mut sorted: Vec<f64> = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite metrics"));
        let n = sorted.len();
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let pct = |q: f64| -> f64 {
            let h = q * (n - 1) as f64;
            let lo = h as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = h - lo as f64;
            sorted[lo] + frac * (sorted[hi] - sorted[lo])
        };
        Ok(Self {
            n,
            min: sorted[0],
            max: sorted[n - 1],
            mean,
            std: libm::sqrt(var),
            p5: pct(0.05),
            p50: pct(0.50),
            p95: pct(0.95),
        })
    }
}

/// Seed of sample `i` within a batch.
pub fn sample_seed(base_seed: u64, i: usize) -> u64 {
    rng::hash3(base_seed, 0xB47C, i as u64)
}

/// Evaluate one sample of a study. Failures are recorded in the row, never
/// panicking the batch.
pub fn run_sample(study: Study, i: usize, n_total: usize, cfg: &BatchConfig) -> SampleRow {
    let seed = sample_seed(cfg.base_seed, i);
    let mm = sample_mismatch(seed, &cfg.sigmas);
    let mut row = SampleRow {
        sample_id: i,
        seed,
        metric: f64::NAN,
        flags: Vec::new(),
        error: None,
    };

    let outcome: Result<f64> = (|| match study {
        Study::ImpedanceAt(f) => {
            let codes = impedance::trim_ibl(&cfg.params, &mm)?;
            let residuals = impedance::trimmed_residuals(&codes, &cfg.params, &mm);
            Ok(impedance::z_tot(f, &residuals, &cfg.params)?.z_tot)
        }
        Study::DeltaN => {
            let mut epc = cfg.dsl.epc.clone();
            epc.offset = mm.epc_offset;
            let (_, n_one) = servo::epc_compare(cfg.dsl.fine_lsb, &epc);
            let (_, n_one_half) = servo::epc_compare(1.5 * cfg.dsl.fine_lsb, &epc);
            Ok(n_one as f64 - n_one_half as f64)
        }
        Study::CalibrationResidual => {
            let edo = if n_total > 1 {
                -cfg.edo_span + 2.0 * cfg.edo_span * i as f64 / (n_total - 1) as f64
            } else {
                0.0
            };
            let mut dsl = cfg.dsl.clone();
            dsl.epc.offset = mm.epc_offset;
            let edos = vec![edo; cfg.params.n_channels];
            let mut plant = AnalyticPlant::new(cfg.params.clone(), mm.clone(), dsl.fine_lsb, edos);
            let mut worst = 0.0f64;
            for ch in 0..cfg.params.n_channels {
                let report = servo::calibrate_channel(&mut plant, ch, &dsl)?;
                for flag in &report.flags {
                    row.flags.push(format!("ch{ch}:{flag:?}"));
                }
                worst = worst.max(libm::fabs(report.residual_volts));
            }
            Ok(worst)
        }
    })();

    match outcome {
        Ok(metric) => row.metric = metric,
        Err(e) => row.error = Some(format!("{e}")),
    }
    row
}

/// Result of a batch run: per-sample rows (by sample index) plus aggregate
/// statistics over the successful samples.
#[derive(Debug, Clone)]
pub struct BatchResult {
    pub rows: Vec<SampleRow>,
    pub stats: BatchStats,
}

/// Run `n` samples of `study` sequentially. Samples are independent; callers
/// that want parallelism can evaluate [`run_sample`] per index and aggregate
/// with [`BatchStats::from_values`].
pub fn run_batch(study: Study, n: usize, cfg: &BatchConfig) -> Result<BatchResult> {
    if n == 0 {
        return Err(Error::Invalid("batch needs at least one sample"));
    }
    cfg.sigmas.validate()?;
    let rows: Vec<SampleRow> = (0..n).map(|i| run_sample(study, i, n, cfg)).collect();
    let ok: Vec<f64> = rows.iter().filter(|r| r.ok()).map(|r| r.metric).collect();
    let stats = BatchStats::from_values(&ok)?;
    Ok(BatchResult { rows, stats })
}
