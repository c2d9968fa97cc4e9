//! Unit-safe domain types and parameter validation shared by all other
//! modules.
//!
//! Every physical quantity is a 64-bit float in SI base units (farads,
//! hertz, volts, seconds, ohms); digital control words are integers.
//! Impedances in this design span 1e9–1e12 Ω and capacitances 1e-15–1e-11 F,
//! both comfortably inside f64 range.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::math;
use crate::Result;

/// Architecture constants of the front-end.
///
/// Defaults describe the 4-channel configuration: 40 pF / 0.4 pF input and
/// feedback capacitors (closed-loop gain 100), 2 kHz chopper, 16 kHz
/// multiplexing, 1.2 V supply.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AfeParams {
    /// Input capacitor C_IN (F).
    pub c_in: f64,
    /// Feedback capacitor C_FB (F).
    pub c_fb: f64,
    /// Lumped external/ESD parasitic capacitance C_EXT (F).
    pub c_ext: f64,
    /// Fixed internal positive-feedback capacitor C_IPF (F). Intentionally
    /// slightly above C_IN/(A0−1) so the sink CDAC always absorbs an
    /// over-compensation current; the default leaves the excess mid-range
    /// of the 6-bit sink array.
    pub c_ipf: f64,
    /// LSB of the 6-bit internal sink CDAC C_IPFC (F).
    pub c_ipfc_lsb: f64,
    /// LSB of the 6-bit external-IBL CDAC C_EPF (F).
    pub c_epf_lsb: f64,
    /// LSB of the 7-bit coarse DC-servo CDAC (F).
    pub c_dslc_lsb: f64,
    /// Unit capacitor of the 5-element fine DC-servo CDAC (F).
    pub c_dslf_unit: f64,
    /// Closed-loop gain A0 (dimensionless); must match c_in/c_fb within 1%.
    pub a0: f64,
    /// Chopper frequency per channel (Hz).
    pub f_ch: f64,
    /// Multiplexing frequency (Hz); n_channels slots per cycle.
    pub f_m: f64,
    /// Number of multiplexed electrode pairs.
    pub n_channels: usize,
    /// Supply voltage (V); the coarse servo CDAC is driven rail-to-rail.
    pub vdd: f64,
    /// PI-PWM period (s).
    pub t_pi: f64,
    /// PWM pulse-width step (s); t_pi must be an integer multiple.
    pub pwm_step: f64,
    /// First-order low-pass corner of the amplifier (Hz).
    pub lpf_cutoff: f64,
}

impl Default for AfeParams {
    fn default() -> Self {
        Self {
            c_in: 40e-12,
            c_fb: 0.4e-12,
            c_ext: 10e-12,
            c_ipf: 0.406e-12,
            c_ipfc_lsb: 5e-15,
            c_epf_lsb: 5e-15,
            c_dslc_lsb: 50e-15,
            c_dslf_unit: 10e-15,
            a0: 100.0,
            f_ch: 2000.0,
            f_m: 16_000.0,
            n_channels: 4,
            vdd: 1.2,
            t_pi: 1.5e-6,
            pwm_step: 50e-9,
            lpf_cutoff: 200.0,
        }
    }
}

impl AfeParams {
    /// Validate every invariant, returning the parameters unchanged on
    /// success. Reports the first violated invariant by name. Idempotent.
    pub fn validate(self) -> Result<Self> {
        let caps = [
            (self.c_in, "capacitance must be positive: c_in"),
            (self.c_fb, "capacitance must be positive: c_fb"),
            (self.c_ext, "capacitance must be positive: c_ext"),
            (self.c_ipf, "capacitance must be positive: c_ipf"),
            (self.c_ipfc_lsb, "capacitance must be positive: c_ipfc_lsb"),
            (self.c_epf_lsb, "capacitance must be positive: c_epf_lsb"),
            (self.c_dslc_lsb, "capacitance must be positive: c_dslc_lsb"),
            (self.c_dslf_unit, "capacitance must be positive: c_dslf_unit"),
        ];
        for (c, msg) in caps {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::Invalid(msg));
            }
        }
        for (f, msg) in [
            (self.f_ch, "frequency must be positive: f_ch"),
            (self.f_m, "frequency must be positive: f_m"),
            (self.lpf_cutoff, "frequency must be positive: lpf_cutoff"),
        ] {
            if !(f > 0.0) || !f.is_finite() {
                return Err(Error::Invalid(msg));
            }
        }
        if self.n_channels == 0 {
            return Err(Error::Invalid("n_channels must be at least 1"));
        }
        if !(self.vdd > 0.0) {
            return Err(Error::Invalid("vdd must be positive"));
        }
        if !(self.t_pi > 0.0) || !(self.pwm_step > 0.0) {
            return Err(Error::Invalid("t_pi and pwm_step must be positive"));
        }
        // Each channel is visited at twice its chopper rate.
        let expect_fm = self.n_channels as f64 * 2.0 * self.f_ch;
        if math::fabs(self.f_m - expect_fm) > 1e-9 * expect_fm {
            return Err(Error::Invalid(
                "f_m must equal n_channels * 2 * f_ch",
            ));
        }
        // The gain is set capacitively.
        if math::fabs(self.a0 - self.c_in / self.c_fb) > 0.01 * self.a0 {
            return Err(Error::Invalid("a0 must equal c_in / c_fb within 1%"));
        }
        let ratio = self.t_pi / self.pwm_step;
        if math::fabs(ratio - math::round(ratio)) > 1e-6 {
            return Err(Error::Invalid(
                "t_pi not an integer multiple of pwm_step",
            ));
        }
        Ok(self)
    }

    /// Number of pulse-width steps per PWM period (30 at defaults).
    pub fn pwm_steps_per_period(&self) -> u32 {
        math::round(self.t_pi / self.pwm_step) as u32
    }

    /// Per-channel visit rate (Hz): f_m / n_channels, equal to 2·f_ch.
    pub fn visit_rate(&self) -> f64 {
        self.f_m / self.n_channels as f64
    }
}

/// Number of selectable codes of the fine servo CDAC: five phases of
/// `pwm_steps_per_period` width steps each.
pub const FINE_CODE_MAX: u16 = 150;

/// Magnitude limit of the coarse servo code (sign + 7-bit DAC saturating at
/// full scale).
pub const COARSE_CODE_MAX: i16 = 128;

/// The four digital control words of one channel.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrimCodes {
    /// 6-bit internal-IBL sink CDAC code (0..=63).
    pub ipfc_code: u8,
    /// 6-bit external-IBL CDAC code (0..=63).
    pub epf_code: u8,
    /// Coarse servo code, sign + magnitude (−128..=+128).
    pub coarse_code: i16,
    /// Per-phase PWM pulse widths of the fine servo, each 0..=30 steps.
    pub fine_widths: [u8; 5],
    /// Drive polarity of the fine servo (+1 adds to the coarse suppression,
    /// −1 opposes it).
    pub fine_sign: i8,
}

impl Default for TrimCodes {
    fn default() -> Self {
        Self {
            ipfc_code: 0,
            epf_code: 0,
            coarse_code: 0,
            fine_widths: [0; 5],
            fine_sign: 1,
        }
    }
}

impl TrimCodes {
    /// Check every code range.
    pub fn validate(&self) -> Result<()> {
        if self.ipfc_code > 63 {
            return Err(Error::CodeOutOfRange {
                field: "ipfc_code",
                value: self.ipfc_code as i64,
                max: 63,
            });
        }
        if self.epf_code > 63 {
            return Err(Error::CodeOutOfRange {
                field: "epf_code",
                value: self.epf_code as i64,
                max: 63,
            });
        }
        if self.coarse_code.abs() > COARSE_CODE_MAX {
            return Err(Error::CodeOutOfRange {
                field: "coarse_code",
                value: self.coarse_code as i64,
                max: COARSE_CODE_MAX as i64,
            });
        }
        for &w in &self.fine_widths {
            if w > 30 {
                return Err(Error::CodeOutOfRange {
                    field: "fine_widths",
                    value: w as i64,
                    max: 30,
                });
            }
        }
        if self.fine_sign != 1 && self.fine_sign != -1 {
            return Err(Error::Invalid("fine_sign must be +1 or -1"));
        }
        Ok(())
    }

    /// Total fine code: the sum of the five widths (0..=150).
    pub fn fine_code(&self) -> u16 {
        self.fine_widths.iter().map(|&w| w as u16).sum()
    }

    /// Distribute a single fine code round-robin across the five phases so
    /// the PWM legs stay balanced: w_k = c/5 plus one extra step for the
    /// first c mod 5 phases.
    pub fn set_fine_code(&mut self, code: u16) -> Result<()> {
        if code > FINE_CODE_MAX {
            return Err(Error::CodeOutOfRange {
                field: "fine_code",
                value: code as i64,
                max: FINE_CODE_MAX as i64,
            });
        }
        let base = (code / 5) as u8;
        let extra = (code % 5) as usize;
        for (k, w) in self.fine_widths.iter_mut().enumerate() {
            *w = base + u8::from(k < extra);
        }
        Ok(())
    }

    /// Widths for a given total fine code (round-robin mapping).
    pub fn widths_for_code(code: u16) -> [u8; 5] {
        let mut c = Self::default();
        c.set_fine_code(code.min(FINE_CODE_MAX)).expect("clamped");
        c.fine_widths
    }
}

/// Input-referred noise description of the amplifier.
///
/// Only the 0.5–100 Hz band integral is externally constrained; the split
/// into a white floor plus a 1/f corner is this model's choice. The default
/// floor is fitted so the band integral of `e²·(1 + f_c/f)` equals
/// (0.27 µV)².
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseSpec {
    /// White noise floor (V/√Hz). Zero disables noise entirely.
    pub white_floor: f64,
    /// 1/f corner frequency (Hz). Zero disables the flicker component.
    pub flicker_corner: f64,
    /// Seed for the per-channel noise streams.
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            white_floor: 21.9e-9,
            flicker_corner: 10.0,
            seed: 1,
        }
    }
}

impl NoiseSpec {
    pub fn disabled() -> Self {
        Self {
            white_floor: 0.0,
            flicker_corner: 0.0,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.white_floor < 0.0 || !self.white_floor.is_finite() {
            return Err(Error::Invalid("white_floor must be >= 0"));
        }
        if self.flicker_corner < 0.0 || !self.flicker_corner.is_finite() {
            return Err(Error::Invalid("flicker_corner must be >= 0"));
        }
        Ok(())
    }

    pub fn is_enabled(&self) -> bool {
        self.white_floor > 0.0
    }
}

/// Differential waveform of one electrode pair.
#[derive(Debug, Clone, PartialEq)]
pub enum Waveform {
    /// Constant differential voltage (V).
    Constant(f64),
    /// Sine of given amplitude (V) and frequency (Hz).
    Sine { amplitude: f64, frequency: f64 },
    /// Sampled waveform; linearly interpolated, clamped at the ends.
    Samples { times: Vec<f64>, volts: Vec<f64> },
}

impl Waveform {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Waveform::Constant(v) => *v,
            Waveform::Sine {
                amplitude,
                frequency,
            } => amplitude * math::sin(math::TAU * frequency * t),
            Waveform::Samples { times, volts } => {
                if times.is_empty() {
                    return 0.0;
                }
                match times.iter().position(|&tt| tt >= t) {
                    Some(0) => volts[0],
                    Some(i) => {
                        let span = times[i] - times[i - 1];
                        if span <= 0.0 {
                            volts[i]
                        } else {
                            let a = (t - times[i - 1]) / span;
                            volts[i - 1] + a * (volts[i] - volts[i - 1])
                        }
                    }
                    None => *volts.last().unwrap(),
                }
            }
        }
    }

    /// Frequency at which quasi-static input attenuation is evaluated.
    pub fn dominant_frequency(&self) -> f64 {
        match self {
            Waveform::Sine { frequency, .. } => *frequency,
            Waveform::Constant(_) => 1.0,
            Waveform::Samples { .. } => 10.0,
        }
    }
}

/// Slow electrode-offset drift: a Gaussian random walk stepping every
/// `interval` seconds. Disabled by default.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSpec {
    /// Standard deviation of one walk step (V).
    pub step_sigma: f64,
    /// Time between steps (s).
    pub interval: f64,
}

/// One electrode pair: signal, DC offset and source impedance.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSource {
    pub waveform: Waveform,
    /// Electrode DC offset (V). Offsets up to ±0.5 V are accepted; ±384 mV
    /// is the servo's specified suppression range.
    pub edo: f64,
    /// Electrode impedance magnitude (Ω), real-valued.
    pub z_electrode: f64,
    /// Optional slow EDO drift.
    pub drift: Option<DriftSpec>,
}

impl ChannelSource {
    /// Shorted input: zero signal, zero offset, zero source impedance.
    pub fn grounded() -> Self {
        Self {
            waveform: Waveform::Constant(0.0),
            edo: 0.0,
            z_electrode: 0.0,
            drift: None,
        }
    }

    pub fn sine(amplitude: f64, frequency: f64) -> Self {
        Self {
            waveform: Waveform::Sine {
                amplitude,
                frequency,
            },
            edo: 0.0,
            z_electrode: 1e6,
            drift: None,
        }
    }
}

/// Per-channel electrode sources for a whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeSource {
    pub channels: Vec<ChannelSource>,
}

impl ElectrodeSource {
    pub fn grounded(n_channels: usize) -> Self {
        Self {
            channels: vec![ChannelSource::grounded(); n_channels],
        }
    }

    pub fn validate(&self, params: &AfeParams) -> Result<()> {
        if self.channels.len() != params.n_channels {
            return Err(Error::Invalid(
                "source channel count must match n_channels",
            ));
        }
        for ch in &self.channels {
            if math::fabs(ch.edo) > 0.5 {
                return Err(Error::Invalid("|edo| must be at most 0.5 V"));
            }
            if ch.z_electrode < 0.0 {
                return Err(Error::Invalid("z_electrode must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Uniformly sampled input/output record of one channel.
///
/// Sample times are `i * dt` by construction, which keeps the
/// strictly-increasing / uniform-period invariants structural.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTrace {
    pub channel: usize,
    /// Sample period (s).
    pub dt: f64,
    pub v_in: Vec<f64>,
    pub v_out: Vec<f64>,
}

impl ChannelTrace {
    pub fn new(channel: usize, dt: f64) -> Self {
        Self {
            channel,
            dt,
            v_in: Vec::new(),
            v_out: Vec::new(),
        }
    }

    pub fn push(&mut self, v_in: f64, v_out: f64) {
        self.v_in.push(v_in);
        self.v_out.push(v_out);
    }

    pub fn len(&self) -> usize {
        self.v_out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_out.is_empty()
    }

    pub fn time_at(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / self.dt
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.dt
    }
}
