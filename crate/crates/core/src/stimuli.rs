//! Periodic control waveforms (TDM schedule, chopper, PI-PWM) and electrode
//! input signals.
//!
//! Everything here is a pure function of time and parameters; no shared
//! mutable state. Sign conventions are fixed so that traces are
//! reproducible: visit counting starts with chopper sign +1 for every
//! channel at t = 0, and the reset window leads each multiplexer slot.

use crate::math;
use crate::model::{AfeParams, ChannelSource, DriftSpec, ElectrodeSource};
use crate::rng;
use crate::Result;
use crate::error::Error;

/// Fraction of each TDM slot spent in reset before the channel connects.
pub const DEFAULT_RESET_FRACTION: f64 = 0.1;

/// What the amplifier is doing at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseKind {
    /// Amplifier reset to its common-mode level.
    Reset,
    /// Channel `k` is connected and amplified.
    Channel(usize),
}

/// One contiguous phase of the TDM schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdmPhase {
    pub kind: PhaseKind,
    pub slot_start: f64,
    pub slot_end: f64,
}

impl TdmPhase {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.slot_start && t < self.slot_end
    }
}

/// Index of the multiplexer slot containing `t`.
pub fn slot_index(t: f64, params: &AfeParams) -> u64 {
    math::floor(t * params.f_m) as u64
}

/// Channel served by slot `slot`.
pub fn slot_channel(slot: u64, params: &AfeParams) -> usize {
    (slot % params.n_channels as u64) as usize
}

/// The TDM phase containing time `t`.
///
/// Slots of length 1/f_m cycle through channels 0..n; the leading
/// `reset_fraction` of every slot is a Reset phase, the remainder belongs to
/// the slot's channel. Phases tile the time axis with no gaps or overlaps.
pub fn tdm_phase_at(t: f64, params: &AfeParams, reset_fraction: f64) -> TdmPhase {
    debug_assert!(t >= 0.0);
    debug_assert!(reset_fraction > 0.0 && reset_fraction < 0.5);
    let slot_dt = 1.0 / params.f_m;
    let slot = slot_index(t, params);
    let start = slot as f64 * slot_dt;
    let reset_end = start + reset_fraction * slot_dt;
    if t < reset_end {
        TdmPhase {
            kind: PhaseKind::Reset,
            slot_start: start,
            slot_end: reset_end,
        }
    } else {
        TdmPhase {
            kind: PhaseKind::Channel(slot_channel(slot, params)),
            slot_start: reset_end,
            slot_end: start + slot_dt,
        }
    }
}

/// Chopper polarity seen by `channel` at time `t`.
///
/// The sign alternates on each successive visit of the channel, so every
/// channel sees an effective square wave at f_ch. All channels start at +1
/// for t = 0; with one visit per multiplexer frame the sign is simply the
/// parity of the frame index.
pub fn chopper_sign(t: f64, channel: usize, params: &AfeParams) -> i8 {
    let _ = channel; // same phase convention for every channel
    let frame = math::floor(t * 2.0 * params.f_ch) as u64;
    if frame % 2 == 0 {
        1
    } else {
        -1
    }
}

/// The five phase-interleaved PWM level waveforms over one period.
///
/// Level `k` is offset by k·t_pi/5 (2π/5 of phase) and high for
/// `widths[k]` pulse-width steps per period.
#[derive(Debug, Clone, PartialEq)]
pub struct PiPwmFrame {
    pub widths: [u8; 5],
    pub t_pi: f64,
    pub step: f64,
    steps_per_period: u32,
}

impl PiPwmFrame {
    /// Fraction of full scale represented by the widths: Σw/(5·steps).
    pub fn dc_fraction(&self) -> f64 {
        let sum: u32 = self.widths.iter().map(|&w| w as u32).sum();
        sum as f64 / (5.0 * self.steps_per_period as f64)
    }

    /// Level of waveform `k` at time `t`.
    pub fn level(&self, k: usize, t: f64) -> bool {
        let offset = k as f64 * self.t_pi / 5.0;
        let tau = ((t - offset) % self.t_pi + self.t_pi) % self.t_pi;
        tau < self.widths[k] as f64 * self.step
    }

    /// Number of levels high at time `t` (0..=5).
    pub fn summed(&self, t: f64) -> u32 {
        (0..5).map(|k| u32::from(self.level(k, t))).sum()
    }

    /// Exact total time waveform `k` is high inside `[a, b]`.
    pub fn high_time(&self, k: usize, a: f64, b: f64) -> f64 {
        debug_assert!(b >= a);
        let w = self.widths[k] as f64 * self.step;
        if w <= 0.0 {
            return 0.0;
        }
        let offset = k as f64 * self.t_pi / 5.0;
        // High-time of a periodic pulse starting each period at `offset`:
        // integrate the indicator from offset to x.
        let cum = |x: f64| -> f64 {
            let u = x - offset;
            let whole = math::floor(u / self.t_pi);
            let frac = u - whole * self.t_pi;
            whole * w + frac.min(w)
        };
        cum(b) - cum(a)
    }

    /// Total high time across all five waveforms inside `[a, b]`.
    pub fn total_high_time(&self, a: f64, b: f64) -> f64 {
        (0..5).map(|k| self.high_time(k, a, b)).sum()
    }
}

/// Build a PI-PWM frame from the five per-phase widths.
pub fn pipwm_frame(fine_widths: [u8; 5], params: &AfeParams) -> Result<PiPwmFrame> {
    let steps = params.pwm_steps_per_period();
    for &w in &fine_widths {
        if w as u32 > steps {
            return Err(Error::CodeOutOfRange {
                field: "fine_widths",
                value: w as i64,
                max: steps as i64,
            });
        }
    }
    Ok(PiPwmFrame {
        widths: fine_widths,
        t_pi: params.t_pi,
        step: params.pwm_step,
        steps_per_period: steps,
    })
}

/// Differential electrode voltage of channel `ch` at time `t`: signal plus
/// DC offset. Drift, when enabled, is added by the caller via [`DriftWalk`].
pub fn source_voltage(ch: usize, t: f64, src: &ElectrodeSource) -> f64 {
    let c: &ChannelSource = &src.channels[ch];
    c.waveform.value(t) + c.edo
}

/// Incremental random-walk evaluator for slow EDO drift.
///
/// The walk is a deterministic function of (seed, channel, step index), so
/// any two walkers over the same spec replay identical paths. `offset_at`
/// must be called with non-decreasing times.
#[derive(Debug, Clone)]
pub struct DriftWalk {
    spec: Option<DriftSpec>,
    seed: u64,
    channel: u64,
    steps_taken: u64,
    value: f64,
}

impl DriftWalk {
    pub fn new(spec: Option<DriftSpec>, seed: u64, channel: usize) -> Self {
        Self {
            spec,
            seed,
            channel: channel as u64,
            steps_taken: 0,
            value: 0.0,
        }
    }

    /// Walk offset at time `t` (non-decreasing calls).
    pub fn offset_at(&mut self, t: f64) -> f64 {
        let Some(spec) = &self.spec else {
            return 0.0;
        };
        if spec.step_sigma == 0.0 || spec.interval <= 0.0 {
            return 0.0;
        }
        let due = math::floor(t / spec.interval) as u64;
        while self.steps_taken < due {
            self.steps_taken += 1;
            self.value +=
                spec.step_sigma * rng::normal(self.seed, (self.channel << 32) | self.steps_taken);
        }
        self.value
    }
}
