//! DC servo loop: coarse SAR search over the 7-bit CDAC, fine
//! phase-interleaved PWM trimming, the edge-pursuit-comparator quantizer,
//! threshold self-calibration and the slow tracking loop.
//!
//! The loop works in input-referred volts throughout: the integrator's DC
//! estimate of the amplifier output is divided by the gain before it meets
//! the comparator, so comparator constants and servo steps are all quoted
//! at the electrode.
//!
//! Calibration order per channel: ground the inputs and count the
//! comparator oscillations for a deliberate one-LSB fine disturbance
//! (that count becomes the tracking threshold N_TH), then reconnect and run
//! the coarse successive-approximation search, then walk the fine code
//! until the comparator count clears N_TH. Channels share one amplifier, so
//! calibration of the four channels is serialized by the caller.

use alloc::vec;
use alloc::vec::Vec;

use crate::dsp::OnePole;
use crate::error::Error;
use crate::math;
use crate::model::{AfeParams, TrimCodes, COARSE_CODE_MAX, FINE_CODE_MAX};
use crate::montecarlo::MismatchInstance;
use crate::Result;

/// Behavioral edge-pursuit comparator.
///
/// The race duration maps input magnitude to an oscillation count
/// N = k_epc/|v|; the winner of the race is the sign. `k_epc` is the
/// bias-current-over-transconductance constant I_B/(2·g_m).
#[derive(Debug, Clone, PartialEq)]
pub struct EpcModel {
    /// Count constant (V): N = k_epc/|v_eff|.
    pub k_epc: f64,
    /// Saturation clamp on the count (zero-input comparisons terminate).
    pub n_max: u32,
    /// Mismatch-injected input offset (V).
    pub offset: f64,
}

impl Default for EpcModel {
    fn default() -> Self {
        Self {
            k_epc: 0.9e-3,
            n_max: 10_000,
            offset: 0.0,
        }
    }
}

/// One comparison: sign of the effective input and the oscillation count.
///
/// Ties resolve to +1. Counts floor the ratio, with a one-part-per-trillion
/// guard so exact integer ratios read fully.
pub fn epc_compare(v_diff: f64, model: &EpcModel) -> (i8, u32) {
    let v_eff = v_diff + model.offset;
    let sign: i8 = if v_eff >= 0.0 { 1 } else { -1 };
    let mag = math::fabs(v_eff);
    if mag == 0.0 {
        return (sign, model.n_max);
    }
    let ratio = model.k_epc / mag;
    let n = math::floor(ratio * (1.0 + 1e-12));
    if n >= model.n_max as f64 {
        (sign, model.n_max)
    } else if n <= 0.0 {
        (sign, 0)
    } else {
        (sign, n as u32)
    }
}

/// Servo constants shared by all channels.
#[derive(Debug, Clone, PartialEq)]
pub struct DslConfig {
    /// Input-referred suppression per fine LSB (V). An independent
    /// calibration constant; the PWM charge model does not reproduce it.
    pub fine_lsb: f64,
    /// Tracking sample interval (s).
    pub track_interval: f64,
    pub epc: EpcModel,
}

impl Default for DslConfig {
    fn default() -> Self {
        Self {
            fine_lsb: 90e-6,
            track_interval: 8.0,
            epc: EpcModel::default(),
        }
    }
}

/// Calibration lifecycle of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum DslPhase {
    Uncalibrated,
    Calibrated,
    Tracking,
}

/// Which calibration stage issued a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Stage {
    Threshold,
    Coarse,
    Fine,
    Track,
}

/// Out-of-band conditions detected during calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CalFlag {
    /// |EDO| beyond the ±384 mV coarse range; code saturated at full scale.
    EdoOutOfRange,
    /// Fine code saturated with the residual still above threshold.
    FineRangeExhausted,
}

/// One logged comparator evaluation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CalStep {
    pub stage: Stage,
    pub coarse: i16,
    pub fine: u16,
    pub fine_sign: i8,
    pub sign: i8,
    pub n: u32,
}

/// Per-channel servo state machine.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DslState {
    pub channel: usize,
    pub coarse_code: i16,
    pub fine_code: u16,
    pub fine_sign: i8,
    /// Tracking threshold: comparator count of a one-fine-LSB residual.
    pub n_th: u32,
    pub last_sample_time: f64,
    pub phase: DslPhase,
    /// Total comparator evaluations so far.
    pub comparisons: u32,
    pub flags: Vec<CalFlag>,
    pub log: Vec<CalStep>,
}

impl DslState {
    pub fn new(channel: usize) -> Self {
        Self {
            channel,
            coarse_code: 0,
            fine_code: 0,
            fine_sign: 1,
            n_th: 1,
            last_sample_time: 0.0,
            phase: DslPhase::Uncalibrated,
            comparisons: 0,
            flags: Vec::new(),
            log: Vec::new(),
        }
    }
}

/// Per-channel calibration outcome, persistable and reloadable.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CalReport {
    pub channel: usize,
    pub codes: TrimCodes,
    pub n_th: u32,
    /// True model residual after calibration (V, input-referred).
    pub residual_volts: f64,
    pub comparisons_used: u32,
    pub flags: Vec<CalFlag>,
    pub log: Vec<CalStep>,
}

/// The plant a servo calibrates against: something that applies DSL codes
/// and reports the settled input-referred DC residual.
pub trait ServoPlant {
    fn set_dsl(&mut self, ch: usize, coarse: i16, fine_code: u16, fine_sign: i8);
    /// Settled integrator output, input-referred (V).
    fn residual_dc(&self, ch: usize) -> f64;
    fn set_grounded(&mut self, grounded: bool);
    fn is_grounded(&self) -> bool;
}

/// Input-referred suppression of one coarse LSB: the CDAC is driven
/// rail-to-rail differentially, so ΔV = 2·vdd·C_LSB/C_IN.
pub fn coarse_step_volts(params: &AfeParams) -> f64 {
    2.0 * params.vdd * params.c_dslc_lsb / params.c_in
}

/// Input-referred suppression of a signed coarse code under mismatch.
pub fn coarse_suppression_volts(code: i16, params: &AfeParams, mm: &MismatchInstance) -> f64 {
    let mag = code.unsigned_abs().min(COARSE_CODE_MAX as u16);
    let cap = mm.dslc_cap(mag, params);
    let v = 2.0 * params.vdd * cap / params.c_in;
    if code < 0 {
        -v
    } else {
        v
    }
}

/// Input-referred suppression of a fine code under mismatch. Each width
/// step of phase k is one `fine_lsb`, scaled by the leg's unit error;
/// active legs add their switch-charge offset.
pub fn fine_suppression_volts(
    fine_code: u16,
    fine_sign: i8,
    fine_lsb: f64,
    params: &AfeParams,
    mm: &MismatchInstance,
) -> f64 {
    let widths = TrimCodes::widths_for_code(fine_code);
    let mut v = 0.0;
    for (k, &w) in widths.iter().enumerate() {
        if w > 0 {
            v += w as f64 * fine_lsb * (1.0 + mm.dslf_units[k]);
            v += mm.dslf_switch[k] * 2.0 * params.vdd / params.c_in;
        }
    }
    fine_sign as f64 * v
}

/// Combined input-referred DSL correction.
pub fn dsl_correction_volts(
    coarse: i16,
    fine_code: u16,
    fine_sign: i8,
    fine_lsb: f64,
    params: &AfeParams,
    mm: &MismatchInstance,
) -> f64 {
    coarse_suppression_volts(coarse, params, mm)
        + fine_suppression_volts(fine_code, fine_sign, fine_lsb, params, mm)
}

/// Closed-form plant: the settled DC residual is the electrode offset minus
/// the applied DSL correction. Fast enough for exhaustive sweeps and
/// Monte-Carlo batches; the transient engine applies the identical charge
/// model.
#[derive(Debug, Clone)]
pub struct AnalyticPlant {
    params: AfeParams,
    mm: MismatchInstance,
    fine_lsb: f64,
    edo: Vec<f64>,
    dsl: Vec<(i16, u16, i8)>,
    grounded: bool,
}

impl AnalyticPlant {
    pub fn new(params: AfeParams, mm: MismatchInstance, fine_lsb: f64, edo: Vec<f64>) -> Self {
        let n = params.n_channels;
        assert_eq!(edo.len(), n, "one EDO per channel");
        Self {
            params,
            mm,
            fine_lsb,
            edo,
            dsl: vec![(0, 0, 1); n],
            grounded: false,
        }
    }

    /// Change a channel's electrode offset (used by drift/tracking tests).
    pub fn set_edo(&mut self, ch: usize, edo: f64) {
        self.edo[ch] = edo;
    }

    pub fn params(&self) -> &AfeParams {
        &self.params
    }
}

impl ServoPlant for AnalyticPlant {
    fn set_dsl(&mut self, ch: usize, coarse: i16, fine_code: u16, fine_sign: i8) {
        self.dsl[ch] = (coarse, fine_code, fine_sign);
    }

    fn residual_dc(&self, ch: usize) -> f64 {
        let source = if self.grounded { 0.0 } else { self.edo[ch] };
        let (coarse, fine, sign) = self.dsl[ch];
        source
            - dsl_correction_volts(coarse, fine, sign, self.fine_lsb, &self.params, &self.mm)
    }

    fn set_grounded(&mut self, grounded: bool) {
        self.grounded = grounded;
    }

    fn is_grounded(&self) -> bool {
        self.grounded
    }
}

fn observe<P: ServoPlant>(
    plant: &mut P,
    ch: usize,
    cfg: &DslConfig,
    state: &mut DslState,
    stage: Stage,
    coarse: i16,
    fine: u16,
    fine_sign: i8,
) -> (i8, u32) {
    plant.set_dsl(ch, coarse, fine, fine_sign);
    let (sign, n) = epc_compare(plant.residual_dc(ch), &cfg.epc);
    state.comparisons += 1;
    state.log.push(CalStep {
        stage,
        coarse,
        fine,
        fine_sign,
        sign,
        n,
    });
    (sign, n)
}

/// Extract the tracking threshold N_TH: with the inputs grounded and the
/// fine DSL set to exactly one LSB, the comparator count of that deliberate
/// disturbance is the count a one-LSB residual will produce later.
pub fn calibrate_nth<P: ServoPlant>(
    plant: &mut P,
    ch: usize,
    cfg: &DslConfig,
    state: &mut DslState,
) -> Result<u32> {
    if !plant.is_grounded() {
        return Err(Error::NotGrounded);
    }
    let (_, n) = observe(plant, ch, cfg, state, Stage::Threshold, 0, 1, 1);
    state.n_th = n.max(1);
    Ok(state.n_th)
}

/// Fine offset injected during the coarse search: ≈ half a coarse LSB
/// (17 × 90 µV ≈ 1.53 mV against a 3 mV step), turning each sign comparison
/// into a round-to-nearest decision.
const COARSE_MID_OFFSET: u16 = 17;

/// Successive-approximation coarse search: one polarity comparison, seven
/// magnitude bits, plus a full-scale promotion and range check on the
/// saturated path. The fine DSL injects half a coarse step against the
/// search direction so the result rounds to the nearest code.
pub fn coarse_calibrate<P: ServoPlant>(
    plant: &mut P,
    ch: usize,
    cfg: &DslConfig,
    state: &mut DslState,
) -> Result<()> {
    if plant.is_grounded() {
        return Err(Error::Invalid("coarse calibration needs live inputs"));
    }
    let (dir, _) = observe(plant, ch, cfg, state, Stage::Coarse, 0, 0, 1);
    let dir16 = dir as i16;

    let mut mag: i16 = 0;
    for bit in [64, 32, 16, 8, 4, 2, 1] {
        let cand = mag + bit;
        let (s, _) = observe(
            plant,
            ch,
            cfg,
            state,
            Stage::Coarse,
            dir16 * cand,
            COARSE_MID_OFFSET,
            -dir,
        );
        if s == dir {
            mag = cand;
        }
    }
    if mag == 127 {
        // All magnitude bits kept: decide between 127 and the saturation
        // code 128, then check whether the offset exceeds the range.
        let (s, _) = observe(
            plant,
            ch,
            cfg,
            state,
            Stage::Coarse,
            dir16 * 128,
            COARSE_MID_OFFSET,
            -dir,
        );
        if s == dir {
            mag = 128;
            let (s2, _) = observe(
                plant,
                ch,
                cfg,
                state,
                Stage::Coarse,
                dir16 * 128,
                COARSE_MID_OFFSET,
                dir,
            );
            if s2 == dir {
                state.flags.push(CalFlag::EdoOutOfRange);
            }
        }
    }

    state.coarse_code = dir16 * mag;
    state.fine_code = 0;
    state.fine_sign = 1;
    plant.set_dsl(ch, state.coarse_code, 0, 1);
    Ok(())
}

/// Move the fine code one LSB so the correction chases the residual sign.
/// Returns false when the code is already saturated in that direction.
fn step_fine(state: &mut DslState, residual_sign: i8) -> bool {
    if state.fine_code == 0 {
        state.fine_sign = residual_sign;
        state.fine_code = 1;
        true
    } else if residual_sign == state.fine_sign {
        if state.fine_code >= FINE_CODE_MAX {
            return false;
        }
        state.fine_code += 1;
        true
    } else {
        state.fine_code -= 1;
        true
    }
}

/// Walk the fine code by single LSBs until the comparator count reaches
/// N_TH (residual inside one fine LSB) or the code saturates.
pub fn fine_calibrate<P: ServoPlant>(
    plant: &mut P,
    ch: usize,
    cfg: &DslConfig,
    state: &mut DslState,
) -> Result<()> {
    state.fine_code = 0;
    state.fine_sign = 1;
    plant.set_dsl(ch, state.coarse_code, 0, 1);

    // A full fine sweep is 150 steps; anything beyond that is a logic bug.
    for _ in 0..=(FINE_CODE_MAX as usize + 10) {
        let (sign, n) = observe(
            plant,
            ch,
            cfg,
            state,
            Stage::Fine,
            state.coarse_code,
            state.fine_code,
            state.fine_sign,
        );
        if n >= state.n_th {
            break;
        }
        if !step_fine(state, sign) {
            state.flags.push(CalFlag::FineRangeExhausted);
            break;
        }
        plant.set_dsl(ch, state.coarse_code, state.fine_code, state.fine_sign);
    }
    state.phase = DslPhase::Calibrated;
    Ok(())
}

/// Tracking sample: at most one comparison per `track_interval`. When the
/// count of the integrator's DC estimate falls below N_TH the fine code
/// moves one LSB toward the residual. Between sampling instants nothing is
/// evaluated and no comparator power is burned.
pub fn track<P: ServoPlant>(
    plant: &mut P,
    ch: usize,
    cfg: &DslConfig,
    state: &mut DslState,
    now: f64,
) {
    if !matches!(state.phase, DslPhase::Calibrated | DslPhase::Tracking) {
        return;
    }
    if now - state.last_sample_time < cfg.track_interval {
        return;
    }
    let (sign, n) = observe(
        plant,
        ch,
        cfg,
        state,
        Stage::Track,
        state.coarse_code,
        state.fine_code,
        state.fine_sign,
    );
    if n < state.n_th {
        if step_fine(state, sign) {
            plant.set_dsl(ch, state.coarse_code, state.fine_code, state.fine_sign);
        } else if !state.flags.contains(&CalFlag::FineRangeExhausted) {
            state.flags.push(CalFlag::FineRangeExhausted);
        }
    }
    state.last_sample_time = now;
    state.phase = DslPhase::Tracking;
}

/// Full one-time calibration of one channel: threshold extraction with
/// grounded inputs, coarse SAR, fine walk. The plant is left live with the
/// final codes applied.
pub fn calibrate_channel<P: ServoPlant>(
    plant: &mut P,
    ch: usize,
    cfg: &DslConfig,
) -> Result<CalReport> {
    let mut state = DslState::new(ch);
    plant.set_grounded(true);
    calibrate_nth(plant, ch, cfg, &mut state)?;
    plant.set_grounded(false);
    coarse_calibrate(plant, ch, cfg, &mut state)?;
    fine_calibrate(plant, ch, cfg, &mut state)?;

    let residual = plant.residual_dc(ch);
    let mut codes = TrimCodes {
        coarse_code: state.coarse_code,
        fine_sign: state.fine_sign,
        ..TrimCodes::default()
    };
    codes.set_fine_code(state.fine_code)?;
    Ok(CalReport {
        channel: ch,
        codes,
        n_th: state.n_th,
        residual_volts: residual,
        comparisons_used: state.comparisons,
        flags: state.flags,
        log: state.log,
    })
}

/// Restore a servo state from a stored report so tracking can resume
/// without recalibration.
pub fn state_from_report(report: &CalReport, now: f64) -> DslState {
    let mut state = DslState::new(report.channel);
    state.coarse_code = report.codes.coarse_code;
    state.fine_code = report.codes.fine_code();
    state.fine_sign = report.codes.fine_sign;
    state.n_th = report.n_th;
    state.phase = DslPhase::Calibrated;
    state.last_sample_time = now;
    state
}

/// DC estimate presented to the comparator: first-order low-pass (50 mHz by
/// default) over the output trace, final value.
pub fn integrator_output(samples: &[f64], dt: f64, cutoff: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let mut lp = OnePole::new(cutoff, dt);
    let mut y = 0.0;
    for &x in samples {
        y = lp.step(x);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::{sample_mismatch, MismatchSigmas};
    use proptest::prelude::*;

    fn params() -> AfeParams {
        AfeParams::default()
    }

    fn plant_with_edo(edo: f64) -> AnalyticPlant {
        AnalyticPlant::new(
            params(),
            MismatchInstance::zero(0),
            DslConfig::default().fine_lsb,
            vec![edo, 0.0, 0.0, 0.0],
        )
    }

    /// Exhaustive oracle: the signed coarse code minimizing |edo − code·step|,
    /// ties toward the smaller magnitude.
    fn coarse_oracle(edo: f64, step: f64) -> i16 {
        let mut best = 0i16;
        let mut best_cost = math::fabs(edo);
        for mag in 1..=COARSE_CODE_MAX {
            for code in [mag, -mag] {
                let cost = math::fabs(edo - code as f64 * step);
                if cost < best_cost - 1e-15 {
                    best = code;
                    best_cost = cost;
                }
            }
        }
        best
    }

    #[test]
    fn coarse_step_is_three_millivolts() {
        let p = params();
        let step = coarse_step_volts(&p);
        // Charge-redistribution oracle: ΔV = 2·vdd·C/C_IN.
        assert!((step - 2.0 * 1.2 * 50e-15 / 40e-12).abs() < 1e-18);
        assert!((step - 3.0e-3).abs() < 1e-12);
        // 128 codes cover the specified ±384 mV.
        assert!((128.0 * step - 0.384).abs() < 1e-12);
        // Linear in the LSB capacitor.
        let doubled = AfeParams {
            c_dslc_lsb: 100e-15,
            ..p
        };
        assert!((coarse_step_volts(&doubled) - 2.0 * step).abs() < 1e-15);
    }

    #[test]
    fn epc_examples() {
        let m = EpcModel::default();
        let (s, n) = epc_compare(90e-6, &m);
        assert_eq!((s, n), (1, 10));
        let (s, n) = epc_compare(135e-6, &m);
        assert_eq!((s, n), (1, 6));
        // ΔN between the two is 4, comfortably at least 1.
        let (s, n) = epc_compare(0.0, &m);
        assert_eq!((s, n), (1, m.n_max));
        let (s, n) = epc_compare(-90e-6, &m);
        assert_eq!((s, n), (-1, 10));
    }

    #[test]
    fn epc_offset_shifts_the_comparison() {
        let m = EpcModel {
            offset: -90e-6,
            ..EpcModel::default()
        };
        let (s, n) = epc_compare(45e-6, &m);
        assert_eq!(s, -1);
        assert_eq!(n, 20);
    }

    proptest! {
        #[test]
        fn epc_count_monotone_in_magnitude(a in 1e-7f64..1e-2, b in 1e-7f64..1e-2) {
            let m = EpcModel::default();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(epc_compare(lo, &m).1 >= epc_compare(hi, &m).1);
        }

        #[test]
        fn epc_sign_is_odd(v in 1e-9f64..1e-2) {
            let m = EpcModel::default();
            prop_assert_eq!(epc_compare(v, &m).0, -epc_compare(-v, &m).0);
            prop_assert_eq!(epc_compare(v, &m).1, epc_compare(-v, &m).1);
        }
    }

    #[test]
    fn nth_extraction() {
        let cfg = DslConfig::default();
        let mut plant = plant_with_edo(0.3);
        let mut state = DslState::new(0);

        // Grounding is a hard precondition.
        assert_eq!(
            calibrate_nth(&mut plant, 0, &cfg, &mut state),
            Err(Error::NotGrounded)
        );

        plant.set_grounded(true);
        let n = calibrate_nth(&mut plant, 0, &cfg, &mut state).unwrap();
        assert_eq!(n, 10);

        // Doubling the count constant doubles the threshold (within flooring).
        let mut cfg2 = cfg.clone();
        cfg2.epc.k_epc *= 2.0;
        let mut s2 = DslState::new(0);
        let n2 = calibrate_nth(&mut plant, 0, &cfg2, &mut s2).unwrap();
        assert!((n2 as i64 - 2 * n as i64).abs() <= 1);
    }

    #[test]
    fn nth_varies_per_instance_with_mismatch() {
        let cfg = DslConfig::default();
        let mut seen = Vec::new();
        for seed in 0..12u64 {
            let mm = sample_mismatch(seed, &MismatchSigmas::default());
            let mut dsl = cfg.clone();
            dsl.epc.offset = mm.epc_offset;
            let mut plant =
                AnalyticPlant::new(params(), mm, cfg.fine_lsb, vec![0.0; 4]);
            plant.set_grounded(true);
            let mut state = DslState::new(0);
            seen.push(calibrate_nth(&mut plant, 0, &dsl, &mut state).unwrap());
        }
        let first = seen[0];
        assert!(seen.iter().any(|&n| n != first), "offsets must spread N_TH");
    }

    #[test]
    fn coarse_examples() {
        let cfg = DslConfig::default();

        // +300 mV is exactly 100 coarse steps.
        let mut plant = plant_with_edo(0.3);
        let mut state = DslState::new(0);
        coarse_calibrate(&mut plant, 0, &cfg, &mut state).unwrap();
        assert_eq!(state.coarse_code, 100);
        assert!(plant.residual_dc(0).abs() < 1e-12);
        assert!(state.flags.is_empty());

        // Zero offset keeps code zero.
        let mut plant = plant_with_edo(0.0);
        let mut state = DslState::new(0);
        coarse_calibrate(&mut plant, 0, &cfg, &mut state).unwrap();
        assert_eq!(state.coarse_code, 0);

        // +400 mV saturates at +128 (384 mV) with 16 mV left and a flag.
        let mut plant = plant_with_edo(0.4);
        let mut state = DslState::new(0);
        coarse_calibrate(&mut plant, 0, &cfg, &mut state).unwrap();
        assert_eq!(state.coarse_code, 128);
        assert!((plant.residual_dc(0) - 16e-3).abs() < 1e-9);
        assert_eq!(state.flags, vec![CalFlag::EdoOutOfRange]);

        // ±384 mV is in range: full-scale code, zero residual, no flag.
        let mut plant = plant_with_edo(-0.384);
        let mut state = DslState::new(0);
        coarse_calibrate(&mut plant, 0, &cfg, &mut state).unwrap();
        assert_eq!(state.coarse_code, -128);
        assert!(plant.residual_dc(0).abs() < 1e-12);
        assert!(state.flags.is_empty());
    }

    #[test]
    fn sar_matches_exhaustive_oracle() {
        let cfg = DslConfig::default();
        let step = coarse_step_volts(&params());
        // 0.8 mV grid stays clear of the rounding boundaries.
        let mut edo = -0.3848f64;
        while edo <= 0.3848 {
            let mut plant = plant_with_edo(edo);
            let mut state = DslState::new(0);
            coarse_calibrate(&mut plant, 0, &cfg, &mut state).unwrap();
            assert_eq!(
                state.coarse_code,
                coarse_oracle(edo, step),
                "edo {edo}"
            );
            assert!(state.comparisons <= 10);
            edo += 0.8e-3;
        }
    }

    #[test]
    fn fine_examples() {
        let cfg = DslConfig::default();

        // 1.5 mV residual needs about 17 LSBs of 90 µV.
        let mut plant = plant_with_edo(1.5e-3);
        let mut state = DslState::new(0);
        state.n_th = 10;
        fine_calibrate(&mut plant, 0, &cfg, &mut state).unwrap();
        assert!(
            (16..=17).contains(&state.fine_code),
            "fine {}",
            state.fine_code
        );
        assert!(plant.residual_dc(0).abs() <= 135e-6);

        // Zero residual exits on the first comparison.
        let mut plant = plant_with_edo(0.0);
        let mut state = DslState::new(0);
        state.n_th = 10;
        fine_calibrate(&mut plant, 0, &cfg, &mut state).unwrap();
        assert_eq!(state.fine_code, 0);
        assert_eq!(state.comparisons, 1);

        // The full 3 mV coarse leftover is covered (~33 LSBs of 150).
        let mut plant = plant_with_edo(3.0e-3);
        let mut state = DslState::new(0);
        state.n_th = 10;
        fine_calibrate(&mut plant, 0, &cfg, &mut state).unwrap();
        assert!(
            (33..=34).contains(&state.fine_code),
            "fine {}",
            state.fine_code
        );
        assert!(plant.residual_dc(0).abs() <= 135e-6);
        assert!(state.flags.is_empty());
    }

    #[test]
    fn fine_handles_negative_residual() {
        let cfg = DslConfig::default();
        let mut plant = plant_with_edo(-1.2e-3);
        let mut state = DslState::new(0);
        state.n_th = 10;
        fine_calibrate(&mut plant, 0, &cfg, &mut state).unwrap();
        assert_eq!(state.fine_sign, -1);
        assert!(plant.residual_dc(0).abs() <= 135e-6);
    }

    #[test]
    fn fine_flags_range_exhaustion() {
        // 20 mV cannot be absorbed by 150 × 90 µV.
        let cfg = DslConfig::default();
        let mut plant = plant_with_edo(20e-3);
        let mut state = DslState::new(0);
        state.n_th = 10;
        fine_calibrate(&mut plant, 0, &cfg, &mut state).unwrap();
        assert_eq!(state.fine_code, FINE_CODE_MAX);
        assert_eq!(state.flags, vec![CalFlag::FineRangeExhausted]);
    }

    /// Exhaustive fine oracle: best achievable |residual| over both signs
    /// and all 151 codes.
    fn fine_oracle_best(residual: f64, fine_lsb: f64) -> f64 {
        let mut best = math::fabs(residual);
        for code in 0..=FINE_CODE_MAX {
            for sign in [1.0, -1.0] {
                let r = math::fabs(residual - sign * code as f64 * fine_lsb);
                if r < best {
                    best = r;
                }
            }
        }
        best
    }

    #[test]
    fn fine_lands_within_one_lsb_of_oracle() {
        let cfg = DslConfig::default();
        for r0 in [0.23e-3, 1.47e-3, -2.9e-3, 0.05e-3, -0.9e-3] {
            let mut plant = plant_with_edo(r0);
            let mut state = DslState::new(0);
            state.n_th = 10;
            fine_calibrate(&mut plant, 0, &cfg, &mut state).unwrap();
            let got = math::fabs(plant.residual_dc(0));
            let best = fine_oracle_best(r0, cfg.fine_lsb);
            assert!(got <= best + cfg.fine_lsb + 1e-12, "r0 {r0}: {got} vs {best}");
        }
    }

    #[test]
    fn full_calibration_sweep_meets_budget_and_bound() {
        // Compact version of the acceptance sweep: every EDO lands below
        // 135 µV within 48 comparisons.
        let cfg = DslConfig::default();
        for k in 0..13 {
            let edo = -0.384 + k as f64 * 0.064;
            let mut plant = plant_with_edo(edo);
            let report = calibrate_channel(&mut plant, 0, &cfg).unwrap();
            assert!(
                report.residual_volts.abs() <= 135e-6,
                "edo {edo}: residual {}",
                report.residual_volts
            );
            assert!(report.comparisons_used <= 48, "edo {edo}");
            assert!(report.flags.is_empty(), "edo {edo}");
            assert!(report.n_th >= 1);
        }
    }

    #[test]
    fn calibration_with_mismatch_still_converges() {
        for seed in 0..10u64 {
            let mm = sample_mismatch(seed, &MismatchSigmas::default());
            let mut cfg = DslConfig::default();
            cfg.epc.offset = mm.epc_offset;
            let mut plant = AnalyticPlant::new(
                params(),
                mm,
                cfg.fine_lsb,
                vec![0.31, -0.17, 0.05, -0.384],
            );
            for ch in 0..4 {
                let report = calibrate_channel(&mut plant, ch, &cfg).unwrap();
                // The EPC offset shifts the servo null by up to the offset
                // itself; the bound loosens accordingly.
                let bound = 135e-6 + cfg.epc.offset.abs();
                assert!(
                    report.residual_volts.abs() <= bound,
                    "seed {seed} ch {ch}: {}",
                    report.residual_volts
                );
                assert!(report.comparisons_used <= 48);
            }
        }
    }

    #[test]
    fn track_behavior() {
        let cfg = DslConfig::default();
        let mut plant = plant_with_edo(0.3);
        let report = calibrate_channel(&mut plant, 0, &cfg).unwrap();
        let mut state = state_from_report(&report, 100.0);

        // Drift of +200 µV: one decrement of the residual at the next sample.
        plant.set_edo(0, 0.3 + 200e-6);
        let fine_before = state.fine_code as i32 * state.fine_sign as i32;
        track(&mut plant, 0, &cfg, &mut state, 104.0);
        assert_eq!(state.comparisons, 0, "early sample must not evaluate");
        track(&mut plant, 0, &cfg, &mut state, 108.0);
        assert_eq!(state.comparisons, 1);
        let fine_after = state.fine_code as i32 * state.fine_sign as i32;
        assert_eq!(fine_after - fine_before, 1, "one step toward the residual");

        // A 30 µV residual is below one LSB: no change at the next sample.
        plant.set_edo(0, 0.3 + 200e-6 - 90e-6 + 30e-6 - 200e-6 + 90e-6);
        let r = plant.residual_dc(0);
        assert!(r.abs() < 90e-6, "setup: residual {r}");
        let fine_before = state.fine_code;
        track(&mut plant, 0, &cfg, &mut state, 116.0);
        assert_eq!(state.fine_code, fine_before);
        assert_eq!(state.comparisons, 2);
    }

    #[test]
    fn tracking_follows_slow_drift() {
        // Drift slower than one fine LSB per sample interval: the residual
        // stays within ±2 LSBs over 10^4 seconds.
        let cfg = DslConfig::default();
        let mut plant = plant_with_edo(0.1);
        let report = calibrate_channel(&mut plant, 0, &cfg).unwrap();
        let mut state = state_from_report(&report, 0.0);

        let slope = 80e-6 / 8.0; // 80 µV per sample interval
        let mut t = 0.0;
        let mut samples = 0u32;
        while t < 1e4 {
            t += 8.0;
            plant.set_edo(0, 0.1 + slope * t);
            track(&mut plant, 0, &cfg, &mut state, t);
            samples += 1;
            let r = plant.residual_dc(0);
            assert!(
                r.abs() <= 2.0 * cfg.fine_lsb + 1e-9,
                "t {t}: residual {r}"
            );
        }
        // Exactly one comparison per sampling instant, none in between.
        assert_eq!(state.comparisons, samples);
    }

    #[test]
    fn integrator_settles_to_dc() {
        let dt = 1.0 / 4000.0;
        let n = (16.0 / dt) as usize; // 5 time constants of 3.18 s
        let samples = vec![9e-3; n];
        let y = integrator_output(&samples, dt, 0.05).unwrap();
        assert!((y - 9e-3).abs() < 0.01 * 9e-3, "{y}");
    }

    #[test]
    fn integrator_rejects_inband_tones() {
        // A 10 Hz tone sits 200× above the 50 mHz corner: ≥ 46 dB down.
        let dt = 1.0 / 4000.0;
        let n = (20.0 / dt) as usize;
        let samples: Vec<f64> = (0..n)
            .map(|i| 10e-3 * math::sin(math::TAU * 10.0 * i as f64 * dt))
            .collect();
        let y = integrator_output(&samples, dt, 0.05).unwrap();
        assert!(y.abs() <= 10e-3 / 199.0, "{y}");
    }

    #[test]
    fn integrator_edge_cases() {
        assert_eq!(
            integrator_output(&[], 1.0 / 4000.0, 0.05),
            Err(Error::EmptyTrace)
        );
        let zeros = vec![0.0; 1000];
        assert_eq!(integrator_output(&zeros, 1.0 / 4000.0, 0.05).unwrap(), 0.0);
    }
}
