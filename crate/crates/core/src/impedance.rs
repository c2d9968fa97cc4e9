//! Closed-form input-impedance model of the two-stage impedance boost loop
//! and the trimming procedure that selects the CDAC codes.
//!
//! The chopper-switched input branch transfers charge twice per chopper
//! period, so a capacitance C at the input looks like a resistance
//! 1/(2·f_ch·C). The internal loop cancels most of C_IN with a fixed,
//! intentionally over-sized positive-feedback capacitor and sinks the
//! excess with a 6-bit CDAC; the external loop synthesizes a negative
//! capacitance of (A0−1)·C_EPF against the parasitic C_EXT. What remains of
//! either branch after trimming sets the boosted input impedance.
//!
//! All impedances are magnitudes; the external branch scales as 1/f while
//! the chopped branch is frequency-flat.

use crate::error::Error;
use crate::math;
use crate::model::{AfeParams, TrimCodes};
use crate::montecarlo::MismatchInstance;
use crate::Result;

/// Reporting cap for a perfectly cancelled (unbounded) branch impedance.
pub const Z_CAP: f64 = 1e15;

/// Which compensation stage a bound refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoostStage {
    /// Single trimmable positive-feedback capacitor.
    Basic,
    /// Fixed over-sized capacitor plus fine sink CDAC.
    TwoStage,
}

/// Charge-rate currents at the amplifier input node for a probe voltage.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeCurrents {
    /// Current into the input capacitor (A).
    pub i_ccia: f64,
    /// Positive-feedback compensation current (A).
    pub i_pf: f64,
    /// Sink-CDAC compensation current (A).
    pub i_com: f64,
    /// Raw external-branch current before the external IBL (A).
    pub i_ext: f64,
    /// Net current into the amplifier (A).
    pub i_lna: f64,
}

/// Input impedance decomposition at one frequency.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImpedanceReport {
    /// Chopped-branch impedance (Ω), frequency-flat.
    pub z_lna: f64,
    /// External-branch impedance (Ω), scales as 1/f.
    pub z_ext_branch: f64,
    /// Parallel combination (Ω).
    pub z_tot: f64,
    pub at_frequency: f64,
}

/// Post-trim residual capacitances of the two branches (signed).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    /// Net capacitance still seen by the chopped input branch (F).
    pub internal_cap: f64,
    /// Net uncompensated external capacitance (F).
    pub external_cap: f64,
}

/// Positive-feedback capacitor that exactly cancels the input current:
/// C_IN/(A0−1).
pub fn optimal_ipf(c_in: f64, a0: f64) -> Result<f64> {
    if a0 <= 1.0 {
        return Err(Error::NoPositiveFeedback);
    }
    Ok(c_in / (a0 - 1.0))
}

/// Node currents for probe voltage `v_i` with the given trim codes and
/// mismatch draw. `i_lna = i_ccia + i_com − i_pf` holds identically.
pub fn lna_current(
    v_i: f64,
    codes: &TrimCodes,
    params: &AfeParams,
    mm: &MismatchInstance,
) -> NodeCurrents {
    let rate = 2.0 * params.f_ch;
    let i_ccia = v_i * rate * params.c_in;
    let i_pf = v_i * rate * (params.a0 - 1.0) * params.c_ipf;
    let i_com = v_i * rate * mm.ipfc_cap(codes.ipfc_code, params);
    NodeCurrents {
        i_ccia,
        i_pf,
        i_com,
        i_ext: v_i * rate * params.c_ext,
        i_lna: i_ccia + i_com - i_pf,
    }
}

/// Worst-case (half-LSB residual) impedance lower bound of the chopped
/// branch for the requested stage.
///
/// The basic-stage bound assumes a trim array whose LSB equals the sink
/// CDAC's, which is the comparison that makes the two-stage loop (A0−1)
/// times better.
pub fn z_lna_bound(stage: BoostStage, params: &AfeParams) -> f64 {
    let half_lsb = 0.5 * params.c_ipfc_lsb;
    match stage {
        BoostStage::Basic => 1.0 / (2.0 * params.f_ch * (params.a0 - 1.0) * half_lsb),
        BoostStage::TwoStage => 1.0 / (2.0 * params.f_ch * half_lsb),
    }
}

/// Half-LSB worst-case residuals of both branches.
pub fn worst_case_residuals(params: &AfeParams) -> Residuals {
    Residuals {
        internal_cap: 0.5 * params.c_ipfc_lsb,
        external_cap: (params.a0 - 1.0) * 0.5 * params.c_epf_lsb,
    }
}

/// Actual residuals left by a given pair of trim codes under a mismatch
/// draw.
pub fn trimmed_residuals(
    codes: &TrimCodes,
    params: &AfeParams,
    mm: &MismatchInstance,
) -> Residuals {
    Residuals {
        internal_cap: internal_residual(codes.ipfc_code, params, mm),
        external_cap: external_residual(codes.epf_code, params, mm),
    }
}

/// Residuals with the external IBL disabled: the raw 1/(sC_EXT) branch is
/// restored for comparison sweeps.
pub fn no_ext_ibl_residuals(
    codes: &TrimCodes,
    params: &AfeParams,
    mm: &MismatchInstance,
) -> Residuals {
    Residuals {
        internal_cap: internal_residual(codes.ipfc_code, params, mm),
        external_cap: params.c_ext,
    }
}

fn internal_residual(ipfc_code: u8, params: &AfeParams, mm: &MismatchInstance) -> f64 {
    params.c_in - (params.a0 - 1.0) * params.c_ipf + mm.ipfc_cap(ipfc_code, params)
}

fn external_residual(epf_code: u8, params: &AfeParams, mm: &MismatchInstance) -> f64 {
    params.c_ext - (params.a0 - 1.0) * mm.epf_cap(epf_code, params)
}

fn clamp_z(z: f64) -> f64 {
    if z.is_finite() {
        z.min(Z_CAP)
    } else {
        Z_CAP
    }
}

/// Total input impedance at frequency `f` for the given branch residuals:
/// the chopped branch 1/(2·f_ch·|C_int|) in parallel with the external
/// branch 1/(2π·f·|C_ext,res|). Perfectly cancelled branches are reported
/// at the [`Z_CAP`] ceiling.
pub fn z_tot(f: f64, residuals: &Residuals, params: &AfeParams) -> Result<ImpedanceReport> {
    if !(f > 0.0) {
        return Err(Error::InvalidFrequency);
    }
    let z_lna = clamp_z(1.0 / (2.0 * params.f_ch * math::fabs(residuals.internal_cap)));
    let z_ext_branch = clamp_z(1.0 / (math::TAU * f * math::fabs(residuals.external_cap)));
    let z_par = (z_lna * z_ext_branch) / (z_lna + z_ext_branch);
    Ok(ImpedanceReport {
        z_lna,
        z_ext_branch,
        z_tot: clamp_z(z_par),
        at_frequency: f,
    })
}

/// Worst-case total impedance (half-LSB residuals on both branches).
pub fn z_tot_worst_case(f: f64, params: &AfeParams) -> Result<ImpedanceReport> {
    z_tot(f, &worst_case_residuals(params), params)
}

/// Trim both boost loops: exhaustively search the 64 sink codes minimizing
/// the net chopped-branch current, then the 64 external codes minimizing
/// the uncompensated external capacitance. Ties break toward the lower
/// code. Deterministic in `(params, mm)`.
///
/// Fails if the fixed positive-feedback capacitor is not over-sized, since
/// the sink CDAC can only absorb excess compensation current.
pub fn trim_ibl(params: &AfeParams, mm: &MismatchInstance) -> Result<TrimCodes> {
    let excess = (params.a0 - 1.0) * params.c_ipf - params.c_in;
    // Tolerate fp cancellation noise at the exactly-optimal boundary.
    if excess < -1e-4 * params.c_ipfc_lsb {
        return Err(Error::UnderCompensated);
    }

    let ipfc_code = argmin_code(|code| math::fabs(internal_residual(code, params, mm)));
    let epf_code = argmin_code(|code| math::fabs(external_residual(code, params, mm)));

    Ok(TrimCodes {
        ipfc_code,
        epf_code,
        ..TrimCodes::default()
    })
}

fn argmin_code<F: Fn(u8) -> f64>(cost: F) -> u8 {
    let mut best_code = 0u8;
    let mut best = cost(0);
    for code in 1..=63u8 {
        let c = cost(code);
        if c < best {
            best = c;
            best_code = code;
        }
    }
    best_code
}
