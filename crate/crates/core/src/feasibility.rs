//! Constraint evaluation and the projection applied to raw agent actions.

use serde::{Deserialize, Serialize};

use crate::channel::{CMatrix, CVector, ChannelSet, Geometry, C64};
use crate::comms::{sinr_all, ActiveSet, NoiseParams, PrecoderPair, SensingInterference};
use crate::error::{Error, Result};
use crate::sensing::{crb_scalar, fim, CrbReduction, TargetParams};

/// Relative slack applied to the closed power/amplitude constraints so that
/// values landing on the budget after floating-point scaling still pass.
pub const FEASIBILITY_RTOL: f64 = 1e-9;

/// Budgets of the sum-rate problem, all in linear units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    /// BS transmit power (W).
    pub p_bs_max: f64,
    /// Power radiated by the active elements (W).
    pub p_ris_max: f64,
    /// Dynamic-noise power allowed at the target (W).
    pub r_max: f64,
    /// Minimum per-user SINR (linear).
    pub gamma_th: f64,
    /// Amplitude cap of active elements.
    pub a_max: f64,
    /// Cap on the scalar angle CRB (rad^2).
    pub crb_max: f64,
}

impl Budgets {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("p_bs_max", self.p_bs_max),
            ("p_ris_max", self.p_ris_max),
            ("r_max", self.r_max),
            ("gamma_th", self.gamma_th),
            ("a_max", self.a_max),
            ("crb_max", self.crb_max),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "budget {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Weights turning violations into the reward penalty.
///
/// `sinr` is per linear SINR unit and `crb` per rad^2. The remaining weights
/// apply to violations expressed as a fraction of their budget; projection
/// keeps the power and amplitude terms at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    pub sinr: f64,
    pub crb: f64,
    pub target_noise: f64,
    pub power: f64,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        Self {
            sinr: 1.0,
            crb: 1e3,
            target_noise: 1.0,
            power: 1.0,
        }
    }
}

/// Outcome of one constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub pass: bool,
    /// Evaluated quantity (power, SINR, CRB, ...).
    pub value: f64,
    /// Excess over the budget; zero exactly when `pass`.
    pub violation: f64,
}

impl Check {
    fn upper(value: f64, cap: f64) -> Self {
        let pass = value <= cap * (1.0 + FEASIBILITY_RTOL);
        Self {
            pass,
            value,
            violation: if pass { 0.0 } else { value - cap },
        }
    }
}

/// Every constraint of the problem plus the aggregate penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub sinr: Check,
    /// `gamma_th - gamma_k` clipped at zero, per user.
    pub sinr_violation_per_user: Vec<f64>,
    pub bs_power: Check,
    pub ris_power: Check,
    pub target_noise: Check,
    pub amplitude: Check,
    pub crb: Check,
    pub penalty: f64,
}

impl ConstraintReport {
    pub fn all_pass(&self) -> bool {
        self.checks().iter().all(|c| c.pass)
    }

    pub fn checks(&self) -> [Check; 6] {
        [
            self.sinr,
            self.bs_power,
            self.ris_power,
            self.target_noise,
            self.amplitude,
            self.crb,
        ]
    }
}

/// `tr(W W^H) <= P_BS`.
pub fn check_bs_power(w: &CMatrix, budgets: &Budgets) -> Check {
    Check::upper(w.norm_squared(), budgets.p_bs_max)
}

/// Mean power leaving the active elements,
/// `tr(A Phi (H R_x H^H + sigma_a^2 I) Phi^H A^H)`.
pub fn ris_power(pp: &PrecoderPair, ch: &ChannelSet, np: &NoiseParams) -> f64 {
    let hw = &ch.h * &pp.w;
    pp.active
        .indices()
        .iter()
        .map(|&n| pp.phi[n].norm_sqr() * (hw.row(n).norm_squared() + np.sigma_a_sq))
        .sum()
}

pub fn check_ris_power(
    pp: &PrecoderPair,
    ch: &ChannelSet,
    np: &NoiseParams,
    budgets: &Budgets,
) -> Check {
    Check::upper(ris_power(pp, ch, np), budgets.p_ris_max)
}

/// Dynamic noise reaching the target, `||g_l^H A Phi||^2 sigma_a^2`.
pub fn target_noise(pp: &PrecoderPair, ch: &ChannelSet, np: &NoiseParams) -> f64 {
    let row = ch.target_row();
    pp.active
        .indices()
        .iter()
        .map(|&n| (ch.g[(row, n)] * pp.phi[n]).norm_sqr())
        .sum::<f64>()
        * np.sigma_a_sq
}

pub fn check_target_noise(
    pp: &PrecoderPair,
    ch: &ChannelSet,
    np: &NoiseParams,
    budgets: &Budgets,
) -> Check {
    Check::upper(target_noise(pp, ch, np), budgets.r_max)
}

/// Largest excess of `|phi_n|` over its cap (1 passive, `a_max` active).
pub fn check_amplitudes(pp: &PrecoderPair, budgets: &Budgets) -> Check {
    let mut worst = 0.0f64;
    let mut pass = true;
    for (n, p) in pp.phi.iter().enumerate() {
        let cap = if pp.active.contains(n) {
            budgets.a_max
        } else {
            1.0
        };
        let m = p.norm();
        if m > cap * (1.0 + FEASIBILITY_RTOL) {
            pass = false;
            worst = worst.max(m - cap);
        }
    }
    Check {
        pass,
        value: worst,
        violation: worst,
    }
}

fn sinr_check(sinrs: &[f64], budgets: &Budgets) -> (Check, Vec<f64>) {
    let min = sinrs.iter().copied().fold(f64::INFINITY, f64::min);
    let pass = min >= budgets.gamma_th;
    let per_user = sinrs
        .iter()
        .map(|g| (budgets.gamma_th - g).max(0.0))
        .collect();
    (
        Check {
            pass,
            value: min,
            violation: if pass { 0.0 } else { budgets.gamma_th - min },
        },
        per_user,
    )
}

/// `min_k gamma_k >= gamma_th`.
pub fn check_sinr(
    pp: &PrecoderPair,
    ch: &ChannelSet,
    np: &NoiseParams,
    budgets: &Budgets,
    mode: SensingInterference,
) -> Result<Check> {
    Ok(sinr_check(&sinr_all(pp, ch, np, mode)?, budgets).0)
}

/// Scalar CRB against its cap; an unidentifiable target fails with
/// violation `crb_max` and value `+inf`.
pub fn check_crb(
    pp: &PrecoderPair,
    ch: &ChannelSet,
    tp: &TargetParams,
    np: &NoiseParams,
    geom: &Geometry,
    budgets: &Budgets,
    reduction: CrbReduction,
) -> Result<Check> {
    let fm = fim(pp, ch, tp, np, geom)?;
    Ok(match crb_scalar(&fm, reduction) {
        Ok(v) => Check::upper(v, budgets.crb_max),
        Err(Error::UnidentifiableTarget(_)) => Check {
            pass: false,
            value: f64::INFINITY,
            violation: budgets.crb_max,
        },
        Err(e) => return Err(e),
    })
}

/// Inputs shared by every full constraint evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ProblemRef<'a> {
    pub channels: &'a ChannelSet,
    pub geometry: &'a Geometry,
    pub target: &'a TargetParams,
    pub noise: &'a NoiseParams,
    pub budgets: &'a Budgets,
    pub weights: &'a PenaltyWeights,
    pub interference: SensingInterference,
    pub reduction: CrbReduction,
}

/// Evaluates every constraint; also returns the per-user SINRs.
pub fn evaluate_constraints(
    pp: &PrecoderPair,
    p: ProblemRef<'_>,
) -> Result<(ConstraintReport, Vec<f64>)> {
    let sinrs = sinr_all(pp, p.channels, p.noise, p.interference)?;
    let (sinr, per_user) = sinr_check(&sinrs, p.budgets);
    let bs_power = check_bs_power(&pp.w, p.budgets);
    let ris = check_ris_power(pp, p.channels, p.noise, p.budgets);
    let tn = check_target_noise(pp, p.channels, p.noise, p.budgets);
    let amp = check_amplitudes(pp, p.budgets);
    let crb = check_crb(
        pp,
        p.channels,
        p.target,
        p.noise,
        p.geometry,
        p.budgets,
        p.reduction,
    )?;
    let w = p.weights;
    let b = p.budgets;
    let penalty = w.sinr * sinr.violation
        + w.crb * crb.violation
        + w.target_noise * tn.violation / b.r_max
        + w.power
            * (bs_power.violation / b.p_bs_max
                + ris.violation / b.p_ris_max
                + amp.violation / b.a_max);
    let report = ConstraintReport {
        sinr,
        sinr_violation_per_user: per_user,
        bs_power,
        ris_power: ris,
        target_noise: tn,
        amplitude: amp,
        crb,
        penalty,
    };
    Ok((report, sinrs))
}

/// Maps raw decision variables onto the power/amplitude-feasible set.
///
/// * `W` is scaled by `min(1, sqrt(P_BS / tr(W W^H)))`;
/// * passive coefficients keep their phase at unit modulus (phase 0 when the
///   raw entry is zero);
/// * active coefficients are clamped to modulus `a_max`, then scaled down
///   together if the surface power budget is exceeded.
pub fn project_action(
    raw_w: &CMatrix,
    raw_phi: &CVector,
    budgets: &Budgets,
    active: &ActiveSet,
    ch: &ChannelSet,
    np: &NoiseParams,
) -> PrecoderPair {
    let power = raw_w.norm_squared();
    let w = if power > budgets.p_bs_max * (1.0 + FEASIBILITY_RTOL) {
        raw_w.scale((budgets.p_bs_max / power).sqrt())
    } else {
        raw_w.clone()
    };
    let phi = CVector::from_fn(raw_phi.len(), |n, _| {
        let p = raw_phi[n];
        let modulus = p.norm();
        if active.contains(n) {
            if modulus > budgets.a_max {
                p * (budgets.a_max / modulus)
            } else {
                p
            }
        } else if modulus == 0.0 {
            C64::new(1.0, 0.0)
        } else {
            p / modulus
        }
    });
    let mut pp = PrecoderPair {
        w,
        phi,
        active: active.clone(),
    };
    let consumed = ris_power(&pp, ch, np);
    if consumed > budgets.p_ris_max * (1.0 + FEASIBILITY_RTOL) {
        let s = (budgets.p_ris_max / consumed).sqrt();
        for &n in active.indices() {
            pp.phi[n] *= s;
        }
    }
    pp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::random_instance;
    use approx::assert_relative_eq;

    const BUDGETS: Budgets = Budgets {
        p_bs_max: 2.0,
        p_ris_max: 5.0,
        r_max: 1.0,
        gamma_th: 0.5,
        a_max: 3.0,
        crb_max: 1e-3,
    };
    const NOISE: NoiseParams = NoiseParams {
        sigma_a_sq: 0.2,
        sigma_o_sq: 1.0,
    };

    #[test]
    fn bs_power_edges() {
        let zero = CMatrix::zeros(3, 2);
        assert_eq!(
            check_bs_power(&zero, &BUDGETS),
            Check {
                pass: true,
                value: 0.0,
                violation: 0.0
            }
        );
        let mut w = CMatrix::zeros(3, 2);
        w[(0, 0)] = C64::new(1.0, 1.0);
        assert!(check_bs_power(&w, &BUDGETS).pass);
        w[(1, 1)] = C64::new(0.0, 1.0);
        let c = check_bs_power(&w, &BUDGETS);
        assert!(!c.pass);
        assert_relative_eq!(c.violation, 1.0);
    }

    #[test]
    fn bs_power_matches_manual_trace() {
        let (pp, ..) = random_instance(1, 4, 4, 2, 1);
        let mut tr = 0.0;
        for i in 0..pp.w.nrows() {
            for j in 0..pp.w.ncols() {
                tr += pp.w[(i, j)].norm_sqr();
            }
        }
        assert_relative_eq!(
            check_bs_power(&pp.w, &BUDGETS).value,
            tr,
            max_relative = 1e-14
        );
    }

    #[test]
    fn ris_power_vanishes_without_active_elements_or_signal() {
        let (mut pp, ch) = random_instance(2, 4, 4, 2, 0);
        assert_eq!(ris_power(&pp, &ch, &NOISE), 0.0);
        pp.active = ActiveSet::new(vec![0, 2], 4).unwrap();
        pp.w.fill(C64::new(0.0, 0.0));
        let quiet = NoiseParams {
            sigma_a_sq: 0.0,
            sigma_o_sq: 1.0,
        };
        assert_eq!(ris_power(&pp, &ch, &quiet), 0.0);
    }

    #[test]
    fn ris_power_matches_monte_carlo() {
        let (pp, ch) = random_instance(3, 4, 6, 2, 3);
        let closed = ris_power(&pp, &ch, &NOISE);
        let mc = crate::verify::monte_carlo_ris_power(
            &pp,
            &ch,
            &NOISE,
            10_000,
            3,
            crate::par::Exec::Parallel,
        );
        assert!((closed - mc).abs() / closed < 0.02, "{closed} vs {mc}");
    }

    #[test]
    fn target_noise_edges_and_expansion() {
        let (mut pp, ch) = random_instance(4, 4, 5, 2, 0);
        assert!(check_target_noise(&pp, &ch, &NOISE, &BUDGETS).pass);
        pp.active = ActiveSet::new(vec![1, 3], 5).unwrap();
        let mut want = 0.0;
        for n in [1, 3] {
            let v = ch.g[(2, n)] * pp.phi[n];
            want += v.re * v.re + v.im * v.im;
        }
        assert_relative_eq!(
            target_noise(&pp, &ch, &NOISE),
            want * NOISE.sigma_a_sq,
            max_relative = 1e-14
        );
        pp.phi.fill(C64::new(0.0, 0.0));
        assert_eq!(target_noise(&pp, &ch, &NOISE), 0.0);
    }

    #[test]
    fn amplitude_caps() {
        let (mut pp, _) = random_instance(5, 2, 4, 1, 0);
        pp.active = ActiveSet::new(vec![2], 4).unwrap();
        pp.phi = CVector::from_fn(4, |n, _| C64::from_polar(1.0, n as f64));
        assert!(check_amplitudes(&pp, &BUDGETS).pass);
        pp.phi[2] = C64::from_polar(BUDGETS.a_max, 0.3);
        assert!(check_amplitudes(&pp, &BUDGETS).pass);
        pp.phi[2] = C64::from_polar(BUDGETS.a_max + 0.1, 0.3);
        let c = check_amplitudes(&pp, &BUDGETS);
        assert!(!c.pass);
        assert_relative_eq!(c.violation, 0.1, max_relative = 1e-12);
    }

    #[test]
    fn sinr_threshold_edges() {
        let (pp, ch) = random_instance(6, 3, 4, 1, 1);
        let g = sinr_all(&pp, &ch, &NOISE, SensingInterference::User).unwrap()[0];
        let exact = Budgets {
            gamma_th: g,
            ..BUDGETS
        };
        assert!(
            check_sinr(&pp, &ch, &NOISE, &exact, SensingInterference::User)
                .unwrap()
                .pass
        );
        let high = Budgets {
            gamma_th: 2.0 * g,
            ..BUDGETS
        };
        let c = check_sinr(&pp, &ch, &NOISE, &high, SensingInterference::User).unwrap();
        assert!(!c.pass);
        assert_relative_eq!(c.violation, g, max_relative = 1e-12);
        let tiny = Budgets {
            gamma_th: f64::MIN_POSITIVE,
            ..BUDGETS
        };
        assert!(
            check_sinr(&pp, &ch, &NOISE, &tiny, SensingInterference::User)
                .unwrap()
                .pass
        );
    }

    #[test]
    fn projection_scales_bs_power() {
        let (pp, ch) = random_instance(7, 4, 4, 2, 2);
        let raw =
            pp.w.scale((4.0 * BUDGETS.p_bs_max / pp.w.norm_squared()).sqrt());
        let out = project_action(&raw, &pp.phi, &BUDGETS, &pp.active, &ch, &NOISE);
        assert!((out.w.clone() - raw.scale(0.5)).norm() < 1e-12 * raw.norm());
    }

    #[test]
    fn projection_keeps_feasible_input() {
        let (pp, ch) = random_instance(8, 4, 4, 2, 2);
        let w =
            pp.w.scale((0.5 * BUDGETS.p_bs_max / pp.w.norm_squared()).sqrt());
        let phi = CVector::from_fn(4, |n, _| {
            if pp.active.contains(n) {
                C64::from_polar(0.1, n as f64)
            } else {
                C64::from_polar(0.4, n as f64)
            }
        });
        let out = project_action(&w, &phi, &BUDGETS, &pp.active, &ch, &NOISE);
        assert_eq!(out.w, w);
        for n in 0..4 {
            if pp.active.contains(n) {
                assert_eq!(out.phi[n], phi[n]);
            } else {
                assert_relative_eq!(out.phi[n].norm(), 1.0, max_relative = 1e-15);
                assert_relative_eq!(out.phi[n].arg(), phi[n].arg(), max_relative = 1e-15);
            }
        }
    }

    #[test]
    fn zero_passive_entry_gets_phase_zero() {
        let (pp, ch) = random_instance(9, 2, 3, 1, 0);
        let out = project_action(&pp.w, &CVector::zeros(3), &BUDGETS, &pp.active, &ch, &NOISE);
        assert!(out.phi.iter().all(|p| *p == C64::new(1.0, 0.0)));
    }

    #[test]
    fn projection_enforces_ris_budget() {
        let (pp, ch) = random_instance(10, 4, 6, 2, 3);
        let tight = Budgets {
            p_ris_max: 1e-3,
            ..BUDGETS
        };
        let out = project_action(
            &pp.w.scale(10.0),
            &pp.phi.scale(10.0),
            &tight,
            &pp.active,
            &ch,
            &NOISE,
        );
        assert!(check_ris_power(&out, &ch, &NOISE, &tight).pass);
        assert!(check_bs_power(&out.w, &tight).pass);
        assert!(check_amplitudes(&out, &tight).pass);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn projection_is_idempotent_and_feasible(seed in 0u64..1000, scale in 0.01f64..100.0) {
                let (pp, ch) = random_instance(seed, 3, 5, 2, 2);
                let b = Budgets { p_ris_max: 0.5, ..BUDGETS };
                let once = project_action(&pp.w.scale(scale), &pp.phi.scale(scale), &b, &pp.active, &ch, &NOISE);
                let twice = project_action(&once.w, &once.phi, &b, &pp.active, &ch, &NOISE);
                prop_assert!((once.w.clone() - twice.w).camax() <= 1e-12 * once.w.camax().max(1.0));
                prop_assert!((once.phi.clone() - twice.phi).camax() <= 1e-12);
                prop_assert!(check_bs_power(&once.w, &b).pass);
                prop_assert!(check_ris_power(&once, &ch, &NOISE, &b).pass);
                prop_assert!(check_amplitudes(&once, &b).pass);
            }
        }
    }
}
