//! A frozen problem instance: geometry, channels, active set, target and
//! budgets, all derived from a configuration and a seed.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{
    CMatrix, CVector, ChannelSet, Direction, Geometry, Link, PropagationParams, Upa, C64,
    SPEED_OF_LIGHT,
};
use crate::comms::{sum_rate, ActiveSet, NoiseParams, PrecoderPair, SensingInterference};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::feasibility::{
    evaluate_constraints, project_action, Budgets, ConstraintReport, PenaltyWeights, ProblemRef,
};
use crate::sensing::{CrbReduction, TargetParams};

/// Stream tag mixed into the seed used for geometry sampling.
const GEOMETRY_STREAM: u64 = 0x6765_6f6d;

/// Everything needed to evaluate a precoder pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub geometry: Geometry,
    pub propagation: PropagationParams,
    pub channels: ChannelSet,
    pub active: ActiveSet,
    pub target: TargetParams,
    pub noise: NoiseParams,
    pub budgets: Budgets,
    pub weights: PenaltyWeights,
    pub interference: SensingInterference,
    pub reduction: CrbReduction,
}

/// Metrics of one evaluated pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub reward: f64,
    pub sum_rate: f64,
    /// Scalar CRB; `+inf` when the target is unidentifiable.
    pub crb: f64,
    pub sinrs: Vec<f64>,
    pub report: ConstraintReport,
}

/// Evenly spaced values over `[lo, hi]`; the midpoint when `n = 1`.
fn spread(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Geometry for `cfg` with user distances drawn from `rng`.
pub fn build_geometry<R: Rng + ?Sized>(cfg: &ExperimentConfig, rng: &mut R) -> Result<Geometry> {
    let s = &cfg.system;
    let g = &cfg.geometry;
    let lambda = SPEED_OF_LIGHT / s.frequency_hz;
    let spacing = g.spacing_wavelengths * lambda;
    let [d_lo, d_hi] = g.user_distance_range_m;
    let azimuths = spread(
        g.user_azimuth_range_rad[0],
        g.user_azimuth_range_rad[1],
        s.users,
    );
    let users = azimuths
        .into_iter()
        .map(|az| {
            let distance_m = if d_hi > d_lo {
                rng.random_range(d_lo..d_hi)
            } else {
                d_lo
            };
            Link {
                direction: Direction::new(az, g.user_elevation_rad),
                distance_m,
            }
        })
        .collect();
    let geometry = Geometry {
        bs: Upa::squarest(s.bs_antennas),
        ris: Upa::squarest(s.ris_elements),
        sensing: Upa::squarest(s.sensing_elements),
        bs_spacing_m: spacing,
        ris_spacing_m: spacing,
        spacing_y_m: spacing,
        spacing_z_m: spacing,
        wavelength_m: lambda,
        ris_arrival: Direction::new(g.ris_arrival_azimuth_rad, g.ris_arrival_elevation_rad),
        bs_departure: Direction::new(g.bs_departure_azimuth_rad, g.bs_departure_elevation_rad),
        users,
        target: Link {
            direction: Direction::new(g.target_azimuth_rad, g.target_elevation_rad),
            distance_m: g.target_distance_m,
        },
        bs_ris_distance_m: g.bs_ris_distance_m,
    };
    geometry.validate()?;
    Ok(geometry)
}

impl Scenario {
    /// Builds the instance for `seed`. User distances are drawn first and the
    /// active set second from one seeded stream, so scenarios that differ only
    /// in budgets share their channels.
    pub fn build(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ GEOMETRY_STREAM);
        let geometry = build_geometry(cfg, &mut rng)?;
        let propagation =
            PropagationParams::new(cfg.system.frequency_hz, cfg.system.absorption_per_m);
        let channels = ChannelSet::synthesize(&geometry, &propagation)?;
        let n = cfg.system.ris_elements;
        let active = ActiveSet::new(
            sample(&mut rng, n, cfg.system.active_elements).into_vec(),
            n,
        )?;
        let pl_target = propagation.path_loss(cfg.geometry.target_distance_m)?;
        let rho = C64::from_polar(cfg.target.rcs / pl_target, cfg.target.phase_rad);
        let target = TargetParams {
            rho,
            dwell_symbols: cfg.target.dwell_symbols,
        };
        target.validate()?;
        let lin = cfg.linear();
        Ok(Self {
            geometry,
            propagation,
            channels,
            active,
            target,
            noise: cfg.noise(),
            budgets: lin.budgets,
            weights: cfg.penalty,
            interference: cfg.system.sensing_interference,
            reduction: cfg.budgets.crb_reduction,
        })
    }

    pub fn num_users(&self) -> usize {
        self.channels.num_users()
    }

    pub fn bs_antennas(&self) -> usize {
        self.channels.h.ncols()
    }

    pub fn ris_elements(&self) -> usize {
        self.channels.h.nrows()
    }

    fn problem(&self) -> ProblemRef<'_> {
        ProblemRef {
            channels: &self.channels,
            geometry: &self.geometry,
            target: &self.target,
            noise: &self.noise,
            budgets: &self.budgets,
            weights: &self.weights,
            interference: self.interference,
            reduction: self.reduction,
        }
    }

    /// Projects raw decision variables onto the power/amplitude-feasible set.
    pub fn project(&self, raw_w: &CMatrix, raw_phi: &CVector) -> PrecoderPair {
        project_action(
            raw_w,
            raw_phi,
            &self.budgets,
            &self.active,
            &self.channels,
            &self.noise,
        )
    }

    /// Reward `sum_rate - penalty` together with every metric behind it.
    pub fn evaluate(&self, pp: &PrecoderPair) -> Result<Evaluation> {
        let (report, sinrs) = evaluate_constraints(pp, self.problem())?;
        let rate = sum_rate(pp, &self.channels, &self.noise, self.interference)?;
        Ok(Evaluation {
            reward: rate - report.penalty,
            sum_rate: rate,
            crb: report.crb.value,
            sinrs,
            report,
        })
    }

    /// The starting pair: ones on the leading diagonal of `W` scaled to the
    /// BS budget, and unit coefficients on the surface.
    pub fn initial_pair(&self) -> PrecoderPair {
        let (m, cols) = (self.bs_antennas(), self.num_users() + 1);
        let diag = m.min(cols);
        let amp = (self.budgets.p_bs_max / diag as f64).sqrt();
        let w = CMatrix::from_fn(m, cols, |r, c| {
            if r == c {
                C64::new(amp, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let phi = CVector::from_element(self.ris_elements(), C64::new(1.0, 0.0));
        PrecoderPair {
            w,
            phi,
            active: self.active.clone(),
        }
    }

    /// Same instance with every element passive and amplitudes capped at 1.
    pub fn passive(&self) -> Self {
        let mut out = self.clone();
        out.active = ActiveSet::empty();
        out.budgets.a_max = 1.0;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn seeded_builds_are_identical() {
        let cfg = ExperimentConfig::desk();
        let a = Scenario::build(&cfg, 5).unwrap();
        let b = Scenario::build(&cfg, 5).unwrap();
        assert_eq!(a, b);
        let c = Scenario::build(&cfg, 6).unwrap();
        assert_ne!(a.geometry.users, c.geometry.users);
    }

    #[test]
    fn desk_dimensions_and_defaults() {
        let s = Scenario::build(&ExperimentConfig::desk(), 1).unwrap();
        assert_eq!(s.channels.h.shape(), (16, 8));
        assert_eq!(s.channels.g.shape(), (3, 16));
        assert_eq!(s.active.len(), 4);
        assert_eq!(s.geometry.sensing.len(), 4);
        for u in &s.geometry.users {
            assert!((5.0..15.0).contains(&u.distance_m));
            assert_relative_eq!(u.direction.elevation, std::f64::consts::PI / 3.0);
        }
        let pl = s.propagation.path_loss(10.0).unwrap();
        assert_relative_eq!(s.target.rho.norm(), 1.0 / pl, max_relative = 1e-14);
    }

    #[test]
    fn budget_changes_keep_channels() {
        let mut cfg = ExperimentConfig::desk();
        let a = Scenario::build(&cfg, 3).unwrap();
        cfg.budgets.p_bs_max_dbm = 20.0;
        cfg.budgets.a_max = 2.0;
        let b = Scenario::build(&cfg, 3).unwrap();
        assert_eq!(a.channels, b.channels);
        assert_eq!(a.active, b.active);
    }

    #[test]
    fn single_user_sits_mid_range() {
        let mut cfg = ExperimentConfig::desk();
        cfg.system.users = 1;
        let s = Scenario::build(&cfg, 0).unwrap();
        assert_relative_eq!(
            s.geometry.users[0].direction.azimuth,
            std::f64::consts::FRAC_PI_2,
            max_relative = 1e-15
        );
    }

    #[test]
    fn initial_pair_meets_budget_with_unit_surface() {
        let s = Scenario::build(&ExperimentConfig::desk(), 2).unwrap();
        let pp = s.initial_pair();
        assert_relative_eq!(
            pp.w.norm_squared(),
            s.budgets.p_bs_max,
            max_relative = 1e-14
        );
        assert!(pp.phi.iter().all(|p| *p == C64::new(1.0, 0.0)));
        assert!(crate::feasibility::check_amplitudes(&pp, &s.budgets).pass);
    }

    #[test]
    fn reward_is_rate_minus_penalty() {
        let s = Scenario::build(&ExperimentConfig::desk(), 4).unwrap();
        let e = s.evaluate(&s.initial_pair()).unwrap();
        assert_eq!(e.reward, e.sum_rate - e.report.penalty);
        assert!(e.crb.is_finite());
    }

    #[test]
    fn passive_copy_has_no_active_elements() {
        let s = Scenario::build(&ExperimentConfig::desk(), 4)
            .unwrap()
            .passive();
        assert!(s.active.is_empty());
        let pp = s.initial_pair();
        assert_eq!(
            crate::feasibility::ris_power(&pp, &s.channels, &s.noise),
            0.0
        );
    }
}
