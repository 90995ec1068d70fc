//! Independent oracles for the closed-form quantities, and the report that
//! runs them all.
//!
//! Each oracle recomputes a quantity by a different route (scalar
//! expansion, Monte-Carlo averaging, finite differences or a full matrix
//! inverse) so that a sign or index slip in the main code shows up as a
//! measurable error.

use nalgebra::{DMatrix, Matrix4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::channel::{CMatrix, CVector, ChannelSet, Geometry, C64};
use crate::comms::{sinr_user, ActiveSet, NoiseParams, PrecoderPair, SensingInterference};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::feasibility::{
    check_amplitudes, check_bs_power, check_ris_power, project_action, ris_power,
};
use crate::nn::{Activation, Mlp};
use crate::par::{map_indexed, Exec};
use crate::scenario::Scenario;
use crate::sensing::{
    crb_angles, fim, omega_derivatives, omega_matrix, FisherMatrix, TargetParams,
};

/// Complex matrix with entries uniform in the square `[-scale, scale]^2`.
pub fn random_complex<R: Rng + ?Sized>(rng: &mut R, r: usize, c: usize, scale: f64) -> CMatrix {
    CMatrix::from_fn(r, c, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale
    })
}

/// Unstructured instance with `m` antennas, `n` elements, `k` users and `q`
/// active elements (even indices first, then odd ones).
pub fn random_instance(
    seed: u64,
    m: usize,
    n: usize,
    k: usize,
    q: usize,
) -> (PrecoderPair, ChannelSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = random_complex(&mut rng, n, m, 1.0);
    let g = random_complex(&mut rng, k + 1, n, 1.0);
    let w = random_complex(&mut rng, m, k + 1, 1.0);
    let phi = CVector::from_iterator(n, random_complex(&mut rng, n, 1, 1.0).iter().copied());
    let idx: Vec<usize> = (0..n).step_by(2).chain((1..n).step_by(2)).take(q).collect();
    let active = ActiveSet::new(idx, n).expect("indices are in range and unique");
    (PrecoderPair { w, phi, active }, ChannelSet { h, g })
}

/// SINR of user `k` by straight scalar expansion, entry by entry.
pub fn sinr_scalar_oracle(
    k: usize,
    pp: &PrecoderPair,
    ch: &ChannelSet,
    np: &NoiseParams,
    via_target: bool,
) -> f64 {
    let (n, m) = ch.h.shape();
    let users = ch.g.nrows() - 1;
    let gain = |row: usize, col: usize| {
        let mut acc = C64::new(0.0, 0.0);
        for a in 0..n {
            for b in 0..m {
                acc += ch.g[(row, a)] * pp.phi[a] * ch.h[(a, b)] * pp.w[(b, col)];
            }
        }
        acc.norm_sqr()
    };
    let mut denom = np.sigma_o_sq;
    for j in 0..users {
        if j != k {
            denom += gain(k, j);
        }
    }
    denom += gain(if via_target { users } else { k }, users);
    let mut dn = 0.0;
    for a in 0..n {
        if pp.active.contains(a) {
            dn += (ch.g[(k, a)] * pp.phi[a]).norm_sqr();
        }
    }
    denom += dn * np.sigma_a_sq;
    gain(k, k) / denom
}

/// Relative Frobenius errors of an azimuth/elevation derivative provider
/// against central differences of [`omega_matrix`] with step `1e-6`.
pub fn omega_derivative_error<F>(geom: &Geometry, provider: F) -> (f64, f64)
where
    F: Fn(&Geometry) -> (CMatrix, CMatrix),
{
    let h = 1e-6;
    let (d_psi, d_omega) = provider(geom);
    let fd = |shift: &dyn Fn(&mut Geometry, f64)| {
        let (mut up, mut down) = (geom.clone(), geom.clone());
        shift(&mut up, h);
        shift(&mut down, -h);
        (omega_matrix(&up) - omega_matrix(&down)) / C64::new(2.0 * h, 0.0)
    };
    let fd_psi = fd(&|g, d| g.target.direction.azimuth += d);
    let fd_omega = fd(&|g, d| g.target.direction.elevation += d);
    let rel = |a: &CMatrix, b: &CMatrix| (a - b).norm() / b.norm().max(1e-300);
    (rel(&d_psi, &fd_psi), rel(&d_omega, &fd_omega))
}

/// Well-conditioned random Fisher matrix `A A^T + 0.5 I`.
pub fn random_fim<R: Rng + ?Sized>(rng: &mut R) -> FisherMatrix {
    let a = Matrix4::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let j = a * a.transpose() + Matrix4::identity() * 0.5;
    FisherMatrix::from_matrix((j + j.transpose()) * 0.5)
}

fn complex_gaussian(rng: &mut ChaCha8Rng, normal: &Normal<f64>, r: usize, c: usize) -> CMatrix {
    CMatrix::from_fn(r, c, |_, _| {
        C64::new(normal.sample(rng), normal.sample(rng))
    })
}

fn draw_seed(seed: u64, draw: usize) -> u64 {
    seed.rotate_left(17) ^ (draw as u64).wrapping_mul(0xd134_2543_de82_ef95)
}

/// Monte-Carlo Fisher matrix: draws the symbol block `X = W S` (unit-power
/// streams) and the dynamic noise `N_a`, forms the derivative stacks of the
/// echo mean with respect to `(psi, omega, Re rho, Im rho)` and averages
/// `(2 / sigma_o^2) Re(db_i^H db_j)` over `draws` realizations.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_fim(
    pp: &PrecoderPair,
    ch: &ChannelSet,
    tp: &TargetParams,
    np: &NoiseParams,
    geom: &Geometry,
    draws: usize,
    seed: u64,
    exec: Exec,
) -> Matrix4<f64> {
    let t = tp.dwell_symbols;
    let (n, _) = ch.h.shape();
    let streams = pp.w.ncols();
    let omega = omega_matrix(geom);
    let (d_psi, d_omega) = omega_derivatives(geom);
    let unit = Normal::new(0.0, 0.5f64.sqrt()).unwrap();
    let dyn_noise = Normal::new(0.0, (np.sigma_a_sq / 2.0).sqrt()).unwrap();
    let partials = map_indexed(exec, draws, |d| {
        let mut rng = ChaCha8Rng::seed_from_u64(draw_seed(seed, d));
        let s = complex_gaussian(&mut rng, &unit, streams, t);
        let n_a = complex_gaussian(&mut rng, &dyn_noise, n, t);
        let mut z = &ch.h * (&pp.w * s) + n_a;
        for (r, p) in pp.phi.iter().enumerate() {
            z.row_mut(r).iter_mut().for_each(|x| *x *= p);
        }
        let e_psi = &d_psi * &z;
        let e_omega = &d_omega * &z;
        let e_gain = &omega * &z;
        let j = C64::new(0.0, 1.0);
        let stacks: [CMatrix; 4] = [e_psi * tp.rho, e_omega * tp.rho, e_gain.clone(), e_gain * j];
        let mut out = Matrix4::zeros();
        for a in 0..4 {
            for b in a..4 {
                let v: C64 = stacks[a]
                    .iter()
                    .zip(stacks[b].iter())
                    .map(|(x, y)| x.conj() * y)
                    .sum();
                out[(a, b)] = v.re;
                out[(b, a)] = v.re;
            }
        }
        out
    });
    let sum = partials
        .into_iter()
        .fold(Matrix4::zeros(), |acc, m| acc + m);
    sum * (2.0 / np.sigma_o_sq / draws as f64)
}

/// Monte-Carlo mean power leaving the active elements, `E ||A Phi (H x + n_a)||^2`.
pub fn monte_carlo_ris_power(
    pp: &PrecoderPair,
    ch: &ChannelSet,
    np: &NoiseParams,
    draws: usize,
    seed: u64,
    exec: Exec,
) -> f64 {
    let unit = Normal::new(0.0, 0.5f64.sqrt()).unwrap();
    let dyn_noise = Normal::new(0.0, (np.sigma_a_sq / 2.0).sqrt()).unwrap();
    let (n, _) = ch.h.shape();
    let samples = map_indexed(exec, draws, |d| {
        let mut rng = ChaCha8Rng::seed_from_u64(draw_seed(seed, d));
        let s = complex_gaussian(&mut rng, &unit, pp.w.ncols(), 1);
        let n_a = complex_gaussian(&mut rng, &dyn_noise, n, 1);
        let z = &ch.h * (&pp.w * s) + n_a;
        pp.active
            .indices()
            .iter()
            .map(|&i| (pp.phi[i] * z[(i, 0)]).norm_sqr())
            .sum::<f64>()
    });
    samples.iter().sum::<f64>() / draws as f64
}

/// Largest relative error between the deterministic-policy gradient of
/// `-mean Q(s, mu(s))` and central differences over every actor parameter.
pub fn actor_gradient_error(
    actor: &Mlp,
    critic: &Mlp,
    states: &DMatrix<f64>,
    h: f64,
) -> Result<f64> {
    let (grads, _) = crate::ddpg::actor_gradient(states, actor, critic)?;
    let analytic = grads.flatten();
    let objective = |a: &Mlp| -> Result<f64> {
        let acts = a.predict_batch(states)?;
        let mut x = DMatrix::zeros(states.nrows() + acts.nrows(), states.ncols());
        x.rows_mut(0, states.nrows()).copy_from(states);
        x.rows_mut(states.nrows(), acts.nrows()).copy_from(&acts);
        Ok(-critic.predict_batch(&x)?.sum() / states.ncols() as f64)
    };
    let base = actor.params();
    let mut probe = actor.clone();
    let norm = analytic
        .iter()
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
        .max(1e-12);
    let mut worst = 0.0f64;
    let mut p = base.clone();
    for i in 0..base.len() {
        p[i] = base[i] + h;
        probe.set_params(&p)?;
        let up = objective(&probe)?;
        p[i] = base[i] - h;
        probe.set_params(&p)?;
        let down = objective(&probe)?;
        p[i] = base[i];
        worst = worst.max((analytic[i] - (up - down) / (2.0 * h)).abs() / norm);
    }
    Ok(worst)
}

/// One line of the verification report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleOutcome {
    pub name: &'static str,
    pub error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleOutcome {
    fn new(name: &'static str, error: f64, tolerance: f64) -> Self {
        Self {
            name,
            error,
            tolerance,
            pass: error <= tolerance,
        }
    }
}

impl std::fmt::Display for OracleOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(
            f,
            "{tag} {:<28} error {:.3e} (tolerance {:.1e})",
            self.name, self.error, self.tolerance
        )
    }
}

/// Derivative provider used by the verification report.
pub type DerivativeProvider = fn(&Geometry) -> (CMatrix, CMatrix);

/// Runs every oracle on desk-scale instances.
pub fn run_all(exec: Exec) -> Result<Vec<OracleOutcome>> {
    run_all_with(exec, omega_derivatives)
}

/// As [`run_all`], with the angle derivatives supplied by `derivatives`.
pub fn run_all_with(exec: Exec, derivatives: DerivativeProvider) -> Result<Vec<OracleOutcome>> {
    let cfg = ExperimentConfig::desk();
    let s = Scenario::build(&cfg, 11)?;
    let mut out = Vec::new();

    // Fisher information against the Monte-Carlo derivative stacks
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (w, phi) = crate::baselines::random_raw_pair(&s, &mut rng);
    let pp = s.project(&w, &phi);
    let tp = TargetParams {
        dwell_symbols: 2000,
        ..s.target
    };
    let closed = fim(&pp, &s.channels, &tp, &s.noise, &s.geometry)?;
    let mc = monte_carlo_fim(&pp, &s.channels, &tp, &s.noise, &s.geometry, 200, 11, exec);
    out.push(OracleOutcome::new(
        "fim-monte-carlo",
        (closed.matrix() - mc).norm() / closed.matrix().norm(),
        0.05,
    ));

    // angle derivatives against finite differences
    let mut geom = s.geometry.clone();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        geom.target.direction.azimuth = rng.random_range(0.1..6.1);
        geom.target.direction.elevation = rng.random_range(0.2..2.9);
        let (a, b) = omega_derivative_error(&geom, derivatives);
        worst = worst.max(a).max(b);
    }
    out.push(OracleOutcome::new("omega-finite-difference", worst, 1e-6));

    // SINR against the scalar expansion
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let (pp, ch) = random_instance(seed, 4, 6, 2, 2);
        let np = NoiseParams {
            sigma_a_sq: 0.3,
            sigma_o_sq: 0.7,
        };
        for k in 0..2 {
            let got = sinr_user(k, &pp, &ch, &np, SensingInterference::User)?;
            let want = sinr_scalar_oracle(k, &pp, &ch, &np, false);
            worst = worst.max((got - want).abs() / want.abs().max(1e-300));
        }
    }
    out.push(OracleOutcome::new("sinr-scalar-expansion", worst, 1e-10));

    // projection idempotence and feasibility
    let mut worst = 0.0f64;
    let mut feasible = true;
    for i in 0..1000 {
        let mut r = ChaCha8Rng::seed_from_u64(1000 + i);
        let scale = 10f64.powf(r.random_range(-2.0..2.0));
        let (w, phi) = crate::baselines::random_raw_pair(&s, &mut r);
        let once = project_action(
            &w.scale(scale),
            &phi.scale(scale),
            &s.budgets,
            &s.active,
            &s.channels,
            &s.noise,
        );
        let twice = project_action(
            &once.w,
            &once.phi,
            &s.budgets,
            &s.active,
            &s.channels,
            &s.noise,
        );
        worst = worst.max((once.w.clone() - twice.w).camax() / once.w.camax().max(1e-300));
        worst = worst.max((once.phi.clone() - twice.phi).camax());
        feasible &= check_bs_power(&once.w, &s.budgets).pass
            && check_ris_power(&once, &s.channels, &s.noise, &s.budgets).pass
            && check_amplitudes(&once, &s.budgets).pass;
    }
    out.push(OracleOutcome::new(
        "projection-idempotence",
        if feasible { worst } else { f64::INFINITY },
        1e-12,
    ));

    // surface power against Monte-Carlo
    let (pp, ch) = random_instance(5, 4, 6, 2, 3);
    let np = NoiseParams {
        sigma_a_sq: 0.2,
        sigma_o_sq: 1.0,
    };
    let closed = ris_power(&pp, &ch, &np);
    let mc = monte_carlo_ris_power(&pp, &ch, &np, 10_000, 5, exec);
    out.push(OracleOutcome::new(
        "ris-power-monte-carlo",
        (closed - mc).abs() / closed,
        0.02,
    ));

    // network gradients against finite differences
    let mut r = ChaCha8Rng::seed_from_u64(21);
    let mut worst = 0.0f64;
    for out_act in [Activation::Tanh, Activation::Linear] {
        let net = Mlp::new(&[6, 8, 8, 3], Activation::Relu, out_act, &mut r)?;
        let x = DMatrix::from_fn(6, 3, |_, _| r.random_range(-1.0..1.0));
        let up = DMatrix::from_fn(3, 3, |_, _| r.random_range(-1.0..1.0));
        worst = worst.max(crate::nn::gradient_check(&net, &x, &up, 1e-5)?);
    }
    out.push(OracleOutcome::new("mlp-gradient", worst, 1e-5));

    // Schur-complement CRB against the full inverse
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let fm = random_fim(&mut r);
        let schur = crb_angles(&fm)?;
        let full = fm
            .matrix()
            .try_inverse()
            .expect("well conditioned")
            .fixed_view::<2, 2>(0, 0)
            .into_owned();
        worst = worst.max((schur - full).norm() / full.norm());
    }
    out.push(OracleOutcome::new("crb-schur-vs-inverse", worst, 1e-8));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_passes_and_lists_each_oracle_once() {
        let report = run_all(Exec::Parallel).unwrap();
        for o in &report {
            assert!(o.pass, "{o}");
        }
        let mut names: Vec<_> = report.iter().map(|o| o.name).collect();
        let n = names.len();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), n);
        assert_eq!(n, 7);
    }

    #[test]
    fn sign_flip_in_azimuth_derivative_is_caught() {
        fn flipped(g: &Geometry) -> (CMatrix, CMatrix) {
            let (a, b) = omega_derivatives(g);
            (-a, b)
        }
        let report = run_all_with(Exec::Parallel, flipped).unwrap();
        let fd = report
            .iter()
            .find(|o| o.name == "omega-finite-difference")
            .unwrap();
        assert!(!fd.pass);
        assert!(report
            .iter()
            .filter(|o| o.name != "omega-finite-difference")
            .all(|o| o.pass));
    }

    #[test]
    fn random_instance_respects_active_count() {
        let (pp, ch) = random_instance(1, 3, 5, 2, 2);
        assert_eq!(pp.active.len(), 2);
        assert_eq!(ch.g.nrows(), 3);
    }
}
