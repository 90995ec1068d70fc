//! Downlink SINR, per-user rate and sum rate.
//!
//! User indices are zero-based throughout: user `k` owns column `k` of `W`
//! and row `k` of `G`; the sensing stream is the last column of `W`.

use serde::{Deserialize, Serialize};

use crate::channel::{CMatrix, CVector, ChannelSet, C64};
use crate::error::{Error, Result};

/// Indices of the active (amplifying) surface elements.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ActiveSet(Vec<usize>);

impl ActiveSet {
    /// Sorts and validates `indices` against a surface of `n` elements.
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain(
                "active set contains duplicate indices".into(),
            ));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::Domain(format!(
                "active index {bad} out of range for {n} elements"
            )));
        }
        Ok(Self(indices))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, n: usize) -> bool {
        self.0.binary_search(&n).is_ok()
    }

    /// 0/1 mask over `n` elements (the diagonal of the selection matrix).
    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &i in &self.0 {
            m[i] = true;
        }
        m
    }
}

/// BS beamformer and surface coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderPair {
    /// `M x (K+1)`, one column per user plus the sensing stream.
    pub w: CMatrix,
    /// Diagonal of the surface precoding matrix.
    pub phi: CVector,
    pub active: ActiveSet,
}

impl PrecoderPair {
    pub fn num_streams(&self) -> usize {
        self.w.ncols()
    }

    /// Checks the amplitude caps: `|phi_n| <= 1` off the active set and
    /// `<= a_max` on it.
    pub fn amplitudes_within(&self, a_max: f64) -> bool {
        self.phi.iter().enumerate().all(|(n, p)| {
            let cap = if self.active.contains(n) { a_max } else { 1.0 };
            p.norm() <= cap * (1.0 + 1e-12)
        })
    }

    fn check_dims(&self, ch: &ChannelSet) -> Result<()> {
        let (n, m) = ch.h.shape();
        if self.w.nrows() != m
            || self.phi.len() != n
            || ch.g.ncols() != n
            || self.w.ncols() != ch.g.nrows()
        {
            return Err(Error::Dimension(format!(
                "W {:?}, phi {}, H {:?}, G {:?}",
                self.w.shape(),
                self.phi.len(),
                ch.h.shape(),
                ch.g.shape()
            )));
        }
        Ok(())
    }
}

/// Receiver noise powers (W).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Dynamic noise of the active elements.
    pub sigma_a_sq: f64,
    /// Thermal noise at every receiver.
    pub sigma_o_sq: f64,
}

/// Which channel carries the sensing stream into a user's receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensingInterference {
    /// Through the user's own channel `g_k`.
    #[default]
    User,
    /// Through the target channel `g_l`, as printed in the received-signal model.
    Target,
}

/// Scalar gains `g_i^H diag(phi) H w_j` for every row `i` of `G` and column `j` of `W`.
pub fn link_gains(pp: &PrecoderPair, ch: &ChannelSet) -> Result<CMatrix> {
    pp.check_dims(ch)?;
    let mut g_phi = ch.g.clone();
    for (c, p) in pp.phi.iter().enumerate() {
        g_phi.column_mut(c).iter_mut().for_each(|x| *x *= p);
    }
    Ok(g_phi * &ch.h * &pp.w)
}

fn dynamic_noise(k: usize, pp: &PrecoderPair, ch: &ChannelSet, np: &NoiseParams) -> f64 {
    pp.active
        .indices()
        .iter()
        .map(|&n| (ch.g[(k, n)] * pp.phi[n]).norm_sqr())
        .sum::<f64>()
        * np.sigma_a_sq
}

fn sinr_from_gains(
    k: usize,
    gains: &CMatrix,
    pp: &PrecoderPair,
    ch: &ChannelSet,
    np: &NoiseParams,
    mode: SensingInterference,
) -> Result<f64> {
    let users = ch.num_users();
    if k >= users {
        return Err(Error::Domain(format!(
            "user index {k} out of range for {users} users"
        )));
    }
    let sensing = users;
    let desired = gains[(k, k)].norm_sqr();
    let interference: f64 = (0..users)
        .filter(|&j| j != k)
        .map(|j| gains[(k, j)].norm_sqr())
        .sum();
    let sensing_row = match mode {
        SensingInterference::User => k,
        SensingInterference::Target => ch.target_row(),
    };
    let sensing_leak = gains[(sensing_row, sensing)].norm_sqr();
    let denom = interference + sensing_leak + dynamic_noise(k, pp, ch, np) + np.sigma_o_sq;
    if denom <= 0.0 {
        return Err(Error::Domain(format!(
            "SINR of user {k} has a zero denominator"
        )));
    }
    Ok(desired / denom)
}

/// SINR of user `k`.
pub fn sinr_user(
    k: usize,
    pp: &PrecoderPair,
    ch: &ChannelSet,
    np: &NoiseParams,
    mode: SensingInterference,
) -> Result<f64> {
    let gains = link_gains(pp, ch)?;
    sinr_from_gains(k, &gains, pp, ch, np, mode)
}

/// SINR of every user, computed from a single pass over the link gains.
pub fn sinr_all(
    pp: &PrecoderPair,
    ch: &ChannelSet,
    np: &NoiseParams,
    mode: SensingInterference,
) -> Result<Vec<f64>> {
    let gains = link_gains(pp, ch)?;
    (0..ch.num_users())
        .map(|k| sinr_from_gains(k, &gains, pp, ch, np, mode))
        .collect()
}

/// `log2(1 + sinr)`.
pub fn rate_from_sinr(sinr: f64) -> f64 {
    (1.0 + sinr).log2()
}

/// Achievable rate of user `k` in bit/s/Hz.
pub fn user_rate(
    k: usize,
    pp: &PrecoderPair,
    ch: &ChannelSet,
    np: &NoiseParams,
    mode: SensingInterference,
) -> Result<f64> {
    Ok(rate_from_sinr(sinr_user(k, pp, ch, np, mode)?))
}

/// Sum of the user rates; the sensing stream carries no rate.
pub fn sum_rate(
    pp: &PrecoderPair,
    ch: &ChannelSet,
    np: &NoiseParams,
    mode: SensingInterference,
) -> Result<f64> {
    Ok(sinr_all(pp, ch, np, mode)?
        .into_iter()
        .map(rate_from_sinr)
        .sum())
}

/// Unit-modulus diagonal, handy for tests and initial states.
pub fn unit_phases(n: usize) -> CVector {
    CVector::from_element(n, C64::new(1.0, 0.0))
}
