//! THz line-of-sight channel synthesis.
//!
//! All arrays are uniform planar arrays whose response is the Kronecker
//! product of two uniform linear responses. Element `p` of an
//! `rows x cols` array sits at row `p / cols` and column `p % cols`; the
//! same ordering is used by [`Upa::row_indices`] and [`Upa::col_indices`].
//!
//! The user/target channels are stored as rows of `G`: row `k` holds
//! `g_k^H`, so the scalar link gain through the surface is
//! `G[k, :] * diag(phi) * H * w`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Shape of a uniform planar array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Upa {
    pub rows: usize,
    pub cols: usize,
}

impl Upa {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row index of every element, in Kronecker order.
    pub fn row_indices(&self) -> Vec<f64> {
        (0..self.len()).map(|p| (p / self.cols) as f64).collect()
    }

    /// Column index of every element, in Kronecker order.
    pub fn col_indices(&self) -> Vec<f64> {
        (0..self.len()).map(|p| (p % self.cols) as f64).collect()
    }

    /// Most square factorisation `rows x cols` of `n` with `rows >= cols`.
    pub fn squarest(n: usize) -> Self {
        let mut cols = (n as f64).sqrt().floor() as usize;
        while cols > 1 && !n.is_multiple_of(cols) {
            cols -= 1;
        }
        let cols = cols.max(1);
        Self::new(n / cols, cols)
    }
}

/// Azimuth/elevation pair in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub azimuth: f64,
    pub elevation: f64,
}

impl Direction {
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        Self { azimuth, elevation }
    }

    fn validate(&self, what: &str) -> Result<()> {
        let az_ok = (0.0..2.0 * PI).contains(&self.azimuth);
        let el_ok = self.elevation > 0.0 && self.elevation < PI;
        if az_ok && el_ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "{what}: angles ({}, {}) outside azimuth [0, 2pi) / elevation (0, pi)",
                self.azimuth, self.elevation
            )))
        }
    }
}

/// A surface-to-receiver link: departure direction and distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub direction: Direction,
    pub distance_m: f64,
}

/// Array layouts, spacings and link directions for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub bs: Upa,
    pub ris: Upa,
    pub sensing: Upa,
    /// BS element spacing `d_b`.
    pub bs_spacing_m: f64,
    /// RIS spacing used by the arrival response `d_r`.
    pub ris_spacing_m: f64,
    /// Horizontal RIS spacing `d_y`.
    pub spacing_y_m: f64,
    /// Vertical RIS spacing `d_z`.
    pub spacing_z_m: f64,
    pub wavelength_m: f64,
    /// Angle of arrival at the RIS.
    pub ris_arrival: Direction,
    /// Angle of departure at the BS.
    pub bs_departure: Direction,
    pub users: Vec<Link>,
    pub target: Link,
    pub bs_ris_distance_m: f64,
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        for (name, upa) in [
            ("bs", self.bs),
            ("ris", self.ris),
            ("sensing", self.sensing),
        ] {
            if upa.rows == 0 || upa.cols == 0 {
                return Err(Error::Domain(format!(
                    "{name} array must have at least one row and column"
                )));
            }
        }
        let lengths = [
            ("bs spacing", self.bs_spacing_m),
            ("ris spacing", self.ris_spacing_m),
            ("y spacing", self.spacing_y_m),
            ("z spacing", self.spacing_z_m),
            ("wavelength", self.wavelength_m),
            ("bs-ris distance", self.bs_ris_distance_m),
            ("target distance", self.target.distance_m),
        ];
        for (name, v) in lengths {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if self.users.is_empty() {
            return Err(Error::Domain("at least one user is required".into()));
        }
        for (k, u) in self.users.iter().enumerate() {
            if !(u.distance_m > 0.0) {
                return Err(Error::Domain(format!("user {k} distance must be positive")));
            }
            u.direction.validate(&format!("user {k}"))?;
        }
        self.ris_arrival.validate("ris arrival")?;
        self.bs_departure.validate("bs departure")?;
        self.target.direction.validate("target")?;
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength_m
    }

    /// BS transmit response `alpha_t`.
    pub fn bs_steering(&self) -> CVector {
        let k = self.wavenumber();
        let d = self.bs_departure;
        steering_vector_upa(
            (self.bs.rows, self.bs.cols),
            (
                k * d.azimuth.cos() * d.elevation.sin() * self.bs_spacing_m,
                k * d.elevation.cos() * self.bs_spacing_m,
            ),
        )
    }

    /// RIS receive response `alpha_r` toward the BS.
    pub fn ris_arrival_steering(&self) -> CVector {
        let k = self.wavenumber();
        let d = self.ris_arrival;
        steering_vector_upa(
            (self.ris.rows, self.ris.cols),
            (
                k * d.azimuth.sin() * d.elevation.sin() * self.ris_spacing_m,
                k * d.elevation.cos() * self.ris_spacing_m,
            ),
        )
    }

    /// Phase increments per row/column index for a direction seen from the
    /// RIS plane (shared by the reflecting and sensing elements).
    pub fn surface_phase_gains(&self, dir: Direction) -> (f64, f64) {
        let k = self.wavenumber();
        (
            k * dir.azimuth.sin() * dir.elevation.sin() * self.spacing_y_m,
            k * dir.elevation.cos() * self.spacing_z_m,
        )
    }

    /// Reflecting-element response `beta` toward `dir`.
    pub fn ris_departure_steering(&self, dir: Direction) -> CVector {
        steering_vector_upa(
            (self.ris.rows, self.ris.cols),
            self.surface_phase_gains(dir),
        )
    }

    /// Sensing-element response `alpha` toward `dir`.
    pub fn sensing_steering(&self, dir: Direction) -> CVector {
        steering_vector_upa(
            (self.sensing.rows, self.sensing.cols),
            self.surface_phase_gains(dir),
        )
    }
}

/// Carrier and medium parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationParams {
    pub frequency_hz: f64,
    pub absorption_per_m: f64,
    pub speed_of_light: f64,
}

impl PropagationParams {
    pub fn new(frequency_hz: f64, absorption_per_m: f64) -> Self {
        Self {
            frequency_hz,
            absorption_per_m,
            speed_of_light: SPEED_OF_LIGHT,
        }
    }

    pub fn wavelength(&self) -> f64 {
        self.speed_of_light / self.frequency_hz
    }

    pub fn path_loss(&self, distance_m: f64) -> Result<f64> {
        path_loss_with(
            self.frequency_hz,
            distance_m,
            self.absorption_per_m,
            self.speed_of_light,
        )
    }
}

/// THz path loss `(4 pi f d / c)^2 exp(k d)` with `c` the speed of light.
pub fn path_loss(frequency_hz: f64, distance_m: f64, absorption_per_m: f64) -> Result<f64> {
    path_loss_with(frequency_hz, distance_m, absorption_per_m, SPEED_OF_LIGHT)
}

fn path_loss_with(f: f64, d: f64, k_abs: f64, c: f64) -> Result<f64> {
    if !(f > 0.0) || !(d > 0.0) {
        return Err(Error::Domain(format!(
            "path loss needs f > 0 and d > 0, got f={f}, d={d}"
        )));
    }
    if !(k_abs >= 0.0) {
        return Err(Error::Domain(format!(
            "absorption must be non-negative, got {k_abs}"
        )));
    }
    let spread = 4.0 * PI * f * d / c;
    Ok(spread * spread * (k_abs * d).exp())
}

/// Unit-norm UPA response `(1/sqrt(n1 n2)) e^{-j p1 [0..n1)} (x) e^{-j p2 [0..n2)}`.
pub fn steering_vector_upa(counts: (usize, usize), phase_gains: (f64, f64)) -> CVector {
    let (n1, n2) = counts;
    let norm = 1.0 / ((n1 * n2) as f64).sqrt();
    CVector::from_fn(n1 * n2, |p, _| {
        let (i1, i2) = ((p / n2) as f64, (p % n2) as f64);
        C64::from_polar(norm, -(phase_gains.0 * i1 + phase_gains.1 * i2))
    })
}

/// Realised channels for one coherence block.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// BS to RIS, `N x M`.
    pub h: CMatrix,
    /// RIS to users and target, `(K+1) x N`; row `k` is `g_k^H`, last row the target.
    pub g: CMatrix,
}

impl ChannelSet {
    pub fn synthesize(geom: &Geometry, prop: &PropagationParams) -> Result<Self> {
        Ok(Self {
            h: bs_ris_channel(geom, prop)?,
            g: ris_user_channels(geom, prop)?,
        })
    }

    pub fn num_users(&self) -> usize {
        self.g.nrows() - 1
    }

    pub fn target_row(&self) -> usize {
        self.g.nrows() - 1
    }
}

/// `H = sqrt(N M / PL(f, d)) alpha_r alpha_t^H`.
pub fn bs_ris_channel(geom: &Geometry, prop: &PropagationParams) -> Result<CMatrix> {
    let pl = prop.path_loss(geom.bs_ris_distance_m)?;
    let gain = ((geom.ris.len() * geom.bs.len()) as f64 / pl).sqrt();
    let ar = geom.ris_arrival_steering();
    let at = geom.bs_steering();
    Ok((ar * at.adjoint()).scale(gain))
}

/// Rows `g_k^H = sqrt(N / PL(f, d_k)) beta_k^H`, users first, target last.
pub fn ris_user_channels(geom: &Geometry, prop: &PropagationParams) -> Result<CMatrix> {
    let n = geom.ris.len();
    let links: Vec<Link> = geom
        .users
        .iter()
        .copied()
        .chain(std::iter::once(geom.target))
        .collect();
    let mut g = CMatrix::zeros(links.len(), n);
    for (row, link) in links.iter().enumerate() {
        let pl = prop.path_loss(link.distance_m)?;
        let gain = (n as f64 / pl).sqrt();
        let beta = geom.ris_departure_steering(link.direction);
        for c in 0..n {
            g[(row, c)] = beta[c].conj() * gain;
        }
    }
    Ok(g)
}
