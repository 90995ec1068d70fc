//! Radar side: transmit covariance, steering-matrix derivatives, the 4x4
//! Fisher information over `(psi, omega, Re rho, Im rho)` and the angle CRB.
//!
//! The echo model is `Y = rho Omega diag(phi) (H X + N_a) + N_o` with the
//! rank-one steering matrix `Omega = alpha beta^T`, `alpha` over the sensing
//! elements and `beta` over the reflecting elements, both pointing at the
//! target direction stored in the geometry.

use nalgebra::{Matrix2, Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::channel::{CMatrix, ChannelSet, Geometry, C64};
use crate::comms::{NoiseParams, PrecoderPair};
use crate::error::{Error, Result};

/// Target reflection parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetParams {
    /// Complex round-trip gain including the radar cross section.
    pub rho: C64,
    /// Number of symbols `T` collected per dwell.
    pub dwell_symbols: usize,
}

impl TargetParams {
    pub fn validate(&self) -> Result<()> {
        if self.dwell_symbols == 0 {
            return Err(Error::Domain("dwell must be at least one symbol".into()));
        }
        if !(self.rho.norm() > 0.0 && self.rho.norm().is_finite()) {
            return Err(Error::Domain(format!(
                "rho must be finite and non-zero, got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

/// How the 2x2 angle CRB is reduced to the scalar compared against the cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrbReduction {
    #[default]
    Trace,
    MaxDiagonal,
}

/// Real symmetric Fisher information over `(psi, omega, Re rho, Im rho)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherMatrix {
    j: Matrix4<f64>,
}

impl FisherMatrix {
    /// Wraps a full matrix. In debug builds the symmetry and PSD invariants
    /// are asserted.
    pub fn from_matrix(j: Matrix4<f64>) -> Self {
        let fm = Self { j };
        debug_assert!(fm.is_symmetric(), "FIM not symmetric: {j}");
        debug_assert!(fm.is_psd(), "FIM not PSD: {j}");
        fm
    }

    pub fn from_blocks(xx: Matrix2<f64>, xr: Matrix2<f64>, rr: Matrix2<f64>) -> Self {
        let mut j = Matrix4::zeros();
        j.fixed_view_mut::<2, 2>(0, 0).copy_from(&xx);
        j.fixed_view_mut::<2, 2>(0, 2).copy_from(&xr);
        j.fixed_view_mut::<2, 2>(2, 0).copy_from(&xr.transpose());
        j.fixed_view_mut::<2, 2>(2, 2).copy_from(&rr);
        Self::from_matrix(j)
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.j
    }

    pub fn angle_block(&self) -> Matrix2<f64> {
        self.j.fixed_view::<2, 2>(0, 0).into_owned()
    }

    pub fn cross_block(&self) -> Matrix2<f64> {
        self.j.fixed_view::<2, 2>(0, 2).into_owned()
    }

    pub fn gain_block(&self) -> Matrix2<f64> {
        self.j.fixed_view::<2, 2>(2, 2).into_owned()
    }

    pub fn is_symmetric(&self) -> bool {
        let scale = self.j.amax();
        (self.j - self.j.transpose()).amax() <= 1e-10 * scale
    }

    pub fn is_psd(&self) -> bool {
        let trace = self.j.trace();
        let eig = SymmetricEigen::new(self.j);
        eig.eigenvalues.iter().all(|&l| l >= -1e-8 * trace.abs())
    }
}

/// `R_x = W W^H`.
pub fn transmit_covariance(w: &CMatrix) -> CMatrix {
    w * w.adjoint()
}

/// `Omega = alpha beta^T`, `N_s x N`.
pub fn omega_matrix(geom: &Geometry) -> CMatrix {
    let dir = geom.target.direction;
    let alpha = geom.sensing_steering(dir);
    let beta = geom.ris_departure_steering(dir);
    alpha * beta.transpose()
}

/// `diag(left) * m + m * diag(right)`.
fn index_weighted(m: &CMatrix, left: &[f64], right: &[f64]) -> CMatrix {
    CMatrix::from_fn(m.nrows(), m.ncols(), |r, c| {
        m[(r, c)] * (left[r] + right[c])
    })
}

/// Derivatives of [`omega_matrix`] with respect to the target azimuth and
/// elevation.
///
/// Writing each phase as `(2 pi / lambda)(k_y sin(psi) sin(omega) d_y + k_z cos(omega) d_z)`
/// with element row/column indices `k_y`, `k_z` gives
///
/// ```text
/// dOmega/dpsi   = -j c cos(psi) sin(omega) d_y (diag(k_sY) Omega + Omega diag(k_Y))
/// dOmega/domega = -j c sin(psi) cos(omega) d_y (diag(k_sY) Omega + Omega diag(k_Y))
///                 + j c sin(omega) d_z (diag(k_sZ) Omega + Omega diag(k_Z))
/// ```
///
/// with `c = 2 pi / lambda`.
pub fn omega_derivatives(geom: &Geometry) -> (CMatrix, CMatrix) {
    let dir = geom.target.direction;
    let (psi, om) = (dir.azimuth, dir.elevation);
    if om.sin().abs() < 1e-6 {
        log::warn!("target elevation {om} rad: sin(omega) < 1e-6, azimuth derivative vanishes");
    }
    let c = 2.0 * std::f64::consts::PI / geom.wavelength_m;
    let omega = omega_matrix(geom);
    let y_part = index_weighted(&omega, &geom.sensing.row_indices(), &geom.ris.row_indices());
    let z_part = index_weighted(&omega, &geom.sensing.col_indices(), &geom.ris.col_indices());
    let minus_j = C64::new(0.0, -1.0);

    let d_psi = y_part.map(|x| x * minus_j * (c * psi.cos() * om.sin() * geom.spacing_y_m));
    let d_omega = y_part.map(|x| x * minus_j * (c * psi.sin() * om.cos() * geom.spacing_y_m))
        - z_part.map(|x| x * minus_j * (c * om.sin() * geom.spacing_z_m));
    (d_psi, d_omega)
}

/// `tr(A S B^H)` computed as the Frobenius inner product of `B` and `A S`.
fn trace_sandwich(a_s: &CMatrix, b: &CMatrix) -> C64 {
    a_s.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
}

/// Fisher information of the target parameters.
///
/// Each block is built from the weighted trace
/// `K(A, B) = T tr(A Phi H R_x H^H Phi^H B^H) + T sigma_a^2 tr(A Phi Phi^H B^H)`:
///
/// * `J_xx[i][j] = (2 |rho|^2 / sigma_o^2) Re K(D_i, D_j)`
/// * `J_xr[i]    = (2 / sigma_o^2) Re(rho* K(Omega, D_i) [1, j])`
/// * `J_rr       = (2 / sigma_o^2) K(Omega, Omega) I_2`
///
/// where `D_0`, `D_1` are the azimuth and elevation derivatives of `Omega`.
pub fn fim(
    pp: &PrecoderPair,
    ch: &ChannelSet,
    tp: &TargetParams,
    np: &NoiseParams,
    geom: &Geometry,
) -> Result<FisherMatrix> {
    let (n, m) = ch.h.shape();
    if pp.w.nrows() != m || pp.phi.len() != n || geom.ris.len() != n {
        return Err(Error::Dimension(format!(
            "W {:?}, phi {}, H {:?}, surface {} elements",
            pp.w.shape(),
            pp.phi.len(),
            ch.h.shape(),
            geom.ris.len()
        )));
    }
    let omega = omega_matrix(geom);
    let (d_psi, d_omega) = omega_derivatives(geom);
    let mats = [&d_psi, &d_omega, &omega];

    // Phi H R_x H^H Phi^H = (Phi H W)(Phi H W)^H
    let mut phi_h_w = &ch.h * &pp.w;
    for (r, p) in pp.phi.iter().enumerate() {
        phi_h_w.row_mut(r).iter_mut().for_each(|x| *x *= p);
    }
    let signal = &phi_h_w * phi_h_w.adjoint();
    let t = tp.dwell_symbols as f64;

    // A S for each A, and A Phi Phi^H (column scaling by |phi|^2)
    let a_signal: Vec<CMatrix> = mats.iter().map(|a| *a * &signal).collect();
    let a_noise: Vec<CMatrix> = mats
        .iter()
        .map(|a| {
            let mut out = (*a).clone();
            for (c, p) in pp.phi.iter().enumerate() {
                let w = p.norm_sqr();
                out.column_mut(c).iter_mut().for_each(|x| *x *= w);
            }
            out
        })
        .collect();
    let k = |i: usize, j: usize| -> C64 {
        (trace_sandwich(&a_signal[i], mats[j])
            + trace_sandwich(&a_noise[i], mats[j]) * np.sigma_a_sq)
            * t
    };

    let s = 2.0 / np.sigma_o_sq;
    let rho2 = tp.rho.norm_sqr();
    let mut xx = Matrix2::zeros();
    for i in 0..2 {
        for j in 0..2 {
            xx[(i, j)] = s * rho2 * k(j, i).re;
        }
    }
    // K(Omega, D_i) = tr(Omega S D_i^H)
    let mut xr = Matrix2::zeros();
    for i in 0..2 {
        let z = tp.rho.conj() * k(2, i);
        xr[(i, 0)] = s * z.re;
        xr[(i, 1)] = s * (z * C64::new(0.0, 1.0)).re;
    }
    let rr = Matrix2::identity() * (s * k(2, 2).re);
    // symmetrise the angle block against rounding
    let xx = (xx + xx.transpose()) * 0.5;
    Ok(FisherMatrix::from_blocks(xx, xr, rr))
}

/// `[J_xx - J_xr J_rr^{-1} J_xr^T]^{-1}`, the CRB of `(psi, omega)`.
pub fn crb_angles(fm: &FisherMatrix) -> Result<Matrix2<f64>> {
    let rr = fm.gain_block();
    let det_rr = rr.determinant();
    if !(det_rr > 1e-300 && det_rr > 1e-12 * rr[(0, 0)].abs() * rr[(1, 1)].abs()) {
        return Err(Error::UnidentifiableTarget(
            "reflection-gain block of the FIM is singular".into(),
        ));
    }
    let rr_inv = rr
        .try_inverse()
        .ok_or_else(|| Error::UnidentifiableTarget("J_rr not invertible".into()))?;
    let xr = fm.cross_block();
    let schur = fm.angle_block() - xr * rr_inv * xr.transpose();
    let schur = (schur + schur.transpose()) * 0.5;
    let det = schur.determinant();
    let scale = schur[(0, 0)].abs() * schur[(1, 1)].abs();
    if !(schur[(0, 0)] > 0.0 && schur[(1, 1)] > 0.0 && det > 1e-12 * scale && det > 1e-300) {
        return Err(Error::UnidentifiableTarget(format!(
            "angle Schur complement is singular (det {det:e})"
        )));
    }
    let inv = schur
        .try_inverse()
        .ok_or_else(|| Error::UnidentifiableTarget("Schur complement not invertible".into()))?;
    Ok((inv + inv.transpose()) * 0.5)
}

/// Scalar CRB compared against the sensing cap.
pub fn crb_scalar(fm: &FisherMatrix, reduction: CrbReduction) -> Result<f64> {
    let crb = crb_angles(fm)?;
    Ok(match reduction {
        CrbReduction::Trace => crb.trace(),
        CrbReduction::MaxDiagonal => crb[(0, 0)].max(crb[(1, 1)]),
    })
}
