//! Interpolating splines on digital nets, fitted by a quotient of Walsh transforms.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Result, WalshError};
use crate::fwt::{fwt, real_spectrum, fwt_in_place, ifwt, ifwt_in_place, SampleVector, SpectralVector};
use crate::kernel::{k1_table, kernel_values_dd, word_difference_level, KernelParams, NetGeometry};
use crate::net::GeneratingMatrices;

/// Spectra below this magnitude are treated as numerically singular.
pub const SINGULAR_THRESHOLD: f64 = 1e-280;

/// Fitted interpolant `Sf(x) = sum_n c_n K(x, x_n)`.
#[derive(Clone, Debug)]
pub struct SplineModel {
    net: GeneratingMatrices,
    geometry: Arc<NetGeometry>,
    params: KernelParams,
    f_tilde: SpectralVector,
    k_tilde: SpectralVector,
    c_tilde: SpectralVector,
    c: SampleVector,
}

fn check_samples(geom: &NetGeometry, values: &SampleVector) -> Result<()> {
    if values.base() != geom.base() {
        return Err(WalshError::BaseMismatch { left: values.base().get(), right: geom.base().get() });
    }
    if values.len() != geom.len() {
        return Err(WalshError::DimensionMismatch { expected: geom.len(), found: values.len() });
    }
    Ok(())
}

/// `fwt` of the kernel data, rejecting vanishing entries.
pub fn kernel_spectrum(geom: &NetGeometry, params: &KernelParams) -> Result<SpectralVector> {
    let kt = SpectralVector::new(geom.base(), real_spectrum(geom.base(), kernel_values_dd(geom, params)?)?)?;
    if let Some((label, v)) = kt.values().iter().enumerate().find(|(_, v)| !(v.norm() >= SINGULAR_THRESHOLD && v.re.is_finite())) {
        return Err(WalshError::SingularKernel { label, value: v.norm() });
    }
    debug_assert!(kt.imag_residue() <= 1e-12);
    Ok(kt)
}

impl SplineModel {
    pub fn fit(net: &GeneratingMatrices, fvals: &SampleVector, params: &KernelParams) -> Result<SplineModel> {
        Self::fit_with_geometry(net, Arc::new(NetGeometry::new(net)), fvals, params)
    }

    /// Fit reusing precomputed level tables of `net`.
    pub fn fit_with_geometry(net: &GeneratingMatrices, geometry: Arc<NetGeometry>, fvals: &SampleVector, params: &KernelParams) -> Result<SplineModel> {
        check_samples(&geometry, fvals)?;
        let k_tilde = kernel_spectrum(&geometry, params)?;
        let f_tilde = fwt(fvals);
        let scale = geometry.len() as f64;
        let c_vals: Vec<Complex64> = f_tilde.values().iter().zip(k_tilde.values()).map(|(f, k)| f / (k * scale)).collect();
        let c_tilde = SpectralVector::new(geometry.base(), c_vals)?;
        let c = ifwt(&c_tilde);
        Ok(SplineModel { net: net.clone(), geometry, params: params.clone(), f_tilde, k_tilde, c_tilde, c })
    }

    /// Rebuild a model from exported coefficients `c`.
    pub fn from_coefficients(net: &GeneratingMatrices, params: &KernelParams, c: &SampleVector) -> Result<SplineModel> {
        let geometry = Arc::new(NetGeometry::new(net));
        check_samples(&geometry, c)?;
        let k_tilde = kernel_spectrum(&geometry, params)?;
        let c_tilde = fwt(c);
        let scale = geometry.len() as f64;
        let f_vals: Vec<Complex64> = c_tilde.values().iter().zip(k_tilde.values()).map(|(c, k)| c * k * scale).collect();
        let f_tilde = SpectralVector::new(geometry.base(), f_vals)?;
        Ok(SplineModel { net: net.clone(), geometry, params: params.clone(), f_tilde, k_tilde, c_tilde, c: c.clone() })
    }

    pub fn net(&self) -> &GeneratingMatrices {
        &self.net
    }

    pub fn geometry(&self) -> &NetGeometry {
        &self.geometry
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn f_tilde(&self) -> &SpectralVector {
        &self.f_tilde
    }

    pub fn k_tilde(&self) -> &SpectralVector {
        &self.k_tilde
    }

    pub fn c_tilde(&self) -> &SpectralVector {
        &self.c_tilde
    }

    pub fn coefficients(&self) -> &SampleVector {
        &self.c
    }

    /// `Sf(x)` at a point of `[0,1)^s`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let xw = self.geometry.point_words(x)?;
        Ok(evaluate_words(&self.geometry, &self.params, &self.c.re(), &xw))
    }

    /// `Sf` at many points.
    pub fn evaluate_many(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        let c = self.c.re();
        xs.par_iter()
            .map(|x| {
                let xw = self.geometry.point_words(x)?;
                Ok(evaluate_words(&self.geometry, &self.params, &c, &xw))
            })
            .collect()
    }

    /// `||Sf||^2 = p^{2m} sum_h |c~[h]|^2 K~[h]`.
    pub fn hk_norm_squared(&self) -> f64 {
        let n2 = (self.geometry.len() as f64).powi(2);
        n2 * self.c_tilde.values().iter().zip(self.k_tilde.values()).map(|(c, k)| c.norm_sqr() * k.re).sum::<f64>()
    }

    pub fn hk_norm(&self) -> f64 {
        self.hk_norm_squared().sqrt()
    }
}

/// `sum_n c_n K(x, x_n)` for a query point given as `r`-digit words.
pub(crate) fn evaluate_words(geom: &NetGeometry, params: &KernelParams, c: &[f64], xw: &[u64]) -> f64 {
    let (p, r, s) = (geom.base(), geom.r(), geom.s());
    let base = k1_table(p, params.alpha(), r);
    let weighted: Vec<Vec<f64>> = params.gamma().iter().map(|g| base.iter().map(|k| 1.0 + g * k).collect()).collect();
    geom.words()
        .chunks(s)
        .zip(c)
        .map(|(yw, cn)| {
            let k: f64 = xw.iter().zip(yw).zip(&weighted).map(|((&a, &b), t)| t[word_difference_level(a, b, p, r) as usize]).product();
            cn * k
        })
        .sum()
}

/// Spectral Gram product with a precomputed kernel spectrum.
pub(crate) fn gram_apply_spectral(k_tilde: &SpectralVector, coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    if coeffs.len() != k_tilde.len() {
        return Err(WalshError::DimensionMismatch { expected: k_tilde.len(), found: coeffs.len() });
    }
    let p = k_tilde.base();
    let mut buf = coeffs.to_vec();
    fwt_in_place(p, &mut buf)?;
    let scale = buf.len() as f64;
    for (b, k) in buf.iter_mut().zip(k_tilde.values()) {
        *b *= k * scale;
    }
    ifwt_in_place(p, &mut buf)?;
    Ok(buf)
}

/// `out[n] = sum_v coeffs[v] K(x_n ⊖ x_v, 0)` via `ifwt(p^m K~ * fwt(coeffs))`.
pub fn gram_apply(net: &GeneratingMatrices, params: &KernelParams, coeffs: &SampleVector) -> Result<SampleVector> {
    let geom = NetGeometry::new(net);
    check_samples(&geom, coeffs)?;
    let kt = kernel_spectrum(&geom, params)?;
    SampleVector::new(net.base(), gram_apply_spectral(&kt, coeffs.values())?)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::base_p::{fraction_digits, PrimeBase};
    use crate::kernel::k1_closed;
    use crate::net::{sobol_default, tests::random_matrices};
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Kernel evaluated from digit expansions of the coordinates.
    pub(crate) fn kernel_direct(params: &KernelParams, x: &[f64], y: &[f64], r: usize) -> f64 {
        let p = params.base();
        x.iter()
            .zip(y)
            .zip(params.gamma())
            .map(|((&a, &b), g)| 1.0 + g * k1_closed(&fraction_digits(a, p, r).unwrap(), &fraction_digits(b, p, r).unwrap(), params.alpha()))
            .product()
    }

    pub(crate) fn dense_gram(net: &GeneratingMatrices, params: &KernelParams) -> DMatrix<f64> {
        let pts: Vec<Vec<f64>> = net.net_points(1 << 12).unwrap().into_iter().map(|p| p.coords).collect();
        DMatrix::from_fn(pts.len(), pts.len(), |i, j| kernel_direct(params, &pts[i], &pts[j], net.r()))
    }

    fn random_f(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
    }

    #[test]
    fn matches_dense_solve() {
        for (m, s, seed) in [(3usize, 1usize, 1u64), (5, 2, 2), (6, 3, 3)] {
            let p = PrimeBase::TWO;
            let net = sobol_default(s, m, 32).unwrap();
            let params = KernelParams::factorized(p, 1.8, 1.5, -0.5, s).unwrap();
            let f = random_f(net.len(), seed);
            let model = SplineModel::fit(&net, &SampleVector::from_real(p, &f).unwrap(), &params).unwrap();
            let gram = dense_gram(&net, &params);
            let dense_c = gram.clone().lu().solve(&DVector::from_vec(f.clone())).unwrap();
            assert!(rel_err(&model.coefficients().re(), dense_c.as_slice()) < 1e-8);
            assert!(model.coefficients().imag_residue() < 1e-12);

            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let pts: Vec<Vec<f64>> = net.net_points(1 << 12).unwrap().into_iter().map(|p| p.coords).collect();
            for _ in 0..20 {
                let x: Vec<f64> = (0..s).map(|_| rng.gen_range(0.0..1.0)).collect();
                let want: f64 = pts.iter().zip(dense_c.iter()).map(|(y, c)| c * kernel_direct(&params, &x, y, 32)).sum();
                let got = model.evaluate(&x).unwrap();
                assert!((got - want).abs() <= 1e-8 * (1.0 + want.abs()));
            }

            let quad = (dense_c.transpose() * &gram * &dense_c)[(0, 0)];
            assert!((model.hk_norm_squared() - quad).abs() <= 1e-9 * quad);
        }
    }

    #[test]
    fn other_bases_match_dense_solve() {
        for (p, m, s) in [(3u32, 3usize, 2usize), (5, 2, 2)] {
            let p = PrimeBase::new(p).unwrap();
            let net = GeneratingMatrices::new(p, m, m + 3, random_matrices(p, m, m + 3, s, 9)).unwrap();
            let params = KernelParams::new(p, 2.0, vec![0.8; s]).unwrap();
            let f = random_f(net.len(), 4);
            let model = SplineModel::fit(&net, &SampleVector::from_real(p, &f).unwrap(), &params).unwrap();
            let dense_c = dense_gram(&net, &params).lu().solve(&DVector::from_vec(f.clone())).unwrap();
            assert!(rel_err(&model.coefficients().re(), dense_c.as_slice()) < 1e-8);
            for (n, pt) in net.net_points(1 << 12).unwrap().iter().enumerate() {
                assert!((model.evaluate(&pt.coords).unwrap() - f[n]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn interpolates_at_net_points() {
        let p = PrimeBase::TWO;
        for m in [8usize, 12] {
            let net = sobol_default(4, m, 32).unwrap();
            let params = KernelParams::factorized(p, 2.0, 1.0, 0.0, 4).unwrap();
            let f: Vec<f64> = net.net_points(1 << 12).unwrap().iter().map(|pt| pt.coords.iter().map(|x| (3.0 * x).sin()).sum()).collect();
            let fmax = f.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let model = SplineModel::fit(&net, &SampleVector::from_real(p, &f).unwrap(), &params).unwrap();
            let back = gram_apply(&net, &params, model.coefficients()).unwrap().re();
            assert!(back.iter().zip(&f).all(|(a, b)| (a - b).abs() <= 1e-8 * (1.0 + fmax)));
            let pts = net.net_points(1 << 12).unwrap();
            for n in (0..net.len()).step_by(37) {
                assert!((model.evaluate(&pts[n].coords).unwrap() - f[n]).abs() <= 1e-8 * (1.0 + fmax));
            }
        }
    }

    #[test]
    fn gram_apply_matches_dense_product() {
        let p = PrimeBase::TWO;
        let net = sobol_default(3, 5, 32).unwrap();
        let params = KernelParams::factorized(p, 2.5, 0.7, 1.0, 3).unwrap();
        let coeffs = random_f(net.len(), 8);
        let fast = gram_apply(&net, &params, &SampleVector::from_real(p, &coeffs).unwrap()).unwrap().re();
        let dense = dense_gram(&net, &params) * DVector::from_vec(coeffs);
        assert!(rel_err(&fast, dense.as_slice()) < 1e-12);

        let mut delta = vec![0.0; net.len()];
        delta[0] = 1.0;
        let col = gram_apply(&net, &params, &SampleVector::from_real(p, &delta).unwrap()).unwrap().re();
        let kd = crate::kernel::kernel_data_k(&net, &params).unwrap().re();
        assert!(rel_err(&col, &kd) < 1e-13);
        assert!(gram_apply(&net, &params, &SampleVector::from_real(p, &[1.0; 16]).unwrap()).is_err());
    }

    #[test]
    fn constant_data_has_single_spectral_line() {
        let p = PrimeBase::TWO;
        let net = sobol_default(2, 6, 32).unwrap();
        let params = KernelParams::factorized(p, 2.0, 1.0, 0.0, 2).unwrap();
        let model = SplineModel::fit(&net, &SampleVector::from_real(p, &vec![3.0; 64]).unwrap(), &params).unwrap();
        let ct = model.c_tilde().values();
        let k0 = model.k_tilde().values()[0].re;
        assert!((ct[0].re - 3.0 / (64.0 * k0)).abs() < 1e-15);
        assert!(ct[1..].iter().all(|v| v.norm() < 1e-15));
        let pts = net.net_points(64).unwrap();
        for pt in &pts {
            assert!((model.evaluate(&pt.coords).unwrap() - 3.0).abs() < 1e-10);
        }
        let quad = 9.0 / k0;
        assert!((model.hk_norm_squared() - quad).abs() < 1e-12 * quad);
    }

    #[test]
    fn one_point_net() {
        let p = PrimeBase::TWO;
        let net = GeneratingMatrices::identity(p, 0, 4, 2).unwrap();
        let params = KernelParams::new(p, 2.0, vec![0.5, 2.0]).unwrap();
        let model = SplineModel::fit(&net, &SampleVector::from_real(p, &[6.0]).unwrap(), &params).unwrap();
        assert!((model.coefficients().re()[0] - 6.0 / 4.5).abs() < 1e-15);
    }

    #[test]
    fn zero_data_and_linearity() {
        let p = PrimeBase::TWO;
        let net = sobol_default(2, 5, 32).unwrap();
        let params = KernelParams::factorized(p, 2.0, 1.0, 0.0, 2).unwrap();
        let fit = |f: &[f64]| SplineModel::fit(&net, &SampleVector::from_real(p, f).unwrap(), &params).unwrap();
        assert_eq!(fit(&[0.0; 32]).hk_norm(), 0.0);
        let (a, b) = (random_f(32, 1), random_f(32, 2));
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - 0.5 * y).collect();
        let (ca, cb, cab) = (fit(&a).coefficients().re(), fit(&b).coefficients().re(), fit(&ab).coefficients().re());
        for n in 0..32 {
            assert!((cab[n] - (2.0 * ca[n] - 0.5 * cb[n])).abs() < 1e-12);
        }
    }

    #[test]
    fn walsh_data_matches_dense_spline_off_net() {
        let p = PrimeBase::TWO;
        let net = sobol_default(2, 4, 32).unwrap();
        let params = KernelParams::new(p, 2.0, vec![1.0, 1.0]).unwrap();
        let pts: Vec<Vec<f64>> = net.net_points(16).unwrap().into_iter().map(|p| p.coords).collect();
        let f: Vec<f64> = pts.iter().map(|x| if x[0] < 0.5 { 1.0 } else { -1.0 }).collect();
        let model = SplineModel::fit(&net, &SampleVector::from_real(p, &f).unwrap(), &params).unwrap();
        let c = dense_gram(&net, &params).lu().solve(&DVector::from_vec(f)).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let x = [i as f64 / 8.0 + 1.0 / 32.0, j as f64 / 8.0 + 3.0 / 64.0];
                let want: f64 = pts.iter().zip(c.iter()).map(|(y, cn)| cn * kernel_direct(&params, &x, y, 32)).sum();
                assert!((model.evaluate(&x).unwrap() - want).abs() <= 1e-8 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn minimum_norm_among_interpolants() {
        let p = PrimeBase::TWO;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (m, s) in [(2usize, 1usize), (3, 2)] {
            let net = sobol_default(s, m, 32).unwrap();
            let params = KernelParams::factorized(p, 2.0, 1.2, 0.0, s).unwrap();
            let f = random_f(net.len(), 5);
            let model = SplineModel::fit(&net, &SampleVector::from_real(p, &f).unwrap(), &params).unwrap();
            let mut centers: Vec<Vec<f64>> = net.net_points(64).unwrap().into_iter().map(|p| p.coords).collect();
            let n = centers.len();
            for _ in 0..3 {
                centers.push((0..s).map(|_| rng.gen_range(0.0..1.0)).collect());
            }
            let gram = DMatrix::from_fn(centers.len(), centers.len(), |i, j| kernel_direct(&params, &centers[i], &centers[j], 32));
            for _ in 0..10 {
                let extra: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                // choose net coefficients so that g interpolates f on the net
                let rhs: DVector<f64> = DVector::from_fn(n, |i, _| f[i] - (0..3).map(|e| gram[(i, n + e)] * extra[e]).sum::<f64>());
                let head = gram.view((0, 0), (n, n)).into_owned().lu().solve(&rhs).unwrap();
                let g = DVector::from_iterator(n + 3, head.iter().copied().chain(extra.iter().copied()));
                let g_norm = (g.transpose() * &gram * &g)[(0, 0)].sqrt();
                assert!(model.hk_norm() <= g_norm + 1e-9);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = PrimeBase::TWO;
        let net = sobol_default(2, 3, 32).unwrap();
        let params = KernelParams::factorized(p, 2.0, 1.0, 0.0, 2).unwrap();
        assert!(SplineModel::fit(&net, &SampleVector::from_real(p, &[0.0; 4]).unwrap(), &params).is_err());
        let model = SplineModel::fit(&net, &SampleVector::from_real(p, &[1.0; 8]).unwrap(), &params).unwrap();
        assert!(matches!(model.evaluate(&[0.5, 1.0]), Err(WalshError::OutOfDomain { coord: 1, .. })));
        assert!(model.evaluate(&[0.5]).is_err());
        let wrong_s = KernelParams::factorized(p, 2.0, 1.0, 0.0, 3).unwrap();
        assert!(SplineModel::fit(&net, &SampleVector::from_real(p, &[1.0; 8]).unwrap(), &wrong_s).is_err());
    }

    #[test]
    fn extreme_params_report_singular_kernel() {
        let p = PrimeBase::TWO;
        let net = sobol_default(2, 4, 32).unwrap();
        let params = KernelParams::new(p, 2.0, vec![1e-300, 1e-300]).unwrap();
        let f = SampleVector::from_real(p, &[1.0; 16]).unwrap();
        match SplineModel::fit(&net, &f, &params) {
            Err(WalshError::SingularKernel { label, .. }) => assert!(label > 0),
            other => panic!("expected singular kernel, got {other:?}"),
        }
    }
}
