//! Physical constants, materials, incident-wave specifications, and small
//! coordinate/vector utilities shared by every other module.

use crate::{Error, Result};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type Vec3 = [f64; 3];

pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn normalize(a: Vec3) -> Vec3 {
    scale(a, 1.0 / norm(a))
}

/// Vacuum permittivity, permeability and light speed.
///
/// Defaults to full-precision CODATA values; `with_c` rescales `eps0` so a
/// round value of `c` (as used in the transient benchmark cases) can be
/// reproduced exactly while keeping `mu0` fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub eps0: f64,
    pub mu0: f64,
    pub c: f64,
}

impl PhysicalConstants {
    pub const CODATA: PhysicalConstants = PhysicalConstants {
        eps0: 8.854_187_812_8e-12,
        mu0: 4.0e-7 * std::f64::consts::PI,
        c: 299_792_458.0,
    };

    pub fn codata() -> Self {
        let mut k = Self::CODATA;
        // keep the invariant c = 1/sqrt(eps0 mu0) exact in f64
        k.c = 1.0 / (k.eps0 * k.mu0).sqrt();
        k
    }

    /// Constants with a prescribed light speed (mu0 kept at 4*pi*1e-7).
    pub fn with_c(c: f64) -> Self {
        let mu0 = 4.0e-7 * std::f64::consts::PI;
        PhysicalConstants {
            eps0: 1.0 / (mu0 * c * c),
            mu0,
            c,
        }
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::codata()
    }
}

/// Relative permittivity and permeability of a (lossless, isotropic) medium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub eps_r: f64,
    pub mu_r: f64,
}

impl Material {
    pub const VACUUM: Material = Material {
        eps_r: 1.0,
        mu_r: 1.0,
    };

    pub fn new(eps_r: f64, mu_r: f64) -> Result<Self> {
        if eps_r <= 0.0 || mu_r <= 0.0 {
            return Err(Error::Config(format!(
                "material parameters must be positive (eps_r = {eps_r}, mu_r = {mu_r})"
            )));
        }
        Ok(Material { eps_r, mu_r })
    }

    pub fn eps(&self, k: &PhysicalConstants) -> f64 {
        self.eps_r * k.eps0
    }

    pub fn mu(&self, k: &PhysicalConstants) -> f64 {
        self.mu_r * k.mu0
    }

    /// Medium wavenumber k = k0 sqrt(mu_r eps_r).
    pub fn wavenumber(&self, k0: f64) -> f64 {
        k0 * (self.mu_r * self.eps_r).sqrt()
    }
}

/// A time-harmonic plane wave `E0 * exp(-i k0 (k_hat · x)) * e_hat`.
#[derive(Debug, Clone, Copy)]
pub struct HarmonicWaveSpec {
    pub omega: f64,
    pub k0: f64,
    pub amplitude: f64,
    pub propagation_axis: Vec3,
    pub polarization: Vec3,
}

impl HarmonicWaveSpec {
    /// Build from the vacuum wavenumber; omega follows from k0 = omega / c.
    pub fn from_k0(k0: f64, amplitude: f64, propagation_axis: Vec3, polarization: Vec3, consts: &PhysicalConstants) -> Result<Self> {
        let k_hat = normalize(propagation_axis);
        let e_hat = normalize(polarization);
        if dot(k_hat, e_hat).abs() > 1e-12 {
            return Err(Error::Config(
                "polarization must be orthogonal to the propagation axis".into(),
            ));
        }
        Ok(HarmonicWaveSpec {
            omega: k0 * consts.c,
            k0,
            amplitude,
            propagation_axis: k_hat,
            polarization: e_hat,
        })
    }
}

/// Evaluate the incident plane-wave electric field at a point.
pub fn plane_wave_field(spec: &HarmonicWaveSpec, x: Vec3) -> [C64; 3] {
    let phase = -spec.k0 * dot(spec.propagation_axis, x);
    let f = C64::from_polar(spec.amplitude, phase);
    [
        f * spec.polarization[0],
        f * spec.polarization[1],
        f * spec.polarization[2],
    ]
}

/// Neumann pulse (first derivative of a Gaussian) travelling along `k_hat`:
/// `E_inc = 2 u exp(-u^2/tau^2) E_hat` with `u = t - t0 - k_hat·(x - r0)/c`.
#[derive(Debug, Clone, Copy)]
pub struct NeumannPulseSpec {
    pub t0: f64,
    pub r0: Vec3,
    pub tau: f64,
    pub k_hat: Vec3,
    pub e_hat: Vec3,
    pub c: f64,
}

impl NeumannPulseSpec {
    pub fn new(t0: f64, r0: Vec3, tau: f64, k_hat: Vec3, e_hat: Vec3, c: f64) -> Result<Self> {
        if tau <= 0.0 {
            return Err(Error::Config("pulse width tau must be positive".into()));
        }
        let k_hat = normalize(k_hat);
        let e_hat = normalize(e_hat);
        if dot(k_hat, e_hat).abs() > 1e-12 {
            return Err(Error::Config(
                "pulse polarization must be orthogonal to the propagation direction".into(),
            ));
        }
        Ok(NeumannPulseSpec {
            t0,
            r0,
            tau,
            k_hat,
            e_hat,
            c,
        })
    }

    #[inline]
    pub fn retarded_time(&self, t: f64, x: Vec3) -> f64 {
        t - self.t0 - dot(self.k_hat, sub(x, self.r0)) / self.c
    }

    /// Scalar waveform g(u) = 2 u exp(-u^2/tau^2).
    #[inline]
    pub fn waveform(&self, u: f64) -> f64 {
        2.0 * u * (-u * u / (self.tau * self.tau)).exp()
    }

    /// dg/du = 2 (1 - 2 u^2/tau^2) exp(-u^2/tau^2).
    #[inline]
    pub fn waveform_derivative(&self, u: f64) -> f64 {
        let t2 = self.tau * self.tau;
        2.0 * (1.0 - 2.0 * u * u / t2) * (-u * u / t2).exp()
    }

    /// Antiderivative of g vanishing at u -> -infinity: -tau^2 exp(-u^2/tau^2).
    #[inline]
    pub fn waveform_antiderivative(&self, u: f64) -> f64 {
        -self.tau * self.tau * (-u * u / (self.tau * self.tau)).exp()
    }
}

/// Incident pulse field and its analytic time derivative at (t, x).
pub fn neumann_pulse(spec: &NeumannPulseSpec, t: f64, x: Vec3) -> (Vec3, Vec3) {
    let u = spec.retarded_time(t, x);
    let g = spec.waveform(u);
    let dg = spec.waveform_derivative(u);
    (scale(spec.e_hat, g), scale(spec.e_hat, dg))
}

/// A point in spherical coordinates (physics convention, theta from +z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalPoint {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

impl SphericalPoint {
    pub fn new(r: f64, theta: f64, phi: f64) -> Self {
        SphericalPoint { r, theta, phi }
    }

    pub fn to_cartesian(&self) -> Vec3 {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [self.r * st * cp, self.r * st * sp, self.r * ct]
    }

    /// Local orthonormal basis (r_hat, theta_hat, phi_hat) in Cartesian axes.
    pub fn unit_vectors(&self) -> (Vec3, Vec3, Vec3) {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        (
            [st * cp, st * sp, ct],
            [ct * cp, ct * sp, -st],
            [-sp, cp, 0.0],
        )
    }
}

/// Convert a Cartesian point to spherical coordinates.
///
/// On the polar axis phi is undefined; 0 is returned so downstream
/// post-processing stays deterministic.
pub fn to_spherical(x: Vec3) -> Result<SphericalPoint> {
    let r = norm(x);
    if r == 0.0 {
        return Err(Error::Geometry("spherical coordinates of the zero vector".into()));
    }
    let theta = (x[2] / r).clamp(-1.0, 1.0).acos();
    let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
    let phi = if rho == 0.0 {
        0.0
    } else {
        let p = x[1].atan2(x[0]);
        if p < 0.0 {
            p + 2.0 * std::f64::consts::PI
        } else {
            p
        }
    };
    Ok(SphericalPoint { r, theta, phi })
}

/// Convert spherical components of a vector field to Cartesian components.
pub fn spherical_vector_to_cartesian(p: &SphericalPoint, vr: C64, vtheta: C64, vphi: C64) -> [C64; 3] {
    let (er, et, ep) = p.unit_vectors();
    [
        vr * er[0] + vtheta * et[0] + vphi * ep[0],
        vr * er[1] + vtheta * et[1] + vphi * ep[1],
        vr * er[2] + vtheta * et[2] + vphi * ep[2],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn light_speed_consistent() {
        let k = PhysicalConstants::codata();
        let derived = 1.0 / (k.eps0 * k.mu0).sqrt();
        assert!((k.c - derived).abs() / derived < 1e-12);
        let k2 = PhysicalConstants::with_c(3.0e8);
        assert_eq!(k2.c, 3.0e8);
        let derived2 = 1.0 / (k2.eps0 * k2.mu0).sqrt();
        assert!((k2.c - derived2).abs() / derived2 < 1e-12);
    }

    #[test]
    fn material_rejects_nonpositive() {
        assert!(Material::new(-1.0, 1.0).is_err());
        assert!(Material::new(1.5, 1.0).is_ok());
    }

    fn x_polarized_wave(k0: f64) -> HarmonicWaveSpec {
        HarmonicWaveSpec::from_k0(
            k0,
            1.0,
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 0.0],
            &PhysicalConstants::codata(),
        )
        .unwrap()
    }

    #[test]
    fn plane_wave_at_origin_is_real_unit() {
        let spec = x_polarized_wave(1.0);
        let e = plane_wave_field(&spec, [0.0, 0.0, 0.0]);
        assert!((e[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert_eq!(e[1], C64::new(0.0, 0.0));
        assert_eq!(e[2], C64::new(0.0, 0.0));
    }

    #[test]
    fn plane_wave_half_period_flip() {
        let spec = x_polarized_wave(2.0);
        // k_hat.x = pi / k0
        let e = plane_wave_field(&spec, [0.0, 0.0, PI / 2.0]);
        assert!((e[0] - C64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn plane_wave_phase_on_sphere_surface() {
        // k0 a = 1: at z = a the phase is exactly -1 rad
        let spec = x_polarized_wave(1.0);
        let e = plane_wave_field(&spec, [0.0, 0.0, 1.0]);
        assert!((e[0].arg() + 1.0).abs() < 1e-14);
    }

    #[test]
    fn plane_wave_unit_magnitude_everywhere() {
        let spec = x_polarized_wave(3.7);
        for p in [[0.2, -1.0, 4.0], [1e3, 2e2, -5.0], [0.0, 0.0, 1e-9]] {
            let e = plane_wave_field(&spec, p);
            let mag = (e[0].norm_sqr() + e[1].norm_sqr() + e[2].norm_sqr()).sqrt();
            assert!((mag - 1.0).abs() < 1e-12);
        }
    }

    fn paper_pulse() -> NeumannPulseSpec {
        NeumannPulseSpec::new(
            25.99e-9,
            [0.0, 0.0, -1.2],
            5.25e-9,
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 0.0],
            3.0e8,
        )
        .unwrap()
    }

    #[test]
    fn pulse_zero_at_reference() {
        let spec = paper_pulse();
        let (e, _) = neumann_pulse(&spec, spec.t0, spec.r0);
        assert_eq!(norm(e), 0.0);
    }

    #[test]
    fn pulse_peak_magnitude() {
        // max of 2 u exp(-u^2/tau^2) is sqrt(2) tau e^{-1/2} at u = tau/sqrt(2)
        let spec = paper_pulse();
        let u = spec.tau / 2.0f64.sqrt();
        let t = spec.t0 + u; // at x = r0 the retarded time is t - t0
        let (e, _) = neumann_pulse(&spec, t, spec.r0);
        let expect = 2.0f64.sqrt() * spec.tau * (-0.5f64).exp();
        assert!((norm(e) - expect).abs() / expect < 1e-12);
    }

    #[test]
    fn pulse_derivative_matches_finite_difference() {
        let spec = paper_pulse();
        let h = 1e-3 * spec.tau;
        let mut rng = 0x2545f4914f6cdd1du64;
        let mut next = move || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng >> 11) as f64 / (1u64 << 53) as f64
        };
        // derivative peak |dg/du| = 2 sets the comparison scale
        let peak = 2.0;
        for _ in 0..100 {
            let t = 40e-9 * next();
            let x = [2.0 * next() - 1.0, 2.0 * next() - 1.0, 2.0 * next() - 1.0];
            let (_, de) = neumann_pulse(&spec, t, x);
            let (ep, _) = neumann_pulse(&spec, t + h, x);
            let (em, _) = neumann_pulse(&spec, t - h, x);
            let fd = scale(sub(ep, em), 0.5 / h);
            assert!(norm(sub(de, fd)) / peak < 1e-6, "fd mismatch: {de:?} vs {fd:?}");
        }
    }

    #[test]
    fn pulse_antiderivative_consistent() {
        let spec = paper_pulse();
        let h = 1e-4 * spec.tau;
        for u in [-2.0 * spec.tau, -0.3 * spec.tau, 0.0, 1.7 * spec.tau] {
            let fd = (spec.waveform_antiderivative(u + h) - spec.waveform_antiderivative(u - h)) / (2.0 * h);
            assert!((fd - spec.waveform(u)).abs() < 1e-6 * spec.tau.max(1.0));
        }
    }

    proptest! {
        #[test]
        fn pulse_translation_covariance(dt in -1e-8f64..1e-8, t in 0f64..4e-8,
                                        px in -1f64..1.0, py in -1f64..1.0, pz in -1f64..1.0) {
            let spec = paper_pulse();
            let x = [px, py, pz];
            let shifted = add(x, scale(spec.k_hat, spec.c * dt));
            let u1 = spec.retarded_time(t, x);
            let u2 = spec.retarded_time(t + dt, shifted);
            // shifting t by dt and x by c dt k_hat leaves the retarded time unchanged
            prop_assert!((u1 - u2).abs() <= 1e-22 + 1e-12 * u1.abs());
        }

        #[test]
        fn spherical_round_trip(x in -10f64..10.0, y in -10f64..10.0, z in -10f64..10.0) {
            prop_assume!(x*x + y*y + z*z > 1e-6);
            let p = to_spherical([x, y, z]).unwrap();
            let back = p.to_cartesian();
            let r = norm([x, y, z]);
            prop_assert!(norm(sub(back, [x, y, z])) < 1e-12 * r);
        }
    }

    #[test]
    fn spherical_known_points() {
        let p = to_spherical([0.0, 0.0, 1.0]).unwrap();
        assert!((p.r - 1.0).abs() < 1e-15 && p.theta.abs() < 1e-15 && p.phi == 0.0);
        let p = to_spherical([1.0, 0.0, 0.0]).unwrap();
        assert!((p.theta - PI / 2.0).abs() < 1e-15 && p.phi.abs() < 1e-15);
        let p = to_spherical([1.0, 1.0, 0.0]).unwrap();
        assert!((p.r - 2.0f64.sqrt()).abs() < 1e-15);
        assert!((p.theta - PI / 2.0).abs() < 1e-15);
        assert!((p.phi - PI / 4.0).abs() < 1e-15);
        assert!(to_spherical([0.0; 3]).is_err());
    }
}
