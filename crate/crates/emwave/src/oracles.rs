//! Closed-form reference solutions: the vector spherical-harmonic series for
//! plane-wave scattering off conducting and dielectric spheres, and the
//! conducting-box cavity fields.
//!
//! The series are assembled in the e^{-i omega t} convention of Bohren &
//! Huffman (incident field e^{+ikz}) and conjugated on return, matching the
//! solver's e^{+i omega t} / e^{-ikz} convention. The incident wave is
//! E0 e^{-ikz} x_hat in solver convention.

use crate::model::{SphericalPoint, C64, I};
use crate::{Error, Result};

/// Series truncation: stop when a term falls below `tail_tolerance` times
/// the running magnitude, give up at `max_terms`.
#[derive(Debug, Clone, Copy)]
pub struct SeriesControl {
    pub max_terms: usize,
    pub tail_tolerance: f64,
}

impl SeriesControl {
    pub fn for_size(ka: f64) -> Self {
        SeriesControl {
            max_terms: ka.abs().ceil() as usize + 20,
            tail_tolerance: 1e-12,
        }
    }
}

// ---------------------------------------------------------------------------
// spherical Bessel machinery
// ---------------------------------------------------------------------------

/// Spherical Bessel j_n(x) for n = 0..=nmax by downward recurrence
/// (normalized against j_0), plus y_n by upward recurrence.
/// The Riccati forms psi = x j, chi = x y and their derivatives follow.
pub struct RadialTable {
    pub psi: Vec<f64>,
    pub dpsi: Vec<f64>,
    pub chi: Vec<f64>,
    pub dchi: Vec<f64>,
}

impl RadialTable {
    /// xi_n = psi_n + i chi_n = x h1_n (outgoing for e^{-i omega t}).
    pub fn xi(&self, n: usize) -> C64 {
        C64::new(self.psi[n], self.chi[n])
    }

    pub fn dxi(&self, n: usize) -> C64 {
        C64::new(self.dpsi[n], self.dchi[n])
    }
}

/// Evaluate the radial table at real argument x > 0.
pub fn radial_table(x: f64, nmax: usize) -> Result<RadialTable> {
    if !(x > 0.0) {
        return Err(Error::SeriesDivergence(format!("radial argument {x} <= 0")));
    }
    // downward recurrence for j_n, starting far above nmax
    let start = nmax + 16 + (x.abs() as usize);
    let mut jdown = vec![0.0f64; start + 2];
    jdown[start + 1] = 0.0;
    jdown[start] = 1e-280;
    for n in (1..=start).rev() {
        jdown[n - 1] = (2.0 * n as f64 + 1.0) / x * jdown[n] - jdown[n + 1];
        if jdown[n - 1].abs() > 1e260 {
            for v in jdown[n - 1..].iter_mut() {
                *v *= 1e-260;
            }
        }
    }
    let j0 = x.sin() / x;
    let scale = j0 / jdown[0];
    let j: Vec<f64> = (0..=nmax).map(|n| jdown[n] * scale).collect();
    // y_n upward (stable)
    let mut y = vec![0.0f64; nmax + 1];
    y[0] = -x.cos() / x;
    if nmax >= 1 {
        y[1] = -x.cos() / (x * x) - x.sin() / x;
        for n in 1..nmax {
            y[n + 1] = (2.0 * n as f64 + 1.0) / x * y[n] - y[n - 1];
        }
    }
    // Wronskian sanity: j_n y_{n-1} - j_{n-1} y_n = 1/x^2
    for n in [1usize, nmax.max(1)] {
        let w = j[n] * y[n - 1] - j[n - 1] * y[n];
        let expect = 1.0 / (x * x);
        if ((w - expect) / expect).abs() > 1e-8 {
            return Err(Error::SeriesDivergence(format!(
                "Bessel Wronskian check failed at n = {n}, x = {x}: {w} vs {expect}"
            )));
        }
    }
    let psi: Vec<f64> = j.iter().map(|v| v * x).collect();
    let chi: Vec<f64> = y.iter().map(|v| v * x).collect();
    // d/dx [x z_n] = x z_{n-1} - n z_n
    let mut dpsi = vec![0.0f64; nmax + 1];
    let mut dchi = vec![0.0f64; nmax + 1];
    dpsi[0] = x.cos();
    dchi[0] = x.sin();
    for n in 1..=nmax {
        dpsi[n] = psi[n - 1] - n as f64 * j[n];
        dchi[n] = chi[n - 1] - n as f64 * y[n];
    }
    Ok(RadialTable {
        psi,
        dpsi,
        chi,
        dchi,
    })
}

/// Angular functions pi_n = P_n^1/sin(theta) and tau_n = dP_n^1/dtheta
/// for n = 1..=nmax.
pub fn angular_functions(cos_theta: f64, nmax: usize) -> (Vec<f64>, Vec<f64>) {
    let mut pi = vec![0.0f64; nmax + 1];
    let mut tau = vec![0.0f64; nmax + 1];
    if nmax >= 1 {
        pi[1] = 1.0;
        tau[1] = cos_theta;
    }
    for n in 2..=nmax {
        let nf = n as f64;
        pi[n] = ((2.0 * nf - 1.0) / (nf - 1.0)) * cos_theta * pi[n - 1] - nf / (nf - 1.0) * pi[n - 2];
        tau[n] = nf * cos_theta * pi[n] - (nf + 1.0) * pi[n - 1];
    }
    (pi, tau)
}

/// Sum a vector spherical-harmonic series in (r, theta, phi) components and
/// convert to Cartesian, conjugating into the solver convention.
fn finish(p: &SphericalPoint, er: C64, et: C64, ep: C64) -> [C64; 3] {
    let cart = crate::model::spherical_vector_to_cartesian(p, er, et, ep);
    [cart[0].conj(), cart[1].conj(), cart[2].conj()]
}

fn converged(term: f64, accum: f64, n: usize, ctrl: &SeriesControl) -> Option<bool> {
    if n >= 3 && term <= ctrl.tail_tolerance * accum.max(1e-300) {
        return Some(true);
    }
    if n >= ctrl.max_terms {
        return Some(false);
    }
    None
}

/// Scattered electric field of a plane wave `E0 e^{-ikz} x_hat` hitting a
/// perfectly conducting sphere of radius `a`, evaluated at a point with
/// r >= a. Cartesian components in the solver convention.
pub fn mie_pec_sphere(k0: f64, a: f64, e0: f64, p: &SphericalPoint, ctrl: &SeriesControl) -> Result<[C64; 3]> {
    if p.r < a * (1.0 - 1e-12) {
        return Err(Error::Probe(format!(
            "Mie evaluation point r = {} inside the conductor (a = {a})",
            p.r
        )));
    }
    let x = k0 * a;
    let rho = k0 * p.r;
    let nmax = ctrl.max_terms;
    let surf = radial_table(x, nmax)?;
    let rad = radial_table(rho, nmax)?;
    let (pi_n, tau_n) = angular_functions(p.theta.cos(), nmax);
    let sin_theta = p.theta.sin();
    let (sp, cp) = p.phi.sin_cos();

    let mut er = C64::new(0.0, 0.0);
    let mut et = C64::new(0.0, 0.0);
    let mut ep = C64::new(0.0, 0.0);
    let mut accum = 0.0f64;
    let mut ok = false;
    let mut e_n = C64::new(0.0, 1.5) * e0; // i^1 E0 (2*1+1)/(1*2) = 1.5 i E0
    for n in 1..=nmax {
        let nf = n as f64;
        let a_n = C64::new(surf.dpsi[n], 0.0) / surf.dxi(n);
        let b_n = C64::new(surf.psi[n], 0.0) / surf.xi(n);
        let h_n = rad.xi(n) / rho; // h1_n(rho)
        let dxr = rad.dxi(n) / rho; // [rho h]' / rho
        let dr = I * a_n * cp * nf * (nf + 1.0) * sin_theta * pi_n[n] * h_n / rho * e_n;
        let dt = (I * a_n * tau_n[n] * dxr - b_n * pi_n[n] * h_n) * cp * e_n;
        let dp = (-I * a_n * pi_n[n] * dxr + b_n * tau_n[n] * h_n) * sp * e_n;
        er += dr;
        et += dt;
        ep += dp;
        let term = dr.norm() + dt.norm() + dp.norm();
        accum = accum.max(er.norm() + et.norm() + ep.norm());
        if let Some(c) = converged(term, accum, n, ctrl) {
            ok = c;
            if c {
                break;
            }
        }
        // E_{n+1} = E_n * i (2n+3) n / ((n+1)(n+2)) / (2n+1) * (2n+1)... use the ratio directly
        e_n = e_n * I * ((2.0 * nf + 3.0) * nf) / ((nf + 2.0) * (2.0 * nf + 1.0));
    }
    if !ok {
        return Err(Error::SeriesDivergence(format!(
            "Mie series did not converge in {nmax} terms (k0 a = {x})"
        )));
    }
    Ok(finish(p, er, et, ep))
}

/// Plane-wave scattering off a dielectric sphere (radius `a`, relative
/// permittivity `eps1_r`, permeability `mu1_r` — only mu1_r = 1 is
/// supported). Returns the interior *total* field for r < a and the
/// exterior *scattered* field for r >= a.
pub fn stratton_dielectric_sphere(
    k0: f64,
    a: f64,
    eps1_r: f64,
    mu1_r: f64,
    e0: f64,
    p: &SphericalPoint,
    ctrl: &SeriesControl,
) -> Result<[C64; 3]> {
    if (mu1_r - 1.0).abs() > 1e-12 {
        return Err(Error::Config(
            "dielectric sphere series requires mu_r = 1 inside".into(),
        ));
    }
    if eps1_r <= 0.0 {
        return Err(Error::Config("relative permittivity must be positive".into()));
    }
    let m = eps1_r.sqrt();
    let x = k0 * a;
    let nmax = ctrl.max_terms;
    let ext = radial_table(x, nmax)?;
    let int = radial_table(m * x, nmax)?;
    let inside = p.r < a;
    let rho = if inside { m * k0 * p.r } else { k0 * p.r };
    let rad = if p.r == a {
        None
    } else {
        Some(radial_table(rho.max(1e-12), nmax)?)
    };
    let rad = match rad {
        Some(t) => t,
        None => radial_table(rho, nmax)?,
    };
    let (pi_n, tau_n) = angular_functions(p.theta.cos(), nmax);
    let sin_theta = p.theta.sin();
    let (sp, cp) = p.phi.sin_cos();

    let mut er = C64::new(0.0, 0.0);
    let mut et = C64::new(0.0, 0.0);
    let mut ep = C64::new(0.0, 0.0);
    let mut accum = 0.0f64;
    let mut ok = false;
    let mut e_n = C64::new(0.0, 1.5) * e0;
    let wronsk = I; // psi xi' - xi psi'
    for n in 1..=nmax {
        let nf = n as f64;
        let d_a = m * int.psi[n] * ext.dxi(n) - int.dpsi[n] * ext.xi(n);
        let d_b = int.psi[n] * ext.dxi(n) - m * int.dpsi[n] * ext.xi(n);
        let (dr, dt, dp);
        if inside {
            let c_n = m * wronsk / d_b;
            let d_n = m * wronsk / d_a;
            let j_n = rad.psi[n] / rho;
            let djr = rad.dpsi[n] / rho;
            dr = -I * d_n * cp * nf * (nf + 1.0) * sin_theta * pi_n[n] * j_n / rho * e_n;
            dt = (c_n * pi_n[n] * j_n - I * d_n * tau_n[n] * djr) * cp * e_n;
            dp = (-c_n * tau_n[n] * j_n + I * d_n * pi_n[n] * djr) * sp * e_n;
        } else {
            let a_n = (m * int.psi[n] * ext.dpsi[n] - ext.psi[n] * int.dpsi[n]) / d_a;
            let b_n = (int.psi[n] * ext.dpsi[n] - m * ext.psi[n] * int.dpsi[n]) / d_b;
            let h_n = rad.xi(n) / rho;
            let dxr = rad.dxi(n) / rho;
            dr = I * a_n * cp * nf * (nf + 1.0) * sin_theta * pi_n[n] * h_n / rho * e_n;
            dt = (I * a_n * tau_n[n] * dxr - b_n * pi_n[n] * h_n) * cp * e_n;
            dp = (-I * a_n * pi_n[n] * dxr + b_n * tau_n[n] * h_n) * sp * e_n;
        }
        er += dr;
        et += dt;
        ep += dp;
        let term = dr.norm() + dt.norm() + dp.norm();
        accum = accum.max(er.norm() + et.norm() + ep.norm());
        if let Some(c) = converged(term, accum, n, ctrl) {
            ok = c;
            if c {
                break;
            }
        }
        e_n = e_n * I * ((2.0 * nf + 3.0) * nf) / ((nf + 2.0) * (2.0 * nf + 1.0));
    }
    if !ok {
        return Err(Error::SeriesDivergence(format!(
            "dielectric series did not converge in {nmax} terms (ka = {x}, m = {m})"
        )));
    }
    Ok(finish(p, er, et, ep))
}

// ---------------------------------------------------------------------------
// conducting-box cavity closed forms
// ---------------------------------------------------------------------------

/// All closed-form cavity fields at (x, t).
#[derive(Debug, Clone, Copy)]
pub struct CavityFields {
    pub e: [f64; 3],
    pub h: [f64; 3],
    pub a: [f64; 3],
    pub j: [f64; 3],
    pub psi: f64,
    /// Analytic dj/dt, used by the transient load assembler.
    pub dj_dt: [f64; 3],
    /// Analytic dA/dt.
    pub da_dt: [f64; 3],
}

/// Forced fields inside the conducting pi^3 box.
pub fn cavity_fields(x: [f64; 3], t: f64, omega: f64, eps: f64, mu: f64) -> CavityFields {
    let (sx, cx) = x[0].sin_cos();
    let (sy, cy) = x[1].sin_cos();
    let (sz, cz) = x[2].sin_cos();
    let (swt, cwt) = (omega * t).sin_cos();
    let fm = cwt - swt; // cos - sin
    let fp = cwt + swt; // cos + sin
    let e = [2.0 * cx * sy * sz * fm, sx * cy * sz * (-fm), sx * sy * cz * (-fm)];
    let h = [
        0.0,
        -3.0 / (mu * omega) * cx * sy * cz * fp,
        3.0 / (mu * omega) * cx * cy * sz * fp,
    ];
    let a = [
        -2.0 / omega * cx * sy * sz * fp,
        1.0 / omega * sx * cy * sz * fp,
        1.0 / omega * sx * sy * cz * fp,
    ];
    // d/dt fp = omega fm, d/dt fm = -omega fp
    let da_dt = [-2.0 * cx * sy * sz * fm, sx * cy * sz * fm, sx * sy * cz * fm];
    let jc = (2.0 * eps * mu * omega * omega - 6.0) / (mu * omega);
    let jo = (3.0 - eps * mu * omega * omega) / (mu * omega);
    let j = [jc * cx * sy * sz * fp, jo * sx * cy * sz * fp, jo * sx * sy * cz * fp];
    let dj_dt = [
        jc * cx * sy * sz * omega * fm,
        jo * sx * cy * sz * omega * fm,
        jo * sx * sy * cz * omega * fm,
    ];
    CavityFields {
        e,
        h,
        a,
        j,
        psi: 0.0,
        dj_dt,
        da_dt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{add, norm, plane_wave_field, scale, sub, HarmonicWaveSpec, PhysicalConstants, Vec3};
    use std::f64::consts::PI;

    fn xorshift(seed: &mut u64) -> f64 {
        *seed ^= *seed << 13;
        *seed ^= *seed >> 7;
        *seed ^= *seed << 17;
        (*seed >> 11) as f64 / (1u64 << 53) as f64
    }

    fn incident(k0: f64) -> HarmonicWaveSpec {
        HarmonicWaveSpec::from_k0(
            k0,
            1.0,
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 0.0],
            &PhysicalConstants::codata(),
        )
        .unwrap()
    }

    fn tangential_parts(x: Vec3, e: [C64; 3]) -> [C64; 3] {
        // subtract the radial component
        let r = norm(x);
        let n = scale(x, 1.0 / r);
        let dotc = e[0] * n[0] + e[1] * n[1] + e[2] * n[2];
        [e[0] - dotc * n[0], e[1] - dotc * n[1], e[2] - dotc * n[2]]
    }

    #[test]
    fn bessel_wronskian_and_values() {
        // j_0, j_1 against closed forms
        let x = 2.7;
        let t = radial_table(x, 8).unwrap();
        let j0 = x.sin() / x;
        let j1 = x.sin() / (x * x) - x.cos() / x;
        assert!((t.psi[0] / x - j0).abs() < 1e-14);
        assert!((t.psi[1] / x - j1).abs() < 1e-13);
        // derivative identity by finite differences on psi_3
        let h = 1e-6;
        let tp = radial_table(x + h, 8).unwrap();
        let tm = radial_table(x - h, 8).unwrap();
        let fd = (tp.psi[3] - tm.psi[3]) / (2.0 * h);
        assert!((fd - t.dpsi[3]).abs() < 1e-8);
    }

    #[test]
    fn mie_pec_boundary_condition() {
        // tangential total field vanishes on the conductor
        let k0 = 1.0;
        let a = 1.0;
        let ctrl = SeriesControl::for_size(k0 * a);
        let wave = incident(k0);
        let mut seed = 11u64;
        for _ in 0..40 {
            let theta = PI * xorshift(&mut seed);
            let phi = 2.0 * PI * xorshift(&mut seed);
            let p = SphericalPoint::new(a, theta, phi);
            let x = p.to_cartesian();
            let es = mie_pec_sphere(k0, a, 1.0, &p, &ctrl).unwrap();
            let ei = plane_wave_field(&wave, x);
            let tot = [es[0] + ei[0], es[1] + ei[1], es[2] + ei[2]];
            let tang = tangential_parts(x, tot);
            let resid = (tang[0].norm_sqr() + tang[1].norm_sqr() + tang[2].norm_sqr()).sqrt();
            assert!(resid < 1e-8, "tangential residual {resid} at theta={theta}, phi={phi}");
        }
    }

    #[test]
    fn mie_phi_mirror_parity() {
        let k0 = 1.0;
        let ctrl = SeriesControl::for_size(1.0);
        let mut seed = 5u64;
        for _ in 0..20 {
            let r = 1.2 + 3.0 * xorshift(&mut seed);
            let theta = 0.2 + 2.7 * xorshift(&mut seed);
            let phi = 2.0 * PI * xorshift(&mut seed);
            let e1 = mie_pec_sphere(k0, 1.0, 1.0, &SphericalPoint::new(r, theta, phi), &ctrl).unwrap();
            let e2 = mie_pec_sphere(k0, 1.0, 1.0, &SphericalPoint::new(r, theta, 2.0 * PI - phi), &ctrl)
                .unwrap();
            assert!((e1[0] - e2[0]).norm() < 1e-10);
            assert!((e1[1] + e2[1]).norm() < 1e-10);
            assert!((e1[2] - e2[2]).norm() < 1e-10);
        }
    }

    #[test]
    fn mie_far_field_decay() {
        let k0 = 1.0;
        let ctrl = SeriesControl::for_size(1.0);
        let p1 = SphericalPoint::new(50.0, 1.1, 0.7);
        let p2 = SphericalPoint::new(100.0, 1.1, 0.7);
        let e1 = mie_pec_sphere(k0, 1.0, 1.0, &p1, &ctrl).unwrap();
        let e2 = mie_pec_sphere(k0, 1.0, 1.0, &p2, &ctrl).unwrap();
        let m1 = 50.0 * (e1[0].norm_sqr() + e1[1].norm_sqr() + e1[2].norm_sqr()).sqrt();
        let m2 = 100.0 * (e2[0].norm_sqr() + e2[1].norm_sqr() + e2[2].norm_sqr()).sqrt();
        assert!(((m1 - m2) / m2).abs() < 0.01, "|rE| 50: {m1}, 100: {m2}");
    }

    #[test]
    fn mie_rayleigh_limit_backscatter_ratio() {
        // electrically tiny PEC sphere: |E(forward)| / |E(backward)| -> 1/3
        let k0 = 0.01;
        let ctrl = SeriesControl::for_size(k0);
        let r = 5000.0;
        let fwd = mie_pec_sphere(k0, 1.0, 1.0, &SphericalPoint::new(r, 1e-6, 0.0), &ctrl).unwrap();
        let bwd =
            mie_pec_sphere(k0, 1.0, 1.0, &SphericalPoint::new(r, PI - 1e-6, 0.0), &ctrl).unwrap();
        let mf = (fwd[0].norm_sqr() + fwd[1].norm_sqr() + fwd[2].norm_sqr()).sqrt();
        let mb = (bwd[0].norm_sqr() + bwd[1].norm_sqr() + bwd[2].norm_sqr()).sqrt();
        assert!(((mf / mb) - 1.0 / 3.0).abs() < 0.01, "ratio {}", mf / mb);
    }

    #[test]
    fn mie_truncation_stable() {
        let k0 = 1.0;
        let p = SphericalPoint::new(1.25, PI / 4.0, 0.9);
        let c1 = SeriesControl::for_size(1.0);
        let c2 = SeriesControl {
            max_terms: 2 * c1.max_terms,
            tail_tolerance: 1e-15,
        };
        let e1 = mie_pec_sphere(k0, 1.0, 1.0, &p, &c1).unwrap();
        let e2 = mie_pec_sphere(k0, 1.0, 1.0, &p, &c2).unwrap();
        for c in 0..3 {
            assert!((e1[c] - e2[c]).norm() < 1e-10);
        }
    }

    #[test]
    fn stratton_zero_contrast_null() {
        let ctrl = SeriesControl::for_size(2.0);
        let mut seed = 77u64;
        for _ in 0..20 {
            let r = 0.3 + 3.0 * xorshift(&mut seed);
            let p = SphericalPoint::new(r, PI * xorshift(&mut seed), 2.0 * PI * xorshift(&mut seed));
            let e = stratton_dielectric_sphere(2.0, 1.0, 1.0, 1.0, 1.0, &p, &ctrl).unwrap();
            if r >= 1.0 {
                let mag = (e[0].norm_sqr() + e[1].norm_sqr() + e[2].norm_sqr()).sqrt();
                assert!(mag < 1e-10, "scattered magnitude {mag} at zero contrast");
            } else {
                // interior total must equal the incident wave
                let wave = incident(2.0);
                let ei = plane_wave_field(&wave, p.to_cartesian());
                for c in 0..3 {
                    assert!((e[c] - ei[c]).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn stratton_tangential_continuity() {
        let (k0, a, epsr): (f64, f64, f64) = (2.0, 1.0, 1.5);
        let ctrl = SeriesControl::for_size(k0 * a * epsr.sqrt());
        let wave = incident(k0);
        let mut seed = 31u64;
        for _ in 0..30 {
            let theta = 0.05 + (PI - 0.1) * xorshift(&mut seed);
            let phi = 2.0 * PI * xorshift(&mut seed);
            let pin = SphericalPoint::new(a * (1.0 - 1e-9), theta, phi);
            let pout = SphericalPoint::new(a * (1.0 + 1e-9), theta, phi);
            let e_int = stratton_dielectric_sphere(k0, a, epsr, 1.0, 1.0, &pin, &ctrl).unwrap();
            let e_sca = stratton_dielectric_sphere(k0, a, epsr, 1.0, 1.0, &pout, &ctrl).unwrap();
            let x = pout.to_cartesian();
            let ei = plane_wave_field(&wave, x);
            let e_tot_out = [e_sca[0] + ei[0], e_sca[1] + ei[1], e_sca[2] + ei[2]];
            let ti = tangential_parts(x, e_int);
            let to = tangential_parts(x, e_tot_out);
            let diff = ((ti[0] - to[0]).norm_sqr() + (ti[1] - to[1]).norm_sqr() + (ti[2] - to[2]).norm_sqr())
                .sqrt();
            assert!(diff < 1e-8, "tangential jump {diff}");
        }
    }

    #[test]
    fn stratton_paper_parameters_converge() {
        // ka = 8, eps_r = 1.5: probes at k0 r = 6.4, 9.6, 16
        let k0 = 8.0;
        let ctrl = SeriesControl::for_size(k0 * 1.5f64.sqrt());
        for kr in [6.4, 9.6, 16.0] {
            let p = SphericalPoint::new(kr / k0, PI / 3.0, PI / 6.0);
            let e = stratton_dielectric_sphere(k0, 1.0, 1.5, 1.0, 1.0, &p, &ctrl).unwrap();
            assert!(e.iter().all(|c| c.norm().is_finite()));
        }
    }

    #[test]
    fn cavity_field_identities() {
        let omega = 3.0e8;
        let k = PhysicalConstants::with_c(3.0e8);
        let (eps, mu) = (k.eps0, k.mu0);
        let mut seed = 13u64;
        for _ in 0..50 {
            let x = [PI * xorshift(&mut seed), PI * xorshift(&mut seed), PI * xorshift(&mut seed)];
            let t = 4e-8 * xorshift(&mut seed);
            let f = cavity_fields(x, t, omega, eps, mu);
            assert_eq!(f.h[0], 0.0);
            assert_eq!(f.psi, 0.0);
            // E = -dA/dt when psi = 0
            assert!(norm(sub(f.e, scale(f.da_dt, -1.0))) < 1e-12 * norm(f.e).max(1.0));
        }
        // tangential E on the walls vanishes
        for t in [0.0, 1.3e-8] {
            for wall in 0..3 {
                for &val in &[0.0, PI] {
                    let mut x = [1.1, 0.7, 2.0];
                    x[wall] = val;
                    let f = cavity_fields(x, t, omega, eps, mu);
                    for c in 0..3 {
                        if c != wall {
                            assert!(f.e[c].abs() < 1e-12, "wall {wall} comp {c}: {}", f.e[c]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn cavity_satisfies_gauss_law() {
        // div(eps E) = 0 by 4th-order central differences
        let omega = 3.0e8;
        let k = PhysicalConstants::with_c(3.0e8);
        let h = 1e-4;
        let mut seed = 17u64;
        for _ in 0..100 {
            let x = [
                0.2 + (PI - 0.4) * xorshift(&mut seed),
                0.2 + (PI - 0.4) * xorshift(&mut seed),
                0.2 + (PI - 0.4) * xorshift(&mut seed),
            ];
            let t = 4e-8 * xorshift(&mut seed);
            let mut div = 0.0;
            for c in 0..3 {
                let sample = |s: f64| {
                    let mut y = x;
                    y[c] += s;
                    cavity_fields(y, t, omega, k.eps0, k.mu0).e[c]
                };
                div += (-sample(2.0 * h) + 8.0 * sample(h) - 8.0 * sample(-h) + sample(-2.0 * h))
                    / (12.0 * h);
            }
            assert!(div.abs() < 1e-6, "divergence {div}");
        }
    }

    #[test]
    fn cavity_satisfies_wave_equation() {
        // eps d2E/dt2 + dj/dt + curl(curl E)/mu = 0, curl-curl by finite
        // differences (4th order), time derivatives analytic
        let omega = 3.0e8;
        let k = PhysicalConstants::with_c(3.0e8);
        let (eps, mu) = (k.eps0, k.mu0);
        let h = 1e-4;
        let e_at = |x: [f64; 3], t: f64| cavity_fields(x, t, omega, eps, mu).e;
        let mut seed = 23u64;
        for _ in 0..30 {
            let x = [
                0.3 + (PI - 0.6) * xorshift(&mut seed),
                0.3 + (PI - 0.6) * xorshift(&mut seed),
                0.3 + (PI - 0.6) * xorshift(&mut seed),
            ];
            let t = 4e-8 * xorshift(&mut seed);
            // curl curl E = grad(div E) - laplacian E; div E = 0 here, so
            // compute -laplacian by FD per component
            let mut curlcurl = [0.0; 3];
            for c in 0..3 {
                let mut lap = 0.0;
                for axis in 0..3 {
                    let sample = |s: f64| {
                        let mut y = x;
                        y[axis] += s;
                        e_at(y, t)[c]
                    };
                    lap += (-sample(2.0 * h) + 16.0 * sample(h) - 30.0 * sample(0.0)
                        + 16.0 * sample(-h)
                        - sample(-2.0 * h))
                        / (12.0 * h * h);
                }
                curlcurl[c] = -lap;
            }
            let f = cavity_fields(x, t, omega, eps, mu);
            // d2E/dt2 = -omega^2 E (harmonic time dependence)
            let scale_ref = (eps * omega * omega * norm(f.e)).max(norm(f.dj_dt));
            let resid = add(
                add(scale(f.e, -eps * omega * omega), f.dj_dt),
                scale(curlcurl, 1.0 / mu),
            );
            assert!(
                norm(resid) < 1e-5 * scale_ref,
                "wave-equation residual {} vs scale {scale_ref}",
                norm(resid)
            );
        }
    }
}
