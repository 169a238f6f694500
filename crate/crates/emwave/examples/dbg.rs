use emwave::assembly::{AssemblyOptions, Formulation, MaterialMap};
use emwave::harmonic::*;
use emwave::meshgen::*;
use emwave::model::*;
use emwave::oracles::{mie_pec_sphere, SeriesControl};
use std::f64::consts::PI;

fn main() {
    let consts = PhysicalConstants::codata();
    let k0 = 1.0;
    let wave = HarmonicWaveSpec::from_k0(k0, 1.0, [0.0, 0.0, 1.0], [1.0, 0.0, 0.0], &consts).unwrap();
    let ctrl = SeriesControl::for_size(k0);
    let mesh = gen_spherical_shell(1.0, 5.0, 8, 6, 12, AngularSpan::Full, BoundaryTag::Pec).unwrap();
    let problem = HarmonicProblem {
        mesh,
        materials: MaterialMap::vacuum(),
        consts,
        wave,
        formulation: Formulation::Conventional,
        drive: HarmonicDrive::PecScattering,
        assembly: AssemblyOptions::default(),
        solver: Default::default(),
    };
    let sol = solve_harmonic(&problem).unwrap();
    println!("r      |E_fem|  |E_mie|   err      err_conj  arg(Ex_fem) arg(Ex_mie)");
    for i in 0..10 {
        let r = 1.1 + (4.8 - 1.1) * i as f64 / 9.0;
        let p = SphericalPoint::new(r, PI / 4.0, 0.9);
        let e = sol.eval_e(p.to_cartesian()).unwrap();
        let em = mie_pec_sphere(k0, 1.0, 1.0, &p, &ctrl).unwrap();
        let mag = |v: &[C64; 3]| (v[0].norm_sqr() + v[1].norm_sqr() + v[2].norm_sqr()).sqrt();
        let err = ((e[0]-em[0]).norm_sqr() + (e[1]-em[1]).norm_sqr() + (e[2]-em[2]).norm_sqr()).sqrt();
        let errc = ((e[0]-em[0].conj()).norm_sqr() + (e[1]-em[1].conj()).norm_sqr() + (e[2]-em[2].conj()).norm_sqr()).sqrt();
        println!("{r:.2}   {:.4}   {:.4}   {err:.4}   {errc:.4}   {:+.3}    {:+.3}", mag(&e), mag(&em), e[0].arg(), em[0].arg());
    }
    // psi magnitude relative to A: is the scalar potential large?
    let mut psimax = 0.0f64;
    let mut amax = 0.0f64;
    for nid in 0..sol.mesh.nodes.len() {
        ps. let _ = nid;
    }
    let _ = (psimax, amax);
}
