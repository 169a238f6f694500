//! Time-harmonic driver: assemble, constrain, solve, and reconstruct the
//! electric field `E = A + grad(psi)` at arbitrary points, including
//! mirrored probes on symmetry-reduced meshes and the slow-amplitude
//! back-substitution `E = f (Abar + grad psibar + psibar grad(ln f) r_hat)`.

use crate::assembly::{
    assemble_harmonic, expand_solution, reduce_system, AssemblyOptions, Formulation, MaterialMap,
};
use crate::dofmap::{build_dof_map, ConstraintSpec, PSI, SLOTS};
use crate::elements::{map_physical, ElementKind};
use crate::meshgen::{mirror_probe, Mesh};
use crate::model::{norm, sub, HarmonicWaveSpec, PhysicalConstants, SphericalPoint, Vec3, C64, I};
use crate::sparsela::{self, LinearSolveReport, SolveOptions};
use crate::{Error, Result};

/// Bounding-box prefilter + Newton inverse isoparametric mapping.
pub struct ElementLocator {
    boxes: Vec<([f64; 3], [f64; 3])>,
    margin: f64,
}

impl ElementLocator {
    pub fn new(mesh: &Mesh) -> Self {
        let mut boxes = Vec::with_capacity(mesh.elements.len());
        let mut diam: f64 = 0.0;
        for el in &mesh.elements {
            let mut lo = [f64::INFINITY; 3];
            let mut hi = [f64::NEG_INFINITY; 3];
            for &nid in &el.conn {
                let p = mesh.nodes[nid as usize];
                for a in 0..3 {
                    lo[a] = lo[a].min(p[a]);
                    hi[a] = hi[a].max(p[a]);
                }
            }
            for a in 0..3 {
                diam = diam.max(hi[a] - lo[a]);
            }
            boxes.push((lo, hi));
        }
        ElementLocator {
            boxes,
            // curved quadratic faces can bulge slightly outside the hull
            margin: 0.05 * diam,
        }
    }

    /// Newton iteration for the reference coordinates of `x` in element `e`.
    fn invert(&self, mesh: &Mesh, e: usize, x: Vec3) -> Option<Vec3> {
        let el = &mesh.elements[e];
        let geom = mesh.element_geometry(e);
        let mut xi = match el.kind {
            ElementKind::B27 => [0.0, 0.0, 0.0],
            ElementKind::W18 => [1.0 / 3.0, 1.0 / 3.0, 0.0],
        };
        for _ in 0..40 {
            let m = map_physical(&geom, el.kind, xi, e).ok()?;
            let r = sub(m.x, x);
            if norm(r) < 1e-12 * (1.0 + norm(x)) {
                break;
            }
            // solve J d = r
            let j = m.jacobian;
            let det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
                - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
                + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
            if det.abs() < 1e-300 {
                return None;
            }
            let inv = [
                [
                    (j[1][1] * j[2][2] - j[1][2] * j[2][1]) / det,
                    (j[0][2] * j[2][1] - j[0][1] * j[2][2]) / det,
                    (j[0][1] * j[1][2] - j[0][2] * j[1][1]) / det,
                ],
                [
                    (j[1][2] * j[2][0] - j[1][0] * j[2][2]) / det,
                    (j[0][0] * j[2][2] - j[0][2] * j[2][0]) / det,
                    (j[0][2] * j[1][0] - j[0][0] * j[1][2]) / det,
                ],
                [
                    (j[1][0] * j[2][1] - j[1][1] * j[2][0]) / det,
                    (j[0][1] * j[2][0] - j[0][0] * j[2][1]) / det,
                    (j[0][0] * j[1][1] - j[0][1] * j[1][0]) / det,
                ],
            ];
            let d = [
                inv[0][0] * r[0] + inv[0][1] * r[1] + inv[0][2] * r[2],
                inv[1][0] * r[0] + inv[1][1] * r[1] + inv[1][2] * r[2],
                inv[2][0] * r[0] + inv[2][1] * r[1] + inv[2][2] * r[2],
            ];
            xi = [xi[0] - d[0], xi[1] - d[1], xi[2] - d[2]];
            if xi.iter().any(|v| v.abs() > 8.0) {
                return None; // diverged far outside
            }
        }
        let inside = match el.kind {
            ElementKind::B27 => xi.iter().all(|v| v.abs() <= 1.0 + 1e-8),
            ElementKind::W18 => {
                xi[0] >= -1e-8
                    && xi[1] >= -1e-8
                    && xi[0] + xi[1] <= 1.0 + 1e-8
                    && xi[2].abs() <= 1.0 + 1e-8
            }
        };
        if !inside {
            return None;
        }
        // confirm convergence
        let m = map_physical(&geom, el.kind, xi, e).ok()?;
        if norm(sub(m.x, x)) > 1e-8 * (1.0 + norm(x)) {
            return None;
        }
        Some(xi)
    }

    /// Find an element containing `x` together with its reference point.
    pub fn locate(&self, mesh: &Mesh, x: Vec3) -> Option<(usize, Vec3)> {
        for (e, (lo, hi)) in self.boxes.iter().enumerate() {
            let hit = (0..3).all(|a| x[a] >= lo[a] - self.margin && x[a] <= hi[a] + self.margin);
            if !hit {
                continue;
            }
            if let Some(xi) = self.invert(mesh, e, x) {
                return Some((e, xi));
            }
        }
        None
    }
}

/// Nodal interpolation of the 4-slot field and the psi gradient at a
/// located reference point, generic over real/complex storage.
pub fn interp_slots<S: sparsela::Scalar>(
    mesh: &Mesh,
    full: &[S],
    e: usize,
    xi: Vec3,
) -> ([S; 3], S, [S; 3]) {
    let el = &mesh.elements[e];
    let geom = mesh.element_geometry(e);
    let m = map_physical(&geom, el.kind, xi, e).expect("located point must map");
    let vals = &m.values;
    let mut a = [S::zero(); 3];
    let mut psi = S::zero();
    let mut grad_psi = [S::zero(); 3];
    for (i, &nid) in el.conn.iter().enumerate() {
        let base = nid as usize * SLOTS;
        for c in 0..3 {
            a[c] += full[base + c] * S::from_f64(vals[i]);
            grad_psi[c] += full[base + PSI] * S::from_f64(m.grads[i][c]);
        }
        psi += full[base + PSI] * S::from_f64(vals[i]);
    }
    (a, psi, grad_psi)
}

/// Scattering drive of a harmonic case.
pub enum HarmonicDrive {
    /// Scattered-field PEC lift from the incident plane wave.
    PecScattering,
    /// Dielectric contrast volume sources (no conductor).
    DielectricScattering,
}

/// Everything needed to run one harmonic solve.
pub struct HarmonicProblem {
    pub mesh: Mesh,
    pub materials: MaterialMap,
    pub consts: PhysicalConstants,
    pub wave: HarmonicWaveSpec,
    pub formulation: Formulation,
    pub drive: HarmonicDrive,
    pub assembly: AssemblyOptions,
    pub solver: SolveOptions,
}

/// Solved nodal potentials plus everything needed to evaluate fields.
pub struct HarmonicSolution {
    pub mesh: Mesh,
    pub full: Vec<C64>,
    pub formulation: Formulation,
    pub k0: f64,
    pub free_count: usize,
    pub report: LinearSolveReport,
    pub psi_gauge_pinned: bool,
    locator: ElementLocator,
}

/// Assemble, constrain, and solve a harmonic case.
pub fn solve_harmonic(problem: &HarmonicProblem) -> Result<HarmonicSolution> {
    let mesh = &problem.mesh;
    if matches!(problem.formulation, Formulation::Amplitude) {
        // amplitude unknowns blow up at the origin; exterior meshes only
        let near_origin = mesh.nodes.iter().any(|p| norm(*p) < 1e-12);
        if near_origin {
            return Err(Error::Config(
                "amplitude formulation is only valid for exterior domains".into(),
            ));
        }
    }
    // rotated nodal frames on curved conductors keep the normal A free
    let rotations = match problem.drive {
        HarmonicDrive::PecScattering => {
            crate::dofmap::surface_rotations(mesh, crate::meshgen::BoundaryTag::Pec)?
        }
        HarmonicDrive::DielectricScattering => crate::dofmap::NodeRotations::default(),
    };
    let k = assemble_harmonic(
        mesh,
        &problem.materials,
        &problem.consts,
        problem.wave.k0,
        problem.formulation,
        &problem.assembly,
        &rotations,
    )?;
    let mut load = vec![C64::new(0.0, 0.0); mesh.nodes.len() * SLOTS];
    let mut spec = ConstraintSpec::<C64>::new();
    match problem.drive {
        HarmonicDrive::PecScattering => {
            let wave = problem.wave;
            let form = problem.formulation;
            let k0 = problem.wave.k0;
            let lift = move |x: Vec3| {
                let mut e = crate::model::plane_wave_field(&wave, x);
                if matches!(form, Formulation::Amplitude) {
                    // prescribe the amplitude variable: Abar = A / f
                    let r = norm(x);
                    let f = C64::from_polar(1.0 / r, -k0 * r);
                    for c in e.iter_mut() {
                        *c = *c / f;
                    }
                }
                e
            };
            crate::dofmap::apply_pec_harmonic(
                &mut spec,
                mesh,
                crate::meshgen::BoundaryTag::Pec,
                crate::dofmap::PecMode::HarmonicScattering(&lift),
                &rotations,
            )?;
        }
        HarmonicDrive::DielectricScattering => {
            load = crate::assembly::scattering_source_dielectric(
                mesh,
                &problem.materials,
                &problem.consts,
                &problem.wave,
                problem.assembly.quad_order,
            )?;
        }
    }
    crate::assembly::rotate_load_to_frames(&mut load, &rotations);
    if !mesh.patches.is_empty() {
        crate::dofmap::apply_symmetry_patch(&mut spec, mesh, &rotations)?;
    }
    let pinned = crate::dofmap::ensure_psi_gauge(&mut spec, mesh)?;
    let (dm, values) = build_dof_map(mesh, &spec);
    let (kff, rhs) = reduce_system(&k, &load, &dm, &values)?;
    let mut solver = problem.solver.clone();
    if solver.coords.is_none() {
        solver.coords = Some(dm.free_coords(mesh));
    }
    let (xf, report) = sparsela::solve_with_options(&kff, &rhs, &solver)?;
    let mut full = expand_solution(&dm, &values, &xf);
    // back to Cartesian components for evaluation
    rotations.to_cartesian(&mut full);
    Ok(HarmonicSolution {
        mesh: mesh.clone(),
        full,
        formulation: problem.formulation,
        k0: problem.wave.k0,
        free_count: dm.free_count(),
        report,
        psi_gauge_pinned: pinned,
        locator: ElementLocator::new(mesh),
    })
}

impl HarmonicSolution {
    /// Scattered electric field at a point inside the (possibly
    /// symmetry-reduced) domain; mirrored probes pick up the parity signs.
    pub fn eval_e(&self, x: Vec3) -> Result<[C64; 3]> {
        if let Some((e, xi)) = self.locator.locate(&self.mesh, x) {
            return Ok(self.eval_at(e, xi));
        }
        // mirror through each recorded symmetry plane
        for p in &self.mesh.patches {
            let (xm, signs) = mirror_probe(x, p.axis, p.plane);
            if let Some((e, xi)) = self.locator.locate(&self.mesh, xm) {
                let em = self.eval_at(e, xi);
                return Ok([em[0] * signs[0], em[1] * signs[1], em[2] * signs[2]]);
            }
        }
        Err(Error::Probe(format!(
            "point ({}, {}, {}) is outside the solved domain",
            x[0], x[1], x[2]
        )))
    }

    fn eval_at(&self, e: usize, xi: Vec3) -> [C64; 3] {
        let (a, psi, grad_psi) = interp_slots(&self.mesh, &self.full, e, xi);
        match self.formulation {
            Formulation::Conventional => [
                a[0] + grad_psi[0],
                a[1] + grad_psi[1],
                a[2] + grad_psi[2],
            ],
            Formulation::Amplitude => {
                // E = f [ Abar + grad psibar + psibar * gl * r_hat ]
                let el = &self.mesh.elements[e];
                let geom = self.mesh.element_geometry(e);
                let m = map_physical(&geom, el.kind, xi, e).expect("mapped");
                let r = norm(m.x);
                let f = C64::from_polar(1.0 / r, -self.k0 * r);
                let gl = -(I * self.k0 + C64::new(1.0 / r, 0.0));
                let rh = [m.x[0] / r, m.x[1] / r, m.x[2] / r];
                [
                    f * (a[0] + grad_psi[0] + psi * gl * rh[0]),
                    f * (a[1] + grad_psi[1] + psi * gl * rh[1]),
                    f * (a[2] + grad_psi[2] + psi * gl * rh[2]),
                ]
            }
        }
    }
}

/// Which spherical coordinate a probe line sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepCoord {
    R,
    Theta,
    Phi,
}

impl SweepCoord {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "r" => Ok(SweepCoord::R),
            "theta" => Ok(SweepCoord::Theta),
            "phi" => Ok(SweepCoord::Phi),
            other => Err(Error::Format(format!("unknown sweep coordinate '{other}'"))),
        }
    }
}

/// A uniform sweep of one spherical coordinate at fixed others.
#[derive(Debug, Clone)]
pub struct SphericalSweep {
    pub swept: SweepCoord,
    pub start: f64,
    pub end: f64,
    pub samples: usize,
    /// Fixed r, theta, phi (the swept entry is ignored).
    pub fixed: SphericalPoint,
}

impl SphericalSweep {
    pub fn points(&self) -> Vec<(f64, Vec3)> {
        let n = self.samples.max(1);
        (0..n)
            .map(|i| {
                let s = if n == 1 {
                    self.start
                } else {
                    self.start + (self.end - self.start) * i as f64 / (n - 1) as f64
                };
                let mut p = self.fixed;
                match self.swept {
                    SweepCoord::R => p.r = s,
                    SweepCoord::Theta => p.theta = s,
                    SweepCoord::Phi => p.phi = s,
                }
                (s, p.to_cartesian())
            })
            .collect()
    }
}

/// Evaluate a sweep; rows of (coordinate, E components).
pub fn probe_line(sol: &HarmonicSolution, sweep: &SphericalSweep) -> Result<Vec<(f64, [C64; 3])>> {
    let mut out = Vec::with_capacity(sweep.samples);
    for (s, x) in sweep.points() {
        out.push((s, sol.eval_e(x)?));
    }
    Ok(out)
}

/// CSV rows `coord,ReEx,ImEx,ReEy,ImEy,ReEz,ImEz`.
pub fn write_sweep_csv<W: std::io::Write>(rows: &[(f64, [C64; 3])], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "coord,ReEx,ImEx,ReEy,ImEy,ReEz,ImEz")?;
    for (s, e) in rows {
        writeln!(
            w,
            "{s:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            e[0].re, e[0].im, e[1].re, e[1].im, e[2].re, e[2].im
        )?;
    }
    Ok(())
}

/// Read a sweep CSV written by [`write_sweep_csv`].
pub fn read_sweep_csv<R: std::io::BufRead>(r: R) -> Result<Vec<(f64, [C64; 3])>> {
    let mut rows = Vec::new();
    for (ln, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Format(format!("io: {e}")))?;
        if ln == 0 {
            if !line.starts_with("coord,") {
                return Err(Error::Format("missing sweep CSV header".into()));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("line {}: bad number '{t}'", ln + 1)))
            })
            .collect::<Result<_>>()?;
        if vals.len() != 7 {
            return Err(Error::Format(format!("line {}: expected 7 columns", ln + 1)));
        }
        rows.push((
            vals[0],
            [
                C64::new(vals[1], vals[2]),
                C64::new(vals[3], vals[4]),
                C64::new(vals[5], vals[6]),
            ],
        ));
    }
    Ok(rows)
}
