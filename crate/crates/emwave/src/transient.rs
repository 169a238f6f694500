//! Implicit-midpoint time integration of the potential-formulation wave
//! system, with the Gauss-law row enforced at the half step:
//!
//! ```text
//!   M v. + C q. + D v + S a = F_A(t)
//!   C^T v + G q           = F_psi(t),     v = a., q = p.
//! ```
//!
//! One step solves for the increments (da, dp) of (A, psi):
//!
//! ```text
//!   [ 2/dt^2 (M + C) + D/dt + S/2 ]  A-rows
//!   [ 1/dt  (C^T + G)            ]  psi-rows    times (da, dp) = R
//! ```
//!
//! with R assembled from midpoint loads and the previous state. The scheme
//! is the midpoint rule on the reduced linear system, so for source-free
//! problems the discrete energy
//! `1/2 w^T (M + C + C^T + G) w + 1/2 u^T S u` is conserved to solver
//! precision; the ABC damping D only removes energy.

use crate::assembly::{AssemblyOptions, MaterialMap, TransientOps};
use crate::dofmap::{build_dof_map, ConstraintSpec, DofMap, NodeRotations, SlotState, TransientLift, PSI, SLOTS};
use crate::harmonic::{interp_slots, ElementLocator};
use crate::meshgen::{mirror_probe, Mesh};
use crate::model::{NeumannPulseSpec, PhysicalConstants, Vec3};
use crate::sparsela::{Factorization, MethodChoice, SolveOptions, SparseMatrix};
use crate::{Error, Result};

/// Time-dependent forcing of a transient case.
pub enum TransientSource {
    /// Source free.
    None,
    /// The conducting-box cavity current drive; `amplitude` scales the
    /// closed-form current (1 reproduces the benchmark).
    CavityCurrent { omega: f64, amplitude: f64 },
    /// Dielectric-contrast volume sources from the incident pulse.
    DielectricPulse,
}

/// State carried between steps: positions u = (A, psi) and velocities
/// w = (dA/dt, dpsi/dt), both over all node slots.
#[derive(Debug, Clone)]
pub struct TransientState {
    pub time: f64,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
}

/// What a probe records.
#[derive(Debug, Clone)]
pub enum ProbeQuantity {
    /// Scattered/total E components (3 series).
    E,
    /// dE/dt components from the integrator's midpoint accelerations.
    DEdt,
    /// E projected on a unit direction.
    EDot(Vec3),
}

#[derive(Debug, Clone)]
pub struct ProbeSpec {
    pub position: Vec3,
    pub quantity: ProbeQuantity,
    /// Add the analytic incident pulse to the solved (scattered) field.
    pub total_field: bool,
    pub label: String,
}

/// One recorded series; `values` has one entry per sample, each carrying up
/// to three components (unused ones zero).
#[derive(Debug, Clone)]
pub struct ProbeSeries {
    pub label: String,
    pub times: Vec<f64>,
    pub values: Vec<[f64; 3]>,
    pub components: usize,
}

/// Assembled, factorized transient stepping system.
pub struct TransientSystem {
    pub mesh: Mesh,
    pub materials: MaterialMap,
    pub consts: PhysicalConstants,
    pub dofmap: DofMap,
    lift_values: Vec<TransientLift>,
    ops: TransientOps,
    lhs_full: SparseMatrix<f64>,
    factor: Factorization<f64>,
    pub dt: f64,
    pub source: TransientSource,
    pub pulse: Option<NeumannPulseSpec>,
    quad_order: usize,
    locator: ElementLocator,
    rotations: NodeRotations,
}

fn is_psi_row(row: usize) -> bool {
    row % SLOTS == PSI
}

impl TransientSystem {
    /// Assemble operators, combine the step matrix for a fixed dt, reduce
    /// and factorize it.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mesh: &Mesh,
        materials: &MaterialMap,
        consts: &PhysicalConstants,
        constraints: &ConstraintSpec<TransientLift>,
        assembly: &AssemblyOptions,
        dt: f64,
        source: TransientSource,
        pulse: Option<NeumannPulseSpec>,
        rotations: NodeRotations,
    ) -> Result<Self> {
        if dt <= 0.0 {
            return Err(Error::Config("time step must be positive".into()));
        }
        let ops = crate::assembly::assemble_transient(mesh, materials, consts, assembly, &rotations)?;
        let (dofmap, lift_values) = build_dof_map(mesh, constraints);
        let nslots = mesh.nodes.len() * SLOTS;
        // combined step operator with row-dependent scaling
        let mut trips: Vec<(u32, u32, f64)> = Vec::new();
        let c1 = 2.0 / (dt * dt);
        let add = |trips: &mut Vec<(u32, u32, f64)>, m: &SparseMatrix<f64>, select_psi: Option<bool>, scale_a: f64, scale_psi: f64| {
            for r in 0..nslots {
                let psi_row = is_psi_row(r);
                if let Some(want) = select_psi {
                    if want != psi_row {
                        continue;
                    }
                }
                let s = if psi_row { scale_psi } else { scale_a };
                if s == 0.0 {
                    continue;
                }
                let (cols, vals) = m.row(r);
                for (c, v) in cols.iter().zip(vals) {
                    trips.push((r as u32, *c, v * s));
                }
            }
        };
        add(&mut trips, &ops.mass, None, c1, 0.0);
        add(&mut trips, &ops.coupling, None, c1, 1.0 / dt);
        add(&mut trips, &ops.damping, None, 1.0 / dt, 0.0);
        add(&mut trips, &ops.stiffness, None, 0.5, 0.0);
        add(&mut trips, &ops.gram, None, 0.0, 1.0 / dt);
        let lhs_full = SparseMatrix::from_triplets(nslots, &trips)?;
        // reduce to free unknowns and factorize once
        let zeros = vec![0.0; nslots];
        let zero_vals = vec![0.0; lift_values.len()];
        let (lhs_ff, _) = crate::assembly::reduce_system(&lhs_full, &zeros, &dofmap, &zero_vals)?;
        let mut sopts = SolveOptions::default();
        sopts.method = MethodChoice::Direct;
        sopts.coords = Some(dofmap.free_coords(mesh));
        // the factor is reused every step, so allow a larger work budget
        sopts.direct_flop_budget = 2.0e12;
        let factor = Factorization::new(&lhs_ff, &sopts)?;
        Ok(TransientSystem {
            mesh: mesh.clone(),
            materials: materials.clone(),
            consts: *consts,
            dofmap,
            lift_values,
            ops,
            lhs_full,
            factor,
            dt,
            source,
            pulse,
            quad_order: assembly.quad_order,
            locator: ElementLocator::new(mesh),
            rotations,
        })
    }

    /// Dirichlet value of constraint `ci` at time t.
    fn lift_value(&self, ci: usize, t: f64) -> f64 {
        match &self.lift_values[ci] {
            TransientLift::Zero => 0.0,
            TransientLift::PulseIntegral { coeff, position } => {
                let pulse = self.pulse.as_ref().expect("pulse lifts need a pulse spec");
                let u = pulse.retarded_time(t, *position);
                // subtract the (numerically negligible) t = 0 tail so the
                // lift starts from the initial condition A(0) = 0
                let u0 = pulse.retarded_time(0.0, *position);
                coeff * (pulse.waveform_antiderivative(u) - pulse.waveform_antiderivative(u0))
            }
        }
    }

    /// Assemble the full-slot load vector at time t (A rows and psi rows),
    /// rotated into the nodal frames.
    fn load(&self, t: f64) -> Result<Vec<f64>> {
        let mut l = self.load_cartesian(t)?;
        crate::assembly::rotate_load_to_frames(&mut l, &self.rotations);
        Ok(l)
    }

    fn load_cartesian(&self, t: f64) -> Result<Vec<f64>> {
        match &self.source {
            TransientSource::None => Ok(vec![0.0; self.mesh.nodes.len() * SLOTS]),
            TransientSource::CavityCurrent { omega, amplitude } => {
                let mut l = crate::assembly::transient_load_cavity(
                    &self.mesh,
                    *omega,
                    &self.consts,
                    self.quad_order,
                    t,
                )?;
                if *amplitude != 1.0 {
                    for v in l.iter_mut() {
                        *v *= amplitude;
                    }
                }
                Ok(l)
            }
            TransientSource::DielectricPulse => {
                let pulse = self
                    .pulse
                    .as_ref()
                    .ok_or_else(|| Error::Config("dielectric source needs a pulse".into()))?;
                crate::assembly::transient_load_dielectric(
                    &self.mesh,
                    &self.materials,
                    &self.consts,
                    pulse,
                    self.quad_order,
                    t,
                )
            }
        }
    }

    /// Initial state: the cavity starts from the closed-form potentials, the
    /// scattering cases from rest. The psi velocity is initialized
    /// consistently with the Gauss-law row, which the midpoint scheme then
    /// preserves (this is what makes the discrete energy drift-free).
    pub fn init_state(&self) -> Result<TransientState> {
        let nslots = self.mesh.nodes.len() * SLOTS;
        let mut u = vec![0.0; nslots];
        let mut w = vec![0.0; nslots];
        if let TransientSource::CavityCurrent { omega, amplitude } = self.source {
            for (nid, x) in self.mesh.nodes.iter().enumerate() {
                let f = crate::oracles::cavity_fields(*x, 0.0, omega, self.consts.eps0, self.consts.mu0);
                for c in 0..3 {
                    u[nid * SLOTS + c] = amplitude * f.a[c];
                    w[nid * SLOTS + c] = amplitude * f.da_dt[c];
                }
                // psi = 0 exactly
            }
            self.make_psi_rate_consistent(&mut w)?;
        }
        Ok(TransientState { time: 0.0, u, w })
    }

    /// Solve the Gauss row `G q = F_psi - C^T v` for the free psi rates.
    fn make_psi_rate_consistent(&self, w: &mut [f64]) -> Result<()> {
        let nslots = w.len();
        // rhs on psi rows: -(C^T v); the cavity has F_psi = 0
        let mut va = vec![0.0; nslots];
        for (i, v) in va.iter_mut().enumerate() {
            if !is_psi_row(i) {
                *v = w[i];
            }
        }
        let mut ct_v = vec![0.0; nslots];
        self.ops.coupling.matvec(&va, &mut ct_v);
        // collect the free psi subsystem
        let mut index = vec![u32::MAX; nslots];
        let mut order: Vec<u32> = Vec::new();
        for node in 0..self.dofmap.node_count() as u32 {
            if let SlotState::Free(_) = self.dofmap.state(node, PSI) {
                let row = node as usize * SLOTS + PSI;
                index[row] = order.len() as u32;
                order.push(row as u32);
            }
        }
        if order.is_empty() {
            return Ok(());
        }
        let mut trips = Vec::new();
        let mut rhs = vec![0.0; order.len()];
        for (k, &row) in order.iter().enumerate() {
            rhs[k] = -ct_v[row as usize];
            let (cols, vals) = self.ops.gram.row(row as usize);
            for (c, v) in cols.iter().zip(vals) {
                let ci = index[*c as usize];
                if ci != u32::MAX {
                    trips.push((k as u32, ci, *v));
                }
                // constrained psi rates are zero, nothing to fold
            }
        }
        let g = SparseMatrix::from_triplets(order.len(), &trips)?;
        let mut sopts = SolveOptions::default();
        sopts.method = MethodChoice::Direct;
        sopts.coords = Some(
            order
                .iter()
                .map(|&r| self.mesh.nodes[r as usize / SLOTS])
                .collect(),
        );
        let f = Factorization::new(&g, &sopts)?;
        let (q, _) = f.solve(&rhs)?;
        for (k, &row) in order.iter().enumerate() {
            w[row as usize] = q[k];
        }
        Ok(())
    }

    /// Advance one implicit-midpoint step.
    pub fn step(&self, state: &TransientState) -> Result<TransientState> {
        let dt = self.dt;
        let nslots = state.u.len();
        // trapezoidal load quadrature: the endpoint average has a smaller
        // forced-response error constant than the midpoint sample and leaves
        // the (source-free) energy balance untouched
        let f0 = self.load(state.time)?;
        let f1 = self.load(state.time + dt)?;
        let f_mid: Vec<f64> = f0.iter().zip(&f1).map(|(a, b)| 0.5 * (a + b)).collect();
        // R (A rows) = F_A + 2/dt (M v + C q) - S a; R (psi rows) = F_psi
        let mut mv = vec![0.0; nslots];
        self.ops.mass.matvec(&state.w, &mut mv);
        let mut cq = vec![0.0; nslots];
        self.ops.coupling.matvec(&state.w, &mut cq);
        let mut sa = vec![0.0; nslots];
        self.ops.stiffness.matvec(&state.u, &mut sa);
        let mut r = vec![0.0; nslots];
        for i in 0..nslots {
            r[i] = if is_psi_row(i) {
                f_mid[i]
            } else {
                f_mid[i] + 2.0 / dt * (mv[i] + cq[i]) - sa[i]
            };
        }
        // Dirichlet increments
        let mut delta_c = vec![0.0; nslots];
        let mut any_lift = false;
        for node in 0..self.dofmap.node_count() as u32 {
            for slot in 0..SLOTS {
                if let SlotState::Constrained(ci) = self.dofmap.state(node, slot) {
                    let g1 = self.lift_value(ci as usize, state.time + dt);
                    let g0 = self.lift_value(ci as usize, state.time);
                    let d = g1 - g0;
                    if d != 0.0 {
                        delta_c[node as usize * SLOTS + slot] = d;
                        any_lift = true;
                    }
                }
            }
        }
        if any_lift {
            let mut fold = vec![0.0; nslots];
            self.lhs_full.matvec(&delta_c, &mut fold);
            for i in 0..nslots {
                r[i] -= fold[i];
            }
        }
        let r_free = crate::assembly::restrict_vector(&self.dofmap, &r);
        let (df, _) = self.factor.solve(&r_free)?;
        // expand increments: free from the solve, constrained from the lifts
        let mut delta = delta_c;
        for node in 0..self.dofmap.node_count() as u32 {
            for slot in 0..SLOTS {
                if let SlotState::Free(fi) = self.dofmap.state(node, slot) {
                    delta[node as usize * SLOTS + slot] = df[fi as usize];
                }
            }
        }
        let mut u = state.u.clone();
        let mut w = state.w.clone();
        for i in 0..nslots {
            u[i] += delta[i];
            w[i] = 2.0 * delta[i] / dt - w[i];
        }
        Ok(TransientState {
            time: state.time + dt,
            u,
            w,
        })
    }

    /// Discrete energy `1/2 w^T (M + C + C^T + G) w + 1/2 u^T S u`, the
    /// invariant of the source-free midpoint iteration.
    pub fn discrete_energy(&self, state: &TransientState) -> f64 {
        let nslots = state.u.len();
        let mut tmp = vec![0.0; nslots];
        let mut e = 0.0;
        self.ops.mass.matvec(&state.w, &mut tmp);
        for i in 0..nslots {
            e += 0.5 * state.w[i] * tmp[i];
        }
        self.ops.coupling.matvec(&state.w, &mut tmp);
        for i in 0..nslots {
            e += 0.5 * state.w[i] * tmp[i];
        }
        self.ops.gram.matvec(&state.w, &mut tmp);
        for i in 0..nslots {
            e += 0.5 * state.w[i] * tmp[i];
        }
        self.ops.stiffness.matvec(&state.u, &mut tmp);
        for i in 0..nslots {
            e += 0.5 * state.u[i] * tmp[i];
        }
        e
    }

    /// E = -dA/dt - grad(dpsi/dt) at a probe point from the rate vector
    /// (given in the rotated basis; converted here).
    pub fn eval_e(&self, w: &[f64], x: Vec3, total_field: bool, t: f64) -> Result<[f64; 3]> {
        let (e_raw, signs) = self.locate_with_mirror(x)?;
        let wc = self.to_cartesian_copy(w);
        let (a, _, grad_psi) = interp_slots(&self.mesh, &wc, e_raw.0, e_raw.1);
        let mut e = [0.0; 3];
        for c in 0..3 {
            e[c] = signs[c] * (-(a[c]) - grad_psi[c]);
        }
        if total_field {
            if let Some(p) = &self.pulse {
                let (ei, _) = crate::model::neumann_pulse(p, t, x);
                for c in 0..3 {
                    e[c] += ei[c];
                }
            }
        }
        Ok(e)
    }

    fn to_cartesian_copy(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        self.rotations.to_cartesian(&mut out);
        out
    }

    fn locate_with_mirror(&self, x: Vec3) -> Result<((usize, Vec3), [f64; 3])> {
        if let Some(hit) = self.locator.locate(&self.mesh, x) {
            return Ok((hit, [1.0; 3]));
        }
        for p in &self.mesh.patches {
            let (xm, signs) = mirror_probe(x, p.axis, p.plane);
            if let Some(hit) = self.locator.locate(&self.mesh, xm) {
                return Ok((hit, signs));
            }
        }
        Err(Error::Probe(format!(
            "probe ({}, {}, {}) outside the solved domain",
            x[0], x[1], x[2]
        )))
    }

    /// Run from the initial state to `t_end`, sampling the probes.
    pub fn run(&self, t_end: f64, probes: &[ProbeSpec]) -> Result<Vec<ProbeSeries>> {
        let steps = if t_end <= 0.0 {
            0
        } else {
            (t_end / self.dt).round() as usize
        };
        let mut state = self.init_state()?;
        let mut series: Vec<ProbeSeries> = probes
            .iter()
            .map(|p| ProbeSeries {
                label: p.label.clone(),
                times: Vec::with_capacity(steps + 1),
                values: Vec::with_capacity(steps + 1),
                components: match p.quantity {
                    ProbeQuantity::E | ProbeQuantity::DEdt => 3,
                    ProbeQuantity::EDot(_) => 1,
                },
            })
            .collect();
        // E-type probes sample the state at step times; dE/dt probes sample
        // the midpoint accelerations between steps
        self.sample_state_probes(&state, probes, &mut series)?;
        for _ in 0..steps {
            let next = self.step(&state)?;
            // midpoint rates for dE/dt probes
            let t_mid = state.time + self.dt / 2.0;
            let mut dw = vec![0.0; state.w.len()];
            for i in 0..dw.len() {
                dw[i] = (next.w[i] - state.w[i]) / self.dt;
            }
            for (p, s) in probes.iter().zip(series.iter_mut()) {
                if let ProbeQuantity::DEdt = p.quantity {
                    // dE/dt = -dv/dt - grad dq/dt; add the incident rate for
                    // total-field probes
                    let ((e_idx, xi), signs) = self.locate_with_mirror(p.position)?;
                    let dwc = self.to_cartesian_copy(&dw);
                    let (a, _, g) = interp_slots(&self.mesh, &dwc, e_idx, xi);
                    let mut v = [0.0; 3];
                    for c in 0..3 {
                        v[c] = signs[c] * (-(a[c]) - g[c]);
                    }
                    if p.total_field {
                        if let Some(pl) = &self.pulse {
                            let (_, de) = crate::model::neumann_pulse(pl, t_mid, p.position);
                            for c in 0..3 {
                                v[c] += de[c];
                            }
                        }
                    }
                    s.times.push(t_mid);
                    s.values.push(v);
                }
            }
            state = next;
            self.sample_state_probes(&state, probes, &mut series)?;
        }
        Ok(series)
    }

    fn sample_state_probes(
        &self,
        state: &TransientState,
        probes: &[ProbeSpec],
        series: &mut [ProbeSeries],
    ) -> Result<()> {
        for (p, s) in probes.iter().zip(series.iter_mut()) {
            match &p.quantity {
                ProbeQuantity::E => {
                    let e = self.eval_e(&state.w, p.position, p.total_field, state.time)?;
                    s.times.push(state.time);
                    s.values.push(e);
                }
                ProbeQuantity::EDot(t_hat) => {
                    let e = self.eval_e(&state.w, p.position, p.total_field, state.time)?;
                    s.times.push(state.time);
                    s.values.push([crate::model::dot(e, *t_hat), 0.0, 0.0]);
                }
                ProbeQuantity::DEdt => {}
            }
        }
        Ok(())
    }
}

/// CSV rows `time_s,value` (one column per used component).
pub fn write_series_csv<W: std::io::Write>(s: &ProbeSeries, w: &mut W) -> std::io::Result<()> {
    match s.components {
        1 => writeln!(w, "time_s,value")?,
        _ => writeln!(w, "time_s,vx,vy,vz")?,
    }
    for (t, v) in s.times.iter().zip(&s.values) {
        if s.components == 1 {
            writeln!(w, "{t:.12e},{:.12e}", v[0])?;
        } else {
            writeln!(w, "{t:.12e},{:.12e},{:.12e},{:.12e}", v[0], v[1], v[2])?;
        }
    }
    Ok(())
}

/// A crude mesh CFL estimate `h_min / (c sqrt(3))` used to scale the
/// unconditional-stability checks.
pub fn cfl_estimate(mesh: &Mesh, consts: &PhysicalConstants) -> f64 {
    let mut hmin = f64::INFINITY;
    for el in &mesh.elements {
        // nearest distinct corner-node pair as the local h
        for i in 0..el.conn.len() {
            for j in (i + 1)..el.conn.len() {
                if el.conn[i] == el.conn[j] {
                    continue;
                }
                let d = crate::model::norm(crate::model::sub(
                    mesh.nodes[el.conn[i] as usize],
                    mesh.nodes[el.conn[j] as usize],
                ));
                if d > 0.0 {
                    hmin = hmin.min(d);
                }
            }
        }
    }
    hmin / (consts.c * 3.0f64.sqrt())
}
