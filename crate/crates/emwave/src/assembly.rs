//! Element-level and global assembly of the harmonic and transient block
//! systems in the (A, psi) potential formulation.
//!
//! Weak form (harmonic, test functions W for A and phi for psi):
//!
//! ```text
//!   A-row:   (1/mu) (curl A, curl W) + alpha (1/mu) (div A, div W)
//!            - (k^2/mu) (A + grad psi, W) + i k/mu <A_t, W_t>_Gamma_inf
//!          = F_A
//!   psi-row: (eps (A + grad psi), grad phi) = F_psi
//! ```
//!
//! The amplitude (slow-wave) formulation substitutes `A = f Abar`,
//! `psi = f psibar` with `f = e^{-ikr}/r` for both trial and test functions;
//! every term then reduces to the conventional integrand with augmented
//! complex gradients `G_i + N_i grad(ln f)` and an extra `f^2` in the
//! quadrature weight, which is how it is implemented here.
//!
//! The transient operators follow the same spatial discretization:
//! `M qddot + D qdot + S q = F` on the A block with the eps-weighted
//! gradient coupling C into psi, and the Gauss-law row
//! `C^T a_dot + G psi_dot = F_psi`.

use crate::dofmap::{DofMap, SlotState, PSI, SLOTS};
use crate::elements::{ElementKind, ShapeTable};
use crate::meshgen::{face_is_triangle, face_ref_point, BoundaryTag, Mesh};
use crate::model::{Material, PhysicalConstants, Vec3, C64, I};
use crate::sparsela::{Scalar, SparseMatrix};
use crate::{Error, Result};
use std::collections::HashMap;

/// Formulation of the harmonic unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    Conventional,
    /// Unknowns are the slowly varying amplitudes; elements must not touch
    /// the origin.
    Amplitude,
}

/// Assembly parameters shared by the harmonic and transient paths.
#[derive(Debug, Clone)]
pub struct AssemblyOptions {
    pub quad_order: usize,
    /// Coulomb-gauge regularization weight (alpha).
    pub regularization: f64,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions {
            quad_order: 3,
            regularization: 1.0,
        }
    }
}

/// Materials by mesh region id (region 0 is the background).
#[derive(Debug, Clone)]
pub struct MaterialMap {
    pub by_region: Vec<Material>,
}

impl MaterialMap {
    pub fn vacuum() -> Self {
        MaterialMap {
            by_region: vec![Material::VACUUM],
        }
    }

    pub fn with_region1(inner: Material) -> Self {
        MaterialMap {
            by_region: vec![Material::VACUUM, inner],
        }
    }

    pub fn get(&self, region: u32) -> Material {
        self.by_region
            .get(region as usize)
            .copied()
            .unwrap_or(Material::VACUUM)
    }
}

#[inline]
fn slot_index(node_local: usize, slot: usize) -> usize {
    node_local * SLOTS + slot
}

/// Effective shape data at one quadrature point: values, (possibly
/// amplitude-augmented) gradients, and the quadrature weight including the
/// `f^2` factor in amplitude mode.
struct EffShapes {
    vals: Vec<f64>,
    grads: Vec<[C64; 3]>,
    weight: C64,
}

fn effective_shapes(
    vals: &[f64],
    grads: &[Vec3],
    x: Vec3,
    w: f64,
    formulation: Formulation,
    k_medium: f64,
) -> Result<EffShapes> {
    match formulation {
        Formulation::Conventional => Ok(EffShapes {
            vals: vals.to_vec(),
            grads: grads
                .iter()
                .map(|g| [C64::new(g[0], 0.0), C64::new(g[1], 0.0), C64::new(g[2], 0.0)])
                .collect(),
            weight: C64::new(w, 0.0),
        }),
        Formulation::Amplitude => {
            let r = crate::model::norm(x);
            if r < 1e-12 {
                return Err(Error::Config(
                    "amplitude formulation requires elements away from the origin".into(),
                ));
            }
            // grad ln f = -(ik + 1/r) r_hat for f = e^{-ikr}/r
            let gl = -(I * k_medium + C64::new(1.0 / r, 0.0));
            let rh = [x[0] / r, x[1] / r, x[2] / r];
            let f = C64::from_polar(1.0 / r, -k_medium * r);
            let grads = vals
                .iter()
                .zip(grads)
                .map(|(n, g)| {
                    [
                        C64::new(g[0], 0.0) + gl * (n * rh[0]),
                        C64::new(g[1], 0.0) + gl * (n * rh[1]),
                        C64::new(g[2], 0.0) + gl * (n * rh[2]),
                    ]
                })
                .collect();
            Ok(EffShapes {
                vals: vals.to_vec(),
                grads,
                weight: f * f * w,
            })
        }
    }
}

/// Dense element matrix for the harmonic weak form (4 n_nodes square).
pub fn element_harmonic(
    mesh: &Mesh,
    element: usize,
    material: Material,
    consts: &PhysicalConstants,
    k0: f64,
    alpha: f64,
    formulation: Formulation,
    table: &ShapeTable,
) -> Result<Vec<C64>> {
    let el = &mesh.elements[element];
    let n = el.kind.node_count();
    let dim = n * SLOTS;
    let mut ke = vec![C64::new(0.0, 0.0); dim * dim];
    let geom = mesh.element_geometry(element);
    let inv_mu = 1.0 / material.mu(consts);
    let eps = material.eps(consts);
    let k = material.wavenumber(k0);
    let k2_mu = k * k * inv_mu;
    for qp in 0..table.rule.points.len() {
        let (mp, w) = table.map_at(&geom, qp, element)?;
        let es = effective_shapes(&mp.values, &mp.grads, mp.x, w, formulation, k)?;
        for i in 0..n {
            let gi = es.grads[i];
            let vi = es.vals[i];
            for j in 0..n {
                let gj = es.grads[j];
                let vj = es.vals[j];
                let gg = gi[0] * gj[0] + gi[1] * gj[1] + gi[2] * gj[2];
                let vv = vi * vj;
                // A-A block: curl-curl + alpha grad-div - k^2 mass
                for a in 0..3 {
                    for b in 0..3 {
                        // (grad Ni x e_a).(grad Nj x e_b)
                        //   = delta_ab (gi.gj) - gi[b] gj[a]
                        let mut v = inv_mu * (alpha * gi[a] * gj[b] - gi[b] * gj[a]);
                        if a == b {
                            v += inv_mu * gg - k2_mu * vv;
                        }
                        ke[slot_index(i, a) * dim + slot_index(j, b)] += v * es.weight;
                    }
                    // A-psi: -(k^2/mu) (W, grad psi)
                    ke[slot_index(i, a) * dim + slot_index(j, PSI)] +=
                        -k2_mu * vi * gj[a] * es.weight;
                    // psi-A: eps (grad phi, A)
                    ke[slot_index(i, PSI) * dim + slot_index(j, a)] +=
                        eps * gi[a] * vj * es.weight;
                }
                // psi-psi: eps (grad phi, grad psi)
                ke[slot_index(i, PSI) * dim + slot_index(j, PSI)] += eps * gg * es.weight;
            }
        }
    }
    Ok(ke)
}

/// Surface integration data at one face quadrature point.
pub struct FaceQp {
    pub x: Vec3,
    pub normal: Vec3,
    pub area_weight: f64,
    pub vals: Vec<f64>,
}

/// Iterate the quadrature points of an element face with positions, unit
/// normals (orientation unspecified) and surface weights.
pub fn face_quadrature(
    mesh: &Mesh,
    element: usize,
    face: u8,
    order: usize,
) -> Result<Vec<FaceQp>> {
    let el = &mesh.elements[element];
    let geom = mesh.element_geometry(element);
    let tri = face_is_triangle(el.kind, face);
    let (pts, wts): (Vec<(f64, f64)>, Vec<f64>) = if tri {
        crate::elements::tri_face_rule(order)?
    } else {
        crate::elements::quad_face_rule(order)?
    };
    // reference-space tangent directions of the face parametrization
    let eps_fd = 1e-6;
    let mut out = Vec::with_capacity(pts.len());
    for ((u, v), w) in pts.iter().zip(&wts) {
        let xi = face_ref_point(el.kind, face, *u, *v);
        let m = crate::elements::map_physical(&geom, el.kind, xi, element)?;
        // d xi / du and d xi / dv by the (linear) face parametrization
        let xu = face_ref_point(el.kind, face, *u + eps_fd, *v);
        let xv = face_ref_point(el.kind, face, *u, *v + eps_fd);
        let du = [
            (xu[0] - xi[0]) / eps_fd,
            (xu[1] - xi[1]) / eps_fd,
            (xu[2] - xi[2]) / eps_fd,
        ];
        let dv = [
            (xv[0] - xi[0]) / eps_fd,
            (xv[1] - xi[1]) / eps_fd,
            (xv[2] - xi[2]) / eps_fd,
        ];
        let jmul = |d: Vec3| -> Vec3 {
            [
                m.jacobian[0][0] * d[0] + m.jacobian[0][1] * d[1] + m.jacobian[0][2] * d[2],
                m.jacobian[1][0] * d[0] + m.jacobian[1][1] * d[1] + m.jacobian[1][2] * d[2],
                m.jacobian[2][0] * d[0] + m.jacobian[2][1] * d[1] + m.jacobian[2][2] * d[2],
            ]
        };
        let tu = jmul(du);
        let tv = jmul(dv);
        let nvec = crate::model::cross(tu, tv);
        let mag = crate::model::norm(nvec);
        if mag <= 0.0 {
            return Err(Error::DegenerateElement {
                element,
                detail: format!("degenerate face {face} at qp ({u}, {v})"),
            });
        }
        out.push(FaceQp {
            x: m.x,
            normal: crate::model::scale(nvec, 1.0 / mag),
            area_weight: mag * w,
            vals: m.values,
        });
    }
    Ok(out)
}

/// First-order absorbing boundary term on one face:
/// `+ i k/mu <(n x W), (n x A)>` restricted to the A block.
pub fn element_abc(
    mesh: &Mesh,
    element: usize,
    face: u8,
    material: Material,
    consts: &PhysicalConstants,
    k0: f64,
    formulation: Formulation,
    order: usize,
) -> Result<Vec<C64>> {
    let el = &mesh.elements[element];
    let n = el.kind.node_count();
    let dim = n * SLOTS;
    let mut ke = vec![C64::new(0.0, 0.0); dim * dim];
    let k = material.wavenumber(k0);
    let coeff = I * (k / material.mu(consts));
    for fq in face_quadrature(mesh, element, face, order)? {
        let weight = match formulation {
            Formulation::Conventional => C64::new(fq.area_weight, 0.0),
            Formulation::Amplitude => {
                let r = crate::model::norm(fq.x);
                let f = C64::from_polar(1.0 / r, -k * r);
                f * f * fq.area_weight
            }
        };
        let nn = fq.normal;
        for i in 0..n {
            for j in 0..n {
                let vv = fq.vals[i] * fq.vals[j];
                for a in 0..3 {
                    for b in 0..3 {
                        // (n x e_a).(n x e_b) = delta_ab - n_a n_b
                        let tang = if a == b { 1.0 - nn[a] * nn[b] } else { -nn[a] * nn[b] };
                        if tang != 0.0 {
                            ke[slot_index(i, a) * dim + slot_index(j, b)] +=
                                coeff * (vv * tang) * weight;
                        }
                    }
                }
            }
        }
    }
    Ok(ke)
}

/// Transient damping face term `(1/(mu c)) <(n x W), (n x dA/dt)>`.
pub fn element_abc_transient(
    mesh: &Mesh,
    element: usize,
    face: u8,
    material: Material,
    consts: &PhysicalConstants,
    order: usize,
) -> Result<Vec<f64>> {
    let el = &mesh.elements[element];
    let n = el.kind.node_count();
    let dim = n * SLOTS;
    let mut ke = vec![0.0f64; dim * dim];
    let c_medium = consts.c / (material.mu_r * material.eps_r).sqrt();
    let coeff = 1.0 / (material.mu(consts) * c_medium);
    for fq in face_quadrature(mesh, element, face, order)? {
        let nn = fq.normal;
        for i in 0..n {
            for j in 0..n {
                let vv = fq.vals[i] * fq.vals[j] * fq.area_weight;
                for a in 0..3 {
                    for b in 0..3 {
                        let tang = if a == b { 1.0 - nn[a] * nn[b] } else { -nn[a] * nn[b] };
                        if tang != 0.0 {
                            ke[slot_index(i, a) * dim + slot_index(j, b)] += coeff * vv * tang;
                        }
                    }
                }
            }
        }
    }
    Ok(ke)
}

/// Dense transient element operators (all real).
pub struct TransientElement {
    /// eps vector mass on the A block.
    pub mass: Vec<f64>,
    /// eps (W, grad psi) coupling, A rows x psi columns.
    pub coupling: Vec<f64>,
    /// curl-curl + alpha grad-div stiffness on the A block.
    pub stiffness: Vec<f64>,
    /// eps (grad phi, grad psi) gram on the psi block.
    pub gram: Vec<f64>,
}

pub fn element_transient(
    mesh: &Mesh,
    element: usize,
    material: Material,
    consts: &PhysicalConstants,
    alpha: f64,
    table: &ShapeTable,
) -> Result<TransientElement> {
    let el = &mesh.elements[element];
    let n = el.kind.node_count();
    let dim = n * SLOTS;
    let mut mass = vec![0.0f64; dim * dim];
    let mut coupling = vec![0.0f64; dim * dim];
    let mut stiffness = vec![0.0f64; dim * dim];
    let mut gram = vec![0.0f64; dim * dim];
    let geom = mesh.element_geometry(element);
    let inv_mu = 1.0 / material.mu(consts);
    let eps = material.eps(consts);
    for qp in 0..table.rule.points.len() {
        let (mp, w) = table.map_at(&geom, qp, element)?;
        for i in 0..n {
            let gi = mp.grads[i];
            let vi = mp.values[i];
            for j in 0..n {
                let gj = mp.grads[j];
                let vj = mp.values[j];
                let gg = gi[0] * gj[0] + gi[1] * gj[1] + gi[2] * gj[2];
                for a in 0..3 {
                    for b in 0..3 {
                        let mut v = inv_mu * (alpha * gi[a] * gj[b] - gi[b] * gj[a]);
                        if a == b {
                            v += inv_mu * gg;
                        }
                        stiffness[slot_index(i, a) * dim + slot_index(j, b)] += v * w;
                    }
                    mass[slot_index(i, a) * dim + slot_index(j, a)] += eps * vi * vj * w;
                    coupling[slot_index(i, a) * dim + slot_index(j, PSI)] += eps * vi * gj[a] * w;
                    // psi-row coupling is the transpose block (eps grad phi . W)
                    coupling[slot_index(j, PSI) * dim + slot_index(i, a)] += eps * vi * gj[a] * w;
                }
                gram[slot_index(i, PSI) * dim + slot_index(j, PSI)] += eps * gg * w;
            }
        }
    }
    Ok(TransientElement {
        mass,
        coupling,
        stiffness,
        gram,
    })
}

fn shape_tables(order: usize) -> Result<HashMap<ElementKind, ShapeTable>> {
    let mut m = HashMap::new();
    m.insert(ElementKind::B27, ShapeTable::new(ElementKind::B27, order)?);
    m.insert(ElementKind::W18, ShapeTable::new(ElementKind::W18, order)?);
    Ok(m)
}

/// Transform the A-blocks of a dense element matrix into the rotated nodal
/// frames: K -> Q K Q^T with Q block-diagonal over the rotated nodes.
pub fn rotate_element_matrix<S: Scalar>(
    ke: &mut [S],
    conn: &[u32],
    rotations: &crate::dofmap::NodeRotations,
) {
    if rotations.is_empty() {
        return;
    }
    let n = conn.len();
    let dim = n * SLOTS;
    for (i, nid) in conn.iter().enumerate() {
        let Some(q) = rotations.frames.get(nid) else {
            continue;
        };
        // row transform
        for col in 0..dim {
            let mut t = [S::zero(); 3];
            for sp in 0..3 {
                for s in 0..3 {
                    t[sp] += S::from_f64(q[sp][s]) * ke[(i * SLOTS + s) * dim + col];
                }
            }
            for sp in 0..3 {
                ke[(i * SLOTS + sp) * dim + col] = t[sp];
            }
        }
        // column transform
        for row in 0..dim {
            let mut t = [S::zero(); 3];
            for sp in 0..3 {
                for s in 0..3 {
                    t[sp] += ke[row * dim + (i * SLOTS + s)] * S::from_f64(q[sp][s]);
                }
            }
            for sp in 0..3 {
                ke[row * dim + (i * SLOTS + sp)] = t[sp];
            }
        }
    }
}

/// Transform a full-slot Cartesian load vector into the rotated frames.
pub fn rotate_load_to_frames<S: Scalar>(load: &mut [S], rotations: &crate::dofmap::NodeRotations) {
    for (&node, q) in &rotations.frames {
        let base = node as usize * SLOTS;
        let v = [load[base], load[base + 1], load[base + 2]];
        for sp in 0..3 {
            load[base + sp] = S::from_f64(q[sp][0]) * v[0]
                + S::from_f64(q[sp][1]) * v[1]
                + S::from_f64(q[sp][2]) * v[2];
        }
    }
}

/// Scatter a dense element matrix into the global triplet list over all
/// 4 N node slots (no elimination at this stage).
fn scatter<S: Scalar>(
    trips: &mut Vec<(u32, u32, S)>,
    conn: &[u32],
    ke: &[S],
    zero: S,
) {
    let n = conn.len();
    let dim = n * SLOTS;
    for i in 0..n {
        for si in 0..SLOTS {
            let gi = conn[i] * SLOTS as u32 + si as u32;
            for j in 0..n {
                for sj in 0..SLOTS {
                    let v = ke[(i * SLOTS + si) * dim + (j * SLOTS + sj)];
                    if v != zero {
                        let gj = conn[j] * SLOTS as u32 + sj as u32;
                        trips.push((gi, gj, v));
                    }
                }
            }
        }
    }
}

/// Assemble the full-slot harmonic system matrix (volume + ABC terms) over
/// all 4 N slots; Dirichlet elimination happens in [`reduce_system`].
pub fn assemble_harmonic(
    mesh: &Mesh,
    materials: &MaterialMap,
    consts: &PhysicalConstants,
    k0: f64,
    formulation: Formulation,
    opts: &AssemblyOptions,
    rotations: &crate::dofmap::NodeRotations,
) -> Result<SparseMatrix<C64>> {
    let tables = shape_tables(opts.quad_order)?;
    let mut trips: Vec<(u32, u32, C64)> = Vec::new();
    let zero = C64::new(0.0, 0.0);
    for (e, el) in mesh.elements.iter().enumerate() {
        let mat = materials.get(el.region);
        let mut ke = element_harmonic(
            mesh,
            e,
            mat,
            consts,
            k0,
            opts.regularization,
            formulation,
            &tables[&el.kind],
        )?;
        rotate_element_matrix(&mut ke, &el.conn, rotations);
        scatter(&mut trips, &el.conn, &ke, zero);
    }
    for bf in &mesh.boundary_facets {
        if bf.tag != BoundaryTag::Abc {
            continue;
        }
        let el = &mesh.elements[bf.element as usize];
        let mat = materials.get(el.region);
        let mut ke = element_abc(
            mesh,
            bf.element as usize,
            bf.face,
            mat,
            consts,
            k0,
            formulation,
            opts.quad_order,
        )?;
        rotate_element_matrix(&mut ke, &el.conn, rotations);
        scatter(&mut trips, &el.conn, &ke, zero);
    }
    SparseMatrix::from_triplets(mesh.nodes.len() * SLOTS, &trips)
}

/// Global transient operators over all slots.
pub struct TransientOps {
    pub mass: SparseMatrix<f64>,
    pub coupling: SparseMatrix<f64>,
    pub stiffness: SparseMatrix<f64>,
    pub gram: SparseMatrix<f64>,
    pub damping: SparseMatrix<f64>,
}

pub fn assemble_transient(
    mesh: &Mesh,
    materials: &MaterialMap,
    consts: &PhysicalConstants,
    opts: &AssemblyOptions,
    rotations: &crate::dofmap::NodeRotations,
) -> Result<TransientOps> {
    let tables = shape_tables(opts.quad_order)?;
    let nslots = mesh.nodes.len() * SLOTS;
    let mut tm = Vec::new();
    let mut tc = Vec::new();
    let mut ts = Vec::new();
    let mut tg = Vec::new();
    let mut td = Vec::new();
    for (e, el) in mesh.elements.iter().enumerate() {
        let mat = materials.get(el.region);
        let mut te =
            element_transient(mesh, e, mat, consts, opts.regularization, &tables[&el.kind])?;
        rotate_element_matrix(&mut te.mass, &el.conn, rotations);
        rotate_element_matrix(&mut te.coupling, &el.conn, rotations);
        rotate_element_matrix(&mut te.stiffness, &el.conn, rotations);
        rotate_element_matrix(&mut te.gram, &el.conn, rotations);
        scatter(&mut tm, &el.conn, &te.mass, 0.0);
        scatter(&mut tc, &el.conn, &te.coupling, 0.0);
        scatter(&mut ts, &el.conn, &te.stiffness, 0.0);
        scatter(&mut tg, &el.conn, &te.gram, 0.0);
    }
    for bf in &mesh.boundary_facets {
        if bf.tag != BoundaryTag::Abc {
            continue;
        }
        let el = &mesh.elements[bf.element as usize];
        let mat = materials.get(el.region);
        let mut ke = element_abc_transient(
            mesh,
            bf.element as usize,
            bf.face,
            mat,
            consts,
            opts.quad_order,
        )?;
        rotate_element_matrix(&mut ke, &el.conn, rotations);
        scatter(&mut td, &el.conn, &ke, 0.0);
    }
    Ok(TransientOps {
        mass: SparseMatrix::from_triplets(nslots, &tm)?,
        coupling: SparseMatrix::from_triplets(nslots, &tc)?,
        stiffness: SparseMatrix::from_triplets(nslots, &ts)?,
        gram: SparseMatrix::from_triplets(nslots, &tg)?,
        damping: SparseMatrix::from_triplets(nslots, &td)?,
    })
}

/// Volume load assembled against the shape values: slot s of node i gains
/// `int N_i f_s dV` (amplitude mode folds in the f^2 weight and is only
/// meaningful when the load itself was derived in amplitude variables).
pub fn volume_load<S: Scalar>(
    mesh: &Mesh,
    materials: &MaterialMap,
    order: usize,
    f: impl Fn(u32, Vec3) -> [S; 4],
) -> Result<Vec<S>> {
    let tables = shape_tables(order)?;
    let _ = materials;
    let mut load = vec![S::zero(); mesh.nodes.len() * SLOTS];
    for (e, el) in mesh.elements.iter().enumerate() {
        let geom = mesh.element_geometry(e);
        let table = &tables[&el.kind];
        let n = el.kind.node_count();
        for qp in 0..table.rule.points.len() {
            let (mp, w) = table.map_at(&geom, qp, e)?;
            let fv = f(el.region, mp.x);
            for i in 0..n {
                for s in 0..SLOTS {
                    let idx = el.conn[i] as usize * SLOTS + s;
                    load[idx] += fv[s] * S::from_f64(mp.values[i] * w);
                }
            }
        }
    }
    Ok(load)
}

/// Load assembled against the psi test-function gradients: the psi slot of
/// node i gains `int grad(phi_i) . g dV`.
pub fn gradient_load<S: Scalar>(
    mesh: &Mesh,
    order: usize,
    g: impl Fn(u32, Vec3) -> [S; 3],
) -> Result<Vec<S>> {
    let tables = shape_tables(order)?;
    let mut load = vec![S::zero(); mesh.nodes.len() * SLOTS];
    for (e, el) in mesh.elements.iter().enumerate() {
        let geom = mesh.element_geometry(e);
        let table = &tables[&el.kind];
        let n = el.kind.node_count();
        for qp in 0..table.rule.points.len() {
            let (mp, w) = table.map_at(&geom, qp, e)?;
            let gv = g(el.region, mp.x);
            for i in 0..n {
                let idx = el.conn[i] as usize * SLOTS + PSI;
                let dot = gv[0] * S::from_f64(mp.grads[i][0])
                    + gv[1] * S::from_f64(mp.grads[i][1])
                    + gv[2] * S::from_f64(mp.grads[i][2]);
                load[idx] += dot * S::from_f64(w);
            }
        }
    }
    Ok(load)
}

/// Scattered-field volume sources for a dielectric obstacle hit by the
/// incident plane wave: the A rows gain `(k^2 - k0^2)/mu (W, E_inc)` and the
/// psi rows gain `-( (eps - eps0) grad phi, E_inc)`, both supported on
/// regions with eps_r != 1. Materials with mu_r != 1 are rejected.
pub fn scattering_source_dielectric(
    mesh: &Mesh,
    materials: &MaterialMap,
    consts: &PhysicalConstants,
    wave: &crate::model::HarmonicWaveSpec,
    order: usize,
) -> Result<Vec<C64>> {
    for m in &materials.by_region {
        if (m.mu_r - 1.0).abs() > 1e-12 {
            return Err(Error::Config(
                "dielectric scattering sources require mu_r = 1 in all regions".into(),
            ));
        }
    }
    let k0 = wave.k0;
    let mats = materials.clone();
    let consts2 = *consts;
    let wave2 = *wave;
    let mut load = volume_load(mesh, materials, order, move |region, x| {
        let m = mats.get(region);
        let k = m.wavenumber(k0);
        let coeff = (k * k - k0 * k0) / m.mu(&consts2);
        if coeff == 0.0 {
            return [C64::new(0.0, 0.0); 4];
        }
        let e = crate::model::plane_wave_field(&wave2, x);
        [coeff * e[0], coeff * e[1], coeff * e[2], C64::new(0.0, 0.0)]
    })?;
    let mats = materials.clone();
    let consts2 = *consts;
    let wave2 = *wave;
    let grad = gradient_load(mesh, order, move |region, x| {
        let m = mats.get(region);
        let de = (m.eps_r - 1.0) * consts2.eps0;
        if de == 0.0 {
            return [C64::new(0.0, 0.0); 3];
        }
        let e = crate::model::plane_wave_field(&wave2, x);
        [-de * e[0], -de * e[1], -de * e[2]]
    })?;
    for (l, g) in load.iter_mut().zip(grad) {
        *l += g;
    }
    Ok(load)
}

/// Cavity driving load at time t. The stepped system is the once-integrated
/// wave equation (Ampere's law in potentials),
/// `eps (A.. + grad psi..) + curl(curl A)/mu = j`, so the A rows are loaded
/// with the current itself: `+(W, j)`.
pub fn transient_load_cavity(
    mesh: &Mesh,
    omega: f64,
    consts: &PhysicalConstants,
    order: usize,
    t: f64,
) -> Result<Vec<f64>> {
    let eps = consts.eps0;
    let mu = consts.mu0;
    volume_load(mesh, &MaterialMap::vacuum(), order, move |_, x| {
        let f = crate::oracles::cavity_fields(x, t, omega, eps, mu);
        [f.j[0], f.j[1], f.j[2], 0.0]
    })
}

/// Transient dielectric contrast sources at time t: A rows gain
/// `(eps - eps0)(W, dE_inc/dt)`, psi rows `((eps - eps0) grad phi, E_inc)`.
pub fn transient_load_dielectric(
    mesh: &Mesh,
    materials: &MaterialMap,
    consts: &PhysicalConstants,
    pulse: &crate::model::NeumannPulseSpec,
    order: usize,
    t: f64,
) -> Result<Vec<f64>> {
    let mats = materials.clone();
    let consts2 = *consts;
    let pulse2 = *pulse;
    let mut load = volume_load(mesh, materials, order, move |region, x| {
        let de = (mats.get(region).eps_r - 1.0) * consts2.eps0;
        if de == 0.0 {
            return [0.0; 4];
        }
        let (_, dedt) = crate::model::neumann_pulse(&pulse2, t, x);
        [de * dedt[0], de * dedt[1], de * dedt[2], 0.0]
    })?;
    let mats = materials.clone();
    let consts2 = *consts;
    let pulse2 = *pulse;
    let grad = gradient_load(mesh, order, move |region, x| {
        let de = (mats.get(region).eps_r - 1.0) * consts2.eps0;
        if de == 0.0 {
            return [0.0; 3];
        }
        let (e, _) = crate::model::neumann_pulse(&pulse2, t, x);
        [de * e[0], de * e[1], de * e[2]]
    })?;
    for (l, g) in load.iter_mut().zip(grad) {
        *l += g;
    }
    Ok(load)
}

/// Restrict a full-slot system to the free unknowns, folding constrained
/// columns times their Dirichlet values into the right-hand side.
pub fn reduce_system<S: Scalar>(
    k_full: &SparseMatrix<S>,
    f_full: &[S],
    dofmap: &DofMap,
    values: &[S],
) -> Result<(SparseMatrix<S>, Vec<S>)> {
    let nslots = dofmap.node_count() * SLOTS;
    if k_full.dim() != nslots || f_full.len() != nslots {
        return Err(Error::Solve(format!(
            "system dimension {} does not match the dof map ({nslots})",
            k_full.dim()
        )));
    }
    let nfree = dofmap.free_count();
    let mut rhs = vec![S::zero(); nfree];
    let mut trips: Vec<(u32, u32, S)> = Vec::new();
    for node in 0..dofmap.node_count() as u32 {
        for slot in 0..SLOTS {
            let row = node as usize * SLOTS + slot;
            let SlotState::Free(fi) = dofmap.state(node, slot) else {
                continue;
            };
            rhs[fi as usize] = f_full[row];
            let (cols, vals) = k_full.row(row);
            for (c, v) in cols.iter().zip(vals) {
                let cnode = *c / SLOTS as u32;
                let cslot = (*c % SLOTS as u32) as usize;
                match dofmap.state(cnode, cslot) {
                    SlotState::Free(fj) => trips.push((fi, fj, *v)),
                    SlotState::Constrained(ci) => {
                        let g = values[ci as usize];
                        rhs[fi as usize] -= *v * g;
                    }
                }
            }
        }
    }
    Ok((SparseMatrix::from_triplets(nfree, &trips)?, rhs))
}

/// Expand free unknowns back to a full-slot vector with the constrained
/// values in place.
pub fn expand_solution<S: Scalar>(dofmap: &DofMap, values: &[S], x_free: &[S]) -> Vec<S> {
    let mut full = vec![S::zero(); dofmap.node_count() * SLOTS];
    for node in 0..dofmap.node_count() as u32 {
        for slot in 0..SLOTS {
            let idx = node as usize * SLOTS + slot;
            full[idx] = match dofmap.state(node, slot) {
                SlotState::Free(fi) => x_free[fi as usize],
                SlotState::Constrained(ci) => values[ci as usize],
            };
        }
    }
    full
}

/// Restrict a full-slot vector to the free unknowns.
pub fn restrict_vector<S: Scalar>(dofmap: &DofMap, full: &[S]) -> Vec<S> {
    let mut out = vec![S::zero(); dofmap.free_count()];
    for node in 0..dofmap.node_count() as u32 {
        for slot in 0..SLOTS {
            if let SlotState::Free(fi) = dofmap.state(node, slot) {
                out[fi as usize] = full[node as usize * SLOTS + slot];
            }
        }
    }
    out
}
