//! Global degree-of-freedom numbering over the four per-node slots
//! (Ax, Ay, Az, psi) and Dirichlet constraint management: homogeneous PEC
//! walls, scattered-field boundary lifts on conductors, and the thin-patch
//! symmetry conditions.

use crate::meshgen::{Axis, BoundaryTag, Mesh};
use crate::model::{Vec3, C64};
use crate::{Error, Result};
use std::collections::BTreeMap;

pub const SLOTS: usize = 4;
pub const PSI: usize = 3;

/// Constraint values must be comparable so conflicting prescriptions on one
/// slot can be rejected.
pub trait ConstraintValue: Clone {
    fn zero() -> Self;
    fn close(&self, other: &Self) -> bool;
}

impl ConstraintValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn close(&self, other: &Self) -> bool {
        (self - other).abs() <= 1e-12 * (1.0 + self.abs() + other.abs())
    }
}

impl ConstraintValue for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
    fn close(&self, other: &Self) -> bool {
        (self - other).norm() <= 1e-12 * (1.0 + self.norm() + other.norm())
    }
}

/// Time-dependent Dirichlet data for transient runs: the slot value is
/// `coeff * F(u(t, x))` with `F` the pulse antiderivative, so that
/// `dA/dt = coeff * waveform(u)` reproduces the incident field exactly.
#[derive(Debug, Clone, PartialEq)]
pub enum TransientLift {
    Zero,
    PulseIntegral { coeff: f64, position: Vec3 },
}

impl ConstraintValue for TransientLift {
    fn zero() -> Self {
        TransientLift::Zero
    }
    fn close(&self, other: &Self) -> bool {
        match (self, other) {
            (TransientLift::Zero, TransientLift::Zero) => true,
            (
                TransientLift::PulseIntegral { coeff: a, .. },
                TransientLift::PulseIntegral { coeff: b, .. },
            ) => (a - b).abs() <= 1e-12 * (1.0 + a.abs() + b.abs()),
            (TransientLift::Zero, TransientLift::PulseIntegral { coeff, .. })
            | (TransientLift::PulseIntegral { coeff, .. }, TransientLift::Zero) => {
                coeff.abs() <= 1e-12
            }
        }
    }
}

/// Set of Dirichlet constraints keyed by (node, slot).
#[derive(Debug, Clone, Default)]
pub struct ConstraintSpec<V> {
    entries: BTreeMap<(u32, u8), V>,
}

impl<V: ConstraintValue> ConstraintSpec<V> {
    pub fn new() -> Self {
        ConstraintSpec {
            entries: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Add one constraint; identical re-prescription is allowed, numerically
    /// different values on the same slot are a conflict.
    pub fn constrain(&mut self, node: u32, slot: usize, value: V) -> Result<()> {
        debug_assert!(slot < SLOTS);
        if let Some(existing) = self.entries.get(&(node, slot as u8)) {
            if !existing.close(&value) {
                return Err(Error::ConstraintConflict {
                    node: node as usize,
                    slot,
                });
            }
            return Ok(());
        }
        self.entries.insert((node, slot as u8), value);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, usize, &V)> {
        self.entries.iter().map(|((n, s), v)| (*n, *s as usize, v))
    }

    pub fn psi_constrained_anywhere(&self) -> bool {
        self.entries.keys().any(|(_, s)| *s as usize == PSI)
    }
}

/// One slot of the global numbering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotState {
    Free(u32),
    /// Index into the constraint-value table.
    Constrained(u32),
}

/// Global equation numbering: slot (node, c) maps to a free equation index
/// or to an entry in the constraint table.
#[derive(Debug, Clone)]
pub struct DofMap {
    states: Vec<SlotState>,
    free_count: usize,
    node_count: usize,
}

impl DofMap {
    pub fn free_count(&self) -> usize {
        self.free_count
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    #[inline]
    pub fn state(&self, node: u32, slot: usize) -> SlotState {
        self.states[node as usize * SLOTS + slot]
    }

    /// Coordinates of each free unknown's node, for ordering heuristics.
    pub fn free_coords(&self, mesh: &Mesh) -> Vec<Vec3> {
        let mut coords = vec![[0.0; 3]; self.free_count];
        for node in 0..self.node_count {
            for slot in 0..SLOTS {
                if let SlotState::Free(eq) = self.states[node * SLOTS + slot] {
                    coords[eq as usize] = mesh.nodes[node];
                }
            }
        }
        coords
    }
}

/// Number all unconstrained slots in deterministic (node, slot) order.
pub fn build_dof_map<V: ConstraintValue>(
    mesh: &Mesh,
    constraints: &ConstraintSpec<V>,
) -> (DofMap, Vec<V>) {
    let n = mesh.nodes.len();
    let mut states = Vec::with_capacity(n * SLOTS);
    let mut values = Vec::with_capacity(constraints.len());
    let mut free = 0u32;
    // constraint table indexed in (node, slot) order
    let mut lookup: BTreeMap<(u32, u8), u32> = BTreeMap::new();
    for ((node, slot), v) in constraints.entries.iter() {
        lookup.insert((*node, *slot), values.len() as u32);
        values.push(v.clone());
    }
    for node in 0..n as u32 {
        for slot in 0..SLOTS as u8 {
            if let Some(&ci) = lookup.get(&(node, slot)) {
                states.push(SlotState::Constrained(ci));
            } else {
                states.push(SlotState::Free(free));
                free += 1;
            }
        }
    }
    (
        DofMap {
            states,
            free_count: free as usize,
            node_count: n,
        },
        values,
    )
}

/// How a PEC surface is imposed.
/// Per-node orthonormal frames on curved constrained surfaces. The A slots
/// of a rotated node hold (A·t1, A·t2, A·n) instead of Cartesian components,
/// so tangential Dirichlet data is slot-wise while the normal component
/// stays free. Leaving the normal free is what keeps the regularized system
/// Maxwell-consistent: it turns `div A = 0` into a natural condition on the
/// conductor, so the harmonic function `div A` vanishes identically.
#[derive(Debug, Clone, Default)]
pub struct NodeRotations {
    /// node -> rows (t1, t2, n) of the rotation A_frame = Q A_cart.
    pub frames: std::collections::BTreeMap<u32, [[f64; 3]; 3]>,
}

impl NodeRotations {
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Convert a full-slot vector from the rotated basis back to Cartesian
    /// components (Q is orthogonal, so the inverse is the transpose).
    pub fn to_cartesian<S: crate::sparsela::Scalar>(&self, full: &mut [S]) {
        for (&node, q) in &self.frames {
            let base = node as usize * SLOTS;
            let a = [full[base], full[base + 1], full[base + 2]];
            for c in 0..3 {
                full[base + c] =
                    a[0] * S::from_f64(q[0][c]) + a[1] * S::from_f64(q[1][c]) + a[2] * S::from_f64(q[2][c]);
            }
        }
    }
}

/// Build rotation frames for every node on facets with `tag`, using the
/// average facet normal. Where the normal is (numerically) orthogonal to
/// the y axis, t1 is chosen as exactly +y so that symmetry-patch
/// constraints on the y component stay slot-aligned.
pub fn surface_rotations(mesh: &Mesh, tag: BoundaryTag) -> Result<NodeRotations> {
    use crate::model::{cross, normalize, norm, scale, add};
    let mut accum: std::collections::BTreeMap<u32, Vec3> = std::collections::BTreeMap::new();
    for bf in &mesh.boundary_facets {
        if bf.tag != tag {
            continue;
        }
        let el = &mesh.elements[bf.element as usize];
        for fq in crate::assembly::face_quadrature(mesh, bf.element as usize, bf.face, 2)? {
            // orient towards the element centroid -> inward; sign is
            // irrelevant for the frame, only consistency per node matters
            let _ = el;
            for l in crate::meshgen::face_local_nodes(el.kind, bf.face) {
                let nid = el.conn[l];
                let e = accum.entry(nid).or_insert([0.0; 3]);
                // accumulate with a consistent global orientation: flip so
                // the normal points away from the origin side of the facet
                let mut nrm = fq.normal;
                if crate::model::dot(nrm, crate::model::sub(fq.x, [0.0; 3])) < 0.0 {
                    nrm = scale(nrm, -1.0);
                }
                *e = add(*e, nrm);
            }
        }
    }
    let mut rot = NodeRotations::default();
    for (nid, nsum) in accum {
        if norm(nsum) < 1e-12 {
            return Err(Error::Geometry(format!(
                "degenerate surface normal at node {nid}"
            )));
        }
        let n = normalize(nsum);
        let t1 = if n[1].abs() < 1e-9 {
            [0.0, 1.0, 0.0]
        } else if n[1].abs() < 0.9 {
            normalize(sub_v([0.0, 1.0, 0.0], scale(n, n[1])))
        } else {
            normalize(sub_v([1.0, 0.0, 0.0], scale(n, n[0])))
        };
        let t2 = cross(n, t1);
        rot.frames.insert(nid, [t1, t2, n]);
    }
    Ok(rot)
}

fn sub_v(a: Vec3, b: Vec3) -> Vec3 {
    crate::model::sub(a, b)
}

pub enum PecMode<'a> {
    /// Cavity/radiation walls: the two tangential A components and psi are
    /// zeroed; the wall must be a coordinate plane so the tangential
    /// directions are Cartesian slots. The normal A component stays free.
    Cavity,
    /// Scattered-field conductor: the tangential A components (in the
    /// node's rotated frame) are prescribed to -E_inc tangential and
    /// psi = 0; the normal A slot stays free.
    HarmonicScattering(&'a dyn Fn(Vec3) -> [C64; 3]),
}

/// Apply PEC constraints for harmonic problems on all facets with `tag`.
pub fn apply_pec_harmonic(
    spec: &mut ConstraintSpec<C64>,
    mesh: &Mesh,
    tag: BoundaryTag,
    mode: PecMode,
    rotations: &NodeRotations,
) -> Result<()> {
    match mode {
        PecMode::Cavity => apply_pec_walls(spec, mesh, tag),
        PecMode::HarmonicScattering(inc) => {
            for nid in mesh.facet_nodes(|t| t == tag) {
                let x = mesh.nodes[nid as usize];
                let e = inc(x);
                let q = rotations.frames.get(&nid).ok_or_else(|| {
                    Error::Config(format!("scattering conductor node {nid} has no frame"))
                })?;
                for slot in 0..2 {
                    let t = q[slot];
                    let lift = -(e[0] * t[0] + e[1] * t[1] + e[2] * t[2]);
                    spec.constrain(nid, slot, lift)?;
                }
                spec.constrain(nid, PSI, C64::new(0.0, 0.0))?;
            }
            Ok(())
        }
    }
}

/// Homogeneous tangential-A + psi constraints on axis-aligned PEC walls,
/// generic over the constraint value type.
fn apply_pec_walls<V: ConstraintValue>(
    spec: &mut ConstraintSpec<V>,
    mesh: &Mesh,
    tag: BoundaryTag,
) -> Result<()> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &mesh.nodes {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let tol = 1e-9 * crate::model::norm(crate::model::sub(hi, lo)).max(1.0);
    let mut found = false;
    for bf in &mesh.boundary_facets {
        if bf.tag != tag {
            continue;
        }
        found = true;
        let el = &mesh.elements[bf.element as usize];
        let nodes: Vec<u32> = crate::meshgen::face_local_nodes(el.kind, bf.face)
            .iter()
            .map(|&l| el.conn[l])
            .collect();
        // the wall must be normal to a coordinate axis
        let mut normal_axis = None;
        for a in 0..3 {
            let v0 = mesh.nodes[nodes[0] as usize][a];
            if nodes
                .iter()
                .all(|&nid| (mesh.nodes[nid as usize][a] - v0).abs() <= tol)
            {
                normal_axis = Some(a);
                break;
            }
        }
        let normal_axis = normal_axis.ok_or_else(|| {
            Error::Config(
                "homogeneous PEC walls must be axis-aligned planes; curved conductors \
                 need a scattering lift"
                    .into(),
            )
        })?;
        for &nid in &nodes {
            for c in 0..3 {
                if c != normal_axis {
                    spec.constrain(nid, c, V::zero())?;
                }
            }
            spec.constrain(nid, PSI, V::zero())?;
        }
    }
    if !found {
        return Err(Error::Config(format!("no facets tagged {tag:?}")));
    }
    Ok(())
}

/// Cavity walls for transient problems (same slot pattern, zero values).
pub fn apply_pec_transient_walls(
    spec: &mut ConstraintSpec<TransientLift>,
    mesh: &Mesh,
    tag: BoundaryTag,
) -> Result<()> {
    apply_pec_walls(spec, mesh, tag)
}

/// Scattered-field conductor for transient problems: the tangential A lifts
/// (in the node frames) integrate the incident pulse so that
/// dA/dt = E_inc tangentially on the surface; psi = 0, normal A free.
pub fn apply_pec_transient_scattering(
    spec: &mut ConstraintSpec<TransientLift>,
    mesh: &Mesh,
    tag: BoundaryTag,
    e_hat: Vec3,
    rotations: &NodeRotations,
) -> Result<()> {
    let nodes = mesh.facet_nodes(|t| t == tag);
    if nodes.is_empty() {
        return Err(Error::Config(format!("no facets tagged {tag:?}")));
    }
    for nid in nodes {
        let x = mesh.nodes[nid as usize];
        let q = rotations
            .frames
            .get(&nid)
            .ok_or_else(|| Error::Config(format!("conductor node {nid} has no frame")))?;
        for slot in 0..2 {
            let coeff = crate::model::dot(e_hat, q[slot]);
            let v = if coeff == 0.0 {
                TransientLift::Zero
            } else {
                TransientLift::PulseIntegral { coeff, position: x }
            };
            spec.constrain(nid, slot, v)?;
        }
        spec.constrain(nid, PSI, TransientLift::Zero)?;
    }
    Ok(())
}

/// Thin-patch symmetry conditions: A·n = 0 on every `SYM_PATCH_OUTER` node
/// (per patch axis) and psi = 0 on the whole `patch_volume` set. On nodes
/// with rotated frames the patch axis must coincide with a frame vector.
pub fn apply_symmetry_patch<V: ConstraintValue>(
    spec: &mut ConstraintSpec<V>,
    mesh: &Mesh,
    rotations: &NodeRotations,
) -> Result<()> {
    if mesh.patches.is_empty() {
        return Err(Error::Config("mesh has no symmetry patches".into()));
    }
    let volume = mesh.node_set("patch_volume")?;
    if volume.is_empty() {
        return Err(Error::Config("patch_volume node set is empty".into()));
    }
    // outer faces carry their axis in the tag
    let mut constrained_any = false;
    for axis in [Axis::X, Axis::Y, Axis::Z] {
        let outer = mesh.facet_nodes(|t| t == BoundaryTag::SymPatchOuter(axis));
        for nid in outer {
            let slot = match rotations.frames.get(&nid) {
                None => axis.index(),
                Some(q) => {
                    let mut unit = [0.0; 3];
                    unit[axis.index()] = 1.0;
                    (0..3)
                        .find(|&s| crate::model::dot(q[s], unit).abs() > 1.0 - 1e-9)
                        .ok_or_else(|| {
                            Error::Config(format!(
                                "patch axis {} is not a frame vector at rotated node {nid}",
                                axis.name()
                            ))
                        })?
                }
            };
            spec.constrain(nid, slot, V::zero())?;
            constrained_any = true;
        }
    }
    if !constrained_any {
        return Err(Error::Config("no SYM_PATCH_OUTER facets found".into()));
    }
    for &nid in volume {
        spec.constrain(nid, PSI, V::zero())?;
    }
    Ok(())
}

/// The scalar potential only enters through its gradient, so meshes without
/// any psi Dirichlet data (e.g. a full dielectric ball) leave a constant
/// nullspace; pin one psi slot to keep the system nonsingular.
pub fn ensure_psi_gauge<V: ConstraintValue>(spec: &mut ConstraintSpec<V>, mesh: &Mesh) -> Result<bool> {
    if spec.psi_constrained_anywhere() {
        return Ok(false);
    }
    if mesh.nodes.is_empty() {
        return Err(Error::Config("empty mesh".into()));
    }
    spec.constrain(0, PSI, V::zero())?;
    Ok(true)
}
