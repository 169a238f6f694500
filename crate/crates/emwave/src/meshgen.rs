//! Structured mesh generation for the benchmark geometries: cuboids,
//! spherical and ellipsoidal shells, solid balls with a material interface,
//! plus thin-patch extrusion on symmetry planes, boundary tagging, a
//! line-oriented text format, and mesh validation.
//!
//! Conventions:
//! - Quadratic grids: a division count of `n` along an axis means `n`
//!   quadratic elements spanning `2n` node intervals.
//! - Shells and balls are meshed in (r, theta, phi); the two element rings
//!   touching the polar axis collapse into W18 wedges, everything else is
//!   B27. Solid balls additionally collapse the innermost layer onto the
//!   center node.
//! - Symmetry planes are coordinate planes. `attach_thin_patch` extrudes one
//!   quadratic element layer from every boundary face on the plane, tags the
//!   new parallel outer surface `SYM_PATCH_OUTER(axis)`, and collects the
//!   node sets `patch_volume` and `patch_outer_face`.

use crate::elements::{ElementGeometry, ElementKind, ShapeTable};
use crate::model::{norm, sub, Vec3};
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::collections::HashMap;
use std::io::{BufRead, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(&self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(Error::Format(format!("unknown axis '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Pec,
    Abc,
    SymPatchOuter(Axis),
    DielectricInterface,
}

impl BoundaryTag {
    pub fn encode(&self) -> String {
        match self {
            BoundaryTag::Pec => "PEC".into(),
            BoundaryTag::Abc => "ABC".into(),
            BoundaryTag::SymPatchOuter(a) => format!("SYM_PATCH_OUTER {}", a.name()),
            BoundaryTag::DielectricInterface => "DIELECTRIC_INTERFACE".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Element {
    pub kind: ElementKind,
    pub conn: Vec<u32>,
    pub region: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFacet {
    pub element: u32,
    pub face: u8,
    pub tag: BoundaryTag,
}

/// A symmetry-plane patch record: the plane `coord[axis] = plane`, extruded
/// towards `side` (+1/-1) by `thickness`.
#[derive(Debug, Clone, Copy)]
pub struct PatchInfo {
    pub axis: Axis,
    pub plane: f64,
    pub side: f64,
    pub thickness: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Mesh {
    pub nodes: Vec<Vec3>,
    pub elements: Vec<Element>,
    pub boundary_facets: Vec<BoundaryFacet>,
    pub node_sets: BTreeMap<String, Vec<u32>>,
    pub patches: Vec<PatchInfo>,
}

/// Local faces of the reference elements. For B27: 0/1 = xi -/+, 2/3 = eta,
/// 4/5 = zeta. For W18: 0/1 = the triangular faces at zeta -/+, 2/3/4 = the
/// quadrilateral faces over the triangle edges (v0v1, v1v2, v2v0).
pub fn face_count(kind: ElementKind) -> usize {
    match kind {
        ElementKind::B27 => 6,
        ElementKind::W18 => 5,
    }
}

/// Local node indices of a face, in a (u, v) grid layout:
/// quadrilateral faces return 9 indices ordered (u, v) in {-1,0,1}^2
/// row-major (v fastest); triangular faces return the 6 T6-ordered indices.
pub fn face_local_nodes(kind: ElementKind, face: u8) -> Vec<usize> {
    let re = crate::elements::ReferenceElement::new(kind);
    let locate = |target: Vec3| -> usize {
        re.node_local_coords
            .iter()
            .position(|c| {
                (c[0] - target[0]).abs() < 1e-12
                    && (c[1] - target[1]).abs() < 1e-12
                    && (c[2] - target[2]).abs() < 1e-12
            })
            .expect("face node must exist")
    };
    match kind {
        ElementKind::B27 => {
            let (axis, s) = match face {
                0 => (0, -1.0),
                1 => (0, 1.0),
                2 => (1, -1.0),
                3 => (1, 1.0),
                4 => (2, -1.0),
                5 => (2, 1.0),
                _ => panic!("bad face"),
            };
            // (u, v) = the two free axes in increasing axis order
            let free: Vec<usize> = (0..3).filter(|a| *a != axis).collect();
            let mut out = Vec::with_capacity(9);
            for u in [-1.0, 0.0, 1.0] {
                for v in [-1.0, 0.0, 1.0] {
                    let mut c = [0.0; 3];
                    c[axis] = s;
                    c[free[0]] = u;
                    c[free[1]] = v;
                    out.push(locate(c));
                }
            }
            out
        }
        ElementKind::W18 => {
            match face {
                0 | 1 => {
                    let z = if face == 0 { -1.0 } else { 1.0 };
                    // T6 order: 3 vertices then 3 edge midpoints
                    [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.5, 0.0), (0.5, 0.5), (0.0, 0.5)]
                        .iter()
                        .map(|(a, b)| locate([*a, *b, z]))
                        .collect()
                }
                2 | 3 | 4 => {
                    // quad face over a triangle edge: u along the edge, v = zeta
                    let (p0, p1): ((f64, f64), (f64, f64)) = match face {
                        2 => ((0.0, 0.0), (1.0, 0.0)),
                        3 => ((1.0, 0.0), (0.0, 1.0)),
                        _ => ((0.0, 1.0), (0.0, 0.0)),
                    };
                    let mut out = Vec::with_capacity(9);
                    for t in [0.0, 0.5, 1.0] {
                        let a = p0.0 + t * (p1.0 - p0.0);
                        let b = p0.1 + t * (p1.1 - p0.1);
                        for v in [-1.0, 0.0, 1.0] {
                            out.push(locate([a, b, v]));
                        }
                    }
                    out
                }
                _ => panic!("bad face"),
            }
        }
    }
}

/// Map face parameters (u, v) to the element reference point on that face.
pub fn face_ref_point(kind: ElementKind, face: u8, u: f64, v: f64) -> Vec3 {
    match kind {
        ElementKind::B27 => {
            let (axis, s) = match face {
                0 => (0, -1.0),
                1 => (0, 1.0),
                2 => (1, -1.0),
                3 => (1, 1.0),
                4 => (2, -1.0),
                5 => (2, 1.0),
                _ => panic!("bad face"),
            };
            let free: Vec<usize> = (0..3).filter(|a| *a != axis).collect();
            let mut c = [0.0; 3];
            c[axis] = s;
            c[free[0]] = u;
            c[free[1]] = v;
            c
        }
        ElementKind::W18 => match face {
            0 => [u, v, -1.0],
            1 => [u, v, 1.0],
            2 | 3 | 4 => {
                let (p0, p1): ((f64, f64), (f64, f64)) = match face {
                    2 => ((0.0, 0.0), (1.0, 0.0)),
                    3 => ((1.0, 0.0), (0.0, 1.0)),
                    _ => ((0.0, 1.0), (0.0, 0.0)),
                };
                let t = (u + 1.0) / 2.0;
                [p0.0 + t * (p1.0 - p0.0), p0.1 + t * (p1.1 - p0.1), v]
            }
            _ => panic!("bad face"),
        },
    }
}

/// Whether a local face is triangular (6 nodes) or quadrilateral (9 nodes).
pub fn face_is_triangle(kind: ElementKind, face: u8) -> bool {
    matches!(kind, ElementKind::W18) && face < 2
}

impl Mesh {
    pub fn element_geometry(&self, e: usize) -> ElementGeometry {
        ElementGeometry {
            coords: self.elements[e]
                .conn
                .iter()
                .map(|&n| self.nodes[n as usize])
                .collect(),
        }
    }

    pub fn node_set(&self, name: &str) -> Result<&[u32]> {
        self.node_sets
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Geometry(format!("missing node set '{name}'")))
    }

    /// Global node ids of a local face, deduplicated (collapsed elements
    /// repeat node ids) and sorted, for face matching.
    fn face_key(&self, e: usize, face: u8) -> Vec<u32> {
        let el = &self.elements[e];
        let mut ids: Vec<u32> = face_local_nodes(el.kind, face)
            .iter()
            .map(|&l| el.conn[l])
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// All (element, face) pairs that lie on the mesh boundary: faces whose
    /// node-set key appears exactly once. Degenerate (collapsed) faces with
    /// fewer than 3 distinct nodes are not real faces and are skipped.
    pub fn boundary_faces(&self) -> Vec<(u32, u8)> {
        let mut seen: HashMap<Vec<u32>, (u32, u8, u32)> = HashMap::new();
        for (e, el) in self.elements.iter().enumerate() {
            for f in 0..face_count(el.kind) as u8 {
                let key = self.face_key(e, f);
                if key.len() < 6 {
                    continue;
                }
                seen.entry(key)
                    .and_modify(|ent| ent.2 += 1)
                    .or_insert((e as u32, f, 1));
            }
        }
        let mut out: Vec<(u32, u8)> = seen
            .values()
            .filter(|(_, _, c)| *c == 1)
            .map(|(e, f, _)| (*e, *f))
            .collect();
        out.sort_unstable();
        out
    }

    /// Validate connectivity, Jacobians, duplicate nodes, watertightness and
    /// the tag/boundary correspondence.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len() as u32;
        for (e, el) in self.elements.iter().enumerate() {
            if el.conn.len() != el.kind.node_count() {
                return Err(Error::Geometry(format!(
                    "element {e}: wrong connectivity length {}",
                    el.conn.len()
                )));
            }
            for &c in &el.conn {
                if c >= n {
                    return Err(Error::Geometry(format!("element {e}: node {c} out of range")));
                }
            }
        }
        // duplicate-node check on a hash grid
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.nodes {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let diam = norm(sub(hi, lo)).max(1e-300);
        let tol = 1e-9 * diam;
        let cell = |p: &Vec3| -> (i64, i64, i64) {
            (
                (p[0] / (tol * 4.0)).floor() as i64,
                (p[1] / (tol * 4.0)).floor() as i64,
                (p[2] / (tol * 4.0)).floor() as i64,
            )
        };
        let mut grid: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in self.nodes.iter().enumerate() {
            let c = cell(p);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(v) = grid.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                            for &j in v {
                                if norm(sub(self.nodes[j as usize], *p)) < tol {
                                    return Err(Error::Geometry(format!(
                                        "duplicate nodes {j} and {i}"
                                    )));
                                }
                            }
                        }
                    }
                }
            }
            grid.entry(c).or_default().push(i as u32);
        }
        // positive Jacobians at the default quadrature points
        let tables: HashMap<ElementKind, ShapeTable> = [ElementKind::B27, ElementKind::W18]
            .iter()
            .map(|&k| (k, ShapeTable::new(k, 3).unwrap()))
            .collect();
        for (e, el) in self.elements.iter().enumerate() {
            let geom = self.element_geometry(e);
            let table = &tables[&el.kind];
            for qp in 0..table.rule.points.len() {
                table.map_at(&geom, qp, e)?;
            }
        }
        // watertightness: every non-degenerate face appears once or twice
        let mut counts: HashMap<Vec<u32>, u32> = HashMap::new();
        for (e, el) in self.elements.iter().enumerate() {
            for f in 0..face_count(el.kind) as u8 {
                let key = self.face_key(e, f);
                if key.len() < 6 {
                    continue;
                }
                *counts.entry(key).or_insert(0) += 1;
            }
        }
        for (key, c) in &counts {
            if *c > 2 {
                return Err(Error::Geometry(format!(
                    "face shared by {c} elements (nodes {key:?})"
                )));
            }
        }
        // tags: boundary tags sit on single-count faces, interface tags on pairs
        for bf in &self.boundary_facets {
            let key = self.face_key(bf.element as usize, bf.face);
            let c = counts.get(&key).copied().unwrap_or(0);
            match bf.tag {
                BoundaryTag::DielectricInterface => {
                    if c != 2 {
                        return Err(Error::Geometry(
                            "dielectric interface tag on a non-interior face".into(),
                        ));
                    }
                }
                _ => {
                    if c != 1 {
                        return Err(Error::Geometry(format!(
                            "tag {:?} on a non-boundary face (count {c})",
                            bf.tag
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Nodes lying on tagged facets, sorted and deduplicated.
    pub fn facet_nodes(&self, want: impl Fn(BoundaryTag) -> bool) -> Vec<u32> {
        let mut out = Vec::new();
        for bf in &self.boundary_facets {
            if want(bf.tag) {
                let el = &self.elements[bf.element as usize];
                for l in face_local_nodes(el.kind, bf.face) {
                    out.push(el.conn[l]);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    fn add_node_set(&mut self, name: &str, mut ids: Vec<u32>) {
        ids.sort_unstable();
        ids.dedup();
        self.node_sets.insert(name.to_string(), ids);
    }
}

// ---------------------------------------------------------------------------
// cuboid
// ---------------------------------------------------------------------------

/// Axis-aligned cuboid `origin + [0, lengths]`, all B27, every outer face
/// tagged PEC (callers retag as needed).
pub fn gen_cuboid(origin: Vec3, lengths: Vec3, divisions: [usize; 3]) -> Result<Mesh> {
    let [nx, ny, nz] = divisions;
    if nx < 1 || ny < 1 || nz < 1 {
        return Err(Error::Geometry("cuboid divisions must be >= 1".into()));
    }
    if lengths.iter().any(|&l| l <= 0.0) {
        return Err(Error::Geometry("cuboid lengths must be positive".into()));
    }
    let (px, py, pz) = (2 * nx + 1, 2 * ny + 1, 2 * nz + 1);
    let mut mesh = Mesh::default();
    let idx = |i: usize, j: usize, k: usize| -> u32 { ((i * py + j) * pz + k) as u32 };
    for i in 0..px {
        for j in 0..py {
            for k in 0..pz {
                mesh.nodes.push([
                    origin[0] + lengths[0] * i as f64 / (px - 1) as f64,
                    origin[1] + lengths[1] * j as f64 / (py - 1) as f64,
                    origin[2] + lengths[2] * k as f64 / (pz - 1) as f64,
                ]);
            }
        }
    }
    let re = crate::elements::ReferenceElement::new(ElementKind::B27);
    for ex in 0..nx {
        for ey in 0..ny {
            for ez in 0..nz {
                let conn: Vec<u32> = re
                    .node_local_coords
                    .iter()
                    .map(|c| {
                        idx(
                            2 * ex + (c[0] as i64 + 1) as usize,
                            2 * ey + (c[1] as i64 + 1) as usize,
                            2 * ez + (c[2] as i64 + 1) as usize,
                        )
                    })
                    .collect();
                let e = mesh.elements.len() as u32;
                mesh.elements.push(Element {
                    kind: ElementKind::B27,
                    conn,
                    region: 0,
                });
                // tag outer faces PEC
                if ex == 0 {
                    mesh.boundary_facets.push(BoundaryFacet { element: e, face: 0, tag: BoundaryTag::Pec });
                }
                if ex == nx - 1 {
                    mesh.boundary_facets.push(BoundaryFacet { element: e, face: 1, tag: BoundaryTag::Pec });
                }
                if ey == 0 {
                    mesh.boundary_facets.push(BoundaryFacet { element: e, face: 2, tag: BoundaryTag::Pec });
                }
                if ey == ny - 1 {
                    mesh.boundary_facets.push(BoundaryFacet { element: e, face: 3, tag: BoundaryTag::Pec });
                }
                if ez == 0 {
                    mesh.boundary_facets.push(BoundaryFacet { element: e, face: 4, tag: BoundaryTag::Pec });
                }
                if ez == nz - 1 {
                    mesh.boundary_facets.push(BoundaryFacet { element: e, face: 5, tag: BoundaryTag::Pec });
                }
            }
        }
    }
    Ok(mesh)
}

// ---------------------------------------------------------------------------
// spherical / ellipsoidal shells and solid balls
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngularSpan {
    Full,
    /// phi in [0, pi]; the flat faces on the xz-plane become the node set
    /// `symmetry_plane`.
    Half,
}

/// Radial node positions and the region split for shells/balls.
struct RadialGrid {
    /// r value at each radial node layer
    r: Vec<f64>,
    /// element layers with index < region_split belong to region 1
    region_split: usize,
    solid: bool,
}

/// The spherical (or ellipsoidal) node grid with polar collapse.
struct SphereGrid {
    nphi: usize,
    half: bool,
    /// node id per (radial layer, theta ring, phi column); u32::MAX marks
    /// grid slots that carry no node (odd columns of the half-rings)
    ids: Vec<u32>,
    rings: usize,
    cols: usize,
}

impl SphereGrid {
    fn node(&self, i: usize, j: usize, k: usize) -> u32 {
        let kk = if self.half { k } else { k % (2 * self.nphi) };
        let id = self.ids[(i * self.rings + j) * self.cols + kk];
        debug_assert_ne!(id, u32::MAX, "missing node ({i},{j},{kk})");
        id
    }

    fn build(
        layers: usize,
        ntheta: usize,
        nphi: usize,
        half: bool,
        position: impl Fn(usize, usize, usize) -> Vec3,
        mesh: &mut Mesh,
        collapse_center: bool,
    ) -> Self {
        let rings = 2 * ntheta + 1;
        let cols = if half { 2 * nphi + 1 } else { 2 * nphi };
        let mut ids = vec![u32::MAX; layers * rings * cols];
        for i in 0..layers {
            if collapse_center && i == 0 {
                // all grid points at r=0 are the single center node
                let id = mesh.nodes.len() as u32;
                mesh.nodes.push(position(0, 0, 0));
                for j in 0..rings {
                    for k in 0..cols {
                        ids[j * cols + k] = id;
                    }
                }
                continue;
            }
            for j in 0..rings {
                let pole = j == 0 || j == rings - 1;
                let half_ring = j == 1 || j == rings - 2;
                if pole {
                    let id = mesh.nodes.len() as u32;
                    mesh.nodes.push(position(i, j, 0));
                    for k in 0..cols {
                        ids[(i * rings + j) * cols + k] = id;
                    }
                    continue;
                }
                for k in 0..cols {
                    // half rings only carry even phi columns (wedge mid-edges)
                    if half_ring && k % 2 == 1 {
                        continue;
                    }
                    let id = mesh.nodes.len() as u32;
                    mesh.nodes.push(position(i, j, k));
                    ids[(i * rings + j) * cols + k] = id;
                }
            }
        }
        SphereGrid {
            nphi,
            half,
            ids,
            rings,
            cols,
        }
    }
}

/// Canonical W18 local ordering as (T6 node, line node) pairs; mirrors the
/// ordering in `elements`.
fn w18_order() -> Vec<(usize, i8)> {
    let mut nodes = Vec::with_capacity(18);
    for &z in &[-1i8, 1] {
        for c in 0..3 {
            nodes.push((c, z));
        }
    }
    for &z in &[-1i8, 1] {
        for m in 3..6 {
            nodes.push((m, z));
        }
    }
    for c in 0..3 {
        nodes.push((c, 0));
    }
    for m in 3..6 {
        nodes.push((m, 0));
    }
    nodes
}

/// Shared generator behind the shell/ball/ellipsoid entry points.
/// `radius_scale(i, theta)` maps a radial layer index and polar angle to a
/// radius, allowing ellipsoidal inner surfaces.
fn gen_revolved(
    radial: &RadialGrid,
    ntheta: usize,
    nphi: usize,
    span: AngularSpan,
    radius_scale: impl Fn(usize, f64) -> f64,
    inner_tag: Option<BoundaryTag>,
) -> Result<Mesh> {
    if ntheta < 2 {
        return Err(Error::Geometry("need at least 2 theta divisions".into()));
    }
    if nphi < 1 {
        return Err(Error::Geometry("need at least 1 phi division".into()));
    }
    if matches!(span, AngularSpan::Full) && nphi < 2 {
        return Err(Error::Geometry("full span needs at least 2 phi divisions".into()));
    }
    let half = matches!(span, AngularSpan::Half);
    let layers = radial.r.len();
    let rings = 2 * ntheta + 1;
    let phi_of = |k: usize| -> f64 {
        if half {
            std::f64::consts::PI * k as f64 / (2 * nphi) as f64
        } else {
            2.0 * std::f64::consts::PI * k as f64 / (2 * nphi) as f64
        }
    };
    let theta_of = |j: usize| std::f64::consts::PI * j as f64 / (2 * ntheta) as f64;
    let mut mesh = Mesh::default();
    let grid = SphereGrid::build(
        layers,
        ntheta,
        nphi,
        half,
        |i, j, k| {
            let th = theta_of(j);
            let ph = phi_of(k);
            let r = radius_scale(i, th);
            [r * th.sin() * ph.cos(), r * th.sin() * ph.sin(), r * th.cos()]
        },
        &mut mesh,
        radial.solid,
    );

    let nr = (layers - 1) / 2;
    let re27 = crate::elements::ReferenceElement::new(ElementKind::B27);
    let w18 = w18_order();
    for er in 0..nr {
        let region = if er < radial.region_split { 1u32 } else { 0u32 };
        let i0 = 2 * er;
        for et in 0..ntheta {
            let j0 = 2 * et;
            for ep in 0..nphi {
                let k0 = 2 * ep;
                let e = mesh.elements.len() as u32;
                if et == 0 || et == ntheta - 1 {
                    // polar wedge: T6 on the sphere surface x L3 radial
                    let tri = if et == 0 {
                        [
                            (0usize, k0),
                            (j0 + 2, k0),
                            (j0 + 2, k0 + 2),
                            (j0 + 1, k0),
                            (j0 + 2, k0 + 1),
                            (j0 + 1, k0 + 2),
                        ]
                    } else {
                        // south pole: mirrored, flip v1/v2 for orientation
                        let jp = 2 * ntheta;
                        [
                            (jp, k0),
                            (jp - 2, k0 + 2),
                            (jp - 2, k0),
                            (jp - 1, k0 + 2),
                            (jp - 2, k0 + 1),
                            (jp - 1, k0),
                        ]
                    };
                    let mut conn = vec![0u32; 18];
                    for (l, (c, z)) in w18.iter().enumerate() {
                        let i = i0 + (*z + 1) as usize;
                        let (j, k) = tri[*c];
                        conn[l] = grid.node(i, j, k);
                    }
                    mesh.elements.push(Element {
                        kind: ElementKind::W18,
                        conn,
                        region,
                    });
                } else {
                    // B27: xi = radial, eta = theta, zeta = phi
                    let conn: Vec<u32> = re27
                        .node_local_coords
                        .iter()
                        .map(|c| {
                            grid.node(
                                i0 + (c[0] as i64 + 1) as usize,
                                j0 + (c[1] as i64 + 1) as usize,
                                k0 + (c[2] as i64 + 1) as usize,
                            )
                        })
                        .collect();
                    mesh.elements.push(Element {
                        kind: ElementKind::B27,
                        conn,
                        region,
                    });
                }
                // radial boundary tags; for both kinds the radial faces are
                // local 0 (inner) and 1 (outer): xi for B27, zeta for W18
                if er == 0 && !radial.solid {
                    if let Some(tag) = inner_tag {
                        mesh.boundary_facets.push(BoundaryFacet {
                            element: e,
                            face: 0,
                            tag,
                        });
                    }
                }
                if radial.solid && er + 1 == radial.region_split {
                    mesh.boundary_facets.push(BoundaryFacet {
                        element: e,
                        face: 1,
                        tag: BoundaryTag::DielectricInterface,
                    });
                }
                if er == nr - 1 {
                    mesh.boundary_facets.push(BoundaryFacet {
                        element: e,
                        face: 1,
                        tag: BoundaryTag::Abc,
                    });
                }
            }
        }
    }
    if half {
        // flat faces at phi = 0 and phi = pi lie on the xz-plane
        let mut plane_nodes: Vec<u32> = Vec::new();
        let start = if radial.solid { 1 } else { 0 };
        for i in start..layers {
            for j in 0..rings {
                let pole = j == 0 || j == rings - 1;
                if pole {
                    plane_nodes.push(grid.node(i, j, 0));
                } else {
                    plane_nodes.push(grid.node(i, j, 0));
                    plane_nodes.push(grid.node(i, j, 2 * nphi));
                }
            }
        }
        if radial.solid {
            plane_nodes.push(grid.node(0, 0, 0));
        }
        mesh.add_node_set("symmetry_plane", plane_nodes);
    }
    mesh.validate()?;
    Ok(mesh)
}

/// Hollow spherical shell between radii `a` and `r_inf`; the inner surface
/// carries `inner_tag`, the outer surface ABC.
pub fn gen_spherical_shell(
    a: f64,
    r_inf: f64,
    nr: usize,
    ntheta: usize,
    nphi: usize,
    span: AngularSpan,
    inner_tag: BoundaryTag,
) -> Result<Mesh> {
    if !(r_inf > a && a > 0.0) {
        return Err(Error::Geometry(format!(
            "need r_inf > a > 0 (a = {a}, r_inf = {r_inf})"
        )));
    }
    if nr < 1 {
        return Err(Error::Geometry("need at least 1 radial division".into()));
    }
    let layers = 2 * nr + 1;
    let radial = RadialGrid {
        r: (0..layers)
            .map(|i| a + (r_inf - a) * i as f64 / (layers - 1) as f64)
            .collect(),
        region_split: 0,
        solid: false,
    };
    let r = radial.r.clone();
    gen_revolved(&radial, ntheta, nphi, span, move |i, _| r[i], Some(inner_tag))
}

/// Shell between an inner ellipsoid (semi-axes a, a, c along x, y, z) and
/// the truncation sphere `r_inf`, with linear radial blending.
pub fn gen_ellipsoidal_shell(
    a: f64,
    c: f64,
    r_inf: f64,
    nr: usize,
    ntheta: usize,
    nphi: usize,
    span: AngularSpan,
) -> Result<Mesh> {
    if !(r_inf > a.max(c)) {
        return Err(Error::Geometry(format!(
            "truncation radius {r_inf} must exceed max(a, c) = {}",
            a.max(c)
        )));
    }
    if a <= 0.0 || c <= 0.0 || nr < 1 {
        return Err(Error::Geometry("invalid ellipsoid parameters".into()));
    }
    let layers = 2 * nr + 1;
    let radial = RadialGrid {
        r: (0..layers).map(|i| i as f64 / (layers - 1) as f64).collect(),
        region_split: 0,
        solid: false,
    };
    let scale = move |i: usize, theta: f64| -> f64 {
        let st = theta.sin();
        let ct = theta.cos();
        let r_ell = 1.0 / ((st * st) / (a * a) + (ct * ct) / (c * c)).sqrt();
        let s = i as f64 / (layers - 1) as f64;
        r_ell + (r_inf - r_ell) * s
    };
    gen_revolved(&radial, ntheta, nphi, span, scale, Some(BoundaryTag::Pec))
}

/// Solid ball of radius `r_inf` with a dielectric interface at radius `a`:
/// `nr_inner` element layers inside the interface (region 1), `nr_outer`
/// outside (region 0). The innermost layer collapses onto the center node.
pub fn gen_solid_ball(
    a: f64,
    r_inf: f64,
    nr_inner: usize,
    nr_outer: usize,
    ntheta: usize,
    nphi: usize,
    span: AngularSpan,
) -> Result<Mesh> {
    if !(r_inf > a && a > 0.0) {
        return Err(Error::Geometry(format!(
            "need r_inf > a > 0 (a = {a}, r_inf = {r_inf})"
        )));
    }
    if nr_inner < 1 || nr_outer < 1 {
        return Err(Error::Geometry(
            "need radial divisions on both sides of the interface".into(),
        ));
    }
    let mut r = Vec::new();
    for i in 0..=(2 * nr_inner) {
        r.push(a * i as f64 / (2 * nr_inner) as f64);
    }
    for i in 1..=(2 * nr_outer) {
        r.push(a + (r_inf - a) * i as f64 / (2 * nr_outer) as f64);
    }
    let radial = RadialGrid {
        r: r.clone(),
        region_split: nr_inner,
        solid: true,
    };
    gen_revolved(&radial, ntheta, nphi, span, move |i, _| r[i], None)
}

// ---------------------------------------------------------------------------
// thin symmetry patches
// ---------------------------------------------------------------------------

/// Extrude a one-element-thick patch from every boundary face lying on the
/// coordinate plane `coord[axis] = plane`, in direction `side` (+1 or -1).
///
/// The far face parallel to the plane is tagged `SYM_PATCH_OUTER(axis)`;
/// `patch_volume` collects every node of the patch layer including the
/// original plane nodes, `patch_outer_face` the nodes of the outer surface.
/// Original nodes and elements are left untouched.
pub fn attach_thin_patch(
    mesh: &Mesh,
    axis: Axis,
    plane: f64,
    side: f64,
    thickness: f64,
) -> Result<Mesh> {
    if thickness <= 0.0 {
        return Err(Error::Geometry("patch thickness must be positive".into()));
    }
    if side != 1.0 && side != -1.0 {
        return Err(Error::Geometry("patch side must be +1 or -1".into()));
    }
    let ai = axis.index();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &mesh.nodes {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let tol = 1e-9 * norm(sub(hi, lo)).max(1.0);
    let on_plane = |p: &Vec3| (p[ai] - plane).abs() <= tol;

    let faces: Vec<(u32, u8)> = mesh
        .boundary_faces()
        .into_iter()
        .filter(|&(e, f)| {
            let el = &mesh.elements[e as usize];
            face_local_nodes(el.kind, f)
                .iter()
                .all(|&l| on_plane(&mesh.nodes[el.conn[l] as usize]))
        })
        .collect();
    if faces.is_empty() {
        return Err(Error::Geometry(format!(
            "no boundary faces on the plane {} = {plane}",
            axis.name()
        )));
    }

    let mut out = mesh.clone();
    // faces being extruded become interior: drop their (stale) tags
    let buried: std::collections::HashSet<(u32, u8)> = faces.iter().copied().collect();
    out.boundary_facets
        .retain(|bf| !buried.contains(&(bf.element, bf.face)));
    // tagged faces per element, for side-face tag inheritance
    let mut parent_tags: HashMap<u32, Vec<(BoundaryTag, Vec<u32>)>> = HashMap::new();
    for bf in &mesh.boundary_facets {
        if buried.contains(&(bf.element, bf.face)) {
            continue;
        }
        let el = &mesh.elements[bf.element as usize];
        let nodes: Vec<u32> = face_local_nodes(el.kind, bf.face)
            .iter()
            .map(|&l| el.conn[l])
            .collect();
        parent_tags.entry(bf.element).or_default().push((bf.tag, nodes));
    }
    // original plane node -> (mid-layer node, outer node)
    let mut offspring: HashMap<u32, (u32, u32)> = HashMap::new();
    let mut outer_nodes: Vec<u32> = Vec::new();
    let mut patch_nodes: Vec<u32> = Vec::new();
    let re27 = crate::elements::ReferenceElement::new(ElementKind::B27);

    for &(e, f) in &faces {
        let el = &mesh.elements[e as usize];
        if face_is_triangle(el.kind, f) {
            return Err(Error::Geometry(
                "triangular faces on a symmetry plane are not supported".into(),
            ));
        }
        let locals = face_local_nodes(el.kind, f);
        // 3x3 grid of global ids, (u, v) row-major
        let mut g = [[0u32; 3]; 3];
        for (idx, &l) in locals.iter().enumerate() {
            g[idx / 3][idx % 3] = el.conn[l];
        }
        // orientation: the (u, v, extrusion) frame must be right-handed; use
        // the Newell normal of the corner ring (robust for collapsed faces)
        // and transpose the grid when it opposes the extrusion direction
        let corners = [
            mesh.nodes[g[0][0] as usize],
            mesh.nodes[g[2][0] as usize],
            mesh.nodes[g[2][2] as usize],
            mesh.nodes[g[0][2] as usize],
        ];
        let mut nrm = [0.0; 3];
        for i in 0..4 {
            let p = corners[i];
            let q = corners[(i + 1) % 4];
            nrm = [
                nrm[0] + (p[1] - q[1]) * (p[2] + q[2]),
                nrm[1] + (p[2] - q[2]) * (p[0] + q[0]),
                nrm[2] + (p[0] - q[0]) * (p[1] + q[1]),
            ];
        }
        let mut dir = [0.0; 3];
        dir[ai] = side;
        if crate::model::dot(nrm, dir) < 0.0 {
            let mut t = [[0u32; 3]; 3];
            for u in 0..3 {
                for v in 0..3 {
                    t[u][v] = g[v][u];
                }
            }
            g = t;
        }
        // create the two extruded sheets
        let mut sheet = [[[0u32; 3]; 3]; 3]; // [layer][u][v]
        for u in 0..3 {
            for v in 0..3 {
                let base = g[u][v];
                sheet[0][u][v] = base;
                let (mid, outerid) = *offspring.entry(base).or_insert_with(|| {
                    let p = mesh.nodes[base as usize];
                    let mut pm = p;
                    pm[ai] += side * thickness / 2.0;
                    let mut po = p;
                    po[ai] += side * thickness;
                    let m = out.nodes.len() as u32;
                    out.nodes.push(pm);
                    let o = out.nodes.len() as u32;
                    out.nodes.push(po);
                    (m, o)
                });
                sheet[1][u][v] = mid;
                sheet[2][u][v] = outerid;
                patch_nodes.extend_from_slice(&[base, mid, outerid]);
                outer_nodes.push(outerid);
            }
        }
        // assemble a B27 with local (xi, eta, zeta) = (u, v, extrusion)
        let conn: Vec<u32> = re27
            .node_local_coords
            .iter()
            .map(|c| {
                let u = (c[0] as i64 + 1) as usize;
                let v = (c[1] as i64 + 1) as usize;
                let w = (c[2] as i64 + 1) as usize;
                sheet[w][u][v]
            })
            .collect();
        let region = mesh.elements[e as usize].region;
        let new_e = out.elements.len() as u32;
        out.elements.push(Element {
            kind: ElementKind::B27,
            conn,
            region,
        });
        out.boundary_facets.push(BoundaryFacet {
            element: new_e,
            face: 5, // zeta = +1: the outer face parallel to the plane
            tag: BoundaryTag::SymPatchOuter(axis),
        });
        // side faces continue the parent's tagged surfaces (cavity walls,
        // the conductor rim, the ABC rim, material interfaces)
        if let Some(tags) = parent_tags.get(&e) {
            let side_bases: [(u8, [u32; 3]); 4] = [
                (0, [sheet[0][0][0], sheet[0][0][1], sheet[0][0][2]]),
                (1, [sheet[0][2][0], sheet[0][2][1], sheet[0][2][2]]),
                (2, [sheet[0][0][0], sheet[0][1][0], sheet[0][2][0]]),
                (3, [sheet[0][0][2], sheet[0][1][2], sheet[0][2][2]]),
            ];
            for (face_id, base) in side_bases {
                let mut uniq = base.to_vec();
                uniq.sort_unstable();
                uniq.dedup();
                if uniq.len() < 3 {
                    continue; // collapsed side face, not a real surface
                }
                for (tag, nodes) in tags {
                    if base.iter().all(|b| nodes.contains(b)) {
                        out.boundary_facets.push(BoundaryFacet {
                            element: new_e,
                            face: face_id,
                            tag: *tag,
                        });
                        break;
                    }
                }
            }
        }
    }

    out.patches.push(PatchInfo {
        axis,
        plane,
        side,
        thickness,
    });

    // accumulate node sets across multiple patches
    let mut vol = out.node_sets.remove("patch_volume").unwrap_or_default();
    vol.extend(patch_nodes);
    out.add_node_set("patch_volume", vol);
    let mut outer = out.node_sets.remove("patch_outer_face").unwrap_or_default();
    outer.extend(outer_nodes);
    out.add_node_set("patch_outer_face", outer);

    // a later patch may extend an earlier patch's outer plane (corner
    // blocks): tag any untagged boundary face that lies on a recorded outer
    // plane and absorb beyond-plane nodes into patch_volume
    let tagged: std::collections::HashSet<(u32, u8)> = out
        .boundary_facets
        .iter()
        .map(|bf| (bf.element, bf.face))
        .collect();
    let planes: Vec<PatchInfo> = out.patches.clone();
    let mut extra_outer: Vec<u32> = Vec::new();
    let mut extra_facets: Vec<BoundaryFacet> = Vec::new();
    for &(e, f) in out.boundary_faces().iter() {
        if tagged.contains(&(e, f)) {
            continue;
        }
        let el = &out.elements[e as usize];
        for p in &planes {
            let pi = p.axis.index();
            let target = p.plane + p.side * p.thickness;
            let on = face_local_nodes(el.kind, f)
                .iter()
                .all(|&l| (out.nodes[el.conn[l] as usize][pi] - target).abs() <= tol);
            if on {
                extra_facets.push(BoundaryFacet {
                    element: e,
                    face: f,
                    tag: BoundaryTag::SymPatchOuter(p.axis),
                });
                extra_outer.extend(face_local_nodes(el.kind, f).iter().map(|&l| el.conn[l]));
                break;
            }
        }
    }
    out.boundary_facets.extend(extra_facets);
    if !extra_outer.is_empty() {
        let mut outer = out.node_sets.remove("patch_outer_face").unwrap_or_default();
        outer.extend(extra_outer);
        out.add_node_set("patch_outer_face", outer);
    }
    let mut vol = out.node_sets.remove("patch_volume").unwrap_or_default();
    for (i, nodep) in out.nodes.iter().enumerate() {
        for p in &planes {
            let pi = p.axis.index();
            if p.side * (nodep[pi] - p.plane) >= -tol {
                vol.push(i as u32);
                break;
            }
        }
    }
    out.add_node_set("patch_volume", vol);

    out.validate()?;
    Ok(out)
}

/// Reflect a point through a coordinate plane; the sign vector applies to
/// vector fields sampled at the mirrored point.
pub fn mirror_probe(x: Vec3, axis: Axis, plane: f64) -> (Vec3, [f64; 3]) {
    let mut y = x;
    y[axis.index()] = 2.0 * plane - x[axis.index()];
    let mut signs = [1.0; 3];
    signs[axis.index()] = -1.0;
    (y, signs)
}

// ---------------------------------------------------------------------------
// text format
// ---------------------------------------------------------------------------

/// Write the plain-text mesh format: node, element, facet and set blocks.
pub fn write_mesh<W: Write>(mesh: &Mesh, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "emwave-mesh 1")?;
    writeln!(w, "nodes {}", mesh.nodes.len())?;
    for (i, p) in mesh.nodes.iter().enumerate() {
        writeln!(w, "{i} {:.17e} {:.17e} {:.17e}", p[0], p[1], p[2])?;
    }
    writeln!(w, "elements {}", mesh.elements.len())?;
    for (i, el) in mesh.elements.iter().enumerate() {
        write!(w, "{i} {} {}", el.kind.name(), el.region)?;
        for c in &el.conn {
            write!(w, " {c}")?;
        }
        writeln!(w)?;
    }
    writeln!(w, "facets {}", mesh.boundary_facets.len())?;
    for bf in &mesh.boundary_facets {
        writeln!(w, "{} {} {}", bf.element, bf.face, bf.tag.encode())?;
    }
    for (name, ids) in &mesh.node_sets {
        write!(w, "set {name} {}", ids.len())?;
        for id in ids {
            write!(w, " {id}")?;
        }
        writeln!(w)?;
    }
    for p in &mesh.patches {
        writeln!(
            w,
            "patch {} {:.17e} {} {:.17e}",
            p.axis.name(),
            p.plane,
            p.side,
            p.thickness
        )?;
    }
    Ok(())
}

/// Read the text format written by [`write_mesh`].
pub fn read_mesh<R: BufRead>(r: &mut R) -> Result<Mesh> {
    let mut lines = Vec::new();
    for l in r.lines() {
        lines.push(l.map_err(|e| Error::Format(format!("io: {e}")))?);
    }
    let mut it = lines.iter().map(|s| s.as_str()).enumerate();
    let bad = |ln: usize, msg: &str| Error::Format(format!("line {}: {msg}", ln + 1));
    let (ln, header) = it.next().ok_or_else(|| Error::Format("empty mesh file".into()))?;
    if !header.starts_with("emwave-mesh") {
        return Err(bad(ln, "missing 'emwave-mesh' header"));
    }
    let mut mesh = Mesh::default();
    while let Some((ln, line)) = it.next() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            None => continue,
            Some("nodes") => {
                let count: usize = tok
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(ln, "bad node count"))?;
                for _ in 0..count {
                    let (ln2, l2) = it.next().ok_or_else(|| bad(ln, "truncated node block"))?;
                    let mut t = l2.split_whitespace();
                    let _id: usize = t
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad(ln2, "bad node id"))?;
                    let mut p = [0.0; 3];
                    for v in p.iter_mut() {
                        *v = t
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| bad(ln2, "bad node coordinate"))?;
                    }
                    mesh.nodes.push(p);
                }
            }
            Some("elements") => {
                let count: usize = tok
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(ln, "bad element count"))?;
                for _ in 0..count {
                    let (ln2, l2) = it.next().ok_or_else(|| bad(ln, "truncated element block"))?;
                    let mut t = l2.split_whitespace();
                    let _id: usize = t
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad(ln2, "bad element id"))?;
                    let kind = ElementKind::parse(t.next().ok_or_else(|| bad(ln2, "missing kind"))?)?;
                    let region: u32 = t
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad(ln2, "bad region"))?;
                    let conn: Vec<u32> = t
                        .map(|s| s.parse::<u32>().map_err(|_| bad(ln2, "bad connectivity id")))
                        .collect::<Result<_>>()?;
                    if conn.len() != kind.node_count() {
                        return Err(bad(ln2, "wrong connectivity length"));
                    }
                    mesh.elements.push(Element { kind, conn, region });
                }
            }
            Some("facets") => {
                let count: usize = tok
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(ln, "bad facet count"))?;
                for _ in 0..count {
                    let (ln2, l2) = it.next().ok_or_else(|| bad(ln, "truncated facet block"))?;
                    let mut t = l2.split_whitespace();
                    let element: u32 = t
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad(ln2, "bad facet element"))?;
                    let face: u8 = t
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad(ln2, "bad facet face"))?;
                    let tag = match t.next() {
                        Some("PEC") => BoundaryTag::Pec,
                        Some("ABC") => BoundaryTag::Abc,
                        Some("DIELECTRIC_INTERFACE") => BoundaryTag::DielectricInterface,
                        Some("SYM_PATCH_OUTER") => {
                            let a = Axis::parse(t.next().ok_or_else(|| bad(ln2, "missing axis"))?)?;
                            BoundaryTag::SymPatchOuter(a)
                        }
                        _ => return Err(bad(ln2, "unknown facet tag")),
                    };
                    mesh.boundary_facets.push(BoundaryFacet { element, face, tag });
                }
            }
            Some("set") => {
                let name = tok.next().ok_or_else(|| bad(ln, "missing set name"))?;
                let count: usize = tok
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(ln, "bad set count"))?;
                let ids: Vec<u32> = tok
                    .map(|s| s.parse::<u32>().map_err(|_| bad(ln, "bad set id")))
                    .collect::<Result<_>>()?;
                if ids.len() != count {
                    return Err(bad(ln, "set length mismatch"));
                }
                mesh.node_sets.insert(name.to_string(), ids);
            }
            Some("patch") => {
                let axis = Axis::parse(tok.next().ok_or_else(|| bad(ln, "missing axis"))?)?;
                let plane: f64 = tok
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(ln, "bad plane"))?;
                let side: f64 = tok
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(ln, "bad side"))?;
                let thickness: f64 = tok
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(ln, "bad thickness"))?;
                mesh.patches.push(PatchInfo {
                    axis,
                    plane,
                    side,
                    thickness,
                });
            }
            Some(other) => return Err(bad(ln, &format!("unknown block '{other}'"))),
        }
    }
    Ok(mesh)
}
