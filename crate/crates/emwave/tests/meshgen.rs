//! Mesh generator checks: node/element counts, tagging, Jacobians,
//! watertightness, patch extrusion and the text round trip.

use emwave::elements::{ElementKind, ShapeTable};
use emwave::meshgen::*;
use emwave::model::{norm, sub};
use std::f64::consts::PI;

fn volume(mesh: &Mesh) -> f64 {
    let t27 = ShapeTable::new(ElementKind::B27, 3).unwrap();
    let t18 = ShapeTable::new(ElementKind::W18, 3).unwrap();
    let mut vol = 0.0;
    for (e, el) in mesh.elements.iter().enumerate() {
        let geom = mesh.element_geometry(e);
        let t = match el.kind {
            ElementKind::B27 => &t27,
            ElementKind::W18 => &t18,
        };
        for qp in 0..t.rule.points.len() {
            let (_, w) = t.map_at(&geom, qp, e).unwrap();
            vol += w;
        }
    }
    vol
}

#[test]
fn cuboid_counts_and_volume() {
    let m = gen_cuboid([0.0; 3], [PI, PI, PI], [4, 4, 4]).unwrap();
    assert_eq!(m.nodes.len(), 9 * 9 * 9);
    assert_eq!(m.elements.len(), 64);
    m.validate().unwrap();
    let v = volume(&m);
    assert!(((v - PI.powi(3)) / PI.powi(3)).abs() < 1e-12);

    let m1 = gen_cuboid([0.0; 3], [1.0, 1.0, 1.0], [1, 1, 1]).unwrap();
    assert_eq!(m1.nodes.len(), 27);
}

#[test]
fn cuboid_rejects_bad_divisions() {
    assert!(gen_cuboid([0.0; 3], [1.0, 1.0, 1.0], [0, 1, 1]).is_err());
    assert!(gen_cuboid([0.0; 3], [1.0, -1.0, 1.0], [1, 1, 1]).is_err());
}

#[test]
fn spherical_shell_basic() {
    let m = gen_spherical_shell(1.0, 5.0, 3, 4, 6, AngularSpan::Full, BoundaryTag::Pec).unwrap();
    m.validate().unwrap();
    // element count: nr * ntheta * nphi, wedge rings included
    assert_eq!(m.elements.len(), 3 * 4 * 6);
    let wedges = m
        .elements
        .iter()
        .filter(|e| e.kind == ElementKind::W18)
        .count();
    assert_eq!(wedges, 3 * 2 * 6);
    // all nodes within [a, R] radius, with surface nodes exactly on them
    let mut rmin = f64::INFINITY;
    let mut rmax: f64 = 0.0;
    for p in &m.nodes {
        let r = norm(*p);
        rmin = rmin.min(r);
        rmax = rmax.max(r);
    }
    assert!((rmin - 1.0).abs() < 1e-12);
    assert!((rmax - 5.0).abs() < 1e-12);
    // shell volume to a few tenths of a percent at this resolution
    let exact = 4.0 / 3.0 * PI * (125.0 - 1.0);
    assert!(((volume(&m) - exact) / exact).abs() < 1.5e-2);
    // tags: PEC on inner surface nodes (r = a), ABC on outer
    for nid in m.facet_nodes(|t| t == BoundaryTag::Pec) {
        assert!((norm(m.nodes[nid as usize]) - 1.0).abs() < 1e-12);
    }
    for nid in m.facet_nodes(|t| t == BoundaryTag::Abc) {
        assert!((norm(m.nodes[nid as usize]) - 5.0).abs() < 1e-12);
    }
}

#[test]
fn half_shell_symmetry_plane() {
    let m = gen_spherical_shell(1.0, 5.0, 2, 3, 3, AngularSpan::Half, BoundaryTag::Pec).unwrap();
    m.validate().unwrap();
    let plane = m.node_set("symmetry_plane").unwrap();
    assert!(!plane.is_empty());
    for &nid in plane {
        assert!(m.nodes[nid as usize][1].abs() <= 1e-12);
    }
    // half volume
    let exact = 2.0 / 3.0 * PI * 124.0;
    assert!(((volume(&m) - exact) / exact).abs() < 2e-2);
}

#[test]
fn table1_half_mesh_node_count() {
    // 16x12x12 half shell: 33 layers x (21*25 + 2*13 + 2) nodes per layer
    let m = gen_spherical_shell(1.0, 5.0, 16, 12, 12, AngularSpan::Half, BoundaryTag::Pec).unwrap();
    let per_layer = 21 * 25 + 2 * 13 + 2;
    assert_eq!(m.nodes.len(), 33 * per_layer);
    assert_eq!(m.elements.len(), 16 * 12 * 12);
    // at this resolution the quadratic geometry is accurate to ~1e-4
    let exact = 2.0 / 3.0 * PI * 124.0;
    assert!(((volume(&m) - exact) / exact).abs() < 1e-3);
}

#[test]
fn ellipsoid_degenerates_to_sphere() {
    let e = gen_ellipsoidal_shell(1.0, 1.0, 5.0, 2, 3, 4, AngularSpan::Half).unwrap();
    let s = gen_spherical_shell(1.0, 5.0, 2, 3, 4, AngularSpan::Half, BoundaryTag::Pec).unwrap();
    assert_eq!(e.nodes.len(), s.nodes.len());
    for (a, b) in e.nodes.iter().zip(&s.nodes) {
        assert!(norm(sub(*a, *b)) <= 1e-12);
    }
}

#[test]
fn ellipsoid_inner_surface_on_ellipsoid() {
    let (a, c) = (2.0, 0.5);
    let m = gen_ellipsoidal_shell(a, c, 6.0, 2, 5, 4, AngularSpan::Full).unwrap();
    m.validate().unwrap();
    for nid in m.facet_nodes(|t| t == BoundaryTag::Pec) {
        let p = m.nodes[nid as usize];
        let q = p[0] * p[0] / (a * a) + p[1] * p[1] / (a * a) + p[2] * p[2] / (c * c);
        assert!((q - 1.0).abs() < 1e-10, "off-ellipsoid node: {p:?}");
    }
    assert!(gen_ellipsoidal_shell(2.0, 0.5, 1.5, 2, 5, 4, AngularSpan::Full).is_err());
}

#[test]
fn solid_ball_volume_and_interface() {
    let m = gen_solid_ball(1.0, 2.0, 2, 2, 4, 6, AngularSpan::Full).unwrap();
    m.validate().unwrap();
    let exact = 4.0 / 3.0 * PI * 8.0;
    assert!(((volume(&m) - exact) / exact).abs() < 1.5e-2, "vol {}", volume(&m));
    // interface facets at r = a on region-1 elements
    for nid in m.facet_nodes(|t| t == BoundaryTag::DielectricInterface) {
        assert!((norm(m.nodes[nid as usize]) - 1.0).abs() < 1e-12);
    }
    // region split: elements inside r < a are region 1
    let inner = m.elements.iter().filter(|e| e.region == 1).count();
    assert_eq!(inner, 2 * 4 * 6);
}

#[test]
fn thin_patch_on_half_shell() {
    let m = gen_spherical_shell(1.0, 5.0, 2, 3, 3, AngularSpan::Half, BoundaryTag::Pec).unwrap();
    let nodes_before = m.nodes.len();
    let t = 0.01;
    let p = attach_thin_patch(&m, Axis::Y, 0.0, -1.0, t).unwrap();
    p.validate().unwrap();
    // original nodes untouched
    for i in 0..nodes_before {
        assert_eq!(m.nodes[i], p.nodes[i]);
    }
    // patch adds one annulus of B27: nr x (2 ntheta) elements
    assert_eq!(p.elements.len(), m.elements.len() + 2 * (2 * 3));
    // new node count: 2 sheets x flat-face nodes
    let face_nodes = m.node_set("symmetry_plane").unwrap().len();
    assert_eq!(p.nodes.len(), nodes_before + 2 * face_nodes);
    // outer face nodes at distance t from the plane
    for &nid in p.node_set("patch_outer_face").unwrap() {
        assert!((p.nodes[nid as usize][1] + t).abs() <= 1e-12);
    }
    // patch volume includes the original plane nodes
    let vol_set = p.node_set("patch_volume").unwrap();
    for &nid in m.node_set("symmetry_plane").unwrap() {
        assert!(vol_set.binary_search(&nid).is_ok());
    }
    // SYM_PATCH_OUTER facets tagged with the y axis
    let outer_facets = p
        .boundary_facets
        .iter()
        .filter(|f| matches!(f.tag, BoundaryTag::SymPatchOuter(Axis::Y)))
        .count();
    assert_eq!(outer_facets, 2 * (2 * 3));
    assert!(attach_thin_patch(&m, Axis::Y, 0.0, -1.0, 0.0).is_err());
}

#[test]
fn quarter_cavity_two_patches() {
    // quarter cube pi/2 x pi x pi/2, symmetric planes x = pi/2 and z = pi/2
    let t = 0.01;
    let m = gen_cuboid([0.0; 3], [PI / 2.0, PI, PI / 2.0], [2, 4, 2]).unwrap();
    assert_eq!(m.elements.len(), 16);
    let m = attach_thin_patch(&m, Axis::X, PI / 2.0, 1.0, t).unwrap();
    let m = attach_thin_patch(&m, Axis::Z, PI / 2.0, 1.0, t).unwrap();
    m.validate().unwrap();
    // 16 + (1x4x2) + (2x4x1) + (1x4x1) = 36 elements
    assert_eq!(m.elements.len(), 36);
    assert_eq!(m.nodes.len(), 441);
    // every boundary face on x = pi/2 + t (including the corner block's)
    // carries the x tag
    let outer_x: Vec<_> = m
        .boundary_facets
        .iter()
        .filter(|f| matches!(f.tag, BoundaryTag::SymPatchOuter(Axis::X)))
        .collect();
    // full extended cross-section: 4 (y) x 3 (z: 2 + patch) element faces
    assert_eq!(outer_x.len(), 12);
    let outer_z = m
        .boundary_facets
        .iter()
        .filter(|f| matches!(f.tag, BoundaryTag::SymPatchOuter(Axis::Z)))
        .count();
    assert_eq!(outer_z, 12);
}

#[test]
fn patch_on_solid_ball_disc() {
    let m = gen_solid_ball(1.0, 2.0, 1, 1, 3, 2, AngularSpan::Half).unwrap();
    let p = attach_thin_patch(&m, Axis::Y, 0.0, -1.0, 0.02).unwrap();
    p.validate().unwrap();
    // disc of (nr_in + nr_out) x 2 ntheta faces
    assert_eq!(p.elements.len(), m.elements.len() + 2 * (2 * 3));
}

#[test]
fn half_plus_mirror_matches_full() {
    let half = gen_spherical_shell(1.0, 5.0, 2, 3, 3, AngularSpan::Half, BoundaryTag::Pec).unwrap();
    let full = gen_spherical_shell(1.0, 5.0, 2, 3, 6, AngularSpan::Full, BoundaryTag::Pec).unwrap();
    // every full-mesh node must match a half node or a mirrored half node
    let tol = 1e-12 * 5.0;
    let key = |p: &[f64; 3]| {
        (
            (p[0] / tol).round() as i64 / 16,
            (p[1] / tol).round() as i64 / 16,
            (p[2] / tol).round() as i64 / 16,
        )
    };
    let mut set = std::collections::HashSet::new();
    for p in &half.nodes {
        set.insert(key(p));
        let (q, _) = mirror_probe(*p, Axis::Y, 0.0);
        set.insert(key(&q));
    }
    for p in &full.nodes {
        assert!(set.contains(&key(p)), "unmatched full node {p:?}");
    }
    assert_eq!(full.nodes.len(), 2 * half.nodes.len() - half.node_set("symmetry_plane").unwrap().len());
}

#[test]
fn mirror_probe_signs() {
    let ((x, signs), p) = (mirror_probe([1.0, 2.0, 3.0], Axis::Y, 0.0), ());
    let _ = p;
    assert_eq!(x, [1.0, -2.0, 3.0]);
    assert_eq!(signs, [1.0, -1.0, 1.0]);
    // a point on the plane maps to itself
    let (y, _) = mirror_probe([1.0, 0.0, 3.0], Axis::Y, 0.0);
    assert_eq!(y, [1.0, 0.0, 3.0]);
}

#[test]
fn text_round_trip() {
    let m = gen_spherical_shell(1.0, 5.0, 2, 3, 3, AngularSpan::Half, BoundaryTag::Pec).unwrap();
    let m = attach_thin_patch(&m, Axis::Y, 0.0, -1.0, 0.01).unwrap();
    let mut buf = Vec::new();
    write_mesh(&m, &mut buf).unwrap();
    let back = read_mesh(&mut std::io::BufReader::new(&buf[..])).unwrap();
    assert_eq!(back.nodes.len(), m.nodes.len());
    assert_eq!(back.elements.len(), m.elements.len());
    assert_eq!(back.boundary_facets.len(), m.boundary_facets.len());
    assert_eq!(back.node_sets.len(), m.node_sets.len());
    for (a, b) in back.nodes.iter().zip(&m.nodes) {
        assert!(norm(sub(*a, *b)) < 1e-15);
    }
    back.validate().unwrap();
    // malformed input: empty file
    assert!(read_mesh(&mut std::io::BufReader::new(&b""[..])).is_err());
}
