//! Reference elements: the 27-node triquadratic hexahedron (B27) and the
//! 18-node quadratic wedge (W18), their shape functions and derivatives,
//! Gauss quadrature rules, and the isoparametric mapping to physical space.
//!
//! B27 lives on [-1,1]^3. W18 is the tensor product of a 6-node quadratic
//! triangle (area coordinates on xi, eta >= 0, xi + eta <= 1) with a 3-node
//! quadratic line on zeta in [-1,1]: 6 vertices, 9 edge midpoints and 3
//! quadrilateral-face centers.

use crate::model::Vec3;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    B27,
    W18,
}

impl ElementKind {
    pub fn node_count(&self) -> usize {
        match self {
            ElementKind::B27 => 27,
            ElementKind::W18 => 18,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ElementKind::B27 => "B27",
            ElementKind::W18 => "W18",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "B27" => Ok(ElementKind::B27),
            "W18" => Ok(ElementKind::W18),
            other => Err(Error::Format(format!("unknown element kind '{other}'"))),
        }
    }
}

/// 1D quadratic Lagrange basis on {-1, 0, +1}.
#[inline]
fn lag3(node: i8, t: f64) -> f64 {
    match node {
        -1 => 0.5 * t * (t - 1.0),
        0 => 1.0 - t * t,
        1 => 0.5 * t * (t + 1.0),
        _ => unreachable!(),
    }
}

#[inline]
fn lag3_d(node: i8, t: f64) -> f64 {
    match node {
        -1 => t - 0.5,
        0 => -2.0 * t,
        1 => t + 0.5,
        _ => unreachable!(),
    }
}

/// T6 node locations in the reference triangle, ordered vertices then
/// edge midpoints.
const T6_NODES: [(f64, f64); 6] = [
    (0.0, 0.0),
    (1.0, 0.0),
    (0.0, 1.0),
    (0.5, 0.0),
    (0.5, 0.5),
    (0.0, 0.5),
];

#[inline]
fn t6_values(xi: f64, eta: f64) -> [f64; 6] {
    let l1 = 1.0 - xi - eta;
    let l2 = xi;
    let l3 = eta;
    [
        l1 * (2.0 * l1 - 1.0),
        l2 * (2.0 * l2 - 1.0),
        l3 * (2.0 * l3 - 1.0),
        4.0 * l1 * l2,
        4.0 * l2 * l3,
        4.0 * l3 * l1,
    ]
}

/// Gradients of the T6 basis with respect to (xi, eta).
#[inline]
fn t6_grads(xi: f64, eta: f64) -> [(f64, f64); 6] {
    let l1 = 1.0 - xi - eta;
    [
        (1.0 - 4.0 * l1, 1.0 - 4.0 * l1),
        (4.0 * xi - 1.0, 0.0),
        (0.0, 4.0 * eta - 1.0),
        (4.0 * (l1 - xi), -4.0 * xi),
        (4.0 * eta, 4.0 * xi),
        (-4.0 * eta, 4.0 * (l1 - eta)),
    ]
}

/// B27 local nodes: each coordinate in {-1, 0, +1}; grouped by the number of
/// zero coordinates (vertices, edge midpoints, face centers, body center),
/// lexicographic within each group.
fn b27_local_nodes() -> Vec<[i8; 3]> {
    let mut groups: [Vec<[i8; 3]>; 4] = [vec![], vec![], vec![], vec![]];
    for &x in &[-1i8, 0, 1] {
        for &y in &[-1i8, 0, 1] {
            for &z in &[-1i8, 0, 1] {
                let zeros = [x, y, z].iter().filter(|v| **v == 0).count();
                groups[zeros].push([x, y, z]);
            }
        }
    }
    // the scan above is already lexicographic within each group
    groups.concat()
}

/// W18 local nodes as (t6 index, line node), grouped into vertices, edge
/// midpoints (triangle-face edges then vertical edges), face centers.
fn w18_local_nodes() -> Vec<(usize, i8)> {
    let mut nodes = Vec::with_capacity(18);
    // vertices: triangle corners at zeta = -1, +1
    for &z in &[-1i8, 1] {
        for c in 0..3 {
            nodes.push((c, z));
        }
    }
    // edge midpoints on the triangular faces
    for &z in &[-1i8, 1] {
        for m in 3..6 {
            nodes.push((m, z));
        }
    }
    // vertical edge midpoints
    for c in 0..3 {
        nodes.push((c, 0));
    }
    // quadrilateral face centers
    for m in 3..6 {
        nodes.push((m, 0));
    }
    nodes
}

/// Reference-element description: node count and reference coordinates.
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    pub kind: ElementKind,
    pub node_local_coords: Vec<Vec3>,
}

impl ReferenceElement {
    pub fn new(kind: ElementKind) -> Self {
        let node_local_coords = match kind {
            ElementKind::B27 => b27_local_nodes()
                .iter()
                .map(|n| [n[0] as f64, n[1] as f64, n[2] as f64])
                .collect(),
            ElementKind::W18 => w18_local_nodes()
                .iter()
                .map(|(c, z)| {
                    let (xi, eta) = T6_NODES[*c];
                    [xi, eta, *z as f64]
                })
                .collect(),
        };
        ReferenceElement {
            kind,
            node_local_coords,
        }
    }
}

/// Shape function values at a reference point.
pub fn shape_values(kind: ElementKind, xi: Vec3) -> Vec<f64> {
    match kind {
        ElementKind::B27 => b27_local_nodes()
            .iter()
            .map(|n| lag3(n[0], xi[0]) * lag3(n[1], xi[1]) * lag3(n[2], xi[2]))
            .collect(),
        ElementKind::W18 => {
            let t = t6_values(xi[0], xi[1]);
            w18_local_nodes()
                .iter()
                .map(|(c, z)| t[*c] * lag3(*z, xi[2]))
                .collect()
        }
    }
}

/// Reference-space gradients of the shape functions at a reference point.
pub fn shape_gradients(kind: ElementKind, xi: Vec3) -> Vec<Vec3> {
    match kind {
        ElementKind::B27 => b27_local_nodes()
            .iter()
            .map(|n| {
                let v = [lag3(n[0], xi[0]), lag3(n[1], xi[1]), lag3(n[2], xi[2])];
                let d = [lag3_d(n[0], xi[0]), lag3_d(n[1], xi[1]), lag3_d(n[2], xi[2])];
                [d[0] * v[1] * v[2], v[0] * d[1] * v[2], v[0] * v[1] * d[2]]
            })
            .collect(),
        ElementKind::W18 => {
            let t = t6_values(xi[0], xi[1]);
            let g = t6_grads(xi[0], xi[1]);
            w18_local_nodes()
                .iter()
                .map(|(c, z)| {
                    let lz = lag3(*z, xi[2]);
                    let dz = lag3_d(*z, xi[2]);
                    [g[*c].0 * lz, g[*c].1 * lz, t[*c] * dz]
                })
                .collect()
        }
    }
}

/// A quadrature rule on the reference element.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<Vec3>,
    pub weights: Vec<f64>,
}

/// Gauss-Legendre points and weights on [-1, 1].
fn gauss_line(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    match order {
        2 => {
            let a = 1.0 / 3.0f64.sqrt();
            Ok((vec![-a, a], vec![1.0, 1.0]))
        }
        3 => {
            let a = (3.0f64 / 5.0).sqrt();
            Ok((vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0]))
        }
        4 => {
            let a = (3.0 / 7.0 - 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
            let b = (3.0 / 7.0 + 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
            let wa = (18.0 + 30.0f64.sqrt()) / 36.0;
            let wb = (18.0 - 30.0f64.sqrt()) / 36.0;
            Ok((vec![-b, -a, a, b], vec![wb, wa, wa, wb]))
        }
        5 => {
            let a = (5.0 - 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
            let b = (5.0 + 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
            let wa = (322.0 + 13.0 * 70.0f64.sqrt()) / 900.0;
            let wb = (322.0 - 13.0 * 70.0f64.sqrt()) / 900.0;
            Ok((vec![-b, -a, 0.0, a, b], vec![wb, wa, 128.0 / 225.0, wa, wb]))
        }
        _ => Err(Error::Config(format!("unsupported quadrature order {order}"))),
    }
}

/// Symmetric triangle rules (weights sum to the triangle area 1/2).
fn triangle_rule(order: usize) -> Result<(Vec<(f64, f64)>, Vec<f64>)> {
    match order {
        2 => {
            // degree 2, 3 points
            let p = vec![
                (1.0 / 6.0, 1.0 / 6.0),
                (2.0 / 3.0, 1.0 / 6.0),
                (1.0 / 6.0, 2.0 / 3.0),
            ];
            Ok((p, vec![1.0 / 6.0; 3]))
        }
        3 | 4 => {
            // degree 5, 7 points
            let a = 0.059_715_871_789_77;
            let b = 0.470_142_064_105_115;
            let c = 0.797_426_985_353_087;
            let d = 0.101_286_507_323_456;
            let w1 = 0.225 / 2.0;
            let w2 = 0.132_394_152_788_506 / 2.0;
            let w3 = 0.125_939_180_544_827 / 2.0;
            let p = vec![
                (1.0 / 3.0, 1.0 / 3.0),
                (a, b),
                (b, a),
                (b, b),
                (c, d),
                (d, c),
                (d, d),
            ];
            Ok((p, vec![w1, w2, w2, w2, w3, w3, w3]))
        }
        5 => {
            // degree 7, 13 points
            let w0 = -0.149_570_044_467_67 / 2.0;
            let w1 = 0.175_615_257_433_204 / 2.0;
            let w2 = 0.053_347_235_608_839 / 2.0;
            let w3 = 0.077_113_760_890_257 / 2.0;
            let a1 = 0.479_308_067_841_923;
            let b1 = 0.260_345_966_079_038;
            let a2 = 0.869_739_794_195_568;
            let b2 = 0.065_130_102_902_216;
            let a3 = 0.638_444_188_569_809;
            let b3 = 0.312_865_496_004_875;
            let c3 = 0.048_690_315_425_316;
            let p = vec![
                (1.0 / 3.0, 1.0 / 3.0),
                (a1, b1),
                (b1, a1),
                (b1, b1),
                (a2, b2),
                (b2, a2),
                (b2, b2),
                (a3, b3),
                (b3, a3),
                (a3, c3),
                (c3, a3),
                (b3, c3),
                (c3, b3),
            ];
            Ok((p, vec![w0, w1, w1, w1, w2, w2, w2, w3, w3, w3, w3, w3, w3]))
        }
        _ => Err(Error::Config(format!("unsupported triangle rule order {order}"))),
    }
}

/// Volume quadrature: tensor Gauss for B27, triangle rule x Gauss line for W18.
pub fn quadrature(kind: ElementKind, order: usize) -> Result<QuadratureRule> {
    match kind {
        ElementKind::B27 => {
            let (p, w) = gauss_line(order)?;
            let mut points = Vec::with_capacity(p.len().pow(3));
            let mut weights = Vec::with_capacity(p.len().pow(3));
            for (i, &xi) in p.iter().enumerate() {
                for (j, &eta) in p.iter().enumerate() {
                    for (k, &zeta) in p.iter().enumerate() {
                        points.push([xi, eta, zeta]);
                        weights.push(w[i] * w[j] * w[k]);
                    }
                }
            }
            Ok(QuadratureRule { points, weights })
        }
        ElementKind::W18 => {
            let (tp, tw) = triangle_rule(order)?;
            let (lp, lw) = gauss_line(order.min(5))?;
            let mut points = Vec::with_capacity(tp.len() * lp.len());
            let mut weights = Vec::with_capacity(tp.len() * lp.len());
            for (t, &wt) in tp.iter().zip(&tw) {
                for (z, &wz) in lp.iter().zip(&lw) {
                    points.push([t.0, t.1, *z]);
                    weights.push(wt * wz);
                }
            }
            Ok(QuadratureRule { points, weights })
        }
    }
}

/// 2D tensor Gauss rule on [-1,1]^2, used for quadrilateral boundary faces.
pub fn quad_face_rule(order: usize) -> Result<(Vec<(f64, f64)>, Vec<f64>)> {
    let (p, w) = gauss_line(order)?;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (i, &a) in p.iter().enumerate() {
        for (j, &b) in p.iter().enumerate() {
            points.push((a, b));
            weights.push(w[i] * w[j]);
        }
    }
    Ok((points, weights))
}

/// Triangle rule re-exported for triangular boundary faces.
pub fn tri_face_rule(order: usize) -> Result<(Vec<(f64, f64)>, Vec<f64>)> {
    triangle_rule(order)
}

/// Physical coordinates of an element's nodes.
#[derive(Debug, Clone)]
pub struct ElementGeometry {
    pub coords: Vec<Vec3>,
}

/// Result of the isoparametric map at one reference point.
#[derive(Debug, Clone)]
pub struct MappedPoint {
    pub x: Vec3,
    pub jacobian: [[f64; 3]; 3],
    pub det_j: f64,
    /// Physical-space shape gradients J^{-T} grad_ref N_i.
    pub grads: Vec<Vec3>,
    /// Shape values, forwarded for convenience.
    pub values: Vec<f64>,
}

fn invert3(m: &[[f64; 3]; 3]) -> ([[f64; 3]; 3], f64) {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let inv_det = 1.0 / det;
    let inv = [
        [
            (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv_det,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det,
        ],
        [
            (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv_det,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det,
        ],
        [
            (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv_det,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det,
        ],
    ];
    (inv, det)
}

/// Evaluate the isoparametric map, its Jacobian and physical gradients.
///
/// `element_id` is used only for error reporting. Returns an error when the
/// Jacobian determinant is not positive.
pub fn map_physical(
    geom: &ElementGeometry,
    kind: ElementKind,
    xi: Vec3,
    element_id: usize,
) -> Result<MappedPoint> {
    let values = shape_values(kind, xi);
    let ref_grads = shape_gradients(kind, xi);
    debug_assert_eq!(geom.coords.len(), kind.node_count());

    let mut x = [0.0; 3];
    // jacobian[a][b] = d x_a / d xi_b
    let mut j = [[0.0; 3]; 3];
    for (i, node) in geom.coords.iter().enumerate() {
        for a in 0..3 {
            x[a] += values[i] * node[a];
            for b in 0..3 {
                j[a][b] += ref_grads[i][b] * node[a];
            }
        }
    }
    let (j_inv, det_j) = invert3(&j);
    if !(det_j > 0.0) || !det_j.is_finite() {
        return Err(Error::DegenerateElement {
            element: element_id,
            detail: format!("det J = {det_j:.3e} at xi = {xi:?}"),
        });
    }
    // physical gradient = J^{-T} * reference gradient
    let grads = ref_grads
        .iter()
        .map(|g| {
            [
                j_inv[0][0] * g[0] + j_inv[1][0] * g[1] + j_inv[2][0] * g[2],
                j_inv[0][1] * g[0] + j_inv[1][1] * g[1] + j_inv[2][1] * g[2],
                j_inv[0][2] * g[0] + j_inv[1][2] * g[1] + j_inv[2][2] * g[2],
            ]
        })
        .collect();
    Ok(MappedPoint {
        x,
        jacobian: j,
        det_j,
        grads,
        values,
    })
}

/// Shape-function tables pre-evaluated at the points of a quadrature rule.
#[derive(Debug, Clone)]
pub struct ShapeTable {
    pub rule: QuadratureRule,
    pub values: Vec<Vec<f64>>,
    pub ref_grads: Vec<Vec<Vec3>>,
}

impl ShapeTable {
    pub fn new(kind: ElementKind, order: usize) -> Result<Self> {
        let rule = quadrature(kind, order)?;
        let values = rule.points.iter().map(|&p| shape_values(kind, p)).collect();
        let ref_grads = rule.points.iter().map(|&p| shape_gradients(kind, p)).collect();
        Ok(ShapeTable {
            rule,
            values,
            ref_grads,
        })
    }

    /// Map one tabulated quadrature point into physical space.
    pub fn map_at(&self, geom: &ElementGeometry, qp: usize, element_id: usize) -> Result<(MappedPoint, f64)> {
        let mut x = [0.0; 3];
        let mut j = [[0.0; 3]; 3];
        let values = &self.values[qp];
        let ref_grads = &self.ref_grads[qp];
        for (i, node) in geom.coords.iter().enumerate() {
            for a in 0..3 {
                x[a] += values[i] * node[a];
                for b in 0..3 {
                    j[a][b] += ref_grads[i][b] * node[a];
                }
            }
        }
        let (j_inv, det_j) = invert3(&j);
        if !(det_j > 0.0) || !det_j.is_finite() {
            return Err(Error::DegenerateElement {
                element: element_id,
                detail: format!("det J = {det_j:.3e} at quadrature point {qp}"),
            });
        }
        let grads = ref_grads
            .iter()
            .map(|g| {
                [
                    j_inv[0][0] * g[0] + j_inv[1][0] * g[1] + j_inv[2][0] * g[2],
                    j_inv[0][1] * g[0] + j_inv[1][1] * g[1] + j_inv[2][1] * g[2],
                    j_inv[0][2] * g[0] + j_inv[1][2] * g[1] + j_inv[2][2] * g[2],
                ]
            })
            .collect();
        let w = self.rule.weights[qp] * det_j;
        Ok((
            MappedPoint {
                x,
                jacobian: j,
                det_j,
                grads,
                values: values.clone(),
            },
            w,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{dot, norm, sub};

    const KINDS: [ElementKind; 2] = [ElementKind::B27, ElementKind::W18];

    #[test]
    fn kronecker_property() {
        for kind in KINDS {
            let re = ReferenceElement::new(kind);
            for (i, &xi) in re.node_local_coords.iter().enumerate() {
                let vals = shape_values(kind, xi);
                for (j, v) in vals.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (v - expect).abs() < 1e-13,
                        "{kind:?}: N_{j}({xi:?}) = {v}, node {i}"
                    );
                }
            }
        }
    }

    #[test]
    fn b27_center_node() {
        let vals = shape_values(ElementKind::B27, [0.0, 0.0, 0.0]);
        assert!((vals[26] - 1.0).abs() < 1e-14);
        for v in &vals[..26] {
            assert!(v.abs() < 1e-14);
        }
    }

    fn sample_points(kind: ElementKind) -> Vec<Vec3> {
        match kind {
            ElementKind::B27 => vec![
                [0.3, -0.7, 0.1],
                [-0.9, 0.2, 0.8],
                [0.5, 0.5, -0.5],
                [0.0, 0.99, -0.01],
            ],
            ElementKind::W18 => vec![
                [0.2, 0.3, 0.4],
                [0.1, 0.05, -0.7],
                [0.6, 0.3, 0.9],
                [0.33, 0.33, 0.0],
            ],
        }
    }

    #[test]
    fn partition_of_unity() {
        for kind in KINDS {
            for xi in sample_points(kind) {
                let s: f64 = shape_values(kind, xi).iter().sum();
                assert!((s - 1.0).abs() < 1e-13, "{kind:?} at {xi:?}: sum = {s}");
                let g = shape_gradients(kind, xi);
                let mut gs = [0.0; 3];
                for gi in &g {
                    for a in 0..3 {
                        gs[a] += gi[a];
                    }
                }
                assert!(norm(gs) < 1e-12, "{kind:?} gradient sum {gs:?}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = 1e-5;
        for kind in KINDS {
            for xi in sample_points(kind) {
                let g = shape_gradients(kind, xi);
                for a in 0..3 {
                    let mut xp = xi;
                    let mut xm = xi;
                    xp[a] += h;
                    xm[a] -= h;
                    let vp = shape_values(kind, xp);
                    let vm = shape_values(kind, xm);
                    for i in 0..kind.node_count() {
                        let fd = (vp[i] - vm[i]) / (2.0 * h);
                        assert!(
                            (fd - g[i][a]).abs() < 1e-7,
                            "{kind:?} node {i} axis {a}: {fd} vs {}",
                            g[i][a]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn quadratic_completeness() {
        // quadratic polynomials are reproduced exactly by nodal interpolation
        let polys: Vec<Box<dyn Fn(Vec3) -> f64>> = vec![
            Box::new(|_| 1.0),
            Box::new(|x| x[0]),
            Box::new(|x| x[2]),
            Box::new(|x| x[0] * x[0]),
            Box::new(|x| x[1] * x[1] - 0.5 * x[2] * x[2]),
            Box::new(|x| x[0] * x[1]),
            Box::new(|x| x[1] * x[2] + 0.25 * x[0]),
            Box::new(|x| 2.0 * x[0] * x[2] - x[1]),
        ];
        let mut rng = 88172645463325252u64;
        let mut next = move || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng >> 11) as f64 / (1u64 << 53) as f64
        };
        for kind in KINDS {
            let re = ReferenceElement::new(kind);
            for _ in 0..50 {
                let xi = match kind {
                    ElementKind::B27 => [2.0 * next() - 1.0, 2.0 * next() - 1.0, 2.0 * next() - 1.0],
                    ElementKind::W18 => {
                        let (mut a, mut b) = (next(), next());
                        if a + b > 1.0 {
                            a = 1.0 - a;
                            b = 1.0 - b;
                        }
                        [a, b, 2.0 * next() - 1.0]
                    }
                };
                let vals = shape_values(kind, xi);
                for p in &polys {
                    let interp: f64 = re
                        .node_local_coords
                        .iter()
                        .zip(&vals)
                        .map(|(xn, v)| p(*xn) * v)
                        .sum();
                    assert!(
                        (interp - p(xi)).abs() < 1e-10,
                        "{kind:?} at {xi:?}: {interp} vs {}",
                        p(xi)
                    );
                }
            }
        }
    }

    #[test]
    fn linear_reference_field_has_constant_gradient() {
        let re = ReferenceElement::new(ElementKind::B27);
        for xi in sample_points(ElementKind::B27) {
            let g = shape_gradients(ElementKind::B27, xi);
            let mut grad = [0.0; 3];
            for (i, xn) in re.node_local_coords.iter().enumerate() {
                for a in 0..3 {
                    grad[a] += xn[0] * g[i][a]; // f = xi_1
                }
            }
            assert!(norm(sub(grad, [1.0, 0.0, 0.0])) < 1e-12);
        }
    }

    #[test]
    fn hex_quadrature_volume_and_monomials() {
        for order in [2, 3, 4] {
            let rule = quadrature(ElementKind::B27, order).unwrap();
            let vol: f64 = rule.weights.iter().sum();
            assert!((vol - 8.0).abs() < 1e-12, "order {order}: vol = {vol}");
        }
        // order 3 integrates xi^2 eta^2 zeta^2 exactly: (2/3)^3 = 8/27
        let rule = quadrature(ElementKind::B27, 3).unwrap();
        let v: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(p, w)| w * p[0] * p[0] * p[1] * p[1] * p[2] * p[2])
            .sum();
        assert!((v - 8.0 / 27.0).abs() < 1e-13);
    }

    #[test]
    fn hex_order3_exact_for_degree5() {
        let rule = quadrature(ElementKind::B27, 3).unwrap();
        // per-axis exactness up to degree 5: odd powers integrate to 0,
        // even powers to 2/(p+1); the other two axes contribute a factor 4
        for p in 0..=5usize {
            let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
            let num: f64 = rule
                .points
                .iter()
                .zip(&rule.weights)
                .map(|(x, w)| w * x[0].powi(p as i32))
                .sum::<f64>()
                / 4.0;
            assert!((num - exact).abs() <= 1e-12 * (1.0 + exact.abs()), "degree {p}: {num} vs {exact}");
        }
    }

    #[test]
    fn wedge_quadrature_volume() {
        for order in [2, 3, 4] {
            let rule = quadrature(ElementKind::W18, order).unwrap();
            let vol: f64 = rule.weights.iter().sum();
            assert!((vol - 1.0).abs() < 1e-12, "order {order}: vol = {vol}");
        }
        // degree check: integrate xi^2 eta^2 over triangle x line
        // int_T xi^2 eta^2 dA = 1/180; times line length 2
        let rule = quadrature(ElementKind::W18, 3).unwrap();
        let v: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(p, w)| w * p[0] * p[0] * p[1] * p[1])
            .sum();
        assert!((v - 2.0 / 180.0).abs() < 1e-13, "{v}");
    }

    fn identity_hex() -> ElementGeometry {
        let re = ReferenceElement::new(ElementKind::B27);
        ElementGeometry {
            coords: re.node_local_coords.clone(),
        }
    }

    #[test]
    fn identity_map_unit_jacobian() {
        let geom = identity_hex();
        let m = map_physical(&geom, ElementKind::B27, [0.3, -0.2, 0.5], 0).unwrap();
        assert!((m.det_j - 1.0).abs() < 1e-13);
        for a in 0..3 {
            for b in 0..3 {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((m.jacobian[a][b] - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn uniform_scaling_jacobian() {
        let s = 2.5;
        let re = ReferenceElement::new(ElementKind::B27);
        let geom = ElementGeometry {
            coords: re.node_local_coords.iter().map(|x| [s * x[0], s * x[1], s * x[2]]).collect(),
        };
        let m = map_physical(&geom, ElementKind::B27, [0.1, 0.7, -0.3], 0).unwrap();
        assert!((m.det_j - s * s * s).abs() < 1e-10);
    }

    #[test]
    fn degenerate_element_detected() {
        // collapse all nodes onto a plane
        let re = ReferenceElement::new(ElementKind::B27);
        let geom = ElementGeometry {
            coords: re.node_local_coords.iter().map(|x| [x[0], x[1], 0.0]).collect(),
        };
        assert!(map_physical(&geom, ElementKind::B27, [0.0; 3], 7).is_err());
    }

    /// Spherical-shell sector element: quadrature volume vs the exact sector volume.
    #[test]
    fn spherical_sector_volume() {
        let (r0, r1) = (1.0, 1.5);
        let (t0, t1) = (0.4, 0.7);
        let (p0, p1) = (0.1, 0.35);
        let re = ReferenceElement::new(ElementKind::B27);
        let coords: Vec<Vec3> = re
            .node_local_coords
            .iter()
            .map(|xi| {
                let r = r0 + (xi[0] + 1.0) / 2.0 * (r1 - r0);
                let th = t0 + (xi[1] + 1.0) / 2.0 * (t1 - t0);
                let ph = p0 + (xi[2] + 1.0) / 2.0 * (p1 - p0);
                [r * th.sin() * ph.cos(), r * th.sin() * ph.sin(), r * th.cos()]
            })
            .collect();
        let geom = ElementGeometry { coords };
        let table = ShapeTable::new(ElementKind::B27, 3).unwrap();
        let mut vol = 0.0;
        for qp in 0..table.rule.points.len() {
            let (_, w) = table.map_at(&geom, qp, 0).unwrap();
            vol += w;
        }
        let exact = (r1.powi(3) - r0.powi(3)) / 3.0 * (t0.cos() - t1.cos()) * (p1 - p0);
        assert!(
            ((vol - exact) / exact).abs() < 5e-3,
            "vol {vol} vs exact {exact}"
        );
    }

    #[test]
    fn physical_gradient_of_linear_field() {
        // a skewed element: gradient of g(x) = a.x must equal a at all qp
        let a = [0.3, -1.2, 0.7];
        let re = ReferenceElement::new(ElementKind::W18);
        let coords: Vec<Vec3> = re
            .node_local_coords
            .iter()
            .map(|xi| {
                [
                    1.2 * xi[0] + 0.2 * xi[1] + 0.1 * xi[2],
                    0.9 * xi[1] - 0.15 * xi[2] + 0.05 * xi[0] * 0.0,
                    0.8 * xi[2] + 0.3 * xi[0],
                ]
            })
            .collect();
        let geom = ElementGeometry { coords };
        let table = ShapeTable::new(ElementKind::W18, 3).unwrap();
        for qp in 0..table.rule.points.len() {
            let (m, _) = table.map_at(&geom, qp, 0).unwrap();
            let nodal: Vec<f64> = geom.coords.iter().map(|x| dot(a, *x)).collect();
            let mut grad = [0.0; 3];
            for i in 0..nodal.len() {
                for c in 0..3 {
                    grad[c] += nodal[i] * m.grads[i][c];
                }
            }
            assert!(norm(sub(grad, a)) < 1e-9 * norm(a));
        }
    }
}
