//! Triangle meshes: OBJ input, reference shapes, and conversion to a
//! signed distance grid.

use std::fs;
use std::path::Path;

use crate::{par, Error, Point3, Result, VoxelGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::Validation("non-finite vertex".into()));
        }
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= vertices.len())) {
            return Err(Error::Validation(format!(
                "triangle {t:?} indexes past {} vertices",
                vertices.len()
            )));
        }
        Ok(Self { vertices, triangles })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn corners(&self, tri: usize) -> [Point3; 3] {
        self.triangles[tri].map(|i| self.vertices[i])
    }

    pub fn triangle_area(&self, tri: usize) -> f64 {
        let [a, b, c] = self.corners(tri);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Parses `v` and `f` records. Faces may use `i/t/n` syntax and
    /// negative (relative) indices but must be triangles; other records are
    /// ignored. Error offsets are byte positions in `text`.
    pub fn parse_obj(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let mut offset = 0;
        for raw in text.split_inclusive('\n') {
            let at = offset;
            offset += raw.len();
            let mut it = raw.split_whitespace();
            match it.next() {
                Some("v") => {
                    let c: Vec<f64> = it
                        .take(3)
                        .map(str::parse)
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::format(at, "bad vertex coordinate"))?;
                    if c.len() != 3 {
                        return Err(Error::format(at, "vertex needs 3 coordinates"));
                    }
                    vertices.push(Point3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let refs: Vec<&str> = it.collect();
                    if refs.len() != 3 {
                        return Err(Error::format(at, format!("face has {} vertices, expected 3", refs.len())));
                    }
                    let mut tri = [0usize; 3];
                    for (k, r) in refs.iter().enumerate() {
                        let idx: i64 = r
                            .split('/')
                            .next()
                            .unwrap_or("")
                            .parse()
                            .map_err(|_| Error::format(at, format!("bad face index `{r}`")))?;
                        let resolved = match idx {
                            i if i > 0 => i - 1,
                            i if i < 0 => vertices.len() as i64 + i,
                            _ => return Err(Error::format(at, "face index 0")),
                        };
                        if resolved < 0 || resolved as usize >= vertices.len() {
                            return Err(Error::format(at, format!("face index {idx} out of range")));
                        }
                        tri[k] = resolved as usize;
                    }
                    triangles.push(tri);
                }
                _ => {}
            }
        }
        Self::new(vertices, triangles)
    }

    pub fn load_obj(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_obj(&fs::read_to_string(path)?)
    }

    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            s.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
        }
        for t in &self.triangles {
            s.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
        s
    }

    /// Axis-aligned cube of side `side` centered at the origin, outward
    /// winding.
    pub fn cube(side: f64) -> Self {
        let h = 0.5 * side;
        let vertices = (0..8)
            .map(|i| {
                Point3::new(
                    if i & 1 == 0 { -h } else { h },
                    if i & 2 == 0 { -h } else { h },
                    if i & 4 == 0 { -h } else { h },
                )
            })
            .collect();
        let quads = [
            [0, 2, 3, 1], // -z
            [4, 5, 7, 6], // +z
            [0, 1, 5, 4], // -y
            [2, 6, 7, 3], // +y
            [0, 4, 6, 2], // -x
            [1, 3, 7, 5], // +x
        ];
        let triangles = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        Self { vertices, triangles }
    }

    pub fn unit_cube() -> Self {
        Self::cube(1.0)
    }

    /// Subdivided icosahedron with all vertices on the sphere of `radius`.
    pub fn icosphere(radius: f64, subdivisions: usize) -> Self {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let mut vertices: Vec<Point3> = [
            (-1.0, phi, 0.0), (1.0, phi, 0.0), (-1.0, -phi, 0.0), (1.0, -phi, 0.0),
            (0.0, -1.0, phi), (0.0, 1.0, phi), (0.0, -1.0, -phi), (0.0, 1.0, -phi),
            (phi, 0.0, -1.0), (phi, 0.0, 1.0), (-phi, 0.0, -1.0), (-phi, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Point3::new(x, y, z).normalize())
        .collect();
        let mut triangles: Vec<[usize; 3]> = vec![
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut mid = std::collections::HashMap::new();
            let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Point3>| {
                *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                    verts.len() - 1
                })
            };
            let mut next = Vec::with_capacity(4 * triangles.len());
            for [a, b, c] in triangles {
                let ab = midpoint(a, b, &mut vertices);
                let bc = midpoint(b, c, &mut vertices);
                let ca = midpoint(c, a, &mut vertices);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            triangles = next;
        }
        for v in &mut vertices {
            *v *= radius;
        }
        Self { vertices, triangles }
    }

    /// Inside/outside classification of every node of a lattice by ray
    /// parity along +x, +y and +z, decided by majority. Also returns the
    /// fraction of nodes on which the three rays disagree.
    pub fn lattice_inside(&self, dims: [usize; 3], origin: Point3, spacing: f64) -> (Vec<bool>, f64) {
        let n: usize = dims.iter().product();
        let votes: [Vec<bool>; 3] = [0, 1, 2].map(|axis| self.axis_parity(axis, dims, origin, spacing));
        let mut inside = Vec::with_capacity(n);
        let mut disagree = 0usize;
        for i in 0..n {
            let c = votes.iter().filter(|v| v[i]).count();
            if c != 0 && c != 3 {
                disagree += 1;
            }
            inside.push(c >= 2);
        }
        (inside, disagree as f64 / n.max(1) as f64)
    }

    /// Parity along lattice lines parallel to `axis`. Lines are shifted by a
    /// tiny irrational offset so they do not pass through mesh edges or
    /// vertices that sit on lattice coordinates.
    fn axis_parity(&self, axis: usize, dims: [usize; 3], origin: Point3, h: f64) -> Vec<bool> {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        let jitter = [h * 1.234_567e-5 * std::f64::consts::SQRT_2, h * 0.987_654e-5 * std::f64::consts::PI];
        let line_u = |k: usize| origin[u] + k as f64 * h + jitter[0];
        let line_v = |k: usize| origin[v] + k as f64 * h + jitter[1];
        let (nu, nv) = (dims[u], dims[v]);

        let hits_per_tri = par::map_range(self.triangles.len(), |t| {
            let p = self.corners(t);
            let mut out = Vec::new();
            let (umin, umax) = (p[0][u].min(p[1][u]).min(p[2][u]), p[0][u].max(p[1][u]).max(p[2][u]));
            let (vmin, vmax) = (p[0][v].min(p[1][v]).min(p[2][v]), p[0][v].max(p[1][v]).max(p[2][v]));
            let k_range = |lo: f64, hi: f64, o: f64, j: f64, n: usize| {
                let a = ((lo - o - j) / h).ceil().max(0.0);
                let b = ((hi - o - j) / h).floor().min(n as f64 - 1.0);
                (a as i64, b as i64)
            };
            let (ku0, ku1) = k_range(umin, umax, origin[u], jitter[0], nu);
            let (kv0, kv1) = k_range(vmin, vmax, origin[v], jitter[1], nv);
            for ku in ku0..=ku1 {
                for kv in kv0..=kv1 {
                    let q = (line_u(ku as usize), line_v(kv as usize));
                    if let Some(w) = crossing(&p, u, v, axis, q) {
                        out.push((ku as usize + nu * kv as usize, w));
                    }
                }
            }
            out
        });
        let mut lines: Vec<Vec<f64>> = vec![Vec::new(); nu * nv];
        for hits in hits_per_tri {
            for (line, w) in hits {
                lines[line].push(w);
            }
        }
        let n: usize = dims.iter().product();
        let mut inside = vec![false; n];
        let stride = |a: usize| match a {
            0 => 1,
            1 => dims[0],
            _ => dims[0] * dims[1],
        };
        for kv in 0..nv {
            for ku in 0..nu {
                let line = &mut lines[ku + nu * kv];
                if line.is_empty() {
                    continue;
                }
                line.sort_by(f64::total_cmp);
                let base = ku * stride(u) + kv * stride(v);
                let mut next = 0;
                for k in 0..dims[axis] {
                    let w = origin[axis] + k as f64 * h;
                    while next < line.len() && line[next] <= w {
                        next += 1;
                    }
                    // crossings remaining in the +axis direction
                    inside[base + k * stride(axis)] = (line.len() - next) % 2 == 1;
                }
            }
        }
        inside
    }
}

/// Coordinate along `axis` where the line `(u, v) = q` pierces the triangle,
/// if it does.
fn crossing(p: &[Point3; 3], u: usize, v: usize, axis: usize, q: (f64, f64)) -> Option<f64> {
    let e = |a: &Point3, b: &Point3| (b[u] - a[u]) * (q.1 - a[v]) - (b[v] - a[v]) * (q.0 - a[u]);
    let w0 = e(&p[1], &p[2]);
    let w1 = e(&p[2], &p[0]);
    let w2 = e(&p[0], &p[1]);
    let area = w0 + w1 + w2;
    if area == 0.0 {
        return None;
    }
    let inside = (w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0) || (w0 <= 0.0 && w1 <= 0.0 && w2 <= 0.0);
    inside.then(|| (w0 * p[0][axis] + w1 * p[1][axis] + w2 * p[2][axis]) / area)
}

/// Closest point on triangle `abc` to `p`.
fn closest_on_triangle(p: &Point3, a: &Point3, b: &Point3, c: &Point3) -> Point3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Bounding volume hierarchy over triangles for nearest-distance queries.
struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

struct Node {
    lo: Point3,
    hi: Point3,
    /// Leaf: `[start, end)` into `order`; inner: children indices.
    kind: NodeKind,
}

enum NodeKind {
    Leaf(usize, usize),
    Inner(usize, usize),
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    fn build(mesh: &TriangleMesh) -> Self {
        let centroids: Vec<Point3> = (0..mesh.triangles.len())
            .map(|t| {
                let [a, b, c] = mesh.corners(t);
                (a + b + c) / 3.0
            })
            .collect();
        let mut bvh = Self {
            nodes: Vec::new(),
            order: (0..mesh.triangles.len()).collect(),
        };
        if !bvh.order.is_empty() {
            bvh.split(mesh, &centroids, 0, mesh.triangles.len());
        }
        bvh
    }

    fn split(&mut self, mesh: &TriangleMesh, centroids: &[Point3], start: usize, end: usize) -> usize {
        let mut lo = Point3::repeat(f64::INFINITY);
        let mut hi = Point3::repeat(f64::NEG_INFINITY);
        for &t in &self.order[start..end] {
            for p in mesh.corners(t) {
                lo = lo.inf(&p);
                hi = hi.sup(&p);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            kind: NodeKind::Leaf(start, end),
        });
        if end - start > LEAF_SIZE {
            let ext = hi - lo;
            let axis = ext.imax();
            let mid = (start + end) / 2;
            self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                centroids[a][axis].total_cmp(&centroids[b][axis])
            });
            let l = self.split(mesh, centroids, start, mid);
            let r = self.split(mesh, centroids, mid, end);
            self.nodes[id].kind = NodeKind::Inner(l, r);
        }
        id
    }

    fn box_dist2(node: &Node, p: &Point3) -> f64 {
        let d = (node.lo - p).sup(&Point3::zeros()).sup(&(p - node.hi));
        d.norm_squared()
    }

    fn nearest_dist2(&self, mesh: &TriangleMesh, p: &Point3) -> f64 {
        let mut best = f64::INFINITY;
        if self.nodes.is_empty() {
            return best;
        }
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if Self::box_dist2(node, p) >= best {
                continue;
            }
            match node.kind {
                NodeKind::Leaf(s, e) => {
                    for &t in &self.order[s..e] {
                        let [a, b, c] = mesh.corners(t);
                        best = best.min((closest_on_triangle(p, &a, &b, &c) - p).norm_squared());
                    }
                }
                NodeKind::Inner(l, r) => {
                    let (dl, dr) = (Self::box_dist2(&self.nodes[l], p), Self::box_dist2(&self.nodes[r], p));
                    // visit the nearer child first
                    if dl < dr {
                        stack.extend([r, l]);
                    } else {
                        stack.extend([l, r]);
                    }
                }
            }
        }
        best
    }
}

/// Fraction of voxels whose ray votes may disagree before the mesh is
/// rejected as not watertight.
pub const MAX_PARITY_DISAGREEMENT: f64 = 1e-3;

/// Signed distance grid of a closed mesh: exact unsigned point-triangle
/// distance, negative where ray parity says inside.
pub fn mesh_to_sdf(mesh: &TriangleMesh, dims: [usize; 3], origin: Point3, spacing: f64) -> Result<VoxelGrid> {
    if mesh.triangles.is_empty() {
        return Err(Error::Validation("mesh has no triangles".into()));
    }
    // validates the grid description before the expensive passes
    VoxelGrid::new(dims, origin, spacing, vec![0.0; dims.iter().product()])?;
    let (inside, disagreement) = mesh.lattice_inside(dims, origin, spacing);
    if disagreement > MAX_PARITY_DISAGREEMENT {
        return Err(Error::NotWatertight {
            fraction: disagreement,
        });
    }
    let bvh = Bvh::build(mesh);
    let n = inside.len();
    let [nx, ny, _] = dims;
    let values = par::map_range(n, |i| {
        let ijk = [i % nx, (i / nx) % ny, i / (nx * ny)];
        let p = origin + Point3::new(ijk[0] as f64, ijk[1] as f64, ijk[2] as f64) * spacing;
        let d = bvh.nearest_dist2(mesh, &p).sqrt();
        if inside[i] {
            -d
        } else {
            d
        }
    });
    VoxelGrid::new(dims, origin, spacing, values)
}
