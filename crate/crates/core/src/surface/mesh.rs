use std::collections::HashMap;
use std::fmt::Write as _;

use crate::ambient::AmbientGeometry;
use crate::error::{Error, Result};
use crate::scalar::{lit, sig9, Real, Vec3};

/// Smallest admissible triangle or dual area, in chart units squared.
pub const AREA_FLOOR: f64 = 1e-12;

/// Connectivity of a closed triangle mesh. Half-edge `3f + k` runs from
/// corner `k` to corner `k + 1` of face `f`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    pub twin: Vec<usize>,
    pub edges: Vec<[usize; 2]>,
    pub vertex_faces: Vec<Vec<usize>>,
    pub one_ring: Vec<Vec<usize>>,
    pub two_ring: Vec<Vec<usize>>,
}

impl Topology {
    pub fn build(n_vertices: usize, faces: &[[usize; 3]]) -> Result<Self> {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 3);
        for (f, face) in faces.iter().enumerate() {
            if face.iter().any(|&v| v >= n_vertices) {
                return Err(Error::MeshDegenerate(format!("face {f} references a missing vertex")));
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(Error::MeshDegenerate(format!("face {f} repeats a vertex")));
            }
            for k in 0..3 {
                let key = (face[k], face[(k + 1) % 3]);
                if directed.insert(key, 3 * f + k).is_some() {
                    return Err(Error::MeshDegenerate(format!("edge {key:?} is used twice with the same orientation")));
                }
            }
        }
        let mut twin = vec![usize::MAX; faces.len() * 3];
        let mut edges = Vec::with_capacity(faces.len() * 3 / 2);
        for (&(a, b), &h) in &directed {
            match directed.get(&(b, a)) {
                Some(&t) => {
                    twin[h] = t;
                    if a < b {
                        edges.push([a, b]);
                    }
                }
                None => return Err(Error::MeshDegenerate(format!("edge ({a}, {b}) is a boundary edge"))),
            }
        }
        edges.sort_unstable();

        let mut vertex_faces = vec![Vec::new(); n_vertices];
        for (f, face) in faces.iter().enumerate() {
            for &v in face {
                vertex_faces[v].push(f);
            }
        }
        let mut one_ring = vec![Vec::new(); n_vertices];
        for &[a, b] in &edges {
            one_ring[a].push(b);
            one_ring[b].push(a);
        }
        for (v, ring) in one_ring.iter_mut().enumerate() {
            ring.sort_unstable();
            if ring.len() < 3 {
                return Err(Error::MeshDegenerate(format!("vertex {v} has valence {}", ring.len())));
            }
            // a manifold vertex of a closed surface has as many faces as neighbours
            if ring.len() != vertex_faces[v].len() {
                return Err(Error::MeshDegenerate(format!("vertex {v} is non-manifold")));
            }
        }
        let euler = n_vertices as i64 - edges.len() as i64 + faces.len() as i64;
        if euler != 2 {
            return Err(Error::MeshDegenerate(format!("Euler characteristic {euler}, expected 2")));
        }
        let two_ring = one_ring
            .iter()
            .enumerate()
            .map(|(v, ring)| {
                let mut out: Vec<usize> = ring
                    .iter()
                    .flat_map(|&w| one_ring[w].iter().copied())
                    .chain(ring.iter().copied())
                    .filter(|&w| w != v)
                    .collect();
                out.sort_unstable();
                out.dedup();
                out
            })
            .collect();
        Ok(Topology { twin, edges, vertex_faces, one_ring, two_ring })
    }
}

/// Closed, genus-zero triangle mesh in chart coordinates.
///
/// Construction validates the combinatorics and triangle areas. Orientation is
/// carried by the face winding; [`TriSurface::is_outward`] reports it and
/// [`TriSurface::validate`] rejects inward meshes.
#[derive(Clone, Debug, PartialEq)]
pub struct TriSurface<T> {
    pub vertices: Vec<Vec3<T>>,
    pub faces: Vec<[usize; 3]>,
    pub topo: Topology,
}

impl<T: Real> TriSurface<T> {
    pub fn new(vertices: Vec<Vec3<T>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let topo = Topology::build(vertices.len(), &faces)?;
        let mesh = TriSurface { vertices, faces, topo };
        mesh.check_areas()?;
        Ok(mesh)
    }

    /// Same connectivity, new positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3<T>>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::MeshDegenerate("vertex count changed".into()));
        }
        let mesh = TriSurface { vertices, faces: self.faces.clone(), topo: self.topo.clone() };
        mesh.check_areas()?;
        Ok(mesh)
    }

    /// Reverses every face.
    pub fn flipped(&self) -> Self {
        let faces: Vec<[usize; 3]> = self.faces.iter().map(|&[a, b, c]| [a, c, b]).collect();
        let topo = Topology::build(self.vertices.len(), &faces).expect("reversal preserves validity");
        TriSurface { vertices: self.vertices.clone(), faces, topo }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.topo.edges.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.topo.edges.len() as i64 + self.faces.len() as i64
    }

    pub fn corners(&self, f: usize) -> [Vec3<T>; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// `(b − a) × (c − a)`: twice the area times the flat unit normal.
    pub fn face_cross(&self, f: usize) -> Vec3<T> {
        let [a, b, c] = self.corners(f);
        (b - a).cross(c - a)
    }

    pub fn face_area_flat(&self, f: usize) -> T {
        self.face_cross(f).norm() / lit(2.0)
    }

    fn check_areas(&self) -> Result<()> {
        let floor: T = lit(AREA_FLOOR);
        for f in 0..self.faces.len() {
            let a = self.face_area_flat(f);
            if !(a > floor) {
                return Err(Error::MeshDegenerate(format!("face {f} has area {a}")));
            }
        }
        if self.vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::MeshDegenerate("non-finite vertex".into()));
        }
        Ok(())
    }

    /// Flat signed volume enclosed by the mesh.
    pub fn signed_volume_flat(&self) -> T {
        let six: T = lit(6.0);
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.corners(f);
                a.dot(b.cross(c)) / six
            })
            .fold(T::zero(), |acc, v| acc + v)
    }

    pub fn is_outward(&self) -> bool {
        self.signed_volume_flat() > T::zero()
    }

    pub fn check_orientation(&self) -> Result<()> {
        if self.is_outward() {
            Ok(())
        } else {
            Err(Error::MeshDegenerate("faces are oriented inward".into()))
        }
    }

    /// Full invariant check: combinatorics, areas, orientation and domain.
    pub fn validate(&self, geom: &AmbientGeometry<T>) -> Result<()> {
        self.check_areas()?;
        self.check_orientation()?;
        for &v in &self.vertices {
            geom.check(v)?;
        }
        Ok(())
    }

    pub fn edge_lengths(&self) -> impl Iterator<Item = T> + '_ {
        self.topo.edges.iter().map(move |&[a, b]| (self.vertices[a] - self.vertices[b]).norm())
    }

    pub fn min_edge(&self) -> T {
        self.edge_lengths().fold(T::infinity(), T::min)
    }

    pub fn mean_edge(&self) -> T {
        let n = self.topo.edges.len();
        self.edge_lengths().fold(T::zero(), |a, b| a + b) / crate::scalar::count(n)
    }

    /// ASCII OBJ with a `# ckflow t=<time> frame=<k>` header.
    pub fn to_obj(&self, time: T, frame: usize) -> String {
        let mut out = String::with_capacity(self.vertices.len() * 48 + self.faces.len() * 24);
        let _ = writeln!(out, "# ckflow t={} frame={frame}", sig9(time));
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", sig9(v.x), sig9(v.y), sig9(v.z));
        }
        for &[a, b, c] in &self.faces {
            let _ = writeln!(out, "f {} {} {}", a + 1, b + 1, c + 1);
        }
        out
    }

    /// Parses the `v` and `f` records of an OBJ file; other lines are ignored.
    pub fn from_obj(text: &str) -> Result<Self> {
        let bad = |line: usize| Error::InvalidParameter(format!("malformed OBJ record on line {line}"));
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let mut it = line.split_whitespace();
            match it.next() {
                Some("v") => {
                    let c: Vec<f64> = it.map(|s| s.parse::<f64>().map_err(|_| bad(i + 1))).collect::<Result<_>>()?;
                    if c.len() < 3 {
                        return Err(bad(i + 1));
                    }
                    vertices.push(Vec3::from_f64([c[0], c[1], c[2]]));
                }
                Some("f") => {
                    let idx: Vec<usize> = it
                        .map(|s| s.split('/').next().unwrap_or("").parse::<usize>().map_err(|_| bad(i + 1)))
                        .collect::<Result<_>>()?;
                    if idx.len() != 3 || idx.contains(&0) {
                        return Err(bad(i + 1));
                    }
                    faces.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
                }
                _ => {}
            }
        }
        Self::new(vertices, faces)
    }
}

/// Icosahedron subdivided `level` times and projected to the unit sphere,
/// `10·4^level + 2` vertices, faces wound outward.
pub fn icosphere<T: Real>(level: u32) -> TriSurface<T> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let base: [[f64; 3]; 12] = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut verts: Vec<[f64; 3]> = base
        .iter()
        .map(|v| {
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            [v[0] / n, v[1] / n, v[2] / n]
        })
        .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| -> usize {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let (p, q) = (verts[a], verts[b]);
                let m = [p[0] + q[0], p[1] + q[1], p[2] + q[2]];
                let n = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
                verts.push([m[0] / n, m[1] / n, m[2] / n]);
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = verts.into_iter().map(Vec3::from_f64).collect();
    TriSurface::new(vertices, faces).expect("icosphere is a valid closed mesh")
}
