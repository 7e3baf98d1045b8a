use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A cuboid centred at the origin whose surface is sampled on a regular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuboidMesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[u32; 3]>,
    pub dims: [f64; 3],
}

/// Surface lattice point count for a cuboid subdivided into `n` cells per axis.
fn surface_count(n: [usize; 3]) -> usize {
    let full = (n[0] + 1) * (n[1] + 1) * (n[2] + 1);
    let inner = n[0].saturating_sub(1) * n[1].saturating_sub(1) * n[2].saturating_sub(1);
    full - inner
}

/// Cells per axis for a uniform grid spacing derived from the longest axis
/// being split into `cells_long` cells.
fn subdivision(dims: [f64; 3], cells_long: usize) -> [usize; 3] {
    let longest = dims.iter().cloned().fold(0.0, f64::max);
    let h = longest / cells_long as f64;
    dims.map(|d| ((d / h).round() as usize).max(1))
}

/// Samples the surface of a `dims` cuboid on a grid of uniform spacing chosen
/// so that the vertex count is as close as possible to `target_vertices`.
///
/// Spacing is shared by all axes, so every face receives a vertex density
/// proportional to its area.
pub fn build_cuboid(dims: [f64; 3], target_vertices: usize) -> Result<CuboidMesh> {
    if dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::invalid(format!(
            "cuboid extents must be positive, got {dims:?}"
        )));
    }
    if target_vertices < 8 {
        return Err(Error::invalid("a cuboid needs at least 8 vertices"));
    }

    let mut best = [1usize; 3];
    let mut best_gap = usize::MAX;
    for cells in 1..=4096 {
        let n = subdivision(dims, cells);
        let count = surface_count(n);
        let gap = count.abs_diff(target_vertices);
        if gap < best_gap {
            best_gap = gap;
            best = n;
        }
        if count > 2 * target_vertices + 8 {
            break;
        }
    }
    Ok(lattice_cuboid(dims, best))
}

fn lattice_cuboid(dims: [f64; 3], n: [usize; 3]) -> CuboidMesh {
    let coord = |axis: usize, i: usize| -> f64 {
        let half = dims[axis] / 2.0;
        if i == 0 {
            -half
        } else if i == n[axis] {
            half
        } else {
            -half + dims[axis] * i as f64 / n[axis] as f64
        }
    };

    let mut index: HashMap<[usize; 3], u32> = HashMap::new();
    let mut vertices = Vec::with_capacity(surface_count(n));
    for i in 0..=n[0] {
        for j in 0..=n[1] {
            for k in 0..=n[2] {
                let on_surface =
                    i == 0 || i == n[0] || j == 0 || j == n[1] || k == 0 || k == n[2];
                if on_surface {
                    index.insert([i, j, k], vertices.len() as u32);
                    vertices.push([coord(0, i), coord(1, j), coord(2, k)]);
                }
            }
        }
    }

    // Each side is spanned by two free axes (a, b) with the third pinned.
    let mut faces = Vec::new();
    for fixed in 0..3 {
        let (a, b) = match fixed {
            0 => (1, 2),
            1 => (2, 0),
            _ => (0, 1),
        };
        for side in [0, n[fixed]] {
            for ia in 0..n[a] {
                for ib in 0..n[b] {
                    let at = |da: usize, db: usize| {
                        let mut l = [0usize; 3];
                        l[fixed] = side;
                        l[a] = ia + da;
                        l[b] = ib + db;
                        index[&l]
                    };
                    let (v00, v10, v01, v11) = (at(0, 0), at(1, 0), at(0, 1), at(1, 1));
                    if side == 0 {
                        faces.push([v00, v01, v10]);
                        faces.push([v10, v01, v11]);
                    } else {
                        faces.push([v00, v10, v01]);
                        faces.push([v10, v11, v01]);
                    }
                }
            }
        }
    }

    CuboidMesh {
        vertices,
        faces,
        dims,
    }
}

impl CuboidMesh {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn diagonal(&self) -> f64 {
        self.dims.iter().map(|d| d * d).sum::<f64>().sqrt()
    }

    /// Which of the six sides a face lies on, as `axis * 2 + (positive side)`.
    pub fn face_side(&self, face: usize) -> usize {
        let [a, b, c] = self.faces[face].map(|i| self.vertices[i as usize]);
        for axis in 0..3 {
            let half = self.dims[axis] / 2.0;
            for (s, target) in [(0, -half), (1, half)] {
                if [a, b, c].iter().all(|v| (v[axis] - target).abs() < 1e-9) {
                    return axis * 2 + s;
                }
            }
        }
        unreachable!("cuboid face not on any side")
    }

    /// Checks the structural invariants of a cuboid mesh.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for f in &self.faces {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::invalid(format!("face {f:?} indexes past {n} vertices")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::invalid(format!("degenerate face {f:?}")));
            }
        }
        for v in &self.vertices {
            let on_surface =
                (0..3).any(|a| (v[a].abs() - self.dims[a] / 2.0).abs() <= 1e-9);
            if !on_surface {
                return Err(Error::invalid(format!("vertex {v:?} is off the surface")));
            }
        }
        Ok(())
    }

    /// Plain-text export: a header `cuboid <vertices> <faces> <dx> <dy> <dz>`,
    /// then one `v x y z` line per vertex and one `f a b c` line per face.
    /// Coordinates and extents use three fixed decimals.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let [dx, dy, dz] = self.dims;
        let _ = writeln!(
            s,
            "cuboid {} {} {dx:.3} {dy:.3} {dz:.3}",
            self.vertices.len(),
            self.faces.len()
        );
        for v in &self.vertices {
            let _ = writeln!(s, "v {:.3} {:.3} {:.3}", v[0], v[1], v[2]);
        }
        for f in &self.faces {
            let _ = writeln!(s, "f {} {} {}", f[0], f[1], f[2]);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |detail: String| Error::format("mesh text", detail);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty input".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 6 || h[0] != "cuboid" {
            return Err(bad(format!("bad header {header:?}")));
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("{s:?}: {e}")));
        let parse_f64 = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        let nv = parse_usize(h[1])?;
        let nf = parse_usize(h[2])?;
        let dims = [parse_f64(h[3])?, parse_f64(h[4])?, parse_f64(h[5])?];

        let mut vertices = Vec::with_capacity(nv);
        let mut faces = Vec::with_capacity(nf);
        for line in lines {
            let t: Vec<&str> = line.split_whitespace().collect();
            match t.as_slice() {
                ["v", x, y, z] => vertices.push([parse_f64(x)?, parse_f64(y)?, parse_f64(z)?]),
                ["f", a, b, c] => faces.push([
                    parse_usize(a)? as u32,
                    parse_usize(b)? as u32,
                    parse_usize(c)? as u32,
                ]),
                _ => return Err(bad(format!("unrecognised line {line:?}"))),
            }
        }
        if vertices.len() != nv || faces.len() != nf {
            return Err(bad(format!(
                "header promises {nv} vertices / {nf} faces, found {} / {}",
                vertices.len(),
                faces.len()
            )));
        }
        let mesh = CuboidMesh {
            vertices,
            faces,
            dims,
        };
        mesh.validate()?;
        Ok(mesh)
    }
}

/// For every vertex, the indices of other vertices strictly closer than `radius`.
pub fn vertex_neighborhoods(mesh: &CuboidMesh, radius: f64) -> Result<Vec<Vec<u32>>> {
    if !(radius >= 0.0) {
        return Err(Error::invalid(format!("radius must be non-negative, got {radius}")));
    }
    let r2 = radius * radius;
    let v = &mesh.vertices;
    let mut out = vec![Vec::new(); v.len()];
    for i in 0..v.len() {
        for j in (i + 1)..v.len() {
            let d2: f64 = (0..3).map(|a| (v[i][a] - v[j][a]).powi(2)).sum();
            if d2 < r2 {
                out[i].push(j as u32);
                out[j].push(i as u32);
            }
        }
    }
    for n in &mut out {
        n.sort_unstable();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_cuboid_is_the_eight_corners() {
        let m = build_cuboid([1.0, 1.0, 1.0], 8).unwrap();
        assert_eq!(m.vertex_count(), 8);
        assert_eq!(m.faces.len(), 12);
        m.validate().unwrap();
    }

    #[test]
    fn default_target_lands_within_ten_percent() {
        let m = build_cuboid([1.0, 1.0, 1.0], 1100).unwrap();
        assert!((990..=1210).contains(&m.vertex_count()), "{}", m.vertex_count());
        m.validate().unwrap();
    }

    #[test]
    fn density_is_proportional_to_face_area() {
        let m = build_cuboid([2.0, 1.0, 1.0], 96).unwrap();
        let n = m.vertex_count();
        assert!((86..=106).contains(&n), "{n}");
        // Independent count: per-face interior grid points plus shared edges and corners,
        // with the 2-unit axis split twice as finely as the unit axes.
        let per_unit = 3usize;
        let (a, b, c) = (2 * per_unit, per_unit, per_unit);
        let faces = 2 * ((a - 1) * (b - 1) + (b - 1) * (c - 1) + (a - 1) * (c - 1));
        let edges = 4 * ((a - 1) + (b - 1) + (c - 1));
        assert_eq!(n, faces + edges + 8);
        // Triangles per side are proportional to area.
        let mut per_side = [0usize; 6];
        for f in 0..m.faces.len() {
            per_side[m.face_side(f)] += 1;
        }
        assert_eq!(per_side[0], per_side[1]);
        assert_eq!(per_side[2], 2 * per_side[0]); // y-sides are 2x1, x-sides 1x1
    }

    #[test]
    fn rejects_non_positive_extent() {
        assert!(matches!(
            build_cuboid([1.0, 0.0, 1.0], 100),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn neighborhoods_follow_strict_radius() {
        let m = build_cuboid([1.0, 1.0, 1.0], 8).unwrap();
        assert!(vertex_neighborhoods(&m, 0.0).unwrap().iter().all(Vec::is_empty));
        assert!(vertex_neighborhoods(&m, 0.3).unwrap().iter().all(Vec::is_empty));
        let all = vertex_neighborhoods(&m, m.diagonal() + 0.01).unwrap();
        for (k, n) in all.iter().enumerate() {
            assert_eq!(n.len(), 7);
            assert!(!n.contains(&(k as u32)));
        }
        // Edges have length exactly 1, so radius 1 is still exclusive.
        assert!(vertex_neighborhoods(&m, 1.0).unwrap().iter().all(Vec::is_empty));
    }

    #[test]
    fn neighborhoods_are_symmetric() {
        let m = build_cuboid([1.2, 0.7, 0.9], 150).unwrap();
        let n = vertex_neighborhoods(&m, 0.35).unwrap();
        for (i, set) in n.iter().enumerate() {
            for &j in set {
                assert!(n[j as usize].contains(&(i as u32)));
            }
        }
    }

    #[test]
    fn text_format_round_trips_grid_meshes() {
        let m = build_cuboid([2.0, 1.0, 1.0], 96).unwrap();
        let back = CuboidMesh::from_text(&m.to_text()).unwrap();
        assert_eq!(back.faces, m.faces);
        assert_eq!(back.vertex_count(), m.vertex_count());
        for (a, b) in back.vertices.iter().zip(&m.vertices) {
            for i in 0..3 {
                assert!((a[i] - b[i]).abs() <= 5e-4);
            }
        }
        assert!(CuboidMesh::from_text("cuboid 1 0 1 1 1\n").is_err());
    }
}
