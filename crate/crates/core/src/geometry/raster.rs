use super::{Camera, CuboidMesh, Pose, Vec3};
use crate::error::{Error, Result};

const NEAR: f64 = 1e-6;

/// Per-vertex projection and visibility plus per-pixel coverage for one
/// `(mesh, pose, camera)` triple. Pixels are indexed `y * width + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderResult {
    pub width: usize,
    pub height: usize,
    /// Pixel containing each vertex's projection, `None` when off-screen.
    pub pixel_of_vertex: Vec<Option<u32>>,
    /// Continuous projected coordinates of each vertex.
    pub screen: Vec<[f64; 2]>,
    /// Camera-space depth of each vertex.
    pub depth: Vec<f64>,
    pub visible: Vec<bool>,
    /// Nearest visible vertex (in image space) for covered pixels.
    pub vertex_of_pixel: Vec<Option<u32>>,
    pub face_of_pixel: Vec<Option<u32>>,
    /// Depth of the closest surface at each pixel centre; infinite off the object.
    pub zbuffer: Vec<f64>,
    pub object_mask: Vec<bool>,
}

#[inline]
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Barycentric weights of `p` in triangle `t` with signed area `area`.
#[inline]
fn barycentric(t: [[f64; 2]; 3], area: f64, p: [f64; 2]) -> [f64; 3] {
    [
        edge(t[1], t[2], p) / area,
        edge(t[2], t[0], p) / area,
        edge(t[0], t[1], p) / area,
    ]
}

#[inline]
fn interpolated_depth(w: [f64; 3], z: [f64; 3]) -> f64 {
    1.0 / (w[0] / z[0] + w[1] / z[1] + w[2] / z[2])
}

impl RenderResult {
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn visible_count(&self) -> usize {
        self.visible.iter().filter(|&&v| v).count()
    }

    pub fn mask_count(&self) -> usize {
        self.object_mask.iter().filter(|&&m| m).count()
    }
}

/// Perspective-projects every face of `mesh` and resolves visibility with a
/// z-buffer sampled at pixel centres.
///
/// A vertex is visible when its pixel is covered by the object and no face
/// lies in front of it along the ray through its exact projection. Depth ties
/// between faces go to the lowest face index.
pub fn rasterize(mesh: &CuboidMesh, pose: &Pose, camera: &Camera) -> Result<RenderResult> {
    pose.validate()?;
    camera.validate()?;
    let (w, h) = (camera.width, camera.height);
    let n_pix = w * h;

    let cam: Vec<Vec3> = mesh
        .vertices
        .iter()
        .map(|&v| camera.to_camera(pose, v))
        .collect();
    if cam.iter().all(|c| c.z <= NEAR) {
        return Err(Error::EmptyRender);
    }
    let depth: Vec<f64> = cam.iter().map(|c| c.z).collect();
    let screen: Vec<[f64; 2]> = cam
        .iter()
        .map(|c| {
            if c.z > NEAR {
                camera.project(c)
            } else {
                [f64::NAN, f64::NAN]
            }
        })
        .collect();

    let mut zbuffer = vec![f64::INFINITY; n_pix];
    let mut face_of_pixel: Vec<Option<u32>> = vec![None; n_pix];
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); n_pix];
    let mut tris: Vec<Option<([[f64; 2]; 3], f64, [f64; 3])>> = Vec::with_capacity(mesh.faces.len());

    for (fi, f) in mesh.faces.iter().enumerate() {
        let idx = f.map(|i| i as usize);
        let z = idx.map(|i| depth[i]);
        if z.iter().any(|&z| z <= NEAR) {
            tris.push(None);
            continue;
        }
        let t = idx.map(|i| screen[i]);
        let area = edge(t[0], t[1], t[2]);
        if area.abs() < 1e-14 {
            tris.push(None);
            continue;
        }
        tris.push(Some((t, area, z)));

        let (min_u, max_u) = t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p[0]), hi.max(p[0]))
        });
        let (min_v, max_v) = t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p[1]), hi.max(p[1]))
        });
        let x0 = (min_u.floor() as i64).max(0);
        let x1 = (max_u.floor() as i64).min(w as i64 - 1);
        let y0 = (min_v.floor() as i64).max(0);
        let y1 = (max_v.floor() as i64).min(h as i64 - 1);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        for y in y0..=y1 {
            for x in x0..=x1 {
                let p = y as usize * w + x as usize;
                bins[p].push(fi as u32);
                let wts = barycentric(t, area, [x as f64 + 0.5, y as f64 + 0.5]);
                if wts.iter().all(|&b| b >= 0.0) {
                    let d = interpolated_depth(wts, z);
                    if d < zbuffer[p] {
                        zbuffer[p] = d;
                        face_of_pixel[p] = Some(fi as u32);
                    }
                }
            }
        }
    }
    let object_mask: Vec<bool> = face_of_pixel.iter().map(Option::is_some).collect();

    let pixel_of_vertex: Vec<Option<u32>> = screen
        .iter()
        .map(|s| {
            if !(s[0].is_finite() && s[1].is_finite()) {
                return None;
            }
            let (x, y) = (s[0].floor(), s[1].floor());
            if x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64 {
                None
            } else {
                Some((y as usize * w + x as usize) as u32)
            }
        })
        .collect();

    let visible: Vec<bool> = (0..mesh.vertices.len())
        .map(|k| {
            let Some(p) = pixel_of_vertex[k] else {
                return false;
            };
            let p = p as usize;
            if !object_mask[p] {
                return false;
            }
            let front = bins[p]
                .iter()
                .filter_map(|&fi| tris[fi as usize])
                .filter_map(|(t, area, z)| {
                    let wts = barycentric(t, area, screen[k]);
                    wts.iter()
                        .all(|&b| b >= -1e-9)
                        .then(|| interpolated_depth(wts, z))
                })
                .fold(f64::INFINITY, f64::min);
            depth[k] <= front * (1.0 + 1e-9)
        })
        .collect();

    let vertex_of_pixel = nearest_visible_vertex(w, h, &object_mask, &screen, &pixel_of_vertex, &visible);

    Ok(RenderResult {
        width: w,
        height: h,
        pixel_of_vertex,
        screen,
        depth,
        visible,
        vertex_of_pixel,
        face_of_pixel,
        zbuffer,
        object_mask,
    })
}

fn nearest_visible_vertex(
    w: usize,
    h: usize,
    mask: &[bool],
    screen: &[[f64; 2]],
    pixel_of_vertex: &[Option<u32>],
    visible: &[bool],
) -> Vec<Option<u32>> {
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); w * h];
    let mut any = false;
    for (k, p) in pixel_of_vertex.iter().enumerate() {
        if let (Some(p), true) = (p, visible[k]) {
            buckets[*p as usize].push(k as u32);
            any = true;
        }
    }
    let mut out = vec![None; w * h];
    if !any {
        return out;
    }
    let max_r = w.max(h) as i64;
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let p = y as usize * w + x as usize;
            if !mask[p] {
                continue;
            }
            let c = [x as f64 + 0.5, y as f64 + 0.5];
            let mut best: Option<(f64, u32)> = None;
            for r in 0..=max_r {
                if let Some((d2, _)) = best {
                    if (r as f64 - 0.5) > d2.sqrt() {
                        break;
                    }
                }
                for yy in (y - r)..=(y + r) {
                    if yy < 0 || yy >= h as i64 {
                        continue;
                    }
                    let ring_row = yy == y - r || yy == y + r;
                    let step = if ring_row || r == 0 { 1 } else { 2 * r };
                    let mut xx = x - r;
                    while xx <= x + r {
                        if xx >= 0 && xx < w as i64 {
                            for &k in &buckets[yy as usize * w + xx as usize] {
                                let s = screen[k as usize];
                                let d2 = (s[0] - c[0]).powi(2) + (s[1] - c[1]).powi(2);
                                let better = match best {
                                    None => true,
                                    Some((bd, bk)) => d2 < bd || (d2 == bd && k < bk),
                                };
                                if better {
                                    best = Some((d2, k));
                                }
                            }
                        }
                        xx += step;
                    }
                }
            }
            out[p] = best.map(|(_, k)| k);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_cuboid;

    #[test]
    fn front_face_visible_back_face_hidden() {
        let mesh = build_cuboid([1.0, 1.0, 1.0], 98).unwrap();
        let cam = Camera::desk(64, 64);
        let r = rasterize(&mesh, &Pose::new(0.0, 0.0, 0.0, 5.0), &cam).unwrap();
        for (k, v) in mesh.vertices.iter().enumerate() {
            // camera looks along +z, so the z = -0.5 side faces it
            let interior = v[0].abs() < 0.49 && v[1].abs() < 0.49;
            if interior && v[2] == -0.5 {
                assert!(r.visible[k], "front vertex {k} {v:?} hidden");
            }
            if v[2] == 0.5 {
                assert!(!r.visible[k], "back vertex {k} {v:?} visible");
            }
        }
        let covered = r.mask_count();
        assert!(covered > 0 && covered < r.pixel_count());
    }

    #[test]
    fn desk_camera_coverage_is_about_forty_percent() {
        let mesh = build_cuboid([1.0, 1.0, 1.0], 8).unwrap();
        let cam = Camera::desk(64, 64);
        let r = rasterize(&mesh, &Pose::new(0.0, 0.0, 0.0, 5.0), &cam).unwrap();
        let frac = r.mask_count() as f64 / r.pixel_count() as f64;
        assert!((0.35..0.45).contains(&frac), "{frac}");
    }

    #[test]
    fn behind_camera_is_an_error() {
        let mesh = build_cuboid([1.0, 1.0, 1.0], 8).unwrap();
        let cam = Camera::desk(16, 16);
        // distance 0.1 puts half the cube behind; 0.01 with a tiny cube too.
        let far_behind = Pose::new(0.0, 0.0, 0.0, 1e-9);
        let tiny = build_cuboid([1e-12, 1e-12, 1e-12], 8).unwrap();
        assert!(matches!(
            rasterize(&tiny, &far_behind, &cam),
            Err(Error::EmptyRender)
        ));
        assert!(rasterize(&mesh, &Pose::new(0.0, 0.0, 0.0, 0.1), &cam).is_ok());
    }

    #[test]
    fn render_invariants_hold() {
        let mesh = build_cuboid([1.3, 0.8, 1.0], 200).unwrap();
        let cam = Camera::desk(32, 32);
        let r = rasterize(&mesh, &Pose::new(0.7, 0.3, 0.2, 5.0), &cam).unwrap();
        for k in 0..mesh.vertex_count() {
            if r.visible[k] {
                let p = r.pixel_of_vertex[k].unwrap() as usize;
                assert!(r.object_mask[p]);
            }
        }
        for p in 0..r.pixel_count() {
            if !r.object_mask[p] {
                assert!(r.vertex_of_pixel[p].is_none());
                assert!(r.zbuffer[p].is_infinite());
            } else {
                assert!(r.zbuffer[p].is_finite());
            }
        }
    }
}
