use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{rasterize, template_pose_grid, Camera, Pose};
use crate::net::FeatureMap;
use crate::training::NeuralMesh;
use crate::vectors::{dot, VectorSet};

/// Grid poses of one mesh with the vertex shown at each covered pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseTemplates {
    pub poses: Vec<Pose>,
    /// Per pose: `(pixel, vertex)` for every covered pixel.
    pub coverage: Vec<Vec<(u32, u32)>>,
    pub width: usize,
    pub height: usize,
}

impl PoseTemplates {
    pub fn new(mesh: &NeuralMesh, camera: &Camera, count: usize, distance: f64) -> Result<Self> {
        let poses = template_pose_grid(count, distance)?;
        let mut coverage = Vec::with_capacity(poses.len());
        for pose in &poses {
            let r = rasterize(&mesh.geometry, pose, camera)?;
            coverage.push(
                r.vertex_of_pixel
                    .iter()
                    .enumerate()
                    .filter_map(|(p, v)| v.map(|v| (p as u32, v)))
                    .collect(),
            );
        }
        Ok(Self {
            poses,
            coverage,
            width: camera.width,
            height: camera.height,
        })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// Grid pose whose rendered vertex features agree best with the map on
/// foreground pixels. Ties go to the lowest template index.
pub fn init_pose(
    map: &FeatureMap,
    foreground: &[bool],
    mesh: &NeuralMesh,
    templates: &PoseTemplates,
) -> Result<(usize, Pose)> {
    if templates.is_empty() {
        return Err(Error::invalid("no pose templates"));
    }
    if templates.width != map.width || templates.height != map.height {
        return Err(Error::invalid("templates were rendered at another resolution"));
    }
    if foreground.len() != map.pixel_count() {
        return Err(Error::invalid("foreground mask does not match the map"));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (j, cov) in templates.coverage.iter().enumerate() {
        let score: f64 = cov
            .iter()
            .filter(|(p, _)| foreground[*p as usize])
            .map(|&(p, k)| dot(map.at(p as usize), mesh.theta.row(k as usize)))
            .sum();
        if score > best.1 {
            best = (j, score);
        }
    }
    Ok((best.0, templates.poses[best.0]))
}

/// Perspective-correct interpolation of the face's vertex features at the
/// centre of pixel `p`.
fn interpolate_face(
    mesh: &NeuralMesh,
    render: &crate::geometry::RenderResult,
    face: usize,
    p: usize,
    out: &mut [f64],
) {
    let idx = mesh.geometry.faces[face].map(|i| i as usize);
    let c = [(p % render.width) as f64 + 0.5, (p / render.width) as f64 + 0.5];
    let t = idx.map(|i| render.screen[i]);
    let edge = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let area = (t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[1][1] - t[0][1]) * (t[2][0] - t[0][0]);
    let mut w = [
        edge(t[1], t[2]) / area / render.depth[idx[0]],
        edge(t[2], t[0]) / area / render.depth[idx[1]],
        edge(t[0], t[1]) / area / render.depth[idx[2]],
    ];
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    out.iter_mut().for_each(|o| *o = 0.0);
    for (wt, k) in w.into_iter().zip(idx) {
        for (o, th) in out.iter_mut().zip(mesh.theta.row(k)) {
            *o += wt * th;
        }
    }
}

/// `-sum_p f_p . theta(p)` over foreground pixels covered by the mesh at
/// `pose`, where `theta(p)` interpolates the vertex features of the face seen
/// at the pixel centre.
pub fn reconstruction_loss(
    map: &FeatureMap,
    foreground: &[bool],
    mesh: &NeuralMesh,
    camera: &Camera,
    pose: &Pose,
) -> Result<f64> {
    if camera.width != map.width || camera.height != map.height {
        return Err(Error::invalid("camera and feature map resolutions differ"));
    }
    if foreground.len() != map.pixel_count() {
        return Err(Error::invalid("foreground mask does not match the map"));
    }
    let render = match rasterize(&mesh.geometry, pose, camera) {
        Ok(r) => r,
        Err(Error::EmptyRender) => return Ok(0.0),
        Err(e) => return Err(e),
    };
    let mut theta = vec![0.0; map.dim()];
    let mut loss = 0.0;
    for (p, face) in render.face_of_pixel.iter().enumerate() {
        let Some(face) = face else {
            continue;
        };
        if !foreground[p] {
            continue;
        }
        interpolate_face(mesh, &render, *face as usize, p, &mut theta);
        loss -= dot(map.at(p), &theta);
    }
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineSettings {
    pub iterations: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Angle offset of the central differences, radians.
    pub fd_step: f64,
}

impl Default for RefineSettings {
    fn default() -> Self {
        Self {
            iterations: 30,
            lr: 0.05,
            beta1: 0.4,
            beta2: 0.6,
            eps: 1e-8,
            fd_step: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub pose: Pose,
    pub loss: f64,
    pub init_loss: f64,
    pub iterations: usize,
    pub template_index: Option<usize>,
    /// Set when the loss became non-finite; the initial pose is returned.
    pub failed: bool,
}

/// Gradient descent on azimuth, elevation and roll with adaptive moments and
/// central-difference gradients. Returns the lowest-loss pose visited.
pub fn refine_pose(
    map: &FeatureMap,
    foreground: &[bool],
    mesh: &NeuralMesh,
    camera: &Camera,
    init: &Pose,
    settings: &RefineSettings,
) -> Result<PoseEstimate> {
    init.validate()?;
    let loss_at = |x: &[f64; 3]| {
        reconstruction_loss(
            map,
            foreground,
            mesh,
            camera,
            &Pose::new(x[0], x[1], x[2], init.distance),
        )
    };
    let mut x = [init.azimuth, init.elevation, init.roll];
    let init_loss = loss_at(&x)?;
    let fail = |iterations| PoseEstimate {
        pose: init.canonical(),
        loss: init_loss,
        init_loss,
        iterations,
        template_index: None,
        failed: true,
    };
    if !init_loss.is_finite() {
        return Ok(fail(0));
    }
    let (mut best_x, mut best) = (x, init_loss);
    let (mut m, mut v) = ([0.0; 3], [0.0; 3]);
    for it in 0..settings.iterations {
        let mut g = [0.0; 3];
        for a in 0..3 {
            let (mut hi, mut lo) = (x, x);
            hi[a] += settings.fd_step;
            lo[a] -= settings.fd_step;
            g[a] = (loss_at(&hi)? - loss_at(&lo)?) / (2.0 * settings.fd_step);
        }
        let t = (it + 1) as i32;
        for a in 0..3 {
            m[a] = settings.beta1 * m[a] + (1.0 - settings.beta1) * g[a];
            v[a] = settings.beta2 * v[a] + (1.0 - settings.beta2) * g[a] * g[a];
            let mh = m[a] / (1.0 - settings.beta1.powi(t));
            let vh = v[a] / (1.0 - settings.beta2.powi(t));
            x[a] -= settings.lr * mh / (vh.sqrt() + settings.eps);
        }
        let l = loss_at(&x)?;
        if !l.is_finite() {
            return Ok(fail(it + 1));
        }
        if l < best {
            best = l;
            best_x = x;
        }
    }
    Ok(PoseEstimate {
        pose: Pose::new(best_x[0], best_x[1], best_x[2], init.distance).canonical(),
        loss: best,
        init_loss,
        iterations: settings.iterations,
        template_index: None,
        failed: false,
    })
}

/// Feature map a perfect extractor would produce: each covered pixel holds
/// the feature of its nearest visible vertex; other pixels hold random
/// background features.
pub fn self_render(
    mesh: &NeuralMesh,
    pose: &Pose,
    camera: &Camera,
    background: &VectorSet,
    seed: u64,
) -> Result<FeatureMap> {
    if background.is_empty() || background.dim() != mesh.dim() {
        return Err(Error::invalid("background features must match the mesh"));
    }
    let render = rasterize(&mesh.geometry, pose, camera)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = VectorSet::with_capacity(mesh.dim(), camera.pixel_count());
    for p in 0..camera.pixel_count() {
        match render.vertex_of_pixel[p] {
            Some(k) => features.push(mesh.theta.row(k as usize)),
            None => features.push(background.row(rng.random_range(0..background.len()))),
        }
    }
    Ok(FeatureMap {
        height: camera.height,
        width: camera.width,
        features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_cuboid, rotation_error};

    fn smooth_mesh() -> NeuralMesh {
        // features vary smoothly with vertex position so the loss has a basin
        let geometry = build_cuboid([1.3, 0.9, 1.0], 200).unwrap();
        let mut theta = VectorSet::new(8);
        for v in &geometry.vertices {
            let mut f: Vec<f64> = (0..8)
                .map(|j| {
                    let w = [(j as f64 * 0.7).cos(), (j as f64 * 1.3).sin(), (j as f64 * 0.4).cos()];
                    (2.0 * (w[0] * v[0] + w[1] * v[1] + w[2] * v[2]) + j as f64).sin()
                })
                .collect();
            crate::vectors::normalize(&mut f);
            theta.push(&f);
        }
        NeuralMesh::new(0, geometry, theta, 0.1).unwrap()
    }

    fn background() -> VectorSet {
        let mut b = VectorSet::new(8);
        for i in 0..8 {
            let mut v = vec![0.0; 8];
            v[i] = if i % 2 == 0 { -1.0 } else { 1.0 };
            b.push(&v);
        }
        b
    }

    fn cam() -> Camera {
        Camera::desk(16, 16)
    }

    fn fg(map: &FeatureMap, mesh: &NeuralMesh) -> Vec<bool> {
        let mut store = crate::memory::MeshStore::new();
        store.add(mesh.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut bank = crate::training::BackgroundBank::new(8, 8, &mut rng).unwrap();
        bank.replace_all(background()).unwrap();
        super::super::class_scores(map, &store, &bank)
            .unwrap()
            .class_foreground(0)
            .unwrap()
    }

    #[test]
    fn template_self_retrieval() {
        let mesh = smooth_mesh();
        let t = PoseTemplates::new(&mesh, &cam(), 144, 5.0).unwrap();
        for j in [0, 17, 80, 143] {
            let map = self_render(&mesh, &t.poses[j], &cam(), &background(), 1).unwrap();
            let (idx, _) = init_pose(&map, &fg(&map, &mesh), &mesh, &t).unwrap();
            let err = rotation_error(&t.poses[idx].rotation(), &t.poses[j].rotation()).unwrap();
            // symmetric cuboids can have equally good grid poses
            assert!(idx == j || err < 1e-9 || t.coverage[idx] == t.coverage[j], "{idx} vs {j}");
        }
    }

    #[test]
    fn noise_target_still_returns_a_grid_pose() {
        let mesh = smooth_mesh();
        let t = PoseTemplates::new(&mesh, &cam(), 144, 5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let map = FeatureMap {
            height: 16,
            width: 16,
            features: VectorSet::random_unit(&mut rng, 8, 256),
        };
        let (idx, pose) = init_pose(&map, &vec![true; 256], &mesh, &t).unwrap();
        assert_eq!(pose, t.poses[idx]);
    }

    #[test]
    fn refinement_never_worsens_and_fixed_point_holds() {
        let mesh = smooth_mesh();
        let q = Pose::new(0.9, 0.3, 0.1, 5.0);
        let map = self_render(&mesh, &q, &cam(), &background(), 2).unwrap();
        let f = fg(&map, &mesh);
        let est = refine_pose(&map, &f, &mesh, &cam(), &q, &RefineSettings::default()).unwrap();
        assert!(est.loss <= est.init_loss);
        let err = rotation_error(&est.pose.rotation(), &q.rotation()).unwrap();
        assert!(err < 0.1, "{err}");
        let off = Pose::new(1.1, 0.2, 0.0, 5.0);
        let est = refine_pose(&map, &f, &mesh, &cam(), &off, &RefineSettings::default()).unwrap();
        assert!(est.loss <= est.init_loss);
        assert!(!est.failed);
    }
}
