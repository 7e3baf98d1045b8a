use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ClassAppearance, FaceTexture};
use crate::error::{Error, Result};
use crate::geometry::{build_cuboid, rasterize, Camera, Pose, Vec3};
use crate::net::Image;

/// Fraction of the object hidden by occluders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OcclusionLevel {
    L1,
    L2,
    L3,
}

impl OcclusionLevel {
    pub const ALL: [OcclusionLevel; 3] = [Self::L1, Self::L2, Self::L3];

    pub fn range(self) -> (f64, f64) {
        match self {
            Self::L1 => (0.2, 0.4),
            Self::L2 => (0.4, 0.6),
            Self::L3 => (0.6, 0.8),
        }
    }
}

impl fmt::Display for OcclusionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::L1 => "l1",
            Self::L2 => "l2",
            Self::L3 => "l3",
        })
    }
}

impl FromStr for OcclusionLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Self::L1),
            "l2" => Ok(Self::L2),
            "l3" => Ok(Self::L3),
            _ => Err(Error::invalid(format!("unknown occlusion level {s:?}"))),
        }
    }
}

/// A rendered image with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSample {
    pub class_id: u32,
    pub pose: Pose,
    pub image: Image,
    /// Object pixels not hidden by an occluder.
    pub mask: Vec<bool>,
    pub occlusion: Option<OcclusionLevel>,
    /// Share of the object's pixels covered by occluders.
    pub occluded_fraction: f64,
}

const LIGHT: [f64; 3] = [0.28, 0.46, -0.84];

fn background(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0b5e_55ed);
    let base: [f64; 3] = [0; 3].map(|_: u8| rng.random_range(0.2..0.8));
    struct Wave {
        dir: (f64, f64),
        freq: f64,
        phase: f64,
        color: [f64; 3],
    }
    let waves: Vec<Wave> = (0..4)
        .map(|_| {
            let a: f64 = rng.random_range(0.0..std::f64::consts::PI);
            Wave {
                dir: (a.cos(), a.sin()),
                freq: rng.random_range(1.5..8.0),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
                color: [0; 3].map(|_: u8| rng.random_range(-0.18..0.18)),
            }
        })
        .collect();
    let g = 9;
    let blobs: Vec<[f64; 3]> = (0..g * g)
        .map(|_| [0; 3].map(|_: u8| rng.random_range(-0.2..0.2)))
        .collect();

    let mut img = Image::new(height, width);
    for y in 0..height {
        for x in 0..width {
            let (u, v) = ((x as f64 + 0.5) / width as f64, (y as f64 + 0.5) / height as f64);
            let gx = u * (g - 1) as f64;
            let gy = v * (g - 1) as f64;
            let (ix, iy) = ((gx as usize).min(g - 2), (gy as usize).min(g - 2));
            let (fx, fy) = (gx - ix as f64, gy - iy as f64);
            for c in 0..3 {
                let mut val = base[c];
                for w in &waves {
                    let t = std::f64::consts::TAU * w.freq * (u * w.dir.0 + v * w.dir.1) + w.phase;
                    val += w.color[c] * t.sin();
                }
                let b = |i: usize, j: usize| blobs[j * g + i][c];
                val += b(ix, iy) * (1.0 - fx) * (1.0 - fy)
                    + b(ix + 1, iy) * fx * (1.0 - fy)
                    + b(ix, iy + 1) * (1.0 - fx) * fy
                    + b(ix + 1, iy + 1) * fx * fy;
                img.set(c, y, x, val.clamp(0.0, 1.0));
            }
        }
    }
    img
}

/// Renders a class's textured cuboid at `pose` over a procedural background
/// and adds Gaussian pixel noise with standard deviation `noise_level`.
pub fn render_sample(
    appearance: &ClassAppearance,
    pose: &Pose,
    background_seed: u64,
    noise_level: f64,
    camera: &Camera,
) -> Result<GeneratedSample> {
    if !(noise_level >= 0.0) {
        return Err(Error::invalid("noise level must be non-negative"));
    }
    let mesh = build_cuboid(appearance.dims, 8)?;
    let render = rasterize(&mesh, pose, camera)?;
    let mut image = background(camera.width, camera.height, background_seed);
    let r = pose.rotation();
    let scale = camera.focal * camera.viewport;
    let light = Vec3::from(LIGHT).normalize();

    for y in 0..camera.height {
        for x in 0..camera.width {
            let p = y * camera.width + x;
            let Some(face) = render.face_of_pixel[p] else {
                continue;
            };
            let z = render.zbuffer[p];
            let cam = Vec3::new(
                (x as f64 + 0.5 - camera.width as f64 / 2.0) / scale * z,
                -(y as f64 + 0.5 - camera.height as f64 / 2.0) / scale * z,
                z - pose.distance,
            );
            let obj = r.transpose() * cam;
            let side = mesh.face_side(face as usize);
            let axis = side / 2;
            let (s, t) = match axis {
                0 => (obj.z, obj.y),
                1 => (obj.x, obj.z),
                _ => (obj.x, obj.y),
            };
            let mut normal = Vec3::zeros();
            normal[axis] = if side % 2 == 1 { 1.0 } else { -1.0 };
            let shade = 0.55 + 0.45 * (r * normal).dot(&light).max(0.0);
            let color = appearance.faces[side].sample(s, t);
            for (c, &v) in color.iter().enumerate() {
                image.set(c, y, x, (v * shade).clamp(0.0, 1.0));
            }
        }
    }
    if noise_level > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(background_seed.wrapping_add(0x6e_015e));
        for v in &mut image.data {
            let n: f64 = rng.sample(StandardNormal);
            *v = (*v + noise_level * n).clamp(0.0, 1.0);
        }
    }
    Ok(GeneratedSample {
        class_id: appearance.class_id,
        pose: *pose,
        image,
        mask: render.object_mask,
        occlusion: None,
        occluded_fraction: 0.0,
    })
}

const OCCLUSION_ATTEMPTS: u64 = 100;

/// Paints textured rectangles over the object until the hidden share of its
/// pixels falls inside the level's range. Occluded pixels leave the mask.
pub fn occlude(sample: &GeneratedSample, level: OcclusionLevel, seed: u64) -> Result<GeneratedSample> {
    let (w, h) = (sample.image.width, sample.image.height);
    let object: Vec<usize> = (0..w * h).filter(|&p| sample.mask[p]).collect();
    if object.is_empty() {
        return Err(Error::Generation("sample has no visible object pixels".into()));
    }
    let (mut x0, mut x1, mut y0, mut y1) = (w, 0, h, 0);
    for &p in &object {
        let (x, y) = (p % w, p / w);
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let (bw, bh) = ((x1 - x0 + 1) as f64, (y1 - y0 + 1) as f64);
    let (lo, hi) = level.range();

    for attempt in 0..OCCLUSION_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x100_0193).wrapping_add(attempt));
        let mut image = sample.image.clone();
        let mut covered = vec![false; w * h];
        let mut fraction = 0.0;
        for _ in 0..24 {
            let rw = (bw * rng.random_range(0.2..0.55)).max(2.0);
            let rh = (bh * rng.random_range(0.2..0.55)).max(2.0);
            let cx = x0 as f64 + rng.random_range(0.0..bw);
            let cy = y0 as f64 + rng.random_range(0.0..bh);
            let texture = FaceTexture::random(&mut rng);
            let xa = (cx - rw / 2.0).round().max(0.0) as usize;
            let xb = ((cx + rw / 2.0).round() as usize).min(w);
            let ya = (cy - rh / 2.0).round().max(0.0) as usize;
            let yb = ((cy + rh / 2.0).round() as usize).min(h);
            for y in ya..yb {
                for x in xa..xb {
                    let color = texture.sample(x as f64 / w as f64 * 4.0, y as f64 / h as f64 * 4.0);
                    for (c, &v) in color.iter().enumerate() {
                        image.set(c, y, x, v);
                    }
                    covered[y * w + x] = true;
                }
            }
            let hidden = object.iter().filter(|&&p| covered[p]).count();
            fraction = hidden as f64 / object.len() as f64;
            if fraction >= lo {
                break;
            }
        }
        if (lo..=hi).contains(&fraction) {
            let mask = sample
                .mask
                .iter()
                .zip(&covered)
                .map(|(&m, &c)| m && !c)
                .collect();
            return Ok(GeneratedSample {
                image,
                mask,
                occlusion: Some(level),
                occluded_fraction: fraction,
                ..sample.clone()
            });
        }
    }
    Err(Error::Generation(format!(
        "could not reach occlusion level {level} in {OCCLUSION_ATTEMPTS} attempts"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::make_class_appearance;

    fn cam() -> Camera {
        Camera::desk(64, 64)
    }

    #[test]
    fn noise_free_renders_are_reproducible() {
        let app = make_class_appearance(2, 5);
        let pose = Pose::new(0.7, 0.3, 0.1, 5.0);
        let a = render_sample(&app, &pose, 9, 0.0, &cam()).unwrap();
        let b = render_sample(&app, &pose, 9, 0.0, &cam()).unwrap();
        assert_eq!(a, b);
        assert!(a.mask.iter().any(|&m| m));
        let mean = a.image.data.iter().sum::<f64>() / a.image.data.len() as f64;
        let var = a.image.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        assert!(var > 0.0);
    }

    #[test]
    fn quarter_turn_shows_different_faces() {
        let app = make_class_appearance(1, 5);
        let a = render_sample(&app, &Pose::new(0.0, 0.2, 0.0, 5.0), 3, 0.0, &cam()).unwrap();
        let b = render_sample(
            &app,
            &Pose::new(std::f64::consts::FRAC_PI_2, 0.2, 0.0, 5.0),
            3,
            0.0,
            &cam(),
        )
        .unwrap();
        let both: Vec<usize> = (0..64 * 64).filter(|&p| a.mask[p] && b.mask[p]).collect();
        assert!(!both.is_empty());
        let diff: f64 = both
            .iter()
            .map(|&p| {
                (0..3)
                    .map(|c| (a.image.data[c * 4096 + p] - b.image.data[c * 4096 + p]).abs())
                    .sum::<f64>()
            })
            .sum::<f64>()
            / both.len() as f64;
        assert!(diff > 0.05, "mean channel difference {diff}");
    }

    #[test]
    fn occlusion_lands_in_range_and_updates_mask() {
        let app = make_class_appearance(0, 1);
        let s = render_sample(&app, &Pose::new(1.0, 0.4, 0.0, 5.0), 4, 0.01, &cam()).unwrap();
        let full = s.mask.iter().filter(|&&m| m).count();
        for (i, level) in OcclusionLevel::ALL.into_iter().enumerate() {
            let o = occlude(&s, level, i as u64).unwrap();
            let (lo, hi) = level.range();
            assert!((lo..=hi).contains(&o.occluded_fraction), "{level}: {}", o.occluded_fraction);
            let left = o.mask.iter().filter(|&&m| m).count();
            let expect = full - (o.occluded_fraction * full as f64).round() as usize;
            assert_eq!(left, expect);
            assert_eq!(o.occlusion, Some(level));
        }
    }

    #[test]
    fn level_names_round_trip() {
        for l in OcclusionLevel::ALL {
            assert_eq!(l.to_string().parse::<OcclusionLevel>().unwrap(), l);
        }
        assert!("l4".parse::<OcclusionLevel>().is_err());
    }
}
