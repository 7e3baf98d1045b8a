use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Two-colour stripe pattern painted on one cuboid face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceTexture {
    pub color_a: [f64; 3],
    pub color_b: [f64; 3],
    /// Stripes per object unit.
    pub frequency: f64,
    pub orientation: f64,
    pub phase: f64,
}

impl FaceTexture {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut color = || [0; 3].map(|_: u8| quantize(rng.random_range(0.05..0.95)));
        let color_a = color();
        let color_b = color();
        Self {
            color_a,
            color_b,
            frequency: quantize(rng.random_range(0.5..3.0)),
            orientation: quantize(rng.random_range(0.0..std::f64::consts::PI)),
            phase: quantize(rng.random_range(0.0..std::f64::consts::TAU)),
        }
    }

    /// Colour at in-plane coordinates `(s, t)`.
    pub fn sample(&self, s: f64, t: f64) -> [f64; 3] {
        let (sin, cos) = self.orientation.sin_cos();
        let u = s * cos + t * sin;
        let w = 0.5 + 0.5 * (std::f64::consts::TAU * self.frequency * u + self.phase).sin();
        [0, 1, 2].map(|c| self.color_a[c] * w + self.color_b[c] * (1.0 - w))
    }
}

/// Rounds to a fixed grid so generated parameters print and reload exactly.
fn quantize(x: f64) -> f64 {
    (x * 4096.0).round() / 4096.0
}

/// Shape and per-face textures of one class. Faces are indexed
/// `axis * 2 + positive`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAppearance {
    pub class_id: u32,
    pub dims: [f64; 3],
    pub faces: [FaceTexture; 6],
}

/// Deterministic appearance for `(class_id, seed)`.
pub fn make_class_appearance(class_id: u32, seed: u64) -> ClassAppearance {
    let mut rng = ChaCha8Rng::seed_from_u64(
        seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (class_id as u64).wrapping_add(0x51_7cc1),
    );
    let dims = [
        quantize(rng.random_range(0.9..1.5)),
        quantize(rng.random_range(0.6..1.1)),
        quantize(rng.random_range(0.7..1.3)),
    ];
    let faces = [0; 6].map(|_| FaceTexture::random(&mut rng));
    ClassAppearance {
        class_id,
        dims,
        faces,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_distinct() {
        assert_eq!(make_class_appearance(3, 7), make_class_appearance(3, 7));
        let all: Vec<ClassAppearance> = (0..8).map(|c| make_class_appearance(c, 7)).collect();
        for i in 0..8 {
            for j in (i + 1)..8 {
                assert_ne!(all[i].faces, all[j].faces);
                assert_ne!(all[i].dims, all[j].dims);
            }
        }
        assert_ne!(make_class_appearance(3, 7), make_class_appearance(3, 8));
    }

    #[test]
    fn stripes_vary_across_a_face() {
        let t = make_class_appearance(0, 1).faces[0];
        let a = t.sample(0.0, 0.0);
        let differs = (1..20).any(|i| t.sample(i as f64 * 0.05, 0.1) != a);
        assert!(differs);
    }
}
