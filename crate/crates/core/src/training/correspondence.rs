use crate::error::{Error, Result};
use crate::geometry::RenderResult;
use crate::net::FeatureMap;
use crate::vectors::VectorSet;

/// Pairing of a mesh's vertices with feature-map pixels for one sample.
///
/// `visible` has one flag per mesh vertex; the other fields list only the
/// visible vertices, in ascending vertex order, with the feature read at
/// each one's projected pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondences {
    pub class_id: u32,
    pub visible: Vec<bool>,
    pub vertices: Vec<u32>,
    pub pixels: Vec<u32>,
    pub features: VectorSet,
}

impl Correspondences {
    pub fn vertex_count(&self) -> usize {
        self.visible.len()
    }

    pub fn visible_count(&self) -> usize {
        self.vertices.len()
    }

    /// Same vertices and pixels with features read from another map.
    pub fn with_features_from(&self, map: &FeatureMap) -> Result<Self> {
        let mut out = self.clone();
        out.features = read_pixels(map, &self.pixels)?;
        Ok(out)
    }
}

fn read_pixels(map: &FeatureMap, pixels: &[u32]) -> Result<VectorSet> {
    let mut features = VectorSet::with_capacity(map.dim(), pixels.len());
    for &p in pixels {
        if p as usize >= map.pixel_count() {
            return Err(Error::invalid(format!("pixel {p} outside the feature map")));
        }
        features.push(map.at(p as usize));
    }
    Ok(features)
}

pub fn gather_correspondences(
    map: &FeatureMap,
    render: &RenderResult,
    class_id: u32,
) -> Result<Correspondences> {
    if map.width != render.width || map.height != render.height {
        return Err(Error::invalid(format!(
            "render is {}x{} but the feature map is {}x{}",
            render.width, render.height, map.width, map.height
        )));
    }
    let mut vertices = Vec::new();
    let mut pixels = Vec::new();
    for (k, (&vis, px)) in render.visible.iter().zip(&render.pixel_of_vertex).enumerate() {
        if let (true, Some(p)) = (vis, px) {
            vertices.push(k as u32);
            pixels.push(*p);
        }
    }
    let features = read_pixels(map, &pixels)?;
    let visible = render
        .visible
        .iter()
        .zip(&render.pixel_of_vertex)
        .map(|(&v, p)| v && p.is_some())
        .collect();
    Ok(Correspondences {
        class_id,
        visible,
        vertices,
        pixels,
        features,
    })
}
