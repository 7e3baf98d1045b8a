//! Rasterizes a subdivided cuboid and prints its coverage and visibility.
//!
//! cargo run --example cuboid_render -- [azimuth] [elevation]

use inemo::geometry::{build_cuboid, rasterize, Camera, Pose};

fn main() -> inemo::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let azimuth = args.first().copied().unwrap_or(0.6);
    let elevation = args.get(1).copied().unwrap_or(0.35);

    let mesh = build_cuboid([1.6, 0.9, 1.1], 200)?;
    let camera = Camera::desk(48, 32);
    let pose = Pose::new(azimuth, elevation, 0.0, 5.0);
    let r = rasterize(&mesh, &pose, &camera)?;
    println!(
        "{} vertices, {} faces; {} visible, {} object pixels",
        mesh.vertex_count(),
        mesh.faces.len(),
        r.visible_count(),
        r.mask_count()
    );

    // faces are shaded by side; '.' is background
    let shades = ['#', '%', '*', '+', '=', '-'];
    for y in 0..r.height {
        let row: String = (0..r.width)
            .map(|x| match r.face_of_pixel[y * r.width + x] {
                Some(f) => shades[mesh.face_side(f as usize) % shades.len()],
                None => '.',
            })
            .collect();
        println!("{row}");
    }
    Ok(())
}
