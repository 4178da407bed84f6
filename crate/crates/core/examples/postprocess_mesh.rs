//! Punches holes into a sphere, closes them again and subdivides the result.
//!
//!     cargo run --release --example postprocess_mesh -- [holes]

use s13d::mesh::{fill_holes, is_watertight, subdivide_smooth, RemeshParams, TriangleMesh};
use s13d::primitives;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let holes = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(5usize);
    let sphere = primitives::icosphere(0.8, 3);
    let step = sphere.face_count() / holes.max(1);
    let keep: Vec<[u32; 3]> =
        sphere.faces.iter().enumerate().filter(|(i, _)| i % step != 0).map(|(_, f)| *f).collect();
    let punched = TriangleMesh::new(sphere.vertices.clone(), keep)?;
    println!("punched: {:?}", is_watertight(&punched));

    let filled = fill_holes(&punched);
    println!(
        "filled {} loops with {} faces, skipped {}: {:?}",
        filled.filled_loops,
        filled.added_faces,
        filled.skipped.len(),
        is_watertight(&filled.mesh)
    );

    let params = RemeshParams { subdivision_rounds: 2, ..Default::default() };
    let smooth = subdivide_smooth(&filled.mesh, &params)?;
    println!(
        "subdivided x{}: {} -> {} faces, watertight {}",
        params.subdivision_rounds,
        filled.mesh.face_count(),
        smooth.face_count(),
        is_watertight(&smooth).watertight
    );
    Ok(())
}
