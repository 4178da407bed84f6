//! Converts the open and non-manifold fixtures with and without the winding
//! test and compares the outcomes.
//!
//!     cargo run --release --example watertight_convert -- [resolution]

use s13d::field::{spurious_components, watertight_convert, Bvh, ConvertMode, ConvertParams};
use s13d::mesh::{connected_components, is_watertight, normalize_to_unit_cube, TriangleMesh};
use s13d::primitives;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(128);
    let fixtures: Vec<(&str, TriangleMesh)> = vec![
        ("open cylinder", primitives::open_cylinder(0.5, 1.6, 48)),
        ("windowed room", primitives::windowed_room(0.9, 0.8, 0.3)),
        ("plane with hole", primitives::plane_with_hole(0.9, 0.3)),
        ("nested shells", primitives::nested_shells(0.9, 0.5, 3)),
        ("fin boxes", primitives::edge_sharing_boxes(0.5, 0.4)),
    ];
    for (name, raw) in &fixtures {
        let mesh = normalize_to_unit_cube(raw)?.mesh;
        let bvh = Bvh::build(&mesh);
        for mode in [ConvertMode::Conjunction, ConvertMode::VisibilityOnly] {
            let params = ConvertParams { resolution: n, mode, ..Default::default() };
            match watertight_convert(&mesh, &params) {
                Ok(out) => {
                    let spurious = spurious_components(&out.mesh, &bvh, 2.0 * out.field.voxel());
                    println!(
                        "{name:<16} {mode:?}: watertight {} faces {} components {} spurious {spurious} shell {} ({:.2}s)",
                        is_watertight(&out.mesh).watertight,
                        out.mesh.face_count(),
                        connected_components(&out.mesh).1,
                        out.stats.shell_fallback,
                        out.stats.seconds
                    );
                }
                Err(e) => println!("{name:<16} {mode:?}: failed: {e}"),
            }
        }
    }
    Ok(())
}
