//! ASCII PLY export of the global point cloud.

use std::fmt::Write as _;
use std::path::Path;

use pcfuse_core::GlobalPointCloud;

use crate::error::{write_file, Result};

/// Vertices carry `x y z` (float), `red green blue` (uchar) and `confidence` (float).
pub fn encode_ply(cloud: &GlobalPointCloud) -> String {
    let mut s = String::with_capacity(64 * cloud.len() + 256);
    s.push_str("ply\nformat ascii 1.0\ncomment pcfuse global point cloud\n");
    let _ = writeln!(s, "element vertex {}", cloud.len());
    s.push_str(
        "property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         property float confidence\nend_header\n",
    );
    for p in cloud.points() {
        let rgb = p.color.map(|c| if c.is_finite() { (c.clamp(0.0, 1.0) * 255.0).round() as u8 } else { 0 });
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {}",
            p.position.x as f32, p.position.y as f32, p.position.z as f32, rgb[0], rgb[1], rgb[2], p.confidence as f32
        );
    }
    s
}

pub fn write_ply(path: &Path, cloud: &GlobalPointCloud) -> Result<()> {
    write_file(path, encode_ply(cloud).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use pcfuse_core::Vec3;

    #[test]
    fn header_and_rows() {
        let mut cloud = GlobalPointCloud::new();
        cloud.push(Vec3::new(1.0, -2.0, 3.5), [1.0, 0.5, 0.0], 2.0);
        let text = encode_ply(&cloud);
        assert!(text.starts_with("ply\nformat ascii 1.0\n"));
        assert!(text.contains("element vertex 1\n"));
        assert!(text.ends_with("end_header\n1 -2 3.5 255 128 0 2\n"));
    }
}
