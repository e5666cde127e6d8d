//! Zero-level snapshots as SVG. Presentation only.

use std::fmt::Write as _;
use std::path::Path;

use crate::contour::zero_polylines;
use crate::distance::RegionSet;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Path ids in drawing order.
pub const PATH_IDS: [&str; 3] = ["x-set", "y-set", "m-set"];
const COLORS: [&str; 3] = ["#1f5fbf", "#bf3a1f", "#2e8b3a"];

/// Renders the zero sets of `regions` (X, Y, M, any may be absent) over the
/// grid rectangle. Empty zero sets get no path element.
pub fn svg_document(grid: &Grid, regions: [Option<&RegionSet>; 3]) -> String {
    let (w, hgt) = (grid.xmax - grid.xmin, grid.ymax - grid.ymin);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{} {} {} {}" width="600" height="{}">"#,
        grid.xmin,
        grid.ymin,
        w,
        hgt,
        (600.0 * hgt / w).round()
    );
    let _ = writeln!(s, r#"<rect x="{}" y="{}" width="{w}" height="{hgt}" fill="white"/>"#, grid.xmin, grid.ymin);
    // flip y so that up is +y, staying inside the same box
    let _ = writeln!(s, r#"<g transform="matrix(1 0 0 -1 0 {})">"#, grid.ymin + grid.ymax);
    for ((id, color), region) in PATH_IDS.iter().zip(COLORS).zip(regions) {
        let Some(region) = region else { continue };
        let mut d = String::new();
        for line in zero_polylines(region) {
            for (k, p) in line.points.iter().enumerate() {
                let _ = write!(d, "{}{:.6} {:.6} ", if k == 0 { "M" } else { "L" }, p[0], p[1]);
            }
            if line.closed {
                d.push_str("Z ");
            }
        }
        if d.is_empty() {
            continue;
        }
        let _ = writeln!(
            s,
            r#"<path id="{id}" d="{}" fill="none" stroke="{color}" stroke-width="2" vector-effect="non-scaling-stroke"/>"#,
            d.trim_end()
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}

pub fn render_svg(grid: &Grid, regions: [Option<&RegionSet>; 3], path: &Path) -> Result<()> {
    std::fs::write(path, svg_document(grid, regions)).map_err(|e| Error::io(path, e))
}
