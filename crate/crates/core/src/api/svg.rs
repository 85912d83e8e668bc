// SPDX-License-Identifier: Apache-2.0

//! On-demand floor plans. Each crate becomes a `<g>`-wrapped polygon whose
//! points are `scale * (location + boundary point)`, y growing downwards.

use std::fmt::Write;

use acp_model::CrateRecord;

/// Renders `crates` (normally [`MetadataStore::crates_on_floor`]) as one
/// SVG document. Crates without an in-building location are skipped.
///
/// [`MetadataStore::crates_on_floor`]: crate::store::MetadataStore::crates_on_floor
pub fn floor_svg(crates: &[CrateRecord], floor: i64, scale: f64) -> String {
    let mut polygons = Vec::new();
    let (mut min_x, mut min_y, mut max_x, mut max_y) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in crates {
        let Some((ox, oy)) = c.acp_location.xy() else { continue };
        let points: Vec<(f64, f64)> = c
            .acp_boundary
            .points
            .iter()
            .map(|[bx, by]| (round1(scale * (ox + bx)), round1(scale * (oy + by))))
            .collect();
        for &(x, y) in &points {
            min_x = min_x.min(x);
            min_y = min_y.min(y);
            max_x = max_x.max(x);
            max_y = max_y.max(y);
        }
        polygons.push((c, points));
    }
    let view_box = if polygons.is_empty() || !min_x.is_finite() {
        "0 0 0 0".to_string()
    } else {
        format!("{} {} {} {}", num(min_x), num(min_y), num(round1(max_x - min_x)), num(round1(max_y - min_y)))
    };

    let mut out = String::new();
    let _ = writeln!(out, "<svg xmlns='http://www.w3.org/2000/svg' viewBox='{view_box}' data-floor_number='{floor}'>");
    let _ = writeln!(out, "  <g id='floor_{floor}'>");
    for (c, points) in polygons {
        let pts: Vec<String> = points.iter().map(|(x, y)| format!("{},{}", num(*x), num(*y))).collect();
        let f = c.acp_location.floor().unwrap_or(floor);
        let id = escape(&c.crate_id);
        let _ = writeln!(out, "    <g>");
        let _ = writeln!(out, "      <polygon");
        let _ = writeln!(out, "        id='{id}'");
        let _ = writeln!(out, "        data-crate_type='{}'", escape(c.crate_type.as_str()));
        let _ = writeln!(out, "        data-parent_crate='{}'", escape(c.parent_crate_id.as_deref().unwrap_or("")));
        let _ = writeln!(out, "        data-floor_number='{f}'");
        let _ = writeln!(out, "        points='{}'>", pts.join(" "));
        let _ = writeln!(out, "        <title>{id}</title>");
        let _ = writeln!(out, "      </polygon>");
        let _ = writeln!(out, "    </g>");
    }
    out.push_str("  </g>\n</svg>\n");
    out
}

fn round1(v: f64) -> f64 {
    let r = (v * 10.0).round() / 10.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

// Shortest form: integers without a fractional part.
fn num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '\'' => out.push_str("&apos;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn floor1() -> Vec<CrateRecord> {
        seed::crates().into_iter().filter(|c| c.crate_id == "FE11" || c.crate_id == "FF").collect()
    }

    #[test]
    fn room_polygon_attributes() {
        let svg = floor_svg(&floor1(), 1, 6.608);
        assert!(svg.contains("id='FE11'"));
        assert!(svg.contains("data-crate_type='room'"));
        assert!(svg.contains("data-parent_crate='FF'"));
        assert!(svg.contains("data-floor_number='1'"));
        assert!(svg.contains("<title>FE11</title>"));
        // 6.608 * (22.06 + 0) = 145.77..., 6.608 * (34.67 + 78) = 744.52...
        assert!(svg.contains("points='145.8,229.1 145.8,744.5 628.2,744.5 628.2,229.1'"));
    }

    #[test]
    fn empty_floor_has_empty_root_group() {
        let svg = floor_svg(&[], 7, 1.0);
        assert!(svg.contains("viewBox='0 0 0 0'"));
        assert!(svg.contains("<g id='floor_7'>\n  </g>"));
    }

    #[test]
    fn hostile_ids_are_escaped() {
        let mut c = floor1().remove(0);
        c.crate_id = "a'<b>&".into();
        let svg = floor_svg(&[c], 1, 1.0);
        assert!(svg.contains("id='a&apos;&lt;b&gt;&amp;'"));
    }

    #[test]
    fn number_format() {
        assert_eq!(num(round1(362.8)), "362.8");
        assert_eq!(num(round1(0.0)), "0");
        assert_eq!(num(round1(-0.04)), "0");
        assert_eq!(num(round1(40.25)), "40.3");
    }
}
