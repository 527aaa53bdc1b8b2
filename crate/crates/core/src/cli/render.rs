//! Static SVG overlays of label files.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;

use clf::labelgen::record::ClabelFile;
use clf::occlusion::Category;

use super::labels::LABEL_SUFFIX;
use super::{list_files, parse_input, stem, write_output};

const BEV_PANEL_GAP: f64 = 20.0;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn category_color(c: Category) -> &'static str {
    match c {
        Category::Valid => "#2ca02c",
        Category::OcclusionValid => "#ff7f0e",
        Category::Invalid => "#d62728",
    }
}

fn instance_color(id: u32) -> String {
    let hue = (id as f64 * 137.508) % 360.0;
    format!("hsl({hue:.1},70%,50%)")
}

/// Image panel on the left, BEV grid on the right when the label has one.
pub fn render_svg(label: &ClabelFile, image: Option<&str>) -> String {
    let [w, h] = label.image_size.map(f64::from);
    let (bev_w, cell_px) = match &label.bev {
        Some(b) => {
            let px = h / b.spec.s2() as f64;
            (b.spec.s1() as f64 * px + BEV_PANEL_GAP, px)
        }
        None => (0.0, 0.0),
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" width="{}" height="{h}" viewBox="0 0 {} {h}">"#,
        w + bev_w,
        w + bev_w
    );
    let _ = writeln!(s, "<title>{}</title>", escape(&label.key()));
    let _ = writeln!(s, r##"<g id="image"><rect x="0" y="0" width="{w}" height="{h}" fill="#202020"/>"##);
    if let Some(href) = image {
        let _ = writeln!(
            s,
            r#"<image x="0" y="0" width="{w}" height="{h}" xlink:href="{}" preserveAspectRatio="none"/>"#,
            escape(href)
        );
    }
    for c in &label.centerlines {
        let _ = write!(s, r#"<g class="centerline" data-lane-id="{}">"#, c.lane_id);
        if c.spline_2d.len() >= 2 {
            let pts: Vec<String> = c.spline_2d.iter().map(|p| format!("{:.2},{:.2}", p[0], p[1])).collect();
            let _ = write!(
                s,
                r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
                pts.join(" ")
            );
        }
        for k in &c.keypoints {
            let _ = write!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
                k.u,
                k.v,
                category_color(k.category)
            );
        }
        s.push_str("</g>\n");
    }
    s.push_str("</g>\n");
    if let Some(b) = &label.bev {
        let (s1, s2) = (b.spec.s1(), b.spec.s2());
        let x0 = w + BEV_PANEL_GAP;
        let _ = writeln!(
            s,
            r##"<g id="bev"><rect x="{x0}" y="0" width="{}" height="{h}" fill="#101010"/>"##,
            s1 as f64 * cell_px
        );
        for (idx, &seg) in b.seg.iter().enumerate() {
            if seg == 0 {
                continue;
            }
            let (row, col) = (idx / s1, idx % s1);
            // Forward is up.
            let y = (s2 - 1 - row) as f64 * cell_px;
            let x = x0 + col as f64 * cell_px;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.3}" y="{y:.3}" width="{cell_px:.3}" height="{cell_px:.3}" fill="{}"/>"#,
                instance_color(b.instance[idx])
            );
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}

/// Renders one file to `out`, or every label in a directory into `out/`.
pub fn render(labels: &Path, image: Option<&str>, out: &Path) -> Result<usize> {
    if labels.is_dir() {
        let files = list_files(labels, LABEL_SUFFIX)?;
        for path in &files {
            let label = parse_input(path, ClabelFile::from_bytes)?;
            let name = format!("{}.svg", stem(path, LABEL_SUFFIX));
            write_output(&out.join(name), render_svg(&label, image).as_bytes())?;
        }
        Ok(files.len())
    } else {
        let label = parse_input(labels, ClabelFile::from_bytes)?;
        write_output(out, render_svg(&label, image).as_bytes())?;
        Ok(1)
    }
}
