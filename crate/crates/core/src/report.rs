//! Artifact emission: CSV series, JSON reports, self-contained SVG line
//! plots, and the run manifest. Floating-point text is fixed at 17
//! significant digits so reruns are byte-identical.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Result;

/// Formats a float with 17 significant digits (round-trip exact).
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// Writes a CSV file with the given header and rows of floats.
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes pretty JSON for any serializable report.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// A single polyline series for [`plot_svg`].
pub struct Series<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub color: &'a str,
    pub label: &'a str,
}

/// Emits a self-contained SVG line plot; the title carries the law's target
/// slope (or any annotation) for visual comparison.
pub fn plot_svg(path: &Path, title: &str, series: &[Series<'_>]) -> Result<()> {
    let (w, h) = (760.0, 480.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 46.0, 46.0);
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for s in series {
        for (&x, &y) in s.x.iter().zip(s.y) {
            if x.is_finite() && y.is_finite() {
                xmin = xmin.min(x);
                xmax = xmax.max(x);
                ymin = ymin.min(y);
                ymax = ymax.max(y);
            }
        }
    }
    if !xmin.is_finite() || xmax == xmin {
        xmin = 0.0;
        xmax = 1.0;
    }
    if !ymin.is_finite() || ymax == ymin {
        ymin = 0.0;
        ymax = 1.0;
    }
    let pad = 0.04 * (ymax - ymin);
    let (ymin, ymax) = (ymin - pad, ymax + pad);
    let sx = (w - ml - mr) / (xmax - xmin);
    let sy = (h - mt - mb) / (ymax - ymin);
    let mapx = |x: f64| ml + (x - xmin) * sx;
    let mapy = |y: f64| h - mb - (y - ymin) * sy;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"22\" font-family=\"monospace\" font-size=\"14\">{}</text>\n",
        ml,
        xml_escape(title)
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb,
        w - mr,
        h - mb
    ));
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb
    ));
    for k in 0..=4 {
        let fx = xmin + (xmax - xmin) * k as f64 / 4.0;
        let fy = ymin + (ymax - ymin) * k as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"middle\">{:.4}</text>\n",
            mapx(fx),
            h - mb + 16.0,
            fx
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"end\">{:.4}</text>\n",
            ml - 6.0,
            mapy(fy) + 3.0,
            fy
        ));
    }
    for (si, s) in series.iter().enumerate() {
        let mut pts = String::new();
        for (&x, &y) in s.x.iter().zip(s.y) {
            if x.is_finite() && y.is_finite() {
                pts.push_str(&format!("{:.2},{:.2} ", mapx(x), mapy(y)));
            }
        }
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.4\"/>\n",
            pts.trim_end(),
            s.color
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" fill=\"{}\">{}</text>\n",
            w - mr - 220.0,
            mt + 14.0 * (si as f64 + 1.0),
            s.color,
            xml_escape(s.label)
        ));
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg)?;
    Ok(())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Manifest of every artifact a command produced, with the producing module
/// and the configuration hash.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub artifacts: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub producer: String,
}

impl Manifest {
    pub fn new(command: &str, canonical_config: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(canonical_config.as_bytes());
        let hash = hasher.finalize();
        Manifest {
            command: command.to_string(),
            config_hash: format!("{hash:x}"),
            artifacts: Vec::new(),
        }
    }

    pub fn record(&mut self, path: &Path, producer: &str) {
        self.artifacts.push(ManifestEntry {
            path: path.to_string_lossy().into_owned(),
            producer: producer.to_string(),
        });
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        write_json(&path, self)?;
        Ok(path)
    }
}

/// Creates the output directory if needed.
pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Writes raw text (already formatted) to a file.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_is_byte_identical_across_runs() {
        let dir = std::env::temp_dir().join("wavelab-report-test");
        ensure_dir(&dir).unwrap();
        let rows = vec![vec![0.1, 0.2], vec![1.0 / 3.0, 2.0f64.sqrt()]];
        let p1 = dir.join("a.csv");
        let p2 = dir.join("b.csv");
        write_csv(&p1, "x,y", &rows).unwrap();
        write_csv(&p2, "x,y", &rows).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let text = std::fs::read_to_string(&p1).unwrap();
        assert!(text.starts_with("x,y\n"));
        // 17 significant digits round-trip.
        let val: f64 = text.lines().nth(2).unwrap().split(',').next().unwrap().parse().unwrap();
        assert_eq!(val, 1.0 / 3.0);
    }

    #[test]
    fn manifest_hash_depends_on_config() {
        let a = Manifest::new("verify", "p=3");
        let b = Manifest::new("verify", "p=3");
        let c = Manifest::new("verify", "p=2");
        assert_eq!(a.config_hash, b.config_hash);
        assert_ne!(a.config_hash, c.config_hash);
    }

    #[test]
    fn svg_plot_emits_wellformed_file() {
        let dir = std::env::temp_dir().join("wavelab-report-test");
        ensure_dir(&dir).unwrap();
        let p = dir.join("plot.svg");
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        plot_svg(
            &p,
            "zeta drift; target slope +0.5",
            &[Series { x: &x, y: &y, color: "#1f77b4", label: "zeta_1(s)" }],
        )
        .unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains("polyline"));
        assert!(text.trim_end().ends_with("</svg>"));
    }
}
