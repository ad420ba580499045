//! Static HTML gallery of a scan partition.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use plotsieve::cascade::ScanPartition;
use plotsieve::raster::{read_image, write_png};

use crate::error::{CliError, Result};

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn section(html: &mut String, title: &str, ids: &[String], partition: &ScanPartition, thumbs: bool) {
    let _ = writeln!(html, "<section>\n<h2>{} <small>({} plots)</small></h2>", escape(title), ids.len());
    html.push_str("<div class=\"grid\">\n");
    for id in ids {
        let score = partition.scores.get(id).map_or(String::new(), |s| format!("{:.3}", s.score));
        let _ = write!(html, "<figure>");
        if thumbs {
            let _ = write!(html, "<img src=\"img/{}.png\" alt=\"{}\">", escape(id), escape(id));
        }
        let _ = writeln!(html, "<figcaption>{} <span>{}</span></figcaption></figure>", escape(id), score);
    }
    html.push_str("</div>\n</section>\n");
}

/// Renders `index.html` for `partition` into `out`. With `plots` (a
/// directory of `<id>.tern` files) thumbnails are written to `out/img`.
/// The output depends only on the inputs.
pub fn render(partition: &ScanPartition, plots: Option<&Path>, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let thumbs = plots.is_some();
    if let Some(dir) = plots {
        let img_dir = out.join("img");
        fs::create_dir_all(&img_dir).map_err(|e| CliError::io(&img_dir, e))?;
        let all = partition.buckets.iter().flatten().chain(&partition.residual);
        for id in all {
            let img = read_image(dir.join(format!("{id}.tern")))?;
            write_png(&img, img_dir.join(format!("{id}.png")), 2)?;
        }
    }
    let total = partition.total();
    let mut html = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Scan report</title>\n<style>\n\
         body{font-family:sans-serif;margin:1.5em}.grid{display:flex;flex-wrap:wrap;gap:8px}\n\
         figure{margin:0;font-size:11px;text-align:center}figcaption span{color:#666}\n\
         table{border-collapse:collapse}td,th{padding:2px 10px;text-align:right}\n\
         </style></head><body>\n<h1>Scan report</h1>\n",
    );
    let _ = writeln!(html, "<table><tr><th>recognizer</th><th>plots</th><th>cumulative coverage</th></tr>");
    let coverage = partition.prefix_coverage();
    for (i, (name, bucket)) in partition.recognizers.iter().zip(&partition.buckets).enumerate() {
        let _ = writeln!(
            html,
            "<tr><td>{}</td><td>{}</td><td>{:.1}%</td></tr>",
            escape(name),
            bucket.len(),
            100.0 * coverage.get(i + 1).copied().unwrap_or(0.0)
        );
    }
    let residual_share = if total == 0 { 0.0 } else { partition.residual.len() as f64 / total as f64 };
    let _ = writeln!(
        html,
        "<tr><td>residual</td><td>{}</td><td>{:.1}% unrecognized</td></tr></table>",
        partition.residual.len(),
        100.0 * residual_share
    );
    for (name, bucket) in partition.recognizers.iter().zip(&partition.buckets) {
        section(&mut html, name, bucket, partition, thumbs);
    }
    section(&mut html, "residual", &partition.residual, partition, thumbs);
    html.push_str("</body></html>\n");
    let path = out.join("index.html");
    fs::write(&path, html).map_err(|e| CliError::io(&path, e))
}

pub fn load_partition(path: &Path) -> Result<ScanPartition> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::json(path, e))
}
