//! CSV exports. Each file opens with a `# schema=<name>.v<k>` comment line
//! naming the column layout.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::critical::{CriticalCurve, ImageCurveAnalysis};
use crate::dual::DualCloud;
use crate::error::Result;
use crate::fiber::FiberCloud;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Artifact {
    pub file: String,
    pub schema: String,
    pub rows: usize,
    pub sha256: String,
}

fn coordinate_headers(prefix: &str, n: usize) -> Vec<String> {
    (1..=n)
        .flat_map(|k| [format!("{prefix}x{k}"), format!("{prefix}y{k}")])
        .collect()
}

fn homogeneous_headers(prefix: &str, n: usize) -> Vec<String> {
    (0..n)
        .flat_map(|k| [format!("{prefix}{k}_re"), format!("{prefix}{k}_im")])
        .collect()
}

fn write_table(
    dir: &Path,
    file: &str,
    schema: &str,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
) -> Result<Artifact> {
    let path = dir.join(file);
    let mut out = BufWriter::new(File::create(&path)?);
    writeln!(out, "# schema={schema}")?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(&header)?;
        for r in &rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    out.flush()?;
    drop(out);
    let bytes = std::fs::read(&path)?;
    let digest = Sha256::digest(&bytes);
    Ok(Artifact {
        file: file.to_string(),
        schema: schema.to_string(),
        rows: rows.len(),
        sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
    })
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

/// `delta.csv`: one row per sample of the critical circle.
pub fn write_delta(dir: &Path, curve: &CriticalCurve) -> Result<Artifact> {
    let n = curve.points.first().map_or(0, |x| x.len() / 2);
    let mut header = vec!["index".to_string(), "arclength".to_string()];
    header.extend(coordinate_headers("", n));
    header.extend(coordinate_headers("t", n));
    header.push("residual".into());
    let rows = (0..curve.len())
        .map(|k| {
            let mut r = vec![k.to_string(), num(curve.arclength[k])];
            r.extend(curve.points[k].iter().map(|v| num(*v)));
            r.extend(curve.tangents[k].iter().map(|v| num(*v)));
            r.push(num(curve.residuals[k]));
            r
        })
        .collect();
    write_table(dir, "delta.csv", "delta.v1", header, rows)
}

/// `image_curve.csv`: `[H_0 : H_1]` along the critical circle.
pub fn write_image_curve(
    dir: &Path,
    curve: &CriticalCurve,
    image: &ImageCurveAnalysis,
) -> Result<Artifact> {
    let mut header = vec!["index".to_string(), "arclength".to_string()];
    header.extend(homogeneous_headers("h", 2));
    let rows = image
        .values
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let mut r = vec![
                k.to_string(),
                num(curve.arclength.get(k).copied().unwrap_or(f64::NAN)),
            ];
            r.extend(v.coords().iter().flat_map(|c| [num(c.re), num(c.im)]));
            r
        })
        .collect();
    write_table(dir, "image_curve.csv", "image_curve.v1", header, rows)
}

/// `fiber_<label>.csv`: points of a fiber cloud with component labels.
pub fn write_fiber(dir: &Path, label: &str, cloud: &FiberCloud) -> Result<Artifact> {
    let n = cloud.points.first().map_or(0, |x| x.len() / 2);
    let mut header = vec!["index".to_string()];
    header.extend(coordinate_headers("", n));
    header.push("residual".into());
    header.push("component".into());
    let rows = (0..cloud.len())
        .map(|k| {
            let mut r = vec![k.to_string()];
            r.extend(cloud.points[k].iter().map(|v| num(*v)));
            r.push(num(cloud.residuals[k]));
            r.push(cloud.labels.get(k).map_or(String::new(), |l| l.to_string()));
            r
        })
        .collect();
    write_table(dir, &format!("fiber_{label}.csv"), "fiber.v1", header, rows)
}

/// `dual_cloud.csv`: homogeneous dual coordinates and immersion margin.
pub fn write_dual_cloud(dir: &Path, cloud: &DualCloud) -> Result<Artifact> {
    let n = cloud.samples.first().map_or(0, |s| s.point.coords().len());
    let mut header = vec!["index".to_string()];
    header.extend(homogeneous_headers("h", n));
    header.push("margin".into());
    header.push("immersed".into());
    let rows = cloud
        .samples
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let mut r = vec![k.to_string()];
            r.extend(s.point.coords().iter().flat_map(|c| [num(c.re), num(c.im)]));
            r.push(num(s.margin));
            r.push(s.immersed.to_string());
            r
        })
        .collect();
    write_table(dir, "dual_cloud.csv", "dual_cloud.v1", header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::sample_dual_set;
    use crate::geometry::Builtin;

    #[test]
    fn dual_cloud_file_has_schema_line_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = sample_dual_set(&Builtin::sphere(2), 5, 1).unwrap();
        let a = write_dual_cloud(dir.path(), &cloud).unwrap();
        assert_eq!(a.rows, 5);
        let text = std::fs::read_to_string(dir.path().join("dual_cloud.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# schema=dual_cloud.v1"));
        assert_eq!(
            lines.next(),
            Some("index,h0_re,h0_im,h1_re,h1_im,h2_re,h2_im,margin,immersed")
        );
        assert_eq!(lines.count(), 5);
    }
}
