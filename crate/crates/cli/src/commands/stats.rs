//! `rescan stats`: object-size histograms and pairwise distribution
//! divergences of label files.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Result;

use rescan_core::error::Error;
use rescan_core::geometry::Vec3;
use rescan_core::ingest::{BoxLabel, LabelFrame, ObjectClass};
use rescan_core::metrics::{distribution_divergence, size_distribution, SizeHistogram};

pub fn run(label_files: &[PathBuf], bin_width: f64, out: Option<&Path>) -> Result<()> {
    if !(bin_width > 0.0) {
        anyhow::bail!("bin width must be positive, got {bin_width}");
    }
    let mut histograms: Vec<(String, SizeHistogram)> = Vec::new();
    for path in label_files {
        let labels = parse_any_label_file(path)?;
        let hist = size_distribution(&labels, bin_width)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        println!("{}: {} labels, {} series", path.display(), labels.len(), hist.series.len());
        histograms.push((name, hist));
    }

    let mut hist_csv = String::from("input,class,dimension,bin_lo,bin_hi,count\n");
    for (name, hist) in &histograms {
        for ((class, dim), series) in &hist.series {
            for (i, &count) in series.counts.iter().enumerate() {
                hist_csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    name,
                    class,
                    dim.name(),
                    series.edges[i],
                    series.edges[i + 1],
                    count
                ));
            }
        }
    }

    let mut div_csv = String::from("input_a,input_b,divergence\n");
    for i in 0..histograms.len() {
        for j in 0..histograms.len() {
            if i == j {
                continue;
            }
            let d = distribution_divergence(&histograms[i].1, &histograms[j].1);
            div_csv.push_str(&format!("{},{},{}\n", histograms[i].0, histograms[j].0, d));
            if i < j {
                println!("divergence({}, {}) = {:.4}", histograms[i].0, histograms[j].0, d);
            }
        }
    }

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::File::create(dir.join("histograms.csv"))?.write_all(hist_csv.as_bytes())?;
        std::fs::File::create(dir.join("divergence.csv"))?.write_all(div_csv.as_bytes())?;
    } else {
        print!("{hist_csv}");
        if histograms.len() > 1 {
            print!("{div_csv}");
        }
    }
    Ok(())
}

/// Accepts both label layouts: the sequence-manifest layout
/// `class cx cy cz length width height yaw dynamic_flag` (9 fields) and
/// the exported layout `class length width height cx cy cz yaw`
/// (8 fields).
fn parse_any_label_file(path: &Path) -> Result<Vec<BoxLabel>> {
    let text = std::fs::read_to_string(path)?;
    let mut labels = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line_no = no + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        let parse_f = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::parse(path, line_no, format!("bad numeric field '{s}'")).into())
        };
        let class = ObjectClass::parse(tok[0])
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        let label = match tok.len() {
            9 => BoxLabel {
                class_name: class,
                center: Vec3::new(parse_f(tok[1])?, parse_f(tok[2])?, parse_f(tok[3])?),
                size: (parse_f(tok[4])?, parse_f(tok[5])?, parse_f(tok[6])?),
                yaw: parse_f(tok[7])?,
                frame_index: 0,
                is_dynamic: tok[8] == "1",
                coordinate_frame: LabelFrame::Sensor,
            },
            8 => BoxLabel {
                class_name: class,
                center: Vec3::new(parse_f(tok[4])?, parse_f(tok[5])?, parse_f(tok[6])?),
                size: (parse_f(tok[1])?, parse_f(tok[2])?, parse_f(tok[3])?),
                yaw: parse_f(tok[7])?,
                frame_index: 0,
                is_dynamic: false,
                coordinate_frame: LabelFrame::Sensor,
            },
            n => {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected 8 or 9 fields, got {n}"),
                )
                .into())
            }
        };
        label
            .validate()
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        labels.push(label);
    }
    Ok(labels)
}
