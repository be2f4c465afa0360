pub mod evaluate;
pub mod presets;
pub mod reconstruct;
pub mod simulate;
pub mod stats;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use rescan_core::ingest::{parse_label_file, BoxLabel, Frame, LabelFrame, SequenceManifest};
use rescan_core::ply::{read_ply, PlyContent};

/// Load all frames and labels a manifest references.
pub fn load_sequence(manifest_path: &Path) -> Result<(Vec<Frame>, Vec<BoxLabel>)> {
    let manifest = SequenceManifest::load(manifest_path)?;
    let mut frames = Vec::with_capacity(manifest.frames.len());
    let mut labels = Vec::new();
    for spec in &manifest.frames {
        let cloud = match read_ply(&spec.cloud_path)
            .with_context(|| format!("loading {}", spec.cloud_path.display()))?
        {
            PlyContent::Cloud(c) => c,
            PlyContent::Mesh(_) => anyhow::bail!(
                "{} is a mesh, expected a point cloud",
                spec.cloud_path.display()
            ),
        };
        if let Some(label_path) = &spec.labels_path {
            labels.extend(parse_label_file(
                label_path,
                spec.frame_index,
                LabelFrame::Sensor,
            )?);
        }
        frames.push(Frame {
            cloud,
            sensor_pose: spec.pose,
            timestamp: spec.timestamp,
            frame_index: spec.frame_index,
        });
    }
    Ok((frames, labels))
}

/// Output directory resolution: flag wins, then config, then default.
pub fn resolve_out_dir(flag: Option<&Path>, config: Option<&Path>, default: &str) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from(default))
}

/// Scan PLY files of a directory in filename order.
pub fn scan_files_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading directory {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "ply"))
        .collect();
    files.sort();
    Ok(files)
}
