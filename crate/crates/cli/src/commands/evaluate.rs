//! `rescan evaluate`: truncated Chamfer distance and depth RMSE between
//! reference and simulated scans, with sequence ranking.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use rescan_core::geometry::PointCloud;
use rescan_core::metrics::{chamfer, rank_sequences, rmse_depth, SequenceScore};
use rescan_core::ply::{read_ply, PlyContent};

struct Pair {
    id: String,
    real_dir: PathBuf,
    sim_dir: PathBuf,
}

pub fn run(
    real: Option<&Path>,
    sim: Option<&Path>,
    pairs_file: Option<&Path>,
    truncation: f64,
    out: Option<&Path>,
) -> Result<()> {
    let pairs = collect_pairs(real, sim, pairs_file)?;
    if !(truncation > 0.0 && truncation <= 1.0) {
        anyhow::bail!("truncation must lie in (0, 1], got {truncation}");
    }

    let mut scores = Vec::new();
    let mut frame_rows = String::from("sequence_id,frame,rmse,cd\n");
    for pair in &pairs {
        let real_files = super::scan_files_sorted(&pair.real_dir)?;
        let sim_files = super::scan_files_sorted(&pair.sim_dir)?;
        if real_files.is_empty() {
            anyhow::bail!("no scans in {}", pair.real_dir.display());
        }
        if real_files.len() != sim_files.len() {
            anyhow::bail!(
                "sequence {}: {} reference scans vs {} simulated",
                pair.id,
                real_files.len(),
                sim_files.len()
            );
        }
        let mut cd_sum = 0.0;
        let mut rmse_sum = 0.0;
        let mut rmse_frames = 0usize;
        for (frame, (real_path, sim_path)) in real_files.iter().zip(&sim_files).enumerate() {
            let real_cloud = load_cloud(real_path)?;
            let sim_cloud = load_cloud(sim_path)?;
            let cd = chamfer(&sim_cloud, &real_cloud, truncation)?;
            cd_sum += cd.total;
            let rmse = matched_depth_rmse(&sim_cloud, &real_cloud)?;
            if let Some(r) = rmse {
                rmse_sum += r;
                rmse_frames += 1;
            }
            frame_rows.push_str(&format!(
                "{},{},{},{}\n",
                pair.id,
                frame,
                rmse.map(|r| r.to_string()).unwrap_or_default(),
                cd.total
            ));
            println!(
                "{} frame {frame}: cd {:.6}{}",
                pair.id,
                cd.total,
                rmse.map(|r| format!(", rmse {r:.6}")).unwrap_or_default()
            );
        }
        let cd_mean = cd_sum / real_files.len() as f64;
        let rmse_mean = if rmse_frames > 0 {
            rmse_sum / rmse_frames as f64
        } else {
            0.0
        };
        println!("{}: aggregate cd {:.6}, rmse {:.6}", pair.id, cd_mean, rmse_mean);
        scores.push(SequenceScore {
            sequence_id: pair.id.clone(),
            rmse: rmse_mean,
            cd: cd_mean,
        });
    }

    let ranked = rank_sequences(&scores);
    let mut table = String::from("sequence_id,rmse,cd\n");
    for s in &ranked {
        table.push_str(&format!("{},{},{}\n", s.sequence_id, s.rmse, s.cd));
    }
    if ranked.len() > 1 {
        println!("ranking (best first):");
        for (i, s) in ranked.iter().enumerate() {
            println!("  {}. {} (cd {:.6}, rmse {:.6})", i + 1, s.sequence_id, s.cd, s.rmse);
        }
    }

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::File::create(dir.join("scores.csv"))?.write_all(table.as_bytes())?;
        std::fs::File::create(dir.join("frames.csv"))?.write_all(frame_rows.as_bytes())?;
    } else {
        print!("{table}");
    }
    Ok(())
}

fn collect_pairs(
    real: Option<&Path>,
    sim: Option<&Path>,
    pairs_file: Option<&Path>,
) -> Result<Vec<Pair>> {
    match (real, sim, pairs_file) {
        (Some(r), Some(s), None) => Ok(vec![Pair {
            id: "seq0".to_string(),
            real_dir: r.to_path_buf(),
            sim_dir: s.to_path_buf(),
        }]),
        (None, None, Some(file)) => {
            let text = std::fs::read_to_string(file)
                .with_context(|| format!("reading pairs file {}", file.display()))?;
            let dir = file.parent().unwrap_or_else(|| Path::new("."));
            let mut pairs = Vec::new();
            for (no, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let tok: Vec<&str> = line.split_whitespace().collect();
                if tok.len() != 3 {
                    anyhow::bail!(
                        "{}:{}: expected `id real_dir sim_dir`",
                        file.display(),
                        no + 1
                    );
                }
                pairs.push(Pair {
                    id: tok[0].to_string(),
                    real_dir: dir.join(tok[1]),
                    sim_dir: dir.join(tok[2]),
                });
            }
            if pairs.is_empty() {
                anyhow::bail!("pairs file {} lists no sequences", file.display());
            }
            Ok(pairs)
        }
        _ => anyhow::bail!("pass either --real and --sim, or --pairs"),
    }
}

fn load_cloud(path: &Path) -> Result<PointCloud> {
    match read_ply(path).with_context(|| format!("loading {}", path.display()))? {
        PlyContent::Cloud(c) => Ok(c),
        PlyContent::Mesh(_) => anyhow::bail!("{} is a mesh, expected a scan", path.display()),
    }
}

/// Depth RMSE over rays present in both scans, matched by beam id and
/// azimuth step. None when either scan lacks the matching attributes.
fn matched_depth_rmse(sim: &PointCloud, real: &PointCloud) -> Result<Option<f64>> {
    let (Some(sb), Some(sa), Some(sr)) = (&sim.beam_id, &sim.azimuth, &sim.range) else {
        return Ok(None);
    };
    let (Some(rb), Some(ra), Some(rr)) = (&real.beam_id, &real.azimuth, &real.range) else {
        return Ok(None);
    };
    let real_by_key: HashMap<(i32, u64), f64> = rb
        .iter()
        .zip(ra)
        .zip(rr)
        .map(|((&b, &az), &r)| ((b, az.to_bits()), r))
        .collect();
    let mut rendered = Vec::new();
    let mut measured = Vec::new();
    for ((&b, &az), &r) in sb.iter().zip(sa).zip(sr) {
        if let Some(&real_range) = real_by_key.get(&(b, az.to_bits())) {
            rendered.push(r);
            measured.push(real_range);
        }
    }
    if rendered.is_empty() {
        return Ok(None);
    }
    Ok(Some(rmse_depth(&rendered, &measured)?))
}
