//! Pipeline configuration file (TOML) and its validation.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use rescan_core::error::{Error, Result};
use rescan_core::geometry::Vec3;
use rescan_core::ingest::IngestParams;
use rescan_core::sdf::fit::{OptMethod, OptimizerConfig, RegWeights};
use rescan_core::sdf::render::RenderConfig;
use rescan_core::sdf::tsdf::TsdfConfig;
use rescan_core::sdf::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Tsdf,
    VolumeFit,
    Both,
}

impl Method {
    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "tsdf" => Ok(Method::Tsdf),
            "volume-fit" => Ok(Method::VolumeFit),
            "both" => Ok(Method::Both),
            other => Err(Error::invalid(format!(
                "unknown method '{other}' (expected tsdf, volume-fit or both)"
            ))),
        }
    }

    pub fn runs_tsdf(self) -> bool {
        matches!(self, Method::Tsdf | Method::Both)
    }

    pub fn runs_fit(self) -> bool {
        matches!(self, Method::VolumeFit | Method::Both)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    output_dir: Option<String>,
    sequence: RawSequence,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    ingest: RawIngest,
    #[serde(default)]
    reconstruction: RawReconstruction,
    #[serde(default)]
    tsdf: RawTsdf,
    #[serde(default)]
    render: RawRender,
    #[serde(default)]
    optimizer: RawOptimizer,
    #[serde(default)]
    simulate: RawSimulate,
    #[serde(default)]
    replay: Option<RawReplay>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSequence {
    manifest: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    #[serde(default)]
    voxel_size: Option<f64>,
    #[serde(default)]
    padding: Option<f64>,
    #[serde(default)]
    origin: Option<[f64; 3]>,
    #[serde(default)]
    dims: Option<[usize; 3]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIngest {
    #[serde(default)]
    outlier_k: Option<usize>,
    #[serde(default)]
    outlier_sigma_mult: Option<f64>,
    #[serde(default)]
    side_weight: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReconstruction {
    #[serde(default)]
    method: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTsdf {
    #[serde(default)]
    truncation_distance: Option<f64>,
    #[serde(default)]
    max_weight: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRender {
    #[serde(default)]
    num_samples: Option<usize>,
    #[serde(default)]
    t_near: Option<f64>,
    /// 0 or absent: use the grid diagonal.
    #[serde(default)]
    t_far: Option<f64>,
    #[serde(default)]
    sigmoid_scale: Option<f64>,
    #[serde(default)]
    stratified: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptimizer {
    #[serde(default)]
    epochs: Option<usize>,
    #[serde(default)]
    batch_size: Option<usize>,
    #[serde(default)]
    learning_rate: Option<f64>,
    #[serde(default)]
    method: Option<String>,
    #[serde(default)]
    lambda_smooth: Option<f64>,
    #[serde(default)]
    lambda_eikonal: Option<f64>,
    #[serde(default)]
    learn_scale: Option<bool>,
    #[serde(default)]
    init_noise: Option<f64>,
    #[serde(default)]
    scale_warmup_epochs: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulate {
    #[serde(default)]
    source_profile: Option<String>,
    #[serde(default)]
    target_profiles: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReplay {
    ego_track: String,
    object_tracks: String,
    #[serde(default)]
    asset_manifest: Option<String>,
    #[serde(default)]
    size_map: Option<String>,
    /// "componentwise" (default) or "rigid".
    #[serde(default)]
    pose_update: Option<String>,
}

/// Replay inputs resolved against the config directory.
#[derive(Debug, Clone)]
pub struct ReplayPaths {
    pub ego_track: PathBuf,
    pub object_tracks: PathBuf,
    pub asset_manifest: Option<PathBuf>,
    pub size_map: Option<PathBuf>,
    pub pose_update: rescan_core::replay::PoseUpdateMode,
}

/// Fully validated pipeline configuration.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub manifest_path: PathBuf,
    pub voxel_size: f64,
    pub padding: f64,
    pub explicit_grid: Option<GridSpec>,
    pub ingest: IngestParams,
    pub method: Method,
    pub tsdf: TsdfConfig,
    pub render: RenderConfig,
    /// 0 means auto (grid diagonal).
    pub t_far_override: f64,
    pub optimizer: OptimizerConfig,
    pub source_profile: Option<String>,
    pub target_profiles: Vec<String>,
    pub replay: Option<ReplayPaths>,
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<PipelineConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
        let raw: RawConfig = toml::from_str(&text)
            .map_err(|e| Error::parse(path, 0, format!("config parse error: {e}")))?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |p: &str| dir.join(p);

        let manifest_path = resolve(&raw.sequence.manifest);
        if !manifest_path.exists() {
            return Err(Error::invalid(format!(
                "sequence.manifest: {} does not exist",
                manifest_path.display()
            )));
        }

        let voxel_size = raw.grid.voxel_size.unwrap_or(0.1);
        if !(voxel_size > 0.0) {
            return Err(Error::invalid("grid.voxel_size must be positive"));
        }
        let padding = raw.grid.padding.unwrap_or(2.0);
        let explicit_grid = match (raw.grid.origin, raw.grid.dims) {
            (Some(o), Some(d)) => {
                let spec = GridSpec {
                    origin: Vec3::new(o[0], o[1], o[2]),
                    voxel_size,
                    dims: (d[0], d[1], d[2]),
                };
                spec.validate()?;
                Some(spec)
            }
            (None, None) => None,
            _ => {
                return Err(Error::invalid(
                    "grid.origin and grid.dims must be given together",
                ))
            }
        };

        let defaults = IngestParams::default();
        let ingest = IngestParams {
            outlier_k: raw.ingest.outlier_k.unwrap_or(defaults.outlier_k),
            outlier_sigma_mult: raw
                .ingest
                .outlier_sigma_mult
                .unwrap_or(defaults.outlier_sigma_mult),
            side_weight: raw.ingest.side_weight.unwrap_or(defaults.side_weight),
        };
        if ingest.outlier_k == 0 {
            return Err(Error::invalid("ingest.outlier_k must be >= 1"));
        }
        if !(ingest.side_weight > 0.0) {
            return Err(Error::invalid("ingest.side_weight must be positive"));
        }

        let method = Method::parse(raw.reconstruction.method.as_deref().unwrap_or("tsdf"))?;

        let tsdf_defaults = TsdfConfig::default();
        let tsdf = TsdfConfig {
            truncation_distance: raw
                .tsdf
                .truncation_distance
                .unwrap_or(3.0 * voxel_size),
            max_weight: raw.tsdf.max_weight.unwrap_or(tsdf_defaults.max_weight),
        };
        if !(tsdf.truncation_distance > 0.0) {
            return Err(Error::invalid("tsdf.truncation_distance must be positive"));
        }

        let render_defaults = RenderConfig::default();
        let t_far_override = raw.render.t_far.unwrap_or(0.0);
        let render = RenderConfig {
            num_samples: raw.render.num_samples.unwrap_or(render_defaults.num_samples),
            t_near: raw.render.t_near.unwrap_or(render_defaults.t_near),
            // Placeholder until the grid is known; commands substitute the
            // diagonal when t_far_override is 0.
            t_far: if t_far_override > 0.0 {
                t_far_override
            } else {
                render_defaults.t_far
            },
            sigmoid_scale: raw
                .render
                .sigmoid_scale
                .unwrap_or(render_defaults.sigmoid_scale),
            stratified: raw.render.stratified.unwrap_or(render_defaults.stratified),
        };

        let opt_defaults = OptimizerConfig::default();
        let opt_method = match raw.optimizer.method.as_deref() {
            None | Some("adam") => OptMethod::default(),
            Some("sgd") => OptMethod::Sgd { momentum: 0.9 },
            Some(other) => {
                return Err(Error::invalid(format!(
                    "optimizer.method '{other}' (expected adam or sgd)"
                )))
            }
        };
        let optimizer = OptimizerConfig {
            epochs: raw.optimizer.epochs.unwrap_or(opt_defaults.epochs),
            batch_size: raw.optimizer.batch_size.unwrap_or(opt_defaults.batch_size),
            learning_rate: raw
                .optimizer
                .learning_rate
                .unwrap_or(opt_defaults.learning_rate),
            final_lr_fraction: opt_defaults.final_lr_fraction,
            method: opt_method,
            reg: RegWeights {
                lambda_smooth: raw
                    .optimizer
                    .lambda_smooth
                    .unwrap_or(opt_defaults.reg.lambda_smooth),
                lambda_eikonal: raw
                    .optimizer
                    .lambda_eikonal
                    .unwrap_or(opt_defaults.reg.lambda_eikonal),
            },
            learn_scale: raw.optimizer.learn_scale.unwrap_or(opt_defaults.learn_scale),
            scale_learning_rate: opt_defaults.scale_learning_rate,
            init_noise: raw.optimizer.init_noise.unwrap_or(opt_defaults.init_noise),
            scale_warmup_epochs: raw
                .optimizer
                .scale_warmup_epochs
                .unwrap_or(opt_defaults.scale_warmup_epochs),
            scale_warmup_start: opt_defaults.scale_warmup_start,
            seed: raw.seed,
        };

        let replay = match raw.replay {
            None => None,
            Some(r) => {
                let ego_track = resolve(&r.ego_track);
                let object_tracks = resolve(&r.object_tracks);
                for (what, p) in [("ego_track", &ego_track), ("object_tracks", &object_tracks)] {
                    if !p.exists() {
                        return Err(Error::invalid(format!(
                            "replay.{what}: {} does not exist",
                            p.display()
                        )));
                    }
                }
                let pose_update = match r.pose_update.as_deref() {
                    None | Some("componentwise") => {
                        rescan_core::replay::PoseUpdateMode::Componentwise
                    }
                    Some("rigid") => rescan_core::replay::PoseUpdateMode::RigidCompose,
                    Some(other) => {
                        return Err(Error::invalid(format!(
                            "replay.pose_update '{other}' (expected componentwise or rigid)"
                        )))
                    }
                };
                Some(ReplayPaths {
                    ego_track,
                    object_tracks,
                    asset_manifest: r.asset_manifest.map(|p| resolve(&p)),
                    size_map: r.size_map.map(|p| resolve(&p)),
                    pose_update,
                })
            }
        };

        Ok(PipelineConfig {
            seed: raw.seed,
            output_dir: raw.output_dir.map(|p| resolve(&p)),
            manifest_path,
            voxel_size,
            padding,
            explicit_grid,
            ingest,
            method,
            tsdf,
            render,
            t_far_override,
            optimizer,
            source_profile: raw.simulate.source_profile,
            target_profiles: raw.simulate.target_profiles,
            replay,
        })
    }
}
