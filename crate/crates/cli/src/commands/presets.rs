//! `rescan presets`: print the sensor preset table.

use anyhow::Result;

use rescan_core::lidar::{preset, PRESET_NAMES};

pub fn run() -> Result<()> {
    println!(
        "{:<18} {:>8} {:>9} {:>9} {:>7} {:>12} {:>7}",
        "name", "channels", "vfov_min", "vfov_max", "rate", "points/s", "range"
    );
    for name in PRESET_NAMES {
        let p = preset(name)?;
        println!(
            "{:<18} {:>8} {:>9} {:>9} {:>7} {:>12} {:>7}",
            name,
            p.channels,
            p.vfov_min,
            p.vfov_max,
            p.rotation_rate,
            p.points_per_second,
            p.max_range
        );
    }
    Ok(())
}
