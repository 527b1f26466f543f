//! TOML configuration files and named scenario presets.
//!
//! `ConfigFile` is the on-disk schema: channel quantities in dB/dBm and
//! explicit units in every field name. Conversion to the engine's linear-unit
//! [`SimConfig`] happens in [`ConfigFile::to_sim_config`], which reports
//! invalid fields by name.

use std::f64::consts::FRAC_PI_4;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::ChannelParams;
use crate::engine::{AlgorithmParams, Approach, SimConfig, SimError};
use crate::geometry::Region;
use crate::workload::{MobilityParams, PoiKind, PoiScenario};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config '{path}': {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid field '{field}': {message}")]
    Field { field: String, message: String },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// On-disk configuration. All channel quantities are logarithmic (dB/dBm);
/// everything else is SI with the unit in the field name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    /// Square region side, m.
    pub region_side_m: f64,
    pub msa_altitude_m: f64,
    pub mca_altitude_m: f64,
    pub grid_cell_m: f64,
    /// Tumbling window length, s.
    pub window_s: f64,
    pub dt_s: f64,
    pub horizon_s: f64,
    pub num_msas: usize,
    pub bandwidth_hz: f64,
    pub tx_power_dbm: f64,
    pub ref_channel_gain_db: f64,
    pub noise_power_dbm: f64,
    pub mobility: MobilityParams,
    pub poi: PoiKind,
    pub task_exponent: f64,
    pub total_task_rate_bps: f64,
    pub capacities_bps: Vec<f64>,
    pub mca_speed_mps: f64,
    pub approach: Approach,
    pub algorithm: AlgorithmParams,
    pub seed: u64,
    pub process_while_moving: bool,
}

impl ConfigFile {
    /// Validate and convert to the engine's linear-unit configuration.
    pub fn to_sim_config(&self) -> Result<SimConfig, ConfigError> {
        let field = |name: &str, message: String| ConfigError::Field {
            field: name.to_string(),
            message,
        };
        if !(self.region_side_m > 0.0) {
            return Err(field("region_side_m", format!("must be positive, got {}", self.region_side_m)));
        }
        if self.msa_altitude_m == self.mca_altitude_m {
            return Err(field(
                "mca_altitude_m",
                "MCA altitude must differ from MSA altitude".into(),
            ));
        }
        if self.capacities_bps.is_empty() {
            return Err(field("capacities_bps", "must list at least one MCA capacity".into()));
        }
        let region = Region::square(self.region_side_m, self.msa_altitude_m, self.mca_altitude_m)
            .map_err(|e| field("region_side_m", e.to_string()))?;
        let channel = ChannelParams::from_db(
            self.bandwidth_hz,
            self.tx_power_dbm,
            self.ref_channel_gain_db,
            self.noise_power_dbm,
        )
        .map_err(|e| field("bandwidth_hz/tx_power_dbm/ref_channel_gain_db/noise_power_dbm", e.to_string()))?;
        let config = SimConfig {
            region,
            grid_cell: self.grid_cell_m,
            delta: self.window_s,
            dt: self.dt_s,
            horizon: self.horizon_s,
            num_msas: self.num_msas,
            channel,
            mobility: self.mobility,
            scenario: PoiScenario {
                kind: self.poi.clone(),
                exponent: self.task_exponent,
                total_rate: self.total_task_rate_bps,
            },
            capacities: self.capacities_bps.clone(),
            mca_speed: self.mca_speed_mps,
            approach: self.approach,
            algorithm: self.algorithm,
            seed: self.seed,
            process_while_moving: self.process_while_moving,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: origin.to_string(),
            source,
        })
    }
}

pub const PRESET_NAMES: [&str; 8] = [
    "paper-fixed-hom",
    "paper-fixed-het",
    "paper-moving-hom",
    "paper-moving-het",
    "desk-fixed-hom",
    "desk-fixed-het",
    "desk-moving-hom",
    "desk-moving-het",
];

/// Named scenario preset, or `None` for an unknown name.
pub fn preset(name: &str) -> Option<ConfigFile> {
    let paper = |poi: PoiKind, capacities: Vec<f64>| ConfigFile {
        region_side_m: 5000.0,
        msa_altitude_m: 50.0,
        mca_altitude_m: 100.0,
        grid_cell_m: 50.0,
        window_s: 10.0,
        dt_s: 0.1,
        horizon_s: 120.0,
        num_msas: 50,
        bandwidth_hz: 0.2e6,
        tx_power_dbm: 40.0,
        ref_channel_gain_db: -50.0,
        noise_power_dbm: -60.0,
        mobility: MobilityParams::default(),
        poi,
        task_exponent: 1.5,
        total_task_rate_bps: 6e6,
        capacities_bps: capacities,
        mca_speed_mps: 25.0,
        approach: Approach::Full,
        algorithm: AlgorithmParams::default(),
        seed: 1,
        process_while_moving: true,
    };
    // desk presets shrink the region 5x and scale the space- and
    // dwell-dependent parameters with it (grid cell, roam box, roam/pause
    // durations) so trajectories have the same texture relative to the
    // region; vehicle speeds are hardware properties and stay unchanged
    let desk = |poi: PoiKind, capacities: Vec<f64>| ConfigFile {
        region_side_m: 1000.0,
        grid_cell_m: 10.0,
        horizon_s: 120.0,
        num_msas: 20,
        total_task_rate_bps: 1e6,
        capacities_bps: capacities,
        mobility: MobilityParams {
            subregion_side: 20.0,
            roam_min: 10.0,
            roam_max: 12.0,
            pause_min: 0.4,
            pause_max: 1.0,
            ..MobilityParams::default()
        },
        poi,
        ..paper(PoiKind::Fixed { points: vec![] }, vec![])
    };
    let paper_fixed = PoiKind::Fixed {
        points: vec![[3500.0, 1500.0], [1250.0, 3750.0]],
    };
    // the moving POI starts near the top-right corner and travels across the
    // region toward the origin: 225 degrees
    let paper_moving = PoiKind::Moving {
        start: [4500.0, 4500.0],
        hop: 500.0,
        period: 15.0,
        heading: -3.0 * FRAC_PI_4,
    };
    // both fixed POIs sit in one quadrant of the initial 2x2 MCA lattice, so
    // a static layout leaves one agent heavily overloaded
    let desk_fixed = PoiKind::Fixed {
        points: vec![[650.0, 350.0], [900.0, 100.0]],
    };
    let desk_moving = PoiKind::Moving {
        start: [900.0, 900.0],
        hop: 100.0,
        period: 15.0,
        heading: -3.0 * FRAC_PI_4,
    };
    let paper_hom = vec![1e6; 6];
    let paper_het = vec![2e6, 1e6, 1e6, 1e6, 0.5e6, 0.5e6];
    let desk_hom = vec![0.25e6; 4];
    let desk_het = vec![0.5e6, 0.25e6, 0.15e6, 0.1e6];
    match name {
        "paper-fixed-hom" => Some(paper(paper_fixed, paper_hom)),
        "paper-fixed-het" => Some(paper(paper_fixed, paper_het)),
        "paper-moving-hom" => Some(paper(paper_moving, paper_hom)),
        "paper-moving-het" => Some(paper(paper_moving, paper_het)),
        "desk-fixed-hom" => Some(desk(desk_fixed, desk_hom)),
        "desk-fixed-het" => Some(desk(desk_fixed, desk_het)),
        "desk-moving-hom" => Some(desk(desk_moving, desk_hom)),
        "desk-moving-het" => Some(desk(desk_moving, desk_het)),
        _ => None,
    }
}

/// Resolve a preset name or a TOML file path to a configuration.
pub fn load_config(spec: &str) -> Result<ConfigFile, ConfigError> {
    if let Some(cfg) = preset(spec) {
        return Ok(cfg);
    }
    let text = std::fs::read_to_string(Path::new(spec)).map_err(|source| ConfigError::Io {
        path: spec.to_string(),
        source,
    })?;
    ConfigFile::from_toml(&text, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap_or_else(|| panic!("missing preset {name}"));
            cfg.to_sim_config()
                .unwrap_or_else(|e| panic!("preset {name} invalid: {e}"));
        }
    }

    #[test]
    fn paper_presets_match_the_reference_setup() {
        let hom = preset("paper-fixed-hom").unwrap();
        assert_eq!(hom.capacities_bps, vec![1e6; 6]);
        assert_eq!(hom.num_msas, 50);
        assert_eq!(hom.region_side_m, 5000.0);
        let het = preset("paper-fixed-het").unwrap();
        assert_eq!(het.capacities_bps, vec![2e6, 1e6, 1e6, 1e6, 0.5e6, 0.5e6]);
        let moving = preset("paper-moving-hom").unwrap();
        match moving.poi {
            PoiKind::Moving { start, hop, period, heading } => {
                assert_eq!(start, [4500.0, 4500.0]);
                assert_eq!(hop, 500.0);
                assert_eq!(period, 15.0);
                assert_eq!(heading, -3.0 * FRAC_PI_4);
            }
            other => panic!("expected moving POI, got {other:?}"),
        }
    }

    #[test]
    fn toml_round_trip_is_field_for_field() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            let back = ConfigFile::from_toml(&cfg.to_toml(), "inline").unwrap();
            assert_eq!(cfg, back, "round trip broke preset {name}");
        }
    }

    #[test]
    fn file_round_trip_via_load_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenario.toml");
        let cfg = preset("desk-moving-het").unwrap();
        std::fs::write(&path, cfg.to_toml()).unwrap();
        let loaded = load_config(path.to_str().unwrap()).unwrap();
        assert_eq!(cfg, loaded);
    }

    #[test]
    fn invalid_fields_are_reported_by_name() {
        let mut cfg = preset("desk-fixed-hom").unwrap();
        cfg.capacities_bps.clear();
        let err = cfg.to_sim_config().unwrap_err();
        assert!(err.to_string().contains("capacities_bps"), "got: {err}");

        let mut cfg = preset("desk-fixed-hom").unwrap();
        cfg.mca_altitude_m = cfg.msa_altitude_m;
        let err = cfg.to_sim_config().unwrap_err();
        assert!(err.to_string().contains("mca_altitude_m"), "got: {err}");

        let mut cfg = preset("desk-fixed-hom").unwrap();
        cfg.region_side_m = -5.0;
        assert!(cfg.to_sim_config().is_err());
    }

    #[test]
    fn unknown_spec_is_a_named_io_error() {
        let err = load_config("no-such-preset-or-file").unwrap_err();
        assert!(err.to_string().contains("no-such-preset-or-file"));
    }
}
