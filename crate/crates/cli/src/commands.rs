//! Subcommand dispatch. Each command returns its artifacts in memory; the
//! caller decides where they land.

use std::path::{Path, PathBuf};

use hopf_core::adiabatic::{
    build_schedule, equal_split, mle_tomography, prepare_state, run_campaign, simulate_measurements, CampaignConfig,
    Control, RampConfig, Readout, SAMPLE_DT,
};
use hopf_core::bzgrid::{sample_state_field, FieldFile, MeshSpec, Provenance, StateField};
use hopf_core::invariants::{chern_numbers, index_report, scaling_study, ChernNumbers, ScalingTable};
use hopf_core::io::{from_json_slice, to_json_vec};
use hopf_core::model::{ground_state, HopfParams, MomentumPoint};
use hopf_core::preimage::{epsilon_neighborhood, link_matrix_with, preimage_contours, EpsilonQuery, PolylineFile};
use hopf_core::HopfError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Command, Format, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Engine(#[from] HopfError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Engine(_) => 1,
            CliError::Io { .. } | CliError::Parse { .. } => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Engine(e) => e.kind(),
            CliError::Io { .. } => "Io",
            CliError::Parse { .. } => "Parse",
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

/// One output file: its default name and its bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn json<T: Serialize>(name: &str, value: &T) -> Self {
        // all artifact types are plain data; serialization cannot fail
        Self { name: format!("{name}.json"), bytes: to_json_vec(value).expect("serializable artifact") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChernReport {
    pub h: f64,
    pub n: usize,
    pub chern_numbers: ChernNumbers,
    pub all_zero: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub tables: Vec<ScalingTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextureSite {
    pub site: [usize; 3],
    pub k: [f64; 3],
    pub s: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureReport {
    pub h: f64,
    pub n: usize,
    pub provenance: Provenance,
    pub sites: Vec<TextureSite>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreimageReport {
    pub h: f64,
    pub res: usize,
    pub target: [f64; 3],
    pub loops: Vec<PolylineFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborSite {
    pub site: [usize; 3],
    pub s: [f64; 3],
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodReport {
    pub h: f64,
    pub n: usize,
    pub target: [f64; 3],
    pub epsilon: f64,
    pub sites: Vec<NeighborSite>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSample {
    pub t: f64,
    #[serde(flatten)]
    pub control: Control,
}

/// Single-site tomography of the prepared state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteTomography {
    pub readout: Readout,
    pub photons: u64,
    pub seed: u64,
    /// Density matrix as 8 reals, row-major `(re, im)` pairs.
    pub rho: [f64; 8],
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticReport {
    pub h: f64,
    /// Momentum in radians.
    pub k: [f64; 3],
    pub ramp: RampConfig,
    pub dt: f64,
    pub samples: Vec<ScheduleSample>,
    /// Spinors as `[Re↑, Im↑, Re↓, Im↓]`.
    pub final_state: [f64; 4],
    pub target: [f64; 4],
    pub fidelity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tomography: Option<SiteTomography>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

pub fn load_field(path: &Path) -> Result<StateField, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let file: FieldFile =
        from_json_slice(&bytes).map_err(|e| CliError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    Ok(StateField::from_file(&file)?)
}

fn input_field(c: &RunConfig) -> Result<StateField, CliError> {
    match &c.field {
        Some(path) => load_field(path),
        None => Ok(sample_state_field(&HopfParams::new(c.h())?, MeshSpec::new(c.n())?)?),
    }
}

fn photon_budget(photons: u64) -> Option<u64> {
    (photons > 0).then_some(photons)
}

/// Runs the engine for `c`. `stamp` fills every `generated_at` field.
pub fn dispatch(c: &RunConfig, stamp: &str) -> Result<Vec<Artifact>, CliError> {
    let stamp = Some(stamp.to_string());
    let name = c.command.name();
    let one = |a: Artifact| Ok(vec![a]);
    match c.command {
        Command::Field => {
            let field = input_field(c)?;
            let mut file = field.to_file();
            file.generated_at = stamp;
            one(Artifact::json(name, &file))
        }
        Command::Index => {
            let mut report = index_report(&input_field(c)?)?;
            report.generated_at = stamp;
            one(Artifact::json(name, &report))
        }
        Command::Chern => {
            let field = input_field(c)?;
            let chern = chern_numbers(&field)?;
            let report = ChernReport {
                h: field.params.h,
                n: field.mesh.n(),
                all_zero: chern.all_zero(),
                chern_numbers: chern,
                generated_at: stamp,
            };
            one(Artifact::json(name, &report))
        }
        Command::Scaling => {
            let tables = c.h.iter().map(|&h| scaling_study(h, &c.n)).collect::<Result<Vec<_>, _>>()?;
            one(Artifact::json(name, &ScalingReport { tables, generated_at: stamp }))
        }
        Command::Texture => {
            let field = input_field(c)?;
            match c.format {
                Format::Csv => one(Artifact { name: format!("{name}.csv"), bytes: field.texture_csv().into_bytes() }),
                Format::Json => {
                    let sites = field
                        .mesh
                        .sites()
                        .enumerate()
                        .map(|(i, site)| TextureSite {
                            site,
                            k: field.mesh.momentum(site).to_array(),
                            s: field.bloch(i).to_array(),
                        })
                        .collect();
                    let report = TextureReport {
                        h: field.params.h,
                        n: field.mesh.n(),
                        provenance: field.provenance,
                        sites,
                        generated_at: stamp,
                    };
                    one(Artifact::json(name, &report))
                }
            }
        }
        Command::Preimage => {
            let p = HopfParams::new(c.h())?;
            let target = c.targets()[0];
            let loops = preimage_contours(&p, &target, c.res)?;
            let report = PreimageReport {
                h: p.h,
                res: c.res,
                target: target.bloch().to_array(),
                loops: loops.iter().map(|l| PolylineFile::new(l, &target, p.h)).collect(),
                generated_at: stamp,
            };
            one(Artifact::json(name, &report))
        }
        Command::Neighborhood => {
            let field = input_field(c)?;
            let target = c.targets()[0];
            let eps = c.eps.expect("validated epsilon");
            let q = EpsilonQuery::new(target, eps)?;
            let sites = epsilon_neighborhood(&field, &q)
                .into_iter()
                .map(|(site, s)| NeighborSite { site, s: s.to_array(), distance: s.distance(target.bloch()) })
                .collect();
            let report = NeighborhoodReport {
                h: field.params.h,
                n: field.mesh.n(),
                target: target.bloch().to_array(),
                epsilon: eps,
                sites,
                generated_at: stamp,
            };
            one(Artifact::json(name, &report))
        }
        Command::Link => {
            let p = HopfParams::new(c.h())?;
            let mut m = link_matrix_with(&p, &c.targets(), c.res, c.route.route())?;
            m.generated_at = stamp;
            one(Artifact::json(name, &m))
        }
        Command::Adiabatic => {
            let p = HopfParams::new(c.h())?;
            let k = MomentumPoint::from_fractions(c.k);
            let schedule = build_schedule(&k, &p)?;
            let prepared = prepare_state(&k, &p, schedule.config, SAMPLE_DT)?;
            let target = ground_state(&k, &p)?;
            let tomography = match photon_budget(c.photons) {
                None => None,
                Some(photons) => {
                    let readout = c.readout.readout();
                    let record = simulate_measurements(&prepared, equal_split(photons), readout, c.seed, 0)?;
                    let t = mle_tomography(&record)?.against(&target);
                    Some(SiteTomography { readout, photons, seed: c.seed, rho: t.rho.to_reals(), fidelity: t.fidelity })
                }
            };
            let report = AdiabaticReport {
                h: p.h,
                k: k.to_array(),
                ramp: schedule.config,
                dt: SAMPLE_DT,
                samples: schedule.samples().into_iter().map(|(t, control)| ScheduleSample { t, control }).collect(),
                final_state: prepared.to_reals(),
                target: target.to_reals(),
                fidelity: target.inner(&prepared).norm_sqr(),
                tomography,
                generated_at: stamp,
            };
            one(Artifact::json(name, &report))
        }
        Command::Campaign => {
            let p = HopfParams::new(c.h())?;
            let config = CampaignConfig {
                photons: photon_budget(c.photons),
                seed: c.seed,
                readout: c.readout.readout(),
                ..CampaignConfig::default()
            };
            let result = run_campaign(&p, MeshSpec::new(c.n())?, &config)?;
            let mut field = result.field.to_file();
            field.generated_at = stamp.clone();
            let mut stats = result.stats;
            stats.generated_at = stamp;
            Ok(vec![Artifact::json("campaign_field", &field), Artifact::json("campaign_stats", &stats)])
        }
    }
}
