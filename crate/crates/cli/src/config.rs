//! Flag and config-file parsing into a validated [`RunConfig`].
//!
//! Every subcommand shares one flag set; each accepts only the subset listed
//! in [`allowed`]. A config file uses the flag names as TOML keys and is
//! overridden key by key by flags given on the command line.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use hopf_core::adiabatic::{Readout, DEFAULT_PHOTONS};
use hopf_core::bzgrid::MeshSpec;
use hopf_core::model::HopfParams;
use hopf_core::preimage::{LinkRoute, SpinTarget, MIN_RES};
use serde::Deserialize;

pub const DEFAULT_N: usize = 10;
pub const DEFAULT_RES: usize = 64;
pub const DEFAULT_SEED: u64 = 0;
/// Momentum of the single-site passage, in units of 2π.
pub const DEFAULT_K: [f64; 3] = [0.4, 0.3, 0.5];
/// Preimage targets used by `link` when none are given.
pub const DEFAULT_SPINS: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]];

/// Rejected invocation; always names the offending flag or key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> Result<T, UsageError> {
    Err(UsageError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Field,
    Index,
    Chern,
    Scaling,
    Texture,
    Preimage,
    Neighborhood,
    Link,
    Adiabatic,
    Campaign,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Field => "field",
            Command::Index => "index",
            Command::Chern => "chern",
            Command::Scaling => "scaling",
            Command::Texture => "texture",
            Command::Preimage => "preimage",
            Command::Neighborhood => "neighborhood",
            Command::Link => "link",
            Command::Adiabatic => "adiabatic",
            Command::Campaign => "campaign",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadoutKind {
    Ideal,
    #[default]
    Nv,
}

impl ReadoutKind {
    pub fn readout(self) -> Readout {
        match self {
            ReadoutKind::Ideal => Readout::Ideal,
            ReadoutKind::Nv => Readout::NV,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteKind {
    #[default]
    Torus,
    Embedded,
}

impl RouteKind {
    pub fn route(self) -> LinkRoute {
        match self {
            RouteKind::Torus => LinkRoute::Torus,
            RouteKind::Embedded => LinkRoute::Embedded,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hopf", version, about = "Hopf-insulator invariants, preimage links and tomography campaigns")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Analytic ground-state field on an n×n×n mesh.
    Field(Options),
    /// Hopf index and slice Chern numbers.
    Index(Options),
    /// Slice Chern numbers only.
    Chern(Options),
    /// Hopf-index deviation against mesh size.
    Scaling(Options),
    /// Bloch-vector texture (JSON or CSV).
    Texture(Options),
    /// Preimage loops of one spin orientation.
    Preimage(Options),
    /// Mesh sites within epsilon of a spin orientation.
    Neighborhood(Options),
    /// Pairwise linking numbers of preimages.
    Link(Options),
    /// Adiabatic passage at a single momentum.
    Adiabatic(Options),
    /// Passage, readout and tomography over the whole mesh.
    Campaign(Options),
}

impl Sub {
    fn split(self) -> (Command, Options) {
        match self {
            Sub::Field(o) => (Command::Field, o),
            Sub::Index(o) => (Command::Index, o),
            Sub::Chern(o) => (Command::Chern, o),
            Sub::Scaling(o) => (Command::Scaling, o),
            Sub::Texture(o) => (Command::Texture, o),
            Sub::Preimage(o) => (Command::Preimage, o),
            Sub::Neighborhood(o) => (Command::Neighborhood, o),
            Sub::Link(o) => (Command::Link, o),
            Sub::Adiabatic(o) => (Command::Adiabatic, o),
            Sub::Campaign(o) => (Command::Campaign, o),
        }
    }
}

/// Raw flags; unset flags stay `None`/empty so file values can fill them.
#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// Model parameter (repeatable for scaling).
    #[arg(long = "h", allow_negative_numbers = true)]
    pub h: Vec<f64>,
    /// Mesh size (repeatable for scaling) [default: 10].
    #[arg(long)]
    pub n: Vec<usize>,
    /// Spin orientation "x,y,z", normalized (repeatable for link).
    #[arg(long, allow_hyphen_values = true)]
    pub spin: Vec<String>,
    /// Several orientations "x,y,z;x,y,z;...".
    #[arg(long, allow_hyphen_values = true)]
    pub spins: Option<String>,
    /// Bloch-distance tolerance for neighborhood, in (0, 2].
    #[arg(long)]
    pub eps: Option<f64>,
    /// Contouring grid resolution per axis [default: 64].
    #[arg(long)]
    pub res: Option<usize>,
    /// Photon budget per site; 0 reads out exact probabilities [default: 93000].
    #[arg(long)]
    pub photons: Option<u64>,
    /// Campaign seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Momentum "fx,fy,fz" in units of 2π [default: 0.4,0.3,0.5].
    #[arg(long, allow_hyphen_values = true)]
    pub k: Option<String>,
    /// Readout model [default: nv].
    #[arg(long, value_enum)]
    pub readout: Option<ReadoutKind>,
    /// Linking route [default: torus].
    #[arg(long, value_enum)]
    pub route: Option<RouteKind>,
    /// Input field JSON instead of an analytic field.
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Output file (directory for campaign).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format; csv is available for texture only [default: json].
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads, 0 = all cores [default: 0].
    #[arg(long)]
    pub threads: Option<usize>,
    /// TOML file with defaults for any of the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Config-file keys mirror the flags.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileOptions {
    h: Option<OneOrMany<f64>>,
    n: Option<OneOrMany<usize>>,
    spin: Option<OneOrMany<String>>,
    spins: Option<String>,
    eps: Option<f64>,
    res: Option<usize>,
    photons: Option<u64>,
    seed: Option<u64>,
    k: Option<String>,
    readout: Option<ReadoutKind>,
    route: Option<RouteKind>,
    field: Option<PathBuf>,
    out: Option<PathBuf>,
    format: Option<Format>,
    threads: Option<usize>,
}

/// Validated invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub h: Vec<f64>,
    pub n: Vec<usize>,
    pub spins: Vec<[f64; 3]>,
    pub eps: Option<f64>,
    pub res: usize,
    pub photons: u64,
    pub seed: u64,
    pub k: [f64; 3],
    pub readout: ReadoutKind,
    pub route: RouteKind,
    pub field: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub threads: usize,
}

impl RunConfig {
    /// The single model parameter of a non-scaling command.
    pub fn h(&self) -> f64 {
        self.h[0]
    }

    pub fn n(&self) -> usize {
        self.n[0]
    }

    pub fn targets(&self) -> Vec<SpinTarget> {
        // directions were checked nonzero during validation
        self.spins.iter().map(|&s| SpinTarget::from_direction(s).expect("validated spin")).collect()
    }
}

const ALL_KEYS: [&str; 15] =
    ["h", "n", "spin", "spins", "eps", "res", "photons", "seed", "k", "readout", "route", "field", "out", "format", "threads"];

/// Keys each subcommand accepts besides `out`, `threads` and `config`.
pub fn allowed(c: Command) -> &'static [&'static str] {
    match c {
        Command::Field => &["h", "n", "format"],
        Command::Index | Command::Chern => &["h", "n", "field", "format"],
        Command::Scaling => &["h", "n", "format"],
        Command::Texture => &["h", "n", "field", "format"],
        Command::Preimage => &["h", "spin", "res", "format"],
        Command::Neighborhood => &["h", "n", "field", "spin", "eps", "format"],
        Command::Link => &["h", "spin", "spins", "res", "route", "format"],
        Command::Adiabatic => &["h", "k", "photons", "seed", "readout", "format"],
        Command::Campaign => &["h", "n", "photons", "seed", "readout", "format"],
    }
}

fn accepts(c: Command, key: &str) -> bool {
    matches!(key, "out" | "threads") || allowed(c).contains(&key)
}

impl Options {
    fn given(&self) -> Vec<&'static str> {
        let set = [
            !self.h.is_empty(),
            !self.n.is_empty(),
            !self.spin.is_empty(),
            self.spins.is_some(),
            self.eps.is_some(),
            self.res.is_some(),
            self.photons.is_some(),
            self.seed.is_some(),
            self.k.is_some(),
            self.readout.is_some(),
            self.route.is_some(),
            self.field.is_some(),
            self.out.is_some(),
            self.format.is_some(),
            self.threads.is_some(),
        ];
        ALL_KEYS.iter().zip(set).filter(|(_, s)| *s).map(|(k, _)| *k).collect()
    }

    /// Fills every unset flag from the file.
    fn merge(mut self, file: FileOptions) -> Self {
        if self.h.is_empty() {
            self.h = file.h.map(OneOrMany::into_vec).unwrap_or_default();
        }
        if self.n.is_empty() {
            self.n = file.n.map(OneOrMany::into_vec).unwrap_or_default();
        }
        if self.spin.is_empty() && self.spins.is_none() {
            self.spin = file.spin.map(OneOrMany::into_vec).unwrap_or_default();
            self.spins = file.spins;
        }
        self.eps = self.eps.or(file.eps);
        self.res = self.res.or(file.res);
        self.photons = self.photons.or(file.photons);
        self.seed = self.seed.or(file.seed);
        self.k = self.k.or(file.k);
        self.readout = self.readout.or(file.readout);
        self.route = self.route.or(file.route);
        self.field = self.field.or(file.field);
        self.out = self.out.or(file.out);
        self.format = self.format.or(file.format);
        self.threads = self.threads.or(file.threads);
        self
    }
}

impl FileOptions {
    fn given(&self) -> Vec<&'static str> {
        let set = [
            self.h.is_some(),
            self.n.is_some(),
            self.spin.is_some(),
            self.spins.is_some(),
            self.eps.is_some(),
            self.res.is_some(),
            self.photons.is_some(),
            self.seed.is_some(),
            self.k.is_some(),
            self.readout.is_some(),
            self.route.is_some(),
            self.field.is_some(),
            self.out.is_some(),
            self.format.is_some(),
            self.threads.is_some(),
        ];
        ALL_KEYS.iter().zip(set).filter(|(_, s)| *s).map(|(k, _)| *k).collect()
    }
}

/// Parses `"x,y,z"`.
pub fn parse_triple(s: &str) -> Option<[f64; 3]> {
    let parts: Vec<f64> = s.split(',').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    let v: [f64; 3] = parts.try_into().ok()?;
    v.iter().all(|x| x.is_finite()).then_some(v)
}

fn read_file_options(path: &Path) -> Result<FileOptions, UsageError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("--config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| UsageError(format!("--config {}: {e}", path.display())))
}

/// Parses `argv` (program name first) and an optional config file named by
/// `--config`, then validates the result for the chosen subcommand.
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig, ParseOutcome>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(ParseOutcome::Clap)?;
    let (command, opts) = cli.command.split();
    let file = match &opts.config {
        Some(path) => read_file_options(path).map_err(ParseOutcome::Usage)?,
        None => FileOptions::default(),
    };
    for key in opts.given() {
        if !accepts(command, key) {
            return Err(ParseOutcome::Usage(UsageError(format!("--{key} is not accepted by `{}`", command.name()))));
        }
    }
    for key in file.given() {
        if !accepts(command, key) {
            return Err(ParseOutcome::Usage(UsageError(format!(
                "config key `{key}` is not accepted by `{}`",
                command.name()
            ))));
        }
    }
    validate(command, opts.merge(file)).map_err(ParseOutcome::Usage)
}

/// Either clap's own report (help, version, syntax) or a validation failure.
#[derive(Debug)]
pub enum ParseOutcome {
    Clap(clap::Error),
    Usage(UsageError),
}

fn validate(command: Command, o: Options) -> Result<RunConfig, UsageError> {
    let from_field = o.field.is_some();
    if from_field && (!o.h.is_empty() || !o.n.is_empty()) {
        return usage("--field carries its own h and n; drop --h and --n");
    }

    let h = o.h;
    if !from_field {
        match (command, h.len()) {
            (_, 0) => return usage(format!("--h is required by `{}`", command.name())),
            (Command::Scaling, _) | (_, 1) => {}
            _ => return usage(format!("--h may be given once for `{}`", command.name())),
        }
    }
    for &x in &h {
        if HopfParams::new(x).is_err() {
            return usage(format!("--h {x} is not a finite number"));
        }
    }

    let n = if o.n.is_empty() { vec![DEFAULT_N] } else { o.n };
    if n.len() > 1 && command != Command::Scaling {
        return usage(format!("--n may be given once for `{}`", command.name()));
    }
    for &x in &n {
        if let Err(e) = MeshSpec::new(x) {
            return usage(format!("--n {x}: {e}"));
        }
    }

    let mut spins = Vec::new();
    for s in &o.spin {
        spins.push(parse_triple(s).ok_or_else(|| UsageError(format!("--spin {s:?} is not of the form x,y,z")))?);
    }
    if let Some(list) = &o.spins {
        for s in list.split(';').filter(|s| !s.trim().is_empty()) {
            spins.push(parse_triple(s).ok_or_else(|| UsageError(format!("--spins entry {s:?} is not of the form x,y,z")))?);
        }
    }
    for s in &spins {
        if SpinTarget::from_direction(*s).is_err() {
            return usage(format!("--spin {s:?} has zero length"));
        }
    }
    match command {
        Command::Preimage | Command::Neighborhood if spins.len() != 1 => {
            return usage(format!("`{}` needs exactly one --spin", command.name()));
        }
        Command::Link if spins.is_empty() => spins = DEFAULT_SPINS.to_vec(),
        Command::Link if spins.len() < 2 => return usage("`link` needs at least two spins"),
        _ => {}
    }

    if command == Command::Neighborhood {
        match o.eps {
            None => return usage("--eps is required by `neighborhood`"),
            Some(e) if !(e > 0.0 && e <= 2.0) => return usage(format!("--eps {e} must lie in (0, 2]")),
            _ => {}
        }
    }

    let res = o.res.unwrap_or(DEFAULT_RES);
    if res < MIN_RES {
        return usage(format!("--res {res} is below the minimum {MIN_RES}"));
    }

    let k = match &o.k {
        Some(s) => parse_triple(s).ok_or_else(|| UsageError(format!("--k {s:?} is not of the form fx,fy,fz")))?,
        None => DEFAULT_K,
    };

    let format = o.format.unwrap_or_default();
    if format == Format::Csv && command != Command::Texture {
        return usage(format!("--format csv is only available for `texture`, not `{}`", command.name()));
    }

    Ok(RunConfig {
        command,
        h,
        n,
        spins,
        eps: o.eps,
        res,
        photons: o.photons.unwrap_or(DEFAULT_PHOTONS),
        seed: o.seed.unwrap_or(DEFAULT_SEED),
        k,
        readout: o.readout.unwrap_or_default(),
        route: o.route.unwrap_or_default(),
        field: o.field,
        out: o.out,
        format,
        threads: o.threads.unwrap_or(0),
    })
}
