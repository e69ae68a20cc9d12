//! `pfft-sim` command line: configuration layering, sweep execution and CSV output.
//!
//! Settings are layered as built-in defaults, then the preset, then the
//! config file, then explicit flags. The config file is flat `key = value`
//! text with `#` comments; keys match the long flag names. The CSV header
//! repeats every effective setting in the same `# key = value` form.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::Parser;

use crate::channel::DopplerMode;
use crate::error::{Error, Result};
use crate::harness::{run_sweep_with, Algorithm, BerRecord, ExperimentSpec, Preset};

pub const CSV_COLUMNS: &str =
    "snr_db,doppler_a,M,N,I,algorithm,mu,blocks,bit_errors,total_bits,ber,lambda_min_mean,degenerate_count";

const DEFAULT_OUTPUT: &str = "results.csv";

/// Informational header keys that the config parser accepts and ignores.
const INFO_KEYS: [&str; 3] = ["tool", "snr_convention", "bit_mapping"];

#[derive(Debug, Parser)]
#[command(
    name = "pfft-sim",
    version,
    about = "Monte-Carlo BER sweeps for partial FFT demodulation of differential OFDM"
)]
pub struct CliArgs {
    /// Flat `key = value` configuration file
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Experiment preset: fig2, fig3 or fig4
    #[arg(long, value_parser = parse_value::<Preset>)]
    preset: Option<Preset>,
    /// SNR values in dB (comma separated; `inf` for noiseless)
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    snr: Vec<f64>,
    /// Doppler scaling factors
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    doppler: Vec<f64>,
    /// Partial FFT subblock counts M
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    subblocks: Vec<usize>,
    /// Subband counts N (eigen-wideband only)
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    subbands: Vec<usize>,
    /// Pilots per block, or per subband for eigen-wideband
    #[arg(long, value_name = "INT")]
    pilots: Option<usize>,
    /// Receivers: single-fft, eigen, eigen-wideband, adaptive
    #[arg(long, value_delimiter = ',', value_name = "LIST", value_parser = parse_value::<Algorithm>)]
    algorithm: Vec<Algorithm>,
    /// Adaptive step sizes
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    mu: Vec<f64>,
    /// Monte-Carlo blocks per point
    #[arg(long, value_name = "INT")]
    blocks: Option<usize>,
    /// Master RNG seed
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    /// Worker thread cap
    #[arg(long, value_name = "INT")]
    workers: Option<usize>,
    /// CSV destination
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Subcarrier count K
    #[arg(long, value_name = "INT")]
    subcarriers: Option<usize>,
    /// PSK constellation order Q
    #[arg(long, value_name = "INT")]
    order: Option<usize>,
    /// Bandwidth B in Hz
    #[arg(long, value_name = "HZ")]
    bandwidth: Option<f64>,
    /// Carrier frequency in Hz
    #[arg(long, value_name = "HZ")]
    carrier: Option<f64>,
    /// Channel tap count L + 1
    #[arg(long, value_name = "INT")]
    taps: Option<usize>,
    /// Doppler model: time-invariant, narrowband, wideband
    #[arg(long, value_parser = parse_value::<DopplerMode>)]
    mode: Option<DopplerMode>,
    /// Increase log verbosity (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn parse_value<T: std::str::FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Optional overrides from one configuration layer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub preset: Option<Preset>,
    pub snr: Option<Vec<f64>>,
    pub doppler: Option<Vec<f64>>,
    pub subblocks: Option<Vec<usize>>,
    pub subbands: Option<Vec<usize>>,
    pub pilots: Option<usize>,
    pub algorithm: Option<Vec<Algorithm>>,
    pub mu: Option<Vec<f64>>,
    pub blocks: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub subcarriers: Option<usize>,
    pub order: Option<usize>,
    pub bandwidth: Option<f64>,
    pub carrier: Option<f64>,
    pub taps: Option<usize>,
    pub mode: Option<DopplerMode>,
}

fn list<T>(v: Vec<T>) -> Option<Vec<T>> {
    (!v.is_empty()).then_some(v)
}

impl From<CliArgs> for Settings {
    fn from(a: CliArgs) -> Self {
        Settings {
            preset: a.preset,
            snr: list(a.snr),
            doppler: list(a.doppler),
            subblocks: list(a.subblocks),
            subbands: list(a.subbands),
            pilots: a.pilots,
            algorithm: list(a.algorithm),
            mu: list(a.mu),
            blocks: a.blocks,
            seed: a.seed,
            workers: a.workers,
            out: a.out,
            subcarriers: a.subcarriers,
            order: a.order,
            bandwidth: a.bandwidth,
            carrier: a.carrier,
            taps: a.taps,
            mode: a.mode,
        }
    }
}

fn parse_scalar<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse '{value}' for '{key}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_scalar(key, s))
        .collect()
}

fn parse_named<T: std::str::FromStr<Err = Error>>(value: &str) -> Result<T> {
    value.trim().parse().map_err(|e: Error| Error::Config(e.to_string()))
}

impl Settings {
    /// Parses flat `key = value` text; `#` starts a comment.
    pub fn parse_config(text: &str) -> Result<Self> {
        let mut s = Settings::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "preset" => s.preset = Some(parse_named(value)?),
                "snr" => s.snr = Some(parse_list(key, value)?),
                "doppler" => s.doppler = Some(parse_list(key, value)?),
                "subblocks" => s.subblocks = Some(parse_list(key, value)?),
                "subbands" => s.subbands = Some(parse_list(key, value)?),
                "pilots" => s.pilots = Some(parse_scalar(key, value)?),
                "algorithm" => {
                    s.algorithm = Some(
                        value
                            .split(',')
                            .filter(|v| !v.trim().is_empty())
                            .map(parse_named)
                            .collect::<Result<_>>()?,
                    )
                }
                "mu" => s.mu = Some(parse_list(key, value)?),
                "blocks" => s.blocks = Some(parse_scalar(key, value)?),
                "seed" => s.seed = Some(parse_scalar(key, value)?),
                "workers" => s.workers = Some(parse_scalar(key, value)?),
                "out" => s.out = Some(PathBuf::from(value)),
                "subcarriers" => s.subcarriers = Some(parse_scalar(key, value)?),
                "order" => s.order = Some(parse_scalar(key, value)?),
                "bandwidth" => s.bandwidth = Some(parse_scalar(key, value)?),
                "carrier" => s.carrier = Some(parse_scalar(key, value)?),
                "taps" => s.taps = Some(parse_scalar(key, value)?),
                "mode" => s.mode = Some(parse_named(value)?),
                k if INFO_KEYS.contains(&k) => {}
                other => return Err(Error::Config(format!("line {}: unknown key '{other}'", lineno + 1))),
            }
        }
        Ok(s)
    }

    fn apply(&self, run: &mut RunConfig) {
        let spec = &mut run.spec;
        macro_rules! set {
            ($field:ident => $target:expr) => {
                if let Some(v) = &self.$field {
                    $target = v.clone();
                }
            };
        }
        set!(snr => spec.snr_db);
        set!(doppler => spec.doppler);
        set!(subblocks => spec.subblocks);
        set!(subbands => spec.subbands);
        set!(pilots => spec.system.pilots);
        set!(algorithm => spec.algorithms);
        set!(mu => spec.mu);
        set!(blocks => spec.blocks_per_point);
        set!(seed => spec.master_seed);
        set!(subcarriers => spec.system.subcarriers);
        set!(order => spec.system.constellation_order);
        set!(bandwidth => spec.system.bandwidth);
        set!(carrier => spec.system.carrier);
        set!(taps => spec.system.channel_taps);
        set!(mode => spec.system.doppler_mode);
        set!(out => run.out);
        if let Some(w) = self.workers {
            run.workers = Some(w);
        }
    }
}

/// Fully resolved invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub spec: ExperimentSpec,
    pub workers: Option<usize>,
    pub out: PathBuf,
}

/// Layers defaults, preset, config file and flags.
pub fn resolve(file: Option<&Settings>, flags: &Settings) -> RunConfig {
    let preset = flags.preset.or(file.and_then(|f| f.preset));
    let mut run = RunConfig {
        spec: preset.map(Preset::spec).unwrap_or_default(),
        workers: None,
        out: PathBuf::from(DEFAULT_OUTPUT),
    };
    if let Some(file) = file {
        file.apply(&mut run);
    }
    flags.apply(&mut run);
    run
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// `# key = value` header lines describing the effective configuration.
pub fn header_lines(run: &RunConfig) -> Vec<String> {
    let spec = &run.spec;
    let sys = &spec.system;
    let mut lines = vec![
        format!("tool = pfft-sim {}", env!("CARGO_PKG_VERSION")),
        "snr_convention = mean per-sample signal power over noise variance (unit-energy channel and constellation)"
            .to_string(),
        "bit_mapping = gray".to_string(),
        format!("subcarriers = {}", sys.subcarriers),
        format!("order = {}", sys.constellation_order),
        format!("bandwidth = {}", sys.bandwidth),
        format!("carrier = {}", sys.carrier),
        format!("taps = {}", sys.channel_taps),
        format!("mode = {}", sys.doppler_mode),
        format!("pilots = {}", sys.pilots),
        format!("snr = {}", join(&spec.snr_db)),
        format!("doppler = {}", join(&spec.doppler)),
        format!("subblocks = {}", join(&spec.subblocks)),
        format!("subbands = {}", join(&spec.subbands)),
        format!("algorithm = {}", join(&spec.algorithms)),
        format!("mu = {}", join(&spec.mu)),
        format!("blocks = {}", spec.blocks_per_point),
        format!("seed = {}", spec.master_seed),
    ];
    if let Some(w) = run.workers {
        lines.push(format!("workers = {w}"));
    }
    lines.into_iter().map(|l| format!("# {l}")).collect()
}

pub fn csv_row(r: &BerRecord) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.snr_db,
        r.doppler,
        r.subblocks,
        r.subbands,
        r.pilots,
        r.algorithm,
        opt(r.mu),
        r.blocks,
        r.bit_errors,
        r.total_bits,
        r.ber,
        opt(r.lambda_min_mean),
        r.degenerate_count
    )
}

/// Runs the sweep and streams the CSV to `run.out`. Rows of completed
/// Doppler groups stay in the file if a later group fails.
pub fn execute(run: &RunConfig) -> Result<usize> {
    run.spec.validate()?;
    let file =
        File::create(&run.out).map_err(|e| Error::Config(format!("cannot create '{}': {e}", run.out.display())))?;
    let mut out = BufWriter::new(file);
    for line in header_lines(run) {
        writeln!(out, "{line}")?;
    }
    writeln!(out, "{CSV_COLUMNS}")?;
    let mut rows = 0;
    let mut io_error = None;
    let result = run_sweep_with(&run.spec, run.workers, |record| {
        if io_error.is_none() {
            if let Err(e) = writeln!(out, "{}", csv_row(record)).and_then(|_| out.flush()) {
                io_error = Some(e);
            }
        }
        rows += 1;
        log::info!(
            "{} M={} N={} a={} snr={} ber={}",
            record.algorithm,
            record.subblocks,
            record.subbands,
            record.doppler,
            record.snr_db,
            record.ber
        );
    });
    out.flush()?;
    if let Some(e) = io_error {
        return Err(e.into());
    }
    result.map(|_| rows)
}

fn read_config(path: &Path) -> Result<Settings> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config '{}': {e}", path.display())))?;
    Settings::parse_config(&text)
}

/// Entry point behind the binary; returns the process exit code.
pub fn parse_and_run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match CliArgs::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    let level = match args.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();

    let file = match args.config.as_deref().map(read_config).transpose() {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let run = resolve(file.as_ref(), &Settings::from(args));
    if let Err(e) = run.spec.validate() {
        eprintln!("error: {e}");
        return 2;
    }
    match execute(&run) {
        Ok(rows) => {
            eprintln!("wrote {rows} records to {}", run.out.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
