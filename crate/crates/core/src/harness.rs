//! Monte-Carlo BER experiments.
//!
//! Every block draws its channel, information symbols and a unit-variance
//! noise vector from an RNG keyed by `(master seed, Doppler scale, block
//! index)`. The SNR, subblock count, subband count and receiver algorithm do
//! not enter the key, so all receivers and SNRs at one Doppler value see
//! identical blocks and only the noise scaling differs. Results therefore do
//! not depend on worker count or scheduling.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{
    add_scaled_noise, draw_channel, draw_unit_noise, freq_response, noise_variance_for_snr, synthesize_noiseless,
    ChannelRealization, DopplerMode, LinkGeometry,
};
use crate::error::{invalid, Error, Result};
use crate::ofdm::{bit_errors_between, differential_encode_indices, PilotLayout, PskConstellation};
use crate::transform::{partial_fft_demodulate, UnitaryDft};
use crate::weights::{
    build_error_set, build_pilot_error_matrix, detect_block, solve_weights_adaptive, solve_weights_eigen,
    solve_weights_wideband, SubbandWeights, WeightSolution,
};

/// Subcarriers whose channel gain falls below this are skipped by the coherent oracle.
const COHERENT_GAIN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    SingleFft,
    Eigen,
    EigenWideband,
    Adaptive,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::SingleFft => "single-fft",
            Algorithm::Eigen => "eigen",
            Algorithm::EigenWideband => "eigen-wideband",
            Algorithm::Adaptive => "adaptive",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "single-fft" => Ok(Algorithm::SingleFft),
            "eigen" => Ok(Algorithm::Eigen),
            "eigen-wideband" => Ok(Algorithm::EigenWideband),
            "adaptive" => Ok(Algorithm::Adaptive),
            other => invalid(format!("unknown algorithm '{other}'")),
        }
    }
}

/// Link parameters shared by every point of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub subcarriers: usize,
    pub constellation_order: usize,
    pub bandwidth: f64,
    pub carrier: f64,
    /// `L + 1`.
    pub channel_taps: usize,
    /// `I` for single-band receivers, `Ī` (per subband) for `eigen-wideband`.
    pub pilots: usize,
    pub doppler_mode: DopplerMode,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            subcarriers: 1024,
            constellation_order: 4,
            bandwidth: 4096.0,
            carrier: 6000.0,
            channel_taps: 48,
            pilots: 32,
            doppler_mode: DopplerMode::Wideband,
        }
    }
}

impl SystemConfig {
    pub fn geometry(&self) -> Result<LinkGeometry> {
        LinkGeometry::new(self.bandwidth, self.carrier, self.subcarriers)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub system: SystemConfig,
    pub snr_db: Vec<f64>,
    pub doppler: Vec<f64>,
    pub subblocks: Vec<usize>,
    pub subbands: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    pub mu: Vec<f64>,
    pub blocks_per_point: usize,
    pub master_seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            snr_db: vec![25.0],
            doppler: vec![2.5e-4],
            subblocks: vec![8],
            subbands: vec![1],
            algorithms: vec![Algorithm::Eigen],
            mu: vec![1e-3],
            blocks_per_point: 500,
            master_seed: 1,
        }
    }
}

/// One receiver configuration at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub doppler: f64,
    pub subblocks: usize,
    pub subbands: usize,
    pub algorithm: Algorithm,
    pub mu: Option<f64>,
}

impl SweepPoint {
    pub fn pilot_layout(&self, system: &SystemConfig) -> Result<PilotLayout> {
        let k = system.subcarriers;
        match self.algorithm {
            Algorithm::SingleFft => Ok(PilotLayout::empty(k)),
            Algorithm::Eigen => PilotLayout::equispaced(k, system.pilots),
            Algorithm::EigenWideband => PilotLayout::per_subband(k, self.subbands, system.pilots),
            Algorithm::Adaptive => PilotLayout::contiguous(k, system.pilots),
        }
    }
}

impl ExperimentSpec {
    /// Cartesian product of the sweep axes in canonical order: Doppler, then
    /// algorithm, subblocks, subbands, step size, SNR. Axes that do not apply
    /// to an algorithm collapse (single-FFT uses `M = N = 1`, only
    /// `eigen-wideband` sweeps `N`, only `adaptive` sweeps `μ`).
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut points = Vec::new();
        for &doppler in &self.doppler {
            for &algorithm in &self.algorithms {
                let subblocks: &[usize] = if algorithm == Algorithm::SingleFft {
                    &[1]
                } else {
                    &self.subblocks
                };
                let subbands: &[usize] = if algorithm == Algorithm::EigenWideband {
                    &self.subbands
                } else {
                    &[1]
                };
                let mus: Vec<Option<f64>> = if algorithm == Algorithm::Adaptive {
                    self.mu.iter().copied().map(Some).collect()
                } else {
                    vec![None]
                };
                for &m in subblocks {
                    for &n in subbands {
                        for &mu in &mus {
                            for &snr_db in &self.snr_db {
                                points.push(SweepPoint {
                                    snr_db,
                                    doppler,
                                    subblocks: m,
                                    subbands: n,
                                    algorithm,
                                    mu,
                                });
                            }
                        }
                    }
                }
            }
        }
        points
    }

    pub fn validate(&self) -> Result<()> {
        let sys = &self.system;
        if sys.subcarriers < 2 || !sys.subcarriers.is_power_of_two() {
            return invalid(format!(
                "subcarriers must be a power of two >= 2, got {}",
                sys.subcarriers
            ));
        }
        PskConstellation::new(sys.constellation_order)?;
        sys.geometry()?;
        if sys.channel_taps == 0 || sys.channel_taps > sys.subcarriers {
            return invalid(format!(
                "channel taps must be in 1..={}, got {}",
                sys.subcarriers, sys.channel_taps
            ));
        }
        if self.blocks_per_point == 0 {
            return invalid("blocks per point must be at least 1");
        }
        for (name, empty) in [
            ("snr", self.snr_db.is_empty()),
            ("doppler", self.doppler.is_empty()),
            ("subblocks", self.subblocks.is_empty()),
            ("subbands", self.subbands.is_empty()),
            ("algorithm", self.algorithms.is_empty()),
        ] {
            if empty {
                return invalid(format!("{name} axis is empty"));
            }
        }
        if self.algorithms.contains(&Algorithm::Adaptive) && self.mu.is_empty() {
            return invalid("adaptive algorithm requires at least one step size");
        }
        if let Some(snr) = self.snr_db.iter().find(|s| s.is_nan() || **s == f64::NEG_INFINITY) {
            return invalid(format!("invalid SNR {snr}"));
        }
        if let Some(a) = self.doppler.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return invalid(format!("Doppler scale must be finite and >= 0, got {a}"));
        }
        if let Some(mu) = self.mu.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return invalid(format!("step size must be finite and >= 0, got {mu}"));
        }
        for &m in &self.subblocks {
            if m == 0 || !sys.subcarriers.is_multiple_of(m) {
                return invalid(format!("{m} subblocks do not divide {} subcarriers", sys.subcarriers));
            }
        }
        for &n in &self.subbands {
            if n == 0 || !sys.subcarriers.is_multiple_of(n) {
                return invalid(format!("{n} subbands do not divide {} subcarriers", sys.subcarriers));
            }
        }
        for point in self.points() {
            point.pilot_layout(sys).map_err(|e| {
                Error::InvalidArgument(format!(
                    "{} pilots do not fit the {} receiver with {} subbands: {e}",
                    sys.pilots, point.algorithm, point.subbands
                ))
            })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BerCount {
    pub bit_errors: u64,
    pub total_bits: u64,
}

impl BerCount {
    pub fn ber(&self) -> f64 {
        self.bit_errors as f64 / self.total_bits as f64
    }

    /// Binomial standard deviation of the BER estimate.
    pub fn sigma(&self) -> f64 {
        let p = self.ber();
        (p * (1.0 - p) / self.total_bits as f64).sqrt()
    }

    fn add(&mut self, other: BerCount) {
        self.bit_errors += other.bit_errors;
        self.total_bits += other.total_bits;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerRecord {
    pub snr_db: f64,
    pub doppler: f64,
    pub subblocks: usize,
    pub subbands: usize,
    /// Total pilot subcarriers per block.
    pub pilots: usize,
    pub algorithm: Algorithm,
    pub mu: Option<f64>,
    pub blocks: usize,
    pub bit_errors: u64,
    pub total_bits: u64,
    pub ber: f64,
    /// Mean smallest eigenvalue over all eigen solves; `None` for other receivers.
    pub lambda_min_mean: Option<f64>,
    pub degenerate_count: u64,
}

impl BerRecord {
    pub fn count(&self) -> BerCount {
        BerCount {
            bit_errors: self.bit_errors,
            total_bits: self.total_bits,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.count().sigma()
    }
}

/// Everything random about one block, shared by all receivers.
struct BlockDraw {
    taps: Vec<Complex64>,
    info: Vec<usize>,
    coded: Vec<usize>,
    clean: Vec<Complex64>,
    unit_noise: Vec<Complex64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct BlockOutcome {
    count: BerCount,
    lambda_sum: f64,
    lambda_solves: u64,
    degenerate: u64,
}

/// Shared per-experiment state.
struct Context {
    system: SystemConfig,
    constellation: PskConstellation,
    dft: UnitaryDft,
    geometry: LinkGeometry,
    seed: u64,
}

impl Context {
    fn new(spec: &ExperimentSpec) -> Result<Self> {
        Ok(Self {
            system: spec.system.clone(),
            constellation: PskConstellation::new(spec.system.constellation_order)?,
            dft: UnitaryDft::new(spec.system.subcarriers)?,
            geometry: spec.system.geometry()?,
            seed: spec.master_seed,
        })
    }

    fn draw(&self, doppler: f64, block: usize) -> Result<BlockDraw> {
        let mut rng = block_rng(self.seed, doppler, block);
        let k = self.system.subcarriers;
        let taps = draw_channel(self.system.channel_taps - 1, &mut rng);
        let order = self.constellation.order();
        let info: Vec<usize> = (1..k).map(|_| rng.random_range(0..order)).collect();
        let unit_noise = draw_unit_noise(k, &mut rng);
        let coded = differential_encode_indices(&info, &self.constellation);
        let symbols: Vec<Complex64> = coded.iter().map(|&q| self.constellation.point(q)).collect();
        let chan = ChannelRealization {
            taps: taps.clone(),
            doppler_scale: doppler,
            mode: self.system.doppler_mode,
            noise_variance: 0.0,
        };
        let clean = synthesize_noiseless(&symbols, &chan, &self.geometry)?;
        Ok(BlockDraw {
            taps,
            info,
            coded,
            clean,
            unit_noise,
        })
    }

    fn received(&self, draw: &BlockDraw, snr_db: f64) -> Vec<Complex64> {
        let mut r = draw.clean.clone();
        add_scaled_noise(&mut r, &draw.unit_noise, noise_variance_for_snr(snr_db));
        r
    }

    fn evaluate(&self, point: &SweepPoint, layout: &PilotLayout, draw: &BlockDraw) -> Result<BlockOutcome> {
        let c = &self.constellation;
        let k_total = self.system.subcarriers;
        let r = self.received(draw, point.snr_db);
        let demod = partial_fft_demodulate(&r, point.subblocks, &self.dft)?;
        let pilot_symbols: Vec<Complex64> = layout.indices().iter().map(|&k| c.point(draw.info[k - 1])).collect();

        let mut outcome = BlockOutcome::default();
        let detected: Vec<(usize, usize)> = match point.algorithm {
            Algorithm::Adaptive => {
                let adaptive = solve_weights_adaptive(&demod, layout, &pilot_symbols, point.mu.unwrap_or(0.0), c)?;
                layout
                    .data_subcarriers()
                    .map(|k| (k, adaptive.decisions[k - 1]))
                    .collect()
            }
            algorithm => {
                let solution = match algorithm {
                    Algorithm::SingleFft => WeightSolution::all_ones(k_total, point.subblocks)?,
                    Algorithm::Eigen => {
                        let errs = build_error_set(&demod, layout.indices(), &pilot_symbols)?;
                        WeightSolution::single(k_total, solve_weights_eigen(&build_pilot_error_matrix(&errs))?)?
                    }
                    _ => solve_weights_wideband(&demod, layout, &pilot_symbols, point.subbands)?,
                };
                for sub in solution.subbands().iter().filter(|s| !s.lambda_min.is_nan()) {
                    record_solve(&mut outcome, sub);
                }
                let det = detect_block(&demod, &solution, layout, c)?;
                det.subcarriers.into_iter().zip(det.symbols).collect()
            }
        };
        for (k, symbol) in detected {
            outcome.count.bit_errors += bit_errors_between(draw.info[k - 1], symbol, c);
            outcome.count.total_bits += c.bits_per_symbol() as u64;
        }
        Ok(outcome)
    }

    /// Genie-referenced coherent detection: `x_k conj(d_{k-1}) / H_k` sliced.
    fn coherent(&self, draw: &BlockDraw, snr_db: f64) -> Result<BerCount> {
        let c = &self.constellation;
        let mut x = self.received(draw, snr_db);
        self.dft.forward_in_place(&mut x);
        let response = freq_response(&draw.taps, self.system.subcarriers)?;
        let mut count = BerCount::default();
        for k in 1..self.system.subcarriers {
            if response[k].norm() < COHERENT_GAIN_FLOOR {
                continue;
            }
            let z = x[k] * c.point(draw.coded[k - 1]).conj() / response[k];
            count.bit_errors += bit_errors_between(draw.info[k - 1], c.nearest(z), c);
            count.total_bits += c.bits_per_symbol() as u64;
        }
        Ok(count)
    }
}

fn record_solve(outcome: &mut BlockOutcome, sub: &SubbandWeights) {
    outcome.lambda_sum += sub.lambda_min;
    outcome.lambda_solves += 1;
    outcome.degenerate += sub.degenerate as u64;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn block_rng(seed: u64, doppler: f64, block: usize) -> ChaCha8Rng {
    let key = splitmix64(splitmix64(splitmix64(seed) ^ doppler.to_bits()) ^ block as u64);
    ChaCha8Rng::seed_from_u64(key)
}

/// Runs every point of the sweep, handing records to `sink` in canonical
/// order as each Doppler group completes. On error, records of completed
/// groups have already been delivered.
pub fn run_sweep_with<F>(spec: &ExperimentSpec, workers: Option<usize>, mut sink: F) -> Result<()>
where
    F: FnMut(&BerRecord),
{
    spec.validate()?;
    let ctx = Context::new(spec)?;
    let points = spec.points();
    let layouts = points
        .iter()
        .map(|p| p.pilot_layout(&spec.system))
        .collect::<Result<Vec<_>>>()?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;

    let mut start = 0;
    while start < points.len() {
        let doppler = points[start].doppler;
        let end = start
            + points[start..]
                .iter()
                .take_while(|p| p.doppler.to_bits() == doppler.to_bits())
                .count();
        let group = &points[start..end];
        let group_layouts = &layouts[start..end];
        log::info!(
            "Doppler {doppler:e}: {} points x {} blocks",
            group.len(),
            spec.blocks_per_point
        );

        let per_block: Vec<Vec<BlockOutcome>> = pool.install(|| {
            (0..spec.blocks_per_point)
                .into_par_iter()
                .map(|block| {
                    let draw = ctx.draw(doppler, block)?;
                    group
                        .iter()
                        .zip(group_layouts)
                        .map(|(point, layout)| ctx.evaluate(point, layout, &draw))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })?;

        for (i, (point, layout)) in group.iter().zip(group_layouts).enumerate() {
            let mut total = BlockOutcome::default();
            for outcomes in &per_block {
                let o = outcomes[i];
                total.count.add(o.count);
                total.lambda_sum += o.lambda_sum;
                total.lambda_solves += o.lambda_solves;
                total.degenerate += o.degenerate;
            }
            sink(&BerRecord {
                snr_db: point.snr_db,
                doppler: point.doppler,
                subblocks: point.subblocks,
                subbands: point.subbands,
                pilots: layout.len(),
                algorithm: point.algorithm,
                mu: point.mu,
                blocks: spec.blocks_per_point,
                bit_errors: total.count.bit_errors,
                total_bits: total.count.total_bits,
                ber: total.count.ber(),
                lambda_min_mean: (total.lambda_solves > 0).then(|| total.lambda_sum / total.lambda_solves as f64),
                degenerate_count: total.degenerate,
            });
        }
        start = end;
    }
    Ok(())
}

pub fn run_sweep(spec: &ExperimentSpec, workers: Option<usize>) -> Result<Vec<BerRecord>> {
    let mut records = Vec::new();
    run_sweep_with(spec, workers, |r| records.push(r.clone()))?;
    Ok(records)
}

/// Runs a single point with the spec's link parameters, seed and depth.
pub fn run_point(spec: &ExperimentSpec, point: SweepPoint) -> Result<BerRecord> {
    let single = ExperimentSpec {
        snr_db: vec![point.snr_db],
        doppler: vec![point.doppler],
        subblocks: vec![point.subblocks],
        subbands: vec![point.subbands],
        algorithms: vec![point.algorithm],
        mu: point.mu.into_iter().collect(),
        ..spec.clone()
    };
    let mut records = run_sweep(&single, None)?;
    match records.len() {
        1 => Ok(records.remove(0)),
        n => invalid(format!("point expanded to {n} records")),
    }
}

/// BER of coherent detection with perfect channel knowledge over the same
/// block stream the differential receivers see at zero Doppler. Requires a
/// time-invariant channel.
pub fn coherent_oracle_ber(spec: &ExperimentSpec, snr_db: f64) -> Result<BerCount> {
    if spec.system.doppler_mode != DopplerMode::TimeInvariant {
        return invalid("coherent oracle requires a time-invariant channel");
    }
    if snr_db.is_nan() {
        return invalid("SNR is NaN");
    }
    let ctx = Context::new(spec)?;
    let counts = (0..spec.blocks_per_point)
        .into_par_iter()
        .map(|block| {
            let draw = ctx.draw(0.0, block)?;
            ctx.coherent(&draw, snr_db)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = BerCount::default();
    counts.into_iter().for_each(|c| total.add(c));
    Ok(total)
}

/// Ready-made experiments matching the three published BER studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Eigen vs adaptive vs single-FFT, `M = 8`, `I = 32`, two Doppler scales.
    Fig2,
    /// BER against subblock count at 25 dB with `I = 128`.
    Fig3,
    /// Subband extension at `a = 5e-4`, `M = 8`, `Ī = 32`.
    Fig4,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
        }
    }

    pub fn spec(self) -> ExperimentSpec {
        let snr_sweep: Vec<f64> = (1..=6).map(|i| 5.0 * i as f64).collect();
        let base = ExperimentSpec::default();
        match self {
            Preset::Fig2 => ExperimentSpec {
                snr_db: snr_sweep,
                doppler: vec![1.5e-4, 2.5e-4],
                subblocks: vec![8],
                subbands: vec![1],
                algorithms: vec![Algorithm::SingleFft, Algorithm::Eigen, Algorithm::Adaptive],
                mu: vec![1e-4, 1e-3, 1e-2],
                ..base
            },
            Preset::Fig3 => ExperimentSpec {
                system: SystemConfig {
                    pilots: 128,
                    ..SystemConfig::default()
                },
                snr_db: vec![25.0],
                doppler: (1..=5).map(|i| i as f64 * 1e-4).collect(),
                subblocks: vec![1, 2, 4, 8, 16, 32],
                subbands: vec![1],
                algorithms: vec![Algorithm::Eigen],
                ..base
            },
            Preset::Fig4 => ExperimentSpec {
                snr_db: snr_sweep,
                doppler: vec![5e-4],
                subblocks: vec![8],
                subbands: vec![1, 2, 4, 8],
                algorithms: vec![Algorithm::EigenWideband],
                ..base
            },
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fig2" => Ok(Preset::Fig2),
            "fig3" => Ok(Preset::Fig3),
            "fig4" => Ok(Preset::Fig4),
            other => invalid(format!("unknown preset '{other}' (expected fig2, fig3 or fig4)")),
        }
    }
}
