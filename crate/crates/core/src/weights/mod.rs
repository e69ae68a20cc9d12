//! Combining weights for partial FFT demodulation.
//!
//! With a single weight vector `w` for the whole block, the ML differential
//! decision on subcarrier `k` minimizes `w^H R_k(b) w` where
//! `R_k(b) = e_k(b) e_k(b)^H` and `e_k(b) = ȳ_k - ȳ_{k-1} b`. On pilot
//! subcarriers `b` is known, so summing the rank-one terms gives the pilot
//! detection error matrix `R_P = E_P E_P^H`. Minimizing `w^H R_P w` subject to
//! `‖w‖ = sqrt(M)` is solved exactly by the eigenvector of the smallest
//! eigenvalue, with minimum `M λ_min`.
//!
//! The wideband variant repeats the solve per subband using only the pilots
//! inside that subband. The adaptive stochastic-gradient baseline lives in
//! [`adaptive`].

pub mod adaptive;
pub mod eigen;

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::ofdm::{detect_ml, PilotLayout, PskConstellation};
use crate::transform::{combine_unchecked, PartialDemodMatrix};

pub use adaptive::{differential_error_gradient, solve_weights_adaptive, AdaptiveOutcome};
pub use eigen::{hermitian_eig, ComplexMatrix, HermitianEigen};

/// Relative gap `(λ_2 - λ_1) / trace` below which the minimum is flagged degenerate.
pub const DEGENERACY_TOL: f64 = 1e-8;
/// Relative `λ_min / trace` below which `R_P` is treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Pilot error vectors `e_k(b_k)`, one per pilot, ascending pilot index.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionErrorSet {
    subblocks: usize,
    pilot_indices: Vec<usize>,
    // column-major M x I
    columns: Vec<Complex64>,
}

impl DetectionErrorSet {
    pub fn subblocks(&self) -> usize {
        self.subblocks
    }

    pub fn len(&self) -> usize {
        self.pilot_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pilot_indices.is_empty()
    }

    pub fn pilot_indices(&self) -> &[usize] {
        &self.pilot_indices
    }

    pub fn column(&self, i: usize) -> &[Complex64] {
        &self.columns[i * self.subblocks..(i + 1) * self.subblocks]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[Complex64]> {
        self.columns.chunks(self.subblocks)
    }
}

/// Error vector `e_k(b) = ȳ_k - ȳ_{k-1} b`.
pub fn error_vector(demod: &PartialDemodMatrix, k: usize, symbol: Complex64) -> Vec<Complex64> {
    (0..demod.subblocks())
        .map(|m| demod.get(m, k) - demod.get(m, k - 1) * symbol)
        .collect()
}

/// `w^H R_k(b) w = |w^H e_k(b)|^2`.
pub fn error_metric(demod: &PartialDemodMatrix, weights: &[Complex64], k: usize, symbol: Complex64) -> f64 {
    weights
        .iter()
        .zip(error_vector(demod, k, symbol))
        .map(|(w, e)| w.conj() * e)
        .sum::<Complex64>()
        .norm_sqr()
}

/// Stacks `e_{k_i}(b_{k_i})` for the given pilots; `pilot_symbols[i]` is the
/// known `b` on `pilot_indices[i]`.
pub fn build_error_set(
    demod: &PartialDemodMatrix,
    pilot_indices: &[usize],
    pilot_symbols: &[Complex64],
) -> Result<DetectionErrorSet> {
    if pilot_indices.len() != pilot_symbols.len() {
        return invalid(format!(
            "{} pilot indices but {} pilot symbols",
            pilot_indices.len(),
            pilot_symbols.len()
        ));
    }
    if pilot_indices.is_empty() {
        return invalid("at least one pilot is required");
    }
    if pilot_indices.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("pilot indices must be strictly increasing");
    }
    if pilot_indices[0] == 0 {
        return invalid("pilot at subcarrier 0 has no predecessor");
    }
    let last = pilot_indices[pilot_indices.len() - 1];
    if last >= demod.subcarriers() {
        return invalid(format!(
            "pilot index {last} outside {} subcarriers",
            demod.subcarriers()
        ));
    }
    let subblocks = demod.subblocks();
    let mut columns = Vec::with_capacity(subblocks * pilot_indices.len());
    for (&k, &b) in pilot_indices.iter().zip(pilot_symbols) {
        columns.extend(error_vector(demod, k, b));
    }
    Ok(DetectionErrorSet {
        subblocks,
        pilot_indices: pilot_indices.to_vec(),
        columns,
    })
}

/// Hermitian `R_P = E_P E_P^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotErrorMatrix(ComplexMatrix);

impl PilotErrorMatrix {
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn quadratic_form(&self, w: &[Complex64]) -> f64 {
        self.0.quadratic_form(w)
    }
}

pub fn build_pilot_error_matrix(errs: &DetectionErrorSet) -> PilotErrorMatrix {
    let m = errs.subblocks();
    let mut r = ComplexMatrix::zeros(m);
    for e in errs.columns() {
        for i in 0..m {
            for j in i..m {
                r.set(i, j, r.get(i, j) + e[i] * e[j].conj());
            }
        }
    }
    for i in 0..m {
        for j in i + 1..m {
            r.set(j, i, r.get(i, j).conj());
        }
    }
    r.symmetrize();
    PilotErrorMatrix(r)
}

/// Weight vector for one subband plus eigen diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandWeights {
    pub weights: Vec<Complex64>,
    /// Smallest eigenvalue of `R_P`; NaN when the weights were not eigen-derived.
    pub lambda_min: f64,
    /// The two smallest eigenvalues are within `DEGENERACY_TOL · trace`.
    pub degenerate: bool,
    /// `λ_min ≤ RANK_TOL · trace`: fewer informative pilots than subblocks.
    pub rank_deficient: bool,
}

impl SubbandWeights {
    pub fn fixed(weights: Vec<Complex64>) -> Self {
        Self {
            weights,
            lambda_min: f64::NAN,
            degenerate: false,
            rank_deficient: false,
        }
    }
}

/// `w = sqrt(M) v_min`, rotated so that `sum_m w_m` is real and non-negative.
pub fn solve_weights_eigen(rp: &PilotErrorMatrix) -> Result<SubbandWeights> {
    let m = rp.dim();
    let eig = hermitian_eig(rp.matrix())?;
    let trace = rp.trace();
    let lambda_min = eig.values[0];
    let degenerate = m > 1 && eig.values[1] - eig.values[0] <= DEGENERACY_TOL * trace;
    let rank_deficient = lambda_min <= RANK_TOL * trace;
    if rank_deficient {
        log::warn!(
            "pilot error matrix is rank deficient (λ_min = {lambda_min:e}, trace = {trace:e}); weights are not unique"
        );
    } else if degenerate {
        log::warn!("smallest eigenvalue of the pilot error matrix is repeated; weights are not unique");
    }

    let mut weights = eig.vector(0);
    let sum: Complex64 = weights.iter().sum();
    let align = if sum.norm() > 0.0 {
        sum.conj() / sum.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let norm = weights.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let scale = (m as f64).sqrt() / norm;
    weights.iter_mut().for_each(|w| *w *= align * scale);

    Ok(SubbandWeights {
        weights,
        lambda_min,
        degenerate,
        rank_deficient,
    })
}

/// Weight vectors for all subcarriers: subcarrier `k` uses subband `k / (K / N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSolution {
    subcarriers: usize,
    subbands: Vec<SubbandWeights>,
}

impl WeightSolution {
    pub fn new(subcarriers: usize, subbands: Vec<SubbandWeights>) -> Result<Self> {
        if subbands.is_empty() || !subcarriers.is_multiple_of(subbands.len()) {
            return invalid(format!(
                "{} subbands do not divide {subcarriers} subcarriers",
                subbands.len()
            ));
        }
        let m = subbands[0].weights.len();
        if m == 0 || subbands.iter().any(|s| s.weights.len() != m) {
            return invalid("subband weight vectors must share one non-zero length");
        }
        Ok(Self { subcarriers, subbands })
    }

    pub fn single(subcarriers: usize, weights: SubbandWeights) -> Result<Self> {
        Self::new(subcarriers, vec![weights])
    }

    /// `w = 1_M` everywhere: the conventional single-FFT receiver.
    pub fn all_ones(subcarriers: usize, subblocks: usize) -> Result<Self> {
        Self::single(
            subcarriers,
            SubbandWeights::fixed(vec![Complex64::new(1.0, 0.0); subblocks]),
        )
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn subblocks(&self) -> usize {
        self.subbands[0].weights.len()
    }

    pub fn subbands(&self) -> &[SubbandWeights] {
        &self.subbands
    }

    pub fn subband_of(&self, k: usize) -> usize {
        k / (self.subcarriers / self.subbands.len())
    }

    pub fn weights_for(&self, k: usize) -> &[Complex64] {
        &self.subbands[self.subband_of(k)].weights
    }
}

/// Per-subband eigen solution with the pilots falling inside each subband.
/// `pilot_symbols[i]` belongs to `pilots.indices()[i]`.
pub fn solve_weights_wideband(
    demod: &PartialDemodMatrix,
    pilots: &PilotLayout,
    pilot_symbols: &[Complex64],
    subbands: usize,
) -> Result<WeightSolution> {
    let k_total = demod.subcarriers();
    if subbands == 0 || !k_total.is_multiple_of(subbands) {
        return invalid(format!("{subbands} subbands do not divide {k_total} subcarriers"));
    }
    if pilot_symbols.len() != pilots.len() {
        return invalid(format!(
            "{} pilot symbols for {} pilots",
            pilot_symbols.len(),
            pilots.len()
        ));
    }
    let width = k_total / subbands;
    let indices = pilots.indices();
    let mut solved = Vec::with_capacity(subbands);
    for band in 0..subbands {
        let lo = indices.partition_point(|&k| k < band * width);
        let hi = indices.partition_point(|&k| k < (band + 1) * width);
        if lo == hi {
            return invalid(format!("subband {band} contains no pilots"));
        }
        if hi - lo < demod.subblocks() {
            log::warn!(
                "subband {band} has {} pilots for {} subblocks; weights may not be unique",
                hi - lo,
                demod.subblocks()
            );
        }
        let errs = build_error_set(demod, &indices[lo..hi], &pilot_symbols[lo..hi])?;
        solved.push(solve_weights_eigen(&build_pilot_error_matrix(&errs))?);
    }
    WeightSolution::new(k_total, solved)
}

/// `x_k = w_{subband(k)}^H ȳ_k` for every subcarrier.
pub fn combine_block(demod: &PartialDemodMatrix, solution: &WeightSolution) -> Result<Vec<Complex64>> {
    if solution.subcarriers() != demod.subcarriers() || solution.subblocks() != demod.subblocks() {
        return invalid(format!(
            "weights for {}x{} applied to a {}x{} demodulation",
            solution.subblocks(),
            solution.subcarriers(),
            demod.subblocks(),
            demod.subcarriers()
        ));
    }
    Ok((0..demod.subcarriers())
        .map(|k| combine_unchecked(demod, solution.weights_for(k), k))
        .collect())
}

/// ML decisions on data subcarriers, in ascending subcarrier order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectedSymbols {
    pub subcarriers: Vec<usize>,
    pub symbols: Vec<usize>,
}

pub fn detect_block(
    demod: &PartialDemodMatrix,
    solution: &WeightSolution,
    pilots: &PilotLayout,
    constellation: &PskConstellation,
) -> Result<DetectedSymbols> {
    let x = combine_block(demod, solution)?;
    let subcarriers: Vec<usize> = pilots.data_subcarriers().collect();
    let symbols = subcarriers
        .iter()
        .map(|&k| detect_ml(x[k - 1], x[k], constellation))
        .collect();
    Ok(DetectedSymbols { subcarriers, symbols })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::{partial_fft_demodulate, UnitaryDft};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_demod(rng: &mut impl Rng, m: usize, k: usize) -> PartialDemodMatrix {
        let dft = UnitaryDft::new(k).unwrap();
        let r: Vec<Complex64> = (0..k)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        partial_fft_demodulate(&r, m, &dft).unwrap()
    }

    fn random_unit_symbol(rng: &mut impl Rng) -> Complex64 {
        Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
    }

    #[test]
    fn error_set_matches_elementwise_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let demod = random_demod(&mut rng, 4, 64);
        let pilots = [3, 9, 30];
        let symbols: Vec<Complex64> = pilots.iter().map(|_| random_unit_symbol(&mut rng)).collect();
        let errs = build_error_set(&demod, &pilots, &symbols).unwrap();
        for (i, &k) in pilots.iter().enumerate() {
            for m in 0..4 {
                let expected = demod.get(m, k) - demod.get(m, k - 1) * symbols[i];
                assert_eq!(errs.column(i)[m], expected);
            }
        }
        assert!(build_error_set(&demod, &[0, 3], &symbols[..2]).is_err());
        assert!(build_error_set(&demod, &[3], &symbols[..2]).is_err());
        assert!(build_error_set(&demod, &[64], &symbols[..1]).is_err());
    }

    #[test]
    fn single_column_gives_rank_one_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let demod = random_demod(&mut rng, 4, 32);
        let errs = build_error_set(&demod, &[5], &[Complex64::new(0.0, 1.0)]).unwrap();
        let rp = build_pilot_error_matrix(&errs);
        let e = errs.column(0);
        let energy: f64 = e.iter().map(|x| x.norm_sqr()).sum();
        let eig = hermitian_eig(rp.matrix()).unwrap();
        assert!(eig.values[0].abs() < 1e-12 * energy);
        assert!((eig.values[3] - energy).abs() < 1e-12 * energy);
        assert_eq!(rp.matrix().hermitian_defect(), 0.0);
    }

    #[test]
    fn quadratic_form_decomposes_over_pilots() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let demod = random_demod(&mut rng, 8, 128);
        let pilots: Vec<usize> = (0..16).map(|i| 1 + 8 * i).collect();
        let symbols: Vec<Complex64> = pilots.iter().map(|_| random_unit_symbol(&mut rng)).collect();
        let errs = build_error_set(&demod, &pilots, &symbols).unwrap();
        let rp = build_pilot_error_matrix(&errs);
        for _ in 0..20 {
            let w: Vec<Complex64> = (0..8)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let direct: f64 = errs
                .columns()
                .map(|e| w.iter().zip(e).map(|(a, b)| a.conj() * b).sum::<Complex64>().norm_sqr())
                .sum();
            assert!((rp.quadratic_form(&w) - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn eigen_weights_have_constrained_norm_and_attain_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let demod = random_demod(&mut rng, 8, 256);
        let pilots: Vec<usize> = (0..32).map(|i| 1 + 8 * i).collect();
        let symbols: Vec<Complex64> = pilots.iter().map(|_| random_unit_symbol(&mut rng)).collect();
        let rp = build_pilot_error_matrix(&build_error_set(&demod, &pilots, &symbols).unwrap());
        let sol = solve_weights_eigen(&rp).unwrap();
        let norm: f64 = sol.weights.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        assert!((norm - 8f64.sqrt()).abs() < 1e-10);
        assert!((rp.quadratic_form(&sol.weights) - 8.0 * sol.lambda_min).abs() < 1e-8 * rp.trace());
        assert!(!sol.rank_deficient);
        let sum: Complex64 = sol.weights.iter().sum();
        assert!(sum.im.abs() < 1e-12 && sum.re >= 0.0);
    }

    #[test]
    fn too_few_pilots_flagged_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let demod = random_demod(&mut rng, 8, 64);
        let pilots = [1, 9, 17];
        let symbols = [Complex64::new(1.0, 0.0); 3];
        let rp = build_pilot_error_matrix(&build_error_set(&demod, &pilots, &symbols).unwrap());
        let sol = solve_weights_eigen(&rp).unwrap();
        assert!(sol.rank_deficient);
        assert!(sol.degenerate);
    }

    #[test]
    fn metric_identity_and_phase_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let demod = random_demod(&mut rng, 4, 64);
        let c = PskConstellation::new(4).unwrap();
        let w: Vec<Complex64> = (0..4)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let sol = WeightSolution::single(64, SubbandWeights::fixed(w.clone())).unwrap();
        let x = combine_block(&demod, &sol).unwrap();
        for k in 1..64 {
            for &b in c.points() {
                let distance = (x[k] - x[k - 1] * b).norm_sqr();
                assert!((error_metric(&demod, &w, k, b) - distance).abs() < 1e-10);
            }
        }
        let pilots = PilotLayout::equispaced(64, 8).unwrap();
        let base = detect_block(&demod, &sol, &pilots, &c).unwrap();
        for _ in 0..10 {
            let rot = Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
            let rotated: Vec<Complex64> = w.iter().map(|x| x * rot).collect();
            let sol = WeightSolution::single(64, SubbandWeights::fixed(rotated)).unwrap();
            assert_eq!(detect_block(&demod, &sol, &pilots, &c).unwrap(), base);
        }
    }

    #[test]
    fn wideband_single_band_matches_narrowband_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let demod = random_demod(&mut rng, 4, 128);
        let pilots = PilotLayout::equispaced(128, 16).unwrap();
        let symbols: Vec<Complex64> = pilots.indices().iter().map(|_| random_unit_symbol(&mut rng)).collect();
        let rp = build_pilot_error_matrix(&build_error_set(&demod, pilots.indices(), &symbols).unwrap());
        let single = solve_weights_eigen(&rp).unwrap();
        let wide = solve_weights_wideband(&demod, &pilots, &symbols, 1).unwrap();
        assert_eq!(wide.subbands()[0], single);
    }

    #[test]
    fn wideband_rejects_empty_subband() {
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let demod = random_demod(&mut rng, 4, 128);
        let pilots = PilotLayout::contiguous(128, 8).unwrap();
        let symbols = vec![Complex64::new(1.0, 0.0); 8];
        assert!(solve_weights_wideband(&demod, &pilots, &symbols, 2).is_err());
        assert!(solve_weights_wideband(&demod, &pilots, &symbols, 3).is_err());
    }

    #[test]
    fn solution_subband_mapping() {
        let subs = (0..4)
            .map(|i| SubbandWeights::fixed(vec![Complex64::new(i as f64 + 1.0, 0.0); 2]))
            .collect();
        let sol = WeightSolution::new(64, subs).unwrap();
        assert_eq!(sol.subband_of(0), 0);
        assert_eq!(sol.subband_of(15), 0);
        assert_eq!(sol.subband_of(16), 1);
        assert_eq!(sol.weights_for(63)[0], Complex64::new(4.0, 0.0));
        assert!(WeightSolution::new(64, vec![]).is_err());
    }
}
