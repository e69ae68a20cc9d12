//! PSK constellations, differential encoding across subcarriers, the two
//! differential detectors and pilot bookkeeping.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

/// Distance within which a complex value is accepted as a constellation point.
const POINT_TOLERANCE: f64 = 1e-9;

/// Normalized Q-ary PSK constellation `a_q = exp(j 2π q / Q)` with a Gray
/// labelling of the symbol indices.
#[derive(Debug, Clone, PartialEq)]
pub struct PskConstellation {
    points: Vec<Complex64>,
    labels: Vec<u32>,
    index_of_label: Vec<usize>,
    bits_per_symbol: usize,
}

impl PskConstellation {
    pub fn new(order: usize) -> Result<Self> {
        if order < 2 || !order.is_power_of_two() {
            return invalid(format!("PSK order must be a power of two >= 2, got {order}"));
        }
        let points = (0..order)
            .map(|q| Complex64::from_polar(1.0, 2.0 * PI * q as f64 / order as f64))
            .collect();
        let labels: Vec<u32> = (0..order as u32).map(|q| q ^ (q >> 1)).collect();
        let mut index_of_label = vec![0; order];
        for (q, &label) in labels.iter().enumerate() {
            index_of_label[label as usize] = q;
        }
        Ok(Self {
            points,
            labels,
            index_of_label,
            bits_per_symbol: order.trailing_zeros() as usize,
        })
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    /// Gray label carried by symbol `index`.
    pub fn label(&self, index: usize) -> u32 {
        self.labels[index]
    }

    pub fn index_of_label(&self, label: u32) -> usize {
        self.index_of_label[label as usize]
    }

    /// Index of `value` if it is a constellation point.
    pub fn index_of(&self, value: Complex64) -> Option<usize> {
        let q = self.nearest(value);
        ((self.points[q] - value).norm() <= POINT_TOLERANCE).then_some(q)
    }

    /// Nearest point in Euclidean distance, lowest index on ties.
    pub fn nearest(&self, value: Complex64) -> usize {
        argmin(self.points.iter().map(|p| (value - p).norm_sqr()))
    }
}

fn argmin(metrics: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_metric = f64::INFINITY;
    for (q, metric) in metrics.enumerate() {
        if metric < best_metric {
            best = q;
            best_metric = metric;
        }
    }
    best
}

/// Differentially encodes information symbols `b_1..b_{K-1}` into
/// `d_0..d_{K-1}` with `d_0 = a_0` and `d_k = b_k d_{k-1}`.
pub fn differential_encode(info: &[Complex64], constellation: &PskConstellation) -> Result<Vec<Complex64>> {
    let indices = info
        .iter()
        .enumerate()
        .map(|(k, &b)| {
            constellation.index_of(b).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "symbol {b} at subcarrier {} is not a constellation point",
                    k + 1
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(differential_encode_indices(&indices, constellation)
        .into_iter()
        .map(|q| constellation.point(q))
        .collect())
}

/// Index form of [`differential_encode`]: phases accumulate modulo Q, so the
/// coded symbols are exact constellation points.
pub fn differential_encode_indices(info: &[usize], constellation: &PskConstellation) -> Vec<usize> {
    let order = constellation.order();
    let mut coded = Vec::with_capacity(info.len() + 1);
    let mut state = 0;
    coded.push(state);
    for &q in info {
        state = (state + q) % order;
        coded.push(state);
    }
    coded
}

/// Recovers `b_1..b_{K-1}` from demodulated subcarrier outputs with the ML
/// differential detector.
pub fn differential_decode(received: &[Complex64], constellation: &PskConstellation) -> Vec<usize> {
    received
        .windows(2)
        .map(|pair| detect_ml(pair[0], pair[1], constellation))
        .collect()
}

/// ML differential detector: `argmin_b |x_curr - x_prev b|^2`, ties to the
/// lowest constellation index.
pub fn detect_ml(x_prev: Complex64, x_curr: Complex64, constellation: &PskConstellation) -> usize {
    argmin(constellation.points().iter().map(|&b| (x_curr - x_prev * b).norm_sqr()))
}

/// Ratio detector: slices `x_curr / x_prev` to the nearest point.
pub fn detect_ratio(x_prev: Complex64, x_curr: Complex64, constellation: &PskConstellation) -> Result<usize> {
    if x_prev == Complex64::new(0.0, 0.0) {
        return Err(Error::DivisionDegenerate("previous subcarrier output is zero".into()));
    }
    Ok(constellation.nearest(x_curr / x_prev))
}

/// Gray bits of each symbol, most significant bit first.
pub fn symbols_to_bits(symbols: &[usize], constellation: &PskConstellation) -> Vec<u8> {
    let width = constellation.bits_per_symbol();
    let mut bits = Vec::with_capacity(symbols.len() * width);
    for &q in symbols {
        let label = constellation.label(q);
        bits.extend((0..width).rev().map(|bit| ((label >> bit) & 1) as u8));
    }
    bits
}

pub fn bits_to_symbols(bits: &[u8], constellation: &PskConstellation) -> Result<Vec<usize>> {
    let width = constellation.bits_per_symbol();
    if !bits.len().is_multiple_of(width) {
        return invalid(format!(
            "bit stream length {} is not a multiple of {width} bits per symbol",
            bits.len()
        ));
    }
    bits.chunks(width)
        .map(|chunk| {
            let mut label = 0u32;
            for &bit in chunk {
                if bit > 1 {
                    return invalid(format!("bit value {bit} is not 0 or 1"));
                }
                label = (label << 1) | bit as u32;
            }
            Ok(constellation.index_of_label(label))
        })
        .collect()
}

/// Number of differing Gray bits between two symbol indices.
pub fn bit_errors_between(sent: usize, detected: usize, constellation: &PskConstellation) -> u64 {
    (constellation.label(sent) ^ constellation.label(detected)).count_ones() as u64
}

/// One differential OFDM block before transmission.
#[derive(Debug, Clone)]
pub struct OfdmBlock {
    /// Indices of `b_1..b_{K-1}`.
    pub info: Vec<usize>,
    /// `d_0..d_{K-1}`.
    pub coded: Vec<Complex64>,
    /// `s = F_K^H d`.
    pub samples: Vec<Complex64>,
}

impl OfdmBlock {
    pub fn modulate(
        info: Vec<usize>,
        constellation: &PskConstellation,
        dft: &crate::transform::UnitaryDft,
    ) -> Result<Self> {
        if info.len() + 1 != dft.len() {
            return invalid(format!(
                "{} information symbols do not fill a {}-subcarrier block",
                info.len(),
                dft.len()
            ));
        }
        if let Some(&bad) = info.iter().find(|&&q| q >= constellation.order()) {
            return invalid(format!(
                "symbol index {bad} outside a {}-point constellation",
                constellation.order()
            ));
        }
        let coded: Vec<Complex64> = differential_encode_indices(&info, constellation)
            .into_iter()
            .map(|q| constellation.point(q))
            .collect();
        let samples = dft.inverse(&coded)?;
        Ok(Self { info, coded, samples })
    }

    pub fn len(&self) -> usize {
        self.coded.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coded.is_empty()
    }

    pub fn info_symbols(&self, constellation: &PskConstellation) -> Vec<Complex64> {
        self.info.iter().map(|&q| constellation.point(q)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotMode {
    Equispaced,
    Contiguous,
    PerSubband { subbands: usize },
}

/// Sorted set of pilot subcarriers, all in `[1, K-1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotLayout {
    indices: Vec<usize>,
    mode: PilotMode,
    num_subcarriers: usize,
}

impl PilotLayout {
    /// No pilots at all (conventional single-FFT reception).
    pub fn empty(num_subcarriers: usize) -> Self {
        Self {
            indices: Vec::new(),
            mode: PilotMode::Contiguous,
            num_subcarriers,
        }
    }

    /// `{1, P+1, ..., (I-1)P+1}` with `P = K / I`.
    pub fn equispaced(num_subcarriers: usize, count: usize) -> Result<Self> {
        let indices = spaced_within(0, num_subcarriers, count)?;
        Self::from_indices(num_subcarriers, indices, PilotMode::Equispaced)
    }

    /// `{1, ..., I}` at the low end of the band.
    pub fn contiguous(num_subcarriers: usize, count: usize) -> Result<Self> {
        if count == 0 || count >= num_subcarriers {
            return invalid(format!(
                "cannot place {count} contiguous pilots in {num_subcarriers} subcarriers"
            ));
        }
        Self::from_indices(num_subcarriers, (1..=count).collect(), PilotMode::Contiguous)
    }

    /// `per_subband` equispaced pilots inside each of `subbands` equal subbands.
    pub fn per_subband(num_subcarriers: usize, subbands: usize, per_subband: usize) -> Result<Self> {
        if subbands == 0 || !num_subcarriers.is_multiple_of(subbands) {
            return invalid(format!(
                "{subbands} subbands do not divide {num_subcarriers} subcarriers"
            ));
        }
        let width = num_subcarriers / subbands;
        let mut indices = Vec::with_capacity(subbands * per_subband);
        for band in 0..subbands {
            indices.extend(spaced_within(band * width, width, per_subband)?);
        }
        Self::from_indices(num_subcarriers, indices, PilotMode::PerSubband { subbands })
    }

    pub fn from_indices(num_subcarriers: usize, indices: Vec<usize>, mode: PilotMode) -> Result<Self> {
        if indices.first() == Some(&0) {
            return invalid("subcarrier 0 carries the differential seed and cannot be a pilot");
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("pilot indices must be strictly increasing");
        }
        if let Some(&last) = indices.last() {
            if last >= num_subcarriers {
                return invalid(format!("pilot index {last} outside {num_subcarriers} subcarriers"));
            }
        }
        Ok(Self {
            indices,
            mode,
            num_subcarriers,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn mode(&self) -> PilotMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn num_subcarriers(&self) -> usize {
        self.num_subcarriers
    }

    pub fn contains(&self, k: usize) -> bool {
        self.indices.binary_search(&k).is_ok()
    }

    /// Pilot indices falling in `[start, end)`.
    pub fn within(&self, start: usize, end: usize) -> &[usize] {
        let lo = self.indices.partition_point(|&k| k < start);
        let hi = self.indices.partition_point(|&k| k < end);
        &self.indices[lo..hi]
    }

    /// Subcarriers `1..K` that carry data.
    pub fn data_subcarriers(&self) -> impl Iterator<Item = usize> + '_ {
        (1..self.num_subcarriers).filter(move |&k| !self.contains(k))
    }
}

fn spaced_within(start: usize, width: usize, count: usize) -> Result<Vec<usize>> {
    if count == 0 {
        return invalid("pilot count must be at least 1");
    }
    let spacing = width / count;
    // spacing 1 would push the last pilot onto the next subband's first subcarrier
    if spacing < 2 && !(spacing == 1 && count < width) {
        return invalid(format!("cannot space {count} pilots over {width} subcarriers"));
    }
    Ok((0..count).map(|i| start + 1 + i * spacing).collect())
}
