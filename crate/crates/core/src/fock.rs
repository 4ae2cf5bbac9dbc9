//! Two-mode bosonic Fock space and the interferometer's linear-optical unitaries.
//!
//! States are stored densely per total-photon-number sector: sector `n` holds
//! the `n + 1` amplitudes of `|n0, n - n0>` for `n0 = 0..=n`. Every operation
//! here conserves total photon number, so sectors never mix.
//!
//! The 50/50 beamsplitter is `exp[-i (a0+ a1 + a1+ a0) pi/4]`, which maps the
//! creation operators as `a0+ -> (a0+ - i a1+)/sqrt2` and
//! `a1+ -> (a1+ - i a0+)/sqrt2`.

use std::sync::{Arc, OnceLock, RwLock};

use num_complex::Complex64;

use crate::error::{invalid, Result, SimError};
use crate::special::{ln_binomial, ln_factorials};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const MINUS_I: Complex64 = Complex64::new(0.0, -1.0);

/// Allowed norm drift per unitary application.
pub const UNITARY_TOL: f64 = 1e-12;

/// Minimum retained norm for a truncated coherent expansion.
pub const COHERENT_TRUNC_TOL: f64 = 1e-8;

/// Amplitudes of a two-mode field over the photon-number basis `|n0, n1>`,
/// truncated at total photon number `cutoff`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoModePhotonState {
    sectors: Vec<Vec<Complex64>>,
}

/// Phases `(phi0, phi1)` imprinted on modes 0 and 1 per photon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModePhasePair {
    pub phi0: f64,
    pub phi1: f64,
}

impl ModePhasePair {
    pub fn new(phi0: f64, phi1: f64) -> Self {
        Self { phi0, phi1 }
    }
}

impl TwoModePhotonState {
    /// All-zero state with room for `cutoff` photons.
    pub fn zeros(cutoff: usize) -> Self {
        Self {
            sectors: (0..=cutoff).map(|n| vec![ZERO; n + 1]).collect(),
        }
    }

    pub fn vacuum(cutoff: usize) -> Self {
        let mut s = Self::zeros(cutoff);
        s.sectors[0][0] = ONE;
        s
    }

    /// Single basis state `|n0, n1>` with the smallest cutoff that holds it.
    pub fn basis(n0: usize, n1: usize) -> Self {
        let mut s = Self::zeros(n0 + n1);
        s.sectors[n0 + n1][n0] = ONE;
        s
    }

    pub fn cutoff(&self) -> usize {
        self.sectors.len() - 1
    }

    /// Amplitude of `|n0, n1>`; zero beyond the cutoff.
    pub fn amp(&self, n0: usize, n1: usize) -> Complex64 {
        self.sectors
            .get(n0 + n1)
            .map(|s| s[n0])
            .unwrap_or(ZERO)
    }

    /// Sets the amplitude of `|n0, n1>`. Panics if `n0 + n1` exceeds the cutoff.
    pub fn set_amp(&mut self, n0: usize, n1: usize, value: Complex64) {
        self.sectors[n0 + n1][n0] = value;
    }

    /// Amplitudes of total-number sector `n`, indexed by `n0`.
    pub fn sector(&self, n: usize) -> &[Complex64] {
        &self.sectors[n]
    }

    pub fn sectors(&self) -> impl Iterator<Item = (usize, &[Complex64])> {
        self.sectors.iter().enumerate().map(|(n, s)| (n, s.as_slice()))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.sectors
            .iter()
            .flat_map(|s| s.iter())
            .map(|a| a.norm_sqr())
            .sum()
    }

    /// Total photon number of the only occupied sector, if there is exactly one.
    pub fn single_sector(&self) -> Option<usize> {
        let mut found = None;
        for (n, s) in self.sectors.iter().enumerate() {
            if s.iter().any(|a| *a != ZERO) {
                if found.is_some() {
                    return None;
                }
                found = Some(n);
            }
        }
        found
    }

    pub fn scale(&mut self, factor: Complex64) {
        for a in self.sectors.iter_mut().flat_map(|s| s.iter_mut()) {
            *a *= factor;
        }
    }

    /// Exact image under the 50/50 beamsplitter.
    pub fn apply_beamsplitter(&self) -> Result<Self> {
        let before = self.norm_sqr();
        let mut out = Vec::with_capacity(self.sectors.len());
        for (n, v) in self.sectors.iter().enumerate() {
            if v.iter().all(|a| *a == ZERO) {
                out.push(vec![ZERO; n + 1]);
                continue;
            }
            let u = sector_unitary(n);
            out.push(u.apply(v));
        }
        let out = Self { sectors: out };
        let after = out.norm_sqr();
        check_norm("beamsplitter", before, after)?;
        Ok(out)
    }

    /// `amp(n0, n1) -> exp(i (phi0 n0 + phi1 n1)) amp(n0, n1)`.
    pub fn apply_mode_phase(&self, phases: ModePhasePair) -> Self {
        let mut out = self.clone();
        for (n, sector) in out.sectors.iter_mut().enumerate() {
            for (n0, a) in sector.iter_mut().enumerate() {
                let n1 = n - n0;
                let phi = phases.phi0 * n0 as f64 + phases.phi1 * n1 as f64;
                *a *= Complex64::from_polar(1.0, phi);
            }
        }
        out
    }
}

fn check_norm(context: &'static str, before: f64, after: f64) -> Result<()> {
    let deviation = (after - before).abs();
    let tolerance = UNITARY_TOL * before.max(1.0);
    if deviation > tolerance || !after.is_finite() {
        return Err(SimError::Tolerance {
            context,
            deviation,
            tolerance,
        });
    }
    Ok(())
}

/// Twin-Fock input `|N, N>`.
pub fn make_twin_fock(n: usize) -> Result<TwoModePhotonState> {
    if n == 0 {
        return Err(invalid("twin-Fock photon number must be at least 1"));
    }
    Ok(TwoModePhotonState::basis(n, n))
}

/// Default truncation for a coherent field with total mean photon number
/// `mean`: `ceil(mean + 10 sqrt(mean) + 20)`.
pub fn default_coherent_cutoff(mean: f64) -> usize {
    (mean + 10.0 * mean.sqrt() + 20.0).ceil() as usize
}

/// Product of two truncated coherent states `|alpha0> (x) |alpha1>`.
///
/// Fails if the kept norm falls below `1 - 1e-8`.
pub fn make_coherent_pair(
    alpha0: Complex64,
    alpha1: Complex64,
    cutoff: usize,
) -> Result<TwoModePhotonState> {
    if !(alpha0.is_finite() && alpha1.is_finite()) {
        return Err(invalid("coherent amplitudes must be finite"));
    }
    let mean = alpha0.norm_sqr() + alpha1.norm_sqr();
    let lnf = ln_factorials(cutoff);
    let mut state = TwoModePhotonState::zeros(cutoff);

    // ln|alpha|, with -inf for a vacuum mode.
    let ln0 = alpha0.norm().ln();
    let ln1 = alpha1.norm().ln();
    let (arg0, arg1) = (alpha0.arg(), alpha1.arg());

    for n in 0..=cutoff {
        for n0 in 0..=n {
            let n1 = n - n0;
            if (n0 > 0 && alpha0 == ZERO) || (n1 > 0 && alpha1 == ZERO) {
                continue;
            }
            let mut log_mag = -0.5 * mean - 0.5 * (lnf[n0] + lnf[n1]);
            if n0 > 0 {
                log_mag += n0 as f64 * ln0;
            }
            if n1 > 0 {
                log_mag += n1 as f64 * ln1;
            }
            let phase = n0 as f64 * arg0 + n1 as f64 * arg1;
            state.sectors[n][n0] = Complex64::from_polar(log_mag.exp(), phase);
        }
    }

    let achieved = state.norm_sqr();
    if achieved < 1.0 - COHERENT_TRUNC_TOL {
        return Err(SimError::Truncation {
            achieved_norm: achieved,
            required: 1.0 - COHERENT_TRUNC_TOL,
        });
    }
    Ok(state)
}

/// How a beamsplitter sector matrix is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeamsplitterMethod {
    /// Direct expansion of the transformed creation operators. Alternating
    /// binomial sums lose roughly `n/2 * log10(2)` digits, so this is only
    /// usable for small sectors.
    Binomial,
    /// Ladder recursion in total photon number: sector `n` is obtained from
    /// sector `n - 1` by one transformed creation operator. This is the
    /// spin-1/2 coupling recursion for the `beta = pi/2` rotation matrix of
    /// spin `n/2`; every step is a two-term combination, so it stays accurate
    /// at large `n`.
    Ladder,
}

/// Beamsplitter restricted to total-number sector `n`, as an
/// `(n+1) x (n+1)` matrix with entry `(out_n0, in_n0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorUnitary {
    n: usize,
    data: Vec<Complex64>,
}

impl SectorUnitary {
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn get(&self, out_n0: usize, in_n0: usize) -> Complex64 {
        self.data[out_n0 * (self.n + 1) + in_n0]
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let d = self.n + 1;
        debug_assert_eq!(v.len(), d);
        (0..d)
            .map(|row| {
                self.data[row * d..(row + 1) * d]
                    .iter()
                    .zip(v)
                    .map(|(u, x)| u * x)
                    .sum()
            })
            .collect()
    }


    /// `|k, n-k> = (sqrt(k) a0+ |k-1, n-k> + sqrt(n-k) a1+ |k, n-k-1>) / n`,
    /// with `U a0+ U+ = (a0+ - i a1+)/sqrt2` and `U a1+ U+ = (a1+ - i a0+)/sqrt2`.
    /// Both parents contribute, which keeps the step a contraction.
    fn ladder_step(prev: &SectorUnitary) -> SectorUnitary {
        let n = prev.n + 1;
        let d = n + 1;
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let nf = n as f64;
        let mut data = vec![ZERO; d * d];
        let parent = |a: usize, col: usize| -> (Complex64, Complex64) {
            // (a0+ v)[a], (a1+ v)[a] for column `col` of sector n-1
            let up = if a >= 1 { prev.get(a - 1, col) * (a as f64).sqrt() } else { ZERO };
            let side = if a < n { prev.get(a, col) * ((n - a) as f64).sqrt() } else { ZERO };
            (up, side)
        };
        for k in 0..=n {
            for a in 0..=n {
                let mut acc = ZERO;
                if k >= 1 {
                    let (up, side) = parent(a, k - 1);
                    acc += (up + MINUS_I * side) * (k as f64).sqrt();
                }
                if k < n {
                    let (up, side) = parent(a, k);
                    acc += (side + MINUS_I * up) * ((n - k) as f64).sqrt();
                }
                data[a * d + k] = acc * (inv_sqrt2 / nf);
            }
        }
        SectorUnitary { n, data }
    }

    fn identity0() -> SectorUnitary {
        SectorUnitary {
            n: 0,
            data: vec![ONE],
        }
    }

    fn binomial(n: usize) -> SectorUnitary {
        let d = n + 1;
        let lnf = ln_factorials(n);
        let half_n_ln2 = 0.5 * n as f64 * std::f64::consts::LN_2;
        let mut data = vec![ZERO; d * d];
        for k in 0..=n {
            let l = n - k;
            for a in 0..=n {
                let b = n - a;
                let norm_ln = 0.5 * (lnf[a] + lnf[b] - lnf[k] - lnf[l]) - half_n_ln2;
                let mut acc = ZERO;
                // (a0+ - i a1+)^k: p powers of a0+; (a1+ - i a0+)^l: q powers of a0+.
                let p_lo = a.saturating_sub(l);
                let p_hi = k.min(a);
                for p in p_lo..=p_hi {
                    let q = a - p;
                    let mag =
                        (ln_binomial(&lnf, k, p) + ln_binomial(&lnf, l, q) + norm_ln).exp();
                    acc += minus_i_pow(k - p + q) * mag;
                }
                data[a * d + k] = acc;
            }
        }
        SectorUnitary { n, data }
    }
}

fn minus_i_pow(e: usize) -> Complex64 {
    match e % 4 {
        0 => ONE,
        1 => MINUS_I,
        2 => -ONE,
        _ => Complex64::new(0.0, 1.0),
    }
}

/// Builds the sector-`n` beamsplitter with the chosen method, bypassing the cache.
pub fn beamsplitter_sector(n: usize, method: BeamsplitterMethod) -> SectorUnitary {
    match method {
        BeamsplitterMethod::Binomial => SectorUnitary::binomial(n),
        BeamsplitterMethod::Ladder => {
            let mut cur = SectorUnitary::identity0();
            for _ in 0..n {
                cur = SectorUnitary::ladder_step(&cur);
            }
            cur
        }
    }
}

static SECTOR_CACHE: OnceLock<RwLock<Vec<Arc<SectorUnitary>>>> = OnceLock::new();

/// Cached ladder-built sector unitary. Safe to call from many threads;
/// population is append-only, so racing writers produce identical entries.
pub fn sector_unitary(n: usize) -> Arc<SectorUnitary> {
    let cache = SECTOR_CACHE.get_or_init(|| RwLock::new(vec![Arc::new(SectorUnitary::identity0())]));
    {
        let read = cache.read().unwrap_or_else(|e| e.into_inner());
        if let Some(u) = read.get(n) {
            return Arc::clone(u);
        }
    }
    let mut write = cache.write().unwrap_or_else(|e| e.into_inner());
    while write.len() <= n {
        let next = SectorUnitary::ladder_step(write.last().expect("sector 0 present"));
        write.push(Arc::new(next));
    }
    Arc::clone(&write[n])
}
