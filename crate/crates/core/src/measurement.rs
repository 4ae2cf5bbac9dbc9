//! Ideal photon counting at the interferometer output: exact outcome
//! distributions, conditional collapse of the register, and seeded sampling.
//!
//! Collapse always yields the exact reduced density matrix. For coherent
//! input the unmeasured lower port is traced out, so the post-measurement
//! register can be mixed; for twin-Fock input the difference measurement
//! fixes both output counts and the result is pure.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SimError};
use crate::joint::JointState;
use crate::qubit::QubitDensity;

/// Outcomes rarer than this are reported as impossible.
pub const MIN_CONDITIONING_PROB: f64 = 1e-15;

/// Allowed deviation of an input distribution's total mass from 1 before sampling.
pub const SAMPLING_MASS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value")]
pub enum MeasurementOutcome {
    /// `n` photons counted in the upper output port.
    UpperCount(usize),
    /// Output counts `(N + m, N - m)`, i.e. a number difference of `2m`.
    NumberDifference(i64),
}

impl MeasurementOutcome {
    pub fn is_null(&self) -> bool {
        matches!(
            self,
            MeasurementOutcome::UpperCount(0) | MeasurementOutcome::NumberDifference(0)
        )
    }

    /// Odd count `n` or odd half-difference `m`.
    pub fn is_odd(&self) -> bool {
        match *self {
            MeasurementOutcome::UpperCount(n) => n % 2 == 1,
            MeasurementOutcome::NumberDifference(m) => m.rem_euclid(2) == 1,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            MeasurementOutcome::UpperCount(n) => format!("n={n}"),
            MeasurementOutcome::NumberDifference(m) => format!("m={m}"),
        }
    }
}

/// Probability table over measurement outcomes, in outcome order.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    entries: Vec<(MeasurementOutcome, f64)>,
}

impl OutcomeDistribution {
    pub fn new(entries: Vec<(MeasurementOutcome, f64)>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[(MeasurementOutcome, f64)] {
        &self.entries
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    pub fn probability(&self, outcome: MeasurementOutcome) -> f64 {
        self.entries
            .iter()
            .find(|(o, _)| *o == outcome)
            .map(|(_, p)| *p)
            .unwrap_or(0.0)
    }
}

/// `P(n) = sum_b sum_n1 |amp(b, n, n1)|^2` for `n = 0..=cutoff`.
pub fn upper_count_distribution(state: &JointState) -> OutcomeDistribution {
    let cutoff = state.cutoff();
    let mut probs = vec![0.0f64; cutoff + 1];
    for b in 0..state.num_configs() {
        for (_, sector) in state.block(b).sectors() {
            for (n0, a) in sector.iter().enumerate() {
                probs[n0] += a.norm_sqr();
            }
        }
    }
    OutcomeDistribution::new(
        probs
            .into_iter()
            .enumerate()
            .map(|(n, p)| (MeasurementOutcome::UpperCount(n), p))
            .collect(),
    )
}

/// Total photon number shared by every block, required to be even (`2N`).
fn twin_fock_total(state: &JointState) -> Result<usize> {
    let mut total = None;
    for b in 0..state.num_configs() {
        let block = state.block(b);
        if block.norm_sqr() == 0.0 {
            continue;
        }
        let n = block.single_sector().ok_or(SimError::NotSingleSector)?;
        match total {
            None => total = Some(n),
            Some(t) if t != n => return Err(SimError::NotSingleSector),
            _ => {}
        }
    }
    match total {
        Some(t) if t % 2 == 0 => Ok(t),
        _ => Err(SimError::NotSingleSector),
    }
}

/// `P(m) = sum_b |amp(b, N+m, N-m)|^2` for `m = -N..=N`.
pub fn difference_distribution(state: &JointState) -> Result<OutcomeDistribution> {
    let total = twin_fock_total(state)?;
    let half = (total / 2) as i64;
    let entries = (-half..=half)
        .map(|m| {
            let (n0, n1) = ((half + m) as usize, (half - m) as usize);
            let p = (0..state.num_configs())
                .map(|b| state.amp(b, n0, n1).norm_sqr())
                .sum();
            (MeasurementOutcome::NumberDifference(m), p)
        })
        .collect();
    Ok(OutcomeDistribution::new(entries))
}

/// Outcome probability and the conditional register state.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseResult {
    pub probability: f64,
    pub post_state: QubitDensity,
}

impl CollapseResult {
    pub fn purity(&self) -> f64 {
        self.post_state.purity()
    }
}

/// Projects the upper mode onto `n` photons and traces out the lower mode.
pub fn collapse_on_count(state: &JointState, n: usize) -> Result<CollapseResult> {
    let outcome = MeasurementOutcome::UpperCount(n);
    if n > state.cutoff() {
        return Err(SimError::ZeroProbability {
            outcome: outcome.label(),
            probability: 0.0,
        });
    }
    let d = state.num_configs();
    let lower_max = state.cutoff() - n;
    let rho = DMatrix::from_fn(d, d, |r, c| {
        (0..=lower_max)
            .map(|n1| state.amp(r, n, n1) * state.amp(c, n, n1).conj())
            .sum::<Complex64>()
    });
    normalize_collapse(rho, outcome)
}

/// Projects onto output counts `(N + m, N - m)`.
pub fn collapse_on_difference(state: &JointState, m: i64) -> Result<CollapseResult> {
    let total = twin_fock_total(state)?;
    let half = (total / 2) as i64;
    if m.abs() > half {
        return Err(invalid(format!("|m| = {} exceeds N = {half}", m.abs())));
    }
    let (n0, n1) = ((half + m) as usize, (half - m) as usize);
    let psi: Vec<Complex64> = (0..state.num_configs()).map(|b| state.amp(b, n0, n1)).collect();
    let d = psi.len();
    let rho = DMatrix::from_fn(d, d, |r, c| psi[r] * psi[c].conj());
    normalize_collapse(rho, MeasurementOutcome::NumberDifference(m))
}

fn normalize_collapse(rho: DMatrix<Complex64>, outcome: MeasurementOutcome) -> Result<CollapseResult> {
    let p = rho.trace().re;
    if p < MIN_CONDITIONING_PROB {
        return Err(SimError::ZeroProbability {
            outcome: outcome.label(),
            probability: p,
        });
    }
    let post = QubitDensity::from_matrix(rho / Complex64::new(p, 0.0))?;
    Ok(CollapseResult {
        probability: p,
        post_state: post,
    })
}

/// Independent generator for trial `trial` of a run seeded with `master`.
pub fn trial_rng(master: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial);
    rng
}

/// Inverse-CDF draw from a (renormalised) distribution.
pub fn sample_outcome<R: Rng + ?Sized>(
    dist: &OutcomeDistribution,
    rng: &mut R,
) -> Result<MeasurementOutcome> {
    let entries = dist.entries();
    if entries.is_empty() {
        return Err(invalid("cannot sample from an empty distribution"));
    }
    if entries.iter().any(|(_, p)| !(p.is_finite() && *p >= 0.0)) {
        return Err(invalid("distribution has negative or non-finite mass"));
    }
    let total = dist.total();
    if (total - 1.0).abs() > SAMPLING_MASS_TOL {
        return Err(invalid(format!("distribution mass {total} is not 1")));
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = entries[0].0;
    for &(o, p) in entries {
        if p > 0.0 {
            last_positive = o;
        }
        acc += p;
        if u < acc {
            return Ok(o);
        }
    }
    Ok(last_positive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{default_coherent_cutoff, make_coherent_pair, make_twin_fock};
    use crate::joint::{make_joint, InteractionSettings};
    use crate::qubit::QubitState;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn layout(c0: Complex64, c1: Complex64) -> QubitState {
        QubitState::normalized(vec![c0, c0, c1, c1]).unwrap()
    }

    fn coherent_out(mean: f64, theta: f64, c0: Complex64, c1: Complex64) -> JointState {
        let cut = default_coherent_cutoff(mean);
        let input = make_coherent_pair(c(mean.sqrt(), 0.0), c(0.0, 0.0), cut).unwrap();
        make_joint(&layout(c0, c1), &input, (0, 1))
            .unwrap()
            .propagate_interferometer(&InteractionSettings::single_pass(theta).unwrap())
            .unwrap()
    }

    fn twin_out(n: usize, theta: f64, c0: Complex64, c1: Complex64) -> JointState {
        make_joint(&layout(c0, c1), &make_twin_fock(n).unwrap(), (0, 1))
            .unwrap()
            .propagate_interferometer(&InteractionSettings::single_pass(theta).unwrap())
            .unwrap()
    }

    #[test]
    fn zero_phase_is_dark() {
        let out = coherent_out(10.0, 0.0, c(0.6, 0.0), c(0.8, 0.0));
        let d = upper_count_distribution(&out);
        assert!((d.probability(MeasurementOutcome::UpperCount(0)) - 1.0).abs() < 1e-10);
        let t = twin_out(3, 0.0, c(0.6, 0.0), c(0.8, 0.0));
        let d = difference_distribution(&t).unwrap();
        assert!((d.probability(MeasurementOutcome::NumberDifference(0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn count_distribution_is_half_poisson() {
        let (mean, theta) = (20.0, 0.2);
        let out = coherent_out(mean, theta, c(0.6, 0.0), c(0.8, 0.0));
        let d = upper_count_distribution(&out);
        assert!((d.total() - 1.0).abs() < 1e-10);
        // Exact law: upper-port mean count is mean * sin^2(theta).
        let lam = mean * theta.sin().powi(2);
        let mut pois = (-lam).exp();
        for n in 0..30usize {
            if n > 0 {
                pois *= lam / n as f64;
            }
            let expect = 0.5 * pois + if n == 0 { 0.5 } else { 0.0 };
            assert!((d.probability(MeasurementOutcome::UpperCount(n)) - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn difference_distribution_n1() {
        for theta in [0.1, 0.4] {
            let t = twin_out(1, theta, c(0.6, 0.0), c(0.0, 0.8));
            let d = difference_distribution(&t).unwrap();
            let expect = 0.5 * (1.0 + (2.0f64 * theta).cos().powi(2));
            assert!((d.probability(MeasurementOutcome::NumberDifference(0)) - expect).abs() < 1e-13);
            assert!((d.total() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn difference_requires_single_sector() {
        let out = coherent_out(4.0, 0.1, c(0.6, 0.0), c(0.8, 0.0));
        assert_eq!(difference_distribution(&out), Err(SimError::NotSingleSector));
        let t = twin_out(2, 0.3, c(0.6, 0.0), c(0.8, 0.0));
        assert!(collapse_on_difference(&t, 3).is_err());
    }

    #[test]
    fn count_collapse_parity_and_purity() {
        let (c0, c1) = (c(0.6, 0.0), c(0.0, 0.8));
        let out = coherent_out(16.0, 0.15, c0, c1);
        for n in 1..=4usize {
            let r = collapse_on_count(&out, n).unwrap();
            assert!((r.purity() - 1.0).abs() < 1e-10, "n={n}");
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let target = QubitState::normalized(vec![c0, c(0.0, 0.0), c(0.0, 0.0), c1 * sign]).unwrap();
            assert!((r.post_state.fidelity_with(&target).unwrap() - 1.0).abs() < 1e-10);
            // support only on |00>, |11>
            assert!(r.post_state.get(1, 1).norm() < 1e-15 && r.post_state.get(2, 2).norm() < 1e-15);
        }
    }

    #[test]
    fn null_collapse_close_to_contaminated_bell_state() {
        let (c0, c1) = (c(0.6, 0.0), c(0.0, 0.8));
        for (mean, theta) in [(50.0f64, 0.01), (100.0, 0.02), (100.0, 0.005)] {
            let eps = (-mean * theta * theta).exp();
            let out = coherent_out(mean, theta, c0, c1);
            let r = collapse_on_count(&out, 0).unwrap();
            let se = eps.sqrt();
            let target = QubitState::normalized(vec![c0 * se, c0, c1, c1 * se]).unwrap();
            let f = r.post_state.fidelity_with(&target).unwrap();
            assert!(f >= 1.0 - 1e-4, "mean={mean} theta={theta} f={f}");
        }
    }

    #[test]
    fn collapse_consistency_with_reduced_state() {
        let out = coherent_out(9.0, 0.3, c(0.6, 0.0), c(0.0, 0.8));
        let full = out.reduced_qubit_density();
        let d = upper_count_distribution(&out);
        let mut acc = DMatrix::<Complex64>::zeros(4, 4);
        for &(o, p) in d.entries() {
            if let MeasurementOutcome::UpperCount(n) = o {
                if p > MIN_CONDITIONING_PROB {
                    let r = collapse_on_count(&out, n).unwrap();
                    assert!((r.probability - p).abs() < 1e-14);
                    acc += r.post_state.matrix() * Complex64::new(p, 0.0);
                }
            }
        }
        let diff = (acc - full.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-8);
    }

    #[test]
    fn difference_collapses_are_pure_with_parity() {
        let (c0, c1) = (c(0.6, 0.0), c(0.0, 0.8));
        let t = twin_out(3, 0.21, c0, c1);
        for m in 1..=3i64 {
            for mm in [m, -m] {
                let r = collapse_on_difference(&t, mm).unwrap();
                assert!(r.post_state.eigenvalues().last().unwrap() >= &(1.0 - 1e-10));
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                let target = QubitState::normalized(vec![c0, c(0.0, 0.0), c(0.0, 0.0), c1 * sign]).unwrap();
                assert!((r.post_state.fidelity_with(&target).unwrap() - 1.0).abs() < 1e-10);
                assert!(r.post_state.validity_defect() < 1e-10);
            }
        }
    }

    #[test]
    fn count_beyond_cutoff_is_zero_probability() {
        let out = coherent_out(1.0, 0.1, c(0.6, 0.0), c(0.8, 0.0));
        let too_many = out.cutoff() + 1;
        assert!(matches!(
            collapse_on_count(&out, too_many),
            Err(SimError::ZeroProbability { .. })
        ));
    }

    #[test]
    fn sampler_contracts() {
        let point = OutcomeDistribution::new(vec![
            (MeasurementOutcome::UpperCount(0), 1.0),
            (MeasurementOutcome::UpperCount(1), 0.0),
        ]);
        let mut rng = trial_rng(1, 0);
        for _ in 0..100 {
            assert_eq!(sample_outcome(&point, &mut rng).unwrap(), MeasurementOutcome::UpperCount(0));
        }
        let fair = OutcomeDistribution::new(vec![
            (MeasurementOutcome::UpperCount(0), 0.5),
            (MeasurementOutcome::UpperCount(1), 0.5),
        ]);
        let draw = |seed| {
            let mut rng = trial_rng(seed, 3);
            (0..50).map(|_| sample_outcome(&fair, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(42), draw(42));
        assert_ne!(draw(42), draw(43));

        assert!(sample_outcome(&OutcomeDistribution::new(vec![]), &mut rng).is_err());
        let neg = OutcomeDistribution::new(vec![
            (MeasurementOutcome::UpperCount(0), 1.5),
            (MeasurementOutcome::UpperCount(1), -0.5),
        ]);
        assert!(sample_outcome(&neg, &mut rng).is_err());
    }

    #[test]
    fn sampled_null_frequency_within_four_sigma() {
        let t = twin_out(5, 0.09, c(0.6, 0.0), c(0.8, 0.0));
        let d = difference_distribution(&t).unwrap();
        let p0 = d.probability(MeasurementOutcome::NumberDifference(0));
        let mut rng = trial_rng(2024, 0);
        let draws = 100_000;
        let hits = (0..draws)
            .filter(|_| sample_outcome(&d, &mut rng).unwrap().is_null())
            .count();
        let sigma = (p0 * (1.0 - p0) / draws as f64).sqrt();
        assert!((hits as f64 / draws as f64 - p0).abs() < 4.0 * sigma);
    }
}
