//! Teleportation, GHZ preparation and entanglement swapping built on the
//! interferometric two-qubit primitive.
//!
//! Registers are `(S, T)` for teleportation and `(A, B, C)` for GHZ and
//! swapping. After the photon measurement the pair is brought to
//! `c0|00> + c1|11>`: a null outcome is fixed with a pi-pulse on the second
//! qubit of the pair, an odd outcome with a pi phase on `|1>` of the first.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analytic::{first_chi0_zero, epsilon_false_null, eta_false_null};
use crate::error::{invalid, Result, SimError};
use crate::fock::{default_coherent_cutoff, make_coherent_pair, make_twin_fock, TwoModePhotonState};
use crate::joint::{make_joint, InteractionSettings, JointState};
use crate::measurement::{
    collapse_on_count, collapse_on_difference, difference_distribution, sample_outcome, trial_rng,
    upper_count_distribution, CollapseResult, MeasurementOutcome, OutcomeDistribution,
    MIN_CONDITIONING_PROB,
};
use crate::qubit::{Gate2, QubitDensity, QubitState};

pub const SOURCE: usize = 0;
pub const TARGET: usize = 1;

/// Eigen-weights of a mixed register below this are dropped before propagation.
pub const MIXTURE_WEIGHT_FLOOR: f64 = 1e-14;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Single-qubit operation addressed to one register position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op")]
pub enum LocalOp {
    PiPulse { qubit: usize },
    HalfPiPulse { qubit: usize },
    /// `|level> -> e^{i angle} |level>`.
    PhaseImprint { qubit: usize, level: usize, angle: f64 },
    MeasureZ { qubit: usize },
}

impl LocalOp {
    pub fn qubit(&self) -> usize {
        match *self {
            LocalOp::PiPulse { qubit }
            | LocalOp::HalfPiPulse { qubit }
            | LocalOp::PhaseImprint { qubit, .. }
            | LocalOp::MeasureZ { qubit } => qubit,
        }
    }

    /// Unitary matrix, or `None` for a measurement.
    pub fn gate(&self) -> Result<Option<Gate2>> {
        let h = FRAC_1_SQRT_2;
        Ok(match *self {
            LocalOp::PiPulse { .. } => Some([[ZERO, ONE], [ONE, ZERO]]),
            LocalOp::HalfPiPulse { .. } => Some([[c(h, 0.0), c(0.0, -h)], [c(0.0, -h), c(h, 0.0)]]),
            LocalOp::PhaseImprint { level, angle, .. } => {
                if level > 1 {
                    return Err(invalid(format!("phase imprint level must be 0 or 1, got {level}")));
                }
                if !angle.is_finite() {
                    return Err(invalid("phase imprint angle must be finite"));
                }
                let mut g = [[ONE, ZERO], [ZERO, ONE]];
                g[level][level] = Complex64::from_polar(1.0, angle);
                Some(g)
            }
            LocalOp::MeasureZ { .. } => None,
        })
    }
}

/// Applies `op` to a density matrix. `MeasureZ` draws its result from `rng`
/// and returns it alongside the collapsed state.
pub fn apply_local<R: Rng + ?Sized>(
    op: &LocalOp,
    rho: &QubitDensity,
    rng: &mut R,
) -> Result<(QubitDensity, Option<usize>)> {
    match op.gate()? {
        Some(g) => Ok((rho.apply_gate(op.qubit(), &g)?, None)),
        None => {
            let p0 = rho.z_probability(op.qubit(), 0)?;
            let result = if rng.random::<f64>() < p0 { 0 } else { 1 };
            let (_, post) = rho.project_z(op.qubit(), result)?;
            Ok((post, Some(result)))
        }
    }
}

/// Applies a unitary `op` to a pure state; measurements are rejected.
pub fn apply_local_pure(op: &LocalOp, state: &QubitState) -> Result<QubitState> {
    match op.gate()? {
        Some(g) => state.apply_gate(op.qubit(), &g),
        None => Err(invalid("MeasureZ cannot be applied to a pure state without sampling")),
    }
}

/// Largest total photon number (coherent cutoff or `2N`) a simulation will allocate.
pub const MAX_TOTAL_PHOTONS: usize = 4000;

/// Optical input to the interferometer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputField {
    /// Coherent state of the given mean photon number in the upper input, vacuum in the lower.
    Coherent { mean_photons: f64 },
    /// `|N, N>`.
    TwinFock { n: usize },
}

impl InputField {
    pub fn photon_state(&self) -> Result<TwoModePhotonState> {
        match *self {
            InputField::Coherent { mean_photons } => {
                if !(mean_photons > 0.0 && mean_photons.is_finite()) {
                    return Err(invalid("mean photon number must be positive"));
                }
                let cutoff = default_coherent_cutoff(mean_photons);
                if cutoff > MAX_TOTAL_PHOTONS {
                    return Err(invalid(format!(
                        "mean photon number {mean_photons} needs cutoff {cutoff} > {MAX_TOTAL_PHOTONS}"
                    )));
                }
                let alpha = c(mean_photons.sqrt(), 0.0);
                make_coherent_pair(alpha, ZERO, cutoff)
            }
            InputField::TwinFock { n } => {
                if 2 * n > MAX_TOTAL_PHOTONS {
                    return Err(invalid(format!("twin-Fock 2N = {} exceeds {MAX_TOTAL_PHOTONS}", 2 * n)));
                }
                make_twin_fock(n)
            }
        }
    }

    /// `N` entering `P_sp = 2 N theta_eff Gamma/Delta`.
    pub fn photon_number(&self) -> f64 {
        match *self {
            InputField::Coherent { mean_photons } => mean_photons,
            InputField::TwinFock { n } => n as f64,
        }
    }

    /// Closed-form false-null probability, `epsilon` or `eta`.
    pub fn false_null(&self, theta_eff: f64) -> Result<f64> {
        match *self {
            InputField::Coherent { mean_photons } => epsilon_false_null(mean_photons, theta_eff),
            InputField::TwinFock { n } => eta_false_null(n, theta_eff),
        }
    }
}

/// Settings with `theta_eff` at the first zero of `chi_0` for `|N, N>`.
pub fn settings_at_chi0_zero(n: usize, passes: u32) -> Result<InteractionSettings> {
    let z = first_chi0_zero(n)?;
    InteractionSettings::new(z.theta / passes.max(1) as f64, passes)
}

/// Spontaneous-emission probability `2 N theta_eff Gamma/Delta` for both qubits.
pub fn spontaneous_emission_probability(field: &InputField, settings: &InteractionSettings, gamma_over_delta: f64) -> f64 {
    (2.0 * field.photon_number() * settings.theta_eff().abs() * gamma_over_delta).min(1.0)
}

/// Propagated register-field state for one pair and one input field, with
/// per-outcome collapses cached. Mixed registers are propagated component by
/// component.
#[derive(Debug, Clone)]
pub struct Entangler {
    field: InputField,
    components: Vec<(f64, JointState)>,
    distribution: OutcomeDistribution,
    cache: HashMap<MeasurementOutcome, CollapseResult>,
}

impl Entangler {
    pub fn new(
        qubits: &QubitState,
        field: InputField,
        settings: &InteractionSettings,
        pair: (usize, usize),
    ) -> Result<Self> {
        Self::from_components(vec![(1.0, qubits.clone())], field, settings, pair)
    }

    pub fn from_density(
        rho: &QubitDensity,
        field: InputField,
        settings: &InteractionSettings,
        pair: (usize, usize),
    ) -> Result<Self> {
        Self::from_components(rho.pure_components(MIXTURE_WEIGHT_FLOOR)?, field, settings, pair)
    }

    fn from_components(
        parts: Vec<(f64, QubitState)>,
        field: InputField,
        settings: &InteractionSettings,
        pair: (usize, usize),
    ) -> Result<Self> {
        let photons = field.photon_state()?;
        let mut components = Vec::with_capacity(parts.len());
        let mut entries: Vec<(MeasurementOutcome, f64)> = Vec::new();
        for (w, psi) in parts {
            let joint = make_joint(&psi, &photons, pair)?.propagate_interferometer(settings)?;
            let dist = match field {
                InputField::Coherent { .. } => upper_count_distribution(&joint),
                InputField::TwinFock { .. } => difference_distribution(&joint)?,
            };
            if entries.is_empty() {
                entries = dist.entries().iter().map(|&(o, p)| (o, w * p)).collect();
            } else {
                for (acc, &(o, p)) in entries.iter_mut().zip(dist.entries()) {
                    debug_assert_eq!(acc.0, o);
                    acc.1 += w * p;
                }
            }
            components.push((w, joint));
        }
        Ok(Self {
            field,
            components,
            distribution: OutcomeDistribution::new(entries),
            cache: HashMap::new(),
        })
    }

    pub fn field(&self) -> InputField {
        self.field
    }

    pub fn distribution(&self) -> &OutcomeDistribution {
        &self.distribution
    }

    /// Outcomes whose probability is large enough to condition on.
    pub fn possible_outcomes(&self, min_probability: f64) -> Vec<(MeasurementOutcome, f64)> {
        self.distribution
            .entries()
            .iter()
            .copied()
            .filter(|&(_, p)| p >= min_probability.max(MIN_CONDITIONING_PROB))
            .collect()
    }

    pub fn collapse(&mut self, outcome: MeasurementOutcome) -> Result<CollapseResult> {
        if let Some(r) = self.cache.get(&outcome) {
            return Ok(r.clone());
        }
        let r = self.collapse_uncached(outcome)?;
        self.cache.insert(outcome, r.clone());
        Ok(r)
    }

    fn collapse_uncached(&self, outcome: MeasurementOutcome) -> Result<CollapseResult> {
        let dim = self.components[0].1.num_configs();
        let mut acc = DMatrix::<Complex64>::zeros(dim, dim);
        let mut total = 0.0;
        for (w, joint) in &self.components {
            let part = match (self.field, outcome) {
                (InputField::Coherent { .. }, MeasurementOutcome::UpperCount(n)) => collapse_on_count(joint, n),
                (InputField::TwinFock { .. }, MeasurementOutcome::NumberDifference(m)) => {
                    collapse_on_difference(joint, m)
                }
                _ => return Err(invalid(format!("outcome {} does not match the input field", outcome.label()))),
            };
            match part {
                Ok(r) => {
                    acc += r.post_state.matrix() * Complex64::new(w * r.probability, 0.0);
                    total += w * r.probability;
                }
                Err(SimError::ZeroProbability { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        if total < MIN_CONDITIONING_PROB {
            return Err(SimError::ZeroProbability {
                outcome: outcome.label(),
                probability: total,
            });
        }
        Ok(CollapseResult {
            probability: total,
            post_state: QubitDensity::from_matrix(acc / Complex64::new(total, 0.0))?,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(MeasurementOutcome, CollapseResult)> {
        let outcome = sample_outcome(&self.distribution, rng)?;
        let r = self.collapse(outcome)?;
        Ok((outcome, r))
    }
}

/// Builds the joint state, propagates, samples the photon observable and collapses.
pub fn entangle_pair<R: Rng + ?Sized>(
    qubits: &QubitState,
    field: InputField,
    settings: &InteractionSettings,
    pair: (usize, usize),
    rng: &mut R,
) -> Result<(MeasurementOutcome, CollapseResult)> {
    Entangler::new(qubits, field, settings, pair)?.sample(rng)
}

/// Operations bringing the collapsed pair `(first, second)` to `c0|00> + c1|11>`.
pub fn pair_fix(outcome: MeasurementOutcome, first: usize, second: usize) -> Vec<LocalOp> {
    if outcome.is_null() {
        vec![LocalOp::PiPulse { qubit: second }]
    } else if outcome.is_odd() {
        vec![LocalOp::PhaseImprint {
            qubit: first,
            level: 1,
            angle: PI,
        }]
    } else {
        Vec::new()
    }
}

/// Phase correction on the target after the source reads `result`.
pub fn target_phase_fix(result: usize, target: usize) -> LocalOp {
    LocalOp::PhaseImprint {
        qubit: target,
        level: if result == 0 { 1 } else { 0 },
        angle: FRAC_PI_2,
    }
}

/// Complete teleportation correction list for `(S, T)`.
pub fn correction_sequence(outcome: MeasurementOutcome, source_result: usize) -> Vec<LocalOp> {
    let mut ops = pair_fix(outcome, SOURCE, TARGET);
    ops.push(LocalOp::HalfPiPulse { qubit: SOURCE });
    ops.push(LocalOp::MeasureZ { qubit: SOURCE });
    ops.push(target_phase_fix(source_result, TARGET));
    ops
}

fn apply_unitaries(rho: &QubitDensity, ops: &[LocalOp]) -> Result<QubitDensity> {
    ops.iter().try_fold(rho.clone(), |acc, op| match op.gate()? {
        Some(g) => acc.apply_gate(op.qubit(), &g),
        None => Err(invalid("unexpected measurement in a unitary block")),
    })
}

/// How the source measurement result is chosen.
pub enum SourceChoice<'a, R: Rng + ?Sized> {
    Sample(&'a mut R),
    Forced(usize),
}

/// State after disentangling `source` from the pair `(first, second)`.
#[derive(Debug, Clone)]
pub struct Disentangled {
    pub ops: Vec<LocalOp>,
    pub source_result: usize,
    pub source_probability: f64,
    pub state: QubitDensity,
}

/// Pair fix, then a pi/2-pulse on `source`, a Z measurement of it, and the
/// conditional phase on `target`.
pub fn disentangle<R: Rng + ?Sized>(
    rho: &QubitDensity,
    fix: Vec<LocalOp>,
    source: usize,
    target: usize,
    choice: SourceChoice<'_, R>,
) -> Result<Disentangled> {
    let mut ops = fix;
    ops.push(LocalOp::HalfPiPulse { qubit: source });
    let before = apply_unitaries(rho, &ops)?;
    let p0 = before.z_probability(source, 0)?;
    let result = match choice {
        SourceChoice::Sample(rng) => {
            if rng.random::<f64>() < p0 {
                0
            } else {
                1
            }
        }
        SourceChoice::Forced(r) if r <= 1 => r,
        SourceChoice::Forced(r) => return Err(invalid(format!("source result must be 0 or 1, got {r}"))),
    };
    let (p, measured) = before.project_z(source, result)?;
    ops.push(LocalOp::MeasureZ { qubit: source });
    let fix_t = target_phase_fix(result, target);
    let state = apply_unitaries(&measured, &[fix_t])?;
    ops.push(fix_t);
    Ok(Disentangled {
        ops,
        source_result: result,
        source_probability: p,
        state,
    })
}

/// Teleportation inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeleportSetup {
    pub c0: [f64; 2],
    pub c1: [f64; 2],
    pub field: InputField,
    pub theta: f64,
    pub passes: u32,
    /// When known, the analytic `P_sp` is attached to transcripts.
    pub gamma_over_delta: Option<f64>,
}

impl TeleportSetup {
    pub fn new(c0: Complex64, c1: Complex64, field: InputField, settings: InteractionSettings) -> Self {
        Self {
            c0: [c0.re, c0.im],
            c1: [c1.re, c1.im],
            field,
            theta: settings.theta(),
            passes: settings.passes(),
            gamma_over_delta: None,
        }
    }

    pub fn settings(&self) -> Result<InteractionSettings> {
        InteractionSettings::new(self.theta, self.passes)
    }

    pub fn input_state(&self) -> Result<QubitState> {
        let amps = vec![c(self.c0[0], self.c0[1]), c(self.c1[0], self.c1[1])];
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(invalid(format!("|c0|^2 + |c1|^2 = {norm}, expected 1")));
        }
        QubitState::normalized(amps)
    }
}

/// Deterministic result of one teleportation branch.
#[derive(Debug, Clone)]
pub struct BranchResult {
    pub outcome: MeasurementOutcome,
    pub outcome_probability: f64,
    pub source_result: usize,
    pub source_probability: f64,
    pub corrections: Vec<LocalOp>,
    pub target_state: QubitDensity,
    pub fidelity: f64,
    pub purity: f64,
}

/// Replayable record of one teleportation trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTranscript {
    pub seed: u64,
    pub trial: u64,
    pub branch: String,
    pub outcome: MeasurementOutcome,
    pub outcome_probability: f64,
    pub fidelity: f64,
    pub purity: f64,
    pub corrections: Vec<LocalOp>,
    pub source_result: usize,
    /// Result of a projective test of the target onto the input state.
    pub verified: bool,
    pub setup: TeleportSetup,
    pub theta_eff: f64,
    pub p_sp: Option<f64>,
    /// Target density matrix as `[[re, im]; 2]` rows.
    pub target_state: [[[f64; 2]; 2]; 2],
}

fn branch_label(outcome: MeasurementOutcome) -> String {
    if outcome.is_null() {
        "null".to_string()
    } else {
        outcome.label()
    }
}

fn density2(rho: &QubitDensity) -> [[[f64; 2]; 2]; 2] {
    let mut out = [[[0.0; 2]; 2]; 2];
    for (r, row) in out.iter_mut().enumerate() {
        for (col, cell) in row.iter_mut().enumerate() {
            let z = rho.get(r, col);
            *cell = [z.re, z.im];
        }
    }
    out
}

/// Teleportation driver; the photon propagation is done once per setup.
#[derive(Debug, Clone)]
pub struct Teleporter {
    setup: TeleportSetup,
    settings: InteractionSettings,
    input: QubitState,
    entangler: Entangler,
}

impl Teleporter {
    pub fn new(setup: TeleportSetup) -> Result<Self> {
        let settings = setup.settings()?;
        let input = setup.input_state()?;
        let plus = [c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)];
        let register = QubitState::product(&[[input.amps()[0], input.amps()[1]], plus])?;
        let entangler = Entangler::new(&register, setup.field, &settings, (SOURCE, TARGET))?;
        Ok(Self {
            setup,
            settings,
            input,
            entangler,
        })
    }

    pub fn setup(&self) -> &TeleportSetup {
        &self.setup
    }

    pub fn entangler(&self) -> &Entangler {
        &self.entangler
    }

    /// Register state after the pair fix, before the pi/2-pulse.
    pub fn corrected_pair(&mut self, outcome: MeasurementOutcome) -> Result<QubitDensity> {
        let r = self.entangler.collapse(outcome)?;
        apply_unitaries(&r.post_state, &pair_fix(outcome, SOURCE, TARGET))
    }

    fn finish<R: Rng + ?Sized>(
        &mut self,
        outcome: MeasurementOutcome,
        choice: SourceChoice<'_, R>,
    ) -> Result<BranchResult> {
        let collapse = self.entangler.collapse(outcome)?;
        let d = disentangle(&collapse.post_state, pair_fix(outcome, SOURCE, TARGET), SOURCE, TARGET, choice)?;
        let target_state = d.state.reduce_to(&[TARGET])?;
        let fidelity = target_state.fidelity_with(&self.input)?;
        Ok(BranchResult {
            outcome,
            outcome_probability: collapse.probability,
            source_result: d.source_result,
            source_probability: d.source_probability,
            corrections: d.ops,
            purity: target_state.purity(),
            target_state,
            fidelity,
        })
    }

    /// The branch with a given photon outcome and source result.
    pub fn branch(&mut self, outcome: MeasurementOutcome, source_result: usize) -> Result<BranchResult> {
        self.finish::<rand_chacha::ChaCha8Rng>(outcome, SourceChoice::Forced(source_result))
    }

    /// Every branch with outcome probability at least `min_probability`.
    pub fn branches(&mut self, min_probability: f64) -> Result<Vec<BranchResult>> {
        let mut out = Vec::new();
        for (o, _) in self.entangler.possible_outcomes(min_probability) {
            for r in 0..2 {
                match self.branch(o, r) {
                    Ok(b) => out.push(b),
                    Err(SimError::ZeroProbability { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(out)
    }

    pub fn trial(&mut self, seed: u64, trial: u64) -> Result<ProtocolTranscript> {
        let mut rng = trial_rng(seed, trial);
        let outcome = sample_outcome(self.entangler.distribution(), &mut rng)?;
        let b = self.finish(outcome, SourceChoice::Sample(&mut rng))?;
        let verified = rng.random::<f64>() < b.fidelity;
        Ok(ProtocolTranscript {
            seed,
            trial,
            branch: branch_label(outcome),
            outcome,
            outcome_probability: b.outcome_probability,
            fidelity: b.fidelity,
            purity: b.purity,
            corrections: b.corrections,
            source_result: b.source_result,
            verified,
            setup: self.setup,
            theta_eff: self.settings.theta_eff(),
            p_sp: self
                .setup
                .gamma_over_delta
                .map(|g| spontaneous_emission_probability(&self.setup.field, &self.settings, g)),
            target_state: density2(&b.target_state),
        })
    }
}

/// Single teleportation trial (`trial = 0`).
pub fn teleport(setup: TeleportSetup, seed: u64) -> Result<ProtocolTranscript> {
    Teleporter::new(setup)?.trial(seed, 0)
}

/// Re-runs the trial recorded in `transcript`.
pub fn replay(transcript: &ProtocolTranscript) -> Result<ProtocolTranscript> {
    Teleporter::new(transcript.setup)?.trial(transcript.seed, transcript.trial)
}

/// Aggregate statistics of a Monte Carlo teleportation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TeleportSummary {
    pub trials: u64,
    pub null_count: u64,
    pub null_fraction: f64,
    pub mean_fidelity: f64,
    pub mean_fidelity_null: Option<f64>,
    pub mean_fidelity_non_null: Option<f64>,
    pub min_fidelity_non_null: Option<f64>,
    /// Fraction of null-branch trials passing the projective test, and its binomial error.
    pub verified_fraction_null: Option<f64>,
    pub verified_sigma_null: Option<f64>,
    pub verified_fraction: f64,
}

impl TeleportSummary {
    pub fn from_transcripts(ts: &[ProtocolTranscript]) -> Self {
        let n = ts.len() as u64;
        let null: Vec<&ProtocolTranscript> = ts.iter().filter(|t| t.outcome.is_null()).collect();
        let rest: Vec<&ProtocolTranscript> = ts.iter().filter(|t| !t.outcome.is_null()).collect();
        let mean = |v: &[&ProtocolTranscript]| -> Option<f64> {
            (!v.is_empty()).then(|| v.iter().map(|t| t.fidelity).sum::<f64>() / v.len() as f64)
        };
        let frac = |v: &[&ProtocolTranscript]| -> Option<f64> {
            (!v.is_empty()).then(|| v.iter().filter(|t| t.verified).count() as f64 / v.len() as f64)
        };
        let verified_null = frac(&null);
        let verified_sigma_null = verified_null.map(|f| (f * (1.0 - f) / null.len() as f64).sqrt());
        Self {
            trials: n,
            null_count: null.len() as u64,
            null_fraction: if n == 0 { 0.0 } else { null.len() as f64 / n as f64 },
            mean_fidelity: if n == 0 {
                0.0
            } else {
                ts.iter().map(|t| t.fidelity).sum::<f64>() / n as f64
            },
            mean_fidelity_null: mean(&null),
            mean_fidelity_non_null: mean(&rest),
            min_fidelity_non_null: rest.iter().map(|t| t.fidelity).reduce(f64::min),
            verified_fraction_null: verified_null,
            verified_sigma_null,
            verified_fraction: if n == 0 {
                0.0
            } else {
                ts.iter().filter(|t| t.verified).count() as f64 / n as f64
            },
        }
    }
}

/// `trials` independent teleportations with per-trial random streams.
pub fn run_teleport(setup: TeleportSetup, seed: u64, trials: u64) -> Result<(Vec<ProtocolTranscript>, TeleportSummary)> {
    let mut tp = Teleporter::new(setup)?;
    let ts = (0..trials).map(|t| tp.trial(seed, t)).collect::<Result<Vec<_>>>()?;
    let summary = TeleportSummary::from_transcripts(&ts);
    Ok((ts, summary))
}

fn plus() -> [Complex64; 2] {
    [c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)]
}

/// `(|000> + |111>)/sqrt2`.
pub fn ghz_reference() -> QubitState {
    let mut amps = vec![ZERO; 8];
    amps[0] = c(FRAC_1_SQRT_2, 0.0);
    amps[7] = c(FRAC_1_SQRT_2, 0.0);
    QubitState::new(amps).expect("normalised")
}

/// `(|00> + |11>)/sqrt2 (x) (|0> + |1>)/sqrt2`.
pub fn ghz_first_round_reference() -> QubitState {
    let h = 0.5;
    QubitState::new(vec![c(h, 0.0), c(h, 0.0), ZERO, ZERO, ZERO, ZERO, c(h, 0.0), c(h, 0.0)]).expect("normalised")
}

/// Outcome of a GHZ preparation.
#[derive(Debug, Clone)]
pub struct GhzResult {
    pub outcomes: [MeasurementOutcome; 2],
    pub probability: f64,
    pub corrections: Vec<LocalOp>,
    pub first_round_fidelity: f64,
    pub fidelity: f64,
    pub state: QubitDensity,
}

/// GHZ preparation from `|+++>`: the primitive on `(A, B)` then `(B, C)`,
/// each followed by the pair fix on the junior qubit.
#[derive(Debug, Clone)]
pub struct GhzBuilder {
    field: InputField,
    settings: InteractionSettings,
    first: Entangler,
    second: HashMap<MeasurementOutcome, Entangler>,
}

/// Pair fix for GHZ rounds: flip or parity phase on the junior qubit.
pub fn junior_fix(outcome: MeasurementOutcome, junior: usize) -> Vec<LocalOp> {
    if outcome.is_null() {
        vec![LocalOp::PiPulse { qubit: junior }]
    } else if outcome.is_odd() {
        vec![LocalOp::PhaseImprint {
            qubit: junior,
            level: 1,
            angle: PI,
        }]
    } else {
        Vec::new()
    }
}

impl GhzBuilder {
    pub fn new(field: InputField, settings: InteractionSettings) -> Result<Self> {
        let start = QubitState::product(&[plus(), plus(), plus()])?;
        let first = Entangler::new(&start, field, &settings, (0, 1))?;
        Ok(Self {
            field,
            settings,
            first,
            second: HashMap::new(),
        })
    }

    pub fn first_round_outcomes(&self, min_probability: f64) -> Vec<(MeasurementOutcome, f64)> {
        self.first.possible_outcomes(min_probability)
    }

    fn after_first(&mut self, o1: MeasurementOutcome) -> Result<(f64, QubitDensity)> {
        let r = self.first.collapse(o1)?;
        Ok((r.probability, apply_unitaries(&r.post_state, &junior_fix(o1, 1))?))
    }

    fn second_round(&mut self, o1: MeasurementOutcome) -> Result<&mut Entangler> {
        if !self.second.contains_key(&o1) {
            let (_, rho) = self.after_first(o1)?;
            let e = Entangler::from_density(&rho, self.field, &self.settings, (1, 2))?;
            self.second.insert(o1, e);
        }
        Ok(self.second.get_mut(&o1).expect("inserted"))
    }

    pub fn second_round_outcomes(&mut self, o1: MeasurementOutcome, min_probability: f64) -> Result<Vec<(MeasurementOutcome, f64)>> {
        Ok(self.second_round(o1)?.possible_outcomes(min_probability))
    }

    pub fn branch(&mut self, o1: MeasurementOutcome, o2: MeasurementOutcome) -> Result<GhzResult> {
        let (p1, rho1) = self.after_first(o1)?;
        let first_round_fidelity = rho1.fidelity_with(&ghz_first_round_reference())?;
        let r2 = self.second_round(o1)?.collapse(o2)?;
        let mut corrections = junior_fix(o1, 1);
        let fix2 = junior_fix(o2, 2);
        let state = apply_unitaries(&r2.post_state, &fix2)?;
        corrections.extend(fix2);
        let fidelity = state.fidelity_with(&ghz_reference())?;
        Ok(GhzResult {
            outcomes: [o1, o2],
            probability: p1 * r2.probability,
            corrections,
            first_round_fidelity,
            fidelity,
            state,
        })
    }

    pub fn trial(&mut self, seed: u64, trial: u64) -> Result<GhzResult> {
        let mut rng = trial_rng(seed, trial);
        let o1 = sample_outcome(self.first.distribution(), &mut rng)?;
        let o2 = sample_outcome(self.second_round(o1)?.distribution(), &mut rng)?;
        self.branch(o1, o2)
    }
}

/// One seeded GHZ preparation.
pub fn ghz(field: InputField, settings: InteractionSettings, seed: u64) -> Result<GhzResult> {
    GhzBuilder::new(field, settings)?.trial(seed, 0)
}

/// Outcome of an entanglement swap.
#[derive(Debug, Clone)]
pub struct SwapResult {
    pub outcome: MeasurementOutcome,
    pub probability: f64,
    pub source_result: usize,
    pub corrections: Vec<LocalOp>,
    /// Reduced state of `(A, C)`.
    pub state: QubitDensity,
    pub fidelity: f64,
}

/// Swaps `c0|00>_AB + c1|11>_AB` onto `(A, C)`: primitive on `(B, C)`,
/// then `B` is disentangled like the teleportation source.
#[derive(Debug, Clone)]
pub struct Swapper {
    reference: QubitState,
    entangler: Entangler,
}

impl Swapper {
    pub fn new(c0: Complex64, c1: Complex64, field: InputField, settings: InteractionSettings) -> Result<Self> {
        let norm = c0.norm_sqr() + c1.norm_sqr();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(invalid(format!("|c0|^2 + |c1|^2 = {norm}, expected 1")));
        }
        let h = FRAC_1_SQRT_2;
        let mut amps = vec![ZERO; 8];
        amps[0b000] = c0 * h;
        amps[0b001] = c0 * h;
        amps[0b110] = c1 * h;
        amps[0b111] = c1 * h;
        let start = QubitState::normalized(amps)?;
        let entangler = Entangler::new(&start, field, &settings, (1, 2))?;
        let reference = QubitState::normalized(vec![c0, ZERO, ZERO, c1])?;
        Ok(Self { reference, entangler })
    }

    pub fn entangler(&self) -> &Entangler {
        &self.entangler
    }

    fn finish<R: Rng + ?Sized>(&mut self, outcome: MeasurementOutcome, choice: SourceChoice<'_, R>) -> Result<SwapResult> {
        let r = self.entangler.collapse(outcome)?;
        let d = disentangle(&r.post_state, junior_fix(outcome, 2), 1, 2, choice)?;
        let state = d.state.reduce_to(&[0, 2])?;
        let fidelity = state.fidelity_with(&self.reference)?;
        Ok(SwapResult {
            outcome,
            probability: r.probability * d.source_probability,
            source_result: d.source_result,
            corrections: d.ops,
            state,
            fidelity,
        })
    }

    pub fn branch(&mut self, outcome: MeasurementOutcome, source_result: usize) -> Result<SwapResult> {
        self.finish::<rand_chacha::ChaCha8Rng>(outcome, SourceChoice::Forced(source_result))
    }

    pub fn trial(&mut self, seed: u64, trial: u64) -> Result<SwapResult> {
        let mut rng = trial_rng(seed, trial);
        let outcome = sample_outcome(self.entangler.distribution(), &mut rng)?;
        self.finish(outcome, SourceChoice::Sample(&mut rng))
    }
}

/// One seeded entanglement swap.
pub fn swap(c0: Complex64, c1: Complex64, field: InputField, settings: InteractionSettings, seed: u64) -> Result<SwapResult> {
    Swapper::new(c0, c1, field, settings)?.trial(seed, 0)
}
