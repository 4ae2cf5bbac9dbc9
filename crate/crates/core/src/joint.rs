//! Joint qubit-register x two-mode field states and the full interferometer
//! `U = U_BS U_T U_S U_BS`.
//!
//! Qubits at the two designated register positions `(mu, nu)` sit in the
//! interferometer arms. Level 0 of each couples to mode 0 and level 1 to
//! mode 1, so configuration `b` shifts the modes by `-theta_eff * s(b)` and
//! `+theta_eff * s(b)` with `s(b) = 1 - b_mu - b_nu`, once the common phase
//! `exp(-i theta_eff (n0 + n1))` is dropped.
//!
//! With that convention a coherent input `(alpha, 0)` leaves as
//! `(abar sin(theta_eff s), abar cos(theta_eff s))` with `abar = -i alpha`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::fock::{ModePhasePair, TwoModePhotonState};
use crate::qubit::{bit, QubitDensity, QubitState};

/// Single-pass phase and cavity pass count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionSettings {
    theta: f64,
    passes: u32,
}

impl InteractionSettings {
    /// `|passes * theta|` must stay below `pi/2`.
    pub fn new(theta: f64, passes: u32) -> Result<Self> {
        if passes == 0 {
            return Err(invalid("cavity pass count must be at least 1"));
        }
        if !theta.is_finite() {
            return Err(invalid("phase must be finite"));
        }
        let eff = theta * passes as f64;
        if eff.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(invalid(format!(
                "effective phase {eff} outside (-pi/2, pi/2)"
            )));
        }
        Ok(Self { theta, passes })
    }

    /// Single pass, given effective phase.
    pub fn single_pass(theta_eff: f64) -> Result<Self> {
        Self::new(theta_eff, 1)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn passes(&self) -> u32 {
        self.passes
    }

    pub fn theta_eff(&self) -> f64 {
        self.theta * self.passes as f64
    }
}

/// `s(b) = 1 - b_mu - b_nu`.
#[inline]
pub fn config_sign(b: usize, pair: (usize, usize), k: usize) -> i32 {
    1 - bit(b, pair.0, k) as i32 - bit(b, pair.1, k) as i32
}

/// Entangled register x field state: one photon block per configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    num_qubits: usize,
    pair: (usize, usize),
    blocks: Vec<TwoModePhotonState>,
}

/// Product state `qubits (x) photons` with `pair` in the interferometer arms.
pub fn make_joint(
    qubits: &QubitState,
    photons: &TwoModePhotonState,
    pair: (usize, usize),
) -> Result<JointState> {
    let k = qubits.num_qubits();
    if pair.0 == pair.1 || pair.0 >= k || pair.1 >= k {
        return Err(invalid(format!(
            "interferometer pair {pair:?} invalid for a {k}-qubit register"
        )));
    }
    let blocks = qubits
        .amps()
        .iter()
        .map(|&c| {
            let mut block = photons.clone();
            block.scale(c);
            block
        })
        .collect();
    Ok(JointState {
        num_qubits: k,
        pair,
        blocks,
    })
}

impl JointState {
    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn pair(&self) -> (usize, usize) {
        self.pair
    }

    pub fn num_configs(&self) -> usize {
        self.blocks.len()
    }

    /// Photon block of configuration `b` (unnormalised, weighted by the qubit amplitude).
    pub fn block(&self, b: usize) -> &TwoModePhotonState {
        &self.blocks[b]
    }

    pub fn amp(&self, b: usize, n0: usize, n1: usize) -> Complex64 {
        self.blocks[b].amp(n0, n1)
    }

    pub fn cutoff(&self) -> usize {
        self.blocks[0].cutoff()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_sqr()).sum()
    }

    pub fn sign(&self, b: usize) -> i32 {
        config_sign(b, self.pair, self.num_qubits)
    }

    /// Beamsplitter, configuration-dependent mode phases, beamsplitter.
    pub fn propagate_interferometer(&self, settings: &InteractionSettings) -> Result<JointState> {
        let theta = settings.theta_eff();
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(b, block)| {
                let s = self.sign(b) as f64;
                let phases = ModePhasePair::new(-theta * s, theta * s);
                block
                    .apply_beamsplitter()?
                    .apply_mode_phase(phases)
                    .apply_beamsplitter()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(JointState {
            num_qubits: self.num_qubits,
            pair: self.pair,
            blocks,
        })
    }

    /// Qubit density matrix with every photon traced out.
    pub fn reduced_qubit_density(&self) -> QubitDensity {
        let d = self.blocks.len();
        let rho = DMatrix::from_fn(d, d, |r, c| {
            self.blocks[r]
                .sectors()
                .zip(self.blocks[c].sectors())
                .flat_map(|((_, x), (_, y))| x.iter().zip(y.iter()))
                .map(|(a, b)| a * b.conj())
                .sum()
        });
        QubitDensity::from_matrix(rho).expect("register size already validated")
    }
}

/// Closed-form output coherent amplitudes `(abar sin(theta_eff s), abar cos(theta_eff s))`
/// for every configuration of `qubits`, with `abar = -i alpha`.
pub fn coherent_output_closed_form(
    alpha: Complex64,
    theta_eff: f64,
    qubits: &QubitState,
    pair: (usize, usize),
) -> Result<Vec<(Complex64, Complex64)>> {
    if theta_eff.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(invalid("effective phase outside (-pi/2, pi/2)"));
    }
    let k = qubits.num_qubits();
    if pair.0 == pair.1 || pair.0 >= k || pair.1 >= k {
        return Err(invalid("invalid interferometer pair"));
    }
    let abar = Complex64::new(0.0, -1.0) * alpha;
    Ok((0..qubits.amps().len())
        .map(|b| {
            let t = theta_eff * config_sign(b, pair, k) as f64;
            (abar * t.sin(), abar * t.cos())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{default_coherent_cutoff, make_coherent_pair, make_twin_fock};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn layout(c0: Complex64, c1: Complex64) -> QubitState {
        QubitState::normalized(vec![c0, c0, c1, c1]).unwrap()
    }

    #[test]
    fn make_joint_examples() {
        let q = QubitState::new(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        let j = make_joint(&q, &TwoModePhotonState::vacuum(0), (0, 1)).unwrap();
        assert_eq!(j.amp(0, 0, 0), c(1.0, 0.0));
        assert!((j.norm_sqr() - 1.0).abs() < 1e-15);
        assert!(make_joint(&q, &TwoModePhotonState::vacuum(0), (1, 1)).is_err());
        assert!(make_joint(&q, &TwoModePhotonState::vacuum(0), (0, 2)).is_err());

        // Source/target layout c0|00> + c0|01> + c1|10> + c1|11>, all over sqrt2.
        let (c0, c1) = (c(0.6, 0.0), c(0.0, 0.8));
        let j = make_joint(&layout(c0, c1), &make_twin_fock(2).unwrap(), (0, 1)).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((j.amp(1, 2, 2) - c0 * r).norm() < 1e-15);
        assert!((j.amp(2, 2, 2) - c1 * r).norm() < 1e-15);
        assert_eq!(j.sign(0), 1);
        assert_eq!(j.sign(1), 0);
        assert_eq!(j.sign(3), -1);
    }

    #[test]
    fn settings_validation() {
        assert!(InteractionSettings::new(0.1, 0).is_err());
        assert!(InteractionSettings::new(0.2, 8).is_err());
        let s = InteractionSettings::new(0.01, 10).unwrap();
        assert!((s.theta_eff() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_phase_routes_to_lower_port() {
        let q = layout(c(0.6, 0.0), c(0.8, 0.0));
        let j = make_joint(&q, &TwoModePhotonState::basis(1, 0), (0, 1)).unwrap();
        let out = j
            .propagate_interferometer(&InteractionSettings::single_pass(0.0).unwrap())
            .unwrap();
        for b in 0..4 {
            let weight = q.amps()[b];
            assert!((out.amp(b, 0, 1) - c(0.0, -1.0) * weight).norm() < 1e-14);
            assert!(out.amp(b, 1, 0).norm() < 1e-14);
        }
    }

    #[test]
    fn twin_fock_n1_coincidence_probability() {
        for theta in [0.05, 0.2, 0.6] {
            let q = QubitState::new(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
            let j = make_joint(&q, &make_twin_fock(1).unwrap(), (0, 1)).unwrap();
            let out = j
                .propagate_interferometer(&InteractionSettings::single_pass(theta).unwrap())
                .unwrap();
            let p11 = out.amp(0, 1, 1).norm_sqr();
            assert!((p11 - (2.0 * theta).cos().powi(2)).abs() < 1e-13);
        }
    }

    #[test]
    fn closed_form_examples() {
        let q = layout(c(0.6, 0.0), c(0.8, 0.0));
        let alpha = c(2.0, 0.0);
        let cf = coherent_output_closed_form(alpha, 0.1, &q, (0, 1)).unwrap();
        assert_eq!(cf[1].0, c(0.0, 0.0));
        assert_eq!(cf[2].0, c(0.0, 0.0));
        assert!((cf[0].0 + cf[3].0).norm() < 1e-15);
        assert!((cf[0].1 - cf[3].1).norm() < 1e-15);
        let flat = coherent_output_closed_form(alpha, 0.0, &q, (0, 1)).unwrap();
        for (up, low) in flat {
            assert_eq!(up, c(0.0, 0.0));
            assert!((low.norm() - 2.0).abs() < 1e-15);
        }
    }

    /// Closed form against exact propagation across the grid of phases and intensities.
    #[test]
    fn closed_form_matches_propagation() {
        let q = layout(c(0.6, 0.0), c(0.0, 0.8));
        for mean in [1.0f64, 10.0, 100.0] {
            let alpha = c(mean.sqrt(), 0.0);
            let cut = default_coherent_cutoff(mean);
            let input = make_coherent_pair(alpha, c(0.0, 0.0), cut).unwrap();
            let joint = make_joint(&q, &input, (0, 1)).unwrap();
            for theta in [0.01, 0.05, 0.1] {
                let out = joint
                    .propagate_interferometer(&InteractionSettings::single_pass(theta).unwrap())
                    .unwrap();
                let cf = coherent_output_closed_form(alpha, theta, &q, (0, 1)).unwrap();
                for (b, &(b0, b1)) in cf.iter().enumerate() {
                    let expect = make_coherent_pair(b0, b1, cut).unwrap();
                    let w = q.amps()[b];
                    let max = (0..=cut)
                        .flat_map(|n| (0..=n).map(move |n0| (n0, n - n0)))
                        .map(|(n0, n1)| (out.amp(b, n0, n1) - w * expect.amp(n0, n1)).norm())
                        .fold(0.0, f64::max);
                    assert!(max < 1e-7, "mean={mean} theta={theta} b={b} max={max:e}");
                }
            }
        }
    }

    #[test]
    fn null_configs_leave_upper_port_dark() {
        let q = layout(c(0.6, 0.0), c(0.8, 0.0));
        let input = make_coherent_pair(c(3.0, 0.0), c(0.0, 0.0), 60).unwrap();
        let out = make_joint(&q, &input, (0, 1))
            .unwrap()
            .propagate_interferometer(&InteractionSettings::single_pass(0.3).unwrap())
            .unwrap();
        for b in [1, 2] {
            for n in 1..=60 {
                for n0 in 1..=n {
                    assert!(out.amp(b, n0, n - n0).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn twin_fock_parity_between_signs() {
        let n = 4;
        let q = layout(c(0.6, 0.0), c(0.8, 0.0));
        let out = make_joint(&q, &make_twin_fock(n).unwrap(), (0, 1))
            .unwrap()
            .propagate_interferometer(&InteractionSettings::single_pass(0.27).unwrap())
            .unwrap();
        // configs 00 (s=+1, weight c0) and 11 (s=-1, weight c1)
        for m in -(n as i64)..=(n as i64) {
            let (n0, n1) = ((n as i64 + m) as usize, (n as i64 - m) as usize);
            let plus = out.amp(0, n0, n1) / q.amps()[0];
            let minus = out.amp(3, n0, n1) / q.amps()[3];
            let sign = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            assert!((minus - plus * sign).norm() < 1e-13, "m={m}");
        }
    }

    #[test]
    fn propagation_is_linear_in_register() {
        let photons = make_twin_fock(2).unwrap();
        let settings = InteractionSettings::single_pass(0.3).unwrap();
        let a = QubitState::normalized(vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0), c(0.5, 0.0)]).unwrap();
        let b = QubitState::normalized(vec![c(0.0, 0.0), c(0.3, 0.0), c(1.0, -1.0), c(0.0, 0.0)]).unwrap();
        let (wa, wb) = (c(0.6, 0.0), c(0.0, 0.8));
        let mix: Vec<Complex64> = a.amps().iter().zip(b.amps()).map(|(x, y)| wa * x + wb * y).collect();
        let mix = QubitState::normalized(mix.clone()).unwrap();
        let norm = a.amps().iter().zip(b.amps()).map(|(x, y)| (wa * x + wb * y).norm_sqr()).sum::<f64>().sqrt();
        let pa = make_joint(&a, &photons, (0, 1)).unwrap().propagate_interferometer(&settings).unwrap();
        let pb = make_joint(&b, &photons, (0, 1)).unwrap().propagate_interferometer(&settings).unwrap();
        let pm = make_joint(&mix, &photons, (0, 1)).unwrap().propagate_interferometer(&settings).unwrap();
        for cfg in 0..4 {
            for n0 in 0..=4 {
                let lhs = pm.amp(cfg, n0, 4 - n0) * norm;
                let rhs = wa * pa.amp(cfg, n0, 4 - n0) + wb * pb.amp(cfg, n0, 4 - n0);
                assert!((lhs - rhs).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn spectator_qubit_does_not_change_phase() {
        let plus = [c(1.0, 0.0), c(1.0, 0.0)];
        let q = QubitState::product(&[plus, plus, plus]).unwrap();
        let j = make_joint(&q, &make_twin_fock(1).unwrap(), (1, 2)).unwrap();
        // configs 000 and 100 differ only in the spectator A
        assert_eq!(j.sign(0b000), j.sign(0b100));
        assert_eq!(j.sign(0b011), -1);
        let out = j.propagate_interferometer(&InteractionSettings::single_pass(0.2).unwrap()).unwrap();
        for n0 in 0..=2 {
            assert!((out.amp(0b000, n0, 2 - n0) - out.amp(0b100, n0, 2 - n0)).norm() < 1e-15);
        }
    }
}
