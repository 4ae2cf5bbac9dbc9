//! Qubit registers (pure and mixed) of up to three qubits.
//!
//! Configurations are indexed with qubit 0 as the most significant bit, so
//! for two qubits `(S, T)` index 1 is `|01>_ST`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{invalid, Result, SimError};

pub const MAX_QUBITS: usize = 3;
pub const STATE_NORM_TOL: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// 2x2 single-qubit operator, `m[row][col]`.
pub type Gate2 = [[Complex64; 2]; 2];

/// Bit of qubit `q` in configuration `b` of a `k`-qubit register.
#[inline]
pub fn bit(b: usize, q: usize, k: usize) -> usize {
    (b >> (k - 1 - q)) & 1
}

fn check_size(len: usize) -> Result<usize> {
    if !len.is_power_of_two() || len < 2 {
        return Err(invalid(format!("register dimension {len} is not 2^k with k >= 1")));
    }
    let k = len.trailing_zeros() as usize;
    if k > MAX_QUBITS {
        return Err(invalid(format!("at most {MAX_QUBITS} qubits are supported, got {k}")));
    }
    Ok(k)
}

/// Pure amplitudes over `{0,1}^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitState {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl QubitState {
    /// Requires unit norm to within `1e-12`.
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        let num_qubits = check_size(amps.len())?;
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > STATE_NORM_TOL {
            return Err(invalid(format!("qubit amplitudes have norm {norm}, expected 1")));
        }
        Ok(Self { num_qubits, amps })
    }

    /// Normalises the given amplitudes.
    pub fn normalized(amps: Vec<Complex64>) -> Result<Self> {
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(invalid("cannot normalise a zero or non-finite vector"));
        }
        let amps = amps.into_iter().map(|a| a / norm).collect();
        Self::new(amps)
    }

    /// Tensor product of single-qubit states, qubit 0 first.
    pub fn product(qubits: &[[Complex64; 2]]) -> Result<Self> {
        let k = qubits.len();
        if k == 0 || k > MAX_QUBITS {
            return Err(invalid("product register needs 1..=3 qubits"));
        }
        let amps = (0..1usize << k)
            .map(|b| {
                (0..k).fold(Complex64::new(1.0, 0.0), |acc, q| acc * qubits[q][bit(b, q, k)])
            })
            .collect();
        Self::normalized(amps)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn to_density(&self) -> QubitDensity {
        QubitDensity::from_pure(self)
    }

    /// Applies a single-qubit operator to qubit `q`.
    pub fn apply_gate(&self, q: usize, g: &Gate2) -> Result<Self> {
        let k = self.num_qubits;
        if q >= k {
            return Err(SimError::QubitIndex { index: q, size: k });
        }
        let mask = 1usize << (k - 1 - q);
        let amps = (0..self.amps.len())
            .map(|r| {
                let r0 = r & !mask;
                g[bit(r, q, k)][0] * self.amps[r0] + g[bit(r, q, k)][1] * self.amps[r0 | mask]
            })
            .collect();
        Ok(Self { num_qubits: k, amps })
    }
}

/// Density matrix over a `k`-qubit register.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitDensity {
    num_qubits: usize,
    rho: DMatrix<Complex64>,
}

impl QubitDensity {
    pub fn from_matrix(rho: DMatrix<Complex64>) -> Result<Self> {
        if !rho.is_square() {
            return Err(invalid("density matrix must be square"));
        }
        let num_qubits = check_size(rho.nrows())?;
        Ok(Self { num_qubits, rho })
    }

    pub fn from_pure(state: &QubitState) -> Self {
        let v = nalgebra::DVector::from_column_slice(state.amps());
        Self {
            num_qubits: state.num_qubits(),
            rho: &v * v.adjoint(),
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.rho
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.rho[(row, col)]
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn purity(&self) -> f64 {
        (&self.rho * &self.rho).trace().re
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.rho + self.rho.adjoint()) * Complex64::new(0.5, 0.0);
        let mut ev: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Spectral decomposition `rho = sum_i w_i |v_i><v_i|`, keeping weights above `min_weight`.
    pub fn pure_components(&self, min_weight: f64) -> Result<Vec<(f64, QubitState)>> {
        let herm = (&self.rho + self.rho.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = herm.symmetric_eigen();
        let mut out = Vec::new();
        for (i, &w) in eig.eigenvalues.iter().enumerate() {
            if w > min_weight {
                let v: Vec<Complex64> = eig.eigenvectors.column(i).iter().copied().collect();
                out.push((w, QubitState::normalized(v)?));
            }
        }
        if out.is_empty() {
            return Err(invalid("density matrix has no positive weight"));
        }
        Ok(out)
    }

    /// Largest deviation from Hermiticity, unit trace and positivity.
    pub fn validity_defect(&self) -> f64 {
        let herm = (&self.rho - self.rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let trace = (self.trace() - 1.0).abs();
        let neg = self.eigenvalues().first().map(|e| (-e).max(0.0)).unwrap_or(0.0);
        herm.max(trace).max(neg)
    }

    /// `<psi| rho |psi>` for a normalised pure reference state.
    pub fn fidelity_with(&self, psi: &QubitState) -> Result<f64> {
        if psi.num_qubits() != self.num_qubits {
            return Err(invalid("fidelity reference has a different register size"));
        }
        let v = nalgebra::DVector::from_column_slice(psi.amps());
        Ok((v.adjoint() * &self.rho * &v)[(0, 0)].re)
    }

    /// Applies a single-qubit operator `g` to qubit `q`: `rho -> G rho G+`.
    pub fn apply_gate(&self, q: usize, g: &Gate2) -> Result<Self> {
        let u = self.embed(q, g)?;
        Ok(Self {
            num_qubits: self.num_qubits,
            rho: &u * &self.rho * u.adjoint(),
        })
    }

    fn embed(&self, q: usize, g: &Gate2) -> Result<DMatrix<Complex64>> {
        let k = self.num_qubits;
        if q >= k {
            return Err(SimError::QubitIndex { index: q, size: k });
        }
        let d = 1usize << k;
        let mask = 1usize << (k - 1 - q);
        Ok(DMatrix::from_fn(d, d, |r, c| {
            if r & !mask != c & !mask {
                ZERO
            } else {
                g[bit(r, q, k)][bit(c, q, k)]
            }
        }))
    }

    /// Probability that qubit `q` reads `value` in the computational basis.
    pub fn z_probability(&self, q: usize, value: usize) -> Result<f64> {
        let k = self.num_qubits;
        if q >= k {
            return Err(SimError::QubitIndex { index: q, size: k });
        }
        Ok((0..self.dim())
            .filter(|&b| bit(b, q, k) == value)
            .map(|b| self.rho[(b, b)].re)
            .sum())
    }

    /// Projects qubit `q` onto `value` and renormalises.
    pub fn project_z(&self, q: usize, value: usize) -> Result<(f64, Self)> {
        let p = self.z_probability(q, value)?;
        if p < crate::measurement::MIN_CONDITIONING_PROB {
            return Err(SimError::ZeroProbability {
                outcome: format!("qubit {q} = {value}"),
                probability: p,
            });
        }
        let k = self.num_qubits;
        let d = self.dim();
        let rho = DMatrix::from_fn(d, d, |r, c| {
            if bit(r, q, k) == value && bit(c, q, k) == value {
                self.rho[(r, c)] / p
            } else {
                ZERO
            }
        });
        Ok((p, Self { num_qubits: k, rho }))
    }

    /// Reduced state on the listed qubits (in the given order).
    pub fn reduce_to(&self, keep: &[usize]) -> Result<Self> {
        let k = self.num_qubits;
        if keep.is_empty() || keep.iter().any(|&q| q >= k) {
            return Err(invalid("invalid qubit list for partial trace"));
        }
        let kk = keep.len();
        let traced: Vec<usize> = (0..k).filter(|q| !keep.contains(q)).collect();
        let dk = 1usize << kk;
        let compose = |kept: usize, rest: usize| -> usize {
            let mut b = 0usize;
            for (i, &q) in keep.iter().enumerate() {
                b |= bit(kept, i, kk) << (k - 1 - q);
            }
            for (i, &q) in traced.iter().enumerate() {
                b |= ((rest >> (traced.len() - 1 - i)) & 1) << (k - 1 - q);
            }
            b
        };
        let rho = DMatrix::from_fn(dk, dk, |r, c| {
            (0..1usize << traced.len())
                .map(|e| self.rho[(compose(r, e), compose(c, e))])
                .sum()
        });
        Ok(Self { num_qubits: kk, rho })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn indexing_is_msb_first() {
        assert_eq!(bit(0b01, 0, 2), 0);
        assert_eq!(bit(0b01, 1, 2), 1);
        assert_eq!(bit(0b100, 0, 3), 1);
    }

    #[test]
    fn product_and_reduce() {
        let plus = [c(1.0, 0.0), c(1.0, 0.0)];
        let zero = [c(1.0, 0.0), c(0.0, 0.0)];
        let s = QubitState::product(&[zero, plus]).unwrap();
        assert!((s.amps()[1].re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        let rho = s.to_density();
        let t = rho.reduce_to(&[1]).unwrap();
        assert!((t.get(0, 1).re - 0.5).abs() < 1e-15);
        assert!((rho.purity() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(QubitState::new(vec![c(1.0, 0.0); 3]).is_err());
        assert!(QubitState::new(vec![c(0.25, 0.0); 16]).is_err());
        assert!(QubitState::new(vec![c(1.0, 0.0), c(1.0, 0.0)]).is_err());
    }

    #[test]
    fn pure_gate_matches_density_gate() {
        let s = QubitState::normalized(vec![c(0.3, 0.1), c(0.0, -0.5), c(0.7, 0.0), c(0.2, 0.2)]).unwrap();
        let h = 0.5f64.sqrt();
        let g: Gate2 = [[c(h, 0.0), c(0.0, -h)], [c(0.0, -h), c(h, 0.0)]];
        for q in 0..2 {
            let a = s.apply_gate(q, &g).unwrap().to_density();
            let b = s.to_density().apply_gate(q, &g).unwrap();
            assert!((a.matrix() - b.matrix()).norm() < 1e-14);
        }
    }

    #[test]
    fn pure_components_rebuild_the_matrix() {
        let a = QubitState::normalized(vec![c(1.0, 0.0), ZERO, ZERO, c(0.0, 1.0)]).unwrap();
        let b = QubitState::normalized(vec![ZERO, c(1.0, 0.0), c(1.0, 0.0), ZERO]).unwrap();
        let rho = QubitDensity::from_matrix(
            a.to_density().matrix() * Complex64::new(0.7, 0.0)
                + b.to_density().matrix() * Complex64::new(0.3, 0.0),
        )
        .unwrap();
        let comps = rho.pure_components(1e-14).unwrap();
        assert_eq!(comps.len(), 2);
        let mut rebuilt = DMatrix::<Complex64>::zeros(4, 4);
        for (w, v) in &comps {
            rebuilt += v.to_density().matrix() * Complex64::new(*w, 0.0);
        }
        assert!((rebuilt - rho.matrix()).norm() < 1e-13);
    }

    #[test]
    fn projection() {
        let bell = QubitState::normalized(vec![c(1.0, 0.0), ZERO, ZERO, c(1.0, 0.0)]).unwrap();
        let (p, post) = bell.to_density().project_z(0, 1).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert!((post.get(3, 3).re - 1.0).abs() < 1e-15);
        assert!(matches!(
            post.project_z(0, 0),
            Err(SimError::ZeroProbability { .. })
        ));
    }
}
