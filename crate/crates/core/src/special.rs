//! Small special-function helpers shared across modules.

/// Table of `ln k!` for `k = 0..=max`.
pub fn ln_factorials(max: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(max + 1);
    let mut acc = 0.0f64;
    table.push(0.0);
    for k in 1..=max {
        acc += (k as f64).ln();
        table.push(acc);
    }
    table
}

/// `ln C(n, k)` from a factorial table.
#[inline]
pub fn ln_binomial(lnf: &[f64], n: usize, k: usize) -> f64 {
    lnf[n] - lnf[k] - lnf[n - k]
}

/// Normalised associated Legendre function
/// `sqrt((l-m)!/(l+m)!) P_l^m(cos beta)` without the Condon-Shortley phase,
/// with the `sin^m beta` factor taken with its sign so that the result is
/// odd in `beta` for odd `m`.
///
/// Evaluated by the upward three-term recurrence in degree, which is stable
/// for these normalised functions. Values are carried with a separate
/// logarithmic scale so that seeds far below `f64::MIN_POSITIVE` still
/// produce correct (tiny or moderate) results.
pub fn normalized_legendre(l: usize, m: usize, beta: f64) -> f64 {
    if m > l {
        return 0.0;
    }
    let x = beta.cos();
    let s = beta.sin();

    // Seed Q_m^m = prod_{i=1..m} sqrt((2i-1)/(2i)) * s^m, kept as sign * exp(log).
    let mut log_seed = 0.0f64;
    for i in 1..=m {
        log_seed += 0.5 * (((2 * i - 1) as f64) / ((2 * i) as f64)).ln();
    }
    let mut sign = 1.0;
    if m > 0 {
        if s == 0.0 {
            return 0.0;
        }
        log_seed += m as f64 * s.abs().ln();
        if s < 0.0 && m % 2 == 1 {
            sign = -1.0;
        }
    }
    if l == m {
        return sign * log_seed.exp();
    }

    const RESCALE: f64 = 1e200;
    let mut scale_ln = log_seed;
    let mut prev = 0.0f64;
    let mut cur = sign;
    let mf = m as f64;
    for deg in (m + 1)..=l {
        let d = deg as f64;
        let next = ((2.0 * d - 1.0) * x * cur - ((d - 1.0) * (d - 1.0) - mf * mf).sqrt() * prev)
            / (d * d - mf * mf).sqrt();
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE {
            cur /= RESCALE;
            prev /= RESCALE;
            scale_ln += RESCALE.ln();
        }
    }
    if cur == 0.0 {
        return 0.0;
    }
    let log_mag = cur.abs().ln() + scale_ln;
    cur.signum() * log_mag.exp()
}

/// Legendre polynomial `P_l(x)` by the standard recurrence.
#[cfg(test)]
pub fn legendre(l: usize, x: f64) -> f64 {
    if l == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = x;
    for deg in 2..=l {
        let d = deg as f64;
        let next = ((2.0 * d - 1.0) * x * cur - (d - 1.0) * prev) / d;
        prev = cur;
        cur = next;
    }
    cur
}
