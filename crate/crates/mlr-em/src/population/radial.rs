//! Closed forms for the radial integrals `int_0^inf s^m e^{-s} f(k s) ds` with
//! `f` one of `tanh`, `tanh'`, `log cosh`.
//!
//! Expanding `tanh(x) = 1 + 2 sum_{m>=1} (-1)^m e^{-2 m x}` gives, for `k > 0`
//! and `a = 1/(2k)`,
//!
//! ```text
//! int s^p e^{-s} tanh(ks) ds = p! (1 - 2 (2k)^{-(p+1)} eta_{p+1}(1 + a))
//! int e^{-s} log cosh(ks) ds = k - eta_1(1 + a)
//! ```
//!
//! where `eta_p(x) = sum_{j>=0} (-1)^j (j + x)^{-p}`. The `tanh'` moments follow by
//! integrating by parts. Near `k = 0` the Maclaurin series of `tanh` is used.

/// Bernoulli numbers `B_2, B_4, ..., B_20`.
const BERNOULLI: [f64; 10] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
];

const SERIES_CUTOFF: f64 = 0.01;
const SERIES_TERMS: usize = 8;
const ASYMPTOTIC_START: f64 = 20.0;

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// `(2^{2n} - 1) B_{2n} / (2n)!` for `n = 1..=10`.
fn boole_coefficients() -> [f64; 10] {
    let mut c = [0.0; 10];
    for (i, b) in BERNOULLI.iter().enumerate() {
        let n = i + 1;
        c[i] = (4f64.powi(n as i32) - 1.0) * b / factorial(2 * n);
    }
    c
}

/// Coefficients `t_n` of `tanh(x) = sum_n t_n x^{2n-1}`.
fn tanh_coefficients() -> [f64; 10] {
    let c = boole_coefficients();
    let mut t = [0.0; 10];
    for (i, ci) in c.iter().enumerate() {
        t[i] = 4f64.powi(i as i32 + 1) * ci;
    }
    t
}

/// `(eta_1(x), eta_2(x), eta_3(x))` for `x >= 1`.
pub fn eta123(x: f64) -> (f64, f64, f64) {
    let mut n = 0usize;
    if x < ASYMPTOTIC_START {
        n = (ASYMPTOTIC_START - x).ceil() as usize;
        n += n % 2;
    }
    let (mut e1, mut e2, mut e3) = (0.0, 0.0, 0.0);
    for j in (0..n).rev() {
        let inv = 1.0 / (x + j as f64);
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        e1 += sign * inv;
        e2 += sign * inv * inv;
        e3 += sign * inv * inv * inv;
    }
    let big = x + n as f64;
    let inv = 1.0 / big;
    let inv2 = inv * inv;
    let c = boole_coefficients();
    // Boole summation: eta_p(X) ~ X^{-p}/2 + sum_n c_n (p)_{2n-1} X^{-p-2n+1}.
    let mut tails = [0.0f64; 3];
    for (p_idx, tail) in tails.iter_mut().enumerate() {
        let p = (p_idx + 1) as f64;
        let lead = inv.powi(p_idx as i32 + 1);
        let mut acc = 0.5;
        let mut rising = p;
        let mut xpow = inv;
        for (k, ck) in c.iter().enumerate() {
            if k > 0 {
                let m = (2 * k) as f64;
                rising *= (p + m - 1.0) * (p + m);
                xpow *= inv2;
            }
            acc += ck * rising * xpow;
        }
        *tail = lead * acc;
    }
    (e1 + tails[0], e2 + tails[1], e3 + tails[2])
}

/// Radial moments at one value of `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Radial {
    /// `int e^{-s} tanh(ks)`
    pub phi0: f64,
    /// `int s e^{-s} tanh(ks)`
    pub phi1: f64,
    /// `int s e^{-s} tanh'(ks)`
    pub phi2: f64,
    /// `int s^2 e^{-s} tanh(ks)`
    pub t2: f64,
    /// `int s^2 e^{-s} tanh'(ks)`
    pub m2: f64,
    /// `int e^{-s} log cosh(ks)`
    pub psi: f64,
}

fn series(k: f64) -> Radial {
    let t = tanh_coefficients();
    let k2 = k * k;
    let mut r = Radial { phi0: 0.0, phi1: 0.0, phi2: 0.0, t2: 0.0, m2: 0.0, psi: 0.0 };
    let mut kpow = 1.0; // k^{2n-2}
    for (i, tn) in t.iter().enumerate().take(SERIES_TERMS) {
        let n = i + 1;
        let f_odd = factorial(2 * n - 1);
        let f_even = factorial(2 * n);
        let odd = (2 * n - 1) as f64;
        r.phi0 += tn * f_odd * kpow * k;
        r.phi1 += tn * f_even * kpow * k;
        r.t2 += tn * factorial(2 * n + 1) * kpow * k;
        r.phi2 += tn * odd * f_odd * kpow;
        r.m2 += tn * odd * f_even * kpow;
        r.psi += tn * f_odd * kpow * k2;
        kpow *= k2;
    }
    r
}

fn closed(k: f64) -> Radial {
    let a = 0.5 / k;
    let (e1, e2, e3) = eta123(1.0 + a);
    let ik = 1.0 / k;
    let ik2 = ik * ik;
    Radial {
        phi0: 1.0 - e1 * ik,
        phi1: 1.0 - 0.5 * e2 * ik2,
        phi2: (e1 - 0.5 * e2 * ik) * ik2,
        t2: 2.0 - 0.5 * e3 * ik2 * ik,
        m2: (e2 - 0.5 * e3 * ik) * ik2 * ik,
        psi: k - e1,
    }
}

pub fn radial(k: f64) -> Radial {
    let ak = k.abs();
    let mut r = if ak < SERIES_CUTOFF { series(ak) } else { closed(ak) };
    if k < 0.0 {
        r.phi0 = -r.phi0;
        r.phi1 = -r.phi1;
        r.t2 = -r.t2;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_eta(p: i32, x: f64) -> f64 {
        // Pairwise sum of the alternating series, averaged over two consecutive
        // partial sums to cancel the leading oscillation.
        let mut s = 0.0;
        let mut prev = 0.0;
        for j in 0..2_000_000 {
            prev = s;
            let t = (x + j as f64).powi(-p);
            s += if j % 2 == 0 { t } else { -t };
        }
        0.5 * (s + prev)
    }

    #[test]
    fn eta_matches_direct_alternating_sum() {
        for &x in &[1.0, 1.3, 2.5, 7.0, 19.5, 25.0, 400.0] {
            let (e1, e2, e3) = eta123(x);
            assert!((e1 - brute_eta(1, x)).abs() < 1e-11, "eta1({x})");
            assert!((e2 - brute_eta(2, x)).abs() < 1e-13, "eta2({x})");
            assert!((e3 - brute_eta(3, x)).abs() < 1e-13, "eta3({x})");
        }
        assert!((eta123(1.0).0 - std::f64::consts::LN_2).abs() < 1e-15);
        let pi2_12 = std::f64::consts::PI.powi(2) / 12.0;
        assert!((eta123(1.0).1 - pi2_12).abs() < 1e-15);
    }

    #[test]
    fn series_and_closed_form_agree_at_cutoff() {
        for &k in &[0.005, 0.01, 0.02] {
            let (s, c) = (series(k), closed(k));
            for (a, b) in [
                (s.phi0, c.phi0),
                (s.phi1, c.phi1),
                (s.phi2, c.phi2),
                (s.t2, c.t2),
                (s.m2, c.m2),
                (s.psi, c.psi),
            ] {
                assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()), "k={k}: {a} vs {b}");
            }
        }
    }
}
