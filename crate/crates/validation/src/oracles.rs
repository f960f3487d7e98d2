//! Reference distributions and goodness-of-fit statistics written
//! independently of the engine.

use statrs::distribution::{Beta, Continuous, ContinuousCDF, Normal};

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as usize % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy)]
pub struct Ks {
    pub d: f64,
    pub p: f64,
}

/// One-sample Kolmogorov-Smirnov test with Stephens' finite-n correction.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Ks {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sn = n.sqrt();
    Ks {
        d,
        p: kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d),
    }
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Ks {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    Ks {
        d,
        p: kolmogorov_sf((ne + 0.12 + 0.11 / ne) * d),
    }
}

/// Composite Simpson rule with `n` (rounded up to even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    simpson_rule(a, b, n).into_iter().map(|(x, w)| w * f(x)).sum()
}

pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).expect("valid normal").cdf(x)
}

/// CDF of a half-normal with scale `z`.
pub fn half_normal_cdf(t: f64, z: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        2.0 * normal_cdf(t, 0.0, z) - 1.0
    }
}

/// Composite Simpson nodes and weights on `[a, b]`.
pub fn simpson_rule(a: f64, b: f64, n: usize) -> Vec<(f64, f64)> {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    (0..=n)
        .map(|k| {
            let w = if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            (a + k as f64 * h, w * h / 3.0)
        })
        .collect()
}

/// Marginal CDF of `b ~ N(mu, tau^2)` with `mu ~ N(m, s^2)` and
/// `tau ~ HN(z)`: `E_tau[Phi((b - m) / sqrt(s^2 + tau^2))]`.
pub struct ExchangeableSlope {
    m: f64,
    /// `(sqrt(s^2 + tau^2), weight * density)` per node.
    nodes: Vec<(f64, f64)>,
}

impl ExchangeableSlope {
    pub fn new(m: f64, s: f64, z: f64) -> Self {
        let hn = |t: f64| 2.0 * (-(t * t) / (2.0 * z * z)).exp() / (z * (2.0 * std::f64::consts::PI).sqrt());
        let nodes = simpson_rule(0.0, 12.0 * z, 600)
            .into_iter()
            .map(|(t, w)| ((s * s + t * t).sqrt(), w * hn(t)))
            .collect();
        ExchangeableSlope { m, nodes }
    }

    pub fn cdf(&self, b: f64) -> f64 {
        let std = Normal::new(0.0, 1.0).expect("standard normal");
        self.nodes.iter().map(|&(sd, w)| w * std.cdf((b - self.m) / sd)).sum()
    }
}

pub fn exchangeable_slope_cdf(b: f64, m: f64, s: f64, z: f64) -> f64 {
    ExchangeableSlope::new(m, s, z).cdf(b)
}

/// CDF of `rho00 = r * min(u, v)` with independent beta `u`, `v`, `r`:
/// `E_m[F_r(t / m)]` under the density of the minimum.
pub struct Rho00 {
    ratio: Beta,
    /// `(m, weight * f_min(m))` per node.
    nodes: Vec<(f64, f64)>,
}

impl Rho00 {
    pub fn new(u: (f64, f64), v: (f64, f64), r: (f64, f64)) -> Self {
        let bu = Beta::new(u.0, u.1).expect("beta");
        let bv = Beta::new(v.0, v.1).expect("beta");
        let f_min = |m: f64| bu.pdf(m) * (1.0 - bv.cdf(m)) + bv.pdf(m) * (1.0 - bu.cdf(m));
        let nodes = simpson_rule(0.0, 1.0, 4000)
            .into_iter()
            .map(|(m, w)| (m, w * f_min(m)))
            .filter(|&(_, w)| w > 0.0)
            .collect();
        Rho00 {
            ratio: Beta::new(r.0, r.1).expect("beta"),
            nodes,
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        self.nodes
            .iter()
            .map(|&(m, w)| if m <= t { w } else { w * self.ratio.cdf(t / m) })
            .sum()
    }
}

pub fn rho00_cdf(t: f64, u: (f64, f64), v: (f64, f64), r: (f64, f64)) -> f64 {
    Rho00::new(u, v, r).cdf(t)
}

/// Normal-approximation two-sided interval for a binomial proportion.
pub fn binomial_band(p: f64, n: usize, z: f64) -> (f64, f64) {
    let se = (p * (1.0 - p) / n as f64).sqrt();
    (p - z * se, p + z * se)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_tail_matches_tables() {
        // 1.3581 and 1.6276 are the tabulated 5% and 1% points
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let ks = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert!(ks.d <= 0.5 / n as f64 + 1e-12);
        assert!(ks.p > 0.99);
    }

    #[test]
    fn two_sample_detects_shift() {
        let a: Vec<f64> = (0..500).map(|i| i as f64 / 500.0).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 0.2).collect();
        assert!((ks_two_sample(&a, &b).d - 0.2).abs() < 0.01);
        assert_eq!(ks_two_sample(&a, &a).d, 0.0);
    }

    #[test]
    fn simpson_is_exact_on_cubics() {
        let v = simpson(|x| x * x * x - x, 0.0, 2.0, 2);
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn slope_mixture_limits() {
        // tiny tau scale reduces to the normal of mu
        let c = exchangeable_slope_cdf(1.0, 0.0, 2.0, 1e-6);
        assert!((c - normal_cdf(1.0, 0.0, 2.0)).abs() < 1e-6);
        assert!((exchangeable_slope_cdf(0.0, 0.0, 3.16, 0.5) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn rho00_cdf_is_a_cdf() {
        let u = (1.4, 5.6);
        let r = (0.8, 7.2);
        assert!(rho00_cdf(1e-9, u, u, r) < 1e-3);
        assert!((rho00_cdf(1.0, u, u, r) - 1.0).abs() < 1e-4);
        let a = rho00_cdf(0.01, u, u, r);
        let b = rho00_cdf(0.05, u, u, r);
        assert!(a < b);
    }
}
