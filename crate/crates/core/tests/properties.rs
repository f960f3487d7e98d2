use combitrial::config::Design;
use combitrial::inference::{OutcomeRecord, PosteriorDraws, Stage};
use combitrial::math::{
    efficacy_prob, logistic_cdf, logit, mtd_x_given_y, mtd_y_given_x, tox_prob, AgentRange, EfficacyStageParams,
    MtdCurve, StdDose, ToxicityParams,
};
use combitrial::stage1::{ewoc_quantile_x_given_y, next_cohort_stage1, Stage1Config};
use combitrial::stage2::{evaluate_rules, exceedance_surface, RulePhase, Stage2Config, Verdict};
use proptest::prelude::*;

fn tox_params() -> impl Strategy<Value = ToxicityParams> {
    (0.01f64..0.99, 0.01f64..0.99, 0.01f64..1.0, 0.0f64..15.0, 0.05f64..0.7).prop_map(|(r10, r01, ratio, a3, theta)| {
        ToxicityParams {
            rho00: ratio * r10.min(r01),
            rho10: r10,
            rho01: r01,
            alpha3: a3,
            theta,
        }
    })
}

fn eff_params() -> impl Strategy<Value = EfficacyStageParams> {
    (-6.0f64..3.0, -4.0f64..3.0, -4.0f64..3.0, 0.0f64..10.0).prop_map(|(beta0, beta1, beta2, beta3)| {
        EfficacyStageParams {
            beta0,
            beta1,
            beta2,
            beta3,
        }
    })
}

/// Root of a nondecreasing function on [0,1] by bisection.
fn bisect(f: impl Fn(f64) -> f64) -> Option<f64> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    if f(lo) > 0.0 || f(hi) < 0.0 {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

fn point_mass(p: &ToxicityParams, n: usize) -> PosteriorDraws {
    PosteriorDraws::from_columns(
        ["rho00", "rho10", "rho01", "alpha3"].map(String::from).to_vec(),
        vec![vec![p.rho00; n], vec![p.rho10; n], vec![p.rho01; n], vec![p.alpha3; n]],
        1,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn corner_identities(p in tox_params()) {
        let at = |x, y| tox_prob(&p, StdDose { x, y });
        prop_assert!((at(0.0, 0.0) - p.rho00).abs() < 1e-12);
        prop_assert!((at(1.0, 0.0) - p.rho10).abs() < 1e-12);
        prop_assert!((at(0.0, 1.0) - p.rho01).abs() < 1e-12);
    }

    #[test]
    fn on_curve_identity(p in tox_params(), u in 0.0f64..=1.0) {
        if let Ok(curve) = MtdCurve::new(p) {
            let d = curve.point_at(curve.x_lo + u * curve.width());
            prop_assert!((tox_prob(&p, d) - p.theta).abs() < 1e-9);
            for g in curve.grid(21).points {
                prop_assert!((tox_prob(&p, g) - p.theta).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn probabilities_are_monotone(p in tox_params(), e in eff_params(), x in 0.0f64..1.0, y in 0.0f64..1.0, dx in 0.0f64..0.5) {
        let a = StdDose { x, y };
        let right = StdDose { x: (x + dx).min(1.0), y };
        let up = StdDose { x, y: (y + dx).min(1.0) };
        prop_assert!(tox_prob(&p, right) >= tox_prob(&p, a));
        prop_assert!(tox_prob(&p, up) >= tox_prob(&p, a));
        prop_assert!(efficacy_prob(&e, right) >= efficacy_prob(&e, a));
        prop_assert!(efficacy_prob(&e, up) >= efficacy_prob(&e, a));
    }

    #[test]
    fn closed_form_roots_match_bisection(p in tox_params(), t in 0.0f64..=1.0) {
        let by = bisect(|y| tox_prob(&p, StdDose { x: t, y }) - p.theta);
        if let (Some(a), Some(b)) = (mtd_y_given_x(&p, t), by) {
            prop_assert!((a - b).abs() < 1e-7, "y|x: {a} vs {b}");
        }
        if by.is_none() {
            let boundary = mtd_y_given_x(&p, t).is_none_or(|y| !(1e-9..=1.0 - 1e-9).contains(&y));
            prop_assert!(boundary);
        }
        let bx = bisect(|x| tox_prob(&p, StdDose { x, y: t }) - p.theta);
        if let (Some(a), Some(b)) = (mtd_x_given_y(&p, t), bx) {
            prop_assert!((a - b).abs() < 1e-7, "x|y: {a} vs {b}");
        }
    }

    #[test]
    fn standardize_round_trip(lo in -100.0f64..100.0, width in 0.01f64..500.0, u in 0.0f64..=1.0) {
        let r = AgentRange::new("a", lo, lo + width).unwrap();
        let d = lo + u * width;
        let x = r.standardize(d).unwrap();
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert!((r.destandardize(x) - d).abs() <= 1e-12 * d.abs().max(1.0) * 10.0);
        prop_assert!((r.standardize(r.destandardize(u)).unwrap() - u).abs() < 1e-12);
    }

    #[test]
    fn logit_inverts_logistic(u in -30.0f64..30.0) {
        // above u = 13 the spacing of doubles near 1 dominates: 1 - p carries
        // a relative error of eps / (1 - p), i.e. about eps * e^u in u
        let tol = 1e-10f64.max(4.0 * f64::EPSILON * u.exp());
        prop_assert!((logit(logistic_cdf(u).unwrap()) - u).abs() < tol);
    }

    #[test]
    fn stage1_alternation(p in tox_params(), a in (0.0f64..1.0, 0.0f64..1.0), b in (0.0f64..1.0, 0.0f64..1.0), step in proptest::option::of(0.01f64..0.5)) {
        let cfg = Stage1Config { max_step: step, theta: p.theta, ..Stage1Config::ciscab() };
        let records: Vec<OutcomeRecord> = [a, b]
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| OutcomeRecord { patient: i, stage: Stage::One, dose: StdDose { x, y }, z: Some(false), e: None })
            .collect();
        let draws = point_mass(&p, 8);
        let [first, second] = next_cohort_stage1(&records, Some(&draws), &cfg).unwrap();
        prop_assert_eq!(first.y, a.1);
        prop_assert_eq!(second.x, b.0);
        for d in [first, second] {
            prop_assert!((0.0..=1.0).contains(&d.x) && (0.0..=1.0).contains(&d.y));
        }
        if let Some(s) = step {
            prop_assert!((first.x - a.0).abs() <= s + 1e-12);
            prop_assert!((second.y - b.1).abs() <= s + 1e-12);
        }
    }

    #[test]
    fn ewoc_quantile_monotone_in_phi(ps in proptest::collection::vec(tox_params(), 5..40), y in 0.0f64..1.0) {
        let cols = |f: fn(&ToxicityParams) -> f64| ps.iter().map(&f).collect::<Vec<_>>();
        let draws = PosteriorDraws::from_columns(
            ["rho00", "rho10", "rho01", "alpha3"].map(String::from).to_vec(),
            vec![cols(|p| p.rho00), cols(|p| p.rho10), cols(|p| p.rho01), cols(|p| p.alpha3)],
            1,
        ).unwrap();
        let lo = ewoc_quantile_x_given_y(&draws, y, 0.33, 0.25).unwrap();
        let hi = ewoc_quantile_x_given_y(&draws, y, 0.33, 0.75).unwrap();
        prop_assert!(lo <= hi);
    }

    #[test]
    fn raising_delta_u_never_adds_rejections(max in 0.0f64..=1.0, a in 0.21f64..0.79, b in 0.21f64..0.79) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let cfg = |d: f64| Stage2Config { delta_u: d, ..Stage2Config::default() };
        let low = evaluate_rules(max, &cfg(lo), RulePhase::Final, 30).unwrap();
        let high = evaluate_rules(max, &cfg(hi), RulePhase::Final, 30).unwrap();
        if high == Verdict::CompleteRejectH0 {
            prop_assert_eq!(low, Verdict::CompleteRejectH0);
        }
    }

    #[test]
    fn surface_matches_double_loop(rows in proptest::collection::vec(eff_params(), 100), p in tox_params(), p0 in 0.05f64..0.5) {
        let Ok(curve) = MtdCurve::new(p) else { return Ok(()) };
        let grid = curve.grid(11);
        let mut names: Vec<String> = Vec::new();
        let mut columns: Vec<Vec<f64>> = Vec::new();
        for (name, f) in [
            ("beta0_s2", (|e: &EfficacyStageParams| e.beta0) as fn(&EfficacyStageParams) -> f64),
            ("beta1_s2", |e| e.beta1),
            ("beta2_s2", |e| e.beta2),
            ("beta3_s2", |e| e.beta3),
        ] {
            names.push(name.into());
            columns.push(rows.iter().map(f).collect());
        }
        let draws = PosteriorDraws::from_columns(names, columns, 1).unwrap();
        let s = exceedance_surface(&draws, &grid, p0).unwrap();
        for (k, d) in grid.points.iter().enumerate() {
            let mut hits = 0;
            for e in &rows {
                if efficacy_prob(e, *d) > p0 {
                    hits += 1;
                }
            }
            prop_assert_eq!(s.prob[k], hits as f64 / rows.len() as f64);
        }
        let best = s.prob.iter().cloned().fold(0.0, f64::max);
        prop_assert_eq!(s.max, best);
        prop_assert_eq!(s.argmax, s.prob.iter().position(|&v| v == best).unwrap());
    }
}

#[test]
fn design_json_round_trips_byte_identically() {
    for d in [Design::ciscab(), Design::ciscab_desk()] {
        let text = d.to_json_pretty();
        assert_eq!(Design::from_json(&text).unwrap().to_json_pretty(), text);
    }
}
