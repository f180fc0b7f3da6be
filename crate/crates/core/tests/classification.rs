use std::sync::Arc;

use tailstdf::classification::{
    empirical_conditional_risk, empirical_risks, erm, rate_experiment_classification, select_tail,
    sup_risk_deviation, true_conditional_risk, true_risks, AxisFamily, AxisThreshold, ClassificationConfig,
    Classifier, ClassifierFamily, ConstantLabel, LabeledGenerator, LabeledSample, NormTag, RatePoint, TailRegionSpec,
};
use tailstdf::sample::Provenance;
use tailstdf::stats::median;
use tailstdf::{Error, Sample};

fn labeled(rows: &[Vec<f64>], labels: Vec<i8>) -> LabeledSample {
    let features = Sample::from_rows(rows, Provenance::Derived("fixed".into())).unwrap();
    LabeledSample::new(features, labels).unwrap()
}

fn family20() -> AxisFamily {
    AxisFamily::grid(&[0, 1], &[3.0, 4.0, 5.0, 6.0, 7.0], 2)
}

fn generator(eta: f64) -> LabeledGenerator {
    LabeledGenerator::new(2, 0, 4.0, eta).unwrap()
}

/// Empirical risks by sorting the norms directly.
fn brute_force_risks(data: &LabeledSample, family: &AxisFamily, norm: NormTag, alpha: f64) -> Vec<f64> {
    let n = data.n();
    let norms: Vec<f64> = data.features().rows().map(|x| norm.eval(x)).collect();
    let mut sorted = norms.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let m = (n as f64 * alpha).floor() as usize;
    let threshold = sorted[m - 1];
    family
        .members
        .iter()
        .map(|g| {
            let errors = (0..n)
                .filter(|&i| norms[i] > threshold && g.predict(data.features().row(i)) != data.labels()[i])
                .count();
            errors as f64 / (n as f64 * alpha)
        })
        .collect()
}

#[test]
fn fixed_ten_point_risks() {
    let rows: Vec<Vec<f64>> = (1..=10).map(|i| vec![i as f64 * 0.7]).collect();
    let g = AxisThreshold { coordinate: 0, threshold: 3.0, sign: 1 };
    let right: Vec<i8> = rows.iter().map(|x| g.predict(x)).collect();
    let wrong: Vec<i8> = right.iter().map(|y| -y).collect();
    let region = TailRegionSpec::quantile(NormTag::L2, 0.3);
    assert_eq!(empirical_conditional_risk(&labeled(&rows, right), &g, &region).unwrap(), 0.0);
    // [n alpha] = 3: the third largest norm is the threshold and two points lie strictly above it
    let r = empirical_conditional_risk(&labeled(&rows, wrong.clone()), &g, &region).unwrap();
    assert!((r - 2.0 / 3.0).abs() < 1e-15);

    let everything = TailRegionSpec::Explicit { thresholds: vec![-1.0], q: 1.0 };
    let r = empirical_conditional_risk(&labeled(&rows, wrong), &g, &everything).unwrap();
    assert!((r - 1.0).abs() < 1e-15);
    let mixed: Vec<i8> = (0..10).map(|i| if i % 3 == 0 { -g.predict(&rows[i]) } else { g.predict(&rows[i]) }).collect();
    let r = empirical_conditional_risk(&labeled(&rows, mixed), &g, &everything).unwrap();
    assert!((r - 0.4).abs() < 1e-15);
}

#[test]
fn region_guards() {
    let rows: Vec<Vec<f64>> = (1..=10).map(|i| vec![i as f64]).collect();
    let data = labeled(&rows, vec![1; 10]);
    let g = ConstantLabel(1);
    let err = empirical_conditional_risk(&data, &g, &TailRegionSpec::quantile(NormTag::L1, 0.05)).unwrap_err();
    assert!(matches!(err, Error::Domain(_)));
    let tied = labeled(&[vec![1.0, 2.0], vec![2.0, 1.0], vec![0.5, 0.1]], vec![1, 1, -1]);
    let err = select_tail(&tied, &TailRegionSpec::quantile(NormTag::L2, 0.5)).unwrap_err();
    assert!(err.is_data(), "{err}");
    assert!(LabeledSample::new(data.features().clone(), vec![1; 9]).is_err());
    assert!(LabeledSample::new(data.features().clone(), vec![0; 10]).is_err());
}

#[test]
fn risks_stay_normalized() {
    let gen = generator(0.3);
    for (trial, alpha) in [0.01, 0.05, 0.123, 0.5].into_iter().enumerate() {
        let data = gen.sample(777, 5, trial as u64).unwrap();
        for norm in [NormTag::L1, NormTag::L2, NormTag::Linf] {
            let risks = empirical_risks(&data, &family20().build().unwrap(), &TailRegionSpec::quantile(norm, alpha)).unwrap();
            assert!(risks.iter().all(|r| (0.0..=1.0).contains(r)), "{risks:?}");
        }
    }
}

#[test]
fn true_risk_closed_cases() {
    let region = TailRegionSpec::quantile(NormTag::Linf, 0.05);
    let clean = generator(0.0);
    let bayes: Arc<dyn Classifier> = Arc::new(clean.bayes_rule());
    assert_eq!(true_conditional_risk(bayes.clone(), &region, &clean, 1).unwrap().value, 0.0);

    let coin = generator(0.5);
    let members: Vec<Arc<dyn Classifier>> = vec![Arc::new(ConstantLabel(1)), Arc::new(ConstantLabel(-1)), bayes.clone()];
    let family = ClassifierFamily::new(members, 1).unwrap();
    let explicit = coin.explicit_region(vec![2.0, 3.0]).unwrap();
    for region in [region.clone(), explicit] {
        for r in true_risks(&coin, &family, &region, 1).unwrap() {
            // constant members have no closed form and fall back to simulation
            let tol = if r.exact { 1e-12 } else { 4.0 * r.std_error };
            assert!((r.value - 0.5).abs() <= tol, "{r:?}");
        }
    }
    let mut coin_l2 = coin.clone();
    coin_l2.reference_draws = 1_000_000;
    for r in true_risks(&coin_l2, &family, &TailRegionSpec::quantile(NormTag::L2, 0.05), 2).unwrap() {
        assert!((r.value - 0.5).abs() <= 4.0 * r.std_error, "{r:?}");
    }

    let noisy = generator(0.1);
    let exact = true_conditional_risk(bayes.clone(), &region, &noisy, 1).unwrap();
    assert!(exact.exact);
    assert!((exact.value - 0.1).abs() < 1e-12);
    let reference = true_conditional_risk(bayes, &TailRegionSpec::quantile(NormTag::L2, 0.05), &noisy, 3).unwrap();
    assert!(!reference.exact);
    assert!((reference.value - 0.1).abs() <= 3.0 * reference.std_error + 1e-6, "{reference:?}");
}

#[test]
fn exact_risks_match_simulation() {
    let gen = generator(0.1);
    let alpha = 0.05;
    let region = TailRegionSpec::quantile(NormTag::Linf, alpha);
    let family = family20();
    let exact = true_risks(&gen, &family.build().unwrap(), &region, 0).unwrap();
    let n = 4_000_000;
    let data = gen.sample(n, 99, 0).unwrap();
    let t = gen.linf_quantile(alpha);
    let tail: Vec<usize> = (0..n).filter(|&i| NormTag::Linf.eval(data.features().row(i)) > t).collect();
    for (g, truth) in family.members.iter().zip(&exact) {
        let errs = tail.iter().filter(|&&i| g.predict(data.features().row(i)) != data.labels()[i]).count();
        let p = errs as f64 / n as f64;
        let sd = (p / n as f64).sqrt() / alpha;
        assert!((p / alpha - truth.value).abs() <= 4.0 * sd + 1e-9, "{g:?}: {} vs {truth:?}", p / alpha);
    }
}

#[test]
fn erm_choices() {
    let clean = generator(0.0);
    let data = clean.sample(3000, 4, 0).unwrap();
    let region = TailRegionSpec::quantile(NormTag::L2, 0.1);
    let mut members: Vec<Arc<dyn Classifier>> = vec![Arc::new(ConstantLabel(1)), Arc::new(ConstantLabel(-1))];
    members.push(Arc::new(clean.bayes_rule()));
    assert_eq!(erm(&data, &ClassifierFamily::new(members, 2).unwrap(), &region).unwrap(), 2);

    let g = AxisThreshold { coordinate: 1, threshold: 5.0, sign: 1 };
    let twins = ClassifierFamily::new(vec![Arc::new(g), Arc::new(g)], 1).unwrap();
    assert_eq!(erm(&data, &twins, &region).unwrap(), 0);

    let noisy = generator(0.2);
    for trial in 0..5 {
        let data = noisy.sample(5000, 6, trial).unwrap();
        let family = family20();
        let brute = brute_force_risks(&data, &family, NormTag::L2, 0.1);
        let mut best = 0;
        for (i, r) in brute.iter().enumerate() {
            if *r < brute[best] {
                best = i;
            }
        }
        let lib = empirical_risks(&data, &family.build().unwrap(), &region).unwrap();
        assert_eq!(lib, brute);
        assert_eq!(erm(&data, &family.build().unwrap(), &region).unwrap(), best);
    }
}

#[test]
fn erm_regret_within_twice_the_uniform_deviation() {
    let gen = generator(0.1);
    let region = TailRegionSpec::quantile(NormTag::Linf, 0.05);
    let family = family20().build().unwrap();
    let truth = true_risks(&gen, &family, &region, 0).unwrap();
    let best = truth.iter().map(|t| t.value).fold(f64::INFINITY, f64::min);
    for trial in 0..50 {
        let data = gen.sample(4000, 12, trial).unwrap();
        let chosen = erm(&data, &family, &region).unwrap();
        let sup = sup_risk_deviation(&data, &family, &region, &truth).unwrap();
        assert!(truth[chosen].value - best <= 2.0 * sup + 1e-12, "trial {trial}");
    }
}

#[test]
fn single_member_family() {
    let gen = generator(0.1);
    let region = TailRegionSpec::quantile(NormTag::Linf, 0.1);
    let g: Arc<dyn Classifier> = Arc::new(AxisThreshold { coordinate: 1, threshold: 2.0, sign: -1 });
    let family = ClassifierFamily::new(vec![g.clone()], 1).unwrap();
    let data = gen.sample(2000, 3, 0).unwrap();
    let truth = true_conditional_risk(g.clone(), &region, &gen, 0).unwrap();
    let direct = (empirical_conditional_risk(&data, g.as_ref(), &region).unwrap() - truth.value).abs();
    assert_eq!(sup_risk_deviation(&data, &family, &region, &[truth]).unwrap(), direct);
}

fn median_deviation(gen: &LabeledGenerator, region: &TailRegionSpec, n: usize, seed: u64, trials: u64) -> f64 {
    let family = family20().build().unwrap();
    let truth = true_risks(gen, &family, region, 0).unwrap();
    let devs: Vec<f64> = (0..trials)
        .map(|t| sup_risk_deviation(&gen.sample(n, seed, t).unwrap(), &family, region, &truth).unwrap())
        .collect();
    median(&devs)
}

#[test]
fn shrinking_level_makes_root_n_scaling_drift() {
    let gen = generator(0.1);
    let scaled: Vec<f64> = [1_000usize, 10_000, 100_000]
        .iter()
        .map(|&n| {
            let alpha = (n as f64).powf(-0.6);
            median_deviation(&gen, &TailRegionSpec::quantile(NormTag::Linf, alpha), n, n as u64, 40) * (n as f64).sqrt()
        })
        .collect();
    assert!(scaled.windows(2).all(|w| w[1] > w[0]), "{scaled:?}");
}

#[test]
fn fixed_region_scaling_band() {
    let gen = generator(0.1);
    let region = gen.explicit_region(vec![3.0, 3.0]).unwrap();
    let q = region.mass();
    let scaled: Vec<f64> = [2_000usize, 8_000, 32_000]
        .iter()
        .map(|&n| median_deviation(&gen, &region, n, 50 + n as u64, 50) * (q * n as f64).sqrt())
        .collect();
    let ratio = scaled.iter().cloned().fold(0.0, f64::max) / scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(ratio <= 2.0, "{scaled:?}");
}

#[test]
fn rate_experiment_report() {
    let cfg = ClassificationConfig {
        generator: generator(0.1),
        family: family20(),
        norm: NormTag::Linf,
        points: vec![RatePoint { n: 100, alpha: 0.05 }, RatePoint { n: 2000, alpha: 0.05 }],
        trials: 10,
        seed: 3,
        delta: 0.05,
    };
    let rep = rate_experiment_classification(&cfg).unwrap();
    assert_eq!(rep.trials.len(), 20);
    assert!(rep.levels[0].flagged && !rep.levels[1].flagged);
    assert_eq!(rep.warnings.len(), 1);
    assert_eq!(rep.trials, rate_experiment_classification(&cfg).unwrap().trials);
    let mut bad = cfg.clone();
    bad.points[0].n = 10;
    assert!(rate_experiment_classification(&bad).is_err());
}

#[test]
fn decomposition_holds_per_trial() {
    let gen = generator(0.1);
    let region = TailRegionSpec::quantile(NormTag::Linf, 0.1);
    let members: Vec<Arc<dyn Classifier>> = vec![
        Arc::new(AxisThreshold { coordinate: 0, threshold: 4.0, sign: 1 }),
        Arc::new(AxisThreshold { coordinate: 1, threshold: 3.0, sign: -1 }),
    ];
    let family = ClassifierFamily::new(members, 1).unwrap();
    for trial in 0..30 {
        let data = gen.sample(1000, 21, trial).unwrap();
        let check = tailstdf::classification::decomposition_check(&data, &family, &region, &gen, 0).unwrap();
        assert!(check.holds, "trial {trial}: {check:?}");
        assert!(check.lhs <= check.rhs + 1e-12);
    }
    let data = gen.sample(1000, 21, 0).unwrap();
    let l2 = TailRegionSpec::quantile(NormTag::L2, 0.1);
    assert!(tailstdf::classification::decomposition_check(&data, &family, &l2, &gen, 0).is_err());
}
