use pbo_core::acquisition::{
    next_query, optimize_acquisition, saa_from_posterior, thompson_query, AcquisitionKind, AcquisitionSpec,
    BaseSampleSet, SaaObjective,
};
use pbo_core::model::{choice_likelihood, fit_hyperparameters, fit_laplace, HyperFitConfig, Hyperparameters};
use pbo_core::recommend::{recommend, RecommendOptions};
use pbo_core::rng::{rng_from_seed, PboRng};
use pbo_core::{Domain, Point, PreferenceDataset, Query, Response};
use rand::Rng;

fn quadratic(center: &[f64]) -> impl Fn(&[f64]) -> f64 + '_ {
    move |x| -x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
}

fn sample_index(p: &[f64], rng: &mut PboRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Random pairs on `dom`, answered by `u` through a softmax with `lambda`
/// (0 is noise-free).
fn comparisons(dom: &Domain, u: &dyn Fn(&[f64]) -> f64, n: usize, lambda: f64, rng: &mut PboRng) -> PreferenceDataset {
    let mut ds = PreferenceDataset::new(2).unwrap();
    for _ in 0..n {
        let pts = vec![dom.sample(rng), dom.sample(rng)];
        let vals: Vec<f64> = pts.iter().map(|p| u(p)).collect();
        let c = if lambda == 0.0 {
            usize::from(vals[1] > vals[0])
        } else {
            sample_index(&choice_likelihood(&vals, lambda).unwrap(), rng)
        };
        ds.push(Query::new(pts), Response(c)).unwrap();
    }
    ds
}

fn hyper(d: usize, ell: f64, lambda: f64) -> Hyperparameters {
    Hyperparameters {
        lengthscales: vec![ell; d],
        outputscale: 1.0,
        mean_const: 0.0,
        noise_level: lambda,
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn recommendation_concentrates_after_consistent_comparisons() {
    let dom = Domain::unit_cube(2);
    let center = [0.3, 0.7];
    let mut rng = rng_from_seed(1);
    let ds = comparisons(&dom, &quadratic(&center), 100, 0.0, &mut rng);
    let h = fit_hyperparameters(&ds, &dom, &hyper(2, 0.5, 0.1), &HyperFitConfig::default(), &mut rng).unwrap();
    let model = fit_laplace(&ds, &h, &dom).unwrap();
    let rec = recommend(&model, &RecommendOptions::default(), &mut rng).unwrap();
    assert!(dist(&rec.point, &center) <= 0.1, "{:?}", rec.point);
}

#[test]
fn noise_level_is_recovered_from_data() {
    let dom = Domain::unit_cube(2);
    let center = [0.3, 0.7];
    let mut rng = rng_from_seed(2);
    // Only f/λ is identified, so the utility is scaled to unit standard
    // deviation over the square, matching the outputscale prior.
    let q = quadratic(&center);
    let u = |x: &[f64]| 5.0 * q(x);
    let ds = comparisons(&dom, &u, 200, 0.2, &mut rng);
    let h = fit_hyperparameters(&ds, &dom, &hyper(2, 0.5, 1.0), &HyperFitConfig::default(), &mut rng).unwrap();
    let ratio = h.noise_level / 0.2;
    assert!((1.0 / 3.0..=3.0).contains(&ratio), "{h:?}");
}

#[test]
fn thompson_prior_paths_cover_every_candidate() {
    let dom = Domain::unit_cube(1);
    let model = fit_laplace(&PreferenceDataset::new(2).unwrap(), &hyper(1, 0.1, 0.1), &dom).unwrap();
    let cands: Vec<Point> = (0..64).map(|i| vec![(i as f64 + 0.5) / 64.0]).collect();
    let mut hits = vec![0usize; 64];
    let mut rng = rng_from_seed(3);
    for _ in 0..200 {
        let x = thompson_query(&model, 4, &cands, 1000, &mut rng).unwrap();
        for p in &x.points {
            hits[cands.iter().position(|c| c == p).unwrap()] += 1;
        }
    }
    assert!(hits.iter().all(|&h| h > 0), "{hits:?}");
}

#[test]
fn thompson_samples_concentrate_near_the_optimum() {
    let dom = Domain::unit_cube(2);
    let center = [0.3, 0.7];
    let mut rng = rng_from_seed(4);
    let ds = comparisons(&dom, &quadratic(&center), 50, 0.0, &mut rng);
    // noise-free answers: no prior pulling λ towards noisy decision-makers
    let cfg = HyperFitConfig {
        noise_prior: None,
        ..HyperFitConfig::default()
    };
    let h = fit_hyperparameters(&ds, &dom, &hyper(2, 0.4, 0.05), &cfg, &mut rng).unwrap();
    let model = fit_laplace(&ds, &h, &dom).unwrap();
    let cands: Vec<Point> = (0..400).map(|_| dom.sample(&mut rng)).collect();
    let mut by_dist: Vec<f64> = cands.iter().map(|c| dist(c, &center)).collect();
    by_dist.sort_by(f64::total_cmp);
    let radius = by_dist[cands.len() / 10 - 1];
    let mut near = 0;
    let mut total = 0;
    for _ in 0..25 {
        let x = thompson_query(&model, 4, &cands, 1000, &mut rng).unwrap();
        for p in &x.points {
            total += 1;
            near += usize::from(dist(p, &center) <= radius);
        }
    }
    assert!(near as f64 >= 0.8 * total as f64, "{near}/{total} within the nearest 10%");
}

#[test]
fn finite_domain_optimum_is_exact_over_all_pairs() {
    let pts: Vec<Point> = [0.1, 0.35, 0.5, 0.8, 0.95].iter().map(|v| vec![*v]).collect();
    let dom = Domain::new_finite(pts.clone()).unwrap();
    let mut ds = PreferenceDataset::new(2).unwrap();
    ds.push(Query::new(vec![pts[0].clone(), pts[3].clone()]), Response(1)).unwrap();
    ds.push(Query::new(vec![pts[3].clone(), pts[4].clone()]), Response(0)).unwrap();
    let model = fit_laplace(&ds, &hyper(1, 0.3, 0.1), &dom).unwrap();
    for kind in [AcquisitionKind::Qeubo, AcquisitionKind::Qei] {
        let spec = AcquisitionSpec::new(kind, 2);
        let rep = optimize_acquisition(&model, &spec, &ds, &mut rng_from_seed(5)).unwrap();
        let mut best = f64::NEG_INFINITY;
        for a in &pts {
            for b in &pts {
                let post = model.posterior_at(&[a.clone(), b.clone()]).unwrap();
                best = best.max(saa_from_posterior(&post, rep.objective, &rep.base).unwrap().value);
            }
        }
        assert!((rep.value - best).abs() <= 1e-12, "{kind}: {} vs {best}", rep.value);
    }
}

#[test]
fn increasing_utility_pushes_queries_to_the_upper_bound() {
    let dom = Domain::unit_cube(1);
    let mut rng = rng_from_seed(6);
    let ds = comparisons(&dom, &|x: &[f64]| x[0], 200, 0.0, &mut rng);
    // a long lengthscale makes the posterior nearly linear, so differences
    // f(x) - f(y) have almost no spread
    let model = fit_laplace(&ds, &hyper(1, 5.0, 0.01), &dom).unwrap();
    let spec = AcquisitionSpec::new(AcquisitionKind::Qeubo, 2);
    let rep = optimize_acquisition(&model, &spec, &ds, &mut rng).unwrap();
    for p in &rep.query.points {
        assert!(p[0] >= 1.0 - 1e-2, "{:?}", rep.query);
    }
}

#[test]
fn qei_and_qeubo_agree_when_the_incumbent_is_far_below() {
    let dom = Domain::unit_cube(2);
    let mut rng = rng_from_seed(7);
    let ds = comparisons(&dom, &quadratic(&[0.5, 0.5]), 8, 0.0, &mut rng);
    let model = fit_laplace(&ds, &hyper(2, 0.3, 0.1), &dom).unwrap();
    let base = BaseSampleSet::draw(128, 2, &mut rng);
    let cands: Vec<Query> = (0..50).map(|_| Query::new(vec![dom.sample(&mut rng), dom.sample(&mut rng)])).collect();
    let posts: Vec<_> = cands.iter().map(|x| model.posterior_at(&x.points).unwrap()).collect();
    // |y_i - μ_i| ≤ sd_i ‖ε‖₂, so this bound lies below every SAA sample
    let eps = base.matrix().row_iter().map(|r| r.norm()).fold(0.0, f64::max);
    let floor = posts
        .iter()
        .flat_map(|p| (0..2).map(move |i| p.mean[i] - eps * p.covariance[(i, i)].sqrt()))
        .fold(f64::INFINITY, f64::min);
    let inc = floor - 1.0;
    let argmax = |obj| {
        let v: Vec<f64> = posts.iter().map(|p| saa_from_posterior(p, obj, &base).unwrap().value).collect();
        (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
    };
    assert_eq!(argmax(SaaObjective::Qeubo), argmax(SaaObjective::Qei(inc)));
}

#[test]
fn same_seed_gives_identical_query_sequences() {
    let dom = Domain::unit_cube(2);
    let u = quadratic(&[0.2, 0.6]);
    let run = |kind| {
        let mut spec = AcquisitionSpec::new(kind, 2);
        spec.raw_candidates = 64;
        spec.restarts = 2;
        let mut rng = rng_from_seed(8);
        let mut ds = comparisons(&dom, &u, 4, 0.0, &mut rng);
        let mut out = Vec::new();
        for _ in 0..4 {
            let model = fit_laplace(&ds, &hyper(2, 0.3, 0.1), &dom).unwrap();
            let x = next_query(&model, &spec, &ds, &mut rng).unwrap();
            let c = usize::from(u(&x.points[1]) > u(&x.points[0]));
            ds.push(x.clone(), Response(c)).unwrap();
            out.push(x);
        }
        out
    };
    for kind in [AcquisitionKind::Qeubo, AcquisitionKind::Qei, AcquisitionKind::Thompson, AcquisitionKind::Random] {
        assert_eq!(run(kind), run(kind), "{kind}");
    }
}
