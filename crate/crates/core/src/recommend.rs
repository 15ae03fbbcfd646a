//! Recommendation: the maximizer of the posterior mean.

use rand::Rng;
use rayon::prelude::*;

use crate::domain::{Domain, Point};
use crate::error::Result;
use crate::model::PosteriorModel;
use crate::optim::{projected_ascent, AscentOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecommendOptions {
    pub raw_candidates: usize,
    pub restarts: usize,
    pub max_iters: usize,
}

impl Default for RecommendOptions {
    fn default() -> Self {
        Self {
            raw_candidates: 512,
            restarts: 8,
            max_iters: 200,
        }
    }
}

/// A recommended point and its posterior mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub point: Point,
    pub mean: f64,
}

/// Maximizes the posterior mean.
///
/// Finite domains are enumerated (lowest index on ties). Boxes are seeded
/// with `raw_candidates` uniform points followed by the dataset's distinct
/// points; the best `restarts` seeds by mean, plus the best dataset point, are
/// refined by projected ascent. The result is never below the best seed.
pub fn recommend<R: Rng + ?Sized>(
    model: &PosteriorModel,
    opts: &RecommendOptions,
    rng: &mut R,
) -> Result<Recommendation> {
    let domain = model.domain();
    if let Domain::Finite { points } = domain {
        let means = points
            .iter()
            .map(|p| model.mean_at(p))
            .collect::<Result<Vec<f64>>>()?;
        let best = crate::linalg::argmax(&means);
        return Ok(Recommendation {
            point: points[best].clone(),
            mean: means[best],
        });
    }

    let n_raw = opts.raw_candidates.max(1);
    let mut seeds: Vec<Point> = (0..n_raw).map(|_| domain.sample(rng)).collect();
    seeds.extend(model.dataset().distinct_points().iter().cloned());
    let means = seeds
        .par_iter()
        .map(|p| model.mean_at(p))
        .collect::<Result<Vec<f64>>>()?;

    let mut order: Vec<usize> = (0..seeds.len()).collect();
    order.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = order.iter().cloned().take(opts.restarts.max(1)).collect();
    if let Some(&best_data) = order.iter().find(|&&i| i >= n_raw) {
        if !chosen.contains(&best_data) {
            chosen.push(best_data);
        }
    }

    let norm = model.normalizer();
    let d = domain.dim();
    let lo = vec![0.0; d];
    let hi = vec![1.0; d];
    let to_point = |u: &[f64]| {
        let mut p = norm.from_unit(u);
        domain.clamp(&mut p);
        p
    };
    let ascent = AscentOptions {
        max_iters: opts.max_iters,
        initial_step: 0.05,
        x_tol: 1e-9,
        f_tol: 1e-13,
        max_halvings: 30,
    };
    let refined: Vec<(Point, f64)> = chosen
        .par_iter()
        .map(|&i| {
            let res = projected_ascent(
                norm.to_unit(&seeds[i]),
                &lo,
                &hi,
                |u| {
                    let (m, g) = model.mean_and_grad(&to_point(u)).ok()?;
                    Some((m, g.iter().zip(&norm.width).map(|(g, w)| g * w).collect()))
                },
                &ascent,
            );
            match res {
                Some((u, _)) => {
                    let p = to_point(&u);
                    match model.mean_at(&p) {
                        Ok(m) if m >= means[i] => (p, m),
                        _ => (seeds[i].clone(), means[i]),
                    }
                }
                None => (seeds[i].clone(), means[i]),
            }
        })
        .collect();
    let mut best = 0;
    for i in 1..refined.len() {
        if refined[i].1 > refined[best].1 {
            best = i;
        }
    }
    let (point, mean) = refined.into_iter().nth(best).expect("at least one seed");
    Ok(Recommendation { point, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{PreferenceDataset, Query, Response};
    use crate::model::{fit_laplace, Hyperparameters};
    use crate::rng::rng_from_seed;

    #[test]
    fn prior_returns_first_raw_candidate() {
        let dom = Domain::unit_cube(3);
        let ds = PreferenceDataset::new(2).unwrap();
        let model = fit_laplace(&ds, &Hyperparameters::default_for(3), &dom).unwrap();
        let a = recommend(&model, &RecommendOptions::default(), &mut rng_from_seed(4)).unwrap();
        let b = recommend(&model, &RecommendOptions::default(), &mut rng_from_seed(4)).unwrap();
        assert_eq!(a, b);
        let first = dom.sample(&mut rng_from_seed(4));
        assert_eq!(a.point, first);
        assert_eq!(a.mean, 0.0);
    }

    #[test]
    fn beats_every_dataset_point() {
        let dom = Domain::unit_cube(2);
        let mut rng = rng_from_seed(9);
        let mut ds = PreferenceDataset::new(2).unwrap();
        let util = |x: &[f64]| -(x[0] - 0.7).powi(2) - (x[1] - 0.2).powi(2);
        for _ in 0..30 {
            let a = dom.sample(&mut rng);
            let b = dom.sample(&mut rng);
            let r = if util(&a) >= util(&b) { 0 } else { 1 };
            ds.push(Query::new(vec![a, b]), Response(r)).unwrap();
        }
        let model = fit_laplace(&ds, &Hyperparameters::default_for(2), &dom).unwrap();
        let rec = recommend(&model, &RecommendOptions::default(), &mut rng).unwrap();
        for p in ds.distinct_points() {
            assert!(rec.mean >= model.mean_at(p).unwrap() - 1e-9);
        }
        assert!(dom.contains(&rec.point));
        assert!((rec.point[0] - 0.7).abs() < 0.3 && (rec.point[1] - 0.2).abs() < 0.3, "{:?}", rec.point);
    }

    #[test]
    fn finite_domain_is_enumerated() {
        let dom = Domain::new_finite(vec![vec![0.0], vec![0.5], vec![1.0]]).unwrap();
        let mut ds = PreferenceDataset::new(2).unwrap();
        for _ in 0..5 {
            ds.push(Query::new(vec![vec![0.5], vec![1.0]]), Response(0)).unwrap();
            ds.push(Query::new(vec![vec![0.5], vec![0.0]]), Response(0)).unwrap();
        }
        let model = fit_laplace(&ds, &Hyperparameters::default_for(1), &dom).unwrap();
        let rec = recommend(&model, &RecommendOptions::default(), &mut rng_from_seed(0)).unwrap();
        assert_eq!(rec.point, vec![0.5]);
    }
}
