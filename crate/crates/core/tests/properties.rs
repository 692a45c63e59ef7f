//! Cross-module properties: metric oracles against first-principles
//! computations, identifiability of the weight-to-distance map, and
//! symmetries the likelihood machinery must respect.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use graphcov::basis::lgl_eigenbasis;
use graphcov::covariance::{gdef_covariance, CovarianceSpec, Smoothness};
use graphcov::inference::{
    default_start, fit_mle, log_likelihood, CovarianceModel, FitOptions, GdefModel, Sigma2Mode,
    WeightDesign,
};
use graphcov::metric::{quasi_euclidean_distances, GraphMetric};
use graphcov::{seed, EdgeWeights, Graph};

/// Random connected graph: a random attachment tree plus a few extra edges.
fn random_connected_graph(rng: &mut ChaCha8Rng, max_p: usize) -> Graph {
    let p = rng.random_range(2..=max_p);
    let mut edges = BTreeSet::new();
    for v in 1..p {
        edges.insert((rng.random_range(0..v), v));
    }
    for _ in 0..rng.random_range(0..=p) {
        let a = rng.random_range(0..p);
        let b = rng.random_range(0..p);
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    Graph::build(p, &edges.into_iter().collect::<Vec<_>>()).unwrap()
}

fn random_weights(rng: &mut ChaCha8Rng, q: usize) -> EdgeWeights {
    EdgeWeights::new(Array1::from_iter(
        (0..q).map(|_| rng.random_range(0.2..5.0)),
    ))
    .unwrap()
}

/// The distance matrix from the collapsed squared form must agree with the
/// defining per-pair expression d_ij = ||L^+ (e_i - e_j)||.
#[test]
fn distances_match_per_pair_definition_on_random_graphs() {
    let mut rng = seed::rng(42);
    for _ in 0..50 {
        let g = random_connected_graph(&mut rng, 20);
        let w = random_weights(&mut rng, g.q());
        let metric = GraphMetric::compute(&g, &w).unwrap();
        for i in 0..g.p() {
            for j in 0..g.p() {
                let diff = &metric.lplus.column(i) - &metric.lplus.column(j);
                let brute = diff.mapv(|v| v * v).sum().sqrt();
                assert!(
                    (metric.dist[[i, j]] - brute).abs() < 1e-10,
                    "p={} ({i},{j}): {} vs {}",
                    g.p(),
                    metric.dist[[i, j]],
                    brute
                );
            }
        }
    }
}

/// Distinct weight vectors give distinct distance matrices. Half the pairs
/// are independent draws, half differ in a single edge by one percent, the
/// harder case.
#[test]
fn distinct_weights_give_distinct_distances() {
    let mut rng = seed::rng(43);
    for case in 0..200 {
        let g = random_connected_graph(&mut rng, 8);
        let w1 = random_weights(&mut rng, g.q());
        let w2 = if case % 2 == 0 {
            let other = random_weights(&mut rng, g.q());
            if other.values() == w1.values() {
                continue;
            }
            other
        } else {
            let mut v = w1.values().clone();
            let e = rng.random_range(0..g.q());
            v[e] *= 1.01;
            EdgeWeights::new(v).unwrap()
        };
        let d1 = quasi_euclidean_distances(&g, &w1).unwrap();
        let d2 = quasi_euclidean_distances(&g, &w2).unwrap();
        let gap = (&d1 - &d2).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(gap > 1e-8, "weights differ but distances agree: gap={gap}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// L(G) has one node per edge of G and sum_v deg(v)(deg(v)-1)/2 edges.
    #[test]
    fn line_graph_counts_match_degree_formula(
        attach in prop::collection::vec(0usize..1000, 1..50),
        extra in prop::collection::vec((0usize..1000, 0usize..1000), 0..30),
    ) {
        let p = attach.len() + 1;
        let mut edges = BTreeSet::new();
        for (i, &a) in attach.iter().enumerate() {
            let v = i + 1;
            edges.insert((a % v, v));
        }
        for &(a, b) in &extra {
            let (a, b) = (a % p, b % p);
            if a != b {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        let g = Graph::build(p, &edges.into_iter().collect::<Vec<_>>()).unwrap();
        let lg = g.line_graph();
        prop_assert_eq!(lg.p(), g.q());
        let expected: usize = g.degrees().iter().map(|&d| d * (d - 1) / 2).sum();
        prop_assert_eq!(lg.q(), expected);
    }

    /// Scaling all weights by c scales L^+ and hence every distance by 1/c.
    #[test]
    fn distance_scales_inversely_with_weights(
        scale in 0.1f64..10.0,
        seed_val in 0u64..1000,
    ) {
        let mut rng = seed::rng(seed_val);
        let g = random_connected_graph(&mut rng, 12);
        let w = random_weights(&mut rng, g.q());
        let scaled = EdgeWeights::new(w.values() * scale).unwrap();
        let d1 = quasi_euclidean_distances(&g, &w).unwrap();
        let d2 = quasi_euclidean_distances(&g, &scaled).unwrap();
        let expect = &d1 / scale;
        let gap = (&d2 - &expect).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(gap < 1e-9 * (1.0 + 1.0 / scale), "gap={gap}");
    }
}

fn toy_setup(k: usize, n: usize, seed_val: u64) -> (Graph, GdefModel, Array2<f64>) {
    let g = Graph::lattice(2, 3).unwrap();
    let basis = lgl_eigenbasis(&g, k).unwrap();
    let design = WeightDesign::from_model_parts(&basis, None, false).unwrap();
    let model = GdefModel::new(
        g.clone(),
        design,
        Smoothness::ThreeHalves,
        Sigma2Mode::Fixed(1.0),
        false,
        false,
    )
    .unwrap();
    let w = EdgeWeights::new(Array1::from_iter(
        (0..g.q()).map(|e| (0.3 * (e as f64 - 3.0)).exp()),
    ))
    .unwrap();
    let spec = CovarianceSpec::gdef(Smoothness::ThreeHalves, 1.0);
    let real = gdef_covariance(&g, &w, &spec).unwrap();
    let y = real.sample(n, &mut seed::rng(seed_val)).unwrap();
    (g, model, y)
}

/// Replicates are exchangeable: permuting the rows of Y changes nothing.
#[test]
fn likelihood_and_fit_invariant_to_replicate_order() {
    let (_, model, y) = toy_setup(3, 12, 7);
    let mut shuffled = y.clone();
    let order = [5usize, 0, 11, 3, 9, 1, 7, 2, 10, 4, 8, 6];
    for (to, &from) in order.iter().enumerate() {
        shuffled.row_mut(to).assign(&y.row(from));
    }

    let theta = Array1::from_elem(model.dim(), 0.2);
    let l1 = log_likelihood(&model, &theta.view(), &y.view()).unwrap();
    let l2 = log_likelihood(&model, &theta.view(), &shuffled.view()).unwrap();
    assert!((l1 - l2).abs() < 1e-9 * (1.0 + l1.abs()));

    let opts = FitOptions::default();
    let f1 = fit_mle(&model, &y.view(), &default_start(&model, &y.view()).view(), &opts).unwrap();
    let f2 = fit_mle(&model, &shuffled.view(), &default_start(&model, &shuffled.view()).view(), &opts)
        .unwrap();
    assert!(f1.converged && f2.converged);
    let gap = (&f1.theta - &f2.theta).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(gap < 1e-6, "theta gap {gap}");
}

/// Scaling the data by c maps the likelihood exactly: with sigma^2 and
/// tau^2 inflated by c^2 the log-likelihood drops by n p ln c.
#[test]
fn likelihood_scaling_identity() {
    let g = Graph::lattice(2, 3).unwrap();
    let basis = lgl_eigenbasis(&g, 2).unwrap();
    let design = WeightDesign::from_model_parts(&basis, None, false).unwrap();
    let model = GdefModel::new(
        g.clone(),
        design,
        Smoothness::ThreeHalves,
        Sigma2Mode::Free,
        true,
        true,
    )
    .unwrap();

    let mut rng = seed::rng(11);
    let n = 4;
    let y = Array2::from_shape_fn((n, g.p()), |_| rng.random_range(-2.0..2.0f64));
    let c: f64 = 1.7;

    // layout: eta1, eta2, log sigma2, log tau2, beta0
    let theta = ndarray::array![0.4, -0.3, 0.2, -1.0, 0.5];
    let mut theta_c = theta.clone();
    theta_c[2] += 2.0 * c.ln();
    theta_c[3] += 2.0 * c.ln();
    theta_c[4] *= c;

    let l = log_likelihood(&model, &theta.view(), &y.view()).unwrap();
    let lc = log_likelihood(&model, &theta_c.view(), &(&y * c).view()).unwrap();
    let expect = l - (n * g.p()) as f64 * c.ln();
    assert!((lc - expect).abs() < 1e-8 * (1.0 + l.abs()), "{lc} vs {expect}");
}

/// Relabeling the nodes must not change the maximized likelihood when the
/// basis spans the full weight space, because the reachable covariance set
/// is label-symmetric.
#[test]
fn maximized_likelihood_invariant_to_node_relabeling() {
    let (g, model, y) = toy_setup(7, 40, 21);
    let perm = [3usize, 0, 5, 1, 4, 2];
    let edges: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .map(|&(i, j)| {
            let (a, b) = (perm[i], perm[j]);
            (a.min(b), a.max(b))
        })
        .collect();
    let gp = Graph::build(g.p(), &edges).unwrap();
    let basis = lgl_eigenbasis(&gp, 7).unwrap();
    let design = WeightDesign::from_model_parts(&basis, None, false).unwrap();
    let model_p = GdefModel::new(
        gp,
        design,
        Smoothness::ThreeHalves,
        Sigma2Mode::Fixed(1.0),
        false,
        false,
    )
    .unwrap();

    let mut yp = Array2::zeros(y.raw_dim());
    for v in 0..g.p() {
        yp.index_axis_mut(Axis(1), perm[v]).assign(&y.column(v));
    }

    let opts = FitOptions::default();
    let f1 = fit_mle(&model, &y.view(), &default_start(&model, &y.view()).view(), &opts).unwrap();
    let f2 = fit_mle(&model_p, &yp.view(), &default_start(&model_p, &yp.view()).view(), &opts).unwrap();
    assert!(f1.converged && f2.converged);
    assert!(
        (f1.loglik - f2.loglik).abs() < 1e-6 * (1.0 + f1.loglik.abs()),
        "{} vs {}",
        f1.loglik,
        f2.loglik
    );
}

/// The view-based signature stays usable with owned and sliced inputs.
#[test]
fn log_likelihood_accepts_views() {
    let (_, model, y) = toy_setup(3, 6, 3);
    let theta = Array1::zeros(model.dim());
    let full: ArrayView2<f64> = y.view();
    let l_full = log_likelihood(&model, &theta.view(), &full).unwrap();
    let l_slice = log_likelihood(&model, &theta.view(), &y.slice(ndarray::s![.., ..]))
        .unwrap();
    assert_eq!(l_full, l_slice);
}
