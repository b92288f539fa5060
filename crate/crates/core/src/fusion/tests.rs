use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::math::{finite_diff_check_grouped, refine_forward};
use crate::rank::StrategyKind;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_views(rng: &mut ChaCha8Rng, n: usize, d: usize) -> ViewEmbeddings {
    ViewEmbeddings::new((0..n).map(|_| random_vec(rng, d)).collect()).unwrap()
}

fn identity_params(d: usize, strategy: StrategyConfig) -> TgsspParams {
    TgsspParams {
        refine: AffineBlockParams::identity(d).unwrap(),
        vis_proj: Projection::new(Mat64::identity(d).unwrap(), Vec64::zeros(d).unwrap()).unwrap(),
        txt_proj: Projection::new(Mat64::identity(d).unwrap(), Vec64::zeros(d).unwrap()).unwrap(),
        strategy,
    }
}

/// Projected views, recomputed without the fusion code path.
fn projected(views: &ViewEmbeddings, p: &TgsspParams) -> Vec<Vec<f64>> {
    views
        .iter()
        .map(|v| {
            let r = crate::math::affine_refine(v, &p.refine).unwrap();
            crate::math::linear_project(&r, &p.vis_proj.weight, &p.vis_proj.bias).unwrap().into_vec()
        })
        .collect()
}

fn randomize_biases(p: &mut TgsspParams, rng: &mut ChaCha8Rng) {
    let d_v = p.dims().d_v;
    let d_e = p.dims().d_e;
    p.refine.bias = Vec64::new(random_vec(rng, d_v)).unwrap();
    p.refine.norm_gain = Vec64::new((0..d_v).map(|_| rng.random_range(0.5..1.5)).collect()).unwrap();
    p.refine.norm_bias = Vec64::new(random_vec(rng, d_v)).unwrap();
    p.vis_proj.bias = Vec64::new(random_vec(rng, d_e)).unwrap();
    p.txt_proj.bias = Vec64::new(random_vec(rng, d_e)).unwrap();
}

#[test]
fn similarity_examples() {
    let s = similarity_scores(&[vec![2.0, 0.0], vec![0.0, 3.0]], &[1.0, 0.0]).unwrap();
    assert_eq!(s, vec![1.0, 0.0]);
    let s = similarity_scores(&vec![vec![1.0, 2.0]; 3], &[1.0, 2.0]).unwrap();
    assert!(s.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    let s = similarity_scores(&[vec![1.0, 1.0], vec![1.0, 0.0]], &[1.0, 0.0]).unwrap();
    assert!((s[0] - FRAC_1_SQRT_2).abs() < 1e-15);
    assert_eq!(s[1], 1.0);
}

#[test]
fn similarity_zero_norm_names_view() {
    let err = similarity_scores(&[vec![1.0, 0.0], vec![0.0, 0.0]], &[1.0, 0.0]).unwrap_err();
    assert_eq!(err, Error::ZeroNorm { index: Some(1) });
}

#[test]
fn uniform_fuse_is_mean_of_projections() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = init_params_with(5, 4, 3, 1, StrategyConfig::new(StrategyKind::UniformPooling)).unwrap();
    let views = random_views(&mut rng, 4, 5);
    let q = QueryEmbedding::new(random_vec(&mut rng, 4)).unwrap();
    let out = fuse(&views, &q, &p).unwrap();
    let proj = projected(&views, &p);
    for j in 0..3 {
        let mean = proj.iter().map(|v| v[j]).sum::<f64>() / 4.0;
        assert!((out.fused[j] - mean).abs() < 1e-12);
    }
}

#[test]
fn hard_top1_selects_view_matching_query() {
    let p = identity_params(3, StrategyConfig::new(StrategyKind::HardTop1));
    // zero-mean, unit-variance positive-part views survive the identity refine
    let views = ViewEmbeddings::new(vec![
        vec![1.224_744_871_391_589, 0.0, -1.224_744_871_391_589],
        vec![-1.224_744_871_391_589, 1.224_744_871_391_589, 0.0],
        vec![0.0, -1.224_744_871_391_589, 1.224_744_871_391_589],
    ])
    .unwrap();
    let target = projected(&views, &p)[1].clone();
    let q = QueryEmbedding::new(target.clone()).unwrap();
    let out = fuse(&views, &q, &p).unwrap();
    assert_eq!(out.weights.as_slice(), &[0.0, 1.0, 0.0]);
    assert_eq!(out.fused.as_slice(), target.as_slice());
}

#[test]
fn single_view_returns_its_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let views = random_views(&mut rng, 1, 5);
    let q = QueryEmbedding::new(random_vec(&mut rng, 4)).unwrap();
    for kind in StrategyKind::ALL {
        let mut cfg = StrategyConfig::new(kind);
        cfg.top_k = 1;
        let p = init_params_with(5, 4, 3, 2, cfg).unwrap();
        let out = fuse(&views, &q, &p).unwrap();
        assert_eq!(out.fused.as_slice(), projected(&views, &p)[0].as_slice(), "{kind}");
    }
}

#[test]
fn fused_is_exact_weighted_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = init_params(6, 5, 4, 0).unwrap();
    let views = random_views(&mut rng, 6, 6);
    let q = QueryEmbedding::new(random_vec(&mut rng, 5)).unwrap();
    let out = fuse(&views, &q, &p).unwrap();
    let proj = projected(&views, &p);
    let mut expect = vec![0.0; 4];
    for (w, v) in out.weights.iter().zip(&proj) {
        for (e, x) in expect.iter_mut().zip(v) {
            *e += w * x;
        }
    }
    assert_eq!(out.fused.as_slice(), expect.as_slice());
    assert_eq!(out, fuse(&views, &q, &p).unwrap());
}

#[test]
fn shape_errors() {
    let p = init_params(5, 4, 3, 0).unwrap();
    let views = ViewEmbeddings::new(vec![vec![1.0; 6]; 2]).unwrap();
    let q = QueryEmbedding::new(vec![1.0; 4]).unwrap();
    assert!(matches!(fuse(&views, &q, &p), Err(Error::Shape(_))));
    let views = ViewEmbeddings::new(vec![vec![1.0; 5]; 2]).unwrap();
    let q = QueryEmbedding::new(vec![1.0; 3]).unwrap();
    assert!(matches!(fuse(&views, &q, &p), Err(Error::Shape(_))));
    assert!(matches!(ViewEmbeddings::new(vec![vec![1.0; 2], vec![1.0; 3]]), Err(Error::Shape(_))));
    assert!(ViewEmbeddings::new(vec![]).is_err());
}

#[test]
fn zero_query_projection_is_reported() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = init_params(5, 4, 3, 0).unwrap();
    let views = random_views(&mut rng, 3, 5);
    let q = QueryEmbedding::new(vec![0.0; 4]).unwrap();
    assert_eq!(fuse(&views, &q, &p).unwrap_err(), Error::ZeroNorm { index: None });
}

#[test]
fn query_from_tokens_is_mean() {
    let q = QueryEmbedding::from_tokens(&[vec![1.0, 2.0], vec![3.0, -2.0]]).unwrap();
    assert_eq!(q.as_slice(), &[2.0, 0.0]);
    assert!(QueryEmbedding::from_tokens(&[]).is_err());
    assert!(QueryEmbedding::from_tokens(&[vec![1.0], vec![1.0, 2.0]]).is_err());
}

#[test]
fn init_is_deterministic_and_seeded() {
    let a = init_params(7, 5, 3, 0).unwrap();
    assert_eq!(a, init_params(7, 5, 3, 0).unwrap());
    assert_ne!(a.flatten(), init_params(7, 5, 3, 1).unwrap().flatten());
    assert!(a.refine.bias.iter().all(|&b| b == 0.0));
    assert!(a.refine.norm_gain.iter().all(|&g| g == 1.0));
    let bound = (6.0f64 / 10.0).sqrt();
    assert!(a.vis_proj.weight.as_slice().iter().all(|w| w.abs() <= bound));

    let b = init_params(4, 6, 1, 5).unwrap();
    assert_eq!((b.vis_proj.weight.rows(), b.vis_proj.weight.cols()), (1, 4));
    assert_eq!((b.txt_proj.weight.rows(), b.txt_proj.weight.cols()), (1, 6));
    assert_eq!(b.txt_proj.bias.len(), 1);
    assert!(init_params(0, 1, 1, 0).is_err());
}

#[test]
fn flatten_round_trips() {
    let p = init_params(4, 3, 2, 8).unwrap();
    let flat = p.flatten();
    assert_eq!(flat.len(), p.num_params());
    assert_eq!(p.with_flat(&flat).unwrap(), p);
    assert!(p.with_flat(&flat[1..]).is_err());
}

#[test]
fn snapshot_round_trips() {
    let p = init_params(4, 3, 2, 8).unwrap();
    let doc = p.to_snapshot();
    let keys: Vec<&String> = doc.as_object().unwrap().keys().collect();
    assert_eq!(keys.len(), 9);
    for k in SNAPSHOT_KEYS {
        assert!(doc.get(k).unwrap().is_array(), "{k}");
    }
    assert_eq!(doc["dims"]["d_t"], 3);
    assert_eq!(doc["vis_proj.weight"].as_array().unwrap().len(), 8);
    let back = TgsspParams::from_snapshot_json(&p.to_snapshot_json(), p.strategy).unwrap();
    assert_eq!(back, p);

    let mut bad = doc.clone();
    bad.as_object_mut().unwrap().insert("extra".into(), serde_json::Value::Null);
    assert!(TgsspParams::from_snapshot(&bad, p.strategy).is_err());
    let mut short = doc;
    short["refine.bias"] = serde_json::json!([0.0]);
    assert!(matches!(TgsspParams::from_snapshot(&short, p.strategy), Err(Error::Shape(_))));
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for kind in StrategyKind::ALL {
        let mut p = init_params_with(5, 4, 3, 0, StrategyConfig::new(kind)).unwrap();
        randomize_biases(&mut p, &mut rng);
        let views = random_views(&mut rng, 6, 5);
        let q = QueryEmbedding::new(random_vec(&mut rng, 4)).unwrap();
        let g = fuse_vjp(&views, &q, &p, &[0.0; 3]).unwrap();
        assert!(g.params.flatten().iter().all(|&v| v == 0.0), "{kind}");
        assert!(g.views.iter().flatten().all(|&v| v == 0.0));
        assert!(g.query.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn uniform_pooling_leaves_text_path_dead() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut p = init_params_with(5, 4, 3, 0, StrategyConfig::new(StrategyKind::UniformPooling)).unwrap();
    randomize_biases(&mut p, &mut rng);
    let views = random_views(&mut rng, 4, 5);
    let q = QueryEmbedding::new(random_vec(&mut rng, 4)).unwrap();
    let up = random_vec(&mut rng, 3);
    let g = fuse_vjp(&views, &q, &p, &up).unwrap();
    assert!(g.params.txt_weight.as_slice().iter().all(|&v| v == 0.0));
    assert!(g.params.txt_bias.iter().all(|&v| v == 0.0));
    assert!(g.query.iter().all(|&v| v == 0.0));

    // each view sees upstream / N_v through the projection and refine block
    let scaled: Vec<f64> = up.iter().map(|u| u / 4.0).collect();
    for (i, v) in views.iter().enumerate() {
        let (_, cache) = refine_forward(v, &p.refine);
        let d_r = p.vis_proj.weight.matvec_transposed(&scaled);
        let mut sink = AffineBlockGrads::zeros_like(&p.refine);
        let expect = refine_backward(&p.refine, &cache, &d_r, &mut sink);
        for (a, b) in g.views[i].iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}

/// Views and query whose refine pre-activations stay clear of the ReLU kink
/// and whose scores are separated, so central differences are well posed.
fn conditioned_instance(rng: &mut ChaCha8Rng, p: &TgsspParams, n: usize) -> (ViewEmbeddings, QueryEmbedding) {
    let Dims { d_v, d_t, .. } = p.dims();
    loop {
        let views = random_views(rng, n, d_v);
        let q = QueryEmbedding::new(random_vec(rng, d_t)).unwrap();
        let kink_free = views.iter().all(|v| refine_forward(v, &p.refine).1.pre.iter().all(|x| x.abs() >= 1e-3));
        let Ok(out) = fuse(&views, &q, p) else { continue };
        let mut s = out.scores.clone();
        s.sort_by(f64::total_cmp);
        if kink_free && s.windows(2).all(|w| w[1] - w[0] >= 1e-3) {
            return (views, q);
        }
    }
}

fn check_all_gradients(kind: StrategyKind, seed: u64) -> crate::math::GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = init_params_with(5, 4, 3, seed, StrategyConfig::new(kind)).unwrap();
    randomize_biases(&mut p, &mut rng);
    let (n, d_v, d_t) = (6, 5, 4);
    let (views, q) = conditioned_instance(&mut rng, &p, n);
    let up = random_vec(&mut rng, 3);

    let np = p.num_params();
    let mut point = p.flatten();
    point.extend(views.iter().flat_map(|v| v.iter().copied()));
    point.extend_from_slice(q.as_slice());

    let split = |x: &[f64]| {
        let params = p.with_flat(&x[..np]).unwrap();
        let views = ViewEmbeddings::new(x[np..np + n * d_v].chunks(d_v).map(<[f64]>::to_vec).collect()).unwrap();
        let q = QueryEmbedding::new(x[np + n * d_v..].to_vec()).unwrap();
        (params, views, q)
    };
    let f = |x: &[f64]| {
        let (params, views, q) = split(x);
        fuse(&views, &q, &params).unwrap().fused.iter().zip(&up).map(|(a, b)| a * b).sum()
    };
    let g = |x: &[f64]| {
        let (params, views, q) = split(x);
        let g = fuse_vjp(&views, &q, &params, &up).unwrap();
        let mut flat = g.params.flatten();
        flat.extend(g.views.into_iter().flatten());
        flat.extend(g.query);
        flat
    };
    let mut groups = p.param_groups();
    groups.push(("views", n * d_v));
    groups.push(("query", d_t));
    finite_diff_check_grouped(f, g, &point, &groups, 1e-5, 1e-4).unwrap()
}

#[test]
fn soft_sort_gradients_match_finite_differences() {
    let r = check_all_gradients(StrategyKind::SoftSort, 0);
    assert!(r.passed, "{r:?}");
}

#[test]
fn every_differentiable_strategy_passes_gradient_check() {
    for kind in
        [StrategyKind::SinkhornSort, StrategyKind::TopKSoft, StrategyKind::SimpleSoftmax, StrategyKind::UniformPooling]
    {
        for seed in 0..3 {
            let r = check_all_gradients(kind, seed);
            assert!(r.passed, "{kind} seed {seed}: {r:?}");
        }
    }
}

#[test]
fn no_dead_parameters() {
    let mut seen = vec![false; init_params(5, 4, 3, 0).unwrap().num_params()];
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = init_params(5, 4, 3, seed).unwrap();
        randomize_biases(&mut p, &mut rng);
        let (views, q) = conditioned_instance(&mut rng, &p, 6);
        let g = fuse_vjp(&views, &q, &p, &random_vec(&mut rng, 3)).unwrap();
        for (s, v) in seen.iter_mut().zip(g.params.flatten()) {
            *s |= v != 0.0;
        }
    }
    assert!(seen.iter().all(|&s| s));
}

#[test]
fn view_order_does_not_change_fused_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let perm = [3, 0, 5, 1, 4, 2];
    for kind in StrategyKind::ALL {
        let mut p = init_params_with(5, 4, 3, 7, StrategyConfig::new(kind)).unwrap();
        randomize_biases(&mut p, &mut rng);
        let (views, q) = conditioned_instance(&mut rng, &p, 6);
        let a = fuse(&views, &q, &p).unwrap();
        let b = fuse(&views.permuted(&perm), &q, &p).unwrap();
        for (x, y) in a.fused.iter().zip(b.fused.iter()) {
            assert!((x - y).abs() < 1e-9, "{kind}");
        }
        for (i, &j) in perm.iter().enumerate() {
            assert!((b.weights[i] - a.weights[j]).abs() < 1e-12);
        }
    }
}

#[test]
fn query_scale_leaves_output_unchanged_without_text_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for kind in StrategyKind::ALL {
        let mut p = init_params_with(5, 4, 3, 3, StrategyConfig::new(kind)).unwrap();
        randomize_biases(&mut p, &mut rng);
        p.txt_proj.bias = Vec64::zeros(3).unwrap();
        let (views, q) = conditioned_instance(&mut rng, &p, 6);
        let a = fuse(&views, &q, &p).unwrap();
        for alpha in [1e-3, 0.5, 3.0, 250.0] {
            let b = fuse(&views, &q.scaled(alpha).unwrap(), &p).unwrap();
            for (x, y) in a.fused.iter().zip(b.fused.iter()) {
                assert!((x - y).abs() < 1e-9, "{kind} alpha {alpha}");
            }
        }
    }
}

#[test]
fn fused_lies_in_projection_box() {
    // convex hull implies coordinate-wise bounds by the projected views
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for seed in 0..10 {
        for kind in StrategyKind::ALL {
            let p = init_params_with(5, 4, 3, seed, StrategyConfig::new(kind)).unwrap();
            let views = random_views(&mut rng, 5, 5);
            let q = QueryEmbedding::new(random_vec(&mut rng, 4)).unwrap();
            let out = fuse(&views, &q, &p).unwrap();
            let sum: f64 = out.weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9 && out.weights.iter().all(|&w| w >= 0.0));
            let proj = projected(&views, &p);
            for j in 0..3 {
                let lo = proj.iter().map(|v| v[j]).fold(f64::INFINITY, f64::min);
                let hi = proj.iter().map(|v| v[j]).fold(f64::NEG_INFINITY, f64::max);
                assert!(out.fused[j] >= lo - 1e-12 && out.fused[j] <= hi + 1e-12);
            }
        }
    }
}
