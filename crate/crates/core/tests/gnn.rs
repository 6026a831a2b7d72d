use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use stableaml::gnn::{sage_forward, train_sage, GnnError, SageConfig, SageGraph};
use stableaml::learners::{load_model, save_model, ModelArtifact, SavedModel};
use stableaml::rng;

fn random_graph(n: usize, p: f64, seed: u64) -> SageGraph {
    let mut r = rng::rng_from(seed);
    let mut lists = vec![Vec::new(); n];
    for a in 0..n {
        for b in a + 1..n {
            if r.random_bool(p) {
                lists[a].push(b);
                lists[b].push(a);
            }
        }
    }
    SageGraph::from_lists(lists)
}

fn random_x(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut r = rng::rng_from(seed ^ 0xfeed);
    Array2::from_shape_fn((n, d), |_| r.random_range(-2.0..2.0))
}

fn quick() -> SageConfig {
    SageConfig {
        hidden: 8,
        max_epochs: 25,
        validation_fraction: 0.0,
        ..SageConfig::default()
    }
}

fn labels(n: usize, seed: u64) -> Vec<usize> {
    let mut r = rng::rng_from(seed ^ 0x1abe1);
    (0..n).map(|_| r.random_range(0..3)).collect()
}

#[test]
fn test_label_poisoning_leaves_weights_unchanged() {
    let (g, x) = (random_graph(40, 0.1, 1), random_x(40, 5, 1));
    let y = labels(40, 1);
    let mask: Vec<usize> = (0..40).filter(|v| v % 4 != 0).collect();
    let pairs = |y: &[usize]| mask.iter().map(|&v| (v, y[v])).collect::<Vec<_>>();
    let cfg = SageConfig {
        validation_fraction: 0.1,
        ..quick()
    };
    let clean = train_sage(&g, x.view(), &pairs(&y), 3, &cfg).unwrap();
    let mut poisoned = y.clone();
    for v in (0..40).step_by(4) {
        poisoned[v] = (poisoned[v] + 1) % 3;
    }
    let dirty = train_sage(&g, x.view(), &pairs(&poisoned), 3, &cfg).unwrap();
    assert_eq!(clean, dirty);
}

#[test]
fn relabeling_nodes_permutes_outputs() {
    let n = 30;
    let (g, x) = (random_graph(n, 0.15, 2), random_x(n, 4, 2));
    let y = labels(n, 2);
    let pairs: Vec<(usize, usize)> = (0..n).map(|v| (v, y[v])).collect();
    let m = train_sage(&g, x.view(), &pairs, 3, &quick()).unwrap();
    let base = sage_forward(&m, &g, x.view()).unwrap();

    let perm: Vec<usize> = rng::shuffled(n, &mut rng::rng_from(9));
    let mut lists = vec![Vec::new(); n];
    let mut px = Array2::zeros(x.raw_dim());
    for v in 0..n {
        let mut nb: Vec<usize> = g.neighbors(v).iter().map(|&u| perm[u]).collect();
        nb.reverse();
        lists[perm[v]] = nb;
        px.row_mut(perm[v]).assign(&x.row(v));
    }
    let pg = SageGraph::from_lists(lists);
    let moved = sage_forward(&m, &pg, px.view()).unwrap();
    for v in 0..n {
        for c in 0..3 {
            assert!((base[[v, c]] - moved[[perm[v], c]]).abs() < 1e-12);
        }
    }
}

#[test]
fn neighbor_list_order_is_bit_exact() {
    let g = random_graph(25, 0.2, 3);
    let x = random_x(25, 3, 3);
    let y = labels(25, 3);
    let pairs: Vec<(usize, usize)> = (0..25).map(|v| (v, y[v])).collect();
    let m = train_sage(&g, x.view(), &pairs, 3, &quick()).unwrap();
    let reversed = SageGraph::from_lists(
        (0..25)
            .map(|v| {
                let mut l = g.neighbors(v).to_vec();
                l.reverse();
                l.extend_from_slice(g.neighbors(v));
                l.push(v);
                l
            })
            .collect(),
    );
    assert_eq!(reversed, g);
    assert_eq!(sage_forward(&m, &reversed, x.view()).unwrap(), sage_forward(&m, &g, x.view()).unwrap());
}

#[test]
fn errors_and_round_trip() {
    let (g, x) = (random_graph(12, 0.3, 4), random_x(12, 3, 4));
    assert!(matches!(train_sage(&g, x.view(), &[], 3, &quick()), Err(GnnError::DegenerateLabels)));
    let y = labels(12, 4);
    let pairs: Vec<(usize, usize)> = (0..12).map(|v| (v, y[v])).collect();
    let m = train_sage(&g, x.view(), &pairs, 3, &quick()).unwrap();
    assert!(sage_forward(&m, &g, random_x(12, 4, 4).view()).is_err());

    let art = ModelArtifact::new(SavedModel::Sage(m.clone()), 42, false, Vec::new());
    let mut bytes = Vec::new();
    save_model(&art, &mut bytes).unwrap();
    let SavedModel::Sage(back) = load_model(bytes.as_slice()).unwrap().model else { panic!("wrong family") };
    assert_eq!(sage_forward(&back, &g, x.view()).unwrap(), sage_forward(&m, &g, x.view()).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn outputs_lie_on_the_simplex(seed in 0u64..10_000, n in 4usize..30, p in 0.0f64..0.5) {
        let (g, x) = (random_graph(n, p, seed), random_x(n, 3, seed));
        let y = labels(n, seed);
        let pairs: Vec<(usize, usize)> = (0..n).step_by(2).map(|v| (v, y[v])).collect();
        let m = train_sage(&g, x.view(), &pairs, 3, &SageConfig { max_epochs: 5, ..quick() }).unwrap();
        let probs = sage_forward(&m, &g, x.view()).unwrap();
        for row in probs.rows() {
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            prop_assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }
}
