use super::*;
use crate::momdp::{popart_update, sample_weight, Critic};
use crate::ndgrad::{finite_difference, relative_error};
use crate::rng;

fn spec(ds: usize, na: usize, k: usize) -> EnvSpec {
    EnvSpec {
        state_dim: ds,
        num_actions: na,
        num_objectives: k,
        max_episode_steps: 10,
    }
}

fn small(kind: ArchKind, shared: bool) -> ArchConfig {
    ArchConfig {
        kind,
        shared_trunk: shared,
        hidden_dim: 6,
        feature_dim: 4,
        mlp_depth: 2,
    }
}

fn all_small() -> Vec<ArchConfig> {
    ArchKind::ALL
        .into_iter()
        .flat_map(|k| [small(k, true), small(k, false)])
        .collect()
}

fn batch(r: &mut Rng, n: usize, s: &EnvSpec) -> (Tensor, Tensor) {
    let st = Tensor::matrix(n, s.state_dim, (0..n * s.state_dim).map(|_| r.gen_range(-2.0..2.0)).collect());
    let mut a = Vec::new();
    for _ in 0..n {
        a.extend_from_slice(sample_weight(s.num_objectives, r).as_slice());
    }
    (st, Tensor::matrix(n, s.num_objectives, a))
}

/// Random non-zero biases so gradient checks exercise every path.
fn jitter(p: &mut ParamTree, r: &mut Rng) {
    for e in 0..p.len() {
        for x in p.entry_mut(e).value.data_mut() {
            *x += r.gen_range(-0.3..0.3);
        }
    }
}

#[test]
fn multi_body_has_one_body_per_objective() {
    let (_, p) = Network::build(ArchConfig::new(ArchKind::MultiBody, true), spec(4, 3, 2), &mut rng::stream(0, &[])).unwrap();
    let bodies: Vec<_> = p.entries().iter().filter(|e| e.name.contains(".body") && e.name.ends_with(".w")).collect();
    assert_eq!(bodies.len(), 2);
    assert!(bodies.iter().all(|e| e.value.shape() == [256, 4]));
}

#[test]
fn non_shared_hypernet_is_larger() {
    let s = spec(5, 4, 2);
    let (_, a) = Network::build(ArchConfig::new(ArchKind::Hypernet, true), s, &mut rng::stream(0, &[])).unwrap();
    let (_, b) = Network::build(ArchConfig::new(ArchKind::Hypernet, false), s, &mut rng::stream(0, &[])).unwrap();
    assert!(b.num_parameters() > a.num_parameters());
}

#[test]
fn same_seed_same_init() {
    for arch in all_small() {
        let (_, a) = Network::build(arch.clone(), spec(5, 4, 3), &mut rng::stream(4, &[rng::tag::INIT])).unwrap();
        let (_, b) = Network::build(arch, spec(5, 4, 3), &mut rng::stream(4, &[rng::tag::INIT])).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn parameter_ownership_is_disjoint() {
    for arch in all_small() {
        let (_, p) = Network::build(arch.clone(), spec(5, 4, 2), &mut rng::stream(0, &[])).unwrap();
        for e in p.entries() {
            let expected = if e.name.starts_with("trunk.") {
                Owner::Shared
            } else if e.name.starts_with("actor.") {
                Owner::Actor
            } else {
                Owner::Critic
            };
            assert_eq!(e.owner, expected, "{}", e.name);
        }
        assert_eq!(arch.shared_trunk, p.entries().iter().any(|e| e.owner == Owner::Shared));
    }
}

#[test]
fn hypernet_generator_shapes() {
    let s = spec(5, 4, 3);
    for kind in [ArchKind::Hypernet, ArchKind::HypernetObs] {
        let arch = small(kind, true);
        let (_, p) = Network::build(arch.clone(), s, &mut rng::stream(0, &[])).unwrap();
        let f = arch.feature_dim;
        assert_eq!(p.value("actor.gen.w").unwrap().shape(), [4 * f + 4, arch.hidden_dim]);
        assert_eq!(p.value("critic.gen.w").unwrap().shape(), [3 * f + 3, arch.hidden_dim]);
    }
}

#[test]
fn corner_weight_ignores_other_body() {
    let s = spec(4, 3, 2);
    let mut r = rng::stream(1, &[]);
    let (net, mut p) = Network::build(small(ArchKind::MultiBody, true), s, &mut r).unwrap();
    let (st, _) = batch(&mut r, 5, &s);
    let a = Tensor::matrix(5, 2, [1.0, 0.0].repeat(5));
    let pop = PopArtStats::identity(2);
    let before = net.evaluate(&p, &pop, &st, &a).unwrap();
    for x in p.value_mut("trunk.body1.w").unwrap().data_mut() {
        *x += 0.7;
    }
    assert_eq!(net.evaluate(&p, &pop, &st, &a).unwrap(), before);
}

#[test]
fn identical_bodies_make_alpha_irrelevant() {
    let s = spec(4, 3, 3);
    let mut r = rng::stream(2, &[]);
    let (net, mut p) = Network::build(small(ArchKind::MultiBody, true), s, &mut r).unwrap();
    for part in ["w", "b"] {
        let v = p.value(&format!("trunk.body0.{part}")).unwrap().clone();
        for i in 1..3 {
            *p.value_mut(&format!("trunk.body{i}.{part}")).unwrap() = v.clone();
        }
    }
    let (st, a1) = batch(&mut r, 4, &s);
    let (_, a2) = batch(&mut r, 4, &s);
    let pop = PopArtStats::identity(3);
    let o1 = net.evaluate(&p, &pop, &st, &a1).unwrap();
    let o2 = net.evaluate(&p, &pop, &st, &a2).unwrap();
    assert!(relative_error(o1.action_probs.data(), o2.action_probs.data(), 1e-12) < 1e-12);
    assert!(relative_error(o1.normalized_value.data(), o2.normalized_value.data(), 1e-12) < 1e-12);
}

#[test]
fn multi_body_interpolates_features_exactly() {
    let s = spec(4, 3, 3);
    let mut r = rng::stream(3, &[]);
    let (net, p) = Network::build(small(ArchKind::MultiBody, true), s, &mut r).unwrap();
    let (st, _) = batch(&mut r, 1, &s);
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let lam: f64 = r.gen();
        let mut a = vec![0.0; 3];
        a[i] = lam;
        a[j] = 1.0 - lam;
        let mut g = Graph::new(&p);
        let sv = g.input(st.clone()).unwrap();
        let av = g.input(Tensor::matrix(1, 3, a)).unwrap();
        let (x, _) = net.condition(&mut g, "trunk", sv, av).unwrap();
        let phi = |b: usize| -> Vec<f64> {
            let w = p.value(&format!("trunk.body{b}.w")).unwrap();
            let bias = p.value(&format!("trunk.body{b}.b")).unwrap();
            (0..w.rows())
                .map(|o| (w.row(o).iter().zip(st.row(0)).map(|(u, v)| u * v).sum::<f64>() + bias.data()[o]).max(0.0))
                .collect()
        };
        let (pi, pj) = (phi(i), phi(j));
        let expected: Vec<f64> = pi.iter().zip(&pj).map(|(u, v)| lam * u + (1.0 - lam) * v).collect();
        for (got, want) in g.value(x).data().iter().zip(&expected) {
            assert!((got - want).abs() <= 1e-15 * want.abs().max(1.0), "{got} vs {want}");
        }
    }
}

#[test]
fn hypernet_alpha_changes_only_the_head() {
    let s = spec(5, 4, 2);
    let mut r = rng::stream(5, &[]);
    let (net, mut p) = Network::build(small(ArchKind::Hypernet, true), s, &mut r).unwrap();
    jitter(&mut p, &mut r);
    let (st, _) = batch(&mut r, 3, &s);
    let run = |a: Vec<f64>| {
        let mut g = Graph::new(&p);
        let h = net.forward(&mut g, &st, &Tensor::matrix(3, 2, a.repeat(3)), true, true).unwrap();
        (g.value(h.actor_features.unwrap()).clone(), g.value(h.logits.unwrap()).clone())
    };
    let (f1, l1) = run(vec![0.9, 0.1]);
    let (f2, l2) = run(vec![0.2, 0.8]);
    assert_eq!(f1, f2);
    assert_ne!(l1, l2);
}

#[test]
fn shared_trunk_feeds_both_heads() {
    for kind in ArchKind::ALL {
        let s = spec(5, 4, 2);
        let mut r = rng::stream(6, &[]);
        let (net, mut p) = Network::build(small(kind, true), s, &mut r).unwrap();
        jitter(&mut p, &mut r);
        let (st, a) = batch(&mut r, 3, &s);
        let pop = PopArtStats::identity(2);
        let before = net.evaluate(&p, &pop, &st, &a).unwrap();
        for x in p.value_mut("trunk.mlp0.w").unwrap().data_mut() {
            *x *= 1.5;
        }
        let after = net.evaluate(&p, &pop, &st, &a).unwrap();
        assert_ne!(before.action_probs, after.action_probs, "{kind}");
        assert_ne!(before.normalized_value, after.normalized_value, "{kind}");
    }
}

#[test]
fn off_simplex_alpha_rejected() {
    let s = spec(5, 4, 2);
    let (net, p) = Network::build(small(ArchKind::Merge, true), s, &mut rng::stream(0, &[])).unwrap();
    let st = Tensor::zeros(&[1, 5]);
    let err = net.evaluate(&p, &PopArtStats::identity(2), &st, &Tensor::matrix(1, 2, vec![0.6, 0.5]));
    assert!(matches!(err, Err(Error::InvalidWeights(_))));
    let ok = net.evaluate(&p, &PopArtStats::identity(2), &st, &Tensor::matrix(1, 2, vec![0.6, 0.4 + 5e-7]));
    assert!(ok.is_ok());
}

#[test]
fn probabilities_are_distributions() {
    for arch in all_small() {
        let s = spec(5, 4, 3);
        let mut r = rng::stream(8, &[]);
        let (net, p) = Network::build(arch, s, &mut r).unwrap();
        let (st, a) = batch(&mut r, 6, &s);
        let o = net.evaluate(&p, &PopArtStats::identity(3), &st, &a).unwrap();
        for i in 0..6 {
            assert!((o.action_probs.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(o.action_probs.row(i).iter().all(|&q| q > 0.0));
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    let s = spec(4, 3, 2);
    let mut r = rng::stream(9, &[]);
    for arch in all_small() {
        for _ in 0..3 {
            let (net, mut p) = Network::build(arch.clone(), s, &mut r).unwrap();
            jitter(&mut p, &mut r);
            let (st, a) = batch(&mut r, 3, &s);
            let actions: Vec<usize> = (0..3).map(|_| r.gen_range(0..3)).collect();
            let proj = Tensor::matrix(3, 2, (0..6).map(|_| r.gen_range(-1.0..1.0)).collect());
            for which in 0..2 {
                let mut g = Graph::new(&p);
                let h = net.forward(&mut g, &st, &a, true, true).unwrap();
                let out = if which == 0 {
                    let lp = g.log_softmax(h.logits.unwrap()).unwrap();
                    let sel = g.gather(lp, &actions).unwrap();
                    g.sum(sel).unwrap()
                } else {
                    let pv = g.input(proj.clone()).unwrap();
                    let prod = g.mul(h.value.unwrap(), pv).unwrap();
                    g.sum(prod).unwrap()
                };
                let analytic = g.backward_scalar(out).unwrap().flatten(&p);
                let numeric = finite_difference(&p, 1e-5, |q| {
                    let mut g = Graph::new(q);
                    let h = net.forward(&mut g, &st, &a, true, true).unwrap();
                    if which == 0 {
                        let lp = g.log_softmax(h.logits.unwrap()).unwrap();
                        let sel = g.gather(lp, &actions).unwrap();
                        g.value(sel).sum()
                    } else {
                        let v = g.value(h.value.unwrap());
                        v.data().iter().zip(proj.data()).map(|(x, y)| x * y).sum()
                    }
                });
                let err = relative_error(&analytic, &numeric, 1e-8);
                assert!(err < 1e-4, "{:?} shared={} part={which}: {err}", arch.kind, arch.shared_trunk);
            }
        }
    }
}

#[test]
fn art_preserves_unnormalized_values_for_every_arch() {
    let s = spec(4, 3, 2);
    let mut r = rng::stream(10, &[]);
    for arch in all_small() {
        let (net, mut p) = Network::build(arch, s, &mut r).unwrap();
        jitter(&mut p, &mut r);
        let mut pop = PopArtStats::new(2, 0.2);
        let (st, a) = batch(&mut r, 4, &s);
        for _ in 0..20 {
            let before = Model { net: &net, params: &p, popart: &pop }.values(&st, &a).unwrap();
            let targets: Vec<Vec<f64>> = (0..5).map(|_| vec![r.gen_range(-40.0..60.0), r.gen_range(-20.0..0.0)]).collect();
            popart_update(&mut pop, &mut net.critic_head(&mut p), &targets).unwrap();
            let after = Model { net: &net, params: &p, popart: &pop }.values(&st, &a).unwrap();
            for (x, y) in before.data().iter().zip(after.data()) {
                assert!((x - y).abs() < 1e-8, "{x} vs {y}");
            }
        }
    }
}
