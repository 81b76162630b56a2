mod common;

use common::dense::{framework, oracle_difference, small_meshes, Dense};
use common::{max_abs_diff, random_state, Mesh};
use ebsrd_core::geometry::ImplicitFn;
use ebsrd_core::mesh::{Boundary, GridSpec};
use ebsrd_core::srd::{canonical_weights, SrdOptions, Variant, WeightList, Weights};
use ebsrd_core::{Error, PatchArray};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

thread_local! {
    static SMALL: Vec<Mesh> = small_meshes();
}

#[test]
fn framework_matches_the_dense_oracle_on_small_meshes() {
    SMALL.with(|m| oracle_on(m));
}

fn oracle_on(meshes: &[Mesh]) {
    assert!(meshes.len() > 300, "only {} meshes", meshes.len());
    let mut worst = 0.0f64;
    for (k, mesh) in meshes.iter().enumerate() {
        let u = random_state(mesh, k as u64);
        let err = oracle_difference(mesh, &u);
        assert!(err < 1e-13, "mesh {k}: {err}");
        worst = worst.max(err);
        // the framework with canonical weights is the direct algorithm
        for variant in [Variant::Original, Variant::Weighted] {
            let opts = SrdOptions { variant, ..SrdOptions::default() };
            let plans = mesh.plans(&opts).unwrap();
            let got = framework(mesh, &canonical_weights(&plans[0]).unwrap(), &u, &opts).unwrap();
            assert_eq!(got, mesh.srd_with(&plans, &opts, &u).unwrap());
        }
    }
    eprintln!("{} meshes, worst difference {worst:e}", meshes.len());
}

#[test]
fn oracle_covers_three_dimensions() {
    let spec = GridSpec::new(3, [5, 5, 5], [0.2; 3], [0.0; 3], Boundary::Outflow);
    let mesh = [([0.52, 0.47, 0.5], 0.29), ([0.5, 0.5, 0.5], 0.3), ([0.45, 0.55, 0.52], 0.33), ([0.5, 0.5, 0.5], 0.41)]
        .into_iter()
        .find_map(|(c, r)| Mesh::new(&ImplicitFn::sphere(c, r), spec, 1).ok().filter(|m| m.plans(&SrdOptions::default()).is_ok()))
        .expect("a supported sphere");
    let u = random_state(&mesh, 3);
    for variant in [Variant::Original, Variant::Weighted] {
        let opts = SrdOptions { variant, ..SrdOptions::default() };
        let plan = &mesh.plans(&opts).unwrap()[0];
        let dense = Dense::new(&mesh, plan);
        let expected = dense.apply(&dense.matrix(variant), &u, true, true);
        let got = framework(&mesh, &canonical_weights(plan).unwrap(), &u, &opts).unwrap();
        assert!(max_abs_diff(&got, &expected) < 1e-13, "{variant:?}");
    }
}

#[test]
fn own_weight_one_is_the_identity() {
    SMALL.with(|m| own_weight_one(&m[40]));
}

fn own_weight_one(mesh: &Mesh) {
    let spec = *mesh.spec();
    let weights: Weights = PatchArray::from_fn(2, spec.domain(), 0, |c| {
        let mut l = WeightList::new();
        if mesh.geoms[0].eligible(c).unwrap() {
            l.push(([0; 3], 1.0));
        }
        l
    });
    let u = random_state(mesh, 4);
    assert_eq!(framework(mesh, &weights, &u, &SrdOptions::default()).unwrap(), u);
}

#[test]
fn weights_must_sum_to_one() {
    SMALL.with(|m| sum_violation(&m[0]));
}

fn sum_violation(mesh: &Mesh) {
    let spec = *mesh.spec();
    let weights: Weights = PatchArray::from_fn(2, spec.domain(), 0, |c| {
        let mut l = WeightList::new();
        if mesh.geoms[0].eligible(c).unwrap() {
            l.push(([0; 3], if c == [1, 1, 0] { 0.9 } else { 1.0 }));
        }
        l
    });
    let u = random_state(mesh, 5);
    let err = framework(mesh, &weights, &u, &SrdOptions::default()).unwrap_err();
    assert!(matches!(err, Error::WeightSumViolation { cell: [1, 1, 0], .. }), "{err:?}");
}

/// Random positive weights from each fluid cell to itself and a random
/// subset of fluid cells of its 3x3 block.
fn random_weights(mesh: &Mesh, seed: u64) -> Weights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = &mesh.geoms[0];
    PatchArray::from_fn(2, mesh.spec().domain(), 0, |c| {
        let mut l = WeightList::new();
        if !g.eligible(c).unwrap() {
            return l;
        }
        for j in -1..=1i8 {
            for i in -1..=1i8 {
                let o = [i, j, 0];
                let n = [c[0] + i as i64, c[1] + j as i64, 0];
                let take = o == [0; 3] || (mesh.spec().domain().contains(n) && g.eligible(n).unwrap() && rng.gen_bool(0.4));
                if take {
                    l.push((o, rng.gen_range(0.05..1.0)));
                }
            }
        }
        let s: f64 = l.iter().map(|(_, w)| w).sum();
        for e in l.iter_mut() {
            e.1 /= s;
        }
        l
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn random_admissible_weights_conserve(seed in any::<u64>(), pick in 0usize..1000) {
        let (before, after, scale) = SMALL.with(|meshes| {
            let mesh = &meshes[pick % meshes.len()];
            let u = random_state(mesh, seed);
            let w = random_weights(mesh, seed ^ 9);
            let out = framework(mesh, &w, &u, &SrdOptions::default()).unwrap();
            let scale: f64 = mesh.volumes().iter().zip(&u).map(|(v, x)| v * x.abs()).sum();
            (mesh.total(&u), mesh.total(&out), scale)
        });
        prop_assert!((before - after).abs() <= 1e-12 * scale, "{before} -> {after}");
    }
}

