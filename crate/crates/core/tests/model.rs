use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use so3krates::data::{gen_rotor_chain, RotorChainSpec};
use so3krates::geometry::{random_structure, MolecularStructure};
use so3krates::model::{Branch, Model, ModelConfig, PairKind};
use so3krates::so3::{DegreeRange, Rotation};
use so3krates::verify;

fn small(l_max: usize, nonlocal: bool) -> ModelConfig {
    ModelConfig {
        features: 12,
        n_layers: 2,
        l_max,
        r_cut: 3.0,
        n_rbf: 8,
        heads: 2,
        radial_hidden: 16,
        spherical_hidden: 8,
        use_nonlocal: nonlocal,
        ..ModelConfig::default()
    }
}

fn structure(atoms: &[(u32, [f64; 3])]) -> MolecularStructure {
    MolecularStructure::new(atoms.iter().map(|a| a.0).collect(), atoms.iter().map(|a| a.1).collect()).unwrap()
}

fn l1_block(chi: &so3krates::autodiff::Tensor, degrees: DegreeRange, atom: usize) -> Vec<f64> {
    let o = degrees.offset(1);
    chi.row_slice(atom)[o..o + 3].to_vec()
}

#[test]
fn single_neighbor_along_z_gives_unit_l1_block() {
    let model = Model::new(small(2, false), 0).unwrap();
    let s = structure(&[(6, [0.0; 3]), (1, [0.0, 0.0, 1.5])]);
    let (_, t) = model.trace(&s).unwrap();
    let d = model.config().degrees();
    let a = l1_block(&t.chi[0], d, 0);
    let b = l1_block(&t.chi[0], d, 1);
    for k in 0..3 {
        assert!((a[k] - [0.0, 1.0, 0.0][k]).abs() < 1e-12, "{a:?}");
        assert!((b[k] - [0.0, -1.0, 0.0][k]).abs() < 1e-12, "{b:?}");
    }
}

#[test]
fn centrosymmetric_and_isolated_atoms_have_zero_l1() {
    let model = Model::new(small(2, false), 0).unwrap();
    let s = structure(&[
        (8, [0.0; 3]),
        (1, [0.0, 0.0, 1.1]),
        (1, [0.0, 0.0, -1.1]),
        (6, [20.0, 0.0, 0.0]),
    ]);
    let (_, t) = model.trace(&s).unwrap();
    let d = model.config().degrees();
    assert!(l1_block(&t.chi[0], d, 0).iter().all(|v| v.abs() < 1e-14));
    assert!(t.chi[0].row_slice(3).iter().all(|v| *v == 0.0));
}

#[test]
fn invariance_across_degrees_and_nonlocal_settings() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for l_max in 0..=3 {
        for nonlocal in [false, true] {
            let model = Model::new(small(l_max, nonlocal), l_max as u64).unwrap();
            for _ in 0..3 {
                let n = 4 + l_max * 2;
                let s = random_structure(&mut rng, n, &[1, 6, 8], 0.9);
                let e = verify::motion_errors(&model, &s, 4, &mut rng).unwrap();
                assert!(e.energy_rel < 1e-6, "l_max {l_max} nonlocal {nonlocal}: {e:?}");
                assert!(e.forces < 1e-6, "l_max {l_max} nonlocal {nonlocal}: {e:?}");
                assert!(e.chi < 1e-8, "l_max {l_max} nonlocal {nonlocal}: {e:?}");
            }
        }
    }
}

#[test]
fn permutation_symmetry() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = Model::new(small(2, true), 1).unwrap();
    for _ in 0..3 {
        let s = random_structure(&mut rng, 7, &[1, 6, 7], 0.9);
        let (e, f) = verify::permutation_error(&model, &s, &mut rng).unwrap();
        assert!(e < 1e-9 && f < 1e-9, "{e} {f}");
    }
}

#[test]
fn forces_match_finite_differences_and_sum_to_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for nonlocal in [false, true] {
        let model = Model::new(small(2, nonlocal), 2).unwrap();
        let s = random_structure(&mut rng, 6, &[1, 6, 8], 0.9);
        let err = verify::force_fd_error(&model, &s, 1e-4).unwrap();
        assert!(err < 1e-4, "nonlocal {nonlocal}: {err}");
        let p = model.predict(&s).unwrap();
        for k in 0..3 {
            let total: f64 = p.forces.iter().map(|f| f[k]).sum();
            assert!(total.abs() < 1e-8, "net force {total}");
        }
    }
}

#[test]
fn loss_gradient_includes_correct_second_derivatives() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let model = Model::new(small(2, true), 3).unwrap();
    let s = random_structure(&mut rng, 5, &[1, 6], 0.9);
    let p = model.predict(&s).unwrap();
    let f: Vec<[f64; 3]> = p.forces.iter().map(|v| v.map(|x| 0.7 * x - 0.05)).collect();
    let s = s.with_labels(p.energy - 0.2, Some(f)).unwrap();
    let err = verify::param_grad_error(&model, &s, 0.8, 10, 1e-5, &mut rng).unwrap();
    assert!(err < 1e-3, "{err}");
}

#[test]
fn distant_fragments_are_additive_without_nonlocal_attention() {
    let model = Model::new(small(2, false), 4).unwrap();
    let a = structure(&[(8, [0.0; 3]), (1, [0.96, 0.0, 0.0]), (1, [-0.24, 0.93, 0.0])]);
    let b = structure(&[(6, [0.0; 3]), (1, [1.09, 0.0, 0.0]), (7, [0.0, 1.3, 0.4])]);
    let shift = [40.0, 3.0, -2.0];
    let mut atoms: Vec<(u32, [f64; 3])> = a.atomic_numbers.iter().copied().zip(a.positions.iter().copied()).collect();
    atoms.extend(
        b.atomic_numbers
            .iter()
            .zip(&b.positions)
            .map(|(&z, p)| (z, [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]])),
    );
    let joint = structure(&atoms);
    let (ea, eb, ej) = (
        model.energy(&a).unwrap(),
        model.energy(&b).unwrap(),
        model.energy(&joint).unwrap(),
    );
    assert!((ej - ea - eb).abs() < 1e-8, "{ej} vs {}", ea + eb);
}

#[test]
fn local_model_ignores_perturbations_beyond_receptive_field() {
    let config = small(1, false);
    let reach = config.n_layers as f64 * config.r_cut;
    let model = Model::new(config, 5).unwrap();
    let mut atoms = vec![(6, [0.0; 3]), (1, [1.0, 0.0, 0.0])];
    atoms.push((8, [reach + 1.0, 0.0, 0.0]));
    atoms.push((1, [reach + 2.0, 0.0, 0.0]));
    let s = structure(&atoms);
    let mut moved = s.clone();
    moved.positions[3] = [reach + 1.5, 0.8, 0.2];
    let a = model.predict(&s).unwrap();
    let b = model.predict(&moved).unwrap();
    assert_eq!(a.atom_energies[0], b.atom_energies[0]);
    assert_eq!(a.atom_energies[1], b.atom_energies[1]);
}

#[test]
fn nonlocal_pairs_reach_beyond_cutoff_on_rotor_chain() {
    let config = ModelConfig {
        r_cut: 2.5,
        n_layers: 2,
        l_max: 1,
        use_nonlocal: true,
        ..small(1, true)
    };
    let model = Model::new(config, 0).unwrap();
    let s = gen_rotor_chain(&RotorChainSpec::default(), 0.6, &Rotation::IDENTITY).unwrap();
    let (_, t) = model.trace(&s).unwrap();
    assert_eq!(t.spherical.len(), 2);
    let far = t.spherical[0].iter().any(|p| {
        let d: f64 = (0..3)
            .map(|k| (s.positions[p.i][k] - s.positions[p.j][k]).powi(2))
            .sum::<f64>()
            .sqrt();
        d > 2.5
    });
    assert!(far, "no spherical pair spans the cutoff");
    assert!(t.spherical[0].iter().all(|p| p.weight > 0.0 && p.weight <= 1.0 && p.i != p.j));
    assert!(t
        .attention
        .iter()
        .any(|r| r.kind == PairKind::NonLocal && r.alpha != 0.0));
}

#[test]
fn attention_records_match_pair_lists() {
    let config = small(2, true);
    let model = Model::new(config.clone(), 6).unwrap();
    let s = gen_rotor_chain(&RotorChainSpec::default(), 0.3, &Rotation::IDENTITY).unwrap();
    let (_, t) = model.trace(&s).unwrap();
    let degrees = config.degrees().count();
    for layer in 0..config.n_layers {
        let count = |kind, branch| {
            t.attention
                .iter()
                .filter(|r| r.layer == layer && r.kind == kind && r.branch == branch)
                .count()
        };
        assert_eq!(count(PairKind::Local, Branch::Feature), t.euclidean.len() * config.heads);
        assert_eq!(count(PairKind::Local, Branch::Sphc), t.euclidean.len() * degrees);
        assert_eq!(count(PairKind::NonLocal, Branch::Sphc), t.spherical[layer].len() * degrees);
    }
    let (_, again) = model.trace(&s).unwrap();
    assert_eq!(t.attention, again.attention);
    assert_eq!(t.chi, again.chi);
}

#[test]
fn spherical_filter_ablation_changes_the_function() {
    let with = Model::new(small(2, false), 7).unwrap();
    let without = Model::new(
        ModelConfig {
            use_spherical_filter: false,
            ..small(2, false)
        },
        7,
    )
    .unwrap();
    assert!(without.param_count() < with.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let s = random_structure(&mut rng, 6, &[1, 6], 0.9);
    assert!(without.energy(&s).unwrap().is_finite());
}
