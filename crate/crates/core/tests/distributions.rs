use expohedron::{exposure, exposure_of_distribution, DbnParams, Ranking, RankingDistribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn expected_exposure_matches_sampled_average() {
    let params = DbnParams::new(0.5, 0.7).unwrap();
    let rho = [0.1, 0.5, 0.9];
    let a = Ranking::from_one_based(&[1, 2, 3]).unwrap();
    let b = Ranking::from_one_based(&[3, 1, 2]).unwrap();
    let dist = RankingDistribution::new(vec![(0.25, a.clone()), (0.75, b.clone())]).unwrap();
    let expected = exposure_of_distribution(&dist, &params, &rho).unwrap();

    let ea = exposure(&a, &params, &rho).unwrap();
    let eb = exposure(&b, &params, &rho).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws = 1_000_000;
    let mut acc = [0.0; 3];
    for _ in 0..draws {
        let e = if rng.gen::<f64>() < 0.25 { &ea } else { &eb };
        acc.iter_mut().zip(e.iter()).for_each(|(s, x)| *s += x);
    }
    for (s, x) in acc.iter().zip(expected.iter()) {
        assert!((s / draws as f64 - x).abs() < 1e-2);
    }
}

#[test]
fn atoms_round_trip_through_one_based_permutations() {
    let dist = RankingDistribution::new(vec![
        (0.4, Ranking::from_one_based(&[2, 1, 3]).unwrap()),
        (0.6, Ranking::from_one_based(&[3, 2, 1]).unwrap()),
    ])
    .unwrap();
    let atoms: Vec<expohedron::Atom> = (&dist).into();
    assert_eq!(atoms[0].permutation, vec![2, 1, 3]);
    let back = RankingDistribution::try_from(atoms).unwrap();
    assert_eq!(back, dist);
}
