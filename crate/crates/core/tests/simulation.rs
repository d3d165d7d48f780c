use proptest::prelude::*;
use walkref::gnn::{check_label_independence, simulate_wl2};
use walkref::mpnn::{countable_simulator, integer_features, run_mpnn, InternedSimulator, RandomMpnn};
use walkref::oracle::{brute_force_partition, gen_random_labelled, partition_of};
use walkref::{refines, run_to_stable, LabelledGraph, Procedure};

fn graph(max_n: usize) -> impl Strategy<Value = LabelledGraph> {
    (1..=max_n, 1usize..=3, any::<u64>()).prop_map(|(n, a, seed)| gen_random_labelled(n, a, seed).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_mpnns_are_refined_by_walks(g in graph(6), ell in 2usize..=3, seed in any::<u64>()) {
        let tr = run_to_stable(&g, Procedure::Walk(ell), None).unwrap();
        let eta = run_mpnn(&RandomMpnn::new(ell, seed), integer_features(&g.labelling()), tr.rounds.len()).unwrap();
        for (t, fm) in eta.iter().enumerate() {
            prop_assert!(refines(tr.at(t), &fm.partition()).unwrap());
        }
    }

    #[test]
    fn exact_simulators_track_walks(g in graph(5), ell in 2usize..=3) {
        let l = g.labelling();
        let sim = countable_simulator(g.n(), ell).unwrap();
        let interned = InternedSimulator::new(ell);
        let rounds = run_mpnn(&sim, sim.lift(&l), 3).unwrap();
        let alt = run_mpnn(&interned, interned.lift(&l), 3).unwrap();
        for t in 0..=3 {
            let reference = brute_force_partition(&g, Procedure::Walk(ell), t);
            prop_assert_eq!(&partition_of(&rounds[t].partition()), &reference);
            prop_assert_eq!(&partition_of(&alt[t].partition()), &reference);
            prop_assert!(rounds[t].cells.iter().all(|&id| sim.is_natural(id)));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn gnn_layers_track_wl2(g in graph(4)) {
        let layers = simulate_wl2(&g.labelling(), 3).unwrap();
        for (t, a) in layers.iter().enumerate() {
            prop_assert!(check_label_independence(a));
            prop_assert_eq!(partition_of(&a.partition().unwrap()), brute_force_partition(&g, Procedure::Wl2, t));
        }
    }
}
