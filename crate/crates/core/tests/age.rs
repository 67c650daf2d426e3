use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;
use rrn_core::age::*;
use rrn_core::nn::ParamSet;
use rrn_core::{rng, Tape};

fn find(parent: &mut [usize], v: usize) -> usize {
    if parent[v] != v {
        let r = find(parent, parent[v]);
        parent[v] = r;
    }
    parent[v]
}

fn spans(tree: &Tree) -> bool {
    let mut parent: Vec<usize> = (0..PERSONS).collect();
    for &(a, b) in &tree.edges {
        let (ra, rb) = (find(&mut parent, a.into()), find(&mut parent, b.into()));
        if ra == rb {
            return false;
        }
        parent[ra] = rb;
    }
    true
}

/// Ages recovered from the facts alone: start at the anchor, walk the
/// relative facts outward adding or subtracting magnitudes.
fn reconstruct(inst: &AgeInstance) -> [Option<i32>; PERSONS] {
    let mut age = [None; PERSONS];
    let anchor = inst.facts.iter().find(|f| f.sign == 0).unwrap();
    age[usize::from(anchor.a)] = Some(i32::from(anchor.magnitude));
    for _ in 0..PERSONS {
        for f in inst.facts.iter().filter(|f| f.sign != 0) {
            let diff = i32::from(f.sign) * i32::from(f.magnitude);
            let (a, b) = (usize::from(f.a), usize::from(f.b));
            match (age[a], age[b]) {
                (Some(x), None) => age[b] = Some(x - diff),
                (None, Some(y)) => age[a] = Some(y + diff),
                _ => {}
            }
        }
    }
    age
}

#[test]
fn enumeration_is_exhaustive_and_distinct() {
    let trees = enumerate_trees();
    assert_eq!(trees.len(), 262_144);
    assert!(trees.iter().all(spans));
    assert_eq!(trees.iter().collect::<HashSet<_>>().len(), 262_144);
    let mut hops = BTreeMap::new();
    let mut r = rng::seeded(0);
    for t in &trees {
        *hops.entry(sample_instance(t, &mut r).hops).or_insert(0usize) += 1;
    }
    println!("hop histogram over one instance per tree: {hops:?}");
    assert!(hops.keys().all(|&h| h < 8));
}

#[test]
fn split_is_ninety_ten_and_disjoint() {
    let (train, test) = split_trees(&mut rng::seeded(3));
    assert_eq!((train.len(), test.len()), (235_929, 26_215));
    let a: HashSet<u32> = train.into_iter().collect();
    assert!(test.iter().all(|t| !a.contains(t)));
}

#[test]
fn worked_example() {
    let path = prufer_decode(&[1, 2, 3, 4, 5, 6]);
    let inst = instance_from(&path, [20, 24, 18, 30, 31, 32, 33, 34], 0, 2);
    assert_eq!((inst.answer, inst.hops), (18, 2));
    assert_eq!(inst.facts[0], Fact { a: 0, b: 1, sign: -1, magnitude: 4 });
    assert_eq!(inst.facts[1], Fact { a: 1, b: 2, sign: 1, magnitude: 6 });
    assert_eq!(reconstruct(&inst)[2], Some(20 + 4 - 6));
}

#[test]
fn reconstruction_matches_ages() {
    let trees = enumerate_trees();
    let mut r = rng::seeded(9);
    for k in 0..10_000 {
        let inst = sample_instance(&trees[(k * 7919) % TREE_COUNT], &mut r);
        assert_eq!(inst.facts.iter().filter(|f| f.sign == 0).count(), 1);
        let rec = reconstruct(&inst);
        for p in 0..PERSONS {
            assert_eq!(rec[p], Some(i32::from(inst.ages[p])));
        }
        assert_eq!(rec[usize::from(inst.question)], Some(i32::from(inst.answer)));
    }
}

#[test]
fn graph_output_ignores_fact_order() {
    let config = AgeConfig {
        hidden: 16,
        steps: 2,
        relu_layers: 1,
        readout_keep: Some(0.5),
    };
    let mut params = ParamSet::new();
    let model = AgeModel::new(&mut params, &mut rng::seeded(1), "age", config).unwrap();
    let mut r = rng::seeded(2);
    let inst = sample_instance(&prufer_decode(&prufer_at(4242)), &mut r);
    let mut shuffled = inst;
    shuffled.facts.reverse();
    shuffled.facts.swap(0, 3);
    let run = |i: AgeInstance| {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let out = model.forward(&mut tape, &bound, &[i]).unwrap();
        out.logits.iter().flat_map(|&l| tape.value(l).to_vec()).collect::<Vec<f64>>()
    };
    let (a, b) = (run(inst), run(shuffled));
    assert_eq!(a.len(), 2 * AGES);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-12);
    }
}

proptest! {
    #[test]
    fn prufer_round_trip(seq in prop::array::uniform6(0u8..8)) {
        let t = prufer_decode(&seq);
        prop_assert!(spans(&t));
        prop_assert_eq!(prufer_encode(&t).unwrap(), seq);
    }

    #[test]
    fn answer_is_signed_path_sum(index in 0usize..TREE_COUNT, seed in any::<u64>()) {
        let inst = sample_instance(&prufer_decode(&prufer_at(index)), &mut rng::seeded(seed));
        let rec = reconstruct(&inst);
        prop_assert_eq!(rec[usize::from(inst.question)], Some(i32::from(inst.answer)));
        prop_assert!(inst.facts.iter().filter(|f| f.sign != 0).all(|f| f.magnitude > 0));
        let d = tree_distances(&inst.tree, inst.anchor.into());
        prop_assert_eq!(inst.hops, d[usize::from(inst.question)]);
    }
}
