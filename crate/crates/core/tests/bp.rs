use proptest::prelude::*;
use rrn_core::bp::{
    all_different_messages, decode, solve_puzzle, BpConfig, Factors, Msg, PairwiseFactorGraph, Schedule,
    UnitFactorGraph,
};
use rrn_core::rng;
use rrn_core::sudoku::{self, Puzzle, Solution, SolveOutcome, CELLS};

const EASY: &str = "003020600900305001001806400008102900700000008006708200002609500800203009005010300";

fn easy() -> (Puzzle, Solution) {
    let p = Puzzle::parse(EASY).unwrap();
    match sudoku::solve(&p) {
        SolveOutcome::Solved(s) => (p, s),
        other => panic!("{other:?}"),
    }
}

fn config(factors: Factors, schedule: Schedule) -> BpConfig {
    BpConfig {
        factors,
        schedule,
        ..BpConfig::default()
    }
}

fn normalized(m: &Msg) -> bool {
    m.iter().all(|&p| p >= 0.0 && p.is_finite()) && (m.iter().sum::<f64>() - 1.0).abs() < 1e-9
}

/// Marginals of a not-equal chain by enumerating every assignment inside
/// the evidence support.
fn chain_brute_force(evidence: &[Msg]) -> Vec<Msg> {
    let n = evidence.len();
    let support: Vec<Vec<usize>> = evidence
        .iter()
        .map(|e| (0..9).filter(|&d| e[d] > 0.0).collect())
        .collect();
    let mut marg = vec![[0.0; 9]; n];
    let mut idx = vec![0usize; n];
    loop {
        let states: Vec<usize> = (0..n).map(|v| support[v][idx[v]]).collect();
        if states.windows(2).all(|w| w[0] != w[1]) {
            let w: f64 = (0..n).map(|v| evidence[v][states[v]]).product();
            for v in 0..n {
                marg[v][states[v]] += w;
            }
        }
        let mut v = 0;
        while v < n {
            idx[v] += 1;
            if idx[v] < support[v].len() {
                break;
            }
            idx[v] = 0;
            v += 1;
        }
        if v == n {
            break;
        }
    }
    for m in &mut marg {
        let z: f64 = m.iter().sum();
        m.iter_mut().for_each(|p| *p /= z);
    }
    marg
}

fn permutations(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, visit);
        items.swap(k, i);
    }
}

fn evidence_strategy(support: usize) -> impl Strategy<Value = Msg> {
    (prop::array::uniform9(0.05f64..1.0), prop::sample::subsequence((0..9).collect::<Vec<_>>(), support))
        .prop_map(|(w, keep)| core::array::from_fn(|d| if keep.contains(&d) { w[d] } else { 0.0 }))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn row_chain_matches_enumeration(
        evidence in prop::collection::vec(evidence_strategy(4), 9),
        random in any::<bool>(),
    ) {
        let pairs: Vec<(usize, usize)> = (0..8).map(|i| (i, i + 1)).collect();
        let mut g = PairwiseFactorGraph::new(&evidence, &pairs).unwrap();
        let cfg = BpConfig {
            schedule: if random { Schedule::Random } else { Schedule::Parallel },
            tolerance: 1e-14,
            ..BpConfig::default()
        };
        let r = g.iterate(&cfg, &mut rng::seeded(3)).unwrap();
        prop_assert!(r.converged);
        let exact = chain_brute_force(&evidence);
        for (a, b) in r.marginals.iter().zip(&exact) {
            for d in 0..9 {
                prop_assert!((a[d] - b[d]).abs() <= 1e-10, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn all_different_factor_matches_enumeration(q in prop::array::uniform9(evidence_strategy(6))) {
        let mut q = q;
        for m in &mut q {
            let z: f64 = m.iter().sum();
            m.iter_mut().for_each(|p| *p /= z);
        }
        let mut exact = [[0.0; 9]; 9];
        permutations(&mut (0..9).collect(), 0, &mut |perm| {
            let w: f64 = (0..9).map(|k| q[k][perm[k]]).product();
            for k in 0..9 {
                exact[k][perm[k]] += w;
            }
        });
        let Some(msgs) = all_different_messages(&q) else {
            prop_assert!(exact.iter().flatten().all(|&p| p == 0.0));
            return Ok(());
        };
        for k in 0..9 {
            prop_assert!(normalized(&msgs[k]));
            let belief: Vec<f64> = (0..9).map(|d| q[k][d] * msgs[k][d]).collect();
            let z: f64 = belief.iter().sum();
            let ze: f64 = exact[k].iter().sum();
            for d in 0..9 {
                prop_assert!((belief[d] / z - exact[k][d] / ze).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn messages_stay_normalized_every_sweep() {
    let (p, _) = easy();
    for schedule in [Schedule::Parallel, Schedule::Random] {
        let mut g = PairwiseFactorGraph::from_puzzle(&p);
        let one = BpConfig {
            schedule,
            max_sweeps: 1,
            damping: 0.3,
            ..BpConfig::default()
        };
        let mut r = rng::seeded(5);
        for _ in 0..15 {
            g.iterate(&one, &mut r).unwrap();
            assert!(g.var_to_factor().iter().all(normalized));
            assert!(g.factor_to_var().iter().all(normalized));
        }
    }
}

#[test]
fn solved_grid_converges_to_deltas() {
    let (_, s) = easy();
    let p = s.as_puzzle();
    for factors in [Factors::Pairwise, Factors::Units] {
        for schedule in [Schedule::Parallel, Schedule::Random] {
            let (r, out, ok) = solve_puzzle(&p, &config(factors, schedule), &mut rng::seeded(1)).unwrap();
            assert!(r.converged, "{factors:?} {schedule:?}");
            if schedule == Schedule::Parallel {
                assert!(r.sweeps <= 2, "{factors:?} {}", r.sweeps);
            }
            assert!(ok && out == s);
            for (m, &d) in r.marginals.iter().zip(s.cells()) {
                assert!((m[usize::from(d) - 1] - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn single_blank_is_the_remaining_digit() {
    let (_, s) = easy();
    for blank in [0, 40, 80] {
        let mut cells = *s.cells();
        cells[blank] = 0;
        let p = Puzzle::new(cells).unwrap();
        let SolveOutcome::Solved(oracle) = sudoku::solve(&p) else { panic!() };
        for factors in [Factors::Pairwise, Factors::Units] {
            let (r, out, ok) = solve_puzzle(&p, &config(factors, Schedule::Parallel), &mut rng::seeded(0)).unwrap();
            assert!(ok && out == oracle);
            let d = usize::from(oracle.cells()[blank]) - 1;
            assert!((r.marginals[blank][d] - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn easy_puzzle_is_solved_by_every_variant() {
    let (p, s) = easy();
    for factors in [Factors::Pairwise, Factors::Units] {
        for schedule in [Schedule::Parallel, Schedule::Random] {
            let (r, out, ok) = solve_puzzle(&p, &config(factors, schedule), &mut rng::seeded(2)).unwrap();
            assert!(ok && out == s, "{factors:?} {schedule:?}");
            assert!(!r.contradiction);
        }
    }
}

#[test]
fn contradictory_givens_are_flagged() {
    let mut cells = [0u8; CELLS];
    cells[0] = 5;
    cells[1] = 5;
    let p = Puzzle::new(cells).unwrap();
    let (r, _, ok) = solve_puzzle(&p, &BpConfig::default(), &mut rng::seeded(0)).unwrap();
    assert!(r.contradiction && !ok);
}

#[test]
fn unit_graph_has_27_factors() {
    let g = UnitFactorGraph::from_puzzle(&Puzzle::new([0; CELLS]).unwrap());
    assert_eq!(g.num_factors(), 27);
    let (m, _) = g.marginals();
    let (s, ok) = decode(&m, &Puzzle::new([0; CELLS]).unwrap());
    assert!(s.cells().iter().all(|&d| d == 1) && !ok);
}
