use std::collections::HashSet;

use proptest::prelude::*;
use rrn_core::nn::ParamSet;
use rrn_core::pretty::*;
use rrn_core::rng;
use rrn_core::Tape;

fn hand_scene(points: [[f64; 2]; OBJECTS]) -> Scene {
    Scene {
        objects: std::array::from_fn(|i| Object {
            position: points[i],
            color: i as u8,
            marker: ((i + 3) % OBJECTS) as u8,
        }),
    }
}

fn collinear() -> Scene {
    let xs = [0.0, 0.10, 0.25, 0.45, 0.70, 2.0, 2.6, 3.3];
    hand_scene(std::array::from_fn(|i| [xs[i], 0.0]))
}

/// Jump simulation by sorting every unvisited object by squared distance.
fn brute_force_end(scene: &Scene, start: usize, jumps: usize) -> usize {
    let mut visited = vec![start];
    for _ in 0..jumps {
        let cur = scene.objects[*visited.last().unwrap()].position;
        let mut cands: Vec<(f64, usize)> = (0..OBJECTS)
            .filter(|j| !visited.contains(j))
            .map(|j| {
                let p = scene.objects[j].position;
                ((p[0] - cur[0]).powi(2) + (p[1] - cur[1]).powi(2), j)
            })
            .collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0));
        visited.push(cands[0].1);
    }
    *visited.last().unwrap()
}

fn brute_force_answer(scene: &Scene, q: Question) -> u8 {
    let s = q.start % 8;
    let start = if q.start < 8 {
        scene.objects.iter().position(|o| o.color == s)
    } else {
        scene.objects.iter().position(|o| o.marker == s)
    }
    .unwrap();
    let end = &scene.objects[brute_force_end(scene, start, q.jumps.into())];
    if q.start < 8 {
        end.marker
    } else {
        end.color
    }
}

fn all_answers(scene: &Scene) -> Vec<u8> {
    emit_questions(0, scene).iter().map(|r| r.answer).collect()
}

/// Similarity transform without a bounds check.
fn similarity(scene: &Scene, angle: f64, scale: f64, shift: [f64; 2]) -> Scene {
    let (s, c) = angle.sin_cos();
    let mut out = *scene;
    for o in &mut out.objects {
        let [x, y] = o.position;
        o.position = [scale * (c * x - s * y) + shift[0], scale * (s * x + c * y) + shift[1]];
    }
    out
}

#[test]
fn collinear_two_jumps() {
    let s = collinear();
    assert_eq!(jump_path(&s, 0, 2), [0, 1, 2]);
    assert_eq!(brute_force_end(&s, 0, 2), 2);
    assert_eq!(answer(&s, Question::new(0, 2).unwrap()), s.objects[2].marker);
    let rotated = similarity(&s, std::f64::consts::FRAC_PI_2, 1.0, [0.0, 0.0]);
    assert_eq!(answer(&rotated, Question::new(0, 2).unwrap()), s.objects[2].marker);
}

#[test]
fn generated_scenes_satisfy_invariants() {
    let mut r = rng::seeded(11);
    for _ in 0..200 {
        let s = generate_scene(&mut r);
        assert!(s.min_separation() >= SEPARATION && s.min_tie_gap() >= TIE_GAP);
        let mut colors: Vec<u8> = s.objects.iter().map(|o| o.color).collect();
        let mut markers: Vec<u8> = s.objects.iter().map(|o| o.marker).collect();
        colors.sort_unstable();
        markers.sort_unstable();
        assert_eq!(colors, (0..8).collect::<Vec<_>>());
        assert_eq!(markers, (0..8).collect::<Vec<_>>());
    }
    assert_ne!(generate_scene(&mut rng::seeded(1)), generate_scene(&mut rng::seeded(2)));
}

#[test]
fn emitted_questions_are_complete_and_verified() {
    let mut r = rng::seeded(3);
    for id in 0..50 {
        let s = generate_scene(&mut r);
        let recs = emit_questions(id, &s);
        assert_eq!(recs.len(), 128);
        let keys: HashSet<Question> = recs.iter().map(|r| r.question).collect();
        assert_eq!(keys.len(), 128);
        for rec in &recs {
            assert_eq!(rec.answer, brute_force_answer(&s, rec.question));
            let label = rec.question.head_index(rec.answer);
            let half = if rec.question.starts_from_color() { 8..16 } else { 0..8 };
            assert!(half.contains(&label));
        }
    }
}

#[test]
fn asymmetry_witness_exists() {
    let mut r = rng::seeded(5);
    let found = (0..100).any(|_| {
        let s = generate_scene(&mut r);
        (0..OBJECTS).any(|x| {
            (1..=MAX_JUMPS).any(|n| {
                let y = brute_force_end(&s, x, n);
                brute_force_end(&s, y, n) != x
            })
        })
    });
    assert!(found);
}

#[test]
fn graph_encoding_shapes() {
    let s = generate_scene(&mut rng::seeded(8));
    let topo = rrn_core::graph::Topology::fully_connected(OBJECTS);
    assert_eq!((topo.num_nodes(), topo.num_edges()), (8, 56));
    let d = edge_distances(&s, &topo);
    let edges: Vec<(usize, usize)> = topo.edges().collect();
    for (k, &(i, j)) in edges.iter().enumerate() {
        let back = edges.iter().position(|&e| e == (j, i)).unwrap();
        assert_eq!(d[k], d[back]);
    }
    let q = Question::new(9, 3).unwrap();
    assert_eq!(node_inputs(&s, q).len(), 8 * 42);
    let flat = mlp_input(&s, q);
    assert_eq!(flat.len(), 232);
    assert_eq!(flat[144 + 8], s.distance(1, 0));
    assert_eq!(flat[144 + 9], 0.0);
}

#[test]
fn identity_transform_is_a_no_op() {
    let s = generate_scene(&mut rng::seeded(2));
    let t = s.transform(0.0, 1.0).unwrap();
    for (a, b) in s.objects.iter().zip(&t.objects) {
        assert!((a.position[0] - b.position[0]).abs() < 1e-15 && (a.position[1] - b.position[1]).abs() < 1e-15);
    }
}

#[test]
fn splits_are_disjoint() {
    let sp = generate_splits(30, 5, 5, 1);
    let ids: HashSet<u64> = sp.train.iter().chain(&sp.valid).chain(&sp.test).map(|e| e.0).collect();
    assert_eq!(ids.len(), 40);
}

#[test]
fn single_step_network_matches_first_step() {
    let build = |config| {
        let mut params = ParamSet::new();
        let m = PrettyRrn::new(&mut params, &mut rng::seeded(4), "p", config).unwrap();
        (params, m)
    };
    let (pa, rrn) = build(PrettyConfig::paper());
    let (pb, rn) = build(PrettyConfig::relational_network());
    assert_eq!(pa.num_scalars(), pb.num_scalars());
    let mut r = rng::seeded(6);
    let batch: Vec<Sample> = (0..4)
        .map(|i| Sample::new(generate_scene(&mut r), Question::new(i * 3, i).unwrap()))
        .collect();
    let run = |params: &ParamSet, m: &PrettyRrn| {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let out = m.forward(&mut tape, &bound, &batch).unwrap();
        (tape.value(out.logits[0]).to_vec(), tape.scalar(out.losses[0]))
    };
    assert_eq!(run(&pa, &rrn), run(&pb, &rn));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn answers_invariant_under_similarity(seed in 0u64..10_000, angle in 0.0f64..6.283, scale in 0.1f64..5.0,
                                         dx in -3.0f64..3.0, dy in -3.0f64..3.0) {
        let s = generate_scene(&mut rng::seeded(seed));
        prop_assert_eq!(all_answers(&s), all_answers(&similarity(&s, angle, scale, [dx, dy])));
    }

    #[test]
    fn augmentation_keeps_answers_and_bounds(seed in 0u64..10_000) {
        let mut r = rng::seeded(seed);
        let s = generate_scene(&mut r);
        let a = augment(&s, &mut r);
        prop_assert!(a.objects.iter().all(|o| o.position.iter().all(|p| (0.0..=1.0).contains(p))));
        prop_assert_eq!(all_answers(&s), all_answers(&a));
        for (x, y) in s.objects.iter().zip(&a.objects) {
            prop_assert_eq!((x.color, x.marker), (y.color, y.marker));
        }
    }

    #[test]
    fn jump_paths_never_revisit(seed in 0u64..10_000, start in 0usize..8, jumps in 0usize..8) {
        let s = generate_scene(&mut rng::seeded(seed));
        let p = jump_path(&s, start, jumps);
        prop_assert_eq!(p.len(), jumps + 1);
        prop_assert_eq!(p.iter().collect::<HashSet<_>>().len(), jumps + 1);
        prop_assert_eq!(*p.last().unwrap(), brute_force_end(&s, start, jumps));
    }
}
