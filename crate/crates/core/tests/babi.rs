use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rrn_core::babi::*;
use rrn_core::nn::ParamSet;
use rrn_core::{rng, Tape};

const SAMPLE: &str = include_str!("../../rrn/data/babi_sample_qa1.txt");

fn small(vocab: usize) -> BabiConfig {
    BabiConfig {
        hidden: 12,
        sentence_units: 6,
        relu_layers: 1,
        ..BabiConfig::paper(vocab)
    }
}

fn logits(params: &ParamSet, model: &BabiModel, batch: &[BabiSample], offsets: &[usize]) -> Vec<f64> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let out = model.forward(&mut tape, &bound, batch, offsets).unwrap();
    out.logits.iter().flat_map(|&l| tape.value(l).to_vec()).collect()
}

fn fingerprint(samples: &[RawSample]) -> u64 {
    let mut h = DefaultHasher::new();
    samples.hash(&mut h);
    h.finish()
}

#[test]
fn bundled_sample_parses() {
    let raw = parse_babi(SAMPLE, 1, "babi_sample_qa1.txt").unwrap();
    assert_eq!(raw.len(), 50);
    assert!(raw.iter().all(|s| !s.facts.is_empty() && s.facts.len() <= MAX_FACTS));
    assert_eq!(raw.iter().map(|s| s.facts.len()).max(), Some(20));
    let again = parse_babi(SAMPLE, 1, "babi_sample_qa1.txt").unwrap();
    assert_eq!(fingerprint(&raw), fingerprint(&again));
    let vocab = Vocabulary::build(&raw);
    for s in &raw {
        let e = vocab.encode(s).unwrap();
        assert_eq!(vocab.word(e.answer), Some(s.answer.as_str()));
        assert_eq!(e.positions, (1..=s.facts.len()).collect::<Vec<_>>());
    }
}

#[test]
fn keeps_the_last_twenty_facts() {
    let mut text = String::new();
    for i in 1..=25 {
        text.push_str(&format!("{i} Fact number{i} here.\n"));
    }
    text.push_str("26 What is it?\tnumber25\t25\n");
    let s = parse_babi(&text, 3, "t").unwrap();
    assert_eq!(s[0].facts.len(), 20);
    assert_eq!(s[0].facts[0], tokenize("Fact number6 here."));
    assert_eq!(s[0].facts[19], tokenize("Fact number25 here."));
}

#[test]
fn offsets_shift_positions_uniformly() {
    let mut r = rng::seeded(1);
    for _ in 0..1000 {
        let o = sample_offset(&mut r);
        assert!((1..=MAX_OFFSET).contains(&o));
        let slots: Vec<usize> = (1..=MAX_FACTS).map(|p| position_slot(p, o)).collect();
        assert!(slots.iter().all(|&s| (1..POSITION_WIDTH).contains(&s)));
        assert!(slots.windows(2).all(|w| w[1] == w[0] + 1));
    }
}

#[test]
fn single_fact_graph_runs() {
    let raw = parse_babi("1 Daniel journeyed to the garden.\n2 Where is Daniel?\tgarden\t1\n", 1, "t").unwrap();
    let vocab = Vocabulary::build(&raw);
    let mut params = ParamSet::new();
    let model = BabiModel::new(&mut params, &mut rng::seeded(0), "b", small(vocab.len())).unwrap();
    let s = vocab.encode(&raw[0]).unwrap();
    let l = logits(&params, &model, &[s.clone()], &[4]);
    assert_eq!(l.len(), 3 * vocab.len());
    assert!(l.iter().all(|v| v.is_finite()));
    let p = model.predict_steps(&params, &[s], &[4], 3).unwrap();
    assert_eq!(p.len(), 4);
}

#[test]
fn deterministic_and_invariant_to_fact_order() {
    let raw = parse_babi(SAMPLE, 1, "s").unwrap();
    let vocab = Vocabulary::build(&raw);
    let mut params = ParamSet::new();
    let model = BabiModel::new(&mut params, &mut rng::seeded(2), "b", small(vocab.len())).unwrap();
    let batch: Vec<BabiSample> = raw[..6].iter().map(|s| vocab.encode(s).unwrap()).collect();
    let offsets = [3, 7, 1, 20, 11, 5];
    let base = logits(&params, &model, &batch, &offsets);
    assert_eq!(base, logits(&params, &model, &batch, &offsets));
    let permuted: Vec<BabiSample> = batch
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.facts.reverse();
            s.positions.reverse();
            s
        })
        .collect();
    let other = logits(&params, &model, &permuted, &offsets);
    for (a, b) in base.iter().zip(&other) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

#[test]
fn ablations_change_the_architecture() {
    let full = small(30);
    let count = |c: BabiConfig| {
        let mut p = ParamSet::new();
        BabiModel::new(&mut p, &mut rng::seeded(0), "b", c).unwrap();
        p.num_scalars()
    };
    let base = count(full.clone());
    let linear = BabiConfig {
        ablation: Ablation {
            linear_encoder: true,
            ..Ablation::default()
        },
        ..full.clone()
    };
    let separate = BabiConfig {
        ablation: Ablation {
            separate_question: true,
            ..Ablation::default()
        },
        ..full.clone()
    };
    assert_ne!(count(linear), base);
    assert_eq!(count(separate), base - 6 * 12);
    let no_dropout = BabiConfig {
        ablation: Ablation {
            no_dropout: true,
            ..Ablation::default()
        },
        ..full
    };
    assert!(no_dropout.rrn_config().readout_dropout.iter().all(Option::is_none));
}

#[test]
fn bad_inputs_are_rejected() {
    let raw = parse_babi(SAMPLE, 1, "s").unwrap();
    let vocab = Vocabulary::build(&raw);
    let mut params = ParamSet::new();
    let model = BabiModel::new(&mut params, &mut rng::seeded(2), "b", small(vocab.len())).unwrap();
    let s = vocab.encode(&raw[0]).unwrap();
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    assert!(model.forward(&mut tape, &bound, &[s.clone()], &[0]).is_err());
    assert!(model.forward(&mut tape, &bound, &[s.clone()], &[]).is_err());
    let mut empty = s;
    empty.facts.clear();
    empty.positions.clear();
    assert!(model.forward(&mut tape, &bound, &[empty], &[1]).is_err());
}
