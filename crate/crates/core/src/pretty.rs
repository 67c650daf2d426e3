//! Pretty-CLEVR: scenes of eight objects with unique colors and markers,
//! "starting at X, which object is N jumps away?" questions, the state
//! encodings consumed by the relational models and the MLP baseline.

use alloc::format;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::{Targets, Topology};
use crate::math;
use crate::nn::{Bound, Mlp, MlpSpec, ParamSet};
use crate::rng::{self, Rng};
use crate::rrn::{self, ReadoutScope, Rrn, RrnConfig, StepOutputs};
use crate::tape::{Tape, Var};

pub const OBJECTS: usize = 8;
pub const MAX_JUMPS: usize = 7;
pub const QUESTIONS_PER_SCENE: usize = 2 * OBJECTS * (MAX_JUMPS + 1);
pub const SEPARATION: f64 = 0.02;
pub const TIE_GAP: f64 = 1e-4;
pub const OBJECT_WIDTH: usize = 2 + 2 * OBJECTS;
pub const QUESTION_WIDTH: usize = 2 * OBJECTS + MAX_JUMPS + 1;
pub const NODE_INPUT: usize = OBJECT_WIDTH + QUESTION_WIDTH;
pub const MLP_INPUT: usize = OBJECTS * OBJECT_WIDTH + OBJECTS * OBJECTS + QUESTION_WIDTH;
/// Output head: colors at 0..8, markers at 8..16.
pub const CLASSES: usize = 2 * OBJECTS;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Object {
    pub position: [f64; 2],
    pub color: u8,
    pub marker: u8,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scene {
    pub objects: [Object; OBJECTS],
}

/// `start` 0..8 names a color, 8..16 a marker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Question {
    pub start: u8,
    pub jumps: u8,
}

impl Question {
    pub fn new(start: u8, jumps: u8) -> Result<Self> {
        if usize::from(start) >= CLASSES {
            return Err(Error::bounds("start attribute", start.into(), CLASSES));
        }
        if usize::from(jumps) > MAX_JUMPS {
            return Err(Error::bounds("jumps", jumps.into(), MAX_JUMPS + 1));
        }
        Ok(Question { start, jumps })
    }

    pub fn starts_from_color(&self) -> bool {
        usize::from(self.start) < OBJECTS
    }

    /// Head index for an answer label: markers when the start is a color,
    /// colors otherwise.
    pub fn head_index(&self, answer: u8) -> usize {
        if self.starts_from_color() {
            OBJECTS + usize::from(answer)
        } else {
            usize::from(answer)
        }
    }

    /// Inverse of [`Question::head_index`]; `None` when the index lies in
    /// the wrong half.
    pub fn answer_from_head(&self, index: usize) -> Option<u8> {
        match (self.starts_from_color(), index.checked_sub(OBJECTS)) {
            (true, Some(a)) if a < OBJECTS => Some(a as u8),
            (false, None) => Some(index as u8),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QaRecord {
    pub scene: u64,
    pub question: Question,
    pub answer: u8,
}

fn distance(a: &Object, b: &Object) -> f64 {
    math::hypot(a.position[0] - b.position[0], a.position[1] - b.position[1])
}

impl Scene {
    /// Index of the object carrying the start attribute.
    pub fn start_object(&self, start: u8) -> usize {
        let s = start % OBJECTS as u8;
        let found = if usize::from(start) < OBJECTS {
            self.objects.iter().position(|o| o.color == s)
        } else {
            self.objects.iter().position(|o| o.marker == s)
        };
        found.expect("colors and markers are permutations")
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        distance(&self.objects[i], &self.objects[j])
    }

    /// Smallest pairwise distance.
    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..OBJECTS {
            for j in i + 1..OBJECTS {
                best = best.min(self.distance(i, j));
            }
        }
        best
    }

    /// Smallest gap between the two nearest unvisited objects over every
    /// hop of every start's jump path. Infinite when no hop has a choice.
    pub fn min_tie_gap(&self) -> f64 {
        let mut best = f64::INFINITY;
        for start in 0..OBJECTS {
            let mut visited = [false; OBJECTS];
            let mut cur = start;
            visited[cur] = true;
            for _ in 0..OBJECTS - 1 {
                let (mut first, mut second) = ((f64::INFINITY, 0), f64::INFINITY);
                for j in (0..OBJECTS).filter(|&j| !visited[j]) {
                    let d = self.distance(cur, j);
                    if d < first.0 {
                        second = first.0;
                        first = (d, j);
                    } else if d < second {
                        second = d;
                    }
                }
                best = best.min(second - first.0);
                cur = first.1;
                visited[cur] = true;
            }
        }
        best
    }

    pub fn is_valid(&self) -> bool {
        let perm = |f: fn(&Object) -> u8| {
            let mut seen = [false; OBJECTS];
            self.objects.iter().all(|o| {
                let k = usize::from(f(o));
                k < OBJECTS && !core::mem::replace(&mut seen[k], true)
            })
        };
        let in_box = self
            .objects
            .iter()
            .all(|o| o.position.iter().all(|&c| (0.0..=1.0).contains(&c)));
        perm(|o| o.color)
            && perm(|o| o.marker)
            && in_box
            && self.min_separation() >= SEPARATION
            && self.min_tie_gap() >= TIE_GAP
    }

    /// Rotation by `angle` and scaling by `scale`, both about (0.5, 0.5).
    /// `None` if a point leaves the unit square.
    pub fn transform(&self, angle: f64, scale: f64) -> Option<Scene> {
        let (s, c) = (math::sin(angle), math::cos(angle));
        let mut out = *self;
        for o in &mut out.objects {
            let (x, y) = (o.position[0] - 0.5, o.position[1] - 0.5);
            o.position = [0.5 + scale * (c * x - s * y), 0.5 + scale * (s * x + c * y)];
            if o.position.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return None;
            }
        }
        Some(out)
    }
}

/// Uniform positions, rejected until the separation and tie thresholds
/// hold, with random color and marker permutations.
pub fn generate_scene(rng: &mut Rng) -> Scene {
    loop {
        let mut colors: [u8; OBJECTS] = core::array::from_fn(|i| i as u8);
        let mut markers = colors;
        colors.shuffle(rng);
        markers.shuffle(rng);
        let scene = Scene {
            objects: core::array::from_fn(|i| Object {
                position: [rng.gen::<f64>(), rng.gen::<f64>()],
                color: colors[i],
                marker: markers[i],
            }),
        };
        if scene.is_valid() {
            return scene;
        }
    }
}

/// Objects visited from `start` in `jumps` moves to the nearest unvisited
/// object, the start included.
pub fn jump_path(scene: &Scene, start: usize, jumps: usize) -> Vec<usize> {
    let mut visited = [false; OBJECTS];
    let mut path = vec![start];
    visited[start] = true;
    let mut cur = start;
    for _ in 0..jumps.min(OBJECTS - 1) {
        let next = (0..OBJECTS)
            .filter(|&j| !visited[j])
            .min_by(|&a, &b| scene.distance(cur, a).total_cmp(&scene.distance(cur, b)))
            .expect("an unvisited object remains");
        visited[next] = true;
        path.push(next);
        cur = next;
    }
    path
}

/// The marker of the final object when the start is a color, its color
/// otherwise.
pub fn answer(scene: &Scene, q: Question) -> u8 {
    let path = jump_path(scene, scene.start_object(q.start), q.jumps.into());
    let end = &scene.objects[*path.last().expect("path holds the start")];
    if q.starts_from_color() {
        end.marker
    } else {
        end.color
    }
}

/// All 16 starts times 8 jump counts.
pub fn emit_questions(scene_id: u64, scene: &Scene) -> Vec<QaRecord> {
    let mut out = Vec::with_capacity(QUESTIONS_PER_SCENE);
    for start in 0..CLASSES as u8 {
        for jumps in 0..=MAX_JUMPS as u8 {
            let question = Question { start, jumps };
            out.push(QaRecord {
                scene: scene_id,
                question,
                answer: answer(scene, question),
            });
        }
    }
    out
}

/// Random rotation about the center and scaling in [0.5, 1], resampled
/// until every point stays inside the unit square.
pub fn augment(scene: &Scene, rng: &mut Rng) -> Scene {
    loop {
        let angle = rng.gen_range(0.0..2.0 * PI);
        let scale = rng.gen_range(0.5..=1.0);
        if let Some(s) = scene.transform(angle, scale) {
            return s;
        }
    }
}

/// Scenes with ids; ids never repeat across splits.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SceneSplits {
    pub train: Vec<(u64, Scene)>,
    pub valid: Vec<(u64, Scene)>,
    pub test: Vec<(u64, Scene)>,
}

/// Train, validation and test scenes, each split drawn from its own
/// stream of `seed`.
pub fn generate_splits(train: usize, valid: usize, test: usize, seed: u64) -> SceneSplits {
    let mut next_id = 0u64;
    let mut make = |n: usize, stream: u64| {
        let mut r = rng::stream(seed, stream);
        (0..n)
            .map(|_| {
                next_id += 1;
                (next_id - 1, generate_scene(&mut r))
            })
            .collect::<Vec<_>>()
    };
    SceneSplits {
        train: make(train, 0),
        valid: make(valid, 1),
        test: make(test, 2),
    }
}

/// `concat(position, onehot8(color), onehot8(marker))`.
pub fn object_vector(o: &Object) -> [f64; OBJECT_WIDTH] {
    let mut v = [0.0; OBJECT_WIDTH];
    v[..2].copy_from_slice(&o.position);
    v[2 + usize::from(o.color)] = 1.0;
    v[2 + OBJECTS + usize::from(o.marker)] = 1.0;
    v
}

/// `concat(onehot16(start), onehot8(jumps))`.
pub fn question_vector(q: Question) -> [f64; QUESTION_WIDTH] {
    let mut v = [0.0; QUESTION_WIDTH];
    v[usize::from(q.start)] = 1.0;
    v[CLASSES + usize::from(q.jumps)] = 1.0;
    v
}

/// Rows `concat(o_i, q)` for each object, `8 x 42`.
pub fn node_inputs(scene: &Scene, q: Question) -> Vec<f64> {
    let qv = question_vector(q);
    let mut out = Vec::with_capacity(OBJECTS * NODE_INPUT);
    for o in &scene.objects {
        out.extend_from_slice(&object_vector(o));
        out.extend_from_slice(&qv);
    }
    out
}

/// Euclidean distance per directed edge of `topology`, as a column.
pub fn edge_distances(scene: &Scene, topology: &Topology) -> Vec<f64> {
    topology.edges().map(|(i, j)| scene.distance(i, j)).collect()
}

/// Flat state for the MLP baseline: 8 object vectors, the 64 pairwise
/// distances (row-major, zero diagonal) and the question.
pub fn mlp_input(scene: &Scene, q: Question) -> [f64; MLP_INPUT] {
    let mut v = [0.0; MLP_INPUT];
    for (i, o) in scene.objects.iter().enumerate() {
        v[i * OBJECT_WIDTH..(i + 1) * OBJECT_WIDTH].copy_from_slice(&object_vector(o));
    }
    let base = OBJECTS * OBJECT_WIDTH;
    for i in 0..OBJECTS {
        for j in 0..OBJECTS {
            v[base + i * OBJECTS + j] = scene.distance(i, j);
        }
    }
    v[MLP_INPUT - QUESTION_WIDTH..].copy_from_slice(&question_vector(q));
    v
}

/// One line per record:
/// `scene x,y;...;x,y colors markers start jumps answer` with colors and
/// markers as 8-digit strings.
pub fn record_to_line(scene: &Scene, r: &QaRecord) -> String {
    let positions: Vec<String> = scene
        .objects
        .iter()
        .map(|o| format!("{},{}", o.position[0], o.position[1]))
        .collect();
    let digits = |f: fn(&Object) -> u8| scene.objects.iter().map(|o| char::from(b'0' + f(o))).collect::<String>();
    format!(
        "{} {} {} {} {} {} {}",
        r.scene,
        positions.join(";"),
        digits(|o| o.color),
        digits(|o| o.marker),
        r.question.start,
        r.question.jumps,
        r.answer
    )
}

pub fn parse_line(line: &str) -> Result<(Scene, QaRecord)> {
    let bad = || Error::parse(format!("record {line:?}"), "malformed Pretty-CLEVR record");
    let fields: Vec<&str> = line.split_whitespace().collect();
    let [id, pos, colors, markers, start, jumps, ans] = fields[..] else {
        return Err(bad());
    };
    let positions: Vec<[f64; 2]> = pos
        .split(';')
        .map(|p| {
            let (x, y) = p.split_once(',').ok_or_else(bad)?;
            Ok([x.parse().map_err(|_| bad())?, y.parse().map_err(|_| bad())?])
        })
        .collect::<Result<_>>()?;
    let digits = |s: &str| -> Result<Vec<u8>> {
        s.bytes()
            .map(|b| b.checked_sub(b'0').filter(|&d| usize::from(d) < OBJECTS).ok_or_else(bad))
            .collect()
    };
    let (colors, markers) = (digits(colors)?, digits(markers)?);
    if positions.len() != OBJECTS || colors.len() != OBJECTS || markers.len() != OBJECTS {
        return Err(bad());
    }
    let scene = Scene {
        objects: core::array::from_fn(|i| Object {
            position: positions[i],
            color: colors[i],
            marker: markers[i],
        }),
    };
    if !scene.is_valid() {
        return Err(Error::parse(format!("scene {id}"), "scene violates the separation or tie thresholds"));
    }
    let question = Question::new(start.parse().map_err(|_| bad())?, jumps.parse().map_err(|_| bad())?)?;
    let record = QaRecord {
        scene: id.parse().map_err(|_| bad())?,
        question,
        answer: ans.parse().map_err(|_| bad())?,
    };
    if usize::from(record.answer) >= OBJECTS {
        return Err(bad());
    }
    Ok((scene, record))
}

/// A question posed on a scene with its head label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub scene: Scene,
    pub question: Question,
    pub label: usize,
}

impl Sample {
    pub fn new(scene: Scene, question: Question) -> Self {
        Sample {
            scene,
            question,
            label: question.head_index(answer(&scene, question)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrettyConfig {
    pub hidden: usize,
    pub steps: usize,
    pub relu_layers: usize,
    pub readout_keep: f64,
}

impl PrettyConfig {
    /// 128 units, one ReLU layer plus a linear layer per MLP, four steps.
    pub fn paper() -> Self {
        PrettyConfig {
            hidden: 128,
            steps: 4,
            relu_layers: 1,
            readout_keep: 0.5,
        }
    }

    /// The single-step relational network baseline.
    pub fn relational_network() -> Self {
        PrettyConfig {
            steps: 1,
            ..PrettyConfig::paper()
        }
    }

    pub fn encoder_spec(&self) -> MlpSpec {
        MlpSpec::uniform(NODE_INPUT, self.hidden, self.relu_layers, self.hidden)
    }

    pub fn rrn_config(&self) -> RrnConfig {
        let mut c = RrnConfig::new(self.hidden, self.steps, self.relu_layers, CLASSES);
        c.edge_width = 1;
        c.include_prev_hidden = false;
        c.scope = ReadoutScope::PerGraph;
        if self.relu_layers > 0 {
            c.readout_dropout[self.relu_layers - 1] = Some(self.readout_keep);
        }
        c
    }

    pub fn num_params(&self) -> usize {
        self.encoder_spec().num_params() + self.rrn_config().num_params()
    }
}

/// Encoder `x_i = MLP(concat(o_i, q))` followed by the recurrent
/// relational network over the fully connected 8-object graph with
/// distance edge attributes and a whole-graph readout.
#[derive(Clone, Debug)]
pub struct PrettyRrn {
    config: PrettyConfig,
    encoder: Mlp,
    rrn: Rrn,
    topology: Topology,
}

impl PrettyRrn {
    pub fn new(params: &mut ParamSet, rng: &mut Rng, name: &str, config: PrettyConfig) -> Result<Self> {
        let encoder = Mlp::new(params, rng, &format!("{name}.encoder"), config.encoder_spec())?;
        let rrn = Rrn::new(params, rng, name, config.rrn_config())?;
        Ok(PrettyRrn {
            config,
            encoder,
            rrn,
            topology: Topology::fully_connected(OBJECTS),
        })
    }

    pub fn config(&self) -> &PrettyConfig {
        &self.config
    }

    pub fn rrn(&self) -> &Rrn {
        &self.rrn
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    fn inputs(&self, tape: &mut Tape, bound: &Bound, batch: &[Sample]) -> Result<(Topology, Var, Var)> {
        let topo = self.topology.repeat(batch.len());
        let mut raw = Vec::with_capacity(batch.len() * OBJECTS * NODE_INPUT);
        let mut dist = Vec::with_capacity(topo.num_edges());
        for s in batch {
            raw.extend(node_inputs(&s.scene, s.question));
            dist.extend(edge_distances(&s.scene, &self.topology));
        }
        let raw = tape.constant(vec![batch.len() * OBJECTS, NODE_INPUT], raw)?;
        let x = self.encoder.forward(tape, bound, raw)?;
        let e = tape.constant(vec![topo.num_edges(), 1], dist)?;
        Ok((topo, x, e))
    }

    /// Unrolled run with a loss after every step.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, batch: &[Sample]) -> Result<StepOutputs> {
        let (topo, x, e) = self.inputs(tape, bound, batch)?;
        let targets = Targets::PerGraph(batch.iter().map(|s| s.label).collect());
        self.rrn.run_unrolled(tape, bound, &topo, x, Some(e), &targets)
    }

    /// Predicted head indices per step, `steps + 1` rows of `batch`
    /// entries (row 0 reads out the encoded features).
    pub fn predict_steps(&self, params: &ParamSet, batch: &[Sample], steps: usize) -> Result<Vec<Vec<usize>>> {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let (topo, x, e) = self.inputs(&mut tape, &bound, batch)?;
        let mut out = Vec::with_capacity(steps + 1);
        self.rrn.infer(params, &topo, tape.value(x), Some(tape.value(e)), steps, |_, t, logits, _| {
            out.push(rrn::predictions(t, logits));
            Ok(())
        })?;
        Ok(out)
    }
}

/// Four ReLU layers of 256 over the flattened state, dropout on the last,
/// then a linear 16-way output.
#[derive(Clone, Debug)]
pub struct PrettyMlp {
    mlp: Mlp,
}

impl PrettyMlp {
    pub fn spec() -> MlpSpec {
        MlpSpec::uniform(MLP_INPUT, 256, 4, CLASSES).with_dropout(3, 0.5)
    }

    pub fn new(params: &mut ParamSet, rng: &mut Rng, name: &str) -> Result<Self> {
        Ok(PrettyMlp {
            mlp: Mlp::new(params, rng, name, Self::spec())?,
        })
    }

    pub fn logits(&self, tape: &mut Tape, bound: &Bound, batch: &[Sample]) -> Result<Var> {
        let data: Vec<f64> = batch.iter().flat_map(|s| mlp_input(&s.scene, s.question)).collect();
        let x = tape.constant(vec![batch.len(), MLP_INPUT], data)?;
        self.mlp.forward(tape, bound, x)
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, tape: &mut Tape, bound: &Bound, batch: &[Sample]) -> Result<Var> {
        let logits = self.logits(tape, bound, batch)?;
        let w: Rc<[f64]> = vec![1.0 / batch.len().max(1) as f64; batch.len()].into();
        tape.weighted_cross_entropy(logits, batch.iter().map(|s| s.label).collect(), w)
    }

    pub fn predict(&self, params: &ParamSet, batch: &[Sample]) -> Result<Vec<usize>> {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let logits = self.logits(&mut tape, &bound, batch)?;
        Ok(rrn::predictions(&tape, logits))
    }
}

/// Correct and total counts per jump count.
pub fn accuracy_by_jumps(batch: &[Sample], predictions: &[usize]) -> [(usize, usize); MAX_JUMPS + 1] {
    let mut table = [(0, 0); MAX_JUMPS + 1];
    for (s, &p) in batch.iter().zip(predictions) {
        let e = &mut table[usize::from(s.question.jumps)];
        e.1 += 1;
        if p == s.label {
            e.0 += 1;
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths_and_parameter_counts() {
        assert_eq!((OBJECT_WIDTH, QUESTION_WIDTH, MLP_INPUT), (18, 24, 232));
        assert_eq!(PrettyConfig::paper().num_params(), 139_536);
        assert_eq!(PrettyMlp::spec().num_params(), 261_136);
        let mut params = ParamSet::new();
        PrettyRrn::new(&mut params, &mut rng::seeded(0), "p", PrettyConfig::paper()).unwrap();
        assert_eq!(params.num_scalars(), 139_536);
    }

    #[test]
    fn zero_jumps_is_attribute_lookup() {
        let s = generate_scene(&mut rng::seeded(4));
        for k in 0..OBJECTS as u8 {
            let o = s.objects.iter().find(|o| o.color == k).unwrap();
            assert_eq!(answer(&s, Question::new(k, 0).unwrap()), o.marker);
            let o = s.objects.iter().find(|o| o.marker == k).unwrap();
            assert_eq!(answer(&s, Question::new(8 + k, 0).unwrap()), o.color);
        }
    }

    #[test]
    fn head_index_round_trip() {
        let q = Question::new(3, 2).unwrap();
        assert_eq!(q.head_index(5), 13);
        assert_eq!(q.answer_from_head(13), Some(5));
        assert_eq!(q.answer_from_head(5), None);
        let q = Question::new(11, 0).unwrap();
        assert_eq!(q.head_index(5), 5);
        assert!(Question::new(16, 0).is_err() && Question::new(0, 8).is_err());
    }

    #[test]
    fn record_line_round_trip() {
        let s = generate_scene(&mut rng::seeded(9));
        for r in emit_questions(42, &s).iter().step_by(13) {
            let (s2, r2) = parse_line(&record_to_line(&s, r)).unwrap();
            assert_eq!((s2, r2), (s, *r));
        }
        assert!(parse_line("1 2 3").is_err());
    }
}
