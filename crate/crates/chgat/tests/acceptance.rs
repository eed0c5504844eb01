//! Acceptance suite. Each test prints one `acceptance NN <name>: PASS/FAIL`
//! line (visible with `cargo test --test acceptance -- --nocapture`) and
//! enforces its tolerance with assertions.

use std::collections::BTreeSet;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use chgat::baselines::{nb_predict, nb_train};
use chgat::chars::CharacterTable;
use chgat::dataset::{derive_labels, split, LabeledExample, NameRecord};
use chgat::graph::{
    build_phonetic_graph, build_semantic_graph, EdgeKind, HetGraphBundle, NodeId,
};
use chgat::model::attention::{
    attention_module, node_level_attention, AttentionHead, AttentionModuleParams,
};
use chgat::model::{Model, ModelConfig, TrainItem, VariantKind};
use chgat::params::{Grads, ParamStore};
use chgat::tape::Tape;
use chgat::tensor::Tensor;
use chgat::training::{evaluate_model, train, TrainConfig};

fn report(number: usize, name: &str, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("acceptance {number:02} {name}: {verdict} ({detail})");
    assert!(ok, "acceptance {number:02} {name}: {detail}");
}

// ---------------------------------------------------------------------------
// 1. Attention normalization: node-level θ and module δ sum to 1 within 1e-6
//    over 1000 randomized neighborhoods; single-input weights are exactly 1.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_01_attention_normalization() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_260_809);
    let dims = [4usize, 8, 16, 24, 32, 48, 64, 96, 128, 256, 512, 768];
    let mut worst_theta: f64 = 0.0;
    let mut worst_delta: f64 = 0.0;

    for case in 0..1000 {
        let dim = *dims.choose(&mut rng).unwrap();
        let heads = *[1usize, 2, 4].iter().filter(|&&t| dim % t == 0).choose(&mut rng).unwrap();
        let dh = dim / heads;
        let neighborhood = rng.gen_range(1..=64usize);

        let mut store = ParamStore::new();
        let head_params: Vec<AttentionHead> = (0..heads)
            .map(|h| AttentionHead {
                proj: store.register(format!("h{h}.proj"), Tensor::uniform(dim, dh, 0.5, &mut rng)),
                score: store
                    .register(format!("h{h}.attn"), Tensor::uniform(1, 2 * dh, 0.5, &mut rng)),
            })
            .collect();
        let module = AttentionModuleParams {
            w: store.register("m.w", Tensor::uniform(dim, dim, 0.5, &mut rng)),
            b: store.register("m.b", Tensor::uniform(1, dim, 0.5, &mut rng)),
            q: store.register("m.q", Tensor::uniform(1, dim, 0.5, &mut rng)),
        };

        let slots = rng.gen_range(1..=6usize);
        let name_len = rng.gen_range(1..=3usize);
        let mut tape = Tape::new(&store);
        let x = {
            let t = Tensor::uniform(neighborhood, dim, 2.0, &mut rng);
            tape.constant(t)
        };
        let node = node_level_attention(&mut tape, &head_params, x);
        for weights in &node.weights {
            let theta = tape.value(*weights);
            let sum: f64 = theta.data().iter().sum();
            worst_theta = worst_theta.max((sum - 1.0).abs());
            if neighborhood == 1 {
                assert_eq!(theta.data(), &[1.0], "case {case}: single neighbor weight");
            }
        }

        let inputs: Vec<Vec<chgat::tape::NodeId>> = (0..slots)
            .map(|_| {
                (0..name_len)
                    .map(|_| {
                        let t = Tensor::uniform(1, dim, 2.0, &mut rng);
                        tape.constant(t)
                    })
                    .collect()
            })
            .collect();
        let fused = attention_module(&mut tape, &module, &inputs);
        let delta = tape.value(fused.weights);
        let sum: f64 = delta.data().iter().sum();
        worst_delta = worst_delta.max((sum - 1.0).abs());
        if slots == 1 {
            assert_eq!(delta.data(), &[1.0], "case {case}: single input weight");
        }
    }

    let elapsed = started.elapsed();
    let ok = worst_theta <= 1e-6 && worst_delta <= 1e-6 && elapsed < Duration::from_secs(30);
    report(
        1,
        "attention normalization",
        ok,
        &format!(
            "1000 cases, max |Σθ-1| = {worst_theta:.2e}, max |Σδ-1| = {worst_delta:.2e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// 2. Gradient check: analytic gradients match central finite differences for
//    every named parameter group on a d=8, t=2, 2-layer-encoder model with a
//    3-character vocabulary (relative error ≤ 1e-3, f64).
// ---------------------------------------------------------------------------

const GRADCHECK_TABLE: &str = "甲\t1\tjia3\tS:乙:0;P:丙:1\n\
乙\t12\tyi3\t\n\
丙\t12\tyi3\t\n";

#[test]
fn acceptance_02_gradient_check() {
    let started = Instant::now();
    let table = CharacterTable::parse(GRADCHECK_TABLE).unwrap();
    let config = ModelConfig {
        dim: 8,
        heads: 2,
        encoder_layers: 2,
        max_name_len: 2,
        dropout: 0.0,
        pron_neighbor_cap: 4,
    };
    let mut model = Model::new(config, &table, VariantKind::Full, 1).unwrap();
    let items = vec![
        TrainItem { name: "甲乙".into(), label: 1, weight: 2.0, dropout_seed: None },
        TrainItem { name: "丙".into(), label: 0, weight: 1.0, dropout_seed: None },
    ];

    let (_, analytic) = model.batch_loss_grads(&items).unwrap();
    let names: Vec<String> = model.params().names().map(str::to_owned).collect();

    let mut worst = (0.0f64, String::new());
    for name in &names {
        let id = model.params().id(name).unwrap();
        let len = model.params().get(id).len();
        let mut numeric = vec![0.0f64; len];
        for (k, slot) in numeric.iter_mut().enumerate() {
            let original = model.params().get(id).data()[k];
            let h = 1e-5 * original.abs().max(1.0);
            model.params_mut().get_mut(id).data_mut()[k] = original + h;
            let plus = model.batch_loss(&items).unwrap();
            model.params_mut().get_mut(id).data_mut()[k] = original - h;
            let minus = model.batch_loss(&items).unwrap();
            model.params_mut().get_mut(id).data_mut()[k] = original;
            *slot = (plus - minus) / (2.0 * h);
        }
        let a = analytic.get(id).data();
        let diff: f64 =
            a.iter().zip(&numeric).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt()
            + numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rel = if scale < 1e-12 { 0.0 } else { diff / scale.max(1e-10) };
        assert!(
            rel <= 1e-3,
            "group '{name}': relative gradient error {rel:.3e} exceeds 1e-3"
        );
        if rel > worst.0 {
            worst = (rel, name.clone());
        }
    }

    let elapsed = started.elapsed();
    let ok = elapsed < Duration::from_secs(120);
    report(
        2,
        "gradient check",
        ok,
        &format!(
            "{} groups, {} scalars, worst rel err {:.2e} ({}), {:.1}s",
            names.len(),
            model.params().scalar_count(),
            worst.0,
            worst.1,
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// 3. CHGAT oracle equivalence: layer output matches an independent
//    straight-line re-implementation of the attention chain within 1e-6.
// ---------------------------------------------------------------------------

const ORACLE_TABLE: &str = "王\t12\twang2\t\n\
朱\t12\tzhu1\t\n\
木\t12\tmu4\t\n\
火\t12\thuo3\t\n\
日\t12\tri4\t\n\
亼\t12\t\t\n\
珠\t1\tzhu1\tS:王:0;P:朱:1\n\
珍\t1\tzhu1\tS:王:0;P:朱:1\n\
旺\t1\twang4\tS:日:0;P:王:1\n\
林\t1\tlin2\tS:木:0;S:木:1\n\
焚\t3\tfen2\tS:林:0;S:火:1\n";

struct Oracle<'m> {
    model: &'m Model,
    table: &'m CharacterTable,
    dim: usize,
    heads: usize,
}

impl<'m> Oracle<'m> {
    fn param(&self, name: &str) -> &Tensor {
        self.model.params().by_name(name).unwrap()
    }

    /// Neighborhood embedding rows for one character and path, target first.
    fn neighborhood(&self, ch: char, path: &str) -> Vec<Vec<f64>> {
        let tables = self.model.embedding_tables();
        match path {
            "s" => {
                let graph = build_semantic_graph(self.table, ch);
                graph
                    .nodes
                    .iter()
                    .map(|n| tables.initial_embedding(n, graph.position(n) as usize))
                    .collect()
            }
            "p" => {
                let graph = build_phonetic_graph(self.table, ch);
                graph
                    .nodes
                    .iter()
                    .map(|n| tables.initial_embedding(n, graph.position(n) as usize))
                    .collect()
            }
            "pr" => {
                let mut rows =
                    vec![tables.initial_embedding(&NodeId::character(ch), 0)];
                if let Some(record) = self.table.get(ch) {
                    if let Some(p) = &record.pronunciation {
                        rows.push(
                            tables.initial_embedding(&NodeId::pronunciation(p.key()), 0),
                        );
                    }
                }
                for &nb in self.model.pronunciation_neighbors(ch) {
                    rows.push(tables.initial_embedding(&NodeId::character(nb), 0));
                }
                rows
            }
            _ => unreachable!(),
        }
    }

    /// Straight-line multi-head node attention: project, score against the
    /// target with a split score vector, LeakyReLU, softmax, weighted sum,
    /// ELU, concatenate heads.
    fn node_attention(&self, path: &str, rows: &[Vec<f64>]) -> Vec<f64> {
        let dh = self.dim / self.heads;
        let mut out = Vec::with_capacity(self.dim);
        for h in 0..self.heads {
            let w = self.param(&format!("chgat.node.{path}.h{h}.proj"));
            let score = self.param(&format!("chgat.node.{path}.h{h}.attn"));
            let gammas: Vec<Vec<f64>> = rows
                .iter()
                .map(|x| {
                    (0..dh)
                        .map(|j| (0..self.dim).map(|i| x[i] * w.at(i, j)).sum::<f64>())
                        .collect()
                })
                .collect();
            let target_part: f64 =
                (0..dh).map(|j| score.at(0, j) * gammas[0][j]).sum();
            let scores: Vec<f64> = gammas
                .iter()
                .map(|g| {
                    let s: f64 =
                        target_part + (0..dh).map(|j| score.at(0, dh + j) * g[j]).sum::<f64>();
                    if s > 0.0 {
                        s
                    } else {
                        0.2 * s
                    }
                })
                .collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            for j in 0..dh {
                let agg: f64 =
                    gammas.iter().zip(&exps).map(|(g, e)| e / total * g[j]).sum();
                out.push(if agg > 0.0 { agg } else { agg.exp() - 1.0 });
            }
        }
        out
    }

    /// Straight-line attention module with the importance mean taken over
    /// the name's characters.
    fn module(&self, name: &str, inputs: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
        let w = self.param(&format!("chgat.attn.{name}.w"));
        let b = self.param(&format!("chgat.attn.{name}.b"));
        let q = self.param(&format!("chgat.attn.{name}.q"));
        let chars = inputs[0].len();
        let mut scores = Vec::with_capacity(inputs.len());
        for slot in inputs {
            let mut total = 0.0;
            for h in slot {
                let mut s = 0.0;
                for j in 0..self.dim {
                    let z: f64 =
                        (0..self.dim).map(|i| h[i] * w.at(i, j)).sum::<f64>() + b.at(0, j);
                    s += q.at(0, j) * z.tanh();
                }
                total += s;
            }
            scores.push(total / chars as f64);
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let delta: Vec<f64> = exps.iter().map(|e| e / total).collect();
        (0..chars)
            .map(|i| {
                (0..self.dim)
                    .map(|j| inputs.iter().zip(&delta).map(|(slot, d)| d * slot[i][j]).sum())
                    .collect()
            })
            .collect()
    }

    fn chgat_layer(&self, name: &str) -> Vec<Vec<f64>> {
        let chars: Vec<char> = name.chars().collect();
        let h_s: Vec<Vec<f64>> =
            chars.iter().map(|&c| self.node_attention("s", &self.neighborhood(c, "s"))).collect();
        let h_p: Vec<Vec<f64>> =
            chars.iter().map(|&c| self.node_attention("p", &self.neighborhood(c, "p"))).collect();
        let h_pr: Vec<Vec<f64>> =
            chars.iter().map(|&c| self.node_attention("pr", &self.neighborhood(c, "pr"))).collect();
        let structure = self.module("structure", &[h_s, h_p]);
        self.module("aggregate", &[structure, h_pr])
    }
}

#[test]
fn acceptance_03_chgat_oracle_equivalence() {
    let table = CharacterTable::parse(ORACLE_TABLE).unwrap();
    let config = ModelConfig {
        dim: 4,
        heads: 2,
        encoder_layers: 1,
        max_name_len: 3,
        dropout: 0.0,
        pron_neighbor_cap: 8,
    };
    let model = Model::new(config, &table, VariantKind::Full, 99).unwrap();
    let oracle = Oracle { model: &model, table: &table, dim: 4, heads: 2 };

    let chars: Vec<char> = table.chars().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let len = rng.gen_range(1..=3usize);
        let name: String = (0..len).map(|_| chars.choose(&mut rng).unwrap()).collect();
        let got = model.chgat_layer(&name).unwrap();
        let want = oracle.chgat_layer(&name);
        assert_eq!(got.len(), want.len(), "{name}");
        for (g, w) in got.iter().zip(&want) {
            for (a, b) in g.iter().zip(w) {
                let diff = (a - b).abs();
                worst = worst.max(diff);
                assert!(diff <= 1e-6, "{name}: {a} vs {b} (diff {diff:.2e})");
            }
        }
    }
    report(3, "chgat oracle equivalence", true, &format!("20 names, max |Δ| = {worst:.2e}"));
}

// ---------------------------------------------------------------------------
// 4. Graph invariants on the 200+ character fixture.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_04_graph_invariants() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/chars_200.tsv");
    let table = CharacterTable::load(path).unwrap();
    assert!(table.len() >= 200, "fixture holds {} characters", table.len());

    let bundle = HetGraphBundle::build(&table);
    for record in table.records() {
        let edges = bundle.phonetic[&record.char].edge_count(EdgeKind::CharPhon);
        assert_eq!(
            edges,
            usize::from(record.is_picto_phonetic),
            "char {} picto-phonetic={} but {} char_phon edges",
            record.char,
            record.is_picto_phonetic,
            edges
        );
    }

    let graph = &bundle.pronunciation;
    for ch in graph.chars() {
        let neighbors = graph.neighbors(ch).unwrap();
        assert!(!neighbors.contains(&ch), "self loop at {ch}");
        for &other in neighbors {
            assert!(
                graph.neighbors(other).unwrap().contains(&ch),
                "asymmetric pair {ch} / {other}"
            );
        }
    }

    let rebuilt = HetGraphBundle::build(&table);
    assert_eq!(bundle, rebuilt, "rebuild differs from first build");
    let dump = |b: &HetGraphBundle| {
        let mut buf = Vec::new();
        chgat::graph::write_graph_dump(&table, b, &mut buf).unwrap();
        buf
    };
    assert_eq!(dump(&bundle), dump(&rebuilt), "serialized dumps differ");

    report(
        4,
        "graph invariants",
        true,
        &format!("{} characters, {} meta-path pairs", table.len(), graph.pair_count()),
    );
}

// ---------------------------------------------------------------------------
// 5. Naïve Bayes equals brute-force Bayes enumeration on a 20-name fixture.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_05_naive_bayes_oracle() {
    // 20 training names over a small character pool
    let pool: Vec<char> = "安贝春冬恩芳刚红健凯".chars().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    while records.len() < 20 {
        let len = rng.gen_range(1..=2usize);
        let name: String = (0..len).map(|_| pool.choose(&mut rng).unwrap()).collect();
        if !seen.insert(name.clone()) {
            continue;
        }
        let male = rng.gen_range(0..100u64);
        let female = rng.gen_range(0..100u64);
        if male + female == 0 || male == female {
            continue;
        }
        records.push(NameRecord { first_name: name, male_count: male, female_count: female });
    }
    let (examples, _) = derive_labels(&records);
    let model = nb_train(&examples, 1.0).unwrap();

    // brute-force oracle: accumulate raw counts independently, then take
    // posterior = prior × Π (count + α) / (total + α·V), normalized
    let mut counts: std::collections::BTreeMap<char, (u64, u64)> = Default::default();
    let mut weight_male = 0u64;
    let mut weight_female = 0u64;
    for ex in &examples {
        if ex.label == 1 {
            weight_female += ex.weight;
        } else {
            weight_male += ex.weight;
        }
        for ch in ex.first_name.chars() {
            let e = counts.entry(ch).or_insert((0, 0));
            if ex.label == 1 {
                e.1 += ex.weight;
            } else {
                e.0 += ex.weight;
            }
        }
    }
    let vocab = counts.len() as f64;
    let total_m: u64 = counts.values().map(|c| c.0).sum();
    let total_f: u64 = counts.values().map(|c| c.1).sum();
    let oracle = |name: &str| -> (u8, f64) {
        let mut pm = weight_male as f64 / (weight_male + weight_female) as f64;
        let mut pf = weight_female as f64 / (weight_male + weight_female) as f64;
        for ch in name.chars() {
            let (cm, cf) = counts.get(&ch).copied().unwrap_or((0, 0));
            pm *= (cm as f64 + 1.0) / (total_m as f64 + vocab);
            pf *= (cf as f64 + 1.0) / (total_f as f64 + vocab);
        }
        let posterior_f = pf / (pm + pf);
        if posterior_f > 0.5 {
            (1, posterior_f)
        } else {
            (0, 1.0 - posterior_f)
        }
    };

    let mut worst: f64 = 0.0;
    let test_names: Vec<String> = records
        .iter()
        .map(|r| r.first_name.clone())
        .chain(["安凯".to_string(), "然然".to_string(), "冬".to_string()])
        .collect();
    for name in &test_names {
        let got = nb_predict(&model, name).unwrap();
        let (label, probability) = oracle(name);
        assert_eq!(got.label, label, "{name}");
        let diff = (got.probability - probability).abs();
        worst = worst.max(diff);
        assert!(diff <= 1e-12, "{name}: {} vs {probability}", got.probability);
    }
    report(
        5,
        "naive bayes oracle",
        true,
        &format!("{} predictions, max |Δposterior| = {worst:.2e}", test_names.len()),
    );
}

// ---------------------------------------------------------------------------
// Toy corpus shared by criteria 6 and 8: gender determined by a semantic
// component rule on the first character OR a pronunciation rule on the
// second character.
// ---------------------------------------------------------------------------

struct ToyWorld {
    table: CharacterTable,
    examples: Vec<LabeledExample>,
}

fn toy_world() -> ToyWorld {
    let fem_comp = '女';
    let other_comps = ['口', '山', '水', '刀'];
    let phonetic_comps = ['卜', '丁', '勺'];
    let sounds = ["lan", "ning", "tao", "bo", "jun", "kang", "lei", "peng"];

    let mut tsv = String::new();
    for &c in [fem_comp].iter().chain(&other_comps).chain(&phonetic_comps) {
        tsv.push_str(&format!("{c}\t12\tbu3\t\n"));
    }
    let mut chars = Vec::new();
    let mut fem_first = BTreeSet::new();
    let mut mei_second = BTreeSet::new();
    for i in 0..24u32 {
        let ch = char::from_u32(0x7000 + i).unwrap();
        chars.push(ch);
        let sem = if i % 3 == 0 {
            fem_first.insert(ch);
            fem_comp
        } else {
            other_comps[(i as usize) % other_comps.len()]
        };
        let sound = if i % 3 == 1 {
            mei_second.insert(ch);
            format!("mei{}", 1 + i % 4)
        } else {
            format!("{}{}", sounds[(i as usize) % sounds.len()], 1 + i % 4)
        };
        let phon = phonetic_comps[(i as usize) % phonetic_comps.len()];
        tsv.push_str(&format!("{ch}\t1\t{sound}\tS:{sem}:0;P:{phon}:1\n"));
    }
    let table = CharacterTable::parse(&tsv).unwrap();

    let mut pairs = Vec::new();
    for &a in &chars {
        for &b in &chars {
            if a != b {
                pairs.push((a, b));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(616);
    pairs.shuffle(&mut rng);
    pairs.truncate(200);

    let records: Vec<NameRecord> = pairs
        .iter()
        .map(|&(a, b)| {
            let female = fem_first.contains(&a) || mei_second.contains(&b);
            let name = format!("{a}{b}");
            if female {
                NameRecord { first_name: name, male_count: 10, female_count: 90 }
            } else {
                NameRecord { first_name: name, male_count: 90, female_count: 10 }
            }
        })
        .collect();
    let (examples, ties) = derive_labels(&records);
    assert_eq!(ties, 0);
    assert_eq!(examples.len(), 200);
    ToyWorld { table, examples }
}

struct ToyRun {
    model: Model,
    train_accuracy: f64,
    test_accuracy: f64,
    test_set: Vec<LabeledExample>,
    epochs_used: usize,
    train_seconds: f64,
}

fn toy_config() -> ModelConfig {
    ModelConfig {
        dim: 32,
        heads: 2,
        encoder_layers: 1,
        max_name_len: 2,
        dropout: 0.0,
        pron_neighbor_cap: 8,
    }
}

fn toy_run() -> &'static ToyRun {
    static RUN: OnceLock<ToyRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let world = toy_world();
        let (train_set, val_set, test_set) = split(&world.examples, (0.75, 0.10, 0.15), 4);
        let mut model = Model::new(toy_config(), &world.table, VariantKind::Full, 12).unwrap();
        let config = TrainConfig {
            epochs: 200,
            batch_size: 32,
            learning_rate: 2e-3,
            weight_decay: 1e-2,
            seed: 12,
            use_example_weights: false,
            ..TrainConfig::default()
        };
        let started = Instant::now();
        let outcome = train(&config, &mut model, &train_set, &val_set).unwrap();
        let train_seconds = started.elapsed().as_secs_f64();
        let train_accuracy = evaluate_model(&model, &train_set).unwrap().accuracy;
        let test_accuracy = evaluate_model(&model, &test_set).unwrap().accuracy;
        ToyRun {
            model,
            train_accuracy,
            test_accuracy,
            test_set,
            epochs_used: outcome.history.len(),
            train_seconds,
        }
    })
}

// ---------------------------------------------------------------------------
// 6. Toy learnability: ≥95% train and ≥90% held-out accuracy within 200
//    epochs at d=32, in under 10 minutes.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_06_toy_learnability() {
    let run = toy_run();
    let ok = run.train_accuracy >= 0.95
        && run.test_accuracy >= 0.90
        && run.epochs_used <= 200
        && run.train_seconds < 600.0;
    report(
        6,
        "toy learnability",
        ok,
        &format!(
            "train acc {:.3}, held-out acc {:.3}, {} epochs, {:.0}s",
            run.train_accuracy, run.test_accuracy, run.epochs_used, run.train_seconds
        ),
    );
}

// ---------------------------------------------------------------------------
// 7. Ablation structure: parameter-name sets and counts across variants.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_07_ablation_structure() {
    let table = CharacterTable::parse(ORACLE_TABLE).unwrap();
    let config = ModelConfig {
        dim: 8,
        heads: 2,
        encoder_layers: 1,
        max_name_len: 2,
        dropout: 0.0,
        pron_neighbor_cap: 4,
    };
    let build = |kind| Model::new(config.clone(), &table, kind, 3).unwrap();
    let full = build(VariantKind::Full);
    let v1 = build(VariantKind::Variant1);
    let v2 = build(VariantKind::Variant2);

    let names = |m: &Model| m.params().names().map(str::to_owned).collect::<Vec<_>>();
    let v1_names = names(&v1);
    assert!(
        v1_names
            .iter()
            .all(|n| !n.contains("chgat.node.pr") && !n.contains("graph.features.pron")),
        "variant_1 must drop the pronunciation graph branch"
    );
    assert!(
        v1_names.iter().all(|n| !n.contains("chgat.attn.aggregate")),
        "variant_1 must drop the aggregate attention"
    );
    let v2_names = names(&v2);
    let v2_modules: BTreeSet<&str> = v2_names
        .iter()
        .filter(|n| n.starts_with("chgat.attn."))
        .map(|n| n.rsplit_once('.').unwrap().0)
        .collect();
    assert_eq!(
        v2_modules.iter().copied().collect::<Vec<_>>(),
        vec!["chgat.attn.aggregate"],
        "variant_2 must have exactly one attention-module group"
    );
    let full_names = names(&full);
    assert!(full_names.iter().any(|n| n.starts_with("chgat.attn.structure")));
    assert!(full_names.iter().any(|n| n.starts_with("chgat.attn.aggregate")));

    let count = |m: &Model| m.params().scalar_count();
    assert!(count(&v1) < count(&v2) && count(&v2) < count(&full));
    report(
        7,
        "ablation structure",
        true,
        &format!("params: variant_1 {} < variant_2 {} < full {}", count(&v1), count(&v2), count(&full)),
    );
}

// ---------------------------------------------------------------------------
// 8. Order sensitivity: trained model flips labels on reversed held-out
//    names; random model emits different logits for AB vs BA.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_08_order_sensitivity() {
    let run = toy_run();
    let mut flipped = 0usize;
    for example in &run.test_set {
        let forward = run.model.predict(&example.first_name).unwrap().label;
        let reversed: String = example.first_name.chars().rev().collect();
        let backward = run.model.predict(&reversed).unwrap().label;
        if forward != backward {
            flipped += 1;
        }
    }
    let flip_share = flipped as f64 / run.test_set.len() as f64;

    // hard assertion on a fresh random model: logits(AB) != logits(BA)
    let world = toy_world();
    let random = Model::new(toy_config(), &world.table, VariantKind::Full, 777).unwrap();
    let chars: Vec<char> = world.table.chars().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for i in 0..50 {
        let a = *chars.choose(&mut rng).unwrap();
        let mut b = *chars.choose(&mut rng).unwrap();
        while b == a {
            b = *chars.choose(&mut rng).unwrap();
        }
        let ab = random.forward(&format!("{a}{b}")).unwrap();
        let ba = random.forward(&format!("{b}{a}")).unwrap();
        assert_ne!(ab, ba, "pair {i}: {a}{b} vs {b}{a} produced identical logits");
    }

    let ok = flip_share >= 0.10;
    report(
        8,
        "order sensitivity",
        ok,
        &format!(
            "{flipped}/{} held-out names flip under reversal ({:.0}%); 50/50 random pairs differ",
            run.test_set.len(),
            100.0 * flip_share
        ),
    );
}

// ---------------------------------------------------------------------------
// 9. Stats oracle: cmd_stats matches the hand-enumerated fixture exactly;
//    optional full-corpus M-to-F check when CHGAT_FULL_CORPUS is set.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_09_stats_oracle() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/names_stats30.csv");
    let result = chgat::cli::cmd_stats(std::path::Path::new(path));
    assert_eq!(result.exit_code, 0, "{}", result.summary);

    // hand-enumerated: 30 unique names, Σmale = 928, Σfemale = 1046,
    // 2 of 20 two-character names are same-gender flips, and of the 8
    // names whose reversal occurs, 2 carry the opposite label.
    let expect_m_to_f = 100.0 * 928.0 / 1046.0;
    let expected = [
        "total_records: 1974".to_string(),
        "unique_names: 30".to_string(),
        format!("m_to_f_percent: {expect_m_to_f}"),
        "same_gender_flip_percent: 10".to_string(),
        "reversal_flip_percent: 25".to_string(),
    ];
    for line in &expected {
        assert!(
            result.summary.lines().any(|l| l == line),
            "missing '{line}' in:\n{}",
            result.summary
        );
    }

    let records = chgat::dataset::load_name_records(path).unwrap();
    let stats = chgat::dataset::compute_stats(&records);
    assert_eq!(stats.total_records, 1974);
    assert_eq!(stats.unique_names, 30);
    assert_eq!(stats.m_to_f_percent, expect_m_to_f);
    assert_eq!(stats.same_gender_flip_percent, 10.0);
    assert_eq!(stats.reversal_flip_percent, 25.0);

    let corpus_note = match std::env::var("CHGAT_FULL_CORPUS") {
        Ok(path) => {
            let records = chgat::dataset::load_name_records(&path).unwrap();
            let stats = chgat::dataset::compute_stats(&records);
            assert!(
                (stats.m_to_f_percent - 111.58).abs() <= 0.01,
                "full corpus M-to-F {} outside 111.58 ± 0.01",
                stats.m_to_f_percent
            );
            format!("full corpus M-to-F {:.2}", stats.m_to_f_percent)
        }
        Err(_) => "full-corpus check skipped (CHGAT_FULL_CORPUS unset)".to_string(),
    };
    report(9, "stats oracle", true, &format!("fixture exact; {corpus_note}"));
}

// ---------------------------------------------------------------------------
// 10. Determinism: identical seed + config + data give bit-identical
//     checkpoints and history CSVs across two runs.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_10_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let chars_path = dir.path().join("chars.tsv");
    std::fs::write(&chars_path, ORACLE_TABLE).unwrap();
    let names_path = dir.path().join("names.csv");
    std::fs::write(
        &names_path,
        "name,male,female\n珠,5,95\n珍,10,80\n旺,90,10\n林,70,20\n焚,60,10\n\
         珠珍,3,77\n旺林,88,6\n珍旺,40,50\n林焚,66,22\n焚珠,12,60\n",
    )
    .unwrap();
    let config_path = dir.path().join("config.txt");
    std::fs::write(
        &config_path,
        "epochs = 3\nbatch_size = 4\nlearning_rate = 1e-3\nweight_decay = 0\n\
         dim = 8\nheads = 2\nencoder_layers = 1\nmax_name_len = 2\ndropout = 0.1\n\
         pron_neighbor_cap = 4\nseed = 7\nsplit = 0.6,0.2,0.2\n",
    )
    .unwrap();

    let run = |out: &std::path::Path| {
        let result =
            chgat::cli::cmd_train(&names_path, &chars_path, &config_path, "full", out);
        assert_eq!(result.exit_code, 0, "{}", result.summary);
        (
            std::fs::read(out.join("checkpoint.bin")).unwrap(),
            std::fs::read(out.join("history.csv")).unwrap(),
        )
    };
    let (ckpt_a, hist_a) = run(&dir.path().join("a"));
    let (ckpt_b, hist_b) = run(&dir.path().join("b"));
    let ok = ckpt_a == ckpt_b && hist_a == hist_b;
    report(
        10,
        "determinism",
        ok,
        &format!("checkpoint {} bytes, history {} bytes, both identical", ckpt_a.len(), hist_a.len()),
    );
}

// ---------------------------------------------------------------------------
// proptest-style invariants that back the suite
// ---------------------------------------------------------------------------

#[test]
fn gradient_batch_is_sum_of_example_gradients() {
    let table = CharacterTable::parse(GRADCHECK_TABLE).unwrap();
    let config = ModelConfig {
        dim: 8,
        heads: 2,
        encoder_layers: 1,
        max_name_len: 2,
        dropout: 0.0,
        pron_neighbor_cap: 4,
    };
    let model = Model::new(config, &table, VariantKind::Full, 5).unwrap();
    let items = vec![
        TrainItem { name: "甲".into(), label: 0, weight: 1.0, dropout_seed: None },
        TrainItem { name: "乙丙".into(), label: 1, weight: 3.0, dropout_seed: None },
    ];
    let (loss, grads) = model.batch_loss_grads(&items).unwrap();
    let mut sum = Grads::zeros_like(model.params());
    let mut loss_sum = 0.0;
    for item in &items {
        let (l, g) = model.example_loss_grads(item).unwrap();
        loss_sum += l;
        sum.add_assign(&g);
    }
    assert!((loss - loss_sum).abs() < 1e-12);
    for id in model.params().ids() {
        for (a, b) in grads.get(id).data().iter().zip(sum.get(id).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
