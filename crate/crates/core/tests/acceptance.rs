//! Acceptance gates: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. `ACCEPTANCE_ONLY=3,4` restricts the run to the listed criteria.

use std::time::Instant;

use lstm_relevance::counters;
use lstm_relevance::explain::{explain, explain_cd, explain_lrp, LrpConfig, LrpRule, Method};
use lstm_relevance::grad::{finite_diff_check, param_finite_diff_check};
use lstm_relevance::model_io::model_to_string;
use lstm_relevance::sentiment::*;
use lstm_relevance::toy::{run_toy_benchmark, ToyBenchConfig, ToyBenchReport, ToyStatsRow, ToyTask};
use lstm_relevance::{CellKind, InputSequence, ModelParams, ModelShape};
use rand::Rng;

struct Gate {
    failed: Vec<String>,
}

impl Gate {
    fn report(&mut self, id: &str, pass: bool, detail: String) {
        println!("{} criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(id.to_string());
        }
    }
}

fn shape(hidden: usize, input_dim: usize, classes: usize, bi: bool, cell: CellKind) -> ModelShape {
    ModelShape { hidden, input_dim, classes, bidirectional: bi, output_bias: false, cell }
}

fn random_seq(rng: &mut impl Rng, t: usize, d: usize) -> InputSequence {
    InputSequence::new(d, (0..t * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_lstm(rng: &mut impl Rng) -> ModelParams {
    let classes = rng.gen_range(1..4);
    random_lstm_with(rng, classes)
}

fn random_lstm_with(rng: &mut impl Rng, classes: usize) -> ModelParams {
    let s = ModelShape {
        output_bias: rng.gen_bool(0.5),
        ..shape(rng.gen_range(1..5), rng.gen_range(1..4), classes, rng.gen_bool(0.5), CellKind::Lstm)
    };
    let mut m = ModelParams::random(s, rng, -1.0, 1.0);
    m.randomize_biases(rng, -0.5, 0.5);
    m
}

// ------------------------------------------------------------------ toy

fn row<'a>(r: &'a ToyBenchReport, m: &str) -> &'a ToyStatsRow {
    let method: Method = m.parse().unwrap();
    r.rows
        .iter()
        .find(|row| row.method.label() == method.label())
        .unwrap_or_else(|| panic!("no row for {m}"))
}

fn toy_report(task: ToyTask) -> ToyBenchReport {
    let t0 = Instant::now();
    let r = run_toy_benchmark(&ToyBenchConfig::new(task)).expect("toy benchmark runs");
    println!("{}", r.table().trim_end());
    println!("# {} benchmark took {:.0}s", task.name(), t0.elapsed().as_secs_f64());
    r
}

fn criterion_1(g: &mut Gate) {
    let r = toy_report(ToyTask::Addition);
    if !r.is_complete() {
        g.report("1", false, format!("only {} of 50 models converged", r.converged()));
        return;
    }
    let mut bad = Vec::new();
    for m in ["gxi", "occ-f", "lrp-all", "cd"] {
        let x = row(&r, m);
        if !(x.rho_a.0 >= 0.99 && x.rho_b.0 >= 0.99 && x.portion.0 >= 0.99) {
            bad.push(format!("{m} rho {:.5}/{:.5} portion {:.5}", x.rho_a.0, x.rho_b.0, x.portion.0));
        }
    }
    let gap = row(&r, "lrp-all").gap.0;
    if gap > 1e-4 {
        bad.push(format!("LRP-all gap {gap:.2e}"));
    }
    for m in ["lrp-prop", "lrp-abs"] {
        let x = row(&r, m);
        if !(x.rho_a.0 <= 0.5 && x.rho_b.0 <= 0.5 && x.portion.0 <= 0.5) {
            bad.push(format!("{m} rho {:.3}/{:.3} portion {:.3}", x.rho_a.0, x.rho_b.0, x.portion.0));
        }
    }
    let x = row(&r, "lrp-all");
    let detail = format!(
        "addition, 50 models: LRP-all rho {:.5}/{:.5} portion {:.5} gap {gap:.1e}{}",
        x.rho_a.0,
        x.rho_b.0,
        x.portion.0,
        if bad.is_empty() { String::new() } else { format!("; violations: {}", bad.join("; ")) }
    );
    g.report("1", bad.is_empty(), detail);
}

fn subtraction_ok(x: &ToyStatsRow) -> bool {
    x.rho_a.0 >= 0.9 && x.rho_b.0 <= -0.9 && x.portion.0 >= 0.95
}

fn criterion_2(g: &mut Gate) {
    let r = toy_report(ToyTask::Subtraction);
    if !r.is_complete() {
        g.report("2", false, format!("only {} of 50 models converged", r.converged()));
        return;
    }
    let mut bad = Vec::new();
    for m in ["gxi", "lrp-all"] {
        let x = row(&r, m);
        if !subtraction_ok(x) {
            bad.push(format!("{m} misses a bar: {:.3}/{:.3}/{:.3}", x.rho_a.0, x.rho_b.0, x.portion.0));
        }
    }
    for m in ["occ-f", "cd", "lrp-prop", "lrp-abs", "lrp-half"] {
        let x = row(&r, m);
        if subtraction_ok(x) {
            bad.push(format!("{m} passes every bar: {:.3}/{:.3}/{:.3}", x.rho_a.0, x.rho_b.0, x.portion.0));
        }
    }
    let (a, c) = (row(&r, "lrp-all"), row(&r, "cd"));
    let detail = format!(
        "subtraction, 50 models: LRP-all {:.3}/{:.3}/{:.3}, CD {:.3}/{:.3}/{:.3}{}",
        a.rho_a.0,
        a.rho_b.0,
        a.portion.0,
        c.rho_a.0,
        c.rho_b.0,
        c.portion.0,
        if bad.is_empty() { String::new() } else { format!("; violations: {}", bad.join("; ")) }
    );
    g.report("2", bad.is_empty(), detail);
}

// ------------------------------------------------------- exact checks

fn criterion_3(g: &mut Gate) {
    let mut rng = lstm_relevance::seed::rng(303);
    let (mut worst_in, mut worst_param): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let m = random_lstm(&mut rng);
        let t = rng.gen_range(1..7);
        let seq = random_seq(&mut rng, t, m.input_dim());
        for c in 0..m.classes() {
            worst_in = worst_in.max(finite_diff_check(&m, &seq, c, 1e-5).unwrap());
        }
        // Parameter gradients are those of the regression loss.
        let reg = random_lstm_with(&mut rng, 1);
        let batch: Vec<(InputSequence, f64)> =
            (0..2).map(|_| (random_seq(&mut rng, t, reg.input_dim()), rng.gen_range(-1.0..1.0))).collect();
        worst_param = worst_param.max(param_finite_diff_check(&reg, &batch, 1e-5).unwrap());
    }
    g.report(
        "3",
        worst_in <= 1e-5 && worst_param <= 1e-5,
        format!("100 random models, step 1e-5: input gradient error {worst_in:.2e}, parameter gradient error {worst_param:.2e} (bound 1e-5)"),
    );
}

fn criterion_4(g: &mut Gate) {
    let mut rng = lstm_relevance::seed::rng(404);
    let (mut cons, mut equiv): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let bi = rng.gen_bool(0.5);
        let s = shape(rng.gen_range(1..5), rng.gen_range(1..4), rng.gen_range(1..4), bi, CellKind::Linear);
        let m = ModelParams::random(s, &mut rng, -1.0, 1.0);
        let t = rng.gen_range(1..8);
        let seq = random_seq(&mut rng, t, m.input_dim());
        let c = rng.gen_range(0..m.classes());
        let lrp = explain_lrp(&m, &seq, c, &LrpConfig::unstabilized(LrpRule::All)).unwrap();
        let total: f64 = lrp.per_variable.as_ref().unwrap().as_slice().iter().sum();
        cons = cons.max((total - lrp.logits[c]).abs());
        let gxi = explain(&m, &seq, c, &Method::GradientXInput).unwrap();
        for (x, y) in lrp.per_variable.unwrap().as_slice().iter().zip(gxi.per_variable.unwrap().as_slice()) {
            equiv = equiv.max((x - y).abs());
        }
    }
    g.report(
        "4",
        cons <= 1e-8 && equiv <= 1e-10,
        format!("100 zero-bias linear networks, eps=0: |sum R - f_c| <= {cons:.1e} (bound 1e-8), |LRP - GxI| <= {equiv:.1e} (bound 1e-10)"),
    );
}

fn criterion_5(g: &mut Gate) {
    let mut rng = lstm_relevance::seed::rng(505);
    let (mut add, mut full): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let m = random_lstm(&mut rng);
        let t = rng.gen_range(1..8);
        let seq = random_seq(&mut rng, t, m.input_dim());
        let c = rng.gen_range(0..m.classes());
        let trace = m.forward_trace(&seq).unwrap();
        let start = rng.gen_range(0..t);
        let stop = rng.gen_range(start + 1..=t);
        let d = explain_cd(&m, &seq, c, start..stop).unwrap();
        for (x, y) in d.reconstructed_hidden().iter().zip(&trace.final_hidden) {
            add = add.max((x - y).abs());
        }
        // Full span: every path is relevant, so the relevance is the plain
        // forward score without the output bias.
        let whole = explain_cd(&m, &seq, c, 0..t).unwrap();
        let bias = m.output_bias.as_ref().map_or(0.0, |b| b[c]);
        full = full.max((whole.relevance - (trace.logits[c] - bias)).abs());
        full = full.max(whole.gamma.iter().flatten().fold(0.0, |a: f64, g| a.max(g.abs())));
    }
    g.report(
        "5",
        add <= 1e-6 && full <= 1e-10,
        format!("100 random models and spans: |beta + gamma - h_T| <= {add:.1e} (bound 1e-6); full span vs forward pass {full:.1e}"),
    );
}

fn criterion_6(g: &mut Gate) {
    let mut rng = lstm_relevance::seed::rng(606);
    let mut bad = Vec::new();
    for _ in 0..20 {
        let m = random_lstm(&mut rng);
        let t = rng.gen_range(1..12);
        let seq = random_seq(&mut rng, t, m.input_dim());
        let (_, n) = counters::count(|| explain(&m, &seq, 0, &Method::OCCLUSION_F).unwrap());
        if (n.forward, n.backward) != (t + 1, 0) {
            bad.push(format!("occlusion T={t}: {n:?}"));
        }
        for method in [Method::Gradient, Method::GradientXInput]
            .into_iter()
            .chain(LrpRule::ALL_RULES.map(Method::lrp))
        {
            let (_, n) = counters::count(|| explain(&m, &seq, 0, &method).unwrap());
            if (n.forward, n.backward) != (1, 1) {
                bad.push(format!("{method}: {n:?}"));
            }
        }
    }
    g.report(
        "6",
        bad.is_empty(),
        if bad.is_empty() {
            "occlusion uses T+1 forward passes; gradient, GxI and LRP use 1 forward + 1 backward".into()
        } else {
            bad.join("; ")
        },
    );
}

// ------------------------------------------------------------ sentiment

struct Sentiment {
    corpus: SentimentCorpus,
    model: SentimentModel,
}

fn sentiment() -> Sentiment {
    let t0 = Instant::now();
    let corpus = build_synthetic_corpus(&CorpusSpec::builtin(), 0).unwrap();
    let (model, _) = train_classifier(&corpus, &ClassifierConfig::default()).unwrap();
    println!(
        "# classifier: test accuracy {:.4} on {} sentences ({:.0}s)",
        model.accuracy(&corpus.test).unwrap(),
        corpus.test.len(),
        t0.elapsed().as_secs_f64()
    );
    Sentiment { corpus, model }
}

fn criterion_7(g: &mut Gate, s: &Sentiment) {
    let t0 = Instant::now();
    let rep = perturbation_experiment(&s.model, &s.corpus.test, &PerturbConfig::standard()).unwrap();
    println!("{}", rep.table().trim_end());
    println!("# perturbation took {:.0}s", t0.elapsed().as_secs_f64());
    let norm = |o: Order, m: &str| rep.row(o, &m.parse().unwrap()).unwrap().mean_normalized;
    let tracks = [(Order::Decreasing, &rep.decreasing), (Order::Increasing, &rep.increasing)];
    let mut anchors = true;
    for (o, t) in tracks {
        let random = rep.row(o, &Ranker::Random).unwrap();
        let occ = rep.row(o, &Ranker::Relevance(Method::OCCLUSION_P)).unwrap();
        anchors &= t.sentences > 0
            && random.normalized.iter().all(|v| *v == Some(0.0) || *v == Some(-0.0))
            && occ.normalized.iter().all(|v| *v == Some(100.0));
    }
    let v = |o, m| norm(o, m).unwrap_or(f64::NAN);
    let (lrp, cd, gxi, grad) = (v(Order::Decreasing, "lrp-all"), v(Order::Decreasing, "cd"), v(Order::Decreasing, "gxi"), v(Order::Decreasing, "grad"));
    let inc = v(Order::Increasing, "grad");
    let pass = anchors && lrp >= cd && cd > gxi && gxi > grad && lrp >= 80.0 && inc <= 0.0;
    g.report(
        "7",
        pass,
        format!(
            "anchors exact: {anchors}; decreasing LRP-all {lrp:.1} >= CD {cd:.1} > GxI {gxi:.1} > Gradient {grad:.1}; increasing Gradient {inc:.1} <= 0 ({} / {} sentences)",
            rep.decreasing.sentences, rep.increasing.sentences
        ),
    );
}

fn criterion_8(g: &mut Gate, s: &Sentiment) {
    let rep = composition_analysis(&s.model, &s.corpus, &CompositionConfig::default()).unwrap();
    println!("{}", rep.table().trim_end());
    let mut bad = Vec::new();
    let np = rep.row(CompositionKind::NegatedPositive);
    if np.count() == 0 || !(np.mean[0] > 0.0 && np.mean[1] < 0.0) {
        bad.push(format!("negated positive means {:?}", np.mean));
    }
    for kind in [CompositionKind::AmplifiedPositive, CompositionKind::AmplifiedNegative] {
        let r = rep.row(kind);
        let ok = r.count() > 0
            && r.mean[0].signum() == r.mean[1].signum()
            && r.mean[0] != 0.0
            && r.mean[0].abs() < r.mean[1].abs();
        if !ok {
            bad.push(format!("{} means {:?}", kind.name(), r.mean));
        }
    }
    let reported = rep.rows.iter().all(|r| r.generated >= r.count()) && !rep.neutral_negations.is_empty() && !rep.neutral_amplifiers.is_empty();
    if !reported {
        bad.push("missing counts or modifier lists".into());
    }
    let counts: Vec<String> = rep.rows.iter().map(|r| format!("{} {}", r.kind.name(), r.count())).collect();
    g.report(
        "8",
        bad.is_empty(),
        format!(
            "negated positive {:.2}/{:.2}; amplified positive {:.2}/{:.2}; amplified negative {:.2}/{:.2}; samples: {}{}",
            np.mean.first().unwrap_or(&f64::NAN),
            np.mean.get(1).unwrap_or(&f64::NAN),
            rep.row(CompositionKind::AmplifiedPositive).mean.first().unwrap_or(&f64::NAN),
            rep.row(CompositionKind::AmplifiedPositive).mean.get(1).unwrap_or(&f64::NAN),
            rep.row(CompositionKind::AmplifiedNegative).mean.first().unwrap_or(&f64::NAN),
            rep.row(CompositionKind::AmplifiedNegative).mean.get(1).unwrap_or(&f64::NAN),
            counts.join(", "),
            if bad.is_empty() { String::new() } else { format!("; violations: {}", bad.join("; ")) }
        ),
    );
}

fn criterion_9(g: &mut Gate) {
    let mut spec = CorpusSpec::builtin();
    spec.train_sentences = 2000;
    spec.test_sentences = 400;
    let cfg = ClassifierConfig { epochs: 2, ..ClassifierConfig::default() };
    let once = || {
        let corpus = build_synthetic_corpus(&spec, 9).unwrap();
        let (model, history) = train_classifier(&corpus, &cfg).unwrap();
        let perturb = perturbation_experiment(&model, &corpus.test, &PerturbConfig::standard()).unwrap();
        let reprs = sentence_representations(&model, &corpus.test, &ReprMode::Avg).unwrap();
        let pca = pca_project(&reprs, 3, true).unwrap();
        let comp = composition_analysis(&model, &corpus, &CompositionConfig::default()).unwrap();
        let mut toy = ToyBenchConfig::new(ToyTask::Addition);
        toy.n_models = 2;
        toy.max_attempts = 4;
        toy.train_size = 200;
        toy.val_size = 50;
        toy.test_size = 30;
        toy.train.max_steps = 300;
        toy.train.convergence_mse = 1.0;
        let toy = run_toy_benchmark(&toy).unwrap();
        vec![
            model_to_string(&model.model, None).unwrap(),
            model.embeddings.to_text(),
            serde_json::to_string(&history).unwrap(),
            perturb.table(),
            serde_json::to_string(&perturb).unwrap(),
            pca.to_tsv(None),
            comp.table(),
            serde_json::to_string(&comp).unwrap(),
            toy.table(),
        ]
    };
    let (a, b) = (once(), once());
    let differing: Vec<usize> = (0..a.len()).filter(|&i| a[i] != b[i]).collect();
    g.report(
        "9",
        differing.is_empty(),
        format!("{} report artifacts regenerated from the same seeds; differing: {differing:?}", a.len()),
    );
}

fn main() {
    let only: Option<Vec<String>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').map(|x| x.trim().to_string()).collect());
    let want = |id: &str| only.as_ref().is_none_or(|o| o.iter().any(|x| x == id));
    let mut g = Gate { failed: Vec::new() };
    if want("3") {
        criterion_3(&mut g);
    }
    if want("4") {
        criterion_4(&mut g);
    }
    if want("5") {
        criterion_5(&mut g);
    }
    if want("6") {
        criterion_6(&mut g);
    }
    if want("9") {
        criterion_9(&mut g);
    }
    if want("7") || want("8") {
        let s = sentiment();
        if want("7") {
            criterion_7(&mut g, &s);
        }
        if want("8") {
            criterion_8(&mut g, &s);
        }
    }
    if want("1") {
        criterion_1(&mut g);
    }
    if want("2") {
        criterion_2(&mut g);
    }
    if g.failed.is_empty() {
        println!("acceptance: all selected criteria passed");
    } else {
        println!("acceptance: FAILED criteria {}", g.failed.join(", "));
        std::process::exit(1);
    }
}
