//! Acceptance criteria, one verdict line each. Runs without the libtest
//! harness so the verdicts print even when everything passes.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use hotscore::corpus::{parse_corpus, CommentRecord};
use hotscore::evalharness::{bleu, corpus_bleu, mean_rank, mean_recall_at_k, mrr, recall_at_k, rouge_l, RankingTask};
use hotscore::metrics::{
    comprehensive_score, context_match, creativity, engagement, informativeness, keyword_match, length_penalty,
    relevance, vocab_diversity, DiversityMode, MetricParams,
};
use hotscore::providers::{KeywordSet, KeywordSource};
use hotscore::reward::{
    auxiliary_weights, pairwise_accuracy, sequence_loss_grad, train_reward_scorer, RankedSequence, RewardTrainConfig,
    ScoreTuple,
};
use hotscore::tot::{optimize_tot_weights, tot_step, Direction, Origin, StopReason, ToTTree, TotOptimizerConfig};
use hotscore::training_math::FusionParams;
use hotscore::weights::{auc, krippendorff_alpha, AlphaMetric, WeightSet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

// ---------------------------------------------------------------------------
// harness
// ---------------------------------------------------------------------------

/// Collects failed checks so a criterion reports all of them at once.
#[derive(Default)]
struct Checks {
    failures: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }

    fn close(&mut self, a: f64, b: f64, tol: f64, what: &str) {
        self.check((a - b).abs() <= tol, || format!("{what}: {a} vs {b} (tol {tol:e})"));
    }

    fn rel(&mut self, got: f64, want: f64, tol: f64, what: &str) {
        let err = (got - want).abs() / want.abs().max(f64::MIN_POSITIVE);
        self.check(got == want || err <= tol, || {
            format!("{what}: {got} vs {want} (rel err {err:e})")
        });
    }

    fn within(&mut self, elapsed: Duration, limit: Duration, what: &str) {
        self.check(elapsed < limit, || format!("{what} took {elapsed:?}, limit {limit:?}"));
    }
}

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(name: &str) -> PathBuf {
    root().join("fixtures").join(name)
}

fn hotscore(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hotscore"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// ---------------------------------------------------------------------------
// 1. formula fidelity
// ---------------------------------------------------------------------------

const ALPHABET: [char; 8] = ['可', '丽', '饼', '好', '吃', 'a', 'b', ' '];

fn random_text(rng: &mut ChaCha8Rng, max: usize) -> String {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect()
}

fn random_weights(rng: &mut ChaCha8Rng) -> WeightSet {
    let mut w = || rng.gen_range(-2.0..2.0);
    WeightSet {
        w1_i: w(),
        w2_i: w(),
        w1_r: w(),
        w2_r: w(),
        w1_c: w(),
        w2_c: w(),
        w1_u: w(),
        w2_u: w(),
        w_i: w(),
        w_r: w(),
        w_c: w(),
        w_u: w(),
        ..WeightSet::default()
    }
}

fn oracle_length_penalty(len: usize, l_min: u32, l_max: u32, alpha: f64) -> f64 {
    let (l, lo, hi) = (len as f64, f64::from(l_min), f64::from(l_max));
    let raw = if l < lo {
        l / lo
    } else if l <= hi {
        l / hi
    } else {
        1.0 - alpha * (l - hi)
    };
    raw.clamp(0.0, 1.0)
}

/// Total bigrams of the trimmed text over distinct ones, found by pairwise
/// comparison.
fn oracle_diversity(text: &str) -> f64 {
    let cs: Vec<char> = text.trim().chars().collect();
    if cs.len() < 2 {
        return 0.0;
    }
    let bigrams: Vec<(char, char)> = (0..cs.len() - 1).map(|i| (cs[i], cs[i + 1])).collect();
    let distinct = (0..bigrams.len())
        .filter(|&i| !bigrams[..i].contains(&bigrams[i]))
        .count();
    bigrams.len() as f64 / distinct as f64
}

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    dot / (na.sqrt() * nb.sqrt())
}

fn criterion_1(c: &mut Checks) {
    const N: usize = 1000;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let tol = 1e-9;
    for _ in 0..N {
        let l_min = rng.gen_range(1..20);
        let params = MetricParams {
            l_min,
            l_max: rng.gen_range(l_min..120),
            alpha_len: rng.gen_range(0.001..0.999),
            k_r: rng.gen_range(0.1..3.0),
            k_t: rng.gen_range(0.1..3.0),
            k_u: rng.gen_range(0.01..1.0),
            b_r: rng.gen_range(-3.0..3.0),
            b_t: rng.gen_range(-3.0..3.0),
            b_u: rng.gen_range(-3.0..3.0),
            ..MetricParams::default()
        };
        let w = random_weights(&mut rng);

        let len = rng.gen_range(0..200);
        let lp = length_penalty(len, &params);
        c.rel(
            lp,
            oracle_length_penalty(len, params.l_min, params.l_max, params.alpha_len),
            tol,
            "L_p",
        );

        let text = random_text(&mut rng, 40);
        let vd = vocab_diversity(&text, DiversityMode::TotalOverUnique);
        c.rel(vd, oracle_diversity(&text), tol, "V_d");
        c.rel(informativeness(lp, vd, &w), w.w1_i * lp + w.w2_i * vd, tol, "I");

        let mut pool: Vec<String> = (0..6).map(|_| random_text(&mut rng, 3).trim().to_string()).collect();
        pool.retain(|k| !k.is_empty());
        pool.sort();
        pool.dedup();
        let keywords = KeywordSet::new(pool.clone(), KeywordSource::LocalDefault);
        let dk = keyword_match(&text, &keywords);
        let want_dk = if pool.is_empty() {
            0.0
        } else {
            pool.iter().filter(|k| text.contains(k.as_str())).count() as f64 / pool.len() as f64
        };
        c.rel(dk, want_dk, tol, "D_k");

        let dim = rng.gen_range(2..32);
        let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dc = context_match(&a, &b).expect("non-zero vectors");
        c.rel(dc, oracle_cosine(&a, &b), tol, "D_c");
        c.rel(relevance(dk, dc, &w), w.w1_r * dk + w.w2_r * dc, tol, "R");

        let (xr, xt) = (f64::from(rng.gen_range(0..20u8)), f64::from(rng.gen_range(0..20u8)));
        let cr = creativity(xr, xt, &params, &w);
        let sr = sigmoid(params.k_r * (xr - params.b_r));
        let st = sigmoid(params.k_t * (xt - params.b_t));
        c.rel(cr.s_r, sr, tol, "S_r");
        c.rel(cr.s_t, st, tol, "S_t");
        c.rel(cr.c, w.w1_c * sr + w.w2_c * st, tol, "C");

        let (likes, replies) = (f64::from(rng.gen_range(0..50u8)), f64::from(rng.gen_range(0..50u8)));
        let (u_raw, u) = engagement(likes, replies, &params, &w);
        let want_raw = w.w1_u * likes + w.w2_u * replies;
        c.rel(u_raw, want_raw, tol, "U'");
        c.rel(u, sigmoid(params.k_u * (want_raw - params.b_u)), tol, "U");

        let (i, r, cc, uu) = (
            rng.gen_range(0.0..2.0),
            rng.gen_range(-1.0..2.0),
            rng.gen_range(0.0..2.0),
            rng.gen_range(0.0..1.0),
        );
        c.rel(
            comprehensive_score(i, r, cc, uu, &w),
            w.w_i * i + w.w_r * r + w.w_c * cc + w.w_u * uu,
            tol,
            "F",
        );
    }
    c.within(start.elapsed(), Duration::from_secs(5), "1000 inputs per operation");
}

// ---------------------------------------------------------------------------
// 2. table defaults
// ---------------------------------------------------------------------------

fn criterion_2(c: &mut Checks) {
    let w = WeightSet::default();
    let expect = [
        ("w1_I", w.w1_i, 0.6),
        ("w2_I", w.w2_i, 0.6),
        ("w1_R", w.w1_r, 0.6),
        ("w2_R", w.w2_r, 0.6),
        ("w1_C", w.w1_c, 0.6),
        ("w2_C", w.w2_c, 0.6),
        ("w1_U", w.w1_u, 0.5),
        ("w2_U", w.w2_u, 0.5),
        ("w_I", w.w_i, 0.2),
        ("w_R", w.w_r, 0.2),
        ("w_C", w.w_c, 0.2),
        ("w_U", w.w_u, 0.4),
    ];
    for (name, got, want) in expect {
        c.check(got == want, || format!("{name} = {got}, want {want}"));
    }
    c.check(!w.fitted, || "defaults must not be marked fitted".into());
    let f = FusionParams::default();
    for (name, got, want) in [
        ("w1_S", f.w1_s, 0.8),
        ("w2_S", f.w2_s, 0.2),
        ("w1_RL", f.w1_rl, 0.3),
        ("w2_RL", f.w2_rl, 0.7),
    ] {
        c.check(got == want, || format!("{name} = {got}, want {want}"));
    }

    // The binary with no weights file resolves the same values.
    let out = hotscore(&["--dry-run", "score", "--corpus", "x.jsonl", "--out", "y.jsonl"]);
    c.check(out.status.success(), || "dry run failed".into());
    let resolved: Value = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    c.check(resolved["config"]["weights"].is_null(), || {
        "a weights file was resolved".into()
    });
    for (name, want) in [("w1_S", 0.8), ("w2_S", 0.2), ("w1_RL", 0.3), ("w2_RL", 0.7)] {
        let got = resolved["config"]["fusion"][name].as_f64();
        c.check(got == Some(want), || format!("resolved fusion {name} = {got:?}"));
    }

    // Scores written without a weights file decompose under the table values.
    // The raw fixture plants empty comments, so score the filtered corpus.
    let dir = tempfile::tempdir().expect("tempdir");
    let filtered = dir.path().join("filtered.jsonl");
    let scores = dir.path().join("scores.jsonl");
    let out = hotscore(&[
        "-q",
        "filter",
        "--corpus",
        fixture("corpus.jsonl").to_str().unwrap(),
        "--out",
        filtered.to_str().unwrap(),
    ]);
    c.check(out.status.success(), || {
        format!("filter failed: {}", String::from_utf8_lossy(&out.stderr))
    });
    let kept = parse_corpus(&filtered).map(|k| k.comments.len()).unwrap_or(0);
    let out = hotscore(&[
        "-q",
        "score",
        "--corpus",
        filtered.to_str().unwrap(),
        "--out",
        scores.to_str().unwrap(),
    ]);
    c.check(out.status.success(), || {
        format!("score failed: {}", String::from_utf8_lossy(&out.stderr))
    });
    let text = std::fs::read_to_string(&scores).unwrap_or_default();
    c.check(kept > 0 && text.lines().count() == kept, || {
        format!("{} score lines for {kept} comments", text.lines().count())
    });
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).expect("score line parses");
        let g = |k: &str| v[k].as_f64().unwrap();
        // Values carry 9 significant digits.
        c.close(
            g("I"),
            0.6 * g("L_p") + 0.6 * g("V_d"),
            1e-8 * (1.0 + g("I").abs()),
            "I under defaults",
        );
        c.close(g("R"), 0.6 * g("D_k") + 0.6 * g("D_c"), 1e-8, "R under defaults");
        c.close(g("C"), 0.6 * g("S_r") + 0.6 * g("S_t"), 1e-8, "C under defaults");
        c.close(
            g("F"),
            0.2 * g("I") + 0.2 * g("R") + 0.2 * g("C") + 0.4 * g("U"),
            1e-8 * (1.0 + g("F").abs()),
            "F under defaults",
        );
    }
}

// ---------------------------------------------------------------------------
// 3. zero-count sigmoid value
// ---------------------------------------------------------------------------

fn criterion_3(c: &mut Checks) {
    let p = MetricParams::default();
    c.check(p.k_r == 1.0 && p.b_r == -1.0 && p.k_t == 1.0 && p.b_t == -1.0, || {
        format!("default sigmoid parameters changed: {p:?}")
    });
    let w = WeightSet::default();
    let cr = creativity(0.0, 0.0, &p, &w);
    c.close(cr.s_r, 0.731059, 1e-6, "S_r at count 0");
    c.close(cr.s_t, 0.731059, 1e-6, "S_t at count 0");
    c.close(cr.s_r, sigmoid(1.0), 1e-15, "S_r equals sigmoid(1)");
    c.check((cr.s_r - 0.1).abs() > 0.5, || "zero-count score is near 0.1".into());

    let readme = std::fs::read_to_string(root().join("README.md")).unwrap_or_default();
    c.check(readme.contains("0.731"), || {
        "README does not state the 0.731 value".into()
    });
    c.check(readme.contains("0.1"), || {
        "README does not mention the 0.1 claim".into()
    });
}

// ---------------------------------------------------------------------------
// 4. ranking-loss training
// ---------------------------------------------------------------------------

fn planted_sequences(rng: &mut ChaCha8Rng, hidden: &[f64], count: usize, k: usize) -> Vec<RankedSequence> {
    (0..count)
        .map(|s| {
            let mut items: Vec<(String, Vec<f64>)> = (0..k)
                .map(|i| {
                    (
                        format!("s{s}c{i}"),
                        (0..hidden.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    )
                })
                .collect();
            let score = |x: &[f64]| x.iter().zip(hidden).map(|(a, b)| a * b).sum::<f64>();
            items.sort_by(|a, b| score(&b.1).total_cmp(&score(&a.1)));
            RankedSequence {
                video_id: format!("s{s}"),
                ranking: items.iter().map(|(id, _)| id.clone()).collect(),
                features: items.into_iter().collect(),
            }
        })
        .collect()
}

fn criterion_4(c: &mut Checks) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let hidden = [1.5, -2.0, 0.5, 1.0];
    let train = planted_sequences(&mut rng, &hidden, 60, 6);
    let held_out = planted_sequences(&mut rng, &hidden, 40, 6);

    let (scorer, report) = train_reward_scorer(&train, &RewardTrainConfig::default()).expect("training runs");
    c.check(report.final_loss < report.initial_loss, || {
        format!("loss did not fall: {report:?}")
    });
    let acc = pairwise_accuracy(&scorer, &held_out);
    c.check(acc >= 0.95, || format!("held-out pairwise accuracy {acc}"));

    for _ in 0..20 {
        let w: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (_, grad) = sequence_loss_grad(&w, &train).expect("gradient");
        for j in 0..4 {
            let h = 1e-5;
            let mut up = w.clone();
            let mut down = w.clone();
            up[j] += h;
            down[j] -= h;
            let fd =
                (sequence_loss_grad(&up, &train).unwrap().0 - sequence_loss_grad(&down, &train).unwrap().0) / (2.0 * h);
            let err = (grad[j] - fd).abs() / grad[j].abs().max(fd.abs()).max(1e-8);
            c.check(err < 1e-6, || {
                format!("d/dw{j}: analytic {} vs fd {fd} (rel {err:e})", grad[j])
            });
        }
    }
    c.within(start.elapsed(), Duration::from_secs(30), "training");
}

// ---------------------------------------------------------------------------
// 5. auxiliary weights
// ---------------------------------------------------------------------------

fn oracle_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

fn oracle_aux(videos: &BTreeMap<String, Vec<ScoreTuple>>) -> [f64; 3] {
    let mut sums = [0.0; 3];
    let mut used = 0.0;
    for tuples in videos.values().filter(|t| t.len() >= 2) {
        let u: Vec<f64> = tuples.iter().map(|t| t.u).collect();
        let cols = [
            tuples.iter().map(|t| t.i).collect::<Vec<_>>(),
            tuples.iter().map(|t| t.r).collect(),
            tuples.iter().map(|t| t.c).collect(),
        ];
        for k in 0..3 {
            sums[k] += oracle_pearson(&cols[k], &u).unwrap_or(0.0);
        }
        used += 1.0;
    }
    if used == 0.0 {
        return [1.0 / 3.0; 3];
    }
    let floored = sums.map(|s| (s / used).max(0.0));
    let total: f64 = floored.iter().sum();
    if total == 0.0 {
        [1.0 / 3.0; 3]
    } else {
        floored.map(|v| v / total)
    }
}

fn criterion_5(c: &mut Checks) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // I tracks U, R opposes it, C is noise.
    let mut videos = BTreeMap::new();
    for v in 0..12 {
        let n = rng.gen_range(1..15);
        let tuples: Vec<ScoreTuple> = (0..n)
            .map(|_| {
                let u: f64 = rng.gen_range(0.0..1.0);
                ScoreTuple {
                    i: u + rng.gen_range(-0.2..0.2),
                    r: -u + rng.gen_range(-0.3..0.3),
                    c: rng.gen_range(0.0..1.0),
                    u,
                }
            })
            .collect();
        videos.insert(format!("v{v}"), tuples);
    }
    let got = auxiliary_weights(&videos);
    let want = oracle_aux(&videos);
    for k in 0..3 {
        c.close(got[k], want[k], 1e-9, &format!("aux weight {k}"));
    }
    c.close(got.iter().sum(), 1.0, 1e-12, "weights sum");
    c.check(got[0] > got[2] && got[1] == 0.0, || {
        format!("planted ordering lost: {got:?}")
    });

    // A corpus with no usable correlation falls back to thirds.
    let flat: BTreeMap<String, Vec<ScoreTuple>> = [(
        "v".to_string(),
        vec![
            ScoreTuple {
                i: 1.0,
                r: 1.0,
                c: 1.0,
                u: 0.5
            };
            3
        ],
    )]
    .into();
    let got = auxiliary_weights(&flat);
    c.check(got == oracle_aux(&flat) && got == [1.0 / 3.0; 3], || {
        format!("fallback {got:?}")
    });
}

// ---------------------------------------------------------------------------
// 6. weight update dynamics
// ---------------------------------------------------------------------------

fn criterion_6(c: &mut Checks) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = TotOptimizerConfig::default();
    for _ in 0..1000 {
        let w: [f64; 5] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
        let f: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let lr = rng.gen_range(0.001..1.0);
        let cfg = TotOptimizerConfig {
            learning_rate: lr,
            ..cfg
        };
        let step = tot_step(&w, &f, &cfg);
        let want: [f64; 5] = std::array::from_fn(|i| (w[i] - lr * f[i]).clamp(0.0, 1.0));
        c.check(step == want, || format!("step {step:?} vs {want:?}"));
        let up = tot_step(
            &w,
            &f,
            &TotOptimizerConfig {
                direction: Direction::Ascent,
                ..cfg
            },
        );
        let want_up: [f64; 5] = std::array::from_fn(|i| (w[i] + lr * f[i]).clamp(0.0, 1.0));
        c.check(up == want_up, || format!("ascent step {up:?} vs {want_up:?}"));
    }

    // Constant positive gradient: weight i reaches 0 after ceil(w0 / (lr f_i))
    // steps; the run ends when the slowest one does.
    let fixtures: [(f64, f64, [f64; 5]); 3] = [
        (0.2, 0.1, [0.07, 0.03, 0.11, 0.013, 0.9]),
        (0.2, 0.05, [0.3, 0.3, 0.3, 0.3, 0.3]),
        (0.5, 0.01, [0.7, 0.33, 0.21, 0.09, 0.6]),
    ];
    for (w0, lr, f) in fixtures {
        let mut tree = ToTTree::new(Default::default(), Origin::Merged);
        tree.set_weights([w0; 5]);
        let cfg = TotOptimizerConfig {
            learning_rate: lr,
            max_iters: 100_000,
            direction: Direction::DescentAsWritten,
        };
        let (out, trace) = optimize_tot_weights(&tree, &f, &cfg).expect("optimizer runs");
        let closed: Vec<usize> = f.iter().map(|fi| (w0 / (lr * fi)).ceil() as usize).collect();
        c.check(out.weights() == [0.0; 5], || {
            format!("not at floor: {:?}", out.weights())
        });
        c.check(trace.stop == StopReason::AllClamped, || {
            format!("stop {:?}", trace.stop)
        });
        let slowest = *closed.iter().max().unwrap();
        c.check(trace.iterations == slowest, || {
            format!("{} iterations, closed form {slowest}", trace.iterations)
        });
        for (i, &n) in closed.iter().enumerate() {
            let first_zero = trace.history.iter().position(|h| h[i] == 0.0).map(|p| p + 1);
            c.check(first_zero == Some(n), || {
                format!("weight {i} floored at {first_zero:?}, closed form {n}")
            });
        }
    }
}

// ---------------------------------------------------------------------------
// 7. filtering
// ---------------------------------------------------------------------------

fn oracle_emoji(ch: char) -> bool {
    matches!(ch as u32, 0x1F300..=0x1FAFF | 0x2600..=0x27BF)
}

fn lexicon_terms() -> Vec<String> {
    let mut terms = Vec::new();
    for cat in ["negative", "political", "profanity", "promotional"] {
        let data = std::fs::read_to_string(fixture(&format!("lexicons/{cat}.txt"))).expect("lexicon");
        terms.extend(
            data.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase),
        );
    }
    terms
}

fn criterion_7(c: &mut Checks) {
    let corpus = parse_corpus(&fixture("corpus.jsonl")).expect("fixture");
    c.check(corpus.comments.len() == 100, || {
        format!("{} comments in fixture", corpus.comments.len())
    });
    let terms = lexicon_terms();
    let mut rejected: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    let mut kept: Vec<&CommentRecord> = Vec::new();
    for cm in &corpus.comments {
        let t = cm.text.trim();
        let n = t.chars().count();
        let rule = if !(1..=50).contains(&n) {
            Some("length")
        } else if t.chars().any(oracle_emoji) {
            Some("emoji")
        } else if t.is_ascii() {
            Some("ascii")
        } else if terms.iter().any(|term| t.to_lowercase().contains(term.as_str())) {
            Some("lexicon")
        } else {
            None
        };
        match rule {
            Some(r) => {
                rejected.entry(r).or_default().insert(cm.comment_id.clone());
            }
            None => kept.push(cm),
        }
    }
    // The fixture plants 10/11/10/12 violations in rule order.
    for (rule, planted) in [("length", 10), ("emoji", 11), ("ascii", 10), ("lexicon", 12)] {
        let n = rejected.get(rule).map_or(0, BTreeSet::len);
        c.check(n == planted, || {
            format!("{rule}: oracle rejects {n}, fixture plants {planted}")
        });
    }
    c.check(kept.len() == 57, || format!("oracle keeps {} comments", kept.len()));
    let mut per_video: BTreeMap<&str, usize> = BTreeMap::new();
    for cm in &kept {
        *per_video.entry(cm.video_id.as_str()).or_default() += 1;
    }
    let kept_videos: BTreeSet<&str> = corpus
        .videos
        .iter()
        .map(|v| v.video_id.as_str())
        .filter(|v| per_video.get(v).copied().unwrap_or(0) >= 2)
        .collect();
    let want_comments: Vec<&str> = kept
        .iter()
        .filter(|cm| kept_videos.contains(cm.video_id.as_str()))
        .map(|cm| cm.comment_id.as_str())
        .collect();

    let dir = tempfile::tempdir().expect("tempdir");
    let (out, report) = (dir.path().join("f.jsonl"), dir.path().join("f.json"));
    let run = hotscore(&[
        "-q",
        "filter",
        "--corpus",
        fixture("corpus.jsonl").to_str().unwrap(),
        "--lexicons",
        fixture("lexicons").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    c.check(run.status.success(), || {
        format!("filter failed: {}", String::from_utf8_lossy(&run.stderr))
    });
    let filtered = parse_corpus(&out).expect("filtered corpus");
    let got_comments: Vec<&str> = filtered.comments.iter().map(|cm| cm.comment_id.as_str()).collect();
    c.check(got_comments == want_comments, || {
        format!("kept {got_comments:?}, oracle {want_comments:?}")
    });
    let got_videos: BTreeSet<&str> = filtered.videos.iter().map(|v| v.video_id.as_str()).collect();
    c.check(got_videos == kept_videos, || {
        format!("videos {got_videos:?}, oracle {kept_videos:?}")
    });

    let rep: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap_or_default()).unwrap_or(Value::Null);
    let comments = &rep["comments"];
    let input = comments["input_count"].as_u64().unwrap_or(0);
    let kept_n = comments["kept_count"].as_u64().unwrap_or(0);
    let rejected_sum: u64 = comments["rejected"]
        .as_object()
        .map_or(0, |m| m.values().filter_map(Value::as_u64).sum());
    c.check(input == kept_n + rejected_sum && input == 100, || {
        format!("report does not reconcile: {comments}")
    });
    c.check(kept_n as usize == kept.len(), || {
        format!("kept_count {kept_n}, oracle {}", kept.len())
    });
    for (rule, ids) in &rejected {
        let got = comments["rejected"][rule].as_u64().unwrap_or(0) as usize;
        c.check(got == ids.len(), || {
            format!("{rule}: report {got}, oracle {}", ids.len())
        });
    }
}

// ---------------------------------------------------------------------------
// 8. evaluation metrics
// ---------------------------------------------------------------------------

/// Mann-Whitney U from average ranks.
fn rank_sum_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let r_pos: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(r, _)| r).sum();
    (r_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg)
}

fn scan_rank(t: &RankingTask) -> usize {
    t.relevant
        .iter()
        .map(|&r| {
            1 + (0..t.scores.len())
                .filter(|&j| t.scores[j] > t.scores[r] || (t.scores[j] == t.scores[r] && j < r))
                .count()
        })
        .min()
        .unwrap()
}

fn criterion_8(c: &mut Checks) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for round in 0..50 {
        let labels: Vec<u8> = (0..200)
            .map(|i| if i < 2 { i as u8 } else { rng.gen_range(0..=1) })
            .collect();
        // Coarse scores in some rounds to exercise ties.
        let scores: Vec<f64> = (0..200)
            .map(|_| {
                if round % 2 == 0 {
                    rng.gen_range(0.0..1.0)
                } else {
                    f64::from(rng.gen_range(0..8u8))
                }
            })
            .collect();
        c.close(
            auc(&scores, &labels).expect("auc"),
            rank_sum_auc(&scores, &labels),
            1e-12,
            "AUC vs rank sum",
        );
    }

    for _ in 0..50 {
        let tasks: Vec<RankingTask> = (0..rng.gen_range(1..40))
            .map(|_| {
                let size = rng.gen_range(1..40);
                let mut relevant: Vec<usize> = (0..size).collect();
                relevant.shuffle(&mut rng);
                relevant.truncate(rng.gen_range(1..=size.min(3)));
                RankingTask {
                    candidates: vec![String::new(); size],
                    relevant: relevant.into_iter().collect(),
                    scores: (0..size).map(|_| f64::from(rng.gen_range(0..6u8))).collect(),
                }
            })
            .collect();
        let ranks: Vec<usize> = tasks.iter().map(scan_rank).collect();
        let n = tasks.len() as f64;
        let r = [1, 5, 10].map(|k| mean_recall_at_k(&tasks, k).unwrap());
        for (j, k) in [1, 5, 10].into_iter().enumerate() {
            let want = ranks.iter().filter(|&&x| x <= k).count() as f64 / n;
            c.close(r[j], want, 1e-12, &format!("R@{k}"));
        }
        c.check(r[0] <= r[1] && r[1] <= r[2], || format!("recall not monotone: {r:?}"));
        c.close(
            mean_rank(&tasks).unwrap(),
            ranks.iter().sum::<usize>() as f64 / n,
            1e-12,
            "MR",
        );
        c.close(
            mrr(&tasks).unwrap(),
            ranks.iter().map(|&x| 1.0 / x as f64).sum::<f64>() / n,
            1e-12,
            "MRR",
        );
        for (t, &rank) in tasks.iter().zip(&ranks) {
            c.check(
                recall_at_k(t, rank) == 1.0 && (rank == 1 || recall_at_k(t, rank - 1) == 0.0),
                || "per-task recall disagrees with scan".into(),
            );
        }
    }

    // Hand-computed BLEU: "the the the the" vs "the cat" clips p1 to 1/4;
    // unmatched orders get add-one counts 1/4, 1/3, 1/2; c = 4 > r = 2.
    let want = (0.25f64 * 0.25 * (1.0 / 3.0) * 0.5).powf(0.25);
    c.close(
        bleu("the the the the", &["the cat"], 4).unwrap(),
        want,
        1e-6,
        "BLEU clipping example",
    );
    // 今天很开心 vs 今天不开心: p1 = 4/5, p2 = 2/4, p3 = 1/4 and p4 = 1/3 by add-one.
    let want = (0.8f64 * 0.5 * 0.25 * (1.0 / 3.0)).powf(0.25);
    c.close(
        bleu("今天很开心", &["今天不开心"], 4).unwrap(),
        want,
        1e-6,
        "BLEU CJK example",
    );
    // Brevity: "a b" vs "a b c d", bigrams only: p1 = p2 = 1, BP = e^(1 - 4/2).
    c.close(
        bleu("a b", &["a b c d"], 2).unwrap(),
        (-1.0f64).exp(),
        1e-6,
        "BLEU brevity example",
    );
    let want = ((3.0f64 / 4.0) * (1.0 / 2.0)).sqrt();
    c.close(
        corpus_bleu(&[("a b", vec!["a b"]), ("a b", vec!["a c"])], 2).unwrap(),
        want,
        1e-6,
        "corpus BLEU",
    );
    // ROUGE-L: LCS("a b c d", "a c d e") = 3, P = R = 3/4, F = 3/4.
    c.close(rouge_l("a b c d", "a c d e"), 0.75, 1e-6, "ROUGE-L equal lengths");
    // LCS 2 of candidate 2, reference 4: P = 1, R = 1/2,
    // F = (1 + b^2) P R / (R + b^2 P) with b = 1.2.
    let b2 = 1.44;
    c.close(
        rouge_l("a b", "a x b y"),
        (1.0 + b2) * 0.5 / (0.5 + b2),
        1e-6,
        "ROUGE-L recall-weighted",
    );

    // Coincidence-matrix example (4 coders, 12 units, blanks missing).
    // Nominal: n = 40 pairable values, D_o = 10/40, expected 152/(40*39)
    // scaled, alpha = 113/152. Interval: alpha = 951/1120.
    let rows: [[u8; 12]; 4] = [
        [1, 2, 3, 3, 2, 1, 4, 1, 2, 0, 0, 0],
        [1, 2, 3, 3, 2, 2, 4, 1, 2, 5, 0, 3],
        [0, 3, 3, 3, 2, 3, 4, 2, 2, 5, 1, 0],
        [1, 2, 3, 3, 2, 4, 4, 1, 2, 5, 1, 0],
    ];
    let ratings: Vec<Vec<Option<f64>>> = rows
        .iter()
        .map(|r| r.iter().map(|&v| (v != 0).then_some(f64::from(v))).collect())
        .collect();
    c.close(
        krippendorff_alpha(&ratings, AlphaMetric::Nominal).unwrap(),
        113.0 / 152.0,
        1e-6,
        "nominal alpha",
    );
    c.close(
        krippendorff_alpha(&ratings, AlphaMetric::Interval).unwrap(),
        951.0 / 1120.0,
        1e-6,
        "interval alpha",
    );
}

// ---------------------------------------------------------------------------
// 9. determinism
// ---------------------------------------------------------------------------

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .expect("output dir")
        .filter_map(Result::ok)
        .map(|e| {
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).expect("artifact"),
            )
        })
        .collect()
}

fn criterion_9(c: &mut Checks) {
    let start = Instant::now();
    let tmp = tempfile::tempdir().expect("tempdir");
    let mut outputs = Vec::new();
    for name in ["first", "second"] {
        let dir = tmp.path().join(name);
        let run = hotscore(&[
            "-q",
            "--seed",
            "42",
            "run",
            "--corpus",
            fixture("corpus.jsonl").to_str().unwrap(),
            "--lexicons",
            fixture("lexicons").to_str().unwrap(),
            "--kb",
            fixture("kb.json").to_str().unwrap(),
            "--out-dir",
            dir.to_str().unwrap(),
        ]);
        c.check(run.status.success(), || {
            format!("{name} run failed: {}", String::from_utf8_lossy(&run.stderr))
        });
        outputs.push(files(&dir));
    }
    c.check(outputs[0].len() >= 10, || {
        format!("only {} artifacts", outputs[0].len())
    });
    let names: Vec<&String> = outputs[0].keys().collect();
    c.check(names == outputs[1].keys().collect::<Vec<_>>(), || {
        "artifact sets differ".into()
    });
    for (name, bytes) in &outputs[0] {
        c.check(outputs[1].get(name) == Some(bytes), || {
            format!("{name} differs between runs")
        });
    }
    c.within(start.elapsed(), Duration::from_secs(60), "two pipeline runs");
}

type Criterion = (&'static str, fn(&mut Checks));

fn main() {
    let criteria: [Criterion; 9] = [
        ("formula fidelity", criterion_1),
        ("table defaults", criterion_2),
        ("zero-count sigmoid discrepancy", criterion_3),
        ("ranking-loss training", criterion_4),
        ("auxiliary reward weights", criterion_5),
        ("thought-tree weight dynamics", criterion_6),
        ("filtering", criterion_7),
        ("evaluation metrics", criterion_8),
        ("determinism", criterion_9),
    ];
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if filter.as_ref().is_some_and(|f| !name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let mut checks = Checks::default();
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| run(&mut checks)));
        if let Err(e) = outcome {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            checks.failures.push(format!("panicked: {msg}"));
        }
        let verdict = if checks.failures.is_empty() { "PASS" } else { "FAIL" };
        println!("criterion {} {verdict} {name} ({:.2?})", i + 1, start.elapsed());
        for f in checks.failures.iter().take(10) {
            println!("    {f}");
        }
        if !checks.failures.is_empty() {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
