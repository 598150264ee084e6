//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Everything runs on the mock backend.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ccr_core::corpus::{assign_splits, ParagraphRecord, Split};
use ccr_core::embedding::{AdapterParams, Encoder, MockBackend};
use ccr_core::eval::{
    benchmark_officials, embedding_table, eval_qic, eval_sts_embedded, generate_synthetic_corpus, mean_and_stderr,
    official_mean, pearson, spearman, stratified_folds, synthetic_officials, synthetic_questionnaires, PairSource,
    StsConfig,
};
use ccr_core::pairing::{
    build_pair_set, compute_thresholds, label_pairs, sample_triplets_hard, sample_triplets_random, title_similarity_matrix,
    validation_pairs, Label, LabeledPair, LabeledPairSet, ThresholdConfig, TitleSims,
};
use ccr_core::scoring::{ccr_score, ddr_score, encode_items, encode_records, pm_pseudo_ground_truth, Dictionary};
use ccr_core::trainer::{train_adapter, triplet_loss, triplet_loss_grad, TrainConfig, TripletLossConfig};
use ccr_core::wordvec::{train_word_vectors, Architecture, WordVecTrainConfig, WordVectorModel};
use indexmap::IndexMap;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<f64, String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {:.2}s, limit {:.0}s", t.as_secs_f64(), limit.as_secs_f64()))?;
    Ok(t.as_secs_f64())
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
}

fn mean_vec(vs: &[&[f64]]) -> Vec<f64> {
    let mut out = vec![0.0; vs[0].len()];
    for v in vs {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += x;
        }
    }
    out.iter().map(|x| x / vs.len() as f64).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

// ---------------------------------------------------------------- exact arithmetic

fn q(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

fn qsum_sq_diff(a: &[BigRational], b: &[BigRational]) -> BigRational {
    a.iter().zip(b).fold(BigRational::zero(), |acc, (x, y)| {
        let d = x - y;
        acc + &d * &d
    })
}

fn qaffine(w: &[Vec<BigRational>], b: &[BigRational], x: &[BigRational]) -> Vec<BigRational> {
    w.iter()
        .zip(b)
        .map(|(row, bi)| row.iter().zip(x).fold(bi.clone(), |acc, (wij, xj)| acc + wij * xj))
        .collect()
}

// ---------------------------------------------------------------- criteria

/// Analytic gradient against central differences evaluated in exact rational
/// arithmetic, so the only error left is the analytic side's rounding.
fn gradient_correctness() -> Result<String, String> {
    let start = Instant::now();
    let dim = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cfg = TripletLossConfig::default();
    let alpha = q(cfg.margin_alpha);
    let h = q(1e-5);
    let two_h = &h + &h;
    let (mut active, mut inactive, mut resampled) = (0, 0, 0);
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    while instances < 100 {
        let w: Vec<Vec<f64>> = (0..dim)
            .map(|i| {
                let mut r = uniform(&mut rng, dim, -0.3, 0.3);
                r[i] += 1.0;
                r
            })
            .collect();
        let b = uniform(&mut rng, dim, -0.5, 0.5);
        let a = uniform(&mut rng, dim, -1.0, 1.0);
        let p = uniform(&mut rng, dim, -1.0, 1.0);
        let spread = if instances % 2 == 0 { 3.0 } else { 1.0 };
        let n = uniform(&mut rng, dim, -spread, spread);

        let wq: Vec<Vec<BigRational>> = w.iter().map(|r| r.iter().map(|&x| q(x)).collect()).collect();
        let bq: Vec<BigRational> = b.iter().map(|&x| q(x)).collect();
        let (aq, pq, nq): (Vec<_>, Vec<_>, Vec<_>) = (
            a.iter().map(|&x| q(x)).collect(),
            p.iter().map(|&x| q(x)).collect(),
            n.iter().map(|&x| q(x)).collect(),
        );
        let fa = qaffine(&wq, &bq, &aq);
        let fp = qaffine(&wq, &bq, &pq);
        let fn_ = qaffine(&wq, &bq, &nq);
        let arg = qsum_sq_diff(&fa, &fp) - qsum_sq_diff(&fa, &fn_) + &alpha;
        // keep the ±h stencil on one side of the hinge
        if arg.abs() < q(1e-2) {
            resampled += 1;
            continue;
        }
        instances += 1;
        if arg.is_positive() {
            active += 1;
        } else {
            inactive += 1;
        }

        let params = AdapterParams::from_parts(w.clone(), b.clone()).map_err(|e| e.to_string())?;
        let g = triplet_loss_grad(&a, &p, &n, &params, &cfg).map_err(|e| e.to_string())?;
        let mut compare = |analytic: f64, fd: BigRational| {
            let diff = (q(analytic) - fd).abs().to_f64().expect("finite");
            worst = worst.max(diff / (analytic.abs() + 1e-8));
        };
        // W_ik moves only component i of each output; b_i moves it for all three
        let hinge_shifted = |i: usize, da: &BigRational, dp: &BigRational, dn: &BigRational| {
            let (ep, en) = (&fa[i] - &fp[i], &fa[i] - &fn_[i]);
            let (ep2, en2) = (&ep + da - dp, &en + da - dn);
            let v = &arg - &ep * &ep + &ep2 * &ep2 + &en * &en - &en2 * &en2;
            if v.is_positive() {
                v
            } else {
                BigRational::zero()
            }
        };
        for i in 0..dim {
            for k in 0..dim {
                let step = |s: &BigRational| {
                    let d = s * &h;
                    hinge_shifted(i, &(&d * &aq[k]), &(&d * &pq[k]), &(&d * &nq[k]))
                };
                let fd = (step(&q(1.0)) - step(&q(-1.0))) / &two_h;
                compare(g.dw[i * dim + k], fd);
            }
            let step = |s: &BigRational| {
                let d = s * &h;
                hinge_shifted(i, &d, &d, &d)
            };
            let fd = (step(&q(1.0)) - step(&q(-1.0))) / &two_h;
            compare(g.db[i], fd);
        }
    }
    ensure(active >= 10 && inactive >= 10, || {
        format!("need both regimes, got {active} active / {inactive} inactive")
    })?;
    ensure(worst < 1e-4, || format!("max relative error {worst:.3e}"))?;
    let secs = within(Duration::from_secs(5), start)?;
    Ok(format!(
        "100 instances ({active} active, {inactive} inactive, {resampled} near-hinge resampled), max rel err {worst:.2e}, {secs:.2}s"
    ))
}

fn loss_semantics() -> Result<String, String> {
    let l = |a: &[f64], p: &[f64], n: &[f64], alpha: f64| {
        triplet_loss(a, p, n, &TripletLossConfig { margin_alpha: alpha }).map_err(|e| e.to_string())
    };
    let e1 = l(&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], 0.0)?;
    let e2 = l(&[0.0, 0.0], &[1.0, 0.0], &[3.0, 0.0], 5.0)?;
    let e3 = l(&[0.0, 0.0], &[1.0, 0.0], &[3.0, 0.0], 10.0)?;
    ensure(e1 == 0.0 && e2 == 0.0 && e3 == 2.0, || format!("examples gave {e1}, {e2}, {e3}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut checked = 0;
    while checked < 1000 {
        let d = rng.random_range(1..=16);
        let alpha = rng.random_range(0.0..10.0);
        let a = uniform(&mut rng, d, -1.0, 1.0);
        let p = uniform(&mut rng, d, -1.0, 1.0);
        let dp = sq_dist(&a, &p);
        let dir = uniform(&mut rng, d, -1.0, 1.0);
        let scale = (dp + alpha).sqrt() / dot(&dir, &dir).sqrt() * rng.random_range(1.0..3.0);
        let n: Vec<f64> = a.iter().zip(&dir).map(|(x, u)| x + scale * u).collect();
        if sq_dist(&a, &n) < dp + alpha {
            continue;
        }
        checked += 1;
        let v = l(&a, &p, &n, alpha)?;
        ensure(v == 0.0, || format!("loss {v} with D- >= D+ + alpha (alpha {alpha})"))?;
    }
    Ok("3 hand examples exact; 1000 random D- >= D+ + alpha instances give 0".into())
}

/// Nearest rank from an integer percentage in tenths: ceil(p10 * n / 1000).
fn rank_tenths(p10: usize, n: usize) -> usize {
    (p10 * n).div_ceil(1000).clamp(1, n)
}

fn brute_label(ra: &ParagraphRecord, rb: &ParagraphRecord, sims: &TitleSims, lo: f64, hi: f64) -> Option<(f64, Label)> {
    if ra.title == rb.title {
        return Some((1.0, Label::Positive));
    }
    let s = sims.get(&ra.title, &rb.title)?;
    if s > hi {
        Some((s, Label::Positive))
    } else if s < lo {
        Some((s, Label::Negative))
    } else {
        None
    }
}

fn sampling_correctness() -> Result<String, String> {
    let start = Instant::now();
    let syn = generate_synthetic_corpus(6, 5, 16, 0.3, 11).map_err(|e| e.to_string())?;
    let records = &syn.records;
    ensure(records.len() == 30, || format!("{} paragraphs", records.len()))?;
    let model = syn.title_model();
    let sims = title_similarity_matrix(records, &model).map_err(|e| e.to_string())?;
    for (a, b, s) in sims.iter() {
        let oracle = cos(&syn.title_vectors[a], &syn.title_vectors[b]);
        ensure((s - oracle).abs() < 1e-12, || format!("title sim {a}/{b}: {s} vs {oracle}"))?;
    }

    let mut sorted = sims.values().to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let (lo, hi) = (sorted[rank_tenths(250, n) - 1], sorted[rank_tenths(750, n) - 1]);
    let thr = compute_thresholds(sims.values(), ThresholdConfig::new(25.0, 75.0).unwrap()).map_err(|e| e.to_string())?;
    ensure(thr == (lo, hi), || format!("thresholds {thr:?} vs brute force {:?}", (lo, hi)))?;

    let got: Vec<LabeledPair> = label_pairs(records, &sims, thr).collect();
    let mut brute = Vec::new();
    for x in 0..records.len() {
        for y in x + 1..records.len() {
            if let Some((sim, label)) = brute_label(&records[x], &records[y], &sims, lo, hi) {
                brute.push(LabeledPair {
                    i: records[x].id.clone(),
                    j: records[y].id.clone(),
                    sim,
                    label,
                });
            }
        }
    }
    ensure(got == brute, || format!("label_pairs gave {} pairs, brute force {}", got.len(), brute.len()))?;

    let backend = MockBackend::new(16, 5);
    let emb: IndexMap<String, Vec<f64>> =
        records.iter().map(|r| (r.id.clone(), backend.embed_one(&r.text))).collect();
    let set = LabeledPairSet {
        pairs: got,
        thresholds_used: thr,
    };
    let anchors: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();

    // exhaustive scan: every other paragraph, partners visited in id order
    let mut by_id: Vec<&ParagraphRecord> = records.iter().collect();
    by_id.sort_by(|a, b| a.id.cmp(&b.id));
    let mut expect = Vec::new();
    let mut pools: HashMap<&str, (HashSet<&str>, HashSet<&str>)> = HashMap::new();
    for ra in records {
        let mut best_pos: Option<(&str, f64)> = None;
        let mut best_neg: Option<(&str, f64)> = None;
        let pool = pools.entry(ra.id.as_str()).or_default();
        for rb in &by_id {
            if rb.id == ra.id {
                continue;
            }
            let c = cos(&emb[&ra.id], &emb[&rb.id]);
            match brute_label(ra, rb, &sims, lo, hi).map(|x| x.1) {
                Some(Label::Positive) => {
                    pool.0.insert(&rb.id);
                    if best_pos.is_none_or(|(_, v)| c < v) {
                        best_pos = Some((&rb.id, c));
                    }
                }
                Some(Label::Negative) => {
                    pool.1.insert(&rb.id);
                    if best_neg.is_none_or(|(_, v)| c > v) {
                        best_neg = Some((&rb.id, c));
                    }
                }
                None => {}
            }
        }
        if let (Some(p), Some(n)) = (best_pos, best_neg) {
            expect.push((ra.id.clone(), p.0.to_owned(), n.0.to_owned()));
        }
    }
    let hard = sample_triplets_hard(&set, &anchors, &emb).map_err(|e| e.to_string())?;
    let hard_rows: Vec<(String, String, String)> =
        hard.triplets.iter().map(|t| (t.anchor.clone(), t.pos.clone(), t.neg.clone())).collect();
    ensure(hard_rows == expect, || "hard sampling differs from the exhaustive scan".into())?;
    ensure(hard.skipped == records.len() - expect.len(), || format!("skipped {}", hard.skipped))?;

    let r1 = sample_triplets_random(&set, &anchors, 99).map_err(|e| e.to_string())?;
    let r2 = sample_triplets_random(&set, &anchors, 99).map_err(|e| e.to_string())?;
    ensure(r1 == r2, || "random sampling not reproducible under a fixed seed".into())?;
    let mut seen = HashSet::new();
    for t in r1.triplets.iter().chain(&hard.triplets) {
        let (pos, neg) = &pools[t.anchor.as_str()];
        ensure(pos.contains(t.pos.as_str()) && neg.contains(t.neg.as_str()), || {
            format!("triplet {t:?} uses a partner outside the anchor's pools")
        })?;
    }
    for t in &r1.triplets {
        ensure(seen.insert(t.anchor.as_str()), || format!("anchor {} used twice", t.anchor))?;
    }
    ensure(r1.triplets.len() == expect.len(), || {
        format!("random sampling produced {} triplets, expected {}", r1.triplets.len(), expect.len())
    })?;
    let secs = within(Duration::from_secs(5), start)?;
    Ok(format!(
        "{} labeled pairs match brute force; {} hard triplets match exhaustive scan; anchor-once holds; {secs:.2}s",
        set.pairs.len(),
        expect.len()
    ))
}

fn threshold_sweep() -> Result<String, String> {
    let (titles, per) = (24, 3);
    let syn = generate_synthetic_corpus(titles, per, 16, 0.3, 5).map_err(|e| e.to_string())?;
    let sims = title_similarity_matrix(&syn.records, &syn.title_model()).map_err(|e| e.to_string())?;
    let n = sims.values().len();
    let mut sorted = sims.values().to_vec();
    sorted.sort_by(f64::total_cmp);
    ensure(sorted.windows(2).all(|w| w[0] < w[1]), || "duplicate title similarities".into())?;

    let presets = [(5, 995), (10, 990), (100, 900), (250, 750)];
    let same_title = titles * per * (per - 1) / 2;
    let mut sets = Vec::new();
    let mut fractions = Vec::new();
    for (lo10, hi10) in presets {
        let cfg = ThresholdConfig::new(lo10 as f64 / 10.0, hi10 as f64 / 10.0).unwrap();
        let set = build_pair_set(&syn.records, &sims, cfg).map_err(|e| e.to_string())?;
        let (k_lo, k_hi) = (rank_tenths(lo10, n), rank_tenths(hi10, n));
        let neg_titles = k_lo - 1;
        let pos_titles = n - k_hi;
        let neg = neg_titles * per * per;
        let pos = pos_titles * per * per + same_title;
        let expected = neg as f64 / (neg + pos) as f64;
        let got_neg = set.pairs.iter().filter(|p| p.label == Label::Negative).count();
        ensure(got_neg == neg && set.pairs.len() == neg + pos, || {
            format!("preset {cfg}: {got_neg} negatives of {}, expected {neg} of {}", set.pairs.len(), neg + pos)
        })?;
        ensure(set.negative_fraction() == expected, || {
            format!("preset {cfg}: negative fraction {} vs {expected}", set.negative_fraction())
        })?;
        let title_neg: HashSet<(String, String)> = set
            .pairs
            .iter()
            .filter(|p| p.label == Label::Negative)
            .map(|p| {
                let t = |id: &str| syn.records.iter().find(|r| r.id == id).unwrap().title.clone();
                let (a, b) = (t(&p.i), t(&p.j));
                if a < b {
                    (a, b)
                } else {
                    (b, a)
                }
            })
            .collect();
        ensure(title_neg.len() as f64 / n as f64 == (k_lo - 1) as f64 / n as f64, || {
            format!("preset {cfg}: {} negative title pairs, expected {}", title_neg.len(), k_lo - 1)
        })?;
        fractions.push(format!("{cfg}:{expected:.4}"));
        sets.push(set.pairs);
    }
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            ensure(sets[i] != sets[j], || format!("presets {i} and {j} give identical pair sets"))?;
        }
    }
    Ok(format!("N={n} distinct title sims; 4 distinct sets; negative fractions {}", fractions.join(" ")))
}

fn qvec(v: &[f64]) -> Vec<BigRational> {
    v.iter().map(|&x| q(x)).collect()
}

fn qmean(v: &[BigRational]) -> BigRational {
    v.iter().fold(BigRational::zero(), |a, x| a + x) / BigRational::from_integer(BigInt::from(v.len()))
}

/// Exact Pearson up to the final square root; `None` for zero variance.
fn oracle_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let (xq, yq) = (qvec(x), qvec(y));
    let (mx, my) = (qmean(&xq), qmean(&yq));
    let mut sxy = BigRational::zero();
    let mut sxx = BigRational::zero();
    let mut syy = BigRational::zero();
    for (a, b) in xq.iter().zip(&yq) {
        let (dx, dy) = (a - &mx, b - &my);
        sxy += &dx * &dy;
        sxx += &dx * &dx;
        syy += &dy * &dy;
    }
    if sxx.is_zero() || syy.is_zero() {
        return None;
    }
    let r2 = (&sxy * &sxy / (sxx * syy)).to_f64()?;
    Some(if sxy.is_negative() { -r2.sqrt() } else { r2.sqrt() })
}

/// Rank = number strictly below + (number equal + 1) / 2.
fn oracle_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&a| {
            let below = v.iter().filter(|&&b| b < a).count();
            let equal = v.iter().filter(|&&b| b == a).count();
            below as f64 + (equal as f64 + 1.0) / 2.0
        })
        .collect()
}

fn oracle_stderr(v: &[f64]) -> (f64, f64) {
    let xq = qvec(v);
    let m = qmean(&xq);
    let n = v.len();
    if n == 1 {
        return (m.to_f64().unwrap(), 0.0);
    }
    let ss = xq.iter().fold(BigRational::zero(), |acc, x| {
        let d = x - &m;
        acc + &d * &d
    });
    let var_of_mean = ss / BigRational::from_integer(BigInt::from((n - 1) * n));
    (m.to_f64().unwrap(), var_of_mean.to_f64().unwrap().sqrt())
}

fn statistics_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    let (mut tied, mut degenerate) = (0, 0);
    for case in 0..1000 {
        let len = rng.random_range(2..=50);
        let draw = |rng: &mut ChaCha8Rng, mode: usize| -> Vec<f64> {
            (0..len)
                .map(|_| match mode {
                    0 => rng.random_range(-10.0..10.0),
                    1 => rng.random_range(0..4) as f64,
                    _ => {
                        if rng.random_bool(0.5) {
                            rng.random_range(0..3) as f64
                        } else {
                            rng.random_range(-1.0..1.0)
                        }
                    }
                })
                .collect()
        };
        let (mx, my) = (case % 3, (case / 3) % 3);
        let x = draw(&mut rng, mx);
        let y = draw(&mut rng, my);
        if mx != 0 || my != 0 {
            tied += 1;
        }

        let check = |name: &str, got: ccr_core::Result<f64>, want: Option<f64>, worst: &mut f64| -> Result<(), String> {
            match (got, want) {
                (Ok(g), Some(w)) => {
                    *worst = worst.max((g - w).abs());
                    ensure((g - w).abs() <= 1e-9, || format!("case {case}: {name} {g} vs oracle {w}"))
                }
                (Err(_), None) => Ok(()),
                (g, w) => Err(format!("case {case}: {name} {g:?} vs oracle {w:?}")),
            }
        };
        let wp = oracle_pearson(&x, &y);
        if wp.is_none() {
            degenerate += 1;
        }
        check("pearson", pearson(&x, &y), wp, &mut worst)?;
        let ws = oracle_pearson(&oracle_ranks(&x), &oracle_ranks(&y));
        check("spearman", spearman(&x, &y), ws, &mut worst)?;
        let (m, se) = mean_and_stderr(&x).map_err(|e| e.to_string())?;
        let (om, ose) = oracle_stderr(&x);
        worst = worst.max((m - om).abs()).max((se - ose).abs());
        ensure((m - om).abs() <= 1e-9 && (se - ose).abs() <= 1e-9, || {
            format!("case {case}: mean/se ({m}, {se}) vs oracle ({om}, {ose})")
        })?;
    }
    Ok(format!(
        "1000 array pairs (len 2-50, {tied} with ties, {degenerate} zero-variance rejected by both), max abs err {worst:.2e}"
    ))
}

fn ccr_ddr_definitions() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let err = |e: ccr_core::Error| e.to_string();
    let mut worst: f64 = 0.0;
    let mut note = |d: f64| {
        worst = worst.max(d);
        d <= 1e-9
    };
    for _ in 0..200 {
        let d = rng.random_range(2..=32);
        let e = uniform(&mut rng, d, -1.0, 1.0);
        let items: Vec<Vec<f64>> = (0..rng.random_range(1..=20)).map(|_| uniform(&mut rng, d, -1.0, 1.0)).collect();
        let got = ccr_score(&e, &items).map_err(err)?;
        let oracle = items.iter().map(|it| cos(&e, it)).sum::<f64>() / items.len() as f64;
        ensure(note((got - oracle).abs()), || format!("ccr {got} vs {oracle}"))?;

        let c = rng.random_range(0.01..100.0);
        let scaled_e: Vec<f64> = e.iter().map(|x| x * c).collect();
        let mut scaled_items: Vec<Vec<f64>> = items
            .iter()
            .map(|it| {
                let k = rng.random_range(0.01..100.0);
                it.iter().map(|x| x * k).collect()
            })
            .collect();
        scaled_items.shuffle(&mut rng);
        let moved = ccr_score(&scaled_e, &scaled_items).map_err(err)?;
        ensure(note((moved - got).abs()), || format!("ccr not scale/permutation invariant: {moved} vs {got}"))?;
    }

    let vocab: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
    for round in 0..100 {
        let d = rng.random_range(2..=24);
        let rows: Vec<(String, Vec<f64>)> = vocab.iter().map(|w| (w.clone(), uniform(&mut rng, d, -1.0, 1.0))).collect();
        let table: HashMap<&str, &[f64]> = rows.iter().map(|(w, v)| (w.as_str(), v.as_slice())).collect();
        let model = WordVectorModel::from_rows(rows.clone()).map_err(err)?;
        let c = rng.random_range(0.01..100.0);
        let scaled =
            WordVectorModel::from_rows(rows.iter().map(|(w, v)| (w.clone(), v.iter().map(|x| x * c).collect::<Vec<f64>>())))
                .map_err(err)?;

        let pick = |rng: &mut ChaCha8Rng, n: usize| -> Vec<String> {
            (0..n)
                .map(|_| {
                    if rng.random_bool(0.2) {
                        format!("oov{}", rng.random_range(0..5))
                    } else {
                        vocab[rng.random_range(0..vocab.len())].clone()
                    }
                })
                .collect()
        };
        let len = rng.random_range(1..=30);
        let mut para = pick(&mut rng, len);
        para.push(vocab[round % vocab.len()].clone());
        let len = rng.random_range(1..=15);
        let mut raw_dict = pick(&mut rng, len);
        raw_dict.push(vocab[(round * 7) % vocab.len()].clone());
        let dict = Dictionary::new("c", raw_dict.clone()).map_err(err)?;

        let known_para: Vec<&[f64]> = para.iter().filter_map(|t| table.get(t.as_str()).copied()).collect();
        let mut uniq = Vec::new();
        for w in &raw_dict {
            if !uniq.contains(w) {
                uniq.push(w.clone());
            }
        }
        let known_dict: Vec<&[f64]> = uniq.iter().filter_map(|t| table.get(t.as_str()).copied()).collect();
        let ddr = ddr_score(&para, &dict, &model).map_err(err)?;
        let oracle = cos(&mean_vec(&known_para), &mean_vec(&known_dict));
        ensure(note((ddr.score - oracle).abs()), || format!("ddr {} vs {oracle}", ddr.score))?;
        ensure(
            ddr.paragraph_oov == para.len() - known_para.len() && ddr.dictionary_oov == uniq.len() - known_dict.len(),
            || "ddr oov counts".into(),
        )?;

        let title = &vocab[rng.random_range(0..vocab.len())];
        let pm = pm_pseudo_ground_truth(title, &dict, &model).map_err(err)?;
        let t = table[title.as_str()];
        let pm_oracle = known_dict.iter().map(|w| cos(t, w)).sum::<f64>() / known_dict.len() as f64;
        ensure(note((pm - pm_oracle).abs()), || format!("pm {pm} vs {pm_oracle}"))?;

        let mut para2 = para.clone();
        para2.shuffle(&mut rng);
        let mut words2 = raw_dict.clone();
        words2.shuffle(&mut rng);
        let dict2 = Dictionary::new("c", words2).map_err(err)?;
        let ddr2 = ddr_score(&para2, &dict2, &scaled).map_err(err)?;
        let pm2 = pm_pseudo_ground_truth(title, &dict2, &scaled).map_err(err)?;
        ensure(note((ddr2.score - ddr.score).abs()) && note((pm2 - pm).abs()), || {
            format!("ddr/pm not scale/permutation invariant: {} vs {}, {pm2} vs {pm}", ddr2.score, ddr.score)
        })?;
    }
    Ok(format!("200 ccr + 100 ddr/pm instances match oracles and invariances, max abs err {worst:.2e}"))
}

fn adapted(table: &IndexMap<String, Vec<f64>>, adapter: &AdapterParams<f64>) -> Result<IndexMap<String, Vec<f64>>, String> {
    table
        .iter()
        .map(|(k, v)| Ok((k.clone(), adapter.apply(v).map_err(|e| e.to_string())?)))
        .collect()
}

fn end_to_end_learning() -> Result<String, String> {
    let start = Instant::now();
    let err = |e: ccr_core::Error| e.to_string();
    let seed = 7;
    let syn = generate_synthetic_corpus(10, 20, 64, 0.5, seed).map_err(err)?;
    ensure(syn.records.len() >= 200, || format!("{} paragraphs", syn.records.len()))?;
    let records = assign_splits(&syn.records, [0.7, 0.15, 0.15], seed, true).map_err(err)?;
    let sims = title_similarity_matrix(&records, &syn.title_model()).map_err(err)?;
    let split = |s: Split| records.iter().filter(|r| r.split == Some(s)).cloned().collect::<Vec<_>>();
    let (train, valid, test) = (split(Split::Train), split(Split::Valid), split(Split::Test));

    let set = build_pair_set(&train, &sims, ThresholdConfig::default()).map_err(err)?;
    let anchors: Vec<&str> = train.iter().map(|r| r.id.as_str()).collect();
    let triplets = sample_triplets_random(&set, &anchors, seed).map_err(err)?.triplets;
    let backend = MockBackend::new(64, 0);
    let table = embedding_table(&Encoder::new(&backend, None), &records).map_err(err)?;
    let valid_pairs = validation_pairs(&valid, &sims, seed).map_err(err)?;
    let cfg = TrainConfig {
        batch_size: 16,
        epochs: 3,
        warmup_epochs: 1,
        learning_rate: 1e-2,
        seed,
        ..TrainConfig::default()
    };
    let out = train_adapter(&triplets, &table, &cfg, &TripletLossConfig::default(), &valid_pairs).map_err(err)?;
    let baseline = out.reports[0].pearson;
    ensure(out.best.pearson > baseline, || {
        format!("best validation pearson {:.4} <= baseline {baseline:.4}", out.best.pearson)
    })?;

    let sts = StsConfig {
        source: PairSource::Random,
        rounds: 5,
        pairs_per_round: 200,
        seed,
    };
    let before = eval_sts_embedded(&test, &sims, &table, &sts).map_err(err)?;
    let after = eval_sts_embedded(&test, &sims, &adapted(&table, &out.adapter)?, &sts).map_err(err)?;
    let (b, a) = (before.row("pearson").unwrap().mean, after.row("pearson").unwrap().mean);
    ensure(a > b, || format!("sts hard pearson {a:.4} <= {b:.4} before training"))?;
    let secs = within(Duration::from_secs(60), start)?;
    Ok(format!(
        "{} paragraphs, {} triplets; validation pearson {baseline:.4} -> {:.4} (epoch {}); sts hard 5x200 {b:.4} -> {a:.4}; {secs:.2}s",
        records.len(),
        triplets.len(),
        out.best.pearson,
        out.best.epoch
    ))
}

fn qic_harness() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (classes, per, dim) = (4, 15, 16);
    let mut embs = Vec::new();
    let mut labels = Vec::new();
    for c in 0..classes {
        for _ in 0..per {
            let mut v = uniform(&mut rng, dim, -0.5, 0.5);
            v[c] += 3.0;
            embs.push(v);
            labels.push(c);
        }
    }
    let report = eval_qic(&embs, &labels, 10, 42).map_err(|e| e.to_string())?;
    let acc = report.row("accuracy").unwrap();
    ensure(acc.mean >= 0.95 && acc.n == 10, || format!("accuracy {:.4} over {} folds", acc.mean, acc.n))?;

    let folds = stratified_folds(&labels, 10, 42).map_err(|e| e.to_string())?;
    let again = stratified_folds(&labels, 10, 42).map_err(|e| e.to_string())?;
    ensure(folds == again, || "folds not deterministic".into())?;
    let mut all: Vec<usize> = folds.concat();
    all.sort_unstable();
    ensure(all == (0..labels.len()).collect::<Vec<_>>(), || "folds are not a partition".into())?;
    let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
    ensure(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1, || format!("fold sizes {sizes:?}"))?;
    for c in 0..classes {
        let counts: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&i| labels[i] == c).count()).collect();
        let (lo, hi) = (*counts.iter().min().unwrap(), *counts.iter().max().unwrap());
        ensure(hi - lo <= 1, || format!("class {c} spread over folds as {counts:?}"))?;
    }
    Ok(format!("4x15 items, 10 folds, accuracy {:.4} ± {:.4}; partition and stratification hold", acc.mean, acc.std_err))
}

fn benchmark_aggregation() -> Result<String, String> {
    let err = |e: ccr_core::Error| e.to_string();
    let syn = generate_synthetic_corpus(10, 20, 64, 0.3, 21).map_err(err)?;
    let qs = synthetic_questionnaires(&syn, 22);
    let backend = MockBackend::new(64, 0);
    let enc = Encoder::new(&backend, None);
    let items = encode_items(&enc, &qs[0]).map_err(err)?;
    let paras = encode_records(&enc, &syn.records).map_err(err)?;
    let scores: HashMap<String, f64> = syn
        .records
        .iter()
        .zip(&paras)
        .map(|(r, e)| Ok((r.id.clone(), ccr_score(e, &items)?)))
        .collect::<ccr_core::Result<_>>()
        .map_err(err)?;
    let officials = synthetic_officials(&syn, 30, 10, 23).map_err(err)?;
    let report = benchmark_officials(&officials, &scores).map_err(err)?;
    let rho = report.row("spearman/support_continuous").unwrap().mean;
    let rho_ord = report.row("spearman/attitude_ordinal").unwrap().mean;
    ensure(rho <= -0.9, || format!("spearman vs support {rho:.4}"))?;
    ensure(rho_ord < 0.0, || format!("spearman vs ordinal attitude {rho_ord:.4} has the wrong sign"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let mut shuffled = officials.clone();
    for o in &mut shuffled {
        o.writings.shuffle(&mut rng);
    }
    for (a, b) in officials.iter().zip(&shuffled) {
        let (ma, mb) = (official_mean(a, &scores).map_err(err)?, official_mean(b, &scores).map_err(err)?);
        ensure(ma.0.to_bits() == mb.0.to_bits(), || format!("official {} mean depends on order", a.author_id))?;
    }
    let report2 = benchmark_officials(&shuffled, &scores).map_err(err)?;
    ensure(report == report2, || "benchmark report depends on writing order".into())?;
    Ok(format!("30 officials; spearman vs support {rho:.4}, vs ordinal {rho_ord:.4}; per-official means order-invariant"))
}

fn run_ccr(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ccr"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("ccr {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn comparable(path: &Path) -> Result<Vec<u8>, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if path.to_string_lossy().ends_with(".meta.json") {
        let v = ccr_cli::artifacts::meta_without_timestamps(&String::from_utf8_lossy(&bytes)).map_err(|e| e.to_string())?;
        return Ok(serde_json::to_vec(&v).unwrap());
    }
    Ok(bytes)
}

fn reproducibility() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = tmp.path().join("data");
    run_ccr(&["gen-synthetic", "--out-dir", data.to_str().unwrap(), "--seed", "42"])?;
    let cfg = data.join("ccr.toml");
    let (w1, w2) = (tmp.path().join("run1"), tmp.path().join("run2"));
    for w in [&w1, &w2] {
        run_ccr(&["run", "--config", cfg.to_str().unwrap(), "--work-dir", w.to_str().unwrap()])?;
    }
    let list = |d: &Path| -> Result<BTreeMap<String, std::path::PathBuf>, String> {
        Ok(std::fs::read_dir(d)
            .map_err(|e| e.to_string())?
            .map(|e| e.unwrap().path())
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), p))
            .collect())
    };
    let (a, b) = (list(&w1)?, list(&w2)?);
    ensure(a.keys().eq(b.keys()), || "runs produced different file sets".into())?;
    ensure(a.keys().any(|k| k == "report.json") && a.len() >= 20, || format!("only {} artifacts", a.len()))?;
    let mut timestamps_differ = 0;
    for (name, p) in &a {
        ensure(comparable(p)? == comparable(&b[name])?, || format!("{name} differs between runs"))?;
        if name.ends_with(".meta.json") && std::fs::read(p).unwrap() != std::fs::read(&b[name]).unwrap() {
            timestamps_differ += 1;
        }
    }
    let meta = ccr_cli::artifacts::read_meta(&a["report.json"]).ok_or("report.json has no metadata sidecar")?;
    ensure(meta.seed == 42 && !meta.config_hash.is_empty(), || "sidecar lacks seed or config hash".into())?;
    Ok(format!(
        "{} artifacts byte-identical across two runs ({} sidecars differ only in timestamp metadata)",
        a.len(),
        timestamps_differ
    ))
}

fn wordvec_sanity() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (classes, per_class) = (2, 10);
    let mut corpus: Vec<Vec<String>> = (0..10_000)
        .map(|_| {
            let c = rng.random_range(0..classes);
            (0..8).map(|_| format!("c{c}t{}", rng.random_range(0..per_class))).collect()
        })
        .collect();
    // rare tokens straddling the cutoff
    for (k, count) in [3, 9, 10, 11].into_iter().enumerate() {
        for _ in 0..count {
            let s = rng.random_range(0..corpus.len());
            corpus[s].push(format!("rare{k}"));
        }
    }
    let cfg = WordVecTrainConfig {
        dim: 32,
        epochs: 3,
        window: 3,
        negative: 5,
        min_count: 10,
        seed: 8,
        ..WordVecTrainConfig::new(Architecture::Skipgram)
    };
    let model: WordVectorModel<f64> = train_word_vectors(&corpus, &cfg).map_err(|e| e.to_string())?;

    let mut counts: HashMap<&str, u64> = HashMap::new();
    for t in corpus.iter().flatten() {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let expected: HashSet<&str> = counts.iter().filter(|(_, &c)| c >= 10).map(|(t, _)| *t).collect();
    let vocab: HashSet<&str> = model.tokens().collect();
    ensure(vocab == expected, || {
        format!("vocab of {} tokens, corpus has {} with count >= 10", vocab.len(), expected.len())
    })?;
    for t in &vocab {
        ensure(model.count(t) == Some(counts[t]), || format!("count of {t}"))?;
    }
    ensure(!model.contains("rare0") && !model.contains("rare1") && model.contains("rare2"), || {
        "cutoff boundary wrong".into()
    })?;

    let tok = |c: usize, i: usize| format!("c{c}t{i}");
    let v = |t: &str| model.vector(t).unwrap();
    let trials = 2000;
    let mut wins = 0;
    for _ in 0..trials {
        let c = rng.random_range(0..classes);
        let i = rng.random_range(0..per_class);
        let mut j = rng.random_range(0..per_class - 1);
        if j >= i {
            j += 1;
        }
        let other = tok(1 - c, rng.random_range(0..per_class));
        let anchor = v(&tok(c, i));
        if cos(&anchor, &v(&tok(c, j))) > cos(&anchor, &v(&other)) {
            wins += 1;
        }
    }
    let rate = wins as f64 / trials as f64;
    ensure(rate >= 0.95, || format!("in-class ranked higher in {:.1}% of comparisons", 100.0 * rate))?;
    Ok(format!(
        "in-class above cross-class in {:.1}% of {trials} comparisons; vocab of {} equals tokens with count >= 10",
        100.0 * rate,
        vocab.len()
    ))
}

fn main() {
    let checks: [(&str, Check); 11] = [
        ("gradient correctness", gradient_correctness),
        ("loss semantics", loss_semantics),
        ("sampling correctness", sampling_correctness),
        ("threshold sweep harness", threshold_sweep),
        ("statistics oracle", statistics_oracle),
        ("CCR/DDR definitions", ccr_ddr_definitions),
        ("end-to-end learning signal", end_to_end_learning),
        ("QIC harness", qic_harness),
        ("benchmark aggregation", benchmark_aggregation),
        ("reproducibility", reproducibility),
        ("word-vector sanity", wordvec_sanity),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
