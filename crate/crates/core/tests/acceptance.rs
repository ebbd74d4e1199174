//! End-to-end acceptance checks. Runs every criterion once on the default
//! pool and once on a single thread, then compares the artifacts.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use cove_core::attention::{
    apply_frame_attention, attention_weights, corr_guided_attention, gather_corr, merge_tokens,
    AttentionMode, FrameAttentionConfig, MergedTokenSet,
};
use cove_core::bench::{analytic_ops, measured_ops, OpCountReport, REFERENCE_CHANNELS};
use cove_core::correspondence::{full_reference_trajectories, trace_trajectories, WindowSize};
use cove_core::fixture::{
    add_gaussian_noise, random_features, synthesize_moving_patch, FixtureParams, MotionFixture,
};
use cove_core::format::{map_bytes, volume_bytes};
use cove_core::{LatentVolume, Shape, TokenCoord};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
    elapsed: Duration,
    artifact: Vec<u8>,
}

fn timed(f: impl FnOnce() -> (bool, String, Vec<u8>)) -> Outcome {
    let start = Instant::now();
    let (pass, detail, artifact) = f();
    Outcome {
        pass,
        detail,
        elapsed: start.elapsed(),
        artifact,
    }
}

fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn op_counts() -> (bool, String, Vec<u8>) {
    let mut pass = true;
    let mut detail = Vec::new();
    let mut artifact = Vec::new();
    let reference = Shape::new(20, 64, 64, REFERENCE_CHANNELS).unwrap();
    for (l, table) in [(3usize, 0.448e9f64), (9, 4.03e9), (15, 11.2e9)] {
        let got = analytic_ops(reference, WindowSize::Length(l)).unwrap();
        let rel = (got as f64 - table).abs() / table;
        pass &= rel <= 0.01;
        detail.push(format!(
            "l={l}: {:.4}e9 ({:.2}% off)",
            got as f64 / 1e9,
            rel * 100.0
        ));
        let report = OpCountReport::analytic(reference, WindowSize::Length(l)).unwrap();
        artifact.extend(serde_json::to_vec(&report).unwrap());
    }
    let small = Shape::new(20, 16, 16, 32).unwrap();
    for (i, l) in [3usize, 9, 15].into_iter().enumerate() {
        let report = measured_ops(small, WindowSize::Length(l), 1, 40 + i as u64).unwrap();
        let m = report.measured.unwrap();
        let exact =
            Some(m.forward) == report.analytic_forward && Some(m.total) == report.analytic_total;
        pass &= exact;
        if !exact {
            detail.push(format!(
                "measured l={l} {m:?} vs {:?}",
                report.analytic_forward
            ));
        }
        artifact.extend(serde_json::to_vec(&report).unwrap());
    }
    detail.push("measured == analytic at 20x16x16x32".into());
    (pass, detail.join(", "), artifact)
}

fn oracle_equivalence() -> (bool, String, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut artifact = Vec::new();
    let mut compared = 0;
    let mut mismatches = 0;
    for v in 0..24u64 {
        let shape = Shape::new(
            rng.gen_range(2..=5),
            rng.gen_range(1..=12),
            rng.gen_range(1..=12),
            rng.gen_range(1..=16),
        )
        .unwrap();
        let volume = random_features(shape, 1000 + v).unwrap();
        let l = 2 * shape.height.max(shape.width) + rng.gen_range(0..3);
        for k in 1..=3usize.min(shape.height * shape.width) {
            let fast = trace_trajectories(&volume, k, WindowSize::Length(l)).unwrap();
            let slow = full_reference_trajectories(&volume, k).unwrap();
            compared += 1;
            if fast.coords() != slow.coords() || fast.scores() != slow.scores() {
                mismatches += 1;
            }
            artifact.extend(map_bytes(&fast).unwrap());
        }
    }
    (
        mismatches == 0,
        format!("{compared} maps over 24 volumes, {mismatches} differ from the full reference"),
        artifact,
    )
}

fn fixture(
    frames: usize,
    size: usize,
    start: usize,
    velocity: (isize, isize),
    seed: u64,
) -> MotionFixture {
    synthesize_moving_patch(FixtureParams {
        frames,
        height: size,
        width: size,
        dim: 16,
        patch_height: 2,
        patch_width: 2,
        patch_row: start,
        patch_col: start,
        velocity,
        seed,
    })
    .unwrap()
}

/// Counts (correct, total) top-1 lookups from every patch token in every
/// frame to every other frame.
fn recovery(f: &MotionFixture, l: usize) -> (usize, usize, Vec<u8>) {
    let map = trace_trajectories(&f.volume, 1, WindowSize::Length(l)).unwrap();
    let n = f.params.frames;
    let (mut ok, mut total) = (0, 0);
    for track in &f.ground_truth {
        for i in 0..n {
            let (r, c) = track.positions[i];
            for j in (0..n).filter(|&j| j != i) {
                let b = map.best(TokenCoord::new(i, r, c), j).unwrap();
                total += 1;
                ok += usize::from((b.row, b.col) == track.positions[j]);
            }
        }
    }
    (ok, total, map_bytes(&map).unwrap())
}

fn ground_truth_recovery() -> (bool, String, Vec<u8>) {
    let mut pass = true;
    let mut artifact = Vec::new();
    let mut detail = Vec::new();
    for v in 0..=3isize {
        let (mut ok, mut total) = (0, 0);
        for (s, vel) in [(v, 0), (0, v), (v, v), (-v, v), (0, -v)]
            .into_iter()
            .enumerate()
        {
            let f = fixture(4, 20, 9, vel, 10 * v as u64 + s as u64);
            let (o, t, bytes) = recovery(&f, 9);
            ok += o;
            total += t;
            artifact.extend(bytes);
        }
        pass &= ok == total;
        detail.push(format!("l=9 |v|={v}: {ok}/{total}"));
    }
    // l = 3 reaches one cell, so a patch moving three per frame leaves every
    // interior window and no adjacent-frame match can be right.
    let (mut adjacent_ok, mut adjacent_total) = (0, 0);
    for (s, vel) in [(3, 0), (0, 3), (3, 3)].into_iter().enumerate() {
        let f = fixture(4, 20, 4, vel, 90 + s as u64);
        let map = trace_trajectories(&f.volume, 1, WindowSize::Length(3)).unwrap();
        for track in &f.ground_truth {
            for i in 0..3 {
                let (r, c) = track.positions[i];
                let b = map.best(TokenCoord::new(i, r, c), i + 1).unwrap();
                adjacent_total += 1;
                adjacent_ok += usize::from((b.row, b.col) == track.positions[i + 1]);
            }
        }
        artifact.extend(map_bytes(&map).unwrap());
    }
    pass &= adjacent_ok == 0;
    detail.push(format!(
        "l=3 |v|=3 adjacent: {adjacent_ok}/{adjacent_total}"
    ));
    (pass, detail.join(", "), artifact)
}

fn random_merged(rng: &mut ChaCha8Rng) -> (Vec<f32>, MergedTokenSet) {
    let d = rng.gen_range(1..=16);
    let m = rng.gen_range(1..=24);
    let scale = [0.1f32, 1.0, 3.0, 10.0][rng.gen_range(0..4)];
    let q = (0..d).map(|_| rng.gen_range(-scale..scale)).collect();
    let t = (0..d * m).map(|_| rng.gen_range(-scale..scale)).collect();
    let s = (0..m).map(|_| rng.gen_range(1..=6)).collect();
    (q, MergedTokenSet::from_parts(d, t, s).unwrap())
}

fn attention_properties() -> (bool, String, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut artifact = Vec::new();
    let (mut worst_sum, mut worst_hull, mut worst_perm) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..1000 {
        let (q, merged) = random_merged(&mut rng);
        let d = merged.dim();
        let mode = if case % 2 == 0 {
            AttentionMode::Plain
        } else {
            AttentionMode::Proportional
        };
        let w = attention_weights(&q, &merged, d, mode).unwrap();
        let sum: f64 = w.iter().map(|&x| x as f64).sum();
        worst_sum = worst_sum.max((sum - 1.0).abs());
        if w.iter().any(|&x| x < 0.0) {
            worst_sum = f64::INFINITY;
        }
        let out = corr_guided_attention(&q, &merged, d, mode).unwrap();
        for c in 0..d {
            let col = (0..merged.len()).map(|m| merged.token(m)[c] as f64);
            let lo = col.clone().fold(f64::INFINITY, f64::min);
            let hi = col.fold(f64::NEG_INFINITY, f64::max);
            let o = out[c] as f64;
            worst_hull = worst_hull.max(lo - o).max(o - hi);
        }
        let mut order: Vec<usize> = (0..merged.len()).collect();
        order.shuffle(&mut rng);
        let tokens = order
            .iter()
            .flat_map(|&m| merged.token(m).to_vec())
            .collect();
        let sizes = order.iter().map(|&m| merged.sizes()[m]).collect();
        let permuted = MergedTokenSet::from_parts(d, tokens, sizes).unwrap();
        let out_p = corr_guided_attention(&q, &permuted, d, mode).unwrap();
        for (a, b) in out.iter().zip(&out_p) {
            worst_perm = worst_perm.max((a - b).abs() as f64);
        }
        artifact.extend(f32_bytes(&out));
    }
    let pass = worst_sum <= 1e-6 && worst_hull <= 1e-6 && worst_perm <= 1e-6;
    (
        pass,
        format!(
            "1000 instances: max |sum-1| {worst_sum:.1e}, max hull excess {:.1e}, max permutation delta {worst_perm:.1e}",
            worst_hull.max(0.0)
        ),
        artifact,
    )
}

fn merge_conservation() -> (bool, String, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut artifact = Vec::new();
    let (mut lists, mut count_errors, mut noop_errors) = (0, 0, 0);
    let mut worst = 0.0f64;
    for v in 0..20u64 {
        let shape = Shape::new(rng.gen_range(2..=8), 6, 6, rng.gen_range(1..=16)).unwrap();
        let features = random_features(shape, 500 + v).unwrap();
        let k = rng.gen_range(1..=4);
        let map = trace_trajectories(&features, k, WindowSize::Length(5)).unwrap();
        let scale = [0.5f32, 2.0, 10.0][rng.gen_range(0..3)];
        let latent = LatentVolume::new(
            shape,
            (0..shape.len())
                .map(|_| rng.gen_range(-scale..scale))
                .collect(),
        )
        .unwrap();
        for _ in 0..50 {
            let anchor = TokenCoord::new(
                rng.gen_range(0..shape.frames),
                rng.gen_range(0..6),
                rng.gen_range(0..6),
            );
            let list = gather_corr(&latent, &map, anchor).unwrap();
            let n = list.len();
            let merged = merge_tokens(&list, 0.5).unwrap();
            lists += 1;
            let expect = n - (0.5 * n.div_ceil(2) as f64).floor() as usize;
            count_errors += usize::from(merged.len() != expect);
            for c in 0..shape.dim {
                let before: f64 = (0..n).map(|i| list.token(i)[c] as f64).sum();
                let after: f64 = (0..merged.len())
                    .map(|m| merged.sizes()[m] as f64 * merged.token(m)[c] as f64)
                    .sum();
                worst = worst.max((before - after).abs());
            }
            let same = merge_tokens(&list, 0.0).unwrap();
            noop_errors +=
                usize::from(same.tokens() != list.data() || same.sizes().iter().any(|&s| s != 1));
            artifact.extend(f32_bytes(merged.tokens()));
        }
    }
    (
        count_errors == 0 && noop_errors == 0 && worst <= 1e-5,
        format!(
            "{lists} lists: {count_errors} count errors, max mass drift {worst:.1e}, {noop_errors} ratio-0 changes"
        ),
        artifact,
    )
}

/// Mean over patch tracks and frame pairs of the squared distance between
/// corresponding tokens.
fn track_msd(latent: &LatentVolume, f: &MotionFixture) -> f64 {
    let n = f.params.frames;
    let (mut sum, mut count) = (0.0f64, 0usize);
    for track in &f.ground_truth {
        for i in 0..n {
            for j in i + 1..n {
                let (ri, ci) = track.positions[i];
                let (rj, cj) = track.positions[j];
                let a = latent.token(TokenCoord::new(i, ri, ci));
                let b = latent.token(TokenCoord::new(j, rj, cj));
                sum += a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| ((x - y) as f64).powi(2))
                    .sum::<f64>();
                count += 1;
            }
        }
    }
    sum / count as f64
}

fn consistency() -> (bool, String, Vec<u8>) {
    let mut pass = true;
    let mut artifact = Vec::new();
    let mut detail = Vec::new();
    for (s, vel) in [(1isize, 1isize), (0, 2), (-1, 0)].into_iter().enumerate() {
        let f = fixture(6, 18, 6, vel, 60 + s as u64);
        let map = trace_trajectories(&f.volume, 1, WindowSize::Length(9)).unwrap();
        let clean = LatentVolume::from(f.volume.clone());
        let out = apply_frame_attention(&clean, &map, FrameAttentionConfig::default()).unwrap();
        let (before, after) = (track_msd(&clean, &f), track_msd(&out, &f));
        pass &= after <= before + 1e-6;
        detail.push(format!("clean {before:.2e}->{after:.2e}"));
        artifact.extend(volume_bytes(out.shape(), out.data()).unwrap());

        let noisy_data = add_gaussian_noise(f.volume.data(), 0.1, 70 + s as u64);
        let noisy = LatentVolume::new(f.volume.shape(), noisy_data).unwrap();
        for k in [1, 3] {
            let map = trace_trajectories(&f.volume, k, WindowSize::Length(9)).unwrap();
            let out = apply_frame_attention(&noisy, &map, FrameAttentionConfig::default()).unwrap();
            let (before, after) = (track_msd(&noisy, &f), track_msd(&out, &f));
            pass &= after < before;
            detail.push(format!("noisy K={k} {before:.3}->{after:.3}"));
            artifact.extend(volume_bytes(out.shape(), out.data()).unwrap());
        }
    }
    (pass, detail.join(", "), artifact)
}

type Criterion = (
    &'static str,
    Option<Duration>,
    fn() -> (bool, String, Vec<u8>),
);

const CRITERIA: [Criterion; 6] = [
    (
        "1 operation counts",
        Some(Duration::from_secs(10)),
        op_counts,
    ),
    (
        "2 oracle equivalence",
        Some(Duration::from_secs(60)),
        oracle_equivalence,
    ),
    ("3 ground-truth recovery", None, ground_truth_recovery),
    ("4 attention properties", None, attention_properties),
    ("5 merge conservation", None, merge_conservation),
    ("6 consistency", None, consistency),
];

fn run_all(threads: usize) -> Vec<Outcome> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(|| CRITERIA.iter().map(|c| timed(c.2)).collect())
}

fn main() -> ExitCode {
    // At least 8 so a small machine still schedules work across threads.
    let max = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .max(8);
    let wide = run_all(max);
    let single = run_all(1);
    let mut all = true;
    for ((name, budget, _), o) in CRITERIA.iter().zip(&wide) {
        let in_time = budget.is_none_or(|b| o.elapsed < b);
        let pass = o.pass && in_time;
        all &= pass;
        let budget_note = budget.map_or(String::new(), |b| format!(" (budget {}s)", b.as_secs()));
        println!(
            "{} criterion {name}: {} [{:.2}s{budget_note}]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            o.elapsed.as_secs_f64()
        );
    }
    let differing: Vec<&str> = CRITERIA
        .iter()
        .zip(wide.iter().zip(&single))
        .filter(|(_, (a, b))| a.artifact != b.artifact || a.pass != b.pass)
        .map(|(c, _)| c.0)
        .collect();
    let bytes: usize = wide.iter().map(|o| o.artifact.len()).sum();
    let det = differing.is_empty();
    all &= det;
    println!(
        "{} criterion 7 determinism: {bytes} artifact bytes from criteria 1-6, 1 vs {max} threads, {}",
        if det { "PASS" } else { "FAIL" },
        if det { "identical".to_string() } else { format!("differ in {differing:?}") }
    );
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
