//! Acceptance suite: one line per criterion, non-zero exit on any failure.
//!
//! Run with `cargo test -p ffdn --test acceptance`.

mod common;

use std::fmt::Write as _;
use std::process::ExitCode;

use ffdn::engine::{run, Job, LinkState, RunOptions, WorkerPool};
use ffdn::experiments::{
    prepare_run, random_grid, run_sweep, validate_robustness, write_results_csv, write_runs_csv,
    SweepOutput, SweepSpec,
};
use ffdn::model::Scenario;
use ffdn::policies::{
    candidates, decide, decide_robust, estimate_local, CandidateSet, DeliveryChoice, MethodKind,
};
use ffdn::stochastic::{mix_seed, standard_normal_cdf, GaussianModel, SeededRng};

type Outcome = Result<String, String>;

fn sweep_file(name: &str) -> SweepSpec {
    let path = format!("{}/../../sweeps/{name}.toml", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    SweepSpec::from_toml(&text).unwrap()
}

fn sweep(name: &str) -> SweepOutput {
    run_sweep(&sweep_file(name), &Scenario::default()).unwrap()
}

/// (mean, CI half-width) of one aggregate.
fn point(out: &SweepOutput, x: f64, m: MethodKind) -> (f64, f64) {
    let a = out.aggregate(x, m).expect("aggregate present");
    (a.mean_miss_rate, a.ci_half_width.unwrap_or(0.0))
}

const FDN_METHODS: [MethodKind; 4] = [
    MethodKind::FederatedCdn,
    MethodKind::IsolatedFdn,
    MethodKind::DeterministicFfdn,
    MethodKind::RobustFfdn,
];

fn c1_validate() -> Outcome {
    let report =
        validate_robustness(&random_grid(100, 11), 100_000, 11).map_err(|e| e.to_string())?;
    let msg = format!("max |analytic - empirical| = {:.5}", report.max_deviation);
    if report.max_deviation <= 0.01 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Inverse standard normal CDF by bisection.
fn probit(p: f64) -> f64 {
    let (mut lo, mut hi) = (-12.0, 12.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if standard_normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `n` stratified standard normal draws in random order.
fn stratified_normals(n: usize, rng: &mut SeededRng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|i| probit((i as f64 + rng.uniform()) / n as f64))
        .collect();
    for i in (1..n).rev() {
        v.swap(i, rng.below(i as u64 + 1) as usize);
    }
    v
}

fn c2_convolution() -> Outcome {
    let mut rng = SeededRng::new(2);
    let g = |rng: &mut SeededRng| {
        GaussianModel::new(0.5 + 4.0 * rng.uniform(), 0.05 + rng.uniform()).unwrap()
    };
    let n = 1_000_000;
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let (a, b) = (g(&mut rng), g(&mut rng));
        let c = a.convolve(&b);
        let za = stratified_normals(n, &mut rng);
        let zb = stratified_normals(n, &mut rng);
        let xs: Vec<f64> = za
            .iter()
            .zip(&zb)
            .map(|(x, y)| a.mean() + a.stddev() * x + b.mean() + b.stddev() * y)
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        worst = worst
            .max((mean - c.mean()).abs() / c.mean())
            .max((var - c.variance()).abs() / c.variance());
    }
    let mut algebra = 0.0f64;
    let zero = GaussianModel::degenerate(0.0).unwrap();
    let mut identity_ok = true;
    for _ in 0..10_000 {
        let (a, b, c) = (g(&mut rng), g(&mut rng), g(&mut rng));
        let (ab, ba) = (a.convolve(&b), b.convolve(&a));
        let (l, r) = (ab.convolve(&c), a.convolve(&b.convolve(&c)));
        algebra = algebra
            .max((ab.mean() - ba.mean()).abs())
            .max((ab.stddev() - ba.stddev()).abs())
            .max((l.mean() - r.mean()).abs())
            .max((l.stddev() - r.stddev()).abs());
        identity_ok &= a.convolve(&zero) == a;
    }
    let msg = format!(
        "sampled moments rel. err {worst:.2e} (<= 2e-3), algebra err {algebra:.1e} (<= 1e-12), identity {identity_ok}"
    );
    if worst <= 2e-3 && algebra <= 1e-12 && identity_ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c3_contracts() -> Outcome {
    let mut argmax_violations = 0;
    let mut capability_violations = 0;
    let mut decided = 0;
    for k in 0..10_000u64 {
        let case = common::random_case(mix_seed(3, &[k]));
        let ctx = case.ctx();
        let seg = &case.segment;
        if let Ok(choice) = decide_robust(seg, &ctx) {
            decided += 1;
            let held = case.cache.holds(common::LOCAL, seg.video, seg.index);
            if held {
                argmax_violations += (choice.choice != DeliveryChoice::LocalCache) as usize;
            } else {
                let best = candidates(seg, &ctx, CandidateSet::FULL)
                    .iter()
                    .map(|e| e.robustness)
                    .fold(f64::NEG_INFINITY, f64::max);
                argmax_violations += (choice.robustness < best) as usize;
            }
        }
        for m in MethodKind::ALL {
            let Ok(e) = decide(m, seg, &ctx) else {
                continue;
            };
            let ok = match e.choice {
                DeliveryChoice::LocalCache => {
                    m.caches_at_edge() && estimate_local(seg, &ctx).is_ok()
                }
                DeliveryChoice::OnDemand => m.on_demand(),
                DeliveryChoice::RemoteFetch { source } => {
                    let cloud = case.topology.cloud();
                    (source == cloud
                        || (m.federated() && case.cache.holds(source, seg.video, seg.index)))
                        && (m != MethodKind::CentralCloud || source == cloud)
                }
            };
            let r_ok = (0.0..=1.0).contains(&e.robustness)
                && e.robustness == e.delivery_model.cdf_at(ctx.slack());
            capability_violations += (!ok || !r_ok) as usize;
        }
    }
    let msg = format!(
        "10000 contexts ({decided} servable): {argmax_violations} argmax violations, {capability_violations} capability violations"
    );
    if argmax_violations == 0 && capability_violations == 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c4_cache_trend(out: &SweepOutput) -> Outcome {
    let xs = [0.0, 0.3, 0.6, 0.9];
    let mut msg = String::new();
    let mut ok = true;
    for m in FDN_METHODS {
        let v: Vec<(f64, f64)> = xs.iter().map(|&x| point(out, x, m)).collect();
        let end = v[3].0 < v[0].0;
        let steps = v.windows(2).all(|w| w[1].0 - w[0].0 <= w[0].1.max(w[1].1));
        ok &= end && steps;
        let _ = write!(
            msg,
            "{m}: {} ",
            v.iter()
                .map(|p| format!("{:.4}", p.0))
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c5_zero_cache(out: &SweepOutput) -> Outcome {
    let fcdn = point(out, 0.0, MethodKind::FederatedCdn).0;
    let mut msg = format!("federated-cdn {fcdn:.4}; ");
    let mut ok = true;
    for m in [
        MethodKind::IsolatedFdn,
        MethodKind::DeterministicFfdn,
        MethodKind::RobustFfdn,
    ] {
        let v = point(out, 0.0, m).0;
        let rel = if fcdn > 0.0 { 1.0 - v / fcdn } else { 0.0 };
        ok &= v <= 0.75 * fcdn;
        let _ = write!(msg, "{m} {v:.4} ({:.0}% lower) ", 100.0 * rel);
    }
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c6_ordering(out: &SweepOutput) -> Outcome {
    let order = [
        MethodKind::RobustFfdn,
        MethodKind::DeterministicFfdn,
        MethodKind::IsolatedFdn,
        MethodKind::Cdn,
        MethodKind::CentralCloud,
    ];
    let xs = [3000.0, 3500.0, 4000.0, 4500.0];
    let mut problems = Vec::new();
    for &x in &xs {
        for w in order.windows(2) {
            let ((a, ca), (b, cb)) = (point(out, x, w[0]), point(out, x, w[1]));
            if a > b && a - ca > b + cb {
                problems.push(format!("{x}: {} {a:.4} > {} {b:.4}", w[0], w[1]));
            }
        }
    }
    for m in MethodKind::ALL {
        let v: Vec<f64> = xs.iter().map(|&x| point(out, x, m).0).collect();
        if v.windows(2).any(|w| w[1] < w[0]) {
            problems.push(format!("{m} not non-decreasing: {v:.4?}"));
        }
    }
    let at = |x| {
        order
            .iter()
            .map(|&m| format!("{:.4}", point(out, x, m).0))
            .collect::<Vec<_>>()
            .join("<=")
    };
    if problems.is_empty() {
        Ok(format!("3000: {}; 4500: {}", at(3000.0), at(4500.0)))
    } else {
        Err(problems.join("; "))
    }
}

/// Relative miss-rate gap of `better` over `worse`.
fn rel_gap(out: &SweepOutput, x: f64, better: MethodKind, worse: MethodKind) -> f64 {
    let (b, w) = (point(out, x, better).0, point(out, x, worse).0);
    if w == 0.0 {
        0.0
    } else {
        (w - b) / w
    }
}

fn c7_latency(out: &SweepOutput) -> Outcome {
    let pairs = [
        (MethodKind::RobustFfdn, MethodKind::DeterministicFfdn),
        (MethodKind::DeterministicFfdn, MethodKind::IsolatedFdn),
    ];
    let mut msg = String::new();
    let mut ok = true;
    for (b, w) in pairs {
        let (lo, hi) = (rel_gap(out, 1000.0, b, w), rel_gap(out, 4000.0, b, w));
        ok &= hi < lo;
        let _ = write!(
            msg,
            "{b} vs {w}: {:.1}% -> {:.1}%; ",
            100.0 * lo,
            100.0 * hi
        );
    }
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn sweep_bytes(spec: &SweepSpec) -> (Vec<u8>, Vec<u8>) {
    let out = run_sweep(spec, &Scenario::default()).unwrap();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    write_results_csv(&out.aggregates, &mut a).unwrap();
    write_runs_csv(&out.runs, &mut b).unwrap();
    (a, b)
}

fn run_bytes(method: MethodKind) -> Vec<u8> {
    let (world, trace) = prepare_run(&Scenario::default(), 8).unwrap();
    let out = run(&world, &trace, method, 8, RunOptions { event_log: true }).unwrap();
    let mut bytes = Vec::new();
    out.write_event_log(&mut bytes).unwrap();
    bytes
}

fn c8_determinism() -> Outcome {
    let mut checked = 0;
    for name in ["cache_level", "workload_size", "edge_latency"] {
        let mut spec = sweep_file(name);
        spec.trace_count = 3;
        if sweep_bytes(&spec) != sweep_bytes(&spec) {
            return Err(format!("{name} sweep CSV differs between runs"));
        }
        checked += 1;
    }
    for m in MethodKind::ALL {
        let a = run_bytes(m);
        if a.is_empty() || a != run_bytes(m) {
            return Err(format!("{m} event log differs between runs"));
        }
        checked += 1;
    }
    Ok(format!("{checked} repeated outputs byte-identical"))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..=p.len() {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

/// Completion times of `(deadline, service)` jobs released at zero.
fn pool_schedule(workers: u32, jobs: &[(f64, f64)]) -> Vec<f64> {
    let mut pool = WorkerPool::new(workers);
    for (i, &(deadline, s)) in jobs.iter().enumerate() {
        pool.enqueue(Job {
            tag: i,
            deadline,
            expected_service: s,
        });
    }
    let mut done = vec![f64::NAN; jobs.len()];
    let mut running: Vec<(f64, usize)> = pool
        .start_ready(0.0)
        .into_iter()
        .map(|j| (j.expected_service, j.tag))
        .collect();
    while !running.is_empty() {
        running.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (t, i) = running.remove(0);
        done[i] = t;
        pool.finish(t);
        running.extend(
            pool.start_ready(t)
                .into_iter()
                .map(|j| (t + j.expected_service, j.tag)),
        );
    }
    done
}

fn max_lateness(jobs: &[(f64, f64)], done: &[f64]) -> f64 {
    jobs.iter()
        .zip(done)
        .map(|(&(d, _), &c)| c - d)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Best maximum lateness over every dispatch order, list-scheduled.
fn brute_force(workers: usize, jobs: &[(f64, f64)]) -> f64 {
    permutations(jobs.len())
        .iter()
        .map(|order| {
            let mut free = vec![0.0f64; workers];
            let mut done = vec![0.0; jobs.len()];
            for &j in order {
                let w = (0..workers)
                    .min_by(|&a, &b| free[a].total_cmp(&free[b]))
                    .unwrap();
                free[w] += jobs[j].1;
                done[j] = free[w];
            }
            max_lateness(jobs, &done)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Completion times on one fair-share link for `(start, bits)` transfers.
fn fluid(capacity: f64, starts: &[(f64, f64)]) -> Vec<f64> {
    let mut link = LinkState::new(capacity);
    let mut done = vec![f64::NAN; starts.len()];
    let mut next_start = 0;
    let mut next_done: Option<f64> = None;
    while next_start < starts.len() || next_done.is_some() {
        let start_t = starts.get(next_start).map(|s| s.0);
        match (start_t, next_done) {
            (Some(s), Some(d)) if s < d => {
                next_done = link.start(s, next_start, starts[next_start].1);
                next_start += 1;
            }
            (Some(s), None) => {
                next_done = link.start(s, next_start, starts[next_start].1);
                next_start += 1;
            }
            (_, Some(d)) => {
                let (fin, next) = link.finish_drained(d);
                for i in fin {
                    done[i] = d;
                }
                next_done = next;
            }
            (None, None) => unreachable!(),
        }
    }
    done
}

fn c9_micro_oracles() -> Outcome {
    let mut rng = SeededRng::new(9);
    let mut instances = 0;
    for _ in 0..200 {
        let n = 1 + rng.below(5) as usize;
        let jobs: Vec<(f64, f64)> = (0..n)
            .map(|_| (0.5 + 6.0 * rng.uniform(), 0.1 + 2.0 * rng.uniform()))
            .collect();
        let edf = max_lateness(&jobs, &pool_schedule(1, &jobs));
        let best = brute_force(1, &jobs);
        if (edf - best).abs() > 1e-9 {
            return Err(format!("single worker {jobs:?}: edf {edf} vs best {best}"));
        }
        let unit: Vec<(f64, f64)> = jobs.iter().map(|&(d, _)| (d, 1.0)).collect();
        for w in 2..=3 {
            let edf = max_lateness(&unit, &pool_schedule(w, &unit));
            let best = brute_force(w as usize, &unit);
            if (edf - best).abs() > 1e-9 {
                return Err(format!("{w} workers {unit:?}: edf {edf} vs best {best}"));
            }
        }
        instances += 3;
    }
    // Hand-derived fair-share completion times, capacity 1 Gbit/s.
    let cases: [(&[(f64, f64)], &[f64]); 4] = [
        // Both share until the small one drains at 1.0; the rest runs alone.
        (&[(0.0, 1e9), (0.0, 5e8)], &[1.5, 1.0]),
        // Second joins at 0.5 with the first half done.
        (&[(0.0, 1e9), (0.5, 1e9)], &[1.5, 2.0]),
        // Three equal shares, then two, then one.
        (&[(0.0, 3e8), (0.0, 6e8), (0.0, 9e8)], &[0.9, 1.5, 1.8]),
        // Staggered joins at 0.2 and 0.4.
        (&[(0.0, 1e9), (0.2, 1e9), (0.4, 2e8)], &[2.0, 2.2, 1.0]),
    ];
    let mut fluid_err = 0.0f64;
    for (starts, expect) in cases {
        let got = fluid(1e9, starts);
        for (g, e) in got.iter().zip(expect) {
            fluid_err = fluid_err.max((g - e).abs());
        }
    }
    let msg = format!(
        "{instances} EDF instances match brute force; fluid closed forms max err {fluid_err:.1e}"
    );
    if fluid_err <= 1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: u32, name: &str, r: Outcome| {
        let (tag, detail) = match r {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} [{n}] {name}: {detail}");
    };
    report(1, "analytic vs Monte Carlo robustness", c1_validate());
    report(2, "convolution algebra", c2_convolution());
    report(3, "argmax and capability contracts", c3_contracts());
    let cache = sweep("cache_level");
    report(4, "cache sweep trend", c4_cache_trend(&cache));
    report(5, "zero-cache processing benefit", c5_zero_cache(&cache));
    report(
        6,
        "ordering under oversubscription",
        c6_ordering(&sweep("workload_size")),
    );
    report(
        7,
        "latency sweep convergence",
        c7_latency(&sweep("edge_latency")),
    );
    report(8, "determinism", c8_determinism());
    report(9, "engine micro-oracles", c9_micro_oracles());
    if failed == 0 {
        println!("all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
