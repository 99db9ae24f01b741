//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs without the libtest harness so the lines always
//! print.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use scmcts::blocks::{generate_instance, GeneratorConfig, Verifier};
use scmcts::corr::{pearson, permutation_test, ranks, spearman};
use scmcts::decoding::{acceptance_mass, speculative_step, SpecStats};
use scmcts::harness::{
    analyze_edges, run_ablation, run_benchmark, run_sweep, to_json_string, ExperimentConfig, StepGroup, SweepParam,
};
use scmcts::policy::{PolicyContext, ScriptedPolicy, TokenDistribution, Vocabulary};
use scmcts::reward::{jsd, reward_jsd, FactorStats, Region};
use scmcts::search::{path_value, selection_counts, selection_entropy};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn vocab(n: usize) -> Vocabulary {
    Vocabulary::new((0..n).map(|i| format!("t{i}")).collect(), vec![]).unwrap()
}

fn constant(n: usize, d: TokenDistribution) -> ScriptedPolicy {
    ScriptedPolicy::constant("c", vocab(n), d).unwrap()
}

fn random_dist(n: usize, rng: &mut impl Rng) -> TokenDistribution {
    TokenDistribution::from_weights((0..n).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

fn speculative_sampling() -> Check {
    const V: usize = 16;
    const EMIT: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst_tv, mut worst_p, mut worst_acc) = (0.0f64, 1.0f64, 0.0f64);
    for pair in 0..5 {
        let (pd, qd) = (random_dist(V, &mut rng), random_dist(V, &mut rng));
        let (p, q) = (constant(V, pd.clone()), constant(V, qd.clone()));
        let mut counts = [0u64; V];
        let mut emitted = 0;
        let mut stats = SpecStats::default();
        while emitted < EMIT {
            let (out, s) = speculative_step(&p, &q, 4, &[0], &mut rng).map_err(|e| e.to_string())?;
            for &t in out.iter().take(EMIT - emitted) {
                counts[t as usize] += 1;
                emitted += 1;
            }
            stats.merge(&s);
        }
        let n = EMIT as f64;
        let tv = counts.iter().zip(pd.probs()).map(|(&c, &p)| (c as f64 / n - p).abs()).sum::<f64>() / 2.0;
        let chi2: f64 = counts.iter().zip(pd.probs()).map(|(&c, &p)| (c as f64 - n * p).powi(2) / (n * p)).sum();
        let p_value = 1.0 - ChiSquared::new((V - 1) as f64).unwrap().cdf(chi2);
        let acc_err = (stats.acceptance_rate() - acceptance_mass(&pd, &qd)).abs();
        ensure(tv <= 0.01, format!("pair {pair}: tv {tv:.4}"))?;
        ensure(p_value > 0.01, format!("pair {pair}: chi-square p {p_value:.4}"))?;
        ensure(acc_err <= 0.02, format!("pair {pair}: acceptance off by {acc_err:.4}"))?;
        worst_tv = worst_tv.max(tv);
        worst_p = worst_p.min(p_value);
        worst_acc = worst_acc.max(acc_err);
    }
    Ok(format!("max tv {worst_tv:.4}, min chi-square p {worst_p:.3}, max acceptance error {worst_acc:.4}"))
}

fn backprop_arithmetic() -> Check {
    let v = path_value(&[0.0, 0.25, 0.5, 0.75], 0.1);
    ensure(v == 0.35, format!("smooth path gives {v}"))?;
    for d in [-0.05, -0.1, -0.5] {
        let got = path_value(&[0.0, d], 0.0);
        ensure(got == 0.5 * f64::max(d, -0.1), format!("drop {d} gives {got}"))?;
    }
    Ok("V = 0.35; clipped drops exact".into())
}

fn jsd_oracle(p: &[f64], q: &[f64]) -> f64 {
    let kl = |a: &[f64], m: &[f64]| -> f64 {
        a.iter().zip(m).filter(|(x, _)| **x > 0.0).map(|(x, y)| x * (x / y).log2()).sum()
    };
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    0.5 * kl(p, &m) + 0.5 * kl(q, &m)
}

fn jsd_reward() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let d = random_dist(8, &mut rng);
    let ctx = PolicyContext::new(vec![0, 1, 2, 3, 4], 2);
    let same = reward_jsd(&constant(8, d.clone()), &constant(8, d), &ctx).map_err(|e| e.to_string())?;
    ensure(same.abs() <= 1e-12, format!("identical backends give {same}"))?;
    let hot = |i: usize| (0..6usize).map(|pos| TokenDistribution::one_hot(8, (pos + i) % 8)).collect::<Vec<_>>();
    let e = ScriptedPolicy::new("e", vocab(8), hot(0)).unwrap();
    let a = ScriptedPolicy::new("a", vocab(8), hot(3)).unwrap();
    let disjoint = reward_jsd(&e, &a, &ctx).map_err(|e| e.to_string())?;
    ensure(disjoint == 1.0, format!("disjoint one-hots give {disjoint}"))?;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(2..40);
        let (p, q) = (random_dist(n, &mut rng), random_dist(n, &mut rng));
        worst = worst.max((jsd(&p, &q) - jsd_oracle(p.probs(), q.probs())).abs());
    }
    ensure(worst <= 1e-9, format!("oracle gap {worst:e}"))?;
    Ok(format!("identical {same:e}, disjoint {disjoint}, max oracle gap {worst:.1e}"))
}

fn batch_region(values: &[f64]) -> Region {
    let n = values.len() as f64;
    let mu = values.iter().sum::<f64>() / n;
    let sigma = (values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n).sqrt();
    Region { mu, sigma, n: values.len() as u64 }
}

fn online_statistics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let centres = [-4.0, 0.0, 5.0];
    let draw = |rng: &mut ChaCha8Rng| centres[rng.gen_range(0..3)] + rng.gen::<f64>() - 0.5;
    let prior: Vec<f64> = (0..300).map(|_| draw(&mut rng)).collect();
    let mut stats = FactorStats::cluster(&prior, 3, 4.0).map_err(|e| e.to_string())?;
    ensure(stats.num_regions() == 3, format!("{} regions", stats.num_regions()))?;
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); 3];
    for &v in &prior {
        members[stats.region_of(v)].push(v);
    }
    for _ in 0..10_000 {
        let v = draw(&mut rng);
        members[stats.region_of(v)].push(v);
        stats.update(v);
    }
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    let mut worst = 0.0f64;
    for (k, m) in members.iter().enumerate() {
        let (got, want) = (stats.regions[k], batch_region(m));
        ensure(got.n == want.n, format!("region {k}: n {} vs {}", got.n, want.n))?;
        worst = worst.max(rel(got.mu, want.mu)).max(rel(got.sigma, want.sigma));
    }
    ensure(worst <= 1e-9, format!("relative gap {worst:e}"))?;
    Ok(format!("3 regions, max relative gap {worst:.1e}"))
}

fn verifier_semantics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let gen = GeneratorConfig { min_blocks: 3, max_blocks: 6, ..Default::default() };
    for i in 0..100 {
        let steps = 2 + 2 * (i % 4);
        let problem = generate_instance(steps, &gen, &mut rng).map_err(|e| e.to_string())?;
        let ver = Verifier::new(&problem).map_err(|e| e.to_string())?;
        let l0 = ver.initial_length();
        let mut state = problem.initial.clone();
        for k in 0..=l0 {
            let p = ver.progress(&state).map_err(|e| e.to_string())?;
            ensure(p == k as f64 / l0 as f64, format!("instance {i} step {k}: progress {p}"))?;
            ensure((p == 1.0) == problem.is_goal(&state), format!("instance {i} step {k}: goal mismatch"))?;
            if k < l0 {
                let a = ver.oracle().optimal_actions(&state)[0];
                state = state.apply(&a).map_err(|e| e.to_string())?;
            }
        }
        // off-plan states reached by a random walk
        let mut s = problem.initial.clone();
        for _ in 0..10 {
            let legal = s.legal_actions();
            s = s.apply(&legal[rng.gen_range(0..legal.len())]).map_err(|e| e.to_string())?;
            let p = ver.progress(&s).map_err(|e| e.to_string())?;
            ensure((p == 1.0) == problem.is_goal(&s), format!("instance {i}: goal mismatch off plan"))?;
        }
    }
    Ok("100 instances, progress k/L0 exact along optimal plans".into())
}

fn benchmark_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = 0;
    cfg.dataset.groups = vec![StepGroup { steps: 4, count: 75 }, StepGroup { steps: 6, count: 75 }];
    cfg
}

fn directional_ablation() -> Check {
    let report = run_ablation(&benchmark_config()).map_err(|e| e.to_string())?;
    let acc: Vec<f64> = report.rows.iter().map(|r| r.accuracy).collect();
    let (base, full) = (acc[0], acc[acc.len() - 1]);
    let line = acc.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>().join(" ");
    ensure(acc.len() == 7, format!("{} rungs", acc.len()))?;
    ensure(full - base >= 0.10, format!("full {full:.3} vs base {base:.3}: {line}"))?;
    ensure(acc.iter().all(|&a| a <= full), format!("final rung is not the maximum: {line}"))?;
    Ok(format!("ladder {line}; gain {:+.1} points", 100.0 * (full - base)))
}

fn iteration_sweep() -> Check {
    let report = run_sweep(&benchmark_config(), SweepParam::Iterations, &[1.0, 7.0]).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let csv = dir.path().join("sweep.csv");
    report.write_csv(&csv).map_err(|e| e.to_string())?;
    let lines = std::fs::read_to_string(&csv).map_err(|e| e.to_string())?.lines().count();
    ensure(lines == 3, format!("csv has {lines} lines"))?;
    let (t1, t7) = (report.rows[0].accuracy, report.rows[1].accuracy);
    ensure(t7 >= t1, format!("T=7 {t7:.3} < T=1 {t1:.3}"))?;
    Ok(format!("T=1 {t1:.3}, T=7 {t7:.3}"))
}

fn uct_behavior() -> Check {
    let values = [0.9, 0.2, 0.1, 0.3];
    let greedy = selection_counts(&values, 1, 200, 0.0);
    ensure(greedy[1..].iter().all(|&c| c == 0), format!("C=0 visits {greedy:?}"))?;
    // unvisited siblings are taken first, then C=0 sticks with the dominant child
    let fresh = selection_counts(&values, 0, 50, 0.0);
    ensure(fresh[1..].iter().all(|&c| c == 1), format!("C=0 from scratch {fresh:?}"))?;
    let mut last = -1.0;
    let mut entropies = Vec::new();
    for c in [0.0, 0.5, 1.0, 2.5, 5.0] {
        let h = selection_entropy(&selection_counts(&values, 1, 500, c));
        ensure(h >= last - 1e-12, format!("entropy fell at C={c}: {entropies:?} then {h:.4}"))?;
        entropies.push(format!("{:.3}", h + 0.0));
        last = h;
    }
    Ok(format!("selection entropy {}", entropies.join(" ")))
}

fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn spearman_oracle(x: &[f64], y: &[f64]) -> f64 {
    // without ties: 1 - 6 Σd² / (n (n² - 1))
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

fn interpretability() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..20 {
        let x: Vec<f64> = (0..50).map(|_| rng.gen()).collect();
        let y: Vec<f64> = x.iter().map(|a| a * 0.5 + rng.gen::<f64>()).collect();
        let gp = (pearson(&x, &y).unwrap() - pearson_oracle(&x, &y)).abs();
        let gs = (spearman(&x, &y).unwrap() - spearman_oracle(&x, &y)).abs();
        ensure(gp <= 1e-9 && gs <= 1e-9, format!("coefficient gaps {gp:e} {gs:e}"))?;
    }
    let perm = permutation_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], spearman, 10, &mut rng).unwrap();
    ensure(perm.coefficient == 1.0, "permutation coefficient")?;

    let mut cfg = benchmark_config();
    cfg.dataset.groups = vec![StepGroup { steps: 4, count: 30 }, StepGroup { steps: 6, count: 30 }];
    cfg.backend.expert.fidelity = 0.9;
    cfg.analysis.verifier = true;
    let bench = run_benchmark(&cfg).map_err(|e| e.to_string())?;
    let report = analyze_edges(&cfg, &bench.edges()).map_err(|e| e.to_string())?;
    let s = report.spearman.ok_or("no spearman")?;
    ensure(s.coefficient > 0.0 && s.p_value < 0.05, format!("spearman {:.3} p {:.4}", s.coefficient, s.p_value))?;
    Ok(format!("{} edges, spearman {:.3} (p={:.4})", report.edges, s.coefficient, s.p_value))
}

fn reproducibility() -> Check {
    let mut cfg = benchmark_config();
    cfg.dataset.groups = vec![StepGroup { steps: 4, count: 10 }, StepGroup { steps: 6, count: 10 }];
    cfg.reward.normalize = true;
    let json = |r: Result<String, scmcts::harness::HarnessError>| r.map_err(|e| e.to_string());
    let bench = json(run_benchmark(&cfg).and_then(|r| to_json_string(&r)))?;
    let again_cfg = ExperimentConfig::from_json_str(&bench).map_err(|e| e.to_string())?;
    let again = json(run_benchmark(&again_cfg).and_then(|r| to_json_string(&r)))?;
    ensure(bench == again, "bench rerun differs")?;
    let ablation = json(run_ablation(&cfg).and_then(|r| to_json_string(&r)))?;
    let again_cfg = ExperimentConfig::from_json_str(&ablation).map_err(|e| e.to_string())?;
    ensure(ablation == json(run_ablation(&again_cfg).and_then(|r| to_json_string(&r)))?, "ablation rerun differs")?;
    let sweep = json(run_sweep(&cfg, SweepParam::Exploration, &[0.5, 2.5]).and_then(|r| to_json_string(&r)))?;
    let again_cfg = ExperimentConfig::from_json_str(&sweep).map_err(|e| e.to_string())?;
    let sweep_again =
        json(run_sweep(&again_cfg, SweepParam::Exploration, &[0.5, 2.5]).and_then(|r| to_json_string(&r)))?;
    ensure(sweep == sweep_again, "sweep rerun differs")?;
    Ok(format!(
        "bench, ablation and sweep reruns byte-identical ({} bytes)",
        bench.len() + ablation.len() + sweep.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("speculative decoding matches the target distribution", speculative_sampling),
        ("backpropagation arithmetic", backprop_arithmetic),
        ("JSD reward", jsd_reward),
        ("online region statistics", online_statistics),
        ("verifier progress", verifier_semantics),
        ("directional ablation", directional_ablation),
        ("iteration sweep", iteration_sweep),
        ("UCT selection", uct_behavior),
        ("interpretability pipeline", interpretability),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
