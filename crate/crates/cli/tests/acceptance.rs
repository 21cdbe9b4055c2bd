//! End-to-end acceptance checks. Each criterion prints one `PASS` or `FAIL`
//! line straight to stdout (bypassing the harness capture), and the test
//! fails if any criterion fails. Setting `ACCEPTANCE_CRITERIA=1,6` runs only
//! the listed criteria and reports the rest as `SKIP`.

use std::collections::BTreeMap;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use regime_trader::autodiff::{AdamW, AdamWConfig, Graph, Tensor};
use regime_trader::ddpg::{actor_forward, actor_loss_with, init_mlp, MlpShape, ACTOR};
use regime_trader::eval::replay;
use regime_trader::markov::{matrix_exponential, ou_step, simulate_path, ChainSpec, EnvConfig, Environment, OUParams, RegimeChain, Setting};
use regime_trader::pairs::fixture::{simulate_pair, PairSpec};
use regime_trader::pairs::{
    analyse_pair, backtest_zscore, cointegrate, fit_var, hamilton_two_regime, ingest_pair, johansen_test, HamiltonConfig,
    JohansenConfig, LobsterFiles,
};
use regime_trader::config::PairsConfig;
use regime_trader::rng;
use serde_json::{json, Value};

type Check = std::result::Result<String, String>;

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_regime-trader"))
        .args(args)
        .env("REGIME_TRADER_LOG", "warn")
        .output()
        .expect("failed to launch regime-trader")
}

fn cli_ok(args: &[&str]) -> Result<Duration, String> {
    let start = Instant::now();
    let out = cli(args);
    if out.status.success() {
        Ok(start.elapsed())
    } else {
        Err(format!("`{}` exited with {}: {}", args.join(" "), out.status, String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn ensure(cond: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(message())
    }
}

fn within_budget(elapsed: Duration, budget_secs: u64) -> Result<(), String> {
    ensure(elapsed <= Duration::from_secs(budget_secs), || {
        format!("took {:.1}s, budget {budget_secs}s", elapsed.as_secs_f64())
    })
}

fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap_or_default().split(',').map(str::to_string).collect();
    lines.map(|l| header.iter().cloned().zip(l.split(',').map(str::to_string)).collect()).collect()
}

fn field(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap_or_else(|_| panic!("{key} = {:?} is not a number", row[key]))
}

fn gradient_fidelity(scratch: &Path) -> Check {
    let dir = scratch.join("gradcheck");
    let elapsed = cli_ok(&["gradcheck", "--output-dir", dir.to_str().unwrap()])?;
    let rows = read_csv(&dir.join("gradcheck/gradcheck.csv"));
    ensure(rows.len() == 3, || format!("expected 3 checks, found {}", rows.len()))?;
    let mut parts = Vec::new();
    for row in &rows {
        let err = field(row, "max_rel_error");
        ensure(err < 1e-4, || format!("{} max relative error {err:.3e}", row["check"]))?;
        parts.push(format!("{} {err:.1e}", row["check"]));
    }
    within_budget(elapsed, 10)?;
    Ok(format!("{} ({:.1}s)", parts.join(", "), elapsed.as_secs_f64()))
}

fn stochastic_matrices() -> Check {
    let start = Instant::now();
    let cfg = EnvConfig::preset(Setting::ThetaKappaSigma);
    let specs = [("A_theta", &cfg.theta), ("A_kappa", &cfg.kappa), ("A_sigma", &cfg.sigma)];
    let mut worst_chain_z: f64 = 0.0;
    for (seed, (name, spec)) in specs.into_iter().enumerate() {
        let a = spec.rate_matrix();
        let p = matrix_exponential(&a, 0.2).map_err(|e| e.to_string())?;
        for i in 0..p.nrows() {
            let sum: f64 = p.row(i).iter().sum();
            ensure((sum - 1.0).abs() < 1e-10, || format!("{name} row {i} sums to {sum}"))?;
        }
        for (t1, t2) in [(0.2, 0.2), (0.2, 0.3), (1.0, 2.6)] {
            let lhs = matrix_exponential(&a, t1 + t2).map_err(|e| e.to_string())?;
            let rhs = matrix_exponential(&a, t1).unwrap() * matrix_exponential(&a, t2).unwrap();
            let gap = (lhs - rhs).amax();
            ensure(gap < 1e-8, || format!("{name} semigroup gap {gap:.2e} at ({t1}, {t2})"))?;
        }

        let mut chain = RegimeChain::new(spec, 0.2, 0).map_err(|e| e.to_string())?;
        let k = spec.len();
        let mut counts = vec![vec![0u64; k]; k];
        let mut r = rng::seeded(100 + seed as u64);
        for _ in 0..1_000_000 {
            let from = chain.current();
            let to = chain.step(&mut r);
            counts[from][to] += 1;
        }
        for i in 0..k {
            let n: u64 = counts[i].iter().sum();
            for j in 0..k {
                let q = p[(i, j)];
                let se = (q * (1.0 - q) / n as f64).sqrt();
                let z = (counts[i][j] as f64 / n as f64 - q).abs() / se;
                ensure(z < 4.0, || format!("{name} P[{i}][{j}] off by {z:.2} standard errors"))?;
                worst_chain_z = worst_chain_z.max(z);
            }
        }
    }
    within_budget(start.elapsed(), 30)?;
    Ok(format!("worst chain deviation {worst_chain_z:.2} SE ({:.1}s)", start.elapsed().as_secs_f64()))
}

fn ou_oracle() -> Check {
    let start = Instant::now();
    let p = OUParams::new(5.0, 1.0, 0.2, 0.2).map_err(|e| e.to_string())?;
    let decay = (-1f64).exp();
    let v_true = 0.04 * (1.0 - (-2f64).exp()) / 10.0;
    ensure((v_true - 3.4587e-3).abs() < 1e-7, || format!("conditional variance {v_true}"))?;
    let n = 1_000_000;
    let mut worst: f64 = 0.0;
    for (k, s) in [0.8, 1.0, 1.2].into_iter().enumerate() {
        let mut r = rng::seeded(200 + k as u64);
        let draws: Vec<f64> = (0..n).map(|_| ou_step(s, &p, &mut r)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let m_true = decay * s + (1.0 - decay) * 1.0;
        let z_mean = (mean - m_true).abs() / (v_true / n as f64).sqrt();
        let z_var = (var - v_true).abs() / (v_true * (2.0 / (n - 1) as f64).sqrt());
        ensure(z_mean < 4.0 && z_var < 4.0, || format!("s={s}: mean off {z_mean:.2} SE, variance off {z_var:.2} SE"))?;
        worst = worst.max(z_mean).max(z_var);
    }

    let cfg = EnvConfig { theta: ChainSpec::constant(1.0), ..EnvConfig::preset(Setting::Theta) };
    let env = Environment::new(cfg).map_err(|e| e.to_string())?;
    let path = simulate_path(&env, 1.0, 1_000_000, &mut rng::seeded(203)).map_err(|e| e.to_string())?;
    let m = path.values.iter().sum::<f64>() / path.len() as f64;
    let var = path.values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (path.len() - 1) as f64;
    let ratio = var / 0.004;
    ensure((ratio - 1.0).abs() < 0.05, || format!("stationary variance {var:.5} vs 0.004"))?;
    within_budget(start.elapsed(), 60)?;
    Ok(format!(
        "one-step moments within {worst:.2} SE, stationary variance ratio {ratio:.4} ({:.1}s)",
        start.elapsed().as_secs_f64()
    ))
}

const SEEDS: [u64; 3] = [1, 2, 3];

fn filter_learnability(scratch: &Path, filter_time: &mut Duration) -> Check {
    let config = workspace().join("configs/theta_only.json");
    let mut total = Duration::ZERO;
    let mut parts = Vec::new();
    for seed in SEEDS {
        let dir = scratch.join(format!("prob_{seed}"));
        let elapsed = cli_ok(&[
            "train-filter",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            &seed.to_string(),
            "--output-dir",
            dir.to_str().unwrap(),
        ])?;
        total += elapsed;
        let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("train-filter/validation.json")).unwrap())
            .map_err(|e| e.to_string())?;
        let ce = v["cross_entropy"].as_f64().ok_or("validation.json lacks cross_entropy")?;
        let acc = v["accuracy"].as_f64().ok_or("validation.json lacks accuracy")?;
        ensure(ce < 1.0 && acc > 0.5, || format!("seed {seed}: cross-entropy {ce:.3}, accuracy {acc:.3}"))?;
        parts.push(format!("seed {seed}: CE {ce:.3} acc {acc:.3}"));
    }
    *filter_time = total;
    within_budget(total, 600)?;
    Ok(format!("{} ({:.0}s)", parts.join("; "), total.as_secs_f64()))
}

fn evaluate_mean(dir: &Path) -> f64 {
    field(&read_csv(&dir.join("evaluate/summary.csv"))[0], "mean")
}

fn agent_ordering(scratch: &Path, prob_filter_time: Duration) -> Check {
    let mut total = prob_filter_time;
    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in SEEDS {
        let mut means = [0.0; 2];
        for (slot, (pipeline, file)) in [("prob", "theta_only.json"), ("reg", "theta_reg.json")].into_iter().enumerate() {
            let config = workspace().join("configs").join(file);
            let dir = scratch.join(format!("{pipeline}_{seed}"));
            let args = |cmd: &'static str| {
                vec![
                    cmd.to_string(),
                    "--config".into(),
                    config.to_str().unwrap().into(),
                    "--seed".into(),
                    seed.to_string(),
                    "--output-dir".into(),
                    dir.to_str().unwrap().into(),
                ]
            };
            let mut steps = vec!["train-agent", "evaluate"];
            if pipeline == "reg" {
                steps.insert(0, "train-filter");
            }
            for cmd in steps {
                let a = args(cmd);
                total += cli_ok(&a.iter().map(String::as_str).collect::<Vec<_>>())?;
            }
            means[slot] = evaluate_mean(&dir);
        }
        ensure(means[0] > 0.0, || format!("seed {seed}: prob mean {:.2} is not positive", means[0]))?;
        wins += usize::from(means[0] > means[1]);
        parts.push(format!("seed {seed}: prob {:.2} reg {:.2}", means[0], means[1]));
    }
    ensure(wins >= 2, || format!("prob beat reg in {wins} of 3 seeds: {}", parts.join("; ")))?;
    within_budget(total, 3600)?;
    Ok(format!("{}; prob > reg in {wins}/3 ({:.0}s)", parts.join("; "), total.as_secs_f64()))
}

fn quadratic_bowl() -> Check {
    let start = Instant::now();
    let shape = MlpShape { layers: 2, width: 16 };
    let i_max = 10.0;
    let mut r = rng::seeded(4);
    let mut actor = init_mlp(ACTOR, 3, shape, &mut r).map_err(|e| e.to_string())?;
    let features = Tensor::matrix(64, 3, (0..192).map(|_| rng::uniform(&mut r, 0.0, 1.0)).collect()).unwrap();
    let mut opt = AdamW::new(AdamWConfig { lr: 1e-2, weight_decay: 0.0, ..AdamWConfig::default() });
    for _ in 0..500 {
        let mut g = Graph::new();
        let loss = actor_loss_with(&mut g, &actor, &features, i_max, 0.0, |g, _, a| {
            let d = g.affine(a, 1.0, -3.0)?;
            let sq = g.mul(d, d)?;
            g.scale(sq, -1.0)
        })
        .map_err(|e| e.to_string())?;
        let grads = g.backward(loss).map_err(|e| e.to_string())?;
        opt.step(&mut actor, &grads).map_err(|e| e.to_string())?;
    }
    let mut g = Graph::untaped();
    let x = g.constant(features).unwrap();
    let a = actor_forward(&mut g, &actor, x, i_max, true).map_err(|e| e.to_string())?;
    let worst = g.value(a).data().iter().map(|v| (v - 3.0).abs()).fold(0.0, f64::max);
    ensure(worst < 0.1, || format!("policy output off 3 by {worst:.4}"))?;
    within_budget(start.elapsed(), 5)?;
    Ok(format!("max |a - 3| = {worst:.2e} after 500 steps ({:.2}s)", start.elapsed().as_secs_f64()))
}

fn pairs_arithmetic() -> Check {
    let start = Instant::now();
    let spec = PairSpec::default();
    let series = simulate_pair(&spec, 1_000_000, 7).map_err(|e| e.to_string())?;
    let fit = fit_var(&series).map_err(|e| e.to_string())?;
    let coint = cointegrate(&fit, 1.0).map_err(|e| e.to_string())?;
    let mut worst_rel: f64 = 0.0;
    for (got, want) in coint.eigenvalues.iter().zip(spec.eigenvalues) {
        worst_rel = worst_rel.max((got - want).abs() / want);
    }
    ensure(worst_rel < 0.02, || format!("eigenvalues {:?} vs {:?}", coint.eigenvalues, spec.eigenvalues))?;
    ensure(coint.reconstruction_error < 1e-8, || format!("reconstruction error {:.2e}", coint.reconstruction_error))?;
    let j = johansen_test(&series, &JohansenConfig::default()).map_err(|e| e.to_string())?;
    ensure(j.trace[0] > 18.399, || format!("fixture trace statistic {:.2}", j.trace[0]))?;

    let cfg = JohansenConfig::default();
    let mut rejections = 0;
    for seed in 0..200 {
        let mut r = rng::seeded(50_000 + seed);
        let mut walks = [Vec::with_capacity(10_000), Vec::with_capacity(10_000)];
        let (mut a, mut b) = (0.0, 0.0);
        for _ in 0..10_000 {
            a += rng::normal(&mut r);
            b += rng::normal(&mut r);
            walks[0].push(a);
            walks[1].push(b);
        }
        rejections += usize::from(johansen_test(&walks, &cfg).map_err(|e| e.to_string())?.reject_trace);
    }
    let rate = rejections as f64 / 200.0;
    ensure((rate - 0.05).abs() <= 0.03, || format!("random-walk rejection rate {rate:.3}"))?;
    within_budget(start.elapsed(), 300)?;
    Ok(format!(
        "eigenvalue error {:.2}%, reconstruction {:.1e}, trace {:.1}, size {:.1}% ({:.0}s)",
        100.0 * worst_rel,
        coint.reconstruction_error,
        j.trace[0],
        100.0 * rate,
        start.elapsed().as_secs_f64()
    ))
}

fn hamilton_blocks() -> Check {
    let start = Instant::now();
    let mut r = rng::seeded(9);
    let y: Vec<f64> = (0..2000)
        .map(|t| if (t / 100) % 2 == 0 { 0.2 } else { 0.6 } + 0.01 * rng::normal(&mut r))
        .collect();
    let fit = hamilton_two_regime(&y, &HamiltonConfig::default()).map_err(|e| e.to_string())?;
    ensure((fit.means[0] - 0.2).abs() < 0.02 && (fit.means[1] - 0.6).abs() < 0.02, || {
        format!("means {:?}", fit.means)
    })?;
    for w in fit.loglik_trace.windows(2) {
        ensure(w[1] >= w[0] - 1e-10, || format!("log-likelihood fell from {} to {}", w[0], w[1]))?;
    }
    within_budget(start.elapsed(), 60)?;
    Ok(format!(
        "means [{:.4}, {:.4}], {} EM iterations, log-likelihood non-decreasing ({:.2}s)",
        fit.means[0],
        fit.means[1],
        fit.loglik_trace.len(),
        start.elapsed().as_secs_f64()
    ))
}

fn backtest_identity() -> Check {
    let start = Instant::now();
    let dir = workspace().join("fixtures/lobster");
    let files = |name: &str| LobsterFiles {
        name: name.into(),
        message: dir.join(format!("{name}_message.csv")),
        orderbook: dir.join(format!("{name}_orderbook.csv")),
    };
    let mids = ingest_pair(&[files("alpha"), files("beta")], 1.0).map_err(|e| e.to_string())?;
    let analysis = analyse_pair(&mids, &PairsConfig::default()).map_err(|e| e.to_string())?;
    let s = &analysis.normalized;
    let w = 50;

    let mut worst: f64 = 0.0;
    let free = backtest_zscore(s, w, 10.0, 3.0, 0.0).map_err(|e| e.to_string())?;
    let mut r = rng::seeded(31);
    let random: Vec<f64> = (0..s.len() - 1).map(|_| rng::uniform(&mut r, -10.0, 10.0)).collect();
    let replayed = replay(s, &random, 0.0, 0.0);
    for (result, offset) in [(&free, w), (&replayed, 0)] {
        let direct: f64 = result.inventories.iter().enumerate().map(|(k, i)| i * (s[offset + k + 1] - s[offset + k])).sum();
        let gap = (result.cumulative - direct).abs();
        ensure(gap < 1e-9, || format!("λ=0 cumulative differs from Σ I ΔS by {gap:.2e}"))?;
        worst = worst.max(gap);
    }

    let costly = backtest_zscore(s, w, 10.0, 3.0, 0.05).map_err(|e| e.to_string())?;
    ensure(costly.inventories == free.inventories, || "λ changed the z-score actions".into())?;
    let mut turnover = free.inventories[0].abs();
    for k in 1..free.inventories.len() {
        turnover += (free.inventories[k] - free.inventories[k - 1]).abs();
    }
    let gap = (free.cumulative - costly.cumulative - 0.05 * turnover).abs();
    ensure(gap < 1e-9, || format!("cost identity off by {gap:.2e}"))?;
    within_budget(start.elapsed(), 10)?;
    Ok(format!(
        "{} steps on the LOBSTER fixture, identity gaps {:.1e} and {gap:.1e} ({:.2}s)",
        free.len(),
        worst,
        start.elapsed().as_secs_f64()
    ))
}

const SUBCOMMANDS: [&str; 9] = [
    "simulate",
    "train-filter",
    "train-agent",
    "evaluate",
    "policy-grid",
    "pairs-ingest",
    "pairs-coint",
    "pairs-backtest",
    "gradcheck",
];

fn tiny_config(out: &Path) -> Value {
    let lobster = workspace().join("fixtures/lobster");
    let asset = |name: &str| {
        json!({
            "name": name,
            "message": lobster.join(format!("{name}_message.csv")),
            "orderbook": lobster.join(format!("{name}_orderbook.csv")),
        })
    };
    let small = json!({ "layers": 2, "width": 8 });
    json!({
        "seed": 5,
        "output_dir": out,
        "setting": "theta",
        "simulate": { "length": 300 },
        "gru": {
            "layers": 1, "hidden": 4, "head_layers": 1, "head_width": 8,
            "train": { "iterations": 10, "batch": 16, "validation_size": 32 }
        },
        "agent": { "pipeline": "prob", "iterations": 8, "batch": 16, "actor": small, "critic": small },
        "eval": { "episodes": 3, "steps": 40 },
        "pairs": {
            "assets": [asset("alpha"), asset("beta")],
            "strategies": ["prob", "hid", "zscore", "flat"],
            "agent_seeds": [1, 2],
            "filter": { "iterations": 4, "batch": 8, "validation_size": 16 },
            "agent": { "iterations": 4, "batch": 8, "actor": small, "critic": small }
        }
    })
}

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn determinism(scratch: &Path) -> Check {
    let start = Instant::now();
    let out = scratch.join("determinism");
    let config = scratch.join("tiny.json");
    std::fs::write(&config, serde_json::to_string_pretty(&tiny_config(&out)).unwrap()).unwrap();
    let mut runs = Vec::new();
    for _ in 0..2 {
        if out.exists() {
            std::fs::remove_dir_all(&out).unwrap();
        }
        for cmd in SUBCOMMANDS {
            cli_ok(&[cmd, "--config", config.to_str().unwrap()])?;
        }
        runs.push(snapshot(&out));
    }
    let (a, b) = (&runs[0], &runs[1]);
    ensure(a.keys().eq(b.keys()), || "the two runs wrote different file sets".into())?;
    for cmd in SUBCOMMANDS {
        ensure(a.contains_key(&Path::new(cmd).join("manifest.json")), || format!("{cmd} wrote no manifest"))?;
    }
    let differing: Vec<String> =
        a.iter().filter(|(k, v)| b[*k] != **v).map(|(k, _)| k.display().to_string()).collect();
    ensure(differing.is_empty(), || format!("bytes differ in {}", differing.join(", ")))?;
    Ok(format!(
        "{} subcommands, {} artifacts byte-identical across reruns ({:.0}s)",
        SUBCOMMANDS.len(),
        a.len(),
        start.elapsed().as_secs_f64()
    ))
}

fn selected(number: usize) -> bool {
    match std::env::var("ACCEPTANCE_CRITERIA") {
        Ok(list) => list.split(',').any(|n| n.trim().parse() == Ok(number)),
        Err(_) => true,
    }
}

fn run(number: usize, title: &str, check: impl FnOnce() -> Check) -> bool {
    if !selected(number) {
        writeln!(std::io::stdout().lock(), "criterion {number:>2} SKIP: {title}").unwrap();
        return true;
    }
    let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
        let message = panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into());
        Err(message)
    });
    let (status, detail, pass) = match outcome {
        Ok(detail) => ("PASS", detail, true),
        Err(detail) => ("FAIL", detail, false),
    };
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "criterion {number:>2} {status}: {title}: {detail}").unwrap();
    stdout.flush().unwrap();
    pass
}

#[test]
fn acceptance() {
    let scratch = tempfile::tempdir().unwrap();
    let dir = scratch.path();
    let mut filter_time = Duration::ZERO;
    let results = [
        run(1, "gradient fidelity", || gradient_fidelity(dir)),
        run(2, "stochastic-matrix suite", stochastic_matrices),
        run(3, "OU oracle", ou_oracle),
        run(4, "filter learnability", || filter_learnability(dir, &mut filter_time)),
        run(5, "agent sign and ordering", || agent_ordering(dir, filter_time)),
        run(6, "quadratic-bowl actor", quadratic_bowl),
        run(7, "pairs arithmetic", pairs_arithmetic),
        run(8, "Hamilton EM", hamilton_blocks),
        run(9, "backtest identity", backtest_identity),
        run(10, "determinism", || determinism(dir)),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
