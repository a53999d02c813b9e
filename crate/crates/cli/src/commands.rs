//! The four subcommands. Each writes `manifest.cfg` before doing any work.

use std::fs;
use std::path::{Path, PathBuf};

use pair_grpo::analysis::{stability_metrics, StabilityMetrics};
use pair_grpo::par::{map_range, Exec};
use pair_grpo::trainer::{train_with, EpochRecord, Method, TrainConfig, TrainFailure, TrainOutcome};

use crate::config::{Config, ConfigError};
use crate::verify::{self, Check, Status};

pub const MANIFEST: &str = "manifest.cfg";
pub const EPOCHS_HEADER: [&str; 9] = [
    "epoch",
    "loss_total",
    "loss_fit_or_surrogate",
    "kl_term",
    "grad_norm",
    "policy_kl",
    "delta_t",
    "J",
    "wall_ms",
];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{method} seed {seed}: {failure}")]
    Train {
        method: Method,
        seed: u64,
        failure: TrainFailure,
    },
    #[error("{0}")]
    Numerical(pair_grpo::Error),
    #[error("{failed} of {total} checks failed")]
    SuiteFailure { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::SuiteFailure { .. } => 1,
            CliError::Config(_) | CliError::Io { .. } | CliError::Csv { .. } => 2,
            CliError::Train { .. } => 3,
            CliError::Numerical(e) => match e {
                pair_grpo::Error::InvalidParam { .. } | pair_grpo::Error::Io(_) | pair_grpo::Error::Csv(_) => 2,
                _ => 3,
            },
        }
    }
}

impl From<pair_grpo::Error> for CliError {
    fn from(e: pair_grpo::Error) -> Self {
        CliError::Numerical(e)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Creates `out` and writes the manifest into it.
pub fn prepare(config: &Config, command: &str, out: &Path, artifacts: &[&str]) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let path = out.join(MANIFEST);
    fs::write(&path, config.manifest(command, artifacts)).map_err(io_err(&path))
}

struct Table {
    path: PathBuf,
    writer: csv::Writer<fs::File>,
}

impl Table {
    fn create(path: PathBuf, header: &[&str]) -> Result<Self, CliError> {
        let mut writer = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
        writer.write_record(header).map_err(csv_err(&path))?;
        Ok(Table { path, writer })
    }

    fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(csv_err(&self.path))
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.writer
            .flush()
            .map_err(|source| CliError::Io { path: self.path.clone(), source })
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn epoch_row(r: &EpochRecord) -> [String; 9] {
    [
        r.epoch.to_string(),
        r.loss_total.to_string(),
        r.loss_fit_or_surrogate.to_string(),
        r.kl_term.to_string(),
        r.grad_norm.to_string(),
        r.policy_kl.to_string(),
        opt(r.delta_t),
        r.expected_return.to_string(),
        opt(r.wall_ms),
    ]
}

pub fn write_epochs(path: &Path, records: &[EpochRecord]) -> Result<(), CliError> {
    let mut t = Table::create(path.to_path_buf(), &EPOCHS_HEADER)?;
    for r in records {
        t.row(epoch_row(r))?;
    }
    t.finish()
}

/// Median; the mean of the middle two for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub epochs: usize,
    pub initial_return: f64,
    pub final_return: f64,
}

pub fn run_train(config: &Config, out: &Path) -> Result<TrainSummary, CliError> {
    let artifacts = ["epochs.csv", "final_policy.csv", "checkpoints/", "failure.txt"];
    prepare(config, "train", out, &artifacts)?;
    let tc = config.train_config(config.train.method, config.train.seed);
    let every = config.train.checkpoint_every;
    let ckpt_dir = out.join("checkpoints");
    if every > 0 {
        fs::create_dir_all(&ckpt_dir).map_err(io_err(&ckpt_dir))?;
    }
    let result = train_with(&tc, |r, policy| {
        if every > 0 && (r.epoch + 1) % every == 0 {
            policy.save(ckpt_dir.join(format!("epoch_{:04}.csv", r.epoch)))?;
        }
        Ok(())
    });
    match result {
        Ok(run) => {
            write_epochs(&out.join("epochs.csv"), &run.records)?;
            run.policy.save(out.join("final_policy.csv"))?;
            Ok(TrainSummary {
                epochs: run.records.len(),
                initial_return: run.initial_return,
                final_return: run.records.last().map_or(run.initial_return, |r| r.expected_return),
            })
        }
        Err(failure) => {
            write_epochs(&out.join("epochs.csv"), &failure.records)?;
            let path = out.join("failure.txt");
            fs::write(&path, format!("epoch = {}\nerror = {}\n", failure.epoch, failure.source))
                .map_err(io_err(&path))?;
            Err(CliError::Train {
                method: tc.method,
                seed: tc.seed,
                failure,
            })
        }
    }
}

fn run_batch(configs: Vec<TrainConfig>, exec: Exec) -> Result<Vec<TrainOutcome>, CliError> {
    map_range(configs.len(), exec, |i| train_with(&configs[i], |_, _| Ok(())))
        .into_iter()
        .zip(&configs)
        .map(|(r, c)| {
            r.map_err(|failure| CliError::Train {
                method: c.method,
                seed: c.seed,
                failure,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MethodSummary {
    pub method: Method,
    pub median_final_return: f64,
    pub median: StabilityMetrics,
}

#[derive(Debug, Clone)]
pub struct CompareSummary {
    pub methods: Vec<MethodSummary>,
    pub return_ordering_holds: bool,
    pub variance_ordering_holds: bool,
}

impl CompareSummary {
    fn get(&self, m: Method) -> &MethodSummary {
        self.methods.iter().find(|s| s.method == m).expect("all methods present")
    }

    pub fn report(&self) -> String {
        let (g, s, h) = (self.get(Method::Grpo), self.get(Method::SoftPair), self.get(Method::HardPair));
        let mark = |ok: bool| if ok { "holds" } else { "violated" };
        format!(
            "median final J: grpo {} | soft_pair {} | hard_pair {}\n\
             ordering grpo <= soft_pair <= hard_pair: {}\n\
             median grad_norm_variance: hard_pair {} | soft_pair {} | grpo {}\n\
             ordering hard_pair < soft_pair < grpo: {}\n",
            g.median_final_return,
            s.median_final_return,
            h.median_final_return,
            mark(self.return_ordering_holds),
            h.median.grad_norm_variance,
            s.median.grad_norm_variance,
            g.median.grad_norm_variance,
            mark(self.variance_ordering_holds),
        )
    }
}

pub fn run_compare(config: &Config, out: &Path, exec: Exec) -> Result<CompareSummary, CliError> {
    prepare(config, "compare", out, &["compare.csv", "stability.csv"])?;
    let seeds: Vec<u64> = (0..config.compare_seeds as u64).map(|i| config.train.seed + i).collect();
    let configs: Vec<TrainConfig> = Method::ALL
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .map(|(m, s)| config.train_config(m, s))
        .collect();
    let runs = run_batch(configs.clone(), exec)?;

    let mut curves = Table::create(out.join("compare.csv"), &["method", "seed", "step", "J", "loss_total"])?;
    let mut stab = Table::create(
        out.join("stability.csv"),
        &["method", "seed", "final_J", "grad_norm_variance", "kl_std", "oscillation"],
    )?;
    let mut methods = Vec::new();
    for m in Method::ALL {
        let mut finals = Vec::new();
        let mut metrics = Vec::new();
        for (c, run) in configs.iter().zip(&runs).filter(|(c, _)| c.method == m) {
            let seed = c.seed.to_string();
            curves.row([m.as_str(), &seed, "0", &run.initial_return.to_string(), ""])?;
            for r in &run.records {
                curves.row([
                    m.as_str(),
                    &seed,
                    &(r.epoch + 1).to_string(),
                    &r.expected_return.to_string(),
                    &r.loss_total.to_string(),
                ])?;
            }
            let st = stability_metrics(&run.records)?;
            let fin = run.records.last().map_or(run.initial_return, |r| r.expected_return);
            stab.row([
                m.as_str().to_string(),
                seed,
                fin.to_string(),
                st.grad_norm_variance.to_string(),
                st.kl_std.to_string(),
                st.oscillation.to_string(),
            ])?;
            finals.push(fin);
            metrics.push(st);
        }
        let med = StabilityMetrics {
            grad_norm_variance: median(&metrics.iter().map(|s| s.grad_norm_variance).collect::<Vec<_>>()),
            kl_std: median(&metrics.iter().map(|s| s.kl_std).collect::<Vec<_>>()),
            oscillation: median(&metrics.iter().map(|s| s.oscillation).collect::<Vec<_>>()),
        };
        let summary = MethodSummary {
            method: m,
            median_final_return: median(&finals),
            median: med,
        };
        stab.row([
            m.as_str().to_string(),
            "median".to_string(),
            summary.median_final_return.to_string(),
            med.grad_norm_variance.to_string(),
            med.kl_std.to_string(),
            med.oscillation.to_string(),
        ])?;
        methods.push(summary);
    }
    curves.finish()?;
    stab.finish()?;

    let pick = |m: Method| methods.iter().find(|s| s.method == m).expect("all methods present");
    let (g, s, h) = (pick(Method::Grpo), pick(Method::SoftPair), pick(Method::HardPair));
    let return_ordering_holds =
        g.median_final_return <= s.median_final_return && s.median_final_return <= h.median_final_return;
    let variance_ordering_holds = h.median.grad_norm_variance < s.median.grad_norm_variance
        && s.median.grad_norm_variance < g.median.grad_norm_variance;
    Ok(CompareSummary {
        methods,
        return_ordering_holds,
        variance_ordering_holds,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationSetting {
    pub label: String,
    pub delta0: f64,
    pub gamma_decay: f64,
    pub fixed_delta: bool,
}

/// The three step-size schedules, then fixed-delta (if enabled), then user extras.
pub fn ablation_settings(config: &Config) -> Vec<AblationSetting> {
    let decayed = |d: f64, g: f64| AblationSetting {
        label: format!("delta0={d} gamma={g}"),
        delta0: d,
        gamma_decay: g,
        fixed_delta: false,
    };
    let mut out = vec![decayed(0.01, 0.99), decayed(0.02, 0.98), decayed(0.05, 0.95)];
    if config.ablate.include_fixed {
        out.push(AblationSetting {
            label: format!("fixed delta={}", config.hp.delta0),
            delta0: config.hp.delta0,
            gamma_decay: config.hp.gamma_decay,
            fixed_delta: true,
        });
    }
    out.extend(config.ablate.extra.iter().map(|&(d, g)| decayed(d, g)));
    out
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub setting: AblationSetting,
    pub median_final_return: f64,
    pub median_oscillation: f64,
}

pub fn run_ablate(config: &Config, out: &Path, exec: Exec) -> Result<Vec<AblationRow>, CliError> {
    prepare(config, "ablate", out, &["ablate.csv", "ablate_runs.csv"])?;
    let settings = ablation_settings(config);
    let seeds: Vec<u64> = (0..config.ablate.seeds as u64).map(|i| config.train.seed + i).collect();
    let mut configs = Vec::new();
    for st in &settings {
        for &seed in &seeds {
            let mut tc = config.train_config(Method::HardPair, seed);
            tc.epochs = config.ablate.epochs;
            tc.hp.delta0 = st.delta0;
            tc.hp.gamma_decay = st.gamma_decay;
            tc.fixed_delta = st.fixed_delta;
            configs.push(tc);
        }
    }
    let runs = run_batch(configs, exec)?;

    let mut per_run = Table::create(out.join("ablate_runs.csv"), &["config", "seed", "final_J", "oscillation"])?;
    let mut summary = Table::create(
        out.join("ablate.csv"),
        &["config", "delta0", "gamma_decay", "fixed_delta", "seeds", "median_final_J", "median_oscillation"],
    )?;
    let mut rows = Vec::new();
    for (st, chunk) in settings.iter().zip(runs.chunks(seeds.len())) {
        let mut finals = Vec::new();
        let mut osc = Vec::new();
        for (seed, run) in seeds.iter().zip(chunk) {
            let fin = run.records.last().map_or(run.initial_return, |r| r.expected_return);
            let o = stability_metrics(&run.records)?.oscillation;
            per_run.row([st.label.clone(), seed.to_string(), fin.to_string(), o.to_string()])?;
            finals.push(fin);
            osc.push(o);
        }
        let row = AblationRow {
            setting: st.clone(),
            median_final_return: median(&finals),
            median_oscillation: median(&osc),
        };
        summary.row([
            st.label.clone(),
            st.delta0.to_string(),
            st.gamma_decay.to_string(),
            st.fixed_delta.to_string(),
            seeds.len().to_string(),
            row.median_final_return.to_string(),
            row.median_oscillation.to_string(),
        ])?;
        rows.push(row);
    }
    per_run.finish()?;
    summary.finish()?;
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct VerifySummary {
    pub suites: Vec<(String, Vec<Check>)>,
}

impl VerifySummary {
    pub fn suite_passed(checks: &[Check]) -> bool {
        checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn failed(&self) -> usize {
        self.suites
            .iter()
            .flat_map(|(_, c)| c)
            .filter(|c| c.status == Status::Fail)
            .count()
    }

    pub fn total(&self) -> usize {
        self.suites.iter().map(|(_, c)| c.len()).sum()
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        for (name, checks) in &self.suites {
            let tag = if Self::suite_passed(checks) { "PASS" } else { "FAIL" };
            s.push_str(&format!("{tag} {name}\n"));
            for c in checks.iter().filter(|c| c.status == Status::Fail) {
                s.push_str(&format!("    failed: {} = {} (want {})\n", c.name, c.value, c.threshold));
            }
        }
        s
    }
}

/// Runs the selected suites. A failing check is reported through the summary, not as an error.
pub fn run_verify(config: &Config, out: &Path, exec: Exec) -> Result<VerifySummary, CliError> {
    let suites = verify::select_suites(&config.verify_suites).map_err(|reason| {
        ConfigError::BadValue {
            key: "verify.suites".into(),
            value: config.verify_suites.clone(),
            reason,
        }
    })?;
    prepare(config, "verify", out, &["verify.csv", "summary.txt"])?;
    let results = verify::run_all(&suites, config, exec)?;
    let summary = VerifySummary { suites: results };
    let mut t = Table::create(out.join("verify.csv"), &["suite", "check", "value", "threshold", "status"])?;
    for c in summary.suites.iter().flat_map(|(_, c)| c) {
        t.row([c.suite.to_string(), c.name.clone(), c.value.to_string(), c.threshold.clone(), c.status.to_string()])?;
    }
    t.finish()?;
    let path = out.join("summary.txt");
    fs::write(&path, summary.report()).map_err(io_err(&path))?;
    Ok(summary)
}
