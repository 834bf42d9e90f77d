//! Executes experiments and streams their records.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use entrance_core::finite::{check_identities, random_lab_case, IdentityRecord, LabCase};
use entrance_core::laws::IncrementLaw;
use entrance_core::measures::{lambda_entrance, lambda_exit, pi_measure, pi_minus, pi_plus, support_window, LatticeMeasure, MeasureError};
use entrance_core::verify::{
    alternation_test, clt_level_crossings, cross_oracle_test, expected_crossings, hopf_ratio_test, kac_mc_test, lln_overshoots,
    stationarity_test, write_grid_csv, ExperimentReport, VerifyError, DEFAULT_HORIZON,
};
use entrance_core::{LatticeLaw, Scalar, Q};
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{Config, ConfigError, Experiment, ExperimentKind, MeasureKind};

const DEFAULT_LEVELS: [f64; 4] = [0.0, 1.0, 2.0, 5.0];
const DEFAULT_KAC_WINDOW: (i64, i64) = (-3, 3);
const DEFAULT_LLN_MAX_STEPS: u64 = 1 << 40;
const DEFAULT_HOPF_MAX_STEPS: u64 = 1 << 36;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("experiment `{name}`: {source}")]
    Verify { name: String, source: VerifyError },
    #[error("experiment `{name}`: {message}")]
    Input { name: String, message: String },
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Shared provenance and output location.
#[derive(Clone, Debug)]
pub struct Context {
    pub seed: u64,
    pub config_hash: String,
    pub out_dir: PathBuf,
}

impl Context {
    fn provenance(&self) -> Value {
        json!({ "config_hash": self.config_hash, "seed": self.seed })
    }

    fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
        move |source| RunError::Io { path: path.to_path_buf(), source }
    }

    /// Creates `<out>/<file>` with a `#` comment line carrying the provenance.
    fn csv_file(&self, file: &str, extra: Value) -> Result<(PathBuf, BufWriter<File>), RunError> {
        let path = self.out_dir.join(file);
        let f = File::create(&path).map_err(Self::io_err(&path))?;
        let mut w = BufWriter::new(f);
        let mut header = self.provenance();
        if let (Some(h), Value::Object(extra)) = (header.as_object_mut(), extra) {
            h.extend(extra);
        }
        writeln!(w, "# {header}").map_err(Self::io_err(&path))?;
        Ok((path, w))
    }
}

/// One JSON-lines record.
#[derive(Clone, Debug)]
pub struct Record {
    pub value: Value,
    pub pass: bool,
}

/// Everything one experiment produced.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub name: String,
    pub optional: bool,
    pub records: Vec<Record>,
    /// Human-readable summary lines.
    pub lines: Vec<String>,
}

impl ExperimentOutput {
    pub fn pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }
}

fn tag(e: &Experiment, ctx: &Context, kind: &str, mut body: Value) -> Value {
    let mut v = json!({ "type": kind, "name": e.name, "kind": e.config.kind.name() });
    let obj = v.as_object_mut().expect("object");
    obj.extend(ctx.provenance().as_object().expect("object").clone());
    if let Some(b) = body.as_object_mut() {
        obj.append(b);
    }
    v
}

fn report_record(e: &Experiment, ctx: &Context, report: ExperimentReport) -> (Record, String) {
    let report = match e.config.tolerance {
        Some(t) => report.with_tolerance(t),
        None => report,
    };
    let line = report.summary_line();
    let pass = report.pass;
    let value = tag(e, ctx, "report", serde_json::to_value(&report).expect("reports serialize"));
    (Record { value, pass }, line)
}

fn lab_record(e: &Experiment, ctx: &Context, scalar: &str, case: LabCase) -> Record {
    let mut case = case;
    if let Some(t) = e.config.tolerance {
        case.records = case.records.iter().map(|r| IdentityRecord::new(&r.identity, r.residual, t)).collect();
    }
    let pass = case.pass();
    let value = tag(
        e,
        ctx,
        "identities",
        json!({ "scalar": scalar, "index": case.index, "n": case.n, "a": case.a, "records": case.records, "pass": pass }),
    );
    Record { value, pass }
}

fn lab_summary(e: &Experiment, records: &[Record]) -> String {
    let passed = records.iter().filter(|r| r.pass).count();
    let worst = records
        .iter()
        .flat_map(|r| r.value["records"].as_array().into_iter().flatten())
        .filter_map(|r| r["residual"].as_f64())
        .fold(0.0, f64::max);
    format!(
        "{:<4} {:<34} {}/{} chains pass; max residual {:.2e}",
        if passed == records.len() { "PASS" } else { "FAIL" },
        e.name,
        passed,
        records.len(),
        worst
    )
}

fn lattice<'a>(e: &Experiment, law: &'a IncrementLaw) -> Result<&'a LatticeLaw, RunError> {
    law.as_lattice().ok_or_else(|| RunError::Input { name: e.name.clone(), message: "this kind needs a lattice law".into() })
}

fn build_measure<S: Scalar>(e: &Experiment, law: &LatticeLaw) -> Result<LatticeMeasure<S>, MeasureError> {
    let c = &e.config;
    let window = c.window.clone().unwrap_or_else(|| support_window(law));
    let target = c.target.map(|t| t.build());
    match c.measure.expect("validated") {
        MeasureKind::Pi => pi_measure(law, &window),
        MeasureKind::PiPlus => pi_plus(law, &window),
        MeasureKind::PiMinus => pi_minus(law, &window),
        MeasureKind::LambdaEntrance => lambda_entrance(law, target.as_ref().expect("validated"), &window),
        MeasureKind::LambdaExit => lambda_exit(law, target.as_ref().expect("validated"), &window),
    }
}

fn dump_measure<S: Scalar>(e: &Experiment, ctx: &Context, law: &LatticeLaw, label: &str) -> Result<(Record, String), RunError> {
    let input = |m: MeasureError| RunError::Input { name: e.name.clone(), message: m.to_string() };
    let m: LatticeMeasure<S> = build_measure(e, law).map_err(input)?;
    let header = m.header_json(label);
    let (path, mut w) = ctx.csv_file(&format!("{}.csv", e.name), header.clone())?;
    m.write_csv(&mut w).map_err(input)?;
    w.flush().map_err(Context::io_err(&path))?;
    let line = format!("{:<4} {:<34} {} points -> {}", "PASS", e.name, m.weights.len(), path.display());
    let value = tag(e, ctx, "measure", json!({ "path": path, "header": header, "pass": true }));
    Ok((Record { value, pass: true }, line))
}

fn checked<T>(e: &Experiment, r: Result<T, VerifyError>) -> Result<T, RunError> {
    r.map_err(|source| RunError::Verify { name: e.name.clone(), source })
}

/// Runs one experiment. Statistical failures become failing records; bad
/// inputs become errors.
pub fn run_experiment(e: &Experiment, ctx: &Context) -> Result<ExperimentOutput, RunError> {
    let c = &e.config;
    let seed = ctx.seed;
    let law = match &c.law {
        Some(spec) => Some(spec.build().map_err(|err| RunError::Input { name: e.name.clone(), message: err.to_string() })?),
        None => None,
    };
    let law_ref = || law.as_ref().expect("validated");
    let horizon = c.horizon.unwrap_or(DEFAULT_HORIZON);
    let mut reports: Vec<ExperimentReport> = Vec::new();
    let mut records = Vec::new();
    let mut lines = Vec::new();

    match c.kind {
        ExperimentKind::FiniteLab => {
            let n = e.size("n_states")? as usize;
            let cases: Result<Vec<Record>, _> = (0..e.size("n_chains")?)
                .into_par_iter()
                .map(|i| {
                    if c.exact {
                        random_lab_case::<Q>(seed, i, n).map(|case| lab_record(e, ctx, "rational", case))
                    } else {
                        random_lab_case::<f64>(seed, i, n).map(|case| lab_record(e, ctx, "f64", case))
                    }
                })
                .collect();
            records = cases.map_err(|err| RunError::Input { name: e.name.clone(), message: err.to_string() })?;
            lines.push(lab_summary(e, &records));
        }
        ExperimentKind::FiniteChain => {
            let spec = c.chain.as_ref().expect("validated");
            let input = |err: entrance_core::FiniteError| RunError::Input { name: e.name.clone(), message: err.to_string() };
            let (scalar, recs, a) = if c.exact {
                let (chain, part) = spec.build::<Q>().map_err(input)?;
                ("rational", check_identities(&chain, &part).map_err(input)?, part.a)
            } else {
                let (chain, part) = spec.build::<f64>().map_err(input)?;
                ("f64", check_identities(&chain, &part).map_err(input)?, part.a)
            };
            let case = LabCase { index: 0, n: spec.n, a, records: recs };
            records.push(lab_record(e, ctx, scalar, case));
            lines.push(lab_summary(e, &records));
        }
        ExperimentKind::Measure => {
            let lat = lattice(e, law_ref())?;
            let label = law_ref().label();
            let (rec, line) = if c.exact { dump_measure::<Q>(e, ctx, lat, &label)? } else { dump_measure::<f64>(e, ctx, lat, &label)? };
            records.push(rec);
            lines.push(line);
        }
        ExperimentKind::Stationarity => {
            let a = c.target.expect("validated").build();
            reports.push(checked(e, stationarity_test(law_ref(), &a, e.size("n_samples")?, horizon, seed))?);
        }
        ExperimentKind::Alternation => {
            reports.extend(checked(e, alternation_test(law_ref(), e.size("n_samples")?, horizon, seed))?);
        }
        ExperimentKind::LlnOvershoots => {
            let max_steps = c.max_steps.unwrap_or(DEFAULT_LLN_MAX_STEPS);
            for &x0 in c.starts.as_deref().unwrap_or(&[0.0]) {
                reports.push(checked(e, lln_overshoots(law_ref(), e.size("n_crossings")?, x0, max_steps, seed))?);
            }
        }
        ExperimentKind::CltLevelCrossings => {
            for (i, &x0) in c.starts.as_deref().unwrap_or(&[0.0]).iter().enumerate() {
                let out = checked(e, clt_level_crossings(law_ref(), e.size("n_steps")?, e.size("n_replicas")?, x0, seed))?;
                let (path, mut w) =
                    ctx.csv_file(&format!("{}_start{i}.csv", e.name), json!({ "experiment": e.name, "law": out.report.law, "start": x0 }))?;
                write_grid_csv(&mut w, &out.grid).map_err(|err| RunError::Io { path: path.clone(), source: err.into() })?;
                w.flush().map_err(Context::io_err(&path))?;
                reports.push(out.report);
            }
        }
        ExperimentKind::ExpectedCrossings => {
            let side = c.side.expect("validated").orthant();
            let levels = c.levels.as_deref().unwrap_or(&DEFAULT_LEVELS);
            reports.push(checked(e, expected_crossings(law_ref(), side, levels, e.size("n_excursions")?, horizon, seed))?);
        }
        ExperimentKind::Kac => {
            let window = c.window.as_ref().and_then(|w| w.first().copied()).unwrap_or(DEFAULT_KAC_WINDOW);
            match kac_mc_test(law_ref(), window, e.size("n_excursions")?, horizon, seed) {
                Err(VerifyError::CensorInflation { rate }) => {
                    let value = tag(e, ctx, "error", json!({ "error": "censor rate far above the gate", "censor_rate": rate, "pass": false }));
                    records.push(Record { value, pass: false });
                    lines.push(format!("FAIL {:<34} censor rate {rate:.2e}; raise the horizon", e.name));
                }
                r => reports.push(checked(e, r)?),
            }
        }
        ExperimentKind::HopfRatio => {
            let lat = lattice(e, law_ref())?;
            let start = c.start_point.clone().unwrap_or_else(|| vec![-1; lat.dim()]);
            let (b1, b2) = (c.b1.as_ref().expect("validated"), c.b2.as_ref().expect("validated"));
            let max_steps = c.max_steps.unwrap_or(DEFAULT_HOPF_MAX_STEPS);
            reports.push(checked(e, hopf_ratio_test(lat, &start, b1, b2, e.size("n_entrances")?, max_steps, seed))?);
        }
        ExperimentKind::CrossOracle => {
            let n_states = e.size("n_states")? as usize;
            reports.push(checked(e, cross_oracle_test(e.size("n_chains")?, n_states, e.size("samples_per_row")?, horizon, seed))?);
        }
    }
    for r in reports {
        let (rec, line) = report_record(e, ctx, r);
        records.push(rec);
        lines.push(line);
    }
    Ok(ExperimentOutput { name: e.name.clone(), optional: c.optional, records, lines })
}

/// JSON-lines sink flushed after every record.
pub struct Sink {
    path: PathBuf,
    out: BufWriter<File>,
}

impl Sink {
    pub fn create(path: PathBuf) -> Result<Sink, RunError> {
        let f = File::create(&path).map_err(Context::io_err(&path))?;
        Ok(Sink { out: BufWriter::new(f), path })
    }

    pub fn write(&mut self, record: &Record) -> Result<(), RunError> {
        writeln!(self.out, "{}", record.value).and_then(|_| self.out.flush()).map_err(Context::io_err(&self.path))
    }
}

/// Runs every experiment on the rayon pool and writes records in config
/// order as soon as each prefix of experiments is complete. Verdicts and
/// records do not depend on the number of threads.
pub fn run_all(config: &Config, ctx: &Context, sink: &mut Sink) -> Vec<Result<ExperimentOutput, RunError>> {
    let n = config.experiments.len();
    let (tx, rx) = mpsc::channel();
    let mut done: BTreeMap<usize, Result<ExperimentOutput, RunError>> = BTreeMap::new();
    let mut results = Vec::with_capacity(n);
    rayon::in_place_scope(|scope| {
        for (i, e) in config.experiments.iter().enumerate() {
            let tx = tx.clone();
            scope.spawn(move |_| {
                let started = Instant::now();
                let r = run_experiment(e, ctx);
                let _ = tx.send((i, r, started.elapsed()));
            });
        }
        drop(tx);
        for (i, r, elapsed) in rx {
            if let Ok(out) = &r {
                eprintln!("finished {} in {:.1}s", out.name, elapsed.as_secs_f64());
            }
            done.insert(i, r);
            while let Some(r) = done.remove(&results.len()) {
                let r = match r {
                    Ok(out) => out.records.iter().try_for_each(|rec| sink.write(rec)).map(|_| out),
                    Err(err) => Err(err),
                };
                results.push(r);
            }
        }
    });
    results
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(dir: &Path) -> Context {
        Context { seed: 7, config_hash: "abc".into(), out_dir: dir.to_path_buf() }
    }

    #[test]
    fn exact_chain_records_have_zero_residuals() {
        let text = r#"
[[experiment]]
kind = "finite_chain"
exact = true
chain = { n = 3, rows = [["0", "1/2", "1/2"], ["1/3", "1/3", "1/3"], ["1", "0", "0"]], a = [0] }
"#;
        let cfg = Config::parse(text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&cfg.experiments[0], &ctx(dir.path())).unwrap();
        assert!(out.pass());
        let recs = out.records[0].value["records"].as_array().unwrap();
        assert!(recs.iter().all(|r| r["residual"].as_f64() == Some(0.0)));
        assert_eq!(out.records[0].value["seed"], 7);
    }

    #[test]
    fn tolerance_override_rejudges_identities() {
        let text = "[[experiment]]\nkind = \"finite_lab\"\nn_chains = 2\nn_states = 4\ntolerance = 0.0\n";
        let cfg = Config::parse(text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&cfg.experiments[0], &ctx(dir.path())).unwrap();
        // floating point residuals are rarely all exactly zero
        let any_positive = out.records.iter().any(|r| {
            r.value["records"].as_array().unwrap().iter().any(|x| x["residual"].as_f64().unwrap() > 0.0)
        });
        assert_eq!(out.pass(), !any_positive);
    }

    #[test]
    fn measure_csv_carries_provenance() {
        let text = r#"
[[experiment]]
kind = "measure"
name = "skew-pi-plus"
exact = true
measure = "pi_plus"
law = { kind = "lattice", entries = [[-1, "2/3"], [2, "1/3"]] }
"#;
        let cfg = Config::parse(text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        run_experiment(&cfg.experiments[0], &ctx(dir.path())).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("skew-pi-plus.csv")).unwrap();
        let first = csv.lines().next().unwrap();
        assert!(first.starts_with("# ") && first.contains("\"config_hash\":\"abc\"") && first.contains("\"seed\":7"), "{first}");
        assert!(csv.contains("1/3"), "{csv}");
    }

    #[test]
    fn wrong_law_is_an_input_error() {
        let text = "[[experiment]]\nkind = \"lln_overshoots\"\nlaw = { kind = \"uniform\", a = 0.0, b = 1.0 }\nn_crossings = 5\n";
        let cfg = Config::parse(text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let err = run_experiment(&cfg.experiments[0], &ctx(dir.path())).unwrap_err();
        assert!(matches!(err, RunError::Verify { .. }), "{err}");
    }
}
