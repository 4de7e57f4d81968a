use std::fmt;
use std::io::Write;

use fibertwin::complexity::{instrumented_counts, pidt_cost, pino_ratio, CostReport, PINO_REFERENCE};
use fibertwin::grad::{
    finite_diff_check, BatchItem, BatchObjective, FdReport, LossSpec, Objective, ParameterVector, Quadratic,
};
use fibertwin::losses::{CoordinateSet, LossWeights};
use fibertwin::nlse::{GridSpec, Propagator};
use fibertwin::signal::{AwgnSource, NoiseConfig};
use fibertwin::trainer::{build_dataset, sample_coordinates, train_with, Dataset, Summary};
use fibertwin::{Error, Exec};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::output::{io, preamble, OutDir};

const GRADCHECK_TOL: f64 = 1e-4;
const QUADRATIC_TOL: f64 = 1e-10;
const FD_STEP: f64 = 1e-5;

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numeric(String),
    Io(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Numeric(_) | Failure::Io(_) => 1,
            Failure::Config(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config: {m}"),
            Failure::Numeric(m) => write!(f, "numeric: {m}"),
            Failure::Io(m) => write!(f, "io: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else if matches!(e, Error::Io(_)) {
            Failure::Io(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

fn dataset(cfg: &ExperimentConfig) -> Result<Dataset, Failure> {
    Ok(build_dataset(
        cfg.channel.n_pairs,
        &cfg.scenario(),
        cfg.channel.dataset_seed,
        Exec::default(),
    )?)
}

#[derive(Serialize)]
struct DatasetMeta {
    n_pairs: usize,
    n_samples: usize,
    /// Sampling step in symbol periods.
    dt: f64,
    csv_sha256: String,
}

pub fn simulate(cfg: &ExperimentConfig, force: bool) -> Result<(), Failure> {
    let out = OutDir::new(cfg, force)?;
    let data = dataset(cfg)?;
    let path = out.path("dataset.csv");
    let mut buf = Vec::new();
    for line in preamble(cfg) {
        writeln!(buf, "# {line}").map_err(|e| io(&path, e))?;
    }
    writeln!(buf, "pair,sample,input_re,input_im,reference_re,reference_im").map_err(|e| io(&path, e))?;
    for (p, (x, y)) in data.pairs.iter().enumerate() {
        for (i, (a, b)) in x.samples.iter().zip(&y.samples).enumerate() {
            writeln!(buf, "{p},{i},{},{},{},{}", a.re, a.im, b.re, b.im).map_err(|e| io(&path, e))?;
        }
    }
    let mut w = out.create("dataset.csv")?;
    w.write_all(&buf).and_then(|_| w.flush()).map_err(|e| io(&path, e))?;
    let n = data.pairs[0].0.len();
    let meta = DatasetMeta {
        n_pairs: data.len(),
        n_samples: n,
        dt: data.pairs[0].0.dt_ps,
        csv_sha256: format!("{:x}", Sha256::digest(&buf)),
    };
    out.write_json("dataset.json", cfg, meta)?;
    println!("simulate: {} pairs × {n} samples -> {}", data.len(), path.display());
    Ok(())
}

#[derive(Serialize)]
struct Diverged {
    iteration: usize,
    reason: String,
    snapshot: Vec<f64>,
}

pub fn train(cfg: &ExperimentConfig, force: bool) -> Result<(), Failure> {
    let out = OutDir::new(cfg, force)?;
    let data = dataset(cfg)?;
    let tc = cfg.train_config();
    let h = match train_with(&data, &tc, Exec::default()) {
        Ok(h) => h,
        Err(Error::TrainingDiverged {
            iteration,
            reason,
            snapshot,
        }) => {
            let msg = format!("training diverged at iteration {iteration}: {reason}");
            out.write_json(
                "diverged.json",
                cfg,
                Diverged {
                    iteration,
                    reason,
                    snapshot,
                },
            )?;
            return Err(Failure::Numeric(msg));
        }
        Err(e) => return Err(e.into()),
    };
    let path = out.path("history.csv");
    let w = out.create("history.csv")?;
    h.write_csv(w, &preamble(cfg)).map_err(|e| io(&path, e))?;
    let echo = serde_json::to_value(cfg).map_err(|e| Failure::Io(e.to_string()))?;
    out.write_json("summary.json", cfg, h.summary(echo))?;
    let e = &h.estimates;
    println!(
        "train: beta2_hat {:.4} ps²/km (rel err {:.4}), gamma_hat {:.4} 1/(W·km) (rel err {:.4}), l_io {:.3e}",
        e.beta2_hat, e.rel_err_beta2, e.gamma_hat, e.rel_err_gamma, h.final_l_io
    );
    Ok(())
}

#[derive(Serialize)]
struct CheckRow {
    label: String,
    max_deviation: f64,
    tolerance: f64,
    report: FdReport,
}

fn check_batch(cfg: &ExperimentConfig, data: &Dataset, grid: &GridSpec) -> Vec<BatchItem> {
    let seed = cfg.train.seed;
    let noise_cfg = NoiseConfig {
        snr_db: cfg.channel.snr_db,
        seed,
    };
    let mut noise = AwgnSource::with_rng(&noise_cfg, 1.0, ChaCha8Rng::seed_from_u64(seed));
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    data.pairs
        .iter()
        .take(cfg.train.batch_signals)
        .map(|(x, y)| {
            let mut reference = y.samples.clone();
            noise.add_in_place(&mut reference);
            let coords = if cfg.loss.physics {
                sample_coordinates(grid, cfg.loss.coords_per_signal, &mut rng)
            } else {
                CoordinateSet::default()
            };
            BatchItem {
                input: x.samples.clone(),
                reference,
                coords,
            }
        })
        .collect()
}

pub fn gradcheck(cfg: &ExperimentConfig, force: bool, quadratic: bool, corrupt: bool) -> Result<(), Failure> {
    let out = OutDir::new(cfg, force)?;
    let m = cfg.twin.m_segments;
    let mut rows = Vec::new();
    let mut run = |label: String, obj: &dyn Objective, point: &[f64], seed: u64, tol: f64| -> Result<(), Failure> {
        let report = finite_diff_check(obj, point, seed, FD_STEP)?;
        println!("gradcheck {label}: max deviation {:.3e} (tolerance {tol:e})", report.max_deviation);
        rows.push(CheckRow {
            label,
            max_deviation: report.max_deviation,
            tolerance: tol,
            report,
        });
        Ok(())
    };
    if quadratic {
        let q = Quadratic::random(2 * m + 2, cfg.train.seed);
        let origin = vec![0.0; q.dim()];
        for k in 0..4 {
            run(format!("quadratic {k}"), &q, &origin, k, QUADRATIC_TOL)?;
        }
    } else {
        let data = dataset(cfg)?;
        let (x0, _) = &data.pairs[0];
        let grid = GridSpec::new(x0.len(), x0.dt_ps, m, 1.0)?;
        let prop = Propagator::new(grid);
        let batch = check_batch(cfg, &data, &grid);
        let tc = cfg.train_config();
        let obj = BatchObjective {
            prop: &prop,
            batch: &batch,
            spec: LossSpec {
                weights: if tc.physics {
                    LossWeights::default()
                } else {
                    LossWeights::observation_only()
                },
                norm: tc.norm,
                physics: tc.physics,
                scales: cfg.scenario().scales(),
                frozen: Vec::new(),
                corrupt_adjoint: corrupt,
            },
            exec: Exec::default(),
        };
        let mut truth: Vec<f64> = (0..m + 1).flat_map(|_| [-1.0, 1.0]).collect();
        run("default".into(), &obj, &truth, cfg.train.seed, GRADCHECK_TOL)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed ^ 0x9e37);
        for k in 0..3 {
            for v in truth.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            run(format!("random {k}"), &obj, &truth, cfg.train.seed + 1 + k, GRADCHECK_TOL)?;
        }
    }
    out.write_json("gradcheck.json", cfg, serde_json::json!({ "checks": rows }))?;
    match rows.iter().find(|r| !(r.max_deviation <= r.tolerance)) {
        Some(r) => Err(Failure::Numeric(format!(
            "gradient check `{}` deviates by {:.3e}",
            r.label, r.max_deviation
        ))),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct PinoRow {
    name: &'static str,
    weights: u64,
    /// C_PINO / C_PIDT under this artifact's counting formulas.
    ratio_own_formulas: f64,
}

#[derive(Serialize)]
struct ComplexityDoc {
    formula: CostReport,
    instrumented: CostReport,
    queries_per_iteration: usize,
    pino_reference: Vec<PinoRow>,
}

pub fn complexity(cfg: &ExperimentConfig, force: bool) -> Result<(), Failure> {
    let out = OutDir::new(cfg, force)?;
    let s = cfg.scenario();
    let n = s.n_samples();
    let m = cfg.twin.m_segments;
    let queries = cfg.loss.coords_per_signal;
    let formula = pidt_cost(n, m, s.n_sym, queries)?;

    let data = build_dataset(1, &s, cfg.channel.dataset_seed, Exec::Sequential)?;
    let (x0, _) = &data.pairs[0];
    let grid = GridSpec::new(n, x0.dt_ps, m, 1.0)?;
    let prop = Propagator::new(grid);
    let truth: Vec<f64> = (0..m + 1).flat_map(|_| [-1.0, 1.0]).collect();
    let twin = ParameterVector::from_values(truth)?.twin(&s.scales(), 1.0);
    let coords = sample_coordinates(&grid, queries, &mut ChaCha8Rng::seed_from_u64(cfg.train.seed));
    let (instrumented, _) = instrumented_counts(&prop, &x0.samples, &twin, &coords, s.n_sym)?;

    println!("{:<28}{:>16}{:>16}", "item", "formula", "instrumented");
    let rows = [
        ("ssfm mults", formula.ssfm_mults, instrumented.ssfm_mults),
        ("interp coefficient mults", formula.interp_coeff_mults, instrumented.interp_coeff_mults),
        ("interp query mults", formula.interp_query_mults, instrumented.interp_query_mults),
        ("trainable parameters", formula.params_trainable, instrumented.params_trainable),
    ];
    for (k, a, b) in rows {
        println!("{k:<28}{a:>16}{b:>16}");
    }
    println!(
        "{:<28}{:>16}",
        "mults per symbol",
        format!("{}/{} ≈ {:.1}", formula.per_symbol.num, formula.per_symbol.den, formula.per_symbol.value())
    );
    let pino: Vec<PinoRow> = PINO_REFERENCE
        .iter()
        .map(|&(name, weights)| PinoRow {
            name,
            weights,
            ratio_own_formulas: pino_ratio(weights, &formula),
        })
        .collect();
    for r in &pino {
        println!(
            "{:<28}{:>16}  C_PINO/C_PIDT = {:.1} (this tool's formulas)",
            r.name, r.weights, r.ratio_own_formulas
        );
    }
    let mismatch = formula != instrumented;
    out.write_json(
        "complexity.json",
        cfg,
        ComplexityDoc {
            formula,
            instrumented,
            queries_per_iteration: queries * cfg.train.batch_signals,
            pino_reference: pino,
        },
    )?;
    if mismatch {
        return Err(Failure::Numeric("instrumented counts differ from the formulas".into()));
    }
    Ok(())
}

#[derive(Deserialize)]
struct SummaryDoc {
    version: String,
    #[serde(flatten)]
    summary: Summary,
}

#[derive(Serialize)]
struct SweepRow {
    snr_db: f64,
    rel_err_beta2: f64,
    rel_err_gamma: f64,
    final_l_io: f64,
}

pub fn report(cfg: &ExperimentConfig, force: bool, sweep: Option<Vec<f64>>) -> Result<(), Failure> {
    let Some(levels) = sweep else {
        let path = cfg.output.directory.join("summary.json");
        let text = std::fs::read_to_string(&path).map_err(|e| io(&path, e))?;
        let doc: SummaryDoc = serde_json::from_str(&text).map_err(|e| io(&path, e))?;
        let s = &doc.summary;
        println!("run from fibertwin {} ({} iterations)", doc.version, s.iterations);
        println!("beta2_hat  {:>10.4} ps²/km    rel err {:.4}", s.beta2_hat, s.rel_err_beta2);
        println!("gamma_hat  {:>10.4} 1/(W·km)  rel err {:.4}", s.gamma_hat, s.rel_err_gamma);
        println!("final l_io {:>10.3e}", s.final_l_io);
        for (i, (b, g)) in s.profile_beta2.iter().zip(&s.profile_gamma).enumerate() {
            println!("segment {:>3}: beta2 {b:>9.3}  gamma {g:>7.4}", i + 1);
        }
        return Ok(());
    };
    let out = OutDir::new(cfg, force)?;
    let data = dataset(cfg)?;
    let mut rows = Vec::new();
    for snr in levels {
        let mut tc = cfg.train_config();
        tc.snr_db = Some(snr);
        let h = train_with(&data, &tc, Exec::default())?;
        println!(
            "sweep {snr:>5.1} dB: rel err beta2 {:.4}, gamma {:.4}",
            h.estimates.rel_err_beta2, h.estimates.rel_err_gamma
        );
        rows.push(SweepRow {
            snr_db: snr,
            rel_err_beta2: h.estimates.rel_err_beta2,
            rel_err_gamma: h.estimates.rel_err_gamma,
            final_l_io: h.final_l_io,
        });
    }
    let mut sorted: Vec<&SweepRow> = rows.iter().collect();
    sorted.sort_by(|a, b| b.snr_db.total_cmp(&a.snr_db));
    let monotone = sorted
        .windows(2)
        .all(|w| w[0].rel_err_beta2 <= w[1].rel_err_beta2 && w[0].rel_err_gamma <= w[1].rel_err_gamma);
    println!("errors non-decreasing as SNR falls: {monotone}");
    out.write_json("sweep.json", cfg, serde_json::json!({ "rows": rows, "monotone": monotone }))?;
    Ok(())
}
