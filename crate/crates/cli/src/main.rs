mod config;
mod report;

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use config::{ConfigError, RunConfig};
use report::{emit, Format, MultRow, QRow};
use tamer::adlv::{enumerate_y, export_csv, export_json, Regime};
use tamer::chars::{q_alpha_set, QMode};
use tamer::gl2::Mat2;
use tamer::rep::{
    cuspidal_rows, minimal_characters, nonsplit_family, random_uj, small_level_rows, unipotent_family, varpi_units,
    CuspidalType, RepModel, TraceRow,
};
use tamer::{suite, Error};

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Command {
    Points,
    Trace,
    Mult,
    Qalpha,
    CuspidalCompare,
    SmallLevel,
    VerifySuite,
}

impl Command {
    fn name(self) -> String {
        self.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
    }
}

/// Exact verification of the torus Deligne-Lusztig varieties of GL2 and their representations.
#[derive(Parser, Debug)]
#[command(name = "tamer", version)]
struct Cli {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    command: Command,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

const PASS: u8 = 0;
const MISMATCH: u8 = 1;
const CONFIG: u8 = 2;
const BUDGET: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: --jobs: {e}");
            return ExitCode::from(CONFIG);
        }
    }
    let cfg = match &cli.config {
        Some(p) => match config::load(p) {
            Ok(c) => Some(c),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(CONFIG);
            }
        },
        None => None,
    };
    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        eprintln!("error: cannot create {}: {e}", cli.out.display());
        return ExitCode::from(CONFIG);
    }
    match run(&cli, cfg.as_ref()) {
        Ok(true) => ExitCode::from(PASS),
        Ok(false) => ExitCode::from(MISMATCH),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = if e.downcast_ref::<ConfigError>().is_some() {
                CONFIG
            } else if matches!(e.downcast_ref::<Error>(), Some(Error::Budget(_))) {
                BUDGET
            } else {
                MISMATCH
            };
            ExitCode::from(code)
        }
    }
}

fn need(cfg: Option<&RunConfig>) -> Result<&RunConfig> {
    cfg.ok_or_else(|| ConfigError::Invalid("--config is required for this command".into()).into())
}

fn check_budget(cfg: &RunConfig) -> Result<()> {
    let size = cfg.level.count_y();
    if size > cfg.raw.oracle_budget {
        return Err(Error::Budget(size).into());
    }
    Ok(())
}

fn model(cfg: &RunConfig) -> Result<RepModel> {
    check_budget(cfg)?;
    let ctx = cfg.ctx();
    let chis = minimal_characters(&ctx);
    let chi = chis.get(cfg.raw.chi_index).cloned().ok_or_else(|| {
        ConfigError::Invalid(format!("chi_index {} out of range ({} minimal characters)", cfg.raw.chi_index, chis.len()))
    })?;
    Ok(RepModel::build_xi_chi(cfg.level, ctx, chi)?)
}

fn require_deep(cfg: &RunConfig, cmd: Command) -> Result<()> {
    if cfg.level.regime != Regime::Deep {
        return Err(ConfigError::Invalid(format!("{} needs m = 2n - 1", cmd.name())).into());
    }
    Ok(())
}

fn finish(rows: &[TraceRow], out: &Path, name: &str, fmt: Format) -> Result<bool> {
    let path = emit(out, name, fmt, rows)?;
    let bad = rows.iter().filter(|r| !r.matched).count();
    println!("{}: {} rows, {bad} mismatches", path.display(), rows.len());
    Ok(bad == 0)
}

fn run(cli: &Cli, cfg: Option<&RunConfig>) -> Result<bool> {
    let name = cli.command.name();
    let (out, fmt) = (cli.out.as_path(), cli.format);
    match cli.command {
        Command::Points => {
            let cfg = need(cfg)?;
            check_budget(cfg)?;
            let pts = enumerate_y(&cfg.level);
            let path = report::path_for(out, &name, fmt);
            let body = match fmt {
                Format::Csv => export_csv(&pts, &cfg.level),
                Format::Json => serde_json::to_string_pretty(&export_json(&pts))? + "\n",
            };
            report::write(&path, body.as_bytes())?;
            println!("{}: {} points", path.display(), pts.len());
            Ok(pts.len() == cfg.level.count_y())
        }
        Command::Trace => {
            let cfg = need(cfg)?;
            let md = model(cfg)?;
            let rows = trace_rows(&md, cfg, cli.seed)?;
            finish(&rows, out, &name, fmt)
        }
        Command::Mult => {
            let cfg = need(cfg)?;
            require_deep(cfg, cli.command)?;
            let md = model(cfg)?;
            let rows: Vec<MultRow> = suite::theta_sweep(&md)?
                .into_iter()
                .enumerate()
                .map(|(i, (th, ue, pue, et, pet))| MultRow {
                    theta_id: format!("theta-{i}"),
                    theta_on_u: th.on_u,
                    ue_oracle: ue,
                    ue_predicted: pue,
                    etimes_oracle: et,
                    etimes_predicted: pet,
                    matched: ue == pue && et == pet,
                })
                .collect();
            let path = emit(out, &name, fmt, &rows)?;
            let bad = rows.iter().filter(|r| !r.matched).count();
            println!("{}: {} characters, {bad} mismatches", path.display(), rows.len());
            Ok(bad == 0)
        }
        Command::Qalpha => {
            let cfg = need(cfg)?;
            let (f, m) = (cfg.field, cfg.raw.m);
            let mut rows = Vec::new();
            let mut ok = true;
            for alpha in 0..(m + 1) / 2 {
                let cf = q_alpha_set(f, m, alpha, QMode::ClosedForm)?;
                let bf = q_alpha_set(f, m, alpha, QMode::BruteForce)?;
                let (cs, bs): (HashSet<_>, HashSet<_>) = (cf.iter().collect(), bf.iter().collect());
                ok &= cs == bs;
                rows.extend(cf.iter().map(|s| QRow { alpha, mode: "closed-form", element: s.to_string(), in_other_mode: bs.contains(s) }));
                rows.extend(bf.iter().map(|s| QRow { alpha, mode: "brute-force", element: s.to_string(), in_other_mode: cs.contains(s) }));
            }
            let path = emit(out, &name, fmt, &rows)?;
            println!("{}: {} rows, sets {}", path.display(), rows.len(), if ok { "agree" } else { "differ" });
            Ok(ok)
        }
        Command::CuspidalCompare => {
            let cfg = need(cfg)?;
            let md = model(cfg)?;
            let rows = match cfg.level.regime {
                Regime::Deep => {
                    let mut rows = Vec::new();
                    for (scale, perturb) in [(1, false), (2, true)] {
                        let ct = CuspidalType::deep(&md.ctx, &md.chi, scale, perturb, md.p.rp)?;
                        rows.extend(cuspidal_rows(&md, &ct)?);
                    }
                    rows
                }
                _ => {
                    let ct = CuspidalType::small(&md.ctx, &md.chi, md.p.n, md.p.rp)?;
                    cuspidal_rows(&md, &ct)?
                }
            };
            finish(&rows, out, &name, fmt)
        }
        Command::SmallLevel => {
            let cfg = need(cfg)?;
            if cfg.level.regime != Regime::Small {
                return Err(ConfigError::Invalid("small-level needs n >= m + 1".into()).into());
            }
            let md = model(cfg)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            let rows = small_level_rows(&md, cfg.raw.samples, &mut rng)?;
            finish(&rows, out, &name, fmt)
        }
        Command::VerifySuite => {
            let crits = suite::run_all(cli.seed);
            for c in &crits {
                println!("{}", c.line());
            }
            let passed = crits.iter().filter(|c| c.passed).count();
            println!("{passed}/{} criteria passed", crits.len());
            emit(out, &name, fmt, &crits)?;
            Ok(passed == crits.len())
        }
    }
}

/// Named families plus seeded U_J samples against the generic formula and the closed form, where each applies.
fn trace_rows(md: &RepModel, cfg: &RunConfig, seed: u64) -> Result<Vec<TraceRow>> {
    let f = md.f();
    let (m, n) = (md.p.m, md.p.n);
    let mut elems: Vec<(String, Mat2)> = Vec::new();
    if md.p.regime == Regime::Deep {
        elems.extend(unipotent_family(f, n).into_iter().enumerate().map(|(i, (_, g))| (format!("unipotent-{i}"), g)));
        elems.extend(nonsplit_family(f, m).into_iter().enumerate().map(|(i, (a, _, g))| (format!("nonsplit-a{a}-{i}"), g)));
    }
    elems.extend(varpi_units(&md.ctx).into_iter().enumerate().map(|(i, (_, g))| (format!("varpi-ue-{i}"), g)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    elems.extend((0..cfg.raw.samples).map(|i| (format!("uj-sample-{i}"), random_uj(f, n + 1, &mut rng))));
    let rows = elems
        .into_par_iter()
        .map(|(id, g)| {
            let mut out = Vec::new();
            for r in [md.generic_row(id.clone(), &g), md.trace_row(id, &g)] {
                match r {
                    Ok(r) => out.push(r),
                    Err(Error::Refused(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            Ok(out)
        })
        .collect::<tamer::Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}
